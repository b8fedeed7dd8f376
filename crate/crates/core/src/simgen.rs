//! Synthetic signalized-intersection occupancy.
//!
//! Sensors are grouped four to an intersection. Each intersection runs a
//! fixed-time signal with cycle `P` and a random phase offset shared by all
//! days. Per sensor, occupancy is a two-state chain gated by the signal:
//! queues form during red, so occupied runs start more often the longer red
//! has lasted and last about `platoon_len` seconds. Green discharges the
//! queue quickly and sees only sparse arrivals. Independent bit flips are
//! applied last.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::SensorPanel;
use crate::{Error, Result};

const SECONDS_PER_DAY: i64 = 86_400;
/// Every simulated day starts at 07:00.
const DAY_START: i64 = 7 * 3600;
const SENSORS_PER_INTERSECTION: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimSpec {
    pub sensors: usize,
    /// Number of day panels, present day included.
    pub days: usize,
    pub seconds_per_day: usize,
    pub period: u64,
    pub green_fraction: f64,
    pub arrival_rate: f64,
    pub platoon_len: f64,
    pub noise_flip: f64,
    pub seed: u64,
}

impl Default for SimSpec {
    fn default() -> Self {
        Self {
            sensors: 8,
            days: 5,
            seconds_per_day: 1200,
            period: 90,
            green_fraction: 0.45,
            arrival_rate: 0.12,
            platoon_len: 6.0,
            noise_flip: 0.02,
            seed: 0,
        }
    }
}

impl SimSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::spec("simulation spec", msg));
        if self.sensors == 0 || self.days == 0 || self.seconds_per_day == 0 {
            return bad("sensors, days and seconds_per_day must be >= 1".into());
        }
        if self.period == 0 || self.period > self.seconds_per_day as u64 {
            return bad(format!(
                "period must lie in [1, seconds_per_day], got {}",
                self.period
            ));
        }
        if !(self.green_fraction > 0.0 && self.green_fraction < 1.0) {
            return bad(format!("green_fraction must lie in (0, 1), got {}", self.green_fraction));
        }
        if !(0.0..1.0).contains(&self.arrival_rate) {
            return bad(format!("arrival_rate must lie in [0, 1), got {}", self.arrival_rate));
        }
        if !(self.platoon_len >= 1.0 && self.platoon_len.is_finite()) {
            return bad(format!("platoon_len must be >= 1, got {}", self.platoon_len));
        }
        if !(0.0..=1.0).contains(&self.noise_flip) {
            return bad(format!("noise_flip must lie in [0, 1], got {}", self.noise_flip));
        }
        Ok(())
    }

    /// Seconds of red at the start of every cycle.
    pub fn red_len(&self) -> u64 {
        ((1.0 - self.green_fraction) * self.period as f64).round() as u64
    }

    /// Absolute start time of day `d` (1 = present, larger = older).
    pub fn start_time(&self, day: usize) -> i64 {
        (self.days - day) as i64 * SECONDS_PER_DAY + DAY_START
    }
}

fn intersection_offsets(spec: &SimSpec) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let groups = spec.sensors.div_ceil(SENSORS_PER_INTERSECTION);
    (0..groups).map(|_| rng.random_range(0..spec.period)).collect()
}

fn simulate_day(spec: &SimSpec, offsets: &[u64], day: usize) -> Array2<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(day as u64);
    let red = spec.red_len();
    let start = spec.start_time(day).rem_euclid(SECONDS_PER_DAY) as u64;
    let leave_red = 1.0 / spec.platoon_len;
    let leave_green = leave_red.max(0.5);
    let mut values = Array2::<u8>::zeros((spec.sensors, spec.seconds_per_day));
    for s in 0..spec.sensors {
        let offset = offsets[s / SENSORS_PER_INTERSECTION];
        let mut occupied = false;
        for t in 0..spec.seconds_per_day {
            let phase = (start + t as u64 + offset) % spec.period;
            let is_red = phase < red;
            let p = match (occupied, is_red) {
                (false, true) => spec.arrival_rate * (0.5 + phase as f64 / red as f64),
                (false, false) => spec.arrival_rate * 0.15,
                (true, true) => leave_red,
                (true, false) => leave_green,
            };
            if rng.random::<f64>() < p.min(1.0) {
                occupied = !occupied;
            }
            values[[s, t]] = u8::from(occupied);
        }
    }
    if spec.noise_flip > 0.0 {
        for v in values.iter_mut() {
            if rng.random::<f64>() < spec.noise_flip {
                *v ^= 1;
            }
        }
    }
    values
}

/// One panel per day, present day (`day_id = 1`) first.
pub fn simulate(spec: &SimSpec) -> Result<Vec<SensorPanel>> {
    spec.validate()?;
    let offsets = intersection_offsets(spec);
    let ids: Vec<String> = (1..=spec.sensors).map(|i| format!("det{i:02}")).collect();
    (1..=spec.days)
        .map(|day| {
            SensorPanel::new(
                ids.clone(),
                simulate_day(spec, &offsets, day),
                spec.start_time(day),
                day as u32,
            )
        })
        .collect()
}
