//! Sensor panels, CSV ingestion and lag/horizon windowing.
//!
//! A panel is one day of per-second detector states, `n` sensors by `T`
//! seconds. Windowing stacks the last `L` states into one input column
//! (oldest first) and pairs it with the state `H` seconds after the window
//! ends. Training columns start with the first full window; the test block
//! follows the training block contiguously.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{s, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

const SECONDS_PER_DAY: i64 = 86_400;

/// One day of binary detector states (rows = sensors, columns = seconds).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SensorPanel {
    sensor_ids: Vec<String>,
    values: Array2<u8>,
    start_time: i64,
    day_id: u32,
}

impl SensorPanel {
    pub fn new(
        sensor_ids: Vec<String>,
        values: Array2<u8>,
        start_time: i64,
        day_id: u32,
    ) -> Result<Self> {
        if sensor_ids.is_empty() || values.ncols() == 0 {
            return Err(Error::spec("panel", "need at least one sensor and one time step"));
        }
        if sensor_ids.len() != values.nrows() {
            return Err(Error::Dimension(format!(
                "{} sensor ids for {} value rows",
                sensor_ids.len(),
                values.nrows()
            )));
        }
        let mut seen = HashSet::new();
        for id in &sensor_ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::spec("panel", format!("duplicate sensor id `{id}`")));
            }
        }
        if let Some(v) = values.iter().find(|&&v| v > 1) {
            return Err(Error::spec("panel", format!("non-binary value {v}")));
        }
        Ok(Self {
            sensor_ids,
            values,
            start_time,
            day_id,
        })
    }

    pub fn sensor_ids(&self) -> &[String] {
        &self.sensor_ids
    }

    pub fn values(&self) -> &Array2<u8> {
        &self.values
    }

    pub fn start_time(&self) -> i64 {
        self.start_time
    }

    pub fn day_id(&self) -> u32 {
        self.day_id
    }

    pub fn with_day_id(mut self, day_id: u32) -> Self {
        self.day_id = day_id;
        self
    }

    pub fn n_sensors(&self) -> usize {
        self.values.nrows()
    }

    pub fn len(&self) -> usize {
        self.values.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn column(&self, t: usize) -> ArrayView1<'_, u8> {
        self.values.column(t)
    }
}

/// Read a panel from the `time,<id>,...` CSV layout. The panel gets
/// `day_id = 1`; callers assembling an ensemble relabel days.
pub fn ingest_csv(path: impl AsRef<Path>) -> Result<SensorPanel> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_csv(BufReader::new(file), path)
}

pub fn parse_csv(reader: impl BufRead, path: &Path) -> Result<SensorPanel> {
    let perr = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };

    let mut lines = reader.lines().enumerate();
    let header = match lines.next() {
        Some((_, line)) => line.map_err(|e| Error::io(path, e))?,
        None => return Err(perr(1, "empty file".into())),
    };
    let mut cells = header.trim_end_matches('\r').split(',').map(str::trim);
    if cells.next() != Some("time") {
        return Err(perr(1, "header must start with `time`".into()));
    }
    let sensor_ids: Vec<String> = cells.map(str::to_string).collect();
    if sensor_ids.is_empty() {
        return Err(perr(1, "header names no sensors".into()));
    }
    let mut seen = HashSet::new();
    for id in &sensor_ids {
        if id.is_empty() {
            return Err(perr(1, "empty sensor id".into()));
        }
        if !seen.insert(id.as_str()) {
            return Err(perr(1, format!("duplicate sensor id `{id}`")));
        }
    }
    let n = sensor_ids.len();

    let mut flat: Vec<u8> = Vec::new();
    let mut start_time = None;
    let mut prev_time: Option<i64> = None;
    let mut steps = 0usize;
    for (idx, line) in lines {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let mut cells = line.split(',').map(str::trim);
        let t_cell = cells.next().unwrap_or("");
        let t: i64 = t_cell
            .parse()
            .map_err(|_| perr(lineno, format!("time `{t_cell}` is not an integer")))?;
        if let Some(p) = prev_time {
            if t != p + 1 {
                return Err(perr(
                    lineno,
                    format!("time {t} does not follow {p} with unit stride"),
                ));
            }
        } else {
            start_time = Some(t);
        }
        prev_time = Some(t);
        let before = flat.len();
        for cell in cells {
            let v = match cell {
                "0" => 0,
                "1" => 1,
                other => {
                    return Err(perr(lineno, format!("cell `{other}` is not 0 or 1")));
                }
            };
            flat.push(v);
        }
        let got = flat.len() - before;
        if got != n {
            return Err(perr(
                lineno,
                format!("ragged row: {got} sensor values, header has {n}"),
            ));
        }
        steps += 1;
    }
    let start_time = start_time.ok_or_else(|| perr(2, "no data rows".into()))?;

    // Rows of the file are time steps; the panel stores sensors as rows.
    let by_time = Array2::from_shape_vec((steps, n), flat)
        .map_err(|e| Error::Dimension(e.to_string()))?;
    SensorPanel::new(sensor_ids, by_time.reversed_axes().as_standard_layout().to_owned(), start_time, 1)
}

/// Write a panel in the canonical CSV layout (no spaces, LF endings).
pub fn export_csv(panel: &SensorPanel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_csv(panel, &mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_csv(panel: &SensorPanel, w: &mut impl Write) -> std::io::Result<()> {
    write_matrix_csv(
        w,
        &panel.sensor_ids,
        panel.start_time,
        panel.len(),
        |sensor, t| if panel.values[[sensor, t]] == 1 { "1".into() } else { "0".into() },
    )
}

/// Shared writer for the panel layout; `cell(sensor, step)` renders one value.
pub fn write_matrix_csv(
    w: &mut impl Write,
    sensor_ids: &[String],
    start_time: i64,
    steps: usize,
    cell: impl Fn(usize, usize) -> String,
) -> std::io::Result<()> {
    write!(w, "time")?;
    for id in sensor_ids {
        write!(w, ",{id}")?;
    }
    writeln!(w)?;
    for t in 0..steps {
        write!(w, "{}", start_time + t as i64)?;
        for s in 0..sensor_ids.len() {
            write!(w, ",{}", cell(s, t))?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Lag `L`, horizon `H`, and block lengths, all in one-second steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LagSpec {
    pub lag: usize,
    pub horizon: usize,
    pub train_len: usize,
    /// May be zero, in which case only training matrices are produced.
    pub test_len: usize,
}

impl LagSpec {
    pub fn new(lag: usize, horizon: usize, train_len: usize, test_len: usize) -> Result<Self> {
        let spec = Self {
            lag,
            horizon,
            train_len,
            test_len,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.lag == 0 {
            return Err(Error::spec("lag spec", "lag must be >= 1"));
        }
        if self.horizon == 0 {
            return Err(Error::spec("lag spec", "horizon must be >= 1"));
        }
        if self.train_len == 0 || self.train_len <= self.test_len {
            return Err(Error::spec(
                "lag spec",
                format!(
                    "need train_len > test_len, got {} and {}",
                    self.train_len, self.test_len
                ),
            ));
        }
        Ok(())
    }

    /// Shortest panel that holds every window: `L + T_tr + H + T_te - 1`.
    pub fn min_panel_len(&self) -> usize {
        self.lag + self.train_len + self.horizon + self.test_len - 1
    }
}

/// Training / testing matrices for one day.
#[derive(Debug, Clone, PartialEq)]
pub struct LaggedDataset {
    /// `nL x T_tr`, column `j` stacks `x(j) .. x(j + L - 1)` (oldest first).
    pub x_tr: Array2<f64>,
    /// `n x T_tr`, column `j` is `x(j + L - 1 + H)`.
    pub y_tr: Array2<f64>,
    pub x_te: Array2<f64>,
    /// Held-out truth for the test block, evaluation only.
    pub y_te_truth: Option<Array2<f64>>,
    /// Absolute time of the newest state in each input window.
    pub timestamps_tr: Vec<i64>,
    pub timestamps_te: Vec<i64>,
    pub lag_spec: LagSpec,
}

impl LaggedDataset {
    pub fn n_sensors(&self) -> usize {
        self.y_tr.nrows()
    }

    /// The newest state of each test window (rows `(L-1)n .. Ln` of `X_te`).
    pub fn last_test_state(&self) -> Array2<f64> {
        let n = self.n_sensors();
        let l = self.lag_spec.lag;
        self.x_te.slice(s![(l - 1) * n..l * n, ..]).to_owned()
    }
}

pub fn build_lagged(panel: &SensorPanel, spec: &LagSpec) -> Result<LaggedDataset> {
    spec.validate()?;
    let required = spec.min_panel_len();
    if panel.len() < required {
        return Err(Error::InsufficientLength {
            required,
            actual: panel.len(),
        });
    }
    let n = panel.n_sensors();
    let (l, h) = (spec.lag, spec.horizon);

    let window = |first_end: usize, count: usize| {
        let mut x = Array2::<f64>::zeros((n * l, count));
        let mut y = Array2::<f64>::zeros((n, count));
        let mut stamps = Vec::with_capacity(count);
        for j in 0..count {
            let end = first_end + j;
            for lag in 0..l {
                let src = end + 1 - l + lag;
                for s in 0..n {
                    x[[lag * n + s, j]] = f64::from(panel.values[[s, src]]);
                }
            }
            for s in 0..n {
                y[[s, j]] = f64::from(panel.values[[s, end + h]]);
            }
            stamps.push(panel.start_time + end as i64);
        }
        (x, y, stamps)
    };

    let (x_tr, y_tr, timestamps_tr) = window(l - 1, spec.train_len);
    let (x_te, y_te, timestamps_te) = window(l - 1 + spec.train_len, spec.test_len);
    Ok(LaggedDataset {
        x_tr,
        y_tr,
        x_te,
        y_te_truth: Some(y_te),
        timestamps_tr,
        timestamps_te,
        lag_spec: *spec,
    })
}

/// Training blocks for every day in the ensemble plus the present day's test
/// block.
///
/// `days[0]` is the present day (`d = 1`), later entries are older. The
/// augmented training matrices put the oldest day first, i.e. blocks are
/// ordered `d = |D|, ..., 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleDataset {
    pub days: Vec<LaggedDataset>,
}

impl EnsembleDataset {
    pub fn present(&self) -> &LaggedDataset {
        &self.days[0]
    }

    pub fn n_days(&self) -> usize {
        self.days.len()
    }

    pub fn n_sensors(&self) -> usize {
        self.present().n_sensors()
    }

    pub fn lag_spec(&self) -> &LagSpec {
        &self.present().lag_spec
    }

    pub fn train_len(&self) -> usize {
        self.lag_spec().train_len
    }

    pub fn test_len(&self) -> usize {
        self.lag_spec().test_len
    }

    /// `|D| * T_tr`.
    pub fn total_train(&self) -> usize {
        self.n_days() * self.train_len()
    }

    /// Augmented column index of step `t` (0-based) on day `d` (1-based).
    pub fn column_index(&self, t: usize, d: usize) -> usize {
        (self.n_days() - d) * self.train_len() + t
    }

    /// Day (1-based) owning an augmented column.
    pub fn day_of_column(&self, col: usize) -> usize {
        self.n_days() - col / self.train_len()
    }

    fn oldest_first(&self) -> impl Iterator<Item = &LaggedDataset> {
        self.days.iter().rev()
    }

    fn concat(&self, pick: impl Fn(&LaggedDataset) -> &Array2<f64>) -> Array2<f64> {
        let views: Vec<_> = self.oldest_first().map(|d| pick(d).view()).collect();
        ndarray::concatenate(ndarray::Axis(1), &views).expect("days share row counts")
    }

    pub fn augmented_y_tr(&self) -> Array2<f64> {
        self.concat(|d| &d.y_tr)
    }

    pub fn augmented_x_tr(&self) -> Array2<f64> {
        self.concat(|d| &d.x_tr)
    }

    pub fn augmented_timestamps_tr(&self) -> Vec<i64> {
        self.oldest_first()
            .flat_map(|d| d.timestamps_tr.iter().copied())
            .collect()
    }

    pub fn x_te(&self) -> &Array2<f64> {
        &self.present().x_te
    }

    pub fn timestamps_te(&self) -> &[i64] {
        &self.present().timestamps_te
    }

    pub fn y_te_truth(&self) -> Option<&Array2<f64>> {
        self.present().y_te_truth.as_ref()
    }
}

/// Build an ensemble from day panels. The panel with the smallest `day_id`
/// is the present day. All panels must share sensors and length and start at
/// the same time of day, so that every day's training block covers the same
/// clock interval.
pub fn build_ensemble(panels: &[SensorPanel], spec: &LagSpec) -> Result<EnsembleDataset> {
    if panels.is_empty() {
        return Err(Error::Ensemble("need at least one day".into()));
    }
    let mut ordered: Vec<&SensorPanel> = panels.iter().collect();
    ordered.sort_by_key(|p| p.day_id);
    for w in ordered.windows(2) {
        if w[0].day_id == w[1].day_id {
            return Err(Error::Ensemble(format!("duplicate day id {}", w[0].day_id)));
        }
    }
    let first = ordered[0];
    for p in &ordered[1..] {
        if p.sensor_ids != first.sensor_ids {
            return Err(Error::Ensemble(format!(
                "day {} has sensors {:?}, day {} has {:?}",
                p.day_id, p.sensor_ids, first.day_id, first.sensor_ids
            )));
        }
        if p.len() != first.len() {
            return Err(Error::Ensemble(format!(
                "day {} has {} steps, day {} has {}",
                p.day_id,
                p.len(),
                first.day_id,
                first.len()
            )));
        }
        if p.start_time.rem_euclid(SECONDS_PER_DAY) != first.start_time.rem_euclid(SECONDS_PER_DAY)
        {
            return Err(Error::Ensemble(format!(
                "day {} starts at a different time of day than day {}",
                p.day_id, first.day_id
            )));
        }
    }
    let days = ordered
        .into_iter()
        .map(|p| build_lagged(p, spec))
        .collect::<Result<Vec<_>>>()?;
    Ok(EnsembleDataset { days })
}
