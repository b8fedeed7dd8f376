//! Run configuration: defaults, the `key = value` file format and flag
//! overrides.
//!
//! Keys are spelled like the command-line flags (`gamma-p`, `bcd-iters`).
//! Underscores are accepted in place of hyphens.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::Args;
use mcforecast::boost::{BoostSpec, InitWeights};
use mcforecast::data::LagSpec;
use mcforecast::kernel::{KernelSpec, KernelVariant};
use mcforecast::simgen::SimSpec;
use mcforecast::solver::{SolverSpec, DEFAULT_TOLERANCE};
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub out: PathBuf,

    pub lag: usize,
    pub horizon: usize,
    pub train_len: usize,
    pub test_len: usize,

    pub kernel: KernelVariant,
    /// `None` means `1 / (n L)`.
    pub gamma: Option<f64>,
    pub gamma_p: f64,
    pub period: u64,

    pub rank: usize,
    pub mu: f64,
    pub bcd_iters: usize,
    pub tolerance: f64,
    pub init_scale: f64,
    pub seed: u64,

    pub days: usize,
    pub boost_rounds: usize,
    pub eps_clamp: f64,
    pub init_weights: InitWeights,

    pub sensors: usize,
    pub seconds_per_day: usize,
    pub green_fraction: f64,
    pub arrival_rate: f64,
    pub platoon_len: f64,
    pub noise_flip: f64,

    pub m1_samples: usize,
    pub ridge_mu: f64,
    pub lags: Vec<usize>,
    pub horizons: Vec<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let sim = SimSpec::default();
        Self {
            data: None,
            model: None,
            out: PathBuf::from("."),
            lag: 30,
            horizon: 10,
            train_len: 600,
            test_len: 120,
            kernel: KernelVariant::Rbfp,
            gamma: None,
            gamma_p: 0.0,
            period: 90,
            rank: 30,
            mu: 0.1,
            bcd_iters: 50,
            tolerance: DEFAULT_TOLERANCE,
            init_scale: 0.1,
            seed: 0,
            days: 5,
            boost_rounds: 5,
            eps_clamp: 1e-6,
            init_weights: InitWeights::Uniform,
            sensors: sim.sensors,
            seconds_per_day: sim.seconds_per_day,
            green_fraction: sim.green_fraction,
            arrival_rate: sim.arrival_rate,
            platoon_len: sim.platoon_len,
            noise_flip: sim.noise_flip,
            m1_samples: 32,
            ridge_mu: 1.0,
            lags: vec![10, 30, 60, 120],
            horizons: vec![1, 10, 60, 120],
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| anyhow!("invalid value `{value}` for `{key}`: {e}"))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<usize>> {
    let items: Result<Vec<usize>> = value
        .split(',')
        .map(|v| parse(key, v.trim()))
        .collect();
    let items = items?;
    if items.is_empty() {
        bail!("`{key}` needs at least one value");
    }
    Ok(items)
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().replace('_', "-");
        let value = value.trim();
        let k = key.as_str();
        match k {
            "data" => self.data = Some(PathBuf::from(value)),
            "model" => self.model = Some(PathBuf::from(value)),
            "out" => self.out = PathBuf::from(value),
            "lag" => self.lag = parse(k, value)?,
            "horizon" => self.horizon = parse(k, value)?,
            "train-len" => self.train_len = parse(k, value)?,
            "test-len" => self.test_len = parse(k, value)?,
            "kernel" => {
                self.kernel = match value {
                    "rbfp" => KernelVariant::Rbfp,
                    "linear" => KernelVariant::Linear,
                    _ => bail!("invalid value `{value}` for `kernel`: expected rbfp or linear"),
                }
            }
            "gamma" => {
                self.gamma = if value == "auto" {
                    None
                } else {
                    Some(parse(k, value)?)
                }
            }
            "gamma-p" => self.gamma_p = parse(k, value)?,
            "period" => self.period = parse(k, value)?,
            "rank" => self.rank = parse(k, value)?,
            "mu" => self.mu = parse(k, value)?,
            "bcd-iters" => self.bcd_iters = parse(k, value)?,
            "tolerance" => self.tolerance = parse(k, value)?,
            "init-scale" => self.init_scale = parse(k, value)?,
            "seed" => self.seed = parse(k, value)?,
            "days" => self.days = parse(k, value)?,
            "boost-rounds" => self.boost_rounds = parse(k, value)?,
            "eps-clamp" => self.eps_clamp = parse(k, value)?,
            "init-weights" => {
                self.init_weights = match value {
                    "uniform" => InitWeights::Uniform,
                    "recency" => InitWeights::Recency,
                    _ => bail!("invalid value `{value}` for `init-weights`: expected uniform or recency"),
                }
            }
            "sensors" => self.sensors = parse(k, value)?,
            "seconds-per-day" => self.seconds_per_day = parse(k, value)?,
            "green-fraction" => self.green_fraction = parse(k, value)?,
            "arrival-rate" => self.arrival_rate = parse(k, value)?,
            "platoon-len" => self.platoon_len = parse(k, value)?,
            "noise-flip" => self.noise_flip = parse(k, value)?,
            "m1-samples" => self.m1_samples = parse(k, value)?,
            "ridge-mu" => self.ridge_mu = parse(k, value)?,
            "lags" => self.lags = parse_list(k, value)?,
            "horizons" => self.horizons = parse_list(k, value)?,
            _ => bail!("unknown configuration key `{key}`"),
        }
        Ok(())
    }

    /// Apply a `key = value` document. Blank lines and `#` comments are
    /// ignored.
    pub fn apply_text(&mut self, text: &str, origin: &Path) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("{}:{}: expected `key = value`", origin.display(), i + 1))?;
            self.set(key, value)
                .with_context(|| format!("{}:{}", origin.display(), i + 1))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path).map_err(|e| mcforecast::Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        self.apply_text(&text, path)
    }

    pub fn resolve(flags: &Flags) -> Result<Self> {
        let mut cfg = Self::default();
        if let Some(path) = &flags.config {
            cfg.apply_file(path)?;
        }
        for (key, value) in flags.overrides() {
            cfg.set(key, &value)?;
        }
        Ok(cfg)
    }

    pub fn echo(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }

    pub fn lag_spec(&self) -> mcforecast::Result<LagSpec> {
        LagSpec::new(self.lag, self.horizon, self.train_len, self.test_len)
    }

    pub fn kernel_spec(&self, n_sensors: usize, lag: usize) -> mcforecast::Result<KernelSpec> {
        let spec = match self.kernel {
            KernelVariant::Linear => KernelSpec::linear(),
            KernelVariant::Rbfp => {
                let mut spec = KernelSpec::default_for(n_sensors, lag, self.period);
                if let Some(g) = self.gamma {
                    spec.gamma = g;
                }
                spec.gamma_p = self.gamma_p;
                spec
            }
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn solver_spec(&self) -> SolverSpec {
        SolverSpec {
            rank: self.rank,
            mu: self.mu,
            max_iters: self.bcd_iters,
            seed: self.seed,
            init_scale: self.init_scale,
            tolerance: self.tolerance,
        }
    }

    pub fn boost_spec(&self) -> BoostSpec {
        BoostSpec {
            rounds: self.boost_rounds,
            eps_clamp: self.eps_clamp,
            init_weights: self.init_weights,
        }
    }

    pub fn sim_spec(&self) -> SimSpec {
        SimSpec {
            sensors: self.sensors,
            days: self.days,
            seconds_per_day: self.seconds_per_day,
            period: self.period,
            green_fraction: self.green_fraction,
            arrival_rate: self.arrival_rate,
            platoon_len: self.platoon_len,
            noise_flip: self.noise_flip,
            seed: self.seed,
        }
    }

    pub fn require_data(&self) -> Result<&Path> {
        self.data
            .as_deref()
            .ok_or_else(|| anyhow!("no input data: pass --data DIR or set `data` in the config"))
    }

    pub fn require_model(&self) -> Result<&Path> {
        self.model
            .as_deref()
            .ok_or_else(|| anyhow!("no model file: pass --model PATH or set `model` in the config"))
    }
}

/// Flags shared by every subcommand. Each one overrides the config key of
/// the same name.
#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// Configuration file (`key = value` lines, `#` comments)
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Directory of day panels (`day_001.csv` is the present day)
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Model file written by `fit`
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub lag: Option<usize>,
    #[arg(long)]
    pub horizon: Option<usize>,
    #[arg(long)]
    pub train_len: Option<usize>,
    #[arg(long)]
    pub test_len: Option<usize>,
    /// rbfp or linear
    #[arg(long)]
    pub kernel: Option<String>,
    /// RBF width, or `auto` for 1/(nL)
    #[arg(long)]
    pub gamma: Option<String>,
    #[arg(long)]
    pub gamma_p: Option<f64>,
    /// Signal cycle length in seconds
    #[arg(long)]
    pub period: Option<u64>,
    #[arg(long)]
    pub rank: Option<usize>,
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub bcd_iters: Option<usize>,
    #[arg(long)]
    pub tolerance: Option<f64>,
    #[arg(long)]
    pub init_scale: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of day panels, present day included
    #[arg(long)]
    pub days: Option<usize>,
    #[arg(long)]
    pub boost_rounds: Option<usize>,
    #[arg(long)]
    pub eps_clamp: Option<f64>,
    /// uniform or recency
    #[arg(long)]
    pub init_weights: Option<String>,
    #[arg(long)]
    pub sensors: Option<usize>,
    #[arg(long)]
    pub seconds_per_day: Option<usize>,
    #[arg(long)]
    pub green_fraction: Option<f64>,
    #[arg(long)]
    pub arrival_rate: Option<f64>,
    #[arg(long)]
    pub platoon_len: Option<f64>,
    #[arg(long)]
    pub noise_flip: Option<f64>,
    #[arg(long)]
    pub m1_samples: Option<usize>,
    #[arg(long)]
    pub ridge_mu: Option<f64>,
    /// Comma-separated lag grid for `sweep`
    #[arg(long)]
    pub lags: Option<String>,
    /// Comma-separated horizon grid for `sweep`
    #[arg(long)]
    pub horizons: Option<String>,
}

impl Flags {
    fn overrides(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        macro_rules! push {
            ($($field:ident => $key:literal),* $(,)?) => {
                $(if let Some(v) = &self.$field {
                    out.push(($key, v.to_string()));
                })*
            };
        }
        push!(
            lag => "lag", horizon => "horizon", train_len => "train-len", test_len => "test-len",
            kernel => "kernel", gamma => "gamma", gamma_p => "gamma-p", period => "period",
            rank => "rank", mu => "mu", bcd_iters => "bcd-iters", tolerance => "tolerance",
            init_scale => "init-scale", seed => "seed", days => "days",
            boost_rounds => "boost-rounds", eps_clamp => "eps-clamp", init_weights => "init-weights",
            sensors => "sensors", seconds_per_day => "seconds-per-day",
            green_fraction => "green-fraction", arrival_rate => "arrival-rate",
            platoon_len => "platoon-len", noise_flip => "noise-flip", m1_samples => "m1-samples",
            ridge_mu => "ridge-mu", lags => "lags", horizons => "horizons",
        );
        for (field, key) in [(&self.out, "out"), (&self.data, "data"), (&self.model, "model")] {
            if let Some(p) = field {
                out.push((key, p.display().to_string()));
            }
        }
        out
    }
}
