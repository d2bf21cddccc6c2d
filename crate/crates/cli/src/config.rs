//! Experiment configs: JSON objects in the same dialect as pmf files.
//!
//! File paths inside a config are resolved against the config's directory
//! and must exist when the config is loaded.

use std::path::{Path, PathBuf};

use coordgen::dist::io::read_pmf;
use coordgen::dist::JointPmf;
use coordgen::regions::Budget;
use coordgen::softcover::Caps;
use serde::de::DeserializeOwned;
use serde::Deserialize;

use crate::error::{CliError, CliResult};

/// Settings every command accepts from both the config and the flags.
#[derive(Clone, Debug, Default)]
pub struct Common {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
    pub timing: bool,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InfoConfig {
    pub pmf: PathBuf,
    /// `[X1, X2, Y1, Y2]`.
    pub demand: Option<Vec<String>>,
    /// Chains `A,B|C|D`.
    #[serde(default)]
    pub markov: Vec<String>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub timing: bool,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SoftcoverConfig {
    pub pmf: PathBuf,
    pub layers: Vec<String>,
    pub v_vars: Vec<String>,
    #[serde(default)]
    pub x_vars: Vec<String>,
    /// Rate vectors, one entry per layer.
    pub rates: Vec<Vec<f64>>,
    pub n: Vec<usize>,
    pub replicates: usize,
    pub caps: Option<Caps>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub timing: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Exchange,
    Softcover,
    Concat,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunMode {
    #[default]
    Auto,
    Exact,
    Empirical,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    /// Fraction of blocks with a wrong reconstruction.
    Error,
    /// TV of the induced block distribution to the i.i.d. target.
    Tv,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub pmf: PathBuf,
    pub scheme: Scheme,
    pub n: Vec<usize>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub mode: RunMode,
    pub metric: Option<Metric>,
    pub x1: Option<String>,
    pub x2: Option<String>,
    pub exchange_rates: Option<[f64; 2]>,
    #[serde(default)]
    pub layers: Vec<String>,
    #[serde(default)]
    pub y1: Vec<String>,
    #[serde(default)]
    pub y2: Vec<String>,
    #[serde(default)]
    pub x_vars: Vec<String>,
    pub node_x: Option<[Vec<String>; 2]>,
    #[serde(default)]
    pub rates: Vec<f64>,
    #[serde(default)]
    pub force: bool,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub timing: bool,
}

fn default_trials() -> usize {
    1000
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionConfig {
    pub pmf: PathBuf,
    /// `[X1, X2, Y1, Y2]`; the first four variables when absent.
    pub demand: Option<Vec<String>>,
    /// `R1`, `R2` (with `r`), `R2(r)`, `R3`, `inner` or `wyner`.
    pub region: String,
    pub r: Option<usize>,
    /// Auxiliary cardinalities; the caps when absent.
    pub cards: Option<Vec<usize>>,
    /// `(w12, w21)` directions for `R2`/`R3`.
    pub weights: Option<Vec<[f64; 2]>>,
    /// Rate pairs to test for membership.
    #[serde(default)]
    pub points: Vec<[f64; 2]>,
    #[serde(default)]
    pub budget: Budget,
    pub directions: Option<usize>,
    pub resolution: Option<u32>,
    pub grid_cap: Option<u64>,
    pub tolerance: Option<f64>,
    /// Certificate file; next to `out` when absent.
    pub certificates: Option<PathBuf>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub timing: bool,
}

/// Reads a config and resolves its `pmf` path.
pub fn load<T: DeserializeOwned + ConfigFile>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let mut cfg: T =
        serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let pmf = resolve(dir, cfg.pmf_path());
    if !pmf.is_file() {
        return Err(CliError::Data(format!(
            "{}: field `pmf`: {} does not exist",
            path.display(),
            pmf.display()
        )));
    }
    *cfg.pmf_path_mut() = pmf;
    Ok(cfg)
}

fn resolve(dir: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        dir.join(p)
    }
}

pub fn read(path: &Path) -> CliResult<JointPmf> {
    Ok(read_pmf(path)?)
}

pub trait ConfigFile {
    fn pmf_path(&self) -> &Path;
    fn pmf_path_mut(&mut self) -> &mut PathBuf;
    fn common(&self) -> Common;
}

macro_rules! config_file {
    ($($t:ty),*) => {$(
        impl ConfigFile for $t {
            fn common(&self) -> Common {
                Common {
                    seed: self.seed,
                    workers: self.workers,
                    out: self.out.clone(),
                    timing: self.timing,
                }
            }
            fn pmf_path(&self) -> &Path {
                &self.pmf
            }
            fn pmf_path_mut(&mut self) -> &mut PathBuf {
                &mut self.pmf
            }
        }
    )*};
}

config_file!(InfoConfig, SoftcoverConfig, SimulateConfig, RegionConfig);
