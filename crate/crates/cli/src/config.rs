//! Optional TOML run configuration. Keys mirror the command-line flags;
//! a flag given on the command line always wins.

use std::path::Path;

use citebirth::analytics::AgeBin;
use citebirth::cluster::Label;
use citebirth::{CorpusFormat, FitOptions, GroupSpec, ModelParams, PrepublicationPolicy, Transform};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub format: Option<CorpusFormat>,
    pub corpus_end: Option<f64>,
    pub horizon: Option<f64>,
    pub eps: Option<f64>,
    pub min_pts: Option<usize>,
    pub transform: Option<Transform>,
    pub train_grid: Option<Vec<f64>>,
    pub min_age: Option<f64>,
    pub positive: Option<Label>,
    pub prepublication: Option<PrepublicationPolicy>,
    pub fit: Option<FitOptions>,
    pub groups: Option<Vec<GroupSpec>>,
    pub age_bins: Option<Vec<AgeBin>>,
    pub r_intervals: Option<usize>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::usage(format!("invalid config {}: {e}", path.display())))
    }
}

/// Picks the flag value, then the config value, then the default.
pub fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_CORPUS_END: f64 = 2030.0;
pub const DEFAULT_HORIZON: f64 = 50.0;
pub const DEFAULT_R_INTERVALS: usize = 30;

fn group(name: &str, journal: &str, a: f64, b: f64, r: f64, count: usize) -> GroupSpec {
    GroupSpec {
        name: name.into(),
        params: ModelParams { a, b, r },
        count,
        journal: journal.into(),
        published: (1950.0, 1980.0),
    }
}

/// Three behaviour classes spread unevenly over two journals.
pub fn default_groups() -> Vec<GroupSpec> {
    vec![
        group("fast-hi", "PRA", 3.0, 30.0, 0.05, 200),
        group("fast-hi", "PRB", 3.0, 30.0, 0.05, 100),
        group("fast-flat", "PRA", 1e-8, 15.0, 0.5, 100),
        group("fast-flat", "PRB", 1e-8, 15.0, 0.5, 200),
        group("slow-late", "PRA", 4.0, 30.0, 0.01, 150),
        group("slow-late", "PRB", 4.0, 30.0, 0.01, 150),
    ]
}

pub fn parse_grid(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|e| format!("bad grid value {t:?}: {e}"))
        })
        .collect()
}
