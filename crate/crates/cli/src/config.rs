//! Optional TOML defaults, one table per subcommand. Keys match the flag
//! names with underscores instead of dashes; flags always win over the file.
//! Unknown keys are rejected so typos fail loudly.

use std::fs;
use std::path::Path;

use serde::Deserialize;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub spectral: Option<SpectralSection>,
    pub sample: Option<SampleSection>,
    pub solution: Option<SolutionSection>,
    pub verify: Option<VerifySection>,
    pub disintegrate: Option<DisintegrateSection>,
    pub quicksort: Option<QuicksortSection>,
    pub suite: Option<SuiteSection>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectralSection {
    pub model: Option<String>,
    pub p: Option<f64>,
    pub m0: Option<f64>,
    pub c_shift: Option<f64>,
    pub keep_prob: Option<f64>,
    pub theta_max: Option<f64>,
    pub grid_step: Option<f64>,
    pub mc_budget: Option<u64>,
    pub force_mc: Option<bool>,
    pub out: Option<String>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleSection {
    pub model: Option<String>,
    pub p: Option<f64>,
    pub m0: Option<f64>,
    pub c_shift: Option<f64>,
    pub keep_prob: Option<f64>,
    pub kind: Option<String>,
    pub depth: Option<usize>,
    pub batch: Option<usize>,
    pub out: Option<String>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolutionSection {
    pub model: Option<String>,
    pub p: Option<f64>,
    pub m0: Option<f64>,
    pub c_shift: Option<f64>,
    pub keep_prob: Option<f64>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub mu: Option<f64>,
    pub sigma: Option<f64>,
    pub with_toll: Option<bool>,
    pub depth: Option<usize>,
    pub batch: Option<usize>,
    pub out: Option<String>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySection {
    pub model: Option<String>,
    pub p: Option<f64>,
    pub m0: Option<f64>,
    pub c_shift: Option<f64>,
    pub keep_prob: Option<f64>,
    pub candidate: Option<String>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub mu: Option<f64>,
    pub sigma: Option<f64>,
    pub with_toll: Option<bool>,
    pub depth: Option<usize>,
    pub batch: Option<usize>,
    pub level: Option<f64>,
    pub n_perm: Option<usize>,
    pub statistic: Option<String>,
    pub t_grid: Option<Vec<f64>>,
    pub out: Option<String>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisintegrateSection {
    pub model: Option<String>,
    pub p: Option<f64>,
    pub m0: Option<f64>,
    pub c_shift: Option<f64>,
    pub keep_prob: Option<f64>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub mu: Option<f64>,
    pub sigma: Option<f64>,
    pub with_toll: Option<bool>,
    pub cf: Option<String>,
    pub s_max: Option<f64>,
    pub grid: Option<usize>,
    pub pool_depth: Option<usize>,
    pub pool_batch: Option<usize>,
    pub max_depth: Option<usize>,
    pub batch: Option<usize>,
    pub ts: Option<Vec<f64>>,
    pub tol: Option<f64>,
    pub out: Option<String>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuicksortSection {
    pub n: Option<usize>,
    pub reps: Option<usize>,
    pub mu: Option<f64>,
    pub sigma: Option<f64>,
    pub pool_depth: Option<usize>,
    pub pool_batch: Option<usize>,
    pub level: Option<f64>,
    pub n_perm: Option<usize>,
    pub out: Option<String>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteSection {
    pub out: Option<String>,
}

pub fn load(path: Option<&Path>) -> Result<FileConfig, String> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    toml::from_str(&text).map_err(|e| format!("bad config {}: {e}", path.display()))
}
