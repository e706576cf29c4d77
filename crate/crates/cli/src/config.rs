//! Run configuration: one TOML file, optionally patched by `key=value`
//! overrides, validated before anything runs.

use std::path::{Path, PathBuf};

use fudge_core::fudge::FudgeConfig;
use fudge_core::funcbasis::BasisSpec;
use fudge_core::jfgl::{InnerConfig, JfglConfig};
use fudge_core::linalg;
use fudge_core::simgen::{Model, SimConfig};
use fudge_core::tuneval::{Method, SweepOptions};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub basis: BasisConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    pub simulate: Option<SimulateConfig>,
    pub data: Option<DataConfig>,
    pub estimate: Option<EstimateConfig>,
    pub roc: Option<RocConfig>,
    pub tune: Option<TuneConfig>,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Bspline,
    Fourier,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BasisConfig {
    pub family: Family,
    /// Spline degree; ignored for Fourier.
    pub degree: usize,
    /// Number of basis functions `L`.
    pub size: usize,
    /// Number of principal components `M`.
    pub components: usize,
    /// Subtract per-node sample means before FPCA.
    pub center: bool,
}

impl Default for BasisConfig {
    fn default() -> Self {
        Self {
            family: Family::Bspline,
            degree: 3,
            size: 15,
            components: 5,
            center: false,
        }
    }
}

impl BasisConfig {
    pub fn spec(&self) -> BasisSpec {
        match self.family {
            Family::Bspline => BasisSpec::Bspline { degree: self.degree },
            Family::Fourier => BasisSpec::Fourier,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub max_iters: usize,
    pub tol: f64,
    /// Edge threshold on block norms.
    pub epsilon: f64,
    /// Sparsity penalty of the joint graphical lasso methods, per sample.
    pub lambda1: f64,
    pub rho: f64,
    pub admm_max_iters: usize,
    pub admm_tol: f64,
    pub inner_max_iters: usize,
    pub inner_tol: f64,
    /// Time points of the pointwise baseline.
    pub num_times: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let f = FudgeConfig::default();
        let j = JfglConfig::default();
        let s = SweepOptions::default();
        Self {
            max_iters: f.max_iters,
            tol: f.tol,
            epsilon: s.epsilon,
            lambda1: s.jfgl.lambda1,
            rho: j.rho,
            admm_max_iters: j.max_iters,
            admm_tol: j.tol,
            inner_max_iters: j.inner.max_iters,
            inner_tol: j.inner.tol,
            num_times: s.num_times,
        }
    }
}

impl SolverConfig {
    pub fn fudge(&self) -> FudgeConfig {
        FudgeConfig {
            max_iters: self.max_iters,
            tol: self.tol,
            epsilon: self.epsilon,
            ..FudgeConfig::default()
        }
    }

    /// Joint graphical lasso settings with `lambda1` and both ADMM step
    /// parameters multiplied by `scale`, the mean sample size.
    pub fn jfgl(&self, scale: f64) -> JfglConfig {
        JfglConfig {
            lambda1: self.lambda1 * scale,
            rho: self.rho * scale,
            max_iters: self.admm_max_iters,
            tol: self.admm_tol,
            inner: InnerConfig {
                rho: self.rho * scale,
                max_iters: self.inner_max_iters,
                tol: self.inner_tol,
            },
            ..JfglConfig::default()
        }
    }

    pub fn sweep(&self, scale: f64) -> SweepOptions {
        SweepOptions {
            fudge: self.fudge(),
            jfgl: self.jfgl(scale),
            num_times: self.num_times,
            epsilon: self.epsilon,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub model: Model,
    pub p: usize,
    #[serde(default = "d_m")]
    pub m: usize,
    #[serde(default = "d_n")]
    pub n: usize,
    #[serde(default = "d_t")]
    pub t: usize,
    #[serde(default = "d_sd")]
    pub noise_sd: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "d_reps")]
    pub replicates: u64,
}

fn d_m() -> usize {
    5
}
fn d_n() -> usize {
    100
}
fn d_t() -> usize {
    200
}
fn d_sd() -> f64 {
    0.5
}
fn d_reps() -> u64 {
    1
}

impl SimulateConfig {
    pub fn sim(&self) -> SimConfig {
        SimConfig {
            model: self.model,
            p: self.p,
            m: self.m,
            n: self.n,
            t: self.t,
            noise_sd: self.noise_sd,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub x: PathBuf,
    pub y: PathBuf,
    /// Observation interval; defaults to the range of observed times.
    pub domain: Option<[f64; 2]>,
}

/// A penalty grid, either listed or log-spaced from `from` down to `to`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    Values(Vec<f64>),
    Log { from: f64, to: f64, count: usize },
}

impl Grid {
    pub fn values(&self) -> Vec<f64> {
        match self {
            Grid::Values(v) => v.clone(),
            Grid::Log { from, to, count } => linalg::log_grid_desc(*from, *to, *count),
        }
    }

    fn validate(&self, what: &str) -> CliResult<()> {
        let v = self.values();
        if v.is_empty() {
            return Err(CliError::Config(format!("{what} is empty")));
        }
        if v.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(CliError::Config(format!("{what} must hold finite values >= 0")));
        }
        if let Grid::Log { from, to, .. } = self {
            if !(*to > 0.0 && from >= to) {
                return Err(CliError::Config(format!("{what} needs from >= to > 0")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateConfig {
    #[serde(default = "d_method")]
    pub method: Method,
    /// Fixed penalty. For FuDGE and the pointwise baseline this is λ; for the
    /// joint graphical lasso methods it is the per-sample fusion penalty λ2.
    pub lambda: Option<f64>,
    /// Bisect the penalty until the edge count is within one of this.
    pub target_edges: Option<usize>,
    /// Same, as a fraction of the p(p-1)/2 possible edges.
    pub target_fraction: Option<f64>,
}

fn d_method() -> Method {
    Method::Fudge
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EstimateMode {
    Fixed(f64),
    Target(usize),
}

impl EstimateConfig {
    pub fn mode(&self, p: usize) -> CliResult<EstimateMode> {
        let possible = p * (p - 1) / 2;
        match (self.lambda, self.target_edges, self.target_fraction) {
            (Some(l), None, None) => Ok(EstimateMode::Fixed(l)),
            (None, Some(t), None) => Ok(EstimateMode::Target(t.min(possible))),
            (None, None, Some(f)) => Ok(EstimateMode::Target(((f * possible as f64).round() as usize).min(possible))),
            _ => Err(CliError::Config(
                "estimate needs exactly one of lambda, target_edges, target_fraction".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RocConfig {
    #[serde(default = "d_methods")]
    pub methods: Vec<Method>,
    /// Ratios of the zero-solution threshold, for FuDGE and the baseline.
    #[serde(default = "d_ratio_grid")]
    pub grid: Grid,
    /// Per-sample λ2 values for the joint graphical lasso methods.
    #[serde(default = "d_fusion_grid")]
    pub fusion_grid: Grid,
}

fn d_methods() -> Vec<Method> {
    vec![Method::Fudge, Method::Multiple]
}
fn d_ratio_grid() -> Grid {
    Grid::Log {
        from: 1.0,
        to: 1e-3,
        count: 30,
    }
}
fn d_fusion_grid() -> Grid {
    Grid::Log {
        from: 3.0,
        to: 0.01,
        count: 15,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuneConfig {
    /// Candidate basis sizes; defaults to `basis.size`.
    pub sizes: Option<Vec<usize>>,
    /// Candidate component counts; defaults to `basis.components`.
    pub components: Option<Vec<usize>>,
    #[serde(default = "d_folds")]
    pub folds: usize,
    #[serde(default)]
    pub seed: u64,
    /// Ratios of the zero-solution threshold for selective CV of λ.
    pub lambda_grid: Option<Grid>,
}

fn d_folds() -> usize {
    5
}

impl RunConfig {
    /// Parse TOML text, apply `key.path=value` overrides, and deserialize.
    pub fn parse(text: &str, overrides: &[String]) -> CliResult<Self> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| CliError::Config(e.message().to_string()))?;
        for item in overrides {
            apply_override(&mut table, item)?;
        }
        table
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(e.message().to_string()))
    }

    pub fn load(path: Option<&Path>, overrides: &[String]) -> CliResult<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("reading {}: {e}", p.display())))?,
            None => String::new(),
        };
        Self::parse(&text, overrides)
    }

    pub fn validate(&self) -> CliResult<()> {
        let b = &self.basis;
        if b.size == 0 || b.components == 0 {
            return Err(CliError::Config("basis.size and basis.components must be >= 1".into()));
        }
        if b.components > b.size {
            return Err(CliError::Config(format!(
                "basis.components = {} exceeds basis.size = {}",
                b.components, b.size
            )));
        }
        if b.family == Family::Bspline && b.size < b.degree + 1 {
            return Err(CliError::Config(format!(
                "a degree-{} spline basis needs size >= {}",
                b.degree,
                b.degree + 1
            )));
        }
        let s = &self.solver;
        if !(s.tol > 0.0 && s.admm_tol > 0.0 && s.inner_tol > 0.0 && s.rho > 0.0) {
            return Err(CliError::Config("solver tolerances and rho must be > 0".into()));
        }
        if !(s.epsilon >= 0.0 && s.lambda1 >= 0.0) || s.num_times == 0 {
            return Err(CliError::Config("solver.epsilon, solver.lambda1 must be >= 0 and num_times >= 1".into()));
        }
        if let Some(sim) = &self.simulate {
            sim.sim()
                .validate()
                .map_err(|e| CliError::Config(format!("simulate: {e}")))?;
            if sim.replicates == 0 {
                return Err(CliError::Config("simulate.replicates must be >= 1".into()));
            }
        }
        if let Some(d) = &self.data {
            if let Some([lo, hi]) = d.domain {
                if !(lo < hi) {
                    return Err(CliError::Config(format!("data.domain [{lo}, {hi}] is empty")));
                }
            }
        }
        if let Some(e) = &self.estimate {
            if let Some(l) = e.lambda {
                if !(l.is_finite() && l >= 0.0) {
                    return Err(CliError::Config("estimate.lambda must be >= 0".into()));
                }
            }
            if let Some(f) = e.target_fraction {
                if !(0.0..=1.0).contains(&f) {
                    return Err(CliError::Config("estimate.target_fraction must lie in [0, 1]".into()));
                }
            }
            let set = [e.lambda.is_some(), e.target_edges.is_some(), e.target_fraction.is_some()];
            if set.iter().filter(|x| **x).count() != 1 {
                return Err(CliError::Config(
                    "estimate needs exactly one of lambda, target_edges, target_fraction".into(),
                ));
            }
        }
        if let Some(r) = &self.roc {
            if r.methods.is_empty() {
                return Err(CliError::Config("roc.methods is empty".into()));
            }
            r.grid.validate("roc.grid")?;
            r.fusion_grid.validate("roc.fusion_grid")?;
        }
        if let Some(t) = &self.tune {
            if t.folds < 2 {
                return Err(CliError::Config("tune.folds must be >= 2".into()));
            }
            for (name, v) in [("tune.sizes", &t.sizes), ("tune.components", &t.components)] {
                if let Some(v) = v {
                    if v.is_empty() || v.contains(&0) {
                        return Err(CliError::Config(format!("{name} must be nonempty and positive")));
                    }
                }
            }
            if let Some(g) = &t.lambda_grid {
                g.validate("tune.lambda_grid")?;
            }
        }
        Ok(())
    }

    pub fn require_simulate(&self) -> CliResult<&SimulateConfig> {
        self.simulate
            .as_ref()
            .ok_or_else(|| CliError::Config("missing [simulate] section".into()))
    }

    pub fn require_data(&self) -> CliResult<&DataConfig> {
        self.data
            .as_ref()
            .ok_or_else(|| CliError::Config("missing [data] section".into()))
    }

    /// SHA-256 of the canonical JSON form of the effective configuration.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

fn apply_override(table: &mut toml::Table, item: &str) -> CliResult<()> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override '{item}' is not key=value")))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|k| k.is_empty()) {
        return Err(CliError::Config(format!("override key '{key}' is malformed")));
    }
    // Anything that is not a TOML literal is taken as a bare string.
    let value = format!("v = {}", raw.trim())
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));
    let (last, parents) = path.split_last().expect("nonempty path");
    let mut node = table;
    for k in parents {
        node = node
            .entry(k.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("override path '{key}' crosses a non-table value")))?;
    }
    node.insert(last.to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_uses_defaults() {
        let c = RunConfig::parse("", &[]).unwrap();
        assert_eq!(c.output, PathBuf::from("out"));
        assert_eq!(c.basis, BasisConfig::default());
        assert!(c.simulate.is_none());
        c.validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(RunConfig::parse("colour = 1", &[]), Err(CliError::Config(_))));
        assert!(RunConfig::parse("[basis]\nsizes = 3", &[]).is_err());
        assert!(RunConfig::parse("[simulate]\nmodel = \"m2\"\np = 9\nrepl = 1", &[]).is_err());
    }

    #[test]
    fn invalid_model_name_is_a_config_error() {
        let e = RunConfig::parse("[simulate]\nmodel = \"m9\"\np = 9", &[]).unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn overrides_patch_nested_keys() {
        let text = "[simulate]\nmodel = \"M2\"\np = 10\n";
        let c = RunConfig::parse(text, &["simulate.p=12".into(), "basis.family=fourier".into(), "output=res".into()])
            .unwrap();
        let sim = c.simulate.unwrap();
        assert_eq!(sim.p, 12);
        assert_eq!(sim.model, Model::M2);
        assert_eq!(c.basis.family, Family::Fourier);
        assert_eq!(c.output, PathBuf::from("res"));
        assert!(RunConfig::parse("", &["nokey".into()]).is_err());
        assert!(RunConfig::parse("output = \"a\"", &["output.x=1".into()]).is_err());
    }

    #[test]
    fn grids_parse_both_forms() {
        let c = RunConfig::parse("[roc]\ngrid = [1.0, 0.5]\nfusion_grid = { from = 1.0, to = 0.01, count = 3 }", &[])
            .unwrap();
        let r = c.roc.unwrap();
        assert_eq!(r.grid.values(), vec![1.0, 0.5]);
        let f = r.fusion_grid.values();
        assert_eq!(f.len(), 3);
        assert!((f[1] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn estimate_modes() {
        let c = RunConfig::parse("[estimate]\ntarget_fraction = 0.1", &[]).unwrap();
        assert_eq!(c.estimate.as_ref().unwrap().mode(10).unwrap(), EstimateMode::Target(5));
        let both = RunConfig::parse("[estimate]\nlambda = 0.1\ntarget_edges = 2", &[]).unwrap();
        assert!(both.validate().is_err());
    }

    #[test]
    fn validation_catches_bad_dimensions() {
        let c = RunConfig::parse("[basis]\nsize = 4\ncomponents = 6", &[]).unwrap();
        assert!(c.validate().is_err());
        let c = RunConfig::parse("[simulate]\nmodel = \"m2\"\np = 5", &[]).unwrap();
        assert_eq!(c.validate().unwrap_err().exit_code(), 2);
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::parse("", &[]).unwrap();
        let b = RunConfig::parse("", &["solver.tol=1e-6".into()]).unwrap();
        assert_eq!(a.hash(), RunConfig::parse("", &[]).unwrap().hash());
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
