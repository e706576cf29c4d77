use std::path::{Path, PathBuf};
use std::sync::Arc;

use fudge_core::curvefit::{fit_sample, RawDataset};
use fudge_core::fpca::{project_populations, Projection};
use fudge_core::fudge::{self, EdgeSet, FudgeConfig};
use fudge_core::jfgl::{self, JfglConfig, JfglProblem};
use fudge_core::linalg;
use fudge_core::simgen::{self, Model};
use fudge_core::tuneval::{self, Method, RocCurve};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{EstimateConfig, EstimateMode, Grid, RocConfig, RunConfig};
use crate::error::{CliError, CliResult, Context};
use crate::io::{self, EdgeFile};

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    config_sha256: String,
    config: &'a RunConfig,
    seeds: Value,
    outputs: Vec<String>,
    results: Value,
}

fn write_manifest(cfg: &RunConfig, command: &str, seeds: Value, outputs: Vec<String>, results: Value) -> CliResult<()> {
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command,
        config_sha256: cfg.hash(),
        config: cfg,
        seeds,
        outputs,
        results,
    };
    io::write_json(&cfg.output.join("manifest.json"), &manifest)
}

fn rel(path: &Path, root: &Path) -> String {
    path.strip_prefix(root).unwrap_or(path).display().to_string()
}

pub fn simulate(cfg: &RunConfig) -> CliResult<()> {
    let sim = cfg.require_simulate()?.sim();
    let reps = cfg.require_simulate()?.replicates;
    let out = &cfg.output;
    io::create_dir(out)?;
    let shared_truth = sim.model == Model::M2;

    let written = (0..reps)
        .into_par_iter()
        .map(|r| -> CliResult<Vec<PathBuf>> {
            let rep = simgen::simulate(&sim, r).context(&format!("simulating replicate {}", r + 1))?;
            let dir = out.join(format!("replicate_{:03}", r + 1));
            io::create_dir(&dir)?;
            let mut files = vec![dir.join("x.csv"), dir.join("y.csv")];
            io::write_dataset(&files[0], &rep.x)?;
            io::write_dataset(&files[1], &rep.y)?;
            if shared_truth {
                if r == 0 {
                    let path = out.join("truth.json");
                    io::write_json(&path, &EdgeFile::from(&rep.truth))?;
                    files.push(path);
                }
            } else {
                let path = dir.join("truth.json");
                io::write_json(&path, &EdgeFile::from(&rep.truth))?;
                files.push(path);
            }
            Ok(files)
        })
        .collect::<CliResult<Vec<_>>>()?;

    let mut outputs: Vec<String> = written.into_iter().flatten().map(|p| rel(&p, out)).collect();
    outputs.sort();
    let seeds = json!({ "base": sim.seed, "replicates": reps });
    write_manifest(cfg, "simulate", seeds, outputs, Value::Null)
}

/// Fit both populations in the configured basis and project onto the pooled
/// FPCA bases.
fn project(cfg: &RunConfig, x: &RawDataset, y: &RawDataset) -> CliResult<Projection> {
    let b = &cfg.basis;
    let basis = Arc::new(b.spec().build(b.size, x.domain()).context("building basis")?);
    let (fx, fy) = rayon::join(|| fit_sample(x, &basis), || fit_sample(y, &basis));
    let mut fx = fx.context("fitting x")?;
    let mut fy = fy.context("fitting y")?;
    if b.center {
        fx = fx.centered();
        fy = fy.centered();
    }
    project_populations(&fx, &fy, b.components).context("projecting scores")
}

/// One estimate at a fixed penalty, reduced to what gets written out.
struct Fit {
    edges: EdgeSet,
    /// `(j, l, a, b)` for `j < l`: block norms of the difference, or vote
    /// counts for the pointwise baseline.
    table: Vec<(usize, usize, f64, f64)>,
    converged: bool,
    iterations: usize,
}

fn pair_table(norms: &DMatrix<f64>) -> Vec<(usize, usize, f64, f64)> {
    let p = norms.nrows();
    (0..p)
        .flat_map(|j| (j + 1..p).map(move |l| (j, l)))
        .map(|(j, l)| (j, l, norms[(j, l)], norms[(l, j)]))
        .collect()
}

struct Estimator<'a> {
    cfg: &'a RunConfig,
    method: Method,
    projection: &'a Projection,
    baseline: Option<Vec<(fudge_core::fpca::ScoreCovariance, fudge_core::fpca::ScoreCovariance)>>,
}

impl<'a> Estimator<'a> {
    fn new(cfg: &'a RunConfig, method: Method, projection: &'a Projection, x: &RawDataset, y: &RawDataset) -> CliResult<Self> {
        let baseline = match method {
            Method::Multiple => Some(
                tuneval::baseline_covariances(x, y, cfg.solver.num_times).context("pointwise covariances")?,
            ),
            _ => None,
        };
        Ok(Self {
            cfg,
            method,
            projection,
            baseline,
        })
    }

    /// Penalty above which the estimate is empty, when known in closed form.
    fn lambda_max(&self) -> Option<f64> {
        match self.method {
            Method::Fudge => Some(fudge::zero_solution_threshold(&self.projection.cov_x, &self.projection.cov_y)),
            Method::Multiple => Some(tuneval::multiple_lambda_max(self.baseline.as_ref().expect("baseline"))),
            _ => None,
        }
    }

    fn fit(&self, lambda: f64) -> CliResult<Fit> {
        let solver = &self.cfg.solver;
        let eps = solver.epsilon;
        let proj = self.projection;
        match self.method {
            Method::Fudge => {
                let fc = FudgeConfig {
                    lambda,
                    ..solver.fudge()
                };
                let est = fudge::solve_fudge(&proj.cov_x, &proj.cov_y, &fc).context("solving")?;
                Ok(Fit {
                    edges: fudge::threshold_edges(&est, eps),
                    table: pair_table(&est.block_norms()),
                    converged: est.converged(),
                    iterations: est.iterations(),
                })
            }
            Method::Multiple => {
                let covs = self.baseline.as_ref().expect("baseline");
                let fc = FudgeConfig {
                    lambda,
                    ..solver.fudge()
                };
                let ests = covs
                    .par_iter()
                    .map(|(sx, sy)| fudge::solve_fudge(sx, sy, &fc))
                    .collect::<fudge_core::Result<Vec<_>>>()
                    .context("solving pointwise problems")?;
                let p = proj.cov_x.p();
                let mut votes = DMatrix::<f64>::zeros(p, p);
                for est in &ests {
                    for (j, l) in fudge::threshold_edges(est, 0.0).iter() {
                        votes[(j, l)] += 1.0;
                        votes[(l, j)] += 1.0;
                    }
                }
                let need = tuneval::majority_threshold(covs.len()) as f64;
                let mut edges = EdgeSet::empty(p);
                for j in 0..p {
                    for l in j + 1..p {
                        if votes[(j, l)] >= need {
                            edges.insert(j, l).context("vote")?;
                        }
                    }
                }
                Ok(Fit {
                    edges,
                    table: pair_table(&votes),
                    converged: ests.iter().all(|e| e.converged()),
                    iterations: ests.iter().map(|e| e.iterations()).max().unwrap_or(0),
                })
            }
            _ => {
                let sizes = [proj.scores_x.n(), proj.scores_y.n()];
                let scale = penalty_scale(sizes[0], sizes[1]);
                let jc = JfglConfig {
                    penalty: self.method.penalty().expect("joint method"),
                    lambda2: lambda * scale,
                    ..solver.jfgl(scale)
                };
                let problem = JfglProblem::new(&[&proj.cov_x, &proj.cov_y], &sizes, jc).context("setting up")?;
                let fit = jfgl::solve_jfgl(&problem).context("solving")?;
                let edges = jfgl::jfgl_diff_edges(&fit.estimates[0], &fit.estimates[1], eps).context("thresholding")?;
                let diff = fit.estimates[0].matrix() - fit.estimates[1].matrix();
                Ok(Fit {
                    edges,
                    table: pair_table(&linalg::block_norms(&diff, proj.cov_x.m())),
                    converged: fit.converged,
                    iterations: fit.iterations,
                })
            }
        }
    }
}

/// The joint graphical lasso loss is a sum over samples, so its penalties
/// and ADMM step are configured per sample and multiplied by the mean sample
/// size.
pub fn penalty_scale(n_x: usize, n_y: usize) -> f64 {
    0.5 * (n_x + n_y) as f64
}

const BISECTION_STEPS: usize = 60;

/// Search the penalty geometrically until the edge count is within one of
/// `target`. Falls back to the closest count seen.
fn bisect(est: &Estimator, target: usize) -> CliResult<(f64, Fit, bool, usize)> {
    let mut evals = 0;
    let mut hi = match est.lambda_max() {
        Some(l) => l,
        None => {
            let mut l = 1.0;
            loop {
                evals += 1;
                if est.fit(l)?.edges.is_empty() || evals > 60 {
                    break l;
                }
                l *= 2.0;
            }
        }
    };
    let top = est.fit(hi)?;
    evals += 1;
    if target == 0 || top.edges.len().abs_diff(target) <= 1 {
        let met = top.edges.len().abs_diff(target) <= 1;
        return Ok((hi, top, met, evals));
    }
    let mut lo = hi * 1e-8;
    let mut best = (hi, top);
    for _ in 0..BISECTION_STEPS {
        let mid = (lo * hi).sqrt();
        let fit = est.fit(mid)?;
        evals += 1;
        let count = fit.edges.len();
        let closer = count.abs_diff(target) < best.1.edges.len().abs_diff(target);
        if count.abs_diff(target) <= 1 {
            return Ok((mid, fit, true, evals));
        }
        if count > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if closer {
            best = (mid, fit);
        }
    }
    Ok((best.0, best.1, false, evals))
}

pub fn estimate(cfg: &RunConfig) -> CliResult<()> {
    let data = cfg.require_data()?;
    let ec: EstimateConfig = cfg
        .estimate
        .clone()
        .ok_or_else(|| CliError::Config("missing [estimate] section".into()))?;
    let (x, y) = io::read_pair(&data.x, &data.y, data.domain)?;
    let mode = ec.mode(x.p())?;
    let projection = project(cfg, &x, &y)?;
    let est = Estimator::new(cfg, ec.method, &projection, &x, &y)?;

    let (lambda, fit, target_met, evaluations) = match mode {
        EstimateMode::Fixed(l) => (l, est.fit(l)?, true, 1),
        EstimateMode::Target(k) => bisect(&est, k)?,
    };

    let out = &cfg.output;
    io::create_dir(out)?;
    io::write_json(&out.join("edges.json"), &EdgeFile::from(&fit.edges))?;
    let norms = out.join(if ec.method == Method::Multiple { "votes.csv" } else { "block_norms.csv" });
    if ec.method == Method::Multiple {
        #[derive(Serialize)]
        struct Row {
            j: usize,
            l: usize,
            votes: usize,
        }
        io::write_rows(
            &norms,
            fit.table.iter().map(|&(j, l, v, _)| Row { j: j + 1, l: l + 1, votes: v as usize }),
        )?;
    } else {
        #[derive(Serialize)]
        struct Row {
            j: usize,
            l: usize,
            norm_jl: f64,
            norm_lj: f64,
        }
        io::write_rows(
            &norms,
            fit.table.iter().map(|&(j, l, a, b)| Row { j: j + 1, l: l + 1, norm_jl: a, norm_lj: b }),
        )?;
    }

    let results = json!({
        "method": ec.method.name(),
        "p": x.p(),
        "n_x": x.n(),
        "n_y": y.n(),
        "lambda": lambda,
        "lambda_max": est.lambda_max(),
        "penalty_scale": ec.method.penalty().map(|_| penalty_scale(x.n(), y.n())),
        "edges": fit.edges.len(),
        "target_met": target_met,
        "evaluations": evaluations,
        "converged": fit.converged,
        "iterations": fit.iterations,
    });
    let outputs = vec!["edges.json".to_string(), rel(&norms, out)];
    write_manifest(cfg, "estimate", Value::Null, outputs, results)
}

fn roc_settings(cfg: &RunConfig) -> RocConfig {
    cfg.roc.clone().unwrap_or_else(|| {
        RunConfig::parse("[roc]", &[])
            .expect("default roc section")
            .roc
            .expect("present")
    })
}

fn grid_for(roc: &RocConfig, method: Method) -> &Grid {
    if method.penalty().is_some() {
        &roc.fusion_grid
    } else {
        &roc.grid
    }
}

pub fn roc(cfg: &RunConfig) -> CliResult<()> {
    let s = cfg.require_simulate()?;
    let sim = s.sim();
    let roc = roc_settings(cfg);
    let scale = penalty_scale(sim.n, sim.n);
    let options = cfg.solver.sweep(scale);

    let per_rep = (0..s.replicates)
        .into_par_iter()
        .map(|r| -> CliResult<Vec<RocCurve>> {
            let what = format!("replicate {}", r + 1);
            let rep = simgen::simulate(&sim, r).context(&what)?;
            let projection = project(cfg, &rep.x, &rep.y)?;
            roc.methods
                .iter()
                .map(|&method| {
                    let mut grid = grid_for(&roc, method).values();
                    if method.penalty().is_some() {
                        grid.iter_mut().for_each(|g| *g *= scale);
                    }
                    let sweep = tuneval::sweep_edges(method, &rep.x, &rep.y, &projection, &grid, &options)
                        .context(&format!("{what}, {}", method.name()))?;
                    tuneval::roc_from_edge_sets(&sweep, &rep.truth).context(&what)
                })
                .collect()
        })
        .collect::<CliResult<Vec<_>>>()?;

    #[derive(Serialize)]
    struct PointRow<'a> {
        method: &'a str,
        replicate: String,
        grid: f64,
        lambda: f64,
        fpr: f64,
        tpr: f64,
    }
    #[derive(Serialize)]
    struct AucRow<'a> {
        method: &'a str,
        replicate: String,
        auc: f64,
    }

    let mut points = Vec::new();
    let mut means = Vec::new();
    let mut aucs = Vec::new();
    let mut summary = serde_json::Map::new();
    for (k, &method) in roc.methods.iter().enumerate() {
        let name = method.name();
        let grid = grid_for(&roc, method).values();
        let curves: Vec<RocCurve> = per_rep.iter().map(|c| c[k].clone()).collect();
        let mut total = 0.0;
        for (r, curve) in curves.iter().enumerate() {
            for (g, pt) in grid.iter().zip(&curve.points) {
                points.push(PointRow {
                    method: name,
                    replicate: (r + 1).to_string(),
                    grid: *g,
                    lambda: pt.lambda,
                    fpr: pt.fpr,
                    tpr: pt.tpr,
                });
            }
            let a = tuneval::auc(curve).context("AUC")?;
            total += a;
            aucs.push(AucRow {
                method: name,
                replicate: (r + 1).to_string(),
                auc: a,
            });
        }
        let mean = tuneval::mean_curve(&curves).context("averaging curves")?;
        for (g, pt) in grid.iter().zip(&mean.points) {
            means.push(PointRow {
                method: name,
                replicate: "mean".into(),
                grid: *g,
                lambda: pt.lambda,
                fpr: pt.fpr,
                tpr: pt.tpr,
            });
        }
        let mean_auc = total / curves.len() as f64;
        aucs.push(AucRow {
            method: name,
            replicate: "mean".into(),
            auc: mean_auc,
        });
        summary.insert(name.into(), json!(mean_auc));
    }

    let out = &cfg.output;
    io::create_dir(out)?;
    io::write_rows(&out.join("roc_replicates.csv"), points)?;
    io::write_rows(&out.join("roc_mean.csv"), means)?;
    io::write_rows(&out.join("auc.csv"), aucs)?;
    let outputs = ["roc_replicates.csv", "roc_mean.csv", "auc.csv"].map(String::from).to_vec();
    let seeds = json!({ "base": sim.seed, "replicates": s.replicates });
    write_manifest(cfg, "roc", seeds, outputs, json!({ "mean_auc": summary }))
}

pub fn tune(cfg: &RunConfig) -> CliResult<()> {
    let tc = cfg
        .tune
        .clone()
        .ok_or_else(|| CliError::Config("missing [tune] section".into()))?;
    let (x, y) = match (&cfg.data, &cfg.simulate) {
        (Some(d), _) => io::read_pair(&d.x, &d.y, d.domain)?,
        (None, Some(s)) => {
            let rep = simgen::simulate(&s.sim(), 0).context("simulating")?;
            (rep.x, rep.y)
        }
        (None, None) => return Err(CliError::Config("tune needs a [data] or [simulate] section".into())),
    };
    let spec = cfg.basis.spec();
    let sizes = tc.sizes.clone().unwrap_or_else(|| vec![cfg.basis.size]);
    let comps = tc.components.clone().unwrap_or_else(|| vec![cfg.basis.components]);
    let dims = tuneval::cv_select_dims(&x, &y, &sizes, &comps, tc.folds, tc.seed, &spec)
        .context("cross-validating L and M")?;

    let lambda = match &tc.lambda_grid {
        None => Value::Null,
        Some(grid) => {
            let (l, m) = dims.chosen;
            let proj = tuneval::project_raw(&x, &y, &spec, l, m).context("projecting scores")?;
            let lmax = fudge::zero_solution_threshold(&proj.cov_x, &proj.cov_y);
            let ratios = grid.values();
            let lambdas: Vec<f64> = ratios.iter().map(|r| r * lmax).collect();
            let res = tuneval::scv_select_lambda(
                &proj.scores_x,
                &proj.scores_y,
                &lambdas,
                tc.folds,
                tc.seed,
                &cfg.solver.fudge(),
            )
            .context("selective cross-validation")?;
            json!({ "lambda_max": lmax, "ratios": ratios, "result": res })
        }
    };

    let out = &cfg.output;
    io::create_dir(out)?;
    io::write_json(&out.join("tune.json"), &json!({ "dims": dims, "lambda": lambda }))?;
    let seeds = json!({ "tune": tc.seed, "simulate": cfg.simulate.as_ref().map(|s| s.seed) });
    write_manifest(cfg, "tune", seeds, vec!["tune.json".into()], json!({ "chosen": dims.chosen }))
}
