//! Tuning-parameter selection, the pointwise "multiple" baseline, and ROC
//! evaluation of recovered edge sets.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::curvefit::{design_matrix, fit_sample, RawDataset};
use crate::error::{Error, Result};
use crate::fpca::{compute_scores, node_fpca, project_populations, score_covariance, Population, Projection, ScoreCovariance, ScoreMatrix};
use crate::fudge::{self, BlockMask, EdgeSet, FudgeConfig};
use crate::funcbasis::BasisSpec;
use crate::jfgl::{self, JfglConfig, JfglProblem, Penalty};
use crate::linalg;
use crate::simgen::rng_for;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RocPoint {
    pub lambda: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RocCurve {
    /// In sweep order.
    pub points: Vec<RocPoint>,
    pub positives: usize,
    pub negatives: usize,
}

/// `(FPR, TPR)` of `estimate` against `truth`. With no true negatives the
/// FPR is reported as 0.
pub fn edge_rates(estimate: &EdgeSet, truth: &EdgeSet) -> Result<(f64, f64)> {
    if estimate.p() != truth.p() {
        return Err(Error::ShapeMismatch(format!(
            "estimate has {} nodes, truth has {}",
            estimate.p(),
            truth.p()
        )));
    }
    if truth.is_empty() {
        return Err(Error::UndefinedTpr);
    }
    let hits = estimate.intersection_len(truth);
    let negatives = truth.max_edges() - truth.len();
    let false_pos = estimate.len() - hits;
    let fpr = if negatives == 0 { 0.0 } else { false_pos as f64 / negatives as f64 };
    Ok((fpr, hits as f64 / truth.len() as f64))
}

pub fn roc_from_edge_sets(sweep: &[(f64, EdgeSet)], truth: &EdgeSet) -> Result<RocCurve> {
    let points = sweep
        .iter()
        .map(|(lambda, est)| {
            edge_rates(est, truth).map(|(fpr, tpr)| RocPoint {
                lambda: *lambda,
                fpr,
                tpr,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RocCurve {
        points,
        positives: truth.len(),
        negatives: truth.max_edges() - truth.len(),
    })
}

/// Evaluate `estimator` at every grid value (in parallel) and score each
/// edge set against `truth`.
pub fn roc_from_lambda_sweep<F>(estimator: F, grid: &[f64], truth: &EdgeSet) -> Result<RocCurve>
where
    F: Fn(f64) -> Result<EdgeSet> + Sync,
{
    if grid.is_empty() {
        return Err(Error::InvalidArgument("lambda grid is empty".into()));
    }
    let sweep = grid
        .par_iter()
        .map(|&lambda| estimator(lambda).map(|e| (lambda, e)))
        .collect::<Result<Vec<_>>>()?;
    roc_from_edge_sets(&sweep, truth)
}

impl RocCurve {
    /// Points sorted by FPR with TPR replaced by its running maximum.
    pub fn envelope(&self) -> Vec<(f64, f64)> {
        let mut pts: Vec<(f64, f64)> = self.points.iter().map(|p| (p.fpr, p.tpr)).collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        let mut best = 0.0_f64;
        for pt in &mut pts {
            best = best.max(pt.1);
            pt.1 = best;
        }
        pts
    }
}

/// Trapezoid area under the FPR-sorted points, padded with (0,0) and (1,1).
pub fn auc(roc: &RocCurve) -> Result<f64> {
    if roc.points.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "AUC needs at least 2 points, got {}",
            roc.points.len()
        )));
    }
    let mut pts: Vec<(f64, f64)> = roc.points.iter().map(|p| (p.fpr, p.tpr)).collect();
    pts.push((0.0, 0.0));
    pts.push((1.0, 1.0));
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    pts.dedup();
    let area: f64 = pts
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * 0.5 * (w[0].1 + w[1].1))
        .sum();
    Ok(area.clamp(0.0, 1.0))
}

/// Pointwise average of curves traced on a common grid.
pub fn mean_curve(curves: &[RocCurve]) -> Result<RocCurve> {
    let first = curves
        .first()
        .ok_or_else(|| Error::InvalidArgument("no curves to average".into()))?;
    let len = first.points.len();
    if curves.iter().any(|c| c.points.len() != len) {
        return Err(Error::ShapeMismatch("curves have different lengths".into()));
    }
    let k = curves.len() as f64;
    let points = (0..len)
        .map(|i| RocPoint {
            lambda: curves.iter().map(|c| c.points[i].lambda).sum::<f64>() / k,
            fpr: curves.iter().map(|c| c.points[i].fpr).sum::<f64>() / k,
            tpr: curves.iter().map(|c| c.points[i].tpr).sum::<f64>() / k,
        })
        .collect();
    Ok(RocCurve {
        points,
        positives: first.positives,
        negatives: first.negatives,
    })
}

/// Chosen candidate plus the cross-validation score of every candidate.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TuneResult<T> {
    pub chosen: T,
    pub candidates: Vec<T>,
    pub scores: Vec<f64>,
}

fn near_min(score: f64, best: f64) -> bool {
    score <= best + 1e-9 * best.abs().max(1e-3)
}

/// Random assignment of `n` samples to `folds` folds of near-equal size.
pub fn fold_assignment(n: usize, folds: usize, seed: u64, stream: u64) -> Result<Vec<Vec<usize>>> {
    if folds < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 folds, got {folds}")));
    }
    if n < 2 * folds {
        return Err(Error::InvalidArgument(format!(
            "{n} samples cannot fill {folds} folds with at least 2 each"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_for(seed, &[0xF01D, stream]));
    let mut out = vec![Vec::new(); folds];
    for (pos, i) in order.into_iter().enumerate() {
        out[pos % folds].push(i);
    }
    for f in &mut out {
        f.sort_unstable();
    }
    Ok(out)
}

fn complement(n: usize, fold: &[usize]) -> Vec<usize> {
    (0..n).filter(|i| fold.binary_search(i).is_err()).collect()
}

/// Selective cross-validation for the FuDGE penalty.
///
/// Each candidate fixes its block pattern from a full-data fit. Every fold
/// then refits without penalty on that pattern from the training samples and
/// scores the quadratic loss on the held-out score covariances.
pub fn scv_select_lambda(
    scores_x: &ScoreMatrix,
    scores_y: &ScoreMatrix,
    grid: &[f64],
    folds: usize,
    seed: u64,
    base: &FudgeConfig,
) -> Result<TuneResult<f64>> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("lambda grid is empty".into()));
    }
    let folds_x = fold_assignment(scores_x.n(), folds, seed, 0)?;
    let folds_y = fold_assignment(scores_y.n(), folds, seed, 1)?;
    let full_x = score_covariance(scores_x)?;
    let full_y = score_covariance(scores_y)?;
    let splits = (0..folds)
        .map(|f| {
            let train_x = score_covariance(&scores_x.subset(&complement(scores_x.n(), &folds_x[f])))?;
            let train_y = score_covariance(&scores_y.subset(&complement(scores_y.n(), &folds_y[f])))?;
            let test_x = score_covariance(&scores_x.subset(&folds_x[f]))?;
            let test_y = score_covariance(&scores_y.subset(&folds_y[f]))?;
            Ok((train_x, train_y, test_x, test_y))
        })
        .collect::<Result<Vec<_>>>()?;

    let scores = grid
        .par_iter()
        .map(|&lambda| {
            let cfg = FudgeConfig {
                lambda,
                ..base.clone()
            };
            let pattern = fudge::solve_fudge(&full_x, &full_y, &cfg)?;
            let mask = BlockMask::support_of(pattern.delta(), pattern.m());
            let refit = FudgeConfig {
                lambda: 0.0,
                ..base.clone()
            };
            let mut total = 0.0;
            for (tx, ty, sx, sy) in &splits {
                let est = if mask.count() == 0 {
                    DMatrix::zeros(sx.matrix().nrows(), sx.matrix().ncols())
                } else {
                    fudge::solve_fudge_restricted(tx, ty, &refit, Some(&mask))?.delta().clone()
                };
                total += fudge::loss(&est, sx.matrix(), sy.matrix())?;
            }
            Ok(total / splits.len() as f64)
        })
        .collect::<Result<Vec<f64>>>()?;

    let best = scores.iter().copied().fold(f64::INFINITY, f64::min);
    // ties go to the larger penalty
    let chosen = grid
        .iter()
        .zip(&scores)
        .filter(|(_, s)| near_min(**s, best))
        .map(|(l, _)| *l)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(TuneResult {
        chosen,
        candidates: grid.to_vec(),
        scores,
    })
}

/// Fit both populations on a shared basis of size `l`, then project onto
/// the pooled `m`-dimensional FPCA bases.
pub fn project_raw(x: &RawDataset, y: &RawDataset, basis: &BasisSpec, l: usize, m: usize) -> Result<Projection> {
    check_pair(x, y)?;
    let basis = Arc::new(basis.build(l, x.domain())?);
    let fx = fit_sample(x, &basis)?;
    let fy = fit_sample(y, &basis)?;
    project_populations(&fx, &fy, m)
}

fn check_pair(x: &RawDataset, y: &RawDataset) -> Result<()> {
    if x.p() != y.p() {
        return Err(Error::ShapeMismatch(format!("populations have {} and {} nodes", x.p(), y.p())));
    }
    if x.domain() != y.domain() {
        return Err(Error::InvalidInput("populations are observed on different domains".into()));
    }
    Ok(())
}

/// Choose the basis size `L` and FPCA dimension `M` by k-fold cross-validation.
///
/// Training folds (all observations) determine the FPCA basis. Each
/// held-out curve is fitted from its even-indexed observations, projected
/// onto the first `M` eigenfunctions, and scored by squared error at its
/// odd-indexed observations. Pairs with `M > L` are skipped. Ties go to the
/// smaller `(L, M)`.
pub fn cv_select_dims(
    x: &RawDataset,
    y: &RawDataset,
    l_grid: &[usize],
    m_grid: &[usize],
    folds: usize,
    seed: u64,
    basis: &BasisSpec,
) -> Result<TuneResult<(usize, usize)>> {
    check_pair(x, y)?;
    let mut candidates: Vec<(usize, usize)> = l_grid
        .iter()
        .flat_map(|&l| m_grid.iter().map(move |&m| (l, m)))
        .filter(|&(l, m)| m >= 1 && m <= l)
        .collect();
    candidates.sort_unstable();
    candidates.dedup();
    if candidates.is_empty() {
        return Err(Error::InvalidArgument("no (L, M) pair with 1 <= M <= L".into()));
    }
    let folds_x = fold_assignment(x.n(), folds, seed, 2)?;
    let folds_y = fold_assignment(y.n(), folds, seed, 3)?;
    let even = |k: usize| k % 2 == 0;
    let half_x = x.map_curves(|c| c.select(even))?;
    let half_y = y.map_curves(|c| c.select(even))?;

    let mut ls: Vec<usize> = candidates.iter().map(|c| c.0).collect();
    ls.dedup();
    let mut scores = vec![0.0; candidates.len()];
    for l in ls {
        let b = Arc::new(basis.build(l, x.domain())?);
        let fx = fit_sample(x, &b)?;
        let fy = fit_sample(y, &b)?;
        let hx = fit_sample(&half_x, &b)?;
        let hy = fit_sample(&half_y, &b)?;
        let ms: Vec<(usize, usize)> = candidates
            .iter()
            .enumerate()
            .filter(|(_, c)| c.0 == l)
            .map(|(i, c)| (i, c.1))
            .collect();
        for f in 0..folds {
            let train_x = fx.subset(&complement(x.n(), &folds_x[f]));
            let train_y = fy.subset(&complement(y.n(), &folds_y[f]));
            let test = [
                (hx.subset(&folds_x[f]), x, &folds_x[f], Population::X),
                (hy.subset(&folds_y[f]), y, &folds_y[f], Population::Y),
            ];
            let errs = ms
                .par_iter()
                .map(|&(idx, m)| {
                    let fpca = node_fpca(&train_x, &train_y, m)?;
                    let mut err = 0.0;
                    let mut count = 0usize;
                    for (fitted, raw, samples, pop) in &test {
                        let sc = compute_scores(fitted, &fpca, *pop)?;
                        for (row, &i) in samples.iter().enumerate() {
                            for (j, node) in fpca.iter().enumerate() {
                                let curve = raw.curve(i, j);
                                let odd_t: Vec<f64> = curve.times().iter().skip(1).step_by(2).copied().collect();
                                let odd_v = curve.values().iter().skip(1).step_by(2);
                                let a = nalgebra::DVector::from_fn(m, |k, _| sc.get(row, j, k));
                                let coeffs = node.loadings() * a;
                                let recon = design_matrix(&b, &odd_t)? * coeffs;
                                err += recon.iter().zip(odd_v).map(|(r, v)| (r - v).powi(2)).sum::<f64>();
                                count += odd_t.len();
                            }
                        }
                    }
                    Ok((idx, err / count.max(1) as f64))
                })
                .collect::<Result<Vec<_>>>()?;
            for (idx, e) in errs {
                scores[idx] += e / folds as f64;
            }
        }
    }
    let best = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let chosen = candidates
        .iter()
        .zip(&scores)
        .find(|(_, s)| near_min(**s, best))
        .map(|(c, _)| *c)
        .expect("candidates are nonempty");
    Ok(TuneResult {
        chosen,
        candidates,
        scores,
    })
}

/// `count` equally spaced interval midpoints `lo + (s + ½)(hi − lo)/count`.
pub fn baseline_times(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    (0..count)
        .map(|s| lo + (s as f64 + 0.5) * (hi - lo) / count as f64)
        .collect()
}

fn nearest_value(times: &[f64], values: &[f64], t: f64) -> f64 {
    let k = times.partition_point(|&x| x < t);
    let pick = if k == 0 {
        0
    } else if k == times.len() || (t - times[k - 1]) <= (times[k] - t) {
        k - 1
    } else {
        k
    };
    values[pick]
}

/// Uncentered `p × p` covariance of the curve values nearest to `t`.
fn pointwise_covariance(data: &RawDataset, t: f64, population: Population) -> Result<ScoreCovariance> {
    let (n, p) = (data.n(), data.p());
    let mut s = DMatrix::<f64>::zeros(p, p);
    for i in 0..n {
        let v = nalgebra::DVector::from_fn(p, |j, _| {
            let c = data.curve(i, j);
            nearest_value(c.times(), c.values(), t)
        });
        s.ger(1.0 / n as f64, &v, &v, 1.0);
    }
    ScoreCovariance::from_matrix(population, p, 1, linalg::symmetrize(&s))
}

/// Pointwise covariances of both populations at each baseline time.
pub fn baseline_covariances(
    x: &RawDataset,
    y: &RawDataset,
    num_times: usize,
) -> Result<Vec<(ScoreCovariance, ScoreCovariance)>> {
    check_pair(x, y)?;
    if num_times == 0 {
        return Err(Error::InvalidArgument("need at least one time point".into()));
    }
    for data in [x, y] {
        if let Some(short) = data.curves().iter().map(|c| c.len()).min() {
            if short < num_times {
                return Err(Error::InvalidArgument(format!(
                    "a curve has {short} observations, fewer than the {num_times} requested time points"
                )));
            }
        }
    }
    let d = x.domain();
    baseline_times(d.lo(), d.hi(), num_times)
        .into_par_iter()
        .map(|t| {
            Ok((
                pointwise_covariance(x, t, Population::X)?,
                pointwise_covariance(y, t, Population::Y)?,
            ))
        })
        .collect()
}

/// Edges present in at least a strict majority of the time points.
pub fn majority_threshold(num_times: usize) -> usize {
    num_times / 2 + 1
}

/// The "multiple" baseline: a separate direct-difference estimate at each of
/// `num_times` time points, combined by majority vote. One edge set per λ.
pub fn multiple_baseline(
    x: &RawDataset,
    y: &RawDataset,
    num_times: usize,
    grid: &[f64],
    base: &FudgeConfig,
) -> Result<Vec<EdgeSet>> {
    let covs = baseline_covariances(x, y, num_times)?;
    multiple_from_covariances(&covs, grid, base)
}

pub fn multiple_from_covariances(
    covs: &[(ScoreCovariance, ScoreCovariance)],
    grid: &[f64],
    base: &FudgeConfig,
) -> Result<Vec<EdgeSet>> {
    let p = covs
        .first()
        .ok_or_else(|| Error::InvalidArgument("no time points".into()))?
        .0
        .p();
    let need = majority_threshold(covs.len());
    grid.par_iter()
        .map(|&lambda| {
            let cfg = FudgeConfig {
                lambda,
                ..base.clone()
            };
            let mut votes = DMatrix::<usize>::zeros(p, p);
            for (sx, sy) in covs {
                let est = fudge::solve_fudge(sx, sy, &cfg)?;
                for (j, l) in fudge::threshold_edges(&est, 0.0).iter() {
                    votes[(j, l)] += 1;
                }
            }
            let mut out = EdgeSet::empty(p);
            for j in 0..p {
                for l in (j + 1)..p {
                    if votes[(j, l)] >= need {
                        out.insert(j, l)?;
                    }
                }
            }
            Ok(out)
        })
        .collect()
}

/// Largest zero-solution threshold across the baseline's time points.
pub fn multiple_lambda_max(covs: &[(ScoreCovariance, ScoreCovariance)]) -> f64 {
    covs.iter()
        .map(|(sx, sy)| fudge::zero_solution_threshold(sx, sy))
        .fold(0.0, f64::max)
}

/// Estimators compared in the ROC study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Fudge,
    Multiple,
    Gfgl,
    Ffgl,
    Ffgl2,
    Fgl,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Fudge,
        Method::Multiple,
        Method::Gfgl,
        Method::Ffgl,
        Method::Ffgl2,
        Method::Fgl,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Fudge => "fudge",
            Method::Multiple => "multiple",
            Method::Gfgl => "gfgl",
            Method::Ffgl => "ffgl",
            Method::Ffgl2 => "ffgl2",
            Method::Fgl => "fgl",
        }
    }

    pub fn penalty(&self) -> Option<Penalty> {
        match self {
            Method::Gfgl => Some(Penalty::Gfgl),
            Method::Ffgl => Some(Penalty::Ffgl),
            Method::Ffgl2 => Some(Penalty::Ffgl2),
            Method::Fgl => Some(Penalty::Fgl),
            Method::Fudge | Method::Multiple => None,
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method '{s}'")))
    }
}

/// Settings shared by all methods in a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepOptions {
    pub fudge: FudgeConfig,
    pub jfgl: JfglConfig,
    pub num_times: usize,
    pub epsilon: f64,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            fudge: FudgeConfig::default(),
            jfgl: JfglConfig {
                lambda1: 0.1,
                ..JfglConfig::default()
            },
            num_times: 15,
            epsilon: 0.0,
        }
    }
}

/// Edge sets along a penalty path.
///
/// For FuDGE and the pointwise baseline, `grid` holds ratios of the
/// data-dependent zero-solution threshold. For the joint graphical lasso
/// methods it holds absolute `λ2` values with `λ1` taken from the options.
/// Returns the actual penalty next to each edge set.
pub fn sweep_edges(
    method: Method,
    x: &RawDataset,
    y: &RawDataset,
    projection: &Projection,
    grid: &[f64],
    options: &SweepOptions,
) -> Result<Vec<(f64, EdgeSet)>> {
    match method {
        Method::Fudge => {
            let lmax = fudge::zero_solution_threshold(&projection.cov_x, &projection.cov_y);
            let lambdas: Vec<f64> = grid.iter().map(|r| r * lmax).collect();
            lambdas
                .par_iter()
                .map(|&lambda| {
                    let cfg = FudgeConfig {
                        lambda,
                        ..options.fudge.clone()
                    };
                    let est = fudge::solve_fudge(&projection.cov_x, &projection.cov_y, &cfg)?;
                    Ok((lambda, fudge::threshold_edges(&est, options.epsilon)))
                })
                .collect()
        }
        Method::Multiple => {
            let covs = baseline_covariances(x, y, options.num_times)?;
            let lmax = multiple_lambda_max(&covs);
            let lambdas: Vec<f64> = grid.iter().map(|r| r * lmax).collect();
            let sets = multiple_from_covariances(&covs, &lambdas, &options.fudge)?;
            Ok(lambdas.into_iter().zip(sets).collect())
        }
        _ => {
            let penalty = method.penalty().expect("joint methods carry a penalty");
            let sizes = [projection.scores_x.n(), projection.scores_y.n()];
            grid.par_iter()
                .map(|&lambda2| {
                    let cfg = JfglConfig {
                        penalty,
                        lambda2,
                        ..options.jfgl.clone()
                    };
                    let problem = JfglProblem::new(&[&projection.cov_x, &projection.cov_y], &sizes, cfg)?;
                    let fit = jfgl::solve_jfgl(&problem)?;
                    let edges = jfgl::jfgl_diff_edges(&fit.estimates[0], &fit.estimates[1], options.epsilon)?;
                    Ok((lambda2, edges))
                })
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(points: &[(f64, f64)]) -> RocCurve {
        RocCurve {
            points: points
                .iter()
                .map(|&(fpr, tpr)| RocPoint { lambda: 0.0, fpr, tpr })
                .collect(),
            positives: 1,
            negatives: 1,
        }
    }

    #[test]
    fn auc_examples() {
        assert!((auc(&curve(&[(0.0, 0.0), (1.0, 1.0)])).unwrap() - 0.5).abs() < 1e-15);
        assert!((auc(&curve(&[(0.0, 1.0), (1.0, 1.0)])).unwrap() - 1.0).abs() < 1e-15);
        assert!((auc(&curve(&[(0.0, 0.0), (0.5, 0.8), (1.0, 1.0)])).unwrap() - 0.65).abs() < 1e-15);
        assert!(auc(&curve(&[(0.2, 0.3)])).is_err());
    }

    #[test]
    fn rates_on_toy_graph() {
        let truth = EdgeSet::from_pairs(3, [(0, 1)]).unwrap();
        let exact = truth.clone();
        let all = EdgeSet::from_pairs(3, [(0, 1), (0, 2), (1, 2)]).unwrap();
        let wrong = EdgeSet::from_pairs(3, [(1, 2)]).unwrap();
        assert_eq!(edge_rates(&exact, &truth).unwrap(), (0.0, 1.0));
        assert_eq!(edge_rates(&all, &truth).unwrap(), (1.0, 1.0));
        assert_eq!(edge_rates(&wrong, &truth).unwrap(), (0.5, 0.0));
        assert!(matches!(
            edge_rates(&exact, &EdgeSet::empty(3)),
            Err(Error::UndefinedTpr)
        ));
    }

    #[test]
    fn envelope_is_monotone() {
        let c = curve(&[(0.5, 0.4), (0.1, 0.6), (0.9, 0.5)]);
        let env = c.envelope();
        assert_eq!(env, vec![(0.1, 0.6), (0.5, 0.6), (0.9, 0.6)]);
    }

    #[test]
    fn majority_of_fifteen_is_eight() {
        assert_eq!(majority_threshold(15), 8);
        assert_eq!(majority_threshold(1), 1);
        assert_eq!(majority_threshold(4), 3);
    }

    #[test]
    fn nearest_lookup() {
        let t = [0.0, 1.0, 2.0];
        let v = [10.0, 11.0, 12.0];
        assert_eq!(nearest_value(&t, &v, -1.0), 10.0);
        assert_eq!(nearest_value(&t, &v, 0.6), 11.0);
        assert_eq!(nearest_value(&t, &v, 0.5), 10.0);
        assert_eq!(nearest_value(&t, &v, 9.0), 12.0);
    }

    #[test]
    fn folds_partition_samples() {
        let f = fold_assignment(11, 5, 3, 0).unwrap();
        let mut all: Vec<usize> = f.concat();
        all.sort_unstable();
        assert_eq!(all, (0..11).collect::<Vec<_>>());
        assert!(f.iter().all(|x| x.len() >= 2));
        assert!(fold_assignment(9, 5, 3, 0).is_err());
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("lasso".parse::<Method>().is_err());
    }
}
