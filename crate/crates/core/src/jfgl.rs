//! Joint functional graphical lasso baselines solved by ADMM.
//!
//! Each population gets its own precision estimate. The differential graph
//! is then read off the difference of the two estimates.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fpca::ScoreCovariance;
use crate::fudge::{edges_from_blocks, EdgeSet};
use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Penalty {
    /// Group lasso on each block plus a group penalty across populations.
    Gfgl,
    /// Group lasso on each block plus a Frobenius fusion of block differences.
    Ffgl,
    /// Group lasso on each block plus elementwise fusion.
    Ffgl2,
    /// Scalar fused graphical lasso that ignores the block structure.
    Fgl,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct InnerConfig {
    pub rho: f64,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for InnerConfig {
    fn default() -> Self {
        Self {
            rho: 1.0,
            max_iters: 500,
            tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct JfglConfig {
    pub penalty: Penalty,
    pub lambda1: f64,
    pub lambda2: f64,
    pub rho: f64,
    pub max_iters: usize,
    /// Bound on both the primal residual `max_q ‖Θ⁽q⁾ − Z⁽q⁾‖_F` and the dual
    /// residual `ρ max_q ‖Z⁽q⁾ − Z⁽q⁾_prev‖_F`.
    pub tol: f64,
    pub inner: InnerConfig,
}

impl Default for JfglConfig {
    fn default() -> Self {
        Self {
            penalty: Penalty::Gfgl,
            lambda1: 0.0,
            lambda2: 0.0,
            rho: 1.0,
            max_iters: 1000,
            tol: 1e-5,
            inner: InnerConfig::default(),
        }
    }
}

impl JfglConfig {
    pub fn new(penalty: Penalty, lambda1: f64, lambda2: f64) -> Self {
        Self {
            penalty,
            lambda1,
            lambda2,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [("lambda1", self.lambda1), ("lambda2", self.lambda2)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        for (name, v) in [("rho", self.rho), ("inner rho", self.inner.rho)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be > 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Score covariances and sample sizes for `Q` populations.
#[derive(Debug, Clone)]
pub struct JfglProblem {
    covariances: Vec<DMatrix<f64>>,
    sample_sizes: Vec<usize>,
    p: usize,
    m: usize,
    config: JfglConfig,
}

impl JfglProblem {
    pub fn new(covariances: &[&ScoreCovariance], sample_sizes: &[usize], config: JfglConfig) -> Result<Self> {
        let first = covariances
            .first()
            .ok_or_else(|| Error::InvalidArgument("at least one population is required".into()))?;
        let (p, m) = (first.p(), first.m());
        if covariances.iter().any(|c| c.p() != p || c.m() != m) {
            return Err(Error::ShapeMismatch("score covariances differ in p or M".into()));
        }
        let mats = covariances.iter().map(|c| c.matrix().clone()).collect();
        Self::from_matrices(mats, sample_sizes, p, m, config)
    }

    pub fn from_matrices(
        covariances: Vec<DMatrix<f64>>,
        sample_sizes: &[usize],
        p: usize,
        m: usize,
        config: JfglConfig,
    ) -> Result<Self> {
        config.validate()?;
        if covariances.is_empty() || covariances.len() != sample_sizes.len() {
            return Err(Error::InvalidArgument(format!(
                "{} covariances but {} sample sizes",
                covariances.len(),
                sample_sizes.len()
            )));
        }
        if m == 0 || covariances.iter().any(|c| c.shape() != (p * m, p * m)) {
            return Err(Error::ShapeMismatch(format!("covariances must be {0}x{0}", p * m)));
        }
        if sample_sizes.contains(&0) {
            return Err(Error::InvalidArgument("sample sizes must be positive".into()));
        }
        if config.penalty != Penalty::Gfgl && covariances.len() != 2 {
            return Err(Error::InvalidArgument(
                "fused penalties are defined for exactly two populations".into(),
            ));
        }
        if covariances.iter().any(|c| linalg::asymmetry(c) > 1e-8) {
            return Err(Error::InvalidInput("covariances must be symmetric".into()));
        }
        Ok(Self {
            covariances,
            sample_sizes: sample_sizes.to_vec(),
            p,
            m,
            config,
        })
    }

    pub fn config(&self) -> &JfglConfig {
        &self.config
    }
}

/// A symmetric positive-definite precision estimate with `M × M` blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecisionEstimate {
    theta: DMatrix<f64>,
    m: usize,
}

impl PrecisionEstimate {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.theta
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn p(&self) -> usize {
        self.theta.nrows() / self.m
    }

    pub fn block(&self, j: usize, l: usize) -> DMatrix<f64> {
        linalg::block(&self.theta, self.m, j, l).into_owned()
    }
}

#[derive(Debug, Clone)]
pub struct JfglFit {
    pub estimates: Vec<PrecisionEstimate>,
    pub iterations: usize,
    pub converged: bool,
    pub primal_residual: f64,
    pub dual_residual: f64,
    /// Inner ADMM solves that hit their iteration cap, summed over all outer steps.
    pub inner_failures: usize,
}

/// Minimizer of `−n(log det Θ − tr(SΘ)) + ρ/2 ‖Θ − Z + U‖²_F`.
pub fn theta_update(s: &DMatrix<f64>, n_q: f64, z: &DMatrix<f64>, u: &DMatrix<f64>, rho: f64) -> Result<DMatrix<f64>> {
    if !(rho > 0.0) || !(n_q > 0.0) {
        return Err(Error::InvalidArgument(format!("rho and n must be > 0 (got {rho}, {n_q})")));
    }
    let target = s + (u - z) * (rho / n_q);
    let (d, v) = linalg::sym_eigen_sorted(&target);
    let c = 4.0 * rho / n_q;
    let scaled: Vec<f64> = d
        .iter()
        .map(|&x| {
            // −x + √(x² + c), written to avoid cancellation when x ≫ 0
            let root = (x * x + c).sqrt();
            let gap = if x > 0.0 { c / (x + root) } else { root - x };
            n_q / (2.0 * rho) * gap
        })
        .collect();
    let mut vd = v.clone();
    for (k, w) in scaled.iter().enumerate() {
        vd.column_mut(k).scale_mut(*w);
    }
    Ok(linalg::symmetrize(&(vd * v.transpose())))
}

/// Closed-form prox of the GFGL penalty with scaled weights `a = λ1/ρ`, `b = λ2/ρ`.
pub fn prox_gfgl(a_list: &[DMatrix<f64>], m: usize, a: f64, b: f64) -> Vec<DMatrix<f64>> {
    let mut out: Vec<DMatrix<f64>> = a_list.to_vec();
    let Some(first) = a_list.first() else {
        return out;
    };
    let p = first.nrows() / m;
    for j in 0..p {
        for l in 0..p {
            if j == l {
                continue;
            }
            let norms: Vec<f64> = a_list.iter().map(|x| linalg::block_norm(x, m, j, l)).collect();
            let pooled = norms.iter().map(|n| (n - a).max(0.0).powi(2)).sum::<f64>().sqrt();
            let outer = if pooled > 0.0 { (1.0 - b / pooled).max(0.0) } else { 0.0 };
            for (z, norm) in out.iter_mut().zip(&norms) {
                let inner = if *norm > 0.0 { ((norm - a) / norm).max(0.0) } else { 0.0 };
                z.view_mut((j * m, l * m), (m, m)).scale_mut(inner * outer);
            }
        }
    }
    out
}

/// `argmin ½Σ‖R⁽q⁾ − D⁽q⁾‖² + b‖R⁽¹⁾ − R⁽²⁾‖_F`.
pub fn fuse_frobenius(d1: &DMatrix<f64>, d2: &DMatrix<f64>, b: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let diff = d1 - d2;
    let norm = diff.norm();
    if norm <= 2.0 * b {
        let avg = (d1 + d2) * 0.5;
        (avg.clone(), avg)
    } else {
        let shift = diff * (b / norm);
        (d1 - &shift, d2 + shift)
    }
}

/// Elementwise version: `argmin ½Σ‖R⁽q⁾ − D⁽q⁾‖² + b Σ_ab |R⁽¹⁾_ab − R⁽²⁾_ab|`.
pub fn fuse_elementwise(d1: &DMatrix<f64>, d2: &DMatrix<f64>, b: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut r1 = d1.clone();
    let mut r2 = d2.clone();
    for (x, y) in r1.iter_mut().zip(r2.iter_mut()) {
        let (u, v) = fuse_scalar(*x, *y, b);
        *x = u;
        *y = v;
    }
    (r1, r2)
}

fn fuse_scalar(x: f64, y: f64, b: f64) -> (f64, f64) {
    if x > y + 2.0 * b {
        (x - b, y + b)
    } else if x < y - 2.0 * b {
        (x + b, y - b)
    } else {
        let avg = 0.5 * (x + y);
        (avg, avg)
    }
}

fn soft(x: f64, t: f64) -> f64 {
    x.signum() * (x.abs() - t).max(0.0)
}

fn group_shrink(c: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
    let norm = c.norm();
    if norm <= t {
        DMatrix::zeros(c.nrows(), c.ncols())
    } else {
        c * ((norm - t) / norm)
    }
}

#[derive(Debug, Clone)]
pub struct PairProx {
    pub z1: DMatrix<f64>,
    pub z2: DMatrix<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl PairProx {
    fn exact((z1, z2): (DMatrix<f64>, DMatrix<f64>)) -> Self {
        Self {
            z1,
            z2,
            iterations: 0,
            converged: true,
        }
    }
}

type FuseRule = fn(&DMatrix<f64>, &DMatrix<f64>, f64) -> (DMatrix<f64>, DMatrix<f64>);

fn pair_admm(b1: &DMatrix<f64>, b2: &DMatrix<f64>, a: f64, b: f64, inner: &InnerConfig, fuse: FuseRule) -> PairProx {
    let (r, c) = b1.shape();
    let rho = inner.rho;
    let mut w = [DMatrix::identity(r, c), DMatrix::identity(r, c)];
    let mut rr = [DMatrix::zeros(r, c), DMatrix::zeros(r, c)];
    let mut v = [DMatrix::zeros(r, c), DMatrix::zeros(r, c)];
    let bs = [b1, b2];
    let w_tau = a / (1.0 + rho);
    let r_tau = b / rho;
    for it in 1..=inner.max_iters {
        for q in 0..2 {
            let cq = (bs[q] + (&rr[q] - &v[q]) * rho) / (1.0 + rho);
            w[q] = group_shrink(&cq, w_tau);
        }
        let (n1, n2) = fuse(&(&w[0] + &v[0]), &(&w[1] + &v[1]), r_tau);
        let dual = rho * ((&n1 - &rr[0]).norm_squared() + (&n2 - &rr[1]).norm_squared()).sqrt();
        rr = [n1, n2];
        for q in 0..2 {
            v[q] += &w[q] - &rr[q];
        }
        let primal = ((&w[0] - &rr[0]).norm_squared() + (&w[1] - &rr[1]).norm_squared()).sqrt();
        if primal < inner.tol && dual < inner.tol {
            return snap_fused(w, &rr, it, true);
        }
    }
    snap_fused(w, &rr, inner.max_iters, false)
}

/// `W` carries the exact zeros and `R` the exact fusion. Entries fused in
/// `R` get the average of the two `W` entries so both structures survive.
fn snap_fused(w: [DMatrix<f64>; 2], r: &[DMatrix<f64>; 2], iterations: usize, converged: bool) -> PairProx {
    let [mut z1, mut z2] = w;
    for k in 0..z1.len() {
        if r[0][k] == r[1][k] {
            let avg = 0.5 * (z1[k] + z2[k]);
            z1[k] = avg;
            z2[k] = avg;
        }
    }
    PairProx {
        z1,
        z2,
        iterations,
        converged,
    }
}

/// Prox of `a(‖Z⁽¹⁾‖_F + ‖Z⁽²⁾‖_F) + b‖Z⁽¹⁾ − Z⁽²⁾‖_F` for one block pair.
pub fn prox_ffgl_pair(a1: &DMatrix<f64>, a2: &DMatrix<f64>, a: f64, b: f64, inner: &InnerConfig) -> PairProx {
    if a == 0.0 {
        PairProx::exact(fuse_frobenius(a1, a2, b))
    } else {
        pair_admm(a1, a2, a, b, inner, fuse_frobenius)
    }
}

/// Prox of `a(‖Z⁽¹⁾‖_F + ‖Z⁽²⁾‖_F) + b Σ_ab |Z⁽¹⁾_ab − Z⁽²⁾_ab|` for one block pair.
pub fn prox_ffgl2_pair(a1: &DMatrix<f64>, a2: &DMatrix<f64>, a: f64, b: f64, inner: &InnerConfig) -> PairProx {
    if a == 0.0 {
        PairProx::exact(fuse_elementwise(a1, a2, b))
    } else if a1.len() == 1 {
        // scalar fused lasso: fuse first, then soft-threshold each entry
        let (x, y) = fuse_scalar(a1[0], a2[0], b);
        PairProx::exact((
            DMatrix::from_element(1, 1, soft(x, a)),
            DMatrix::from_element(1, 1, soft(y, a)),
        ))
    } else {
        pair_admm(a1, a2, a, b, inner, fuse_elementwise)
    }
}

/// Apply a pairwise prox to every block; returns the two matrices and the
/// number of block solves that did not converge.
fn prox_pairwise(
    a1: &DMatrix<f64>,
    a2: &DMatrix<f64>,
    m: usize,
    a: f64,
    b: f64,
    inner: &InnerConfig,
    elementwise: bool,
) -> (DMatrix<f64>, DMatrix<f64>, usize) {
    let p = a1.nrows() / m;
    let solved: Vec<(usize, usize, PairProx)> = (0..p * p)
        .into_par_iter()
        .map(|k| {
            let (j, l) = (k / p, k % p);
            let x = linalg::block(a1, m, j, l).into_owned();
            let y = linalg::block(a2, m, j, l).into_owned();
            let weight = if j == l { 0.0 } else { a };
            let res = if elementwise {
                prox_ffgl2_pair(&x, &y, weight, b, inner)
            } else {
                prox_ffgl_pair(&x, &y, weight, b, inner)
            };
            (j, l, res)
        })
        .collect();
    let mut z1 = DMatrix::zeros(a1.nrows(), a1.ncols());
    let mut z2 = DMatrix::zeros(a1.nrows(), a1.ncols());
    let mut failures = 0;
    for (j, l, res) in solved {
        z1.view_mut((j * m, l * m), (m, m)).copy_from(&res.z1);
        z2.view_mut((j * m, l * m), (m, m)).copy_from(&res.z2);
        failures += usize::from(!res.converged);
    }
    (z1, z2, failures)
}

/// Z-step of the outer ADMM for the configured penalty.
fn prox_penalty(a_list: &[DMatrix<f64>], m: usize, config: &JfglConfig) -> (Vec<DMatrix<f64>>, usize) {
    let a = config.lambda1 / config.rho;
    let b = config.lambda2 / config.rho;
    match config.penalty {
        Penalty::Gfgl => (prox_gfgl(a_list, m, a, b), 0),
        Penalty::Ffgl | Penalty::Ffgl2 | Penalty::Fgl => {
            let (block, elementwise) = match config.penalty {
                Penalty::Ffgl => (m, false),
                Penalty::Ffgl2 => (m, true),
                _ => (1, true),
            };
            let (z1, z2, failures) = prox_pairwise(&a_list[0], &a_list[1], block, a, b, &config.inner, elementwise);
            (vec![z1, z2], failures)
        }
    }
}

fn is_positive_definite(a: &DMatrix<f64>) -> bool {
    a.clone().cholesky().is_some()
}

pub fn solve_jfgl(problem: &JfglProblem) -> Result<JfglFit> {
    let cfg = &problem.config;
    let dim = problem.p * problem.m;
    let q_count = problem.covariances.len();
    let mut theta = vec![DMatrix::<f64>::identity(dim, dim); q_count];
    let mut z = vec![DMatrix::<f64>::zeros(dim, dim); q_count];
    let mut u = z.clone();
    let mut iterations = 0;
    let mut converged = false;
    let mut inner_failures = 0;
    let (mut primal, mut dual) = (f64::INFINITY, f64::INFINITY);

    while iterations < cfg.max_iters {
        iterations += 1;
        for q in 0..q_count {
            theta[q] = theta_update(
                &problem.covariances[q],
                problem.sample_sizes[q] as f64,
                &z[q],
                &u[q],
                cfg.rho,
            )?;
        }
        let a_list: Vec<DMatrix<f64>> = theta.iter().zip(&u).map(|(t, u)| t + u).collect();
        let (z_new, failures) = prox_penalty(&a_list, problem.m, cfg);
        inner_failures += failures;
        dual = cfg.rho
            * z_new
                .iter()
                .zip(&z)
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max);
        z = z_new;
        primal = 0.0;
        for q in 0..q_count {
            let gap = &theta[q] - &z[q];
            primal = primal.max(gap.norm());
            u[q] += gap;
        }
        if primal < cfg.tol && dual < cfg.tol {
            converged = true;
            break;
        }
    }

    let estimates = z
        .iter()
        .zip(&theta)
        .map(|(zq, tq)| {
            let zs = linalg::symmetrize(zq);
            let theta = if is_positive_definite(&zs) { zs } else { linalg::symmetrize(tq) };
            PrecisionEstimate { theta, m: problem.m }
        })
        .collect();
    Ok(JfglFit {
        estimates,
        iterations,
        converged,
        primal_residual: primal,
        dual_residual: dual,
        inner_failures,
    })
}

/// Edges where the `(j, l)` or `(l, j)` block of `Θ̂ˣ − Θ̂ʸ` exceeds `epsilon`.
pub fn jfgl_diff_edges(theta_x: &PrecisionEstimate, theta_y: &PrecisionEstimate, epsilon: f64) -> Result<EdgeSet> {
    if theta_x.theta.shape() != theta_y.theta.shape() || theta_x.m != theta_y.m {
        return Err(Error::ShapeMismatch("precision estimates differ in shape".into()));
    }
    Ok(edges_from_blocks(&(&theta_x.theta - &theta_y.theta), theta_x.m, epsilon))
}
