//! Direct estimation of the differential block matrix `Δ = Θˣ − Θʸ` by a
//! group-lasso penalized quadratic loss, solved with proximal gradient
//! descent and closed-form block soft-thresholding.
//!
//! The loss is `L(Δ) = tr[½ Sʸ Δᵀ Sˣ Δ − Δᵀ(Sʸ − Sˣ)]` and the penalty is
//! `λ Σ_{j,l} ‖Δ_jl‖_F` over all `p²` blocks of size `M × M`.

use std::collections::BTreeSet;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::fpca::ScoreCovariance;
use crate::linalg;

/// An undirected graph over `p` nodes, stored as pairs `(j, l)` with `j < l`.
///
/// Nodes are 0-based here; file formats use 1-based labels.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EdgeSet {
    p: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl EdgeSet {
    pub fn empty(p: usize) -> Self {
        Self {
            p,
            edges: BTreeSet::new(),
        }
    }

    pub fn from_pairs(p: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut set = Self::empty(p);
        for (a, b) in pairs {
            set.insert(a, b)?;
        }
        Ok(set)
    }

    /// Insert `{a, b}`; order does not matter.
    pub fn insert(&mut self, a: usize, b: usize) -> Result<bool> {
        if a == b {
            return Err(Error::InvalidArgument(format!("self-loop on node {a}")));
        }
        if a >= self.p || b >= self.p {
            return Err(Error::InvalidArgument(format!(
                "edge ({a}, {b}) outside a graph of {} nodes",
                self.p
            )));
        }
        Ok(self.edges.insert((a.min(b), a.max(b))))
    }

    pub fn contains(&self, a: usize, b: usize) -> bool {
        self.edges.contains(&(a.min(b), a.max(b)))
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    /// Number of unordered node pairs, `p(p−1)/2`.
    pub fn max_edges(&self) -> usize {
        self.p * self.p.saturating_sub(1) / 2
    }

    pub fn intersection_len(&self, other: &EdgeSet) -> usize {
        self.edges.intersection(&other.edges).count()
    }
}

/// Edges `{j, l}` whose `(j, l)` or `(l, j)` block has Frobenius norm strictly
/// above `epsilon`.
pub fn edges_from_blocks(matrix: &DMatrix<f64>, m: usize, epsilon: f64) -> EdgeSet {
    let p = matrix.nrows() / m;
    let norms = linalg::block_norms(matrix, m);
    let mut set = EdgeSet::empty(p);
    for j in 0..p {
        for l in (j + 1)..p {
            if norms[(j, l)] > epsilon || norms[(l, j)] > epsilon {
                set.edges.insert((j, l));
            }
        }
    }
    set
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum StepSize {
    /// `1 / (λ_max(Sˣ) λ_max(Sʸ))`.
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FudgeConfig {
    pub lambda: f64,
    pub step: StepSize,
    pub max_iters: usize,
    /// Relative tolerance on both the objective change and the iterate change.
    pub tol: f64,
    pub epsilon: f64,
}

impl Default for FudgeConfig {
    fn default() -> Self {
        Self {
            lambda: 0.0,
            step: StepSize::Auto,
            max_iters: 2000,
            tol: 1e-8,
            epsilon: 0.0,
        }
    }
}

impl FudgeConfig {
    pub fn with_lambda(lambda: f64) -> Self {
        Self {
            lambda,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "lambda must be finite and >= 0, got {}",
                self.lambda
            )));
        }
        if let StepSize::Fixed(eta) = self.step {
            if !(eta > 0.0 && eta.is_finite()) {
                return Err(Error::InvalidArgument(format!("step size must be > 0, got {eta}")));
            }
        }
        if !(self.epsilon >= 0.0) {
            return Err(Error::InvalidArgument("epsilon must be >= 0".into()));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::InvalidArgument("tol must be >= 0".into()));
        }
        Ok(())
    }
}

/// Which blocks a restricted solve may leave nonzero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockMask {
    p: usize,
    allowed: Vec<bool>,
}

impl BlockMask {
    pub fn all(p: usize) -> Self {
        Self {
            p,
            allowed: vec![true; p * p],
        }
    }

    /// Blocks of `delta` with nonzero Frobenius norm.
    pub fn support_of(delta: &DMatrix<f64>, m: usize) -> Self {
        let p = delta.nrows() / m;
        let norms = linalg::block_norms(delta, m);
        Self {
            p,
            allowed: (0..p * p).map(|k| norms[(k / p, k % p)] > 0.0).collect(),
        }
    }

    pub fn allows(&self, j: usize, l: usize) -> bool {
        self.allowed[j * self.p + l]
    }

    pub fn count(&self) -> usize {
        self.allowed.iter().filter(|a| **a).count()
    }
}

/// The fitted differential matrix plus solver diagnostics.
#[derive(Debug, Clone)]
pub struct DiffEstimate {
    delta: DMatrix<f64>,
    p: usize,
    m: usize,
    iterations: usize,
    objective: f64,
    converged: bool,
    objective_history: Vec<f64>,
}

impl DiffEstimate {
    pub fn delta(&self) -> &DMatrix<f64> {
        &self.delta
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// Penalized objective at the returned iterate.
    pub fn objective(&self) -> f64 {
        self.objective
    }

    pub fn converged(&self) -> bool {
        self.converged
    }

    /// Penalized objective at `Δ⁰ = 0` and after every iteration.
    pub fn objective_history(&self) -> &[f64] {
        &self.objective_history
    }

    pub fn block(&self, j: usize, l: usize) -> DMatrix<f64> {
        linalg::block(&self.delta, self.m, j, l).into_owned()
    }

    pub fn block_norm(&self, j: usize, l: usize) -> f64 {
        linalg::block_norm(&self.delta, self.m, j, l)
    }

    pub fn block_norms(&self) -> DMatrix<f64> {
        linalg::block_norms(&self.delta, self.m)
    }
}

fn check_pair(sx: &DMatrix<f64>, sy: &DMatrix<f64>, delta: &DMatrix<f64>) -> Result<()> {
    let n = sx.nrows();
    if !sx.is_square() || sy.shape() != (n, n) || delta.shape() != (n, n) {
        return Err(Error::ShapeMismatch(format!(
            "Sx {:?}, Sy {:?}, Δ {:?} must all be the same square size",
            sx.shape(),
            sy.shape(),
            delta.shape()
        )));
    }
    Ok(())
}

pub fn loss(delta: &DMatrix<f64>, sx: &DMatrix<f64>, sy: &DMatrix<f64>) -> Result<f64> {
    check_pair(sx, sy, delta)?;
    let product = sx * delta * sy;
    Ok(0.5 * linalg::frob_dot(delta, &product) - linalg::frob_dot(delta, &(sy - sx)))
}

/// `∇L(Δ) = Sˣ Δ Sʸ − (Sʸ − Sˣ)`.
pub fn gradient(delta: &DMatrix<f64>, sx: &DMatrix<f64>, sy: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_pair(sx, sy, delta)?;
    Ok(sx * delta * sy - (sy - sx))
}

pub fn group_penalty(delta: &DMatrix<f64>, m: usize) -> f64 {
    linalg::block_norms(delta, m).sum()
}

/// `1 / (λ_max(Sˣ) λ_max(Sʸ))`, the reciprocal Lipschitz constant of `∇L`.
pub fn default_step_size(sx: &DMatrix<f64>, sy: &DMatrix<f64>) -> Result<f64> {
    let lipschitz = linalg::eigenvalue_range(sx).1 * linalg::eigenvalue_range(sy).1;
    step_from_lipschitz(lipschitz)
}

fn step_from_lipschitz(lipschitz: f64) -> Result<f64> {
    if !(lipschitz > 1e-15) {
        return Err(Error::DegenerateSpectrum(lipschitz));
    }
    Ok(1.0 / lipschitz)
}

/// Shrink every `M × M` block: `A_jl ← [(‖A_jl‖_F − τ)/‖A_jl‖_F]₊ A_jl`.
pub fn block_soft_threshold(a: &DMatrix<f64>, tau: f64, m: usize) -> DMatrix<f64> {
    let mut out = a.clone();
    shrink_blocks(&mut out, tau, m, None);
    out
}

fn shrink_blocks(a: &mut DMatrix<f64>, tau: f64, m: usize, mask: Option<&BlockMask>) {
    let p = a.nrows() / m;
    for l in 0..p {
        for j in 0..p {
            let mut blk = a.view_mut((j * m, l * m), (m, m));
            if mask.is_some_and(|mk| !mk.allows(j, l)) {
                blk.fill(0.0);
                continue;
            }
            let norm = blk.norm();
            if norm <= tau {
                blk.fill(0.0);
            } else if tau > 0.0 {
                blk *= (norm - tau) / norm;
            }
        }
    }
}

/// Largest block norm of `Sʸ − Sˣ`. For `λ` at or above it the solution is 0.
pub fn zero_solution_threshold(sx: &ScoreCovariance, sy: &ScoreCovariance) -> f64 {
    linalg::block_norms(&(sy.matrix() - sx.matrix()), sx.m()).max()
}

pub fn solve_fudge(sx: &ScoreCovariance, sy: &ScoreCovariance, config: &FudgeConfig) -> Result<DiffEstimate> {
    solve_fudge_restricted(sx, sy, config, None)
}

/// Proximal gradient iterations from `Δ⁰ = 0`. Blocks outside `mask` are
/// held at zero by the proximal step.
pub fn solve_fudge_restricted(
    sx: &ScoreCovariance,
    sy: &ScoreCovariance,
    config: &FudgeConfig,
    mask: Option<&BlockMask>,
) -> Result<DiffEstimate> {
    config.validate()?;
    if sx.p() != sy.p() || sx.m() != sy.m() {
        return Err(Error::ShapeMismatch(format!(
            "Sx is for p={}, M={} but Sy is for p={}, M={}",
            sx.p(),
            sx.m(),
            sy.p(),
            sy.m()
        )));
    }
    let (p, m) = (sx.p(), sx.m());
    if let Some(mk) = mask {
        if mk.p != p {
            return Err(Error::ShapeMismatch("mask size differs from p".into()));
        }
    }
    let (sxm, sym) = (sx.matrix(), sy.matrix());
    let (min_x, max_x) = linalg::eigenvalue_range(sxm);
    let (min_y, max_y) = linalg::eigenvalue_range(sym);
    if min_x < -1e-6 || min_y < -1e-6 {
        return Err(Error::InvalidInput(format!(
            "score covariances must be PSD (min eigenvalues {min_x:e}, {min_y:e})"
        )));
    }
    let eta = match config.step {
        StepSize::Auto => step_from_lipschitz(max_x * max_y)?,
        StepSize::Fixed(eta) => eta,
    };
    let lambda = config.lambda;
    let diff = sym - sxm;
    let n = p * m;

    let mut delta = DMatrix::zeros(n, n);
    let mut product = DMatrix::zeros(n, n);
    let mut objective = 0.0;
    let mut history = Vec::with_capacity(config.max_iters.min(10_000) + 1);
    history.push(objective);
    let mut converged = false;
    let mut iterations = 0;

    // Zero satisfies the optimality conditions exactly; skip the iteration so
    // rounding in the first step cannot leave a spurious block.
    if linalg::block_norms(&diff, m).max() <= lambda {
        converged = true;
    }

    while !converged && iterations < config.max_iters {
        iterations += 1;
        let grad = &product - &diff;
        let mut next = &delta - grad * eta;
        shrink_blocks(&mut next, lambda * eta, m, mask);
        let next_product = sxm * &next * sym;
        let next_objective = 0.5 * linalg::frob_dot(&next, &next_product)
            - linalg::frob_dot(&next, &diff)
            + lambda * group_penalty(&next, m);
        let step = (&next - &delta).norm();
        let obj_change = (next_objective - objective).abs();
        delta = next;
        product = next_product;
        objective = next_objective;
        history.push(objective);
        if obj_change <= config.tol * objective.abs().max(1.0)
            && step <= config.tol * delta.norm().max(1.0)
        {
            converged = true;
            break;
        }
    }

    Ok(DiffEstimate {
        delta,
        p,
        m,
        iterations,
        objective,
        converged,
        objective_history: history,
    })
}

/// First-order optimality residual of the penalized problem, maximized over
/// blocks. Zero at an exact minimizer.
pub fn kkt_residual(delta: &DMatrix<f64>, sx: &DMatrix<f64>, sy: &DMatrix<f64>, lambda: f64, m: usize) -> Result<f64> {
    let grad = gradient(delta, sx, sy)?;
    let p = delta.nrows() / m;
    let mut worst = 0.0_f64;
    for j in 0..p {
        for l in 0..p {
            let d = linalg::block(delta, m, j, l);
            let g = linalg::block(&grad, m, j, l);
            let norm = d.norm();
            let r = if norm > 0.0 {
                (g + d * (lambda / norm)).norm()
            } else {
                (g.norm() - lambda).max(0.0)
            };
            worst = worst.max(r);
        }
    }
    Ok(worst)
}

pub fn threshold_edges(estimate: &DiffEstimate, epsilon: f64) -> EdgeSet {
    edges_from_blocks(&estimate.delta, estimate.m, epsilon)
}
