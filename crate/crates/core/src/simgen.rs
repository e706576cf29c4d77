//! Synthetic two-population functional data with known differential graphs.
//!
//! Curves are `X_ij(t) = Σ_k δ_{ijk} b′_k(t)` over the disjoint cosine
//! generator basis, with stacked coefficients drawn from `N(0, Ω⁻¹)`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::curvefit::{Curve, RawDataset};
use crate::error::{Error, Result};
use crate::fudge::{edges_from_blocks, EdgeSet};
use crate::funcbasis::{BasisSystem, Domain};
use crate::linalg;

/// Margin added on top of the most negative eigenvalue when shifting.
pub const PD_MARGIN: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    /// Power-law graph with hub perturbations.
    #[serde(alias = "M1")]
    M1,
    /// Banded graph plus four fixed differential edges.
    #[serde(alias = "M2")]
    M2,
    /// Dense random graph plus a few added edges.
    #[serde(alias = "M3")]
    M3,
}

impl Model {
    /// Smallest node count the construction supports.
    pub fn min_p(&self) -> usize {
        match self {
            Model::M1 => 3,
            Model::M2 => 7,
            Model::M3 => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub model: Model,
    pub p: usize,
    #[serde(default = "defaults::m")]
    pub m: usize,
    #[serde(default = "defaults::n")]
    pub n: usize,
    #[serde(default = "defaults::t")]
    pub t: usize,
    #[serde(default = "defaults::noise_sd")]
    pub noise_sd: f64,
    #[serde(default)]
    pub seed: u64,
}

mod defaults {
    pub fn m() -> usize {
        5
    }
    pub fn n() -> usize {
        100
    }
    pub fn t() -> usize {
        200
    }
    pub fn noise_sd() -> f64 {
        0.5
    }
}

impl SimConfig {
    pub fn new(model: Model, p: usize, seed: u64) -> Self {
        Self {
            model,
            p,
            m: defaults::m(),
            n: defaults::n(),
            t: defaults::t(),
            noise_sd: defaults::noise_sd(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p == 0 || self.m == 0 || self.n == 0 || self.t < 2 {
            return Err(Error::InvalidArgument(format!(
                "need p, m, n >= 1 and T >= 2 (got p={}, m={}, n={}, T={})",
                self.p, self.m, self.n, self.t
            )));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(Error::InvalidArgument(format!("noise sd must be >= 0, got {}", self.noise_sd)));
        }
        if self.p < self.model.min_p() {
            return Err(Error::InvalidArgument(format!(
                "{:?} needs p >= {}, got {}",
                self.model,
                self.model.min_p(),
                self.p
            )));
        }
        Ok(())
    }
}

/// Precision matrices of the generating coefficients for both populations.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecisionPair {
    pub omega_x: DMatrix<f64>,
    pub omega_y: DMatrix<f64>,
    pub p: usize,
    pub m: usize,
    /// The diagonal shift applied to both matrices.
    pub shift: f64,
}

/// Deterministic 64-bit seed for a sub-stream, by splitmix64 mixing.
pub fn stream_seed(base: u64, stream: &[u64]) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    stream.iter().fold(mix(base), |acc, &s| mix(acc ^ mix(s)))
}

pub fn rng_for(base: u64, stream: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_seed(base, stream))
}

pub fn disjoint_cosine_basis(m: usize) -> Result<BasisSystem> {
    BasisSystem::disjoint_cosine(m)
}

fn set_pair(a: &mut DMatrix<f64>, m: usize, j: usize, l: usize, blk: &DMatrix<f64>) {
    a.view_mut((j * m, l * m), (m, m)).copy_from(blk);
    a.view_mut((l * m, j * m), (m, m)).copy_from(&blk.transpose());
}

fn add_pair(a: &mut DMatrix<f64>, m: usize, j: usize, l: usize, blk: &DMatrix<f64>) {
    let mut v = a.view_mut((j * m, l * m), (m, m));
    v += blk;
    let mut w = a.view_mut((l * m, j * m), (m, m));
    w += blk.transpose();
}

/// `W_kk′ = 0` when `|k − k′| ≤ band`, `c` otherwise.
pub fn banded_perturbation(m: usize, band: usize, c: f64) -> DMatrix<f64> {
    DMatrix::from_fn(m, m, |k, kk| if k.abs_diff(kk) <= band { 0.0 } else { c })
}

/// Shift both matrices by the same `δI` so both have minimum eigenvalue at
/// least [`PD_MARGIN`].
fn shift_to_pd(omega_x: DMatrix<f64>, omega_y: DMatrix<f64>, p: usize, m: usize) -> PrecisionPair {
    let lx = linalg::eigenvalue_range(&omega_x).0;
    let ly = linalg::eigenvalue_range(&omega_y).0;
    let shift = lx.min(0.0).abs().max(ly.min(0.0).abs()) + PD_MARGIN;
    let id = DMatrix::<f64>::identity(p * m, p * m) * shift;
    PrecisionPair {
        omega_x: omega_x + &id,
        omega_y: omega_y + id,
        p,
        m,
        shift,
    }
}

/// Uniform on `[-0.5, -0.2] ∪ [0.2, 0.5]`.
fn signed_uniform(rng: &mut impl Rng) -> f64 {
    let mag = rng.random_range(0.2..=0.5);
    if rng.random_bool(0.5) {
        mag
    } else {
        -mag
    }
}

/// Preferential attachment graph with exactly `edges` edges. Each new node
/// links to earlier nodes with probability proportional to degree + 1.
fn preferential_attachment(p: usize, edges: usize, rng: &mut impl Rng) -> Result<EdgeSet> {
    let mut g = EdgeSet::empty(p);
    let mut degree = vec![0usize; p];
    let mut remaining = edges;
    for v in 1..p {
        let left = p - v;
        let k = v.min(remaining.div_ceil(left));
        let mut chosen: Vec<usize> = Vec::with_capacity(k);
        for _ in 0..k {
            let total: usize = (0..v).filter(|u| !chosen.contains(u)).map(|u| degree[u] + 1).sum();
            let mut r = rng.random_range(0..total);
            let pick = (0..v)
                .filter(|u| !chosen.contains(u))
                .find(|&u| {
                    let w = degree[u] + 1;
                    if r < w {
                        true
                    } else {
                        r -= w;
                        false
                    }
                })
                .expect("weights cover the draw");
            chosen.push(pick);
        }
        for &u in &chosen {
            g.insert(u, v)?;
            degree[u] += 1;
            degree[v] += 1;
        }
        remaining -= k;
    }
    if remaining > 0 {
        let free: Vec<(usize, usize)> = (0..p)
            .flat_map(|a| ((a + 1)..p).map(move |b| (a, b)))
            .filter(|&(a, b)| !g.contains(a, b))
            .collect();
        for idx in rand::seq::index::sample(rng, free.len(), remaining.min(free.len())) {
            let (a, b) = free[idx];
            g.insert(a, b)?;
        }
    }
    Ok(g)
}

/// Off-diagonal scale `1/⌈p/30 + 1⌉`, i.e. 1/2, 1/3, 1/4, 1/5 at p = 30, 60, 90, 120.
pub fn model1_scale(p: usize) -> f64 {
    1.0 / (p as f64 / 30.0 + 1.0).ceil()
}

pub fn model1_edge_count(p: usize) -> usize {
    (p as f64 * (p as f64 - 1.0) / 10.0).round() as usize
}

/// Support graph of `Ωˣ` for Model 1 (before any perturbation).
pub fn model1_graph(p: usize, seed: u64) -> Result<EdgeSet> {
    let mut rng = rng_for(seed, &[1]);
    preferential_attachment(p, model1_edge_count(p), &mut rng)
}

pub fn gen_model1(p: usize, m: usize, seed: u64) -> Result<PrecisionPair> {
    if p < 3 {
        return Err(Error::InvalidArgument(format!("Model 1 needs p >= 3 to pick two hubs, got {p}")));
    }
    if m == 0 {
        return Err(Error::InvalidArgument("m must be >= 1".into()));
    }
    let graph = model1_graph(p, seed)?;
    let mut rng = rng_for(seed, &[2]);
    let scale = model1_scale(p);
    let dim = p * m;
    let id = DMatrix::<f64>::identity(m, m);

    let mut raw = DMatrix::<f64>::zeros(dim, dim);
    for (j, l) in graph.iter() {
        let upper = signed_uniform(&mut rng) * scale;
        let lower = signed_uniform(&mut rng) * scale;
        raw.view_mut((j * m, l * m), (m, m)).copy_from(&(&id * upper));
        raw.view_mut((l * m, j * m), (m, m)).copy_from(&(&id * lower));
    }
    for j in 0..p {
        raw.view_mut((j * m, j * m), (m, m)).copy_from(&id);
    }
    let omega_x = linalg::symmetrize(&raw);

    let mut degree = vec![0usize; p];
    for (j, l) in graph.iter() {
        degree[j] += 1;
        degree[l] += 1;
    }
    let mut nodes: Vec<usize> = (0..p).collect();
    nodes.sort_by(|&a, &b| degree[b].cmp(&degree[a]).then(a.cmp(&b)));

    let mut selected = EdgeSet::empty(p);
    for &hub in &nodes[..2] {
        let mut incident: Vec<(usize, usize, f64)> = graph
            .iter()
            .filter(|&(a, b)| a == hub || b == hub)
            .map(|(a, b)| (a, b, linalg::block_norm(&omega_x, m, a, b)))
            .collect();
        incident.sort_by(|x, y| y.2.total_cmp(&x.2).then((x.0, x.1).cmp(&(y.0, y.1))));
        let take = (incident.len() as f64 * 0.2).ceil() as usize;
        for &(a, b, _) in &incident[..take] {
            selected.insert(a, b)?;
        }
    }

    let mut omega_y = omega_x.clone();
    for (j, l) in selected.iter() {
        let w = banded_perturbation(m, 2, signed_uniform(&mut rng));
        add_pair(&mut omega_y, m, j, l, &w);
    }
    Ok(shift_to_pd(omega_x, omega_y, p, m))
}

/// The fixed differential edges of Model 2, 0-based: `(j, j+3)` for `j = 0..4`.
pub fn model2_edges() -> [(usize, usize); 4] {
    [(0, 3), (1, 4), (2, 5), (3, 6)]
}

pub fn gen_model2(p: usize, m: usize) -> Result<PrecisionPair> {
    if p < 7 {
        return Err(Error::InvalidArgument(format!("Model 2 needs p >= 7, got {p}")));
    }
    if m == 0 {
        return Err(Error::InvalidArgument("m must be >= 1".into()));
    }
    let dim = p * m;
    let id = DMatrix::<f64>::identity(m, m);
    let mut omega_x = DMatrix::<f64>::zeros(dim, dim);
    for j in 0..p {
        set_pair(&mut omega_x, m, j, j, &id);
        if j + 1 < p {
            set_pair(&mut omega_x, m, j, j + 1, &(&id * 0.6));
        }
        if j + 2 < p {
            set_pair(&mut omega_x, m, j, j + 2, &(&id * 0.4));
        }
    }
    let mut omega_y = omega_x.clone();
    let w = DMatrix::from_element(m, m, 0.1);
    for (j, l) in model2_edges() {
        set_pair(&mut omega_y, m, j, l, &w);
    }
    Ok(shift_to_pd(omega_x, omega_y, p, m))
}

/// Number of added edges: 3, 4, 5, 6 at p = 30, 60, 90, 120.
pub fn model3_added_edges(p: usize) -> usize {
    2 + p.div_ceil(30)
}

/// Perturbation level: 2/5, 4/15, 1/5, 4/25 at p = 30, 60, 90, 120.
pub fn model3_level(p: usize) -> f64 {
    24.0 / (p as f64 + 30.0)
}

pub const MODEL3_EDGE_PROB: f64 = 0.8;

pub fn gen_model3(p: usize, m: usize, seed: u64) -> Result<PrecisionPair> {
    if p < 4 {
        return Err(Error::InvalidArgument(format!("Model 3 needs p >= 4, got {p}")));
    }
    if m == 0 {
        return Err(Error::InvalidArgument("m must be >= 1".into()));
    }
    let mut rng = rng_for(seed, &[3]);
    let dim = p * m;
    let id = DMatrix::<f64>::identity(m, m);
    let s = model3_added_edges(p);
    // Small graphs can come out too dense to add `s` edges; redraw from the
    // same stream until they fit. p >= 4 guarantees p(p-1)/2 > s.
    let (omega_x, non_edges) = loop {
        let mut omega_x = DMatrix::<f64>::zeros(dim, dim);
        let mut non_edges = Vec::new();
        for j in 0..p {
            set_pair(&mut omega_x, m, j, j, &id);
            for l in (j + 1)..p {
                if rng.random_bool(MODEL3_EDGE_PROB) {
                    set_pair(&mut omega_x, m, j, l, &(&id * 0.1));
                } else {
                    non_edges.push((j, l));
                }
            }
        }
        if non_edges.len() >= s {
            break (omega_x, non_edges);
        }
    };
    let mut omega_y = omega_x.clone();
    let w = banded_perturbation(m, 1, model3_level(p));
    for idx in rand::seq::index::sample(&mut rng, non_edges.len(), s) {
        let (j, l) = non_edges[idx];
        set_pair(&mut omega_y, m, j, l, &w);
    }
    Ok(shift_to_pd(omega_x, omega_y, p, m))
}

pub fn generate_pair(model: Model, p: usize, m: usize, seed: u64) -> Result<PrecisionPair> {
    match model {
        Model::M1 => gen_model1(p, m, seed),
        Model::M2 => gen_model2(p, m),
        Model::M3 => gen_model3(p, m, seed),
    }
}

pub fn true_diff_edges(pair: &PrecisionPair) -> EdgeSet {
    edges_from_blocks(&(&pair.omega_x - &pair.omega_y), pair.m, 0.0)
}

/// Evenly spaced grid on `[0, 1]` including both endpoints.
pub fn unit_grid(t: usize) -> Vec<f64> {
    match t {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..t).map(|k| k as f64 / (t - 1) as f64).collect(),
    }
}

/// Draw `n` coefficient vectors from `N(0, Ω⁻¹)`, build the node curves and
/// observe them with additive Gaussian noise on `T` grid points.
pub fn sample_functional_data(
    omega: &DMatrix<f64>,
    basis: &BasisSystem,
    n: usize,
    t: usize,
    noise_sd: f64,
    seed: u64,
) -> Result<RawDataset> {
    let m = basis.size();
    let dim = omega.nrows();
    if !omega.is_square() || dim % m != 0 || dim == 0 {
        return Err(Error::ShapeMismatch(format!(
            "precision matrix {:?} is not (p·{m})-square",
            omega.shape()
        )));
    }
    if !(noise_sd >= 0.0 && noise_sd.is_finite()) {
        return Err(Error::InvalidArgument(format!("noise sd must be >= 0, got {noise_sd}")));
    }
    let p = dim / m;
    let chol = omega
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Factorization("precision matrix is not positive definite".into()))?;
    let lt = chol.l().transpose();

    let times = unit_grid(t);
    let design = DMatrix::from_fn(t, m, |r, c| basis.eval(times[r]).map(|b| b[c]).unwrap_or(0.0));
    let noise = Normal::new(0.0, noise_sd).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut curves = Vec::with_capacity(n * p);
    for _ in 0..n {
        let z = DVector::from_fn(dim, |_, _| StandardNormal.sample(&mut rng));
        let coef = lt
            .solve_upper_triangular(&z)
            .ok_or_else(|| Error::Factorization("singular triangular factor".into()))?;
        for j in 0..p {
            let local = coef.rows(j * m, m);
            let clean = &design * local;
            let values = clean.iter().map(|v| v + noise.sample(&mut rng)).collect();
            curves.push(Curve::new(times.clone(), values)?);
        }
    }
    RawDataset::new(p, n, Domain::unit(), curves)
}

/// One simulated replicate: the generating matrices and both observed datasets.
#[derive(Debug, Clone)]
pub struct Replicate {
    pub pair: PrecisionPair,
    pub truth: EdgeSet,
    pub x: RawDataset,
    pub y: RawDataset,
}

/// Replicate `r` of `config`. The graph for Models 1 and 3 is redrawn per
/// replicate; Model 2 is fixed.
pub fn simulate(config: &SimConfig, replicate: u64) -> Result<Replicate> {
    config.validate()?;
    let graph_seed = stream_seed(config.seed, &[replicate, 0]);
    let pair = generate_pair(config.model, config.p, config.m, graph_seed)?;
    let basis = Arc::new(disjoint_cosine_basis(config.m)?);
    let x = sample_functional_data(
        &pair.omega_x,
        &basis,
        config.n,
        config.t,
        config.noise_sd,
        stream_seed(config.seed, &[replicate, 1]),
    )?;
    let y = sample_functional_data(
        &pair.omega_y,
        &basis,
        config.n,
        config.t,
        config.noise_sd,
        stream_seed(config.seed, &[replicate, 2]),
    )?;
    let truth = true_diff_edges(&pair);
    Ok(Replicate { pair, truth, x, y })
}
