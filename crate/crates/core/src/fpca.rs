//! Pooled covariance kernels, functional PCA, projection scores and score
//! covariance matrices.
//!
//! Kernels live in coefficient space: `K(s, t) = b(s)ᵀ K b(t)`. Because the
//! analysis basis is orthonormal, the integral eigenproblem of the kernel is
//! the matrix eigenproblem of `K`, and projection scores are dot products.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::curvefit::FittedSample;
use crate::error::{Error, Result};
use crate::funcbasis::{same_basis, BasisSystem, FunctionRep};
use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Population {
    X,
    Y,
}

/// Symmetric PSD coefficient matrix of one node's pooled covariance kernel.
#[derive(Debug, Clone)]
pub struct CovKernel {
    node: usize,
    basis: Arc<BasisSystem>,
    matrix: DMatrix<f64>,
}

impl CovKernel {
    pub fn new(node: usize, basis: Arc<BasisSystem>, matrix: DMatrix<f64>) -> Result<Self> {
        let l = basis.size();
        if matrix.shape() != (l, l) {
            return Err(Error::ShapeMismatch(format!(
                "kernel matrix {:?} for basis of size {l}",
                matrix.shape()
            )));
        }
        if linalg::asymmetry(&matrix) > 1e-10 {
            return Err(Error::InvalidInput("kernel matrix is not symmetric".into()));
        }
        if l > 0 && linalg::eigenvalue_range(&matrix).0 < -1e-8 {
            return Err(Error::InvalidInput(
                "kernel matrix is not positive semidefinite".into(),
            ));
        }
        Ok(Self {
            node,
            basis,
            matrix,
        })
    }

    pub fn node(&self) -> usize {
        self.node
    }

    pub fn basis(&self) -> &Arc<BasisSystem> {
        &self.basis
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }
}

/// `K = (1/n_X) Σ βˣβˣᵀ + (1/n_Y) Σ βʸβʸᵀ` for node `node`. No mean is removed.
pub fn estimate_cov_kernel(
    fitted_x: &FittedSample,
    fitted_y: &FittedSample,
    node: usize,
) -> Result<CovKernel> {
    if !fitted_x.same_basis_as(fitted_y) {
        return Err(Error::BasisMismatch);
    }
    if node >= fitted_x.p() || node >= fitted_y.p() {
        return Err(Error::InvalidArgument(format!("node {node} out of range")));
    }
    let l = fitted_x.basis().size();
    let mut k = DMatrix::zeros(l, l);
    for fs in [fitted_x, fitted_y] {
        let mut part = DMatrix::zeros(l, l);
        for i in 0..fs.n() {
            let b = fs.coeffs(i, node);
            part.ger(1.0, b, b, 1.0);
        }
        k += part / fs.n() as f64;
    }
    CovKernel::new(node, fitted_x.basis().clone(), linalg::symmetrize(&k))
}

/// Leading eigenpairs of one node's kernel.
#[derive(Debug, Clone)]
pub struct FpcaResult {
    node: usize,
    eigenvalues: Vec<f64>,
    eigenfunctions: Vec<FunctionRep>,
}

impl FpcaResult {
    pub fn node(&self) -> usize {
        self.node
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenfunctions(&self) -> &[FunctionRep] {
        &self.eigenfunctions
    }

    pub fn m(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn basis(&self) -> &Arc<BasisSystem> {
        self.eigenfunctions[0].basis()
    }

    /// Eigenfunction coefficients as the columns of an `L × M` matrix.
    pub fn loadings(&self) -> DMatrix<f64> {
        let cols: Vec<_> = self.eigenfunctions.iter().map(|f| f.coeffs().clone()).collect();
        DMatrix::from_columns(&cols)
    }

    /// Replace the eigenfunctions by `loadings · rotation` for an orthogonal
    /// `M × M` rotation. Spans (and therefore all block norms downstream) are
    /// unchanged.
    pub fn rotated(&self, rotation: &DMatrix<f64>) -> Result<FpcaResult> {
        let m = self.m();
        if rotation.shape() != (m, m) {
            return Err(Error::ShapeMismatch("rotation must be M × M".into()));
        }
        let rotated = self.loadings() * rotation;
        let eigenfunctions = rotated
            .column_iter()
            .map(|c| FunctionRep::new(self.basis().clone(), c.into_owned()))
            .collect::<Result<Vec<_>>>()?;
        Ok(FpcaResult {
            eigenfunctions,
            ..self.clone()
        })
    }
}

/// Top-`m` eigendecomposition of the kernel matrix.
///
/// Eigenvectors are signed so their largest-magnitude entry is positive, and
/// ordered by eigenvalue then lexicographically for determinism.
pub fn fpca_decompose(kernel: &CovKernel, m: usize) -> Result<FpcaResult> {
    kernel.basis.require_orthonormal()?;
    let l = kernel.basis.size();
    if m == 0 || m > l {
        return Err(Error::InvalidArgument(format!(
            "need 1 <= M <= L, got M={m}, L={l}"
        )));
    }
    let (values, vectors) = linalg::sym_eigen_sorted(&kernel.matrix);
    let mut pairs: Vec<(f64, DVector<f64>)> = values
        .into_iter()
        .zip(vectors.column_iter())
        .map(|(lambda, v)| {
            let mut v = v.into_owned();
            apply_sign_convention(&mut v);
            let lambda = if lambda < 0.0 && lambda > -1e-10 { 0.0 } else { lambda };
            (lambda, v)
        })
        .collect();
    pairs.sort_by(|(la, va), (lb, vb)| {
        lb.total_cmp(la).then_with(|| {
            va.iter()
                .zip(vb.iter())
                .map(|(a, b)| a.total_cmp(b))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
    });
    pairs.truncate(m);
    let mut eigenvalues = Vec::with_capacity(m);
    let mut eigenfunctions = Vec::with_capacity(m);
    for (lambda, v) in pairs {
        eigenvalues.push(lambda);
        eigenfunctions.push(FunctionRep::new(kernel.basis.clone(), v)?);
    }
    Ok(FpcaResult {
        node: kernel.node,
        eigenvalues,
        eigenfunctions,
    })
}

fn apply_sign_convention(v: &mut DVector<f64>) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.neg_mut();
    }
}

/// Projection scores `a[i][j][k] = ⟨X̂_ij, φ̂_jk⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    population: Population,
    n: usize,
    p: usize,
    m: usize,
    data: Vec<f64>,
}

impl ScoreMatrix {
    pub fn from_vec(population: Population, n: usize, p: usize, m: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * p * m {
            return Err(Error::ShapeMismatch(format!(
                "score data of length {} for n={n}, p={p}, M={m}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite score".into()));
        }
        Ok(Self {
            population,
            n,
            p,
            m,
            data,
        })
    }

    pub fn population(&self) -> Population {
        self.population
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn get(&self, sample: usize, node: usize, k: usize) -> f64 {
        self.data[(sample * self.p + node) * self.m + k]
    }

    /// Stacked score vector of one sample, length `pM`.
    pub fn sample_vector(&self, sample: usize) -> DVector<f64> {
        let w = self.p * self.m;
        DVector::from_column_slice(&self.data[sample * w..(sample + 1) * w])
    }

    pub fn subset(&self, samples: &[usize]) -> ScoreMatrix {
        let w = self.p * self.m;
        let data = samples
            .iter()
            .flat_map(|&i| self.data[i * w..(i + 1) * w].iter().copied())
            .collect();
        ScoreMatrix {
            n: samples.len(),
            data,
            ..self.clone()
        }
    }

    /// Apply the block-diagonal linear map `a_ij ← U_j a_ij`.
    pub fn transform_blocks(&self, maps: &[DMatrix<f64>]) -> Result<ScoreMatrix> {
        if maps.len() != self.p || maps.iter().any(|u| u.shape() != (self.m, self.m)) {
            return Err(Error::ShapeMismatch("need one M × M map per node".into()));
        }
        let mut data = self.data.clone();
        for i in 0..self.n {
            for (j, u) in maps.iter().enumerate() {
                let start = (i * self.p + j) * self.m;
                let a = DVector::from_column_slice(&self.data[start..start + self.m]);
                data[start..start + self.m].copy_from_slice((u * a).as_slice());
            }
        }
        Ok(ScoreMatrix { data, ..self.clone() })
    }
}

pub fn compute_scores(
    fitted: &FittedSample,
    fpca: &[FpcaResult],
    population: Population,
) -> Result<ScoreMatrix> {
    let p = fitted.p();
    if fpca.len() != p {
        return Err(Error::ShapeMismatch(format!(
            "{} FPCA results for {p} nodes",
            fpca.len()
        )));
    }
    let m = fpca[0].m();
    if fpca.iter().any(|f| f.m() != m) {
        return Err(Error::InvalidArgument("all nodes must use the same M".into()));
    }
    if fpca.iter().any(|f| !same_basis(f.basis(), fitted.basis())) {
        return Err(Error::BasisMismatch);
    }
    fitted.basis().require_orthonormal()?;
    let loadings_t: Vec<DMatrix<f64>> = fpca.iter().map(|f| f.loadings().transpose()).collect();
    let mut data = vec![0.0; fitted.n() * p * m];
    data.par_chunks_mut(p * m).enumerate().for_each(|(i, row)| {
        for j in 0..p {
            let a = &loadings_t[j] * fitted.coeffs(i, j);
            row[j * m..(j + 1) * m].copy_from_slice(a.as_slice());
        }
    });
    ScoreMatrix::from_vec(population, fitted.n(), p, m, data)
}

/// `S = (1/n) Σ a_i a_iᵀ` over stacked `pM` score vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreCovariance {
    population: Population,
    p: usize,
    m: usize,
    matrix: DMatrix<f64>,
}

impl ScoreCovariance {
    /// Wrap an existing `pM × pM` matrix (for instance a hand-built or
    /// pointwise covariance). The matrix must be symmetric.
    pub fn from_matrix(population: Population, p: usize, m: usize, matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.shape() != (p * m, p * m) || p == 0 || m == 0 {
            return Err(Error::ShapeMismatch(format!(
                "covariance {:?} does not match p={p}, M={m}",
                matrix.shape()
            )));
        }
        let scale = matrix.amax().max(1.0);
        if linalg::asymmetry(&matrix) > 1e-10 * scale {
            return Err(Error::InvalidInput("score covariance is not symmetric".into()));
        }
        Ok(Self {
            population,
            p,
            m,
            matrix,
        })
    }

    pub fn population(&self) -> Population {
        self.population
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn block(&self, j: usize, l: usize) -> DMatrix<f64> {
        linalg::block(&self.matrix, self.m, j, l).into_owned()
    }
}

pub fn score_covariance(scores: &ScoreMatrix) -> Result<ScoreCovariance> {
    if scores.n() == 0 {
        return Err(Error::InvalidArgument("score covariance needs n >= 1".into()));
    }
    let w = scores.p() * scores.m();
    let a = DMatrix::from_column_slice(w, scores.n(), &scores.data);
    let s = (&a * a.transpose()) / scores.n() as f64;
    ScoreCovariance::from_matrix(scores.population(), scores.p(), scores.m(), linalg::symmetrize(&s))
}

/// Everything produced by projecting both populations onto the pooled
/// per-node FPCA bases.
#[derive(Debug, Clone)]
pub struct Projection {
    pub fpca: Vec<FpcaResult>,
    pub scores_x: ScoreMatrix,
    pub scores_y: ScoreMatrix,
    pub cov_x: ScoreCovariance,
    pub cov_y: ScoreCovariance,
}

/// Pooled-kernel FPCA for every node, then scores and score covariances for
/// both populations.
pub fn project_populations(
    fitted_x: &FittedSample,
    fitted_y: &FittedSample,
    m: usize,
) -> Result<Projection> {
    if fitted_x.p() != fitted_y.p() {
        return Err(Error::ShapeMismatch(format!(
            "populations have {} and {} nodes",
            fitted_x.p(),
            fitted_y.p()
        )));
    }
    let fpca = node_fpca(fitted_x, fitted_y, m)?;
    let scores_x = compute_scores(fitted_x, &fpca, Population::X)?;
    let scores_y = compute_scores(fitted_y, &fpca, Population::Y)?;
    let cov_x = score_covariance(&scores_x)?;
    let cov_y = score_covariance(&scores_y)?;
    Ok(Projection {
        fpca,
        scores_x,
        scores_y,
        cov_x,
        cov_y,
    })
}

/// Pooled-kernel FPCA for all nodes.
pub fn node_fpca(fitted_x: &FittedSample, fitted_y: &FittedSample, m: usize) -> Result<Vec<FpcaResult>> {
    (0..fitted_x.p())
        .into_par_iter()
        .map(|j| fpca_decompose(&estimate_cov_kernel(fitted_x, fitted_y, j)?, m))
        .collect()
}
