//! Orthonormal function bases on a closed interval.
//!
//! Every curve, eigenfunction and covariance kernel in an analysis is stored
//! as a coefficient vector over one shared basis. For orthonormal bases the
//! L² inner product of two functions is the dot product of their coefficient
//! vectors, so all downstream integrals are exact linear algebra.

use std::f64::consts::{PI, SQRT_2};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// A closed interval `[lo, hi]` with `hi > lo`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Domain {
    lo: f64,
    hi: f64,
}

impl Domain {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && hi > lo) {
            return Err(Error::InvalidArgument(format!(
                "domain requires finite hi > lo, got [{lo}, {hi}]"
            )));
        }
        Ok(Self { lo, hi })
    }

    pub fn unit() -> Self {
        Self { lo: 0.0, hi: 1.0 }
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.lo && t <= self.hi
    }

    pub fn check(&self, t: f64) -> Result<()> {
        if self.contains(t) {
            Ok(())
        } else {
            Err(Error::Domain {
                t,
                lo: self.lo,
                hi: self.hi,
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum BasisKind {
    Fourier,
    OrthonormalBSpline,
    DisjointCosine,
}

/// A basis family to be instantiated at a chosen size, as used when the
/// size is a tuning parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "family", rename_all = "lowercase", deny_unknown_fields)]
pub enum BasisSpec {
    Fourier,
    Bspline { degree: usize },
}

impl Default for BasisSpec {
    fn default() -> Self {
        BasisSpec::Bspline { degree: 3 }
    }
}

impl BasisSpec {
    pub fn build(&self, size: usize, domain: Domain) -> Result<BasisSystem> {
        match *self {
            BasisSpec::Fourier => make_fourier_basis(size, domain),
            BasisSpec::Bspline { degree } => make_orthonormal_bspline_basis(size, degree, domain),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Rule {
    Fourier,
    BSpline {
        degree: usize,
        knots: Vec<f64>,
        /// Row `k` holds the raw B-spline coefficients of orthonormal function `k`.
        transform: DMatrix<f64>,
    },
    DisjointCosine,
}

/// A finite system of `L` functions on a [`Domain`].
#[derive(Debug, Clone, PartialEq)]
pub struct BasisSystem {
    size: usize,
    domain: Domain,
    rule: Rule,
}

impl BasisSystem {
    pub fn kind(&self) -> BasisKind {
        match self.rule {
            Rule::Fourier => BasisKind::Fourier,
            Rule::BSpline { .. } => BasisKind::OrthonormalBSpline,
            Rule::DisjointCosine => BasisKind::DisjointCosine,
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn is_orthonormal(&self) -> bool {
        self.kind() != BasisKind::DisjointCosine
    }

    /// Spline degree, for spline bases.
    pub fn degree(&self) -> Option<usize> {
        match &self.rule {
            Rule::BSpline { degree, .. } => Some(*degree),
            _ => None,
        }
    }

    pub fn require_orthonormal(&self) -> Result<()> {
        if self.is_orthonormal() {
            Ok(())
        } else {
            Err(Error::InvalidBasis(format!(
                "{:?} basis is not orthonormal",
                self.kind()
            )))
        }
    }

    /// The `m` disjoint-support cosine bumps on `[0, 1]` used to generate
    /// synthetic curves. Bump `k` lives on `[k/m, (k+1)/m)` and equals
    /// `cos(2πm(t − (2k+1)/(2m))) + 1` there.
    pub fn disjoint_cosine(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidArgument(
                "disjoint cosine basis needs m >= 1".into(),
            ));
        }
        Ok(Self {
            size: m,
            domain: Domain::unit(),
            rule: Rule::DisjointCosine,
        })
    }

    /// Evaluate all `L` functions at `t`.
    pub fn eval(&self, t: f64) -> Result<DVector<f64>> {
        self.domain.check(t)?;
        let mut out = DVector::zeros(self.size);
        self.eval_into(t, out.as_mut_slice());
        Ok(out)
    }

    /// Evaluate into `out` without the domain check. `t` must lie in the domain.
    pub(crate) fn eval_into(&self, t: f64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.size);
        match &self.rule {
            Rule::Fourier => eval_fourier(self.domain, t, out),
            Rule::BSpline {
                degree,
                knots,
                transform,
            } => {
                let mut raw = vec![0.0; self.size];
                eval_bspline_raw(knots, *degree, self.size, t, &mut raw);
                for (k, o) in out.iter_mut().enumerate() {
                    *o = transform
                        .row(k)
                        .iter()
                        .zip(raw.iter())
                        .map(|(c, b)| c * b)
                        .sum();
                }
            }
            Rule::DisjointCosine => {
                out.iter_mut().for_each(|o| *o = 0.0);
                let m = self.size as f64;
                let k = (t * m).floor();
                if t < 1.0 && k >= 0.0 {
                    let k = k as usize;
                    let centre = (2 * k + 1) as f64 / (2.0 * m);
                    out[k] = (2.0 * PI * m * (t - centre)).cos() + 1.0;
                }
            }
        }
    }
}

/// Constant `1/√|T|` followed by cos/sin pairs of increasing frequency,
/// orthonormal on `domain`.
pub fn make_fourier_basis(size: usize, domain: Domain) -> Result<BasisSystem> {
    if size == 0 {
        return Err(Error::InvalidArgument("Fourier basis needs L >= 1".into()));
    }
    Ok(BasisSystem {
        size,
        domain,
        rule: Rule::Fourier,
    })
}

fn eval_fourier(domain: Domain, t: f64, out: &mut [f64]) {
    let w = domain.width();
    let u = (t - domain.lo()) / w;
    let scale = SQRT_2 / w.sqrt();
    out[0] = 1.0 / w.sqrt();
    for k in 1..out.len() {
        let freq = ((k + 1) / 2) as f64;
        let arg = 2.0 * PI * freq * u;
        out[k] = scale * if k % 2 == 1 { arg.cos() } else { arg.sin() };
    }
}

/// `L` B-splines of the given degree on a clamped uniform knot sequence,
/// orthonormalized by classical Gram–Schmidt under exact inner products.
pub fn make_orthonormal_bspline_basis(
    size: usize,
    degree: usize,
    domain: Domain,
) -> Result<BasisSystem> {
    if size < degree + 1 {
        return Err(Error::InvalidArgument(format!(
            "B-spline basis of degree {degree} needs L >= {}, got {size}",
            degree + 1
        )));
    }
    let knots = clamped_uniform_knots(size, degree, domain);
    let gram = raw_bspline_gram(&knots, degree, size);
    let transform = gram_schmidt(&gram)?;
    Ok(BasisSystem {
        size,
        domain,
        rule: Rule::BSpline {
            degree,
            knots,
            transform,
        },
    })
}

fn clamped_uniform_knots(size: usize, degree: usize, domain: Domain) -> Vec<f64> {
    let segments = size - degree;
    let mut knots = Vec::with_capacity(size + degree + 1);
    knots.extend(std::iter::repeat_n(domain.lo(), degree + 1));
    for i in 1..segments {
        knots.push(domain.lo() + domain.width() * i as f64 / segments as f64);
    }
    knots.extend(std::iter::repeat_n(domain.hi(), degree + 1));
    knots
}

/// Cox–de Boor evaluation of all `size` B-splines at `t`.
fn eval_bspline_raw(knots: &[f64], degree: usize, size: usize, t: f64, out: &mut [f64]) {
    out.iter_mut().for_each(|o| *o = 0.0);
    // last span with positive length is [knots[size-1], knots[size]]
    let span = if t >= knots[size] {
        size - 1
    } else {
        let mut s = degree;
        while s + 1 < size && knots[s + 1] <= t {
            s += 1;
        }
        s
    };
    let mut n = vec![0.0; degree + 1];
    let mut left = vec![0.0; degree + 1];
    let mut right = vec![0.0; degree + 1];
    n[0] = 1.0;
    for j in 1..=degree {
        left[j] = t - knots[span + 1 - j];
        right[j] = knots[span + j] - t;
        let mut saved = 0.0;
        for r in 0..j {
            let temp = n[r] / (right[r + 1] + left[j - r]);
            n[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        n[j] = saved;
    }
    for (r, v) in n.iter().enumerate() {
        out[span - degree + r] = *v;
    }
}

/// Gram matrix of the raw B-splines, exact via Gauss–Legendre on each knot span.
fn raw_bspline_gram(knots: &[f64], degree: usize, size: usize) -> DMatrix<f64> {
    let (nodes, weights) = gauss_legendre(degree + 1);
    let mut gram = DMatrix::zeros(size, size);
    let mut vals = vec![0.0; size];
    for s in degree..size {
        let (a, b) = (knots[s], knots[s + 1]);
        if b <= a {
            continue;
        }
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        for (x, w) in nodes.iter().zip(&weights) {
            let t = mid + half * x;
            eval_bspline_raw(knots, degree, size, t, &mut vals);
            for i in (s - degree)..=s {
                for j in (s - degree)..=s {
                    gram[(i, j)] += half * w * vals[i] * vals[j];
                }
            }
        }
    }
    gram
}

/// Classical Gram–Schmidt (two passes) under the inner product `uᵀ G v`.
/// Returns the matrix whose rows are the orthonormal coefficient vectors.
fn gram_schmidt(gram: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = gram.nrows();
    let mut q: Vec<DVector<f64>> = Vec::with_capacity(n);
    for k in 0..n {
        let mut v = DVector::zeros(n);
        v[k] = 1.0;
        for _ in 0..2 {
            let gv = gram * &v;
            let proj: Vec<f64> = q.iter().map(|qi| qi.dot(&gv)).collect();
            for (qi, r) in q.iter().zip(proj) {
                v.axpy(-r, qi, 1.0);
            }
        }
        let norm2 = v.dot(&(gram * &v));
        if !(norm2 > 0.0) {
            return Err(Error::InvalidBasis(format!(
                "B-spline {k} is linearly dependent on its predecessors"
            )));
        }
        v /= norm2.sqrt();
        q.push(v);
    }
    let mut t = DMatrix::zeros(n, n);
    for (k, qk) in q.iter().enumerate() {
        t.set_row(k, &qk.transpose());
    }
    Ok(t)
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub(crate) fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // p1 = P_n(x), p0 = P_{n-1}(x)
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

/// A function expressed as coefficients over a shared basis.
#[derive(Debug, Clone)]
pub struct FunctionRep {
    basis: Arc<BasisSystem>,
    coeffs: DVector<f64>,
}

impl FunctionRep {
    pub fn new(basis: Arc<BasisSystem>, coeffs: DVector<f64>) -> Result<Self> {
        if coeffs.len() != basis.size() {
            return Err(Error::ShapeMismatch(format!(
                "{} coefficients for a basis of size {}",
                coeffs.len(),
                basis.size()
            )));
        }
        Ok(Self { basis, coeffs })
    }

    pub fn basis(&self) -> &Arc<BasisSystem> {
        &self.basis
    }

    pub fn coeffs(&self) -> &DVector<f64> {
        &self.coeffs
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        Ok(self.basis.eval(t)?.dot(&self.coeffs))
    }
}

pub fn same_basis(a: &Arc<BasisSystem>, b: &Arc<BasisSystem>) -> bool {
    Arc::ptr_eq(a, b) || **a == **b
}

/// `∫ f g` over the domain: the coefficient dot product.
pub fn inner_product(f: &FunctionRep, g: &FunctionRep) -> Result<f64> {
    if !same_basis(&f.basis, &g.basis) {
        return Err(Error::BasisMismatch);
    }
    f.basis.require_orthonormal()?;
    Ok(f.coeffs.dot(&g.coeffs))
}

pub fn eval_basis(basis: &BasisSystem, t: f64) -> Result<DVector<f64>> {
    basis.eval(t)
}
