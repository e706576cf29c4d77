//! Least-squares reconstruction of smooth curves from noisy discrete samples.

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::funcbasis::{same_basis, BasisSystem, Domain, FunctionRep};

/// Largest accepted condition number of `BᵀB`.
pub const MAX_CONDITION: f64 = 1e12;

/// Observations `(t_k, h_k)` of one curve, times strictly increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    times: Vec<f64>,
    values: Vec<f64>,
}

impl Curve {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::InvalidArgument("curve has no observations".into()));
        }
        if times.len() != values.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} times but {} values",
                times.len(),
                values.len()
            )));
        }
        if times.iter().chain(&values).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite observation".into()));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument(
                "observation times must be strictly increasing".into(),
            ));
        }
        Ok(Self { times, values })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Keep the observations whose index satisfies `keep`.
    pub fn select(&self, keep: impl Fn(usize) -> bool) -> Result<Curve> {
        let (times, values) = self
            .times
            .iter()
            .zip(&self.values)
            .enumerate()
            .filter(|(k, _)| keep(*k))
            .map(|(_, (t, v))| (*t, *v))
            .unzip();
        Curve::new(times, values)
    }
}

/// Discretely observed curves for one population: `n` samples × `p` nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct RawDataset {
    p: usize,
    n: usize,
    domain: Domain,
    curves: Vec<Curve>,
}

impl RawDataset {
    /// `curves` is sample-major: curve `(i, j)` sits at index `i * p + j`.
    pub fn new(p: usize, n: usize, domain: Domain, curves: Vec<Curve>) -> Result<Self> {
        if p == 0 || n == 0 {
            return Err(Error::InvalidArgument(format!(
                "dataset needs p, n >= 1 (got p={p}, n={n})"
            )));
        }
        if curves.len() != p * n {
            return Err(Error::ShapeMismatch(format!(
                "expected {} curves for n={n}, p={p}, got {}",
                p * n,
                curves.len()
            )));
        }
        for (idx, c) in curves.iter().enumerate() {
            for &t in c.times() {
                domain
                    .check(t)
                    .map_err(|e| e.at_curve(idx / p, idx % p))?;
            }
        }
        Ok(Self {
            p,
            n,
            domain,
            curves,
        })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn curve(&self, sample: usize, node: usize) -> &Curve {
        &self.curves[sample * self.p + node]
    }

    pub fn curves(&self) -> &[Curve] {
        &self.curves
    }

    /// Dataset restricted to the listed samples, in the given order.
    pub fn subset(&self, samples: &[usize]) -> Result<RawDataset> {
        let curves = samples
            .iter()
            .flat_map(|&i| (0..self.p).map(move |j| (i, j)))
            .map(|(i, j)| self.curve(i, j).clone())
            .collect();
        RawDataset::new(self.p, samples.len(), self.domain, curves)
    }

    /// Apply `f` to every curve, keeping the layout.
    pub fn map_curves(&self, f: impl Fn(&Curve) -> Result<Curve>) -> Result<RawDataset> {
        let curves = self
            .curves
            .iter()
            .enumerate()
            .map(|(idx, c)| f(c).map_err(|e| e.at_curve(idx / self.p, idx % self.p)))
            .collect::<Result<Vec<_>>>()?;
        RawDataset::new(self.p, self.n, self.domain, curves)
    }
}

/// `B[k][l] = b_l(t_k)`.
pub fn design_matrix(basis: &BasisSystem, times: &[f64]) -> Result<DMatrix<f64>> {
    if times.is_empty() {
        return Err(Error::InvalidArgument("design matrix needs at least one time".into()));
    }
    let l = basis.size();
    let mut b = DMatrix::zeros(times.len(), l);
    let mut row = vec![0.0; l];
    for (k, &t) in times.iter().enumerate() {
        basis.domain().check(t)?;
        basis.eval_into(t, &mut row);
        for (c, v) in row.iter().enumerate() {
            b[(k, c)] = *v;
        }
    }
    Ok(b)
}

/// Least-squares projector for one fixed time grid.
///
/// The coefficients `(BᵀB)⁻¹Bᵀh` are computed through a QR factorization
/// of `B` rather than an explicit inverse.
#[derive(Debug, Clone)]
pub struct LeastSquaresFit {
    basis: Arc<BasisSystem>,
    projector: DMatrix<f64>,
    condition: f64,
}

impl LeastSquaresFit {
    pub fn new(basis: &Arc<BasisSystem>, times: &[f64]) -> Result<Self> {
        let l = basis.size();
        let t = times.len();
        if t < l {
            return Err(Error::Underdetermined { t, l });
        }
        let design = design_matrix(basis, times)?;
        let sv = design.singular_values();
        let (smax, smin) = (sv.max(), sv.min());
        let condition = if smin > 0.0 {
            (smax / smin).powi(2)
        } else {
            f64::INFINITY
        };
        if !(condition < MAX_CONDITION) {
            return Err(Error::Conditioning { t, l, cond: condition });
        }
        // Householder QR: B = QR, coefficients R⁻¹Qᵀh. The SVD vectors are less
        // accurate than the factorization residual we need.
        let qr = design.qr();
        let projector = qr
            .r()
            .solve_upper_triangular(&qr.q().transpose())
            .ok_or(Error::Conditioning { t, l, cond: condition })?;
        Ok(Self {
            basis: basis.clone(),
            projector,
            condition,
        })
    }

    pub fn condition(&self) -> f64 {
        self.condition
    }

    pub fn coefficients(&self, values: &[f64]) -> Result<DVector<f64>> {
        if values.len() != self.projector.ncols() {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a grid of {} times",
                values.len(),
                self.projector.ncols()
            )));
        }
        Ok(&self.projector * DVector::from_column_slice(values))
    }

    pub fn fit(&self, values: &[f64]) -> Result<FunctionRep> {
        FunctionRep::new(self.basis.clone(), self.coefficients(values)?)
    }
}

pub fn fit_curve(times: &[f64], values: &[f64], basis: &Arc<BasisSystem>) -> Result<FunctionRep> {
    LeastSquaresFit::new(basis, times)?.fit(values)
}

/// Fitted coefficient vectors for an `n × p` grid of curves sharing one basis.
#[derive(Debug, Clone)]
pub struct FittedSample {
    basis: Arc<BasisSystem>,
    p: usize,
    n: usize,
    coeffs: Vec<DVector<f64>>,
}

impl FittedSample {
    /// `coeffs` is sample-major, like [`RawDataset::new`].
    pub fn new(
        basis: Arc<BasisSystem>,
        p: usize,
        n: usize,
        coeffs: Vec<DVector<f64>>,
    ) -> Result<Self> {
        if coeffs.len() != p * n || coeffs.iter().any(|c| c.len() != basis.size()) {
            return Err(Error::ShapeMismatch(format!(
                "fitted sample expects {} coefficient vectors of length {}",
                p * n,
                basis.size()
            )));
        }
        Ok(Self { basis, p, n, coeffs })
    }

    pub fn basis(&self) -> &Arc<BasisSystem> {
        &self.basis
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn coeffs(&self, sample: usize, node: usize) -> &DVector<f64> {
        &self.coeffs[sample * self.p + node]
    }

    pub fn curve(&self, sample: usize, node: usize) -> FunctionRep {
        FunctionRep::new(self.basis.clone(), self.coeffs(sample, node).clone())
            .expect("lengths validated at construction")
    }

    pub fn same_basis_as(&self, other: &FittedSample) -> bool {
        same_basis(&self.basis, &other.basis)
    }

    /// Subtract the per-node mean curve.
    pub fn centered(&self) -> FittedSample {
        let mut coeffs = self.coeffs.clone();
        for j in 0..self.p {
            let mean = (0..self.n)
                .map(|i| self.coeffs(i, j))
                .fold(DVector::zeros(self.basis.size()), |acc, c| acc + c)
                / self.n as f64;
            for i in 0..self.n {
                coeffs[i * self.p + j] -= &mean;
            }
        }
        FittedSample { coeffs, ..self.clone() }
    }

    pub fn subset(&self, samples: &[usize]) -> FittedSample {
        let coeffs = samples
            .iter()
            .flat_map(|&i| (0..self.p).map(move |j| (i, j)))
            .map(|(i, j)| self.coeffs(i, j).clone())
            .collect();
        FittedSample {
            basis: self.basis.clone(),
            p: self.p,
            n: samples.len(),
            coeffs,
        }
    }
}

/// Fit every curve of `data`. Curves observed on identical time grids share
/// one factorization; failures carry the offending `(sample, node)`.
pub fn fit_sample(data: &RawDataset, basis: &Arc<BasisSystem>) -> Result<FittedSample> {
    let p = data.p();
    let mut grid_index: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut fitters: Vec<LeastSquaresFit> = Vec::new();
    let mut assignment = Vec::with_capacity(data.curves().len());
    for (idx, curve) in data.curves().iter().enumerate() {
        let key: Vec<u64> = curve.times().iter().map(|t| t.to_bits()).collect();
        let slot = match grid_index.get(&key) {
            Some(&s) => s,
            None => {
                let fitter = LeastSquaresFit::new(basis, curve.times())
                    .map_err(|e| e.at_curve(idx / p, idx % p))?;
                fitters.push(fitter);
                grid_index.insert(key, fitters.len() - 1);
                fitters.len() - 1
            }
        };
        assignment.push(slot);
    }
    let coeffs = data
        .curves()
        .par_iter()
        .zip(assignment.par_iter())
        .enumerate()
        .map(|(idx, (curve, &slot))| {
            fitters[slot]
                .coefficients(curve.values())
                .map_err(|e| e.at_curve(idx / p, idx % p))
        })
        .collect::<Result<Vec<_>>>()?;
    FittedSample::new(basis.clone(), p, data.n(), coeffs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::funcbasis::make_fourier_basis;

    fn unit_fourier(l: usize) -> Arc<BasisSystem> {
        Arc::new(make_fourier_basis(l, Domain::unit()).unwrap())
    }

    fn grid(t: usize) -> Vec<f64> {
        (0..t).map(|k| k as f64 / (t - 1) as f64).collect()
    }

    #[test]
    fn constant_basis_design_is_ones() {
        let b = unit_fourier(1);
        let d = design_matrix(&b, &[0.2, 0.8]).unwrap();
        assert_eq!(d, DMatrix::from_element(2, 1, 1.0));
    }

    #[test]
    fn design_rejects_bad_times() {
        let b = unit_fourier(2);
        assert!(matches!(design_matrix(&b, &[]), Err(Error::InvalidArgument(_))));
        assert!(matches!(design_matrix(&b, &[0.5, 1.5]), Err(Error::Domain { .. })));
    }

    #[test]
    fn in_span_function_recovered() {
        let b = unit_fourier(3);
        let beta = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let times = grid(50);
        let values: Vec<f64> = times.iter().map(|&t| b.eval(t).unwrap().dot(&beta)).collect();
        let f = fit_curve(&times, &values, &b).unwrap();
        assert!((f.coeffs() - &beta).amax() < 1e-8);
    }

    #[test]
    fn zero_values_give_zero_coefficients() {
        let b = unit_fourier(4);
        let times = grid(20);
        let f = fit_curve(&times, &vec![0.0; 20], &b).unwrap();
        assert_eq!(f.coeffs().amax(), 0.0);
    }

    #[test]
    fn too_few_points() {
        let b = unit_fourier(5);
        assert!(matches!(
            fit_curve(&[0.1, 0.5, 0.9], &[1.0, 2.0, 3.0], &b),
            Err(Error::Underdetermined { t: 3, l: 5 })
        ));
    }

    #[test]
    fn collinear_design_is_ill_conditioned() {
        // sin(2πt) vanishes at t ∈ {0, 0.5, 1}
        let b = unit_fourier(3);
        let err = fit_curve(&[0.0, 0.5, 1.0], &[1.0, 1.0, 1.0], &b).unwrap_err();
        assert!(matches!(err, Error::Conditioning { t: 3, l: 3, .. }), "{err:?}");
    }

    #[test]
    fn fit_sample_names_failing_curve() {
        let b = unit_fourier(4);
        let good = Curve::new(grid(10), vec![0.0; 10]).unwrap();
        let bad = Curve::new(vec![0.1, 0.4, 0.9], vec![1.0; 3]).unwrap();
        let data = RawDataset::new(
            2,
            2,
            Domain::unit(),
            vec![good.clone(), good.clone(), good, bad],
        )
        .unwrap();
        match fit_sample(&data, &b).unwrap_err() {
            Error::AtCurve { sample, node, source } => {
                assert_eq!((sample, node), (1, 1));
                assert!(matches!(*source, Error::Underdetermined { t: 3, l: 4 }));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn single_curve_sample_matches_fit_curve() {
        let b = unit_fourier(3);
        let times = grid(15);
        let values: Vec<f64> = times.iter().map(|t| (5.0 * t).sin()).collect();
        let data = RawDataset::new(
            1,
            1,
            Domain::unit(),
            vec![Curve::new(times.clone(), values.clone()).unwrap()],
        )
        .unwrap();
        let fs = fit_sample(&data, &b).unwrap();
        let direct = fit_curve(&times, &values, &b).unwrap();
        assert_eq!(fs.coeffs(0, 0), direct.coeffs());
    }

    #[test]
    fn curve_validation() {
        assert!(Curve::new(vec![], vec![]).is_err());
        assert!(Curve::new(vec![0.2, 0.1], vec![1.0, 1.0]).is_err());
        assert!(Curve::new(vec![0.1, 0.1], vec![1.0, 1.0]).is_err());
        assert!(Curve::new(vec![0.1], vec![1.0, 2.0]).is_err());
    }

    #[test]
    fn centering_removes_node_means() {
        let b = unit_fourier(2);
        let coeffs = vec![
            DVector::from_vec(vec![1.0, 2.0]),
            DVector::from_vec(vec![3.0, 5.0]),
        ];
        let fs = FittedSample::new(b, 1, 2, coeffs).unwrap().centered();
        assert_eq!(fs.coeffs(0, 0).as_slice(), &[-1.0, -1.5]);
        assert_eq!(fs.coeffs(1, 0).as_slice(), &[1.0, 1.5]);
    }
}
