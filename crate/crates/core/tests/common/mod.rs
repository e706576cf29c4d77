//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| StandardNormal.sample(rng))
}

/// Haar-ish random orthogonal matrix from the QR factor of a Gaussian matrix.
pub fn random_orthogonal(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let qr = gaussian(rng, n, n).qr();
    let (q, r) = (qr.q(), qr.r());
    let mut q = q;
    for k in 0..n {
        if r[(k, k)] < 0.0 {
            q.column_mut(k).neg_mut();
        }
    }
    q
}

/// Symmetric matrix with eigenvalues uniform in `[lo, hi]`.
pub fn random_spd(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> DMatrix<f64> {
    let q = random_orthogonal(rng, n);
    let d = DMatrix::from_diagonal(&DVector::from_fn(n, |_, _| rng.random_range(lo..=hi)));
    let a = &q * d * q.transpose();
    (&a + a.transpose()) * 0.5
}

fn block_norm(a: &DMatrix<f64>, m: usize, j: usize, l: usize) -> f64 {
    a.view((j * m, l * m), (m, m)).norm()
}

/// Penalized objective written from the Kronecker form
/// `½ vec(Δ)ᵀ (Sʸ ⊗ Sˣ) vec(Δ) − vec(Δ)ᵀ vec(Sʸ − Sˣ) + λ Σ ‖Δ_jl‖_F`.
pub fn kron_objective(delta: &DMatrix<f64>, sx: &DMatrix<f64>, sy: &DMatrix<f64>, lambda: f64, m: usize) -> f64 {
    let h = sy.kronecker(sx);
    let v = DVector::from_column_slice(delta.as_slice());
    let d = DVector::from_column_slice((sy - sx).as_slice());
    let p = delta.nrows() / m;
    let mut pen = 0.0;
    for j in 0..p {
        for l in 0..p {
            pen += block_norm(delta, m, j, l);
        }
    }
    0.5 * v.dot(&(&h * &v)) - v.dot(&d) + lambda * pen
}

/// Exact minimizer of `½ xᵀHx + gᵀx + λ‖x‖` for positive definite `H`.
fn group_block_min(h: &DMatrix<f64>, g: &DVector<f64>, lambda: f64) -> DVector<f64> {
    if g.norm() <= lambda {
        return DVector::zeros(g.len());
    }
    let eig = SymmetricEigen::new(h.clone());
    let gt = eig.eigenvectors.transpose() * g;
    let norm_at = |mu: f64| -> f64 {
        gt.iter()
            .zip(eig.eigenvalues.iter())
            .map(|(gi, hi)| (gi / (hi + mu)).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    if lambda == 0.0 {
        let xt = DVector::from_fn(g.len(), |i, _| -gt[i] / eig.eigenvalues[i]);
        return &eig.eigenvectors * xt;
    }
    // μ‖x(μ)‖ increases from 0 to ‖g‖; solve μ‖x(μ)‖ = λ by bisection.
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    while hi * norm_at(hi) < lambda {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid * norm_at(mid) < lambda {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mu = 0.5 * (lo + hi);
    let xt = DVector::from_fn(g.len(), |i, _| -gt[i] / (eig.eigenvalues[i] + mu));
    &eig.eigenvectors * xt
}

/// Cyclic exact block-coordinate descent on the penalized objective.
pub fn bcd_oracle(sx: &DMatrix<f64>, sy: &DMatrix<f64>, lambda: f64, m: usize, max_block_steps: usize) -> (DMatrix<f64>, f64) {
    let n = sx.nrows();
    let p = n / m;
    let d = sy - sx;
    let mut delta = DMatrix::<f64>::zeros(n, n);
    let mut steps = 0;
    let mut prev = kron_objective(&delta, sx, sy, lambda, m);
    while steps < max_block_steps {
        for j in 0..p {
            for l in 0..p {
                // vec(Δ_jl) couples through (Sʸ)_ll ⊗ (Sˣ)_jj
                let sxx = sx.view((j * m, j * m), (m, m)).into_owned();
                let syy = sy.view((l * m, l * m), (m, m)).into_owned();
                let h = syy.kronecker(&sxx);
                let mut without = delta.clone();
                without.view_mut((j * m, l * m), (m, m)).fill(0.0);
                let grad = sx * &without * sy - &d;
                let g = DVector::from_column_slice(grad.view((j * m, l * m), (m, m)).into_owned().as_slice());
                let x = group_block_min(&h, &g, lambda);
                delta
                    .view_mut((j * m, l * m), (m, m))
                    .copy_from(&DMatrix::from_column_slice(m, m, x.as_slice()));
                steps += 1;
            }
        }
        let obj = kron_objective(&delta, sx, sy, lambda, m);
        if (prev - obj).abs() <= 1e-15 * obj.abs().max(1.0) {
            prev = obj;
            break;
        }
        prev = obj;
    }
    (delta, prev)
}

/// Which fusion term a pair prox carries.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Fusion {
    Frobenius,
    Elementwise,
}

fn shrink(y: &DMatrix<f64>, a: f64) -> DMatrix<f64> {
    let n = y.norm();
    if n <= a {
        DMatrix::zeros(y.nrows(), y.ncols())
    } else {
        y * ((n - a) / n)
    }
}

fn project_dual(h: &DMatrix<f64>, fusion: Fusion) -> DMatrix<f64> {
    match fusion {
        Fusion::Frobenius => {
            let n = h.norm();
            if n <= 1.0 {
                h.clone()
            } else {
                h / n
            }
        }
        Fusion::Elementwise => h.map(|x| x.clamp(-1.0, 1.0)),
    }
}

/// Pair prox solved through its dual: maximize over the fusion multiplier
/// `h` with accelerated projected gradient, recovering
/// `Z⁽¹⁾ = shrink(A⁽¹⁾ − b h, a)`, `Z⁽²⁾ = shrink(A⁽²⁾ + b h, a)`.
pub fn dual_pair_oracle(
    a1: &DMatrix<f64>,
    a2: &DMatrix<f64>,
    a: f64,
    b: f64,
    fusion: Fusion,
    iters: usize,
) -> (DMatrix<f64>, DMatrix<f64>) {
    if b == 0.0 {
        return (shrink(a1, a), shrink(a2, a));
    }
    let step = 1.0 / (2.0 * b * b);
    let mut h = DMatrix::zeros(a1.nrows(), a1.ncols());
    let mut y = h.clone();
    let mut t = 1.0_f64;
    for _ in 0..iters {
        let z1 = shrink(&(a1 - &y * b), a);
        let z2 = shrink(&(a2 + &y * b), a);
        let next = project_dual(&(&y + (z1 - z2) * (b * step)), fusion);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        y = &next + (&next - &h) * ((t - 1.0) / t_next);
        h = next;
        t = t_next;
    }
    (shrink(&(a1 - &h * b), a), shrink(&(a2 + &h * b), a))
}

pub const ZERO_TOL: f64 = 1e-7;

fn unit_or_zero(z: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = z.norm();
    (n > ZERO_TOL).then(|| z / n)
}

/// Smallest first-order optimality residual of a pair prox output, over the
/// admissible subgradients of the fusion term. Subgradients of `a‖Z‖` at a
/// zero block are handled as the distance to the radius-`a` ball.
pub fn pair_residual(
    a1: &DMatrix<f64>,
    a2: &DMatrix<f64>,
    z1: &DMatrix<f64>,
    z2: &DMatrix<f64>,
    a: f64,
    b: f64,
    fusion: Fusion,
) -> f64 {
    let u1 = unit_or_zero(z1);
    let u2 = unit_or_zero(z2);
    let diff = z1 - z2;
    // free[k]: the fusion subgradient may vary at entry k
    let (mut h, free): (DMatrix<f64>, Vec<bool>) = match fusion {
        Fusion::Frobenius => {
            let n = diff.norm();
            if n <= ZERO_TOL {
                (DMatrix::zeros(a1.nrows(), a1.ncols()), vec![true; a1.len()])
            } else {
                (&diff / n, vec![false; a1.len()])
            }
        }
        Fusion::Elementwise => {
            let free: Vec<bool> = diff.iter().map(|d| d.abs() <= ZERO_TOL).collect();
            (diff.map(|d| if d.abs() <= ZERO_TOL { 0.0 } else { d.signum() }), free)
        }
    };
    let term = |r: DMatrix<f64>, u: &Option<DMatrix<f64>>| -> f64 {
        match u {
            Some(u) => (r - u * a).norm(),
            None => (r.norm() - a).max(0.0),
        }
    };
    let eval = |h: &DMatrix<f64>| -> f64 {
        let t1 = term(a1 - z1 - h * b, &u1);
        let t2 = term(a2 - z2 + h * b, &u2);
        (t1 * t1 + t2 * t2).sqrt()
    };
    if !free.iter().any(|f| *f) || b == 0.0 {
        return eval(&h);
    }
    // projected gradient descent on the squared residual over the free part
    let grad_sq = |h: &DMatrix<f64>| -> DMatrix<f64> {
        let part = |r: DMatrix<f64>, u: &Option<DMatrix<f64>>| -> DMatrix<f64> {
            match u {
                Some(u) => r - u * a,
                None => {
                    let n = r.norm();
                    if n <= a {
                        DMatrix::zeros(r.nrows(), r.ncols())
                    } else {
                        &r * ((n - a) / n)
                    }
                }
            }
        };
        let g1 = part(a1 - z1 - h * b, &u1);
        let g2 = part(a2 - z2 + h * b, &u2);
        (g2 - g1) * (2.0 * b)
    };
    let project = |h: &DMatrix<f64>, fixed: &DMatrix<f64>| -> DMatrix<f64> {
        match fusion {
            Fusion::Frobenius => project_dual(h, fusion),
            Fusion::Elementwise => DMatrix::from_fn(h.nrows(), h.ncols(), |r, c| {
                let k = r + c * h.nrows();
                if free[k] {
                    h[(r, c)].clamp(-1.0, 1.0)
                } else {
                    fixed[(r, c)]
                }
            }),
        }
    };
    let fixed = h.clone();
    let step = 1.0 / (4.0 * b * b);
    let mut best = eval(&h);
    for _ in 0..20_000 {
        h = project(&(&h - grad_sq(&h) * step), &fixed);
        best = best.min(eval(&h));
        if best < 1e-9 {
            break;
        }
    }
    best
}

/// Optimality residual of the GFGL prox (`Q` populations, `M × M` blocks).
pub fn gfgl_residual(a_list: &[DMatrix<f64>], z_list: &[DMatrix<f64>], m: usize, a: f64, b: f64) -> f64 {
    let p = a_list[0].nrows() / m;
    let mut worst = 0.0_f64;
    for j in 0..p {
        for l in 0..p {
            let blk = |x: &DMatrix<f64>| x.view((j * m, l * m), (m, m)).into_owned();
            if j == l {
                for (x, z) in a_list.iter().zip(z_list) {
                    worst = worst.max((blk(x) - blk(z)).norm());
                }
                continue;
            }
            let zs: Vec<DMatrix<f64>> = z_list.iter().map(blk).collect();
            let as_: Vec<DMatrix<f64>> = a_list.iter().map(blk).collect();
            let pooled = zs.iter().map(|z| z.norm_squared()).sum::<f64>().sqrt();
            if pooled <= ZERO_TOL {
                let r = as_.iter().map(|x| (x.norm() - a).max(0.0).powi(2)).sum::<f64>().sqrt();
                worst = worst.max((r - b).max(0.0));
                continue;
            }
            for (x, z) in as_.iter().zip(&zs) {
                let r = match unit_or_zero(z) {
                    Some(u) => (z - x + &u * a + z * (b / pooled)).norm(),
                    None => (x.norm() - a).max(0.0),
                };
                worst = worst.max(r);
            }
        }
    }
    worst
}

/// Stationarity of `Θ ↦ −n(log det Θ − tr SΘ) + ρ/2 ‖Θ − Z + U‖²`.
pub fn theta_stationarity(theta: &DMatrix<f64>, s: &DMatrix<f64>, n: f64, z: &DMatrix<f64>, u: &DMatrix<f64>, rho: f64) -> f64 {
    let inv = theta.clone().try_inverse().expect("invertible");
    (n * (s - inv) + (theta - z + u) * rho).amax()
}
