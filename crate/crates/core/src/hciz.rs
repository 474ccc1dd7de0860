//! Monte Carlo over the unitary group for
//! `∫_{U(n)} exp(tr(U X U† Y)) dU` with `X`, `Y` diagonal.
//!
//! Haar unitaries come from a Householder QR of a complex Ginibre matrix,
//! with the phases of `R`'s diagonal moved into `Q` so that `R` has a
//! positive diagonal; without that correction `Q` is not Haar distributed.
//! Every sampled exponent is checked against the permutation extrema
//! `Σ x_{n+1-i} y_i ≤ F(U) ≤ Σ x_i y_i`.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernels::{self, OrderedPoints};
use crate::logsigned::LogSigned;
use crate::par::{self, Execution};
use crate::rng::{self, Purpose};
use crate::stats::Moments;

/// Largest dimension for brute-force permutation enumeration.
pub const MAX_ENUMERATION: usize = 8;

/// Slack allowed on the permutation extrema.
pub const CLAIM_TOLERANCE: f64 = 1e-9;

/// A unitary matrix stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitarySample {
    n: usize,
    entries: Vec<Complex64>,
}

impl UnitarySample {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.entries[row * self.n + col]
    }

    pub fn identity(n: usize) -> Self {
        let mut entries = vec![Complex64::new(0.0, 0.0); n * n];
        for i in 0..n {
            entries[i * n + i] = Complex64::new(1.0, 0.0);
        }
        UnitarySample { n, entries }
    }

    /// The permutation matrix with `U[i][perm[i]] = 1`.
    pub fn permutation(perm: &[usize]) -> Self {
        let n = perm.len();
        let mut entries = vec![Complex64::new(0.0, 0.0); n * n];
        for (i, &p) in perm.iter().enumerate() {
            entries[i * n + p] = Complex64::new(1.0, 0.0);
        }
        UnitarySample { n, entries }
    }

    /// Wraps arbitrary entries after checking unitarity to `tol`.
    pub fn from_entries(n: usize, entries: Vec<Complex64>, tol: f64) -> Result<Self> {
        if entries.len() != n * n {
            return Err(Error::Contract(format!("expected {} entries", n * n)));
        }
        let u = UnitarySample { n, entries };
        let defect = u.unitarity_defect();
        if defect > tol {
            return Err(Error::Numerical(format!("not unitary: defect {defect:e}")));
        }
        Ok(u)
    }

    pub fn scale(&self, factor: Complex64) -> Self {
        UnitarySample {
            n: self.n,
            entries: self.entries.iter().map(|z| z * factor).collect(),
        }
    }

    /// `max |(U U†)_{ij} - δ_{ij}|`.
    pub fn unitarity_defect(&self) -> f64 {
        let n = self.n;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let mut acc = Complex64::new(0.0, 0.0);
                for k in 0..n {
                    acc += self.get(i, k) * self.get(j, k).conj();
                }
                if i == j {
                    acc -= 1.0;
                }
                worst = worst.max(acc.norm());
            }
        }
        worst
    }
}

pub fn sample_haar_unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<UnitarySample> {
    if n == 0 {
        return Err(Error::Domain("unitary dimension must be at least 1".into()));
    }
    let mut a: Vec<Complex64> = (0..n * n)
        .map(|_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
        })
        .collect();
    let mut q = UnitarySample::identity(n).entries;
    let mut phases = vec![Complex64::new(1.0, 0.0); n];

    for k in 0..n {
        let norm = (k..n).map(|r| a[r * n + k].norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let x0 = a[k * n + k];
        let phase = if x0.norm() == 0.0 {
            Complex64::new(1.0, 0.0)
        } else {
            x0 / x0.norm()
        };
        let alpha = -phase * norm;
        let mut v: Vec<Complex64> = (k..n).map(|r| a[r * n + k]).collect();
        v[0] -= alpha;
        let v_norm_sqr: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        if v_norm_sqr > 0.0 {
            // A ← (I - 2vv†/|v|²) A on the trailing block
            for c in k..n {
                let w: Complex64 = v
                    .iter()
                    .enumerate()
                    .map(|(i, vi)| vi.conj() * a[(k + i) * n + c])
                    .sum();
                let s = w * (2.0 / v_norm_sqr);
                for (i, vi) in v.iter().enumerate() {
                    a[(k + i) * n + c] -= vi * s;
                }
            }
            // Q ← Q (I - 2vv†/|v|²)
            for r in 0..n {
                let w: Complex64 = v
                    .iter()
                    .enumerate()
                    .map(|(i, vi)| q[r * n + k + i] * vi)
                    .sum();
                let s = w * (2.0 / v_norm_sqr);
                for (i, vi) in v.iter().enumerate() {
                    q[r * n + k + i] -= s * vi.conj();
                }
            }
        }
        // R[k][k] = alpha; its phase moves into column k of Q.
        phases[k] = alpha / alpha.norm();
    }
    for r in 0..n {
        for (c, ph) in phases.iter().enumerate() {
            q[r * n + c] *= ph;
        }
    }
    Ok(UnitarySample { n, entries: q })
}

/// Real part of `tr(U X U† Y)` for diagonal `X = diag(x)`, `Y = diag(y)`.
pub fn hciz_integrand(u: &UnitarySample, x: &OrderedPoints, y: &OrderedPoints) -> Result<f64> {
    let (xs, ys) = (x.as_slice(), y.as_slice());
    let n = u.dim();
    if xs.len() != n || ys.len() != n {
        return Err(Error::Contract(format!(
            "dimension mismatch: U is {n}x{n}, x has {}, y has {}",
            xs.len(),
            ys.len()
        )));
    }
    if n == 1 {
        // scalars commute: u x ū = x for |u| = 1
        return Ok(xs[0] * ys[0]);
    }
    // tr(AB) with A = U X and B = U† Y
    let mut tr = Complex64::new(0.0, 0.0);
    #[allow(clippy::needless_range_loop)]
    for i in 0..n {
        for k in 0..n {
            let a_ik = u.get(i, k) * xs[k];
            let b_ki = u.get(i, k).conj() * ys[i];
            tr += a_ik * b_ki;
        }
    }
    if tr.im.abs() > 1e-10 * (1.0 + tr.re.abs()) {
        return Err(Error::Numerical(format!(
            "trace has imaginary part {:e}",
            tr.im
        )));
    }
    Ok(tr.re)
}

/// Minimum and maximum of `Σ x_{π(i)} y_i` over all permutations `π`.
pub fn permutation_extrema(x: &OrderedPoints, y: &OrderedPoints) -> Result<(f64, f64)> {
    let (xs, ys) = (x.as_slice(), y.as_slice());
    if xs.len() != ys.len() {
        return Err(Error::Contract("x and y differ in length".into()));
    }
    let n = xs.len();
    if n > MAX_ENUMERATION {
        return Err(Error::Size(format!(
            "permutation enumeration limited to n <= {MAX_ENUMERATION}, got {n}"
        )));
    }
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for perm in itertools::Itertools::permutations(0..n, n) {
        let v: f64 = perm.iter().zip(ys).map(|(&p, yi)| xs[p] * yi).sum();
        lo = lo.min(v);
        hi = hi.max(v);
    }
    Ok((lo, hi))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HcizEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n_samples: u64,
}

impl HcizEstimate {
    pub fn from_moments(m: &Moments) -> Self {
        HcizEstimate {
            mean: m.mean,
            stderr: m.stderr(),
            n_samples: m.count,
        }
    }

    /// `(value - mean) / stderr`; infinite when `stderr` is zero and the
    /// values differ.
    pub fn z_score(&self, value: f64) -> f64 {
        let d = value - self.mean;
        if d == 0.0 {
            0.0
        } else {
            d / self.stderr
        }
    }
}

fn accumulate<R: Rng + ?Sized>(
    x: &OrderedPoints,
    y: &OrderedPoints,
    n_samples: u64,
    extrema: (f64, f64),
    rng: &mut R,
) -> Result<Moments> {
    let (lo, hi) = extrema;
    let mut m = Moments::default();
    for _ in 0..n_samples {
        let u = sample_haar_unitary(x.len(), rng)?;
        let f = hciz_integrand(&u, x, y)?;
        if f < lo - CLAIM_TOLERANCE || f > hi + CLAIM_TOLERANCE {
            return Err(Error::ClaimViolation {
                value: f,
                min: lo,
                max: hi,
            });
        }
        m.push(f.exp());
    }
    Ok(m)
}

fn check_mc_inputs(x: &OrderedPoints, y: &OrderedPoints, n_samples: u64) -> Result<(f64, f64)> {
    if n_samples < 2 {
        return Err(Error::Domain("at least two samples are required".into()));
    }
    permutation_extrema(x, y)
}

/// Sample mean and standard error of `exp(F(U))` over Haar unitaries.
pub fn hciz_integral_mc<R: Rng + ?Sized>(
    x: &OrderedPoints,
    y: &OrderedPoints,
    n_samples: u64,
    rng: &mut R,
) -> Result<HcizEstimate> {
    let extrema = check_mc_inputs(x, y, n_samples)?;
    Ok(HcizEstimate::from_moments(&accumulate(
        x, y, n_samples, extrema, rng,
    )?))
}

/// As [`hciz_integral_mc`], split into chunks of `chunk` samples, each on
/// its own `(seed, chunk index)` stream. The result does not depend on the
/// execution mode or thread count.
pub fn hciz_integral_mc_streams(
    x: &OrderedPoints,
    y: &OrderedPoints,
    n_samples: u64,
    seed: u64,
    chunk: u64,
    mode: Execution,
) -> Result<HcizEstimate> {
    let extrema = check_mc_inputs(x, y, n_samples)?;
    let chunk = chunk.max(1);
    let chunks = n_samples.div_ceil(chunk);
    let parts = par::map_indexed(chunks, mode, |c| {
        let len = chunk.min(n_samples - c * chunk);
        let mut rng = rng::stream(seed, Purpose::Haar, c);
        accumulate(x, y, len, extrema, &mut rng)
    });
    let mut total = Moments::default();
    for p in parts {
        total = total.merge(&p?);
    }
    Ok(HcizEstimate::from_moments(&total))
}

/// The integral implied by the determinant identity,
/// `det[e^{x_i y_j}] / (c · Δ(x) Δ(y))`, for a given `ln c`.
pub fn implied_integral(x: &OrderedPoints, y: &OrderedPoints, log_constant: f64) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Contract("x and y differ in length".into()));
    }
    let det = kernels::det::det_exp_kernel(x.as_slice(), y.as_slice(), 1.0);
    let denom = kernels::vandermonde(x.as_slice()) * kernels::vandermonde(y.as_slice());
    Ok((det / denom).scale_log(-log_constant).to_f64())
}

/// `det[e^{x_i y_j}]` on its own.
pub fn exp_kernel_determinant(x: &OrderedPoints, y: &OrderedPoints) -> LogSigned {
    kernels::det::det_exp_kernel(x.as_slice(), y.as_slice(), 1.0)
}
