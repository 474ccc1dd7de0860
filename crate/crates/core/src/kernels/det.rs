//! Determinants of exponential kernels `det[exp(x_i·y_j / t)]`.
//!
//! The fast path scales every row and column by its largest entry and runs
//! partially pivoted elimination in `f64`. When the scaled determinant is
//! small relative to its Hadamard bound the matrix is nearly singular and
//! the `f64` result carries little or no precision: clustered points at
//! large `t` cancel by fifty or more decades. Those cases are re-evaluated
//! in arbitrary precision, doubling the working precision until the
//! determinant clears the rounding floor.

use dashu_float::round::mode::HalfEven;
use dashu_float::FBig;

use crate::error::{Error, Result};
use crate::logsigned::{LogSigned, Sign};

type Big = FBig<HalfEven, 2>;

/// Scaled determinants with `|det| / Π‖row‖₂` below this are recomputed in
/// high precision.
const HADAMARD_ACCEPT: f64 = 1e-3;

const START_BITS: usize = 160;
const MAX_BITS: usize = 1 << 16;

/// Bits kept above the elimination rounding floor before a high-precision
/// result is accepted.
const GUARD_BITS: f64 = 72.0;

/// Which evaluation route produced a determinant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Route {
    Float,
    Extended { bits: usize },
}

/// `det[exp(x_i·y_j / t)]` for arbitrary (unsorted) inputs of equal length.
pub fn det_exp_kernel(x: &[f64], y: &[f64], t: f64) -> LogSigned {
    det_exp_kernel_traced(x, y, t).0
}

pub fn det_exp_kernel_traced(x: &[f64], y: &[f64], t: f64) -> (LogSigned, Route) {
    debug_assert_eq!(x.len(), y.len());
    if has_duplicate(x) || has_duplicate(y) {
        return (LogSigned::ZERO, Route::Float);
    }
    let n = x.len();
    let s: Vec<f64> = (0..n * n).map(|k| x[k / n] * y[k % n] / t).collect();
    let row_shift: Vec<f64> = (0..n)
        .map(|i| s[i * n..(i + 1) * n].iter().copied().fold(f64::MIN, f64::max))
        .collect();
    let col_shift: Vec<f64> = (0..n)
        .map(|j| (0..n).map(|i| s[i * n + j] - row_shift[i]).fold(f64::MIN, f64::max))
        .collect();
    let shift: f64 = row_shift.iter().sum::<f64>() + col_shift.iter().sum::<f64>();

    let mut m: Vec<f64> = (0..n * n)
        .map(|k| (s[k] - row_shift[k / n] - col_shift[k % n]).exp())
        .collect();
    let hadamard: f64 = (0..n)
        .map(|i| m[i * n..(i + 1) * n].iter().map(|v| v * v).sum::<f64>().sqrt())
        .product();
    let det = lu_det_f64(&mut m, n);
    if det.abs() >= HADAMARD_ACCEPT * hadamard {
        return (LogSigned::from_f64(det).scale_log(shift), Route::Float);
    }

    // The float row and column shifts are applied exactly in extended
    // precision, so only the exponentials and the elimination round.
    let guess = if det == 0.0 { 0.0 } else { -(det.abs() / hadamard).log2() };
    let mut bits = START_BITS.max((2.0 * guess) as usize + START_BITS);
    loop {
        let (value, log2_floor) = extended_det(x, y, t, &row_shift, &col_shift, bits);
        let clear = match value.sign {
            Sign::Zero => false,
            _ => value.log_abs / std::f64::consts::LN_2 - log2_floor >= GUARD_BITS,
        };
        if clear {
            return (value.scale_log(shift), Route::Extended { bits });
        }
        if bits >= MAX_BITS {
            // Beyond any input we can represent sensibly; report what we have.
            log::warn!("determinant did not clear rounding floor at {bits} bits");
            return (value.scale_log(shift), Route::Extended { bits });
        }
        bits *= 2;
    }
}

/// Returns the shifted determinant and the log2 of its rounding floor.
fn extended_det(
    x: &[f64],
    y: &[f64],
    t: f64,
    row_shift: &[f64],
    col_shift: &[f64],
    bits: usize,
) -> (LogSigned, f64) {
    let n = x.len();
    let wide = bits + 64;
    let exact = |v: f64| -> Big { exact_big(v).with_precision(wide).value() };
    let tb = exact(t);
    let mut m: Vec<Big> = Vec::with_capacity(n * n);
    for i in 0..n {
        let xi = exact(x[i]);
        let ri = exact(row_shift[i]);
        for (&yj, &cj) in y.iter().zip(col_shift) {
            let arg = &xi * &exact(yj) / &tb;
            let arg = arg - &ri - exact(cj);
            m.push(exp_big(&arg, bits));
        }
    }
    let zero = Big::ZERO;
    let mut sign = 1i8;
    let mut det = Big::ONE.with_precision(bits).value();
    for k in 0..n {
        let mut piv = k;
        for r in k + 1..n {
            if abs_big(&m[r * n + k]) > abs_big(&m[piv * n + k]) {
                piv = r;
            }
        }
        if m[piv * n + k] == zero {
            return (LogSigned::ZERO, -(bits as f64));
        }
        if piv != k {
            for c in 0..n {
                m.swap(k * n + c, piv * n + c);
            }
            sign = -sign;
        }
        let p = m[k * n + k].clone();
        for r in k + 1..n {
            let f = &m[r * n + k] / &p;
            for c in k + 1..n {
                let upd = &f * &m[k * n + c];
                m[r * n + c] = &m[r * n + c] - &upd;
            }
        }
        det *= &p;
    }
    if det < zero {
        sign = -sign;
        det = -det;
    }
    let log_abs = ln_big(&det);
    // Entries are at most ~1 after the shifts; partial pivoting bounds
    // growth by 2^(n-1).
    let floor = -(bits as f64) + (n as f64 - 1.0) + (n as f64).log2() + 2.0;
    let s = if sign > 0 { Sign::Positive } else { Sign::Negative };
    (LogSigned::new(s, log_abs), floor)
}

/// Halving exponent for [`exp_big`]: the series runs on `a / 2^k` with
/// `|a / 2^k| ≤ 2^-REDUCTION_BITS`.
const REDUCTION_BITS: usize = 16;

/// `exp(a)` to `bits` bits for moderate `|a|`, by series and squaring.
/// Much cheaper than `FBig::exp`, which rebuilds ln 2 on every call.
fn exp_big(a: &Big, bits: usize) -> Big {
    let mag = a.to_f64().value().abs();
    let k = REDUCTION_BITS + if mag > 1.0 { mag.log2().ceil() as usize } else { 0 };
    let prec = bits + k + 16;
    let r = a.clone().with_precision(prec).value() >> k as isize;
    let one = Big::ONE.with_precision(prec).value();
    let mut sum = one.clone();
    for i in (1..=prec / REDUCTION_BITS + 2).rev() {
        sum = &one + &(&sum * &r) / Big::from(i as u64);
    }
    for _ in 0..k {
        sum = &sum * &sum;
    }
    sum.with_precision(bits).value()
}

/// `ln v` for positive `v`, read off the binary significand and exponent.
fn ln_big(v: &Big) -> f64 {
    let repr = v.repr();
    let digits = repr.digits() as isize;
    let mantissa = Big::from_parts(repr.significand().clone(), -digits).to_f64().value();
    mantissa.ln() + (repr.exponent() + digits) as f64 * std::f64::consts::LN_2
}

fn abs_big(v: &Big) -> Big {
    if *v < Big::ZERO {
        -v.clone()
    } else {
        v.clone()
    }
}

/// The exact binary value of a finite `f64`.
pub(crate) fn exact_big(v: f64) -> Big {
    Big::try_from(v).expect("finite input")
}

fn lu_det_f64(m: &mut [f64], n: usize) -> f64 {
    let mut det = 1.0;
    for k in 0..n {
        let piv = (k..n)
            .max_by(|&a, &b| m[a * n + k].abs().total_cmp(&m[b * n + k].abs()))
            .unwrap();
        if m[piv * n + k] == 0.0 {
            return 0.0;
        }
        if piv != k {
            for c in 0..n {
                m.swap(k * n + c, piv * n + c);
            }
            det = -det;
        }
        let p = m[k * n + k];
        for r in k + 1..n {
            let f = m[r * n + k] / p;
            for c in k + 1..n {
                m[r * n + c] -= f * m[k * n + c];
            }
        }
        det *= p;
    }
    det
}

fn has_duplicate(v: &[f64]) -> bool {
    v.iter()
        .enumerate()
        .any(|(i, a)| v[i + 1..].iter().any(|b| a == b))
}

/// Plain `f64` determinant with partial pivoting, for small well-scaled
/// matrices stored row-major.
pub fn det_f64(m: &[f64], n: usize) -> Result<f64> {
    if m.len() != n * n {
        return Err(Error::Contract(format!(
            "matrix has {} entries, expected {}",
            m.len(),
            n * n
        )));
    }
    let mut work = m.to_vec();
    Ok(lu_det_f64(&mut work, n))
}
