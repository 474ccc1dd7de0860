//! The kernel determinant against a Leibniz expansion carried out in
//! 512-bit arithmetic.

use coalscale::kernels::det::{det_exp_kernel, det_exp_kernel_traced, Route};
use coalscale::Sign;
use dashu_float::round::mode::HalfEven;
use dashu_float::FBig;
use itertools::Itertools;

type Big = FBig<HalfEven, 2>;

const BITS: usize = 512;

fn big(v: f64) -> Big {
    Big::try_from(v).unwrap().with_precision(BITS).value()
}

fn parity(perm: &[usize]) -> bool {
    let mut inversions = 0;
    for i in 0..perm.len() {
        for j in i + 1..perm.len() {
            if perm[i] > perm[j] {
                inversions += 1;
            }
        }
    }
    inversions % 2 == 0
}

/// `(sign, ln |det|)` of `det[exp(x_i y_j / t)]` by brute force.
fn leibniz(x: &[f64], y: &[f64], t: f64) -> (i8, f64) {
    let n = x.len();
    let tb = big(t);
    let entry = |i: usize, j: usize| (big(x[i]) * big(y[j]) / &tb).exp();
    let mut sum = big(0.0);
    for perm in (0..n).permutations(n) {
        let term = perm
            .iter()
            .enumerate()
            .fold(big(1.0), |acc, (i, &j)| acc * entry(i, j));
        if parity(&perm) {
            sum += term;
        } else {
            sum -= term;
        }
    }
    let sign = if sum > big(0.0) { 1 } else if sum < big(0.0) { -1 } else { 0 };
    let abs = if sign < 0 { -sum } else { sum };
    (sign, abs.ln().to_f64().value())
}

fn agree(x: &[f64], y: &[f64], t: f64) -> Route {
    let (got, route) = det_exp_kernel_traced(x, y, t);
    let (sign, log_abs) = leibniz(x, y, t);
    let expect_sign = match sign {
        1 => Sign::Positive,
        -1 => Sign::Negative,
        _ => Sign::Zero,
    };
    assert_eq!(got.sign, expect_sign, "x={x:?} y={y:?} t={t}");
    assert!(
        (got.log_abs - log_abs).abs() < 1e-10,
        "x={x:?} y={y:?} t={t}: {} vs {}",
        got.log_abs,
        log_abs
    );
    route
}

#[test]
fn well_conditioned_matrices() {
    agree(&[0.0, 1.0], &[0.0, 1.0], 1.0);
    agree(&[-1.2, 0.3, 2.0], &[-0.5, 0.1, 0.7], 0.8);
    agree(&[-2.0, -0.4, 0.9, 1.5], &[-1.0, 0.0, 0.5, 2.5], 0.5);
    agree(&[2.0, -1.0, 0.5], &[0.3, 1.0, -0.2], 1.3);
}

#[test]
fn nearly_singular_matrices_use_extended_precision() {
    let x = [0.0, 0.5, 1.0, 1.5, 2.0];
    assert!(matches!(agree(&x, &x, 1e4), Route::Extended { .. }));
    assert!(matches!(agree(&x[..4], &x[..4], 1e5), Route::Extended { .. }));
    let y = [-0.3, 0.1, 0.2];
    assert!(matches!(agree(&y, &[1.0, 2.0, 3.0], 50.0), Route::Extended { .. }));
}

#[test]
fn large_exponents_stay_finite() {
    let d = det_exp_kernel(&[-3.0, 0.0, 3.0], &[-3.0, 0.0, 3.0], 0.05);
    assert!(d.log_abs.is_finite());
    agree(&[-3.0, 0.0, 3.0], &[-3.0, 0.0, 3.0], 0.05);
}
