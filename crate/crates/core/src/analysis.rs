//! Power-law exponent fits, deterministic slope checks on the
//! Karlin–McGregor density and Vandermonde profile checks on estimates.

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::DensityEstimate;
use crate::kernels::{km_density, vandermonde, OrderedPoints, TimeValue};

/// Relative slope tolerance for deterministic kernel fits.
pub const KM_RELATIVE_TOLERANCE: f64 = 0.02;
/// Relative slope tolerance for fits to simulated estimates.
pub const MC_RELATIVE_TOLERANCE: f64 = 0.1;
/// Absolute slope tolerance for factorial moments over boxes scaled with `√t`.
pub const SCALED_BOX_TOLERANCE: f64 = 0.1;
/// Largest accepted relative dispersion of Vandermonde profile ratios.
pub const PROFILE_DISPERSION_TOLERANCE: f64 = 0.2;

/// `α(n) = n/2 + n(n−1)/4`, the decay exponent of `ρ_n` at fixed points.
pub fn predicted_alpha(n: u64) -> Result<Ratio<u64>> {
    if n == 0 {
        return Err(Error::Domain("alpha is defined for n >= 1".into()));
    }
    Ok(Ratio::new(n * (n + 1), 4))
}

/// Slope of `log det[G_t(x_i, y_j)]` against `log t` for fixed points.
pub fn km_expected_slope(n: usize) -> f64 {
    let n = n as f64;
    -(n / 2.0 + n * (n - 1.0) / 2.0)
}

/// Exponent `−n(n−1)/4` expected for factorial moments over boxes whose
/// positions and widths grow like `√t`.
pub fn scaled_box_exponent(n: usize) -> f64 {
    let n = n as f64;
    -n * (n - 1.0) / 4.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    pub r_squared: f64,
}

/// A point `(t, value, stderr)` on a power-law curve.
pub type FitPoint = (f64, f64, f64);

/// Weighted least squares of `log value` on `log t`.
///
/// Weights are `(value / stderr)²`. If every stderr is zero the fit is
/// unweighted and the slope error comes from the residuals.
pub fn fit_exponent(points: &[FitPoint]) -> Result<ExponentFit> {
    let bad: Vec<f64> = points
        .iter()
        .filter(|p| !(p.1 > 0.0 && p.1.is_finite()))
        .map(|p| p.0)
        .collect();
    if !bad.is_empty() {
        return Err(Error::Data { times: bad });
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|p| (p.0.ln(), p.1.ln())).collect();
    fit_log_log(&logs, points)
}

fn fit_log_log(logs: &[(f64, f64)], points: &[FitPoint]) -> Result<ExponentFit> {
    if logs.len() < 3 {
        return Err(Error::Contract(format!(
            "an exponent fit needs at least 3 points, got {}",
            logs.len()
        )));
    }
    if logs.iter().any(|p| !p.0.is_finite()) {
        return Err(Error::Contract("fit times must be positive and finite".into()));
    }
    let zero_err = points.iter().filter(|p| p.2 == 0.0).count();
    let weighted = match zero_err {
        0 => true,
        k if k == points.len() => false,
        _ => {
            return Err(Error::Contract(
                "stderr must be all zero or all positive".into(),
            ))
        }
    };
    let w: Vec<f64> = points
        .iter()
        .map(|p| if weighted { (p.1 / p.2).powi(2) } else { 1.0 })
        .collect();
    let sw: f64 = w.iter().sum();
    let xm = logs.iter().zip(&w).map(|(p, w)| w * p.0).sum::<f64>() / sw;
    let ym = logs.iter().zip(&w).map(|(p, w)| w * p.1).sum::<f64>() / sw;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for ((x, y), w) in logs.iter().zip(&w) {
        let (dx, dy) = (x - xm, y - ym);
        sxx += w * dx * dx;
        sxy += w * dx * dy;
        syy += w * dy * dy;
    }
    if sxx == 0.0 {
        return Err(Error::Contract("fit times are all equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let rss = (syy - slope * sxy).max(0.0);
    let r_squared = if syy == 0.0 { 1.0 } else { (1.0 - rss / syy).clamp(0.0, 1.0) };
    let slope_stderr = if weighted {
        (1.0 / sxx).sqrt()
    } else {
        (rss / (logs.len() as f64 - 2.0) / sxx).sqrt()
    };
    Ok(ExponentFit {
        slope,
        intercept,
        slope_stderr,
        r_squared,
    })
}

/// Fit points `(t, density, density stderr)` from estimates, skipping
/// those with no hits.
pub fn density_points(estimates: &[DensityEstimate]) -> Vec<FitPoint> {
    estimates
        .iter()
        .filter(|e| {
            if e.p_hat == 0.0 {
                log::warn!("dropping empty estimate at t = {} from fit", e.t);
                false
            } else {
                true
            }
        })
        .map(|e| (e.t, e.density, e.density_stderr()))
        .collect()
}

/// Fits `log km_density(x, y, t)` against `log t`. The grid must span two
/// decades and reach `10⁴·diam(x)·diam(y)`.
pub fn km_slope_check(x: &OrderedPoints, y: &OrderedPoints, t_grid: &[f64]) -> Result<ExponentFit> {
    if x.len() != y.len() {
        return Err(Error::Size(format!("|x| = {} but |y| = {}", x.len(), y.len())));
    }
    if t_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Contract("time grid must be strictly increasing".into()));
    }
    let (lo, hi) = match (t_grid.first(), t_grid.last()) {
        (Some(&lo), Some(&hi)) if lo > 0.0 => (lo, hi),
        _ => return Err(Error::Contract("time grid must be non-empty and positive".into())),
    };
    if hi / lo < 100.0 {
        return Err(Error::Contract(format!(
            "time grid [{lo}, {hi}] spans less than two decades"
        )));
    }
    let reach = 1e4 * x.diameter() * y.diameter();
    if hi < reach {
        return Err(Error::Contract(format!(
            "largest time {hi} is below 1e4·diam(x)·diam(y) = {reach}"
        )));
    }
    let mut logs = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let d = km_density(x, y, TimeValue::new(t)?)?;
        if d.is_zero() {
            return Err(Error::Numerical(format!("kernel vanished at t = {t}")));
        }
        logs.push((t.ln(), d.log_abs));
    }
    let points: Vec<FitPoint> = t_grid.iter().map(|&t| (t, 1.0, 0.0)).collect();
    fit_log_log(&logs, &points)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileCheck {
    /// `ρ̂ / |Δ(y·t^{-1/2})|` with `y` the box centres.
    pub ratios: Vec<f64>,
    pub ratio_stderrs: Vec<f64>,
    /// `(max − min) / mean` of the ratios.
    pub dispersion: f64,
}

/// Compares estimates against the profile `|Δ(y·t^{-1/2})|`. Every box
/// centre must satisfy `|y| ≤ reach·√t`.
pub fn vandermonde_profile_check(estimates: &[DensityEstimate], reach: f64) -> Result<ProfileCheck> {
    if estimates.len() < 3 {
        return Err(Error::Contract(format!(
            "a profile check needs at least 3 configurations, got {}",
            estimates.len()
        )));
    }
    let (n, t) = (estimates[0].n, estimates[0].t);
    let mut ratios = Vec::with_capacity(estimates.len());
    let mut ratio_stderrs = Vec::with_capacity(estimates.len());
    for e in estimates {
        if e.n != n || e.t != t {
            return Err(Error::Contract("estimates must share n and t".into()));
        }
        if e.p_hat == 0.0 {
            return Err(Error::Contract(format!(
                "empty estimate at boxes {:?}",
                e.boxes.lefts()
            )));
        }
        let scale = t.sqrt();
        let centers: Vec<f64> = e.boxes.centers().iter().map(|c| c / scale).collect();
        if let Some(c) = centers.iter().find(|c| c.abs() > reach) {
            return Err(Error::Contract(format!(
                "box centre {} lies beyond {reach}·√t",
                c * scale
            )));
        }
        let v = vandermonde(&centers).abs();
        if v.is_zero() {
            return Err(Error::Contract("coincident box centres".into()));
        }
        let v = v.to_f64();
        ratios.push(e.density / v);
        ratio_stderrs.push(e.density_stderr() / v);
    }
    let finite: Vec<f64> = ratios
        .iter()
        .zip(&ratio_stderrs)
        .filter(|(_, s)| s.is_finite())
        .map(|(r, _)| *r)
        .collect();
    let max = finite.iter().copied().fold(f64::MIN, f64::max);
    let min = finite.iter().copied().fold(f64::MAX, f64::min);
    let mean = finite.iter().sum::<f64>() / finite.len() as f64;
    Ok(ProfileCheck {
        ratios,
        ratio_stderrs,
        dispersion: (max - min) / mean,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Pass,
    Fail,
}

impl Verdict {
    pub fn from_bool(ok: bool) -> Self {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub n: usize,
    pub expected_slope: f64,
    pub fitted_slope: f64,
    pub slope_stderr: f64,
    pub r_squared: f64,
    pub verdict: Verdict,
}

impl FitReport {
    /// Passes when the fitted slope is within `tolerance` of the expected one.
    pub fn judge(n: usize, expected_slope: f64, fit: &ExponentFit, tolerance: f64) -> Self {
        let ok = (fit.slope - expected_slope).abs() <= tolerance;
        FitReport {
            n,
            expected_slope,
            fitted_slope: fit.slope,
            slope_stderr: fit.slope_stderr,
            r_squared: fit.r_squared,
            verdict: Verdict::from_bool(ok),
        }
    }
}

/// `count` log-spaced times from `lo` to `hi`, endpoints exact.
pub fn log_spaced(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let ratio = hi / lo;
    let last = count.saturating_sub(1).max(1) as f64;
    (0..count)
        .map(|i| match i {
            0 => lo,
            i if i + 1 == count => hi,
            i => lo * ratio.powf(i as f64 / last),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::BoxFamily;

    fn pts(v: &[f64]) -> OrderedPoints {
        OrderedPoints::new(v.to_vec()).unwrap()
    }

    #[test]
    fn alpha_values() {
        let a = |n| predicted_alpha(n).unwrap();
        assert_eq!(a(1), Ratio::new(1, 2));
        assert_eq!(a(2), Ratio::new(3, 2));
        assert_eq!(a(3), Ratio::from_integer(3));
        assert_eq!(a(4), Ratio::from_integer(5));
        assert!(predicted_alpha(0).is_err());
        for n in 1..20u64 {
            assert_eq!(a(n) - Ratio::new(n, 2), Ratio::new(n * (n - 1), 4));
        }
    }

    #[test]
    fn exact_power_law() {
        let p: Vec<FitPoint> = [1.0, 2.0, 4.0, 8.0]
            .iter()
            .map(|&t: &f64| (t, 7.0 * t.powf(-1.5), 0.01 * 7.0 * t.powf(-1.5)))
            .collect();
        let f = fit_exponent(&p).unwrap();
        assert!((f.slope + 1.5).abs() < 1e-12);
        assert!((f.intercept - 7f64.ln()).abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_values_have_zero_slope() {
        let p = [(1.0, 3.0, 0.1), (10.0, 3.0, 0.1), (100.0, 3.0, 0.1)];
        assert!(fit_exponent(&p).unwrap().slope.abs() < 1e-14);
    }

    #[test]
    fn non_positive_values_name_their_times() {
        let p = [(1.0, 3.0, 0.1), (2.0, 0.0, 0.1), (4.0, -1.0, 0.1)];
        match fit_exponent(&p) {
            Err(Error::Data { times }) => assert_eq!(times, vec![2.0, 4.0]),
            other => panic!("{other:?}"),
        }
        assert!(fit_exponent(&[(1.0, 1.0, 0.1), (2.0, 1.0, 0.1)]).is_err());
    }

    #[test]
    fn unweighted_when_errors_vanish() {
        let p = [(1.0, 1.0, 0.0), (2.0, 0.5, 0.0), (4.0, 0.25, 0.0)];
        let f = fit_exponent(&p).unwrap();
        assert!((f.slope + 1.0).abs() < 1e-12);
        assert!(f.slope_stderr < 1e-6);
        assert!(fit_exponent(&[(1.0, 1.0, 0.0), (2.0, 0.5, 0.1), (4.0, 0.2, 0.1)]).is_err());
    }

    #[test]
    fn km_slopes_small_n() {
        let grid = log_spaced(1e2, 1e6, 9);
        let one = km_slope_check(&pts(&[0.3]), &pts(&[-0.2]), &grid).unwrap();
        assert!((one.slope + 0.5).abs() < 0.01);
        let two = km_slope_check(&pts(&[0.0, 1.0]), &pts(&[0.0, 1.0]), &grid).unwrap();
        assert!((two.slope - km_expected_slope(2)).abs() < 0.04, "{}", two.slope);
        let four = pts(&[0.0, 0.5, 1.0, 1.5]);
        let f = km_slope_check(&four, &four, &grid).unwrap();
        assert!((f.slope + 8.0).abs() < 0.05, "{}", f.slope);
        assert_eq!(km_expected_slope(2), -2.0);
        assert_eq!(km_expected_slope(4), -8.0);
    }

    #[test]
    fn km_slope_preconditions() {
        let x = pts(&[0.0, 1.0]);
        assert!(km_slope_check(&x, &x, &[1e2, 1e3]).is_err());
        assert!(km_slope_check(&x, &x, &log_spaced(1e2, 1e6, 5)).is_ok());
        let wide = pts(&[0.0, 10.0]);
        assert!(km_slope_check(&wide, &wide, &log_spaced(1e2, 1e5, 5)).is_err());
        assert!(km_slope_check(&x, &pts(&[0.0]), &log_spaced(1e2, 1e6, 5)).is_err());
    }

    fn synthetic(centers: &[f64], t: f64, density: f64) -> DensityEstimate {
        let w = 0.1;
        let boxes = BoxFamily::centered(centers, w).unwrap();
        let n = centers.len();
        let p = density * w.powi(n as i32);
        DensityEstimate {
            n,
            t,
            boxes,
            p_hat: p,
            stderr: 0.01 * p,
            replicas: 1000,
            density,
        }
    }

    #[test]
    fn exact_profile_has_no_dispersion() {
        let t = 64.0;
        let configs = [[-1.0, 1.0], [0.0, 3.0], [-4.0, 2.0], [1.0, 9.0]];
        let est: Vec<_> = configs
            .iter()
            .map(|c| synthetic(c, t, 0.3 * (c[1] - c[0]) / t.sqrt()))
            .collect();
        let pc = vandermonde_profile_check(&est, 2.0).unwrap();
        assert!(pc.dispersion < 1e-12);
        assert!((pc.ratios[0] - 0.3).abs() < 1e-12);
    }

    #[test]
    fn flat_profile_is_detected() {
        let configs = [[-0.5, 0.5], [-2.0, 2.0], [-6.0, 6.0]];
        let est: Vec<_> = configs.iter().map(|c| synthetic(c, 64.0, 0.01)).collect();
        assert!(vandermonde_profile_check(&est, 2.0).unwrap().dispersion > 1.0);
    }

    #[test]
    fn profile_preconditions() {
        let t = 4.0;
        let ok = [synthetic(&[0.0], t, 0.2), synthetic(&[1.0], t, 0.21), synthetic(&[-1.0], t, 0.19)];
        let pc = vandermonde_profile_check(&ok, 2.0).unwrap();
        assert!((pc.dispersion - 0.1).abs() < 1e-12);
        assert!(vandermonde_profile_check(&ok[..2], 2.0).is_err());
        let far = [synthetic(&[0.0], t, 0.2), synthetic(&[1.0], t, 0.2), synthetic(&[9.0], t, 0.2)];
        assert!(vandermonde_profile_check(&far, 2.0).is_err());
    }

    #[test]
    fn verdict_follows_tolerance() {
        let f = ExponentFit {
            slope: -1.49,
            intercept: 0.0,
            slope_stderr: 0.01,
            r_squared: 1.0,
        };
        let r = FitReport::judge(2, -1.5, &f, KM_RELATIVE_TOLERANCE * 1.5);
        assert_eq!(r.verdict, Verdict::Pass);
        let bad = FitReport::judge(2, -1.5, &ExponentFit { slope: -1.2, ..f }, KM_RELATIVE_TOLERANCE * 1.5);
        assert_eq!(bad.verdict, Verdict::Fail);
    }
}
