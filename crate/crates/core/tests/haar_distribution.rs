use coalscale::hciz::sample_haar_unitary;
use coalscale::rng::{stream, Purpose};

/// Kolmogorov–Smirnov distance of a sample from Beta(1, n−1), the law of
/// `|u_11|²` for Haar `U(n)`.
fn ks_beta_one(sample: &mut [f64], n: usize) -> f64 {
    sample.sort_by(f64::total_cmp);
    let m = sample.len() as f64;
    let cdf = |v: f64| 1.0 - (1.0 - v).powi(n as i32 - 1);
    sample
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = cdf(v);
            (f - i as f64 / m).abs().max((f - (i + 1) as f64 / m).abs())
        })
        .fold(0.0, f64::max)
}

fn first_entry_weights(n: usize, count: usize, seed: u64) -> Vec<f64> {
    let mut rng = stream(seed, Purpose::Haar, 0);
    (0..count)
        .map(|_| sample_haar_unitary(n, &mut rng).unwrap().get(0, 0).norm_sqr())
        .collect()
}

#[test]
fn corner_weight_is_uniform_for_two_by_two() {
    let count = 20_000;
    let mut w = first_entry_weights(2, count, 3);
    // 1% critical value of the one-sample KS statistic.
    assert!(ks_beta_one(&mut w, 2) < 1.63 / (count as f64).sqrt());
}

#[test]
fn corner_weight_follows_beta_for_larger_n() {
    let count = 20_000;
    for n in [3, 5] {
        let mut w = first_entry_weights(n, count, 4);
        assert!(ks_beta_one(&mut w, n) < 1.63 / (count as f64).sqrt(), "n = {n}");
    }
}

#[test]
fn diagonal_phase_is_not_biased() {
    let mut rng = stream(9, Purpose::Haar, 1);
    let count = 20_000;
    let mean = (0..count)
        .map(|_| sample_haar_unitary(3, &mut rng).unwrap().get(1, 1))
        .fold(num_complex::Complex64::new(0.0, 0.0), |a, b| a + b)
        / count as f64;
    // E[u_ii] = 0; each entry has variance 1/3.
    assert!(mean.norm() < 4.0 * (1.0 / 3.0 / count as f64).sqrt(), "{mean}");
}
