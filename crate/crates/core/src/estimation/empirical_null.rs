//! Empirical null by central matching: smooth the histogram of z on the log
//! scale, then fit a parabola to the central part of the smoothed log
//! density. A parabola a + b·x + c·x² is the log of a normal density with
//! mean −b/(2c) and variance −1/(2c).

use super::solve_dense;
use crate::error::{Error, Result};
use crate::model::NullComponent;
use crate::panel::ZPanel;

const BINS: usize = 100;
const DEGREE: usize = 6;
const MIN_UNITS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmpiricalNullOptions {
    /// Fraction of the data, centred on the median, used for the parabola.
    pub center_fraction: f64,
}

impl Default for EmpiricalNullOptions {
    fn default() -> Self {
        Self { center_fraction: 0.5 }
    }
}

pub fn fit_empirical_null(panel: &ZPanel, opts: EmpiricalNullOptions) -> Result<NullComponent> {
    fit_empirical_null_z(&panel.z_values(), opts)
}

pub fn fit_empirical_null_z(z: &[f64], opts: EmpiricalNullOptions) -> Result<NullComponent> {
    if z.len() < MIN_UNITS {
        return Err(Error::InsufficientData {
            what: "units for an empirical null",
            needed: MIN_UNITS,
            got: z.len(),
        });
    }
    let frac = opts.center_fraction;
    if !(frac > 0.0 && frac <= 1.0) {
        return Err(Error::invalid(format!("center fraction must lie in (0, 1], got {frac}")));
    }
    let mut sorted = z.to_vec();
    sorted.sort_by(f64::total_cmp);

    let lo = quantile(&sorted, 0.0005);
    let hi = quantile(&sorted, 0.9995);
    if !(hi > lo) {
        return Err(Error::EmpiricalNullFailure("z-values have no spread".into()));
    }
    let width = (hi - lo) / BINS as f64;
    let mut counts = vec![0.0; BINS];
    for &x in sorted.iter().filter(|&&x| x >= lo && x <= hi) {
        let b = (((x - lo) / width) as usize).min(BINS - 1);
        counts[b] += 1.0;
    }
    let centers: Vec<f64> = (0..BINS).map(|b| lo + (b as f64 + 0.5) * width).collect();
    let log_density = smooth_log_counts(&centers, &counts)?;

    let c_lo = quantile(&sorted, (1.0 - frac) / 2.0);
    let c_hi = quantile(&sorted, (1.0 + frac) / 2.0);
    let (xs, ys): (Vec<f64>, Vec<f64>) = centers
        .iter()
        .zip(&log_density)
        .filter(|(&x, _)| x >= c_lo && x <= c_hi)
        .map(|(&x, &y)| (x, y))
        .unzip();
    if xs.len() < 3 {
        return Err(Error::EmpiricalNullFailure(format!(
            "central range holds {} histogram bins; at least 3 are needed",
            xs.len()
        )));
    }
    let x_bar = xs.iter().sum::<f64>() / xs.len() as f64;
    let coef = least_squares(&xs.iter().map(|x| x - x_bar).collect::<Vec<_>>(), &ys, 2)
        .ok_or_else(|| Error::EmpiricalNullFailure("central parabola fit is singular".into()))?;
    let (b, c) = (coef[1], coef[2]);
    if !(c < 0.0) {
        return Err(Error::EmpiricalNullFailure(
            "smoothed log density is not concave over the central range".into(),
        ));
    }
    let sigma0 = (-1.0 / (2.0 * c)).sqrt();
    let delta0 = x_bar - b / (2.0 * c);
    NullComponent::empirical(delta0, sigma0).map_err(|e| Error::EmpiricalNullFailure(e.to_string()))
}

/// Linear-interpolation sample quantile of sorted data.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let i = h.floor() as usize;
    let frac = h - i as f64;
    match sorted.get(i + 1) {
        Some(&next) => sorted[i] + frac * (next - sorted[i]),
        None => sorted[i],
    }
}

fn standardize(x: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let sd = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    x.iter().map(|v| (v - mean) / sd).collect()
}

fn design(x: &[f64], degree: usize) -> Vec<Vec<f64>> {
    x.iter().map(|&v| (0..=degree).map(|p| v.powi(p as i32)).collect()).collect()
}

fn least_squares(x: &[f64], y: &[f64], degree: usize) -> Option<Vec<f64>> {
    let rows = design(x, degree);
    weighted_normal_equations(&rows, &vec![1.0; y.len()], y)
}

fn weighted_normal_equations(rows: &[Vec<f64>], w: &[f64], y: &[f64]) -> Option<Vec<f64>> {
    let p = rows[0].len();
    let mut a = vec![vec![0.0; p]; p];
    let mut b = vec![0.0; p];
    for ((row, &wi), &yi) in rows.iter().zip(w).zip(y) {
        for j in 0..p {
            b[j] += wi * row[j] * yi;
            for k in 0..p {
                a[j][k] += wi * row[j] * row[k];
            }
        }
    }
    solve_dense(a, b)
}

fn poisson_deviance(y: &[f64], eta: &[f64]) -> f64 {
    y.iter()
        .zip(eta)
        .map(|(&yi, &e)| {
            let mu = e.exp();
            let term = if yi > 0.0 { yi * (yi / mu).ln() } else { 0.0 };
            2.0 * (term - (yi - mu))
        })
        .sum()
}

/// Poisson regression of the bin counts on a degree-6 polynomial in the
/// (standardized) bin centre, by iteratively reweighted least squares.
/// Returns the fitted log counts, which equal the log density up to a
/// constant.
fn smooth_log_counts(centers: &[f64], counts: &[f64]) -> Result<Vec<f64>> {
    let rows = design(&standardize(centers), DEGREE);
    let linear = |beta: &[f64]| -> Vec<f64> { rows.iter().map(|r| r.iter().zip(beta).map(|(a, b)| a * b).sum()).collect() };

    let mean_count = counts.iter().sum::<f64>() / counts.len() as f64;
    let mut beta = vec![0.0; DEGREE + 1];
    beta[0] = (mean_count + 0.5).ln();
    let mut eta = linear(&beta);
    let mut dev = poisson_deviance(counts, &eta);
    let failure = || Error::EmpiricalNullFailure("histogram smoothing did not converge".into());

    for _ in 0..100 {
        let mu: Vec<f64> = eta.iter().map(|e| e.exp()).collect();
        let work: Vec<f64> = eta.iter().zip(&mu).zip(counts).map(|((e, m), y)| e + (y - m) / m).collect();
        let target = weighted_normal_equations(&rows, &mu, &work).ok_or_else(failure)?;

        // Step halving keeps the deviance from increasing.
        let mut step = 1.0;
        let (new_beta, new_eta, new_dev) = loop {
            let cand: Vec<f64> = beta.iter().zip(&target).map(|(b, t)| b + step * (t - b)).collect();
            let cand_eta = linear(&cand);
            let cand_dev = poisson_deviance(counts, &cand_eta);
            if cand_dev.is_finite() && cand_dev <= dev * (1.0 + 1e-12) {
                break (cand, cand_eta, cand_dev);
            }
            step /= 2.0;
            if step < 1e-9 {
                return Err(failure());
            }
        };
        let moved = new_beta.iter().zip(&beta).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let settled = (dev - new_dev).abs() <= 1e-12 * (1.0 + dev.abs());
        beta = new_beta;
        eta = new_eta;
        dev = new_dev;
        if moved < 1e-10 || settled {
            return Ok(eta);
        }
    }
    Err(failure())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn normal_draws(n: usize, mean: f64, sd: f64, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = Normal::new(mean, sd).unwrap();
        (0..n).map(|_| d.sample(&mut rng)).collect()
    }

    #[test]
    fn quantile_interpolates() {
        let s = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&s, 0.0), 1.0);
        assert_eq!(quantile(&s, 1.0), 4.0);
        assert!((quantile(&s, 0.5) - 2.5).abs() < 1e-15);
    }

    #[test]
    fn recovers_a_shifted_wide_normal() {
        let z = normal_draws(20_000, 0.3, 1.4, 11);
        let null = fit_empirical_null_z(&z, EmpiricalNullOptions::default()).unwrap();
        assert!((null.delta0() - 0.3).abs() < 0.08, "delta0 {}", null.delta0());
        assert!((null.sigma0() - 1.4).abs() < 0.08, "sigma0 {}", null.sigma0());
    }

    #[test]
    fn too_few_units() {
        let z = normal_draws(199, 0.0, 1.0, 1);
        assert!(matches!(
            fit_empirical_null_z(&z, EmpiricalNullOptions::default()),
            Err(Error::InsufficientData { needed: 200, .. })
        ));
    }

    #[test]
    fn convex_centre_is_reported() {
        // Two well-separated clusters leave a trough in the middle.
        let mut z = normal_draws(2000, -4.0, 0.5, 2);
        z.extend(normal_draws(2000, 4.0, 0.5, 3));
        assert!(matches!(
            fit_empirical_null_z(&z, EmpiricalNullOptions { center_fraction: 0.2 }),
            Err(Error::EmpiricalNullFailure(_))
        ));
    }

    #[test]
    fn constant_data_fails_cleanly() {
        assert!(fit_empirical_null_z(&[1.0; 300], EmpiricalNullOptions::default()).is_err());
    }
}
