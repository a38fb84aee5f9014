//! Normal and Student-t helpers plus the polygamma pieces used by the
//! variance-moderation fit.

use libm::erfc;
use statrs::function::{beta::beta_reg, erf::erfc_inv};
use std::f64::consts::{PI, SQRT_2};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Standard normal density.
pub fn std_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Normal density with the given mean and *variance*.
pub fn pdf(x: f64, mean: f64, variance: f64) -> f64 {
    ln_pdf(x, mean, variance).exp()
}

pub fn ln_pdf(x: f64, mean: f64, variance: f64) -> f64 {
    let d = x - mean;
    -0.5 * d * d / variance - 0.5 * variance.ln() - LN_SQRT_2PI
}

/// Standard normal CDF.
pub fn std_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// Standard normal upper tail, accurate far into the right tail.
pub fn std_sf(x: f64) -> f64 {
    0.5 * erfc(x / SQRT_2)
}

pub fn cdf(x: f64, mean: f64, variance: f64) -> f64 {
    std_cdf((x - mean) / variance.sqrt())
}

pub fn sf(x: f64, mean: f64, variance: f64) -> f64 {
    std_sf((x - mean) / variance.sqrt())
}

/// Standard normal quantile.
pub fn std_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        f64::NEG_INFINITY
    } else if p >= 1.0 {
        f64::INFINITY
    } else {
        // The inverse from statrs is a rational approximation; one Newton
        // step against the accurate tail function tightens it to a few ulp.
        let x = -SQRT_2 * erfc_inv(2.0 * p);
        let resid = if p < 0.5 { std_cdf(x) - p } else { (1.0 - p) - std_sf(x) };
        let d = std_pdf(x);
        if d > 0.0 && resid.is_finite() {
            x - resid / d
        } else {
            x
        }
    }
}

/// Upper tail P(T > t) of Student's t with `df` degrees of freedom.
/// An infinite `df` gives the normal tail.
pub fn student_t_sf(t: f64, df: f64) -> f64 {
    if df.is_infinite() {
        return std_sf(t);
    }
    let x = df / (df + t * t);
    let half = 0.5 * beta_reg(0.5 * df, 0.5, x);
    if t >= 0.0 {
        half
    } else {
        1.0 - half
    }
}

/// Maps a t statistic onto the z scale with matching tail probability,
/// `Φ⁻¹(F_t(t))`, working from the smaller tail so large |t| stays finite.
pub fn t_to_z(t: f64, df: f64) -> f64 {
    if t == 0.0 {
        return 0.0;
    }
    let tail = student_t_sf(t.abs(), df).max(f64::MIN_POSITIVE);
    let z = -std_quantile(tail);
    z.copysign(t)
}

/// Trigamma function ψ'(x) for x > 0.
pub fn trigamma(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 10.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let x2 = 1.0 / (x * x);
    // asymptotic series in 1/x
    let series = 1.0 / x
        + x2 / 2.0
        + (x2 / x) * (1.0 / 6.0 - x2 * (1.0 / 30.0 - x2 * (1.0 / 42.0 - x2 * (1.0 / 30.0 - x2 * 5.0 / 66.0))));
    acc + series
}

/// Inverse of the trigamma function by bisection on log x. Trigamma is
/// strictly decreasing on (0, ∞), so the bracket always contains the root.
pub fn trigamma_inverse(y: f64) -> f64 {
    debug_assert!(y > 0.0);
    let (mut lo, mut hi) = (1e-8_f64, 1.0_f64);
    while trigamma(hi) > y {
        hi *= 2.0;
        if hi > 1e300 {
            return f64::INFINITY;
        }
    }
    while trigamma(lo) < y {
        lo *= 0.5;
        if lo < 1e-300 {
            return lo;
        }
    }
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if trigamma(mid) > y {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi / lo - 1.0 < 1e-15 {
            break;
        }
    }
    (lo * hi).sqrt()
}

pub use statrs::function::gamma::digamma;
