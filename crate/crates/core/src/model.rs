//! The two-groups generative model: a point null at μ = 0 with probability
//! p0, effects drawn from a mixing distribution g otherwise, and
//! z | μ ~ N(μ, V).

use crate::dist;
use crate::error::{ensure_finite, ensure_positive, Error, Result};
use crate::panel::{Unit, UnitPrecision, ZPanel};
use crate::rng::substream;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NullKind {
    Theoretical,
    Empirical,
}

/// Null distribution of z: N(delta0, sigma0²·V).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NullComponent {
    delta0: f64,
    sigma0: f64,
    kind: NullKind,
}

impl NullComponent {
    pub fn theoretical() -> Self {
        Self {
            delta0: 0.0,
            sigma0: 1.0,
            kind: NullKind::Theoretical,
        }
    }

    pub fn empirical(delta0: f64, sigma0: f64) -> Result<Self> {
        ensure_finite("null.delta0", delta0)?;
        ensure_positive("null.sigma0", sigma0)?;
        Ok(Self {
            delta0,
            sigma0,
            kind: NullKind::Empirical,
        })
    }

    pub fn delta0(&self) -> f64 {
        self.delta0
    }
    pub fn sigma0(&self) -> f64 {
        self.sigma0
    }
    pub fn kind(&self) -> NullKind {
        self.kind
    }

    fn variance(&self, sampling_variance: f64) -> f64 {
        self.sigma0 * self.sigma0 * sampling_variance
    }

    pub fn density(&self, z: f64, sampling_variance: f64) -> f64 {
        dist::pdf(z, self.delta0, self.variance(sampling_variance))
    }

    pub fn ln_density(&self, z: f64, sampling_variance: f64) -> f64 {
        dist::ln_pdf(z, self.delta0, self.variance(sampling_variance))
    }

    pub fn cdf(&self, z: f64, sampling_variance: f64) -> f64 {
        dist::cdf(z, self.delta0, self.variance(sampling_variance))
    }

    pub fn sf(&self, z: f64, sampling_variance: f64) -> f64 {
        dist::sf(z, self.delta0, self.variance(sampling_variance))
    }
}

/// Distribution g of the non-null effects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum MixingDistribution {
    Normal { mean: f64, variance: f64 },
    Grid { support: Vec<f64>, weights: Vec<f64> },
}

impl MixingDistribution {
    pub fn normal(mean: f64, variance: f64) -> Result<Self> {
        ensure_finite("g.mean", mean)?;
        ensure_positive("g.variance", variance)?;
        Ok(Self::Normal { mean, variance })
    }

    /// Discrete g on strictly increasing support points. Weights must be
    /// nonnegative and sum to one within 1e-12.
    pub fn grid(support: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if support.is_empty() {
            return Err(Error::invalid("g.support is empty"));
        }
        if support.len() != weights.len() {
            return Err(Error::invalid(format!(
                "g.support has {} points but g.weights has {}",
                support.len(),
                weights.len()
            )));
        }
        for &u in &support {
            ensure_finite("g.support point", u)?;
        }
        if support.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("g.support must be strictly increasing"));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::invalid("g.weights must be nonnegative and finite"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("g.weights sum to {total}, expected 1")));
        }
        Ok(Self::Grid { support, weights })
    }

    /// Point mass at `at`.
    pub fn point(at: f64) -> Result<Self> {
        Self::grid(vec![at], vec![1.0])
    }

    pub fn mean(&self) -> f64 {
        match self {
            Self::Normal { mean, .. } => *mean,
            Self::Grid { support, weights } => support.iter().zip(weights).map(|(u, w)| u * w).sum(),
        }
    }

    pub fn variance(&self) -> f64 {
        match self {
            Self::Normal { variance, .. } => *variance,
            Self::Grid { support, weights } => {
                let m = self.mean();
                support.iter().zip(weights).map(|(u, w)| w * (u - m) * (u - m)).sum()
            }
        }
    }

    /// Range where g puts (essentially) all of its mass.
    pub fn effective_range(&self) -> (f64, f64) {
        match self {
            Self::Normal { mean, variance } => {
                let sd = variance.sqrt();
                (mean - 10.0 * sd, mean + 10.0 * sd)
            }
            Self::Grid { support, .. } => (support[0], support[support.len() - 1]),
        }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match self {
            Self::Normal { mean, variance } => {
                let e: f64 = rng.sample(StandardNormal);
                mean + variance.sqrt() * e
            }
            Self::Grid { support, weights } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (x, w) in support.iter().zip(weights) {
                    acc += w;
                    if u < acc {
                        return *x;
                    }
                }
                // u landed in the rounding slack above the last cumulative weight
                let last = weights.iter().rposition(|w| *w > 0.0).unwrap_or(0);
                support[last]
            }
        }
    }
}

/// Either one variance for every unit or one per unit.
#[derive(Debug, Clone, PartialEq)]
pub enum SamplingVariances {
    Common(f64),
    PerUnit(Vec<f64>),
}

impl SamplingVariances {
    pub fn get(&self, i: usize) -> f64 {
        match self {
            Self::Common(v) => *v,
            Self::PerUnit(vs) => vs[i],
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        match self {
            Self::Common(v) => ensure_positive("sampling variance", *v),
            Self::PerUnit(vs) => {
                if vs.len() != n {
                    return Err(Error::invalid(format!(
                        "{} sampling variances supplied for {n} units",
                        vs.len()
                    )));
                }
                vs.iter().try_for_each(|v| ensure_positive("sampling variance", *v))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoGroupsModel {
    p0: f64,
    null: NullComponent,
    g: MixingDistribution,
    default_sampling_variance: f64,
}

impl TwoGroupsModel {
    pub fn new(p0: f64, null: NullComponent, g: MixingDistribution, default_sampling_variance: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p0) {
            return Err(Error::invalid(format!("p0 must lie in [0, 1], got {p0}")));
        }
        ensure_positive("sampling_variance", default_sampling_variance)?;
        Ok(Self {
            p0,
            null,
            g,
            default_sampling_variance,
        })
    }

    /// The illustration model: p0 = 0.9, theoretical null, g = N(2.5, 0.5)
    /// with 0.5 read as a variance, z | μ ~ N(μ, 1).
    pub fn illustration() -> Self {
        Self::new(
            0.9,
            NullComponent::theoretical(),
            MixingDistribution::Normal {
                mean: 2.5,
                variance: 0.5,
            },
            1.0,
        )
        .expect("constants are valid")
    }

    pub fn p0(&self) -> f64 {
        self.p0
    }
    pub fn p1(&self) -> f64 {
        1.0 - self.p0
    }
    pub fn null(&self) -> &NullComponent {
        &self.null
    }
    pub fn g(&self) -> &MixingDistribution {
        &self.g
    }
    pub fn default_sampling_variance(&self) -> f64 {
        self.default_sampling_variance
    }

    pub fn with_p0(&self, p0: f64) -> Result<Self> {
        Self::new(p0, self.null, self.g.clone(), self.default_sampling_variance)
    }

    pub fn null_density(&self, z: f64, sampling_variance: f64) -> Result<f64> {
        check_args(z, sampling_variance)?;
        Ok(self.null.density(z, sampling_variance))
    }

    /// f1(z) = ∫ φ_V(z − μ) g(dμ).
    pub fn alt_marginal_density(&self, z: f64, sampling_variance: f64) -> Result<f64> {
        check_args(z, sampling_variance)?;
        Ok(self.alt_density_unchecked(z, sampling_variance))
    }

    pub(crate) fn alt_density_unchecked(&self, z: f64, v: f64) -> f64 {
        match &self.g {
            MixingDistribution::Normal { mean, variance } => dist::pdf(z, *mean, v + variance),
            MixingDistribution::Grid { support, weights } => support
                .iter()
                .zip(weights)
                .map(|(u, w)| w * dist::pdf(z, *u, v))
                .sum(),
        }
    }

    /// log f1(z), stable far into the tails.
    pub(crate) fn ln_alt_density(&self, z: f64, v: f64) -> f64 {
        match &self.g {
            MixingDistribution::Normal { mean, variance } => dist::ln_pdf(z, *mean, v + variance),
            MixingDistribution::Grid { support, weights } => log_sum_exp(
                support
                    .iter()
                    .zip(weights)
                    .filter(|(_, w)| **w > 0.0)
                    .map(|(u, w)| w.ln() + dist::ln_pdf(z, *u, v)),
            ),
        }
    }

    /// f(z) = p0·f0(z) + p1·f1(z).
    pub fn marginal_density(&self, z: f64, sampling_variance: f64) -> Result<f64> {
        check_args(z, sampling_variance)?;
        Ok(self.marginal_density_unchecked(z, sampling_variance))
    }

    pub(crate) fn marginal_density_unchecked(&self, z: f64, v: f64) -> f64 {
        let null = if self.p0 > 0.0 { self.p0 * self.null.density(z, v) } else { 0.0 };
        let alt = if self.p0 < 1.0 { self.p1() * self.alt_density_unchecked(z, v) } else { 0.0 };
        null + alt
    }

    pub(crate) fn alt_sf(&self, z: f64, v: f64) -> f64 {
        match &self.g {
            MixingDistribution::Normal { mean, variance } => dist::sf(z, *mean, v + variance),
            MixingDistribution::Grid { support, weights } => {
                support.iter().zip(weights).map(|(u, w)| w * dist::sf(z, *u, v)).sum()
            }
        }
    }

    pub(crate) fn alt_cdf(&self, z: f64, v: f64) -> f64 {
        match &self.g {
            MixingDistribution::Normal { mean, variance } => dist::cdf(z, *mean, v + variance),
            MixingDistribution::Grid { support, weights } => {
                support.iter().zip(weights).map(|(u, w)| w * dist::cdf(z, *u, v)).sum()
            }
        }
    }

    /// P(Z ≥ z) under the marginal.
    pub fn marginal_upper_tail(&self, z: f64, sampling_variance: f64) -> Result<f64> {
        check_args_allow_inf(z, sampling_variance)?;
        Ok(self.p0 * self.null.sf(z, sampling_variance) + self.p1() * self.alt_sf(z, sampling_variance))
    }

    /// P(Z ≤ z) under the marginal.
    pub fn marginal_cdf(&self, z: f64, sampling_variance: f64) -> Result<f64> {
        check_args_allow_inf(z, sampling_variance)?;
        Ok(self.p0 * self.null.cdf(z, sampling_variance) + self.p1() * self.alt_cdf(z, sampling_variance))
    }

    /// Interval carrying all but a negligible part of the marginal mass,
    /// used as integration limits.
    pub fn z_range(&self, sampling_variance: f64) -> (f64, f64) {
        let null_sd = self.null.sigma0 * sampling_variance.sqrt();
        let (glo, ghi) = self.g.effective_range();
        let alt_sd = sampling_variance.sqrt();
        let lo = (self.null.delta0 - 12.0 * null_sd).min(glo - 12.0 * alt_sd);
        let hi = (self.null.delta0 + 12.0 * null_sd).max(ghi + 12.0 * alt_sd);
        (lo, hi)
    }

    /// Draws a panel of `n` units: μ_i = 0 with probability p0, otherwise
    /// μ_i ~ g; then z_i ~ N(μ_i, V_i) (null units follow the null
    /// component). Unit i uses its own random substream, so the output for a
    /// seed does not depend on evaluation order.
    pub fn sample_panel(&self, n: usize, variances: &SamplingVariances, seed: u64) -> Result<(ZPanel, Vec<f64>)> {
        let (z, mu) = self.sample_values(n, variances, seed)?;
        let width = n.to_string().len();
        let units = z
            .iter()
            .enumerate()
            .map(|(i, &zi)| Unit {
                id: format!("u{:0width$}", i + 1),
                z: zi,
                precision: UnitPrecision::Variance(variances.get(i)),
            })
            .collect();
        Ok((ZPanel::new(units)?, mu))
    }

    /// Same draws as [`sample_panel`](Self::sample_panel) without building ids.
    pub fn sample_values(&self, n: usize, variances: &SamplingVariances, seed: u64) -> Result<(Vec<f64>, Vec<f64>)> {
        if n == 0 {
            return Err(Error::invalid("panel size must be at least 1"));
        }
        variances.validate(n)?;
        let pairs: Vec<(f64, f64)> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut rng = substream(seed, i as u64);
                let v = variances.get(i);
                let is_null = rng.random::<f64>() < self.p0;
                let e: f64 = rng.sample(StandardNormal);
                if is_null {
                    (self.null.delta0 + self.null.sigma0 * v.sqrt() * e, 0.0)
                } else {
                    let mu = self.g.sample(&mut rng);
                    (mu + v.sqrt() * e, mu)
                }
            })
            .collect();
        Ok(pairs.into_iter().unzip())
    }
}

pub(crate) fn log_sum_exp<I: IntoIterator<Item = f64>>(xs: I) -> f64 {
    let xs: Vec<f64> = xs.into_iter().collect();
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

fn check_args(z: f64, v: f64) -> Result<()> {
    ensure_finite("z", z)?;
    ensure_positive("sampling variance", v)
}

fn check_args_allow_inf(z: f64, v: f64) -> Result<()> {
    if z.is_nan() {
        return Err(Error::invalid("z is NaN"));
    }
    ensure_positive("sampling variance", v)
}
