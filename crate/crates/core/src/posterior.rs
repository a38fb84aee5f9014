//! Posterior quantities for a single unit and ranked selection over a panel.
//!
//! Given z, the effect has posterior
//! `p(μ|z) = fdr(z)·δ0(μ) + (1 − fdr(z))·h(μ|z)`, where h is the posterior
//! of μ under the alternative. Exceedance probabilities P(μ > k | z) follow
//! directly, counting the null atom only when 0 > k.

use crate::dist;
use crate::error::{ensure_finite, ensure_positive, Error, Result};
use crate::model::{MixingDistribution, TwoGroupsModel};
use crate::panel::ZPanel;
use crate::quadrature::quad;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;

/// Which side(s) of the z axis a tail quantity refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Tail {
    Lower,
    Upper,
    TwoSided,
}

impl std::str::FromStr for Tail {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lower" => Ok(Tail::Lower),
            "upper" => Ok(Tail::Upper),
            "two-sided" | "both" => Ok(Tail::TwoSided),
            other => Err(Error::invalid(format!("unknown tail {other:?} (lower, upper, two-sided)"))),
        }
    }
}

impl std::fmt::Display for Tail {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Tail::Lower => "lower",
            Tail::Upper => "upper",
            Tail::TwoSided => "two-sided",
        })
    }
}

fn check(z: f64, v: f64) -> Result<()> {
    ensure_finite("z", z)?;
    ensure_positive("sampling variance", v)
}

/// Local false discovery rate fdr(z) = p0·f0(z) / f(z), evaluated in log
/// space so it stays defined far into the tails.
pub fn local_fdr(model: &TwoGroupsModel, z: f64, sampling_variance: f64) -> Result<f64> {
    check(z, sampling_variance)?;
    let p0 = model.p0();
    let ln_null = if p0 > 0.0 {
        p0.ln() + model.null().ln_density(z, sampling_variance)
    } else {
        f64::NEG_INFINITY
    };
    let ln_alt = if p0 < 1.0 {
        model.p1().ln() + model.ln_alt_density(z, sampling_variance)
    } else {
        f64::NEG_INFINITY
    };
    if ln_null == f64::NEG_INFINITY && ln_alt == f64::NEG_INFINITY || ln_null.is_nan() || ln_alt.is_nan() {
        return Err(Error::DegeneratePoint {
            z,
            what: "marginal density f(z)",
        });
    }
    if ln_alt == f64::NEG_INFINITY {
        return Ok(1.0);
    }
    if ln_null == f64::NEG_INFINITY {
        return Ok(0.0);
    }
    Ok(1.0 / (1.0 + (ln_alt - ln_null).exp()))
}

fn tail_masses(model: &TwoGroupsModel, z: f64, v: f64, tail: Tail) -> (f64, f64) {
    let null = model.null();
    match tail {
        Tail::Lower => (null.cdf(z, v), model.alt_cdf(z, v)),
        Tail::Upper => (null.sf(z, v), model.alt_sf(z, v)),
        Tail::TwoSided => {
            let a = z.abs();
            (null.cdf(-a, v) + null.sf(a, v), model.alt_cdf(-a, v) + model.alt_sf(a, v))
        }
    }
}

/// Tail-area Fdr: P(H0 | Z in the tail beyond z).
pub fn tail_fdr(model: &TwoGroupsModel, z: f64, sampling_variance: f64, tail: Tail) -> Result<f64> {
    check(z, sampling_variance)?;
    let (null_mass, alt_mass) = tail_masses(model, z, sampling_variance, tail);
    let num = model.p0() * null_mass;
    let den = num + model.p1() * alt_mass;
    if den <= 0.0 || !den.is_finite() {
        return Err(Error::DegeneratePoint { z, what: "tail mass" });
    }
    Ok((num / den).clamp(0.0, 1.0))
}

fn tail_region(model: &TwoGroupsModel, z: f64, v: f64, tail: Tail) -> Vec<(f64, f64)> {
    let (lo, hi) = model.z_range(v);
    match tail {
        Tail::Lower => vec![(lo.min(z), z)],
        Tail::Upper => vec![(z, hi.max(z))],
        Tail::TwoSided => {
            let a = z.abs();
            vec![(lo.min(-a), -a), (a, hi.max(a))]
        }
    }
}

/// E[fdr(Z) | Z in tail] by quadrature of fdr(t)·f(t) over the tail,
/// divided by the tail mass. Equals [`tail_fdr`] in exact arithmetic.
pub fn average_local_fdr(model: &TwoGroupsModel, z: f64, sampling_variance: f64, tail: Tail) -> Result<f64> {
    check(z, sampling_variance)?;
    let v = sampling_variance;
    let integrand = |t: f64| match local_fdr(model, t, v) {
        Ok(fdr) => fdr * model.marginal_density_unchecked(t, v),
        Err(_) => 0.0,
    };
    let num: f64 = tail_region(model, z, v, tail).into_iter().map(|(a, b)| quad(integrand, a, b)).sum();
    let mass: f64 = tail_region(model, z, v, tail)
        .into_iter()
        .map(|(a, b)| quad(|t| model.marginal_density_unchecked(t, v), a, b))
        .sum();
    if mass <= 0.0 {
        return Err(Error::DegeneratePoint { z, what: "tail mass" });
    }
    Ok(num / mass)
}

/// Posterior of μ given z under the alternative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ConditionalPosterior {
    Normal { mean: f64, variance: f64 },
    Atoms { support: Vec<f64>, weights: Vec<f64> },
}

impl ConditionalPosterior {
    pub fn mean(&self) -> f64 {
        match self {
            Self::Normal { mean, .. } => *mean,
            Self::Atoms { support, weights } => support.iter().zip(weights).map(|(u, w)| u * w).sum(),
        }
    }

    pub fn variance(&self) -> f64 {
        match self {
            Self::Normal { variance, .. } => *variance,
            Self::Atoms { support, weights } => {
                let m = self.mean();
                support.iter().zip(weights).map(|(u, w)| w * (u - m) * (u - m)).sum()
            }
        }
    }

    /// Density at μ for the normal case; probability mass at μ for atoms.
    pub fn density(&self, mu: f64) -> f64 {
        match self {
            Self::Normal { mean, variance } => dist::pdf(mu, *mean, *variance),
            Self::Atoms { support, weights } => support
                .iter()
                .zip(weights)
                .filter(|(u, _)| **u == mu)
                .map(|(_, w)| *w)
                .sum(),
        }
    }

    /// P_h(μ > k), strict.
    pub fn prob_above(&self, k: f64) -> f64 {
        match self {
            Self::Normal { mean, variance } => dist::sf(k, *mean, *variance),
            Self::Atoms { support, weights } => {
                support.iter().zip(weights).filter(|(u, _)| **u > k).map(|(_, w)| *w).sum()
            }
        }
    }

    /// P_h(μ < k), strict.
    pub fn prob_below(&self, k: f64) -> f64 {
        match self {
            Self::Normal { mean, variance } => dist::cdf(k, *mean, *variance),
            Self::Atoms { support, weights } => {
                support.iter().zip(weights).filter(|(u, _)| **u < k).map(|(_, w)| *w).sum()
            }
        }
    }
}

/// h(μ|z) = φ_V(z − μ)·g(μ) / f1(z). Conjugate normal for normal g,
/// reweighted atoms for grid g.
pub fn h_posterior(model: &TwoGroupsModel, z: f64, sampling_variance: f64) -> Result<ConditionalPosterior> {
    check(z, sampling_variance)?;
    let v = sampling_variance;
    match model.g() {
        MixingDistribution::Normal { mean, variance } => {
            if !model.ln_alt_density(z, v).is_finite() {
                return Err(Error::DegeneratePoint { z, what: "f1(z)" });
            }
            let post_var = variance * v / (variance + v);
            let post_mean = (variance * z + v * mean) / (variance + v);
            Ok(ConditionalPosterior::Normal {
                mean: post_mean,
                variance: post_var,
            })
        }
        MixingDistribution::Grid { support, weights } => {
            let logs: Vec<f64> = support
                .iter()
                .zip(weights)
                .map(|(u, w)| if *w > 0.0 { w.ln() + dist::ln_pdf(z, *u, v) } else { f64::NEG_INFINITY })
                .collect();
            let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if !max.is_finite() {
                return Err(Error::DegeneratePoint { z, what: "f1(z)" });
            }
            let raw: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
            let total: f64 = raw.iter().sum();
            Ok(ConditionalPosterior::Atoms {
                support: support.clone(),
                weights: raw.into_iter().map(|w| w / total).collect(),
            })
        }
    }
}

/// Exceedance probability on the requested side:
/// upper P(μ > k | z), lower P(μ < −k | z), two-sided P(|μ| > k | z).
pub fn exceedance(model: &TwoGroupsModel, z: f64, sampling_variance: f64, k: f64, side: Tail) -> Result<f64> {
    ensure_finite("k", k)?;
    let fdr = local_fdr(model, z, sampling_variance)?;
    let alt = 1.0 - fdr;
    // h is only needed when the alternative carries weight
    let h = if alt > 0.0 { Some(h_posterior(model, z, sampling_variance)?) } else { None };
    let above = |x: f64| h.as_ref().map_or(0.0, |h| h.prob_above(x));
    let below = |x: f64| h.as_ref().map_or(0.0, |h| h.prob_below(x));
    let p = match side {
        Tail::Upper => {
            let atom = if 0.0 > k { fdr } else { 0.0 };
            atom + alt * above(k)
        }
        Tail::Lower => {
            let atom = if 0.0 < -k { fdr } else { 0.0 };
            atom + alt * below(-k)
        }
        Tail::TwoSided => {
            if k < 0.0 {
                1.0
            } else {
                alt * (above(k) + below(-k))
            }
        }
    };
    Ok(p.clamp(0.0, 1.0))
}

/// P(μ > k | z).
pub fn exceedance_probability(model: &TwoGroupsModel, z: f64, sampling_variance: f64, k: f64) -> Result<f64> {
    exceedance(model, z, sampling_variance, k, Tail::Upper)
}

/// Population average of the exceedance over units whose z falls in the
/// selection tail: ∫_tail P(μ>k|t) f(t) dt / P(Z in tail).
pub fn population_averaged_exceedance(
    model: &TwoGroupsModel,
    threshold: f64,
    k: f64,
    sampling_variance: f64,
    tail: Tail,
) -> Result<f64> {
    check(threshold, sampling_variance)?;
    ensure_finite("k", k)?;
    let v = sampling_variance;
    let integrand = |t: f64| {
        exceedance(model, t, v, k, tail).map_or(0.0, |e| e * model.marginal_density_unchecked(t, v))
    };
    let num: f64 = tail_region(model, threshold, v, tail).into_iter().map(|(a, b)| quad(integrand, a, b)).sum();
    let mass = match tail {
        Tail::Upper => model.marginal_upper_tail(threshold, v)?,
        Tail::Lower => model.marginal_cdf(threshold, v)?,
        Tail::TwoSided => {
            let a = threshold.abs();
            model.marginal_cdf(-a, v)? + model.marginal_upper_tail(a, v)?
        }
    };
    if mass <= 0.0 {
        return Err(Error::DegeneratePoint {
            z: threshold,
            what: "selection tail mass",
        });
    }
    Ok(num / mass)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub id: String,
    pub z: f64,
    pub sampling_variance: f64,
    pub fdr: f64,
    /// (k, exceedance probability) pairs.
    pub exceedance: Vec<(f64, f64)>,
    pub h_mean: f64,
    pub h_variance: f64,
}

impl PosteriorSummary {
    pub fn exceedance_at(&self, k: f64) -> Option<f64> {
        self.exceedance.iter().find(|(kk, _)| *kk == k).map(|(_, p)| *p)
    }
}

pub fn summarize(
    model: &TwoGroupsModel,
    id: &str,
    z: f64,
    sampling_variance: f64,
    ks: &[f64],
    side: Tail,
) -> Result<PosteriorSummary> {
    let fdr = local_fdr(model, z, sampling_variance)?;
    let h = h_posterior(model, z, sampling_variance)?;
    let exceedance = ks
        .iter()
        .map(|&k| exceedance(model, z, sampling_variance, k, side).map(|p| (k, p)))
        .collect::<Result<Vec<_>>>()?;
    Ok(PosteriorSummary {
        id: id.to_string(),
        z,
        sampling_variance,
        fdr,
        exceedance,
        h_mean: h.mean(),
        h_variance: h.variance(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub threshold_z: f64,
    pub k: f64,
    pub tail: Tail,
    pub panel_size: usize,
    /// Sorted by exceedance, then |z|, descending; then id ascending.
    pub selected: Vec<PosteriorSummary>,
    /// Mean exceedance over the selected units; absent for an empty selection.
    pub averaged_exceedance: Option<f64>,
    pub expected_true_exceedances: Option<f64>,
}

fn in_tail(z: f64, threshold: f64, tail: Tail) -> bool {
    match tail {
        Tail::Upper => z >= threshold,
        Tail::Lower => z <= threshold,
        Tail::TwoSided => z.abs() >= threshold.abs(),
    }
}

fn ranking_order(a: (f64, f64, &str), b: (f64, f64, &str)) -> Ordering {
    b.0.total_cmp(&a.0)
        .then_with(|| b.1.abs().total_cmp(&a.1.abs()))
        .then_with(|| a.2.cmp(b.2))
}

/// Selects units in the tail beyond `threshold_z`, computes each unit's
/// exceedance with its own sampling variance and ranks them.
pub fn select_and_rank(
    model: &TwoGroupsModel,
    panel: &ZPanel,
    threshold_z: f64,
    k: f64,
    tail: Tail,
) -> Result<SelectionReport> {
    ensure_finite("threshold", threshold_z)?;
    ensure_finite("k", k)?;
    if panel.is_empty() {
        return Err(Error::invalid("panel is empty"));
    }
    let sigma2 = model.default_sampling_variance();
    let mut selected = panel
        .units()
        .par_iter()
        .filter(|u| in_tail(u.z, threshold_z, tail))
        .map(|u| summarize(model, &u.id, u.z, u.sampling_variance(sigma2), &[k], tail))
        .collect::<Result<Vec<_>>>()?;
    selected.sort_by(|a, b| {
        ranking_order((a.exceedance[0].1, a.z, &a.id), (b.exceedance[0].1, b.z, &b.id))
    });
    let (averaged, expected) = if selected.is_empty() {
        (None, None)
    } else {
        let total: f64 = selected.iter().map(|s| s.exceedance[0].1).sum();
        let avg = total / selected.len() as f64;
        (Some(avg), Some(avg * selected.len() as f64))
    };
    Ok(SelectionReport {
        threshold_z,
        k,
        tail,
        panel_size: panel.len(),
        selected,
        averaged_exceedance: averaged,
        expected_true_exceedances: expected,
    })
}

/// A pair of units whose exceedance order flips between two thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderSwap {
    /// Ranked above `second` at `k_first`...
    pub first: String,
    pub second: String,
    pub k_first: f64,
    /// ...and below it at `k_second`.
    pub k_second: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSensitivity {
    pub ks: Vec<f64>,
    /// Unit ids in rank order, one list per k.
    pub rankings: Vec<Vec<String>>,
    pub any_order_change: bool,
    pub swap: Option<OrderSwap>,
}

/// Exceedance differences below this are treated as ties.
const SWAP_EPS: f64 = 1e-12;

/// Ranks the panel by exceedance for each k and reports whether any pair of
/// units changes order between two k values.
pub fn ranking_k_sensitivity(model: &TwoGroupsModel, panel: &ZPanel, ks: &[f64], side: Tail) -> Result<KSensitivity> {
    let mut distinct: Vec<f64> = ks.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(Error::invalid("need at least two distinct k values"));
    }
    let sigma2 = model.default_sampling_variance();
    let units = panel.units();
    // table[unit][k]
    let table = units
        .par_iter()
        .map(|u| {
            let v = u.sampling_variance(sigma2);
            ks.iter().map(|&k| exceedance(model, u.z, v, k, side)).collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let rankings = (0..ks.len())
        .map(|j| {
            let mut idx: Vec<usize> = (0..units.len()).collect();
            idx.sort_by(|&a, &b| {
                ranking_order(
                    (table[a][j], units[a].z, &units[a].id),
                    (table[b][j], units[b].z, &units[b].id),
                )
            });
            idx.into_iter().map(|i| units[i].id.clone()).collect()
        })
        .collect();

    let mut swap = None;
    'outer: for a in 0..ks.len() {
        for b in 0..ks.len() {
            if a == b || ks[a] == ks[b] {
                continue;
            }
            if let Some((i, j)) = find_swap(&table, a, b) {
                swap = Some(OrderSwap {
                    first: units[i].id.clone(),
                    second: units[j].id.clone(),
                    k_first: ks[a],
                    k_second: ks[b],
                });
                break 'outer;
            }
        }
    }
    Ok(KSensitivity {
        ks: ks.to_vec(),
        rankings,
        any_order_change: swap.is_some(),
        swap,
    })
}

/// Finds (i, j) with e_a(i) > e_a(j) + eps and e_b(i) < e_b(j) − eps.
fn find_swap(table: &[Vec<f64>], a: usize, b: usize) -> Option<(usize, usize)> {
    let mut order: Vec<usize> = (0..table.len()).collect();
    order.sort_by(|&x, &y| table[y][a].total_cmp(&table[x][a]));
    let mut prefix = 0;
    let mut min_b = f64::INFINITY;
    let mut argmin = usize::MAX;
    for &j in &order {
        while prefix < order.len() && table[order[prefix]][a] > table[j][a] + SWAP_EPS {
            let i = order[prefix];
            if table[i][b] < min_b {
                min_b = table[i][b];
                argmin = i;
            }
            prefix += 1;
        }
        if argmin != usize::MAX && table[j][b] > min_b + SWAP_EPS {
            return Some((argmin, j));
        }
    }
    None
}
