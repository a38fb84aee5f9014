//! Repeated-sampling coverage of interval estimates for the effects μ_i in
//! the normal-normal setting z_i | μ_i ~ N(μ_i, V_i), μ_i ~ N(m, A).
//!
//! Three interval constructions are compared:
//!
//! * raw: z ± q√V, ignoring the ensemble.
//! * plug-in: the conditional posterior N((1−B)z + Bm, V(1−B)) with the
//!   hyperparameters replaced by their maximum-likelihood estimates,
//!   B = V/(V+A). Estimation error in (m, A) is ignored.
//! * eb-adjusted: the moment-corrected shrinkage factor
//!   B = ((N−3)/(N−1))·V/(V+Â) and the variance
//!
//!   ```text
//!   s² = V·(1 − ((N−1)/N)·B) + (2/(N−3))·B²·(z − m̂)²
//!   ```
//!
//!   The first term is the posterior variance with a correction for
//!   estimating m. The second approximates Var(B̂)·(z − m̂)², the spread that
//!   the uncertain shrinkage factor adds, and makes intervals widen with
//!   distance from m̂.

use crate::dist::std_quantile;
use crate::error::{Error, Result};
use crate::model::{SamplingVariances, TwoGroupsModel};
use crate::rng::derive_seed;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntervalMethod {
    Raw,
    PluginShrunken,
    EbAdjusted,
}

impl IntervalMethod {
    pub const ALL: [IntervalMethod; 3] = [Self::Raw, Self::PluginShrunken, Self::EbAdjusted];

    pub fn name(self) -> &'static str {
        match self {
            Self::Raw => "raw",
            Self::PluginShrunken => "plugin_shrunken",
            Self::EbAdjusted => "eb_adjusted",
        }
    }
}

impl fmt::Display for IntervalMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for IntervalMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s.trim())
            .ok_or_else(|| Error::invalid(format!("unknown interval method {s:?}; expected raw, plugin_shrunken or eb_adjusted")))
    }
}

/// Normal quantile q for a two-sided interval at the given level.
pub fn nominal_quantile(nominal: f64) -> Result<f64> {
    if !(nominal > 0.0 && nominal < 1.0) {
        return Err(Error::invalid(format!("nominal level must lie in (0, 1), got {nominal}")));
    }
    Ok(std_quantile(0.5 + nominal / 2.0))
}

/// Estimated ensemble for one panel: centre m̂, between-unit variance Â and
/// per-unit shrinkage factors B̂_i.
#[derive(Debug, Clone, PartialEq)]
pub struct ShrinkageFit {
    pub center: f64,
    pub between_variance: f64,
    pub shrinkage: Vec<f64>,
    /// Â is at its zero boundary.
    pub at_boundary: bool,
    n: usize,
}

fn check_panel(z: &[f64], v: &[f64], min_n: usize) -> Result<()> {
    if z.len() != v.len() {
        return Err(Error::invalid("z and variance lists differ in length"));
    }
    if z.len() < min_n {
        return Err(Error::InsufficientData {
            what: "groups for shrinkage intervals",
            needed: min_n,
            got: z.len(),
        });
    }
    if z.iter().any(|x| !x.is_finite()) || v.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
        return Err(Error::invalid("z must be finite and variances positive"));
    }
    Ok(())
}

fn weighted_center(z: &[f64], v: &[f64], a: f64) -> f64 {
    let (num, den) = z.iter().zip(v).fold((0.0, 0.0), |(n, d), (zi, vi)| {
        let w = 1.0 / (vi + a);
        (n + w * zi, d + w)
    });
    num / den
}

impl ShrinkageFit {
    /// Maximum-likelihood hyperparameters, B̂_i = V_i/(V_i + Â). Â solves
    /// the score equation Σ w²((z − m)² − V − A) = 0 with w = 1/(V + A) by
    /// fixed-point iteration, truncated at zero. With equal V this is
    /// max(0, S/N − V) after one step.
    pub fn maximum_likelihood(z: &[f64], v: &[f64]) -> Result<Self> {
        check_panel(z, v, 2)?;
        let n = z.len() as f64;
        let z_bar = z.iter().sum::<f64>() / n;
        let mut a = (z.iter().map(|x| (x - z_bar).powi(2)).sum::<f64>() / n - v.iter().sum::<f64>() / n).max(0.0);
        let mut m = weighted_center(z, v, a);
        for _ in 0..1000 {
            let (num, den) = z.iter().zip(v).fold((0.0, 0.0), |(nu, de), (zi, vi)| {
                let w = 1.0 / (vi + a);
                (nu + w * w * ((zi - m).powi(2) - vi), de + w * w)
            });
            let next = (num / den).max(0.0);
            let done = (next - a).abs() <= 1e-13 * (1.0 + a);
            a = next;
            m = weighted_center(z, v, a);
            if done {
                break;
            }
        }
        Ok(Self {
            center: m,
            between_variance: a,
            shrinkage: v.iter().map(|vi| vi / (vi + a)).collect(),
            at_boundary: a == 0.0,
            n: z.len(),
        })
    }

    /// Truncated method of moments, Â = max(0, Σ(z − z̄)²/(N−1) − mean V),
    /// precision-weighted centre, and B̂_i = ((N−3)/(N−1))·V_i/(V_i + Â).
    pub fn moment_corrected(z: &[f64], v: &[f64]) -> Result<Self> {
        check_panel(z, v, 5)?;
        let n = z.len() as f64;
        let z_bar = z.iter().sum::<f64>() / n;
        let s = z.iter().map(|x| (x - z_bar).powi(2)).sum::<f64>() / (n - 1.0);
        let a = (s - v.iter().sum::<f64>() / n).max(0.0);
        let factor = (n - 3.0) / (n - 1.0);
        Ok(Self {
            center: weighted_center(z, v, a),
            between_variance: a,
            shrinkage: v.iter().map(|vi| factor * vi / (vi + a)).collect(),
            at_boundary: a == 0.0,
            n: z.len(),
        })
    }

    pub fn for_method(method: IntervalMethod, z: &[f64], v: &[f64]) -> Result<Option<Self>> {
        match method {
            IntervalMethod::Raw => Ok(None),
            IntervalMethod::PluginShrunken => Self::maximum_likelihood(z, v).map(Some),
            IntervalMethod::EbAdjusted => Self::moment_corrected(z, v).map(Some),
        }
    }
}

/// Centre and half-width of the interval for one unit with shrinkage
/// factor `b` under a fit of `n` units centred at `center`.
fn center_and_half_width(method: IntervalMethod, z: f64, v: f64, b: f64, center: f64, n: usize, q: f64) -> (f64, f64) {
    let shrunk = (1.0 - b) * z + b * center;
    match method {
        IntervalMethod::Raw => (z, q * v.sqrt()),
        IntervalMethod::PluginShrunken => (shrunk, q * (v * (1.0 - b)).max(0.0).sqrt()),
        IntervalMethod::EbAdjusted => {
            let n = n as f64;
            let var = v * (1.0 - (n - 1.0) / n * b) + 2.0 / (n - 3.0) * b * b * (z - center).powi(2);
            (shrunk, q * var.sqrt())
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntervalSet {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// The hyperparameter fit put Â at zero (full shrinkage).
    pub boundary: bool,
    /// Shrinkage slopes 1 − B̂_i (all 1 for raw intervals).
    pub slope: Vec<f64>,
}

impl IntervalSet {
    pub fn widths(&self) -> impl Iterator<Item = f64> + '_ {
        self.lower.iter().zip(&self.upper).map(|(l, u)| u - l)
    }
}

/// Per-unit intervals for one panel.
pub fn interval_bounds(method: IntervalMethod, z: &[f64], v: &[f64], nominal: f64) -> Result<IntervalSet> {
    let q = nominal_quantile(nominal)?;
    let fit = ShrinkageFit::for_method(method, z, v)?;
    if fit.is_none() {
        check_panel(z, v, 1)?;
    }
    let (mut lower, mut upper, mut slope) = (Vec::with_capacity(z.len()), Vec::with_capacity(z.len()), Vec::with_capacity(z.len()));
    for i in 0..z.len() {
        let (b, center, n) = fit.as_ref().map_or((0.0, 0.0, z.len()), |f| (f.shrinkage[i], f.center, f.n));
        let (c, h) = center_and_half_width(method, z[i], v[i], b, center, n, q);
        lower.push(c - h);
        upper.push(c + h);
        slope.push(1.0 - b);
    }
    Ok(IntervalSet {
        lower,
        upper,
        boundary: fit.is_some_and(|f| f.at_boundary),
        slope,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageConfig {
    /// Data generator; a one-group study uses p0 = 0.
    pub generator: TwoGroupsModel,
    pub n_units: usize,
    pub variances: SamplingVariances,
    pub methods: Vec<IntervalMethod>,
    pub nominal: f64,
    pub replications: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageStratum {
    pub v_min: f64,
    pub v_max: f64,
    pub units: usize,
    pub coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageResult {
    pub method: IntervalMethod,
    pub nominal: f64,
    pub replications: usize,
    pub n_units: usize,
    /// Fraction of all intervals (units × replications) that cover μ_i.
    pub empirical_coverage: f64,
    pub mc_stderr: f64,
    pub mean_width: f64,
    /// Fraction of replications with Â at zero.
    pub boundary_fraction: f64,
    /// Mean of 1 − B̂_i over units and replications.
    pub mean_shrinkage_slope: f64,
    /// Coverage of each unit index across replications.
    pub per_unit: Vec<f64>,
    pub strata: Vec<CoverageStratum>,
    /// Covered intervals in each replication.
    pub per_replication: Vec<u32>,
}

struct ReplicationOutcome {
    covered: Vec<Vec<bool>>,
    width_sum: Vec<f64>,
    slope_sum: Vec<f64>,
    boundary: Vec<bool>,
}

/// Draws `replications` panels from the generator, builds intervals by every
/// requested method on each, and tallies how often they cover μ_i.
/// Replication r uses a seed derived from (seed, r), so results do not
/// depend on the thread count.
pub fn run_coverage_study(cfg: &CoverageConfig) -> Result<Vec<CoverageResult>> {
    if cfg.replications < 100 {
        return Err(Error::invalid(format!("at least 100 replications are required, got {}", cfg.replications)));
    }
    if cfg.methods.is_empty() {
        return Err(Error::invalid("no interval methods requested"));
    }
    let min_n = if cfg.methods.contains(&IntervalMethod::EbAdjusted) { 5 } else { 2 };
    if cfg.n_units < min_n {
        return Err(Error::InsufficientData {
            what: "groups for shrinkage intervals",
            needed: min_n,
            got: cfg.n_units,
        });
    }
    nominal_quantile(cfg.nominal)?;
    cfg.variances.validate(cfg.n_units)?;
    let v: Vec<f64> = (0..cfg.n_units).map(|i| cfg.variances.get(i)).collect();

    let outcomes: Vec<ReplicationOutcome> = (0..cfg.replications)
        .into_par_iter()
        .map(|r| -> Result<ReplicationOutcome> {
            let (z, mu) = cfg.generator.sample_values(cfg.n_units, &cfg.variances, derive_seed(cfg.seed, r as u64))?;
            let mut out = ReplicationOutcome {
                covered: Vec::new(),
                width_sum: Vec::new(),
                slope_sum: Vec::new(),
                boundary: Vec::new(),
            };
            for &method in &cfg.methods {
                let iv = interval_bounds(method, &z, &v, cfg.nominal)?;
                out.covered.push(mu.iter().enumerate().map(|(i, &m)| iv.lower[i] <= m && m <= iv.upper[i]).collect());
                out.width_sum.push(iv.widths().sum());
                out.slope_sum.push(iv.slope.iter().sum());
                out.boundary.push(iv.boundary);
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let strata_of = strata_assignment(&v);
    let reps = cfg.replications as f64;
    let total = reps * cfg.n_units as f64;
    Ok(cfg
        .methods
        .iter()
        .enumerate()
        .map(|(k, &method)| {
            let mut per_unit = vec![0u32; cfg.n_units];
            let mut per_replication = Vec::with_capacity(cfg.replications);
            let (mut width, mut slope, mut boundary) = (0.0, 0.0, 0usize);
            for o in &outcomes {
                let mut hits = 0;
                for (i, &c) in o.covered[k].iter().enumerate() {
                    if c {
                        per_unit[i] += 1;
                        hits += 1;
                    }
                }
                per_replication.push(hits);
                width += o.width_sum[k];
                slope += o.slope_sum[k];
                boundary += o.boundary[k] as usize;
            }
            let hits: u64 = per_replication.iter().map(|&h| h as u64).sum();
            let c = hits as f64 / total;
            let strata = strata_of
                .iter()
                .map(|units| CoverageStratum {
                    v_min: units.iter().map(|&i| v[i]).fold(f64::INFINITY, f64::min),
                    v_max: units.iter().map(|&i| v[i]).fold(f64::NEG_INFINITY, f64::max),
                    units: units.len(),
                    coverage: units.iter().map(|&i| per_unit[i] as f64).sum::<f64>() / (units.len() as f64 * reps),
                })
                .collect();
            CoverageResult {
                method,
                nominal: cfg.nominal,
                replications: cfg.replications,
                n_units: cfg.n_units,
                empirical_coverage: c,
                mc_stderr: (c * (1.0 - c) / total).sqrt(),
                mean_width: width / total,
                boundary_fraction: boundary as f64 / reps,
                mean_shrinkage_slope: slope / total,
                per_unit: per_unit.iter().map(|&h| h as f64 / reps).collect(),
                strata,
                per_replication,
            }
        })
        .collect())
}

/// Groups unit indices by sampling variance: one group per distinct value
/// when there are at most ten, otherwise ten groups by rank of V.
fn strata_assignment(v: &[f64]) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]).then(a.cmp(&b)));
    let mut distinct: Vec<f64> = order.iter().map(|&i| v[i]).collect();
    distinct.dedup();
    if distinct.len() <= 10 {
        return distinct
            .iter()
            .map(|&d| order.iter().copied().filter(|&i| v[i] == d).collect())
            .collect();
    }
    let mut groups = vec![Vec::new(); 10];
    for (rank, &i) in order.iter().enumerate() {
        groups[rank * 10 / v.len()].push(i);
    }
    groups
}

/// Paired comparison of two methods run in the same study: mean difference
/// in per-replication coverage (`b` minus `a`) divided by its standard error.
pub fn paired_coverage_z(a: &CoverageResult, b: &CoverageResult) -> Result<f64> {
    if a.per_replication.len() != b.per_replication.len() || a.n_units != b.n_units {
        return Err(Error::invalid("coverage results come from different studies"));
    }
    let n = a.n_units as f64;
    let d: Vec<f64> = a
        .per_replication
        .iter()
        .zip(&b.per_replication)
        .map(|(&x, &y)| (y as f64 - x as f64) / n)
        .collect();
    let r = d.len() as f64;
    let mean = d.iter().sum::<f64>() / r;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (r - 1.0);
    Ok(if var > 0.0 {
        mean / (var / r).sqrt()
    } else {
        mean.signum() * f64::INFINITY
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BowingProfile {
    pub method: IntervalMethod,
    pub reference_variance: f64,
    /// (|z − m̂|, width) pairs sorted by distance, starting at distance 0.
    pub points: Vec<(f64, f64)>,
    /// Largest width over the width at the centre.
    pub ratio: f64,
}

/// Interval width as a function of distance from the fitted centre, for a
/// unit with the median sampling variance, evaluated at the panel's own
/// distances.
pub fn bowing_profile(method: IntervalMethod, z: &[f64], v: &[f64], nominal: f64) -> Result<BowingProfile> {
    let q = nominal_quantile(nominal)?;
    let fit = ShrinkageFit::for_method(method, z, v)?;
    if fit.is_none() {
        check_panel(z, v, 1)?;
    }
    let mut sorted_v = v.to_vec();
    sorted_v.sort_by(f64::total_cmp);
    let mid = sorted_v.len() / 2;
    let v_ref = if sorted_v.len() % 2 == 1 { sorted_v[mid] } else { 0.5 * (sorted_v[mid - 1] + sorted_v[mid]) };

    let (center, b, n) = match &fit {
        None => (0.0, 0.0, z.len()),
        Some(f) => {
            let n = z.len() as f64;
            let b = match method {
                IntervalMethod::EbAdjusted => (n - 3.0) / (n - 1.0) * v_ref / (v_ref + f.between_variance),
                _ => v_ref / (v_ref + f.between_variance),
            };
            (f.center, b, f.n)
        }
    };
    let width_at = |d: f64| 2.0 * center_and_half_width(method, center + d, v_ref, b, center, n, q).1;
    let mut distances: Vec<f64> = z.iter().map(|zi| (zi - center).abs()).collect();
    distances.push(0.0);
    distances.sort_by(f64::total_cmp);
    let points: Vec<(f64, f64)> = distances.into_iter().map(|d| (d, width_at(d))).collect();
    let base = points[0].1;
    let top = points.iter().map(|p| p.1).fold(base, f64::max);
    Ok(BowingProfile {
        method,
        reference_variance: v_ref,
        points,
        ratio: if base > 0.0 { top / base } else { 1.0 },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{MixingDistribution, NullComponent};
    use proptest::prelude::*;

    fn one_group(variance: f64) -> TwoGroupsModel {
        TwoGroupsModel::new(0.0, NullComponent::theoretical(), MixingDistribution::normal(0.0, variance).unwrap(), 1.0).unwrap()
    }

    fn config(n: usize, reps: usize, seed: u64) -> CoverageConfig {
        CoverageConfig {
            generator: one_group(1.0),
            n_units: n,
            variances: SamplingVariances::Common(1.0),
            methods: IntervalMethod::ALL.to_vec(),
            nominal: 0.95,
            replications: reps,
            seed,
        }
    }

    #[test]
    fn ml_fit_equal_variances_closed_form() {
        let z = [0.3, -1.2, 2.5, 0.9, -0.4, 1.7];
        let fit = ShrinkageFit::maximum_likelihood(&z, &[1.0; 6]).unwrap();
        let mean = z.iter().sum::<f64>() / 6.0;
        let s = z.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 6.0;
        assert!((fit.center - mean).abs() < 1e-12);
        assert!((fit.between_variance - (s - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn ml_fit_unequal_variances_solves_score_equation() {
        let z = [0.3, -1.2, 2.5, 0.9, -0.4, 1.7, 3.1, -2.0];
        let v = [0.5, 1.0, 2.0, 0.25, 1.5, 0.8, 1.0, 3.0];
        let fit = ShrinkageFit::maximum_likelihood(&z, &v).unwrap();
        let a = fit.between_variance;
        assert!(a > 0.0);
        let score: f64 = z
            .iter()
            .zip(&v)
            .map(|(zi, vi)| {
                let w = 1.0 / (vi + a);
                w * w * ((zi - fit.center).powi(2) - vi - a)
            })
            .sum();
        assert!(score.abs() < 1e-9, "score {score}");
    }

    #[test]
    fn no_shrinkage_plugin_equals_raw() {
        // Huge spread: Â → ∞, B̂ → 0.
        let z: Vec<f64> = (0..20).map(|i| (i as f64 - 10.0) * 1e7).collect();
        let v = vec![1.0; 20];
        let raw = interval_bounds(IntervalMethod::Raw, &z, &v, 0.95).unwrap();
        let plug = interval_bounds(IntervalMethod::PluginShrunken, &z, &v, 0.95).unwrap();
        for i in 0..20 {
            assert!((raw.lower[i] - plug.lower[i]).abs() < 1e-6);
            assert!((raw.upper[i] - plug.upper[i]).abs() < 1e-6);
        }
    }

    #[test]
    fn eb_intervals_bow_outward() {
        let z = [0.0, 0.4, -0.3, 1.1, -1.5, 2.8, 0.2, -0.9, 1.6, 0.5];
        let v = vec![1.0; z.len()];
        let fit = ShrinkageFit::moment_corrected(&z, &v).unwrap();
        let iv = interval_bounds(IntervalMethod::EbAdjusted, &z, &v, 0.95).unwrap();
        let widths: Vec<f64> = iv.widths().collect();
        let nearest = (0..z.len()).min_by(|&a, &b| (z[a] - fit.center).abs().total_cmp(&(z[b] - fit.center).abs())).unwrap();
        let farthest = (0..z.len()).max_by(|&a, &b| (z[a] - fit.center).abs().total_cmp(&(z[b] - fit.center).abs())).unwrap();
        assert!(widths[nearest] <= widths[farthest]);
    }

    #[test]
    fn plugin_collapses_at_the_boundary() {
        let z = [0.01, -0.02, 0.03, 0.0, -0.01, 0.02];
        let iv = interval_bounds(IntervalMethod::PluginShrunken, &z, &[1.0; 6], 0.95).unwrap();
        assert!(iv.boundary);
        assert!(iv.widths().all(|w| w == 0.0));
        let eb = interval_bounds(IntervalMethod::EbAdjusted, &z, &[1.0; 6], 0.95).unwrap();
        assert!(eb.boundary);
        assert!(eb.widths().all(|w| w > 0.0));
    }

    #[test]
    fn eb_needs_five_units() {
        assert!(matches!(
            interval_bounds(IntervalMethod::EbAdjusted, &[1.0, 2.0, 3.0, 4.0], &[1.0; 4], 0.95),
            Err(Error::InsufficientData { needed: 5, .. })
        ));
        let mut cfg = config(4, 100, 1);
        assert!(run_coverage_study(&cfg).is_err());
        cfg.methods = vec![IntervalMethod::Raw];
        assert!(run_coverage_study(&cfg).is_ok());
    }

    #[test]
    fn rejects_too_few_replications() {
        assert!(run_coverage_study(&config(10, 99, 1)).is_err());
    }

    #[test]
    fn mc_stderr_matches_its_definition() {
        let res = run_coverage_study(&config(12, 200, 4)).unwrap();
        for r in &res {
            let c = r.empirical_coverage;
            assert!((r.mc_stderr - (c * (1.0 - c) / 2400.0).sqrt()).abs() < 1e-15);
            let from_units = r.per_unit.iter().sum::<f64>() / 12.0;
            assert!((from_units - c).abs() < 1e-12);
        }
    }

    #[test]
    fn independent_of_thread_count() {
        let cfg = config(15, 300, 77);
        let run = |t| rayon::ThreadPoolBuilder::new().num_threads(t).build().unwrap().install(|| run_coverage_study(&cfg).unwrap());
        assert_eq!(run(1), run(6));
    }

    #[test]
    fn strata_follow_distinct_variances() {
        let v = [2.0, 1.0, 2.0, 0.5, 1.0];
        assert_eq!(strata_assignment(&v), vec![vec![3], vec![1, 4], vec![0, 2]]);
        let many: Vec<f64> = (0..95).map(|i| 1.0 + i as f64).collect();
        let s = strata_assignment(&many);
        assert_eq!(s.len(), 10);
        assert!(s.iter().all(|g| g.len() == 9 || g.len() == 10));
    }

    #[test]
    fn degenerate_generator_raw_and_eb_cover() {
        let mut cfg = config(15, 400, 12);
        cfg.generator = TwoGroupsModel::new(0.0, NullComponent::theoretical(), MixingDistribution::point(0.0).unwrap(), 1.0).unwrap();
        for r in run_coverage_study(&cfg).unwrap() {
            if r.method != IntervalMethod::PluginShrunken {
                assert!(r.empirical_coverage >= 0.95 - 3.0 * r.mc_stderr, "{} {}", r.method, r.empirical_coverage);
            }
        }
    }

    #[test]
    fn plugin_bowing_ratio_is_one() {
        let z = [0.0, 0.4, -0.3, 1.1, -1.5, 2.8, 0.2, -0.9, 1.6, 0.5];
        let p = bowing_profile(IntervalMethod::PluginShrunken, &z, &[1.0; 10], 0.95).unwrap();
        assert_eq!(p.ratio, 1.0);
        assert_eq!(bowing_profile(IntervalMethod::Raw, &z, &[1.0; 10], 0.95).unwrap().ratio, 1.0);
    }

    proptest! {
        #[test]
        fn eb_profile_is_nondecreasing(z in prop::collection::vec(-5.0f64..5.0, 5..40)) {
            let v = vec![1.0; z.len()];
            let p = bowing_profile(IntervalMethod::EbAdjusted, &z, &v, 0.9).unwrap();
            for w in p.points.windows(2) {
                prop_assert!(w[1].1 >= w[0].1);
            }
        }

        #[test]
        fn raw_and_eb_intervals_are_proper(z in prop::collection::vec(-5.0f64..5.0, 5..40), v0 in 0.1f64..4.0) {
            let v: Vec<f64> = (0..z.len()).map(|i| v0 * (1.0 + (i % 3) as f64)).collect();
            for m in [IntervalMethod::Raw, IntervalMethod::EbAdjusted] {
                let iv = interval_bounds(m, &z, &v, 0.95).unwrap();
                for (l, u) in iv.lower.iter().zip(&iv.upper) {
                    prop_assert!(l < u && l.is_finite() && u.is_finite());
                }
            }
        }
    }
}
