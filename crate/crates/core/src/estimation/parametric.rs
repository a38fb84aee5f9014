use super::{relative_change, FitResult, FitWarning};
use crate::dist;
use crate::error::{Error, Result};
use crate::model::{MixingDistribution, NullComponent, TwoGroupsModel};
use crate::panel::ZPanel;
use rayon::prelude::*;

const VARIANCE_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParametricStart {
    pub p0: f64,
    pub mean: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParametricOptions {
    /// Starting values; defaults to p0 = 0.9, m = mean of the top decile
    /// of z, v = 1.
    pub init: Option<ParametricStart>,
    /// Lifts the m ≥ 0 constraint.
    pub allow_negative_mean: bool,
    pub max_iter: usize,
    pub rel_tol: f64,
}

impl Default for ParametricOptions {
    fn default() -> Self {
        Self {
            init: None,
            allow_negative_mean: false,
            max_iter: 2000,
            rel_tol: 1e-9,
        }
    }
}

struct UnitStats {
    ln_f: f64,
    resp: f64,
    post_mean: f64,
    post_var: f64,
}

/// Maximum-likelihood fit of (p0, m, v) with g = N(m, v) and the null held
/// fixed, by EM with the effects μ_i as missing data. The E-step gives each
/// unit's non-null responsibility 1 − fdr_i and its conjugate posterior
/// moments under H1; the M-step sets p0 to one minus the mean
/// responsibility and (m, v) to the responsibility-weighted moments.
///
/// `sigma2` is the panel-level variance used for units without their own.
pub fn fit_parametric(panel: &ZPanel, null: NullComponent, sigma2: f64, opts: ParametricOptions) -> Result<FitResult> {
    if panel.len() < 10 {
        return Err(Error::InsufficientData {
            what: "units",
            needed: 10,
            got: panel.len(),
        });
    }
    let z = panel.z_values();
    let vs = panel.variances(sigma2);
    let n = z.len() as f64;

    let start = opts.init.unwrap_or_else(|| {
        let mut sorted = z.clone();
        sorted.sort_by(f64::total_cmp);
        let top = &sorted[sorted.len() - (sorted.len() / 10).max(1)..];
        let mut mean = top.iter().sum::<f64>() / top.len() as f64;
        if !opts.allow_negative_mean {
            mean = mean.max(0.0);
        }
        ParametricStart {
            p0: 0.9,
            mean,
            variance: 1.0,
        }
    });
    if !(0.0..=1.0).contains(&start.p0) || !start.mean.is_finite() || !(start.variance > 0.0) {
        return Err(Error::invalid("invalid starting values for the parametric fit"));
    }
    let (mut p0, mut m, mut v) = (start.p0, start.mean, start.variance.max(VARIANCE_FLOOR));

    let mut trace = Vec::new();
    let mut warnings = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    loop {
        let stats: Vec<UnitStats> = z
            .par_iter()
            .zip(vs.par_iter())
            .map(|(&zi, &vi)| {
                let ln_null = if p0 > 0.0 { p0.ln() + null.ln_density(zi, vi) } else { f64::NEG_INFINITY };
                let ln_alt = if p0 < 1.0 { (1.0 - p0).ln() + dist::ln_pdf(zi, m, vi + v) } else { f64::NEG_INFINITY };
                let hi = ln_null.max(ln_alt);
                let ln_f = hi + ((ln_null - hi).exp() + (ln_alt - hi).exp()).ln();
                UnitStats {
                    ln_f,
                    resp: (ln_alt - ln_f).exp(),
                    post_mean: (v * zi + vi * m) / (v + vi),
                    post_var: v * vi / (v + vi),
                }
            })
            .collect();
        let ll: f64 = stats.iter().map(|s| s.ln_f).sum();
        if !ll.is_finite() {
            return Err(Error::Numerical(format!("log-likelihood became {ll} at iteration {iterations}")));
        }
        if let Some(&prev) = trace.last() {
            if relative_change(prev, ll) < opts.rel_tol {
                trace.push(ll);
                converged = true;
                break;
            }
        }
        trace.push(ll);
        if iterations == opts.max_iter {
            break;
        }

        let total_resp: f64 = stats.iter().map(|s| s.resp).sum();
        p0 = (1.0 - total_resp / n).clamp(0.0, 1.0);
        if total_resp > 1e-300 {
            let mut new_m = stats.iter().map(|s| s.resp * s.post_mean).sum::<f64>() / total_resp;
            if !opts.allow_negative_mean {
                new_m = new_m.max(0.0);
            }
            let new_v = stats
                .iter()
                .map(|s| s.resp * (s.post_var + (s.post_mean - new_m).powi(2)))
                .sum::<f64>()
                / total_resp;
            m = new_m;
            v = new_v.max(VARIANCE_FLOOR);
        }
        iterations += 1;
    }

    if v <= VARIANCE_FLOOR {
        warnings.push(FitWarning::VarianceAtFloor { floor: VARIANCE_FLOOR });
    }
    if !opts.allow_negative_mean && m == 0.0 {
        warnings.push(FitWarning::MeanAtZeroBound);
    }
    let model = TwoGroupsModel::new(p0, null, MixingDistribution::normal(m, v)?, sigma2)?;
    Ok(FitResult {
        model,
        log_likelihood: *trace.last().expect("trace has at least one entry"),
        iterations,
        converged,
        trace,
        warnings,
    })
}
