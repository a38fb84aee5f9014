use super::{relative_change, FitResult, FitWarning};
use crate::dist;
use crate::error::{Error, Result};
use crate::model::{MixingDistribution, NullComponent, TwoGroupsModel};
use crate::panel::ZPanel;
use rayon::prelude::*;

/// Rows per reduction chunk. Sums are formed within fixed chunks and then
/// combined in chunk order, so results do not depend on the thread count.
const CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum P0Mode {
    /// Estimate p0 jointly with g.
    Free,
    /// Hold p0 at the given value.
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NpmleOptions {
    pub max_iter: usize,
    pub rel_tol: f64,
    /// Warn when an end point of the grid carries at least this weight.
    pub boundary_mass: f64,
}

impl Default for NpmleOptions {
    fn default() -> Self {
        Self {
            max_iter: 2000,
            rel_tol: 1e-9,
            boundary_mass: 0.25,
        }
    }
}

/// Likelihood of every unit under the null and under each grid atom, with
/// each row divided by its largest entry. `shift[i]` is the log of that
/// scale factor.
struct Kernel {
    null: Vec<f64>,
    atoms: Vec<f64>,
    shift: Vec<f64>,
    width: usize,
}

impl Kernel {
    fn build(z: &[f64], vs: &[f64], null: &NullComponent, grid: &[f64]) -> Self {
        let width = grid.len();
        let rows: Vec<(f64, Vec<f64>, f64)> = z
            .par_iter()
            .zip(vs.par_iter())
            .map(|(&zi, &vi)| {
                let ln0 = null.ln_density(zi, vi);
                let ln_atoms: Vec<f64> = grid.iter().map(|&u| dist::ln_pdf(zi, u, vi)).collect();
                let top = ln_atoms.iter().copied().fold(ln0, f64::max);
                ((ln0 - top).exp(), ln_atoms.iter().map(|l| (l - top).exp()).collect(), top)
            })
            .collect();
        let mut kernel = Kernel {
            null: Vec::with_capacity(z.len()),
            atoms: Vec::with_capacity(z.len() * width),
            shift: Vec::with_capacity(z.len()),
            width,
        };
        for (n0, atoms, top) in rows {
            kernel.null.push(n0);
            kernel.atoms.extend(atoms);
            kernel.shift.push(top);
        }
        kernel
    }
}

#[derive(Clone)]
struct Sums {
    ll: f64,
    null_resp: f64,
    atom: Vec<f64>,
}

impl Sums {
    fn zero(width: usize) -> Self {
        Sums {
            ll: 0.0,
            null_resp: 0.0,
            atom: vec![0.0; width],
        }
    }

    fn add(mut self, other: &Sums) -> Self {
        self.ll += other.ll;
        self.null_resp += other.null_resp;
        for (a, b) in self.atom.iter_mut().zip(&other.atom) {
            *a += b;
        }
        self
    }
}

fn e_step(k: &Kernel, p0: f64, w: &[f64]) -> Sums {
    let n = k.null.len();
    let chunks: Vec<Sums> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut s = Sums::zero(k.width);
            for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
                let row = &k.atoms[i * k.width..(i + 1) * k.width];
                let alt: f64 = row.iter().zip(w).map(|(l, wj)| l * wj).sum();
                let f = p0 * k.null[i] + (1.0 - p0) * alt;
                s.ll += f.ln() + k.shift[i];
                s.null_resp += p0 * k.null[i] / f;
                for (acc, l) in s.atom.iter_mut().zip(row) {
                    *acc += l / f;
                }
            }
            s
        })
        .collect();
    chunks.iter().fold(Sums::zero(k.width), Sums::add)
}

/// Nonparametric maximum-likelihood estimate of g restricted to a fixed
/// grid, by EM on the grid weights (and on p0 when it is free).
///
/// In `Free` mode a grid point at exactly 0 is dropped, since it cannot be
/// told apart from the null atom under a theoretical null.
pub fn fit_npmle_grid(
    panel: &ZPanel,
    null: NullComponent,
    sigma2: f64,
    grid: &[f64],
    p0_mode: P0Mode,
    opts: NpmleOptions,
) -> Result<FitResult> {
    if panel.len() < 10 {
        return Err(Error::InsufficientData {
            what: "units",
            needed: 10,
            got: panel.len(),
        });
    }
    if grid.iter().any(|u| !u.is_finite()) || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("grid must be finite and strictly increasing"));
    }
    let support: Vec<f64> = match p0_mode {
        P0Mode::Free => grid.iter().copied().filter(|&u| u != 0.0).collect(),
        P0Mode::Fixed(_) => grid.to_vec(),
    };
    if support.is_empty() {
        return Err(Error::invalid("grid has no usable points"));
    }
    let mut p0 = match p0_mode {
        P0Mode::Free => 0.9,
        P0Mode::Fixed(p) if (0.0..=1.0).contains(&p) => p,
        P0Mode::Fixed(p) => return Err(Error::invalid(format!("fixed p0 must lie in [0, 1], got {p}"))),
    };

    let z = panel.z_values();
    let vs = panel.variances(sigma2);
    let n = z.len() as f64;
    let kernel = Kernel::build(&z, &vs, &null, &support);
    let mut w = vec![1.0 / support.len() as f64; support.len()];

    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    loop {
        let sums = e_step(&kernel, p0, &w);
        if !sums.ll.is_finite() {
            return Err(Error::Numerical(format!("log-likelihood became {} at iteration {iterations}", sums.ll)));
        }
        let prev = trace.last().copied();
        trace.push(sums.ll);
        if let Some(prev) = prev {
            if relative_change(prev, sums.ll) < opts.rel_tol {
                converged = true;
                break;
            }
        }
        if iterations == opts.max_iter {
            break;
        }
        if let P0Mode::Free = p0_mode {
            p0 = (sums.null_resp / n).clamp(0.0, 1.0);
        }
        let mass: Vec<f64> = w.iter().zip(&sums.atom).map(|(wj, sj)| wj * sj).collect();
        let total: f64 = mass.iter().sum();
        if total > 0.0 {
            w = mass.into_iter().map(|m| m / total).collect();
        }
        iterations += 1;
    }

    let mut warnings = Vec::new();
    if support.len() >= 2 {
        for j in [0, support.len() - 1] {
            if w[j] >= opts.boundary_mass {
                warnings.push(FitWarning::BoundaryMass {
                    point: support[j],
                    weight: w[j],
                });
            }
        }
    }
    let total: f64 = w.iter().sum();
    let w: Vec<f64> = w.iter().map(|x| x / total).collect();
    let model = TwoGroupsModel::new(p0, null, MixingDistribution::grid(support, w)?, sigma2)?;
    Ok(FitResult {
        model,
        log_likelihood: *trace.last().expect("trace has at least one entry"),
        iterations,
        converged,
        trace,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SamplingVariances;

    fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        (0..n).map(|j| lo + (hi - lo) * j as f64 / (n - 1) as f64).collect()
    }

    fn panel(seed: u64) -> ZPanel {
        TwoGroupsModel::illustration().sample_panel(2000, &SamplingVariances::Common(1.0), seed).unwrap().0
    }

    #[test]
    fn weights_form_a_distribution_and_trace_is_monotone() {
        let fit = fit_npmle_grid(&panel(2), NullComponent::theoretical(), 1.0, &grid(-1.0, 6.0, 36), P0Mode::Free, NpmleOptions::default()).unwrap();
        match fit.model.g() {
            MixingDistribution::Grid { weights, support } => {
                assert!(!support.contains(&0.0));
                assert!((weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                assert!(weights.iter().all(|&w| w >= 0.0));
            }
            _ => panic!("expected a grid"),
        }
        assert!(fit.max_trace_decrease() <= 1e-8 * fit.log_likelihood.abs());
    }

    #[test]
    fn fixed_p0_is_respected() {
        let fit = fit_npmle_grid(&panel(3), NullComponent::theoretical(), 1.0, &grid(0.0, 5.0, 11), P0Mode::Fixed(0.9), NpmleOptions::default()).unwrap();
        assert_eq!(fit.model.p0(), 0.9);
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let p = panel(4);
        let g = grid(-1.0, 6.0, 29);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| fit_npmle_grid(&p, NullComponent::theoretical(), 1.0, &g, P0Mode::Free, NpmleOptions::default()).unwrap())
        };
        let a = run(1);
        let b = run(5);
        assert_eq!(a.model, b.model);
        assert_eq!(a.trace, b.trace);
    }

    #[test]
    fn boundary_warning_when_grid_is_too_narrow() {
        let fit = fit_npmle_grid(&panel(6), NullComponent::theoretical(), 1.0, &grid(0.0, 1.5, 4), P0Mode::Free, NpmleOptions::default()).unwrap();
        assert!(fit.warnings.iter().any(|w| matches!(w, FitWarning::BoundaryMass { point, .. } if *point == 1.5)));
    }

    #[test]
    fn rejects_unsorted_grid() {
        assert!(fit_npmle_grid(&panel(1), NullComponent::theoretical(), 1.0, &[1.0, 0.5], P0Mode::Free, NpmleOptions::default()).is_err());
    }
}
