//! Worked examples at integration scale: simulations large enough to be slow
//! in unit tests, checked against closed forms written here.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution};
use statrs::function::erf::erfc;
use twogroups::coverage::{paired_coverage_z, run_coverage_study, CoverageConfig, IntervalMethod};
use twogroups::estimation::{
    fit_empirical_null_z, fit_npmle_grid, fit_parametric, EmpiricalNullOptions, NpmleOptions, P0Mode, ParametricOptions,
};
use twogroups::moderation::{moderated_pipeline, shrink_variances, ExpressionSimulation};
use twogroups::posterior::{self, select_and_rank};
use twogroups::{MixingDistribution, NullComponent, SamplingVariances, Tail, TwoGroupsModel, ZPanel};

fn std_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

fn ln_phi(x: f64) -> f64 {
    -0.5 * x * x - 0.5 * (2.0 * std::f64::consts::PI).ln()
}

fn normal_draws(n: usize, sd: f64, seed: u64) -> Vec<f64> {
    let m = TwoGroupsModel::new(1.0, NullComponent::empirical(0.0, sd).unwrap(), MixingDistribution::point(0.0).unwrap(), 1.0).unwrap();
    m.sample_values(n, &SamplingVariances::Common(1.0), seed).unwrap().0
}

#[test]
fn illustration_posterior_quantities() {
    let m = TwoGroupsModel::illustration();
    let f1 = (-(1.0f64 / 1.5) / 2.0).exp() / (2.0 * std::f64::consts::PI * 1.5).sqrt();
    assert!((f1 - 0.23337).abs() < 1e-4);
    let fdr = 0.9 * ln_phi(3.5).exp() / (0.9 * ln_phi(3.5).exp() + 0.1 * f1);
    assert!((posterior::local_fdr(&m, 3.5, 1.0).unwrap() - fdr).abs() < 1e-12);
    assert!((fdr - 0.03256).abs() < 2e-4);
    assert!((posterior::tail_fdr(&m, 3.5, 1.0, Tail::Upper).unwrap() - 0.01001).abs() < 2e-4);
    let h = posterior::h_posterior(&m, 3.5, 1.0).unwrap();
    assert!((h.mean() - 2.8333).abs() < 1e-4);
    assert!((h.variance() - 0.3333).abs() < 1e-4);
}

fn mean_averaged_exceedance(k: f64) -> f64 {
    let m = TwoGroupsModel::illustration();
    let vals: Vec<f64> = (1..=20u64)
        .map(|seed| {
            let (panel, _) = m.sample_panel(3000, &SamplingVariances::Common(1.0), seed).unwrap();
            let r = select_and_rank(&m, &panel, 3.5, k, Tail::Upper).unwrap();
            let sum: f64 = r.selected.iter().map(|s| s.exceedance[0].1).sum();
            assert_eq!(r.averaged_exceedance.unwrap(), sum / r.selected.len() as f64);
            r.averaged_exceedance.unwrap()
        })
        .collect();
    vals.iter().sum::<f64>() / vals.len() as f64
}

#[test]
fn simulated_selection_averages_near_sixty_percent() {
    let avg = mean_averaged_exceedance(2.8);
    assert!((avg - 0.60).abs() <= 0.05, "mean averaged exceedance over 20 seeds = {avg}");
}

#[test]
fn simulated_selection_averages_at_lower_k() {
    let a2 = mean_averaged_exceedance(2.0);
    assert!((0.93..=0.97).contains(&a2), "k=2: {a2}");
    let a0 = mean_averaged_exceedance(0.0);
    assert!((0.96..=0.995).contains(&a0), "k=0: {a0}");
}

#[test]
fn all_null_panel_gives_high_p0() {
    let z = normal_draws(3000, 1.0, 11);
    let fit = fit_parametric(&ZPanel::from_z(&z).unwrap(), NullComponent::theoretical(), 1.0, ParametricOptions::default()).unwrap();
    assert!(fit.model.p0() >= 0.97, "p0 = {}", fit.model.p0());
}

#[test]
fn single_null_atom_npmle_is_the_pure_null() {
    let z = normal_draws(500, 1.0, 12);
    let panel = ZPanel::from_z(&z).unwrap();
    let fit = fit_npmle_grid(&panel, NullComponent::theoretical(), 1.0, &[0.0], P0Mode::Fixed(0.0), NpmleOptions::default()).unwrap();
    let expected: f64 = z.iter().map(|&x| ln_phi(x)).sum();
    assert!((fit.log_likelihood - expected).abs() < 1e-8 * expected.abs());
    for &x in &z[..20] {
        let d = fit.model.marginal_density(x, 1.0).unwrap();
        assert!((d - ln_phi(x).exp()).abs() < 1e-14);
    }
}

#[test]
fn npmle_recovers_mean_of_g() {
    let m = TwoGroupsModel::illustration();
    let (panel, _) = m.sample_panel(3000, &SamplingVariances::Common(1.0), 2026).unwrap();
    let grid: Vec<f64> = (0..=50).map(|j| j as f64 * 0.1).collect();
    let fit = fit_npmle_grid(&panel, NullComponent::theoretical(), 1.0, &grid, P0Mode::Free, NpmleOptions::default()).unwrap();
    let mean = fit.model.g().mean();
    assert!((mean - 2.5).abs() <= 0.15, "fitted g mean {mean}");
}

#[test]
fn npmle_with_known_p0_recovers_two_point_weights() {
    let g = MixingDistribution::grid(vec![1.0, 3.0], vec![0.3, 0.7]).unwrap();
    let truth = TwoGroupsModel::new(0.8, NullComponent::theoretical(), g, 1.0).unwrap();
    let (panel, _) = truth.sample_panel(20_000, &SamplingVariances::Common(1.0), 5).unwrap();
    let fit = fit_npmle_grid(&panel, NullComponent::theoretical(), 1.0, &[1.0, 2.0, 3.0], P0Mode::Fixed(0.8), NpmleOptions::default()).unwrap();
    let MixingDistribution::Grid { weights, .. } = fit.model.g() else { panic!("grid fit expected") };
    // Standard error of each weight is about 0.02 with 4000 non-null units.
    assert!((weights[0] - 0.3).abs() < 0.06, "{weights:?}");
    assert!(weights[1] < 0.1, "{weights:?}");
    assert!((weights[2] - 0.7).abs() < 0.06, "{weights:?}");
    assert!(fit.max_trace_decrease() <= 1e-9 * fit.log_likelihood.abs());
}

#[test]
fn empirical_null_recovers_known_scales() {
    for (sd, seed) in [(1.4, 21u64), (1.0, 22)] {
        let null = fit_empirical_null_z(&normal_draws(20_000, sd, seed), EmpiricalNullOptions::default()).unwrap();
        assert!(null.delta0().abs() <= 0.05, "sd {sd}: delta0 {}", null.delta0());
        assert!((null.sigma0() - sd).abs() <= 0.08, "sd {sd}: sigma0 {}", null.sigma0());
    }
}

#[test]
fn empirical_null_ignores_the_right_bump() {
    let m = TwoGroupsModel::illustration();
    let (z, _) = m.sample_values(3000, &SamplingVariances::Common(1.0), 23).unwrap();
    let null = fit_empirical_null_z(&z, EmpiricalNullOptions { center_fraction: 0.5 }).unwrap();
    assert!((null.sigma0() - 1.0).abs() <= 0.1, "sigma0 {}", null.sigma0());
}

#[test]
fn shrinkage_beats_raw_variances_and_recovers_prior_df() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let (d0, s0sq, df): (f64, f64, f64) = (8.0, 1.0, 4.0);
    let prior = ChiSquared::new(d0).unwrap();
    let within = ChiSquared::new(df).unwrap();
    let mut sigma2 = Vec::new();
    let mut s = Vec::new();
    for _ in 0..5000 {
        let v = d0 * s0sq / prior.sample(&mut rng);
        sigma2.push(v);
        s.push((v * within.sample(&mut rng) / df).sqrt());
    }
    let fit = shrink_variances(&s, df).unwrap();
    let mse = |est: &mut dyn Iterator<Item = f64>| est.zip(&sigma2).map(|(e, t)| (e - t).powi(2)).sum::<f64>() / 5000.0;
    let raw = mse(&mut s.iter().map(|x| x * x));
    let shrunk = mse(&mut fit.s_shrunk.iter().map(|x| x * x));
    assert!(shrunk < raw, "shrunk {shrunk} raw {raw}");
    assert!((fit.d0 - 8.0).abs() <= 3.0, "d0 {}", fit.d0);
}

fn null_moderated_z(rows: usize, seed: u64) -> Vec<f64> {
    let sim = ExpressionSimulation { rows, nonnull_fraction: 0.0, ..Default::default() };
    let (x, _) = sim.generate(seed).unwrap();
    moderated_pipeline(&x).unwrap().1.rows.iter().map(|r| r.z).collect()
}

#[test]
fn null_moderated_z_is_calibrated() {
    let z = null_moderated_z(2000, 41);
    let frac = z.iter().filter(|x| x.abs() > 2.576).count() as f64 / z.len() as f64;
    let se = (0.01f64 * 0.99 / 2000.0).sqrt();
    assert!((frac - 0.01).abs() <= 3.0 * se, "tail fraction {frac}");
}

#[test]
fn null_moderated_z_passes_ks() {
    let mut z = null_moderated_z(10_000, 42);
    z.sort_by(f64::total_cmp);
    let n = z.len() as f64;
    let d = z
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let c = std_cdf(x);
            (c - i as f64 / n).abs().max(((i + 1) as f64 / n - c).abs())
        })
        .fold(0.0, f64::max);
    // Asymptotic 1% critical value.
    assert!(d < 1.628 / n.sqrt(), "KS D = {d}");
}

fn one_group(v: f64) -> TwoGroupsModel {
    let g = if v == 0.0 { MixingDistribution::point(0.0) } else { MixingDistribution::normal(0.0, v) };
    TwoGroupsModel::new(0.0, NullComponent::theoretical(), g.unwrap(), 1.0).unwrap()
}

fn study(generator: TwoGroupsModel, n: usize, variances: SamplingVariances, reps: usize, seed: u64) -> Vec<twogroups::coverage::CoverageResult> {
    run_coverage_study(&CoverageConfig {
        generator,
        n_units: n,
        variances,
        methods: IntervalMethod::ALL.to_vec(),
        nominal: 0.95,
        replications: reps,
        seed,
    })
    .unwrap()
}

#[test]
fn eb_is_shorter_than_raw_at_large_n() {
    let res = study(one_group(1.0), 1000, SamplingVariances::Common(1.0), 100, 51);
    let (raw, eb) = (&res[0], &res[2]);
    assert_eq!((raw.method, eb.method), (IntervalMethod::Raw, IntervalMethod::EbAdjusted));
    assert!(eb.mean_width < raw.mean_width);
    assert!(raw.empirical_coverage >= 0.945 && eb.empirical_coverage >= 0.945, "raw {} eb {}", raw.empirical_coverage, eb.empirical_coverage);
}

#[test]
fn eb_per_unit_coverage_at_half_shrinkage() {
    // V = 1 and A = 1 give B = 0.5.
    let res = study(one_group(1.0), 18, SamplingVariances::Common(1.0), 5000, 52);
    let eb = res.iter().find(|r| r.method == IntervalMethod::EbAdjusted).unwrap();
    let worst = eb.per_unit.iter().copied().fold(1.0, f64::min);
    assert!(worst >= 0.93, "worst per-unit coverage {worst}");
}

#[test]
fn plugin_undercovers_relative_to_eb_at_small_n() {
    let res = study(one_group(1.0), 30, SamplingVariances::Common(1.0), 1000, 53);
    let z = paired_coverage_z(&res[1], &res[2]).unwrap();
    assert!(z > 2.326, "paired z {z}");
}

#[test]
fn raw_intervals_hold_nominal_in_every_configuration() {
    let configs = [
        (TwoGroupsModel::illustration(), 50, SamplingVariances::Common(1.0)),
        (one_group(0.5), 20, SamplingVariances::PerUnit((0..20).map(|i| 0.25 + 0.1 * i as f64).collect())),
        (one_group(0.0), 12, SamplingVariances::Common(2.0)),
    ];
    for (i, (g, n, v)) in configs.into_iter().enumerate() {
        let res = study(g, n, v, 500, 60 + i as u64);
        let raw = &res[0];
        assert!((raw.empirical_coverage - 0.95).abs() <= 3.0 * raw.mc_stderr, "config {i}: {}", raw.empirical_coverage);
        for r in &res {
            assert!(r.mean_width.is_finite() && r.mean_width > 0.0);
        }
    }
}

#[test]
fn degenerate_generator_is_covered_by_every_method() {
    let res = study(one_group(0.0), 15, SamplingVariances::Common(1.0), 1000, 54);
    for r in &res {
        assert!(r.empirical_coverage >= 0.95 - 3.0 * r.mc_stderr, "{}: {}", r.method, r.empirical_coverage);
    }
}
