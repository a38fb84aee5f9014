//! Command-line front end. `main.rs` only parses arguments and maps errors
//! to exit codes; everything else lives here so it can be tested.

use crate::config::{self, KeyValues};
use crate::coverage::{self, CoverageConfig, IntervalMethod};
use crate::error::{Error, Result};
use crate::estimation::{self, EmpiricalNullOptions, NpmleOptions, P0Mode, ParametricOptions};
use crate::model::{MixingDistribution, NullComponent, SamplingVariances, TwoGroupsModel};
use crate::moderation::{self, ExpressionMatrix};
use crate::panel::ZPanel;
use crate::posterior::{self, Tail};
use crate::report::{self, sig4, OutputDir, RunHeader};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

#[derive(Debug, Parser)]
#[command(name = "twogroups", version, about = "Two-groups empirical Bayes: fdr, exceedance selection, fitting, moderation and coverage studies")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct Common {
    /// Output directory (created if absent).
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads; results do not depend on this.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Overwrite existing output files.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit p0 and g (and optionally an empirical null) to a z-value panel.
    Fit(FitArgs),
    /// Select units beyond a threshold and rank them by P(mu > k | z).
    Select(SelectArgs),
    /// Moderated z-scores from a two-group expression matrix.
    Moderate(ModerateArgs),
    /// Draw a panel from a model.
    Simulate(SimulateArgs),
    /// Repeated-sampling coverage study of interval methods.
    Coverage(CoverageArgs),
    /// Recompute the built-in numerical illustration and compare with its reference values.
    ReproducePaper(ReproduceArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FitMethod {
    Parametric,
    Npmle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NullChoice {
    Theoretical,
    Empirical,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Panel file (CSV or TSV with id,z[,variance|n]).
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "parametric")]
    pub method: FitMethod,
    #[arg(long, value_enum, default_value = "theoretical")]
    pub null: NullChoice,
    /// Central fraction of z used for an empirical null.
    #[arg(long, default_value_t = 0.5)]
    pub center_fraction: f64,
    /// Sampling variance for units without their own (and σ² for n columns).
    #[arg(long, default_value_t = 1.0)]
    pub sampling_variance: f64,
    /// NPMLE grid: lower end (default: smallest z).
    #[arg(long)]
    pub grid_lo: Option<f64>,
    /// NPMLE grid: upper end (default: largest z).
    #[arg(long)]
    pub grid_hi: Option<f64>,
    #[arg(long, default_value_t = 50)]
    pub grid_points: usize,
    /// Hold p0 fixed (NPMLE only).
    #[arg(long)]
    pub p0: Option<f64>,
    /// Allow a negative mean for the normal g.
    #[arg(long)]
    pub allow_negative_mean: bool,
    #[arg(long, default_value_t = 2000)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    /// Recorded in the output header; fitting uses no randomness.
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Model configuration file.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = 3.5, allow_negative_numbers = true)]
    pub threshold: f64,
    /// Effect-size thresholds; one exceedance column per value. Ranking uses the first.
    #[arg(long = "k", num_args = 1.., value_delimiter = ',', default_values_t = [2.8], allow_negative_numbers = true)]
    pub ks: Vec<f64>,
    #[arg(long, default_value = "upper")]
    pub tail: Tail,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct ModerateArgs {
    /// Tab-separated matrix: label row, then id + values per row.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Model configuration file (default: the illustration model).
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, default_value_t = 3000)]
    pub n: usize,
    /// Sampling variances, recycled over units (default: the model's).
    #[arg(long, num_args = 1.., value_delimiter = ',')]
    pub variances: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct CoverageArgs {
    /// Study configuration (model keys plus n, replications, nominal,
    /// methods, variances, seed). Flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Generator model file; overrides model keys in the config.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub replications: Option<usize>,
    #[arg(long)]
    pub nominal: Option<f64>,
    #[arg(long, num_args = 1.., value_delimiter = ',')]
    pub methods: Vec<IntervalMethod>,
    #[arg(long, num_args = 1.., value_delimiter = ',')]
    pub variances: Vec<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct ReproduceArgs {
    /// Show only rows for these k values.
    #[arg(long = "k", num_args = 1.., value_delimiter = ',', allow_negative_numbers = true)]
    pub ks: Vec<f64>,
    /// Also write the table to this directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
    #[arg(long)]
    pub threads: Option<usize>,
}

impl clap::ValueEnum for IntervalMethod {
    fn value_variants<'a>() -> &'a [Self] {
        &IntervalMethod::ALL
    }
    fn to_possible_value(&self) -> Option<clap::builder::PossibleValue> {
        Some(clap::builder::PossibleValue::new(self.name()))
    }
}

impl clap::ValueEnum for Tail {
    fn value_variants<'a>() -> &'a [Self] {
        &[Tail::Upper, Tail::Lower, Tail::TwoSided]
    }
    fn to_possible_value(&self) -> Option<clap::builder::PossibleValue> {
        Some(clap::builder::PossibleValue::new(match self {
            Tail::Upper => "upper",
            Tail::Lower => "lower",
            Tail::TwoSided => "two-sided",
        }))
    }
}

/// Runs a parsed command, returning the text to print on stdout.
pub fn run(cli: Cli) -> Result<String> {
    let threads = match &cli.command {
        Command::Fit(a) => a.common.threads,
        Command::Select(a) => a.common.threads,
        Command::Moderate(a) => a.common.threads,
        Command::Simulate(a) => a.common.threads,
        Command::Coverage(a) => a.common.threads,
        Command::ReproducePaper(a) => a.threads,
    };
    let go = || match cli.command {
        Command::Fit(a) => cmd_fit(&a),
        Command::Select(a) => cmd_select(&a),
        Command::Moderate(a) => cmd_moderate(&a),
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Coverage(a) => cmd_coverage(&a),
        Command::ReproducePaper(a) => cmd_reproduce(&a),
    };
    match threads {
        Some(0) => Err(Error::invalid("--threads must be at least 1")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::invalid(e.to_string()))?
            .install(go),
        None => go(),
    }
}

fn file_digest(path: &Path) -> Result<String> {
    Ok(report::sha256_hex(&std::fs::read(path)?))
}

fn read_model(path: &Path) -> Result<TwoGroupsModel> {
    let text = std::fs::read_to_string(path)?;
    config::parse_model(&text, &path.display().to_string())
}

#[derive(Serialize)]
struct FitSummary<'a> {
    method: &'static str,
    log_likelihood: f64,
    iterations: usize,
    converged: bool,
    warnings: &'a [estimation::FitWarning],
    null_delta0: f64,
    null_sigma0: f64,
    p0: f64,
    g_mean: f64,
    g_variance: f64,
    trace: &'a [f64],
}

fn cmd_fit(a: &FitArgs) -> Result<String> {
    let out = OutputDir::new(&a.common.out, a.common.force);
    out.prepare(&["model.cfg", "fit.json"])?;
    let panel = ZPanel::read_path(&a.input)?;
    let canonical = format!(
        "fit input_sha256={} method={:?} null={:?} center_fraction={} sampling_variance={} grid=({:?},{:?},{}) p0={:?} allow_negative_mean={} max_iter={} tol={}",
        file_digest(&a.input)?,
        a.method,
        a.null,
        a.center_fraction,
        a.sampling_variance,
        a.grid_lo,
        a.grid_hi,
        a.grid_points,
        a.p0,
        a.allow_negative_mean,
        a.max_iter,
        a.tol
    );
    let header = RunHeader::new("fit", a.seed, &canonical);

    let null = match a.null {
        NullChoice::Theoretical => NullComponent::theoretical(),
        NullChoice::Empirical => estimation::fit_empirical_null(
            &panel,
            EmpiricalNullOptions {
                center_fraction: a.center_fraction,
            },
        )?,
    };
    let fit = match a.method {
        FitMethod::Parametric => {
            if a.p0.is_some() {
                return Err(Error::invalid("--p0 applies to the npmle method only"));
            }
            estimation::fit_parametric(
                &panel,
                null,
                a.sampling_variance,
                ParametricOptions {
                    allow_negative_mean: a.allow_negative_mean,
                    max_iter: a.max_iter,
                    rel_tol: a.tol,
                    ..Default::default()
                },
            )?
        }
        FitMethod::Npmle => {
            let z = panel.z_values();
            let lo = a.grid_lo.unwrap_or_else(|| z.iter().copied().fold(f64::INFINITY, f64::min));
            let hi = a.grid_hi.unwrap_or_else(|| z.iter().copied().fold(f64::NEG_INFINITY, f64::max));
            let grid: Vec<f64> = match a.grid_points {
                0 => return Err(Error::invalid("--grid-points must be positive")),
                1 => vec![lo],
                n => (0..n).map(|j| lo + (hi - lo) * j as f64 / (n - 1) as f64).collect(),
            };
            let mode = a.p0.map_or(P0Mode::Free, P0Mode::Fixed);
            estimation::fit_npmle_grid(
                &panel,
                null,
                a.sampling_variance,
                &grid,
                mode,
                NpmleOptions {
                    max_iter: a.max_iter,
                    rel_tol: a.tol,
                    ..Default::default()
                },
            )?
        }
    };
    let m = &fit.model;
    let mut cfg = header.comment_block();
    cfg.push_str(&config::write_model(m));
    out.write("model.cfg", cfg.as_bytes())?;
    let summary = FitSummary {
        method: match a.method {
            FitMethod::Parametric => "parametric",
            FitMethod::Npmle => "npmle",
        },
        log_likelihood: fit.log_likelihood,
        iterations: fit.iterations,
        converged: fit.converged,
        warnings: &fit.warnings,
        null_delta0: m.null().delta0(),
        null_sigma0: m.null().sigma0(),
        p0: m.p0(),
        g_mean: m.g().mean(),
        g_variance: m.g().variance(),
        trace: &fit.trace,
    };
    out.write("fit.json", &report::json_with_header(&header, "fit", &summary)?)?;

    let mut s = String::new();
    let _ = writeln!(s, "units        {}", panel.len());
    let _ = writeln!(s, "null         N({}, {}^2 V)", sig4(m.null().delta0()), sig4(m.null().sigma0()));
    let _ = writeln!(s, "p0           {}", sig4(m.p0()));
    let _ = writeln!(s, "g mean       {}", sig4(m.g().mean()));
    let _ = writeln!(s, "g variance   {}", sig4(m.g().variance()));
    let _ = writeln!(s, "loglik       {}", sig4(fit.log_likelihood));
    let _ = writeln!(s, "iterations   {} ({})", fit.iterations, if fit.converged { "converged" } else { "not converged" });
    for w in &fit.warnings {
        let _ = writeln!(s, "warning      {w:?}");
    }
    Ok(s)
}

#[derive(Serialize)]
struct SelectionSummary {
    k: f64,
    threshold_z: f64,
    tail: Tail,
    panel_size: usize,
    selected: usize,
    averaged_exceedance: Option<f64>,
    expected_true_exceedances: Option<f64>,
    note: Option<&'static str>,
}

fn cmd_select(a: &SelectArgs) -> Result<String> {
    if a.ks.is_empty() {
        return Err(Error::invalid("at least one --k is required"));
    }
    let out = OutputDir::new(&a.common.out, a.common.force);
    out.prepare(&["selection.csv", "selection.json", "selection.svg"])?;
    let panel = ZPanel::read_path(&a.input)?;
    let model = read_model(&a.model)?;
    let canonical = format!(
        "select input_sha256={} model_sha256={} threshold={} ks={:?} tail={}",
        file_digest(&a.input)?,
        file_digest(&a.model)?,
        a.threshold,
        a.ks,
        a.tail
    );
    let header = RunHeader::new("select", a.seed, &canonical);

    let reports = a
        .ks
        .iter()
        .map(|&k| posterior::select_and_rank(&model, &panel, a.threshold, k, a.tail))
        .collect::<Result<Vec<_>>>()?;
    // Rows in the order of the first k, with every k's exceedance attached.
    let rows = reports[0]
        .selected
        .iter()
        .map(|s| {
            let mut row = s.clone();
            row.exceedance = reports
                .iter()
                .map(|r| {
                    let hit = r.selected.iter().find(|t| t.id == s.id).expect("same units selected for every k");
                    hit.exceedance[0]
                })
                .collect();
            row
        })
        .collect::<Vec<_>>();
    out.write("selection.csv", &report::selection_csv(&header, &rows, &a.ks)?)?;
    let summaries: Vec<SelectionSummary> = reports
        .iter()
        .map(|r| SelectionSummary {
            k: r.k,
            threshold_z: r.threshold_z,
            tail: r.tail,
            panel_size: r.panel_size,
            selected: r.selected.len(),
            averaged_exceedance: r.averaged_exceedance,
            expected_true_exceedances: r.expected_true_exceedances,
            note: r.selected.is_empty().then_some("empty selection: no unit lies beyond the threshold"),
        })
        .collect();
    out.write("selection.json", &report::json_with_header(&header, "selection", &summaries)?)?;
    out.write("selection.svg", report::selection_svg(&header, &model, &panel.z_values(), a.threshold)?.as_bytes())?;

    let mut s = String::new();
    let _ = writeln!(s, "selected {} of {} units ({} tail, threshold {})", rows.len(), panel.len(), a.tail, a.threshold);
    for r in &summaries {
        let _ = writeln!(
            s,
            "k = {:<6} averaged exceedance {}  expected true exceedances {}",
            r.k,
            r.averaged_exceedance.map_or("-".into(), sig4),
            r.expected_true_exceedances.map_or("-".into(), sig4)
        );
    }
    Ok(s)
}

#[derive(Serialize)]
struct ModerationSummary<'a> {
    rows: usize,
    d0: Option<f64>,
    total_shrinkage: bool,
    s0: f64,
    moderated_df: Option<f64>,
    group_a: &'a str,
    group_b: &'a str,
    flagged: &'a [moderation::FlaggedRow],
}

fn cmd_moderate(a: &ModerateArgs) -> Result<String> {
    let out = OutputDir::new(&a.common.out, a.common.force);
    out.prepare(&["panel.csv", "moderation.csv", "moderation.json"])?;
    let x = ExpressionMatrix::read_path(&a.input)?;
    let header = RunHeader::new("moderate", a.seed, &format!("moderate input_sha256={}", file_digest(&a.input)?));
    let (panel, scores) = moderation::moderated_pipeline(&x)?;
    let mut buf = Vec::new();
    panel.write(&mut buf, &header.lines())?;
    out.write("panel.csv", &buf)?;
    out.write("moderation.csv", &report::moderation_csv(&header, &scores)?)?;
    let (ga, gb) = x.group_labels();
    // JSON has no infinity; report the total-shrinkage case as a flag.
    let finite = |v: f64| v.is_finite().then_some(v);
    let summary = ModerationSummary {
        rows: scores.rows.len(),
        d0: finite(scores.d0),
        total_shrinkage: scores.d0.is_infinite(),
        s0: scores.s0,
        moderated_df: finite(scores.moderated_df),
        group_a: ga,
        group_b: gb,
        flagged: &scores.flagged,
    };
    out.write("moderation.json", &report::json_with_header(&header, "moderation", &summary)?)?;
    let mut s = String::new();
    let _ = writeln!(s, "rows scored  {} ({} flagged)", scores.rows.len(), scores.flagged.len());
    let _ = writeln!(s, "prior df d0  {}", if scores.d0.is_infinite() { "inf".into() } else { sig4(scores.d0) });
    let _ = writeln!(s, "prior sd s0  {}", sig4(scores.s0));
    let _ = writeln!(s, "groups       {ga} (A) vs {gb} (B)");
    for f in &scores.flagged {
        let _ = writeln!(s, "flagged      {}: {}", f.id, f.reason);
    }
    Ok(s)
}

fn recycled(values: &[f64], n: usize, default: f64) -> SamplingVariances {
    match values {
        [] => SamplingVariances::Common(default),
        [v] => SamplingVariances::Common(*v),
        vs => SamplingVariances::PerUnit((0..n).map(|i| vs[i % vs.len()]).collect()),
    }
}

fn cmd_simulate(a: &SimulateArgs) -> Result<String> {
    let out = OutputDir::new(&a.common.out, a.common.force);
    out.prepare(&["panel.csv", "truth.csv"])?;
    let (model, model_digest) = match &a.model {
        Some(p) => (read_model(p)?, file_digest(p)?),
        None => (TwoGroupsModel::illustration(), "illustration".to_string()),
    };
    let canonical = format!("simulate model={} n={} variances={:?}", model_digest, a.n, a.variances);
    let header = RunHeader::new("simulate", Some(a.seed), &canonical);
    let variances = recycled(&a.variances, a.n, model.default_sampling_variance());
    let (panel, mu) = model.sample_panel(a.n, &variances, a.seed)?;
    let mut buf = Vec::new();
    panel.write(&mut buf, &header.lines())?;
    out.write("panel.csv", &buf)?;

    let mut truth = header.comment_block().into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut truth);
        w.write_record(["id", "mu"])?;
        for (u, m) in panel.units().iter().zip(&mu) {
            w.write_record([u.id.as_str(), &m.to_string()])?;
        }
        w.flush()?;
    }
    out.write("truth.csv", &truth)?;
    let nonnull = mu.iter().filter(|&&m| m != 0.0).count();
    Ok(format!("simulated {} units ({} non-null), seed {}\n", a.n, nonnull, a.seed))
}

const COVERAGE_KEYS: &[&str] = &["n", "replications", "nominal", "methods", "variances", "seed"];

fn cmd_coverage(a: &CoverageArgs) -> Result<String> {
    let out = OutputDir::new(&a.common.out, a.common.force);
    out.prepare(&["coverage.csv", "coverage_strata.csv", "coverage.json", "coverage.svg"])?;
    let kv = match &a.config {
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            let kv = KeyValues::parse(&text, &p.display().to_string())?;
            let allowed: Vec<&str> = config::MODEL_KEYS.iter().chain(COVERAGE_KEYS).copied().collect();
            kv.reject_unknown(&allowed)?;
            kv
        }
        None => KeyValues::default(),
    };
    let generator = match (&a.model, kv.raw("p0")) {
        (Some(p), _) => read_model(p)?,
        (None, Some(_)) => config::model_from_keys(&kv)?,
        (None, None) => TwoGroupsModel::new(0.0, NullComponent::theoretical(), MixingDistribution::normal(0.0, 1.0)?, 1.0)?,
    };
    let n = match a.n {
        Some(n) => n,
        None => kv.get("n")?.unwrap_or(15),
    };
    let replications = match a.replications {
        Some(r) => r,
        None => kv.get("replications")?.unwrap_or(2000),
    };
    let nominal = match a.nominal {
        Some(x) => x,
        None => kv.get("nominal")?.unwrap_or(0.95),
    };
    let seed = match a.seed {
        Some(s) => s,
        None => kv.get("seed")?.unwrap_or(0),
    };
    let methods = if !a.methods.is_empty() {
        a.methods.clone()
    } else {
        match kv.raw("methods") {
            Some(list) => list.split(',').map(|m| m.parse()).collect::<Result<Vec<IntervalMethod>>>()?,
            None => IntervalMethod::ALL.to_vec(),
        }
    };
    let variances = if !a.variances.is_empty() {
        a.variances.clone()
    } else {
        kv.list("variances")?.unwrap_or_default()
    };
    let variances = recycled(&variances, n, generator.default_sampling_variance());
    let cfg = CoverageConfig {
        generator,
        n_units: n,
        variances,
        methods,
        nominal,
        replications,
        seed,
    };
    let canonical = format!(
        "coverage generator={} n={} replications={} nominal={} methods={:?} variances={:?}",
        config::write_model(&cfg.generator).replace('\n', ";"),
        cfg.n_units,
        cfg.replications,
        cfg.nominal,
        cfg.methods,
        cfg.variances
    );
    let header = RunHeader::new("coverage", Some(seed), &canonical);
    let results = coverage::run_coverage_study(&cfg)?;

    let (z, _) = cfg.generator.sample_values(n, &cfg.variances, seed)?;
    let v: Vec<f64> = (0..n).map(|i| cfg.variances.get(i)).collect();
    let profiles = cfg
        .methods
        .iter()
        .map(|&m| coverage::bowing_profile(m, &z, &v, nominal))
        .collect::<Result<Vec<_>>>()?;

    out.write("coverage.csv", &report::coverage_csv(&header, &results)?)?;
    out.write("coverage_strata.csv", &report::coverage_strata_csv(&header, &results)?)?;
    #[derive(Serialize)]
    struct Doc<'a> {
        results: &'a [coverage::CoverageResult],
        bowing: &'a [coverage::BowingProfile],
    }
    out.write(
        "coverage.json",
        &report::json_with_header(
            &header,
            "coverage",
            &Doc {
                results: &results,
                bowing: &profiles,
            },
        )?,
    )?;
    out.write("coverage.svg", report::coverage_svg(&header, &results, &profiles).as_bytes())?;

    let mut s = String::new();
    let _ = writeln!(s, "{:<16} {:>9} {:>9} {:>10} {:>9} {:>8}", "method", "coverage", "mc_se", "mean_width", "boundary", "bowing");
    for (r, p) in results.iter().zip(&profiles) {
        let _ = writeln!(
            s,
            "{:<16} {:>9} {:>9} {:>10} {:>9} {:>8}",
            r.method.name(),
            sig4(r.empirical_coverage),
            sig4(r.mc_stderr),
            sig4(r.mean_width),
            sig4(r.boundary_fraction),
            sig4(p.ratio)
        );
    }
    Ok(s)
}

fn cmd_reproduce(a: &ReproduceArgs) -> Result<String> {
    let ks = (!a.ks.is_empty()).then_some(a.ks.as_slice());
    let rows = report::illustration_checks(&TwoGroupsModel::illustration(), ks)?;
    let table = report::illustration_table(&rows);
    if let Some(dir) = &a.out {
        let out = OutputDir::new(dir, a.force);
        out.prepare(&["reproduce.txt"])?;
        let header = RunHeader::new("reproduce-paper", None, &format!("reproduce-paper ks={:?}", a.ks));
        out.write("reproduce.txt", format!("{}{}", header.comment_block(), table).as_bytes())?;
    }
    Ok(table)
}
