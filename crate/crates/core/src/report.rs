//! Report emission: header blocks, CSV/JSON writers, SVG plots, and the
//! fixed illustration checks.

use crate::coverage::{BowingProfile, CoverageResult};
use crate::error::{Error, Result};
use crate::model::TwoGroupsModel;
use crate::moderation::ModeratedScores;
use crate::posterior::{self, PosteriorSummary, Tail};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Provenance stamped on every output file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RunHeader {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: Option<u64>,
    pub config_sha256: String,
}

impl RunHeader {
    /// `canonical_config` should describe every input that affects the
    /// results (options and input file contents), and nothing else.
    pub fn new(command: &str, seed: Option<u64>, canonical_config: &str) -> Self {
        Self {
            tool: "twogroups".into(),
            version: VERSION.into(),
            command: command.into(),
            seed,
            config_sha256: sha256_hex(canonical_config.as_bytes()),
        }
    }

    pub fn lines(&self) -> Vec<String> {
        vec![
            format!("{} {}", self.tool, self.version),
            format!("command: {}", self.command),
            format!("seed: {}", self.seed.map_or("none".to_string(), |s| s.to_string())),
            format!("config_sha256: {}", self.config_sha256),
        ]
    }

    pub fn comment_block(&self) -> String {
        self.lines().iter().map(|l| format!("# {l}\n")).collect()
    }
}

/// Four significant digits for human-readable tables.
pub fn sig4(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    if x == 0.0 {
        return "0".into();
    }
    let mag = x.abs().log10().floor() as i32;
    if !(-4..6).contains(&mag) {
        return format!("{x:.3e}");
    }
    let decimals = (3 - mag).max(0) as usize;
    format!("{x:.decimals$}")
}

/// Collects output paths and refuses to clobber existing files unless
/// forced. All paths are checked before anything is written.
#[derive(Debug)]
pub struct OutputDir {
    dir: PathBuf,
    force: bool,
}

impl OutputDir {
    pub fn new(dir: &Path, force: bool) -> Self {
        Self {
            dir: dir.to_path_buf(),
            force,
        }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn prepare(&self, names: &[&str]) -> Result<()> {
        if !self.force {
            for n in names {
                let p = self.path(n);
                if p.exists() {
                    return Err(Error::OutputExists(p.display().to_string()));
                }
            }
        }
        fs::create_dir_all(&self.dir)?;
        Ok(())
    }

    pub fn write(&self, name: &str, contents: &[u8]) -> Result<PathBuf> {
        let p = self.path(name);
        fs::write(&p, contents)?;
        Ok(p)
    }
}

fn csv_with_header(header: &RunHeader, columns: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut out = header.comment_block().into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut out);
        w.write_record(columns)?;
        for r in rows {
            w.write_record(&r)?;
        }
        w.flush()?;
    }
    Ok(out)
}

fn f(x: f64) -> String {
    x.to_string()
}

/// Column name for an exceedance probability at threshold `k`.
pub fn exceedance_column(k: f64) -> String {
    format!("exceed_k{k}")
}

/// Selection table: one exceedance column per k, rows in the given order.
pub fn selection_csv(header: &RunHeader, rows: &[PosteriorSummary], ks: &[f64]) -> Result<Vec<u8>> {
    let mut cols: Vec<String> = ["rank", "id", "z", "sampling_variance", "fdr", "h_mean", "h_variance"].map(String::from).to_vec();
    cols.extend(ks.iter().map(|&k| exceedance_column(k)));
    csv_with_header(
        header,
        &cols,
        rows.iter().enumerate().map(|(i, s)| {
            let mut r = vec![(i + 1).to_string(), s.id.clone(), f(s.z), f(s.sampling_variance), f(s.fdr), f(s.h_mean), f(s.h_variance)];
            r.extend(ks.iter().map(|&k| s.exceedance_at(k).map_or(String::new(), f)));
            r
        }),
    )
}

pub fn moderation_csv(header: &RunHeader, m: &ModeratedScores) -> Result<Vec<u8>> {
    let cols = ["id", "s_raw", "s_shrunk", "raw_t", "moderated_t", "z"].map(String::from);
    csv_with_header(
        header,
        &cols,
        m.rows.iter().map(|r| vec![r.id.clone(), f(r.s_raw), f(r.s_shrunk), f(r.raw_t), f(r.moderated_t), f(r.z)]),
    )
}

pub fn coverage_csv(header: &RunHeader, results: &[CoverageResult]) -> Result<Vec<u8>> {
    let cols = [
        "method",
        "nominal",
        "replications",
        "n_units",
        "empirical_coverage",
        "mc_stderr",
        "mean_width",
        "boundary_fraction",
        "mean_shrinkage_slope",
    ]
    .map(String::from);
    csv_with_header(
        header,
        &cols,
        results.iter().map(|r| {
            vec![
                r.method.to_string(),
                f(r.nominal),
                r.replications.to_string(),
                r.n_units.to_string(),
                f(r.empirical_coverage),
                f(r.mc_stderr),
                f(r.mean_width),
                f(r.boundary_fraction),
                f(r.mean_shrinkage_slope),
            ]
        }),
    )
}

pub fn coverage_strata_csv(header: &RunHeader, results: &[CoverageResult]) -> Result<Vec<u8>> {
    let cols = ["method", "stratum", "v_min", "v_max", "units", "coverage"].map(String::from);
    let rows = results.iter().flat_map(|r| {
        r.strata.iter().enumerate().map(move |(i, s)| {
            vec![r.method.to_string(), (i + 1).to_string(), f(s.v_min), f(s.v_max), s.units.to_string(), f(s.coverage)]
        })
    });
    csv_with_header(header, &cols, rows)
}

/// JSON document `{ "header": ..., "<key>": value }`, pretty-printed.
pub fn json_with_header<T: Serialize>(header: &RunHeader, key: &str, value: &T) -> Result<Vec<u8>> {
    let mut doc = serde_json::Map::new();
    doc.insert("header".into(), serde_json::to_value(header)?);
    doc.insert(key.into(), serde_json::to_value(value)?);
    let mut out = serde_json::to_vec_pretty(&serde_json::Value::Object(doc))?;
    out.push(b'\n');
    Ok(out)
}

// ---------------------------------------------------------------- SVG

const PALETTE: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
    left: f64,
    top: f64,
    w: f64,
    h: f64,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        self.left + (x - self.x0) / (self.x1 - self.x0) * self.w
    }
    fn py(&self, y: f64) -> f64 {
        self.top + self.h - (y - self.y0) / (self.y1 - self.y0) * self.h
    }

    fn axes(&self, s: &mut String, title: &str, xlabel: &str) {
        let _ = writeln!(
            s,
            r##"<rect x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="none" stroke="#444"/>"##,
            self.left, self.top, self.w, self.h
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-size="14" text-anchor="middle">{}</text>"#,
            self.left + self.w / 2.0,
            self.top - 8.0,
            escape(title)
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-size="12" text-anchor="middle">{}</text>"#,
            self.left + self.w / 2.0,
            self.top + self.h + 34.0,
            escape(xlabel)
        );
        for i in 0..=4 {
            let t = i as f64 / 4.0;
            let (xv, yv) = (self.x0 + t * (self.x1 - self.x0), self.y0 + t * (self.y1 - self.y0));
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" font-size="10" text-anchor="middle">{}</text>"#,
                self.px(xv),
                self.top + self.h + 14.0,
                sig4(xv)
            );
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" font-size="10" text-anchor="end">{}</text>"#,
                self.left - 4.0,
                self.py(yv) + 3.0,
                sig4(yv)
            );
        }
    }

    fn polyline(&self, s: &mut String, pts: &[(f64, f64)], color: &str, dash: bool) {
        let path: Vec<String> = pts
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", self.px(x), self.py(y.clamp(self.y0, self.y1))))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5"{} points="{}"/>"#,
            if dash { r#" stroke-dasharray="5,3""# } else { "" },
            path.join(" ")
        );
    }

    fn legend(&self, s: &mut String, entries: &[(&str, &str)]) {
        for (i, (label, color)) in entries.iter().enumerate() {
            let y = self.top + 14.0 + 16.0 * i as f64;
            let x = self.left + self.w - 170.0;
            let _ = writeln!(s, r#"<rect x="{x:.1}" y="{:.1}" width="12" height="4" fill="{color}"/>"#, y - 4.0);
            let _ = writeln!(s, r#"<text x="{:.1}" y="{y:.1}" font-size="11">{}</text>"#, x + 18.0, escape(label));
        }
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn svg_document(width: f64, height: f64, header: &RunHeader, body: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#);
    for l in header.lines() {
        let _ = writeln!(s, "<!-- {} -->", escape(&l));
    }
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    s.push_str(body);
    s.push_str("</svg>\n");
    s
}

/// Histogram of z (as a density) with the fitted mixture f, the null part
/// p0·f0, and the local fdr on a secondary 0–1 scale.
pub fn selection_svg(header: &RunHeader, model: &TwoGroupsModel, z: &[f64], threshold: f64) -> Result<String> {
    if z.is_empty() {
        return Err(Error::invalid("no z-values to plot"));
    }
    let v = model.default_sampling_variance();
    let lo = z.iter().copied().fold(f64::INFINITY, f64::min).min(threshold) - 0.5;
    let hi = z.iter().copied().fold(f64::NEG_INFINITY, f64::max).max(threshold) + 0.5;
    let bins = 60usize;
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &x in z {
        counts[(((x - lo) / width) as usize).min(bins - 1)] += 1;
    }
    let density: Vec<f64> = counts.iter().map(|&c| c as f64 / (z.len() as f64 * width)).collect();
    let grid: Vec<f64> = (0..=300).map(|i| lo + (hi - lo) * i as f64 / 300.0).collect();
    let f_curve: Vec<(f64, f64)> = grid.iter().map(|&x| (x, model.marginal_density_unchecked(x, v))).collect();
    let f0_curve: Vec<(f64, f64)> = grid.iter().map(|&x| (x, model.p0() * model.null().density(x, v))).collect();
    let ymax = density.iter().chain(f_curve.iter().map(|p| &p.1)).copied().fold(0.0, f64::max) * 1.05;
    let frame = Frame {
        x0: lo,
        x1: hi,
        y0: 0.0,
        y1: ymax.max(1e-12),
        left: 60.0,
        top: 30.0,
        w: 620.0,
        h: 320.0,
    };
    let fdr_curve: Vec<(f64, f64)> = grid
        .iter()
        .filter_map(|&x| posterior::local_fdr(model, x, v).ok().map(|p| (x, p * frame.y1)))
        .collect();

    let mut body = String::new();
    for (i, d) in density.iter().enumerate() {
        let x = lo + i as f64 * width;
        let _ = writeln!(
            body,
            r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#ccc"/>"##,
            frame.px(x),
            frame.py(*d),
            frame.px(x + width) - frame.px(x),
            frame.py(0.0) - frame.py(*d)
        );
    }
    frame.polyline(&mut body, &f_curve, PALETTE[0], false);
    frame.polyline(&mut body, &f0_curve, PALETTE[1], true);
    frame.polyline(&mut body, &fdr_curve, PALETTE[2], false);
    let _ = writeln!(
        body,
        r#"<line x1="{0:.2}" x2="{0:.2}" y1="{1:.2}" y2="{2:.2}" stroke="black" stroke-dasharray="2,2"/>"#,
        frame.px(threshold),
        frame.top,
        frame.top + frame.h
    );
    frame.axes(&mut body, "z-values with fitted mixture", "z");
    frame.legend(&mut body, &[("f(z)", PALETTE[0]), ("p0 f0(z)", PALETTE[1]), ("fdr(z), 0 to 1 scale", PALETTE[2])]);
    Ok(svg_document(760.0, 400.0, header, &body))
}

/// Width against distance from the fitted centre for each profile, next to
/// a bar chart of pooled coverage by method.
pub fn coverage_svg(header: &RunHeader, results: &[CoverageResult], profiles: &[BowingProfile]) -> String {
    let mut body = String::new();
    let dmax = profiles.iter().flat_map(|p| p.points.iter().map(|q| q.0)).fold(0.0, f64::max).max(1e-9);
    let wmax = profiles.iter().flat_map(|p| p.points.iter().map(|q| q.1)).fold(0.0, f64::max).max(1e-9) * 1.1;
    let left = Frame {
        x0: 0.0,
        x1: dmax,
        y0: 0.0,
        y1: wmax,
        left: 60.0,
        top: 30.0,
        w: 380.0,
        h: 300.0,
    };
    let mut legend = Vec::new();
    for (i, p) in profiles.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        left.polyline(&mut body, &p.points, color, false);
        legend.push((p.method.name(), color));
    }
    left.axes(&mut body, "interval width by distance from centre", "|z - m|");
    left.legend(&mut body, &legend);

    let right = Frame {
        x0: 0.0,
        x1: results.len().max(1) as f64,
        y0: 0.0,
        y1: 1.0,
        left: 520.0,
        top: 30.0,
        w: 320.0,
        h: 300.0,
    };
    for (i, r) in results.iter().enumerate() {
        let x = i as f64 + 0.15;
        let _ = writeln!(
            body,
            r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
            right.px(x),
            right.py(r.empirical_coverage),
            right.px(x + 0.7) - right.px(x),
            right.py(0.0) - right.py(r.empirical_coverage),
            PALETTE[i % PALETTE.len()]
        );
        let _ = writeln!(
            body,
            r#"<text x="{:.2}" y="{:.2}" font-size="10" text-anchor="middle">{} ({})</text>"#,
            right.px(i as f64 + 0.5),
            right.py(r.empirical_coverage) - 4.0,
            r.method.name(),
            sig4(r.empirical_coverage)
        );
    }
    if let Some(r) = results.first() {
        let y = right.py(r.nominal);
        let _ = writeln!(
            body,
            r#"<line x1="{:.2}" x2="{:.2}" y1="{y:.2}" y2="{y:.2}" stroke="black" stroke-dasharray="4,2"/>"#,
            right.left,
            right.left + right.w
        );
    }
    right.axes(&mut body, "pooled coverage", "method");
    svg_document(880.0, 380.0, header, &body)
}

// ------------------------------------------------- illustration checks

/// One row of the fixed numerical illustration: a quantity computed for the
/// illustration model and the band it is expected to fall in.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IllustrationCheck {
    pub name: String,
    pub k: Option<f64>,
    pub value: f64,
    pub expected: f64,
    pub lower: f64,
    pub upper: f64,
}

impl IllustrationCheck {
    pub fn passed(&self) -> bool {
        self.value >= self.lower && self.value <= self.upper
    }
}

/// Units in the illustration panel.
pub const ILLUSTRATION_UNITS: f64 = 3000.0;
/// Selection threshold of the illustration.
pub const ILLUSTRATION_THRESHOLD: f64 = 3.5;

/// Computes the illustration quantities for the model with z = 3.5, V = 1:
/// the tail mass beyond 3.5, the expected selected count out of 3000,
/// P(μ > k | z) for k = 2.8 and 2.0, and the population-averaged exceedance
/// over Z ≥ 3.5 for k = 2.8, 2.0 and 0. `ks` keeps only rows for those k.
pub fn illustration_checks(model: &TwoGroupsModel, ks: Option<&[f64]>) -> Result<Vec<IllustrationCheck>> {
    let z = ILLUSTRATION_THRESHOLD;
    let tail = model.marginal_upper_tail(z, 1.0)?;
    let row = |name: &str, k: Option<f64>, value: f64, expected: f64, lower: f64, upper: f64| IllustrationCheck {
        name: name.into(),
        k,
        value,
        expected,
        lower,
        upper,
    };
    let mut rows = vec![
        row("tail mass P(Z >= 3.5)", None, tail, 0.021, 0.0205, 0.0215),
        row("expected selected of 3000", None, tail * ILLUSTRATION_UNITS, 63.0, 62.0, 64.0),
        row("P(mu > 2.8 | z = 3.5)", Some(2.8), posterior::exceedance_probability(model, z, 1.0, 2.8)?, 0.506, 0.504, 0.508),
        row("P(mu > 2.0 | z = 3.5)", Some(2.0), posterior::exceedance_probability(model, z, 1.0, 2.0)?, 0.90, 0.89, 0.91),
    ];
    for (k, expected, lower, upper) in [(2.8, 0.60, 0.55, 0.65), (2.0, 0.95, 0.93, 0.97), (0.0, 0.98, 0.96, 0.995)] {
        rows.push(row(
            &format!("averaged exceedance over Z >= 3.5, k = {k}"),
            Some(k),
            posterior::population_averaged_exceedance(model, z, k, 1.0, Tail::Upper)?,
            expected,
            lower,
            upper,
        ));
    }
    if let Some(ks) = ks {
        rows.retain(|r| r.k.is_some_and(|k| ks.contains(&k)));
    }
    Ok(rows)
}

/// Plain-text table of the checks.
pub fn illustration_table(rows: &[IllustrationCheck]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:<46} {:>10} {:>10} {:>19}  result", "quantity", "value", "expected", "band");
    for r in rows {
        let _ = writeln!(
            s,
            "{:<46} {:>10} {:>10} {:>19}  {}",
            r.name,
            sig4(r.value),
            sig4(r.expected),
            format!("[{}, {}]", sig4(r.lower), sig4(r.upper)),
            if r.passed() { "PASS" } else { "FAIL" }
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig4_formats() {
        assert_eq!(sig4(0.50599), "0.5060");
        assert_eq!(sig4(62.76), "62.76");
        assert_eq!(sig4(1234.6), "1235");
        assert_eq!(sig4(0.020920), "0.02092");
        assert_eq!(sig4(0.0), "0");
        assert_eq!(sig4(1.5e-7), "1.500e-7");
        assert_eq!(sig4(-7.65432), "-7.654");
    }

    #[test]
    fn sha_of_empty_input() {
        assert_eq!(sha256_hex(b""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    }

    #[test]
    fn header_block_lines() {
        let h = RunHeader::new("fit", Some(7), "x");
        let block = h.comment_block();
        assert!(block.starts_with("# twogroups "));
        assert!(block.contains("# seed: 7\n"));
        assert_eq!(block.lines().count(), 4);
    }

    #[test]
    fn checks_filter_by_k() {
        let m = TwoGroupsModel::illustration();
        let all = illustration_checks(&m, None).unwrap();
        assert_eq!(all.len(), 7);
        let zero = illustration_checks(&m, Some(&[0.0])).unwrap();
        assert_eq!(zero.len(), 1);
        assert!(zero[0].passed());
    }

    #[test]
    fn output_dir_refuses_overwrite() {
        let dir = tempfile::tempdir().unwrap();
        let out = OutputDir::new(dir.path(), false);
        out.prepare(&["a.csv"]).unwrap();
        out.write("a.csv", b"x").unwrap();
        assert!(matches!(out.prepare(&["a.csv"]), Err(Error::OutputExists(_))));
        OutputDir::new(dir.path(), true).prepare(&["a.csv"]).unwrap();
    }

    #[test]
    fn svg_is_well_formed_enough() {
        let m = TwoGroupsModel::illustration();
        let h = RunHeader::new("select", None, "");
        let s = selection_svg(&h, &m, &[0.1, -0.5, 3.7, 2.2], 3.5).unwrap();
        assert!(s.starts_with("<svg") && s.trim_end().ends_with("</svg>"));
        assert_eq!(s.matches("<polyline").count(), 3);
    }
}
