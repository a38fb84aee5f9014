//! Moderated two-sample statistics: per-row sample variances are shrunk
//! toward a common value fitted across rows before forming t-statistics,
//! which tames rows whose variance is small by chance.
//!
//! Model: s_i² | σ_i² ~ σ_i² χ²_df / df and σ_i² ~ scaled-inv-χ²(d0, s0²).
//! (d0, s0²) come from the first two moments of ln s_i².

use crate::dist::{digamma, t_to_z, trigamma, trigamma_inverse};
use crate::error::{Error, Result};
use crate::panel::{Unit, ZPanel};
use crate::rng::substream;
use rand::Rng;
use rand_distr::{ChiSquared, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;
use std::io::Read;
use std::path::Path;

const MIN_ROWS: usize = 30;

/// Rows of measurements for two groups of samples.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpressionMatrix {
    row_ids: Vec<String>,
    labels: Vec<String>,
    values: Vec<Vec<f64>>,
    group_a: Vec<usize>,
    group_b: Vec<usize>,
}

impl ExpressionMatrix {
    pub fn new(row_ids: Vec<String>, labels: Vec<String>, values: Vec<Vec<f64>>) -> Result<Self> {
        if row_ids.len() != values.len() {
            return Err(Error::invalid("row id count does not match the number of rows"));
        }
        let first = labels.first().ok_or_else(|| Error::invalid("matrix has no sample columns"))?;
        let group_a: Vec<usize> = (0..labels.len()).filter(|&j| &labels[j] == first).collect();
        let group_b: Vec<usize> = (0..labels.len()).filter(|&j| &labels[j] != first).collect();
        if let Some(&j) = group_b.iter().find(|&&j| labels[j] != labels[group_b[0]]) {
            return Err(Error::invalid(format!("expected two groups, found a third label {:?}", labels[j])));
        }
        if group_a.len() < 2 || group_b.len() < 2 {
            return Err(Error::invalid("each group needs at least 2 samples"));
        }
        let mut seen = std::collections::HashSet::new();
        for (id, row) in row_ids.iter().zip(&values) {
            if !seen.insert(id.as_str()) {
                return Err(Error::invalid(format!("duplicate row id {id:?}")));
            }
            if row.len() != labels.len() {
                return Err(Error::invalid(format!("row {id:?} has {} values, expected {}", row.len(), labels.len())));
            }
            if row.iter().any(|x| !x.is_finite()) {
                return Err(Error::invalid(format!("row {id:?} has a missing or non-finite value")));
            }
        }
        Ok(Self {
            row_ids,
            labels,
            values,
            group_a,
            group_b,
        })
    }

    pub fn row_ids(&self) -> &[String] {
        &self.row_ids
    }
    pub fn labels(&self) -> &[String] {
        &self.labels
    }
    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }
    pub fn len(&self) -> usize {
        self.row_ids.len()
    }
    pub fn is_empty(&self) -> bool {
        self.row_ids.is_empty()
    }
    /// Labels of group A (the first label in the header) and group B.
    pub fn group_labels(&self) -> (&str, &str) {
        (&self.labels[self.group_a[0]], &self.labels[self.group_b[0]])
    }
    pub fn group_sizes(&self) -> (usize, usize) {
        (self.group_a.len(), self.group_b.len())
    }

    pub fn read_path(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read(file, &path.display().to_string())
    }

    /// Tab-separated text: the first row holds a corner cell followed by
    /// group labels; every later row holds an id followed by values. Lines
    /// starting with `#` are skipped.
    pub fn read<R: Read>(reader: R, source: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .delimiter(b'\t')
            .has_headers(false)
            .comment(Some(b'#'))
            .flexible(true)
            .from_reader(reader);
        let mut labels = None;
        let (mut ids, mut values) = (Vec::new(), Vec::new());
        for record in rdr.records() {
            let record = record?;
            let line = record.position().map_or(0, |p| p.line());
            let parse_err = |msg: String| Error::Parse {
                path: source.to_string(),
                line,
                msg,
            };
            if labels.is_none() {
                labels = Some(record.iter().skip(1).map(|s| s.trim().to_string()).collect::<Vec<_>>());
                continue;
            }
            let mut cells = record.iter();
            let id = cells.next().unwrap_or("").trim().to_string();
            if id.is_empty() {
                return Err(parse_err("empty row id".into()));
            }
            let row = cells
                .map(|c| match c.trim().parse::<f64>() {
                    Ok(x) if x.is_finite() => Ok(x),
                    _ => Err(parse_err(format!("value {c:?} is missing or not a finite number"))),
                })
                .collect::<Result<Vec<f64>>>()?;
            ids.push(id);
            values.push(row);
        }
        let labels = labels.ok_or_else(|| Error::Parse {
            path: source.to_string(),
            line: 1,
            msg: "missing label row".into(),
        })?;
        Self::new(ids, labels, values)
    }

    pub fn write<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().delimiter(b'\t').from_writer(out);
        let mut header = vec!["id".to_string()];
        header.extend(self.labels.iter().cloned());
        w.write_record(&header)?;
        for (id, row) in self.row_ids.iter().zip(&self.values) {
            let mut rec = vec![id.clone()];
            rec.extend(row.iter().map(|x| x.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Pooled two-sample statistic for one row. `diff` is mean(A) − mean(B).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TwoSampleScore {
    pub id: String,
    pub diff: f64,
    pub t: f64,
    pub df: f64,
    pub s_raw: f64,
    /// √(1/n1 + 1/n2), the factor turning s into the sd of `diff`.
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlaggedRow {
    pub id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TwoSampleScores {
    pub scores: Vec<TwoSampleScore>,
    pub flagged: Vec<FlaggedRow>,
}

fn mean_and_ss(mut xs: Vec<f64>) -> (f64, f64) {
    // Sorting first makes the sums independent of column order.
    xs.sort_by(f64::total_cmp);
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    let ss = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
    (mean, ss)
}

/// Pooled-variance two-sample t per row with df = n1 + n2 − 2. Rows with
/// no within-group variation are flagged and left out.
pub fn two_sample_scores(x: &ExpressionMatrix) -> TwoSampleScores {
    let (n1, n2) = x.group_sizes();
    let df = (n1 + n2 - 2) as f64;
    let scale = (1.0 / n1 as f64 + 1.0 / n2 as f64).sqrt();
    let rows: Vec<std::result::Result<TwoSampleScore, FlaggedRow>> = x
        .row_ids
        .par_iter()
        .zip(x.values.par_iter())
        .map(|(id, row)| {
            let (ma, ssa) = mean_and_ss(x.group_a.iter().map(|&j| row[j]).collect());
            let (mb, ssb) = mean_and_ss(x.group_b.iter().map(|&j| row[j]).collect());
            let s = ((ssa + ssb) / df).sqrt();
            if !(s > 0.0) {
                return Err(FlaggedRow {
                    id: id.clone(),
                    reason: "zero within-group variance".into(),
                });
            }
            let diff = ma - mb;
            Ok(TwoSampleScore {
                id: id.clone(),
                diff,
                t: diff / (s * scale),
                df,
                s_raw: s,
                scale,
            })
        })
        .collect();
    let mut out = TwoSampleScores {
        scores: Vec::new(),
        flagged: Vec::new(),
    };
    for r in rows {
        match r {
            Ok(s) => out.scores.push(s),
            Err(f) => out.flagged.push(f),
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarianceShrinkage {
    pub s_shrunk: Vec<f64>,
    /// Prior degrees of freedom; infinite when the spread of ln s² does not
    /// exceed what sampling alone produces.
    pub d0: f64,
    pub s0: f64,
}

impl VarianceShrinkage {
    pub fn total_shrinkage(&self) -> bool {
        self.d0.is_infinite()
    }
}

/// Fits (d0, s0) and returns posterior-mean variances
/// (df·s² + d0·s0²)/(df + d0) on the sd scale.
pub fn shrink_variances(s_raw: &[f64], df: f64) -> Result<VarianceShrinkage> {
    if s_raw.len() < MIN_ROWS {
        return Err(Error::InsufficientData {
            what: "rows for variance shrinkage",
            needed: MIN_ROWS,
            got: s_raw.len(),
        });
    }
    if !(df > 0.0 && df.is_finite()) {
        return Err(Error::invalid(format!("degrees of freedom must be positive, got {df}")));
    }
    if let Some(s) = s_raw.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
        return Err(Error::invalid(format!("standard deviations must be positive and finite, got {s}")));
    }
    let n = s_raw.len() as f64;
    let half = df / 2.0;
    let e: Vec<f64> = s_raw.iter().map(|s| (s * s).ln() - digamma(half) + half.ln()).collect();
    let e_bar = e.iter().sum::<f64>() / n;
    let var_e = e.iter().map(|x| (x - e_bar).powi(2)).sum::<f64>() / (n - 1.0);
    let excess = var_e - trigamma(half);

    let mut d0 = if excess > 0.0 { 2.0 * trigamma_inverse(excess) } else { f64::INFINITY };
    if !d0.is_finite() {
        d0 = f64::INFINITY;
    }
    // With d0 = ∞ every row shares one variance, and the pooled mean of s²
    // estimates it without bias.
    let s0_sq = if d0.is_finite() {
        (e_bar + digamma(d0 / 2.0) - (d0 / 2.0).ln()).exp()
    } else {
        s_raw.iter().map(|s| s * s).sum::<f64>() / n
    };
    Ok(VarianceShrinkage {
        s_shrunk: s_raw.iter().map(|&s| shrink_toward(s, df, s0_sq.sqrt(), d0)).collect(),
        d0,
        s0: s0_sq.sqrt(),
    })
}

/// Posterior-mean shrinkage of one sd toward `s0` with prior weight `d0`.
pub fn shrink_toward(s: f64, df: f64, s0: f64, d0: f64) -> f64 {
    if d0.is_infinite() {
        return s0;
    }
    ((df * s * s + d0 * s0 * s0) / (df + d0)).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeratedRow {
    pub id: String,
    pub diff: f64,
    pub raw_t: f64,
    pub df: f64,
    pub s_raw: f64,
    pub s_shrunk: f64,
    pub moderated_t: f64,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeratedScores {
    pub rows: Vec<ModeratedRow>,
    pub flagged: Vec<FlaggedRow>,
    pub d0: f64,
    pub s0: f64,
    /// Degrees of freedom used for the t → z conversion, df + d0.
    pub moderated_df: f64,
}

/// Two-sample scores, variance shrinkage, moderated t on df + d0 degrees of
/// freedom, and z = Φ⁻¹(F_t(t)). Flagged rows are excluded from the fit and
/// from the returned panel.
pub fn moderated_pipeline(x: &ExpressionMatrix) -> Result<(ZPanel, ModeratedScores)> {
    let raw = two_sample_scores(x);
    let s: Vec<f64> = raw.scores.iter().map(|r| r.s_raw).collect();
    let df = (x.group_a.len() + x.group_b.len() - 2) as f64;
    let shrink = shrink_variances(&s, df)?;
    let moderated_df = df + shrink.d0;
    let rows: Vec<ModeratedRow> = raw
        .scores
        .par_iter()
        .zip(shrink.s_shrunk.par_iter())
        .map(|(r, &ss)| {
            let moderated_t = r.diff / (ss * r.scale);
            ModeratedRow {
                id: r.id.clone(),
                diff: r.diff,
                raw_t: r.t,
                df: r.df,
                s_raw: r.s_raw,
                s_shrunk: ss,
                moderated_t,
                z: t_to_z(moderated_t, moderated_df),
            }
        })
        .collect();
    let panel = ZPanel::new(rows.iter().map(|r| Unit::new(r.id.clone(), r.z)).collect())?;
    Ok((
        panel,
        ModeratedScores {
            rows,
            flagged: raw.flagged,
            d0: shrink.d0,
            s0: shrink.s0,
            moderated_df,
        },
    ))
}

/// Generator for two-group expression data with row variances drawn from a
/// scaled-inverse-χ² prior. The first `round(nonnull_fraction·rows)` rows
/// get `shift` added to every group-A sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpressionSimulation {
    pub rows: usize,
    pub n_a: usize,
    pub n_b: usize,
    pub prior_df: f64,
    pub prior_scale: f64,
    pub nonnull_fraction: f64,
    pub shift: f64,
}

impl Default for ExpressionSimulation {
    fn default() -> Self {
        Self {
            rows: 2000,
            n_a: 3,
            n_b: 3,
            prior_df: 8.0,
            prior_scale: 1.0,
            nonnull_fraction: 0.05,
            shift: 2.0,
        }
    }
}

impl ExpressionSimulation {
    pub fn nonnull_rows(&self) -> usize {
        (self.nonnull_fraction * self.rows as f64).round() as usize
    }

    /// Returns the matrix and the true row variances.
    pub fn generate(&self, seed: u64) -> Result<(ExpressionMatrix, Vec<f64>)> {
        if self.rows == 0 || !(self.prior_df > 0.0) || !(self.prior_scale > 0.0) || !(0.0..=1.0).contains(&self.nonnull_fraction) {
            return Err(Error::invalid("invalid expression simulation settings"));
        }
        let chi = ChiSquared::new(self.prior_df).map_err(|e| Error::invalid(e.to_string()))?;
        let k = self.nonnull_rows();
        let width = self.rows.to_string().len();
        let rows: Vec<(Vec<f64>, f64)> = (0..self.rows)
            .into_par_iter()
            .map(|i| {
                let mut rng = substream(seed, i as u64);
                let sigma2 = self.prior_df * self.prior_scale / rng.sample(chi);
                let sd = sigma2.sqrt();
                let shift = if i < k { self.shift } else { 0.0 };
                let row = (0..self.n_a + self.n_b)
                    .map(|j| {
                        let e: f64 = rng.sample(StandardNormal);
                        sd * e + if j < self.n_a { shift } else { 0.0 }
                    })
                    .collect();
                (row, sigma2)
            })
            .collect();
        let labels = (0..self.n_a)
            .map(|_| "A".to_string())
            .chain((0..self.n_b).map(|_| "B".to_string()))
            .collect();
        let ids = (0..self.rows).map(|i| format!("r{:0width$}", i + 1)).collect();
        let (values, sigma2) = rows.into_iter().unzip();
        Ok((ExpressionMatrix::new(ids, labels, values)?, sigma2))
    }
}

/// Fraction of the `top` rows ranked by `|score|` (descending, ties by
/// index) that are not truly non-null.
pub fn false_discovery_proportion(scores: &[f64], is_nonnull: &[bool], top: usize) -> f64 {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].abs().total_cmp(&scores[a].abs()).then(a.cmp(&b)));
    let top = top.min(order.len());
    if top == 0 {
        return 0.0;
    }
    order[..top].iter().filter(|&&i| !is_nonnull[i]).count() as f64 / top as f64
}
