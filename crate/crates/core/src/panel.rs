//! Observed units (id, z, optional sampling variance or sample size) and
//! their CSV/TSV form: header `id,z` optionally followed by `variance` or
//! `n`. Lines starting with `#` are comments.

use crate::error::{ensure_finite, ensure_positive, Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum UnitPrecision {
    /// Use the model's default sampling variance.
    Default,
    Variance(f64),
    /// Sample size n_i; the sampling variance is σ²/n_i with σ² the
    /// panel-level variance.
    SampleSize(u64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Unit {
    pub id: String,
    pub z: f64,
    pub precision: UnitPrecision,
}

impl Unit {
    pub fn new(id: impl Into<String>, z: f64) -> Self {
        Self {
            id: id.into(),
            z,
            precision: UnitPrecision::Default,
        }
    }

    pub fn with_variance(id: impl Into<String>, z: f64, variance: f64) -> Self {
        Self {
            id: id.into(),
            z,
            precision: UnitPrecision::Variance(variance),
        }
    }

    /// Sampling variance of this unit given the panel-level σ².
    pub fn sampling_variance(&self, sigma2: f64) -> f64 {
        match self.precision {
            UnitPrecision::Default => sigma2,
            UnitPrecision::Variance(v) => v,
            UnitPrecision::SampleSize(n) => sigma2 / n as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrecisionColumn {
    None,
    Variance,
    SampleSize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZPanel {
    units: Vec<Unit>,
}

impl ZPanel {
    pub fn new(units: Vec<Unit>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(units.len());
        for u in &units {
            ensure_finite(&format!("z of unit {}", u.id), u.z)?;
            match u.precision {
                UnitPrecision::Variance(v) => ensure_positive(&format!("variance of unit {}", u.id), v)?,
                UnitPrecision::SampleSize(0) => {
                    return Err(Error::invalid(format!("sample size of unit {} must be positive", u.id)))
                }
                _ => {}
            }
            if !seen.insert(u.id.as_str()) {
                return Err(Error::invalid(format!("duplicate unit id {:?}", u.id)));
            }
        }
        Ok(Self { units })
    }

    /// Panel with default precision for every unit.
    pub fn from_z(z: &[f64]) -> Result<Self> {
        let width = z.len().to_string().len();
        Self::new(
            z.iter()
                .enumerate()
                .map(|(i, &zi)| Unit::new(format!("u{:0width$}", i + 1), zi))
                .collect(),
        )
    }

    pub fn from_z_and_variances(z: &[f64], v: &[f64]) -> Result<Self> {
        if z.len() != v.len() {
            return Err(Error::invalid("z and variance lengths differ"));
        }
        let width = z.len().to_string().len();
        Self::new(
            z.iter()
                .zip(v)
                .enumerate()
                .map(|(i, (&zi, &vi))| Unit::with_variance(format!("u{:0width$}", i + 1), zi, vi))
                .collect(),
        )
    }

    pub fn units(&self) -> &[Unit] {
        &self.units
    }
    pub fn len(&self) -> usize {
        self.units.len()
    }
    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    pub fn z_values(&self) -> Vec<f64> {
        self.units.iter().map(|u| u.z).collect()
    }

    /// Per-unit sampling variances given the panel-level σ².
    pub fn variances(&self, sigma2: f64) -> Vec<f64> {
        self.units.iter().map(|u| u.sampling_variance(sigma2)).collect()
    }

    pub fn precision_column(&self) -> PrecisionColumn {
        if self.units.iter().any(|u| matches!(u.precision, UnitPrecision::SampleSize(_))) {
            PrecisionColumn::SampleSize
        } else if self.units.iter().any(|u| matches!(u.precision, UnitPrecision::Variance(_))) {
            PrecisionColumn::Variance
        } else {
            PrecisionColumn::None
        }
    }

    pub fn read_path(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let delim = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("tsv")) {
            Some(b'\t')
        } else {
            None
        };
        Self::read(file, delim, &path.display().to_string())
    }

    /// Reads a panel; with `delimiter = None` a tab in the header selects
    /// TSV, otherwise comma.
    pub fn read<R: Read>(mut reader: R, delimiter: Option<u8>, source: &str) -> Result<Self> {
        let mut text = String::new();
        reader.read_to_string(&mut text)?;
        let delim = delimiter.unwrap_or_else(|| {
            let header = text.lines().find(|l| !l.starts_with('#') && !l.trim().is_empty()).unwrap_or("");
            if header.contains('\t') {
                b'\t'
            } else {
                b','
            }
        });
        let mut rdr = csv::ReaderBuilder::new()
            .delimiter(delim)
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let parse_err = |line: u64, msg: String| Error::Parse {
            path: source.to_string(),
            line,
            msg,
        };
        let headers = rdr.headers()?.clone();
        let cols: Vec<&str> = headers.iter().collect();
        let extra = match cols.as_slice() {
            ["id", "z"] => PrecisionColumn::None,
            ["id", "z", "variance"] => PrecisionColumn::Variance,
            ["id", "z", "n"] => PrecisionColumn::SampleSize,
            _ => {
                return Err(parse_err(
                    1,
                    format!("expected header id,z[,variance|n], found {}", cols.join(",")),
                ))
            }
        };
        let mut units = Vec::new();
        let mut seen = HashSet::new();
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            let id = rec.get(0).unwrap_or("").to_string();
            if id.is_empty() {
                return Err(parse_err(line, "empty id".into()));
            }
            if !seen.insert(id.clone()) {
                return Err(parse_err(line, format!("duplicate id {id:?}")));
            }
            let z: f64 = rec
                .get(1)
                .unwrap_or("")
                .parse()
                .map_err(|_| parse_err(line, format!("z is not a number: {:?}", rec.get(1).unwrap_or(""))))?;
            if !z.is_finite() {
                return Err(parse_err(line, "z must be finite".into()));
            }
            let field = rec.get(2).unwrap_or("");
            let precision = match extra {
                PrecisionColumn::None => UnitPrecision::Default,
                _ if field.is_empty() => UnitPrecision::Default,
                PrecisionColumn::Variance => {
                    let v: f64 = field
                        .parse()
                        .map_err(|_| parse_err(line, format!("variance is not a number: {field:?}")))?;
                    if !(v.is_finite() && v > 0.0) {
                        return Err(parse_err(line, format!("variance must be positive, got {v}")));
                    }
                    UnitPrecision::Variance(v)
                }
                PrecisionColumn::SampleSize => {
                    let n: u64 = field
                        .parse()
                        .map_err(|_| parse_err(line, format!("n is not a positive integer: {field:?}")))?;
                    if n == 0 {
                        return Err(parse_err(line, "n must be positive".into()));
                    }
                    UnitPrecision::SampleSize(n)
                }
            };
            units.push(Unit { id, z, precision });
        }
        Self::new(units)
    }

    /// Writes the panel as CSV, preceded by `header` comment lines.
    pub fn write<W: Write>(&self, mut out: W, header: &[String]) -> Result<()> {
        for line in header {
            writeln!(out, "# {line}")?;
        }
        let column = self.precision_column();
        let mut wtr = csv::Writer::from_writer(out);
        match column {
            PrecisionColumn::None => wtr.write_record(["id", "z"])?,
            PrecisionColumn::Variance => wtr.write_record(["id", "z", "variance"])?,
            PrecisionColumn::SampleSize => wtr.write_record(["id", "z", "n"])?,
        }
        for u in &self.units {
            let extra = match u.precision {
                UnitPrecision::Default => String::new(),
                UnitPrecision::Variance(v) => v.to_string(),
                UnitPrecision::SampleSize(n) => n.to_string(),
            };
            if column == PrecisionColumn::None {
                wtr.write_record([u.id.as_str(), &u.z.to_string()])?;
            } else {
                wtr.write_record([u.id.as_str(), &u.z.to_string(), &extra])?;
            }
        }
        wtr.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_variance_and_n_columns() {
        let p = ZPanel::read("id,z,variance\na,1.5,0.25\nb,-0.5,\n".as_bytes(), None, "t").unwrap();
        assert_eq!(p.len(), 2);
        assert_eq!(p.units()[0].sampling_variance(1.0), 0.25);
        assert_eq!(p.units()[1].sampling_variance(2.0), 2.0);

        let p = ZPanel::read("# comment\nid\tz\tn\nx\t0.1\t4\n".as_bytes(), None, "t").unwrap();
        assert_eq!(p.units()[0].sampling_variance(2.0), 0.5);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = ZPanel::read("id,z\na,1\nb,oops\n".as_bytes(), None, "panel.csv").unwrap_err();
        match err {
            Error::Parse { line, path, .. } => {
                assert_eq!(line, 3);
                assert_eq!(path, "panel.csv");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(ZPanel::read("id,z\na,1\na,2\n".as_bytes(), None, "t").is_err());
        assert!(ZPanel::read("name,score\n".as_bytes(), None, "t").is_err());
        assert!(ZPanel::read("id,z,n\na,1,0\n".as_bytes(), None, "t").is_err());
        assert!(ZPanel::read("id,z\na,inf\n".as_bytes(), None, "t").is_err());
    }

    #[test]
    fn write_then_read() {
        let p = ZPanel::from_z_and_variances(&[0.1, -2.25, 3.000_000_000_1], &[1.0, 0.5, 2.0]).unwrap();
        let mut buf = Vec::new();
        p.write(&mut buf, &["seed: 1".into()]).unwrap();
        let back = ZPanel::read(buf.as_slice(), None, "mem").unwrap();
        assert_eq!(p, back);
    }

    #[test]
    fn duplicate_ids_rejected() {
        assert!(ZPanel::new(vec![Unit::new("a", 0.0), Unit::new("a", 1.0)]).is_err());
    }
}
