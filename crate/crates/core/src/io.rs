//! CSV formats: cohorts (`time,status,z1,...,zp` with a `# tau=<value>`
//! metadata line), coefficient vectors and fitted hazards.
//!
//! Every float is written with 17 significant digits so that a write/read
//! cycle reproduces the in-memory value exactly.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::survival::{Cohort, Hazard, QUADRATURE_POINTS};

/// Lossless, locale-independent rendering with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Reads `key=value` pairs from leading `#` lines.
fn metadata(text: &str) -> Vec<(String, String)> {
    text.lines()
        .take_while(|l| l.trim_start().starts_with('#'))
        .flat_map(|l| {
            l.trim_start()
                .trim_start_matches('#')
                .split([',', ' '])
                .filter_map(|kv| kv.split_once('='))
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .collect::<Vec<_>>()
        })
        .collect()
}

fn parse_field(record: &csv::StringRecord, column: usize, name: &str) -> Result<f64> {
    let line = record.position().map_or(0, |p| p.line());
    let raw = record.get(column).ok_or_else(|| Error::Parse {
        line,
        column: column + 1,
        message: format!("missing field {name}"),
    })?;
    raw.trim().parse::<f64>().map_err(|e| Error::Parse {
        line,
        column: column + 1,
        message: format!("{name}: cannot parse {raw:?} as a number ({e})"),
    })
}

fn reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes())
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    Error::Parse {
        line,
        column: 0,
        message: e.to_string(),
    }
}

/// Parses a cohort; `tau` overrides the metadata line when given.
pub fn read_cohort<R: Read>(mut input: R, tau: Option<f64>) -> Result<Cohort> {
    let mut text = String::new();
    input.read_to_string(&mut text)?;
    let meta_tau = metadata(&text)
        .into_iter()
        .find(|(k, _)| k == "tau")
        .map(|(_, v)| {
            v.parse::<f64>().map_err(|e| Error::Parse {
                line: 1,
                column: 0,
                message: format!("tau metadata {v:?}: {e}"),
            })
        })
        .transpose()?;
    let tau = tau.or(meta_tau).ok_or_else(|| {
        Error::input("no study horizon: add a '# tau=<value>' line or pass tau explicitly")
    })?;

    let mut rdr = reader(&text);
    let headers = rdr.headers().map_err(csv_error)?.clone();
    let header_line = headers.position().map_or(1, |p| p.line());
    let names: Vec<&str> = headers.iter().collect();
    if names.len() < 2 || names[0] != "time" || names[1] != "status" {
        return Err(Error::Parse {
            line: header_line,
            column: 1,
            message: format!(
                "header must start with time,status; got {}",
                names.join(",")
            ),
        });
    }
    let p = names.len() - 2;
    for (k, name) in names[2..].iter().enumerate() {
        if *name != format!("z{}", k + 1) {
            return Err(Error::Parse {
                line: header_line,
                column: k + 3,
                message: format!("expected column z{}, got {name}", k + 1),
            });
        }
    }

    let mut times = Vec::new();
    let mut status = Vec::new();
    let mut covariates = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map_or(0, |pos| pos.line());
        if record.len() != p + 2 {
            return Err(Error::Parse {
                line,
                column: record.len().min(p + 2) + 1,
                message: format!("expected {} fields, found {}", p + 2, record.len()),
            });
        }
        let t = parse_field(&record, 0, "time")?;
        if !(t.is_finite() && t >= 0.0) {
            return Err(Error::Parse {
                line,
                column: 1,
                message: format!("time must be nonnegative, got {t}"),
            });
        }
        let s = match record.get(1).map(str::trim) {
            Some("1") => true,
            Some("0") => false,
            other => {
                return Err(Error::Parse {
                    line,
                    column: 2,
                    message: format!("status must be 0 or 1, got {:?}", other.unwrap_or("")),
                })
            }
        };
        times.push(t);
        status.push(s);
        for j in 0..p {
            covariates.push(parse_field(&record, j + 2, names[j + 2])?);
        }
    }
    Cohort::from_columns(times, status, covariates, p, tau)
}

pub fn write_cohort<W: Write>(mut out: W, cohort: &Cohort) -> Result<()> {
    writeln!(out, "# tau={}", fmt_f64(cohort.tau()))?;
    let mut header = String::from("time,status");
    for j in 1..=cohort.p() {
        header.push_str(&format!(",z{j}"));
    }
    writeln!(out, "{header}")?;
    for i in 0..cohort.n() {
        let mut line = format!(
            "{},{}",
            fmt_f64(cohort.times()[i]),
            u8::from(cohort.status()[i])
        );
        for z in cohort.covariates(i) {
            line.push(',');
            line.push_str(&fmt_f64(*z));
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

/// `j,beta_hat_j` with one-based `j`.
pub fn write_beta<W: Write>(mut out: W, beta: &[f64]) -> Result<()> {
    writeln!(out, "j,beta_hat_j")?;
    for (j, b) in beta.iter().enumerate() {
        writeln!(out, "{},{}", j + 1, fmt_f64(*b))?;
    }
    Ok(())
}

pub fn read_beta<R: Read>(mut input: R) -> Result<Vec<f64>> {
    let mut text = String::new();
    input.read_to_string(&mut text)?;
    let mut rdr = reader(&text);
    let headers = rdr.headers().map_err(csv_error)?.clone();
    if headers.iter().collect::<Vec<_>>() != ["j", "beta_hat_j"] {
        return Err(Error::Parse {
            line: 1,
            column: 1,
            message: "header must be j,beta_hat_j".into(),
        });
    }
    let mut beta = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(csv_error)?;
        let j = parse_field(&record, 0, "j")?;
        let line = record.position().map_or(0, |pos| pos.line());
        if j != (beta.len() + 1) as f64 {
            return Err(Error::Parse {
                line,
                column: 1,
                message: format!("expected index {}, got {j}", beta.len() + 1),
            });
        }
        beta.push(parse_field(&record, 1, "beta_hat_j")?);
    }
    Ok(beta)
}

/// `interval_start,interval_end,alpha_hat` preceded by `# key=value` metadata lines.
pub fn write_histogram<W: Write, H: Hazard>(
    mut out: W,
    hazard: &H,
    metadata: &[(String, String)],
) -> Result<()> {
    for (k, v) in metadata {
        writeln!(out, "# {k}={v}")?;
    }
    writeln!(out, "interval_start,interval_end,alpha_hat")?;
    for piece in hazard.pieces().unwrap_or_default() {
        writeln!(
            out,
            "{},{},{}",
            fmt_f64(piece.start),
            fmt_f64(piece.end),
            fmt_f64(piece.value)
        )?;
    }
    Ok(())
}

/// `t,alpha_hat` on the uniform quadrature grid of `[0, tau]`, after metadata lines.
pub fn write_curve<W: Write, H: Hazard>(
    mut out: W,
    hazard: &H,
    tau: f64,
    metadata: &[(String, String)],
) -> Result<()> {
    for (k, v) in metadata {
        writeln!(out, "# {k}={v}")?;
    }
    writeln!(out, "t,alpha_hat")?;
    let last = (QUADRATURE_POINTS - 1) as f64;
    for k in 0..QUADRATURE_POINTS {
        let t = tau * k as f64 / last;
        writeln!(out, "{},{}", fmt_f64(t), fmt_f64(hazard.value(t)))?;
    }
    Ok(())
}

/// Metadata lines of a file written by this module.
pub fn read_metadata<R: Read>(mut input: R) -> Result<Vec<(String, String)>> {
    let mut text = String::new();
    input.read_to_string(&mut text)?;
    Ok(metadata(&text))
}
