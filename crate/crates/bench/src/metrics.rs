//! Per-epoch metrics and their CSV form.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{BenchError, Result};

pub const METRICS_HEADER: &str =
    "epoch,train_loss,train_acc,val_acc,mean_gamma,switch_fraction,wall_time_s";

#[derive(Clone, Debug, PartialEq)]
pub struct EpochMetrics {
    /// 0-based epoch index.
    pub epoch: usize,
    /// Mean training loss over the full training split after the epoch.
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_acc: f64,
    /// Mean DFW step-size over the epoch's steps.
    pub mean_gamma: Option<f64>,
    /// Fraction of samples whose smoothed direction was rejected (DFW).
    pub switch_fraction: Option<f64>,
    /// Seconds since the start of the run.
    pub wall_time_s: f64,
}

/// `%g` with six significant digits: fixed notation for exponents in
/// `-4..6`, scientific otherwise, trailing zeros removed.
pub fn format_sig6(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    // Rounding to six digits first settles the exponent (e.g. 999999.7).
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..6).contains(&exp) {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mantissa), exp.abs())
    } else {
        let decimals = (5 - exp) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(format_sig6).unwrap_or_default()
}

pub fn write_metrics<W: Write>(metrics: &[EpochMetrics], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    w.write_record(METRICS_HEADER.split(','))?;
    for m in metrics {
        w.write_record([
            m.epoch.to_string(),
            format_sig6(m.train_loss),
            format_sig6(m.train_acc),
            format_sig6(m.val_acc),
            opt(m.mean_gamma),
            opt(m.switch_fraction),
            format_sig6(m.wall_time_s),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Writes the metrics CSV to `path`.
pub fn emit_metrics(metrics: &[EpochMetrics], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|source| BenchError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    write_metrics(metrics, std::io::BufWriter::new(file))
}

/// Parses a file produced by [`write_metrics`]; the header must match
/// exactly.
pub fn parse_metrics<R: Read>(input: R) -> Result<Vec<EpochMetrics>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_reader(input);
    let mut records = r.records();
    let bad = |line: u64, message: String| BenchError::Parse {
        path: "<metrics>".into(),
        line,
        message,
    };
    match records.next() {
        Some(h)
            if h.as_ref()
                .is_ok_and(|h| h.iter().eq(METRICS_HEADER.split(','))) => {}
        _ => return Err(bad(1, format!("header must be {METRICS_HEADER}"))),
    }
    let mut out = Vec::new();
    for rec in records {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let field = |i: usize| rec.get(i).unwrap_or("");
        let num = |i: usize| -> Result<f64> {
            field(i)
                .parse()
                .map_err(|_| bad(line, format!("column {i}: {:?} is not a number", field(i))))
        };
        let maybe = |i: usize| -> Result<Option<f64>> {
            if field(i).is_empty() {
                Ok(None)
            } else {
                num(i).map(Some)
            }
        };
        out.push(EpochMetrics {
            epoch: field(0)
                .parse()
                .map_err(|_| bad(line, format!("epoch {:?}", field(0))))?,
            train_loss: num(1)?,
            train_acc: num(2)?,
            val_acc: num(3)?,
            mean_gamma: maybe(4)?,
            switch_fraction: maybe(5)?,
            wall_time_s: num(6)?,
        });
    }
    Ok(out)
}

/// Metrics CSV with the `wall_time_s` column dropped, for determinism
/// comparisons.
pub fn without_wall_time(metrics: &[EpochMetrics]) -> Result<String> {
    let mut buf = Vec::new();
    write_metrics(metrics, &mut buf)?;
    let text = String::from_utf8(buf).expect("utf-8 csv");
    Ok(text
        .lines()
        .map(|l| l.rsplit_once(',').map_or(l, |(head, _)| head))
        .collect::<Vec<_>>()
        .join("\n"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits() {
        let cases = [
            (0.0, "0"),
            (1.0, "1"),
            (0.5, "0.5"),
            (1.0 / 3.0, "0.333333"),
            (123456.7, "123457"),
            (999999.7, "1e+06"),
            (1234567.0, "1.23457e+06"),
            (2.0612e-9, "2.0612e-09"),
            (0.0001, "0.0001"),
            (0.00001234567, "1.23457e-05"),
            (-42.125, "-42.125"),
        ];
        for (x, want) in cases {
            assert_eq!(format_sig6(x), want, "{x}");
        }
    }

    #[test]
    fn empty_columns_for_missing_values() {
        let m = EpochMetrics {
            epoch: 0,
            train_loss: 0.25,
            train_acc: 0.5,
            val_acc: 0.75,
            mean_gamma: None,
            switch_fraction: None,
            wall_time_s: 1.5,
        };
        let mut buf = Vec::new();
        write_metrics(&[m], &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            format!("{METRICS_HEADER}\n0,0.25,0.5,0.75,,,1.5\n")
        );
    }
}
