//! Record output as CSV or JSON lines. CSV uses commas, a header row and LF.

use crate::error::{Error, Result};
use crate::estimation::{EstimateRecord, Quantity};

pub const RECORD_HEADER: [&str; 16] = [
    "quantity",
    "value",
    "stderr",
    "trials",
    "median",
    "bound",
    "flag",
    "d",
    "p",
    "seed",
    "lambda",
    "n",
    "t",
    "b",
    "pair",
    "generation",
];

/// `<quantity>_<d>_<p>_<seed>.csv`
pub fn record_file_name(quantity: Quantity, d: usize, p: f64, seed: u64) -> String {
    format!("{}_{}_{}_{}.csv", quantity.as_str(), d, p, seed)
}

/// Shortest round-trip decimal; refuses NaN and infinities.
pub fn format_f64(v: f64) -> Result<String> {
    if v.is_finite() {
        Ok(format!("{v:?}"))
    } else {
        Err(Error::Parse(format!("non-finite value {v} in output")))
    }
}

fn opt_f64(v: Option<f64>) -> Result<String> {
    v.map(format_f64).transpose().map(Option::unwrap_or_default)
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Builds a CSV document from a header and pre-formatted rows.
pub fn csv_table<I, R>(header: &[&str], rows: I) -> Result<String>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let io = |e: csv::Error| Error::Parse(e.to_string());
    w.write_record(header).map_err(io)?;
    for row in rows {
        w.write_record(row).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Parse(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))
}

pub fn records_to_csv(records: &[EstimateRecord]) -> Result<String> {
    let rows = records
        .iter()
        .map(|r| {
            let e = &r.params;
            Ok(vec![
                r.quantity.as_str().to_string(),
                format_f64(r.value)?,
                format_f64(r.stderr)?,
                r.trials.to_string(),
                opt_f64(r.median)?,
                opt_f64(r.bound)?,
                r.flag.clone().unwrap_or_default(),
                e.d.to_string(),
                format_f64(e.p)?,
                e.seed.to_string(),
                opt_f64(e.lambda)?,
                opt(e.n),
                opt_f64(e.t)?,
                opt_f64(e.b)?,
                opt(e.pair),
                opt(e.generation),
            ])
        })
        .collect::<Result<Vec<_>>>()?;
    csv_table(&RECORD_HEADER, rows)
}

pub fn records_to_jsonl(records: &[EstimateRecord]) -> Result<String> {
    let mut out = String::new();
    for r in records {
        for v in [Some(r.value), Some(r.stderr), r.median, r.bound] {
            opt_f64(v)?;
        }
        out.push_str(&serde_json::to_string(r).map_err(|e| Error::Parse(e.to_string()))?);
        out.push('\n');
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::ParamEcho;

    fn rec(value: f64) -> EstimateRecord {
        let mut echo = ParamEcho::new(2, 1.5, 42);
        echo.n = Some(1000);
        EstimateRecord {
            quantity: Quantity::ConvergenceRatio,
            value,
            stderr: 0.25,
            trials: 10,
            params: echo,
            median: Some(1.0),
            bound: None,
            flag: Some("a,b".into()),
        }
    }

    #[test]
    fn file_names() {
        assert_eq!(record_file_name(Quantity::Cdp, 2, 2.0, 7), "cdp_2_2_7.csv");
        assert_eq!(
            record_file_name(Quantity::GWGenMean, 3, 1.5, 0),
            "gw_gen_mean_3_1.5_0.csv"
        );
    }

    #[test]
    fn csv_layout() {
        let text = records_to_csv(&[rec(1.125)]).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), RECORD_HEADER.join(","));
        assert_eq!(
            lines.next().unwrap(),
            "convergence_ratio,1.125,0.25,10,1.0,,\"a,b\",2,1.5,42,,1000,,,,"
        );
        assert!(!text.contains('\r'));
        assert!(text.ends_with('\n'));
    }

    #[test]
    fn empty_csv_is_header_only() {
        assert_eq!(records_to_csv(&[]).unwrap(), RECORD_HEADER.join(",") + "\n");
    }

    #[test]
    fn non_finite_rejected() {
        assert!(records_to_csv(&[rec(f64::NAN)]).is_err());
        assert!(records_to_jsonl(&[rec(f64::INFINITY)]).is_err());
    }

    #[test]
    fn jsonl_round_trip() {
        let r = rec(0.1 + 0.2);
        let text = records_to_jsonl(&[r.clone(), r.clone()]).unwrap();
        assert_eq!(text.lines().count(), 2);
        let back: EstimateRecord = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(back, r);
    }
}
