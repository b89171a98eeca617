//! Whitespace-separated `x y yerr` columns for generic plotting tools.

use powerpath::estimation::{EstimateRecord, Quantity};
use powerpath::export::format_f64;
use powerpath::{Error, Result};

pub const PLOT_HEADER: &str = "# x y yerr\n";

/// Rows sorted by the record abscissa (n, t or generation); the sort is
/// stable so ties keep input order.
pub fn emit_plotdata(records: &[EstimateRecord], kind: Quantity) -> Result<String> {
    if let Some(r) = records.iter().find(|r| r.quantity != kind) {
        return Err(Error::Kind(format!(
            "expected only {kind} records, found {}",
            r.quantity
        )));
    }
    let mut rows: Vec<(f64, &EstimateRecord)> = records
        .iter()
        .map(|r| (r.abscissa().unwrap_or(0.0), r))
        .collect();
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out = String::from(PLOT_HEADER);
    for (x, r) in rows {
        out.push_str(&format!(
            "{} {} {}\n",
            format_f64(x)?,
            format_f64(r.value)?,
            format_f64(r.stderr)?
        ));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use powerpath::estimation::ParamEcho;

    fn rec(quantity: Quantity, n: Option<usize>, t: Option<f64>, value: f64) -> EstimateRecord {
        let mut echo = ParamEcho::new(2, 2.0, 0);
        echo.n = n;
        echo.t = t;
        EstimateRecord {
            quantity,
            value,
            stderr: 0.5 * value,
            trials: 4,
            params: echo,
            median: None,
            bound: None,
            flag: None,
        }
    }

    #[test]
    fn empty_is_header_only() {
        assert_eq!(emit_plotdata(&[], Quantity::Cdp).unwrap(), PLOT_HEADER);
    }

    #[test]
    fn sorted_by_n() {
        let recs: Vec<_> = [10000, 1000, 100000, 100]
            .iter()
            .map(|&n| rec(Quantity::ConvergenceRatio, Some(n), Some(0.5), n as f64))
            .collect();
        let text = emit_plotdata(&recs, Quantity::ConvergenceRatio).unwrap();
        let xs: Vec<&str> = text
            .lines()
            .skip(1)
            .map(|l| l.split(' ').next().unwrap())
            .collect();
        assert_eq!(xs, ["100.0", "1000.0", "10000.0", "100000.0"]);
    }

    #[test]
    fn tube_means_pass_through() {
        let recs: Vec<_> = [(10.0, 1.2), (20.0, 1.1), (40.0, 1.05)]
            .iter()
            .map(|&(t, m)| rec(Quantity::MeanCurvePoint, None, Some(t), m))
            .collect();
        let text = emit_plotdata(&recs, Quantity::MeanCurvePoint).unwrap();
        assert_eq!(
            text,
            "# x y yerr\n10.0 1.2 0.6\n20.0 1.1 0.55\n40.0 1.05 0.525\n"
        );
    }

    #[test]
    fn mixed_kinds_rejected() {
        let recs = vec![
            rec(Quantity::Cdp, None, Some(1.0), 1.0),
            rec(Quantity::TailFreq, Some(5), None, 0.0),
        ];
        assert!(matches!(
            emit_plotdata(&recs, Quantity::Cdp),
            Err(Error::Kind(_))
        ));
    }
}
