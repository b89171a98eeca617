//! Small summary-statistics helpers shared by the estimators.

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation with the `n - 1` denominator.
pub fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return f64::NAN;
    }
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    (ss / (xs.len() - 1) as f64).sqrt()
}

pub fn stderr(xs: &[f64]) -> f64 {
    sample_std(xs) / (xs.len() as f64).sqrt()
}

pub fn median(xs: &[f64]) -> f64 {
    percentile(xs, 0.5)
}

/// Linear-interpolated quantile, `q` in `[0, 1]`.
pub fn percentile(xs: &[f64], q: f64) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    v[lo] + (v[hi] - v[lo]) * frac
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub intercept: f64,
    pub slope: f64,
    pub slope_stderr: f64,
    pub intercept_stderr: f64,
}

/// Ordinary least squares `y = a + b x` with classical standard errors.
pub fn ols(xs: &[f64], ys: &[f64]) -> Option<LinearFit> {
    let n = xs.len();
    if n != ys.len() || n < 2 {
        return None;
    }
    let mx = mean(xs);
    let my = mean(ys);
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let (slope_stderr, intercept_stderr) = if n > 2 {
        let rss: f64 = xs
            .iter()
            .zip(ys)
            .map(|(x, y)| {
                let r = y - intercept - slope * x;
                r * r
            })
            .sum();
        let s2 = rss / (n - 2) as f64;
        let sumx2: f64 = xs.iter().map(|x| x * x).sum();
        ((s2 / sxx).sqrt(), (s2 * sumx2 / (n as f64 * sxx)).sqrt())
    } else {
        (f64::NAN, f64::NAN)
    };
    Some(LinearFit {
        intercept,
        slope,
        slope_stderr,
        intercept_stderr,
    })
}

/// Weighted least squares with known per-point standard deviations; the
/// standard errors come from the weights alone.
pub fn wls(xs: &[f64], ys: &[f64], sigmas: &[f64]) -> Option<LinearFit> {
    let n = xs.len();
    if n != ys.len() || n != sigmas.len() || n < 2 || sigmas.iter().any(|s| !(*s > 0.0)) {
        return None;
    }
    let w: Vec<f64> = sigmas.iter().map(|s| 1.0 / (s * s)).collect();
    let sw: f64 = w.iter().sum();
    let mx = w.iter().zip(xs).map(|(w, x)| w * x).sum::<f64>() / sw;
    let my = w.iter().zip(ys).map(|(w, y)| w * y).sum::<f64>() / sw;
    let sxx: f64 = w.iter().zip(xs).map(|(w, x)| w * (x - mx) * (x - mx)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = (0..n).map(|i| w[i] * (xs[i] - mx) * (ys[i] - my)).sum();
    let slope = sxy / sxx;
    Some(LinearFit {
        intercept: my - slope * mx,
        slope,
        slope_stderr: (1.0 / sxx).sqrt(),
        intercept_stderr: (1.0 / sw + mx * mx / sxx).sqrt(),
    })
}

/// Weights `c_i` with `intercept = sum c_i y_i` for the OLS fit on `xs`.
pub fn ols_intercept_weights(xs: &[f64]) -> Option<Vec<f64>> {
    let n = xs.len();
    if n < 2 {
        return None;
    }
    let mx = mean(xs);
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx <= 0.0 {
        return None;
    }
    Some(
        xs.iter()
            .map(|x| 1.0 / n as f64 - mx * (x - mx) / sxx)
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wls_equal_weights_matches_ols_point_estimate() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys = [1.0, 2.9, 5.2, 7.0];
        let a = ols(&xs, &ys).unwrap();
        let b = wls(&xs, &ys, &[0.5; 4]).unwrap();
        assert!((a.slope - b.slope).abs() < 1e-12);
        assert!((a.intercept - b.intercept).abs() < 1e-12);
        // var(slope) = sigma^2 / sxx
        assert!((b.slope_stderr - 0.5 / 5f64.sqrt()).abs() < 1e-12);
        assert!(wls(&xs, &ys, &[0.5, 0.0, 1.0, 1.0]).is_none());
    }

    #[test]
    fn summary_values() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(mean(&xs), 2.5);
        assert!((sample_std(&xs) - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(median(&xs), 2.5);
        assert_eq!(percentile(&xs, 1.0), 4.0);
        assert_eq!(percentile(&xs, 0.0), 1.0);
    }

    #[test]
    fn exact_line() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys = [1.0, 3.0, 5.0, 7.0];
        let fit = ols(&xs, &ys).unwrap();
        assert!((fit.slope - 2.0).abs() < 1e-14);
        assert!((fit.intercept - 1.0).abs() < 1e-14);
        assert!(fit.slope_stderr.abs() < 1e-12);
        let w = ols_intercept_weights(&xs).unwrap();
        let a: f64 = w.iter().zip(&ys).map(|(c, y)| c * y).sum();
        assert!((a - 1.0).abs() < 1e-14);
    }
}
