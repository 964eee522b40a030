//! Least-squares power-law fits in log-log coordinates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Log-range below which a series counts as constant and gets `R^2 = 1`.
pub const FLAT_LOG_RANGE: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogLogFit {
    pub slope: f64,
    /// Intercept of `ln y = intercept + slope ln t`.
    pub intercept: f64,
    pub r_squared: f64,
    /// Standard error of the slope.
    pub stderr: f64,
    pub points: usize,
}

/// Ordinary least squares of `ln y` against `ln t`.
///
/// A series whose `ln y` spans less than [`FLAT_LOG_RANGE`] has no meaningful
/// coefficient of determination; it is reported as `R^2 = 1`.
pub fn loglog_fit(ts: &[f64], ys: &[f64]) -> Result<LogLogFit> {
    if ts.len() != ys.len() {
        return Err(Error::InvalidParams(format!(
            "fit needs matching lengths, got {} and {}",
            ts.len(),
            ys.len()
        )));
    }
    if ts.len() < 2 {
        return Err(Error::EmptyWindow {
            t_min: ts.first().copied().unwrap_or(f64::NAN),
            t_max: ts.last().copied().unwrap_or(f64::NAN),
            found: ts.len(),
            required: 2,
        });
    }
    for (&t, &y) in ts.iter().zip(ys) {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::NonPositiveValues { t, value: t });
        }
        if !(y > 0.0 && y.is_finite()) {
            return Err(Error::NonPositiveValues { t, value: y });
        }
    }
    let xs: Vec<f64> = ts.iter().map(|t| t.ln()).collect();
    let ls: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ls.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ls).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx <= 0.0 {
        return Err(Error::InvalidParams("fit abscissae are all equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(&ls)
        .map(|(x, y)| {
            let r = y - (intercept + slope * x);
            r * r
        })
        .sum();
    let ss_tot: f64 = ls.iter().map(|y| (y - my) * (y - my)).sum();
    let (lo, hi) = ls
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &y| {
            (lo.min(y), hi.max(y))
        });
    let r_squared = if hi - lo < FLAT_LOG_RANGE || ss_tot == 0.0 {
        1.0
    } else {
        1.0 - ss_res / ss_tot
    };
    let stderr = if xs.len() > 2 {
        (ss_res / (m - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok(LogLogFit {
        slope,
        intercept,
        r_squared,
        stderr,
        points: xs.len(),
    })
}

/// `count` log-uniform points on `[lo, hi]`, endpoints included.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_law() {
        let ts = log_grid(1.0, 100.0, 20);
        let ys: Vec<f64> = ts.iter().map(|t| 3.0 * t.powf(-2.0)).collect();
        let fit = loglog_fit(&ts, &ys).unwrap();
        assert!((fit.slope + 2.0).abs() < 1e-12);
        assert!((fit.intercept - 3.0_f64.ln()).abs() < 1e-12);
        assert!(fit.r_squared > 1.0 - 1e-12);
        assert!(fit.stderr < 1e-10);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            loglog_fit(&[1.0, 2.0], &[1.0, 0.0]),
            Err(Error::NonPositiveValues { .. })
        ));
        assert!(matches!(
            loglog_fit(&[1.0], &[1.0]),
            Err(Error::EmptyWindow { .. })
        ));
    }

    #[test]
    fn flat_series_counts_as_perfect() {
        let ts = log_grid(10.0, 1000.0, 30);
        let ys: Vec<f64> = ts.iter().map(|t| 1.0 - (-t).exp()).collect();
        let fit = loglog_fit(&ts, &ys).unwrap();
        assert!(fit.slope.abs() < 1e-4);
        assert_eq!(fit.r_squared, 1.0);
    }

    #[test]
    fn log_grid_endpoints() {
        let g = log_grid(10.0, 1000.0, 3);
        assert!((g[0] - 10.0).abs() < 1e-12);
        assert!((g[1] - 100.0).abs() < 1e-10);
        assert!((g[2] - 1000.0).abs() < 1e-9);
    }
}
