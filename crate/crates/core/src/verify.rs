//! Comparison of exact counts `N(X)` against the predicted `C X^{s−k−ρd}`.

use serde::Serialize;

use crate::counting::{count_box, CountOptions, CountResult};
use crate::densities::DensityReport;
use crate::forms::FormSystem;
use crate::{Error, Result};

/// Ordinary least squares `y ≈ slope·x + intercept`; returns the residuals too.
pub fn least_squares(pts: &[(f64, f64)]) -> (f64, f64, Vec<f64>) {
    let n = pts.len() as f64;
    if pts.is_empty() {
        return (f64::NAN, f64::NAN, Vec::new());
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { f64::NAN };
    let intercept = my - slope * mx;
    let res = pts.iter().map(|p| p.1 - (slope * p.0 + intercept)).collect();
    (slope, intercept, res)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Consistent,
    Inconsistent,
    /// Counts grow faster than the predicted power: lower-order solutions dominate.
    Degenerate,
    /// The prediction itself is unusable (poisoned or indistinguishable from 0).
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RatioPoint {
    pub x: u64,
    pub n: u128,
    /// `N(X)/X^{s−k−ρd}`.
    pub ratio: f64,
    /// `ratio / C`.
    pub normalized: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FitReport {
    pub expected_exponent: i64,
    /// Slope of `log N` against `log X`.
    pub fitted_exponent: f64,
    /// `exp` of the intercept at the expected exponent.
    pub fitted_constant: f64,
    pub residuals: Vec<f64>,
    pub predicted_c: f64,
    pub predicted_c_error: f64,
    pub points: Vec<RatioPoint>,
    pub band: (f64, f64),
    /// `|normalized − 1|` shrinks between the last two schedule points.
    pub trend_toward_one: bool,
    pub poisoned: bool,
    pub verdict: Verdict,
}

/// Slack on the fitted exponent before counts are called degenerate.
pub const DEGENERACY_SLACK: f64 = 0.5;

impl FitReport {
    /// The verdict from the recorded fields and the band alone.
    pub fn derive_verdict(&self) -> Verdict {
        if self.fitted_exponent > self.expected_exponent as f64 + DEGENERACY_SLACK {
            return Verdict::Degenerate;
        }
        if self.poisoned || !(self.predicted_c > 3.0 * self.predicted_c_error) {
            return Verdict::Inconclusive;
        }
        let last = self.points.last().map_or(f64::NAN, |p| p.normalized);
        if last >= self.band.0 && last <= self.band.1 && self.trend_toward_one {
            Verdict::Consistent
        } else {
            Verdict::Inconsistent
        }
    }
}

/// Builds the report from already computed counts.
pub fn fit_counts(sys: &FormSystem, counts: &[CountResult], density: &DensityReport, band: (f64, f64)) -> Result<FitReport> {
    if counts.len() < 2 {
        return Err(Error::invalid("need at least two schedule points"));
    }
    let e = sys.expected_exponent();
    let c = density.predicted_c;
    let points: Vec<RatioPoint> = counts
        .iter()
        .map(|r| {
            let ratio = r.n as f64 / (r.x as f64).powi(e as i32);
            RatioPoint { x: r.x, n: r.n, ratio, normalized: ratio / c }
        })
        .collect();
    let pts: Vec<(f64, f64)> = counts.iter().filter(|r| r.n > 0 && r.x > 0).map(|r| ((r.x as f64).ln(), (r.n as f64).ln())).collect();
    let (slope, _, residuals) = least_squares(&pts);
    let fitted_constant = (pts.iter().map(|p| p.1 - e as f64 * p.0).sum::<f64>() / pts.len().max(1) as f64).exp();
    let n = points.len();
    let trend_toward_one = (points[n - 1].normalized - 1.0).abs() < (points[n - 2].normalized - 1.0).abs();
    let mut report = FitReport {
        expected_exponent: e,
        fitted_exponent: slope,
        fitted_constant,
        residuals,
        predicted_c: c,
        predicted_c_error: density.predicted_c_error,
        points,
        band,
        trend_toward_one,
        poisoned: density.poisoned,
        verdict: Verdict::Inconclusive,
    };
    report.verdict = report.derive_verdict();
    Ok(report)
}

/// Counts `N(X)` on the schedule and compares with the prediction.
pub fn verify_asymptotic(
    sys: &FormSystem,
    schedule: &[u64],
    density: &DensityReport,
    band: (f64, f64),
    opts: &CountOptions,
) -> Result<(Vec<CountResult>, FitReport)> {
    if schedule.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("schedule must be strictly increasing"));
    }
    let counts = schedule.iter().map(|&x| count_box(sys, x, opts)).collect::<Result<Vec<_>>>()?;
    let fit = fit_counts(sys, &counts, density, band)?;
    Ok((counts, fit))
}
