//! Bayesian upper limits with a flat prior on the signal (signal >= 0) and
//! nuisances profiled out. The posterior is `exp(−χ²/2)` or `exp(−NLL)`
//! evaluated on a scan grid that is refined by bisection until the bound
//! stabilises.

use serde::{Deserialize, Serialize};

use super::fit::{fit_minimize, FitProblem};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanOptions {
    /// Intervals in the first scan grid.
    pub initial_intervals: usize,
    /// Relative bound change between refinements accepted as converged.
    pub rel_tolerance: f64,
    pub max_refinements: usize,
    /// Log-posterior drop (relative to the maximum) that ends the scan range.
    pub tail_cutoff: f64,
    /// Hard cap on the scanned signal; exceeding it is a range error.
    pub max_signal: f64,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self {
            initial_intervals: 64,
            rel_tolerance: 1e-4,
            max_refinements: 10,
            tail_cutoff: 30.0,
            max_signal: 1e300,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub value: f64,
    /// Profiled statistic (χ² or NLL) at `value`.
    pub statistic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitResult {
    pub parameter: String,
    pub unit: String,
    pub confidence_level: f64,
    pub upper_bound: f64,
    pub best_fit: f64,
    pub scan: Vec<ScanPoint>,
    pub method: String,
}

impl LimitResult {
    /// Same result expressed in another parameter related by `new = factor · old`.
    pub fn rescaled(&self, factor: f64, parameter: impl Into<String>, unit: impl Into<String>) -> Self {
        Self {
            parameter: parameter.into(),
            unit: unit.into(),
            confidence_level: self.confidence_level,
            upper_bound: self.upper_bound * factor,
            best_fit: self.best_fit * factor,
            scan: self
                .scan
                .iter()
                .map(|p| ScanPoint {
                    value: p.value * factor,
                    statistic: p.statistic,
                })
                .collect(),
            method: self.method.clone(),
        }
    }
}

fn check_cl(cl: f64) -> Result<()> {
    if !(cl > 0.0 && cl < 1.0) {
        return Err(Error::domain(format!("confidence level must lie in (0, 1), got {cl}")));
    }
    Ok(())
}

/// Upper bound of the `cl` credible interval `[0, bound]` from a posterior
/// sampled at increasing `xs`, linear between nodes.
pub fn credible_upper_bound(xs: &[f64], weights: &[f64], cl: f64) -> Result<f64> {
    check_cl(cl)?;
    if xs.len() != weights.len() || xs.len() < 2 {
        return Err(Error::shape("posterior needs at least two matched nodes"));
    }
    let mut cdf = Vec::with_capacity(xs.len());
    cdf.push(0.0);
    for i in 1..xs.len() {
        let area = 0.5 * (weights[i] + weights[i - 1]) * (xs[i] - xs[i - 1]);
        cdf.push(cdf[i - 1] + area);
    }
    let total = cdf[cdf.len() - 1];
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::Range("posterior has no finite mass on the scan range".into()));
    }
    let target = cl * total;
    let i = cdf.partition_point(|&c| c < target).clamp(1, xs.len() - 1);
    let (x0, w0, w1, h) = (xs[i - 1], weights[i - 1], weights[i], xs[i] - xs[i - 1]);
    let need = target - cdf[i - 1];
    // Solve w0·t + (w1 − w0)·t²/(2h) = need for t in [0, h].
    let slope = (w1 - w0) / h;
    let t = if slope.abs() < 1e-300 {
        need / w0
    } else {
        let disc = (w0 * w0 + 2.0 * slope * need).max(0.0);
        2.0 * need / (w0 + disc.sqrt())
    };
    Ok(x0 + t.clamp(0.0, h))
}

struct Profiler<'a> {
    problem: &'a FitProblem,
    nodes: Vec<(f64, f64, Vec<f64>)>,
}

impl<'a> Profiler<'a> {
    fn eval(&mut self, s: f64, warm: &[f64]) -> Result<f64> {
        let (stat, nuis) = self.problem.profile(s, warm)?;
        self.nodes.push((s, stat, nuis));
        Ok(stat)
    }

    /// Nuisances of the evaluated node nearest to `s`.
    fn warm(&self, s: f64) -> Vec<f64> {
        self.nodes
            .iter()
            .min_by(|a, b| (a.0 - s).abs().total_cmp(&(b.0 - s).abs()))
            .map(|n| n.2.clone())
            .unwrap_or_default()
    }
}

pub fn bayesian_upper_limit(problem: &FitProblem, cl: f64) -> Result<LimitResult> {
    check_cl(cl)?;
    let opts = problem.options.scan;
    let best = fit_minimize(problem)?;
    let s_hat = best.signal();
    let mut prof = Profiler {
        problem,
        nodes: vec![(s_hat, best.statistic, best.nuisances().to_vec())],
    };
    let log_post = |stat: f64, reference: f64| problem.statistic.delta_log_likelihood(stat - reference);

    // Bracket the posterior tail.
    let sigma = best
        .uncertainties
        .as_ref()
        .map(|u| u[0])
        .filter(|u| u.is_finite() && *u > 0.0)
        .unwrap_or(problem.signal.step.abs());
    let mut reach = sigma;
    let s_max = loop {
        let s = s_hat + reach;
        if s > opts.max_signal {
            return Err(Error::Range(format!(
                "posterior not normalisable below the scan cap {} (widen the scan)",
                opts.max_signal
            )));
        }
        let warm = prof.warm(s);
        let stat = prof.eval(s, &warm)?;
        if log_post(stat, best.statistic) < -opts.tail_cutoff {
            break s;
        }
        reach *= 2.0;
    };

    let n0 = opts.initial_intervals.max(2);
    let mut xs: Vec<f64> = (0..=n0).map(|i| s_max * i as f64 / n0 as f64).collect();
    let mut stats = Vec::with_capacity(xs.len());
    for &x in &xs {
        let warm = prof.warm(x);
        stats.push(prof.eval(x, &warm)?);
    }

    let bound_of = |xs: &[f64], stats: &[f64]| -> Result<f64> {
        let reference = stats.iter().copied().fold(best.statistic, f64::min);
        let w: Vec<f64> = stats.iter().map(|&s| log_post(s, reference).exp()).collect();
        credible_upper_bound(xs, &w, cl)
    };

    let mut bound = bound_of(&xs, &stats)?;
    let mut converged = false;
    for _ in 0..opts.max_refinements {
        let mut nx = Vec::with_capacity(2 * xs.len());
        let mut ns = Vec::with_capacity(2 * xs.len());
        for i in 0..xs.len() {
            if i > 0 {
                let mid = 0.5 * (xs[i - 1] + xs[i]);
                let warm = prof.warm(mid);
                let st = prof.eval(mid, &warm)?;
                nx.push(mid);
                ns.push(st);
            }
            nx.push(xs[i]);
            ns.push(stats[i]);
        }
        xs = nx;
        stats = ns;
        let refined = bound_of(&xs, &stats)?;
        let change = (refined - bound).abs();
        bound = refined;
        if change <= opts.rel_tolerance * bound.abs() {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Range(format!(
            "posterior scan did not stabilise after {} refinements",
            opts.max_refinements
        )));
    }

    Ok(LimitResult {
        parameter: problem.signal.name.clone(),
        unit: String::from("model units"),
        confidence_level: cl,
        upper_bound: bound,
        best_fit: s_hat,
        scan: xs
            .iter()
            .zip(&stats)
            .map(|(&value, &statistic)| ScanPoint { value, statistic })
            .collect(),
        method: format!("bayesian/flat-prior/profiled/{}", problem.statistic.name()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn credible_bound_uniform() {
        let xs = [0.0, 1.0, 2.0];
        let w = [1.0, 1.0, 1.0];
        assert!((credible_upper_bound(&xs, &w, 0.5).unwrap() - 1.0).abs() < 1e-12);
        assert!((credible_upper_bound(&xs, &w, 0.9).unwrap() - 1.8).abs() < 1e-12);
    }

    #[test]
    fn credible_bound_linear_ramp_is_exact() {
        // density ∝ x on [0, 1] → CDF x², quantile sqrt(cl)
        let xs = [0.0, 0.5, 1.0];
        let w = [0.0, 0.5, 1.0];
        let b = credible_upper_bound(&xs, &w, 0.64).unwrap();
        assert!((b - 0.8).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_cl() {
        assert!(credible_upper_bound(&[0.0, 1.0], &[1.0, 1.0], 1.0).is_err());
        assert!(credible_upper_bound(&[0.0, 1.0], &[1.0, 1.0], 0.0).is_err());
        assert!(credible_upper_bound(&[0.0, 1.0], &[0.0, 0.0], 0.5).is_err());
    }
}
