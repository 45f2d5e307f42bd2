//! Nelder–Mead simplex minimizer with seeded restarts.
//!
//! Restarts rebuild the simplex around the incumbent with randomly signed and
//! scaled axis steps; the run stops once a restart fails to improve the
//! statistic by more than `f_tolerance`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimplexOptions {
    /// Iteration cap for a single descent.
    pub max_iterations: usize,
    /// Spread of vertex values accepted as converged.
    pub f_tolerance: f64,
    /// Simplex diameter accepted as converged, in units of the initial steps.
    pub x_tolerance: f64,
    pub max_restarts: usize,
    pub seed: u64,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            max_iterations: 20_000,
            f_tolerance: 1e-9,
            x_tolerance: 1e-8,
            max_restarts: 4,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimplexResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub restarts: usize,
}

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;

struct Descent {
    iterations: usize,
    evaluations: usize,
    converged: bool,
}

pub fn minimize<F>(mut f: F, x0: &[f64], steps: &[f64], opts: &SimplexOptions) -> Result<SimplexResult>
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    if steps.len() != n {
        return Err(Error::shape("one step size per parameter is required"));
    }
    if steps.iter().any(|s| !(s.abs() > 0.0) || !s.is_finite()) {
        return Err(Error::domain("simplex step sizes must be finite and non-zero"));
    }
    if n == 0 {
        return Ok(SimplexResult {
            x: Vec::new(),
            f: f(x0),
            iterations: 0,
            evaluations: 1,
            restarts: 0,
        });
    }

    let mut rng = ChaCha20Rng::seed_from_u64(opts.seed);
    let mut best_x = x0.to_vec();
    let mut best_f = f(x0);
    let mut iterations = 0;
    let mut evaluations = 1;
    let mut restarts = 0;
    let mut trace = Vec::new();

    for round in 0..=opts.max_restarts {
        let scale: Vec<f64> = if round == 0 {
            steps.to_vec()
        } else {
            steps
                .iter()
                .map(|s| {
                    let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                    sign * s * rng.gen_range(0.5..1.5)
                })
                .collect()
        };
        let (x, fx, d) = descend(&mut f, &best_x, &scale, steps, opts);
        iterations += d.iterations;
        evaluations += d.evaluations;
        trace.push(format!("round {round}: f={fx:.12e} iters={}", d.iterations));
        if !d.converged {
            return Err(Error::NonConvergence {
                iterations,
                best: best_f.min(fx),
                trace: trace.join("; "),
            });
        }
        let improvement = best_f - fx;
        if fx <= best_f {
            best_x = x;
            best_f = fx;
        }
        if round > 0 {
            restarts += 1;
        }
        // A fresh simplex that cannot do better confirms the minimum.
        if round > 0 && !(improvement > opts.f_tolerance) {
            break;
        }
    }

    Ok(SimplexResult {
        x: best_x,
        f: best_f,
        iterations,
        evaluations,
        restarts,
    })
}

fn descend<F>(f: &mut F, start: &[f64], scale: &[f64], norm: &[f64], opts: &SimplexOptions) -> (Vec<f64>, f64, Descent)
where
    F: FnMut(&[f64]) -> f64,
{
    let n = start.len();
    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(start.to_vec());
    for i in 0..n {
        let mut v = start.to_vec();
        v[i] += scale[i];
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| f(v)).collect();
    let mut evaluations = n + 1;
    let mut order: Vec<usize> = (0..=n).collect();

    for iteration in 0..opts.max_iterations {
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let (best, worst, second) = (order[0], order[n], order[n - 1]);

        let spread = values[worst] - values[best];
        let diameter = simplex
            .iter()
            .map(|v| {
                v.iter()
                    .zip(&simplex[best])
                    .zip(norm)
                    .map(|((a, b), s)| ((a - b) / s).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        let flat = spread <= 4.0 * f64::EPSILON * values[best].abs().max(1e-300);
        if (spread <= opts.f_tolerance && diameter <= opts.x_tolerance) || (flat && diameter <= opts.x_tolerance.sqrt()) {
            return (
                simplex[best].clone(),
                values[best],
                Descent {
                    iterations: iteration,
                    evaluations,
                    converged: true,
                },
            );
        }

        let mut centroid = vec![0.0; n];
        for &idx in &order[..n] {
            for (c, x) in centroid.iter_mut().zip(&simplex[idx]) {
                *c += x / n as f64;
            }
        }
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[worst])
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };

        let xr = along(REFLECT);
        let fr = f(&xr);
        evaluations += 1;
        if fr < values[best] {
            let xe = along(REFLECT * EXPAND);
            let fe = f(&xe);
            evaluations += 1;
            if fe < fr {
                simplex[worst] = xe;
                values[worst] = fe;
            } else {
                simplex[worst] = xr;
                values[worst] = fr;
            }
            continue;
        }
        if fr < values[second] {
            simplex[worst] = xr;
            values[worst] = fr;
            continue;
        }
        let (xc, fc) = if fr < values[worst] {
            let xc = along(REFLECT * CONTRACT);
            let fc = f(&xc);
            (xc, fc)
        } else {
            let xc = along(-CONTRACT);
            let fc = f(&xc);
            (xc, fc)
        };
        evaluations += 1;
        if fc < values[worst].min(fr) {
            simplex[worst] = xc;
            values[worst] = fc;
            continue;
        }
        let anchor = simplex[best].clone();
        for &idx in &order[1..] {
            for (x, a) in simplex[idx].iter_mut().zip(&anchor) {
                *x = a + SHRINK * (*x - a);
            }
            values[idx] = f(&simplex[idx]);
            evaluations += 1;
        }
    }

    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    (
        simplex[order[0]].clone(),
        values[order[0]],
        Descent {
            iterations: opts.max_iterations,
            evaluations,
            converged: false,
        },
    )
}
