//! Limited-memory BFGS with a backtracking Armijo line search and an
//! optional feasibility predicate (infeasible trial points are rejected).

use std::collections::VecDeque;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LbfgsOptions {
    pub memory: usize,
    pub max_iterations: usize,
    /// Stop when the gradient's max-norm falls below this.
    pub gradient_tolerance: f64,
    pub armijo: f64,
    pub max_trials: usize,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self {
            memory: 10,
            max_iterations: 200,
            gradient_tolerance: 1e-10,
            armijo: 1e-4,
            max_trials: 40,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LbfgsStatus {
    Converged,
    MaxIterations,
    /// No acceptable step along the current direction.
    LineSearchStalled,
}

#[derive(Debug, Clone)]
pub struct LbfgsOutcome {
    pub x: DVector<f64>,
    pub value: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub status: LbfgsStatus,
}

/// Minimize `f` from `x0`. Every accepted iterate satisfies `feasible`
/// and has a value no larger than its predecessor.
pub fn lbfgs_minimize<F, P>(
    x0: &DVector<f64>,
    mut value_and_gradient: F,
    feasible: P,
    options: &LbfgsOptions,
) -> Result<LbfgsOutcome>
where
    F: FnMut(&DVector<f64>) -> Result<(f64, DVector<f64>)>,
    P: Fn(&DVector<f64>) -> bool,
{
    let mut x = x0.clone();
    let (mut f, mut g) = value_and_gradient(&x)?;
    let mut pairs: VecDeque<(DVector<f64>, DVector<f64>, f64)> = VecDeque::new();
    let mut status = LbfgsStatus::MaxIterations;
    let mut iterations = 0;

    while iterations < options.max_iterations {
        if g.amax() <= options.gradient_tolerance {
            status = LbfgsStatus::Converged;
            break;
        }
        let mut d = -two_loop(&g, &pairs);
        let mut slope = g.dot(&d);
        if !(slope < 0.0) {
            pairs.clear();
            d = -&g;
            slope = g.dot(&d);
        }
        // Before any curvature information, keep the first step modest.
        let mut t = if pairs.is_empty() { (1.0 / g.norm()).min(1.0) } else { 1.0 };

        let mut accepted = None;
        for _ in 0..options.max_trials {
            let trial = &x + &d * t;
            if !feasible(&trial) {
                t *= 0.5;
                continue;
            }
            let (ft, gt) = value_and_gradient(&trial)?;
            if ft.is_finite() && ft <= f + options.armijo * t * slope {
                accepted = Some((trial, ft, gt));
                break;
            }
            // Safeguarded minimizer of the quadratic through f, slope and ft.
            let q = if ft.is_finite() {
                -slope * t * t / (2.0 * (ft - f - slope * t))
            } else {
                0.1 * t
            };
            t = q.clamp(0.1 * t, 0.5 * t);
        }
        let Some((x_new, f_new, g_new)) = accepted else {
            status = LbfgsStatus::LineSearchStalled;
            break;
        };

        let s = &x_new - &x;
        let y = &g_new - &g;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            if pairs.len() == options.memory {
                pairs.pop_front();
            }
            pairs.push_back((s, y, 1.0 / sy));
        }
        x = x_new;
        f = f_new;
        g = g_new;
        iterations += 1;
    }
    if status == LbfgsStatus::MaxIterations && g.amax() <= options.gradient_tolerance {
        status = LbfgsStatus::Converged;
    }
    Ok(LbfgsOutcome {
        gradient_norm: g.norm(),
        x,
        value: f,
        iterations,
        status,
    })
}

/// Inverse-Hessian approximation applied to `g`.
fn two_loop(g: &DVector<f64>, pairs: &VecDeque<(DVector<f64>, DVector<f64>, f64)>) -> DVector<f64> {
    let mut q = g.clone();
    let mut alphas = Vec::with_capacity(pairs.len());
    for (s, y, rho) in pairs.iter().rev() {
        let a = rho * s.dot(&q);
        q -= y * a;
        alphas.push(a);
    }
    if let Some((s, y, _)) = pairs.back() {
        q *= s.dot(y) / y.dot(y);
    }
    for ((s, y, rho), a) in pairs.iter().zip(alphas.iter().rev()) {
        let b = rho * y.dot(&q);
        q += s * (a - b);
    }
    q
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn quadratic_converges_to_analytic_minimizer() {
        let n = 12;
        let a = DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                2.0 + i as f64
            } else if i.abs_diff(j) == 1 {
                -0.7
            } else {
                0.0
            }
        });
        let b = DVector::from_fn(n, |i, _| (i as f64).sin());
        let exact = a.clone().lu().solve(&b).unwrap();
        let out = lbfgs_minimize(
            &DVector::zeros(n),
            |x| Ok((0.5 * x.dot(&(&a * x)) - b.dot(x), &a * x - &b)),
            |_| true,
            &LbfgsOptions::default(),
        )
        .unwrap();
        assert_eq!(out.status, LbfgsStatus::Converged);
        assert!((out.x - exact).amax() < 1e-8);
    }

    #[test]
    fn stationary_start_does_nothing() {
        let x0 = DVector::from_vec(vec![1.0, -2.0]);
        let target = x0.clone();
        let out = lbfgs_minimize(
            &x0,
            |x| Ok(((x - &target).norm_squared(), (x - &target) * 2.0)),
            |_| true,
            &LbfgsOptions::default(),
        )
        .unwrap();
        assert_eq!(out.iterations, 0);
        assert_eq!(out.x, x0);
    }

    #[test]
    fn feasibility_is_respected() {
        // Minimizer at x = −1 lies outside x > 0.1; iterates must stay inside.
        let out = lbfgs_minimize(
            &DVector::from_vec(vec![2.0]),
            |x| Ok(((x[0] + 1.0).powi(2), DVector::from_vec(vec![2.0 * (x[0] + 1.0)]))),
            |x| x[0] > 0.1,
            &LbfgsOptions {
                max_iterations: 50,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(out.x[0] > 0.1);
        assert!(out.x[0] < 0.2);
    }

    #[test]
    fn rosenbrock() {
        let out = lbfgs_minimize(
            &DVector::from_vec(vec![-1.2, 1.0]),
            |x| {
                let (a, b) = (x[0], x[1]);
                let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
                let g = DVector::from_vec(vec![
                    -2.0 * (1.0 - a) - 400.0 * a * (b - a * a),
                    200.0 * (b - a * a),
                ]);
                Ok((f, g))
            },
            |_| true,
            &LbfgsOptions::default(),
        )
        .unwrap();
        assert!((out.x[0] - 1.0).abs() < 1e-6 && (out.x[1] - 1.0).abs() < 1e-6);
    }
}
