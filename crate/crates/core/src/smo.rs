//! Sequential minimal optimization over a precomputed kernel matrix.
//!
//! Solves
//!
//! ```text
//! min_a  1/2 a'Qa + p'a   s.t.  y'a = const,  0 <= a_i <= upper_i
//! ```
//!
//! with `Q_ij = y_i y_j K_ij`. The working pair is the maximal violating pair
//! (lowest index wins ties). When the pair's curvature is not positive, which
//! happens with indefinite kernels, the step goes to the end of the feasible
//! segment.

use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct SmoProblem<'a> {
    /// Row-major `n x n` kernel matrix.
    pub kernel: &'a [f64],
    pub y: &'a [f64],
    pub p: Vec<f64>,
    pub upper: Vec<f64>,
    /// Feasible starting point.
    pub alpha: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoSolution {
    pub alpha: Vec<f64>,
    pub gradient: Vec<f64>,
    /// Offset: decision values are `sum_j a_j y_j K(x, x_j) - rho`.
    pub rho: f64,
    pub iterations: usize,
    pub converged: bool,
    /// `1/2 a'Qa + p'a` at the returned point.
    pub objective: f64,
}

impl<'a> SmoProblem<'a> {
    fn n(&self) -> usize {
        self.y.len()
    }

    #[inline]
    fn q(&self, i: usize, j: usize) -> f64 {
        self.y[i] * self.y[j] * self.kernel[i * self.n() + j]
    }

    fn check(&self) -> Result<()> {
        let n = self.n();
        if self.kernel.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                found: self.kernel.len(),
            });
        }
        for v in [&self.p, &self.upper, &self.alpha] {
            if v.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: v.len(),
                });
            }
        }
        if self.kernel.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("kernel matrix".into()));
        }
        for i in 0..n {
            if !(self.upper[i] > 0.0) || self.alpha[i] < 0.0 || self.alpha[i] > self.upper[i] {
                return Err(Error::invalid(format!("infeasible start at index {i}")));
            }
        }
        Ok(())
    }

    fn in_up(&self, a: &[f64], t: usize) -> bool {
        if self.y[t] > 0.0 {
            a[t] < self.upper[t]
        } else {
            a[t] > 0.0
        }
    }

    fn in_low(&self, a: &[f64], t: usize) -> bool {
        if self.y[t] > 0.0 {
            a[t] > 0.0
        } else {
            a[t] < self.upper[t]
        }
    }

    pub fn solve(&self, tol: f64, max_iter: usize) -> Result<SmoSolution> {
        self.check()?;
        let n = self.n();
        let mut a = self.alpha.clone();
        // G = Qa + p
        let mut g = self.p.clone();
        for j in 0..n {
            if a[j] != 0.0 {
                for (i, gi) in g.iter_mut().enumerate() {
                    *gi += self.q(i, j) * a[j];
                }
            }
        }

        let mut iterations = 0;
        let mut converged = false;
        while iterations < max_iter {
            // Maximal violating pair.
            let mut i_best = None;
            let mut m_up = f64::NEG_INFINITY;
            let mut j_best = None;
            let mut m_low = f64::INFINITY;
            for t in 0..n {
                let v = -self.y[t] * g[t];
                if self.in_up(&a, t) && v > m_up {
                    m_up = v;
                    i_best = Some(t);
                }
                if self.in_low(&a, t) && v < m_low {
                    m_low = v;
                    j_best = Some(t);
                }
            }
            let (Some(i), Some(j)) = (i_best, j_best) else {
                converged = true;
                break;
            };
            if m_up - m_low < tol {
                converged = true;
                break;
            }
            iterations += 1;

            let (yi, yj) = (self.y[i], self.y[j]);
            // Step: a_i += yi t, a_j -= yj t, t >= 0.
            let cap_i = if yi > 0.0 { self.upper[i] - a[i] } else { a[i] };
            let cap_j = if yj > 0.0 { a[j] } else { self.upper[j] - a[j] };
            let t_max = cap_i.min(cap_j);
            let slope = yi * g[i] - yj * g[j];
            let curvature = self.q(i, i) + self.q(j, j) - 2.0 * yi * yj * self.q(i, j);
            let t = if curvature > 0.0 {
                (-slope / curvature).min(t_max)
            } else {
                t_max
            };
            if !(t > 0.0) {
                // No progress possible along this pair.
                converged = false;
                break;
            }
            let old_i = a[i];
            let old_j = a[j];
            a[i] += yi * t;
            a[j] -= yj * t;
            if t == cap_i {
                a[i] = if yi > 0.0 { self.upper[i] } else { 0.0 };
            }
            if t == cap_j {
                a[j] = if yj > 0.0 { 0.0 } else { self.upper[j] };
            }
            a[i] = a[i].clamp(0.0, self.upper[i]);
            a[j] = a[j].clamp(0.0, self.upper[j]);
            let di = a[i] - old_i;
            let dj = a[j] - old_j;
            for (k, gk) in g.iter_mut().enumerate() {
                *gk += self.q(k, i) * di + self.q(k, j) * dj;
            }
        }

        let rho = self.rho(&a, &g);
        let objective = a
            .iter()
            .zip(&g)
            .zip(&self.p)
            .map(|((ai, gi), pi)| 0.5 * ai * (gi + pi))
            .sum();
        Ok(SmoSolution {
            alpha: a,
            gradient: g,
            rho,
            iterations,
            converged,
            objective,
        })
    }

    fn rho(&self, a: &[f64], g: &[f64]) -> f64 {
        let mut ub = f64::INFINITY;
        let mut lb = f64::NEG_INFINITY;
        let mut free = 0usize;
        let mut sum = 0.0;
        for t in 0..self.n() {
            let yg = self.y[t] * g[t];
            if a[t] >= self.upper[t] {
                if self.y[t] < 0.0 {
                    ub = ub.min(yg);
                } else {
                    lb = lb.max(yg);
                }
            } else if a[t] <= 0.0 {
                if self.y[t] > 0.0 {
                    ub = ub.min(yg);
                } else {
                    lb = lb.max(yg);
                }
            } else {
                free += 1;
                sum += yg;
            }
        }
        if free > 0 {
            sum / free as f64
        } else if ub.is_finite() && lb.is_finite() {
            0.5 * (ub + lb)
        } else if ub.is_finite() {
            ub
        } else if lb.is_finite() {
            lb
        } else {
            0.0
        }
    }
}

/// Iteration cap used by the trainers.
pub fn default_max_iter(n: usize) -> usize {
    10_000_000usize.max(100 * n)
}
