//! Independent oracles shared by integration and acceptance tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};

use sigcamo::kernels::{GramMatrix, KernelSpec};

pub fn rbf_gram(points: &[Vec<f64>], sigma: f64) -> GramMatrix {
    let n = points.len();
    let mut values = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let d2: f64 = points[i]
                .iter()
                .zip(&points[j])
                .map(|(a, b)| (a - b).powi(2))
                .sum();
            values[i * n + j] = (-d2 / (2.0 * sigma * sigma)).exp();
        }
    }
    GramMatrix {
        n,
        values,
        spec: KernelSpec::rbf(sigma),
        instance_ids: (0..n as u64).collect(),
    }
}

pub fn dual(alpha: &[f64], y: &[f64], k: &GramMatrix) -> f64 {
    let n = alpha.len();
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += alpha[i] * alpha[j] * y[i] * y[j] * k.get(i, j);
        }
    }
    alpha.iter().sum::<f64>() - 0.5 * quad
}

/// Maximum of the dual over every assignment of each alpha to
/// {0, C, free}; free variables solve the equality-constrained stationarity
/// system. Exact for a positive definite kernel.
pub fn brute_force_dual(k: &GramMatrix, y: &[f64], c: f64) -> f64 {
    let n = y.len();
    let mut best = f64::NEG_INFINITY;
    let mut state = vec![0u8; n];
    loop {
        let free: Vec<usize> = (0..n).filter(|&i| state[i] == 2).collect();
        let mut alpha: Vec<f64> = state
            .iter()
            .map(|&s| if s == 1 { c } else { 0.0 })
            .collect();
        let bound_sum: f64 = (0..n)
            .filter(|&i| state[i] != 2)
            .map(|i| alpha[i] * y[i])
            .sum();
        let feasible = if free.is_empty() {
            bound_sum.abs() < 1e-12
        } else {
            let m = free.len();
            let mut a = DMatrix::<f64>::zeros(m + 1, m + 1);
            let mut rhs = DVector::<f64>::zeros(m + 1);
            for (r, &i) in free.iter().enumerate() {
                for (s, &j) in free.iter().enumerate() {
                    a[(r, s)] = y[i] * y[j] * k.get(i, j);
                }
                a[(r, m)] = y[i];
                a[(m, r)] = y[i];
                let fixed: f64 = (0..n)
                    .filter(|&j| state[j] == 1)
                    .map(|j| y[i] * y[j] * k.get(i, j) * c)
                    .sum();
                rhs[r] = 1.0 - fixed;
            }
            rhs[m] = -bound_sum;
            match a.lu().solve(&rhs) {
                Some(sol) => {
                    for (r, &i) in free.iter().enumerate() {
                        alpha[i] = sol[r];
                    }
                    free.iter()
                        .all(|&i| (-1e-10..=c + 1e-10).contains(&alpha[i]))
                }
                None => false,
            }
        };
        if feasible {
            best = best.max(dual(&alpha, y, k));
        }
        // Next base-3 assignment.
        let mut i = 0;
        while i < n && state[i] == 2 {
            state[i] = 0;
            i += 1;
        }
        if i == n {
            break;
        }
        state[i] += 1;
    }
    best
}

/// Isotonic regression by its closed form:
/// `f(i) = max_{j <= i} min_{k >= i} mean(y[j..=k])`.
pub fn min_max(y: &[f64]) -> Vec<f64> {
    let n = y.len();
    (0..n)
        .map(|i| {
            (0..=i)
                .map(|j| {
                    (i..n)
                        .map(|k| y[j..=k].iter().sum::<f64>() / (k - j + 1) as f64)
                        .fold(f64::INFINITY, f64::min)
                })
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect()
}
