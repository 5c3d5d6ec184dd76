//! Nelder-Mead simplex minimizer.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coefficients {
    pub reflection: f64,
    pub expansion: f64,
    pub contraction: f64,
    pub shrink: f64,
}

impl Default for Coefficients {
    fn default() -> Self {
        Self {
            reflection: 1.0,
            expansion: 2.0,
            contraction: 0.5,
            shrink: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NelderMead {
    pub coefficients: Coefficients,
    /// Offset of each initial simplex vertex from the start point.
    pub initial_step: f64,
    pub max_iterations: usize,
    /// Stop once max - min over the simplex values drops below this.
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub point: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

impl NelderMead {
    /// Minimizes `f` from `start`. `on_iteration(k, best)` runs after each
    /// completed iteration with the best value in the simplex. An error from
    /// `f` aborts the search.
    pub fn minimize<E>(
        &self,
        start: &[f64],
        mut f: impl FnMut(&[f64]) -> Result<f64, E>,
        mut on_iteration: impl FnMut(usize, f64),
    ) -> Result<Minimum, E> {
        let n = start.len();
        let Coefficients {
            reflection,
            expansion,
            contraction,
            shrink,
        } = self.coefficients;
        let mut evaluations = 0;
        let mut eval = |x: &[f64]| {
            evaluations += 1;
            f(x)
        };

        let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
        simplex.push(start.to_vec());
        for i in 0..n {
            let mut v = start.to_vec();
            v[i] += self.initial_step;
            simplex.push(v);
        }
        let mut values = Vec::with_capacity(n + 1);
        for v in &simplex {
            values.push(eval(v)?);
        }

        let mut iterations = 0;
        let mut converged = false;
        let combine = |a: &[f64], b: &[f64], t: f64| -> Vec<f64> {
            a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect()
        };

        while iterations < self.max_iterations {
            let mut order: Vec<usize> = (0..=n).collect();
            order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
            let (best, worst) = (order[0], order[n]);
            if values[worst] - values[best] < self.tolerance {
                converged = true;
                break;
            }
            let second_worst = order[n.saturating_sub(1)];

            let mut centroid = vec![0.0; n];
            for &i in &order[..n] {
                for (c, x) in centroid.iter_mut().zip(&simplex[i]) {
                    *c += x / n as f64;
                }
            }

            // centroid + t (worst - centroid) for t = -reflection etc.
            let reflected = combine(&centroid, &simplex[worst], -reflection);
            let f_reflected = eval(&reflected)?;
            if f_reflected < values[best] {
                let expanded = combine(&centroid, &simplex[worst], -reflection * expansion);
                let f_expanded = eval(&expanded)?;
                if f_expanded < f_reflected {
                    simplex[worst] = expanded;
                    values[worst] = f_expanded;
                } else {
                    simplex[worst] = reflected;
                    values[worst] = f_reflected;
                }
            } else if f_reflected < values[second_worst] {
                simplex[worst] = reflected;
                values[worst] = f_reflected;
            } else {
                let (candidate, f_candidate) = if f_reflected < values[worst] {
                    let outside = combine(&centroid, &reflected, contraction);
                    let f = eval(&outside)?;
                    (outside, f)
                } else {
                    let inside = combine(&centroid, &simplex[worst], contraction);
                    let f = eval(&inside)?;
                    (inside, f)
                };
                let threshold = values[worst].min(f_reflected);
                if f_candidate < threshold {
                    simplex[worst] = candidate;
                    values[worst] = f_candidate;
                } else {
                    let anchor = simplex[best].clone();
                    for &i in &order[1..] {
                        simplex[i] = combine(&anchor, &simplex[i], shrink);
                        values[i] = eval(&simplex[i])?;
                    }
                }
            }
            iterations += 1;
            let best_value = values.iter().copied().fold(f64::INFINITY, f64::min);
            on_iteration(iterations, best_value);
        }

        let best = (0..=n)
            .min_by(|&a, &b| values[a].total_cmp(&values[b]))
            .expect("simplex has at least one vertex");
        Ok(Minimum {
            point: simplex[best].clone(),
            value: values[best],
            iterations,
            evaluations,
            converged,
        })
    }
}
