//! Derivative-free minimisation by coordinate pattern search.

#[derive(Debug, Clone, PartialEq)]
pub struct PatternSearchResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    /// False when the search that produced `x` was cut off by the budget.
    pub converged: bool,
}

/// Polls `x +- step_d` along each coordinate, moving on strict improvement and
/// halving all steps after an unsuccessful sweep. Once every step falls below
/// `min_step` the search restarts from `restart()` while budget remains.
pub fn pattern_search(
    mut f: impl FnMut(&[f64]) -> f64,
    x0: Vec<f64>,
    steps: &[f64],
    min_step: f64,
    max_evals: usize,
    mut restart: impl FnMut() -> Vec<f64>,
) -> PatternSearchResult {
    assert_eq!(x0.len(), steps.len());
    let mut evals = 0usize;
    let mut best_x = x0.clone();
    let mut best = f64::INFINITY;
    let mut x = x0;
    let mut converged = false;
    while evals < max_evals {
        let mut fx = f(&x);
        evals += 1;
        let mut step = steps.to_vec();
        let mut local_done = false;
        'local: while evals < max_evals {
            let mut moved = false;
            for d in 0..x.len() {
                for dir in [1.0, -1.0] {
                    if evals >= max_evals {
                        break 'local;
                    }
                    let mut y = x.clone();
                    y[d] += dir * step[d];
                    let fy = f(&y);
                    evals += 1;
                    if fy < fx {
                        x = y;
                        fx = fy;
                        moved = true;
                        break;
                    }
                }
            }
            if !moved {
                step.iter_mut().for_each(|s| *s /= 2.0);
                if step.iter().all(|&s| s < min_step) {
                    local_done = true;
                    break;
                }
            }
        }
        if fx < best {
            best = fx;
            best_x = x.clone();
            converged = local_done;
        }
        if evals < max_evals {
            x = restart();
        }
    }
    PatternSearchResult {
        x: best_x,
        value: best,
        evaluations: evals,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_quadratic_minimum() {
        let r = pattern_search(
            |x| (x[0] - 1.0).powi(2) + (x[1] + 0.5).powi(2),
            vec![0.0, 0.0],
            &[0.5, 0.5],
            1e-4,
            400,
            || vec![0.0, 0.0],
        );
        assert!(r.value < 1e-6);
        assert!(r.converged);
        assert!(r.evaluations <= 400);
    }

    #[test]
    fn tiny_budget_flags_non_convergence() {
        let r = pattern_search(|x| x[0] * x[0], vec![10.0], &[1.0], 1e-9, 3, || vec![10.0]);
        assert_eq!(r.evaluations, 3);
        assert!(!r.converged);
        assert!(r.value < 100.0);
    }
}
