//! Classical RK4 and five-point differentiation of sampled series.

use crate::error::{Error, Result};

/// One classical Runge-Kutta step of `y' = f(t, y)`.
pub fn rk4_step<F>(mut f: F, t: f64, y: &[f64], dt: f64) -> Result<Vec<f64>>
where
    F: FnMut(f64, &[f64]) -> Result<Vec<f64>>,
{
    let axpy = |a: f64, k: &[f64]| -> Vec<f64> { y.iter().zip(k).map(|(y, k)| y + a * k).collect() };
    let k1 = f(t, y)?;
    let k2 = f(t + 0.5 * dt, &axpy(0.5 * dt, &k1))?;
    let k3 = f(t + 0.5 * dt, &axpy(0.5 * dt, &k2))?;
    let k4 = f(t + dt, &axpy(dt, &k3))?;
    Ok((0..y.len())
        .map(|i| y[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect())
}

/// Derivative weights at node `at` of the Lagrange interpolant through
/// `nodes`.
pub fn lagrange_derivative_weights(nodes: &[f64], at: usize) -> Vec<f64> {
    let x = nodes[at];
    let d: Vec<f64> = nodes.iter().map(|t| t - x).collect();
    let m = nodes.len();
    (0..m)
        .map(|j| {
            let denom: f64 = (0..m).filter(|&k| k != j).map(|k| d[j] - d[k]).product();
            let numer: f64 = (0..m)
                .filter(|&l| l != j)
                .map(|l| (0..m).filter(|&k| k != j && k != l).map(|k| -d[k]).product::<f64>())
                .sum();
            numer / denom
        })
        .collect()
}

/// Standard fourth-order stencils on a uniform grid of spacing 1, for the
/// evaluation node at offsets 0..=4 of a five-point window.
const UNIFORM: [[f64; 5]; 5] = [
    [-25.0 / 12.0, 4.0, -3.0, 4.0 / 3.0, -1.0 / 4.0],
    [-1.0 / 4.0, -5.0 / 6.0, 3.0 / 2.0, -1.0 / 2.0, 1.0 / 12.0],
    [1.0 / 12.0, -2.0 / 3.0, 0.0, 2.0 / 3.0, -1.0 / 12.0],
    [-1.0 / 12.0, 1.0 / 2.0, -3.0 / 2.0, 5.0 / 6.0, 1.0 / 4.0],
    [1.0 / 4.0, -4.0 / 3.0, 3.0, -4.0, 25.0 / 12.0],
];

/// Fourth-order derivative of every column of a sampled series. Uses the
/// centred five-point stencil in the interior and one-sided stencils at the
/// ends; non-uniform windows (such as a shortened final step) fall back to
/// Lagrange weights.
pub fn derivative(t: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    if t.len() != x.len() {
        return Err(Error::Dimension(format!("{} times but {} values", t.len(), x.len())));
    }
    let weights = DerivativeWeights::new(t)?;
    Ok((0..t.len()).map(|k| weights.apply(k, x)).collect())
}

/// Precomputed five-point derivative weights for a time grid.
#[derive(Debug, Clone)]
pub struct DerivativeWeights {
    windows: Vec<(usize, [f64; 5])>,
}

impl DerivativeWeights {
    pub fn new(t: &[f64]) -> Result<DerivativeWeights> {
        let len = t.len();
        if len < 5 {
            return Err(Error::TooFewSamples { have: len, need: 5 });
        }
        if t.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument("sample times must be strictly increasing".into()));
        }
        let windows = (0..len)
            .map(|k| {
                let start = k.saturating_sub(2).min(len - 5);
                let nodes = &t[start..start + 5];
                let at = k - start;
                let h = (nodes[4] - nodes[0]) / 4.0;
                let uniform = nodes.windows(2).all(|w| ((w[1] - w[0]) - h).abs() <= 1e-9 * h);
                let mut w = [0.0; 5];
                if uniform {
                    for (j, c) in UNIFORM[at].iter().enumerate() {
                        w[j] = c / h;
                    }
                } else {
                    w.copy_from_slice(&lagrange_derivative_weights(nodes, at));
                }
                (start, w)
            })
            .collect();
        Ok(DerivativeWeights { windows })
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    /// Derivative at sample `k` of a series aligned with the grid.
    pub fn apply(&self, k: usize, x: &[f64]) -> f64 {
        let (start, w) = &self.windows[k];
        w.iter().zip(&x[*start..start + 5]).map(|(w, x)| w * x).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rk4_exponential() {
        let mut y = vec![1.0];
        let dt = 0.1;
        for k in 0..10 {
            y = rk4_step(|_, y| Ok(vec![y[0]]), k as f64 * dt, &y, dt).unwrap();
        }
        assert!((y[0] - 1f64.exp()).abs() < 3e-6);
    }

    #[test]
    fn derivative_is_exact_on_quartics() {
        let t: Vec<f64> = (0..9).map(|k| 0.1 * k as f64).collect();
        let x: Vec<f64> = t.iter().map(|t| t.powi(4) - 2.0 * t).collect();
        let d = derivative(&t, &x).unwrap();
        for (t, d) in t.iter().zip(&d) {
            assert!((d - (4.0 * t.powi(3) - 2.0)).abs() < 1e-11, "{t}: {d}");
        }
    }

    #[test]
    fn non_uniform_tail() {
        let mut t: Vec<f64> = (0..8).map(|k| 0.1 * k as f64).collect();
        t.push(0.73);
        let x: Vec<f64> = t.iter().map(|t| t.powi(3)).collect();
        let d = derivative(&t, &x).unwrap();
        for (t, d) in t.iter().zip(&d) {
            assert!((d - 3.0 * t * t).abs() < 1e-11);
        }
    }

    #[test]
    fn lagrange_matches_uniform_stencil() {
        let nodes = [0.0, 1.0, 2.0, 3.0, 4.0];
        for at in 0..5 {
            let w = lagrange_derivative_weights(&nodes, at);
            for j in 0..5 {
                assert!((w[j] - UNIFORM[at][j]).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn too_few_samples() {
        assert!(matches!(derivative(&[0.0, 1.0], &[0.0, 1.0]), Err(Error::TooFewSamples { have: 2, need: 5 })));
    }
}
