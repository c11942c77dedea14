use serde::{Deserialize, Serialize};

/// Every numerical threshold used by the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Singular values below `rank_rel * sigma_max` count as zero. Used for
    /// both the velocity Hessian and the curvature `F`.
    pub rank_rel: f64,
    /// Newton stops once `max |p_i - dL/dv^i| <= newton_abs * max(1, |p|_inf)`.
    pub newton_abs: f64,
    pub newton_max_iter: usize,
    /// Allowed spread of `h_alpha`/`H0` across two velocity probes.
    pub independence: f64,
    /// Allowed residual of `F v = D H0` on the image of `F`.
    pub consistency: f64,
    /// Step for the central-difference oracles.
    pub fd_step: f64,
    /// Euler-Lagrange residual accepted along integrated trajectories.
    pub el_residual: f64,
    /// Number of sample points used to decide the Hessian rank.
    pub sample_count: usize,
    pub seed: u64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            rank_rel: 1e-9,
            newton_abs: 1e-12,
            newton_max_iter: 50,
            independence: 1e-8,
            consistency: 1e-8,
            fd_step: 1e-6,
            el_residual: 1e-6,
            sample_count: 8,
            seed: 42,
        }
    }
}
