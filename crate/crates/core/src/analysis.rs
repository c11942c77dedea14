//! Velocity Hessian, its numerical rank, and the regular/degenerate split.

use crate::error::{Error, Result};
use crate::expr::{Expr, SliceBindings, Symbol};
use crate::linalg::{condition_number, numerical_rank, pivot_columns, singular_values, submatrix};
use crate::model::Model;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// `W_AB = d^2 L / dv^A dv^B` as exact expressions.
#[derive(Debug, Clone)]
pub struct HessianField {
    entries: Vec<Vec<Expr>>,
    params: Vec<f64>,
}

impl HessianField {
    pub fn n(&self) -> usize {
        self.entries.len()
    }

    pub fn entry(&self, a: usize, b: usize) -> &Expr {
        &self.entries[a][b]
    }

    pub fn at(&self, q: &[f64], v: &[f64]) -> Result<DMatrix<f64>> {
        let b = SliceBindings { q, v, params: &self.params, ..Default::default() };
        let n = self.n();
        let mut m = DMatrix::zeros(n, n);
        for a in 0..n {
            for c in 0..n {
                m[(a, c)] = self.entries[a][c].eval(&b)?;
            }
        }
        Ok(m)
    }
}

pub fn hessian(model: &Model) -> HessianField {
    let n = model.n();
    let l = model.lagrangian();
    let grad: Vec<Expr> = (0..n).map(|a| l.diff(Symbol::Vel(a))).collect();
    let mut entries = vec![vec![Expr::zero(); n]; n];
    for a in 0..n {
        for b in a..n {
            let w = grad[a].diff(Symbol::Vel(b));
            entries[a][b] = w.clone();
            entries[b][a] = w;
        }
    }
    HessianField { entries, params: model.params() }
}

/// A point of velocity phase space `(q, v)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SamplePoint {
    pub q: Vec<f64>,
    pub v: Vec<f64>,
}

/// `count` points uniform in `[-1, 1]` per variable, reproducible from `seed`.
pub fn sample_points(n: usize, count: usize, seed: u64) -> Vec<SamplePoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| SamplePoint {
            q: (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect(),
            v: (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect(),
        })
        .collect()
}

pub fn rank_at(w: &HessianField, point: &SamplePoint, rel_tol: f64) -> Result<usize> {
    let m = w.at(&point.q, &point.v)?;
    Ok(numerical_rank(&singular_values(&m), rel_tol))
}

/// Partition of the coordinate indices into regular and degenerate sets.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IndexSplit {
    pub n: usize,
    pub rank: usize,
    /// Regular indices followed by degenerate ones.
    pub permutation: Vec<usize>,
    pub regular: Vec<usize>,
    pub degenerate: Vec<usize>,
    /// Largest condition number of the regular minor over the samples.
    pub condition_number: f64,
}

impl IndexSplit {
    pub fn degenerate_count(&self) -> usize {
        self.n - self.rank
    }

    pub fn is_nonsingular(&self) -> bool {
        self.rank == self.n
    }

    pub fn regular_position(&self, coord: usize) -> Option<usize> {
        self.regular.iter().position(|&k| k == coord)
    }

    pub fn degenerate_position(&self, coord: usize) -> Option<usize> {
        self.degenerate.iter().position(|&k| k == coord)
    }
}

/// Decides the rank at every sample and picks the regular set by column
/// pivoting at the first sample. Both index sets are reported in ascending
/// order.
pub fn split(w: &HessianField, samples: &[SamplePoint], rel_tol: f64) -> Result<IndexSplit> {
    let first = samples
        .first()
        .ok_or_else(|| Error::InvalidArgument("rank decision needs at least one sample point".into()))?;
    let n = w.n();
    let mats = samples.iter().map(|s| w.at(&s.q, &s.v)).collect::<Result<Vec<_>>>()?;
    let ranks: Vec<usize> = mats.iter().map(|m| numerical_rank(&singular_values(m), rel_tol)).collect();
    if ranks.iter().any(|&r| r != ranks[0]) {
        return Err(Error::RankNotConstant { ranks });
    }
    let rank = ranks[0];
    let mut regular = pivot_columns(&w.at(&first.q, &first.v)?, rank);
    regular.sort_unstable();
    let degenerate: Vec<usize> = (0..n).filter(|k| !regular.contains(k)).collect();

    let mut cond: f64 = 1.0;
    for (sample, m) in mats.iter().enumerate() {
        if rank == 0 {
            break;
        }
        let scale = singular_values(m)[0];
        let minor = submatrix(m, &regular, &regular);
        let sv = singular_values(&minor);
        let smallest = sv.last().copied().unwrap_or(0.0);
        if smallest <= rel_tol * scale {
            return Err(Error::SplitUnstable { sample, smallest_singular_value: smallest });
        }
        cond = cond.max(condition_number(&minor));
    }
    let permutation = regular.iter().chain(&degenerate).copied().collect();
    Ok(IndexSplit { n, rank, permutation, regular, degenerate, condition_number: cond })
}
