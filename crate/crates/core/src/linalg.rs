//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

/// Singular values in descending order.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    let mut s: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Count of singular values above `rel * sigma_max`; zero for the zero matrix.
pub fn numerical_rank(sv: &[f64], rel: f64) -> usize {
    let max = sv.first().copied().unwrap_or(0.0);
    if max <= 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel * max).count()
}

/// `sigma_max / sigma_min`, infinite when singular.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = singular_values(m);
    match (sv.first(), sv.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
        (Some(_), Some(_)) => f64::INFINITY,
        _ => 1.0,
    }
}

/// Picks `count` linearly independent columns by Gram-Schmidt with column
/// pivoting. The largest remaining column wins; near ties (relative 1e-12)
/// go to the lowest index.
pub fn pivot_columns(m: &DMatrix<f64>, count: usize) -> Vec<usize> {
    let mut cols: Vec<DVector<f64>> = (0..m.ncols()).map(|j| m.column(j).into_owned()).collect();
    let mut chosen = Vec::with_capacity(count);
    for _ in 0..count.min(m.ncols()) {
        let mut best: Option<(usize, f64)> = None;
        for (j, c) in cols.iter().enumerate() {
            if chosen.contains(&j) {
                continue;
            }
            let norm = c.norm();
            match best {
                Some((_, b)) if norm <= b * (1.0 + 1e-12) => {}
                _ => best = Some((j, norm)),
            }
        }
        let Some((j, norm)) = best else { break };
        chosen.push(j);
        if norm == 0.0 {
            continue;
        }
        let e = cols[j].clone() / norm;
        for (k, c) in cols.iter_mut().enumerate() {
            if !chosen.contains(&k) {
                let proj = e.dot(c);
                *c -= &e * proj;
            }
        }
    }
    chosen
}

pub fn submatrix(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

/// Inverse, pseudo-inverse and kernel of a square matrix at a given relative
/// rank tolerance.
#[derive(Debug, Clone)]
pub struct RankRevealed {
    /// True inverse when `rank == size`, Moore-Penrose pseudo-inverse otherwise.
    pub inverse: DMatrix<f64>,
    pub rank: usize,
    /// Orthonormal basis of the right kernel.
    pub kernel: Vec<DVector<f64>>,
}

impl RankRevealed {
    pub fn size(&self) -> usize {
        self.inverse.nrows()
    }

    pub fn full_rank(&self) -> bool {
        self.rank == self.size()
    }

    /// Orthogonal projector onto the kernel.
    pub fn kernel_projector(&self) -> DMatrix<f64> {
        let m = self.size();
        let mut p = DMatrix::zeros(m, m);
        for k in &self.kernel {
            p += k * k.transpose();
        }
        p
    }
}

pub fn rank_revealed_inverse(m: &DMatrix<f64>, rel: f64) -> RankRevealed {
    let size = m.nrows();
    if size == 0 {
        return RankRevealed { inverse: DMatrix::zeros(0, 0), rank: 0, kernel: Vec::new() };
    }
    let svd = m.clone().svd(true, true);
    let (u, vt) = (svd.u.as_ref().unwrap(), svd.v_t.as_ref().unwrap());
    let sigma = &svd.singular_values;
    let max = sigma.iter().copied().fold(0.0, f64::max);
    let keep = |s: f64| max > 0.0 && s > rel * max;
    let rank = sigma.iter().filter(|&&s| keep(s)).count();
    let mut kernel = Vec::new();
    let mut order: Vec<usize> = (0..sigma.len()).collect();
    order.sort_by(|&a, &b| sigma[b].total_cmp(&sigma[a]).then(a.cmp(&b)));
    for &k in &order {
        if !keep(sigma[k]) {
            kernel.push(vt.row(k).transpose());
        }
    }
    let inverse = if rank == size {
        m.clone().try_inverse().unwrap_or_else(|| svd.pseudo_inverse(0.0).unwrap())
    } else {
        let mut pinv = DMatrix::zeros(size, size);
        for k in 0..sigma.len() {
            if keep(sigma[k]) {
                pinv += vt.row(k).transpose() * u.column(k).transpose() / sigma[k];
            }
        }
        pinv
    };
    RankRevealed { inverse, rank, kernel }
}
