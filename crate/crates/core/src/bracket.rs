//! Poisson bracket on the regular pairs, the derivations `D_alpha`, the
//! curvature `F` and the F-bracket.
//!
//! With `{X, Y} = dX/dq^i dY/dp_i - dX/dp_i dY/dq^i` (regular `i` only),
//!
//! * `D_alpha X = dX/dq^alpha + {X, h_alpha}`
//! * `F_ab = dh_a/dq^b - dh_b/dq^a + {h_a, h_b}`
//! * `{X, Y}_F = {X, Y} + {X, h_a} M^ab D_b Y`
//!
//! where `M` is `F^-1` or its transpose depending on the [`Convention`].

use crate::error::{Error, Result};
use crate::expr::{parse, Expr, Scope, SliceBindings, Symbol};
use crate::linalg::{rank_revealed_inverse, RankRevealed};
use crate::transform::{ClairautSystem, Frame, Gradient};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Index placement of the inverse curvature in the velocity formula and the
/// F-bracket.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Convention {
    /// `v^b = D_a H0 Fbar^ab`, contraction with `Fbar^T`.
    A,
    /// `v^b = Fbar^ba D_a H0`, contraction with `Fbar`.
    B,
}

impl Convention {
    pub fn contraction(self, f_inverse: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            Convention::A => f_inverse.transpose(),
            Convention::B => f_inverse.clone(),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Convention::A => "A",
            Convention::B => "B",
        }
    }

    pub fn from_label(s: &str) -> Option<Convention> {
        match s {
            "A" | "a" => Some(Convention::A),
            "B" | "b" => Some(Convention::B),
            _ => None,
        }
    }
}

/// A function on the restricted phase space.
pub trait Observable {
    fn value(&self, frame: &Frame) -> Result<f64>;
    fn gradient(&self, frame: &Frame) -> Result<Gradient>;
}

/// The physical Hamiltonian `H0`.
#[derive(Debug, Clone, Copy)]
pub struct Hamiltonian;

impl Observable for Hamiltonian {
    fn value(&self, frame: &Frame) -> Result<f64> {
        Ok(frame.h0)
    }

    fn gradient(&self, frame: &Frame) -> Result<Gradient> {
        Ok(frame.grad_h0.clone())
    }
}

/// `h_alpha`, addressed by position in the degenerate index list.
#[derive(Debug, Clone, Copy)]
pub struct DegenerateHamiltonian(pub usize);

impl Observable for DegenerateHamiltonian {
    fn value(&self, frame: &Frame) -> Result<f64> {
        frame.h.get(self.0).copied().ok_or_else(|| out_of_range(self.0, frame))
    }

    fn gradient(&self, frame: &Frame) -> Result<Gradient> {
        frame.grad_h.get(self.0).cloned().ok_or_else(|| out_of_range(self.0, frame))
    }
}

fn out_of_range(k: usize, frame: &Frame) -> Error {
    Error::Dimension(format!("h index {k} out of range ({} degenerate directions)", frame.h.len()))
}

/// An expression in `q`, regular `p` and parameters, with exact gradient.
#[derive(Debug, Clone)]
pub struct ExprObservable {
    expr: Expr,
    dq: Vec<Expr>,
    dp: Vec<Expr>,
    params: Vec<f64>,
}

impl ExprObservable {
    pub fn new(sys: &ClairautSystem, expr: Expr) -> Result<ExprObservable> {
        let split = sys.split();
        for s in expr.symbols() {
            match s {
                Symbol::Mom(k) if split.regular_position(k).is_none() => {
                    return Err(Error::InvalidArgument(format!(
                        "observable uses {}, the momentum of a degenerate coordinate",
                        sys.model().table().momentum_name(k)
                    )))
                }
                Symbol::Vel(_) | Symbol::Time => {
                    return Err(Error::InvalidArgument("observables depend on q and p only".into()))
                }
                _ => {}
            }
        }
        let dq = (0..sys.n()).map(|a| expr.diff(Symbol::Coord(a))).collect();
        let dp = split.regular.iter().map(|&k| expr.diff(Symbol::Mom(k))).collect();
        Ok(ExprObservable { expr, dq, dp, params: sys.model().params() })
    }

    pub fn parse(sys: &ClairautSystem, text: &str) -> Result<ExprObservable> {
        let e = parse(text, sys.model().table(), Scope::OBSERVABLE)
            .map_err(|source| Error::Parse { context: "observable".into(), source })?;
        ExprObservable::new(sys, e)
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }

    fn eval_all(&self, frame: &Frame, es: &[Expr]) -> Result<Vec<f64>> {
        let p = frame.momenta_by_coordinate();
        let b = SliceBindings { q: &frame.q, p: &p, params: &self.params, ..Default::default() };
        es.iter().map(|e| Ok(e.eval(&b)?)).collect()
    }
}

impl Observable for ExprObservable {
    fn value(&self, frame: &Frame) -> Result<f64> {
        Ok(self.eval_all(frame, std::slice::from_ref(&self.expr))?[0])
    }

    fn gradient(&self, frame: &Frame) -> Result<Gradient> {
        Ok(Gradient { dq: self.eval_all(frame, &self.dq)?, dp: self.eval_all(frame, &self.dp)? })
    }
}

/// A closure `(q, p) -> value` with a central-difference gradient.
pub struct FnObservable<F> {
    f: F,
    step: f64,
}

impl<F: Fn(&[f64], &[f64]) -> Result<f64>> FnObservable<F> {
    pub fn new(f: F, step: f64) -> FnObservable<F> {
        FnObservable { f, step }
    }

    pub fn eval(&self, q: &[f64], p: &[f64]) -> Result<f64> {
        (self.f)(q, p)
    }
}

impl<F: Fn(&[f64], &[f64]) -> Result<f64>> Observable for FnObservable<F> {
    fn value(&self, frame: &Frame) -> Result<f64> {
        (self.f)(&frame.q, &frame.p)
    }

    fn gradient(&self, frame: &Frame) -> Result<Gradient> {
        let h = self.step;
        let (mut q, mut p) = (frame.q.clone(), frame.p.clone());
        let mut g = Gradient::zeros(q.len(), p.len());
        for a in 0..q.len() {
            let x = q[a];
            q[a] = x + h;
            let plus = (self.f)(&q, &p)?;
            q[a] = x - h;
            let minus = (self.f)(&q, &p)?;
            q[a] = x;
            g.dq[a] = (plus - minus) / (2.0 * h);
        }
        for i in 0..p.len() {
            let x = p[i];
            p[i] = x + h;
            let plus = (self.f)(&q, &p)?;
            p[i] = x - h;
            let minus = (self.f)(&q, &p)?;
            p[i] = x;
            g.dp[i] = (plus - minus) / (2.0 * h);
        }
        Ok(g)
    }
}

/// Inverse of an antisymmetric curvature matrix, failing when singular.
pub fn invert_f(f: &DMatrix<f64>, rank_rel: f64) -> Result<DMatrix<f64>> {
    let r = rank_revealed_inverse(f, rank_rel);
    if !r.full_rank() {
        return Err(Error::FNotInvertible { rank: r.rank, size: r.size() });
    }
    Ok(r.inverse)
}

impl Frame<'_> {
    /// Canonical bracket over the regular pairs.
    pub fn poisson(&self, x: &Gradient, y: &Gradient) -> f64 {
        self.split()
            .regular
            .iter()
            .enumerate()
            .map(|(i, &k)| x.dq[k] * y.dp[i] - x.dp[i] * y.dq[k])
            .sum()
    }

    /// `D_alpha X` for the degenerate direction at position `a`.
    pub fn d_alpha(&self, x: &Gradient, a: usize) -> f64 {
        x.dq[self.split().degenerate[a]] + self.poisson(x, &self.grad_h[a])
    }

    /// All `D_alpha X`.
    pub fn d_all(&self, x: &Gradient) -> DVector<f64> {
        DVector::from_iterator(self.h.len(), (0..self.h.len()).map(|a| self.d_alpha(x, a)))
    }

    pub fn d_h0(&self) -> DVector<f64> {
        self.d_all(&self.grad_h0)
    }

    fn curvature_parts(&self) -> &(DMatrix<f64>, RankRevealed) {
        self.f_cache.get_or_init(|| {
            let deg = &self.split().degenerate;
            let m = deg.len();
            let mut f = DMatrix::zeros(m, m);
            for a in 0..m {
                for b in a + 1..m {
                    let (ga, gb) = (&self.grad_h[a], &self.grad_h[b]);
                    let x = ga.dq[deg[b]] - gb.dq[deg[a]] + self.poisson(ga, gb);
                    f[(a, b)] = x;
                    f[(b, a)] = -x;
                }
            }
            if self.sys.curvature_flipped() {
                f = -f;
            }
            let inv = rank_revealed_inverse(&f, self.sys.tolerances().rank_rel);
            (f, inv)
        })
    }

    /// The curvature `F`, exactly antisymmetric by construction.
    pub fn curvature(&self) -> &DMatrix<f64> {
        &self.curvature_parts().0
    }

    /// Rank, (pseudo-)inverse and kernel of `F`.
    pub fn curvature_inverse(&self) -> &RankRevealed {
        &self.curvature_parts().1
    }

    pub fn contraction(&self, conv: Convention) -> Result<DMatrix<f64>> {
        let r = self.curvature_inverse();
        if !r.full_rank() {
            return Err(Error::FNotInvertible { rank: r.rank, size: r.size() });
        }
        Ok(conv.contraction(&r.inverse))
    }

    /// `{X, Y}_F`.
    pub fn bracket_f(&self, x: &Gradient, y: &Gradient, conv: Convention) -> Result<f64> {
        let mut out = self.poisson(x, y);
        if self.h.is_empty() {
            return Ok(out);
        }
        let m = self.contraction(conv)?;
        let xh = DVector::from_iterator(self.h.len(), self.grad_h.iter().map(|g| self.poisson(x, g)));
        let dy = self.d_all(y);
        out += xh.dot(&(m * dy));
        Ok(out)
    }

    /// `dX/dt = {X, H0} + D_b X v^b` for given degenerate velocities.
    pub fn evolution_rate(&self, x: &Gradient, v_deg: &[f64]) -> f64 {
        let dx = self.d_all(x);
        self.poisson(x, &self.grad_h0) + v_deg.iter().enumerate().map(|(b, v)| dx[b] * v).sum::<f64>()
    }
}

pub fn poisson(frame: &Frame, x: &dyn Observable, y: &dyn Observable) -> Result<f64> {
    Ok(frame.poisson(&x.gradient(frame)?, &y.gradient(frame)?))
}

pub fn d_alpha(frame: &Frame, x: &dyn Observable, a: usize) -> Result<f64> {
    if a >= frame.h.len() {
        return Err(out_of_range(a, frame));
    }
    Ok(frame.d_alpha(&x.gradient(frame)?, a))
}

pub fn bracket_f(frame: &Frame, x: &dyn Observable, y: &dyn Observable, conv: Convention) -> Result<f64> {
    frame.bracket_f(&x.gradient(frame)?, &y.gradient(frame)?, conv)
}

/// `F` by central differences of the `h_alpha` values and of the bracket
/// terms, independent of the analytic gradients.
pub fn curvature_fd(sys: &ClairautSystem, q: &[f64], p: &[f64], step: f64) -> Result<DMatrix<f64>> {
    let split = sys.split();
    let m = split.degenerate_count();
    let h_at = |q: &[f64], p: &[f64]| -> Result<Vec<f64>> { Ok(sys.frame(q, p, None)?.h) };
    let mut dq = vec![vec![0.0; sys.n()]; m];
    let mut dp = vec![vec![0.0; split.rank]; m];
    let (mut qq, mut pp) = (q.to_vec(), p.to_vec());
    for a in 0..sys.n() {
        qq[a] = q[a] + step;
        let plus = h_at(&qq, &pp)?;
        qq[a] = q[a] - step;
        let minus = h_at(&qq, &pp)?;
        qq[a] = q[a];
        for k in 0..m {
            dq[k][a] = (plus[k] - minus[k]) / (2.0 * step);
        }
    }
    for i in 0..split.rank {
        pp[i] = p[i] + step;
        let plus = h_at(&qq, &pp)?;
        pp[i] = p[i] - step;
        let minus = h_at(&qq, &pp)?;
        pp[i] = p[i];
        for k in 0..m {
            dp[k][i] = (plus[k] - minus[k]) / (2.0 * step);
        }
    }
    let mut f = DMatrix::zeros(m, m);
    for a in 0..m {
        for b in 0..m {
            let pb: f64 = split
                .regular
                .iter()
                .enumerate()
                .map(|(i, &k)| dq[a][k] * dp[b][i] - dp[a][i] * dq[b][k])
                .sum();
            f[(a, b)] = dq[a][split.degenerate[b]] - dq[b][split.degenerate[a]] + pb;
        }
    }
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{Model, Tolerances};

    fn sys(coords: &[&str], l: &str) -> ClairautSystem {
        ClairautSystem::build(Model::new(coords, &[], l).unwrap(), Tolerances::default()).unwrap()
    }

    #[test]
    fn poisson_examples() {
        let s = sys(&["q1", "q2"], "0.5*(d(q1) - q2)^2");
        let f = s.frame(&[0.1, 0.3], &[0.5], None).unwrap();
        let q1 = ExprObservable::parse(&s, "q1").unwrap();
        let p1 = ExprObservable::parse(&s, "p1").unwrap();
        let q2 = ExprObservable::parse(&s, "q2").unwrap();
        assert_eq!(poisson(&f, &q1, &p1).unwrap(), 1.0);
        assert_eq!(poisson(&f, &p1, &q1).unwrap(), -1.0);
        assert_eq!(poisson(&f, &q2, &p1).unwrap(), 0.0);
        // {H0, H0} = 0
        assert_eq!(poisson(&f, &Hamiltonian, &Hamiltonian).unwrap(), 0.0);
    }

    #[test]
    fn d_alpha_examples() {
        let s = sys(&["q1", "q2"], "0.5*(d(q1) - q2)^2");
        let f = s.frame(&[0.1, 0.3], &[0.5], None).unwrap();
        // h2 = 0, so D_2 H0 = dH0/dq2 = p1
        assert!((d_alpha(&f, &Hamiltonian, 0).unwrap() - 0.5).abs() < 1e-12);
        let s = sys(&["q1", "q2"], "0.5*(q2*d(q1) - q1*d(q2)) - 0.5*(q1^2 + q2^2)");
        let f = s.frame(&[0.4, -0.2], &[], None).unwrap();
        assert!((d_alpha(&f, &Hamiltonian, 0).unwrap() - 0.4).abs() < 1e-14);
        assert!((d_alpha(&f, &Hamiltonian, 1).unwrap() + 0.2).abs() < 1e-14);
        assert!(d_alpha(&f, &Hamiltonian, 2).is_err());
    }

    #[test]
    fn curvature_examples() {
        let s = sys(&["q1", "q2"], "0.5*(q2*d(q1) - q1*d(q2)) - 0.5*(q1^2 + q2^2)");
        let f = s.frame(&[0.4, -0.2], &[], None).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        assert!((f.curvature() - &expected).amax() < 1e-15);
        let inv = invert_f(f.curvature(), 1e-9).unwrap();
        assert!((inv - DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0])).amax() < 1e-15);

        let s = sys(&["q1", "q2"], "0.5*(d(q1) - q2)^2");
        let f = s.frame(&[0.1, 0.3], &[0.5], None).unwrap();
        assert_eq!(f.curvature(), &DMatrix::zeros(1, 1));
        assert!(matches!(invert_f(f.curvature(), 1e-9), Err(Error::FNotInvertible { rank: 0, size: 1 })));
        assert!(matches!(
            bracket_f(&f, &Hamiltonian, &Hamiltonian, Convention::B),
            Err(Error::FNotInvertible { .. })
        ));
    }

    #[test]
    fn curvature_includes_bracket_term() {
        // h_2 = -q1 p1, h_3 = -q3 p1 - q2, so {h_2, h_3} = p1 q3
        let s = sys(&["q1", "q2", "q3"], "0.5*(d(q1) + q1*d(q2) + q3*d(q3))^2 + q2*d(q3) - q1^2");
        let (q, p) = ([0.3, -0.4, 0.5], [0.6]);
        let f = s.frame(&q, &p, None).unwrap();
        let fd = curvature_fd(&s, &q, &p, 1e-5).unwrap();
        assert!((f.curvature() - &fd).amax() < 1e-7, "{} vs {}", f.curvature(), fd);
        let g = &f.grad_h;
        assert!(f.poisson(&g[0], &g[1]).abs() > 0.1);
    }

    #[test]
    fn f_bracket_reduces_to_poisson_without_degenerate_directions() {
        let s = sys(&["q1"], "0.5*d(q1)^2 - 0.5*q1^2");
        let f = s.frame(&[0.3], &[0.2], None).unwrap();
        let q1 = ExprObservable::parse(&s, "q1").unwrap();
        let v = bracket_f(&f, &q1, &Hamiltonian, Convention::A).unwrap();
        assert!((v - 0.2).abs() < 1e-14);
    }

    #[test]
    fn convention_contraction() {
        let fbar = DMatrix::from_row_slice(2, 2, &[0.0, 2.0, -2.0, 0.0]);
        assert_eq!(Convention::B.contraction(&fbar), fbar);
        assert_eq!(Convention::A.contraction(&fbar), -fbar);
        assert_eq!(Convention::from_label("b"), Some(Convention::B));
    }

    #[test]
    fn fd_gradient_of_closure() {
        let s = sys(&["q1"], "0.5*d(q1)^2");
        let f = s.frame(&[0.5], &[2.0], None).unwrap();
        let obs = FnObservable::new(|q: &[f64], p: &[f64]| Ok(q[0] * q[0] * p[0]), 1e-6);
        let g = obs.gradient(&f).unwrap();
        assert!((g.dq[0] - 2.0).abs() < 1e-8 && (g.dp[0] - 0.25).abs() < 1e-8);
        assert!(ExprObservable::parse(&s, "d(q1)").is_err());
    }
}
