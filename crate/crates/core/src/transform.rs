//! Mixed Clairaut-Legendre transform.
//!
//! Regular velocities `V^i(q, p_i, v^alpha)` are resolved pointwise by Newton
//! iteration on `p_i = dL/dv^i`. From them follow
//!
//! * `h_alpha(q, p) = -dL/dv^alpha` at `v^i = V^i`,
//! * `H_mix(q, p, pbar, v) = p_i V^i + pbar_alpha v^alpha - L(q, V, v)`,
//! * `H0(q, p) = H_mix - (pbar_beta + h_beta) v^beta`,
//!
//! the last two of which do not depend on the probes `pbar`, `v^alpha`.
//! Gradients of `H0` and `h_alpha` on the restricted phase space come from the
//! implicit-function rule `dV/dx = -W_reg^{-1} d^2L/dv dx` rather than from
//! nested finite differences.

use crate::analysis::{hessian, sample_points, split, HessianField, IndexSplit, SamplePoint};
use crate::config::Tolerances;
use crate::error::{Error, Result};
use crate::expr::{Expr, Symbol};
use crate::linalg::{submatrix, RankRevealed};
use crate::model::Model;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::cell::OnceCell;

/// A point of the restricted phase space.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasePoint {
    /// All `n` coordinates, in declaration order.
    pub q: Vec<f64>,
    /// Regular momenta, ordered like `IndexSplit::regular`.
    pub p: Vec<f64>,
    /// Degenerate velocities, ordered like `IndexSplit::degenerate`. May be
    /// empty when they have not been resolved.
    pub v: Vec<f64>,
    /// Carried for output only; the dynamics is autonomous.
    pub t: f64,
}

impl PhasePoint {
    pub fn new(q: Vec<f64>, p: Vec<f64>) -> PhasePoint {
        PhasePoint { q, p, v: Vec::new(), t: 0.0 }
    }
}

/// Outcome of the Newton solve for the regular velocities.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolution {
    /// All `n` velocities: resolved regular ones, degenerate ones as given.
    pub velocities: Vec<f64>,
    pub iterations: usize,
    /// `max |p_i - dL/dv^i|` at the returned velocities.
    pub residual: f64,
}

/// Derivatives of an observable on the restricted phase space.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    /// With respect to every coordinate `q^A`.
    pub dq: Vec<f64>,
    /// With respect to the regular momenta `p_i`.
    pub dp: Vec<f64>,
}

impl Gradient {
    pub fn zeros(n: usize, r: usize) -> Gradient {
        Gradient { dq: vec![0.0; n], dp: vec![0.0; r] }
    }
}

/// The transformed system of one model.
#[derive(Debug, Clone)]
pub struct ClairautSystem {
    model: Model,
    tol: Tolerances,
    hessian: HessianField,
    samples: Vec<SamplePoint>,
    split: IndexSplit,
    lv: Vec<Expr>,
    lq: Vec<Expr>,
    /// `lvq[A][B] = d^2 L / dv^A dq^B`
    lvq: Vec<Vec<Expr>>,
    probe_v: Vec<f64>,
    probe_pbar: Vec<f64>,
    flip_curvature: bool,
}

/// Values of `L` and its derivatives at one `(q, v)`.
struct LocalValues {
    l: f64,
    lv: Vec<f64>,
    lq: Vec<f64>,
    w: DMatrix<f64>,
    lvq: DMatrix<f64>,
}

impl ClairautSystem {
    /// Analyses the Hessian at seeded sample points, fixes the index split and
    /// prepares all derivative expressions.
    pub fn build(model: Model, tol: Tolerances) -> Result<ClairautSystem> {
        let samples = sample_points(model.n(), tol.sample_count, tol.seed);
        ClairautSystem::build_with_samples(model, tol, samples)
    }

    pub fn build_with_samples(model: Model, tol: Tolerances, samples: Vec<SamplePoint>) -> Result<ClairautSystem> {
        let n = model.n();
        if let Some(bad) = samples.iter().find(|s| s.q.len() != n || s.v.len() != n) {
            return Err(Error::Dimension(format!("sample point {bad:?} does not have {n} coordinates and velocities")));
        }
        let hessian = hessian(&model);
        let split = split(&hessian, &samples, tol.rel_rank())?;
        let l = model.lagrangian();
        let lv: Vec<Expr> = (0..n).map(|a| l.diff(Symbol::Vel(a))).collect();
        let lq: Vec<Expr> = (0..n).map(|a| l.diff(Symbol::Coord(a))).collect();
        let lvq = lv
            .iter()
            .map(|e| (0..n).map(|b| e.diff(Symbol::Coord(b))).collect())
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(tol.seed.wrapping_add(1));
        let m = split.degenerate_count();
        let probe_v = (0..m).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let probe_pbar = (0..m).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        Ok(ClairautSystem {
            model,
            tol,
            hessian,
            samples,
            split,
            lv,
            lq,
            lvq,
            probe_v,
            probe_pbar,
            flip_curvature: false,
        })
    }

    /// Negates the curvature matrix. Fault injection for calibration tests.
    #[doc(hidden)]
    pub fn with_flipped_curvature(mut self) -> ClairautSystem {
        self.flip_curvature = true;
        self
    }

    pub(crate) fn curvature_flipped(&self) -> bool {
        self.flip_curvature
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn tolerances(&self) -> &Tolerances {
        &self.tol
    }

    pub fn hessian(&self) -> &HessianField {
        &self.hessian
    }

    pub fn samples(&self) -> &[SamplePoint] {
        &self.samples
    }

    pub fn split(&self) -> &IndexSplit {
        &self.split
    }

    pub fn n(&self) -> usize {
        self.model.n()
    }

    fn check_dims(&self, q: &[f64], p: &[f64], v_deg: &[f64]) -> Result<()> {
        let (n, r) = (self.n(), self.split.rank);
        if q.len() != n || p.len() != r || v_deg.len() != n - r {
            return Err(Error::Dimension(format!(
                "expected {n} coordinates, {r} regular momenta and {} degenerate velocities, got {}, {}, {}",
                n - r,
                q.len(),
                p.len(),
                v_deg.len()
            )));
        }
        Ok(())
    }

    fn assemble(&self, v_reg: &[f64], v_deg: &[f64]) -> Vec<f64> {
        let mut v = vec![0.0; self.n()];
        for (&k, &x) in self.split.regular.iter().zip(v_reg) {
            v[k] = x;
        }
        for (&k, &x) in self.split.degenerate.iter().zip(v_deg) {
            v[k] = x;
        }
        v
    }

    fn values(&self, q: &[f64], v: &[f64]) -> Result<LocalValues> {
        let b = self.model.bindings(q, v);
        let n = self.n();
        let eval_all = |es: &[Expr]| es.iter().map(|e| e.eval(&b)).collect::<Result<Vec<_>, _>>();
        let mut lvq = DMatrix::zeros(n, n);
        for a in 0..n {
            for c in 0..n {
                lvq[(a, c)] = self.lvq[a][c].eval(&b)?;
            }
        }
        Ok(LocalValues {
            l: self.model.lagrangian().eval(&b)?,
            lv: eval_all(&self.lv)?,
            lq: eval_all(&self.lq)?,
            w: self.hessian.at(q, v)?,
            lvq,
        })
    }

    /// `p_i = dL/dv^i` for all regular indices at a full velocity vector.
    pub fn momenta_from_velocities(&self, q: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        let b = self.model.bindings(q, v);
        self.split.regular.iter().map(|&k| Ok(self.lv[k].eval(&b)?)).collect()
    }

    fn regular_residual(&self, q: &[f64], v: &[f64], p: &[f64]) -> Result<DVector<f64>> {
        let b = self.model.bindings(q, v);
        let mut r = DVector::zeros(p.len());
        for (i, &k) in self.split.regular.iter().enumerate() {
            r[i] = p[i] - self.lv[k].eval(&b)?;
        }
        Ok(r)
    }

    fn newton(&self, q: &[f64], p: &[f64], mut v: Vec<f64>) -> Result<Resolution> {
        let reg = &self.split.regular;
        let scale = p.iter().fold(1.0_f64, |m, x| m.max(x.abs()));
        let target = self.tol.newton_abs * scale;
        let mut resid = self.regular_residual(q, &v, p)?;
        let mut best = f64::INFINITY;
        for iter in 0..=self.tol.newton_max_iter {
            let norm = resid.amax();
            best = best.min(norm);
            if norm <= target {
                return Ok(Resolution { velocities: v, iterations: iter, residual: norm });
            }
            if iter == self.tol.newton_max_iter {
                break;
            }
            let w = submatrix(&self.hessian.at(q, &v)?, reg, reg);
            let lu = w.lu();
            let step = match lu.solve(&resid) {
                Some(s) if s.iter().all(|x| x.is_finite()) => s,
                _ => return Err(Error::SingularJacobian),
            };
            // Backtrack on the residual norm; fall back to the full step when
            // no shorter one improves (roundoff plateau).
            let mut lambda = 1.0;
            let mut accepted = None;
            for _ in 0..30 {
                let mut trial = v.clone();
                for (i, &k) in reg.iter().enumerate() {
                    trial[k] += lambda * step[i];
                }
                if let Ok(r) = self.regular_residual(q, &trial, p) {
                    if r.amax() < norm {
                        accepted = Some((trial, r));
                        break;
                    }
                }
                lambda *= 0.5;
            }
            let (next, r) = match accepted {
                Some(a) => a,
                None => {
                    let mut trial = v.clone();
                    for (i, &k) in reg.iter().enumerate() {
                        trial[k] += step[i];
                    }
                    let r = self.regular_residual(q, &trial, p)?;
                    (trial, r)
                }
            };
            v = next;
            resid = r;
        }
        Err(Error::NoConvergence { iterations: self.tol.newton_max_iter, residual: best })
    }

    /// Solves `p_i = dL/dv^i(q, v^j, v^alpha)` for the regular velocities.
    ///
    /// Starts from `guess` (zeros when absent). If that start hits a singular
    /// Jacobian or fails to converge, `v^i = p_i` and then all ones are tried.
    pub fn resolve_velocities(&self, q: &[f64], p: &[f64], v_deg: &[f64], guess: Option<&[f64]>) -> Result<Resolution> {
        self.check_dims(q, p, v_deg)?;
        let r = self.split.rank;
        if r == 0 {
            return Ok(Resolution { velocities: self.assemble(&[], v_deg), iterations: 0, residual: 0.0 });
        }
        let mut starts: Vec<Vec<f64>> = Vec::with_capacity(3);
        match guess {
            Some(g) if g.len() == r => starts.push(g.to_vec()),
            Some(g) => {
                return Err(Error::Dimension(format!("guess has {} entries, expected {r}", g.len())));
            }
            None => starts.push(vec![0.0; r]),
        }
        starts.push(p.to_vec());
        starts.push(vec![1.0; r]);
        let mut first_err = None;
        for start in starts {
            match self.newton(q, p, self.assemble(&start, v_deg)) {
                Ok(res) => return Ok(res),
                Err(e @ (Error::SingularJacobian | Error::NoConvergence { .. } | Error::Eval(_))) => {
                    let better = matches!(
                        (&first_err, &e),
                        (None, _) | (Some(Error::SingularJacobian), Error::NoConvergence { .. })
                    );
                    if better {
                        first_err = Some(e);
                    }
                }
                Err(e) => return Err(e),
            }
        }
        Err(first_err.unwrap_or(Error::SingularJacobian))
    }

    fn regular_velocities(&self, velocities: &[f64]) -> Vec<f64> {
        self.split.regular.iter().map(|&k| velocities[k]).collect()
    }

    fn h_at(&self, q: &[f64], velocities: &[f64]) -> Result<Vec<f64>> {
        let b = self.model.bindings(q, velocities);
        self.split.degenerate.iter().map(|&k| Ok(-self.lv[k].eval(&b)?)).collect()
    }

    /// `h_alpha(q, p)`, checked for independence of the degenerate velocities
    /// by comparing the zero probe with a second, random one.
    pub fn h_alpha(&self, q: &[f64], p: &[f64]) -> Result<Vec<f64>> {
        let m = self.split.degenerate_count();
        let zero = vec![0.0; m];
        let base = self.resolve_velocities(q, p, &zero, None)?;
        let h = self.h_at(q, &base.velocities)?;
        if m > 0 {
            let guess = self.regular_velocities(&base.velocities);
            let other = self.resolve_velocities(q, p, &self.probe_v, Some(&guess))?;
            let h2 = self.h_at(q, &other.velocities)?;
            let spread = h.iter().zip(&h2).fold(0.0_f64, |s, (a, b)| s.max((a - b).abs()));
            if spread > self.tol.independence {
                return Err(Error::DependenceOnVelocity { spread });
            }
        }
        Ok(h)
    }

    /// `H_mix = p_i V^i + pbar_alpha v^alpha - L(q, V, v)`.
    pub fn h_mix(&self, q: &[f64], p: &[f64], pbar: &[f64], v_deg: &[f64]) -> Result<f64> {
        if pbar.len() != self.split.degenerate_count() {
            return Err(Error::Dimension(format!("pbar has {} entries, expected {}", pbar.len(), v_deg.len())));
        }
        let res = self.resolve_velocities(q, p, v_deg, None)?;
        let v_reg = self.regular_velocities(&res.velocities);
        let l = self.model.lagrangian_at(q, &res.velocities)?;
        Ok(dot(p, &v_reg) + dot(pbar, v_deg) - l)
    }

    /// `H0 = H_mix - (pbar + h) . v` with explicit probes.
    pub fn h_physical_probe(&self, q: &[f64], p: &[f64], pbar: &[f64], v_deg: &[f64]) -> Result<f64> {
        let hm = self.h_mix(q, p, pbar, v_deg)?;
        let res = self.resolve_velocities(q, p, v_deg, None)?;
        let h = self.h_at(q, &res.velocities)?;
        let correction: f64 = pbar.iter().zip(&h).zip(v_deg).map(|((a, b), v)| (a + b) * v).sum();
        Ok(hm - correction)
    }

    /// Physical Hamiltonian `H0(q, p)` (zero probes).
    pub fn h_physical(&self, q: &[f64], p: &[f64]) -> Result<f64> {
        let m = self.split.degenerate_count();
        let zero = vec![0.0; m];
        self.h_physical_probe(q, p, &zero, &zero)
    }

    /// `H0` evaluated with the system's random probes; equal to
    /// [`h_physical`](Self::h_physical) up to the independence tolerance.
    pub fn h_physical_random_probe(&self, q: &[f64], p: &[f64]) -> Result<f64> {
        self.h_physical_probe(q, p, &self.probe_pbar, &self.probe_v)
    }

    /// Standard Legendre transform `p_B V^B - L` of a nonsingular model.
    pub fn h_standard(&self, q: &[f64], p: &[f64]) -> Result<f64> {
        if !self.split.is_nonsingular() {
            return Err(Error::ModelSingular { rank: self.split.rank, n: self.n() });
        }
        let res = self.resolve_velocities(q, p, &[], None)?;
        Ok(dot(p, &res.velocities) - self.model.lagrangian_at(q, &res.velocities)?)
    }

    /// General (linear in `pbar`) solution `pbar_B c^B - L(q, c)`.
    pub fn h_general(&self, q: &[f64], pbar: &[f64], c: &[f64]) -> Result<f64> {
        h_general(&self.model, q, pbar, c)
    }

    /// Values and gradients of `H0` and every `h_alpha` at `(q, p)`.
    pub fn frame(&self, q: &[f64], p: &[f64], guess: Option<&[f64]>) -> Result<Frame<'_>> {
        let m = self.split.degenerate_count();
        let res = self.resolve_velocities(q, p, &vec![0.0; m], guess)?;
        let v = &res.velocities;
        let vals = self.values(q, v)?;
        let reg = &self.split.regular;
        let n = self.n();

        let lu = submatrix(&vals.w, reg, reg).lu();
        let composite = |g_q: Vec<f64>, g_v: DVector<f64>| -> Result<Gradient> {
            let y = if reg.is_empty() {
                DVector::zeros(0)
            } else {
                lu.solve(&g_v).ok_or(Error::SingularJacobian)?
            };
            let dq = (0..n)
                .map(|a| g_q[a] - reg.iter().enumerate().map(|(k, &i)| y[k] * vals.lvq[(i, a)]).sum::<f64>())
                .collect();
            Ok(Gradient { dq, dp: y.iter().copied().collect() })
        };

        // H0 = v^A dL/dv^A - L at v^alpha = 0
        let e_q: Vec<f64> = (0..n)
            .map(|b| (0..n).map(|a| v[a] * vals.lvq[(a, b)]).sum::<f64>() - vals.lq[b])
            .collect();
        let e_v = DVector::from_iterator(reg.len(), reg.iter().map(|&j| (0..n).map(|a| v[a] * vals.w[(a, j)]).sum()));
        let grad_h0 = composite(e_q, e_v)?;
        let v_reg = self.regular_velocities(v);
        let h0 = dot(p, &v_reg) - vals.l;

        let mut h = Vec::with_capacity(m);
        let mut grad_h = Vec::with_capacity(m);
        for &alpha in &self.split.degenerate {
            h.push(-vals.lv[alpha]);
            let g_q = (0..n).map(|b| -vals.lvq[(alpha, b)]).collect();
            let g_v = DVector::from_iterator(reg.len(), reg.iter().map(|&j| -vals.w[(alpha, j)]));
            grad_h.push(composite(g_q, g_v)?);
        }
        Ok(Frame {
            sys: self,
            q: q.to_vec(),
            p: p.to_vec(),
            velocities: res.velocities,
            newton_iterations: res.iterations,
            h0,
            h,
            grad_h0,
            grad_h,
            f_cache: OnceCell::new(),
        })
    }

    /// Gradients of `H0` and each `h_alpha` with respect to all `q^A`, `p_i`.
    pub fn derivatives(&self, q: &[f64], p: &[f64]) -> Result<(Gradient, Vec<Gradient>)> {
        let f = self.frame(q, p, None)?;
        Ok((f.grad_h0, f.grad_h))
    }
}

impl Tolerances {
    pub(crate) fn rel_rank(&self) -> f64 {
        self.rank_rel
    }
}

/// Everything known about the transformed system at one phase point. Also
/// serves as the per-point cache for the curvature and its inverse.
#[derive(Debug, Clone)]
pub struct Frame<'s> {
    pub(crate) sys: &'s ClairautSystem,
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    /// All velocities: resolved regular ones, zero degenerate probe.
    pub velocities: Vec<f64>,
    pub newton_iterations: usize,
    pub h0: f64,
    pub h: Vec<f64>,
    pub grad_h0: Gradient,
    pub grad_h: Vec<Gradient>,
    pub(crate) f_cache: OnceCell<(DMatrix<f64>, RankRevealed)>,
}

impl<'s> Frame<'s> {
    pub fn system(&self) -> &'s ClairautSystem {
        self.sys
    }

    pub fn split(&self) -> &'s IndexSplit {
        &self.sys.split
    }

    pub fn regular_velocities(&self) -> Vec<f64> {
        self.sys.regular_velocities(&self.velocities)
    }

    /// Momenta laid out by coordinate index; degenerate slots are NaN.
    pub fn momenta_by_coordinate(&self) -> Vec<f64> {
        let mut out = vec![f64::NAN; self.sys.n()];
        for (&k, &x) in self.sys.split.regular.iter().zip(&self.p) {
            out[k] = x;
        }
        out
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn h_general(model: &Model, q: &[f64], pbar: &[f64], c: &[f64]) -> Result<f64> {
    if pbar.len() != model.n() || c.len() != model.n() {
        return Err(Error::Dimension("pbar and c need one entry per coordinate".into()));
    }
    Ok(dot(pbar, c) - model.lagrangian_at(q, c)?)
}

/// Residual of the Clairaut equation `H - [pbar . dH/dpbar - L(q, dH/dpbar)]`
/// with the gradient taken by central differences of step `h`.
pub fn clairaut_residual<F>(model: &Model, hamiltonian: F, q: &[f64], pbar: &[f64], h: f64) -> Result<f64>
where
    F: Fn(&[f64], &[f64]) -> Result<f64>,
{
    let n = model.n();
    if pbar.len() != n || q.len() != n {
        return Err(Error::Dimension("clairaut_residual needs full q and pbar".into()));
    }
    let value = hamiltonian(q, pbar)?;
    let mut grad = vec![0.0; n];
    let mut shifted = pbar.to_vec();
    for b in 0..n {
        shifted[b] = pbar[b] + h;
        let plus = hamiltonian(q, &shifted)?;
        shifted[b] = pbar[b] - h;
        let minus = hamiltonian(q, &shifted)?;
        shifted[b] = pbar[b];
        grad[b] = (plus - minus) / (2.0 * h);
    }
    Ok(value - (dot(pbar, &grad) - model.lagrangian_at(q, &grad)?))
}
