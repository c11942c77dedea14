//! Time evolution on the restricted phase space `(q^A, p_i)`.
//!
//! ```text
//! dq^i/dt     =  dH0/dp_i + dh_b/dp_i v^b
//! dp_i/dt     = -dH0/dq^i - dh_b/dq^i v^b
//! dq^alpha/dt =  v^alpha,   F v = D H0
//! ```
//!
//! When `F` is singular the particular solution `F^+ D H0` is completed by
//! the kernel projection of a user-supplied gauge.

use crate::bracket::{Convention, Observable};
use crate::error::{Error, Result};
use crate::expr::{Expr, SliceBindings, Symbol};
use crate::model::Window;
use crate::timeseries::{rk4_step, DerivativeWeights};
use crate::transform::{ClairautSystem, Frame, PhasePoint};
use crate::verification::{el_residual, VelocitySource};
use nalgebra::DVector;
use serde::Serialize;
use std::fmt;

/// Degenerate velocities along the kernel of `F`, as functions of
/// `(t, q, p)`. Unset directions are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct GaugeChoice {
    exprs: Vec<Expr>,
    set: Vec<bool>,
    params: Vec<f64>,
}

impl GaugeChoice {
    pub fn zeros(m: usize) -> GaugeChoice {
        GaugeChoice { exprs: vec![Expr::zero(); m], set: vec![false; m], params: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.exprs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exprs.is_empty()
    }

    /// Number of explicitly assigned directions.
    pub fn assigned(&self) -> usize {
        self.set.iter().filter(|&&s| s).count()
    }

    pub fn expr(&self, pos: usize) -> &Expr {
        &self.exprs[pos]
    }

    /// Assigns the gauge of the degenerate direction at position `pos`.
    pub fn set(&mut self, pos: usize, expr: Expr, sys: &ClairautSystem) -> Result<()> {
        if pos >= self.exprs.len() {
            return Err(Error::Dimension(format!("gauge position {pos} out of range ({})", self.exprs.len())));
        }
        let table = sys.model().table();
        for s in expr.symbols() {
            match s {
                Symbol::Vel(_) => return Err(Error::InvalidArgument("gauge expressions cannot use velocities".into())),
                Symbol::Mom(k) if sys.split().regular_position(k).is_none() => {
                    return Err(Error::InvalidArgument(format!(
                        "gauge uses {}, the momentum of a degenerate coordinate",
                        table.momentum_name(k)
                    )))
                }
                _ => {}
            }
        }
        self.exprs[pos] = expr;
        self.set[pos] = true;
        self.params = sys.model().params();
        Ok(())
    }

    pub fn eval(&self, t: f64, frame: &Frame) -> Result<DVector<f64>> {
        let p = frame.momenta_by_coordinate();
        let b = SliceBindings { q: &frame.q, p: &p, params: &self.params, t: Some(t), ..Default::default() };
        let vals = self.exprs.iter().map(|e| e.eval(&b)).collect::<Result<Vec<_>, _>>()?;
        Ok(DVector::from_vec(vals))
    }
}

/// How the degenerate velocities were fixed at one point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GaugeReport {
    pub rank_f: usize,
    /// `n - r - rank_f`
    pub gauge_count: usize,
    /// Orthonormal basis of the kernel of `F`.
    pub kernel: Vec<Vec<f64>>,
    /// `max |P_ker(F) D H0|`, zero when `F` is invertible.
    pub consistency_residual: f64,
    pub gauge_applied: bool,
}

/// Solves `F v = D H0` for the degenerate velocities.
pub fn resolve_degenerate_velocities(
    frame: &Frame,
    t: f64,
    gauge: Option<&GaugeChoice>,
    conv: Convention,
) -> Result<(Vec<f64>, GaugeReport)> {
    let m = frame.h.len();
    let inv = frame.curvature_inverse();
    let d = frame.d_h0();
    let mut v = conv.contraction(&inv.inverse) * &d;
    let mut report = GaugeReport {
        rank_f: inv.rank,
        gauge_count: m - inv.rank,
        kernel: inv.kernel.iter().map(|k| k.iter().copied().collect()).collect(),
        consistency_residual: 0.0,
        gauge_applied: false,
    };
    if !inv.full_rank() {
        let proj = inv.kernel_projector();
        report.consistency_residual = (&proj * &d).amax();
        if report.consistency_residual > frame.system().tolerances().consistency {
            return Err(Error::InconsistentSystem { residual: report.consistency_residual, t });
        }
        let g = gauge.ok_or(Error::MissingGauge { kernel_dim: report.gauge_count })?;
        if g.len() != m {
            return Err(Error::Dimension(format!("gauge has {} entries, expected {m}", g.len())));
        }
        v += proj * g.eval(t, frame)?;
        report.gauge_applied = true;
    }
    Ok((v.iter().copied().collect(), report))
}

/// One sample of a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Sample {
    pub t: f64,
    pub q: Vec<f64>,
    /// Regular momenta.
    pub p: Vec<f64>,
    /// Degenerate velocities.
    pub v: Vec<f64>,
    pub h0: f64,
    /// Largest Euler-Lagrange residual component at this sample.
    pub el_residual: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub regular: Vec<usize>,
    pub degenerate: Vec<usize>,
    pub convention: Convention,
    pub samples: Vec<Sample>,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn last(&self) -> Option<&Sample> {
        self.samples.last()
    }

    pub fn max_el_residual(&self) -> Option<f64> {
        self.samples.iter().filter_map(|s| s.el_residual).reduce(f64::max)
    }

    pub fn max_h0_drift(&self) -> f64 {
        let h = self.samples.first().map_or(0.0, |s| s.h0);
        self.samples.iter().map(|s| (s.h0 - h).abs()).fold(0.0, f64::max)
    }
}

/// An integration failure together with everything computed before it.
#[derive(Debug, Clone)]
pub struct IntegrateError {
    pub error: Error,
    pub partial: Trajectory,
}

impl fmt::Display for IntegrateError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let t = self.partial.last().map_or(f64::NAN, |s| s.t);
        write!(f, "{} (after t = {t})", self.error)
    }
}

impl std::error::Error for IntegrateError {}

impl From<IntegrateError> for Error {
    fn from(e: IntegrateError) -> Error {
        e.error
    }
}

#[derive(Debug, Clone)]
struct Eval {
    t: f64,
    y: Vec<f64>,
    dy: Vec<f64>,
    v: Vec<f64>,
    h0: f64,
}

/// RK4 stepper carrying a warm start for the Newton solve and a one-entry
/// cache of the last right-hand side.
pub struct Integrator<'s> {
    sys: &'s ClairautSystem,
    conv: Convention,
    gauge: Option<GaugeChoice>,
    guess: Option<Vec<f64>>,
    last: Option<Eval>,
}

impl<'s> Integrator<'s> {
    pub fn new(sys: &'s ClairautSystem, conv: Convention, gauge: Option<GaugeChoice>) -> Integrator<'s> {
        Integrator { sys, conv, gauge, guess: None, last: None }
    }

    fn eval(&mut self, t: f64, y: &[f64]) -> Result<Eval> {
        if let Some(e) = &self.last {
            if e.t == t && e.y == y {
                return Ok(e.clone());
            }
        }
        let sys = self.sys;
        let n = sys.n();
        let split = sys.split();
        let (q, p) = y.split_at(n);
        let frame = sys.frame(q, p, self.guess.as_deref())?;
        self.guess = Some(frame.regular_velocities());
        let (v, _) = resolve_degenerate_velocities(&frame, t, self.gauge.as_ref(), self.conv)?;
        let mut dy = vec![0.0; y.len()];
        for (i, &k) in split.regular.iter().enumerate() {
            let mut dq = frame.grad_h0.dp[i];
            let mut dp = -frame.grad_h0.dq[k];
            for (b, g) in frame.grad_h.iter().enumerate() {
                dq += g.dp[i] * v[b];
                dp -= g.dq[k] * v[b];
            }
            dy[k] = dq;
            dy[n + i] = dp;
        }
        for (b, &k) in split.degenerate.iter().enumerate() {
            dy[k] = v[b];
        }
        let e = Eval { t, y: y.to_vec(), dy, v, h0: frame.h0 };
        self.last = Some(e.clone());
        Ok(e)
    }

    fn pack(&self, state: &PhasePoint) -> Result<Vec<f64>> {
        let (n, r) = (self.sys.n(), self.sys.split().rank);
        if state.q.len() != n || state.p.len() != r {
            return Err(Error::Dimension(format!(
                "state has {} coordinates and {} momenta, expected {n} and {r}",
                state.q.len(),
                state.p.len()
            )));
        }
        Ok(state.q.iter().chain(&state.p).copied().collect())
    }

    /// `(dq/dt, dp/dt, v_degenerate, H0)` at a state.
    pub fn rates(&mut self, state: &PhasePoint) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>, f64)> {
        let y = self.pack(state)?;
        let e = self.eval(state.t, &y)?;
        let n = self.sys.n();
        Ok((e.dy[..n].to_vec(), e.dy[n..].to_vec(), e.v, e.h0))
    }

    /// One RK4 step. The returned point carries the degenerate velocities at
    /// its own time.
    pub fn step(&mut self, state: &PhasePoint, dt: f64) -> Result<PhasePoint> {
        let y = self.pack(state)?;
        let y1 = rk4_step(|t, y| Ok(self.eval(t, y)?.dy), state.t, &y, dt)?;
        let t1 = state.t + dt;
        let v = self.eval(t1, &y1)?.v;
        let n = self.sys.n();
        Ok(PhasePoint { q: y1[..n].to_vec(), p: y1[n..].to_vec(), v, t: t1 })
    }

    fn sample(&mut self, state: &PhasePoint) -> Result<Sample> {
        let (_, _, v, h0) = self.rates(state)?;
        Ok(Sample { t: state.t, q: state.q.clone(), p: state.p.clone(), v, h0, el_residual: None })
    }
}

/// One RK4 step from `state`.
pub fn step(
    sys: &ClairautSystem,
    state: &PhasePoint,
    dt: f64,
    gauge: Option<&GaugeChoice>,
    conv: Convention,
) -> Result<PhasePoint> {
    Integrator::new(sys, conv, gauge.cloned()).step(state, dt)
}

/// Integrates over `window` with fixed step `dt`; the last step is shortened
/// to land exactly on `t1`. Each sample is annotated with its Euler-Lagrange
/// residual when the trajectory has enough samples to differentiate.
pub fn integrate(
    sys: &ClairautSystem,
    start: &PhasePoint,
    window: &Window,
    gauge: Option<&GaugeChoice>,
    conv: Convention,
) -> Result<Trajectory, IntegrateError> {
    let split = sys.split();
    let mut traj = Trajectory {
        regular: split.regular.clone(),
        degenerate: split.degenerate.clone(),
        convention: conv,
        samples: Vec::new(),
    };
    let Window { t0, t1, dt } = *window;
    if !(dt > 0.0 && t1 > t0 && dt.is_finite() && t1.is_finite() && t0.is_finite()) {
        let error = Error::InvalidArgument(format!("invalid window t0 = {t0}, t1 = {t1}, dt = {dt}"));
        return Err(IntegrateError { error, partial: traj });
    }
    let steps = (((t1 - t0) / dt) - 1e-9).ceil().max(1.0) as usize;
    let mut integ = Integrator::new(sys, conv, gauge.cloned());
    let mut state = PhasePoint { t: t0, ..start.clone() };
    macro_rules! attempt {
        ($e:expr) => {
            match $e {
                Ok(x) => x,
                Err(error) => return Err(IntegrateError { error, partial: traj }),
            }
        };
    }
    traj.samples.reserve(steps + 1);
    traj.samples.push(attempt!(integ.sample(&state)));
    for k in 1..=steps {
        let t_next = if k == steps { t1 } else { t0 + k as f64 * dt };
        let mut next = attempt!(integ.step(&state, t_next - state.t));
        next.t = t_next;
        if next.q.iter().chain(&next.p).any(|x| !x.is_finite()) {
            let error = Error::Verification(format!("state became non-finite at t = {t_next}"));
            return Err(IntegrateError { error, partial: traj });
        }
        state = next;
        traj.samples.push(attempt!(integ.sample(&state)));
    }
    match el_residual(sys, &traj, VelocitySource::Resolved) {
        Ok(res) => {
            for (s, r) in traj.samples.iter_mut().zip(res.per_sample) {
                s.el_residual = Some(r);
            }
        }
        Err(Error::TooFewSamples { .. }) => {}
        Err(error) => return Err(IntegrateError { error, partial: traj }),
    }
    Ok(traj)
}

/// An observable along a trajectory with three estimates of its rate.
#[derive(Debug, Clone, Serialize)]
pub struct ObservableEvolution {
    pub values: Vec<f64>,
    /// Fourth-order differences of `values`.
    pub numeric_rate: Vec<f64>,
    /// `{X, H0}_F`; absent when `F` is singular.
    pub bracket_rate: Option<Vec<f64>>,
    /// `{X, H0} + D_b X v^b`.
    pub flow_rate: Vec<f64>,
    /// Interior maxima of `|numeric - bracket|` and `|numeric - flow|`.
    pub max_bracket_deviation: Option<f64>,
    pub max_flow_deviation: f64,
}

/// Evaluates `x` along `traj` and compares its numerical rate with the
/// F-bracket and the flow derivative. Deviations skip two samples at each
/// end, where only one-sided stencils are available.
pub fn evolve_observable(sys: &ClairautSystem, x: &dyn Observable, traj: &Trajectory) -> Result<ObservableEvolution> {
    let times = traj.times();
    let weights = DerivativeWeights::new(&times)?;
    let mut values = Vec::with_capacity(times.len());
    let mut bracket = Some(Vec::with_capacity(times.len()));
    let mut flow = Vec::with_capacity(times.len());
    let mut guess: Option<Vec<f64>> = None;
    for s in &traj.samples {
        let frame = sys.frame(&s.q, &s.p, guess.as_deref())?;
        guess = Some(frame.regular_velocities());
        let g = x.gradient(&frame)?;
        values.push(x.value(&frame)?);
        flow.push(frame.evolution_rate(&g, &s.v));
        if let Some(b) = bracket.as_mut() {
            match frame.bracket_f(&g, &frame.grad_h0, traj.convention) {
                Ok(r) => b.push(r),
                Err(Error::FNotInvertible { .. }) => bracket = None,
                Err(e) => return Err(e),
            }
        }
    }
    let numeric: Vec<f64> = (0..times.len()).map(|k| weights.apply(k, &values)).collect();
    let interior = 2..times.len().saturating_sub(2);
    let dev = |rate: &[f64]| interior.clone().map(|k| (numeric[k] - rate[k]).abs()).fold(0.0, f64::max);
    Ok(ObservableEvolution {
        max_bracket_deviation: bracket.as_deref().map(dev),
        max_flow_deviation: dev(&flow),
        values,
        numeric_rate: numeric,
        bracket_rate: bracket,
        flow_rate: flow,
    })
}
