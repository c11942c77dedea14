//! Independent oracles for the transformed dynamics.
//!
//! The Euler-Lagrange oracle differentiates the Lagrangian expression itself
//! and never touches the Hamiltonian right-hand side; the only thing it shares
//! with the pipeline is the pointwise reconstruction of regular velocities.

use crate::bracket::{bracket_f, Convention, DegenerateHamiltonian, ExprObservable, FnObservable, Hamiltonian, Observable};
use crate::error::{Error, Result};
use crate::evolution::{evolve_observable, integrate, GaugeChoice, Trajectory};
use crate::expr::{Expr, Symbol};
use crate::model::{ConventionChoice, ModelSpec, Window};
use crate::timeseries::{rk4_step, DerivativeWeights};
use crate::transform::{clairaut_residual, ClairautSystem, PhasePoint};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// Where the velocities inside `dL/dv` come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum VelocitySource {
    /// Regular velocities reconstructed from `(q, p)`, degenerate ones taken
    /// from the trajectory. Adds the kinematic rows `dq/dt - v`.
    Resolved,
    /// All velocities from differencing `q(t)`.
    Differenced,
}

/// Euler-Lagrange residuals along a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ElResidual {
    /// Per sample: `d/dt(dL/dv^A) - dL/dq^A` for every `A`, followed (for
    /// [`VelocitySource::Resolved`]) by `dq^A/dt - v^A`.
    pub rows: Vec<Vec<f64>>,
    /// Largest absolute entry of each row vector.
    pub per_sample: Vec<f64>,
    pub max: f64,
    pub argmax: usize,
}

fn first_derivatives(l: &Expr, n: usize, sym: fn(usize) -> Symbol) -> Vec<Expr> {
    (0..n).map(|a| l.diff(sym(a))).collect()
}

/// Full velocity vectors along `traj` for the chosen source.
fn velocities(
    sys: &ClairautSystem,
    traj: &Trajectory,
    source: VelocitySource,
    dq: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>> {
    let n = sys.n();
    let m = sys.split().degenerate_count();
    let mut out = Vec::with_capacity(traj.samples.len());
    let mut guess: Option<Vec<f64>> = None;
    for (k, s) in traj.samples.iter().enumerate() {
        match source {
            VelocitySource::Differenced => out.push((0..n).map(|a| dq[a][k]).collect()),
            VelocitySource::Resolved => {
                if s.v.len() != m {
                    return Err(Error::Dimension(format!(
                        "sample {k} carries {} degenerate velocities, expected {m}",
                        s.v.len()
                    )));
                }
                let res = sys.resolve_velocities(&s.q, &s.p, &s.v, guess.as_deref())?;
                guess = Some(sys.split().regular.iter().map(|&i| res.velocities[i]).collect());
                out.push(res.velocities);
            }
        }
    }
    Ok(out)
}

/// Residual of `d/dt(dL/dv^A) = dL/dq^A` with fourth-order time differences.
///
/// For degenerate `A` this is `-(dh_A/dt + dL/dq^A)` since
/// `dL/dv^alpha = -h_alpha`; the magnitude is what is reported.
pub fn el_residual(sys: &ClairautSystem, traj: &Trajectory, source: VelocitySource) -> Result<ElResidual> {
    let n = sys.n();
    let model = sys.model();
    let times = traj.times();
    let weights = DerivativeWeights::new(&times)?;
    let len = times.len();
    let l = model.lagrangian();
    let lv = first_derivatives(l, n, Symbol::Vel);
    let lq = first_derivatives(l, n, Symbol::Coord);

    let qs: Vec<Vec<f64>> = (0..n).map(|a| traj.samples.iter().map(|s| s.q[a]).collect()).collect();
    let dq: Vec<Vec<f64>> = qs.iter().map(|x| (0..len).map(|k| weights.apply(k, x)).collect()).collect();
    let vel = velocities(sys, traj, source, &dq)?;

    let mut mom = vec![vec![0.0; len]; n];
    let mut force = vec![vec![0.0; len]; n];
    for (k, s) in traj.samples.iter().enumerate() {
        let b = model.bindings(&s.q, &vel[k]);
        for a in 0..n {
            mom[a][k] = lv[a].eval(&b)?;
            force[a][k] = lq[a].eval(&b)?;
        }
    }
    let mut rows = Vec::with_capacity(len);
    let mut per_sample = Vec::with_capacity(len);
    let (mut max, mut argmax) = (0.0_f64, 0);
    for k in 0..len {
        let mut row: Vec<f64> = (0..n).map(|a| weights.apply(k, &mom[a]) - force[a][k]).collect();
        if source == VelocitySource::Resolved {
            row.extend((0..n).map(|a| dq[a][k] - vel[k][a]));
        }
        let worst = row.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        if worst > max || worst.is_nan() {
            max = worst;
            argmax = k;
        }
        per_sample.push(worst);
        rows.push(row);
    }
    Ok(ElResidual { rows, per_sample, max, argmax })
}

/// Largest gap between the split degenerate equation `dh_alpha/dt +
/// dL/dq^alpha` (with `h_alpha(q, p)` from the transform) and the unsplit
/// `d/dt(dL/dv^alpha) - dL/dq^alpha` from the Lagrangian, i.e. the maximum
/// of `|split + unsplit|`.
pub fn degenerate_form_gap(sys: &ClairautSystem, traj: &Trajectory) -> Result<f64> {
    let split = sys.split();
    if split.degenerate.is_empty() {
        return Ok(0.0);
    }
    let model = sys.model();
    let times = traj.times();
    let weights = DerivativeWeights::new(&times)?;
    let el = el_residual(sys, traj, VelocitySource::Resolved)?;
    let lq = first_derivatives(model.lagrangian(), sys.n(), Symbol::Coord);
    let dq: Vec<Vec<f64>> = Vec::new();
    let vel = velocities(sys, traj, VelocitySource::Resolved, &dq)?;
    let hs: Vec<Vec<f64>> = traj.samples.iter().map(|s| sys.h_alpha(&s.q, &s.p)).collect::<Result<_>>()?;
    let mut gap = 0.0_f64;
    for (b, &alpha) in split.degenerate.iter().enumerate() {
        let h: Vec<f64> = hs.iter().map(|h| h[b]).collect();
        for (k, s) in traj.samples.iter().enumerate() {
            let force = lq[alpha].eval(&model.bindings(&s.q, &vel[k]))?;
            let split_form = weights.apply(k, &h) + force;
            gap = gap.max((split_form + el.rows[k][alpha]).abs());
        }
    }
    Ok(gap)
}

/// Comparison applied to a check value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Comparison {
    /// Passes when `value <= tolerance`.
    AtMost,
    /// Passes when `value > tolerance`.
    Exceeds,
}

/// Where a check value was attained.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Witness {
    pub description: String,
    pub t: Option<f64>,
    pub q: Vec<f64>,
    pub p: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub max_residual: f64,
    pub tolerance: f64,
    pub comparison: Comparison,
    /// Reported-only checks never fail the report.
    pub asserted: bool,
    pub passed: bool,
    pub witness: Option<Witness>,
    pub note: Option<String>,
}

impl Check {
    pub fn at_most(name: impl Into<String>, value: f64, tolerance: f64) -> Check {
        Check {
            name: name.into(),
            max_residual: value,
            tolerance,
            comparison: Comparison::AtMost,
            asserted: true,
            passed: value <= tolerance,
            witness: None,
            note: None,
        }
    }

    pub fn exceeds(name: impl Into<String>, value: f64, threshold: f64) -> Check {
        Check {
            comparison: Comparison::Exceeds,
            passed: value > threshold,
            ..Check::at_most(name, value, threshold)
        }
    }

    /// A check that failed to run at all.
    pub fn error(name: impl Into<String>, err: &Error) -> Check {
        Check {
            passed: false,
            note: Some(format!("{}: {err}", err.kind())),
            ..Check::at_most(name, f64::NAN, 0.0)
        }
    }

    pub fn reported(mut self) -> Check {
        self.asserted = false;
        self
    }

    pub fn with_witness(mut self, w: Witness) -> Check {
        self.witness = Some(w);
        self
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Check {
        self.note = Some(note.into());
        self
    }

    pub fn ok(&self) -> bool {
        !self.asserted || self.passed
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct VerificationReport {
    pub checks: Vec<Check>,
    pub convention: Option<Convention>,
    pub self_bracket_witness: Option<SelfBracketWitness>,
    pub jacobi_witness: Option<JacobiWitness>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(Check::ok)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.ok())
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn push(&mut self, c: Check) {
        self.checks.push(c);
    }

    pub fn extend(&mut self, other: VerificationReport) {
        self.checks.extend(other.checks);
    }
}

/// Integrates the transformed system and the standard Hamilton equations
/// `dq/dt = V(q, p)`, `dp/dt = dL/dq(q, V)` with the same RK4 stepper and
/// reports the largest state difference.
pub fn nonsingular_equivalence(sys: &ClairautSystem, start: &PhasePoint, window: &Window) -> Result<VerificationReport> {
    let split = sys.split();
    if !split.is_nonsingular() {
        return Err(Error::ModelSingular { rank: split.rank, n: sys.n() });
    }
    let traj = integrate(sys, start, window, None, Convention::B)?;
    let n = sys.n();
    let model = sys.model();
    let lq = first_derivatives(model.lagrangian(), n, Symbol::Coord);
    let mut guess: Option<Vec<f64>> = None;
    let mut rhs = |_t: f64, y: &[f64]| -> Result<Vec<f64>> {
        let (q, p) = y.split_at(n);
        let v = sys.resolve_velocities(q, p, &[], guess.as_deref())?.velocities;
        let b = model.bindings(q, &v);
        let mut out = v.clone();
        for e in &lq {
            out.push(e.eval(&b)?);
        }
        guess = Some(v);
        Ok(out)
    };
    let mut y: Vec<f64> = start.q.iter().chain(&start.p).copied().collect();
    let mut worst = 0.0_f64;
    let mut at = 0;
    for k in 1..traj.samples.len() {
        let (t0, t1) = (traj.samples[k - 1].t, traj.samples[k].t);
        y = rk4_step(&mut rhs, t0, &y, t1 - t0)?;
        let s = &traj.samples[k];
        let d = s.q.iter().chain(&s.p).zip(&y).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        if d > worst {
            worst = d;
            at = k;
        }
    }
    let s = &traj.samples[at];
    let mut report = VerificationReport::default();
    report.push(Check::at_most("nonsingular_equivalence", worst, 1e-8).with_witness(Witness {
        description: "largest state difference".into(),
        t: Some(s.t),
        q: s.q.clone(),
        p: s.p.clone(),
    }));
    Ok(report)
}

/// Grid maximisation of `p v - L(q, v)` over `v` in `[-10, 10]` with step
/// `1e-3`, compared with the standard Hamiltonian.
pub fn legendre_sup_check(sys: &ClairautSystem, q: f64, p: f64) -> Result<VerificationReport> {
    if sys.n() != 1 {
        return Err(Error::InvalidArgument(format!("supremum check needs n = 1, model has n = {}", sys.n())));
    }
    const STEPS: usize = 20_000;
    let model = sys.model();
    let mut best = (f64::NEG_INFINITY, 0usize);
    for k in 0..=STEPS {
        let v = -10.0 + 20.0 * k as f64 / STEPS as f64;
        let value = p * v - model.lagrangian_at(&[q], &[v])?;
        if value > best.0 {
            best = (value, k);
        }
    }
    let at = -10.0 + 20.0 * best.1 as f64 / STEPS as f64;
    if best.1 == 0 || best.1 == STEPS {
        return Err(Error::SupremumOnBoundary { at });
    }
    let h = sys.h_standard(&[q], &[p])?;
    let mut report = VerificationReport::default();
    report.push(
        Check::at_most("legendre_sup", (best.0 - h).abs(), 1e-5)
            .with_witness(Witness { description: format!("grid maximiser v = {at}"), t: None, q: vec![q], p: vec![p] }),
    );
    Ok(report)
}

/// One model entering convention calibration.
#[derive(Debug, Clone)]
pub struct CalibrationCase<'a> {
    pub name: String,
    pub sys: &'a ClairautSystem,
    pub start: PhasePoint,
    pub window: Window,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationResult {
    pub name: String,
    /// Max Euler-Lagrange residual under conventions A and B (infinite when
    /// integration failed).
    pub residual_a: f64,
    pub residual_b: f64,
    /// `max |F - F_fd|` at the start point.
    pub curvature_deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationReport {
    pub selected: Convention,
    pub cases: Vec<CalibrationResult>,
    /// False when the analytic curvature disagrees with its finite-difference
    /// reconstruction on some case.
    pub cross_check_passed: bool,
}

fn full_rank_f(sys: &ClairautSystem, at: &PhasePoint) -> Result<bool> {
    if sys.split().degenerate_count() == 0 {
        return Ok(false);
    }
    Ok(sys.frame(&at.q, &at.p, None)?.curvature_inverse().full_rank())
}

/// Integrates every full-rank-F case under both conventions and selects the
/// one whose Euler-Lagrange residual stays within tolerance on all of them.
pub fn calibrate_convention(cases: &[CalibrationCase]) -> Result<CalibrationReport> {
    let mut results = Vec::new();
    let (mut a_passes, mut b_passes) = (true, true);
    let mut cross_ok = true;
    for case in cases {
        if !full_rank_f(case.sys, &case.start)? {
            continue;
        }
        let tol = case.sys.tolerances();
        let residual = |conv| match integrate(case.sys, &case.start, &case.window, None, conv) {
            Ok(tr) => tr.max_el_residual().unwrap_or(f64::INFINITY),
            Err(_) => f64::INFINITY,
        };
        let (ra, rb) = (residual(Convention::A), residual(Convention::B));
        a_passes &= ra <= tol.el_residual;
        b_passes &= rb <= tol.el_residual;
        let frame = case.sys.frame(&case.start.q, &case.start.p, None)?;
        let fd = crate::bracket::curvature_fd(case.sys, &case.start.q, &case.start.p, 1e-5)?;
        let dev = (frame.curvature() - fd).amax();
        cross_ok &= dev <= 1e-6;
        results.push(CalibrationResult { name: case.name.clone(), residual_a: ra, residual_b: rb, curvature_deviation: dev });
    }
    let selected = match (a_passes, b_passes) {
        (true, false) => Convention::A,
        (false, true) => Convention::B,
        _ => return Err(Error::CalibrationAmbiguous { a_passes, b_passes }),
    };
    Ok(CalibrationReport { selected, cases: results, cross_check_passed: cross_ok })
}

/// A point where `{X, X}_F` is far from zero.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelfBracketWitness {
    pub model: String,
    pub observable: String,
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    pub value: f64,
}

/// A point where the cyclic Jacobi sum is far from zero.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JacobiWitness {
    pub model: String,
    pub observables: [String; 3],
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    pub value: f64,
}

/// Named observable of a system: `H0`, `h_<coord>`, or an expression in `q`
/// and regular `p`.
pub fn observable(sys: &ClairautSystem, name: &str) -> Result<Box<dyn Observable>> {
    if name == "H0" {
        return Ok(Box::new(Hamiltonian));
    }
    if let Some(coord) = name.strip_prefix("h_") {
        let k = sys
            .model()
            .table()
            .coord_index(coord)
            .and_then(|k| sys.split().degenerate_position(k))
            .ok_or_else(|| Error::InvalidArgument(format!("`{name}` is not a degenerate Hamiltonian")))?;
        return Ok(Box::new(DegenerateHamiltonian(k)));
    }
    Ok(Box::new(ExprObservable::parse(sys, name)?))
}

/// `{X, X}_F` at a point.
pub fn self_bracket(sys: &ClairautSystem, conv: Convention, x: &dyn Observable, q: &[f64], p: &[f64]) -> Result<f64> {
    let frame = sys.frame(q, p, None)?;
    bracket_f(&frame, x, x, conv)
}

/// `{A, B}_F` as an observable with a finite-difference gradient.
pub fn nested<'a>(
    sys: &'a ClairautSystem,
    conv: Convention,
    a: &'a dyn Observable,
    b: &'a dyn Observable,
    step: f64,
) -> FnObservable<impl Fn(&[f64], &[f64]) -> Result<f64> + 'a> {
    FnObservable::new(move |q: &[f64], p: &[f64]| bracket_f(&sys.frame(q, p, None)?, a, b, conv), step)
}

/// `{X,{Y,Z}} + {Y,{Z,X}} + {Z,{X,Y}}` in the F-bracket, with the inner
/// brackets differentiated by central differences of step `step`.
pub fn jacobi_sum(
    sys: &ClairautSystem,
    conv: Convention,
    obs: [&dyn Observable; 3],
    q: &[f64],
    p: &[f64],
    step: f64,
) -> Result<f64> {
    let [x, y, z] = obs;
    let yz = nested(sys, conv, y, z, step);
    let zx = nested(sys, conv, z, x, step);
    let xy = nested(sys, conv, x, y, step);
    let frame = sys.frame(q, p, None)?;
    Ok(bracket_f(&frame, x, &yz, conv)? + bracket_f(&frame, y, &zx, conv)? + bracket_f(&frame, z, &xy, conv)?)
}

fn candidate_names(sys: &ClairautSystem) -> Vec<String> {
    let t = sys.model().table();
    let split = sys.split();
    let mut names = vec!["H0".to_string()];
    names.extend(split.degenerate.iter().map(|&k| format!("h_{}", t.coord_name(k))));
    names.extend(t.coords().iter().cloned());
    names.extend(split.regular.iter().map(|&k| t.momentum_name(k)));
    for &i in &split.regular {
        for c in t.coords() {
            names.push(format!("{c}*{}", t.momentum_name(i)));
        }
    }
    names
}

/// Searches random points of one system for non-Lie witnesses. Returns the
/// largest self-bracket and Jacobi sum found.
pub fn search_witnesses(
    model_name: &str,
    sys: &ClairautSystem,
    conv: Convention,
    points: usize,
    seed: u64,
) -> Result<(Option<SelfBracketWitness>, Option<JacobiWitness>)> {
    let names = candidate_names(sys);
    let obs: Vec<Box<dyn Observable>> = names.iter().map(|n| observable(sys, n)).collect::<Result<_>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, r) = (sys.n(), sys.split().rank);
    let mut best_self: Option<SelfBracketWitness> = None;
    let mut best_jacobi: Option<JacobiWitness> = None;
    for _ in 0..points {
        let q: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let p: Vec<f64> = (0..r).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let Ok(frame) = sys.frame(&q, &p, None) else { continue };
        if !frame.curvature_inverse().full_rank() {
            continue;
        }
        for (name, x) in names.iter().zip(&obs) {
            let value = bracket_f(&frame, x.as_ref(), x.as_ref(), conv)?;
            if best_self.as_ref().map_or(true, |b| value.abs() > b.value.abs()) {
                best_self = Some(SelfBracketWitness {
                    model: model_name.into(),
                    observable: name.clone(),
                    q: q.clone(),
                    p: p.clone(),
                    value,
                });
            }
        }
        for i in 0..obs.len() {
            for j in i + 1..obs.len() {
                for k in j + 1..obs.len() {
                    let triple = [obs[i].as_ref(), obs[j].as_ref(), obs[k].as_ref()];
                    let value = jacobi_sum(sys, conv, triple, &q, &p, 1e-5)?;
                    if best_jacobi.as_ref().map_or(true, |b| value.abs() > b.value.abs()) {
                        best_jacobi = Some(JacobiWitness {
                            model: model_name.into(),
                            observables: [names[i].clone(), names[j].clone(), names[k].clone()],
                            q: q.clone(),
                            p: p.clone(),
                            value,
                        });
                    }
                }
            }
        }
    }
    Ok((best_self, best_jacobi))
}

fn random_points(sys: &ClairautSystem, count: usize, seed: u64) -> Vec<(Vec<f64>, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, r) = (sys.n(), sys.split().rank);
    (0..count)
        .map(|_| {
            let q = (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect();
            let p = (0..r).map(|_| rng.gen_range(-1.0..=1.0)).collect();
            (q, p)
        })
        .collect()
}

/// Largest `|h_alpha|` and `|H0|` spread across random probes, over `count`
/// random points.
pub fn independence_spread(sys: &ClairautSystem, count: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    let m = sys.split().degenerate_count();
    let mut worst = 0.0_f64;
    for (q, p) in random_points(sys, count, seed) {
        let v1: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let v2: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let b1: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let b2: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let r1 = sys.resolve_velocities(&q, &p, &v1, None)?;
        let r2 = sys.resolve_velocities(&q, &p, &v2, None)?;
        for &alpha in &sys.split().degenerate {
            let l = sys.model().lagrangian().diff(Symbol::Vel(alpha));
            let h1 = l.eval(&sys.model().bindings(&q, &r1.velocities))?;
            let h2 = l.eval(&sys.model().bindings(&q, &r2.velocities))?;
            worst = worst.max((h1 - h2).abs());
        }
        let e1 = sys.h_physical_probe(&q, &p, &b1, &v1)?;
        let e2 = sys.h_physical_probe(&q, &p, &b2, &v2)?;
        worst = worst.max((e1 - e2).abs());
    }
    Ok(worst)
}

/// Options for [`run_suite`].
#[derive(Debug, Clone, Copy)]
pub struct SuiteOptions {
    /// Random points per pointwise check.
    pub points: usize,
    /// Points searched for non-Lie witnesses per model.
    pub witness_points: usize,
    /// Calibration window length.
    pub calibration_time: f64,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        SuiteOptions { points: 100, witness_points: 4, calibration_time: 1.0 }
    }
}

struct Prepared {
    name: String,
    spec: ModelSpec,
    sys: ClairautSystem,
    start: PhasePoint,
    window: Window,
}

fn prepare(name: &str, spec: &ModelSpec) -> Result<Prepared> {
    let sys = ClairautSystem::build(spec.model.clone(), spec.tolerances)?;
    let start = spec.initial_point(&sys)?;
    Ok(Prepared { name: name.into(), spec: spec.clone(), window: spec.window.unwrap_or_default(), sys, start })
}

fn pointwise_checks(p: &Prepared, opts: &SuiteOptions) -> VerificationReport {
    let mut rep = VerificationReport::default();
    let (sys, name) = (&p.sys, &p.name);
    let tol = sys.tolerances();
    let seed = tol.seed;
    let pts = random_points(sys, opts.points, seed);

    if sys.split().degenerate_count() > 0 {
        rep.push(match independence_spread(sys, opts.points, seed) {
            Ok(v) => Check::at_most(format!("{name}/independence"), v, tol.independence),
            Err(e) => Check::error(format!("{name}/independence"), &e),
        });
    }

    let mut antisym = 0.0_f64;
    let mut fd_dev = 0.0_f64;
    let mut failure = None;
    for (k, (q, pp)) in pts.iter().enumerate() {
        match sys.frame(q, pp, None) {
            Ok(f) => {
                let c = f.curvature();
                antisym = antisym.max((c + c.transpose()).amax());
                if k < 10 {
                    match crate::bracket::curvature_fd(sys, q, pp, 1e-5) {
                        Ok(fd) => fd_dev = fd_dev.max((c - fd).amax()),
                        Err(e) => failure = Some(e),
                    }
                }
            }
            Err(e) => failure = Some(e),
        }
    }
    match failure {
        None => {
            rep.push(Check::at_most(format!("{name}/curvature_antisymmetry"), antisym, 1e-12));
            rep.push(Check::at_most(format!("{name}/curvature_fd"), fd_dev, 1e-6));
        }
        Some(e) => rep.push(Check::error(format!("{name}/curvature"), &e)),
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(7));
    let n = sys.n();
    let general = (|| -> Result<f64> {
        let mut worst = 0.0_f64;
        for (q, _) in pts.iter().take(opts.points.min(20)) {
            let c: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect();
            let pbar: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect();
            let r = clairaut_residual(sys.model(), |q, pb| sys.h_general(q, pb, &c), q, &pbar, tol.fd_step)?;
            worst = worst.max(r.abs());
        }
        Ok(worst)
    })();
    rep.push(match general {
        Ok(v) => Check::at_most(format!("{name}/clairaut_general"), v, 1e-6),
        Err(e) => Check::error(format!("{name}/clairaut_general"), &e),
    });

    if sys.split().is_nonsingular() {
        let standard = (|| -> Result<(f64, f64)> {
            let (mut cl, mut env) = (0.0_f64, 0.0_f64);
            for (q, pp) in &pts {
                let r = clairaut_residual(sys.model(), |q, pb| sys.h_standard(q, pb), q, pp, tol.fd_step)?;
                cl = cl.max(r.abs());
                env = env.max((sys.h_physical(q, pp)? - sys.h_standard(q, pp)?).abs());
            }
            Ok((cl, env))
        })();
        match standard {
            Ok((cl, env)) => {
                rep.push(Check::at_most(format!("{name}/clairaut_standard"), cl, 1e-6));
                rep.push(Check::at_most(format!("{name}/envelope"), env, 1e-10));
            }
            Err(e) => rep.push(Check::error(format!("{name}/clairaut_standard"), &e)),
        }
        if n == 1 {
            let r = legendre_sup_check(sys, p.start.q[0], p.start.p[0]);
            rep.push(match r {
                Ok(r) => {
                    let mut c = r.checks.into_iter().next().expect("one check");
                    c.name = format!("{name}/{}", c.name);
                    c
                }
                Err(e) => Check::error(format!("{name}/legendre_sup"), &e),
            });
        }
    }
    rep
}

fn trajectory_checks(p: &Prepared, conv: Convention) -> VerificationReport {
    let mut rep = VerificationReport::default();
    let (sys, name) = (&p.sys, &p.name);
    let tol = sys.tolerances();
    let gauge = match p.spec.gauge_choice(sys) {
        Ok(g) => g,
        Err(e) => {
            rep.push(Check::error(format!("{name}/gauge"), &e));
            return rep;
        }
    };
    let m = sys.split().degenerate_count();
    let full_rank = matches!(full_rank_f(sys, &p.start), Ok(true));
    let gauge = gauge.or_else(|| (m > 0 && !full_rank).then(|| GaugeChoice::zeros(m)));
    let traj = match integrate(sys, &p.start, &p.window, gauge.as_ref(), conv) {
        Ok(t) => t,
        Err(e) => {
            rep.push(Check::error(format!("{name}/integrate"), &e.error));
            return rep;
        }
    };
    let el = traj.max_el_residual().unwrap_or(f64::NAN);
    rep.push(Check::at_most(format!("{name}/el_residual"), el, tol.el_residual));
    rep.push(Check::at_most(format!("{name}/h0_drift"), traj.max_h0_drift(), 1e-8));
    match degenerate_form_gap(sys, &traj) {
        Ok(g) if m > 0 => rep.push(Check::at_most(format!("{name}/degenerate_split_form"), g, 1e-6)),
        Ok(_) => {}
        Err(e) => rep.push(Check::error(format!("{name}/degenerate_split_form"), &e)),
    }

    if sys.split().is_nonsingular() {
        let w = Window { t1: p.window.t0 + 1.0, ..p.window };
        rep.push(match nonsingular_equivalence(sys, &p.start, &w) {
            Ok(r) => {
                let mut c = r.checks.into_iter().next().expect("one check");
                c.name = format!("{name}/{}", c.name);
                c
            }
            Err(e) => Check::error(format!("{name}/nonsingular_equivalence"), &e),
        });
    }

    if m > 0 && !full_rank {
        // gauge invariance of the regular momenta
        let mut alt = GaugeChoice::zeros(m);
        let ok = (0..m).try_for_each(|k| alt.set(k, Expr::func(crate::expr::Func::Sin, Expr::sym(Symbol::Time)), sys));
        let other = ok.and_then(|_| Ok(integrate(sys, &p.start, &p.window, Some(&alt), conv)?));
        rep.push(match other {
            Ok(t2) => {
                let d = traj
                    .samples
                    .iter()
                    .zip(&t2.samples)
                    .flat_map(|(a, b)| a.p.iter().zip(&b.p).map(|(x, y)| (x - y).abs()))
                    .fold(0.0, f64::max);
                Check::at_most(format!("{name}/gauge_invariance"), d, 1e-8)
            }
            Err(e) => Check::error(format!("{name}/gauge_invariance"), &e),
        });
    }

    if full_rank {
        let t = sys.model().table();
        let split = sys.split();
        let mut xs: Vec<(String, bool)> = Vec::new();
        xs.extend(split.regular.iter().map(|&k| (t.coord_name(k).to_string(), true)));
        xs.extend(split.regular.iter().map(|&k| (t.momentum_name(k), true)));
        // H0 generally depends on q^alpha; the bracket form only holds
        // without regular pairs in that case
        xs.push(("H0".into(), split.rank == 0));
        xs.extend(split.degenerate.iter().map(|&k| (t.coord_name(k).to_string(), false)));
        for (x, assert_bracket) in xs {
            let r = observable(sys, &x).and_then(|o| evolve_observable(sys, o.as_ref(), &traj));
            match r {
                Ok(ev) => {
                    let b = ev.max_bracket_deviation.unwrap_or(f64::NAN);
                    let c = Check::at_most(format!("{name}/dx_bracket/{x}"), b, 1e-5);
                    rep.push(if assert_bracket { c } else { c.reported() });
                    rep.push(Check::at_most(format!("{name}/dx_flow/{x}"), ev.max_flow_deviation, 1e-5));
                }
                Err(e) => rep.push(Check::error(format!("{name}/dx/{x}"), &e)),
            }
        }
    }
    rep
}

/// Runs every check on every model. Models are checked concurrently.
pub fn run_suite(models: &[(String, ModelSpec)], opts: &SuiteOptions) -> VerificationReport {
    let mut report = VerificationReport::default();
    let mut prepared = Vec::new();
    for (name, spec) in models {
        match prepare(name, spec) {
            Ok(p) => prepared.push(p),
            Err(e) => report.push(Check::error(format!("{name}/build"), &e)),
        }
    }

    let cases: Vec<CalibrationCase> = prepared
        .iter()
        .map(|p| CalibrationCase {
            name: p.name.clone(),
            sys: &p.sys,
            start: p.start.clone(),
            window: Window { t0: p.window.t0, t1: p.window.t0 + opts.calibration_time, dt: p.window.dt },
        })
        .collect();
    let calibrated = calibrate_convention(&cases);
    let conv = match &calibrated {
        Ok(c) => {
            let worst_fd = c.cases.iter().map(|r| r.curvature_deviation).fold(0.0, f64::max);
            report.push(
                Check::at_most("calibration/curvature_cross_check", worst_fd, 1e-6)
                    .with_note(format!("selected convention {}", c.selected.label())),
            );
            for r in &c.cases {
                let (pass, fail) = match c.selected {
                    Convention::A => (r.residual_a, r.residual_b),
                    Convention::B => (r.residual_b, r.residual_a),
                };
                report.push(Check::at_most(format!("calibration/{}", r.name), pass, 1e-6));
                report.push(Check::exceeds(format!("calibration/{}/rejected", r.name), fail, 1e-6));
            }
            c.selected
        }
        Err(e) => {
            report.push(Check::error("calibration", e));
            Convention::B
        }
    };
    report.convention = calibrated.as_ref().ok().map(|c| c.selected);

    let per_model: Vec<VerificationReport> = std::thread::scope(|s| {
        let handles: Vec<_> = prepared
            .iter()
            .map(|p| {
                s.spawn(move || {
                    let conv = match p.spec.convention {
                        ConventionChoice::Fixed(c) => c,
                        ConventionChoice::Auto => conv,
                    };
                    let mut r = pointwise_checks(p, opts);
                    r.extend(trajectory_checks(p, conv));
                    r
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("check thread panicked")).collect()
    });
    for r in per_model {
        report.extend(r);
    }

    let mut best_self: Option<SelfBracketWitness> = None;
    let mut best_jacobi: Option<JacobiWitness> = None;
    for p in &prepared {
        if p.sys.split().rank == 0 || !matches!(full_rank_f(&p.sys, &p.start), Ok(true)) {
            continue;
        }
        match search_witnesses(&p.name, &p.sys, conv, opts.witness_points, p.sys.tolerances().seed) {
            Ok((s, j)) => {
                if let Some(s) = s.filter(|s| best_self.as_ref().map_or(true, |b| s.value.abs() > b.value.abs())) {
                    best_self = Some(s);
                }
                if let Some(j) = j.filter(|j| best_jacobi.as_ref().map_or(true, |b| j.value.abs() > b.value.abs())) {
                    best_jacobi = Some(j);
                }
            }
            Err(e) => report.push(Check::error(format!("{}/witness_search", p.name), &e)),
        }
    }
    let witness = |model: &str, what: String, q: &[f64], p: &[f64]| Witness {
        description: format!("{model}: {what}"),
        t: None,
        q: q.to_vec(),
        p: p.to_vec(),
    };
    let self_check = match &best_self {
        Some(w) => Check::exceeds("non_lie/self_bracket", w.value.abs(), 1e-3)
            .with_witness(witness(&w.model, format!("{{{0}, {0}}}_F", w.observable), &w.q, &w.p)),
        None => Check::exceeds("non_lie/self_bracket", 0.0, 1e-3).with_note("no model with regular pairs and full-rank F"),
    };
    report.push(self_check);
    let jacobi_check = match &best_jacobi {
        Some(w) => Check::exceeds("non_lie/jacobi", w.value.abs(), 1e-3)
            .with_witness(witness(&w.model, format!("Jacobi({})", w.observables.join(", ")), &w.q, &w.p)),
        None => Check::exceeds("non_lie/jacobi", 0.0, 1e-3).with_note("no model with regular pairs and full-rank F"),
    };
    report.push(jacobi_check);
    report.self_bracket_witness = best_self;
    report.jacobi_witness = best_jacobi;
    report
}
