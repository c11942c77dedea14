use crate::error::CliResult;
use crate::input::ModelSource;
use clairaut::model::{ConventionChoice, Window};
use clairaut::verification::{calibrate_convention, CalibrationCase};
use clairaut::{ClairautSystem, Convention, PhasePoint, Tolerances};
use serde::Serialize;

pub const TOOL: &str = "clairaut";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitSummary {
    pub regular: Vec<String>,
    pub degenerate: Vec<String>,
    pub condition_number: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WindowSummary {
    pub t0: f64,
    pub t1: f64,
    pub dt: f64,
}

impl From<Window> for WindowSummary {
    fn from(w: Window) -> Self {
        WindowSummary { t0: w.t0, t1: w.t1, dt: w.dt }
    }
}

/// Provenance attached to every artifact.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMetadata {
    pub tool: &'static str,
    pub version: &'static str,
    pub model: String,
    pub model_hash: String,
    pub coordinates: Vec<String>,
    pub n: usize,
    pub r: usize,
    pub split: SplitSummary,
    #[serde(rename = "rank_F")]
    pub rank_f: usize,
    pub gauge_count: usize,
    pub convention: Option<Convention>,
    pub convention_source: Option<&'static str>,
    pub window: Option<WindowSummary>,
    pub tolerances: Tolerances,
}

/// Rank of `F` and the phase point where it was evaluated.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvatureRank {
    #[serde(rename = "rank_F")]
    pub rank_f: usize,
    pub gauge_count: usize,
    pub q: Vec<f64>,
    pub p: Vec<f64>,
}

/// Evaluates `rank F` at the model's initial point, or at the first rank
/// sample when the model has no usable initial conditions.
pub fn curvature_rank(src: &ModelSource, sys: &ClairautSystem) -> CliResult<CurvatureRank> {
    let (q, p) = match src.spec.initial_point(sys) {
        Ok(PhasePoint { q, p, .. }) => (q, p),
        Err(_) => {
            let s = &sys.samples()[0];
            (s.q.clone(), sys.momenta_from_velocities(&s.q, &s.v)?)
        }
    };
    let frame = sys.frame(&q, &p, None)?;
    let rank_f = frame.curvature_inverse().rank;
    let gauge_count = sys.split().degenerate_count() - rank_f;
    Ok(CurvatureRank { rank_f, gauge_count, q, p })
}

/// Warning for a `[gauge]` section on a model without gauge freedom.
pub fn gauge_ignored_warning(src: &ModelSource, rank: &CurvatureRank) -> Option<String> {
    (rank.gauge_count == 0 && !src.spec.gauge.is_empty())
        .then(|| format!("gauge ignored: the model has no gauge freedom (rank_F = {})", rank.rank_f))
}

pub fn metadata(src: &ModelSource, sys: &ClairautSystem, rank: &CurvatureRank) -> RunMetadata {
    let t = sys.model().table();
    let split = sys.split();
    let names = |ks: &[usize]| ks.iter().map(|&k| t.coord_name(k).to_string()).collect::<Vec<_>>();
    RunMetadata {
        tool: TOOL,
        version: VERSION,
        model: src.label.clone(),
        model_hash: src.hash(),
        coordinates: t.coords().to_vec(),
        n: split.n,
        r: split.rank,
        split: SplitSummary {
            regular: names(&split.regular),
            degenerate: names(&split.degenerate),
            condition_number: split.condition_number,
        },
        rank_f: rank.rank_f,
        gauge_count: rank.gauge_count,
        convention: None,
        convention_source: None,
        window: src.spec.window.map(WindowSummary::from),
        tolerances: *sys.tolerances(),
    }
}

/// Convention to integrate with: the command-line override, then the model
/// file, then calibration on the built-in corpus.
pub fn resolve_convention(
    src: &ModelSource,
    cli: Option<ConventionChoice>,
) -> CliResult<(Convention, &'static str)> {
    match cli.unwrap_or(src.spec.convention) {
        ConventionChoice::Fixed(c) => Ok((c, "fixed")),
        ConventionChoice::Auto => Ok((calibrated_convention()?, "calibrated")),
    }
}

pub fn calibrated_convention() -> CliResult<Convention> {
    let corpus = ModelSource::builtin_corpus()?;
    let mut prepared = Vec::new();
    for m in &corpus {
        let sys = ClairautSystem::build(m.spec.model.clone(), m.spec.tolerances)?;
        let start = m.spec.initial_point(&sys)?;
        let w = m.spec.window.unwrap_or_default();
        prepared.push((m.label.clone(), sys, start, Window { t0: w.t0, t1: w.t0 + 1.0, dt: w.dt }));
    }
    let cases: Vec<CalibrationCase> = prepared
        .iter()
        .map(|(name, sys, start, window)| CalibrationCase {
            name: name.clone(),
            sys,
            start: start.clone(),
            window: *window,
        })
        .collect();
    Ok(calibrate_convention(&cases)?.selected)
}
