use crate::error::CliResult;
use crate::input::ModelSource;
use crate::metadata::{curvature_rank, gauge_ignored_warning, metadata, CurvatureRank, RunMetadata};
use clairaut::analysis::SamplePoint;
use clairaut::ClairautSystem;
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalyzeReport {
    pub n: usize,
    pub r: usize,
    /// Regular coordinate names.
    pub regular: Vec<String>,
    /// Degenerate coordinate names.
    pub degenerate: Vec<String>,
    /// One-based positions of the regular coordinates.
    pub regular_indices: Vec<usize>,
    /// One-based positions of the degenerate coordinates.
    pub degenerate_indices: Vec<usize>,
    pub condition_number: f64,
    pub sample_points: Vec<SamplePoint>,
    #[serde(rename = "rank_F")]
    pub rank_f: usize,
    pub gauge_count: usize,
    pub rank_f_point: CurvatureRank,
    pub warnings: Vec<String>,
    pub metadata: RunMetadata,
}

pub fn analyze(src: &ModelSource) -> CliResult<AnalyzeReport> {
    let sys = ClairautSystem::build(src.spec.model.clone(), src.spec.tolerances)?;
    let rank = curvature_rank(src, &sys)?;
    let meta = metadata(src, &sys, &rank);
    let split = sys.split();
    let one_based = |ks: &[usize]| ks.iter().map(|k| k + 1).collect::<Vec<_>>();
    Ok(AnalyzeReport {
        n: split.n,
        r: split.rank,
        regular: meta.split.regular.clone(),
        degenerate: meta.split.degenerate.clone(),
        regular_indices: one_based(&split.regular),
        degenerate_indices: one_based(&split.degenerate),
        condition_number: split.condition_number,
        sample_points: sys.samples().to_vec(),
        rank_f: rank.rank_f,
        gauge_count: rank.gauge_count,
        warnings: gauge_ignored_warning(src, &rank).into_iter().collect(),
        rank_f_point: rank,
        metadata: meta,
    })
}
