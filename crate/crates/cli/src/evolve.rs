use crate::error::{CliError, CliResult};
use crate::input::ModelSource;
use crate::metadata::{curvature_rank, gauge_ignored_warning, metadata, resolve_convention, RunMetadata};
use clairaut::evolution::integrate;
use clairaut::model::ConventionChoice;
use clairaut::{ClairautSystem, GaugeChoice, Trajectory};
use serde::Serialize;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Default)]
pub struct EvolveOptions {
    pub convention: Option<ConventionChoice>,
    pub t1: Option<f64>,
    pub dt: Option<f64>,
}

/// Sidecar written next to the CSV.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvolveMetadata {
    #[serde(flatten)]
    pub run: RunMetadata,
    pub columns: Vec<String>,
    pub samples: usize,
    pub complete: bool,
    pub error: Option<String>,
    pub max_el_residual: Option<f64>,
    pub max_h0_drift: f64,
    pub gauge: Vec<String>,
    pub warnings: Vec<String>,
}

#[derive(Debug)]
pub struct EvolveOutput {
    pub csv: String,
    pub metadata: EvolveMetadata,
    pub trajectory: Trajectory,
    /// Set when integration stopped early; the CSV then holds the partial
    /// trajectory.
    pub error: Option<CliError>,
}

/// `t,q..,p_<regular>,v_<degenerate>,H0,el_residual_max`.
pub fn csv_header(sys: &ClairautSystem) -> Vec<String> {
    let t = sys.model().table();
    let split = sys.split();
    let mut cols = vec!["t".to_string()];
    cols.extend(t.coords().iter().cloned());
    cols.extend(split.regular.iter().map(|&k| t.momentum_name(k)));
    cols.extend(split.degenerate.iter().map(|&k| t.velocity_name(k)));
    cols.push("H0".into());
    cols.push("el_residual_max".into());
    cols
}

/// Shortest round-trip representation in exponent form.
pub fn format_float(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else {
        format!("{x:e}")
    }
}

pub fn render_csv(header: &[String], traj: &Trajectory) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for s in &traj.samples {
        let mut row = vec![format_float(s.t)];
        row.extend(s.q.iter().chain(&s.p).chain(&s.v).map(|&x| format_float(x)));
        row.push(format_float(s.h0));
        row.push(format_float(s.el_residual.unwrap_or(f64::NAN)));
        let _ = writeln!(out, "{}", row.join(","));
    }
    out
}

pub fn evolve(src: &ModelSource, opts: &EvolveOptions) -> CliResult<EvolveOutput> {
    let sys = ClairautSystem::build(src.spec.model.clone(), src.spec.tolerances)?;
    let start = src.spec.initial_point(&sys)?;
    let rank = curvature_rank(src, &sys)?;
    let mut meta = metadata(src, &sys, &rank);
    let mut window = src.spec.window.unwrap_or_default();
    if let Some(t1) = opts.t1 {
        window.t1 = t1;
    }
    if let Some(dt) = opts.dt {
        window.dt = dt;
    }
    meta.window = Some(window.into());
    let (conv, source) = resolve_convention(src, opts.convention)?;
    meta.convention = Some(conv);
    meta.convention_source = Some(source);

    let t = sys.model().table();
    let split = sys.split();
    let mut warnings = Vec::new();
    let gauge: Option<GaugeChoice> = if rank.gauge_count == 0 {
        warnings.extend(gauge_ignored_warning(src, &rank));
        None
    } else if let Some(given) = src.spec.gauge_choice(&sys)? {
        Some(given)
    } else {
        let names: Vec<String> = split.degenerate.iter().map(|&k| format!("{} = 0", t.velocity_name(k))).collect();
        warnings.push(format!(
            "no [gauge] section for {} gauge direction(s); using {}",
            rank.gauge_count,
            names.join(", ")
        ));
        Some(GaugeChoice::zeros(split.degenerate_count()))
    };
    let gauge_text: Vec<String> = match &gauge {
        Some(g) => (0..g.len())
            .map(|pos| format!("{} = {}", t.velocity_name(split.degenerate[pos]), g.expr(pos).display(t)))
            .collect(),
        None => Vec::new(),
    };

    let (trajectory, error) = match integrate(&sys, &start, &window, gauge.as_ref(), conv) {
        Ok(tr) => (tr, None),
        Err(e) => (e.partial, Some(CliError::Core(e.error))),
    };
    let header = csv_header(&sys);
    let csv = render_csv(&header, &trajectory);
    let metadata = EvolveMetadata {
        run: meta,
        columns: header,
        samples: trajectory.samples.len(),
        complete: error.is_none(),
        error: error.as_ref().map(CliError::line),
        max_el_residual: trajectory.max_el_residual(),
        max_h0_drift: trajectory.max_h0_drift(),
        gauge: gauge_text,
        warnings,
    };
    Ok(EvolveOutput { csv, metadata, trajectory, error })
}

/// `run.csv` -> `run.meta.json`.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("meta.json")
}

/// Writes the CSV and its sidecar; returns the sidecar path.
pub fn write_outputs(out: &EvolveOutput, csv_path: &Path) -> CliResult<PathBuf> {
    std::fs::write(csv_path, &out.csv).map_err(|e| CliError::io(csv_path, e))?;
    let meta_path = sidecar_path(csv_path);
    let mut json = serde_json::to_string_pretty(&out.metadata).expect("metadata serializes");
    json.push('\n');
    std::fs::write(&meta_path, json).map_err(|e| CliError::io(&meta_path, e))?;
    Ok(meta_path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use clairaut::Convention;

    fn short(name: &str) -> EvolveOutput {
        let src = ModelSource::load(&format!("corpus:{name}")).unwrap();
        let opts = EvolveOptions { convention: Some(ConventionChoice::Fixed(Convention::B)), t1: Some(0.1), dt: Some(0.01) };
        evolve(&src, &opts).unwrap()
    }

    #[test]
    fn oscillator_csv() {
        let out = short("oscillator");
        assert!(out.error.is_none());
        let mut lines = out.csv.lines();
        assert_eq!(lines.next(), Some("t,q1,p_q1,H0,el_residual_max"));
        assert_eq!(lines.count(), 11);
        assert!(out.metadata.complete);
        assert!(out.metadata.warnings.is_empty());
        assert_eq!(out.metadata.run.convention, Some(Convention::B));
    }

    #[test]
    fn mixed_columns() {
        let out = short("mixed_3d");
        assert_eq!(out.csv.lines().next(), Some("t,q1,q2,q3,p_q3,v_q1,v_q2,H0,el_residual_max"));
    }

    #[test]
    fn gauge_warnings() {
        let out = short("rank1_gauge");
        assert!(out.metadata.warnings.is_empty());
        assert_eq!(out.metadata.gauge, vec!["v_q2 = 0".to_string()]);

        let mut src = ModelSource::load("corpus:rank1_gauge").unwrap();
        src.spec.gauge.clear();
        let opts = EvolveOptions { t1: Some(0.1), dt: Some(0.01), ..Default::default() };
        let out = evolve(&src, &opts).unwrap();
        assert_eq!(out.metadata.warnings.len(), 1);
        assert!(out.metadata.warnings[0].contains("v_q2 = 0"));

        let mut src = ModelSource::load("corpus:first_order").unwrap();
        src.override_gauge(&["v1 = 1".into()]).unwrap();
        let out = evolve(&src, &EvolveOptions { t1: Some(0.1), dt: Some(0.01), ..Default::default() }).unwrap();
        assert!(out.metadata.warnings[0].starts_with("gauge ignored"));
        assert_eq!(out.metadata.run.convention_source, Some("calibrated"));
    }

    #[test]
    fn float_format_round_trips() {
        for x in [0.0, -1.5, 1e-300, 0.1 + 0.2, std::f64::consts::PI] {
            assert_eq!(format_float(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(format_float(f64::NAN), "nan");
    }

    #[test]
    fn sidecar_name() {
        assert_eq!(sidecar_path(Path::new("out/run.csv")), PathBuf::from("out/run.meta.json"));
    }
}
