use crate::error::CliResult;
use crate::input::ModelSource;
use crate::metadata::{TOOL, VERSION};
use clairaut::verification::{run_suite, SuiteOptions, VerificationReport};
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelEntry {
    pub name: String,
    pub model_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyOutput {
    pub tool: &'static str,
    pub version: &'static str,
    pub models: Vec<ModelEntry>,
    pub passed: bool,
    pub failures: Vec<String>,
    #[serde(flatten)]
    pub report: VerificationReport,
}

/// Runs the suite on the built-in corpus followed by `extra`.
pub fn verify(extra: Vec<ModelSource>, opts: &SuiteOptions) -> CliResult<VerifyOutput> {
    let mut models = ModelSource::builtin_corpus()?;
    for m in extra {
        let mut m = m;
        if models.iter().any(|x| x.label == m.label) {
            m.label = format!("user:{}", m.label);
        }
        models.push(m);
    }
    let named: Vec<(String, clairaut::ModelSpec)> = models.iter().map(|m| (m.label.clone(), m.spec.clone())).collect();
    let report = run_suite(&named, opts);
    Ok(VerifyOutput {
        tool: TOOL,
        version: VERSION,
        models: models.iter().map(|m| ModelEntry { name: m.label.clone(), model_hash: m.hash() }).collect(),
        passed: report.passed(),
        failures: report.failures().map(|c| c.name.clone()).collect(),
        report,
    })
}
