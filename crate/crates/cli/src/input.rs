use crate::error::{CliError, CliResult};
use clairaut::expr::{parse, Scope};
use clairaut::model::ModelSpec;
use clairaut::{corpus, Error};
use sha2::{Digest, Sha256};
use std::path::Path;

/// Prefix selecting a built-in model instead of a file.
pub const CORPUS_PREFIX: &str = "corpus:";

/// A parsed model together with the text it came from.
#[derive(Debug, Clone)]
pub struct ModelSource {
    pub label: String,
    pub text: String,
    pub spec: ModelSpec,
}

impl ModelSource {
    pub fn parse(label: impl Into<String>, text: impl Into<String>) -> CliResult<ModelSource> {
        let text = text.into();
        let spec = ModelSpec::parse(&text)?;
        Ok(ModelSource { label: label.into(), text, spec })
    }

    /// Reads `corpus:<name>` from the built-in corpus, anything else from disk.
    pub fn load(arg: &str) -> CliResult<ModelSource> {
        if let Some(name) = arg.strip_prefix(CORPUS_PREFIX) {
            let text = corpus::source(name)
                .ok_or_else(|| Error::InvalidArgument(format!("no built-in model named `{name}`")))?;
            return ModelSource::parse(name, text);
        }
        let path = Path::new(arg);
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let label = path.file_stem().map_or_else(|| arg.to_string(), |s| s.to_string_lossy().into_owned());
        ModelSource::parse(label, text)
    }

    pub fn builtin_corpus() -> CliResult<Vec<ModelSource>> {
        corpus::names().map(|n| ModelSource::load(&format!("{CORPUS_PREFIX}{n}"))).collect()
    }

    /// Hex SHA-256 of the model text.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.text.as_bytes()))
    }

    /// Replaces or adds gauge assignments given as `v_name=expr`.
    pub fn override_gauge(&mut self, assignments: &[String]) -> CliResult<()> {
        let table = self.spec.model.table().clone();
        for a in assignments {
            let (name, expr) = split_assignment(a)?;
            if table.velocity_index(name).is_none() {
                return Err(Error::InvalidArgument(format!("gauge target `{name}` is not a velocity")).into());
            }
            let e = parse(expr, &table, Scope::GAUGE)
                .map_err(|source| Error::Parse { context: format!("gauge {name}"), source })?;
            self.spec.gauge.retain(|(n, _)| table.velocity_index(n) != table.velocity_index(name));
            self.spec.gauge.push((name.to_string(), e));
        }
        Ok(())
    }
}

/// Splits `name=value` around the first `=`.
pub fn split_assignment(s: &str) -> CliResult<(&str, &str)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("expected NAME=VALUE, got `{s}`")))?;
    let (k, v) = (k.trim(), v.trim());
    if k.is_empty() || v.is_empty() {
        return Err(CliError::Usage(format!("expected NAME=VALUE, got `{s}`")));
    }
    Ok((k, v))
}

pub fn parse_number(name: &str, s: &str) -> CliResult<f64> {
    let x: f64 = s
        .trim()
        .parse()
        .map_err(|_| CliError::Usage(format!("`{name}`: `{s}` is not a number")))?;
    if !x.is_finite() {
        return Err(CliError::Usage(format!("`{name}`: `{s}` is not finite")));
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_and_hash() {
        let m = ModelSource::load("corpus:oscillator").unwrap();
        assert_eq!(m.label, "oscillator");
        assert_eq!(m.hash().len(), 64);
        assert_eq!(m.hash(), ModelSource::load("corpus:oscillator").unwrap().hash());
        assert!(ModelSource::load("corpus:nope").is_err());
    }

    #[test]
    fn missing_file_is_io() {
        let e = ModelSource::load("/nonexistent/x.model").unwrap_err();
        assert_eq!(e.kind(), "Io");
        assert_eq!(e.code(), 1);
    }

    #[test]
    fn gauge_override() {
        let mut m = ModelSource::load("corpus:rank1_gauge").unwrap();
        m.override_gauge(&["v2 = sin(t)".into()]).unwrap();
        assert_eq!(m.spec.gauge.len(), 1);
        assert!(m.override_gauge(&["q2=0".into()]).is_err());
        assert!(m.override_gauge(&["v2".into()]).is_err());
    }

    #[test]
    fn assignments() {
        assert_eq!(split_assignment(" a = 1 ").unwrap(), ("a", "1"));
        assert!(parse_number("x", "inf").is_err());
        assert!(parse_number("x", "z").is_err());
    }
}
