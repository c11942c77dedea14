//! Built-in example models.

use crate::error::{Error, Result};
use crate::model::ModelSpec;

const MODELS: &[(&str, &str)] = &[
    ("free_particle", include_str!("../corpus/free_particle.model")),
    ("oscillator", include_str!("../corpus/oscillator.model")),
    ("quartic", include_str!("../corpus/quartic.model")),
    ("rank1_gauge", include_str!("../corpus/rank1_gauge.model")),
    ("first_order", include_str!("../corpus/first_order.model")),
    ("first_order_4d", include_str!("../corpus/first_order_4d.model")),
    ("mixed_3d", include_str!("../corpus/mixed_3d.model")),
];

pub fn names() -> impl Iterator<Item = &'static str> {
    MODELS.iter().map(|(n, _)| *n)
}

pub fn source(name: &str) -> Option<&'static str> {
    MODELS.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

pub fn load(name: &str) -> Result<ModelSpec> {
    let text = source(name).ok_or_else(|| Error::InvalidArgument(format!("no built-in model named `{name}`")))?;
    ModelSpec::parse(text)
}

/// Every built-in model, parsed, in a fixed order.
pub fn all() -> Result<Vec<(String, ModelSpec)>> {
    names().map(|n| Ok((n.to_string(), load(n)?))).collect()
}
