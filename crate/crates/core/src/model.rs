//! Lagrangian models and the bracketed-section model file format.
//!
//! ```text
//! [coordinates] q1 q2
//! [parameters]  k = 1.0
//! [lagrangian]  0.5*(d(q1) - q2)^2
//! [initial]     q1 = 0  q2 = 1  v1 = 1  v2 = 0
//! [gauge]       v2 = 0
//! [integrate]   t0 = 0  t1 = 10  dt = 1e-3
//! [options]     convention = auto  seed = 42
//! ```
//!
//! A section runs from its header to the next header and may span lines.
//! `#` starts a comment. Gauge assignments are separated by newlines or `;`,
//! all other assignment sections by whitespace.

use crate::bracket::Convention;
use crate::config::Tolerances;
use crate::error::{Error, Result};
use crate::evolution::GaugeChoice;
use crate::expr::{parse, Expr, Scope, SliceBindings, Symbol, SymbolTable};
use crate::transform::{ClairautSystem, PhasePoint};
use std::path::Path;

#[derive(Debug, Clone)]
pub struct Model {
    table: SymbolTable,
    lagrangian: Expr,
    params: Vec<f64>,
}

impl Model {
    pub fn new<S: AsRef<str>>(coords: &[S], params: &[(S, f64)], lagrangian: &str) -> Result<Model> {
        let table = SymbolTable::new(coords, params)?;
        let expr = parse(lagrangian, &table, Scope::LAGRANGIAN)
            .map_err(|source| Error::Parse { context: "lagrangian".into(), source })?;
        Model::from_parts(table, expr)
    }

    pub fn from_parts(table: SymbolTable, lagrangian: Expr) -> Result<Model> {
        if let Some(s) = lagrangian
            .symbols()
            .into_iter()
            .find(|s| matches!(s, Symbol::Mom(_) | Symbol::Time))
        {
            return Err(Error::InvalidArgument(format!(
                "Lagrangian may not depend on {}",
                table.render(s)
            )));
        }
        let params = table.param_values();
        Ok(Model { table, lagrangian, params })
    }

    pub fn n(&self) -> usize {
        self.table.n()
    }

    pub fn table(&self) -> &SymbolTable {
        &self.table
    }

    pub fn lagrangian(&self) -> &Expr {
        &self.lagrangian
    }

    pub fn params(&self) -> Vec<f64> {
        self.params.clone()
    }

    pub fn param_slice(&self) -> &[f64] {
        &self.params
    }

    pub fn bindings<'a>(&'a self, q: &'a [f64], v: &'a [f64]) -> SliceBindings<'a> {
        SliceBindings { q, v, params: &self.params, ..Default::default() }
    }

    pub fn lagrangian_at(&self, q: &[f64], v: &[f64]) -> Result<f64> {
        Ok(self.lagrangian.eval(&self.bindings(q, v))?)
    }

    /// Lagrangian rendered back into the input grammar.
    pub fn lagrangian_text(&self) -> String {
        self.lagrangian.display(&self.table).to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConventionChoice {
    /// Select by calibration against the Euler-Lagrange oracle.
    Auto,
    Fixed(Convention),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub t0: f64,
    pub t1: f64,
    pub dt: f64,
}

impl Default for Window {
    fn default() -> Self {
        Window { t0: 0.0, t1: 10.0, dt: 1e-3 }
    }
}

/// Everything a model file can say.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub model: Model,
    /// `[initial]` entries in file order.
    pub initial: Vec<(String, f64)>,
    /// `[gauge]` entries: velocity name and expression.
    pub gauge: Vec<(String, Expr)>,
    pub window: Option<Window>,
    pub convention: ConventionChoice,
    pub tolerances: Tolerances,
}

struct Section {
    name: String,
    line: usize,
    /// (line number, column of first char, text)
    body: Vec<(usize, usize, String)>,
}

const SECTIONS: &[&str] = &["coordinates", "parameters", "lagrangian", "initial", "gauge", "integrate", "options"];

fn file_err(line: usize, message: impl Into<String>) -> Error {
    Error::ModelFile { line, message: message.into() }
}

fn split_sections(text: &str) -> Result<Vec<Section>> {
    let mut out: Vec<Section> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("");
        let trimmed = content.trim_start();
        if let Some(rest) = trimmed.strip_prefix('[') {
            let close = rest.find(']').ok_or_else(|| file_err(line, "unterminated section header"))?;
            let name = rest[..close].trim().to_string();
            if !SECTIONS.contains(&name.as_str()) {
                return Err(file_err(line, format!("unknown section [{name}]")));
            }
            if out.iter().any(|s| s.name == name) {
                return Err(file_err(line, format!("section [{name}] appears twice")));
            }
            let offset = content.len() - trimmed.len() + 1 + close + 1;
            let body_text = content[offset..].to_string();
            let col = content[..offset].chars().count() + 1;
            out.push(Section { name, line, body: vec![(line, col, body_text)] });
        } else if let Some(current) = out.last_mut() {
            current.body.push((line, 1, content.to_string()));
        } else if !trimmed.trim().is_empty() {
            return Err(file_err(line, "content outside of any section"));
        }
    }
    Ok(out)
}

/// Whitespace-separated `key = value` items.
fn assignments(section: &Section) -> Result<Vec<(usize, String, String)>> {
    let mut toks = Vec::new();
    for (line, _, text) in &section.body {
        for t in text.replace('=', " = ").split_whitespace() {
            toks.push((*line, t.to_string()));
        }
    }
    let mut out = Vec::new();
    let mut it = toks.into_iter();
    while let Some((line, key)) = it.next() {
        match (it.next(), it.next()) {
            (Some((_, eq)), Some((_, value))) if eq == "=" && value != "=" => out.push((line, key, value)),
            _ => return Err(file_err(line, format!("expected `{key} = <value>` in [{}]", section.name))),
        }
    }
    Ok(out)
}

fn number(line: usize, key: &str, value: &str) -> Result<f64> {
    value
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| file_err(line, format!("`{key}` expects a finite number, got `{value}`")))
}

impl ModelSpec {
    pub fn parse(text: &str) -> Result<ModelSpec> {
        let sections = split_sections(text)?;
        let find = |name: &str| sections.iter().find(|s| s.name == name);
        let missing = |name: &str| file_err(0, format!("missing [{name}] section"));

        let coords_sec = find("coordinates").ok_or_else(|| missing("coordinates"))?;
        let coords: Vec<String> = coords_sec
            .body
            .iter()
            .flat_map(|(_, _, t)| t.split_whitespace().map(str::to_string))
            .collect();

        let mut params: Vec<(String, f64)> = Vec::new();
        if let Some(sec) = find("parameters") {
            for (line, key, value) in assignments(sec)? {
                params.push((key.clone(), number(line, &key, &value)?));
            }
        }
        let table = SymbolTable::new(&coords, &params).map_err(|e| file_err(coords_sec.line, e.to_string()))?;

        let lag = find("lagrangian").ok_or_else(|| missing("lagrangian"))?;
        let mut source = String::new();
        for (i, (_, col, text)) in lag.body.iter().enumerate() {
            if i > 0 {
                source.push('\n');
            }
            source.push_str(&" ".repeat(col - 1));
            source.push_str(text);
        }
        if source.trim().is_empty() {
            return Err(file_err(lag.line, "[lagrangian] is empty"));
        }
        let lagrangian = parse(&source, &table, Scope::LAGRANGIAN).map_err(|e| {
            let line = lag.body.get(e.line - 1).map_or(lag.line, |b| b.0);
            file_err(line, format!("column {}: {}", e.col, e.kind_message()))
        })?;
        let model = Model::from_parts(table, lagrangian)?;

        let mut initial = Vec::new();
        if let Some(sec) = find("initial") {
            for (line, key, value) in assignments(sec)? {
                let t = model.table();
                if t.coord_index(&key).is_none() && t.velocity_index(&key).is_none() && t.momentum_index(&key).is_none()
                {
                    return Err(file_err(line, format!("[initial] has no coordinate, velocity or momentum `{key}`")));
                }
                if initial.iter().any(|(k, _)| *k == key) {
                    return Err(file_err(line, format!("`{key}` is set twice")));
                }
                initial.push((key.clone(), number(line, &key, &value)?));
            }
        }

        let mut gauge = Vec::new();
        if let Some(sec) = find("gauge") {
            for (line, col, text) in &sec.body {
                for item in text.split(';').filter(|s| !s.trim().is_empty()) {
                    let (name, rhs) = item
                        .split_once('=')
                        .ok_or_else(|| file_err(*line, format!("expected `<velocity> = <expression>`, got `{}`", item.trim())))?;
                    let name = name.trim().to_string();
                    if model.table().velocity_index(&name).is_none() {
                        return Err(file_err(*line, format!("[gauge] key `{name}` is not a velocity")));
                    }
                    let expr = parse(rhs, model.table(), Scope::GAUGE)
                        .map_err(|e| file_err(*line, format!("column {}: {}", col + e.col, e.kind_message())))?;
                    gauge.push((name, expr));
                }
            }
        }

        let mut window = None;
        if let Some(sec) = find("integrate") {
            let mut w = Window::default();
            for (line, key, value) in assignments(sec)? {
                let x = number(line, &key, &value)?;
                match key.as_str() {
                    "t0" => w.t0 = x,
                    "t1" => w.t1 = x,
                    "dt" => w.dt = x,
                    _ => return Err(file_err(line, format!("unknown [integrate] key `{key}`"))),
                }
            }
            if !(w.t1 > w.t0) || !(w.dt > 0.0) {
                return Err(file_err(sec.line, "[integrate] needs t1 > t0 and dt > 0"));
            }
            window = Some(w);
        }

        let mut convention = ConventionChoice::Auto;
        let mut tol = Tolerances::default();
        if let Some(sec) = find("options") {
            for (line, key, value) in assignments(sec)? {
                let positive = |x: f64| {
                    if x > 0.0 {
                        Ok(x)
                    } else {
                        Err(file_err(line, format!("`{key}` must be positive")))
                    }
                };
                let count = |v: &str| {
                    v.parse::<usize>()
                        .ok()
                        .filter(|&c| c > 0)
                        .ok_or_else(|| file_err(line, format!("`{key}` expects a positive integer, got `{v}`")))
                };
                match key.as_str() {
                    "convention" => {
                        convention = match value.as_str() {
                            "auto" => ConventionChoice::Auto,
                            "A" => ConventionChoice::Fixed(Convention::A),
                            "B" => ConventionChoice::Fixed(Convention::B),
                            other => return Err(file_err(line, format!("convention must be auto, A or B, got `{other}`"))),
                        }
                    }
                    "seed" => {
                        tol.seed = value
                            .parse()
                            .map_err(|_| file_err(line, format!("seed expects an unsigned integer, got `{value}`")))?
                    }
                    "samples" => tol.sample_count = count(&value)?,
                    "newton_max_iter" => tol.newton_max_iter = count(&value)?,
                    "rank_tol" => tol.rank_rel = positive(number(line, &key, &value)?)?,
                    "newton_tol" => tol.newton_abs = positive(number(line, &key, &value)?)?,
                    "independence_tol" => tol.independence = positive(number(line, &key, &value)?)?,
                    "consistency_tol" => tol.consistency = positive(number(line, &key, &value)?)?,
                    "fd_step" => tol.fd_step = positive(number(line, &key, &value)?)?,
                    "el_tol" => tol.el_residual = positive(number(line, &key, &value)?)?,
                    _ => return Err(file_err(line, format!("unknown [options] key `{key}`"))),
                }
            }
        }

        Ok(ModelSpec { model, initial, gauge, window, convention, tolerances: tol })
    }

    /// Builds the starting phase point. Either every regular velocity is
    /// given (momenta then follow from `p_i = dL/dv^i`) or every regular
    /// momentum is. Degenerate velocities default to zero.
    pub fn initial_point(&self, sys: &ClairautSystem) -> Result<PhasePoint> {
        let t = self.model.table();
        let split = sys.split();
        let n = t.n();
        let mut q = vec![None; n];
        let mut v = vec![None; n];
        let mut p = vec![None; n];
        for (key, value) in &self.initial {
            if let Some(k) = t.coord_index(key) {
                q[k] = Some(*value);
            } else if let Some(k) = t.velocity_index(key) {
                v[k] = Some(*value);
            } else if let Some(k) = t.momentum_index(key) {
                if split.regular_position(k).is_none() {
                    return Err(Error::Dimension(format!(
                        "`{key}` is the momentum of a degenerate coordinate; only regular momenta exist"
                    )));
                }
                p[k] = Some(*value);
            }
        }
        let q: Vec<f64> = q
            .iter()
            .enumerate()
            .map(|(k, x)| x.ok_or_else(|| Error::Dimension(format!("[initial] is missing {}", t.coord_name(k)))))
            .collect::<Result<_>>()?;
        let v_deg: Vec<f64> = split.degenerate.iter().map(|&k| v[k].unwrap_or(0.0)).collect();
        let given_p = p.iter().any(Option::is_some);
        let p_reg: Vec<f64> = if given_p {
            if split.regular.iter().any(|&k| v[k].is_some()) {
                return Err(Error::Dimension("[initial] mixes regular velocities and momenta".into()));
            }
            split
                .regular
                .iter()
                .map(|&k| p[k].ok_or_else(|| Error::Dimension(format!("[initial] is missing {}", t.momentum_name(k)))))
                .collect::<Result<_>>()?
        } else {
            let mut full_v = vec![0.0; n];
            for &k in &split.regular {
                full_v[k] = v[k].ok_or_else(|| Error::Dimension(format!("[initial] is missing {}", t.velocity_name(k))))?;
            }
            for (&k, &x) in split.degenerate.iter().zip(&v_deg) {
                full_v[k] = x;
            }
            sys.momenta_from_velocities(&q, &full_v)?
        };
        let t0 = self.window.map_or(0.0, |w| w.t0);
        Ok(PhasePoint { q, p: p_reg, v: v_deg, t: t0 })
    }

    /// Gauge expressions keyed by degenerate coordinate, or `None` when the
    /// file has no `[gauge]` section.
    pub fn gauge_choice(&self, sys: &ClairautSystem) -> Result<Option<GaugeChoice>> {
        if self.gauge.is_empty() {
            return Ok(None);
        }
        let t = self.model.table();
        let mut g = GaugeChoice::zeros(sys.split().degenerate_count());
        for (name, expr) in &self.gauge {
            let k = t.velocity_index(name).expect("validated while parsing");
            let Some(pos) = sys.split().degenerate_position(k) else {
                return Err(Error::Dimension(format!("gauge `{name}` targets a regular coordinate")));
            };
            g.set(pos, expr.clone(), sys)?;
        }
        Ok(Some(g))
    }
}

impl crate::expr::ParseError {
    fn kind_message(&self) -> String {
        match &self.kind {
            crate::expr::ParseErrorKind::Syntax(m) => format!("syntax error: {m}"),
            crate::expr::ParseErrorKind::UnknownSymbol(s) => format!("unknown symbol \"{s}\""),
        }
    }
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelSpec> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidArgument(format!("cannot read {}: {e}", path.display())))?;
    ModelSpec::parse(&text)
}
