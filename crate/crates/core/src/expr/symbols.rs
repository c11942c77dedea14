use super::{Func, Symbol};

/// Names for the coordinates and parameters of one model.
///
/// Velocity and momentum names are derived from the coordinate names: the
/// coordinate `x` has velocity `v_x` and momentum `p_x`. When a coordinate is
/// spelled `q<suffix>` the short forms `v<suffix>` and `p<suffix>` are
/// accepted as well (so `q1` pairs with `v1` and `p1`).
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolTable {
    coords: Vec<String>,
    params: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SymbolError {
    #[error("`{0}` is not a valid identifier")]
    InvalidName(String),
    #[error("`{0}` is reserved")]
    Reserved(String),
    #[error("name `{0}` is declared twice or collides with a derived velocity/momentum name")]
    Duplicate(String),
    #[error("at least one coordinate is required")]
    NoCoordinates,
}

const RESERVED: &[&str] = &["d", "t", "sin", "cos", "exp", "log", "sqrt"];

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

impl SymbolTable {
    pub fn new<S: AsRef<str>>(coords: &[S], params: &[(S, f64)]) -> Result<SymbolTable, SymbolError> {
        if coords.is_empty() {
            return Err(SymbolError::NoCoordinates);
        }
        let table = SymbolTable {
            coords: coords.iter().map(|s| s.as_ref().to_string()).collect(),
            params: params.iter().map(|(s, v)| (s.as_ref().to_string(), *v)).collect(),
        };
        let mut seen = std::collections::BTreeSet::new();
        let declared = table.coords.iter().chain(table.params.iter().map(|(n, _)| n));
        for name in declared {
            if !is_identifier(name) {
                return Err(SymbolError::InvalidName(name.clone()));
            }
            if RESERVED.contains(&name.as_str()) {
                return Err(SymbolError::Reserved(name.clone()));
            }
            if !seen.insert(name.clone()) {
                return Err(SymbolError::Duplicate(name.clone()));
            }
        }
        for k in 0..table.coords.len() {
            for alias in table.velocity_aliases(k).into_iter().chain(table.momentum_aliases(k)) {
                if !seen.insert(alias.clone()) {
                    return Err(SymbolError::Duplicate(alias));
                }
            }
        }
        Ok(table)
    }

    /// Number of coordinates `n`.
    pub fn n(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[String] {
        &self.coords
    }

    pub fn coord_name(&self, k: usize) -> &str {
        &self.coords[k]
    }

    pub fn velocity_name(&self, k: usize) -> String {
        format!("v_{}", self.coords[k])
    }

    pub fn momentum_name(&self, k: usize) -> String {
        format!("p_{}", self.coords[k])
    }

    fn short_alias(&self, k: usize, prefix: char) -> Option<String> {
        let name = &self.coords[k];
        let suffix = name.strip_prefix('q')?;
        (!suffix.is_empty()).then(|| format!("{prefix}{suffix}"))
    }

    fn velocity_aliases(&self, k: usize) -> Vec<String> {
        let mut v = vec![self.velocity_name(k)];
        v.extend(self.short_alias(k, 'v'));
        v
    }

    fn momentum_aliases(&self, k: usize) -> Vec<String> {
        let mut v = vec![self.momentum_name(k)];
        v.extend(self.short_alias(k, 'p'));
        v
    }

    pub fn params(&self) -> &[(String, f64)] {
        &self.params
    }

    pub fn param_values(&self) -> Vec<f64> {
        self.params.iter().map(|(_, v)| *v).collect()
    }

    pub fn coord_index(&self, name: &str) -> Option<usize> {
        self.coords.iter().position(|c| c == name)
    }

    pub fn velocity_index(&self, name: &str) -> Option<usize> {
        (0..self.n()).find(|&k| self.velocity_aliases(k).iter().any(|a| a == name))
    }

    pub fn momentum_index(&self, name: &str) -> Option<usize> {
        (0..self.n()).find(|&k| self.momentum_aliases(k).iter().any(|a| a == name))
    }

    pub fn param_index(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|(p, _)| p == name)
    }

    /// Resolves a bare identifier to a symbol. Velocities are only reachable
    /// through `d(name)` in expressions, so they are not resolved here.
    pub fn lookup(&self, name: &str) -> Option<Symbol> {
        if let Some(k) = self.coord_index(name) {
            return Some(Symbol::Coord(k));
        }
        if let Some(k) = self.param_index(name) {
            return Some(Symbol::Param(k));
        }
        if let Some(k) = self.momentum_index(name) {
            return Some(Symbol::Mom(k));
        }
        if name == "t" {
            return Some(Symbol::Time);
        }
        None
    }

    pub fn render(&self, s: Symbol) -> String {
        match s {
            Symbol::Coord(k) => self.coords.get(k).cloned().unwrap_or_else(|| format!("q#{k}")),
            Symbol::Vel(k) => match self.coords.get(k) {
                Some(c) => format!("d({c})"),
                None => format!("v#{k}"),
            },
            Symbol::Mom(k) if k < self.n() => self.momentum_name(k),
            Symbol::Mom(k) => format!("p#{k}"),
            Symbol::Param(k) => self.params.get(k).map(|(n, _)| n.clone()).unwrap_or_else(|| format!("c#{k}")),
            Symbol::Time => "t".to_string(),
        }
    }

    pub fn is_function(name: &str) -> bool {
        Func::from_name(name).is_some()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aliases_follow_coordinate_names() {
        let t = SymbolTable::new(&["q1", "x"], &[("k", 2.0)]).unwrap();
        assert_eq!(t.velocity_index("v1"), Some(0));
        assert_eq!(t.velocity_index("v_q1"), Some(0));
        assert_eq!(t.velocity_index("v_x"), Some(1));
        assert_eq!(t.momentum_index("p1"), Some(0));
        assert_eq!(t.lookup("k"), Some(Symbol::Param(0)));
        assert_eq!(t.lookup("p_x"), Some(Symbol::Mom(1)));
        assert_eq!(t.render(Symbol::Vel(1)), "d(x)");
    }

    #[test]
    fn namespaces_are_disjoint() {
        assert_eq!(
            SymbolTable::new(&["q1", "v1"], &[]),
            Err(SymbolError::Duplicate("v1".into()))
        );
        assert_eq!(
            SymbolTable::new(&["q1"], &[("q1", 1.0)]),
            Err(SymbolError::Duplicate("q1".into()))
        );
        assert_eq!(SymbolTable::new(&["sin"], &[]), Err(SymbolError::Reserved("sin".into())));
        assert_eq!(SymbolTable::new(&["1q"], &[]), Err(SymbolError::InvalidName("1q".into())));
        assert_eq!(SymbolTable::new::<&str>(&[], &[]), Err(SymbolError::NoCoordinates));
    }
}
