//! Immutable expression trees over coordinates, velocities, momenta,
//! parameters and time.
//!
//! Trees are reference counted and never mutated, so a single Lagrangian and
//! all of its derivatives can be shared freely between evaluators. The smart
//! constructors (`Expr::add`, `Expr::mul`, ...) apply constant folding and the
//! usual 0/1 identities; nothing more. Equality of two expressions is decided
//! numerically by the callers, not by canonicalising trees.

mod parse;
mod symbols;

pub use parse::{parse, ParseError, ParseErrorKind, Scope, MAX_DEPTH};
pub use symbols::{SymbolError, SymbolTable};

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

/// A free variable of an expression.
///
/// Indices are positions in the owning [`SymbolTable`]: `Coord(k)` is q^k,
/// `Vel(k)` the velocity of q^k, `Mom(k)` the momentum conjugate to q^k.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Symbol {
    Coord(usize),
    Vel(usize),
    Mom(usize),
    Param(usize),
    Time,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            _ => return None,
        })
    }

    fn apply(self, x: f64) -> Result<f64, &'static str> {
        match self {
            Func::Sin => Ok(x.sin()),
            Func::Cos => Ok(x.cos()),
            Func::Exp => Ok(x.exp()),
            Func::Log if x <= 0.0 => Err("log of nonpositive value"),
            Func::Log => Ok(x.ln()),
            Func::Sqrt if x < 0.0 => Err("sqrt of negative value"),
            Func::Sqrt => Ok(x.sqrt()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Const(f64),
    Sym(Symbol),
    Neg(Expr),
    Func(Func, Expr),
    Add(Expr, Expr),
    Sub(Expr, Expr),
    Mul(Expr, Expr),
    Div(Expr, Expr),
    /// Power with a constant integer exponent.
    Pow(Expr, i32),
}

#[derive(Clone, PartialEq)]
pub struct Expr(Arc<Node>);

/// Source of symbol values for [`Expr::eval`].
pub trait Bindings {
    fn value(&self, sym: Symbol) -> Option<f64>;
}

impl Bindings for HashMap<Symbol, f64> {
    fn value(&self, sym: Symbol) -> Option<f64> {
        self.get(&sym).copied()
    }
}

impl Bindings for BTreeMap<Symbol, f64> {
    fn value(&self, sym: Symbol) -> Option<f64> {
        self.get(&sym).copied()
    }
}

/// Positional bindings: each slice is indexed by coordinate (or parameter)
/// position. Entries past the end of a slice are unbound.
#[derive(Debug, Clone, Copy, Default)]
pub struct SliceBindings<'a> {
    pub q: &'a [f64],
    pub v: &'a [f64],
    pub p: &'a [f64],
    pub params: &'a [f64],
    pub t: Option<f64>,
}

impl Bindings for SliceBindings<'_> {
    fn value(&self, sym: Symbol) -> Option<f64> {
        match sym {
            Symbol::Coord(k) => self.q.get(k).copied(),
            Symbol::Vel(k) => self.v.get(k).copied(),
            Symbol::Mom(k) => self.p.get(k).copied(),
            Symbol::Param(k) => self.params.get(k).copied(),
            Symbol::Time => self.t,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("unbound symbol {0:?}")]
    Unbound(Symbol),
    #[error("{reason} in `{subtree:?}`")]
    Domain { reason: &'static str, subtree: Expr },
}

impl Expr {
    pub fn node(&self) -> &Node {
        &self.0
    }

    /// Wraps a node without any simplification. The parser uses this so the
    /// tree mirrors the source text.
    pub fn raw(node: Node) -> Expr {
        Expr(Arc::new(node))
    }

    pub fn constant(c: f64) -> Expr {
        Expr::raw(Node::Const(c))
    }

    pub fn zero() -> Expr {
        Expr::constant(0.0)
    }

    pub fn one() -> Expr {
        Expr::constant(1.0)
    }

    pub fn sym(s: Symbol) -> Expr {
        Expr::raw(Node::Sym(s))
    }

    pub fn as_const(&self) -> Option<f64> {
        match *self.0 {
            Node::Const(c) => Some(c),
            _ => None,
        }
    }

    fn is_const(&self, c: f64) -> bool {
        self.as_const() == Some(c)
    }

    pub fn neg(a: Expr) -> Expr {
        match a.node() {
            Node::Const(c) => Expr::constant(-c),
            Node::Neg(inner) => inner.clone(),
            _ => Expr::raw(Node::Neg(a)),
        }
    }

    pub fn add(a: Expr, b: Expr) -> Expr {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) => Expr::constant(x + y),
            (Some(x), _) if x == 0.0 => b,
            (_, Some(y)) if y == 0.0 => a,
            _ => Expr::raw(Node::Add(a, b)),
        }
    }

    pub fn sub(a: Expr, b: Expr) -> Expr {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) => Expr::constant(x - y),
            (Some(x), _) if x == 0.0 => Expr::neg(b),
            (_, Some(y)) if y == 0.0 => a,
            _ => Expr::raw(Node::Sub(a, b)),
        }
    }

    pub fn mul(a: Expr, b: Expr) -> Expr {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) => Expr::constant(x * y),
            (Some(x), _) | (_, Some(x)) if x == 0.0 => Expr::zero(),
            (Some(x), _) if x == 1.0 => b,
            (_, Some(y)) if y == 1.0 => a,
            (Some(x), _) if x == -1.0 => Expr::neg(b),
            (_, Some(y)) if y == -1.0 => Expr::neg(a),
            _ => Expr::raw(Node::Mul(a, b)),
        }
    }

    pub fn div(a: Expr, b: Expr) -> Expr {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) if y != 0.0 => Expr::constant(x / y),
            (Some(x), _) if x == 0.0 => Expr::zero(),
            (_, Some(y)) if y == 1.0 => a,
            _ => Expr::raw(Node::Div(a, b)),
        }
    }

    pub fn pow(a: Expr, n: i32) -> Expr {
        if n == 0 {
            return Expr::one();
        }
        if n == 1 {
            return a;
        }
        if let Some(c) = a.as_const() {
            let v = c.powi(n);
            if v.is_finite() {
                return Expr::constant(v);
            }
        }
        Expr::raw(Node::Pow(a, n))
    }

    pub fn func(f: Func, a: Expr) -> Expr {
        if let Some(c) = a.as_const() {
            if let Ok(v) = f.apply(c) {
                if v.is_finite() {
                    return Expr::constant(v);
                }
            }
        }
        Expr::raw(Node::Func(f, a))
    }

    pub fn eval<B: Bindings + ?Sized>(&self, b: &B) -> Result<f64, EvalError> {
        let v = match self.node() {
            Node::Const(c) => *c,
            Node::Sym(s) => b.value(*s).ok_or(EvalError::Unbound(*s))?,
            Node::Neg(a) => -a.eval(b)?,
            Node::Func(f, a) => {
                let x = a.eval(b)?;
                f.apply(x).map_err(|reason| self.domain(reason))?
            }
            Node::Add(l, r) => l.eval(b)? + r.eval(b)?,
            Node::Sub(l, r) => l.eval(b)? - r.eval(b)?,
            Node::Mul(l, r) => l.eval(b)? * r.eval(b)?,
            Node::Div(l, r) => {
                let num = l.eval(b)?;
                let den = r.eval(b)?;
                if den == 0.0 {
                    return Err(self.domain("division by zero"));
                }
                num / den
            }
            Node::Pow(a, n) => {
                let x = a.eval(b)?;
                if *n < 0 && x == 0.0 {
                    return Err(self.domain("division by zero"));
                }
                x.powi(*n)
            }
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(self.domain("non-finite result"))
        }
    }

    fn domain(&self, reason: &'static str) -> EvalError {
        EvalError::Domain {
            reason,
            subtree: self.clone(),
        }
    }

    /// Exact symbolic derivative with respect to `s`.
    pub fn diff(&self, s: Symbol) -> Expr {
        match self.node() {
            Node::Const(_) => Expr::zero(),
            Node::Sym(t) => {
                if *t == s {
                    Expr::one()
                } else {
                    Expr::zero()
                }
            }
            Node::Neg(a) => Expr::neg(a.diff(s)),
            Node::Add(a, b) => Expr::add(a.diff(s), b.diff(s)),
            Node::Sub(a, b) => Expr::sub(a.diff(s), b.diff(s)),
            Node::Mul(a, b) => Expr::add(
                Expr::mul(a.diff(s), b.clone()),
                Expr::mul(a.clone(), b.diff(s)),
            ),
            Node::Div(a, b) => {
                let da = a.diff(s);
                let db = b.diff(s);
                if db.is_const(0.0) {
                    Expr::div(da, b.clone())
                } else {
                    // (a'b - ab') / b^2
                    Expr::div(
                        Expr::sub(Expr::mul(da, b.clone()), Expr::mul(a.clone(), db)),
                        Expr::pow(b.clone(), 2),
                    )
                }
            }
            Node::Pow(a, n) => {
                let da = a.diff(s);
                if da.is_const(0.0) {
                    return Expr::zero();
                }
                Expr::mul(
                    Expr::mul(Expr::constant(f64::from(*n)), Expr::pow(a.clone(), n - 1)),
                    da,
                )
            }
            Node::Func(f, a) => {
                let da = a.diff(s);
                if da.is_const(0.0) {
                    return Expr::zero();
                }
                let outer = match f {
                    Func::Sin => Expr::func(Func::Cos, a.clone()),
                    Func::Cos => Expr::neg(Expr::func(Func::Sin, a.clone())),
                    Func::Exp => self.clone(),
                    Func::Log => return Expr::div(da, a.clone()),
                    Func::Sqrt => {
                        return Expr::div(da, Expr::mul(Expr::constant(2.0), self.clone()))
                    }
                };
                Expr::mul(outer, da)
            }
        }
    }

    pub fn symbols(&self) -> BTreeSet<Symbol> {
        let mut out = BTreeSet::new();
        self.collect_symbols(&mut out);
        out
    }

    fn collect_symbols(&self, out: &mut BTreeSet<Symbol>) {
        match self.node() {
            Node::Const(_) => {}
            Node::Sym(s) => {
                out.insert(*s);
            }
            Node::Neg(a) | Node::Func(_, a) | Node::Pow(a, _) => a.collect_symbols(out),
            Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) => {
                a.collect_symbols(out);
                b.collect_symbols(out);
            }
        }
    }

    pub fn contains(&self, s: Symbol) -> bool {
        match self.node() {
            Node::Const(_) => false,
            Node::Sym(t) => *t == s,
            Node::Neg(a) | Node::Func(_, a) | Node::Pow(a, _) => a.contains(s),
            Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) => {
                a.contains(s) || b.contains(s)
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self.node() {
            Node::Const(_) | Node::Sym(_) => 1,
            Node::Neg(a) | Node::Func(_, a) | Node::Pow(a, _) => 1 + a.depth(),
            Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) => {
                1 + a.depth().max(b.depth())
            }
        }
    }

    /// Replaces every occurrence of `s` by `with`, re-simplifying on the way up.
    pub fn substitute(&self, s: Symbol, with: &Expr) -> Expr {
        match self.node() {
            Node::Const(_) => self.clone(),
            Node::Sym(t) if *t == s => with.clone(),
            Node::Sym(_) => self.clone(),
            Node::Neg(a) => Expr::neg(a.substitute(s, with)),
            Node::Func(f, a) => Expr::func(*f, a.substitute(s, with)),
            Node::Pow(a, n) => Expr::pow(a.substitute(s, with), *n),
            Node::Add(a, b) => Expr::add(a.substitute(s, with), b.substitute(s, with)),
            Node::Sub(a, b) => Expr::sub(a.substitute(s, with), b.substitute(s, with)),
            Node::Mul(a, b) => Expr::mul(a.substitute(s, with), b.substitute(s, with)),
            Node::Div(a, b) => Expr::div(a.substitute(s, with), b.substitute(s, with)),
        }
    }

    /// Renders the tree in the input grammar using `table` for symbol names.
    pub fn display<'a>(&'a self, table: &'a SymbolTable) -> Display<'a> {
        Display { expr: self, table: Some(table) }
    }

    fn precedence(&self) -> u8 {
        match self.node() {
            Node::Add(..) | Node::Sub(..) => 1,
            Node::Mul(..) | Node::Div(..) => 2,
            Node::Neg(_) => 3,
            Node::Const(c) if c.is_sign_negative() => 3,
            Node::Pow(..) => 4,
            _ => 5,
        }
    }

    fn write(&self, f: &mut fmt::Formatter<'_>, table: Option<&SymbolTable>, min: u8) -> fmt::Result {
        let paren = self.precedence() < min;
        if paren {
            f.write_str("(")?;
        }
        match self.node() {
            Node::Const(c) => write!(f, "{c}")?,
            Node::Sym(s) => match table {
                Some(t) => f.write_str(&t.render(*s))?,
                None => write!(f, "{s:?}")?,
            },
            Node::Neg(a) => {
                f.write_str("-")?;
                a.write(f, table, 3)?;
            }
            Node::Func(func, a) => {
                write!(f, "{}(", func.name())?;
                a.write(f, table, 0)?;
                f.write_str(")")?;
            }
            Node::Add(a, b) | Node::Sub(a, b) => {
                a.write(f, table, 1)?;
                f.write_str(if matches!(self.node(), Node::Add(..)) { " + " } else { " - " })?;
                b.write(f, table, 2)?;
            }
            Node::Mul(a, b) | Node::Div(a, b) => {
                a.write(f, table, 2)?;
                f.write_str(if matches!(self.node(), Node::Mul(..)) { "*" } else { "/" })?;
                b.write(f, table, 3)?;
            }
            Node::Pow(a, n) => {
                a.write(f, table, 5)?;
                write!(f, "^{n}")?;
            }
        }
        if paren {
            f.write_str(")")?;
        }
        Ok(())
    }
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write(f, None, 0)
    }
}

pub struct Display<'a> {
    expr: &'a Expr,
    table: Option<&'a SymbolTable>,
}

impl fmt::Display for Display<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.expr.write(f, self.table, 0)
    }
}

/// Central difference of `e` in `s` around the binding `b`.
pub fn central_difference(e: &Expr, s: Symbol, b: &BTreeMap<Symbol, f64>, h: f64) -> Result<f64, EvalError> {
    let x = b.get(&s).copied().ok_or(EvalError::Unbound(s))?;
    let mut plus = b.clone();
    plus.insert(s, x + h);
    let mut minus = b.clone();
    minus.insert(s, x - h);
    Ok((e.eval(&plus)? - e.eval(&minus)?) / (2.0 * h))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(k: usize) -> Expr {
        Expr::sym(Symbol::Vel(k))
    }
    fn q(k: usize) -> Expr {
        Expr::sym(Symbol::Coord(k))
    }

    #[test]
    fn eval_examples() {
        let e = Expr::mul(Expr::constant(0.5), Expr::pow(v(0), 2));
        let b: HashMap<_, _> = [(Symbol::Vel(0), 2.0)].into();
        assert_eq!(e.eval(&b).unwrap(), 2.0);

        let b: HashMap<_, _> = [(Symbol::Coord(0), -3.5)].into();
        assert_eq!(q(0).eval(&b).unwrap(), -3.5);

        let e = Expr::raw(Node::Div(Expr::one(), q(0)));
        let b: HashMap<_, _> = [(Symbol::Coord(0), 0.0)].into();
        assert!(matches!(e.eval(&b), Err(EvalError::Domain { reason: "division by zero", .. })));
    }

    #[test]
    fn unbound_symbol_is_reported() {
        let b: HashMap<Symbol, f64> = HashMap::new();
        assert_eq!(q(1).eval(&b), Err(EvalError::Unbound(Symbol::Coord(1))));
    }

    #[test]
    fn domain_errors_name_subtree() {
        let e = Expr::func(Func::Log, q(0));
        let b: HashMap<_, _> = [(Symbol::Coord(0), -1.0)].into();
        match e.eval(&b) {
            Err(EvalError::Domain { subtree, .. }) => assert_eq!(subtree, e),
            other => panic!("unexpected {other:?}"),
        }
        let e = Expr::func(Func::Sqrt, q(0));
        assert!(e.eval(&b).is_err());
        let e = Expr::pow(q(0), -2);
        let b: HashMap<_, _> = [(Symbol::Coord(0), 0.0)].into();
        assert!(e.eval(&b).is_err());
    }

    #[test]
    fn diff_examples() {
        // d/dv1 (0.5 v1^2) = v1
        let e = Expr::mul(Expr::constant(0.5), Expr::pow(v(0), 2));
        let d = e.diff(Symbol::Vel(0));
        let b: HashMap<_, _> = [(Symbol::Vel(0), 1.7)].into();
        assert!((d.eval(&b).unwrap() - 1.7).abs() < 1e-15);

        // absent symbol folds to the constant zero
        let e = Expr::mul(Expr::constant(0.5), Expr::pow(Expr::sub(v(0), q(1)), 2));
        assert_eq!(e.diff(Symbol::Vel(1)).as_const(), Some(0.0));

        // d/dq2 [0.5 (q2 v1 - q1 v2)] = 0.5 v1
        let e = Expr::mul(
            Expr::constant(0.5),
            Expr::sub(Expr::mul(q(1), v(0)), Expr::mul(q(0), v(1))),
        );
        let d = e.diff(Symbol::Coord(1));
        let b: BTreeMap<_, _> = [
            (Symbol::Coord(0), 0.3),
            (Symbol::Coord(1), -0.4),
            (Symbol::Vel(0), 1.3),
            (Symbol::Vel(1), 0.9),
        ]
        .into();
        assert!((d.eval(&b).unwrap() - 0.65).abs() < 1e-15);
        let fd = central_difference(&e, Symbol::Coord(1), &b, 1e-6).unwrap();
        assert!((fd - 0.65).abs() < 1e-9);
    }

    #[test]
    fn smart_constructors_fold() {
        assert_eq!(Expr::add(Expr::zero(), q(0)), q(0));
        assert_eq!(Expr::mul(Expr::one(), q(0)), q(0));
        assert_eq!(Expr::mul(q(0), Expr::zero()).as_const(), Some(0.0));
        assert_eq!(Expr::neg(Expr::neg(q(0))), q(0));
        assert_eq!(Expr::pow(Expr::constant(3.0), 2).as_const(), Some(9.0));
        assert_eq!(Expr::func(Func::Cos, Expr::zero()).as_const(), Some(1.0));
        // log(-1) must not fold away into NaN
        assert!(Expr::func(Func::Log, Expr::constant(-1.0)).as_const().is_none());
    }

    #[test]
    fn substitute_replaces_symbol() {
        let e = Expr::add(Expr::pow(v(0), 2), q(0));
        let s = e.substitute(Symbol::Vel(0), &Expr::constant(3.0));
        let b: HashMap<_, _> = [(Symbol::Coord(0), 1.0)].into();
        assert_eq!(s.eval(&b).unwrap(), 10.0);
        assert!(!s.contains(Symbol::Vel(0)));
    }
}
