//! Recursive-descent parser for the expression grammar.
//!
//! ```text
//! expr     := term (('+' | '-') term)*
//! term     := unary (('*' | '/') unary)*
//! unary    := '-' unary | power
//! power    := base ('^' exponent)?
//! exponent := '-'? integer ('^' exponent)?
//! base     := number | name | 'd(' name ')' | fn '(' expr ')' | '(' expr ')'
//! ```
//!
//! `^` binds tighter than unary minus, which binds tighter than `*` and `/`.
//! Exponents are integer constants; a chain `a^2^3` folds right to `a^8`.

use super::{Expr, Func, Node, Symbol, SymbolTable};
use std::fmt;

/// Nesting and tree-depth limit. Deeper input is rejected rather than risking
/// stack exhaustion in the recursive evaluators.
pub const MAX_DEPTH: usize = 256;

/// Which symbol classes an expression may reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Scope {
    pub velocities: bool,
    pub momenta: bool,
    pub time: bool,
}

impl Scope {
    /// Lagrangians: coordinates, `d(q)` velocities and parameters.
    pub const LAGRANGIAN: Scope = Scope { velocities: true, momenta: false, time: false };
    /// Phase-space observables: coordinates, momenta and parameters.
    pub const OBSERVABLE: Scope = Scope { velocities: false, momenta: true, time: false };
    /// Gauge velocities: observables that may also depend on `t`.
    pub const GAUGE: Scope = Scope { velocities: false, momenta: true, time: true };
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseErrorKind {
    Syntax(String),
    UnknownSymbol(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub line: usize,
    pub col: usize,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            ParseErrorKind::Syntax(m) => write!(f, "{}:{}: syntax error: {}", self.line, self.col, m),
            ParseErrorKind::UnknownSymbol(s) => {
                write!(f, "{}:{}: unknown symbol \"{}\"", self.line, self.col, s)
            }
        }
    }
}

impl std::error::Error for ParseError {}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num { value: f64, integer: bool },
    Ident(String),
    LParen,
    RParen,
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    End,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num { value, .. } => format!("number {value}"),
            Tok::Ident(s) => format!("`{s}`"),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::Plus => "`+`".into(),
            Tok::Minus => "`-`".into(),
            Tok::Star => "`*`".into(),
            Tok::Slash => "`/`".into(),
            Tok::Caret => "`^`".into(),
            Tok::End => "end of input".into(),
        }
    }
}

struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

fn lex(src: &str) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut line, mut col) = (1usize, 1usize);
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let (tl, tc) = (line, col);
        let syntax = |m: String| ParseError { kind: ParseErrorKind::Syntax(m), line: tl, col: tc };
        if c == '\n' {
            line += 1;
            col = 1;
            i += 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        let start = i;
        let tok = if c.is_ascii_digit() || c == '.' {
            let mut integer = true;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            if i < chars.len() && chars[i] == '.' {
                integer = false;
                i += 1;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    integer = false;
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text: String = chars[start..i].iter().collect();
            let value: f64 = text
                .parse()
                .map_err(|_| syntax(format!("malformed number `{text}`")))?;
            if !value.is_finite() {
                return Err(syntax(format!("number `{text}` is out of range")));
            }
            Tok::Num { value, integer }
        } else if c.is_ascii_alphabetic() || c == '_' {
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            Tok::Ident(chars[start..i].iter().collect())
        } else {
            i += 1;
            match c {
                '(' => Tok::LParen,
                ')' => Tok::RParen,
                '+' => Tok::Plus,
                '-' => Tok::Minus,
                '*' => Tok::Star,
                '/' => Tok::Slash,
                '^' => Tok::Caret,
                other => return Err(syntax(format!("unexpected character `{other}`"))),
            }
        };
        col += i - start;
        out.push(Token { tok, line: tl, col: tc });
    }
    out.push(Token { tok: Tok::End, line, col });
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<Token>,
    pos: usize,
    table: &'a SymbolTable,
    scope: Scope,
    nesting: usize,
}

type Parsed = Result<(Expr, usize), ParseError>;

impl Parser<'_> {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn bump(&mut self) -> &Token {
        let t = &self.toks[self.pos];
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn err_at(&self, pos: usize, kind: ParseErrorKind) -> ParseError {
        let t = &self.toks[pos];
        ParseError { kind, line: t.line, col: t.col }
    }

    fn syntax(&self, m: impl Into<String>) -> ParseError {
        self.err_at(self.pos, ParseErrorKind::Syntax(m.into()))
    }

    fn expect(&mut self, tok: Tok) -> Result<(), ParseError> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            Err(self.syntax(format!("expected {}, found {}", tok.describe(), self.peek().describe())))
        }
    }

    fn node(&self, node: Node, depth: usize) -> Parsed {
        if depth > MAX_DEPTH {
            return Err(self.syntax(format!("expression nests deeper than {MAX_DEPTH}")));
        }
        Ok((Expr::raw(node), depth))
    }

    fn enter(&mut self) -> Result<(), ParseError> {
        self.nesting += 1;
        if self.nesting > MAX_DEPTH {
            return Err(self.syntax(format!("expression nests deeper than {MAX_DEPTH}")));
        }
        Ok(())
    }

    fn expr(&mut self) -> Parsed {
        let (mut lhs, mut depth) = self.term()?;
        loop {
            let add = match self.peek() {
                Tok::Plus => true,
                Tok::Minus => false,
                _ => return Ok((lhs, depth)),
            };
            self.bump();
            let (rhs, d) = self.term()?;
            let node = if add { Node::Add(lhs, rhs) } else { Node::Sub(lhs, rhs) };
            (lhs, depth) = self.node(node, 1 + depth.max(d))?;
        }
    }

    fn term(&mut self) -> Parsed {
        let (mut lhs, mut depth) = self.unary()?;
        loop {
            let mul = match self.peek() {
                Tok::Star => true,
                Tok::Slash => false,
                _ => return Ok((lhs, depth)),
            };
            self.bump();
            let (rhs, d) = self.unary()?;
            let node = if mul { Node::Mul(lhs, rhs) } else { Node::Div(lhs, rhs) };
            (lhs, depth) = self.node(node, 1 + depth.max(d))?;
        }
    }

    fn unary(&mut self) -> Parsed {
        if *self.peek() == Tok::Minus {
            self.bump();
            self.enter()?;
            let (inner, d) = self.unary()?;
            self.nesting -= 1;
            return self.node(Node::Neg(inner), d + 1);
        }
        self.power()
    }

    fn power(&mut self) -> Parsed {
        let (base, d) = self.base()?;
        if *self.peek() != Tok::Caret {
            return Ok((base, d));
        }
        self.bump();
        let n = self.exponent()?;
        self.node(Node::Pow(base, n), d + 1)
    }

    fn exponent(&mut self) -> Result<i32, ParseError> {
        self.enter()?;
        let negative = if *self.peek() == Tok::Minus {
            self.bump();
            true
        } else {
            false
        };
        let start = self.pos;
        let base = match *self.peek() {
            Tok::Num { value, integer: true } if value <= f64::from(i32::MAX) => value as i32,
            _ => return Err(self.syntax(format!("exponent must be an integer, found {}", self.peek().describe()))),
        };
        self.bump();
        let base = if negative { -base } else { base };
        let n = if *self.peek() == Tok::Caret {
            self.bump();
            let e = self.exponent()?;
            let folded = u32::try_from(e).ok().and_then(|e| base.checked_pow(e));
            folded.ok_or_else(|| {
                self.err_at(start, ParseErrorKind::Syntax("exponent chain does not fold to an integer".into()))
            })?
        } else {
            base
        };
        self.nesting -= 1;
        Ok(n)
    }

    fn base(&mut self) -> Parsed {
        let start = self.pos;
        match self.peek().clone() {
            Tok::Num { value, .. } => {
                self.bump();
                self.node(Node::Const(value), 1)
            }
            Tok::LParen => {
                self.bump();
                self.enter()?;
                let inner = self.expr()?;
                self.expect(Tok::RParen)?;
                self.nesting -= 1;
                Ok(inner)
            }
            Tok::Ident(name) => {
                self.bump();
                if *self.peek() == Tok::LParen {
                    if name == "d" {
                        return self.velocity();
                    }
                    let Some(func) = Func::from_name(&name) else {
                        return Err(self.err_at(start, ParseErrorKind::UnknownSymbol(name)));
                    };
                    self.bump();
                    self.enter()?;
                    let (arg, d) = self.expr()?;
                    self.expect(Tok::RParen)?;
                    self.nesting -= 1;
                    return self.node(Node::Func(func, arg), d + 1);
                }
                let sym = self.table.lookup(&name).filter(|s| match s {
                    Symbol::Mom(_) => self.scope.momenta,
                    Symbol::Time => self.scope.time,
                    _ => true,
                });
                match sym {
                    Some(s) => self.node(Node::Sym(s), 1),
                    None => Err(self.err_at(start, ParseErrorKind::UnknownSymbol(name))),
                }
            }
            other => Err(self.syntax(format!("expected an operand, found {}", other.describe()))),
        }
    }

    fn velocity(&mut self) -> Parsed {
        let at = self.pos - 1;
        self.expect(Tok::LParen)?;
        let name_pos = self.pos;
        let Tok::Ident(name) = self.peek().clone() else {
            return Err(self.syntax(format!("expected a coordinate name, found {}", self.peek().describe())));
        };
        self.bump();
        self.expect(Tok::RParen)?;
        if !self.scope.velocities {
            return Err(self.err_at(at, ParseErrorKind::Syntax("velocities are not allowed here".into())));
        }
        match self.table.coord_index(&name) {
            Some(k) => self.node(Node::Sym(Symbol::Vel(k)), 1),
            None => Err(self.err_at(name_pos, ParseErrorKind::UnknownSymbol(name))),
        }
    }
}

/// Parses `source` against the names in `table`, allowing the symbol classes
/// in `scope`.
pub fn parse(source: &str, table: &SymbolTable, scope: Scope) -> Result<Expr, ParseError> {
    let toks = lex(source)?;
    let mut p = Parser { toks, pos: 0, table, scope, nesting: 0 };
    let (e, _) = p.expr()?;
    if *p.peek() != Tok::End {
        return Err(p.syntax(format!("unexpected {}", p.peek().describe())));
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> SymbolTable {
        SymbolTable::new(&["q1", "q2"], &[("k", 2.0)]).unwrap()
    }

    fn c(x: f64) -> Expr {
        Expr::raw(Node::Const(x))
    }
    fn s(sym: Symbol) -> Expr {
        Expr::raw(Node::Sym(sym))
    }

    #[test]
    fn grammar_examples() {
        let t = table();
        let e = parse("0.5*d(q1)^2", &t, Scope::LAGRANGIAN).unwrap();
        assert_eq!(
            e,
            Expr::raw(Node::Mul(c(0.5), Expr::raw(Node::Pow(s(Symbol::Vel(0)), 2))))
        );

        let err = parse("d(q1)*q2 - V(q1)", &t, Scope::LAGRANGIAN).unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::UnknownSymbol("V".into()));
        assert_eq!((err.line, err.col), (1, 12));

        let e = parse("q1 - -q2", &t, Scope::LAGRANGIAN).unwrap();
        assert_eq!(
            e,
            Expr::raw(Node::Sub(s(Symbol::Coord(0)), Expr::raw(Node::Neg(s(Symbol::Coord(1))))))
        );
    }

    #[test]
    fn precedence() {
        let t = table();
        // unary minus is looser than ^
        let e = parse("-q1^2", &t, Scope::LAGRANGIAN).unwrap();
        assert_eq!(e, Expr::raw(Node::Neg(Expr::raw(Node::Pow(s(Symbol::Coord(0)), 2)))));
        // ^ chains fold right-associatively
        let e = parse("q1^2^3", &t, Scope::LAGRANGIAN).unwrap();
        assert_eq!(e, Expr::raw(Node::Pow(s(Symbol::Coord(0)), 8)));
        // * and / are left-associative
        let e = parse("q1/q2*k", &t, Scope::LAGRANGIAN).unwrap();
        assert!(matches!(e.node(), Node::Mul(l, _) if matches!(l.node(), Node::Div(..))));
        let e = parse("q1 - q2 + k", &t, Scope::LAGRANGIAN).unwrap();
        assert!(matches!(e.node(), Node::Add(l, _) if matches!(l.node(), Node::Sub(..))));
        let e = parse("q1^-2", &t, Scope::LAGRANGIAN).unwrap();
        assert_eq!(e, Expr::raw(Node::Pow(s(Symbol::Coord(0)), -2)));
    }

    #[test]
    fn error_locations() {
        let t = table();
        let err = parse("q1 +\n  * q2", &t, Scope::LAGRANGIAN).unwrap_err();
        assert_eq!((err.line, err.col), (2, 3));
        assert!(matches!(err.kind, ParseErrorKind::Syntax(_)));

        let err = parse("q1^1.5", &t, Scope::LAGRANGIAN).unwrap_err();
        assert!(matches!(err.kind, ParseErrorKind::Syntax(_)));
        let err = parse("(q1", &t, Scope::LAGRANGIAN).unwrap_err();
        assert!(matches!(err.kind, ParseErrorKind::Syntax(_)));
        let err = parse("q1 q2", &t, Scope::LAGRANGIAN).unwrap_err();
        assert!(matches!(err.kind, ParseErrorKind::Syntax(_)));
        let err = parse("1e999", &t, Scope::LAGRANGIAN).unwrap_err();
        assert!(matches!(err.kind, ParseErrorKind::Syntax(_)));
        let err = parse("q1 $ q2", &t, Scope::LAGRANGIAN).unwrap_err();
        assert_eq!((err.line, err.col), (1, 4));
        let err = parse("d(x)", &t, Scope::LAGRANGIAN).unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::UnknownSymbol("x".into()));
    }

    #[test]
    fn scopes_gate_symbol_classes() {
        let t = table();
        assert!(parse("p1 + q1", &t, Scope::OBSERVABLE).is_ok());
        assert!(parse("p_q1", &t, Scope::OBSERVABLE).is_ok());
        assert_eq!(
            parse("p1", &t, Scope::LAGRANGIAN).unwrap_err().kind,
            ParseErrorKind::UnknownSymbol("p1".into())
        );
        assert!(parse("d(q1)", &t, Scope::OBSERVABLE).is_err());
        assert!(parse("sin(t)*q1", &t, Scope::GAUGE).is_ok());
        assert!(parse("t", &t, Scope::OBSERVABLE).is_err());
    }

    #[test]
    fn deep_nesting_is_rejected() {
        let t = table();
        let src = format!("{}q1{}", "(".repeat(10_000), ")".repeat(10_000));
        assert!(parse(&src, &t, Scope::LAGRANGIAN).is_err());
        let src = "-".repeat(10_000) + "q1";
        assert!(parse(&src, &t, Scope::LAGRANGIAN).is_err());
        let src = vec!["q1"; 10_000].join("+");
        assert!(parse(&src, &t, Scope::LAGRANGIAN).is_err());
        let src = vec!["q1"; 100].join("+");
        assert!(parse(&src, &t, Scope::LAGRANGIAN).is_ok());
    }

    #[test]
    fn printed_form_reparses() {
        let t = table();
        for src in [
            "0.5*(d(q1) - q2)^2",
            "-(q1 + q2)*k",
            "q1 - (q2 - k)",
            "(-q1)^3 / (q2*k)",
            "sqrt(1 + q1^2) - exp(-q2)",
            "q1 - -q2",
            "(q1^2)^3",
            "q1/(q2/k)",
        ] {
            let e = parse(src, &t, Scope::LAGRANGIAN).unwrap();
            let printed = e.display(&t).to_string();
            let again = parse(&printed, &t, Scope::LAGRANGIAN).unwrap();
            assert_eq!(e, again, "{src} -> {printed}");
        }
    }
}
