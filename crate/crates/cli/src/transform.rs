use crate::error::{CliError, CliResult};
use crate::input::{parse_number, split_assignment, ModelSource};
use crate::metadata::{curvature_rank, metadata, RunMetadata};
use clairaut::expr::Node;
use clairaut::{ClairautSystem, Error, Expr};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

/// Largest grid the command will evaluate.
pub const MAX_POINTS: usize = 100_000;

/// One axis of the evaluation grid: `count` evenly spaced values.
#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    pub name: String,
    pub start: f64,
    pub stop: f64,
    pub count: usize,
}

impl Axis {
    /// Parses `NAME=START:STOP:COUNT`.
    pub fn parse(s: &str) -> CliResult<Axis> {
        let (name, range) = split_assignment(s)?;
        let parts: Vec<&str> = range.split(':').collect();
        let [a, b, c] = parts[..] else {
            return Err(CliError::Usage(format!("grid `{s}`: expected NAME=START:STOP:COUNT")));
        };
        let count: usize = c
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("grid `{s}`: `{c}` is not a count")))?;
        if count == 0 {
            return Err(CliError::Usage(format!("grid `{s}`: count must be positive")));
        }
        Ok(Axis { name: name.into(), start: parse_number(name, a)?, stop: parse_number(name, b)?, count })
    }

    pub fn values(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.start];
        }
        let h = (self.stop - self.start) / (self.count - 1) as f64;
        (0..self.count).map(|k| self.start + h * k as f64).collect()
    }
}

#[derive(Debug, Clone, Default)]
pub struct TransformOptions {
    pub grid: Vec<Axis>,
    /// Fixed values `NAME=VALUE` for variables not on the grid; others are 0.
    pub at: Vec<String>,
    pub degree: usize,
    pub fit: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridPoint {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    #[serde(rename = "H0")]
    pub h0: f64,
    pub h: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Term {
    pub coefficient: f64,
    /// Exponent of each fit variable.
    pub exponents: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolynomialFit {
    pub function: String,
    pub form: String,
    pub terms: Vec<Term>,
    pub max_abs_residual: f64,
    pub rms_residual: f64,
    pub design_rank: usize,
    pub monomials: usize,
    /// Residual at roundoff level: the fitted form is the function itself.
    pub exact: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitReport {
    pub variables: Vec<String>,
    pub degree: usize,
    pub fits: Vec<PolynomialFit>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransformReport {
    pub coordinates: Vec<String>,
    pub momenta: Vec<String>,
    pub degenerate_hamiltonians: Vec<String>,
    pub points: Vec<GridPoint>,
    pub fit: Option<FitReport>,
    pub fit_note: Option<String>,
    pub metadata: RunMetadata,
}

enum Slot {
    Q(usize),
    P(usize),
}

pub fn transform(src: &ModelSource, opts: &TransformOptions) -> CliResult<TransformReport> {
    let sys = ClairautSystem::build(src.spec.model.clone(), src.spec.tolerances)?;
    let rank = curvature_rank(src, &sys)?;
    let meta = metadata(src, &sys, &rank);
    let t = sys.model().table();
    let split = sys.split();

    let slot = |name: &str| -> CliResult<Slot> {
        if let Some(k) = t.coord_index(name) {
            return Ok(Slot::Q(k));
        }
        if let Some(k) = t.momentum_index(name) {
            return split.regular_position(k).map(Slot::P).ok_or_else(|| {
                Error::Dimension(format!("`{name}` is the momentum of a degenerate coordinate")).into()
            });
        }
        Err(Error::InvalidArgument(format!("`{name}` is neither a coordinate nor a regular momentum")).into())
    };

    let mut q0 = vec![0.0; t.n()];
    let mut p0 = vec![0.0; split.rank];
    for a in &opts.at {
        let (name, value) = split_assignment(a)?;
        let x = parse_number(name, value)?;
        match slot(name)? {
            Slot::Q(k) => q0[k] = x,
            Slot::P(k) => p0[k] = x,
        }
    }
    let axes: Vec<(Slot, Vec<f64>)> =
        opts.grid.iter().map(|a| Ok((slot(&a.name)?, a.values()))).collect::<CliResult<_>>()?;
    let total = axes.iter().try_fold(1usize, |acc, (_, v)| acc.checked_mul(v.len())).unwrap_or(usize::MAX);
    if total > MAX_POINTS {
        return Err(Error::InvalidArgument(format!("grid has {total} points, at most {MAX_POINTS} allowed")).into());
    }

    let mut points = Vec::with_capacity(total);
    let mut coords = Vec::with_capacity(total);
    for idx in 0..total {
        let (mut q, mut p) = (q0.clone(), p0.clone());
        let mut rest = idx;
        let mut c = vec![0.0; axes.len()];
        for (j, (s, vals)) in axes.iter().enumerate().rev() {
            let x = vals[rest % vals.len()];
            rest /= vals.len();
            c[j] = x;
            match s {
                Slot::Q(k) => q[*k] = x,
                Slot::P(k) => p[*k] = x,
            }
        }
        let frame = sys.frame(&q, &p, None)?;
        points.push(GridPoint { q, p, h0: frame.h0, h: frame.h.clone() });
        coords.push(c);
    }

    let variables: Vec<String> = opts.grid.iter().map(|a| a.name.clone()).collect();
    let h_names: Vec<String> = split.degenerate.iter().map(|&k| format!("h_{}", t.coord_name(k))).collect();
    let (fit, fit_note) = if !opts.fit {
        (None, None)
    } else if !is_polynomial(sys.model().lagrangian()) {
        (None, Some("Lagrangian is not polynomial; no fit attempted".to_string()))
    } else if variables.is_empty() {
        (None, Some("no grid axes; nothing to fit".to_string()))
    } else {
        let mut fits = Vec::new();
        let mut series = vec![("H0".to_string(), points.iter().map(|p| p.h0).collect::<Vec<_>>())];
        for (j, name) in h_names.iter().enumerate() {
            series.push((name.clone(), points.iter().map(|p| p.h[j]).collect()));
        }
        for (name, y) in series {
            fits.push(fit_polynomial(&name, &variables, &coords, &y, opts.degree)?);
        }
        (Some(FitReport { variables: variables.clone(), degree: opts.degree, fits }), None)
    };

    Ok(TransformReport {
        coordinates: t.coords().to_vec(),
        momenta: split.regular.iter().map(|&k| t.momentum_name(k)).collect(),
        degenerate_hamiltonians: h_names,
        points,
        fit,
        fit_note,
        metadata: meta,
    })
}

/// True when the expression is a polynomial in its symbols.
pub fn is_polynomial(e: &Expr) -> bool {
    match e.node() {
        Node::Const(_) | Node::Sym(_) => true,
        Node::Neg(a) => is_polynomial(a),
        Node::Func(..) => false,
        Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) => is_polynomial(a) && is_polynomial(b),
        Node::Div(a, b) => is_polynomial(a) && b.as_const().is_some(),
        Node::Pow(a, n) => *n >= 0 && is_polynomial(a),
    }
}

/// Exponent vectors of total degree at most `degree`, by degree then
/// lexicographically descending.
pub fn monomials(vars: usize, degree: usize) -> Vec<Vec<u32>> {
    fn rec(vars: usize, left: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if prefix.len() + 1 == vars {
            prefix.push(left);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for e in (0..=left).rev() {
            prefix.push(e);
            rec(vars, left - e, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    for d in 0..=degree as u32 {
        rec(vars, d, &mut Vec::new(), &mut out);
    }
    out
}

/// Least-squares fit of `y` by all monomials up to `degree` in the columns
/// of `x`.
pub fn fit_polynomial(
    function: &str,
    variables: &[String],
    x: &[Vec<f64>],
    y: &[f64],
    degree: usize,
) -> CliResult<PolynomialFit> {
    let mons = monomials(variables.len(), degree);
    if x.len() < mons.len() {
        return Err(Error::InvalidArgument(format!(
            "degree-{degree} fit needs at least {} grid points, have {}",
            mons.len(),
            x.len()
        ))
        .into());
    }
    let eval_mon = |m: &[u32], row: &[f64]| m.iter().zip(row).map(|(&e, &v)| v.powi(e as i32)).product::<f64>();
    let a = DMatrix::from_fn(x.len(), mons.len(), |i, j| eval_mon(&mons[j], &x[i]));
    let b = DVector::from_column_slice(y);
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let cut = 1e-12 * smax.max(f64::MIN_POSITIVE);
    let design_rank = svd.singular_values.iter().filter(|&&s| s > cut).count();
    let coef = svd.solve(&b, cut).map_err(|e| Error::InvalidArgument(format!("fit failed: {e}")))?;
    let resid = &a * &coef - &b;
    let max_abs_residual = resid.amax();
    let rms_residual = (resid.norm_squared() / y.len() as f64).sqrt();
    let scale = y.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    let keep = 1e-9 * scale;
    let terms: Vec<Term> = mons
        .iter()
        .zip(coef.iter())
        .filter(|(_, c)| c.abs() > keep)
        .map(|(m, &c)| Term { coefficient: c, exponents: m.clone() })
        .collect();
    Ok(PolynomialFit {
        function: function.into(),
        form: render(&terms, variables),
        terms,
        max_abs_residual,
        rms_residual,
        design_rank,
        monomials: mons.len(),
        exact: max_abs_residual <= 1e-8 * scale,
    })
}

fn render(terms: &[Term], vars: &[String]) -> String {
    if terms.is_empty() {
        return "0".into();
    }
    let mut out = String::new();
    for (i, t) in terms.iter().enumerate() {
        let c = t.coefficient;
        if i == 0 {
            if c < 0.0 {
                out.push('-');
            }
        } else {
            out.push_str(if c < 0.0 { " - " } else { " + " });
        }
        let rounded: f64 = format!("{:.11e}", c.abs()).parse().expect("formatted float parses");
        out.push_str(&format!("{rounded}"));
        for (v, &e) in vars.iter().zip(&t.exponents) {
            match e {
                0 => {}
                1 => out.push_str(&format!("*{v}")),
                _ => out.push_str(&format!("*{v}^{e}")),
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_parsing() {
        let a = Axis::parse("q1=-1:1:5").unwrap();
        assert_eq!(a.values(), vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
        assert_eq!(Axis::parse("p1=2:3:1").unwrap().values(), vec![2.0]);
        for bad in ["q1", "q1=0:1", "q1=0:1:0", "q1=a:1:2", "q1=0:1:x"] {
            assert!(Axis::parse(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn monomial_count() {
        assert_eq!(monomials(2, 2).len(), 6);
        assert_eq!(monomials(3, 3).len(), 20);
        assert_eq!(monomials(1, 4), vec![vec![0], vec![1], vec![2], vec![3], vec![4]]);
    }

    #[test]
    fn exact_fit_recovers_coefficients() {
        let vars = vec!["x".to_string(), "y".to_string()];
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..5 {
            for j in 0..5 {
                let (a, b) = (i as f64 * 0.5 - 1.0, j as f64 * 0.5 - 1.0);
                x.push(vec![a, b]);
                y.push(0.5 * a * a + a * b - 2.0);
            }
        }
        let f = fit_polynomial("f", &vars, &x, &y, 2).unwrap();
        assert!(f.exact);
        assert_eq!(f.terms.len(), 3);
        assert_eq!(f.design_rank, 6);
        assert!(f.form.starts_with("-2"));
        assert!(f.form.contains("0.5*x^2"));
    }

    #[test]
    fn polynomial_detection() {
        let m = clairaut::Model::new(&["q1"], &[], "0.5*d(q1)^2 - q1/2").unwrap();
        assert!(is_polynomial(m.lagrangian()));
        let m = clairaut::Model::new(&["q1"], &[], "cos(q1)*d(q1)").unwrap();
        assert!(!is_polynomial(m.lagrangian()));
        let m = clairaut::Model::new(&["q1"], &[], "d(q1)/q1").unwrap();
        assert!(!is_polynomial(m.lagrangian()));
    }

    #[test]
    fn rank1_gauge_fit_matches_hand_form() {
        let src = ModelSource::load("corpus:rank1_gauge").unwrap();
        let opts = TransformOptions {
            grid: vec![Axis::parse("p1=-1:1:5").unwrap(), Axis::parse("q2=-1:1:5").unwrap()],
            at: vec![],
            degree: 2,
            fit: true,
        };
        let rep = transform(&src, &opts).unwrap();
        assert_eq!(rep.points.len(), 25);
        let fit = rep.fit.unwrap();
        let h0 = &fit.fits[0];
        assert!(h0.exact, "{h0:?}");
        let coef = |e: [u32; 2]| h0.terms.iter().find(|t| t.exponents == e).map_or(0.0, |t| t.coefficient);
        assert!((coef([2, 0]) - 0.5).abs() < 1e-10);
        assert!((coef([1, 1]) - 1.0).abs() < 1e-10);
        let h2 = &fit.fits[1];
        assert_eq!(h2.function, "h_q2");
        assert!(h2.terms.is_empty() && h2.form == "0");
    }

    #[test]
    fn degenerate_momentum_rejected() {
        let src = ModelSource::load("corpus:rank1_gauge").unwrap();
        let opts = TransformOptions { grid: vec![Axis::parse("p2=0:1:2").unwrap()], at: vec![], degree: 2, fit: false };
        assert_eq!(transform(&src, &opts).unwrap_err().code(), 1);
    }
}
