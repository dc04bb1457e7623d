//! Feature maps: the regressor and instrument vectors of the linear bridges.
//!
//! A map is an ordered list of terms. Besides the intercept and raw blocks it
//! supports exponential-index terms `exp(c0 + Σ cₖ·vₖ)` with fixed
//! coefficients, which is how treatment bridges that are linear in their
//! parameters but not in the data are expressed.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::{ColumnSchema, Dataset, Observation, Role};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Term {
    Intercept,
    /// A whole block, or one component of it (1-based index as in the CSV
    /// column names).
    Raw(Role, Option<usize>),
    /// `exp(offset + Σ coef·v[role][k])`, components 1-based.
    Exp { offset: f64, coefs: Vec<(Role, usize, f64)> },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Transform {
    #[default]
    Identity,
    /// Every continuous raw input `v` is replaced by `|v| + v²/2` before the
    /// term is formed.
    Corrupted,
}

/// The misspecification transform applied componentwise.
#[inline]
pub fn corrupt<T: Scalar>(v: T) -> T {
    v.abs() + T::lit(0.5) * v * v
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub id: String,
    pub terms: Vec<Term>,
    pub transform: Transform,
    /// Components exempt from corruption (binary inputs).
    #[serde(default)]
    pub binary: BTreeSet<(Role, usize)>,
}

impl FeatureSpec {
    pub fn new(id: impl Into<String>, terms: Vec<Term>) -> Self {
        FeatureSpec { id: id.into(), terms, transform: Transform::Identity, binary: BTreeSet::new() }
    }

    /// Intercept followed by the listed blocks.
    pub fn linear(id: impl Into<String>, roles: &[Role]) -> Self {
        let mut terms = vec![Term::Intercept];
        terms.extend(roles.iter().map(|&r| Term::Raw(r, None)));
        Self::new(id, terms)
    }

    pub fn with_transform(mut self, t: Transform) -> Self {
        self.transform = t;
        self
    }

    /// Marks every component that is 0/1-valued in `ds` as binary.
    pub fn with_binary_from<T: Scalar>(mut self, ds: &Dataset<T>) -> Self {
        self.binary = binary_components(ds);
        self
    }

    pub fn roles(&self) -> BTreeSet<Role> {
        let mut out = BTreeSet::new();
        for t in &self.terms {
            match t {
                Term::Intercept => {}
                Term::Raw(r, _) => {
                    out.insert(*r);
                }
                Term::Exp { coefs, .. } => out.extend(coefs.iter().map(|c| c.0)),
            }
        }
        out
    }

    pub fn dim(&self, schema: &ColumnSchema) -> Result<usize> {
        let mut p = 0;
        for t in &self.terms {
            p += match t {
                Term::Intercept | Term::Exp { .. } => 1,
                Term::Raw(r, None) => schema.dim(*r),
                Term::Raw(_, Some(_)) => 1,
            };
        }
        self.check(schema)?;
        Ok(p)
    }

    fn check(&self, schema: &ColumnSchema) -> Result<()> {
        let bad = |r: Role, k: usize| k == 0 || k > schema.dim(r);
        for t in &self.terms {
            match t {
                Term::Intercept => {}
                Term::Raw(r, None) => {
                    if schema.dim(*r) == 0 {
                        return Err(Error::MissingRole(*r));
                    }
                }
                Term::Raw(r, Some(k)) => {
                    if bad(*r, *k) {
                        return Err(Error::Config(format!("map `{}`: component {r}{k} not in schema", self.id)));
                    }
                }
                Term::Exp { coefs, .. } => {
                    for &(r, k, _) in coefs {
                        if bad(r, k) {
                            return Err(Error::Config(format!("map `{}`: component {r}{k} not in schema", self.id)));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    #[inline]
    fn input<T: Scalar>(&self, role: Role, k0: usize, v: T) -> T {
        match self.transform {
            Transform::Identity => v,
            Transform::Corrupted if self.binary.contains(&(role, k0 + 1)) => v,
            Transform::Corrupted => corrupt(v),
        }
    }

    fn push_row<'a, T: Scalar>(&self, block: impl Fn(Role) -> &'a [T], out: &mut Vec<T>) {
        for t in &self.terms {
            match t {
                Term::Intercept => out.push(T::one()),
                Term::Raw(r, None) => {
                    for (k, &v) in block(*r).iter().enumerate() {
                        out.push(self.input(*r, k, v));
                    }
                }
                Term::Raw(r, Some(k)) => out.push(self.input(*r, k - 1, block(*r)[k - 1])),
                Term::Exp { offset, coefs } => {
                    let mut s = T::lit(*offset);
                    for &(r, k, c) in coefs {
                        s += T::lit(c) * self.input(r, k - 1, block(r)[k - 1]);
                    }
                    out.push(s.exp());
                }
            }
        }
    }

    /// `n × dim` design matrix over all rows of `ds`.
    pub fn design<T: Scalar>(&self, ds: &Dataset<T>) -> Result<DMatrix<T>> {
        let p = self.dim(ds.schema())?;
        let n = ds.n();
        let mut buf = Vec::with_capacity(p);
        let mut out = DMatrix::zeros(n, p);
        for i in 0..n {
            buf.clear();
            self.push_row(|r| ds.row_block(r, i), &mut buf);
            for (j, v) in buf.iter().enumerate() {
                out[(i, j)] = *v;
            }
        }
        Ok(out)
    }
}

/// Evaluates a map on a single observation.
pub fn evaluate_features<T: Scalar>(spec: &FeatureSpec, obs: &Observation<T>) -> Result<Vec<T>> {
    let schema = ColumnSchema {
        dim_d: obs.d.len(),
        dim_m: obs.m.len(),
        dim_z: obs.z.len(),
        dim_w: obs.w.len(),
        dim_x: obs.x.len(),
    };
    let p = spec.dim(&schema)?;
    let mut out = Vec::with_capacity(p);
    spec.push_row(|r| obs.block(r), &mut out);
    Ok(out)
}

/// Components whose observed values are all in {0, 1}.
pub fn binary_components<T: Scalar>(ds: &Dataset<T>) -> BTreeSet<(Role, usize)> {
    let mut out = BTreeSet::new();
    for role in Role::ALL {
        let k = ds.schema().dim(role);
        for j in 0..k {
            let all01 = (0..ds.n()).all(|i| {
                let v = ds.row_block(role, i)[j];
                v == T::zero() || v == T::one()
            });
            if all01 && ds.n() > 0 {
                out.insert((role, j + 1));
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Text form: terms separated by `;`, e.g. `1; W; exp(-0.3*Z1 + 0.5*X1)`.
// A map may carry a `corrupt:` prefix.

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Intercept => write!(f, "1"),
            Term::Raw(r, None) => write!(f, "{r}"),
            Term::Raw(r, Some(k)) => write!(f, "{r}{k}"),
            Term::Exp { offset, coefs } => {
                write!(f, "exp({offset:?}")?;
                for (r, k, c) in coefs {
                    if *c < 0.0 {
                        write!(f, " - {:?}*{r}{k}", -c)?;
                    } else {
                        write!(f, " + {c:?}*{r}{k}")?;
                    }
                }
                write!(f, ")")
            }
        }
    }
}

impl fmt::Display for FeatureSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.transform == Transform::Corrupted {
            write!(f, "corrupt: ")?;
        }
        let parts: Vec<String> = self.terms.iter().map(|t| t.to_string()).collect();
        write!(f, "{}", parts.join("; "))
    }
}

fn parse_component(s: &str) -> Option<(Role, Option<usize>)> {
    let mut ch = s.chars();
    let role = Role::from_prefix(ch.next()?)?;
    let rest = ch.as_str();
    if rest.is_empty() {
        Some((role, None))
    } else {
        rest.parse().ok().filter(|&k: &usize| k > 0).map(|k| (role, Some(k)))
    }
}

/// Splits `a + b - c` into signed pieces, leaving exponents like `1e-3` alone.
fn signed_pieces(s: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut prev: Option<char> = None;
    for c in s.chars().filter(|c| !c.is_whitespace()) {
        let exponent_sign = matches!(prev, Some('e') | Some('E'))
            && cur.chars().rev().nth(1).is_some_and(|d| d.is_ascii_digit() || d == '.');
        if (c == '+' || c == '-') && !cur.is_empty() && !exponent_sign {
            out.push(std::mem::take(&mut cur));
        }
        cur.push(c);
        prev = Some(c);
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

impl FromStr for Term {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::Config(format!("cannot parse feature term `{s}`"));
        if s == "1" {
            return Ok(Term::Intercept);
        }
        if let Some(inner) = s.strip_prefix("exp(").and_then(|r| r.strip_suffix(')')) {
            let mut offset = 0.0;
            let mut coefs = Vec::new();
            for piece in signed_pieces(inner) {
                if let Some((c, v)) = piece.split_once('*') {
                    let c: f64 = c.parse().map_err(|_| bad())?;
                    match parse_component(v) {
                        Some((r, Some(k))) => coefs.push((r, k, c)),
                        _ => return Err(bad()),
                    }
                } else if let Ok(c) = piece.parse::<f64>() {
                    offset += c;
                } else {
                    let (sign, body) = match piece.strip_prefix('-') {
                        Some(b) => (-1.0, b),
                        None => (1.0, piece.trim_start_matches('+')),
                    };
                    match parse_component(body) {
                        Some((r, Some(k))) => coefs.push((r, k, sign)),
                        _ => return Err(bad()),
                    }
                }
            }
            return Ok(Term::Exp { offset, coefs });
        }
        parse_component(s).map(|(r, k)| Term::Raw(r, k)).ok_or_else(bad)
    }
}

impl FeatureSpec {
    pub fn parse(id: impl Into<String>, text: &str) -> Result<Self> {
        let (transform, body) = match text.trim().strip_prefix("corrupt:") {
            Some(rest) => (Transform::Corrupted, rest),
            None => (Transform::Identity, text),
        };
        let terms = body
            .split(';')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(Term::from_str)
            .collect::<Result<Vec<_>>>()?;
        if terms.is_empty() {
            return Err(Error::Config("empty feature map".into()));
        }
        Ok(FeatureSpec::new(id, terms).with_transform(transform))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(z: f64, x: f64) -> Observation<f64> {
        Observation { y: 0.0, a: 1, d: vec![0.5], m: vec![-1.0], z: vec![z], w: vec![4.0], x: vec![x] }
    }

    #[test]
    fn concatenates_in_declared_order() {
        let spec = FeatureSpec::linear("c0", &[Role::Z, Role::X]);
        assert_eq!(evaluate_features(&spec, &obs(2.0, 3.0)).unwrap(), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn five_term_instrument() {
        let spec = FeatureSpec::linear("c2", &[Role::Z, Role::M, Role::D, Role::X]);
        let v = evaluate_features(&spec, &obs(2.0, 3.0)).unwrap();
        assert_eq!(v, vec![1.0, 2.0, -1.0, 0.5, 3.0]);
    }

    #[test]
    fn corruption_arithmetic() {
        assert_eq!(corrupt(1.0), 1.5);
        assert_eq!(corrupt(-1.0), 1.5);
        assert_eq!(corrupt(0.0), 0.0);
        assert_eq!(corrupt(corrupt(2.0)), corrupt(4.0));
        assert_ne!(corrupt(corrupt(2.0)), 2.0);
    }

    #[test]
    fn binary_components_left_alone() {
        let mut spec = FeatureSpec::linear("h", &[Role::D, Role::M]).with_transform(Transform::Corrupted);
        spec.binary.insert((Role::D, 1));
        let o = Observation { y: 0.0, a: 1, d: vec![1.0], m: vec![-1.0], z: vec![], w: vec![], x: vec![] };
        assert_eq!(evaluate_features(&spec, &o).unwrap(), vec![1.0, 1.0, 1.5]);
    }

    #[test]
    fn exp_terms_round_trip_through_text() {
        let spec = FeatureSpec::parse("q1", "exp(0.25 - 0.6667*Z1 - 1*D1 + 0.5*X1); exp(-1e-3*Z1)").unwrap();
        let again = FeatureSpec::parse("q1", &spec.to_string()).unwrap();
        assert_eq!(spec, again);
        let v = evaluate_features(&spec, &obs(1.0, 2.0)).unwrap();
        let expect0 = (0.25f64 - 0.6667 - 0.5 + 1.0).exp();
        assert!((v[0] - expect0).abs() < 1e-12);
        assert!((v[1] - (-1e-3f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn missing_role_is_a_config_error() {
        let spec = FeatureSpec::linear("h0", &[Role::W, Role::X]);
        let o = Observation { y: 0.0, a: 0, d: vec![0.0], m: vec![0.0], z: vec![0.0], w: vec![1.0], x: vec![] };
        assert!(evaluate_features(&spec, &o).is_err());
    }
}
