//! Bridge kinds, the polymorphic bridge value, and the set of nuisances an
//! estimator consumes.

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::features::FeatureSpec;
use crate::minimax::KernelBridge;
use crate::parametric::LinearBridge;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BridgeKind {
    H2,
    H1,
    H0,
    Q0,
    Q1,
    Q2,
    /// Outcome bridge for the counterfactual mean E[Y(1)].
    Ht,
}

impl BridgeKind {
    pub const CHAIN: [BridgeKind; 6] =
        [BridgeKind::H2, BridgeKind::H1, BridgeKind::H0, BridgeKind::Q0, BridgeKind::Q1, BridgeKind::Q2];
}

impl fmt::Display for BridgeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BridgeKind::H2 => "h2",
            BridgeKind::H1 => "h1",
            BridgeKind::H0 => "h0",
            BridgeKind::Q0 => "q0",
            BridgeKind::Q1 => "q1",
            BridgeKind::Q2 => "q2",
            BridgeKind::Ht => "ht",
        })
    }
}

impl FromStr for BridgeKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim() {
            "h2" => BridgeKind::H2,
            "h1" => BridgeKind::H1,
            "h0" => BridgeKind::H0,
            "q0" => BridgeKind::Q0,
            "q1" => BridgeKind::Q1,
            "q2" => BridgeKind::Q2,
            "ht" => BridgeKind::Ht,
            other => return Err(Error::Config(format!("unknown bridge kind `{other}`"))),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Bridge<T: Scalar> {
    Linear(LinearBridge<T>),
    Kernel(KernelBridge<T>),
    /// A bridge that ignores its inputs.
    Constant { kind: BridgeKind, value: T },
}

impl<T: Scalar> Bridge<T> {
    pub fn kind(&self) -> BridgeKind {
        match self {
            Bridge::Linear(b) => b.kind,
            Bridge::Kernel(b) => b.kind,
            Bridge::Constant { kind, .. } => *kind,
        }
    }

    pub fn constant(kind: BridgeKind, value: T) -> Self {
        Bridge::Constant { kind, value }
    }

    pub fn eval(&self, ds: &Dataset<T>) -> Result<DVector<T>> {
        let v = match self {
            Bridge::Linear(b) => b.eval(ds)?,
            Bridge::Kernel(b) => b.eval(ds)?,
            Bridge::Constant { value, .. } => DVector::from_element(ds.n(), *value),
        };
        if let Some(i) = v.iter().position(|x| !x.finite()) {
            return Err(Error::Numerical(format!("{} evaluates to a non-finite value at row {}", self.kind(), i + 1)));
        }
        Ok(v)
    }
}

/// The six nuisances of the path-specific functional plus the E[Y(1)]
/// outcome bridge; any slot may be empty.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BridgeSet<T: Scalar> {
    pub h2: Option<Bridge<T>>,
    pub h1: Option<Bridge<T>>,
    pub h0: Option<Bridge<T>>,
    pub q0: Option<Bridge<T>>,
    pub q1: Option<Bridge<T>>,
    pub q2: Option<Bridge<T>>,
    pub ht: Option<Bridge<T>>,
}

impl<T: Scalar> BridgeSet<T> {
    pub fn slot(&self, kind: BridgeKind) -> Option<&Bridge<T>> {
        match kind {
            BridgeKind::H2 => self.h2.as_ref(),
            BridgeKind::H1 => self.h1.as_ref(),
            BridgeKind::H0 => self.h0.as_ref(),
            BridgeKind::Q0 => self.q0.as_ref(),
            BridgeKind::Q1 => self.q1.as_ref(),
            BridgeKind::Q2 => self.q2.as_ref(),
            BridgeKind::Ht => self.ht.as_ref(),
        }
    }

    fn slot_mut(&mut self, kind: BridgeKind) -> &mut Option<Bridge<T>> {
        match kind {
            BridgeKind::H2 => &mut self.h2,
            BridgeKind::H1 => &mut self.h1,
            BridgeKind::H0 => &mut self.h0,
            BridgeKind::Q0 => &mut self.q0,
            BridgeKind::Q1 => &mut self.q1,
            BridgeKind::Q2 => &mut self.q2,
            BridgeKind::Ht => &mut self.ht,
        }
    }

    /// Stores `b` in the slot named by its kind.
    pub fn insert(&mut self, b: Bridge<T>) {
        let k = b.kind();
        *self.slot_mut(k) = Some(b);
    }

    pub fn require(&self, kind: BridgeKind) -> Result<&Bridge<T>> {
        let b = self.slot(kind).ok_or_else(|| Error::Config(format!("bridge {kind} is missing")))?;
        if b.kind() != kind {
            return Err(Error::Config(format!("slot {kind} holds a {} bridge", b.kind())));
        }
        Ok(b)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Bridge<T>> {
        [&self.h2, &self.h1, &self.h0, &self.q0, &self.q1, &self.q2, &self.ht].into_iter().flatten()
    }

    /// Constant h's and q's, mostly for tests and degenerate checks.
    pub fn constants(h: T, q0: T, q1: T, q2: T) -> Self {
        BridgeSet {
            h2: Some(Bridge::constant(BridgeKind::H2, h)),
            h1: Some(Bridge::constant(BridgeKind::H1, h)),
            h0: Some(Bridge::constant(BridgeKind::H0, h)),
            q0: Some(Bridge::constant(BridgeKind::Q0, q0)),
            q1: Some(Bridge::constant(BridgeKind::Q1, q1)),
            q2: Some(Bridge::constant(BridgeKind::Q2, q2)),
            ht: None,
        }
    }
}

// ---------------------------------------------------------------------------
// Text serialization
//
//   bridge h2 linear
//   map 1; W; M; D; X
//   coef 0.1 0.2 ...
//
//   bridge q0 kernel
//   blocks W X
//   dims 1 1
//   bandwidth 1.2 0.8
//   alpha ...
//   row ...           (one line per support point)
//
//   bridge h0 constant
//   value 4.5

fn join<T: Scalar>(v: impl IntoIterator<Item = T>) -> String {
    v.into_iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(" ")
}

impl<T: Scalar> fmt::Display for Bridge<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Bridge::Linear(b) => {
                writeln!(f, "bridge {} linear", b.kind)?;
                writeln!(f, "map {}", b.regressors)?;
                writeln!(f, "coef {}", join(b.coefficients.iter().copied()))
            }
            Bridge::Kernel(b) => {
                writeln!(f, "bridge {} kernel", b.kind)?;
                let blocks: Vec<String> = b.kspec.blocks.iter().map(|r| r.to_string()).collect();
                writeln!(f, "blocks {}", blocks.join(" "))?;
                let dims: Vec<String> = b.kspec.dims.iter().map(|d| d.to_string()).collect();
                writeln!(f, "dims {}", dims.join(" "))?;
                writeln!(f, "bandwidth {}", join(b.kspec.bandwidths.iter().copied()))?;
                writeln!(f, "alpha {}", join(b.alpha.iter().copied()))?;
                for i in 0..b.support.nrows() {
                    writeln!(f, "row {}", join(b.support.row(i).iter().copied()))?;
                }
                Ok(())
            }
            Bridge::Constant { kind, value } => {
                writeln!(f, "bridge {kind} constant")?;
                writeln!(f, "value {value:e}")
            }
        }
    }
}

fn parse_nums<T: Scalar>(s: &str) -> Result<Vec<T>> {
    s.split_whitespace()
        .map(|t| t.parse::<T>().map_err(|_| Error::Config(format!("bad number `{t}` in bridge text"))))
        .collect()
}

/// Parses every bridge found in `text` (the output of `Display`, possibly
/// concatenated).
pub fn parse_bridges<T: Scalar>(text: &str) -> Result<Vec<Bridge<T>>> {
    use crate::data::Role;
    use crate::kernel::KernelSpec;
    use nalgebra::DMatrix;

    let mut out = Vec::new();
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')).peekable();
    while let Some(head) = lines.next() {
        let parts: Vec<&str> = head.split_whitespace().collect();
        if parts.len() != 3 || parts[0] != "bridge" {
            return Err(Error::Config(format!("expected `bridge <kind> <form>`, found `{head}`")));
        }
        let kind: BridgeKind = parts[1].parse()?;
        let mut field = |name: &str| -> Result<String> {
            let l = lines.next().ok_or_else(|| Error::Config(format!("missing `{name}` line")))?;
            l.strip_prefix(name)
                .map(|r| r.trim().to_string())
                .ok_or_else(|| Error::Config(format!("expected `{name}`, found `{l}`")))
        };
        match parts[2] {
            "linear" => {
                let map = FeatureSpec::parse(kind.to_string(), &field("map")?)?;
                let coef = parse_nums::<T>(&field("coef")?)?;
                out.push(Bridge::Linear(LinearBridge {
                    kind,
                    regressors: map,
                    coefficients: DVector::from_vec(coef),
                }));
            }
            "constant" => {
                let v = parse_nums::<T>(&field("value")?)?;
                let value = *v.first().ok_or_else(|| Error::Config("empty constant".into()))?;
                out.push(Bridge::Constant { kind, value });
            }
            "kernel" => {
                let blocks = field("blocks")?
                    .split_whitespace()
                    .map(|s| {
                        s.chars().next().and_then(Role::from_prefix).ok_or_else(|| Error::Config(format!("bad block `{s}`")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                let dims = field("dims")?
                    .split_whitespace()
                    .map(|s| s.parse::<usize>().map_err(|_| Error::Config(format!("bad width `{s}`"))))
                    .collect::<Result<Vec<_>>>()?;
                let bandwidths = parse_nums::<T>(&field("bandwidth")?)?;
                let alpha = parse_nums::<T>(&field("alpha")?)?;
                let mut rows: Vec<Vec<T>> = Vec::new();
                while lines.peek().is_some_and(|l| l.starts_with("row")) {
                    let l = lines.next().unwrap_or_default();
                    rows.push(parse_nums(l.trim_start_matches("row"))?);
                }
                if rows.len() != alpha.len() {
                    return Err(Error::Config(format!(
                        "kernel bridge {kind}: {} support rows for {} coefficients",
                        rows.len(),
                        alpha.len()
                    )));
                }
                let p = rows.first().map_or(0, |r| r.len());
                let flat: Vec<T> = rows.into_iter().flatten().collect();
                let kspec = KernelSpec::new(blocks, dims, bandwidths)?;
                out.push(Bridge::Kernel(KernelBridge {
                    kind,
                    support: DMatrix::from_row_slice(alpha.len(), p, &flat),
                    alpha: DVector::from_vec(alpha),
                    kspec,
                }));
            }
            other => return Err(Error::Config(format!("unknown bridge form `{other}`"))),
        }
    }
    Ok(out)
}
