//! Observation data model and CSV ingestion.
//!
//! Columns follow a flat naming scheme: `y`, `a`, then numbered blocks
//! `d1..dK`, `m1..mK`, `z1..zK`, `w1..wK`, `x1..xK`. Data are stored
//! column-block-wise (each block row-major `n × dim`) because every consumer
//! builds design or Gram matrices block by block.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Variable blocks that feature maps and kernels can draw from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Role {
    D,
    M,
    Z,
    W,
    X,
}

impl Role {
    pub const ALL: [Role; 5] = [Role::D, Role::M, Role::Z, Role::W, Role::X];

    pub fn prefix(self) -> char {
        match self {
            Role::D => 'd',
            Role::M => 'm',
            Role::Z => 'z',
            Role::W => 'w',
            Role::X => 'x',
        }
    }

    pub fn from_prefix(c: char) -> Option<Role> {
        match c.to_ascii_lowercase() {
            'd' => Some(Role::D),
            'm' => Some(Role::M),
            'z' => Some(Role::Z),
            'w' => Some(Role::W),
            'x' => Some(Role::X),
            _ => None,
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.prefix().to_ascii_uppercase())
    }
}

/// Per-block dimensions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub dim_d: usize,
    pub dim_m: usize,
    pub dim_z: usize,
    pub dim_w: usize,
    pub dim_x: usize,
}

impl Default for ColumnSchema {
    fn default() -> Self {
        ColumnSchema::uniform(1)
    }
}

impl ColumnSchema {
    pub fn uniform(k: usize) -> Self {
        ColumnSchema {
            dim_d: k,
            dim_m: k,
            dim_z: k,
            dim_w: k,
            dim_x: k,
        }
    }

    pub fn dim(&self, role: Role) -> usize {
        match role {
            Role::D => self.dim_d,
            Role::M => self.dim_m,
            Role::Z => self.dim_z,
            Role::W => self.dim_w,
            Role::X => self.dim_x,
        }
    }

    fn validate(&self) -> Result<()> {
        for role in [Role::D, Role::M, Role::Z, Role::W] {
            if self.dim(role) == 0 {
                return Err(Error::Schema(format!("block {role} needs at least one column")));
            }
        }
        Ok(())
    }

    /// Header names in canonical order.
    pub fn header(&self) -> Vec<String> {
        let mut h = vec!["y".to_string(), "a".to_string()];
        for role in Role::ALL {
            for j in 1..=self.dim(role) {
                h.push(format!("{}{}", role.prefix(), j));
            }
        }
        h
    }

    /// Reads block dimensions off a header. Column order is free; numbering
    /// inside a block must be contiguous from 1.
    pub fn infer(header: &[&str]) -> Result<Self> {
        let mut dims = [0usize; 5];
        for name in header {
            let name = name.trim();
            let mut chars = name.chars();
            let Some(first) = chars.next() else { continue };
            let Some(role) = Role::from_prefix(first) else { continue };
            if let Ok(k) = chars.as_str().parse::<usize>() {
                dims[role.index()] = dims[role.index()].max(k);
            }
        }
        let schema = ColumnSchema {
            dim_d: dims[0],
            dim_m: dims[1],
            dim_z: dims[2],
            dim_w: dims[3],
            dim_x: dims[4],
        };
        schema.validate()?;
        Ok(schema)
    }
}

/// One unit's record.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation<T> {
    pub y: T,
    pub a: u8,
    pub d: Vec<T>,
    pub m: Vec<T>,
    pub z: Vec<T>,
    pub w: Vec<T>,
    pub x: Vec<T>,
}

impl<T: Scalar> Observation<T> {
    pub fn block(&self, role: Role) -> &[T] {
        match role {
            Role::D => &self.d,
            Role::M => &self.m,
            Role::Z => &self.z,
            Role::W => &self.w,
            Role::X => &self.x,
        }
    }
}

/// An immutable sample. Cheap to share across threads.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset<T> {
    schema: ColumnSchema,
    y: Vec<T>,
    a: Vec<u8>,
    blocks: [Vec<T>; 5],
}

impl<T: Scalar> Dataset<T> {
    /// Builds a dataset from column data; `blocks` are row-major per role in
    /// the order D, M, Z, W, X.
    pub fn from_columns(schema: ColumnSchema, y: Vec<T>, a: Vec<u8>, blocks: [Vec<T>; 5]) -> Result<Self> {
        schema.validate()?;
        let n = y.len();
        if a.len() != n {
            return Err(Error::Schema(format!("treatment column has {} rows, outcome has {n}", a.len())));
        }
        for role in Role::ALL {
            let len = blocks[role.index()].len();
            if len != n * schema.dim(role) {
                return Err(Error::Schema(format!(
                    "block {role} has {len} values, expected {}",
                    n * schema.dim(role)
                )));
            }
        }
        if let Some(i) = a.iter().position(|&v| v > 1) {
            return Err(Error::Parse { row: i + 1, msg: format!("treatment {} not in {{0,1}}", a[i]) });
        }
        let ds = Dataset { schema, y, a, blocks };
        for i in 0..n {
            if !ds.y[i].finite() || Role::ALL.iter().any(|&r| ds.row_block(r, i).iter().any(|v| !v.finite())) {
                return Err(Error::Parse { row: i + 1, msg: "non-finite value".into() });
            }
        }
        Ok(ds)
    }

    pub fn from_rows(schema: ColumnSchema, rows: &[Observation<T>]) -> Result<Self> {
        let mut y = Vec::with_capacity(rows.len());
        let mut a = Vec::with_capacity(rows.len());
        let mut blocks: [Vec<T>; 5] = Default::default();
        for (i, obs) in rows.iter().enumerate() {
            y.push(obs.y);
            a.push(obs.a);
            for role in Role::ALL {
                let b = obs.block(role);
                if b.len() != schema.dim(role) {
                    return Err(Error::Schema(format!(
                        "row {}: block {role} has {} components, schema says {}",
                        i + 1,
                        b.len(),
                        schema.dim(role)
                    )));
                }
                blocks[role.index()].extend_from_slice(b);
            }
        }
        Self::from_columns(schema, y, a, blocks)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn schema(&self) -> &ColumnSchema {
        &self.schema
    }

    pub fn y(&self) -> &[T] {
        &self.y
    }

    pub fn a(&self) -> &[u8] {
        &self.a
    }

    /// Treatment as a scalar, handy for weights.
    pub fn a_scalar(&self, i: usize) -> T {
        if self.a[i] == 1 {
            T::one()
        } else {
            T::zero()
        }
    }

    pub fn block(&self, role: Role) -> &[T] {
        &self.blocks[role.index()]
    }

    pub fn row_block(&self, role: Role, i: usize) -> &[T] {
        let k = self.schema.dim(role);
        &self.blocks[role.index()][i * k..(i + 1) * k]
    }

    pub fn observation(&self, i: usize) -> Observation<T> {
        Observation {
            y: self.y[i],
            a: self.a[i],
            d: self.row_block(Role::D, i).to_vec(),
            m: self.row_block(Role::M, i).to_vec(),
            z: self.row_block(Role::Z, i).to_vec(),
            w: self.row_block(Role::W, i).to_vec(),
            x: self.row_block(Role::X, i).to_vec(),
        }
    }

    pub fn count_treated(&self) -> usize {
        self.a.iter().filter(|&&a| a == 1).count()
    }

    pub fn has_both_arms(&self) -> bool {
        let t = self.count_treated();
        t > 0 && t < self.n()
    }

    /// Rows `idx` in the given order (duplicates allowed, which is what the
    /// bootstrap needs).
    pub fn select(&self, idx: &[usize]) -> Self {
        let y = idx.iter().map(|&i| self.y[i]).collect();
        let a = idx.iter().map(|&i| self.a[i]).collect();
        let blocks = std::array::from_fn(|b| {
            let role = Role::ALL[b];
            let mut out = Vec::with_capacity(idx.len() * self.schema.dim(role));
            for &i in idx {
                out.extend_from_slice(self.row_block(role, i));
            }
            out
        });
        Dataset { schema: self.schema, y, a, blocks }
    }

    /// Indices of rows with the given treatment value.
    pub fn arm(&self, a: u8) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.a[i] == a).collect()
    }

    /// A copy with a replaced outcome column.
    pub fn with_outcome(&self, y: Vec<T>) -> Result<Self> {
        if y.len() != self.n() {
            return Err(Error::Schema("outcome length mismatch".into()));
        }
        let mut out = self.clone();
        out.y = y;
        Ok(out)
    }

    /// True when every outcome is exactly 0 or 1.
    pub fn outcome_is_binary(&self) -> bool {
        self.y.iter().all(|&v| v == T::zero() || v == T::one())
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(self.schema.header())?;
        let mut rec: Vec<String> = Vec::new();
        for i in 0..self.n() {
            rec.clear();
            rec.push(self.y[i].to_string());
            rec.push(self.a[i].to_string());
            for role in Role::ALL {
                rec.extend(self.row_block(role, i).iter().map(|v| v.to_string()));
            }
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    /// Parses CSV text. With `schema = None` the block dimensions are read
    /// off the header.
    pub fn read_csv<R: Read>(r: R, schema: Option<&ColumnSchema>) -> Result<Self> {
        let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
        let header: Vec<String> = rd.headers()?.iter().map(|s| s.to_string()).collect();
        let hrefs: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
        let schema = match schema {
            Some(s) => *s,
            None => ColumnSchema::infer(&hrefs)?,
        };
        let col = |name: &str| -> Result<usize> {
            hrefs
                .iter()
                .position(|h| *h == name)
                .ok_or_else(|| Error::Schema(format!("missing column `{name}`")))
        };
        let y_col = col("y")?;
        let a_col = col("a")?;
        let mut block_cols: [Vec<usize>; 5] = Default::default();
        for role in Role::ALL {
            for j in 1..=schema.dim(role) {
                block_cols[role.index()].push(col(&format!("{}{}", role.prefix(), j))?);
            }
        }

        let mut y = Vec::new();
        let mut a = Vec::new();
        let mut blocks: [Vec<T>; 5] = Default::default();
        for (r, rec) in rd.records().enumerate() {
            let row = r + 1;
            let rec = rec?;
            let num = |c: usize| -> Result<T> {
                let cell = rec.get(c).unwrap_or("");
                let v: T = cell.parse().map_err(|_| Error::Parse {
                    row,
                    msg: format!("column `{}`: `{cell}` is not a number", hrefs[c]),
                })?;
                if !v.finite() {
                    return Err(Error::Parse { row, msg: format!("column `{}` is not finite", hrefs[c]) });
                }
                Ok(v)
            };
            y.push(num(y_col)?);
            let cell = rec.get(a_col).unwrap_or("");
            let av = match cell.parse::<f64>() {
                Ok(0.0) => 0,
                Ok(1.0) => 1,
                _ => {
                    return Err(Error::Parse { row, msg: format!("treatment `{cell}` is not 0 or 1") });
                }
            };
            a.push(av);
            for role in Role::ALL {
                for &c in &block_cols[role.index()] {
                    blocks[role.index()].push(num(c)?);
                }
            }
        }
        Self::from_columns(schema, y, a, blocks)
    }

    pub fn load_csv(path: impl AsRef<Path>, schema: Option<&ColumnSchema>) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read_csv(std::io::BufReader::new(f), schema)
    }
}

/// Convenience wrapper mirroring the free-function style used elsewhere.
pub fn load_csv<T: Scalar>(path: impl AsRef<Path>, schema: Option<&ColumnSchema>) -> Result<Dataset<T>> {
    Dataset::load_csv(path, schema)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TINY: &str = "y,a,d1,m1,z1,w1,x1\n1.5,1,0.1,0.2,0.3,0.4,0.5\n2,0,1,2,3,4,5\n-1,1,0,0,0,0,0\n";

    #[test]
    fn reads_three_rows() {
        let ds: Dataset<f64> = Dataset::read_csv(TINY.as_bytes(), None).unwrap();
        assert_eq!(ds.n(), 3);
        assert_eq!(*ds.schema(), ColumnSchema::uniform(1));
        assert_eq!(ds.row_block(Role::W, 1), &[4.0]);
        assert_eq!(ds.a(), &[1, 0, 1]);
    }

    #[test]
    fn bad_treatment_reports_row() {
        let mut text = String::from("y,a,d1,m1,z1,w1,x1\n");
        for i in 0..6 {
            let a = if i == 4 { 2 } else { i % 2 };
            text.push_str(&format!("0,{a},0,0,0,0,0\n"));
        }
        let err = Dataset::<f64>::read_csv(text.as_bytes(), None).unwrap_err();
        match err {
            Error::Parse { row, .. } => assert_eq!(row, 5),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn missing_column_is_named() {
        let text = "y,a,d1,m1,z1,x1\n0,1,0,0,0,0\n";
        let schema = ColumnSchema::uniform(1);
        let err = Dataset::<f64>::read_csv(text.as_bytes(), Some(&schema)).unwrap_err();
        assert!(err.to_string().contains("w1"), "{err}");
    }

    #[test]
    fn zero_width_covariates() {
        let text = "y,a,d1,m1,z1,w1\n0,1,1,2,3,4\n";
        let ds: Dataset<f64> = Dataset::read_csv(text.as_bytes(), None).unwrap();
        assert_eq!(ds.schema().dim_x, 0);
        assert!(ds.row_block(Role::X, 0).is_empty());
    }

    #[test]
    fn select_repeats_rows() {
        let ds: Dataset<f64> = Dataset::read_csv(TINY.as_bytes(), None).unwrap();
        let s = ds.select(&[2, 2, 0]);
        assert_eq!(s.y(), &[-1.0, -1.0, 1.5]);
        assert_eq!(s.observation(2), ds.observation(0));
    }
}
