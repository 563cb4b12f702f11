//! Observations `(U, X, Z, Y)` and CSV ingestion with a column role map.
//!
//! Covariate matrices are stored row-major so the local fitting loops can walk
//! one observation at a time. The observations are also indexed by the order
//! of the smoothing variable `U`, which is what the kernel window queries use.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Dataset {
    u: Vec<f64>,
    x: Vec<f64>,
    z: Vec<f64>,
    y: Vec<f64>,
    p: usize,
    d: usize,
    x_names: Vec<String>,
    z_names: Vec<String>,
    order: Vec<usize>,
    u_sorted: Vec<f64>,
}

impl Dataset {
    /// Builds a dataset from row-major `x` (n×p) and `z` (n×d) blocks.
    pub fn new(u: Vec<f64>, x: Vec<f64>, p: usize, z: Vec<f64>, d: usize, y: Vec<f64>) -> Result<Self> {
        let n = u.len();
        if n == 0 {
            return Err(Error::InvalidData("dataset has no observations".into()));
        }
        if p == 0 {
            return Err(Error::InvalidData("at least one varying-coefficient covariate is required".into()));
        }
        if y.len() != n {
            return Err(Error::InvalidData(format!("y has {} rows, u has {n}", y.len())));
        }
        if x.len() != n * p {
            return Err(Error::InvalidData(format!("x has {} entries, expected {n}x{p}", x.len())));
        }
        if z.len() != n * d {
            return Err(Error::InvalidData(format!("z has {} entries, expected {n}x{d}", z.len())));
        }
        for (name, values) in [("u", &u), ("x", &x), ("z", &z), ("y", &y)] {
            if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
                return Err(Error::InvalidData(format!("non-finite value in {name} at flat index {pos}")));
            }
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| u[a].total_cmp(&u[b]).then(a.cmp(&b)));
        let u_sorted = order.iter().map(|&i| u[i]).collect();
        Ok(Self {
            u,
            x,
            z,
            y,
            p,
            d,
            x_names: (1..=p).map(|j| format!("x{j}")).collect(),
            z_names: (1..=d).map(|j| format!("z{j}")).collect(),
            order,
            u_sorted,
        })
    }

    /// Column-oriented constructor, convenient for small hand-built examples.
    pub fn from_columns(u: Vec<f64>, x_cols: &[Vec<f64>], z_cols: &[Vec<f64>], y: Vec<f64>) -> Result<Self> {
        let n = u.len();
        let p = x_cols.len();
        let d = z_cols.len();
        for col in x_cols.iter().chain(z_cols) {
            if col.len() != n {
                return Err(Error::InvalidData(format!("column of length {} next to n = {n}", col.len())));
            }
        }
        let x = (0..n).flat_map(|i| x_cols.iter().map(move |c| c[i])).collect();
        let z = (0..n).flat_map(|i| z_cols.iter().map(move |c| c[i])).collect();
        Self::new(u, x, p, z, d, y)
    }

    pub fn with_names(mut self, x_names: Vec<String>, z_names: Vec<String>) -> Result<Self> {
        if x_names.len() != self.p || z_names.len() != self.d {
            return Err(Error::InvalidData("column name count does not match the design".into()));
        }
        self.x_names = x_names;
        self.z_names = z_names;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.u.len()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn z(&self) -> &[f64] {
        &self.z
    }

    pub fn x_row(&self, i: usize) -> &[f64] {
        &self.x[i * self.p..(i + 1) * self.p]
    }

    pub fn z_row(&self, i: usize) -> &[f64] {
        &self.z[i * self.d..(i + 1) * self.d]
    }

    pub fn x_names(&self) -> &[String] {
        &self.x_names
    }

    pub fn z_names(&self) -> &[String] {
        &self.z_names
    }

    /// Support bounds `(min u, max u)`.
    pub fn omega(&self) -> (f64, f64) {
        (self.u_sorted[0], self.u_sorted[self.n() - 1])
    }

    pub fn omega_len(&self) -> f64 {
        let (lo, hi) = self.omega();
        hi - lo
    }

    /// Indices of observations with `lo < u < hi`, in increasing order of `u`.
    pub fn window(&self, lo: f64, hi: f64) -> &[usize] {
        let start = self.u_sorted.partition_point(|&v| v <= lo);
        let end = self.u_sorted.partition_point(|&v| v < hi);
        &self.order[start..end.max(start)]
    }

    /// Observation indices sorted by `u`.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// Keeps only the listed parametric columns, in the given order.
    pub fn select_z(&self, cols: &[usize]) -> Result<Self> {
        if let Some(&bad) = cols.iter().find(|&&c| c >= self.d) {
            return Err(Error::InvalidArgument(format!("z column {bad} out of range (d = {})", self.d)));
        }
        let n = self.n();
        let k = cols.len();
        let mut z = Vec::with_capacity(n * k);
        for i in 0..n {
            let row = self.z_row(i);
            z.extend(cols.iter().map(|&c| row[c]));
        }
        Ok(Self {
            z,
            d: k,
            z_names: cols.iter().map(|&c| self.z_names[c].clone()).collect(),
            ..self.clone()
        })
    }

    /// Keeps only the listed varying-coefficient columns, in the given order.
    pub fn select_x(&self, cols: &[usize]) -> Result<Self> {
        if cols.is_empty() {
            return Err(Error::InvalidArgument("cannot drop every varying-coefficient column".into()));
        }
        if let Some(&bad) = cols.iter().find(|&&c| c >= self.p) {
            return Err(Error::InvalidArgument(format!("x column {bad} out of range (p = {})", self.p)));
        }
        let n = self.n();
        let k = cols.len();
        let mut x = Vec::with_capacity(n * k);
        for i in 0..n {
            let row = self.x_row(i);
            x.extend(cols.iter().map(|&c| row[c]));
        }
        Ok(Self {
            x,
            p: k,
            x_names: cols.iter().map(|&c| self.x_names[c].clone()).collect(),
            ..self.clone()
        })
    }

    /// Subsample of rows (used for cross-validation folds).
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let u = rows.iter().map(|&i| self.u[i]).collect();
        let y = rows.iter().map(|&i| self.y[i]).collect();
        let x = rows.iter().flat_map(|&i| self.x_row(i).iter().copied()).collect();
        let z = rows.iter().flat_map(|&i| self.z_row(i).iter().copied()).collect();
        Self::new(u, x, self.p, z, self.d, y)?.with_names(self.x_names.clone(), self.z_names.clone())
    }

    /// Same covariates, new response vector.
    pub fn with_response(&self, y: Vec<f64>) -> Result<Self> {
        if y.len() != self.n() {
            return Err(Error::InvalidData(format!("response has {} rows, expected {}", y.len(), self.n())));
        }
        if let Some(pos) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!("non-finite response at row {pos}")));
        }
        Ok(Self { y, ..self.clone() })
    }

    /// Multiplies parametric column `j` by `c`.
    pub fn scale_z(&self, j: usize, c: f64) -> Self {
        let mut out = self.clone();
        for i in 0..self.n() {
            out.z[i * self.d + j] *= c;
        }
        out
    }

    /// Shifts every `u` by `c`.
    pub fn shift_u(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.u.iter_mut().for_each(|v| *v += c);
        out.u_sorted.iter_mut().for_each(|v| *v += c);
        out
    }

    /// `Z_i' beta` for every observation.
    pub fn z_times(&self, beta: &[f64]) -> Vec<f64> {
        debug_assert_eq!(beta.len(), self.d);
        (0..self.n())
            .map(|i| self.z_row(i).iter().zip(beta).map(|(a, b)| a * b).sum())
            .collect()
    }
}

/// Role a CSV column plays in the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    U,
    X,
    Z,
    Y,
}

/// Column name to role assignment, read from a sidecar file of `column = "role"` lines.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RoleMap {
    pub roles: BTreeMap<String, Role>,
}

impl RoleMap {
    /// Parses and validates a role map, collecting every problem found.
    pub fn parse(text: &str) -> std::result::Result<Self, Vec<String>> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| vec![format!("role map: {e}")])?;
        let mut errors = Vec::new();
        let mut roles = BTreeMap::new();
        for (column, value) in table {
            match value.as_str().map(str::to_ascii_lowercase).as_deref() {
                Some("u") => {
                    roles.insert(column, Role::U);
                }
                Some("x") => {
                    roles.insert(column, Role::X);
                }
                Some("z") => {
                    roles.insert(column, Role::Z);
                }
                Some("y") => {
                    roles.insert(column, Role::Y);
                }
                _ => errors.push(format!("role map: column `{column}` has role {value}, expected one of u, x, z, y")),
            }
        }
        let map = RoleMap { roles };
        errors.extend(map.check());
        if errors.is_empty() {
            Ok(map)
        } else {
            Err(errors)
        }
    }

    fn check(&self) -> Vec<String> {
        let mut errors = Vec::new();
        for (role, label) in [(Role::U, "u"), (Role::Y, "y")] {
            let cols: Vec<&str> = self
                .roles
                .iter()
                .filter(|(_, r)| **r == role)
                .map(|(c, _)| c.as_str())
                .collect();
            match cols.len() {
                0 => errors.push(format!("role map: no column has role {label}")),
                1 => {}
                _ => errors.push(format!(
                    "role map: duplicate role {label} assigned to columns {}",
                    cols.join(", ")
                )),
            }
        }
        errors
    }
}

/// Reads a headed CSV file, assigning columns by `roles`. X and Z columns keep
/// their file order. With `intercept`, a constant column is prepended to X.
pub fn read_csv(path: &Path, roles: &RoleMap, intercept: bool) -> Result<Dataset> {
    let reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    read_csv_from(reader, roles, intercept)
}

pub fn read_csv_from<R: std::io::Read>(mut reader: csv::Reader<R>, roles: &RoleMap, intercept: bool) -> Result<Dataset> {
    let problems = roles.check();
    if !problems.is_empty() {
        return Err(Error::InvalidData(problems.join("; ")));
    }
    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    for name in roles.roles.keys() {
        if !headers.contains(name) {
            return Err(Error::InvalidData(format!("role map names column `{name}` which is not in the header")));
        }
    }
    let role_of: Vec<Option<Role>> = headers.iter().map(|h| roles.roles.get(h).copied()).collect();
    let pick = |r: Role| -> Vec<usize> { (0..headers.len()).filter(|&c| role_of[c] == Some(r)).collect() };
    let (u_col, y_col) = (pick(Role::U)[0], pick(Role::Y)[0]);
    let x_cols = pick(Role::X);
    let z_cols = pick(Role::Z);
    let p = x_cols.len() + usize::from(intercept);
    if p == 0 {
        return Err(Error::InvalidData("no x columns and no intercept: the model needs p >= 1".into()));
    }

    let (mut u, mut y, mut x, mut z) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (row_idx, record) in reader.records().enumerate() {
        let record = record?;
        let line = row_idx + 2;
        let field = |c: usize| -> Result<f64> {
            let raw = record.get(c).unwrap_or("").trim();
            if raw.is_empty() || raw.eq_ignore_ascii_case("na") || raw.eq_ignore_ascii_case("nan") {
                return Err(Error::InvalidData(format!("missing value in column `{}` on line {line}", headers[c])));
            }
            let v: f64 = raw
                .parse()
                .map_err(|_| Error::InvalidData(format!("`{raw}` in column `{}` on line {line} is not a number", headers[c])))?;
            if !v.is_finite() {
                return Err(Error::InvalidData(format!("non-finite value in column `{}` on line {line}", headers[c])));
            }
            Ok(v)
        };
        u.push(field(u_col)?);
        y.push(field(y_col)?);
        if intercept {
            x.push(1.0);
        }
        for &c in &x_cols {
            x.push(field(c)?);
        }
        for &c in &z_cols {
            z.push(field(c)?);
        }
    }
    let mut x_names: Vec<String> = Vec::with_capacity(p);
    if intercept {
        x_names.push("(intercept)".into());
    }
    x_names.extend(x_cols.iter().map(|&c| headers[c].clone()));
    let z_names = z_cols.iter().map(|&c| headers[c].clone()).collect();
    Dataset::new(u, x, p, z, z_cols.len(), y)?.with_names(x_names, z_names)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn roles(text: &str) -> RoleMap {
        RoleMap::parse(text).unwrap()
    }

    #[test]
    fn window_is_open_interval_in_u_order() {
        let data = Dataset::from_columns(vec![0.5, 0.1, 0.3, 0.9], &[vec![1.0; 4]], &[], vec![0.0; 4]).unwrap();
        assert_eq!(data.window(0.1, 0.6), &[2, 0]);
        assert_eq!(data.omega(), (0.1, 0.9));
        assert!(data.window(0.95, 2.0).is_empty());
    }

    #[test]
    fn rejects_non_finite_and_empty() {
        assert!(Dataset::from_columns(vec![], &[vec![]], &[], vec![]).is_err());
        assert!(Dataset::from_columns(vec![f64::NAN], &[vec![1.0]], &[], vec![1.0]).is_err());
        assert!(Dataset::from_columns(vec![0.0], &[], &[], vec![1.0]).is_err());
    }

    #[test]
    fn duplicate_y_role_is_reported() {
        let errs = RoleMap::parse("age = \"u\"\nsurvived = \"y\"\ndied = \"y\"").unwrap_err();
        assert!(errs.iter().any(|e| e.contains("duplicate role y")), "{errs:?}");
    }

    #[test]
    fn csv_roundtrip_with_intercept() {
        let text = "age,area,sex,y,junk\n1.0,2.0,0,1,9\n2.0,3.5,1,0,9\n";
        let reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
        let map = roles("age = \"u\"\narea = \"x\"\nsex = \"z\"\ny = \"y\"");
        let data = read_csv_from(reader, &map, true).unwrap();
        assert_eq!((data.n(), data.p(), data.d()), (2, 2, 1));
        assert_eq!(data.x_row(1), &[1.0, 3.5]);
        assert_eq!(data.z_names(), &["sex".to_string()]);
    }

    #[test]
    fn csv_missing_value_rejected() {
        let text = "u,y\n1.0,\n";
        let reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
        let err = read_csv_from(reader, &roles("u = \"u\"\ny = \"y\""), true).unwrap_err();
        assert!(err.to_string().contains("missing value"));
    }
}
