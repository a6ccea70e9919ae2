//! Tabular data model: named real-valued columns with role tags, plus CSV
//! ingestion and serialization shared by every other module.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Column roles. `X1` are effect modifiers of interest, `X2` other
/// determinants of trial participation, `O` unmeasured modifiers (simulated
/// but never fed to estimators).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    X1,
    X2,
    O,
    Treatment,
    Outcome,
    Selection,
    TrueIte,
    Weight,
}

impl Role {
    pub fn name(self) -> &'static str {
        match self {
            Role::X1 => "x1",
            Role::X2 => "x2",
            Role::O => "o",
            Role::Treatment => "treatment",
            Role::Outcome => "outcome",
            Role::Selection => "selection",
            Role::TrueIte => "true_ite",
            Role::Weight => "weight",
        }
    }

    fn single_column(self) -> bool {
        matches!(
            self,
            Role::Treatment | Role::Outcome | Role::Selection | Role::TrueIte | Role::Weight
        )
    }
}

/// Immutable after construction; safe to share across concurrent readers.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
    roles: BTreeMap<Role, Vec<String>>,
    n_rows: usize,
}

impl Dataset {
    pub fn new(
        names: Vec<String>,
        columns: Vec<Vec<f64>>,
        roles: BTreeMap<Role, Vec<String>>,
    ) -> Result<Self> {
        if names.len() != columns.len() {
            return Err(Error::LengthMismatch {
                context: "column names vs columns",
                got: columns.len(),
                expected: names.len(),
            });
        }
        let n_rows = columns.first().map_or(0, |c| c.len());
        for (name, col) in names.iter().zip(&columns) {
            if col.len() != n_rows {
                return Err(Error::ColumnLength {
                    column: name.clone(),
                    got: col.len(),
                    expected: n_rows,
                });
            }
        }
        let ds = Dataset {
            names,
            columns,
            roles,
            n_rows,
        };
        ds.validate()?;
        Ok(ds)
    }

    fn validate(&self) -> Result<()> {
        // role columns exist, disjointness, cardinality
        let mut seen: BTreeMap<&str, Role> = BTreeMap::new();
        for (&role, cols) in &self.roles {
            if role.single_column() && cols.len() > 1 {
                return Err(Error::RoleCardinality(role.name().into(), cols.len()));
            }
            for c in cols {
                if !self.names.iter().any(|n| n == c) {
                    return Err(Error::MissingColumn(c.clone()));
                }
                if let Some(prev) = seen.insert(c.as_str(), role) {
                    return Err(Error::RoleOverlap(
                        prev.name().into(),
                        role.name().into(),
                        c.clone(),
                    ));
                }
            }
        }
        // value constraints
        for (name, col) in self.names.iter().zip(&self.columns) {
            for (row, &v) in col.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::NonFinite {
                        column: name.clone(),
                        row,
                    });
                }
            }
        }
        for role in [Role::Treatment, Role::Selection] {
            if let Some(cols) = self.roles.get(&role) {
                for c in cols {
                    let col = self.column(c)?;
                    for (row, &v) in col.iter().enumerate() {
                        if v != 0.0 && v != 1.0 {
                            return Err(Error::NotBinary {
                                role: role.name(),
                                column: c.clone(),
                                row,
                                value: v,
                            });
                        }
                    }
                }
            }
        }
        if let Some(cols) = self.roles.get(&Role::Weight) {
            for c in cols {
                let col = self.column(c)?;
                for (row, &v) in col.iter().enumerate() {
                    if !(v > 0.0) || !v.is_finite() {
                        return Err(Error::NonPositiveWeight {
                            column: c.clone(),
                            row,
                            value: v,
                        });
                    }
                }
            }
        }
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn column_names(&self) -> &[String] {
        &self.names
    }

    pub fn column(&self, name: &str) -> Result<&[f64]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.columns[i].as_slice())
            .ok_or_else(|| Error::MissingColumn(name.into()))
    }

    pub fn role_columns(&self, role: Role) -> &[String] {
        self.roles.get(&role).map_or(&[], |v| v.as_slice())
    }

    pub fn has_role(&self, role: Role) -> bool {
        self.roles.get(&role).is_some_and(|v| !v.is_empty())
    }

    /// The single column mapped to a unary role.
    pub fn role_column(&self, role: Role) -> Result<&[f64]> {
        let cols = self.role_columns(role);
        match cols.first() {
            Some(name) => self.column(name),
            None => Err(Error::RoleMissing(role.name().into())),
        }
    }

    /// Feature matrix for the requested roles, columns ordered by role
    /// (X1 before X2 before others, by `Role` order) and by schema order
    /// within each role. Pure function of (dataset, roles).
    pub fn select_columns(&self, roles: &[Role]) -> Result<Matrix> {
        let mut ordered: Vec<Role> = roles.to_vec();
        ordered.sort();
        ordered.dedup();
        let mut cols: Vec<&[f64]> = Vec::new();
        for role in ordered {
            let names = self.role_columns(role);
            if names.is_empty() {
                return Err(Error::RoleMissing(role.name().into()));
            }
            for name in names {
                cols.push(self.column(name)?);
            }
        }
        Matrix::from_columns(&cols)
    }

    /// Copy of the dataset restricted to the given rows (order preserved).
    pub fn filter_rows(&self, indices: &[usize]) -> Dataset {
        let columns = self
            .columns
            .iter()
            .map(|c| indices.iter().map(|&i| c[i]).collect())
            .collect();
        Dataset {
            names: self.names.clone(),
            columns,
            roles: self.roles.clone(),
            n_rows: indices.len(),
        }
    }

    /// New dataset with one extra column. Fails on duplicates or invariant
    /// violations for the given role.
    pub fn with_column(&self, name: &str, values: Vec<f64>, role: Option<Role>) -> Result<Dataset> {
        if self.names.iter().any(|n| n == name) {
            return Err(Error::InvalidInput(format!("column '{name}' already exists")));
        }
        if values.len() != self.n_rows {
            return Err(Error::ColumnLength {
                column: name.into(),
                got: values.len(),
                expected: self.n_rows,
            });
        }
        let mut names = self.names.clone();
        names.push(name.to_string());
        let mut columns = self.columns.clone();
        columns.push(values);
        let mut roles = self.roles.clone();
        if let Some(r) = role {
            roles.entry(r).or_default().push(name.to_string());
        }
        Dataset::new(names, columns, roles)
    }

    /// Copy with one column's values replaced (names and roles untouched).
    pub fn replace_column(&self, name: &str, values: Vec<f64>) -> Result<Dataset> {
        let idx = self
            .names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::MissingColumn(name.into()))?;
        if values.len() != self.n_rows {
            return Err(Error::ColumnLength {
                column: name.into(),
                got: values.len(),
                expected: self.n_rows,
            });
        }
        let mut columns = self.columns.clone();
        columns[idx] = values;
        Dataset::new(self.names.clone(), columns, self.roles.clone())
    }

    /// Copy with the role map replaced (columns untouched).
    pub fn with_roles(&self, roles: BTreeMap<Role, Vec<String>>) -> Result<Dataset> {
        Dataset::new(self.names.clone(), self.columns.clone(), roles)
    }

    pub fn roles(&self) -> &BTreeMap<Role, Vec<String>> {
        &self.roles
    }
}

/// Maps file columns to roles; the CLI config file carries one of these
/// for applied mode.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SchemaConfig {
    pub x1: Vec<String>,
    pub x2: Vec<String>,
    pub o: Vec<String>,
    pub treatment: Option<String>,
    pub outcome: Option<String>,
    pub selection: Option<String>,
    pub true_ite: Option<String>,
    pub weight: Option<String>,
    pub delimiter: Option<char>,
}

impl SchemaConfig {
    pub fn roles(&self) -> BTreeMap<Role, Vec<String>> {
        let mut roles = BTreeMap::new();
        if !self.x1.is_empty() {
            roles.insert(Role::X1, self.x1.clone());
        }
        if !self.x2.is_empty() {
            roles.insert(Role::X2, self.x2.clone());
        }
        if !self.o.is_empty() {
            roles.insert(Role::O, self.o.clone());
        }
        for (role, col) in [
            (Role::Treatment, &self.treatment),
            (Role::Outcome, &self.outcome),
            (Role::Selection, &self.selection),
            (Role::TrueIte, &self.true_ite),
            (Role::Weight, &self.weight),
        ] {
            if let Some(c) = col {
                roles.insert(role, vec![c.clone()]);
            }
        }
        roles
    }

    fn delimiter_byte(&self) -> u8 {
        self.delimiter.unwrap_or(',') as u8
    }
}

/// Reads a headered CSV into a Dataset. Every schema column must exist;
/// extra file columns are kept role-less.
pub fn load_dataset(path: &Path, schema: &SchemaConfig) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter_byte())
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::Csv {
            path: path.into(),
            source: e,
        })?;
    let names: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Csv {
            path: path.into(),
            source: e,
        })?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
    for (row_idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Csv {
            path: path.into(),
            source: e,
        })?;
        for (j, cell) in record.iter().enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| Error::NonNumeric {
                column: names.get(j).cloned().unwrap_or_default(),
                row: row_idx,
                value: cell.to_string(),
            })?;
            columns[j].push(v);
        }
    }
    Dataset::new(names, columns, schema.roles())
}

/// Writes a Dataset as a headered CSV. Values are serialized via Rust's
/// shortest-round-trip float formatting, so reads are bit-exact.
pub fn write_dataset(dataset: &Dataset, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| Error::Csv {
        path: path.into(),
        source: e,
    })?;
    writer
        .write_record(dataset.column_names())
        .map_err(|e| Error::Csv {
            path: path.into(),
            source: e,
        })?;
    let names = dataset.column_names().to_vec();
    for row in 0..dataset.n_rows() {
        let record: Vec<String> = names
            .iter()
            .map(|n| format!("{}", dataset.column(n).unwrap()[row]))
            .collect();
        writer.write_record(&record).map_err(|e| Error::Csv {
            path: path.into(),
            source: e,
        })?;
    }
    writer.flush().map_err(|e| Error::Io {
        path: path.into(),
        source: e,
    })?;
    Ok(())
}
