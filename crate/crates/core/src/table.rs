//! Tabular data model shared by every stage of a review run.
//!
//! A [`ReviewTable`] is an ordered list of uniquely named columns and an
//! ordered list of rows. Every cell is a [`Cell`]: `Some(text)` for a produced
//! value (the empty string is a legitimate value) and `None` for "not
//! produced", e.g. a row that a round's filter skipped.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

/// A single table cell. `None` means the value was never produced.
pub type Cell = Option<String>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TableError {
    #[error("column name must be nonempty")]
    EmptyColumnName,
    #[error("duplicate column `{0}`")]
    DuplicateColumn(String),
    #[error("column `{column}` has {actual} values but the table has {expected} rows")]
    LengthMismatch {
        column: String,
        expected: usize,
        actual: usize,
    },
    #[error("row {row} has {actual} cells but the table has {expected} columns")]
    RowWidth {
        row: usize,
        expected: usize,
        actual: usize,
    },
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
}

/// Builds the name of a column produced by an agent in a round:
/// `round-{round_id}_{agent_name}_{field}`.
///
/// The concatenation is one-way; column names are never parsed back into
/// their parts.
pub fn make_column_name(round_id: &str, agent_name: &str, field: &str) -> String {
    format!("round-{round_id}_{agent_name}_{field}")
}

/// Identifiers (round ids, agent names, provider names) are ASCII
/// alphanumerics plus `_` and `-`.
pub fn is_identifier(s: &str) -> bool {
    !s.is_empty()
        && s
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-')
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ReviewTable {
    columns: Vec<String>,
    rows: Vec<Vec<Cell>>,
}

impl ReviewTable {
    /// Creates an empty table with the given header.
    pub fn new<I, S>(columns: I) -> Result<Self, TableError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let columns: Vec<String> = columns.into_iter().map(Into::into).collect();
        let mut seen = BTreeSet::new();
        for c in &columns {
            if c.is_empty() {
                return Err(TableError::EmptyColumnName);
            }
            if !seen.insert(c.as_str()) {
                return Err(TableError::DuplicateColumn(c.clone()));
            }
        }
        Ok(Self {
            columns,
            rows: Vec::new(),
        })
    }

    pub fn from_rows<I, S>(columns: I, rows: Vec<Vec<Cell>>) -> Result<Self, TableError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut table = Self::new(columns)?;
        for row in rows {
            table.push_row(row)?;
        }
        Ok(table)
    }

    pub fn push_row(&mut self, row: Vec<Cell>) -> Result<(), TableError> {
        if row.len() != self.columns.len() {
            return Err(TableError::RowWidth {
                row: self.rows.len(),
                expected: self.columns.len(),
                actual: row.len(),
            });
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn num_columns(&self) -> usize {
        self.columns.len()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn has_column(&self, name: &str) -> bool {
        self.column_index(name).is_some()
    }

    pub fn rows(&self) -> &[Vec<Cell>] {
        &self.rows
    }

    pub fn row(&self, index: usize) -> Option<RowRef<'_>> {
        self.rows.get(index).map(|cells| RowRef {
            columns: &self.columns,
            cells,
        })
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = RowRef<'_>> {
        self.rows.iter().map(move |cells| RowRef {
            columns: &self.columns,
            cells,
        })
    }

    /// Cell at (`row`, `column`). The outer `Option` is `None` when the
    /// position does not exist.
    pub fn cell(&self, row: usize, column: &str) -> Option<Option<&str>> {
        let c = self.column_index(column)?;
        self.rows.get(row).map(|r| r[c].as_deref())
    }

    /// All cells of one column, top to bottom.
    pub fn column_cells(&self, name: &str) -> Result<Vec<Option<&str>>, TableError> {
        let c = self
            .column_index(name)
            .ok_or_else(|| TableError::UnknownColumn(name.into()))?;
        Ok(self.rows.iter().map(|r| r[c].as_deref()).collect())
    }

    /// Returns a new table with `new_columns` appended in the given order.
    ///
    /// Existing columns and cells are untouched. Every value vector must have
    /// one entry per row and no new name may collide with an existing column
    /// or with another new column.
    pub fn append_columns<I>(&self, new_columns: I) -> Result<ReviewTable, TableError>
    where
        I: IntoIterator<Item = (String, Vec<Cell>)>,
    {
        let mut out = self.clone();
        out.append_columns_in_place(new_columns)?;
        Ok(out)
    }

    pub fn append_columns_in_place<I>(&mut self, new_columns: I) -> Result<(), TableError>
    where
        I: IntoIterator<Item = (String, Vec<Cell>)>,
    {
        let new_columns: Vec<(String, Vec<Cell>)> = new_columns.into_iter().collect();
        let mut seen: BTreeSet<&str> = self.columns.iter().map(String::as_str).collect();
        for (name, values) in &new_columns {
            if name.is_empty() {
                return Err(TableError::EmptyColumnName);
            }
            if !seen.insert(name.as_str()) {
                return Err(TableError::DuplicateColumn(name.clone()));
            }
            if values.len() != self.rows.len() {
                return Err(TableError::LengthMismatch {
                    column: name.clone(),
                    expected: self.rows.len(),
                    actual: values.len(),
                });
            }
        }
        for (name, values) in new_columns {
            self.columns.push(name);
            for (row, value) in self.rows.iter_mut().zip(values) {
                row.push(value);
            }
        }
        Ok(())
    }
}

/// Borrowed view of one row.
#[derive(Debug, Clone, Copy)]
pub struct RowRef<'a> {
    columns: &'a [String],
    cells: &'a [Cell],
}

impl<'a> RowRef<'a> {
    /// `None` if the column does not exist, `Some(None)` for a null cell.
    pub fn get(&self, column: &str) -> Option<Option<&'a str>> {
        self.columns
            .iter()
            .position(|c| c == column)
            .map(|i| self.cells[i].as_deref())
    }

    pub fn cells(&self) -> &'a [Cell] {
        self.cells
    }

    pub fn columns(&self) -> &'a [String] {
        self.columns
    }
}
