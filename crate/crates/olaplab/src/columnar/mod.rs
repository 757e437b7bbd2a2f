//! Shared execution-layer data structures: columns, tables, batches,
//! selection vectors and the chained hash table used by joins and group-by.

mod hash;

pub use hash::{
    hash64, ChainStats, ChainedHashTable, HashTableBuilder, PartitionedHashTable, ProbeIter,
    ProbeTable, NO_ENTRY,
};

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default batch size for the vectorized engine. Fits comfortably in L1
/// even with a couple of live intermediates.
pub const DEFAULT_VECTOR_SIZE: usize = 1024;

/// Physical column type.
///
/// `Money` is an exact scaled integer (hundredths: cents for prices,
/// percentage points for discount/tax). `Date` is days since 1992-01-01.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Int64,
    Money,
    Date,
    Int32,
}

impl ColumnKind {
    pub fn width_bytes(self) -> u64 {
        match self {
            ColumnKind::Int64 | ColumnKind::Money => 8,
            ColumnKind::Date | ColumnKind::Int32 => 4,
        }
    }

    pub fn is_wide(self) -> bool {
        self.width_bytes() == 8
    }
}

#[derive(Debug, Clone)]
enum ColumnValues {
    I64(Arc<Vec<i64>>),
    I32(Arc<Vec<i32>>),
}

/// Min/max observed values, filled once at construction so engines can
/// prove aggregate feasibility without touching data inside timed loops.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub min: i64,
    pub max: i64,
}

impl ColumnStats {
    pub fn max_abs(&self) -> u64 {
        self.min.unsigned_abs().max(self.max.unsigned_abs())
    }
}

/// An immutable column. Values are shared via `Arc` so derived databases
/// (e.g. per-selectivity rewrites) copy only what changes.
#[derive(Debug, Clone)]
pub struct Column {
    name: String,
    kind: ColumnKind,
    values: ColumnValues,
    stats: ColumnStats,
}

fn scan_stats_i64(values: &[i64]) -> ColumnStats {
    let mut min = i64::MAX;
    let mut max = i64::MIN;
    for &v in values {
        min = min.min(v);
        max = max.max(v);
    }
    if values.is_empty() {
        ColumnStats { min: 0, max: 0 }
    } else {
        ColumnStats { min, max }
    }
}

fn scan_stats_i32(values: &[i32]) -> ColumnStats {
    let mut min = i32::MAX;
    let mut max = i32::MIN;
    for &v in values {
        min = min.min(v);
        max = max.max(v);
    }
    if values.is_empty() {
        ColumnStats { min: 0, max: 0 }
    } else {
        ColumnStats {
            min: min as i64,
            max: max as i64,
        }
    }
}

impl Column {
    pub fn new_i64(name: impl Into<String>, kind: ColumnKind, values: Vec<i64>) -> Self {
        assert!(kind.width_bytes() == 8, "kind/storage width mismatch");
        let stats = scan_stats_i64(&values);
        Column {
            name: name.into(),
            kind,
            values: ColumnValues::I64(Arc::new(values)),
            stats,
        }
    }

    pub fn new_i32(name: impl Into<String>, kind: ColumnKind, values: Vec<i32>) -> Self {
        assert!(kind.width_bytes() == 4, "kind/storage width mismatch");
        let stats = scan_stats_i32(&values);
        Column {
            name: name.into(),
            kind,
            values: ColumnValues::I32(Arc::new(values)),
            stats,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> ColumnKind {
        self.kind
    }

    pub fn stats(&self) -> ColumnStats {
        self.stats
    }

    pub fn len(&self) -> usize {
        match &self.values {
            ColumnValues::I64(v) => v.len(),
            ColumnValues::I32(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn i64(&self) -> &[i64] {
        match &self.values {
            ColumnValues::I64(v) => v,
            ColumnValues::I32(_) => panic!("column {} is 4-byte, asked as i64", self.name),
        }
    }

    pub fn i32(&self) -> &[i32] {
        match &self.values {
            ColumnValues::I32(v) => v,
            ColumnValues::I64(_) => panic!("column {} is 8-byte, asked as i32", self.name),
        }
    }

    pub fn byte_size(&self) -> u64 {
        self.len() as u64 * self.kind.width_bytes()
    }
}

/// An immutable columnar relation. All columns share `row_count`.
#[derive(Debug, Clone)]
pub struct ColumnarTable {
    name: String,
    row_count: usize,
    columns: Vec<Column>,
}

impl ColumnarTable {
    pub fn new(name: impl Into<String>, row_count: usize, columns: Vec<Column>) -> Result<Self> {
        let name = name.into();
        for c in &columns {
            if c.len() != row_count {
                return Err(Error::LengthMismatch {
                    context: "column length vs table row_count",
                    left: c.len(),
                    right: row_count,
                });
            }
        }
        let mut seen = std::collections::HashSet::new();
        for c in &columns {
            if !seen.insert(c.name().to_string()) {
                return Err(Error::spec(format!(
                    "duplicate column `{}` in table `{name}`",
                    c.name()
                )));
            }
        }
        Ok(ColumnarTable {
            name,
            row_count,
            columns,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn row_count(&self) -> usize {
        self.row_count
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column(&self, name: &str) -> Result<&Column> {
        self.columns
            .iter()
            .find(|c| c.name() == name)
            .ok_or_else(|| Error::MissingColumn {
                table: self.name.clone(),
                column: name.to_string(),
            })
    }

    pub fn replace_column(&mut self, column: Column) {
        let slot = self
            .columns
            .iter_mut()
            .find(|c| c.name() == column.name())
            .expect("replace_column: unknown column");
        *slot = column;
    }

    pub fn byte_size(&self) -> u64 {
        self.columns.iter().map(|c| c.byte_size()).sum()
    }
}

/// Ascending, duplicate-free row positions within a batch; the vectorized
/// engine's filter currency.
#[derive(Debug, Clone, Default)]
pub struct SelectionVector {
    indices: Vec<u32>,
}

impl SelectionVector {
    pub fn with_capacity(capacity: usize) -> Self {
        SelectionVector {
            indices: Vec::with_capacity(capacity),
        }
    }

    /// Identity selection 0..len.
    pub fn identity(len: usize) -> Self {
        SelectionVector {
            indices: (0..len as u32).collect(),
        }
    }

    pub fn clear(&mut self) {
        self.indices.clear();
    }

    pub fn push(&mut self, index: u32) {
        debug_assert!(
            self.indices.last().map_or(true, |&last| index > last),
            "selection vector must stay strictly ascending"
        );
        self.indices.push(index);
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.indices
    }

    /// Raw storage access for branch-free writers that advance a cursor
    /// themselves; callers must leave the vector valid (see `check_valid`).
    pub fn storage_mut(&mut self) -> &mut Vec<u32> {
        &mut self.indices
    }

    /// Full invariant check: strictly ascending, unique, all below `batch_len`.
    pub fn check_valid(&self, batch_len: usize) -> Result<()> {
        let mut prev: Option<u32> = None;
        for &i in &self.indices {
            if (i as usize) >= batch_len {
                return Err(Error::spec(format!(
                    "selection index {i} out of range for batch of {batch_len}"
                )));
            }
            if let Some(p) = prev {
                if i <= p {
                    return Err(Error::spec(format!(
                        "selection vector not strictly ascending at {p} -> {i}"
                    )));
                }
            }
            prev = Some(i);
        }
        Ok(())
    }
}

/// A view of `length` rows of a table starting at `offset`, with an optional
/// selection restricting the logical rows.
pub struct Batch<'a> {
    pub table: &'a ColumnarTable,
    pub offset: usize,
    pub length: usize,
    pub selection: Option<&'a SelectionVector>,
}

impl<'a> Batch<'a> {
    pub fn logical_rows(&self) -> usize {
        self.selection.map_or(self.length, |s| s.len())
    }

    pub fn i64_slice(&self, column: &str) -> Result<&'a [i64]> {
        Ok(&self.table.column(column)?.i64()[self.offset..self.offset + self.length])
    }

    pub fn i32_slice(&self, column: &str) -> Result<&'a [i32]> {
        Ok(&self.table.column(column)?.i32()[self.offset..self.offset + self.length])
    }
}

/// Iterator over `(offset, len)` batch windows of a table.
pub fn batch_ranges(row_count: usize, vector_size: usize) -> impl Iterator<Item = (usize, usize)> {
    let mut offset = 0;
    std::iter::from_fn(move || {
        if offset >= row_count {
            return None;
        }
        let len = vector_size.min(row_count - offset);
        let item = (offset, len);
        offset += len;
        Some(item)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selection_vector_validation() {
        let mut sel = SelectionVector::with_capacity(8);
        sel.push(1);
        sel.push(3);
        sel.push(7);
        assert!(sel.check_valid(8).is_ok());
        assert!(sel.check_valid(7).is_err());

        let mut bad = SelectionVector::default();
        bad.storage_mut().extend_from_slice(&[3, 3]);
        assert!(bad.check_valid(8).is_err());
        let mut desc = SelectionVector::default();
        desc.storage_mut().extend_from_slice(&[5, 2]);
        assert!(desc.check_valid(8).is_err());
    }

    #[test]
    fn selection_identity() {
        let sel = SelectionVector::identity(4);
        assert_eq!(sel.as_slice(), &[0, 1, 2, 3]);
        sel.check_valid(4).unwrap();
    }

    #[test]
    fn table_rejects_ragged_columns() {
        let a = Column::new_i64("a", ColumnKind::Int64, vec![1, 2, 3]);
        let b = Column::new_i64("b", ColumnKind::Int64, vec![1, 2]);
        assert!(ColumnarTable::new("t", 3, vec![a, b]).is_err());
    }

    #[test]
    fn table_rejects_duplicate_names() {
        let a = Column::new_i64("a", ColumnKind::Int64, vec![1]);
        let b = Column::new_i64("a", ColumnKind::Int64, vec![2]);
        assert!(ColumnarTable::new("t", 1, vec![a, b]).is_err());
    }

    #[test]
    fn column_stats_cover_range() {
        let c = Column::new_i64("a", ColumnKind::Money, vec![-5, 9, 3]);
        assert_eq!(c.stats(), ColumnStats { min: -5, max: 9 });
        assert_eq!(c.stats().max_abs(), 9);
    }

    #[test]
    fn batch_windows_cover_all_rows() {
        let ranges: Vec<_> = batch_ranges(10, 4).collect();
        assert_eq!(ranges, vec![(0, 4), (4, 4), (8, 2)]);
        assert_eq!(batch_ranges(0, 4).count(), 0);
    }
}
