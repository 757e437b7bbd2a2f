//! On-disk database format: one little-endian fixed-width binary file per
//! column plus a JSON manifest.

use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Database, GenSpec};
use crate::columnar::{Column, ColumnKind, ColumnarTable};
use crate::error::{Error, Result};

pub const MANIFEST_NAME: &str = "manifest.json";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    scale_factor: f64,
    seed: u64,
    exact_selectivity: bool,
    tables: Vec<TableEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TableEntry {
    name: String,
    row_count: usize,
    columns: Vec<ColumnEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ColumnEntry {
    name: String,
    kind: ColumnKind,
    file: String,
}

fn column_file_name(table: &str, column: &str) -> String {
    format!("{table}.{column}.bin")
}

/// Writes the database as raw little-endian column files plus a manifest.
pub fn write_database(db: &Database, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut tables = Vec::new();
    for table in db.tables() {
        let mut columns = Vec::new();
        for col in table.columns() {
            let file = column_file_name(table.name(), col.name());
            let mut w = BufWriter::new(fs::File::create(dir.join(&file))?);
            if col.kind().is_wide() {
                for &v in col.i64() {
                    w.write_all(&v.to_le_bytes())?;
                }
            } else {
                for &v in col.i32() {
                    w.write_all(&v.to_le_bytes())?;
                }
            }
            w.flush()?;
            columns.push(ColumnEntry {
                name: col.name().to_string(),
                kind: col.kind(),
                file,
            });
        }
        tables.push(TableEntry {
            name: table.name().to_string(),
            row_count: table.row_count(),
            columns,
        });
    }
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        scale_factor: db.spec.scale_factor,
        seed: db.spec.seed,
        exact_selectivity: db.spec.exact_selectivity,
        tables,
    };
    let json = serde_json::to_string_pretty(&manifest)?;
    fs::write(dir.join(MANIFEST_NAME), json)?;
    Ok(())
}

/// Loads a database previously written by `write_database`.
pub fn load_database(dir: &Path) -> Result<Database> {
    let manifest_path = dir.join(MANIFEST_NAME);
    let text = fs::read_to_string(&manifest_path)
        .map_err(|e| Error::spec(format!("cannot read {}: {e}", manifest_path.display())))?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::spec(format!(
            "unsupported database format version {}",
            manifest.format_version
        )));
    }
    let mut tables = Vec::new();
    for entry in &manifest.tables {
        let mut columns = Vec::new();
        for ce in &entry.columns {
            let path = dir.join(&ce.file);
            let mut bytes = Vec::new();
            fs::File::open(&path)
                .map_err(|e| Error::spec(format!("cannot open {}: {e}", path.display())))?
                .read_to_end(&mut bytes)?;
            let width = ce.kind.width_bytes() as usize;
            if bytes.len() != entry.row_count * width {
                return Err(Error::spec(format!(
                    "{}: expected {} bytes, found {}",
                    path.display(),
                    entry.row_count * width,
                    bytes.len()
                )));
            }
            let col = if ce.kind.is_wide() {
                let values = bytes
                    .chunks_exact(8)
                    .map(|c| i64::from_le_bytes(c.try_into().unwrap()))
                    .collect();
                Column::new_i64(ce.name.clone(), ce.kind, values)
            } else {
                let values = bytes
                    .chunks_exact(4)
                    .map(|c| i32::from_le_bytes(c.try_into().unwrap()))
                    .collect();
                Column::new_i32(ce.name.clone(), ce.kind, values)
            };
            columns.push(col);
        }
        tables.push(ColumnarTable::new(entry.name.clone(), entry.row_count, columns)?);
    }
    let spec = GenSpec {
        scale_factor: manifest.scale_factor,
        seed: manifest.seed,
        exact_selectivity: manifest.exact_selectivity,
    };
    Ok(Database::from_tables(spec, tables))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate_database, GenSpec};

    #[test]
    fn round_trip_is_bit_identical() {
        let spec = GenSpec::new(0.001, 42).exact();
        let db = generate_database(&spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_database(&db, dir.path()).unwrap();
        let loaded = load_database(dir.path()).unwrap();
        assert_eq!(loaded.spec, spec);
        for (a, b) in db.tables().iter().zip(loaded.tables()) {
            assert_eq!(a.name(), b.name());
            assert_eq!(a.row_count(), b.row_count());
            for (ca, cb) in a.columns().iter().zip(b.columns()) {
                assert_eq!(ca.name(), cb.name());
                assert_eq!(ca.kind(), cb.kind());
                if ca.kind().is_wide() {
                    assert_eq!(ca.i64(), cb.i64());
                } else {
                    assert_eq!(ca.i32(), cb.i32());
                }
            }
        }
    }

    #[test]
    fn column_files_are_little_endian() {
        let spec = GenSpec::new(0.0, 9);
        let db = generate_database(&spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_database(&db, dir.path()).unwrap();
        let bytes = std::fs::read(dir.path().join("nation.n_nationkey.bin")).unwrap();
        assert_eq!(bytes.len(), 25 * 8);
        assert_eq!(&bytes[0..8], &0u64.to_le_bytes());
        assert_eq!(&bytes[8..16], &1u64.to_le_bytes());
    }

    #[test]
    fn load_rejects_truncated_column() {
        let db = generate_database(&GenSpec::new(0.0, 9)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_database(&db, dir.path()).unwrap();
        std::fs::write(dir.path().join("nation.n_nationkey.bin"), [0u8; 7]).unwrap();
        assert!(load_database(dir.path()).is_err());
    }

    #[test]
    fn load_rejects_missing_manifest() {
        let dir = tempfile::tempdir().unwrap();
        assert!(load_database(dir.path()).is_err());
    }
}
