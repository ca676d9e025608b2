use super::format::{read_table, write_table};
use super::table::{BlockTable, TableStats};
use super::value::{Column, DataType};
use super::EngineError;
use crate::sql::days_from_date;
use chrono::NaiveDate;
use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

/// A directory of table files (`<name>.aqpt`) with an in-memory cache, or a
/// purely in-memory catalog when created with [`Store::in_memory`].
#[derive(Debug, Default)]
pub struct Store {
    dir: Option<PathBuf>,
    cache: RwLock<HashMap<String, Arc<BlockTable>>>,
    writer: Mutex<()>,
}

fn valid_name(name: &str) -> bool {
    let mut chars = name.chars();
    chars.next().is_some_and(|c| c.is_ascii_lowercase() || c == '_')
        && chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
        && !crate::sql::is_reserved(name)
}

impl Store {
    pub fn open(dir: impl AsRef<Path>) -> Result<Store, EngineError> {
        std::fs::create_dir_all(dir.as_ref())?;
        Ok(Store { dir: Some(dir.as_ref().to_path_buf()), ..Default::default() })
    }

    pub fn in_memory() -> Store {
        Store::default()
    }

    fn path(&self, name: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(format!("{name}.aqpt")))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.cache.read().unwrap().contains_key(name) || self.path(name).is_some_and(|p| p.exists())
    }

    /// Persist a table. Fails with `Duplicate` if the name exists and
    /// `replace` is false.
    pub fn put(&self, table: BlockTable, replace: bool) -> Result<Arc<BlockTable>, EngineError> {
        if !valid_name(&table.name) {
            return Err(EngineError::Invalid(format!("invalid table name '{}': use lowercase letters, digits, '_'", table.name)));
        }
        let _guard = self.writer.lock().unwrap();
        if !replace && self.contains(&table.name) {
            return Err(EngineError::Duplicate(table.name.clone()));
        }
        if let Some(path) = self.path(&table.name) {
            let tmp = path.with_extension("aqpt.tmp");
            {
                let f = std::io::BufWriter::new(std::fs::File::create(&tmp)?);
                write_table(&table, f)?;
            }
            std::fs::rename(&tmp, &path)?;
        }
        let t = Arc::new(table);
        self.cache.write().unwrap().insert(t.name.clone(), t.clone());
        Ok(t)
    }

    pub fn get(&self, name: &str) -> Result<Arc<BlockTable>, EngineError> {
        if let Some(t) = self.cache.read().unwrap().get(name) {
            return Ok(t.clone());
        }
        let path = self.path(name).filter(|p| p.exists()).ok_or_else(|| EngineError::UnknownTable(name.to_string()))?;
        let f = std::io::BufReader::new(std::fs::File::open(path)?);
        let t = Arc::new(read_table(name, f)?);
        self.cache.write().unwrap().insert(name.to_string(), t.clone());
        Ok(t)
    }

    pub fn table_stats(&self, name: &str) -> Result<TableStats, EngineError> {
        Ok(self.get(name)?.stats())
    }

    /// Table names, sorted.
    pub fn tables(&self) -> Result<Vec<String>, EngineError> {
        let mut names: Vec<String> = self.cache.read().unwrap().keys().cloned().collect();
        if let Some(dir) = &self.dir {
            for entry in std::fs::read_dir(dir)? {
                let p = entry?.path();
                if p.extension().is_some_and(|e| e == "aqpt") {
                    if let Some(stem) = p.file_stem().and_then(|s| s.to_str()) {
                        names.push(stem.to_string());
                    }
                }
            }
        }
        names.sort();
        names.dedup();
        Ok(names)
    }

    /// Load a headed CSV file; columns are matched to `schema` by position.
    pub fn ingest_csv(
        &self,
        path: impl AsRef<Path>,
        name: &str,
        schema: &[(String, DataType)],
        block_size: u64,
        replace: bool,
    ) -> Result<TableStats, EngineError> {
        if !replace && self.contains(name) {
            return Err(EngineError::Duplicate(name.to_string()));
        }
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path.as_ref())?;
        let mut columns: Vec<Column> = schema.iter().map(|(_, t)| Column::empty(*t)).collect();
        for (i, record) in reader.records().enumerate() {
            let row = i + 1;
            let record = record.map_err(|e| EngineError::Csv { row, message: e.to_string() })?;
            if record.len() != schema.len() {
                return Err(EngineError::Csv { row, message: format!("expected {} fields, found {}", schema.len(), record.len()) });
            }
            for ((field, col), (cname, _)) in record.iter().zip(&mut columns).zip(schema) {
                let bad = |what: &str| EngineError::Csv { row, message: format!("column '{cname}': cannot read {field:?} as {what}") };
                let field = field.trim();
                match col {
                    Column::Int(v) => v.push(field.parse().map_err(|_| bad("int"))?),
                    Column::Float(v) => v.push(field.parse().map_err(|_| bad("float"))?),
                    Column::Str(v) => v.push(Arc::from(field)),
                    Column::Date(v) => {
                        let d = NaiveDate::parse_from_str(field, "%Y-%m-%d").map_err(|_| bad("date (YYYY-MM-DD)"))?;
                        v.push(days_from_date(d));
                    }
                }
            }
        }
        let table = BlockTable::new(name, schema.to_vec(), columns, block_size)?;
        let stats = table.stats();
        self.put(table, replace)?;
        Ok(stats)
    }
}

/// Parse `name:type,name:type,...`.
pub fn parse_schema(s: &str) -> Result<Vec<(String, DataType)>, EngineError> {
    s.split(',')
        .map(|part| {
            let (n, t) = part.split_once(':').ok_or_else(|| EngineError::Invalid(format!("schema entry '{part}' is not name:type")))?;
            let n = n.trim().to_ascii_lowercase();
            if !valid_name(&n) {
                return Err(EngineError::Invalid(format!("invalid column name '{n}'")));
            }
            let t = DataType::parse(t).ok_or_else(|| EngineError::Invalid(format!("unknown type '{}' for column '{n}'", t.trim())))?;
            Ok((n, t))
        })
        .collect()
}
