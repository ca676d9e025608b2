use super::value::{Column, DataType, Value};
use super::EngineError;

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct TableStats {
    pub rows: u64,
    pub blocks: u64,
    pub bytes: u64,
    pub block_size: u64,
}

/// Columnar table split into fixed-size blocks of `block_size` rows; the
/// last block may be short. Row `r` lives in block `r / block_size`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockTable {
    pub name: String,
    pub schema: Vec<(String, DataType)>,
    pub columns: Vec<Column>,
    pub block_size: u64,
    /// Stored bytes per block, precomputed for scan accounting.
    block_bytes: Vec<u64>,
}

impl BlockTable {
    pub fn new(name: &str, schema: Vec<(String, DataType)>, columns: Vec<Column>, block_size: u64) -> Result<Self, EngineError> {
        if block_size == 0 {
            return Err(EngineError::Invalid("block size must be positive".into()));
        }
        if schema.len() != columns.len() {
            return Err(EngineError::Invalid("schema and column count differ".into()));
        }
        for ((n, t), c) in schema.iter().zip(&columns) {
            if c.data_type() != *t {
                return Err(EngineError::Invalid(format!("column '{n}' declared {} but holds {}", t.name(), c.data_type().name())));
            }
        }
        let rows = columns.first().map_or(0, Column::len);
        if columns.iter().any(|c| c.len() != rows) {
            return Err(EngineError::Invalid("columns have different lengths".into()));
        }
        let mut seen = std::collections::HashSet::new();
        if let Some((n, _)) = schema.iter().find(|(n, _)| !seen.insert(n.as_str())) {
            return Err(EngineError::Invalid(format!("duplicate column '{n}'")));
        }
        let b = block_size as usize;
        let block_bytes = (0..rows.div_ceil(b))
            .map(|i| {
                let range = i * b..((i + 1) * b).min(rows);
                columns.iter().map(|c| c.byte_size(range.clone())).sum()
            })
            .collect();
        Ok(BlockTable { name: name.to_string(), schema, columns, block_size, block_bytes })
    }

    /// Convenience constructor for numeric test tables.
    pub fn from_ints(name: &str, cols: &[(&str, Vec<i64>)], block_size: u64) -> Result<Self, EngineError> {
        let schema = cols.iter().map(|(n, _)| (n.to_string(), DataType::Int)).collect();
        let columns = cols.iter().map(|(_, v)| Column::Int(v.clone())).collect();
        BlockTable::new(name, schema, columns, block_size)
    }

    pub fn rows(&self) -> usize {
        self.columns.first().map_or(0, Column::len)
    }

    pub fn blocks(&self) -> usize {
        self.block_bytes.len()
    }

    pub fn block_of(&self, row: usize) -> usize {
        row / self.block_size as usize
    }

    pub fn block_rows(&self, block: usize) -> std::ops::Range<usize> {
        let b = self.block_size as usize;
        block * b..((block + 1) * b).min(self.rows())
    }

    pub fn block_bytes(&self, block: usize) -> u64 {
        self.block_bytes[block]
    }

    pub fn bytes(&self) -> u64 {
        self.block_bytes.iter().sum()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.schema.iter().position(|(n, _)| n == name)
    }

    pub fn value(&self, col: usize, row: usize) -> Value {
        self.columns[col].get(row)
    }

    pub fn stats(&self) -> TableStats {
        TableStats { rows: self.rows() as u64, blocks: self.blocks() as u64, bytes: self.bytes(), block_size: self.block_size }
    }
}
