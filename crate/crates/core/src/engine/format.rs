//! Table file encoding. Layout is documented in `docs/format.md`.

use super::table::BlockTable;
use super::value::{Column, DataType};
use super::EngineError;
use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use std::io::{Read, Write};
use std::sync::Arc;

pub const MAGIC: &[u8; 4] = b"AQPT";
pub const VERSION: u16 = 1;

pub fn write_table<W: Write>(t: &BlockTable, mut w: W) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_u16::<LE>(VERSION)?;
    w.write_u64::<LE>(t.block_size)?;
    w.write_u64::<LE>(t.rows() as u64)?;
    w.write_u32::<LE>(t.schema.len() as u32)?;
    for (name, ty) in &t.schema {
        w.write_u32::<LE>(name.len() as u32)?;
        w.write_all(name.as_bytes())?;
        w.write_u8(ty.tag())?;
    }
    for c in &t.columns {
        match c {
            Column::Int(v) => v.iter().try_for_each(|x| w.write_i64::<LE>(*x))?,
            Column::Float(v) => v.iter().try_for_each(|x| w.write_f64::<LE>(*x))?,
            Column::Date(v) => v.iter().try_for_each(|x| w.write_i32::<LE>(*x))?,
            Column::Str(v) => v.iter().try_for_each(|s| {
                w.write_u32::<LE>(s.len() as u32)?;
                w.write_all(s.as_bytes())
            })?,
        }
    }
    w.flush()
}

fn corrupt(msg: impl Into<String>) -> EngineError {
    EngineError::Corrupt(msg.into())
}

pub fn read_table<R: Read>(name: &str, mut r: R) -> Result<BlockTable, EngineError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(corrupt("bad magic"));
    }
    let version = r.read_u16::<LE>()?;
    if version != VERSION {
        return Err(corrupt(format!("unsupported format version {version}")));
    }
    let block_size = r.read_u64::<LE>()?;
    let rows = usize::try_from(r.read_u64::<LE>()?).map_err(|_| corrupt("row count overflow"))?;
    let ncols = r.read_u32::<LE>()? as usize;
    let mut schema = Vec::with_capacity(ncols);
    for _ in 0..ncols {
        let len = r.read_u32::<LE>()? as usize;
        let mut buf = vec![0u8; len];
        r.read_exact(&mut buf)?;
        let name = String::from_utf8(buf).map_err(|_| corrupt("column name is not UTF-8"))?;
        let ty = DataType::from_tag(r.read_u8()?).ok_or_else(|| corrupt("unknown column type"))?;
        schema.push((name, ty));
    }
    let mut columns = Vec::with_capacity(ncols);
    for (_, ty) in &schema {
        let col = match ty {
            DataType::Int => Column::Int((0..rows).map(|_| r.read_i64::<LE>()).collect::<Result<_, _>>()?),
            DataType::Float => Column::Float((0..rows).map(|_| r.read_f64::<LE>()).collect::<Result<_, _>>()?),
            DataType::Date => Column::Date((0..rows).map(|_| r.read_i32::<LE>()).collect::<Result<_, _>>()?),
            DataType::Str => {
                let mut v = Vec::with_capacity(rows);
                for _ in 0..rows {
                    let len = r.read_u32::<LE>()? as usize;
                    let mut buf = vec![0u8; len];
                    r.read_exact(&mut buf)?;
                    let s = String::from_utf8(buf).map_err(|_| corrupt("string value is not UTF-8"))?;
                    v.push(Arc::<str>::from(s));
                }
                Column::Str(v)
            }
        };
        columns.push(col);
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(corrupt("trailing bytes after last column"));
    }
    BlockTable::new(name, schema, columns, block_size)
}
