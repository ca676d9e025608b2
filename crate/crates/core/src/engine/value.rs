use crate::sql::format_date;
use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataType {
    Int,
    Float,
    Str,
    Date,
}

impl DataType {
    pub fn parse(s: &str) -> Option<DataType> {
        match s.trim().to_ascii_lowercase().as_str() {
            "int" | "int64" | "integer" | "bigint" => Some(DataType::Int),
            "float" | "float64" | "double" | "real" | "decimal" => Some(DataType::Float),
            "str" | "string" | "text" | "varchar" => Some(DataType::Str),
            "date" => Some(DataType::Date),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DataType::Int => "int",
            DataType::Float => "float",
            DataType::Str => "str",
            DataType::Date => "date",
        }
    }

    pub(crate) fn tag(self) -> u8 {
        match self {
            DataType::Int => 0,
            DataType::Float => 1,
            DataType::Str => 2,
            DataType::Date => 3,
        }
    }

    pub(crate) fn from_tag(t: u8) -> Option<DataType> {
        [DataType::Int, DataType::Float, DataType::Str, DataType::Date].get(t as usize).copied()
    }
}

/// A scalar produced by the executor. `Null` only arises from aggregating
/// an empty input (SUM/AVG/MIN/MAX) and propagates through arithmetic.
#[derive(Debug, Clone)]
pub enum Value {
    Null,
    Int(i64),
    Float(f64),
    Str(Arc<str>),
    Date(i32),
    /// Calendar interval; only valid as an operand of date arithmetic.
    Interval(i64, crate::sql::IntervalUnit),
}

impl Value {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Int(v) => Some(*v as f64),
            Value::Float(v) => Some(*v),
            _ => None,
        }
    }

    pub fn is_null(&self) -> bool {
        matches!(self, Value::Null)
    }

    fn rank(&self) -> u8 {
        match self {
            Value::Null => 0,
            Value::Int(_) | Value::Float(_) => 1,
            Value::Str(_) => 2,
            Value::Date(_) => 3,
            Value::Interval(..) => 4,
        }
    }
}

// Total order used for grouping and output sorting: numbers compare by
// value (NaN last), other types by their natural order.
impl Ord for Value {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Value::Int(a), Value::Int(b)) => a.cmp(b),
            (Value::Str(a), Value::Str(b)) => a.cmp(b),
            (Value::Date(a), Value::Date(b)) => a.cmp(b),
            (Value::Interval(a, ua), Value::Interval(b, ub)) => (*ua as u8, a).cmp(&(*ub as u8, b)),
            (a, b) if a.rank() == 1 && b.rank() == 1 => {
                let (x, y) = (a.as_f64().unwrap(), b.as_f64().unwrap());
                x.total_cmp(&y).then_with(|| matches!(a, Value::Float(_)).cmp(&matches!(b, Value::Float(_))))
            }
            (a, b) => a.rank().cmp(&b.rank()),
        }
    }
}

impl PartialOrd for Value {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Value {}

impl Hash for Value {
    fn hash<H: Hasher>(&self, state: &mut H) {
        match self {
            Value::Null => 0u8.hash(state),
            Value::Int(v) => (1u8, *v).hash(state),
            Value::Float(v) => (2u8, v.to_bits()).hash(state),
            Value::Str(s) => (3u8, s).hash(state),
            Value::Date(d) => (4u8, *d).hash(state),
            Value::Interval(a, u) => (5u8, *a, *u as u8).hash(state),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Null => write!(f, "NULL"),
            Value::Int(v) => write!(f, "{v}"),
            Value::Float(v) => write!(f, "{v}"),
            Value::Str(s) => write!(f, "{s}"),
            Value::Date(d) => write!(f, "{}", format_date(*d)),
            Value::Interval(a, u) => write!(f, "{a} {u:?}"),
        }
    }
}

impl serde::Serialize for Value {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Value::Null => s.serialize_none(),
            Value::Int(v) => s.serialize_i64(*v),
            Value::Float(v) => s.serialize_f64(*v),
            other => s.serialize_str(&other.to_string()),
        }
    }
}

/// A typed column vector.
#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    Int(Vec<i64>),
    Float(Vec<f64>),
    Str(Vec<Arc<str>>),
    Date(Vec<i32>),
}

impl Column {
    pub fn empty(t: DataType) -> Column {
        match t {
            DataType::Int => Column::Int(Vec::new()),
            DataType::Float => Column::Float(Vec::new()),
            DataType::Str => Column::Str(Vec::new()),
            DataType::Date => Column::Date(Vec::new()),
        }
    }

    pub fn data_type(&self) -> DataType {
        match self {
            Column::Int(_) => DataType::Int,
            Column::Float(_) => DataType::Float,
            Column::Str(_) => DataType::Str,
            Column::Date(_) => DataType::Date,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Column::Int(v) => v.len(),
            Column::Float(v) => v.len(),
            Column::Str(v) => v.len(),
            Column::Date(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, row: usize) -> Value {
        match self {
            Column::Int(v) => Value::Int(v[row]),
            Column::Float(v) => Value::Float(v[row]),
            Column::Str(v) => Value::Str(v[row].clone()),
            Column::Date(v) => Value::Date(v[row]),
        }
    }

    /// Stored size of rows `range` in bytes (see the file format).
    pub fn byte_size(&self, range: std::ops::Range<usize>) -> u64 {
        match self {
            Column::Int(_) | Column::Float(_) => 8 * range.len() as u64,
            Column::Date(_) => 4 * range.len() as u64,
            Column::Str(v) => v[range].iter().map(|s| 4 + s.len() as u64).sum(),
        }
    }
}
