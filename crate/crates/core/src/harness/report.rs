use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use super::config::Format;
use crate::Result;

/// One CSV field.
#[derive(Debug, Clone, PartialEq)]
pub enum CsvCell {
    Text(String),
    Num(f64),
    Int(u64),
}

impl From<&str> for CsvCell {
    fn from(s: &str) -> Self {
        CsvCell::Text(s.to_string())
    }
}

impl From<String> for CsvCell {
    fn from(s: String) -> Self {
        CsvCell::Text(s)
    }
}

impl From<f64> for CsvCell {
    fn from(v: f64) -> Self {
        CsvCell::Num(v)
    }
}

impl From<usize> for CsvCell {
    fn from(v: usize) -> Self {
        CsvCell::Int(v as u64)
    }
}

/// A serializable experiment result with a tabular form.
pub trait Report: Serialize + DeserializeOwned {
    fn csv_header(&self) -> Vec<String>;
    fn csv_rows(&self) -> Vec<Vec<CsvCell>>;
}

/// Full precision is 17 significant digits.
pub const FULL_DIGITS: usize = 17;

/// `v` rounded to `digits` significant digits. Full precision is written
/// in scientific notation; shorter forms use plain decimals between `1e-4`
/// and `1e15`.
pub fn format_float(v: f64, digits: usize) -> String {
    if v.is_nan() {
        return "NaN".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let d = digits.clamp(1, FULL_DIGITS);
    let sci = format!("{:.*e}", d - 1, v);
    if d == FULL_DIGITS {
        return sci;
    }
    let r: f64 = sci.parse().unwrap_or(v);
    if r == 0.0 || (1e-4..1e15).contains(&r.abs()) {
        r.to_string()
    } else {
        sci
    }
}

fn write_json(out: &mut String, v: &Value, indent: usize, digits: usize) {
    let pad = |out: &mut String, n: usize| out.extend(std::iter::repeat_n(' ', 2 * n));
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if let Some(u) = n.as_u64() {
                out.push_str(&u.to_string());
            } else if let Some(i) = n.as_i64() {
                out.push_str(&i.to_string());
            } else {
                out.push_str(&format_float(n.as_f64().unwrap_or(f64::NAN), digits));
            }
        }
        Value::String(s) => out.push_str(&serde_json::to_string(s).expect("string serialization")),
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            let flat = items.iter().all(|x| !x.is_array() && !x.is_object());
            out.push('[');
            for (k, x) in items.iter().enumerate() {
                if k > 0 {
                    out.push(',');
                }
                if flat {
                    if k > 0 {
                        out.push(' ');
                    }
                } else {
                    out.push('\n');
                    pad(out, indent + 1);
                }
                write_json(out, x, indent + 1, digits);
            }
            if !flat {
                out.push('\n');
                pad(out, indent);
            }
            out.push(']');
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            out.push('{');
            for (k, (key, x)) in map.iter().enumerate() {
                if k > 0 {
                    out.push(',');
                }
                out.push('\n');
                pad(out, indent + 1);
                out.push_str(&serde_json::to_string(key).expect("key serialization"));
                out.push_str(": ");
                write_json(out, x, indent + 1, digits);
            }
            out.push('\n');
            pad(out, indent);
            out.push('}');
        }
    }
}

/// JSON text of any serializable value, floats at `digits` significant digits.
pub fn to_json_string<T: Serialize>(value: &T, digits: usize) -> Result<String> {
    let v = serde_json::to_value(value)?;
    let mut out = String::new();
    write_json(&mut out, &v, 0, digits);
    out.push('\n');
    Ok(out)
}

/// Encodes a report. `digits` defaults to full precision.
pub fn serialize_report<R: Report>(report: &R, format: Format, digits: Option<usize>) -> Result<Vec<u8>> {
    let digits = digits.unwrap_or(FULL_DIGITS);
    match format {
        Format::Json => Ok(to_json_string(report, digits)?.into_bytes()),
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(report.csv_header())?;
            for row in report.csv_rows() {
                w.write_record(row.iter().map(|c| match c {
                    CsvCell::Text(s) => s.clone(),
                    CsvCell::Num(v) => format_float(*v, digits),
                    CsvCell::Int(i) => i.to_string(),
                }))?;
            }
            w.flush()?;
            Ok(w.into_inner().map_err(|e| std::io::Error::other(e.to_string()))?)
        }
    }
}

/// Inverse of the JSON encoding of [`serialize_report`].
pub fn parse_report<R: Report>(bytes: &[u8]) -> Result<R> {
    Ok(serde_json::from_slice(bytes)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits_round_trip() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0, f64::MIN_POSITIVE, 0.884] {
            let s = format_float(v, FULL_DIGITS);
            assert_eq!(s.parse::<f64>().unwrap(), v, "{s}");
            let mantissa = s.split('e').next().unwrap().replace(['-', '.'], "");
            assert_eq!(mantissa.len(), 17);
        }
        assert_eq!(format_float(0.5, 3), "0.5");
        assert_eq!(format_float(0.88449, 3), "0.884");
        assert_eq!(format_float(-1.5e-7, 2), "-1.5e-7");
    }

    #[test]
    fn json_writer_keeps_order_and_values() {
        let v = serde_json::json!({"b": 1, "a": [1.5, -2], "c": {"x": null, "y": "q\"z"}, "d": []});
        let s = to_json_string(&v, FULL_DIGITS).unwrap();
        assert!(s.find("\"b\"").unwrap() < s.find("\"a\"").unwrap());
        let back: Value = serde_json::from_str(&s).unwrap();
        assert_eq!(back, v);
    }
}
