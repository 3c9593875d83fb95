//! Byte-stable report serialization: JSON with sorted keys and six-decimal floats, and a
//! fixed-width ASCII summary table.

use std::fmt::Write as _;

use serde::Serialize;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::metrics::{EvalReport, RerankMode};

pub const FLOAT_DECIMALS: usize = 6;

/// Serializes any value with sorted object keys, two-space indentation and every
/// floating-point number written with exactly six decimals.
pub fn to_stable_json<T: Serialize>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value).map_err(|e| Error::Internal(format!("serializing report: {e}")))?;
    let mut out = String::new();
    write_value(&mut out, &v, 0);
    out.push('\n');
    Ok(out)
}

fn indent(out: &mut String, level: usize) {
    for _ in 0..level {
        out.push_str("  ");
    }
}

fn write_value(out: &mut String, v: &Value, level: usize) {
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if n.is_f64() {
                let s = format!("{:.FLOAT_DECIMALS$}", n.as_f64().expect("f64 number"));
                // no "-0.000000"
                match s.strip_prefix('-') {
                    Some(rest) if rest.bytes().all(|c| c == b'0' || c == b'.') => out.push_str(rest),
                    _ => out.push_str(&s),
                }
            } else {
                let _ = write!(out, "{n}");
            }
        }
        Value::String(s) => out.push_str(&Value::String(s.clone()).to_string()),
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            // numeric arrays stay on one line
            if items.iter().all(|i| i.is_number() || i.is_null()) {
                out.push('[');
                for (k, item) in items.iter().enumerate() {
                    if k > 0 {
                        out.push_str(", ");
                    }
                    write_value(out, item, level);
                }
                out.push(']');
                return;
            }
            out.push_str("[\n");
            for (k, item) in items.iter().enumerate() {
                indent(out, level + 1);
                write_value(out, item, level + 1);
                out.push_str(if k + 1 < items.len() { ",\n" } else { "\n" });
            }
            indent(out, level);
            out.push(']');
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            out.push_str("{\n");
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            for (k, key) in keys.iter().enumerate() {
                indent(out, level + 1);
                out.push_str(&Value::String((*key).clone()).to_string());
                out.push_str(": ");
                write_value(out, &map[*key], level + 1);
                out.push_str(if k + 1 < keys.len() { ",\n" } else { "\n" });
            }
            indent(out, level);
            out.push('}');
        }
    }
}

fn mode_label(report: &EvalReport) -> &'static str {
    match report.config_echo.as_ref().map(|c| c.mode) {
        Some(RerankMode::KReciprocal) => "k-reciprocal",
        Some(RerankMode::TemporalKReciprocal) => "temporal k-reciprocal",
        Some(RerankMode::None) | None => "none",
    }
}

/// One row per report: Rank-1/5/10/20 and mAP in percent.
pub fn ascii_table(reports: &[EvalReport]) -> String {
    let mut out = String::new();
    let header = format!(
        "{:<20} | {:<21} | {:>6} | {:>6} | {:>6} | {:>6} | {:>6}",
        "Direction", "Re-ranking", "R1", "R5", "R10", "R20", "mAP"
    );
    let rule: String = header.chars().map(|c| if c == '|' { '+' } else { '-' }).collect();
    let _ = writeln!(out, "{header}");
    let _ = writeln!(out, "{rule}");
    for r in reports {
        let _ = writeln!(
            out,
            "{:<20} | {:<21} | {:>6.2} | {:>6.2} | {:>6.2} | {:>6.2} | {:>6.2}",
            r.direction.label(),
            mode_label(r),
            100.0 * r.rank(1),
            100.0 * r.rank(5),
            100.0 * r.rank(10),
            100.0 * r.rank(20),
            100.0 * r.map
        );
    }
    out
}
