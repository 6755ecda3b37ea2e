//! Canonical JSON: keys sorted, two-space indentation, every non-integer
//! number written with exactly six fractional digits. Equal values always
//! produce identical bytes.

use serde::Serialize;
use serde_json::Value;

use hsgd_core::{ScenarioReport, Trajectory};

pub fn to_canonical_json<S: Serialize + ?Sized>(value: &S) -> String {
    let value = serde_json::to_value(value).expect("engine types serialize to JSON");
    let mut out = String::new();
    write_value(&mut out, &value, 0);
    out.push('\n');
    out
}

pub fn export_report(report: &ScenarioReport) -> Vec<u8> {
    to_canonical_json(report).into_bytes()
}

pub fn export_trajectory(trajectory: &Trajectory) -> Vec<u8> {
    to_canonical_json(trajectory).into_bytes()
}

/// Six fractional digits, with negative zero folded into zero.
pub fn format_real(v: f64) -> String {
    let s = format!("{v:.6}");
    if s.strip_prefix('-').is_some_and(|rest| rest.bytes().all(|b| b == b'0' || b == b'.')) {
        s[1..].to_owned()
    } else {
        s
    }
}

fn write_value(out: &mut String, value: &Value, depth: usize) {
    match value {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => match (n.as_u64(), n.as_i64(), n.as_f64()) {
            (Some(u), _, _) => out.push_str(&u.to_string()),
            (None, Some(i), _) => out.push_str(&i.to_string()),
            (None, None, Some(f)) => out.push_str(&format_real(f)),
            _ => out.push_str("null"),
        },
        Value::String(s) => out.push_str(&serde_json::to_string(s).expect("strings serialize")),
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                out.push_str(if i == 0 { "\n" } else { ",\n" });
                indent(out, depth + 1);
                write_value(out, item, depth + 1);
            }
            out.push('\n');
            indent(out, depth);
            out.push(']');
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (i, key) in keys.into_iter().enumerate() {
                out.push_str(if i == 0 { "\n" } else { ",\n" });
                indent(out, depth + 1);
                out.push_str(&serde_json::to_string(key).expect("strings serialize"));
                out.push_str(": ");
                write_value(out, &map[key], depth + 1);
            }
            out.push('\n');
            indent(out, depth);
            out.push('}');
        }
    }
}

fn indent(out: &mut String, depth: usize) {
    for _ in 0..depth {
        out.push_str("  ");
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn reals_have_six_digits() {
        assert_eq!(format_real(1.0 / 3.0), "0.333333");
        assert_eq!(format_real(2.0), "2.000000");
        assert_eq!(format_real(-0.0), "0.000000");
        assert_eq!(format_real(-1e-9), "0.000000");
        assert_eq!(format_real(-0.5), "-0.500000");
    }

    #[test]
    fn keys_are_sorted_and_integers_stay_integral() {
        let text = to_canonical_json(&json!({"b": 1, "a": [0.5, -2], "c": {}}));
        assert_eq!(text, "{\n  \"a\": [\n    0.500000,\n    -2\n  ],\n  \"b\": 1,\n  \"c\": {}\n}\n");
    }
}
