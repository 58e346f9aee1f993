//! File formats: model JSON, newline-delimited sample files and the
//! canonical JSON rendering used for every written artifact.

use crate::error::{Error, Result};
use crate::model::{PbdModel, SampleSet};
use serde::Serialize;
use serde_json::Value;
use std::fmt::Write as _;
use std::path::Path;

/// JSON with object keys in sorted order and every float written with 17
/// significant digits, so equal values always render to equal bytes.
pub fn canonical_json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value)?;
    let mut out = String::new();
    render(&v, &mut out);
    Ok(out)
}

fn render(v: &Value, out: &mut String) {
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if n.is_f64() {
                let x = n.as_f64().unwrap();
                if x.is_finite() {
                    write!(out, "{x:.16e}").unwrap();
                } else {
                    out.push_str("null");
                }
            } else {
                write!(out, "{n}").unwrap();
            }
        }
        Value::String(s) => out.push_str(&Value::String(s.clone()).to_string()),
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                render(item, out);
            }
            out.push(']');
        }
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (i, k) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&Value::String(k.clone()).to_string());
                out.push(':');
                render(&map[k], out);
            }
            out.push('}');
        }
    }
}

pub fn read_model(path: &Path) -> Result<PbdModel> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

pub fn write_model(path: &Path, model: &PbdModel) -> Result<()> {
    write_text(path, &(canonical_json(model)? + "\n"))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text)?;
    Ok(())
}

/// Parses one decimal integer per line; blank lines are only allowed at
/// the end.
pub fn parse_samples(text: &str, n_hint: Option<usize>) -> Result<SampleSet> {
    let body = text.trim_end_matches(['\n', '\r']);
    if body.is_empty() {
        return Err(Error::EmptySamples);
    }
    let values = body
        .split('\n')
        .enumerate()
        .map(|(i, line)| {
            let line = line.trim_end_matches('\r');
            line.parse::<u64>().map_err(|_| Error::Parse(format!("line {}: {line:?} is not a sample", i + 1)))
        })
        .collect::<Result<Vec<u64>>>()?;
    SampleSet::new(values, n_hint)
}

pub fn read_samples(path: &Path, n_hint: Option<usize>) -> Result<SampleSet> {
    parse_samples(&std::fs::read_to_string(path)?, n_hint)
}

pub fn format_samples(samples: &SampleSet) -> String {
    let mut out = String::with_capacity(samples.len() * 4);
    for v in samples.values() {
        writeln!(out, "{v}").unwrap();
    }
    out
}

pub fn write_samples(path: &Path, samples: &SampleSet) -> Result<()> {
    write_text(path, &format_samples(samples))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Component;

    #[test]
    fn canonical_form_sorts_keys_and_fixes_digits() {
        let v = serde_json::json!({"b": 0.1, "a": [1, 2.5], "c": {"z": null, "y": "s"}});
        assert_eq!(
            canonical_json(&v).unwrap(),
            r#"{"a":[1,2.5000000000000000e0],"b":1.0000000000000001e-1,"c":{"y":"s","z":null}}"#
        );
    }

    #[test]
    fn model_round_trips_through_canonical_json() {
        let m = PbdModel::new(vec![Component::new(0.1, 2), Component::new(1.0 / 3.0, 1)]).unwrap();
        let text = canonical_json(&m).unwrap();
        let back: PbdModel = serde_json::from_str(&text).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn sample_file_parsing() {
        let s = parse_samples("3\n0\n12\n", None).unwrap();
        assert_eq!(s.values(), &[3, 0, 12]);
        assert_eq!(parse_samples("1\n2", None).unwrap().len(), 2);
        assert!(matches!(parse_samples("1\n\n2\n", None), Err(Error::Parse(_))));
        assert!(matches!(parse_samples("", None), Err(Error::EmptySamples)));
        assert_eq!(format_samples(&s), "3\n0\n12\n");
    }
}
