//! Ordered key/value reports printed either as `key=value` lines or as one JSON object.

use serde_json::{Map, Value};
use std::fmt::Write;

#[derive(Default)]
pub struct Report {
    fields: Vec<(String, Value)>,
}

impl Report {
    pub fn new() -> Report {
        Report::default()
    }

    pub fn put(&mut self, key: &str, value: impl Into<Value>) -> &mut Report {
        self.fields.push((key.to_string(), value.into()));
        self
    }

    pub fn put_ser(&mut self, key: &str, value: &impl serde::Serialize) -> &mut Report {
        let v = serde_json::to_value(value).expect("report values serialize");
        self.put(key, v)
    }

    /// Text form: one `key=value` line per field. Multi-line strings use a
    /// `key<<EOF` ... `EOF` block so file payloads stay verbatim.
    pub fn text(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.fields {
            match v {
                Value::String(x) if x.contains('\n') => {
                    let _ = write!(s, "{k}<<EOF\n{x}");
                    if !x.ends_with('\n') {
                        s.push('\n');
                    }
                    s.push_str("EOF\n");
                }
                Value::String(x) => {
                    let _ = writeln!(s, "{k}={x}");
                }
                Value::Null => {
                    let _ = writeln!(s, "{k}=none");
                }
                other => {
                    let _ = writeln!(s, "{k}={other}");
                }
            }
        }
        s
    }

    pub fn json(&self) -> String {
        let mut m = Map::new();
        for (k, v) in &self.fields {
            m.insert(k.clone(), v.clone());
        }
        let mut s = serde_json::to_string_pretty(&Value::Object(m)).expect("report serializes");
        s.push('\n');
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_and_json_carry_the_same_fields() {
        let mut r = Report::new();
        r.put("status", "correct").put("size", 3).put("note", Value::Null).put("file", "a\nb\n");
        assert_eq!(r.text(), "status=correct\nsize=3\nnote=none\nfile<<EOF\na\nb\nEOF\n");
        let v: Value = serde_json::from_str(&r.json()).unwrap();
        assert_eq!(v["size"], 3);
        assert_eq!(v["file"], "a\nb\n");
    }
}
