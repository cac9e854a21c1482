//! Line-oriented `key=value` records on standard error.

use std::fmt::Display;
use std::io::Write;

/// Writes `event=<event> k1=v1 k2=v2 ...` as one line to stderr.
pub fn record(event: &str, fields: &[(&str, &dyn Display)]) {
    let mut line = format!("event={event}");
    for (k, v) in fields {
        let v = v.to_string();
        if v.contains(char::is_whitespace) || v.contains('"') {
            line.push_str(&format!(" {k}={v:?}"));
        } else {
            line.push_str(&format!(" {k}={v}"));
        }
    }
    line.push('\n');
    let _ = std::io::stderr().lock().write_all(line.as_bytes());
}
