//! Helpers for writing canonical YAML by hand.
//!
//! Documents are emitted with fixed key order and two-space indentation;
//! parsing goes through `serde_yaml`.

use std::fmt::Write as _;

/// Renders a string as a YAML scalar, quoting only when a plain scalar
/// could be read back as something other than the same string.
pub fn scalar(s: &str) -> String {
    const RESERVED: &[&str] = &[
        "true", "false", "null", "yes", "no", "on", "off", "y", "n", "~",
    ];
    let plain = s
        .chars()
        .next()
        .is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && s.chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.' | '/'))
        && !RESERVED.contains(&s.to_ascii_lowercase().as_str());
    if plain {
        s.to_string()
    } else {
        serde_json::to_string(s).expect("string serialization is infallible")
    }
}

/// Renders a fraction or percentage so that it round-trips exactly.
pub fn float(v: f64) -> String {
    format!("{v:?}")
}

/// A flow mapping `{k: v, ...}` whose values are already rendered.
pub fn flow_map(entries: &[(&str, String)]) -> String {
    let mut out = String::from("{");
    for (i, (k, v)) in entries.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        let _ = write!(out, "{k}: {v}");
    }
    out.push('}');
    out
}

/// A flow sequence `[a, b, ...]` of already rendered items.
pub fn flow_seq<I, S>(items: I) -> String
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut out = String::from("[");
    for (i, item) in items.into_iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        out.push_str(item.as_ref());
    }
    out.push(']');
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalars_quote_ambiguous_values() {
        assert_eq!(scalar("litmus"), "litmus");
        assert_eq!(scalar("test_dd"), "test_dd");
        assert_eq!(scalar("rv-tests"), "rv-tests");
        assert_eq!(scalar("yes"), "\"yes\"");
        assert_eq!(scalar("123"), "\"123\"");
        assert_eq!(scalar(""), "\"\"");
        assert_eq!(scalar("a: b"), "\"a: b\"");
    }

    #[test]
    fn floats_keep_a_fraction() {
        assert_eq!(float(0.0), "0.0");
        assert_eq!(float(0.05), "0.05");
        assert_eq!(float(91.0), "91.0");
    }
}
