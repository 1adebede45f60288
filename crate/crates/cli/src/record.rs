use std::fmt;

use sha2::{Digest, Sha256};

/// Flat `key=value` document. Keys keep insertion order, so a record built
/// by the same command from the same config is byte-identical.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResultRecord {
    fields: Vec<(String, String)>,
}

impl ResultRecord {
    pub fn new(command: &str, config_canonical: &str, seed: u64) -> Self {
        let mut r = Self::default();
        r.push("record_version", 1);
        r.push("command", command);
        r.push("toolkit_version", env!("CARGO_PKG_VERSION"));
        r.push("config_hash", format!("sha256:{}", config_hash(config_canonical)));
        r.push("seed", seed);
        r
    }

    pub fn push(&mut self, key: impl Into<String>, value: impl fmt::Display) {
        self.fields.push((key.into(), value.to_string()));
    }

    pub fn push_f(&mut self, key: impl Into<String>, value: f64) {
        self.push(key, fmt_f(value));
    }

    pub fn push_opt(&mut self, key: impl Into<String>, value: Option<f64>) {
        match value {
            Some(v) => self.push_f(key, v),
            None => self.push(key, "none"),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.fields.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn fields(&self) -> &[(String, String)] {
        &self.fields
    }

    /// Parses a document produced by `Display`.
    pub fn parse(text: &str) -> Option<Self> {
        let mut fields = Vec::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line.split_once('=')?;
            fields.push((k.to_string(), v.to_string()));
        }
        Some(Self { fields })
    }
}

impl fmt::Display for ResultRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in &self.fields {
            writeln!(f, "{k}={v}")?;
        }
        Ok(())
    }
}

pub fn config_hash(canonical: &str) -> String {
    Sha256::digest(canonical.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Round-trippable float text.
pub fn fmt_f(v: f64) -> String {
    format!("{v:e}")
}
