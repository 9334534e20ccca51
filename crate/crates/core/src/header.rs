//! Single-line `key=value` headers shared by every output format.

use crate::error::{Error, Result};

/// Ordered list of `key=value` pairs. Keys and values contain neither
/// whitespace nor `=`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Header {
    entries: Vec<(String, String)>,
}

impl Header {
    pub fn new() -> Self {
        Self::default()
    }

    /// Sets `key`, replacing an existing value in place.
    pub fn set(&mut self, key: &str, value: impl ToString) -> &mut Self {
        let value = value.to_string();
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(entry) => entry.1 = value,
            None => self.entries.push((key.to_string(), value)),
        }
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| Error::Parse(format!("missing header key `{key}`")))
    }

    pub fn parse_value<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.require(key)?;
        raw.parse()
            .map_err(|_| Error::Parse(format!("bad value `{raw}` for key `{key}`")))
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn merge(&mut self, other: &Header) {
        for (k, v) in other.entries() {
            self.set(k, v);
        }
    }

    pub fn emit(&self) -> String {
        self.entries
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn parse(line: &str) -> Result<Self> {
        let mut header = Header::new();
        for token in line.split_whitespace() {
            let (k, v) = token
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("token `{token}` is not key=value")))?;
            if k.is_empty() {
                return Err(Error::Parse(format!("empty key in `{token}`")));
            }
            header.set(k, v);
        }
        Ok(header)
    }
}

impl std::fmt::Display for Header {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.emit())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn emit_parse_round_trip() {
        let mut h = Header::new();
        h.set("m", 2).set("gamma2", 0.1 + 0.2).set("kind", "field");
        let back = Header::parse(&h.emit()).unwrap();
        assert_eq!(back, h);
        assert_eq!(back.parse_value::<f64>("gamma2").unwrap(), 0.1 + 0.2);
    }

    #[test]
    fn rejects_bare_tokens() {
        assert!(Header::parse("m=2 oops").is_err());
        assert!(Header::parse("=3").is_err());
    }
}
