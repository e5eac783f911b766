//! Line-oriented `key=value` record encoding.
//!
//! Every text file the pipeline reads or writes is a sequence of records, one
//! per line. A record is a tab-separated list of `key=value` fields. Keys are
//! restricted to `[A-Za-z0-9_.\-/]`; values may hold any character, with `%`,
//! tab, line feed and carriage return written as `%25`, `%09`, `%0A` and `%0D`.
//! Only those four escapes are accepted on input, so a line that parses
//! re-encodes to exactly the same bytes.
//!
//! Blank lines and lines starting with `#` are not records; file readers skip
//! them before calling [`Record::parse`].

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("field {0:?} has no '=' separator")]
    MissingSeparator(String),
    #[error("invalid field key {0:?}")]
    BadKey(String),
    #[error("invalid escape sequence in value of {0:?}")]
    BadEscape(String),
    #[error("duplicate field {0:?}")]
    DuplicateKey(String),
    #[error("missing field {0:?}")]
    MissingField(String),
    #[error("invalid value {value:?} for field {key:?}")]
    InvalidValue { key: String, value: String },
    #[error("unexpected field {0:?}")]
    UnexpectedField(String),
    #[error("empty record")]
    Empty,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Record {
    fields: Vec<(String, String)>,
}

impl Record {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a field. Panics on an invalid or repeated key, which is a
    /// programming error on the writer side.
    pub fn push(&mut self, key: impl Into<String>, value: impl ToString) -> &mut Self {
        let key = key.into();
        assert!(valid_key(&key), "invalid record key {key:?}");
        assert!(self.get(&key).is_none(), "duplicate record key {key:?}");
        self.fields.push((key, value.to_string()));
        self
    }

    pub fn with(mut self, key: impl Into<String>, value: impl ToString) -> Self {
        self.push(key, value);
        self
    }

    pub fn fields(&self) -> impl Iterator<Item = (&str, &str)> {
        self.fields.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.fields
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn require(&self, key: &str) -> Result<&str, CodecError> {
        self.get(key)
            .ok_or_else(|| CodecError::MissingField(key.to_string()))
    }

    pub fn parse_field<T: FromStr>(&self, key: &str) -> Result<T, CodecError> {
        let raw = self.require(key)?;
        raw.parse().map_err(|_| CodecError::InvalidValue {
            key: key.to_string(),
            value: raw.to_string(),
        })
    }

    /// Rejects any field whose key is not in `allowed` and is not matched by
    /// `prefix_allowed`.
    pub fn expect_only(&self, allowed: &[&str], prefix_allowed: &[&str]) -> Result<(), CodecError> {
        for (k, _) in &self.fields {
            let ok =
                allowed.contains(&k.as_str()) || prefix_allowed.iter().any(|p| k.starts_with(p));
            if !ok {
                return Err(CodecError::UnexpectedField(k.clone()));
            }
        }
        Ok(())
    }

    pub fn parse(line: &str) -> Result<Self, CodecError> {
        if line.is_empty() {
            return Err(CodecError::Empty);
        }
        let mut record = Record::new();
        for field in line.split('\t') {
            let (key, raw) = field
                .split_once('=')
                .ok_or_else(|| CodecError::MissingSeparator(field.to_string()))?;
            if !valid_key(key) {
                return Err(CodecError::BadKey(key.to_string()));
            }
            if record.get(key).is_some() {
                return Err(CodecError::DuplicateKey(key.to_string()));
            }
            let value = unescape(raw).ok_or_else(|| CodecError::BadEscape(key.to_string()))?;
            record.fields.push((key.to_string(), value));
        }
        Ok(record)
    }
}

impl fmt::Display for Record {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (k, v)) in self.fields.iter().enumerate() {
            if i > 0 {
                f.write_str("\t")?;
            }
            write!(f, "{k}={}", escape(v))?;
        }
        Ok(())
    }
}

impl FromStr for Record {
    type Err = CodecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Record::parse(s)
    }
}

/// True for lines a reader should skip: blank or `#` comments.
pub fn is_skippable(line: &str) -> bool {
    line.is_empty() || line.starts_with('#')
}

fn valid_key(key: &str) -> bool {
    !key.is_empty()
        && key
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || matches!(b, b'_' | b'.' | b'-' | b'/'))
}

pub fn escape(value: &str) -> String {
    let mut out = String::with_capacity(value.len());
    for c in value.chars() {
        match c {
            '%' => out.push_str("%25"),
            '\t' => out.push_str("%09"),
            '\n' => out.push_str("%0A"),
            '\r' => out.push_str("%0D"),
            c => out.push(c),
        }
    }
    out
}

pub fn unescape(raw: &str) -> Option<String> {
    let mut out = String::with_capacity(raw.len());
    let mut rest = raw;
    while let Some(pos) = rest.find('%') {
        out.push_str(&rest[..pos]);
        let code = rest.get(pos + 1..pos + 3)?;
        out.push(match code {
            "25" => '%',
            "09" => '\t',
            "0A" => '\n',
            "0D" => '\r',
            _ => return None,
        });
        rest = &rest[pos + 3..];
    }
    out.push_str(rest);
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_fields_in_order() {
        let r = Record::parse("a=1\tb=two\tc=").unwrap();
        assert_eq!(r.get("a"), Some("1"));
        assert_eq!(r.get("b"), Some("two"));
        assert_eq!(r.get("c"), Some(""));
        assert_eq!(r.to_string(), "a=1\tb=two\tc=");
    }

    #[test]
    fn value_may_contain_equals() {
        let r = Record::parse("k=a=b").unwrap();
        assert_eq!(r.get("k"), Some("a=b"));
    }

    #[test]
    fn rejects_noncanonical_escapes() {
        assert_eq!(
            Record::parse("k=%41"),
            Err(CodecError::BadEscape("k".into()))
        );
        assert!(Record::parse("k=%0a").is_err());
        assert!(Record::parse("k=%2").is_err());
    }

    #[test]
    fn rejects_bad_structure() {
        assert_eq!(Record::parse(""), Err(CodecError::Empty));
        assert!(matches!(
            Record::parse("novalue"),
            Err(CodecError::MissingSeparator(_))
        ));
        assert!(matches!(
            Record::parse("a=1\ta=2"),
            Err(CodecError::DuplicateKey(_))
        ));
        assert!(matches!(Record::parse("a b=1"), Err(CodecError::BadKey(_))));
        assert!(matches!(Record::parse("=1"), Err(CodecError::BadKey(_))));
    }

    #[test]
    fn escapes_control_characters() {
        let r = Record::new().with("note", "50%\tof\nall\r");
        let line = r.to_string();
        assert_eq!(line, "note=50%25%09of%0Aall%0D");
        assert_eq!(Record::parse(&line).unwrap(), r);
    }

    proptest! {
        #[test]
        fn encode_then_parse_is_identity(
            fields in proptest::collection::btree_map("[a-z_./-]{1,8}", "\\PC*", 1..6)
        ) {
            let mut r = Record::new();
            for (k, v) in &fields {
                r.push(k.clone(), v);
            }
            let line = r.to_string();
            let back = Record::parse(&line).unwrap();
            prop_assert_eq!(&back, &r);
            prop_assert_eq!(back.to_string(), line);
        }

        #[test]
        fn accepted_lines_reencode_bit_exact(line in "[a-z=%0-9A-D\t]{0,40}") {
            if let Ok(r) = Record::parse(&line) {
                prop_assert_eq!(r.to_string(), line);
            }
        }
    }
}
