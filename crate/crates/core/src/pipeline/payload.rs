//! Multi-part payloads: `[name]` header lines, each followed by its body.

use super::PayloadError;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Sections {
    parts: Vec<(String, String)>,
}

impl Sections {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a section. Bodies must not contain lines starting with `[`.
    pub fn push(&mut self, name: &str, body: impl Into<String>) -> &mut Self {
        self.parts.push((name.to_string(), body.into()));
        self
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.parts
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, b)| b.as_str())
    }

    /// The named section, or an error naming it.
    pub fn require(&self, name: &str) -> Result<&str, PayloadError> {
        self.get(name)
            .ok_or_else(|| PayloadError(format!("missing section [{name}]")))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.parts.iter().map(|(n, _)| n.as_str())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (name, body) in &self.parts {
            out.push('[');
            out.push_str(name);
            out.push_str("]\n");
            out.push_str(body);
            if !body.is_empty() && !body.ends_with('\n') {
                out.push('\n');
            }
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, PayloadError> {
        let mut parts: Vec<(String, String)> = Vec::new();
        for line in text.lines() {
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .filter(|n| !n.is_empty())
                    .ok_or_else(|| PayloadError(format!("bad section header `{line}`")))?;
                if parts.iter().any(|(n, _)| n == name) {
                    return Err(PayloadError(format!("duplicate section [{name}]")));
                }
                parts.push((name.to_string(), String::new()));
                continue;
            }
            let Some((_, body)) = parts.last_mut() else {
                if line.trim().is_empty() {
                    continue;
                }
                return Err(PayloadError("content before the first section".into()));
            };
            body.push_str(line);
            body.push('\n');
        }
        Ok(Self { parts })
    }
}

/// Flat `key=value` lines.
pub(crate) fn parse_kv(text: &str) -> Result<Vec<(&str, &str)>, PayloadError> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(|l| {
            l.split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| PayloadError(format!("line `{l}` has no `=`")))
        })
        .collect()
}

pub(crate) fn kv_get<'a>(kv: &[(&'a str, &'a str)], key: &str) -> Result<&'a str, PayloadError> {
    kv.iter()
        .find(|(k, _)| *k == key)
        .map(|(_, v)| *v)
        .ok_or_else(|| PayloadError(format!("missing key `{key}`")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let mut s = Sections::new();
        s.push("meta", "rows=3\n")
            .push("train", "a,b\n1,2")
            .push("empty", "");
        let text = s.to_text();
        assert_eq!(text, "[meta]\nrows=3\n[train]\na,b\n1,2\n[empty]\n");
        let back = Sections::parse(&text).unwrap();
        assert_eq!(back.get("train"), Some("a,b\n1,2\n"));
        assert_eq!(back.get("empty"), Some(""));
        assert_eq!(back.names().collect::<Vec<_>>(), ["meta", "train", "empty"]);
    }

    #[test]
    fn rejects_garbage() {
        assert!(Sections::parse("x=1\n[a]\n").is_err());
        assert!(Sections::parse("[a]\n[a]\n").is_err());
        assert!(Sections::parse("[a\n").is_err());
        assert!(Sections::parse("[]\n").is_err());
    }

    #[test]
    fn kv_lines() {
        let kv = parse_kv("a=1\n b = two \n").unwrap();
        assert_eq!(kv_get(&kv, "b").unwrap(), "two");
        assert!(kv_get(&kv, "c").is_err());
        assert!(parse_kv("novalue\n").is_err());
    }
}
