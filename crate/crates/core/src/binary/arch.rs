use std::collections::{BTreeMap, BTreeSet};

use sha2::{Digest, Sha256};

use super::disasm::InstructionRecord;
use super::BinaryError;

pub const MISC: &str = "misc";

const DEFAULT_X86_64: &str = include_str!("../../data/x86_64.arch");

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MatchKind {
    Exact,
    Prefix,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rule {
    pub kind: MatchKind,
    pub pattern: String,
    pub category: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ArchDescription {
    /// `(id, display name)` in file order.
    pub categories: Vec<(String, String)>,
    pub rules: Vec<Rule>,
    pub machine: BTreeMap<String, f64>,
    pub fp_categories: BTreeSet<String>,
    pub mem_categories: BTreeSet<String>,
    /// SHA-256 of the file text, hex encoded.
    pub digest: String,
}

impl ArchDescription {
    pub fn parse(text: &str) -> Result<Self, BinaryError> {
        let mut categories: Vec<(String, String)> = Vec::new();
        let mut rules = Vec::new();
        let mut machine = BTreeMap::new();
        let mut roles: Vec<(usize, &str, Vec<String>)> = Vec::new();
        let mut section = "";
        let syntax = |line: usize, message: String| BinaryError::ArchSyntax { line, message };
        for (k, raw) in text.lines().enumerate() {
            let line_no = k + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = match name.trim() {
                    s @ ("categories" | "rules" | "machine" | "roles") => s,
                    other => return Err(syntax(line_no, format!("unknown section [{other}]"))),
                };
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .map(|(a, b)| (a.trim(), b.trim()))
                .ok_or_else(|| syntax(line_no, "expected `key = value`".into()))?;
            match section {
                "categories" => {
                    if categories.iter().any(|(id, _)| id == key) {
                        return Err(syntax(line_no, format!("category `{key}` declared twice")));
                    }
                    categories.push((key.to_string(), value.to_string()));
                }
                "rules" => {
                    let (kind, pattern) = key
                        .split_once(char::is_whitespace)
                        .ok_or_else(|| syntax(line_no, "expected `exact NAME` or `prefix NAME`".into()))?;
                    let kind = match kind {
                        "exact" => MatchKind::Exact,
                        "prefix" => MatchKind::Prefix,
                        other => return Err(syntax(line_no, format!("unknown match kind `{other}`"))),
                    };
                    if !categories.iter().any(|(id, _)| id == value) {
                        return Err(BinaryError::UnknownCategory {
                            line: line_no,
                            category: value.to_string(),
                        });
                    }
                    rules.push(Rule {
                        kind,
                        pattern: pattern.trim().to_ascii_lowercase(),
                        category: value.to_string(),
                    });
                }
                "machine" => {
                    let v: f64 = value
                        .parse()
                        .map_err(|_| syntax(line_no, format!("`{value}` is not a number")))?;
                    machine.insert(key.to_string(), v);
                }
                "roles" => {
                    if key != "fp" && key != "mem" {
                        return Err(syntax(line_no, format!("unknown role `{key}`")));
                    }
                    let ids = value.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
                    roles.push((line_no, key, ids));
                }
                _ => return Err(syntax(line_no, "entry outside of a section".into())),
            }
        }
        if !categories.iter().any(|(id, _)| id == MISC) {
            return Err(syntax(0, format!("the catch-all `{MISC}` category is not declared")));
        }
        let mut fp_categories = BTreeSet::new();
        let mut mem_categories = BTreeSet::new();
        for (line, role, ids) in roles {
            for id in ids {
                if !categories.iter().any(|(c, _)| *c == id) {
                    return Err(BinaryError::UnknownCategory { line, category: id });
                }
                if role == "fp" {
                    fp_categories.insert(id);
                } else {
                    mem_categories.insert(id);
                }
            }
        }
        Ok(ArchDescription {
            categories,
            rules,
            machine,
            fp_categories,
            mem_categories,
            digest: hex::encode(Sha256::digest(text.as_bytes())),
        })
    }

    pub fn default_x86_64() -> Self {
        Self::parse(DEFAULT_X86_64).expect("bundled architecture description is valid")
    }

    pub fn default_text() -> &'static str {
        DEFAULT_X86_64
    }

    pub fn has_category(&self, id: &str) -> bool {
        self.categories.iter().any(|(c, _)| c == id)
    }

    pub fn display_name(&self, id: &str) -> Option<&str> {
        self.categories.iter().find(|(c, _)| c == id).map(|(_, n)| n.as_str())
    }

    /// Exact rules win over prefix rules; prefix rules are tried in file order.
    pub fn categorize(&self, mnemonic: &str) -> &str {
        let m = mnemonic.to_ascii_lowercase();
        self.rules
            .iter()
            .find(|r| r.kind == MatchKind::Exact && r.pattern == m)
            .or_else(|| self.rules.iter().find(|r| r.kind == MatchKind::Prefix && m.starts_with(&r.pattern)))
            .map(|r| r.category.as_str())
            .unwrap_or(MISC)
    }

    pub fn categorize_all(&self, records: &mut [InstructionRecord]) {
        for r in records {
            r.category = Some(self.categorize(&r.mnemonic).to_string());
        }
    }
}
