use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use serde::Deserialize;

const KEYS_YAML: &str = include_str!("../../config/keys.yaml");

#[derive(Debug, Deserialize)]
pub struct KeyTable {
    pub version: u32,
    pub canonical: Vec<String>,
    pub aliases: BTreeMap<String, String>,
}

struct Index {
    canonical: BTreeSet<String>,
    /// lowercase alias or canonical name -> canonical name
    folded: BTreeMap<String, String>,
}

fn index() -> &'static Index {
    static INDEX: OnceLock<Index> = OnceLock::new();
    INDEX.get_or_init(|| {
        let table: KeyTable = serde_yaml::from_str(KEYS_YAML).expect("bundled keys.yaml is valid");
        let mut folded = BTreeMap::new();
        for name in &table.canonical {
            folded.insert(name.to_lowercase(), name.clone());
        }
        for (alias, target) in &table.aliases {
            folded.insert(alias.to_lowercase(), target.clone());
        }
        Index {
            canonical: table.canonical.into_iter().collect(),
            folded,
        }
    })
}

pub fn key_table() -> KeyTable {
    serde_yaml::from_str(KEYS_YAML).expect("bundled keys.yaml is valid")
}

pub fn is_canonical_key(key: &str) -> bool {
    index().canonical.contains(key)
}

/// Maps a raw key name onto its canonical spelling. Lookup is
/// case-insensitive; single letters fold to lowercase; unknown names are
/// returned unchanged.
pub fn normalize_key_alias(key: &str) -> String {
    let idx = index();
    if let Some(hit) = idx.folded.get(&key.to_lowercase()) {
        return hit.clone();
    }
    let trimmed = key.trim();
    if !trimmed.is_empty() && trimmed != key {
        if let Some(hit) = idx.folded.get(&trimmed.to_lowercase()) {
            return hit.clone();
        }
    }
    let mut chars = key.chars();
    if let (Some(c), None) = (chars.next(), chars.next()) {
        if c.is_alphabetic() {
            return c.to_lowercase().collect();
        }
    }
    key.to_string()
}

/// Key name produced when typing a single character.
pub fn key_for_char(c: char) -> String {
    normalize_key_alias(&c.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arrow_aliases() {
        assert_eq!(normalize_key_alias("left"), "ArrowLeft");
        assert_eq!(normalize_key_alias("LEFT"), "ArrowLeft");
        assert_eq!(normalize_key_alias("ArrowLeft"), "ArrowLeft");
        assert_eq!(normalize_key_alias("arrowup"), "ArrowUp");
    }

    #[test]
    fn space_and_escape() {
        assert_eq!(normalize_key_alias(" "), "Space");
        assert_eq!(normalize_key_alias("spacebar"), "Space");
        assert_eq!(normalize_key_alias("Esc"), "Escape");
    }

    #[test]
    fn letters_fold_to_lowercase() {
        assert_eq!(normalize_key_alias("W"), "w");
        assert_eq!(normalize_key_alias("w"), "w");
    }

    #[test]
    fn unknown_keys_pass_through() {
        assert_eq!(normalize_key_alias("F13"), "F13");
        assert_eq!(normalize_key_alias("NumpadEnter"), "NumpadEnter");
    }

    #[test]
    fn every_letter_matches_the_table() {
        // Oracle: the bundled table lists each lowercase letter as canonical;
        // the uppercase form must normalize onto that entry.
        let table = key_table();
        for c in 'A'..='Z' {
            let lower = c.to_ascii_lowercase().to_string();
            assert!(table.canonical.contains(&lower));
            assert_eq!(normalize_key_alias(&c.to_string()), lower);
        }
    }

    #[test]
    fn normalization_is_idempotent_over_table() {
        let table = key_table();
        for name in table.canonical.iter().chain(table.aliases.keys()) {
            let once = normalize_key_alias(name);
            assert_eq!(normalize_key_alias(&once), once, "{name}");
            assert!(is_canonical_key(&once), "{name} -> {once}");
        }
    }
}
