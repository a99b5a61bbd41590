//! Name → constructor tables used for every pluggable algorithm in the crate.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

pub struct Registry<F> {
    kind: &'static str,
    entries: BTreeMap<String, F>,
    aliases: BTreeMap<String, String>,
}

impl<F> Registry<F> {
    pub fn new(kind: &'static str) -> Self {
        Self {
            kind,
            entries: BTreeMap::new(),
            aliases: BTreeMap::new(),
        }
    }

    pub fn register(&mut self, name: &str, factory: F) -> &mut Self {
        self.entries.insert(name.to_string(), factory);
        self
    }

    pub fn alias(&mut self, alias: &str, target: &str) -> &mut Self {
        self.aliases.insert(alias.to_string(), target.to_string());
        self
    }

    pub fn get(&self, name: &str) -> Result<&F> {
        let key = self.aliases.get(name).map(String::as_str).unwrap_or(name);
        self.entries.get(key).ok_or_else(|| Error::Unknown {
            kind: self.kind,
            name: name.to_string(),
            known: self.names().join(", "),
        })
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.keys().map(String::as_str).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lookup_resolves_aliases_and_reports_unknown() {
        let mut reg: Registry<fn() -> u8> = Registry::new("widget");
        reg.register("one", || 1).alias("uno", "one");
        assert_eq!((reg.get("uno").unwrap())(), 1);
        let err = reg.get("two").err().unwrap().to_string();
        assert!(err.contains("widget") && err.contains("one"), "{err}");
    }
}
