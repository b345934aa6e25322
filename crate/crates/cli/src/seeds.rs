//! Seed banks committed with the repository.

use std::collections::BTreeMap;
use std::sync::LazyLock;

static BANK: LazyLock<BTreeMap<String, Vec<u64>>> =
    LazyLock::new(|| serde_json::from_str(include_str!("../seeds/bank.json")).expect("seed bank parses"));

/// The named bank; panics on an unknown name.
pub fn bank(name: &str) -> &'static [u64] {
    BANK.get(name).unwrap_or_else(|| panic!("no seed bank {name:?}"))
}

pub fn names() -> impl Iterator<Item = &'static str> {
    BANK.keys().map(String::as_str)
}
