//! Published comparative AUROC targets, shipped as a data file.
//!
//! `data/comparative_reference.json` holds the per-class AUROC mean and std
//! each detector kind should be compared against when the external
//! comparative feature dataset is available. They are documentation-grade
//! reference labels; nothing in this repository asserts against them.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use mcif_core::eval::DetectorKind;
use serde::Deserialize;

const REFERENCE_JSON: &str = include_str!("../data/comparative_reference.json");

#[derive(Debug, Clone, Deserialize)]
pub struct ComparativeReference {
    pub note: String,
    /// Category name -> class names (the hierarchical grouping the
    /// one-class-out protocol runs over).
    pub categories: BTreeMap<String, Vec<String>>,
    /// Detector token -> class -> (auroc mean, std).
    pub reference: BTreeMap<String, BTreeMap<String, (f64, f64)>>,
}

pub fn comparative_reference() -> &'static ComparativeReference {
    static PARSED: OnceLock<ComparativeReference> = OnceLock::new();
    PARSED.get_or_init(|| {
        serde_json::from_str(REFERENCE_JSON).expect("bundled reference table parses")
    })
}

/// Reference (mean, std) for a detector/class pair, when published.
pub fn lookup(detector: DetectorKind, class: &str) -> Option<(f64, f64)> {
    comparative_reference()
        .reference
        .get(detector.as_str())
        .and_then(|per_class| per_class.get(class))
        .copied()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_table_parses_and_contains_expected_entries() {
        let table = comparative_reference();
        assert!(table.note.contains("external"));
        assert_eq!(table.categories.len(), 3);
        let n_classes: usize = table.categories.values().map(Vec::len).sum();
        assert_eq!(n_classes, 14);
        for per_class in table.reference.values() {
            assert_eq!(per_class.len(), 14);
            for (auroc, std) in per_class.values() {
                assert!((0.0..=1.0).contains(auroc));
                assert!(*std >= 0.0);
            }
        }
        assert_eq!(
            lookup(DetectorKind::ClassifierIForest, "SLSN"),
            Some((0.757, 0.047))
        );
        assert_eq!(
            lookup(DetectorKind::ClassifierMcif, "CEP"),
            Some((0.875, 0.036))
        );
        assert_eq!(lookup(DetectorKind::IForestRaw, "SLSN"), None);
        assert_eq!(lookup(DetectorKind::McifRaw, "NotAClass"), None);
    }
}
