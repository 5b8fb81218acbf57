//! Object-id audit trail for training isolation.
//!
//! Anomalous-class objects must never influence a training step. Each stage
//! that consumes training data records the object ids it saw; the trail can
//! then be checked against the set of anomalous ids after a run.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct AuditTrail {
    /// stage name -> object ids consumed while fitting that stage
    stages: BTreeMap<String, BTreeSet<String>>,
}

impl AuditTrail {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record<I, S>(&mut self, stage: &str, ids: I)
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let entry = self.stages.entry(stage.into()).or_default();
        entry.extend(ids.into_iter().map(Into::into));
    }

    pub fn stages(&self) -> impl Iterator<Item = (&str, &BTreeSet<String>)> {
        self.stages.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn ids_for(&self, stage: &str) -> Option<&BTreeSet<String>> {
        self.stages.get(stage)
    }

    /// All `(stage, object_id)` pairs where a forbidden id was consumed.
    /// Empty means the protocol held.
    pub fn violations(&self, forbidden: &BTreeSet<String>) -> Vec<(String, String)> {
        let mut out = Vec::new();
        for (stage, ids) in &self.stages {
            for id in ids.intersection(forbidden) {
                out.push((stage.clone(), id.clone()));
            }
        }
        out
    }

    pub fn merge(&mut self, other: &AuditTrail) {
        for (stage, ids) in &other.stages {
            self.stages
                .entry(stage.clone())
                .or_default()
                .extend(ids.iter().cloned());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    #[test]
    fn violations_report_stage_and_id() {
        let mut trail = AuditTrail::new();
        trail.record("encoder", ["a", "b"]);
        trail.record("forest:SNIa", ["b", "c"]);

        let forbidden: BTreeSet<String> = ["c".to_string()].into_iter().collect();
        let v = trail.violations(&forbidden);
        assert_eq!(v, alloc::vec![("forest:SNIa".to_string(), "c".to_string())]);

        let clean: BTreeSet<String> = ["zzz".to_string()].into_iter().collect();
        assert!(trail.violations(&clean).is_empty());
    }
}
