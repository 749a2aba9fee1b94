//! Leakage auditing: no speaker may contribute to two partitions.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::Manifest;

use super::types::SplitAssignment;

/// Disjointness unit. Speaker granularity resolves essay ids to their
/// learner before checking, matching the strict speaker-separation
/// stance used for speech.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    Speaker,
    Item,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeakageViolation {
    /// Speaker (or item) id appearing in more than one partition.
    pub unit_id: String,
    pub partitions: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeakageReport {
    pub granularity: Granularity,
    pub violations: Vec<LeakageViolation>,
}

impl LeakageReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Reports every unit that appears in more than one partition of the
/// split. The report is empty if and only if the split is disjoint at
/// the requested granularity.
pub fn audit_leakage(
    split: &SplitAssignment,
    manifest: &Manifest,
    granularity: Granularity,
) -> LeakageReport {
    // item id -> owning speaker, for resolving essay/recording ids
    let item_owner: BTreeMap<&str, &str> = manifest
        .items
        .iter()
        .map(|i| (i.id(), i.speaker_id()))
        .collect();

    let resolve = |id: &str| -> String {
        match granularity {
            Granularity::Item => id.to_string(),
            Granularity::Speaker => item_owner.get(id).map_or(id, |v| v).to_string(),
        }
    };

    let mut seen: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for (name, ids) in split.partitions() {
        // a speaker may own many items in one partition; count each
        // partition once
        let mut units: Vec<String> = ids.iter().map(|id| resolve(id)).collect();
        units.sort();
        units.dedup();
        for unit in units {
            seen.entry(unit).or_default().push(name.to_string());
        }
    }

    let violations = seen
        .into_iter()
        .filter(|(_, partitions)| partitions.len() > 1)
        .map(|(unit_id, partitions)| LeakageViolation { unit_id, partitions })
        .collect();

    LeakageReport {
        granularity,
        violations,
    }
}
