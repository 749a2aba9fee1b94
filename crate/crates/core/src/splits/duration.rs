//! Duration-matched speaker partitioning for dialogue corpora.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Manifest, ManifestItem};
use crate::util::derive_seed;

use super::types::SplitAssignment;
use super::{Result, SplitError};

/// Random 12-subsets tried per (level, set) before keeping the best.
pub const CANDIDATE_BUDGET: usize = 10_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelMatchInfo {
    pub level: String,
    pub set: String,
    pub target_s: f64,
    pub achieved_s: f64,
    pub abs_error_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DurationMatchOutcome {
    pub split: SplitAssignment,
    pub per_level: Vec<LevelMatchInfo>,
    pub diagnostics: Vec<String>,
}

/// Draws validation and test sets of `per_level_count` speakers per level
/// whose total durations approach the target `fraction` of the reference
/// level's total duration; the remaining speakers form the train set.
///
/// Candidate subsets are generated deterministically: for each set tag
/// (`"val"` then `"test"`) and each level in scheme order, the remaining
/// candidate speakers are sorted by id and a `ChaCha8Rng` seeded with
/// `derive_seed(seed, "durmatch:{set}:{level}")` drives `CANDIDATE_BUDGET`
/// partial Fisher-Yates draws (for slot `i`, swap index `i` with a
/// uniform index in `i..n`, subset = first `per_level_count` entries).
/// The subset minimizing `|sum - target|` wins, ties to the earlier
/// candidate. The target is interpreted per level: each (set, level)
/// draw aims at the same global `fraction x duration(reference_level)`.
pub fn duration_matched_partition(
    manifest: &Manifest,
    per_level_count: usize,
    reference_level: &crate::corpus::LevelLabel,
    fraction: f64,
    seed: u64,
) -> Result<DurationMatchOutcome> {
    if !manifest.scheme.contains(reference_level) {
        return Err(SplitError::UnknownLevel(reference_level.to_string()));
    }

    // per-speaker total duration
    let mut speaker_duration: BTreeMap<&str, f64> = BTreeMap::new();
    for item in &manifest.items {
        if let ManifestItem::Recording(r) = item {
            *speaker_duration.entry(&r.speaker_id).or_insert(0.0) += r.duration_s;
        }
    }

    // speakers per level, sorted by id
    let mut by_level: BTreeMap<String, Vec<&str>> = BTreeMap::new();
    for s in &manifest.speakers {
        by_level.entry(s.level.to_string()).or_default().push(&s.id);
    }
    for v in by_level.values_mut() {
        v.sort();
    }

    for level in &manifest.scheme.labels {
        let available = by_level.get(&level.to_string()).map_or(0, |v| v.len());
        if available < 2 * per_level_count {
            return Err(SplitError::InfeasibleCounts {
                level: level.to_string(),
                required: 2 * per_level_count,
                available,
            });
        }
    }

    let target: f64 = manifest
        .speakers
        .iter()
        .filter(|s| &s.level == reference_level)
        .map(|s| speaker_duration.get(s.id.as_str()).copied().unwrap_or(0.0))
        .sum::<f64>()
        * fraction;

    let mut assigned: BTreeSet<&str> = BTreeSet::new();
    let mut val = BTreeSet::new();
    let mut test = BTreeSet::new();
    let mut per_level_info = Vec::new();
    let mut diagnostics = Vec::new();

    for set_tag in ["val", "test"] {
        for level in &manifest.scheme.labels {
            let candidates: Vec<&str> = by_level[&level.to_string()]
                .iter()
                .filter(|id| !assigned.contains(*id))
                .copied()
                .collect();
            let durations: Vec<f64> = candidates
                .iter()
                .map(|id| speaker_duration.get(*id).copied().unwrap_or(0.0))
                .collect();

            let rng_seed = derive_seed(seed, &format!("durmatch:{set_tag}:{level}"));
            let best = best_subset(
                candidates.len(),
                per_level_count,
                &durations,
                target,
                rng_seed,
                CANDIDATE_BUDGET,
            );

            let chosen: BTreeSet<&str> = best.indices.iter().map(|&i| candidates[i]).collect();
            let achieved: f64 = best.indices.iter().map(|&i| durations[i]).sum();
            let abs_error = (achieved - target).abs();
            if abs_error > target {
                diagnostics.push(format!(
                    "{set_tag}/{level}: best subset total {achieved:.1} s misses target \
                     {target:.1} s by more than the target itself; keeping best effort"
                ));
            }
            per_level_info.push(LevelMatchInfo {
                level: level.to_string(),
                set: set_tag.to_string(),
                target_s: target,
                achieved_s: achieved,
                abs_error_s: abs_error,
            });

            for id in &chosen {
                assigned.insert(id);
            }
            match set_tag {
                "val" => val.extend(chosen.iter().map(|s| s.to_string())),
                _ => test.extend(chosen.iter().map(|s| s.to_string())),
            }
        }
    }

    let train: BTreeSet<String> = manifest
        .speakers
        .iter()
        .filter(|s| !assigned.contains(s.id.as_str()))
        .map(|s| s.id.clone())
        .collect();

    let split = SplitAssignment {
        train,
        val,
        test,
        seed,
        policy: format!(
            "duration-matched per_level_count={per_level_count} reference={reference_level} \
             fraction={fraction} budget={CANDIDATE_BUDGET} target-interpretation=per-level"
        ),
    };
    Ok(DurationMatchOutcome {
        split,
        per_level: per_level_info,
        diagnostics,
    })
}

struct BestSubset {
    indices: Vec<usize>,
}

fn best_subset(
    n: usize,
    count: usize,
    durations: &[f64],
    target: f64,
    rng_seed: u64,
    budget: usize,
) -> BestSubset {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut indices: Vec<usize> = (0..n).collect();
    for _ in 0..budget {
        for i in 0..count {
            let j = rng.random_range(i..n);
            indices.swap(i, j);
        }
        let total: f64 = indices[..count].iter().map(|&i| durations[i]).sum();
        let err = (total - target).abs();
        // strict < keeps the earliest candidate on ties
        if best.as_ref().is_none_or(|(b, _)| err < *b) {
            best = Some((err, indices[..count].to_vec()));
        }
    }
    BestSubset {
        indices: best.expect("budget >= 1").1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{
        CorpusKind, Gender, LevelLabel, LevelScheme, Manifest, Recording, RecordingKind, Speaker,
    };

    /// Builds a private-style manifest with the given per-speaker minutes.
    fn manifest_with(durations_min: &[(&str, &str, f64)]) -> Manifest {
        let speakers = durations_min
            .iter()
            .map(|(id, level, _)| Speaker {
                id: id.to_string(),
                gender: Gender::Female,
                level: (*level).into(),
                corpus: CorpusKind::Private,
            })
            .collect();
        let items = durations_min
            .iter()
            .map(|(id, _, minutes)| {
                ManifestItem::Recording(Recording {
                    id: format!("rec_{id}"),
                    speaker_id: id.to_string(),
                    path: format!("{id}.wav").into(),
                    duration_s: minutes * 60.0,
                    sample_rate: 16000,
                    kind: RecordingKind::Dialogue,
                })
            })
            .collect();
        Manifest::new(CorpusKind::Private, LevelScheme::private(), speakers, items).unwrap()
    }

    #[test]
    fn uniform_durations_hit_the_target_exactly() {
        // 30 speakers per level, each of duration T/12 where T = 0.1 * total(L5)
        // total(L5) = 30 * d; T = 3d; uniform d makes every 12-subset sum 12d.
        // For the subset sum to equal T exactly we need T = 12d, so pick
        // fraction 12/30 = 0.4.
        let mut spec = Vec::new();
        for level in ["L3", "L4", "L5"] {
            for i in 0..30 {
                spec.push((format!("{level}_s{i:02}"), level, 5.0));
            }
        }
        let spec_refs: Vec<(&str, &str, f64)> =
            spec.iter().map(|(id, l, d)| (id.as_str(), *l, *d)).collect();
        let manifest = manifest_with(&spec_refs);
        let out = duration_matched_partition(&manifest, 12, &LevelLabel::new("L5"), 0.4, 17).unwrap();
        assert!(out.split.is_pairwise_disjoint());
        assert!(out.diagnostics.is_empty());
        for info in &out.per_level {
            assert!(info.abs_error_s.abs() < 1e-9, "{info:?}");
        }
        assert_eq!(out.split.val.len(), 36);
        assert_eq!(out.split.test.len(), 36);
        assert_eq!(out.split.train.len(), 90 - 72);
    }

    #[test]
    fn same_seed_reproduces_the_partition() {
        let mut spec = Vec::new();
        for level in ["L3", "L4", "L5"] {
            for i in 0..26 {
                spec.push((format!("{level}_s{i:02}"), level, 3.0 + i as f64));
            }
        }
        let spec_refs: Vec<(&str, &str, f64)> =
            spec.iter().map(|(id, l, d)| (id.as_str(), *l, *d)).collect();
        let manifest = manifest_with(&spec_refs);
        let a = duration_matched_partition(&manifest, 12, &LevelLabel::new("L5"), 0.1, 123).unwrap();
        let b = duration_matched_partition(&manifest, 12, &LevelLabel::new("L5"), 0.1, 123).unwrap();
        assert_eq!(a.split, b.split);
    }

    #[test]
    fn infeasible_counts_are_reported() {
        let mut spec = Vec::new();
        for level in ["L3", "L4", "L5"] {
            let n = if level == "L4" { 20 } else { 30 };
            for i in 0..n {
                spec.push((format!("{level}_s{i:02}"), level, 5.0));
            }
        }
        let spec_refs: Vec<(&str, &str, f64)> =
            spec.iter().map(|(id, l, d)| (id.as_str(), *l, *d)).collect();
        let manifest = manifest_with(&spec_refs);
        let err =
            duration_matched_partition(&manifest, 12, &LevelLabel::new("L5"), 0.1, 1).unwrap_err();
        match err {
            SplitError::InfeasibleCounts { level, required, available } => {
                assert_eq!(level, "L4");
                assert_eq!(required, 24);
                assert_eq!(available, 20);
            }
            other => panic!("unexpected {other}"),
        }
    }
}
