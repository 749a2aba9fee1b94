//! Stratified speaker k-fold cross-validation and the fixed per-cell
//! test holdout.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Gender, Speaker};
use crate::util::derive_seed;

use super::{Result, SplitError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fold {
    pub train: BTreeSet<String>,
    pub val: BTreeSet<String>,
}

/// K speaker-disjoint folds plus the held-out test speakers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldSet {
    pub folds: Vec<Fold>,
    pub held_out_test: BTreeSet<String>,
    pub strata: String,
    pub seed: u64,
}

fn gender_str(g: Gender) -> &'static str {
    match g {
        Gender::Female => "female",
        Gender::Male => "male",
    }
}

fn strata_groups<'a>(speakers: &'a [&'a Speaker]) -> BTreeMap<String, Vec<&'a Speaker>> {
    let mut groups: BTreeMap<String, Vec<&Speaker>> = BTreeMap::new();
    for s in speakers {
        groups
            .entry(format!("{}:{}", gender_str(s.gender), s.level))
            .or_default()
            .push(s);
    }
    for g in groups.values_mut() {
        g.sort_by(|a, b| a.id.cmp(&b.id));
    }
    groups
}

/// Splits speakers into `k` folds stratified by (gender, level).
///
/// Within each stratum, speakers are shuffled by the seed and dealt
/// round-robin across folds; the starting fold is chained across strata
/// so remainders spread instead of piling onto fold 0. Per-fold
/// per-stratum counts therefore differ from the ideal share by at most
/// one, and every speaker lands in exactly one fold's validation set.
pub fn stratified_kfold(speakers: &[&Speaker], k: usize, seed: u64) -> Result<FoldSet> {
    if k < 2 {
        return Err(SplitError::KTooSmall(k));
    }
    if speakers.len() < k {
        return Err(SplitError::TooFewSpeakers {
            available: speakers.len(),
            k,
        });
    }

    let groups = strata_groups(speakers);
    let mut fold_val: Vec<BTreeSet<String>> = vec![BTreeSet::new(); k];
    let mut offset = 0usize;
    for (stratum, members) in &groups {
        let mut ids: Vec<&str> = members.iter().map(|s| s.id.as_str()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("kfold:{stratum}")));
        ids.shuffle(&mut rng);
        for (i, id) in ids.iter().enumerate() {
            fold_val[(offset + i) % k].insert(id.to_string());
        }
        offset = (offset + ids.len()) % k;
    }

    let all: BTreeSet<String> = speakers.iter().map(|s| s.id.clone()).collect();
    let folds = fold_val
        .into_iter()
        .map(|val| Fold {
            train: all.difference(&val).cloned().collect(),
            val,
        })
        .collect();

    Ok(FoldSet {
        folds,
        held_out_test: BTreeSet::new(),
        strata: "(gender, level)".to_string(),
        seed,
    })
}

/// Selects one test speaker per (gender x level) cell, seeded.
///
/// Every cell of the cross product over the scheme's levels and both
/// genders must be non-empty; the chosen speakers are meant to be removed
/// from the CV pool before folding.
pub fn fixed_test_holdout(
    speakers: &[&Speaker],
    levels: &[crate::corpus::LevelLabel],
    seed: u64,
) -> Result<BTreeSet<String>> {
    let groups = strata_groups(speakers);
    let mut test = BTreeSet::new();
    for level in levels {
        for gender in ["female", "male"] {
            let cell = format!("{gender}:{level}");
            let members = groups
                .get(&cell)
                .filter(|m| !m.is_empty())
                .ok_or_else(|| SplitError::EmptyCell(cell.clone()))?;
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("holdout:{cell}")));
            let pick = members[rand::Rng::random_range(&mut rng, 0..members.len())];
            test.insert(pick.id.clone());
        }
    }
    Ok(test)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{CorpusKind, LevelLabel, LevelScheme};

    fn population(per_cell: &[usize]) -> Vec<Speaker> {
        // per_cell: counts for the 6 (gender, level) cells of the 3-level scheme
        let scheme = LevelScheme::anglish();
        let mut speakers = Vec::new();
        let mut n = 0;
        for (cell, &count) in per_cell.iter().enumerate() {
            let gender = if cell % 2 == 0 { Gender::Female } else { Gender::Male };
            let level = scheme.labels[cell / 2].clone();
            for _ in 0..count {
                speakers.push(Speaker {
                    id: format!("spk{n:03}"),
                    gender,
                    level: level.clone(),
                    corpus: CorpusKind::Anglish,
                });
                n += 1;
            }
        }
        speakers
    }

    fn refs(speakers: &[Speaker]) -> Vec<&Speaker> {
        speakers.iter().collect()
    }

    #[test]
    fn sixty_speakers_in_six_strata_give_one_per_stratum_per_fold() {
        let speakers = population(&[10, 10, 10, 10, 10, 10]);
        let folds = stratified_kfold(&refs(&speakers), 10, 7).unwrap();
        for fold in &folds.folds {
            assert_eq!(fold.val.len(), 6);
            let mut cells = BTreeSet::new();
            for id in &fold.val {
                let s = speakers.iter().find(|s| &s.id == id).unwrap();
                assert!(cells.insert(format!("{:?}:{}", s.gender, s.level)));
            }
        }
    }

    #[test]
    fn sixty_one_speakers_fold_sizes_are_six_or_seven() {
        let speakers = population(&[11, 10, 10, 10, 10, 10]);
        assert_eq!(speakers.len(), 61);
        let folds = stratified_kfold(&refs(&speakers), 10, 3).unwrap();
        let mut union = BTreeSet::new();
        for fold in &folds.folds {
            assert!(
                fold.val.len() == 6 || fold.val.len() == 7,
                "fold val size {}",
                fold.val.len()
            );
            for id in &fold.val {
                assert!(union.insert(id.clone()), "speaker {id} in two folds");
            }
            assert!(fold.train.is_disjoint(&fold.val));
        }
        assert_eq!(union.len(), 61);
    }

    #[test]
    fn same_seed_reproduces_the_fold_set() {
        let speakers = population(&[7, 9, 11, 8, 10, 12]);
        let a = stratified_kfold(&refs(&speakers), 10, 99).unwrap();
        let b = stratified_kfold(&refs(&speakers), 10, 99).unwrap();
        assert_eq!(a, b);
        let c = stratified_kfold(&refs(&speakers), 10, 100).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn degenerate_parameters_error() {
        let speakers = population(&[2, 2, 2, 2, 2, 2]);
        assert!(matches!(
            stratified_kfold(&refs(&speakers), 1, 0),
            Err(SplitError::KTooSmall(1))
        ));
        assert!(matches!(
            stratified_kfold(&refs(&speakers), 13, 0),
            Err(SplitError::TooFewSpeakers { .. })
        ));
    }

    #[test]
    fn holdout_takes_one_speaker_per_cell() {
        let speakers = population(&[3, 2, 4, 1, 2, 3]);
        let levels = LevelScheme::anglish().labels;
        let test = fixed_test_holdout(&refs(&speakers), &levels, 11).unwrap();
        assert_eq!(test.len(), 6);
        // the single-member (NES, male cell index 1)... cell with exactly 1
        // speaker is forced into test
        let forced = speakers
            .iter()
            .find(|s| s.gender == Gender::Male && s.level.as_str() == "FR1")
            .unwrap();
        assert!(test.contains(&forced.id));
    }

    #[test]
    fn empty_cell_is_named_in_the_error() {
        let speakers = population(&[3, 2, 4, 1, 2, 0]);
        let levels = LevelScheme::anglish().labels;
        let err = fixed_test_holdout(&refs(&speakers), &levels, 11).unwrap_err();
        match err {
            SplitError::EmptyCell(cell) => assert_eq!(cell, "male:FR2"),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn holdout_composes_with_kfold() {
        let speakers = population(&[12, 10, 11, 11, 9, 14]); // 67 speakers
        let levels = LevelScheme::anglish().labels;
        let test = fixed_test_holdout(&refs(&speakers), &levels, 5).unwrap();
        let pool: Vec<&Speaker> = speakers.iter().filter(|s| !test.contains(&s.id)).collect();
        assert_eq!(pool.len(), 61);
        let mut folds = stratified_kfold(&pool, 10, 5).unwrap();
        folds.held_out_test = test.clone();
        for fold in &folds.folds {
            assert!(fold.val.is_disjoint(&test));
            assert!(fold.train.is_disjoint(&test));
        }
        let label: LevelLabel = "FR2".into();
        let _ = label;
    }
}
