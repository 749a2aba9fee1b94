use serde::{Deserialize, Serialize};

use super::manifest::{Manifest, ManifestItem};
use super::scheme::LevelLabel;
use super::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DurationStats {
    pub total_s: f64,
    pub min_s: f64,
    pub max_s: f64,
}

/// Aggregates for one proficiency level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelStats {
    pub level: LevelLabel,
    pub item_count: usize,
    pub speaker_count: usize,
    /// Present when the level has recordings.
    pub duration: Option<DurationStats>,
    /// Present when the level has essays.
    pub mean_token_len: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    /// One entry per scheme label, in scheme order. Empty levels carry zeros.
    pub per_level: Vec<LevelStats>,
    pub total_items: usize,
    pub total_speakers: usize,
    pub total_duration_s: f64,
}

/// Per-level item counts and duration/length aggregates.
///
/// Totals over the per-level rows equal the whole-manifest aggregates;
/// a level with no items yields zero counts and absent aggregates.
pub fn corpus_stats(manifest: &Manifest) -> Result<CorpusStats> {
    let mut per_level = Vec::with_capacity(manifest.scheme.labels.len());
    for label in &manifest.scheme.labels {
        per_level.push(LevelAccumulator::new(label.clone()));
    }

    for speaker in &manifest.speakers {
        let idx = manifest.scheme.index_of(&speaker.level)?;
        per_level[idx].speaker_count += 1;
    }

    let mut total_duration_s = 0.0;
    for item in &manifest.items {
        let level = manifest.item_level(item)?;
        let idx = manifest.scheme.index_of(&level)?;
        let acc = &mut per_level[idx];
        acc.item_count += 1;
        match item {
            ManifestItem::Recording(r) => {
                acc.add_duration(r.duration_s);
                total_duration_s += r.duration_s;
            }
            ManifestItem::Essay(e) => acc.add_tokens(e.token_count),
        }
    }

    Ok(CorpusStats {
        per_level: per_level.into_iter().map(LevelAccumulator::finish).collect(),
        total_items: manifest.items.len(),
        total_speakers: manifest.speakers.len(),
        total_duration_s,
    })
}

struct LevelAccumulator {
    level: LevelLabel,
    item_count: usize,
    speaker_count: usize,
    duration_total: f64,
    duration_min: f64,
    duration_max: f64,
    has_duration: bool,
    token_total: usize,
    essay_count: usize,
}

impl LevelAccumulator {
    fn new(level: LevelLabel) -> Self {
        LevelAccumulator {
            level,
            item_count: 0,
            speaker_count: 0,
            duration_total: 0.0,
            duration_min: f64::INFINITY,
            duration_max: f64::NEG_INFINITY,
            has_duration: false,
            token_total: 0,
            essay_count: 0,
        }
    }

    fn add_duration(&mut self, d: f64) {
        self.duration_total += d;
        self.duration_min = self.duration_min.min(d);
        self.duration_max = self.duration_max.max(d);
        self.has_duration = true;
    }

    fn add_tokens(&mut self, n: usize) {
        self.token_total += n;
        self.essay_count += 1;
    }

    fn finish(self) -> LevelStats {
        LevelStats {
            level: self.level,
            item_count: self.item_count,
            speaker_count: self.speaker_count,
            duration: self.has_duration.then_some(DurationStats {
                total_s: self.duration_total,
                min_s: self.duration_min,
                max_s: self.duration_max,
            }),
            mean_token_len: (self.essay_count > 0)
                .then(|| self.token_total as f64 / self.essay_count as f64),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{
        map_raw_level_to_cefr, CorpusKind, Essay, Gender, LevelScheme, Recording, RecordingKind,
        Speaker,
    };
    use std::path::PathBuf;

    fn private_manifest(durations: &[(&str, f64)]) -> Manifest {
        let speakers = vec![Speaker {
            id: "s1".to_string(),
            gender: Gender::Female,
            level: "L3".into(),
            corpus: CorpusKind::Private,
        }];
        let items = durations
            .iter()
            .map(|(id, d)| {
                ManifestItem::Recording(Recording {
                    id: id.to_string(),
                    speaker_id: "s1".to_string(),
                    path: PathBuf::from(format!("{id}.wav")),
                    duration_s: *d,
                    sample_rate: 16000,
                    kind: RecordingKind::Dialogue,
                })
            })
            .collect();
        Manifest::new(CorpusKind::Private, LevelScheme::private(), speakers, items).unwrap()
    }

    #[test]
    fn duration_aggregates_per_level() {
        let stats = corpus_stats(&private_manifest(&[("r1", 60.0), ("r2", 120.0)])).unwrap();
        let l3 = &stats.per_level[0];
        assert_eq!(l3.level.as_str(), "L3");
        assert_eq!(l3.item_count, 2);
        let d = l3.duration.as_ref().unwrap();
        assert_eq!(d.total_s, 180.0);
        assert_eq!(d.min_s, 60.0);
        assert_eq!(d.max_s, 120.0);
        // empty levels yield zeros
        assert_eq!(stats.per_level[1].item_count, 0);
        assert!(stats.per_level[1].duration.is_none());
    }

    #[test]
    fn essay_mean_token_length() {
        let learner = Speaker {
            id: "l1".to_string(),
            gender: Gender::Male,
            level: "A1".into(),
            corpus: CorpusKind::Efcamdat,
        };
        let essay = |id: &str, tokens: usize| {
            ManifestItem::Essay(Essay {
                id: id.to_string(),
                learner_id: "l1".to_string(),
                text: String::new(),
                raw_level: 1,
                cefr_level: map_raw_level_to_cefr(1).unwrap(),
                token_count: tokens,
            })
        };
        let manifest = Manifest::new(
            CorpusKind::Efcamdat,
            LevelScheme::cefr(),
            vec![learner],
            vec![essay("e1", 30), essay("e2", 50)],
        )
        .unwrap();
        let stats = corpus_stats(&manifest).unwrap();
        assert_eq!(stats.per_level[0].mean_token_len, Some(40.0));
    }

    #[test]
    fn per_level_totals_partition_the_manifest() {
        let manifest = private_manifest(&[("r1", 12.25), ("r2", 33.5), ("r3", 7.125)]);
        let stats = corpus_stats(&manifest).unwrap();
        let item_sum: usize = stats.per_level.iter().map(|l| l.item_count).sum();
        let speaker_sum: usize = stats.per_level.iter().map(|l| l.speaker_count).sum();
        let duration_sum: f64 = stats
            .per_level
            .iter()
            .filter_map(|l| l.duration.as_ref().map(|d| d.total_s))
            .sum();
        assert_eq!(item_sum, stats.total_items);
        assert_eq!(speaker_sum, stats.total_speakers);
        assert!((duration_sum - stats.total_duration_s).abs() < 1e-9);
    }
}
