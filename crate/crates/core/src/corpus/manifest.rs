use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::scheme::{CorpusKind, Gender, LevelLabel, LevelScheme};
use super::{CorpusError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Speaker {
    pub id: String,
    pub gender: Gender,
    pub level: LevelLabel,
    pub corpus: CorpusKind,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordingKind {
    Reading,
    Monologue,
    Dialogue,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Recording {
    pub id: String,
    pub speaker_id: String,
    pub path: PathBuf,
    pub duration_s: f64,
    pub sample_rate: u32,
    pub kind: RecordingKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Essay {
    pub id: String,
    pub learner_id: String,
    pub text: String,
    pub raw_level: u8,
    pub cefr_level: LevelLabel,
    /// Length of the text under the text encoder's subword tokenizer.
    pub token_count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ManifestItem {
    Recording(Recording),
    Essay(Essay),
}

impl ManifestItem {
    pub fn id(&self) -> &str {
        match self {
            ManifestItem::Recording(r) => &r.id,
            ManifestItem::Essay(e) => &e.id,
        }
    }

    /// The speaker (or learner) the item belongs to.
    pub fn speaker_id(&self) -> &str {
        match self {
            ManifestItem::Recording(r) => &r.speaker_id,
            ManifestItem::Essay(e) => &e.learner_id,
        }
    }
}

/// A validated corpus description binding media to labels.
///
/// Manifests are immutable after load and safe to share across worker
/// threads by reference.
#[derive(Clone, Debug, PartialEq)]
pub struct Manifest {
    pub corpus: CorpusKind,
    pub scheme: LevelScheme,
    pub speakers: Vec<Speaker>,
    pub items: Vec<ManifestItem>,
}

impl Manifest {
    pub fn new(
        corpus: CorpusKind,
        scheme: LevelScheme,
        speakers: Vec<Speaker>,
        items: Vec<ManifestItem>,
    ) -> Result<Self> {
        let manifest = Manifest {
            corpus,
            scheme,
            speakers,
            items,
        };
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn speaker(&self, id: &str) -> Option<&Speaker> {
        self.speakers.iter().find(|s| s.id == id)
    }

    pub fn recordings(&self) -> impl Iterator<Item = &Recording> {
        self.items.iter().filter_map(|i| match i {
            ManifestItem::Recording(r) => Some(r),
            _ => None,
        })
    }

    pub fn essays(&self) -> impl Iterator<Item = &Essay> {
        self.items.iter().filter_map(|i| match i {
            ManifestItem::Essay(e) => Some(e),
            _ => None,
        })
    }

    /// Level label an item is classified under, resolved through its
    /// speaker for recordings and carried directly for essays.
    pub fn item_level(&self, item: &ManifestItem) -> Result<LevelLabel> {
        match item {
            ManifestItem::Recording(r) => self
                .speaker(&r.speaker_id)
                .map(|s| s.level.clone())
                .ok_or_else(|| {
                    CorpusError::Integrity(format!(
                        "recording {:?} references unknown speaker {:?}",
                        r.id, r.speaker_id
                    ))
                }),
            ManifestItem::Essay(e) => {
                if self.scheme.name == "efcamdat_raw" {
                    Ok(LevelLabel(e.raw_level.to_string()))
                } else {
                    Ok(e.cefr_level.clone())
                }
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let mut speaker_ids = BTreeSet::new();
        for s in &self.speakers {
            if !speaker_ids.insert(s.id.as_str()) {
                return Err(CorpusError::Integrity(format!(
                    "duplicate speaker id {:?}",
                    s.id
                )));
            }
            if !self.scheme.contains(&s.level) {
                return Err(CorpusError::Scheme(format!(
                    "speaker {:?} has level {:?} outside scheme {:?}",
                    s.id, s.level.0, self.scheme.name
                )));
            }
        }
        let mut item_ids = BTreeSet::new();
        for item in &self.items {
            if !item_ids.insert(item.id().to_string()) {
                return Err(CorpusError::Integrity(format!(
                    "duplicate item id {:?}",
                    item.id()
                )));
            }
            if !speaker_ids.contains(item.speaker_id()) {
                return Err(CorpusError::Integrity(format!(
                    "item {:?} references unknown speaker {:?}",
                    item.id(),
                    item.speaker_id()
                )));
            }
            match item {
                ManifestItem::Recording(r) => {
                    if r.duration_s <= 0.0 {
                        return Err(CorpusError::Integrity(format!(
                            "recording {:?} has non-positive duration",
                            r.id
                        )));
                    }
                    if r.sample_rate == 0 {
                        return Err(CorpusError::Integrity(format!(
                            "recording {:?} has zero sample rate",
                            r.id
                        )));
                    }
                }
                ManifestItem::Essay(e) => {
                    let expected = super::scheme::map_raw_level_to_cefr(e.raw_level)?;
                    if expected != e.cefr_level {
                        return Err(CorpusError::Integrity(format!(
                            "essay {:?}: cefr level {:?} does not match raw level {} (expected {:?})",
                            e.id, e.cefr_level.0, e.raw_level, expected.0
                        )));
                    }
                    if self.scheme.name == "cefr" && !self.scheme.contains(&e.cefr_level) {
                        return Err(CorpusError::Scheme(format!(
                            "essay {:?} has level {:?} outside scheme cefr",
                            e.id, e.cefr_level.0
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct HeaderRecord {
    #[serde(rename = "type")]
    kind: String,
    corpus: CorpusKind,
    scheme: LevelScheme,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum BodyRecord {
    Speaker(SpeakerRecord),
    Recording(Recording),
    Essay(Essay),
}

/// Speaker line without the corpus field; the corpus comes from the header.
#[derive(Serialize, Deserialize)]
struct SpeakerRecord {
    id: String,
    gender: Gender,
    level: LevelLabel,
}

/// Loads and validates a line-delimited JSON manifest.
///
/// The first line must be a header record carrying the corpus tag and
/// level scheme; every following line is a speaker, recording, or essay
/// record. The format is streamable so million-essay corpora never need
/// to be materialized in one JSON document.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let reader = BufReader::new(file);

    let mut header: Option<HeaderRecord> = None;
    let mut speakers = Vec::new();
    let mut items = Vec::new();

    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        if header.is_none() {
            let h: HeaderRecord =
                serde_json::from_str(&line).map_err(|e| CorpusError::Parse {
                    line: lineno + 1,
                    message: format!("expected header record: {e}"),
                })?;
            if h.kind != "header" {
                return Err(CorpusError::Parse {
                    line: lineno + 1,
                    message: format!("first record has type {:?}, expected \"header\"", h.kind),
                });
            }
            header = Some(h);
            continue;
        }
        let record: BodyRecord = serde_json::from_str(&line).map_err(|e| CorpusError::Parse {
            line: lineno + 1,
            message: e.to_string(),
        })?;
        match record {
            BodyRecord::Speaker(s) => speakers.push(Speaker {
                id: s.id,
                gender: s.gender,
                level: s.level,
                corpus: header.as_ref().expect("header parsed").corpus,
            }),
            BodyRecord::Recording(r) => items.push(ManifestItem::Recording(r)),
            BodyRecord::Essay(e) => items.push(ManifestItem::Essay(e)),
        }
    }

    let header = header.ok_or(CorpusError::Parse {
        line: 0,
        message: "manifest is empty (missing header record)".to_string(),
    })?;
    Manifest::new(header.corpus, header.scheme, speakers, items)
}

/// Writes a manifest in the same line-delimited format `load_manifest` reads.
pub fn save_manifest(manifest: &Manifest, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut w = BufWriter::new(file);
    let io_err = |source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    };

    let header = HeaderRecord {
        kind: "header".to_string(),
        corpus: manifest.corpus,
        scheme: manifest.scheme.clone(),
    };
    writeln!(w, "{}", serde_json::to_string(&header).expect("serializable")).map_err(io_err)?;
    for s in &manifest.speakers {
        let record = BodyRecord::Speaker(SpeakerRecord {
            id: s.id.clone(),
            gender: s.gender,
            level: s.level.clone(),
        });
        writeln!(w, "{}", serde_json::to_string(&record).expect("serializable")).map_err(io_err)?;
    }
    for item in &manifest.items {
        let record = match item {
            ManifestItem::Recording(r) => BodyRecord::Recording(r.clone()),
            ManifestItem::Essay(e) => BodyRecord::Essay(e.clone()),
        };
        writeln!(w, "{}", serde_json::to_string(&record).expect("serializable")).map_err(io_err)?;
    }
    w.flush().map_err(io_err)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::map_raw_level_to_cefr;

    fn speaker(id: &str, level: &str) -> Speaker {
        Speaker {
            id: id.to_string(),
            gender: Gender::Female,
            level: level.into(),
            corpus: CorpusKind::Anglish,
        }
    }

    fn recording(id: &str, speaker_id: &str, duration_s: f64) -> ManifestItem {
        ManifestItem::Recording(Recording {
            id: id.to_string(),
            speaker_id: speaker_id.to_string(),
            path: PathBuf::from(format!("{id}.wav")),
            duration_s,
            sample_rate: 16000,
            kind: RecordingKind::Reading,
        })
    }

    #[test]
    fn minimal_manifest_round_trips() {
        let manifest = Manifest::new(
            CorpusKind::Anglish,
            LevelScheme::anglish(),
            vec![speaker("s1", "NES")],
            vec![recording("r1", "s1", 12.5)],
        )
        .unwrap();
        assert_eq!(manifest.items.len(), 1);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        save_manifest(&manifest, &path).unwrap();
        let reloaded = load_manifest(&path).unwrap();
        assert_eq!(reloaded, manifest);
    }

    #[test]
    fn dangling_speaker_reference_is_an_integrity_error() {
        let err = Manifest::new(
            CorpusKind::Anglish,
            LevelScheme::anglish(),
            vec![speaker("s1", "NES")],
            vec![recording("r1", "sX", 3.0)],
        )
        .unwrap_err();
        assert!(matches!(err, CorpusError::Integrity(_)), "{err}");
        assert!(err.to_string().contains("sX"));
    }

    #[test]
    fn label_outside_scheme_is_a_scheme_error() {
        let mut bad = speaker("s1", "B3");
        bad.corpus = CorpusKind::Efcamdat;
        let err =
            Manifest::new(CorpusKind::Efcamdat, LevelScheme::cefr(), vec![bad], vec![]).unwrap_err();
        assert!(matches!(err, CorpusError::Scheme(_)), "{err}");
    }

    #[test]
    fn duplicate_item_ids_rejected() {
        let err = Manifest::new(
            CorpusKind::Anglish,
            LevelScheme::anglish(),
            vec![speaker("s1", "NES")],
            vec![recording("r1", "s1", 3.0), recording("r1", "s1", 4.0)],
        )
        .unwrap_err();
        assert!(matches!(err, CorpusError::Integrity(_)));
    }

    #[test]
    fn essay_cefr_must_match_raw_banding() {
        let essay = |cefr: &str| {
            ManifestItem::Essay(Essay {
                id: "e1".to_string(),
                learner_id: "l1".to_string(),
                text: "hello world".to_string(),
                raw_level: 8,
                cefr_level: cefr.into(),
                token_count: 2,
            })
        };
        let learner = Speaker {
            id: "l1".to_string(),
            gender: Gender::Male,
            level: map_raw_level_to_cefr(8).unwrap(),
            corpus: CorpusKind::Efcamdat,
        };
        assert!(Manifest::new(
            CorpusKind::Efcamdat,
            LevelScheme::cefr(),
            vec![learner.clone()],
            vec![essay("B1")]
        )
        .is_ok());
        assert!(Manifest::new(
            CorpusKind::Efcamdat,
            LevelScheme::cefr(),
            vec![learner],
            vec![essay("C1")]
        )
        .is_err());
    }

    #[test]
    fn malformed_file_is_a_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        std::fs::write(&path, "{not json\n").unwrap();
        let err = load_manifest(&path).unwrap_err();
        assert!(matches!(err, CorpusError::Parse { .. }));
    }
}
