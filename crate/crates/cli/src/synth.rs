//! Synthetic fixture corpora: small, fully offline datasets for smoke
//! runs, demos, and the acceptance suite.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use lpa_core::corpus::{
    map_raw_level_to_cefr, save_manifest, CorpusKind, Essay, Gender, LevelScheme, Manifest,
    ManifestItem, Recording, RecordingKind, Speaker,
};
use lpa_core::dsp::wav::write_wav_pcm16;

/// Structured-speech fixture: `speakers_per_cell` speakers for every
/// (gender, level) cell of the three-level scheme, each with
/// `recordings_per_speaker` short recordings whose spectral content
/// depends on the level, so small models have something to learn.
pub fn synth_speech_corpus(
    out_dir: &Path,
    speakers_per_cell: usize,
    recordings_per_speaker: usize,
    seed: u64,
) -> Result<Manifest> {
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))?;
    let scheme = LevelScheme::anglish();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut speakers = Vec::new();
    let mut items = Vec::new();
    let mut n = 0usize;
    for (level_idx, level) in scheme.labels.iter().enumerate() {
        for gender in [Gender::Female, Gender::Male] {
            for _ in 0..speakers_per_cell {
                let speaker_id = format!("spk{n:03}");
                speakers.push(Speaker {
                    id: speaker_id.clone(),
                    gender,
                    level: level.clone(),
                    corpus: CorpusKind::Anglish,
                });
                for r in 0..recordings_per_speaker {
                    let rec_id = format!("{speaker_id}_r{r}");
                    let seconds = rng.random_range(3.0..6.0);
                    let samples = level_tone(
                        seconds,
                        level_idx,
                        matches!(gender, Gender::Male),
                        &mut rng,
                    );
                    let path = format!("{rec_id}.wav");
                    write_wav_pcm16(out_dir.join(&path), &samples, 16000)
                        .map_err(|e| anyhow::anyhow!(e.to_string()))?;
                    items.push(ManifestItem::Recording(Recording {
                        id: rec_id,
                        speaker_id: speaker_id.clone(),
                        path: path.into(),
                        duration_s: samples.len() as f64 / 16000.0,
                        sample_rate: 16000,
                        kind: RecordingKind::Monologue,
                    }));
                }
                n += 1;
            }
        }
    }
    let manifest = Manifest::new(CorpusKind::Anglish, scheme, speakers, items)
        .map_err(|e| anyhow::anyhow!(e.to_string()))?;
    save_manifest(&manifest, out_dir.join("manifest.jsonl"))
        .map_err(|e| anyhow::anyhow!(e.to_string()))?;
    Ok(manifest)
}

fn level_tone(seconds: f64, level_idx: usize, male: bool, rng: &mut ChaCha8Rng) -> Vec<f32> {
    let n = (seconds * 16000.0) as usize;
    let base = 250.0 + 350.0 * level_idx as f64 + if male { 40.0 } else { 0.0 };
    let second = base * 2.3;
    (0..n)
        .map(|i| {
            let t = i as f64 / 16000.0;
            let v = 0.35 * (std::f64::consts::TAU * base * t).sin()
                + 0.15 * (std::f64::consts::TAU * second * t).sin()
                + rng.random_range(-0.02..0.02);
            v as f32
        })
        .collect()
}

/// Dialogue fixture: per-speaker interview recordings where the learner
/// and interviewer occupy disjoint tone bands, plus the replay-diarizer
/// labels and replay-ASR transcripts the adapters consume.
pub fn synth_dialogue_corpus(
    out_dir: &Path,
    speakers_per_level: usize,
    seed: u64,
) -> Result<Manifest> {
    std::fs::create_dir_all(out_dir)?;
    let scheme = LevelScheme::private();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut speakers = Vec::new();
    let mut items = Vec::new();
    let mut labels_lines = Vec::new();
    let mut asr_map: BTreeMap<String, serde_json::Value> = BTreeMap::new();

    let level_words = [
        ["basic", "simple", "small"],
        ["steady", "clearer", "growing"],
        ["fluent", "complex", "layered"],
    ];

    let mut n = 0usize;
    for (level_idx, level) in scheme.labels.iter().enumerate() {
        for s in 0..speakers_per_level {
            let speaker_id = format!("dlg{n:03}");
            speakers.push(Speaker {
                id: speaker_id.clone(),
                gender: if s % 2 == 0 { Gender::Female } else { Gender::Male },
                level: level.clone(),
                corpus: CorpusKind::Private,
            });
            let rec_id = format!("{speaker_id}_int");
            // learner 0..4 s and 6..9 s, interviewer 4..6 s
            let mut samples = vec![0.0f32; 9 * 16000];
            let learner_hz = 280.0 + 90.0 * level_idx as f64;
            fill_tone(&mut samples, 0.0, 4.0, learner_hz, &mut rng);
            fill_tone(&mut samples, 4.0, 6.0, 2800.0, &mut rng);
            fill_tone(&mut samples, 6.0, 9.0, learner_hz, &mut rng);
            let path = format!("{rec_id}.wav");
            write_wav_pcm16(out_dir.join(&path), &samples, 16000)
                .map_err(|e| anyhow::anyhow!(e.to_string()))?;
            items.push(ManifestItem::Recording(Recording {
                id: rec_id.clone(),
                speaker_id: speaker_id.clone(),
                path: path.into(),
                duration_s: 9.0,
                sample_rate: 16000,
                kind: RecordingKind::Dialogue,
            }));

            for (tag, start, end) in [("L", 0.0, 4.0), ("I", 4.0, 6.0), ("L", 6.0, 9.0)] {
                labels_lines.push(format!(
                    "{{\"recording_id\":\"{rec_id}\",\"speaker\":\"{tag}\",\"start_s\":{start},\"end_s\":{end}}}"
                ));
            }

            let words = level_words[level_idx];
            let sentence = |k: usize| {
                format!(
                    "The {} answer number {k} stays {}.",
                    words[k % 3],
                    words[(k + 1) % 3]
                )
            };
            let full_text: String =
                (0..10).map(sentence).collect::<Vec<_>>().join(" ");
            let student_text: String =
                (0..8).map(|k| sentence(k + 1)).collect::<Vec<_>>().join(" ");
            asr_map.insert(
                format!("{rec_id}#full"),
                serde_json::json!({"text": full_text, "sentences": null}),
            );
            asr_map.insert(
                format!("{rec_id}#student_only"),
                serde_json::json!({"text": student_text, "sentences": null}),
            );
            n += 1;
        }
    }

    std::fs::write(out_dir.join("diarization.jsonl"), labels_lines.join("\n") + "\n")?;
    std::fs::write(
        out_dir.join("asr.json"),
        serde_json::to_string_pretty(&asr_map)?,
    )?;
    let manifest = Manifest::new(CorpusKind::Private, scheme, speakers, items)
        .map_err(|e| anyhow::anyhow!(e.to_string()))?;
    save_manifest(&manifest, out_dir.join("manifest.jsonl"))
        .map_err(|e| anyhow::anyhow!(e.to_string()))?;
    Ok(manifest)
}

fn fill_tone(samples: &mut [f32], from: f64, to: f64, hz: f64, rng: &mut ChaCha8Rng) {
    let (a, b) = ((from * 16000.0) as usize, (to * 16000.0) as usize);
    for i in a..b.min(samples.len()) {
        let t = i as f64 / 16000.0;
        samples[i] =
            (0.4 * (std::f64::consts::TAU * hz * t).sin() + rng.random_range(-0.01..0.01)) as f32;
    }
}

/// Essay fixture with a planted class marker at the 15th token: filler
/// words are fixed per position, the marker word names the class, and a
/// unique salt token past position 95 keeps texts distinct without
/// affecting any sweep length. Raw levels spread over 1..=16 so the
/// five CEFR bands are all populated.
pub fn synth_essay_corpus(out_dir: &Path, per_band: usize, seed: u64) -> Result<Manifest> {
    std::fs::create_dir_all(out_dir)?;
    let _ = seed;
    let markers = ["alpha", "bravo", "carbon", "delta", "ember"];
    let filler = ["the", "sky", "keeps", "turning", "over", "quiet", "fields"];
    // one raw level per CEFR band keeps band labels deterministic
    let raw_levels = [1u8, 4, 7, 10, 13];

    let mut speakers = Vec::new();
    let mut items = Vec::new();
    for (band, (&raw, marker)) in raw_levels.iter().zip(markers).enumerate() {
        for j in 0..per_band {
            let learner_id = format!("lrn{band}_{j:04}");
            let essay_id = format!("essay{band}_{j:04}");
            let mut words: Vec<String> = (0..110)
                .map(|p| filler[p % filler.len()].to_string())
                .collect();
            words[14] = marker.to_string();
            words[100] = format!("salt{band}x{j}");
            let cefr = map_raw_level_to_cefr(raw).map_err(|e| anyhow::anyhow!(e.to_string()))?;
            speakers.push(Speaker {
                id: learner_id.clone(),
                gender: if j % 2 == 0 { Gender::Female } else { Gender::Male },
                level: cefr.clone(),
                corpus: CorpusKind::Efcamdat,
            });
            items.push(ManifestItem::Essay(Essay {
                id: essay_id,
                learner_id,
                text: words.join(" "),
                raw_level: raw,
                cefr_level: cefr,
                token_count: words.len(),
            }));
        }
    }
    let manifest = Manifest::new(CorpusKind::Efcamdat, LevelScheme::cefr(), speakers, items)
        .map_err(|e| anyhow::anyhow!(e.to_string()))?;
    save_manifest(&manifest, out_dir.join("manifest.jsonl"))
        .map_err(|e| anyhow::anyhow!(e.to_string()))?;
    Ok(manifest)
}
