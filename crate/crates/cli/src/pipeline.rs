//! The staged experiment runner: validate -> preprocess -> split ->
//! audit -> train -> evaluate -> report. Stages are idempotent given
//! unchanged inputs (content-hash skip), every artifact embeds the
//! config hash, and nothing trains without a passing leakage audit.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use ndarray::{Array1, Array2, Array3};
use serde::{Deserialize, Serialize};

use lpa_core::corpus::{corpus_stats, load_manifest, Gender, Manifest, Recording};
use lpa_core::dialogue::{
    run_dialogue_pipeline, DialoguePipelineConfig, ReplayAsr, ReplayDiarizer, Transcript, Variant,
    WindowMode,
};
use lpa_core::dsp::{
    self, fbank, read_features, resample, segment, write_features, zscore, FbankConfig,
    ZscoreScope, PIPELINE_SAMPLE_RATE,
};
use lpa_core::models::{
    load_checkpoint, save_checkpoint, svm_fit, BilstmAttn, BilstmAttnConfig, Cnn2d, Cnn2dConfig,
    FinetuneTextModel, FreqCnnConfig, Mlp, MlpConfig, MultiTaskModel, ResNet, ResNetConfig,
    SimTextEncoder, SpeechEncoderConfig, SvmConfig, TextEncoderAdapter, TrainableClassifier,
};
use lpa_core::registry::Registry;
use lpa_core::splits::{
    audit_leakage, duration_matched_partition, fixed_test_holdout, load_split, save_split,
    stratified_kfold, stratified_subset, Granularity, SplitAssignment,
};
use lpa_core::train::{
    evaluate, predict, run_report, train, write_history_csv, Dataset, LrMap, Metrics,
    MultiTaskWeights, ReportInputs, SampleInput, SweepFamily, SweepSpec, TrainSchedule,
};
use lpa_core::util::{derive_seed, sha256_hex};

use crate::config::{ExperimentConfig, NormalizeScope, SplitSpec};

pub struct Pipeline {
    pub config: ExperimentConfig,
    pub out_dir: PathBuf,
    pub jobs: usize,
    config_dir: PathBuf,
    config_hash: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunSummary {
    pub config_hash: String,
    pub stages_run: Vec<String>,
    pub stages_skipped: Vec<String>,
    pub test_metrics: Option<Metrics>,
}

#[derive(Serialize, Deserialize)]
struct StageRecord {
    stage: String,
    hash: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct FoldRun {
    index: usize,
    train_ids: BTreeSet<String>,
    val_ids: BTreeSet<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct SplitPlan {
    folds: Vec<FoldRun>,
    test_ids: BTreeSet<String>,
    policy: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct FoldSummary {
    index: usize,
    best_epoch: usize,
    best_val_loss: f64,
    val_accuracy: f64,
}

impl Pipeline {
    pub fn new(
        config_path: &Path,
        out_dir: PathBuf,
        jobs: usize,
        seed_override: Option<u64>,
    ) -> Result<Self> {
        let mut config = ExperimentConfig::load(config_path)?;
        if let Some(seed) = seed_override {
            config.seed = seed;
        }
        let config_hash = config.hash();
        Ok(Pipeline {
            config,
            out_dir,
            jobs: jobs.max(1),
            config_dir: config_path
                .parent()
                .map(Path::to_path_buf)
                .unwrap_or_else(|| PathBuf::from(".")),
            config_hash,
        })
    }

    pub fn config_hash(&self) -> &str {
        &self.config_hash
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.config_dir.join(p)
        }
    }

    fn manifest_path(&self) -> PathBuf {
        self.resolve(&self.config.corpus.manifest)
    }

    fn load_manifest(&self) -> Result<Manifest> {
        load_manifest(self.manifest_path()).map_err(|e| anyhow!(e.to_string()))
    }

    /// Chained content hash up to and including `stage`.
    fn stage_hash(&self, stage: &str) -> Result<String> {
        let manifest_bytes = std::fs::read(self.manifest_path())
            .with_context(|| format!("reading {}", self.manifest_path().display()))?;
        let mut h = sha256_hex(
            &[self.config.canonical_bytes(), manifest_bytes].concat(),
        );
        for s in STAGES {
            h = sha256_hex(format!("{h}:{s}").as_bytes());
            if *s == stage {
                return Ok(h);
            }
        }
        bail!("unknown stage {stage:?}")
    }

    fn stage_record_path(&self, stage: &str) -> PathBuf {
        self.out_dir.join("stages").join(format!("{stage}.stage.json"))
    }

    fn stage_is_current(&self, stage: &str) -> bool {
        let Ok(want) = self.stage_hash(stage) else {
            return false;
        };
        let Ok(bytes) = std::fs::read(self.stage_record_path(stage)) else {
            return false;
        };
        serde_json::from_slice::<StageRecord>(&bytes)
            .map(|r| r.hash == want)
            .unwrap_or(false)
    }

    fn mark_stage(&self, stage: &str) -> Result<()> {
        let record = StageRecord {
            stage: stage.to_string(),
            hash: self.stage_hash(stage)?,
        };
        let path = self.stage_record_path(stage);
        std::fs::create_dir_all(path.parent().expect("stage dir"))?;
        std::fs::write(path, serde_json::to_vec_pretty(&record)?)?;
        Ok(())
    }

    /// Runs every stage in order, skipping stages whose inputs are
    /// unchanged. Fails fast; a failed leakage audit refuses to train.
    pub fn run(&self) -> Result<RunSummary> {
        std::fs::create_dir_all(&self.out_dir)?;
        let mut summary = RunSummary {
            config_hash: self.config_hash.clone(),
            stages_run: Vec::new(),
            stages_skipped: Vec::new(),
            test_metrics: None,
        };
        for &stage in STAGES {
            if self.stage_is_current(stage) {
                eprintln!("[{stage}] up to date, skipping");
                summary.stages_skipped.push(stage.to_string());
                continue;
            }
            eprintln!("[{stage}] running");
            match stage {
                "validate" => self.stage_validate()?,
                "preprocess" => self.stage_preprocess()?,
                "split" => self.stage_split()?,
                "audit" => self.stage_audit()?,
                "train" => self.stage_train()?,
                "evaluate" => summary.test_metrics = self.stage_evaluate()?,
                "report" => self.stage_report()?,
                _ => unreachable!(),
            }
            self.mark_stage(stage)?;
            summary.stages_run.push(stage.to_string());
        }
        if summary.test_metrics.is_none() {
            summary.test_metrics = self.read_eval_metrics().ok();
        }
        Ok(summary)
    }

    pub fn stage_validate(&self) -> Result<()> {
        self.config.validate(&Registry::builtin())?;
        let manifest = self.load_manifest()?;
        if manifest.items.is_empty() {
            bail!("manifest has no items");
        }
        Ok(())
    }

    fn fbank_config(&self) -> FbankConfig {
        FbankConfig {
            n_mels: self.config.preprocessing.n_mels,
            ..FbankConfig::default()
        }
    }

    fn features_dir(&self) -> PathBuf {
        self.out_dir.join("features")
    }

    fn dialogue_dir(&self) -> PathBuf {
        self.out_dir.join("dialogue")
    }

    /// Audio for training: the dialogue variant when dialogue
    /// preprocessing is configured, the raw recording otherwise.
    fn training_audio_path(&self, recording: &Recording) -> PathBuf {
        match &self.config.preprocessing.dialogue {
            Some(d) => self
                .dialogue_dir()
                .join(format!("{}.{}.wav", recording.id, d.variant_for_training)),
            None => self.resolve(&recording.path),
        }
    }

    pub fn stage_preprocess(&self) -> Result<()> {
        let manifest = self.load_manifest()?;
        if manifest.recordings().next().is_none() {
            return Ok(()); // essay corpora carry no audio
        }

        if let Some(dialogue) = &self.config.preprocessing.dialogue {
            let diarizer = ReplayDiarizer::from_labels_file(self.resolve(&dialogue.labels))
                .map_err(|e| anyhow!(e.to_string()))?;
            let asr = ReplayAsr::from_file(self.resolve(&dialogue.transcripts))
                .map_err(|e| anyhow!(e.to_string()))?;
            let mut variants = Vec::new();
            for v in &dialogue.variants {
                variants.push(match v.as_str() {
                    "full" => Variant::Full,
                    "student_only" => Variant::StudentOnly,
                    other => bail!("unknown variant {other:?}"),
                });
            }
            let dialogue_config = DialoguePipelineConfig {
                variants,
                jobs: self.jobs,
                ..Default::default()
            };
            let audio_root = self
                .manifest_path()
                .parent()
                .map(Path::to_path_buf)
                .unwrap_or_default();
            let report = run_dialogue_pipeline(
                &manifest,
                &audio_root,
                &diarizer,
                &asr,
                &dialogue_config,
                &self.dialogue_dir(),
            )
            .map_err(|e| anyhow!(e.to_string()))?;
            std::fs::write(
                self.dialogue_dir().join("audit.json"),
                serde_json::to_vec_pretty(&report)?,
            )?;
        }

        // feature extraction for the fixed-geometry image models
        let cfg = self.fbank_config();
        let features_dir = self.features_dir();
        std::fs::create_dir_all(&features_dir)?;
        let recordings: Vec<&Recording> = manifest.recordings().collect();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.jobs)
            .build()?;
        let per_utterance = self.config.preprocessing.normalize == NormalizeScope::PerUtterance;
        let results: Vec<Result<()>> = pool.install(|| {
            use rayon::prelude::*;
            recordings
                .par_iter()
                .map(|recording| {
                    let path = self.training_audio_path(recording);
                    let raw = dsp::wav::read_wav(&path).map_err(|e| anyhow!(e.to_string()))?;
                    let clip = resample(&raw, PIPELINE_SAMPLE_RATE)
                        .map_err(|e| anyhow!(e.to_string()))?;
                    let segments = segment(&clip, self.config.preprocessing.segment_seconds)
                        .map_err(|e| anyhow!(e.to_string()))?;
                    let rec_dir = features_dir.join(&recording.id);
                    std::fs::create_dir_all(&rec_dir)?;
                    for seg in &segments {
                        let features =
                            fbank(&seg.clip, &cfg).map_err(|e| anyhow!(e.to_string()))?;
                        let features = if per_utterance {
                            zscore(&features, &ZscoreScope::PerUtterance)
                                .map_err(|e| anyhow!(e.to_string()))?
                        } else {
                            features
                        };
                        write_features(
                            rec_dir.join(format!("seg{:04}.fbank", seg.index)),
                            &features,
                            &cfg,
                            seg.clip.source_span.clone(),
                            Some(self.config_hash.clone()),
                        )
                        .map_err(|e| anyhow!(e.to_string()))?;
                    }
                    Ok(())
                })
                .collect()
        });
        for r in results {
            r?;
        }
        Ok(())
    }

    fn split_dir(&self) -> PathBuf {
        self.out_dir.join("split")
    }

    fn load_plan(&self) -> Result<SplitPlan> {
        let bytes = std::fs::read(self.split_dir().join("plan.json"))?;
        Ok(serde_json::from_slice(&bytes)?)
    }

    pub fn stage_split(&self) -> Result<()> {
        let manifest = self.load_manifest()?;
        let seed = derive_seed(self.config.seed, "split");
        let plan = match &self.config.split {
            SplitSpec::HoldoutKfold { k } => {
                let speakers: Vec<&_> = manifest.speakers.iter().collect();
                let test = fixed_test_holdout(&speakers, &manifest.scheme.labels, seed)
                    .map_err(|e| anyhow!(e.to_string()))?;
                let pool: Vec<&_> = manifest
                    .speakers
                    .iter()
                    .filter(|s| !test.contains(&s.id))
                    .collect();
                let folds = stratified_kfold(&pool, *k, seed).map_err(|e| anyhow!(e.to_string()))?;
                SplitPlan {
                    folds: folds
                        .folds
                        .iter()
                        .enumerate()
                        .map(|(index, f)| FoldRun {
                            index,
                            train_ids: f.train.clone(),
                            val_ids: f.val.clone(),
                        })
                        .collect(),
                    test_ids: test,
                    policy: format!("holdout + stratified {k}-fold, seed {seed}"),
                }
            }
            SplitSpec::Kfold { k } => {
                let speakers: Vec<&_> = manifest.speakers.iter().collect();
                let folds = stratified_kfold(&speakers, *k, seed)
                    .map_err(|e| anyhow!(e.to_string()))?;
                SplitPlan {
                    folds: folds
                        .folds
                        .iter()
                        .enumerate()
                        .map(|(index, f)| FoldRun {
                            index,
                            train_ids: f.train.clone(),
                            val_ids: f.val.clone(),
                        })
                        .collect(),
                    test_ids: BTreeSet::new(),
                    policy: format!("stratified {k}-fold, seed {seed}"),
                }
            }
            SplitSpec::Subset { sizes } => {
                let essays: Vec<&_> = manifest.essays().collect();
                let split = stratified_subset(&essays, *sizes, seed)
                    .map_err(|e| anyhow!(e.to_string()))?;
                plan_from_split(split)
            }
            SplitSpec::DurationMatch {
                per_level,
                reference_level,
                fraction,
            } => {
                let outcome = duration_matched_partition(
                    &manifest,
                    *per_level,
                    &reference_level.as_str().into(),
                    *fraction,
                    seed,
                )
                .map_err(|e| anyhow!(e.to_string()))?;
                std::fs::create_dir_all(self.split_dir())?;
                std::fs::write(
                    self.split_dir().join("duration_match.json"),
                    serde_json::to_vec_pretty(&outcome.per_level)?,
                )?;
                for d in &outcome.diagnostics {
                    eprintln!("[split] {d}");
                }
                plan_from_split(outcome.split)
            }
            SplitSpec::File { path } => {
                let split = load_split(self.resolve(path)).map_err(|e| anyhow!(e.to_string()))?;
                plan_from_split(split)
            }
        };

        std::fs::create_dir_all(self.split_dir())?;
        std::fs::write(
            self.split_dir().join("plan.json"),
            serde_json::to_vec_pretty(&plan)?,
        )?;
        // the first fold triple as a plain split file for downstream tools
        let first = &plan.folds[0];
        let assignment = SplitAssignment {
            train: first.train_ids.clone(),
            val: first.val_ids.clone(),
            test: plan.test_ids.clone(),
            seed,
            policy: plan.policy.clone(),
        };
        save_split(&assignment, self.split_dir().join("split.json"))
            .map_err(|e| anyhow!(e.to_string()))?;
        Ok(())
    }

    pub fn stage_audit(&self) -> Result<()> {
        let manifest = self.load_manifest()?;
        let plan = self.load_plan()?;
        let mut all_violations = Vec::new();
        for fold in &plan.folds {
            let assignment = SplitAssignment {
                train: fold.train_ids.clone(),
                val: fold.val_ids.clone(),
                test: plan.test_ids.clone(),
                seed: 0,
                policy: String::new(),
            };
            let report = audit_leakage(&assignment, &manifest, Granularity::Speaker);
            for v in report.violations {
                all_violations.push((fold.index, v));
            }
        }
        let audit_dir = self.out_dir.join("audit");
        std::fs::create_dir_all(&audit_dir)?;
        std::fs::write(
            audit_dir.join("leakage.json"),
            serde_json::to_vec_pretty(&all_violations)?,
        )?;
        if !all_violations.is_empty() {
            let names: BTreeSet<&str> = all_violations
                .iter()
                .map(|(_, v)| v.unit_id.as_str())
                .collect();
            bail!(
                "leakage audit failed: speaker(s) {:?} appear in multiple partitions; refusing to train",
                names
            );
        }
        Ok(())
    }

    fn image_shape(&self) -> (usize, usize) {
        let seg_samples =
            (self.config.preprocessing.segment_seconds * PIPELINE_SAMPLE_RATE as f64) as usize;
        let cfg = self.fbank_config();
        let frames = 1 + (seg_samples - cfg.frame_samples()) / cfg.hop_samples();
        (frames, cfg.n_mels)
    }

    fn text_encoder(&self) -> SimTextEncoder {
        let dim = self.model_option_usize("encoder_dim").unwrap_or(768);
        let layers = self.model_option_usize("encoder_layers").unwrap_or(2);
        SimTextEncoder::new(dim, layers, derive_seed(self.config.seed, "text-encoder"))
    }

    fn model_option_usize(&self, key: &str) -> Option<usize> {
        self.config.model.options.get(key)?.as_u64().map(|v| v as usize)
    }

    fn model_option_f64(&self, key: &str) -> Option<f64> {
        self.config.model.options.get(key)?.as_f64()
    }

    fn build_model(&self, manifest: &Manifest) -> Result<Box<dyn TrainableClassifier>> {
        let num_classes = manifest.scheme.num_classes();
        let seed = derive_seed(self.config.seed, "model");
        let arch = self.config.model.architecture.as_str();
        let model: Box<dyn TrainableClassifier> = match arch {
            "cnn2d" | "freq-cnn" => {
                let mut cfg = if arch == "cnn2d" {
                    Cnn2dConfig::default_2d(num_classes, seed)
                } else {
                    FreqCnnConfig::default_freq(num_classes, seed)
                };
                cfg.input_shape = self.image_shape();
                if let Some(plan) = self.config.model.options.get("channel_plan") {
                    let plan: Vec<usize> = serde_json::from_value(plan.clone())?;
                    if plan.len() != cfg.blocks.len() {
                        bail!("channel_plan must list {} channels", cfg.blocks.len());
                    }
                    for (block, ch) in cfg.blocks.iter_mut().zip(plan) {
                        block.out_channels = ch;
                    }
                }
                Box::new(Cnn2d::new(cfg).map_err(|e| anyhow!(e.to_string()))?)
            }
            "resnet" => {
                let mut cfg = ResNetConfig::default_resnet(num_classes, seed);
                cfg.input_shape = self.image_shape();
                if let Some(channels) = self.config.model.options.get("channels") {
                    cfg.channels = serde_json::from_value(channels.clone())?;
                }
                Box::new(ResNet::new(cfg).map_err(|e| anyhow!(e.to_string()))?)
            }
            "speech-multitask" | "speech-singletask" => {
                let cfg = SpeechEncoderConfig {
                    encoder_dim: self.model_option_usize("encoder_dim").unwrap_or(768),
                    head_hidden_dim: self.model_option_usize("head_hidden_dim").unwrap_or(256),
                    num_level_classes: num_classes,
                    num_gender_classes: (arch == "speech-multitask").then_some(2),
                    seed,
                    sim_frame_samples: self.model_option_usize("sim_frame_samples").unwrap_or(320),
                    sim_frontend_dim: self.model_option_usize("sim_frontend_dim").unwrap_or(64),
                    ..Default::default()
                };
                Box::new(MultiTaskModel::new(cfg, true).map_err(|e| anyhow!(e.to_string()))?)
            }
            "mlp" => {
                let dim = self.model_option_usize("encoder_dim").unwrap_or(768);
                let hidden = self.model_option_usize("hidden").unwrap_or(128);
                Box::new(Mlp::new(MlpConfig {
                    layer_sizes: (dim, hidden, num_classes),
                    dropout_p: 0.2,
                    seed,
                }))
            }
            "finetune-text" => {
                let encoder = self.text_encoder();
                let mut mask = vec![false; encoder.num_layers()];
                if let Some(last) = mask.last_mut() {
                    *last = true;
                }
                let dim = encoder.dim;
                let hidden = self.model_option_usize("hidden").unwrap_or(128);
                Box::new(
                    FinetuneTextModel::new(
                        encoder,
                        &mask,
                        MlpConfig {
                            layer_sizes: (dim, hidden, num_classes),
                            dropout_p: 0.2,
                            seed,
                        },
                    )
                    .map_err(|e| anyhow!(e.to_string()))?,
                )
            }
            "bilstm-attn" => {
                let dim = self.model_option_usize("encoder_dim").unwrap_or(768);
                Box::new(BilstmAttn::new(BilstmAttnConfig {
                    embedding_dim: dim,
                    hidden_dim: self.model_option_usize("hidden_dim").unwrap_or(128),
                    attention_dim: self.model_option_usize("attention_dim").unwrap_or(64),
                    num_classes,
                    seed,
                }))
            }
            "svm" => bail!("svm is fit directly, not trained epoch-wise"),
            other => bail!("unknown architecture {other:?}"),
        };
        Ok(model)
    }

    /// Which id in the split plan covers a recording sample.
    fn split_unit<'a>(&self, manifest: &'a Manifest, item_id: &'a str) -> &'a str {
        manifest
            .items
            .iter()
            .find(|i| i.id() == item_id)
            .map(|i| i.speaker_id())
            .unwrap_or(item_id)
    }

    fn dataset_for_ids(&self, manifest: &Manifest, ids: &BTreeSet<String>) -> Result<Dataset> {
        let arch = self.config.model.architecture.as_str();
        let mut data = Dataset::default();
        let gender_of = |g: Gender| match g {
            Gender::Female => 0usize,
            Gender::Male => 1usize,
        };

        match arch {
            "cnn2d" | "freq-cnn" | "resnet" => {
                let (frames, mels) = self.image_shape();
                for recording in manifest.recordings() {
                    let speaker = manifest
                        .speaker(&recording.speaker_id)
                        .ok_or_else(|| anyhow!("unknown speaker"))?;
                    if !ids.contains(&speaker.id) {
                        continue;
                    }
                    let level = manifest
                        .scheme
                        .index_of(&speaker.level)
                        .map_err(|e| anyhow!(e.to_string()))?;
                    let rec_dir = self.features_dir().join(&recording.id);
                    let mut entries: Vec<PathBuf> = std::fs::read_dir(&rec_dir)
                        .with_context(|| format!("features missing for {}", recording.id))?
                        .map(|e| e.map(|e| e.path()))
                        .collect::<std::io::Result<_>>()?;
                    entries.sort();
                    for path in entries {
                        let ff = read_features(&path).map_err(|e| anyhow!(e.to_string()))?;
                        if ff.features.frames() != frames || ff.features.n_mels() != mels {
                            bail!(
                                "feature geometry {}x{} does not match the model's {}x{}",
                                ff.features.frames(),
                                ff.features.n_mels(),
                                frames,
                                mels
                            );
                        }
                        let mut img = Array3::zeros((1, frames, mels));
                        for t in 0..frames {
                            for j in 0..mels {
                                img[[0, t, j]] = ff.features.values[[t, j]] as f64;
                            }
                        }
                        data.push(
                            format!("{}:{}", recording.id, path.display()),
                            SampleInput::Image(img),
                            level,
                            Some(gender_of(speaker.gender)),
                        );
                    }
                }
            }
            "speech-multitask" | "speech-singletask" => {
                let window = self.config.preprocessing.window_seconds.unwrap_or(8.0);
                for recording in manifest.recordings() {
                    let speaker = manifest
                        .speaker(&recording.speaker_id)
                        .ok_or_else(|| anyhow!("unknown speaker"))?;
                    if !ids.contains(&speaker.id) {
                        continue;
                    }
                    let level = manifest
                        .scheme
                        .index_of(&speaker.level)
                        .map_err(|e| anyhow!(e.to_string()))?;
                    let raw = dsp::wav::read_wav(self.training_audio_path(recording))
                        .map_err(|e| anyhow!(e.to_string()))?;
                    let mut clip =
                        resample(&raw, PIPELINE_SAMPLE_RATE).map_err(|e| anyhow!(e.to_string()))?;
                    let max_samples = (window * PIPELINE_SAMPLE_RATE as f64) as usize;
                    clip.samples.truncate(max_samples.max(1));
                    data.push(
                        recording.id.clone(),
                        SampleInput::Wave(clip),
                        level,
                        Some(gender_of(speaker.gender)),
                    );
                }
            }
            "mlp" | "svm" | "finetune-text" | "bilstm-attn" => {
                self.push_text_samples(manifest, ids, &mut data)?;
            }
            other => bail!("unknown architecture {other:?}"),
        }
        Ok(data)
    }

    /// Text samples come from essays directly, or from dialogue
    /// transcripts windowed into chunks.
    fn push_text_samples(
        &self,
        manifest: &Manifest,
        ids: &BTreeSet<String>,
        data: &mut Dataset,
    ) -> Result<()> {
        let arch = self.config.model.architecture.as_str();
        let encoder = self.text_encoder();
        let max_tokens = self.model_option_usize("max_tokens").unwrap_or(60);

        let mut texts: Vec<(String, String, usize)> = Vec::new(); // (sample id, text, level)
        if manifest.essays().next().is_some() {
            for essay in manifest.essays() {
                if !ids.contains(&essay.id) {
                    continue;
                }
                let level = manifest
                    .scheme
                    .index_of(&essay.cefr_level)
                    .map_err(|e| anyhow!(e.to_string()))?;
                texts.push((essay.id.clone(), essay.text.clone(), level));
            }
        } else {
            let dialogue = self
                .config
                .preprocessing
                .dialogue
                .as_ref()
                .ok_or_else(|| anyhow!("text models over recordings need dialogue transcripts"))?;
            let window = match dialogue.transcript_window.as_deref() {
                None | Some("seven_sentences") => WindowMode::SevenSentences,
                Some("one_minute") => WindowMode::OneMinute,
                Some(other) => bail!("unknown transcript window {other:?}"),
            };
            for recording in manifest.recordings() {
                let speaker = manifest
                    .speaker(&recording.speaker_id)
                    .ok_or_else(|| anyhow!("unknown speaker"))?;
                if !ids.contains(&speaker.id) {
                    continue;
                }
                let level = manifest
                    .scheme
                    .index_of(&speaker.level)
                    .map_err(|e| anyhow!(e.to_string()))?;
                let t_path = self.dialogue_dir().join(format!(
                    "{}.{}.transcript.json",
                    recording.id, dialogue.variant_for_training
                ));
                let transcript: Transcript = serde_json::from_slice(&std::fs::read(&t_path)?)?;
                if transcript.sentences.is_empty() {
                    continue;
                }
                let chunks = lpa_core::dialogue::window_transcript(&transcript, window)
                    .map_err(|e| anyhow!(e.to_string()))?;
                for chunk in chunks {
                    let text = chunk
                        .sentences
                        .iter()
                        .map(|s| s.text.as_str())
                        .collect::<Vec<_>>()
                        .join(" ");
                    texts.push((
                        format!("{}#chunk{}", recording.id, chunk.index),
                        text,
                        level,
                    ));
                }
            }
        }

        for (id, text, level) in texts {
            let tokens = lpa_core::models::truncate_tokens(&encoder.tokenize(&text), max_tokens);
            let input = match arch {
                "mlp" | "svm" => SampleInput::Vector(
                    encoder
                        .pooled_output(&tokens)
                        .map_err(|e| anyhow!(e.to_string()))?,
                ),
                "finetune-text" => SampleInput::Tokens(tokens),
                "bilstm-attn" => SampleInput::Sequence(
                    encoder
                        .sequence_output(&tokens)
                        .map_err(|e| anyhow!(e.to_string()))?,
                ),
                _ => unreachable!(),
            };
            data.push(id, input, level, None);
        }
        Ok(())
    }

    fn train_dir(&self) -> PathBuf {
        self.out_dir.join("train")
    }

    pub fn stage_train(&self) -> Result<()> {
        // enforced ordering: training only proceeds over a clean audit
        if !self.stage_is_current("audit") {
            self.stage_audit()?;
        }
        let manifest = self.load_manifest()?;
        let plan = self.load_plan()?;
        std::fs::create_dir_all(self.train_dir())?;

        if self.config.model.architecture == "svm" {
            // the kernel machine is fit once per fold in the evaluate
            // stage (deterministic refit; no epoch-wise training)
            let summaries: Vec<FoldSummary> = plan
                .folds
                .iter()
                .map(|f| FoldSummary {
                    index: f.index,
                    best_epoch: 0,
                    best_val_loss: f64::NAN,
                    val_accuracy: f64::NAN,
                })
                .collect();
            std::fs::write(
                self.train_dir().join("folds.json"),
                serde_json::to_vec_pretty(&summaries)?,
            )?;
            return Ok(());
        }

        let schedule = self.config.resolved_schedule()?;
        let weights = MultiTaskWeights::default();
        let is_multitask = self.config.model.architecture == "speech-multitask";
        let lr_map = self.lr_map();

        let mut summaries = Vec::new();
        for fold in &plan.folds {
            let train_ds = self.dataset_for_ids(&manifest, &fold.train_ids)?;
            let val_ds = self.dataset_for_ids(&manifest, &fold.val_ids)?;
            let mut model = self.build_model(&manifest)?;
            let mut fold_schedule = schedule.clone();
            fold_schedule.seed = derive_seed(schedule.seed, &format!("fold:{}", fold.index));
            let outcome = train(
                model.as_mut(),
                &train_ds,
                &val_ds,
                &fold_schedule,
                &lr_map,
                is_multitask.then_some(&weights),
            )
            .map_err(|e| anyhow!(e.to_string()))?;

            let fold_dir = self.train_dir().join(format!("fold{}", fold.index));
            std::fs::create_dir_all(&fold_dir)?;
            write_history_csv(fold_dir.join("history.csv"), &outcome.history)
                .map_err(|e| anyhow!(e.to_string()))?;
            let params = model.params_mut();
            let refs: Vec<&lpa_core::models::Param> = params.iter().map(|p| &**p).collect();
            save_checkpoint(
                fold_dir.join("checkpoint.ckpt"),
                &refs,
                serde_json::json!({
                    "architecture": self.config.model.architecture,
                    "config_hash": self.config_hash,
                    "fold": fold.index,
                    "seed": fold_schedule.seed,
                }),
            )
            .map_err(|e| anyhow!(e.to_string()))?;

            let record = outcome
                .history
                .get(outcome.best_epoch)
                .ok_or_else(|| anyhow!("missing best epoch record"))?;
            summaries.push(FoldSummary {
                index: fold.index,
                best_epoch: outcome.best_epoch,
                best_val_loss: outcome.best_val_loss,
                val_accuracy: record.val_accuracy,
            });
        }
        std::fs::write(
            self.train_dir().join("folds.json"),
            serde_json::to_vec_pretty(&summaries)?,
        )?;
        Ok(())
    }

    fn lr_map(&self) -> LrMap {
        // separate optimizers for the encoder and classifier components
        match self.config.model.architecture.as_str() {
            "speech-multitask" | "speech-singletask" => {
                let encoder_lr = self.model_option_f64("encoder_lr").unwrap_or(1e-5);
                LrMap::single("encoder", encoder_lr)
            }
            _ => LrMap::default(),
        }
    }

    fn read_fold_summaries(&self) -> Result<Vec<FoldSummary>> {
        let bytes = std::fs::read(self.train_dir().join("folds.json"))?;
        Ok(serde_json::from_slice(&bytes)?)
    }

    fn read_eval_metrics(&self) -> Result<Metrics> {
        let bytes = std::fs::read(self.out_dir.join("eval").join("metrics.json"))?;
        Ok(serde_json::from_slice(&bytes)?)
    }

    pub fn stage_evaluate(&self) -> Result<Option<Metrics>> {
        let manifest = self.load_manifest()?;
        let plan = self.load_plan()?;
        let summaries = self.read_fold_summaries()?;
        let eval_dir = self.out_dir.join("eval");
        std::fs::create_dir_all(&eval_dir)?;

        // evaluation set: the held-out test speakers, or the best fold's
        // validation set when the protocol has no holdout
        let best = summaries
            .iter()
            .min_by(|a, b| a.best_val_loss.total_cmp(&b.best_val_loss))
            .ok_or_else(|| anyhow!("no folds trained"))?;
        let eval_ids = if plan.test_ids.is_empty() {
            plan.folds[best.index].val_ids.clone()
        } else {
            plan.test_ids.clone()
        };

        let metrics = if self.config.model.architecture == "svm" {
            let fold = &plan.folds[best.index];
            let train_ds = self.dataset_for_ids(&manifest, &fold.train_ids)?;
            let test_ds = self.dataset_for_ids(&manifest, &eval_ids)?;
            let (x, y) = vectors_of(&train_ds)?;
            let (tx, ty) = vectors_of(&test_ds)?;
            let cfg = SvmConfig {
                gamma: self.model_option_f64("svm_gamma").unwrap_or(0.01),
                c: self.model_option_f64("svm_c").unwrap_or(10.0),
                seed: derive_seed(self.config.seed, "svm"),
                ..Default::default()
            };
            let model = svm_fit(&x, &y, &cfg).map_err(|e| anyhow!(e.to_string()))?;
            let predictions = model.predict(&tx);
            evaluate(&predictions, &ty, manifest.scheme.num_classes())
                .map_err(|e| anyhow!(e.to_string()))?
        } else {
            let mut model = self.build_model(&manifest)?;
            let ckpt_path = self
                .train_dir()
                .join(format!("fold{}", best.index))
                .join("checkpoint.ckpt");
            let checkpoint = load_checkpoint(&ckpt_path).map_err(|e| anyhow!(e.to_string()))?;
            let mut params = model.params_mut();
            checkpoint
                .apply(&mut params)
                .map_err(|e| anyhow!(e.to_string()))?;
            drop(params);
            let test_ds = self.dataset_for_ids(&manifest, &eval_ids)?;
            let schedule = self.config.resolved_schedule()?;
            let predictions = predict(model.as_mut(), &test_ds, schedule.batch_size)
                .map_err(|e| anyhow!(e.to_string()))?;
            evaluate(&predictions, &test_ds.levels, manifest.scheme.num_classes())
                .map_err(|e| anyhow!(e.to_string()))?
        };

        std::fs::write(
            eval_dir.join("metrics.json"),
            serde_json::to_vec_pretty(&metrics)?,
        )?;
        Ok(Some(metrics))
    }

    pub fn stage_report(&self) -> Result<()> {
        let manifest = self.load_manifest()?;
        let summaries = self.read_fold_summaries()?;
        let metrics = self.read_eval_metrics().ok();
        let split_bytes = std::fs::read(self.split_dir().join("split.json"))?;

        let mut flags = vec![
            format!(
                "z-score scope: {}",
                match self.config.preprocessing.normalize {
                    NormalizeScope::PerUtterance => "per_utterance",
                    NormalizeScope::CorpusStats => "corpus_stats",
                }
            ),
            "dialogue order: silence removal, then diarization on the cleaned signal".to_string(),
        ];
        if matches!(self.config.split, SplitSpec::DurationMatch { .. }) {
            flags.push(
                "duration matching: 12 speakers per level, per-level target duration".to_string(),
            );
        }
        if self.config.model.architecture.starts_with("speech-") {
            flags.push(
                "waveform pooling: encoder outputs mean-pooled over the whole window".to_string(),
            );
        }

        let model_label = match &self.config.preprocessing.dialogue {
            Some(d) => {
                let tag = if d.variant_for_training == "full" { "FA" } else { "SA" };
                let window = self
                    .config
                    .preprocessing
                    .window_seconds
                    .map(|w| format!(" {w:.0}-sec"))
                    .unwrap_or_default();
                format!("{} {tag}{window}", self.config.model.architecture)
            }
            None => self.config.model.architecture.clone(),
        };

        let inputs = ReportInputs {
            title: self.config.report.title.clone(),
            config_hash: self.config_hash.clone(),
            seed: self.config.seed,
            split_hash: sha256_hex(&split_bytes),
            interpretation_flags: flags,
            single_vs_multi: None,
            classifier_metrics: None,
            variant_metrics: metrics.map(|m| vec![(model_label, m)]),
            sweep: None,
            fold_summaries: Some(
                summaries
                    .iter()
                    .map(|s| (s.index, s.best_val_loss, s.val_accuracy))
                    .collect(),
            ),
        };
        let doc = run_report(&inputs);
        std::fs::write(self.out_dir.join("report.md"), doc.markdown)?;
        std::fs::write(
            self.out_dir.join("report.json"),
            serde_json::to_vec_pretty(&doc.json)?,
        )?;
        let _ = manifest;
        Ok(())
    }

    /// The token-length sweep as a standalone command.
    pub fn run_sweep(&self) -> Result<lpa_core::train::SweepResult> {
        self.stage_validate()?;
        let manifest = self.load_manifest()?;
        if manifest.essays().next().is_none() {
            bail!("the token-length sweep runs over essay corpora");
        }
        if !self.stage_is_current("split") {
            self.stage_split()?;
            self.mark_stage("split")?;
        }
        self.stage_audit()?;
        let plan = self.load_plan()?;
        let fold = &plan.folds[0];
        let split = SplitAssignment {
            train: fold.train_ids.clone(),
            val: fold.val_ids.clone(),
            test: plan.test_ids.clone(),
            seed: self.config.seed,
            policy: plan.policy.clone(),
        };

        let encoder = self.text_encoder();
        let schedule = self.config.resolved_schedule()?;
        let svm_config = SvmConfig {
            gamma: self.model_option_f64("svm_gamma").unwrap_or(0.01),
            c: self.model_option_f64("svm_c").unwrap_or(10.0),
            ..Default::default()
        };
        let essays: Vec<&_> = manifest.essays().collect();
        let spec = SweepSpec {
            essays,
            scheme: &manifest.scheme,
            split: &split,
            encoder: &encoder,
            svm_config,
            mlp_schedule: schedule.clone(),
            finetune_schedule: schedule,
            seed: derive_seed(self.config.seed, "sweep"),
        };
        let result = lpa_core::train::token_length_sweep(
            &spec,
            &[SweepFamily::Svm, SweepFamily::Mlp, SweepFamily::Finetuned],
            &lpa_core::train::TOKEN_LENGTH_GRID,
        )
        .map_err(|e| anyhow!(e.to_string()))?;

        let split_bytes = std::fs::read(self.split_dir().join("split.json"))?;
        let inputs = ReportInputs {
            title: format!("{} token-length sweep", self.config.report.title),
            config_hash: self.config_hash.clone(),
            seed: self.config.seed,
            split_hash: sha256_hex(&split_bytes),
            interpretation_flags: vec![],
            sweep: Some((&result).into()),
            ..Default::default()
        };
        let doc = run_report(&inputs);
        std::fs::create_dir_all(&self.out_dir)?;
        std::fs::write(self.out_dir.join("sweep.md"), doc.markdown)?;
        std::fs::write(
            self.out_dir.join("sweep.json"),
            serde_json::to_vec_pretty(&doc.json)?,
        )?;
        Ok(result)
    }
}

const STAGES: &[&str] = &[
    "validate",
    "preprocess",
    "split",
    "audit",
    "train",
    "evaluate",
    "report",
];

fn plan_from_split(split: SplitAssignment) -> SplitPlan {
    SplitPlan {
        folds: vec![FoldRun {
            index: 0,
            train_ids: split.train.clone(),
            val_ids: split.val.clone(),
        }],
        test_ids: split.test.clone(),
        policy: split.policy.clone(),
    }
}

fn vectors_of(data: &Dataset) -> Result<(Array2<f64>, Vec<usize>)> {
    let mut rows: Vec<Array1<f64>> = Vec::with_capacity(data.len());
    for input in &data.inputs {
        match input {
            SampleInput::Vector(v) => rows.push(v.clone()),
            _ => bail!("svm needs vector inputs"),
        }
    }
    let dim = rows.first().map(|r| r.len()).unwrap_or(0);
    let mut x = Array2::zeros((rows.len(), dim));
    for (i, r) in rows.iter().enumerate() {
        x.row_mut(i).assign(r);
    }
    Ok((x, data.levels.clone()))
}
