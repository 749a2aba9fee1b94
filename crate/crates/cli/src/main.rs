use std::collections::BTreeSet;
use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};

use lpa_cli::config::ExperimentConfig;
use lpa_cli::pipeline::Pipeline;
use lpa_cli::synth;
use lpa_core::corpus::{corpus_stats, load_manifest};
use lpa_core::dsp::{
    fbank, resample, segment, write_features, zscore, FbankConfig, ZscoreScope,
    PIPELINE_SAMPLE_RATE,
};
use lpa_core::registry::Registry;
use lpa_core::splits::{
    audit_leakage, duration_matched_partition, fixed_test_holdout, load_split, save_split,
    stratified_kfold, stratified_subset, Granularity, SplitAssignment,
};
use lpa_core::util::derive_seed;

#[derive(Parser)]
#[command(
    name = "lpa",
    about = "Language proficiency assessment toolkit: preprocessing, splits, training, reports"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Corpus manifest tools.
    Corpus {
        #[command(subcommand)]
        command: CorpusCommand,
    },
    /// Feature extraction over a manifest.
    Dsp {
        #[command(subcommand)]
        command: DspCommand,
    },
    /// Dialogue preprocessing through the registered adapters.
    Dialogue {
        #[command(subcommand)]
        command: DialogueCommand,
    },
    /// Speaker-disjoint split construction and auditing.
    Splits {
        #[command(subcommand)]
        command: SplitsCommand,
    },
    /// Validate an experiment config against the registry and manifest.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run a single pipeline stage (preprocess, split, train, evaluate, report).
    Preprocess(StageArgs),
    Split(StageArgs),
    Train(StageArgs),
    Evaluate(StageArgs),
    Report(StageArgs),
    /// Token-length sweep over the text-model families.
    Sweep(StageArgs),
    /// Full pipeline: validate, preprocess, split, audit, train, evaluate, report.
    Run(StageArgs),
    /// List registered adapters, architectures, and schedule presets.
    Registry,
    /// Generate a synthetic fixture corpus.
    Synth {
        #[arg(long)]
        out: PathBuf,
        /// speech | dialogue | essays
        #[arg(long, default_value = "speech")]
        kind: String,
        #[arg(long, default_value_t = 2)]
        per_cell: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(clap::Args)]
struct StageArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 4)]
    jobs: usize,
}

#[derive(Subcommand)]
enum CorpusCommand {
    /// Load and validate a manifest.
    Validate { path: PathBuf },
    /// Per-level counts and duration/length aggregates.
    Stats {
        path: PathBuf,
        #[arg(long)]
        by_level: bool,
    },
}

#[derive(Subcommand)]
enum DspCommand {
    Extract {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 8.0)]
        segment_seconds: f64,
        #[arg(long, default_value_t = 40)]
        n_mels: usize,
        /// per-utterance | none
        #[arg(long, default_value = "per-utterance")]
        normalize: String,
    },
}

#[derive(Subcommand)]
enum DialogueCommand {
    Run {
        #[arg(long)]
        manifest: PathBuf,
        /// Diarizer adapter id (replay-diarizer).
        #[arg(long)]
        diarizer: String,
        /// Labels file for the replay diarizer.
        #[arg(long)]
        labels: PathBuf,
        /// ASR adapter id (replay-asr).
        #[arg(long)]
        asr: String,
        /// Replay transcripts file.
        #[arg(long)]
        transcripts: PathBuf,
        #[arg(long, default_value = "full,student_only")]
        variants: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 4)]
        jobs: usize,
    },
}

#[derive(Subcommand)]
enum SplitsCommand {
    Kfold {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Remove a fixed per-(gender, level) test holdout first.
        #[arg(long)]
        with_holdout: bool,
    },
    Holdout {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    Subset {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value = "2000,200,200")]
        sizes: String,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    DurationMatch {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value_t = 12)]
        per_level: usize,
        #[arg(long)]
        reference_level: String,
        #[arg(long, default_value_t = 0.10)]
        fraction: f64,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    Audit {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        split: PathBuf,
        /// speaker | item
        #[arg(long, default_value = "speaker")]
        granularity: String,
    },
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = dispatch(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Corpus { command } => corpus_command(command),
        Command::Dsp { command } => dsp_command(command),
        Command::Dialogue { command } => dialogue_command(command),
        Command::Splits { command } => splits_command(command),
        Command::Validate { config } => {
            let config = ExperimentConfig::load(&config)?;
            config.validate(&Registry::builtin())?;
            println!("config ok (hash {})", config.hash());
            Ok(())
        }
        Command::Preprocess(args) => stage(args, |p| {
            p.stage_validate()?;
            p.stage_preprocess()
        }),
        Command::Split(args) => stage(args, |p| {
            p.stage_validate()?;
            p.stage_split()
        }),
        Command::Train(args) => stage(args, |p| p.stage_train()),
        Command::Evaluate(args) => stage(args, |p| p.stage_evaluate().map(|_| ())),
        Command::Report(args) => stage(args, |p| p.stage_report()),
        Command::Sweep(args) => stage(args, |p| {
            let result = p.run_sweep()?;
            for (family, accs) in &result.rows {
                println!(
                    "{family}: {}",
                    accs.iter()
                        .map(|a| format!("{:.1}", a * 100.0))
                        .collect::<Vec<_>>()
                        .join(" ")
                );
            }
            Ok(())
        }),
        Command::Run(args) => stage(args, |p| {
            let summary = p.run()?;
            println!(
                "run complete: config {} ({} stages run, {} skipped)",
                summary.config_hash,
                summary.stages_run.len(),
                summary.stages_skipped.len()
            );
            if let Some(m) = &summary.test_metrics {
                println!(
                    "test accuracy {:.1}%  macro P {:.2}  macro R {:.2}  macro F1 {:.2}",
                    m.accuracy * 100.0,
                    m.macro_precision,
                    m.macro_recall,
                    m.macro_f1
                );
            }
            Ok(())
        }),
        Command::Registry => {
            for (id, kind) in Registry::builtin().list() {
                println!("{id}  ({kind})");
            }
            Ok(())
        }
        Command::Synth {
            out,
            kind,
            per_cell,
            seed,
        } => {
            match kind.as_str() {
                "speech" => {
                    synth::synth_speech_corpus(&out, per_cell, 2, seed)?;
                }
                "dialogue" => {
                    synth::synth_dialogue_corpus(&out, per_cell, seed)?;
                }
                "essays" => {
                    synth::synth_essay_corpus(&out, per_cell, seed)?;
                }
                other => bail!("unknown fixture kind {other:?} (speech|dialogue|essays)"),
            }
            println!("fixture written to {}", out.display());
            Ok(())
        }
    }
}

fn stage(args: StageArgs, f: impl FnOnce(&Pipeline) -> Result<()>) -> Result<()> {
    let pipeline = Pipeline::new(&args.config, args.out, args.jobs, args.seed)?;
    f(&pipeline)
}

fn corpus_command(command: CorpusCommand) -> Result<()> {
    match command {
        CorpusCommand::Validate { path } => {
            let manifest = load_manifest(&path).map_err(|e| anyhow!(e.to_string()))?;
            println!(
                "ok: {} speakers, {} items, scheme {}",
                manifest.speakers.len(),
                manifest.items.len(),
                manifest.scheme.name
            );
            Ok(())
        }
        CorpusCommand::Stats { path, by_level } => {
            let manifest = load_manifest(&path).map_err(|e| anyhow!(e.to_string()))?;
            let stats = corpus_stats(&manifest).map_err(|e| anyhow!(e.to_string()))?;
            if by_level {
                for level in &stats.per_level {
                    let extra = match (&level.duration, level.mean_token_len) {
                        (Some(d), _) => format!(
                            "duration total {:.1}s min {:.1}s max {:.1}s",
                            d.total_s, d.min_s, d.max_s
                        ),
                        (None, Some(len)) => format!("mean token length {len:.1}"),
                        _ => String::new(),
                    };
                    println!(
                        "{}: {} items, {} speakers  {extra}",
                        level.level, level.item_count, level.speaker_count
                    );
                }
            }
            println!(
                "total: {} items, {} speakers, {:.1}s audio",
                stats.total_items, stats.total_speakers, stats.total_duration_s
            );
            Ok(())
        }
    }
}

fn dsp_command(command: DspCommand) -> Result<()> {
    let DspCommand::Extract {
        manifest,
        out,
        segment_seconds,
        n_mels,
        normalize,
    } = command;
    let manifest_dir = manifest.parent().map(PathBuf::from).unwrap_or_default();
    let m = load_manifest(&manifest).map_err(|e| anyhow!(e.to_string()))?;
    let cfg = FbankConfig {
        n_mels,
        ..FbankConfig::default()
    };
    std::fs::create_dir_all(&out)?;
    let mut n_files = 0usize;
    for recording in m.recordings() {
        let raw = lpa_core::dsp::wav::read_wav(manifest_dir.join(&recording.path))
            .map_err(|e| anyhow!(e.to_string()))?;
        let clip = resample(&raw, PIPELINE_SAMPLE_RATE).map_err(|e| anyhow!(e.to_string()))?;
        let segments = segment(&clip, segment_seconds).map_err(|e| anyhow!(e.to_string()))?;
        let rec_dir = out.join(&recording.id);
        std::fs::create_dir_all(&rec_dir)?;
        for seg in &segments {
            let features = fbank(&seg.clip, &cfg).map_err(|e| anyhow!(e.to_string()))?;
            let features = match normalize.as_str() {
                "per-utterance" => zscore(&features, &ZscoreScope::PerUtterance)
                    .map_err(|e| anyhow!(e.to_string()))?,
                "none" => features,
                other => bail!("unknown normalize mode {other:?}"),
            };
            write_features(
                rec_dir.join(format!("seg{:04}.fbank", seg.index)),
                &features,
                &cfg,
                seg.clip.source_span.clone(),
                None,
            )
            .map_err(|e| anyhow!(e.to_string()))?;
            n_files += 1;
        }
    }
    println!("{n_files} feature files written to {}", out.display());
    Ok(())
}

fn dialogue_command(command: DialogueCommand) -> Result<()> {
    let DialogueCommand::Run {
        manifest,
        diarizer,
        labels,
        asr,
        transcripts,
        variants,
        out,
        jobs,
    } = command;
    let registry = Registry::builtin();
    registry
        .resolve(&diarizer, lpa_core::registry::EntryKind::DiarizationAdapter)
        .map_err(|e| anyhow!(e.to_string()))?;
    registry
        .resolve(&asr, lpa_core::registry::EntryKind::TranscriptionAdapter)
        .map_err(|e| anyhow!(e.to_string()))?;

    let manifest_dir = manifest.parent().map(PathBuf::from).unwrap_or_default();
    let m = load_manifest(&manifest).map_err(|e| anyhow!(e.to_string()))?;
    let diarizer = lpa_core::dialogue::ReplayDiarizer::from_labels_file(&labels)
        .map_err(|e| anyhow!(e.to_string()))?;
    let asr = lpa_core::dialogue::ReplayAsr::from_file(&transcripts)
        .map_err(|e| anyhow!(e.to_string()))?;
    let mut variant_list = Vec::new();
    for v in variants.split(',') {
        variant_list.push(match v.trim() {
            "full" => lpa_core::dialogue::Variant::Full,
            "student_only" => lpa_core::dialogue::Variant::StudentOnly,
            other => bail!("unknown variant {other:?}"),
        });
    }
    let config = lpa_core::dialogue::DialoguePipelineConfig {
        variants: variant_list,
        jobs,
        ..Default::default()
    };
    let report =
        lpa_core::dialogue::run_dialogue_pipeline(&m, &manifest_dir, &diarizer, &asr, &config, &out)
            .map_err(|e| anyhow!(e.to_string()))?;
    std::fs::write(
        out.join("audit.json"),
        serde_json::to_vec_pretty(&report)?,
    )?;
    let diagnostics: usize = report.recordings.iter().map(|r| r.diagnostics.len()).sum();
    println!(
        "{} recordings processed, {diagnostics} diagnostics; audit at {}",
        report.recordings.len(),
        out.join("audit.json").display()
    );
    Ok(())
}

fn splits_command(command: SplitsCommand) -> Result<()> {
    match command {
        SplitsCommand::Kfold {
            manifest,
            k,
            seed,
            out,
            with_holdout,
        } => {
            let m = load_manifest(&manifest).map_err(|e| anyhow!(e.to_string()))?;
            let test = if with_holdout {
                let speakers: Vec<&_> = m.speakers.iter().collect();
                fixed_test_holdout(&speakers, &m.scheme.labels, seed)
                    .map_err(|e| anyhow!(e.to_string()))?
            } else {
                BTreeSet::new()
            };
            let pool: Vec<&_> = m.speakers.iter().filter(|s| !test.contains(&s.id)).collect();
            let folds = stratified_kfold(&pool, k, seed).map_err(|e| anyhow!(e.to_string()))?;
            let split = SplitAssignment {
                train: folds.folds[0].train.clone(),
                val: folds.folds[0].val.clone(),
                test,
                seed,
                policy: format!("stratified {k}-fold (fold 0 shown), holdout={with_holdout}"),
            };
            save_split(&split, &out).map_err(|e| anyhow!(e.to_string()))?;
            println!(
                "{} folds; fold 0: {} train / {} val / {} test -> {}",
                folds.folds.len(),
                split.train.len(),
                split.val.len(),
                split.test.len(),
                out.display()
            );
            Ok(())
        }
        SplitsCommand::Holdout { manifest, seed, out } => {
            let m = load_manifest(&manifest).map_err(|e| anyhow!(e.to_string()))?;
            let speakers: Vec<&_> = m.speakers.iter().collect();
            let test = fixed_test_holdout(&speakers, &m.scheme.labels, seed)
                .map_err(|e| anyhow!(e.to_string()))?;
            let train: BTreeSet<String> = m
                .speakers
                .iter()
                .filter(|s| !test.contains(&s.id))
                .map(|s| s.id.clone())
                .collect();
            let split = SplitAssignment {
                train,
                val: BTreeSet::new(),
                test,
                seed,
                policy: "fixed per-(gender, level) holdout".to_string(),
            };
            save_split(&split, &out).map_err(|e| anyhow!(e.to_string()))?;
            println!("{} test speakers -> {}", split.test.len(), out.display());
            Ok(())
        }
        SplitsCommand::Subset {
            manifest,
            sizes,
            seed,
            out,
        } => {
            let parts: Vec<usize> = sizes
                .split(',')
                .map(|s| s.trim().parse().context("sizes must be three integers"))
                .collect::<Result<_>>()?;
            if parts.len() != 3 {
                bail!("sizes must be train,val,test");
            }
            let m = load_manifest(&manifest).map_err(|e| anyhow!(e.to_string()))?;
            let essays: Vec<&_> = m.essays().collect();
            let split = stratified_subset(&essays, (parts[0], parts[1], parts[2]), seed)
                .map_err(|e| anyhow!(e.to_string()))?;
            save_split(&split, &out).map_err(|e| anyhow!(e.to_string()))?;
            println!(
                "{} / {} / {} essays -> {}",
                split.train.len(),
                split.val.len(),
                split.test.len(),
                out.display()
            );
            Ok(())
        }
        SplitsCommand::DurationMatch {
            manifest,
            per_level,
            reference_level,
            fraction,
            seed,
            out,
        } => {
            let m = load_manifest(&manifest).map_err(|e| anyhow!(e.to_string()))?;
            let outcome = duration_matched_partition(
                &m,
                per_level,
                &reference_level.as_str().into(),
                fraction,
                seed,
            )
            .map_err(|e| anyhow!(e.to_string()))?;
            for d in &outcome.diagnostics {
                eprintln!("warning: {d}");
            }
            save_split(&outcome.split, &out).map_err(|e| anyhow!(e.to_string()))?;
            for info in &outcome.per_level {
                println!(
                    "{}/{}: target {:.1}s achieved {:.1}s (error {:.1}s)",
                    info.set, info.level, info.target_s, info.achieved_s, info.abs_error_s
                );
            }
            Ok(())
        }
        SplitsCommand::Audit {
            manifest,
            split,
            granularity,
        } => {
            let m = load_manifest(&manifest).map_err(|e| anyhow!(e.to_string()))?;
            let s = load_split(&split).map_err(|e| anyhow!(e.to_string()))?;
            let g = match granularity.as_str() {
                "speaker" => Granularity::Speaker,
                "item" => Granularity::Item,
                other => bail!("unknown granularity {other:?}"),
            };
            let report = audit_leakage(&s, &m, g);
            if report.is_clean() {
                println!("clean: no unit appears in more than one partition");
                Ok(())
            } else {
                for v in &report.violations {
                    eprintln!("leak: {} in {:?}", v.unit_id, v.partitions);
                }
                bail!("{} leakage violation(s)", report.violations.len());
            }
        }
    }
}
