//! Deterministic experiment reports: a markdown document plus a JSON
//! mirror with stable key order, so identical results are byte-identical.

use serde::{Deserialize, Serialize};

use super::metrics::Metrics;
use super::sweep::SweepResult;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub lengths: Vec<usize>,
    pub rows: Vec<(String, Vec<f64>)>,
}

impl From<&SweepResult> for SweepTable {
    fn from(r: &SweepResult) -> Self {
        SweepTable {
            lengths: r.lengths.clone(),
            rows: r.rows.iter().map(|(k, v)| (k.clone(), v.clone())).collect(),
        }
    }
}

/// Everything a report can carry; sections render only when present.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportInputs {
    pub title: String,
    pub config_hash: String,
    pub seed: u64,
    pub split_hash: String,
    /// Resolutions of underdetermined protocol choices, echoed so every
    /// report names the interpretation it was produced under.
    pub interpretation_flags: Vec<String>,
    /// model -> (single-task accuracy, optional multi-task accuracy).
    pub single_vs_multi: Option<Vec<(String, f64, Option<f64>)>>,
    /// Text-classifier table: model -> metrics.
    pub classifier_metrics: Option<Vec<(String, Metrics)>>,
    /// Audio/text variant table (full-audio vs student-only rows).
    pub variant_metrics: Option<Vec<(String, Metrics)>>,
    pub sweep: Option<SweepTable>,
    /// (fold index, best val loss, val accuracy).
    pub fold_summaries: Option<Vec<(usize, f64, f64)>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReportDocument {
    pub markdown: String,
    pub json: serde_json::Value,
}

fn pct(v: f64) -> String {
    format!("{:.1}%", v * 100.0)
}

/// Renders the report. Output depends only on the inputs.
pub fn run_report(inputs: &ReportInputs) -> ReportDocument {
    let mut md = String::new();
    md.push_str(&format!("# {}\n\n", inputs.title));
    md.push_str(&format!(
        "- config: `{}`\n- split: `{}`\n- seed: {}\n",
        inputs.config_hash, inputs.split_hash, inputs.seed
    ));
    if !inputs.interpretation_flags.is_empty() {
        md.push_str("- interpretations:\n");
        for flag in &inputs.interpretation_flags {
            md.push_str(&format!("  - {flag}\n"));
        }
    }
    md.push('\n');

    if let Some(rows) = &inputs.single_vs_multi {
        md.push_str("## Level accuracy, single-task vs multi-task\n\n");
        md.push_str("| Model | Level ACC single-task | Level ACC multi-task |\n");
        md.push_str("|---|---|---|\n");
        for (model, single, multi) in rows {
            let multi = multi.map_or("-".to_string(), pct);
            md.push_str(&format!("| {model} | {} | {multi} |\n", pct(*single)));
        }
        md.push('\n');
    }

    if let Some(rows) = &inputs.classifier_metrics {
        md.push_str("## Classifier performance\n\n");
        md.push_str("| Model | Accuracy | Precision | F1 |\n|---|---|---|---|\n");
        for (model, m) in rows {
            md.push_str(&format!(
                "| {model} | {} | {:.2} | {:.2} |\n",
                pct(m.accuracy),
                m.macro_precision,
                m.macro_f1
            ));
        }
        md.push('\n');
    }

    if let Some(rows) = &inputs.variant_metrics {
        md.push_str("## Audio / text variants\n\n");
        md.push_str("| Model | Accuracy | Macro precision | Macro recall | Macro F1 |\n");
        md.push_str("|---|---|---|---|---|\n");
        for (model, m) in rows {
            md.push_str(&format!(
                "| {model} | {} | {:.2} | {:.2} | {:.2} |\n",
                pct(m.accuracy),
                m.macro_precision,
                m.macro_recall,
                m.macro_f1
            ));
        }
        md.push('\n');
    }

    if let Some(sweep) = &inputs.sweep {
        md.push_str("## Accuracy at various token lengths\n\n");
        md.push_str("| Model |");
        for l in &sweep.lengths {
            md.push_str(&format!(" {l} |"));
        }
        md.push_str("\n|---|");
        for _ in &sweep.lengths {
            md.push_str("---|");
        }
        md.push('\n');
        for (family, accs) in &sweep.rows {
            md.push_str(&format!("| {family} |"));
            for a in accs {
                md.push_str(&format!(" {:.1} |", a * 100.0));
            }
            md.push('\n');
        }
        md.push('\n');
    }

    if let Some(folds) = &inputs.fold_summaries {
        md.push_str("## Cross-validation folds\n\n");
        md.push_str("| Fold | Best val loss | Val accuracy |\n|---|---|---|\n");
        for (fold, loss, acc) in folds {
            md.push_str(&format!("| {fold} | {loss:.6} | {} |\n", pct(*acc)));
        }
        md.push('\n');
    }

    let json = serde_json::to_value(inputs).expect("report inputs serialize");
    ReportDocument { markdown: md, json }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_inputs() -> ReportInputs {
        ReportInputs {
            title: "structured-speech run".to_string(),
            config_hash: "abc123".to_string(),
            seed: 7,
            split_hash: "def456".to_string(),
            interpretation_flags: vec!["z-score scope: per_utterance".to_string()],
            single_vs_multi: Some(vec![
                ("cnn2d".to_string(), 0.208, Some(0.292)),
                ("resnet".to_string(), 0.359, Some(0.438)),
            ]),
            classifier_metrics: None,
            variant_metrics: None,
            sweep: Some(SweepTable {
                lengths: vec![10, 20],
                rows: vec![("svm".to_string(), vec![0.685, 0.715])],
            }),
            fold_summaries: Some(vec![(0, 0.91, 0.42)]),
        }
    }

    #[test]
    fn identical_inputs_render_byte_identical_reports() {
        let a = run_report(&sample_inputs());
        let b = run_report(&sample_inputs());
        assert_eq!(a.markdown, b.markdown);
        assert_eq!(
            serde_json::to_string(&a.json).unwrap(),
            serde_json::to_string(&b.json).unwrap()
        );
    }

    #[test]
    fn two_column_table_shape() {
        let doc = run_report(&sample_inputs());
        assert!(doc.markdown.contains("| Model | Level ACC single-task | Level ACC multi-task |"));
        assert!(doc.markdown.contains("| cnn2d | 20.8% | 29.2% |"));
        assert!(doc.markdown.contains("| svm | 68.5 | 71.5 |"));
    }

    #[test]
    fn variant_table_shape() {
        let metrics = Metrics {
            accuracy: 0.62,
            macro_precision: 0.61,
            macro_recall: 0.63,
            macro_f1: 0.61,
            confusion: vec![vec![1]],
        };
        let inputs = ReportInputs {
            title: "dialogue run".to_string(),
            variant_metrics: Some(vec![
                ("speech-encoder FA 60-sec".to_string(), metrics.clone()),
                ("speech-encoder SA 60-sec".to_string(), metrics),
            ]),
            ..Default::default()
        };
        let doc = run_report(&inputs);
        assert!(doc.markdown.contains("| Model | Accuracy | Macro precision | Macro recall | Macro F1 |"));
        assert!(doc.markdown.contains("| speech-encoder FA 60-sec | 62.0% | 0.61 | 0.63 | 0.61 |"));
    }
}
