//! Dataset evaluation (teacher-forced loss plus decoded error rates) and the
//! metrics CSV log shared by training and the `eval` subcommand.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ocd_core::loss::mle_loss;
use ocd_core::metrics::{prefix_mismatch, CorpusMetrics};

use crate::decode::beam_search;
use crate::model::ToyModel;
use crate::tasks::{DatasetRecord, TaskError, VocabSpec};

/// Decode-length cap used everywhere a target is known.
pub fn decode_cap(target_len: usize) -> usize {
    2 * target_len + 10
}

/// Corpus metrics for one (model, dataset, beam width) combination.
#[derive(Debug, Clone)]
pub struct EvalMetrics {
    pub beam: usize,
    /// Mean teacher-forced cross-entropy per supervised token.
    pub loss: f64,
    pub cer: f64,
    pub wer: f64,
    /// Mean positionwise disagreement between the decode and the target.
    pub prefix_mismatch: f64,
    /// Mean decoded-sequence log-probability.
    pub mean_logprob: f64,
    pub n_examples: usize,
    pub empty_reference_seen: bool,
}

/// Score `model` on `records`, decoding with the given beam width.
pub fn evaluate(
    model: &ToyModel,
    records: &[DatasetRecord],
    vocab: &VocabSpec,
    beam: usize,
) -> Result<EvalMetrics, TaskError> {
    assert!(!records.is_empty(), "cannot evaluate on an empty dataset");
    let space = vocab.space_id();
    let mut corpus = CorpusMetrics::new();
    let mut loss_sum = 0.0;
    let mut loss_tokens = 0usize;
    let mut mismatch_sum = 0.0;
    let mut logprob_sum = 0.0;
    for record in records {
        let x = vocab.encode(&record.x)?;
        let y = vocab.encode(&record.y)?;
        let pass = model
            .forward(&x, y.tokens())
            .expect("dataset inputs are non-empty");
        let report = mle_loss(&y, &pass.logprobs(), 0.0).expect("forward pass matches target");
        loss_sum += report.total * report.token_count as f64;
        loss_tokens += report.token_count;
        let hyp = beam_search(model, &x, beam, decode_cap(y.len()));
        corpus.add(&hyp.tokens, &y, space);
        mismatch_sum += prefix_mismatch(&hyp.tokens, &y);
        logprob_sum += hyp.logprob;
    }
    let n = records.len();
    Ok(EvalMetrics {
        beam,
        loss: loss_sum / loss_tokens as f64,
        cer: corpus.cer(),
        wer: corpus.wer(),
        prefix_mismatch: mismatch_sum / n as f64,
        mean_logprob: logprob_sum / n as f64,
        n_examples: n,
        empty_reference_seen: corpus.empty_reference_seen,
    })
}

/// One [`EvalMetrics`] per requested beam width, in order.
pub fn beam_sweep(
    model: &ToyModel,
    records: &[DatasetRecord],
    vocab: &VocabSpec,
    beams: &[usize],
) -> Result<Vec<EvalMetrics>, TaskError> {
    beams
        .iter()
        .map(|&b| evaluate(model, records, vocab, b))
        .collect()
}

/// Append-style CSV log: `#`-prefixed comment lines, one fixed header, then
/// one row per (step, split, beam).
#[derive(Debug, Default)]
pub struct MetricsLog {
    buf: String,
    header_written: bool,
}

pub const METRICS_HEADER: &str = "step,split,loss,cer,wer,prefix_mismatch,p_sample,beam";

impl MetricsLog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Comment lines must precede the header.
    pub fn comment(&mut self, text: &str) {
        assert!(!self.header_written, "comments go before the header");
        for line in text.lines() {
            let _ = writeln!(self.buf, "# {line}");
        }
    }

    pub fn row(&mut self, step: u64, split: &str, metrics: &EvalMetrics, p_sample: f64) {
        if !self.header_written {
            self.buf.push_str(METRICS_HEADER);
            self.buf.push('\n');
            self.header_written = true;
        }
        let _ = writeln!(
            self.buf,
            "{step},{split},{:.6},{:.6},{:.6},{:.6},{:.4},{}",
            metrics.loss, metrics.cer, metrics.wer, metrics.prefix_mismatch, p_sample, metrics.beam
        );
    }

    pub fn contents(&self) -> &str {
        &self.buf
    }

    pub fn save(&self, path: &Path) -> Result<(), std::io::Error> {
        fs::write(path, &self.buf)
    }
}

/// Data rows of a metrics CSV (comments and header stripped), for comparing
/// runs independently of their config banners.
pub fn csv_data_rows(text: &str) -> Vec<&str> {
    text.lines()
        .filter(|l| !l.starts_with('#') && *l != METRICS_HEADER && !l.is_empty())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    fn setup() -> (ToyModel, VocabSpec, Vec<DatasetRecord>) {
        let vocab = VocabSpec::alphabetic(4, false);
        let model = ToyModel::new(ModelConfig {
            vocab_size: vocab.size(),
            embed_dim: 6,
            hidden_dim: 8,
            use_attention: false,
            seed: 7,
        })
        .unwrap();
        let records = crate::tasks::generate_dataset(
            crate::tasks::Task::Copy,
            8,
            (2, 5),
            &vocab,
            11,
        )
        .unwrap();
        (model, vocab, records)
    }

    #[test]
    fn evaluate_reports_finite_metrics() {
        let (model, vocab, records) = setup();
        let m = evaluate(&model, &records, &vocab, 2).unwrap();
        assert_eq!(m.n_examples, records.len());
        assert!(m.loss.is_finite() && m.loss > 0.0);
        assert!(m.cer >= 0.0 && m.prefix_mismatch >= 0.0 && m.prefix_mismatch <= 1.0);
        assert!(m.mean_logprob <= 0.0);
    }

    #[test]
    fn beam_sweep_gives_one_row_per_width() {
        let (model, vocab, records) = setup();
        let rows = beam_sweep(&model, &records, &vocab, &[1, 2, 4]).unwrap();
        assert_eq!(rows.iter().map(|r| r.beam).collect::<Vec<_>>(), [1, 2, 4]);
        // Losses are decode-independent.
        assert_eq!(rows[0].loss, rows[2].loss);
    }

    #[test]
    fn log_layout_and_row_extraction() {
        let (model, vocab, records) = setup();
        let m = evaluate(&model, &records, &vocab, 1).unwrap();
        let mut log = MetricsLog::new();
        log.comment("task=copy\nseed=7");
        log.row(0, "val", &m, 0.25);
        log.row(10, "train", &m, 0.25);
        let lines: Vec<&str> = log.contents().lines().collect();
        assert_eq!(&lines[..3], &["# task=copy", "# seed=7", METRICS_HEADER]);
        assert!(lines[3].starts_with("0,val,"));
        assert_eq!(csv_data_rows(log.contents()).len(), 2);
    }
}
