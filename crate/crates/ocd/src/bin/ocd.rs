//! Command-line front end: target inspection, data generation, training,
//! beam-sweep evaluation and oracle verification.
//!
//! Exit codes: 0 success, 1 verification failure, 2 usage/config error.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use ocd_core::oracle::{generate_pairs, oracle_check};
use ocd_core::qvalues::{q_values, QTable};
use ocd_core::seq::{Extension, Sequence, TokenId};

use ocd::checkpoint::{load_checkpoint, save_checkpoint};
use ocd::eval::{beam_sweep, MetricsLog};
use ocd::model::ModelConfig;
use ocd::rollout::Schedule;
use ocd::tasks::{generate_dataset, load_dataset, save_dataset, Task, VocabSpec};
use ocd::train::{train, TrainConfig, TrainMethod};

#[derive(Parser)]
#[command(name = "ocd", about = "Edit-distance sequence training toolkit")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Print per-prefix optimal next tokens and Q-values for a hypothesis
    /// against a reference.
    Qvalues(QvaluesArgs),
    /// Generate a synthetic transduction dataset (and optionally its
    /// vocabulary file).
    Gen(GenArgs),
    /// Train a model; writes metrics CSV plus best/last checkpoints.
    Train(TrainArgs),
    /// Evaluate a checkpoint over a beam-width sweep.
    Eval(EvalArgs),
    /// Verify the Q-value kernel against brute-force oracles on random pairs.
    OracleCheck(OracleArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Table,
    Json,
}

#[derive(Args)]
struct QvaluesArgs {
    /// Hypothesis string (may be empty).
    #[arg(long)]
    hyp: String,
    /// Reference string.
    #[arg(long = "ref")]
    reference: String,
    /// Vocabulary JSON; without it characters map directly to token ids.
    #[arg(long)]
    vocab: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "table")]
    format: Format,
}

#[derive(Args)]
struct GenArgs {
    /// copy | reverse | rot_<k> | dedup | word_reverse
    #[arg(long)]
    task: String,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 3)]
    min_len: usize,
    #[arg(long, default_value_t = 12)]
    max_len: usize,
    /// Content characters (a, b, c, ...), excluding the space.
    #[arg(long, default_value_t = 8)]
    vocab_size: usize,
    /// Add a space character to the vocabulary (implied by word_reverse).
    #[arg(long)]
    with_space: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output JSONL path.
    #[arg(long)]
    out: PathBuf,
    /// Also write the vocabulary JSON here.
    #[arg(long)]
    vocab_out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    /// JSON TrainConfig; flags below override individual fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    train_data: PathBuf,
    #[arg(long)]
    val_data: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    /// Directory for metrics.csv, best.ckpt.json and last.ckpt.json.
    #[arg(long)]
    out_dir: PathBuf,
    /// mle | ss | ocd | oct_shortest | oct_words
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    label_smoothing: Option<f64>,
    /// Scheduled-sampling ramp as start:end:steps, e.g. 0.0:0.5:10000.
    #[arg(long)]
    schedule: Option<String>,
    #[arg(long)]
    eval_every: Option<u64>,
    #[arg(long)]
    train_eval_n: Option<usize>,
    /// Beam width used at evaluation points.
    #[arg(long)]
    beam: Option<usize>,
    #[arg(long)]
    plateau_patience: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    embed_dim: Option<usize>,
    #[arg(long)]
    hidden_dim: Option<usize>,
    #[arg(long)]
    attention: Option<bool>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    /// Comma-separated beam widths, one output row each.
    #[arg(long, default_value = "16")]
    beam_list: String,
    /// CSV output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long, default_value_t = 500)]
    trials: usize,
    #[arg(long, default_value_t = 4)]
    vocab: usize,
    #[arg(long, default_value_t = 6)]
    max_len: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Emit the report as JSON instead of text.
    #[arg(long)]
    json: bool,
}

/// Error that should exit with the usage/config code.
#[derive(Debug)]
struct UsageError(anyhow::Error);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.0.fmt(f)
    }
}

impl std::error::Error for UsageError {}

fn usage<T>(err: impl Into<anyhow::Error>) -> Result<T> {
    Err(UsageError(err.into()).into())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Qvalues(args) => cmd_qvalues(args),
        Cmd::Gen(args) => cmd_gen(args),
        Cmd::Train(args) => cmd_train(args),
        Cmd::Eval(args) => cmd_eval(args),
        Cmd::OracleCheck(args) => cmd_oracle_check(args),
    };
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            if err.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

/// Chars become token ids directly when no vocabulary file is given.
enum Charset {
    Unicode,
    Vocab(VocabSpec),
}

impl Charset {
    fn encode(&self, s: &str) -> Result<Sequence> {
        match self {
            Charset::Unicode => Ok(Sequence::new(s.chars().map(|c| c as TokenId).collect())),
            Charset::Vocab(v) => match v.encode(s) {
                Ok(seq) => Ok(seq),
                Err(e) => usage(e),
            },
        }
    }

    fn token_char(&self, t: TokenId) -> char {
        match self {
            Charset::Unicode => char::from_u32(t).unwrap_or('?'),
            Charset::Vocab(v) => v.tokens[t as usize],
        }
    }

    fn ext_string(&self, ext: Extension) -> String {
        match ext {
            Extension::Token(t) => self.token_char(t).to_string(),
            Extension::Eos => "</s>".to_string(),
        }
    }
}

fn render_table(table: &QTable, hyp: &str, charset: &Charset) {
    let prefixes: Vec<String> = {
        let chars: Vec<char> = hyp.chars().collect();
        (0..=chars.len())
            .map(|i| chars[..i].iter().collect())
            .collect()
    };
    println!("{:<12} {:>3}  {:>2}  optimal", "prefix", "m", "Q");
    for (prefix, row) in prefixes.iter().zip(&table.rows) {
        let optimal: Vec<String> = row.optimal.iter().map(|&e| charset.ext_string(e)).collect();
        println!(
            "{:<12} {:>3}  {:>2}  {{{}}}",
            if prefix.is_empty() { "ε" } else { prefix },
            row.m,
            -(row.m as i64),
            optimal.join(", ")
        );
    }
}

fn cmd_qvalues(args: QvaluesArgs) -> Result<ExitCode> {
    let charset = match &args.vocab {
        Some(path) => Charset::Vocab(VocabSpec::load(path).or_else(usage)?),
        None => Charset::Unicode,
    };
    let hyp = charset.encode(&args.hyp)?;
    let reference = charset.encode(&args.reference)?;
    let table = q_values(&hyp, &reference);
    match args.format {
        Format::Table => render_table(&table, &args.hyp, &charset),
        Format::Json => {
            let chars: Vec<char> = args.hyp.chars().collect();
            let rows: Vec<serde_json::Value> = table
                .rows
                .iter()
                .enumerate()
                .map(|(i, row)| {
                    serde_json::json!({
                        "prefix": chars[..i].iter().collect::<String>(),
                        "m": row.m,
                        "q": -(row.m as i64),
                        "optimal": row.optimal.iter()
                            .map(|&e| charset.ext_string(e))
                            .collect::<Vec<_>>(),
                    })
                })
                .collect();
            println!("{}", serde_json::json!({ "rows": rows }));
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_gen(args: GenArgs) -> Result<ExitCode> {
    let task = Task::parse(&args.task).or_else(usage)?;
    let with_space = args.with_space || matches!(task, Task::WordReverse);
    let vocab = VocabSpec::alphabetic(args.vocab_size, with_space);
    let records = generate_dataset(task, args.n, (args.min_len, args.max_len), &vocab, args.seed)
        .or_else(usage)?;
    save_dataset(&records, &args.out)?;
    if let Some(path) = &args.vocab_out {
        vocab.save(path)?;
    }
    println!("wrote {} records to {}", records.len(), args.out.display());
    Ok(ExitCode::SUCCESS)
}

fn parse_schedule(s: &str) -> Result<Schedule> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        bail!("schedule must be start:end:steps, got {s:?}");
    }
    Ok(Schedule {
        p_start: parts[0].parse().context("schedule start")?,
        p_end: parts[1].parse().context("schedule end")?,
        ramp_steps: parts[2].parse().context("schedule steps")?,
    })
}

fn build_train_config(args: &TrainArgs, vocab: &VocabSpec) -> Result<TrainConfig> {
    let mut config: TrainConfig = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => TrainConfig {
            method: TrainMethod::Mle,
            steps: 1000,
            batch_size: 16,
            lr: 1e-3,
            tau: 0.0,
            label_smoothing: 0.0,
            schedule: Schedule {
                p_start: 0.0,
                p_end: 0.0,
                ramp_steps: 0,
            },
            eval_every: 100,
            train_eval_n: 200,
            eval_beam: 16,
            plateau_patience: 0,
            model: ModelConfig {
                vocab_size: vocab.size(),
                embed_dim: 32,
                hidden_dim: 64,
                use_attention: false,
                seed: 0,
            },
            seed: 0,
        },
    };
    if let Some(m) = &args.method {
        config.method = TrainMethod::parse(m)?;
    }
    if let Some(v) = args.steps {
        config.steps = v;
    }
    if let Some(v) = args.batch_size {
        config.batch_size = v;
    }
    if let Some(v) = args.lr {
        config.lr = v;
    }
    if let Some(v) = args.tau {
        config.tau = v;
    }
    if let Some(v) = args.label_smoothing {
        config.label_smoothing = v;
    }
    if let Some(s) = &args.schedule {
        config.schedule = parse_schedule(s)?;
    }
    if let Some(v) = args.eval_every {
        config.eval_every = v;
    }
    if let Some(v) = args.train_eval_n {
        config.train_eval_n = v;
    }
    if let Some(v) = args.beam {
        config.eval_beam = v;
    }
    if let Some(v) = args.plateau_patience {
        config.plateau_patience = v;
    }
    if let Some(v) = args.seed {
        config.seed = v;
        config.model.seed = v;
    }
    if let Some(v) = args.embed_dim {
        config.model.embed_dim = v;
    }
    if let Some(v) = args.hidden_dim {
        config.model.hidden_dim = v;
    }
    if let Some(v) = args.attention {
        config.model.use_attention = v;
    }
    config.model.vocab_size = vocab.size();
    Ok(config)
}

fn cmd_train(args: TrainArgs) -> Result<ExitCode> {
    let vocab = VocabSpec::load(&args.vocab).or_else(usage)?;
    let config = build_train_config(&args, &vocab).or_else(usage)?;
    if let Err(e) = config.validate() {
        return usage(e);
    }
    let train_data = load_dataset(&args.train_data).or_else(usage)?;
    let val_data = load_dataset(&args.val_data).or_else(usage)?;

    std::fs::create_dir_all(&args.out_dir)?;
    let config_json = serde_json::to_value(&config)?;
    let mut log = MetricsLog::new();
    log.comment(&format!("config {}", serde_json::to_string(&config_json)?));

    let outcome = train(&config, &vocab, &train_data, &val_data, &mut log)?;

    log.save(&args.out_dir.join("metrics.csv"))?;
    save_checkpoint(
        &outcome.best_model,
        outcome.best_step,
        Some(config_json.clone()),
        &args.out_dir.join("best.ckpt.json"),
    )?;
    save_checkpoint(
        &outcome.model,
        config.steps,
        Some(config_json),
        &args.out_dir.join("last.ckpt.json"),
    )?;
    let (_, last) = outcome
        .val_history
        .last()
        .expect("at least one evaluation point");
    println!(
        "done: {} steps, best val loss {:.6} at step {}, final val cer {:.4} wer {:.4}",
        config.steps, outcome.best_val_loss, outcome.best_step, last.cer, last.wer
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_eval(args: EvalArgs) -> Result<ExitCode> {
    let (model, step) = match load_checkpoint(&args.ckpt) {
        Ok(v) => v,
        Err(e) => return usage(e),
    };
    let vocab = VocabSpec::load(&args.vocab).or_else(usage)?;
    if model.config.vocab_size != vocab.size() {
        return usage(anyhow::anyhow!(
            "checkpoint vocab_size {} does not match vocabulary size {}",
            model.config.vocab_size,
            vocab.size()
        ));
    }
    let records = load_dataset(&args.data).or_else(usage)?;
    let beams: Vec<usize> = args
        .beam_list
        .split(',')
        .map(|s| s.trim().parse::<usize>().context("beam widths"))
        .collect::<Result<_>>()
        .or_else(usage)?;
    if beams.is_empty() || beams.contains(&0) {
        return usage(anyhow::anyhow!("beam widths must be positive"));
    }

    let mut log = MetricsLog::new();
    log.comment(&format!(
        "eval ckpt={} data={} n={}",
        args.ckpt.display(),
        args.data.display(),
        records.len()
    ));
    for metrics in beam_sweep(&model, &records, &vocab, &beams)? {
        log.row(step, "eval", &metrics, 0.0);
    }
    match &args.out {
        Some(path) => log.save(path)?,
        None => print!("{}", log.contents()),
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_oracle_check(args: OracleArgs) -> Result<ExitCode> {
    if args.vocab < 1 {
        return usage(anyhow::anyhow!("vocab must be >= 1"));
    }
    let pairs = generate_pairs(args.trials, args.vocab, args.max_len, args.seed);
    let report = oracle_check(&pairs, args.vocab);
    if args.json {
        println!(
            "{}",
            serde_json::json!({
                "trials": report.trials,
                "comparisons": report.comparisons,
                "passed": report.passed(),
                "summary": report.summary(),
            })
        );
    } else {
        println!("{}", report.summary());
    }
    if report.passed() {
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(ExitCode::from(1))
    }
}
