//! `neuraltopics`: prepare corpora, train neural topic models, and evaluate them.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "neuraltopics", version, about = "Neural variational topic models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build a vocabulary and bag-of-words file from raw text, one document per line.
    Prepare(PrepareArgs),
    /// Write a corpus drawn from planted topics.
    Synth(SynthArgs),
    /// Train a model and write a checkpoint, metrics log and resolved config.
    Train(TrainArgs),
    /// Report perplexity and, optionally, NPMI coherence.
    Eval(EvalArgs),
    /// Print the top words of every topic.
    Topics(TopicsArgs),
    /// Export per-document topic proportions.
    Infer(InferArgs),
}

#[derive(Args, Debug)]
pub struct PrepareArgs {
    /// Raw text, one document per line.
    #[arg(long)]
    pub input: PathBuf,
    /// Existing vocabulary to index against; built from the input when absent.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Where to write a newly built vocabulary.
    #[arg(long)]
    pub vocab_out: Option<PathBuf>,
    #[arg(long, default_value_t = 2000)]
    pub vocab_size: usize,
    #[arg(long)]
    pub stopwords: Option<PathBuf>,
    /// Bag-of-words output file.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Output directory; receives train.bow, test.bow and vocab.txt.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub topics: usize,
    #[arg(long, default_value_t = 20)]
    pub block: usize,
    #[arg(long, default_value_t = 100)]
    pub vocab_size: usize,
    #[arg(long, default_value_t = 500)]
    pub documents: usize,
    #[arg(long, default_value_t = 100)]
    pub test_documents: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Run file of `key = value` lines; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// gsm, gsb, rsb or rsb-tf.
    #[arg(long)]
    pub model: Option<String>,
    /// mixture (topic model) or softmax (document model).
    #[arg(long)]
    pub decoder: Option<String>,
    /// Number of topics for finite constructions.
    #[arg(long)]
    pub topics: Option<usize>,
    /// Initial active topics for rsb-tf.
    #[arg(long)]
    pub init_topics: Option<usize>,
    /// Likelihood-increase threshold for adding a topic.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Diversity weight.
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub epochs: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Alternate generative and variational updates: batch (default when given bare), epoch or off.
    #[arg(long, num_args = 0..=1, default_missing_value = "batch")]
    pub alternating: Option<String>,
    #[arg(long)]
    pub dropout_keep: Option<f64>,
    /// Hidden units of the inference MLP.
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Width of the Gaussian draw, topic and word vectors.
    #[arg(long)]
    pub latent: Option<usize>,
    /// Global gradient-norm ceiling; 0 disables clipping.
    #[arg(long)]
    pub clip: Option<f64>,
    #[arg(long)]
    pub train: Option<PathBuf>,
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Run directory for model.ckpt, metrics.csv and config.txt.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Continue from an existing checkpoint in the run directory.
    #[arg(long)]
    pub resume: bool,
}

#[derive(Args, Debug)]
pub struct ModelSource {
    /// Run file, typically the config.txt written by `train`.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[command(flatten)]
    pub source: ModelSource,
    /// Corpus to score; defaults to the run's test, then train corpus.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Also report NPMI of each topic's top words.
    #[arg(long)]
    pub coherence: bool,
    /// Reference corpus for NPMI; defaults to the training corpus.
    #[arg(long = "ref")]
    pub reference: Option<PathBuf>,
    /// Score with one Gaussian draw per document instead of the posterior mean.
    #[arg(long)]
    pub sample: bool,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct TopicsArgs {
    #[command(flatten)]
    pub source: ModelSource,
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long)]
    pub top: Option<usize>,
}

#[derive(Args, Debug)]
pub struct InferArgs {
    #[command(flatten)]
    pub source: ModelSource,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Output file with one line of proportions per document.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub sample: bool,
    #[arg(long)]
    pub seed: Option<u64>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Prepare(a) => commands::prepare(a),
        Command::Synth(a) => commands::synth(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Topics(a) => commands::topics(a),
        Command::Infer(a) => commands::infer(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
