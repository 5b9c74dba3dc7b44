use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use neuraltopics::constructions::ConstructionKind;
use neuraltopics::corpus::{self, Corpus, Document, Split, Vocabulary};
use neuraltopics::eval::{self, Noise};
use neuraltopics::model::{DecoderMode, ModelConfig, NeuralTopicModel};
use neuraltopics::synthetic::{self, PlantedConfig};
use neuraltopics::train::{self, Alternation, MetricsLog, TrainConfig, TrainState};
use neuraltopics::Error;

use crate::config::{pick, pick_opt, pick_path, pick_switch, RunFile, RunFileWriter};
use crate::error::CliError;
use crate::{EvalArgs, InferArgs, ModelSource, PrepareArgs, SynthArgs, TopicsArgs, TrainArgs};

pub const CHECKPOINT: &str = "model.ckpt";
pub const METRICS: &str = "metrics.csv";
pub const RUN_FILE: &str = "config.txt";

const DEFAULT_TOPICS: usize = 50;
const DEFAULT_INIT_TOPICS: usize = 10;
const DEFAULT_TOP: usize = 10;

type Res<T = ()> = Result<T, CliError>;

fn usage(m: impl Into<String>) -> CliError {
    CliError::Usage(m.into())
}

fn with_path(path: &Path, e: Error) -> CliError {
    match e {
        Error::Io { .. } => e.into(),
        other => CliError::from(other).map_message(|m| format!("{}: {m}", path.display())),
    }
}

fn load_vocab(path: &Path) -> Res<Vocabulary> {
    Vocabulary::load(path).map_err(|e| with_path(path, e))
}

/// Loads a corpus whose indices must fit `vocab_size`. Out-of-range indices
/// mean the data belongs to another vocabulary.
fn load_corpus(path: &Path, vocab_size: usize, split: Split) -> Res<Corpus> {
    corpus::load_bow_sized(path, vocab_size, split).map_err(|e| with_path(path, e))
}

fn require_documents(corpus: &Corpus, path: &Path) -> Res {
    if corpus.nonempty_indices().is_empty() {
        return Err(CliError::Input(format!("{}: no non-empty documents", path.display())));
    }
    Ok(())
}

fn create_dir(dir: &Path) -> Res {
    fs::create_dir_all(dir).map_err(|e| CliError::Input(format!("cannot create {}: {e}", dir.display())))
}

fn absolute(p: &Path) -> PathBuf {
    fs::canonicalize(p).unwrap_or_else(|_| p.to_path_buf())
}

fn parse<T: std::str::FromStr<Err = Error>>(raw: &str) -> Res<T> {
    raw.parse().map_err(|e: Error| usage(e.to_string()))
}

pub fn prepare(a: PrepareArgs) -> Res {
    let text = fs::File::open(&a.input).map_err(|e| CliError::Input(format!("{}: {e}", a.input.display())))?;
    let mut docs = Vec::new();
    for (i, line) in BufReader::new(text).lines().enumerate() {
        let line = line.map_err(|e| CliError::Input(format!("{}:{}: {e}", a.input.display(), i + 1)))?;
        docs.push(corpus::tokenize(&line));
    }
    let vocab = match &a.vocab {
        Some(p) => load_vocab(p)?,
        None => {
            let stop = match &a.stopwords {
                Some(p) => corpus::load_stopwords(p)?,
                None => Default::default(),
            };
            let v = corpus::build_vocabulary(&docs, a.vocab_size, &stop)?;
            let out = a
                .vocab_out
                .as_ref()
                .ok_or_else(|| usage("--vocab-out is required when building a vocabulary"))?;
            v.save(out)?;
            v
        }
    };
    let documents: Vec<Document> = docs.iter().map(|d| Document::from_tokens(d, &vocab)).collect();
    let empty = documents.iter().filter(|d| d.is_empty()).count();
    let corpus = Corpus::new(documents, vocab.len(), Split::Train)?;
    corpus.save_bow(&a.out)?;
    println!(
        "{} documents, {} tokens, {} empty after filtering, vocabulary {}",
        corpus.len(),
        corpus.total_tokens(),
        empty,
        vocab.len()
    );
    Ok(())
}

pub fn synth(a: SynthArgs) -> Res {
    let base = PlantedConfig {
        topics: a.topics,
        vocab_size: a.vocab_size,
        block: a.block,
        documents: a.documents,
        seed: a.seed,
        ..PlantedConfig::default()
    };
    let train = synthetic::generate(&base)?;
    let test = synthetic::generate(&PlantedConfig {
        documents: a.test_documents,
        seed: a.seed.wrapping_add(1),
        ..base
    })?;
    create_dir(&a.out)?;
    train.corpus.save_bow(a.out.join("train.bow"))?;
    test.corpus.save_bow(a.out.join("test.bow"))?;
    train.vocab.save(a.out.join("vocab.txt"))?;
    println!("wrote {} training and {} test documents to {}", a.documents, a.test_documents, a.out.display());
    Ok(())
}

struct TrainPlan {
    model: ModelConfig,
    train: TrainConfig,
    train_path: PathBuf,
    test_path: Option<PathBuf>,
    vocab_path: PathBuf,
    out: PathBuf,
}

fn plan_training(a: &TrainArgs, file: Option<&RunFile>) -> Res<TrainPlan> {
    let kind: ConstructionKind = parse(&pick(a.model.clone(), file, "model", "gsm".to_string())?)?;
    let decoder: DecoderMode = parse(&pick(a.decoder.clone(), file, "decoder", "mixture".to_string())?)?;
    let topics = if kind.is_unbounded() {
        if pick_opt(a.topics, file, "topics")?.is_some() {
            log::warn!("--topics is ignored for rsb-tf; use --init-topics");
        }
        pick(a.init_topics, file, "init-topics", DEFAULT_INIT_TOPICS)?
    } else {
        if pick_opt(a.init_topics, file, "init-topics")?.is_some() {
            log::warn!("--init-topics only applies to rsb-tf");
        }
        pick(a.topics, file, "topics", DEFAULT_TOPICS)?
    };
    let td = TrainConfig::default();
    let clip: f64 = pick(a.clip, file, "clip", td.clip_norm.unwrap_or(0.0))?;
    let train = TrainConfig {
        learning_rate: pick(a.lr, file, "lr", td.learning_rate)?,
        batch_size: pick(a.batch, file, "batch", td.batch_size)?,
        epochs: pick(a.epochs, file, "epochs", td.epochs)?,
        seed: pick(a.seed, file, "seed", td.seed)?,
        gamma: pick(a.gamma, file, "gamma", td.gamma)?,
        lambda: pick(a.lambda, file, "lambda", td.lambda)?,
        alternation: parse::<Alternation>(&pick(
            a.alternating.clone(),
            file,
            "alternating",
            td.alternation.as_str().to_string(),
        )?)?,
        clip_norm: (clip > 0.0).then_some(clip),
    };
    train.validate().map_err(|e| usage(e.to_string()))?;
    let required = |flag: &Option<PathBuf>, key: &str| {
        pick_path(flag.clone(), file, key).ok_or_else(|| usage(format!("--{key} is required")))
    };
    let train_path = required(&a.train, "train")?;
    let vocab_path = required(&a.vocab, "vocab")?;
    let out = required(&a.out, "out")?;
    let test_path = pick_path(a.test.clone(), file, "test");
    let md = ModelConfig::new(kind, 1, topics);
    let model = ModelConfig {
        decoder,
        latent: pick(a.latent, file, "latent", md.latent)?,
        mlp_hidden: pick(a.hidden, file, "hidden", md.mlp_hidden)?,
        dropout_keep: pick(a.dropout_keep, file, "dropout-keep", md.dropout_keep)?,
        ..md
    };
    Ok(TrainPlan {
        model,
        train,
        train_path,
        test_path,
        vocab_path,
        out,
    })
}

fn run_file(plan: &TrainPlan) -> RunFileWriter {
    let (m, t) = (&plan.model, &plan.train);
    let mut w = RunFileWriter::new();
    w.set("model", m.construction).set("decoder", m.decoder);
    if m.construction.is_unbounded() {
        w.set("init-topics", m.topics);
    } else {
        w.set("topics", m.topics);
    }
    w.set("latent", m.latent)
        .set("hidden", m.mlp_hidden)
        .set("dropout-keep", m.dropout_keep)
        .set("gamma", t.gamma)
        .set("lambda", t.lambda)
        .set("lr", t.learning_rate)
        .set("batch", t.batch_size)
        .set("epochs", t.epochs)
        .set("seed", t.seed)
        .set("alternating", t.alternation)
        .set("clip", t.clip_norm.unwrap_or(0.0))
        .set("train", absolute(&plan.train_path).display())
        .set("vocab", absolute(&plan.vocab_path).display());
    if let Some(test) = &plan.test_path {
        w.set("test", absolute(test).display());
    }
    w.set("checkpoint", CHECKPOINT);
    w
}

fn resume_state(plan: &TrainPlan, path: &Path) -> Res<(NeuralTopicModel, TrainState)> {
    let ck = train::load_checkpoint(path)?;
    let have = ck.model.config();
    let want = &plan.model;
    let same = have.construction == want.construction
        && have.decoder == want.decoder
        && have.vocab_size == want.vocab_size
        && have.latent == want.latent
        && have.mlp_hidden == want.mlp_hidden
        && (want.construction.is_unbounded() || have.topics == want.topics);
    if !same {
        return Err(CliError::Mismatch(format!(
            "{} was trained with a different model configuration",
            path.display()
        )));
    }
    Ok((ck.model, ck.state))
}

pub fn train(a: TrainArgs) -> Res {
    let file = a.config.as_deref().map(RunFile::load).transpose()?;
    let mut plan = plan_training(&a, file.as_ref())?;
    let vocab = load_vocab(&plan.vocab_path)?;
    plan.model.vocab_size = vocab.len();
    plan.model.validate().map_err(|e| usage(e.to_string()))?;
    let corpus = load_corpus(&plan.train_path, vocab.len(), Split::Train).map_err(|e| match e {
        CliError::Mismatch(m) => CliError::Input(m),
        other => other,
    })?;
    require_documents(&corpus, &plan.train_path)?;
    let test = match &plan.test_path {
        Some(p) => Some(load_corpus(p, vocab.len(), Split::Test)?),
        None => None,
    };

    create_dir(&plan.out)?;
    let ckpt = plan.out.join(CHECKPOINT);
    let metrics = plan.out.join(METRICS);
    let (mut model, mut state, mut log) = if a.resume && ckpt.exists() {
        let (model, state) = resume_state(&plan, &ckpt)?;
        log::info!("resuming {} at epoch {}", ckpt.display(), state.epoch);
        (model, state, MetricsLog::append(&metrics)?)
    } else {
        let model = NeuralTopicModel::new(plan.model.clone(), plan.train.seed)?;
        let state = TrainState::new(&model);
        (model, state, MetricsLog::create(&metrics)?)
    };
    fs::write(plan.out.join(RUN_FILE), run_file(&plan).to_string())
        .map_err(|e| CliError::Input(format!("{}: {e}", plan.out.join(RUN_FILE).display())))?;

    let mut last = None;
    let mut cfg = plan.train.clone();
    while state.epoch < plan.train.epochs {
        cfg.epochs = state.epoch + 1;
        let record = |_: &NeuralTopicModel, m: &train::EpochMetrics| log.record(m);
        let done = if plan.model.construction.is_unbounded() {
            train::train_unbounded(&mut model, &corpus, &cfg, &mut state, record)?
        } else {
            train::train(&mut model, &corpus, &cfg, &mut state, record)?
        };
        train::save_checkpoint(&model, &state, &ckpt)?;
        if let Some(m) = done.last() {
            log::info!(
                "epoch {} elbo {:.4} kl {:.4} perplexity {:.2} topics {}",
                m.epoch + 1,
                m.mean_elbo,
                m.mean_kl,
                m.perplexity,
                m.active_topics
            );
            last = Some(m.clone());
        }
    }
    if state.epoch == 0 || last.is_none() {
        train::save_checkpoint(&model, &state, &ckpt)?;
    }
    if let Some(m) = &last {
        println!("train perplexity\t{:.4}", m.perplexity);
    }
    println!("active topics\t{}", model.active_topics());
    if let Some(test) = &test {
        println!("test perplexity\t{:.4}", eval::perplexity(&model, test, Noise::Mean)?);
    }
    println!("checkpoint\t{}", ckpt.display());
    Ok(())
}

struct Loaded {
    model: NeuralTopicModel,
    file: Option<RunFile>,
}

fn load_model(src: &ModelSource) -> Res<Loaded> {
    let file = src.config.as_deref().map(RunFile::load).transpose()?;
    let path = pick_path(src.checkpoint.clone(), file.as_ref(), "checkpoint")
        .ok_or_else(|| usage("--checkpoint is required"))?;
    if !path.exists() {
        return Err(CliError::Input(format!("{}: checkpoint not found", path.display())));
    }
    let ck = train::load_checkpoint(&path).map_err(|e| with_path(&path, e))?;
    Ok(Loaded { model: ck.model, file })
}

fn model_vocab(model: &NeuralTopicModel, path: Option<PathBuf>) -> Res<Vocabulary> {
    let v = model.config().vocab_size;
    match path {
        Some(p) => {
            let vocab = load_vocab(&p)?;
            if vocab.len() != v {
                return Err(CliError::Mismatch(format!(
                    "{}: vocabulary has {} terms but the checkpoint expects {v}",
                    p.display(),
                    vocab.len()
                )));
            }
            Ok(vocab)
        }
        None => Ok(Vocabulary::anonymous(v)?),
    }
}

fn noise(sample: bool, file: Option<&RunFile>, seed: Option<u64>) -> Res<Noise> {
    Ok(if pick_switch(sample, file, "sample")? {
        Noise::Sampled(pick(seed, file, "seed", 0)?)
    } else {
        Noise::Mean
    })
}

pub fn eval(a: EvalArgs) -> Res {
    let Loaded { model, file } = load_model(&a.source)?;
    let file = file.as_ref();
    let v = model.config().vocab_size;
    let vocab = model_vocab(&model, pick_path(a.vocab.clone(), file, "vocab"))?;
    let path = a
        .corpus
        .clone()
        .or_else(|| pick_path(None, file, "test"))
        .or_else(|| pick_path(None, file, "train"))
        .ok_or_else(|| usage("--corpus is required"))?;
    let corpus = load_corpus(&path, v, Split::Test)?;
    require_documents(&corpus, &path)?;
    let noise = noise(a.sample, file, a.seed)?;
    println!("perplexity\t{:.4}", eval::perplexity(&model, &corpus, noise)?);

    if pick_switch(a.coherence, file, "coherence")? {
        let ref_path = pick_path(a.reference.clone(), file, "ref")
            .or_else(|| pick_path(None, file, "train"))
            .ok_or_else(|| usage("--coherence needs --ref"))?;
        let reference = load_corpus(&ref_path, v, Split::Train)?;
        let words: Vec<Vec<usize>> = eval::top_words(&model, &vocab, DEFAULT_TOP)?
            .into_iter()
            .map(|t| t.words.into_iter().map(|(w, _)| w).collect())
            .collect();
        let report = eval::npmi(&words, &reference);
        println!("npmi reference\t{}", ref_path.display());
        println!("{report}");
    }
    Ok(())
}

pub fn topics(a: TopicsArgs) -> Res {
    let Loaded { model, file } = load_model(&a.source)?;
    let file = file.as_ref();
    let top: usize = pick(a.top, file, "top", DEFAULT_TOP)?;
    if top == 0 {
        return Err(usage("--top must be at least 1"));
    }
    let vocab = model_vocab(&model, pick_path(a.vocab.clone(), file, "vocab"))?;
    let summaries = eval::top_words(&model, &vocab, top)?;
    let (ranking, column) = if model.config().decoder.is_document_model() {
        ("connection strength (document model)", "strength")
    } else {
        ("probability", "prob")
    };
    let mut text = format!("# {} topics, top {} words ranked by {ranking}\n", summaries.len(), top.min(vocab.len()));
    for t in &summaries {
        text.push_str(&format!("\ntopic {}\tword\t{column}\n", t.topic));
        for (rank, &(w, score)) in t.words.iter().enumerate() {
            text.push_str(&format!("{}\t{}\t{score:.6}\n", rank + 1, vocab.term(w)));
        }
    }
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => {
            return Err(CliError::Runtime(format!("writing topics: {e}")))
        }
        _ => {}
    }
    Ok(())
}

pub fn infer(a: InferArgs) -> Res {
    let Loaded { model, file } = load_model(&a.source)?;
    let file = file.as_ref();
    let path = a
        .corpus
        .clone()
        .or_else(|| pick_path(None, file, "test"))
        .ok_or_else(|| usage("--corpus is required"))?;
    let corpus = load_corpus(&path, model.config().vocab_size, Split::Test)?;
    if corpus.is_empty() {
        return Err(CliError::Input(format!("{}: corpus has no documents", path.display())));
    }
    let noise = noise(a.sample, file, a.seed)?;
    eval::export_theta(&model, &corpus, &a.out, noise)?;
    println!("wrote {} rows to {}", corpus.len(), a.out.display());
    Ok(())
}
