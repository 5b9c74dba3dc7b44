//! Optimisation: Adam over minibatches, optional alternating updates of the
//! generative and variational halves, the diversity term, and the
//! topic-growing loop for `rsb-tf`.

mod adam;
mod checkpoint;
mod diversity;

use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use adam::{clip_global_norm, Adam, AdamConfig, Moments};
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint};
pub use diversity::{diversity_on, diversity_penalty, Diversity};

use crate::corpus::{Corpus, Minibatches};
use crate::error::{Error, Result};
use crate::gradcore::{Tape, Tensor};
use crate::model::{NeuralTopicModel, ParamGroup};

/// Which parameters each step updates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Alternation {
    /// Generative and variational parameters together.
    Joint,
    /// Even batches update the generative side, odd batches the variational side.
    PerBatch,
    /// Even epochs update the generative side, odd epochs the variational side.
    PerEpoch,
}

impl Alternation {
    pub fn as_str(self) -> &'static str {
        match self {
            Alternation::Joint => "off",
            Alternation::PerBatch => "batch",
            Alternation::PerEpoch => "epoch",
        }
    }

    /// The group updated at `(epoch, batch)`, or `None` for both.
    pub fn group(self, epoch: u64, batch: usize) -> Option<ParamGroup> {
        let even = match self {
            Alternation::Joint => return None,
            Alternation::PerBatch => batch % 2 == 0,
            Alternation::PerEpoch => epoch % 2 == 0,
        };
        Some(if even { ParamGroup::Generative } else { ParamGroup::Variational })
    }
}

impl fmt::Display for Alternation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Alternation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "off" | "joint" | "false" => Ok(Alternation::Joint),
            "batch" | "on" | "true" => Ok(Alternation::PerBatch),
            "epoch" => Ok(Alternation::PerEpoch),
            other => Err(Error::Contract(format!("unknown alternation {other:?}; expected off, batch or epoch"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: u64,
    pub seed: u64,
    /// Acceptance threshold on the likelihood increase (`rsb-tf`).
    pub gamma: f64,
    /// Weight of the diversity term.
    pub lambda: f64,
    pub alternation: Alternation,
    /// Global gradient-norm ceiling; `None` disables clipping.
    pub clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 64,
            epochs: 100,
            seed: 0,
            gamma: 5e-5,
            lambda: 0.1,
            alternation: Alternation::Joint,
            clip_norm: Some(5.0),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Contract(m));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return fail(format!("learning rate {} must be finite and non-negative", self.learning_rate));
        }
        if self.batch_size == 0 {
            return fail("batch size must be at least 1".into());
        }
        if !(self.gamma >= 0.0) {
            return fail(format!("gamma {} must be non-negative", self.gamma));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return fail(format!("lambda {} must be finite and non-negative", self.lambda));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return fail(format!("clip norm {c} must be positive"));
            }
        }
        Ok(())
    }
}

/// Optimiser moments and the number of completed epochs.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub adam: Adam,
    pub epoch: u64,
}

impl TrainState {
    pub fn new(model: &NeuralTopicModel) -> Self {
        TrainState {
            adam: Adam::new(model.params()),
            epoch: 0,
        }
    }
}

pub const METRICS_HEADER: &str = "epoch,batch,elbo,kl,perplexity,active_topics";

#[derive(Clone, Debug, PartialEq)]
pub struct BatchMetrics {
    pub epoch: u64,
    pub batch: usize,
    /// Mean bound over the batch, before the update.
    pub elbo: f64,
    pub kl: f64,
    pub perplexity: f64,
    /// Topics used for this batch.
    pub active_topics: usize,
    /// Likelihood increase of the last topic (`rsb-tf` only).
    pub increase: Option<f64>,
    /// Observed words whose mixture probability hit the floor.
    pub clamped: usize,
}

impl BatchMetrics {
    pub fn log_line(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.epoch, self.batch, self.elbo, self.kl, self.perplexity, self.active_topics
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochMetrics {
    pub epoch: u64,
    /// Mean bound over every document visited.
    pub mean_elbo: f64,
    pub mean_kl: f64,
    /// `exp(−mean_d L̂_d / N_d)` over the training-time bounds.
    pub perplexity: f64,
    /// Active topics after the epoch.
    pub active_topics: usize,
    pub batches: Vec<BatchMetrics>,
}

/// Append-only CSV of batch metrics.
pub struct MetricsLog {
    path: PathBuf,
    out: BufWriter<fs::File>,
}

impl MetricsLog {
    /// Creates (truncates) `path` and writes the header line.
    pub fn create(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut log = MetricsLog {
            out: BufWriter::new(file),
            path,
        };
        writeln!(log.out, "{METRICS_HEADER}").map_err(|e| Error::io(&log.path, e))?;
        Ok(log)
    }

    /// Opens `path` for appending, writing the header only if it is new.
    pub fn append(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let fresh = fs::metadata(&path).map(|m| m.len() == 0).unwrap_or(true);
        let file = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        let mut log = MetricsLog {
            out: BufWriter::new(file),
            path,
        };
        if fresh {
            writeln!(log.out, "{METRICS_HEADER}").map_err(|e| Error::io(&log.path, e))?;
        }
        Ok(log)
    }

    pub fn record(&mut self, epoch: &EpochMetrics) -> Result<()> {
        for b in &epoch.batches {
            writeln!(self.out, "{}", b.log_line()).map_err(|e| Error::io(&self.path, e))?;
        }
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}

/// `I = Σ_d (L^i_d − L^{i−1}_d) / |Σ_d L^i_d|`.
pub fn likelihood_increase(current: &[f64], previous: &[f64]) -> Result<f64> {
    if current.len() != previous.len() {
        return Err(Error::Contract(format!(
            "bounds over {} and {} documents",
            current.len(),
            previous.len()
        )));
    }
    let total: f64 = current.iter().sum();
    if total == 0.0 {
        return Err(Error::Degenerate("likelihood increase with zero total bound".into()));
    }
    let gain: f64 = current.iter().zip(previous).map(|(a, b)| a - b).sum();
    Ok(gain / total.abs())
}

/// Noise and dropout stream for one batch, independent of everything
/// before it so resumed runs replay exactly.
fn batch_rng(seed: u64, epoch: u64, batch: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6e74_6d5f_6e6f_6973);
    rng.set_stream((epoch << 32) | batch as u64);
    rng
}

fn per_word(elbo: &[f64], counts: &Tensor) -> Vec<f64> {
    let v = counts.cols();
    elbo.iter()
        .enumerate()
        .map(|(d, l)| l / counts.data()[d * v..(d + 1) * v].iter().sum::<f64>())
        .collect()
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// One update on a batch of dense counts (every row non-empty).
pub fn train_step(
    model: &mut NeuralTopicModel,
    state: &mut TrainState,
    config: &TrainConfig,
    counts: &Tensor,
    batch: usize,
) -> Result<BatchMetrics> {
    let epoch = state.epoch;
    let unbounded = model.config().construction.is_unbounded();
    let k = model.active_topics();
    let mut rng = batch_rng(config.seed, epoch, batch);
    let eps = model.sample_epsilon(counts.rows(), &mut rng);

    let mut tape = Tape::new();
    let bound = model.params().bind(&mut tape);
    let fwd = model.forward(&mut tape, &bound, counts, &eps, Some(&mut rng))?;

    let increase = if unbounded {
        let lower = model.truncated_elbo(&mut tape, &fwd, counts, k - 1)?;
        Some(likelihood_increase(tape.value(fwd.elbo).data(), tape.value(lower).data())?)
    } else {
        None
    };

    let avg = tape.mean(fwd.elbo);
    let mut loss = tape.neg(avg);
    if config.lambda > 0.0 && !unbounded {
        let (zeta, nu) = diversity_on(&mut tape, fwd.topic_vectors)?;
        let spread = tape.sub(zeta, nu)?;
        let term = tape.scale(spread, config.lambda);
        loss = tape.sub(loss, term)?;
    }
    if !tape.value(loss).is_finite() {
        return Err(Error::NonFinite(format!("loss at epoch {epoch}, batch {batch}")));
    }

    let elbo = tape.value(fwd.elbo).data().to_vec();
    let kl = tape.value(fwd.kl).data().to_vec();
    tape.backward(loss)?;

    let group = config.alternation.group(epoch, batch);
    let mut grads: Vec<Option<Tensor>> = model
        .params()
        .iter()
        .zip(bound.vars())
        .map(|(p, &v)| match group {
            Some(g) if g != p.group => None,
            _ => tape.take_grad(v),
        })
        .collect();
    if let Some(max) = config.clip_norm {
        clip_global_norm(&mut grads, max);
    }
    state.adam.step(model.params_mut(), &grads, config.learning_rate)?;

    if increase.is_some_and(|i| i > config.gamma) {
        model.add_topic()?;
    }
    Ok(BatchMetrics {
        epoch,
        batch,
        elbo: mean(&elbo),
        kl: mean(&kl),
        perplexity: (-mean(&per_word(&elbo, counts))).exp(),
        active_topics: k,
        increase,
        clamped: fwd.clamped,
    })
}

/// One pass over the non-empty training documents in a seeded order.
pub fn train_epoch(
    model: &mut NeuralTopicModel,
    corpus: &Corpus,
    batches: &Minibatches,
    config: &TrainConfig,
    state: &mut TrainState,
) -> Result<EpochMetrics> {
    config.validate()?;
    if corpus.vocab_size() != model.config().vocab_size {
        return Err(Error::Contract(format!(
            "corpus vocabulary {} but model vocabulary {}",
            corpus.vocab_size(),
            model.config().vocab_size
        )));
    }
    let (mut elbo_sum, mut kl_sum, mut pw_sum, mut docs) = (0.0, 0.0, 0.0, 0usize);
    let mut rows = Vec::new();
    for (b, batch) in batches.epoch(corpus, state.epoch).enumerate() {
        let m = train_step(model, state, config, &batch.counts, b)?;
        let n = batch.docs.len();
        elbo_sum += m.elbo * n as f64;
        kl_sum += m.kl * n as f64;
        pw_sum += -m.perplexity.ln() * n as f64;
        docs += n;
        rows.push(m);
    }
    if docs == 0 {
        return Err(Error::Contract("training corpus has no non-empty documents".into()));
    }
    let out = EpochMetrics {
        epoch: state.epoch,
        mean_elbo: elbo_sum / docs as f64,
        mean_kl: kl_sum / docs as f64,
        perplexity: (-pw_sum / docs as f64).exp(),
        active_topics: model.active_topics(),
        batches: rows,
    };
    state.epoch += 1;
    Ok(out)
}

/// Trains until `state.epoch` reaches `config.epochs`, calling `on_epoch`
/// after each epoch. Resuming from a checkpointed state continues the
/// same trajectory.
pub fn train(
    model: &mut NeuralTopicModel,
    corpus: &Corpus,
    config: &TrainConfig,
    state: &mut TrainState,
    mut on_epoch: impl FnMut(&NeuralTopicModel, &EpochMetrics) -> Result<()>,
) -> Result<Vec<EpochMetrics>> {
    config.validate()?;
    let batches = Minibatches::new(corpus, config.batch_size, config.seed)?;
    let mut all = Vec::new();
    while state.epoch < config.epochs {
        let m = train_epoch(model, corpus, &batches, config, state)?;
        on_epoch(model, &m)?;
        all.push(m);
    }
    Ok(all)
}

/// [`train`] for `rsb-tf` models: after every batch the newest topic is
/// kept active and another one added whenever its likelihood increase
/// exceeds `gamma`. The active count never decreases.
pub fn train_unbounded(
    model: &mut NeuralTopicModel,
    corpus: &Corpus,
    config: &TrainConfig,
    state: &mut TrainState,
    on_epoch: impl FnMut(&NeuralTopicModel, &EpochMetrics) -> Result<()>,
) -> Result<Vec<EpochMetrics>> {
    if !model.config().construction.is_unbounded() {
        return Err(Error::Contract(format!(
            "unbounded training needs rsb-tf, not {}",
            model.config().construction
        )));
    }
    train(model, corpus, config, state, on_epoch)
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;

    use super::*;
    use crate::constructions::ConstructionKind;
    use crate::corpus::{Document, Split};
    use crate::model::{ModelConfig, ParamSet};

    fn toy_corpus() -> Corpus {
        let docs = vec![
            Document::from_counts([(0, 3), (1, 2), (2, 1)]),
            Document::from_counts([(3, 4), (4, 1)]),
            Document::from_counts([(0, 1), (5, 2), (6, 3)]),
            Document::from_counts([]),
            Document::from_counts([(2, 2), (7, 5)]),
            Document::from_counts([(1, 1), (3, 1), (7, 1)]),
        ];
        Corpus::new(docs, 8, Split::Train).unwrap()
    }

    fn toy_model(kind: ConstructionKind, topics: usize) -> NeuralTopicModel {
        let mut c = ModelConfig::new(kind, 8, topics);
        c.latent = 6;
        c.mlp_hidden = 8;
        NeuralTopicModel::new(c, 1).unwrap()
    }

    fn config() -> TrainConfig {
        TrainConfig {
            learning_rate: 1e-2,
            batch_size: 2,
            epochs: 3,
            ..TrainConfig::default()
        }
    }

    fn group_values(p: &ParamSet, g: ParamGroup) -> Vec<Tensor> {
        p.iter().filter(|p| p.group == g).map(|p| p.value.clone()).collect()
    }

    #[test]
    fn increase_examples() {
        assert_eq!(likelihood_increase(&[-3.0, -4.0], &[-3.0, -4.0]).unwrap(), 0.0);
        assert_abs_diff_eq!(likelihood_increase(&[-1000.0], &[-1050.0]).unwrap(), 0.05, epsilon = 1e-15);
        assert!(likelihood_increase(&[-1000.0], &[-1050.0]).unwrap() > 5e-5);
        assert!(matches!(likelihood_increase(&[0.0], &[-1.0]), Err(Error::Degenerate(_))));
        assert!(likelihood_increase(&[-1.0], &[]).is_err());
    }

    #[test]
    fn zero_learning_rate_changes_nothing() {
        let corpus = toy_corpus();
        let mut model = toy_model(ConstructionKind::Gsm, 3);
        let before = model.params().clone();
        let mut state = TrainState::new(&model);
        let cfg = TrainConfig { learning_rate: 0.0, ..config() };
        let runs = train(&mut model, &corpus, &cfg, &mut state, |_, _| Ok(())).unwrap();
        assert_eq!(model.params(), &before);
        assert_eq!(runs.len(), 3);
        assert!(runs.iter().all(|m| m.perplexity.is_finite() && m.batches.len() == 3));
    }

    #[test]
    fn alternating_masks_the_other_half() {
        let corpus = toy_corpus();
        let mut model = toy_model(ConstructionKind::Gsb, 3);
        let mut state = TrainState::new(&model);
        let cfg = TrainConfig {
            alternation: Alternation::PerBatch,
            ..config()
        };
        let batches = Minibatches::new(&corpus, 2, 0).unwrap();
        let order = batches.epoch(&corpus, 0).collect::<Vec<_>>();
        for (b, batch) in order.iter().enumerate() {
            let before = model.params().clone();
            train_step(&mut model, &mut state, &cfg, &batch.counts, b).unwrap();
            let frozen = if b % 2 == 0 { ParamGroup::Variational } else { ParamGroup::Generative };
            let moved = if b % 2 == 0 { ParamGroup::Generative } else { ParamGroup::Variational };
            assert_eq!(group_values(model.params(), frozen), group_values(&before, frozen));
            assert_ne!(group_values(model.params(), moved), group_values(&before, moved));
        }
    }

    #[test]
    fn small_step_lowers_batch_loss() {
        let corpus = toy_corpus();
        let counts = corpus.dense_counts(&[0, 1, 2]);
        for kind in ConstructionKind::ALL {
            let mut model = toy_model(kind, 3);
            let mut state = TrainState::new(&model);
            let cfg = TrainConfig {
                learning_rate: 1e-4,
                lambda: 0.0,
                gamma: f64::INFINITY,
                ..config()
            };
            // Loss at the same noise before and after one step.
            let eps = model.sample_epsilon(3, &mut batch_rng(cfg.seed, 0, 0));
            let before = model.elbo(&counts, &eps).unwrap().elbo;
            let mut no_dropout = model.config().clone();
            no_dropout.dropout_keep = 1.0;
            model = NeuralTopicModel::from_params(no_dropout, model.active_topics(), model.params().clone()).unwrap();
            train_step(&mut model, &mut state, &cfg, &counts, 0).unwrap();
            let after = model.elbo(&counts, &eps).unwrap().elbo;
            assert!(mean(&after) > mean(&before), "{kind}: {before:?} -> {after:?}");
        }
    }

    #[test]
    fn runs_are_deterministic_and_resumable() {
        let corpus = toy_corpus();
        let cfg = TrainConfig { epochs: 4, ..config() };
        let run = |stop: Option<u64>| {
            let mut model = toy_model(ConstructionKind::Rsb, 3);
            let mut state = TrainState::new(&model);
            let mut lines = Vec::new();
            if let Some(stop) = stop {
                let first = TrainConfig { epochs: stop, ..cfg.clone() };
                for m in train(&mut model, &corpus, &first, &mut state, |_, _| Ok(())).unwrap() {
                    lines.extend(m.batches.iter().map(BatchMetrics::log_line));
                }
                let mut raw = Vec::new();
                write_checkpoint(&mut raw, &model, &state).unwrap();
                let back = read_checkpoint(raw.as_slice()).unwrap();
                (model, state) = (back.model, back.state);
            }
            for m in train(&mut model, &corpus, &cfg, &mut state, |_, _| Ok(())).unwrap() {
                lines.extend(m.batches.iter().map(BatchMetrics::log_line));
            }
            (lines, model.params().clone())
        };
        let a = run(None);
        assert_eq!(a, run(None));
        assert_eq!(a, run(Some(2)));
    }

    #[test]
    fn unbounded_growth_follows_the_threshold() {
        let corpus = toy_corpus();
        let mut model = toy_model(ConstructionKind::RsbTf, 2);
        let mut state = TrainState::new(&model);
        let frozen = TrainConfig {
            gamma: 1e9,
            ..config()
        };
        train_unbounded(&mut model, &corpus, &frozen, &mut state, |_, _| Ok(())).unwrap();
        assert_eq!(model.active_topics(), 2);

        let mut model = toy_model(ConstructionKind::RsbTf, 2);
        let mut state = TrainState::new(&model);
        let open = TrainConfig {
            gamma: 0.0,
            epochs: 6,
            learning_rate: 5e-2,
            ..config()
        };
        let runs = train_unbounded(&mut model, &corpus, &open, &mut state, |_, _| Ok(())).unwrap();
        let rows: Vec<_> = runs.iter().flat_map(|m| m.batches.clone()).collect();
        for pair in rows.windows(2) {
            let grew = pair[1].active_topics - pair[0].active_topics;
            assert_eq!(grew == 1, pair[0].increase.unwrap() > 0.0, "{pair:?}");
            assert!(grew <= 1);
        }
        assert!(model.active_topics() > 2);
    }

    #[test]
    fn single_document_perplexity_settles() {
        use crate::eval::{perplexity, Noise};
        let doc = Document::from_counts([(0, 5), (1, 3), (2, 1), (4, 2), (7, 4)]);
        let corpus = Corpus::new(vec![doc], 10, Split::Train).unwrap();
        let mut c = ModelConfig::new(ConstructionKind::Gsm, 10, 2);
        c.latent = 16;
        c.mlp_hidden = 16;
        let mut model = NeuralTopicModel::new(c, 0).unwrap();
        let mut state = TrainState::new(&model);
        let cfg = TrainConfig {
            epochs: 200,
            batch_size: 1,
            learning_rate: 1e-2,
            ..TrainConfig::default()
        };
        let mut trace = Vec::new();
        train(&mut model, &corpus, &cfg, &mut state, |m, _| {
            trace.push(perplexity(m, &corpus, Noise::Mean)?);
            Ok(())
        })
        .unwrap();
        assert!(trace[150..].windows(2).all(|w| w[1] <= w[0]), "{:?}", &trace[150..]);
        assert!(trace[199] < trace[0]);
    }

    #[test]
    fn unbounded_refuses_finite_models() {
        let mut model = toy_model(ConstructionKind::Gsm, 3);
        let mut state = TrainState::new(&model);
        assert!(train_unbounded(&mut model, &toy_corpus(), &config(), &mut state, |_, _| Ok(())).is_err());
    }

    #[test]
    fn metrics_log_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metrics.csv");
        let mut model = toy_model(ConstructionKind::Gsm, 3);
        let mut state = TrainState::new(&model);
        let mut log = MetricsLog::create(&path).unwrap();
        train(&mut model, &toy_corpus(), &config(), &mut state, |_, m| log.record(m)).unwrap();
        drop(log);
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], METRICS_HEADER);
        assert_eq!(lines.len(), 1 + 3 * 3);
        assert!(lines[1].starts_with("0,0,"));
        assert!(lines[9].ends_with(",3"));
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        for bad in [
            TrainConfig { gamma: -1.0, ..config() },
            TrainConfig { lambda: -0.1, ..config() },
            TrainConfig { batch_size: 0, ..config() },
            TrainConfig { learning_rate: f64::NAN, ..config() },
        ] {
            assert!(bad.validate().is_err());
        }
        assert_eq!("batch".parse::<Alternation>().unwrap(), Alternation::PerBatch);
        assert_eq!(Alternation::PerEpoch.group(3, 0), Some(ParamGroup::Variational));
        assert_eq!(Alternation::Joint.group(3, 0), None);
    }
}
