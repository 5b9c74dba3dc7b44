//! The full variational model: inference network, θ construction, decoder.
//!
//! For a batch of count vectors the forward pass computes
//!
//! ```text
//! μ, ln σ = MLP(counts / N_d)
//! x       = μ + ε ⊙ σ
//! θ       = g(x)                      (GSM, GSB or RSB)
//! β       = softmax(t · vᵀ)           (topic vectors t, word vectors v)
//! L̂_d     = Σ_w n_w ln p(w | θ, β) − KL(q(x|d) ‖ N(0, I))
//! ```
//!
//! All parameters live in one [`ParamSet`]; the structs here hold
//! [`ParamId`]s into it.

mod decoder;
mod params;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use decoder::{
    beta_from_vectors, mixture_log_likelihood, softmax_log_likelihood, topic_word_logits, DecoderMode, PROB_FLOOR,
};
pub use params::{BoundParams, Param, ParamGroup, ParamId, ParamSet};

use crate::constructions::{self, ConstructionKind, GaussianParams};
use crate::error::{Error, Result};
use crate::gradcore::{Tape, Tensor, Var};
use crate::recurrent::LstmCell;

/// Standard deviation of the Gaussian weight initialisation.
pub const INIT_STD: f64 = 0.02;

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub construction: ConstructionKind,
    pub decoder: DecoderMode,
    pub vocab_size: usize,
    /// `K` for finite constructions; the initial active count for `rsb-tf`.
    pub topics: usize,
    /// Width `H` of the Gaussian draw, topic vectors, word vectors and recurrent states.
    pub latent: usize,
    /// Hidden units of the inference MLP.
    pub mlp_hidden: usize,
    /// Keep probability of the dropout on the MLP output.
    pub dropout_keep: f64,
}

impl ModelConfig {
    pub fn new(construction: ConstructionKind, vocab_size: usize, topics: usize) -> Self {
        ModelConfig {
            construction,
            decoder: DecoderMode::Mixture,
            vocab_size,
            topics,
            latent: 256,
            mlp_hidden: 256,
            dropout_keep: 0.8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Contract(m));
        if self.vocab_size == 0 {
            return fail("vocabulary size must be positive".into());
        }
        if self.topics < 2 {
            return fail(format!("need at least 2 topics, got {}", self.topics));
        }
        if self.latent == 0 || self.mlp_hidden == 0 {
            return fail("latent and hidden widths must be positive".into());
        }
        if !(self.dropout_keep > 0.0 && self.dropout_keep <= 1.0) {
            return fail(format!("dropout keep probability {} not in (0, 1]", self.dropout_keep));
        }
        Ok(())
    }
}

/// One-hidden-layer rectifier MLP with `μ` and `ln σ` heads.
#[derive(Clone, Debug, PartialEq)]
pub struct InferenceNet<P> {
    pub w_hidden: P,
    pub b_hidden: P,
    pub w_mu: P,
    pub b_mu: P,
    pub w_log_sigma: P,
    pub b_log_sigma: P,
}

/// Construction-specific weights mapping `x` to θ.
#[derive(Clone, Debug, PartialEq)]
pub enum ConstructionParams<P> {
    Gsm { w1: P },
    Gsb { w2: P },
    Rsb { cell: LstmCell<P> },
    RsbTf {
        cell: LstmCell<P>,
        topic_cell: LstmCell<P>,
        /// Learned start vector `t_0` fed to the topic cell.
        start: P,
    },
}

/// Tape values from one forward pass.
#[derive(Clone, Debug)]
pub struct Forward {
    pub q: GaussianParams,
    pub x: Var,
    /// Topic proportions, `B × K`.
    pub theta: Var,
    /// What the decoder multiplies with β: θ itself, or the pre-softmax
    /// logits for a GSM document model.
    pub decoder_theta: Var,
    /// Breaking proportions for the stick-breaking constructions, `B × (K − 1)`.
    pub eta: Option<Var>,
    /// `K × H`
    pub topic_vectors: Var,
    /// `V × H`
    pub words: Var,
    /// `B × 1` reconstruction term.
    pub rec: Var,
    /// `B × 1` KL term.
    pub kl: Var,
    /// `B × 1` bound `rec − kl`.
    pub elbo: Var,
    /// Observed words whose mixture probability was clamped.
    pub clamped: usize,
}

/// Per-document bound and its two parts.
#[derive(Clone, Debug, PartialEq)]
pub struct ElboValues {
    pub elbo: Vec<f64>,
    pub rec: Vec<f64>,
    pub kl: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct NeuralTopicModel {
    config: ModelConfig,
    params: ParamSet,
    net: InferenceNet<ParamId>,
    construction: ConstructionParams<ParamId>,
    topics: Option<ParamId>,
    words: ParamId,
    active_topics: usize,
}

fn add_cell(params: &mut ParamSet, prefix: &str, cell: LstmCell<Tensor>) -> LstmCell<ParamId> {
    let named: Vec<(&str, Tensor)> = cell.named().into_iter().map(|(n, t)| (n, t.clone())).collect();
    let mut ids = named
        .into_iter()
        .map(|(n, t)| params.add(format!("{prefix}.{n}"), ParamGroup::Generative, t));
    let w_input = cell.w_input.as_ref().map(|_| ids.next().unwrap());
    LstmCell {
        w_input,
        w_hidden: ids.next().unwrap(),
        bias: ids.next().unwrap(),
        h0: ids.next().unwrap(),
        c0: ids.next().unwrap(),
    }
}

/// Rows scaled to sum to one; all-zero rows stay zero.
pub fn frequencies(counts: &Tensor) -> Tensor {
    let (m, n) = counts.dims();
    let mut out = counts.clone();
    for i in 0..m {
        let row = &mut out.data_mut()[i * n..(i + 1) * n];
        let total: f64 = row.iter().sum();
        if total > 0.0 {
            row.iter_mut().for_each(|v| *v /= total);
        }
    }
    out
}

/// Standard-normal noise for the reparameterised draw.
pub fn sample_epsilon<R: Rng + ?Sized>(rows: usize, latent: usize, rng: &mut R) -> Tensor {
    Tensor::randn(rows, latent, 1.0, rng)
}

impl NeuralTopicModel {
    /// Fresh model with Gaussian (std 0.02) weights and zero biases, seeded.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (v, h, m, k) = (config.vocab_size, config.latent, config.mlp_hidden, config.topics);
        let mut params = ParamSet::new();
        let var = ParamGroup::Variational;
        let gen = ParamGroup::Generative;

        let net = InferenceNet {
            w_hidden: params.add("net.w_hidden", var, Tensor::randn(v, m, INIT_STD, &mut rng)),
            b_hidden: params.add("net.b_hidden", var, Tensor::zeros(1, m)),
            w_mu: params.add("net.w_mu", var, Tensor::randn(m, h, INIT_STD, &mut rng)),
            b_mu: params.add("net.b_mu", var, Tensor::zeros(1, h)),
            w_log_sigma: params.add("net.w_log_sigma", var, Tensor::randn(m, h, INIT_STD, &mut rng)),
            b_log_sigma: params.add("net.b_log_sigma", var, Tensor::zeros(1, h)),
        };

        let construction = match config.construction {
            ConstructionKind::Gsm => ConstructionParams::Gsm {
                w1: params.add("gsm.w1", gen, Tensor::randn(h, k, INIT_STD, &mut rng)),
            },
            ConstructionKind::Gsb => ConstructionParams::Gsb {
                w2: params.add("gsb.w2", gen, Tensor::randn(h, k - 1, INIT_STD, &mut rng)),
            },
            ConstructionKind::Rsb => ConstructionParams::Rsb {
                cell: add_cell(&mut params, "rnn_sb", LstmCell::init(None, h, &mut rng)),
            },
            ConstructionKind::RsbTf => {
                let cell = add_cell(&mut params, "rnn_sb", LstmCell::init(None, h, &mut rng));
                let topic_cell = add_cell(&mut params, "rnn_topic", LstmCell::init(Some(h), h, &mut rng));
                let start = params.add("rnn_topic.start", gen, Tensor::zeros(1, h));
                ConstructionParams::RsbTf { cell, topic_cell, start }
            }
        };

        let topics = (!config.construction.is_unbounded())
            .then(|| params.add("topics", gen, Tensor::randn(k, h, INIT_STD, &mut rng)));
        let words = params.add("words", gen, Tensor::randn(v, h, INIT_STD, &mut rng));

        Ok(NeuralTopicModel {
            active_topics: k,
            config,
            params,
            net,
            construction,
            topics,
            words,
        })
    }

    /// Rebuilds a model from stored parameters. Names and shapes must match
    /// the layout implied by `config` and `active_topics`.
    pub fn from_params(config: ModelConfig, active_topics: usize, params: ParamSet) -> Result<Self> {
        let mut model = Self::new(config, 0)?;
        if model.config.construction.is_unbounded() {
            if active_topics < 2 {
                return Err(Error::Checkpoint(format!("active topic count {active_topics} below 2")));
            }
            model.active_topics = active_topics;
        } else if active_topics != model.config.topics {
            return Err(Error::Checkpoint(format!(
                "active topics {active_topics} disagree with K = {}",
                model.config.topics
            )));
        }
        if params.len() != model.params.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameters, found {}",
                model.params.len(),
                params.len()
            )));
        }
        for (want, got) in model.params.iter().zip(params.iter()) {
            if want.name != got.name || want.group != got.group || want.value.shape() != got.value.shape() {
                return Err(Error::Checkpoint(format!(
                    "parameter {} {:?} does not match expected {} {:?}",
                    got.name,
                    got.value.shape(),
                    want.name,
                    want.value.shape()
                )));
            }
        }
        model.params = params;
        Ok(model)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    /// Topics in use: `K`, or the current active count `i` for `rsb-tf`.
    pub fn active_topics(&self) -> usize {
        self.active_topics
    }

    /// Grows the active topic count of an unbounded model by one.
    pub fn add_topic(&mut self) -> Result<()> {
        if !self.config.construction.is_unbounded() {
            return Err(Error::State("only rsb-tf models can add topics".into()));
        }
        self.active_topics += 1;
        Ok(())
    }

    pub fn set_active_topics(&mut self, n: usize) -> Result<()> {
        if !self.config.construction.is_unbounded() || n < 2 {
            return Err(Error::State(format!("cannot set {n} active topics on this model")));
        }
        self.active_topics = n;
        Ok(())
    }

    pub fn net(&self) -> &InferenceNet<ParamId> {
        &self.net
    }

    pub fn construction(&self) -> &ConstructionParams<ParamId> {
        &self.construction
    }

    pub fn words_id(&self) -> ParamId {
        self.words
    }

    /// Id of the explicit `K × H` topic matrix (finite constructions only).
    pub fn topics_id(&self) -> Option<ParamId> {
        self.topics
    }

    pub fn sample_epsilon<R: Rng + ?Sized>(&self, rows: usize, rng: &mut R) -> Tensor {
        sample_epsilon(rows, self.config.latent, rng)
    }

    /// `q(x | d)` for a batch of raw counts. Dropout on the hidden layer is
    /// applied only when `dropout` supplies a generator.
    pub fn infer_q(
        &self,
        tape: &mut Tape,
        bound: &BoundParams,
        counts: &Tensor,
        dropout: Option<&mut ChaCha8Rng>,
    ) -> Result<GaussianParams> {
        if counts.cols() != self.config.vocab_size {
            return Err(Error::dim("infer_q", counts.shape(), &[counts.rows(), self.config.vocab_size]));
        }
        let input = tape.constant(frequencies(counts));
        let net = &self.net;
        let pre = tape.matmul(input, bound[net.w_hidden])?;
        let pre = tape.add(pre, bound[net.b_hidden])?;
        let mut hidden = tape.relu(pre);
        if let Some(rng) = dropout {
            hidden = tape.dropout(hidden, self.config.dropout_keep, rng)?;
        }
        let mu = tape.matmul(hidden, bound[net.w_mu])?;
        let mu = tape.add(mu, bound[net.b_mu])?;
        let ls = tape.matmul(hidden, bound[net.w_log_sigma])?;
        let log_sigma = tape.add(ls, bound[net.b_log_sigma])?;
        Ok(GaussianParams { mu, log_sigma })
    }

    /// Topic vectors `t_1..t_k` as a `k × H` tape value.
    pub fn topic_vectors_on(&self, tape: &mut Tape, bound: &BoundParams, k: usize) -> Result<Var> {
        match (&self.construction, self.topics) {
            (ConstructionParams::RsbTf { topic_cell, start, .. }, _) => {
                let cell = topic_cell.map(|&id| bound[id]);
                cell.unroll_topics(tape, bound[*start], k)
            }
            (_, Some(t)) => Ok(bound[t]),
            _ => unreachable!("finite constructions always hold topic vectors"),
        }
    }

    /// θ for `k` topics from a draw `x`. Returns `(θ, decoder θ, η)`.
    fn theta_on(&self, tape: &mut Tape, bound: &BoundParams, x: Var, k: usize) -> Result<(Var, Var, Option<Var>)> {
        let document_model = self.config.decoder.is_document_model();
        match &self.construction {
            ConstructionParams::Gsm { w1 } => {
                let logits = tape.matmul(x, bound[*w1])?;
                let theta = tape.softmax_rows(logits)?;
                Ok((theta, if document_model { logits } else { theta }, None))
            }
            ConstructionParams::Gsb { w2 } => {
                let logits = tape.matmul(x, bound[*w2])?;
                let eta = tape.sigmoid(logits);
                let theta = constructions::stick_break(tape, eta, k)?;
                Ok((theta, theta, Some(eta)))
            }
            ConstructionParams::Rsb { cell } | ConstructionParams::RsbTf { cell, .. } => {
                let cell = cell.map(|&id| bound[id]);
                let eta = constructions::rsb_eta(tape, x, &cell, k - 1)?;
                let theta = constructions::stick_break(tape, eta, k)?;
                Ok((theta, theta, Some(eta)))
            }
        }
    }

    /// Reconstruction term for the configured decoder.
    fn reconstruct(&self, tape: &mut Tape, counts: Var, theta: Var, topic_vectors: Var, words: Var) -> Result<(Var, usize)> {
        match self.config.decoder {
            DecoderMode::Mixture => {
                let beta = beta_from_vectors(tape, topic_vectors, words)?;
                mixture_log_likelihood(tape, counts, theta, beta)
            }
            DecoderMode::Softmax => {
                let beta = topic_word_logits(tape, topic_vectors, words)?;
                Ok((softmax_log_likelihood(tape, counts, theta, beta)?, 0))
            }
        }
    }

    /// Full forward pass on `counts` (`B × V`) with noise `epsilon` (`B × H`).
    pub fn forward(
        &self,
        tape: &mut Tape,
        bound: &BoundParams,
        counts: &Tensor,
        epsilon: &Tensor,
        dropout: Option<&mut ChaCha8Rng>,
    ) -> Result<Forward> {
        let k = self.active_topics;
        let q = self.infer_q(tape, bound, counts, dropout)?;
        let eps = tape.constant(epsilon.clone());
        let x = constructions::reparameterize(tape, q, eps)?;
        let (theta, decoder_theta, eta) = self.theta_on(tape, bound, x, k)?;
        let topic_vectors = self.topic_vectors_on(tape, bound, k)?;
        let words = bound[self.words];
        let counts_var = tape.constant(counts.clone());
        let (rec, clamped) = self.reconstruct(tape, counts_var, decoder_theta, topic_vectors, words)?;
        let kl = constructions::gaussian_kl(tape, q)?;
        let elbo = tape.sub(rec, kl)?;
        Ok(Forward {
            q,
            x,
            theta,
            decoder_theta,
            eta,
            topic_vectors,
            words,
            rec,
            kl,
            elbo,
            clamped,
        })
    }

    /// Bound with only the first `k` topics of a stick-breaking forward
    /// pass: the last `K − k` breaks are dropped, so topic `k` takes the
    /// whole remaining stick. The draw and KL term are shared with `fwd`.
    pub fn truncated_elbo(&self, tape: &mut Tape, fwd: &Forward, counts: &Tensor, k: usize) -> Result<Var> {
        let eta = fwd
            .eta
            .ok_or_else(|| Error::State("truncated bound needs a stick-breaking construction".into()))?;
        let (b, breaks) = tape.value(eta).dims();
        if k == 0 || k > breaks + 1 {
            return Err(Error::Contract(format!("cannot truncate {} topics to {k}", breaks + 1)));
        }
        let theta = if k == 1 {
            tape.constant(Tensor::ones(b, 1))
        } else {
            let head = tape.slice_cols(eta, 0, k - 1)?;
            constructions::stick_break(tape, head, k)?
        };
        let topics = tape.slice_rows(fwd.topic_vectors, 0, k)?;
        let counts_var = tape.constant(counts.clone());
        let (rec, _) = self.reconstruct(tape, counts_var, theta, topics, fwd.words)?;
        tape.sub(rec, fwd.kl)
    }

    /// Evaluation-mode bound (no dropout) for `counts` and fixed `epsilon`.
    pub fn elbo(&self, counts: &Tensor, epsilon: &Tensor) -> Result<ElboValues> {
        let mut tape = Tape::new();
        let bound = self.params.bind_constant(&mut tape);
        let fwd = self.forward(&mut tape, &bound, counts, epsilon, None)?;
        Ok(ElboValues {
            elbo: tape.value(fwd.elbo).data().to_vec(),
            rec: tape.value(fwd.rec).data().to_vec(),
            kl: tape.value(fwd.kl).data().to_vec(),
        })
    }

    /// Current topic vectors, `K × H`.
    pub fn topic_vectors(&self) -> Result<Tensor> {
        let mut tape = Tape::new();
        let bound = self.params.bind_constant(&mut tape);
        let t = self.topic_vectors_on(&mut tape, &bound, self.active_topics)?;
        Ok(tape.value(t).clone())
    }

    /// `β` (`K × V`) for topic models; the unnormalised `t · vᵀ` scores for
    /// document models.
    pub fn topic_word_matrix(&self) -> Result<Tensor> {
        let mut tape = Tape::new();
        let bound = self.params.bind_constant(&mut tape);
        let t = self.topic_vectors_on(&mut tape, &bound, self.active_topics)?;
        let out = match self.config.decoder {
            DecoderMode::Mixture => beta_from_vectors(&mut tape, t, bound[self.words])?,
            DecoderMode::Softmax => topic_word_logits(&mut tape, t, bound[self.words])?,
        };
        Ok(tape.value(out).clone())
    }

    /// The θ fed to the decoder for each row of `counts`, using the
    /// posterior mean (`ε = 0`) unless `epsilon` is given.
    pub fn infer_theta(&self, counts: &Tensor, epsilon: Option<&Tensor>) -> Result<Tensor> {
        let zeros;
        let eps = match epsilon {
            Some(e) => e,
            None => {
                zeros = Tensor::zeros(counts.rows(), self.config.latent);
                &zeros
            }
        };
        let mut tape = Tape::new();
        let bound = self.params.bind_constant(&mut tape);
        let fwd = self.forward(&mut tape, &bound, counts, eps, None)?;
        Ok(tape.value(fwd.decoder_theta).clone())
    }
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;

    use super::*;
    use crate::gradcore::grad_check_many;

    fn small(kind: ConstructionKind, decoder: DecoderMode) -> ModelConfig {
        ModelConfig {
            construction: kind,
            decoder,
            vocab_size: 6,
            topics: 3,
            latent: 4,
            mlp_hidden: 5,
            dropout_keep: 0.8,
        }
    }

    fn toy_counts() -> Tensor {
        Tensor::from_rows(&[&[2.0, 0.0, 1.0, 0.0, 0.0, 3.0], &[0.0, 1.0, 0.0, 4.0, 1.0, 0.0]])
    }

    #[test]
    fn zero_network_gives_standard_normal() {
        let mut model = NeuralTopicModel::new(small(ConstructionKind::Gsm, DecoderMode::Mixture), 0).unwrap();
        for p in model.params_mut().iter_mut() {
            p.value = p.value.map(|_| 0.0);
        }
        let mut tape = Tape::new();
        let bound = model.params().bind(&mut tape);
        let q = model.infer_q(&mut tape, &bound, &Tensor::zeros(2, 6), None).unwrap();
        assert!(tape.value(q.mu).data().iter().all(|&v| v == 0.0));
        let sigma = tape.exp(q.log_sigma);
        assert!(tape.value(sigma).data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn eval_mode_is_deterministic_and_dropout_is_seeded() {
        let model = NeuralTopicModel::new(small(ConstructionKind::Gsb, DecoderMode::Mixture), 1).unwrap();
        let run = |seed: Option<u64>| {
            let mut tape = Tape::new();
            let bound = model.params().bind(&mut tape);
            let mut rng = seed.map(ChaCha8Rng::seed_from_u64);
            let q = model.infer_q(&mut tape, &bound, &toy_counts(), rng.as_mut()).unwrap();
            tape.value(q.mu).clone()
        };
        assert_eq!(run(None), run(None));
        assert_eq!(run(Some(5)), run(Some(5)));
        assert_ne!(run(Some(5)), run(None));
    }

    #[test]
    fn elbo_parts_compose() {
        for kind in ConstructionKind::ALL {
            let model = NeuralTopicModel::new(small(kind, DecoderMode::Mixture), 2).unwrap();
            let eps = model.sample_epsilon(2, &mut ChaCha8Rng::seed_from_u64(3));
            let counts = toy_counts();
            let v = model.elbo(&counts, &eps).unwrap();

            // Assemble the bound by hand from the separate operations.
            let mut tape = Tape::new();
            let bound = model.params().bind_constant(&mut tape);
            let q = model.infer_q(&mut tape, &bound, &counts, None).unwrap();
            let e = tape.constant(eps.clone());
            let x = constructions::reparameterize(&mut tape, q, e).unwrap();
            let (theta, _, _) = model.theta_on(&mut tape, &bound, x, 3).unwrap();
            let t = model.topic_vectors_on(&mut tape, &bound, 3).unwrap();
            let beta = beta_from_vectors(&mut tape, t, bound[model.words_id()]).unwrap();
            let c = tape.constant(counts.clone());
            let (rec, _) = mixture_log_likelihood(&mut tape, c, theta, beta).unwrap();
            let kl = constructions::gaussian_kl(&mut tape, q).unwrap();
            for d in 0..2 {
                let hand = tape.value(rec).data()[d] - tape.value(kl).data()[d];
                assert_abs_diff_eq!(v.elbo[d], hand, epsilon = 1e-12);
                assert_abs_diff_eq!(v.elbo[d], v.rec[d] - v.kl[d], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn empty_document_bound_is_minus_kl() {
        let model = NeuralTopicModel::new(small(ConstructionKind::Gsm, DecoderMode::Mixture), 4).unwrap();
        let eps = model.sample_epsilon(1, &mut ChaCha8Rng::seed_from_u64(1));
        let v = model.elbo(&Tensor::zeros(1, 6), &eps).unwrap();
        assert_eq!(v.rec[0], 0.0);
        assert_eq!(v.elbo[0], -v.kl[0]);
    }

    #[test]
    fn zero_kl_posterior_leaves_reconstruction() {
        let mut model = NeuralTopicModel::new(small(ConstructionKind::Gsm, DecoderMode::Mixture), 4).unwrap();
        let net = model.net().clone();
        for id in [net.w_mu, net.b_mu, net.w_log_sigma, net.b_log_sigma] {
            let z = model.params().get(id).map(|_| 0.0);
            *model.params_mut().get_mut(id) = z;
        }
        let eps = model.sample_epsilon(2, &mut ChaCha8Rng::seed_from_u64(1));
        let v = model.elbo(&toy_counts(), &eps).unwrap();
        assert_eq!(v.kl, vec![0.0, 0.0]);
        assert_eq!(v.elbo, v.rec);
    }

    #[test]
    fn truncated_bound_merges_the_last_topics() {
        let model = NeuralTopicModel::new(small(ConstructionKind::RsbTf, DecoderMode::Mixture), 6).unwrap();
        let eps = model.sample_epsilon(2, &mut ChaCha8Rng::seed_from_u64(2));
        let mut tape = Tape::new();
        let bound = model.params().bind_constant(&mut tape);
        let fwd = model.forward(&mut tape, &bound, &toy_counts(), &eps, None).unwrap();
        let full = model.truncated_elbo(&mut tape, &fwd, &toy_counts(), 3).unwrap();
        assert_eq!(tape.value(full).data(), tape.value(fwd.elbo).data());
        for k in [1, 2] {
            let t = model.truncated_elbo(&mut tape, &fwd, &toy_counts(), k).unwrap();
            assert!(tape.value(t).is_finite());
        }
        assert!(model.truncated_elbo(&mut tape, &fwd, &toy_counts(), 4).is_err());
    }

    #[test]
    fn restore_rejects_mismatched_layout() {
        let a = NeuralTopicModel::new(small(ConstructionKind::Gsm, DecoderMode::Mixture), 1).unwrap();
        let mut other = small(ConstructionKind::Gsm, DecoderMode::Mixture);
        other.topics = 5;
        assert!(NeuralTopicModel::from_params(other.clone(), 5, a.params().clone()).is_err());
        let b = NeuralTopicModel::from_params(a.config().clone(), 3, a.params().clone()).unwrap();
        assert_eq!(b.params(), a.params());
    }

    /// Gradient of the mean bound w.r.t. every parameter, 3 documents.
    #[test]
    fn full_model_gradients() {
        let counts = Tensor::from_rows(&[
            &[2.0, 0.0, 1.0, 0.0, 0.0, 3.0],
            &[0.0, 1.0, 0.0, 4.0, 1.0, 0.0],
            &[1.0, 1.0, 1.0, 0.0, 2.0, 0.0],
        ]);
        for kind in ConstructionKind::ALL {
            for decoder in [DecoderMode::Mixture, DecoderMode::Softmax] {
                let model = NeuralTopicModel::new(small(kind, decoder), 7).unwrap();
                // Scale up the tiny init so curvature is visible to the check.
                let points: Vec<Tensor> = model.params().values().into_iter().map(|t| t.map(|v| v * 20.0)).collect();
                let eps = model.sample_epsilon(3, &mut ChaCha8Rng::seed_from_u64(9));
                let report = grad_check_many(
                    |tape, vars| {
                        let bound = BoundParams(vars.to_vec());
                        let fwd = model.forward(tape, &bound, &counts, &eps, None)?;
                        Ok(tape.mean(fwd.elbo))
                    },
                    &points,
                    1e-5,
                )
                .unwrap();
                assert!(report.max_rel_error < 1e-4, "{kind}/{decoder}: {report:?}");
            }
        }
    }
}
