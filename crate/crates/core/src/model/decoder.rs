//! Topic-word distributions and the two word likelihoods.
//!
//! A *topic model* uses the mixture decoder: each word's probability is
//! `Σ_z θ_z β_z[w] = (θ · β)[w]`, so the topic assignment never has to be
//! sampled. A *document model* swaps in the softmax decoder, which
//! normalises `θ · β` over the vocabulary with both factors unnormalised.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::gradcore::{Tape, Var};

/// Word probabilities below this are clamped before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DecoderMode {
    Mixture,
    Softmax,
}

impl DecoderMode {
    pub fn as_str(self) -> &'static str {
        match self {
            DecoderMode::Mixture => "mixture",
            DecoderMode::Softmax => "softmax",
        }
    }

    /// The softmax decoder defines a document model rather than a topic model.
    pub fn is_document_model(self) -> bool {
        self == DecoderMode::Softmax
    }
}

impl fmt::Display for DecoderMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DecoderMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mixture" => Ok(DecoderMode::Mixture),
            "softmax" => Ok(DecoderMode::Softmax),
            other => Err(Error::Contract(format!(
                "unknown decoder {other:?}; expected mixture or softmax"
            ))),
        }
    }
}

/// Unnormalised topic-word scores `t · vᵀ`, `K × V`.
pub fn topic_word_logits(tape: &mut Tape, topics: Var, words: Var) -> Result<Var> {
    let (th, wh) = (tape.value(topics).cols(), tape.value(words).cols());
    if th != wh {
        return Err(Error::dim("beta_from_vectors", tape.value(topics).shape(), tape.value(words).shape()));
    }
    let wt = tape.transpose(words);
    tape.matmul(topics, wt)
}

/// `β_k = softmax(v · t_k)`; `topics` is `K × H`, `words` is `V × H`.
pub fn beta_from_vectors(tape: &mut Tape, topics: Var, words: Var) -> Result<Var> {
    let logits = topic_word_logits(tape, topics, words)?;
    tape.softmax_rows(logits)
}

/// Per-document `Σ_w n_w ln (θ · β)[w]` as `B × 1`, plus how many observed
/// entries fell below [`PROB_FLOOR`] and were clamped.
pub fn mixture_log_likelihood(tape: &mut Tape, counts: Var, theta: Var, beta: Var) -> Result<(Var, usize)> {
    let probs = tape.matmul(theta, beta)?;
    if !tape.value(probs).same_shape(tape.value(counts)) {
        return Err(Error::dim("mixture_log_likelihood", tape.value(counts).shape(), tape.value(probs).shape()));
    }
    let clamped = tape
        .value(probs)
        .data()
        .iter()
        .zip(tape.value(counts).data())
        .filter(|(p, n)| **n > 0.0 && **p < PROB_FLOOR)
        .count();
    let floored = tape.clamp(probs, PROB_FLOOR, f64::INFINITY);
    let logp = tape.log(floored);
    let weighted = tape.mul(counts, logp)?;
    Ok((tape.sum_rows(weighted), clamped))
}

/// Per-document `Σ_w n_w log softmax(θ · β)[w]` as `B × 1`, with `θ` and
/// `β` unnormalised.
pub fn softmax_log_likelihood(tape: &mut Tape, counts: Var, theta: Var, beta: Var) -> Result<Var> {
    let logits = tape.matmul(theta, beta)?;
    if !tape.value(logits).same_shape(tape.value(counts)) {
        return Err(Error::dim("softmax_log_likelihood", tape.value(counts).shape(), tape.value(logits).shape()));
    }
    let logp = tape.log_softmax_rows(logits)?;
    let weighted = tape.mul(counts, logp)?;
    Ok(tape.sum_rows(weighted))
}
