//! Neural variational topic models.
//!
//! A document's topic proportions θ are produced by pushing a Gaussian draw
//! through one of three constructions: a softmax (GSM), a stick-breaking
//! process driven by sigmoid breaks (GSB), or a stick-breaking process whose
//! breaks come from a recurrent network (RSB). The recurrent variant can also
//! grow its number of active topics during training.
//!
//! The crate is organised bottom-up:
//!
//! * [`gradcore`]: tensors and reverse-mode autodiff.
//! * [`corpus`]: vocabularies, bag-of-words files, minibatches.
//! * [`constructions`]: reparameterisation, Gaussian KL, and the three θ maps.
//! * [`recurrent`]: the LSTM cell behind the recurrent constructions.
//! * [`model`]: inference network, decoders, and the evidence lower bound.
//! * [`train`]: Adam, diversity regularisation, the finite and unbounded loops, checkpoints.
//! * [`eval`]: perplexity, NPMI coherence, top words, θ export.
//! * [`synthetic`]: planted-topic corpora with known topic-word distributions.

pub mod constructions;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod gradcore;
pub mod model;
pub mod recurrent;
pub mod synthetic;
pub mod train;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/autodiff.md")]
    mod autodiff {}
    #[doc = include_str!("../../../book/src/corpora.md")]
    mod corpora {}
    #[doc = include_str!("../../../book/src/constructions.md")]
    mod constructions {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/unbounded.md")]
    mod unbounded {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
