//! Gaussian-conditioned constructions of topic proportions θ.
//!
//! Each document draws `x = μ + ε ⊙ σ` and maps it onto the simplex:
//!
//! * GSM: `θ = softmax(x · W₁)`
//! * GSB: `η = sigmoid(x · W₂)`, `θ = stick_break(η)`
//! * RSB: `η_k = sigmoid(h_k · x)` where `h_1, h_2, ...` are the states of
//!   a zero-input LSTM unrolled from a learned start, `θ = stick_break(η)`
//!
//! The KL term of the bound is taken between the Gaussians over `x`, since
//! every construction is a deterministic function of `x`.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::gradcore::{Tape, Var};
use crate::recurrent::LstmCell;

/// Breaking proportions are clamped into `[ETA_MIN, 1 − ETA_MIN]`.
pub const ETA_MIN: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ConstructionKind {
    /// Gaussian softmax.
    Gsm,
    /// Gaussian stick-breaking.
    Gsb,
    /// Recurrent stick-breaking with a fixed number of topics.
    Rsb,
    /// Recurrent stick-breaking that grows its active topics during training.
    RsbTf,
}

impl ConstructionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ConstructionKind::Gsm => "gsm",
            ConstructionKind::Gsb => "gsb",
            ConstructionKind::Rsb => "rsb",
            ConstructionKind::RsbTf => "rsb-tf",
        }
    }

    pub fn is_unbounded(self) -> bool {
        self == ConstructionKind::RsbTf
    }

    pub const ALL: [ConstructionKind; 4] = [
        ConstructionKind::Gsm,
        ConstructionKind::Gsb,
        ConstructionKind::Rsb,
        ConstructionKind::RsbTf,
    ];
}

impl fmt::Display for ConstructionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ConstructionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gsm" => Ok(ConstructionKind::Gsm),
            "gsb" => Ok(ConstructionKind::Gsb),
            "rsb" => Ok(ConstructionKind::Rsb),
            "rsb-tf" => Ok(ConstructionKind::RsbTf),
            other => Err(Error::Contract(format!(
                "unknown construction {other:?}; expected gsm, gsb, rsb or rsb-tf"
            ))),
        }
    }
}

/// Diagonal Gaussian `q(x | d)` with `σ` stored as `ln σ`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GaussianParams {
    /// `B × H`
    pub mu: Var,
    /// `B × H`
    pub log_sigma: Var,
}

/// `x = μ + ε ⊙ σ`. Gradients reach `μ` directly and `σ` scaled by `ε`.
pub fn reparameterize(tape: &mut Tape, q: GaussianParams, epsilon: Var) -> Result<Var> {
    let (mu, ls, eps) = (tape.value(q.mu), tape.value(q.log_sigma), tape.value(epsilon));
    if !mu.same_shape(ls) || !mu.same_shape(eps) {
        return Err(Error::dim("reparameterize", mu.shape(), eps.shape()));
    }
    let sigma = tape.exp(q.log_sigma);
    let noise = tape.mul(epsilon, sigma)?;
    tape.add(q.mu, noise)
}

/// Per-row `KL(N(μ, σ²) ‖ N(0, I)) = ½ Σ_h (μ² + σ² − 1 − ln σ²)` as `B × 1`.
pub fn gaussian_kl(tape: &mut Tape, q: GaussianParams) -> Result<Var> {
    let mu2 = tape.mul(q.mu, q.mu)?;
    let two_ls = tape.scale(q.log_sigma, 2.0);
    let var = tape.exp(two_ls);
    let a = tape.add(mu2, var)?;
    let b = tape.sub(a, two_ls)?;
    let c = tape.affine(b, 0.5, -0.5);
    Ok(tape.sum_rows(c))
}

/// `θ_k = η_k ∏_{j<k}(1 − η_j)` for `k < K`, and `θ_K = ∏_{j<K}(1 − η_j)`.
///
/// `eta` is `B × (K − 1)` and is clamped into `[1e-7, 1 − 1e-7]` first.
pub fn stick_break(tape: &mut Tape, eta: Var, k: usize) -> Result<Var> {
    if k < 2 {
        return Err(Error::Contract(format!("stick breaking needs K >= 2, got {k}")));
    }
    let (_, breaks) = tape.value(eta).dims();
    if breaks != k - 1 {
        return Err(Error::Contract(format!(
            "stick breaking into {k} topics needs {} proportions, got {breaks}",
            k - 1
        )));
    }
    let eta = tape.clamp(eta, ETA_MIN, 1.0 - ETA_MIN);
    let mut remaining: Option<Var> = None;
    let mut pieces = Vec::with_capacity(k);
    for j in 0..k - 1 {
        let e = tape.slice_cols(eta, j, j + 1)?;
        let rest = tape.one_minus(e);
        let (piece, left) = match remaining {
            None => (e, rest),
            Some(r) => (tape.mul(e, r)?, tape.mul(r, rest)?),
        };
        pieces.push(piece);
        remaining = Some(left);
    }
    pieces.push(remaining.expect("at least one break"));
    tape.concat_cols(&pieces)
}

/// `θ = softmax(x · W₁)`; `x` is `B × H`, `W₁` is `H × K`.
pub fn gsm_theta(tape: &mut Tape, x: Var, w1: Var) -> Result<Var> {
    let logits = tape.matmul(x, w1)?;
    tape.softmax_rows(logits)
}

/// `θ = stick_break(sigmoid(x · W₂))`; `W₂` is `H × (K − 1)`.
pub fn gsb_theta(tape: &mut Tape, x: Var, w2: Var) -> Result<Var> {
    let logits = tape.matmul(x, w2)?;
    let k = tape.value(logits).cols() + 1;
    let eta = tape.sigmoid(logits);
    stick_break(tape, eta, k)
}

/// Breaking proportions from the recurrent cell: `η_k = sigmoid(h_k · x)`
/// for `k = 1..breaks`. Returns `B × breaks`.
pub fn rsb_eta(tape: &mut Tape, x: Var, cell: &LstmCell<Var>, breaks: usize) -> Result<Var> {
    let states = cell.unroll_zero_input(tape, breaks)?;
    let states_t = tape.transpose(states);
    let logits = tape.matmul(x, states_t)?;
    Ok(tape.sigmoid(logits))
}

/// `θ = stick_break(rsb_eta(x, K − 1))`.
pub fn rsb_theta(tape: &mut Tape, x: Var, cell: &LstmCell<Var>, k: usize) -> Result<Var> {
    if k < 2 {
        return Err(Error::Contract(format!("stick breaking needs K >= 2, got {k}")));
    }
    let eta = rsb_eta(tape, x, cell, k - 1)?;
    stick_break(tape, eta, k)
}
