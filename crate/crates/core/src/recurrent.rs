//! Single-layer LSTM cell.
//!
//! Two cells drive the recurrent models: one unrolls with zero input to
//! produce stick-breaking states, the other feeds each generated topic
//! vector back in as the next input.
//!
//! Gate pre-activations are packed into one `1 × 4H` row in the order
//! input, forget, output, candidate.

use rand::Rng;

use crate::error::{Error, Result};
use crate::gradcore::{Tape, Tensor, Var};

pub const GATES: usize = 4;
const INIT_STD: f64 = 0.02;
const FORGET_BIAS: f64 = 1.0;

/// LSTM parameters, generic over how each parameter is held: owned
/// tensors, tape variables, or ids into a parameter store.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmCell<P> {
    /// `I × 4H`; absent for a cell that only ever sees zero input.
    pub w_input: Option<P>,
    /// `H × 4H`
    pub w_hidden: P,
    /// `1 × 4H`
    pub bias: P,
    /// Learned initial hidden state, `1 × H`.
    pub h0: P,
    /// Learned initial cell state, `1 × H`.
    pub c0: P,
}

impl<P> LstmCell<P> {
    pub fn map<Q>(&self, mut f: impl FnMut(&P) -> Q) -> LstmCell<Q> {
        LstmCell {
            w_input: self.w_input.as_ref().map(&mut f),
            w_hidden: f(&self.w_hidden),
            bias: f(&self.bias),
            h0: f(&self.h0),
            c0: f(&self.c0),
        }
    }

    /// Parameters paired with stable names, in a fixed order.
    pub fn named(&self) -> Vec<(&'static str, &P)> {
        let mut out = Vec::with_capacity(5);
        if let Some(w) = &self.w_input {
            out.push(("w_input", w));
        }
        out.extend([
            ("w_hidden", &self.w_hidden),
            ("bias", &self.bias),
            ("h0", &self.h0),
            ("c0", &self.c0),
        ]);
        out
    }
}

impl LstmCell<Tensor> {
    /// Gaussian weights (std 0.02), zero biases except the forget gate at
    /// 1.0, zero initial states.
    pub fn init<R: Rng + ?Sized>(input: Option<usize>, hidden: usize, rng: &mut R) -> Self {
        let mut bias = Tensor::zeros(1, GATES * hidden);
        bias.data_mut()[hidden..2 * hidden].fill(FORGET_BIAS);
        LstmCell {
            w_input: input.map(|i| Tensor::randn(i, GATES * hidden, INIT_STD, rng)),
            w_hidden: Tensor::randn(hidden, GATES * hidden, INIT_STD, rng),
            bias,
            h0: Tensor::zeros(1, hidden),
            c0: Tensor::zeros(1, hidden),
        }
    }

    pub fn zeros(input: Option<usize>, hidden: usize) -> Self {
        LstmCell {
            w_input: input.map(|i| Tensor::zeros(i, GATES * hidden)),
            w_hidden: Tensor::zeros(hidden, GATES * hidden),
            bias: Tensor::zeros(1, GATES * hidden),
            h0: Tensor::zeros(1, hidden),
            c0: Tensor::zeros(1, hidden),
        }
    }

    pub fn hidden_size(&self) -> usize {
        self.h0.cols()
    }

    /// Binds every parameter as a trainable leaf.
    pub fn bind(&self, tape: &mut Tape) -> LstmCell<Var> {
        self.map(|t| tape.param(t.clone()))
    }

    /// Binds every parameter as a constant.
    pub fn bind_constant(&self, tape: &mut Tape) -> LstmCell<Var> {
        self.map(|t| tape.constant(t.clone()))
    }
}

/// Hidden and cell state of one sequence.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RecurrentState {
    pub h: Var,
    pub c: Var,
}

impl LstmCell<Var> {
    pub fn initial_state(&self) -> RecurrentState {
        RecurrentState {
            h: self.h0,
            c: self.c0,
        }
    }

    fn hidden(&self, tape: &Tape) -> usize {
        tape.value(self.h0).cols()
    }

    /// One LSTM step:
    /// `c' = f ⊙ c + i ⊙ g`, `h' = o ⊙ tanh(c')`.
    pub fn step(&self, tape: &mut Tape, state: RecurrentState, input: Option<Var>) -> Result<RecurrentState> {
        let hsz = self.hidden(tape);
        let mut z = tape.matmul(state.h, self.w_hidden)?;
        match (input, self.w_input) {
            (Some(x), Some(w)) => {
                let xw = tape.matmul(x, w)?;
                z = tape.add(z, xw)?;
            }
            (None, _) => {}
            (Some(x), None) => {
                return Err(Error::dim("lstm_step", tape.value(x).shape(), &[0, GATES * hsz]));
            }
        }
        let z = tape.add(z, self.bias)?;
        let gate = |tape: &mut Tape, k: usize| tape.slice_cols(z, k * hsz, (k + 1) * hsz);
        let (zi, zf, zo, zg) = (gate(tape, 0)?, gate(tape, 1)?, gate(tape, 2)?, gate(tape, 3)?);
        let i = tape.sigmoid(zi);
        let f = tape.sigmoid(zf);
        let o = tape.sigmoid(zo);
        let g = tape.tanh(zg);

        let keep = tape.mul(f, state.c)?;
        let write = tape.mul(i, g)?;
        let c = tape.add(keep, write)?;
        let tc = tape.tanh(c);
        let h = tape.mul(o, tc)?;
        Ok(RecurrentState { h, c })
    }

    /// Runs `steps` zero-input steps from the learned initial state and
    /// stacks the hidden outputs `h_1..h_steps` into a `steps × H` matrix.
    pub fn unroll_zero_input(&self, tape: &mut Tape, steps: usize) -> Result<Var> {
        if steps == 0 {
            return Err(Error::Contract("unroll of zero steps".into()));
        }
        let mut state = self.initial_state();
        let mut outputs = Vec::with_capacity(steps);
        for _ in 0..steps {
            state = self.step(tape, state, None)?;
            outputs.push(state.h);
        }
        tape.concat_rows(&outputs)
    }

    /// Generates `t_1..t_steps` where each `t_k` is the hidden output of a
    /// step fed `t_{k−1}` as input, starting from `start`. Returns `steps × H`.
    pub fn unroll_topics(&self, tape: &mut Tape, start: Var, steps: usize) -> Result<Var> {
        if steps == 0 {
            return Err(Error::Contract("unroll of zero steps".into()));
        }
        let mut state = self.initial_state();
        let mut prev = start;
        let mut outputs = Vec::with_capacity(steps);
        for _ in 0..steps {
            state = rnn_topic_step(self, tape, state, prev)?;
            prev = state.h;
            outputs.push(prev);
        }
        tape.concat_rows(&outputs)
    }
}

/// Next topic vector: the hidden output of one step fed the previous topic.
pub fn rnn_topic_step(
    cell: &LstmCell<Var>,
    tape: &mut Tape,
    state: RecurrentState,
    t_prev: Var,
) -> Result<RecurrentState> {
    cell.step(tape, state, Some(t_prev))
}
