//! LSTM and GRU cells.
//!
//! Row-vector convention: inputs are `batch × dim` and every gate computes
//! `x·W + h·U + b` with `W: input × hidden`, `U: hidden × hidden`, `b: 1 × hidden`.
//!
//! LSTM (forget gate, no peepholes):
//!
//! ```text
//! i = σ(x·W_i + h·U_i + b_i)      f = σ(x·W_f + h·U_f + b_f)
//! o = σ(x·W_o + h·U_o + b_o)      g = tanh(x·W_g + h·U_g + b_g)
//! c' = f ⊙ c + i ⊙ g              h' = o ⊙ tanh(c')
//! ```
//!
//! GRU (reset gate applied to the previous state inside the candidate):
//!
//! ```text
//! z = σ(x·W_z + h·U_z + b_z)      r = σ(x·W_r + h·U_r + b_r)
//! n = tanh(x·W_n + (r ⊙ h)·U_n + b_n)
//! h' = z ⊙ h + (1 - z) ⊙ n
//! ```
//!
//! so a saturated update gate (`z → 1`) copies the previous state.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::param::{Parameter, Parameterized};
use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    Lstm,
    Gru,
}

impl CellKind {
    pub const ALL: [CellKind; 2] = [CellKind::Lstm, CellKind::Gru];

    pub fn gate_names(self) -> &'static [&'static str] {
        match self {
            CellKind::Lstm => &["input", "forget", "output", "candidate"],
            CellKind::Gru => &["update", "reset", "candidate"],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CellKind::Lstm => "lstm",
            CellKind::Gru => "gru",
        }
    }
}

impl fmt::Display for CellKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CellKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lstm" => Ok(CellKind::Lstm),
            "gru" => Ok(CellKind::Gru),
            other => Err(Error::Config(format!("unknown cell kind `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GateParams {
    pub input_weights: Parameter,
    pub recurrent_weights: Parameter,
    pub bias: Parameter,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellParams {
    kind: CellKind,
    input_dim: usize,
    hidden_dim: usize,
    gates: Vec<GateParams>,
}

impl CellParams {
    /// Uniform `±1/sqrt(hidden_dim)` initialization of every weight and bias.
    pub fn init<R: Rng + ?Sized>(kind: CellKind, input_dim: usize, hidden_dim: usize, prefix: &str, rng: &mut R) -> Result<Self> {
        if input_dim == 0 || hidden_dim == 0 {
            return Err(Error::Config(format!("cell dimensions must be positive ({input_dim}, {hidden_dim})")));
        }
        let gates = kind
            .gate_names()
            .iter()
            .map(|g| GateParams {
                input_weights: Parameter::uniform_fan_in(format!("{prefix}.{g}.input_weights"), input_dim, hidden_dim, hidden_dim, rng),
                recurrent_weights: Parameter::uniform_fan_in(format!("{prefix}.{g}.recurrent_weights"), hidden_dim, hidden_dim, hidden_dim, rng),
                bias: Parameter::uniform_fan_in(format!("{prefix}.{g}.bias"), 1, hidden_dim, hidden_dim, rng),
            })
            .collect();
        Ok(CellParams { kind, input_dim, hidden_dim, gates })
    }

    /// All-zero weights and biases.
    pub fn zeros(kind: CellKind, input_dim: usize, hidden_dim: usize, prefix: &str) -> Self {
        let gates = kind
            .gate_names()
            .iter()
            .map(|g| GateParams {
                input_weights: Parameter::zeros(format!("{prefix}.{g}.input_weights"), input_dim, hidden_dim),
                recurrent_weights: Parameter::zeros(format!("{prefix}.{g}.recurrent_weights"), hidden_dim, hidden_dim),
                bias: Parameter::zeros(format!("{prefix}.{g}.bias"), 1, hidden_dim),
            })
            .collect();
        CellParams { kind, input_dim, hidden_dim, gates }
    }

    pub fn kind(&self) -> CellKind {
        self.kind
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    pub fn gates(&self) -> &[GateParams] {
        &self.gates
    }

    /// Gate by its name in [`CellKind::gate_names`].
    pub fn gate_mut(&mut self, name: &str) -> Option<&mut GateParams> {
        let idx = self.kind.gate_names().iter().position(|g| *g == name)?;
        self.gates.get_mut(idx)
    }

    pub fn bind(&self, tape: &mut Tape) -> BoundCell {
        let gates = self
            .gates
            .iter()
            .map(|g| BoundGate { input_weights: tape.param(&g.input_weights), recurrent_weights: tape.param(&g.recurrent_weights), bias: tape.param(&g.bias) })
            .collect();
        BoundCell { kind: self.kind, input_dim: self.input_dim, hidden_dim: self.hidden_dim, gates }
    }
}

impl Parameterized for CellParams {
    fn parameters(&self) -> Vec<&Parameter> {
        self.gates.iter().flat_map(|g| [&g.input_weights, &g.recurrent_weights, &g.bias]).collect()
    }

    fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        self.gates.iter_mut().flat_map(|g| [&mut g.input_weights, &mut g.recurrent_weights, &mut g.bias]).collect()
    }
}

#[derive(Clone, Copy, Debug)]
struct BoundGate {
    input_weights: Var,
    recurrent_weights: Var,
    bias: Var,
}

/// Cell parameters recorded on a tape.
#[derive(Clone, Debug)]
pub struct BoundCell {
    kind: CellKind,
    input_dim: usize,
    hidden_dim: usize,
    gates: Vec<BoundGate>,
}

impl BoundCell {
    fn check(&self, tape: &Tape, x: Var, states: &[Var]) -> Result<()> {
        let (rows, cols) = tape.value(x).shape();
        if cols != self.input_dim {
            return Err(Error::Config(format!("cell input has width {cols}, expected {}", self.input_dim)));
        }
        for &s in states {
            if tape.value(s).shape() != (rows, self.hidden_dim) {
                let (r, c) = tape.value(s).shape();
                return Err(Error::Config(format!("cell state is {r}x{c}, expected {rows}x{}", self.hidden_dim)));
            }
        }
        Ok(())
    }

    /// `x·W + h·U + b`; the recurrent product is skipped for a zero state.
    fn preactivation(&self, tape: &mut Tape, gate: usize, x: Var, h: Option<Var>) -> Var {
        let g = self.gates[gate];
        let xw = tape.matmul(x, g.input_weights);
        let sum = match h {
            Some(h) => {
                let hu = tape.matmul(h, g.recurrent_weights);
                tape.add(xw, hu)
            }
            None => xw,
        };
        tape.add_row(sum, g.bias)
    }

    /// One LSTM step. `state = None` stands for the all-zero `(h, c)`.
    pub fn lstm_step(&self, tape: &mut Tape, x: Var, state: Option<(Var, Var)>) -> Result<(Var, Var)> {
        if self.kind != CellKind::Lstm {
            return Err(Error::Config("lstm_step called on a GRU cell".into()));
        }
        match state {
            Some((h, c)) => self.check(tape, x, &[h, c])?,
            None => self.check(tape, x, &[])?,
        }
        let h_prev = state.map(|s| s.0);
        let pre_i = self.preactivation(tape, 0, x, h_prev);
        let i = tape.sigmoid(pre_i);
        let pre_o = self.preactivation(tape, 2, x, h_prev);
        let o = tape.sigmoid(pre_o);
        let pre_g = self.preactivation(tape, 3, x, h_prev);
        let g = tape.tanh(pre_g);
        let ig = tape.mul(i, g);
        let c = match state {
            Some((_, c_prev)) => {
                let pre_f = self.preactivation(tape, 1, x, h_prev);
                let f = tape.sigmoid(pre_f);
                let fc = tape.mul(f, c_prev);
                tape.add(fc, ig)
            }
            None => ig,
        };
        let tc = tape.tanh(c);
        let h = tape.mul(o, tc);
        Ok((h, c))
    }

    /// One GRU step. `h_prev = None` stands for the all-zero state.
    pub fn gru_step(&self, tape: &mut Tape, x: Var, h_prev: Option<Var>) -> Result<Var> {
        if self.kind != CellKind::Gru {
            return Err(Error::Config("gru_step called on an LSTM cell".into()));
        }
        match h_prev {
            Some(h) => self.check(tape, x, &[h])?,
            None => self.check(tape, x, &[])?,
        }
        let pre_z = self.preactivation(tape, 0, x, h_prev);
        let z = tape.sigmoid(pre_z);
        let reset_state = match h_prev {
            Some(h) => {
                let pre_r = self.preactivation(tape, 1, x, Some(h));
                let r = tape.sigmoid(pre_r);
                Some(tape.mul(r, h))
            }
            None => None,
        };
        let pre_n = self.preactivation(tape, 2, x, reset_state);
        let n = tape.tanh(pre_n);
        let keep_new = tape.one_minus(z);
        let new_part = tape.mul(keep_new, n);
        Ok(match h_prev {
            Some(h) => {
                let old_part = tape.mul(z, h);
                tape.add(old_part, new_part)
            }
            None => new_part,
        })
    }
}

fn row_input(tape: &mut Tape, v: &[f64]) -> Var {
    tape.constant(Tensor::row_vector(v.to_vec()))
}

/// Single-example LSTM step on plain vectors; returns `(h, c)`.
pub fn lstm_cell_step(params: &CellParams, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut tape = Tape::new();
    let cell = params.bind(&mut tape);
    let (x, h, c) = (row_input(&mut tape, x), row_input(&mut tape, h_prev), row_input(&mut tape, c_prev));
    let (h, c) = cell.lstm_step(&mut tape, x, Some((h, c)))?;
    Ok((tape.value(h).data().to_vec(), tape.value(c).data().to_vec()))
}

/// Single-example GRU step on plain vectors.
pub fn gru_cell_step(params: &CellParams, x: &[f64], h_prev: &[f64]) -> Result<Vec<f64>> {
    let mut tape = Tape::new();
    let cell = params.bind(&mut tape);
    let (x, h) = (row_input(&mut tape, x), row_input(&mut tape, h_prev));
    let h = cell.gru_step(&mut tape, x, Some(h))?;
    Ok(tape.value(h).data().to_vec())
}
