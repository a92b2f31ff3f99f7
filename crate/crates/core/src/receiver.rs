//! The trainable listener.
//!
//! Both symbols are embedded and fed through the recurrent cell from a zero
//! state, followed (by default) by a learned end-of-message vector as a third
//! step. The final hidden state goes through a linear head. The classification head emits `2·n_v` logits (one block of `n_v` per
//! output); the regression head emits two reals.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{argmax, mse, softmax_nll, CellKind, CellParams, Parameter, Parameterized, Tape, Tensor, Var};
use crate::languages::Message;
use crate::seeding::{self, Stream};
use crate::tasks::TargetOutput;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadKind {
    Classify,
    Regress,
}

impl fmt::Display for HeadKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HeadKind::Classify => "classify",
            HeadKind::Regress => "regress",
        })
    }
}

impl FromStr for HeadKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "classify" => Ok(HeadKind::Classify),
            "regress" => Ok(HeadKind::Regress),
            other => Err(Error::Format(format!("unknown head kind `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReceiverConfig {
    pub cell: CellKind,
    pub n_values: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub head: HeadKind,
    /// Read an end-of-message step after the two symbols.
    pub eos: bool,
}

impl ReceiverConfig {
    pub fn new(cell: CellKind, n_values: usize, head: HeadKind) -> Self {
        ReceiverConfig { cell, n_values, embed_dim: 50, hidden_dim: 100, head, eos: true }
    }

    pub fn output_dim(&self) -> usize {
        match self.head {
            HeadKind::Classify => 2 * self.n_values,
            HeadKind::Regress => 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_values < 2 || self.embed_dim == 0 || self.hidden_dim == 0 {
            return Err(Error::Config(format!(
                "receiver dimensions must be positive with n_values >= 2 (n_values={}, embed={}, hidden={})",
                self.n_values, self.embed_dim, self.hidden_dim
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReceiverModel {
    config: ReceiverConfig,
    embedding: Parameter,
    eos: Parameter,
    cell: CellParams,
    head_weights: Parameter,
    head_bias: Parameter,
}

/// Training or evaluation targets for a batch.
#[derive(Clone, Debug)]
pub enum BatchTargets {
    Classes(Vec<usize>, Vec<usize>),
    Points(Tensor),
}

impl BatchTargets {
    pub fn from_outputs(outputs: &[TargetOutput]) -> Result<Self> {
        match outputs.first() {
            None => Err(Error::Input("empty target batch".into())),
            Some(TargetOutput::Discrete(..)) => {
                let mut o1 = Vec::with_capacity(outputs.len());
                let mut o2 = Vec::with_capacity(outputs.len());
                for t in outputs {
                    match *t {
                        TargetOutput::Discrete(a, b) => {
                            o1.push(a);
                            o2.push(b);
                        }
                        TargetOutput::Continuous(..) => return Err(Error::Input("mixed target kinds in batch".into())),
                    }
                }
                Ok(BatchTargets::Classes(o1, o2))
            }
            Some(TargetOutput::Continuous(..)) => {
                let mut data = Vec::with_capacity(2 * outputs.len());
                for t in outputs {
                    match *t {
                        TargetOutput::Continuous(x, y) => data.extend([x, y]),
                        TargetOutput::Discrete(..) => return Err(Error::Input("mixed target kinds in batch".into())),
                    }
                }
                Ok(BatchTargets::Points(Tensor::from_vec(outputs.len(), 2, data)))
            }
        }
    }
}

/// Held-out or training-set evaluation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    /// Mean per-sample loss (summed NLL of both heads, or MSE).
    pub loss: f64,
    /// Both outputs correct. `None` for regression.
    pub accuracy: Option<f64>,
    /// Mean of the two per-output accuracies. `None` for regression.
    pub per_output_accuracy: Option<f64>,
}

/// Fraction of samples whose two argmax predictions both match, and the mean
/// per-output accuracy. Row `r` of `logits` holds `[block 1 | block 2]`.
pub fn score_logits(logits: &Tensor, n_values: usize, o1: &[usize], o2: &[usize]) -> (f64, f64) {
    let rows = logits.rows();
    if rows == 0 {
        return (0.0, 0.0);
    }
    let (mut both, mut single) = (0usize, 0usize);
    for r in 0..rows {
        let row = logits.row(r);
        let ok1 = argmax(&row[..n_values]) == o1[r];
        let ok2 = argmax(&row[n_values..2 * n_values]) == o2[r];
        both += (ok1 && ok2) as usize;
        single += ok1 as usize + ok2 as usize;
    }
    (both as f64 / rows as f64, single as f64 / (2 * rows) as f64)
}

const EVAL_CHUNK: usize = 1024;

impl ReceiverModel {
    /// Seeded uniform `±1/sqrt(fan_in)` initialization. The embedding (and the
    /// end-of-message vector) is read as a linear map from one-hot symbols with
    /// fan-in `n_v`; cell and head weights use the hidden size as fan-in.
    pub fn init(config: ReceiverConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = seeding::rng(seed, Stream::Init);
        let emb = |name: &str, rows: usize, rng: &mut _| Parameter::uniform_fan_in(name, rows, config.embed_dim, config.n_values, rng);
        let embedding = emb("embedding", config.n_values, &mut rng);
        let eos = emb("embedding.eos", 1, &mut rng);
        let cell = CellParams::init(config.cell, config.embed_dim, config.hidden_dim, "cell", &mut rng)?;
        let out = config.output_dim();
        let head_weights = Parameter::uniform_fan_in("head.weights", config.hidden_dim, out, config.hidden_dim, &mut rng);
        let head_bias = Parameter::uniform_fan_in("head.bias", 1, out, config.hidden_dim, &mut rng);
        Ok(ReceiverModel { config, embedding, eos, cell, head_weights, head_bias })
    }

    pub fn config(&self) -> &ReceiverConfig {
        &self.config
    }

    pub fn embedding(&self) -> &Parameter {
        &self.embedding
    }

    pub fn cell(&self) -> &CellParams {
        &self.cell
    }

    pub fn head_weights_mut(&mut self) -> &mut Parameter {
        &mut self.head_weights
    }

    pub fn head_bias_mut(&mut self) -> &mut Parameter {
        &mut self.head_bias
    }

    /// Sets both head parameters to zero.
    pub fn zero_head(&mut self) {
        self.head_weights.values_mut().fill(0.0);
        self.head_bias.values_mut().fill(0.0);
    }

    fn check_messages(&self, messages: &[Message]) -> Result<()> {
        let n = self.config.n_values;
        match messages.iter().find(|m| m.s1 >= n || m.s2 >= n) {
            Some(m) => Err(Error::Input(format!("message ({}, {}) uses a symbol outside [0, {n})", m.s1, m.s2))),
            None => Ok(()),
        }
    }

    /// Records the forward pass for a batch; the result is `batch × output_dim`.
    pub fn forward_batch(&self, tape: &mut Tape, messages: &[Message]) -> Result<Var> {
        self.check_messages(messages)?;
        let table = tape.param(&self.embedding);
        let first: Vec<usize> = messages.iter().map(|m| m.s1).collect();
        let second: Vec<usize> = messages.iter().map(|m| m.s2).collect();
        let x1 = tape.gather_rows(table, &first)?;
        let x2 = tape.gather_rows(table, &second)?;
        let mut steps = vec![x1, x2];
        if self.config.eos {
            let eos = tape.param(&self.eos);
            steps.push(tape.gather_rows(eos, &vec![0; messages.len()])?);
        }
        let cell = self.cell.bind(tape);
        let h = match self.config.cell {
            CellKind::Lstm => {
                let mut state = None;
                for x in steps {
                    state = Some(cell.lstm_step(tape, x, state)?);
                }
                state.expect("at least two steps").0
            }
            CellKind::Gru => {
                let mut h = None;
                for x in steps {
                    h = Some(cell.gru_step(tape, x, h)?);
                }
                h.expect("at least two steps")
            }
        };
        let w = tape.param(&self.head_weights);
        let b = tape.param(&self.head_bias);
        let hw = tape.matmul(h, w);
        Ok(tape.add_row(hw, b))
    }

    /// Mean per-sample loss of a batch. Classification sums the two heads' NLLs.
    pub fn batch_loss(&self, tape: &mut Tape, messages: &[Message], targets: &BatchTargets) -> Result<Var> {
        let out = self.forward_batch(tape, messages)?;
        let n = self.config.n_values;
        match (self.config.head, targets) {
            (HeadKind::Classify, BatchTargets::Classes(o1, o2)) => {
                let l1 = tape.slice_cols(out, 0, n);
                let l2 = tape.slice_cols(out, n, 2 * n);
                let nll1 = tape.cross_entropy(l1, o1)?;
                let nll2 = tape.cross_entropy(l2, o2)?;
                Ok(tape.add(nll1, nll2))
            }
            (HeadKind::Regress, BatchTargets::Points(t)) => tape.mse(out, t),
            _ => Err(Error::Usage(format!("targets do not match the {} head", self.config.head))),
        }
    }

    fn require_head(&self, head: HeadKind) -> Result<()> {
        if self.config.head != head {
            return Err(Error::Usage(format!("operation needs a {head} head, model has {}", self.config.head)));
        }
        Ok(())
    }

    pub fn forward_classify(&self, m: Message) -> Result<(Vec<f64>, Vec<f64>)> {
        self.require_head(HeadKind::Classify)?;
        let mut tape = Tape::new();
        let out = self.forward_batch(&mut tape, &[m])?;
        let row = tape.value(out).row(0);
        let n = self.config.n_values;
        Ok((row[..n].to_vec(), row[n..].to_vec()))
    }

    pub fn forward_regress(&self, m: Message) -> Result<(f64, f64)> {
        self.require_head(HeadKind::Regress)?;
        let mut tape = Tape::new();
        let out = self.forward_batch(&mut tape, &[m])?;
        let row = tape.value(out).row(0);
        Ok((row[0], row[1]))
    }

    pub fn loss_classify(&self, m: Message, target: TargetOutput) -> Result<f64> {
        self.require_head(HeadKind::Classify)?;
        let TargetOutput::Discrete(o1, o2) = target else {
            return Err(Error::Input("classification needs a discrete target".into()));
        };
        let n = self.config.n_values;
        if o1 >= n || o2 >= n {
            return Err(Error::Input(format!("target ({o1}, {o2}) out of range for n_v = {n}")));
        }
        let mut tape = Tape::new();
        let loss = self.batch_loss(&mut tape, &[m], &BatchTargets::Classes(vec![o1], vec![o2]))?;
        Ok(tape.value(loss).data()[0])
    }

    /// Loss and (for classification) accuracies over a whole dataset.
    pub fn evaluate(&self, messages: &[Message], targets: &[TargetOutput]) -> Result<Evaluation> {
        if messages.len() != targets.len() {
            return Err(Error::Input(format!("{} messages vs {} targets", messages.len(), targets.len())));
        }
        if messages.is_empty() {
            return Ok(Evaluation::default());
        }
        let n = self.config.n_values;
        let (mut loss, mut both, mut single) = (0.0, 0.0, 0.0);
        for (ms, ts) in messages.chunks(EVAL_CHUNK).zip(targets.chunks(EVAL_CHUNK)) {
            let mut tape = Tape::new();
            let out = self.forward_batch(&mut tape, ms)?;
            let out = tape.value(out);
            let weight = ms.len() as f64;
            match (self.config.head, BatchTargets::from_outputs(ts)?) {
                (HeadKind::Classify, BatchTargets::Classes(o1, o2)) => {
                    for r in 0..out.rows() {
                        let row = out.row(r);
                        loss += softmax_nll(&row[..n], o1[r])? + softmax_nll(&row[n..], o2[r])?;
                    }
                    let (b, s) = score_logits(out, n, &o1, &o2);
                    both += b * weight;
                    single += s * weight;
                }
                (HeadKind::Regress, BatchTargets::Points(t)) => loss += mse(out.data(), t.data())? * weight,
                _ => return Err(Error::Usage(format!("targets do not match the {} head", self.config.head))),
            }
        }
        let total = messages.len() as f64;
        let classify = self.config.head == HeadKind::Classify;
        Ok(Evaluation { loss: loss / total, accuracy: classify.then(|| both / total), per_output_accuracy: classify.then(|| single / total) })
    }

    /// Strict accuracy: a sample counts only if both outputs are right.
    pub fn predict_and_score(&self, messages: &[Message], targets: &[TargetOutput]) -> Result<f64> {
        self.require_head(HeadKind::Classify)?;
        Ok(self.evaluate(messages, targets)?.accuracy.unwrap_or(0.0))
    }

    pub fn write_checkpoint<W: Write>(&self, mut out: W) -> Result<()> {
        let c = &self.config;
        writeln!(out, "{CHECKPOINT_MAGIC}")?;
        writeln!(out, "cell {} n_values {} embed {} hidden {} head {} eos {}", c.cell, c.n_values, c.embed_dim, c.hidden_dim, c.head, c.eos)?;
        for p in self.parameters() {
            let (r, cols) = p.shape();
            writeln!(out, "param {} {} {}", p.name(), r, cols)?;
            let line: Vec<String> = p.values().data().iter().map(|v| v.to_string()).collect();
            writeln!(out, "{}", line.join(" "))?;
        }
        Ok(())
    }

    pub fn read_checkpoint<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let mut next = || -> Result<String> { lines.next().ok_or_else(|| Error::Format("unexpected end of checkpoint".into()))?.map_err(Error::from) };
        if next()? != CHECKPOINT_MAGIC {
            return Err(Error::Format("not a receiver checkpoint (bad header)".into()));
        }
        let header = next()?;
        let f: Vec<&str> = header.split_whitespace().collect();
        if f.len() != 12 || f[0] != "cell" || f[2] != "n_values" || f[4] != "embed" || f[6] != "hidden" || f[8] != "head" || f[10] != "eos" {
            return Err(Error::Format(format!("bad config line `{header}`")));
        }
        let num = |s: &str| s.parse::<usize>().map_err(|e| Error::Format(format!("bad number `{s}`: {e}")));
        let config = ReceiverConfig {
            cell: f[1].parse().map_err(|_| Error::Format(format!("bad cell `{}`", f[1])))?,
            n_values: num(f[3])?,
            embed_dim: num(f[5])?,
            hidden_dim: num(f[7])?,
            head: f[9].parse()?,
            eos: f[11].parse().map_err(|_| Error::Format(format!("bad eos flag `{}`", f[11])))?,
        };
        let mut model = ReceiverModel::init(config, 0)?;
        for p in model.parameters_mut() {
            let decl = next()?;
            let d: Vec<&str> = decl.split_whitespace().collect();
            if d.len() != 4 || d[0] != "param" || d[1] != p.name() {
                return Err(Error::Format(format!("expected parameter `{}`, found `{decl}`", p.name())));
            }
            if (num(d[2])?, num(d[3])?) != p.shape() {
                return Err(Error::Format(format!("shape mismatch for `{}`", p.name())));
            }
            let values = next()?
                .split_whitespace()
                .map(|s| s.parse::<f64>().map_err(|e| Error::Format(format!("bad value `{s}`: {e}"))))
                .collect::<Result<Vec<f64>>>()?;
            if values.len() != p.values().len() {
                return Err(Error::Format(format!("wrong value count for `{}`", p.name())));
            }
            p.values_mut().data_mut().copy_from_slice(&values);
        }
        Ok(model)
    }
}

const CHECKPOINT_MAGIC: &str = "signalgame-receiver v1";

impl Parameterized for ReceiverModel {
    fn parameters(&self) -> Vec<&Parameter> {
        let mut v = vec![&self.embedding];
        if self.config.eos {
            v.push(&self.eos);
        }
        v.extend(self.cell.parameters());
        v.push(&self.head_weights);
        v.push(&self.head_bias);
        v
    }

    fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        let mut v = vec![&mut self.embedding];
        if self.config.eos {
            v.push(&mut self.eos);
        }
        v.extend(self.cell.parameters_mut());
        v.push(&mut self.head_weights);
        v.push(&mut self.head_bias);
        v
    }
}
