//! WebAssembly bindings for the browser demo: analyze a sender language,
//! inspect its message map, and train a receiver one epoch at a time.
//!
//! Each binding wraps a plain Rust function returning JSON so the logic can be
//! tested natively.

use serde::Serialize;
use signalgame::harness::{prepare_data, EpochMetrics, RunConfig, Trainer};
use signalgame::kernel::CellKind;
use signalgame::languages::{analyze, EncodedWorld, LanguageKind, LanguageSpec};
use signalgame::tasks::TaskKind;
use wasm_bindgen::prelude::*;

fn to_json<T: Serialize>(value: &T) -> Result<String, String> {
    serde_json::to_string(value).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct AnalysisView {
    report: signalgame::languages::CompositionalityReport,
    compositional: bool,
    text: String,
}

/// Compositionality report for `language` with `n_values` symbols, as JSON.
pub fn analyze_json(language: &str, n_values: usize) -> Result<String, String> {
    let kind: LanguageKind = language.parse().map_err(|e: signalgame::Error| e.to_string())?;
    let spec = LanguageSpec::new(kind, n_values).map_err(|e| e.to_string())?;
    let report = analyze(&spec).map_err(|e| e.to_string())?;
    to_json(&AnalysisView { compositional: report.compositional(), text: report.to_string(), report })
}

#[derive(Serialize)]
struct MessageMap {
    n_values: usize,
    inputs: Vec<[usize; 2]>,
    messages: Vec<[usize; 2]>,
}

/// Every input cell of the language's world with the message it receives.
pub fn message_map_json(language: &str, n_values: usize) -> Result<String, String> {
    let kind: LanguageKind = language.parse().map_err(|e: signalgame::Error| e.to_string())?;
    let spec = LanguageSpec::new(kind, n_values).map_err(|e| e.to_string())?;
    let world = EncodedWorld::for_language(&spec).map_err(|e| e.to_string())?;
    to_json(&MessageMap {
        n_values,
        inputs: world.inputs.iter().map(|i| [i.a1, i.a2]).collect(),
        messages: world.messages.iter().map(|m| m.symbols()).collect(),
    })
}

/// Attribute-value training session driven from the page.
pub struct Session {
    trainer: Trainer,
}

impl Session {
    pub fn new(language: &str, task: &str, cell: &str, n_values: usize, hidden: usize, seed: u64) -> Result<Session, String> {
        let err = |e: signalgame::Error| e.to_string();
        let language: LanguageKind = language.parse().map_err(err)?;
        let task: TaskKind = task.parse().map_err(err)?;
        let cell: CellKind = cell.parse().map_err(err)?;
        let mut config = RunConfig::attval(language, task, cell);
        config.n_values = n_values;
        config.hidden_dim = hidden;
        config.epochs = usize::MAX;
        let data = prepare_data(&config, seed).map_err(err)?;
        Ok(Session { trainer: Trainer::new(config, seed, data).map_err(err)? })
    }

    /// Trains one epoch; `None` after divergence.
    pub fn step(&mut self) -> Result<Option<EpochMetrics>, String> {
        self.trainer.step().map_err(|e| e.to_string())
    }

    pub fn linear_params(&self) -> Option<String> {
        self.trainer.data().linear_params.map(|p| p.to_string())
    }
}

fn js_err(e: String) -> JsError {
    JsError::new(&e)
}

#[wasm_bindgen]
pub fn analyze_language(language: &str, n_values: usize) -> Result<String, JsError> {
    analyze_json(language, n_values).map_err(js_err)
}

#[wasm_bindgen]
pub fn message_map(language: &str, n_values: usize) -> Result<String, JsError> {
    message_map_json(language, n_values).map_err(js_err)
}

#[wasm_bindgen]
pub struct TrainingSession {
    inner: Session,
}

#[wasm_bindgen]
impl TrainingSession {
    #[wasm_bindgen(constructor)]
    pub fn new(language: &str, task: &str, cell: &str, n_values: usize, hidden: usize, seed: u32) -> Result<TrainingSession, JsError> {
        Session::new(language, task, cell, n_values, hidden, seed.into()).map(|inner| TrainingSession { inner }).map_err(js_err)
    }

    /// Metrics of the next epoch as JSON, or `null` once training diverged.
    pub fn step(&mut self) -> Result<Option<String>, JsError> {
        match self.inner.step().map_err(js_err)? {
            Some(m) => to_json(&m).map(Some).map_err(js_err),
            None => Ok(None),
        }
    }

    pub fn linear_params(&self) -> Option<String> {
        self.inner.linear_params()
    }
}
