//! Command-line front end: experiment presets with overrides, artifact
//! emission (per-run CSVs, summary tables, log-MSE curves as text and SVG) and
//! the language analyzer.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::harness::{aggregate, run_grid_with_progress, Aggregate, EpochMetrics, Experiment, RunConfig, RunRecord, Stat};
use crate::kernel::CellKind;
use crate::languages::{analyze, LanguageKind, LanguageSpec};
use crate::tasks::{LinearTaskParams, TaskKind};

#[derive(Parser, Debug)]
#[command(name = "signalgame", version, about = "Signaling-game benchmark: fixed sender languages, trainable recurrent receivers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
#[allow(clippy::large_enum_variant)]
pub enum Command {
    /// Train a preset grid of receivers and write per-run CSVs plus a summary.
    Run(RunArgs),
    /// Print mutual information and the compositionality verdict of a language.
    Analyze(AnalyzeArgs),
}

#[derive(Args, Debug, Clone, Default)]
pub struct RunArgs {
    /// Preset to run: attval or coordinates.
    #[arg(value_name = "PRESET", required_unless_present = "experiment", conflicts_with = "experiment")]
    pub preset: Option<Experiment>,
    /// Same as the positional preset.
    #[arg(long)]
    pub experiment: Option<Experiment>,
    /// Restrict the grid to these languages (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub language: Vec<LanguageKind>,
    /// Restrict the grid to these tasks (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub task: Vec<TaskKind>,
    /// Restrict the grid to these cell kinds (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub cell: Vec<CellKind>,
    #[arg(long)]
    pub n_values: Option<usize>,
    /// Seeds per configuration; seeds run from --first-seed upwards.
    #[arg(long)]
    pub seeds: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub first_seed: u64,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Receiver hidden size.
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Receiver embedding size.
    #[arg(long)]
    pub embedding: Option<usize>,
    /// Held-out fraction of the attribute grid.
    #[arg(long)]
    pub test_fraction: Option<f64>,
    /// Output directory (default: runs/<preset>).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Use one linear task for every seed: "a11,a12,a21,a22,b1,b2".
    #[arg(long)]
    pub pin_linear_params: Option<String>,
    /// Worker threads (default: available processors).
    #[arg(long)]
    pub workers: Option<usize>,
    /// Feed only the two symbols, without the trailing end-of-message step.
    #[arg(long)]
    pub no_eos: bool,
    /// Suppress per-run progress lines.
    #[arg(long, short)]
    pub quiet: bool,
}

#[derive(Args, Debug, Clone)]
pub struct AnalyzeArgs {
    /// identity, entangled, coordinate or rotated.
    pub language: LanguageKind,
    /// Symbols per position (default: 31 for attribute languages, 100 for point languages).
    #[arg(long)]
    pub n_values: Option<usize>,
    /// Rotation angle in radians for the rotated language.
    #[arg(long)]
    pub angle: Option<f64>,
    /// Print the report as JSON.
    #[arg(long)]
    pub json: bool,
}

/// A fully expanded experiment grid.
#[derive(Clone, Debug)]
pub struct Preset {
    pub experiment: Experiment,
    pub languages: Vec<LanguageKind>,
    pub tasks: Vec<TaskKind>,
    pub cells: Vec<CellKind>,
    pub seeds: Vec<u64>,
    pub configs: Vec<RunConfig>,
}

impl Preset {
    /// The unmodified grid for `experiment`.
    pub fn named(experiment: Experiment) -> Preset {
        Preset::from_args(&RunArgs { preset: Some(experiment), ..RunArgs::default() }).expect("default presets are valid")
    }

    /// Expands a preset with filters and overrides.
    pub fn from_args(args: &RunArgs) -> Result<Preset> {
        let experiment = args.preset.or(args.experiment).ok_or_else(|| Error::Usage("no preset given".into()))?;
        let (all_langs, all_tasks, all_cells, default_seeds): (Vec<_>, Vec<_>, Vec<_>, usize) = match experiment {
            Experiment::Attval => (vec![LanguageKind::Identity, LanguageKind::Entangled], TaskKind::ATTVAL.to_vec(), CellKind::ALL.to_vec(), 20),
            Experiment::Coordinates => (vec![LanguageKind::Coordinate, LanguageKind::Rotated], vec![TaskKind::Coordinates], vec![CellKind::Lstm], 10),
        };
        let languages = filter(&all_langs, &args.language, "language", experiment)?;
        let tasks = filter(&all_tasks, &args.task, "task", experiment)?;
        let cells = if args.cell.is_empty() { all_cells } else { dedup(&args.cell) };
        let n_seeds = args.seeds.unwrap_or(default_seeds);
        if n_seeds == 0 {
            return Err(Error::Usage("--seeds must be at least 1".into()));
        }
        let seeds: Vec<u64> = (0..n_seeds as u64).map(|s| args.first_seed + s).collect();

        let mut configs = Vec::new();
        for &cell in &cells {
            for &language in &languages {
                for &task in &tasks {
                    let mut c = match experiment {
                        Experiment::Attval => RunConfig::attval(language, task, cell),
                        Experiment::Coordinates => {
                            let mut c = RunConfig::coordinates(language);
                            c.cell = cell;
                            c
                        }
                    };
                    apply_overrides(&mut c, args)?;
                    c.validate().map_err(usage)?;
                    configs.push(c);
                }
            }
        }
        Ok(Preset { experiment, languages, tasks, cells, seeds, configs })
    }

    /// Every `(config, seed)` run, grouped by configuration.
    pub fn jobs(&self) -> Vec<(RunConfig, u64)> {
        self.configs.iter().flat_map(|c| self.seeds.iter().map(move |&s| (c.clone(), s))).collect()
    }
}

fn dedup<T: PartialEq + Copy>(items: &[T]) -> Vec<T> {
    let mut out = Vec::new();
    for &i in items {
        if !out.contains(&i) {
            out.push(i);
        }
    }
    out
}

fn filter<T: PartialEq + Copy + std::fmt::Display>(all: &[T], wanted: &[T], what: &str, experiment: Experiment) -> Result<Vec<T>> {
    if wanted.is_empty() {
        return Ok(all.to_vec());
    }
    let wanted = dedup(wanted);
    match wanted.iter().find(|w| !all.contains(w)) {
        Some(bad) => Err(Error::Usage(format!("{what} `{bad}` is not part of the {experiment} preset"))),
        None => Ok(all.iter().copied().filter(|a| wanted.contains(a)).collect()),
    }
}

fn usage(e: Error) -> Error {
    match e {
        Error::Config(m) | Error::Input(m) => Error::Usage(m),
        other => other,
    }
}

fn apply_overrides(c: &mut RunConfig, args: &RunArgs) -> Result<()> {
    if let Some(v) = args.n_values {
        c.n_values = v;
    }
    if let Some(v) = args.epochs {
        c.epochs = v;
    }
    if let Some(v) = args.lr {
        c.lr = v;
    }
    if let Some(v) = args.batch_size {
        c.batch_size = v;
    }
    if let Some(v) = args.hidden {
        c.hidden_dim = v;
    }
    if let Some(v) = args.embedding {
        c.embed_dim = v;
    }
    if let Some(v) = args.test_fraction {
        if !(v > 0.0 && v < 1.0) {
            return Err(Error::Usage(format!("--test-fraction must lie in (0, 1), got {v}")));
        }
        c.test_fraction = v;
    }
    if let Some(spec) = &args.pin_linear_params {
        if c.task == TaskKind::Linear {
            c.linear_params = Some(LinearTaskParams::parse(spec, c.n_values).map_err(usage)?);
        }
    }
    c.eos = !args.no_eos;
    Ok(())
}

/// Metadata written next to each run's CSV.
#[derive(Serialize)]
struct RunMeta<'a> {
    label: String,
    seed: u64,
    config: &'a RunConfig,
    linear_params: Option<&'a LinearTaskParams>,
    acquisition_epoch: Option<usize>,
    failure: Option<&'a str>,
    final_epoch: Option<&'a EpochMetrics>,
}

#[derive(Serialize)]
struct SummaryFile<'a> {
    experiment: Experiment,
    seeds: &'a [u64],
    runs: usize,
    aggregates: &'a [Aggregate],
    #[serde(skip_serializing_if = "Option::is_none")]
    final_log_mse: Option<Vec<FinalLogMse>>,
}

#[derive(Serialize)]
struct FinalLogMse {
    language: String,
    train: Option<f64>,
    test: Option<f64>,
}

/// What a finished preset produced.
#[derive(Debug)]
pub struct PresetOutcome {
    pub out_dir: PathBuf,
    pub records: Vec<RunRecord>,
    pub aggregates: Vec<Aggregate>,
    pub summary: String,
}

impl PresetOutcome {
    pub fn failed_runs(&self) -> usize {
        self.records.iter().filter(|r| r.failure.is_some()).count()
    }
}

/// Executes a preset grid and writes all artifacts to `out_dir`.
pub fn run_preset(preset: &Preset, out_dir: &Path, workers: usize, quiet: bool) -> Result<PresetOutcome> {
    let jobs = preset.jobs();
    let total = jobs.len();
    let done = AtomicUsize::new(0);
    let progress = |r: &RunRecord| {
        let k = done.fetch_add(1, Ordering::Relaxed) + 1;
        if !quiet {
            eprintln!("[{k}/{total}] {}", progress_line(r));
        }
    };
    let records = run_grid_with_progress(&jobs, workers, &progress)?;

    let aggregates: Vec<Aggregate> = records.chunks(preset.seeds.len()).map(aggregate).collect();
    write_run_files(&records, &out_dir.join("runs"))?;
    let curves = (preset.experiment == Experiment::Coordinates).then(|| log_mse_curves(&records));
    let summary = match &curves {
        None => format_attval_summary(preset, &records, &aggregates),
        Some(c) => format_coordinates_summary(preset, &aggregates, c),
    };
    fs::write(out_dir.join("summary.txt"), &summary)?;
    let file = SummaryFile {
        experiment: preset.experiment,
        seeds: &preset.seeds,
        runs: records.len(),
        aggregates: &aggregates,
        final_log_mse: curves.as_ref().map(|c| c.final_values().into_iter().map(|(language, train, test)| FinalLogMse { language, train, test }).collect()),
    };
    write_json(&out_dir.join("summary.json"), &file)?;
    if let Some(c) = &curves {
        if c.skipped > 0 {
            eprintln!("warning: {} non-positive MSE values left out of the log curves", c.skipped);
        }
        let mut f = BufWriter::new(File::create(out_dir.join("curves.txt"))?);
        c.write_columns(&mut f)?;
        f.flush()?;
        fs::write(out_dir.join("curves.svg"), c.render_svg("log MSE by epoch", "log MSE"))?;
    }
    Ok(PresetOutcome { out_dir: out_dir.to_path_buf(), records, aggregates, summary })
}

fn progress_line(r: &RunRecord) -> String {
    let mut s = format!("{} seed {}", r.config.label(), r.seed);
    if let Some(f) = &r.failure {
        let _ = write!(s, ": FAILED ({f})");
        return s;
    }
    if let Some(m) = r.final_epoch() {
        match r.config.experiment {
            Experiment::Attval => {
                let acq = r.acquisition_epoch.map_or("never".into(), |e| e.to_string());
                let _ = write!(s, ": acquisition {acq}, test accuracy {:.3}", m.test_metric);
            }
            Experiment::Coordinates => {
                let _ = write!(s, ": train MSE {:.3e}, test MSE {:.3e}", m.train_metric, m.test_metric);
            }
        }
    }
    s
}

fn run_stem(r: &RunRecord) -> String {
    format!("{}_seed{}", r.config.label(), r.seed)
}

fn write_run_files(records: &[RunRecord], dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    for r in records {
        let stem = run_stem(r);
        let mut f = BufWriter::new(File::create(dir.join(format!("{stem}.csv")))?);
        r.write_csv(&mut f)?;
        f.flush()?;
        let meta = RunMeta {
            label: r.config.label(),
            seed: r.seed,
            config: &r.config,
            linear_params: r.linear_params.as_ref(),
            acquisition_epoch: r.acquisition_epoch,
            failure: r.failure.as_deref(),
            final_epoch: r.final_epoch(),
        };
        write_json(&dir.join(format!("{stem}.json")), &meta)?;
    }
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut f, value).map_err(|e| Error::Format(e.to_string()))?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(())
}

fn cell_text(stat: Option<Stat>, precision: usize, agg: &Aggregate, show_not_reached: bool) -> String {
    let mut s = match stat {
        Some(st) => format!("{st:.precision$}"),
        None => "-".to_string(),
    };
    if show_not_reached && agg.not_reached > 0 {
        let _ = write!(s, " ({} n/r)", agg.not_reached);
    }
    if agg.failed > 0 {
        let _ = write!(s, " [{} failed]", agg.failed);
    }
    s
}

/// Grid layout: one block per cell kind, languages as rows, tasks as
/// columns, `mean ± SEM` in each cell.
pub fn format_attval_summary(preset: &Preset, records: &[RunRecord], aggregates: &[Aggregate]) -> String {
    let c0 = &preset.configs[0];
    let mut s = String::new();
    let _ = writeln!(
        s,
        "attval: n_values {}, {} seed(s), {} epochs, lr {}, batch {}, test fraction {}",
        c0.n_values,
        preset.seeds.len(),
        c0.epochs,
        c0.lr,
        c0.batch_size,
        c0.test_fraction
    );
    let find = |cell: CellKind, lang: LanguageKind, task: TaskKind| {
        preset.configs.iter().position(|c| c.cell == cell && c.language == lang && c.task == task).map(|i| &aggregates[i])
    };
    let width = 22;
    let table = |s: &mut String, title: &str, pick: &dyn Fn(&Aggregate) -> String| {
        let _ = writeln!(s, "\n{title}");
        for &cell in &preset.cells {
            let mut header = format!("{:<18}", cell.to_string().to_uppercase());
            for t in &preset.tasks {
                let _ = write!(header, "{:<width$}", format!("task-{t}"));
            }
            let _ = writeln!(s, "{}", header.trim_end());
            for &lang in &preset.languages {
                let _ = write!(s, "{:<18}", format!("lang-{lang}"));
                let mut row = String::new();
                for &t in &preset.tasks {
                    let text = find(cell, lang, t).map_or("-".into(), pick);
                    let _ = write!(row, "{text:<width$}");
                }
                let _ = writeln!(s, "{}", row.trim_end());
            }
        }
    };
    table(&mut s, "Epochs to 100% training accuracy (mean ± SEM; n/r = never reached)", &|a| cell_text(a.acquisition, 2, a, true));
    table(&mut s, "Test accuracy at the final epoch (mean ± SEM)", &|a| cell_text(a.final_test_metric, 3, a, false));

    let linear: Vec<&RunRecord> = records.iter().filter(|r| r.linear_params.is_some()).collect();
    if !linear.is_empty() {
        let _ = writeln!(s, "\nLinear task parameters");
        for r in linear {
            let p = r.linear_params.as_ref().expect("filtered");
            let _ = writeln!(s, "  {} lang-{} seed {}: {p}", r.config.cell, r.config.language, r.seed);
        }
    }
    s
}

fn sci(stat: Option<Stat>) -> String {
    match stat {
        Some(Stat { mean, sem: Some(e), .. }) => format!("{mean:.3e} ± {e:.1e}"),
        Some(Stat { mean, sem: None, .. }) => format!("{mean:.3e}"),
        None => "-".into(),
    }
}

pub fn format_coordinates_summary(preset: &Preset, aggregates: &[Aggregate], curves: &Curves) -> String {
    let c0 = &preset.configs[0];
    let mut s = String::new();
    let _ = writeln!(
        s,
        "coordinates: n_values {}, {} seed(s), {} epochs, lr {}, batch {}, {} train / {} test points",
        c0.n_values,
        preset.seeds.len(),
        c0.epochs,
        c0.lr,
        c0.batch_size,
        c0.n_train,
        c0.n_test
    );
    let _ = writeln!(s, "\nFinal-epoch MSE (mean ± SEM) and mean log MSE");
    let _ = writeln!(s, "{:<22}{:<24}{:<24}{:<14}test log", "", "train MSE", "test MSE", "train log");
    let finals = curves.final_values();
    for (i, c) in preset.configs.iter().enumerate() {
        let a = &aggregates[i];
        let name = format!("{} lang-{}", c.cell.to_string().to_uppercase(), c.language);
        let (tr, te) = finals.iter().find(|(n, _, _)| *n == c.language.to_string()).map_or((None, None), |(_, a, b)| (*a, *b));
        let fmt = |v: Option<f64>| v.map_or("-".into(), |v| format!("{v:.3}"));
        let mut line = format!("{name:<22}{:<24}{:<24}{:<14}{:<14}", sci(a.final_train_metric), sci(a.final_test_metric), fmt(tr), fmt(te));
        if a.failed > 0 {
            let _ = write!(line, " [{} failed]", a.failed);
        }
        let _ = writeln!(s, "{}", line.trim_end());
    }
    s
}

/// Mean-of-log curves, one train and one test series per language.
#[derive(Clone, Debug, PartialEq)]
pub struct Curves {
    pub epochs: usize,
    pub series: Vec<Series>,
    /// Points dropped because the MSE was not positive.
    pub skipped: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub language: String,
    pub split: &'static str,
    pub values: Vec<Option<f64>>,
}

impl Series {
    pub fn name(&self) -> String {
        format!("{}_{}", self.language, self.split)
    }
}

/// Averages `ln(MSE)` over the runs of each language, epoch by epoch.
/// Languages appear in first-seen order.
pub fn log_mse_curves(records: &[RunRecord]) -> Curves {
    let mut languages: Vec<LanguageKind> = Vec::new();
    for r in records {
        if !languages.contains(&r.config.language) {
            languages.push(r.config.language);
        }
    }
    let epochs = records.iter().map(|r| r.epochs.len()).max().unwrap_or(0);
    let mut skipped = 0;
    let mut series = Vec::new();
    for lang in languages {
        let runs: Vec<&RunRecord> = records.iter().filter(|r| r.config.language == lang).collect();
        for (split, pick) in [("train", (|m: &EpochMetrics| m.train_metric) as fn(&EpochMetrics) -> f64), ("test", |m: &EpochMetrics| m.test_metric)] {
            let values = (0..epochs)
                .map(|e| {
                    let logs: Vec<f64> = runs
                        .iter()
                        .filter_map(|r| r.epochs.get(e).map(pick))
                        .filter(|&v| {
                            let ok = v > 0.0 && v.is_finite();
                            if !ok {
                                skipped += 1;
                            }
                            ok
                        })
                        .map(f64::ln)
                        .collect();
                    (!logs.is_empty()).then(|| logs.iter().sum::<f64>() / logs.len() as f64)
                })
                .collect();
            series.push(Series { language: lang.to_string(), split, values });
        }
    }
    Curves { epochs, series, skipped }
}

impl Curves {
    /// `(language, final train, final test)` taken from the last epoch.
    pub fn final_values(&self) -> Vec<(String, Option<f64>, Option<f64>)> {
        let last =
            |lang: &str, split: &str| self.series.iter().find(|s| s.language == lang && s.split == split).and_then(|s| s.values.last().copied().flatten());
        let mut out: Vec<(String, Option<f64>, Option<f64>)> = Vec::new();
        for s in &self.series {
            if !out.iter().any(|(l, _, _)| *l == s.language) {
                out.push((s.language.clone(), last(&s.language, "train"), last(&s.language, "test")));
            }
        }
        out
    }

    /// Whitespace-separated columns: a header, then one row per epoch.
    pub fn write_columns<W: Write>(&self, mut out: W) -> Result<()> {
        let names: Vec<String> = self.series.iter().map(Series::name).collect();
        writeln!(out, "epoch {}", names.join(" "))?;
        for e in 0..self.epochs {
            let row: Vec<String> = self.series.iter().map(|s| s.values[e].map_or("nan".into(), |v| format!("{v:.6}"))).collect();
            writeln!(out, "{} {}", e + 1, row.join(" "))?;
        }
        Ok(())
    }

    /// Hand-written SVG 1.1 line plot with axes, ticks and a legend.
    pub fn render_svg(&self, title: &str, y_label: &str) -> String {
        const W: f64 = 720.0;
        const H: f64 = 440.0;
        let (left, right, top, bottom) = (70.0, 170.0, 40.0, 50.0);
        let pw = W - left - right;
        let ph = H - top - bottom;

        let finite: Vec<f64> = self.series.iter().flat_map(|s| s.values.iter().flatten().copied()).collect();
        let (mut lo, mut hi) = finite.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        if finite.is_empty() {
            (lo, hi) = (0.0, 1.0);
        }
        if hi - lo < 1e-9 {
            lo -= 0.5;
            hi += 0.5;
        }
        let y_ticks = nice_ticks(lo, hi);
        let (lo, hi) = (lo.min(y_ticks[0]), hi.max(*y_ticks.last().expect("ticks")));
        let x_max = self.epochs.max(1) as f64;
        let x_ticks: Vec<f64> = nice_ticks(0.0, x_max).into_iter().filter(|&t| t <= x_max).collect();
        let px = |epoch: f64| left + epoch / x_max * pw;
        let py = |v: f64| top + (hi - v) / (hi - lo) * ph;

        let mut s = String::new();
        let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#, left + pw / 2.0, escape(title));
        for &t in &y_ticks {
            let y = py(t);
            let _ = writeln!(s, r##"<line x1="{left}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#e0e0e0"/>"##, left + pw);
            let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, left - 6.0, y + 4.0, tick_label(t));
        }
        for &t in &x_ticks {
            let x = px(t);
            let _ = writeln!(s, r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/>"#, top + ph, top + ph + 5.0);
            let _ = writeln!(s, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, top + ph + 18.0, tick_label(t));
        }
        let _ = writeln!(s, r#"<path d="M{left},{top} V{:.2} H{:.2}" fill="none" stroke="black"/>"#, top + ph, left + pw);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">epoch</text>"#, left + pw / 2.0, H - 10.0);
        let _ = writeln!(
            s,
            r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">{}</text>"#,
            top + ph / 2.0,
            top + ph / 2.0,
            escape(y_label)
        );

        let palette = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
        let mut langs: Vec<&str> = Vec::new();
        for (i, series) in self.series.iter().enumerate() {
            if !langs.contains(&series.language.as_str()) {
                langs.push(&series.language);
            }
            let color = palette[(langs.len() - 1) % palette.len()];
            let dash = if series.split == "test" { r#" stroke-dasharray="6 4""# } else { "" };
            let mut segment: Vec<String> = Vec::new();
            let flush = |segment: &mut Vec<String>, s: &mut String| {
                if !segment.is_empty() {
                    let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.8"{dash} points="{}"/>"#, segment.join(" "));
                    segment.clear();
                }
            };
            for (e, v) in series.values.iter().enumerate() {
                match v {
                    Some(v) => segment.push(format!("{:.2},{:.2}", px((e + 1) as f64), py(*v))),
                    None => flush(&mut segment, &mut s),
                }
            }
            flush(&mut segment, &mut s);
            let ly = top + 10.0 + 20.0 * i as f64;
            let lx = left + pw + 15.0;
            let _ = writeln!(s, r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="1.8"{dash}/>"#, lx + 28.0);
            let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, lx + 34.0, ly + 4.0, escape(&format!("{} {}", series.language, series.split)));
        }
        s.push_str("</svg>\n");
        s
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn tick_label(v: f64) -> String {
    let r = (v * 1e6).round() / 1e6;
    if r == r.trunc() {
        format!("{}", r as i64)
    } else {
        format!("{r}")
    }
}

/// Roughly five evenly spaced round values covering `[lo, hi]`.
pub fn nice_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let raw = (hi - lo) / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|&s| s >= raw).unwrap_or(10.0 * mag);
    let first = (lo / step).floor() * step;
    let mut ticks = Vec::new();
    let mut k = 0;
    loop {
        let t = first + k as f64 * step;
        ticks.push(t);
        if t >= hi - 1e-12 * step.abs() {
            break;
        }
        k += 1;
    }
    ticks
}

/// Default analyzer alphabet size for a language.
pub fn default_n_values(language: LanguageKind) -> usize {
    if language.is_discrete() {
        31
    } else {
        100
    }
}

fn run_analyze(args: &AnalyzeArgs) -> Result<String> {
    let n = args.n_values.unwrap_or_else(|| default_n_values(args.language));
    let mut spec = LanguageSpec::new(args.language, n).map_err(usage)?;
    if let Some(a) = args.angle {
        spec = spec.with_angle(a).map_err(usage)?;
    }
    let report = analyze(&spec)?;
    if args.json {
        serde_json::to_string_pretty(&report).map(|j| j + "\n").map_err(|e| Error::Format(e.to_string()))
    } else {
        Ok(format!("{report}\n"))
    }
}

/// Process exit status for an error: 1 for bad input, 2 for failures while
/// running or writing results.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Usage(_) | Error::Config(_) | Error::Input(_) => 1,
        Error::Diverged { .. } | Error::Io(_) | Error::Format(_) => 2,
    }
}

fn execute(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Analyze(a) => {
            print!("{}", run_analyze(&a)?);
            Ok(0)
        }
        Command::Run(args) => {
            let preset = Preset::from_args(&args)?;
            let out = args.out.clone().unwrap_or_else(|| PathBuf::from("runs").join(preset.experiment.name()));
            fs::create_dir_all(&out)?;
            let workers = args.workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
            let outcome = run_preset(&preset, &out, workers, args.quiet)?;
            print!("{}", outcome.summary);
            println!("\nartifacts written to {}", out.display());
            let failed = outcome.failed_runs();
            if failed > 0 {
                eprintln!("error: {failed} run(s) stopped on a non-finite loss");
                return Ok(2);
            }
            Ok(0)
        }
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("signalgame: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> std::result::Result<Cli, clap::Error> {
        Cli::try_parse_from(std::iter::once("signalgame").chain(args.iter().copied()))
    }

    fn run_args(line: &str) -> RunArgs {
        match parse(&line.split_whitespace().collect::<Vec<_>>()).unwrap().command {
            Command::Run(r) => r,
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn grid_cardinalities() {
        assert_eq!(Preset::named(Experiment::Attval).jobs().len(), 240);
        assert_eq!(Preset::named(Experiment::Coordinates).jobs().len(), 20);
        let p = Preset::from_args(&run_args("run attval --seeds 5")).unwrap();
        assert_eq!((p.jobs().len(), p.configs.len()), (60, 12));
        let p = Preset::from_args(&run_args("run attval --cell gru --task linear")).unwrap();
        assert_eq!(p.jobs().len(), 40);
        assert!(p.configs.iter().all(|c| c.cell == CellKind::Gru && c.task == TaskKind::Linear));
    }

    #[test]
    fn experiment_flag_is_an_alternative_to_the_positional() {
        let p = Preset::from_args(&run_args("run --experiment coordinates --seeds 2")).unwrap();
        assert_eq!(p.experiment, Experiment::Coordinates);
        assert!(parse(&["run"]).is_err());
        assert!(parse(&["run", "attval", "--experiment", "attval"]).is_err());
    }

    #[test]
    fn overrides_reach_every_config() {
        let p = Preset::from_args(&run_args("run attval --language identity --n-values 7 --epochs 3 --lr 0.5 --batch-size 4 --hidden 8 --embedding 6 --test-fraction 0.3 --no-eos --pin-linear-params 1,1,0,1,2,3")).unwrap();
        assert_eq!(p.configs.len(), 6);
        for c in &p.configs {
            assert_eq!((c.n_values, c.epochs, c.batch_size, c.hidden_dim, c.embed_dim), (7, 3, 4, 8, 6));
            assert_eq!((c.lr, c.test_fraction, c.eos), (0.5, 0.3, false));
            assert_eq!(c.linear_params.is_some(), c.task == TaskKind::Linear);
        }
    }

    #[test]
    fn bad_filters_and_values_are_usage_errors() {
        for args in [
            "run attval --language rotated",
            "run coordinates --task identity",
            "run attval --seeds 0",
            "run attval --test-fraction 1.5",
            "run attval --pin-linear-params 1,0,0,1,0,0",
            "run attval --epochs 0",
        ] {
            let e = Preset::from_args(&run_args(args)).unwrap_err();
            assert_eq!(exit_code(&e), 1, "{args}: {e}");
        }
        assert!(parse(&["run", "attval", "--bogus"]).is_err());
        assert!(parse(&["run", "nope"]).is_err());
    }

    fn record(language: LanguageKind, series: &[(f64, f64)]) -> RunRecord {
        RunRecord {
            config: RunConfig::coordinates(language),
            seed: 0,
            linear_params: None,
            epochs: series
                .iter()
                .enumerate()
                .map(|(i, &(tr, te))| EpochMetrics { epoch: i + 1, train_loss: tr, train_metric: tr, test_loss: te, test_metric: te, test_per_output: None })
                .collect(),
            acquisition_epoch: None,
            failure: None,
        }
    }

    #[test]
    fn curves_average_logs_per_language() {
        let recs = [
            record(LanguageKind::Coordinate, &[(1.0, 1.0), (0.5, 0.25)]),
            record(LanguageKind::Coordinate, &[(1.0, 1.0), (2.0, 0.25)]),
            record(LanguageKind::Rotated, &[(0.1, 0.1), (0.1, 0.0)]),
        ];
        let c = log_mse_curves(&recs);
        assert_eq!(c.epochs, 2);
        assert_eq!(c.series.len(), 4);
        assert_eq!(c.series.iter().map(Series::name).collect::<Vec<_>>(), ["coordinate_train", "coordinate_test", "rotated_train", "rotated_test"]);
        assert_eq!(c.series[0].values, vec![Some(0.0), Some(0.0)]);
        assert!((c.series[1].values[1].unwrap() - 0.25f64.ln()).abs() < 1e-15);
        assert_eq!(c.series[3].values[1], None);
        assert_eq!(c.skipped, 1);
        let mut buf = Vec::new();
        c.write_columns(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 2);
        assert!(text.lines().nth(2).unwrap().ends_with("nan"));
    }

    #[test]
    fn constant_series_renders_a_horizontal_line() {
        let c = log_mse_curves(&[record(LanguageKind::Coordinate, &[(0.5, 0.5); 4])]);
        let svg = c.render_svg("t", "log MSE");
        let line = svg.lines().find(|l| l.starts_with("<polyline")).unwrap();
        let pts = line.split("points=\"").nth(1).unwrap().trim_end_matches("\"/>");
        let ys: Vec<&str> = pts.split(' ').map(|p| p.split(',').nth(1).unwrap()).collect();
        assert_eq!(ys.len(), 4);
        assert!(ys.iter().all(|y| *y == ys[0]));
    }

    #[test]
    fn svg_has_four_curves_axes_and_legend() {
        let recs =
            [record(LanguageKind::Coordinate, &[(1.0, 2.0), (0.5, 0.7), (0.1, 0.2)]), record(LanguageKind::Rotated, &[(1.5, 2.0), (0.3, 0.4), (0.01, 0.02)])];
        let svg = log_mse_curves(&recs).render_svg("log MSE by epoch", "log MSE");
        assert!(svg.starts_with("<?xml"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<polyline").count(), 4);
        for label in ["coordinate train", "coordinate test", "rotated train", "rotated test", ">epoch<", ">log MSE<"] {
            assert!(svg.contains(label), "{label}");
        }
    }

    #[test]
    fn ticks_cover_the_range() {
        let t = nice_ticks(-9.3, -0.2);
        assert!(t[0] <= -9.3 && *t.last().unwrap() >= -0.2);
        assert_eq!(t, vec![-10.0, -8.0, -6.0, -4.0, -2.0, 0.0]);
        assert_eq!(nice_ticks(0.0, 250.0), vec![0.0, 50.0, 100.0, 150.0, 200.0, 250.0]);
    }

    #[test]
    fn analyze_reports() {
        let a = |lang, n| run_analyze(&AnalyzeArgs { language: lang, n_values: n, angle: None, json: false }).unwrap();
        assert!(a(LanguageKind::Identity, Some(31)).contains("verdict       compositional"));
        assert!(a(LanguageKind::Entangled, Some(31)).contains("not compositional"));
        assert!(a(LanguageKind::Entangled, Some(4)).contains("not a bijection"));
        let json = run_analyze(&AnalyzeArgs { language: LanguageKind::Identity, n_values: Some(5), angle: None, json: true }).unwrap();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["n_values"], 5);
    }
}
