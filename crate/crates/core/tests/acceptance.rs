//! Acceptance checks for the full experiment pipeline. Prints one PASS/FAIL
//! line per criterion and exits non-zero if any criterion fails.
//!
//! Budgets are sized for a single workstation core: twenty seeds for the
//! fast matched pairs, five for the other attribute-value criteria and three
//! for the coordinates experiment.

use std::collections::HashSet;
use std::process::ExitCode;
use std::time::Instant;

use signalgame::harness::{aggregate, run_grid, train_run, Aggregate, RunConfig, RunRecord};
use signalgame::kernel::{finite_difference_check, CellKind, Tape};
use signalgame::languages::{encode_entangled, is_naively_compositional, mi_matrix, EncodedWorld, LanguageKind, LanguageSpec, Message};
use signalgame::receiver::{BatchTargets, HeadKind, ReceiverConfig, ReceiverModel};
use signalgame::tasks::{gen_linear_params, target_linear, TargetOutput, TaskKind};
use signalgame::worlds::{enumerate_attval, split_train_test, AttValInput};

const SEEDS: u64 = 5;
const MATCHED_SEEDS: u64 = 20;
const MATCHED_EPOCHS: usize = 40;
const COORD_SEEDS: u64 = 3;
const LSTM_EPOCHS: usize = 100;
const LINEAR_EPOCHS: usize = 150;
const GRU_MATCHED_EPOCHS: usize = 30;
const GRU_LINEAR_EPOCHS: usize = 120;
const COORD_EPOCHS: usize = 250;

struct Verdict {
    id: &'static str,
    pass: bool,
    detail: String,
}

fn verdict(id: &'static str, pass: bool, detail: String) -> Verdict {
    println!("{} {id}: {detail}", if pass { "PASS" } else { "FAIL" });
    Verdict { id, pass, detail }
}

fn workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Trains seeds `0..seeds` for every configuration and aggregates per configuration.
fn grid(configs: &[RunConfig], seeds: u64) -> Vec<(Aggregate, Vec<RunRecord>)> {
    let jobs: Vec<(RunConfig, u64)> = configs.iter().flat_map(|c| (0..seeds).map(move |s| (c.clone(), s))).collect();
    let records = run_grid(&jobs, workers()).expect("grid runs");
    records.chunks(seeds as usize).map(|rs| (aggregate(rs), rs.to_vec())).collect()
}

fn attval(lang: LanguageKind, task: TaskKind, cell: CellKind, epochs: usize) -> RunConfig {
    let mut c = RunConfig::attval(lang, task, cell);
    c.epochs = epochs;
    c
}

fn acq(a: &Aggregate) -> f64 {
    a.acquisition.map_or(f64::INFINITY, |s| s.mean)
}

fn acq_sem(a: &Aggregate) -> f64 {
    a.acquisition.and_then(|s| s.sem).unwrap_or(0.0)
}

fn test_acc(a: &Aggregate) -> f64 {
    a.final_test_metric.map_or(f64::NAN, |s| s.mean)
}

fn complete(a: &Aggregate) -> bool {
    a.failed == 0 && a.not_reached == 0
}

fn lstm_criteria(out: &mut Vec<Verdict>) {
    use LanguageKind::{Entangled as LE, Identity as LI};
    use TaskKind::{Entangled as TE, Identity as TI};
    let matched = grid(&[attval(LI, TI, CellKind::Lstm, MATCHED_EPOCHS), attval(LE, TE, CellKind::Lstm, MATCHED_EPOCHS)], MATCHED_SEEDS);
    let mismatched = grid(&[attval(LI, TE, CellKind::Lstm, LSTM_EPOCHS), attval(LE, TI, CellKind::Lstm, LSTM_EPOCHS)], SEEDS);
    let (ii, ee, ie, ei) = (&matched[0].0, &matched[1].0, &mismatched[0].0, &mismatched[1].0);

    let ok1 = [ii, ee].iter().all(|a| complete(a) && test_acc(a) >= 0.90 && acq(a) <= 15.0);
    out.push(verdict(
        "C1 matched pairs (LSTM)",
        ok1,
        format!(
            "identity/identity acq {} test {:.3}; entangled/entangled acq {} test {:.3} (need test >= 0.90, acq <= 15)",
            fmt_acq(ii),
            test_acc(ii),
            fmt_acq(ee),
            test_acc(ee)
        ),
    ));

    let matched_mean = (acq(ii) + acq(ee)) / 2.0;
    let ok2 = [ie, ei].iter().all(|a| complete(a) && test_acc(a) <= 0.25 && acq(a) >= 2.0 * matched_mean);
    out.push(verdict(
        "C2 mismatched pairs (LSTM)",
        ok2,
        format!(
            "identity/entangled acq {} test {:.3}; entangled/identity acq {} test {:.3}; matched mean {matched_mean:.2} (need test <= 0.25, acq >= {:.2})",
            fmt_acq(ie),
            test_acc(ie),
            fmt_acq(ei),
            test_acc(ei),
            2.0 * matched_mean
        ),
    ));

    let gap = (acq(ii) - acq(ee)).abs();
    let allowed = 2.0 * (acq_sem(ii) + acq_sem(ee));
    let (ii5, ee5) = (aggregate(&matched[0].1[..SEEDS as usize]), aggregate(&matched[1].1[..SEEDS as usize]));
    out.push(verdict(
        "C7 matched-pair symmetry",
        complete(ii) && complete(ee) && gap <= allowed,
        format!(
            "|{:.2} - {:.2}| = {gap:.2} over {MATCHED_SEEDS} seeds (need <= 2 * SEM sum = {allowed:.2}); first {SEEDS} seeds alone: |{:.2} - {:.2}| = {:.2}, 2 * SEM sum = {:.2}",
            acq(ii),
            acq(ee),
            acq(&ii5),
            acq(&ee5),
            (acq(&ii5) - acq(&ee5)).abs(),
            2.0 * (acq_sem(&ii5) + acq_sem(&ee5))
        ),
    ));
}

fn fmt_acq(a: &Aggregate) -> String {
    let mut s = a.acquisition.map_or("never".into(), |st| format!("{st:.2}"));
    if a.not_reached > 0 {
        s += &format!(" ({} not reached)", a.not_reached);
    }
    if a.failed > 0 {
        s += &format!(" ({} failed)", a.failed);
    }
    s
}

fn linear_criterion(out: &mut Vec<Verdict>) {
    let cfgs = [
        attval(LanguageKind::Identity, TaskKind::Linear, CellKind::Lstm, LINEAR_EPOCHS),
        attval(LanguageKind::Entangled, TaskKind::Linear, CellKind::Lstm, LINEAR_EPOCHS),
    ];
    let res = grid(&cfgs, SEEDS);
    let (li, le) = (&res[0].0, &res[1].0);
    let ratio = acq(li).max(acq(le)) / acq(li).min(acq(le));
    let ok = [li, le].iter().all(|a| complete(a) && test_acc(a) <= 0.05) && ratio <= 2.0;
    out.push(verdict(
        "C3 task-linear (LSTM)",
        ok,
        format!(
            "identity acq {} test {:.3}; entangled acq {} test {:.3}; acq ratio {ratio:.2} (need test <= 0.05, all acquired within {LINEAR_EPOCHS} epochs, ratio <= 2)",
            fmt_acq(li),
            test_acc(li),
            fmt_acq(le),
            test_acc(le)
        ),
    ));
}

fn gru_criterion(out: &mut Vec<Verdict>) {
    use LanguageKind::{Entangled as LE, Identity as LI};
    let matched =
        grid(&[attval(LI, TaskKind::Identity, CellKind::Gru, GRU_MATCHED_EPOCHS), attval(LE, TaskKind::Entangled, CellKind::Gru, GRU_MATCHED_EPOCHS)], SEEDS);
    let linear = grid(&[attval(LI, TaskKind::Linear, CellKind::Gru, GRU_LINEAR_EPOCHS), attval(LE, TaskKind::Linear, CellKind::Gru, GRU_LINEAR_EPOCHS)], SEEDS);
    let (gi, ge) = (&matched[0].0, &matched[1].0);
    let (li, le) = (&linear[0].0, &linear[1].0);
    let matched_mean = (acq(gi) + acq(ge)) / 2.0;
    let linear_mean = (acq(li) + acq(le)) / 2.0;
    let ratio = linear_mean / matched_mean;
    let ok = [gi, ge, li, le].iter().all(|a| complete(a)) && acq(gi) <= 15.0 && acq(ge) <= 15.0 && ratio >= 4.0;
    out.push(verdict(
        "C4 GRU ordering",
        ok,
        format!(
            "matched acq {} / {}; linear acq {} / {}; ratio {ratio:.2} (need matched <= 15, ratio >= 4)",
            fmt_acq(gi),
            fmt_acq(ge),
            fmt_acq(li),
            fmt_acq(le)
        ),
    ));
}

fn mean_final_log(records: &[RunRecord], pick: fn(&RunRecord) -> f64) -> f64 {
    records.iter().map(|r| pick(r).ln()).sum::<f64>() / records.len() as f64
}

fn coordinates_criterion(out: &mut Vec<Verdict>) {
    let cfgs: Vec<RunConfig> = [LanguageKind::Coordinate, LanguageKind::Rotated]
        .into_iter()
        .map(|l| {
            let mut c = RunConfig::coordinates(l);
            c.epochs = COORD_EPOCHS;
            c
        })
        .collect();
    let res = grid(&cfgs, COORD_SEEDS);
    let failed = res.iter().any(|(a, _)| a.failed > 0);
    let train = |r: &RunRecord| r.final_epoch().map_or(f64::NAN, |m| m.train_metric);
    let test = |r: &RunRecord| r.final_epoch().map_or(f64::NAN, |m| m.test_metric);
    let (cr, rr) = (&res[0].1, &res[1].1);
    let d_train = (mean_final_log(cr, train) - mean_final_log(rr, train)).abs();
    let d_test = (mean_final_log(cr, test) - mean_final_log(rr, test)).abs();
    let mse_c = res[0].0.final_test_metric.map_or(f64::NAN, |s| s.mean);
    let mse_r = res[1].0.final_test_metric.map_or(f64::NAN, |s| s.mean);
    let ok = !failed && d_train <= 0.5 && d_test <= 0.5 && mse_c <= 0.025 && mse_r <= 0.025;
    out.push(verdict(
        "C5 coordinates",
        ok,
        format!("log-MSE gap train {d_train:.3} test {d_test:.3} (need <= 0.5); test MSE coordinate {mse_c:.2e} rotated {mse_r:.2e} (need <= 0.025)"),
    ));
}

fn property_suite(out: &mut Vec<Verdict>) {
    let mut failures: Vec<String> = Vec::new();
    let mut check = |name: &str, ok: bool| {
        if !ok {
            failures.push(name.to_string());
        }
    };

    let msgs = [Message::new(0, 3), Message::new(6, 6), Message::new(2, 5), Message::new(3, 0)];
    let classes = [TargetOutput::Discrete(1, 2), TargetOutput::Discrete(6, 0), TargetOutput::Discrete(3, 3), TargetOutput::Discrete(0, 5)];
    let points =
        [TargetOutput::Continuous(0.1, -0.5), TargetOutput::Continuous(0.7, 0.2), TargetOutput::Continuous(-0.3, 0.0), TargetOutput::Continuous(0.0, 0.9)];
    let mut worst: f64 = 0.0;
    for cell in CellKind::ALL {
        for (head, targets) in [(HeadKind::Classify, &classes), (HeadKind::Regress, &points)] {
            for eos in [true, false] {
                let cfg = ReceiverConfig { cell, n_values: 7, embed_dim: 5, hidden_dim: 6, head, eos };
                let mut m = ReceiverModel::init(cfg, 11).expect("model");
                let bt = BatchTargets::from_outputs(targets).expect("targets");
                let err = finite_difference_check(&mut m, |m, tape: &mut Tape| m.batch_loss(tape, &msgs, &bt), 1e-5, usize::MAX, 0).expect("gradcheck");
                worst = worst.max(err);
            }
        }
    }
    check(&format!("gradient check ({worst:.1e})"), worst < 1e-4);

    for n in [3, 31] {
        let grid = enumerate_attval(n).expect("grid");
        let images: HashSet<Message> = grid.iter().map(|&i| encode_entangled(i, n)).collect();
        check(&format!("entangled bijective n={n}"), images.len() == n * n);
    }
    let params = gen_linear_params(31, 7).expect("linear params");
    let images: HashSet<(usize, usize)> = enumerate_attval(31)
        .expect("grid")
        .into_iter()
        .map(|i| match target_linear(i, &params, 31) {
            TargetOutput::Discrete(a, b) => (a, b),
            TargetOutput::Continuous(..) => (usize::MAX, usize::MAX),
        })
        .collect();
    check("linear target bijective", images.len() == 961);

    let world = |kind, n| EncodedWorld::for_language(&LanguageSpec::new(kind, n).expect("spec")).expect("world");
    check("identity compositional", is_naively_compositional(&world(LanguageKind::Identity, 31)).is_some());
    check("entangled not compositional", is_naively_compositional(&world(LanguageKind::Entangled, 31)).is_none());
    check("coordinate grid compositional", is_naively_compositional(&world(LanguageKind::Coordinate, 20)).is_some());

    let log31 = 31f64.log2();
    let mi = mi_matrix(&world(LanguageKind::Identity, 31));
    check("identity MI pattern", (mi[0][0] - log31).abs() < 1e-12 && (mi[1][1] - log31).abs() < 1e-12 && mi[0][1].abs() < 1e-12 && mi[1][0].abs() < 1e-12);
    let mi = mi_matrix(&world(LanguageKind::Entangled, 31));
    check("entangled MI zero", mi.iter().flatten().all(|v| v.abs() < 1e-12));

    let mut zero = ReceiverModel::init(ReceiverConfig::new(CellKind::Lstm, 31, HeadKind::Classify), 3).expect("model");
    zero.zero_head();
    let loss = zero.loss_classify(Message::new(4, 9), TargetOutput::Discrete(17, 2)).expect("loss");
    check(&format!("zero-head loss {loss}"), (loss - 2.0 * 31f64.ln()).abs() < 1e-9);

    let items = enumerate_attval(31).expect("grid");
    let (tr1, te1) = split_train_test(&items, 0.2, 5).expect("split");
    let (tr2, te2) = split_train_test(&items, 0.2, 5).expect("split");
    let train_set: HashSet<AttValInput> = tr1.iter().copied().collect();
    check("split deterministic", tr1 == tr2 && te1 == te2);
    check("split disjoint and covering", te1.iter().all(|i| !train_set.contains(i)) && tr1.len() + te1.len() == items.len() && te1.len() == 192);

    let mut cfg = attval(LanguageKind::Identity, TaskKind::Linear, CellKind::Gru, 2);
    cfg.hidden_dim = 16;
    let a = train_run(&cfg, 4).expect("run");
    let b = train_run(&cfg, 4).expect("run");
    check("same-seed reproducibility", a == b);

    let ok = failures.is_empty();
    let detail = if ok { format!("all property checks hold (worst gradient error {worst:.1e})") } else { format!("failed: {}", failures.join(", ")) };
    out.push(verdict("C6 property suite", ok, detail));
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().collect();
    if args.iter().any(|a| a == "--list") {
        for id in ["C1", "C2", "C3", "C4", "C5", "C6", "C7"] {
            println!("{id}: test");
        }
        return ExitCode::SUCCESS;
    }
    let start = Instant::now();
    let mut verdicts = Vec::new();
    property_suite(&mut verdicts);
    lstm_criteria(&mut verdicts);
    linear_criterion(&mut verdicts);
    gru_criterion(&mut verdicts);
    coordinates_criterion(&mut verdicts);
    verdicts.sort_by_key(|v| v.id);
    let failed: Vec<&Verdict> = verdicts.iter().filter(|v| !v.pass).collect();
    println!("\nacceptance: {}/{} criteria passed in {:.0}s", verdicts.len() - failed.len(), verdicts.len(), start.elapsed().as_secs_f64());
    for v in &failed {
        println!("  FAIL {}: {}", v.id, v.detail);
    }
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
