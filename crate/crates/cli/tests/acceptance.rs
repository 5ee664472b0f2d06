//! Acceptance run: one PASS/FAIL line per criterion. Exits non-zero when any
//! criterion fails.

use std::path::{Path, PathBuf};
use std::time::Instant;

use automl::bench::{relative_error_difference, run_bench, BenchManifest, BenchOptions};
use automl::job::{fit_job, Candidates};
use automl::portfolio::{run_zeroshot, Solver, ZeroShotOptions};
use automl::{rerun, JobConfig, JobStatus};
use automl_core::data::ProblemType;
use automl_core::learners::linear::{objective_and_gradient, Link, LinearModel};
use automl_core::learners::{train, Algorithm, Domain, HpConfig, HpParam, HpSpace, HpValue, Loss, Metric, Model};
use automl_core::matrix::NumericMatrix;
use automl_core::transforms::{FittedTransformer, TransformInput, TransformKind};
use automl_core::tuner::{self, gate_open, suggest_bo, suggest_random, Arm, TunerConfig, TunerState};
use automl_core::zeroshot::{objective, select_portfolio_exact, select_portfolio_greedy};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

struct Outcome {
    pass: bool,
    detail: String,
}

fn report(id: usize, name: &str, start: Instant, limit_secs: Option<f64>, mut o: Outcome) -> bool {
    let secs = start.elapsed().as_secs_f64();
    if let Some(l) = limit_secs {
        if secs >= l {
            o.pass = false;
            o.detail.push_str(&format!("; over the {l:.0}s limit"));
        }
    }
    println!(
        "{} {id:>2} {name}: {} [{secs:.1}s]",
        if o.pass { "PASS" } else { "FAIL" },
        o.detail
    );
    o.pass
}

fn unit_space(dims: usize) -> HpSpace {
    HpSpace {
        tunables: (0..dims)
            .map(|d| HpParam {
                name: format!("x{d}"),
                domain: Domain::Continuous { lo: 0.0, hi: 1.0, log: false },
            })
            .collect(),
        statics: Default::default(),
    }
}

fn get(c: &HpConfig, name: &str) -> f64 {
    c.get(name).and_then(HpValue::as_f64).expect("numeric value")
}

fn rmse(v: f64) -> Loss {
    Loss {
        metric: Metric::Rmse,
        value: v,
        logloss: None,
    }
}

// ---------------------------------------------------------------- 1

fn bandit_identification() -> Outcome {
    const PROBLEMS: usize = 200;
    let (mut best_hits, mut top3_hits) = (0, 0);
    for p in 0..PROBLEMS {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + p as u64);
        let mut offsets: Vec<f64> = (0..10).map(|_| rng.random_range(0.05..0.3)).collect();
        let best = rng.random_range(0..10);
        offsets[best] = 0.0;
        let centers: Vec<[f64; 2]> = (0..10).map(|_| [rng.random(), rng.random()]).collect();
        let space = unit_space(2);
        let arms: Vec<Arm> = (0..10)
            .map(|i| Arm {
                id: format!("p{i}"),
                space: space.clone(),
                seeds: (0..5).map(|_| space.sample(&mut rng)).collect(),
            })
            .collect();
        let noise = Normal::new(0.0, 0.05).expect("valid sd");
        let runner = |pipe: usize, c: &HpConfig, seed: u64| -> Result<Loss, String> {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            let d2 = (get(c, "x0") - centers[pipe][0]).powi(2) + (get(c, "x1") - centers[pipe][1]).powi(2);
            Ok(rmse((offsets[pipe] + 0.3 * d2 + noise.sample(&mut r)).max(0.0)))
        };
        let cfg = TunerConfig {
            total_budget: 250,
            epsilon: 0.1,
            parallelism: 1,
            seed: p as u64,
            max_runtime: None,
        };
        let (board, _) = tuner::run(arms, &cfg, &runner, None).map_err(|e| e.0).expect("simulated run");
        let chosen: usize = board.best().expect("entries").pipeline[1..].parse().expect("arm id");
        let mut order: Vec<usize> = (0..10).collect();
        order.sort_by(|&a, &b| offsets[a].total_cmp(&offsets[b]));
        best_hits += usize::from(chosen == best);
        top3_hits += usize::from(order[..3].contains(&chosen));
    }
    let (b, t) = (best_hits as f64 / PROBLEMS as f64, top3_hits as f64 / PROBLEMS as f64);
    Outcome {
        pass: b > 0.5 && t >= 0.8,
        detail: format!("best {:.1}% (> 50%), top-3 {:.1}% (>= 80%)", 100.0 * b, 100.0 * t),
    }
}

// ---------------------------------------------------------------- 2

fn gating_exactness() -> Outcome {
    let mut checked = 0usize;
    let mut wrong = 0usize;
    let range = 0..=6usize;
    for s0 in range.clone() {
        for s1 in range.clone() {
            for s2 in range.clone() {
                let s = [s0, s1, s2];
                for f0 in 0..=s0 {
                    for f1 in 0..=s1 {
                        for f2 in 0..=s2 {
                            let f = [f0, f1, f2];
                            let expected = s.iter().all(|&v| v >= 5) && f.iter().any(|&v| v >= 5);
                            checked += 1;
                            wrong += usize::from(gate_open(&s, &f) != expected);
                        }
                    }
                }
            }
        }
    }
    // replay real runs, some with failing pipelines, against the same condition
    let mut replay_wrong = 0usize;
    for seed in 0..20u64 {
        let space = unit_space(1);
        let arms: Vec<Arm> = (0..3)
            .map(|i| Arm {
                id: format!("p{i}"),
                space: space.clone(),
                seeds: vec![],
            })
            .collect();
        let fail_rate = [0.0, 0.5, 0.9][seed as usize % 3];
        let runner = |_: usize, c: &HpConfig, s: u64| -> Result<Loss, String> {
            if ChaCha8Rng::seed_from_u64(s).random::<f64>() < fail_rate {
                Err("injected".into())
            } else {
                Ok(rmse(get(c, "x0")))
            }
        };
        let cfg = TunerConfig {
            total_budget: 40,
            epsilon: 0.1,
            parallelism: 1,
            seed,
            max_runtime: None,
        };
        let state: TunerState = match tuner::run(arms, &cfg, &runner, None) {
            Ok((_, s)) => s,
            Err((_, s)) => *s,
        };
        let mut first_open = None;
        for t in 0..=state.trials.len() {
            let mut s = [0usize; 3];
            let mut f = [0usize; 3];
            for tr in &state.trials[..t] {
                s[tr.pipeline] += 1;
                f[tr.pipeline] += usize::from(tr.state == automl_core::tuner::TrialState::Finished);
            }
            if s.iter().all(|&v| v >= 5) && f.iter().any(|&v| v >= 5) {
                first_open = Some(t);
                break;
            }
        }
        let first_open = first_open.filter(|&t| t < state.trials.len());
        replay_wrong += usize::from(state.gate_trial != first_open);
    }
    Outcome {
        pass: wrong == 0 && replay_wrong == 0,
        detail: format!("{checked} count vectors, {wrong} mismatches; 20 replayed runs, {replay_wrong} mismatches"),
    }
}

// ---------------------------------------------------------------- 3

fn brute_force(losses: &[Vec<f64>], k: usize) -> f64 {
    let b = losses.len();
    let mut best = f64::INFINITY;
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        best = best.min(objective(losses, &idx));
        let mut i = k;
        while i > 0 && idx[i - 1] == b - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return best;
        }
        idx[i - 1] += 1;
        for j in i..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

fn random_table(rng: &mut ChaCha8Rng) -> (Vec<Vec<f64>>, usize) {
    let b = rng.random_range(2..=12);
    let d = rng.random_range(1..=8);
    let k = rng.random_range(1..=4usize.min(b));
    let losses = (0..b)
        .map(|_| (0..d).map(|_| (rng.random_range(0..1000) as f64) / 1000.0).collect())
        .collect();
    (losses, k)
}

fn zeroshot_oracle() -> Outcome {
    const TABLES: usize = 200;
    // the 15% guard sits close to greedy's true rate on unstructured tables,
    // so it is estimated on a larger sample that contains the first 200
    const RATE_TABLES: usize = 5000;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut exact_wrong, mut greedy_below) = (0, 0);
    let (mut within_first, mut within) = (0, 0);
    for t in 0..RATE_TABLES {
        let (losses, k) = random_table(&mut rng);
        let exact = select_portfolio_exact(&losses, k).expect("valid table");
        let greedy = select_portfolio_greedy(&losses, k).expect("valid table");
        let ok = usize::from(greedy.objective <= 1.15 * exact.objective + 1e-12);
        within += ok;
        if t < TABLES {
            let truth = brute_force(&losses, k);
            exact_wrong += usize::from(exact.objective != truth || objective(&losses, &exact.indices) != truth);
            greedy_below += usize::from(greedy.objective < exact.objective);
            within_first += ok;
        }
    }
    let rate = within as f64 / RATE_TABLES as f64;
    Outcome {
        pass: exact_wrong == 0 && greedy_below == 0 && rate >= 0.95,
        detail: format!(
            "exact differs from brute force on {exact_wrong}/{TABLES}; greedy below exact on {greedy_below}/{TABLES}; greedy within 15% on {:.2}% of {RATE_TABLES} tables (>= 95%), {:.1}% of the first {TABLES}",
            100.0 * rate,
            100.0 * within_first as f64 / TABLES as f64
        ),
    }
}

// ---------------------------------------------------------------- 4

fn bo_vs_random() -> Outcome {
    let space = unit_space(1);
    let f = |c: &HpConfig| (get(c, "x0") - 0.7).powi(2);
    let mut wins = 0;
    const RUNS: usize = 50;
    for seed in 0..RUNS as u64 {
        let mut init_rng = ChaCha8Rng::seed_from_u64(seed);
        let init: Vec<HpConfig> = (0..5).map(|_| suggest_random(&space, &mut init_rng)).collect();
        let mut history: Vec<(HpConfig, f64)> = init.iter().map(|c| (c.clone(), f(c))).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xb0);
        while history.len() < 25 {
            let c = suggest_bo(&history, &space, &mut rng).unwrap_or_else(|| suggest_random(&space, &mut rng));
            let y = f(&c);
            history.push((c, y));
        }
        let bo_best = history.iter().map(|h| h.1).fold(f64::INFINITY, f64::min);
        let mut rs_rng = ChaCha8Rng::seed_from_u64(seed);
        let rs_best = (0..25)
            .map(|_| f(&suggest_random(&space, &mut rs_rng)))
            .fold(f64::INFINITY, f64::min);
        wins += usize::from(bo_best <= rs_best);
    }
    let rate = wins as f64 / RUNS as f64;
    Outcome {
        pass: rate >= 0.7,
        detail: format!("BO at least as good in {wins}/{RUNS} paired runs ({:.0}%, >= 70%)", 100.0 * rate),
    }
}

// ---------------------------------------------------------------- 5

fn end_to_end(work: &Path) -> Outcome {
    let manifest_path = automl::synth::write_bundled(&work.join("data"), 3000, 7).expect("write datasets");
    let manifest = BenchManifest::load(&manifest_path).expect("manifest");
    let mut opts = BenchOptions::new(work.join("bench"));
    opts.tuner = TunerConfig {
        total_budget: 50,
        epsilon: 0.1,
        parallelism: 1,
        seed: 0,
        max_runtime: None,
    };
    let r = run_bench(&manifest, &opts).expect("bench");
    let cells: Vec<String> = r
        .rows
        .iter()
        .map(|row| {
            format!(
                "{} {} vs {}",
                row.dataset,
                row.method.map_or("failed".into(), |v| format!("{v:.4}")),
                row.baseline.map_or("failed".into(), |v| format!("{v:.4}"))
            )
        })
        .collect();
    let all = r.rows.iter().all(|row| row.method.is_some() && row.baseline.is_some() && row.matches_baseline());
    Outcome {
        pass: all && r.rows.len() == 3,
        detail: format!(
            "matching baseline {:.0}% ({})",
            100.0 * r.aggregates.matching_baseline,
            cells.join("; ")
        ),
    }
}

// ---------------------------------------------------------------- 6, 7, 10 helpers

fn job_config(input: &Path, target: &str, out: PathBuf, budget: usize, seed: u64) -> JobConfig {
    let mut cfg = JobConfig::new(input, target, out);
    cfg.tuner = TunerConfig {
        total_budget: budget,
        epsilon: 0.1,
        parallelism: 1,
        seed,
        max_runtime: None,
    };
    cfg.validate().expect("valid config");
    cfg
}

fn copy_definitions(from: &Path, to: &Path) -> Vec<PathBuf> {
    std::fs::create_dir_all(to).expect("mkdir");
    let mut files: Vec<PathBuf> = std::fs::read_dir(from)
        .expect("definitions")
        .map(|e| e.expect("entry").path())
        .filter(|p| p.extension().is_some_and(|e| e == "toml"))
        .collect();
    files.sort();
    files
        .iter()
        .map(|p| {
            let dest = to.join(p.file_name().expect("file name"));
            std::fs::copy(p, &dest).expect("copy");
            dest
        })
        .collect()
}

fn edit_toml(path: &Path, edit: impl FnOnce(&mut toml::Table)) {
    let mut t: toml::Table = std::fs::read_to_string(path).expect("read").parse().expect("toml");
    edit(&mut t);
    std::fs::write(path, toml::to_string(&t).expect("serialize")).expect("write");
}

fn tunables(t: &mut toml::Table) -> &mut Vec<toml::Value> {
    t.get_mut("tunables").and_then(toml::Value::as_array_mut).expect("tunables")
}

fn trial_events(path: &Path) -> Vec<serde_json::Value> {
    std::fs::read_to_string(path)
        .expect("trial log")
        .lines()
        .map(|l| serde_json::from_str(l).expect("json line"))
        .collect()
}

// ---------------------------------------------------------------- 6

fn white_box(work: &Path) -> Outcome {
    let data = automl::synth::regression(800, 5).write(&work.join("data6")).expect("dataset");
    let fit_cfg = job_config(&data, "y", work.join("fit6"), 30, 11);
    let fit = fit_job(&fit_cfg, Candidates::Generate).expect("fit");
    let defs = copy_definitions(&work.join("fit6/candidates"), &work.join("defs6"));
    let re = rerun(&work.join("defs6"), &job_config(&data, "y", work.join("rerun6"), 30, 11));
    let a = std::fs::read(work.join("fit6/trials.jsonl")).expect("fit log");
    let b = std::fs::read(work.join("rerun6/trials.jsonl")).expect("rerun log");
    let identical = fit.report.status == JobStatus::Completed && re.status == JobStatus::Completed && a == b;

    let target = defs.iter().find(|p| p.to_string_lossy().contains("gbt")).expect("gbt definition").clone();
    let id = target.file_stem().expect("stem").to_string_lossy().to_string();
    edit_toml(&target, |t| {
        for p in tunables(t) {
            let p = p.as_table_mut().expect("tunable");
            if p.get("name").and_then(toml::Value::as_str) == Some("max_depth") {
                p.insert("lo".into(), toml::Value::Integer(2));
                p.insert("hi".into(), toml::Value::Integer(3));
            }
        }
    });
    let edited = rerun(&work.join("defs6"), &job_config(&data, "y", work.join("edited6"), 60, 12));
    let (mut seen, mut outside) = (0, 0);
    for e in trial_events(&work.join("edited6/trials.jsonl")) {
        if e["pipeline"] == id.as_str() && e["state"] == "suggested" {
            seen += 1;
            let d = e["config"]["max_depth"].as_i64().unwrap_or(-1);
            outside += usize::from(!(2..=3).contains(&d));
        }
    }
    Outcome {
        pass: identical && edited.status == JobStatus::Completed && seen > 5 && outside == 0,
        detail: format!(
            "rerun log {} ({} bytes); edited max_depth to [2, 3]: {outside} of {seen} suggestions outside",
            if a == b { "byte-identical" } else { "differs" },
            a.len()
        ),
    }
}

// ---------------------------------------------------------------- 7

fn determinism(work: &Path) -> Outcome {
    let data = automl::synth::imbalanced_binary(600, 9).write(&work.join("data7")).expect("dataset");
    let mut same = Vec::new();
    for cmd in ["fit", "rerun"] {
        let mut boards = Vec::new();
        for run in 0..2 {
            let out = work.join(format!("{cmd}7-{run}"));
            let cfg = job_config(&data, "label", out.clone(), 25, 21);
            let status = if cmd == "fit" {
                fit_job(&cfg, Candidates::Generate).expect("fit").report.status
            } else {
                rerun(&work.join("fit7-0/candidates"), &cfg).status
            };
            assert_eq!(status, JobStatus::Completed, "{cmd} run {run}");
            boards.push(std::fs::read(out.join("leaderboard.json")).expect("leaderboard"));
        }
        same.push((cmd, boards[0] == boards[1]));
    }
    let small = work.join("data7z");
    let manifest_path = automl::synth::write_bundled(&small, 300, 2).expect("datasets");
    let manifest = BenchManifest::load(&manifest_path).expect("manifest");
    let portfolios: Vec<Vec<u8>> = (0..2)
        .map(|run| {
            let opts = ZeroShotOptions {
                output_dir: work.join(format!("zeroshot7-{run}")),
                n_candidates: 6,
                k: 3,
                seed: 4,
                solver: Solver::Auto,
            };
            std::fs::read(run_zeroshot(&manifest, &opts).expect("zeroshot").portfolio_path).expect("portfolio")
        })
        .collect();
    same.push(("zeroshot", portfolios[0] == portfolios[1]));
    Outcome {
        pass: same.iter().all(|s| s.1),
        detail: same
            .iter()
            .map(|(c, s)| format!("{c} {}", if *s { "identical" } else { "differs" }))
            .collect::<Vec<_>>()
            .join(", "),
    }
}

// ---------------------------------------------------------------- 8

fn gbt_monotone() -> (usize, usize) {
    let mut bad = 0;
    for inst in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(800 + inst);
        let n = rng.random_range(20..200);
        let d = rng.random_range(1..6);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random_range(-3.0..3.0)).collect()).collect();
        let x = NumericMatrix::from_rows(&rows);
        let kind = inst % 3;
        let (problem, y): (ProblemType, Vec<f64>) = match kind {
            0 => (ProblemType::Regression, rows.iter().map(|r| r[0].sin() + rng.random_range(-0.3..0.3)).collect()),
            1 => {
                let mut y: Vec<f64> = rows.iter().map(|r| f64::from(r[0] + rng.random_range(-1.0..1.0) > 0.0)).collect();
                y[0] = 0.0;
                y[1] = 1.0;
                (ProblemType::BinaryClassification, y)
            }
            _ => {
                let mut y: Vec<f64> = (0..n).map(|_| rng.random_range(0..3) as f64).collect();
                y[..3].copy_from_slice(&[0.0, 1.0, 2.0]);
                (ProblemType::MulticlassClassification { n_classes: 3 }, y)
            }
        };
        let hp = HpConfig::new()
            .with("n_trees", HpValue::Int(rng.random_range(5..40)))
            .with("max_depth", HpValue::Int(rng.random_range(1..7)))
            .with("learning_rate", HpValue::Float(rng.random_range(0.01..0.5)))
            .with("min_child_rows", HpValue::Int(rng.random_range(1..5)))
            .with("subsample", HpValue::Float(rng.random_range(0.5..=1.0)));
        let Model::Gbt(m) = train(Algorithm::Gbt, problem, &x, &y, &hp, None, inst).expect("train") else {
            unreachable!()
        };
        let ok = m
            .train_loss_history
            .windows(2)
            .all(|p| p[1] <= p[0] + 1e-12 * p[0].abs().max(1.0));
        bad += usize::from(!ok);
    }
    (50, bad)
}

fn linear_gradients() -> (usize, f64) {
    let mut worst: f64 = 0.0;
    let mut checks = 0;
    for inst in 0..30u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(900 + inst);
        let (link, n_out) = match inst % 3 {
            0 => (Link::Identity, 1),
            1 => (Link::Logistic, 1),
            _ => (Link::Softmax, 4),
        };
        let n = rng.random_range(5..40);
        let d = rng.random_range(1..6);
        let x = NumericMatrix::from_rows(
            &(0..n).map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect()).collect::<Vec<Vec<f64>>>(),
        );
        let y: Vec<f64> = (0..n)
            .map(|_| match link {
                Link::Identity => rng.random_range(-3.0..3.0),
                Link::Logistic => rng.random_range(0..2) as f64,
                Link::Softmax => rng.random_range(0..n_out) as f64,
            })
            .collect();
        let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..3.0)).collect();
        let mut rows: Vec<usize> = (0..n).collect();
        rows.shuffle(&mut rng);
        rows.truncate(rng.random_range(1..=n));
        let l2 = rng.random_range(0.0..0.5);
        let mut model = LinearModel::zeros(link, d, n_out);
        model.weights.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
        model.bias.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
        let (_, grad) = objective_and_gradient(&model, &x, &y, &w, &rows, l2);
        let h = 1e-6;
        let mut diff2 = 0.0;
        let mut norm2 = 0.0;
        for p in 0..grad.len() {
            let eval = |delta: f64| {
                let mut m = model.clone();
                if p < d * n_out {
                    m.weights[p] += delta;
                } else {
                    m.bias[p - d * n_out] += delta;
                }
                objective_and_gradient(&m, &x, &y, &w, &rows, l2).0
            };
            let fd = (eval(h) - eval(-h)) / (2.0 * h);
            diff2 += (fd - grad[p]).powi(2);
            norm2 += fd.powi(2).max(grad[p].powi(2));
        }
        checks += 1;
        worst = worst.max(diff2.sqrt() / norm2.sqrt().max(1e-12));
    }
    (checks, worst)
}

fn random_column(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    match rng.random_range(0..5) {
        0 => vec![f64::NAN; n],
        1 => vec![rng.random_range(-5.0..5.0); n],
        2 => (0..n).map(|_| rng.random_range(0.0..1.0f64).powi(8) * 1e12).collect(),
        _ => {
            let missing = rng.random_range(0.0..0.6);
            (0..n)
                .map(|_| {
                    if rng.random_bool(missing) {
                        f64::NAN
                    } else {
                        rng.random_range(-1e3..1e3)
                    }
                })
                .collect()
        }
    }
}

fn random_strings(rng: &mut ChaCha8Rng, n: usize) -> Vec<Option<String>> {
    const WORDS: [&str; 8] = ["red", "green", "blue", "a", "x1", "late order", "", "ok thanks"];
    match rng.random_range(0..4) {
        0 => vec![None; n],
        1 => vec![Some("same".to_string()); n],
        _ => (0..n)
            .map(|_| {
                rng.random_bool(0.8)
                    .then(|| (0..rng.random_range(1..4)).map(|_| WORDS[rng.random_range(0..WORDS.len())]).collect::<Vec<_>>().join(" "))
            })
            .collect(),
    }
}

fn transform_fuzz() -> (usize, usize, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mut applied, mut non_finite, mut errors) = (0, 0, 0);
    let numeric = [
        TransformKind::ImputeMean,
        TransformKind::Standardize,
        TransformKind::LogTransform,
        TransformKind::QuantileBin { bins: 4 },
    ];
    let mut check = |m: Result<automl_core::matrix::NumericMatrix, _>, applied: &mut usize| match m {
        Ok(m) => {
            *applied += 1;
            usize::from(!(0..m.n_rows()).all(|i| m.row(i).iter().all(|v| v.is_finite())))
        }
        Err(_) => {
            errors += 1;
            0
        }
    };
    for table in 0..1000 {
        let n = if table % 10 == 0 { 1 } else { rng.random_range(1..30) };
        let cols: Vec<Vec<f64>> = (0..rng.random_range(1..5)).map(|_| random_column(&mut rng, n)).collect();
        for c in &cols {
            let m = rng.random_range(1..10);
            let fresh = random_column(&mut rng, m);
            for kind in numeric {
                let f = FittedTransformer::fit(kind, TransformInput::Numeric(c)).expect("numeric fit");
                non_finite += check(f.apply(TransformInput::Numeric(c)), &mut applied);
                non_finite += check(f.apply(TransformInput::Numeric(&fresh)), &mut applied);
            }
        }
        let text = random_strings(&mut rng, n);
        let fresh = random_strings(&mut rng, 4);
        for kind in [TransformKind::OneHot, TransformKind::Tfidf { max_features: 5 }] {
            let f = FittedTransformer::fit(kind, TransformInput::Strings(&text)).expect("string fit");
            non_finite += check(f.apply(TransformInput::Strings(&text)), &mut applied);
            non_finite += check(f.apply(TransformInput::Strings(&fresh)), &mut applied);
        }
        let m = NumericMatrix::from_columns(n, &cols);
        let f = FittedTransformer::fit(TransformKind::Pca { k: rng.random_range(1..4) }, TransformInput::Matrix(&m))
            .expect("pca fit");
        non_finite += check(f.apply(TransformInput::Matrix(&m)), &mut applied);
    }
    (applied, non_finite, errors)
}

fn numerical_invariants() -> Outcome {
    let (instances, bad) = gbt_monotone();
    let (checks, worst) = linear_gradients();
    let (applied, non_finite, errors) = transform_fuzz();
    Outcome {
        pass: bad == 0 && worst <= 1e-4 && non_finite == 0 && errors == 0,
        detail: format!(
            "GBT monotone on {}/{instances}; linear gradient worst relative error {worst:.2e} over {checks} models; {applied} transformer outputs over 1000 tables, {non_finite} non-finite, {errors} errors",
            instances - bad
        ),
    }
}

// ---------------------------------------------------------------- 9

fn metric_arithmetic() -> Outcome {
    let hand = (relative_error_difference(9.0, 10.0) + 0.1).abs() < 1e-12
        && relative_error_difference(4.2, 4.2) == 0.0
        && relative_error_difference(0.0, 0.0) == 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut outside = 0;
    for i in 0..100_000 {
        let pick = |rng: &mut ChaCha8Rng| match rng.random_range(0..4) {
            0 => 0.0,
            1 => rng.random_range(0.0..1e-300),
            2 => rng.random_range(0.0..1.0),
            _ => rng.random_range(0.0..1e300),
        };
        let (a, b) = (pick(&mut rng), pick(&mut rng));
        let r = relative_error_difference(a, b);
        outside += usize::from(!(-1.0..=1.0).contains(&r) || (i % 2 == 0 && r != -relative_error_difference(b, a)));
    }
    Outcome {
        pass: hand && outside == 0,
        detail: format!(
            "hand values {}; {outside} of 100000 fuzzed pairs outside [-1, 1] or asymmetric",
            if hand { "match" } else { "differ" }
        ),
    }
}

// ---------------------------------------------------------------- 10

fn failure_injection(work: &Path) -> Outcome {
    // tuner level: one arm always fails
    let space = unit_space(1);
    let arms: Vec<Arm> = (0..10)
        .map(|i| Arm {
            id: format!("p{i}"),
            space: space.clone(),
            seeds: vec![],
        })
        .collect();
    let runner = |p: usize, c: &HpConfig, _: u64| -> Result<Loss, String> {
        if p == 3 {
            Err("injected failure".into())
        } else {
            Ok(rmse(get(c, "x0") + p as f64))
        }
    };
    let cfg = TunerConfig {
        total_budget: 250,
        epsilon: 0.5,
        parallelism: 4,
        seed: 1,
        max_runtime: None,
    };
    let sim_ok = match tuner::run(arms, &cfg, &runner, None) {
        Ok((_, s)) => s.issued() <= 250 && s.stats[3].quarantined && s.stats[3].finished == 0,
        Err(_) => false,
    };

    // job level: an edited definition whose every trial fails
    let data = automl::synth::regression(600, 3).write(&work.join("data10")).expect("dataset");
    let gen = work.join("gen10");
    let mut g = job_config(&data, "y", gen.clone(), 40, 5);
    g.mode = automl::Mode::GenerateOnly;
    fit_job(&g, Candidates::Generate).expect("generate");
    let defs = copy_definitions(&gen.join("candidates"), &work.join("defs10"));
    let broken = defs[0].clone();
    let id = broken.file_stem().expect("stem").to_string_lossy().to_string();
    edit_toml(&broken, |t| {
        tunables(t).retain(|p| p.get("name").and_then(toml::Value::as_str) != Some("learning_rate"));
        let alg = t.get_mut("algorithm").and_then(toml::Value::as_table_mut).expect("algorithm");
        alg.get_mut("static")
            .and_then(toml::Value::as_table_mut)
            .expect("static")
            .insert("learning_rate".into(), toml::Value::Float(-1.0));
    });
    let budget = 40;
    let r = rerun(&work.join("defs10"), &job_config(&data, "y", work.join("run10"), budget, 5));
    let events = trial_events(&work.join("run10/trials.jsonl"));
    let issued = events.iter().filter(|e| e["state"] == "suggested").count();
    let mut consecutive = 0;
    let mut streak_at_quarantine = None;
    for e in events.iter().filter(|e| e["pipeline"] == id.as_str()) {
        match e["state"].as_str() {
            Some("failed") => {
                consecutive += 1;
                if consecutive == 5 && streak_at_quarantine.is_none() {
                    streak_at_quarantine = Some(consecutive);
                }
            }
            Some("finished") => consecutive = 0,
            _ => {}
        }
    }
    let job_ok = r.status == JobStatus::Completed
        && issued <= budget
        && r.trials_issued <= budget
        && r.quarantined.contains(&id)
        && streak_at_quarantine == Some(5);
    Outcome {
        pass: sim_ok && job_ok,
        detail: format!(
            "simulated run {}; job {:?} with {issued}/{budget} trials, {} failed, quarantined {:?}",
            if sim_ok { "ok" } else { "wrong" },
            r.status,
            r.trials_failed,
            r.quarantined
        ),
    }
}

fn main() {
    let filter: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let wanted = |i: usize| filter.is_empty() || filter.contains(&i);
    let work = tempfile::tempdir().expect("temp dir");
    let mut results = Vec::new();
    macro_rules! criterion {
        ($id:expr, $name:expr, $limit:expr, $body:expr) => {
            if wanted($id) {
                let start = Instant::now();
                results.push(report($id, $name, start, $limit, $body));
            }
        };
    }
    criterion!(1, "bandit identification", Some(120.0), bandit_identification());
    criterion!(2, "gating exactness", Some(1.0), gating_exactness());
    criterion!(3, "zero-shot solver oracle", Some(30.0), zeroshot_oracle());
    criterion!(4, "BO beats random search", Some(120.0), bo_vs_random());
    criterion!(5, "end-to-end quality", Some(900.0), end_to_end(work.path()));
    criterion!(6, "white-box fidelity", Some(300.0), white_box(work.path()));
    criterion!(7, "determinism", None, determinism(work.path()));
    criterion!(8, "numerical invariants", None, numerical_invariants());
    criterion!(9, "metric arithmetic", None, metric_arithmetic());
    criterion!(10, "budget and robustness", None, failure_injection(work.path()));
    let failed = results.iter().filter(|p| !**p).count();
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
