//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. Pass criterion numbers as arguments to run a subset:
//! `cargo test --release -p bowlnet --test acceptance -- 1 2 3`.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use bowlnet::config::ExperimentConfig;
use bowlnet::dataset::{generate, Dataset, Split};
use bowlnet::evaluate::{evaluate, Evaluation, Method};
use bowlnet::report::build_table;
use bowlnet::train::{fit, AnyTask, TrainOutcome, TrainSettings};
use bowlnet_core::baselines::polyfit_extrapolate;
use bowlnet_core::model::{build_covariance, init_params, record_encoder, record_loss, record_rollout, ModelConfig};
use bowlnet_core::model::{SequenceTargets, Variant, WeightInit};
use bowlnet_core::numerics::{finite_difference_check, ParameterSet, Tensor};
use bowlnet_core::objectives::{log_perplexity, log_perplexity_base2};
use bowlnet_core::sim::{
    mechanical_energy, sample_initial_conditions, simulate_step, simulate_trajectory, BallState, BowlGeometry, Scenario,
    SimulationConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const GRAD_TOL: f64 = 1e-4;
const GRAD_STEP: f64 = 1e-6;
const COVARIANCE_TRIPLES: usize = 100_000;
const ENERGY_DRIFT: f64 = 0.005;
const RESIDUAL_TOL: f64 = 1e-6;
const EQUIVARIANCE_TOL: f64 = 1e-6;
const DESK_DROP: f64 = 0.60;
const DESK_BUDGET_SECS: f64 = 4.0 * 3600.0;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn random_params(rng: &mut ChaCha8Rng, entries: &[(&str, &[usize])]) -> ParameterSet {
    let mut p = ParameterSet::new();
    for (name, shape) in entries {
        p.insert(*name, random_tensor(rng, shape)).unwrap();
    }
    p
}

fn gradient_correctness() -> Verdict {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: Vec<(String, f64)> = Vec::new();
    for (stride, pad) in [(1, 1), (2, 1), (1, 0), (2, 0)] {
        let p = random_params(&mut rng, &[("x", &[6, 5, 2]), ("k", &[3, 3, 2, 3]), ("b", &[3])]);
        let err = finite_difference_check(&p, GRAD_STEP, |t, b| {
            let y = t.conv2d(b.var("x")?, b.var("k")?, Some(b.var("b")?), stride, pad)?;
            let y2 = t.mul(y, y)?;
            t.sum(y2)
        })
        .unwrap();
        worst.push((format!("conv2d s{stride}p{pad}"), err));
    }
    let p = random_params(&mut rng, &[("x", &[7]), ("w", &[7, 4]), ("b", &[4])]);
    let err = finite_difference_check(&p, GRAD_STEP, |t, b| {
        let y = t.affine(b.var("x")?, b.var("w")?, Some(b.var("b")?))?;
        let r = t.relu(y)?;
        let s = t.sigmoid(y)?;
        let q = t.scaled_sigmoid(y, 99.99, 0.01)?;
        let a = t.add(r, s)?;
        let m = t.mul(a, q)?;
        let m = t.scale(m, 0.3)?;
        let d = t.sub(m, y)?;
        t.mean(d)
    })
    .unwrap();
    worst.push(("affine/relu/sigmoid/scaled-sigmoid/add/sub/mul/scale/mean".into(), err));
    let p = random_params(&mut rng, &[("x", &[2, 3, 4])]);
    let err = finite_difference_check(&p, GRAD_STEP, |t, b| {
        let f = t.flatten(b.var("x")?)?;
        let r = t.reshape(f, &[6, 4])?;
        let r = t.flatten(r)?;
        let s = t.slice(r, 5, 9)?;
        let s2 = t.mul(s, s)?;
        t.sum(s2)
    })
    .unwrap();
    worst.push(("flatten/reshape/slice/sum".into(), err));
    for _ in 0..5 {
        let p = random_params(&mut rng, &[("beta", &[2]), ("theta", &[1]), ("mu", &[2])]);
        let y = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
        let err = finite_difference_check(&p, GRAD_STEP, |t, b| {
            let lam = t.scaled_sigmoid(b.var("beta")?, 3.0, 0.5)?;
            let cov = t.covariance(lam, b.var("theta")?)?;
            let nll = t.gaussian_nll(b.var("mu")?, cov, y)?;
            let det = t.det2(cov)?;
            let det = t.scale(det, 0.1)?;
            t.add(nll, det)
        })
        .unwrap();
        worst.push(("covariance/det2/gaussian-nll".into(), err));
    }
    let horizon = 4;
    for variant in [Variant::PhysNet, Variant::ProbNet] {
        let config = ModelConfig {
            encoder_channels: vec![4, 4],
            transition_hidden: 4,
            init: WeightInit::Gaussian(0.3),
            ..ModelConfig::desk(variant, 8)
        };
        let mut params = init_params(&config, &mut rng).unwrap();
        for (_, t) in params.iter_mut() {
            for v in t.data_mut() {
                *v += rng.random_range(-0.05..0.05);
            }
        }
        let input = random_tensor(&mut rng, &[8, 8, config.input_channels()]);
        let positions: Vec<[f64; 2]> =
            (0..horizon).map(|_| [rng.random_range(0.0..2.0), rng.random_range(0.0..2.0)]).collect();
        let targets = SequenceTargets { positions: &positions, angular: None };
        let err = finite_difference_check(&params, GRAD_STEP, |t, b| {
            let x = t.constant(input.clone());
            let (s0, p0, fin) = record_encoder(t, b, &config, x)?;
            let ps = record_rollout(t, b, s0, p0, horizon)?;
            Ok(record_loss(t, &config, &ps, fin, &targets)?.total)
        })
        .unwrap();
        worst.push((format!("{} loss (8×8, C=4)", variant.name()), err));
    }
    let (name, max) = worst.iter().fold(("", 0.0), |acc, (n, e)| if *e > acc.1 { (n.as_str(), *e) } else { acc });
    let secs = started.elapsed().as_secs_f64();
    verdict(
        max <= GRAD_TOL && secs <= 60.0,
        format!("max relative error {max:.2e} ({name}) ≤ {GRAD_TOL:.0e}; {secs:.1} s ≤ 60 s"),
    )
}

fn symmetric_eigenvalues(m: [[f64; 2]; 2]) -> [f64; 2] {
    let half_trace = 0.5 * (m[0][0] + m[1][1]);
    let d = 0.5 * (m[0][0] - m[1][1]);
    let r = (d * d + m[0][1] * m[1][0]).sqrt();
    [half_trace - r, half_trace + r]
}

fn covariance_head() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (scale, offset) = (99.99, 0.01);
    let sigmoid = |z: f64| 1.0 / (1.0 + (-z).exp());
    let (mut asym, mut eig_err, mut bad) = (0.0f64, 0.0f64, 0usize);
    for _ in 0..COVARIANCE_TRIPLES {
        let (b1, b2, theta) = (rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0), rng.random_range(-10.0..10.0));
        let s = build_covariance(b1, b2, theta, scale, offset);
        asym = asym.max((s[0][1] - s[1][0]).abs());
        let det = s[0][0] * s[1][1] - s[0][1] * s[1][0];
        let eig = symmetric_eigenvalues(s);
        let mut want = [scale * sigmoid(b1) + offset, scale * sigmoid(b2) + offset];
        want.sort_by(f64::total_cmp);
        eig_err = eig_err.max((eig[0] - want[0]).abs()).max((eig[1] - want[1]).abs());
        let in_range = want.iter().all(|&l| l > 0.01 && l < 100.0);
        if !(s[0][0] > 0.0 && det > 0.0 && in_range) {
            bad += 1;
        }
    }
    verdict(
        asym <= 1e-12 && eig_err <= 1e-9 && bad == 0,
        format!(
            "{COVARIANCE_TRIPLES} triples: asymmetry {asym:.1e} ≤ 1e-12, eigenvalue error {eig_err:.1e} ≤ 1e-9, {bad} not SPD or out of (0.01, 100)"
        ),
    )
}

fn perplexity_identity() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for _ in 0..2000 {
        let n = rng.random_range(1..200);
        let nll: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..60.0)).collect();
        let err = (log_perplexity_base2(&nll) - log_perplexity(&nll).unwrap()).abs();
        worst = worst.max(err);
    }
    verdict(worst <= 1e-12, format!("max |ln 2^(−E log2 p) − E[NLL]| = {worst:.1e} ≤ 1e-12 over 2000 random sets"))
}

fn simulator_properties() -> Verdict {
    let started = Instant::now();
    let undamped = SimulationConfig { damping: 0.0, ..SimulationConfig::default() };
    let frames = (10.0 / undamped.frame_interval()).round() as usize + 1;
    let (mut drift, mut residual) = (0.0f64, 0.0f64);
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (geometry, init, initial) = sample_initial_conditions(&mut rng, Scenario::Bowl, &undamped).unwrap();
        assert_eq!(geometry.a, 1.0);
        let traj = simulate_trajectory(&init, &geometry, &initial, &undamped, frames).unwrap();
        let e0 = mechanical_energy(&traj.state(0), &undamped);
        for i in 0..traj.len() {
            drift = drift.max((mechanical_energy(&traj.state(i), &undamped) - e0).abs() / e0.abs());
            residual = residual.max((geometry.inward_distance(traj.centers[i]).unwrap() - undamped.radius).abs());
        }
    }

    let mut equivariance = 0.0f64;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (geometry, init, initial) = sample_initial_conditions(&mut rng, Scenario::Bowl, &undamped).unwrap();
    for delta in [0.3, 1.1, -2.0] {
        let rotated = BallState {
            center: bowlnet_core::math::rotate_z(init.center, delta),
            velocity: bowlnet_core::math::rotate_z(init.velocity, delta),
            orientation: bowlnet_core::math::mat_mul(&bowlnet_core::math::rot_z(delta), &init.orientation),
            angular_velocity: bowlnet_core::math::rotate_z(init.angular_velocity, delta),
        };
        let a = simulate_trajectory(&init, &geometry, &initial, &undamped, 400).unwrap();
        let b = simulate_trajectory(&rotated, &BowlGeometry::new(geometry.a, geometry.gamma + delta), &initial, &undamped, 400)
            .unwrap();
        for (p, q) in a.centers.iter().zip(&b.centers) {
            let r = bowlnet_core::math::rotate_z(*p, delta);
            equivariance = equivariance.max((0..3).map(|k| (r[k] - q[k]).abs()).fold(0.0, f64::max));
        }
    }

    let damped = SimulationConfig::default();
    let mut monotone = true;
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let (geometry, mut state, _) = sample_initial_conditions(&mut rng, Scenario::Bowl, &damped).unwrap();
        let mut e = mechanical_energy(&state, &damped);
        for _ in 0..1200 {
            state = simulate_step(&state, &geometry, &damped).unwrap();
            let next = mechanical_energy(&state, &damped);
            monotone &= next <= e;
            e = next;
        }
    }
    verdict(
        drift <= ENERGY_DRIFT && residual <= RESIDUAL_TOL && equivariance <= EQUIVARIANCE_TOL && monotone,
        format!(
            "10 s drift {:.3}% ≤ 0.5%, residual {residual:.1e} ≤ 1e-6, z-rotation {equivariance:.1e} ≤ 1e-6, damped energy non-increasing: {monotone}; {:.1} s",
            100.0 * drift,
            started.elapsed().as_secs_f64()
        ),
    )
}

fn baseline_exactness() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let c: [[f64; 3]; 2] = core::array::from_fn(|_| {
            [rng.random_range(0.0..48.0), rng.random_range(-5.0..5.0), rng.random_range(-0.2..0.2)]
        });
        let f = |k: usize, t: f64| c[k][0] + c[k][1] * t + c[k][2] * t * t;
        let observed: Vec<[f64; 2]> = (0..10).map(|t| [f(0, t as f64), f(1, t as f64)]).collect();
        let pred = polyfit_extrapolate(&observed, 2, 41).unwrap();
        let err = ((pred[40][0] - f(0, 40.0)).powi(2) + (pred[40][1] - f(1, 40.0)).powi(2)).sqrt();
        worst = worst.max(err);
    }
    let squares: Vec<[f64; 2]> = (0..10).map(|t| [(t * t) as f64, (t * t) as f64]).collect();
    let linear = polyfit_extrapolate(&squares, 1, 11).unwrap()[10];
    verdict(
        worst <= 1e-9 && (linear[0] - 78.0).abs() <= 1e-9,
        format!("quadratic error at t=40 {worst:.1e} ≤ 1e-9; degree-1 fit of t² predicts {:.9} at t=10 (want 78)", linear[0]),
    )
}

struct DeskResults {
    physnet: TrainOutcome,
    physnet_eval: Evaluation,
    interp_eval: Evaluation,
    prob_eval: Evaluation,
    linear_eval: Evaluation,
    seconds: f64,
}

fn train_model(data: &Dataset, tag: &str, horizon: usize) -> TrainOutcome {
    let config = data.config();
    let task = AnyTask::new(data, tag, horizon).unwrap();
    let settings = TrainSettings::from_config(config, task.learning_rate(config));
    let started = Instant::now();
    let outcome = fit(task.as_task(), &settings, "training_log.csv", &mut |r| {
        if r.epoch % 25 == 0 || r.lr_dropped {
            eprintln!("  {tag:<9} epoch {:>3}  val L2 {:>8.3}  lr {:.0e}", r.epoch, r.val_l2, r.learning_rate);
        }
    })
    .unwrap();
    let best = outcome.log.iter().map(|r| r.val_l2).fold(f64::INFINITY, f64::min);
    eprintln!(
        "  {tag:<9} stopped after epoch {} (best {} at val L2 {best:.3}) in {:.0} s",
        outcome.log.last().unwrap().epoch,
        outcome.best.epoch,
        started.elapsed().as_secs_f64()
    );
    if let Some(e) = &outcome.failure {
        eprintln!("  {tag:<9} {e}");
    }
    outcome
}

fn desk_run(root: &Path) -> DeskResults {
    let started = Instant::now();
    let config = ExperimentConfig::desk();
    eprintln!("desk: generating {} sequences at {}×{}", config.counts.total(), config.resolution, config.resolution);
    generate(&config, root).unwrap();
    let data = Dataset::load(root).unwrap();
    let physnet = train_model(&data, "physnet", config.train_horizon);
    let interp = train_model(&data, "interpnet", config.eval_horizon);
    let prob = train_model(&data, "probnet", config.train_horizon);
    let score = |m: &Method| evaluate(&data, Split::Test, m, config.eval_horizon).unwrap();
    let model = |o: &TrainOutcome| Method::Model { checkpoint: o.best.clone(), source: o.best.kind.tag().into() };
    let results = DeskResults {
        physnet_eval: score(&model(&physnet)),
        interp_eval: score(&model(&interp)),
        prob_eval: score(&model(&prob)),
        linear_eval: score(&Method::Linear),
        physnet,
        seconds: started.elapsed().as_secs_f64(),
    };
    let mut rows = Vec::new();
    for e in [&results.linear_eval, &results.physnet_eval, &results.interp_eval, &results.prob_eval] {
        for h in [config.train_horizon, config.eval_horizon] {
            rows.push(e.metrics(h).unwrap());
        }
    }
    eprintln!("desk test split:\n{}", build_table(&rows).unwrap().to_text());
    results
}

fn desk_training(d: &DeskResults) -> Verdict {
    let log = &d.physnet.log;
    let initial = log[0].val_l2;
    let best = log.iter().map(|r| r.val_l2).fold(f64::INFINITY, f64::min);
    let drop = 1.0 - best / initial;
    let epochs = log.last().map_or(0, |r| r.epoch);
    verdict(
        drop >= DESK_DROP && epochs <= 400 && d.seconds <= DESK_BUDGET_SECS && d.physnet.failure.is_none(),
        format!(
            "PhysNet val L2@20 {initial:.3} → {best:.3} (drop {:.1}% ≥ 60%) in {epochs} epochs; desk stage {:.0} s ≤ 4 h",
            100.0 * drop,
            d.seconds
        ),
    )
}

fn directional_ordering(d: &DeskResults) -> Verdict {
    let phys = d.physnet_eval.metrics(20).unwrap().l2;
    let lin = d.linear_eval.metrics(20).unwrap().l2;
    verdict(phys < lin, format!("test L2@20: PhysNet {phys:.3} < linear {lin:.3}"))
}

fn error_growth(d: &DeskResults) -> Verdict {
    let c = d.physnet_eval.position_curve().unwrap();
    verdict(c.mean[39] > c.mean[9], format!("PhysNet test error at t=40 {:.3} > t=10 {:.3}", c.mean[39], c.mean[9]))
}

fn interpolation(d: &DeskResults) -> Verdict {
    let i = d.interp_eval.position_curve().unwrap().mean[39];
    let p = d.physnet_eval.position_curve().unwrap().mean[39];
    verdict(i < p, format!("test error at t=40: InterpNet {i:.3} < PhysNet {p:.3}"))
}

fn uncertainty_growth(d: &DeskResults) -> Verdict {
    let at = |h| d.prob_eval.metrics(h).unwrap().ln_perplexity.unwrap();
    let (p20, p40) = (at(20), at(40));
    verdict(p40 > p20, format!("ProbNet test ln-perplexity: T=40 {p40:.3} > T=20 {p20:.3}"))
}

fn files_under(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(root).unwrap().display().to_string(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn cli_run(root: &Path) -> Vec<(String, Vec<u8>)> {
    let bin = env!("CARGO_BIN_EXE_bowlnet");
    let run = |args: &[&str]| {
        let out = Command::new(bin).current_dir(root).args(args).output().unwrap();
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    };
    run(&["generate", "--config", "smoke", "--seed", "11", "--out", "data"]);
    run(&["--deterministic", "train", "--dataset", "data", "--variant", "probnet++", "--seed", "11", "--out", "train"]);
    run(&["evaluate", "--dataset", "data", "--checkpoint", "train/checkpoint.bin", "--out", "eval"]);
    files_under(root)
}

fn determinism() -> Verdict {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let (fa, fb) = (cli_run(a.path()), cli_run(b.path()));
    let names: Vec<&str> = fa.iter().map(|(n, _)| n.as_str()).collect();
    let checked = ["manifest.json", "training_log.csv", "checkpoint.bin", "metrics.csv", "curves.csv"];
    let covered = checked.iter().all(|c| names.iter().any(|n| n.ends_with(c)));
    let differing: Vec<&str> = fa.iter().zip(&fb).filter(|(x, y)| x != y).map(|(x, _)| x.0.as_str()).collect();
    verdict(
        covered && fa.len() == fb.len() && differing.is_empty(),
        format!("{} files compared across two generate+train+evaluate runs, {} differ {:?}", fa.len(), differing.len(), differing),
    )
}

fn main() {
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let wanted = |n: u32| selected.is_empty() || selected.contains(&n);
    let mut verdicts: Vec<(u32, &str, Verdict)> = Vec::new();
    let quick: [(u32, &str, fn() -> Verdict); 5] = [
        (1, "gradient correctness", gradient_correctness),
        (2, "covariance head", covariance_head),
        (3, "perplexity identity", perplexity_identity),
        (4, "simulator conservation and symmetry", simulator_properties),
        (5, "baseline exactness", baseline_exactness),
    ];
    for (n, name, f) in quick {
        if wanted(n) {
            verdicts.push((n, name, f()));
        }
    }
    if (6..=10).any(wanted) {
        let dir = tempfile::tempdir().unwrap();
        let desk = desk_run(dir.path());
        let checks: [(u32, &str, fn(&DeskResults) -> Verdict); 5] = [
            (6, "desk-scale training", desk_training),
            (7, "PhysNet beats linear at T=20", directional_ordering),
            (8, "error grows from t=10 to t=40", error_growth),
            (9, "InterpNet beats PhysNet at t=40", interpolation),
            (10, "ProbNet perplexity grows with horizon", uncertainty_growth),
        ];
        for (n, name, f) in checks {
            if wanted(n) {
                verdicts.push((n, name, f(&desk)));
            }
        }
    }
    if wanted(11) {
        verdicts.push((11, "determinism", determinism()));
    }
    println!();
    for (n, name, v) in &verdicts {
        println!("criterion {n:>2} {}: {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
    }
    let failed = verdicts.iter().filter(|(_, _, v)| !v.pass).count();
    println!("\nacceptance: {} passed, {failed} failed", verdicts.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
