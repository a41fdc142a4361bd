//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Criteria 5 to 7 train the desk preset end to end in a scratch directory
//! and take several minutes on one core. Failing criteria are reported, not
//! hidden; set `LATEQ_STRICT=1` to turn any FAIL into a non-zero exit.
//! Pass criterion numbers after `--` to run only those.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use lateq::a2c::{a2c_loss_given, detached_targets, train, A2CConfig, Agent, Environment, RiggedBandit, Transition};
use lateq::baselines::{
    run_ddpg, run_ga, run_qlearning, BranchingQ, ClippedNoise, DdpgAgent, DdpgConfig, GaConfig, LevelBandit,
    QConfig, SequentialTask,
};
use lateq::channel::{synthesize_pair, ChannelConfig};
use lateq::equalizer::{apply_dfe, ctle_coeffs, CtleParams, DfeParams, EqualizerKind};
use lateq::eye::{fold_segment, largest_window, EyeDiagram, EyeGeometry, EyeWindow};
use lateq::latent::{batch_loss_and_grads, compute_anchor, distance, AeConfig, AutoencoderBundle, ClassTerms, LatentVector};
use lateq::neural::{Activation, DenseNet, Grads};
use lateq::signal::{extract_segments, label_validity, EyeMask, Validity};
use lateq_cli::config::RunConfig;
use lateq_cli::pipeline::{
    cmd_baseline, cmd_compare_si, cmd_generalize, cmd_pipeline, link_dataset, stage_train_ae, Method, Run,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------- 1

const H: f64 = 1e-6;

/// Largest relative error between `analytic` and central differences of `f`.
fn fd_error(net: &DenseNet, analytic: &Grads, mut f: impl FnMut(&DenseNet) -> f64) -> f64 {
    let p = net.params_flat();
    let g = analytic.flatten();
    let mut probe = net.clone();
    let mut worst = 0.0f64;
    for i in 0..p.len() {
        let mut q = p.clone();
        q[i] = p[i] + H;
        probe.set_params_flat(&q).unwrap();
        let up = f(&probe);
        q[i] = p[i] - H;
        probe.set_params_flat(&q).unwrap();
        let num = (up - f(&probe)) / (2.0 * H);
        worst = worst.max((g[i] - num).abs() / g[i].abs().max(num.abs()).max(1e-3));
    }
    worst
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

fn gradients() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut errs: BTreeMap<&str, f64> = BTreeMap::new();

    let acts = [
        ("relu", Activation::Relu),
        ("tanh_scaled", Activation::TanhScaled { k: 2.0 }),
        ("sigmoid", Activation::Sigmoid),
        ("linear", Activation::Linear),
    ];
    for (name, act) in acts {
        let net = DenseNet::init(&[4, 6, 3], &[act, act], 2).unwrap();
        let x = uniform(&mut rng, 12, -1.0, 1.0);
        let tape = net.forward_batch(&x, 3).unwrap();
        let dy: Vec<f64> = tape.output().iter().map(|y| 2.0 * y).collect();
        let (g, _) = net.backward(&tape, &dy).unwrap();
        let e = fd_error(&net, &g, |n| n.forward_batch(&x, 3).unwrap().output().iter().map(|y| y * y).sum());
        errs.insert(name, e);
    }

    let bundle = AutoencoderBundle::init(
        10,
        400.0,
        &AeConfig {
            latent_dim: 3,
            hidden: vec![6],
            seed: 3,
            ..AeConfig::default()
        },
    )
    .unwrap();
    let xs: Vec<Vec<f64>> = (0..5).map(|_| uniform(&mut rng, 10, -450.0, 450.0)).collect();
    let refs: Vec<&[f64]> = xs.iter().map(|v| v.as_slice()).collect();
    let ys = [1, 0, 1, 0, 0];
    let terms = ClassTerms::default();
    let (_, g) = batch_loss_and_grads(&bundle, &refs, &ys, &terms).unwrap();
    let mut probe = bundle.clone();
    let mut ae = fd_error(&bundle.encoder, &g.encoder, |n| {
        probe.encoder = n.clone();
        batch_loss_and_grads(&probe, &refs, &ys, &terms).unwrap().0.total()
    });
    let mut probe = bundle.clone();
    ae = ae.max(fd_error(&bundle.decoder, &g.decoder, |n| {
        probe.decoder = n.clone();
        batch_loss_and_grads(&probe, &refs, &ys, &terms).unwrap().0.total()
    }));
    let mut probe = bundle.clone();
    ae = ae.max(fd_error(&bundle.classifier, &g.classifier, |n| {
        probe.classifier = n.clone();
        batch_loss_and_grads(&probe, &refs, &ys, &terms).unwrap().0.total()
    }));
    errs.insert("autoencoder", ae);

    let cfg = A2CConfig {
        hidden: vec![6],
        init_log_std: -0.5,
        ..A2CConfig::default()
    };
    let agent = Agent::new(3, 2, &cfg).unwrap();
    let batch: Vec<Transition> = (0..6)
        .map(|_| {
            let a_raw = uniform(&mut rng, 2, -0.2, 1.2);
            Transition {
                s: uniform(&mut rng, 3, -1.0, 1.0),
                s_next: uniform(&mut rng, 3, -1.0, 1.0),
                a: a_raw.iter().map(|v| v.clamp(0.0, 1.0)).collect(),
                a_raw,
                r: rng.random_range(-2.0..0.0),
            }
        })
        .collect();
    let fixed = detached_targets(&agent, &batch, cfg.gamma).unwrap();
    let (_, g) = a2c_loss_given(&agent, &batch, &fixed, &cfg).unwrap();
    let mut probe = agent.clone();
    let mut a2c = fd_error(&agent.actor, &g.actor, |n| {
        probe.actor = n.clone();
        a2c_loss_given(&probe, &batch, &fixed, &cfg).unwrap().0.total
    });
    let mut probe = agent.clone();
    a2c = a2c.max(fd_error(&agent.critic, &g.critic, |n| {
        probe.critic = n.clone();
        a2c_loss_given(&probe, &batch, &fixed, &cfg).unwrap().0.total
    }));
    for j in 0..2 {
        let eval = |d: f64| {
            let mut a = agent.clone();
            let mut v = agent.log_std().to_vec();
            v[j] += d;
            a.set_log_std(&v).unwrap();
            a2c_loss_given(&a, &batch, &fixed, &cfg).unwrap().0.total
        };
        let num = (eval(H) - eval(-H)) / (2.0 * H);
        a2c = a2c.max((g.log_std[j] - num).abs() / g.log_std[j].abs().max(num.abs()).max(1e-3));
    }
    errs.insert("a2c", a2c);

    let q = BranchingQ::new(3, 4, 5, &[8], 4).unwrap();
    let states: Vec<Vec<f64>> = (0..5).map(|_| uniform(&mut rng, 3, -1.0, 1.0)).collect();
    let srefs: Vec<&[f64]> = states.iter().map(|v| v.as_slice()).collect();
    let actions: Vec<Vec<usize>> = (0..5).map(|_| (0..4).map(|_| rng.random_range(0..5)).collect()).collect();
    let rewards = uniform(&mut rng, 5, -2.0, 0.0);
    let (_, g) = q.loss_and_grads(&srefs, &actions, &rewards).unwrap();
    let mut probe = q.clone();
    errs.insert(
        "q_network",
        fd_error(&q.net, &g, |n| {
            probe.net = n.clone();
            probe.loss_and_grads(&srefs, &actions, &rewards).unwrap().0
        }),
    );

    let dd = DdpgAgent::new(3, &[7], 5).unwrap();
    let sa = uniform(&mut rng, 4 * 4, 0.0, 1.0);
    let targets = uniform(&mut rng, 4, 0.0, 100.0);
    let (_, g) = dd.critic_loss(&sa, &targets).unwrap();
    let mut probe = dd.clone();
    let mut ddpg = fd_error(&dd.critic, &g, |n| {
        probe.critic = n.clone();
        probe.critic_loss(&sa, &targets).unwrap().0
    });
    let st = uniform(&mut rng, 4 * 3, 0.0, 1.0);
    let (_, g) = dd.actor_loss(&st, 4).unwrap();
    let mut probe = dd.clone();
    ddpg = ddpg.max(fd_error(&dd.actor, &g, |n| {
        probe.actor = n.clone();
        probe.actor_loss(&st, 4).unwrap().0
    }));
    errs.insert("ddpg", ddpg);

    let worst = errs.values().cloned().fold(0.0, f64::max);
    let secs = start.elapsed().as_secs_f64();
    check(
        worst <= 1e-4 && secs < 60.0,
        format!("max relative error {worst:.2e} over {errs:?}, {secs:.1} s"),
    )
}

// ---------------------------------------------------------------- 2

fn filters() -> Outcome {
    let dt = 10.0;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut dc, mut mag) = (0.0f64, 0.0f64);
    for _ in 0..200 {
        let mut p = CtleParams {
            g_dc: rng.random_range(0.0..10.0),
            f_z: rng.random_range(0.01..1.0),
            f_p: rng.random_range(0.01..10.0),
            g_p: 0.0,
        };
        dc = dc.max((ctle_coeffs(&p, dt).unwrap().dc_gain() - p.g_dc).abs());
        p.g_p = rng.random_range(0.0..20.0);
        p.g_dc = p.g_dc.max(0.1);
        let c = ctle_coeffs(&p, dt).unwrap();
        let wz = 2e-3 * std::f64::consts::PI * p.f_z * 10f64.powf(-p.g_p / 20.0);
        let wp = 2e-3 * std::f64::consts::PI * p.f_p;
        for k in 1..=20 {
            let f = 25.0 * k as f64 / 21.0;
            let wa = (2.0 / dt) * (2e-3 * std::f64::consts::PI * f * dt / 2.0).tan();
            let want = p.g_dc * wp / wz * ((wa * wa + wz * wz) / (wa * wa + wp * wp)).sqrt();
            mag = mag.max(((c.magnitude(f, dt) - want) / want).abs());
        }
    }
    let pair = synthesize_pair(&ChannelConfig::stressed(5, 400)).unwrap();
    let same = apply_dfe(&pair.output, &DfeParams::zero()).unwrap().samples() == pair.output.samples();
    check(
        dc <= 1e-9 && mag <= 1e-6 && same,
        format!("DC error {dc:.1e}, magnitude error {mag:.1e}, zero-tap DFE identical: {same}"),
    )
}

// ---------------------------------------------------------------- 3

fn brute_window(eye: &EyeDiagram) -> EyeWindow {
    let (cr, cc) = eye.center_cell();
    let mut best = EyeWindow::closed();
    if eye.occupied(cr, cc) {
        return best;
    }
    for r0 in 0..=cr {
        for r1 in cr..eye.rows() {
            for c0 in 0..=cc {
                for c1 in cc..eye.cols() {
                    if (r0..=r1).any(|r| (c0..=c1).any(|c| eye.occupied(r, c))) {
                        continue;
                    }
                    let t1 = ((c1 + 1) as f64).min(eye.ui());
                    let w = EyeWindow {
                        t0: c0 as f64,
                        t1,
                        v0: (eye.v_min() + r0 as i64) as f64,
                        v1: (eye.v_min() + r1 as i64 + 1) as f64,
                        area: (t1 - c0 as f64) * (r1 - r0 + 1) as f64,
                    };
                    let key = |x: &EyeWindow| (x.area, x.width(), -x.t0, -x.v0);
                    if key(&w).partial_cmp(&key(&best)) == Some(std::cmp::Ordering::Greater) {
                        best = w;
                    }
                }
            }
        }
    }
    best
}

fn metric_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut window_mismatch = 0;
    for _ in 0..100 {
        let density = rng.random_range(0.01..0.25);
        let cells = (0..1600).map(|_| rng.random::<f64>() < density).collect();
        let eye = EyeDiagram::from_cells(cells, 40, 40, -20, 40.0).unwrap();
        window_mismatch += usize::from(largest_window(&eye) != brute_window(&eye));
    }
    let mut anchor_mismatch = 0;
    for _ in 0..50 {
        let m = rng.random_range(1..=200);
        let set: Vec<LatentVector> = (0..m).map(|_| uniform(&mut rng, 11, -3.0, 3.0)).collect();
        let mut best = (0, f64::INFINITY);
        for (i, p) in set.iter().enumerate() {
            let s: f64 = set.iter().map(|q| distance(p, q)).sum();
            if s < best.1 {
                best = (i, s);
            }
        }
        let a = compute_anchor(&set).unwrap();
        anchor_mismatch += usize::from(a.source_index != best.0 || a.c != set[best.0]);
    }
    let mask = EyeMask::standard(156.3);
    let (v0, v1) = mask.v_bounds();
    let (t0, t1) = mask.t_bounds();
    let mut label_mismatch = 0;
    for k in 0..200 {
        let mut cfg = ChannelConfig::stressed(500 + k, 12);
        cfg.isi_taps.iter_mut().for_each(|t| *t *= rng.random_range(0.3..1.4));
        cfg.noise_sigma = rng.random_range(0.0..20.0);
        let pair = synthesize_pair(&cfg).unwrap();
        let seg = extract_segments(&pair.output, 150, 150).unwrap().remove(0);
        let eye = fold_segment(&seg, &EyeGeometry::for_swing(cfg.swing)).unwrap();
        let r0 = (v0.floor() as i64 - eye.v_min()) as usize;
        let r1 = (v1.ceil() as i64 - eye.v_min()) as usize - 1;
        let clear = (r0..=r1).all(|r| (t0.floor() as usize..t1.ceil() as usize).all(|c| !eye.occupied(r, c)));
        let valid = label_validity(&seg, &mask).unwrap() == Validity::Valid;
        label_mismatch += usize::from(valid != clear);
    }
    check(
        window_mismatch + anchor_mismatch + label_mismatch == 0,
        format!(
            "window mismatches {window_mismatch}/100, anchor mismatches {anchor_mismatch}/50, label mismatches {label_mismatch}/200"
        ),
    )
}

// ---------------------------------------------------------------- 4

fn rl_sanity() -> Outcome {
    let start = Instant::now();
    let target = vec![0.3, 0.72, 0.55, 0.18];
    let env = RiggedBandit::single_state(target.clone(), 6, 32, 11);
    let cfg = A2CConfig {
        lr: 3e-3,
        batch: 32,
        epochs: 2000,
        seed: 11,
        stop_tol: 0.0,
        ..A2CConfig::default()
    };
    let out = train(&env, &cfg).map_err(|e| e.to_string())?;
    let mean = out.agent.mean_action(env.state(0)).unwrap();
    let err = distance(&mean, &target);

    let bandit = LevelBandit::new(2, 4, 64);
    let qcfg = QConfig {
        epochs: 150,
        batch: 64,
        hidden: vec![32, 32],
        ..QConfig::default()
    };
    let q = run_qlearning(&bandit, &qcfg, 5).map_err(|e| e.to_string())?;
    let a = q.action(bandit.state(0)).unwrap();
    let (r, _) = bandit.step(0, &a).unwrap();
    let secs = start.elapsed().as_secs_f64();
    check(
        err <= 0.05 && out.updates <= 2000 && r >= -0.1 && q.trace.len() <= 150 && secs < 300.0,
        format!(
            "A2C mean action {err:.4} from a* after {} updates; Q greedy reward {r:.4} after {} epochs; {secs:.1} s",
            out.updates,
            q.trace.len()
        ),
    )
}

// ---------------------------------------------------------------- 5 to 7

struct Desk {
    run: Run,
}

fn desk(dir: &Path) -> Desk {
    let mut cfg = RunConfig::desk();
    cfg.output_dir = dir.to_path_buf();
    Desk {
        run: Run::open(cfg).unwrap(),
    }
}

fn end_to_end(d: &Desk) -> Outcome {
    let start = Instant::now();
    let run = &d.run;
    let mut lines = Vec::new();
    let mut a_ok = true;
    let mut a2c = BTreeMap::new();
    for kind in [EqualizerKind::Dfe, EqualizerKind::CtleDfe] {
        let ours = cmd_pipeline(run, kind).map_err(|e| e.to_string())?;
        let grid = cmd_baseline(run, Method::Grid, kind).map_err(|e| e.to_string())?.report;
        a_ok &= ours.mean_improvement > 0.0
            && ours.mean_improvement >= grid.mean_improvement
            && ours.evaluations <= grid.evaluations;
        lines.push(format!(
            "{}: A2C {:.1}% ({} evals) vs grid {:.1}% ({} evals)",
            kind.name(),
            ours.mean_improvement,
            ours.evaluations,
            grid.mean_improvement,
            grid.evaluations
        ));
        a2c.insert(kind.name(), ours.mean_improvement);
    }
    let b_ok = a2c["ctle-dfe"] >= a2c["dfe"];
    let (cmp, t) = cmd_compare_si(run, run.cfg.compare.trials).map_err(|e| e.to_string())?;
    let ratio = t.eye_seconds_per_eval / t.latent_seconds_per_eval;
    let c_ok = cmp.latent.std <= cmp.eye.std && ratio >= 10.0;
    lines.push(format!(
        "PSO std latent {:.2} vs eye {:.2}, eye/latent time per evaluation {ratio:.1}x",
        cmp.latent.std, cmp.eye.std
    ));
    let mins = start.elapsed().as_secs_f64() / 60.0;
    lines.push(format!("(a) {} (b) {} (c) {}; {mins:.1} min", pf(a_ok), pf(b_ok), pf(c_ok)));
    check(a_ok && b_ok && c_ok && mins < 30.0, lines.join("; "))
}

fn pf(ok: bool) -> &'static str {
    if ok {
        "pass"
    } else {
        "fail"
    }
}

fn separation(d: &Desk) -> Outcome {
    let run = &d.run;
    let bundle = stage_train_ae(run).map_err(|e| e.to_string())?;
    let mut ch = run.cfg.channel.clone();
    ch.seed = ch.seed.wrapping_add(3000);
    let ds = link_dataset(&ch, &run.cfg, run.cfg.data.n_x, 200).map_err(|e| e.to_string())?;
    let (mut valid, mut invalid) = (Vec::new(), Vec::new());
    for s in &ds.segments {
        let z = bundle.encode(&s.output.data).unwrap();
        if s.label.is_valid() {
            valid.push(z);
        } else {
            invalid.push(z);
        }
    }
    if valid.len() < 2 || invalid.is_empty() {
        return Err(format!("holdout has {} valid and {} invalid", valid.len(), invalid.len()));
    }
    let mut intra = (0.0, 0usize);
    for i in 0..valid.len() {
        for j in i + 1..valid.len() {
            intra = (intra.0 + distance(&valid[i], &valid[j]), intra.1 + 1);
        }
    }
    let mut cross = (0.0, 0usize);
    for v in &valid {
        for w in &invalid {
            cross = (cross.0 + distance(v, w), cross.1 + 1);
        }
    }
    let (intra, cross) = (intra.0 / intra.1 as f64, cross.0 / cross.1 as f64);
    check(
        intra < cross,
        format!(
            "intra-valid {intra:.3} vs valid-invalid {cross:.3} ({} valid, {} invalid)",
            valid.len(),
            invalid.len()
        ),
    )
}

fn generalization(d: &Desk) -> Outcome {
    let rep = cmd_generalize(&d.run).map_err(|e| e.to_string())?;
    let ok = rep.cells.iter().all(|c| c.train_improvement > 0.0 && c.heldout_improvement > 0.0);
    let detail: Vec<String> = rep
        .cells
        .iter()
        .map(|c| {
            format!(
                "{}: train {:.1}%, held-out {:.1}%",
                c.kind.name(),
                c.train_improvement,
                c.heldout_improvement
            )
        })
        .collect();
    check(
        ok && rep.train_units == 6 && rep.heldout_units == 2,
        format!("{} + {} units; {}", rep.train_units, rep.heldout_units, detail.join("; ")),
    )
}

// ---------------------------------------------------------------- 8

const COMMANDS: &[&[&str]] = &[
    &["gen-data"],
    &["train-ae"],
    &["anchor"],
    &["train-a2c", "--kind", "dfe"],
    &["optimize", "--kind", "dfe"],
    &["evaluate", "--kind", "dfe"],
    &["pipeline", "--kind", "ctle-dfe"],
    &["compare-si"],
    &["generalize"],
    &["baseline", "ga", "--kind", "dfe"],
    &["baseline", "pso", "--kind", "dfe"],
    &["baseline", "grid", "--kind", "dfe"],
    &["baseline", "qlearn", "--kind", "dfe"],
    &["baseline", "ddpg", "--kind", "dfe"],
    &["baseline", "pso", "--kind", "dfe", "--objective", "eye"],
    &["export-eye", "--segment", "0", "--action", "0.2,0.1,0,0"],
    &["export-latents"],
];

fn outputs(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != "timings.json")
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect()
}

fn reproducibility() -> Outcome {
    // Both runs use the same output path so their configs are identical;
    // the first run's files are read before the directory is cleared.
    let root = tempfile::tempdir().unwrap();
    let dir = root.path().join("run");
    let mut runs = Vec::new();
    for _ in 0..2 {
        if dir.exists() {
            std::fs::remove_dir_all(&dir).unwrap();
        }
        for args in COMMANDS {
            let out = Command::new(env!("CARGO_BIN_EXE_lateq"))
                .args(["--preset", "tiny", "--out"])
                .arg(&dir)
                .args(*args)
                .output()
                .unwrap();
            if !out.status.success() {
                return Err(format!("{args:?} failed: {}", String::from_utf8_lossy(&out.stderr)));
            }
        }
        runs.push(outputs(&dir));
    }
    let (a, b) = (&runs[0], &runs[1]);
    let differing: Vec<&String> = a.keys().filter(|k| a.get(*k) != b.get(*k)).collect();
    let untagged: Vec<&String> = a
        .iter()
        .filter(|(k, v)| {
            let text = String::from_utf8_lossy(v);
            (k.ends_with(".json") && k.as_str() != "config.json" && !text.contains("\"config_hash\""))
                || (k.ends_with(".csv") && !text.starts_with("# config_hash="))
        })
        .map(|(k, _)| k)
        .collect();
    check(
        a.len() == b.len() && differing.is_empty() && untagged.is_empty(),
        format!(
            "{} commands, {} artifacts; differing {differing:?}; missing provenance {untagged:?}",
            COMMANDS.len(),
            a.len()
        ),
    )
}

// ---------------------------------------------------------------- 9

struct Sum3;

impl SequentialTask for Sum3 {
    fn dims(&self) -> usize {
        3
    }
    fn episodes(&self) -> usize {
        150
    }
    fn terminal_reward(&self, _: usize, a: &[f64]) -> lateq::Result<f64> {
        Ok(a.iter().sum())
    }
}

fn protocol() -> Outcome {
    let cfg = GaConfig::default();
    let mut ga_bad = 0;
    for seed in 0..20 {
        let r = run_ga(|x| Ok(-x.iter().map(|v| (v - 0.4).abs()).sum::<f64>()), 4, &cfg, seed).unwrap();
        let deltas: Vec<bool> = r.trace.windows(2).map(|w| (w[1] - w[0]).abs() <= cfg.eps).collect();
        let first_stop = (cfg.patience..=deltas.len()).find(|&n| deltas[n - cfg.patience..n].iter().all(|&c| c));
        let ok = match first_stop {
            Some(n) => r.converged && r.trace.len() == n + 1,
            None => !r.converged && r.trace.len() == cfg.max_generations,
        };
        ga_bad += usize::from(!ok);
    }
    let qcfg = QConfig {
        epochs: 120,
        batch: 16,
        hidden: vec![8],
        stop_std: 0.0,
        ..QConfig::default()
    };
    let q = run_qlearning(&LevelBandit::new(2, 3, 20), &qcfg, 1).unwrap();
    let sched_bad = q
        .trace
        .iter()
        .filter(|e| {
            let lr = [1e-3, 1e-4, 1e-5][(e.epoch / 25).min(2)];
            e.epsilon != 0.975f64.powi(e.epoch as i32).max(0.005) || (e.lr - lr).abs() > 1e-18
        })
        .count();
    let noise = ClippedNoise::new(0.075, 0.025).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (mut lo, mut hi) = (0.0f64, 0.0f64);
    for _ in 0..1_000_000 {
        let n = noise.sample(&mut rng);
        lo = lo.min(n);
        hi = hi.max(n);
    }
    let d = run_ddpg(
        &Sum3,
        &DdpgConfig {
            episodes: 150,
            batch: 16,
            hidden: vec![16],
            ..DdpgConfig::default()
        },
        4,
    )
    .unwrap();
    lo = lo.min(d.noise_extrema.0);
    hi = hi.max(d.noise_extrema.1);
    check(
        ga_bad == 0 && sched_bad == 0 && q.trace.len() == 120 && lo >= -0.025 && hi <= 0.025,
        format!(
            "GA runs off the patience rule {ga_bad}/20; schedule mismatches {sched_bad}/{}; DDPG noise in [{lo:.4}, {hi:.4}]",
            q.trace.len()
        ),
    )
}

// ----------------------------------------------------------------

fn main() {
    let scratch = tempfile::tempdir().unwrap();
    let mut desk_run: Option<Desk> = None;
    let mut results = Vec::new();
    // Numeric arguments select criteria; none runs them all.
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut report = |n: usize, name: &str, f: &mut dyn FnMut() -> Outcome| {
        if !only.is_empty() && !only.contains(&n) {
            return;
        }
        let t = Instant::now();
        let r = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let (tag, detail) = match &r {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        println!("criterion {n} {tag} {name}: {detail} [{:.0} s]", t.elapsed().as_secs_f64());
        results.push(r.is_ok());
    };
    report(1, "gradient correctness", &mut gradients);
    report(2, "filter fidelity", &mut filters);
    report(3, "metric oracles", &mut metric_oracles);
    report(4, "RL sanity", &mut rl_sanity);
    report(5, "end-to-end direction", &mut || end_to_end(desk_run.get_or_insert_with(|| desk(scratch.path()))));
    report(6, "latent separation", &mut || separation(desk_run.get_or_insert_with(|| desk(scratch.path()))));
    report(7, "generalization", &mut || generalization(desk_run.get_or_insert_with(|| desk(scratch.path()))));
    report(8, "reproducibility", &mut reproducibility);
    report(9, "baseline protocol", &mut protocol);
    let passed = results.iter().filter(|&&r| r).count();
    println!("acceptance: {passed}/{} criteria pass", results.len());
    if passed < results.len() && std::env::var_os("LATEQ_STRICT").is_some() {
        std::process::exit(1);
    }
}
