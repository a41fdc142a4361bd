//! Analytic gradients against central finite differences.

use lateq::a2c::{a2c_loss_given, detached_targets, A2CConfig, Agent, Transition};
use lateq::baselines::{BranchingQ, DdpgAgent};
use lateq::latent::{batch_loss_and_grads, AeConfig, AutoencoderBundle, ClassTerms};
use lateq::neural::{Activation, DenseNet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-6;
const TOL: f64 = 1e-4;

fn assert_close(analytic: &[f64], numeric: &[f64], what: &str) {
    assert_eq!(analytic.len(), numeric.len());
    for (i, (a, n)) in analytic.iter().zip(numeric).enumerate() {
        let scale = a.abs().max(n.abs()).max(1e-3);
        assert!((a - n).abs() / scale <= TOL, "{what}[{i}]: analytic {a}, numeric {n}");
    }
}

/// Central differences of `f` over the flat parameters of `net`.
fn numeric_grad(net: &DenseNet, mut f: impl FnMut(&DenseNet) -> f64) -> Vec<f64> {
    let p = net.params_flat();
    let mut probe = net.clone();
    (0..p.len())
        .map(|i| {
            let mut q = p.clone();
            q[i] = p[i] + H;
            probe.set_params_flat(&q).unwrap();
            let up = f(&probe);
            q[i] = p[i] - H;
            probe.set_params_flat(&q).unwrap();
            let down = f(&probe);
            (up - down) / (2.0 * H)
        })
        .collect()
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

#[test]
fn dense_net_every_activation() {
    let acts = [
        Activation::Relu,
        Activation::TanhScaled { k: 2.5 },
        Activation::Sigmoid,
        Activation::Linear,
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for (k, out_act) in acts.iter().enumerate() {
        let net = DenseNet::init(&[5, 7, 6, 3], &[Activation::TanhScaled { k: 1.0 }, acts[k], *out_act], k as u64).unwrap();
        let b = 4;
        let x = random_vec(&mut rng, 5 * b, -1.0, 1.0);
        let w = random_vec(&mut rng, 3 * b, -1.0, 1.0);
        let loss = |n: &DenseNet| -> f64 {
            let t = n.forward_batch(&x, b).unwrap();
            t.output().iter().zip(&w).map(|(y, c)| c * y * y).sum()
        };
        let tape = net.forward_batch(&x, b).unwrap();
        let dy: Vec<f64> = tape.output().iter().zip(&w).map(|(y, c)| 2.0 * c * y).collect();
        let (g, dx) = net.backward(&tape, &dy).unwrap();
        assert_close(&g.flatten(), &numeric_grad(&net, loss), &format!("{out_act:?}"));

        let num_dx: Vec<f64> = (0..x.len())
            .map(|i| {
                let eval = |d: f64| {
                    let mut xx = x.clone();
                    xx[i] += d;
                    let t = net.forward_batch(&xx, b).unwrap();
                    t.output().iter().zip(&w).map(|(y, c)| c * y * y).sum::<f64>()
                };
                (eval(H) - eval(-H)) / (2.0 * H)
            })
            .collect();
        assert_close(&dx, &num_dx, "input");
    }
}

fn small_bundle() -> AutoencoderBundle {
    let cfg = AeConfig {
        latent_dim: 3,
        hidden: vec![8],
        seed: 4,
        ..AeConfig::default()
    };
    AutoencoderBundle::init(12, 400.0, &cfg).unwrap()
}

#[test]
fn autoencoder_loss_with_both_label_terms() {
    let bundle = small_bundle();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let xs: Vec<Vec<f64>> = (0..6).map(|_| random_vec(&mut rng, 12, -450.0, 450.0)).collect();
    let refs: Vec<&[f64]> = xs.iter().map(|v| v.as_slice()).collect();
    let ys = [1, 0, 1, 1, 0, 0];
    for terms in [
        ClassTerms::default(),
        ClassTerms {
            weight: 5.0,
            invalid_term: true,
        },
    ] {
        let (_, g) = batch_loss_and_grads(&bundle, &refs, &ys, &terms).unwrap();
        let total = |b: &AutoencoderBundle| batch_loss_and_grads(b, &refs, &ys, &terms).unwrap().0.total();
        let parts: [(&str, fn(&mut AutoencoderBundle) -> &mut DenseNet, &lateq::neural::Grads); 3] = [
            ("encoder", |b| &mut b.encoder, &g.encoder),
            ("decoder", |b| &mut b.decoder, &g.decoder),
            ("classifier", |b| &mut b.classifier, &g.classifier),
        ];
        for (name, pick, grads) in parts {
            let mut probe = bundle.clone();
            let net = pick(&mut probe).clone();
            let num = numeric_grad(&net, |n| {
                *pick(&mut probe) = n.clone();
                total(&probe)
            });
            assert_close(&grads.flatten(), &num, name);
        }
    }
}

fn transitions(rng: &mut ChaCha8Rng, l: usize, d: usize, n: usize) -> Vec<Transition> {
    (0..n)
        .map(|_| {
            let a_raw = random_vec(rng, d, -0.2, 1.2);
            Transition {
                s: random_vec(rng, l, -1.0, 1.0),
                s_next: random_vec(rng, l, -1.0, 1.0),
                a: a_raw.iter().map(|v| v.clamp(0.0, 1.0)).collect(),
                a_raw,
                r: rng.random_range(-3.0..0.0),
            }
        })
        .collect()
}

#[test]
fn a2c_loss_gradients() {
    let cfg = A2CConfig {
        hidden: vec![9, 7],
        init_log_std: -0.7,
        seed: 5,
        ..A2CConfig::default()
    };
    let agent = Agent::new(4, 3, &cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let batch = transitions(&mut rng, 4, 3, 8);
    let fixed = detached_targets(&agent, &batch, cfg.gamma).unwrap();
    let loss = |a: &Agent| a2c_loss_given(a, &batch, &fixed, &cfg).unwrap().0.total;
    let (_, g) = a2c_loss_given(&agent, &batch, &fixed, &cfg).unwrap();

    let mut probe = agent.clone();
    let num = numeric_grad(&agent.actor, |n| {
        probe.actor = n.clone();
        loss(&probe)
    });
    assert_close(&g.actor.flatten(), &num, "actor");

    let mut probe = agent.clone();
    let num = numeric_grad(&agent.critic, |n| {
        probe.critic = n.clone();
        loss(&probe)
    });
    assert_close(&g.critic.flatten(), &num, "critic");

    let ls = agent.log_std().to_vec();
    let num: Vec<f64> = (0..ls.len())
        .map(|j| {
            let eval = |d: f64| {
                let mut a = agent.clone();
                let mut v = ls.clone();
                v[j] += d;
                a.set_log_std(&v).unwrap();
                loss(&a)
            };
            (eval(H) - eval(-H)) / (2.0 * H)
        })
        .collect();
    assert_close(&g.log_std, &num, "log_std");
}

#[test]
fn branching_q_gradients() {
    let q = BranchingQ::new(3, 4, 5, &[10, 8], 6).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let states: Vec<Vec<f64>> = (0..7).map(|_| random_vec(&mut rng, 3, -1.0, 1.0)).collect();
    let refs: Vec<&[f64]> = states.iter().map(|v| v.as_slice()).collect();
    let actions: Vec<Vec<usize>> = (0..7).map(|_| (0..4).map(|_| rng.random_range(0..5)).collect()).collect();
    let rewards = random_vec(&mut rng, 7, -2.0, 0.0);
    let (_, g) = q.loss_and_grads(&refs, &actions, &rewards).unwrap();
    let mut probe = q.clone();
    let num = numeric_grad(&q.net, |n| {
        probe.net = n.clone();
        probe.loss_and_grads(&refs, &actions, &rewards).unwrap().0
    });
    assert_close(&g.flatten(), &num, "q");
}

#[test]
fn ddpg_critic_and_actor_gradients() {
    let d = 4;
    let agent = DdpgAgent::new(d, &[9, 6], 8).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let b = 6;
    let sa = random_vec(&mut rng, b * (d + 1), 0.0, 1.0);
    let targets = random_vec(&mut rng, b, 0.0, 100.0);
    let (_, g) = agent.critic_loss(&sa, &targets).unwrap();
    let mut probe = agent.clone();
    let num = numeric_grad(&agent.critic, |n| {
        probe.critic = n.clone();
        probe.critic_loss(&sa, &targets).unwrap().0
    });
    assert_close(&g.flatten(), &num, "critic");

    let states = random_vec(&mut rng, b * d, 0.0, 1.0);
    let (_, g) = agent.actor_loss(&states, b).unwrap();
    let mut probe = agent.clone();
    let num = numeric_grad(&agent.actor, |n| {
        probe.actor = n.clone();
        probe.actor_loss(&states, b).unwrap().0
    });
    assert_close(&g.flatten(), &num, "actor");
}
