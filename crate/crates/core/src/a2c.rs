//! One-step advantage actor-critic over equalizer actions.
//!
//! The actor maps a latent state to the mean of a diagonal Gaussian over
//! `[0,1]^d` (sigmoid head) with a learned, state-independent log standard
//! deviation. Each segment is its own episode: the executed action is the
//! clipped sample, the reward is minus the latent distance of the equalized
//! segment to the anchor, and the critic's value of the resulting state
//! enters the advantage through the discount.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::equalizer::{map_action, EqualizerKind, EqualizerSetting, ParamRanges};
use crate::error::{Error, Result};
use crate::latent::{distance, AnchorPoint, AutoencoderBundle, LatentVector};
use crate::neural::{Activation, Adam, AdamConfig, DenseNet, Grads};
use crate::signal::Segment;

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 1.0;
const HALF_LOG_2PI: f64 = 0.918_938_533_204_672_8;

/// Entropy of one Gaussian dimension with the given log standard deviation.
pub fn gaussian_entropy(log_std: f64) -> f64 {
    log_std + 0.5 + HALF_LOG_2PI
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct A2CConfig {
    pub lr: f64,
    pub gamma: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub epochs: usize,
    pub batch: usize,
    pub hidden: Vec<usize>,
    pub init_log_std: f64,
    pub seed: u64,
    /// Stop once the epoch-mean reward moved less than `stop_tol` for
    /// `stop_window` consecutive epochs.
    pub stop_tol: f64,
    pub stop_window: usize,
    /// Mean action of the untrained policy; the actor's output biases are
    /// set to match. `None` leaves them random, giving means near 0.5.
    #[serde(default)]
    pub initial_mean: Option<Vec<f64>>,
}

impl Default for A2CConfig {
    fn default() -> Self {
        Self {
            lr: 5e-4,
            gamma: 0.98,
            entropy_coef: 1e-2,
            value_coef: 0.5,
            epochs: 300,
            batch: 64,
            hidden: vec![64, 64],
            init_log_std: -2.0,
            seed: 0,
            stop_tol: 1e-4,
            stop_window: 20,
            initial_mean: None,
        }
    }
}

impl A2CConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Config(format!("gamma must lie in [0, 1], got {}", self.gamma)));
        }
        if !(self.entropy_coef >= 0.0 && self.value_coef >= 0.0) {
            return Err(Error::Config("entropy and value coefficients must be >= 0".into()));
        }
        if !(self.lr > 0.0) || self.batch == 0 || self.epochs == 0 {
            return Err(Error::Config("lr, batch and epochs must be positive".into()));
        }
        if self.hidden.contains(&0) {
            return Err(Error::Config("hidden widths must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyOutput {
    pub mean: Vec<f64>,
    pub log_std: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub actor: DenseNet,
    pub critic: DenseNet,
    log_std: Vec<f64>,
}

impl Agent {
    pub fn new(state_dim: usize, action_dim: usize, cfg: &A2CConfig) -> Result<Self> {
        cfg.validate()?;
        let mut dims = vec![state_dim];
        dims.extend(&cfg.hidden);
        let mut act = vec![Activation::Relu; cfg.hidden.len()];
        let mut adims = dims.clone();
        adims.push(action_dim);
        act.push(Activation::Sigmoid);
        let actor = DenseNet::init(&adims, &act, cfg.seed)?;
        let mut cdims = dims;
        cdims.push(1);
        *act.last_mut().expect("non-empty") = Activation::Linear;
        let critic = DenseNet::init(&cdims, &act, cfg.seed.wrapping_add(1))?;
        let mut agent = Self {
            actor,
            critic,
            log_std: vec![0.0; action_dim],
        };
        agent.set_log_std(&vec![cfg.init_log_std; action_dim])?;
        if let Some(m) = &cfg.initial_mean {
            if m.len() != action_dim {
                return Err(Error::Config(format!("initial mean has {} components, expected {action_dim}", m.len())));
            }
            let mut t = agent.actor.tensors_mut();
            let bias = t.last_mut().expect("actor has layers");
            for (b, &v) in bias.iter_mut().zip(m) {
                let p = v.clamp(0.02, 0.98);
                *b = (p / (1.0 - p)).ln();
            }
        }
        Ok(agent)
    }

    pub fn state_dim(&self) -> usize {
        self.actor.input_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.actor.output_dim()
    }

    pub fn log_std(&self) -> &[f64] {
        &self.log_std
    }

    /// Sets the log standard deviation, clamped to its allowed range.
    pub fn set_log_std(&mut self, v: &[f64]) -> Result<()> {
        if v.len() != self.action_dim() {
            return Err(Error::Shape("log_std length must equal the action dimension".into()));
        }
        self.log_std = v.iter().map(|x| x.clamp(LOG_STD_MIN, LOG_STD_MAX)).collect();
        Ok(())
    }

    pub fn policy(&self, s: &[f64]) -> Result<PolicyOutput> {
        Ok(PolicyOutput {
            mean: self.actor.predict(s)?,
            log_std: self.log_std.clone(),
        })
    }

    pub fn value(&self, s: &[f64]) -> Result<f64> {
        Ok(self.critic.predict(s)?[0])
    }

    /// Draws `(pre-clip, clipped)` actions.
    pub fn sample_action(&self, s: &[f64], rng: &mut ChaCha8Rng) -> Result<(Vec<f64>, Vec<f64>)> {
        let p = self.policy(s)?;
        let raw: Vec<f64> = p
            .mean
            .iter()
            .zip(&p.log_std)
            .map(|(m, ls)| {
                let n: f64 = StandardNormal.sample(rng);
                m + ls.exp() * n
            })
            .collect();
        let clipped = raw.iter().map(|a| a.clamp(0.0, 1.0)).collect();
        Ok((raw, clipped))
    }

    /// Deterministic mean action.
    pub fn mean_action(&self, s: &[f64]) -> Result<Vec<f64>> {
        self.actor.predict(s)
    }

    pub fn infer_params(&self, s: &[f64], ranges: &ParamRanges) -> Result<Vec<f64>> {
        Ok(map_action(&self.mean_action(s)?, ranges)?.values)
    }

    pub fn log_prob(&self, s: &[f64], a_raw: &[f64]) -> Result<f64> {
        let mean = self.actor.predict(s)?;
        Ok(log_density(&mean, &self.log_std, a_raw))
    }

    pub fn entropy(&self) -> f64 {
        self.log_std.iter().map(|&l| gaussian_entropy(l)).sum()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let a: Agent = serde_json::from_str(s)?;
        let actor = DenseNet::from_layers(a.actor.layers().to_vec())?;
        let critic = DenseNet::from_layers(a.critic.layers().to_vec())?;
        if actor.input_dim() != critic.input_dim() || critic.output_dim() != 1 || a.log_std.len() != actor.output_dim() {
            return Err(Error::Shape("actor, critic and log_std do not agree".into()));
        }
        Ok(Self {
            actor,
            critic,
            log_std: a.log_std,
        })
    }
}

pub fn log_density(mean: &[f64], log_std: &[f64], a: &[f64]) -> f64 {
    mean.iter()
        .zip(log_std)
        .zip(a)
        .map(|((m, ls), x)| {
            let z = (x - m) / ls.exp();
            -0.5 * z * z - ls - HALF_LOG_2PI
        })
        .sum()
}

pub fn compute_advantage(r: f64, gamma: f64, v_curr: f64, v_next: f64) -> f64 {
    r + gamma * v_next - v_curr
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub s: LatentVector,
    pub s_next: LatentVector,
    /// Sample before clipping; the log-density is evaluated here.
    pub a_raw: Vec<f64>,
    /// Executed action.
    pub a: Vec<f64>,
    pub r: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossTerms {
    pub policy: f64,
    pub value: f64,
    pub entropy: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentGrads {
    pub actor: Grads,
    pub log_std: Vec<f64>,
    pub critic: Grads,
}

/// Detached quantities of one transition: advantage and critic target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detached {
    pub advantage: f64,
    pub target: f64,
}

pub fn detached_targets(agent: &Agent, batch: &[Transition], gamma: f64) -> Result<Vec<Detached>> {
    batch
        .iter()
        .map(|t| {
            let v = agent.value(&t.s)?;
            let vn = agent.value(&t.s_next)?;
            Ok(Detached {
                advantage: compute_advantage(t.r, gamma, v, vn),
                target: t.r + gamma * vn,
            })
        })
        .collect()
}

/// Joint loss and gradients with advantages and critic targets held fixed.
pub fn a2c_loss_given(agent: &Agent, batch: &[Transition], fixed: &[Detached], cfg: &A2CConfig) -> Result<(LossTerms, AgentGrads)> {
    let b = batch.len();
    if b == 0 {
        return Err(Error::Data("empty transition batch".into()));
    }
    if fixed.len() != b {
        return Err(Error::Shape("one detached target per transition required".into()));
    }
    let l = agent.state_dim();
    let d = agent.action_dim();
    let mut states = Vec::with_capacity(b * l);
    for t in batch {
        if t.s.len() != l || t.a_raw.len() != d {
            return Err(Error::Shape("transition dimensions do not match the agent".into()));
        }
        states.extend(&t.s);
    }
    let inv_b = 1.0 / b as f64;
    let sig: Vec<f64> = agent.log_std.iter().map(|x| x.exp()).collect();

    let atape = agent.actor.forward_batch(&states, b)?;
    let means = atape.output();
    let mut d_mean = vec![0.0; b * d];
    let mut g_log_std = vec![0.0; d];
    let mut policy = 0.0;
    for (i, (t, f)) in batch.iter().zip(fixed).enumerate() {
        let mu = &means[i * d..(i + 1) * d];
        policy -= f.advantage * log_density(mu, &agent.log_std, &t.a_raw) * inv_b;
        for j in 0..d {
            let u = (t.a_raw[j] - mu[j]) / sig[j];
            d_mean[i * d + j] = -f.advantage * u / sig[j] * inv_b;
            g_log_std[j] -= f.advantage * (u * u - 1.0) * inv_b;
        }
    }
    let (g_actor, _) = agent.actor.backward(&atape, &d_mean)?;

    let ctape = agent.critic.forward_batch(&states, b)?;
    let mut d_v = vec![0.0; b];
    let mut value = 0.0;
    for (i, f) in fixed.iter().enumerate() {
        let delta = f.target - ctape.output()[i];
        value += 0.5 * cfg.value_coef * delta * delta * inv_b;
        d_v[i] = -cfg.value_coef * delta * inv_b;
    }
    let (g_critic, _) = agent.critic.backward(&ctape, &d_v)?;

    let entropy = agent.entropy();
    for g in &mut g_log_std {
        *g -= cfg.entropy_coef;
    }
    let total = policy + value - cfg.entropy_coef * entropy;
    Ok((
        LossTerms {
            policy,
            value,
            entropy,
            total,
        },
        AgentGrads {
            actor: g_actor,
            log_std: g_log_std,
            critic: g_critic,
        },
    ))
}

pub fn a2c_loss(agent: &Agent, batch: &[Transition], cfg: &A2CConfig) -> Result<(LossTerms, AgentGrads)> {
    if batch.is_empty() {
        return Err(Error::Data("empty transition batch".into()));
    }
    let fixed = detached_targets(agent, batch, cfg.gamma)?;
    a2c_loss_given(agent, batch, &fixed, cfg)
}

/// Optimizer over actor, log_std and critic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentOptimizer {
    actor: Adam,
    log_std: Adam,
    critic: Adam,
}

impl AgentOptimizer {
    pub fn new(lr: f64) -> Self {
        let c = AdamConfig::with_lr(lr);
        Self {
            actor: Adam::new(c),
            log_std: Adam::new(c),
            critic: Adam::new(c),
        }
    }

    pub fn step(&mut self, agent: &mut Agent, g: &AgentGrads) -> Result<()> {
        agent.actor.adam_step(&mut self.actor, &g.actor)?;
        agent.critic.adam_step(&mut self.critic, &g.critic)?;
        let mut ls = agent.log_std.clone();
        self.log_std.step(&mut [ls.as_mut_slice()], &[g.log_std.as_slice()])?;
        agent.set_log_std(&ls)
    }
}

/// A set of one-step episodes indexed by state.
pub trait Environment {
    fn state_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    fn len(&self) -> usize;
    fn state(&self, i: usize) -> &[f64];
    /// Reward and next state for executing `a` in episode `i`.
    fn step(&self, i: usize, a: &[f64]) -> Result<(f64, LatentVector)>;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Reward of equalizing `seg` with action `a`: `-|c - encode(EQ(seg))|`,
/// together with the equalized segment's latent.
pub fn compute_reward(
    anchor: &AnchorPoint,
    bundle: &AutoencoderBundle,
    seg: &Segment,
    a: &[f64],
    kind: EqualizerKind,
) -> Result<(f64, LatentVector)> {
    let eq = EqualizerSetting::from_action(kind, a)?.apply(&seg.to_waveform()?)?;
    let z = bundle.encode(eq.samples())?;
    if z.len() != anchor.c.len() {
        return Err(Error::Shape("anchor and latent dimensions differ".into()));
    }
    Ok((-distance(&anchor.c, &z), z))
}

/// Equalization environment over channel segments.
pub struct EqualizerEnv<'a> {
    pub bundle: &'a AutoencoderBundle,
    pub anchor: &'a AnchorPoint,
    pub segments: &'a [Segment],
    pub kind: EqualizerKind,
    states: Vec<LatentVector>,
}

impl<'a> EqualizerEnv<'a> {
    pub fn new(bundle: &'a AutoencoderBundle, anchor: &'a AnchorPoint, segments: &'a [Segment], kind: EqualizerKind) -> Result<Self> {
        let xs: Vec<&[f64]> = segments.iter().map(|s| s.data.as_slice()).collect();
        let states = bundle.encode_many(&xs)?;
        Ok(Self {
            bundle,
            anchor,
            segments,
            kind,
            states,
        })
    }
}

impl Environment for EqualizerEnv<'_> {
    fn state_dim(&self) -> usize {
        self.bundle.latent_dim()
    }
    fn action_dim(&self) -> usize {
        self.kind.dim()
    }
    fn len(&self) -> usize {
        self.segments.len()
    }
    fn state(&self, i: usize) -> &[f64] {
        &self.states[i]
    }
    fn step(&self, i: usize, a: &[f64]) -> Result<(f64, LatentVector)> {
        compute_reward(self.anchor, self.bundle, &self.segments[i], a, self.kind)
    }
}

/// Bandit whose reward is `-|a - a*|`, ignoring the state.
pub struct RiggedBandit {
    pub target: Vec<f64>,
    states: Vec<Vec<f64>>,
}

impl RiggedBandit {
    pub fn new(target: Vec<f64>, state_dim: usize, n_states: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let states = (0..n_states)
            .map(|_| (0..state_dim).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect();
        Self { target, states }
    }

    /// One seeded state repeated `episodes` times per epoch.
    pub fn single_state(target: Vec<f64>, state_dim: usize, episodes: usize, seed: u64) -> Self {
        let mut b = Self::new(target, state_dim, 1, seed);
        b.states = vec![b.states[0].clone(); episodes];
        b
    }
}

impl Environment for RiggedBandit {
    fn state_dim(&self) -> usize {
        self.states.first().map_or(0, Vec::len)
    }
    fn action_dim(&self) -> usize {
        self.target.len()
    }
    fn len(&self) -> usize {
        self.states.len()
    }
    fn state(&self, i: usize) -> &[f64] {
        &self.states[i]
    }
    fn step(&self, i: usize, a: &[f64]) -> Result<(f64, LatentVector)> {
        Ok((-distance(a, &self.target), self.states[i].clone()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_reward: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub agent: Agent,
    pub trace: Vec<EpochStats>,
    pub updates: usize,
    /// Environment steps taken while training.
    pub evaluations: usize,
    pub early_stopped: bool,
}

/// Runs at most `cfg.epochs` passes over the environment's episodes in
/// shuffled batches, one update per batch.
pub fn train<E: Environment>(env: &E, cfg: &A2CConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if env.is_empty() {
        return Err(Error::Data("environment has no episodes".into()));
    }
    let mut agent = Agent::new(env.state_dim(), env.action_dim(), cfg)?;
    let mut opt = AgentOptimizer::new(cfg.lr);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x5eed));
    let mut order: Vec<usize> = (0..env.len()).collect();
    let mut trace = Vec::new();
    let (mut updates, mut evaluations, mut calm) = (0, 0, 0);
    let mut early_stopped = false;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut sum = EpochStats {
            epoch,
            mean_reward: 0.0,
            policy_loss: 0.0,
            value_loss: 0.0,
            entropy: 0.0,
        };
        let mut n_batches = 0usize;
        for chunk in order.chunks(cfg.batch) {
            let mut batch = Vec::with_capacity(chunk.len());
            for &i in chunk {
                let s = env.state(i).to_vec();
                let (a_raw, a) = agent.sample_action(&s, &mut rng)?;
                let (r, s_next) = env.step(i, &a)?;
                evaluations += 1;
                sum.mean_reward += r;
                batch.push(Transition { s, s_next, a_raw, a, r });
            }
            let (terms, g) = a2c_loss(&agent, &batch, cfg)?;
            if !terms.total.is_finite() {
                return Err(Error::Optim(format!("loss diverged at epoch {epoch}")));
            }
            opt.step(&mut agent, &g)?;
            updates += 1;
            n_batches += 1;
            sum.policy_loss += terms.policy;
            sum.value_loss += terms.value;
            sum.entropy += terms.entropy;
        }
        sum.mean_reward /= env.len() as f64;
        let nb = n_batches as f64;
        sum.policy_loss /= nb;
        sum.value_loss /= nb;
        sum.entropy /= nb;
        if let Some(prev) = trace.last().map(|p: &EpochStats| p.mean_reward) {
            if (sum.mean_reward - prev).abs() < cfg.stop_tol {
                calm += 1;
            } else {
                calm = 0;
            }
        }
        trace.push(sum);
        if calm >= cfg.stop_window {
            early_stopped = true;
            break;
        }
    }
    Ok(TrainOutcome {
        agent,
        trace,
        updates,
        evaluations,
        early_stopped,
    })
}

pub fn trace_csv(trace: &[EpochStats]) -> String {
    let mut out = String::from("epoch,mean_reward,policy_loss,value_loss,entropy\n");
    for e in trace {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            e.epoch, e.mean_reward, e.policy_loss, e.value_loss, e.entropy
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn advantage_examples() {
        assert_eq!(compute_advantage(-2.0, 0.0, -3.0, 100.0), 1.0);
        assert!((compute_advantage(-2.0, 0.98, -3.0, -1.0) - 0.02).abs() < 1e-12);
        assert_eq!(compute_advantage(-1.25, 0.98, 0.0, 0.0), -1.25);
    }

    #[test]
    fn unit_entropy() {
        assert!((gaussian_entropy(0.0) - 1.418_938_533_204_672_7).abs() < 1e-12);
    }

    #[test]
    fn zero_raw_mean_is_half() {
        let mut agent = Agent::new(3, 2, &A2CConfig::default()).unwrap();
        let n = agent.actor.num_params();
        agent.actor.set_params_flat(&vec![0.0; n]).unwrap();
        assert_eq!(agent.mean_action(&[1.0, 2.0, 3.0]).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn tight_policy_stays_near_mean() {
        let mut agent = Agent::new(3, 1, &A2CConfig::default()).unwrap();
        agent.set_log_std(&[-5.0]).unwrap();
        let s = [0.3, -0.2, 0.9];
        let m = agent.mean_action(&s).unwrap()[0];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let inside = (0..10_000)
            .filter(|_| (agent.sample_action(&s, &mut rng).unwrap().0[0] - m).abs() <= 0.03)
            .count();
        assert!(inside >= 9_900);
    }

    #[test]
    fn sampling_is_reproducible_and_clipped() {
        let agent = Agent::new(2, 3, &A2CConfig {
            init_log_std: 1.0,
            ..A2CConfig::default()
        })
        .unwrap();
        let draw = |seed| agent.sample_action(&[0.1, 0.2], &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        assert_eq!(draw(3), draw(3));
        let (_, a) = draw(4);
        assert!(a.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn log_std_is_clamped() {
        let mut agent = Agent::new(2, 2, &A2CConfig::default()).unwrap();
        agent.set_log_std(&[-9.0, 4.0]).unwrap();
        assert_eq!(agent.log_std(), &[-5.0, 1.0]);
    }

    fn toy_batch(agent: &Agent, rng: &mut ChaCha8Rng) -> Vec<Transition> {
        (0..4)
            .map(|i| {
                let s: Vec<f64> = (0..agent.state_dim()).map(|j| ((i * 3 + j) as f64 * 0.7).sin()).collect();
                let (a_raw, a) = agent.sample_action(&s, rng).unwrap();
                let s_next = s.iter().map(|v| v * 0.5 + 0.1).collect();
                Transition {
                    s,
                    s_next,
                    a_raw,
                    a,
                    r: -0.3 * i as f64 - 0.1,
                }
            })
            .collect()
    }

    #[test]
    fn policy_only_loss() {
        let cfg = A2CConfig {
            entropy_coef: 0.0,
            value_coef: 0.0,
            ..A2CConfig::default()
        };
        let agent = Agent::new(3, 2, &cfg).unwrap();
        let batch = toy_batch(&agent, &mut ChaCha8Rng::seed_from_u64(1));
        let (terms, _) = a2c_loss(&agent, &batch, &cfg).unwrap();
        let fixed = detached_targets(&agent, &batch, cfg.gamma).unwrap();
        let expect = -batch
            .iter()
            .zip(&fixed)
            .map(|(t, f)| f.advantage * agent.log_prob(&t.s, &t.a_raw).unwrap())
            .sum::<f64>()
            / batch.len() as f64;
        assert!((terms.total - expect).abs() < 1e-12);
        assert!(matches!(a2c_loss(&agent, &[], &cfg), Err(Error::Data(_))));
    }

    #[test]
    fn positive_advantage_step_raises_log_prob() {
        let cfg = A2CConfig {
            entropy_coef: 0.0,
            value_coef: 0.0,
            lr: 1e-4,
            ..A2CConfig::default()
        };
        let mut agent = Agent::new(3, 2, &cfg).unwrap();
        let batch = toy_batch(&agent, &mut ChaCha8Rng::seed_from_u64(2))[..1].to_vec();
        let fixed = [Detached {
            advantage: 1.0,
            target: 0.0,
        }];
        let before = agent.log_prob(&batch[0].s, &batch[0].a_raw).unwrap();
        let (_, g) = a2c_loss_given(&agent, &batch, &fixed, &cfg).unwrap();
        AgentOptimizer::new(cfg.lr).step(&mut agent, &g).unwrap();
        assert!(agent.log_prob(&batch[0].s, &batch[0].a_raw).unwrap() > before);
    }

    #[test]
    fn one_epoch_one_batch_changes_params() {
        let env = RiggedBandit::new(vec![0.2, 0.8], 3, 8, 1);
        let cfg = A2CConfig {
            epochs: 1,
            batch: 8,
            ..A2CConfig::default()
        };
        let out = train(&env, &cfg).unwrap();
        assert_eq!((out.trace.len(), out.updates, out.evaluations), (1, 1, 8));
        let init = Agent::new(3, 2, &cfg).unwrap();
        assert_ne!(out.agent.actor.params_flat(), init.actor.params_flat());
        let again = train(&env, &cfg).unwrap();
        assert_eq!(out.trace, again.trace);
    }
}
