//! Comparison optimizers over the normalized action box `[0,1]^d`:
//! genetic algorithm, particle swarm, exhaustive grid, branching
//! Q-learning and sequential DDPG, plus the bit-error rate used by DDPG.

use std::collections::VecDeque;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::a2c::Environment;
use crate::equalizer::{EqualizerKind, EqualizerSetting};
use crate::error::{Error, Result};
use crate::latent::{distance, AutoencoderBundle, LatentVector};
use crate::neural::{Activation, Adam, AdamConfig, DenseNet, Grads};
use crate::signal::{Segment, Waveform};

/// Largest lattice the grid search will enumerate.
pub const GRID_BUDGET: u64 = 10_000_000;

fn checked(v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Objective(format!("objective returned {v}")))
    }
}

fn clip01(v: f64) -> f64 {
    v.clamp(0.0, 1.0)
}

// ---------------------------------------------------------------- GA

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaConfig {
    pub population: usize,
    pub mutation: f64,
    /// Convergence threshold on the best-fitness trace.
    pub eps: f64,
    pub patience: usize,
    pub max_generations: usize,
    pub elites: usize,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            population: 25,
            mutation: 0.1,
            eps: 0.0025,
            patience: 10,
            max_generations: 200,
            elites: 1,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population < 2 {
            return Err(Error::Config("population must be at least 2".into()));
        }
        if !(self.eps > 0.0) || self.patience == 0 || self.max_generations == 0 {
            return Err(Error::Config("eps, patience and generation cap must be positive".into()));
        }
        if self.elites >= self.population {
            return Err(Error::Config("elites must be fewer than the population".into()));
        }
        Ok(())
    }
}

/// Cut points used to recombine two parents.
pub fn crossover_points(d: usize) -> Vec<usize> {
    match d {
        4 => vec![2],
        8 => vec![3, 6],
        _ => vec![(d / 2).max(1)],
    }
}

/// Child taking genes from `a` and `b` alternately between cut points.
pub fn crossover(a: &[f64], b: &[f64], points: &[usize]) -> Vec<f64> {
    let mut from_a = true;
    let mut next = points.iter().peekable();
    (0..a.len())
        .map(|i| {
            while next.peek().is_some_and(|&&p| p == i) {
                from_a = !from_a;
                next.next();
            }
            if from_a {
                a[i]
            } else {
                b[i]
            }
        })
        .collect()
}

/// Roulette-wheel draw. Fitness is shifted to be positive only when some
/// value is non-positive.
pub fn roulette_select(fitness: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let min = fitness.iter().copied().fold(f64::INFINITY, f64::min);
    let shift = if min <= 0.0 { -min + 1e-9 } else { 0.0 };
    let total: f64 = fitness.iter().map(|f| f + shift).sum();
    if !(total > 0.0) {
        return rng.random_range(0..fitness.len());
    }
    let mut u = rng.random::<f64>() * total;
    for (i, f) in fitness.iter().enumerate() {
        u -= f + shift;
        if u < 0.0 {
            return i;
        }
    }
    fitness.len() - 1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimResult {
    pub best: Vec<f64>,
    pub best_score: f64,
    /// Best score after each generation / iteration.
    pub trace: Vec<f64>,
    pub evaluations: usize,
    /// True when a convergence rule (not the cap) ended the run.
    pub converged: bool,
}

/// Genetic algorithm maximising `objective` over `[0,1]^d`.
pub fn run_ga<F>(mut objective: F, d: usize, cfg: &GaConfig, seed: u64) -> Result<OptimResult>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    cfg.validate()?;
    if d == 0 {
        return Err(Error::Parameter("dimension must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = crossover_points(d);
    let mut pop: Vec<Vec<f64>> = (0..cfg.population)
        .map(|_| (0..d).map(|_| rng.random::<f64>()).collect())
        .collect();
    let mut evaluations = 0;
    let mut trace = Vec::new();
    let mut best = (Vec::new(), f64::NEG_INFINITY);
    let mut calm = 0;
    let mut converged = false;
    for _ in 0..cfg.max_generations {
        let mut fit = Vec::with_capacity(pop.len());
        for p in &pop {
            fit.push(checked(objective(p)?)?);
            evaluations += 1;
        }
        for (p, &f) in pop.iter().zip(&fit) {
            if f > best.1 {
                best = (p.clone(), f);
            }
        }
        if let Some(&prev) = trace.last() {
            let delta: f64 = best.1 - prev;
            calm = if delta.abs() <= cfg.eps { calm + 1 } else { 0 };
        }
        trace.push(best.1);
        if calm >= cfg.patience {
            converged = true;
            break;
        }
        let mut order: Vec<usize> = (0..pop.len()).collect();
        order.sort_by(|&a, &b| fit[b].total_cmp(&fit[a]).then(a.cmp(&b)));
        let mut next: Vec<Vec<f64>> = order[..cfg.elites].iter().map(|&i| pop[i].clone()).collect();
        while next.len() < cfg.population {
            let a = roulette_select(&fit, &mut rng);
            let b = roulette_select(&fit, &mut rng);
            let mut child = crossover(&pop[a], &pop[b], &points);
            for g in &mut child {
                *g = clip01(*g + rng.random_range(-cfg.mutation..=cfg.mutation));
            }
            next.push(child);
        }
        pop = next;
    }
    Ok(OptimResult {
        best: best.0,
        best_score: best.1,
        trace,
        evaluations,
        converged,
    })
}

// ---------------------------------------------------------------- PSO

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsoConfig {
    pub swarm: usize,
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
    pub iterations: usize,
}

impl Default for PsoConfig {
    fn default() -> Self {
        Self {
            swarm: 30,
            inertia: 0.729,
            cognitive: 1.494,
            social: 1.494,
            iterations: 100,
        }
    }
}

/// Global-best particle swarm maximising `objective`; positions are clipped
/// to the box after every move.
pub fn run_pso<F>(mut objective: F, d: usize, cfg: &PsoConfig, seed: u64) -> Result<OptimResult>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if cfg.swarm == 0 || cfg.iterations == 0 || d == 0 {
        return Err(Error::Config("swarm size, iterations and dimension must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x: Vec<Vec<f64>> = (0..cfg.swarm)
        .map(|_| (0..d).map(|_| rng.random::<f64>()).collect())
        .collect();
    let mut v = vec![vec![0.0; d]; cfg.swarm];
    let mut evaluations = 0;
    let mut pbest = x.clone();
    let mut pscore = Vec::with_capacity(cfg.swarm);
    for p in &x {
        pscore.push(checked(objective(p)?)?);
        evaluations += 1;
    }
    let mut g = 0;
    for i in 1..cfg.swarm {
        if pscore[i] > pscore[g] {
            g = i;
        }
    }
    let mut gbest = (pbest[g].clone(), pscore[g]);
    let mut trace = vec![gbest.1];
    for _ in 0..cfg.iterations {
        for i in 0..cfg.swarm {
            for j in 0..d {
                let (r1, r2): (f64, f64) = (rng.random(), rng.random());
                v[i][j] = cfg.inertia * v[i][j]
                    + cfg.cognitive * r1 * (pbest[i][j] - x[i][j])
                    + cfg.social * r2 * (gbest.0[j] - x[i][j]);
                x[i][j] = clip01(x[i][j] + v[i][j]);
            }
            let s = checked(objective(&x[i])?)?;
            evaluations += 1;
            if s > pscore[i] {
                pscore[i] = s;
                pbest[i] = x[i].clone();
            }
            if s > gbest.1 {
                gbest = (x[i].clone(), s);
            }
        }
        trace.push(gbest.1);
    }
    Ok(OptimResult {
        best: gbest.0,
        best_score: gbest.1,
        trace,
        evaluations,
        converged: false,
    })
}

// ---------------------------------------------------------------- grid

/// Lattice point `index` of a `levels^d` grid, first coordinate most
/// significant.
pub fn grid_point(mut index: u64, d: usize, levels: usize) -> Vec<f64> {
    let mut p = vec![0.0; d];
    for j in (0..d).rev() {
        p[j] = (index % levels as u64) as f64 / (levels - 1) as f64;
        index /= levels as u64;
    }
    p
}

/// Exhaustive search of the uniform lattice; the first maximum in
/// lexicographic order wins.
pub fn run_grid<F>(mut objective: F, d: usize, levels: usize) -> Result<OptimResult>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if levels < 2 || d == 0 {
        return Err(Error::Parameter("grid needs at least 2 levels and 1 dimension".into()));
    }
    let total = (levels as u64).checked_pow(d as u32).filter(|&n| n <= GRID_BUDGET);
    let total = total.ok_or_else(|| Error::Budget(format!("{levels}^{d} grid points exceed {GRID_BUDGET}")))?;
    let mut best = (vec![0.0; d], f64::NEG_INFINITY);
    for idx in 0..total {
        let p = grid_point(idx, d, levels);
        let s = checked(objective(&p)?)?;
        if s > best.1 {
            best = (p, s);
        }
    }
    Ok(OptimResult {
        best: best.0,
        best_score: best.1,
        trace: vec![best.1],
        evaluations: total as usize,
        converged: true,
    })
}

// ---------------------------------------------------------------- BER

/// Fraction of UI-centre sign decisions that disagree with the transmitted
/// bits. Symbol `m` of the waveform carries `bits[m + offset]`.
pub fn compute_ber(w: &Waveform, bits: &[u8], offset: i64) -> Result<f64> {
    let (first, last) = w.symbol_span();
    if last < first {
        return Err(Error::Data("waveform holds no complete symbol".into()));
    }
    let mut errors = 0usize;
    let mut count = 0usize;
    for m in first..=last {
        let Some(idx) = w.ui_center_index(m) else { continue };
        let b = m + offset;
        if b < 0 {
            continue;
        }
        let bit = *bits
            .get(b as usize)
            .ok_or_else(|| Error::Data(format!("no transmitted bit for symbol {m}")))?;
        let decided = u8::from(w.samples()[idx] >= 0.0);
        errors += usize::from(decided != bit);
        count += 1;
    }
    if count == 0 {
        return Err(Error::Data("no symbol could be aligned with the bits".into()));
    }
    Ok(errors as f64 / count as f64)
}

// ---------------------------------------------------------------- Q-learning

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QConfig {
    pub levels: usize,
    pub replay: usize,
    pub batch: usize,
    pub eps_start: f64,
    pub eps_decay: f64,
    pub eps_floor: f64,
    pub lr: f64,
    /// Learning rate drops tenfold every `lr_step` epochs.
    pub lr_step: usize,
    pub lr_floor: f64,
    pub stop_window: usize,
    pub stop_std: f64,
    pub epochs: usize,
    pub hidden: Vec<usize>,
}

impl Default for QConfig {
    fn default() -> Self {
        Self {
            levels: 16,
            replay: 50_000,
            batch: 128,
            eps_start: 1.0,
            eps_decay: 0.975,
            eps_floor: 0.005,
            lr: 1e-3,
            lr_step: 25,
            lr_floor: 1e-5,
            stop_window: 20,
            stop_std: 0.025,
            epochs: 150,
            hidden: vec![64, 64],
        }
    }
}

impl QConfig {
    pub fn validate(&self) -> Result<()> {
        if self.levels < 2 {
            return Err(Error::Config("need at least 2 levels".into()));
        }
        if self.replay == 0 || self.batch == 0 || self.epochs == 0 || self.lr_step == 0 {
            return Err(Error::Config("replay, batch, epochs and lr step must be positive".into()));
        }
        if !(self.lr > 0.0 && self.lr_floor > 0.0 && self.eps_decay > 0.0 && self.eps_floor >= 0.0) {
            return Err(Error::Config("schedules must be positive".into()));
        }
        Ok(())
    }

    pub fn epsilon(&self, epoch: usize) -> f64 {
        (self.eps_start * self.eps_decay.powi(epoch as i32)).max(self.eps_floor)
    }

    pub fn learning_rate(&self, epoch: usize) -> f64 {
        (self.lr / 10f64.powi((epoch / self.lr_step) as i32)).max(self.lr_floor)
    }
}

/// Normalized action of level `index` out of `levels`.
pub fn decode_level(index: usize, levels: usize) -> f64 {
    index as f64 / (levels - 1) as f64
}

/// Every head regresses onto the same reward.
pub fn q_targets(r: f64, d: usize) -> Vec<f64> {
    vec![r; d]
}

/// Branching Q-network: shared trunk, one `levels`-wide head per dimension,
/// realised as a single `d * levels` output layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchingQ {
    pub net: DenseNet,
    pub dims: usize,
    pub levels: usize,
}

impl BranchingQ {
    pub fn new(state_dim: usize, dims: usize, levels: usize, hidden: &[usize], seed: u64) -> Result<Self> {
        let mut sizes = vec![state_dim];
        sizes.extend(hidden);
        sizes.push(dims * levels);
        let mut act = vec![Activation::Relu; hidden.len()];
        act.push(Activation::Linear);
        Ok(Self {
            net: DenseNet::init(&sizes, &act, seed)?,
            dims,
            levels,
        })
    }

    pub fn q_values(&self, s: &[f64]) -> Result<Vec<f64>> {
        self.net.predict(s)
    }

    pub fn greedy(&self, s: &[f64]) -> Result<Vec<usize>> {
        let q = self.q_values(s)?;
        Ok(q.chunks(self.levels)
            .map(|h| {
                let mut best = 0;
                for (i, v) in h.iter().enumerate() {
                    if *v > h[best] {
                        best = i;
                    }
                }
                best
            })
            .collect())
    }

    /// Mean squared error of the chosen heads against the shared target,
    /// averaged over batch and heads, with its parameter gradient.
    pub fn loss_and_grads(&self, states: &[&[f64]], actions: &[Vec<usize>], rewards: &[f64]) -> Result<(f64, Grads)> {
        let b = states.len();
        if b == 0 || actions.len() != b || rewards.len() != b {
            return Err(Error::Data("empty or inconsistent Q batch".into()));
        }
        let flat: Vec<f64> = states.iter().flat_map(|s| s.iter().copied()).collect();
        let tape = self.net.forward_batch(&flat, b)?;
        let out = tape.output();
        let width = self.dims * self.levels;
        let mut dy = vec![0.0; b * width];
        let mut loss = 0.0;
        let norm = 1.0 / (b * self.dims) as f64;
        for i in 0..b {
            let t = q_targets(rewards[i], self.dims);
            for (j, &a) in actions[i].iter().enumerate() {
                let k = i * width + j * self.levels + a;
                let e = out[k] - t[j];
                loss += e * e * norm;
                dy[k] = 2.0 * e * norm;
            }
        }
        let (g, _) = self.net.backward(&tape, &dy)?;
        Ok((loss, g))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QEpoch {
    pub epoch: usize,
    pub mean_reward: f64,
    pub epsilon: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QOutcome {
    pub q: BranchingQ,
    pub trace: Vec<QEpoch>,
    pub evaluations: usize,
    pub stopped_early: bool,
}

impl QOutcome {
    /// Greedy normalized action for a state.
    pub fn action(&self, s: &[f64]) -> Result<Vec<f64>> {
        Ok(self
            .q
            .greedy(s)?
            .into_iter()
            .map(|i| decode_level(i, self.q.levels))
            .collect())
    }
}

/// One-step branching Q-learning with per-head epsilon-greedy exploration
/// and a replay memory; one gradient step per environment step once the
/// memory holds a batch.
pub fn run_qlearning<E: Environment>(env: &E, cfg: &QConfig, seed: u64) -> Result<QOutcome> {
    cfg.validate()?;
    if env.is_empty() {
        return Err(Error::Data("environment has no episodes".into()));
    }
    let d = env.action_dim();
    let mut q = BranchingQ::new(env.state_dim(), d, cfg.levels, &cfg.hidden, seed)?;
    let mut opt = Adam::new(AdamConfig::with_lr(cfg.lr));
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x9e37));
    let mut memory: VecDeque<(usize, Vec<usize>, f64)> = VecDeque::with_capacity(cfg.replay.min(1 << 16));
    let mut trace: Vec<QEpoch> = Vec::new();
    let mut evaluations = 0;
    let mut stopped_early = false;
    let order: Vec<usize> = (0..env.len()).collect();
    for epoch in 0..cfg.epochs {
        let eps = cfg.epsilon(epoch);
        let lr = cfg.learning_rate(epoch);
        opt.set_lr(lr);
        let mut total = 0.0;
        for &i in &order {
            let s = env.state(i);
            let greedy = q.greedy(s)?;
            let idx: Vec<usize> = greedy
                .into_iter()
                .map(|g| {
                    if rng.random::<f64>() < eps {
                        rng.random_range(0..cfg.levels)
                    } else {
                        g
                    }
                })
                .collect();
            let a: Vec<f64> = idx.iter().map(|&k| decode_level(k, cfg.levels)).collect();
            let (r, _) = env.step(i, &a)?;
            evaluations += 1;
            total += r;
            if memory.len() == cfg.replay {
                memory.pop_front();
            }
            memory.push_back((i, idx, r));
            if memory.len() >= cfg.batch {
                let picks: Vec<&(usize, Vec<usize>, f64)> =
                    (0..cfg.batch).map(|_| &memory[rng.random_range(0..memory.len())]).collect();
                let states: Vec<&[f64]> = picks.iter().map(|p| env.state(p.0)).collect();
                let acts: Vec<Vec<usize>> = picks.iter().map(|p| p.1.clone()).collect();
                let rews: Vec<f64> = picks.iter().map(|p| p.2).collect();
                let (_, g) = q.loss_and_grads(&states, &acts, &rews)?;
                q.net.adam_step(&mut opt, &g)?;
            }
        }
        trace.push(QEpoch {
            epoch,
            mean_reward: total / env.len() as f64,
            epsilon: eps,
            lr,
        });
        if trace.len() >= cfg.stop_window {
            let w: Vec<f64> = trace[trace.len() - cfg.stop_window..].iter().map(|e| e.mean_reward).collect();
            if std_dev(&w) < cfg.stop_std {
                stopped_early = true;
                break;
            }
        }
    }
    Ok(QOutcome {
        q,
        trace,
        evaluations,
        stopped_early,
    })
}

pub fn std_dev(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64).sqrt()
}

/// Q-learning environment: reward is minus the latent distance between the
/// ideal input segment and the equalized output segment.
pub struct IdealMatchEnv<'a> {
    pub bundle: &'a AutoencoderBundle,
    pub outputs: &'a [Segment],
    pub kind: EqualizerKind,
    states: Vec<LatentVector>,
    ideal_latents: Vec<LatentVector>,
}

impl<'a> IdealMatchEnv<'a> {
    pub fn new(bundle: &'a AutoencoderBundle, outputs: &'a [Segment], ideals: &[Segment], kind: EqualizerKind) -> Result<Self> {
        if ideals.is_empty() || ideals.len() != outputs.len() {
            return Err(Error::Data(format!(
                "{} ideal input segments for {} output segments",
                ideals.len(),
                outputs.len()
            )));
        }
        let xo: Vec<&[f64]> = outputs.iter().map(|s| s.data.as_slice()).collect();
        let xi: Vec<&[f64]> = ideals.iter().map(|s| s.data.as_slice()).collect();
        Ok(Self {
            bundle,
            outputs,
            kind,
            states: bundle.encode_many(&xo)?,
            ideal_latents: bundle.encode_many(&xi)?,
        })
    }
}

impl Environment for IdealMatchEnv<'_> {
    fn state_dim(&self) -> usize {
        self.bundle.latent_dim()
    }
    fn action_dim(&self) -> usize {
        self.kind.dim()
    }
    fn len(&self) -> usize {
        self.outputs.len()
    }
    fn state(&self, i: usize) -> &[f64] {
        &self.states[i]
    }
    fn step(&self, i: usize, a: &[f64]) -> Result<(f64, LatentVector)> {
        let eq = EqualizerSetting::from_action(self.kind, a)?.apply(&self.outputs[i].to_waveform()?)?;
        let z = self.bundle.encode(eq.samples())?;
        Ok((-distance(&self.ideal_latents[i], &z), z))
    }
}

/// Bandit with reward `-sum |level_i/(k-1) - 0.5|` for the Q-learning check.
pub struct LevelBandit {
    pub dims: usize,
    pub episodes: usize,
    state: Vec<f64>,
}

impl LevelBandit {
    pub fn new(dims: usize, state_dim: usize, episodes: usize) -> Self {
        Self {
            dims,
            episodes,
            state: (0..state_dim).map(|i| ((i + 1) as f64 * 0.37).sin()).collect(),
        }
    }
}

impl Environment for LevelBandit {
    fn state_dim(&self) -> usize {
        self.state.len()
    }
    fn action_dim(&self) -> usize {
        self.dims
    }
    fn len(&self) -> usize {
        self.episodes
    }
    fn state(&self, _: usize) -> &[f64] {
        &self.state
    }
    fn step(&self, _: usize, a: &[f64]) -> Result<(f64, LatentVector)> {
        Ok((-a.iter().map(|v| (v - 0.5).abs()).sum::<f64>(), self.state.clone()))
    }
}

// ---------------------------------------------------------------- DDPG

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DdpgConfig {
    pub replay: usize,
    pub noise_std: f64,
    pub noise_clip: f64,
    pub tau: f64,
    pub gamma: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub batch: usize,
    pub episodes: usize,
    pub hidden: Vec<usize>,
}

impl Default for DdpgConfig {
    fn default() -> Self {
        Self {
            replay: 50_000,
            noise_std: 0.075,
            noise_clip: 0.025,
            tau: 0.005,
            gamma: 0.98,
            actor_lr: 1e-4,
            critic_lr: 1e-3,
            batch: 64,
            episodes: 200,
            hidden: vec![64, 64],
        }
    }
}

impl DdpgConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::Config(format!("tau must lie in (0, 1), got {}", self.tau)));
        }
        if !(self.noise_clip >= 0.0 && self.noise_std >= 0.0) {
            return Err(Error::Config("noise parameters must be >= 0".into()));
        }
        if self.replay == 0 || self.batch == 0 || self.episodes == 0 {
            return Err(Error::Config("replay, batch and episodes must be positive".into()));
        }
        Ok(())
    }
}

/// Exploration noise: Gaussian, clipped symmetrically.
pub struct ClippedNoise {
    normal: Normal<f64>,
    clip: f64,
}

impl ClippedNoise {
    pub fn new(std: f64, clip: f64) -> Result<Self> {
        Ok(Self {
            normal: Normal::new(0.0, std).map_err(|e| Error::Config(e.to_string()))?,
            clip,
        })
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        self.normal.sample(rng).clamp(-self.clip, self.clip)
    }
}

/// State after choosing `j` parameters: the chosen values, zero-padded.
pub fn sequential_state(chosen: &[f64], d: usize) -> Vec<f64> {
    let mut s = vec![0.0; d];
    s[..chosen.len()].copy_from_slice(chosen);
    s
}

/// Terminal DDPG reward.
pub fn ber_reward(ber: f64) -> f64 {
    100.0 * (1.0 - ber)
}

/// Episodes for sequential parameter estimation: the terminal score of a
/// full parameter vector for episode `i`.
pub trait SequentialTask {
    fn dims(&self) -> usize;
    fn episodes(&self) -> usize;
    fn terminal_reward(&self, episode: usize, a: &[f64]) -> Result<f64>;
}

/// Equalize a segment and score it by bit-error rate.
pub struct BerTask<'a> {
    pub segments: &'a [Segment],
    pub bits: &'a [u8],
    pub offset: i64,
    pub kind: EqualizerKind,
}

impl SequentialTask for BerTask<'_> {
    fn dims(&self) -> usize {
        self.kind.dim()
    }
    fn episodes(&self) -> usize {
        self.segments.len()
    }
    fn terminal_reward(&self, episode: usize, a: &[f64]) -> Result<f64> {
        let w = self.segments[episode].to_waveform()?;
        let eq = EqualizerSetting::from_action(self.kind, a)?.apply(&w)?;
        Ok(ber_reward(compute_ber(&eq, self.bits, self.offset)?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DdpgAgent {
    pub actor: DenseNet,
    pub critic: DenseNet,
    pub actor_target: DenseNet,
    pub critic_target: DenseNet,
}

impl DdpgAgent {
    pub fn new(d: usize, hidden: &[usize], seed: u64) -> Result<Self> {
        let mut ad = vec![d];
        ad.extend(hidden);
        ad.push(1);
        let mut act = vec![Activation::Relu; hidden.len()];
        act.push(Activation::Sigmoid);
        let actor = DenseNet::init(&ad, &act, seed)?;
        let mut cd = vec![d + 1];
        cd.extend(hidden);
        cd.push(1);
        *act.last_mut().expect("non-empty") = Activation::Linear;
        let critic = DenseNet::init(&cd, &act, seed.wrapping_add(1))?;
        Ok(Self {
            actor_target: actor.clone(),
            critic_target: critic.clone(),
            actor,
            critic,
        })
    }

    /// Deterministic parameter vector built step by step.
    pub fn rollout(&self, d: usize) -> Result<Vec<f64>> {
        let mut chosen = Vec::with_capacity(d);
        for _ in 0..d {
            let s = sequential_state(&chosen, d);
            chosen.push(self.actor.predict(&s)?[0]);
        }
        Ok(chosen)
    }

    /// Critic loss over a batch with the given fixed targets, and its
    /// gradient.
    pub fn critic_loss(&self, sa: &[f64], targets: &[f64]) -> Result<(f64, Grads)> {
        let b = targets.len();
        let tape = self.critic.forward_batch(sa, b)?;
        let mut dy = vec![0.0; b];
        let mut loss = 0.0;
        for i in 0..b {
            let e = tape.output()[i] - targets[i];
            loss += e * e / b as f64;
            dy[i] = 2.0 * e / b as f64;
        }
        Ok((loss, self.critic.backward(&tape, &dy)?.0))
    }

    /// Actor loss `-mean Q(s, mu(s))` and its gradient with respect to the
    /// actor parameters.
    pub fn actor_loss(&self, states: &[f64], b: usize) -> Result<(f64, Grads)> {
        let d = self.actor.input_dim();
        let atape = self.actor.forward_batch(states, b)?;
        let mu = atape.output();
        let mut sa = Vec::with_capacity(b * (d + 1));
        for i in 0..b {
            sa.extend(&states[i * d..(i + 1) * d]);
            sa.push(mu[i]);
        }
        let ctape = self.critic.forward_batch(&sa, b)?;
        let loss = -ctape.output().iter().sum::<f64>() / b as f64;
        let (_, dsa) = self.critic.backward(&ctape, &vec![-1.0 / b as f64; b])?;
        let dmu: Vec<f64> = (0..b).map(|i| dsa[i * (d + 1) + d]).collect();
        Ok((loss, self.actor.backward(&atape, &dmu)?.0))
    }
}

fn soft_update(target: &mut DenseNet, source: &DenseNet, tau: f64) -> Result<()> {
    let src = source.params_flat();
    let t: Vec<f64> = target
        .params_flat()
        .iter()
        .zip(&src)
        .map(|(t, s)| (1.0 - tau) * t + tau * s)
        .collect();
    target.set_params_flat(&t)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DdpgEpisode {
    pub episode: usize,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DdpgOutcome {
    pub agent: DdpgAgent,
    pub best: Vec<f64>,
    pub trace: Vec<DdpgEpisode>,
    pub evaluations: usize,
    /// Every exploration noise value drawn.
    pub noise_extrema: (f64, f64),
}

/// Sequential DDPG: `d` steps per episode, each choosing the next parameter
/// from the zero-padded vector of those already chosen; only the last step
/// is rewarded. Transitions are stored per step.
pub fn run_ddpg<T: SequentialTask>(task: &T, cfg: &DdpgConfig, seed: u64) -> Result<DdpgOutcome> {
    cfg.validate()?;
    let d = task.dims();
    if task.episodes() == 0 || d == 0 {
        return Err(Error::Data("DDPG needs at least one episode and dimension".into()));
    }
    let mut agent = DdpgAgent::new(d, &cfg.hidden, seed)?;
    let mut oa = Adam::new(AdamConfig::with_lr(cfg.actor_lr));
    let mut oc = Adam::new(AdamConfig::with_lr(cfg.critic_lr));
    let noise = ClippedNoise::new(cfg.noise_std, cfg.noise_clip)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0xdd));
    // (state, action, reward, next state, done)
    let mut memory: VecDeque<(Vec<f64>, f64, f64, Vec<f64>, bool)> = VecDeque::new();
    let mut trace = Vec::with_capacity(cfg.episodes);
    let mut evaluations = 0;
    let mut extrema = (0.0f64, 0.0f64);
    let episodes: Vec<usize> = (0..task.episodes()).collect();
    for ep in 0..cfg.episodes {
        let i = *episodes.choose(&mut rng).expect("non-empty");
        let mut chosen: Vec<f64> = Vec::with_capacity(d);
        let mut reward = 0.0;
        for j in 0..d {
            let s = sequential_state(&chosen, d);
            let n = noise.sample(&mut rng);
            extrema = (extrema.0.min(n), extrema.1.max(n));
            let a = clip01(agent.actor.predict(&s)?[0] + n);
            chosen.push(a);
            let s_next = sequential_state(&chosen, d);
            let done = j + 1 == d;
            let r = if done {
                evaluations += 1;
                task.terminal_reward(i, &chosen)?
            } else {
                0.0
            };
            reward = r;
            if memory.len() == cfg.replay {
                memory.pop_front();
            }
            memory.push_back((s, a, r, s_next, done));
            if memory.len() >= cfg.batch {
                let picks: Vec<usize> = (0..cfg.batch).map(|_| rng.random_range(0..memory.len())).collect();
                let mut sa = Vec::with_capacity(cfg.batch * (d + 1));
                let mut states = Vec::with_capacity(cfg.batch * d);
                let mut targets = Vec::with_capacity(cfg.batch);
                for &p in &picks {
                    let (s, a, r, sn, done) = &memory[p];
                    sa.extend(s);
                    sa.push(*a);
                    states.extend(s);
                    let next_q = if *done {
                        0.0
                    } else {
                        let an = agent.actor_target.predict(sn)?[0];
                        let mut x = sn.clone();
                        x.push(an);
                        agent.critic_target.predict(&x)?[0]
                    };
                    targets.push(r + cfg.gamma * next_q);
                }
                let (_, gc) = agent.critic_loss(&sa, &targets)?;
                agent.critic.adam_step(&mut oc, &gc)?;
                let (_, ga) = agent.actor_loss(&states, cfg.batch)?;
                agent.actor.adam_step(&mut oa, &ga)?;
                soft_update(&mut agent.actor_target, &agent.actor, cfg.tau)?;
                soft_update(&mut agent.critic_target, &agent.critic, cfg.tau)?;
            }
        }
        trace.push(DdpgEpisode { episode: ep, reward });
    }
    let best = agent.rollout(d)?;
    Ok(DdpgOutcome {
        agent,
        best,
        trace,
        evaluations,
        noise_extrema: extrema,
    })
}
