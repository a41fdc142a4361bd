//! Stage orchestration. Every stage writes its artifact into the run
//! directory and reuses it on the next call when the config hash matches.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use lateq::a2c::{self, Agent, EqualizerEnv};
use lateq::baselines::{self, BerTask, IdealMatchEnv};
use lateq::channel::{bits_for_segments, build_dataset, synthesize_pair, ChannelConfig, Dataset};
use lateq::equalizer::{EqualizerKind, EqualizerSetting};
use lateq::eye::{fold_eye, largest_window, window_area, EyeGeometry};
use lateq::latent::{
    compute_anchor_sampled, latent_si, latents_csv, train_autoencoder, AnchorPoint, AutoencoderBundle, EpochLoss,
    ANCHOR_EXACT_LIMIT,
};
use lateq::signal::{label_validity, Segment, Validity, Waveform};
use lateq::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::{ObjectiveKind, RunConfig, UnitSpec};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Artifact<T> {
    provenance: Provenance,
    body: T,
}

/// A run directory bound to one configuration.
pub struct Run {
    pub cfg: RunConfig,
    pub dir: PathBuf,
    pub hash: String,
}

impl Run {
    /// Validates the config, creates the directory and records the config.
    pub fn open(cfg: RunConfig) -> Result<Self> {
        cfg.validate()?;
        let dir = cfg.output_dir.clone();
        std::fs::create_dir_all(&dir)?;
        let run = Self {
            hash: cfg.hash(),
            dir,
            cfg,
        };
        std::fs::write(run.path("config.json"), run.cfg.to_json()? + "\n")?;
        Ok(run)
    }

    pub fn provenance(&self) -> Provenance {
        Provenance {
            config_hash: self.hash.clone(),
            seed: self.cfg.seed,
            version: VERSION.into(),
        }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write_json<T: Serialize>(&self, name: &str, body: &T) -> Result<()> {
        let a = Artifact {
            provenance: self.provenance(),
            body,
        };
        std::fs::write(self.path(name), serde_json::to_string_pretty(&a)? + "\n")?;
        Ok(())
    }

    /// Artifact body, if present and produced under this config.
    pub fn read_json<T: DeserializeOwned>(&self, name: &str) -> Result<Option<T>> {
        let p = self.path(name);
        if !p.exists() {
            return Ok(None);
        }
        let a: Artifact<T> = serde_json::from_str(&std::fs::read_to_string(p)?)?;
        Ok((a.provenance.config_hash == self.hash).then_some(a.body))
    }

    /// CSV with a provenance comment line ahead of the header.
    pub fn write_csv(&self, name: &str, body: &str) -> Result<()> {
        let p = self.provenance();
        let text = format!(
            "# config_hash={} seed={} version={}\n{body}",
            p.config_hash, p.seed, p.version
        );
        std::fs::write(self.path(name), text)?;
        Ok(())
    }

    /// Wall-clock figures go to `timings.json`, the one output that is not
    /// reproducible byte for byte.
    pub fn record_timing(&self, key: &str, seconds: f64) -> Result<()> {
        let p = self.path("timings.json");
        let mut map: BTreeMap<String, f64> = match std::fs::read_to_string(&p) {
            Ok(s) => serde_json::from_str(&s).unwrap_or_default(),
            Err(_) => BTreeMap::new(),
        };
        map.insert(key.into(), seconds);
        std::fs::write(p, serde_json::to_string_pretty(&map)? + "\n")?;
        Ok(())
    }

    pub fn geometry(&self) -> EyeGeometry {
        self.cfg.channel.eye_geometry()
    }
}

fn staged<T>(stage: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| e.in_stage(stage))
}

// ---------------------------------------------------------------- data

/// `count` segments of one link.
pub fn link_dataset(ch: &ChannelConfig, cfg: &RunConfig, stride: usize, count: usize) -> Result<Dataset> {
    let mut c = ch.clone();
    c.n_bits = bits_for_segments(&c, cfg.data.n_x, stride, count);
    let mut ds = build_dataset(&c, cfg.data.n_x, stride, &cfg.data.mask)?;
    ds.segments.truncate(count);
    Ok(ds)
}

/// Autoencoder training material for a family of units.
pub fn ae_samples(cfg: &RunConfig, units: &[UnitSpec]) -> Result<Vec<(Segment, Validity)>> {
    let per_unit = (cfg.data.ae_segments / units.len()).max(1);
    let mut out = Vec::with_capacity(per_unit * units.len() * 2);
    for u in units {
        let ds = link_dataset(&u.channel(&cfg.channel), cfg, cfg.data.stride, per_unit)?;
        out.extend(ds.segments.into_iter().map(|s| (s.output, s.label)));
    }
    if cfg.data.augment {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xa5a5);
        let raw = out.len();
        for i in 0..raw {
            let kind = if rng.random::<bool>() {
                EqualizerKind::Dfe
            } else {
                EqualizerKind::CtleDfe
            };
            let a: Vec<f64> = (0..kind.dim()).map(|_| rng.random::<f64>()).collect();
            let seg = &out[i].0;
            let eq = EqualizerSetting::from_action(kind, &a)?.apply(&seg.to_waveform()?)?;
            let eq = seg.with_data(eq.into_samples());
            let label = label_validity(&eq, &cfg.data.mask)?;
            out.push((eq, label));
        }
    }
    Ok(out)
}

/// Agent training link: the base channel under its own bit stream.
pub fn train_link(cfg: &RunConfig) -> Result<Dataset> {
    let mut ch = cfg.channel.clone();
    ch.seed = cfg.channel.seed.wrapping_add(1000);
    link_dataset(&ch, cfg, cfg.data.stride, cfg.data.train_segments)
}

/// Held-out evaluation link with non-overlapping segments.
pub fn test_link(cfg: &RunConfig) -> Result<Dataset> {
    let mut ch = cfg.channel.clone();
    ch.seed = cfg.channel.seed.wrapping_add(2000);
    link_dataset(&ch, cfg, cfg.data.n_x, cfg.data.test_segments)
}

fn outputs(ds: &Dataset) -> Vec<Segment> {
    ds.segments.iter().map(|s| s.output.clone()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetSummary {
    pub name: String,
    pub segments: usize,
    pub valid: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataManifest {
    pub n_x: usize,
    pub sets: Vec<SetSummary>,
}

fn summary(name: &str, labels: impl Iterator<Item = Validity>) -> SetSummary {
    let (mut n, mut v) = (0, 0);
    for l in labels {
        n += 1;
        v += usize::from(l.is_valid());
    }
    SetSummary {
        name: name.into(),
        segments: n,
        valid: v,
    }
}

pub fn stage_gen_data(run: &Run) -> Result<DataManifest> {
    staged("gen-data", gen_data(run))
}

fn gen_data(run: &Run) -> Result<DataManifest> {
    let cfg = &run.cfg;
    let ae = ae_samples(cfg, &cfg.data.ae_units)?;
    let train = train_link(cfg)?;
    let test = test_link(cfg)?;
    let manifest = DataManifest {
        n_x: cfg.data.n_x,
        sets: vec![
            summary("autoencoder", ae.iter().map(|s| s.1)),
            summary("train", train.segments.iter().map(|s| s.label)),
            summary("test", test.segments.iter().map(|s| s.label)),
        ],
    };
    run.write_json("dataset.json", &manifest)?;
    let mut ch = cfg.channel.clone();
    ch.seed = cfg.channel.seed.wrapping_add(2000);
    ch.n_bits = test.config.n_bits;
    let pair = synthesize_pair(&ch)?;
    let mut csv = String::from("t_ps,input_mv,output_mv\n");
    for i in 0..pair.output.len() {
        let _ = writeln!(
            csv,
            "{},{},{}",
            pair.output.time_of(i),
            pair.input.samples()[i],
            pair.output.samples()[i]
        );
    }
    run.write_csv("waveform.csv", &csv)?;
    Ok(manifest)
}

// ---------------------------------------------------------------- autoencoder

fn ae_trace_csv(trace: &[EpochLoss]) -> String {
    let mut s = String::from("epoch,reconstruction,classification,val_total\n");
    for e in trace {
        let _ = writeln!(s, "{},{},{},{}", e.epoch, e.reconstruction, e.classification, e.val_total);
    }
    s
}

fn train_ae_on(run: &Run, units: &[UnitSpec], name: &str) -> Result<AutoencoderBundle> {
    let file = format!("{name}.json");
    if let Some(b) = run.read_json::<AutoencoderBundle>(&file)? {
        return Ok(b);
    }
    let cfg = &run.cfg;
    let samples = ae_samples(cfg, units)?;
    let xs: Vec<&[f64]> = samples.iter().map(|s| s.0.data.as_slice()).collect();
    let ys: Vec<u8> = samples.iter().map(|s| s.1.y()).collect();
    let t = Instant::now();
    let trained = train_autoencoder(&xs, &ys, cfg.channel.swing, &cfg.autoencoder)?;
    run.record_timing(&format!("{name}_seconds"), t.elapsed().as_secs_f64())?;
    run.write_csv(&format!("{name}_trace.csv"), &ae_trace_csv(&trained.trace))?;
    run.write_json(&file, &trained.bundle)?;
    Ok(trained.bundle)
}

pub fn stage_train_ae(run: &Run) -> Result<AutoencoderBundle> {
    staged("train-ae", train_ae_on(run, &run.cfg.data.ae_units, "autoencoder"))
}

fn anchor_for(run: &Run, bundle: &AutoencoderBundle, units: &[UnitSpec], name: &str) -> Result<AnchorPoint> {
    let file = format!("{name}.json");
    if let Some(a) = run.read_json::<AnchorPoint>(&file)? {
        return Ok(a);
    }
    let samples = ae_samples(&run.cfg, units)?;
    let valid: Vec<&[f64]> = samples
        .iter()
        .filter(|s| s.1.is_valid())
        .map(|s| s.0.data.as_slice())
        .collect();
    if valid.is_empty() {
        return Err(Error::Data("no valid segment to place the anchor on".into()));
    }
    let latents = bundle.encode_many(&valid)?;
    let anchor = compute_anchor_sampled(&latents, ANCHOR_EXACT_LIMIT, run.cfg.seed)?;
    run.write_json(&file, &anchor)?;
    Ok(anchor)
}

pub fn stage_anchor(run: &Run, bundle: &AutoencoderBundle) -> Result<AnchorPoint> {
    staged("anchor", anchor_for(run, bundle, &run.cfg.data.ae_units, "anchor"))
}

// ---------------------------------------------------------------- agent

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentCheckpoint {
    pub kind: EqualizerKind,
    pub agent: Agent,
    pub updates: usize,
    pub evaluations: usize,
    pub early_stopped: bool,
}

fn train_agent_on(
    run: &Run,
    bundle: &AutoencoderBundle,
    anchor: &AnchorPoint,
    segments: &[Segment],
    kind: EqualizerKind,
    name: &str,
) -> Result<AgentCheckpoint> {
    let file = format!("{name}_{}.json", kind.name());
    if let Some(c) = run.read_json::<AgentCheckpoint>(&file)? {
        return Ok(c);
    }
    let env = EqualizerEnv::new(bundle, anchor, segments, kind)?;
    let t = Instant::now();
    let out = a2c::train(&env, &run.cfg.a2c)?;
    run.record_timing(&format!("{name}_{}_seconds", kind.name()), t.elapsed().as_secs_f64())?;
    run.write_csv(&format!("{name}_{}_trace.csv", kind.name()), &a2c::trace_csv(&out.trace))?;
    let ckpt = AgentCheckpoint {
        kind,
        agent: out.agent,
        updates: out.updates,
        evaluations: out.evaluations,
        early_stopped: out.early_stopped,
    };
    run.write_json(&file, &ckpt)?;
    Ok(ckpt)
}

pub fn stage_train_a2c(
    run: &Run,
    bundle: &AutoencoderBundle,
    anchor: &AnchorPoint,
    kind: EqualizerKind,
) -> Result<AgentCheckpoint> {
    staged("train-a2c", {
        let train = train_link(&run.cfg).map(|d| outputs(&d));
        train.and_then(|t| train_agent_on(run, bundle, anchor, &t, kind, "agent"))
    })
}

/// Mean-action inference for every segment.
pub fn infer_actions(bundle: &AutoencoderBundle, agent: &Agent, segments: &[Segment]) -> Result<Vec<Vec<f64>>> {
    let xs: Vec<&[f64]> = segments.iter().map(|s| s.data.as_slice()).collect();
    bundle
        .encode_many(&xs)?
        .iter()
        .map(|z| agent.mean_action(z))
        .collect()
}

fn actions_csv(kind: EqualizerKind, segments: &[Segment], actions: &[Vec<f64>]) -> Result<String> {
    let ranges = kind.ranges();
    let mut s = String::from("segment,origin");
    for j in 0..kind.dim() {
        let _ = write!(s, ",a{j}");
    }
    for j in 0..kind.dim() {
        let _ = write!(s, ",p{j}");
    }
    s.push('\n');
    for (i, (seg, a)) in segments.iter().zip(actions).enumerate() {
        let p = lateq::equalizer::map_action(a, &ranges)?;
        let _ = write!(s, "{i},{}", seg.origin);
        for v in a.iter().chain(&p.values) {
            let _ = write!(s, ",{v}");
        }
        s.push('\n');
    }
    Ok(s)
}

pub fn stage_optimize(
    run: &Run,
    bundle: &AutoencoderBundle,
    ckpt: &AgentCheckpoint,
) -> Result<Vec<Vec<f64>>> {
    staged("optimize", {
        let r = test_link(&run.cfg).and_then(|test| {
            let segs = outputs(&test);
            let actions = infer_actions(bundle, &ckpt.agent, &segs)?;
            run.write_csv(
                &format!("actions_{}.csv", ckpt.kind.name()),
                &actions_csv(ckpt.kind, &segs, &actions)?,
            )?;
            Ok(actions)
        });
        r
    })
}

// ---------------------------------------------------------------- evaluation

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentResult {
    pub segment: usize,
    pub origin: usize,
    pub before: f64,
    pub after: f64,
    /// Absent when the unequalized eye is closed.
    pub improvement: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub method: String,
    pub kind: EqualizerKind,
    pub mean_improvement: f64,
    /// Scored segments whose window grew.
    pub positive_fraction: f64,
    pub scored: usize,
    pub evaluations: usize,
    pub seeds: BTreeMap<String, u64>,
    pub segments: Vec<SegmentResult>,
}

impl ExperimentReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("segment,origin,before,after,improvement\n");
        for r in &self.segments {
            let imp = r.improvement.map(|v| v.to_string()).unwrap_or_default();
            let _ = writeln!(s, "{},{},{},{},{imp}", r.segment, r.origin, r.before, r.after);
        }
        s
    }
}

/// Window areas before and after applying each segment's action.
pub fn score_actions(
    geom: &EyeGeometry,
    kind: EqualizerKind,
    segments: &[Segment],
    actions: &[Vec<f64>],
) -> Result<Vec<SegmentResult>> {
    if segments.len() != actions.len() {
        return Err(Error::Data("one action per segment expected".into()));
    }
    segments
        .iter()
        .zip(actions)
        .enumerate()
        .map(|(i, (s, a))| {
            let w = s.to_waveform()?;
            let before = window_area(&w, geom)?;
            let after = window_area(&EqualizerSetting::from_action(kind, a)?.apply(&w)?, geom)?;
            Ok(SegmentResult {
                segment: i,
                origin: s.origin,
                before,
                after,
                improvement: (before > 0.0).then(|| 100.0 * (after - before) / before),
            })
        })
        .collect()
}

pub fn report(run: &Run, method: &str, kind: EqualizerKind, segments: Vec<SegmentResult>, evaluations: usize) -> ExperimentReport {
    let scored: Vec<f64> = segments.iter().filter_map(|r| r.improvement).collect();
    let n = scored.len();
    let mean = if n == 0 { 0.0 } else { scored.iter().sum::<f64>() / n as f64 };
    let pos = if n == 0 {
        0.0
    } else {
        scored.iter().filter(|&&v| v > 0.0).count() as f64 / n as f64
    };
    let c = &run.cfg;
    let seeds = BTreeMap::from([
        ("run".to_string(), c.seed),
        ("channel".to_string(), c.channel.seed),
        ("autoencoder".to_string(), c.autoencoder.seed),
        ("a2c".to_string(), c.a2c.seed),
    ]);
    ExperimentReport {
        method: method.into(),
        kind,
        mean_improvement: mean,
        positive_fraction: pos,
        scored: n,
        evaluations,
        seeds,
        segments,
    }
}

fn write_report(run: &Run, stem: &str, r: &ExperimentReport) -> Result<()> {
    run.write_json(&format!("{stem}.json"), r)?;
    run.write_csv(&format!("{stem}.csv"), &r.to_csv())
}

pub fn stage_evaluate(run: &Run, ckpt: &AgentCheckpoint, actions: &[Vec<f64>]) -> Result<ExperimentReport> {
    staged("evaluate", {
        let r = test_link(&run.cfg).and_then(|test| {
            let segs = outputs(&test);
            let results = score_actions(&run.geometry(), ckpt.kind, &segs, actions)?;
            let rep = report(run, "a2c", ckpt.kind, results, ckpt.evaluations + segs.len());
            write_report(run, &format!("report_{}", ckpt.kind.name()), &rep)?;
            Ok(rep)
        });
        r
    })
}

/// Data, autoencoder, anchor, agent, inference and evaluation for one
/// equalizer kind.
pub fn cmd_pipeline(run: &Run, kind: EqualizerKind) -> Result<ExperimentReport> {
    stage_gen_data(run)?;
    let bundle = stage_train_ae(run)?;
    let anchor = stage_anchor(run, &bundle)?;
    let ckpt = stage_train_a2c(run, &bundle, &anchor, kind)?;
    let actions = stage_optimize(run, &bundle, &ckpt)?;
    stage_evaluate(run, &ckpt, &actions)
}

// ---------------------------------------------------------------- baselines

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Ga,
    Pso,
    Grid,
    Qlearn,
    Ddpg,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Ga => "ga",
            Method::Pso => "pso",
            Method::Grid => "grid",
            Method::Qlearn => "qlearn",
            Method::Ddpg => "ddpg",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ga" => Ok(Method::Ga),
            "pso" => Ok(Method::Pso),
            "grid" => Ok(Method::Grid),
            "qlearn" | "q-learning" => Ok(Method::Qlearn),
            "ddpg" => Ok(Method::Ddpg),
            o => Err(Error::Config(format!("unknown baseline `{o}`"))),
        }
    }
}

/// Per-segment scoring functions shared by the searches.
pub struct Scorer<'a> {
    pub bundle: &'a AutoencoderBundle,
    pub anchor: &'a AnchorPoint,
    pub geom: EyeGeometry,
    pub kind: EqualizerKind,
}

impl Scorer<'_> {
    fn equalize(&self, w: &Waveform, a: &[f64]) -> Result<Waveform> {
        EqualizerSetting::from_action(self.kind, a)?.apply(w)
    }

    pub fn latent(&self, w: &Waveform, a: &[f64]) -> Result<f64> {
        latent_si(self.bundle, self.anchor, self.equalize(w, a)?.samples())
    }

    pub fn area(&self, w: &Waveform, a: &[f64]) -> Result<f64> {
        window_area(&self.equalize(w, a)?, &self.geom)
    }

    /// Objective value for one segment; the eye objective is the relative
    /// improvement when the reference eye is open.
    pub fn objective(&self, obj: ObjectiveKind, w: &Waveform, before: f64, a: &[f64]) -> Result<f64> {
        match obj {
            ObjectiveKind::Latent => self.latent(w, a),
            ObjectiveKind::Eye if before > 0.0 => Ok(100.0 * (self.area(w, a)? - before) / before),
            ObjectiveKind::Eye => self.area(w, a),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineOutcome {
    pub report: ExperimentReport,
    pub actions: Vec<Vec<f64>>,
}

fn trace_rows(rows: &[(usize, usize, f64)]) -> String {
    let mut s = String::from("segment,step,best\n");
    for (i, k, v) in rows {
        let _ = writeln!(s, "{i},{k},{v}");
    }
    s
}

pub fn cmd_baseline(run: &Run, method: Method, kind: EqualizerKind) -> Result<BaselineOutcome> {
    staged("baseline", baseline(run, method, kind))
}

fn baseline(run: &Run, method: Method, kind: EqualizerKind) -> Result<BaselineOutcome> {
    let cfg = &run.cfg;
    let bundle = stage_train_ae(run)?;
    let anchor = stage_anchor(run, &bundle)?;
    let test = outputs(&test_link(cfg)?);
    let scorer = Scorer {
        bundle: &bundle,
        anchor: &anchor,
        geom: run.geometry(),
        kind,
    };
    let d = kind.dim();
    let t = Instant::now();
    let (segs, actions, evaluations, trace) = match method {
        Method::Ga | Method::Pso | Method::Grid => {
            let segs: Vec<Segment> = test.iter().take(cfg.baselines.segments).cloned().collect();
            let mut actions = Vec::with_capacity(segs.len());
            let mut evals = 0;
            let mut trace = Vec::new();
            for (i, s) in segs.iter().enumerate() {
                let w = s.to_waveform()?;
                let before = window_area(&w, &scorer.geom)?;
                let f = |a: &[f64]| scorer.objective(cfg.baselines.objective, &w, before, a);
                let seed = cfg.seed.wrapping_mul(1_000_003).wrapping_add(i as u64);
                let r = match method {
                    Method::Ga => baselines::run_ga(f, d, &cfg.baselines.ga, seed)?,
                    Method::Pso => baselines::run_pso(f, d, &cfg.baselines.pso, seed)?,
                    _ => baselines::run_grid(f, d, cfg.baselines.grid_levels(kind))?,
                };
                evals += r.evaluations;
                trace.extend(r.trace.iter().enumerate().map(|(k, v)| (i, k, *v)));
                actions.push(r.best);
            }
            (segs, actions, evals, trace_rows(&trace))
        }
        Method::Qlearn => {
            let train = train_link(cfg)?;
            let outs = outputs(&train);
            let ideals: Vec<Segment> = train.segments.iter().map(|s| s.ideal.clone()).collect();
            let env = IdealMatchEnv::new(&bundle, &outs, &ideals, kind)?;
            let out = baselines::run_qlearning(&env, &cfg.baselines.qlearning, cfg.seed)?;
            let xs: Vec<&[f64]> = test.iter().map(|s| s.data.as_slice()).collect();
            let actions = bundle
                .encode_many(&xs)?
                .iter()
                .map(|z| out.action(z))
                .collect::<Result<Vec<_>>>()?;
            let mut s = String::from("epoch,mean_reward,epsilon,lr\n");
            for e in &out.trace {
                let _ = writeln!(s, "{},{},{},{}", e.epoch, e.mean_reward, e.epsilon, e.lr);
            }
            (test.clone(), actions, out.evaluations + test.len(), s)
        }
        Method::Ddpg => {
            let train = train_link(cfg)?;
            let outs = outputs(&train);
            let task = BerTask {
                segments: &outs,
                bits: &train.bits,
                offset: train.config.symbol_offset(),
                kind,
            };
            let out = baselines::run_ddpg(&task, &cfg.baselines.ddpg, cfg.seed)?;
            let mut s = String::from("episode,reward\n");
            for e in &out.trace {
                let _ = writeln!(s, "{},{}", e.episode, e.reward);
            }
            (test.clone(), vec![out.best.clone(); test.len()], out.evaluations, s)
        }
    };
    run.record_timing(&format!("baseline_{}_{}_seconds", method.name(), kind.name()), t.elapsed().as_secs_f64())?;
    let results = score_actions(&scorer.geom, kind, &segs, &actions)?;
    let rep = report(run, method.name(), kind, results, evaluations);
    let stem = format!("baseline_{}_{}", method.name(), kind.name());
    write_report(run, &stem, &rep)?;
    run.write_csv(&format!("{stem}_trace.csv"), &trace)?;
    Ok(BaselineOutcome { report: rep, actions })
}

// ---------------------------------------------------------------- compare-si

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodStats {
    pub objective: ObjectiveKind,
    pub improvements: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    /// Single-segment objective evaluations.
    pub evaluations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub kind: EqualizerKind,
    pub trials: usize,
    pub segments: usize,
    pub latent: MethodStats,
    pub eye: MethodStats,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompareTiming {
    pub latent_seconds_per_eval: f64,
    pub eye_seconds_per_eval: f64,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    (m, baselines::std_dev(v))
}

/// PSO under the latent and the eye objective, `trials` seeds each; every
/// trial searches one action shared by the first few test segments.
pub fn cmd_compare_si(run: &Run, trials: usize) -> Result<(CompareReport, CompareTiming)> {
    staged("compare-si", compare_si(run, trials))
}

fn compare_si(run: &Run, trials: usize) -> Result<(CompareReport, CompareTiming)> {
    if trials == 0 {
        return Err(Error::Config("trials must be positive".into()));
    }
    let cfg = &run.cfg;
    let kind = cfg.equalizer;
    let bundle = stage_train_ae(run)?;
    let anchor = stage_anchor(run, &bundle)?;
    let scorer = Scorer {
        bundle: &bundle,
        anchor: &anchor,
        geom: run.geometry(),
        kind,
    };
    let test = outputs(&test_link(cfg)?);
    let segs: Vec<Segment> = test.into_iter().take(cfg.compare.segments).collect();
    let waves: Vec<Waveform> = segs.iter().map(|s| s.to_waveform()).collect::<Result<_>>()?;
    let before: Vec<f64> = waves
        .iter()
        .map(|w| window_area(w, &scorer.geom))
        .collect::<Result<_>>()?;
    let mut stats = Vec::new();
    let mut per_eval = Vec::new();
    for obj in [ObjectiveKind::Latent, ObjectiveKind::Eye] {
        let mut improvements = Vec::with_capacity(trials);
        let mut evals = 0;
        let mut seconds = 0.0;
        for t in 0..trials {
            let f = |a: &[f64]| -> Result<f64> {
                let mut total = 0.0;
                for (w, b) in waves.iter().zip(&before) {
                    total += scorer.objective(obj, w, *b, a)?;
                }
                Ok(total / waves.len() as f64)
            };
            let clock = Instant::now();
            let r = baselines::run_pso(f, kind.dim(), &cfg.compare.pso, cfg.seed.wrapping_add(t as u64))?;
            seconds += clock.elapsed().as_secs_f64();
            evals += r.evaluations * waves.len();
            let actions = vec![r.best; segs.len()];
            let scored = score_actions(&scorer.geom, kind, &segs, &actions)?;
            let imps: Vec<f64> = scored.iter().filter_map(|s| s.improvement).collect();
            improvements.push(if imps.is_empty() { 0.0 } else { imps.iter().sum::<f64>() / imps.len() as f64 });
        }
        let (mean, std) = mean_std(&improvements);
        per_eval.push(seconds / evals as f64);
        stats.push(MethodStats {
            objective: obj,
            improvements,
            mean,
            std,
            evaluations: evals,
        });
    }
    let eye = stats.pop().expect("two methods");
    let latent = stats.pop().expect("two methods");
    let rep = CompareReport {
        kind,
        trials,
        segments: segs.len(),
        latent,
        eye,
    };
    let timing = CompareTiming {
        latent_seconds_per_eval: per_eval[0],
        eye_seconds_per_eval: per_eval[1],
    };
    run.write_json("compare_si.json", &rep)?;
    let mut csv = String::from("objective,trial,improvement\n");
    for m in [&rep.latent, &rep.eye] {
        let name = match m.objective {
            ObjectiveKind::Latent => "latent",
            ObjectiveKind::Eye => "eye",
        };
        for (t, v) in m.improvements.iter().enumerate() {
            let _ = writeln!(csv, "{name},{t},{v}");
        }
    }
    run.write_csv("compare_si.csv", &csv)?;
    run.record_timing("compare_latent_seconds_per_eval", timing.latent_seconds_per_eval)?;
    run.record_timing("compare_eye_seconds_per_eval", timing.eye_seconds_per_eval)?;
    Ok((rep, timing))
}

// ---------------------------------------------------------------- generalize

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneralizeCell {
    pub kind: EqualizerKind,
    pub train_improvement: f64,
    pub heldout_improvement: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneralizeReport {
    pub train_units: usize,
    pub heldout_units: usize,
    pub cells: Vec<GeneralizeCell>,
}

fn unit_sets(cfg: &RunConfig, units: &[UnitSpec], offset: u64, stride: usize, count: usize) -> Result<Vec<Segment>> {
    let mut out = Vec::new();
    for u in units {
        let mut ch = u.channel(&cfg.channel);
        ch.seed = u.seed.wrapping_add(offset);
        out.extend(outputs(&link_dataset(&ch, cfg, stride, count)?));
    }
    Ok(out)
}

fn mean_improvement(r: &[SegmentResult]) -> f64 {
    let v: Vec<f64> = r.iter().filter_map(|s| s.improvement).collect();
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Train on the training units, evaluate on fresh segments of the training
/// units and of the held-out units, for both equalizer kinds.
pub fn cmd_generalize(run: &Run) -> Result<GeneralizeReport> {
    staged("generalize", generalize(run))
}

fn generalize(run: &Run) -> Result<GeneralizeReport> {
    let cfg = &run.cfg;
    let g = &cfg.generalize;
    if g.train_units.len() + g.heldout_units.len() < 2 || g.train_units.is_empty() || g.heldout_units.is_empty() {
        return Err(Error::Config("generalization needs at least 2 units".into()));
    }
    let (bundle, anchor) = if g.train_units == cfg.data.ae_units {
        let b = stage_train_ae(run)?;
        let a = stage_anchor(run, &b)?;
        (b, a)
    } else {
        let b = train_ae_on(run, &g.train_units, "autoencoder_units")?;
        let a = anchor_for(run, &b, &g.train_units, "anchor_units")?;
        (b, a)
    };
    let train = unit_sets(cfg, &g.train_units, 1000, cfg.data.stride, g.train_segments)?;
    let seen = unit_sets(cfg, &g.train_units, 2000, cfg.data.n_x, g.test_segments)?;
    let unseen = unit_sets(cfg, &g.heldout_units, 2000, cfg.data.n_x, g.test_segments)?;
    let geom = run.geometry();
    let mut cells = Vec::new();
    let mut csv = String::from("kind,set,segment,before,after,improvement\n");
    for kind in [EqualizerKind::Dfe, EqualizerKind::CtleDfe] {
        let ckpt = train_agent_on(run, &bundle, &anchor, &train, kind, "agent_units")?;
        let mut imps = Vec::new();
        for (set, segs) in [("train", &seen), ("heldout", &unseen)] {
            let actions = infer_actions(&bundle, &ckpt.agent, segs)?;
            let r = score_actions(&geom, kind, segs, &actions)?;
            for s in &r {
                let imp = s.improvement.map(|v| v.to_string()).unwrap_or_default();
                let _ = writeln!(csv, "{},{set},{},{},{},{imp}", kind.name(), s.segment, s.before, s.after);
            }
            imps.push(mean_improvement(&r));
        }
        cells.push(GeneralizeCell {
            kind,
            train_improvement: imps[0],
            heldout_improvement: imps[1],
            gap: imps[0] - imps[1],
        });
    }
    let rep = GeneralizeReport {
        train_units: g.train_units.len(),
        heldout_units: g.heldout_units.len(),
        cells,
    };
    run.write_json("generalize.json", &rep)?;
    run.write_csv("generalize.csv", &csv)?;
    Ok(rep)
}

// ---------------------------------------------------------------- exports

/// Eye diagram of test segment `index` after `action` (identity when
/// absent), as CSV cells and SVG.
pub fn cmd_export_eye(run: &Run, index: usize, action: Option<&[f64]>, kind: EqualizerKind) -> Result<(PathBuf, PathBuf)> {
    staged("export-eye", {
        let r = test_link(&run.cfg).and_then(|test| {
            let seg = test
                .segments
                .get(index)
                .ok_or_else(|| Error::Data(format!("test set has {} segments", test.segments.len())))?;
            let w = seg.output.to_waveform()?;
            let w = match action {
                Some(a) => EqualizerSetting::from_action(kind, a)?.apply(&w)?,
                None => w,
            };
            let eye = fold_eye(&w, &run.geometry())?;
            let win = largest_window(&eye);
            let csv = run.path(&format!("eye_{index}.csv"));
            let svg = run.path(&format!("eye_{index}.svg"));
            run.write_csv(&format!("eye_{index}.csv"), &eye.to_csv())?;
            std::fs::write(&svg, eye.to_svg(Some(&win), Some(&run.cfg.data.mask)))?;
            Ok((csv, svg))
        });
        r
    })
}

/// Latent vectors of the autoencoder training material.
pub fn cmd_export_latents(run: &Run) -> Result<PathBuf> {
    staged("export-latents", {
        let r = stage_train_ae(run).and_then(|bundle| {
            let samples = ae_samples(&run.cfg, &run.cfg.data.ae_units)?;
            let xs: Vec<&[f64]> = samples.iter().map(|s| s.0.data.as_slice()).collect();
            let z = bundle.encode_many(&xs)?;
            let rows: Vec<(usize, u8, Vec<f64>)> = samples
                .iter()
                .zip(z)
                .map(|(s, z)| (s.0.origin, s.1.y(), z))
                .collect();
            run.write_csv("latents.csv", &latents_csv(&rows))?;
            Ok(run.path("latents.csv"))
        });
        r
    })
}

pub fn read_text(p: &Path) -> Result<String> {
    Ok(std::fs::read_to_string(p)?)
}
