use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lateq::equalizer::EqualizerKind;
use lateq::{Error, Result};
use lateq_cli::config::{ObjectiveKind, RunConfig};
use lateq_cli::pipeline::{self as p, Method, Run};

#[derive(Parser)]
#[command(name = "lateq", version, about = "Latent-metric equalizer tuning on synthetic links")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Global {
    /// Config JSON; defaults to the preset.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, default_value = "desk")]
    preset: String,
    /// Dotted override, e.g. `--set a2c.epochs=10`. Repeatable.
    #[arg(long = "set", global = true)]
    overrides: Vec<String>,
    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Args, Clone, Copy)]
struct KindArg {
    /// dfe or ctle-dfe; defaults to the config's equalizer.
    #[arg(long)]
    kind: Option<EqualizerKind>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Print the resolved configuration.
    Config,
    /// Synthesize the datasets and write their manifest and the test waveform.
    GenData,
    /// Train the autoencoder and classifier head.
    TrainAe,
    /// Medoid of the valid latents.
    Anchor,
    /// Train the actor-critic agent on the latent reward.
    TrainA2c(KindArg),
    /// Infer actions for the test segments.
    Optimize(KindArg),
    /// Window-area improvement of the inferred actions.
    Evaluate(KindArg),
    /// All stages up to evaluation.
    Pipeline(KindArg),
    /// PSO under the latent and the eye objective: spread and cost.
    CompareSi {
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Train on several units, evaluate on held-out ones.
    Generalize,
    /// Run one baseline optimizer on the test segments.
    Baseline {
        /// ga, pso, grid, qlearn or ddpg
        method: Method,
        #[command(flatten)]
        kind: KindArg,
        /// latent or eye; defaults to the config's objective
        #[arg(long)]
        objective: Option<ObjectiveKind>,
    },
    /// Eye of one test segment as SVG and occupancy CSV.
    ExportEye {
        #[arg(long, default_value_t = 0)]
        segment: usize,
        /// Comma-separated normalized action; identity when omitted.
        #[arg(long, value_delimiter = ',')]
        action: Option<Vec<f64>>,
        #[command(flatten)]
        kind: KindArg,
    },
    /// Latent vectors of the autoencoder set as CSV.
    ExportLatents,
}

fn resolve(g: &Global) -> Result<RunConfig> {
    let base = match &g.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::preset(&g.preset)?,
    };
    let mut cfg = base.with_overrides(&g.overrides)?;
    if let Some(o) = &g.out {
        cfg.output_dir = o.clone();
    }
    Ok(cfg)
}

fn print_report(r: &p::ExperimentReport) {
    println!(
        "{} {}: mean improvement {:.2}% over {} segments ({:.0}% improved), {} evaluations",
        r.method,
        r.kind.name(),
        r.mean_improvement,
        r.scored,
        100.0 * r.positive_fraction,
        r.evaluations
    );
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = resolve(&cli.global)?;
    if let Cmd::Baseline { objective: Some(o), .. } = &cli.cmd {
        cfg.baselines.objective = *o;
    }
    if let Cmd::Config = cli.cmd {
        cfg.validate()?;
        println!("{}", cfg.to_json()?);
        return Ok(());
    }
    let default_kind = cfg.equalizer;
    let kind = |k: KindArg| k.kind.unwrap_or(default_kind);
    let run = Run::open(cfg)?;
    match cli.cmd {
        Cmd::Config => unreachable!(),
        Cmd::GenData => {
            let m = p::stage_gen_data(&run)?;
            for s in m.sets {
                println!("{}: {} segments, {} valid", s.name, s.segments, s.valid);
            }
        }
        Cmd::TrainAe => {
            let b = p::stage_train_ae(&run)?;
            println!("autoencoder: {} -> {} latents", b.n_x, b.latent_dim());
        }
        Cmd::Anchor => {
            let b = p::stage_train_ae(&run)?;
            let a = p::stage_anchor(&run, &b)?;
            println!("anchor: sample {}", a.source_index);
        }
        Cmd::TrainA2c(k) => {
            let b = p::stage_train_ae(&run)?;
            let a = p::stage_anchor(&run, &b)?;
            let c = p::stage_train_a2c(&run, &b, &a, kind(k))?;
            println!("agent: {} updates, {} evaluations", c.updates, c.evaluations);
        }
        Cmd::Optimize(k) => {
            let b = p::stage_train_ae(&run)?;
            let a = p::stage_anchor(&run, &b)?;
            let c = p::stage_train_a2c(&run, &b, &a, kind(k))?;
            let acts = p::stage_optimize(&run, &b, &c)?;
            println!("actions for {} segments", acts.len());
        }
        Cmd::Evaluate(k) | Cmd::Pipeline(k) => print_report(&p::cmd_pipeline(&run, kind(k))?),
        Cmd::CompareSi { trials } => {
            let (r, t) = p::cmd_compare_si(&run, trials.unwrap_or(run.cfg.compare.trials))?;
            for (m, s) in [(&r.latent, t.latent_seconds_per_eval), (&r.eye, t.eye_seconds_per_eval)] {
                println!(
                    "{:?}: {:.2}% +- {:.2} over {} trials, {:.3e} s per evaluation",
                    m.objective, m.mean, m.std, r.trials, s
                );
            }
        }
        Cmd::Generalize => {
            let r = p::cmd_generalize(&run)?;
            for c in r.cells {
                println!(
                    "{}: train {:.2}%, held-out {:.2}%, gap {:.2}",
                    c.kind.name(),
                    c.train_improvement,
                    c.heldout_improvement,
                    c.gap
                );
            }
        }
        Cmd::Baseline { method, kind: k, .. } => print_report(&p::cmd_baseline(&run, method, kind(k))?.report),
        Cmd::ExportEye { segment, action, kind: k } => {
            let (csv, svg) = p::cmd_export_eye(&run, segment, action.as_deref(), kind(k))?;
            println!("{}\n{}", csv.display(), svg.display());
        }
        Cmd::ExportLatents => println!("{}", p::cmd_export_latents(&run)?.display()),
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    e.exit_code() as u8
}
