use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ladder_sim::experiments::{run, ExperimentKind, ExperimentSpec, GrapeRow};
use ladder_sim::protocols::ProtocolId;

#[derive(Parser)]
#[command(name = "simulate", version, about = "Disorder and pulse-optimization studies for the ladder processor")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Naive-protocol fidelity against disorder strength.
    Sweep(Common),
    /// GRAPE optimization table.
    Grape(Optimize),
    /// Frozen optimized controls under perturbed disorder.
    Resilience(Optimize),
    /// GRAPE on a compressed time grid.
    Reduced(Optimize),
}

#[derive(Args)]
struct Optimize {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    flags: GrapeFlags,
}

#[derive(Args)]
struct Common {
    /// Experiment file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Top-level seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Disorder samples per point.
    #[arg(long)]
    samples: Option<usize>,
    /// Worker threads; results do not depend on this.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args, Default)]
struct GrapeFlags {
    /// Run a single problem instead of the configured rows.
    #[arg(long)]
    problem: Option<ProtocolId>,
    /// Blockade ratio η_BR for every row.
    #[arg(long)]
    eta: Option<f64>,
    /// Seed of the optimization realization.
    #[arg(long)]
    disorder_seed: Option<u64>,
    /// Relative disorder of the optimization realization.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Duration factor; 0.5 halves the naive schedule.
    #[arg(long)]
    time_scale: Option<f64>,
    /// Iteration budget.
    #[arg(long)]
    iters: Option<usize>,
}

fn apply(spec: &mut ExperimentSpec, kind: ExperimentKind, c: &Common, g: &GrapeFlags) {
    spec.kind = kind;
    if let Some(s) = c.seed {
        spec.seed = s;
    }
    if let Some(n) = c.samples {
        spec.n_samples = n;
    }
    if let Some(eta) = g.eta {
        spec.eta_br = eta;
        spec.resilience.eta_br = Some(eta);
        spec.grape.rows.iter_mut().for_each(|r| r.eta_br = Some(eta));
    }
    if let Some(s) = g.disorder_seed {
        spec.grape.disorder_seed = Some(s);
    }
    if let Some(e) = g.epsilon {
        spec.grape.epsilon = e;
    }
    if let Some(n) = g.iters {
        spec.grape.settings.max_iters = n;
    }
    if let Some(p) = g.problem {
        spec.resilience.protocol = p;
        spec.grape.rows = vec![GrapeRow {
            protocol: p,
            eta_br: g.eta,
            time_scale: g.time_scale.unwrap_or(if kind == ExperimentKind::ReducedTime { 0.5 } else { 1.0 }),
        }];
    } else if let Some(ts) = g.time_scale {
        spec.grape.rows.iter_mut().for_each(|r| r.time_scale = ts);
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let none = GrapeFlags::default();
    let (kind, common, flags) = match &cli.command {
        Command::Sweep(c) => (ExperimentKind::DisorderSweep, c, &none),
        Command::Grape(o) => (ExperimentKind::GrapeTable, &o.common, &o.flags),
        Command::Resilience(o) => (ExperimentKind::Resilience, &o.common, &o.flags),
        Command::Reduced(o) => (ExperimentKind::ReducedTime, &o.common, &o.flags),
    };
    if let Some(t) = common.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    }
    let result = ExperimentSpec::load(&common.config).and_then(|mut spec| {
        apply(&mut spec, kind, common, flags);
        run(&spec, &common.out)
    });
    match result {
        Ok(m) => {
            println!(
                "{} finished in {:.1} s; {} outputs in {}",
                kind.name(),
                m.wall_clock_secs,
                m.outputs.len(),
                common.out.display()
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
