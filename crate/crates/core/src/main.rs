use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use spinkin::config::{parse_config, ModelKind, ScenarioConfig};
use spinkin::output::{self, Provenance};
use spinkin::semiclassics::{bloch_integrate, epsilon_sweep, run_model};

/// Spin-resolved Wigner/Boltzmann kinetics on a 1D phase space.
///
/// Scenario files use a sectioned `key = value` grammar; run `validate` on a
/// file to print its canonical form with all defaults filled in.
#[derive(Debug, Parser)]
#[command(name = "spinkin", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Scenario file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `[run] output`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for the compute kernels.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Tabulate scattering rates and channel matrices on the transfer grid.
    Channels,
    /// Run the configured model to `t_end`, writing diagnostics and snapshots.
    Simulate,
    /// Compare the rescaled quantum dynamics with the limit model over ε.
    Sweep {
        #[arg(long, value_delimiter = ',', default_value = "0.4,0.2,0.1")]
        epsilons: Vec<f64>,
    },
    /// Integrate the homogeneous Bloch equation for the initial polarization.
    Bloch,
    /// Parse and validate the scenario, printing its canonical form.
    Validate,
}

enum Failure {
    Config(String),
    Breach(String),
    Numerical(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 1,
            Failure::Breach(_) => 2,
            Failure::Numerical(_) => 3,
        }
    }
}

impl From<spinkin::Error> for Failure {
    fn from(e: spinkin::Error) -> Self {
        Failure::Numerical(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Numerical(format!("i/o: {e}"))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (Failure::Config(m) | Failure::Breach(m) | Failure::Numerical(m)) = &f;
            eprintln!("error: {m}");
            ExitCode::from(f.code())
        }
    }
}

fn run(cli: &Cli) -> Result<(), Failure> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Config(format!("--threads: {e}")))?;
    }
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| Failure::Config("--config <path> is required".into()))?;
    let cfg = parse_config(path).map_err(|e| Failure::Config(e.to_string()))?;
    let out = cli.out.clone().unwrap_or_else(|| cfg.run.output.clone());
    let prov = Provenance {
        config_hash: cfg.hash(),
        scaling: cfg.scaling_label(),
    };
    match &cli.command {
        Command::Validate => {
            print!("{}", cfg.serialize());
            println!("# config_hash={}", prov.config_hash);
            Ok(())
        }
        Command::Channels => {
            let setup = cfg.channel_setup()?;
            let file = out.join("channels.csv");
            output::write_channel_table(&file, &prov, &setup)?;
            println!("wrote {}", file.display());
            Ok(())
        }
        Command::Simulate => match cfg.run.model {
            ModelKind::Bloch => bloch(&cfg, &out, &prov),
            _ => simulate(&cfg, &out, &prov),
        },
        Command::Bloch => bloch(&cfg, &out, &prov),
        Command::Sweep { epsilons } => sweep(&cfg, &out, &prov, epsilons),
    }
}

fn simulate(cfg: &ScenarioConfig, out: &Path, prov: &Provenance) -> Result<(), Failure> {
    let start = Instant::now();
    let model = match cfg.run.model {
        ModelKind::Wigner => cfg.quantum_model()?,
        _ => cfg.limit_model()?,
    };
    let f0 = cfg.initial.field(&model.grid)?;
    let report = run_model(&model, &f0, &cfg.run_settings())?;
    output::write_diagnostics(&out.join("diagnostics.csv"), prov, &report.diagnostics)?;
    for (i, (t, f)) in report.snapshots.iter().enumerate() {
        output::write_snapshot(&out.join(format!("snapshot_{i:04}.csv")), prov, *t, f)?;
    }
    let first = &report.diagnostics[0];
    let last = report.diagnostics.last().expect("initial diagnostics");
    let mass_drift = (last.mass - first.mass).abs();
    let norm_drift = (last.l2_norm - first.l2_norm).abs() / first.l2_norm.max(f64::MIN_POSITIVE);
    println!("steps: {}", report.diagnostics.len() - 1);
    println!("mass drift: {mass_drift:e}");
    println!("relative L2 norm drift: {norm_drift:e}");
    let mut log = vec![format!("simulate {} in {:.3} s", cfg.run.model, start.elapsed().as_secs_f64())];
    if let Some(step) = report.positivity_flag {
        let msg = format!("positivity: minimum eigenvalue below floor first at step {step}");
        println!("{msg}");
        log.push(msg);
    }
    if let Some(b) = &report.breach {
        log.push(format!("monitor breach: {b}"));
    }
    output::write_log(&out.join("run.log"), &log)?;
    match report.breach {
        Some(b) => Err(Failure::Breach(format!("monitor breach: {b}"))),
        None => Ok(()),
    }
}

fn bloch(cfg: &ScenarioConfig, out: &Path, prov: &Provenance) -> Result<(), Failure> {
    let start = Instant::now();
    let system = cfg.bloch_system()?;
    let f0 = cfg.initial.polarization;
    let traj = bloch_integrate(f0, &system, cfg.run.t_end, cfg.bloch_tol)?;
    output::write_bloch(&out.join("bloch.csv"), prov, &traj)?;
    let drift = traj.f.iter().map(|f| (f.norm() - f0.norm()).abs()).fold(0.0, f64::max);
    println!("accepted steps: {}", traj.t.len() - 1);
    println!("polarization norm drift: {drift:e}");
    output::write_log(
        &out.join("run.log"),
        &[format!("bloch in {:.3} s, {} rejected steps", start.elapsed().as_secs_f64(), traj.rejected)],
    )?;
    // without damping the norm is invariant; allow ten times the tolerance
    if system.damping.0.amax() == 0.0 && drift > 10.0 * cfg.bloch_tol {
        return Err(Failure::Breach(format!("polarization norm drifted by {drift:e}")));
    }
    Ok(())
}

fn sweep(cfg: &ScenarioConfig, out: &Path, prov: &Provenance, epsilons: &[f64]) -> Result<(), Failure> {
    let problem = cfg.sweep_problem()?;
    let start = Instant::now();
    let rows = epsilon_sweep(&problem, epsilons)?;
    output::write_sweep(&out.join("sweep.csv"), prov, &rows)?;
    let mut log: Vec<String> = rows
        .iter()
        .map(|r| format!("eps={:e} runtime={:.3} s", r.eps, r.runtime.as_secs_f64()))
        .collect();
    log.push(format!("total {:.3} s", start.elapsed().as_secs_f64()));
    output::write_log(&out.join("run.log"), &log)?;
    for r in &rows {
        println!("eps {:e}: L2 distance {:e}", r.eps, r.distance);
    }
    Ok(())
}
