use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use scada_cosim::attack::DosTarget;
use scada_cosim::harness::{
    builtin_config, report, run_scenario, run_sweep, write_outputs, write_report, write_sweep,
    HarnessError, Scenario, ScenarioConfig, ScenarioId, SweepKind, ValidationError,
};
use scada_cosim::scada::CommandMode;

#[derive(Parser)]
#[command(
    name = "scada-cosim",
    version,
    about = "DNP3 SCADA / grid co-simulation"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(clap::Args)]
struct ScenarioArgs {
    /// Built-in scenario id (UC1..UC4, BASELINE, DOS_PAYLOAD_SWEEP,
    /// DOS_INTERVAL_SWEEP) or a scenario TOML file.
    #[arg(long, short)]
    scenario: String,
    #[arg(long)]
    seed: Option<u64>,
    /// Scenario seconds to simulate.
    #[arg(long)]
    duration: Option<f64>,
    #[arg(long)]
    masters: Option<usize>,
    /// Scenario seconds between polls.
    #[arg(long)]
    poll_interval: Option<f64>,
    #[arg(long, value_enum)]
    command_mode: Option<Mode>,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum Mode {
    SelectOperate,
    DirectOperate,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one scenario and write its logs and report.
    Run {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, short, default_value = "out")]
        out: PathBuf,
    },
    /// Run a flood sweep over payload sizes or intervals.
    Sweep {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, value_enum)]
        kind: Option<Kind>,
        /// Seeds per trial value.
        #[arg(long)]
        seeds: Option<usize>,
        /// Restrict to one target router.
        #[arg(long, value_enum)]
        target: Option<Target>,
        #[arg(long, short, default_value = "out")]
        out: PathBuf,
    },
    /// Aggregate run and sweep outputs found under a directory.
    Report {
        #[arg(long, short)]
        input: PathBuf,
        /// Where to write summary files; the input directory by default.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Check scenario files without running them.
    Validate {
        #[arg(required = true)]
        scenarios: Vec<String>,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum Kind {
    Payload,
    Interval,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum Target {
    Sub,
    Ucc,
}

fn load(spec: &str) -> Result<(ScenarioConfig, PathBuf), ValidationError> {
    if let Some(id) = ScenarioId::parse(spec) {
        return Ok((builtin_config(id), PathBuf::from(".")));
    }
    let path = Path::new(spec);
    let text = std::fs::read_to_string(path)
        .map_err(|e| ValidationError::new("<file>", format!("{spec}: {e}")))?;
    let config = ScenarioConfig::from_toml_str(&text)?;
    Ok((
        config,
        path.parent().unwrap_or(Path::new(".")).to_path_buf(),
    ))
}

fn resolve(args: &ScenarioArgs) -> Result<Scenario, ValidationError> {
    let (mut c, base) = load(&args.scenario)?;
    if let Some(s) = args.seed {
        c.seed = s;
    }
    if let Some(d) = args.duration {
        c.duration_s = d;
    }
    if let Some(m) = args.masters {
        c.masters = m;
    }
    if let Some(p) = args.poll_interval {
        c.master.poll_interval_s = p;
    }
    if let Some(m) = args.command_mode {
        c.master.command_mode = match m {
            Mode::SelectOperate => CommandMode::SelectOperate,
            Mode::DirectOperate => CommandMode::DirectOperate,
        };
    }
    Scenario::resolve(c, &base)
}

fn execute(cmd: Cmd) -> Result<(), HarnessError> {
    match cmd {
        Cmd::Run { scenario, out } => {
            let sc = resolve(&scenario)?;
            let output = run_scenario(&sc)?;
            write_outputs(&output, &out)?;
            let r = &output.report;
            println!(
                "{} seed {}: time to overload {}, {} alerts, {} events -> {}",
                r.scenario,
                r.seed,
                r.time_to_overload_s
                    .map_or("none".into(), |t| format!("{t:.1} s")),
                output.alerts.len(),
                output.events.len(),
                out.display()
            );
        }
        Cmd::Sweep {
            scenario,
            kind,
            seeds,
            target,
            out,
        } => {
            let mut sc = resolve(&scenario)?;
            let kind = match kind {
                Some(Kind::Payload) => SweepKind::Payload,
                Some(Kind::Interval) => SweepKind::Interval,
                None => SweepKind::for_scenario(sc.config.id).ok_or_else(|| {
                    ValidationError::new("id", "not a sweep scenario; pass --kind")
                })?,
            };
            if sc.config.dos.is_none() {
                return Err(ValidationError::new("dos", "sweeps need a dos section").into());
            }
            let section = sc.config.sweep.get_or_insert_with(Default::default);
            if let Some(n) = seeds {
                if n == 0 {
                    return Err(ValidationError::new("sweep.seeds", "must be >= 1").into());
                }
                section.seeds = n;
            }
            if let Some(t) = target {
                section.targets = vec![match t {
                    Target::Sub => DosTarget::SubstationRouter,
                    Target::Ucc => DosTarget::UccRouter,
                }];
            }
            let summary = run_sweep(&sc, kind)?;
            write_sweep(&summary, &out)?;
            for r in &summary.rows {
                println!(
                    "{:<4} {:>7} rtt {:>9} ms  goodput {:>10.1} B/s",
                    r.target.label(),
                    r.value,
                    r.rtt_during_ms.map_or("-".into(), |v| format!("{v:.2}")),
                    r.goodput_bps
                );
            }
        }
        Cmd::Report { input, out } => {
            let summary = report(&input)?;
            write_report(&summary, out.as_deref().unwrap_or(&input))?;
            print!("{}", summary.to_text());
        }
        Cmd::Validate { scenarios } => {
            for s in &scenarios {
                let (c, base) = load(s)?;
                Scenario::resolve(c, &base)?;
                println!("{s}: ok");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
