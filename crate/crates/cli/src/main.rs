use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mudra::controller::ControllerKind;
use mudra::ExecMode;
use mudra_cli::{format_table, grade_trace, parse_seeds, run_experiments, Failure, RunConfig, EXIT_CONFIG, EXIT_RUN_FAILURE};

#[derive(Parser)]
#[command(name = "mudra", version, about = "Multicast rate adaptation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario over one or more seeds and controllers.
    Run {
        /// Scenario file (TOML).
        scenario: PathBuf,
        /// Seeds, e.g. `1,2,3`, `1..11` or `1..=10`. Defaults to the scenario's list.
        #[arg(long)]
        seeds: Option<String>,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Run only this controller (mudra, fixed, pseudo, sra).
        #[arg(long)]
        controller: Option<ControllerKind>,
        /// Emit SVG plots per run.
        #[arg(long)]
        plots: bool,
        /// Also write the per-rate oracle sweep.
        #[arg(long)]
        oracle: bool,
        /// Run everything on the calling thread.
        #[arg(long)]
        serial: bool,
    },
    /// Validate a scenario file without running it.
    Check { scenario: PathBuf },
    /// Grade video quality per receiver from a trace CSV.
    Video {
        trace: PathBuf,
        /// Scenario whose [video] section supplies the frame mix and tables.
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Write the grade CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run {
            scenario,
            seeds,
            out,
            controller,
            plots,
            oracle,
            serial,
        } => {
            let seeds = match seeds.as_deref().map(parse_seeds).transpose() {
                Ok(s) => s,
                Err(e) => {
                    eprintln!("configuration error: {e:#}");
                    return ExitCode::from(EXIT_CONFIG as u8);
                }
            };
            let cfg = RunConfig {
                scenario_path: scenario,
                out_dir: out,
                seeds,
                controller,
                plots,
                oracle,
                mode: if serial { ExecMode::Serial } else { ExecMode::Parallel },
            };
            match run_experiments(&cfg) {
                Ok(rows) => {
                    print!("{}", format_table(&rows));
                    0
                }
                Err(f) => {
                    eprintln!("{f}");
                    f.exit_code()
                }
            }
        }
        Command::Check { scenario } => match mudra::load_scenario(&scenario) {
            Ok(s) => {
                println!("{}: ok ({} receivers, {} intervals)", s.name, s.nodes, s.intervals());
                0
            }
            Err(e) => {
                eprintln!("{}", Failure::Config(e.into()));
                EXIT_CONFIG
            }
        },
        Command::Video { trace, scenario, out } => match grade_trace(&trace, scenario.as_deref()) {
            Ok(report) => {
                let written: anyhow::Result<()> = match &out {
                    Some(path) => std::fs::File::create(path)
                        .map_err(anyhow::Error::from)
                        .and_then(|f| Ok(mudra::export::write_grades(&report.nodes, f)?)),
                    None => mudra::export::write_grades(&report.nodes, std::io::stdout()).map_err(Into::into),
                };
                match written {
                    Ok(()) => {
                        for (g, share) in &report.distribution {
                            eprintln!("{:<9} {:>6.1}%", g.as_str(), share * 100.0);
                        }
                        0
                    }
                    Err(e) => {
                        eprintln!("run failed: {e:#}");
                        EXIT_RUN_FAILURE
                    }
                }
            }
            Err(e) => {
                eprintln!("run failed: {e:#}");
                EXIT_RUN_FAILURE
            }
        },
    };
    ExitCode::from(code as u8)
}
