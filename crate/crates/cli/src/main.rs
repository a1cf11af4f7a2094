use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use plc_cli::commands::{self, DeviateSpec, SolverFlags, EXIT_USAGE};

/// Equilibrium solver and verifier for pairwise lottery contest games.
#[derive(Parser)]
#[command(name = "plc", version, disable_help_subcommand = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct SolverArgs {
    /// Target precision of the approximate equilibrium
    #[arg(long, default_value_t = 1e-6)]
    epsilon: f64,

    /// Step policy: adaptive, guaranteed, or fixed:<gamma>
    #[arg(long, default_value = "adaptive")]
    step_mode: String,

    /// Evaluation budget of the solver
    #[arg(long, default_value_t = 100_000)]
    max_iters: u64,

    /// Starting point: ones or scale
    #[arg(long, default_value = "ones")]
    init: String,
}

impl SolverArgs {
    fn flags(&self) -> Result<SolverFlags, String> {
        Ok(SolverFlags {
            epsilon: self.epsilon,
            step_mode: commands::parse_step_mode(&self.step_mode)?,
            max_iterations: self.max_iters,
            init_mode: commands::parse_init_mode(&self.init)?,
        })
    }
}

#[derive(Subcommand)]
enum Command {
    /// Solve the contestant stage of an instance file and verify the result
    Solve {
        /// Instance file (omit when using --random)
        instance: Option<PathBuf>,

        #[command(flatten)]
        solver: SolverArgs,

        /// Report output path (stdout when omitted)
        #[arg(long)]
        out: Option<PathBuf>,

        /// Solve a batch of seeded random instances instead of a file
        #[arg(long)]
        random: Option<usize>,

        /// Seed for --random
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Construct the designer equilibrium for the instance's prize mode
    Build {
        instance: PathBuf,

        /// Override the instance file's mode: ipm or dpm
        #[arg(long)]
        mode: Option<String>,

        #[command(flatten)]
        solver: SolverArgs,

        /// Report output path (stdout when omitted)
        #[arg(long)]
        out: Option<PathBuf>,

        /// Also write the constructed profile as an instance file
        #[arg(long)]
        profile_out: Option<PathBuf>,
    },
    /// Re-run an embedded counterexample against its published values
    Repro {
        /// thm4.1, thm4.4, or thm5.1
        case: String,

        /// Write the full repro document here
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a solved report against its instance
    Verify {
        instance: PathBuf,
        report: PathBuf,

        /// Precision to verify at (defaults to the report's)
        #[arg(long)]
        epsilon: Option<f64>,
    },
    /// Evaluate a designer's deviation grid
    Deviate {
        instance: PathBuf,

        /// Designer id
        #[arg(long)]
        designer: String,

        /// Comma-separated bias-ratio grid
        #[arg(long, default_value = "")]
        bias_ratios: String,

        /// Comma-separated reward grid (single-contest designers)
        #[arg(long, default_value = "")]
        rewards: String,

        /// Comma-separated participant pairs a:b (single-contest designers)
        #[arg(long, default_value = "")]
        pairs: String,

        #[command(flatten)]
        solver: SolverArgs,

        /// Audit CSV output path (stdout when omitted)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Emit plot-ready CSV files from a report
    EmitPlotdata {
        report: PathBuf,

        /// Output directory for the CSV files
        #[arg(long, default_value = "plotdata")]
        out_dir: PathBuf,
    },
}

fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // Help and version requests are not usage errors.
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            return code;
        }
    };
    match cli.command {
        Command::Solve {
            instance,
            solver,
            out,
            random,
            seed,
        } => {
            let flags = match solver.flags() {
                Ok(f) => f,
                Err(e) => {
                    eprintln!("error: {e}");
                    return EXIT_USAGE;
                }
            };
            if let Some(count) = random {
                return commands::cmd_solve_random(count, seed, &flags);
            }
            let Some(path) = instance else {
                eprintln!("error: supply an instance file or --random <count>");
                return EXIT_USAGE;
            };
            commands::cmd_solve(&path, &flags, out.as_deref())
        }
        Command::Build {
            instance,
            mode,
            solver,
            out,
            profile_out,
        } => {
            let flags = match solver.flags() {
                Ok(f) => f,
                Err(e) => {
                    eprintln!("error: {e}");
                    return EXIT_USAGE;
                }
            };
            let mode = match mode.as_deref().map(commands::parse_mode).transpose() {
                Ok(m) => m,
                Err(e) => {
                    eprintln!("error: {e}");
                    return EXIT_USAGE;
                }
            };
            commands::cmd_build(
                &instance,
                mode,
                &flags,
                out.as_deref(),
                profile_out.as_deref(),
            )
        }
        Command::Repro { case, out } => commands::cmd_repro(&case, out.as_deref()),
        Command::Verify {
            instance,
            report,
            epsilon,
        } => commands::cmd_verify(&instance, &report, epsilon),
        Command::Deviate {
            instance,
            designer,
            bias_ratios,
            rewards,
            pairs,
            solver,
            out,
        } => {
            let flags = match solver.flags() {
                Ok(f) => f,
                Err(e) => {
                    eprintln!("error: {e}");
                    return EXIT_USAGE;
                }
            };
            let spec = match (|| -> Result<DeviateSpec, String> {
                Ok(DeviateSpec {
                    designer,
                    bias_ratios: commands::parse_float_list(&bias_ratios)?,
                    rewards: commands::parse_float_list(&rewards)?,
                    pairs: commands::parse_pairs(&pairs)?,
                })
            })() {
                Ok(s) => s,
                Err(e) => {
                    eprintln!("error: {e}");
                    return EXIT_USAGE;
                }
            };
            commands::cmd_deviate(&instance, &spec, &flags, out.as_deref())
        }
        Command::EmitPlotdata { report, out_dir } => commands::cmd_emit_plotdata(&report, &out_dir),
    }
}

fn main() -> ExitCode {
    ExitCode::from(run() as u8)
}
