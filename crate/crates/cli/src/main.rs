use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use porolab_cli::config::Scenario;
use porolab_cli::{presets, run_scenario, ConfigError, RunError};

#[derive(Parser)]
#[command(
    name = "porolab",
    version,
    about = "Diffusion scenarios for gas and liquid flow in porous media"
)]
struct Cli {
    /// Worker threads for the particle walks and coefficient sampling.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file or a preset name.
    Run {
        scenario: String,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Overrides the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Shipped scenarios and the physical case each one covers.
    ListPresets {
        #[arg(long)]
        json: bool,
    },
}

fn load(arg: &str) -> Result<Scenario, ConfigError> {
    let path = Path::new(arg);
    if path.exists() {
        return Scenario::load(path);
    }
    match presets::load(arg) {
        Some(s) => s,
        None => Err(ConfigError::key(
            "scenario",
            format!(
                "`{arg}` is neither a file nor a preset ({})",
                presets::names().join(", ")
            ),
        )),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(3);
        }
    }
    match cli.command {
        Command::ListPresets { json } => match presets::list() {
            Ok(items) => {
                if json {
                    println!("{}", presets::list_json(&items));
                } else {
                    print!("{}", presets::list_text(&items));
                }
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(2)
            }
        },
        Command::Run {
            scenario,
            out,
            seed,
        } => {
            let mut s = match load(&scenario) {
                Ok(s) => s,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            };
            if let Some(seed) = seed {
                s.seed = seed;
            }
            match run_scenario(&s, Some(&out)) {
                Ok(o) => {
                    for r in &o.reports {
                        let tag = if r.passed() { "PASS" } else { "FAIL" };
                        let rel = |w: &&porolab::analysis::CheckItem| {
                            w.slack / w.bound.abs().max(f64::MIN_POSITIVE)
                        };
                        let worst =
                            r.items.iter().find(|w| !w.pass).or_else(|| {
                                r.items.iter().min_by(|a, b| rel(a).total_cmp(&rel(b)))
                            });
                        match worst {
                            Some(w) => println!(
                                "{tag} {:<20} worst {}:{} observed {:.6e} bound {:.6e}",
                                r.name, w.check, w.quantity, w.observed, w.bound
                            ),
                            None => println!("{tag} {}", r.name),
                        }
                    }
                    println!("wrote {}", out.join(&o.name).display());
                    if o.passed() {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(1)
                    }
                }
                Err(RunError::Config(e)) => {
                    eprintln!("error: {e}");
                    ExitCode::from(2)
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(3)
                }
            }
        }
    }
}
