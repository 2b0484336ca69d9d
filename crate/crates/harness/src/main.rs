use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gatekeep_harness::adversarial::run_adversarial;
use gatekeep_harness::principals::build_principals;
use gatekeep_harness::stories::{run_scenario, STORIES};
use gatekeep_harness::stress::run_stress;
use gatekeep_harness::{build_default_topology, enumerate_access_matrix, Env};

#[derive(Parser)]
#[command(name = "harness", about = "Run gatekeep user stories, access matrix and stress tests")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one story, or all of them, and print the transcript as JSON lines.
    Run {
        #[arg(long)]
        story: Option<u8>,
        /// Write transcripts here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compute the access matrix over the default topology.
    Matrix {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run concurrent notebook sessions.
    Stress {
        #[arg(long, default_value_t = 45)]
        sessions: usize,
    },
    /// Run randomized attack scripts against the reachability oracle.
    Adversarial {
        #[arg(long, default_value_t = 100)]
        scripts: usize,
        #[arg(long, default_value_t = 40)]
        ops: usize,
    },
    /// Print the default topology.
    Topology,
}

fn emit(out: &Option<PathBuf>, text: &str) -> std::io::Result<()> {
    match out {
        Some(path) => fs::write(path, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { story, out } => {
            let ids: Vec<u8> = match story {
                Some(n) => vec![n],
                None => STORIES.iter().map(|(n, _)| *n).collect(),
            };
            let mut text = String::new();
            let mut ok = true;
            for n in ids {
                let Some(t) = run_scenario(n) else {
                    eprintln!("no story {n}");
                    return ExitCode::from(2);
                };
                text.push_str(&t.to_jsonl());
                match t.first_failure() {
                    None => eprintln!("story {n}: pass ({} steps, {} ms)", t.steps.len(), t.elapsed_ms),
                    Some(f) => {
                        ok = false;
                        eprintln!("story {n}: FAIL {f}");
                    }
                }
            }
            emit(&out, &text).map(|_| ok)
        }
        Command::Matrix { out } => {
            let env = Env::new();
            let principals = build_principals(&env);
            let m = enumerate_access_matrix(&build_default_topology(), &env.p, &principals);
            let text = serde_json::to_string_pretty(&m).expect("serializable") + "\n";
            emit(&out, &text).map(|_| true)
        }
        Command::Stress { sessions } => {
            let r = run_stress(sessions);
            println!("{}", serde_json::to_string_pretty(&r).expect("serializable"));
            Ok(r.passed())
        }
        Command::Adversarial { scripts, ops } => {
            let r = run_adversarial(scripts, ops);
            println!("{}", serde_json::to_string_pretty(&r).expect("serializable"));
            Ok(r.passed())
        }
        Command::Topology => {
            println!("{}", serde_json::to_string_pretty(&build_default_topology()).expect("serializable"));
            Ok(true)
        }
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}
