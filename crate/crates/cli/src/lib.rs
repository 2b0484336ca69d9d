//! `gatekeep`: login, SSH certificates, and project and admin commands
//! against the gatekeep services.
//!
//! Exit codes: 0 ok, 1 other failure, 2 timeout, 3 connectivity,
//! 4 authentication, 5 authorization.

pub mod client;
pub mod commands;
pub mod config;
pub mod error;
pub mod session;

use std::io::{BufRead, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use config::ClientConfig;
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "gatekeep", version, about = "Client for the gatekeep access control plane")]
pub struct Cli {
    /// Broker base URL. Overrides the config file.
    #[arg(long, env = "GATEKEEP_BROKER", global = true)]
    pub broker: Option<String>,
    /// Config file (key = value lines).
    #[arg(long, env = "GATEKEEP_CONFIG", global = true)]
    pub config: Option<PathBuf>,
    /// Machine-readable output.
    #[arg(long, global = true)]
    pub json: bool,
    /// Answer yes to confirmation prompts.
    #[arg(long, short = 'y', global = true)]
    pub yes: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sign in through the broker with a device code.
    Login {
        /// Identity provider to suggest on the approval page.
        #[arg(long)]
        idp: Option<String>,
        /// Give up after this many seconds without approval.
        #[arg(long)]
        timeout: Option<u64>,
    },
    /// Forget the cached session and end it at the broker.
    Logout,
    /// Show the signed-in identity, roles and projects.
    Whoami,
    /// Get a short-lived SSH certificate for a public key.
    Cert {
        /// Path to the SSH public key, e.g. ~/.ssh/id_ed25519.pub
        public_key: PathBuf,
        /// Rewrite the managed block in the SSH config file.
        #[arg(long)]
        update_ssh_config: bool,
    },
    /// Project membership.
    #[command(subcommand)]
    Project(ProjectCommand),
    /// Platform administration.
    #[command(subcommand)]
    Admin(AdminCommand),
}

#[derive(Debug, Subcommand)]
pub enum ProjectCommand {
    /// Projects visible to you.
    List,
    /// Invite someone to a project by email.
    Invite {
        email: String,
        /// Project code; may be left out if you belong to one project.
        #[arg(long)]
        project: Option<String>,
        #[arg(long, value_enum, default_value_t = InviteRole::Researcher)]
        role: InviteRole,
    },
    /// Remove someone's access to a project.
    Revoke {
        /// Username, persistent id or email.
        user: String,
        #[arg(long)]
        project: Option<String>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InviteRole {
    Researcher,
    Pi,
}

impl InviteRole {
    pub fn as_str(self) -> &'static str {
        match self {
            InviteRole::Researcher => "researcher",
            InviteRole::Pi => "pi",
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum AdminCommand {
    /// Engage, release or list kill switches.
    Killswitch {
        #[arg(value_enum)]
        action: SwitchAction,
        /// global, user:<persistent id> or service:<service id>
        #[arg(long, required_if_eq_any([("action", "engage"), ("action", "release")]))]
        scope: Option<String>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SwitchAction {
    Engage,
    Release,
    List,
}

/// Everything a command needs besides its arguments.
pub struct Context<'a> {
    pub config: ClientConfig,
    pub json: bool,
    pub yes: bool,
    pub out: &'a mut dyn Write,
    pub err: &'a mut dyn Write,
    pub input: &'a mut dyn BufRead,
}

pub fn load_config(cli: &Cli) -> Result<ClientConfig, CliError> {
    let mut cfg = ClientConfig::load(cli.config.as_deref())?;
    if let Some(b) = &cli.broker {
        cfg.broker = Some(config::parse_url(b)?);
    }
    Ok(cfg)
}

pub fn run(cli: Cli, out: &mut dyn Write, err: &mut dyn Write, input: &mut dyn BufRead) -> ExitCode {
    let config = match load_config(&cli) {
        Ok(c) => c,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return e.into();
        }
    };
    let mut ctx = Context {
        config,
        json: cli.json,
        yes: cli.yes,
        out,
        err,
        input,
    };
    match commands::dispatch(&mut ctx, cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report(&mut ctx, &e);
            e.into()
        }
    }
}

fn report(ctx: &mut Context, e: &CliError) {
    if ctx.json {
        let body = serde_json::json!({"error": e.code(), "message": e.to_string()});
        let _ = writeln!(ctx.err, "{body}");
    } else {
        let _ = writeln!(ctx.err, "error: {e}");
    }
}
