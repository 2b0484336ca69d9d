use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use clap::Parser;
use tracing_subscriber::EnvFilter;

use gatekeep_core::registry::Role;
use gatekeep_core::stubs::JupyterAuthenticator;
use gatekeep_core::token::Introspector;
use gatekeep_core::{Platform, PlatformConfig, SystemClock};
use gatekeep_server::{router, AppState};

/// Control-plane daemon: broker, registry, tokens, SSH CA, gateway and SIEM.
#[derive(Debug, Parser)]
#[command(name = "gatekeepd", version)]
struct Args {
    #[arg(long, default_value = "127.0.0.1:8080")]
    listen: SocketAddr,
    /// Audit events, alerts and the invitation outbox are written here.
    #[arg(long)]
    state_dir: Option<PathBuf>,
    /// Derive signing keys from this label instead of generating them.
    /// For test deployments only.
    #[arg(long)]
    key_label: Option<String>,
    /// `email=role` for a platform invitation minted at startup. Repeatable.
    #[arg(long = "bootstrap", value_parser = parse_bootstrap)]
    bootstrap: Vec<(String, Role)>,
    /// Serve assertions from the built-in simulated identity providers.
    #[arg(long)]
    simulate_idps: bool,
    /// Take the request source from X-Forwarded-For.
    #[arg(long)]
    trust_forwarded: bool,
    /// Connect the stub Jupyter backend as a tunnel client with this id.
    #[arg(long)]
    jupyter_client: Option<String>,
    /// Where users approve device logins.
    #[arg(long)]
    verification_uri: Option<String>,
}

fn parse_bootstrap(raw: &str) -> Result<(String, Role), String> {
    let (email, role) = raw.split_once('=').ok_or("expected email=role")?;
    if email.is_empty() {
        return Err("empty email".into());
    }
    Ok((email.to_owned(), role.parse()?))
}

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .init();
    let args = Args::parse();

    let mut config = PlatformConfig {
        state_dir: args.state_dir,
        key_label: args.key_label,
        bootstrap: args.bootstrap,
        ..PlatformConfig::default()
    };
    if let Some(uri) = args.verification_uri {
        config.broker.verification_uri = uri;
    }
    let platform = Arc::new(Platform::new(config, Arc::new(SystemClock))?);
    for inv in &platform.bootstrap_invitations {
        println!("bootstrap invitation {} {} {}", inv.email, inv.role, inv.token);
    }
    if let Some(client) = &args.jupyter_client {
        let introspector: Arc<dyn Introspector> = platform.tokens.clone();
        let stub = Arc::new(JupyterAuthenticator::new(introspector, "tunnel:jupyter"));
        platform.gateway.connect_client(client, stub);
        tracing::info!(client, "stub jupyter backend connected");
    }

    let state = AppState::new(platform)
        .simulate_idps(args.simulate_idps)
        .trust_forwarded(args.trust_forwarded);
    let listener = tokio::net::TcpListener::bind(args.listen).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(state).into_make_service_with_connect_info::<SocketAddr>())
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
