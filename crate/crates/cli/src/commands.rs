use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::thread::sleep;
use std::time::{Duration, Instant};

use serde::Deserialize;
use serde_json::{json, Value};

use gatekeep_core::broker::{DeviceGrant, DevicePoll, IdentityProvider};
use gatekeep_core::gateway::{KillScope, KillSwitch, KILLSWITCH_AUDIENCE};
use gatekeep_core::registry::{Invitation, Project};
use gatekeep_core::sshca::{merge_managed_block, render_ssh_config, IssuedCertificate, SshCertificate, SshConfigParams};
use gatekeep_core::token::AccessToken;
use gatekeep_core::Timestamp;

use crate::client::Client;
use crate::error::CliError;
use crate::session::{now, CachedSession};
use crate::{AdminCommand, Command, Context, InviteRole, ProjectCommand, SwitchAction};

const PORTAL: &str = "portal";
const SSH_CA: &str = "ssh-ca";
/// Tokens the CLI mints for a single call do not need to outlive it.
const CALL_TOKEN_TTL: u64 = 60;

pub fn dispatch(ctx: &mut Context, command: Command) -> Result<(), CliError> {
    match command {
        Command::Login { idp, timeout } => login(ctx, idp.as_deref(), timeout.map(Duration::from_secs)),
        Command::Logout => logout(ctx),
        Command::Whoami => whoami(ctx),
        Command::Cert {
            public_key,
            update_ssh_config,
        } => cert(ctx, &public_key, update_ssh_config),
        Command::Project(ProjectCommand::List) => project_list(ctx),
        Command::Project(ProjectCommand::Invite { email, project, role }) => {
            project_invite(ctx, &email, project.as_deref(), role)
        }
        Command::Project(ProjectCommand::Revoke { user, project }) => project_revoke(ctx, &user, project.as_deref()),
        Command::Admin(AdminCommand::Killswitch { action, scope }) => killswitch(ctx, action, scope.as_deref()),
    }
}

fn emit(ctx: &mut Context, value: &Value, human: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<(), CliError> {
    if ctx.json {
        writeln!(ctx.out, "{value}")?;
    } else {
        human(ctx.out)?;
    }
    ctx.out.flush()?;
    Ok(())
}

fn datetime(ts: i64) -> String {
    chrono::DateTime::from_timestamp(ts, 0)
        .map(|d| d.format("%Y-%m-%d %H:%M:%SZ").to_string())
        .unwrap_or_else(|| ts.to_string())
}

/// Left-aligned columns, two spaces apart.
pub fn table(headers: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = headers.iter().map(|h| h.len()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: Vec<&str>| {
        let mut s = cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect::<Vec<_>>()
            .join("  ");
        s.truncate(s.trim_end().len());
        s.push('\n');
        s
    };
    let mut out = line(headers.to_vec());
    for row in rows {
        out.push_str(&line(row.iter().map(String::as_str).collect()));
    }
    out
}

/// A client plus the cached session.
struct Signed {
    client: Client,
    session: CachedSession,
}

impl Signed {
    fn open(ctx: &Context) -> Result<Self, CliError> {
        let client = Client::new(&ctx.config)?;
        let broker = ctx.config.broker()?.to_string();
        let session = CachedSession::load(&ctx.config.token_cache, &broker)?;
        Ok(Signed { client, session })
    }

    /// A fresh token for one call. Only this request carries the session id.
    fn token(&self, audience: &str, ttl: Option<u64>) -> Result<String, CliError> {
        let body = json!({"audience": audience, "ttl_secs": ttl});
        let t: AccessToken = self.client.post("/token", Some(&self.session.session_id), body)?;
        Ok(t.token)
    }

    fn portal(&self) -> Result<String, CliError> {
        self.token(PORTAL, Some(CALL_TOKEN_TTL))
    }
}

fn login(ctx: &mut Context, idp: Option<&str>, timeout: Option<Duration>) -> Result<(), CliError> {
    let client = Client::new(&ctx.config)?;
    if let Some(idp) = idp {
        let mut known: Vec<IdentityProvider> = client.get("/idps", None)?;
        known.extend(client.get::<Vec<IdentityProvider>>("/idps?kind=admin", None)?);
        if !known.iter().any(|p| p.idp_id == idp) {
            return Err(CliError::Usage(format!("unknown identity provider {idp}")));
        }
    }
    let grant: DeviceGrant = client.post("/device/start", None, json!({}))?;
    let mut uri = grant.verification_uri.clone();
    if let Some(idp) = idp {
        uri.push(if uri.contains('?') { '&' } else { '?' });
        uri.push_str("idp=");
        uri.push_str(idp);
    }
    let prompt = format!("To sign in, open {uri} and enter the code {}\n", grant.user_code);
    if ctx.json {
        ctx.err.write_all(prompt.as_bytes())?;
        ctx.err.flush()?;
    } else {
        ctx.out.write_all(prompt.as_bytes())?;
        ctx.out.flush()?;
    }

    let until_expiry = Duration::from_secs((grant.expires_at.0 - now()).max(0) as u64);
    let wait = timeout.or(ctx.config.login_timeout).unwrap_or(until_expiry).min(until_expiry);
    let deadline = Instant::now() + wait;
    let interval = Duration::from_secs(grant.interval_secs.max(1));
    loop {
        let remaining = deadline.saturating_duration_since(Instant::now());
        if remaining.is_zero() {
            return Err(CliError::LoginTimeout);
        }
        sleep(interval.min(remaining));
        match client.post::<DevicePoll>("/device/poll", None, json!({"device_code": grant.device_code}))? {
            DevicePoll::Pending => continue,
            DevicePoll::Expired => return Err(CliError::LoginTimeout),
            DevicePoll::Invalid => return Err(CliError::Protocol("the broker no longer knows this device code".into())),
            DevicePoll::Approved { session } => {
                let cached = CachedSession {
                    broker: ctx.config.broker()?.to_string(),
                    session_id: session.session_id,
                    persistent_id: session.persistent_id,
                    expires_at: session.expires_at.0,
                };
                cached.save(&ctx.config.token_cache)?;
                let value = json!({
                    "persistent_id": cached.persistent_id,
                    "expires_at": cached.expires_at,
                    "token_cache": ctx.config.token_cache,
                });
                return emit(ctx, &value, |out| {
                    writeln!(out, "Signed in as {} until {}", cached.persistent_id, datetime(cached.expires_at))
                });
            }
        }
    }
}

fn logout(ctx: &mut Context) -> Result<(), CliError> {
    let path = ctx.config.token_cache.clone();
    if let Ok(s) = Signed::open(ctx) {
        // The session may already be gone server-side; forgetting it locally
        // is what matters.
        let _ = s
            .client
            .post::<Value>("/revoke", Some(&s.session.session_id), json!({"target": s.session.session_id}));
    }
    let removed = CachedSession::clear(&path)?;
    emit(ctx, &json!({"logged_out": removed}), |out| {
        writeln!(out, "{}", if removed { "Signed out" } else { "Not signed in" })
    })
}

fn whoami(ctx: &mut Context) -> Result<(), CliError> {
    let s = Signed::open(ctx)?;
    let token = s.portal()?;
    let view: Value = s.client.get("/session", Some(&token))?;
    emit(ctx, &view, |out| {
        writeln!(out, "{} <{}>", view["persistent_id"].as_str().unwrap_or("?"), view["email"].as_str().unwrap_or("?"))?;
        writeln!(out, "via {}, session ends {}", view["idp_id"].as_str().unwrap_or("?"), datetime(view["expires_at"].as_i64().unwrap_or(0)))?;
        for r in view["roles"].as_array().into_iter().flatten() {
            match r["project_id"].as_str() {
                Some(p) => writeln!(out, "role {} on {p}", r["role"].as_str().unwrap_or("?"))?,
                None => writeln!(out, "role {}", r["role"].as_str().unwrap_or("?"))?,
            }
        }
        Ok(())
    })
}

/// `id_ed25519.pub` gives `id_ed25519-cert.pub`, as OpenSSH expects.
pub fn certificate_path(public_key: &Path) -> PathBuf {
    let s = public_key.to_string_lossy();
    let stem = s.strip_suffix(".pub").unwrap_or(&s);
    PathBuf::from(format!("{stem}-cert.pub"))
}

pub fn identity_path(public_key: &Path) -> PathBuf {
    let s = public_key.to_string_lossy();
    PathBuf::from(s.strip_suffix(".pub").unwrap_or(&s).to_owned())
}

#[derive(Deserialize)]
struct SshParams {
    cluster_domain: String,
    jump_host: String,
}

fn write_private(path: &Path, text: &str) -> Result<(), CliError> {
    use std::os::unix::fs::OpenOptionsExt;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("gatekeep-tmp");
    let mut f = fs::OpenOptions::new().write(true).create(true).truncate(true).mode(0o600).open(&tmp)?;
    f.write_all(text.as_bytes())?;
    f.sync_all()?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn cert(ctx: &mut Context, public_key: &Path, update_ssh_config: bool) -> Result<(), CliError> {
    let key_path = crate::config::expand(&public_key.to_string_lossy())?;
    let s = Signed::open(ctx)?;
    let key = fs::read_to_string(&key_path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", key_path.display())))?;
    let token = s.token(SSH_CA, None)?;
    let issued: IssuedCertificate = s.client.post("/sign", Some(&token), json!({"public_key": key.trim()}))?;
    let cert_path = certificate_path(&key_path);
    fs::write(&cert_path, format!("{}\n", issued.certificate.trim_end()))?;

    let mut aliases = Vec::new();
    let mut config_path = None;
    if update_ssh_config {
        let cert = SshCertificate::from_openssh(&issued.certificate)
            .map_err(|e| CliError::Protocol(format!("certificate: {e}")))?;
        let remote: SshParams = s.client.get("/ssh/params", None)?;
        let params = SshConfigParams {
            cluster_domain: ctx.config.cluster_domain.clone().unwrap_or(remote.cluster_domain),
            jump_host: remote.jump_host,
            identity_file: Some(identity_path(&key_path).to_string_lossy().into_owned()),
        };
        let block = render_ssh_config(&cert, &issued.projects, &params, Timestamp(now()))
            .map_err(|e| CliError::Protocol(format!("ssh config: {e}")))?;
        let path = ctx.config.ssh_config.clone();
        let existing = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
            Err(e) => return Err(e.into()),
        };
        let merged = merge_managed_block(&existing, &block);
        if merged != existing {
            write_private(&path, &merged)?;
        }
        aliases = block
            .lines()
            .filter_map(|l| l.strip_prefix("Host "))
            .map(str::to_owned)
            .collect();
        config_path = Some(path);
    }

    let value = json!({
        "certificate_path": cert_path,
        "principals": issued.principals,
        "valid_after": issued.valid_after.0,
        "valid_before": issued.valid_before.0,
        "ssh_config": config_path,
        "aliases": aliases,
    });
    emit(ctx, &value, |out| {
        writeln!(
            out,
            "Certificate written to {} for {} (valid until {})",
            cert_path.display(),
            issued.principals.join(", "),
            datetime(issued.valid_before.0)
        )?;
        if let Some(p) = &config_path {
            writeln!(out, "SSH config updated: {}", p.display())?;
            for a in &aliases {
                writeln!(out, "  ssh {a}")?;
            }
        }
        Ok(())
    })
}

fn projects(s: &Signed, token: &str) -> Result<Vec<Project>, CliError> {
    s.client.get("/projects", Some(token))
}

fn pick_project(all: Vec<Project>, wanted: Option<&str>) -> Result<Project, CliError> {
    match wanted {
        Some(w) => all
            .into_iter()
            .find(|p| p.code == w || p.project_id == w)
            .ok_or_else(|| CliError::Usage(format!("no project {w} visible to you"))),
        None => {
            let mut all = all;
            match all.len() {
                1 => Ok(all.remove(0)),
                0 => Err(CliError::Usage("you belong to no projects".into())),
                _ => Err(CliError::Usage("several projects are visible; choose one with --project".into())),
            }
        }
    }
}

fn project_list(ctx: &mut Context) -> Result<(), CliError> {
    let s = Signed::open(ctx)?;
    let token = s.portal()?;
    let list = projects(&s, &token)?;
    let value = serde_json::to_value(&list).expect("serializable");
    let rows: Vec<Vec<String>> = list
        .iter()
        .map(|p| {
            vec![
                p.code.clone(),
                p.title.clone(),
                serde_json::to_value(p.state).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default(),
                datetime(p.expires_at.0),
                p.project_id.clone(),
            ]
        })
        .collect();
    emit(ctx, &value, |out| {
        out.write_all(table(&["CODE", "TITLE", "STATE", "EXPIRES", "ID"], &rows).as_bytes())
    })
}

fn project_invite(ctx: &mut Context, email: &str, project: Option<&str>, role: InviteRole) -> Result<(), CliError> {
    let s = Signed::open(ctx)?;
    let token = s.portal()?;
    let p = pick_project(projects(&s, &token)?, project)?;
    let inv: Invitation = s.client.post(
        &format!("/projects/{}/invitations", p.project_id),
        Some(&token),
        json!({"email": email, "role": role.as_str()}),
    )?;
    let value = serde_json::to_value(&inv).expect("serializable");
    emit(ctx, &value, |out| {
        writeln!(out, "invitation {} {} {} {}", p.code, inv.email, role.as_str(), inv.token)
    })
}

#[derive(Deserialize)]
struct Member {
    persistent_id: String,
    email: String,
    #[serde(default)]
    username: Option<String>,
}

fn project_revoke(ctx: &mut Context, user: &str, project: Option<&str>) -> Result<(), CliError> {
    let s = Signed::open(ctx)?;
    let token = s.portal()?;
    let p = pick_project(projects(&s, &token)?, project)?;
    let members: Vec<Member> = s.client.get(&format!("/projects/{}/members", p.project_id), Some(&token))?;
    let m = members
        .iter()
        .find(|m| m.persistent_id == user || m.email == user || m.username.as_deref() == Some(user))
        .ok_or_else(|| CliError::Usage(format!("{user} is not a member of {}", p.code)))?;
    let r: Value = s
        .client
        .delete(&format!("/projects/{}/members/{}", p.project_id, m.persistent_id), Some(&token))?;
    let revoked = r["revoked"].as_u64().unwrap_or(0);
    let value = json!({"project": p.code, "persistent_id": m.persistent_id, "revoked": revoked});
    emit(ctx, &value, |out| writeln!(out, "revoked {user} from {} ({revoked} binding(s))", p.code))
}

fn confirm(ctx: &mut Context, question: &str) -> Result<bool, CliError> {
    if ctx.yes {
        return Ok(true);
    }
    write!(ctx.err, "{question} [y/N] ")?;
    ctx.err.flush()?;
    let mut answer = String::new();
    ctx.input.read_line(&mut answer)?;
    Ok(matches!(answer.trim().to_ascii_lowercase().as_str(), "y" | "yes"))
}

#[derive(Deserialize)]
struct SwitchResult {
    switch: KillSwitch,
    audit_request_id: String,
}

fn killswitch(ctx: &mut Context, action: SwitchAction, scope: Option<&str>) -> Result<(), CliError> {
    if action == SwitchAction::List {
        let s = Signed::open(ctx)?;
        let token = s.portal()?;
        let list: Vec<KillSwitch> = s.client.get("/killswitch", Some(&token))?;
        let value = serde_json::to_value(&list).expect("serializable");
        let rows: Vec<Vec<String>> = list
            .iter()
            .map(|k| vec![k.scope.to_string(), datetime(k.engaged_at.0), k.engaged_by.clone()])
            .collect();
        return emit(ctx, &value, |out| out.write_all(table(&["SCOPE", "ENGAGED", "BY"], &rows).as_bytes()));
    }
    let raw = scope.ok_or_else(|| CliError::Usage("--scope is required".into()))?;
    let scope: KillScope = raw
        .parse()
        .map_err(|_| CliError::Usage(format!("bad scope {raw}; use global, user:<id> or service:<id>")))?;
    let verb = if action == SwitchAction::Engage { "engage" } else { "release" };
    let s = Signed::open(ctx)?;
    if scope == KillScope::Global && !confirm(ctx, &format!("{verb} the GLOBAL kill switch for every user?"))? {
        return emit(ctx, &json!({"action": verb, "scope": "global", "confirmed": false}), |out| {
            writeln!(out, "Aborted; nothing changed")
        });
    }
    let token = s.token(KILLSWITCH_AUDIENCE, Some(CALL_TOKEN_TTL))?;
    let mut body = serde_json::to_value(&scope).expect("serializable");
    body["action"] = json!(verb);
    let r: SwitchResult = s.client.post("/killswitch", Some(&token), body)?;
    let value = json!({"switch": r.switch, "audit_request_id": r.audit_request_id});
    emit(ctx, &value, |out| {
        let when = match r.switch.released_at {
            Some(t) => format!("released {}", datetime(t.0)),
            None => format!("engaged {}", datetime(r.switch.engaged_at.0)),
        };
        writeln!(out, "{} {when} (audit {})", r.switch.scope, r.audit_request_id)
    })
}
