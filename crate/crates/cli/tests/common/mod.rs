#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread;

use reqwest::blocking::Client as Http;
use serde_json::{json, Value};
use tempfile::TempDir;

use gatekeep_cli::session::CachedSession;
use gatekeep_core::audit::AuditEvent;
use gatekeep_core::crypto::KeyPair;
use gatekeep_core::registry::Role;
use gatekeep_core::sshca::public_key_line;
use gatekeep_core::{Platform, PlatformConfig, SystemClock};
use gatekeep_server::{router, AppState};

pub const DAY: i64 = 86_400;

/// A gatekeepd on a random local port plus a scratch home for the CLI.
pub struct Env {
    pub url: String,
    pub platform: Arc<Platform>,
    pub dir: TempDir,
    http: Http,
    _rt: tokio::runtime::Runtime,
}

pub struct Run {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

impl From<Output> for Run {
    fn from(o: Output) -> Self {
        Run {
            code: o.status.code().expect("exited"),
            stdout: String::from_utf8_lossy(&o.stdout).into_owned(),
            stderr: String::from_utf8_lossy(&o.stderr).into_owned(),
        }
    }
}

impl Env {
    pub fn new() -> Self {
        let config = PlatformConfig {
            bootstrap: vec![("admin@hpc".into(), Role::Admin), ("alloc@hpc".into(), Role::Allocator)],
            key_label: Some("cli-tests".into()),
            ..PlatformConfig::default()
        };
        let platform = Arc::new(Platform::new(config, Arc::new(SystemClock)).unwrap());
        let app = router(AppState::new(platform.clone()).simulate_idps(true));
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        listener.set_nonblocking(true).unwrap();
        let addr = listener.local_addr().unwrap();
        let rt = tokio::runtime::Builder::new_multi_thread().worker_threads(2).enable_all().build().unwrap();
        rt.spawn(async move {
            let listener = tokio::net::TcpListener::from_std(listener).unwrap();
            axum::serve(listener, app.into_make_service_with_connect_info::<SocketAddr>())
                .await
                .unwrap();
        });
        let env = Env {
            url: format!("http://{addr}/"),
            platform,
            dir: tempfile::tempdir().unwrap(),
            http: Http::new(),
            _rt: rt,
        };
        env.write_config(&env.url);
        env
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    pub fn config_path(&self) -> PathBuf {
        self.path("config")
    }

    pub fn cache_path(&self) -> PathBuf {
        self.path("cache/session.json")
    }

    pub fn ssh_config_path(&self) -> PathBuf {
        self.path("ssh/config")
    }

    pub fn write_config(&self, broker: &str) {
        let text = format!(
            "# test config\nbroker = {broker}\ntoken_cache = {}\nssh_config = {}\ntimeout_secs = 5\nretries = 3\n",
            self.cache_path().display(),
            self.ssh_config_path().display()
        );
        std::fs::write(self.config_path(), text).unwrap();
    }

    fn command(&self, args: &[&str]) -> Command {
        let mut c = Command::new(env!("CARGO_BIN_EXE_gatekeep"));
        c.env_remove("GATEKEEP_BROKER")
            .env("GATEKEEP_CONFIG", self.config_path())
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped());
        c
    }

    pub fn cli(&self, args: &[&str]) -> Run {
        self.cli_with_input(args, "")
    }

    pub fn cli_with_input(&self, args: &[&str], input: &str) -> Run {
        let mut child = self.command(args).spawn().unwrap();
        child.stdin.take().unwrap().write_all(input.as_bytes()).unwrap();
        child.wait_with_output().unwrap().into()
    }

    pub fn spawn(&self, args: &[&str]) -> Child {
        self.command(args).spawn().unwrap()
    }

    // Direct calls, standing in for the portal and the browser.

    pub fn call(&self, method: reqwest::Method, path: &str, bearer: Option<&str>, body: Option<Value>) -> (u16, Value) {
        let mut req = self.http.request(method, format!("{}{}", self.url, path.trim_start_matches('/')));
        if let Some(b) = bearer {
            req = req.bearer_auth(b);
        }
        if let Some(body) = body {
            req = req.json(&body);
        }
        let resp = req.send().unwrap();
        let status = resp.status().as_u16();
        let text = resp.text().unwrap();
        (status, serde_json::from_str(&text).unwrap_or(Value::String(text)))
    }

    pub fn post(&self, path: &str, bearer: Option<&str>, body: Value) -> Value {
        let (status, v) = self.call(reqwest::Method::POST, path, bearer, Some(body));
        assert!((200..300).contains(&status), "{path}: {status} {v}");
        v
    }

    pub fn login(&self, idp: &str, subject: &str, email: &str) -> String {
        let a = self.post(&format!("/simulate/{idp}/assert"), None, json!({"subject": subject, "email": email}));
        self.post("/authenticate", None, a)["session_id"].as_str().unwrap().to_owned()
    }

    pub fn register(&self, idp: &str, subject: &str, email: &str, invitation: &str) -> String {
        let a = self.post(&format!("/simulate/{idp}/assert"), None, json!({"subject": subject, "email": email}));
        let r = self.post("/register", None, json!({"assertion": a, "invitation_token": invitation}));
        r["persistent_id"].as_str().unwrap().to_owned()
    }

    fn bootstrap(&self, idx: usize, subject: &str, email: &str) -> String {
        if self.platform.broker.resolve_persistent_id("admin-cloud", subject).is_err() {
            let inv = self.platform.bootstrap_invitations[idx].token.clone();
            self.register("admin-cloud", subject, email, &inv);
        }
        self.login("admin-cloud", subject, email)
    }

    pub fn admin(&self) -> String {
        self.bootstrap(0, "admin", "admin@hpc")
    }

    pub fn alloc(&self) -> String {
        self.bootstrap(1, "alloc", "alloc@hpc")
    }

    pub fn project(&self, code: &str) -> String {
        let alloc = self.alloc();
        let now = gatekeep_cli::session::now();
        let p = self.post(
            "/projects",
            Some(&alloc),
            json!({"code": code, "title": format!("Project {code}"), "expires_at": now + 30 * DAY}),
        );
        p["project_id"].as_str().unwrap().to_owned()
    }

    /// Returns (persistent id, session id).
    pub fn member(&self, inviter: &str, project: &str, subject: &str, role: &str) -> (String, String) {
        let email = format!("{subject}@uni");
        let inv = self.post(
            &format!("/projects/{project}/invitations"),
            Some(inviter),
            json!({"email": email, "role": role}),
        );
        let pid = self.register("myaccessid", subject, &email, inv["token"].as_str().unwrap());
        (pid, self.login("myaccessid", subject, &email))
    }

    /// Returns (project id, pi pid, pi session).
    pub fn pi_project(&self, code: &str) -> (String, String, String) {
        let project = self.project(code);
        let alloc = self.alloc();
        let (pid, sid) = self.member(&alloc, &project, &format!("{code}-pi"), "pi");
        (project, pid, sid)
    }

    /// Runs the device flow the way the portal would and caches the
    /// resulting session for the CLI. Returns the CLI's session id.
    pub fn sign_in_cli(&self, browser_session: &str) -> String {
        let grant = self.post("/device/start", None, json!({}));
        self.post("/device/approve", Some(browser_session), json!({"user_code": grant["user_code"]}));
        let done = self.post("/device/poll", None, json!({"device_code": grant["device_code"]}));
        let s = &done["session"];
        CachedSession {
            broker: self.url.clone(),
            session_id: s["session_id"].as_str().unwrap().to_owned(),
            persistent_id: s["persistent_id"].as_str().unwrap().to_owned(),
            expires_at: s["expires_at"].as_i64().unwrap(),
        }
        .save(&self.cache_path())
        .unwrap();
        s["session_id"].as_str().unwrap().to_owned()
    }

    pub fn public_key(&self, name: &str) -> PathBuf {
        let path = self.path(&format!("{name}.pub"));
        let line = public_key_line(&KeyPair::from_label(&format!("cli-key:{name}")).public_bytes(), name);
        std::fs::write(&path, format!("{line}\n")).unwrap();
        path
    }

    pub fn events(&self) -> Vec<AuditEvent> {
        self.platform.siem.store().snapshot()
    }
}

/// Reads the first stdout line of a running CLI.
pub fn first_line(child: &mut Child) -> (String, BufReader<std::process::ChildStdout>) {
    let mut reader = BufReader::new(child.stdout.take().unwrap());
    let mut line = String::new();
    reader.read_line(&mut line).unwrap();
    (line, reader)
}

pub fn finish(mut child: Child, mut rest: BufReader<std::process::ChildStdout>) -> Run {
    let mut stdout = String::new();
    rest.read_to_string(&mut stdout).unwrap();
    let mut stderr = String::new();
    child.stderr.take().unwrap().read_to_string(&mut stderr).unwrap();
    Run {
        code: child.wait().unwrap().code().unwrap(),
        stdout,
        stderr,
    }
}

/// A port nobody listens on.
pub fn dead_url() -> String {
    let l = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = l.local_addr().unwrap();
    drop(l);
    format!("http://{addr}/")
}

/// A TCP relay to `upstream` that swallows the response to the first
/// request containing `marker`, then closes that connection. The request
/// itself reaches the server.
pub struct LossyProxy {
    pub url: String,
}

impl LossyProxy {
    pub fn start(upstream: &str, marker: &'static str) -> Self {
        let upstream: SocketAddr = upstream
            .trim_start_matches("http://")
            .trim_end_matches('/')
            .parse()
            .unwrap();
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/", listener.local_addr().unwrap());
        let tripped = Arc::new(AtomicBool::new(false));
        thread::spawn(move || {
            for client in listener.incoming().flatten() {
                let server = TcpStream::connect(upstream).unwrap();
                relay(client, server, marker, tripped.clone());
            }
        });
        LossyProxy { url }
    }
}

fn relay(client: TcpStream, server: TcpStream, marker: &'static str, tripped: Arc<AtomicBool>) {
    let drop_reply = Arc::new(AtomicBool::new(false));
    let (mut c_read, mut s_write) = (client.try_clone().unwrap(), server.try_clone().unwrap());
    let flag = drop_reply.clone();
    thread::spawn(move || {
        let mut buf = [0u8; 16 * 1024];
        loop {
            let n = match c_read.read(&mut buf) {
                Ok(0) | Err(_) => break,
                Ok(n) => n,
            };
            if String::from_utf8_lossy(&buf[..n]).contains(marker) && !tripped.swap(true, Ordering::SeqCst) {
                flag.store(true, Ordering::SeqCst);
            }
            if s_write.write_all(&buf[..n]).is_err() {
                break;
            }
        }
        let _ = s_write.shutdown(std::net::Shutdown::Write);
    });
    let (mut s_read, mut c_write) = (server, client);
    thread::spawn(move || {
        let mut buf = [0u8; 16 * 1024];
        loop {
            let n = match s_read.read(&mut buf) {
                Ok(0) | Err(_) => break,
                Ok(n) => n,
            };
            if drop_reply.load(Ordering::SeqCst) {
                break;
            }
            if c_write.write_all(&buf[..n]).is_err() {
                break;
            }
        }
        let _ = c_write.shutdown(std::net::Shutdown::Both);
    });
}

pub fn assert_mode_600(path: &Path) {
    use std::os::unix::fs::PermissionsExt;
    let mode = std::fs::metadata(path).unwrap().permissions().mode() & 0o777;
    assert_eq!(mode, 0o600, "{}", path.display());
}
