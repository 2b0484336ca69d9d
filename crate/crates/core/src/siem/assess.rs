//! Declarative configuration checks over per-host JSON documents.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::SiemError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CompareOp {
    #[serde(rename = "==")]
    Eq,
    #[serde(rename = "!=")]
    Ne,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Ge,
}

impl CompareOp {
    fn symbol(self) -> &'static str {
        match self {
            CompareOp::Eq => "==",
            CompareOp::Ne => "!=",
            CompareOp::Lt => "<",
            CompareOp::Le => "<=",
            CompareOp::Gt => ">",
            CompareOp::Ge => ">=",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfigCheck {
    pub check_id: String,
    /// Dotted path into the host document.
    pub path: String,
    pub op: CompareOp,
    pub expected: Value,
}

impl ConfigCheck {
    /// Parses `ssh.password_auth == false`. The right-hand side is JSON, or
    /// a bare word taken as a string.
    pub fn parse(check_id: &str, expr: &str) -> Result<Self, SiemError> {
        let bad = || SiemError::MalformedCheck(check_id.to_owned());
        // Longest operators first so `<=` is not read as `<`.
        for op in [CompareOp::Eq, CompareOp::Ne, CompareOp::Le, CompareOp::Ge, CompareOp::Lt, CompareOp::Gt] {
            if let Some((lhs, rhs)) = expr.split_once(op.symbol()) {
                let path = lhs.trim();
                let rhs = rhs.trim();
                if path.is_empty() || rhs.is_empty() || path.contains(char::is_whitespace) {
                    return Err(bad());
                }
                let expected = serde_json::from_str(rhs).unwrap_or_else(|_| Value::String(rhs.to_owned()));
                return Ok(ConfigCheck {
                    check_id: check_id.to_owned(),
                    path: path.to_owned(),
                    op,
                    expected,
                });
            }
        }
        Err(bad())
    }

    fn lookup<'a>(&self, doc: &'a Value) -> Option<&'a Value> {
        self.path.split('.').try_fold(doc, |v, key| v.get(key))
    }

    fn holds(&self, actual: &Value) -> bool {
        match self.op {
            CompareOp::Eq => actual == &self.expected,
            CompareOp::Ne => actual != &self.expected,
            op => match (actual.as_f64(), self.expected.as_f64()) {
                (Some(a), Some(b)) => match op {
                    CompareOp::Lt => a < b,
                    CompareOp::Le => a <= b,
                    CompareOp::Gt => a > b,
                    _ => a >= b,
                },
                _ => false,
            },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FindingStatus {
    Pass,
    Fail,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComplianceFinding {
    pub check_id: String,
    pub host_id: String,
    pub status: FindingStatus,
    pub evidence: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Assessment {
    pub findings: Vec<ComplianceFinding>,
    /// pass / total; 1.0 when there is nothing to check.
    pub score: f64,
}

/// Runs every check on every listed host. Each (host, check) pair yields
/// exactly one finding; a missing path fails.
pub fn run_config_assessment(
    hosts: &[String],
    documents: &BTreeMap<String, Value>,
    ruleset: &[ConfigCheck],
) -> Result<Assessment, SiemError> {
    let mut findings = Vec::with_capacity(hosts.len() * ruleset.len());
    for host in hosts {
        let doc = documents.get(host).ok_or_else(|| SiemError::UnknownHost(host.clone()))?;
        for check in ruleset {
            let (status, evidence) = match check.lookup(doc) {
                None => (FindingStatus::Fail, format!("{} is not set", check.path)),
                Some(actual) => {
                    let status = if check.holds(actual) {
                        FindingStatus::Pass
                    } else {
                        FindingStatus::Fail
                    };
                    (
                        status,
                        format!("{} = {actual}, required {} {}", check.path, check.op.symbol(), check.expected),
                    )
                }
            };
            findings.push(ComplianceFinding {
                check_id: check.check_id.clone(),
                host_id: host.clone(),
                status,
                evidence,
            });
        }
    }
    let passed = findings.iter().filter(|f| f.status == FindingStatus::Pass).count();
    let score = if findings.is_empty() {
        1.0
    } else {
        passed as f64 / findings.len() as f64
    };
    Ok(Assessment { findings, score })
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn docs() -> BTreeMap<String, Value> {
        let mut m = BTreeMap::new();
        m.insert("h1".into(), json!({"ssh": {"password_auth": true, "max_auth_tries": 3}, "os": "ubuntu"}));
        m.insert("h2".into(), json!({"ssh": {"password_auth": false, "max_auth_tries": 6}, "os": "ubuntu"}));
        m.insert("h3".into(), json!({"ssh": {"password_auth": false, "max_auth_tries": 2}, "os": "rocky"}));
        m
    }

    fn checks() -> Vec<ConfigCheck> {
        vec![
            ConfigCheck::parse("no-passwords", "ssh.password_auth == false").unwrap(),
            ConfigCheck::parse("few-tries", "ssh.max_auth_tries <= 4").unwrap(),
            ConfigCheck::parse("os", "os != windows").unwrap(),
            ConfigCheck::parse("fw", "firewall.enabled == true").unwrap(),
        ]
    }

    #[test]
    fn password_auth_fails() {
        let a = run_config_assessment(&["h1".into()], &docs(), &checks()[..1]).unwrap();
        assert_eq!(a.findings[0].status, FindingStatus::Fail);
        assert_eq!(a.score, 0.0);
    }

    #[test]
    fn all_pass_scores_one() {
        let a = run_config_assessment(&["h3".into()], &docs(), &checks()[..3]).unwrap();
        assert_eq!(a.score, 1.0);
    }

    #[test]
    fn three_hosts_four_checks() {
        let hosts: Vec<String> = ["h1", "h2", "h3"].map(String::from).to_vec();
        let a = run_config_assessment(&hosts, &docs(), &checks()).unwrap();
        assert_eq!(a.findings.len(), 12);
        // h1 passes few-tries and os, h2 no-passwords and os, h3 all but fw.
        assert_eq!(a.score, 7.0 / 12.0);
    }

    #[test]
    fn unknown_host() {
        assert_eq!(
            run_config_assessment(&["nope".into()], &docs(), &checks()),
            Err(SiemError::UnknownHost("nope".into()))
        );
    }

    #[test]
    fn parse_forms() {
        let c = ConfigCheck::parse("x", "a.b >= 10").unwrap();
        assert_eq!(c.op, CompareOp::Ge);
        assert_eq!(c.expected, json!(10));
        assert!(ConfigCheck::parse("x", "no operator").is_err());
        assert!(ConfigCheck::parse("x", " == 1").is_err());
    }
}
