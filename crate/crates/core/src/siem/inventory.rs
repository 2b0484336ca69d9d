//! Software inventory and advisory matching.

use std::collections::BTreeSet;

use semver::{Version, VersionReq};
use serde::{Deserialize, Serialize};

use super::SiemError;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct InventoryRecord {
    pub host_id: String,
    pub package: String,
    pub version: String,
}

/// One inventory run. (host, package) is unique.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InventorySnapshot {
    records: Vec<InventoryRecord>,
}

impl InventorySnapshot {
    pub fn new(mut records: Vec<InventoryRecord>) -> Result<Self, SiemError> {
        records.sort();
        let mut seen = BTreeSet::new();
        for r in &records {
            if !seen.insert((&r.host_id, &r.package)) {
                return Err(SiemError::DuplicateInventory {
                    host_id: r.host_id.clone(),
                    package: r.package.clone(),
                });
            }
        }
        Ok(InventorySnapshot { records })
    }

    pub fn records(&self) -> &[InventoryRecord] {
        &self.records
    }

    pub fn hosts(&self) -> BTreeSet<&str> {
        self.records.iter().map(|r| r.host_id.as_str()).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Advisory {
    pub advisory_id: String,
    pub package: String,
    /// Semantic-version requirement, e.g. `<1.3.0` or `>=2.0.0, <2.4.1`.
    pub affected: String,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Vulnerable {
    pub host_id: String,
    pub package: String,
    pub version: String,
    pub advisory_id: String,
}

/// Reads `1`, `1.2` and `v1.2.3` as well as full semantic versions.
pub fn parse_version(raw: &str) -> Option<Version> {
    let s = raw.trim().trim_start_matches('v');
    if let Ok(v) = Version::parse(s) {
        return Some(v);
    }
    let (core, rest) = match s.find(['-', '+']) {
        Some(i) => s.split_at(i),
        None => (s, ""),
    };
    let parts: Vec<&str> = core.split('.').collect();
    if parts.is_empty() || parts.len() > 3 || parts.iter().any(|p| p.is_empty() || !p.bytes().all(|b| b.is_ascii_digit())) {
        return None;
    }
    let mut padded = parts.clone();
    padded.resize(3, "0");
    Version::parse(&format!("{}{rest}", padded.join("."))).ok()
}

/// Every inventory entry that falls inside an advisory's affected range.
/// Entries whose version cannot be read are skipped; a malformed advisory
/// fails the whole match.
pub fn match_advisories(inventory: &InventorySnapshot, advisories: &[Advisory]) -> Result<Vec<Vulnerable>, SiemError> {
    let parsed: Vec<(&Advisory, VersionReq)> = advisories
        .iter()
        .map(|a| {
            if a.package.is_empty() {
                return Err(SiemError::MalformedAdvisory(a.advisory_id.clone()));
            }
            VersionReq::parse(&a.affected)
                .map(|req| (a, req))
                .map_err(|_| SiemError::MalformedAdvisory(a.advisory_id.clone()))
        })
        .collect::<Result<_, _>>()?;
    let mut out = BTreeSet::new();
    for r in inventory.records() {
        let Some(version) = parse_version(&r.version) else {
            continue;
        };
        for (a, req) in &parsed {
            if a.package == r.package && req.matches(&version) {
                out.insert(Vulnerable {
                    host_id: r.host_id.clone(),
                    package: r.package.clone(),
                    version: r.version.clone(),
                    advisory_id: a.advisory_id.clone(),
                });
            }
        }
    }
    Ok(out.into_iter().collect())
}
