use std::collections::HashMap;

use parking_lot::Mutex;

use crate::clock::Timestamp;

/// Fixed one-second windows per source address.
#[derive(Debug)]
pub struct RateLimiter {
    per_second: u32,
    windows: Mutex<HashMap<String, (Timestamp, u32)>>,
}

impl RateLimiter {
    pub fn new(per_second: u32) -> Self {
        RateLimiter {
            per_second,
            windows: Mutex::new(HashMap::new()),
        }
    }

    pub fn per_second(&self) -> u32 {
        self.per_second
    }

    /// Counts the request and says whether it may proceed.
    pub fn admit(&self, source: &str, now: Timestamp) -> bool {
        let mut windows = self.windows.lock();
        if windows.len() > 10_000 {
            windows.retain(|_, (at, _)| *at == now);
        }
        let entry = windows.entry(source.to_owned()).or_insert((now, 0));
        if entry.0 != now {
            *entry = (now, 0);
        }
        if entry.1 >= self.per_second {
            return false;
        }
        entry.1 += 1;
        true
    }
}
