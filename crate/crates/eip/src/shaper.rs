//! Per-source-prefix token buckets bounding challenge transmission.
//!
//! Challenges are the one packet a receiver sends in response to unverified
//! traffic, so their rate is capped per source aggregate: /24 for IPv4, /56
//! for IPv6. Tokens refill continuously at the configured rate up to a burst
//! of `ceil(rate)`; every admitted challenge costs one token and solved
//! puzzles never refund tokens, so spraying requests buys an attacker
//! nothing beyond the shaped rate.

use std::collections::HashMap;
use std::fmt;
use std::net::IpAddr;

use crate::identity::Locator;
use crate::{Error, Result};

/// Source aggregate a challenge is charged against.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub enum BucketKey {
    /// First three octets: a /24.
    V4([u8; 3]),
    /// First seven octets: a /56.
    V6([u8; 7]),
}

impl BucketKey {
    pub fn from_locator(loc: &Locator) -> Self {
        match loc.0 {
            IpAddr::V4(a) => {
                let o = a.octets();
                BucketKey::V4([o[0], o[1], o[2]])
            }
            IpAddr::V6(a) => {
                let o = a.octets();
                BucketKey::V6([o[0], o[1], o[2], o[3], o[4], o[5], o[6]])
            }
        }
    }
}

impl fmt::Display for BucketKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BucketKey::V4([a, b, c]) => write!(f, "{a}.{b}.{c}.0/24"),
            BucketKey::V6(o) => {
                for (i, pair) in o.chunks(2).enumerate() {
                    if i > 0 {
                        write!(f, ":")?;
                    }
                    match pair {
                        [hi, lo] => write!(f, "{:x}", (u16::from(*hi) << 8) | u16::from(*lo))?,
                        [hi] => write!(f, "{:02x}xx", hi)?,
                        _ => unreachable!(),
                    }
                }
                write!(f, "::/56")
            }
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ShaperConfig {
    /// Sustained challenge rate per bucket, per second.
    pub rate_per_sec: f64,
    /// Bucket capacity in tokens.
    pub burst: f64,
    /// Buckets tracked before fully-refilled ones get recycled.
    pub max_buckets: usize,
}

impl ShaperConfig {
    pub fn with_rate(rate_per_sec: f64) -> Self {
        ShaperConfig { rate_per_sec, burst: rate_per_sec.ceil(), max_buckets: 65536 }
    }
}

impl Default for ShaperConfig {
    fn default() -> Self {
        ShaperConfig::with_rate(10.0)
    }
}

#[derive(Clone, Debug)]
struct Bucket {
    tokens: f64,
    last_refill: f64,
    outstanding: u64,
    admitted: u64,
    dropped: u64,
}

/// The shaper: one token bucket per active source aggregate plus global
/// conservation counters (`offered == admitted + dropped` always holds).
#[derive(Clone, Debug)]
pub struct Shaper {
    config: ShaperConfig,
    buckets: HashMap<BucketKey, Bucket>,
    offered: u64,
    admitted: u64,
    dropped: u64,
}

impl Shaper {
    pub fn new(config: ShaperConfig) -> Result<Self> {
        if !(config.rate_per_sec > 0.0) {
            return Err(Error::Config("shaper rate must be positive".into()));
        }
        if !(config.burst >= 1.0) {
            return Err(Error::Config("shaper burst must be at least 1".into()));
        }
        if config.max_buckets == 0 {
            return Err(Error::Config("shaper needs at least one bucket".into()));
        }
        Ok(Shaper { config, buckets: HashMap::new(), offered: 0, admitted: 0, dropped: 0 })
    }

    /// Charge one challenge against `key` at time `now` (seconds). Returns
    /// whether the challenge may be sent. Time running backwards is treated
    /// as no time elapsed; it never mints tokens.
    pub fn admit(&mut self, key: BucketKey, now: f64) -> bool {
        self.offered += 1;
        if !self.buckets.contains_key(&key) && !self.make_room(now) {
            self.dropped += 1;
            return false;
        }
        let burst = self.config.burst;
        let rate = self.config.rate_per_sec;
        let bucket = self.buckets.entry(key).or_insert(Bucket {
            tokens: burst,
            last_refill: now,
            outstanding: 0,
            admitted: 0,
            dropped: 0,
        });
        let elapsed = (now - bucket.last_refill).max(0.0);
        bucket.tokens = (bucket.tokens + elapsed * rate).min(burst);
        bucket.last_refill = bucket.last_refill.max(now);
        if bucket.tokens >= 1.0 {
            bucket.tokens -= 1.0;
            bucket.outstanding += 1;
            bucket.admitted += 1;
            self.admitted += 1;
            true
        } else {
            bucket.dropped += 1;
            self.dropped += 1;
            false
        }
    }

    /// A solution arrived for a challenge previously charged to `key`. Only
    /// the outstanding gauge moves; tokens are never refunded.
    pub fn on_solution(&mut self, key: BucketKey) {
        if let Some(bucket) = self.buckets.get_mut(&key) {
            bucket.outstanding = bucket.outstanding.saturating_sub(1);
        }
    }

    /// Ensure capacity for one more bucket, recycling a fully-refilled one
    /// if needed. A fully-refilled bucket admits exactly like a fresh one,
    /// so dropping it only forgets its counters, never its shaping state.
    fn make_room(&mut self, now: f64) -> bool {
        if self.buckets.len() < self.config.max_buckets {
            return true;
        }
        let burst = self.config.burst;
        let rate = self.config.rate_per_sec;
        let victim = self
            .buckets
            .iter()
            .find(|(_, b)| (b.tokens + (now - b.last_refill).max(0.0) * rate) >= burst)
            .map(|(k, _)| *k);
        match victim {
            Some(key) => {
                self.buckets.remove(&key);
                true
            }
            None => false,
        }
    }

    pub fn outstanding(&self, key: BucketKey) -> u64 {
        self.buckets.get(&key).map_or(0, |b| b.outstanding)
    }

    pub fn offered(&self) -> u64 {
        self.offered
    }

    pub fn admitted(&self) -> u64 {
        self.admitted
    }

    pub fn dropped(&self) -> u64 {
        self.dropped
    }

    pub fn active_buckets(&self) -> usize {
        self.buckets.len()
    }

    /// Counter snapshot as CSV, one row per active bucket, sorted for
    /// reproducible output. Token counts are as of each bucket's last refill.
    pub fn metrics_csv(&self) -> String {
        let mut rows: Vec<(BucketKey, &Bucket)> =
            self.buckets.iter().map(|(k, b)| (*k, b)).collect();
        rows.sort_by_key(|(k, _)| *k);
        let mut out = String::from("bucket,admitted,dropped,outstanding,tokens\n");
        for (key, b) in rows {
            out.push_str(&format!(
                "{key},{},{},{},{:.3}\n",
                b.admitted, b.dropped, b.outstanding, b.tokens
            ));
        }
        out
    }
}
