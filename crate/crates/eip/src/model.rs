//! Closed-form predictions of the bandwidth a reflection attack lands on
//! its victim under successive stages of the defense.
//!
//! An attacker spoofing a victim's source address spends `attack_bps` of
//! upstream capacity across `reflectors` reflectors:
//!
//! - [`Scenario::Baseline`]: plain reflection. Every bare request (nominal
//!   `d_req` bits) earns an amplified reply, so the victim sees
//!   `attack_bps * amplification`.
//! - [`Scenario::CertOnly`]: requests must carry certificates
//!   (`d_req_cert` bits), diluting the attacker's packet rate; replies still
//!   amplify the bare request.
//! - [`Scenario::Puzzles`]: unverified senders get a fixed-size challenge
//!   (`d_puz` bits) instead of service output, capping reflection at
//!   `d_puz / d_req_cert` of the attack rate with no amplification left.
//! - [`Scenario::Shaped`]: challenges are rate-limited per source prefix,
//!   making the victim's intake `reflectors * shaper_rate * d_puz`,
//!   independent of attacker bandwidth.

use crate::wire::{Preset, SizeConstants};
use std::fmt;
use std::str::FromStr;

use crate::{Error, Result};

/// Defense stage being modeled.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Scenario {
    Baseline,
    CertOnly,
    Puzzles,
    Shaped,
}

impl Scenario {
    pub const ALL: [Scenario; 4] =
        [Scenario::Baseline, Scenario::CertOnly, Scenario::Puzzles, Scenario::Shaped];
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scenario::Baseline => "baseline",
            Scenario::CertOnly => "cert-only",
            Scenario::Puzzles => "puzzles",
            Scenario::Shaped => "shaped",
        })
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(Scenario::Baseline),
            "cert-only" => Ok(Scenario::CertOnly),
            "puzzles" => Ok(Scenario::Puzzles),
            "shaped" => Ok(Scenario::Shaped),
            other => Err(Error::Config(format!(
                "unknown scenario {other:?}, expected baseline, cert-only, puzzles or shaped"
            ))),
        }
    }
}

/// Attack and defense parameters shared by all scenarios.
#[derive(Clone, Copy, Debug)]
pub struct ModelParams {
    /// Attacker upstream bandwidth, bits per second.
    pub attack_bps: f64,
    /// Service amplification factor (reply bits per bare-request bit).
    pub amplification: f64,
    /// Reflectors the attacker spreads its traffic over.
    pub reflectors: u32,
    /// Challenge rate each reflector allows one source prefix, per second.
    pub shaper_rate: f64,
    pub sizes: SizeConstants,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            attack_bps: 1e9,
            amplification: 1.0,
            reflectors: 1000,
            shaper_rate: 10.0,
            sizes: SizeConstants::default(),
        }
    }
}

/// Bits per second arriving at the victim.
pub fn victim_bandwidth_bps(scenario: Scenario, p: &ModelParams) -> f64 {
    let s = &p.sizes;
    match scenario {
        Scenario::Baseline => p.attack_bps * p.amplification,
        Scenario::CertOnly => {
            p.attack_bps / s.d_req_cert_bits as f64 * s.d_req_bits as f64 * p.amplification
        }
        Scenario::Puzzles => p.attack_bps / s.d_req_cert_bits as f64 * s.d_puz_bits as f64,
        Scenario::Shaped => f64::from(p.reflectors) * p.shaper_rate * s.d_puz_bits as f64,
    }
}

/// Packets per second arriving at the victim (one reflected packet per
/// admitted request).
pub fn victim_packet_rate_pps(scenario: Scenario, p: &ModelParams) -> f64 {
    let s = &p.sizes;
    match scenario {
        Scenario::Baseline => p.attack_bps / s.d_req_bits as f64,
        Scenario::CertOnly | Scenario::Puzzles => p.attack_bps / s.d_req_cert_bits as f64,
        Scenario::Shaped => f64::from(p.reflectors) * p.shaper_rate,
    }
}

/// One point of the shaped-bandwidth sweep.
#[derive(Clone, Copy, Debug)]
pub struct ShapedPoint {
    pub attack_bps: f64,
    pub shaper_rate: f64,
    pub victim_bps: f64,
}

/// Shaped victim bandwidth across attacker bandwidths and shaper rates.
/// The series is flat in `attack_bps`: once shaped, more attacker power
/// buys nothing.
pub fn shaped_bandwidth_series(
    base: &ModelParams,
    attack_bps_points: &[f64],
    shaper_rates: &[f64],
) -> Vec<ShapedPoint> {
    let mut out = Vec::with_capacity(attack_bps_points.len() * shaper_rates.len());
    for &shaper_rate in shaper_rates {
        for &attack_bps in attack_bps_points {
            let p = ModelParams { attack_bps, shaper_rate, ..*base };
            out.push(ShapedPoint {
                attack_bps,
                shaper_rate,
                victim_bps: victim_bandwidth_bps(Scenario::Shaped, &p),
            });
        }
    }
    out
}

/// Reflectors an attacker must recruit for the shaped challenge streams to
/// add up to `target_bps` at the victim.
pub fn reflectors_required(target_bps: f64, shaper_rate: f64, sizes: &SizeConstants) -> f64 {
    target_bps / (shaper_rate * sizes.d_puz_bits as f64)
}

/// Probability that any two of `n` independently drawn `bits`-wide
/// identifier tags collide: `1 - exp(-n(n-1) / 2^bits)`.
pub fn collision_probability(n: f64, bits: u32) -> f64 {
    if n < 2.0 {
        return 0.0;
    }
    let x = n * (n - 1.0) / 2f64.powi(bits as i32);
    -f64::exp_m1(-x)
}

fn preset_note(sizes: &SizeConstants) -> String {
    let text = SizeConstants::preset(Preset::PaperText);
    let table = SizeConstants::preset(Preset::Table2Replication);
    format!(
        "# challenge size presets disagree: paper-text counts {} bits per challenge, \
         table2-replication {}; puzzles/shaped predictions scale linearly in it \
         (this table uses {})\n",
        text.d_puz_bits, table.d_puz_bits, sizes.d_puz_bits
    )
}

fn params_header(p: &ModelParams) -> String {
    format!(
        "# attack_bps={} amplification={} reflectors={} shaper_rate={} \
         d_req_bits={} d_req_cert_bits={} d_puz_bits={}\n",
        p.attack_bps,
        p.amplification,
        p.reflectors,
        p.shaper_rate,
        p.sizes.d_req_bits,
        p.sizes.d_req_cert_bits,
        p.sizes.d_puz_bits
    )
}

/// The four-scenario comparison as CSV. `#` lines carry the parameters; the
/// output is deterministic for fixed inputs.
pub fn scenario_table_csv(p: &ModelParams) -> String {
    let mut out = params_header(p);
    out.push_str(&preset_note(&p.sizes));
    out.push_str("scenario,victim_bps,victim_mbps,victim_pps\n");
    for scenario in Scenario::ALL {
        let bps = victim_bandwidth_bps(scenario, p);
        let pps = victim_packet_rate_pps(scenario, p);
        out.push_str(&format!("{scenario},{bps:.1},{:.3},{pps:.1}\n", bps / 1e6));
    }
    out
}

/// The shaped sweep as CSV, one row per (shaper rate, attacker bandwidth).
pub fn shaped_series_csv(
    base: &ModelParams,
    attack_bps_points: &[f64],
    shaper_rates: &[f64],
) -> String {
    let mut out = params_header(base);
    out.push_str("shaper_rate,attack_bps,victim_bps,victim_mbps\n");
    for point in shaped_bandwidth_series(base, attack_bps_points, shaper_rates) {
        out.push_str(&format!(
            "{},{:.0},{:.1},{:.3}\n",
            point.shaper_rate,
            point.attack_bps,
            point.victim_bps,
            point.victim_bps / 1e6
        ));
    }
    out
}

/// Reflector counts needed to reach each target bandwidth, per shaper rate.
pub fn reflectors_required_csv(
    sizes: &SizeConstants,
    target_bps_points: &[f64],
    shaper_rates: &[f64],
) -> String {
    let mut out = format!(
        "# d_puz_bits={} (reflectors = target_bps / (shaper_rate * d_puz_bits))\n",
        sizes.d_puz_bits
    );
    out.push_str("shaper_rate,target_bps,reflectors\n");
    for &rate in shaper_rates {
        for &target in target_bps_points {
            out.push_str(&format!(
                "{rate},{target:.0},{:.1}\n",
                reflectors_required(target, rate, sizes)
            ));
        }
    }
    out
}
