//! Run the packet-level simulation once per scenario at desk scale and
//! compare the steady-state victim load against the closed-form predictions.
//! Everything is deterministic for a fixed seed.
//!
//!     cargo run --release --example simulate_attack

use eip::model::{self, Scenario};
use eip::sim::{self, SimConfig};

fn main() -> eip::Result<()> {
    println!(
        "{:<10} {:>14} {:>14} {:>7} {:>10}",
        "scenario", "sim bps", "model bps", "err", "drops"
    );
    for scenario in Scenario::ALL {
        let cfg = SimConfig {
            scenario,
            seed: 7,
            duration_secs: 20,
            attack_bps: 4e6,
            amplification: 10.0,
            bots: 10,
            reflectors: 50,
            shaper_rate: 10.0,
            ..SimConfig::default()
        };
        let report = sim::run(&cfg)?;
        let predicted = model::victim_bandwidth_bps(scenario, &cfg.model_params());
        let err = (report.victim_attack_bps - predicted).abs() / predicted;
        let shaped_drops =
            report.conservation.consumed.get("reflector_shaped").copied().unwrap_or(0);
        println!(
            "{:<10} {:>14.0} {:>14.0} {:>6.2}% {:>10}",
            scenario.to_string(),
            report.victim_attack_bps,
            predicted,
            err * 100.0,
            shaped_drops
        );
        assert!(report.conservation.holds(), "every packet must be accounted for");
    }

    // one full report with honest clients riding through the attack
    let cfg = SimConfig {
        scenario: Scenario::Shaped,
        seed: 7,
        duration_secs: 20,
        attack_bps: 4e6,
        reflectors: 50,
        legit_clients: 5,
        legit_request_rate: 2.0,
        collect_labels: true,
        ..SimConfig::default()
    };
    let report = sim::run(&cfg)?;
    println!(
        "\nwith {} clients: {} established, {} delivered/s, fp={} fn={}",
        cfg.legit_clients,
        report.established_clients,
        report.legit_delivered_pps,
        report.false_positives,
        report.false_negatives
    );

    println!("\nmetrics csv tail:");
    let csv = sim::metrics_csv(&report);
    for line in csv.lines().rev().take(6).collect::<Vec<_>>().into_iter().rev() {
        println!("{line}");
    }
    Ok(())
}
