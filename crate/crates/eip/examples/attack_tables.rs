//! Closed-form reflection attack arithmetic: what a 1 Gbps botnet turns
//! into at the victim under each defense stage, how flat the shaped curve
//! is, and what an attacker would have to recruit to matter again.
//!
//!     cargo run --example attack_tables

use eip::model::{self, ModelParams};
use eip::wire::{Preset, SizeConstants};

fn main() {
    let base = ModelParams {
        attack_bps: 1e9,
        amplification: 1.0,
        reflectors: 1000,
        shaper_rate: 10.0,
        sizes: SizeConstants::preset(Preset::PaperText),
    };

    for preset in [Preset::PaperText, Preset::Table2Replication] {
        let p = ModelParams { sizes: SizeConstants::preset(preset), ..base };
        println!("== preset {preset} ==");
        println!("{}", model::scenario_table_csv(&p));
    }

    // the shaped scenario is supply-limited: attacker bandwidth drops out
    println!("== shaped victim bandwidth, Mbps, by (rate, attacker Gbps) ==");
    let attack_points = [1e8, 1e9, 1e10];
    print!("{:>6}", "rate");
    for a in attack_points {
        print!("{:>10.1}", a / 1e9);
    }
    println!();
    for rate in [1.0, 10.0, 50.0, 100.0] {
        print!("{rate:>6}");
        for point in model::shaped_bandwidth_series(&base, &attack_points, &[rate]) {
            print!("{:>10.2}", point.victim_bps / 1e6);
        }
        println!();
    }

    println!("\n== reflectors required to reach a target at the victim ==");
    for target_gbps in [1.0, 6.0, 12.0] {
        let n = model::reflectors_required(target_gbps * 1e9, 10.0, &base.sizes);
        println!("{target_gbps:>5} Gbps at rate 10: {n:>12.0}");
    }

    // identifier tags are 121 bits; collisions stay negligible at any
    // plausible population
    println!("\n== tag collision probability ==");
    for n in [1e6, 1e9, 1e12] {
        println!("{n:>8.0e} identifiers: {:.3e}", model::collision_probability(n, 121));
    }
}
