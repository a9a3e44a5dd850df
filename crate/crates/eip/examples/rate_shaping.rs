//! Per-source challenge shaping. One /24 floods first contacts at 100 per
//! second, a neighbor asks politely at 2 per second; the flooded aggregate
//! converges to the configured rate while the neighbor never loses a packet.
//!
//!     cargo run --example rate_shaping

use eip::identity::Locator;
use eip::shaper::{BucketKey, Shaper, ShaperConfig};

fn main() -> eip::Result<()> {
    let mut shaper = Shaper::new(ShaperConfig::with_rate(10.0))?;

    let flooder = BucketKey::from_locator(&Locator::v4(203, 0, 113, 77));
    let neighbor = BucketKey::from_locator(&Locator::v4(203, 0, 114, 77));

    let mut flood_ok = 0u64;
    let mut neighbor_ok = 0u64;
    let seconds: u64 = 30;
    for tick in 0..seconds * 100 {
        let now = tick as f64 / 100.0;
        // flooder: one first contact every 10 ms
        if shaper.admit(flooder, now) {
            flood_ok += 1;
        }
        // neighbor: one every 500 ms
        if tick % 50 == 0 && shaper.admit(neighbor, now) {
            neighbor_ok += 1;
        }
    }

    println!("flooder admitted   {flood_ok:>5} of {} ({:.1}/s)", seconds * 100, flood_ok as f64 / seconds as f64);
    println!("neighbor admitted  {neighbor_ok:>5} of {}", seconds * 2);
    assert_eq!(neighbor_ok, seconds * 2, "polite traffic must be untouched");

    // tokens are spent when the challenge goes out, never refunded on
    // solution, so solved puzzles do not raise the flood ceiling
    shaper.on_solution(flooder);
    println!("outstanding challenges for flooder: {}", shaper.outstanding(flooder));

    println!("\nglobal accounting: offered {} = admitted {} + dropped {}",
        shaper.offered(), shaper.admitted(), shaper.dropped());
    assert_eq!(shaper.offered(), shaper.admitted() + shaper.dropped());

    println!("\n{}", shaper.metrics_csv());
    Ok(())
}
