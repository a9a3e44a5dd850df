//! Issue receiver puzzles at a few difficulty settings, brute-force them
//! the way a sender must, and verify the solutions statelessly.
//!
//!     cargo run --example puzzle_solving

use eip::crypto::SuiteId;
use eip::identity::Identifier;
use eip::puzzle::{self, Issuer, Solution, VerifyMode};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

fn main() -> eip::Result<()> {
    let mut rng = StdRng::seed_from_u64(42);
    let now = 1_755_000_000u64;

    // rotation 60s, accept the current and previous epoch
    let mut issuer = Issuer::new(SuiteId::HmacSha3_256, rng.gen(), 60, 2, VerifyMode::Stateless)?;

    println!("{:>5} {:>8} {:>10} {:>10}", "k_bm", "trials", "expected", "macs");
    for k_bm in [4u8, 8, 12, 16] {
        let src = Identifier::from_u128(rng.gen());
        let dst = Identifier::from_u128(rng.gen());

        // level 6 secret: 128 bits, k_bm of them blanked for the sender
        let challenge = issuer.issue(src, dst, 6, k_bm, now)?;
        let outcome = puzzle::solve(&challenge, src, dst)?;
        let check = issuer.verify(outcome.solution, challenge.l, src, dst, &challenge.h, now)?;
        assert!(check.accepted);
        println!(
            "{k_bm:>5} {:>8} {:>10.0} {:>10}",
            outcome.trials,
            puzzle::expected_trials(k_bm),
            check.mac_computations
        );
    }

    // solving is exponential in k_bm, verification is not: the receiver
    // recomputes at most one PRF output per accepted epoch
    let src = Identifier::from_u128(rng.gen());
    let dst = Identifier::from_u128(rng.gen());
    let challenge = issuer.issue(src, dst, 6, 16, now)?;

    let bogus = issuer.verify(Solution { c: 0 }, challenge.l, src, dst, &challenge.h, now)?;
    println!("\nwrong solution accepted: {}", bogus.accepted);

    // a solution from the previous epoch still lands inside the window
    let outcome = puzzle::solve(&challenge, src, dst)?;
    let late = issuer.verify(outcome.solution, challenge.l, src, dst, &challenge.h, now + 60)?;
    println!("one rotation later, still accepted: {}", late.accepted);

    // two rotations later the window has moved on
    let too_late =
        issuer.verify(outcome.solution, challenge.l, src, dst, &challenge.h, now + 120)?;
    println!("two rotations later, accepted: {}", too_late.accepted);

    Ok(())
}
