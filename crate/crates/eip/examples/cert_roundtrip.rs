//! Generate a keypair, self-sign a certificate, derive the identifier it
//! binds, and run the receiver's verification checks. Then tamper with the
//! certificate and watch each check fire.
//!
//!     cargo run --example cert_roundtrip

use eip::crypto::{self, KeyPair, SuiteId};
use eip::identity::{
    derive_identifier, generate_certificate, verify, CertParams, Identifier, Locator, Prefix,
    Verdict, VerifyPolicy,
};
use rand::rngs::StdRng;
use rand::SeedableRng;

fn main() -> eip::Result<()> {
    let mut rng = StdRng::seed_from_u64(7);
    let now = 1_755_000_000u64;

    let keypair = KeyPair::generate(&mut rng, crypto::DEFAULT_RSA_BITS)?;
    println!("generated RSA-{} keypair", crypto::DEFAULT_RSA_BITS);

    // the receiver's identifier would normally come from its own minting;
    // here we just pick one with the standard prefix
    let server_id = Identifier::from_parts(Prefix::DEFAULT, 0x5eed);

    let params = CertParams {
        suite: SuiteId::HmacSha3_256,
        loc_src: Locator::v4(192, 0, 2, 10),
        loc_dst: Locator::v4(198, 51, 100, 1),
        id_dst: server_id,
        duration_secs: 600,
        time: now,
    };
    let (cert, id) = generate_certificate(&params, &keypair, Prefix::DEFAULT)?;
    println!("certificate is {} bytes on the wire", cert.encode().len());
    println!("bound identifier {id}");
    assert_eq!(id, derive_identifier(&cert, Prefix::DEFAULT));

    let policy = VerifyPolicy::default();
    let own = [server_id];

    let verdict = verify(&cert, id, &own, now + 30, &policy, Prefix::DEFAULT);
    println!("honest verification: {verdict:?}");
    assert!(verdict.is_accept());

    // claim an identifier the certificate does not derive to
    let forged = Identifier::from_parts(Prefix::DEFAULT, 0xbad);
    let verdict = verify(&cert, forged, &own, now + 30, &policy, Prefix::DEFAULT);
    println!("wrong claimed identifier: {verdict:?}");

    // flip one signature bit but re-derive the identifier honestly, so only
    // the signature check can catch it
    let mut tampered = cert.clone();
    tampered.signature[0] ^= 1;
    let tampered_id = derive_identifier(&tampered, Prefix::DEFAULT);
    let verdict = verify(&tampered, tampered_id, &own, now + 30, &policy, Prefix::DEFAULT);
    println!("flipped signature bit: {verdict:?}");

    // present the certificate long after time + duration
    let verdict = verify(&cert, id, &own, now + 100_000, &policy, Prefix::DEFAULT);
    println!("presented after expiry: {verdict:?}");
    assert!(!verdict.is_accept());

    match verify(&cert, id, &[], now + 30, &policy, Prefix::DEFAULT) {
        Verdict::Reject(reason) => println!("unknown destination: {reason}"),
        Verdict::Accept => unreachable!("no owned identifiers, nothing can be accepted"),
    }

    Ok(())
}
