//! End-to-end handshake over real UDP on loopback: first contact with a
//! certificate, a puzzle challenge back, the solved retry, and the service
//! reply, after which the client's identifier sits in the whitelist.
//!
//!     cargo run --example udp_handshake

use std::time::Duration;

use eip::crypto::{self, KeyPair};
use eip::endpoint::{udp_handshake, ClientConfig, ServerConfig, ServerState, UdpServer};
use eip::identity::Locator;
use rand::rngs::StdRng;
use rand::SeedableRng;

fn unix_now() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .expect("clock after epoch")
        .as_secs()
}

fn main() -> eip::Result<()> {
    let mut rng = StdRng::seed_from_u64(3);

    let mut config = ServerConfig::new(Locator::v4(127, 0, 0, 1));
    config.puzzle_k_bm = 12;
    let state = ServerState::new(&config, &mut rng, unix_now())?;
    let server = UdpServer::bind("127.0.0.1:0", config, state)?;
    let addr = server.local_addr()?;
    let server_id = server.state.current_id();
    println!("server on {addr}, identifier {server_id}");

    // two packets per handshake: the opening cert and the solved retry
    let handle = std::thread::spawn(move || {
        let mut server = server;
        server.serve(2).expect("serve loopback traffic");
        server
    });

    let keypair = KeyPair::generate(&mut rng, crypto::DEFAULT_RSA_BITS)?;
    let client = ClientConfig::new(Locator::v4(127, 0, 0, 1));
    let report = udp_handshake(
        addr,
        &client,
        &keypair,
        server_id,
        Locator::v4(127, 0, 0, 1),
        b"hello over udp".to_vec(),
        Duration::from_secs(5),
    )?;

    println!("established:   {}", report.established);
    println!("solve trials:  {}", report.solve_trials);
    println!("round trips:   {}", report.round_trips);
    println!("echoed reply:  {:?}", String::from_utf8_lossy(&report.reply_payload));

    let server = handle.join().expect("server thread");
    let c = &server.state.counters;
    println!(
        "\nserver saw {} packets: {} challenge, {} solution accepted, {} delivered",
        c.received, c.challenges_sent, c.solutions_accepted, c.delivered
    );
    println!("whitelisted identifiers: {}", server.state.whitelist_len());
    Ok(())
}
