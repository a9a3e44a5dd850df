//! Command-line front end over the library: key and certificate tooling,
//! puzzle benchmarking, the closed-form attack tables, the simulator, and a
//! two-process UDP demo.
//!
//! Exit codes: 0 success, 1 bad input (flags, files, parameters), 2 a
//! verification or handshake failure.

use std::ffi::OsString;
use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::crypto::{hash, KeyPair, SuiteId, DEFAULT_RSA_BITS};
use crate::endpoint::{
    udp_handshake, ClientConfig, PuzzlePolicy, ServerConfig, ServerState, UdpServer,
};
use crate::identity::{
    derive_identifier, generate_certificate, verify, CertParams, Certificate, Identifier,
    Locator, Prefix, Verdict, VerifyPolicy,
};
use crate::model::{self, ModelParams, Scenario};
use crate::puzzle::{self, Issuer, VerifyMode};
use crate::sim::{self, SimConfig};
use crate::wire::{Preset, SizeConstants};
use crate::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_BAD_INPUT: i32 = 1;
pub const EXIT_VERIFY_FAILED: i32 = 2;

#[derive(Parser)]
#[command(name = "eip", version, about = "Ephemeral self-certified identifiers with receiver puzzles and per-source shaping")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a signing key pair deterministically from a seed
    Keygen {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Directory receiving key.bin
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Self-sign a certificate and print the identifier it yields
    CertMake {
        /// Key pair file written by keygen
        #[arg(long)]
        key: PathBuf,
        #[arg(long, default_value = "hmac-sha3")]
        suite: SuiteId,
        /// Sender locator (IP address)
        #[arg(long)]
        src: Locator,
        /// Destination locator
        #[arg(long)]
        dst: Locator,
        /// Destination service identifier (IPv6 notation)
        #[arg(long)]
        dst_id: Identifier,
        /// Validity in seconds
        #[arg(long, default_value_t = 1800)]
        duration: u32,
        /// Issue time as a unix timestamp; defaults to now
        #[arg(long)]
        time: Option<u64>,
        /// Directory receiving cert.bin
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Run the receiver checks against a stored certificate
    CertVerify {
        #[arg(long)]
        cert: PathBuf,
        /// Identifier the receiver owns; defaults to the one the
        /// certificate names
        #[arg(long)]
        dst_id: Option<Identifier>,
        /// Verification time as a unix timestamp; defaults to now
        #[arg(long)]
        now: Option<u64>,
        #[arg(long, default_value_t = 5)]
        clock_error: u64,
        #[arg(long, default_value_t = 3600)]
        max_duration: u32,
    },
    /// Measure brute-force cost against the closed-form expectation
    PuzzleBench {
        /// Masked bits the solver must recover
        #[arg(long = "kbm", default_value_t = 12)]
        kbm: u8,
        /// Hardness level choosing the secret width
        #[arg(long, default_value_t = 6)]
        level: u8,
        #[arg(long, default_value = "hmac-sha3")]
        suite: SuiteId,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        trials: u32,
        /// Directory receiving puzzle_bench.csv; stdout summary only when
        /// omitted
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Emit the closed-form attack tables as CSV
    Model {
        #[arg(long, default_value = "paper-text")]
        preset: Preset,
        #[arg(long, default_value_t = 1e9)]
        attack_bps: f64,
        #[arg(long, default_value_t = 1.0)]
        amplification: f64,
        #[arg(long, default_value_t = 1000)]
        reflectors: u32,
        /// Shaper admission rate per source prefix, per second
        #[arg(long = "rate", default_value_t = 10.0)]
        rate: f64,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Run the packet-level simulation and write its metrics
    Sim {
        /// key=value parameter file; defaults apply when omitted
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override the configured scenario
        #[arg(long)]
        scenario: Option<Scenario>,
        /// Override the configured seed
        #[arg(long)]
        seed: Option<u64>,
        /// Override the configured size-constant preset
        #[arg(long)]
        preset: Option<Preset>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Host the pipeline on a UDP socket (for demo-send)
    DemoServe {
        #[arg(long, default_value = "127.0.0.1:0")]
        addr: String,
        #[arg(long, default_value = "hmac-sha3")]
        suite: SuiteId,
        #[arg(long = "kbm", default_value_t = 12)]
        kbm: u8,
        #[arg(long, default_value_t = 6)]
        level: u8,
        /// Serve verified first contacts directly instead of challenging
        #[arg(long)]
        no_puzzles: bool,
        /// Datagrams to process before exiting
        #[arg(long, default_value_t = 8)]
        max_packets: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Handshake against demo-serve, solving any puzzle it sends
    DemoSend {
        #[arg(long)]
        addr: SocketAddr,
        /// Server identifier printed by demo-serve
        #[arg(long)]
        server_id: Identifier,
        #[arg(long, default_value = "hmac-sha3")]
        suite: SuiteId,
        #[arg(long, default_value = "hello")]
        payload: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 3)]
        timeout_secs: u64,
    },
}

/// Parse and execute, returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // clap uses exit code 2 for usage errors; this tool reserves 2
            // for verification failures, so usage problems map to 1
            let code = if e.use_stderr() { EXIT_BAD_INPUT } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_BAD_INPUT
        }
    }
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn write_out(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, contents)?;
    Ok(path)
}

fn execute(command: Command) -> Result<i32> {
    match command {
        Command::Keygen { seed, out } => keygen(seed, &out),
        Command::CertMake { key, suite, src, dst, dst_id, duration, time, out } => {
            cert_make(&key, suite, src, dst, dst_id, duration, time, &out)
        }
        Command::CertVerify { cert, dst_id, now, clock_error, max_duration } => {
            cert_verify(&cert, dst_id, now, clock_error, max_duration)
        }
        Command::PuzzleBench { kbm, level, suite, seed, trials, out } => {
            puzzle_bench(kbm, level, suite, seed, trials, out.as_deref())
        }
        Command::Model { preset, attack_bps, amplification, reflectors, rate, out } => {
            model_tables(preset, attack_bps, amplification, reflectors, rate, &out)
        }
        Command::Sim { config, scenario, seed, preset, out } => {
            run_sim(config.as_deref(), scenario, seed, preset, &out)
        }
        Command::DemoServe { addr, suite, kbm, level, no_puzzles, max_packets, seed } => {
            demo_serve(&addr, suite, kbm, level, no_puzzles, max_packets, seed)
        }
        Command::DemoSend { addr, server_id, suite, payload, seed, timeout_secs } => {
            demo_send(addr, server_id, suite, payload, seed, timeout_secs)
        }
    }
}

fn keygen(seed: u64, out: &Path) -> Result<i32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let keypair = KeyPair::generate(&mut rng, DEFAULT_RSA_BITS)?;
    fs::create_dir_all(out)?;
    let path = out.join("key.bin");
    fs::write(&path, keypair.to_bytes())?;
    let fingerprint = hex(&hash(keypair.public_key_bytes()).as_bytes()[..8]);
    println!("wrote {} (public key fingerprint {fingerprint})", path.display());
    Ok(EXIT_OK)
}

#[allow(clippy::too_many_arguments)]
fn cert_make(
    key: &Path,
    suite: SuiteId,
    src: Locator,
    dst: Locator,
    dst_id: Identifier,
    duration: u32,
    time: Option<u64>,
    out: &Path,
) -> Result<i32> {
    let keypair = KeyPair::from_bytes(&fs::read(key)?)?;
    let params = CertParams {
        suite,
        loc_src: src,
        loc_dst: dst,
        id_dst: dst_id,
        duration_secs: duration,
        time: time.unwrap_or_else(unix_now),
    };
    let (cert, id) = generate_certificate(&params, &keypair, Prefix::DEFAULT)?;
    let encoded = cert.encode();
    fs::create_dir_all(out)?;
    let path = out.join("cert.bin");
    fs::write(&path, &encoded)?;
    println!("wrote {} ({} bytes)", path.display(), encoded.len());
    println!("identifier {id}");
    Ok(EXIT_OK)
}

fn cert_verify(
    cert_path: &Path,
    dst_id: Option<Identifier>,
    now: Option<u64>,
    clock_error: u64,
    max_duration: u32,
) -> Result<i32> {
    let cert = Certificate::decode(&fs::read(cert_path)?)?;
    let claimed = derive_identifier(&cert, Prefix::DEFAULT);
    let own = [dst_id.unwrap_or(cert.id_dst)];
    let policy = VerifyPolicy { clock_error_secs: clock_error, max_duration_secs: max_duration };
    match verify(&cert, claimed, &own, now.unwrap_or_else(unix_now), &policy, Prefix::DEFAULT) {
        Verdict::Accept => {
            println!("accepted identifier {claimed}");
            Ok(EXIT_OK)
        }
        Verdict::Reject(reason) => {
            println!("rejected: {reason}");
            Ok(EXIT_VERIFY_FAILED)
        }
    }
}

fn puzzle_bench(
    kbm: u8,
    level: u8,
    suite: SuiteId,
    seed: u64,
    trials: u32,
    out: Option<&Path>,
) -> Result<i32> {
    if trials == 0 {
        return Err(Error::Config("trials must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut issuer = Issuer::new(suite, rng.gen(), 60, 2, VerifyMode::Stateless)?;
    let mut csv = String::from("trial,solve_trials\n");
    let mut total = 0u64;
    for trial in 0..trials {
        let src = Identifier::from_u128(rng.gen());
        let dst = Identifier::from_u128(rng.gen());
        let challenge = issuer.issue(src, dst, level, kbm, 0)?;
        let outcome = puzzle::solve(&challenge, src, dst)?;
        let check = issuer.verify(outcome.solution, level, src, dst, &challenge.h, 0)?;
        if !check.accepted {
            return Err(Error::PuzzleParam("solver produced a rejected solution".into()));
        }
        total += outcome.trials;
        csv.push_str(&format!("{trial},{}\n", outcome.trials));
    }
    let mean = total as f64 / f64::from(trials);
    let expected = puzzle::expected_trials(kbm);
    let summary = format!(
        "k_bm={kbm} level={level} trials={trials} mean={mean:.1} expected={expected:.1} \
         ratio={:.3} birthday_bound={:.1}",
        mean / expected,
        puzzle::birthday_bound_trials(kbm),
    );
    csv.push_str(&format!("# {summary}\n"));
    println!("{summary}");
    if let Some(dir) = out {
        let path = write_out(dir, "puzzle_bench.csv", &csv)?;
        println!("wrote {}", path.display());
    }
    Ok(EXIT_OK)
}

fn model_tables(
    preset: Preset,
    attack_bps: f64,
    amplification: f64,
    reflectors: u32,
    rate: f64,
    out: &Path,
) -> Result<i32> {
    let params = ModelParams {
        attack_bps,
        amplification,
        reflectors,
        shaper_rate: rate,
        sizes: SizeConstants::preset(preset),
    };
    let table = model::scenario_table_csv(&params);
    let attack_points: Vec<f64> = (1..=10).map(|i| i as f64 * 1e8).collect();
    let series = model::shaped_series_csv(&params, &attack_points, &[1.0, 10.0, 50.0, 100.0]);
    let targets: Vec<f64> = (1..=12).map(|i| i as f64 * 1e9).collect();
    let required =
        model::reflectors_required_csv(&params.sizes, &targets, &[1.0, 10.0, 50.0, 100.0]);
    print!("{table}");
    for (name, contents) in [
        ("scenario_table.csv", &table),
        ("shaped_series.csv", &series),
        ("reflectors_required.csv", &required),
    ] {
        let path = write_out(out, name, contents)?;
        println!("wrote {}", path.display());
    }
    Ok(EXIT_OK)
}

fn run_sim(
    config: Option<&Path>,
    scenario: Option<Scenario>,
    seed: Option<u64>,
    preset: Option<Preset>,
    out: &Path,
) -> Result<i32> {
    let mut cfg = match config {
        Some(path) => SimConfig::from_file(path)?,
        None => SimConfig::default(),
    };
    if let Some(scenario) = scenario {
        cfg.scenario = scenario;
    }
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    if let Some(preset) = preset {
        cfg.sizes = SizeConstants::preset(preset);
    }
    cfg.validate()?;

    let report = sim::run(&cfg)?;
    let predicted = model::victim_bandwidth_bps(cfg.scenario, &cfg.model_params());
    println!(
        "scenario={} seed={} duration={}s reflectors={} attack_bps={}",
        cfg.scenario, cfg.seed, cfg.duration_secs, cfg.reflectors, cfg.attack_bps
    );
    println!(
        "victim attack traffic: {:.1} bps over {} steady seconds (closed form {:.1}, {:+.2}%)",
        report.victim_attack_bps,
        report.steady_secs,
        predicted,
        (report.victim_attack_bps - predicted) / predicted * 100.0
    );
    println!(
        "classification: {} attack / {} legit, {} false positives, {} false negatives",
        report.classified_attack_pkts,
        report.classified_legit_pkts,
        report.false_positives,
        report.false_negatives
    );
    if cfg.legit_clients > 0 {
        println!(
            "clients: {}/{} established, {:.2} requests per second served",
            report.established_clients, cfg.legit_clients, report.legit_delivered_pps
        );
    }

    let path = write_out(out, "metrics.csv", &sim::metrics_csv(&report))?;
    println!("wrote {}", path.display());
    if let Some(labels) = sim::labels_csv(&report) {
        let path = write_out(out, "labels.csv", &labels)?;
        println!("wrote {}", path.display());
    }
    Ok(EXIT_OK)
}

fn demo_serve(
    addr: &str,
    suite: SuiteId,
    kbm: u8,
    level: u8,
    no_puzzles: bool,
    max_packets: u64,
    seed: u64,
) -> Result<i32> {
    let sock_addr: SocketAddr = addr
        .parse()
        .map_err(|e| Error::Config(format!("bad listen address {addr:?}: {e}")))?;
    let mut config = ServerConfig::new(Locator(sock_addr.ip()));
    config.suite = suite;
    config.puzzle_k_bm = kbm;
    config.puzzle_level = level;
    if no_puzzles {
        config.puzzle_policy = PuzzlePolicy::Never;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let state = ServerState::new(&config, &mut rng, unix_now())?;
    let mut server = UdpServer::bind(addr, config, state)?;
    println!("listening on {}", server.local_addr()?);
    println!("identifier {}", server.state.current_id());
    server.serve(max_packets)?;
    let c = &server.state.counters;
    println!(
        "served {} packets: {} challenges, {} solutions accepted, {} delivered",
        c.received, c.challenges_sent, c.solutions_accepted, c.delivered
    );
    Ok(EXIT_OK)
}

fn demo_send(
    addr: SocketAddr,
    server_id: Identifier,
    suite: SuiteId,
    payload: String,
    seed: u64,
    timeout_secs: u64,
) -> Result<i32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let keypair = KeyPair::generate(&mut rng, DEFAULT_RSA_BITS)?;
    let mut config = ClientConfig::new(Locator(addr.ip()));
    config.suite = suite;
    let report = match udp_handshake(
        addr,
        &config,
        &keypair,
        server_id,
        Locator(addr.ip()),
        payload.into_bytes(),
        Duration::from_secs(timeout_secs.max(1)),
    ) {
        Ok(report) => report,
        Err(Error::Io(e)) => {
            // a silent server (wrong identifier, packet rejected) times out
            eprintln!("handshake failed: {e}");
            return Ok(EXIT_VERIFY_FAILED);
        }
        Err(e) => return Err(e),
    };
    if report.established {
        println!(
            "established after {} round trips ({} solve trials)",
            report.round_trips, report.solve_trials
        );
        println!("service replied: {:?}", String::from_utf8_lossy(&report.reply_payload));
        Ok(EXIT_OK)
    } else {
        eprintln!("handshake failed after {} round trips", report.round_trips);
        Ok(EXIT_VERIFY_FAILED)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn code(args: &[&str]) -> i32 {
        run(args.iter().copied())
    }

    #[test]
    fn bad_usage_exits_one_not_two() {
        assert_eq!(code(&["eip", "no-such-command"]), EXIT_BAD_INPUT);
        assert_eq!(code(&["eip"]), EXIT_BAD_INPUT);
        assert_eq!(code(&["eip", "model", "--preset", "bogus"]), EXIT_BAD_INPUT);
        assert_eq!(code(&["eip", "puzzle-bench", "--kbm", "notanumber"]), EXIT_BAD_INPUT);
    }

    #[test]
    fn help_and_version_exit_zero() {
        assert_eq!(code(&["eip", "--help"]), EXIT_OK);
        assert_eq!(code(&["eip", "--version"]), EXIT_OK);
        assert_eq!(code(&["eip", "sim", "--help"]), EXIT_OK);
    }

    #[test]
    fn keygen_cert_roundtrip_and_tamper_detection() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().to_str().unwrap();
        assert_eq!(code(&["eip", "keygen", "--seed", "5", "--out", out]), EXIT_OK);
        let key = dir.path().join("key.bin");
        assert!(key.exists());

        assert_eq!(
            code(&[
                "eip",
                "cert-make",
                "--key",
                key.to_str().unwrap(),
                "--src",
                "192.0.2.10",
                "--dst",
                "198.51.100.1",
                "--dst-id",
                "2001:db8::77",
                "--time",
                "1000000",
                "--out",
                out,
            ]),
            EXIT_OK
        );
        let cert = dir.path().join("cert.bin");
        assert!(cert.exists());

        assert_eq!(
            code(&["eip", "cert-verify", "--cert", cert.to_str().unwrap(), "--now", "1000100"]),
            EXIT_OK
        );
        // expired well past duration plus clock-error slack
        assert_eq!(
            code(&["eip", "cert-verify", "--cert", cert.to_str().unwrap(), "--now", "2000000"]),
            EXIT_VERIFY_FAILED
        );

        let mut bytes = fs::read(&cert).unwrap();
        let last = bytes.len() - 1;
        bytes[last] ^= 0x01;
        let tampered = dir.path().join("tampered.bin");
        fs::write(&tampered, &bytes).unwrap();
        assert_eq!(
            code(&[
                "eip",
                "cert-verify",
                "--cert",
                tampered.to_str().unwrap(),
                "--now",
                "1000100",
            ]),
            EXIT_VERIFY_FAILED
        );
    }

    #[test]
    fn model_and_sim_write_expected_files() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().to_str().unwrap();
        assert_eq!(code(&["eip", "model", "--preset", "table2-replication", "--out", out]), EXIT_OK);
        for name in ["scenario_table.csv", "shaped_series.csv", "reflectors_required.csv"] {
            assert!(dir.path().join(name).exists(), "missing {name}");
        }

        let config = dir.path().join("sim.conf");
        fs::write(
            &config,
            "scenario=baseline\nduration_secs=3\nattack_bps=1e6\nbots=2\nreflectors=4\n",
        )
        .unwrap();
        assert_eq!(
            code(&["eip", "sim", "--config", config.to_str().unwrap(), "--out", out]),
            EXIT_OK
        );
        let metrics = fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
        assert!(metrics.contains("second,total_bits"));

        // CLI seed override beats the file default
        assert_eq!(
            code(&[
                "eip",
                "sim",
                "--config",
                config.to_str().unwrap(),
                "--seed",
                "42",
                "--out",
                out,
            ]),
            EXIT_OK
        );
        let reseeded = fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
        assert!(reseeded.contains("seed=42"));
    }

    #[test]
    fn puzzle_bench_reports_mean_near_expectation() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().to_str().unwrap();
        assert_eq!(
            code(&[
                "eip",
                "puzzle-bench",
                "--kbm",
                "8",
                "--trials",
                "40",
                "--seed",
                "3",
                "--out",
                out,
            ]),
            EXIT_OK
        );
        let csv = fs::read_to_string(dir.path().join("puzzle_bench.csv")).unwrap();
        assert!(csv.starts_with("trial,solve_trials\n"));
        assert!(csv.contains("expected=128.0"));
    }
}
