//! Endpoint logic: the client handshake state machine and the server
//! decision pipeline.
//!
//! A client mints a key pair and certificate per transport session and opens
//! with DATA_WITH_CERT. The server verifies the certificate, and while
//! puzzles are active answers first contact with a shaped CHALLENGE instead
//! of the service reply. The client brute-forces the puzzle and repeats the
//! request as SOLUTION_RETRY (certificate re-attached, so the server keeps
//! no per-flow state in between). A correct solution whitelists the client's
//! identifier for the certificate lifetime; whitelisted traffic then flows
//! as DATA_WHITELISTED with no signatures at all.
//!
//! Replay of a first-contact packet only ever elicits another challenge
//! toward the claimed source, never a delivery, so recorded handshakes are
//! worthless to a spoofing attacker. The whitelist shortcut applies to
//! SOLUTION_RETRY and DATA_WHITELISTED, deliberately not to DATA_WITH_CERT.

use std::net::{SocketAddr, UdpSocket};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use rand::{CryptoRng, Rng, RngCore};

use crate::crypto::{KeyPair, SuiteId};
use crate::identity::{
    self, generate_certificate, CertParams, Certificate, Identifier, Locator, Prefix,
    RejectReason, Verdict, VerifyPolicy, Whitelist,
};
use crate::puzzle::{self, Challenge, Issuer, Solution};
use crate::shaper::{BucketKey, Shaper, ShaperConfig};
use crate::wire::{Codec, EncapHeader, Packet, SecurityBody, SecurityHeader};
use crate::Result;

/// When the server puts puzzles in front of the service.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PuzzlePolicy {
    Always,
    Never,
    /// Only when the service's replies are larger than its requests.
    WhenAmplifying,
}

#[derive(Clone, Debug)]
pub struct ServerConfig {
    pub locator: Locator,
    pub suite: SuiteId,
    pub prefix: Prefix,
    pub policy: VerifyPolicy,
    pub puzzle_policy: PuzzlePolicy,
    /// Estimated reply-size-to-request-size ratio of the service; also used
    /// to scale echo replies.
    pub amplification_factor: f64,
    pub puzzle_level: u8,
    pub puzzle_k_bm: u8,
    pub puzzle_rotation_secs: u64,
    pub puzzle_epoch_window: u64,
    pub puzzle_verify_mode: puzzle::VerifyMode,
    pub shaper: Option<ShaperConfig>,
    /// Whether the service answers requests (request/response) or only
    /// consumes them.
    pub reply_to_requests: bool,
    /// Whether cert-less traffic is served at all.
    pub legacy_allowed: bool,
    pub rotation_secs: u64,
    pub rotation_overlap_secs: u64,
}

impl ServerConfig {
    pub fn new(locator: Locator) -> Self {
        ServerConfig {
            locator,
            suite: SuiteId::default(),
            prefix: Prefix::DEFAULT,
            policy: VerifyPolicy::default(),
            puzzle_policy: PuzzlePolicy::Always,
            amplification_factor: 1.0,
            puzzle_level: 6,
            puzzle_k_bm: 12,
            puzzle_rotation_secs: 60,
            puzzle_epoch_window: 2,
            puzzle_verify_mode: puzzle::VerifyMode::Stateless,
            shaper: Some(ShaperConfig::default()),
            reply_to_requests: true,
            legacy_allowed: false,
            rotation_secs: 300,
            rotation_overlap_secs: 30,
        }
    }

    fn puzzles_active(&self) -> bool {
        match self.puzzle_policy {
            PuzzlePolicy::Always => true,
            PuzzlePolicy::Never => false,
            PuzzlePolicy::WhenAmplifying => self.amplification_factor > 1.0,
        }
    }
}

/// One of the server's own identifiers with its mint time, for rotation.
#[derive(Clone, Copy, Debug)]
pub struct OwnIdentifier {
    pub id: Identifier,
    pub created_at: u64,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct ServerCounters {
    pub received: u64,
    pub malformed: u64,
    pub legacy_delivered: u64,
    pub legacy_rejected: u64,
    pub whitelist_hits: u64,
    pub not_whitelisted: u64,
    pub verify_rejects: u64,
    pub challenges_sent: u64,
    pub shaped_drops: u64,
    pub solutions_accepted: u64,
    pub solution_rejects: u64,
    pub delivered: u64,
    pub replies_sent: u64,
    pub unexpected_type: u64,
    /// RSA verifications actually performed. Whitelisted traffic must not
    /// move this.
    pub sig_verifications: u64,
    /// PRF invocations spent checking solutions.
    pub puzzle_mac_computations: u64,
}

#[derive(Debug)]
pub struct ServerState {
    own: Vec<OwnIdentifier>,
    whitelist: Whitelist,
    issuer: Issuer,
    shaper: Option<Shaper>,
    pub counters: ServerCounters,
}

impl ServerState {
    pub fn new<R: RngCore + CryptoRng>(
        config: &ServerConfig,
        rng: &mut R,
        now: u64,
    ) -> Result<Self> {
        let issuer = Issuer::new(
            config.suite,
            rng.gen(),
            config.puzzle_rotation_secs,
            config.puzzle_epoch_window,
            config.puzzle_verify_mode,
        )?;
        let shaper = config.shaper.map(Shaper::new).transpose()?;
        let mut state = ServerState {
            own: Vec::new(),
            whitelist: Whitelist::new(config.policy.clock_error_secs),
            issuer,
            shaper,
            counters: ServerCounters::default(),
        };
        state.mint_identifier(config, rng, now);
        Ok(state)
    }

    fn mint_identifier<R: RngCore + CryptoRng>(
        &mut self,
        config: &ServerConfig,
        rng: &mut R,
        now: u64,
    ) -> Identifier {
        let id = Identifier::from_parts(config.prefix, rng.gen());
        self.own.push(OwnIdentifier { id, created_at: now });
        id
    }

    pub fn own_ids(&self) -> Vec<Identifier> {
        self.own.iter().map(|o| o.id).collect()
    }

    /// The newest identifier, the one handed to new clients.
    pub fn current_id(&self) -> Identifier {
        self.own.last().expect("a server always owns at least one identifier").id
    }

    pub fn whitelist_len(&self) -> usize {
        self.whitelist.len()
    }

    pub fn shaper(&self) -> Option<&Shaper> {
        self.shaper.as_ref()
    }
}

/// Mint a fresh identifier and retire ones past rotation plus overlap.
/// Whitelist entries key on client identifiers, so established flows keep
/// working across rotations.
pub fn rotate_identifiers<R: RngCore + CryptoRng>(
    config: &ServerConfig,
    state: &mut ServerState,
    rng: &mut R,
    now: u64,
) -> Identifier {
    let id = state.mint_identifier(config, rng, now);
    let horizon = config.rotation_secs + config.rotation_overlap_secs;
    state.own.retain(|o| o.created_at.saturating_add(horizon) > now || o.id == id);
    state.whitelist.purge_expired(now);
    id
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DropReason {
    Verify(RejectReason),
    BadSolution,
    NotWhitelisted,
    Shaped,
    LegacyDisallowed,
    UnexpectedType,
    Malformed,
}

/// The single decision the server takes for one inbound packet.
#[derive(Clone, Debug)]
pub enum ServerAction {
    /// Hand the payload to the service; nothing goes back out.
    Deliver,
    /// Payload delivered and this response goes back.
    Reply(Packet),
    /// First contact answered with a puzzle instead of service work.
    SendChallenge(Packet),
    Drop(DropReason),
}

impl ServerAction {
    pub fn is_delivery(&self) -> bool {
        matches!(self, ServerAction::Deliver | ServerAction::Reply(_))
    }

    pub fn outbound(&self) -> Option<&Packet> {
        match self {
            ServerAction::Reply(p) | ServerAction::SendChallenge(p) => Some(p),
            _ => None,
        }
    }
}

fn scale_payload(payload: &[u8], factor: f64) -> Vec<u8> {
    if factor == 1.0 || payload.is_empty() {
        return payload.to_vec();
    }
    let len = ((payload.len() as f64) * factor).round().max(0.0) as usize;
    payload.iter().copied().cycle().take(len).collect()
}

fn reply_packet(config: &ServerConfig, request: &Packet, legacy: bool) -> Packet {
    Packet {
        encap: EncapHeader {
            outer_src: config.locator,
            outer_dst: request.encap.outer_src,
            inner_src: request.encap.inner_dst,
            inner_dst: request.encap.inner_src,
        },
        sec: (!legacy).then(|| SecurityHeader {
            suite: config.suite,
            body: SecurityBody::DataWhitelisted,
        }),
        payload: scale_payload(&request.payload, config.amplification_factor),
    }
}

/// Process one inbound packet. `now` is in seconds; sub-second precision
/// only matters to the shaper.
pub fn server_process(
    config: &ServerConfig,
    state: &mut ServerState,
    packet: &Packet,
    now: f64,
) -> ServerAction {
    state.counters.received += 1;
    let secs = now.max(0.0) as u64;

    let Some(sec) = &packet.sec else {
        if config.legacy_allowed {
            state.counters.legacy_delivered += 1;
            return deliver(config, state, packet, true);
        }
        state.counters.legacy_rejected += 1;
        return ServerAction::Drop(DropReason::LegacyDisallowed);
    };

    match &sec.body {
        SecurityBody::DataWhitelisted => {
            if state.whitelist.check(packet.encap.inner_src, secs) {
                state.counters.whitelist_hits += 1;
                deliver(config, state, packet, false)
            } else {
                state.counters.not_whitelisted += 1;
                ServerAction::Drop(DropReason::NotWhitelisted)
            }
        }
        SecurityBody::DataWithCert(cert) => {
            // First contact always runs the full pipeline. Replayed opening
            // packets therefore earn a challenge toward the claimed source,
            // never a delivery.
            match verified(config, state, cert, packet, secs) {
                Err(reason) => {
                    state.counters.verify_rejects += 1;
                    ServerAction::Drop(DropReason::Verify(reason))
                }
                Ok(()) => {
                    if !config.puzzles_active() {
                        return deliver(config, state, packet, false);
                    }
                    challenge_or_shape(config, state, cert, packet, now)
                }
            }
        }
        SecurityBody::SolutionRetry { challenge, solution, cert } => {
            if state.whitelist.check(packet.encap.inner_src, secs) {
                state.counters.whitelist_hits += 1;
                return deliver(config, state, packet, false);
            }
            match verified(config, state, cert, packet, secs) {
                Err(reason) => {
                    state.counters.verify_rejects += 1;
                    ServerAction::Drop(DropReason::Verify(reason))
                }
                Ok(()) => {
                    if !config.puzzles_active() {
                        return deliver(config, state, packet, false);
                    }
                    let check = state
                        .issuer
                        .verify(
                            *solution,
                            challenge.l,
                            packet.encap.inner_src,
                            packet.encap.inner_dst,
                            &challenge.h,
                            secs,
                        )
                        .unwrap_or(puzzle::SolutionCheck {
                            accepted: false,
                            mac_computations: 0,
                        });
                    state.counters.puzzle_mac_computations += u64::from(check.mac_computations);
                    if !check.accepted {
                        state.counters.solution_rejects += 1;
                        return ServerAction::Drop(DropReason::BadSolution);
                    }
                    state.counters.solutions_accepted += 1;
                    state.whitelist.insert(packet.encap.inner_src, cert);
                    if let Some(shaper) = &mut state.shaper {
                        shaper.on_solution(BucketKey::from_locator(&packet.encap.outer_src));
                    }
                    deliver(config, state, packet, false)
                }
            }
        }
        SecurityBody::Challenge(_) => {
            state.counters.unexpected_type += 1;
            ServerAction::Drop(DropReason::UnexpectedType)
        }
    }
}

fn verified(
    config: &ServerConfig,
    state: &mut ServerState,
    cert: &Certificate,
    packet: &Packet,
    secs: u64,
) -> std::result::Result<(), RejectReason> {
    let own = state.own_ids();
    let verdict = identity::verify(
        cert,
        packet.encap.inner_src,
        &own,
        secs,
        &config.policy,
        config.prefix,
    );
    // The signature is only ever touched once the first three checks pass.
    if matches!(
        verdict,
        Verdict::Accept | Verdict::Reject(RejectReason::InvalidSignature)
    ) {
        state.counters.sig_verifications += 1;
    }
    match verdict {
        Verdict::Accept => Ok(()),
        Verdict::Reject(reason) => Err(reason),
    }
}

fn challenge_or_shape(
    config: &ServerConfig,
    state: &mut ServerState,
    cert: &Certificate,
    packet: &Packet,
    now: f64,
) -> ServerAction {
    let key = BucketKey::from_locator(&packet.encap.outer_src);
    let admitted = match &mut state.shaper {
        Some(shaper) => shaper.admit(key, now),
        None => true,
    };
    if !admitted {
        state.counters.shaped_drops += 1;
        return ServerAction::Drop(DropReason::Shaped);
    }
    let challenge = state
        .issuer
        .issue(
            packet.encap.inner_src,
            cert.id_dst,
            config.puzzle_level,
            config.puzzle_k_bm,
            now.max(0.0) as u64,
        )
        .expect("configured puzzle parameters are validated at startup");
    state.counters.challenges_sent += 1;
    ServerAction::SendChallenge(Packet {
        encap: EncapHeader {
            outer_src: config.locator,
            outer_dst: packet.encap.outer_src,
            inner_src: cert.id_dst,
            inner_dst: packet.encap.inner_src,
        },
        sec: Some(SecurityHeader {
            suite: config.suite,
            body: SecurityBody::Challenge(challenge),
        }),
        payload: Vec::new(),
    })
}

fn deliver(
    config: &ServerConfig,
    state: &mut ServerState,
    request: &Packet,
    legacy: bool,
) -> ServerAction {
    state.counters.delivered += 1;
    if config.reply_to_requests {
        state.counters.replies_sent += 1;
        ServerAction::Reply(reply_packet(config, request, legacy))
    } else {
        ServerAction::Deliver
    }
}

/// Client-side handshake phase.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ClientPhase {
    /// Opening DATA_WITH_CERT sent, nothing back yet.
    CertSent,
    /// Puzzle solved and SOLUTION_RETRY sent.
    RetrySent,
    /// A service reply arrived; data flows as DATA_WHITELISTED now.
    Established,
}

impl ClientPhase {
    /// The legal transition relation of the handshake.
    pub fn may_become(self, next: ClientPhase) -> bool {
        use ClientPhase::*;
        matches!(
            (self, next),
            (CertSent, CertSent)
                | (CertSent, RetrySent)
                | (CertSent, Established)
                | (RetrySent, RetrySent)
                | (RetrySent, Established)
                | (Established, Established)
        )
    }
}

#[derive(Clone, Debug, Default)]
pub struct ClientCounters {
    pub challenges_received: u64,
    pub solve_trials: u64,
    pub retries_sent: u64,
    pub replies_received: u64,
    pub bogus_challenges: u64,
    pub stale_ignored: u64,
}

#[derive(Clone, Debug)]
pub struct ClientConfig {
    pub suite: SuiteId,
    pub prefix: Prefix,
    pub locator: Locator,
    pub duration_secs: u32,
}

impl ClientConfig {
    pub fn new(locator: Locator) -> Self {
        ClientConfig {
            suite: SuiteId::default(),
            prefix: Prefix::DEFAULT,
            locator,
            duration_secs: 1800,
        }
    }
}

/// One transport session: a fresh key pair and certificate, the handshake
/// phase, and enough memory to retransmit or answer duplicates idempotently.
#[derive(Debug)]
pub struct ClientSession {
    cert: Certificate,
    id: Identifier,
    server_id: Identifier,
    phase: ClientPhase,
    solved: Option<(Challenge, Solution)>,
    first_payload: Vec<u8>,
    last_sent: Packet,
    pub counters: ClientCounters,
}

impl ClientSession {
    pub fn phase(&self) -> ClientPhase {
        self.phase
    }

    pub fn id(&self) -> Identifier {
        self.id
    }

    pub fn certificate(&self) -> &Certificate {
        &self.cert
    }

    /// The most recent outbound packet, for retransmission after loss.
    pub fn last_sent(&self) -> &Packet {
        &self.last_sent
    }

    /// Whether this session went through a puzzle. Only then is the
    /// identifier whitelisted server-side and DATA_WHITELISTED usable.
    pub fn solved_puzzle(&self) -> bool {
        self.solved.is_some()
    }

    /// A data packet re-attaching the certificate, for servers that run
    /// without puzzles and verify every request instead of whitelisting.
    pub fn data_packet_with_cert(&self, payload: Vec<u8>) -> Packet {
        Packet {
            encap: EncapHeader {
                outer_src: self.cert.loc_src,
                outer_dst: self.cert.loc_dst,
                inner_src: self.id,
                inner_dst: self.server_id,
            },
            sec: Some(SecurityHeader {
                suite: self.cert.suite,
                body: SecurityBody::DataWithCert(self.cert.clone()),
            }),
            payload,
        }
    }

    /// A data packet for an established session.
    pub fn data_packet(&self, payload: Vec<u8>) -> Packet {
        Packet {
            encap: EncapHeader {
                outer_src: self.cert.loc_src,
                outer_dst: self.cert.loc_dst,
                inner_src: self.id,
                inner_dst: self.server_id,
            },
            sec: Some(SecurityHeader {
                suite: self.cert.suite,
                body: SecurityBody::DataWhitelisted,
            }),
            payload,
        }
    }
}

/// Start a session: self-sign a certificate for this destination and build
/// the opening packet.
pub fn client_initiate(
    config: &ClientConfig,
    keypair: &KeyPair,
    server_id: Identifier,
    server_loc: Locator,
    payload: Vec<u8>,
    now: u64,
) -> Result<(ClientSession, Packet)> {
    let params = CertParams {
        suite: config.suite,
        loc_src: config.locator,
        loc_dst: server_loc,
        id_dst: server_id,
        duration_secs: config.duration_secs,
        time: now,
    };
    let (cert, id) = generate_certificate(&params, keypair, config.prefix)?;
    let packet = Packet {
        encap: EncapHeader {
            outer_src: config.locator,
            outer_dst: server_loc,
            inner_src: id,
            inner_dst: server_id,
        },
        sec: Some(SecurityHeader {
            suite: config.suite,
            body: SecurityBody::DataWithCert(cert.clone()),
        }),
        payload: payload.clone(),
    };
    let session = ClientSession {
        cert,
        id,
        server_id,
        phase: ClientPhase::CertSent,
        solved: None,
        first_payload: payload,
        last_sent: packet.clone(),
        counters: ClientCounters::default(),
    };
    Ok((session, packet))
}

/// Feed one inbound packet to the session. Returns the packet to send next,
/// if any. Duplicate challenges are answered from the cached solution
/// without solving again; unparseable or stale input is counted and ignored.
pub fn client_handle(session: &mut ClientSession, packet: &Packet) -> Option<Packet> {
    let body = packet.sec.as_ref().map(|s| &s.body);
    match body {
        Some(SecurityBody::Challenge(challenge)) => {
            if session.phase == ClientPhase::Established {
                session.counters.stale_ignored += 1;
                return None;
            }
            session.counters.challenges_received += 1;
            let solution = match &session.solved {
                Some((known, solution)) if known == challenge => *solution,
                _ => {
                    match puzzle::solve(challenge, session.id, session.server_id) {
                        Ok(outcome) => {
                            session.counters.solve_trials += outcome.trials;
                            session.solved = Some((*challenge, outcome.solution));
                            outcome.solution
                        }
                        Err(_) => {
                            session.counters.bogus_challenges += 1;
                            return None;
                        }
                    }
                }
            };
            let retry = Packet {
                encap: EncapHeader {
                    outer_src: session.cert.loc_src,
                    outer_dst: session.cert.loc_dst,
                    inner_src: session.id,
                    inner_dst: session.server_id,
                },
                sec: Some(SecurityHeader {
                    suite: session.cert.suite,
                    body: SecurityBody::SolutionRetry {
                        challenge: *challenge,
                        solution,
                        cert: session.cert.clone(),
                    },
                }),
                payload: session.first_payload.clone(),
            };
            session.phase = ClientPhase::RetrySent;
            session.counters.retries_sent += 1;
            session.last_sent = retry.clone();
            Some(retry)
        }
        Some(SecurityBody::DataWhitelisted) | None => {
            session.counters.replies_received += 1;
            session.phase = ClientPhase::Established;
            None
        }
        Some(SecurityBody::DataWithCert(_)) | Some(SecurityBody::SolutionRetry { .. }) => {
            session.counters.stale_ignored += 1;
            None
        }
    }
}

/// In-memory link shuttling packets through the codec, with a scripted loss
/// pattern (cycled; empty means lossless) and an optional fixed delay the
/// caller adds to its clock.
pub struct Link {
    codec: Codec,
    drop_pattern: Vec<bool>,
    pub delay_secs: f64,
    transmitted: u64,
    delivered: u64,
}

impl Link {
    pub fn new(codec: Codec) -> Self {
        Link { codec, drop_pattern: Vec::new(), delay_secs: 0.0, transmitted: 0, delivered: 0 }
    }

    pub fn with_drop_pattern(codec: Codec, drop_pattern: Vec<bool>) -> Self {
        Link { codec, drop_pattern, delay_secs: 0.0, transmitted: 0, delivered: 0 }
    }

    /// Encode, maybe lose, decode. Mirrors what a real datagram path does to
    /// a packet.
    pub fn transmit(&mut self, packet: &Packet) -> Option<Packet> {
        let n = self.transmitted as usize;
        self.transmitted += 1;
        if !self.drop_pattern.is_empty() && self.drop_pattern[n % self.drop_pattern.len()] {
            return None;
        }
        let bytes = self.codec.encode(packet);
        let packet = self.codec.decode(&bytes).expect("a packet we encoded decodes");
        self.delivered += 1;
        Some(packet)
    }

    pub fn transmitted(&self) -> u64 {
        self.transmitted
    }

    pub fn delivered(&self) -> u64 {
        self.delivered
    }
}

fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

/// A UDP server hosting the pipeline. Responses go to the datagram's actual
/// source socket, so a replayed or spoofed opening packet sends its
/// challenge toward the claimed origin, not back to the forger's payload
/// address.
pub struct UdpServer {
    socket: UdpSocket,
    codec: Codec,
    pub config: ServerConfig,
    pub state: ServerState,
}

impl UdpServer {
    pub fn bind(addr: &str, config: ServerConfig, state: ServerState) -> Result<Self> {
        let socket = UdpSocket::bind(addr)?;
        Ok(UdpServer { socket, codec: Codec::default(), config, state })
    }

    pub fn local_addr(&self) -> Result<SocketAddr> {
        Ok(self.socket.local_addr()?)
    }

    /// Receive and process one datagram, sending any response. Returns the
    /// action taken.
    pub fn serve_one(&mut self) -> Result<ServerAction> {
        let mut buf = [0u8; 2048];
        let (len, from) = self.socket.recv_from(&mut buf)?;
        let Ok(packet) = self.codec.decode(&buf[..len]) else {
            self.state.counters.malformed += 1;
            return Ok(ServerAction::Drop(DropReason::Malformed));
        };
        let action = server_process(&self.config, &mut self.state, &packet, unix_now());
        if let Some(out) = action.outbound() {
            self.socket.send_to(&self.codec.encode(out), from)?;
        }
        Ok(action)
    }

    /// Serve until `max_packets` datagrams have been processed.
    pub fn serve(&mut self, max_packets: u64) -> Result<()> {
        for _ in 0..max_packets {
            self.serve_one()?;
        }
        Ok(())
    }
}

/// Outcome of [`udp_handshake`].
#[derive(Debug)]
pub struct HandshakeReport {
    pub established: bool,
    pub solve_trials: u64,
    pub round_trips: u32,
    pub reply_payload: Vec<u8>,
}

/// Run a complete handshake against a UDP server: initiate, solve whatever
/// challenge comes back, and wait for the service reply.
pub fn udp_handshake(
    server: SocketAddr,
    config: &ClientConfig,
    keypair: &KeyPair,
    server_id: Identifier,
    server_loc: Locator,
    payload: Vec<u8>,
    timeout: Duration,
) -> Result<HandshakeReport> {
    let socket = UdpSocket::bind(("0.0.0.0", 0))?;
    socket.set_read_timeout(Some(timeout))?;
    let codec = Codec::default();
    let (mut session, first) =
        client_initiate(config, keypair, server_id, server_loc, payload, unix_now() as u64)?;
    socket.send_to(&codec.encode(&first), server)?;

    let mut round_trips = 0u32;
    let mut buf = [0u8; 2048];
    loop {
        let (len, _) = socket.recv_from(&mut buf)?;
        round_trips += 1;
        let Ok(packet) = codec.decode(&buf[..len]) else {
            continue;
        };
        let reply_payload = packet.payload.clone();
        if let Some(next) = client_handle(&mut session, &packet) {
            socket.send_to(&codec.encode(&next), server)?;
        }
        if session.phase() == ClientPhase::Established {
            return Ok(HandshakeReport {
                established: true,
                solve_trials: session.counters.solve_trials,
                round_trips,
                reply_payload,
            });
        }
        if round_trips > 8 {
            return Ok(HandshakeReport {
                established: false,
                solve_trials: session.counters.solve_trials,
                round_trips,
                reply_payload: Vec::new(),
            });
        }
    }
}
