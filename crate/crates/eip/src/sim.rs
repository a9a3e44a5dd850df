//! Deterministic discrete-event simulation of a reflection attack against a
//! single victim, with the defense stages of [`crate::model`] switchable per
//! run.
//!
//! A botnet spoofs the victim's locator toward a pool of reflectors while
//! ordinary clients of the victim keep doing real handshakes against it. The
//! simulation replays every packet through the actual endpoint pipeline
//! ([`crate::endpoint::server_process`] and the client session machinery), so
//! certificates are really signed and verified, puzzles really issued and
//! solved, and shapers really drained. Only packet *sizes* are nominal: each
//! packet is charged the size-constant bill of its message class rather than
//! its in-memory encoding, which keeps the output directly comparable to the
//! closed-form model.
//!
//! Determinism: all randomness flows from one seed through fixed-order
//! sub-generators, events are ordered by `(time, sequence)`, and no hash-map
//! iteration feeds behavior or output. Equal configurations produce
//! byte-identical CSV.

use std::collections::{BTreeMap, BinaryHeap, HashMap};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::crypto::{KeyPair, DEFAULT_RSA_BITS};
use crate::endpoint::{
    client_handle, client_initiate, server_process, ClientConfig, ClientPhase, ClientSession,
    DropReason, PuzzlePolicy, ServerAction, ServerConfig, ServerCounters, ServerState,
};
use crate::identity::{CertParams, Identifier, Locator};
use crate::model::{ModelParams, Scenario};
use crate::shaper::ShaperConfig;
use crate::wire::{
    EncapHeader, MsgType, Packet, Preset, SecurityBody, SecurityHeader, SizeConstants,
};
use crate::{Error, Result};

/// One-way propagation delay on every link, in microseconds.
const LINK_DELAY_US: u64 = 10_000;
/// Client retransmit spacing when a handshake stalls.
const RETRY_US: u64 = 2_000_000;
const MAX_CLIENT_RETRIES: u32 = 5;

const VICTIM_LOC: Locator = Locator::v4(203, 0, 113, 7);

fn reflector_locator(i: u32) -> Locator {
    Locator::v4(10, 1 + (i / 250) as u8, (i % 250) as u8, 1)
}

fn client_locator(c: u32) -> Locator {
    // one /24 per client so victim-side shaping treats them independently
    Locator::v4(172, 16 + (c / 250) as u8, (c % 250) as u8, 1)
}

/// Full parameter set for one run. Parsed from `key=value` lines, one per
/// line, `#` starting a comment.
#[derive(Clone, Debug)]
pub struct SimConfig {
    pub scenario: Scenario,
    pub seed: u64,
    pub duration_secs: u32,
    /// Leading fraction of the run excluded from steady-state figures.
    pub warmup_frac: f64,
    /// Aggregate botnet upstream, bits per second of nominal packet sizes.
    pub attack_bps: f64,
    pub amplification: f64,
    pub bots: u32,
    pub reflectors: u32,
    pub shaper_rate: f64,
    pub puzzle_level: u8,
    pub puzzle_k_bm: u8,
    /// Honest clients of the victim, each doing a real handshake then
    /// steady requests.
    pub legit_clients: u32,
    pub legit_request_rate: f64,
    pub sizes: SizeConstants,
    /// Record one ground-truth row per packet arriving at the victim.
    pub collect_labels: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            scenario: Scenario::Shaped,
            seed: 1,
            duration_secs: 30,
            warmup_frac: 0.1,
            attack_bps: 10e6,
            amplification: 10.0,
            bots: 10,
            reflectors: 100,
            shaper_rate: 10.0,
            puzzle_level: 6,
            puzzle_k_bm: 12,
            legit_clients: 0,
            legit_request_rate: 1.0,
            sizes: SizeConstants::default(),
            collect_labels: false,
        }
    }
}

impl SimConfig {
    /// Parse overrides on top of the defaults. Later lines win, so a
    /// `preset=` line can be refined by explicit `d_*_bits=` lines below it.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = SimConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let lineno = idx + 1;
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {lineno}: expected key=value, got {line:?}"))
            })?;
            cfg.apply(key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("line {lineno}: {e}")))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        SimConfig::parse(&text)
    }

    fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::Config(format!("bad value {value:?} for {key}")))
        }
        match key {
            "scenario" => self.scenario = value.parse()?,
            "seed" => self.seed = num(key, value)?,
            "duration_secs" => self.duration_secs = num(key, value)?,
            "warmup_frac" => self.warmup_frac = num(key, value)?,
            "attack_bps" => self.attack_bps = num(key, value)?,
            "amplification" => self.amplification = num(key, value)?,
            "bots" => self.bots = num(key, value)?,
            "reflectors" => self.reflectors = num(key, value)?,
            "shaper_rate" => self.shaper_rate = num(key, value)?,
            "puzzle_level" => self.puzzle_level = num(key, value)?,
            "puzzle_k_bm" => self.puzzle_k_bm = num(key, value)?,
            "legit_clients" => self.legit_clients = num(key, value)?,
            "legit_request_rate" => self.legit_request_rate = num(key, value)?,
            "preset" => self.sizes = SizeConstants::preset(value.parse::<Preset>()?),
            "d_req_bits" => self.sizes.d_req_bits = num(key, value)?,
            "d_req_cert_bits" => self.sizes.d_req_cert_bits = num(key, value)?,
            "d_puz_bits" => self.sizes.d_puz_bits = num(key, value)?,
            "collect_labels" => self.collect_labels = num(key, value)?,
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.duration_secs == 0 {
            return fail("duration_secs must be at least 1".into());
        }
        if !(0.0..=0.9).contains(&self.warmup_frac) {
            return fail(format!("warmup_frac {} outside [0, 0.9]", self.warmup_frac));
        }
        if !(self.attack_bps > 0.0) {
            return fail(format!("attack_bps {} must be positive", self.attack_bps));
        }
        if !(self.amplification > 0.0) {
            return fail(format!("amplification {} must be positive", self.amplification));
        }
        if self.bots == 0 {
            return fail("bots must be at least 1".into());
        }
        if self.reflectors < self.bots || self.reflectors > 50_000 {
            return fail(format!(
                "reflectors {} must be in [bots, 50000]",
                self.reflectors
            ));
        }
        if self.legit_clients > 2_000 {
            return fail(format!("legit_clients {} above 2000", self.legit_clients));
        }
        if self.legit_clients > 0 && !(self.legit_request_rate > 0.0) {
            return fail("legit_request_rate must be positive with clients present".into());
        }
        if self.scenario == Scenario::Shaped && !(self.shaper_rate > 0.0) {
            return fail("shaper_rate must be positive in the shaped scenario".into());
        }
        if self.puzzle_level > 6 {
            return fail(format!("puzzle_level {} above 6", self.puzzle_level));
        }
        if self.puzzle_k_bm == 0 || self.puzzle_k_bm > 32 {
            return fail(format!("puzzle_k_bm {} outside [1, 32]", self.puzzle_k_bm));
        }
        if self.sizes.d_req_bits == 0 || self.sizes.d_req_cert_bits == 0 || self.sizes.d_puz_bits == 0 {
            return fail("size constants must be positive".into());
        }
        Ok(())
    }

    /// The closed-form parameter set this run should agree with.
    pub fn model_params(&self) -> ModelParams {
        ModelParams {
            attack_bps: self.attack_bps,
            amplification: self.amplification,
            reflectors: self.reflectors,
            shaper_rate: self.shaper_rate,
            sizes: self.sizes,
        }
    }

    fn warmup_secs(&self) -> u32 {
        let w = (self.duration_secs as f64 * self.warmup_frac).ceil() as u32;
        w.min(self.duration_secs - 1)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
enum NodeId {
    Victim,
    Reflector(u32),
    Client(u32),
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum TrafficClass {
    Attack,
    Legit,
}

#[derive(Clone, Debug)]
struct SimPacket {
    packet: Packet,
    /// Nominal size billed to this packet, from the run's size constants.
    bits: u64,
    /// Ground truth: did a bot cause this packet, directly or via a
    /// reflector response.
    class: TrafficClass,
    seq: u64,
}

#[derive(Debug)]
enum EvKind {
    BotEmit { bot: u32 },
    ClientStart { client: u32 },
    ClientRetry { client: u32 },
    ClientTick { client: u32 },
    Arrive { node: NodeId, sp: SimPacket },
}

struct Ev {
    t: u64,
    seq: u64,
    kind: EvKind,
}

impl PartialEq for Ev {
    fn eq(&self, other: &Self) -> bool {
        self.t == other.t && self.seq == other.seq
    }
}

impl Eq for Ev {}

impl PartialOrd for Ev {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Ev {
    // reversed so the max-heap pops the earliest (time, seq) first
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (other.t, other.seq).cmp(&(self.t, self.seq))
    }
}

/// Traffic observed at the victim during one simulated second.
#[derive(Clone, Copy, Default, Debug)]
pub struct SecondRow {
    pub total_bits: u64,
    pub total_pkts: u64,
    pub attack_bits: u64,
    pub attack_pkts: u64,
    pub legit_bits: u64,
    pub legit_pkts: u64,
    /// Legit requests the victim actually served this second.
    pub delivered_legit: u64,
}

/// Ground truth versus the victim's own classification for one arrival.
#[derive(Clone, Copy, Debug)]
pub struct LabelRow {
    pub packet: u64,
    pub truth_attack: bool,
    pub classified_attack: bool,
}

/// Every injected packet must end up consumed somewhere or still in flight.
#[derive(Clone, Debug, Default)]
pub struct Conservation {
    pub created: u64,
    pub consumed: BTreeMap<&'static str, u64>,
    pub in_flight: u64,
}

impl Conservation {
    pub fn holds(&self) -> bool {
        self.created == self.consumed.values().sum::<u64>() + self.in_flight
    }
}

#[derive(Debug)]
pub struct SimReport {
    pub config: SimConfig,
    pub per_second: Vec<SecondRow>,
    pub steady_secs: u32,
    /// Steady-state attack traffic arriving at the victim, bits per second.
    pub victim_attack_bps: f64,
    pub victim_attack_pps: f64,
    pub victim_total_bps: f64,
    pub legit_delivered_pps: f64,
    pub classified_attack_pkts: u64,
    pub classified_legit_pkts: u64,
    /// Legit packets the victim classified as attack.
    pub false_positives: u64,
    /// Attack packets the victim classified as legit.
    pub false_negatives: u64,
    pub established_clients: u32,
    pub attacker_packets_sent: u64,
    pub victim_counters: ServerCounters,
    pub reflector_counters: Vec<ServerCounters>,
    pub conservation: Conservation,
    pub labels: Option<Vec<LabelRow>>,
}

fn node_server_config(cfg: &SimConfig, locator: Locator) -> ServerConfig {
    let mut c = ServerConfig::new(locator);
    c.amplification_factor = cfg.amplification;
    c.puzzle_level = cfg.puzzle_level;
    c.puzzle_k_bm = cfg.puzzle_k_bm;
    match cfg.scenario {
        Scenario::Baseline => {
            c.legacy_allowed = true;
            c.puzzle_policy = PuzzlePolicy::Never;
            c.shaper = None;
        }
        Scenario::CertOnly => {
            c.puzzle_policy = PuzzlePolicy::Never;
            c.shaper = None;
        }
        Scenario::Puzzles => {
            c.puzzle_policy = PuzzlePolicy::Always;
            c.shaper = None;
        }
        Scenario::Shaped => {
            c.puzzle_policy = PuzzlePolicy::Always;
            c.shaper = Some(ShaperConfig::with_rate(cfg.shaper_rate));
        }
    }
    c
}

struct Refl {
    config: ServerConfig,
    state: ServerState,
}

struct Bot {
    templates: Vec<Packet>,
    next: usize,
    interval_us: u64,
}

struct ClientSim {
    session: Option<ClientSession>,
    established_at: Option<u64>,
    retries: u32,
}

struct Engine<'a> {
    cfg: &'a SimConfig,
    horizon_us: u64,
    heap: BinaryHeap<Ev>,
    next_ev: u64,
    route: HashMap<Locator, NodeId>,
    victim_config: ServerConfig,
    victim: ServerState,
    victim_own: Vec<Identifier>,
    reflectors: Vec<Refl>,
    bots: Vec<Bot>,
    clients: Vec<ClientSim>,
    client_keypair: Option<KeyPair>,
    client_tick_us: u64,
    rows: Vec<SecondRow>,
    created: u64,
    consumed: BTreeMap<&'static str, u64>,
    classified_attack: u64,
    classified_legit: u64,
    false_positives: u64,
    false_negatives: u64,
    attacker_packets: u64,
    labels: Option<Vec<LabelRow>>,
    req_bits: u64,
    cert_bits: u64,
    puz_bits: u64,
    reply_bits: u64,
}

impl<'a> Engine<'a> {
    fn new(cfg: &'a SimConfig) -> Result<Self> {
        cfg.validate()?;
        let mut master = ChaCha8Rng::seed_from_u64(cfg.seed);
        // forked in fixed order; adding a consumer later must not reorder these
        let mut victim_rng = ChaCha8Rng::seed_from_u64(master.gen());
        let mut refl_rng = ChaCha8Rng::seed_from_u64(master.gen());
        let mut attacker_rng = ChaCha8Rng::seed_from_u64(master.gen());
        let mut client_rng = ChaCha8Rng::seed_from_u64(master.gen());
        let mut phase_rng = ChaCha8Rng::seed_from_u64(master.gen());

        let victim_config = node_server_config(cfg, VICTIM_LOC);
        let victim = ServerState::new(&victim_config, &mut victim_rng, 0)?;
        let victim_own = victim.own_ids();

        let mut route = HashMap::new();
        route.insert(VICTIM_LOC, NodeId::Victim);
        let mut reflectors = Vec::with_capacity(cfg.reflectors as usize);
        for i in 0..cfg.reflectors {
            let loc = reflector_locator(i);
            let config = node_server_config(cfg, loc);
            let state = ServerState::new(&config, &mut refl_rng, 0)?;
            route.insert(loc, NodeId::Reflector(i));
            reflectors.push(Refl { config, state });
        }
        for c in 0..cfg.legit_clients {
            route.insert(client_locator(c), NodeId::Client(c));
        }

        // The botnet shares one key pair: identifiers still differ per
        // reflector because the certificate binds destination and locators.
        let per_packet_bits = match cfg.scenario {
            Scenario::Baseline => cfg.sizes.d_req_bits,
            _ => cfg.sizes.d_req_cert_bits,
        };
        let mut templates: Vec<Packet> = Vec::with_capacity(cfg.reflectors as usize);
        if cfg.scenario == Scenario::Baseline {
            for refl in &reflectors {
                templates.push(Packet {
                    encap: EncapHeader {
                        outer_src: VICTIM_LOC,
                        outer_dst: refl.config.locator,
                        inner_src: Identifier::from_u128(attacker_rng.gen()),
                        inner_dst: refl.state.current_id(),
                    },
                    sec: None,
                    payload: Vec::new(),
                });
            }
        } else {
            let keypair = KeyPair::generate(&mut attacker_rng, DEFAULT_RSA_BITS)?;
            for refl in &reflectors {
                let params = CertParams {
                    suite: refl.config.suite,
                    loc_src: VICTIM_LOC,
                    loc_dst: refl.config.locator,
                    id_dst: refl.state.current_id(),
                    duration_secs: 3600,
                    time: 0,
                };
                let (cert, id) = crate::identity::generate_certificate(
                    &params,
                    &keypair,
                    refl.config.prefix,
                )?;
                templates.push(Packet {
                    encap: EncapHeader {
                        outer_src: VICTIM_LOC,
                        outer_dst: refl.config.locator,
                        inner_src: id,
                        inner_dst: refl.state.current_id(),
                    },
                    sec: Some(SecurityHeader {
                        suite: refl.config.suite,
                        body: SecurityBody::DataWithCert(cert),
                    }),
                    payload: Vec::new(),
                });
            }
        }

        let per_bot_bps = cfg.attack_bps / cfg.bots as f64;
        let interval_us = ((per_packet_bits as f64 / per_bot_bps) * 1e6).round().max(1.0) as u64;
        let mut bots: Vec<Bot> = (0..cfg.bots)
            .map(|_| Bot { templates: Vec::new(), next: 0, interval_us })
            .collect();
        for (r, template) in templates.into_iter().enumerate() {
            bots[r % cfg.bots as usize].templates.push(template);
        }

        let client_keypair = if cfg.legit_clients > 0 {
            Some(KeyPair::generate(&mut client_rng, DEFAULT_RSA_BITS)?)
        } else {
            None
        };
        let client_tick_us = ((1e6 / cfg.legit_request_rate).round().max(1.0)) as u64;

        let horizon_us = cfg.duration_secs as u64 * 1_000_000;
        let mut engine = Engine {
            cfg,
            horizon_us,
            heap: BinaryHeap::new(),
            next_ev: 0,
            route,
            victim_config,
            victim,
            victim_own,
            reflectors,
            bots,
            clients: (0..cfg.legit_clients)
                .map(|_| ClientSim { session: None, established_at: None, retries: 0 })
                .collect(),
            client_keypair,
            client_tick_us,
            rows: vec![SecondRow::default(); cfg.duration_secs as usize],
            created: 0,
            consumed: BTreeMap::new(),
            classified_attack: 0,
            classified_legit: 0,
            false_positives: 0,
            false_negatives: 0,
            attacker_packets: 0,
            labels: cfg.collect_labels.then(Vec::new),
            req_bits: cfg.sizes.d_req_bits,
            cert_bits: cfg.sizes.d_req_cert_bits,
            puz_bits: cfg.sizes.d_puz_bits,
            reply_bits: (cfg.amplification * cfg.sizes.d_req_bits as f64).round() as u64,
        };

        for b in 0..cfg.bots {
            let t0 = phase_rng.gen_range(0..engine.bots[b as usize].interval_us);
            engine.push(t0, EvKind::BotEmit { bot: b });
        }
        for c in 0..cfg.legit_clients {
            let t0 = phase_rng.gen_range(0..1_000_000);
            engine.push(t0, EvKind::ClientStart { client: c });
        }
        Ok(engine)
    }

    fn push(&mut self, t: u64, kind: EvKind) {
        let seq = self.next_ev;
        self.next_ev += 1;
        self.heap.push(Ev { t, seq, kind });
    }

    fn consume(&mut self, what: &'static str) {
        *self.consumed.entry(what).or_insert(0) += 1;
    }

    fn send(&mut self, t: u64, packet: Packet, bits: u64, class: TrafficClass) {
        let Some(&node) = self.route.get(&packet.encap.outer_dst) else {
            // every locator in the topology is routable; a miss is a bug
            self.created += 1;
            self.consume("unrouted");
            return;
        };
        let seq = self.created;
        self.created += 1;
        let sp = SimPacket { packet, bits, class, seq };
        self.push(t + LINK_DELAY_US, EvKind::Arrive { node, sp });
    }

    /// Nominal bill for a packet built elsewhere (client retransmits).
    fn bits_for(&self, packet: &Packet) -> u64 {
        match packet.msg_type() {
            None | Some(MsgType::DataWhitelisted) => self.req_bits,
            Some(MsgType::DataWithCert) | Some(MsgType::SolutionRetry) => self.cert_bits,
            Some(MsgType::Challenge) => self.puz_bits,
        }
    }

    fn run(mut self) -> Result<SimReport> {
        while self
            .heap
            .peek()
            .map_or(false, |ev| ev.t < self.horizon_us)
        {
            let ev = self.heap.pop().expect("peek said nonempty");
            self.dispatch(ev)?;
        }

        let in_flight = self
            .heap
            .iter()
            .filter(|ev| matches!(ev.kind, EvKind::Arrive { .. }))
            .count() as u64;

        let cfg = self.cfg.clone();
        let warmup = cfg.warmup_secs() as usize;
        let steady = &self.rows[warmup..];
        let steady_secs = steady.len() as f64;
        let sum = |f: fn(&SecondRow) -> u64| steady.iter().map(f).sum::<u64>() as f64;

        Ok(SimReport {
            steady_secs: steady.len() as u32,
            victim_attack_bps: sum(|r| r.attack_bits) / steady_secs,
            victim_attack_pps: sum(|r| r.attack_pkts) / steady_secs,
            victim_total_bps: sum(|r| r.total_bits) / steady_secs,
            legit_delivered_pps: sum(|r| r.delivered_legit) / steady_secs,
            per_second: self.rows,
            classified_attack_pkts: self.classified_attack,
            classified_legit_pkts: self.classified_legit,
            false_positives: self.false_positives,
            false_negatives: self.false_negatives,
            established_clients: self
                .clients
                .iter()
                .filter(|c| c.established_at.is_some())
                .count() as u32,
            attacker_packets_sent: self.attacker_packets,
            victim_counters: self.victim.counters,
            reflector_counters: self.reflectors.iter().map(|r| r.state.counters).collect(),
            conservation: Conservation {
                created: self.created,
                consumed: self.consumed,
                in_flight,
            },
            labels: self.labels,
            config: cfg,
        })
    }

    fn dispatch(&mut self, ev: Ev) -> Result<()> {
        let t = ev.t;
        match ev.kind {
            EvKind::BotEmit { bot } => self.bot_emit(t, bot),
            EvKind::ClientStart { client } => self.client_start(t, client)?,
            EvKind::ClientRetry { client } => self.client_retry(t, client),
            EvKind::ClientTick { client } => self.client_tick(t, client),
            EvKind::Arrive { node, sp } => match node {
                NodeId::Victim => self.arrive_victim(t, sp),
                NodeId::Reflector(i) => self.arrive_reflector(t, i, sp),
                NodeId::Client(c) => self.arrive_client(t, c, sp),
            },
        }
        Ok(())
    }

    fn bot_emit(&mut self, t: u64, bot: u32) {
        let b = &mut self.bots[bot as usize];
        if b.templates.is_empty() {
            return;
        }
        let template = b.templates[b.next % b.templates.len()].clone();
        b.next += 1;
        let interval = b.interval_us;
        let bits = self.bits_for(&template);
        self.attacker_packets += 1;
        self.send(t, template, bits, TrafficClass::Attack);
        let next = t + interval;
        if next < self.horizon_us {
            self.push(next, EvKind::BotEmit { bot });
        }
    }

    fn client_start(&mut self, t: u64, client: u32) -> Result<()> {
        let keypair = self.client_keypair.as_ref().expect("clients imply a key pair");
        let config = ClientConfig::new(client_locator(client));
        let (session, opening) = client_initiate(
            &config,
            keypair,
            self.victim_own[self.victim_own.len() - 1],
            VICTIM_LOC,
            b"request".to_vec(),
            t / 1_000_000,
        )?;
        self.clients[client as usize].session = Some(session);
        let bits = self.bits_for(&opening);
        self.send(t, opening, bits, TrafficClass::Legit);
        self.push(t + RETRY_US, EvKind::ClientRetry { client });
        Ok(())
    }

    fn client_retry(&mut self, t: u64, client: u32) {
        let packet = {
            let c = &mut self.clients[client as usize];
            let Some(session) = &c.session else { return };
            if session.phase() == ClientPhase::Established || c.retries >= MAX_CLIENT_RETRIES {
                return;
            }
            let packet = session.last_sent().clone();
            c.retries += 1;
            packet
        };
        let bits = self.bits_for(&packet);
        self.send(t, packet, bits, TrafficClass::Legit);
        self.push(t + RETRY_US, EvKind::ClientRetry { client });
    }

    fn client_tick(&mut self, t: u64, client: u32) {
        let packet = {
            let Some(session) = &self.clients[client as usize].session else { return };
            if session.phase() != ClientPhase::Established {
                return;
            }
            // Without a solved puzzle the server never whitelisted us, so
            // keep attaching the certificate and paying full freight.
            if session.solved_puzzle() {
                session.data_packet(b"request".to_vec())
            } else {
                session.data_packet_with_cert(b"request".to_vec())
            }
        };
        let bits = self.bits_for(&packet);
        self.send(t, packet, bits, TrafficClass::Legit);
        let next = t + self.client_tick_us;
        if next < self.horizon_us {
            self.push(next, EvKind::ClientTick { client });
        }
    }

    fn arrive_victim(&mut self, t: u64, sp: SimPacket) {
        let row = &mut self.rows[(t / 1_000_000) as usize];
        row.total_bits += sp.bits;
        row.total_pkts += 1;

        let classified_attack = !self.victim_own.contains(&sp.packet.encap.inner_dst);
        let truth_attack = sp.class == TrafficClass::Attack;
        if let Some(labels) = &mut self.labels {
            labels.push(LabelRow { packet: sp.seq, truth_attack, classified_attack });
        }
        match (classified_attack, truth_attack) {
            (true, false) => self.false_positives += 1,
            (false, true) => self.false_negatives += 1,
            _ => {}
        }

        if classified_attack {
            self.classified_attack += 1;
            row.attack_bits += sp.bits;
            row.attack_pkts += 1;
            self.consume("victim_attack");
            return;
        }
        self.classified_legit += 1;
        row.legit_bits += sp.bits;
        row.legit_pkts += 1;

        let action =
            server_process(&self.victim_config, &mut self.victim, &sp.packet, t as f64 / 1e6);
        if action.is_delivery() {
            self.rows[(t / 1_000_000) as usize].delivered_legit += 1;
        }
        match action {
            ServerAction::Deliver => self.consume("victim_served"),
            ServerAction::Reply(p) => {
                self.consume("victim_served");
                self.send(t, p, self.reply_bits, TrafficClass::Legit);
            }
            ServerAction::SendChallenge(p) => {
                self.consume("victim_challenged");
                self.send(t, p, self.puz_bits, TrafficClass::Legit);
            }
            ServerAction::Drop(_) => self.consume("victim_dropped"),
        }
    }

    fn arrive_reflector(&mut self, t: u64, idx: u32, sp: SimPacket) {
        let refl = &mut self.reflectors[idx as usize];
        let action = server_process(&refl.config, &mut refl.state, &sp.packet, t as f64 / 1e6);
        match action {
            ServerAction::Deliver => self.consume("reflector_served"),
            ServerAction::Reply(p) => {
                self.consume("reflector_served");
                self.send(t, p, self.reply_bits, sp.class);
            }
            ServerAction::SendChallenge(p) => {
                self.consume("reflector_challenged");
                self.send(t, p, self.puz_bits, sp.class);
            }
            ServerAction::Drop(DropReason::Shaped) => self.consume("reflector_shaped"),
            ServerAction::Drop(_) => self.consume("reflector_dropped"),
        }
    }

    fn arrive_client(&mut self, t: u64, client: u32, sp: SimPacket) {
        self.consume("client_consumed");
        let (out, established) = {
            let Some(session) = &mut self.clients[client as usize].session else { return };
            let out = client_handle(session, &sp.packet);
            (out, session.phase() == ClientPhase::Established)
        };
        if let Some(packet) = out {
            let bits = self.bits_for(&packet);
            self.send(t, packet, bits, TrafficClass::Legit);
        }
        if established && self.clients[client as usize].established_at.is_none() {
            self.clients[client as usize].established_at = Some(t);
            let next = t + self.client_tick_us;
            if next < self.horizon_us {
                self.push(next, EvKind::ClientTick { client });
            }
        }
    }
}

/// Run one simulation to completion.
pub fn run(config: &SimConfig) -> Result<SimReport> {
    Engine::new(config)?.run()
}

fn fmt_f64(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v:.3}")
    }
}

/// Per-second victim traffic plus a steady-state summary row, followed by
/// comment trailers with classification and conservation tallies. Output is
/// byte-identical across runs with equal configuration.
pub fn metrics_csv(report: &SimReport) -> String {
    let cfg = &report.config;
    let mut out = String::new();
    out.push_str(&format!(
        "# scenario={} seed={} duration_secs={} warmup_secs={} attack_bps={} amplification={} \
         bots={} reflectors={} shaper_rate={} puzzle_level={} puzzle_k_bm={} legit_clients={} \
         legit_request_rate={} d_req_bits={} d_req_cert_bits={} d_puz_bits={}\n",
        cfg.scenario,
        cfg.seed,
        cfg.duration_secs,
        cfg.warmup_secs(),
        fmt_f64(cfg.attack_bps),
        fmt_f64(cfg.amplification),
        cfg.bots,
        cfg.reflectors,
        fmt_f64(cfg.shaper_rate),
        cfg.puzzle_level,
        cfg.puzzle_k_bm,
        cfg.legit_clients,
        fmt_f64(cfg.legit_request_rate),
        cfg.sizes.d_req_bits,
        cfg.sizes.d_req_cert_bits,
        cfg.sizes.d_puz_bits,
    ));
    out.push_str("second,total_bits,total_pkts,attack_bits,attack_pkts,legit_bits,legit_pkts,delivered_legit\n");
    for (sec, row) in report.per_second.iter().enumerate() {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            sec,
            row.total_bits,
            row.total_pkts,
            row.attack_bits,
            row.attack_pkts,
            row.legit_bits,
            row.legit_pkts,
            row.delivered_legit,
        ));
    }
    let warmup = report.config.warmup_secs() as usize;
    let steady = &report.per_second[warmup..];
    let sum = |f: fn(&SecondRow) -> u64| steady.iter().map(f).sum::<u64>();
    out.push_str(&format!(
        "summary,{},{},{},{},{},{},{}\n",
        sum(|r| r.total_bits),
        sum(|r| r.total_pkts),
        sum(|r| r.attack_bits),
        sum(|r| r.attack_pkts),
        sum(|r| r.legit_bits),
        sum(|r| r.legit_pkts),
        sum(|r| r.delivered_legit),
    ));
    out.push_str(&format!(
        "# steady_attack_bps={} steady_attack_pps={} steady_total_bps={} legit_delivered_pps={}\n",
        fmt_f64(report.victim_attack_bps),
        fmt_f64(report.victim_attack_pps),
        fmt_f64(report.victim_total_bps),
        fmt_f64(report.legit_delivered_pps),
    ));
    out.push_str(&format!(
        "# classified_attack={} classified_legit={} false_positives={} false_negatives={} \
         established_clients={}\n",
        report.classified_attack_pkts,
        report.classified_legit_pkts,
        report.false_positives,
        report.false_negatives,
        report.established_clients,
    ));
    let c = &report.conservation;
    out.push_str(&format!("# conservation created={} in_flight={}", c.created, c.in_flight));
    for (what, count) in &c.consumed {
        out.push_str(&format!(" {what}={count}"));
    }
    out.push('\n');
    out
}

/// One row per packet that reached the victim, if label collection was on.
pub fn labels_csv(report: &SimReport) -> Option<String> {
    let labels = report.labels.as_ref()?;
    let mut out = String::from("packet,truth,classified\n");
    let name = |attack: bool| if attack { "attack" } else { "legit" };
    for row in labels {
        out.push_str(&format!(
            "{},{},{}\n",
            row.packet,
            name(row.truth_attack),
            name(row.classified_attack),
        ));
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model;

    fn small(scenario: Scenario) -> SimConfig {
        SimConfig {
            scenario,
            seed: 7,
            duration_secs: 4,
            warmup_frac: 0.25,
            attack_bps: 1e6,
            amplification: 8.0,
            bots: 2,
            reflectors: 6,
            shaper_rate: 4.0,
            legit_clients: 0,
            ..SimConfig::default()
        }
    }

    #[test]
    fn config_parse_applies_overrides() {
        let cfg = SimConfig::parse(
            "# comment\n\
             scenario = puzzles\n\
             seed=99\n\
             attack_bps=2e6   # inline comment\n\
             preset=table2-replication\n\
             d_req_bits=1000\n\
             collect_labels=true\n",
        )
        .unwrap();
        assert_eq!(cfg.scenario, Scenario::Puzzles);
        assert_eq!(cfg.seed, 99);
        assert_eq!(cfg.attack_bps, 2e6);
        assert_eq!(cfg.sizes.d_puz_bits, 1276);
        assert_eq!(cfg.sizes.d_req_bits, 1000, "explicit key refines the preset");
        assert!(cfg.collect_labels);
    }

    #[test]
    fn config_parse_rejects_junk() {
        assert!(SimConfig::parse("scenario=warp-drive").is_err());
        assert!(SimConfig::parse("no_such_key=1").is_err());
        assert!(SimConfig::parse("seed=abc").is_err());
        assert!(SimConfig::parse("just a line").is_err());
        assert!(SimConfig::parse("warmup_frac=0.95").is_err());
        assert!(SimConfig::parse("bots=50\nreflectors=10").is_err());
    }

    #[test]
    fn same_seed_means_identical_output() {
        let cfg = small(Scenario::Baseline);
        let a = metrics_csv(&run(&cfg).unwrap());
        let b = metrics_csv(&run(&cfg).unwrap());
        assert_eq!(a, b);

        let mut other = cfg.clone();
        other.seed = 8;
        let c = metrics_csv(&run(&other).unwrap());
        assert_ne!(a, c, "a different seed should at least shift phases");
    }

    #[test]
    fn conservation_holds_in_every_scenario() {
        for scenario in Scenario::ALL {
            let report = run(&small(scenario)).unwrap();
            assert!(
                report.conservation.holds(),
                "{scenario}: created {} != consumed {:?} + in flight {}",
                report.conservation.created,
                report.conservation.consumed,
                report.conservation.in_flight
            );
            assert!(report.attacker_packets_sent > 0);
        }
    }

    #[test]
    fn baseline_tracks_closed_form_bandwidth() {
        let cfg = small(Scenario::Baseline);
        let report = run(&cfg).unwrap();
        let predicted = model::victim_bandwidth_bps(Scenario::Baseline, &cfg.model_params());
        let err = (report.victim_attack_bps - predicted).abs() / predicted;
        assert!(
            err < 0.05,
            "sim {} vs model {predicted} (err {err:.3})",
            report.victim_attack_bps
        );
    }

    #[test]
    fn puzzle_scenario_turns_floods_into_challenges() {
        let report = run(&small(Scenario::Puzzles)).unwrap();
        let steady: Vec<_> = report.per_second.iter().skip(1).collect();
        let bits: u64 = steady.iter().map(|r| r.attack_bits).sum();
        let pkts: u64 = steady.iter().map(|r| r.attack_pkts).sum();
        assert!(pkts > 0);
        assert_eq!(bits, pkts * report.config.sizes.d_puz_bits, "attack residue is challenges only");
    }

    #[test]
    fn shaper_caps_victim_rate() {
        let cfg = small(Scenario::Shaped);
        let report = run(&cfg).unwrap();
        // supply side: at most rate per reflector once buckets drain
        let cap = cfg.reflectors as f64 * cfg.shaper_rate;
        assert!(
            report.victim_attack_pps <= cap * 1.05,
            "steady {} pps above cap {cap}",
            report.victim_attack_pps
        );
        let shaped = report.conservation.consumed.get("reflector_shaped").copied().unwrap_or(0);
        assert!(shaped > 0, "expected the shaper to drop something");
    }

    #[test]
    fn clients_establish_and_are_never_misclassified() {
        let mut cfg = small(Scenario::Shaped);
        cfg.legit_clients = 2;
        cfg.legit_request_rate = 5.0;
        cfg.duration_secs = 6;
        cfg.collect_labels = true;
        let report = run(&cfg).unwrap();
        assert_eq!(report.established_clients, 2);
        assert_eq!(report.false_positives, 0);
        assert_eq!(report.false_negatives, 0);
        assert!(report.legit_delivered_pps > 0.0);
        let labels = report.labels.as_ref().unwrap();
        assert_eq!(
            labels.len() as u64,
            report.classified_attack_pkts + report.classified_legit_pkts
        );
        let csv = labels_csv(&report).unwrap();
        assert!(csv.starts_with("packet,truth,classified\n"));
        assert!(csv.contains(",legit,legit\n"));
        assert!(csv.contains(",attack,attack\n"));
    }

    #[test]
    fn csv_shape_is_rows_then_summary() {
        let report = run(&small(Scenario::Baseline)).unwrap();
        let csv = metrics_csv(&report);
        let lines: Vec<&str> = csv.lines().collect();
        assert!(lines[0].starts_with("# scenario=baseline"));
        assert_eq!(
            lines[1],
            "second,total_bits,total_pkts,attack_bits,attack_pkts,legit_bits,legit_pkts,delivered_legit"
        );
        let data_rows = report.config.duration_secs as usize;
        for (i, line) in lines[2..2 + data_rows].iter().enumerate() {
            assert!(line.starts_with(&format!("{i},")));
        }
        assert!(lines[2 + data_rows].starts_with("summary,"));
        assert!(csv.contains("# conservation created="));
    }
}
