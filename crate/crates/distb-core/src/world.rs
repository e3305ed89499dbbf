//! The assembled network: entities, topology, and the event handlers that
//! drive one variant of one scenario from t = 0 to the configured horizon.
//!
//! Entity ids are deterministic: 0 is the controller, then switches,
//! gateways, miners, sensors, and finally attackers. Switches sit on a
//! square grid wired 4-neighbor; gateways and miners sit on their own
//! coarser grids and attach to the nearest switch; sensors start uniformly
//! at random and walk waypoints; the controller sits at field center.
//!
//! A sensor packet takes one radio hop to its nearest alive gateway (if in
//! range) or to its nearest alive switch, then rides flow rules through the
//! wired fabric. The gateway compares the payload digest carried by the
//! packet against the origin's commitment: a mismatch is dropped by the
//! ledger variant and delivered-but-insecure by the centralized one. Every
//! verified delivery in the ledger variant becomes a gateway-signed
//! transaction shipped to the system's transaction pool, sealed into blocks
//! by rotating miner proposals under threshold consent.
//!
//! All randomness is per-entity streams keyed by entity id, so adding an
//! attack vector or killing a node never shifts any other entity's draws.

use std::collections::{BTreeMap, VecDeque};

use crate::adversary::{self, CompromiseEvent};
use crate::consensus::{self, LedgerBody, ProposerRotation, Round};
use crate::crypto::Keypair;
use crate::fabric::{
    self, Action, ControllerState, FabricCounters, LinkState, PacketHeader, SouthboundBody,
    SouthboundMsg, Switch,
};
use crate::kernel::{EntityId, EventQueue, SimTime};
use crate::ledger::{hash_block, Block, Chain, Transaction, Vote};
use crate::metrics::{ConservationSnapshot, DropReason, MetricSample, Metrics, Tally};
use crate::mobility::{
    generate_packet, DataPacket, MobilityParams, NodeRole, PacketKind, Position, SensorNode,
};
use crate::rng::RngRegistry;
use crate::scenario::Scenario;
use crate::Variant;

/// Reserved stream for in-flight tamper draws; keeps hostile randomness off
/// every entity's stream.
const TAMPER_STREAM: u64 = u64::MAX - 1;

/// What can be scheduled. Eight kinds, and nothing happens outside them.
#[derive(Debug, Clone)]
pub enum EventKind {
    /// A sensor emits its next reading, or an attacker its next junk packet.
    PacketSend,
    /// Something arrives somewhere: a packet at a switch/endpoint, or a
    /// control message at a switch/controller.
    PacketArrive { arrival: Arrival },
    /// One waypoint-walk step for one sensor.
    MobilityStep,
    /// Consent round boundary: tally the open round, start the next.
    BlockPropose,
    /// A miner evaluates a proposal it received and emits its vote.
    Vote { round_id: u64, block: Box<Block> },
    /// An attacker acts (takeover attempt or forged-block injection).
    AttackAttempt { action: AttackAction },
    /// Metric window boundary.
    MetricWindow,
    /// Garbage-collect one possibly-expired flow rule.
    RuleTimeout { rule_id: u64 },
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::PacketSend => "PacketSend",
            EventKind::PacketArrive { .. } => "PacketArrive",
            EventKind::MobilityStep => "MobilityStep",
            EventKind::BlockPropose => "BlockPropose",
            EventKind::Vote { .. } => "Vote",
            EventKind::AttackAttempt { .. } => "AttackAttempt",
            EventKind::MetricWindow => "MetricWindow",
            EventKind::RuleTimeout { .. } => "RuleTimeout",
        }
    }
}

#[derive(Debug, Clone)]
pub enum Arrival {
    Pkt(Box<DataPacket>),
    Ctrl(SouthboundMsg),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttackAction {
    Compromise,
    Forge,
}

/// What kind of entity an id names, with its index into the world's
/// per-class storage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Class {
    Controller,
    Switch(usize),
    Gateway(usize),
    Miner(usize),
    Sensor(usize),
    Attacker(usize),
}

#[derive(Debug)]
struct MinerNode {
    id: EntityId,
    pos: Position,
    alive: bool,
    /// A compromised miner is dead *and* its signing key is in the
    /// attacker's hands.
    controlled: bool,
    key: Keypair,
    replica: Chain,
}

#[derive(Debug)]
struct AttackerNode {
    id: EntityId,
    pos: Position,
}

/// Consensus bookkeeping worth reporting next to the delivery metrics.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConsensusStats {
    pub rounds_started: u64,
    pub rounds_accepted: u64,
    pub rounds_rejected: u64,
    /// Rounds skipped because the scheduled proposer was dead or the pool
    /// had nothing usable.
    pub rounds_skipped: u64,
    pub forge_attempts: u64,
    /// Forgeries that gathered a captured-key quorum at the tally.
    pub forge_quorum: u64,
    /// Individual honest replicas refusing a quorum-bearing forgery.
    pub forge_refused_by_honest: u64,
    /// Commits an honest replica refused (forged or malformed).
    pub commits_refused: u64,
}

/// Everything a finished run hands back to the report layer.
#[derive(Debug)]
pub struct WorldReport {
    pub variant: Variant,
    pub samples: Vec<MetricSample>,
    pub cumulative: Tally,
    pub conservation: ConservationSnapshot,
    pub nodes_failed: u64,
    pub fabric: FabricCounters,
    pub consensus: ConsensusStats,
    pub compromises: Vec<CompromiseEvent>,
    /// The system audit chain (ledger variant only).
    pub chain: Option<Chain>,
    pub events_processed: u64,
    /// One `time<TAB>seq<TAB>target<TAB>kind` line per event, when tracing.
    pub trace: Vec<String>,
}

pub struct World {
    cfg: Scenario,
    variant: Variant,
    queue: EventQueue<EventKind>,
    rng: RngRegistry,
    mobility: MobilityParams,

    controller_id: EntityId,
    controller: ControllerState,
    switches: Vec<Switch>,
    switch_pos: Vec<Position>,
    gateways: Vec<SensorNode>,
    gateway_keys: Vec<Keypair>,
    sensors: Vec<SensorNode>,
    miners: Vec<MinerNode>,
    attackers: Vec<AttackerNode>,
    /// Directed wired links: (from, to) for every adjacent switch pair and
    /// every endpoint attachment, both directions.
    links: BTreeMap<(u64, u64), LinkState>,
    /// Endpoint → attachment switch (the world's copy; the controller keeps
    /// its own view that decays as PortStatus messages arrive).
    attach: BTreeMap<u64, EntityId>,

    canonical: Option<Chain>,
    pool: VecDeque<Transaction>,
    rotation: ProposerRotation,
    current_round: Option<Round>,
    next_round_id: u64,

    metrics: Metrics,
    fabric: FabricCounters,
    consensus_stats: ConsensusStats,
    compromises: Vec<CompromiseEvent>,
    next_pkt_id: u64,
    last_window_close: SimTime,
    events_processed: u64,
    tracing: bool,
    trace: Vec<String>,
}

impl World {
    pub fn new(cfg: &Scenario, variant: Variant) -> World {
        let cfg = cfg.clone();
        let s = cfg.switches as u64;
        let g = cfg.gateways as u64;
        let m = cfg.miners as u64;
        let n = cfg.sensors as u64;
        let a = u64::from(cfg.attack.attacker_count);
        let total_entities = 1 + s + g + m + n + a;

        let mut rng = RngRegistry::new(cfg.seed);
        for id in 0..total_entities {
            rng.register(id);
        }
        rng.register(TAMPER_STREAM);

        // --- placement ---------------------------------------------------
        let switch_pos = grid_positions(cfg.switches, cfg.field_width_m, cfg.field_height_m);
        let gateway_pos = grid_positions(cfg.gateways, cfg.field_width_m, cfg.field_height_m);
        let miner_pos = grid_positions(cfg.miners, cfg.field_width_m, cfg.field_height_m);

        let switch_base = 1u64;
        let gateway_base = switch_base + s;
        let miner_base = gateway_base + g;
        let sensor_base = miner_base + m;
        let attacker_base = sensor_base + n;

        let switches: Vec<Switch> = (0..s)
            .map(|i| Switch::new(EntityId(switch_base + i)))
            .collect();

        let mut gateways = Vec::with_capacity(cfg.gateways as usize);
        let mut gateway_keys = Vec::with_capacity(cfg.gateways as usize);
        for (i, pos) in gateway_pos.iter().enumerate() {
            let id = EntityId(gateway_base + i as u64);
            gateways.push(SensorNode::stationary(id, pos.x, pos.y, NodeRole::Gateway));
            gateway_keys.push(Keypair::from_rng(
                cfg.sig_scheme(),
                rng.stream(id.0).unwrap(),
            ));
        }

        let scheme = cfg.sig_scheme();
        let tau_bp = cfg.tau_bp();
        let mut miners = Vec::with_capacity(cfg.miners as usize);
        for (i, pos) in miner_pos.iter().enumerate() {
            let id = EntityId(miner_base + i as u64);
            let key = Keypair::from_rng(scheme, rng.stream(id.0).unwrap());
            miners.push(MinerNode {
                id,
                pos: *pos,
                alive: true,
                controlled: false,
                key,
                replica: Chain::new(scheme, tau_bp, m),
            });
        }
        let mut canonical = (variant == Variant::Distb).then(|| Chain::new(scheme, tau_bp, m));
        for miner in &miners {
            let pk = miner.key.public();
            if let Some(chain) = canonical.as_mut() {
                chain.register_miner(miner.id, pk);
            }
        }
        // Every replica knows every miner key.
        let registry: Vec<(EntityId, [u8; 32])> =
            miners.iter().map(|mn| (mn.id, mn.key.public())).collect();
        for miner in &mut miners {
            for (id, pk) in &registry {
                miner.replica.register_miner(*id, *pk);
            }
        }

        let mut sensors = Vec::with_capacity(cfg.sensors as usize);
        for i in 0..n {
            let id = EntityId(sensor_base + i);
            let stream = rng.stream(id.0).unwrap();
            let x = stream.uniform(0.0, cfg.field_width_m);
            let y = stream.uniform(0.0, cfg.field_height_m);
            let mut node = SensorNode::stationary(id, x, y, NodeRole::Sensor);
            node.gen_interval = SimTime(cfg.gen_interval_ms);
            node.packet_size = cfg.packet_size_bytes;
            node.radio_range = cfg.radio_range_m;
            sensors.push(node);
        }

        let mut attackers = Vec::with_capacity(cfg.attack.attacker_count as usize);
        for i in 0..a {
            let id = EntityId(attacker_base + i);
            let stream = rng.stream(id.0).unwrap();
            let x = stream.uniform(0.0, cfg.field_width_m);
            let y = stream.uniform(0.0, cfg.field_height_m);
            attackers.push(AttackerNode {
                id,
                pos: Position { x, y },
            });
        }

        // --- wiring -------------------------------------------------------
        fn wire(
            links: &mut BTreeMap<(u64, u64), LinkState>,
            proto: LinkState,
            a: EntityId,
            b: EntityId,
        ) {
            links.insert((a.0, b.0), proto);
            links.insert((b.0, a.0), proto);
        }
        let proto = LinkState::new(
            SimTime(cfg.link_latency_ms),
            cfg.link_capacity_pps,
            cfg.link_queue_limit,
        );
        let mut controller = ControllerState::new(SimTime(cfg.rule_idle_timeout_ms));
        for sw in &switches {
            controller.add_switch(sw.id);
        }
        let cols = (cfg.switches as f64).sqrt().ceil() as usize;
        let mut links = BTreeMap::new();
        for i in 0..switches.len() {
            if (i + 1) % cols != 0 && i + 1 < switches.len() {
                wire(&mut links, proto, switches[i].id, switches[i + 1].id);
                controller.add_link(switches[i].id, switches[i + 1].id);
            }
            if i + cols < switches.len() {
                wire(&mut links, proto, switches[i].id, switches[i + cols].id);
                controller.add_link(switches[i].id, switches[i + cols].id);
            }
        }

        let controller_id = EntityId(0);
        let controller_pos = Position {
            x: cfg.field_width_m / 2.0,
            y: cfg.field_height_m / 2.0,
        };
        let mut attach = BTreeMap::new();
        let mut endpoints: Vec<(EntityId, Position)> = vec![(controller_id, controller_pos)];
        endpoints.extend(gateways.iter().map(|gw| (gw.id, gw.pos)));
        endpoints.extend(miners.iter().map(|mn| (mn.id, mn.pos)));
        for (id, pos) in endpoints {
            let sw = nearest_index(&switch_pos, pos);
            let sw_id = EntityId(switch_base + sw as u64);
            wire(&mut links, proto, id, sw_id);
            controller.attach_endpoint(id, sw_id);
            attach.insert(id.0, sw_id);
        }

        // --- initial schedule ----------------------------------------------
        let mut queue = EventQueue::new();
        for i in 0..sensors.len() {
            let id = sensors[i].id;
            let offset = rng.stream(id.0).unwrap().below(cfg.gen_interval_ms.max(1));
            queue
                .schedule(SimTime(offset), id, EventKind::PacketSend)
                .unwrap();
            queue
                .schedule(SimTime(cfg.mobility_step_ms), id, EventKind::MobilityStep)
                .unwrap();
        }
        queue
            .schedule(
                SimTime::from_secs(cfg.metric_window_s),
                controller_id,
                EventKind::MetricWindow,
            )
            .unwrap();
        if variant == Variant::Distb {
            queue
                .schedule(
                    SimTime(cfg.round_period_ms),
                    controller_id,
                    EventKind::BlockPropose,
                )
                .unwrap();
        }
        let p = &cfg.attack;
        for atk in &attackers {
            if p.flood_rate > 0.0 {
                queue
                    .schedule(
                        SimTime(interval_ms(p.flood_rate)),
                        atk.id,
                        EventKind::PacketSend,
                    )
                    .unwrap();
            }
            if p.compromise_attempt_rate > 0.0 {
                queue
                    .schedule(
                        SimTime(interval_ms(p.compromise_attempt_rate)),
                        atk.id,
                        EventKind::AttackAttempt {
                            action: AttackAction::Compromise,
                        },
                    )
                    .unwrap();
            }
            if p.forge_block_rate > 0.0 && variant == Variant::Distb {
                queue
                    .schedule(
                        SimTime(interval_ms(p.forge_block_rate)),
                        atk.id,
                        EventKind::AttackAttempt {
                            action: AttackAction::Forge,
                        },
                    )
                    .unwrap();
            }
        }

        let miner_ids: Vec<EntityId> = miners.iter().map(|mn| mn.id).collect();
        let nodes_total = cfg.nodes_total();
        let mobility = MobilityParams {
            field_w: cfg.field_width_m,
            field_h: cfg.field_height_m,
            speed_min: cfg.speed_min_mps,
            speed_max: cfg.speed_max_mps,
            pause_min_ms: cfg.pause_min_ms,
            pause_max_ms: cfg.pause_max_ms,
        };

        World {
            cfg,
            variant,
            queue,
            rng,
            mobility,
            controller_id,
            controller,
            switches,
            switch_pos,
            gateways,
            gateway_keys,
            sensors,
            miners,
            attackers,
            links,
            attach,
            canonical,
            pool: VecDeque::new(),
            rotation: ProposerRotation::new(miner_ids),
            current_round: None,
            next_round_id: 0,
            metrics: Metrics::new(variant, nodes_total),
            fabric: FabricCounters::default(),
            consensus_stats: ConsensusStats::default(),
            compromises: Vec::new(),
            next_pkt_id: 0,
            last_window_close: SimTime::ZERO,
            events_processed: 0,
            tracing: false,
            trace: Vec::new(),
        }
    }

    pub fn set_tracing(&mut self, on: bool) {
        self.tracing = on;
    }

    /// Runs to the configured horizon and reports. Consumes the world: a
    /// run is not resumable, by design — reproduce it from the scenario.
    /// Drains the event queue to the configured end time and reports.
    /// The world survives the run, so post-mortem queries (northbound
    /// dump, per-entity state) stay available.
    pub fn run_to_end(&mut self) -> WorldReport {
        let t_end = SimTime::from_secs(self.cfg.duration_s);
        while let Some(ev) = self.queue.pop_due(t_end) {
            self.events_processed += 1;
            if self.tracing {
                self.trace.push(format!(
                    "{}\t{}\t{}\t{}",
                    ev.time.as_ms(),
                    ev.seq,
                    ev.target.0,
                    ev.kind.name()
                ));
            }
            self.dispatch(ev.time, ev.target, ev.kind);
        }
        self.queue.finish_at(t_end);
        if self.last_window_close < t_end {
            self.close_window(t_end);
        }
        WorldReport {
            variant: self.variant,
            samples: self.metrics.samples().to_vec(),
            cumulative: self.metrics.cumulative(),
            conservation: self.metrics.conservation(),
            nodes_failed: self.metrics.nodes_failed(),
            fabric: self.fabric,
            consensus: self.consensus_stats,
            compromises: std::mem::take(&mut self.compromises),
            chain: self.canonical.take(),
            events_processed: self.events_processed,
            trace: std::mem::take(&mut self.trace),
        }
    }

    /// Northbound query: controller topology view, live per-switch flow
    /// tables (which can lag the controller's mirror when FlowMods were
    /// lost or rules expired), and control-plane counters.
    pub fn northbound_dump(&self) -> String {
        let mut out = format!("== northbound, variant {} ==\n", self.variant);
        out.push_str(&self.controller.northbound_dump());
        out.push_str("flow tables (switch-resident):\n");
        for sw in &self.switches {
            out.push_str(&format!(
                "  switch {} {}: {} rules, {} buffered\n",
                sw.id.0,
                if sw.alive { "up" } else { "down" },
                sw.rules.len(),
                sw.pending.len()
            ));
            for r in &sw.rules {
                out.push_str(&format!("    {}\n", fabric::describe_rule(r)));
            }
        }
        let f = self.fabric;
        out.push_str(&format!(
            "counters:\n  packet-ins {}  flow-mods {} (lost {})  port-status {}  rules expired {}\n",
            f.packet_ins, f.flow_mods, f.flow_mods_lost, f.port_status, f.rules_expired
        ));
        out
    }

    // --- identity ---------------------------------------------------------

    fn class(&self, id: EntityId) -> Class {
        let s = self.switches.len() as u64;
        let g = self.gateways.len() as u64;
        let m = self.miners.len() as u64;
        let n = self.sensors.len() as u64;
        let v = id.0;
        if v == 0 {
            Class::Controller
        } else if v <= s {
            Class::Switch((v - 1) as usize)
        } else if v <= s + g {
            Class::Gateway((v - 1 - s) as usize)
        } else if v <= s + g + m {
            Class::Miner((v - 1 - s - g) as usize)
        } else if v <= s + g + m + n {
            Class::Sensor((v - 1 - s - g - m) as usize)
        } else {
            Class::Attacker((v - 1 - s - g - m - n) as usize)
        }
    }

    fn entity_alive(&self, id: EntityId) -> bool {
        match self.class(id) {
            Class::Controller => true,
            Class::Switch(i) => self.switches[i].alive,
            Class::Gateway(i) => self.gateways[i].alive,
            Class::Miner(i) => self.miners[i].alive,
            Class::Sensor(i) => self.sensors[i].alive,
            Class::Attacker(_) => true,
        }
    }

    // --- dispatch -----------------------------------------------------------

    fn dispatch(&mut self, now: SimTime, target: EntityId, kind: EventKind) {
        match kind {
            EventKind::PacketSend => match self.class(target) {
                Class::Sensor(i) => self.sensor_send(now, i),
                Class::Attacker(i) => self.attacker_flood(now, i),
                other => panic!("PacketSend scheduled at {other:?}"),
            },
            EventKind::PacketArrive { arrival } => match arrival {
                Arrival::Pkt(pkt) => self.packet_arrive(now, target, *pkt),
                Arrival::Ctrl(msg) => self.control_arrive(now, target, msg),
            },
            EventKind::MobilityStep => {
                let Class::Sensor(i) = self.class(target) else {
                    panic!("MobilityStep scheduled at non-sensor {target}");
                };
                if self.sensors[i].alive {
                    let id = self.sensors[i].id;
                    let stream = self.rng.stream(id.0).unwrap();
                    self.sensors[i].step_mobility(
                        now,
                        SimTime(self.cfg.mobility_step_ms),
                        &self.mobility,
                        stream,
                    );
                    self.queue
                        .schedule(
                            now + SimTime(self.cfg.mobility_step_ms),
                            id,
                            EventKind::MobilityStep,
                        )
                        .unwrap();
                }
            }
            EventKind::BlockPropose => self.block_propose(now),
            EventKind::Vote { round_id, block } => self.miner_vote(now, target, round_id, *block),
            EventKind::AttackAttempt { action } => {
                let Class::Attacker(i) = self.class(target) else {
                    panic!("AttackAttempt scheduled at non-attacker {target}");
                };
                match action {
                    AttackAction::Compromise => self.attacker_compromise(now, i),
                    AttackAction::Forge => self.attacker_forge(now, i),
                }
            }
            EventKind::MetricWindow => {
                self.close_window(now);
                let next = now + SimTime::from_secs(self.cfg.metric_window_s);
                if next <= SimTime::from_secs(self.cfg.duration_s) {
                    self.queue
                        .schedule(next, self.controller_id, EventKind::MetricWindow)
                        .unwrap();
                }
            }
            EventKind::RuleTimeout { rule_id } => {
                let Class::Switch(i) = self.class(target) else {
                    panic!("RuleTimeout scheduled at non-switch {target}");
                };
                let sw = &mut self.switches[i];
                if let Some(rule) = sw.rules.iter().find(|r| r.rule_id == rule_id).copied() {
                    if rule.expired(now) {
                        sw.rules.retain(|r| r.rule_id != rule_id);
                        self.fabric.rules_expired += 1;
                    } else {
                        // Hit since scheduled; try again one tick past its
                        // earliest possible expiry.
                        self.queue
                            .schedule(
                                rule.last_hit + rule.idle_timeout + SimTime(1),
                                target,
                                EventKind::RuleTimeout { rule_id },
                            )
                            .unwrap();
                    }
                }
            }
        }
    }

    fn close_window(&mut self, now: SimTime) {
        let sample = self.metrics.close_window(now);
        let snap = self.metrics.conservation();
        assert!(
            snap.holds(),
            "packet conservation violated at {now}: {snap:?} (window {sample:?})"
        );
        self.last_window_close = now;
    }

    // --- traffic ------------------------------------------------------------

    fn fresh_pkt_id(&mut self) -> u64 {
        let id = self.next_pkt_id;
        self.next_pkt_id += 1;
        id
    }

    /// Nearest alive gateway to `pos`, by distance then id.
    fn nearest_gateway(&self, pos: Position) -> Option<(EntityId, f64)> {
        self.gateways
            .iter()
            .filter(|gw| gw.alive)
            .map(|gw| (gw.id, gw.pos.dist(pos)))
            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)))
    }

    /// Nearest alive switch within radio range of `pos`.
    fn nearest_switch_in_range(&self, pos: Position, range: f64) -> Option<EntityId> {
        self.switches
            .iter()
            .zip(&self.switch_pos)
            .filter(|(sw, sp)| sw.alive && sp.dist(pos) <= range)
            .map(|(sw, sp)| (sw.id, sp.dist(pos)))
            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)))
            .map(|(id, _)| id)
    }

    fn sensor_send(&mut self, now: SimTime, i: usize) {
        if !self.sensors[i].alive {
            return; // dead sensors emit nothing, and stop rescheduling
        }
        let pkt_id = self.fresh_pkt_id();
        let pos = self.sensors[i].pos;
        let range = self.sensors[i].radio_range;

        match self.nearest_gateway(pos) {
            None => {
                // Nothing left to deliver to; the reading is generated and
                // immediately lost.
                self.metrics.record_sent(pkt_id);
                self.metrics.record_dropped(pkt_id, DropReason::NoRoute);
            }
            Some((gw, dist)) => {
                let mut pkt = generate_packet(&self.sensors[i], pkt_id, gw, now);
                self.metrics.record_sent(pkt_id);
                self.maybe_tamper(&mut pkt);
                if dist <= range {
                    // Single radio hop straight to the gateway.
                    self.schedule_arrival(now + SimTime(self.cfg.radio_latency_ms), gw, pkt);
                } else if let Some(sw) = self.nearest_switch_in_range(pos, range) {
                    self.schedule_arrival(now + SimTime(self.cfg.radio_latency_ms), sw, pkt);
                } else {
                    // Out of range of everything: a coverage hole.
                    self.metrics.record_dropped(pkt_id, DropReason::NoRoute);
                }
            }
        }
        let next = now + SimTime(self.cfg.gen_interval_ms);
        self.queue
            .schedule(next, self.sensors[i].id, EventKind::PacketSend)
            .unwrap();
    }

    fn attacker_flood(&mut self, now: SimTime, i: usize) {
        let atk = self.attackers[i].id;
        let pos = self.attackers[i].pos;
        let alive_gws: Vec<EntityId> = self
            .gateways
            .iter()
            .filter(|gw| gw.alive)
            .map(|gw| gw.id)
            .collect();
        if !alive_gws.is_empty() {
            let stream = self.rng.stream(atk.0).unwrap();
            let dst = alive_gws[stream.below(alive_gws.len() as u64) as usize];
            let pkt_id = self.fresh_pkt_id();
            let junk = adversary::junk_packet(
                atk,
                pkt_id,
                dst,
                self.cfg.packet_size_bytes,
                now,
                self.rng.stream(atk.0).unwrap(),
            );
            // The attacker's transmitter reaches the fabric from anywhere.
            if let Some(sw) = self.nearest_switch_any(pos) {
                self.schedule_arrival(now + SimTime(self.cfg.radio_latency_ms), sw, junk);
            }
        }
        self.queue
            .schedule(
                now + SimTime(interval_ms(self.cfg.attack.flood_rate)),
                atk,
                EventKind::PacketSend,
            )
            .unwrap();
    }

    fn nearest_switch_any(&self, pos: Position) -> Option<EntityId> {
        self.switches
            .iter()
            .zip(&self.switch_pos)
            .filter(|(sw, _)| sw.alive)
            .map(|(sw, sp)| (sw.id, sp.dist(pos)))
            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)))
            .map(|(id, _)| id)
    }

    fn schedule_arrival(&mut self, at: SimTime, target: EntityId, pkt: DataPacket) {
        self.queue
            .schedule(
                at,
                target,
                EventKind::PacketArrive {
                    arrival: Arrival::Pkt(Box::new(pkt)),
                },
            )
            .unwrap();
    }

    fn schedule_ctrl(&mut self, at: SimTime, target: EntityId, msg: SouthboundMsg) {
        self.queue
            .schedule(
                at,
                target,
                EventKind::PacketArrive {
                    arrival: Arrival::Ctrl(msg),
                },
            )
            .unwrap();
    }

    /// Terminal loss for counted packets; junk and ledger traffic vanish
    /// without accounting.
    fn lose(&mut self, pkt: &DataPacket, reason: DropReason) {
        if pkt.counted {
            self.metrics.record_dropped(pkt.pkt_id, reason);
        }
    }

    /// Pushes a packet onto the directed wired link `from → to`.
    fn wired_send(&mut self, now: SimTime, from: EntityId, to: EntityId, pkt: DataPacket) {
        let link = self
            .links
            .get_mut(&(from.0, to.0))
            .unwrap_or_else(|| panic!("no wired link {from} -> {to}"));
        match link.enqueue(now) {
            Err(_) => self.lose(&pkt, DropReason::Congestion),
            Ok(arrival) => self.schedule_arrival(arrival, to, pkt),
        }
    }

    /// Rolls the per-packet in-flight corruption. One draw per sensor
    /// packet, taken at origination in generation order, so the tamper
    /// schedule is identical across variants of the same seed.
    fn maybe_tamper(&mut self, pkt: &mut DataPacket) {
        let p = &self.cfg.attack;
        if p.attacker_count > 0
            && p.tamper_prob > 0.0
            && self
                .rng
                .stream(TAMPER_STREAM)
                .unwrap()
                .chance(p.tamper_prob)
        {
            adversary::tamper(pkt, self.rng.stream(TAMPER_STREAM).unwrap());
        }
    }

    fn packet_arrive(&mut self, now: SimTime, target: EntityId, pkt: DataPacket) {
        match self.class(target) {
            Class::Switch(i) => self.switch_handle(now, i, pkt),
            Class::Gateway(i) => self.gateway_deliver(now, i, pkt),
            Class::Miner(i) => self.miner_receive(now, i, pkt),
            Class::Controller => self.controller_receive(now, pkt),
            other => panic!("packet arrived at {other:?}"),
        }
    }

    fn switch_handle(&mut self, now: SimTime, i: usize, pkt: DataPacket) {
        if !self.switches[i].alive {
            return self.lose(&pkt, DropReason::NoRoute);
        }
        let sw_id = self.switches[i].id;
        match self.switches[i].match_packet(&pkt, now) {
            Some(Action::Forward(next)) => self.wired_send(now, sw_id, next, pkt),
            Some(Action::Drop) => self.lose(&pkt, DropReason::NoRoute),
            Some(Action::ToController) | None => {
                if self.switches[i].pending.len() >= self.switches[i].pending_limit {
                    return self.lose(&pkt, DropReason::Congestion);
                }
                let header = PacketHeader::from(&pkt);
                self.switches[i].pending.push(pkt);
                self.fabric.packet_ins += 1;
                self.schedule_ctrl(
                    now + SimTime(self.cfg.ctrl_latency_ms),
                    self.controller_id,
                    SouthboundMsg {
                        switch: sw_id,
                        body: SouthboundBody::PacketIn { header },
                    },
                );
            }
        }
    }

    fn control_arrive(&mut self, now: SimTime, target: EntityId, msg: SouthboundMsg) {
        match self.class(target) {
            Class::Controller => match msg.body {
                SouthboundBody::PacketIn { header } => {
                    let resp = self.controller.handle_packet_in(msg.switch, header, now);
                    self.fabric.flow_mods += resp.flow_mods.len() as u64;
                    for fm in resp.flow_mods {
                        let to = fm.switch;
                        self.schedule_ctrl(now + SimTime(self.cfg.ctrl_latency_ms), to, fm);
                    }
                }
                SouthboundBody::PortStatus { down } => {
                    let fms = self.controller.handle_port_status(down, now);
                    self.fabric.flow_mods += fms.len() as u64;
                    for fm in fms {
                        let to = fm.switch;
                        self.schedule_ctrl(now + SimTime(self.cfg.ctrl_latency_ms), to, fm);
                    }
                }
                SouthboundBody::FlowMod { .. } => panic!("FlowMod addressed to the controller"),
            },
            Class::Switch(i) => {
                let SouthboundBody::FlowMod { rule } = msg.body else {
                    panic!("switch received non-FlowMod control traffic");
                };
                if !self.switches[i].alive {
                    self.fabric.flow_mods_lost += 1;
                    return;
                }
                let sw_id = self.switches[i].id;
                let rule_id = rule.rule_id;
                self.switches[i].install_rule(rule);
                self.queue
                    .schedule(
                        now + rule.idle_timeout + SimTime(1),
                        sw_id,
                        EventKind::RuleTimeout { rule_id },
                    )
                    .unwrap();
                // Re-match everything the switch was holding for the
                // controller; packets the new rule covers move on.
                let mut still_pending = Vec::new();
                let pending = std::mem::take(&mut self.switches[i].pending);
                for pkt in pending {
                    match self.switches[i].match_packet(&pkt, now) {
                        Some(Action::Forward(next)) => self.wired_send(now, sw_id, next, pkt),
                        Some(Action::Drop) => self.lose(&pkt, DropReason::NoRoute),
                        Some(Action::ToController) | None => still_pending.push(pkt),
                    }
                }
                self.switches[i].pending = still_pending;
            }
            other => panic!("control message arrived at {other:?}"),
        }
    }

    fn gateway_deliver(&mut self, now: SimTime, i: usize, pkt: DataPacket) {
        if !self.gateways[i].alive {
            return self.lose(&pkt, DropReason::NoRoute);
        }
        debug_assert_eq!(
            pkt.dst, self.gateways[i].id,
            "flow rules misrouted a packet"
        );
        if pkt.kind != PacketKind::Data || !pkt.counted {
            return; // junk: both variants discard silently at the edge
        }
        let verified = pkt.digest_now == pkt.payload_digest;
        match (self.variant, verified) {
            (_, true) => {
                self.metrics.record_delivered(pkt.pkt_id, true);
                if self.variant == Variant::Distb {
                    self.submit_tx(now, i, &pkt);
                }
            }
            (Variant::Core, false) => {
                // No ledger, no grounds to refuse: delivered, insecurely.
                self.metrics.record_delivered(pkt.pkt_id, false);
            }
            (Variant::Distb, false) => {
                self.metrics
                    .record_dropped(pkt.pkt_id, DropReason::Security);
            }
        }
    }

    /// A verified delivery becomes a gateway-witnessed transaction headed
    /// for the system transaction pool.
    fn submit_tx(&mut self, now: SimTime, gw_idx: usize, pkt: &DataPacket) {
        let gw = self.gateways[gw_idx].id;
        let tx = Transaction::new_signed(
            pkt.src,
            pkt.pkt_id,
            pkt.payload_digest,
            now,
            &self.gateway_keys[gw_idx],
        );
        let pkt_id = self.fresh_pkt_id();
        let lp = ledger_packet(
            gw,
            self.controller_id,
            pkt_id,
            now,
            LedgerBody::TxSubmit(tx),
        );
        self.endpoint_send(now, gw, lp);
    }

    /// First wired hop out of an endpoint (gateway, miner, controller) into
    /// its attachment switch.
    fn endpoint_send(&mut self, now: SimTime, from: EntityId, pkt: DataPacket) {
        let Some(&sw) = self.attach.get(&from.0) else {
            return self.lose(&pkt, DropReason::NoRoute);
        };
        if !self.entity_alive(sw) {
            return self.lose(&pkt, DropReason::NoRoute);
        }
        self.wired_send(now, from, sw, pkt);
    }

    fn controller_receive(&mut self, _now: SimTime, pkt: DataPacket) {
        let Some(body) = pkt.ledger else {
            return; // stray data packet addressed to the controller: ignore
        };
        if let LedgerBody::TxSubmit(tx) = *body {
            self.pool.push_back(tx);
        }
    }

    // --- consensus ----------------------------------------------------------

    fn miner_receive(&mut self, now: SimTime, i: usize, pkt: DataPacket) {
        if !self.miners[i].alive {
            return; // packets to dead miners are lost
        }
        let Some(body) = pkt.ledger else {
            return;
        };
        match *body {
            LedgerBody::Proposal { round_id, block } => {
                self.sync_replica(i, block.header.height.saturating_sub(1));
                let at = now + SimTime(self.cfg.vote_delay_ms);
                let miner = self.miners[i].id;
                self.queue
                    .schedule(
                        at,
                        miner,
                        EventKind::Vote {
                            round_id,
                            block: Box::new(block),
                        },
                    )
                    .unwrap();
            }
            LedgerBody::VoteMsg { round_id, vote } => {
                let Some(round) = self.current_round.as_mut() else {
                    return; // vote for a round already tallied: late = absent
                };
                if round.round_id == round_id && round.proposer == self.miners[i].id {
                    round.votes.push(vote);
                }
            }
            LedgerBody::Commit { block } => {
                // The next round's proposal can overtake this commit on a
                // shorter path and heal the replica first; a commit for a
                // block already sealed locally is a duplicate, not a refusal.
                let h = block.header.height;
                let have = self.miners[i].replica.get(h).map(|b| hash_block(&b.header));
                if have == Some(hash_block(&block.header)) {
                    return;
                }
                self.sync_replica(i, h.saturating_sub(1));
                if self.miners[i].replica.adopt(block).is_err() {
                    self.consensus_stats.commits_refused += 1;
                }
            }
            LedgerBody::TxSubmit(_) => {} // miners are not the pool
        }
    }

    /// Copies any blocks the replica is missing below `target_height` from
    /// the system chain. Stands in for the out-of-band catch-up a stale
    /// miner performs when a newer block reveals the gap; every copied
    /// block still passes the replica's own validation and evidence check.
    fn sync_replica(&mut self, i: usize, target_height: u64) {
        let Some(canonical) = self.canonical.as_ref() else {
            return;
        };
        let have = self.miners[i].replica.height();
        if have >= target_height {
            return;
        }
        let missing: Vec<_> = (have + 1..=target_height)
            .filter_map(|h| canonical.get(h).cloned())
            .collect();
        for block in missing {
            if self.miners[i].replica.adopt(block).is_err() {
                self.consensus_stats.commits_refused += 1;
                return;
            }
        }
    }

    fn miner_vote(
        &mut self,
        now: SimTime,
        target: EntityId,
        round_id: u64,
        block: crate::ledger::Block,
    ) {
        let Class::Miner(i) = self.class(target) else {
            panic!("Vote scheduled at non-miner {target}");
        };
        if !self.miners[i].alive {
            return;
        }
        let vote = consensus::cast_vote(
            self.miners[i].id,
            &self.miners[i].key,
            &self.miners[i].replica,
            &block,
            false,
            false,
        );
        let proposer = block.header.miner;
        if proposer == self.miners[i].id {
            return; // the proposer's own vote was recorded at propose time
        }
        let pkt_id = self.fresh_pkt_id();
        let lp = ledger_packet(
            self.miners[i].id,
            proposer,
            pkt_id,
            now,
            LedgerBody::VoteMsg { round_id, vote },
        );
        self.endpoint_send(now, self.miners[i].id, lp);
    }

    fn block_propose(&mut self, now: SimTime) {
        self.finalize_round(now);
        self.start_round(now);
        self.queue
            .schedule(
                now + SimTime(self.cfg.round_period_ms),
                self.controller_id,
                EventKind::BlockPropose,
            )
            .unwrap();
    }

    fn finalize_round(&mut self, _now: SimTime) {
        let Some(round) = self.current_round.take() else {
            return;
        };
        let canonical = self
            .canonical
            .as_mut()
            .expect("rounds run on the ledger variant");
        let tally = consensus::tally(
            &round.votes,
            round.block_hash,
            canonical.miners_total(),
            canonical.tau_bp(),
        );
        if tally.accepted {
            let mut block = round.block;
            block.votes = round.votes;
            canonical
                .append(block.clone(), &tally)
                .expect("a quorum-carrying honest block must append");
            self.consensus_stats.rounds_accepted += 1;
            // Commit fans out to every other alive miner; each re-validates
            // and adopts into its own replica on receipt.
            let proposer = round.proposer;
            let targets: Vec<EntityId> = self
                .miners
                .iter()
                .filter(|mn| mn.alive && mn.id != proposer)
                .map(|mn| mn.id)
                .collect();
            for to in targets {
                let pkt_id = self.fresh_pkt_id();
                let lp = ledger_packet(
                    proposer,
                    to,
                    pkt_id,
                    _now,
                    LedgerBody::Commit {
                        block: block.clone(),
                    },
                );
                self.endpoint_send(_now, proposer, lp);
            }
            // The proposer's own replica takes the block directly.
            if let Class::Miner(pi) = self.class(proposer) {
                let _ = self.miners[pi].replica.adopt(block);
            }
        } else {
            self.consensus_stats.rounds_rejected += 1;
            // The transactions were not sealed; they go back to the front
            // of the pool in their original order for the next proposer.
            for tx in round.block.txs.into_iter().rev() {
                self.pool.push_front(tx);
            }
        }
    }

    fn start_round(&mut self, now: SimTime) {
        if self.canonical.is_none() {
            return;
        }
        // Rotation advances every period; dead or captured proposers forfeit
        // their slot (at worst one full cycle of skips).
        let mut proposer = None;
        for _ in 0..self.miners.len() {
            let cand = self.rotation.next();
            let Class::Miner(ci) = self.class(cand) else {
                unreachable!()
            };
            if self.miners[ci].alive && !self.miners[ci].controlled {
                proposer = Some((cand, ci));
                break;
            }
        }
        let Some((proposer, pi)) = proposer else {
            self.consensus_stats.rounds_skipped += 1;
            return;
        };

        // The proposer must build on the freshest sealed state it can see.
        let canonical_height = self.canonical.as_ref().unwrap().height();
        self.sync_replica(pi, canonical_height);

        let canonical = self.canonical.as_ref().unwrap();
        let Some(block) = consensus::propose_block(
            canonical,
            proposer,
            now,
            &mut self.pool,
            self.cfg.max_block_txs,
        ) else {
            self.consensus_stats.rounds_skipped += 1;
            return;
        };

        let round_id = self.next_round_id;
        self.next_round_id += 1;
        self.consensus_stats.rounds_started += 1;
        let block_hash = hash_block(&block.header);
        let self_vote = consensus::cast_vote(
            proposer,
            &self.miners[pi].key,
            &self.miners[pi].replica,
            &block,
            false,
            false,
        );
        self.current_round = Some(Round {
            round_id,
            proposer,
            deadline: now + SimTime(self.cfg.round_period_ms),
            block_hash,
            block: block.clone(),
            forged: false,
            votes: vec![self_vote],
        });

        let targets: Vec<EntityId> = self
            .miners
            .iter()
            .filter(|mn| mn.alive && mn.id != proposer)
            .map(|mn| mn.id)
            .collect();
        for to in targets {
            let pkt_id = self.fresh_pkt_id();
            let lp = ledger_packet(
                proposer,
                to,
                pkt_id,
                now,
                LedgerBody::Proposal {
                    round_id,
                    block: block.clone(),
                },
            );
            self.endpoint_send(now, proposer, lp);
        }
    }

    // --- attacks --------------------------------------------------------------

    fn attacker_compromise(&mut self, now: SimTime, i: usize) {
        let atk = self.attackers[i].id;
        // The protected population: everything alive that is not the
        // controller and not an attacker.
        let candidates: Vec<EntityId> = self
            .switches
            .iter()
            .map(|sw| (sw.id, sw.alive))
            .chain(self.gateways.iter().map(|gw| (gw.id, gw.alive)))
            .chain(self.miners.iter().map(|mn| (mn.id, mn.alive)))
            .chain(self.sensors.iter().map(|sn| (sn.id, sn.alive)))
            .filter(|(_, alive)| *alive)
            .map(|(id, _)| id)
            .collect();
        if !candidates.is_empty() {
            let stream = self.rng.stream(atk.0).unwrap();
            let target = candidates[stream.below(candidates.len() as u64) as usize];
            let ev = adversary::attempt_compromise(
                self.rng.stream(atk.0).unwrap(),
                target,
                self.cfg.attack.success_prob(self.variant),
                now,
                self.variant == Variant::Distb,
            );
            self.compromises.push(ev);
            if ev.succeeded {
                self.kill_node(now, target);
            }
        }
        self.queue
            .schedule(
                now + SimTime(interval_ms(self.cfg.attack.compromise_attempt_rate)),
                atk,
                EventKind::AttackAttempt {
                    action: AttackAction::Compromise,
                },
            )
            .unwrap();
    }

    /// Takes a node off the network at `now`. Public because it *is* the
    /// compromise effect, and tests drive specific failures through it.
    pub fn kill_node(&mut self, now: SimTime, target: EntityId) {
        match self.class(target) {
            Class::Sensor(i) => {
                if !self.sensors[i].alive {
                    return;
                }
                self.sensors[i].alive = false;
            }
            Class::Gateway(i) => {
                if !self.gateways[i].alive {
                    return;
                }
                self.gateways[i].alive = false;
                self.notify_port_down(now, target);
            }
            Class::Switch(i) => {
                if !self.switches[i].alive {
                    return;
                }
                self.switches[i].alive = false;
                self.switches[i].rules.clear();
                // Everything it was holding for the controller dies with it.
                let pending = std::mem::take(&mut self.switches[i].pending);
                for pkt in pending {
                    self.lose(&pkt, DropReason::NoRoute);
                }
                self.notify_port_down(now, target);
            }
            Class::Miner(i) => {
                if !self.miners[i].alive {
                    return;
                }
                self.miners[i].alive = false;
                // A successful takeover does not just silence the miner —
                // it hands its signing key to the attacker.
                self.miners[i].controlled = true;
                self.notify_port_down(now, target);
            }
            Class::Controller | Class::Attacker(_) => {
                panic!("{target} is not part of the protected population")
            }
        }
        self.metrics.record_node_failed();
    }

    /// The fabric notices a dead node and tells the controller.
    fn notify_port_down(&mut self, now: SimTime, down: EntityId) {
        self.fabric.port_status += 1;
        self.schedule_ctrl(
            now + SimTime(self.cfg.ctrl_latency_ms),
            self.controller_id,
            SouthboundMsg {
                switch: down, // originator slot; the payload names the casualty
                body: SouthboundBody::PortStatus { down },
            },
        );
    }

    fn attacker_forge(&mut self, now: SimTime, i: usize) {
        let atk = self.attackers[i].id;
        if let Some(canonical) = self.canonical.as_ref() {
            self.consensus_stats.forge_attempts += 1;
            let captured: Vec<usize> = (0..self.miners.len())
                .filter(|&mi| self.miners[mi].controlled)
                .collect();
            let identity = captured
                .first()
                .map(|&mi| self.miners[mi].id)
                .unwrap_or(atk);
            let mut forged =
                adversary::forge_block(identity, canonical, now, self.rng.stream(atk.0).unwrap());
            // The attacker votes for its own block with every captured key.
            let forged_hash = hash_block(&forged.header);
            let votes: Vec<Vote> = captured
                .iter()
                .map(|&mi| {
                    consensus::cast_vote(
                        self.miners[mi].id,
                        &self.miners[mi].key,
                        &self.miners[mi].replica,
                        &forged,
                        true, // controlled: loyalty overrides validation
                        true,
                    )
                })
                .collect();
            let tally = consensus::tally(
                &votes,
                forged_hash,
                canonical.miners_total(),
                canonical.tau_bp(),
            );
            if tally.accepted {
                self.consensus_stats.forge_quorum += 1;
                forged.votes = votes;
                // Even a quorum of captured keys cannot push garbage into
                // honest replicas: each one re-validates and refuses.
                let honest: Vec<usize> = (0..self.miners.len())
                    .filter(|&mi| self.miners[mi].alive && !self.miners[mi].controlled)
                    .collect();
                for mi in honest {
                    if self.miners[mi].replica.adopt(forged.clone()).is_err() {
                        self.consensus_stats.forge_refused_by_honest += 1;
                    }
                }
                assert!(
                    self.canonical.as_mut().unwrap().adopt(forged).is_err(),
                    "a forged block must never validate into the system chain"
                );
            }
        }
        self.queue
            .schedule(
                now + SimTime(interval_ms(self.cfg.attack.forge_block_rate)),
                atk,
                EventKind::AttackAttempt {
                    action: AttackAction::Forge,
                },
            )
            .unwrap();
    }
}

/// Fixed event spacing for a per-second rate, minimum one tick.
fn interval_ms(rate_per_s: f64) -> u64 {
    ((1000.0 / rate_per_s).ceil() as u64).max(1)
}

/// Centers of a `ceil(sqrt(n))`-column grid over the field, row-major.
fn grid_positions(n: u32, w: f64, h: f64) -> Vec<Position> {
    let n = n as usize;
    let cols = (n as f64).sqrt().ceil() as usize;
    let rows = n.div_ceil(cols);
    (0..n)
        .map(|i| Position {
            x: (i % cols) as f64 * w / cols as f64 + w / (2.0 * cols as f64),
            y: (i / cols) as f64 * h / rows as f64 + h / (2.0 * rows as f64),
        })
        .collect()
}

fn nearest_index(positions: &[Position], pos: Position) -> usize {
    positions
        .iter()
        .enumerate()
        .min_by(|a, b| {
            a.1.dist(pos)
                .partial_cmp(&b.1.dist(pos))
                .unwrap()
                .then(a.0.cmp(&b.0))
        })
        .map(|(i, _)| i)
        .unwrap()
}

fn ledger_packet(
    src: EntityId,
    dst: EntityId,
    pkt_id: u64,
    now: SimTime,
    body: LedgerBody,
) -> DataPacket {
    DataPacket {
        pkt_id,
        src,
        dst,
        kind: PacketKind::Ledger,
        size: 256,
        created: now,
        payload_digest: [0u8; 32],
        digest_now: [0u8; 32],
        tampered: false,
        counted: false,
        ledger: Some(Box::new(body)),
    }
}
