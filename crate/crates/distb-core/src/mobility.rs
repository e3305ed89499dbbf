//! The perception layer: sensor nodes moving by random waypoint inside the
//! experimental field, generating digested data packets toward gateways.
//!
//! Movement follows the classic random-waypoint cycle: travel in a straight
//! line toward a uniformly drawn waypoint at a uniformly drawn speed, pause
//! on arrival, draw the next waypoint. All draws come from the node's own
//! RNG stream, so one node's trajectory never depends on another's.
//!
//! Packet payloads are never materialized in full. The canonical payload of
//! a packet is defined as counter-mode SHA-256 expansion of
//! `src(8 BE) ∥ pkt_id(8 BE) ∥ block_index(8 BE)` truncated to the packet
//! size, and the packet carries two digests: `payload_digest`, committed at
//! origination, and `digest_now`, the hash the payload bytes *currently in
//! flight* would produce. The two coincide until an adversary mutates the
//! payload; integrity checking compares them, so protocol logic never needs
//! the ground-truth `tampered` flag.

use crate::consensus::LedgerBody;
use crate::crypto::{sha256, Digest, Sha256};
use crate::kernel::{EntityId, SimTime};
use crate::ledger::Hash32;
use crate::rng::RngStream;

/// A point in the field, meters from the south-west corner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub fn dist(self, other: Position) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2)).sqrt()
    }
}

/// Random-waypoint motion state.
#[derive(Debug, Clone, Copy)]
pub struct WaypointState {
    pub waypoint: Position,
    /// Current leg speed, m/s.
    pub speed: f64,
    /// Until this instant the node stands still at its waypoint.
    pub pause_until: SimTime,
}

/// Movement parameters shared by all sensors in a scenario.
#[derive(Debug, Clone, Copy)]
pub struct MobilityParams {
    pub field_w: f64,
    pub field_h: f64,
    pub speed_min: f64,
    pub speed_max: f64,
    pub pause_min_ms: u64,
    pub pause_max_ms: u64,
}

/// Role of a perception-layer node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeRole {
    Sensor,
    Gateway,
}

/// A perception-layer node: moving data source (sensor) or fixed sink
/// (gateway). A dead node generates nothing, forwards nothing, and never
/// moves again.
#[derive(Debug, Clone)]
pub struct SensorNode {
    pub id: EntityId,
    pub pos: Position,
    pub motion: WaypointState,
    pub role: NodeRole,
    pub gen_interval: SimTime,
    pub packet_size: u32,
    pub radio_range: f64,
    pub alive: bool,
}

impl SensorNode {
    /// A node that never moves (gateways, or fixtures in tests): its
    /// waypoint is its position, so mobility steps are no-ops apart from
    /// redrawing a waypoint it will never walk to.
    pub fn stationary(id: EntityId, x: f64, y: f64, role: NodeRole) -> Self {
        let pos = Position { x, y };
        SensorNode {
            id,
            pos,
            motion: WaypointState {
                waypoint: pos,
                speed: 0.0,
                pause_until: SimTime::ZERO,
            },
            role,
            gen_interval: SimTime(1000),
            packet_size: 256,
            radio_range: 250.0,
            alive: true,
        }
    }

    /// Advances the node by `dt` of simulated time ending at `now`.
    ///
    /// Standing at the waypoint with the pause elapsed draws the next
    /// waypoint and speed (position unchanged this step); otherwise the node
    /// moves straight toward the waypoint, clamping at arrival, where the
    /// pause begins.
    pub fn step_mobility(
        &mut self,
        now: SimTime,
        dt: SimTime,
        params: &MobilityParams,
        rng: &mut RngStream,
    ) -> Position {
        if !self.alive || dt.as_ms() == 0 || now < self.motion.pause_until {
            return self.pos;
        }
        let remaining = self.pos.dist(self.motion.waypoint);
        if remaining < 1e-9 {
            self.motion.waypoint = Position {
                x: rng.uniform(0.0, params.field_w),
                y: rng.uniform(0.0, params.field_h),
            };
            self.motion.speed = rng.uniform(params.speed_min, params.speed_max);
            return self.pos;
        }
        let step_len = self.motion.speed * dt.as_ms() as f64 / 1000.0;
        if step_len >= remaining {
            self.pos = self.motion.waypoint;
            let pause = rng.uniform(params.pause_min_ms as f64, params.pause_max_ms as f64) as u64;
            self.motion.pause_until = now + SimTime(pause);
        } else {
            let f = step_len / remaining;
            self.pos.x += (self.motion.waypoint.x - self.pos.x) * f;
            self.pos.y += (self.motion.waypoint.y - self.pos.y) * f;
        }
        // Waypoints are drawn inside the field, so straight legs stay inside
        // too; the clamp only guards float round-off at the edges.
        self.pos.x = self.pos.x.clamp(0.0, params.field_w);
        self.pos.y = self.pos.y.clamp(0.0, params.field_h);
        self.pos
    }
}

/// What a packet is for, as far as flow matching cares.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PacketKind {
    Data,
    Ledger,
    Control,
}

/// A packet in flight. Sensor data, ledger traffic, and attacker junk all
/// use this one envelope so they compete for the same link capacity.
#[derive(Debug, Clone)]
pub struct DataPacket {
    pub pkt_id: u64,
    pub src: EntityId,
    pub dst: EntityId,
    pub kind: PacketKind,
    pub size: u32,
    pub created: SimTime,
    /// Digest of the canonical payload, committed at origination.
    pub payload_digest: Hash32,
    /// Digest the payload bytes currently in flight would hash to.
    pub digest_now: Hash32,
    /// Ground truth for metrics; protocol logic never reads this.
    pub tampered: bool,
    /// Whether this packet participates in the data counters. Ledger and
    /// junk traffic load the network but are not measured as data.
    pub counted: bool,
    /// Consensus payload when `kind == Ledger`.
    pub ledger: Option<Box<LedgerBody>>,
}

/// Digest of a packet's canonical payload: counter-mode SHA-256 expansion of
/// `src ∥ pkt_id ∥ block_index` (all 8-byte big-endian), truncated to `size`
/// bytes, then hashed.
pub fn canonical_payload_digest(src: EntityId, pkt_id: u64, size: u32) -> Hash32 {
    let mut hasher = Sha256::new();
    let mut remaining = size as usize;
    let mut block_index = 0u64;
    while remaining > 0 {
        let mut seed = [0u8; 24];
        seed[0..8].copy_from_slice(&src.0.to_be_bytes());
        seed[8..16].copy_from_slice(&pkt_id.to_be_bytes());
        seed[16..24].copy_from_slice(&block_index.to_be_bytes());
        let block = sha256(&seed);
        let take = remaining.min(32);
        hasher.update(&block[..take]);
        remaining -= take;
        block_index += 1;
    }
    hasher.finalize().into()
}

/// Originates a data packet at a sensor. `pkt_id` must be fresh (the world
/// hands out a run-global counter). Dead nodes must not reach this.
pub fn generate_packet(node: &SensorNode, pkt_id: u64, dst: EntityId, t: SimTime) -> DataPacket {
    assert!(
        node.alive,
        "packet generation on a dead node is a logic bug"
    );
    assert_eq!(node.role, NodeRole::Sensor, "only sensors originate data");
    let digest = canonical_payload_digest(node.id, pkt_id, node.packet_size);
    DataPacket {
        pkt_id,
        src: node.id,
        dst,
        kind: PacketKind::Data,
        size: node.packet_size,
        created: t,
        payload_digest: digest,
        digest_now: digest,
        tampered: false,
        counted: true,
        ledger: None,
    }
}

/// All alive entities within `range` of `who`, excluding itself.
/// `others` supplies `(id, position, alive)` for every candidate.
pub fn neighbors(
    who: EntityId,
    pos: Position,
    range: f64,
    others: &[(EntityId, Position, bool)],
) -> Vec<EntityId> {
    others
        .iter()
        .filter(|(id, p, alive)| *id != who && *alive && pos.dist(*p) <= range)
        .map(|(id, _, _)| *id)
        .collect()
}
