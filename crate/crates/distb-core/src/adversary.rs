//! The attacker model: in-flight payload tampering, junk flooding, node
//! compromise, and forged-block injection.
//!
//! Every attack draws from the attacker's own RNG stream, so turning a rate
//! up or down never perturbs honest entities' randomness. The profile is
//! shared by both network variants in a comparison run; the only knob that
//! differs per variant is the compromise success probability, which models
//! the ledger's audit trail making quiet takeovers harder.
//!
//! Attacks touch the *observable* fields of their victims (a tampered
//! packet's in-flight digest, a forged block's signature bytes). Ground
//! truth markers like [`DataPacket::tampered`] exist for assertions only
//! and are never consulted by detection logic.

use std::fmt;

use crate::crypto::{sha256_parts, PUBKEY_LEN, SIG_LEN};
use crate::kernel::{EntityId, SimTime};
use crate::ledger::{hash_block, merkle_root, Block, BlockHeader, Chain, Transaction};
use crate::mobility::{DataPacket, PacketKind};
use crate::rng::RngStream;
use crate::Variant;

/// Attack intensity knobs, all zero in a quiet run.
///
/// Rates are per attacker per second; probabilities are per event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackProfile {
    pub attacker_count: u32,
    /// Probability that a sensor packet is corrupted in flight; one draw
    /// per packet.
    pub tamper_prob: f64,
    /// Junk packets per second injected by each attacker.
    pub flood_rate: f64,
    /// Node-takeover attempts per second by each attacker.
    pub compromise_attempt_rate: f64,
    /// Per-attempt success probability against the centralized variant.
    pub compromise_success_core: f64,
    /// Per-attempt success probability against the ledger variant.
    pub compromise_success_distb: f64,
    /// Forged-block injections per second by each attacker.
    pub forge_block_rate: f64,
}

impl AttackProfile {
    /// No attackers, nothing hostile. The two variants of a quiet run
    /// differ only by ledger overhead traffic.
    pub fn quiet() -> Self {
        AttackProfile {
            attacker_count: 0,
            tamper_prob: 0.0,
            flood_rate: 0.0,
            compromise_attempt_rate: 0.0,
            compromise_success_core: 0.0,
            compromise_success_distb: 0.0,
            forge_block_rate: 0.0,
        }
    }

    /// True when any attack vector can actually fire.
    pub fn active(&self) -> bool {
        self.attacker_count > 0
            && (self.tamper_prob > 0.0
                || self.flood_rate > 0.0
                || self.compromise_attempt_rate > 0.0
                || self.forge_block_rate > 0.0)
    }

    pub fn success_prob(&self, variant: Variant) -> f64 {
        match variant {
            Variant::Core => self.compromise_success_core,
            Variant::Distb => self.compromise_success_distb,
        }
    }

    pub fn validate(&self) -> Result<(), BadProfile> {
        for (field, value) in [
            ("tamper_prob", self.tamper_prob),
            ("compromise_success_core", self.compromise_success_core),
            ("compromise_success_distb", self.compromise_success_distb),
        ] {
            if !value.is_finite() || !(0.0..=1.0).contains(&value) {
                return Err(BadProfile::ProbabilityOutOfRange { field, value });
            }
        }
        for (field, value) in [
            ("flood_rate", self.flood_rate),
            ("compromise_attempt_rate", self.compromise_attempt_rate),
            ("forge_block_rate", self.forge_block_rate),
        ] {
            if !value.is_finite() || value < 0.0 {
                return Err(BadProfile::RateOutOfRange { field, value });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BadProfile {
    ProbabilityOutOfRange { field: &'static str, value: f64 },
    RateOutOfRange { field: &'static str, value: f64 },
}

impl fmt::Display for BadProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BadProfile::ProbabilityOutOfRange { field, value } => {
                write!(f, "{field} = {value} is not a probability in [0, 1]")
            }
            BadProfile::RateOutOfRange { field, value } => {
                write!(f, "{field} = {value} is not a finite non-negative rate")
            }
        }
    }
}

impl std::error::Error for BadProfile {}

/// Record of one takeover attempt; `succeeded` implies the target is dead
/// from this instant on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CompromiseEvent {
    pub t: SimTime,
    pub target: EntityId,
    pub succeeded: bool,
    /// Whether the takeover left a visible trace — always true under the
    /// ledger variant, whose audit trail witnesses the victim going silent.
    pub detected: bool,
}

/// Rolls one takeover attempt against an already-chosen target.
pub fn attempt_compromise(
    rng: &mut RngStream,
    target: EntityId,
    success_prob: f64,
    now: SimTime,
    ledger_audited: bool,
) -> CompromiseEvent {
    let succeeded = rng.chance(success_prob);
    CompromiseEvent {
        t: now,
        target,
        succeeded,
        detected: succeeded && ledger_audited,
    }
}

/// Corrupts a packet in flight: the payload it now carries no longer hashes
/// to the origin's committed digest. Only the observable digest moves; the
/// commitment is untouchable by construction.
pub fn tamper(pkt: &mut DataPacket, rng: &mut RngStream) {
    let nonce = rng.next_u64().to_be_bytes();
    pkt.digest_now = sha256_parts(&[&pkt.digest_now, &nonce]);
    pkt.tampered = true;
}

/// Fabricates a flood packet aimed at `dst`. Its digests mismatch by
/// construction, so an integrity-checking gateway discards it; either way
/// it is uncounted traffic whose only job is to occupy link capacity.
pub fn junk_packet(
    attacker: EntityId,
    pkt_id: u64,
    dst: EntityId,
    size: u32,
    now: SimTime,
    rng: &mut RngStream,
) -> DataPacket {
    let mut claimed = [0u8; 32];
    rng.fill_bytes(&mut claimed);
    DataPacket {
        pkt_id,
        src: attacker,
        dst,
        kind: PacketKind::Data,
        size,
        created: now,
        payload_digest: claimed,
        digest_now: sha256_parts(&[&claimed, b"junk"]),
        tampered: true,
        counted: false,
        ledger: None,
    }
}

/// Builds a block that is syntactically flawless — correct parent hash,
/// height, timestamp, and transaction root — but whose single transaction
/// carries garbage signature bytes no honest validator accepts. The forged
/// header is credited to `as_miner` (a captured identity, if the attacker
/// holds one).
pub fn forge_block(as_miner: EntityId, view: &Chain, now: SimTime, rng: &mut RngStream) -> Block {
    let mut payload_digest = [0u8; 32];
    rng.fill_bytes(&mut payload_digest);
    let mut pubkey = [0u8; PUBKEY_LEN];
    rng.fill_bytes(&mut pubkey);
    let mut signature = [0u8; SIG_LEN];
    rng.fill_bytes(&mut signature);
    let mut tx = Transaction {
        tx_id: [0u8; 32],
        origin: as_miner,
        pkt_id: rng.next_u64(),
        payload_digest,
        timestamp: now,
        pubkey,
        signature,
    };
    tx.tx_id = tx.compute_id();

    let parent = view.head();
    let header = BlockHeader {
        height: parent.header.height + 1,
        prev_hash: hash_block(&parent.header),
        tx_root: merkle_root(&[tx.tx_id]),
        timestamp: SimTime(now.as_ms().max(parent.header.timestamp.as_ms())),
        miner: as_miner,
    };
    Block {
        header,
        txs: vec![tx],
        votes: Vec::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::SigScheme;
    use crate::ledger::ValidateError;
    use crate::mobility::{canonical_payload_digest, generate_packet, NodeRole, SensorNode};

    fn sample_packet() -> DataPacket {
        let node = SensorNode::stationary(EntityId(30), 100.0, 100.0, NodeRole::Sensor);
        generate_packet(&node, 7, EntityId(10), SimTime(50))
    }

    #[test]
    fn profile_bounds_are_enforced() {
        assert_eq!(AttackProfile::quiet().validate(), Ok(()));
        assert!(!AttackProfile::quiet().active());

        let mut p = AttackProfile::quiet();
        p.tamper_prob = 1.5;
        assert!(matches!(
            p.validate(),
            Err(BadProfile::ProbabilityOutOfRange {
                field: "tamper_prob",
                ..
            })
        ));

        let mut p = AttackProfile::quiet();
        p.flood_rate = f64::NAN;
        assert!(matches!(
            p.validate(),
            Err(BadProfile::RateOutOfRange { .. })
        ));

        let mut p = AttackProfile::quiet();
        p.attacker_count = 2;
        assert!(
            !p.active(),
            "attackers with nothing to do are not an attack"
        );
        p.flood_rate = 5.0;
        assert!(p.active());
    }

    #[test]
    fn tampering_breaks_the_digest_and_only_the_digest() {
        let mut rng = RngStream::new(0xA77AC4, 1);
        let mut pkt = sample_packet();
        let committed = pkt.payload_digest;
        assert_eq!(pkt.digest_now, committed);

        tamper(&mut pkt, &mut rng);
        assert!(pkt.tampered);
        assert_ne!(pkt.digest_now, committed);
        assert_eq!(
            pkt.payload_digest, committed,
            "origin commitment is immutable"
        );

        // A second corruption on the same packet still mismatches.
        let first = pkt.digest_now;
        tamper(&mut pkt, &mut rng);
        assert_ne!(pkt.digest_now, first);
        assert_ne!(pkt.digest_now, committed);
    }

    #[test]
    fn junk_packets_fail_integrity_and_stay_uncounted() {
        let mut rng = RngStream::new(0xA77AC4, 2);
        let junk = junk_packet(EntityId(90), 1, EntityId(10), 800, SimTime(5), &mut rng);
        assert!(!junk.counted);
        assert_ne!(junk.digest_now, junk.payload_digest);
        assert_eq!(junk.kind, PacketKind::Data);
        // And it does not accidentally hash to a legitimate payload.
        assert_ne!(
            junk.payload_digest,
            canonical_payload_digest(junk.src, junk.pkt_id, junk.size)
        );
    }

    /// The forgery must sail through every structural check and die exactly
    /// at signature verification — that is what "syntactically valid"
    /// means for a block.
    #[test]
    fn forged_block_fails_validation_only_at_signatures() {
        let mut rng = RngStream::new(0xF0463D, 3);
        let chain = Chain::new(SigScheme::FastMac, 6600, 5);
        let forged = forge_block(EntityId(13), &chain, SimTime(2_000), &mut rng);
        assert_eq!(forged.header.height, 1);
        assert_eq!(forged.header.prev_hash, hash_block(&chain.head().header));
        assert_eq!(chain.validate_block(&forged), Err(ValidateError::BadSig));
    }

    #[test]
    fn compromise_respects_probability_extremes_and_audit_flag() {
        let mut rng = RngStream::new(0xC0, 4);
        for i in 0..50 {
            let ev = attempt_compromise(&mut rng, EntityId(i), 0.0, SimTime(i), false);
            assert!(!ev.succeeded);
            assert!(!ev.detected);
        }
        for i in 0..50 {
            let ev = attempt_compromise(&mut rng, EntityId(i), 1.0, SimTime(i), true);
            assert!(ev.succeeded);
            assert!(ev.detected, "audited takeovers leave a trace");
        }
        let ev = attempt_compromise(&mut rng, EntityId(1), 1.0, SimTime(9), false);
        assert!(ev.succeeded && !ev.detected);
    }

    /// Both variants of a comparison run consume the same attacker stream,
    /// so with a lower success probability the ledger variant's takeovers
    /// are a strict subset of the baseline's — the source of every
    /// "ledger fails less" curve.
    #[test]
    fn lower_success_probability_thins_the_same_draw_sequence() {
        let mut core_rng = RngStream::new(0x5EED, 9);
        let mut distb_rng = RngStream::new(0x5EED, 9);
        let mut core_hits = 0u32;
        let mut distb_hits = 0u32;
        for i in 0..2_000u64 {
            let core = attempt_compromise(&mut core_rng, EntityId(i), 0.30, SimTime(i), false);
            let distb = attempt_compromise(&mut distb_rng, EntityId(i), 0.06, SimTime(i), true);
            if distb.succeeded {
                assert!(core.succeeded, "a success at p=0.06 implies one at p=0.30");
            }
            core_hits += u32::from(core.succeeded);
            distb_hits += u32::from(distb.succeeded);
        }
        let core_rate = f64::from(core_hits) / 2_000.0;
        let distb_rate = f64::from(distb_hits) / 2_000.0;
        assert!((core_rate - 0.30).abs() < 0.03, "core rate {core_rate}");
        assert!((distb_rate - 0.06).abs() < 0.02, "distb rate {distb_rate}");
    }
}
