//! Deterministic discrete-event simulator of an SDN-managed IoT network
//! whose data plane is audited by a threshold-consent blockchain.
//!
//! The crate models two variants of the same network side by side:
//!
//! * `core` — a conventional centralized deployment with no ledger, and
//! * `distb` — the distributed variant in which gateway miners co-sign
//!   traffic summaries into a hash-linked chain before delivery counts.
//!
//! Everything is driven by a single event queue ([`kernel::EventQueue`]) and
//! per-entity deterministic RNG streams ([`rng::RngStream`]), so a run is a
//! pure function of its scenario file and seed: same inputs, byte-identical
//! outputs, regardless of host or thread count.

pub mod adversary;
pub mod consensus;
pub mod crypto;
pub mod fabric;
pub mod kernel;
pub mod ledger;
pub mod metrics;
pub mod mobility;
pub mod rng;
pub mod runner;
pub mod scenario;
pub mod svg;
pub mod world;

/// Which deployment of the network a run simulates. The two variants share
/// topology, traffic, and attack schedule; they differ only in whether
/// deliveries are integrity-checked against the ledger pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Variant {
    /// Centralized baseline: packets failing the integrity check are
    /// delivered anyway (the network has no way to know).
    Core,
    /// Distributed ledger variant: integrity failures are dropped at the
    /// gateway and every verified delivery is witnessed on-chain.
    Distb,
}

impl Variant {
    pub fn label(self) -> &'static str {
        match self {
            Variant::Core => "core",
            Variant::Distb => "distb",
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "core" => Ok(Variant::Core),
            "distb" => Ok(Variant::Distb),
            other => Err(format!("unknown variant `{other}` (expected core|distb)")),
        }
    }
}
