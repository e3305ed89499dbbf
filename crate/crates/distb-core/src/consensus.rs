//! Threshold-consent admission: proposal rounds, miner voting, and the
//! quorum tally that decides whether a block joins the ledger.
//!
//! One round runs per `round_period`. The proposer rotates round-robin over
//! the registered miners; a dead proposer simply skips its round and the
//! rotation advances. Proposals, votes, and admitted blocks all travel as
//! ledger packets over the simulated fabric, so consensus pays its way in
//! link capacity — the overhead the throughput comparison measures.
//!
//! Votes missing at the round deadline count as rejections: consent must be
//! affirmative, silence never admits a block.

use std::collections::VecDeque;

use crate::crypto::Keypair;
use crate::kernel::{EntityId, SimTime};
use crate::ledger::{hash_block, merkle_root, Block, BlockHeader, Chain, Hash32, Transaction};

pub use crate::ledger::{quorum_need, BasisPoints, TallyResult, Vote};

/// Consensus payloads carried by ledger packets across the fabric. All
/// consensus traffic shares links with data traffic, which is exactly how
/// the ledger's overhead shows up in the throughput comparison.
#[derive(Debug, Clone)]
pub enum LedgerBody {
    /// Gateway-witnessed delivery receipt headed for the transaction pool.
    TxSubmit(Transaction),
    /// Round proposal broadcast to the miners.
    Proposal { round_id: u64, block: Block },
    /// A miner's verdict returning to the proposer.
    VoteMsg { round_id: u64, vote: Vote },
    /// An admitted block broadcast for replica adoption.
    Commit { block: Block },
}

/// One consent round: a proposed block awaiting votes until its deadline.
#[derive(Debug, Clone)]
pub struct Round {
    pub round_id: u64,
    pub proposer: EntityId,
    pub deadline: SimTime,
    pub block: Block,
    pub block_hash: Hash32,
    /// Adversary-injected proposal (affects how controlled miners vote).
    pub forged: bool,
    /// Votes received before the deadline, in arrival order.
    pub votes: Vec<Vote>,
}

/// Round-robin proposer selection over a fixed miner roster. The rotation
/// always advances, so a dead proposer costs its round and nothing else.
#[derive(Debug, Clone)]
pub struct ProposerRotation {
    miners: Vec<EntityId>,
    next_idx: usize,
}

impl ProposerRotation {
    pub fn new(miners: Vec<EntityId>) -> Self {
        assert!(!miners.is_empty(), "rotation needs at least one miner");
        ProposerRotation {
            miners,
            next_idx: 0,
        }
    }

    pub fn miners(&self) -> &[EntityId] {
        &self.miners
    }

    /// The miner whose turn this round is.
    pub fn next(&mut self) -> EntityId {
        let miner = self.miners[self.next_idx];
        self.next_idx = (self.next_idx + 1) % self.miners.len();
        miner
    }
}

/// Assembles the proposer's block from the oldest pooled transactions.
///
/// Pool entries are cleaned on the way: a transaction whose signature fails,
/// whose id is already on-chain, or that repeats an id already selected is
/// discarded rather than proposed. Returns `None` when nothing usable is
/// pooled — the round is skipped.
pub fn propose_block(
    chain: &Chain,
    proposer: EntityId,
    now: SimTime,
    pool: &mut VecDeque<Transaction>,
    max_block_txs: usize,
) -> Option<Block> {
    let mut txs: Vec<Transaction> = Vec::new();
    while txs.len() < max_block_txs {
        let Some(tx) = pool.pop_front() else {
            break;
        };
        let clean = tx.tx_id == tx.compute_id()
            && tx.verify_signature(chain.scheme())
            && !chain.contains_tx(&tx.tx_id)
            && !txs.iter().any(|t| t.tx_id == tx.tx_id);
        if clean {
            txs.push(tx);
        }
    }
    if txs.is_empty() {
        return None;
    }
    let ids: Vec<Hash32> = txs.iter().map(|t| t.tx_id).collect();
    // The chain's head was committed at an earlier round, so `now` can never
    // precede it; max() guards the degenerate same-tick case.
    let timestamp = SimTime(now.as_ms().max(chain.head().header.timestamp.as_ms()));
    let header = BlockHeader {
        height: chain.height() + 1,
        prev_hash: hash_block(&chain.head().header),
        tx_root: merkle_root(&ids),
        timestamp,
        miner: proposer,
    };
    Some(Block {
        header,
        txs,
        votes: Vec::new(),
    })
}

/// Produces one miner's signed verdict on a proposed block.
///
/// An honest miner accepts exactly when the block validates against its own
/// replica. A controlled (adversary-run) miner inverts loyalty: it rejects
/// honest proposals and accepts forged ones regardless of validity.
pub fn cast_vote(
    miner: EntityId,
    key: &Keypair,
    replica: &Chain,
    block: &Block,
    controlled: bool,
    forged: bool,
) -> Vote {
    let accept = if controlled {
        forged
    } else {
        replica.validate_block(block).is_ok()
    };
    Vote::new_signed(miner, hash_block(&block.header), accept, key)
}

/// Counts consent for one block. Only the first vote from each miner
/// counts; votes naming a different block are ignored; miners that never
/// voted count against. Accepted exactly when the accept count reaches
/// `ceil(tau * miners_total)`, computed in integers.
pub fn tally(
    votes: &[Vote],
    block_hash: Hash32,
    miners_total: u64,
    tau_bp: BasisPoints,
) -> TallyResult {
    debug_assert!(
        (6000..=8000).contains(&tau_bp),
        "threshold outside the supported consent band; scenario validation should have caught this"
    );
    let mut seen: Vec<u64> = Vec::new();
    let mut accepts = 0u64;
    for vote in votes {
        if vote.block_hash != block_hash || seen.contains(&vote.miner.0) {
            continue;
        }
        seen.push(vote.miner.0);
        if vote.accept {
            accepts += 1;
        }
    }
    TallyResult {
        block_hash,
        accepts,
        miners_total,
        tau_bp,
        accepted: accepts >= quorum_need(tau_bp, miners_total),
    }
}
