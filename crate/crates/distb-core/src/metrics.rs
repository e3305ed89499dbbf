//! Delivery accounting: windowed counters, the conservation invariant, and
//! the CSV report.
//!
//! Only sensor-originated data packets are counted — ledger traffic and
//! attack junk load the links but never touch these numbers. Every counted
//! packet must reach exactly one terminal state (delivered, or dropped for
//! exactly one reason); the tracker panics on a double-count because that
//! is always a simulator bug, not a condition to report.
//!
//! Rates are computed per window: throughput is deliveries over the window
//! in seconds, the security rate is verified deliveries over packets sent
//! in the same window (clamped at 100 — a packet sent near a boundary may
//! be delivered one window later), and node failure is the cumulative dead
//! fraction of the protected population.

use std::collections::BTreeSet;

use crate::kernel::SimTime;
use crate::Variant;

/// Why a counted packet never arrived.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropReason {
    /// No alive path — dead switch coverage hole, dead gateway, or an
    /// explicit drop rule for an unreachable destination.
    NoRoute,
    /// Lost to a full link queue.
    Congestion,
    /// Failed the integrity check at an integrity-enforcing gateway.
    Security,
}

/// Raw per-window tallies; one instance counts a window, a second the
/// whole run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Tally {
    pub sent: u64,
    pub delivered: u64,
    pub delivered_verified: u64,
    pub dropped_no_route: u64,
    pub dropped_congestion: u64,
    pub dropped_security: u64,
    /// Deliveries that failed the integrity check but were delivered anyway
    /// (the centralized variant has no grounds to refuse them).
    pub insecure_delivered: u64,
}

impl Tally {
    pub fn dropped_total(&self) -> u64 {
        self.dropped_no_route + self.dropped_congestion + self.dropped_security
    }
}

/// One closed window, ready to be a CSV row or a chart point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricSample {
    pub variant: Variant,
    pub window_end: SimTime,
    pub counts: Tally,
    pub throughput_pps: f64,
    pub security_rate_pct: f64,
    pub node_failure_pct: f64,
    /// Packets sent since the start of the run, including this window —
    /// the x-coordinate for load-indexed charts. Not a CSV column.
    pub cumulative_sent: u64,
}

/// End-of-run (or any-instant) packet balance. `holds` failing means the
/// simulator lost track of a packet, which voids every other number.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConservationSnapshot {
    pub sent: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub in_flight: u64,
}

impl ConservationSnapshot {
    pub fn holds(&self) -> bool {
        self.sent == self.delivered + self.dropped + self.in_flight
    }
}

/// The per-run tracker. One per variant; a comparison run owns two.
#[derive(Debug, Clone)]
pub struct Metrics {
    variant: Variant,
    nodes_total: u64,
    nodes_failed: u64,
    window: Tally,
    cumulative: Tally,
    /// Counted packets that have left a sensor but not yet hit a terminal
    /// state. Membership is the double-count guard.
    outstanding: BTreeSet<u64>,
    last_window_end: SimTime,
    samples: Vec<MetricSample>,
}

impl Metrics {
    pub fn new(variant: Variant, nodes_total: u64) -> Self {
        Metrics {
            variant,
            nodes_total,
            nodes_failed: 0,
            window: Tally::default(),
            cumulative: Tally::default(),
            outstanding: BTreeSet::new(),
            last_window_end: SimTime::ZERO,
            samples: Vec::new(),
        }
    }

    pub fn record_sent(&mut self, pkt_id: u64) {
        assert!(
            self.outstanding.insert(pkt_id),
            "packet {pkt_id} sent twice"
        );
        self.window.sent += 1;
        self.cumulative.sent += 1;
    }

    pub fn record_delivered(&mut self, pkt_id: u64, verified: bool) {
        self.settle(pkt_id);
        self.window.delivered += 1;
        self.cumulative.delivered += 1;
        if verified {
            self.window.delivered_verified += 1;
            self.cumulative.delivered_verified += 1;
        } else {
            self.window.insecure_delivered += 1;
            self.cumulative.insecure_delivered += 1;
        }
    }

    pub fn record_dropped(&mut self, pkt_id: u64, reason: DropReason) {
        self.settle(pkt_id);
        let (w, c) = match reason {
            DropReason::NoRoute => (
                &mut self.window.dropped_no_route,
                &mut self.cumulative.dropped_no_route,
            ),
            DropReason::Congestion => (
                &mut self.window.dropped_congestion,
                &mut self.cumulative.dropped_congestion,
            ),
            DropReason::Security => (
                &mut self.window.dropped_security,
                &mut self.cumulative.dropped_security,
            ),
        };
        *w += 1;
        *c += 1;
    }

    fn settle(&mut self, pkt_id: u64) {
        assert!(
            self.outstanding.remove(&pkt_id),
            "packet {pkt_id} reached a second terminal state (or was never sent)"
        );
    }

    pub fn record_node_failed(&mut self) {
        self.nodes_failed += 1;
        debug_assert!(self.nodes_failed <= self.nodes_total);
    }

    pub fn nodes_failed(&self) -> u64 {
        self.nodes_failed
    }

    pub fn in_flight(&self) -> u64 {
        self.outstanding.len() as u64
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    /// Closes the window ending at `window_end`, deriving the rates from
    /// this window's tallies, and starts the next one.
    pub fn close_window(&mut self, window_end: SimTime) -> MetricSample {
        let w = self.window;
        let span_s = window_end
            .saturating_sub(self.last_window_end)
            .as_secs_f64();
        let throughput_pps = if span_s > 0.0 {
            w.delivered as f64 / span_s
        } else {
            0.0
        };
        let security_rate_pct =
            (100.0 * w.delivered_verified as f64 / w.sent.max(1) as f64).min(100.0);
        let node_failure_pct = 100.0 * self.nodes_failed as f64 / self.nodes_total.max(1) as f64;
        let sample = MetricSample {
            variant: self.variant,
            window_end,
            counts: w,
            throughput_pps,
            security_rate_pct,
            node_failure_pct,
            cumulative_sent: self.cumulative.sent,
        };
        self.samples.push(sample);
        self.window = Tally::default();
        self.last_window_end = window_end;
        sample
    }

    pub fn samples(&self) -> &[MetricSample] {
        &self.samples
    }

    pub fn cumulative(&self) -> Tally {
        self.cumulative
    }

    pub fn conservation(&self) -> ConservationSnapshot {
        ConservationSnapshot {
            sent: self.cumulative.sent,
            delivered: self.cumulative.delivered,
            dropped: self.cumulative.dropped_total(),
            in_flight: self.in_flight(),
        }
    }
}

pub const CSV_HEADER: &str = "variant,window_end_ms,sent,delivered,delivered_verified,\
dropped_no_route,dropped_congestion,dropped_security,insecure_delivered,\
throughput_pps,security_rate_pct,node_failure_pct";

/// Quotes a field the RFC-4180 way when it needs it; numeric fields never
/// do, but the format must stay safe for arbitrary labels.
pub fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') || s.contains('\r') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

impl MetricSample {
    pub fn csv_row(&self) -> String {
        let c = &self.counts;
        format!(
            "{},{},{},{},{},{},{},{},{},{:.3},{:.3},{:.3}",
            csv_field(self.variant.label()),
            self.window_end.as_ms(),
            c.sent,
            c.delivered,
            c.delivered_verified,
            c.dropped_no_route,
            c.dropped_congestion,
            c.dropped_security,
            c.insecure_delivered,
            self.throughput_pps,
            self.security_rate_pct,
            self.node_failure_pct,
        )
    }
}

/// Renders samples (already in their final row order) as a complete CSV
/// document, header included, trailing newline included.
pub fn write_csv(samples: &[MetricSample]) -> String {
    let mut out = String::with_capacity(64 * (samples.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for s in samples {
        out.push_str(&s.csv_row());
        out.push('\n');
    }
    out
}
