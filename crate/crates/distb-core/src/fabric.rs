//! The control layer: switches with priority flow tables, a controller that
//! computes routes on table miss, and the wired-link queue model.
//!
//! Switches know nothing about topology. A packet that matches no live rule
//! is buffered and escalated to the controller as a PacketIn; the controller
//! answers with one FlowMod per on-path switch (egress first, so downstream
//! rules are in place before the ingress re-injects) and the buffered packet
//! resumes when its FlowMod lands. Rules expire after sitting idle; an
//! expired rule is treated as absent by matching.
//!
//! Links carry everything — data, ledger, and junk alike. Each direction of
//! a link is a single-server queue: per-packet serialization is
//! `1000 / capacity_pps` milliseconds (integer, so capacities above 1000
//! packets/s serialize sub-tick and never congest), and a packet finding
//! `queue_limit` packets already waiting is dropped as congestion loss.

use std::collections::BTreeMap;

use crate::kernel::{EntityId, SimTime};
use crate::mobility::{DataPacket, PacketKind};

/// What a matched rule does with a packet.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    /// Send out the port facing this neighbor (switch or attached endpoint).
    Forward(EntityId),
    Drop,
    ToController,
}

/// Match fields; `None` is a wildcard.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlowMatch {
    pub src: Option<EntityId>,
    pub dst: Option<EntityId>,
    pub kind: Option<PacketKind>,
}

impl FlowMatch {
    pub fn matches(&self, pkt: &DataPacket) -> bool {
        self.src.is_none_or(|s| s == pkt.src)
            && self.dst.is_none_or(|d| d == pkt.dst)
            && self.kind.is_none_or(|k| k == pkt.kind)
    }
}

/// One priority-ordered match-action entry in a switch's table.
#[derive(Debug, Clone, Copy)]
pub struct FlowRule {
    pub rule_id: u64,
    pub priority: u32,
    pub matcher: FlowMatch,
    pub action: Action,
    pub idle_timeout: SimTime,
    pub last_hit: SimTime,
}

impl FlowRule {
    /// A rule idle longer than its timeout is dead weight: never matched,
    /// eventually collected.
    pub fn expired(&self, now: SimTime) -> bool {
        now.saturating_sub(self.last_hit) > self.idle_timeout
    }
}

/// Just enough of a packet for the controller to route it.
#[derive(Debug, Clone, Copy)]
pub struct PacketHeader {
    pub pkt_id: u64,
    pub src: EntityId,
    pub dst: EntityId,
    pub kind: PacketKind,
}

impl From<&DataPacket> for PacketHeader {
    fn from(pkt: &DataPacket) -> Self {
        PacketHeader {
            pkt_id: pkt.pkt_id,
            src: pkt.src,
            dst: pkt.dst,
            kind: pkt.kind,
        }
    }
}

/// Southbound control traffic between switches and the controller.
#[derive(Debug, Clone)]
pub enum SouthboundBody {
    /// Table miss: the triggering packet's header; the packet itself stays
    /// buffered at the switch.
    PacketIn { header: PacketHeader },
    /// Exactly one rule to install.
    FlowMod { rule: FlowRule },
    /// A port's far end stopped answering (node death).
    PortStatus { down: EntityId },
}

#[derive(Debug, Clone)]
pub struct SouthboundMsg {
    pub switch: EntityId,
    pub body: SouthboundBody,
}

/// Forwarding rules install at this priority; drop rules for unreachable
/// destinations sit above them so they win while both are present.
pub const PRIORITY_FORWARD: u32 = 100;
pub const PRIORITY_DROP: u32 = 200;

/// A switch: flow table plus the buffer of packets awaiting the controller.
#[derive(Debug, Clone)]
pub struct Switch {
    pub id: EntityId,
    pub alive: bool,
    pub rules: Vec<FlowRule>,
    /// Packets that missed the table, in arrival order, re-matched whenever
    /// a FlowMod lands.
    pub pending: Vec<DataPacket>,
    pub pending_limit: usize,
}

impl Switch {
    pub fn new(id: EntityId) -> Self {
        Switch {
            id,
            alive: true,
            rules: Vec::new(),
            pending: Vec::new(),
            pending_limit: 1024,
        }
    }

    /// Highest-priority live matching rule's action, ties broken by lowest
    /// rule_id; `None` is a table miss. The winning rule's idle clock
    /// resets.
    pub fn match_packet(&mut self, pkt: &DataPacket, now: SimTime) -> Option<Action> {
        let mut winner: Option<usize> = None;
        for (i, rule) in self.rules.iter().enumerate() {
            if rule.expired(now) || !rule.matcher.matches(pkt) {
                continue;
            }
            let better = match winner {
                None => true,
                Some(w) => {
                    let cur = &self.rules[w];
                    rule.priority > cur.priority
                        || (rule.priority == cur.priority && rule.rule_id < cur.rule_id)
                }
            };
            if better {
                winner = Some(i);
            }
        }
        winner.map(|i| {
            self.rules[i].last_hit = now;
            self.rules[i].action
        })
    }

    /// Installs a rule, replacing any existing rule with the same
    /// (priority, match) pair.
    pub fn install_rule(&mut self, rule: FlowRule) {
        if let Some(existing) = self
            .rules
            .iter_mut()
            .find(|r| r.priority == rule.priority && r.matcher == rule.matcher)
        {
            *existing = rule;
        } else {
            self.rules.push(rule);
        }
    }

    /// Drops expired rules; returns how many were collected.
    pub fn sweep_expired(&mut self, now: SimTime) -> usize {
        let before = self.rules.len();
        self.rules.retain(|r| !r.expired(now));
        before - self.rules.len()
    }
}

/// One-line human rendering of a flow rule for northbound dumps.
pub fn describe_rule(r: &FlowRule) -> String {
    let field = |label: &str, v: Option<EntityId>| match v {
        Some(id) => format!("{label}={}", id.0),
        None => format!("{label}=*"),
    };
    let kind = match r.matcher.kind {
        Some(PacketKind::Data) => "kind=data",
        Some(PacketKind::Ledger) => "kind=ledger",
        Some(PacketKind::Control) => "kind=control",
        None => "kind=*",
    };
    let action = match r.action {
        Action::Forward(next) => format!("forward {}", next.0),
        Action::Drop => "drop".to_string(),
        Action::ToController => "to-controller".to_string(),
    };
    format!(
        "id {}  prio {}  {} {} {}  -> {}  (idle {} ms, last hit {})",
        r.rule_id,
        r.priority,
        field("src", r.matcher.src),
        field("dst", r.matcher.dst),
        kind,
        action,
        r.idle_timeout.as_ms(),
        r.last_hit.as_ms()
    )
}

/// The controller's answer to one PacketIn.
#[derive(Debug, Clone)]
pub struct PacketInResponse {
    /// FlowMods to send, already ordered egress-first so that installing
    /// them in emission order sets up the path back-to-front.
    pub flow_mods: Vec<SouthboundMsg>,
    /// False when no alive path exists — the buffered packet is lost as
    /// routing failure and the single emitted rule is a Drop.
    pub reachable: bool,
}

/// The controller: global topology view, per-switch installed-rule mirror,
/// and the routing logic behind PacketIn handling.
#[derive(Debug, Clone)]
pub struct ControllerState {
    /// Undirected switch-switch adjacency, each list sorted ascending so
    /// path tie-breaks favor the lowest neighbor id.
    adjacency: BTreeMap<u64, Vec<u64>>,
    /// Endpoint node (gateway, miner, controller) → its attachment switch.
    attachments: BTreeMap<u64, EntityId>,
    switch_alive: BTreeMap<u64, bool>,
    /// Mirror of what the controller believes each switch has installed.
    /// Diverges from reality only when a FlowMod is lost to a dead switch.
    installed: BTreeMap<u64, Vec<FlowRule>>,
    next_rule_id: u64,
    idle_timeout: SimTime,
}

impl ControllerState {
    pub fn new(idle_timeout: SimTime) -> Self {
        ControllerState {
            adjacency: BTreeMap::new(),
            attachments: BTreeMap::new(),
            switch_alive: BTreeMap::new(),
            installed: BTreeMap::new(),
            next_rule_id: 0,
            idle_timeout,
        }
    }

    pub fn add_switch(&mut self, id: EntityId) {
        self.adjacency.entry(id.0).or_default();
        self.switch_alive.insert(id.0, true);
        self.installed.entry(id.0).or_default();
    }

    pub fn add_link(&mut self, a: EntityId, b: EntityId) {
        let la = self.adjacency.entry(a.0).or_default();
        if !la.contains(&b.0) {
            la.push(b.0);
            la.sort_unstable();
        }
        let lb = self.adjacency.entry(b.0).or_default();
        if !lb.contains(&a.0) {
            lb.push(a.0);
            lb.sort_unstable();
        }
    }

    pub fn attach_endpoint(&mut self, endpoint: EntityId, switch: EntityId) {
        self.attachments.insert(endpoint.0, switch);
    }

    pub fn attachment(&self, endpoint: EntityId) -> Option<EntityId> {
        self.attachments.get(&endpoint.0).copied()
    }

    pub fn installed_rules(&self, switch: EntityId) -> &[FlowRule] {
        self.installed.get(&switch.0).map_or(&[], |v| v.as_slice())
    }

    /// Northbound query: the controller's whole view — topology and the
    /// installed-rule mirror — as structured text, one fact per line.
    pub fn northbound_dump(&self) -> String {
        let mut out = String::from("topology:\n");
        for (&sw, neighbors) in &self.adjacency {
            let endpoints: Vec<u64> = self
                .attachments
                .iter()
                .filter(|(_, at)| at.0 == sw)
                .map(|(&ep, _)| ep)
                .collect();
            out.push_str(&format!(
                "  switch {} {}  neighbors {:?}  endpoints {:?}\n",
                sw,
                if self.switch_alive.get(&sw) == Some(&true) {
                    "up"
                } else {
                    "down"
                },
                neighbors,
                endpoints
            ));
        }
        out.push_str("flow tables (controller view):\n");
        for (&sw, rules) in &self.installed {
            out.push_str(&format!("  switch {}: {} rules\n", sw, rules.len()));
            for r in rules {
                out.push_str(&format!("    {}\n", describe_rule(r)));
            }
        }
        out
    }

    fn fresh_rule(&mut self, matcher: FlowMatch, action: Action, now: SimTime) -> FlowRule {
        let rule_id = self.next_rule_id;
        self.next_rule_id += 1;
        FlowRule {
            rule_id,
            priority: if action == Action::Drop {
                PRIORITY_DROP
            } else {
                PRIORITY_FORWARD
            },
            matcher,
            action,
            idle_timeout: self.idle_timeout,
            last_hit: now,
        }
    }

    fn record_install(&mut self, switch: EntityId, rule: FlowRule) -> SouthboundMsg {
        let table = self.installed.entry(switch.0).or_default();
        if let Some(existing) = table
            .iter_mut()
            .find(|r| r.priority == rule.priority && r.matcher == rule.matcher)
        {
            *existing = rule;
        } else {
            table.push(rule);
        }
        SouthboundMsg {
            switch,
            body: SouthboundBody::FlowMod { rule },
        }
    }

    /// Shortest alive path between two switches by hop count; equal-length
    /// candidates resolve toward the lowest-id neighbor because BFS expands
    /// neighbors in ascending order. Returns `None` when partitioned.
    pub fn shortest_path(&self, from: EntityId, to: EntityId) -> Option<Vec<EntityId>> {
        if self.switch_alive.get(&from.0) != Some(&true)
            || self.switch_alive.get(&to.0) != Some(&true)
        {
            return None;
        }
        if from == to {
            return Some(vec![from]);
        }
        let mut prev: BTreeMap<u64, u64> = BTreeMap::new();
        let mut frontier = vec![from.0];
        while !frontier.is_empty() && !prev.contains_key(&to.0) {
            let mut next = Vec::new();
            for &cur in &frontier {
                for &nb in self.adjacency.get(&cur).map_or(&Vec::new(), |v| v) {
                    if nb == from.0
                        || prev.contains_key(&nb)
                        || self.switch_alive.get(&nb) != Some(&true)
                    {
                        continue;
                    }
                    prev.insert(nb, cur);
                    next.push(nb);
                }
            }
            frontier = next;
        }
        prev.contains_key(&to.0).then(|| {
            let mut path = vec![to.0];
            while *path.last().unwrap() != from.0 {
                path.push(prev[path.last().unwrap()]);
            }
            path.reverse();
            path.into_iter().map(EntityId).collect()
        })
    }

    /// Routes one escalated packet: computes the path from the ingress
    /// switch to the destination's attachment switch and emits a FlowMod
    /// per on-path switch, egress first. An unreachable destination gets a
    /// Drop rule at the ingress so followers die locally instead of
    /// re-escalating.
    pub fn handle_packet_in(
        &mut self,
        ingress: EntityId,
        header: PacketHeader,
        now: SimTime,
    ) -> PacketInResponse {
        let matcher = FlowMatch {
            src: None,
            dst: Some(header.dst),
            kind: Some(header.kind),
        };
        let egress = self.attachment(header.dst);
        let path = egress.and_then(|e| self.shortest_path(ingress, e));
        let Some(path) = path else {
            let rule = self.fresh_rule(matcher, Action::Drop, now);
            return PacketInResponse {
                flow_mods: vec![self.record_install(ingress, rule)],
                reachable: false,
            };
        };
        let mut flow_mods = Vec::with_capacity(path.len());
        // Egress first: the last switch forwards to the endpoint itself.
        for (i, &sw) in path.iter().enumerate().rev() {
            let next_hop = if i + 1 < path.len() {
                path[i + 1]
            } else {
                header.dst
            };
            let rule = self.fresh_rule(matcher, Action::Forward(next_hop), now);
            flow_mods.push(self.record_install(sw, rule));
        }
        PacketInResponse {
            flow_mods,
            reachable: true,
        }
    }

    /// Reacts to a dead node: the topology forgets it, and every mirrored
    /// rule that forwarded into it is replaced by a ToController rule with
    /// the same (priority, match), forcing re-routing on the next packet.
    pub fn handle_port_status(&mut self, down: EntityId, now: SimTime) -> Vec<SouthboundMsg> {
        if self.switch_alive.contains_key(&down.0) {
            self.switch_alive.insert(down.0, false);
        }
        self.attachments.remove(&down.0); // endpoint, if it was one
        let mut replacements: Vec<(EntityId, FlowMatch)> = Vec::new();
        for (&sw, rules) in &self.installed {
            if self.switch_alive.get(&sw) != Some(&true) {
                continue;
            }
            for rule in rules {
                if rule.action == Action::Forward(down) {
                    replacements.push((EntityId(sw), rule.matcher));
                }
            }
        }
        // ToController installs at the forward priority, so the mirror (and
        // the switch, keyed on the same (priority, match)) replaces the
        // stale forward rule in place.
        replacements
            .into_iter()
            .map(|(sw, matcher)| {
                let rule = self.fresh_rule(matcher, Action::ToController, now);
                self.record_install(sw, rule)
            })
            .collect()
    }
}

/// One direction of a wired link: constant latency plus a single-server
/// queue paced by the serialization time.
#[derive(Debug, Clone, Copy)]
pub struct LinkState {
    pub latency: SimTime,
    pub capacity_pps: u64,
    pub queue_limit: u64,
    busy_until: SimTime,
}

/// A packet that found the queue full.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Congested;

impl LinkState {
    pub fn new(latency: SimTime, capacity_pps: u64, queue_limit: u64) -> Self {
        assert!(capacity_pps > 0, "a link must carry at least one packet/s");
        LinkState {
            latency,
            capacity_pps,
            queue_limit,
            busy_until: SimTime::ZERO,
        }
    }

    /// Per-packet serialization in ticks. Integer floor: capacities above
    /// 1000 packets/s serialize in under a tick and are treated as
    /// uncongestible.
    pub fn serialization(&self) -> SimTime {
        SimTime(1000 / self.capacity_pps)
    }

    /// Admits a packet at `now`; returns its arrival time at the far end,
    /// or `Congested` when `queue_limit` packets are already waiting.
    pub fn enqueue(&mut self, now: SimTime) -> Result<SimTime, Congested> {
        let ser = self.serialization();
        if ser.as_ms() == 0 {
            return Ok(now + self.latency);
        }
        // Packets in the system right now, each holding `ser` of busy time;
        // one of them is in service, so the waiting count is one less.
        let in_system = self
            .busy_until
            .saturating_sub(now)
            .as_ms()
            .div_ceil(ser.as_ms());
        if in_system.saturating_sub(1) >= self.queue_limit {
            return Err(Congested);
        }
        let start = SimTime(self.busy_until.as_ms().max(now.as_ms()));
        self.busy_until = start + ser;
        Ok(self.busy_until + self.latency)
    }
}

/// Fabric-wide control-plane counters, exposed by the inspect surface.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FabricCounters {
    pub packet_ins: u64,
    pub flow_mods: u64,
    pub flow_mods_lost: u64,
    pub port_status: u64,
    pub rules_expired: u64,
}
