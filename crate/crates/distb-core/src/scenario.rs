//! Scenario files: every knob of a run in a flat `key = value` text format.
//!
//! The format is deliberately small: optional `[section]` headers (cosmetic
//! grouping — keys are globally unique), `#` comments, blank lines. Parsing
//! is strict: unknown keys, unknown sections, duplicate keys, and malformed
//! values are all errors carrying the offending line number, because a
//! silently ignored typo in an experiment config produces a wrong chart,
//! not a crash.
//!
//! [`Scenario::dump_effective`] writes the complete effective configuration
//! back out in the same format, and parsing that dump reproduces the
//! scenario exactly — the round-trip is what makes "which config produced
//! this result?" answerable from the output directory alone.

use std::fmt;

use crate::adversary::AttackProfile;
use crate::crypto::SigScheme;
use crate::ledger::BasisPoints;

/// Which variant(s) a run simulates; `Both` drives the side-by-side
/// comparison from one seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VariantChoice {
    Core,
    Distb,
    Both,
}

impl VariantChoice {
    pub fn label(self) -> &'static str {
        match self {
            VariantChoice::Core => "core",
            VariantChoice::Distb => "distb",
            VariantChoice::Both => "both",
        }
    }
}

/// A configuration problem: either a parse failure pinned to a line, or a
/// semantic rule violated by the assembled scenario.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl ConfigError {
    fn at(line: usize, message: impl Into<String>) -> Self {
        ConfigError {
            line: Some(line),
            message: message.into(),
        }
    }

    fn rule(message: impl Into<String>) -> Self {
        ConfigError {
            line: None,
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(n) => write!(f, "line {n}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

/// Everything a run needs, defaults matching the reference deployment:
/// a 3 km × 3 km field, 32 mobile sensors reporting through 4 gateways
/// over a 9-switch fabric, 5 miners sealing consent rounds every second.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    // [sim]
    pub duration_s: u64,
    pub seed: u64,
    pub variant: VariantChoice,
    pub metric_window_s: u64,

    // [field]
    pub field_width_m: f64,
    pub field_height_m: f64,

    // [nodes]
    pub sensors: u32,
    pub gateways: u32,
    pub switches: u32,
    pub miners: u32,
    pub radio_range_m: f64,
    pub gen_interval_ms: u64,
    pub packet_size_bytes: u32,
    pub speed_min_mps: f64,
    pub speed_max_mps: f64,
    pub pause_min_ms: u64,
    pub pause_max_ms: u64,
    pub mobility_step_ms: u64,

    // [links]
    pub link_latency_ms: u64,
    pub link_capacity_pps: u64,
    pub link_queue_limit: u64,
    pub ctrl_latency_ms: u64,
    pub radio_latency_ms: u64,
    pub rule_idle_timeout_ms: u64,

    // [ledger]
    pub tau: f64,
    pub round_period_ms: u64,
    pub max_block_txs: usize,
    pub fast_crypto: bool,
    pub vote_delay_ms: u64,

    // [attack]
    pub attack: AttackProfile,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            duration_s: 600,
            seed: 42,
            variant: VariantChoice::Both,
            metric_window_s: 10,
            field_width_m: 3000.0,
            field_height_m: 3000.0,
            sensors: 32,
            gateways: 4,
            switches: 9,
            miners: 5,
            radio_range_m: 250.0,
            gen_interval_ms: 1000,
            packet_size_bytes: 800,
            speed_min_mps: 1.0,
            speed_max_mps: 20.0,
            pause_min_ms: 0,
            pause_max_ms: 2000,
            mobility_step_ms: 100,
            link_latency_ms: 5,
            link_capacity_pps: 500,
            link_queue_limit: 64,
            ctrl_latency_ms: 1,
            radio_latency_ms: 2,
            rule_idle_timeout_ms: 10_000,
            tau: 0.66,
            round_period_ms: 1000,
            max_block_txs: 64,
            fast_crypto: false,
            vote_delay_ms: 5,
            attack: AttackProfile::quiet(),
        }
    }
}

const SECTIONS: &[&str] = &["sim", "field", "nodes", "links", "ledger", "attack"];

/// Packet sizes with reference measurements behind them; anything else
/// needs the explicit non-reference escape hatch.
pub const REFERENCE_PACKET_SIZES: &[u32] = &[256, 800, 1024];

impl Scenario {
    /// Parses a scenario file. Unset keys keep their defaults.
    pub fn parse(text: &str) -> Result<Scenario, ConfigError> {
        let mut cfg = Scenario::default();
        let mut seen: Vec<String> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(section) = line.strip_prefix('[') {
                let Some(name) = section.strip_suffix(']') else {
                    return Err(ConfigError::at(
                        lineno,
                        format!("malformed section header `{line}`"),
                    ));
                };
                if !SECTIONS.contains(&name.trim()) {
                    return Err(ConfigError::at(
                        lineno,
                        format!("unknown section `[{}]`", name.trim()),
                    ));
                }
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError::at(
                    lineno,
                    format!("expected `key = value`, got `{line}`"),
                ));
            };
            let key = key.trim();
            let value = value.trim();
            if seen.iter().any(|k| k == key) {
                return Err(ConfigError::at(lineno, format!("duplicate key `{key}`")));
            }
            seen.push(key.to_string());
            cfg.apply(key, value)
                .map_err(|msg| ConfigError::at(lineno, msg))?;
        }
        Ok(cfg)
    }

    /// Sets one named parameter from its string form — the same names and
    /// syntax as scenario files, reused by parameter sweeps.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        self.apply(key.trim(), value.trim())
            .map_err(ConfigError::rule)
    }

    fn apply(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn u64v(v: &str) -> Result<u64, String> {
            v.parse()
                .map_err(|_| format!("`{v}` is not an unsigned integer"))
        }
        fn u32v(v: &str) -> Result<u32, String> {
            v.parse()
                .map_err(|_| format!("`{v}` is not an unsigned integer"))
        }
        fn usizev(v: &str) -> Result<usize, String> {
            v.parse()
                .map_err(|_| format!("`{v}` is not an unsigned integer"))
        }
        fn f64v(v: &str) -> Result<f64, String> {
            v.parse().map_err(|_| format!("`{v}` is not a number"))
        }
        fn boolv(v: &str) -> Result<bool, String> {
            match v {
                "true" => Ok(true),
                "false" => Ok(false),
                _ => Err(format!("`{v}` is not `true` or `false`")),
            }
        }
        match key {
            "duration_s" => self.duration_s = u64v(value)?,
            "seed" => self.seed = u64v(value)?,
            "variant" => {
                self.variant = match value {
                    "core" => VariantChoice::Core,
                    "distb" => VariantChoice::Distb,
                    "both" => VariantChoice::Both,
                    _ => return Err(format!("`{value}` is not one of core|distb|both")),
                }
            }
            "metric_window_s" => self.metric_window_s = u64v(value)?,
            "field_width_m" => self.field_width_m = f64v(value)?,
            "field_height_m" => self.field_height_m = f64v(value)?,
            "sensors" => self.sensors = u32v(value)?,
            "gateways" => self.gateways = u32v(value)?,
            "switches" => self.switches = u32v(value)?,
            "miners" => self.miners = u32v(value)?,
            "radio_range_m" => self.radio_range_m = f64v(value)?,
            "gen_interval_ms" => self.gen_interval_ms = u64v(value)?,
            "packet_size_bytes" => self.packet_size_bytes = u32v(value)?,
            "speed_min_mps" => self.speed_min_mps = f64v(value)?,
            "speed_max_mps" => self.speed_max_mps = f64v(value)?,
            "pause_min_ms" => self.pause_min_ms = u64v(value)?,
            "pause_max_ms" => self.pause_max_ms = u64v(value)?,
            "mobility_step_ms" => self.mobility_step_ms = u64v(value)?,
            "link_latency_ms" => self.link_latency_ms = u64v(value)?,
            "link_capacity_pps" => self.link_capacity_pps = u64v(value)?,
            "link_queue_limit" => self.link_queue_limit = u64v(value)?,
            "ctrl_latency_ms" => self.ctrl_latency_ms = u64v(value)?,
            "radio_latency_ms" => self.radio_latency_ms = u64v(value)?,
            "rule_idle_timeout_ms" => self.rule_idle_timeout_ms = u64v(value)?,
            "tau" => self.tau = f64v(value)?,
            "round_period_ms" => self.round_period_ms = u64v(value)?,
            "max_block_txs" => self.max_block_txs = usizev(value)?,
            "fast_crypto" => self.fast_crypto = boolv(value)?,
            "vote_delay_ms" => self.vote_delay_ms = u64v(value)?,
            "attackers" => self.attack.attacker_count = u32v(value)?,
            "tamper_prob" => self.attack.tamper_prob = f64v(value)?,
            "flood_rate_pps" => self.attack.flood_rate = f64v(value)?,
            "compromise_attempt_rate" => self.attack.compromise_attempt_rate = f64v(value)?,
            "compromise_success_core" => self.attack.compromise_success_core = f64v(value)?,
            "compromise_success_distb" => self.attack.compromise_success_distb = f64v(value)?,
            "forge_rate" => self.attack.forge_block_rate = f64v(value)?,
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    /// Semantic checks, applied after parsing and after every sweep
    /// override. `allow_nonpaper` relaxes only the value constraints tied
    /// to the reference deployment (currently the packet-size whitelist).
    pub fn validate(&self, allow_nonpaper: bool) -> Result<(), ConfigError> {
        if self.duration_s == 0 {
            return Err(ConfigError::rule("duration_s must be positive"));
        }
        if self.metric_window_s == 0 || self.metric_window_s > self.duration_s {
            return Err(ConfigError::rule(
                "metric_window_s must be positive and no longer than duration_s",
            ));
        }
        if !(self.field_width_m > 0.0) || !(self.field_height_m > 0.0) {
            return Err(ConfigError::rule("field dimensions must be positive"));
        }
        if self.sensors == 0 || self.gateways == 0 || self.switches == 0 || self.miners == 0 {
            return Err(ConfigError::rule(
                "sensors, gateways, switches, and miners must all be at least 1",
            ));
        }
        if !(self.radio_range_m > 0.0) {
            return Err(ConfigError::rule("radio_range_m must be positive"));
        }
        if self.gen_interval_ms == 0 || self.mobility_step_ms == 0 {
            return Err(ConfigError::rule(
                "gen_interval_ms and mobility_step_ms must be positive",
            ));
        }
        if !allow_nonpaper && !REFERENCE_PACKET_SIZES.contains(&self.packet_size_bytes) {
            return Err(ConfigError::rule(format!(
                "packet_size_bytes = {} is not a reference size {:?}; \
                 pass --allow-nonpaper to experiment off the reference grid",
                self.packet_size_bytes, REFERENCE_PACKET_SIZES
            )));
        }
        if !(self.speed_min_mps > 0.0) || self.speed_min_mps > self.speed_max_mps {
            return Err(ConfigError::rule(
                "speeds must satisfy 0 < speed_min_mps <= speed_max_mps",
            ));
        }
        if self.pause_min_ms > self.pause_max_ms {
            return Err(ConfigError::rule(
                "pause_min_ms must not exceed pause_max_ms",
            ));
        }
        if self.link_capacity_pps == 0 || self.link_queue_limit == 0 {
            return Err(ConfigError::rule(
                "link_capacity_pps and link_queue_limit must be positive",
            ));
        }
        if self.rule_idle_timeout_ms == 0 {
            return Err(ConfigError::rule("rule_idle_timeout_ms must be positive"));
        }
        let bp = self.tau_bp();
        if !(6000..=8000).contains(&bp) {
            return Err(ConfigError::rule(format!(
                "tau = {} is outside the supported consent band [0.60, 0.80]",
                self.tau
            )));
        }
        if self.round_period_ms == 0 || self.max_block_txs == 0 {
            return Err(ConfigError::rule(
                "round_period_ms and max_block_txs must be positive",
            ));
        }
        self.attack
            .validate()
            .map_err(|e| ConfigError::rule(e.to_string()))?;
        Ok(())
    }

    /// The consent threshold in basis points — consensus arithmetic is
    /// integer end to end.
    pub fn tau_bp(&self) -> BasisPoints {
        (self.tau * 10_000.0).round() as BasisPoints
    }

    pub fn sig_scheme(&self) -> SigScheme {
        if self.fast_crypto {
            SigScheme::FastMac
        } else {
            SigScheme::Ed25519
        }
    }

    /// The protected population: everything an attacker can take down.
    /// The controller is infrastructure, not a counted node.
    pub fn nodes_total(&self) -> u64 {
        u64::from(self.sensors)
            + u64::from(self.gateways)
            + u64::from(self.switches)
            + u64::from(self.miners)
    }

    /// The complete effective configuration in parseable form; feeding the
    /// dump back through [`Scenario::parse`] reproduces `self` exactly.
    pub fn dump_effective(&self) -> String {
        let a = &self.attack;
        format!(
            "[sim]\n\
             duration_s = {}\n\
             seed = {}\n\
             variant = {}\n\
             metric_window_s = {}\n\
             \n[field]\n\
             field_width_m = {}\n\
             field_height_m = {}\n\
             \n[nodes]\n\
             sensors = {}\n\
             gateways = {}\n\
             switches = {}\n\
             miners = {}\n\
             radio_range_m = {}\n\
             gen_interval_ms = {}\n\
             packet_size_bytes = {}\n\
             speed_min_mps = {}\n\
             speed_max_mps = {}\n\
             pause_min_ms = {}\n\
             pause_max_ms = {}\n\
             mobility_step_ms = {}\n\
             \n[links]\n\
             link_latency_ms = {}\n\
             link_capacity_pps = {}\n\
             link_queue_limit = {}\n\
             ctrl_latency_ms = {}\n\
             radio_latency_ms = {}\n\
             rule_idle_timeout_ms = {}\n\
             \n[ledger]\n\
             tau = {}\n\
             round_period_ms = {}\n\
             max_block_txs = {}\n\
             fast_crypto = {}\n\
             vote_delay_ms = {}\n\
             \n[attack]\n\
             attackers = {}\n\
             tamper_prob = {}\n\
             flood_rate_pps = {}\n\
             compromise_attempt_rate = {}\n\
             compromise_success_core = {}\n\
             compromise_success_distb = {}\n\
             forge_rate = {}\n",
            self.duration_s,
            self.seed,
            self.variant.label(),
            self.metric_window_s,
            self.field_width_m,
            self.field_height_m,
            self.sensors,
            self.gateways,
            self.switches,
            self.miners,
            self.radio_range_m,
            self.gen_interval_ms,
            self.packet_size_bytes,
            self.speed_min_mps,
            self.speed_max_mps,
            self.pause_min_ms,
            self.pause_max_ms,
            self.mobility_step_ms,
            self.link_latency_ms,
            self.link_capacity_pps,
            self.link_queue_limit,
            self.ctrl_latency_ms,
            self.radio_latency_ms,
            self.rule_idle_timeout_ms,
            self.tau,
            self.round_period_ms,
            self.max_block_txs,
            self.fast_crypto,
            self.vote_delay_ms,
            a.attacker_count,
            a.tamper_prob,
            a.flood_rate,
            a.compromise_attempt_rate,
            a.compromise_success_core,
            a.compromise_success_distb,
            a.forge_block_rate,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_input_is_all_defaults() {
        let cfg = Scenario::parse("").unwrap();
        assert_eq!(cfg, Scenario::default());
        cfg.validate(false).unwrap();
    }

    #[test]
    fn dump_round_trips_exactly() {
        let mut cfg = Scenario::default();
        cfg.seed = 1234;
        cfg.tau = 0.75;
        cfg.sensors = 17;
        cfg.radio_range_m = 812.5;
        cfg.fast_crypto = true;
        cfg.variant = VariantChoice::Distb;
        cfg.attack.attacker_count = 3;
        cfg.attack.tamper_prob = 0.025;
        cfg.attack.compromise_attempt_rate = 1.5;
        let reparsed = Scenario::parse(&cfg.dump_effective()).unwrap();
        assert_eq!(reparsed, cfg);
    }

    #[test]
    fn comments_sections_and_spacing_are_tolerated() {
        let text = "\
# experiment knobs
[sim]
duration_s=120   # compact form
seed = 7

[attack]
tamper_prob = 0.1
";
        let cfg = Scenario::parse(text).unwrap();
        assert_eq!(cfg.duration_s, 120);
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.attack.tamper_prob, 0.1);
    }

    #[test]
    fn unknown_keys_and_sections_fail_with_line_numbers() {
        let err = Scenario::parse("seed = 1\nbogus_knob = 3\n").unwrap_err();
        assert_eq!(err.line, Some(2));
        assert!(err.message.contains("bogus_knob"));

        let err = Scenario::parse("\n\n[warp_drive]\n").unwrap_err();
        assert_eq!(err.line, Some(3));
        assert!(err.message.contains("warp_drive"));
    }

    #[test]
    fn malformed_values_fail_with_line_numbers() {
        let err = Scenario::parse("duration_s = soon\n").unwrap_err();
        assert_eq!(err.line, Some(1));
        assert!(err.message.contains("soon"));

        let err = Scenario::parse("fast_crypto = yes\n").unwrap_err();
        assert_eq!(err.line, Some(1));

        let err = Scenario::parse("just a line\n").unwrap_err();
        assert_eq!(err.line, Some(1));
        assert!(err.message.contains("key = value"));
    }

    #[test]
    fn duplicate_keys_are_rejected() {
        let err = Scenario::parse("seed = 1\nseed = 2\n").unwrap_err();
        assert_eq!(err.line, Some(2));
        assert!(err.message.contains("duplicate"));
    }

    #[test]
    fn consent_band_is_enforced_in_basis_points() {
        let mut cfg = Scenario::default();
        for ok in [0.60, 0.66, 0.75, 0.80] {
            cfg.tau = ok;
            cfg.validate(false).unwrap();
        }
        for bad in [0.5999, 0.0, 0.81, 1.0] {
            cfg.tau = bad;
            assert!(cfg.validate(false).is_err(), "tau = {bad} slipped through");
        }
    }

    #[test]
    fn packet_size_whitelist_has_an_escape_hatch() {
        let mut cfg = Scenario::default();
        for ok in REFERENCE_PACKET_SIZES {
            cfg.packet_size_bytes = *ok;
            cfg.validate(false).unwrap();
        }
        cfg.packet_size_bytes = 512;
        assert!(cfg.validate(false).is_err());
        cfg.validate(true).unwrap();
    }

    #[test]
    fn physical_sanity_rules_hold() {
        let mut cfg = Scenario::default();
        cfg.speed_min_mps = 25.0; // above speed_max
        assert!(cfg.validate(false).is_err());

        let mut cfg = Scenario::default();
        cfg.metric_window_s = 700; // longer than the run
        assert!(cfg.validate(false).is_err());

        let mut cfg = Scenario::default();
        cfg.miners = 0;
        assert!(cfg.validate(false).is_err());

        let mut cfg = Scenario::default();
        cfg.attack.compromise_success_core = 1.2;
        assert!(cfg.validate(false).is_err());
    }

    #[test]
    fn sweep_setter_shares_the_parser_vocabulary() {
        let mut cfg = Scenario::default();
        cfg.set("tau", "0.75").unwrap();
        assert_eq!(cfg.tau, 0.75);
        cfg.set("gen_interval_ms", "250").unwrap();
        assert_eq!(cfg.gen_interval_ms, 250);
        let err = cfg.set("warp_factor", "9").unwrap_err();
        assert!(err.message.contains("warp_factor"));
        assert_eq!(err.line, None);
    }

    #[test]
    fn population_excludes_the_controller() {
        let cfg = Scenario::default();
        assert_eq!(cfg.nodes_total(), 32 + 4 + 9 + 5);
    }
}
