//! Run orchestration: single runs, seed-locked variant comparisons,
//! parameter sweeps, and report emission (CSV, charts, chain export).
//!
//! A comparison run executes the two variants as two independent worlds
//! built from the *same* scenario and seed, so every honest draw and every
//! attack draw line up; the merged report interleaves their windows row by
//! row. Sweeps run fully isolated simulations per parameter value — with
//! the `parallel` feature they fan out across threads, and because worlds
//! share no state the merged output is identical either way.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::metrics::{write_csv, MetricSample};
use crate::scenario::{ConfigError, Scenario, VariantChoice};
use crate::svg::{line_chart, Series};
use crate::world::{World, WorldReport};
use crate::Variant;

const CORE_COLOR: &str = "#d62728";
const DISTB_COLOR: &str = "#1f77b4";

/// Everything one scenario execution produced.
#[derive(Debug)]
pub struct RunOutput {
    pub scenario: Scenario,
    /// One report per simulated variant, core first in a comparison.
    pub reports: Vec<WorldReport>,
    /// The merged, row-ordered CSV document.
    pub csv: String,
}

/// Simulates a validated scenario (one or both variants).
pub fn run_scenario(cfg: &Scenario, tracing: bool) -> RunOutput {
    let variants: &[Variant] = match cfg.variant {
        VariantChoice::Core => &[Variant::Core],
        VariantChoice::Distb => &[Variant::Distb],
        VariantChoice::Both => &[Variant::Core, Variant::Distb],
    };
    let reports: Vec<WorldReport> = variants
        .iter()
        .map(|&v| {
            let mut world = World::new(cfg, v);
            world.set_tracing(tracing);
            world.run_to_end()
        })
        .collect();
    let csv = write_csv(&merge_samples(&reports));
    RunOutput {
        scenario: cfg.clone(),
        reports,
        csv,
    }
}

/// Interleaves per-variant windows: for each window boundary, the core row
/// precedes the distb row, matching side-by-side reading of the CSV.
fn merge_samples(reports: &[WorldReport]) -> Vec<MetricSample> {
    let longest = reports.iter().map(|r| r.samples.len()).max().unwrap_or(0);
    let mut rows = Vec::new();
    for k in 0..longest {
        for report in reports {
            if let Some(s) = report.samples.get(k) {
                rows.push(*s);
            }
        }
    }
    rows
}

/// Sequential reference implementation of a multi-scenario batch.
pub fn run_many_sequential(cfgs: &[Scenario]) -> Vec<RunOutput> {
    cfgs.iter().map(|c| run_scenario(c, false)).collect()
}

/// Batch execution, data-parallel when the `parallel` feature is on.
/// Runs are isolated worlds, so the outputs are identical to the
/// sequential path in content and order.
#[cfg(feature = "parallel")]
pub fn run_many(cfgs: &[Scenario]) -> Vec<RunOutput> {
    cfgs.par_iter().map(|c| run_scenario(c, false)).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn run_many(cfgs: &[Scenario]) -> Vec<RunOutput> {
    run_many_sequential(cfgs)
}

/// One sweep point: the parameter value and what it produced.
#[derive(Debug)]
pub struct SweepPoint {
    pub value: String,
    pub output: RunOutput,
}

/// Runs the base scenario once per value of `param`. Every derived
/// scenario is validated before anything runs, so a bad value fails fast
/// instead of wasting the batch.
pub fn sweep(
    base: &Scenario,
    param: &str,
    values: &[String],
    allow_nonpaper: bool,
) -> Result<Vec<SweepPoint>, ConfigError> {
    let mut cfgs = Vec::with_capacity(values.len());
    for v in values {
        let mut cfg = base.clone();
        cfg.set(param, v)?;
        cfg.validate(allow_nonpaper)?;
        cfgs.push(cfg);
    }
    let outputs = run_many(&cfgs);
    Ok(values
        .iter()
        .cloned()
        .zip(outputs)
        .map(|(value, output)| SweepPoint { value, output })
        .collect())
}

/// Renders the three comparison charts from a run's merged samples.
fn charts(output: &RunOutput) -> Vec<(&'static str, String)> {
    let series_for = |f: &dyn Fn(&MetricSample) -> (f64, f64)| -> Vec<Series> {
        output
            .reports
            .iter()
            .map(|r| Series {
                label: r.variant.label().to_string(),
                color: match r.variant {
                    Variant::Core => CORE_COLOR.to_string(),
                    Variant::Distb => DISTB_COLOR.to_string(),
                },
                points: r.samples.iter().map(|s| f(s)).collect(),
            })
            .collect()
    };
    vec![
        (
            "throughput.svg",
            line_chart(
                "Delivered throughput vs offered load",
                "packets sent (cumulative)",
                "delivered packets/s",
                &series_for(&|s| (s.cumulative_sent as f64, s.throughput_pps)),
            ),
        ),
        (
            "security_rate.svg",
            line_chart(
                "Verified-delivery rate vs offered load",
                "packets sent (cumulative)",
                "security rate (%)",
                &series_for(&|s| (s.cumulative_sent as f64, s.security_rate_pct)),
            ),
        ),
        (
            "node_failure.svg",
            line_chart(
                "Failed nodes over time",
                "time (s)",
                "failed nodes (%)",
                &series_for(&|s| (s.window_end.as_secs_f64(), s.node_failure_pct)),
            ),
        ),
    ]
}

/// Writes the full report set for one run into `out_dir`, creating it as
/// needed. Returns the paths written, in a fixed order.
pub fn emit_outputs(out_dir: &Path, output: &RunOutput) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    let put = |name: &str, contents: &str| -> io::Result<PathBuf> {
        let path = out_dir.join(name);
        fs::write(&path, contents)?;
        Ok(path)
    };
    written.push(put("metrics.csv", &output.csv)?);
    written.push(put("effective.cfg", &output.scenario.dump_effective())?);
    for (name, svg) in charts(output) {
        written.push(put(name, &svg)?);
    }
    for report in &output.reports {
        if let Some(chain) = &report.chain {
            let mut lines = chain.export_lines().join("\n");
            lines.push('\n');
            written.push(put("chain.tsv", &lines)?);
        }
        if !report.trace.is_empty() {
            let mut trace = report.trace.join("\n");
            trace.push('\n');
            written.push(put(&format!("trace_{}.tsv", report.variant), &trace)?);
        }
    }
    Ok(written)
}

/// Per-sweep-point directory name: `param=value`, with anything awkward
/// for a filesystem replaced.
pub fn sweep_dir_name(param: &str, value: &str) -> String {
    let clean = |s: &str| -> String {
        s.chars()
            .map(|c| {
                if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') {
                    c
                } else {
                    '_'
                }
            })
            .collect()
    };
    format!("{}={}", clean(param), clean(value))
}

/// Writes every sweep point under its own subdirectory plus a one-row-per
/// point summary CSV at the top level.
pub fn emit_sweep(out_dir: &Path, param: &str, points: &[SweepPoint]) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    let mut summary = String::from(
        "param,value,variant,sent,delivered,delivered_verified,dropped_no_route,\
         dropped_congestion,dropped_security,insecure_delivered,nodes_failed\n",
    );
    for point in points {
        let dir = out_dir.join(sweep_dir_name(param, &point.value));
        written.extend(emit_outputs(&dir, &point.output)?);
        for report in &point.output.reports {
            let c = report.cumulative;
            summary.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{}\n",
                crate::metrics::csv_field(param),
                crate::metrics::csv_field(&point.value),
                report.variant,
                c.sent,
                c.delivered,
                c.delivered_verified,
                c.dropped_no_route,
                c.dropped_congestion,
                c.dropped_security,
                c.insecure_delivered,
                report.nodes_failed,
            ));
        }
    }
    let summary_path = out_dir.join("sweep_summary.csv");
    fs::write(&summary_path, summary)?;
    written.push(summary_path);
    Ok(written)
}

/// Human-readable run summary for the inspection surface.
pub fn describe(output: &RunOutput) -> String {
    let mut out = String::new();
    for report in &output.reports {
        let c = report.cumulative;
        out.push_str(&format!("== variant {} ==\n", report.variant));
        out.push_str(&format!(
            "events processed     {}\n",
            report.events_processed
        ));
        out.push_str(&format!(
            "packets              sent {} / delivered {} (verified {}, insecure {}) / in flight {}\n",
            c.sent, c.delivered, c.delivered_verified, c.insecure_delivered,
            report.conservation.in_flight
        ));
        out.push_str(&format!(
            "drops                no-route {} / congestion {} / security {}\n",
            c.dropped_no_route, c.dropped_congestion, c.dropped_security
        ));
        out.push_str(&format!(
            "conservation         {}\n",
            if report.conservation.holds() {
                "ok"
            } else {
                "VIOLATED"
            }
        ));
        out.push_str(&format!(
            "nodes failed         {} of {}\n",
            report.nodes_failed,
            output.scenario.nodes_total()
        ));
        let f = report.fabric;
        out.push_str(&format!(
            "fabric               packet-ins {} / flow-mods {} (lost {}) / port-status {} / rules expired {}\n",
            f.packet_ins, f.flow_mods, f.flow_mods_lost, f.port_status, f.rules_expired
        ));
        let k = report.consensus;
        if let Some(chain) = &report.chain {
            out.push_str(&format!(
                "consensus            rounds {} (accepted {} / rejected {} / skipped {})\n",
                k.rounds_started, k.rounds_accepted, k.rounds_rejected, k.rounds_skipped
            ));
            out.push_str(&format!(
                "forgery              attempts {} / quorum {} / refused by honest {} / commits refused {}\n",
                k.forge_attempts, k.forge_quorum, k.forge_refused_by_honest, k.commits_refused
            ));
            out.push_str(&format!(
                "chain                height {} / txs {} / audit {}\n",
                chain.height(),
                chain.tx_count(),
                if chain.verify() { "ok" } else { "FAILED" }
            ));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick_cfg() -> Scenario {
        let mut cfg = Scenario::default();
        cfg.duration_s = 30;
        cfg.metric_window_s = 10;
        cfg.sensors = 6;
        cfg.gateways = 2;
        cfg.switches = 4;
        cfg.miners = 4;
        cfg.radio_range_m = 1600.0;
        cfg.gen_interval_ms = 500;
        cfg.fast_crypto = true;
        cfg
    }

    #[test]
    fn comparison_runs_interleave_core_before_distb() {
        let out = run_scenario(&quick_cfg(), false);
        assert_eq!(out.reports.len(), 2);
        assert_eq!(out.reports[0].variant, Variant::Core);
        let mut lines = out.csv.lines();
        lines.next(); // header
        let first = lines.next().unwrap();
        let second = lines.next().unwrap();
        assert!(first.starts_with("core,10000,"));
        assert!(second.starts_with("distb,10000,"));
        // 3 windows x 2 variants + header.
        assert_eq!(out.csv.lines().count(), 7);
    }

    #[test]
    fn repeated_runs_are_byte_identical() {
        let a = run_scenario(&quick_cfg(), false);
        let b = run_scenario(&quick_cfg(), false);
        assert_eq!(a.csv, b.csv);
    }

    /// In a quiet network, the ledger variant pays only overhead: delivery
    /// and failure metrics must match the baseline almost exactly.
    #[test]
    fn zero_attack_runs_are_equivalent_across_variants() {
        let out = run_scenario(&quick_cfg(), false);
        let core = &out.reports[0];
        let distb = &out.reports[1];
        assert_eq!(core.cumulative.sent, distb.cumulative.sent);
        let dc = core.cumulative.delivered as f64;
        let dd = distb.cumulative.delivered as f64;
        assert!(
            (dc - dd).abs() / dc.max(1.0) < 0.01,
            "quiet deliveries diverged: {dc} vs {dd}"
        );
        assert_eq!(core.nodes_failed, 0);
        assert_eq!(distb.nodes_failed, 0);
        assert_eq!(core.cumulative.dropped_security, 0);
        assert_eq!(distb.cumulative.dropped_security, 0);
    }

    #[test]
    fn sweep_validates_before_running_and_keeps_value_order() {
        let mut base = quick_cfg();
        base.duration_s = 10;
        base.variant = VariantChoice::Distb;
        let values: Vec<String> = ["0.6", "0.75"].iter().map(|s| s.to_string()).collect();
        let points = sweep(&base, "tau", &values, false).unwrap();
        assert_eq!(points.len(), 2);
        assert_eq!(points[0].value, "0.6");
        assert_eq!(points[1].value, "0.75");

        let bad: Vec<String> = vec!["0.9".into()];
        assert!(sweep(&base, "tau", &bad, false).is_err(), "out of band");
        assert!(sweep(&base, "no_such_param", &values, false).is_err());
    }

    #[test]
    fn parallel_and_sequential_batches_agree() {
        let mut cfgs = Vec::new();
        for seed in [1u64, 2, 3, 4] {
            let mut c = quick_cfg();
            c.duration_s = 10;
            c.seed = seed;
            cfgs.push(c);
        }
        let seq = run_many_sequential(&cfgs);
        let batch = run_many(&cfgs);
        assert_eq!(seq.len(), batch.len());
        for (a, b) in seq.iter().zip(&batch) {
            assert_eq!(a.csv, b.csv);
        }
    }

    #[test]
    fn emitted_files_land_where_promised() {
        let dir = std::env::temp_dir().join(format!(
            "distb-runner-test-{}-{}",
            std::process::id(),
            std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .unwrap()
                .as_nanos()
        ));
        let mut cfg = quick_cfg();
        cfg.duration_s = 10;
        let out = run_scenario(&cfg, true);
        let files = emit_outputs(&dir, &out).unwrap();
        let names: Vec<String> = files
            .iter()
            .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
            .collect();
        for expected in [
            "metrics.csv",
            "effective.cfg",
            "throughput.svg",
            "security_rate.svg",
            "node_failure.svg",
            "chain.tsv",
            "trace_core.tsv",
            "trace_distb.tsv",
        ] {
            assert!(names.iter().any(|n| n == expected), "missing {expected}");
        }
        let csv = fs::read_to_string(dir.join("metrics.csv")).unwrap();
        assert_eq!(csv, out.csv);
        // The effective config round-trips through the parser.
        let dumped = fs::read_to_string(dir.join("effective.cfg")).unwrap();
        assert_eq!(Scenario::parse(&dumped).unwrap(), cfg);
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn sweep_emission_writes_per_point_directories() {
        let dir = std::env::temp_dir().join(format!(
            "distb-sweep-test-{}-{}",
            std::process::id(),
            std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .unwrap()
                .as_nanos()
        ));
        let mut base = quick_cfg();
        base.duration_s = 10;
        base.variant = VariantChoice::Core;
        let values: Vec<String> = vec!["500".into(), "250".into()];
        let points = sweep(&base, "gen_interval_ms", &values, false).unwrap();
        emit_sweep(&dir, "gen_interval_ms", &points).unwrap();
        assert!(dir.join("gen_interval_ms=500/metrics.csv").exists());
        assert!(dir.join("gen_interval_ms=250/metrics.csv").exists());
        let summary = fs::read_to_string(dir.join("sweep_summary.csv")).unwrap();
        assert_eq!(summary.lines().count(), 3, "header + one row per point");
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn description_mentions_the_essentials() {
        let mut cfg = quick_cfg();
        cfg.duration_s = 10;
        let out = run_scenario(&cfg, false);
        let text = describe(&out);
        assert!(text.contains("variant core"));
        assert!(text.contains("variant distb"));
        assert!(text.contains("conservation         ok"));
        assert!(text.contains("audit ok"));
    }
}
