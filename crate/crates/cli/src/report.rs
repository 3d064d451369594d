//! Markdown summary of a run next to the reference values.

use std::fmt::Write as _;

use anyhow::Result;
use flextm_core::ppa::LATENCY_CYCLES;
use flextm_core::{EnsembleReport, ModelTag};

use crate::manifest::RunManifest;
use crate::pipeline::{
    read_json, EquivFile, PpaSummary, PruneSummary, SimSummary, StatsFile, ENSEMBLE, EQUIV, PPA_SUMMARY,
    PRUNE_SUMMARY, SIM_SUMMARY, STATS,
};

/// Reference values and acceptance bands for one configuration.
#[derive(Debug, Clone, Copy)]
pub struct Reference {
    pub mean_accuracy: f64,
    pub best_accuracy: f64,
    pub included_tas: usize,
    pub gates: f64,
    pub min_mean_accuracy: f64,
    pub min_best_accuracy: f64,
    pub included_band: (usize, usize),
    pub gate_band: (f64, f64),
}

pub fn reference(tag: ModelTag) -> Reference {
    match tag {
        ModelTag::Full => Reference {
            mean_accuracy: 0.98,
            best_accuracy: 0.985,
            included_tas: 9200,
            gates: 6800.0,
            min_mean_accuracy: 0.965,
            min_best_accuracy: 0.975,
            included_band: (4000, 16000),
            gate_band: (3400.0, 14000.0),
        },
        ModelTag::Compact => Reference {
            mean_accuracy: 0.89,
            best_accuracy: 0.93,
            included_tas: 559,
            gates: 1420.0,
            min_mean_accuracy: 0.85,
            min_best_accuracy: 0.90,
            included_band: (250, 1500),
            gate_band: (700.0, 3000.0),
        },
    }
}

struct Table(String);

impl Table {
    fn new() -> Self {
        Table(String::from(
            "| Metric | Reference | This run | Acceptance | Status |\n|---|---|---|---|---|\n",
        ))
    }

    fn row(&mut self, metric: &str, reference: String, ours: String, band: &str, ok: Option<bool>) {
        let status = match ok {
            Some(true) => "pass",
            Some(false) => "FAIL",
            None => "-",
        };
        writeln!(self.0, "| {metric} | {reference} | {ours} | {band} | {status} |").unwrap();
    }
}

fn pct(x: f64) -> String {
    format!("{:.2}%", 100.0 * x)
}

/// Renders the summary. Only artifacts listed in the manifest are read, so
/// the output is a pure function of the manifest and those files.
pub fn render_report(manifest: &RunManifest) -> Result<String> {
    let mut out = String::from("# Run report\n");
    if manifest.steps.is_empty() {
        return Ok(out);
    }
    let tag = manifest.model.unwrap_or(ModelTag::Compact);
    let r = reference(tag);
    let name = match tag {
        ModelTag::Full => "full",
        ModelTag::Compact => "compact",
    };
    writeln!(out, "\nConfiguration: {name} (config sha256 `{}`)\n", &manifest.config_sha256[..16]).unwrap();

    let mut t = Table::new();
    if let Some(p) = manifest.artifact_path(ENSEMBLE) {
        let e: EnsembleReport = read_json(&p)?;
        t.row(
            &format!("Mean test accuracy ({} seeds)", e.entries.len()),
            pct(r.mean_accuracy),
            pct(e.mean_accuracy),
            &format!(">= {}", pct(r.min_mean_accuracy)),
            Some(e.mean_accuracy >= r.min_mean_accuracy),
        );
        t.row(
            "Best test accuracy",
            pct(r.best_accuracy),
            format!("{} (seed {})", pct(e.max_accuracy), e.best_seed),
            &format!(">= {}", pct(r.min_best_accuracy)),
            Some(e.max_accuracy >= r.min_best_accuracy),
        );
    }
    if let Some(p) = manifest.artifact_path(PRUNE_SUMMARY) {
        let s: PruneSummary = read_json(&p)?;
        let (lo, hi) = r.included_band;
        t.row(
            "Included TAs (selected model)",
            r.included_tas.to_string(),
            format!(
                "{} in {} of {} clauses",
                s.included_after_removal, s.clauses_nonempty, s.clauses_total
            ),
            &format!("[{lo}, {hi}]"),
            Some((lo..=hi).contains(&s.included_after_removal)),
        );
        let a = &s.agreement;
        t.row(
            "Pruned vs trained inference",
            "identical".into(),
            format!(
                "{}/{} test, {}/{} random",
                a.test_agree, a.test_total, a.random_agree, a.random_total
            ),
            "100%",
            Some(a.passed()),
        );
    }
    if let Some(p) = manifest.artifact_path(STATS) {
        let s: StatsFile = read_json(&p)?;
        let (lo, hi) = r.gate_band;
        t.row(
            "Gate count (NAND2-eq)",
            format!("{}", r.gates),
            format!(
                "{:.1} ({} INV, {} NAND2, {} DFF)",
                s.gate_count, s.stats.inv, s.stats.nand2, s.stats.dff
            ),
            &format!("[{lo}, {hi}]"),
            Some(s.gate_count >= lo && s.gate_count <= hi),
        );
    }
    if let Some(p) = manifest.artifact_path(SIM_SUMMARY) {
        let s: SimSummary = read_json(&p)?;
        t.row(
            "Latency (rising edges)",
            "3".into(),
            format!("{} ({} vectors, {} mismatches)", s.latency_cycles, s.vectors, s.mismatches),
            "exactly 3",
            Some(s.latency_cycles == 3 && s.mismatches == 0),
        );
        t.row(
            "Throughput (results/cycle)",
            "1".into(),
            format!("{:.3}", s.throughput),
            "1",
            Some((s.throughput - 1.0).abs() < 1e-12),
        );
    }
    if let Some(p) = manifest.artifact_path(EQUIV) {
        let e: EquivFile = read_json(&p)?;
        t.row(
            "Netlist vs software mismatches",
            "0".into(),
            format!(
                "{} of {} test, {} of {} random",
                e.test.mismatches.len(),
                e.test.samples,
                e.random.mismatches.len(),
                e.random.samples
            ),
            "0",
            Some(e.passed),
        );
    }
    if let Some(p) = manifest.artifact_path(PPA_SUMMARY) {
        let s: PpaSummary = read_json(&p)?;
        for res in &s.residuals {
            let unit = if res.quantity == "gates" { "" } else { " mW" };
            t.row(
                &format!("Compact fit: {} at {} us (modeled)", res.quantity, res.period_us),
                format!("{}{unit}", res.anchor),
                format!("{:.3}{unit}", res.modeled),
                "within 5%",
                Some(res.relative_error <= 0.05),
            );
        }
        if let Some((power, area)) = s.reductions_pct {
            t.row(
                "Power reduction 4 -> 15 us (modeled)",
                "27%".into(),
                format!("{power:.1}%"),
                "+/- 5 pp",
                Some((power - 27.0).abs() <= 5.0),
            );
            t.row(
                "Area reduction 4 -> 15 us (modeled)",
                "12%".into(),
                format!("{area:.1}%"),
                "+/- 5 pp",
                Some((area - 12.0).abs() <= 5.0),
            );
        }
        if let (Some(fast), Some(min)) = (s.fastest_feasible_period, s.energy_min_period) {
            let (expected, ok) = match tag {
                ModelTag::Compact => ("at fastest feasible period", min == fast),
                ModelTag::Full => ("above fastest feasible period", min > fast),
            };
            t.row(
                "Energy minimum (modeled)",
                expected.into(),
                format!("{min} us (fastest feasible {fast} us)"),
                expected,
                Some(ok),
            );
        }
        writeln!(
            out,
            "PPA figures are modeled: base {:.1} NAND2-eq, static {:.4e} mW per gate, dynamic fraction {:.3}, \
             inflation k = {:.4}. Latency-mode energy is {} times the throughput-mode energy.\n",
            s.base_gate_count,
            s.config.static_power_per_gate,
            s.config.dynamic_fraction,
            s.config.inflation_coefficient,
            LATENCY_CYCLES
        )
        .unwrap();
    }
    out.push_str(&t.0);

    out.push_str("\n## Steps\n\n| Step | Status | Seconds | Artifacts |\n|---|---|---|---|\n");
    for s in &manifest.steps {
        let files: Vec<&str> = s.artifacts.iter().map(|a| a.path.as_str()).collect();
        writeln!(
            out,
            "| {} | {} | {:.1} | {} |",
            s.step,
            if s.ok { "ok" } else { "failed" },
            s.wall_seconds,
            files.join(", ")
        )
        .unwrap();
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::Path;

    #[test]
    fn empty_manifest_gives_header_only() {
        let m = RunManifest::empty(Path::new("."));
        assert_eq!(render_report(&m).unwrap(), "# Run report\n");
    }
}
