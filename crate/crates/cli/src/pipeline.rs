//! Fixed step graph from raw data to PPA sweep.

use std::cell::OnceCell;
use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use flextm_core::dataset::class_histogram;
use flextm_core::hwgen::{emit_hdl, DEFAULT_MODULE};
use flextm_core::ppa::{
    anchor_residuals, calibrate, energy_minimum, parse_periods, reductions, sweep, sweep_csv, AnchorResidual,
    CalibrationTable, Calibration,
};
use flextm_core::prune::ClassComplexity;
use flextm_core::sim::{export_vectors, load_vectors, measure_duty_low, random_samples, simulate, Stimulus, LATENCY};
use flextm_core::train::{evaluate, generate_ensemble, train};
use flextm_core::{
    build_netlist, check_equivalence, count_included, gate_count, netlist_stats, prune, BoolSample, Dataset,
    EnsembleReport, EquivalenceReport, GateWeights, ModelTag, Netlist, NetlistStats, PpaConfig, PrunedModel,
    TmModel,
};
use serde::{Deserialize, Serialize};

use crate::config::ProjectConfig;
use crate::manifest::{record, write_atomic, RunManifest, StepRecord};
use crate::report::render_report;

pub const DATA_SUMMARY: &str = "data_summary.json";
pub const MODEL: &str = "model.json";
pub const ENSEMBLE: &str = "ensemble.json";
pub const BEST_MODEL: &str = "best_model.json";
pub const PRUNED: &str = "pruned.json";
pub const PRUNE_SUMMARY: &str = "prune_summary.json";
pub const NETLIST: &str = "netlist.json";
pub const HDL: &str = "tm.v";
pub const STATS: &str = "stats.json";
pub const VECTORS: &str = "vectors.txt";
pub const TRACE: &str = "trace.csv";
pub const SIM_SUMMARY: &str = "sim_summary.json";
pub const EQUIV: &str = "equiv.json";
pub const PPA_CSV: &str = "ppa.csv";
pub const PPA_SUMMARY: &str = "ppa.json";
pub const REPORT: &str = "report.md";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Step {
    Data,
    Train,
    Ensemble,
    Prune,
    EmitRtl,
    Simulate,
    Equiv,
    Ppa,
    Report,
}

impl Step {
    pub const ALL: [Step; 9] = [
        Step::Data,
        Step::Train,
        Step::Ensemble,
        Step::Prune,
        Step::EmitRtl,
        Step::Simulate,
        Step::Equiv,
        Step::Ppa,
        Step::Report,
    ];

    /// Everything except the single-seed `train` step.
    pub fn default_set() -> BTreeSet<Step> {
        Step::ALL.into_iter().filter(|s| *s != Step::Train).collect()
    }

    pub fn name(self) -> &'static str {
        match self {
            Step::Data => "data",
            Step::Train => "train",
            Step::Ensemble => "ensemble",
            Step::Prune => "prune",
            Step::EmitRtl => "emit-rtl",
            Step::Simulate => "simulate",
            Step::Equiv => "equiv",
            Step::Ppa => "ppa",
            Step::Report => "report",
        }
    }
}

impl fmt::Display for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Step {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        Step::ALL
            .into_iter()
            .find(|step| step.name() == s)
            .ok_or_else(|| anyhow!("unknown step {s:?}"))
    }
}

pub fn parse_steps(list: &str) -> Result<BTreeSet<Step>> {
    list.split(',').map(|s| s.trim().parse()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSummary {
    pub train_file: PathBuf,
    pub test_file: PathBuf,
    pub train_sha256: String,
    pub test_sha256: String,
    pub threshold: u8,
    pub train_samples: usize,
    pub test_samples: usize,
    pub train_histogram: Vec<usize>,
    pub test_histogram: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementCheck {
    pub test_agree: usize,
    pub test_total: usize,
    pub random_agree: usize,
    pub random_total: usize,
}

impl AgreementCheck {
    pub fn passed(&self) -> bool {
        self.test_agree == self.test_total && self.random_agree == self.random_total
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneSummary {
    pub source_seed: u64,
    pub source_test_accuracy: f64,
    pub clauses_total: usize,
    pub clauses_nonempty: usize,
    /// Included TAs over all clauses of the trained model.
    pub included_before_removal: usize,
    /// Included TAs over the clauses kept after removing empty ones.
    pub included_after_removal: usize,
    pub complexity: Vec<ClassComplexity>,
    pub clause_size_histogram: Vec<usize>,
    pub agreement: AgreementCheck,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsFile {
    pub stats: NetlistStats,
    pub weights: GateWeights,
    pub gate_count: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSummary {
    pub vectors: usize,
    pub cycles: usize,
    pub latency_cycles: usize,
    pub mismatches: usize,
    /// Results delivered per cycle once the pipeline is full.
    pub throughput: f64,
    pub duty_low: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivFile {
    pub test: EquivalenceReport,
    pub random: EquivalenceReport,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpaSummary {
    pub label: String,
    pub model: ModelTag,
    pub base_gate_count: f64,
    pub config: PpaConfig,
    pub calibration: Calibration,
    /// Compact fit evaluated at the compact anchors.
    pub residuals: Vec<AnchorResidual>,
    /// `(power, area)` reduction in percent between the compact anchor periods.
    pub reductions_pct: Option<(f64, f64)>,
    pub fastest_feasible_period: Option<f64>,
    pub energy_min_period: Option<f64>,
}

/// Streams vectors through the netlist and compares each expected output
/// `LATENCY` cycles later. Returns the trace and the summary.
pub fn run_vectors(netlist: &Netlist, vectors: &[(u64, u8)]) -> Result<(flextm_core::Trace, SimSummary)> {
    let inputs: Vec<u64> = vectors.iter().map(|v| v.0).collect();
    let stim = Stimulus::stream(&inputs, 1, LATENCY)?;
    let trace = simulate(netlist, &stim)?;
    let ys = trace.outputs();
    let mismatches = vectors
        .iter()
        .enumerate()
        .filter(|(k, v)| ys[1 + k + LATENCY] != v.1)
        .count();
    let duty_low = measure_duty_low(netlist, &stim)?;
    Ok((
        trace,
        SimSummary {
            vectors: vectors.len(),
            cycles: stim.len(),
            latency_cycles: LATENCY,
            mismatches,
            throughput: vectors.len() as f64 / (stim.len() - 1 - LATENCY) as f64,
            duty_low,
        },
    ))
}

/// Pruning plus the semantic check against the unpruned model.
pub fn prune_with_check(
    model: &TmModel,
    test: &[BoolSample],
    random_vectors: usize,
    seed: u64,
) -> Result<(PrunedModel, PruneSummary)> {
    let mut pruned = prune(model);
    let accuracy = evaluate(model, test)?;
    pruned.source_accuracy = Some(accuracy);
    let random = random_samples(random_vectors, seed);
    let agree = |samples: &[BoolSample]| {
        samples
            .iter()
            .filter(|s| flextm_core::infer_pruned(&pruned, s) == model.infer(s))
            .count()
    };
    let agreement = AgreementCheck {
        test_agree: agree(test),
        test_total: test.len(),
        random_agree: agree(&random),
        random_total: random.len(),
    };
    let summary = PruneSummary {
        source_seed: model.seed,
        source_test_accuracy: accuracy,
        clauses_total: model.banks().iter().map(Vec::len).sum(),
        clauses_nonempty: pruned.clause_count(),
        included_before_removal: model.included_count(),
        included_after_removal: count_included(&pruned),
        complexity: pruned.complexity(),
        clause_size_histogram: pruned.clause_size_histogram(),
        agreement,
    };
    Ok((pruned, summary))
}

pub fn ppa_summary(
    tag: ModelTag,
    base: f64,
    periods: Vec<f64>,
    table: &CalibrationTable,
) -> Result<(PpaSummary, Vec<flextm_core::PpaPoint>)> {
    let calibration = calibrate(table)?;
    let config = match tag {
        ModelTag::Compact => calibration.compact.clone(),
        ModelTag::Full => calibration.full.clone(),
    }
    .with_base(base)
    .with_periods(periods);
    let points = sweep(base, &config)?;
    let residuals = anchor_residuals(&calibration.compact, &table.compact.anchors)?;
    let [fast, slow] = [table.compact.anchors[0].period_us, table.compact.anchors[1].period_us];
    let summary = PpaSummary {
        label: "modeled".to_string(),
        model: tag,
        base_gate_count: base,
        reductions_pct: reductions(base, fast, slow, &config).ok(),
        fastest_feasible_period: points.iter().find(|p| p.feasible).map(|p| p.period),
        energy_min_period: energy_minimum(&points).map(|p| p.period),
        config,
        calibration,
        residuals,
    };
    Ok((summary, points))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    write_atomic(&dir.join(name), text.as_bytes())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

struct Ctx<'a> {
    cfg: &'a ProjectConfig,
    dir: &'a Path,
    data: OnceCell<Dataset>,
}

impl Ctx<'_> {
    fn data(&self) -> Result<&Dataset> {
        if let Some(d) = self.data.get() {
            return Ok(d);
        }
        let d = Dataset::load(&self.cfg.data.train_file, &self.cfg.data.test_file, self.cfg.data.threshold)?;
        Ok(self.data.get_or_init(|| d))
    }

    /// Path of an artifact that an earlier step must have produced.
    fn input(&self, name: &str, producer: Step) -> Result<PathBuf> {
        let path = self.dir.join(name);
        if !path.is_file() {
            bail!("missing {name}: run step `{producer}` first");
        }
        Ok(path)
    }

    fn selected_model(&self) -> Result<PathBuf> {
        let best = self.dir.join(BEST_MODEL);
        if best.is_file() {
            return Ok(best);
        }
        let single = self.dir.join(MODEL);
        if single.is_file() {
            return Ok(single);
        }
        bail!("missing {BEST_MODEL}: run step `ensemble` (or `train`) first")
    }
}

fn run_step(step: Step, ctx: &Ctx, manifest: &RunManifest) -> Result<Vec<&'static str>> {
    let cfg = ctx.cfg;
    let dir = ctx.dir;
    match step {
        Step::Data => {
            let data = ctx.data()?;
            let summary = DataSummary {
                train_file: cfg.data.train_file.clone(),
                test_file: cfg.data.test_file.clone(),
                train_sha256: crate::manifest::sha256_hex(&fs::read(&cfg.data.train_file)?),
                test_sha256: crate::manifest::sha256_hex(&fs::read(&cfg.data.test_file)?),
                threshold: data.threshold,
                train_samples: data.train.len(),
                test_samples: data.test.len(),
                train_histogram: class_histogram(&data.train).to_vec(),
                test_histogram: class_histogram(&data.test).to_vec(),
            };
            write_json(dir, DATA_SUMMARY, &summary)?;
            Ok(vec![DATA_SUMMARY])
        }
        Step::Train => {
            let model = train(&cfg.train, ctx.data()?)?;
            log::info!("seed {} test accuracy {:.4}", cfg.train.seed, evaluate(&model, &ctx.data()?.test)?);
            write_atomic(&dir.join(MODEL), model.to_json().as_bytes())?;
            Ok(vec![MODEL])
        }
        Step::Ensemble => {
            let (report, best) = generate_ensemble(&cfg.train, cfg.ensemble.size, ctx.data()?)?;
            log::info!(
                "ensemble of {}: mean {:.4}, best {:.4} (seed {})",
                report.entries.len(),
                report.mean_accuracy,
                report.max_accuracy,
                report.best_seed
            );
            write_json(dir, ENSEMBLE, &report)?;
            write_atomic(&dir.join(BEST_MODEL), best.to_json().as_bytes())?;
            Ok(vec![ENSEMBLE, BEST_MODEL])
        }
        Step::Prune => {
            let model = TmModel::load(ctx.selected_model()?)?;
            let (pruned, summary) =
                prune_with_check(&model, &ctx.data()?.test, cfg.verify.random_vectors, cfg.verify.random_seed)?;
            pruned.save(dir.join(PRUNED))?;
            write_json(dir, PRUNE_SUMMARY, &summary)?;
            if !summary.agreement.passed() {
                bail!("pruned model disagrees with the trained model: {:?}", summary.agreement);
            }
            Ok(vec![PRUNED, PRUNE_SUMMARY])
        }
        Step::EmitRtl => {
            let pruned = PrunedModel::load(ctx.input(PRUNED, Step::Prune)?)?;
            let netlist = build_netlist(&pruned)?;
            netlist.check_pipeline()?;
            let stats = StatsFile {
                stats: netlist_stats(&netlist),
                weights: cfg.weights,
                gate_count: gate_count(&netlist, &cfg.weights),
            };
            write_atomic(&dir.join(HDL), emit_hdl(&netlist, DEFAULT_MODULE)?.as_bytes())?;
            netlist.save(dir.join(NETLIST))?;
            write_json(dir, STATS, &stats)?;
            Ok(vec![HDL, NETLIST, STATS])
        }
        Step::Simulate => {
            let pruned = PrunedModel::load(ctx.input(PRUNED, Step::Prune)?)?;
            let netlist = Netlist::load(ctx.input(NETLIST, Step::EmitRtl)?)?;
            export_vectors(&pruned, &ctx.data()?.test, dir.join(VECTORS))?;
            let vectors = load_vectors(dir.join(VECTORS))?;
            let (trace, summary) = run_vectors(&netlist, &vectors)?;
            write_atomic(&dir.join(TRACE), trace.to_csv().as_bytes())?;
            write_json(dir, SIM_SUMMARY, &summary)?;
            if summary.mismatches > 0 {
                bail!("{} of {} vectors mismatched", summary.mismatches, summary.vectors);
            }
            Ok(vec![VECTORS, TRACE, SIM_SUMMARY])
        }
        Step::Equiv => {
            let pruned = PrunedModel::load(ctx.input(PRUNED, Step::Prune)?)?;
            let netlist = Netlist::load(ctx.input(NETLIST, Step::EmitRtl)?)?;
            let test = check_equivalence(&pruned, &netlist, &ctx.data()?.test)?;
            let random = random_samples(cfg.verify.random_vectors, cfg.verify.random_seed);
            let random = check_equivalence(&pruned, &netlist, &random)?;
            let file = EquivFile {
                passed: test.passed && random.passed,
                test,
                random,
            };
            write_json(dir, EQUIV, &file)?;
            if !file.passed {
                bail!(
                    "netlist disagrees with the pruned model on {} test and {} random vectors",
                    file.test.mismatches.len(),
                    file.random.mismatches.len()
                );
            }
            Ok(vec![EQUIV])
        }
        Step::Ppa => {
            let stats: StatsFile = read_json(&ctx.input(STATS, Step::EmitRtl)?)?;
            let table = match &cfg.ppa.calibration {
                Some(p) => CalibrationTable::load(p)?,
                None => CalibrationTable::default(),
            };
            let periods = parse_periods(&cfg.ppa.periods)?;
            let (summary, points) = ppa_summary(cfg.model, stats.gate_count, periods, &table)?;
            write_atomic(&dir.join(PPA_CSV), sweep_csv(cfg.model, &points).as_bytes())?;
            write_json(dir, PPA_SUMMARY, &summary)?;
            Ok(vec![PPA_CSV, PPA_SUMMARY])
        }
        Step::Report => {
            let text = render_report(manifest)?;
            write_atomic(&dir.join(REPORT), text.as_bytes())?;
            Ok(vec![REPORT])
        }
    }
}

/// Runs the selected steps in dependency order and writes the manifest
/// (also when a step fails, marking it incomplete). The error, if any, is
/// returned alongside the manifest.
pub fn run_pipeline(cfg: &ProjectConfig, steps: &BTreeSet<Step>) -> (RunManifest, Result<()>) {
    let dir = cfg.output.dir.as_path();
    let mut manifest = RunManifest::new(&cfg.to_toml(), dir);
    manifest.model = Some(cfg.model);
    let outcome = (|| -> Result<()> {
        cfg.validate()?;
        cfg.check_paths()?;
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let ctx = Ctx {
            cfg,
            dir,
            data: OnceCell::new(),
        };
        for &step in steps {
            log::info!("step {step}");
            let start = Instant::now();
            let result = run_step(step, &ctx, &manifest);
            let artifacts = match &result {
                Ok(names) => names.iter().map(|n| record(dir, n)).collect::<Result<Vec<_>>>()?,
                Err(_) => Vec::new(),
            };
            manifest.steps.push(StepRecord {
                step: step.name().to_string(),
                ok: result.is_ok(),
                wall_seconds: start.elapsed().as_secs_f64(),
                artifacts,
                error: result.as_ref().err().map(|e| format!("{e:#}")),
            });
            result.with_context(|| format!("step `{step}` failed"))?;
        }
        Ok(())
    })();
    manifest.complete = outcome.is_ok();
    let saved = if dir.as_os_str().is_empty() || fs::create_dir_all(dir).is_ok() {
        manifest.save(dir).map(|_| ())
    } else {
        Err(anyhow!("cannot create {}", dir.display()))
    };
    let outcome = outcome.and(saved);
    (manifest, outcome)
}

/// Convenience for callers that only need the ensemble statistics.
pub fn load_ensemble(path: &Path) -> Result<EnsembleReport> {
    read_json(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(out: &Path) -> ProjectConfig {
        let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data");
        let mut cfg = ProjectConfig::preset(ModelTag::Compact, &data, out);
        cfg.train.epochs = 2;
        cfg.ensemble.size = 2;
        cfg.verify.random_vectors = 200;
        cfg
    }

    #[test]
    fn step_names_round_trip() {
        for s in Step::ALL {
            assert_eq!(s.name().parse::<Step>().unwrap(), s);
        }
        let steps = parse_steps("ppa, data,prune").unwrap();
        assert_eq!(steps.into_iter().collect::<Vec<_>>(), vec![Step::Data, Step::Prune, Step::Ppa]);
        assert!(parse_steps("data,bogus").is_err());
    }

    #[test]
    fn missing_input_names_the_producing_step() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = config(dir.path());
        let (manifest, outcome) = run_pipeline(&cfg, &parse_steps("emit-rtl").unwrap());
        let msg = format!("{:#}", outcome.unwrap_err());
        assert!(msg.contains("missing pruned.json: run step `prune` first"), "{msg}");
        assert!(!manifest.complete);
        assert_eq!(manifest.steps.len(), 1);
        assert!(!manifest.steps[0].ok);
        // the manifest is written even for a failed run
        assert!(dir.path().join(crate::manifest::MANIFEST_FILE).is_file());

        let (_, outcome) = run_pipeline(&cfg, &parse_steps("prune").unwrap());
        assert!(format!("{:#}", outcome.unwrap_err()).contains("run step `ensemble` (or `train`) first"));
    }

    #[test]
    fn training_is_reproducible_and_feeds_prune() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let steps = parse_steps("train,prune,emit-rtl").unwrap();
        for dir in [&a, &b] {
            let (m, outcome) = run_pipeline(&config(dir.path()), &steps);
            outcome.unwrap();
            assert!(m.complete && m.all_ok());
        }
        for name in [MODEL, PRUNED, HDL, NETLIST] {
            let x = fs::read(a.path().join(name)).unwrap();
            let y = fs::read(b.path().join(name)).unwrap();
            assert!(x == y, "{name} differs between identical runs");
        }
    }

    #[test]
    fn report_reads_only_what_the_manifest_lists() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = config(dir.path());
        let (manifest, outcome) = run_pipeline(&cfg, &Step::default_set());
        outcome.unwrap();
        let saved = RunManifest::load(&dir.path().join(crate::manifest::MANIFEST_FILE)).unwrap();
        assert!(saved.verify().unwrap().is_empty());

        let before = render_report(&saved).unwrap();
        assert_eq!(before, render_report(&saved).unwrap());
        // unlisted files do not change the report
        fs::write(dir.path().join(MODEL), "not a model").unwrap();
        assert_eq!(before, render_report(&saved).unwrap());

        for row in ["Mean test accuracy", "Gate count", "Latency", "Netlist vs software", "Energy minimum"] {
            assert!(before.contains(row), "report lacks {row}:\n{before}");
        }
        assert_eq!(manifest.steps.len(), Step::default_set().len());
    }
}
