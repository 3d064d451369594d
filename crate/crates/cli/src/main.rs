use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use flextm_cli::config::{load_train_config, ProjectConfig};
use flextm_cli::manifest::{write_atomic, RunManifest};
use flextm_cli::pipeline::{self, parse_steps, ppa_summary, run_vectors, EquivFile, Step};
use flextm_cli::report::render_report;
use flextm_core::dataset::{class_histogram, DEFAULT_THRESHOLD};
use flextm_core::hwgen::DEFAULT_MODULE;
use flextm_core::ppa::{parse_periods, sweep_csv, CalibrationTable};
use flextm_core::sim::{export_vectors, load_vectors, random_samples};
use flextm_core::train::{evaluate, generate_ensemble, pilot_epochs, train};
use flextm_core::{
    build_netlist, check_equivalence, count_included, emit_hdl, gate_count, netlist_stats, prune, Dataset,
    GateWeights, ModelTag, Netlist, PrunedModel, TmModel, TrainConfig,
};

#[derive(Parser)]
#[command(name = "flextm", version, about = "Tsetlin Machine training and gate-level inference generation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct DataArgs {
    #[arg(long, default_value = "data/optdigits.tra")]
    train_file: PathBuf,
    #[arg(long, default_value = "data/optdigits.tes")]
    test_file: PathBuf,
    /// Pixels at or above this intensity become 1.
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    threshold: u8,
}

impl DataArgs {
    fn load(&self) -> Result<Dataset> {
        Ok(Dataset::load(&self.train_file, &self.test_file, self.threshold)?)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Load and booleanize the dataset, print a summary.
    Data {
        #[command(flatten)]
        data: DataArgs,
    },
    /// Train one model from a training config file.
    Train {
        /// TOML file with T, s, epochs, clauses_per_class and optional seed.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Use the built-in full or compact configuration.
        #[arg(long, conflicts_with = "config")]
        preset: Option<ModelTag>,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value = "model.json")]
        out: PathBuf,
        /// Epoch-count pilot: train until accuracy plateaus instead.
        #[arg(long)]
        pilot: bool,
        #[arg(long, default_value_t = 300)]
        max_epochs: u32,
        #[arg(long, default_value_t = 20)]
        window: u32,
        /// Plateau threshold as a fraction (0.002 = 0.2 percentage points).
        #[arg(long, default_value_t = 0.002)]
        min_gain: f64,
    },
    /// Train seeds seed..seed+n and keep the most accurate model.
    Ensemble {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, conflicts_with = "config")]
        preset: Option<ModelTag>,
        #[arg(long)]
        n: usize,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value = "ensemble.json")]
        out: PathBuf,
        #[arg(long, default_value = "best_model.json")]
        best_model: PathBuf,
    },
    /// Drop empty clauses and excluded literals.
    Prune {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compile a pruned model to a netlist and structural Verilog.
    EmitRtl {
        #[arg(long)]
        pruned: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        stats: Option<PathBuf>,
        /// Also write the netlist as JSON (input of simulate and equiv).
        #[arg(long)]
        netlist: Option<PathBuf>,
        #[arg(long, default_value = DEFAULT_MODULE)]
        module: String,
    },
    /// Run a vector file through a netlist and write the cycle trace.
    Simulate {
        #[arg(long)]
        netlist: PathBuf,
        #[arg(long)]
        vectors: PathBuf,
        #[arg(long)]
        trace: PathBuf,
    },
    /// Compare netlist simulation with software inference.
    Equiv {
        #[arg(long)]
        pruned: PathBuf,
        #[arg(long)]
        netlist: PathBuf,
        #[arg(long, value_parser = ["test", "train"], default_value = "test")]
        dataset: String,
        #[command(flatten)]
        data: DataArgs,
        /// Additional uniformly random input vectors.
        #[arg(long, default_value_t = 0)]
        random: usize,
        #[arg(long, default_value_t = 1)]
        random_seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the dataset vectors with expected outputs for an external bench.
        #[arg(long)]
        export_vectors: Option<PathBuf>,
    },
    /// Modeled area/power/energy sweep over clock periods.
    Ppa {
        #[arg(long)]
        model: ModelTag,
        /// Base NAND2-equivalent gate count (for example from emit-rtl stats).
        #[arg(long)]
        gates: f64,
        /// start:stop:step or a comma-separated list, in microseconds.
        #[arg(long, default_value = "4:40:1")]
        periods: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        calibration: Option<PathBuf>,
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Summarize a run manifest.
    Report {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the whole flow from a project config.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated subset of: data,train,ensemble,prune,emit-rtl,simulate,equiv,ppa,report
        #[arg(long)]
        steps: Option<String>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

fn train_config(config: &Option<PathBuf>, preset: Option<ModelTag>, data: &DataArgs) -> Result<TrainConfig> {
    let mut cfg = match (config, preset) {
        (Some(path), _) => load_train_config(path)?,
        (None, Some(ModelTag::Full)) => TrainConfig::full(),
        (None, Some(ModelTag::Compact)) | (None, None) => TrainConfig::compact(),
    };
    if config.is_some() && cfg.threshold != data.threshold {
        bail!("config threshold {} differs from --threshold {}", cfg.threshold, data.threshold);
    }
    cfg.threshold = data.threshold;
    Ok(cfg)
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, (serde_json::to_string_pretty(value)? + "\n").as_bytes())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Data { data } => {
            let d = data.load()?;
            println!("threshold {}", d.threshold);
            println!("train {} samples, per class {:?}", d.train.len(), class_histogram(&d.train));
            println!("test  {} samples, per class {:?}", d.test.len(), class_histogram(&d.test));
        }
        Command::Train {
            config,
            preset,
            seed,
            data,
            out,
            pilot,
            max_epochs,
            window,
            min_gain,
        } => {
            let mut cfg = train_config(&config, preset, &data)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let d = data.load()?;
            if pilot {
                let report = pilot_epochs(&cfg, &d, max_epochs, window, min_gain)?;
                for (e, acc) in report.curve.iter().enumerate() {
                    println!("epoch {:>4}  test accuracy {acc:.4}", e + 1);
                }
                match report.selected_epochs {
                    Some(e) => println!("plateau reached: {e} epochs"),
                    None => println!("no plateau within {max_epochs} epochs"),
                }
                write_json(&out, &report)?;
            } else {
                let model = train(&cfg, &d)?;
                println!(
                    "seed {}: test accuracy {:.4}, {} included TAs",
                    cfg.seed,
                    evaluate(&model, &d.test)?,
                    model.included_count()
                );
                model.save(&out)?;
            }
        }
        Command::Ensemble {
            config,
            preset,
            n,
            data,
            out,
            best_model,
        } => {
            let cfg = train_config(&config, preset, &data)?;
            let (report, best) = generate_ensemble(&cfg, n, &data.load()?)?;
            for e in &report.entries {
                println!("seed {:>6}  accuracy {:.4}  included {}", e.seed, e.test_accuracy, e.included);
            }
            println!(
                "mean {:.4}  min {:.4}  max {:.4}  best seed {}",
                report.mean_accuracy, report.min_accuracy, report.max_accuracy, report.best_seed
            );
            write_json(&out, &report)?;
            best.save(&best_model)?;
        }
        Command::Prune { model, out } => {
            let model = TmModel::load(&model)?;
            let pruned = prune(&model);
            println!("class  +clauses  -clauses  literals  longest");
            for (c, k) in pruned.complexity().iter().enumerate() {
                println!(
                    "{c:>5}  {:>8}  {:>8}  {:>8}  {:>7}",
                    k.positive_clauses, k.negative_clauses, k.literals, k.max_clause_literals
                );
            }
            println!("clause size histogram (size: count):");
            for (size, count) in pruned.clause_size_histogram().iter().enumerate().filter(|(_, c)| **c > 0) {
                println!("  {size:>3}: {count}");
            }
            println!(
                "{} of {} clauses kept, {} included TAs (same count before removal: {})",
                pruned.clause_count(),
                model.banks().iter().map(Vec::len).sum::<usize>(),
                count_included(&pruned),
                model.included_count()
            );
            pruned.save(&out)?;
        }
        Command::EmitRtl {
            pruned,
            out,
            stats,
            netlist,
            module,
        } => {
            let pruned = PrunedModel::load(&pruned)?;
            let n = build_netlist(&pruned)?;
            n.check_pipeline()?;
            write_atomic(&out, emit_hdl(&n, &module)?.as_bytes())?;
            let s = netlist_stats(&n);
            println!(
                "{} INV, {} NAND2, {} DFF: {:.1} NAND2-eq",
                s.inv,
                s.nand2,
                s.dff,
                gate_count(&n, &GateWeights::default())
            );
            if let Some(path) = stats {
                write_json(
                    &path,
                    &pipeline::StatsFile {
                        gate_count: s.nand2_equivalents,
                        stats: s,
                        weights: GateWeights::default(),
                    },
                )?;
            }
            if let Some(path) = netlist {
                n.save(&path)?;
            }
        }
        Command::Simulate { netlist, vectors, trace } => {
            let n = Netlist::load(&netlist)?;
            let v = load_vectors(&vectors)?;
            let (t, summary) = run_vectors(&n, &v)?;
            t.save_csv(&trace)?;
            println!(
                "{} vectors over {} cycles, latency {} cycles, {} mismatches",
                summary.vectors, summary.cycles, summary.latency_cycles, summary.mismatches
            );
            if summary.mismatches > 0 {
                bail!("simulation disagrees with the expected outputs");
            }
        }
        Command::Equiv {
            pruned,
            netlist,
            dataset,
            data,
            random,
            random_seed,
            out,
            export_vectors: export,
        } => {
            let p = PrunedModel::load(&pruned)?;
            let n = Netlist::load(&netlist)?;
            let d = data.load()?;
            let samples = if dataset == "test" { &d.test } else { &d.train };
            if let Some(path) = export {
                export_vectors(&p, samples, &path)?;
            }
            let main = check_equivalence(&p, &n, samples)?;
            let rand = check_equivalence(&p, &n, &random_samples(random, random_seed))?;
            let file = EquivFile {
                passed: main.passed && rand.passed,
                test: main,
                random: rand,
            };
            println!(
                "{dataset}: {} mismatches of {}; random: {} of {}",
                file.test.mismatches.len(),
                file.test.samples,
                file.random.mismatches.len(),
                file.random.samples
            );
            if let Some(path) = out {
                write_json(&path, &file)?;
            }
            if !file.passed {
                bail!("equivalence check failed");
            }
        }
        Command::Ppa {
            model,
            gates,
            periods,
            out,
            calibration,
            summary,
        } => {
            let table = match calibration {
                Some(p) => CalibrationTable::load(&p)?,
                None => CalibrationTable::default(),
            };
            let (s, points) = ppa_summary(model, gates, parse_periods(&periods)?, &table)?;
            write_atomic(&out, sweep_csv(model, &points).as_bytes())?;
            if let Some(p) = s.energy_min_period {
                println!("modeled energy minimum at {p} us");
            }
            if let Some(path) = summary {
                write_json(&path, &s)?;
            }
        }
        Command::Report { manifest, out } => {
            let m = RunManifest::load(&manifest)?;
            let text = render_report(&m)?;
            match out {
                Some(path) => write_atomic(&path, text.as_bytes())?,
                None => print!("{text}"),
            }
        }
        Command::Pipeline { config, steps, out_dir } => {
            let mut cfg = ProjectConfig::load(&config)?;
            if let Some(dir) = out_dir {
                cfg.output.dir = dir;
            }
            let steps = match steps {
                Some(list) => parse_steps(&list)?,
                None => Step::default_set(),
            };
            let (manifest, outcome) = flextm_cli::run_pipeline(&cfg, &steps);
            for s in &manifest.steps {
                println!("{:<9} {} ({:.1} s)", s.step, if s.ok { "ok" } else { "FAILED" }, s.wall_seconds);
            }
            outcome.with_context(|| format!("manifest written to {}", cfg.output.dir.display()))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn command_line_is_well_formed() {
        Cli::command().debug_assert();
    }

    #[test]
    fn parses_subcommands() {
        let cli = Cli::try_parse_from(["flextm", "train", "--preset", "full", "--seed", "4", "--out", "m.json"]).unwrap();
        assert!(matches!(
            cli.command,
            Command::Train { preset: Some(ModelTag::Full), seed: Some(4), .. }
        ));
        let cli = Cli::try_parse_from(["flextm", "pipeline", "--config", "c.toml", "--steps", "data,ppa"]).unwrap();
        assert!(matches!(cli.command, Command::Pipeline { steps: Some(_), .. }));
        assert!(Cli::try_parse_from(["flextm", "train", "--preset", "huge"]).is_err());
        assert!(Cli::try_parse_from(["flextm", "train", "--preset", "full", "--config", "x.toml"]).is_err());
        assert!(Cli::try_parse_from(["flextm", "ppa", "--model", "compact", "--out", "p.csv"]).is_err());
    }
}
