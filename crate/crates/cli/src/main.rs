//! `blockdesign` — design restricted randomizations for an experiment,
//! compare candidate strategies, and evaluate designs with placebo
//! simulations.
//!
//! Every run reads one JSON config, writes its outputs plus a
//! `manifest.json` into `--out`, and is bit-reproducible from that
//! manifest.

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use blockdesign::assignment::{
    assign_within_blocks, fps_balance_criterion, pairwise_match_fps, pairwise_match_vs,
    rerandomize, vs_balance_criterion, OddPolicy, TreatmentAssignment,
};
use blockdesign::blocking::{
    fallback_blocking, FallbackMode, FpsOptions, Partition, VsOptions,
};
use blockdesign::dataset::{load_panel, PanelDataset};
use blockdesign::ml::ForestConfig;
use blockdesign::sim::{generate_synthetic_panel, run_placebo_sims, PlaceboOptions, SimDesign};
use blockdesign::strategy::{
    compare_by_cv, compare_on_pre3, comparison_report_csv, comparison_report_markdown,
    tradeoff_select_pre3, BlockedDesign, DesignStrategy, FittedStrategy, FpsStrategy,
    ManualGridDesign, PairedDesign, RerandomizedDesign, StrategyScore, VsStrategy,
};
use blockdesign::{seed, Error as CoreError};

use config::{
    CandidateSpec, CompareCriterion, CriterionSource, CsvInput, FallbackModeKind, InputConfig,
    Manifest, MethodSpec, RunConfig, StrategyKind, ARTIFACT_VERSION,
};

#[derive(Parser)]
#[command(
    name = "blockdesign",
    version,
    about = "Automated blocking, matching, and rerandomization for experiments",
    after_help = "Config defaults: c_b=4, seed=0, threads=0 (all cores), forest_trees=500, \
rerandomization draws=1000, alpha=0.05, simulate n_reps=10000, compare n_repeats=10, \
s_draws=2000, tradeoff_weight=0.5."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a blocking/matching/rerandomization design and emit the
    /// assignment
    Design(CommonArgs),
    /// Run the placebo Monte Carlo harness over the configured methods
    Simulate(CommonArgs),
    /// Rank candidate strategies by the configured criterion
    Compare(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// JSON run configuration (a previous manifest.json also works)
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if absent
    #[arg(long)]
    out: PathBuf,
    /// Master seed, overriding the config
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads, overriding the config (0 = all cores)
    #[arg(long)]
    threads: Option<usize>,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn config(message: impl Into<String>) -> Self {
        Failure {
            code: 1,
            message: message.into(),
        }
    }
}

impl From<CoreError> for Failure {
    fn from(e: CoreError) -> Self {
        let code = match &e {
            CoreError::Internal(_) | CoreError::ReplayMismatch(_) => 3,
            _ => 2,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, args) = match &cli.command {
        Command::Design(a) => ("design", a),
        Command::Simulate(a) => ("simulate", a),
        Command::Compare(a) => ("compare", a),
    };
    match run(name, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(command: &str, args: &CommonArgs) -> Result<(), Failure> {
    let mut config = load_config(&args.config)?;
    if let Some(s) = args.seed {
        config.seed = s;
    }
    if let Some(t) = args.threads {
        config.threads = t;
    }
    if config.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(config.threads)
            .build_global()
            .map_err(|e| Failure::config(format!("thread pool: {e}")))?;
    }
    fs::create_dir_all(&args.out)
        .map_err(|e| Failure::config(format!("cannot create --out: {e}")))?;

    let outputs = match command {
        "design" => run_design(&config, &args.out)?,
        "simulate" => run_simulate(&config, &args.out)?,
        _ => run_compare(&config, &args.out)?,
    };

    let manifest = Manifest {
        artifact_version: ARTIFACT_VERSION.to_string(),
        command: command.to_string(),
        config,
        outputs,
    };
    write_text(
        &args.out.join("manifest.json"),
        &format!("{}\n", serde_json::to_string_pretty(&manifest).unwrap()),
    )?;
    Ok(())
}

fn load_config(path: &Path) -> Result<RunConfig, Failure> {
    let raw = fs::read_to_string(path)
        .map_err(|e| Failure::config(format!("cannot read config {}: {e}", path.display())))?;
    let value: serde_json::Value = serde_json::from_str(&raw)
        .map_err(|e| Failure::config(format!("config is not valid JSON: {e}")))?;
    // a manifest wraps the config it ran with
    let source = if value.get("config").is_some() && value.get("command").is_some() {
        value.get("config").unwrap().clone()
    } else {
        value
    };
    serde_json::from_value(source).map_err(|e| Failure::config(format!("invalid config: {e}")))
}

fn load_input(input: &InputConfig) -> Result<PanelDataset, Failure> {
    match (&input.csv, &input.synthetic) {
        (Some(CsvInput { path, schema }), None) => {
            Ok(load_panel(Path::new(path), schema).map_err(Failure::from)?)
        }
        (None, Some(spec)) => Ok(generate_synthetic_panel(spec).map_err(Failure::from)?),
        (Some(_), Some(_)) => Err(Failure::config(
            "input: give either `csv` or `synthetic`, not both",
        )),
        (None, None) => Err(Failure::config("input: one of `csv` or `synthetic` required")),
    }
}

fn write_text(path: &Path, content: &str) -> Result<(), Failure> {
    fs::write(path, content).map_err(|e| Failure {
        code: 3,
        message: format!("cannot write {}: {e}", path.display()),
    })
}

fn vs_options(c_b: usize, ds: &config::DesignConfig) -> VsOptions {
    VsOptions {
        c_b,
        feature_selection: ds.feature_selection,
        include_yhat: ds.include_yhat,
        forest: ForestConfig::with_trees(ds.forest_trees),
        selection_rule: ds.cv_rule,
        ..VsOptions::default()
    }
}

fn fps_options(c_b: usize, forest_trees: usize) -> FpsOptions {
    FpsOptions {
        c_b,
        forest: ForestConfig::with_trees(forest_trees),
        ..FpsOptions::default()
    }
}

fn assignment_csv(panel: &PanelDataset, assignment: &TreatmentAssignment) -> String {
    let mut out = String::from("unit_id,arm,block_or_pair_id,misfit_flag\n");
    for i in 0..panel.n_units() {
        let group = assignment.group_of[i]
            .map(|g| g.to_string())
            .unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{}\n",
            panel.unit_ids[i],
            u8::from(assignment.treated[i]),
            group,
            u8::from(assignment.misfit[i]),
        ));
    }
    out
}

fn run_design(config: &RunConfig, out: &Path) -> Result<Vec<String>, Failure> {
    let ds = config
        .design
        .as_ref()
        .ok_or_else(|| Failure::config("design command needs a `design` section"))?;
    let panel = load_input(&config.input)?;
    let master = config.seed;
    let fit_seed = seed::derive(master, "cli.design", 0);
    let assign_seed = seed::derive(master, "cli.assign", 0);
    let mut outputs = Vec::new();

    let emit_blocked = |partition: Partition,
                            strategy_label: String,
                            extra: serde_json::Value|
     -> Result<Vec<String>, Failure> {
        let assignment = assign_within_blocks(&partition, assign_seed);
        write_text(&out.join("assignment.csv"), &assignment_csv(&panel, &assignment))?;
        let doc = serde_json::json!({
            "design": "blocked",
            "strategy": strategy_label,
            "selection": extra,
            "partition": partition,
        });
        write_text(
            &out.join("partition.json"),
            &format!("{}\n", serde_json::to_string_pretty(&doc).unwrap()),
        )?;
        println!(
            "design: {} -> {} blocks (sizes {:?})",
            strategy_label,
            partition.n_blocks,
            partition.block_sizes()
        );
        Ok(vec!["assignment.csv".into(), "partition.json".into()])
    };

    match ds.strategy {
        StrategyKind::Vs => {
            let strategy = VsStrategy {
                options: vs_options(config.c_b, ds),
            };
            let fitted = strategy.fit(&panel, fit_seed)?;
            let partition = fitted.final_partition(&panel)?;
            let selected = serde_json::to_value(fitted.selected_features()).unwrap();
            outputs.extend(emit_blocked(partition, strategy.name(), selected)?);
        }
        StrategyKind::Fps => {
            let strategy = FpsStrategy {
                allocator: ds.allocator,
                options: fps_options(config.c_b, ds.forest_trees),
            };
            let fitted = strategy.fit(&panel, fit_seed)?;
            let partition = fitted.final_partition(&panel)?;
            outputs.extend(emit_blocked(partition, strategy.name(), serde_json::Value::Null)?);
        }
        StrategyKind::Auto => {
            let vs = VsStrategy {
                options: vs_options(config.c_b, ds),
            };
            let fps = FpsStrategy {
                allocator: ds.allocator,
                options: fps_options(config.c_b, ds.forest_trees),
            };
            let scores = compare_by_cv(
                &[&vs, &fps],
                &panel,
                ds.n_repeats,
                seed::derive(master, "cli.autocompare", 0),
            )?;
            for s in &scores {
                println!("auto: {} cv_mspe={:.6}", s.strategy, s.value);
            }
            let winner = scores[0].strategy.clone();
            println!("auto: selected {winner}");
            let fitted = if winner == vs.name() {
                vs.fit(&panel, fit_seed)?
            } else {
                fps.fit(&panel, fit_seed)?
            };
            let partition = fitted.final_partition(&panel)?;
            let extra = serde_json::json!({
                "compared": scores.iter().map(|s| (s.strategy.clone(), s.value)).collect::<Vec<_>>(),
                "selected_features": match &fitted {
                    FittedStrategy::Vs(f) => serde_json::to_value(&f.selected).unwrap(),
                    FittedStrategy::Fps(_) => serde_json::Value::Null,
                },
            });
            outputs.extend(emit_blocked(partition, winner, extra)?);
        }
        StrategyKind::Matching => {
            let (pairs, assignment) = match ds.criterion {
                CriterionSource::Vs => pairwise_match_vs(
                    &panel,
                    &vs_options(config.c_b, ds),
                    OddPolicy::RandomHoldout,
                    fit_seed,
                )?,
                CriterionSource::Fps => pairwise_match_fps(
                    &panel,
                    &fps_options(config.c_b, ds.forest_trees),
                    OddPolicy::RandomHoldout,
                    fit_seed,
                )?,
            };
            write_text(&out.join("assignment.csv"), &assignment_csv(&panel, &assignment))?;
            let doc = serde_json::json!({
                "design": "paired",
                "criterion": ds.criterion,
                "pairs": pairs,
            });
            write_text(
                &out.join("partition.json"),
                &format!("{}\n", serde_json::to_string_pretty(&doc).unwrap()),
            )?;
            println!("design: matching -> {} pairs", pairs.len());
            outputs.extend(["assignment.csv".into(), "partition.json".into()]);
        }
        StrategyKind::Rerandomization => {
            let criterion = match ds.criterion {
                CriterionSource::Vs => {
                    vs_balance_criterion(&panel, &vs_options(config.c_b, ds), fit_seed)?
                }
                CriterionSource::Fps => fps_balance_criterion(
                    &panel,
                    &fps_options(config.c_b, ds.forest_trees),
                    fit_seed,
                )?,
            };
            let (assignment, stats) =
                rerandomize(&criterion, ds.rerandomization.to_mode(), assign_seed)?;
            write_text(&out.join("assignment.csv"), &assignment_csv(&panel, &assignment))?;
            let doc = serde_json::json!({
                "design": "rerandomized",
                "criterion": ds.criterion,
                "method": assignment.method,
            });
            write_text(
                &out.join("partition.json"),
                &format!("{}\n", serde_json::to_string_pretty(&doc).unwrap()),
            )?;
            // full θ matrix for audit
            let mut audit = String::from("draw,weighted_max");
            for j in 0..stats.theta.n_cols() {
                audit.push_str(&format!(",theta_{}", j + 1));
            }
            audit.push('\n');
            for r in 0..stats.theta.n_rows() {
                audit.push_str(&format!("{},{}", r, stats.weighted_max[r]));
                for j in 0..stats.theta.n_cols() {
                    audit.push_str(&format!(",{}", stats.theta.get(r, j)));
                }
                audit.push('\n');
            }
            write_text(&out.join("balance_audit.csv"), &audit)?;
            println!("design: rerandomization ({:?})", assignment.method);
            outputs.extend([
                "assignment.csv".into(),
                "partition.json".into(),
                "balance_audit.csv".into(),
            ]);
        }
        StrategyKind::Fallback => {
            let fb = ds
                .fallback
                .as_ref()
                .ok_or_else(|| Failure::config("fallback strategy needs a `fallback` section"))?;
            let mode = match fb.mode {
                FallbackModeKind::SinglePre => FallbackMode::SinglePre {
                    weight_rule: fb.weight_rule,
                },
                FallbackModeKind::ZeroPre => FallbackMode::ZeroPre,
            };
            let partition = fallback_blocking(&panel, mode, config.c_b, fit_seed)?;
            let label = format!("fallback-{:?}", fb.mode).to_lowercase();
            outputs.extend(emit_blocked(partition, label, serde_json::Value::Null)?);
        }
    }
    Ok(outputs)
}

fn build_methods(specs: &[MethodSpec], c_b: usize) -> Vec<Box<dyn SimDesign>> {
    specs
        .iter()
        .map(|spec| -> Box<dyn SimDesign> {
            match spec {
                MethodSpec::Vs {
                    feature_selection,
                    include_yhat,
                    forest_trees,
                } => Box::new(BlockedDesign {
                    strategy: VsStrategy {
                        options: VsOptions {
                            c_b,
                            feature_selection: *feature_selection,
                            include_yhat: *include_yhat,
                            forest: ForestConfig::with_trees(*forest_trees),
                            ..VsOptions::default()
                        },
                    },
                }),
                MethodSpec::Fps {
                    allocator,
                    forest_trees,
                } => Box::new(BlockedDesign {
                    strategy: FpsStrategy {
                        allocator: *allocator,
                        options: fps_options(c_b, *forest_trees),
                    },
                }),
                MethodSpec::PairedVs { forest_trees } => Box::new(PairedDesign {
                    vs: Some(VsOptions {
                        c_b,
                        forest: ForestConfig::with_trees(*forest_trees),
                        ..VsOptions::default()
                    }),
                    fps: None,
                }),
                MethodSpec::PairedFps { forest_trees } => Box::new(PairedDesign {
                    vs: None,
                    fps: Some(fps_options(c_b, *forest_trees)),
                }),
                MethodSpec::RerandVs {
                    settings,
                    forest_trees,
                } => Box::new(RerandomizedDesign {
                    vs: Some(VsOptions {
                        c_b,
                        forest: ForestConfig::with_trees(*forest_trees),
                        ..VsOptions::default()
                    }),
                    fps: None,
                    mode: settings.to_mode(),
                }),
                MethodSpec::RerandFps {
                    settings,
                    forest_trees,
                } => Box::new(RerandomizedDesign {
                    vs: None,
                    fps: Some(fps_options(c_b, *forest_trees)),
                    mode: settings.to_mode(),
                }),
                MethodSpec::ManualGrid {
                    name,
                    features,
                    edges,
                } => Box::new(ManualGridDesign {
                    name: name.clone(),
                    features: features.clone(),
                    edges: edges.clone(),
                    c_b,
                }),
            }
        })
        .collect()
}

fn run_simulate(config: &RunConfig, out: &Path) -> Result<Vec<String>, Failure> {
    let sc = config
        .simulate
        .as_ref()
        .ok_or_else(|| Failure::config("simulate command needs a `simulate` section"))?;
    let methods = build_methods(&sc.methods, config.c_b);
    let method_refs: Vec<&dyn SimDesign> = methods.iter().map(|m| m.as_ref()).collect();
    let options = PlaceboOptions {
        n_reps: sc.n_reps,
        eval_period: sc.eval_period,
        refit_per_rep: sc.refit_per_rep,
    };

    let mut scenarios: Vec<(String, PanelDataset)> =
        vec![("default".to_string(), load_input(&config.input)?)];
    for s in &sc.scenarios {
        scenarios.push((s.name.clone(), load_input(&s.input)?));
    }

    let mut csv = String::from(
        "scenario,method,coefficient_mse,coefficient_mse_mc_se,mean_se,mean_se_mc_se,mean_beta,mean_beta_mc_se,n_reps\n",
    );
    let mut reports = Vec::new();
    for (idx, (name, panel)) in scenarios.iter().enumerate() {
        let report = run_placebo_sims(
            panel,
            &method_refs,
            &options,
            seed::derive(config.seed, "cli.sim", idx as u64),
        )?;
        for r in &report.rows {
            csv.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                name,
                r.method,
                r.coefficient_mse,
                r.coefficient_mse_mc_se,
                r.mean_se,
                r.mean_se_mc_se,
                r.mean_beta,
                r.mean_beta_mc_se,
                r.n_reps
            ));
        }
        println!(
            "simulate[{name}]: {} methods x {} reps on `{}`",
            report.rows.len(),
            sc.n_reps,
            report.eval_period
        );
        reports.push((name.clone(), report));
    }
    write_text(&out.join("report.csv"), &csv)?;

    // method × scenario tables
    let method_names: Vec<String> = reports[0].1.rows.iter().map(|r| r.method.clone()).collect();
    let mut md = String::new();
    for (title, pick) in [
        ("Coefficient MSE", 0usize),
        ("Size of Coefficient Standard Error", 1),
    ] {
        md.push_str(&format!("## {title}\n\n| method |"));
        for (name, _) in &reports {
            md.push_str(&format!(" {name} |"));
        }
        md.push_str("\n|---|");
        md.push_str(&"---|".repeat(reports.len()));
        md.push('\n');
        for m in &method_names {
            md.push_str(&format!("| {m} |"));
            for (_, report) in &reports {
                let row = report.row(m).unwrap();
                let v = if pick == 0 { row.coefficient_mse } else { row.mean_se };
                md.push_str(&format!(" {v:.7} |"));
            }
            md.push('\n');
        }
        md.push('\n');
    }
    write_text(&out.join("report.md"), &md)?;
    Ok(vec!["report.csv".into(), "report.md".into()])
}

fn candidate_strategies(
    specs: &[CandidateSpec],
    c_b: usize,
) -> Vec<Box<dyn DesignStrategy>> {
    specs
        .iter()
        .map(|spec| -> Box<dyn DesignStrategy> {
            match spec {
                CandidateSpec::Vs {
                    feature_selection,
                    include_yhat,
                    forest_trees,
                } => Box::new(VsStrategy {
                    options: VsOptions {
                        c_b,
                        feature_selection: *feature_selection,
                        include_yhat: *include_yhat,
                        forest: ForestConfig::with_trees(*forest_trees),
                        ..VsOptions::default()
                    },
                }),
                CandidateSpec::Fps {
                    allocator,
                    forest_trees,
                } => Box::new(FpsStrategy {
                    allocator: *allocator,
                    options: fps_options(c_b, *forest_trees),
                }),
            }
        })
        .collect()
}

fn run_compare(config: &RunConfig, out: &Path) -> Result<Vec<String>, Failure> {
    let cc = config
        .compare
        .as_ref()
        .ok_or_else(|| Failure::config("compare command needs a `compare` section"))?;
    if cc.candidates.is_empty() {
        return Err(Failure::config("compare: at least one candidate required"));
    }
    let panel = load_input(&config.input)?;
    let strategies = candidate_strategies(&cc.candidates, config.c_b);
    let refs: Vec<&dyn DesignStrategy> = strategies.iter().map(|s| s.as_ref()).collect();
    let master = config.seed;

    let scores: Vec<StrategyScore> = match cc.criterion {
        CompareCriterion::Cv => compare_by_cv(
            &refs,
            &panel,
            cc.n_repeats,
            seed::derive(master, "cli.compare", 0),
        )?,
        CompareCriterion::Pre3 | CompareCriterion::Tradeoff => {
            // fit candidates without looking at pre3, then score on pre3
            let design_panel = panel
                .without_period(blockdesign::dataset::Period::Pre3)
                .map_err(|_| Failure::from(CoreError::MissingPre3))?;
            let mut partitions = Vec::new();
            for (i, s) in refs.iter().enumerate() {
                let fitted = s.fit(&design_panel, seed::derive(master, "cli.comparefit", i as u64))?;
                partitions.push((s.name(), fitted.final_partition(&design_panel)?));
            }
            let named: Vec<(String, &Partition)> =
                partitions.iter().map(|(n, p)| (n.clone(), p)).collect();
            match cc.criterion {
                CompareCriterion::Pre3 => compare_on_pre3(
                    &named,
                    &panel,
                    5,
                    seed::derive(master, "cli.compare", 0),
                )?,
                _ => {
                    let (scores, chosen) = tradeoff_select_pre3(
                        &named,
                        &panel,
                        cc.s_draws,
                        cc.tradeoff_weight,
                        seed::derive(master, "cli.compare", 0),
                    )?;
                    println!("compare: chose {}", scores[chosen].strategy);
                    scores
                }
            }
        }
    };

    for (rank, s) in scores.iter().enumerate() {
        println!("compare: #{} {} score={:.6}", rank + 1, s.strategy, s.value);
    }
    write_text(&out.join("report.csv"), &comparison_report_csv(&scores))?;
    write_text(&out.join("report.md"), &comparison_report_markdown(&scores))?;
    Ok(vec!["report.csv".into(), "report.md".into()])
}
