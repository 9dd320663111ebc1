//! Implementations behind every subcommand.
//!
//! Artifact layout under --out-dir: each training run gets its own
//! subdirectory holding checkpoint.snck, report.json, and epochs.csv; pruned
//! teachers hold checkpoint.snck and prune.json; distilled runs add
//! run-meta.json describing their teacher. The report command renders a
//! report/ subdirectory from whatever run directories it finds.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use spikedistill_core::{
    accuracy_pct, compute_mask, distill_train, evaluate, gen_synthetic, load_dataset,
    save_dataset, sparsity_report, train_baseline, Checkpoint, DatasetHandle, Error, KdConfig,
    KdMode, LayerSpec, NetworkSpec, NetworkState, OptimizerConfig, PruneRanking, PruneScope,
    Result, SparsityReport, Split, Teacher, TrainReport, VirtualTeacher,
};

use crate::args::{
    default_scope, default_timesteps, encoding_name, Cli, Command, DistillArgs, EvalArgs,
    GenDataArgs, ModeArg, Preset, PruneArgs, ReportArgs, RunSuiteArgs, ScopeArg, TrainArgs,
};
use crate::experiment::{ExperimentConfig, SuitePlan};
use crate::svg::{LineChart, Series};
use crate::table;

pub fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::GenData(args) => cmd_gen_data(cli, args),
        Command::Train(args) => cmd_train(cli, args),
        Command::Prune(args) => cmd_prune(cli, args),
        Command::Distill(args) => cmd_distill(cli, args),
        Command::Eval(args) => cmd_eval(cli, args),
        Command::Report(args) => cmd_report(cli, args),
        Command::RunSuite(args) => cmd_run_suite(cli, args),
    }
}

/// Accuracy of one checkpoint on one split, as written to eval.json.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalResult {
    pub split: String,
    pub correct: usize,
    pub total: usize,
    pub accuracy_pct: f64,
}

/// Written next to a pruned checkpoint so later stages know how the teacher
/// was made and how well it scores.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PruneRecord {
    pub ratio: f64,
    pub scope: PruneScope,
    pub ranking: PruneRanking,
    pub sparsity: SparsityReport,
    pub eval: Option<EvalResult>,
}

/// Written next to a distilled checkpoint; the report command reads it to
/// fill the teacher columns.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMeta {
    pub mode: String,
    pub teacher: Option<String>,
    pub teacher_prune_ratio: Option<f64>,
    pub teacher_acc_pct: Option<f64>,
    pub teacher_alpha: Option<f64>,
}

/// One line of the comparison table.
#[derive(Debug, Clone)]
pub struct ComparisonRow {
    pub name: String,
    pub dataset: String,
    pub model: String,
    pub mode: String,
    pub teacher_prune_ratio: Option<f64>,
    pub teacher_acc_pct: Option<f64>,
    pub baseline_acc_pct: f64,
    pub kd_acc_pct: f64,
    pub improvement_pct: f64,
}

fn check_name(name: &str) -> Result<()> {
    let plain = !name.is_empty()
        && name != "."
        && name != ".."
        && !name.contains('/')
        && !name.contains('\\');
    if plain {
        Ok(())
    } else {
        Err(Error::Parameter(format!(
            "run name must be a plain directory name, got {name:?}"
        )))
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, text)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// Build the preset architecture for a dataset's per-step input shape.
pub fn build_spec(preset: Preset, data: &DatasetHandle, timesteps: usize) -> Result<NetworkSpec> {
    let shape = data.step_input_shape();
    let classes = data.manifest.classes;
    match preset {
        Preset::Mlp => Ok(NetworkSpec::mlp(
            shape.iter().product(),
            classes,
            timesteps,
        )),
        Preset::SmallConv => {
            if shape.len() != 3 {
                return Err(Error::Config(format!(
                    "small-conv needs [channels, height, width] input, dataset provides {shape:?}"
                )));
            }
            Ok(NetworkSpec::small_conv(
                shape[0], shape[1], shape[2], classes, timesteps,
            ))
        }
    }
}

fn resolve_timesteps(data: &DatasetHandle, flag: Option<usize>) -> usize {
    flag.unwrap_or_else(|| {
        default_timesteps(data.manifest.encoding, &data.manifest.sample_shape)
    })
}

fn eval_split(
    state: &NetworkState,
    data: &DatasetHandle,
    split: Split,
    threads: usize,
) -> Result<EvalResult> {
    let (correct, total) = evaluate(state, data, split, threads)?;
    let name = match split {
        Split::Train => "train",
        Split::Test => "test",
    };
    Ok(EvalResult {
        split: name.to_string(),
        correct,
        total,
        accuracy_pct: accuracy_pct(correct, total),
    })
}

fn write_run_artifacts(
    dir: &Path,
    state: &NetworkState,
    report: &TrainReport,
    seed: u64,
    epochs: usize,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    Checkpoint::from_state(state, seed, epochs).save(&dir.join("checkpoint.snck"))?;
    write_text(&dir.join("report.json"), &report.to_json()?)?;
    write_text(&dir.join("epochs.csv"), &report.epochs_csv())
}

fn print_summary(name: &str, report: &TrainReport) {
    let f = &report.final_metrics;
    println!(
        "{name}: train {:.2}% test {:.2}% (best test {:.2}% at epoch {})",
        f.train_acc_pct, f.test_acc_pct, f.best_test_acc_pct, f.best_epoch
    );
}

/// The last two path components, used when recording where a teacher came
/// from. Artifacts stay byte-identical no matter where the run directory
/// lives.
fn path_label(path: &Path) -> String {
    let tail: Vec<String> = path
        .iter()
        .rev()
        .take(2)
        .map(|p| p.to_string_lossy().into_owned())
        .collect();
    tail.into_iter().rev().collect::<Vec<_>>().join("/")
}

fn cmd_gen_data(cli: &Cli, args: &GenDataArgs) -> Result<()> {
    let handle = gen_synthetic(
        args.kind.to_core(),
        args.classes,
        args.train_per_class,
        args.test_per_class,
        &args.shape,
        args.noise,
        cli.seed,
    )?;
    save_dataset(&handle, &args.out)?;
    let m = &handle.manifest;
    println!(
        "wrote {}: {} classes, {} train / {} test, sample shape {:?}, {} encoding",
        args.out.display(),
        m.classes,
        m.train_count,
        m.test_count,
        m.sample_shape,
        encoding_name(m.encoding)
    );
    Ok(())
}

fn cmd_train(cli: &Cli, args: &TrainArgs) -> Result<()> {
    check_name(&args.name)?;
    let data = load_dataset(&args.data)?;
    let timesteps = resolve_timesteps(&data, args.timesteps);
    let spec = build_spec(args.preset, &data, timesteps)?;
    let opt = OptimizerConfig {
        lr: args.lr,
        momentum: args.momentum,
        batch_size: args.batch_size,
    };
    let (state, report) = train_baseline(&spec, &data, &opt, args.epochs, cli.seed)?;
    let dir = cli.out_dir.join(&args.name);
    write_run_artifacts(&dir, &state, &report, cli.seed, args.epochs)?;
    print_summary(&args.name, &report);
    println!("artifacts in {}", dir.display());
    Ok(())
}

fn cmd_prune(cli: &Cli, args: &PruneArgs) -> Result<()> {
    let name = match &args.name {
        Some(n) => n.clone(),
        None => format!("prune-{}", args.ratio),
    };
    check_name(&name)?;
    let loaded = Checkpoint::load(&args.checkpoint)?;
    let (seed, epoch) = (loaded.seed, loaded.epoch);
    let mut state = loaded.into_state();
    let scope = args
        .scope
        .map(ScopeArg::to_core)
        .unwrap_or_else(|| default_scope(&state.spec));
    let mask = compute_mask(&state, args.ratio, scope, args.ranking.to_core())?;
    mask.apply(&mut state.params)?;
    state.mask = Some(mask);
    let sparsity = sparsity_report(state.mask.as_ref().expect("mask was just set"));
    let eval = match &args.data {
        Some(path) => {
            let data = load_dataset(path)?;
            Some(eval_split(&state, &data, Split::Test, cli.threads)?)
        }
        None => None,
    };

    let dir = cli.out_dir.join(&name);
    fs::create_dir_all(&dir)?;
    Checkpoint::from_state(&state, seed, epoch).save(&dir.join("checkpoint.snck"))?;
    let record = PruneRecord {
        ratio: args.ratio,
        scope,
        ranking: args.ranking.to_core(),
        sparsity,
        eval,
    };
    write_json(&dir.join("prune.json"), &record)?;
    println!(
        "{name}: dropped {} of {} in-scope weights (fraction {:.4})",
        record.sparsity.total_zeros,
        record.sparsity.total_weights,
        record.sparsity.overall_fraction
    );
    if let Some(e) = &record.eval {
        println!("teacher test accuracy {:.2}%", e.accuracy_pct);
    }
    println!("artifacts in {}", dir.display());
    Ok(())
}

fn cmd_distill(cli: &Cli, args: &DistillArgs) -> Result<()> {
    let data = load_dataset(&args.data)?;
    let timesteps = resolve_timesteps(&data, args.timesteps);
    let cfg = KdConfig {
        mode: args.mode.to_core(),
        temperature: args.temperature,
        loss_alpha: args.loss_alpha,
        kl_direction: args.kl_direction.to_core(),
        allow_heterogeneous_teacher: args.allow_heterogeneous_teacher,
    };
    let opt = OptimizerConfig {
        lr: args.lr,
        momentum: args.momentum,
        batch_size: args.batch_size,
    };

    let (teacher, student_spec, meta) = match args.mode {
        ModeArg::Sparse => {
            let teacher_path = args.teacher.as_ref().ok_or_else(|| {
                Error::Config("sparse mode requires --teacher <checkpoint>".into())
            })?;
            let teacher_state = Checkpoint::load(teacher_path)?.into_state();
            let student_spec = match args.preset {
                Some(p) => build_spec(p, &data, timesteps)?,
                None => {
                    let mut spec = teacher_state.spec.clone();
                    if let Some(t) = args.timesteps {
                        spec.timesteps = t;
                    }
                    spec
                }
            };
            let sibling = teacher_path.parent().map(|d| d.join("prune.json"));
            let record: Option<PruneRecord> = match sibling {
                Some(p) if p.is_file() => Some(read_json(&p)?),
                _ => None,
            };
            let meta = RunMeta {
                mode: "sparse".to_string(),
                teacher: Some(path_label(teacher_path)),
                teacher_prune_ratio: record.as_ref().map(|r| r.ratio),
                teacher_acc_pct: record
                    .as_ref()
                    .and_then(|r| r.eval.as_ref())
                    .map(|e| e.accuracy_pct),
                teacher_alpha: None,
            };
            (Teacher::Sparse(teacher_state), student_spec, meta)
        }
        ModeArg::Default => {
            let alpha = args
                .teacher_alpha
                .ok_or_else(|| Error::Config("default mode requires --teacher-alpha".into()))?;
            let teacher = VirtualTeacher::new(data.manifest.classes, alpha)?;
            let preset = args.preset.unwrap_or(Preset::Mlp);
            let spec = build_spec(preset, &data, timesteps)?;
            let meta = RunMeta {
                mode: "default".to_string(),
                teacher: None,
                teacher_prune_ratio: None,
                // The virtual teacher puts its largest mass on the true class
                // of every sample.
                teacher_acc_pct: Some(100.0),
                teacher_alpha: Some(alpha),
            };
            (Teacher::Virtual(teacher), spec, meta)
        }
    };

    let name = match &args.name {
        Some(n) => n.clone(),
        None => match args.mode {
            ModeArg::Sparse => "sparse".to_string(),
            ModeArg::Default => "default".to_string(),
        },
    };
    check_name(&name)?;

    let mut student = NetworkState::init(&student_spec, cli.seed);
    let report = distill_train(&mut student, &teacher, &data, &cfg, &opt, args.epochs, cli.seed)?;
    let dir = cli.out_dir.join(&name);
    write_run_artifacts(&dir, &student, &report, cli.seed, args.epochs)?;
    write_json(&dir.join("run-meta.json"), &meta)?;
    print_summary(&name, &report);
    println!("artifacts in {}", dir.display());
    Ok(())
}

fn cmd_eval(cli: &Cli, args: &EvalArgs) -> Result<()> {
    let state = Checkpoint::load(&args.checkpoint)?.into_state();
    let data = load_dataset(&args.data)?;
    let result = eval_split(&state, &data, args.split.to_core(), cli.threads)?;
    let mut text = serde_json::to_string_pretty(&result)?;
    text.push('\n');
    print!("{text}");
    if let Some(path) = &args.out {
        write_text(path, &text)?;
    }
    Ok(())
}

fn cmd_report(cli: &Cli, args: &ReportArgs) -> Result<()> {
    let dir = args.dir.clone().unwrap_or_else(|| cli.out_dir.clone());
    build_report(&dir)?;
    print!("{}", fs::read_to_string(dir.join("report").join("comparison.txt"))?);
    println!("report in {}", dir.join("report").display());
    Ok(())
}

/// Scan a run directory, render accuracy charts for every run, and write the
/// comparison table. Returns the rows for aggregation.
pub fn build_report(dir: &Path) -> Result<Vec<ComparisonRow>> {
    let mut run_dirs: Vec<(String, PathBuf)> = Vec::new();
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        let path = entry.path();
        if path.join("report.json").is_file() {
            run_dirs.push((entry.file_name().to_string_lossy().into_owned(), path));
        }
    }
    run_dirs.sort();
    if run_dirs.is_empty() {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("no run reports under {}", dir.display()),
        )));
    }
    let baseline_path = dir.join("baseline").join("report.json");
    if !baseline_path.is_file() {
        return Err(Error::Config(format!(
            "missing baseline report: {}",
            baseline_path.display()
        )));
    }
    let baseline: TrainReport = read_json(&baseline_path)?;
    let report_dir = dir.join("report");
    fs::create_dir_all(&report_dir)?;

    let mut rows = Vec::new();
    for (name, run_dir) in &run_dirs {
        let report: TrainReport = read_json(&run_dir.join("report.json"))?;
        write_accuracy_chart(&report_dir, name, &report)?;
        let meta_path = run_dir.join("run-meta.json");
        if !meta_path.is_file() {
            continue;
        }
        let meta: RunMeta = read_json(&meta_path)?;
        let (dataset, model) = run_identity(&report);
        let kd_acc = report.final_metrics.test_acc_pct;
        let base_acc = baseline.final_metrics.test_acc_pct;
        rows.push(ComparisonRow {
            name: name.clone(),
            dataset,
            model,
            mode: meta.mode.clone(),
            teacher_prune_ratio: meta.teacher_prune_ratio,
            teacher_acc_pct: meta.teacher_acc_pct,
            baseline_acc_pct: base_acc,
            kd_acc_pct: kd_acc,
            improvement_pct: kd_acc - base_acc,
        });
    }
    sort_rows(&mut rows);

    let headers = [
        "name",
        "dataset",
        "model",
        "mode",
        "teacher_prune_ratio",
        "teacher_acc_pct",
        "baseline_acc_pct",
        "kd_acc_pct",
        "improvement_pct",
    ];
    let csv_rows: Vec<Vec<String>> = rows.iter().map(csv_cells).collect();
    write_text(
        &report_dir.join("comparison.csv"),
        &table::render_csv(&headers, &csv_rows),
    )?;
    let txt_rows: Vec<Vec<String>> = rows.iter().map(txt_cells).collect();
    write_text(
        &report_dir.join("comparison.txt"),
        &table::render_text(&headers, &txt_rows),
    )?;
    Ok(rows)
}

/// Dataset family and preset name recovered from a stored run config.
fn run_identity(report: &TrainReport) -> (String, String) {
    let model = match report
        .config
        .get("spec")
        .cloned()
        .and_then(|v| serde_json::from_value::<NetworkSpec>(v).ok())
    {
        Some(spec) => {
            if spec
                .layers
                .iter()
                .any(|l| matches!(l, LayerSpec::Conv2d { .. }))
            {
                "small-conv"
            } else {
                "mlp"
            }
        }
        None => "unknown",
    };
    let dataset = report
        .config
        .get("dataset")
        .and_then(|d| d.get("source"))
        .and_then(|s| s.as_str())
        .map(|s| s.split('(').next().unwrap_or(s).to_string())
        .unwrap_or_else(|| "unknown".to_string());
    (dataset, model.to_string())
}

fn mode_rank(mode: &str) -> u8 {
    match mode {
        "sparse" => 0,
        "default" => 1,
        _ => 2,
    }
}

fn sort_rows(rows: &mut [ComparisonRow]) {
    rows.sort_by(|a, b| {
        let ra = a.teacher_prune_ratio.unwrap_or(f64::INFINITY);
        let rb = b.teacher_prune_ratio.unwrap_or(f64::INFINITY);
        a.model
            .cmp(&b.model)
            .then(mode_rank(&a.mode).cmp(&mode_rank(&b.mode)))
            .then(ra.total_cmp(&rb))
            .then(a.name.cmp(&b.name))
    });
}

fn fmt_exact(v: f64) -> String {
    format!("{v}")
}

fn csv_cells(row: &ComparisonRow) -> Vec<String> {
    vec![
        row.name.clone(),
        row.dataset.clone(),
        row.model.clone(),
        row.mode.clone(),
        row.teacher_prune_ratio.map(fmt_exact).unwrap_or_default(),
        row.teacher_acc_pct.map(fmt_exact).unwrap_or_default(),
        fmt_exact(row.baseline_acc_pct),
        fmt_exact(row.kd_acc_pct),
        fmt_exact(row.improvement_pct),
    ]
}

fn txt_cells(row: &ComparisonRow) -> Vec<String> {
    vec![
        row.name.clone(),
        row.dataset.clone(),
        row.model.clone(),
        row.mode.clone(),
        row.teacher_prune_ratio
            .map(fmt_exact)
            .unwrap_or_else(|| "-".to_string()),
        row.teacher_acc_pct
            .map(|v| format!("{v:.2}"))
            .unwrap_or_else(|| "-".to_string()),
        format!("{:.2}", row.baseline_acc_pct),
        format!("{:.2}", row.kd_acc_pct),
        format!("{:+.2}", row.improvement_pct),
    ]
}

fn write_accuracy_chart(report_dir: &Path, name: &str, report: &TrainReport) -> Result<()> {
    let mut train = vec![(0.0, report.initial.train_acc_pct)];
    let mut test = vec![(0.0, report.initial.test_acc_pct)];
    for row in &report.epochs {
        train.push((row.epoch as f64, row.train_acc_pct));
        test.push((row.epoch as f64, row.test_acc_pct));
    }
    let chart = LineChart {
        title: format!("{name} accuracy"),
        x_label: "epoch".to_string(),
        y_label: "accuracy %".to_string(),
        series: vec![
            Series {
                label: "train".to_string(),
                points: train,
            },
            Series {
                label: "test".to_string(),
                points: test,
            },
        ],
        y_min: Some(0.0),
        y_max: Some(100.0),
    };
    write_text(
        &report_dir.join(format!("{name}-accuracy.svg")),
        &chart.render(),
    )
}

fn run_complete(dir: &Path) -> bool {
    dir.join("checkpoint.snck").is_file()
        && dir.join("report.json").is_file()
        && dir.join("epochs.csv").is_file()
}

fn prune_complete(dir: &Path) -> bool {
    dir.join("checkpoint.snck").is_file() && dir.join("prune.json").is_file()
}

fn cmd_run_suite(cli: &Cli, args: &RunSuiteArgs) -> Result<()> {
    let file_cfg = match &cli.config {
        Some(path) => Some(ExperimentConfig::load(path)?),
        None => None,
    };
    let plan = SuitePlan::resolve(args, file_cfg)?;
    fs::create_dir_all(&cli.out_dir)?;

    let (data, data_label) = match &plan.data {
        Some(path) => (load_dataset(path)?, path.display().to_string()),
        None => {
            let path = cli.out_dir.join("dataset.srkd");
            if plan.resume && path.is_file() {
                println!("dataset: resume, {} exists", path.display());
                (load_dataset(&path)?, "dataset.srkd".to_string())
            } else {
                let g = &plan.gen;
                let handle = gen_synthetic(
                    g.kind.to_core(),
                    g.classes,
                    g.train_per_class,
                    g.test_per_class,
                    &g.shape,
                    g.noise,
                    cli.seed,
                )?;
                save_dataset(&handle, &path)?;
                println!("dataset: wrote {}", path.display());
                (handle, "dataset.srkd".to_string())
            }
        }
    };
    let timesteps = resolve_timesteps(&data, plan.timesteps);
    let spec = build_spec(plan.preset, &data, timesteps)?;
    let scope = default_scope(&spec);
    let kd_base = KdConfig {
        mode: KdMode::Sparse,
        temperature: plan.temperature,
        loss_alpha: plan.loss_alpha,
        kl_direction: plan.kl_direction.to_core(),
        allow_heterogeneous_teacher: false,
    };

    let mut per_seed_rows: Vec<(u64, Vec<ComparisonRow>)> = Vec::new();
    let mut run_index = Vec::new();

    for &seed in &plan.seeds {
        let seed_dir = cli.out_dir.join(format!("seed-{seed}"));
        let mut variants: Vec<String> = Vec::new();

        let baseline_dir = seed_dir.join("baseline");
        let baseline_state = if plan.resume && run_complete(&baseline_dir) {
            println!("[seed {seed}] baseline: resume, artifacts exist");
            Checkpoint::load(&baseline_dir.join("checkpoint.snck"))?.into_state()
        } else {
            let (state, report) = train_baseline(&spec, &data, &plan.optimizer, plan.epochs, seed)?;
            write_run_artifacts(&baseline_dir, &state, &report, seed, plan.epochs)?;
            println!(
                "[seed {seed}] baseline: test {:.2}%",
                report.final_metrics.test_acc_pct
            );
            state
        };
        variants.push("baseline".to_string());

        for &ratio in &plan.grid {
            let prune_name = format!("prune-{ratio}");
            let prune_dir = seed_dir.join(&prune_name);
            if plan.resume && prune_complete(&prune_dir) {
                println!("[seed {seed}] {prune_name}: resume, artifacts exist");
            } else {
                let mut teacher = baseline_state.clone();
                let mask = compute_mask(&teacher, ratio, scope, PruneRanking::Global)?;
                mask.apply(&mut teacher.params)?;
                teacher.mask = Some(mask);
                let sparsity = sparsity_report(teacher.mask.as_ref().expect("mask was just set"));
                let eval = eval_split(&teacher, &data, Split::Test, cli.threads)?;
                println!(
                    "[seed {seed}] {prune_name}: teacher test {:.2}%",
                    eval.accuracy_pct
                );
                fs::create_dir_all(&prune_dir)?;
                Checkpoint::from_state(&teacher, seed, plan.epochs)
                    .save(&prune_dir.join("checkpoint.snck"))?;
                write_json(
                    &prune_dir.join("prune.json"),
                    &PruneRecord {
                        ratio,
                        scope,
                        ranking: PruneRanking::Global,
                        sparsity,
                        eval: Some(eval),
                    },
                )?;
            }
            variants.push(prune_name.clone());

            let kd_name = format!("sparse-{ratio}");
            let kd_dir = seed_dir.join(&kd_name);
            if plan.resume && run_complete(&kd_dir) {
                println!("[seed {seed}] {kd_name}: resume, artifacts exist");
            } else {
                let teacher_state =
                    Checkpoint::load(&prune_dir.join("checkpoint.snck"))?.into_state();
                let record: PruneRecord = read_json(&prune_dir.join("prune.json"))?;
                let cfg = KdConfig {
                    mode: KdMode::Sparse,
                    ..kd_base
                };
                let mut student = NetworkState::init(&spec, seed);
                let report = distill_train(
                    &mut student,
                    &Teacher::Sparse(teacher_state),
                    &data,
                    &cfg,
                    &plan.optimizer,
                    plan.epochs,
                    seed,
                )?;
                write_run_artifacts(&kd_dir, &student, &report, seed, plan.epochs)?;
                write_json(
                    &kd_dir.join("run-meta.json"),
                    &RunMeta {
                        mode: "sparse".to_string(),
                        teacher: Some(format!("{prune_name}/checkpoint.snck")),
                        teacher_prune_ratio: Some(ratio),
                        teacher_acc_pct: record.eval.map(|e| e.accuracy_pct),
                        teacher_alpha: None,
                    },
                )?;
                println!(
                    "[seed {seed}] {kd_name}: test {:.2}%",
                    report.final_metrics.test_acc_pct
                );
            }
            variants.push(kd_name);
        }

        let kd_name = format!("default-{}", plan.teacher_alpha);
        let kd_dir = seed_dir.join(&kd_name);
        if plan.resume && run_complete(&kd_dir) {
            println!("[seed {seed}] {kd_name}: resume, artifacts exist");
        } else {
            let teacher = VirtualTeacher::new(data.manifest.classes, plan.teacher_alpha)?;
            let cfg = KdConfig {
                mode: KdMode::Default,
                ..kd_base
            };
            let mut student = NetworkState::init(&spec, seed);
            let report = distill_train(
                &mut student,
                &Teacher::Virtual(teacher),
                &data,
                &cfg,
                &plan.optimizer,
                plan.epochs,
                seed,
            )?;
            write_run_artifacts(&kd_dir, &student, &report, seed, plan.epochs)?;
            write_json(
                &kd_dir.join("run-meta.json"),
                &RunMeta {
                    mode: "default".to_string(),
                    teacher: None,
                    teacher_prune_ratio: None,
                    teacher_acc_pct: Some(100.0),
                    teacher_alpha: Some(plan.teacher_alpha),
                },
            )?;
            println!(
                "[seed {seed}] {kd_name}: test {:.2}%",
                report.final_metrics.test_acc_pct
            );
        }
        variants.push(kd_name);

        let rows = build_report(&seed_dir)?;
        per_seed_rows.push((seed, rows));
        run_index.push(serde_json::json!({
            "seed": seed,
            "dir": format!("seed-{seed}"),
            "variants": variants,
        }));
    }

    let aggregate_text = write_aggregate(&cli.out_dir, &per_seed_rows)?;
    print!("{aggregate_text}");

    let manifest = serde_json::json!({
        "dataset": {
            "path": data_label,
            "source": data.manifest.source,
            "classes": data.manifest.classes,
            "encoding": encoding_name(data.manifest.encoding),
        },
        "preset": plan.preset.name(),
        "timesteps": timesteps,
        "optimizer": plan.optimizer,
        "epochs": plan.epochs,
        "kd": {
            "temperature": plan.temperature,
            "loss_alpha": plan.loss_alpha,
            "kl_direction": plan.kl_direction,
        },
        "teacher_alpha": plan.teacher_alpha,
        "grid": plan.grid,
        "seeds": plan.seeds,
        "runs": run_index,
    });
    write_json(&cli.out_dir.join("run-manifest.json"), &manifest)?;
    println!("suite complete: {}", cli.out_dir.display());
    Ok(())
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Aggregate per-variant improvements across seeds into aggregate.csv and
/// aggregate.txt; returns the rendered text table.
fn write_aggregate(out_dir: &Path, per_seed: &[(u64, Vec<ComparisonRow>)]) -> Result<String> {
    let Some((_, first)) = per_seed.first() else {
        return Ok(String::new());
    };
    let headers = [
        "variant",
        "seeds",
        "mean_teacher_acc_pct",
        "mean_baseline_acc_pct",
        "mean_kd_acc_pct",
        "mean_improvement_pct",
        "std_improvement_pct",
    ];
    let mut csv_rows = Vec::new();
    let mut txt_rows = Vec::new();
    for row in first {
        let mut improvements = Vec::new();
        let mut kd = Vec::new();
        let mut base = Vec::new();
        let mut teacher = Vec::new();
        for (seed, rows) in per_seed {
            let found = rows.iter().find(|r| r.name == row.name).ok_or_else(|| {
                Error::State(format!("variant {} missing for seed {seed}", row.name))
            })?;
            improvements.push(found.improvement_pct);
            kd.push(found.kd_acc_pct);
            base.push(found.baseline_acc_pct);
            if let Some(t) = found.teacher_acc_pct {
                teacher.push(t);
            }
        }
        let (mean_imp, std_imp) = mean_std(&improvements);
        let (mean_kd, _) = mean_std(&kd);
        let (mean_base, _) = mean_std(&base);
        let mean_teacher = if teacher.len() == improvements.len() {
            Some(mean_std(&teacher).0)
        } else {
            None
        };
        csv_rows.push(vec![
            row.name.clone(),
            improvements.len().to_string(),
            mean_teacher.map(fmt_exact).unwrap_or_default(),
            fmt_exact(mean_base),
            fmt_exact(mean_kd),
            fmt_exact(mean_imp),
            fmt_exact(std_imp),
        ]);
        txt_rows.push(vec![
            row.name.clone(),
            improvements.len().to_string(),
            mean_teacher
                .map(|v| format!("{v:.2}"))
                .unwrap_or_else(|| "-".to_string()),
            format!("{mean_base:.2}"),
            format!("{mean_kd:.2}"),
            format!("{mean_imp:+.2}"),
            format!("{std_imp:.2}"),
        ]);
    }
    write_text(
        &out_dir.join("aggregate.csv"),
        &table::render_csv(&headers, &csv_rows),
    )?;
    let text = table::render_text(&headers, &txt_rows);
    write_text(&out_dir.join("aggregate.txt"), &text)?;
    Ok(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn run_names_reject_path_components() {
        assert!(check_name("baseline").is_ok());
        assert!(check_name("sparse-0.1").is_ok());
        assert!(check_name("").is_err());
        assert!(check_name("..").is_err());
        assert!(check_name("a/b").is_err());
        assert!(check_name("a\\b").is_err());
    }

    #[test]
    fn path_labels_keep_the_last_two_components() {
        assert_eq!(
            path_label(Path::new("/tmp/x/prune-0.1/checkpoint.snck")),
            "prune-0.1/checkpoint.snck"
        );
        assert_eq!(path_label(Path::new("checkpoint.snck")), "checkpoint.snck");
    }

    #[test]
    fn rows_sort_by_model_mode_then_ratio() {
        let row = |model: &str, mode: &str, ratio: Option<f64>, name: &str| ComparisonRow {
            name: name.to_string(),
            dataset: "blobs".to_string(),
            model: model.to_string(),
            mode: mode.to_string(),
            teacher_prune_ratio: ratio,
            teacher_acc_pct: None,
            baseline_acc_pct: 0.0,
            kd_acc_pct: 0.0,
            improvement_pct: 0.0,
        };
        let mut rows = vec![
            row("mlp", "default", None, "default-0.91"),
            row("mlp", "sparse", Some(0.3), "sparse-0.3"),
            row("mlp", "sparse", Some(0.1), "sparse-0.1"),
        ];
        sort_rows(&mut rows);
        let names: Vec<&str> = rows.iter().map(|r| r.name.as_str()).collect();
        assert_eq!(names, ["sparse-0.1", "sparse-0.3", "default-0.91"]);
    }

    #[test]
    fn mean_std_matches_hand_computation() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-12);
        let (m, s) = mean_std(&[5.0]);
        assert_eq!(m, 5.0);
        assert_eq!(s, 0.0);
    }

    #[test]
    fn exact_cells_round_trip_through_parse() {
        assert_eq!(fmt_exact(100.0), "100");
        assert_eq!(fmt_exact(0.1), "0.1");
        let v = 99.16666666666667_f64;
        assert_eq!(fmt_exact(v).parse::<f64>().unwrap(), v);
    }
}
