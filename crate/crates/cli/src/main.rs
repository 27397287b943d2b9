//! `segdx` command line: phantom corpus generation, segmentation training
//! and evaluation, classifier training, unbalanced sweeps, and SVG reports.
//!
//! Exit codes: 0 success, 2 bad flags, 3 I/O or data-format failure,
//! 4 shape/configuration mismatch.

mod config;
mod manifest;

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use config::{parse_npos, parse_usize_list, FileConfig};
use manifest::{write_atomic, RunManifest};
use segdx::exper::{
    compare_modes, evaluate_cls, make_split_plan, run_sweep, seg_cross_validation, summarize_dice,
    ExperimentConfig, SegCvConfig, SweepKey,
};
use segdx::metrics::{read_sweep_csv, write_dice_csv, write_sweep_csv, MetricsRecord};
use segdx::net::{load_checkpoint, save_checkpoint, FeatureMode, SegFeatureBank};
use segdx::phantom::{generate_corpus, load_corpus, Corpus, CorpusConfig, DiseaseKind, PhantomProfile};
use segdx::report::render_sweep_charts;
use segdx::train::{
    train_clsnet, train_segnet, write_loss_history, AdamConfig, ClsTrainSettings, SegTrainSettings, TrainConfig,
};
use segdx::TensorError;

#[derive(Parser)]
#[command(name = "segdx", version, about = "Segmentation-feature disease detection pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic phantom corpus.
    PhantomGen(PhantomGenArgs),
    /// Train one segmentation fold.
    SegTrain(SegTrainArgs),
    /// Cross-validate segmentation (or score an existing checkpoint).
    SegEval(SegEvalArgs),
    /// Train one classifier on an unbalanced split.
    ClsTrain(ClsTrainArgs),
    /// Run the full disease/mode/n_pos/repetition sweep.
    Sweep(SweepArgs),
    /// Render SVG charts and a ranking from sweep.csv.
    Report(ReportArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Key=value config file, overridden by explicit flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; all randomness flows from it (default 0).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct PhantomGenArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Corpus scale: desk or paper.
    #[arg(long)]
    profile: Option<String>,
    /// Gaussian noise sigma override.
    #[arg(long)]
    noise: Option<f64>,
    /// Output dataset directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainOverrides {
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batches_per_epoch: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
}

impl TrainOverrides {
    fn apply(&self, cfg: &FileConfig, mut base: TrainConfig) -> Result<TrainConfig, CliError> {
        base.epochs = cfg.resolve(&self.epochs, "epochs", base.epochs).map_err(bad_flags)?;
        base.batches_per_epoch = cfg
            .resolve(&self.batches_per_epoch, "batches_per_epoch", base.batches_per_epoch)
            .map_err(bad_flags)?;
        base.batch_size = cfg.resolve(&self.batch_size, "batch_size", base.batch_size).map_err(bad_flags)?;
        Ok(base)
    }
}

#[derive(Args)]
struct SegTrainArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Dataset directory (or $SEGDX_DATA).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Base channels of the first convolution.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    folds: Option<usize>,
    /// Held-out fold; training uses the other folds' patients.
    #[arg(long)]
    fold: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    train: TrainOverrides,
}

#[derive(Args)]
struct SegEvalArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    data: Option<PathBuf>,
    /// Channel study values, e.g. 8 or 8,16,32,64.
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    folds: Option<usize>,
    /// Score this checkpoint instead of running cross-validation.
    #[arg(long)]
    ckpt: Option<PathBuf>,
    /// Fold whose patients are scored in --ckpt mode.
    #[arg(long)]
    fold: Option<usize>,
    /// Which side of the fold to score in --ckpt mode: test or train.
    #[arg(long)]
    split: Option<String>,
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    train: TrainOverrides,
}

#[derive(Args)]
struct ClsTrainArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    data: Option<PathBuf>,
    /// Frozen segmentation checkpoint (feature source); IMG mode needs none.
    #[arg(long)]
    seg_ckpt: Option<PathBuf>,
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    disease: Option<String>,
    /// Positive training samples drawn from the repetition's pool.
    #[arg(long)]
    npos: Option<usize>,
    /// Repetition index selecting the split shuffle.
    #[arg(long)]
    rep: Option<usize>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    feature_fold: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    train: TrainOverrides,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    seg_ckpt: Option<PathBuf>,
    /// effusion, septal or both.
    #[arg(long)]
    disease: Option<String>,
    /// Comma list of feature modes.
    #[arg(long)]
    modes: Option<String>,
    /// Sweep points: a..b or comma list.
    #[arg(long)]
    npos: Option<String>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    feature_fold: Option<usize>,
    /// Parallel trainings.
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    train: TrainOverrides,
}

#[derive(Args)]
struct ReportArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// sweep.csv produced by the sweep command.
    #[arg(long = "in")]
    input: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

struct CliError {
    code: i32,
    message: String,
}

fn bad_flags(message: impl std::fmt::Display) -> CliError {
    CliError { code: 2, message: message.to_string() }
}

impl From<TensorError> for CliError {
    fn from(e: TensorError) -> Self {
        let code = match &e {
            TensorError::Io(_) | TensorError::Format(_) => 3,
            TensorError::ShapeMismatch { .. } | TensorError::DataLength { .. } | TensorError::Usage(_) => 4,
        };
        CliError { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError { code: 3, message: e.to_string() }
    }
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::PhantomGen(args) => cmd_phantom_gen(args),
        Command::SegTrain(args) => cmd_seg_train(args),
        Command::SegEval(args) => cmd_seg_eval(args),
        Command::ClsTrain(args) => cmd_cls_train(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Report(args) => cmd_report(args),
    };
    if let Err(e) = result {
        eprintln!("error: {}", e.message);
        std::process::exit(e.code);
    }
}

fn required_out(cfg: &FileConfig, out: &Option<PathBuf>) -> Result<PathBuf, CliError> {
    cfg.resolve_opt(out, "out")
        .map_err(bad_flags)?
        .ok_or_else(|| bad_flags("--out is required"))
}

fn data_dir(cfg: &FileConfig, data: &Option<PathBuf>) -> Result<PathBuf, CliError> {
    if let Some(d) = cfg.resolve_opt(data, "data").map_err(bad_flags)? {
        return Ok(d);
    }
    std::env::var_os("SEGDX_DATA")
        .map(PathBuf::from)
        .ok_or_else(|| bad_flags("--data is required (or set SEGDX_DATA)"))
}

fn load_data(path: &Path) -> Result<Corpus, CliError> {
    Ok(load_corpus(path)?)
}

fn seed_of(cfg: &FileConfig, common: &CommonArgs) -> Result<u64, CliError> {
    cfg.resolve(&common.seed, "seed", 0).map_err(bad_flags)
}

fn cmd_phantom_gen(args: PhantomGenArgs) -> Result<(), CliError> {
    let start = Instant::now();
    let cfg = FileConfig::load(args.common.config.as_deref()).map_err(bad_flags)?;
    let out = required_out(&cfg, &args.out)?;
    let seed = seed_of(&cfg, &args.common)?;
    let profile_name = cfg.resolve(&args.profile, "profile", "desk".to_string()).map_err(bad_flags)?;
    let mut profile =
        PhantomProfile::parse(&profile_name).ok_or_else(|| bad_flags(format!("unknown profile {profile_name}")))?;
    if let Some(noise) = cfg.resolve_opt(&args.noise, "noise").map_err(bad_flags)? {
        profile.noise_sigma = noise;
    }

    let summary = generate_corpus(&CorpusConfig { profile, master_seed: seed }, &out)?;
    println!(
        "wrote {}: {} patients, {} negative slices, {} effusion + {} septal positives",
        out.display(),
        summary.patients,
        summary.negatives,
        summary.effusion_positives,
        summary.septal_positives
    );

    let mut man = RunManifest::new("phantom-gen");
    man.set("seed", seed);
    man.set("profile", &profile_name);
    man.set("noise_sigma", profile.noise_sigma);
    man.set("patients", summary.patients);
    man.set("negatives", summary.negatives);
    man.artifact(&out.join("manifest.tsv"));
    man.write(&out, start.elapsed())?;
    Ok(())
}

fn seg_fold_patients(corpus: &Corpus, folds: usize, fold: usize, seed: u64) -> Result<(Vec<String>, Vec<String>), CliError> {
    if fold >= folds {
        return Err(bad_flags(format!("--fold {fold} outside 0..{folds}")));
    }
    let partition = segdx::exper::partition_patients(&corpus.patients(), folds, seed);
    let test = partition[fold].clone();
    let train = corpus
        .patients()
        .into_iter()
        .filter(|p| !test.contains(p))
        .collect();
    Ok((train, test))
}

fn cmd_seg_train(args: SegTrainArgs) -> Result<(), CliError> {
    let start = Instant::now();
    let cfg = FileConfig::load(args.common.config.as_deref()).map_err(bad_flags)?;
    let out = required_out(&cfg, &args.out)?;
    let seed = seed_of(&cfg, &args.common)?;
    let data = data_dir(&cfg, &args.data)?;
    let n = cfg.resolve(&args.n, "n", 16).map_err(bad_flags)?;
    let folds = cfg.resolve(&args.folds, "folds", 4).map_err(bad_flags)?;
    let fold = cfg.resolve(&args.fold, "fold", 0).map_err(bad_flags)?;
    let train_cfg = args.train.apply(&cfg, TrainConfig::seg())?;

    let corpus = load_data(&data)?;
    let (train_patients, _) = seg_fold_patients(&corpus, folds, fold, seed)?;
    let samples: Vec<_> = corpus.normals_of_patients(&train_patients).collect();
    let settings = SegTrainSettings {
        n,
        levels: 4,
        num_labels: segdx::phantom::NUM_LABELS,
        config: train_cfg,
        adam: AdamConfig::segmentation(),
    };
    let run_seed = segdx::rng::child_seed(seed, "seg-fold", &[fold as u64, n as u64]);
    let (ckpt, history) = train_segnet(&settings, &samples, run_seed)?;

    std::fs::create_dir_all(&out)?;
    let ckpt_path = out.join("segnet.ckpt");
    save_checkpoint(&ckpt_path, &ckpt)?;
    let hist_path = out.join("loss_history.csv");
    write_loss_history(&hist_path, &history)?;
    println!(
        "trained segnet n={n} fold {fold}/{folds} on {} slices; final epoch loss {:.3}",
        samples.len(),
        history.last().copied().unwrap_or(f64::NAN)
    );

    let mut man = RunManifest::new("seg-train");
    man.set("seed", seed);
    man.set("n", n);
    man.set("folds", folds);
    man.set("fold", fold);
    man.set("epochs", train_cfg.epochs);
    man.set("batches_per_epoch", train_cfg.batches_per_epoch);
    man.set("batch_size", train_cfg.batch_size);
    man.set("data", data.display());
    man.artifact(&ckpt_path);
    man.artifact(&hist_path);
    man.write(&out, start.elapsed())?;
    Ok(())
}

fn cmd_seg_eval(args: SegEvalArgs) -> Result<(), CliError> {
    let start = Instant::now();
    let cfg = FileConfig::load(args.common.config.as_deref()).map_err(bad_flags)?;
    let seed = seed_of(&cfg, &args.common)?;
    let data = data_dir(&cfg, &args.data)?;
    let folds = cfg.resolve(&args.folds, "folds", 4).map_err(bad_flags)?;
    let corpus = load_data(&data)?;

    if let Some(ckpt_path) = cfg.resolve_opt(&args.ckpt, "ckpt").map_err(bad_flags)? {
        // Score an existing checkpoint on one fold.
        let fold = cfg.resolve(&args.fold, "fold", 0).map_err(bad_flags)?;
        let split = cfg.resolve(&args.split, "split", "test".to_string()).map_err(bad_flags)?;
        let ckpt = load_checkpoint(&ckpt_path)?;
        let (train_patients, test_patients) = seg_fold_patients(&corpus, folds, fold, seed)?;
        let patients = match split.as_str() {
            "test" => test_patients,
            "train" => train_patients,
            other => return Err(bad_flags(format!("--split must be test or train, got {other}"))),
        };
        let samples: Vec<_> = corpus.normals_of_patients(&patients).collect();
        let per_label = segdx::exper::eval_segnet_dice(&ckpt, &samples, segdx::phantom::NUM_LABELS)?;
        for (label, d) in segdx::phantom::LABEL_NAMES.iter().zip(&per_label) {
            println!("{label}\t{d:.4}");
        }
        let mean_fg: f64 = per_label[1..].iter().sum::<f64>() / (per_label.len() - 1) as f64;
        println!("foreground mean\t{mean_fg:.4}");
        return Ok(());
    }

    let out = required_out(&cfg, &args.out)?;
    let n_values = match cfg.resolve_opt(&args.n, "n").map_err(bad_flags)? {
        Some(spec) => parse_usize_list(&spec).map_err(bad_flags)?,
        None => vec![16],
    };
    let jobs = cfg.resolve(&args.jobs, "jobs", 1).map_err(bad_flags)?;
    let train_cfg = args.train.apply(&cfg, TrainConfig::seg())?;

    let cv = SegCvConfig {
        master_seed: seed,
        folds,
        n_values: n_values.clone(),
        levels: 4,
        num_labels: segdx::phantom::NUM_LABELS,
        train: train_cfg,
        adam: AdamConfig::segmentation(),
        jobs,
    };
    let result = seg_cross_validation(&corpus, &cv)?;

    std::fs::create_dir_all(&out)?;
    let dice_path = out.join("dice.csv");
    let rows: Vec<(usize, usize, String, f64)> = result
        .rows
        .iter()
        .map(|r| (r.fold, r.n, r.label.clone(), r.dice))
        .collect();
    let mut buf = Vec::new();
    write_dice_csv(&mut buf, &rows)?;
    write_atomic(&dice_path, &buf)?;

    let mut ckpt_paths = Vec::new();
    for (fold, n, ckpt) in &result.checkpoints {
        let path = out.join(format!("segnet_fold{fold}_n{n}.ckpt"));
        save_checkpoint(&path, ckpt)?;
        ckpt_paths.push(path);
    }

    println!("n\tlabel\tdice (mean+/-std over {folds} folds)");
    for (n, label, mean, std) in summarize_dice(&result.rows) {
        println!("{n}\t{label}\t{:.1}% +/- {:.1}%", mean * 100.0, std * 100.0);
    }

    let mut man = RunManifest::new("seg-eval");
    man.set("seed", seed);
    man.set("folds", folds);
    man.set("n", n_values.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(","));
    man.set("epochs", train_cfg.epochs);
    man.set("data", data.display());
    man.artifact(&dice_path);
    for p in &ckpt_paths {
        man.artifact(p);
    }
    man.write(&out, start.elapsed())?;
    Ok(())
}

fn parse_mode_list(spec: &str) -> Result<Vec<FeatureMode>, CliError> {
    spec.split(',')
        .map(|m| FeatureMode::parse(m).map_err(CliError::from))
        .collect()
}

fn parse_diseases(spec: &str) -> Result<Vec<DiseaseKind>, CliError> {
    match spec.trim().to_ascii_lowercase().as_str() {
        "both" | "all" => Ok(DiseaseKind::ALL.to_vec()),
        other => DiseaseKind::parse(other)
            .map(|d| vec![d])
            .ok_or_else(|| bad_flags(format!("unknown disease {other}"))),
    }
}

fn cmd_cls_train(args: ClsTrainArgs) -> Result<(), CliError> {
    let start = Instant::now();
    let cfg = FileConfig::load(args.common.config.as_deref()).map_err(bad_flags)?;
    let out = required_out(&cfg, &args.out)?;
    let seed = seed_of(&cfg, &args.common)?;
    let data = data_dir(&cfg, &args.data)?;
    let mode = FeatureMode::parse(&cfg.resolve(&args.mode, "mode", "CONCAT".to_string()).map_err(bad_flags)?)?;
    let disease_name = cfg.resolve(&args.disease, "disease", "effusion".to_string()).map_err(bad_flags)?;
    let disease =
        DiseaseKind::parse(&disease_name).ok_or_else(|| bad_flags(format!("unknown disease {disease_name}")))?;
    let npos = cfg.resolve(&args.npos, "npos", 3).map_err(bad_flags)?;
    let rep = cfg.resolve(&args.rep, "rep", 0).map_err(bad_flags)?;
    let folds = cfg.resolve(&args.folds, "folds", 4).map_err(bad_flags)?;
    let feature_fold = cfg.resolve(&args.feature_fold, "feature_fold", 0).map_err(bad_flags)?;
    let train_cfg = args.train.apply(&cfg, TrainConfig::cls())?;

    let corpus = load_data(&data)?;
    let input_size = corpus
        .samples
        .first()
        .map(|s| s.image.shape()[1])
        .ok_or_else(|| bad_flags("dataset is empty"))?;

    let seg_ckpt_path = cfg.resolve_opt(&args.seg_ckpt, "seg_ckpt").map_err(bad_flags)?;
    if mode.needs_seg() && seg_ckpt_path.is_none() {
        return Err(CliError {
            code: 4,
            message: format!("feature mode {mode} requires --seg-ckpt"),
        });
    }

    let exp = ExperimentConfig {
        master_seed: seed,
        folds,
        feature_fold,
        modes: vec![mode],
        n_pos: vec![npos],
        repetitions: rep + 1,
        cls_train: train_cfg,
        ..ExperimentConfig::desk(seed, input_size)
    };
    let plan = make_split_plan(&exp, &corpus, disease, rep)?;

    let bank = match seg_ckpt_path {
        Some(path) if mode.needs_seg() => {
            let ckpt = load_checkpoint(&path)?;
            let mut wanted: Vec<&segdx::phantom::LabeledSample> = Vec::new();
            for id in plan.neg_train.iter().chain(&plan.neg_test).chain(&plan.pos_pool).chain(&plan.pos_test) {
                wanted.push(corpus.find(id).ok_or_else(|| bad_flags(format!("sample {id} missing")))?);
            }
            Some(SegFeatureBank::build(&ckpt, wanted.iter().map(|s| (s.id.as_str(), &s.image)))?)
        }
        _ => None,
    };

    let mut train_set = Vec::new();
    for id in plan.neg_train.iter().chain(plan.pos_pool.iter().take(npos)) {
        train_set.push(corpus.find(id).ok_or_else(|| bad_flags(format!("sample {id} missing")))?);
    }
    let settings = ClsTrainSettings {
        mode,
        config: train_cfg,
        ..ClsTrainSettings::desk(mode, input_size)
    };
    let mode_idx = FeatureMode::ALL.iter().position(|m| *m == mode).unwrap_or(0) as u64;
    let run_seed = segdx::rng::child_seed(seed, "cls-train", &[disease.tag(), mode_idx, npos as u64, rep as u64]);
    let (ckpt, history) = train_clsnet(&settings, &train_set, bank.as_ref(), run_seed)?;

    std::fs::create_dir_all(&out)?;
    let ckpt_path = out.join("clsnet.ckpt");
    save_checkpoint(&ckpt_path, &ckpt)?;
    let hist_path = out.join("loss_history.csv");
    write_loss_history(&hist_path, &history)?;

    let mut test_set = Vec::new();
    for id in plan.neg_test.iter().chain(&plan.pos_test) {
        test_set.push(corpus.find(id).ok_or_else(|| bad_flags(format!("sample {id} missing")))?);
    }
    let rows = evaluate_cls(&ckpt, mode, &test_set, bank.as_ref())?;
    let preds: Vec<u8> = rows.iter().map(|r| r.pred).collect();
    let truths: Vec<u8> = rows.iter().map(|r| r.truth).collect();
    let cm = segdx::metrics::confusion(&preds, &truths)?;
    println!(
        "{disease} {mode} npos={npos} rep={rep}: tpr {:.3} tnr {:.3} kappa {:.3}",
        cm.tpr().unwrap_or(f64::NAN),
        cm.tnr().unwrap_or(f64::NAN),
        segdx::metrics::cohens_kappa(&cm)?
    );

    let mut man = RunManifest::new("cls-train");
    man.set("seed", seed);
    man.set("mode", mode);
    man.set("disease", disease);
    man.set("npos", npos);
    man.set("rep", rep);
    man.set("epochs", train_cfg.epochs);
    man.set("data", data.display());
    man.artifact(&ckpt_path);
    man.artifact(&hist_path);
    man.write(&out, start.elapsed())?;
    Ok(())
}

fn record_sort_key(r: &MetricsRecord) -> (String, usize, usize, usize) {
    let mode_idx = FeatureMode::ALL
        .iter()
        .position(|m| m.as_str() == r.mode)
        .unwrap_or(FeatureMode::ALL.len());
    (r.disease.clone(), mode_idx, r.n_pos_train, r.repetition)
}

fn cmd_sweep(args: SweepArgs) -> Result<(), CliError> {
    let start = Instant::now();
    let cfg = FileConfig::load(args.common.config.as_deref()).map_err(bad_flags)?;
    let out = required_out(&cfg, &args.out)?;
    let seed = seed_of(&cfg, &args.common)?;
    let data = data_dir(&cfg, &args.data)?;
    let diseases = parse_diseases(&cfg.resolve(&args.disease, "disease", "both".to_string()).map_err(bad_flags)?)?;
    let modes = parse_mode_list(
        &cfg.resolve(&args.modes, "modes", "IMG,SEG,IMG+SEG,CONCAT,IMG+CONCAT".to_string())
            .map_err(bad_flags)?,
    )?;
    let n_pos = parse_npos(&cfg.resolve(&args.npos, "npos", "1..10".to_string()).map_err(bad_flags)?).map_err(bad_flags)?;
    let reps = cfg.resolve(&args.reps, "reps", 10).map_err(bad_flags)?;
    let folds = cfg.resolve(&args.folds, "folds", 4).map_err(bad_flags)?;
    let feature_fold = cfg.resolve(&args.feature_fold, "feature_fold", 0).map_err(bad_flags)?;
    let jobs = cfg.resolve(&args.jobs, "jobs", 1).map_err(bad_flags)?;
    let train_cfg = args.train.apply(&cfg, TrainConfig::cls())?;

    let corpus = load_data(&data)?;
    let input_size = corpus
        .samples
        .first()
        .map(|s| s.image.shape()[1])
        .ok_or_else(|| bad_flags("dataset is empty"))?;

    let seg_ckpt = match cfg.resolve_opt(&args.seg_ckpt, "seg_ckpt").map_err(bad_flags)? {
        Some(path) => Some(load_checkpoint(&path)?),
        None => {
            if modes.iter().any(|m| m.needs_seg()) {
                return Err(CliError {
                    code: 4,
                    message: "sweep includes segmentation-feature modes; --seg-ckpt is required".into(),
                });
            }
            None
        }
    };

    let exp = ExperimentConfig {
        master_seed: seed,
        folds,
        feature_fold,
        modes: modes.clone(),
        n_pos,
        repetitions: reps,
        cls_train: train_cfg,
        jobs,
        ..ExperimentConfig::desk(seed, input_size)
    };

    // Resume: anything already in sweep.csv is skipped.
    let sweep_path = out.join("sweep.csv");
    let mut records: Vec<MetricsRecord> = Vec::new();
    let mut done: HashSet<SweepKey> = HashSet::new();
    if sweep_path.exists() {
        let mut f = std::fs::File::open(&sweep_path)?;
        records = read_sweep_csv(&mut f)?;
        for r in &records {
            let (Some(disease), Ok(mode)) = (DiseaseKind::parse(&r.disease), FeatureMode::parse(&r.mode)) else {
                return Err(CliError { code: 3, message: format!("sweep.csv has unknown key {}/{}", r.disease, r.mode) });
            };
            done.insert(SweepKey { disease, mode, n_pos: r.n_pos_train, repetition: r.repetition });
        }
        println!("resuming: {} records already present", records.len());
    }

    let outcomes = run_sweep(&exp, &corpus, seg_ckpt.as_ref(), &diseases, &done)?;
    println!("ran {} trainings ({} skipped)", outcomes.len(), done.len());

    std::fs::create_dir_all(out.join("predictions"))?;
    for o in &outcomes {
        let mut buf = String::from("sample_id\ttruth\tpred\tp_pos\n");
        for p in &o.predictions {
            buf.push_str(&format!("{}\t{}\t{}\t{:.6}\n", p.sample_id, p.truth, p.pred, p.p_pos));
        }
        write_atomic(&out.join("predictions").join(format!("{}.tsv", o.key)), buf.as_bytes())?;
    }

    records.extend(outcomes.iter().map(|o| o.record.clone()));
    records.sort_by_key(record_sort_key);
    let mut buf = Vec::new();
    write_sweep_csv(&mut buf, &records)?;
    write_atomic(&sweep_path, &buf)?;

    let ranking = compare_modes(&records, &modes)?;
    write_atomic(out.join("ranking.txt").as_path(), ranking.render_text().as_bytes())?;

    let mut man = RunManifest::new("sweep");
    man.set("seed", seed);
    man.set("diseases", diseases.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(","));
    man.set("modes", modes.iter().map(|m| m.to_string()).collect::<Vec<_>>().join(","));
    man.set(
        "npos",
        exp.n_pos.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(","),
    );
    man.set("reps", reps);
    man.set("epochs", train_cfg.epochs);
    man.set("data", data.display());
    man.artifact(&sweep_path);
    man.write(&out, start.elapsed())?;
    Ok(())
}

fn cmd_report(args: ReportArgs) -> Result<(), CliError> {
    let start = Instant::now();
    let cfg = FileConfig::load(args.common.config.as_deref()).map_err(bad_flags)?;
    let out = required_out(&cfg, &args.out)?;
    let input = cfg
        .resolve_opt(&args.input, "in")
        .map_err(bad_flags)?
        .ok_or_else(|| bad_flags("--in sweep.csv is required"))?;

    let mut f = std::fs::File::open(&input)?;
    let records = read_sweep_csv(&mut f)?;
    if records.is_empty() {
        return Err(CliError { code: 3, message: format!("{} has no records", input.display()) });
    }
    let paths = render_sweep_charts(&records, &out)?;
    let ranking = compare_modes(&records, &FeatureMode::ALL)?;
    write_atomic(out.join("ranking.txt").as_path(), ranking.render_text().as_bytes())?;
    print!("{}", ranking.render_text());
    println!("wrote {} charts to {}", paths.len(), out.display());

    let mut man = RunManifest::new("report");
    man.set("in", input.display());
    for p in &paths {
        man.artifact(p);
    }
    man.write(&out, start.elapsed())?;
    Ok(())
}
