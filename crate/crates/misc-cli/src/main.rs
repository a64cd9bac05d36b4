//! Batch command-line surface for multiview intact-space models.
//!
//! Exit codes: 0 success, 1 runtime or numeric error, 2 flag misuse. Every
//! command is deterministic given its flags; all randomness flows from
//! explicit seeds. Lines written to standard output for scripting are
//! `key=value` formatted.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ndarray::Array1;

use misc_multiview::data::{
    generate_synthetic, load_all_bundles, load_dataset, save_bundle, save_dataset,
    save_ground_truth, SyntheticSpec,
};
use misc_multiview::eval::{
    cross_validate, sensitivity_sweep, CvConfig, SweepConfig, SweepParam, DEFAULT_SWEEP_VALUES,
};
use misc_multiview::gradcheck::{self, GradMutation};
use misc_multiview::inference::{classify_multiclass, decision_value, InferenceConfig};
use misc_multiview::model::{Hyperparams, MultiviewDataset};
use misc_multiview::trainer::{train_one_vs_all, ScheduleKind, StepSchedule, DEFAULT_STEP_BASE};
use misc_multiview::{Error, Result};

#[derive(Parser)]
#[command(
    name = "misc",
    about = "Multiview intact-space classifier: train, predict, evaluate",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one-vs-all models and write bundles plus an objective trace.
    Train(TrainArgs),
    /// Classify a dataset with trained bundles.
    Predict(PredictArgs),
    /// K-fold cross-validation.
    Cv(CvArgs),
    /// Sensitivity sweep over a tradeoff parameter.
    Sweep(SweepArgs),
    /// Generate a synthetic dataset with ground truth.
    Synth(SynthArgs),
    /// Finite-difference check of the analytic gradients.
    Gradcheck(GradcheckArgs),
}

/// Hyperparameter flags shared by train, cv, and sweep.
#[derive(Args, Clone)]
struct HyperFlags {
    /// Classification tradeoff.
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    /// Regularization tradeoff.
    #[arg(long, default_value_t = 0.01)]
    gamma: f64,
    /// Cauchy scale.
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    /// Intact dimension; defaults to the smallest view dimension.
    #[arg(long)]
    dim: Option<usize>,
    /// Training iterations.
    #[arg(long, default_value_t = 100)]
    iters: usize,
    /// Seed for initialization (per-class seeds derive from it).
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Step-size base (mu_t = base/t under the inverse-t schedule).
    #[arg(long, default_value_t = DEFAULT_STEP_BASE)]
    step_base: f64,
    /// Step schedule: inverse-t or constant.
    #[arg(long, default_value = "inverse-t")]
    schedule: String,
    /// Descent iterations for test-time intact recovery.
    #[arg(long, default_value_t = 200)]
    t_inf: usize,
}

impl HyperFlags {
    fn hyperparams(&self, dataset: &MultiviewDataset) -> Hyperparams {
        let mut hp = Hyperparams::for_view_dims(&dataset.view_dims);
        hp.alpha = self.alpha;
        hp.gamma = self.gamma;
        hp.c = self.c;
        if let Some(d) = self.dim {
            hp.d = d;
        }
        hp.max_iters = self.iters;
        hp.seed = self.seed;
        hp.t_inf = self.t_inf;
        hp
    }

    fn step_schedule(&self) -> std::result::Result<StepSchedule, String> {
        let kind = match self.schedule.as_str() {
            "inverse-t" => ScheduleKind::InverseT,
            "constant" => ScheduleKind::Constant,
            other => {
                return Err(format!(
                    "unknown schedule {other:?}, expected \"inverse-t\" or \"constant\""
                ))
            }
        };
        Ok(StepSchedule {
            kind,
            base: self.step_base,
        })
    }

    fn inference_config(&self) -> InferenceConfig {
        InferenceConfig {
            t_inf: self.t_inf,
            ..Default::default()
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset manifest path.
    #[arg(long)]
    data: PathBuf,
    /// Output directory for bundles and trace.csv.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    hyper: HyperFlags,
}

#[derive(Args)]
struct PredictArgs {
    /// Dataset manifest path (labels optional).
    #[arg(long)]
    data: PathBuf,
    /// Bundle directory written by `misc train`.
    #[arg(long)]
    model: PathBuf,
    /// Descent iterations for intact recovery.
    #[arg(long, default_value_t = 200)]
    t_inf: usize,
    /// Output directory for predictions.csv (defaults to the current dir).
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct CvArgs {
    /// Dataset manifest path.
    #[arg(long)]
    data: PathBuf,
    /// Fold count.
    #[arg(long, default_value_t = 10)]
    folds: usize,
    /// Fold-assignment seed.
    #[arg(long, default_value_t = 0)]
    cv_seed: u64,
    /// Disable stratified fold assignment.
    #[arg(long)]
    no_stratify: bool,
    /// Output directory for cv.csv (defaults to the current dir).
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[command(flatten)]
    hyper: HyperFlags,
}

#[derive(Args)]
struct SweepArgs {
    /// Dataset manifest path.
    #[arg(long)]
    data: PathBuf,
    /// Parameter to sweep: alpha or gamma.
    #[arg(long)]
    param: String,
    /// Comma-separated grid values.
    #[arg(long, value_delimiter = ',')]
    values: Option<Vec<f64>>,
    /// Fold count per grid value.
    #[arg(long, default_value_t = 10)]
    folds: usize,
    /// Fold-assignment seed.
    #[arg(long, default_value_t = 0)]
    cv_seed: u64,
    /// Output directory for sweep_<param>.csv (defaults to the current dir).
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[command(flatten)]
    hyper: HyperFlags,
}

#[derive(Args)]
struct SynthArgs {
    /// Points to generate.
    #[arg(long, default_value_t = 200)]
    n: usize,
    /// View count; must match --view-dims when both are given.
    #[arg(long)]
    views: Option<usize>,
    /// Intact dimension of the generator.
    #[arg(long, default_value_t = 5)]
    dim: usize,
    /// Comma-separated per-view feature counts.
    #[arg(long, value_delimiter = ',', default_value = "8,8,8")]
    view_dims: Vec<usize>,
    /// Class count (2 = binary with signed margins).
    #[arg(long, default_value_t = 2)]
    classes: usize,
    /// Noise standard deviation.
    #[arg(long, default_value_t = 0.01)]
    noise: f64,
    /// Minimum |<omega*, z*>| enforced in binary mode.
    #[arg(long, default_value_t = 0.5)]
    margin: f64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Output directory for the dataset and ground_truth/.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GradcheckArgs {
    /// Random instances per gradient block.
    #[arg(long, default_value_t = 20)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Test-only fault injection proving the oracle discriminates.
    #[arg(long, hide = true)]
    mutation: Option<String>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Predict(args) => cmd_predict(args),
        Command::Cv(args) => cmd_cv(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Synth(args) => cmd_synth(args),
        Command::Gradcheck(args) => cmd_gradcheck(args),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(cause) = source {
                eprintln!("  caused by: {cause}");
                source = cause.source();
            }
            ExitCode::from(1)
        }
    }
}

fn usage_error(message: &str) -> ExitCode {
    eprintln!("error: {message}");
    ExitCode::from(2)
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn format_float(v: f64) -> String {
    format!("{v}")
}

fn cmd_train(args: TrainArgs) -> Result<ExitCode> {
    let schedule = match args.hyper.step_schedule() {
        Ok(s) => s,
        Err(msg) => return Ok(usage_error(&msg)),
    };
    let dataset = load_dataset(&args.data)?;
    let hp = args.hyper.hyperparams(&dataset);
    let outputs = train_one_vs_all(&dataset, &hp, &schedule)?;

    create_dir(&args.out)?;
    let mut trace = String::from(
        "class_tag,iteration,reconstruction,classification,regularization,total\n",
    );
    for output in &outputs {
        let tag = output.bundle.class_tag;
        save_bundle(&output.bundle, args.out.join(format!("class_{tag}")))?;
        for (t, rec) in output.report.objective_trace.iter().enumerate() {
            trace.push_str(&format!(
                "{tag},{t},{},{},{},{}\n",
                format_float(rec.reconstruction_term),
                format_float(rec.classification_term),
                format_float(rec.regularization_term),
                format_float(rec.total)
            ));
        }
    }
    write_file(&args.out.join("trace.csv"), &trace)?;
    for output in &outputs {
        println!(
            "class_{}_final_objective={}",
            output.bundle.class_tag,
            format_float(
                output
                    .report
                    .objective_trace
                    .last()
                    .expect("trace nonempty")
                    .total
            )
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn row_views(dataset: &MultiviewDataset, i: usize) -> Vec<Array1<f64>> {
    dataset.views.iter().map(|v| v.row(i).to_owned()).collect()
}

fn cmd_predict(args: PredictArgs) -> Result<ExitCode> {
    let dataset = load_dataset(&args.data)?;
    let bundles = load_all_bundles(&args.model)?;
    for (b, bundle) in bundles.iter().enumerate() {
        let dims = bundle.view_dims();
        if dims != dataset.view_dims {
            return Err(Error::ShapeMismatch {
                context: format!("bundle {} (class {}) vs dataset views", b, bundle.class_tag),
                expected: format!("{:?}", dataset.view_dims),
                actual: format!("{dims:?}"),
            });
        }
    }
    let cfg = InferenceConfig {
        t_inf: args.t_inf,
        ..Default::default()
    };

    let mut csv = String::from("index,predicted_label");
    for bundle in &bundles {
        csv.push_str(&format!(",decision_{}", bundle.class_tag));
    }
    csv.push('\n');

    let mut predicted = Vec::with_capacity(dataset.n);
    for i in 0..dataset.n {
        let x_views = row_views(&dataset, i);
        let values: Vec<f64> = bundles
            .iter()
            .map(|b| decision_value(&x_views, b, &cfg))
            .collect::<Result<_>>()?;
        let label = classify_multiclass(&x_views, &bundles, &cfg)?;
        predicted.push(label);
        csv.push_str(&format!("{i},{label}"));
        for v in values {
            csv.push_str(&format!(",{}", format_float(v)));
        }
        csv.push('\n');
    }
    create_dir(&args.out)?;
    write_file(&args.out.join("predictions.csv"), &csv)?;

    if let Some(labels) = &dataset.labels {
        let accuracy = misc_multiview::eval::accuracy(&predicted, labels)?;
        println!("accuracy={}", format_float(accuracy));
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_cv(args: CvArgs) -> Result<ExitCode> {
    let schedule = match args.hyper.step_schedule() {
        Ok(s) => s,
        Err(msg) => return Ok(usage_error(&msg)),
    };
    let dataset = load_dataset(&args.data)?;
    let hp = args.hyper.hyperparams(&dataset);
    let cv = CvConfig {
        k: args.folds,
        seed: args.cv_seed,
        stratified: !args.no_stratify,
    };
    let summary = cross_validate(&dataset, &hp, &schedule, &cv, &args.hyper.inference_config())?;

    let mut csv = String::from("fold,accuracy\n");
    for (fold, acc) in summary.per_fold_accuracy.iter().enumerate() {
        csv.push_str(&format!("{fold},{}\n", format_float(*acc)));
    }
    create_dir(&args.out)?;
    write_file(&args.out.join("cv.csv"), &csv)?;
    println!("mean_accuracy={}", format_float(summary.mean));
    println!("std_accuracy={}", format_float(summary.std));
    Ok(ExitCode::SUCCESS)
}

fn cmd_sweep(args: SweepArgs) -> Result<ExitCode> {
    let schedule = match args.hyper.step_schedule() {
        Ok(s) => s,
        Err(msg) => return Ok(usage_error(&msg)),
    };
    let param: SweepParam = match args.param.parse() {
        Ok(p) => p,
        Err(e) => return Ok(usage_error(&e.to_string())),
    };
    let values = args
        .values
        .clone()
        .unwrap_or_else(|| DEFAULT_SWEEP_VALUES.to_vec());
    if let Some(bad) = values.iter().find(|v| !(**v > 0.0)) {
        return Ok(usage_error(&format!(
            "sweep values must be positive, got {bad}"
        )));
    }

    let dataset = load_dataset(&args.data)?;
    let sweep = SweepConfig {
        param,
        values,
        base_hp: args.hyper.hyperparams(&dataset),
    };
    let cv = CvConfig {
        k: args.folds,
        seed: args.cv_seed,
        stratified: true,
    };
    let rows = sensitivity_sweep(
        &dataset,
        &sweep,
        &schedule,
        &cv,
        &args.hyper.inference_config(),
    )?;

    let mut csv = String::from("value,mean_accuracy,std\n");
    for row in &rows {
        csv.push_str(&format!(
            "{},{},{}\n",
            format_float(row.value),
            format_float(row.mean_accuracy),
            format_float(row.std)
        ));
    }
    create_dir(&args.out)?;
    write_file(&args.out.join(format!("sweep_{param}.csv")), &csv)?;
    for row in &rows {
        println!(
            "{param}={} mean_accuracy={}",
            format_float(row.value),
            format_float(row.mean_accuracy)
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_synth(args: SynthArgs) -> Result<ExitCode> {
    if let Some(views) = args.views {
        if views != args.view_dims.len() {
            return Ok(usage_error(&format!(
                "--views {} does not match --view-dims with {} entries",
                views,
                args.view_dims.len()
            )));
        }
    }
    let spec = SyntheticSpec {
        n: args.n,
        m: args.view_dims.len(),
        d: args.dim,
        view_dims: args.view_dims.clone(),
        n_classes: args.classes,
        noise_sigma: args.noise,
        margin: args.margin,
        seed: args.seed,
    };
    if let Err(e) = spec.validate() {
        return Ok(usage_error(&e.to_string()));
    }
    let (dataset, ground_truth) = generate_synthetic(&spec)?;
    let manifest = save_dataset(&dataset, &args.out)?;
    save_ground_truth(&ground_truth, args.out.join("ground_truth"))?;
    println!("manifest={}", manifest.display());
    println!("n={} m={} classes={}", dataset.n, dataset.m, args.classes);
    Ok(ExitCode::SUCCESS)
}

fn cmd_gradcheck(args: GradcheckArgs) -> Result<ExitCode> {
    let mutation = match args.mutation.as_deref() {
        None => None,
        Some("sign-flip") => Some(GradMutation::ReconSignFlip),
        Some(other) => {
            return Ok(usage_error(&format!("unknown mutation {other:?}")));
        }
    };
    let report = gradcheck::run(args.trials, args.seed, mutation)?;
    println!("grad_z max_rel_err={}", format_float(report.z.max_rel_err));
    println!("grad_w max_rel_err={}", format_float(report.w.max_rel_err));
    println!(
        "grad_omega max_rel_err={}",
        format_float(report.omega.max_rel_err)
    );
    if report.passed() {
        Ok(ExitCode::SUCCESS)
    } else {
        for (block, detail) in report.failures() {
            eprintln!(
                "error: {block} relative error {:.3e} exceeds {:.0e} (instance seed {})",
                detail.max_rel_err, report.tolerance, detail.worst_seed
            );
        }
        Ok(ExitCode::from(1))
    }
}
