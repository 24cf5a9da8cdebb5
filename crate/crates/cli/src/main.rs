//! `imsnn`: train, evaluate, and probe ISI-modulated spiking networks.
//!
//! Exit codes:
//! - 0: success
//! - 1: a requested check or demo ran to completion and failed
//! - 2: configuration / validation error
//! - 3: data or I/O error
//! - 4: degenerate network output (no usable prediction)

mod config;

use clap::{Args, Parser, Subcommand};
use config::RunConfig;
use imsnn_core::dataio::{load_split, Dataset};
use imsnn_core::oracle;
use imsnn_core::training::{self, MetricsRecord};
use imsnn_core::{Error, Network, Variant};
use serde::Serialize;
use std::io::Write;
use std::path::{Path, PathBuf};

const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), " (", env!("IMSNN_BUILD_GIT"), ")");

#[derive(Parser)]
#[command(name = "imsnn", version = VERSION, about = "ISI-modulated spiking neural networks")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train a network and write model, metrics, and summary files.
    Train(TrainArgs),
    /// Evaluate a saved model on a dataset split.
    Eval(EvalArgs),
    /// Single-neuron walkthrough: fixed vs. ISI-tuned synapses.
    Demo(DemoArgs),
    /// Train all three variants from identical weights and compare.
    Ablate(TrainArgs),
    /// Finite-difference validation of the analytic loss gradient.
    Gradcheck(GradcheckArgs),
}

/// Options shared by `train` and `ablate`. Flags override the config file.
#[derive(Args)]
struct TrainArgs {
    /// JSON run configuration (see README for the schema).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for model/metrics/summary files.
    #[arg(long, default_value = "imsnn-out")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Layer sizes, e.g. 784-128-10 or 784-6c5-24-10.
    #[arg(long)]
    arch: Option<String>,
    /// imsnn, snn, or imsnn_c.
    #[arg(long)]
    variant: Option<Variant>,
    /// Use only the first N training samples.
    #[arg(long)]
    limit: Option<usize>,
    /// Use only the first N test samples.
    #[arg(long)]
    test_limit: Option<usize>,
    /// Never download; fail on a cold cache.
    #[arg(long)]
    offline: bool,
    /// Dataset cache root (default: $IMSNN_CACHE_DIR or ~/.cache/imsnn).
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    /// Alternative dataset source catalog (JSON).
    #[arg(long)]
    datasets: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Saved model JSON.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    /// train or test.
    #[arg(long, default_value = "test")]
    split: String,
    #[arg(long)]
    limit: Option<usize>,
    #[arg(long)]
    offline: bool,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    #[arg(long)]
    datasets: Option<PathBuf>,
    /// Also write the report here as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DemoArgs {
    /// Write demo.json and demo_rasters.csv into this directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GradcheckArgs {
    /// Number of random instances.
    #[arg(long, default_value_t = 20)]
    nets: usize,
    /// Central-difference step size.
    #[arg(long, default_value_t = 1e-6)]
    step: f64,
    /// Base seed; instance i uses seed + i.
    #[arg(long, default_value_t = 1000)]
    seed: u64,
    /// Presentation window for the generated instances.
    #[arg(long, default_value_t = 20)]
    steps: usize,
    /// Also write all reports here as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Train(args) => cmd_train(args),
        Cmd::Eval(args) => cmd_eval(args),
        Cmd::Demo(args) => cmd_demo(args),
        Cmd::Ablate(args) => cmd_ablate(args),
        Cmd::Gradcheck(args) => cmd_gradcheck(args),
    };
    match result {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(exit_code(&e));
        }
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Validation(_) | Error::ArchParse { .. } | Error::Json(_) | Error::Format(_) => 2,
        Error::DegenerateOutput => 4,
        Error::Io(_)
        | Error::Idx { .. }
        | Error::ChecksumMismatch { .. }
        | Error::CacheMiss { .. }
        | Error::Download { .. } => 3,
    }
}

/// Merge command-line overrides into the (possibly file-loaded) run config.
fn resolve_config(args: &TrainArgs) -> Result<RunConfig, Error> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::from_path(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.train.seed = seed;
    }
    if let Some(epochs) = args.epochs {
        cfg.train.epochs = epochs;
    }
    if let Some(arch) = &args.arch {
        cfg.train.architecture = arch.clone();
    }
    if let Some(variant) = args.variant {
        cfg.train.variant = variant;
    }
    if let Some(limit) = args.limit {
        cfg.data.train_limit = Some(limit);
    }
    if let Some(limit) = args.test_limit {
        cfg.data.test_limit = Some(limit);
    }
    if args.offline {
        cfg.data.offline = true;
    }
    if let Some(dir) = &args.cache_dir {
        cfg.data.cache_dir = Some(dir.clone());
    }
    if let Some(path) = &args.datasets {
        cfg.data.datasets_file = Some(path.clone());
    }
    cfg.train.validate()?;
    Ok(cfg)
}

fn load_data(cfg: &RunConfig) -> Result<(Dataset, Dataset), Error> {
    let catalog = cfg.catalog()?;
    let opts = cfg.fetch_options();
    let train = load_split(&catalog, &cfg.data.dataset, "train", &opts, cfg.data.train_limit)?;
    let test = load_split(&catalog, &cfg.data.dataset, "test", &opts, cfg.data.test_limit)?;
    Ok((train, test))
}

fn print_epoch(record: &MetricsRecord, epochs: usize) {
    let eval = record
        .eval
        .as_ref()
        .map(|e| {
            format!(
                "  acc {:.2}%  activity {:.4}  ({} degenerate)",
                e.kappa_a, e.kappa_n, e.degenerate
            )
        })
        .unwrap_or_default();
    println!(
        "epoch {}/{}: loss {:.6}  suppressed {:.3}  [{:.1}s]{}",
        record.epoch, epochs, record.train_loss, record.suppressed_fraction, record.wall_secs, eval
    );
}

#[derive(Serialize)]
struct Summary<'a> {
    version: &'a str,
    config: &'a RunConfig,
    train_samples: usize,
    test_samples: usize,
    final_kappa_a: Option<f64>,
    final_kappa_n: Option<f64>,
    final_kappa_n_layers: Option<Vec<f64>>,
    final_train_loss: f64,
    final_suppressed_fraction: f64,
    wall_secs_total: f64,
}

fn write_summary(
    path: &Path,
    cfg: &RunConfig,
    records: &[MetricsRecord],
    train_n: usize,
    test_n: usize,
) -> Result<(), Error> {
    let last = records.last().expect("at least one epoch");
    let summary = Summary {
        version: VERSION,
        config: cfg,
        train_samples: train_n,
        test_samples: test_n,
        final_kappa_a: last.eval.as_ref().map(|e| e.kappa_a),
        final_kappa_n: last.eval.as_ref().map(|e| e.kappa_n),
        final_kappa_n_layers: last.eval.as_ref().map(|e| e.kappa_n_layers.clone()),
        final_train_loss: last.train_loss,
        final_suppressed_fraction: last.suppressed_fraction,
        wall_secs_total: records.iter().map(|r| r.wall_secs).sum(),
    };
    std::fs::write(path, serde_json::to_string_pretty(&summary)?)?;
    Ok(())
}

fn run_one_training(
    cfg: &RunConfig,
    out: &Path,
    train_data: &Dataset,
    test_data: &Dataset,
) -> Result<Vec<MetricsRecord>, Error> {
    std::fs::create_dir_all(out)?;
    let mut net = Network::init(
        &cfg.train.architecture,
        cfg.train.variant,
        cfg.train.seed,
        &cfg.train.init,
    )?;
    let epochs = cfg.train.epochs;
    let records = training::train(&mut net, train_data, Some(test_data), &cfg.train, |r| {
        print_epoch(r, epochs)
    })?;
    net.save_model(&out.join("model.json"))?;
    training::write_metrics_csv(&out.join("metrics.csv"), &records)?;
    write_summary(&out.join("summary.json"), cfg, &records, train_data.len(), test_data.len())?;
    std::fs::write(out.join("run_config.json"), serde_json::to_string_pretty(cfg)?)?;
    Ok(records)
}

fn cmd_train(args: TrainArgs) -> Result<i32, Error> {
    let cfg = resolve_config(&args)?;
    let (train_data, test_data) = load_data(&cfg)?;
    println!(
        "training {} [{}] on {} samples ({} test), {} epochs",
        cfg.train.architecture,
        cfg.train.variant.as_str(),
        train_data.len(),
        test_data.len(),
        cfg.train.epochs
    );
    let records = run_one_training(&cfg, &args.out, &train_data, &test_data)?;
    let last = records.last().unwrap();
    if let Some(eval) = &last.eval {
        println!(
            "done: accuracy {:.2}%, activity {:.4}; files in {}",
            eval.kappa_a,
            eval.kappa_n,
            args.out.display()
        );
    }
    Ok(0)
}

fn cmd_eval(args: EvalArgs) -> Result<i32, Error> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::from_path(path)?,
        None => RunConfig::default(),
    };
    if args.offline {
        cfg.data.offline = true;
    }
    if let Some(dir) = &args.cache_dir {
        cfg.data.cache_dir = Some(dir.clone());
    }
    if let Some(path) = &args.datasets {
        cfg.data.datasets_file = Some(path.clone());
    }
    let net = Network::load_model(&args.model)?;
    cfg.train.architecture = net.architecture.clone();
    cfg.train.variant = net.variant;

    let catalog = cfg.catalog()?;
    let opts = cfg.fetch_options();
    let limit = args.limit.or(match args.split.as_str() {
        "train" => cfg.data.train_limit,
        _ => cfg.data.test_limit,
    });
    if args.split != "train" && args.split != "test" {
        return Err(Error::Validation(format!(
            "unknown split '{}' (expected train or test)",
            args.split
        )));
    }
    let data = load_split(&catalog, &cfg.data.dataset, &args.split, &opts, limit)?;
    let mut caches = net.make_caches(cfg.train.encoder.steps as u32);
    let report = training::evaluate(&net, &data, &cfg.train, &mut caches, 0)?;
    let json = serde_json::to_string_pretty(&report)?;
    println!("{json}");
    if let Some(path) = &args.out {
        std::fs::write(path, json)?;
    }
    Ok(0)
}

fn cmd_demo(args: DemoArgs) -> Result<i32, Error> {
    let report = oracle::demo_single_neuron(100, 10, 0.99, 1.0);
    for case in [&report.fixed, &report.matched, &report.offset] {
        println!(
            "{:<16} spikes at {:?}  inflow per arrival {:?}",
            case.name, case.spike_times, case.inflow_per_spike.first()
        );
    }
    println!(
        "centered Gaussian reproduces the fixed synapse bit-for-bit: {}",
        report.rasters_identical
    );
    if let Some(out) = &args.out {
        std::fs::create_dir_all(out)?;
        std::fs::write(out.join("demo.json"), serde_json::to_string_pretty(&report)?)?;
        let mut csv = String::from("case,spike_step\n");
        for case in [&report.fixed, &report.matched, &report.offset] {
            for t in &case.spike_times {
                csv.push_str(&format!("{},{t}\n", case.name));
            }
        }
        std::fs::write(out.join("demo_rasters.csv"), csv)?;
    }
    println!("demo: {}", if report.passed { "PASS" } else { "FAIL" });
    Ok(if report.passed { 0 } else { 1 })
}

fn cmd_ablate(args: TrainArgs) -> Result<i32, Error> {
    let base = resolve_config(&args)?;
    let (train_data, test_data) = load_data(&base)?;
    std::fs::create_dir_all(&args.out)?;

    #[derive(Serialize)]
    struct VariantOutcome {
        variant: String,
        kappa_a: f64,
        kappa_n: f64,
        suppressed_fraction: f64,
    }
    let mut outcomes = Vec::new();
    for variant in [Variant::Imsnn, Variant::Snn, Variant::ImsnnC] {
        let mut cfg = base.clone();
        cfg.train.variant = variant;
        println!("=== variant {} ===", variant.as_str());
        let out = args.out.join(variant.as_str());
        let records = run_one_training(&cfg, &out, &train_data, &test_data)?;
        let last = records.last().unwrap();
        let eval = last.eval.as_ref().expect("ablate always evaluates");
        outcomes.push(VariantOutcome {
            variant: variant.as_str().to_string(),
            kappa_a: eval.kappa_a,
            kappa_n: eval.kappa_n,
            suppressed_fraction: last.suppressed_fraction,
        });
    }

    let activity_ordering_ok =
        outcomes[0].kappa_n < outcomes[1].kappa_n && outcomes[1].kappa_n < outcomes[2].kappa_n;
    let max_accuracy_gap = outcomes
        .iter()
        .map(|o| (outcomes[1].kappa_a - o.kappa_a).abs())
        .fold(0.0, f64::max);

    #[derive(Serialize)]
    struct Ablation {
        version: &'static str,
        outcomes: Vec<VariantOutcome>,
        activity_ordering_ok: bool,
        max_accuracy_gap: f64,
    }
    let ablation = Ablation {
        version: VERSION,
        outcomes,
        activity_ordering_ok,
        max_accuracy_gap,
    };
    std::fs::write(
        args.out.join("ablation.json"),
        serde_json::to_string_pretty(&ablation)?,
    )?;
    for o in &ablation.outcomes {
        println!(
            "{:<8} accuracy {:6.2}%  activity {:8.4}  suppressed {:.3}",
            o.variant, o.kappa_a, o.kappa_n, o.suppressed_fraction
        );
    }
    println!(
        "activity ordering (imsnn < snn < imsnn_c): {}",
        if activity_ordering_ok { "holds" } else { "violated" }
    );
    Ok(0)
}

fn cmd_gradcheck(args: GradcheckArgs) -> Result<i32, Error> {
    if args.nets == 0 {
        return Err(Error::Validation("need at least one net".into()));
    }
    let variants = [Variant::Imsnn, Variant::Snn, Variant::ImsnnC];
    let mut reports = Vec::with_capacity(args.nets);
    let mut all_passed = true;
    for i in 0..args.nets {
        let variant = variants[i % variants.len()];
        let (net, raster, label) = oracle::random_gradcheck_instance(
            args.seed + i as u64,
            variant,
            args.steps,
            0.99,
            1.0,
        );
        let report =
            oracle::fd_check_last_layer(&net, &raster, label, 0.99, 1.0, 10.0, args.step)?;
        println!(
            "net {i:>3} [{:<7}] max_rel_err {:.3e}  {}",
            variant.as_str(),
            report.max_rel_err,
            if report.passed { "PASS" } else { "FAIL" }
        );
        all_passed &= report.passed;
        reports.push(report);
    }
    let worst = reports.iter().map(|r| r.max_rel_err).fold(0.0, f64::max);
    println!(
        "gradcheck: {} nets, worst max_rel_err {:.3e}: {}",
        args.nets,
        worst,
        if all_passed { "PASS" } else { "FAIL" }
    );
    if let Some(path) = &args.out {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(file, "{}", serde_json::to_string_pretty(&reports)?)?;
    }
    Ok(if all_passed { 0 } else { 1 })
}
