use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;
use rand::SeedableRng;

use mrvr::model_file::{load_model, save_model, ModelFile, ModelMetadata, TrainedModel};
use mrvr::sim::{parse_grid, run_mc, sample_dataset, McOptions, SimConfig, TruthVariant};
use mrvr::table::{load_table, standard_header, write_csv, TableRole};
use mrvr::{fit_baseline, fit_fast, Error, FitOptions, KernelConfig, Method, TrainingData};

#[derive(Parser)]
#[command(name = "mrvr", version, about = "Multi-output relevance vector regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model to a CSV of inputs x1..xU and targets t1..tV.
    Train(TrainArgs),
    /// Predict means and variances for the inputs of a CSV.
    Predict(PredictArgs),
    /// Write a synthetic data set and its true noise covariance.
    Simulate(SimulateArgs),
    /// Compare both methods over a grid of (V, N) cells.
    Benchmark(BenchmarkArgs),
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_parser = parse_method)]
    method: Method,
    /// Gaussian kernel width.
    #[arg(long)]
    width: f64,
    /// Convergence threshold on |Δ log α|.
    #[arg(long, default_value_t = 0.1)]
    tolerance: f64,
    #[arg(long, default_value_t = 1000)]
    max_iter: usize,
    /// Recorded in the model file; generated when absent.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    v: usize,
    #[arg(long)]
    n: usize,
    /// Generated when absent.
    #[arg(long)]
    seed: Option<u64>,
    /// sinc-translations or sinc-plus-linear.
    #[arg(long, default_value = "sinc-translations", value_parser = parse_variant)]
    variant: TruthVariant,
    /// Multiplies the noise standard deviation.
    #[arg(long, default_value_t = 1.0)]
    noise_scale: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchmarkArgs {
    /// For example "V=1..5;N=50..300:50".
    #[arg(long)]
    grid: String,
    #[arg(long, default_value_t = 11)]
    reps: usize,
    /// Generated when absent.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for report.csv and report.txt.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    #[arg(long, default_value_t = 1.6)]
    width: f64,
    #[arg(long, default_value_t = 1.0)]
    noise_scale: f64,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_variant(s: &str) -> Result<TruthVariant, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn seed_or_fresh(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(|| {
        let s = rand::random::<u64>();
        println!("seed: {s}");
        s
    })
}

fn io_error(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn train(args: TrainArgs) -> Result<(), Error> {
    let table = load_table(&args.data, TableRole::InputsAndTargets)?;
    let targets = table.targets.expect("role requires targets");
    let data = TrainingData::new(table.inputs, targets)?;
    let kernel = KernelConfig::gaussian(args.width)?;
    let opts = FitOptions {
        max_iterations: args.max_iter,
        tolerance: args.tolerance,
        record_trace: false,
    };
    let seed = seed_or_fresh(args.seed);
    let model = match args.method {
        Method::Proposed => TrainedModel::Proposed(fit_fast(&data, &kernel, &opts)?),
        Method::Existing => TrainedModel::Existing(fit_baseline(&data, &kernel, &opts)?),
    };
    let file = ModelFile {
        metadata: ModelMetadata {
            n_samples: data.n_samples(),
            n_inputs: data.n_inputs(),
            n_outputs: data.n_outputs(),
            seed: Some(seed),
        },
        model,
    };
    save_model(&file, &args.out)?;
    let m = &file.model;
    println!("method: {}", m.method());
    println!("iterations: {}", m.iterations());
    println!("converged: {}", m.converged());
    println!("relevance vectors: {}", m.n_relevance_vectors());
    println!("log marginal likelihood: {}", m.log_marginal());
    Ok(())
}

fn predict(args: PredictArgs) -> Result<(), Error> {
    let file: ModelFile<f64> = load_model(&args.model)?;
    let table = load_table(&args.data, TableRole::Inputs)?;
    let u = table.inputs.ncols();
    if u != file.metadata.n_inputs {
        return Err(Error::InvalidArgument(format!(
            "data has {u} inputs but the model was trained on {}",
            file.metadata.n_inputs
        )));
    }
    let v = file.model.n_outputs();
    let full = file.model.method() == Method::Proposed;
    let mut header: Vec<String> = (1..=u).map(|k| format!("x{k}")).collect();
    header.extend((1..=v).map(|j| format!("mean_{j}")));
    header.extend((1..=v).map(|j| format!("var_{j}")));
    if full {
        for j in 1..=v {
            header.extend((1..=v).map(|k| format!("cov_{j}_{k}")));
        }
    }
    let rows = table.inputs.nrows();
    let mut out = DMatrix::zeros(rows, header.len());
    let mut means = DMatrix::zeros(rows, v);
    for i in 0..rows {
        let x: Vec<f64> = table.inputs.row(i).iter().copied().collect();
        let p = file.model.predict(&x)?;
        let mut row: Vec<f64> = x;
        row.extend(p.mean.iter());
        row.extend((0..v).map(|j| p.cov[(j, j)]));
        if full {
            for j in 0..v {
                row.extend((0..v).map(|k| p.cov[(j, k)]));
            }
        }
        out.row_mut(i).copy_from_slice(&row);
        means.row_mut(i).copy_from(&p.mean.transpose());
    }
    write_csv(&args.out, &header, &out)?;
    if let Some(t) = table.targets {
        if t.ncols() != v {
            return Err(Error::InvalidArgument(format!(
                "data has {} targets but the model predicts {v}",
                t.ncols()
            )));
        }
        println!("rmse: {}", mrvr::eval::rmse(&t, &means)?);
    }
    Ok(())
}

/// `data.csv` → `data.omega.csv`
fn sidecar_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.omega.csv"))
}

fn simulate(args: SimulateArgs) -> Result<(), Error> {
    let seed = seed_or_fresh(args.seed);
    let mut cfg = SimConfig::new(args.v, args.n);
    cfg.variant = args.variant;
    cfg.noise_scale = args.noise_scale;
    cfg.master_seed = seed;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let set = sample_dataset(&cfg, &mut rng)?;
    let mut all = DMatrix::zeros(args.n, 1 + args.v);
    all.column_mut(0).copy_from(&set.x.column(0));
    all.columns_mut(1, args.v).copy_from(&set.t);
    write_csv(&args.out, &standard_header(1, args.v), &all)?;
    let omega_header: Vec<String> = (1..=args.v).map(|k| format!("o{k}")).collect();
    let sidecar = sidecar_path(&args.out);
    write_csv(&sidecar, &omega_header, &set.omega_true)?;
    println!("wrote {} and {}", args.out.display(), sidecar.display());
    Ok(())
}

fn benchmark(args: BenchmarkArgs) -> Result<(), Error> {
    let seed = seed_or_fresh(args.seed);
    let grid: Vec<SimConfig> = parse_grid(&args.grid)?
        .into_iter()
        .map(|(v, n)| {
            let mut c = SimConfig::new(v, n);
            c.replications = args.reps;
            c.master_seed = seed;
            c.width = args.width;
            c.noise_scale = args.noise_scale;
            c
        })
        .collect();
    let report = run_mc(
        &grid,
        &McOptions {
            threads: args.threads,
            fit: FitOptions::default(),
        },
    )?;
    std::fs::create_dir_all(&args.out).map_err(|e| io_error(&args.out, e))?;
    let csv_path = args.out.join("report.csv");
    let file = std::fs::File::create(&csv_path).map_err(|e| io_error(&csv_path, e))?;
    report.write_csv(file)?;
    let text = report.to_text_table();
    let txt_path = args.out.join("report.txt");
    std::fs::write(&txt_path, &text).map_err(|e| io_error(&txt_path, e))?;
    print!("{text}");
    for cell in &report.cells {
        for f in &cell.failures {
            eprintln!(
                "V={} N={} replication {} ({}): {}",
                cell.v, cell.n, f.replication, f.method, f.message
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Train(a) => train(a),
        Command::Predict(a) => predict(a),
        Command::Simulate(a) => simulate(a),
        Command::Benchmark(a) => benchmark(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 4 } else { 3 })
        }
    }
}
