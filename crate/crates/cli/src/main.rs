use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use loccov::assimilate::{benchmark_csv, run_benchmark, BenchmarkConfig};
use loccov::estimator::{localize, sample_covariance};
use loccov::experiment::{
    rates_csv, rows_csv, run_rates, run_simulation, summarize, summary_csv, ExperimentConfig,
    RatesConfig,
};
use loccov::io::{provenance_line, read_data_csv, read_matrix, write_data_csv, write_matrix, MatrixFormat};
use loccov::metrics::L1Kind;
use loccov::model::{sample_gaussian, GeneratorSpec};
use loccov::selection::{default_grid_for, select_best, select_scaling, SelectionConfig, DEFAULT_SPLITS};
use loccov::{Error, LatticeSpec, LocalizationFunction, ScalingVector};

/// Localization covariance estimators and experiment drivers.
#[derive(Parser)]
#[command(name = "loccov", version, about)]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// JSON config file.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV; falls back to the config's `output`, then stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo comparison of estimators against a known truth.
    Simulate(RunArgs),
    /// Error-rate study at the theoretically optimal scaling vector.
    Rates(RunArgs),
    /// Field-reconstruction benchmark with 3DVar.
    Assimilate(RunArgs),
    /// Localizes a covariance matrix, or the sample covariance of a data file.
    Estimate {
        /// Covariance matrix file (CSV or binary).
        #[arg(long, conflicts_with = "data", required_unless_present = "data")]
        matrix: Option<PathBuf>,
        /// Data CSV, one observation per line.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Lattice JSON, inline or a file path.
        #[arg(long)]
        lattice: String,
        /// Localization function JSON, inline or a file path.
        #[arg(long)]
        h: String,
        /// Scaling vector such as `3x2`, or `auto` (needs --data).
        #[arg(long)]
        k: String,
        #[arg(long, default_value_t = DEFAULT_SPLITS)]
        splits: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "csv")]
        format: MatrixFormat,
    },
    /// Scores candidate scaling vectors by sample splitting.
    Select {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        lattice: String,
        #[arg(long)]
        h: String,
        /// JSON list of candidates, inline or a file path; defaults to all
        /// windows up to saturation with volume at most n.
        #[arg(long)]
        grid: Option<String>,
        #[arg(long, default_value_t = DEFAULT_SPLITS)]
        splits: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "operator")]
        norm: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Writes a generator's true covariance, optionally with Gaussian samples.
    Gen {
        /// Generator JSON file.
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "csv")]
        format: MatrixFormat,
        /// Number of Gaussian observations to draw.
        #[arg(long, requires = "data_out")]
        samples: Option<usize>,
        /// Where to write the drawn observations as CSV.
        #[arg(long)]
        data_out: Option<PathBuf>,
    },
}

/// Inline JSON, or the contents of the file it names.
fn json_arg(arg: &str) -> loccov::Result<String> {
    let t = arg.trim_start();
    if t.starts_with('{') || t.starts_with('[') {
        Ok(arg.to_string())
    } else {
        Ok(fs::read_to_string(arg)?)
    }
}

fn parse_json_arg<T: serde::de::DeserializeOwned>(what: &str, arg: &str) -> loccov::Result<T> {
    serde_json::from_str(&json_arg(arg)?).map_err(|e| {
        Error::Parse(format!("{what}: line {}, column {}: {e}", e.line(), e.column()))
    })
}

fn parse_k(s: &str) -> loccov::Result<ScalingVector> {
    let parts = s
        .split(['x', ','])
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| Error::Parse(format!("bad scaling vector `{s}`")))
        })
        .collect::<loccov::Result<Vec<_>>>()?;
    ScalingVector::new(parts)
}

fn read_config(path: &Path) -> loccov::Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

fn prelude(text: &str, seed: Option<u64>) -> String {
    let mut p = provenance_line(text);
    if let Some(s) = seed {
        p.push_str(&format!("\n# seed-override: {s}"));
    }
    p
}

fn emit(out: Option<&Path>, body: &str) -> loccov::Result<()> {
    match out {
        Some(p) => fs::write(p, body)?,
        None => print!("{body}"),
    }
    Ok(())
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

fn simulate(args: &RunArgs) -> loccov::Result<()> {
    let text = read_config(&args.config)?;
    let mut cfg = ExperimentConfig::from_json(&text)?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    let out_path = args.out.clone().or_else(|| cfg.output.clone().map(PathBuf::from));
    let result = run_simulation(&cfg)?;
    let pre = prelude(&text, args.seed);
    let summary = summary_csv(&pre, &summarize(&result.rows));
    emit(out_path.as_deref(), &summary)?;
    if let Some(p) = &out_path {
        fs::write(with_suffix(p, ".rows.csv"), rows_csv(&pre, &result.rows))?;
        let frozen = serde_json::to_string_pretty(&result.generator)?;
        fs::write(with_suffix(p, ".generator.json"), frozen + "\n")?;
    }
    Ok(())
}

fn rates(args: &RunArgs) -> loccov::Result<()> {
    let text = read_config(&args.config)?;
    let mut cfg = RatesConfig::from_json(&text)?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    let out_path = args.out.clone().or_else(|| cfg.output.clone().map(PathBuf::from));
    let out = run_rates(&cfg)?;
    emit(out_path.as_deref(), &rates_csv(&prelude(&text, args.seed), &out))
}

fn assimilate(args: &RunArgs) -> loccov::Result<()> {
    let text = read_config(&args.config)?;
    let mut cfg = BenchmarkConfig::from_json(&text)?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    let out_path = args.out.clone().or_else(|| cfg.output.clone().map(PathBuf::from));
    let out = run_benchmark(&cfg)?;
    emit(out_path.as_deref(), &benchmark_csv(&prelude(&text, args.seed), &out))
}

fn run(cli: Cli) -> loccov::Result<()> {
    match cli.command {
        Command::Simulate(a) => simulate(&a),
        Command::Rates(a) => rates(&a),
        Command::Assimilate(a) => assimilate(&a),
        Command::Estimate {
            matrix,
            data,
            lattice,
            h,
            k,
            splits,
            seed,
            out,
            format,
        } => {
            let spec: LatticeSpec = parse_json_arg("lattice", &lattice)?;
            let h: LocalizationFunction = parse_json_arg("h", &h)?;
            let data = data.map(|p| read_data_csv(fs::File::open(p)?)).transpose()?;
            let s = match (&matrix, &data) {
                (Some(m), _) => read_matrix(m)?,
                (None, Some(d)) => sample_covariance(d)?,
                (None, None) => unreachable!("clap requires one input"),
            };
            let k = if k == "auto" {
                let data = data.as_ref().ok_or_else(|| {
                    Error::InvalidArgument("k = auto needs observations (--data), not a covariance matrix".into())
                })?;
                let cfg = SelectionConfig {
                    candidates: default_grid_for(&h, spec.dims(), data.n()),
                    splits,
                    seed,
                    norm: L1Kind::Operator,
                };
                let k = select_best(data, &spec, &h, &cfg)?;
                eprintln!("selected k = {k}");
                k
            } else {
                parse_k(&k)?
            };
            let est = localize(&s, &spec, &h, &k)?;
            write_matrix(&out, &est, format)
        }
        Command::Select {
            data,
            lattice,
            h,
            grid,
            splits,
            seed,
            norm,
            out,
        } => {
            let spec: LatticeSpec = parse_json_arg("lattice", &lattice)?;
            let h: LocalizationFunction = parse_json_arg("h", &h)?;
            let norm: L1Kind = serde_json::from_value(serde_json::Value::String(norm.clone()))
                .map_err(|_| Error::Parse(format!("unknown norm `{norm}` (operator or entrywise)")))?;
            let data = read_data_csv(fs::File::open(data)?)?;
            let candidates = match grid {
                Some(g) => parse_json_arg("grid", &g)?,
                None => default_grid_for(&h, spec.dims(), data.n()),
            };
            let cfg = SelectionConfig {
                candidates,
                splits,
                seed,
                norm,
            };
            let sel = select_scaling(&data, &spec, &h, &cfg)?;
            let d = spec.order();
            let mut body = format!("# selected: {}\n", sel.selected);
            let cols: Vec<String> = (1..=d).map(|l| format!("k{l}")).collect();
            body.push_str(&format!("{},mean,std\n", cols.join(",")));
            for row in &sel.table {
                let ks: Vec<String> = row.k.as_slice().iter().map(|v| v.to_string()).collect();
                body.push_str(&format!("{},{},{}\n", ks.join(","), row.mean, row.std));
            }
            emit(out.as_deref(), &body)
        }
        Command::Gen {
            config,
            seed,
            out,
            format,
            samples,
            data_out,
        } => {
            let text = read_config(&config)?;
            let generator: GeneratorSpec = serde_json::from_str(&text).map_err(|e| {
                Error::Parse(format!("line {}, column {}: {e}", e.line(), e.column()))
            })?;
            let frozen = generator.freeze(seed)?;
            let sigma = frozen.covariance()?;
            write_matrix(&out, &sigma, format)?;
            if let (Some(n), Some(path)) = (samples, data_out) {
                let data = sample_gaussian(&sigma, n, seed)?;
                let mut buf = Vec::new();
                write_data_csv(&mut buf, &data)?;
                fs::write(path, buf)?;
            }
            Ok(())
        }
    }
}

#[cfg(feature = "parallel")]
fn configure_threads(threads: Option<usize>) -> loccov::Result<()> {
    if let Some(t) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    }
    Ok(())
}

#[cfg(not(feature = "parallel"))]
fn configure_threads(threads: Option<usize>) -> loccov::Result<()> {
    if threads.is_some_and(|t| t > 1) {
        eprintln!("warning: built without the parallel feature; running on one thread");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads(cli.threads).and_then(|_| run(cli));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                ExitCode::from(3)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
