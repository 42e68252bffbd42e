//! Command-line interface: dataset generation, single fits, sample-file
//! evaluation, the full benchmark protocol, and report regeneration.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::datagen::{generate, DataModelId, Oracle};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::metrics::{sliced_w1, w1_empirical};

use super::report::{markdown_from_csv, render_csv, render_markdown};
use super::{run_experiment, Method, ReportTable, RunConfig};

#[derive(Parser)]
#[command(
    name = "cde-bench",
    about = "Conditional distribution estimation benchmark",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset CSV from one of the synthetic models M1..M10.
    Generate(GenerateArgs),
    /// Fit one method on one model for a single run and report its metrics.
    Fit(FitArgs),
    /// Compare two sample CSV files with the benchmark metrics.
    Evaluate(EvaluateArgs),
    /// Run the full benchmark protocol and emit CSV + markdown reports.
    Bench(BenchArgs),
    /// Regenerate the markdown report from an emitted CSV.
    Report(ReportArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Data model id (M1..M10).
    #[arg(long)]
    model: String,
    #[arg(long, default_value_t = 5000)]
    n: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Output CSV path (header x1..xp,y1..yq).
    #[arg(long)]
    out: PathBuf,
    /// Also export true conditional density grids at random query points.
    #[arg(long)]
    density_out: Option<PathBuf>,
    /// Number of query points for the density export.
    #[arg(long, default_value_t = 4)]
    panels: usize,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    model: String,
    /// hall_yao, flexcode, deepcde, gcds, ddpm, or oracle.
    #[arg(long)]
    method: String,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Uniform multiplier on the protocol sizes.
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    /// Optional CSV output path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// CSV of estimated samples (rows of q numeric columns).
    #[arg(long)]
    samples: PathBuf,
    /// CSV of reference samples with the same column count.
    #[arg(long)]
    reference: PathBuf,
    #[arg(long, default_value_t = 50)]
    n_proj: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

#[derive(Args)]
struct BenchArgs {
    /// Data model id, or `all` for M1..M10.
    #[arg(long, default_value = "all")]
    model: String,
    /// Comma-separated method list.
    #[arg(long, default_value = "hall_yao,flexcode,deepcde,gcds,ddpm")]
    methods: String,
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    #[arg(long, default_value_t = 10)]
    runs: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Output directory for report.csv and report.md.
    #[arg(long)]
    out: PathBuf,
    /// JSON file with a full RunConfig; flags above override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Previously emitted report CSV.
    #[arg(long)]
    results: PathBuf,
    /// Markdown output path.
    #[arg(long)]
    out: PathBuf,
}

/// Runs the CLI; returns the process exit status (0 success, 2 usage or
/// configuration error, 1 runtime failure).
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    super::init_thread_cap();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Report(a) => cmd_report(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::Argument(_) => 2,
                _ => 1,
            }
        }
    }
}

fn write_dataset_csv(path: &Path, x: &Matrix, y: &Matrix) -> Result<()> {
    let mut out = String::new();
    let header: Vec<String> = (1..=x.cols())
        .map(|i| format!("x{i}"))
        .chain((1..=y.cols()).map(|i| format!("y{i}")))
        .collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for r in 0..x.rows() {
        let fields: Vec<String> = x
            .row(r)
            .iter()
            .chain(y.row(r))
            .map(|v| format!("{v}"))
            .collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn cmd_generate(a: GenerateArgs) -> Result<()> {
    let model = DataModelId::parse(&a.model)?;
    let data = generate(model, a.n, a.seed)?;
    write_dataset_csv(&a.out, &data.x, &data.y)?;
    println!("wrote {} rows to {}", data.n(), a.out.display());

    if let Some(density_path) = a.density_out {
        if model.q() != 1 {
            return Err(Error::UnsupportedModel(format!(
                "{model} has a multivariate response; density export needs q = 1"
            )));
        }
        let oracle = Oracle::new(model);
        let panels = generate(model, a.panels.max(1), a.seed ^ 0x9e37_79b9)?;
        let mut out = String::from("panel,y,density\n");
        for panel in 0..panels.n() {
            let x = panels.x.row(panel);
            let grid = oracle.default_y_grid(x)?;
            let dens = oracle.density_grid(x, &grid)?;
            for (g, d) in grid.iter().zip(&dens) {
                let _ = writeln!(out, "{panel},{g},{d}");
            }
        }
        std::fs::write(&density_path, out)?;
        println!("wrote density grids to {}", density_path.display());
    }
    Ok(())
}

fn cmd_fit(a: FitArgs) -> Result<()> {
    let config = RunConfig {
        model: DataModelId::parse(&a.model)?,
        methods: vec![Method::parse(&a.method)?],
        runs: 1,
        base_seed: a.seed,
        scale_factor: a.scale,
        ..RunConfig::default()
    };
    let table = run_experiment(&config)?;
    print!("{}", render_markdown(&table));
    if let Some(path) = a.out {
        std::fs::write(&path, render_csv(&table))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

/// Reads a CSV of numeric rows; a non-numeric first line is treated as a
/// header and skipped.
fn read_sample_csv(path: &Path) -> Result<Matrix> {
    let text = std::fs::read_to_string(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> =
            line.split(',').map(str::trim).map(str::parse::<f64>).collect();
        match parsed {
            Ok(row) => rows.push(row),
            Err(e) if i == 0 => {
                let _ = e; // header line
            }
            Err(e) => {
                return Err(Error::Argument(format!(
                    "{}: line {} is not numeric: {e}",
                    path.display(),
                    i + 1
                )))
            }
        }
    }
    if rows.is_empty() {
        return Err(Error::Argument(format!("{}: no numeric rows", path.display())));
    }
    Matrix::from_rows(&rows)
}

fn cmd_evaluate(a: EvaluateArgs) -> Result<()> {
    let est = read_sample_csv(&a.samples)?;
    let reference = read_sample_csv(&a.reference)?;
    if est.cols() != reference.cols() {
        return Err(Error::Dimension(format!(
            "samples have {} columns, reference has {}",
            est.cols(),
            reference.cols()
        )));
    }
    let q = est.cols();
    let w1 = if q == 1 {
        w1_empirical(est.data(), reference.data())?
    } else {
        sliced_w1(&est, &reference, a.n_proj, a.seed)?
    };
    let moment = |m: &Matrix| -> (Vec<f64>, Vec<f64>) {
        let n = m.rows() as f64;
        let mut mean = vec![0.0; q];
        for r in 0..m.rows() {
            for (acc, &v) in mean.iter_mut().zip(m.row(r)) {
                *acc += v;
            }
        }
        for v in &mut mean {
            *v /= n;
        }
        let mut sd = vec![0.0; q];
        for r in 0..m.rows() {
            for (c, (&mu, &v)) in mean.iter().zip(m.row(r)).enumerate() {
                sd[c] += (v - mu) * (v - mu);
            }
        }
        for v in &mut sd {
            *v = (*v / (n - 1.0).max(1.0)).sqrt();
        }
        (mean, sd)
    };
    let (em, es) = moment(&est);
    let (rm, rs) = moment(&reference);
    let sq = |a: &[f64], b: &[f64]| -> f64 {
        a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum()
    };
    println!("w1,{w1}");
    println!("mean_sq_diff,{}", sq(&em, &rm));
    println!("sd_sq_diff,{}", sq(&es, &rs));
    Ok(())
}

fn cmd_bench(a: BenchArgs) -> Result<()> {
    let mut base = match &a.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            RunConfig::from_json(&text)?
        }
        None => RunConfig::default(),
    };
    if a.config.is_none() {
        base.methods = a
            .methods
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(Method::parse)
            .collect::<Result<Vec<Method>>>()?;
        base.scale_factor = a.scale;
        base.runs = a.runs;
        base.base_seed = a.seed;
    }

    let models: Vec<DataModelId> = if a.config.is_some() {
        vec![base.model]
    } else if a.model.trim().eq_ignore_ascii_case("all") {
        DataModelId::ALL.to_vec()
    } else {
        vec![DataModelId::parse(&a.model)?]
    };

    std::fs::create_dir_all(&a.out)?;
    let mut tables: Vec<ReportTable> = Vec::new();
    for model in models {
        let config = RunConfig { model, ..base.clone() };
        config.validate()?;
        eprintln!(
            "benchmarking {model} (n_train={}, runs={}) ...",
            config.effective_n_train(),
            config.runs
        );
        let table = run_experiment(&config)?;
        for w in &table.warnings {
            eprintln!("  note: {w}");
        }
        tables.push(table);
    }
    let merged = ReportTable::merge(tables).ok_or_else(|| Error::Config("no models to run".into()))?;
    let csv_path = a.out.join("report.csv");
    let md_path = a.out.join("report.md");
    std::fs::write(&csv_path, render_csv(&merged))?;
    std::fs::write(&md_path, render_markdown(&merged))?;
    println!("wrote {} and {}", csv_path.display(), md_path.display());
    Ok(())
}

fn cmd_report(a: ReportArgs) -> Result<()> {
    let text = std::fs::read_to_string(&a.results)?;
    let md = markdown_from_csv(&text)?;
    std::fs::write(&a.out, md)?;
    println!("wrote {}", a.out.display());
    Ok(())
}
