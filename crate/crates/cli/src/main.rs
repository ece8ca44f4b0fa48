mod config;

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use ndarray::Array2;

use mrtensor_core::analysis::{
    dissimilarity_matrix, matrix_csv, motif_svg, rank_motifs, simulate, SvgOptions,
};
use mrtensor_core::ingest::parse_events;
use mrtensor_core::mrencode::build_tensor;
use mrtensor_core::solver::{fit_block_gs, fit_em};
use mrtensor_core::{BetaRule, CpBtdModel, Error, FitReport, SparseCountTensor};

use config::RunConfig;

#[derive(Parser, Debug)]
#[command(
    name = "mrtensor",
    version,
    args_override_self = true,
    about = "Multiresolution pass tensors and CP-BTD motif fitting"
)]
struct Cli {
    /// Flat `key = value` run configuration; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Backend {
    Gs,
    Em,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Encode an events CSV into a multiresolution count tensor.
    Encode {
        events: Option<PathBuf>,
        #[arg(long)]
        scales: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a CP-BTD model to a tensor file.
    Fit {
        tensor: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "gs")]
        backend: Backend,
        #[arg(long)]
        out: PathBuf,
        /// Report CSV; defaults to the model path with a `.report.csv` suffix.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        max_outer: Option<usize>,
        #[arg(long)]
        n_terms: Option<usize>,
        #[arg(long)]
        rank: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Export the leading motifs as per-scale CSV matrices and SVG diagrams.
    Motifs {
        model: Option<PathBuf>,
        #[arg(long)]
        top: Option<usize>,
        /// Comma-separated scales to render; defaults to every scale.
        #[arg(long, value_delimiter = ',')]
        scales: Option<Vec<usize>>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exposure-adjusted Bray-Curtis dissimilarities between teams.
    Dissim {
        events: Option<PathBuf>,
        #[arg(long)]
        scale: usize,
        #[arg(long)]
        reference_minutes: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sample a tensor from a model with replacement usage rates.
    Simulate {
        model: Option<PathBuf>,
        /// Plain numeric CSV with one row per term and one column per replicate.
        #[arg(long)]
        rates: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Normalized scores: one row per replicate with `eta` and `theta_h`.
    Scores {
        model: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn configure_threads() -> Result<()> {
    if let Ok(value) = std::env::var("MRTENSOR_THREADS") {
        let n: usize = value.trim().parse().with_context(|| {
            format!("MRTENSOR_THREADS must be a positive integer, got `{value}`")
        })?;
        if n == 0 {
            bail!("MRTENSOR_THREADS must be a positive integer, got 0");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    let config = RunConfig::load_optional(cli.config.as_deref())?;
    match cli.command {
        Command::Encode {
            events,
            scales,
            out,
        } => {
            let events = input(events, &config.events, "events")?;
            cmd_encode(&config, &events, scales, &out)
        }
        Command::Fit {
            tensor,
            backend,
            out,
            report,
            max_outer,
            n_terms,
            rank,
            seed,
        } => {
            let tensor = input(tensor, &config.tensor, "tensor")?;
            let mut config = config;
            config.max_outer = max_outer.or(config.max_outer);
            config.n_terms = n_terms.or(config.n_terms);
            config.rank = rank.or(config.rank);
            config.seed = seed.or(config.seed);
            let report = report.unwrap_or_else(|| suffixed(&out, "report.csv"));
            cmd_fit(&config, &tensor, backend, &out, &report)
        }
        Command::Motifs {
            model,
            top,
            scales,
            out,
        } => {
            let model = input(model, &config.model, "model")?;
            let out = out
                .or_else(|| config.out_dir.as_ref().map(PathBuf::from))
                .context("no output directory given (--out or out_dir in the config)")?;
            let top = top.or(config.top_k).unwrap_or(10);
            let scales = scales.or_else(|| config.render_scales.clone());
            cmd_motifs(&config, &model, top, scales, &out)
        }
        Command::Dissim {
            events,
            scale,
            reference_minutes,
            out,
        } => {
            let events = input(events, &config.events, "events")?;
            cmd_dissim(&config, &events, scale, reference_minutes, &out)
        }
        Command::Simulate {
            model,
            rates,
            seed,
            out,
        } => {
            let model = input(model, &config.model, "model")?;
            cmd_simulate(&model, &rates, seed.or(config.seed).unwrap_or(0), &out)
        }
        Command::Scores { model, out } => {
            let model = input(model, &config.model, "model")?;
            cmd_scores(&model, &out)
        }
    }
}

fn input(flag: Option<PathBuf>, configured: &Option<String>, what: &str) -> Result<PathBuf> {
    flag.or_else(|| configured.as_ref().map(PathBuf::from))
        .with_context(|| {
            format!("no {what} path given (positional argument or `{what}` in the config)")
        })
}

fn suffixed(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".");
    s.push(suffix);
    PathBuf::from(s)
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(
        File::open(path).with_context(|| format!("opening {}", path.display()))?,
    ))
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    let mut w =
        BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    w.write_all(contents)?;
    w.flush()?;
    Ok(())
}

fn read_model(path: &Path) -> Result<CpBtdModel> {
    CpBtdModel::read_text(open(path)?).with_context(|| format!("reading model {}", path.display()))
}

fn cmd_encode(config: &RunConfig, events: &Path, scales: Option<usize>, out: &Path) -> Result<()> {
    let scales = scales.or(config.scales).unwrap_or(3);
    if scales == 0 {
        bail!("scales must be at least 1");
    }
    let table = parse_events(open(events)?, &config.geometry()?)
        .with_context(|| format!("parsing {}", events.display()))?;
    if table.events().is_empty() {
        bail!("no events in {}", events.display());
    }
    let tensor = build_tensor(&table, scales)?;
    write_file(out, tensor.to_text().as_bytes())?;
    println!(
        "cells={} nnz={} sparsity={:.4}%",
        tensor.cell_count(),
        tensor.nnz(),
        tensor.sparsity_percent()
    );
    Ok(())
}

fn cmd_fit(
    config: &RunConfig,
    tensor_path: &Path,
    backend: Backend,
    out: &Path,
    report_path: &Path,
) -> Result<()> {
    let solver = config.solver()?;
    let tensor = SparseCountTensor::read_text(open(tensor_path)?)
        .with_context(|| format!("reading tensor {}", tensor_path.display()))?;
    if backend == Backend::Em {
        let beta_active = match solver.beta {
            BetaRule::PerPositive(c) | BetaRule::Fixed(c) => c > 0.0,
        };
        if beta_active {
            eprintln!(
                "warning: the EM backend does not apply the shrinkage penalty; beta is ignored"
            );
        }
    }
    let result = match backend {
        Backend::Gs => fit_block_gs(&tensor, &solver),
        Backend::Em => fit_em(&tensor, &solver),
    };
    let (model, report): (CpBtdModel, FitReport) = match result {
        Ok(fit) => fit,
        Err(Error::Diverged {
            iteration,
            report,
            model,
        }) => {
            write_file(report_path, report.to_csv().as_bytes())?;
            write_file(out, model.to_text().as_bytes())?;
            bail!("fit diverged at outer iteration {iteration}; partial model and report written");
        }
        Err(e) => return Err(e.into()),
    };
    write_file(out, model.to_text().as_bytes())?;
    write_file(report_path, report.to_csv().as_bytes())?;
    println!(
        "objective={:e} outer_iters={} effective_terms={} converged={}",
        report.final_objective(),
        report.trace.len().saturating_sub(1),
        report.effective_terms,
        report.converged
    );
    Ok(())
}

fn cmd_motifs(
    config: &RunConfig,
    model_path: &Path,
    top: usize,
    scales: Option<Vec<usize>>,
    out: &Path,
) -> Result<()> {
    let model = read_model(model_path)?;
    let available = model.scales()?;
    let scales = scales.unwrap_or_else(|| (1..=available).collect());
    if let Some(&bad) = scales.iter().find(|&&s| s == 0 || s > available) {
        bail!("scale {bad} is outside 1..={available}");
    }
    if top == 0 {
        return Ok(());
    }
    let ranked = rank_motifs(&model);
    if top > ranked.len() {
        eprintln!(
            "warning: {top} motifs requested but only {} terms are active; writing all of them",
            ranked.len()
        );
    }
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let options = SvgOptions {
        top_k: config.svg_edges.unwrap_or(SvgOptions::default().top_k),
    };
    for (place, motif) in ranked.iter().take(top).enumerate() {
        for &s in &scales {
            let d = model.motif_at_scale(motif.term, s)?;
            let stem = format!("motif{:03}_term{}_s{s}", place + 1, motif.term + 1);
            write_file(&out.join(format!("{stem}.csv")), matrix_csv(&d).as_bytes())?;
            write_file(
                &out.join(format!("{stem}.svg")),
                motif_svg(&d, s, options).as_bytes(),
            )?;
        }
    }
    println!(
        "wrote {} motifs at scales {:?}",
        top.min(ranked.len()),
        scales
    );
    Ok(())
}

fn cmd_dissim(
    config: &RunConfig,
    events: &Path,
    scale: usize,
    reference: Option<f64>,
    out: &Path,
) -> Result<()> {
    if scale == 0 {
        bail!("scale must be at least 1");
    }
    let table = parse_events(open(events)?, &config.geometry()?)
        .with_context(|| format!("parsing {}", events.display()))?;
    if table.events().is_empty() {
        bail!("no events in {}", events.display());
    }
    let matrix = dissimilarity_matrix(&table, scale, reference)?;
    write_file(out, matrix.to_csv()?.as_bytes())?;
    println!("teams={} scale={scale}", matrix.labels.len());
    Ok(())
}

fn read_rates(path: &Path) -> Result<Array2<f64>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line_no, line) in text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
    {
        let row = line
            .split(',')
            .map(|cell| cell.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .with_context(|| format!("{}:{}: not a numeric row", path.display(), line_no + 1))?;
        if let Some(&bad) = row.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            bail!(
                "{}:{}: rate {bad} is not a finite nonnegative number",
                path.display(),
                line_no + 1
            );
        }
        rows.push(row);
    }
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        bail!("{}: rows have different lengths", path.display());
    }
    Ok(Array2::from_shape_vec((rows.len(), ncols), rows.concat())?)
}

fn cmd_simulate(model_path: &Path, rates: &Path, seed: u64, out: &Path) -> Result<()> {
    let model = read_model(model_path)?;
    let rates = read_rates(rates)?;
    let tensor = simulate(&model, &rates, seed)?;
    write_file(out, tensor.to_text().as_bytes())?;
    println!("nnz={} events={}", tensor.nnz(), tensor.total_count());
    Ok(())
}

fn cmd_scores(model_path: &Path, out: &Path) -> Result<()> {
    let model = read_model(model_path)?;
    let summary = model.normalize_scores()?;
    let mut csv = String::from("replicate,eta");
    for h in 1..=model.n_terms() {
        csv.push_str(&format!(",theta_{h}"));
    }
    csv.push('\n');
    for (n, eta) in summary.eta.iter().enumerate() {
        csv.push_str(&format!("{},{eta:e}", n + 1));
        for v in summary.theta.column(n) {
            csv.push_str(&format!(",{v:e}"));
        }
        csv.push('\n');
    }
    write_file(out, csv.as_bytes())?;
    Ok(())
}
