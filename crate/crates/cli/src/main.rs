use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use serde_json::json;

use covertime_core::exactsolve::{default_kernel, solve_green, KernelGreen};
use covertime_core::experiments::{self, parse_config, GraphFamily};
use covertime_core::gff::GffSampler;
use covertime_core::isomorphism::{verify_identity, GraphPreset, DEFAULT_KS_MAX};
use covertime_core::rng::split_seed;
use covertime_core::walker::{run_until_cover, run_until_inverse_local, StopReason, WalkOptions, DEFAULT_BUDGET};
use covertime_core::{Boundary, LatticeGraph, Site};

#[derive(Parser)]
#[command(name = "covertime-lab", version, about = "Random walk cover times, local times and free fields on lattice graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct GraphArgs {
    /// wired, free, torus or disk-identified
    #[arg(long, default_value = "wired")]
    graph: GraphFamily,
    #[arg(long)]
    n: usize,
    /// Disk exponent for disk-identified graphs.
    #[arg(long, default_value_t = 2.0)]
    kappa: f64,
}

#[derive(Subcommand)]
enum Command {
    /// Cover and cover-and-return times from the start vertex.
    SimulateCover {
        #[command(flatten)]
        graph: GraphArgs,
        #[arg(long, default_value_t = 100)]
        replicas: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_BUDGET)]
        budget: u64,
        /// CSV output; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Runs until the local time at the start vertex reaches t.
    SimulateInverseLocal {
        #[command(flatten)]
        graph: GraphArgs,
        #[arg(long)]
        t: f64,
        #[arg(long, default_value_t = 100)]
        replicas: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_BUDGET)]
        budget: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Maxima of free fields on the wired n x n box.
    SampleGff {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 100)]
        reps: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Raw fields: u64 side, then reps * n * n little-endian f64, row-major.
        #[arg(long)]
        dump: Option<PathBuf>,
    },
    /// Per-vertex comparison of both sides of the isomorphism, as JSON lines.
    VerifyIsomorphism {
        #[arg(long, default_value = "single-edge")]
        graph_preset: GraphPreset,
        #[arg(long, default_value_t = 1.0)]
        t: f64,
        #[arg(long, default_value_t = 10_000)]
        reps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_KS_MAX)]
        ks_max: f64,
    },
    /// Green function from the box center by direct solve and via the
    /// potential kernel, for every interior site y.
    GreenTable {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Runs a configured experiment and writes its CSV and manifest.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the output path from the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn simulate_cover(graph: &GraphArgs, replicas: u64, seed: u64, budget: u64, out: Option<&Path>) -> Result<()> {
    let (g, start) = graph.graph.build(graph.n, graph.kappa)?;
    let opts = WalkOptions {
        budget,
        ..WalkOptions::default()
    };
    let mut w = sink(out)?;
    writeln!(w, "replica,seed,tau_cov,tau_cov_return,steps,stop_reason")?;
    for r in 0..replicas {
        let s = split_seed(seed, r);
        let rec = run_until_cover(&g, start, s, opts)?;
        writeln!(
            w,
            "{r},{s},{},{},{},{:?}",
            opt(rec.tau_cov),
            opt(rec.tau_cov_return),
            rec.steps,
            rec.stop_reason
        )?;
    }
    w.flush()?;
    Ok(())
}

fn simulate_inverse_local(graph: &GraphArgs, t: f64, replicas: u64, seed: u64, budget: u64, out: Option<&Path>) -> Result<()> {
    let (g, v0) = graph.graph.build(graph.n, graph.kappa)?;
    let opts = WalkOptions {
        budget,
        ..WalkOptions::default()
    };
    let mut w = sink(out)?;
    writeln!(w, "replica,seed,tau,steps,min_local_time,unvisited,stop_reason")?;
    for r in 0..replicas {
        let s = split_seed(seed, r);
        let rec = run_until_inverse_local(&g, v0, t, s, opts)?;
        let min = rec.local_time.iter().copied().fold(f64::INFINITY, f64::min);
        let unvisited = rec.visit_count.iter().filter(|&&c| c == 0).count();
        if rec.stop_reason == StopReason::StepBudget {
            eprintln!("replica {r}: step budget exhausted");
        }
        writeln!(w, "{r},{s},{},{},{min},{unvisited},{:?}", rec.elapsed, rec.steps, rec.stop_reason)?;
    }
    w.flush()?;
    Ok(())
}

fn sample_gff(n: usize, reps: u64, seed: u64, out: Option<&Path>, dump: Option<&Path>) -> Result<()> {
    let g = LatticeGraph::build_box(n, Boundary::Wired)?;
    let v0 = g.special().context("wired box without boundary vertex")?;
    let sampler = GffSampler::new(&g, &[v0])?;
    let mut w = sink(out)?;
    let mut raw = match dump {
        Some(p) => {
            let mut f = BufWriter::new(File::create(p).with_context(|| format!("cannot create {}", p.display()))?);
            f.write_all(&(n as u64).to_le_bytes())?;
            Some(f)
        }
        None => None,
    };
    writeln!(w, "replica,seed,max")?;
    for r in 0..reps {
        let s = split_seed(seed, r);
        let field = sampler.sample(s);
        writeln!(w, "{r},{s},{}", field.sup())?;
        if let Some(f) = raw.as_mut() {
            for y in 0..n as i64 {
                for x in 0..n as i64 {
                    let v = g.vertex_at(Site::new(x, y)).map_or(0.0, |v| field.value(v));
                    f.write_all(&v.to_le_bytes())?;
                }
            }
        }
    }
    if let Some(mut f) = raw {
        f.flush()?;
    }
    w.flush()?;
    Ok(())
}

fn verify_isomorphism(preset: GraphPreset, t: f64, reps: usize, seed: u64, ks_max: f64) -> Result<bool> {
    let (g, v0) = preset.build()?;
    let report = verify_identity(&g, v0, t, reps, seed, ks_max)?;
    let mut w = io::stdout().lock();
    for v in &report.per_vertex {
        let line = json!({
            "vertex": v.vertex.0,
            "site": g.site(v.vertex).map(|s| s.to_string()),
            "ks": v.ks_statistic,
            "lhs_mean": v.lhs_mean,
            "rhs_mean": v.rhs_mean,
            "lhs_var": v.lhs_var,
            "rhs_var": v.rhs_var,
            "se_mean": v.se_mean,
            "mean_ok": v.mean_ok(),
        });
        writeln!(w, "{line}")?;
    }
    let summary = json!({
        "summary": true,
        "preset": preset.name(),
        "v0": report.v0.0,
        "t": report.t,
        "reps": report.reps,
        "ks_max": report.ks_max,
        "max_ks": report.max_ks(),
        "low_power": report.low_power,
        "pass": report.pass,
    });
    writeln!(w, "{summary}")?;
    if report.low_power {
        eprintln!("warning: {reps} replicas are too few for ks_max = {ks_max}");
    }
    Ok(report.pass)
}

fn green_table(n: usize, out: Option<&Path>) -> Result<()> {
    let g = LatticeGraph::build_box(n, Boundary::Wired)?;
    let v0 = g.special().context("wired box without boundary vertex")?;
    let sol = solve_green(&g, &[v0])?;
    let c = g.center();
    let row = sol.green_row(g.vertex_at(c).context("center")?);
    let kg = KernelGreen::new(n, c)?;
    let mut w = sink(out)?;
    writeln!(w, "x,y,G_solve,G_kernel,abs_diff")?;
    for v in g.vertices().filter(|&v| v != v0) {
        let y = g.site(v).context("interior vertex without site")?;
        let a = row[v.index()];
        let b = kg.green(y, default_kernel())?;
        writeln!(w, "{c},{y},{a},{b},{}", (a - b).abs())?;
    }
    w.flush()?;
    Ok(())
}

fn experiment(config: &Path, out: Option<PathBuf>) -> Result<Option<bool>> {
    let text = std::fs::read_to_string(config).with_context(|| format!("cannot read {}", config.display()))?;
    let mut cfg = parse_config(&text).with_context(|| format!("in {}", config.display()))?;
    if let Some(o) = out {
        cfg.output = o;
    }
    let s = experiments::run(&cfg)?;
    println!("wrote {} rows to {}", s.rows, s.output.display());
    println!("manifest: {}", s.manifest.display());
    for line in &s.summary {
        println!("{line}");
    }
    Ok(s.pass)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::SimulateCover { graph, replicas, seed, budget, out } => {
            simulate_cover(&graph, replicas, seed, budget, out.as_deref()).map(|_| true)
        }
        Command::SimulateInverseLocal { graph, t, replicas, seed, budget, out } => {
            simulate_inverse_local(&graph, t, replicas, seed, budget, out.as_deref()).map(|_| true)
        }
        Command::SampleGff { n, reps, seed, out, dump } => {
            sample_gff(n, reps, seed, out.as_deref(), dump.as_deref()).map(|_| true)
        }
        Command::VerifyIsomorphism { graph_preset, t, reps, seed, ks_max } => {
            verify_isomorphism(graph_preset, t, reps, seed, ks_max)
        }
        Command::GreenTable { n, out } => green_table(n, out.as_deref()).map(|_| true),
        Command::Experiment { config, out } => experiment(&config, out).map(|p| p != Some(false)),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
