//! Config-driven experiment suite.
//!
//! Every experiment expands into a grid of `(n, replica)` cells. Cell seeds
//! are `split_seed(config.seed, replica)`, cells run on a dedicated worker
//! pool, and rows are sorted by `(n, replica)` before they are written, so the
//! CSV bytes depend only on the configuration.

pub mod config;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

pub use config::{parse_config, t_lambda, ExperimentConfig, ExperimentKind, GraphFamily};

use crate::error::{Error, Result};
use crate::exactsolve::{harmonic_measure, harmonic_tv_distance, solve_green, KernelGreen, default_kernel};
use crate::gff::{bz_prediction, max_statistics, GffSampler};
use crate::isomorphism::verify_identity;
use crate::lattice::{
    build_packing_with, disk_sites, Boundary, LatticeGraph, PackingOverrides,
    PackingStyle, Site, VertexId,
};
use crate::rng::split_seed;
use crate::stats::{fit_cover_scaling, mean, median, variance, MIN_SAMPLES_PER_SIZE};
use crate::walker::{run_until_cover, run_until_inverse_local, thin_point_event, StopReason, WalkOptions};

#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub n: usize,
    pub replica: u64,
    pub seed: u64,
    /// One value per measurement column.
    pub values: Vec<f64>,
}

/// Rows plus the free-form summary lines that go into the manifest.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentOutput {
    pub experiment: ExperimentKind,
    pub columns: Vec<&'static str>,
    pub rows: Vec<ResultRow>,
    pub summary: Vec<String>,
    /// Pass/fail verdict for experiments that have one.
    pub pass: Option<bool>,
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub rows: usize,
    pub output: PathBuf,
    pub manifest: PathBuf,
    pub pass: Option<bool>,
    pub summary: Vec<String>,
}

/// Path of the manifest written next to `output`.
pub fn manifest_path(output: &Path) -> PathBuf {
    let mut s = output.as_os_str().to_owned();
    s.push(".manifest.txt");
    PathBuf::from(s)
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidParameters(format!("worker pool: {e}")))
}

/// Computes all rows in memory without touching the filesystem.
pub fn compute(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let mut out = pool(cfg.workers)?.install(|| match cfg.experiment {
        ExperimentKind::CoverScaling => cover_scaling(cfg),
        ExperimentKind::TauConcentration => tau_concentration(cfg),
        ExperimentKind::GffMax => gff_max(cfg),
        ExperimentKind::Isomorphism => isomorphism(cfg),
        ExperimentKind::ThinPoints => thin_points(cfg),
        ExperimentKind::HarmonicTv => harmonic_tv(cfg),
        ExperimentKind::GreenCrossCheck => green_cross_check(cfg),
    })?;
    out.rows.sort_by_key(|r| (r.n, r.replica));
    Ok(out)
}

/// Runs the experiment, writes `cfg.output` and its manifest.
pub fn run(cfg: &ExperimentConfig) -> Result<RunSummary> {
    let started = Instant::now();
    let out = compute(cfg)?;
    let written = write_csv(&cfg.output, &out).map_err(|(e, k)| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e} ({k} rows written before the failure)", cfg.output.display()),
        ))
    })?;
    let manifest = manifest_path(&cfg.output);
    let mut m = String::new();
    m.push_str("# configuration\n");
    m.push_str(&cfg.echo());
    m.push_str("# run\n");
    m.push_str(&format!("code_version = {}\n", env!("CARGO_PKG_VERSION")));
    m.push_str(&format!("rows = {written}\n"));
    m.push_str(&format!("wall_time_seconds = {:.3}\n", started.elapsed().as_secs_f64()));
    if let Some(p) = out.pass {
        m.push_str(&format!("pass = {p}\n"));
    }
    m.push_str("# summary\n");
    for line in &out.summary {
        m.push_str(line);
        m.push('\n');
    }
    std::fs::write(&manifest, m)?;
    Ok(RunSummary {
        rows: written,
        output: cfg.output.clone(),
        manifest,
        pass: out.pass,
        summary: out.summary,
    })
}

fn write_csv(path: &Path, out: &ExperimentOutput) -> std::result::Result<usize, (std::io::Error, usize)> {
    let file = File::create(path).map_err(|e| (e, 0))?;
    let mut w = BufWriter::new(file);
    let mut written = 0;
    let mut header = String::from("experiment,n,replica,seed");
    for c in &out.columns {
        header.push(',');
        header.push_str(c);
    }
    writeln!(w, "{header}").map_err(|e| (e, 0))?;
    for row in &out.rows {
        let mut line = format!("{},{},{},{}", out.experiment.name(), row.n, row.replica, row.seed);
        for v in &row.values {
            line.push(',');
            line.push_str(&v.to_string());
        }
        writeln!(w, "{line}").map_err(|e| (e, written))?;
        written += 1;
    }
    w.flush().map_err(|e| (e, written))?;
    Ok(written)
}

fn cells(cfg: &ExperimentConfig) -> Vec<(usize, u64)> {
    cfg.sizes
        .iter()
        .flat_map(|&n| (0..cfg.replicas as u64).map(move |r| (n, r)))
        .collect()
}

fn build_family(cfg: &ExperimentConfig, n: usize) -> Result<(LatticeGraph, VertexId)> {
    cfg.graph.build(n, cfg.kappa)
}

fn graphs(cfg: &ExperimentConfig) -> Result<Vec<(usize, LatticeGraph, VertexId)>> {
    cfg.sizes
        .iter()
        .map(|&n| build_family(cfg, n).map(|(g, v)| (n, g, v)))
        .collect()
}

fn lookup<'a>(gs: &'a [(usize, LatticeGraph, VertexId)], n: usize) -> (&'a LatticeGraph, VertexId) {
    let (_, g, v) = gs.iter().find(|e| e.0 == n).expect("graph built for every size");
    (g, *v)
}

fn opts(cfg: &ExperimentConfig) -> WalkOptions {
    WalkOptions {
        budget: cfg.budget,
        record_path: false,
    }
}

fn cover_scaling(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let gs = graphs(cfg)?;
    let rows: Vec<ResultRow> = cells(cfg)
        .into_par_iter()
        .map(|(n, r)| {
            let (g, start) = lookup(&gs, n);
            let seed = split_seed(cfg.seed, r);
            let rec = run_until_cover(g, start, seed, opts(cfg))?;
            let tau = rec.tau_cov.unwrap_or(f64::NAN);
            Ok(ResultRow {
                n,
                replica: r,
                seed,
                values: vec![
                    tau,
                    rec.tau_cov_return.unwrap_or(f64::NAN),
                    rec.steps as f64,
                    (tau / (2.0 * (n * n) as f64)).sqrt(),
                    (rec.stop_reason == StopReason::StepBudget) as u8 as f64,
                ],
            })
        })
        .collect::<Result<_>>()?;
    let mut summary = Vec::new();
    let mut points = Vec::new();
    for &n in &cfg.sizes {
        let taus: Vec<f64> = rows
            .iter()
            .filter(|r| r.n == n && r.values[0].is_finite())
            .map(|r| r.values[0])
            .collect();
        let scaled: Vec<f64> = taus.iter().map(|t| (t / (2.0 * (n * n) as f64)).sqrt()).collect();
        if !scaled.is_empty() {
            summary.push(format!(
                "n = {n}: covered = {}, median sqrt(tau_cov/2n^2) = {}",
                taus.len(),
                median(&scaled)
            ));
        }
        points.push((n, taus));
    }
    if cfg.sizes.len() >= 3 && cfg.replicas >= MIN_SAMPLES_PER_SIZE {
        match fit_cover_scaling(&points) {
            Ok(fit) => summary.push(format!("slope = {}, intercept = {}", fit.slope, fit.intercept)),
            Err(e) => summary.push(format!("fit unavailable: {e}")),
        }
    }
    Ok(ExperimentOutput {
        experiment: cfg.experiment,
        columns: vec!["tau_cov", "tau_cov_return", "steps", "scaled", "budget_exhausted"],
        rows,
        summary,
        pass: None,
    })
}

fn tau_concentration(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let gs = graphs(cfg)?;
    let rows: Vec<ResultRow> = cells(cfg)
        .into_par_iter()
        .map(|(n, r)| {
            let (g, v0) = lookup(&gs, n);
            let seed = split_seed(cfg.seed, r);
            let t = cfg.level(n);
            let rec = run_until_inverse_local(g, v0, t, seed, opts(cfg))?;
            let e = g.edge_count() as f64;
            Ok(ResultRow {
                n,
                replica: r,
                seed,
                values: vec![t, rec.elapsed, rec.elapsed / (2.0 * t * e)],
            })
        })
        .collect::<Result<_>>()?;
    let mut summary = Vec::new();
    for &n in &cfg.sizes {
        let (g, _) = lookup(&gs, n);
        let t = cfg.level(n);
        let taus: Vec<f64> = rows.iter().filter(|r| r.n == n).map(|r| r.values[1]).collect();
        let e = g.edge_count() as f64;
        summary.push(format!(
            "n = {n}: t = {t}, mean_ratio = {}, sd_ratio = {}",
            mean(&taus) / (2.0 * t * e),
            variance(&taus).sqrt() / (e * t.sqrt())
        ));
    }
    Ok(ExperimentOutput {
        experiment: cfg.experiment,
        columns: vec!["t", "tau", "ratio"],
        rows,
        summary,
        pass: None,
    })
}

fn gff_max(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let samplers: Vec<(usize, GffSampler)> = cfg
        .sizes
        .iter()
        .map(|&n| {
            let g = LatticeGraph::build_box(n, Boundary::Wired)?;
            Ok((n, GffSampler::new(&g, &[g.special().expect("wired box")])?))
        })
        .collect::<Result<_>>()?;
    let rows: Vec<ResultRow> = cells(cfg)
        .into_par_iter()
        .map(|(n, r)| {
            let sampler = &samplers.iter().find(|s| s.0 == n).expect("sampler").1;
            let seed = split_seed(cfg.seed, r);
            ResultRow {
                n,
                replica: r,
                seed,
                values: vec![sampler.sample(seed).sup()],
            }
        })
        .collect();
    let mut summary = Vec::new();
    for &n in &cfg.sizes {
        let m: Vec<f64> = rows.iter().filter(|r| r.n == n).map(|r| r.values[0]).collect();
        let pred = bz_prediction(n).map_or("undefined".to_string(), |p| p.to_string());
        summary.push(format!(
            "n = {n}: mean = {}, median = {}, prediction = {pred}",
            mean(&m),
            median(&m)
        ));
    }
    Ok(ExperimentOutput {
        experiment: cfg.experiment,
        columns: vec!["max"],
        rows,
        summary,
        pass: None,
    })
}

/// One row per vertex; the `replica` column holds the vertex index and `n`
/// the number of vertices.
fn isomorphism(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let (g, v0) = cfg.preset.build()?;
    let t = cfg.t.unwrap_or(1.0);
    let report = verify_identity(&g, v0, t, cfg.replicas, cfg.seed, cfg.ks_max)?;
    let nv = g.num_vertices();
    let rows = report
        .per_vertex
        .iter()
        .map(|v| ResultRow {
            n: nv,
            replica: v.vertex.0 as u64,
            seed: cfg.seed,
            values: vec![
                t,
                v.ks_statistic,
                v.lhs_mean,
                v.rhs_mean,
                v.se_mean,
                v.lhs_var,
                v.rhs_var,
            ],
        })
        .collect();
    Ok(ExperimentOutput {
        experiment: cfg.experiment,
        columns: vec!["t", "ks", "lhs_mean", "rhs_mean", "se_mean", "lhs_var", "rhs_var"],
        rows,
        summary: vec![format!(
            "preset = {}, t = {t}, reps = {}, max_ks = {}, low_power = {}",
            cfg.preset.name(),
            report.reps,
            report.max_ks(),
            report.low_power
        )],
        pass: Some(report.pass),
    })
}

/// Expected maximum of the field on a wired box of side `l`: the printed
/// prediction when it is defined, a Monte Carlo mean otherwise.
fn expected_max(l: usize, reps: usize, seed: u64) -> Result<(f64, &'static str)> {
    match bz_prediction(l) {
        Ok(m) => Ok((m, "prediction")),
        Err(_) => Ok((max_statistics(l, reps, seed)?.mean, "monte-carlo")),
    }
}

fn thin_points(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let overrides = PackingOverrides {
        count: cfg.packing_count,
        region_size: cfg.region_size,
    };
    let mut setups = Vec::new();
    let mut summary = Vec::new();
    for &n in &cfg.sizes {
        let g = LatticeGraph::build_box(n, Boundary::Wired)?;
        let packing = build_packing_with(&g, PackingStyle::Boxes, cfg.kappa, overrides)?;
        let (m_l, source) = expected_max(packing.sub_side, cfg.max_reps, split_seed(cfg.seed, u64::MAX))?;
        let t = m_l * m_l / 2.0;
        summary.push(format!(
            "n = {n}: boxes = {}, L = {}, m_L = {m_l} ({source}), t = {t}, t_minus = {}",
            packing.count,
            packing.sub_side,
            (m_l - 1.0).powi(2) / 2.0
        ));
        let region: Vec<VertexId> = packing.regions.concat();
        setups.push((n, g, region, t));
    }
    let rows: Vec<ResultRow> = cells(cfg)
        .into_par_iter()
        .map(|(n, r)| {
            let (_, g, region, t) = setups.iter().find(|s| s.0 == n).expect("setup");
            let seed = split_seed(cfg.seed, r);
            let v0 = g.special().expect("wired box");
            let rec = run_until_inverse_local(g, v0, *t, seed, opts(cfg))?;
            let event = thin_point_event(&rec, region, cfg.threshold);
            let fewest = region.iter().map(|v| rec.visit_count[v.index()]).min().unwrap_or(0);
            Ok(ResultRow {
                n,
                replica: r,
                seed,
                values: vec![*t, event.occurred as u8 as f64, fewest as f64],
            })
        })
        .collect::<Result<_>>()?;
    for &n in &cfg.sizes {
        let hits: Vec<f64> = rows.iter().filter(|r| r.n == n).map(|r| r.values[1]).collect();
        summary.push(format!("n = {n}: P(thin point) = {}", mean(&hits)));
    }
    Ok(ExperimentOutput {
        experiment: cfg.experiment,
        columns: vec!["t", "thin_point", "min_visits"],
        rows,
        summary,
        pass: None,
    })
}

/// Exact total variation between the hitting distributions of `C_m` from two
/// points just outside `C_n`, on a reflecting disk of radius `ceil(4n/3)`.
pub fn far_source_tv(n: usize, m: usize) -> Result<f64> {
    let host_r = (4 * n).div_ceil(3) as f64;
    let g = LatticeGraph::region(disk_sites(Site::new(0, 0), host_r))?;
    let target: Vec<VertexId> = disk_sites(Site::new(0, 0), m as f64)
        .into_iter()
        .map(|s| g.vertex_at(s).expect("target inside host"))
        .collect();
    let r = n as i64 + 1;
    let x = g.vertex_at(Site::new(r, 0)).expect("source inside host");
    let y = g.vertex_at(Site::new(0, -r)).expect("source inside host");
    harmonic_tv_distance(&harmonic_measure(&g, x, &target)?, &harmonic_measure(&g, y, &target)?)
}

fn harmonic_tv(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let grid: Vec<(usize, usize)> = cfg
        .sizes
        .iter()
        .flat_map(|&n| cfg.radii.iter().map(move |&m| (n, m)))
        .collect();
    let rows: Vec<ResultRow> = grid
        .into_par_iter()
        .map(|(n, m)| {
            let tv = far_source_tv(n, m)?;
            let nf = n as f64;
            let scale = m as f64 * nf.ln().powi(2) / nf;
            Ok(ResultRow {
                n,
                replica: m as u64,
                seed: cfg.seed,
                values: vec![m as f64, tv, tv / scale],
            })
        })
        .collect::<Result<_>>()?;
    let c = rows.iter().map(|r| r.values[2]).fold(0.0, f64::max);
    Ok(ExperimentOutput {
        experiment: cfg.experiment,
        columns: vec!["m", "tv", "tv_over_bound"],
        rows,
        summary: vec![format!("fitted constant c = max tv / (m (ln n)^2 / n) = {c}")],
        pass: None,
    })
}

/// Offsets from the box center at which both Green routes are compared.
pub const CROSS_CHECK_OFFSETS: [(i64, i64); 5] = [(0, 0), (1, 0), (1, 1), (3, -5), (-6, 2)];

fn green_cross_check(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let mut rows = Vec::new();
    let mut worst: f64 = 0.0;
    for &n in &cfg.sizes {
        let g = LatticeGraph::build_box(n, Boundary::Wired)?;
        let sol = solve_green(&g, &[g.special().expect("wired box")])?;
        let c = g.center();
        let cv = g.vertex_at(c).expect("center");
        let row = sol.green_row(cv);
        let kernel = KernelGreen::new(n, c)?;
        for (i, &(dx, dy)) in CROSS_CHECK_OFFSETS.iter().enumerate() {
            let y = c + Site::new(dx, dy);
            let Some(yv) = g.vertex_at(y) else { continue };
            if Some(yv) == g.special() {
                continue;
            }
            let a = row[yv.index()];
            let b = kernel.green(y, default_kernel())?;
            worst = worst.max((a - b).abs());
            rows.push(ResultRow {
                n,
                replica: i as u64,
                seed: cfg.seed,
                values: vec![c.x as f64, c.y as f64, y.x as f64, y.y as f64, a, b, (a - b).abs()],
            });
        }
    }
    Ok(ExperimentOutput {
        experiment: cfg.experiment,
        columns: vec!["x1", "x2", "y1", "y2", "g_solve", "g_kernel", "abs_diff"],
        rows,
        summary: vec![format!("max abs_diff = {worst}")],
        pass: Some(worst < 1e-3),
    })
}
