//! Line-oriented experiment configuration.
//!
//! ```text
//! # comment
//! experiment = cover-scaling
//! n = 32, 64, 128
//! replicas = 100
//! ```

use std::collections::HashMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::isomorphism::GraphPreset;
use crate::lattice::{Boundary, LatticeGraph, VertexId};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExperimentKind {
    CoverScaling,
    TauConcentration,
    GffMax,
    Isomorphism,
    ThinPoints,
    HarmonicTv,
    GreenCrossCheck,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 7] = [
        ExperimentKind::CoverScaling,
        ExperimentKind::TauConcentration,
        ExperimentKind::GffMax,
        ExperimentKind::Isomorphism,
        ExperimentKind::ThinPoints,
        ExperimentKind::HarmonicTv,
        ExperimentKind::GreenCrossCheck,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::CoverScaling => "cover-scaling",
            ExperimentKind::TauConcentration => "tau-concentration",
            ExperimentKind::GffMax => "gff-max",
            ExperimentKind::Isomorphism => "isomorphism",
            ExperimentKind::ThinPoints => "thin-points",
            ExperimentKind::HarmonicTv => "harmonic-tv",
            ExperimentKind::GreenCrossCheck => "green-cross-check",
        }
    }

    fn needs_sizes(self) -> bool {
        self != ExperimentKind::Isomorphism
    }
}

impl FromStr for ExperimentKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        ExperimentKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown experiment '{s}'"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GraphFamily {
    Wired,
    Free,
    Torus,
    DiskIdentified,
}

impl GraphFamily {
    pub fn name(self) -> &'static str {
        match self {
            GraphFamily::Wired => "wired",
            GraphFamily::Free => "free",
            GraphFamily::Torus => "torus",
            GraphFamily::DiskIdentified => "disk-identified",
        }
    }

    /// Graph of side `n` and its start vertex: `v0` when there is one, else
    /// the center.
    pub fn build(self, n: usize, kappa: f64) -> Result<(LatticeGraph, VertexId)> {
        let g = match self {
            GraphFamily::Wired => LatticeGraph::build_box(n, Boundary::Wired)?,
            GraphFamily::Free => LatticeGraph::build_box(n, Boundary::Free)?,
            GraphFamily::Torus => LatticeGraph::build_torus(n)?,
            GraphFamily::DiskIdentified => LatticeGraph::build_disk_identified_box(n, kappa)?,
        };
        let start = match g.special() {
            Some(v) => v,
            None => g.vertex_at(g.center()).unwrap_or(VertexId(0)),
        };
        Ok((g, start))
    }
}

impl FromStr for GraphFamily {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        [
            GraphFamily::Wired,
            GraphFamily::Free,
            GraphFamily::Torus,
            GraphFamily::DiskIdentified,
        ]
        .into_iter()
        .find(|g| g.name() == s)
        .ok_or_else(|| format!("unknown graph family '{s}'"))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub sizes: Vec<usize>,
    pub graph: GraphFamily,
    pub kappa: f64,
    /// Fixed local-time level.
    pub t: Option<f64>,
    /// Schedule offset: `t = (ln n + lambda)^2 / pi`.
    pub lambda: Option<f64>,
    pub replicas: usize,
    pub seed: u64,
    pub output: PathBuf,
    /// Worker threads; 0 lets the pool decide.
    pub workers: usize,
    pub preset: GraphPreset,
    pub ks_max: f64,
    pub threshold: i64,
    pub packing_count: Option<usize>,
    pub region_size: Option<usize>,
    /// Inner radii for harmonic-tv.
    pub radii: Vec<usize>,
    pub budget: u64,
    /// Replicas used to estimate the expected maximum of small boxes.
    pub max_reps: usize,
}

pub const DEFAULT_REPLICAS: usize = 100;
pub const DEFAULT_SEED: u64 = 0;
pub const DEFAULT_KAPPA: f64 = 2.0;

const KEYS: [&str; 18] = [
    "experiment",
    "n",
    "graph",
    "kappa",
    "t",
    "lambda",
    "replicas",
    "seed",
    "output",
    "workers",
    "preset",
    "ks_max",
    "threshold",
    "count",
    "region_size",
    "m",
    "budget",
    "max_reps",
];

/// `(ln n + lambda)^2 / pi`.
pub fn t_lambda(n: usize, lambda: f64) -> f64 {
    ((n as f64).ln() + lambda).powi(2) / std::f64::consts::PI
}

struct Entries {
    map: HashMap<&'static str, (usize, String)>,
    last_line: usize,
}

impl Entries {
    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: fmt::Display,
    {
        match self.map.get(key) {
            None => Ok(None),
            Some((line, raw)) => raw
                .parse::<T>()
                .map(Some)
                .map_err(|e| Error::config(*line, format!("bad value for '{key}': {e}"))),
        }
    }

    fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: fmt::Display,
    {
        match self.map.get(key) {
            None => Ok(None),
            Some((line, raw)) => raw
                .split(',')
                .map(|item| {
                    item.trim().parse::<T>().map_err(|e| {
                        Error::config(*line, format!("bad list item '{}' for '{key}': {e}", item.trim()))
                    })
                })
                .collect::<Result<Vec<T>>>()
                .map(Some),
        }
    }

    fn line(&self, key: &str) -> usize {
        self.map.get(key).map_or(self.last_line, |e| e.0)
    }
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let mut map = HashMap::new();
    let mut last_line = 0;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        last_line = line;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let (key, value) = body
            .split_once('=')
            .ok_or_else(|| Error::config(line, format!("expected 'key = value', got '{body}'")))?;
        let key = key.trim();
        let value = value.trim();
        let value = value
            .strip_prefix('"')
            .and_then(|v| v.strip_suffix('"'))
            .unwrap_or(value)
            .trim();
        let known = KEYS
            .iter()
            .find(|k| **k == key)
            .ok_or_else(|| Error::config(line, format!("unknown key '{key}'")))?;
        if value.is_empty() {
            return Err(Error::config(line, format!("empty value for '{key}'")));
        }
        if let Some((first, _)) = map.insert(*known, (line, value.to_string())) {
            return Err(Error::config(
                line,
                format!("duplicate key '{key}' (first set on line {first})"),
            ));
        }
    }
    let e = Entries { map, last_line };

    let experiment: ExperimentKind = e
        .get("experiment")?
        .ok_or_else(|| Error::config(e.last_line, "missing required key 'experiment'"))?;
    let mut sizes: Vec<usize> = e.list("n")?.unwrap_or_default();
    if experiment.needs_sizes() && sizes.is_empty() {
        return Err(Error::config(e.last_line, "missing required key 'n'"));
    }
    sizes.sort_unstable();
    sizes.dedup();
    let t: Option<f64> = e.get("t")?;
    let lambda: Option<f64> = e.get("lambda")?;
    if t.is_some() && lambda.is_some() {
        return Err(Error::config(e.line("lambda"), "set either 't' or 'lambda', not both"));
    }
    if let Some(t) = t {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::config(e.line("t"), format!("t = {t} must be positive")));
        }
    }
    if let Some(l) = lambda {
        if let Some(&n) = sizes.iter().find(|&&n| (n as f64).ln() + l <= 0.0) {
            return Err(Error::config(
                e.line("lambda"),
                format!("lambda = {l} gives ln n + lambda <= 0 at n = {n}, so t_lambda is not a valid level"),
            ));
        }
    }
    let replicas = e.get("replicas")?.unwrap_or(DEFAULT_REPLICAS);
    if replicas == 0 {
        return Err(Error::config(e.line("replicas"), "replicas must be positive"));
    }
    let kappa = e.get("kappa")?.unwrap_or(DEFAULT_KAPPA);
    if !(kappa > 0.0) {
        return Err(Error::config(e.line("kappa"), "kappa must be positive"));
    }
    let ks_max: f64 = e.get("ks_max")?.unwrap_or(crate::isomorphism::DEFAULT_KS_MAX);
    if !(ks_max > 0.0 && ks_max <= 1.0) {
        return Err(Error::config(e.line("ks_max"), "ks_max must lie in (0, 1]"));
    }
    let radii = e.list("m")?.unwrap_or_else(|| vec![2, 3, 4, 5, 6]);
    if experiment == ExperimentKind::HarmonicTv {
        if let Some(&n) = sizes.iter().find(|&&n| radii.iter().any(|&m| m == 0 || m >= n)) {
            return Err(Error::config(e.line("m"), format!("every m must satisfy 0 < m < n (n = {n})")));
        }
    }
    let budget = e.get("budget")?.unwrap_or(crate::walker::DEFAULT_BUDGET);
    if budget == 0 {
        return Err(Error::config(e.line("budget"), "budget must be positive"));
    }
    let preset = match e.map.get("preset") {
        None => GraphPreset::SingleEdge,
        Some((line, raw)) => raw
            .parse()
            .map_err(|_| Error::config(*line, format!("unknown graph preset '{raw}'")))?,
    };
    Ok(ExperimentConfig {
        experiment,
        sizes,
        graph: e.get("graph")?.unwrap_or(GraphFamily::Wired),
        kappa,
        t,
        lambda,
        replicas,
        seed: e.get("seed")?.unwrap_or(DEFAULT_SEED),
        output: e
            .get::<String>("output")?
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from(format!("{}.csv", experiment.name()))),
        workers: e.get("workers")?.unwrap_or(0),
        preset,
        ks_max,
        threshold: e.get("threshold")?.unwrap_or(120),
        packing_count: e.get("count")?,
        region_size: e.get("region_size")?,
        radii,
        budget,
        max_reps: e.get("max_reps")?.unwrap_or(2000),
    })
}

impl ExperimentConfig {
    /// Local-time level for side `n`: `t` if fixed, else the lambda schedule,
    /// else `(ln n)^2`.
    pub fn level(&self, n: usize) -> f64 {
        match (self.t, self.lambda) {
            (Some(t), _) => t,
            (None, Some(l)) => t_lambda(n, l),
            (None, None) => (n as f64).ln().powi(2),
        }
    }

    /// The resolved configuration as `key = value` lines.
    pub fn echo(&self) -> String {
        let list = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ");
        let opt = |v: Option<String>| v.unwrap_or_else(|| "unset".into());
        let mut out = String::new();
        let mut put = |k: &str, v: String| out.push_str(&format!("{k} = {v}\n"));
        put("experiment", self.experiment.name().into());
        put("n", list(&self.sizes));
        put("graph", self.graph.name().into());
        put("kappa", self.kappa.to_string());
        put("t", opt(self.t.map(|x| x.to_string())));
        put("lambda", opt(self.lambda.map(|x| x.to_string())));
        put("replicas", self.replicas.to_string());
        put("seed", self.seed.to_string());
        put("output", self.output.display().to_string());
        put("workers", self.workers.to_string());
        put("preset", self.preset.name().into());
        put("ks_max", self.ks_max.to_string());
        put("threshold", self.threshold.to_string());
        put("count", opt(self.packing_count.map(|x| x.to_string())));
        put("region_size", opt(self.region_size.map(|x| x.to_string())));
        put("m", list(&self.radii));
        put("budget", self.budget.to_string());
        put("max_reps", self.max_reps.to_string());
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_of(err: Error) -> usize {
        match err {
            Error::Config { line, .. } => line,
            other => panic!("expected config error, got {other}"),
        }
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse_config("experiment = cover-scaling\nn = 32\n").unwrap();
        assert_eq!(c.replicas, 100);
        assert_eq!(c.seed, 0);
        assert_eq!(c.kappa, 2.0);
        assert_eq!(c.graph, GraphFamily::Wired);
        assert_eq!(c.output, PathBuf::from("cover-scaling.csv"));
    }

    #[test]
    fn lists_and_comments() {
        let c = parse_config("# sizes\nexperiment = gff-max # inline\nn = \"32,64,128\"\n").unwrap();
        assert_eq!(c.sizes, vec![32, 64, 128]);
        let c = parse_config("experiment = gff-max\nn = 128, 32,64\n").unwrap();
        assert_eq!(c.sizes, vec![32, 64, 128]);
    }

    #[test]
    fn errors_name_the_line() {
        let dup = parse_config("experiment = gff-max\nn = 4\nn = 5\n").unwrap_err();
        assert_eq!(line_of(dup), 3);
        let unknown = parse_config("experiment = gff-max\nsize = 4\n").unwrap_err();
        assert_eq!(line_of(unknown), 2);
        let bad = parse_config("experiment = gff-max\nn = 4\nreplicas = many\n").unwrap_err();
        assert_eq!(line_of(bad), 3);
        assert!(parse_config("n = 4\n").is_err());
        assert!(parse_config("experiment = gff-max\n").is_err());
        assert!(parse_config("experiment = nope\nn = 4\n").is_err());
        assert!(parse_config("experiment = gff-max\nn 4\n").is_err());
    }

    #[test]
    fn lambda_schedule_must_stay_positive() {
        let err = parse_config("experiment = tau-concentration\nn = 32\nlambda = -4\n").unwrap_err();
        assert_eq!(line_of(err), 3);
        let c = parse_config("experiment = tau-concentration\nn = 32\nlambda = -1\n").unwrap();
        let expect = (32f64.ln() - 1.0).powi(2) / std::f64::consts::PI;
        assert!((c.level(32) - expect).abs() < 1e-15);
        assert!(parse_config("experiment = tau-concentration\nn = 32\nt = 0\n").is_err());
        assert!(parse_config("experiment = tau-concentration\nn = 32\nt = 1\nlambda = 1\n").is_err());
    }

    #[test]
    fn echo_round_trips() {
        let c = parse_config("experiment = harmonic-tv\nn = 30, 50\nm = 2,3\nseed = 9\n").unwrap();
        let text: String = c
            .echo()
            .lines()
            .filter(|l| !l.ends_with("unset"))
            .map(|l| format!("{l}\n"))
            .collect();
        assert_eq!(parse_config(&text).unwrap(), c);
    }
}
