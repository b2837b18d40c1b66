//! Finite lattice graphs with vertex identification, and the geometric
//! packings placed inside them.
//!
//! All graphs are unit-conductance multigraphs stored in CSR form. A neighbor
//! list repeats a vertex once per parallel edge, so `neighbors(v).len()` is the
//! degree and a uniform pick from the list is the simple random walk step.
//!
//! Identification merges a set of lattice sites into one special vertex `v0`.
//! Edges with both endpoints in the merged set would become self-loops and are
//! dropped; edges from the merged set to the rest become parallel edges at
//! `v0`. Vertex order is stable: surviving sites in row-major order (`y`
//! outer, `x` inner), then `v0` last.

use std::collections::{HashMap, HashSet};
use std::hash::{Hash, Hasher};
use std::io::Write;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(transparent)]
pub struct VertexId(pub u32);

impl VertexId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// A point of Z^2.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Site {
    pub x: i64,
    pub y: i64,
}

impl Site {
    pub const fn new(x: i64, y: i64) -> Self {
        Site { x, y }
    }

    pub fn norm(self) -> f64 {
        ((self.x * self.x + self.y * self.y) as f64).sqrt()
    }

    pub fn dist(self, other: Site) -> f64 {
        (self - other).norm()
    }

    pub fn neighbors(self) -> [Site; 4] {
        [
            Site::new(self.x + 1, self.y),
            Site::new(self.x - 1, self.y),
            Site::new(self.x, self.y + 1),
            Site::new(self.x, self.y - 1),
        ]
    }
}

impl std::ops::Sub for Site {
    type Output = Site;
    fn sub(self, rhs: Site) -> Site {
        Site::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl std::ops::Add for Site {
    type Output = Site;
    fn add(self, rhs: Site) -> Site {
        Site::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl std::fmt::Display for Site {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.x, self.y)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Boundary {
    Wired,
    Free,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GraphKind {
    WiredBox,
    FreeBox,
    Torus,
    DiskIdentifiedBox,
    /// Induced subgraph of Z^2 on an explicit site set.
    Region,
    /// Small hand-built graphs (single edge, wired path).
    Custom,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Label {
    Site(Site),
    Identified,
}

#[derive(Clone, Debug)]
pub struct LatticeGraph {
    kind: GraphKind,
    side: usize,
    labels: Vec<Label>,
    offsets: Vec<usize>,
    targets: Vec<VertexId>,
    edge_count: usize,
    special: Option<VertexId>,
    merged: Vec<Site>,
    lookup: HashMap<Site, VertexId>,
    center: Site,
    fingerprint: u64,
}

struct Assembly {
    kind: GraphKind,
    side: usize,
    center: Site,
    sites: Vec<Site>,
    edges: Vec<(Site, Site)>,
}

impl Assembly {
    fn finish(self, merge: impl Fn(Site) -> bool) -> LatticeGraph {
        let mut labels = Vec::with_capacity(self.sites.len() + 1);
        let mut lookup = HashMap::with_capacity(self.sites.len());
        let mut merged = Vec::new();
        for &s in &self.sites {
            if merge(s) {
                merged.push(s);
            } else {
                lookup.insert(s, VertexId(labels.len() as u32));
                labels.push(Label::Site(s));
            }
        }
        let special = if merged.is_empty() {
            None
        } else {
            let id = VertexId(labels.len() as u32);
            labels.push(Label::Identified);
            for &s in &merged {
                lookup.insert(s, id);
            }
            Some(id)
        };
        let pairs: Vec<(VertexId, VertexId)> = self
            .edges
            .iter()
            .map(|(a, b)| (lookup[a], lookup[b]))
            .filter(|(a, b)| a != b)
            .collect();
        LatticeGraph::from_pairs(
            self.kind, self.side, self.center, labels, pairs, special, merged, lookup,
        )
    }
}

impl LatticeGraph {
    #[allow(clippy::too_many_arguments)]
    fn from_pairs(
        kind: GraphKind,
        side: usize,
        center: Site,
        labels: Vec<Label>,
        pairs: Vec<(VertexId, VertexId)>,
        special: Option<VertexId>,
        merged: Vec<Site>,
        lookup: HashMap<Site, VertexId>,
    ) -> LatticeGraph {
        let n = labels.len();
        let mut degree = vec![0usize; n];
        for &(a, b) in &pairs {
            degree[a.index()] += 1;
            degree[b.index()] += 1;
        }
        let mut offsets = vec![0usize; n + 1];
        for v in 0..n {
            offsets[v + 1] = offsets[v] + degree[v];
        }
        let mut fill = offsets[..n].to_vec();
        let mut targets = vec![VertexId(0); offsets[n]];
        for &(a, b) in &pairs {
            targets[fill[a.index()]] = b;
            fill[a.index()] += 1;
            targets[fill[b.index()]] = a;
            fill[b.index()] += 1;
        }
        let mut hasher = std::collections::hash_map::DefaultHasher::new();
        kind.hash(&mut hasher);
        side.hash(&mut hasher);
        offsets.hash(&mut hasher);
        targets.hash(&mut hasher);
        merged.hash(&mut hasher);
        LatticeGraph {
            kind,
            side,
            labels,
            offsets,
            targets,
            edge_count: pairs.len(),
            special,
            merged,
            lookup,
            center,
            fingerprint: hasher.finish(),
        }
    }

    fn grid_sites(n: usize) -> Vec<Site> {
        let mut sites = Vec::with_capacity(n * n);
        for y in 0..n as i64 {
            for x in 0..n as i64 {
                sites.push(Site::new(x, y));
            }
        }
        sites
    }

    fn grid_edges(n: usize) -> Vec<(Site, Site)> {
        let n = n as i64;
        let mut edges = Vec::new();
        for y in 0..n {
            for x in 0..n {
                if x + 1 < n {
                    edges.push((Site::new(x, y), Site::new(x + 1, y)));
                }
                if y + 1 < n {
                    edges.push((Site::new(x, y), Site::new(x, y + 1)));
                }
            }
        }
        edges
    }

    fn box_center(n: usize) -> Site {
        Site::new((n / 2) as i64, (n / 2) as i64)
    }

    /// The n x n box `[0, n)^2`, either free or with its outer ring wired
    /// into a single vertex.
    pub fn build_box(n: usize, boundary: Boundary) -> Result<Self> {
        if n < 3 {
            return Err(Error::InvalidSize(format!(
                "box side {n} < 3 has no interior under wiring"
            )));
        }
        let asm = Assembly {
            kind: match boundary {
                Boundary::Wired => GraphKind::WiredBox,
                Boundary::Free => GraphKind::FreeBox,
            },
            side: n,
            center: Self::box_center(n),
            sites: Self::grid_sites(n),
            edges: Self::grid_edges(n),
        };
        let last = n as i64 - 1;
        Ok(match boundary {
            Boundary::Wired => {
                asm.finish(|s| s.x == 0 || s.y == 0 || s.x == last || s.y == last)
            }
            Boundary::Free => asm.finish(|_| false),
        })
    }

    /// Discrete torus Z_n^2. For n = 2 the wraparound produces parallel edges.
    pub fn build_torus(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidSize(format!("torus side {n} < 2")));
        }
        let m = n as i64;
        let mut edges = Vec::with_capacity(2 * n * n);
        for y in 0..m {
            for x in 0..m {
                edges.push((Site::new(x, y), Site::new((x + 1) % m, y)));
                edges.push((Site::new(x, y), Site::new(x, (y + 1) % m)));
            }
        }
        Ok(Assembly {
            kind: GraphKind::Torus,
            side: n,
            center: Self::box_center(n),
            sites: Self::grid_sites(n),
            edges,
        }
        .finish(|_| false))
    }

    /// Free n x n box with the Euclidean disk `|s - c| <= n / (ln n)^(2 kappa)`
    /// around the box center identified as `v0`.
    pub fn build_disk_identified_box(n: usize, kappa: f64) -> Result<Self> {
        if n < 3 {
            return Err(Error::InvalidSize(format!("box side {n} < 3")));
        }
        let radius = n as f64 / (n as f64).ln().powf(2.0 * kappa);
        if !(radius >= 1.0) {
            return Err(Error::InvalidParameters(format!(
                "identified disk radius {radius:.4} < 1 for n = {n}, kappa = {kappa}"
            )));
        }
        Self::box_with_identified_disk(n, radius)
    }

    /// Free n x n box with the disk of the given radius around the box center
    /// identified. A radius below 1 identifies the center alone, which is a
    /// pure relabeling.
    pub fn box_with_identified_disk(n: usize, radius: f64) -> Result<Self> {
        if n < 3 {
            return Err(Error::InvalidSize(format!("box side {n} < 3")));
        }
        let center = Self::box_center(n);
        let reach = radius.floor() as i64;
        if radius < 0.0
            || center.x - reach < 1
            || center.y - reach < 1
            || center.x + reach > n as i64 - 2
            || center.y + reach > n as i64 - 2
        {
            return Err(Error::InvalidParameters(format!(
                "disk of radius {radius:.3} does not fit strictly inside a box of side {n}"
            )));
        }
        Ok(Assembly {
            kind: GraphKind::DiskIdentifiedBox,
            side: n,
            center,
            sites: Self::grid_sites(n),
            edges: Self::grid_edges(n),
        }
        .finish(|s| s.dist(center) <= radius))
    }

    /// Induced subgraph of Z^2 on `sites` (duplicates ignored).
    pub fn region(sites: impl IntoIterator<Item = Site>) -> Result<Self> {
        let mut sites: Vec<Site> = sites.into_iter().collect();
        sites.sort_by_key(|s| (s.y, s.x));
        sites.dedup();
        if sites.is_empty() {
            return Err(Error::InvalidSize("empty region".into()));
        }
        let set: HashSet<Site> = sites.iter().copied().collect();
        let mut edges = Vec::new();
        for &s in &sites {
            for t in [Site::new(s.x + 1, s.y), Site::new(s.x, s.y + 1)] {
                if set.contains(&t) {
                    edges.push((s, t));
                }
            }
        }
        Ok(Assembly {
            kind: GraphKind::Region,
            side: 0,
            center: Site::new(0, 0),
            sites,
            edges,
        }
        .finish(|_| false))
    }

    /// `C_r` together with its outer vertex boundary, centered at the origin.
    pub fn ball_with_boundary(r: f64) -> Result<Self> {
        let disk = disk_sites(Site::new(0, 0), r);
        let ring = outer_boundary(&disk);
        Self::region(disk.into_iter().chain(ring))
    }

    /// Two vertices joined by one edge; vertex 1 is the marked `v0`.
    pub fn single_edge() -> Self {
        let labels = vec![Label::Site(Site::new(0, 0)), Label::Identified];
        let mut lookup = HashMap::new();
        lookup.insert(Site::new(0, 0), VertexId(0));
        Self::from_pairs(
            GraphKind::Custom,
            1,
            Site::new(0, 0),
            labels,
            vec![(VertexId(0), VertexId(1))],
            Some(VertexId(1)),
            Vec::new(),
            lookup,
        )
    }

    /// The one-dimensional box with `k` interior sites and both ends wired:
    /// the cycle `v0 - 1 - 2 - ... - k - v0`.
    pub fn wired_path(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidSize("wired path needs an interior site".into()));
        }
        let sites: Vec<Site> = (0..=k as i64 + 1).map(|x| Site::new(x, 0)).collect();
        let edges = sites.windows(2).map(|w| (w[0], w[1])).collect();
        let last = k as i64 + 1;
        Ok(Assembly {
            kind: GraphKind::Custom,
            side: k + 2,
            center: Site::new(0, 0),
            sites,
            edges,
        }
        .finish(|s| s.x == 0 || s.x == last))
    }

    pub fn kind(&self) -> GraphKind {
        self.kind
    }

    /// Side length for boxes and tori; 0 for regions.
    pub fn side(&self) -> usize {
        self.side
    }

    pub fn num_vertices(&self) -> usize {
        self.labels.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn vertices(&self) -> impl Iterator<Item = VertexId> + '_ {
        (0..self.labels.len() as u32).map(VertexId)
    }

    pub fn contains(&self, v: VertexId) -> bool {
        v.index() < self.labels.len()
    }

    #[inline]
    pub fn degree(&self, v: VertexId) -> usize {
        self.offsets[v.index() + 1] - self.offsets[v.index()]
    }

    /// Neighbor multiset of `v`; parallel edges repeat the neighbor.
    pub fn neighbors(&self, v: VertexId) -> Result<&[VertexId]> {
        if !self.contains(v) {
            return Err(Error::NotFound(format!("vertex {}", v.0)));
        }
        Ok(self.adjacent(v))
    }

    #[inline]
    pub(crate) fn adjacent(&self, v: VertexId) -> &[VertexId] {
        &self.targets[self.offsets[v.index()]..self.offsets[v.index() + 1]]
    }

    pub(crate) fn csr(&self) -> (&[usize], &[VertexId]) {
        (&self.offsets, &self.targets)
    }

    /// The identified vertex `v0`, if the graph has one.
    pub fn special(&self) -> Option<VertexId> {
        self.special
    }

    /// Lattice sites merged into `v0`.
    pub fn merged_sites(&self) -> &[Site] {
        &self.merged
    }

    pub fn label(&self, v: VertexId) -> Label {
        self.labels[v.index()]
    }

    /// The lattice site of a non-identified vertex.
    pub fn site(&self, v: VertexId) -> Option<Site> {
        match self.labels.get(v.index()) {
            Some(Label::Site(s)) => Some(*s),
            _ => None,
        }
    }

    /// Vertex carrying `s`; merged sites map to `v0`.
    pub fn vertex_at(&self, s: Site) -> Option<VertexId> {
        self.lookup.get(&s).copied()
    }

    /// Center of the box (the identified disk is centered here).
    pub fn center(&self) -> Site {
        self.center
    }

    /// Stable content hash, used as a cache key.
    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    pub fn is_connected(&self) -> bool {
        let n = self.num_vertices();
        if n == 0 {
            return true;
        }
        let mut seen = vec![false; n];
        let mut stack = vec![VertexId(0)];
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = stack.pop() {
            for &u in self.adjacent(v) {
                if !seen[u.index()] {
                    seen[u.index()] = true;
                    count += 1;
                    stack.push(u);
                }
            }
        }
        count == n
    }

    /// Writes one line `u v` per edge (parallel edges repeated).
    pub fn write_adjacency<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for v in self.vertices() {
            for &u in self.adjacent(v) {
                if v <= u {
                    writeln!(out, "{} {}", v.0, u.0)?;
                }
            }
        }
        Ok(())
    }
}

/// `C_r` around `center`: sites with Euclidean distance at most `r`.
pub fn disk_sites(center: Site, r: f64) -> Vec<Site> {
    let reach = r.max(0.0).floor() as i64;
    let mut out = Vec::new();
    for dy in -reach..=reach {
        for dx in -reach..=reach {
            let s = Site::new(dx, dy);
            if s.norm() <= r {
                out.push(center + s);
            }
        }
    }
    out
}

/// Sites outside `set` with a lattice neighbor inside it, sorted row-major.
pub fn outer_boundary(set: &[Site]) -> Vec<Site> {
    let inside: HashSet<Site> = set.iter().copied().collect();
    let mut ring: Vec<Site> = set
        .iter()
        .flat_map(|s| s.neighbors())
        .filter(|t| !inside.contains(t))
        .collect::<HashSet<_>>()
        .into_iter()
        .collect();
    ring.sort_by_key(|s| (s.y, s.x));
    ring
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PackingStyle {
    Boxes,
    Balls,
}

/// Desk-scale knobs. The count and region size formulas only produce usable
/// packings for astronomically large n, so either can be pinned explicitly
/// while the anchor geometry keeps following the formulas.
#[derive(Clone, Copy, Debug, Default)]
pub struct PackingOverrides {
    pub count: Option<usize>,
    /// Box side L, or ball radius.
    pub region_size: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct Packing {
    pub style: PackingStyle,
    pub kappa: f64,
    /// Box side L, or ball radius (truncated).
    pub sub_side: usize,
    pub count: usize,
    /// Lower-left corners for boxes, centers for balls.
    pub anchors: Vec<Site>,
    pub regions: Vec<Vec<VertexId>>,
}

pub fn build_packing(g: &LatticeGraph, style: PackingStyle, kappa: f64) -> Result<Packing> {
    build_packing_with(g, style, kappa, PackingOverrides::default())
}

pub fn build_packing_with(
    g: &LatticeGraph,
    style: PackingStyle,
    kappa: f64,
    overrides: PackingOverrides,
) -> Result<Packing> {
    let n = g.side();
    if n < 3 {
        return Err(Error::InvalidParameters("host graph is not a box".into()));
    }
    let log_n = (n as f64).ln();
    let packing = match style {
        PackingStyle::Boxes => {
            if g.kind() != GraphKind::WiredBox {
                return Err(Error::InvalidParameters(
                    "box packing needs a wired box host".into(),
                ));
            }
            let side_exact = n as f64 / log_n.powf(2.0 * kappa);
            let side = overrides.region_size.unwrap_or(side_exact.floor() as usize);
            let formula_count = (log_n.powf(kappa / 3.0) / 12.0).floor() as i64 - 1;
            let count = overrides.count.map(|c| c as i64).unwrap_or(formula_count);
            if count < 1 || side < 2 {
                return Err(Error::InvalidParameters(format!(
                    "box packing degenerates: m = {count}, L = {side} (n = {n}, kappa = {kappa})"
                )));
            }
            let spacing = 3.0 * n as f64 / log_n.powf(kappa);
            let height = side_exact.floor() as i64;
            let mut anchors = Vec::new();
            let mut regions = Vec::new();
            for i in 1..=count {
                let corner = Site::new((i as f64 * spacing).floor() as i64, height);
                let mut region = Vec::with_capacity(side * side);
                for dy in 0..side as i64 {
                    for dx in 0..side as i64 {
                        let s = corner + Site::new(dx, dy);
                        region.push(interior_vertex(g, s, i)?);
                    }
                }
                anchors.push(corner);
                regions.push(region);
            }
            Packing {
                style,
                kappa,
                sub_side: side,
                count: count as usize,
                anchors,
                regions,
            }
        }
        PackingStyle::Balls => {
            if g.kind() != GraphKind::DiskIdentifiedBox {
                return Err(Error::InvalidParameters(
                    "ball packing needs a disk-identified host".into(),
                ));
            }
            let n_k = |k: f64| n as f64 / log_n.powf(k);
            let circle = n_k(kappa / 2.0);
            let spacing = n_k(kappa);
            let radius = overrides
                .region_size
                .map(|r| r as f64)
                .unwrap_or_else(|| n_k(5.0 * kappa));
            let formula_count = (log_n.powf(kappa / 2.0) / 2.0).floor() as i64;
            let count = overrides.count.map(|c| c as i64).unwrap_or(formula_count);
            if count < 1 || radius < 1.0 {
                return Err(Error::InvalidParameters(format!(
                    "ball packing degenerates: m = {count}, radius = {radius:.4} (n = {n}, kappa = {kappa})"
                )));
            }
            let c = g.center();
            let anchors: Vec<Site> = (0..count)
                .map(|i| {
                    let theta = std::f64::consts::TAU * i as f64 / count as f64;
                    Site::new(
                        c.x + (circle * theta.cos()).round() as i64,
                        c.y + (circle * theta.sin()).round() as i64,
                    )
                })
                .collect();
            for i in 0..anchors.len() {
                for j in i + 1..anchors.len() {
                    let d = anchors[i].dist(anchors[j]);
                    if d < spacing {
                        return Err(Error::InvalidParameters(format!(
                            "ball centers {i} and {j} are {d:.2} apart, need {spacing:.2} (m = {count})"
                        )));
                    }
                }
            }
            let mut regions = Vec::new();
            for (i, &o) in anchors.iter().enumerate() {
                let region = disk_sites(o, radius)
                    .into_iter()
                    .map(|s| interior_vertex(g, s, i as i64))
                    .collect::<Result<Vec<_>>>()?;
                regions.push(region);
            }
            Packing {
                style,
                kappa,
                sub_side: radius.floor() as usize,
                count: count as usize,
                anchors,
                regions,
            }
        }
    };
    let mut seen = HashSet::new();
    for region in &packing.regions {
        for v in region {
            if !seen.insert(*v) {
                return Err(Error::InvalidParameters(format!(
                    "packing regions overlap at vertex {}",
                    v.0
                )));
            }
        }
    }
    Ok(packing)
}

/// Vertex at `s` if it is a proper site strictly inside the host box.
fn interior_vertex(g: &LatticeGraph, s: Site, region: i64) -> Result<VertexId> {
    let last = g.side() as i64 - 1;
    let inside = s.x > 0 && s.y > 0 && s.x < last && s.y < last;
    match g.vertex_at(s) {
        Some(v) if inside && Some(v) != g.special() => Ok(v),
        _ => Err(Error::InvalidParameters(format!(
            "region {region} leaves the host interior at {s}"
        ))),
    }
}
