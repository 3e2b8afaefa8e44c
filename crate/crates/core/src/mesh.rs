//! Partitions of the period interval and the two-sided collocation grid.
//!
//! The forward side covers `[0, ω]` and carries the mesh of the periodic
//! solution; the history side covers `[-τ, 0]` and is obtained by shifting
//! that mesh back by multiples of `ω`, truncating the leftmost piece at `-τ`.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::interp::{bary_table, BaryTable};
use crate::quadrature::chebyshev_extrema;

/// Relative tolerance under which `-τ` is identified with a shifted breakpoint.
pub const COINCIDENCE_TOL: f64 = 1e-12;
/// Pieces shorter than this fraction of `ω` are merged into their neighbour.
pub const SLIVER_TOL: f64 = 1e-10;

/// Ordered breakpoints `t_0 < t_1 < ... < t_L` of an interval partition.
#[derive(Clone, Debug, PartialEq)]
pub struct Mesh {
    breakpoints: Vec<f64>,
}

impl Mesh {
    pub fn new(breakpoints: Vec<f64>) -> Result<Self> {
        if breakpoints.len() < 2 {
            return Err(Error::InvalidMesh(format!(
                "need at least two breakpoints, got {}",
                breakpoints.len()
            )));
        }
        if breakpoints.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidMesh("breakpoints must be finite".into()));
        }
        if let Some(w) = breakpoints.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::InvalidMesh(format!(
                "breakpoints not strictly increasing at {} -> {}",
                w[0], w[1]
            )));
        }
        Ok(Self { breakpoints })
    }

    /// `pieces` equal pieces on `[a, b]`, endpoints exact.
    pub fn uniform(a: f64, b: f64, pieces: usize) -> Result<Self> {
        if pieces == 0 {
            return Err(Error::InvalidMesh("a mesh needs at least one piece".into()));
        }
        let n = pieces as f64;
        let mut bp: Vec<f64> = (0..=pieces)
            .map(|i| (a * (n - i as f64) + b * i as f64) / n)
            .collect();
        bp[0] = a;
        bp[pieces] = b;
        Self::new(bp)
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    /// Number of pieces `L`.
    pub fn pieces(&self) -> usize {
        self.breakpoints.len() - 1
    }

    pub fn start(&self) -> f64 {
        self.breakpoints[0]
    }

    pub fn end(&self) -> f64 {
        *self.breakpoints.last().unwrap()
    }

    pub fn length(&self) -> f64 {
        self.end() - self.start()
    }

    pub fn width(&self, i: usize) -> f64 {
        self.breakpoints[i + 1] - self.breakpoints[i]
    }

    pub fn widths(&self) -> impl Iterator<Item = f64> + '_ {
        self.breakpoints.windows(2).map(|w| w[1] - w[0])
    }

    /// Ratio between the longest and the shortest piece; 1 iff uniform.
    pub fn ratio(&self) -> f64 {
        let (lo, hi) = self
            .widths()
            .fold((f64::INFINITY, 0.0_f64), |(lo, hi), h| (lo.min(h), hi.max(h)));
        hi / lo
    }

    pub fn max_width(&self) -> f64 {
        self.widths().fold(0.0, f64::max)
    }

    /// Subdivide every piece longer than `hmax` into `⌈h/hmax⌉` equal pieces.
    pub fn refine(&self, hmax: f64) -> Result<Mesh> {
        if !(hmax > 0.0) || !hmax.is_finite() {
            return Err(Error::InvalidParameter(format!("hmax must be positive, got {hmax}")));
        }
        let mut out = Vec::with_capacity(self.breakpoints.len());
        out.push(self.breakpoints[0]);
        for w in self.breakpoints.windows(2) {
            let (a, b) = (w[0], w[1]);
            // slack keeps refinement idempotent under rounding of the new widths
            let n = (((b - a) / hmax) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
            let nf = n as f64;
            for k in 1..n {
                let k = k as f64;
                out.push((a * (nf - k) + b * k) / nf);
            }
            out.push(b);
        }
        Mesh::new(out)
    }

    /// Affine image onto `[a, b]`, endpoints exact.
    pub fn mapped(&self, a: f64, b: f64) -> Result<Mesh> {
        let (s, e) = (self.start(), self.end());
        let scale = (b - a) / (e - s);
        let last = self.breakpoints.len() - 1;
        let bp = self
            .breakpoints
            .iter()
            .enumerate()
            .map(|(i, t)| match i {
                0 => a,
                i if i == last => b,
                _ => a + (t - s) * scale,
            })
            .collect();
        Mesh::new(bp)
    }

    /// Points of `extra` (inside the mesh interval) that are not within
    /// `tol` of an existing breakpoint.
    pub fn missing(&self, extra: &[f64], tol: f64) -> Vec<f64> {
        let mut out: Vec<f64> = extra
            .iter()
            .copied()
            .filter(|&p| p > self.start() + tol && p < self.end() - tol)
            .filter(|&p| self.breakpoints.iter().all(|b| (b - p).abs() > tol))
            .collect();
        out.sort_by(f64::total_cmp);
        out.dedup_by(|a, b| (*a - *b).abs() <= tol);
        out
    }

    /// Mesh with the given points added as breakpoints.
    pub fn with_breakpoints(&self, extra: &[f64], tol: f64) -> Result<Mesh> {
        let mut bp = self.breakpoints.clone();
        bp.extend(self.missing(extra, tol));
        bp.sort_by(f64::total_cmp);
        Mesh::new(bp)
    }

    /// Parse the plain-text mesh format: one breakpoint per line, `#` comments.
    pub fn parse(text: &str) -> Result<Mesh> {
        let mut bp = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let content = line.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let t: f64 = content.parse().map_err(|_| Error::Parse {
                line: n + 1,
                message: format!("not a number: `{content}`"),
            })?;
            bp.push(t);
        }
        Mesh::new(bp)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for t in &self.breakpoints {
            let _ = writeln!(s, "{t:?}");
        }
        s
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Mesh> {
        Mesh::parse(&std::fs::read_to_string(path)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = format!("# {} pieces, ratio {:.6}\n{}", self.pieces(), self.ratio(), self.to_text());
        std::fs::write(path, text)?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum NodeKind {
    ChebyshevExtrema,
    Uniform,
}

impl std::str::FromStr for NodeKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "chebyshev" | "chebyshev-extrema" => Ok(NodeKind::ChebyshevExtrema),
            "uniform" | "equidistant" => Ok(NodeKind::Uniform),
            _ => Err(Error::InvalidParameter(format!("unknown node family `{s}`"))),
        }
    }
}

impl std::fmt::Display for NodeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            NodeKind::ChebyshevExtrema => "chebyshev-extrema",
            NodeKind::Uniform => "uniform",
        })
    }
}

/// Reference nodes `0 = c_0 < ... < c_M = 1` used on every piece.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeFamily {
    pub kind: NodeKind,
    pub degree: usize,
    pub nodes: Vec<f64>,
}

impl NodeFamily {
    pub fn new(kind: NodeKind, degree: usize) -> Result<Self> {
        reference_nodes(kind, degree)
    }

    pub fn chebyshev(degree: usize) -> Result<Self> {
        reference_nodes(NodeKind::ChebyshevExtrema, degree)
    }
}

pub fn reference_nodes(kind: NodeKind, degree: usize) -> Result<NodeFamily> {
    if degree == 0 {
        return Err(Error::InvalidParameter(
            "node family degree must be at least 1".into(),
        ));
    }
    let nodes = match kind {
        NodeKind::ChebyshevExtrema => chebyshev_extrema(degree),
        NodeKind::Uniform => {
            let m = degree as f64;
            (0..=degree).map(|j| j as f64 / m).collect()
        }
    };
    Ok(NodeFamily { kind, degree, nodes })
}

/// One piece of a grid side; its nodes are `nodes[first..=first + M]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Piece {
    pub start: f64,
    pub end: f64,
    pub first: usize,
    /// Nodes laid out afresh on the piece instead of shifted from `[0, ω]`.
    pub fresh: bool,
}

impl Piece {
    pub fn width(&self) -> f64 {
        self.end - self.start
    }
}

/// Nodes of one side of the grid, stored once per distinct point.
#[derive(Clone, Debug)]
pub struct GridSide {
    pieces: Vec<Piece>,
    nodes: Vec<f64>,
    table: Arc<BaryTable>,
}

impl GridSide {
    fn from_pieces(raw: Vec<(f64, f64, Vec<f64>, bool)>, table: Arc<BaryTable>) -> Result<Self> {
        let m = table.degree();
        let mut nodes: Vec<f64> = Vec::with_capacity(raw.len() * m + 1);
        let mut pieces = Vec::with_capacity(raw.len());
        for (p, (start, end, local, fresh)) in raw.into_iter().enumerate() {
            debug_assert_eq!(local.len(), m + 1);
            if p == 0 {
                nodes.push(local[0]);
            } else if nodes.last() != Some(&local[0]) {
                return Err(Error::InvalidMesh(format!(
                    "pieces do not share the endpoint {}",
                    local[0]
                )));
            }
            pieces.push(Piece { start, end, first: nodes.len() - 1, fresh });
            nodes.extend_from_slice(&local[1..]);
        }
        if nodes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidMesh("grid nodes are not strictly increasing".into()));
        }
        Ok(Self { pieces, nodes, table })
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn degree(&self) -> usize {
        self.table.degree()
    }

    pub fn table(&self) -> &BaryTable {
        &self.table
    }

    pub fn start(&self) -> f64 {
        self.nodes[0]
    }

    pub fn end(&self) -> f64 {
        *self.nodes.last().unwrap()
    }

    /// Piece breakpoints of this side.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut bp: Vec<f64> = self.pieces.iter().map(|p| p.start).collect();
        bp.push(self.pieces.last().unwrap().end);
        bp
    }

    /// Nodes of piece `i`.
    pub fn piece_nodes(&self, i: usize) -> &[f64] {
        let p = &self.pieces[i];
        &self.nodes[p.first..=p.first + self.degree()]
    }

    fn tolerance(&self) -> f64 {
        COINCIDENCE_TOL * (self.end() - self.start()).abs().max(1.0)
    }

    /// Piece containing `t`: the left one at interior breakpoints, the first
    /// one at the start of the side. Points within the coincidence tolerance
    /// of the side are clamped onto it.
    pub fn locate(&self, t: f64) -> Result<(usize, f64)> {
        let (lo, hi) = (self.start(), self.end());
        let tol = self.tolerance();
        if !(t >= lo - tol && t <= hi + tol) {
            return Err(Error::OutOfDomain { t, lower: lo, upper: hi });
        }
        let t = t.clamp(lo, hi);
        let i = self.pieces.partition_point(|p| p.end < t).min(self.pieces.len() - 1);
        Ok((i, t))
    }
}

/// The full two-sided grid on `[-τ, 0] ∪ [0, ω]`.
#[derive(Clone, Debug)]
pub struct CollocationGrid {
    pub forward: Arc<GridSide>,
    pub history: Arc<GridSide>,
    pub omega: f64,
    pub tau: f64,
}

impl CollocationGrid {
    pub fn new(mesh: &Mesh, family: &NodeFamily, tau: f64) -> Result<Self> {
        let omega = mesh.end();
        let forward = build_forward_grid(mesh, family, omega)?;
        let history = build_history_grid(mesh, family, tau, omega)?;
        Ok(Self { forward: Arc::new(forward), history: Arc::new(history), omega, tau })
    }
}

fn check_span(mesh: &Mesh, omega: f64) -> Result<()> {
    if !(omega > 0.0) {
        return Err(Error::InvalidParameter(format!("period must be positive, got {omega}")));
    }
    if mesh.start() != 0.0 || (mesh.end() - omega).abs() > COINCIDENCE_TOL * omega.max(1.0) {
        return Err(Error::InvalidMesh(format!(
            "mesh spans [{}, {}], expected [0, {omega}]",
            mesh.start(),
            mesh.end()
        )));
    }
    Ok(())
}

/// Forward grid on `[0, ω]`: nodes `t_i + h_i c_j`, breakpoints kept exact.
pub fn build_forward_grid(mesh: &Mesh, family: &NodeFamily, omega: f64) -> Result<GridSide> {
    check_span(mesh, omega)?;
    let table = bary_table(family.kind, family.degree);
    let bp = mesh.breakpoints();
    let last = bp.len() - 1;
    let raw = (0..mesh.pieces())
        .map(|i| {
            let end = if i + 1 == last { omega } else { bp[i + 1] };
            (bp[i], end, fresh_nodes(bp[i], end, &family.nodes), false)
        })
        .collect();
    GridSide::from_pieces(raw, table)
}

fn fresh_nodes(a: f64, b: f64, c: &[f64]) -> Vec<f64> {
    let h = b - a;
    let m = c.len() - 1;
    c.iter()
        .enumerate()
        .map(|(j, cj)| match j {
            0 => a,
            j if j == m => b,
            _ => a + h * cj,
        })
        .collect()
}

/// History grid on `[-τ, 0]`, built by shifting the forward pieces back by
/// `ω, 2ω, ...` and truncating at `-τ`; a truncated leftmost piece gets fresh
/// nodes from the same family.
pub fn build_history_grid(
    mesh: &Mesh,
    family: &NodeFamily,
    tau: f64,
    omega: f64,
) -> Result<GridSide> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::InvalidParameter(format!("delay must be positive, got {tau}")));
    }
    let forward = build_forward_grid(mesh, family, omega)?;
    let table = forward.table.clone();
    let m = family.degree;
    let tol = COINCIDENCE_TOL * omega.max(1.0);
    let sliver = SLIVER_TOL * omega;
    let bp = mesh.breakpoints();
    let nl = mesh.pieces();

    // collected right to left
    let mut raw: Vec<(f64, f64, Vec<f64>, bool)> = Vec::new();
    'windows: for k in 1.. {
        let shift = k as f64 * omega;
        let window_end = if k == 1 { 0.0 } else { -((k - 1) as f64 * omega) };
        for i in (0..nl).rev() {
            let left = bp[i] - shift;
            let right = if i + 1 == nl { window_end } else { bp[i + 1] - shift };
            if right <= -tau + tol {
                break 'windows;
            }
            if (left + tau).abs() <= tol {
                let mut local: Vec<f64> = forward.piece_nodes(i).iter().map(|t| t - shift).collect();
                local[0] = -tau;
                local[m] = right;
                raw.push((-tau, right, local, false));
                break 'windows;
            }
            if left > -tau {
                let mut local: Vec<f64> = forward.piece_nodes(i).iter().map(|t| t - shift).collect();
                local[0] = left;
                local[m] = right;
                raw.push((left, right, local, false));
                continue;
            }
            // -τ falls strictly inside this piece
            if right + tau < sliver {
                if let Some(prev) = raw.pop() {
                    let end = prev.1;
                    raw.push((-tau, end, fresh_nodes(-tau, end, &family.nodes), true));
                    break 'windows;
                }
            }
            raw.push((-tau, right, fresh_nodes(-tau, right, &family.nodes), true));
            break 'windows;
        }
    }
    raw.reverse();
    GridSide::from_pieces(raw, table)
}
