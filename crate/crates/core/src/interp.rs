//! Piecewise barycentric Lagrange interpolation on grid sides, together with
//! the exact integration of the piecewise interpolant.
//!
//! Everything here is linear in the nodal values, so each operator is also
//! exposed as a sparse weight vector over the global nodes of a side. Those
//! weight vectors are the rows the monodromy assembly is built from.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock, RwLock};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::mesh::{reference_nodes, CollocationGrid, GridSide, NodeKind};
use crate::quadrature::{clenshaw_curtis, gauss_legendre};

/// Barycentric and antiderivative weights of one node family.
#[derive(Debug)]
pub struct BaryTable {
    kind: NodeKind,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    /// `antiderivative[k][j] = ∫_0^{c_k} ℓ_j`.
    antiderivative: Vec<Vec<f64>>,
    gauss: (Vec<f64>, Vec<f64>),
}

impl BaryTable {
    fn new(kind: NodeKind, degree: usize) -> Self {
        let nodes = reference_nodes(kind, degree)
            .expect("degree validated by caller")
            .nodes;
        let weights = barycentric_weights(kind, &nodes);
        let gauss = gauss_legendre(degree / 2 + 1);
        let mut table = Self { kind, nodes, weights, antiderivative: Vec::new(), gauss };
        table.antiderivative = table
            .nodes
            .iter()
            .map(|&c| {
                let mut row = vec![0.0; degree + 1];
                table.integral_basis(c, &mut row);
                row
            })
            .collect();
        table
    }

    pub fn kind(&self) -> NodeKind {
        self.kind
    }

    pub fn degree(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `∫_0^{c_k} ℓ_j` as `[k][j]`.
    pub fn antiderivative(&self) -> &[Vec<f64>] {
        &self.antiderivative
    }

    /// Quadrature weights of the whole reference piece, `∫_0^1 ℓ_j`.
    pub fn full_weights(&self) -> &[f64] {
        self.antiderivative.last().unwrap()
    }

    /// Values `ℓ_j(u)` of the Lagrange basis at a reference point.
    pub fn basis(&self, u: f64, out: &mut [f64]) {
        if let Some(j) = self.nodes.iter().position(|&c| c == u) {
            out.fill(0.0);
            out[j] = 1.0;
            return;
        }
        let mut sum = 0.0;
        for ((o, &c), &w) in out.iter_mut().zip(&self.nodes).zip(&self.weights) {
            *o = w / (u - c);
            sum += *o;
        }
        for o in out.iter_mut() {
            *o /= sum;
        }
    }

    /// Derivatives `ℓ_j'(u)` with respect to the reference variable.
    pub fn basis_derivative(&self, u: f64, out: &mut [f64]) {
        let n = self.nodes.len();
        if let Some(i) = self.nodes.iter().position(|&c| c == u) {
            let mut diag = 0.0;
            for (k, o) in out.iter_mut().enumerate().take(n) {
                if k != i {
                    let d = (self.weights[k] / self.weights[i]) / (self.nodes[i] - self.nodes[k]);
                    *o = d;
                    diag -= d;
                }
            }
            out[i] = diag;
            return;
        }
        let mut sum = 0.0;
        let mut q = 0.0;
        for k in 0..n {
            let a = self.weights[k] / (u - self.nodes[k]);
            sum += a;
            q += a / (u - self.nodes[k]);
        }
        let q = q / sum;
        for ((o, w), c) in out.iter_mut().zip(&self.weights).zip(&self.nodes) {
            let l = w / (u - c) / sum;
            *o = l * (q - 1.0 / (u - c));
        }
    }

    /// `∫_0^u ℓ_j` for `u` in `[0, 1]`, exact up to rounding.
    pub fn integral_basis(&self, u: f64, out: &mut [f64]) {
        out.fill(0.0);
        if u == 0.0 {
            return;
        }
        let mut l = vec![0.0; self.nodes.len()];
        for (x, w) in self.gauss.0.iter().zip(&self.gauss.1) {
            self.basis(u * x, &mut l);
            for (o, lj) in out.iter_mut().zip(&l) {
                *o += u * w * lj;
            }
        }
    }
}

fn barycentric_weights(kind: NodeKind, nodes: &[f64]) -> Vec<f64> {
    let m = nodes.len() - 1;
    match kind {
        NodeKind::ChebyshevExtrema => (0..=m)
            .map(|j| {
                let s = if j % 2 == 0 { 1.0 } else { -1.0 };
                if j == 0 || j == m {
                    0.5 * s
                } else {
                    s
                }
            })
            .collect(),
        NodeKind::Uniform => {
            let mut binom = 1.0;
            (0..=m)
                .map(|j| {
                    if j > 0 {
                        binom = binom * (m + 1 - j) as f64 / j as f64;
                    }
                    if j % 2 == 0 {
                        binom
                    } else {
                        -binom
                    }
                })
                .collect()
        }
    }
}

type TableCache = RwLock<HashMap<(NodeKind, usize), Arc<BaryTable>>>;

/// Shared table for a node family, built once per `(kind, degree)`.
pub fn bary_table(kind: NodeKind, degree: usize) -> Arc<BaryTable> {
    static CACHE: OnceLock<TableCache> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(t) = cache.read().unwrap().get(&(kind, degree)) {
        return t.clone();
    }
    cache
        .write()
        .unwrap()
        .entry((kind, degree))
        .or_insert_with(|| Arc::new(BaryTable::new(kind, degree)))
        .clone()
}

/// Weights over a contiguous range of global nodes, starting at `offset`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct NodeWeights {
    pub offset: usize,
    pub values: Vec<f64>,
}

impl NodeWeights {
    pub fn unit(index: usize) -> Self {
        Self { offset: index, values: vec![1.0] }
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.values.iter().enumerate().map(move |(k, &w)| (self.offset + k, w))
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Apply to scalar nodal data.
    pub fn dot(&self, data: &[f64]) -> f64 {
        self.iter().map(|(k, w)| w * data[k]).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Weights realizing the piecewise interpolant of a side at `t`.
pub fn prolong_weights(side: &GridSide, t: f64) -> Result<NodeWeights> {
    let (i, t) = side.locate(t)?;
    let piece = &side.pieces()[i];
    let nodes = side.piece_nodes(i);
    if let Some(j) = nodes.iter().position(|&x| x == t) {
        return Ok(NodeWeights::unit(piece.first + j));
    }
    let mut values = vec![0.0; nodes.len()];
    side.table().basis((t - piece.start) / piece.width(), &mut values);
    Ok(NodeWeights { offset: piece.first, values })
}

/// Weights `q` with `q·Z = ∫_{start}^{b}` of the piecewise interpolant of `Z`.
pub fn integral_weights(side: &GridSide, b: f64) -> Result<NodeWeights> {
    let (i, b) = side.locate(b)?;
    let table = side.table();
    let m = table.degree();
    let pieces = side.pieces();
    let mut values = vec![0.0; pieces[i].first + m + 1];
    for p in &pieces[..i] {
        let h = p.width();
        for (j, w) in table.full_weights().iter().enumerate() {
            values[p.first + j] += h * w;
        }
    }
    let p = &pieces[i];
    let h = p.width();
    if b == p.end {
        for (j, w) in table.full_weights().iter().enumerate() {
            values[p.first + j] += h * w;
        }
    } else if b > p.start {
        let mut partial = vec![0.0; m + 1];
        table.integral_basis((b - p.start) / h, &mut partial);
        for (j, w) in partial.iter().enumerate() {
            values[p.first + j] += h * w;
        }
    }
    Ok(NodeWeights { offset: 0, values })
}

/// Nodal values of a `dim`-valued function on one grid side (node-major).
#[derive(Clone, Debug)]
pub struct NodalFunction {
    pub side: Arc<GridSide>,
    pub dim: usize,
    pub values: Vec<f64>,
}

impl NodalFunction {
    pub fn new(side: Arc<GridSide>, dim: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != dim * side.len() {
            return Err(Error::InvalidParameter(format!(
                "expected {} nodal values, got {}",
                dim * side.len(),
                values.len()
            )));
        }
        Ok(Self { side, dim, values })
    }

    pub fn node(&self, k: usize) -> &[f64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    /// Component `c` at every node.
    pub fn component(&self, c: usize) -> Vec<f64> {
        self.values.iter().skip(c).step_by(self.dim).copied().collect()
    }
}

/// Sample `f` at every global node of a side.
pub fn restrict(side: &Arc<GridSide>, dim: usize, mut f: impl FnMut(f64, &mut [f64])) -> NodalFunction {
    let mut values = vec![0.0; dim * side.len()];
    for (k, &t) in side.nodes().iter().enumerate() {
        f(t, &mut values[k * dim..(k + 1) * dim]);
    }
    NodalFunction { side: side.clone(), dim, values }
}

pub fn restrict_scalar(side: &Arc<GridSide>, f: impl Fn(f64) -> f64) -> NodalFunction {
    restrict(side, 1, |t, out| out[0] = f(t))
}

/// Evaluate the piecewise interpolant of `v` at `t`.
pub fn prolong_eval(v: &NodalFunction, t: f64) -> Result<Vec<f64>> {
    let w = prolong_weights(&v.side, t)?;
    let mut out = vec![0.0; v.dim];
    for (k, wk) in w.iter() {
        for (o, x) in out.iter_mut().zip(v.node(k)) {
            *o += wk * x;
        }
    }
    Ok(out)
}

/// How the state on `(0, ω]` is rebuilt from the forward nodal values.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Evaluation {
    /// Differential block: `ψ(0) + ∫_0^s z`.
    Primitive,
    /// Renewal block: `z(s)` itself.
    Direct,
}

/// The state at time `s ∈ [-τ, ω]` as weights over history and forward nodes.
#[derive(Clone, Debug, Default)]
pub struct StateWeights {
    pub history: NodeWeights,
    pub forward: NodeWeights,
}

/// Weights of `V(PΨ, P⁺Z)(s)`; history side for `s <= 0`.
pub fn state_weights(grid: &CollocationGrid, s: f64, eval: Evaluation) -> Result<StateWeights> {
    if s <= 0.0 {
        Ok(StateWeights { history: prolong_weights(&grid.history, s)?, forward: NodeWeights::default() })
    } else {
        forward_state_weights(grid, s, eval)
    }
}

fn forward_state_weights(grid: &CollocationGrid, s: f64, eval: Evaluation) -> Result<StateWeights> {
    Ok(match eval {
        Evaluation::Primitive => StateWeights {
            history: NodeWeights::unit(grid.history.len() - 1),
            forward: integral_weights(&grid.forward, s)?,
        },
        Evaluation::Direct => StateWeights {
            history: NodeWeights::default(),
            forward: prolong_weights(&grid.forward, s)?,
        },
    })
}

/// A linear functional over `(Ψ, Z)` with matrix-valued coefficients.
/// Columns are node-major: node `k`, component `c` at `k * cols + c`.
#[derive(Clone, Debug)]
pub struct KernelWeights {
    pub history: DMatrix<f64>,
    pub forward: DMatrix<f64>,
}

impl KernelWeights {
    pub fn zeros(rows: usize, cols: usize, grid: &CollocationGrid) -> Self {
        Self {
            history: DMatrix::zeros(rows, cols * grid.history.len()),
            forward: DMatrix::zeros(rows, cols * grid.forward.len()),
        }
    }

    /// Add `scale * coeff` times the state weights.
    pub fn accumulate(&mut self, coeff: &DMatrix<f64>, scale: f64, w: &StateWeights) {
        let cols = coeff.ncols();
        for (target, weights) in [(&mut self.history, &w.history), (&mut self.forward, &w.forward)] {
            for (k, wk) in weights.iter() {
                let f = scale * wk;
                if f == 0.0 {
                    continue;
                }
                for c in 0..cols {
                    for r in 0..coeff.nrows() {
                        target[(r, k * cols + c)] += f * coeff[(r, c)];
                    }
                }
            }
        }
    }
}

/// Weights realizing `∫_a^b K(θ) v(t + θ) dθ` for the state `v = V(PΨ, P⁺Z)`.
///
/// The window is split at `θ = -t` and at every grid breakpoint crossed by
/// `t + θ`; each subpiece gets a Clenshaw–Curtis rule with `degree + 1` points.
pub fn kernel_quadrature(
    grid: &CollocationGrid,
    t: f64,
    window: (f64, f64),
    degree: usize,
    eval: Evaluation,
    kernel: &dyn Fn(f64) -> DMatrix<f64>,
) -> Result<KernelWeights> {
    let (a, b) = window;
    let tol = crate::mesh::COINCIDENCE_TOL * grid.tau.max(1.0);
    if !(a <= b) || a < -grid.tau - tol || b > tol {
        return Err(Error::OutOfDomain { t: if a < -grid.tau { a } else { b }, lower: -grid.tau, upper: 0.0 });
    }
    if degree == 0 {
        return Err(Error::InvalidParameter("quadrature degree must be at least 1".into()));
    }
    let probe = kernel(a);
    let mut out = KernelWeights::zeros(probe.nrows(), probe.ncols(), grid);
    let (qx, qw) = clenshaw_curtis(degree);

    // history part, s = t + θ ∈ [t + a, min(t + b, 0)]
    let (lo, hi) = (t + a, (t + b).min(0.0));
    if hi > lo {
        for (p, q) in subintervals(lo, hi, &grid.history.breakpoints()) {
            for (x, w) in qx.iter().zip(&qw) {
                let s = p + (q - p) * x;
                let sw = StateWeights {
                    history: prolong_weights(&grid.history, s)?,
                    forward: NodeWeights::default(),
                };
                out.accumulate(&kernel(s - t), (q - p) * w, &sw);
            }
        }
    }
    // forward part, s ∈ [max(t + a, 0), t + b]
    let (lo, hi) = ((t + a).max(0.0), t + b);
    if hi > lo {
        for (p, q) in subintervals(lo, hi, &grid.forward.breakpoints()) {
            for (x, w) in qx.iter().zip(&qw) {
                let s = p + (q - p) * x;
                let sw = forward_state_weights(grid, s, eval)?;
                out.accumulate(&kernel(s - t), (q - p) * w, &sw);
            }
        }
    }
    Ok(out)
}

fn subintervals(lo: f64, hi: f64, breakpoints: &[f64]) -> Vec<(f64, f64)> {
    let mut cuts = vec![lo];
    cuts.extend(breakpoints.iter().copied().filter(|&b| b > lo && b < hi));
    cuts.push(hi);
    cuts.windows(2).map(|w| (w[0], w[1])).collect()
}
