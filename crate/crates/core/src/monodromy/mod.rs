//! Piecewise collocation of the monodromy operator.
//!
//! Unknowns are the history nodal values `Ψ` on `[-τ, 0]` and the forward
//! nodal values `Z` on `[0, ω]`, both node-major with the differential
//! components first. For differential components `Z` holds derivatives and
//! the state is rebuilt as `ψ(0) + ∫_0^s z`; for renewal components `Z` holds
//! the state itself. Collocating the equation at the forward nodes gives
//! `Z = A1 Ψ + A2 Z`, and sampling the state at `ω + θ_m` gives
//! `TΨ = B1 Ψ + B2 Z`, hence `T = B1 + B2 (I - A2)⁻¹ A1`.

mod multipliers;

use faer::linalg::solvers::Solve;
use faer::Mat;
use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::interp::{kernel_quadrature, state_weights, Evaluation, KernelWeights, StateWeights};
use crate::mesh::{CollocationGrid, Mesh, NodeFamily, COINCIDENCE_TOL};
use crate::model::{Block, LinearPeriodicEquation};

pub use multipliers::{
    eigenfunction, multipliers, Eigenfunction, Mode, MultiplierOptions, MultiplierSet, Verdict,
};

/// What to do with smoothness breakpoints of the equation missing from the mesh.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum BreakpointPolicy {
    /// Add them to the mesh and record them in [`MonodromyDiscretization::merged`].
    #[default]
    Merge,
    /// Fail with [`Error::MissingBreakpoint`].
    Strict,
    /// Use the mesh as given; only meant for convergence studies.
    Ignore,
}

impl std::str::FromStr for BreakpointPolicy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "merge" => Ok(Self::Merge),
            "strict" => Ok(Self::Strict),
            "ignore" => Ok(Self::Ignore),
            _ => Err(Error::InvalidParameter(format!("unknown breakpoint policy `{s}`"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct AssembleOptions {
    pub policy: BreakpointPolicy,
    /// Clenshaw–Curtis degree for distributed terms; `None` means `max(M, 5)`.
    pub quad_degree: Option<usize>,
    /// Largest accepted number of unknowns `d (n_hist + n_fwd)`.
    pub max_dim: usize,
}

impl Default for AssembleOptions {
    fn default() -> Self {
        Self { policy: BreakpointPolicy::Merge, quad_degree: None, max_dim: 12_000 }
    }
}

/// Pivot ratio of `I - A2` below which the grid is deemed too coarse.
const SINGULAR_PIVOT_RATIO: f64 = 1e-13;

/// Assembled blocks and the resulting monodromy matrix.
#[derive(Clone, Debug)]
pub struct MonodromyDiscretization {
    pub grid: CollocationGrid,
    mesh: Mesh,
    merged: Vec<f64>,
    dim: usize,
    dim_differential: usize,
    has_trivial: bool,
    a1: Mat<f64>,
    a2: Mat<f64>,
    b1: Mat<f64>,
    b2: Mat<f64>,
    t: Mat<f64>,
    pivot_ratio: f64,
}

impl MonodromyDiscretization {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn dim_differential(&self) -> usize {
        self.dim_differential
    }

    /// Mesh actually used, after breakpoint merging.
    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    /// Breakpoints that had to be added to the input mesh.
    pub fn merged(&self) -> &[f64] {
        &self.merged
    }

    pub fn has_trivial(&self) -> bool {
        self.has_trivial
    }

    pub fn n_hist(&self) -> usize {
        self.grid.history.len()
    }

    pub fn n_fwd(&self) -> usize {
        self.grid.forward.len()
    }

    pub fn a1(&self) -> &Mat<f64> {
        &self.a1
    }

    pub fn a2(&self) -> &Mat<f64> {
        &self.a2
    }

    pub fn b1(&self) -> &Mat<f64> {
        &self.b1
    }

    pub fn b2(&self) -> &Mat<f64> {
        &self.b2
    }

    /// `T = B1 + B2 (I - A2)⁻¹ A1`, of size `d n_hist`.
    pub fn matrix(&self) -> &Mat<f64> {
        &self.t
    }

    pub fn pivot_ratio(&self) -> f64 {
        self.pivot_ratio
    }

    /// The pencil `(P, Q)` with `P = [[B1, B2], [A1, A2 - I]]` and
    /// `Q = diag(I, 0)`: `P (Ψ, Z) = μ Q (Ψ, Z)`.
    pub fn pencil(&self) -> (Mat<f64>, Mat<f64>) {
        let (nh, nf) = (self.a1.ncols(), self.a1.nrows());
        let n = nh + nf;
        let p = Mat::from_fn(n, n, |i, j| match (i < nh, j < nh) {
            (true, true) => self.b1[(i, j)],
            (true, false) => self.b2[(i, j - nh)],
            (false, true) => self.a1[(i - nh, j)],
            (false, false) => self.a2[(i - nh, j - nh)] - if i == j { 1.0 } else { 0.0 },
        });
        let q = Mat::from_fn(n, n, |i, j| if i == j && i < nh { 1.0 } else { 0.0 });
        (p, q)
    }

    /// Standard eigenproblem recovered from the pencil by eliminating `Z`
    /// through the lower block row: `(B1 - B2 (A2 - I)⁻¹ A1) Ψ = μ Ψ`.
    pub fn pencil_reduced(&self) -> Result<Mat<f64>> {
        let (p, _) = self.pencil();
        let nh = self.a1.ncols();
        let n = p.nrows();
        let nf = n - nh;
        let s = p.get(nh..n, nh..n).to_owned();
        let lu = s.partial_piv_lu();
        pivot_check(lu.U())?;
        let x = lu.solve(p.get(nh..n, 0..nh));
        let mut out = p.get(0..nh, 0..nh).to_owned();
        if nf > 0 {
            out -= p.get(0..nh, nh..n) * &x;
        }
        Ok(out)
    }

    /// Apply `T` to a history nodal vector.
    pub fn apply(&self, psi: &[f64]) -> Vec<f64> {
        let v = Mat::from_fn(psi.len(), 1, |i, _| psi[i]);
        let r = &self.t * &v;
        (0..r.nrows()).map(|i| r[(i, 0)]).collect()
    }
}

fn pivot_check(u: faer::MatRef<'_, f64>) -> Result<f64> {
    let n = u.nrows().min(u.ncols());
    if n == 0 {
        return Ok(1.0);
    }
    let (mut lo, mut hi) = (f64::INFINITY, 0.0_f64);
    for i in 0..n {
        let p = u[(i, i)].abs();
        lo = lo.min(p);
        hi = hi.max(p);
    }
    let ratio = if hi > 0.0 { lo / hi } else { 0.0 };
    if !(ratio >= SINGULAR_PIVOT_RATIO) {
        return Err(Error::TooCoarse { pivot_ratio: ratio });
    }
    Ok(ratio)
}

/// Dense rows for one node: `d` rows over the history and forward columns.
struct RowBlock {
    d: usize,
    hist: Vec<f64>,
    fwd: Vec<f64>,
    hist_cols: usize,
    fwd_cols: usize,
}

impl RowBlock {
    fn new(d: usize, n_hist: usize, n_fwd: usize) -> Self {
        Self {
            d,
            hist: vec![0.0; d * d * n_hist],
            fwd: vec![0.0; d * d * n_fwd],
            hist_cols: d * n_hist,
            fwd_cols: d * n_fwd,
        }
    }

    /// Rows `target..` += `scale · coeff · state(source..)`.
    fn add_state(&mut self, target: usize, source: usize, coeff: &DMatrix<f64>, scale: f64, w: &StateWeights) {
        let d = self.d;
        for (data, cols, weights) in [
            (&mut self.hist, self.hist_cols, &w.history),
            (&mut self.fwd, self.fwd_cols, &w.forward),
        ] {
            for (k, wk) in weights.iter() {
                let f = scale * wk;
                if f == 0.0 {
                    continue;
                }
                for r in 0..coeff.nrows() {
                    let row = &mut data[(target + r) * cols..(target + r + 1) * cols];
                    for c in 0..coeff.ncols() {
                        row[k * d + source + c] += f * coeff[(r, c)];
                    }
                }
            }
        }
    }

    /// Rows `target..` += kernel weights whose columns are laid out per source block.
    fn add_kernel(&mut self, target: usize, source: usize, ds: usize, kw: &KernelWeights) {
        let d = self.d;
        for (data, cols, m) in [(&mut self.hist, self.hist_cols, &kw.history), (&mut self.fwd, self.fwd_cols, &kw.forward)] {
            for r in 0..m.nrows() {
                let row = &mut data[(target + r) * cols..(target + r + 1) * cols];
                for j in 0..m.ncols() {
                    let v = m[(r, j)];
                    if v != 0.0 {
                        row[(j / ds) * d + source + j % ds] += v;
                    }
                }
            }
        }
    }
}

fn evaluation(block: Block) -> Evaluation {
    match block {
        Block::Differential => Evaluation::Primitive,
        Block::Renewal => Evaluation::Direct,
    }
}

/// Right-hand side of `eq` at time `t`, applied to the state `V(PΨ, P⁺Z)`.
fn rhs_rows(eq: &LinearPeriodicEquation, grid: &CollocationGrid, t: f64, quad: usize) -> Result<RowBlock> {
    let d = eq.dim();
    let mut rows = RowBlock::new(d, grid.history.len(), grid.forward.len());
    for term in eq.discrete_terms() {
        let w = state_weights(grid, t - term.delay, evaluation(term.source))?;
        rows.add_state(eq.block_offset(term.target), eq.block_offset(term.source), &(term.coefficient)(t), 1.0, &w);
    }
    for term in eq.distributed_terms() {
        let kernel = |theta: f64| (term.kernel)(t, theta);
        let kw = kernel_quadrature(grid, t, (term.lower, term.upper), quad, evaluation(term.source), &kernel)?;
        rows.add_kernel(eq.block_offset(term.target), eq.block_offset(term.source), eq.block_dim(term.source), &kw);
    }
    Ok(rows)
}

/// State at `ω + θ`, component by component.
fn end_state_rows(eq: &LinearPeriodicEquation, grid: &CollocationGrid, theta: f64) -> Result<RowBlock> {
    let d = eq.dim();
    let mut rows = RowBlock::new(d, grid.history.len(), grid.forward.len());
    let one = DMatrix::from_element(1, 1, 1.0);
    let s = (grid.omega + theta).min(grid.omega);
    for c in 0..d {
        let block = if c < eq.dim_differential() { Block::Differential } else { Block::Renewal };
        let w = state_weights(grid, s, evaluation(block))?;
        rows.add_state(c, c, &one, 1.0, &w);
    }
    Ok(rows)
}

fn stack(blocks: &[RowBlock], d: usize, forward: bool) -> Mat<f64> {
    let cols = if forward { blocks[0].fwd_cols } else { blocks[0].hist_cols };
    let mut m = Mat::<f64>::zeros(blocks.len() * d, cols);
    for (k, b) in blocks.iter().enumerate() {
        let data = if forward { &b.fwd } else { &b.hist };
        for r in 0..d {
            for (j, v) in data[r * cols..(r + 1) * cols].iter().enumerate() {
                if *v != 0.0 {
                    m[(k * d + r, j)] = *v;
                }
            }
        }
    }
    m
}

/// Mesh over `[0, ω]` with the equation's breakpoints handled per `policy`.
pub fn prepare_mesh(eq: &LinearPeriodicEquation, mesh: &Mesh, policy: BreakpointPolicy) -> Result<(Mesh, Vec<f64>)> {
    let omega = eq.period();
    if mesh.start() != 0.0 || (mesh.end() - omega).abs() > COINCIDENCE_TOL * omega.max(1.0) * 1e2 {
        return Err(Error::InvalidMesh(format!(
            "mesh spans [{}, {}] but the equation has period {omega}",
            mesh.start(),
            mesh.end()
        )));
    }
    let mesh = if mesh.end() == omega { mesh.clone() } else { mesh.mapped(0.0, omega)? };
    let tol = 1e-10 * omega;
    let missing = mesh.missing(eq.breakpoints(), tol);
    match policy {
        BreakpointPolicy::Strict if !missing.is_empty() => Err(Error::MissingBreakpoint(missing[0])),
        BreakpointPolicy::Merge if !missing.is_empty() => Ok((mesh.with_breakpoints(&missing, tol)?, missing)),
        _ => Ok((mesh, Vec::new())),
    }
}

/// Assemble the piecewise discretization of the monodromy operator of `eq`
/// on `mesh` with `family` nodes on every piece, and form `T`.
pub fn assemble(
    eq: &LinearPeriodicEquation,
    mesh: &Mesh,
    family: &NodeFamily,
    options: &AssembleOptions,
) -> Result<MonodromyDiscretization> {
    let (mesh, merged) = prepare_mesh(eq, mesh, options.policy)?;
    let grid = CollocationGrid::new(&mesh, family, eq.max_delay())?;
    let d = eq.dim();
    let (nh, nf) = (grid.history.len(), grid.forward.len());
    let size = d * (nh + nf);
    if size > options.max_dim {
        return Err(Error::TooLarge { size, limit: options.max_dim });
    }
    let quad = options.quad_degree.unwrap_or(family.degree.max(5));

    let forward_rows: Vec<RowBlock> = grid
        .forward
        .nodes()
        .par_iter()
        .map(|&t| rhs_rows(eq, &grid, t, quad))
        .collect::<Result<_>>()?;
    let end_rows: Vec<RowBlock> = grid
        .history
        .nodes()
        .par_iter()
        .map(|&theta| end_state_rows(eq, &grid, theta))
        .collect::<Result<_>>()?;

    let a1 = stack(&forward_rows, d, false);
    let a2 = stack(&forward_rows, d, true);
    let b1 = stack(&end_rows, d, false);
    let b2 = stack(&end_rows, d, true);
    drop(forward_rows);
    drop(end_rows);

    let n = a2.nrows();
    let i_minus_a2 = Mat::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 } - a2[(i, j)]);
    let lu = i_minus_a2.partial_piv_lu();
    let pivot_ratio = pivot_check(lu.U())?;
    let x = lu.solve(&a1);
    let t = &b1 + &b2 * &x;
    if t.col_iter().any(|c| c.iter().any(|v| !v.is_finite())) {
        return Err(Error::TooCoarse { pivot_ratio });
    }

    Ok(MonodromyDiscretization {
        grid,
        mesh,
        merged,
        dim: d,
        dim_differential: eq.dim_differential(),
        has_trivial: eq.has_trivial(),
        a1,
        a2,
        b1,
        b2,
        t,
        pivot_ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ode_toy, tent, zero_toy};

    fn cheb(m: usize) -> NodeFamily {
        NodeFamily::chebyshev(m).unwrap()
    }

    #[test]
    fn zero_equation_maps_to_constant() {
        let eq = zero_toy(1.5, 2.0).unwrap();
        let mesh = Mesh::new(vec![0.0, 0.4, 1.5]).unwrap();
        let disc = assemble(&eq, &mesh, &cheb(4), &AssembleOptions::default()).unwrap();
        // quadratic history, reproduced exactly by the piecewise interpolant
        let f = |t: f64| t * t - 0.3 * t + 0.2;
        let hist = disc.grid.history.nodes().to_vec();
        let psi: Vec<f64> = hist.iter().map(|&t| f(t)).collect();
        let out = disc.apply(&psi);
        for (theta, v) in hist.iter().zip(out) {
            // τ > ω: the part of the new segment before 0 is still history
            let expected = if theta + 1.5 <= 0.0 { f(theta + 1.5) } else { f(0.0) };
            assert!((v - expected).abs() < 1e-13, "{v} vs {expected} at {theta}");
        }
    }

    #[test]
    fn ode_monodromy_is_exponential() {
        let eq = ode_toy(1.0, 1.0, 1.0).unwrap();
        let mesh = Mesh::uniform(0.0, 1.0, 1).unwrap();
        let disc = assemble(&eq, &mesh, &cheb(20), &AssembleOptions::default()).unwrap();
        // the history is irrelevant except for ψ(0): T has rank one
        let psi = vec![1.0; disc.n_hist()];
        let out = disc.apply(&psi);
        assert!((out.last().unwrap() - std::f64::consts::E).abs() < 1e-12);
        assert!((out[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tent_breakpoint_policies() {
        let eq = tent();
        let coarse = Mesh::new(vec![0.0, 2.0]).unwrap();
        let merged = assemble(&eq, &coarse, &cheb(8), &AssembleOptions::default()).unwrap();
        assert_eq!(merged.merged(), &[1.0]);
        assert_eq!(merged.mesh().breakpoints(), &[0.0, 1.0, 2.0]);
        let strict = AssembleOptions { policy: BreakpointPolicy::Strict, ..Default::default() };
        assert!(matches!(assemble(&eq, &coarse, &cheb(8), &strict), Err(Error::MissingBreakpoint(b)) if b == 1.0));
        let ignore = AssembleOptions { policy: BreakpointPolicy::Ignore, ..Default::default() };
        assert_eq!(assemble(&eq, &coarse, &cheb(8), &ignore).unwrap().mesh().pieces(), 1);
    }

    #[test]
    fn mesh_must_span_the_period() {
        let eq = tent();
        assert!(assemble(&eq, &Mesh::uniform(0.0, 3.0, 3).unwrap(), &cheb(3), &AssembleOptions::default()).is_err());
    }

    #[test]
    fn size_guard() {
        let eq = tent();
        let opts = AssembleOptions { max_dim: 10, ..Default::default() };
        assert!(matches!(
            assemble(&eq, &Mesh::uniform(0.0, 2.0, 2).unwrap(), &cheb(10), &opts),
            Err(Error::TooLarge { .. })
        ));
    }

    #[test]
    fn pencil_reduction_matches_direct_matrix() {
        let eq = tent();
        let disc = assemble(&eq, &Mesh::uniform(0.0, 2.0, 2).unwrap(), &cheb(6), &AssembleOptions::default()).unwrap();
        let r = disc.pencil_reduced().unwrap();
        let t = disc.matrix();
        let mut worst = 0.0_f64;
        for i in 0..t.nrows() {
            for j in 0..t.ncols() {
                worst = worst.max((r[(i, j)] - t[(i, j)]).abs());
            }
        }
        assert!(worst < 1e-12, "{worst}");
    }
}
