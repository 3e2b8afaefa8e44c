//! Periodic solutions by piecewise collocation with unknown period.
//!
//! Time is rescaled to `[0, 1]`: the unknowns are the values of a continuous
//! piecewise polynomial `p` at the equidistant nodes `t_i + j h_i / m` and the
//! period `w`. Differential components satisfy `p'(ζ) = w G(p_ζ)` and
//! renewal components `p(ζ) = F(p_ζ)` at `m` collocation points per piece,
//! where delayed values wrap around periodically. Periodicity `p(0) = p(1)`
//! and a phase condition close the system, which is solved by damped Newton
//! with a finite-difference Jacobian.

use std::f64::consts::PI;
use std::sync::Arc;

use faer::linalg::solvers::Solve;
use faer::Mat;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::interp::{bary_table, BaryTable};
use crate::mesh::{Mesh, NodeKind};
use crate::model::{
    logistic_guess, Block, Integrand, Logistic, NonlinearProblem, PeriodicOrbit, PiecewiseSolution,
    StateSegment,
};
use crate::quadrature::gauss_legendre;

/// Collocation points inside each piece.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum CollocationPoints {
    #[default]
    GaussLegendre,
    /// Zeros of the Chebyshev polynomial of the first kind.
    Chebyshev,
}

impl std::str::FromStr for CollocationPoints {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gauss-legendre" | "gauss" => Ok(Self::GaussLegendre),
            "chebyshev" => Ok(Self::Chebyshev),
            _ => Err(Error::InvalidParameter(format!("unknown collocation points `{s}`"))),
        }
    }
}

impl CollocationPoints {
    fn reference(self, m: usize) -> Vec<f64> {
        match self {
            Self::GaussLegendre => gauss_legendre(m).0,
            Self::Chebyshev => {
                let mut z: Vec<f64> = (0..m)
                    .map(|j| 0.5 - 0.5 * (PI * (2.0 * j as f64 + 1.0) / (2.0 * m as f64)).cos())
                    .collect();
                z.sort_by(f64::total_cmp);
                z
            }
        }
    }
}

/// Scalar condition removing the time-translation invariance.
#[derive(Clone)]
pub enum PhaseCondition {
    /// `∫_0^1 ⟨p(t), q'(t)⟩ dt = 0` with `q` the reference rescaled to period 1.
    Integral(Arc<dyn PeriodicOrbit>),
    /// `p_component(0) = value`.
    FixedComponent { component: usize, value: f64 },
}

impl PhaseCondition {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Integral(_) => "integral",
            Self::FixedComponent { .. } => "fixed-component",
        }
    }
}

#[derive(Clone)]
pub struct BvpProblem {
    pub problem: Arc<dyn NonlinearProblem>,
    /// Partition of `[0, 1]`.
    pub mesh: Mesh,
    pub degree: usize,
    pub collocation: CollocationPoints,
    pub phase: PhaseCondition,
    /// Initial guess; its period is the initial period.
    pub guess: Arc<dyn PeriodicOrbit>,
}

#[derive(Clone, Debug)]
pub struct BvpOptions {
    pub tol: f64,
    pub max_iters: usize,
    pub fd_step: f64,
    pub max_halvings: usize,
}

impl Default for BvpOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iters: 50, fd_step: 1e-7, max_halvings: 8 }
    }
}

#[derive(Clone, Debug)]
pub struct BvpResult {
    /// Solution over `[0, w]`.
    pub solution: PiecewiseSolution,
    pub period: f64,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

/// Pivot ratio of the Newton matrix below which it is treated as singular.
const SINGULAR_PIVOT_RATIO: f64 = 1e-13;

impl BvpProblem {
    /// Problem on `mesh` seeded with `guess`, using the integral phase
    /// condition against the guess itself.
    pub fn new(problem: Arc<dyn NonlinearProblem>, mesh: Mesh, degree: usize, guess: Arc<dyn PeriodicOrbit>) -> Result<Self> {
        let b = Self {
            problem,
            mesh,
            degree,
            collocation: CollocationPoints::GaussLegendre,
            phase: PhaseCondition::Integral(guess.clone()),
            guess,
        };
        b.validate()?;
        Ok(b)
    }

    fn validate(&self) -> Result<()> {
        if self.degree == 0 || self.degree > 30 {
            return Err(Error::InvalidParameter(format!("collocation degree must be in 1..=30, got {}", self.degree)));
        }
        if self.mesh.start() != 0.0 || self.mesh.end() != 1.0 {
            return Err(Error::InvalidMesh("BVP mesh must span [0, 1]".into()));
        }
        let d = self.problem.dim();
        if self.guess.dim() != d {
            return Err(Error::InvalidParameter(format!(
                "initial guess has dimension {}, problem has {d}",
                self.guess.dim()
            )));
        }
        if !(self.guess.period() > 0.0) {
            return Err(Error::InvalidParameter("initial period must be positive".into()));
        }
        if let PhaseCondition::FixedComponent { component, .. } = self.phase {
            if component >= d {
                return Err(Error::IndexOutOfRange { index: component, len: d });
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.problem.dim()
    }

    /// Number of distinct representation nodes, `L m + 1`.
    pub fn nodes(&self) -> usize {
        self.mesh.pieces() * self.degree + 1
    }

    pub fn unknowns(&self) -> usize {
        self.nodes() * self.dim() + 1
    }

    fn node_time(&self, k: usize) -> f64 {
        let m = self.degree;
        let bp = self.mesh.breakpoints();
        let (i, j) = (k / m, k % m);
        if i == self.mesh.pieces() {
            return 1.0;
        }
        if j == 0 {
            return bp[i];
        }
        let (a, b) = (bp[i], bp[i + 1]);
        (a * (m - j) as f64 + b * j as f64) / m as f64
    }

    /// Unknown vector sampling `orbit` at the representation nodes; the
    /// period becomes the last entry.
    pub fn pack(&self, orbit: &dyn PeriodicOrbit) -> Vec<f64> {
        let d = self.dim();
        let w = orbit.period();
        let mut x = vec![0.0; self.unknowns()];
        for k in 0..self.nodes() {
            let t = if k + 1 == self.nodes() { 0.0 } else { self.node_time(k) * w };
            orbit.eval_into(t, &mut x[k * d..(k + 1) * d]);
        }
        x[self.unknowns() - 1] = w;
        x
    }

    /// The piecewise polynomial over `[0, w]` described by `x`.
    pub fn unpack(&self, x: &[f64]) -> Result<PiecewiseSolution> {
        let d = self.dim();
        let m = self.degree;
        let w = x[self.unknowns() - 1];
        let l = self.mesh.pieces();
        let mut values = vec![0.0; l * d * (m + 1)];
        for i in 0..l {
            for j in 0..=m {
                let k = i * m + j;
                for c in 0..d {
                    values[(i * d + c) * (m + 1) + j] = x[k * d + c];
                }
            }
        }
        let mesh = if w == 1.0 { self.mesh.clone() } else { self.mesh.mapped(0.0, w)? };
        PiecewiseSolution::new(mesh, d, NodeKind::Uniform, m, values)
    }
}

/// Evaluation of a candidate `(p, w)` in rescaled time.
struct Candidate<'a> {
    breakpoints: &'a [f64],
    table: &'a BaryTable,
    degree: usize,
    dim: usize,
    values: &'a [f64],
    period: f64,
}

impl Candidate<'_> {
    fn locate(&self, u: f64) -> (usize, f64) {
        let mut u = u.rem_euclid(1.0);
        if u >= 1.0 {
            u = 0.0;
        }
        let l = self.breakpoints.len() - 1;
        let i = (self.breakpoints.partition_point(|&b| b <= u) - 1).min(l - 1);
        let (a, b) = (self.breakpoints[i], self.breakpoints[i + 1]);
        (i, ((u - a) / (b - a)).clamp(0.0, 1.0))
    }

    fn combine(&self, i: usize, basis: &[f64], scale: f64, out: &mut [f64]) {
        let (d, m) = (self.dim, self.degree);
        out.fill(0.0);
        for (j, b) in basis.iter().enumerate() {
            let node = &self.values[(i * m + j) * d..(i * m + j + 1) * d];
            for (o, v) in out.iter_mut().zip(node) {
                *o += scale * b * v;
            }
        }
    }

    fn value(&self, u: f64, out: &mut [f64]) {
        let (i, s) = self.locate(u);
        let mut basis = [0.0; 32];
        let basis = &mut basis[..=self.degree];
        self.table.basis(s, basis);
        self.combine(i, basis, 1.0, out);
    }

    /// `dp/du`.
    fn derivative(&self, u: f64, out: &mut [f64]) {
        let (i, s) = self.locate(u);
        let mut basis = [0.0; 32];
        let basis = &mut basis[..=self.degree];
        self.table.basis_derivative(s, basis);
        let h = self.breakpoints[i + 1] - self.breakpoints[i];
        self.combine(i, basis, 1.0 / h, out);
    }
}

/// History segment ending at original time `t` of a candidate.
struct CandidateSegment<'a> {
    candidate: &'a Candidate<'a>,
    t: f64,
    gauss: &'a (Vec<f64>, Vec<f64>),
}

impl StateSegment for CandidateSegment<'_> {
    fn dim(&self) -> usize {
        self.candidate.dim
    }

    fn value(&self, theta: f64, out: &mut [f64]) {
        self.candidate.value((self.t + theta) / self.candidate.period, out)
    }

    fn integrate(&self, lower: f64, upper: f64, integrand: &mut Integrand<'_>, out: &mut [f64]) {
        let w = self.candidate.period;
        let bp = self.candidate.breakpoints;
        let mut cuts = vec![lower, upper];
        let k0 = ((self.t + lower) / w).floor() as i64 - 1;
        let k1 = ((self.t + upper) / w).ceil() as i64 + 1;
        for k in k0..=k1 {
            for b in &bp[..bp.len() - 1] {
                let theta = (b + k as f64) * w - self.t;
                if theta > lower && theta < upper {
                    cuts.push(theta);
                }
            }
        }
        cuts.sort_by(f64::total_cmp);
        out.fill(0.0);
        let mut state = vec![0.0; self.candidate.dim];
        let mut buf = vec![0.0; out.len()];
        for c in cuts.windows(2) {
            let h = c[1] - c[0];
            if h <= 0.0 {
                continue;
            }
            for (x, wt) in self.gauss.0.iter().zip(&self.gauss.1) {
                let theta = c[0] + h * x;
                self.value(theta, &mut state);
                integrand(theta, &state, &mut buf);
                for (o, b) in out.iter_mut().zip(&buf) {
                    *o += h * wt * b;
                }
            }
        }
    }
}

/// Precomputed data shared by all residual evaluations.
struct Workspace {
    table: Arc<BaryTable>,
    colloc: Vec<f64>,
    gauss: (Vec<f64>, Vec<f64>),
    blocks: Vec<Block>,
    /// Phase quadrature: unit time, weight, `q'(t)`.
    phase_points: Vec<(f64, f64, Vec<f64>)>,
}

impl Workspace {
    fn new(bvp: &BvpProblem) -> Self {
        let m = bvp.degree;
        let bp = bvp.mesh.breakpoints();
        let colloc_ref = bvp.collocation.reference(m);
        let mut colloc = Vec::with_capacity(bvp.mesh.pieces() * m);
        for i in 0..bvp.mesh.pieces() {
            let h = bp[i + 1] - bp[i];
            colloc.extend(colloc_ref.iter().map(|z| bp[i] + h * z));
        }
        let mut phase_points = Vec::new();
        if let PhaseCondition::Integral(q) = &bvp.phase {
            let (gx, gw) = gauss_legendre(m + 1);
            let wq = q.period();
            for i in 0..bvp.mesh.pieces() {
                let h = bp[i + 1] - bp[i];
                for (x, wt) in gx.iter().zip(&gw) {
                    let u = bp[i] + h * x;
                    let dq: Vec<f64> = q.derivative(u * wq).iter().map(|v| v * wq).collect();
                    phase_points.push((u, h * wt, dq));
                }
            }
        }
        Self {
            table: bary_table(NodeKind::Uniform, m),
            colloc,
            gauss: gauss_legendre((m + 1).max(4)),
            blocks: bvp.problem.blocks(),
            phase_points,
        }
    }
}

fn residual_with(bvp: &BvpProblem, ws: &Workspace, x: &[f64]) -> Vec<f64> {
    let d = bvp.dim();
    let n = bvp.unknowns();
    let w = x[n - 1];
    let cand = Candidate {
        breakpoints: bvp.mesh.breakpoints(),
        table: &ws.table,
        degree: bvp.degree,
        dim: d,
        values: &x[..n - 1],
        period: w,
    };
    let mut r = Vec::with_capacity(n);
    let mut rhs = vec![0.0; d];
    let mut val = vec![0.0; d];
    let mut der = vec![0.0; d];
    for &z in &ws.colloc {
        let seg = CandidateSegment { candidate: &cand, t: z * w, gauss: &ws.gauss };
        bvp.problem.rhs(&seg, &mut rhs);
        cand.value(z, &mut val);
        cand.derivative(z, &mut der);
        for c in 0..d {
            r.push(match ws.blocks[c] {
                Block::Differential => der[c] - w * rhs[c],
                Block::Renewal => val[c] - rhs[c],
            });
        }
    }
    let last = (bvp.nodes() - 1) * d;
    for c in 0..d {
        r.push(x[last + c] - x[c]);
    }
    match &bvp.phase {
        PhaseCondition::Integral(_) => {
            let mut s = 0.0;
            for (u, wt, dq) in &ws.phase_points {
                cand.value(*u, &mut val);
                s += wt * val.iter().zip(dq).map(|(a, b)| a * b).sum::<f64>();
            }
            r.push(s);
        }
        PhaseCondition::FixedComponent { component, value } => r.push(x[*component] - value),
    }
    r
}

/// Collocation, periodicity and phase residuals of the candidate `x`
/// (nodal values followed by the period).
pub fn residual(bvp: &BvpProblem, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != bvp.unknowns() {
        return Err(Error::InvalidParameter(format!(
            "candidate has {} entries, expected {}",
            x.len(),
            bvp.unknowns()
        )));
    }
    if !(x[x.len() - 1] > 0.0) {
        return Err(Error::Domain("period must stay positive".into()));
    }
    Ok(residual_with(bvp, &Workspace::new(bvp), x))
}

/// Forward-difference Jacobian of the residual at `x`.
pub fn jacobian(bvp: &BvpProblem, x: &[f64], step: f64) -> Result<Mat<f64>> {
    let ws = Workspace::new(bvp);
    let r0 = residual(bvp, x)?;
    Ok(jacobian_with(bvp, &ws, x, &r0, step))
}

fn jacobian_with(bvp: &BvpProblem, ws: &Workspace, x: &[f64], r0: &[f64], step: f64) -> Mat<f64> {
    let n = x.len();
    let cols: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|j| {
            let mut xp = x.to_vec();
            let h = step * x[j].abs().max(1.0);
            xp[j] += h;
            let h = xp[j] - x[j];
            let rp = residual_with(bvp, ws, &xp);
            rp.iter().zip(r0).map(|(a, b)| (a - b) / h).collect()
        })
        .collect();
    Mat::from_fn(r0.len(), n, |i, j| cols[j][i])
}

/// Largest range of a component over the nodal values of `x`.
fn spread(bvp: &BvpProblem, x: &[f64]) -> f64 {
    let d = bvp.dim();
    (0..d)
        .map(|c| {
            let vals = x[..x.len() - 1].iter().skip(c).step_by(d);
            let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
            hi - lo
        })
        .fold(0.0, f64::max)
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |a, x| a.max(x.abs()))
}

/// Solve the periodic boundary value problem by damped Newton iteration.
pub fn solve_periodic(bvp: &BvpProblem, options: &BvpOptions) -> Result<BvpResult> {
    bvp.validate()?;
    let ws = Workspace::new(bvp);
    let mut x = bvp.pack(bvp.guess.as_ref());
    let mut r = residual_with(bvp, &ws, &x);
    let mut norm = inf_norm(&r);
    let mut iterations = 0;
    while !(norm <= options.tol) {
        if iterations == options.max_iters || !norm.is_finite() {
            return Err(Error::NoConvergence { iterations, residual: norm });
        }
        iterations += 1;
        let jac = jacobian_with(bvp, &ws, &x, &r, options.fd_step);
        let lu = jac.partial_piv_lu();
        let u = lu.U();
        let (mut lo, mut hi) = (f64::INFINITY, 0.0_f64);
        for i in 0..u.nrows() {
            lo = lo.min(u[(i, i)].abs());
            hi = hi.max(u[(i, i)].abs());
        }
        if !(lo > SINGULAR_PIVOT_RATIO * hi) {
            return Err(Error::SingularJacobian { iteration: iterations });
        }
        let rhs = Mat::from_fn(r.len(), 1, |i, _| r[i]);
        let delta = lu.solve(&rhs);
        let n = x.len();
        let mut lambda = 1.0;
        let mut halvings = 0;
        loop {
            let trial: Vec<f64> = (0..n).map(|i| x[i] - lambda * delta[(i, 0)]).collect();
            let ok_period = trial[n - 1] > 0.0;
            let tr = if ok_period { residual_with(bvp, &ws, &trial) } else { Vec::new() };
            let tn = if ok_period { inf_norm(&tr) } else { f64::INFINITY };
            if (tn < norm && tn.is_finite()) || (halvings == options.max_halvings && tn.is_finite()) {
                x = trial;
                r = tr;
                norm = tn;
                break;
            }
            if halvings == options.max_halvings {
                return Err(Error::NoConvergence { iterations, residual: norm });
            }
            lambda *= 0.5;
            halvings += 1;
        }
    }
    let guess_spread = spread(bvp, &bvp.pack(bvp.guess.as_ref()));
    if guess_spread > 1e-6 && spread(bvp, &x) < 1e-6 * guess_spread {
        return Err(Error::Collapsed { iterations });
    }
    let period = x[x.len() - 1];
    Ok(BvpResult { solution: bvp.unpack(&x)?, period, iterations, residual: norm, converged: true })
}

/// Periodic orbit of the delay logistic equation on a uniform `L`-piece mesh.
///
/// The orbit at `r ≤ 1.8` is found from a sinusoidal guess around the
/// equilibrium; larger `r` are reached by stepping `r` up by at most 0.05
/// from 1.8, seeding each solve with the previous orbit. Near the Hopf point
/// the branch is too steep for such steps, hence the late start.
pub fn logistic_orbit(r: f64, pieces: usize, degree: usize, options: &BvpOptions) -> Result<BvpResult> {
    if !(r > PI / 2.0) {
        return Err(Error::Domain(format!("no periodic orbit below the Hopf point r = π/2 (got {r})")));
    }
    let mesh = Mesh::uniform(0.0, 1.0, pieces)?;
    let start = r.min(1.8);
    let mut guess: Arc<dyn PeriodicOrbit> = Arc::new(logistic_guess(start));
    let mut rs = vec![start];
    if r > start {
        let steps = ((r - start) / 0.05 - 1e-9).ceil() as usize;
        rs.extend((1..=steps).map(|k| start + (r - start) * k as f64 / steps as f64));
        *rs.last_mut().unwrap() = r;
    }
    let mut result = None;
    for rk in rs {
        let bvp = BvpProblem::new(Arc::new(Logistic::new(rk)?), mesh.clone(), degree, guess.clone())?;
        let res = solve_periodic(&bvp, options)?;
        guess = Arc::new(res.solution.clone());
        result = Some(res);
    }
    Ok(result.expect("at least one step"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::QuadraticRe;

    struct Still;

    impl NonlinearProblem for Still {
        fn name(&self) -> &str {
            "still"
        }
        fn blocks(&self) -> Vec<Block> {
            vec![Block::Differential]
        }
        fn max_delay(&self) -> f64 {
            1.0
        }
        fn rhs(&self, _: &dyn StateSegment, out: &mut [f64]) {
            out[0] = 0.0;
        }
    }

    #[test]
    fn equilibrium_has_zero_collocation_residual() {
        let guess: Arc<dyn PeriodicOrbit> = Arc::new(crate::model::ClosedFormOrbit::new(1, 3.7, |_, o| o[0] = 1.0, |_, o| o[0] = 0.0));
        let bvp = BvpProblem::new(Arc::new(Logistic::new(1.6).unwrap()), Mesh::uniform(0.0, 1.0, 5).unwrap(), 3, guess.clone()).unwrap();
        let r = residual(&bvp, &bvp.pack(guess.as_ref())).unwrap();
        assert!(r.iter().all(|v| v.abs() < 1e-12), "{r:?}");
    }

    #[test]
    fn constant_problem_is_singular() {
        let guess: Arc<dyn PeriodicOrbit> = Arc::new(crate::model::ClosedFormOrbit::new(1, 2.0, |_, o| o[0] = 0.3, |_, o| o[0] = 0.0));
        let mut bvp = BvpProblem::new(Arc::new(Still), Mesh::uniform(0.0, 1.0, 4).unwrap(), 3, guess).unwrap();
        bvp.phase = PhaseCondition::Integral(Arc::new(logistic_guess(1.6)));
        // perturb so that the first residual is not already zero
        bvp.guess = Arc::new(crate::model::ClosedFormOrbit::new(1, 2.0, |t, o| o[0] = 0.3 + 0.1 * (PI * t).sin(), |t, o| o[0] = 0.1 * PI * (PI * t).cos()));
        assert!(matches!(solve_periodic(&bvp, &BvpOptions::default()), Err(Error::SingularJacobian { .. })));
    }

    #[test]
    fn quadratic_re_exact_is_fixed_point() {
        let q = QuadraticRe::new(4.0).unwrap();
        let exact: Arc<dyn PeriodicOrbit> = Arc::new(q.exact());
        let bvp = BvpProblem::new(Arc::new(q), Mesh::uniform(0.0, 1.0, 16).unwrap(), 8, exact.clone()).unwrap();
        let r = residual(&bvp, &bvp.pack(exact.as_ref())).unwrap();
        assert!(inf_norm(&r) < 1e-8, "{}", inf_norm(&r));
        let res = solve_periodic(&bvp, &BvpOptions::default()).unwrap();
        assert!(res.iterations <= 2);
        assert!((res.period - 4.0).abs() < 1e-8);
    }

    #[test]
    fn unpack_pack_round_trip() {
        let guess: Arc<dyn PeriodicOrbit> = Arc::new(logistic_guess(1.7));
        let bvp = BvpProblem::new(Arc::new(Logistic::new(1.7).unwrap()), Mesh::uniform(0.0, 1.0, 6).unwrap(), 4, guess.clone()).unwrap();
        let x = bvp.pack(guess.as_ref());
        let s = bvp.unpack(&x).unwrap();
        let y = bvp.pack(&s);
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).abs() < 1e-13);
        }
    }
}
