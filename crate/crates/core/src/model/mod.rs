//! Linear periodic delay equations, nonlinear problems and periodic orbits.
//!
//! Components of a state are ordered with the differential block first and
//! the renewal block second. Coefficients are callbacks so the monodromy
//! discretization can sample them on a grid unrelated to the one the
//! periodic solution was computed on.

mod builtin;
mod solution;

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::quadrature::gauss_legendre;

pub use builtin::{
    builtin, logistic_guess, BUILTIN_NAMES, ode_toy, plant_adapted_mesh, plant_reference_solution, plant_v0, tent, zero_toy, Builtin, BuiltinParams, Logistic,
    PlantCoupled, PlantNeural, PlantParams, QuadraticRe,
};
pub use solution::PiecewiseSolution;

/// Which block of a coupled system a component belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Block {
    /// `y'(t) = ...`
    Differential,
    /// `x(t) = ...`
    Renewal,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EquationKind {
    Dde,
    Re,
    Coupled,
}

pub type CoefficientFn = Arc<dyn Fn(f64) -> DMatrix<f64> + Send + Sync>;
pub type KernelFn = Arc<dyn Fn(f64, f64) -> DMatrix<f64> + Send + Sync>;

/// `coefficient(t) · v_source(t - delay)` contributing to the target block.
#[derive(Clone)]
pub struct DiscreteTerm {
    pub target: Block,
    pub source: Block,
    pub delay: f64,
    pub coefficient: CoefficientFn,
}

/// `∫_lower^upper kernel(t, θ) · v_source(t + θ) dθ` contributing to the target block.
#[derive(Clone)]
pub struct DistributedTerm {
    pub target: Block,
    pub source: Block,
    pub lower: f64,
    pub upper: f64,
    pub kernel: KernelFn,
}

/// A linear `ω`-periodic delay equation with discrete and distributed delays.
#[derive(Clone)]
pub struct LinearPeriodicEquation {
    dim_differential: usize,
    dim_renewal: usize,
    period: f64,
    max_delay: f64,
    discrete: Vec<DiscreteTerm>,
    distributed: Vec<DistributedTerm>,
    breakpoints: Vec<f64>,
    has_trivial: bool,
}

impl std::fmt::Debug for LinearPeriodicEquation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LinearPeriodicEquation")
            .field("kind", &self.kind())
            .field("dim_differential", &self.dim_differential)
            .field("dim_renewal", &self.dim_renewal)
            .field("period", &self.period)
            .field("max_delay", &self.max_delay)
            .field("discrete_terms", &self.discrete.len())
            .field("distributed_terms", &self.distributed.len())
            .field("breakpoints", &self.breakpoints)
            .finish()
    }
}

impl LinearPeriodicEquation {
    pub fn new(dim_differential: usize, dim_renewal: usize, period: f64, max_delay: f64) -> Result<Self> {
        if dim_differential + dim_renewal == 0 {
            return Err(Error::InvalidParameter("equation has no components".into()));
        }
        if !(period > 0.0 && period.is_finite()) {
            return Err(Error::InvalidParameter(format!("period must be positive, got {period}")));
        }
        if !(max_delay > 0.0 && max_delay.is_finite()) {
            return Err(Error::InvalidParameter(format!("max delay must be positive, got {max_delay}")));
        }
        Ok(Self {
            dim_differential,
            dim_renewal,
            period,
            max_delay,
            discrete: Vec::new(),
            distributed: Vec::new(),
            breakpoints: vec![0.0],
            has_trivial: false,
        })
    }

    fn check_shape(&self, target: Block, source: Block, m: &DMatrix<f64>) -> Result<()> {
        let (r, c) = (self.block_dim(target), self.block_dim(source));
        if r == 0 || c == 0 {
            return Err(Error::InvalidParameter(format!(
                "term couples {target:?} <- {source:?} but one block is empty"
            )));
        }
        if m.shape() != (r, c) {
            return Err(Error::InvalidParameter(format!(
                "coefficient has shape {:?}, expected ({r}, {c})",
                m.shape()
            )));
        }
        Ok(())
    }

    pub fn with_discrete(
        mut self,
        target: Block,
        source: Block,
        delay: f64,
        coefficient: impl Fn(f64) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Result<Self> {
        if !(0.0..=self.max_delay).contains(&delay) {
            return Err(Error::InvalidParameter(format!(
                "delay {delay} outside [0, {}]",
                self.max_delay
            )));
        }
        self.check_shape(target, source, &coefficient(0.0))?;
        self.discrete.push(DiscreteTerm { target, source, delay, coefficient: Arc::new(coefficient) });
        Ok(self)
    }

    pub fn with_distributed(
        mut self,
        target: Block,
        source: Block,
        bounds: (f64, f64),
        kernel: impl Fn(f64, f64) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Result<Self> {
        let (lower, upper) = bounds;
        if !(lower < upper) || lower < -self.max_delay || upper > 0.0 {
            return Err(Error::InvalidParameter(format!(
                "integration window [{lower}, {upper}] not an ordered subset of [-{}, 0]",
                self.max_delay
            )));
        }
        self.check_shape(target, source, &kernel(0.0, lower))?;
        self.distributed.push(DistributedTerm { target, source, lower, upper, kernel: Arc::new(kernel) });
        Ok(self)
    }

    /// Add points of `[0, ω)` (reduced modulo `ω`) where coefficients may be non-smooth.
    pub fn with_breakpoints(mut self, points: impl IntoIterator<Item = f64>) -> Self {
        let omega = self.period;
        self.breakpoints.extend(points.into_iter().map(|p| {
            let r = p.rem_euclid(omega);
            if r >= omega {
                0.0
            } else {
                r
            }
        }));
        self.breakpoints.sort_by(f64::total_cmp);
        self.breakpoints.dedup();
        self
    }

    /// Mark the equation as a linearization around a periodic orbit, so that
    /// its spectrum carries the trivial multiplier 1.
    pub fn with_trivial(mut self, has_trivial: bool) -> Self {
        self.has_trivial = has_trivial;
        self
    }

    pub fn kind(&self) -> EquationKind {
        match (self.dim_differential, self.dim_renewal) {
            (_, 0) => EquationKind::Dde,
            (0, _) => EquationKind::Re,
            _ => EquationKind::Coupled,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim_differential + self.dim_renewal
    }

    pub fn dim_differential(&self) -> usize {
        self.dim_differential
    }

    pub fn dim_renewal(&self) -> usize {
        self.dim_renewal
    }

    pub fn block_dim(&self, block: Block) -> usize {
        match block {
            Block::Differential => self.dim_differential,
            Block::Renewal => self.dim_renewal,
        }
    }

    /// First component index of a block.
    pub fn block_offset(&self, block: Block) -> usize {
        match block {
            Block::Differential => 0,
            Block::Renewal => self.dim_differential,
        }
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn max_delay(&self) -> f64 {
        self.max_delay
    }

    pub fn discrete_terms(&self) -> &[DiscreteTerm] {
        &self.discrete
    }

    pub fn distributed_terms(&self) -> &[DistributedTerm] {
        &self.distributed
    }

    /// Smoothness breakpoints in `[0, ω)`; always contains 0.
    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn has_trivial(&self) -> bool {
        self.has_trivial
    }

    /// Spot-check `ω`-periodicity of every coefficient at `samples` points.
    pub fn check_periodicity(&self, samples: usize, tol: f64) -> Result<()> {
        let omega = self.period;
        for k in 0..samples {
            // low-discrepancy points spread over [-ω, 2ω]
            let t = ((k as f64 + 0.5) * 0.618_033_988_749_894_8).fract() * 3.0 * omega - omega;
            for term in &self.discrete {
                let diff = ((term.coefficient)(t) - (term.coefficient)(t + omega)).amax();
                if diff > tol {
                    return Err(Error::Domain(format!("coefficient not periodic at t = {t} (diff {diff:e})")));
                }
            }
            for term in &self.distributed {
                let theta = term.lower + (term.upper - term.lower) * ((k as f64) * 0.754_877_666).fract();
                let diff = ((term.kernel)(t, theta) - (term.kernel)(t + omega, theta)).amax();
                if diff > tol {
                    return Err(Error::Domain(format!("kernel not periodic at t = {t} (diff {diff:e})")));
                }
            }
        }
        Ok(())
    }
}

/// A periodic function of time, such as a computed or closed-form orbit.
///
/// Implementations must be pure and re-entrant.
pub trait PeriodicOrbit: Send + Sync {
    fn dim(&self) -> usize;

    fn period(&self) -> f64;

    fn eval_into(&self, t: f64, out: &mut [f64]);

    fn derivative_into(&self, t: f64, out: &mut [f64]);

    /// Points of `[0, ω)` where the orbit may fail to be smooth.
    fn breakpoints(&self) -> Vec<f64> {
        Vec::new()
    }

    fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.eval_into(t, &mut out);
        out
    }

    fn derivative(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.derivative_into(t, &mut out);
        out
    }

    fn component(&self, c: usize, t: f64) -> f64 {
        self.eval(t)[c]
    }
}

type OrbitFn = Arc<dyn Fn(f64, &mut [f64]) + Send + Sync>;

/// An orbit given by closed-form callbacks.
#[derive(Clone)]
pub struct ClosedFormOrbit {
    dim: usize,
    period: f64,
    value: OrbitFn,
    derivative: OrbitFn,
}

impl ClosedFormOrbit {
    pub fn new(
        dim: usize,
        period: f64,
        value: impl Fn(f64, &mut [f64]) + Send + Sync + 'static,
        derivative: impl Fn(f64, &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        Self { dim, period, value: Arc::new(value), derivative: Arc::new(derivative) }
    }
}

impl PeriodicOrbit for ClosedFormOrbit {
    fn dim(&self) -> usize {
        self.dim
    }

    fn period(&self) -> f64 {
        self.period
    }

    fn eval_into(&self, t: f64, out: &mut [f64]) {
        (self.value)(t, out)
    }

    fn derivative_into(&self, t: f64, out: &mut [f64]) {
        (self.derivative)(t, out)
    }
}

/// Integrand callback: `(θ, state at t + θ, output)`.
pub type Integrand<'a> = dyn FnMut(f64, &[f64], &mut [f64]) + 'a;

/// The history segment `θ ↦ x(t + θ)` seen by a right-hand side.
pub trait StateSegment {
    fn dim(&self) -> usize;

    fn value(&self, theta: f64, out: &mut [f64]);

    /// `out = ∫_lower^upper integrand(θ, x(t + θ)) dθ`.
    fn integrate(&self, lower: f64, upper: f64, integrand: &mut Integrand<'_>, out: &mut [f64]);
}

/// A nonlinear autonomous delay equation `y' = G(y_t)` / `x = F(x_t)`.
pub trait NonlinearProblem: Send + Sync {
    fn name(&self) -> &str;

    /// Block of each component; differential components come first.
    fn blocks(&self) -> Vec<Block>;

    fn max_delay(&self) -> f64;

    /// `G` for differential components, `F` for renewal ones.
    fn rhs(&self, segment: &dyn StateSegment, out: &mut [f64]);

    /// Coefficients of the Fréchet derivative along `orbit`.
    fn linearize(&self, _orbit: Arc<dyn PeriodicOrbit>) -> Result<LinearPeriodicEquation> {
        Err(Error::MissingDerivative(self.name().to_string()))
    }

    fn exact_solution(&self) -> Option<Arc<dyn PeriodicOrbit>> {
        None
    }

    /// Heuristic initial guess for the periodic boundary value problem.
    fn initial_guess(&self) -> Option<Arc<dyn PeriodicOrbit>> {
        None
    }

    fn dim(&self) -> usize {
        self.blocks().len()
    }
}

/// Linear equation along `orbit`; the orbit's breakpoints become smoothness
/// breakpoints and the trivial multiplier is expected.
pub fn linearize(problem: &dyn NonlinearProblem, orbit: Arc<dyn PeriodicOrbit>) -> Result<LinearPeriodicEquation> {
    let extra = orbit.breakpoints();
    Ok(problem.linearize(orbit)?.with_breakpoints(extra).with_trivial(true))
}

/// Segment of a periodic orbit ending at time `t`.
pub struct OrbitSegment<'a> {
    pub orbit: &'a dyn PeriodicOrbit,
    pub t: f64,
}

impl StateSegment for OrbitSegment<'_> {
    fn dim(&self) -> usize {
        self.orbit.dim()
    }

    fn value(&self, theta: f64, out: &mut [f64]) {
        self.orbit.eval_into(self.t + theta, out)
    }

    fn integrate(&self, lower: f64, upper: f64, integrand: &mut Integrand<'_>, out: &mut [f64]) {
        let omega = self.orbit.period();
        let mut cuts = vec![lower, upper];
        let bps = self.orbit.breakpoints();
        if !bps.is_empty() {
            let k0 = ((self.t + lower) / omega).floor() as i64 - 1;
            let k1 = ((self.t + upper) / omega).ceil() as i64 + 1;
            for k in k0..=k1 {
                for b in &bps {
                    let theta = b + k as f64 * omega - self.t;
                    if theta > lower && theta < upper {
                        cuts.push(theta);
                    }
                }
            }
        }
        cuts.sort_by(f64::total_cmp);
        let panel = omega / 16.0;
        let (gx, gw) = gauss_legendre(12);
        out.fill(0.0);
        let d = self.orbit.dim();
        let mut state = vec![0.0; d];
        let mut buf = vec![0.0; out.len()];
        for w in cuts.windows(2) {
            let n = ((w[1] - w[0]) / panel).ceil().max(1.0) as usize;
            let h = (w[1] - w[0]) / n as f64;
            for p in 0..n {
                let a = w[0] + p as f64 * h;
                for (x, wt) in gx.iter().zip(&gw) {
                    let theta = a + h * x;
                    self.orbit.eval_into(self.t + theta, &mut state);
                    integrand(theta, &state, &mut buf);
                    for (o, b) in out.iter_mut().zip(&buf) {
                        *o += h * wt * b;
                    }
                }
            }
        }
    }
}
