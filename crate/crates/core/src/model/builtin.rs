//! Benchmark problems: delay logistic equation, tent-coefficient DDE,
//! quadratic renewal equation, Plant's neural model and its coupled form.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::model::{
    Block, ClosedFormOrbit, LinearPeriodicEquation, NonlinearProblem, PeriodicOrbit, PiecewiseSolution,
    StateSegment,
};

const PLANT_MESH: &str = include_str!("../../data/plant_adapted.mesh");
const PLANT_SOLUTION: &str = include_str!("../../data/plant_solution.txt");

/// Strongly adapted 30-piece mesh of the Plant orbit at the default parameters.
pub fn plant_adapted_mesh() -> Result<Mesh> {
    Mesh::parse(PLANT_MESH)
}

/// Periodic orbit of the Plant model at the default parameters on
/// [`plant_adapted_mesh`], degree 5.
pub fn plant_reference_solution() -> Result<PiecewiseSolution> {
    PiecewiseSolution::parse(PLANT_SOLUTION)
}

/// Named real parameters with defaults supplied by each problem.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BuiltinParams(pub BTreeMap<String, f64>);

impl BuiltinParams {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: &str, value: f64) -> Self {
        self.0.insert(name.to_string(), value);
        self
    }

    pub fn get(&self, name: &str, default: f64) -> f64 {
        self.0.get(name).copied().unwrap_or(default)
    }

    fn check_known(&self, known: &[&str]) -> Result<()> {
        match self.0.keys().find(|k| !known.contains(&k.as_str())) {
            Some(k) => Err(Error::InvalidParameter(format!(
                "unknown parameter `{k}` (expected one of {known:?})"
            ))),
            None => Ok(()),
        }
    }
}

pub enum Builtin {
    Nonlinear(Arc<dyn NonlinearProblem>),
    Linear(LinearPeriodicEquation),
}

pub const BUILTIN_NAMES: &[&str] = &["logistic", "tent", "quadratic-re", "plant", "plant-coupled", "zero", "ode"];

pub fn builtin(name: &str, params: &BuiltinParams) -> Result<Builtin> {
    Ok(match name {
        "logistic" => {
            params.check_known(&["r"])?;
            Builtin::Nonlinear(Arc::new(Logistic::new(params.get("r", 1.6))?))
        }
        "tent" => {
            params.check_known(&[])?;
            Builtin::Linear(tent())
        }
        "quadratic-re" => {
            params.check_known(&["gamma"])?;
            Builtin::Nonlinear(Arc::new(QuadraticRe::new(params.get("gamma", 4.0))?))
        }
        "plant" | "plant-coupled" => {
            params.check_known(&["a", "b", "eta", "r", "tau"])?;
            let d = PlantParams::default();
            let p = PlantParams::new(
                params.get("a", d.a),
                params.get("b", d.b),
                params.get("eta", d.eta),
                params.get("r", d.r),
                params.get("tau", d.tau),
            )?;
            if name == "plant" {
                Builtin::Nonlinear(Arc::new(PlantNeural::new(p)))
            } else {
                Builtin::Nonlinear(Arc::new(PlantCoupled::new(p)))
            }
        }
        "zero" => {
            params.check_known(&["omega", "tau"])?;
            Builtin::Linear(zero_toy(params.get("omega", 1.0), params.get("tau", 1.0))?)
        }
        "ode" => {
            params.check_known(&["a", "omega", "tau"])?;
            Builtin::Linear(ode_toy(params.get("a", 1.0), params.get("omega", 1.0), params.get("tau", 1.0))?)
        }
        _ => {
            return Err(Error::InvalidParameter(format!(
                "unknown problem `{name}` (expected one of {BUILTIN_NAMES:?})"
            )))
        }
    })
}

fn scalar(v: f64) -> DMatrix<f64> {
    DMatrix::from_element(1, 1, v)
}

/// `x'(t) = (1 - |mod(t, 2) - 1|) x(t - 1)`, kinks at integer times.
pub fn tent() -> LinearPeriodicEquation {
    LinearPeriodicEquation::new(1, 0, 2.0, 1.0)
        .and_then(|eq| {
            eq.with_discrete(Block::Differential, Block::Differential, 1.0, |t| {
                scalar(1.0 - (t.rem_euclid(2.0) - 1.0).abs())
            })
        })
        .expect("tent equation is well formed")
        .with_breakpoints([0.0, 1.0])
}

/// `y'(t) = 0` with a nominal delay; every history is mapped to its value at 0.
pub fn zero_toy(omega: f64, tau: f64) -> Result<LinearPeriodicEquation> {
    LinearPeriodicEquation::new(1, 0, omega, tau)?.with_discrete(Block::Differential, Block::Differential, tau, |_| scalar(0.0))
}

/// `y'(t) = a y(t)`; the delay `τ` is present but carries no term.
pub fn ode_toy(a: f64, omega: f64, tau: f64) -> Result<LinearPeriodicEquation> {
    LinearPeriodicEquation::new(1, 0, omega, tau)?.with_discrete(Block::Differential, Block::Differential, 0.0, move |_| scalar(a))
}

/// `y'(t) = r y(t) (1 - y(t - 1))`.
#[derive(Clone, Debug)]
pub struct Logistic {
    pub r: f64,
}

impl Logistic {
    pub fn new(r: f64) -> Result<Self> {
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::InvalidParameter(format!("logistic rate must be positive, got {r}")));
        }
        Ok(Self { r })
    }
}

/// `1 + A sin(2π t / ω)`: the Hopf normal-form amplitude
/// `A = sqrt(40 (r - π/2) / (3π - 2))` and the Hopf period 4 stretched
/// slightly as `r` grows.
pub fn logistic_guess(r: f64) -> ClosedFormOrbit {
    let excess = (r - PI / 2.0).max(1e-3);
    let amp = (40.0 * excess / (3.0 * PI - 2.0)).sqrt().min(0.9);
    let omega = 4.0 + 2.0 * excess;
    let k = 2.0 * PI / omega;
    ClosedFormOrbit::new(
        1,
        omega,
        move |t, out| out[0] = 1.0 + amp * (k * t).sin(),
        move |t, out| out[0] = amp * k * (k * t).cos(),
    )
}

impl NonlinearProblem for Logistic {
    fn name(&self) -> &str {
        "logistic"
    }

    fn blocks(&self) -> Vec<Block> {
        vec![Block::Differential]
    }

    fn max_delay(&self) -> f64 {
        1.0
    }

    fn rhs(&self, segment: &dyn StateSegment, out: &mut [f64]) {
        let mut now = [0.0];
        let mut past = [0.0];
        segment.value(0.0, &mut now);
        segment.value(-1.0, &mut past);
        out[0] = self.r * now[0] * (1.0 - past[0]);
    }

    fn linearize(&self, orbit: Arc<dyn PeriodicOrbit>) -> Result<LinearPeriodicEquation> {
        let r = self.r;
        let (o1, o2) = (orbit.clone(), orbit.clone());
        LinearPeriodicEquation::new(1, 0, orbit.period(), 1.0)?
            .with_discrete(Block::Differential, Block::Differential, 0.0, move |t| {
                scalar(r * (1.0 - o1.component(0, t - 1.0)))
            })?
            .with_discrete(Block::Differential, Block::Differential, 1.0, move |t| {
                scalar(-r * o2.component(0, t))
            })
    }

    fn initial_guess(&self) -> Option<Arc<dyn PeriodicOrbit>> {
        Some(Arc::new(logistic_guess(self.r)))
    }
}

/// `x(t) = γ/2 ∫_{-3}^{-1} x(t+θ)(1 - x(t+θ)) dθ`.
#[derive(Clone, Debug)]
pub struct QuadraticRe {
    pub gamma: f64,
    mean: f64,
    amplitude: f64,
}

impl QuadraticRe {
    pub fn new(gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::InvalidParameter(format!("gamma must be positive, got {gamma}")));
        }
        let radicand = 0.5 - 1.0 / gamma - PI / (2.0 * gamma * gamma) * (1.0 + PI / 4.0);
        if radicand < 0.0 {
            return Err(Error::Domain(format!(
                "no periodic solution for gamma = {gamma}: amplitude radicand {radicand} is negative"
            )));
        }
        Ok(Self { gamma, mean: 0.5 + PI / (4.0 * gamma), amplitude: radicand.sqrt() })
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    /// The closed-form periodic solution, period 4.
    pub fn exact(&self) -> ClosedFormOrbit {
        let (c, a) = (self.mean, self.amplitude);
        ClosedFormOrbit::new(
            1,
            4.0,
            move |t, out| out[0] = c + a * (PI / 2.0 * t).sin(),
            move |t, out| out[0] = a * PI / 2.0 * (PI / 2.0 * t).cos(),
        )
    }
}

impl NonlinearProblem for QuadraticRe {
    fn name(&self) -> &str {
        "quadratic-re"
    }

    fn blocks(&self) -> Vec<Block> {
        vec![Block::Renewal]
    }

    fn max_delay(&self) -> f64 {
        3.0
    }

    fn rhs(&self, segment: &dyn StateSegment, out: &mut [f64]) {
        segment.integrate(-3.0, -1.0, &mut |_, x, o| o[0] = x[0] * (1.0 - x[0]), out);
        out[0] *= 0.5 * self.gamma;
    }

    fn linearize(&self, orbit: Arc<dyn PeriodicOrbit>) -> Result<LinearPeriodicEquation> {
        let g = self.gamma;
        LinearPeriodicEquation::new(0, 1, orbit.period(), 3.0)?.with_distributed(
            Block::Renewal,
            Block::Renewal,
            (-3.0, -1.0),
            move |t, theta| scalar(0.5 * g * (1.0 - 2.0 * orbit.component(0, t + theta))),
        )
    }

    fn exact_solution(&self) -> Option<Arc<dyn PeriodicOrbit>> {
        Some(Arc::new(self.exact()))
    }

    fn initial_guess(&self) -> Option<Arc<dyn PeriodicOrbit>> {
        self.exact_solution()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlantParams {
    pub a: f64,
    pub b: f64,
    pub eta: f64,
    pub r: f64,
    pub tau: f64,
    pub v0: f64,
}

impl Default for PlantParams {
    fn default() -> Self {
        Self::new(0.7, 0.8, -2.0, 0.08, 25.0).expect("default parameters are valid")
    }
}

impl PlantParams {
    pub fn new(a: f64, b: f64, eta: f64, r: f64, tau: f64) -> Result<Self> {
        if !(tau > 0.0) {
            return Err(Error::InvalidParameter(format!("tau must be positive, got {tau}")));
        }
        let v0 = plant_v0(a, b)?;
        Ok(Self { a, b, eta, r, tau, v0 })
    }

    pub fn is_default(&self) -> bool {
        *self == Self::default()
    }
}

/// Real root of `v - v³/3 - (v + a)/b`, unique for `a ≠ 0` and `0 < b ≤ 1`.
///
/// Safeguarded Newton started at -1: the root is first bracketed, and any
/// Newton step leaving the bracket is replaced by bisection.
pub fn plant_v0(a: f64, b: f64) -> Result<f64> {
    if !(b > 0.0 && b <= 1.0) || a == 0.0 {
        return Err(Error::InvalidParameter(format!(
            "v0 is unique only for a != 0 and 0 < b <= 1 (a = {a}, b = {b})"
        )));
    }
    let f = |v: f64| v - v * v * v / 3.0 - (v + a) / b;
    let df = |v: f64| 1.0 - v * v - 1.0 / b;
    // f is strictly decreasing, so the sign at -1 tells which way to search.
    let mut v = -1.0;
    let (mut lo, mut hi) = if f(v) > 0.0 { (v, v + 1.0) } else { (v - 1.0, v) };
    let mut width = 1.0;
    while f(lo) < 0.0 || f(hi) > 0.0 {
        width *= 2.0;
        if f(lo) < 0.0 {
            lo -= width;
        } else {
            hi += width;
        }
        if width > 1e6 {
            return Err(Error::Domain("could not bracket v0".into()));
        }
    }
    for _ in 0..200 {
        let fv = f(v);
        if fv == 0.0 {
            return Ok(v);
        }
        if fv > 0.0 {
            lo = v;
        } else {
            hi = v;
        }
        let mut next = v - fv / df(v);
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        let step = (next - v).abs();
        v = next;
        if step <= 1e-14 * v.abs().max(1.0) {
            return Ok(v);
        }
    }
    Err(Error::Domain("v0 iteration did not converge".into()))
}

/// Plant's model of recurrent neural feedback.
#[derive(Clone, Debug)]
pub struct PlantNeural {
    pub params: PlantParams,
}

impl PlantNeural {
    pub fn new(params: PlantParams) -> Self {
        Self { params }
    }
}

impl NonlinearProblem for PlantNeural {
    fn name(&self) -> &str {
        "plant"
    }

    fn blocks(&self) -> Vec<Block> {
        vec![Block::Differential, Block::Differential]
    }

    fn max_delay(&self) -> f64 {
        self.params.tau
    }

    fn rhs(&self, segment: &dyn StateSegment, out: &mut [f64]) {
        let p = &self.params;
        let mut now = [0.0; 2];
        let mut past = [0.0; 2];
        segment.value(0.0, &mut now);
        segment.value(-p.tau, &mut past);
        let (v, w) = (now[0], now[1]);
        out[0] = v - v * v * v / 3.0 - w + p.eta * (past[0] - p.v0);
        out[1] = p.r * (v + p.a - p.b * w);
    }

    fn linearize(&self, orbit: Arc<dyn PeriodicOrbit>) -> Result<LinearPeriodicEquation> {
        let p = self.params;
        LinearPeriodicEquation::new(2, 0, orbit.period(), p.tau)?
            .with_discrete(Block::Differential, Block::Differential, 0.0, move |t| {
                let v = orbit.component(0, t);
                DMatrix::from_row_slice(2, 2, &[1.0 - v * v, -1.0, p.r, -p.r * p.b])
            })?
            .with_discrete(Block::Differential, Block::Differential, p.tau, move |_| {
                DMatrix::from_row_slice(2, 2, &[p.eta, 0.0, 0.0, 0.0])
            })
    }

    fn initial_guess(&self) -> Option<Arc<dyn PeriodicOrbit>> {
        plant_guess(&self.params)
    }
}

fn plant_guess(p: &PlantParams) -> Option<Arc<dyn PeriodicOrbit>> {
    if !p.is_default() {
        return None;
    }
    plant_reference_solution().ok().map(|s| Arc::new(s) as Arc<dyn PeriodicOrbit>)
}

/// Plant's model with the `w` equation integrated over one delay interval,
/// giving a neutral renewal equation for `w`.
///
/// There is no convergence theory for the collocation of neutral renewal
/// equations; results are reported but not guaranteed.
#[derive(Clone, Debug)]
pub struct PlantCoupled {
    pub params: PlantParams,
}

impl PlantCoupled {
    pub fn new(params: PlantParams) -> Self {
        Self { params }
    }
}

impl NonlinearProblem for PlantCoupled {
    fn name(&self) -> &str {
        "plant-coupled"
    }

    fn blocks(&self) -> Vec<Block> {
        vec![Block::Differential, Block::Renewal]
    }

    fn max_delay(&self) -> f64 {
        self.params.tau
    }

    fn rhs(&self, segment: &dyn StateSegment, out: &mut [f64]) {
        let p = &self.params;
        let mut now = [0.0; 2];
        let mut past = [0.0; 2];
        segment.value(0.0, &mut now);
        segment.value(-p.tau, &mut past);
        let (v, w) = (now[0], now[1]);
        out[0] = v - v * v * v / 3.0 - w + p.eta * (past[0] - p.v0);
        let mut integral = [0.0];
        segment.integrate(-p.tau, 0.0, &mut |_, x, o| o[0] = p.r * (x[0] + p.a - p.b * x[1]), &mut integral);
        out[1] = past[1] + integral[0];
    }

    fn linearize(&self, orbit: Arc<dyn PeriodicOrbit>) -> Result<LinearPeriodicEquation> {
        let p = self.params;
        let window = (-p.tau, 0.0);
        LinearPeriodicEquation::new(1, 1, orbit.period(), p.tau)?
            .with_discrete(Block::Differential, Block::Differential, 0.0, move |t| {
                let v = orbit.component(0, t);
                scalar(1.0 - v * v)
            })?
            .with_discrete(Block::Differential, Block::Renewal, 0.0, |_| scalar(-1.0))?
            .with_discrete(Block::Differential, Block::Differential, p.tau, move |_| scalar(p.eta))?
            .with_discrete(Block::Renewal, Block::Renewal, p.tau, |_| scalar(1.0))?
            .with_distributed(Block::Renewal, Block::Differential, window, move |_, _| scalar(p.r))?
            .with_distributed(Block::Renewal, Block::Renewal, window, move |_, _| scalar(-p.r * p.b))
    }

    fn initial_guess(&self) -> Option<Arc<dyn PeriodicOrbit>> {
        plant_guess(&self.params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn quadratic_re_constants() {
        let q = QuadraticRe::new(4.0).unwrap();
        assert_relative_eq!(q.amplitude(), 0.27335, epsilon = 5e-6);
        assert_relative_eq!(q.mean(), 0.69635, epsilon = 5e-6);
        let x = q.exact();
        assert_eq!(x.period(), 4.0);
        assert_relative_eq!(x.eval(1.0)[0], 0.5 + PI / 16.0 + q.amplitude(), epsilon = 1e-15);
    }

    #[test]
    fn quadratic_re_rejects_small_gamma() {
        assert!(matches!(QuadraticRe::new(2.0), Err(Error::Domain(_))));
    }

    #[test]
    fn tent_coefficient() {
        let eq = tent();
        let c = &eq.discrete_terms()[0].coefficient;
        assert_eq!(c(0.0)[(0, 0)], 0.0);
        assert_eq!(c(1.0)[(0, 0)], 1.0);
        assert_eq!(c(2.5)[(0, 0)], 0.5);
        assert_eq!(eq.breakpoints(), &[0.0, 1.0]);
        eq.check_periodicity(50, 1e-12).unwrap();
    }

    #[test]
    fn plant_v0_root() {
        let v0 = plant_v0(0.7, 0.8).unwrap();
        assert!((v0 + 1.1994).abs() < 5e-5);
        let res = v0 - v0.powi(3) / 3.0 - (v0 + 0.7) / 0.8;
        assert!(res.abs() <= 1e-12);
        for (a, b) in [(0.3, 1.0), (-0.5, 0.4), (2.0, 0.9), (-3.0, 0.1)] {
            let v = plant_v0(a, b).unwrap();
            assert!((v - v.powi(3) / 3.0 - (v + a) / b).abs() <= 1e-12, "a={a} b={b}");
        }
        assert!(plant_v0(0.0, 0.8).is_err());
        assert!(plant_v0(0.7, 1.5).is_err());
    }

    #[test]
    fn unknown_names_and_params() {
        assert!(builtin("nope", &BuiltinParams::new()).is_err());
        assert!(builtin("logistic", &BuiltinParams::new().with("gamma", 1.0)).is_err());
        assert!(matches!(builtin("tent", &BuiltinParams::new()), Ok(Builtin::Linear(_))));
    }
}
