//! Worked examples for each module, checked against hand computations,
//! closed forms and independent oracles.

mod common;

use std::f64::consts::PI;
use std::sync::Arc;

use approx::assert_abs_diff_eq;
use nalgebra::DMatrix;
use num_complex::Complex64;

use pwfloquet::bvp::{logistic_orbit, residual, solve_periodic, BvpOptions, BvpProblem};
use pwfloquet::interp::{integral_weights, kernel_quadrature, prolong_eval, prolong_weights, restrict_scalar, Evaluation};
use pwfloquet::mesh::{build_forward_grid, build_history_grid, reference_nodes, CollocationGrid, Mesh, NodeFamily, NodeKind};
use pwfloquet::model::{
    linearize, plant_reference_solution, plant_v0, tent, zero_toy, Logistic, NonlinearProblem, PeriodicOrbit, PlantCoupled,
    PlantNeural, PlantParams, QuadraticRe,
};
use pwfloquet::monodromy::{assemble, eigenfunction, multipliers, AssembleOptions, Mode, MultiplierOptions};

fn mesh(bp: &[f64]) -> Mesh {
    Mesh::new(bp.to_vec()).unwrap()
}

fn cheb(m: usize) -> NodeFamily {
    NodeFamily::chebyshev(m).unwrap()
}

fn close(a: &[f64], b: &[f64], eps: f64) {
    assert_eq!(a.len(), b.len(), "{a:?} vs {b:?}");
    for (x, y) in a.iter().zip(b) {
        assert!((x - y).abs() <= eps, "{a:?} vs {b:?}");
    }
}

#[test]
fn reference_node_families() {
    assert_eq!(reference_nodes(NodeKind::ChebyshevExtrema, 1).unwrap().nodes, [0.0, 1.0]);
    assert_eq!(reference_nodes(NodeKind::ChebyshevExtrema, 2).unwrap().nodes, [0.0, 0.5, 1.0]);
    assert_eq!(reference_nodes(NodeKind::Uniform, 4).unwrap().nodes, [0.0, 0.25, 0.5, 0.75, 1.0]);
}

#[test]
fn forward_grids() {
    assert_eq!(build_forward_grid(&mesh(&[0.0, 2.0]), &cheb(2), 2.0).unwrap().nodes(), [0.0, 1.0, 2.0]);
    let g = build_forward_grid(&mesh(&[0.0, 1.0, 2.0]), &cheb(1), 2.0).unwrap();
    assert_eq!(g.nodes(), [0.0, 1.0, 2.0]);
    assert_eq!(g.pieces().len(), 2);
    close(build_forward_grid(&mesh(&[0.0, 0.5, 2.0]), &cheb(2), 2.0).unwrap().nodes(), &[0.0, 0.25, 0.5, 1.25, 2.0], 1e-15);
}

#[test]
fn history_grids() {
    let h = build_history_grid(&mesh(&[0.0, 1.0, 2.0]), &cheb(1), 2.0, 2.0).unwrap();
    assert_eq!(h.nodes(), [-2.0, -1.0, 0.0]);
    let h = build_history_grid(&mesh(&[0.0, 1.0, 2.0]), &cheb(2), 1.5, 2.0).unwrap();
    close(h.nodes(), &[-1.5, -1.25, -1.0, -0.5, 0.0], 1e-15);
    assert_eq!(h.pieces().len(), 2);
    let h = build_history_grid(&mesh(&[0.0, 1.0]), &cheb(1), 2.5, 1.0).unwrap();
    close(h.nodes(), &[-2.5, -2.0, -1.0, 0.0], 1e-15);
}

#[test]
fn mesh_ratio_and_refinement() {
    for l in 1..10 {
        assert_abs_diff_eq!(Mesh::uniform(0.0, 1.3, l).unwrap().ratio(), 1.0, epsilon = 1e-12);
    }
    assert_abs_diff_eq!(mesh(&[0.0, 0.1, 1.0]).ratio(), 9.0, epsilon = 1e-12);
    let rho = plant_reference_solution().unwrap().mesh().ratio();
    assert!((rho / 55.91 - 1.0).abs() < 0.01, "{rho}");
    assert_eq!(mesh(&[0.0, 1.0]).refine(0.5).unwrap().breakpoints(), [0.0, 0.5, 1.0]);
    close(mesh(&[0.0, 0.2, 1.0]).refine(0.4).unwrap().breakpoints(), &[0.0, 0.2, 0.6, 1.0], 1e-15);
    let m = mesh(&[0.0, 0.3, 0.5, 1.0]);
    assert_eq!(m.refine(0.5).unwrap(), m);
}

fn side(bp: &[f64], m: usize) -> Arc<pwfloquet::mesh::GridSide> {
    let mesh = mesh(bp);
    Arc::new(build_forward_grid(&mesh, &cheb(m), mesh.end()).unwrap())
}

#[test]
fn restriction_and_prolongation() {
    let s = side(&[0.0, 0.7, 2.0], 4);
    assert!(restrict_scalar(&s, |_| 1.0).values.iter().all(|v| *v == 1.0));
    assert_eq!(restrict_scalar(&side(&[0.0, 1.0, 2.0], 1), |t| t).values, [0.0, 1.0, 2.0]);
    let f = |t: f64| (PI * t / 2.0).sin();
    let v = restrict_scalar(&s, f);
    for (t, x) in s.nodes().iter().zip(&v.values) {
        assert_eq!(*x, f(*t));
    }

    let three = restrict_scalar(&s, |_| 3.0);
    for t in [0.0, 0.3, 1.1, 2.0] {
        assert_abs_diff_eq!(prolong_eval(&three, t).unwrap()[0], 3.0, epsilon = 1e-14);
    }
    let cube = restrict_scalar(&side(&[0.0, 1.0], 3), |t| t.powi(3));
    assert_abs_diff_eq!(prolong_eval(&cube, 0.37).unwrap()[0], 0.37f64.powi(3), epsilon = 1e-15);
    let kink = restrict_scalar(&side(&[0.0, 1.0, 2.0], 2), |t| (t - 1.0).abs());
    assert_eq!(prolong_eval(&kink, 0.5).unwrap()[0], 0.5);
}

#[test]
fn prolongation_weights() {
    let s = side(&[0.0, 0.5, 1.0], 3);
    for (k, t) in s.nodes().iter().enumerate() {
        let w = prolong_weights(&s, *t).unwrap();
        let nonzero: Vec<(usize, f64)> = w.iter().filter(|(_, v)| *v != 0.0).collect();
        assert_eq!(nonzero, [(k, 1.0)]);
    }
    let w = prolong_weights(&side(&[0.0, 2.0], 1), 1.0).unwrap();
    assert_eq!(w.iter().collect::<Vec<_>>(), [(0, 0.5), (1, 0.5)]);
    let w = prolong_weights(&side(&[0.0, 1.0], 2), 0.25).unwrap();
    close(&w.values, &[0.375, 0.75, -0.125], 1e-15);
}

#[test]
fn integration_weights() {
    let s = side(&[0.0, 0.3, 1.2, 2.0], 3);
    let ones = vec![1.0; s.len()];
    assert_abs_diff_eq!(integral_weights(&s, 2.0).unwrap().dot(&ones), 2.0, epsilon = 1e-13);
    let sigma: Vec<f64> = s.nodes().to_vec();
    assert_abs_diff_eq!(integral_weights(&s, 2.0).unwrap().dot(&sigma), 2.0, epsilon = 1e-13);
    let s = side(&[0.0, 1.0, 2.0], 2);
    let sq: Vec<f64> = s.nodes().iter().map(|t| t * t).collect();
    assert_abs_diff_eq!(integral_weights(&s, 1.5).unwrap().dot(&sq), 1.125, epsilon = 1e-14);
}

fn history_apply(kw: &pwfloquet::interp::KernelWeights, psi: &[f64]) -> f64 {
    (0..psi.len()).map(|j| kw.history[(0, j)] * psi[j]).sum()
}

#[test]
fn kernel_quadrature_examples() {
    let grid = CollocationGrid::new(&Mesh::uniform(0.0, 4.0, 4).unwrap(), &cheb(6), 3.0).unwrap();
    let id = |_: f64| DMatrix::from_element(1, 1, 1.0);
    let nodes = grid.history.nodes().to_vec();
    let kw = kernel_quadrature(&grid, 0.0, (-3.0, -1.0), 6, Evaluation::Direct, &id).unwrap();
    assert_abs_diff_eq!(history_apply(&kw, &vec![1.0; nodes.len()]), 2.0, epsilon = 1e-13);
    let kw = kernel_quadrature(&grid, 0.0, (-1.0, 0.0), 6, Evaluation::Direct, &id).unwrap();
    assert_abs_diff_eq!(history_apply(&kw, &nodes), -0.5, epsilon = 1e-13);

    // linearized quadratic RE kernel against v ≡ 1, checked by adaptive quadrature
    let p = QuadraticRe::new(4.0).unwrap();
    let orbit = p.exact_solution().unwrap();
    let eq = linearize(&p, orbit.clone()).unwrap();
    let term = &eq.distributed_terms()[0];
    let kernel = |theta: f64| (term.kernel)(0.0, theta);
    let kw = kernel_quadrature(&grid, 0.0, (-3.0, -1.0), 15, Evaluation::Direct, &kernel).unwrap();
    let got = history_apply(&kw, &vec![1.0; nodes.len()]);
    let want = common::adaptive_simpson(&|th: f64| 2.0 * (1.0 - 2.0 * orbit.component(0, th)), -3.0, -1.0, 1e-13);
    assert!((got - want).abs() <= 1e-10, "{got} vs {want}");
}

#[test]
fn linearization_coefficients() {
    let r = 1.6;
    let res = logistic_orbit(r, 20, 4, &BvpOptions::default()).unwrap();
    let y: Arc<dyn PeriodicOrbit> = Arc::new(res.solution);
    let eq = Logistic::new(r).unwrap().linearize(y.clone()).unwrap();
    let terms = eq.discrete_terms();
    for t in [0.1, 1.7, 3.3] {
        let now = terms.iter().find(|d| d.delay == 0.0).unwrap();
        let past = terms.iter().find(|d| d.delay == 1.0).unwrap();
        assert_abs_diff_eq!((now.coefficient)(t)[(0, 0)], r * (1.0 - y.component(0, t - 1.0)), epsilon = 1e-14);
        assert_abs_diff_eq!((past.coefficient)(t)[(0, 0)], -r * y.component(0, t), epsilon = 1e-14);
    }

    let p = PlantParams::default();
    let sol: Arc<dyn PeriodicOrbit> = Arc::new(plant_reference_solution().unwrap());
    let eq = PlantNeural::new(p).linearize(sol.clone()).unwrap();
    let now = eq.discrete_terms().iter().find(|d| d.delay == 0.0).unwrap();
    let lag = eq.discrete_terms().iter().find(|d| d.delay == p.tau).unwrap();
    let t = 12.3;
    let v = sol.component(0, t);
    let c = (now.coefficient)(t);
    close(c.as_slice(), DMatrix::from_row_slice(2, 2, &[1.0 - v * v, -1.0, p.r, -p.r * p.b]).as_slice(), 1e-14);
    close((lag.coefficient)(t).as_slice(), DMatrix::from_row_slice(2, 2, &[p.eta, 0.0, 0.0, 0.0]).as_slice(), 0.0);

    let q = QuadraticRe::new(4.0).unwrap();
    let x = q.exact_solution().unwrap();
    let eq = linearize(&q, x.clone()).unwrap();
    let term = &eq.distributed_terms()[0];
    assert_eq!((term.lower, term.upper), (-3.0, -1.0));
    for (t, th) in [(0.3, -2.2), (1.9, -1.1)] {
        assert_abs_diff_eq!((term.kernel)(t, th)[(0, 0)], 2.0 * (1.0 - 2.0 * x.component(0, t + th)), epsilon = 1e-14);
    }
}

#[test]
fn builtin_constants() {
    let q = QuadraticRe::new(4.0).unwrap();
    assert_abs_diff_eq!(q.mean(), 0.69635, epsilon = 5e-6);
    let x = q.exact_solution().unwrap();
    assert_eq!(x.period(), 4.0);
    let amp = (x.component(0, 1.0) - x.component(0, 3.0)) / 2.0;
    assert_abs_diff_eq!(amp, 0.27335, epsilon = 5e-6);
    assert_abs_diff_eq!(x.component(0, 1.0), 0.5 + PI / 16.0 + amp, epsilon = 1e-14);
    let tent = tent();
    let c = &tent.discrete_terms()[0].coefficient;
    assert_eq!((c(0.0)[(0, 0)], c(1.0)[(0, 0)]), (0.0, 1.0));
    assert!((plant_v0(0.7, 0.8).unwrap() + 1.1994).abs() < 5e-5);
}

#[test]
fn piecewise_solution_evaluation() {
    let s = plant_reference_solution().unwrap();
    let w = s.period();
    assert_eq!(s.eval(w), s.eval(0.0));
    let q = QuadraticRe::new(4.0).unwrap();
    let x = q.exact_solution().unwrap();
    let pw = pwfloquet::model::PiecewiseSolution::from_orbit(x.as_ref(), Mesh::uniform(0.0, 4.0, 8).unwrap(), NodeKind::Uniform, 6).unwrap();
    assert_eq!(pw.eval(4.0), pw.eval(0.0));
}

#[test]
fn zero_equation_is_exact() {
    let eq = zero_toy(2.0, 1.0).unwrap();
    for (l, m) in [(1, 3), (3, 5), (4, 9)] {
        let disc = assemble(&eq, &Mesh::uniform(0.0, 2.0, l).unwrap(), &cheb(m), &AssembleOptions::default()).unwrap();
        let psi: Vec<f64> = disc.grid.history.nodes().iter().map(|t| 2.0 + t).collect();
        assert!(disc.apply(&psi).iter().all(|v| *v == 2.0));
        let set = multipliers(&disc, Mode::Direct, &MultiplierOptions::default()).unwrap();
        assert_eq!(set.dominant().unwrap(), Complex64::new(1.0, 0.0));
    }
}

#[test]
fn tent_matches_method_of_steps_oracle() {
    let eq = tent();
    let set = multipliers(
        &assemble(&eq, &Mesh::uniform(0.0, 2.0, 2).unwrap(), &cheb(40), &AssembleOptions::default()).unwrap(),
        Mode::Direct,
        &MultiplierOptions::default(),
    )
    .unwrap();
    let oracle = common::tent_dominant(40);
    assert!((set.dominant().unwrap().re - oracle).abs() < 1e-11);
    assert!((oracle - 2.0133).abs() < 1e-3);
}

#[test]
fn trivial_eigenfunction_is_the_orbit_derivative() {
    let res = logistic_orbit(1.6, 40, 4, &BvpOptions::default()).unwrap();
    let y = res.solution.clone();
    let eq = linearize(&Logistic::new(1.6).unwrap(), Arc::new(y.clone())).unwrap();
    let disc = assemble(&eq, y.mesh(), &cheb(4), &AssembleOptions::default()).unwrap();
    let set = multipliers(&disc, Mode::Direct, &MultiplierOptions::default()).unwrap();
    let ef = eigenfunction(&disc, set.trivial.unwrap()).unwrap();
    assert!((ef.multiplier - 1.0).norm() < 1e-6);
    let dy: Vec<f64> = disc.grid.history.nodes().iter().map(|&t| y.derivative(t)[0]).collect();
    let dot: f64 = ef.real.values.iter().zip(&dy).map(|(a, b)| a * b).sum();
    let norms = ef.real.values.iter().map(|a| a * a).sum::<f64>().sqrt() * dy.iter().map(|b| b * b).sum::<f64>().sqrt();
    assert!((dot / norms).abs() > 0.999, "cosine {}", dot / norms);
    assert!(ef.imag.values.iter().all(|v| v.abs() < 1e-8));
}

#[test]
fn plant_oscillating_mode_lives_on_the_plateau() {
    let sol = plant_reference_solution().unwrap();
    let eq = linearize(&PlantNeural::new(PlantParams::default()), Arc::new(sol.clone())).unwrap();
    let refined = sol.mesh().refine(sol.mesh().max_width() / 10.0).unwrap();
    let disc = assemble(&eq, &refined, &cheb(5), &AssembleOptions::default()).unwrap();
    let set = multipliers(&disc, Mode::Direct, &MultiplierOptions::default()).unwrap();
    let target = Complex64::new(0.0612, 0.0594);
    let index = set.values.iter().position(|z| *z == set.closest(target).unwrap()).unwrap();
    let ef = eigenfunction(&disc, index).unwrap();
    assert!((ef.multiplier - target).norm() < 1e-3);
    // v component; split the history by how fast the orbit moves there
    let nodes = disc.grid.history.nodes();
    let (mut slow, mut fast) = (0.0_f64, 0.0_f64);
    for (k, &t) in nodes.iter().enumerate() {
        let amp = Complex64::new(ef.real.node(k)[0], ef.imag.node(k)[0]).norm();
        if sol.derivative(t)[0].abs() < 0.05 {
            slow = slow.max(amp);
        } else {
            fast = fast.max(amp);
        }
    }
    assert!(slow > fast, "plateau amplitude {slow} vs transition amplitude {fast}");
}

#[test]
fn coupled_plant_reproduces_the_dde_multipliers() {
    let sol = plant_reference_solution().unwrap();
    let mesh = sol.mesh().refine(sol.mesh().max_width() / 5.0).unwrap();
    let orbit: Arc<dyn PeriodicOrbit> = Arc::new(sol);
    let dde = linearize(&PlantNeural::new(PlantParams::default()), orbit.clone()).unwrap();
    let re = linearize(&PlantCoupled::new(PlantParams::default()), orbit).unwrap();
    let run = |eq| {
        let disc = assemble(eq, &mesh, &cheb(5), &AssembleOptions::default()).unwrap();
        multipliers(&disc, Mode::Direct, &MultiplierOptions::default()).unwrap()
    };
    let (a, b) = (run(&dde), run(&re));
    let target = Complex64::new(0.1444, 0.0382);
    let (x, y) = (a.closest(target).unwrap(), b.closest(target).unwrap());
    assert!((x - y).norm() < 1e-3, "{x} vs {y}");
    assert!(b.trivial_error().unwrap() < 1e-3);
}

#[test]
fn quadratic_bvp_from_exact_solution() {
    let q: Arc<dyn NonlinearProblem> = Arc::new(QuadraticRe::new(4.0).unwrap());
    let x = q.exact_solution().unwrap();
    let bvp = BvpProblem::new(q, Mesh::uniform(0.0, 1.0, 16).unwrap(), 8, x.clone()).unwrap();
    let r = residual(&bvp, &bvp.pack(x.as_ref())).unwrap();
    assert!(r.iter().all(|v| v.abs() <= 1e-8));
    let res = solve_periodic(&bvp, &BvpOptions::default()).unwrap();
    assert!(res.iterations <= 2);
    assert!((res.period - 4.0).abs() < 1e-8);
}

#[test]
fn logistic_bvp_gives_the_reported_multiplier() {
    let res = logistic_orbit(1.6, 40, 4, &BvpOptions::default()).unwrap();
    let eq = linearize(&Logistic::new(1.6).unwrap(), Arc::new(res.solution.clone())).unwrap();
    let disc = assemble(&eq, res.solution.mesh(), &cheb(4), &AssembleOptions::default()).unwrap();
    let set = multipliers(&disc, Mode::Direct, &MultiplierOptions::default()).unwrap();
    assert!((set.dominant_nontrivial().unwrap() - 0.8972).norm() < 2e-3);
}

#[test]
fn logistic_period_matches_simulation() {
    let r = 1.6;
    let res = logistic_orbit(r, 40, 4, &BvpOptions::default()).unwrap();
    // simulate u = y - 1: u' = -r (1 + u(t)) u(t - 1)
    let h = 1e-3;
    let mut xs: Vec<f64> = vec![0.3; 1001];
    for _ in 0..400_000 {
        let n = xs.len() - 1;
        let f = |x: f64, d: f64| r * x * (1.0 - d);
        let (d0, d1) = (xs[n - 1000], xs[n - 999]);
        let dm = 0.5 * (d0 + d1);
        let x = xs[n];
        let k1 = f(x, d0);
        let k2 = f(x + 0.5 * h * k1, dm);
        let k3 = f(x + 0.5 * h * k2, dm);
        let k4 = f(x + h * k3, d1);
        xs.push(x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
    }
    let ups: Vec<f64> = (1..xs.len())
        .filter(|&i| xs[i - 1] < 1.0 && xs[i] >= 1.0)
        .map(|i| (i - 1) as f64 + (1.0 - xs[i - 1]) / (xs[i] - xs[i - 1]))
        .collect();
    let k = ups.len();
    let period = (ups[k - 1] - ups[k - 2]) * h;
    assert!((period - res.period).abs() < 1e-4, "{period} vs {}", res.period);
}
