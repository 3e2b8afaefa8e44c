//! Regenerates the shipped Plant reference data (`data/plant_adapted.mesh`
//! and `data/plant_solution.txt`).
//!
//! 1. Simulate the DDE with RK4 until the orbit settles and read off the period.
//! 2. Solve the periodic BVP on a fine uniform mesh from that guess.
//! 3. Equidistribute `(α + |x⁽⁶⁾|)^(1/6)` over 30 pieces, the sixth derivative
//!    estimated from jumps of the fifth between neighbouring pieces; `α` is
//!    tuned so the mesh ratio matches the target.
//! 4. Solve again on the adapted mesh with degree 5 and write both files.
//!
//! Usage: `cargo run --release --example plant_reference [out-dir] [target-ratio]`

use std::path::PathBuf;
use std::sync::Arc;

use pwfloquet::bvp::{solve_periodic, BvpOptions, BvpProblem};
use pwfloquet::mesh::{Mesh, NodeKind};
use pwfloquet::model::{NonlinearProblem, PeriodicOrbit, PiecewiseSolution, PlantNeural, PlantParams};

const PIECES: usize = 30;
const DEGREE: usize = 5;

fn simulate(p: &PlantParams) -> (f64, Vec<[f64; 2]>, f64) {
    let h = 0.01;
    let lag = (p.tau / h).round() as usize;
    let total = 200_000;
    let w0 = (p.v0 + p.a) / p.b;
    let mut xs: Vec<[f64; 2]> = vec![[p.v0 + 0.5, w0]; lag + 1];
    let f = |x: [f64; 2], vd: f64| {
        [
            x[0] - x[0].powi(3) / 3.0 - x[1] + p.eta * (vd - p.v0),
            p.r * (x[0] + p.a - p.b * x[1]),
        ]
    };
    for _ in 0..total {
        let n = xs.len() - 1;
        let x = xs[n];
        let (d0, d1) = (xs[n - lag][0], xs[n + 1 - lag][0]);
        let dm = 0.5 * (d0 + d1);
        let k1 = f(x, d0);
        let k2 = f([x[0] + 0.5 * h * k1[0], x[1] + 0.5 * h * k1[1]], dm);
        let k3 = f([x[0] + 0.5 * h * k2[0], x[1] + 0.5 * h * k2[1]], dm);
        let k4 = f([x[0] + h * k3[0], x[1] + h * k3[1]], d1);
        xs.push([
            x[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
            x[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
        ]);
    }
    // upward crossings of v = 0
    let crossings: Vec<f64> = (1..xs.len())
        .filter(|&i| xs[i - 1][0] < 0.0 && xs[i][0] >= 0.0)
        .map(|i| (i - 1) as f64 + xs[i - 1][0] / (xs[i - 1][0] - xs[i][0]))
        .collect();
    let k = crossings.len();
    let omega = (crossings[k - 1] - crossings[k - 2]) * h;
    (omega, xs, crossings[k - 2] * h)
}

/// Fifth derivative on each piece of a degree-5 uniform-node solution.
fn fifth_derivatives(s: &PiecewiseSolution, c: usize) -> Vec<f64> {
    let binom = [1.0, 5.0, 10.0, 10.0, 5.0, 1.0];
    (0..s.mesh().pieces())
        .map(|i| {
            let y = s.piece_values(i, c);
            let diff: f64 = (0..=5).map(|j| if (5 - j) % 2 == 0 { 1.0 } else { -1.0 } * binom[j] * y[j]).sum();
            let step = s.mesh().width(i) / 5.0;
            diff / step.powi(5)
        })
        .collect()
}

fn monitor(s: &PiecewiseSolution) -> Vec<f64> {
    let l = s.mesh().pieces();
    let d5: Vec<Vec<f64>> = (0..2).map(|c| fifth_derivatives(s, c)).collect();
    let mid: Vec<f64> = s.mesh().breakpoints().windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    let omega = s.mesh().end();
    // sixth derivative at each breakpoint from the jump of the fifth
    let at_bp: Vec<f64> = (0..l)
        .map(|i| {
            let prev = (i + l - 1) % l;
            let dist = (mid[i] - mid[prev]).rem_euclid(omega);
            (0..2).map(|c| (d5[c][i] - d5[c][prev]).abs() / dist).fold(0.0, f64::max)
        })
        .collect();
    (0..l).map(|i| 0.5 * (at_bp[i] + at_bp[(i + 1) % l])).collect()
}

fn equidistribute(mesh: &Mesh, m6: &[f64], alpha: f64, pieces: usize) -> Mesh {
    let dens: Vec<f64> = m6.iter().map(|v| (alpha + v).powf(1.0 / 6.0)).collect();
    let mut cum = vec![0.0];
    for (i, h) in mesh.widths().enumerate() {
        cum.push(cum[i] + dens[i] * h);
    }
    let total = *cum.last().unwrap();
    let bp = mesh.breakpoints();
    let mut out = vec![0.0];
    let mut j = 0;
    for k in 1..pieces {
        let target = total * k as f64 / pieces as f64;
        while cum[j + 1] < target {
            j += 1;
        }
        out.push(bp[j] + (target - cum[j]) / dens[j]);
    }
    out.push(mesh.end());
    Mesh::new(out).expect("equidistributed mesh is increasing")
}

fn solve(problem: &Arc<dyn NonlinearProblem>, unit: Mesh, guess: Arc<dyn PeriodicOrbit>) -> PiecewiseSolution {
    let bvp = BvpProblem::new(problem.clone(), unit, DEGREE, guess).expect("valid BVP");
    let res = solve_periodic(&bvp, &BvpOptions::default()).expect("BVP converges");
    eprintln!("  ω = {:.10}, {} iterations, residual {:.2e}", res.period, res.iterations, res.residual);
    res.solution
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let out_dir = PathBuf::from(args.get(1).cloned().unwrap_or_else(|| "crates/core/data".into()));
    let target: f64 = args.get(2).map(|s| s.parse().expect("ratio")).unwrap_or(55.91);

    let params = PlantParams::default();
    let problem: Arc<dyn NonlinearProblem> = Arc::new(PlantNeural::new(params));
    let (omega, xs, start) = simulate(&params);
    eprintln!("simulated period {omega:.6}, v0 = {:.6}", params.v0);

    let h = 0.01;
    let sample = move |t: f64, out: &mut [f64]| {
        let s = (start + t) / h;
        let i = s.floor() as usize;
        let f = s - i as f64;
        for c in 0..2 {
            out[c] = (1.0 - f) * xs[i][c] + f * xs[i + 1][c];
        }
    };
    let guess = PiecewiseSolution::from_fn(Mesh::uniform(0.0, omega, 400).unwrap(), 2, NodeKind::Uniform, 3, sample).unwrap();

    eprintln!("fine solve");
    let fine = solve(&problem, Mesh::uniform(0.0, 1.0, 300).unwrap(), Arc::new(guess));
    let m6 = monitor(&fine);

    // ratio falls as α grows: bisect on log α
    let (mut lo, mut hi) = (-12.0_f64, 6.0_f64);
    let mut mesh = equidistribute(fine.mesh(), &m6, 10f64.powf(lo), PIECES);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        mesh = equidistribute(fine.mesh(), &m6, 10f64.powf(mid), PIECES);
        if mesh.ratio() > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if (mesh.ratio() / target - 1.0).abs() < 1e-4 {
            break;
        }
    }
    eprintln!("adapted mesh: ratio {:.4}", mesh.ratio());

    eprintln!("adapted solve");
    let fine: Arc<dyn PeriodicOrbit> = Arc::new(fine);
    let adapted = solve(&problem, mesh.mapped(0.0, 1.0).unwrap(), fine);
    eprintln!("solution ratio {:.4}, continuity defect {:.2e}", adapted.ratio(), adapted.continuity_defect());

    adapted.mesh().write(out_dir.join("plant_adapted.mesh")).unwrap();
    adapted.write(out_dir.join("plant_solution.txt")).unwrap();
    eprintln!("wrote {}", out_dir.display());
}
