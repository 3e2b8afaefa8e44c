use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::interp::bary_table;
use crate::mesh::{Mesh, NodeKind};
use crate::model::PeriodicOrbit;

/// Continuous piecewise polynomial periodic function over `[0, ω]`.
///
/// Each piece stores the values of every component at the `m + 1` reference
/// nodes of its node kind; shared breakpoints are stored on both sides.
#[derive(Clone, Debug, PartialEq)]
pub struct PiecewiseSolution {
    mesh: Mesh,
    dim: usize,
    degree: usize,
    kind: NodeKind,
    /// `values[(piece * dim + component) * (degree + 1) + j]`
    values: Vec<f64>,
}

const CONTINUITY_TOL: f64 = 1e-10;

impl PiecewiseSolution {
    pub fn new(mesh: Mesh, dim: usize, kind: NodeKind, degree: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 || degree == 0 {
            return Err(Error::InvalidParameter("solution needs dim >= 1 and degree >= 1".into()));
        }
        if mesh.start() != 0.0 {
            return Err(Error::InvalidMesh(format!("solution mesh must start at 0, got {}", mesh.start())));
        }
        let expected = mesh.pieces() * dim * (degree + 1);
        if values.len() != expected {
            return Err(Error::InvalidParameter(format!(
                "expected {expected} nodal values, got {}",
                values.len()
            )));
        }
        Ok(Self { mesh, dim, degree, kind, values })
    }

    /// Sample `f` at the representation nodes of every piece.
    pub fn from_fn(mesh: Mesh, dim: usize, kind: NodeKind, degree: usize, mut f: impl FnMut(f64, &mut [f64])) -> Result<Self> {
        let table = bary_table(kind, degree.max(1));
        let mut values = vec![0.0; mesh.pieces() * dim * (degree + 1)];
        let mut buf = vec![0.0; dim];
        let bp = mesh.breakpoints();
        for i in 0..mesh.pieces() {
            let h = bp[i + 1] - bp[i];
            for (j, &c) in table.nodes().iter().enumerate() {
                let t = if j == degree { bp[i + 1] } else { bp[i] + h * c };
                f(t, &mut buf);
                for c in 0..dim {
                    values[(i * dim + c) * (degree + 1) + j] = buf[c];
                }
            }
        }
        Self::new(mesh, dim, kind, degree, values)
    }

    /// Sample a periodic orbit on `mesh`, which must span one period.
    pub fn from_orbit(orbit: &dyn PeriodicOrbit, mesh: Mesh, kind: NodeKind, degree: usize) -> Result<Self> {
        if (mesh.end() - orbit.period()).abs() > 1e-12 * orbit.period().max(1.0) {
            return Err(Error::InvalidMesh(format!(
                "mesh ends at {} but the period is {}",
                mesh.end(),
                orbit.period()
            )));
        }
        Self::from_fn(mesh, orbit.dim(), kind, degree, |t, out| orbit.eval_into(t, out))
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn node_kind(&self) -> NodeKind {
        self.kind
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn ratio(&self) -> f64 {
        self.mesh.ratio()
    }

    /// Nodal values of component `c` on piece `i`.
    pub fn piece_values(&self, i: usize, c: usize) -> &[f64] {
        let m1 = self.degree + 1;
        let start = (i * self.dim + c) * m1;
        &self.values[start..start + m1]
    }

    /// Largest jump across breakpoints, including the wrap from `ω` to 0,
    /// relative to the largest nodal magnitude.
    pub fn continuity_defect(&self) -> f64 {
        let l = self.mesh.pieces();
        let scale = self.values.iter().fold(1.0_f64, |a, v| a.max(v.abs()));
        let mut worst = 0.0_f64;
        for i in 0..l {
            let next = (i + 1) % l;
            for c in 0..self.dim {
                let left = self.piece_values(i, c)[self.degree];
                let right = self.piece_values(next, c)[0];
                worst = worst.max((left - right).abs());
            }
        }
        worst / scale
    }

    pub fn check_continuity(&self) -> Result<()> {
        let d = self.continuity_defect();
        if d > CONTINUITY_TOL {
            return Err(Error::Domain(format!("solution is discontinuous or not periodic (jump {d:e})")));
        }
        Ok(())
    }

    /// Reduce `t` into `[0, ω)` and find its piece and reference coordinate.
    fn locate(&self, t: f64) -> (usize, f64) {
        let omega = self.mesh.end();
        let mut s = t.rem_euclid(omega);
        if s >= omega {
            s = 0.0;
        }
        let bp = self.mesh.breakpoints();
        let i = (bp.partition_point(|&b| b <= s) - 1).min(self.mesh.pieces() - 1);
        let u = ((s - bp[i]) / (bp[i + 1] - bp[i])).clamp(0.0, 1.0);
        (i, u)
    }

    fn combine(&self, i: usize, basis: &[f64], scale: f64, out: &mut [f64]) {
        for (c, o) in out.iter_mut().enumerate() {
            *o = scale * self.piece_values(i, c).iter().zip(basis).map(|(v, b)| v * b).sum::<f64>();
        }
    }

    /// Write the solution to the text format; floats use shortest round-trip notation.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# piecewise polynomial periodic solution");
        let _ = writeln!(s, "period {:?}", self.period());
        let _ = writeln!(s, "dim {}", self.dim);
        let _ = writeln!(s, "degree {}", self.degree);
        let _ = writeln!(s, "nodes {}", self.kind);
        let _ = writeln!(s, "pieces {}", self.mesh.pieces());
        let _ = writeln!(s, "breakpoints");
        for t in self.mesh.breakpoints() {
            let _ = writeln!(s, "{t:?}");
        }
        let _ = writeln!(s, "values");
        for row in self.values.chunks(self.degree + 1) {
            let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            let _ = writeln!(s, "{}", line.join(" "));
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(n, l)| (n + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty());
        let mut header = |key: &str| -> Result<(usize, String)> {
            let (n, line) = lines.next().ok_or(Error::Parse { line: 0, message: format!("missing `{key}`") })?;
            let rest = line.strip_prefix(key).ok_or_else(|| Error::Parse {
                line: n,
                message: format!("expected `{key}`, found `{line}`"),
            })?;
            Ok((n, rest.trim().to_string()))
        };
        fn num<T: std::str::FromStr>(n: usize, s: &str) -> Result<T> {
            s.parse().map_err(|_| Error::Parse { line: n, message: format!("bad number `{s}`") })
        }
        let (n, v) = header("period")?;
        let period: f64 = num(n, &v)?;
        let (n, v) = header("dim")?;
        let dim: usize = num(n, &v)?;
        let (n, v) = header("degree")?;
        let degree: usize = num(n, &v)?;
        let (n, v) = header("nodes")?;
        let kind: NodeKind = v.parse().map_err(|_| Error::Parse { line: n, message: format!("unknown node kind `{v}`") })?;
        let (n, v) = header("pieces")?;
        let pieces: usize = num(n, &v)?;
        header("breakpoints")?;
        let mut bp = Vec::with_capacity(pieces + 1);
        for _ in 0..=pieces {
            let (n, l) = lines.next().ok_or(Error::Parse { line: 0, message: "truncated breakpoints".into() })?;
            bp.push(num::<f64>(n, l)?);
        }
        match lines.next() {
            Some((_, "values")) => {}
            Some((n, l)) => return Err(Error::Parse { line: n, message: format!("expected `values`, found `{l}`") }),
            None => return Err(Error::Parse { line: 0, message: "missing `values`".into() }),
        }
        let mut values = Vec::with_capacity(pieces * dim * (degree + 1));
        for (n, l) in lines {
            let row: Vec<f64> = l.split_whitespace().map(|x| num(n, x)).collect::<Result<_>>()?;
            if row.len() != degree + 1 {
                return Err(Error::Parse { line: n, message: format!("expected {} values per row", degree + 1) });
            }
            values.extend(row);
        }
        let mesh = Mesh::new(bp)?;
        if mesh.end() != period {
            return Err(Error::Parse { line: 0, message: "last breakpoint differs from the period".into() });
        }
        Self::new(mesh, dim, kind, degree, values)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}

impl PeriodicOrbit for PiecewiseSolution {
    fn dim(&self) -> usize {
        self.dim
    }

    fn period(&self) -> f64 {
        self.mesh.end()
    }

    fn eval_into(&self, t: f64, out: &mut [f64]) {
        let (i, u) = self.locate(t);
        let mut basis = vec![0.0; self.degree + 1];
        bary_table(self.kind, self.degree).basis(u, &mut basis);
        self.combine(i, &basis, 1.0, out);
    }

    fn derivative_into(&self, t: f64, out: &mut [f64]) {
        let (i, u) = self.locate(t);
        let mut basis = vec![0.0; self.degree + 1];
        bary_table(self.kind, self.degree).basis_derivative(u, &mut basis);
        self.combine(i, &basis, 1.0 / self.mesh.width(i), out);
    }

    /// Interior mesh breakpoints; the solution is only continuous there.
    fn breakpoints(&self) -> Vec<f64> {
        self.mesh.breakpoints()[..self.mesh.pieces()].to_vec()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(mesh: Mesh, degree: usize) -> PiecewiseSolution {
        let w = mesh.end();
        PiecewiseSolution::from_fn(mesh, 2, NodeKind::Uniform, degree, |t, out| {
            let a = 2.0 * std::f64::consts::PI * t / w;
            out[0] = a.sin();
            out[1] = 1.0 + a.cos();
        })
        .unwrap()
    }

    #[test]
    fn wraps_periodically() {
        let s = sine(Mesh::uniform(0.0, 3.0, 7).unwrap(), 5);
        assert_eq!(s.eval(3.0), s.eval(0.0));
        for k in -3..4 {
            let a = s.eval(1.234);
            let b = s.eval(1.234 + 3.0 * k as f64);
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
            }
        }
    }

    #[test]
    fn constant_solution_is_constant() {
        let s = PiecewiseSolution::from_fn(Mesh::new(vec![0.0, 0.3, 2.0]).unwrap(), 1, NodeKind::Uniform, 3, |_, o| o[0] = 1.5).unwrap();
        for t in [-5.0, 0.0, 0.3, 1.1, 2.0, 17.3] {
            assert!((s.eval(t)[0] - 1.5).abs() < 1e-14);
            assert!(s.derivative(t)[0].abs() < 1e-12);
        }
        s.check_continuity().unwrap();
    }

    #[test]
    fn accurate_with_derivative() {
        let s = sine(Mesh::uniform(0.0, 1.0, 20).unwrap(), 6);
        let tp = 2.0 * std::f64::consts::PI;
        for k in 0..50 {
            let t = k as f64 / 50.0 + 0.0037;
            assert!((s.eval(t)[0] - (tp * t).sin()).abs() < 1e-8);
            assert!((s.derivative(t)[0] - tp * (tp * t).cos()).abs() < 1e-6);
        }
    }

    #[test]
    fn text_round_trip_is_exact() {
        let s = sine(Mesh::new(vec![0.0, 0.1, 0.7, 1.0 / 3.0 + 1.0]).unwrap(), 4);
        let back = PiecewiseSolution::parse(&s.to_text()).unwrap();
        assert_eq!(s, back);
    }

    #[test]
    fn parse_rejects_garbage() {
        assert!(PiecewiseSolution::parse("period x").is_err());
        assert!(PiecewiseSolution::parse("").is_err());
    }

    #[test]
    fn jump_is_detected() {
        let mut s = sine(Mesh::uniform(0.0, 1.0, 4).unwrap(), 2);
        s.values[2] += 1e-3;
        assert!(s.check_continuity().is_err());
    }
}
