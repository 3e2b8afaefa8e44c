use std::fmt::Write as _;

use faer::Mat;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::interp::NodalFunction;
use crate::monodromy::MonodromyDiscretization;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Mode {
    /// Eigenvalues of the assembled `T`.
    #[default]
    Direct,
    /// Eigenvalues of the block pencil, reduced through its lower block row.
    Pencil,
    /// Finite eigenvalues of the block pencil `(P, Q)` by the QZ algorithm,
    /// without forming `T`. Slower; tiny multipliers agree with the other
    /// modes only to about machine precision in absolute terms.
    Qz,
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "direct" => Ok(Mode::Direct),
            "pencil" => Ok(Mode::Pencil),
            "qz" => Ok(Mode::Qz),
            _ => Err(Error::InvalidParameter(format!("unknown mode `{s}`"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct MultiplierOptions {
    pub tol_stab: f64,
    pub tol_discard: f64,
    /// Largest distance from 1 at which an eigenvalue is labelled trivial.
    pub trivial_radius: f64,
}

impl Default for MultiplierOptions {
    fn default() -> Self {
        Self { tol_stab: 1e-6, tol_discard: 1e-12, trivial_radius: 0.05 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Stable,
    Unstable,
    Inconclusive,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Stable => "stable",
            Verdict::Unstable => "unstable",
            Verdict::Inconclusive => "inconclusive",
        })
    }
}

/// Approximate Floquet multipliers sorted by decreasing modulus, ties by
/// decreasing argument.
#[derive(Clone, Debug)]
pub struct MultiplierSet {
    pub values: Vec<Complex64>,
    /// Position of the eigenvalue taken as the trivial multiplier 1.
    pub trivial: Option<usize>,
    /// `|μ| < tol_discard`: numerically indistinguishable from zero.
    pub spurious: Vec<bool>,
    pub verdict: Verdict,
}

impl MultiplierSet {
    fn from_values(mut values: Vec<Complex64>, expect_trivial: bool, options: &MultiplierOptions) -> Self {
        sort_multipliers(&mut values);
        let trivial = if expect_trivial {
            values
                .iter()
                .enumerate()
                .map(|(i, z)| (i, (z - 1.0).norm()))
                .filter(|(_, dist)| *dist <= options.trivial_radius)
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .map(|(i, _)| i)
        } else {
            None
        };
        let spurious = values.iter().map(|z| z.norm() < options.tol_discard).collect();
        let nontrivial = values.iter().enumerate().filter(|(i, _)| Some(*i) != trivial).map(|(_, z)| z.norm());
        let largest = nontrivial.fold(0.0_f64, f64::max);
        let verdict = if largest > 1.0 + options.tol_stab {
            Verdict::Unstable
        } else if largest < 1.0 - options.tol_stab {
            Verdict::Stable
        } else {
            Verdict::Inconclusive
        };
        Self { values, trivial, spurious, verdict }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dominant(&self) -> Option<Complex64> {
        self.values.first().copied()
    }

    pub fn trivial_value(&self) -> Option<Complex64> {
        self.trivial.map(|i| self.values[i])
    }

    /// `|μ_triv - 1|`, if a trivial multiplier was identified.
    pub fn trivial_error(&self) -> Option<f64> {
        self.trivial_value().map(|z| (z - 1.0).norm())
    }

    pub fn nontrivial(&self) -> impl Iterator<Item = Complex64> + '_ {
        self.values.iter().enumerate().filter(|(i, _)| Some(*i) != self.trivial).map(|(_, z)| *z)
    }

    pub fn dominant_nontrivial(&self) -> Option<Complex64> {
        self.nontrivial().next()
    }

    /// The multiplier closest to `target`.
    pub fn closest(&self, target: Complex64) -> Option<Complex64> {
        self.values.iter().copied().min_by(|a, b| (a - target).norm().total_cmp(&(b - target).norm()))
    }

    /// `re,im,modulus,is_trivial,flag` rows with a header line.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("re,im,modulus,is_trivial,flag\n");
        for (i, z) in self.values.iter().enumerate() {
            let flag = if self.spurious[i] { "spurious" } else { "ok" };
            let _ = writeln!(
                s,
                "{:.16e},{:.16e},{:.16e},{},{}",
                z.re,
                z.im,
                z.norm(),
                Some(i) == self.trivial,
                flag
            );
        }
        s
    }
}

fn sort_key(z: &Complex64) -> (i64, f64) {
    // Moduli equal to about 12 digits count as ties, so conjugate pairs stay
    // adjacent with the positive imaginary part first.
    let m = z.norm();
    let bucket = if m > 0.0 { (m.ln() * 1e11).round() as i64 } else { i64::MIN };
    (bucket, z.arg())
}

pub(crate) fn sort_multipliers(values: &mut [Complex64]) {
    values.sort_by(|a, b| {
        let (ka, kb) = (sort_key(a), sort_key(b));
        kb.0.cmp(&ka.0).then(kb.1.total_cmp(&ka.1))
    });
}

fn eigenvalues(m: &Mat<f64>) -> Result<Vec<Complex64>> {
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    m.eigenvalues().map_err(|e| Error::Eigen(format!("{e:?}")))
}

/// `Q` has rank `d n_hist`, so the pencil has that many finite eigenvalues;
/// the remaining ones are infinite and show up with `β ≈ 0`.
fn pencil_eigenvalues(disc: &MonodromyDiscretization) -> Result<Vec<Complex64>> {
    let (p, q) = disc.pencil();
    let keep = disc.a1().ncols();
    if keep == 0 {
        return Ok(Vec::new());
    }
    let gevd = p.generalized_eigen(&q).map_err(|e| Error::Eigen(format!("{e:?}")))?;
    let (alpha, beta) = (gevd.S_a().column_vector(), gevd.S_b().column_vector());
    let mut pairs: Vec<(f64, Complex64)> = (0..p.nrows())
        .map(|i| {
            let (a, b) = (alpha[i], beta[i]);
            // |β| / |α| is 0 for infinite eigenvalues; larger means more finite
            let finiteness = if a.norm() == 0.0 { f64::INFINITY } else { b.norm() / a.norm() };
            (finiteness, if b.norm() == 0.0 { Complex64::new(f64::INFINITY, 0.0) } else { a / b })
        })
        .collect();
    pairs.sort_by(|x, y| y.0.total_cmp(&x.0));
    Ok(pairs.into_iter().take(keep).map(|(_, z)| z).collect())
}

/// Approximate multipliers of the discretized monodromy operator.
pub fn multipliers(disc: &MonodromyDiscretization, mode: Mode, options: &MultiplierOptions) -> Result<MultiplierSet> {
    let values = match mode {
        Mode::Direct => eigenvalues(disc.matrix())?,
        Mode::Pencil => eigenvalues(&disc.pencil_reduced()?)?,
        Mode::Qz => pencil_eigenvalues(disc)?,
    };
    if values.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Eigen("non-finite eigenvalue".into()));
    }
    Ok(MultiplierSet::from_values(values, disc.has_trivial(), options))
}

/// Eigenvector of `T` on the history grid, scaled to unit max norm with
/// the largest entry real and positive.
#[derive(Clone, Debug)]
pub struct Eigenfunction {
    pub multiplier: Complex64,
    pub real: NodalFunction,
    pub imag: NodalFunction,
}

/// Eigenfunction of the `index`-th multiplier in the sorted order of [`multipliers`].
pub fn eigenfunction(disc: &MonodromyDiscretization, index: usize) -> Result<Eigenfunction> {
    let t = disc.matrix();
    let n = t.nrows();
    if index >= n {
        return Err(Error::IndexOutOfRange { index, len: n });
    }
    let evd = t.eigen().map_err(|e| Error::Eigen(format!("{e:?}")))?;
    let s = evd.S().column_vector();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        let (ka, kb) = (sort_key(&s[a]), sort_key(&s[b]));
        kb.0.cmp(&ka.0).then(kb.1.total_cmp(&ka.1))
    });
    let col = order[index];
    let u = evd.U();
    let vec: Vec<Complex64> = (0..n).map(|i| u[(i, col)]).collect();
    let pivot = vec.iter().copied().max_by(|a, b| a.norm().total_cmp(&b.norm())).unwrap_or(Complex64::new(1.0, 0.0));
    let scale = if pivot.norm() > 0.0 { pivot.conj() / (pivot.norm() * pivot.norm()) } else { Complex64::new(1.0, 0.0) };
    let scaled: Vec<Complex64> = vec.iter().map(|z| z * scale).collect();
    let side = disc.grid.history.clone();
    Ok(Eigenfunction {
        multiplier: s[col],
        real: NodalFunction::new(side.clone(), disc.dim(), scaled.iter().map(|z| z.re).collect())?,
        imag: NodalFunction::new(side, disc.dim(), scaled.iter().map(|z| z.im).collect())?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn sorting_and_trivial_detection() {
        let vals = vec![c(0.1, -0.2), c(0.999_999, 0.0), c(0.1, 0.2), c(-2.0, 0.0), c(0.0, 0.0)];
        let set = MultiplierSet::from_values(vals, true, &MultiplierOptions::default());
        assert_eq!(set.values[0], c(-2.0, 0.0));
        assert_eq!(set.values[1], c(0.999_999, 0.0));
        assert_eq!(set.values[2], c(0.1, 0.2));
        assert_eq!(set.values[3], c(0.1, -0.2));
        assert_eq!(set.trivial, Some(1));
        assert!(set.spurious[4]);
        assert_eq!(set.verdict, Verdict::Unstable);
        assert_eq!(set.dominant_nontrivial(), Some(c(-2.0, 0.0)));
    }

    #[test]
    fn verdicts() {
        let o = MultiplierOptions::default();
        let s = MultiplierSet::from_values(vec![c(1.0, 0.0), c(0.5, 0.0)], true, &o);
        assert_eq!(s.verdict, Verdict::Stable);
        let s = MultiplierSet::from_values(vec![c(1.0, 0.0), c(0.5, 0.0)], false, &o);
        assert_eq!(s.verdict, Verdict::Inconclusive);
        let s = MultiplierSet::from_values(vec![c(1.0, 0.0), c(0.0, 1.5)], true, &o);
        assert_eq!(s.verdict, Verdict::Unstable);
    }

    #[test]
    fn no_trivial_far_from_one() {
        let s = MultiplierSet::from_values(vec![c(1.2, 0.0), c(0.5, 0.0)], true, &MultiplierOptions::default());
        assert_eq!(s.trivial, None);
    }

    #[test]
    fn csv_layout() {
        let s = MultiplierSet::from_values(vec![c(1.0, 0.0), c(0.0, 0.0)], true, &MultiplierOptions::default());
        let csv = s.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "re,im,modulus,is_trivial,flag");
        assert!(lines[1].ends_with(",true,ok"));
        assert!(lines[2].ends_with(",false,spurious"));
    }
}
