//! The N-level problem `H = H0 + λV` with diagonal `H0 = diag(ω)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::level::{Level, SubspaceMask, MAX_LEVELS};
use crate::linalg::{hermitian_from_polar, ComplexMatrix, HermitianMatrix, PolarEntry};
use crate::scalar::{re, Real, C};

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralProblem<T> {
    omega: Vec<T>,
    v: HermitianMatrix<T>,
    lambda: T,
}

impl<T: Real> SpectralProblem<T> {
    pub fn new(omega: Vec<T>, v: HermitianMatrix<T>, lambda: T) -> Result<Self> {
        let n = omega.len();
        if n == 0 {
            return Err(Error::InvalidRange("problem needs at least one level".into()));
        }
        if n > MAX_LEVELS {
            return Err(Error::TooManyLevels { n, max: MAX_LEVELS });
        }
        if v.dim() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: v.dim(),
            });
        }
        if !omega.iter().all(|w| w.is_finite()) {
            return Err(Error::NonFinite { what: "omega" });
        }
        if !lambda.is_finite() {
            return Err(Error::NonFinite { what: "lambda" });
        }
        Ok(Self { omega, v, lambda })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.omega.len()
    }

    #[inline]
    pub fn omega(&self) -> &[T] {
        &self.omega
    }

    #[inline]
    pub fn omega_at(&self, level: Level) -> T {
        self.omega[level.idx()]
    }

    #[inline]
    pub fn v(&self) -> &HermitianMatrix<T> {
        &self.v
    }

    #[inline]
    pub fn lambda(&self) -> T {
        self.lambda
    }

    pub fn with_lambda(&self, lambda: T) -> Self {
        Self {
            omega: self.omega.clone(),
            v: self.v.clone(),
            lambda,
        }
    }

    /// `λ·V_ij` for zero-based indices.
    #[inline]
    pub(crate) fn coupling(&self, i: usize, j: usize) -> C<T> {
        self.v[(i, j)] * self.lambda
    }

    /// Full Hamiltonian matrix `diag(ω) + λV`.
    pub fn hamiltonian(&self) -> ComplexMatrix<T> {
        ComplexMatrix::from_fn(self.n(), |i, j| {
            let d = if i == j { re(self.omega[i]) } else { re(T::zero()) };
            d + self.coupling(i, j)
        })
    }

    /// `z − H_[mask]`, possibly 0×0.
    pub fn resolvent_block(&self, z: C<T>, mask: SubspaceMask) -> ComplexMatrix<T> {
        let keep: Vec<usize> = mask.retained(self.n()).collect();
        ComplexMatrix::from_fn(keep.len(), |a, b| {
            let (i, j) = (keep[a], keep[b]);
            let d = if i == j { z - self.omega[i] } else { re(T::zero()) };
            d - self.coupling(i, j)
        })
    }

    /// Energy scale used to normalize guards: `max(1, ‖H‖_F)`.
    pub fn energy_scale(&self) -> T {
        self.hamiltonian().frobenius_norm().max(T::one())
    }

    /// Spread of the unperturbed spectrum, floored at a small positive value.
    pub fn omega_spread(&self) -> T {
        let lo = self.omega.iter().copied().fold(T::infinity(), T::min);
        let hi = self.omega.iter().copied().fold(T::neg_infinity(), T::max);
        (hi - lo).max(T::lit(1e-3))
    }

    /// Fails with [`Error::DegenerateSpectrum`] if two ω coincide within `tol`.
    pub fn check_nondegenerate(&self, tol: T) -> Result<()> {
        for a in 0..self.n() {
            for b in a + 1..self.n() {
                if (self.omega[a] - self.omega[b]).abs() <= tol {
                    return Err(Error::DegenerateSpectrum { a: a + 1, b: b + 1 });
                }
            }
        }
        Ok(())
    }

    /// Deterministic random instance: ω uniform in `[0, 1)` with pairwise gaps
    /// of at least `min(0.02, 0.2/N)`, and `|V_ij| ≤ 1` with uniform phases.
    pub fn random(n: usize, seed: u64, lambda: T) -> Result<Self> {
        if n == 0 || n > MAX_LEVELS {
            return Err(Error::TooManyLevels { n, max: MAX_LEVELS });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let min_gap = (0.2 / n as f64).min(0.02);
        let omega: Vec<f64> = loop {
            let mut w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
            w.sort_by(|a, b| a.partial_cmp(b).unwrap());
            if w.windows(2).all(|p| p[1] - p[0] >= min_gap) {
                break w;
            }
        };
        let mut entries = Vec::new();
        for i in 1..=n {
            for j in i..=n {
                let abs = rng.gen_range(0.0..1.0);
                let arg = if i == j {
                    if rng.gen_bool(0.5) {
                        0.0
                    } else {
                        std::f64::consts::PI
                    }
                } else {
                    rng.gen_range(0.0..std::f64::consts::TAU)
                };
                entries.push(PolarEntry {
                    i,
                    j,
                    abs: T::lit(abs),
                    arg: T::lit(arg),
                });
            }
        }
        let v = hermitian_from_polar(&entries, n)?;
        Self::new(omega.into_iter().map(T::lit).collect(), v, lambda)
    }
}

/// The seven-level benchmark instance with `H0 = diag(0.07, …, 0.86)` and the
/// polar-form interaction table.
pub fn benchmark_problem<T: Real>(lambda: T) -> SpectralProblem<T> {
    let omega = [0.07, 0.30, 0.37, 0.48, 0.51, 0.80, 0.86];
    let v = hermitian_from_polar(&benchmark_entries(), 7).expect("benchmark table is complete");
    SpectralProblem::new(omega.iter().map(|&w| T::lit(w)).collect(), v, lambda)
        .expect("benchmark problem is valid")
}

/// Upper triangle of the benchmark interaction as `(|V_ij|, arg V_ij)`.
pub fn benchmark_entries<T: Real>() -> Vec<PolarEntry<T>> {
    const PI: f64 = std::f64::consts::PI;
    #[rustfmt::skip]
    const TABLE: [[(f64, f64); 7]; 7] = [
        [(0.26, PI), (0.09, 4.48), (0.38, 3.39), (0.66, 4.82), (0.97, 2.66), (0.37, 3.97), (0.05, 0.53)],
        [(0.0, 0.0), (0.15, PI),   (0.88, 0.18), (0.95, 3.57), (0.49, 1.10), (0.09, 5.68), (0.70, 1.95)],
        [(0.0, 0.0), (0.0, 0.0),   (0.48, PI),   (0.01, 1.47), (0.43, 1.04), (0.59, 0.77), (0.72, 6.06)],
        [(0.0, 0.0), (0.0, 0.0),   (0.0, 0.0),   (0.44, PI),   (0.68, 5.91), (0.17, 1.04), (0.52, 4.69)],
        [(0.0, 0.0), (0.0, 0.0),   (0.0, 0.0),   (0.0, 0.0),   (0.49, 0.00), (0.99, 3.63), (0.96, 3.40)],
        [(0.0, 0.0), (0.0, 0.0),   (0.0, 0.0),   (0.0, 0.0),   (0.0, 0.0),   (0.46, 0.00), (0.79, 6.26)],
        [(0.0, 0.0), (0.0, 0.0),   (0.0, 0.0),   (0.0, 0.0),   (0.0, 0.0),   (0.0, 0.0),   (0.22, PI)],
    ];
    let mut out = Vec::with_capacity(28);
    for (i, row) in TABLE.iter().enumerate() {
        for (j, &(abs, arg)) in row.iter().enumerate().skip(i) {
            out.push(PolarEntry {
                i: i + 1,
                j: j + 1,
                abs: T::lit(abs),
                arg: T::lit(arg),
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn benchmark_diagonal_signs() {
        let p = benchmark_problem::<f64>(1.0);
        let v = p.v();
        assert_eq!(v[(0, 0)].re, -0.26);
        assert_eq!(v[(4, 4)].re, 0.49);
        assert_eq!(v[(5, 5)].re, 0.46);
        assert_eq!(v[(6, 6)].re, -0.22);
        assert_eq!(v[(1, 0)], v[(0, 1)].conj());
        assert!(p.check_nondegenerate(1e-12).is_ok());
    }

    #[test]
    fn resolvent_block_matches_shifted_submatrix() {
        let p = SpectralProblem::<f64>::random(4, 1, 0.3).unwrap();
        let z = C::new(0.4, 0.0);
        let mask = SubspaceMask::from_levels([Level(2)]);
        let direct = crate::linalg::principal_submatrix(&p.hamiltonian(), mask)
            .unwrap()
            .0
            .shifted(z);
        let block = p.resolvent_block(z, mask);
        for i in 0..3 {
            for j in 0..3 {
                assert!((direct[(i, j)] - block[(i, j)]).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn random_is_deterministic_and_nondegenerate() {
        let a = SpectralProblem::<f64>::random(6, 42, 0.1).unwrap();
        let b = SpectralProblem::<f64>::random(6, 42, 0.1).unwrap();
        assert_eq!(a, b);
        assert!(a.check_nondegenerate(1e-3).is_ok());
    }
}
