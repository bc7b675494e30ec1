//! Dense complex linear algebra: Hermitian construction, principal
//! submatrices, LU determinants and solves, and a cyclic Jacobi
//! diagonalizer that serves as the independent eigenvalue oracle.
//!
//! Nothing in here depends on the Green's function engine. The Jacobi
//! oracle in particular must stay that way so it can validate it.

use std::ops::{Index, IndexMut};

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::level::SubspaceMask;
use crate::scalar::{re, Real, C};

/// Square dense complex matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix<T> {
    dim: usize,
    data: Vec<C<T>>,
}

impl<T: Real> ComplexMatrix<T> {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![Complex::new(T::zero(), T::zero()); dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = re(T::one());
        }
        m
    }

    pub fn from_diagonal(diag: &[T]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = re(d);
        }
        m
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> C<T>) -> Self {
        let mut data = Vec::with_capacity(dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                data.push(f(i, j));
            }
        }
        Self { dim, data }
    }

    /// Builds from nested rows; fails unless the rows form a square of finite values.
    pub fn from_rows(rows: &[Vec<C<T>>]) -> Result<Self> {
        let dim = rows.len();
        let mut data = Vec::with_capacity(dim * dim);
        for row in rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        let m = Self { dim, data };
        m.check_finite()?;
        Ok(m)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn check_finite(&self) -> Result<()> {
        if self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite { what: "matrix" })
        }
    }

    pub fn frobenius_norm(&self) -> T {
        self.data
            .iter()
            .fold(T::zero(), |acc, z| acc + z.norm_sqr())
            .sqrt()
    }

    pub fn trace(&self) -> C<T> {
        (0..self.dim).fold(re(T::zero()), |acc, i| acc + self[(i, i)])
    }

    pub fn mul_vec(&self, x: &[C<T>]) -> Vec<C<T>> {
        (0..self.dim)
            .map(|i| {
                self.row(i)
                    .iter()
                    .zip(x)
                    .fold(re(T::zero()), |acc, (a, b)| acc + a * b)
            })
            .collect()
    }

    pub fn row(&self, i: usize) -> &[C<T>] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn scale(&self, s: T) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        Self {
            dim: self.dim,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    /// `z·I − self`.
    pub fn shifted(&self, z: C<T>) -> Self {
        let mut m = self.scale(-T::one());
        for i in 0..self.dim {
            m[(i, i)] += z;
        }
        m
    }

    /// Largest `|M_ij − conj(M_ji)|`.
    pub fn hermitian_deviation(&self) -> T {
        let mut dev = T::zero();
        for i in 0..self.dim {
            for j in i..self.dim {
                dev = dev.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        dev
    }
}

impl<T> Index<(usize, usize)> for ComplexMatrix<T> {
    type Output = C<T>;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &C<T> {
        &self.data[i * self.dim + j]
    }
}

impl<T> IndexMut<(usize, usize)> for ComplexMatrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C<T> {
        &mut self.data[i * self.dim + j]
    }
}

/// A [`ComplexMatrix`] with exact conjugate symmetry.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix<T>(ComplexMatrix<T>);

impl<T: Real> HermitianMatrix<T> {
    /// Accepts `m` if it is Hermitian within `tol`, then symmetrizes it exactly.
    pub fn new(m: ComplexMatrix<T>, tol: T) -> Result<Self> {
        m.check_finite()?;
        let dev = m.hermitian_deviation();
        if dev > tol {
            return Err(Error::NotHermitian {
                deviation: dev.as_f64(),
            });
        }
        let mut h = m;
        let half = T::lit(0.5);
        for i in 0..h.dim {
            let d = h[(i, i)].re;
            h[(i, i)] = re(d);
            for j in i + 1..h.dim {
                let avg = (h[(i, j)] + h[(j, i)].conj()) * half;
                h[(i, j)] = avg;
                h[(j, i)] = avg.conj();
            }
        }
        Ok(Self(h))
    }

    pub fn from_real_diagonal(diag: &[T]) -> Self {
        Self(ComplexMatrix::from_diagonal(diag))
    }

    #[inline]
    pub fn as_matrix(&self) -> &ComplexMatrix<T> {
        &self.0
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.0.dim
    }

    pub fn into_inner(self) -> ComplexMatrix<T> {
        self.0
    }
}

impl<T> Index<(usize, usize)> for HermitianMatrix<T> {
    type Output = C<T>;
    #[inline]
    fn index(&self, ij: (usize, usize)) -> &C<T> {
        &self.0[ij]
    }
}

/// Upper-triangle interaction entry in polar form, `V_ij = abs · e^{i·arg}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarEntry<T> {
    /// 1-based row.
    pub i: usize,
    /// 1-based column, `j >= i`.
    pub j: usize,
    pub abs: T,
    pub arg: T,
}

const DIAGONAL_ARG_TOL: f64 = 1e-12;

/// Builds the Hermitian matrix from its upper triangle given in polar form.
///
/// Diagonal entries must carry `arg ∈ {0, π}` and become exact reals `±abs`;
/// the lower triangle is the exact conjugate of the upper one.
pub fn hermitian_from_polar<T: Real>(
    entries: &[PolarEntry<T>],
    dim: usize,
) -> Result<HermitianMatrix<T>> {
    let mut seen = vec![false; dim * dim];
    let mut m = ComplexMatrix::zeros(dim);
    for e in entries {
        if e.i == 0 || e.i > dim {
            return Err(Error::IndexOutOfRange { index: e.i, dim });
        }
        if e.j < e.i || e.j > dim {
            return Err(Error::IndexOutOfRange { index: e.j, dim });
        }
        if !(e.abs.is_finite() && e.arg.is_finite()) {
            return Err(Error::NonFinite { what: "polar entry" });
        }
        let (i, j) = (e.i - 1, e.j - 1);
        if std::mem::replace(&mut seen[i * dim + j], true) {
            return Err(Error::DuplicateEntry { i: e.i, j: e.j });
        }
        if i == j {
            let tol = T::lit(DIAGONAL_ARG_TOL);
            let arg = e.arg;
            let value = if arg.abs() <= tol || (arg - T::TAU()).abs() <= tol {
                e.abs
            } else if (arg - T::PI()).abs() <= tol {
                -e.abs
            } else {
                return Err(Error::NonRealDiagonal {
                    i: e.i,
                    arg: arg.as_f64(),
                });
            };
            m[(i, i)] = re(value);
        } else {
            let v = Complex::from_polar(e.abs, e.arg);
            m[(i, j)] = v;
            m[(j, i)] = v.conj();
        }
    }
    for i in 0..dim {
        for j in i..dim {
            if !seen[i * dim + j] {
                return Err(Error::MissingEntry { i: i + 1, j: j + 1 });
            }
        }
    }
    Ok(HermitianMatrix(m))
}

/// Principal submatrix with the masked rows and columns removed.
///
/// Returns the submatrix together with the retained zero-based indices of
/// the original matrix, in their original order.
pub fn principal_submatrix<T: Real>(
    m: &ComplexMatrix<T>,
    mask: SubspaceMask,
) -> Result<(ComplexMatrix<T>, Vec<usize>)> {
    mask.check(m.dim)?;
    if mask.len() >= m.dim {
        return Err(Error::EmptyResult { dim: m.dim });
    }
    Ok(submatrix_unchecked(m, mask))
}

/// Like [`principal_submatrix`] but allows an empty (0×0) result.
pub(crate) fn submatrix_unchecked<T: Real>(
    m: &ComplexMatrix<T>,
    mask: SubspaceMask,
) -> (ComplexMatrix<T>, Vec<usize>) {
    let keep: Vec<usize> = mask.retained(m.dim).collect();
    let sub = ComplexMatrix::from_fn(keep.len(), |a, b| m[(keep[a], keep[b])]);
    (sub, keep)
}

/// In-place LU factorization with partial pivoting.
struct Lu<T> {
    lu: ComplexMatrix<T>,
    perm: Vec<usize>,
    swaps: usize,
    min_pivot: T,
}

impl<T: Real> Lu<T> {
    fn factor(m: &ComplexMatrix<T>) -> Self {
        let n = m.dim;
        let mut lu = m.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut swaps = 0;
        let mut min_pivot = T::infinity();
        for k in 0..n {
            let (p, pmag) = (k..n)
                .map(|r| (r, lu[(r, k)].norm()))
                .fold((k, -T::one()), |best, cur| if cur.1 > best.1 { cur } else { best });
            min_pivot = min_pivot.min(pmag);
            if p != k {
                for c in 0..n {
                    lu.data.swap(k * n + c, p * n + c);
                }
                perm.swap(k, p);
                swaps += 1;
            }
            let pivot = lu[(k, k)];
            if pivot.norm() == T::zero() {
                continue;
            }
            for r in k + 1..n {
                let factor = lu[(r, k)] / pivot;
                lu[(r, k)] = factor;
                for c in k + 1..n {
                    let u = lu[(k, c)];
                    lu[(r, c)] -= factor * u;
                }
            }
        }
        Lu {
            lu,
            perm,
            swaps,
            min_pivot,
        }
    }

    fn determinant(&self) -> C<T> {
        let mut det = (0..self.lu.dim).fold(re(T::one()), |acc, i| acc * self.lu[(i, i)]);
        if self.swaps % 2 == 1 {
            det = -det;
        }
        det
    }

    fn solve(&self, b: &[C<T>]) -> Vec<C<T>> {
        let n = self.lu.dim;
        let mut x: Vec<C<T>> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            for j in 0..i {
                let l = self.lu[(i, j)];
                let xj = x[j];
                x[i] -= l * xj;
            }
        }
        for i in (0..n).rev() {
            for j in i + 1..n {
                let u = self.lu[(i, j)];
                let xj = x[j];
                x[i] -= u * xj;
            }
            x[i] /= self.lu[(i, i)];
        }
        x
    }
}

/// Determinant by LU with partial pivoting. The 0×0 determinant is 1.
pub fn determinant<T: Real>(m: &ComplexMatrix<T>) -> C<T> {
    if m.dim == 0 {
        return re(T::one());
    }
    Lu::factor(m).determinant()
}

/// Solves `A x = b` by LU with partial pivoting.
pub fn solve_linear<T: Real>(a: &ComplexMatrix<T>, b: &[C<T>]) -> Result<Vec<C<T>>> {
    if b.len() != a.dim {
        return Err(Error::DimensionMismatch {
            expected: a.dim,
            found: b.len(),
        });
    }
    if a.dim == 0 {
        return Ok(Vec::new());
    }
    let lu = Lu::factor(a);
    let threshold = T::lit(1e-14) * a.frobenius_norm();
    if !(lu.min_pivot > threshold) {
        return Err(Error::SingularSystem {
            pivot: lu.min_pivot.as_f64(),
            threshold: threshold.as_f64(),
        });
    }
    Ok(lu.solve(b))
}

/// Eigen-decomposition of a Hermitian matrix.
#[derive(Debug, Clone)]
pub struct HermitianEigen<T> {
    /// Ascending real eigenvalues.
    pub values: Vec<T>,
    /// Unitary matrix whose column `k` is the eigenvector of `values[k]`.
    pub vectors: ComplexMatrix<T>,
}

impl<T: Real> HermitianEigen<T> {
    pub fn vector(&self, k: usize) -> Vec<C<T>> {
        (0..self.vectors.dim).map(|i| self.vectors[(i, k)]).collect()
    }
}

const JACOBI_MAX_SWEEPS: usize = 100;

/// Cyclic Jacobi diagonalization for Hermitian matrices.
///
/// Sweeps until the off-diagonal Frobenius norm drops below
/// `1e-14·‖M‖` (or the working precision floor) or 100 sweeps elapse.
pub fn eig_hermitian_oracle<T: Real>(m: &ComplexMatrix<T>) -> Result<HermitianEigen<T>> {
    m.check_finite()?;
    let n = m.dim;
    let scale = m.frobenius_norm();
    let dev = m.hermitian_deviation();
    if dev > T::lit(1e-12) * scale.max(T::one()) {
        return Err(Error::NotHermitian {
            deviation: dev.as_f64(),
        });
    }
    let mut a = m.clone();
    for i in 0..n {
        a[(i, i)] = re(a[(i, i)].re);
    }
    let mut v = ComplexMatrix::identity(n);
    let threshold = T::lit(1e-14).max(T::epsilon()) * scale;

    let off_norm = |a: &ComplexMatrix<T>| {
        let mut s = T::zero();
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += a[(i, j)].norm_sqr();
                }
            }
        }
        s.sqrt()
    };

    let mut converged = off_norm(&a) <= threshold;
    for _ in 0..JACOBI_MAX_SWEEPS {
        if converged {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                jacobi_rotate(&mut a, &mut v, p, q);
            }
        }
        converged = off_norm(&a) <= threshold;
    }
    if !converged {
        return Err(Error::OracleNoConvergence {
            off_norm: off_norm(&a).as_f64(),
        });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| a[(x, x)].re.partial_cmp(&a[(y, y)].re).unwrap());
    let values = order.iter().map(|&k| a[(k, k)].re).collect();
    let vectors = ComplexMatrix::from_fn(n, |i, k| v[(i, order[k])]);
    Ok(HermitianEigen { values, vectors })
}

/// Annihilates `a[p][q]` with a unitary rotation `U = D·J`, where `D`
/// removes the phase of `a[p][q]` and `J` is the real symmetric Schur rotation.
fn jacobi_rotate<T: Real>(a: &mut ComplexMatrix<T>, v: &mut ComplexMatrix<T>, p: usize, q: usize) {
    let n = a.dim;
    let apq = a[(p, q)];
    let g = apq.norm();
    if g == T::zero() {
        return;
    }
    let phase = apq / g;
    let app = a[(p, p)].re;
    let aqq = a[(q, q)].re;
    let theta = (aqq - app) / (g + g);
    let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
    let c = T::one() / (t * t + T::one()).sqrt();
    let s = t * c;

    // Columns p and q of U.
    let u_pp = re(c);
    let u_pq = re(s);
    let u_qp = phase.conj() * (-s);
    let u_qq = phase.conj() * c;

    for k in 0..n {
        let akp = a[(k, p)];
        let akq = a[(k, q)];
        a[(k, p)] = akp * u_pp + akq * u_qp;
        a[(k, q)] = akp * u_pq + akq * u_qq;
    }
    for k in 0..n {
        let apk = a[(p, k)];
        let aqk = a[(q, k)];
        a[(p, k)] = u_pp.conj() * apk + u_qp.conj() * aqk;
        a[(q, k)] = u_pq.conj() * apk + u_qq.conj() * aqk;
    }
    a[(p, q)] = re(T::zero());
    a[(q, p)] = re(T::zero());
    a[(p, p)] = re(a[(p, p)].re);
    a[(q, q)] = re(a[(q, q)].re);

    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = vkp * u_pp + vkq * u_qp;
        v[(k, q)] = vkp * u_pq + vkq * u_qq;
    }
}

pub(crate) fn vec_norm<T: Real>(x: &[C<T>]) -> T {
    x.iter().fold(T::zero(), |acc, z| acc + z.norm_sqr()).sqrt()
}

pub(crate) fn inner<T: Real>(x: &[C<T>], y: &[C<T>]) -> C<T> {
    x.iter()
        .zip(y)
        .fold(re(T::zero()), |acc, (a, b)| acc + a.conj() * b)
}
