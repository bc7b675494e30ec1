//! Truncated perturbation theories and the error metric used to compare them.
//!
//! Three order-`m` energies are available: the truncated Feenberg expansion
//! ([`fpt_energy`]), Brillouin–Wigner ([`bwpt_energy`]) and
//! Rayleigh–Schrödinger ([`rspt_energy`]).

use crate::error::{Error, Result};
use crate::greens::{Order, ShiftedEnergyTable};
use crate::level::{Level, SubspaceMask};
use crate::linalg::{eig_hermitian_oracle, solve_linear};
use crate::problem::SpectralProblem;
use crate::scalar::{imag_unit, re, Real, C};
use crate::solver::{solve_eigenvalue_order, steffensen_iterate, SolverConfig};

/// Perturbation order `m`, or the exact (all-orders) theory.
pub type PerturbationOrder = Order;

/// Floor applied to nonzero relative errors before taking logarithms.
pub const FLOOR_EPS: f64 = 1e-300;

/// Truncated Feenberg energy: the self-consistent solution with every local
/// self-energy cut at explicit power `λ^m`.
pub fn fpt_energy<T: Real>(
    p: &SpectralProblem<T>,
    tau0: Level,
    m: PerturbationOrder,
    cfg: &SolverConfig<T>,
) -> Result<T> {
    Ok(solve_eigenvalue_order(p, tau0, None, m, cfg)?.energy)
}

/// Brillouin–Wigner map `ω_τ0 + Σ_{n=1..m} λ^n ⟨τ0|V (Q D V)^{n−1}|τ0⟩`
/// where `D = diag(1/(E − ω_a))` on the complement `Q` of `τ0`.
///
/// Sequences of intermediate states may repeat; the sums are carried by
/// transfer-matrix products. `Exact` resums the whole series with one solve.
pub fn bwpt_map<T: Real>(p: &SpectralProblem<T>, tau0: Level, m: PerturbationOrder, energy: T) -> Result<T> {
    let n = p.n();
    let t = tau0.check(n)?.idx();
    let q: Vec<usize> = (0..n).filter(|&a| a != t).collect();
    let mut e = re(p.omega()[t]);
    let order = match m {
        Order::Finite(0) => return Ok(e.re),
        Order::Finite(k) => k as usize,
        Order::Exact => {
            let block = p.resolvent_block(re(energy), SubspaceMask::EMPTY.with(tau0));
            let rhs: Vec<C<T>> = q.iter().map(|&a| p.coupling(a, t)).collect();
            let x = solve_linear(&block, &rhs)?;
            e += p.coupling(t, t);
            for (&a, xa) in q.iter().zip(x) {
                e += p.coupling(t, a) * xa;
            }
            return Ok(e.re);
        }
    };
    e += p.coupling(t, t);
    let inv: Vec<C<T>> = q
        .iter()
        .map(|&a| {
            let d = energy - p.omega()[a];
            if d == T::zero() {
                Err(Error::DegenerateDenominator { level: a + 1, gap: 0.0 })
            } else {
                Ok(re(d.recip()))
            }
        })
        .collect::<Result<_>>()?;
    // y holds λ^(n−1) (D V_QQ)^(n−2) D V_Q0 at step n.
    let mut y: Vec<C<T>> = q.iter().zip(&inv).map(|(&a, d)| *d * p.coupling(a, t)).collect();
    for step in 2..=order {
        for (&a, ya) in q.iter().zip(&y) {
            e += p.coupling(t, a) * ya;
        }
        if step == order {
            break;
        }
        y = q
            .iter()
            .zip(&inv)
            .map(|(&a, d)| {
                let s = q.iter().zip(&y).fold(re(T::zero()), |acc, (&b, yb)| acc + p.coupling(a, b) * yb);
                *d * s
            })
            .collect();
    }
    Ok(e.re)
}

/// Self-consistent Brillouin–Wigner energy at order `m`, started from `ω_τ0`.
pub fn bwpt_energy<T: Real>(
    p: &SpectralProblem<T>,
    tau0: Level,
    m: PerturbationOrder,
    cfg: &SolverConfig<T>,
) -> Result<T> {
    tau0.check(p.n())?;
    let fp = steffensen_iterate(|e| bwpt_map(p, tau0, m, e), p.omega_at(tau0), cfg)?;
    Ok(fp.value)
}

/// Rayleigh–Schrödinger energy `Σ_{n=0..m} λ^n E^(n)` from the wavefunction
/// recursion with intermediate normalization.
pub fn rspt_energy<T: Real>(p: &SpectralProblem<T>, tau0: Level, m: PerturbationOrder) -> Result<T> {
    Ok(rspt_coefficients(p, tau0, m)?
        .iter()
        .enumerate()
        .fold(T::zero(), |acc, (k, c)| acc + *c * p.lambda().powi(k as i32)))
}

/// Coefficients `E^(0), …, E^(m)` of the Rayleigh–Schrödinger series.
pub fn rspt_coefficients<T: Real>(p: &SpectralProblem<T>, tau0: Level, m: PerturbationOrder) -> Result<Vec<T>> {
    let Order::Finite(m) = m else {
        return Err(Error::InvalidConfig("the Rayleigh–Schrödinger series needs a finite order".into()));
    };
    let n = p.n();
    let t = tau0.check(n)?.idx();
    let w0 = p.omega()[t];
    let tiny = T::epsilon() * p.energy_scale();
    let mut resolvent = vec![T::zero(); n];
    for j in (0..n).filter(|&j| j != t) {
        let gap = w0 - p.omega()[j];
        if gap.abs() <= tiny {
            let (a, b) = (t.min(j) + 1, t.max(j) + 1);
            return Err(Error::DegenerateSpectrum { a, b });
        }
        resolvent[j] = gap.recip();
    }
    let v = p.v().as_matrix();
    let mut energies = vec![w0];
    let mut psi: Vec<Vec<C<T>>> = vec![(0..n).map(|j| re(if j == t { T::one() } else { T::zero() })).collect()];
    for order in 1..=m as usize {
        let vpsi = v.mul_vec(&psi[order - 1]);
        energies.push(vpsi[t].re);
        if order == m as usize {
            break;
        }
        let next = (0..n)
            .map(|j| {
                if j == t {
                    return re(T::zero());
                }
                let mut s = vpsi[j];
                for k in 1..=order {
                    s -= psi[order - k][j] * energies[k];
                }
                s * resolvent[j]
            })
            .collect();
        psi.push(next);
    }
    Ok(energies)
}

/// Geometric mean of relative errors `(Π |(a_i − e_i)/e_i|)^(1/N)`.
///
/// Returns 0 if any error is exactly 0. Nonzero factors are floored at
/// [`FLOOR_EPS`] so the logarithm stays finite.
pub fn gmre<T: Real>(approx: &[T], exact: &[T]) -> Result<T> {
    if approx.len() != exact.len() {
        return Err(Error::DimensionMismatch {
            expected: exact.len(),
            found: approx.len(),
        });
    }
    if exact.is_empty() {
        return Err(Error::EmptyResult { dim: 0 });
    }
    if let Some(index) = exact.iter().position(|e| *e == T::zero()) {
        return Err(Error::ZeroExactValue { index });
    }
    let floor = T::lit(FLOOR_EPS).max(T::min_positive_value());
    let mut log_sum = T::zero();
    for (a, e) in approx.iter().zip(exact) {
        let rel = ((*a - *e) / *e).abs();
        if rel == T::zero() {
            return Ok(T::zero());
        }
        if !rel.is_finite() {
            return Err(Error::NonFinite { what: "relative error" });
        }
        log_sum += rel.max(floor).ln();
    }
    Ok((log_sum / T::lit(exact.len() as f64)).exp())
}

/// Bijective nearest-value pairing: `result[i]` is the index in `exact`
/// assigned to `approx[i]`. Closest pairs are fixed first; ties go to the
/// lower index.
pub fn nearest_pairing<T: Real>(approx: &[T], exact: &[T]) -> Result<Vec<usize>> {
    if approx.len() != exact.len() {
        return Err(Error::DimensionMismatch {
            expected: exact.len(),
            found: approx.len(),
        });
    }
    let mut pairs: Vec<(T, usize, usize)> = Vec::with_capacity(approx.len() * exact.len());
    for (i, a) in approx.iter().enumerate() {
        for (j, e) in exact.iter().enumerate() {
            pairs.push(((*a - *e).abs(), i, j));
        }
    }
    pairs.sort_by(|x, y| {
        x.0.partial_cmp(&y.0)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(x.1.cmp(&y.1))
            .then(x.2.cmp(&y.2))
    });
    let mut out = vec![usize::MAX; approx.len()];
    let mut taken = vec![false; exact.len()];
    for (_, i, j) in pairs {
        if out[i] == usize::MAX && !taken[j] {
            out[i] = j;
            taken[j] = true;
        }
    }
    Ok(out)
}

/// Which truncated theory a benchmark cell uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Theory {
    Feenberg,
    BrillouinWigner,
    RayleighSchrodinger,
}

impl Theory {
    pub const ALL: [Theory; 3] = [Theory::Feenberg, Theory::BrillouinWigner, Theory::RayleighSchrodinger];

    /// Order-`m` energy for `tau0`.
    pub fn energy<T: Real>(self, p: &SpectralProblem<T>, tau0: Level, m: u32, cfg: &SolverConfig<T>) -> Result<T> {
        let order = Order::Finite(m);
        match self {
            Theory::Feenberg => fpt_energy(p, tau0, order, cfg),
            Theory::BrillouinWigner => bwpt_energy(p, tau0, order, cfg),
            Theory::RayleighSchrodinger => rspt_energy(p, tau0, order),
        }
    }
}

/// One row of the order-by-order comparison. `None` marks a cell where some
/// level failed to produce an energy; the reason is kept in `failures`.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkRow<T> {
    pub m: u32,
    pub gmre_fpt: Option<T>,
    pub gmre_bwpt: Option<T>,
    pub gmre_rspt: Option<T>,
    pub failures: Vec<String>,
}

/// Eigenvalues of `H` from the dense oracle, ascending.
pub fn oracle_energies<T: Real>(p: &SpectralProblem<T>) -> Result<Vec<T>> {
    Ok(eig_hermitian_oracle(&p.hamiltonian())?.values)
}

/// GMRE of one theory at order `m` against `exact` (the oracle spectrum).
pub fn benchmark_cell<T: Real>(
    p: &SpectralProblem<T>,
    theory: Theory,
    m: u32,
    exact: &[T],
    cfg: &SolverConfig<T>,
) -> Result<T> {
    let approx = (1..=p.n())
        .map(|k| theory.energy(p, Level(k), m, cfg))
        .collect::<Result<Vec<T>>>()?;
    let pairing = nearest_pairing(&approx, exact)?;
    let matched: Vec<T> = pairing.iter().map(|&j| exact[j]).collect();
    gmre(&approx, &matched)
}

/// Row for order `m`. Cell failures are recorded, not propagated.
pub fn benchmark_row<T: Real>(p: &SpectralProblem<T>, m: u32, exact: &[T], cfg: &SolverConfig<T>) -> BenchmarkRow<T> {
    let mut failures = Vec::new();
    let mut cell = |theory: Theory| match benchmark_cell(p, theory, m, exact, cfg) {
        Ok(v) => Some(v),
        Err(e) => {
            failures.push(format!("{theory:?}: {e}"));
            None
        }
    };
    let gmre_fpt = cell(Theory::Feenberg);
    let gmre_bwpt = cell(Theory::BrillouinWigner);
    let gmre_rspt = cell(Theory::RayleighSchrodinger);
    BenchmarkRow {
        m,
        gmre_fpt,
        gmre_bwpt,
        gmre_rspt,
        failures,
    }
}

/// Rows for `m = 0..=m_max`.
pub fn benchmark<T: Real>(p: &SpectralProblem<T>, m_max: u32, cfg: &SolverConfig<T>) -> Result<Vec<BenchmarkRow<T>>> {
    cfg.validate()?;
    let exact = oracle_energies(p)?;
    Ok((0..=m_max).map(|m| benchmark_row(p, m, &exact, cfg)).collect())
}

/// Partial sums `S_n = G_BW Σ_{j=0..n} (Δ/(z − ω_τ))^j` of the geometric
/// expansion of `G_ττ[mask]` around `G_BW = i/(z − ω_τ)`, for `n < n_terms`.
pub fn resummation_partial_sums<T: Real>(
    p: &SpectralProblem<T>,
    z: T,
    tau: Level,
    mask: SubspaceMask,
    n_terms: usize,
) -> Result<Vec<C<T>>> {
    let mut table = ShiftedEnergyTable::new(p, z);
    let delta = table.local_self_energy(tau, mask)?;
    let gap = re(z - p.omega_at(tau));
    if gap.norm() == T::zero() {
        return Err(Error::DegenerateDenominator {
            level: tau.0,
            gap: 0.0,
        });
    }
    let ratio = delta / gap;
    if ratio.norm() >= T::one() {
        return Err(Error::NonconvergentRatio {
            ratio: ratio.norm().as_f64(),
        });
    }
    let g_bw = imag_unit::<T>() / gap;
    let mut out = Vec::with_capacity(n_terms);
    let mut power = re(T::one());
    let mut sum = re(T::zero());
    for _ in 0..n_terms {
        sum += power;
        out.push(g_bw * sum);
        power *= ratio;
    }
    Ok(out)
}
