//! Unnormalized eigenstates with the `τ0` component fixed to 1.

use crate::error::{Error, Result};
use crate::greens::ShiftedEnergyTable;
use crate::level::{Level, SubspaceMask};
use crate::linalg::{determinant, solve_linear, ComplexMatrix};
use crate::problem::SpectralProblem;
use crate::scalar::{imag_unit, re, Real, C};
use crate::solver::SolverConfig;

/// Largest level count accepted by the explicit path series.
pub const MAX_SERIES_LEVELS: usize = 9;

#[derive(Debug, Clone, PartialEq)]
pub struct EigenState<T> {
    pub tau0: Level,
    /// `⟨α|τ̄0⟩` for every level; the `τ0` entry is exactly 1.
    pub amplitudes: Vec<C<T>>,
    pub lambda: T,
}

impl<T: Real> EigenState<T> {
    pub fn norm(&self) -> T {
        crate::linalg::vec_norm(&self.amplitudes)
    }

    /// Unit-norm copy of the amplitudes.
    pub fn normalized(&self) -> Result<Vec<C<T>>> {
        let n = self.norm();
        if !(n > T::zero()) || !n.is_finite() {
            return Err(Error::ZeroNorm);
        }
        Ok(self.amplitudes.iter().map(|a| a / n).collect())
    }

    /// `‖(E − H)·state‖`.
    pub fn residual(&self, p: &SpectralProblem<T>, energy: T) -> T {
        let r = p.hamiltonian().shifted(re(energy)).mul_vec(&self.amplitudes);
        crate::linalg::vec_norm(&r)
    }
}

/// Solves the projected system `P(E − H)P g' = λ P V |τ0⟩` on the complement
/// of `τ0` and returns `|τ0⟩ + g'`.
pub fn build_eigenstate<T: Real>(
    p: &SpectralProblem<T>,
    tau0: Level,
    energy: T,
    cfg: &SolverConfig<T>,
) -> Result<EigenState<T>> {
    let n = p.n();
    tau0.check(n)?;
    let t = tau0.idx();
    let z = C::new(energy, cfg.epsilon);
    let mask = SubspaceMask::EMPTY.with(tau0);
    let block = p.resolvent_block(z, mask);
    let keep: Vec<usize> = mask.retained(n).collect();
    let rhs: Vec<C<T>> = keep.iter().map(|&a| p.coupling(a, t)).collect();
    let g = solve_linear(&block, &rhs)?;
    let mut amplitudes = vec![re(T::zero()); n];
    amplitudes[t] = re(T::one());
    for (&a, v) in keep.iter().zip(g) {
        amplitudes[a] = v;
    }
    Ok(EigenState {
        tau0,
        amplitudes,
        lambda: p.lambda(),
    })
}

/// Explicit sum over every repetition-free path `τ0 → τ1 → … → τl`,
/// each weighted by `λ^l V_τlτl−1 ⋯ V_τ1τ0 / Π_i (E − E_τi[τ0…τi−1])`.
///
/// Factorial in `N`; verification use only.
pub fn build_eigenstate_series<T: Real>(
    p: &SpectralProblem<T>,
    tau0: Level,
    energy: T,
) -> Result<EigenState<T>> {
    let n = p.n();
    if n > MAX_SERIES_LEVELS {
        return Err(Error::PathLimitExceeded {
            n,
            max: MAX_SERIES_LEVELS,
        });
    }
    tau0.check(n)?;
    let mut table = ShiftedEnergyTable::new(p, energy);
    let mut amplitudes = vec![re(T::zero()); n];
    amplitudes[tau0.idx()] = re(T::one());
    walk_paths(
        &mut table,
        tau0.idx(),
        SubspaceMask::EMPTY.with(tau0),
        re(T::one()),
        &mut amplitudes,
    )?;
    Ok(EigenState {
        tau0,
        amplitudes,
        lambda: p.lambda(),
    })
}

fn walk_paths<T: Real>(
    table: &mut ShiftedEnergyTable<'_, T>,
    cur: usize,
    visited: SubspaceMask,
    weight: C<T>,
    out: &mut [C<T>],
) -> Result<()> {
    let p = table.problem();
    let z = table.z();
    for a in visited.retained(p.n()) {
        let level = Level::from_idx(a);
        let ea = table.shifted_energy(level, visited)?;
        let w = weight * p.coupling(a, cur) / (z - ea);
        out[a] += w;
        walk_paths(table, a, visited.with(level), w, out)?;
    }
    Ok(())
}

/// Probabilities `|⟨α|τ̄0⟩|² / Σ_β |⟨β|τ̄0⟩|²`.
pub fn composition_probabilities<T: Real>(s: &EigenState<T>) -> Result<Vec<T>> {
    if !s.amplitudes.iter().all(|a| a.re.is_finite() && a.im.is_finite()) {
        return Err(Error::NonFinite { what: "amplitudes" });
    }
    let total = s.amplitudes.iter().fold(T::zero(), |acc, a| acc + a.norm_sqr());
    if !(total > T::zero()) {
        return Err(Error::ZeroNorm);
    }
    Ok(s.amplitudes.iter().map(|a| a.norm_sqr() / total).collect())
}

/// Ordered, repetition-free transition process `τ0 → τ1 → … → τl`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransitionPath(Vec<Level>);

impl TransitionPath {
    pub fn new(levels: Vec<Level>) -> Result<Self> {
        if levels.len() < 2 {
            return Err(Error::InvalidPath("a path needs at least one transition".into()));
        }
        let mask = SubspaceMask::from_levels(levels.iter().copied());
        if mask.len() != levels.len() {
            return Err(Error::InvalidPath(format!("repeated level in {levels:?}")));
        }
        Ok(Self(levels))
    }

    pub fn levels(&self) -> &[Level] {
        &self.0
    }

    /// Number of transitions `l`.
    pub fn len(&self) -> usize {
        self.0.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Arrangement of the effective propagators in a general term.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TermOrdering {
    /// `G_τlτl[τl−1…τ0] ⋯ G_τ1τ1[τ0]`.
    Forward,
    /// `G_τlτl[τ0] ⋯ G_τ1τ1[τ2…τl τ0]`.
    Feenberg,
    /// `i^l det(E − H_[τl…τ0]) / det(E − H_[τ0])`.
    DetRatio,
}

/// Propagator product for `path` under `ordering`, evaluated at real `E`.
pub fn general_term<T: Real>(
    p: &SpectralProblem<T>,
    energy: T,
    path: &TransitionPath,
    ordering: TermOrdering,
) -> Result<C<T>> {
    let l = path.len();
    match ordering {
        TermOrdering::Forward => general_term_permuted(p, energy, path, &(1..=l).collect::<Vec<_>>()),
        TermOrdering::Feenberg => general_term_permuted(p, energy, path, &(1..=l).rev().collect::<Vec<_>>()),
        TermOrdering::DetRatio => {
            let levels = path.levels();
            levels.iter().try_for_each(|lv| lv.check(p.n()).map(|_| ()))?;
            let z = re(energy);
            let root = SubspaceMask::EMPTY.with(levels[0]);
            let all = SubspaceMask::from_levels(levels.iter().copied());
            let den = determinant(&p.resolvent_block(z, root));
            if den.norm() < T::lit(1e-14) * p.energy_scale().powi((p.n() - 1) as i32) {
                return Err(Error::SingularDenominator {
                    magnitude: den.norm().as_f64(),
                });
            }
            let num = determinant(&p.resolvent_block(z, all));
            Ok(imag_unit::<T>().powi(l as i32) * num / den)
        }
    }
}

/// Propagator product where intermediate states are dressed in the order
/// given by `assignment` (a permutation of `1..=l`): the `k`-th assigned
/// state `τ_a` gets the propagator on the subspace excluding `τ0` and the
/// states assigned before it.
pub fn general_term_permuted<T: Real>(
    p: &SpectralProblem<T>,
    energy: T,
    path: &TransitionPath,
    assignment: &[usize],
) -> Result<C<T>> {
    let levels = path.levels();
    let l = path.len();
    let mut sorted = assignment.to_vec();
    sorted.sort_unstable();
    if sorted != (1..=l).collect::<Vec<_>>() {
        return Err(Error::InvalidPath(format!("{assignment:?} is not a permutation of 1..={l}")));
    }
    levels.iter().try_for_each(|lv| lv.check(p.n()).map(|_| ()))?;
    let mut table = ShiftedEnergyTable::new(p, energy);
    let mut mask = SubspaceMask::EMPTY.with(levels[0]);
    let mut product = re(T::one());
    for &k in assignment {
        product *= table.effective_propagator(levels[k], mask)?;
        mask = mask.with(levels[k]);
    }
    Ok(product)
}

/// Builds the state for a converged solution and attaches it.
pub fn attach_state<T: Real>(
    p: &SpectralProblem<T>,
    mut solution: crate::solver::EigenSolution<T>,
    cfg: &SolverConfig<T>,
) -> Result<crate::solver::EigenSolution<T>> {
    solution.state = Some(build_eigenstate(p, solution.tau0, solution.energy, cfg)?);
    Ok(solution)
}

/// Hellmann–Feynman slope `⟨ψ|V|ψ⟩ / ⟨ψ|ψ⟩` of an eigenvalue branch.
pub fn energy_slope<T: Real>(p: &SpectralProblem<T>, s: &EigenState<T>) -> Result<T> {
    let psi = s.normalized()?;
    let v: &ComplexMatrix<T> = p.v().as_matrix();
    Ok(crate::linalg::inner(&psi, &v.mul_vec(&psi)).re)
}
