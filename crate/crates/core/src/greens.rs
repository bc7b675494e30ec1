//! Recursive Green's functions on subspaces.
//!
//! For a trial energy `z` and a subspace `M_[mask]` (all levels except the
//! excluded set), the diagonal element of the recursive Green's function is
//! the effective propagator
//!
//! ```text
//! G_ττ[mask] = i / (z − E_τ[mask]),   E_τ[mask] = ω_τ + Δ_ττ[mask]
//! ```
//!
//! The shifted energies are evaluated bottom-up: the local transition state
//! `g_τ[mask]` obeys
//!
//! ```text
//! g_τ[mask] = e_τ + Σ_{τ' ∉ mask∪{τ}} λ V_τ'τ / (z − E_τ'[mask∪{τ}]) · g_τ'[mask∪{τ}]
//! ```
//!
//! and closes into the self-energy `Δ_ττ[mask] = λV_ττ + λ Σ_b V_τb g_τ[mask](b)`.
//! At `|mask| = N−1` there are no intermediate states and `E = ω_τ + λV_ττ`.
//! Every entry is memoized by `(τ, mask)`; a full evaluation rooted at `τ0`
//! touches each subset containing `τ0` once, `O(2^N·N²)` work in total.
//!
//! Truncated orders replace the closed recursion by an explicit depth-limited
//! cycle sum so that only terms up to a given power of `λ` survive.

use std::collections::{BTreeSet, HashMap};

use crate::error::{Error, Result};
use crate::level::{Level, SubspaceMask};
use crate::linalg::determinant;
use crate::problem::SpectralProblem;
use crate::scalar::{imag_unit, re, Real, C};

/// Truncation of the local self-energies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Order {
    /// Keep cycle terms whose explicit power of `λ` is at most `m`.
    Finite(u32),
    /// All cycles; the exact continued fraction.
    Exact,
}

impl Order {
    fn max_cycle_len(self) -> Option<usize> {
        match self {
            Order::Finite(m) => Some(m as usize),
            Order::Exact => None,
        }
    }
}

/// Default degeneracy guard, relative to the problem's energy scale.
pub const DEFAULT_GUARD: f64 = 1e-13;

#[derive(Debug, Clone)]
struct Entry<T> {
    energy: C<T>,
    /// Local transition state over all `N` levels (exact order only).
    state: Option<Vec<C<T>>>,
}

/// Memo of shifted energies `E_τ[mask]` at one trial energy `z = E + iε`.
///
/// A table is bound to one problem and one truncation order. It is not
/// shared across threads; independent solves build their own.
#[derive(Debug, Clone)]
pub struct ShiftedEnergyTable<'p, T> {
    problem: &'p SpectralProblem<T>,
    z: C<T>,
    epsilon: T,
    order: Order,
    guard: T,
    scale: T,
    entries: HashMap<(usize, SubspaceMask), Entry<T>>,
}

impl<'p, T: Real> ShiftedEnergyTable<'p, T> {
    /// Exact table at real trial energy `energy` with `ε = 0`.
    pub fn new(problem: &'p SpectralProblem<T>, energy: T) -> Self {
        Self::with_order(problem, energy, Order::Exact)
    }

    pub fn with_order(problem: &'p SpectralProblem<T>, energy: T, order: Order) -> Self {
        Self {
            problem,
            z: re(energy),
            epsilon: T::zero(),
            order,
            guard: T::lit(DEFAULT_GUARD),
            scale: problem.energy_scale(),
            entries: HashMap::new(),
        }
    }

    /// Adds the broadening `iε` to the trial energy. Clears the memo.
    pub fn epsilon(mut self, epsilon: T) -> Self {
        self.z = C::new(self.z.re, epsilon);
        self.epsilon = epsilon;
        self.entries.clear();
        self
    }

    /// Relative degeneracy guard. Clears the memo.
    pub fn guard(mut self, guard: T) -> Self {
        self.guard = guard;
        self.entries.clear();
        self
    }

    #[inline]
    pub fn z(&self) -> C<T> {
        self.z
    }

    #[inline]
    pub fn broadening(&self) -> T {
        self.epsilon
    }

    #[inline]
    pub fn order(&self) -> Order {
        self.order
    }

    #[inline]
    pub fn problem(&self) -> &'p SpectralProblem<T> {
        self.problem
    }

    /// Shifted energy `E_τ[mask] = ω_τ + Δ_ττ[mask]`.
    pub fn shifted_energy(&mut self, tau: Level, mask: SubspaceMask) -> Result<C<T>> {
        let t = self.check(tau, mask)?;
        self.entry(t, mask)
    }

    /// Local self-energy `Δ_ττ[mask]`.
    pub fn local_self_energy(&mut self, tau: Level, mask: SubspaceMask) -> Result<C<T>> {
        let e = self.shifted_energy(tau, mask)?;
        Ok(e - self.problem.omega_at(tau))
    }

    /// Effective propagator `G_ττ[mask] = i/(z − E_τ[mask])`.
    pub fn effective_propagator(&mut self, tau: Level, mask: SubspaceMask) -> Result<C<T>> {
        let e = self.shifted_energy(tau, mask)?;
        let d = self.denominator(tau.idx(), e)?;
        Ok(imag_unit::<T>() / d)
    }

    /// Number of memoized `(τ, mask)` entries.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries whose excluded set contains `root`.
    pub fn count_rooted(&self, root: Level) -> usize {
        self.entries.keys().filter(|(_, m)| m.contains(root)).count()
    }

    /// Distinct subspace masks whose Green's function diagonal was evaluated.
    pub fn green_masks(&self) -> BTreeSet<SubspaceMask> {
        self.entries.keys().map(|&(_, m)| m).collect()
    }

    /// All memoized `(τ, mask, E_τ[mask])`, sorted by mask then level.
    pub fn entries(&self) -> Vec<(Level, SubspaceMask, C<T>)> {
        let mut out: Vec<_> = self
            .entries
            .iter()
            .map(|(&(t, m), e)| (Level::from_idx(t), m, e.energy))
            .collect();
        out.sort_by_key(|&(l, m, _)| (m, l));
        out
    }

    fn check(&self, tau: Level, mask: SubspaceMask) -> Result<usize> {
        let n = self.problem.n();
        tau.check(n)?;
        mask.check(n)?;
        if mask.contains(tau) {
            return Err(Error::InvalidRange(format!(
                "level {tau} lies in its own excluded set {mask:?}"
            )));
        }
        Ok(tau.idx())
    }

    fn denominator(&self, t: usize, energy: C<T>) -> Result<C<T>> {
        let d = self.z - energy;
        if d.norm() < self.guard * self.scale {
            return Err(Error::DegenerateDenominator {
                level: t + 1,
                gap: d.norm().as_f64(),
            });
        }
        Ok(d)
    }

    fn entry(&mut self, t: usize, mask: SubspaceMask) -> Result<C<T>> {
        if let Some(e) = self.entries.get(&(t, mask)) {
            return Ok(e.energy);
        }
        let entry = match self.order.max_cycle_len() {
            None => self.exact_entry(t, mask)?,
            Some(m) => Entry {
                energy: re(self.problem.omega()[t]) + self.truncated_self_energy(t, mask, m)?,
                state: None,
            },
        };
        let energy = entry.energy;
        self.entries.insert((t, mask), entry);
        Ok(energy)
    }

    fn exact_entry(&mut self, t: usize, mask: SubspaceMask) -> Result<Entry<T>> {
        let p = self.problem;
        let n = p.n();
        let inner = mask.with_idx(t);
        let sub: Vec<usize> = inner.retained(n).collect();
        let mut g = vec![re(T::zero()); n];
        g[t] = re(T::one());
        for &a in &sub {
            let ea = self.entry(a, inner)?;
            let coef = p.coupling(a, t) / self.denominator(a, ea)?;
            let child = self.entries[&(a, inner)]
                .state
                .as_ref()
                .expect("exact entries carry their state");
            for &b in &sub {
                g[b] += coef * child[b];
            }
        }
        let mut delta = p.coupling(t, t);
        for &b in &sub {
            delta += p.coupling(t, b) * g[b];
        }
        Ok(Entry {
            energy: re(p.omega()[t]) + delta,
            state: Some(g),
        })
    }

    /// `Δ^(m)_tt[mask]`: the diagonal term for `m ≥ 1` plus every simple cycle
    /// `t → a1 → … → al → t` on the subspace with `l + 1 ≤ m`.
    fn truncated_self_energy(&mut self, t: usize, mask: SubspaceMask, m: usize) -> Result<C<T>> {
        let p = self.problem;
        if m == 0 {
            return Ok(re(T::zero()));
        }
        let mut delta = p.coupling(t, t);
        if m >= 2 {
            self.cycle_dfs(t, t, mask.with_idx(t), re(T::one()), 1, m - 1, &mut delta)?;
        }
        Ok(delta)
    }

    #[allow(clippy::too_many_arguments)]
    fn cycle_dfs(
        &mut self,
        root: usize,
        cur: usize,
        visited: SubspaceMask,
        weight: C<T>,
        depth: usize,
        max_depth: usize,
        acc: &mut C<T>,
    ) -> Result<()> {
        let p = self.problem;
        let n = p.n();
        for a in visited.retained(n) {
            let ea = self.entry(a, visited)?;
            let w = weight * p.coupling(a, cur) / self.denominator(a, ea)?;
            *acc += w * p.coupling(root, a);
            if depth < max_depth {
                self.cycle_dfs(root, a, visited.with_idx(a), w, depth + 1, max_depth, acc)?;
            }
        }
        Ok(())
    }
}

/// Determinant representation of the effective propagator,
/// `i·det(z − H_[mask∪{τ}]) / det(z − H_[mask])`, with `det(0×0) = 1`.
pub fn propagator_det_ratio<T: Real>(
    p: &SpectralProblem<T>,
    z: C<T>,
    tau: Level,
    mask: SubspaceMask,
) -> Result<C<T>> {
    let n = p.n();
    tau.check(n)?;
    mask.check(n)?;
    if mask.contains(tau) {
        return Err(Error::InvalidRange(format!(
            "level {tau} lies in its own excluded set {mask:?}"
        )));
    }
    let den = determinant(&p.resolvent_block(z, mask));
    let num = determinant(&p.resolvent_block(z, mask.with(tau)));
    let dim = (n - mask.len()) as i32;
    let threshold = T::lit(1e-14) * (p.energy_scale() + z.norm()).powi(dim);
    if den.norm() < threshold {
        return Err(Error::SingularDenominator {
            magnitude: den.norm().as_f64(),
        });
    }
    Ok(imag_unit::<T>() * num / den)
}

/// Path and Green's-function counts at step `k` of an `n`-level problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CountIdentities {
    /// Ordered path indices `P(n−1, k−1)`.
    pub paths: u128,
    /// Distinct Green's functions `C(n−1, k−1)`.
    pub greens: u128,
    /// Subspace dimension `n − k`.
    pub dim: usize,
    /// Shifted energies over all steps, `(n−1)·2^(n−2)`.
    pub shifted_total: u128,
    /// Green's functions over all steps including the full resolvent, `2^(n−1)`.
    pub greens_total: u128,
}

pub fn count_identities(n: usize, k: usize) -> Result<CountIdentities> {
    if n < 2 || k < 1 || k > n - 1 || n > 100 {
        return Err(Error::InvalidRange(format!(
            "need 1 <= k <= n-1, got n={n}, k={k}"
        )));
    }
    let m = (n - 1) as u128;
    let r = (k - 1) as u128;
    let paths: u128 = (0..r).map(|i| m - i).product();
    let factorial: u128 = (1..=r).product();
    let shifted_total = if n >= 2 { m << (n - 2) } else { 0 };
    Ok(CountIdentities {
        paths,
        greens: paths / factorial,
        dim: n - k,
        shifted_total,
        greens_total: 1u128 << (n - 1),
    })
}
