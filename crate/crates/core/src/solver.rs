//! Self-consistent eigenvalue solver `E = Z_τ0(E)`.

use crate::error::{Error, Result};
use crate::greens::{Order, ShiftedEnergyTable, DEFAULT_GUARD};
use crate::level::{Level, SubspaceMask};
use crate::linalg::determinant;
use crate::problem::SpectralProblem;
use crate::scalar::{re, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Acceleration {
    Plain,
    Steffensen,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig<T> {
    /// Relative residual tolerance on `|Z(E) − E|`.
    pub tol: T,
    pub max_iter: usize,
    pub accel: Acceleration,
    /// Degeneracy guard relative to the energy scale.
    pub guard: T,
    /// Broadening `ε` added to the trial energy as `iε`.
    pub epsilon: T,
}

impl<T: Real> Default for SolverConfig<T> {
    fn default() -> Self {
        Self {
            tol: T::default_tol(),
            max_iter: 200,
            accel: Acceleration::Steffensen,
            guard: T::lit(DEFAULT_GUARD),
            epsilon: T::zero(),
        }
    }
}

impl<T: Real> SolverConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > T::zero()) {
            return Err(Error::InvalidConfig("tol must be positive".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidConfig("max_iter must be at least 1".into()));
        }
        if !(self.guard >= T::zero()) || !(self.epsilon >= T::zero()) {
            return Err(Error::InvalidConfig("guard and epsilon must be nonnegative".into()));
        }
        Ok(())
    }

    pub fn plain(mut self) -> Self {
        self.accel = Acceleration::Plain;
        self
    }

    #[inline]
    fn converged(&self, x: T, residual: T) -> bool {
        residual <= self.tol * x.abs().max(T::one())
    }
}

/// Converged fixed point of a scalar map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPoint<T> {
    pub value: T,
    pub iterations: usize,
    pub residual: T,
}

/// Fixed-point iteration `x ← f(x)` with optional Steffensen acceleration.
///
/// Each accelerated update uses `x − (f(x) − x)² / (f(f(x)) − 2f(x) + x)`.
/// It falls back to the plain double step `f(f(x))` when the denominator
/// vanishes or the update is more than twice the length of the previous one.
pub fn steffensen_iterate<T, F>(mut f: F, x0: T, cfg: &SolverConfig<T>) -> Result<FixedPoint<T>>
where
    T: Real,
    F: FnMut(T) -> Result<T>,
{
    cfg.validate()?;
    let mut x = x0;
    let mut last_step: Option<T> = None;
    let mut iterations = 0;
    loop {
        let fx = f(x)?;
        let residual = (fx - x).abs();
        if !fx.is_finite() {
            return Err(Error::NonFinite { what: "fixed-point map" });
        }
        if cfg.converged(x, residual) {
            return Ok(FixedPoint {
                value: x,
                iterations,
                residual,
            });
        }
        if iterations >= cfg.max_iter {
            return Err(Error::NoConvergence {
                iterations,
                last: x.as_f64(),
                residual: residual.as_f64(),
            });
        }
        iterations += 1;
        let next = match cfg.accel {
            Acceleration::Plain => fx,
            Acceleration::Steffensen => {
                let ffx = f(fx)?;
                let d1 = fx - x;
                let denom = ffx - (fx + fx) + x;
                let candidate = x - d1 * d1 / denom;
                let too_long = last_step
                    .map(|s| (candidate - x).abs() > s + s)
                    .unwrap_or(false);
                if denom.abs() < T::min_positive_value() || !candidate.is_finite() || too_long {
                    ffx
                } else {
                    candidate
                }
            }
        };
        last_step = Some((next - x).abs());
        x = next;
    }
}

/// `Z_τ0(E) = ω_τ0 + Δ_τ0τ0[∅](E + iε)` with exact self-energies.
pub fn feenberg_map<T: Real>(
    p: &SpectralProblem<T>,
    tau0: Level,
    energy: T,
    cfg: &SolverConfig<T>,
) -> Result<T> {
    feenberg_map_order(p, tau0, energy, Order::Exact, cfg)
}

/// Same as [`feenberg_map`] but with every self-energy truncated at `order`.
pub fn feenberg_map_order<T: Real>(
    p: &SpectralProblem<T>,
    tau0: Level,
    energy: T,
    order: Order,
    cfg: &SolverConfig<T>,
) -> Result<T> {
    if !energy.is_finite() {
        return Err(Error::NonFinite { what: "trial energy" });
    }
    let mut table = ShiftedEnergyTable::with_order(p, energy, order)
        .epsilon(cfg.epsilon)
        .guard(cfg.guard);
    let z = table.shifted_energy(tau0, SubspaceMask::EMPTY)?;
    debug_assert!(
        cfg.epsilon > T::zero() || z.im.abs() <= T::lit(1e-10) * p.energy_scale(),
        "imaginary part {} at real z",
        z.im
    );
    Ok(z.re)
}

/// Converged eigenvalue with diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenSolution<T> {
    pub tau0: Level,
    pub energy: T,
    pub iterations: usize,
    /// `|Z(E) − E|` at the returned energy.
    pub residual: T,
    /// Normalized `|det(E − H_[τ0])|`; see [`regularity_check`].
    pub regularity_margin: T,
    /// `|det(E − H)| / |det(E − H_[τ0])|`, an independent determinant
    /// evaluation of the pole condition.
    pub pole_residual: T,
    /// Unnormalized eigenstate, filled in on request.
    pub state: Option<crate::eigenstate::EigenState<T>>,
}

/// Solves `E = Z_τ0(E)` starting from `initial` (default `ω_τ0`).
pub fn solve_eigenvalue<T: Real>(
    p: &SpectralProblem<T>,
    tau0: Level,
    initial: Option<T>,
    cfg: &SolverConfig<T>,
) -> Result<EigenSolution<T>> {
    solve_eigenvalue_order(p, tau0, initial, Order::Exact, cfg)
}

pub(crate) fn solve_eigenvalue_order<T: Real>(
    p: &SpectralProblem<T>,
    tau0: Level,
    initial: Option<T>,
    order: Order,
    cfg: &SolverConfig<T>,
) -> Result<EigenSolution<T>> {
    cfg.validate()?;
    tau0.check(p.n())?;
    let x0 = initial.unwrap_or_else(|| p.omega_at(tau0));
    let fp = steffensen_iterate(|e| feenberg_map_order(p, tau0, e, order, cfg), x0, cfg)?;
    let reg = regularity_check(p, tau0, fp.value, cfg.guard);
    if order == Order::Exact && !reg.ok {
        return Err(Error::RegularityViolated {
            energy: fp.value.as_f64(),
            margin: reg.margin.as_f64(),
        });
    }
    Ok(EigenSolution {
        tau0,
        energy: fp.value,
        iterations: fp.iterations,
        residual: fp.residual,
        regularity_margin: reg.margin,
        pole_residual: pole_residual(p, tau0, fp.value),
        state: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Regularity<T> {
    pub ok: bool,
    pub margin: T,
}

/// Checks `det(E − H_[τ0]) ≠ 0`.
///
/// The margin is `|det(E − H_[τ0])| / Π_{j≠τ0} max(1, |E − ω_j|)` and the
/// condition holds when it exceeds `guard`.
pub fn regularity_check<T: Real>(p: &SpectralProblem<T>, tau0: Level, energy: T, guard: T) -> Regularity<T> {
    let mask = SubspaceMask::EMPTY.with(tau0);
    let det = determinant(&p.resolvent_block(re(energy), mask)).norm();
    let norm = mask
        .retained(p.n())
        .fold(T::one(), |acc, j| acc * (energy - p.omega()[j]).abs().max(T::one()));
    let margin = det / norm;
    Regularity {
        ok: margin > guard,
        margin,
    }
}

/// `|det(E − H)| / |det(E − H_[τ0])|`.
pub fn pole_residual<T: Real>(p: &SpectralProblem<T>, tau0: Level, energy: T) -> T {
    let z = re(energy);
    let full = determinant(&p.resolvent_block(z, SubspaceMask::EMPTY)).norm();
    let sub = determinant(&p.resolvent_block(z, SubspaceMask::EMPTY.with(tau0))).norm();
    full / sub
}
