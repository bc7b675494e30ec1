//! Eigenpaths `E_τ0(λ)` traced by predictor–corrector continuation.
//!
//! The predictor extrapolates along the secant of the last two accepted
//! points (the Hellmann–Feynman slope on the first step) by a fixed arc
//! length in `(λ, E/spread)` coordinates. The corrector is the Steffensen
//! solver at fixed `λ`. A step is rejected and halved if the corrector fails
//! or if the new point looks like a different branch. The energy jump is
//! compared with the local secant, and the eigenvector overlap with the
//! previous point must stay high.

use rayon::prelude::*;

use crate::eigenstate::{build_eigenstate, composition_probabilities, energy_slope};
use crate::error::{Error, Result};
use crate::level::Level;
use crate::linalg::inner;
use crate::problem::SpectralProblem;
use crate::scalar::{Real, C};
use crate::solver::{solve_eigenvalue, SolverConfig};

/// Distance below which two resampled energies are reported as a near crossing.
pub const NEAR_CROSSING: f64 = 1e-8;

/// Corrector iteration count at or below which an accepted step is "easy".
const EASY_ITERATIONS: usize = 3;

/// Consecutive easy steps before the step length doubles.
const EASY_STREAK: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuationConfig<T> {
    pub lambda_start: T,
    pub lambda_end: T,
    /// Arc length of the first step.
    pub initial_step: T,
    pub min_step: T,
    pub max_step: T,
    pub corrector: SolverConfig<T>,
    /// Largest accepted `|ΔE|` as a multiple of the secant prediction.
    pub jump_guard: T,
    /// Smallest accepted `|⟨ψ_prev|ψ_new⟩|` between normalized states.
    pub min_overlap: T,
}

impl<T: Real> Default for ContinuationConfig<T> {
    fn default() -> Self {
        Self {
            lambda_start: T::zero(),
            lambda_end: T::one(),
            initial_step: T::lit(0.02),
            min_step: T::lit(1e-5),
            max_step: T::lit(0.05),
            corrector: SolverConfig {
                // Evaluation noise in Z(E) reaches a few 1e-14 at strong
                // coupling, so the corrector certifies one digit less.
                tol: T::default_tol() * T::lit(10.0),
                ..SolverConfig::default()
            },
            jump_guard: T::lit(5.0),
            min_overlap: T::lit(0.5),
        }
    }
}

impl<T: Real> ContinuationConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.into()));
        if !(self.lambda_start >= T::zero()) || !(self.lambda_end >= self.lambda_start) || !self.lambda_end.is_finite() {
            return bad("need 0 ≤ lambda_start ≤ lambda_end");
        }
        if !(self.min_step > T::zero()) || !(self.min_step <= self.initial_step) || !(self.initial_step <= self.max_step) {
            return bad("need 0 < min_step ≤ initial_step ≤ max_step");
        }
        if !(self.jump_guard > T::one()) {
            return bad("jump_guard must exceed 1");
        }
        if !(self.min_overlap >= T::zero() && self.min_overlap < T::one()) {
            return bad("min_overlap must lie in [0, 1)");
        }
        self.corrector.validate()
    }
}

/// One accepted point on an eigenpath.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSample<T> {
    pub lambda: T,
    pub energy: T,
    /// `|Z(E) − E|` at the accepted point.
    pub residual: T,
    pub regularity_margin: T,
    pub probabilities: Vec<T>,
    /// Hellmann–Feynman `dE/dλ`.
    pub slope: T,
    state: Vec<C<T>>,
}

impl<T: Real> PathSample<T> {
    /// Unit-norm eigenvector.
    pub fn state(&self) -> &[C<T>] {
        &self.state
    }
}

/// How a trace ended.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PathStatus {
    Complete,
    /// The step shrank below `min_step` at this `λ` without an accepted point.
    StepUnderflow { lambda: f64 },
    /// The regularity condition failed at this `λ` and could not be stepped around.
    RegularityViolated { lambda: f64, margin: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenPath<T> {
    pub tau0: Level,
    pub samples: Vec<PathSample<T>>,
    pub status: PathStatus,
    /// Number of rejected trial steps.
    pub rejected: usize,
}

impl<T: Real> EigenPath<T> {
    pub fn is_complete(&self) -> bool {
        self.status == PathStatus::Complete
    }

    pub fn last(&self) -> &PathSample<T> {
        self.samples.last().expect("a path holds at least its starting point")
    }
}

/// Solves at one `λ` from `guess` and fills in the state data.
fn settle<T: Real>(
    base: &SpectralProblem<T>,
    tau0: Level,
    lambda: T,
    guess: Option<T>,
    cfg: &SolverConfig<T>,
) -> Result<(PathSample<T>, usize)> {
    let p = base.with_lambda(lambda);
    let sol = solve_eigenvalue(&p, tau0, guess, cfg)?;
    let st = build_eigenstate(&p, tau0, sol.energy, cfg)?;
    let sample = PathSample {
        lambda,
        energy: sol.energy,
        residual: sol.residual,
        regularity_margin: sol.regularity_margin,
        probabilities: composition_probabilities(&st)?,
        slope: energy_slope(&p, &st)?,
        state: st.normalized()?,
    };
    Ok((sample, sol.iterations))
}

fn overlap<T: Real>(a: &[C<T>], b: &[C<T>]) -> T {
    inner(a, b).norm()
}

/// Traces the branch that starts at `ω_τ0` (or its corrected value at
/// `lambda_start`). Numerical trouble ends the path early with a status
/// instead of an error; errors are reserved for bad input.
pub fn trace_eigenpath<T: Real>(
    p: &SpectralProblem<T>,
    tau0: Level,
    cfg: &ContinuationConfig<T>,
) -> Result<EigenPath<T>> {
    cfg.validate()?;
    tau0.check(p.n())?;
    let solver = &cfg.corrector;
    let spread = p.omega_spread();
    let (first, _) = settle(p, tau0, cfg.lambda_start, None, solver)?;
    let mut samples = vec![first];
    let mut h = cfg.initial_step;
    let mut easy = 0;
    let mut rejected = 0;
    let mut status = PathStatus::Complete;

    while samples.last().map(|s| s.lambda < cfg.lambda_end).unwrap_or(false) {
        let cur = samples.last().expect("nonempty");
        let slope = match samples.len() {
            1 => cur.slope,
            k => {
                let prev = &samples[k - 2];
                (cur.energy - prev.energy) / (cur.lambda - prev.lambda)
            }
        };
        let scaled = slope / spread;
        let mut dl = h / (T::one() + scaled * scaled).sqrt();
        let remaining = cfg.lambda_end - cur.lambda;
        // Snap to the end rather than leave a sliver shorter than min_step.
        if dl >= remaining - cfg.min_step {
            dl = remaining;
        }
        let lambda = if dl == remaining { cfg.lambda_end } else { cur.lambda + dl };
        let predicted = cur.energy + slope * dl;

        let verdict = match settle(p, tau0, lambda, Some(predicted), solver) {
            Ok((next, iterations)) => {
                let secant = (slope.abs() * dl).max(spread * cfg.min_step);
                let jumped = (next.energy - cur.energy).abs() > cfg.jump_guard * secant;
                let turned = overlap(&cur.state, &next.state) < cfg.min_overlap;
                if jumped || turned {
                    Err(Error::InvalidPath(format!(
                        "branch jump suspected at λ = {}",
                        lambda.as_f64()
                    )))
                } else {
                    Ok((next, iterations))
                }
            }
            Err(e) => Err(e),
        };

        match verdict {
            Ok((next, iterations)) => {
                samples.push(next);
                if iterations <= EASY_ITERATIONS {
                    easy += 1;
                    if easy >= EASY_STREAK {
                        h = (h + h).min(cfg.max_step);
                        easy = 0;
                    }
                } else {
                    easy = 0;
                }
            }
            Err(e) => {
                rejected += 1;
                easy = 0;
                h /= T::lit(2.0);
                if h < cfg.min_step {
                    let at = samples.last().expect("nonempty").lambda.as_f64();
                    status = match e {
                        Error::RegularityViolated { margin, .. } => PathStatus::RegularityViolated { lambda: at, margin },
                        _ => PathStatus::StepUnderflow { lambda: at },
                    };
                    break;
                }
            }
        }
    }
    Ok(EigenPath {
        tau0,
        samples,
        status,
        rejected,
    })
}

/// Two branches closer than [`NEAR_CROSSING`] at a common grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct NearCrossing<T> {
    pub lambda: T,
    pub a: Level,
    pub b: Level,
    pub gap: T,
}

/// All branches on one shared `λ` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceSet<T> {
    pub paths: Vec<EigenPath<T>>,
    /// Union of every path's adaptive `λ` values.
    pub grid: Vec<T>,
    /// `energies[g][k]` is branch `k + 1` at `grid[g]`; `None` past the end
    /// of a partial path.
    pub energies: Vec<Vec<Option<T>>>,
    /// Composition of branch 1 at each grid point.
    pub ground_composition: Vec<Option<Vec<T>>>,
    pub crossings: Vec<NearCrossing<T>>,
    /// Grid points where the polished value was rejected and the
    /// interpolant was reported instead.
    pub interpolated: Vec<(Level, T)>,
}

/// Traces every branch in parallel and resamples them onto a common grid.
pub fn trace_all<T: Real>(p: &SpectralProblem<T>, cfg: &ContinuationConfig<T>) -> Result<TraceSet<T>> {
    cfg.validate()?;
    let paths = (1..=p.n())
        .into_par_iter()
        .map(|k| trace_eigenpath(p, Level(k), cfg))
        .collect::<Result<Vec<_>>>()?;
    let grid = common_grid(&paths);
    let columns: Vec<Resampled<T>> = paths.par_iter().map(|path| resample(p, path, &grid, cfg)).collect();

    let mut energies = vec![vec![None; paths.len()]; grid.len()];
    let mut interpolated = Vec::new();
    for (k, col) in columns.iter().enumerate() {
        for (g, e) in col.energies.iter().enumerate() {
            energies[g][k] = *e;
        }
        interpolated.extend(col.interpolated.iter().map(|&l| (Level(k + 1), l)));
    }
    let ground_composition = columns[0].probabilities.clone();

    let tol = T::lit(NEAR_CROSSING);
    let mut crossings = Vec::new();
    for (g, row) in energies.iter().enumerate() {
        for a in 0..row.len() {
            for b in a + 1..row.len() {
                if let (Some(ea), Some(eb)) = (row[a], row[b]) {
                    let gap = (ea - eb).abs();
                    if gap < tol {
                        crossings.push(NearCrossing {
                            lambda: grid[g],
                            a: Level(a + 1),
                            b: Level(b + 1),
                            gap,
                        });
                    }
                }
            }
        }
    }
    Ok(TraceSet {
        paths,
        grid,
        energies,
        ground_composition,
        crossings,
        interpolated,
    })
}

/// Sorted union of the sample `λ` values. Values within a few ulps merge.
pub fn common_grid<T: Real>(paths: &[EigenPath<T>]) -> Vec<T> {
    let mut grid: Vec<T> = paths.iter().flat_map(|p| p.samples.iter().map(|s| s.lambda)).collect();
    grid.sort_by(|a, b| a.partial_cmp(b).expect("finite λ"));
    grid.dedup_by(|b, a| close(*a, *b));
    grid
}

struct Resampled<T> {
    energies: Vec<Option<T>>,
    probabilities: Vec<Option<Vec<T>>>,
    interpolated: Vec<T>,
}

/// A path evaluated at an arbitrary `λ`.
#[derive(Debug, Clone, PartialEq)]
pub enum PathValue<T> {
    /// A stored sample, or a fresh solve seeded from the interpolant that
    /// stayed on the branch.
    Solved(PathSample<T>),
    /// The polished solve left the branch; only the interpolant is known.
    Interpolated(T),
    /// `λ` lies outside the traced range.
    OutOfRange,
}

impl<T: Real> PathValue<T> {
    pub fn energy(&self) -> Option<T> {
        match self {
            PathValue::Solved(s) => Some(s.energy),
            PathValue::Interpolated(e) => Some(*e),
            PathValue::OutOfRange => None,
        }
    }
}

struct Interpolant<T> {
    xs: Vec<T>,
    ys: Vec<T>,
    slopes: Vec<T>,
}

impl<T: Real> Interpolant<T> {
    fn new(path: &EigenPath<T>) -> Self {
        let xs: Vec<T> = path.samples.iter().map(|s| s.lambda).collect();
        let ys: Vec<T> = path.samples.iter().map(|s| s.energy).collect();
        let slopes = pchip_slopes(&xs, &ys);
        Self { xs, ys, slopes }
    }
}

fn close<T: Real>(a: T, b: T) -> bool {
    (a - b).abs() <= T::lit(4.0) * T::epsilon() * a.abs().max(T::one())
}

/// Evaluates `path` at `lambda`: a monotone cubic guess from the samples,
/// polished by the corrector and kept only if it stays on the branch.
pub fn sample_at<T: Real>(
    p: &SpectralProblem<T>,
    path: &EigenPath<T>,
    lambda: T,
    cfg: &ContinuationConfig<T>,
) -> PathValue<T> {
    value_at(p, path, &Interpolant::new(path), lambda, cfg)
}

fn value_at<T: Real>(
    p: &SpectralProblem<T>,
    path: &EigenPath<T>,
    it: &Interpolant<T>,
    lambda: T,
    cfg: &ContinuationConfig<T>,
) -> PathValue<T> {
    let xs = &it.xs;
    let (first, last) = (xs[0], *xs.last().expect("nonempty"));
    if (lambda > last && !close(lambda, last)) || (lambda < first && !close(lambda, first)) {
        return PathValue::OutOfRange;
    }
    // Interval [xs[i], xs[i+1]] holding lambda.
    let i = xs.partition_point(|x| *x <= lambda).saturating_sub(1).min(xs.len() - 1);
    if close(xs[i], lambda) {
        return PathValue::Solved(path.samples[i].clone());
    }
    if i + 1 < xs.len() && close(xs[i + 1], lambda) {
        return PathValue::Solved(path.samples[i + 1].clone());
    }
    let guess = hermite(xs, &it.ys, &it.slopes, i, lambda);
    let (a, b) = (&path.samples[i], &path.samples[i + 1]);
    let (lo, hi) = (a.energy, b.energy);
    // Room for an extremum inside the interval.
    let width = (hi - lo).abs() + (a.slope.abs() + b.slope.abs()) * (b.lambda - a.lambda) + T::lit(1e-12);
    let accepted = settle(p, path.tau0, lambda, Some(guess), &cfg.corrector).ok().filter(|(s, _)| {
        let inside = s.energy >= lo.min(hi) - width && s.energy <= lo.max(hi) + width;
        let aligned = overlap(&s.state, &a.state) >= cfg.min_overlap && overlap(&s.state, &b.state) >= cfg.min_overlap;
        inside && aligned
    });
    match accepted {
        Some((s, _)) => PathValue::Solved(s),
        None => PathValue::Interpolated(guess),
    }
}

fn resample<T: Real>(
    p: &SpectralProblem<T>,
    path: &EigenPath<T>,
    grid: &[T],
    cfg: &ContinuationConfig<T>,
) -> Resampled<T> {
    let it = Interpolant::new(path);
    let mut out = Resampled {
        energies: Vec::with_capacity(grid.len()),
        probabilities: Vec::with_capacity(grid.len()),
        interpolated: Vec::new(),
    };
    for &lam in grid {
        match value_at(p, path, &it, lam, cfg) {
            PathValue::Solved(s) => {
                out.energies.push(Some(s.energy));
                out.probabilities.push(Some(s.probabilities));
            }
            PathValue::Interpolated(e) => {
                out.energies.push(Some(e));
                out.probabilities.push(None);
                out.interpolated.push(lam);
            }
            PathValue::OutOfRange => {
                out.energies.push(None);
                out.probabilities.push(None);
            }
        }
    }
    out
}

/// Fritsch–Carlson monotone slopes for a piecewise cubic Hermite interpolant.
fn pchip_slopes<T: Real>(xs: &[T], ys: &[T]) -> Vec<T> {
    let n = xs.len();
    if n < 2 {
        return vec![T::zero(); n];
    }
    let h: Vec<T> = xs.windows(2).map(|w| w[1] - w[0]).collect();
    let d: Vec<T> = ys.windows(2).zip(&h).map(|(w, h)| (w[1] - w[0]) / *h).collect();
    let mut m = vec![T::zero(); n];
    m[0] = d[0];
    m[n - 1] = d[n - 2];
    for k in 1..n - 1 {
        if d[k - 1] * d[k] > T::zero() {
            let w1 = h[k] + h[k] + h[k - 1];
            let w2 = h[k] + h[k - 1] + h[k - 1];
            m[k] = (w1 + w2) / (w1 / d[k - 1] + w2 / d[k]);
        }
    }
    m
}

fn hermite<T: Real>(xs: &[T], ys: &[T], m: &[T], i: usize, x: T) -> T {
    let h = xs[i + 1] - xs[i];
    let t = (x - xs[i]) / h;
    let t2 = t * t;
    let t3 = t2 * t;
    let two = T::lit(2.0);
    let three = T::lit(3.0);
    let h00 = two * t3 - three * t2 + T::one();
    let h10 = t3 - two * t2 + t;
    let h01 = three * t2 - two * t3;
    let h11 = t3 - t2;
    h00 * ys[i] + h10 * h * m[i] + h01 * ys[i + 1] + h11 * h * m[i + 1]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{eig_hermitian_oracle, hermitian_from_polar, PolarEntry};
    use crate::problem::benchmark_problem;

    fn two_level() -> SpectralProblem<f64> {
        let v = hermitian_from_polar(
            &[
                PolarEntry { i: 1, j: 1, abs: 0.0, arg: 0.0 },
                PolarEntry { i: 1, j: 2, abs: 0.7, arg: 0.4 },
                PolarEntry { i: 2, j: 2, abs: 0.0, arg: 0.0 },
            ],
            2,
        )
        .unwrap();
        SpectralProblem::new(vec![0.2, 0.5], v, 0.0).unwrap()
    }

    #[test]
    fn two_level_branches_follow_closed_form() {
        let p = two_level();
        let cfg = ContinuationConfig::default();
        for (k, sign) in [(1, -1.0), (2, 1.0)] {
            let path = trace_eigenpath(&p, Level(k), &cfg).unwrap();
            assert!(path.is_complete());
            assert_eq!(path.last().lambda, 1.0);
            for s in &path.samples {
                let c = 4.0 * s.lambda * s.lambda * 0.49;
                let want = (0.7 + sign * (0.09 + c).sqrt()) / 2.0;
                assert!((s.energy - want).abs() < 1e-9, "λ {} : {} vs {want}", s.lambda, s.energy);
            }
        }
    }

    #[test]
    fn lambda_steps_increase_strictly() {
        let p = SpectralProblem::<f64>::random(4, 11, 0.0).unwrap();
        let path = trace_eigenpath(&p, Level(2), &ContinuationConfig::default()).unwrap();
        assert!(path.samples.windows(2).all(|w| w[1].lambda > w[0].lambda));
        for s in &path.samples {
            assert!((s.probabilities.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn empty_interval_yields_the_start_point() {
        let p = benchmark_problem::<f64>(0.0);
        let cfg = ContinuationConfig {
            lambda_end: 0.0,
            ..Default::default()
        };
        let path = trace_eigenpath(&p, Level(3), &cfg).unwrap();
        assert_eq!(path.samples.len(), 1);
        assert_eq!(path.samples[0].energy, 0.37);
        assert_eq!(path.samples[0].probabilities, vec![0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn benchmark_endpoints_match_oracle() {
        let p = benchmark_problem::<f64>(0.0);
        let set = trace_all(&p, &ContinuationConfig::default()).unwrap();
        assert!(set.paths.iter().all(|p| p.is_complete()));
        let oracle = eig_hermitian_oracle(&p.with_lambda(1.0).hamiltonian()).unwrap().values;
        let ends: Vec<f64> = set.energies.last().unwrap().iter().map(|e| e.unwrap()).collect();
        let pairing = crate::series::nearest_pairing(&ends, &oracle).unwrap();
        for (e, j) in ends.iter().zip(pairing) {
            assert!((e - oracle[j]).abs() < 1e-8);
        }
        assert_eq!(set.grid[0], 0.0);
        assert_eq!(set.energies[0].iter().map(|e| e.unwrap()).collect::<Vec<_>>(), p.omega());
        assert!(set.interpolated.is_empty());
    }

    #[test]
    fn resampled_grid_is_step_independent() {
        let p = SpectralProblem::<f64>::random(4, 5, 0.0).unwrap();
        let coarse = trace_all(&p, &ContinuationConfig::default()).unwrap();
        let fine = trace_all(
            &p,
            &ContinuationConfig {
                max_step: 0.025,
                initial_step: 0.01,
                ..Default::default()
            },
        )
        .unwrap();
        // Compare at the points both grids share, plus the endpoint.
        for (g, lam) in coarse.grid.iter().enumerate() {
            if let Some(h) = fine.grid.iter().position(|x| x == lam) {
                for k in 0..4 {
                    let (a, b) = (coarse.energies[g][k].unwrap(), fine.energies[h][k].unwrap());
                    assert!((a - b).abs() <= 1e-8);
                }
            }
        }
    }

    #[test]
    fn pchip_reproduces_lines() {
        let xs = [0.0, 0.3, 0.5, 1.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x - 1.0).collect();
        let m = pchip_slopes(&xs, &ys);
        assert!((hermite(&xs, &ys, &m, 1, 0.4) - (-0.2)).abs() < 1e-15);
    }

    #[test]
    fn config_is_validated() {
        let bad = ContinuationConfig::<f64> {
            min_step: 0.1,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
