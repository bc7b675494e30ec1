//! Subcommand implementations. Each returns [`Status`] on completion and an
//! error only for bad input, which the binary maps to exit code 1.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use feenberg::{
    attach_state, benchmark_row, determinant, eig_hermitian_oracle, oracle_energies, pole_residual,
    principal_submatrix, propagator_det_ratio, regularity_check, solve_eigenvalue, trace_all, Config, Continuation,
    Level, PathStatus, Problem, ShiftedEnergyTable, SubspaceMask,
};
use rayon::prelude::*;
use serde_json::json;

use crate::format::{g17, g17_opt, Csv};
use crate::problem_file::ProblemFile;

/// How a command finished.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Success,
    /// Some items failed numerically; output was still written.
    Partial,
}

impl Status {
    pub fn code(self) -> u8 {
        match self {
            Status::Success => 0,
            Status::Partial => 2,
        }
    }

    fn from_failures(n: usize) -> Self {
        if n == 0 {
            Status::Success
        } else {
            Status::Partial
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "feenberg", version, about = "Eigenvalues of H0 + λV by Feenberg perturbation theory")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the self-consistent equation for one or all levels.
    Solve(SolveArgs),
    /// Compare order-m FPT, BWPT and RSPT against exact diagonalization.
    Bench(BenchArgs),
    /// Trace every eigenpath in λ and write energies and ground-state composition.
    Trace(TraceArgs),
    /// Print regularity and pole diagnostics at one energy.
    Check(CheckArgs),
}

#[derive(Debug, Args)]
pub struct Source {
    /// Problem file (JSON).
    #[arg(required_unless_present = "random", conflicts_with = "random")]
    pub problem: Option<PathBuf>,
    /// Generate a random problem instead: level count and seed.
    #[arg(long, num_args = 2, value_names = ["N", "SEED"])]
    pub random: Option<Vec<u64>>,
}

impl Source {
    fn load(&self, lambda: Option<f64>) -> anyhow::Result<Problem> {
        if let Some(r) = &self.random {
            let (n, seed) = (r[0] as usize, r[1]);
            return Ok(Problem::random(n, seed, lambda.unwrap_or(0.0))?);
        }
        let path = self.problem.as_ref().expect("clap enforces a source");
        ProblemFile::load(path)?.problem(lambda)
    }
}

#[derive(Debug, Args)]
pub struct SolverArgs {
    /// Relative residual tolerance.
    #[arg(long, default_value_t = 1e-14)]
    pub tol: f64,
    #[arg(long, default_value_t = 200)]
    pub max_iter: usize,
    /// Iterate without Steffensen acceleration.
    #[arg(long)]
    pub plain: bool,
    /// Degeneracy guard relative to the energy scale.
    #[arg(long, default_value_t = feenberg::DEFAULT_GUARD)]
    pub guard: f64,
}

impl SolverArgs {
    fn config(&self) -> anyhow::Result<Config> {
        let mut cfg = Config {
            tol: self.tol,
            max_iter: self.max_iter,
            guard: self.guard,
            ..Config::default()
        };
        if self.plain {
            cfg = cfg.plain();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub source: Source,
    /// Coupling λ (defaults to the file's value, then 0).
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Solve only this level (1-based).
    #[arg(long)]
    pub tau0: Option<usize>,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// CSV destination (stdout if absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write unnormalized eigenstate amplitudes here.
    #[arg(long)]
    pub states: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub source: Source,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Highest perturbation order.
    #[arg(long, default_value_t = 7)]
    pub m_max: u32,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Oracle eigenvalues sidecar (default: `<out>` with `.oracle.csv`).
    #[arg(long)]
    pub oracle_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TraceArgs {
    #[command(flatten)]
    pub source: Source,
    #[arg(long, default_value_t = 0.0)]
    pub lambda_start: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lambda_end: f64,
    /// Initial arc-length step.
    #[arg(long, default_value_t = 0.02)]
    pub step: f64,
    #[arg(long, default_value_t = 1e-5)]
    pub min_step: f64,
    #[arg(long, default_value_t = 0.05)]
    pub max_step: f64,
    #[arg(long, default_value_t = 5.0)]
    pub jump_guard: f64,
    /// Corrector residual tolerance.
    #[arg(long, default_value_t = 1e-13)]
    pub tol: f64,
    /// Output files are `<prefix>_energies.csv`, `<prefix>_ground_composition.csv`
    /// and `<prefix>_diagnostics.json`.
    #[arg(long)]
    pub out_prefix: PathBuf,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    #[command(flatten)]
    pub source: Source,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long, default_value_t = 1)]
    pub tau0: usize,
    /// Energy to examine (default: the solved eigenvalue).
    #[arg(long)]
    pub energy: Option<f64>,
}

pub fn run(cli: Cli) -> anyhow::Result<Status> {
    match cli.command {
        Command::Solve(a) => solve(&a),
        Command::Bench(a) => bench(&a),
        Command::Trace(a) => trace(&a),
        Command::Check(a) => check(&a),
    }
}

fn emit(out: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(path) => std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display())),
        None => {
            std::io::stdout().lock().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn levels(p: &Problem, only: Option<usize>) -> anyhow::Result<Vec<Level>> {
    match only {
        Some(k) => Ok(vec![Level(k).check(p.n())?]),
        None => Ok((1..=p.n()).map(Level).collect()),
    }
}

pub fn solve(a: &SolveArgs) -> anyhow::Result<Status> {
    let p = a.source.load(a.lambda)?;
    let cfg = a.solver.config()?;
    let targets = levels(&p, a.tau0)?;
    let results: Vec<_> = targets
        .par_iter()
        .map(|&t| {
            let sol = solve_eigenvalue(&p, t, None, &cfg)?;
            if a.states.is_some() {
                attach_state(&p, sol, &cfg)
            } else {
                Ok(sol)
            }
        })
        .collect();

    let mut csv = Csv::with_header(&["tau0", "energy", "iterations", "residual", "regularity_margin"]);
    let mut states = Csv::with_header(&["tau0", "level", "re", "im"]);
    let mut failures = 0;
    for (t, r) in targets.iter().zip(&results) {
        match r {
            Ok(s) => {
                csv.row([
                    t.0.to_string(),
                    g17(s.energy),
                    s.iterations.to_string(),
                    g17(s.residual),
                    g17(s.regularity_margin),
                ]);
                if let Some(st) = &s.state {
                    for (k, amp) in st.amplitudes.iter().enumerate() {
                        states.row([t.0.to_string(), (k + 1).to_string(), g17(amp.re), g17(amp.im)]);
                    }
                }
            }
            Err(e) => {
                failures += 1;
                eprintln!("level {t}: {e}");
                csv.row([t.0.to_string(), "nan".into(), "nan".into(), "nan".into(), "nan".into()]);
            }
        }
    }
    emit(a.out.as_deref(), &csv.finish())?;
    if let Some(path) = &a.states {
        emit(Some(path), &states.finish())?;
    }
    Ok(Status::from_failures(failures))
}

pub fn bench(a: &BenchArgs) -> anyhow::Result<Status> {
    let p = a.source.load(a.lambda)?;
    let cfg = a.solver.config()?;
    let exact = oracle_energies(&p)?;
    let rows: Vec<_> = (0..=a.m_max)
        .into_par_iter()
        .map(|m| benchmark_row(&p, m, &exact, &cfg))
        .collect();
    let mut csv = Csv::with_header(&["m", "gmre_fpt", "gmre_bwpt", "gmre_rspt"]);
    let mut failures = 0;
    for r in &rows {
        for f in &r.failures {
            eprintln!("m = {}: {f}", r.m);
        }
        failures += r.failures.len();
        csv.row([r.m.to_string(), g17_opt(r.gmre_fpt), g17_opt(r.gmre_bwpt), g17_opt(r.gmre_rspt)]);
    }
    emit(a.out.as_deref(), &csv.finish())?;

    let sidecar = a.oracle_out.clone().or_else(|| a.out.as_ref().map(|o| o.with_extension("oracle.csv")));
    if let Some(path) = sidecar {
        let mut oc = Csv::with_header(&["index", "energy"]);
        for (k, e) in exact.iter().enumerate() {
            oc.row([(k + 1).to_string(), g17(*e)]);
        }
        emit(Some(&path), &oc.finish())?;
    }
    Ok(Status::from_failures(failures))
}

fn prefixed(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

pub fn trace(a: &TraceArgs) -> anyhow::Result<Status> {
    let p = a.source.load(Some(0.0))?;
    let cfg = Continuation {
        lambda_start: a.lambda_start,
        lambda_end: a.lambda_end,
        initial_step: a.step,
        min_step: a.min_step,
        max_step: a.max_step,
        jump_guard: a.jump_guard,
        corrector: Config {
            tol: a.tol,
            ..Config::default()
        },
        ..Continuation::default()
    };
    cfg.validate()?;
    let set = trace_all(&p, &cfg)?;
    let n = p.n();

    let mut header = vec!["lambda".to_string()];
    header.extend((1..=n).map(|k| format!("E_{k}")));
    let mut energies = Csv::default();
    energies.row(&header);
    let mut header = vec!["lambda".to_string()];
    header.extend((1..=n).map(|k| format!("P_{k}")));
    let mut comp = Csv::default();
    comp.row(&header);
    for (g, lam) in set.grid.iter().enumerate() {
        let mut row = vec![g17(*lam)];
        row.extend(set.energies[g].iter().map(|e| g17_opt(*e)));
        energies.row(row);
        let mut row = vec![g17(*lam)];
        match &set.ground_composition[g] {
            Some(ps) => row.extend(ps.iter().map(|x| g17(*x))),
            None => row.extend(std::iter::repeat_n("nan".to_string(), n)),
        }
        comp.row(row);
    }

    let paths: Vec<_> = set
        .paths
        .iter()
        .map(|path| {
            let (status, at, margin) = match path.status {
                PathStatus::Complete => ("complete", None, None),
                PathStatus::StepUnderflow { lambda } => ("step_underflow", Some(lambda), None),
                PathStatus::RegularityViolated { lambda, margin } => ("regularity_violated", Some(lambda), Some(margin)),
            };
            json!({
                "tau0": path.tau0.0,
                "status": status,
                "stopped_at": at,
                "margin": margin,
                "samples": path.samples.len(),
                "rejected_steps": path.rejected,
                "last_lambda": path.last().lambda,
                "last_energy": path.last().energy,
                "max_residual": path.samples.iter().map(|s| s.residual).fold(0.0, f64::max),
            })
        })
        .collect();
    let crossings: Vec<_> = set
        .crossings
        .iter()
        .map(|c| json!({"lambda": c.lambda, "a": c.a.0, "b": c.b.0, "gap": c.gap}))
        .collect();
    let interpolated: Vec<_> = set
        .interpolated
        .iter()
        .map(|(l, lam)| json!({"tau0": l.0, "lambda": lam}))
        .collect();
    let diagnostics = json!({
        "grid_points": set.grid.len(),
        "paths": paths,
        "near_crossings": crossings,
        "interpolated_points": interpolated,
    });

    emit(Some(&prefixed(&a.out_prefix, "_energies.csv")), &energies.finish())?;
    emit(Some(&prefixed(&a.out_prefix, "_ground_composition.csv")), &comp.finish())?;
    let mut text = serde_json::to_string_pretty(&diagnostics)?;
    text.push('\n');
    emit(Some(&prefixed(&a.out_prefix, "_diagnostics.json")), &text)?;

    let failures = set.paths.iter().filter(|p| !p.is_complete()).count() + set.interpolated.len();
    Ok(Status::from_failures(failures))
}

/// Smallest `|E − μ|` over eigenvalues `μ` of every proper principal
/// submatrix `H_[mask]` with `τ0 ∈ mask`; infinite when there is none.
fn nearest_submatrix_gap(p: &Problem, tau0: Level, energy: f64) -> f64 {
    let n = p.n();
    let h = p.hamiltonian();
    let t = tau0.idx();
    let mut best = f64::INFINITY;
    for bits in 0u32..(1u32 << n) {
        let mask = SubspaceMask::from_bits(bits);
        if bits & (1 << t) == 0 || mask.len() == n {
            continue;
        }
        let (sub, _) = principal_submatrix(&h, mask).expect("proper mask");
        if let Ok(eig) = eig_hermitian_oracle(&sub) {
            for mu in eig.values {
                best = best.min((energy - mu).abs());
            }
        }
    }
    best
}

pub fn check(a: &CheckArgs) -> anyhow::Result<Status> {
    let p = a.source.load(a.lambda)?;
    let tau0 = Level(a.tau0).check(p.n())?;
    let cfg = Config::default();
    let mut out = String::new();
    let energy = match a.energy {
        Some(e) => {
            if !e.is_finite() {
                bail!("--energy must be finite");
            }
            e
        }
        None => match solve_eigenvalue(&p, tau0, None, &cfg) {
            Ok(s) => s.energy,
            Err(e) => {
                out.push_str(&format!("solve_error={e}\n"));
                match e {
                    feenberg::Error::NoConvergence { last, .. } | feenberg::Error::RegularityViolated { energy: last, .. } => last,
                    _ => p.omega_at(tau0),
                }
            }
        },
    };
    let reg = regularity_check(&p, tau0, energy, cfg.guard);
    let full = determinant(&p.resolvent_block(feenberg::C::new(energy, 0.0), SubspaceMask::EMPTY)).norm();
    let scale: f64 = p.omega().iter().map(|w| (energy - w).abs().max(1.0)).product();

    out.push_str(&format!("tau0={}\n", tau0.0));
    out.push_str(&format!("lambda={}\n", g17(p.lambda())));
    out.push_str(&format!("energy={}\n", g17(energy)));
    out.push_str(&format!("regularity_ok={}\n", reg.ok));
    out.push_str(&format!("regularity_margin={}\n", g17(reg.margin)));
    out.push_str(&format!("det_residual={}\n", g17(full / scale)));
    out.push_str(&format!("pole_residual={}\n", g17(pole_residual(&p, tau0, energy))));
    out.push_str(&format!("nearest_submatrix_gap={}\n", g17(nearest_submatrix_gap(&p, tau0, energy))));

    // Recursive propagators against the determinant ratio, over every
    // memoized (τ, mask) of a full evaluation at this energy.
    let mut table = ShiftedEnergyTable::new(&p, energy);
    match table.shifted_energy(tau0, SubspaceMask::EMPTY) {
        Ok(_) => {
            let z = table.z();
            let mut worst: f64 = 0.0;
            let mut skipped = 0;
            for (tau, mask, _) in table.entries() {
                let rec = table.effective_propagator(tau, mask);
                let det = propagator_det_ratio(&p, z, tau, mask);
                match (rec, det) {
                    (Ok(r), Ok(d)) => worst = worst.max((r - d).norm() / d.norm()),
                    _ => skipped += 1,
                }
            }
            out.push_str(&format!("propagator_entries={}\n", table.len()));
            out.push_str(&format!("propagator_max_rel_deviation={}\n", g17(worst)));
            out.push_str(&format!("propagator_skipped={skipped}\n"));
        }
        Err(e) => out.push_str(&format!("propagator_error={e}\n")),
    }
    emit(None, &out)?;
    Ok(Status::Success)
}
