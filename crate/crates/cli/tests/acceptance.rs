//! Acceptance suite. Prints one PASS/FAIL line per criterion. Set
//! `FEENBERG_ACCEPTANCE_STRICT=1` to exit nonzero when any criterion fails.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use feenberg::{
    benchmark, benchmark_cell, build_eigenstate, build_eigenstate_series, count_identities, eig_hermitian_oracle,
    fpt_energy, general_term, general_term_permuted, nearest_pairing, oracle_energies, propagator_det_ratio, rspt_coefficients,
    resummation_partial_sums, rspt_energy, sample_at, solve_eigenvalue, trace_all, Config, Continuation, Level, Order,
    PathValue, Problem, ShiftedEnergyTable, SubspaceMask, TermOrdering, Theory, TransitionPath,
};
use feenberg_cli::ProblemFile;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn benchmark_from_file(lambda: f64) -> Problem {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples/benchmark_n7.json");
    ProblemFile::load(&path)
        .and_then(|f| f.problem(Some(lambda)))
        .expect("shipped problem file parses")
}

fn cfg() -> Config {
    Config::default()
}

fn ms(d: Duration) -> String {
    format!("{:.0} ms", d.as_secs_f64() * 1e3)
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Largest relative error after nearest bijective pairing.
fn max_rel_err(approx: &[f64], exact: &[f64]) -> f64 {
    let pairing = nearest_pairing(approx, exact).expect("equal lengths");
    approx
        .iter()
        .zip(pairing)
        .map(|(a, j)| ((a - exact[j]) / exact[j]).abs())
        .fold(0.0, f64::max)
}

fn exact_solve() -> Outcome {
    let t = Instant::now();
    let p = benchmark_from_file(0.01);
    let energies: Vec<f64> = (1..=7)
        .map(|k| solve_eigenvalue(&p, Level(k), None, &cfg()).map(|s| s.energy))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let elapsed = t.elapsed();
    let oracle = oracle_energies(&p).map_err(|e| e.to_string())?;
    let err = max_rel_err(&energies, &oracle);
    check(
        err <= 1e-12 && elapsed <= Duration::from_secs(1),
        format!("max rel err {err:.2e} (limit 1e-12), {}", ms(elapsed)),
    )
}

fn order_seven() -> Outcome {
    let p = benchmark_from_file(0.01);
    let mut worst: f64 = 0.0;
    for k in 1..=7 {
        let exact = solve_eigenvalue(&p, Level(k), None, &cfg()).map_err(|e| e.to_string())?.energy;
        let m7 = fpt_energy(&p, Level(k), Order::Finite(7), &cfg()).map_err(|e| e.to_string())?;
        worst = worst.max(((m7 - exact) / exact).abs());
    }
    let oracle = oracle_energies(&p).map_err(|e| e.to_string())?;
    let g = benchmark_cell(&p, Theory::Feenberg, 7, &oracle, &cfg()).map_err(|e| e.to_string())?;
    check(
        worst <= 1e-13 && g <= 1e-12,
        format!("max rel diff vs exact {worst:.2e} (limit 1e-13), GMRE(7) {g:.2e} (limit 1e-12)"),
    )
}

fn gmre_ordering() -> Outcome {
    let p = benchmark_from_file(0.01);
    let rows = benchmark(&p, 6, &cfg()).map_err(|e| e.to_string())?;
    let mut notes = Vec::new();
    let mut ok = true;
    for r in &rows {
        let (Some(f), Some(b), Some(s)) = (r.gmre_fpt, r.gmre_bwpt, r.gmre_rspt) else {
            return Err(format!("m = {} failed: {:?}", r.m, r.failures));
        };
        if r.m <= 1 {
            let spread = (f - b).abs().max((f - s).abs()).max((b - s).abs());
            ok &= spread <= 1e-12;
            notes.push(format!("m={} spread {spread:.1e}", r.m));
        } else {
            let good = f <= b && f <= s;
            ok &= good;
            if !good {
                notes.push(format!("m={} fpt {f:.2e} bw {b:.2e} rs {s:.2e}", r.m));
            }
        }
    }
    let last = rows.last().expect("rows");
    notes.push(format!(
        "m=6 fpt {:.2e} bw {:.2e} rs {:.2e}",
        last.gmre_fpt.unwrap_or(f64::NAN),
        last.gmre_bwpt.unwrap_or(f64::NAN),
        last.gmre_rspt.unwrap_or(f64::NAN)
    ));
    check(ok, notes.join("; "))
}

fn determinant_equivalence() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let (mut compared, mut guarded) = (0usize, 0usize);
    let mut worst: f64 = 0.0;
    for trial in 0..200u64 {
        let n = rng.gen_range(1..=6);
        let lambda = rng.gen_range(0.0..=0.5);
        let p = Problem::random(n, 1000 + trial, lambda).map_err(|e| e.to_string())?;
        let z = rng.gen_range(-0.5..1.5);
        let mut table = ShiftedEnergyTable::new(&p, z);
        for k in 1..=n {
            // A guard trip anywhere below (τ, ∅) is counted, not compared.
            let _ = table.shifted_energy(Level(k), SubspaceMask::EMPTY);
        }
        for (tau, mask, _) in table.entries() {
            let (Ok(g), Ok(d)) = (
                table.effective_propagator(tau, mask),
                propagator_det_ratio(&p, table.z(), tau, mask),
            ) else {
                guarded += 1;
                continue;
            };
            compared += 1;
            worst = worst.max((g - d).norm() / d.norm());
        }
    }
    let elapsed = t.elapsed();
    check(
        worst <= 1e-10 && elapsed <= Duration::from_secs(30) && compared > 0,
        format!(
            "{compared} propagators, max rel dev {worst:.2e} (limit 1e-10), {guarded} guarded, {}",
            ms(elapsed)
        ),
    )
}

fn counting() -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;
    for n in 3..=7usize {
        let p = if n == 7 {
            benchmark_from_file(0.01)
        } else {
            Problem::random(n, n as u64, 0.05).map_err(|e| e.to_string())?
        };
        let tau0 = Level(1);
        let e = solve_eigenvalue(&p, tau0, None, &cfg()).map_err(|e| e.to_string())?.energy;
        let mut table = ShiftedEnergyTable::new(&p, e);
        table.shifted_energy(tau0, SubspaceMask::EMPTY).map_err(|e| e.to_string())?;
        let shifted = table.count_rooted(tau0);
        let masks = table.green_masks().len();
        let c = count_identities(n, 1).map_err(|e| e.to_string())?;
        let per_step_ok = (1..n).all(|k| {
            let want = count_identities(n, k).map(|c| c.greens).unwrap_or(0);
            let got = table.green_masks().into_iter().filter(|m| m.len() == k && m.contains(tau0)).count();
            got as u128 == want
        });
        let (want_shifted, want_masks) = (c.shifted_total, c.greens_total);
        ok &= shifted as u128 == want_shifted && masks as u128 == want_masks && per_step_ok;
        notes.push(format!("N={n}: {shifted}/{want_shifted} energies, {masks}/{want_masks} masks"));
    }
    check(ok, notes.join("; "))
}

fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for (i, &x) in items.iter().enumerate() {
        let mut rest = items.to_vec();
        rest.remove(i);
        for mut tail in permutations(&rest) {
            tail.insert(0, x);
            out.push(tail);
        }
    }
    out
}

fn paths_from(start: usize, n: usize, max_len: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut stack = vec![vec![start]];
    while let Some(p) = stack.pop() {
        if p.len() > 1 {
            out.push(p.clone());
        }
        if p.len() <= max_len {
            for a in 0..n {
                if !p.contains(&a) {
                    let mut q = p.clone();
                    q.push(a);
                    stack.push(q);
                }
            }
        }
    }
    out
}

fn rearrangement() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut terms = 0usize;
    for seed in 0..4u64 {
        let p = Problem::random(5, 500 + seed, 0.3).map_err(|e| e.to_string())?;
        for t0 in 0..5 {
            let e = solve_eigenvalue(&p, Level(t0 + 1), None, &cfg()).map_err(|e| e.to_string())?.energy;
            for levels in paths_from(t0, 5, 3) {
                let path = TransitionPath::new(levels.iter().map(|&a| Level(a + 1)).collect()).map_err(|e| e.to_string())?;
                let reference = general_term(&p, e, &path, TermOrdering::DetRatio).map_err(|e| e.to_string())?;
                let mut values = vec![
                    general_term(&p, e, &path, TermOrdering::Forward).map_err(|e| e.to_string())?,
                    general_term(&p, e, &path, TermOrdering::Feenberg).map_err(|e| e.to_string())?,
                ];
                for perm in permutations(&(1..=path.len()).collect::<Vec<_>>()) {
                    values.push(general_term_permuted(&p, e, &path, &perm).map_err(|e| e.to_string())?);
                }
                for v in values {
                    terms += 1;
                    worst = worst.max((v - reference).norm() / reference.norm());
                }
            }
        }
    }
    check(
        worst <= 1e-10,
        format!("{terms} terms against the determinant form, max rel dev {worst:.2e} (limit 1e-10)"),
    )
}

fn eigenstates() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut worst_res, mut worst_series): (f64, f64) = (0.0, 0.0);
    let mut states = 0;
    for trial in 0..100u64 {
        let n = rng.gen_range(2..=6);
        let lambda = rng.gen_range(0.0..=0.2);
        let p = Problem::random(n, 2000 + trial, lambda).map_err(|e| e.to_string())?;
        let h_norm = p.hamiltonian().frobenius_norm();
        for k in 1..=n {
            let sol = match solve_eigenvalue(&p, Level(k), None, &cfg()) {
                Ok(s) => s,
                Err(e) => return Err(format!("trial {trial}, level {k}: {e}")),
            };
            let s = build_eigenstate(&p, Level(k), sol.energy, &cfg()).map_err(|e| e.to_string())?;
            let series = build_eigenstate_series(&p, Level(k), sol.energy).map_err(|e| e.to_string())?;
            let norm = s.norm();
            worst_res = worst_res.max(s.residual(&p, sol.energy) / (h_norm * norm));
            let diff = s
                .amplitudes
                .iter()
                .zip(&series.amplitudes)
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max);
            worst_series = worst_series.max(diff / norm);
            states += 1;
        }
    }
    check(
        worst_res <= 1e-9 && worst_series <= 1e-9,
        format!("{states} states, max scaled residual {worst_res:.2e}, max series deviation {worst_series:.2e} (limits 1e-9)"),
    )
}

fn strong_coupling() -> Outcome {
    let t = Instant::now();
    let p = benchmark_from_file(0.0);
    let cc = Continuation::default();
    let set = trace_all(&p, &cc).map_err(|e| e.to_string())?;
    let ground = &set.paths[0];
    let p_half = match sample_at(&p, ground, 0.5, &cc) {
        PathValue::Solved(s) => s.probabilities[0],
        other => return Err(format!("ground path at λ = 0.5 not solved: {other:?}")),
    };
    let elapsed = t.elapsed();
    if let Some(bad) = set.paths.iter().find(|path| !path.is_complete()) {
        return Err(format!("path {} ended with {:?}", bad.tau0, bad.status));
    }
    let ends: Vec<f64> = set.energies.last().expect("grid").iter().map(|e| e.unwrap_or(f64::NAN)).collect();
    let oracle = eig_hermitian_oracle(&p.with_lambda(1.0).hamiltonian()).map_err(|e| e.to_string())?.values;
    let pairing = nearest_pairing(&ends, &oracle).map_err(|e| e.to_string())?;
    let end_err = ends.iter().zip(&pairing).map(|(e, &j)| (e - oracle[j]).abs()).fold(0.0, f64::max);
    let p_one = ground.last().probabilities[0];
    let sum_err = set
        .ground_composition
        .iter()
        .flatten()
        .chain(set.paths.iter().flat_map(|path| path.samples.iter().map(|s| &s.probabilities)))
        .map(|row| (row.iter().sum::<f64>() - 1.0).abs())
        .fold(0.0, f64::max);
    let missing = set.ground_composition.iter().filter(|r| r.is_none()).count();
    check(
        end_err <= 1e-8
            && p_one < p_half
            && p_half < 1.0
            && sum_err <= 1e-12
            && missing == 0
            && elapsed <= Duration::from_secs(10),
        format!(
            "endpoint err {end_err:.2e} (limit 1e-8), P1(1) = {p_one:.4} < P1(0.5) = {p_half:.4} < 1, \
             composition sum err {sum_err:.1e}, {} grid points, {}",
            set.grid.len(),
            ms(elapsed)
        ),
    )
}

fn linear_shift_scaling() -> Outcome {
    let lambdas = [1e-2, 5e-3, 2.5e-3];
    // devs[k][i]: largest deviation in the table rooted at level k + 1.
    let mut devs = vec![Vec::new(); 7];
    for &lam in &lambdas {
        let p = benchmark_from_file(lam);
        for (k, row) in devs.iter_mut().enumerate() {
            let tau0 = Level(k + 1);
            let e = solve_eigenvalue(&p, tau0, None, &cfg()).map_err(|e| e.to_string())?.energy;
            let mut table = ShiftedEnergyTable::new(&p, e);
            table.shifted_energy(tau0, SubspaceMask::EMPTY).map_err(|e| e.to_string())?;
            let worst = table.entries().into_iter().map(|(tau, _, en)| (en - p.omega_at(tau)).norm()).fold(0.0, f64::max);
            row.push(worst);
        }
    }
    let overall: Vec<f64> = (0..3).map(|i| devs.iter().map(|r| r[i]).fold(0.0, f64::max)).collect();
    let ratios = |d: &[f64]| [d[1] / d[0], d[2] / d[1]];
    let within = |r: f64| (r - 0.5).abs() <= 0.05;
    let [r1, r2] = ratios(&overall);
    let outside: Vec<String> = devs
        .iter()
        .enumerate()
        .filter_map(|(k, d)| {
            let [a, b] = ratios(d);
            (!within(a) || !within(b)).then(|| format!("level {} table {a:.3}, {b:.3}", k + 1))
        })
        .collect();
    let mut detail = format!(
        "max deviations {:.3e}, {:.3e}, {:.3e}; halving ratios {r1:.4}, {r2:.4} (0.5 ± 10%)",
        overall[0], overall[1], overall[2]
    );
    if !outside.is_empty() {
        detail.push_str(&format!("; outside the band: {}", outside.join(", ")));
    }
    check(within(r1) && within(r2), detail)
}

fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Random N=4 instance with levels at least 0.3 apart, so that `λ|V|/gap`
/// stays below 0.05 across the fitted λ range.
fn separated_instance(seed: u64) -> Result<Problem, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let omega: Vec<f64> = (0..4).map(|k| 0.5 * k as f64 + rng.gen_range(0.0..0.2)).collect();
    let v = Problem::random(4, seed, 0.0).map_err(|e| e.to_string())?.v().clone();
    Problem::new(omega, v, 0.0).map_err(|e| e.to_string())
}

fn rs_order() -> Outcome {
    let lambdas = [1e-2, 5e-3, 2.5e-3];
    let mut worst: f64 = 0.0;
    let (mut fits, mut skipped) = (0, 0);
    let mut notes = Vec::new();
    for seed in 0..10u64 {
        let base = separated_instance(300 + seed)?;
        for k in 1..=4 {
            let coeffs = rspt_coefficients(&base, Level(k), Order::Finite(6)).map_err(|e| e.to_string())?;
            for m in 0..=4usize {
                // A fixed λ grid only shows the asymptotic slope when the
                // leading error term dominates the next one and sits well
                // above roundoff at the smallest λ.
                let (lead, next) = (coeffs[m + 1].abs(), coeffs[m + 2].abs());
                if next * lambdas[0] > 0.1 * lead || lead * lambdas[2].powi(m as i32 + 1) < 1e-13 {
                    skipped += 1;
                    continue;
                }
                let mut errs = Vec::new();
                for &lam in &lambdas {
                    let p = base.with_lambda(lam);
                    // Levels are sorted by ω and stay ordered at these λ.
                    let exact = oracle_energies(&p).map_err(|e| e.to_string())?[k - 1];
                    let rs = rspt_energy(&p, Level(k), Order::Finite(m as u32)).map_err(|e| e.to_string())?;
                    errs.push((rs - exact).abs());
                }
                let slope = log_log_slope(&lambdas, &errs);
                let off = (slope - (m as f64 + 1.0)).abs();
                if off > 0.3 {
                    notes.push(format!("seed {seed} level {k} m {m}: slope {slope:.3}"));
                }
                worst = worst.max(off);
                fits += 1;
            }
        }
    }
    let mut detail = format!(
        "{fits} fits, max |slope − (m+1)| {worst:.3} (limit 0.3), {skipped} outside the asymptotic window"
    );
    if !notes.is_empty() {
        detail.push_str(&format!("; {}", notes.join(", ")));
    }
    check(worst <= 0.3 && fits >= 3 * skipped, detail)
}

fn resummation() -> Outcome {
    let p = benchmark_from_file(0.01);
    let z = solve_eigenvalue(&p, Level(1), None, &cfg()).map_err(|e| e.to_string())?.energy;
    let mask = SubspaceMask::from_levels([Level(1)]);
    let mut worst: f64 = 0.0;
    let mut limit_err: f64 = 0.0;
    for k in 2..=7 {
        let tau = Level(k);
        let mut table = ShiftedEnergyTable::new(&p, z);
        let g = table.effective_propagator(tau, mask).map_err(|e| e.to_string())?;
        let delta = table.local_self_energy(tau, mask).map_err(|e| e.to_string())?;
        let predicted = (delta / (z - p.omega_at(tau))).norm();
        let sums = resummation_partial_sums(&p, z, tau, mask, 60).map_err(|e| e.to_string())?;
        let errs: Vec<f64> = sums.iter().map(|s| (s - g).norm()).collect();
        let measured = errs[1] / errs[0];
        worst = worst.max((measured - predicted).abs() / predicted);
        limit_err = limit_err.max(errs.last().copied().unwrap_or(f64::NAN) / g.norm());
    }
    check(
        worst <= 0.05 && limit_err <= 1e-12,
        format!("max contraction mismatch {:.2e} (limit 5%), limit rel err {limit_err:.1e}", worst),
    )
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("exact solve reproduces the N=7 oracle spectrum", exact_solve),
        ("order-7 truncation equals the exact theory", order_seven),
        ("GMRE ordering FPT <= BWPT, RSPT", gmre_ordering),
        ("recursive propagators equal determinant ratios", determinant_equivalence),
        ("memo counts match the counting identities", counting),
        ("propagator product orderings agree", rearrangement),
        ("eigenstate residuals and series agreement", eigenstates),
        ("strong-coupling trace to lambda = 1", strong_coupling),
        ("shifted-energy deviation is linear in lambda", linear_shift_scaling),
        ("Rayleigh-Schrodinger error slope is m+1", rs_order),
        ("geometric resummation contraction ratio", resummation),
    ];
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let outcome = f();
        let (tag, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        if outcome.is_err() {
            failed += 1;
        }
        println!("{tag} {:>2} {name}: {detail}", k + 1);
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    // Failures are reported, not hidden; strict mode turns them into a
    // nonzero exit for CI gates that want one.
    let strict = std::env::var_os("FEENBERG_ACCEPTANCE_STRICT").is_some_and(|v| v != "0");
    if strict && failed > 0 {
        std::process::exit(1);
    }
}
