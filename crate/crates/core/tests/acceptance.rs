//! End-to-end acceptance checks. Each prints one PASS/FAIL line; the process
//! exits nonzero if any check fails.

use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use infgmres::companion::{apply_mkinv, BlockVector};
use infgmres::engine::{run, EllPolicy, Run, SolverConfig};
use infgmres::gallery;
use infgmres::inner::{bicgstab_solve, DirectSolver, InnerConfig, InnerKind, InnerTolerance, TolPolicy};
use infgmres::oracle::{self, build_explicit, dense_fgmres, Dense, DenseLu};
use infgmres::sparse::{norm, CsrMatrix};
use infgmres::taylor::{ScalarFunction, TaylorMatrixFunction, Term};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn random_dense(n: usize, rng: &mut ChaCha8Rng, diag: f64) -> CsrMatrix {
    let mut t = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let v: f64 = rng.gen_range(-1.0..1.0);
            t.push((i, j, if i == j { v + diag } else { v }));
        }
    }
    CsrMatrix::from_triplets(n, n, &t)
}

/// `A(μ) = Σ_{ℓ≤degree} μ^ℓ C_ℓ` with dense random `C_ℓ` and a dominant `C_0`.
fn random_polynomial(n: usize, degree: usize, seed: u64) -> TaylorMatrixFunction {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let terms = (0..=degree)
        .map(|l| {
            let mut c = vec![0.0; l + 1];
            c[l] = 1.0;
            Term {
                matrix: Arc::new(random_dense(n, &mut rng, if l == 0 { 2.0 * n as f64 } else { 0.0 })),
                function: ScalarFunction::Poly(c),
            }
        })
        .collect();
    TaylorMatrixFunction::from_terms(n, terms).unwrap()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn unit_rhs(b: &[f64]) -> Vec<f64> {
    let nb = norm(b);
    b.iter().map(|v| v / nb).collect()
}

fn structured_vs_explicit_matvec() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for case in 0..100u64 {
        let n = rng.gen_range(4..=10);
        let m = rng.gen_range(2..=10);
        let problem = {
            let seed = 1000 + case;
            TaylorMatrixFunction::from_coefficient_fn(n, move |l| {
                let mut r = ChaCha8Rng::seed_from_u64(seed * 64 + l as u64);
                random_dense(n, &mut r, if l == 0 { 2.0 * n as f64 } else { 0.0 })
            })
        };
        let b = vec![1.0; n];
        let ex = build_explicit(&problem, &b, m, oracle::DEFAULT_CAP, false).unwrap();
        let k_inv = DenseLu::factor(&ex.k).unwrap().inverse();
        let op = ex.shift.matmul(&k_inv);

        let active = rng.gen_range(1..=m + 1);
        let blocks: Vec<Vec<f64>> = (0..active)
            .map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let q = BlockVector::from_blocks(n, &blocks).unwrap();
        let mut solver = DirectSolver::new(&problem.coeff(0)).unwrap();
        let (y, _) = apply_mkinv(&q, &problem, &mut solver, InnerTolerance::fixed(0.0), 1).unwrap();

        let expected = op.matvec(&q.to_dense(m + 1));
        let mut got = y.as_flat().to_vec();
        got.resize(((m + 1) * n).max(got.len()), 0.0);
        got.truncate((m + 1) * n);
        let rel = max_abs_diff(&got, &expected) / max_abs(&expected);
        worst = worst.max(rel);
    }
    outcome(worst <= 1e-13, format!("max relative error {worst:.2e} over 100 instances"))
}

fn linearization_equivalence() -> Outcome {
    let (n, m) = (8, 4);
    let problem = random_polynomial(n, m, 21);
    let b: Vec<f64> = (0..n).map(|i| ((i + 1) as f64).sin()).collect();
    let ex = build_explicit(&problem, &b, m, oracle::DEFAULT_CAP, false).unwrap();
    let mut worst_structure: f64 = 0.0;
    let mut worst_residual: f64 = 0.0;
    for mu in [0.1, 0.3, -0.2] {
        // Companion solution has blocks μ^ℓ x.
        let pencil = ex.k.sub(&ex.shift.scaled(mu));
        let big = DenseLu::factor(&pencil).unwrap().solve(&ex.c);
        let x0 = &big[..n];
        for l in 0..=m {
            let expect: Vec<f64> = x0.iter().map(|v| mu.powi(l as i32) * v).collect();
            worst_structure = worst_structure.max(max_abs_diff(&big[l * n..(l + 1) * n], &expect) / max_abs(x0));
        }
        let a = problem.eval(mu).unwrap();
        worst_structure = worst_structure.max(infgmres::sparse::residual_norm(&a, x0, &b) / norm(&b));

        // The stacked solution of A(μ) x = b solves the companion system.
        let x = Dense::from_csr(&a);
        let x = DenseLu::factor(&x).unwrap().solve(&b);
        let stacked: Vec<f64> = (0..=m).flat_map(|l| x.iter().map(move |v| mu.powi(l as i32) * v)).collect();
        let r: Vec<f64> = pencil.matvec(&stacked).iter().zip(&ex.c).map(|(p, c)| c - p).collect();
        worst_residual = worst_residual.max(norm(&r) / norm(&ex.c));
    }
    outcome(
        worst_structure <= 1e-10 && worst_residual <= 1e-10,
        format!("structure {worst_structure:.2e}, explicit residual {worst_residual:.2e}"),
    )
}

fn block_growth() -> Outcome {
    let (problem, b) = gallery::time_delay(100, gallery::DEFAULT_DELAY_BANDWIDTH, 3);
    let cfg = SolverConfig {
        j_max: 20,
        mu_ref: 0.2,
        keep_full_ztilde: true,
        ..Default::default()
    };
    let r = run(&problem, &b, &cfg).unwrap();
    let f = &r.factorization;
    let z = f.z_full.as_ref().unwrap();
    let pad = 25;
    let mut bad = Vec::new();
    if r.iterations() != 20 {
        bad.push(format!("only {} iterations", r.iterations()));
    }
    for (i, qi) in f.q.iter().enumerate() {
        let active = BlockVector::active_blocks_of_dense(100, &qi.to_dense(pad));
        if qi.num_blocks() != i + 1 || active != i + 1 {
            bad.push(format!("Q column {}: {} stored, {} active", i + 1, qi.num_blocks(), active));
        }
    }
    for (i, zi) in z.iter().enumerate() {
        let active = BlockVector::active_blocks_of_dense(100, &zi.to_dense(pad));
        if zi.num_blocks() != i + 1 || active != i + 1 {
            bad.push(format!("Z column {}: {} stored, {} active", i + 1, zi.num_blocks(), active));
        }
    }
    outcome(bad.is_empty(), if bad.is_empty() { "all columns exact".to_string() } else { bad.join("; ") })
}

fn truncation_free() -> Outcome {
    let (problem, b) = gallery::time_delay(8, 2, 5);
    let j = 6;
    let cfg = SolverConfig {
        j_max: j,
        mu_ref: 0.2,
        ..Default::default()
    };
    let r = run(&problem, &b, &cfg).unwrap();
    let f = &r.factorization;
    let mut worst_q: f64 = 0.0;
    let mut worst_h: f64 = 0.0;
    for m in [6, 10, 14] {
        let ex = build_explicit(&problem, &b, m, oracle::DEFAULT_CAP, true).unwrap();
        let k_inv = ex.k_inv.clone().unwrap();
        let d = dense_fgmres(&ex, 0.2, j, |_, q| k_inv.matvec(q));
        for (qs, qd) in f.q.iter().zip(&d.q) {
            worst_q = worst_q.max(max_abs_diff(&qs.to_dense(m + 1), qd));
        }
        for c in 0..j {
            worst_h = worst_h.max(max_abs_diff(f.h.column(c), d.h.column(c)));
        }
    }
    outcome(
        worst_q <= 1e-12 && worst_h <= 1e-12,
        format!("max |dQ| {worst_q:.2e}, max |dH| {worst_h:.2e} over m = 6, 10, 14"),
    )
}

fn delta_bound() -> Outcome {
    let (problem, b) = gallery::time_delay(200, gallery::DEFAULT_DELAY_BANDWIDTH, 7);
    let eps = 1e-10;
    let mut cfg = SolverConfig {
        j_max: 40,
        eps,
        mu_ref: 0.2,
        ell_policy: EllPolicy::Strict,
        keep_full_ztilde: true,
        inner: InnerConfig {
            kind: InnerKind::Perturbed,
            seed: 7,
            ..Default::default()
        },
        ..Default::default()
    };
    let strict = run(&problem, &b, &cfg).unwrap();
    let d_strict = strict.factorization.residual_split(&problem, &b, 0.2).unwrap().delta;
    cfg.ell_policy = EllPolicy::Fixed;
    let fixed = run(&problem, &b, &cfg).unwrap();
    let d_fixed = fixed.factorization.residual_split(&problem, &b, 0.2).unwrap().delta;
    outcome(
        d_strict <= 1.05 * eps && d_fixed <= 100.0 * eps,
        format!(
            "strict (ell {:.2e}, j {}) delta {d_strict:.3e}; ell = 1 delta {d_fixed:.3e}",
            strict.ell,
            strict.iterations()
        ),
    )
}

fn inverse_relation() -> Outcome {
    let mut runs: Vec<(String, Run)> = Vec::new();
    let (delay, db) = gallery::time_delay(200, gallery::DEFAULT_DELAY_BANDWIDTH, 9);
    for (name, kind, policy) in [
        ("delay/perturbed/fixed", InnerKind::Perturbed, EllPolicy::Fixed),
        ("delay/perturbed/strict", InnerKind::Perturbed, EllPolicy::Strict),
        ("delay/lu/fixed", InnerKind::Lu, EllPolicy::Fixed),
    ] {
        let cfg = SolverConfig {
            j_max: 40,
            eps: 1e-10,
            mu_ref: 0.2,
            ell_policy: policy,
            inner: InnerConfig {
                kind,
                seed: 9,
                ..Default::default()
            },
            ..Default::default()
        };
        runs.push((name.into(), run(&delay, &db, &cfg).unwrap()));
    }
    let (helm, hb) = gallery::helmholtz_fd(24, gallery::DEFAULT_HELMHOLTZ_ALPHA);
    let helm = helm.rescale(1.5).unwrap();
    for (name, kind) in [
        ("helmholtz/bicgstab", InnerKind::Bicgstab),
        ("helmholtz/identity", InnerKind::IdentityThenBicgstab),
    ] {
        let cfg = SolverConfig {
            j_max: 80,
            eps: 1e-12,
            mu_ref: 1.0,
            inner: InnerConfig {
                kind,
                ..Default::default()
            },
            ..Default::default()
        };
        runs.push((name.into(), run(&helm, &hb, &cfg).unwrap()));
    }

    let mut checked = 0;
    let mut bad = Vec::new();
    let mut worst: f64 = 0.0;
    for (name, r) in &runs {
        if !r.converged {
            bad.push(format!("{name} did not converge"));
            continue;
        }
        let c_norm = r.factorization.c_norm;
        let target = r.ell * r.solution.eps;
        let mut r_prev = c_norm;
        for row in &r.trace.rows {
            let rel = (row.eps_inner * r_prev - target).abs() / target;
            worst = worst.max(rel);
            if rel > 1e-14 {
                bad.push(format!("{name} iter {}: relation off by {rel:.2e}", row.iter));
            }
            if row.p_norm > row.eps_inner {
                bad.push(format!("{name} iter {}: p {:.3e} > {:.3e}", row.iter, row.p_norm, row.eps_inner));
            }
            r_prev = row.rel_res_exact * c_norm;
            checked += 1;
        }
    }
    outcome(
        bad.is_empty(),
        if bad.is_empty() {
            format!("{checked} iterations over {} traces, max deviation {worst:.1e}", runs.len())
        } else {
            bad.join("; ")
        },
    )
}

fn mu_reuse() -> Outcome {
    let (problem, b) = gallery::time_delay(1000, gallery::DEFAULT_DELAY_BANDWIDTH, 1);
    let cfg = SolverConfig {
        j_max: 40,
        eps: 1e-10,
        mu_ref: 0.2,
        inner: InnerConfig {
            kind: InnerKind::Perturbed,
            seed: 1,
            ..Default::default()
        },
        ..Default::default()
    };
    let r = run(&problem, &b, &cfg).unwrap();
    let reference = r.solution.true_relative_residual(0.2, &problem, &b).unwrap();
    let rows = r.solution.sweep(&[0.025, 0.05, 0.1], &problem, &b);
    let vals: Vec<f64> = rows.iter().map(|row| row.rel_res.clone().unwrap()).collect();
    outcome(
        vals.iter().all(|&v| v <= 10.0 * reference),
        format!("mu_ref residual {reference:.2e}; 0.025/0.05/0.1 -> {:.2e} {:.2e} {:.2e}", vals[0], vals[1], vals[2]),
    )
}

/// Number of eigenvalues ahead of the largest modulus gap among the leading ones.
fn outlier_count(moduli: &[f64]) -> usize {
    let lead = moduli.len().min(20);
    (0..lead.saturating_sub(1))
        .filter(|&i| moduli[i + 1] > 0.0)
        .max_by(|&a, &b| (moduli[a] / moduli[a + 1]).partial_cmp(&(moduli[b] / moduli[b + 1])).unwrap())
        .map_or(0, |i| i + 1)
}

fn convergence_bound() -> Outcome {
    let (problem, b) = gallery::time_delay(50, gallery::DEFAULT_DELAY_BANDWIDTH, 13);
    let b = unit_rhs(&b);
    let mu = 0.05;
    let eps = 1e-10;
    let spectrum = oracle::companion_spectrum(&problem, 30, oracle::DEFAULT_CAP).unwrap();
    let moduli: Vec<f64> = spectrum.iter().map(|g| g.norm()).collect();
    let k = outlier_count(&moduli);
    let gamma = moduli[k];
    let cfg = SolverConfig {
        j_max: 30,
        eps,
        mu_ref: mu,
        ell_policy: EllPolicy::Strict,
        keep_full_ztilde: true,
        inner: InnerConfig {
            kind: InnerKind::Perturbed,
            seed: 13,
            ..Default::default()
        },
        ..Default::default()
    };
    let r = run(&problem, &b, &cfg).unwrap();
    let j = r.iterations();
    let mut worst: f64 = 0.0;
    for jj in (2 * j / 3 + 1)..=j {
        let split = r.factorization.prefix(jj).residual_split(&problem, &b, mu).unwrap();
        let bound = 10.0 * ((mu.abs() * gamma).powi(jj as i32) + eps);
        worst = worst.max(split.true_norm / bound);
    }
    outcome(
        worst <= 1.0 && j >= 3,
        format!("k = {k}, |gamma_k+1| = {gamma:.3e}, j = {j}, max residual/bound {worst:.3}"),
    )
}

fn eps_sensitivity() -> Outcome {
    let (problem, b) = gallery::time_delay(1000, gallery::DEFAULT_DELAY_BANDWIDTH, 1);
    let mut plateaus = Vec::new();
    let mut pass = true;
    for eps in [1e-6, 1e-8, 1e-10] {
        let cfg = SolverConfig {
            j_max: 40,
            eps,
            mu_ref: 0.2,
            inner: InnerConfig {
                kind: InnerKind::Perturbed,
                seed: 1,
                ..Default::default()
            },
            ..Default::default()
        };
        let r = run(&problem, &b, &cfg).unwrap();
        let rel = r.solution.true_relative_residual(0.2, &problem, &b).unwrap();
        pass &= rel <= 100.0 * eps;
        plateaus.push(rel);
    }
    pass &= plateaus.windows(2).all(|w| w[1] <= w[0]);
    outcome(
        pass,
        format!("final residuals {:.2e} {:.2e} {:.2e}", plateaus[0], plateaus[1], plateaus[2]),
    )
}

struct HelmholtzRun {
    first_below: Option<usize>,
    run: Run,
}

fn helmholtz_run(problem: &TaylorMatrixFunction, original: &TaylorMatrixFunction, b: &[f64], kind: InnerKind) -> HelmholtzRun {
    let cfg = SolverConfig {
        j_max: 40,
        eps: 1e-12,
        mu_ref: 1.0,
        inner: InnerConfig {
            kind,
            tol_policy: TolPolicy::Lagged,
            ..Default::default()
        },
        ..Default::default()
    };
    let run = run(problem, b, &cfg).unwrap();
    let first_below = (1..=run.iterations())
        .find(|&j| run.solution.prefix(j).true_relative_residual(1.0, original, b).unwrap() <= 1e-8);
    HelmholtzRun { first_below, run }
}

fn helmholtz_accuracy(exact: &HelmholtzRun, inexact: &HelmholtzRun) -> (bool, String) {
    let (Some(je), Some(ji)) = (exact.first_below, inexact.first_below) else {
        return (
            false,
            format!("1e-8 not reached: exact {:?}, inexact {:?}", exact.first_below, inexact.first_below),
        );
    };
    (ji <= je + 5, format!("exact reaches 1e-8 at {je}, inexact at {ji}"))
}

fn helmholtz_inexact(exact: &HelmholtzRun, inexact: &HelmholtzRun) -> Outcome {
    let (ok, detail) = helmholtz_accuracy(exact, inexact);
    let its: Vec<usize> = inexact.run.trace.rows.iter().map(|r| r.inner_iters).collect();
    let half = its.len() / 2;
    let first: usize = its[..half].iter().sum();
    let second: usize = its[its.len() - half..].iter().sum();
    outcome(
        ok && second <= first,
        format!("{detail}; inner iterations first half {first}, second half {second}"),
    )
}

fn identity_substitute(exact: &HelmholtzRun, subst: &HelmholtzRun) -> Outcome {
    let (ok, detail) = helmholtz_accuracy(exact, subst);
    let reports = &subst.run.factorization.reports;
    let Some(start) = reports.iter().position(|r| r.substituted) else {
        return outcome(false, format!("{detail}; identity substitute never activated"));
    };
    let accepted: Vec<_> = reports[start..].iter().filter(|r| r.substituted).collect();
    let violations = accepted.iter().filter(|r| r.p_norm > r.eps_inner).count();
    outcome(
        ok && violations == 0,
        format!(
            "{detail}; substitution from iteration {}, {} accepted, {violations} violations",
            start + 1,
            accepted.len()
        ),
    )
}

fn relative_cost() -> Outcome {
    let (original, b) = gallery::helmholtz_fd(64, gallery::DEFAULT_HELMHOLTZ_ALPHA);
    let a1 = original.eval(1.0).unwrap();
    let single = match bicgstab_solve(&a1, &b, 1e-10, 5000) {
        Ok(s) if s.converged => s.matvecs,
        _ => return outcome(false, "single BiCGSTAB solve did not converge"),
    };
    let problem = original.rescale(5.0).unwrap();
    let cfg = SolverConfig {
        j_max: 40,
        eps: 1e-12,
        mu_ref: 1.0,
        stop_rel_res: Some(1e-8),
        inner: InnerConfig {
            kind: InnerKind::Bicgstab,
            ..Default::default()
        },
        ..Default::default()
    };
    let r = run(&problem, &b, &cfg).unwrap();
    let total: usize = r.factorization.reports.iter().map(|x| x.matvecs).sum();
    let reached = r.solution.true_relative_residual(1.0, &original, &b).unwrap();
    let ratio = total as f64 / single as f64;
    outcome(
        r.converged && reached <= 1e-8 && ratio <= 12.0,
        format!(
            "{} outer iterations, residual {reached:.2e}, {total} inner matvecs vs {single} for one solve (ratio {ratio:.2})",
            r.iterations()
        ),
    )
}

fn report(failures: &mut usize, id: usize, name: &str, budget: Option<Duration>, f: impl FnOnce() -> Outcome) {
    let start = Instant::now();
    let mut o = f();
    let elapsed = start.elapsed();
    if let Some(limit) = budget {
        if elapsed > limit {
            o.pass = false;
            o.detail.push_str(&format!("; exceeded {:.0} s budget", limit.as_secs_f64()));
        }
    }
    if !o.pass {
        *failures += 1;
    }
    println!(
        "{} {id:>2} {name}: {} ({:.2} s)",
        if o.pass { "PASS" } else { "FAIL" },
        o.detail,
        elapsed.as_secs_f64()
    );
}

fn main() {
    let secs = Duration::from_secs_f64;
    let mut failures = 0;
    report(&mut failures, 1, "structured vs explicit M K^-1", Some(secs(5.0)), structured_vs_explicit_matvec);
    report(&mut failures, 2, "linearization equivalence", Some(secs(1.0)), linearization_equivalence);
    report(&mut failures, 3, "block growth", Some(secs(1.0)), block_growth);
    report(&mut failures, 4, "truncation-free equivalence", Some(secs(2.0)), truncation_free);
    report(&mut failures, 5, "inexactness bound", Some(secs(30.0)), delta_bound);
    report(&mut failures, 6, "inverse tolerance relation", None, inverse_relation);
    report(&mut failures, 7, "parameter reuse", Some(secs(60.0)), mu_reuse);
    report(&mut failures, 8, "convergence bound", Some(secs(30.0)), convergence_bound);
    report(&mut failures, 9, "eps sensitivity", Some(secs(90.0)), eps_sensitivity);

    let (original, b) = gallery::helmholtz_fd(64, gallery::DEFAULT_HELMHOLTZ_ALPHA);
    let problem = original.rescale(1.5).unwrap();
    let mut exact = None;
    report(&mut failures, 10, "Helmholtz inexact vs exact", Some(secs(120.0)), || {
        let e = exact.insert(helmholtz_run(&problem, &original, &b, InnerKind::Lu));
        let inexact = helmholtz_run(&problem, &original, &b, InnerKind::Bicgstab);
        helmholtz_inexact(e, &inexact)
    });
    let exact = exact.unwrap();
    report(&mut failures, 11, "identity substitute", None, || {
        let subst = helmholtz_run(&problem, &original, &b, InnerKind::IdentityThenBicgstab);
        identity_substitute(&exact, &subst)
    });
    report(&mut failures, 12, "relative cost", None, relative_cost);

    println!("{} of 12 criteria passed", 12 - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
