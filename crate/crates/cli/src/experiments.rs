//! Packaged desk-scale reproductions. Each writes one CSV per curve and an
//! `assertions.json` with the checks it performed.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Serialize;

use infgmres::engine::{run, EllPolicy, Run, SolverConfig};
use infgmres::gallery;
use infgmres::inner::{bicgstab_solve, InnerConfig, InnerKind};
use infgmres::oracle;
use infgmres::sparse::norm;
use infgmres::TaylorMatrixFunction;

use crate::commands::write_json;

pub const NAMES: [&str; 3] = ["delay-perturbation", "helmholtz-inexact", "spectrum-bound"];

#[derive(Debug, Clone, Serialize)]
pub struct Assertion {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub threshold: f64,
    pub detail: String,
}

fn check(name: &str, value: f64, threshold: f64, detail: impl Into<String>) -> Assertion {
    Assertion {
        name: name.into(),
        passed: value <= threshold,
        value,
        threshold,
        detail: detail.into(),
    }
}

#[derive(Debug, Serialize)]
struct Report<'a> {
    experiment: &'a str,
    all_passed: bool,
    assertions: &'a [Assertion],
}

struct Table {
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: &[&'static str]) -> Self {
        Self {
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    fn write(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn e(v: f64) -> String {
    format!("{v:e}")
}

/// Runs the named experiment; returns its assertions.
pub fn run_experiment(name: &str, out: &Path) -> Result<Vec<Assertion>> {
    if !NAMES.contains(&name) {
        bail!("unknown experiment '{name}'; valid names: {}", NAMES.join(", "));
    }
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let assertions = match name {
        "delay-perturbation" => delay_perturbation(out)?,
        "helmholtz-inexact" => helmholtz_inexact(out)?,
        _ => spectrum_bound(out)?,
    };
    write_json(
        &out.join("assertions.json"),
        &Report {
            experiment: name,
            all_passed: assertions.iter().all(|a| a.passed),
            assertions: &assertions,
        },
    )?;
    Ok(assertions)
}

fn true_residual_history(r: &Run, mu: f64, problem: &TaylorMatrixFunction, b: &[f64]) -> Result<Vec<f64>> {
    (1..=r.iterations())
        .map(|j| Ok(r.solution.prefix(j).true_relative_residual(mu, problem, b)?))
        .collect()
}

/// Largest deviation of `eps_inner · ‖r̃_{i−1}‖` from `ℓ ε`, relative, and the
/// number of iterations whose inner residual exceeded its tolerance.
fn inverse_relation(r: &Run) -> (f64, usize) {
    let c_norm = r.factorization.c_norm;
    let target = r.ell * r.solution.eps;
    let mut prev = c_norm;
    let mut worst: f64 = 0.0;
    let mut over = 0;
    for row in &r.trace.rows {
        worst = worst.max((row.eps_inner * prev - target).abs() / target);
        if row.p_norm > row.eps_inner {
            over += 1;
        }
        prev = row.rel_res_exact * c_norm;
    }
    (worst, over)
}

fn delay_perturbation(out: &Path) -> Result<Vec<Assertion>> {
    let (problem, b) = gallery::time_delay(1000, gallery::DEFAULT_DELAY_BANDWIDTH, 1);
    let mu_ref = 0.2;
    let mut assertions = Vec::new();
    let mut finals = Vec::new();
    for eps in [1e-10, 1e-8, 1e-6] {
        let cfg = SolverConfig {
            j_max: 40,
            eps,
            mu_ref,
            inner: InnerConfig {
                kind: InnerKind::Perturbed,
                seed: 1,
                ..Default::default()
            },
            ..Default::default()
        };
        let r = run(&problem, &b, &cfg)?;
        let history = true_residual_history(&r, mu_ref, &problem, &b)?;
        let mut rtilde = Table::new(&["iter", "rel_res_exact", "rel_res"]);
        let mut einner = Table::new(&["iter", "eps_inner", "p_norm"]);
        for (row, t) in r.trace.rows.iter().zip(&history) {
            rtilde.push(vec![row.iter.to_string(), e(row.rel_res_exact), e(*t)]);
            einner.push(vec![row.iter.to_string(), e(row.eps_inner), e(row.p_norm)]);
        }
        rtilde.write(&out.join(format!("residual_eps_{eps:e}.csv")))?;
        einner.write(&out.join(format!("eps_inner_eps_{eps:e}.csv")))?;

        let last = *history.last().unwrap_or(&1.0);
        assertions.push(check(
            &format!("final residual within 100 eps (eps = {eps:e})"),
            last,
            100.0 * eps,
            format!("{} iterations", r.iterations()),
        ));
        let (dev, over) = inverse_relation(&r);
        assertions.push(check(
            &format!("inverse tolerance relation (eps = {eps:e})"),
            dev,
            1e-14,
            "max relative deviation of eps_inner * r_prev from ell * eps",
        ));
        assertions.push(check(
            &format!("inner residuals within tolerance (eps = {eps:e})"),
            over as f64,
            0.0,
            "iterations with p_norm > eps_inner",
        ));

        if eps == 1e-10 {
            let mus: Vec<f64> = (1..=8).map(|k| 0.025 * k as f64).collect();
            let rows = r.solution.sweep(&mus, &problem, &b);
            let mut table = Table::new(&["mu", "rel_res"]);
            let mut worst: f64 = 0.0;
            for row in &rows {
                let v = row.rel_res.clone().map_err(anyhow::Error::msg)?;
                table.push(vec![row.mu.to_string(), e(v)]);
                if row.mu < mu_ref - 1e-12 {
                    worst = worst.max(v);
                }
            }
            table.write(&out.join("mu_sweep.csv"))?;
            assertions.push(check(
                "smaller parameters do not deteriorate",
                worst,
                10.0 * last,
                format!("max residual over mu < {mu_ref} against 10x the residual at mu_ref"),
            ));
        }
        finals.push((eps, last));
    }
    // finals is ordered by increasing eps.
    let violations = finals.windows(2).filter(|w| w[0].1 > w[1].1).count();
    assertions.push(check(
        "plateau decreases with eps",
        violations as f64,
        0.0,
        format!(
            "final residuals {}",
            finals.iter().map(|(eps, v)| format!("{eps:e}: {v:.2e}")).collect::<Vec<_>>().join(", ")
        ),
    ));
    Ok(assertions)
}

fn helmholtz_inexact(out: &Path) -> Result<Vec<Assertion>> {
    let (original, b) = gallery::helmholtz_fd(64, gallery::DEFAULT_HELMHOLTZ_ALPHA);
    let mu = 1.0;
    let problem = original.rescale(1.5)?;
    let mut reached = Vec::new();
    let mut runs = Vec::new();
    for kind in [InnerKind::Lu, InnerKind::Bicgstab, InnerKind::IdentityThenBicgstab] {
        let cfg = SolverConfig {
            j_max: 40,
            eps: 1e-12,
            mu_ref: mu,
            inner: InnerConfig {
                kind,
                ..Default::default()
            },
            ..Default::default()
        };
        let r = run(&problem, &b, &cfg)?;
        let history = true_residual_history(&r, mu, &original, &b)?;
        let mut residual = Table::new(&["iter", "rel_res", "rel_res_exact"]);
        let mut tol = Table::new(&["iter", "eps_inner", "p_norm", "inner_iters", "matvecs", "substituted"]);
        for ((row, t), rep) in r.trace.rows.iter().zip(&history).zip(&r.factorization.reports) {
            residual.push(vec![row.iter.to_string(), e(*t), e(row.rel_res_exact)]);
            tol.push(vec![
                row.iter.to_string(),
                e(row.eps_inner),
                e(row.p_norm),
                row.inner_iters.to_string(),
                rep.matvecs.to_string(),
                rep.substituted.to_string(),
            ]);
        }
        residual.write(&out.join(format!("helmholtz_residual_{}.csv", kind.as_str())))?;
        tol.write(&out.join(format!("helmholtz_inner_{}.csv", kind.as_str())))?;
        reached.push(history.iter().position(|&v| v <= 1e-8).map(|i| i + 1));
        runs.push(r);
    }

    let mut assertions = Vec::new();
    let exact = reached[0].unwrap_or(usize::MAX);
    for (k, label) in [(1, "bicgstab"), (2, "identity_then_bicgstab")] {
        let lag = match reached[k] {
            Some(j) if exact != usize::MAX => j as f64 - exact as f64,
            _ => f64::INFINITY,
        };
        assertions.push(check(
            &format!("{label} reaches 1e-8 within 5 iterations of lu"),
            lag,
            5.0,
            format!("lu at {:?}, {label} at {:?}", reached[0], reached[k]),
        ));
    }
    let its: Vec<usize> = runs[1].trace.rows.iter().map(|r| r.inner_iters).collect();
    let half = its.len() / 2;
    let first: usize = its[..half].iter().sum();
    let second: usize = its[its.len() - half..].iter().sum();
    assertions.push(check(
        "inner iterations decrease (second half minus first half)",
        second as f64 - first as f64,
        0.0,
        format!("first half {first}, second half {second}"),
    ));
    let reports = &runs[2].factorization.reports;
    let violations = reports.iter().filter(|r| r.substituted && r.p_norm > r.eps_inner).count();
    let accepted = reports.iter().filter(|r| r.substituted).count();
    assertions.push(check(
        "identity substitutions satisfy the inner tolerance",
        if accepted == 0 { f64::INFINITY } else { violations as f64 },
        0.0,
        format!("{accepted} substitutions"),
    ));

    let a1 = original.eval(mu)?;
    let single = bicgstab_solve(&a1, &b, 1e-10, 5000)?;
    let cost_cfg = SolverConfig {
        j_max: 40,
        eps: 1e-12,
        mu_ref: mu,
        stop_rel_res: Some(1e-8),
        inner: InnerConfig {
            kind: InnerKind::Bicgstab,
            ..Default::default()
        },
        ..Default::default()
    };
    let cost_run = run(&original.rescale(5.0)?, &b, &cost_cfg)?;
    let total: usize = cost_run.factorization.reports.iter().map(|r| r.matvecs).sum();
    let mut cost = Table::new(&["solver", "matvecs", "rel_res"]);
    cost.push(vec![
        "single_bicgstab".into(),
        single.matvecs.to_string(),
        e(single.relative_residual),
    ]);
    cost.push(vec![
        "inexact_infinite_gmres".into(),
        total.to_string(),
        e(cost_run.solution.true_relative_residual(mu, &original, &b)?),
    ]);
    cost.write(&out.join("helmholtz_cost.csv"))?;
    assertions.push(check(
        "inner matvecs relative to one direct BiCGSTAB solve",
        total as f64 / single.matvecs.max(1) as f64,
        12.0,
        format!("{total} vs {} (scale 5, {} outer iterations)", single.matvecs, cost_run.iterations()),
    ));
    Ok(assertions)
}

/// Eigenvalues ahead of the largest modulus ratio among the leading ones.
fn outlier_count(moduli: &[f64]) -> usize {
    let lead = moduli.len().min(20);
    (0..lead.saturating_sub(1))
        .filter(|&i| moduli[i + 1] > 0.0)
        .max_by(|&a, &b| (moduli[a] / moduli[a + 1]).total_cmp(&(moduli[b] / moduli[b + 1])))
        .map_or(0, |i| i + 1)
}

fn spectrum_bound(out: &Path) -> Result<Vec<Assertion>> {
    let (problem, b) = gallery::time_delay(50, gallery::DEFAULT_DELAY_BANDWIDTH, 13);
    let nb = norm(&b);
    let b: Vec<f64> = b.iter().map(|v| v / nb).collect();
    let (mu, eps) = (0.05, 1e-10);

    let spectrum = oracle::companion_spectrum(&problem, 30, oracle::DEFAULT_CAP)?;
    let mut table = Table::new(&["re", "im", "modulus"]);
    for g in &spectrum {
        table.push(vec![e(g.re), e(g.im), e(g.norm())]);
    }
    table.write(&out.join("spectrum.csv"))?;
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
    let r = run(&problem, &b, &cfg)?;
    let j = r.iterations();
    let mut curve = Table::new(&["j", "residual", "bound", "delta"]);
    let mut worst: f64 = 0.0;
    for jj in 1..=j {
        let split = r.factorization.prefix(jj).residual_split(&problem, &b, mu)?;
        let bound = (mu * gamma).powi(jj as i32) + eps;
        curve.push(vec![jj.to_string(), e(split.true_norm), e(bound), e(split.delta)]);
        if jj > 2 * j / 3 {
            worst = worst.max(split.true_norm / (10.0 * bound));
        }
    }
    curve.write(&out.join("convergence_bound.csv"))?;
    let delta = r.factorization.residual_split(&problem, &b, mu)?.delta;
    Ok(vec![
        check(
            "residual within 10x the spectral bound over the last third",
            worst,
            1.0,
            format!("k = {k}, |gamma_k+1| = {gamma:.4e}, {j} iterations"),
        ),
        check(
            "inexactness within eps under the strict policy",
            delta,
            1.05 * eps,
            format!("ell = {:.3e}", r.ell),
        ),
    ])
}
