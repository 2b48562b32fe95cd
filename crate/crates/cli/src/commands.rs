use std::fs;
use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use serde::Serialize;

use infgmres::engine::{run, RunTrace, TRACE_HEADER};
use infgmres::{Error, ParameterizedSolution};

use crate::config::{ProblemRecord, RunConfig};

pub const TRACE_FILE: &str = "trace.csv";
pub const SOLUTION_FILE: &str = "solution.json";
pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Debug, Serialize)]
pub struct Seeds {
    pub problem: u64,
    pub inner: u64,
}

#[derive(Debug, Serialize)]
pub struct Summary {
    /// True relative residual at `mu_ref`, or the exact-preconditioning
    /// residual when the family has no evaluator.
    pub final_rel_res: f64,
    pub final_rel_res_exact: f64,
    pub iterations: usize,
    pub converged: bool,
    pub wall_s: f64,
    pub seeds: Seeds,
}

pub fn write_trace(path: &Path, trace: &RunTrace) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(TRACE_HEADER)?;
    for r in &trace.rows {
        w.write_record([
            r.iter.to_string(),
            format!("{:e}", r.rel_res_exact),
            format!("{:e}", r.eps_inner),
            format!("{:e}", r.p_norm),
            r.inner_iters.to_string(),
            format!("{:.6}", r.elapsed_s),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

/// Returns whether the run converged.
pub fn solve(config_path: &Path, out: &Path) -> Result<bool> {
    let start = Instant::now();
    let cfg = RunConfig::load(config_path)?;
    let (problem, b) = cfg.problem.build(cfg.scale, cfg.seed)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;

    let result = match run(&problem, &b, &cfg.solver_config()) {
        Ok(r) => r,
        Err(Error::InnerSolve { iteration, source, trace }) => {
            write_trace(&out.join(TRACE_FILE), &trace)?;
            bail!("inner solve failed at outer iteration {iteration}: {source} (partial trace written)");
        }
        Err(e) => return Err(e.into()),
    };
    write_trace(&out.join(TRACE_FILE), &result.trace)?;

    let mut solution = result.solution.clone();
    solution.problem = Some(serde_json::to_value(ProblemRecord {
        problem: cfg.problem.clone(),
        scale: cfg.scale,
        seed: cfg.seed,
    })?);
    solution.save(&out.join(SOLUTION_FILE))?;

    let final_rel_res = if problem.has_evaluator() {
        solution.true_relative_residual(cfg.mu_ref, &problem, &b)?
    } else {
        result.final_rel_res()
    };
    let summary = Summary {
        final_rel_res,
        final_rel_res_exact: result.final_rel_res(),
        iterations: result.iterations(),
        converged: result.converged,
        wall_s: start.elapsed().as_secs_f64(),
        seeds: Seeds {
            problem: cfg.seed,
            inner: cfg.inner.seed,
        },
    };
    write_json(&out.join(SUMMARY_FILE), &summary)?;
    Ok(result.converged)
}

/// Parses `0.1,0.2,0.3` or `a:step:b` (inclusive of `b` up to rounding).
pub fn parse_mu_list(text: &str) -> Result<Vec<f64>> {
    let text = text.trim();
    let num = |s: &str| -> Result<f64> {
        let v: f64 = s.trim().parse().with_context(|| format!("invalid number '{}' in mu list", s.trim()))?;
        if !v.is_finite() {
            bail!("mu values must be finite, got '{}'", s.trim());
        }
        Ok(v)
    };
    if text.contains(':') {
        let parts: Vec<&str> = text.split(':').collect();
        let [a, step, b] = parts[..] else {
            bail!("mu range must look like a:step:b, got '{text}'");
        };
        let (a, step, b) = (num(a)?, num(step)?, num(b)?);
        if step == 0.0 {
            bail!("mu range step must be nonzero");
        }
        let count = ((b - a) / step + 1e-9).floor();
        if count < 0.0 {
            bail!("mu range {text} is empty");
        }
        return Ok((0..=count as usize).map(|k| a + k as f64 * step).collect());
    }
    let values: Vec<f64> = text.split(',').filter(|s| !s.trim().is_empty()).map(num).collect::<Result<_>>()?;
    if values.is_empty() {
        bail!("mu list is empty");
    }
    Ok(values)
}

/// Returns whether every row was evaluated.
pub fn sweep(solution_path: &Path, mus: &[f64], out: &Path) -> Result<bool> {
    let solution = ParameterizedSolution::load(solution_path)?;
    let record: ProblemRecord = match &solution.problem {
        Some(v) => serde_json::from_value(v.clone()).context("solution container has an unreadable problem record")?,
        None => bail!("solution container {} does not record its problem", solution_path.display()),
    };
    let (problem, b) = record.build()?;
    let rows = solution.sweep(mus, &problem, &b);

    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(out).with_context(|| format!("creating {}", out.display()))?;
    w.write_record(["mu", "rel_res"])?;
    let mut all_ok = true;
    for row in &rows {
        match &row.rel_res {
            Ok(v) => w.write_record([row.mu.to_string(), format!("{v:e}")])?,
            Err(e) => {
                all_ok = false;
                eprintln!("mu = {}: {e}", row.mu);
                w.write_record([row.mu.to_string(), "NaN".to_string()])?;
            }
        }
    }
    w.flush()?;
    Ok(all_ok)
}
