//! Subcommand implementations. Every command writes its artifacts into the
//! output directory and returns a one-line summary.

use std::fmt::Write as _;
use std::path::Path;

use parabolic_dg::analysis::{
    best_approx_ratio, error_profile, fmt_p, median, regularity_functionals, stability_lemma_audit,
    ConvergenceRow, ConvergenceTable, Trajectory, ZERO_ERROR,
};
use parabolic_dg::coeffs::{corpus_field, unit_samples, EllipticityReport, ModulusReport};
use parabolic_dg::exec;
use parabolic_dg::mesh::QuasiUniformReport;
use parabolic_dg::opcalc::{audits_to_csv, mu_sweep, Modulus, NormAudit, OperatorCalculus};
use parabolic_dg::timegrid::ConditionReport;
use parabolic_dg::{solve, Error};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{ExperimentConfig, Run};
use crate::CliError;

const MODULUS_LEVELS: usize = 8;
const MODULUS_TIME_SAMPLES: usize = 16;
const SPATIAL_SAMPLES: usize = 5;
const ELLIPTICITY_TIME_SAMPLES: usize = 33;

fn write(out: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    std::fs::write(out.join(name), contents).map_err(|e| CliError::Io(format!("{name}: {e}")))
}

fn write_json(out: &Path, name: &str, value: &impl Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    text.push('\n');
    write(out, name, &text)
}

fn opt(v: Option<f64>) -> Value {
    v.map_or(Value::Null, |x| json!(x))
}

#[derive(Serialize)]
struct RunConditions {
    n: usize,
    steps: usize,
    conditions: ConditionReport,
    quasi_uniform: QuasiUniformReport,
    quasi_uniform_ok: bool,
}

#[derive(Serialize)]
struct ValidateReport {
    field: String,
    runs: Vec<RunConditions>,
    modulus: ModulusReport,
    ellipticity: EllipticityReport,
    all_pass: bool,
}

pub fn validate(cfg: &ExperimentConfig, out: &Path) -> Result<String, CliError> {
    let def = cfg.definition()?;
    let field = corpus_field(&def.field)?;
    let dim = cfg.mesh.dim;
    let a = &cfg.assumptions;
    let runs = cfg
        .runs()
        .iter()
        .map(|r| -> Result<RunConditions, CliError> {
            let grid = cfg.time_grid(r.steps)?;
            let space = cfg.space(r.n)?;
            let quasi_uniform = space.mesh().check_quasi_uniform()?;
            Ok(RunConditions {
                n: r.n,
                steps: r.steps,
                conditions: grid.validate_conditions(a.c, a.beta, a.kappa),
                quasi_uniform_ok: quasi_uniform.constant <= a.quasi_uniform,
                quasi_uniform,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let xs = unit_samples(dim, SPATIAL_SAMPLES);
    let t_final = cfg.grid.final_time;
    let modulus =
        field.temporal_modulus_audit(dim, t_final, MODULUS_LEVELS, MODULUS_TIME_SAMPLES, &xs)?;
    let ts: Vec<f64> = (0..ELLIPTICITY_TIME_SAMPLES)
        .map(|i| t_final * i as f64 / (ELLIPTICITY_TIME_SAMPLES - 1) as f64)
        .collect();
    let ellipticity = field.ellipticity_audit(dim, &ts, &xs)?;
    let all_pass = modulus.passes
        && !ellipticity.violated
        && runs
            .iter()
            .all(|r| r.conditions.all_hold() && r.quasi_uniform_ok);
    let report = ValidateReport {
        field: def.field,
        runs,
        modulus,
        ellipticity,
        all_pass,
    };
    write_json(out, "validate.json", &report)?;
    if all_pass {
        Ok("all assumptions hold".into())
    } else {
        let mut failed = Vec::new();
        if !report.modulus.passes {
            failed.push("temporal modulus".to_string());
        }
        if report.ellipticity.violated {
            failed.push("ellipticity".to_string());
        }
        for r in &report.runs {
            if !r.conditions.all_hold() {
                failed.push(format!("step conditions (n={}, M={})", r.n, r.steps));
            }
            if !r.quasi_uniform_ok {
                failed.push(format!("quasi-uniformity (n={})", r.n));
            }
        }
        Err(CliError::Assumption(failed.join(", ")))
    }
}

pub fn solve_cmd(cfg: &ExperimentConfig, out: &Path) -> Result<String, CliError> {
    let runs = cfg.runs();
    let results = exec::try_map_indexed(
        runs.len(),
        |i| -> Result<(Value, String, String, String), Error> {
            let run = &runs[i];
            let problem = cfg.build(run)?;
            let sol = solve(&problem)?;
            let reg = regularity_functionals(&problem, &sol)?;
            let errors = if problem.exact().is_some() {
                let prof = error_profile(&problem, &Trajectory::from_solution(&sol))?;
                cfg.analysis
                    .p
                    .iter()
                    .map(|&p| json!({ "p": fmt_p(p), "error": prof.lp(p) }))
                    .collect()
            } else {
                Vec::new()
            };
            let per_p: Vec<Value> = cfg
                .analysis
                .p
                .iter()
                .map(|&p| {
                    json!({
                        "p": fmt_p(p),
                        "aggregate": reg.aggregate(p),
                        "data": reg.data(p),
                        "ratio": opt(reg.ratio(p)),
                    })
                })
                .collect();
            let summary = json!({
                "run": run.index,
                "n": run.n,
                "steps": run.steps,
                "ndofs": problem.space().ndofs(),
                "residual_identity": sol.residual_identity_check()?,
                "log_factor": reg.log_factor,
                "max_norm_Akm_ukm_ratio": opt(reg.a_max_ratio()),
                "regularity": per_p,
                "errors": errors,
            });
            Ok((
                summary,
                sol.to_csv(),
                reg.to_csv(problem.grid()),
                reg.summary_csv(),
            ))
        },
    )?;
    let mut summaries = Vec::new();
    for (i, (summary, sol_csv, reg_csv, reg_summary)) in results.into_iter().enumerate() {
        write(out, &format!("solution_{i}.csv"), &sol_csv)?;
        write(out, &format!("regularity_{i}.csv"), &reg_csv)?;
        write(out, &format!("regularity_summary_{i}.csv"), &reg_summary)?;
        summaries.push(summary);
    }
    write_json(
        out,
        "solve.json",
        &json!({ "problem": cfg.definition()?, "runs": summaries }),
    )?;
    Ok(format!("solved {} run(s)", runs.len()))
}

fn resolvent_samples(cfg: &ExperimentConfig) -> Vec<[f64; 2]> {
    let mut zs = Vec::new();
    for &angle in &cfg.operators.resolvent_angles {
        let signs: &[f64] = if (angle - std::f64::consts::PI).abs() < 1e-12 {
            &[1.0]
        } else {
            &[1.0, -1.0]
        };
        for &s in signs {
            for &r in &cfg.operators.resolvent_radii {
                zs.push([r * angle.cos(), s * r * angle.sin()]);
            }
        }
    }
    zs
}

fn run_operators(
    cfg: &ExperimentConfig,
    run: &Run,
) -> Result<(Value, String, String, String), Error> {
    let def = cfg
        .definition()
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let field = corpus_field(&def.field)?;
    let space = cfg.space(run.n)?;
    let grid = cfg.time_grid(run.steps)?;
    let budget = cfg.budget.operators;
    let modulus = Modulus::fit(&field, cfg.mesh.dim, grid.final_time())?;
    let base = OperatorCalculus::new(&space, &field, &grid, cfg.quadrature.time, 0.0, budget)?;
    let per_mu = mu_sweep(
        &base,
        &cfg.operators.mu,
        |calc| -> parabolic_dg::Result<Vec<NormAudit>> {
            let mut audits = vec![calc.contraction_audit(&modulus)?];
            audits.extend(calc.smoothing_audit()?);
            audits.push(calc.l_audit()?);
            audits.push(calc.d_audit()?);
            audits.push(calc.difference_audit(&modulus)?);
            Ok(audits)
        },
    )?;
    let zs = resolvent_samples(cfg);
    let mut resolvent = Vec::new();
    let mut resolvent_json = Vec::new();
    if !zs.is_empty() {
        for &mu in &cfg.operators.mu {
            let calc = base.with_mu(mu)?;
            let mut ms = vec![1, grid.len()];
            ms.dedup();
            for m in ms {
                let rep = calc.resolvent_audit(m, 0.5 * std::f64::consts::PI, &zs)?;
                resolvent_json.push(json!({
                    "mu": mu,
                    "m": m,
                    "lambda_min": rep.lambda_min,
                    "lambda_max": rep.lambda_max,
                    "inverse_l2": rep.inverse_l2,
                    "inverse_h1": rep.inverse_h1,
                    "inverse_h1_predicted": opt(rep.inverse_h1_predicted.is_finite().then_some(rep.inverse_h1_predicted)),
                    "max_ratio": rep.samples.entries.iter().map(|e| e.ratio).fold(0.0, f64::max),
                }));
                resolvent.push(rep.samples);
            }
        }
    }
    let stability = stability_lemma_audit(
        &space,
        &field,
        &grid,
        cfg.operators.stability_samples,
        cfg.quadrature.time,
        budget,
    )?;
    let mut stab_csv = String::from("m,t_m,sup_norm_Ah_t_Akm_inverse\n");
    for (i, v) in stability.per_interval.iter().enumerate() {
        let _ = writeln!(stab_csv, "{},{:.16e},{:.16e}", i + 1, grid.node(i + 1), v);
    }
    let mu_json: Vec<Value> = cfg
        .operators
        .mu
        .iter()
        .zip(&per_mu)
        .map(|(&mu, audits)| {
            let items: Vec<Value> = audits
                .iter()
                .map(|a| {
                    json!({
                        "quantity": a.quantity,
                        "max_norm": a.max_norm(),
                        "row_sum_max": a.row_sum_max,
                        "col_sum_max": a.col_sum_max,
                        "fitted_constant": a.fitted_constant,
                        "all_converged": a.all_converged,
                    })
                })
                .collect();
            json!({ "mu": mu, "audits": items })
        })
        .collect();
    let all: Vec<NormAudit> = per_mu.into_iter().flatten().collect();
    let summary = json!({
        "run": run.index,
        "n": run.n,
        "steps": run.steps,
        "modulus": { "constant": modulus.constant, "exponent": modulus.exponent },
        "mu_sweep": mu_json,
        "resolvent": resolvent_json,
        "stability_max": stability.max,
    });
    Ok((
        summary,
        audits_to_csv(&all),
        audits_to_csv(&resolvent),
        stab_csv,
    ))
}

pub fn operators(cfg: &ExperimentConfig, out: &Path) -> Result<String, CliError> {
    let runs = cfg.runs();
    let results = exec::try_map_indexed(runs.len(), |i| run_operators(cfg, &runs[i]))?;
    let mut summaries = Vec::new();
    for (i, (summary, audits, resolvent, stability)) in results.into_iter().enumerate() {
        write(out, &format!("operators_{i}.csv"), &audits)?;
        write(out, &format!("resolvent_{i}.csv"), &resolvent)?;
        write(out, &format!("stability_{i}.csv"), &stability)?;
        summaries.push(summary);
    }
    write_json(out, "operators.json", &json!({ "runs": summaries }))?;
    Ok(format!(
        "audited {} run(s) over {} mu value(s)",
        runs.len(),
        cfg.operators.mu.len()
    ))
}

pub fn convergence(cfg: &ExperimentConfig, out: &Path) -> Result<String, CliError> {
    let runs = cfg.runs();
    let profiles = exec::try_map_indexed(runs.len(), |i| -> Result<_, Error> {
        let problem = cfg.build(&runs[i])?;
        let sol = solve(&problem)?;
        let prof = error_profile(&problem, &Trajectory::from_solution(&sol))?;
        Ok((problem.space().mesh().h(), problem.grid().max_step(), prof))
    })?;
    let mut tables = Vec::new();
    for &p in &cfg.analysis.p {
        let rows = profiles
            .iter()
            .map(|(h, k, prof)| {
                let (error_lp, error_linf) = (prof.lp(p), prof.lp(f64::INFINITY));
                ConvergenceRow {
                    h: *h,
                    k: *k,
                    error_lp,
                    error_linf,
                    zero_error: error_lp.max(error_linf) <= ZERO_ERROR,
                }
            })
            .collect();
        let table = ConvergenceTable::new(cfg.analysis.line, p, rows);
        write(
            out,
            &format!("convergence_p{}.csv", fmt_p(p)),
            &table.to_csv(),
        )?;
        tables.push(json!({
            "p": fmt_p(p),
            "line": table.line,
            "levels": table.rows.len(),
            "order_lp": opt(table.order_lp),
            "order_linf": opt(table.order_linf),
            "zero_error_rows": table.rows.iter().filter(|r| r.zero_error).count(),
        }));
    }
    write_json(out, "convergence.json", &json!({ "tables": tables }))?;
    Ok(format!(
        "{} level(s), {} table(s)",
        runs.len(),
        tables.len()
    ))
}

pub fn bestapprox(cfg: &ExperimentConfig, out: &Path) -> Result<String, CliError> {
    let runs = cfg.runs();
    let ps = cfg.analysis.p.clone();
    let results = exec::try_map_indexed(runs.len(), |i| -> Result<_, Error> {
        let problem = cfg.build(&runs[i])?;
        let sol = solve(&problem)?;
        ps.iter()
            .map(|&p| best_approx_ratio(&problem, &sol, p))
            .collect::<Result<Vec<_>, _>>()
    })?;
    let mut csv = String::from("n,steps,p,error,pik_term,ritz_term,log_T_over_k,ratio\n");
    for (run, per_p) in runs.iter().zip(&results) {
        for b in per_p {
            let _ = writeln!(
                csv,
                "{},{},{},{:.16e},{:.16e},{:.16e},{:.16e},{}",
                run.n,
                run.steps,
                fmt_p(b.p),
                b.error,
                b.pik_term,
                b.ritz_term,
                b.log_factor,
                b.ratio.map_or_else(|| "NA".into(), |r| format!("{r:.16e}"))
            );
        }
    }
    write(out, "bestapprox.csv", &csv)?;
    let summary: Vec<Value> = ps
        .iter()
        .enumerate()
        .map(|(j, &p)| {
            let ratios: Vec<f64> = results.iter().filter_map(|r| r[j].ratio).collect();
            let (max, med) = if ratios.is_empty() {
                (None, None)
            } else {
                (
                    Some(ratios.iter().copied().fold(0.0, f64::max)),
                    Some(median(&ratios)),
                )
            };
            json!({
                "p": fmt_p(p),
                "applicable_runs": ratios.len(),
                "max_ratio": opt(max),
                "median_ratio": opt(med),
            })
        })
        .collect();
    write_json(out, "bestapprox.json", &json!({ "by_p": summary }))?;
    Ok(format!("{} run(s) x {} p value(s)", runs.len(), ps.len()))
}
