use std::f64::consts::FRAC_PI_2;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use slaglab::catalog::{quadratic_sphere_function, CatalogEntry, Level};
use slaglab::grid::{
    hessian_at, read_field, slice_2d, slice_to_csv, slice_to_pgm, solve_dirichlet, write_field, GridField,
    SolveConfig,
};
use slaglab::operators::{classify_phase, level_set_concavity_probe, sigma2_positive_branch, OperatorModel};
use slaglab::rank::{eigen_fields, min_principle_check, rank_report, splitting_detector, Hom2AuditConfig, Hom2Verdict, SplitTolerances};
use slaglab::spectral::{eigenvalues, norm, SymMatrix};
use slaglab::transforms::{legendre_lewy_transform, legendre_transform, rotate_graph, RotationParams};
use slaglab::viscosity::{
    check_gradient_identity_with, check_higher_rank_inequality_with, check_partial_sums_with,
    check_supersolution_lambda1_with, ViscosityConfig,
};

use crate::{
    AnalyzeArgs, Failure, Hom2Args, LegendreArgs, LewyArgs, ProbeArgs, RotateArgs, SampleArgs, SolveArgs,
    VerifyCatalogArgs, ViscosityArgs,
};

fn required<T: Clone>(v: &Option<T>, flag: &str) -> Result<T, Failure> {
    v.clone().ok_or_else(|| Failure::Usage(format!("missing required --{flag}")))
}

fn positive(v: f64, flag: &str) -> Result<f64, Failure> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Failure::Usage(format!("--{flag} must be positive, got {v}")))
    }
}

fn input(path: &Path) -> Result<GridField, Failure> {
    read_field(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn operator(op: &str, theta: Option<f64>, n: usize) -> Result<OperatorModel, Failure> {
    match op {
        "slag" => {
            let theta = theta.ok_or_else(|| Failure::Usage("--theta is required for --op slag".into()))?;
            Ok(OperatorModel::slag(n, theta)?)
        }
        "sigma2" => Ok(OperatorModel::sigma2(n)),
        other => Err(Failure::Usage(format!("unknown operator '{other}' (expected slag or sigma2)"))),
    }
}

/// Writes the report, then turns a failed check into [`Failure::Check`].
fn emit<C: Serialize>(
    command: &str,
    config: &C,
    seed: Option<u64>,
    out: Option<&PathBuf>,
    outcome: Result<(bool, Value), Failure>,
) -> Result<(), Failure> {
    let (passed, result, error) = match outcome {
        Ok((p, r)) => (p, r, None),
        Err(Failure::Check(msg)) => (false, Value::Null, Some(msg)),
        Err(usage) => return Err(usage),
    };
    let mut report = json!({
        "command": command,
        "config": config,
        "seed": seed,
        "passed": passed,
        "result": result,
    });
    if let Some(e) = &error {
        report["error"] = json!(e);
    }
    let text = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    let where_ = match out {
        Some(p) => {
            std::fs::write(p, text).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?;
            p.display().to_string()
        }
        None => {
            print!("{text}");
            "stdout".to_string()
        }
    };
    if passed {
        Ok(())
    } else {
        Err(Failure::Check(match error {
            Some(e) => format!("{e} (report: {where_})"),
            None => format!("report: {where_}"),
        }))
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("serializable")
}

fn grid_summary(g: &GridField) -> Value {
    json!({"shape": g.shape(), "origin": g.origin(), "spacing": g.spacing()})
}

pub fn verify_catalog(args: VerifyCatalogArgs) -> Result<(), Failure> {
    let name = required(&args.entry, "entry")?;
    let entry = CatalogEntry::by_name(&name)?;
    let half_width = positive(args.half_width.unwrap_or(entry.admissible_box), "box")?;
    let nodes = args.nodes.unwrap_or(17);
    let tol = positive(args.tol.unwrap_or(1e-11), "tol")?;
    let grid = GridField::cube(entry.n, nodes, half_width, |_| 0.0)?;
    let outcome = (|| {
        let mut max_residual: f64 = 0.0;
        let mut min_sigma1 = f64::INFINITY;
        let mut max_trace_det_gap: f64 = 0.0;
        let mut skipped = 0;
        for k in 0..grid.len() {
            let x = grid.coords(k);
            if name == "hom2" && norm(&x) == 0.0 {
                skipped += 1;
                continue;
            }
            let h = entry.jet(&x)?.hessian;
            match entry.level {
                Level::Sigma2PositiveBranch => {
                    let (s2, _) = sigma2_positive_branch(&h);
                    max_residual = max_residual.max((s2 - 1.0).abs());
                    min_sigma1 = min_sigma1.min(h.trace());
                }
                Level::Phase(theta) => {
                    let phase: f64 = eigenvalues(&h)?.iter().map(|l| l.atan()).sum();
                    max_residual = max_residual.max((phase - theta).abs());
                }
                Level::Free => {}
            }
            if name == "li" {
                max_trace_det_gap = max_trace_det_gap.max((h.trace() - h.determinant()).abs());
            }
        }
        let branch_ok = !matches!(entry.level, Level::Sigma2PositiveBranch) || min_sigma1 > 0.0;
        let passed = max_residual < tol && max_trace_det_gap < tol && branch_ok;
        let mut result = json!({
            "entry": name,
            "n": entry.n,
            "level": to_value(&entry.level),
            "nodes": grid.len(),
            "max_residual": max_residual,
            "skipped_nodes": skipped,
        });
        if matches!(entry.level, Level::Sigma2PositiveBranch) {
            result["min_sigma1"] = json!(min_sigma1);
        }
        if name == "li" {
            result["max_laplacian_minus_det"] = json!(max_trace_det_gap);
        }
        Ok::<_, slaglab::Error>((passed, result))
    })()
    .map_err(Failure::from);
    emit("verify-catalog", &args, None, args.out.as_ref(), outcome)
}

pub fn solve(args: SolveArgs) -> Result<(), Failure> {
    let op_name = required(&args.op, "op")?;
    let boundary_path = required(&args.boundary, "boundary")?;
    let out = required(&args.out, "out")?;
    let boundary = input(&boundary_path)?;
    let op = operator(&op_name, args.theta, boundary.n_dims())?;
    let config = SolveConfig {
        max_newton_iters: args.max_iters.unwrap_or(50),
        residual_tol: positive(args.tol.unwrap_or(1e-10), "tol")?,
        ..SolveConfig::default()
    };
    config.validate()?;
    let outcome = match solve_dirichlet(&op, &boundary, &config, None) {
        Ok((u, report)) => {
            write_field(&out, &u).map_err(|e| Failure::Usage(format!("{}: {e}", out.display())))?;
            let passed = report.final_residual <= config.residual_tol;
            Ok((passed, json!({"operator": op, "solver": config, "report": report})))
        }
        Err(e) => Err(Failure::from(e)),
    };
    emit("solve", &args, None, args.report.as_ref(), outcome)
}

pub fn rotate(args: RotateArgs) -> Result<(), Failure> {
    let path = required(&args.input, "in")?;
    let beta = required(&args.beta, "beta")?;
    let u = input(&path)?;
    let params = RotationParams::new(beta)?;
    let outcome = (|| {
        let rg = rotate_graph(&u, &params)?;
        if let Some(out) = &args.out {
            write_field(out, &rg.u_bar)?;
        }
        let c = rg.u_bar.center_flat();
        let center = if rg.u_bar.is_interior(c) {
            let h = hessian_at(&rg.u_bar, c);
            json!({"coords": rg.u_bar.coords(c), "eigenvalues": eigenvalues(&h)?})
        } else {
            Value::Null
        };
        Ok((
            true,
            json!({
                "params": params,
                "rotation": rg.report,
                "output_grid": grid_summary(&rg.u_bar),
                "center_hessian": center,
            }),
        ))
    })()
    .map_err(|e: slaglab::Error| Failure::from(e));
    emit("rotate", &args, None, args.report.as_ref(), outcome)
}

pub fn legendre(args: LegendreArgs) -> Result<(), Failure> {
    let path = required(&args.input, "in")?;
    let out = required(&args.out, "out")?;
    let u = input(&path)?;
    let outcome = (|| {
        let w = legendre_transform(&u)?;
        write_field(&out, &w)?;
        Ok((true, json!({"output_grid": grid_summary(&w)})))
    })()
    .map_err(|e: slaglab::Error| Failure::from(e));
    emit("legendre", &args, None, args.report.as_ref(), outcome)
}

pub fn lewy(args: LewyArgs) -> Result<(), Failure> {
    let path = required(&args.input, "in")?;
    let out = required(&args.out, "out")?;
    let u = input(&path)?;
    let n = args.n.unwrap_or(u.n_dims());
    let outcome = (|| {
        let r = legendre_lewy_transform(&u, n)?;
        write_field(&out, &r.w_field)?;
        Ok((
            true,
            json!({
                "m": r.m,
                "mu_range": [r.mu_range.0, r.mu_range.1],
                "ratio_level": 1.0 / ((n as f64 - 1.0) * r.m),
                "output_grid": grid_summary(&r.w_field),
            }),
        ))
    })()
    .map_err(|e: slaglab::Error| Failure::from(e));
    emit("lewy", &args, None, args.report.as_ref(), outcome)
}

fn parse_slice(s: &str) -> Result<(usize, f64), Failure> {
    let bad = || Failure::Usage(format!("--slice expects x=<c>, y=<c> or z=<c>, got '{s}'"));
    let (axis, c) = s.split_once('=').ok_or_else(bad)?;
    let axis = match axis.trim() {
        "x" => 0,
        "y" => 1,
        "z" => 2,
        _ => return Err(bad()),
    };
    Ok((axis, c.trim().parse().map_err(|_| bad())?))
}

fn write_slice(field: &GridField, spec: &str, prefix: &Path) -> Result<Value, Failure> {
    let (axis, c) = parse_slice(spec)?;
    let s = slice_2d(field, axis, c)?;
    let csv = PathBuf::from(format!("{}.csv", prefix.display()));
    let pgm = PathBuf::from(format!("{}.pgm", prefix.display()));
    let io = |p: &Path, e: std::io::Error| Failure::Usage(format!("{}: {e}", p.display()));
    std::fs::write(&csv, slice_to_csv(&s)).map_err(|e| io(&csv, e))?;
    std::fs::write(&pgm, slice_to_pgm(&s)).map_err(|e| io(&pgm, e))?;
    Ok(json!({"csv": csv, "pgm": pgm, "rows": s.rows, "cols": s.cols}))
}

pub fn analyze(args: AnalyzeArgs) -> Result<(), Failure> {
    let path = required(&args.field, "field")?;
    let kind = args.report.clone().unwrap_or_else(|| "rank".into());
    let u = input(&path)?;
    let n = u.n_dims();
    let spec = classify_phase(n, args.theta.unwrap_or((n as f64 - 2.0) * FRAC_PI_2))?;
    let tol_rank = positive(args.tol_rank.unwrap_or(1e-6), "tol-rank")?;
    if let Some(s) = &args.slice {
        parse_slice(s)?;
    }
    let prefix = args.slice_prefix.clone().unwrap_or_else(|| match &args.out {
        Some(o) => PathBuf::from(format!("{}.lambda_min", o.with_extension("").display())),
        None => PathBuf::from("lambda_min"),
    });
    let outcome = (|| {
        let (mut result, lambda_min) = match kind.as_str() {
            "rank" => {
                let r = rank_report(&u, args.shift.unwrap_or(0.0), &spec, tol_rank)?;
                let mut counts = vec![0usize; n + 1];
                for &k in &r.ranks {
                    counts[k] += 1;
                }
                let mp = min_principle_check(&r.lambda_min_field, tol_rank);
                let lo = r.lambda_min_field.values().iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = r.lambda_min_field.values().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                (
                    json!({
                        "shift": r.shift,
                        "tol_rank": r.tol_rank,
                        "min_rank": r.min_rank,
                        "max_rank": r.max_rank,
                        "rank_counts": counts,
                        "lambda_min_range": [lo, hi],
                        "interior_min_sites": r.interior_min_sites,
                        "threshold_margin": r.threshold_margin,
                        "min_principle": mp,
                    }),
                    r.lambda_min_field,
                )
            }
            "split" => {
                let r = splitting_detector(&u, &spec, &SplitTolerances::default())?;
                let lmin = eigen_fields(&u)?.lambdas.swap_remove(0);
                (to_value(&r), lmin)
            }
            other => {
                return Err(Failure::Usage(format!("unknown --report '{other}' (expected rank or split)")));
            }
        };
        if let Some(s) = &args.slice {
            result["slice"] = write_slice(&lambda_min, s, &prefix)?;
        }
        Ok((true, result))
    })();
    emit("analyze", &args, None, args.out.as_ref(), outcome)
}

pub fn probe_levelset(args: ProbeArgs) -> Result<(), Failure> {
    let theta = required(&args.theta, "theta")?;
    let n = args.n.unwrap_or(3);
    let trials = args.trials.unwrap_or(1000);
    let seed = args.seed.unwrap_or(0);
    let spec = classify_phase(n, theta)?;
    let outcome = level_set_concavity_probe(&spec, trials, seed)
        .map(|r| (r.violations == 0, to_value(&r)))
        .map_err(Failure::from);
    emit("probe-levelset", &args, Some(seed), args.out.as_ref(), outcome)
}

pub fn check_viscosity(args: ViscosityArgs) -> Result<(), Failure> {
    let path = required(&args.field, "field")?;
    let op_name = required(&args.op, "op")?;
    let ineq = args.ineq.clone().unwrap_or_else(|| "4.3".into());
    let u = input(&path)?;
    let op = operator(&op_name, args.theta, u.n_dims())?;
    let mut config = ViscosityConfig::default();
    if let Some(v) = args.slack_factor {
        config.slack_factor = positive(v, "slack-factor")?;
    }
    if let Some(v) = args.residual_tol {
        config.residual_tol = positive(v, "residual-tol")?;
    }
    if let Some(v) = args.rank_tol {
        config.rank_tol = positive(v, "rank-tol")?;
    }
    let outcome = (|| {
        let report = match ineq.as_str() {
            "4.1" => check_gradient_identity_with(&u, &config)?,
            "4.3" => check_supersolution_lambda1_with(&u, &op, &config)?,
            "4.5" => check_partial_sums_with(&u, &op, &config)?,
            "final" => {
                let a = match args.a {
                    Some(a) => a,
                    None => vanishing_count(&u, config.rank_tol)?,
                };
                check_higher_rank_inequality_with(&u, &op, a, &config)?
            }
            other => {
                return Err(Failure::Usage(format!(
                    "unknown --ineq '{other}' (expected 4.1, 4.3, 4.5 or final)"
                )))
            }
        };
        Ok((report.passed(), json!({"viscosity": config, "report": report})))
    })();
    emit("check-viscosity", &args, None, args.out.as_ref(), outcome)
}

/// Number of leading eigenvalue fields that vanish within `tol` everywhere.
fn vanishing_count(u: &GridField, tol: f64) -> Result<usize, Failure> {
    let ef = eigen_fields(u)?;
    Ok(ef
        .lambdas
        .iter()
        .take_while(|f| f.values().iter().all(|v| v.abs() <= tol))
        .count()
        .min(u.n_dims() - 1))
}

pub fn hom2_audit(args: Hom2Args) -> Result<(), Failure> {
    let diag_text = args.diag.clone().unwrap_or_else(|| "1,1,1".into());
    let diag: Vec<f64> = diag_text
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| Failure::Usage(format!("--diag expects comma-separated numbers, got '{diag_text}'")))?;
    if diag.len() < 2 {
        return Err(Failure::Usage("--diag needs at least two entries".into()));
    }
    let theta = args.theta.unwrap_or_else(|| diag.iter().map(|l| l.atan()).sum());
    let spec = classify_phase(diag.len(), theta)?;
    let seed = args.seed.unwrap_or(0);
    let config = Hom2AuditConfig {
        samples: args.samples.unwrap_or(2000),
        seed,
        ..Hom2AuditConfig::default()
    };
    let g = quadratic_sphere_function(SymMatrix::diag(&diag));
    let outcome = slaglab::rank::hom2_audit(&g, &spec, &config)
        .map(|r| (r.verdict != Hom2Verdict::Contradiction, to_value(&r)))
        .map_err(Failure::from);
    emit("hom2-audit", &args, Some(seed), args.out.as_ref(), outcome)
}

pub fn catalog_sample(args: SampleArgs) -> Result<(), Failure> {
    let name = required(&args.entry, "entry")?;
    let out = required(&args.out, "out")?;
    let entry = CatalogEntry::by_name(&name)?;
    let nodes = args.nodes.unwrap_or(17);
    let half_width = positive(args.half_width.unwrap_or(entry.admissible_box), "box")?;
    let field = entry.sample_field(nodes, half_width)?;
    write_field(&out, &field).map_err(|e| Failure::Usage(format!("{}: {e}", out.display())))?;
    let result = json!({"entry": name, "level": to_value(&entry.level), "grid": grid_summary(&field)});
    emit("catalog-sample", &args, None, args.report.as_ref(), Ok((true, result)))
}
