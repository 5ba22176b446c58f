use crate::Failure;
use serde::Serialize;
use ssinv_core::characteristics::{export_csv, sci};
use ssinv_core::costs::{validate_costs, Check, CostValidation};
use ssinv_core::diffusion::{BoundaryReport, Side};
use ssinv_core::models::{delayed_cost, gbm_regime, jit_better, jit_cost, reflected_optimum, Builtin, GbmRegime};
use ssinv_core::qvi::{build_g, verify_qvi, QviReport};
use ssinv_core::simulator::{simulate as run_sim, stationary_check, write_histogram_csv, write_path_csv, PolicySpec, SimulationResult};
use ssinv_core::solver::{evaluate_policy, f_surface, minimize_f, SolveReport, StationaryDensity, Verdict};
use ssinv_core::{EvalMode, RunConfig, Setup, TableInfo};
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

pub struct Context {
    pub cfg: RunConfig,
    pub out: PathBuf,
    pub threads: Option<usize>,
}

impl Context {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    std::io::Write::write_all(&mut w, b"\n")?;
    Ok(())
}

fn model_name(ctx: &Context) -> &'static str {
    ctx.cfg.builtin().map(|b| b.name()).unwrap_or("expression")
}

fn regime(setup: &Setup) -> Option<GbmRegime> {
    match setup.builtin {
        Some(Builtin::Gbm(p)) => Some(gbm_regime(&p)),
        _ => None,
    }
}

fn regime_note(r: Option<GbmRegime>) -> &'static str {
    match r {
        Some(GbmRegime::NoOrderOptimal) => " (no-order regime: with k4 = 0 never ordering is optimal)",
        Some(GbmRegime::NoOptimum) => " (with k2 = k3 = 0 no optimal policy exists)",
        _ => "",
    }
}

/// Check the cost requirements; documented special regimes and an explicit
/// override continue past a failure.
fn checked_costs(ctx: &Context, setup: &Setup) -> Result<CostValidation, Failure> {
    let v = validate_costs(&setup.model, &setup.costs)?;
    let special = matches!(regime(setup), Some(r) if r != GbmRegime::Standard);
    let checks = [v.inf_compact, v.integrable, v.double_integral_infinite, v.limit_at_left, v.limit_at_right];
    if checks.contains(&Check::Fail) && !special && !ctx.cfg.skip_cost_validation {
        return Err(Failure::new(
            2,
            format!("cost requirements not met ({v:?}); set skip_cost_validation = true to proceed anyway"),
        ));
    }
    if checks.contains(&Check::Indeterminate) {
        eprintln!("warning: some cost requirements could not be decided numerically: {v:?}");
    }
    Ok(v)
}

#[derive(Serialize)]
struct SolveOutput<'a> {
    model: &'a str,
    mode: EvalMode,
    boundaries: BoundaryReport,
    cost_checks: CostValidation,
    regime: Option<GbmRegime>,
    table: Option<TableInfo>,
    report: &'a SolveReport,
}

fn solve_setup(ctx: &Context) -> Result<(Setup, CostValidation, SolveReport), Failure> {
    let setup = ctx.cfg.setup()?;
    let checks = checked_costs(ctx, &setup)?;
    let mut opts = ctx.cfg.solve;
    if opts.length_scale == 1.0 {
        opts.length_scale = setup.model.length_scale();
    }
    let report = minimize_f(&setup.chars, &setup.costs, &opts)?;
    Ok((setup, checks, report))
}

fn surface_axis(setup: &Setup, report: &SolveReport) -> Vec<f64> {
    let (a, b) = setup.chars.domain();
    let (lo, hi) = match report.verdict {
        Verdict::Minimizer => {
            let w = report.z_star - report.y_star;
            (report.y_star - w, report.z_star + w)
        }
        Verdict::NoMinimizer { .. } => {
            let c = setup.model.anchor();
            let l = setup.model.length_scale();
            (c - 5.0 * l, c + 5.0 * l)
        }
    };
    let lo = if a.is_finite() && lo <= a {
        if setup.chars.left_closed() {
            a
        } else {
            a + 1e-3 * (hi - a)
        }
    } else {
        lo
    };
    let hi = if b.is_finite() && hi >= b { b - 1e-3 * (b - lo) } else { hi };
    let n = 41;
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

fn write_surface(path: &Path, setup: &Setup, report: &SolveReport) -> Result<(), Failure> {
    let axis = surface_axis(setup, report);
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["y", "z", "cost"])?;
    for (y, z, v) in f_surface(&setup.chars, &setup.costs, &axis, &axis) {
        if y < z {
            w.write_record([sci(y), sci(z), sci(v)])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn solve(ctx: &Context) -> Result<u8, Failure> {
    let (setup, checks, report) = solve_setup(ctx)?;
    let reg = regime(&setup);
    write_json(
        &ctx.path("solve.json"),
        &SolveOutput {
            model: model_name(ctx),
            mode: setup.chars.mode(),
            boundaries: setup.boundaries,
            cost_checks: checks,
            regime: reg,
            table: setup.table,
            report: &report,
        },
    )?;
    write_surface(&ctx.path("f_surface.csv"), &setup, &report)?;
    match report.verdict {
        Verdict::Minimizer => {
            println!(
                "solve {}: y*={:.6} z*={:.6} F*={:.6}{} foc=[{:.2e}, {:.2e}]",
                model_name(ctx),
                report.y_star,
                report.z_star,
                report.f_star,
                if report.boundary_case { " (y* on the left boundary)" } else { "" },
                report.foc_residual[0],
                report.foc_residual[1],
            );
            Ok(0)
        }
        Verdict::NoMinimizer { boundary, infimum_estimate } => {
            let side = match boundary {
                Side::Left => "the order level falls toward the left boundary",
                Side::Right => "the order-up-to level grows toward the right boundary",
            };
            println!(
                "solve {}: no minimizer; the cost decreases toward an infimum of about {:.6} as {side}{}",
                model_name(ctx),
                infimum_estimate,
                regime_note(reg)
            );
            Ok(3)
        }
    }
}

pub fn verify(ctx: &Context) -> Result<u8, Failure> {
    let (setup, _, report) = solve_setup(ctx)?;
    if let Verdict::NoMinimizer { .. } = report.verdict {
        return Err(Failure::new(3, format!("no minimizer, nothing to verify{}", regime_note(regime(&setup)))));
    }
    let g = build_g(&setup.chars, &setup.costs, &report)?;
    let mut grid = ctx.cfg.verify;
    if grid.length_scale == 1.0 {
        grid.length_scale = setup.model.length_scale();
    }
    let rep: QviReport = verify_qvi(&g, &setup.model, &grid);
    write_json(&ctx.path("qvi.json"), &rep)?;
    let mut w = csv::Writer::from_path(ctx.path("witnesses.csv"))?;
    w.write_record(["check", "x", "z", "value"])?;
    for wit in &rep.witnesses {
        let check = serde_json::to_value(wit.check)?.as_str().unwrap_or_default().to_string();
        w.write_record([check, sci(wit.x), wit.z.map(sci).unwrap_or_default(), sci(wit.value)])?;
    }
    w.flush()?;
    println!(
        "verify {}: {} (tolerance {:.1e}; worst slacks {:.2e} / {:.2e}; equality residuals {:.2e} / {:.2e}; AG + c0 nonincreasing below y*: {:?}; {} witnesses)",
        model_name(ctx),
        if rep.passed { "pass" } else { "FAIL" },
        rep.tolerance,
        rep.worst_continuation_slack,
        rep.worst_order_slack,
        rep.continuation_equality_residual,
        rep.order_equality_residual,
        rep.lower_monotonicity,
        rep.witnesses.len()
    );
    Ok(if rep.passed { 0 } else { 4 })
}

#[derive(Serialize)]
struct SimulateOutput<'a> {
    model: &'a str,
    policy: &'a PolicySpec,
    analytic_cost: Option<f64>,
    stationary_distance: Option<f64>,
    result: &'a SimulationResult,
}

pub fn simulate(ctx: &Context) -> Result<u8, Failure> {
    let setup = ctx.cfg.setup()?;
    let policy = match &ctx.cfg.simulate.policy {
        Some(p) => p.clone(),
        None => {
            let mut opts = ctx.cfg.solve;
            if opts.length_scale == 1.0 {
                opts.length_scale = setup.model.length_scale();
            }
            let r = minimize_f(&setup.chars, &setup.costs, &opts)?;
            if let Verdict::NoMinimizer { .. } = r.verdict {
                return Err(Failure::new(3, "no minimizer to simulate; give simulate.policy explicitly"));
            }
            PolicySpec::OrderUpTo { y: r.y_star, z: r.z_star }
        }
    };
    let sim = ctx.cfg.simulate.sim_config(ctx.threads);
    println!("simulate {} seed={} dt={} horizon={} paths={}", model_name(ctx), sim.seed, sim.dt, sim.horizon, sim.paths);
    let result = run_sim(&setup.model, &setup.costs, &policy, &sim)?;
    let (analytic, dist) = match policy {
        PolicySpec::OrderUpTo { y, z } => {
            let e = evaluate_policy(&setup.chars, &setup.costs, y, z)?;
            let d = stationary_check(&result, &StationaryDensity::new(&setup.model, &e));
            (Some(e.cost), Some(d))
        }
        PolicySpec::JustInTime => match setup.builtin {
            Some(Builtin::ReflectedDbm(p)) => (Some(jit_cost(&p)?), None),
            _ => (None, None),
        },
        PolicySpec::DelayedTrigger { trigger, reorder, target } => match setup.builtin {
            Some(Builtin::ReflectedDbm(p)) if trigger == 0.0 => (Some(delayed_cost(&p, reorder, target)?), None),
            _ => (None, None),
        },
        PolicySpec::Custom(_) => (None, None),
    };
    write_json(
        &ctx.path("simulate.json"),
        &SimulateOutput { model: model_name(ctx), policy: &policy, analytic_cost: analytic, stationary_distance: dist, result: &result },
    )?;
    write_histogram_csv(&result, BufWriter::new(File::create(ctx.path("histogram.csv"))?))?;
    if !result.path_sample.is_empty() {
        write_path_csv(&result, BufWriter::new(File::create(ctx.path("path.csv"))?))?;
    }
    let mut line = format!(
        "avg_cost={:.6} +/- {:.6} (holding {:.6}, ordering {:.6}, reflection {:.6}) order_frequency={:.6}",
        result.avg_cost.mean,
        result.avg_cost.stderr,
        result.holding.mean,
        result.ordering.mean,
        result.reflection.mean,
        result.order_frequency.mean
    );
    if let Some(a) = analytic {
        line.push_str(&format!(" analytic={a:.6}"));
    }
    if let Some(d) = dist {
        line.push_str(&format!(" occupancy_distance={d:.4}"));
    }
    if result.aborted_paths > 0 {
        line.push_str(&format!(" aborted_paths={}", result.aborted_paths));
    }
    println!("{line}");
    Ok(0)
}

#[derive(Serialize)]
struct CompareRow {
    policy: String,
    y: f64,
    z: f64,
    analytic_cost: f64,
    cheaper_than_optimal: bool,
    simulated_cost: Option<f64>,
    simulated_stderr: Option<f64>,
}

pub fn compare(ctx: &Context) -> Result<u8, Failure> {
    let Some(Builtin::ReflectedDbm(p)) = ctx.cfg.builtin() else {
        return Err(Failure::new(1, "compare needs model.name = \"reflected_dbm\""));
    };
    if p.k5.is_none() {
        return Err(Failure::new(1, "compare needs the reflection cost k5"));
    }
    let model = p.reflected_diffusion()?;
    let costs = p.costs()?;
    let cc = ctx.cfg.compare;
    let (_, z_opt, f_opt) = reflected_optimum(&p);
    let sim_cfg = ssinv_core::SimConfig {
        seed: ctx.cfg.simulate.seed,
        dt: cc.dt,
        horizon: cc.horizon,
        paths: cc.paths,
        threads: ctx.threads,
        ..Default::default()
    };
    let sim = |policy: PolicySpec| -> Result<(Option<f64>, Option<f64>), Failure> {
        if !cc.simulate {
            return Ok((None, None));
        }
        let r = run_sim(&model, &costs, &policy, &sim_cfg)?;
        Ok((Some(r.avg_cost.mean), Some(r.avg_cost.stderr)))
    };

    let mut rows = Vec::new();
    let (sc, se) = sim(PolicySpec::OrderUpTo { y: 0.0, z: z_opt })?;
    rows.push(CompareRow {
        policy: "optimal_sS".into(),
        y: 0.0,
        z: z_opt,
        analytic_cost: f_opt,
        cheaper_than_optimal: false,
        simulated_cost: sc,
        simulated_stderr: se,
    });
    let jit = jit_cost(&p)?;
    let (sc, se) = sim(PolicySpec::JustInTime)?;
    rows.push(CompareRow {
        policy: "just_in_time".into(),
        y: 0.0,
        z: 0.0,
        analytic_cost: jit,
        cheaper_than_optimal: jit_better(&p)?,
        simulated_cost: sc,
        simulated_stderr: se,
    });
    let n = cc.grid.max(1);
    let z_max = cc.z_factor * z_opt;
    for j in 1..=n {
        let z = z_max * j as f64 / n as f64;
        for i in 1..=n {
            let y = z * i as f64 / (n + 1) as f64;
            let f_delayed = delayed_cost(&p, y, z)?;
            let (sc, se) = sim(PolicySpec::DelayedTrigger { trigger: 0.0, reorder: y, target: z })?;
            rows.push(CompareRow {
                policy: "delayed_trigger".into(),
                y,
                z,
                analytic_cost: f_delayed,
                cheaper_than_optimal: f_delayed < f_opt,
                simulated_cost: sc,
                simulated_stderr: se,
            });
        }
    }

    let mut w = csv::Writer::from_path(ctx.path("compare.csv"))?;
    w.write_record([
        "policy",
        "y",
        "z",
        "analytic_cost",
        "cheaper_than_optimal",
        "simulated_cost",
        "simulated_stderr",
    ])?;
    let opt = |v: Option<f64>| v.map(sci).unwrap_or_default();
    println!("compare reflected_dbm seed={} (optimal (s, S) = (0, {z_opt:.6}), cost {f_opt:.6})", sim_cfg.seed);
    println!("{:<16} {:>10} {:>10} {:>12} {:>12} {:>10}  cheaper", "policy", "y", "z", "analytic", "simulated", "stderr");
    for r in &rows {
        w.write_record([
            r.policy.clone(),
            sci(r.y),
            sci(r.z),
            sci(r.analytic_cost),
            r.cheaper_than_optimal.to_string(),
            opt(r.simulated_cost),
            opt(r.simulated_stderr),
        ])?;
        println!(
            "{:<16} {:>10.4} {:>10.4} {:>12.6} {:>12} {:>10}  {}",
            r.policy,
            r.y,
            r.z,
            r.analytic_cost,
            r.simulated_cost.map(|v| format!("{v:.6}")).unwrap_or_else(|| "-".into()),
            r.simulated_stderr.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into()),
            if r.cheaper_than_optimal { "yes" } else { "no" }
        );
    }
    w.flush()?;
    write_json(&ctx.path("compare.json"), &rows)?;
    Ok(0)
}

pub fn export_characteristics(ctx: &Context) -> Result<u8, Failure> {
    let setup = ctx.cfg.setup()?;
    let xs: Vec<f64> = match setup.chars.nodes() {
        Some(nodes) => nodes.to_vec(),
        None => {
            let g = ctx.cfg.characteristics.grid;
            let (lo, hi) = g.range(&setup.model);
            let n = g.initial_nodes.max(2) * 4;
            (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect()
        }
    };
    export_csv(&setup.chars, &xs, BufWriter::new(File::create(ctx.path("characteristics.csv"))?))?;
    println!("export-characteristics {}: {} rows ({:?})", model_name(ctx), xs.len(), setup.chars.mode());
    Ok(0)
}
