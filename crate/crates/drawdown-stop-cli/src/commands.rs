//! Subcommand implementations: each runs the solver or simulator and
//! writes its data files plus a gnuplot script into the output directory.

use crate::config::{effective_boundary, RunConfig};
use anyhow::{bail, Context, Result};
use drawdown_stop::{ExcursionSolver, Region, SimConfig, SolveResult, StrategyCurve};
use serde::Serialize;
use std::fs;
use std::path::Path;

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let path = dir.join(name);
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn csv_writer(dir: &Path, name: &str) -> Result<csv::Writer<fs::File>> {
    let path = dir.join(name);
    let file = fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(csv::Writer::from_writer(file))
}

fn write_script(dir: &Path, name: &str, body: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn solve(cfg: &RunConfig, sv: &ExcursionSolver) -> Result<SolveResult> {
    let (s_min, s_max) = (cfg.solve.s_min, cfg.solve.s_max);
    if s_min == s_max {
        // A degenerate range asks for the optimum at a single maximum; there
        // is no interval to march over and no turning points to detect.
        let choice = sv.optimize_level(s_min);
        let curve = StrategyCurve::new(vec![s_min], vec![choice.l_star], sv.b)
            .context("building the single-point curve")?;
        return Ok(SolveResult {
            curve,
            v_diag: vec![choice.value],
            turning_points: Vec::new(),
            objective_samples: None,
        });
    }
    sv.solve_curve(s_min, s_max, cfg.solve.n_grid)
        .context("solving the threshold curve")
}

/// `solve`: optimal curve, diagonal values, turning points, objective
/// samples for plotting.
pub fn cmd_solve(cfg: &RunConfig, out: &Path) -> Result<()> {
    let sv = cfg.build_solver()?;
    let solved = solve(cfg, &sv)?;

    let mut w = csv_writer(out, "lstar.csv")?;
    w.write_record(["s", "l_star", "v_diag"])?;
    for ((s, l), v) in solved
        .curve
        .s
        .iter()
        .zip(&solved.curve.l)
        .zip(&solved.v_diag)
    {
        w.write_record([s.to_string(), l.to_string(), v.to_string()])?;
    }
    w.flush()?;

    write_json(out, "turning_points.json", &solved.turning_points)?;

    // Objective cross-sections: the range ends plus every regime boundary,
    // sampled at the configured resolution for the shape plots.
    let mut cuts = vec![cfg.solve.s_min, cfg.solve.s_max];
    cuts.extend(solved.turning_points.iter().map(|t| t.s));
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    let mut w = csv_writer(out, "objective.csv")?;
    w.write_record(["s", "z", "objective"])?;
    for &s in &cuts {
        for (z, g) in sv.sample_objective(s, cfg.solve.z_grid.max(2)) {
            w.write_record([s.to_string(), z.to_string(), g.to_string()])?;
        }
    }
    w.flush()?;

    write_script(
        out,
        "lstar.gp",
        "set datafile separator ','\n\
         set key autotitle columnhead\n\
         set xlabel 's'\n\
         set term pngcairo size 900,600\n\
         set output 'lstar.png'\n\
         plot 'lstar.csv' using 1:2 with lines title 'l*(s)'\n\
         set output 'v_diag.png'\n\
         plot 'lstar.csv' using 1:3 with lines title 'V(s,s)'\n\
         set output 'objective.png'\n\
         set xlabel 'z'\n\
         plot 'objective.csv' using 2:3:1 with lines palette title 'G_s(z)'\n",
    )?;

    println!(
        "solved {} grid points on [{}, {}], {} turning point(s)",
        cfg.solve.n_grid,
        cfg.solve.s_min,
        cfg.solve.s_max,
        solved.turning_points.len()
    );
    Ok(())
}

/// `surface`: the value surface rows with region labels.
pub fn cmd_surface(cfg: &RunConfig, out: &Path) -> Result<()> {
    let sv = cfg.build_solver()?;
    let points = sv
        .surface_points(
            &cfg.surface.s_values,
            cfg.surface.n_x,
            cfg.surface.depth_below,
        )
        .context("evaluating the value surface")?;

    let mut w = csv_writer(out, "surface.csv")?;
    w.write_record(["x", "s", "v_bar", "region"])?;
    for p in &points {
        w.write_record([
            p.x.to_string(),
            p.s.to_string(),
            p.value.to_string(),
            p.region.as_str().to_string(),
        ])?;
    }
    w.flush()?;

    write_script(
        out,
        "surface.gp",
        "set datafile separator ','\n\
         set key autotitle columnhead\n\
         set xlabel 'x'\n\
         set ylabel 'value'\n\
         set term pngcairo size 900,600\n\
         set output 'surface.png'\n\
         plot 'surface.csv' using 1:3:2 with lines palette title 'V(x,s) by s'\n",
    )?;

    println!(
        "evaluated {} surface points over {} maximum level(s)",
        points.len(),
        cfg.surface.s_values.len()
    );
    Ok(())
}

#[derive(Serialize)]
struct ProbeReport {
    x: f64,
    s: f64,
    region: Region,
    closed_form: f64,
    mc_mean: f64,
    mc_se: f64,
    bias_bound: f64,
    gap: f64,
    slack: f64,
    pass: bool,
    n_stopped: usize,
    n_ruined: usize,
    n_truncated: usize,
    mean_tau: f64,
}

#[derive(Serialize)]
struct McReport {
    dt: f64,
    horizon: f64,
    n_paths: usize,
    seed: u64,
    antithetic: bool,
    probes: Vec<ProbeReport>,
    all_pass: bool,
}

/// `simulate`: pathwise estimates against the closed-form surface at the
/// configured probes, with a coupled step-refinement bias bound.
pub fn cmd_simulate(cfg: &RunConfig, out: &Path) -> Result<()> {
    let sv = cfg.build_solver()?;
    let solved = solve(cfg, &sv)?;
    let sim = cfg.sim_config()?;

    let mut probes = Vec::new();
    for &[x, s] in &cfg.sim.probes {
        if x > s {
            bail!("probe ({x}, {s}) has x above the running maximum");
        }
        if s - x > cfg.b {
            bail!("probe ({x}, {s}) starts below the ruin boundary s - b");
        }
        let region = sv.classify(x, s, sv.optimize_level(s).l_star);
        let closed = sv.value_surface(x, s)?;
        let est = sv.estimate_value(&solved.curve, x, s, &sim)?;
        let bias_cfg = SimConfig::new(
            sim.dt,
            sim.horizon,
            (sim.n_paths / 10).max(1000),
            sim.seed.wrapping_add(1),
            sim.antithetic,
        )?;
        let bias_est = sv.estimate_bias(&solved.curve, x, s, &bias_cfg)?;
        let bias_bound = bias_est.mean.abs() + 3.0 * bias_est.se;
        let gap = (closed - est.mean).abs();
        let slack = 3.0 * est.se + bias_bound;
        probes.push(ProbeReport {
            x,
            s,
            region,
            closed_form: closed,
            mc_mean: est.mean,
            mc_se: est.se,
            bias_bound,
            gap,
            slack,
            pass: gap <= slack,
            n_stopped: est.n_stopped,
            n_ruined: est.n_ruined,
            n_truncated: est.n_truncated,
            mean_tau: est.mean_tau,
        });
    }

    let report = McReport {
        dt: sim.dt,
        horizon: sim.horizon,
        n_paths: sim.n_paths,
        seed: sim.seed,
        antithetic: sim.antithetic,
        all_pass: probes.iter().all(|p| p.pass),
        probes,
    };
    write_json(out, "mc_report.json", &report)?;
    for p in &report.probes {
        println!(
            "probe ({}, {}): closed {:.6} vs mc {:.6} +/- {:.6}, gap {:.6} vs slack {:.6} -> {}",
            p.x,
            p.s,
            p.closed_form,
            p.mc_mean,
            p.mc_se,
            p.gap,
            p.slack,
            if p.pass { "pass" } else { "FAIL" }
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct RegimeInterval {
    from: f64,
    to: f64,
    regime: &'static str,
    level_at_midpoint: f64,
}

#[derive(Serialize)]
struct RegimesReport {
    turning_points: Vec<drawdown_stop::TurningPoint>,
    intervals: Vec<RegimeInterval>,
    effective_boundary: Option<f64>,
}

/// `regimes`: the regime decomposition of the solve range, plus the
/// deleveraging boundary when configured.
pub fn cmd_regimes(cfg: &RunConfig, out: &Path) -> Result<()> {
    let sv = cfg.build_solver()?;
    let solved = solve(cfg, &sv)?;

    let mut edges = vec![cfg.solve.s_min];
    edges.extend(solved.turning_points.iter().map(|t| t.s));
    edges.push(cfg.solve.s_max);
    let mut intervals = Vec::new();
    for pair in edges.windows(2) {
        let (from, to) = (pair[0], pair[1]);
        if to - from < 1e-12 {
            continue;
        }
        let mid = 0.5 * (from + to);
        let level = sv.optimize_level(mid).l_star;
        let regime = if level >= cfg.b * (1.0 - 1e-9) {
            "cap"
        } else if level <= 1e-9 {
            "stop"
        } else {
            "interior"
        };
        intervals.push(RegimeInterval {
            from,
            to,
            regime,
            level_at_midpoint: level,
        });
    }

    let report = RegimesReport {
        turning_points: solved.turning_points.clone(),
        intervals,
        effective_boundary: cfg
            .deleverage_alpha
            .map(|alpha| effective_boundary(cfg.b, alpha))
            .transpose()?,
    };
    write_json(out, "regimes.json", &report)?;
    for iv in &report.intervals {
        println!(
            "[{:.4}, {:.4}] {} (l* at midpoint {:.6})",
            iv.from, iv.to, iv.regime, iv.level_at_midpoint
        );
    }
    if let Some(eb) = report.effective_boundary {
        println!("effective deleveraging boundary: {eb:.6}");
    }
    Ok(())
}

#[derive(Serialize)]
struct LaplaceCheck {
    beta: f64,
    numeric: f64,
    target: f64,
    rel_err: f64,
}

#[derive(Serialize)]
struct ScaleCheckReport {
    w0: f64,
    w_prime0: f64,
    slope_target: f64,
    laplace: Vec<LaplaceCheck>,
    max_rel_err: f64,
    pass: bool,
}

/// `scale-check`: verify the scale function against its Laplace transform
/// and boundary values; exits nonzero when an identity fails.
pub fn cmd_scale_check(cfg: &RunConfig, out: &Path) -> Result<()> {
    let sv = cfg.build_solver()?;
    let sf = &sv.scale;
    let slope = 2.0 / (sv.model.sigma * sv.model.sigma);

    let mut laplace = Vec::new();
    let mut worst = 0.0f64;
    for d in [0.5, 1.0, 3.0] {
        let beta = sf.phi + d;
        let target = 1.0 / (sv.model.laplace_exponent(beta) - sf.q);
        let hi = (55.0 / d).min(120.0);
        let n = 200_000;
        let h = hi / n as f64;
        // Composite Simpson of e^{-beta x} W(x).
        let f = |x: f64| (-beta * x).exp() * sf.w(x);
        let mut acc = f(0.0) + f(hi);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * f(i as f64 * h);
        }
        let numeric = acc * h / 3.0;
        let rel_err = (numeric - target).abs() / target.abs();
        worst = worst.max(rel_err);
        laplace.push(LaplaceCheck {
            beta,
            numeric,
            target,
            rel_err,
        });
    }

    let w0 = sf.w(0.0);
    let w_prime0 = sf.w_prime(0.0);
    let edges_ok = w0.abs() <= 1e-10 * slope && (w_prime0 - slope).abs() <= 1e-10 * slope;
    let report = ScaleCheckReport {
        w0,
        w_prime0,
        slope_target: slope,
        laplace,
        max_rel_err: worst,
        pass: worst <= 1e-6 && edges_ok,
    };
    write_json(out, "scale_check.json", &report)?;
    for c in &report.laplace {
        println!(
            "beta {:.4}: transform {:.10} vs 1/(psi-q) {:.10} (rel {:.2e})",
            c.beta, c.numeric, c.target, c.rel_err
        );
    }
    println!(
        "W(0) = {:.3e} (target 0), W'(0+) = {:.10} (target {:.10})",
        report.w0, report.w_prime0, report.slope_target
    );
    if !report.pass {
        bail!("scale-function identities failed (max relative error {worst:.2e})");
    }
    println!("scale-function identities hold (max relative error {worst:.2e})");
    Ok(())
}

