//! Browser bindings for the drawdown-stop solver.
//!
//! Three operations back the static demo page in `www/`: solve the threshold
//! curve over a range of maxima, sample one excursion objective, and cut a
//! slice through the value surface. Each takes a JSON request string and
//! returns a JSON response string, so the JavaScript side needs nothing
//! beyond `JSON.parse`. Failures come back as `{"error": "..."}` instead of
//! an exception.
//!
//! Payoffs are fixed to the demo family (running reward `e^{x/2}`, stopping
//! reward `e^x`, no ruin penalty); the model, discount rate, ruin width, and
//! grids are all chosen by the request. Unknown request keys are ignored.
//!
//! The same functions compile natively, which is how the tests below run;
//! nothing here requires a browser.

use drawdown_stop::{
    ExcursionSolver, ExpPayoff, ExpTerm, Jumps, LevyModel, PayoffBundle,
};
use serde::Deserialize;
use serde_json::{json, Value};
use wasm_bindgen::prelude::wasm_bindgen;

/// Model, discount, and ruin-width part shared by every request.
#[derive(Debug, Clone, Deserialize)]
struct ModelRequest {
    /// Drift coefficient.
    mu: f64,
    /// Brownian volatility.
    sigma: f64,
    /// Poisson arrival rate of downward jumps; omit for pure diffusion.
    #[serde(default)]
    intensity: Option<f64>,
    /// Exponential jump-size rate; omit for pure diffusion.
    #[serde(default)]
    rate: Option<f64>,
    /// Discount rate.
    #[serde(default = "default_q")]
    q: f64,
    /// Ruin drawdown width.
    #[serde(default = "default_b")]
    b: f64,
}

fn default_q() -> f64 {
    0.1
}

fn default_b() -> f64 {
    1.0
}

impl ModelRequest {
    fn build(&self) -> Result<ExcursionSolver, String> {
        let jumps = match (self.intensity, self.rate) {
            (None, None) => Jumps::None,
            (Some(intensity), Some(rate)) => Jumps::Exponential { intensity, rate },
            _ => return Err("jumps need both intensity and rate".into()),
        };
        let model = LevyModel {
            mu: self.mu,
            sigma: self.sigma,
            jumps,
        };
        let running = ExpPayoff::new(vec![ExpTerm {
            coef: 1.0,
            gamma: 0.5,
        }]);
        let reward = ExpPayoff::new(vec![ExpTerm {
            coef: 1.0,
            gamma: 1.0,
        }]);
        let penalty = ExpPayoff::new(Vec::new());
        let bundle = PayoffBundle::new(&model, self.q, running, reward, penalty)
            .map_err(|e| e.to_string())?;
        ExcursionSolver::new(model, bundle, self.b).map_err(|e| e.to_string())
    }
}

fn parse<'a, T: Deserialize<'a>>(request: &'a str) -> Result<T, String> {
    serde_json::from_str(request).map_err(|e| format!("bad request: {e}"))
}

fn respond(result: Result<Value, String>) -> String {
    match result {
        Ok(value) => value.to_string(),
        Err(error) => json!({ "error": error }).to_string(),
    }
}

#[derive(Debug, Deserialize)]
struct SolveRequest {
    #[serde(flatten)]
    model: ModelRequest,
    #[serde(default = "default_s_min")]
    s_min: f64,
    #[serde(default = "default_s_max")]
    s_max: f64,
    #[serde(default = "default_n_grid")]
    n_grid: usize,
}

fn default_s_min() -> f64 {
    4.0
}

fn default_s_max() -> f64 {
    5.5
}

fn default_n_grid() -> usize {
    201
}

/// Solve the optimal threshold curve `l*` on a grid of maxima.
///
/// Request: model fields plus optional `s_min`, `s_max`, `n_grid`.
/// Response: `{s, l_star, v_diag, b, turning_points}` with parallel arrays
/// and the refined regime boundaries.
#[wasm_bindgen]
pub fn solve_curve(request: &str) -> String {
    respond(solve_curve_impl(request))
}

fn solve_curve_impl(request: &str) -> Result<Value, String> {
    let req: SolveRequest = parse(request)?;
    let sv = req.model.build()?;
    // Keep interactive latency bounded whatever the page sends.
    let n = req.n_grid.min(2001);
    let solved = sv
        .solve_curve(req.s_min, req.s_max, n)
        .map_err(|e| e.to_string())?;
    Ok(json!({
        "s": solved.curve.s,
        "l_star": solved.curve.l,
        "v_diag": solved.v_diag,
        "b": solved.curve.b,
        "turning_points": solved.turning_points,
    }))
}

#[derive(Debug, Deserialize)]
struct ObjectiveRequest {
    #[serde(flatten)]
    model: ModelRequest,
    s: f64,
    #[serde(default = "default_samples")]
    n: usize,
}

fn default_samples() -> usize {
    257
}

/// Sample the excursion objective `G_s(z)` for one maximum `s`.
///
/// Request: model fields plus `s` and optional sample count `n`.
/// Response: `{z, objective, l_star, value, secondary}` where `secondary`
/// is the runner-up local maximiser (or null) — the pair that collides at a
/// branch-switch turning point.
#[wasm_bindgen]
pub fn objective_profile(request: &str) -> String {
    respond(objective_profile_impl(request))
}

fn objective_profile_impl(request: &str) -> Result<Value, String> {
    let req: ObjectiveRequest = parse(request)?;
    let sv = req.model.build()?;
    let samples = sv.sample_objective(req.s, req.n.clamp(2, 4097));
    let choice = sv.optimize_level(req.s);
    let (z, objective): (Vec<f64>, Vec<f64>) = samples.into_iter().unzip();
    Ok(json!({
        "z": z,
        "objective": objective,
        "l_star": choice.l_star,
        "value": choice.value,
        "secondary": choice.secondary,
    }))
}

#[derive(Debug, Deserialize)]
struct SliceRequest {
    #[serde(flatten)]
    model: ModelRequest,
    s: f64,
    #[serde(default = "default_n_x")]
    n_x: usize,
    #[serde(default = "default_depth")]
    depth_below: f64,
}

fn default_n_x() -> usize {
    161
}

fn default_depth() -> f64 {
    0.25
}

/// Cut the value surface along one maximum: `V̄(x, s)` for `x` from below
/// the ruin barrier up to the diagonal.
///
/// Request: model fields plus `s`, optional `n_x` and `depth_below`.
/// Response: `{x, value, region, l_star}` with `region` one of
/// `"continue" | "stop" | "ruined"` per position.
#[wasm_bindgen]
pub fn value_slice(request: &str) -> String {
    respond(value_slice_impl(request))
}

fn value_slice_impl(request: &str) -> Result<Value, String> {
    let req: SliceRequest = parse(request)?;
    let sv = req.model.build()?;
    let points = sv
        .surface_points(&[req.s], req.n_x.clamp(2, 2001), req.depth_below)
        .map_err(|e| e.to_string())?;
    let l_star = sv.optimize_level(req.s).l_star;
    let x: Vec<f64> = points.iter().map(|p| p.x).collect();
    let value: Vec<f64> = points.iter().map(|p| p.value).collect();
    let region: Vec<&str> = points.iter().map(|p| p.region.as_str()).collect();
    Ok(json!({
        "x": x,
        "value": value,
        "region": region,
        "l_star": l_star,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    const JUMP_MODEL: &str =
        r#""mu": 0.25, "sigma": 0.1, "intensity": 2.0, "rate": 10.0, "q": 0.1, "b": 1.0"#;

    fn value_of(response: &str) -> Value {
        let v: Value = serde_json::from_str(response).expect("response is JSON");
        assert!(
            v.get("error").is_none(),
            "unexpected error response: {response}"
        );
        v
    }

    #[test]
    fn solves_the_jump_example_curve() {
        let response = solve_curve(&format!(
            r#"{{ {JUMP_MODEL}, "s_min": 4.0, "s_max": 5.5, "n_grid": 151 }}"#
        ));
        let v = value_of(&response);
        let s = v["s"].as_array().unwrap();
        let l = v["l_star"].as_array().unwrap();
        assert_eq!(s.len(), 151);
        assert_eq!(l.len(), 151);
        let at_five = s
            .iter()
            .position(|si| (si.as_f64().unwrap() - 5.0).abs() < 1e-9)
            .expect("5.0 lies on the grid");
        let l5 = l[at_five].as_f64().unwrap();
        assert!((l5 - 0.915551).abs() < 5e-3, "l*(5) = {l5}");
        let turns = v["turning_points"].as_array().unwrap();
        assert_eq!(turns.len(), 2, "cap detach plus branch switch");
        assert!((turns[0]["s"].as_f64().unwrap() - 4.1464).abs() < 0.01);
        assert!((turns[1]["s"].as_f64().unwrap() - 5.1963).abs() < 0.01);
    }

    #[test]
    fn solves_the_diffusion_example_curve() {
        let response = solve_curve(
            r#"{ "mu": 0.05, "sigma": 0.1, "s_min": 4.5, "s_max": 5.5, "n_grid": 101 }"#,
        );
        let v = value_of(&response);
        let turns = v["turning_points"].as_array().unwrap();
        assert_eq!(turns.len(), 1);
        let at = turns[0]["s"].as_f64().unwrap();
        assert!((at - 5.2141).abs() < 0.01, "turning at {at}");
    }

    #[test]
    fn objective_marks_its_maximiser() {
        let response =
            objective_profile(&format!(r#"{{ {JUMP_MODEL}, "s": 5.0, "n": 513 }}"#));
        let v = value_of(&response);
        let z = v["z"].as_array().unwrap();
        let g = v["objective"].as_array().unwrap();
        assert_eq!(z.len(), 513);
        let l_star = v["l_star"].as_f64().unwrap();
        let value = v["value"].as_f64().unwrap();
        assert!((l_star - 0.915551).abs() < 5e-3);
        let best_sample = g
            .iter()
            .map(|gi| gi.as_f64().unwrap())
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(
            value >= best_sample - 1e-9 * value.abs(),
            "reported optimum {value} below best sample {best_sample}"
        );
    }

    #[test]
    fn slice_covers_all_regions_with_exact_stop_values() {
        let response = value_slice(&format!(
            r#"{{ {JUMP_MODEL}, "s": 5.0, "n_x": 81, "depth_below": 0.2 }}"#
        ));
        let v = value_of(&response);
        let x = v["x"].as_array().unwrap();
        let val = v["value"].as_array().unwrap();
        let region = v["region"].as_array().unwrap();
        assert_eq!(x.len(), 81);
        let mut seen = [false; 3];
        for i in 0..81 {
            let xi = x[i].as_f64().unwrap();
            let vi = val[i].as_f64().unwrap();
            match region[i].as_str().unwrap() {
                "continue" => seen[0] = true,
                "stop" => {
                    seen[1] = true;
                    let g = xi.exp();
                    assert!((vi - g).abs() <= 1e-12 * g, "stop value at {xi}");
                }
                "ruined" => {
                    seen[2] = true;
                    assert_eq!(vi, 0.0);
                }
                other => panic!("unknown region {other}"),
            }
        }
        assert_eq!(seen, [true; 3]);
        let last = x[80].as_f64().unwrap();
        assert_eq!(last, 5.0, "slice must end on the diagonal");
    }

    #[test]
    fn errors_come_back_as_json() {
        let bad_json = solve_curve("not json");
        let v: Value = serde_json::from_str(&bad_json).unwrap();
        assert!(v["error"].as_str().unwrap().contains("bad request"));

        let bad_model = solve_curve(r#"{ "mu": 0.25, "sigma": 0.0 }"#);
        let v: Value = serde_json::from_str(&bad_model).unwrap();
        assert!(v["error"].as_str().unwrap().contains("sigma"));

        let half_jumps = solve_curve(r#"{ "mu": 0.25, "sigma": 0.1, "intensity": 2.0 }"#);
        let v: Value = serde_json::from_str(&half_jumps).unwrap();
        assert!(v["error"]
            .as_str()
            .unwrap()
            .contains("both intensity and rate"));
    }
}
