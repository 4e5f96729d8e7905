//! Browser bindings: simulate a scenario to SVG, certify and verify it, and
//! check the common-influencer property of a hand-edited graph.

use hkdelay::analysis::check_ci;
use hkdelay::io::{render_report, render_svg, verify_scenario, ScenarioFile, TrajectoryTable};
use hkdelay::{integrate, AdjacencyMask, DelayMatrix};
use wasm_bindgen::prelude::*;

const PRESETS: [(&str, &str); 5] = [
    ("general_complete", include_str!("../../../scenarios/general_complete.json")),
    ("single_leader_constant", include_str!("../../../scenarios/single_leader_constant.json")),
    ("single_leader_controlled", include_str!("../../../scenarios/single_leader_controlled.json")),
    ("two_leaders", include_str!("../../../scenarios/two_leaders.json")),
    ("multi_leader", include_str!("../../../scenarios/multi_leader.json")),
];

pub fn preset(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, text)| *text)
}

pub fn simulate(scenario_json: &str) -> Result<String, String> {
    let file = ScenarioFile::from_json(scenario_json).map_err(|e| format!("scenario error: {e}"))?;
    let config = file.to_config().map_err(|e| format!("scenario error: {e}"))?;
    let traj = integrate(&config).map_err(|e| format!("integration failed: {e}"))?;
    Ok(render_svg(&TrajectoryTable::from_trajectory(&traj)))
}

pub fn verify(scenario_json: &str) -> Result<String, String> {
    let file = ScenarioFile::from_json(scenario_json).map_err(|e| format!("scenario error: {e}"))?;
    let loaded = file.load().map_err(|e| format!("scenario error: {e}"))?;
    let run = verify_scenario(&loaded).map_err(|e| e.message)?;
    Ok(render_report("browser", &loaded, &run))
}

/// `chi` and `delays` are JSON square matrices; returns a JSON summary.
pub fn common_influencer(chi_json: &str, delays_json: &str) -> Result<String, String> {
    let chi: Vec<Vec<u8>> = serde_json::from_str(chi_json).map_err(|e| format!("chi: {e}"))?;
    let delays: Vec<Vec<f64>> = serde_json::from_str(delays_json).map_err(|e| format!("delays: {e}"))?;
    let mask = AdjacencyMask::from_rows(&chi).map_err(|e| e.to_string())?;
    let delays = DelayMatrix::from_rows(delays).map_err(|e| e.to_string())?;
    let report = check_ci(&mask, &delays).map_err(|e| e.to_string())?;
    let witnesses: Vec<serde_json::Value> = report
        .witnesses
        .iter()
        .map(|((i, j), w)| serde_json::json!({"pair": [i, j], "witnesses": w}))
        .collect();
    Ok(serde_json::json!({
        "holds": report.holds,
        "failing_pair": report.failing_pair,
        "reason": report.reason,
        "witnesses": witnesses,
    })
    .to_string())
}

#[wasm_bindgen(js_name = presetScenario)]
pub fn preset_scenario(name: &str) -> Option<String> {
    preset(name).map(str::to_string)
}

#[wasm_bindgen(js_name = simulateSvg)]
pub fn simulate_svg(scenario_json: &str) -> Result<String, JsValue> {
    simulate(scenario_json).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = verifyReport)]
pub fn verify_report(scenario_json: &str) -> Result<String, JsValue> {
    verify(scenario_json).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = checkCommonInfluencer)]
pub fn check_common_influencer(chi_json: &str, delays_json: &str) -> Result<String, JsValue> {
    common_influencer(chi_json, delays_json).map_err(|e| JsValue::from_str(&e))
}
