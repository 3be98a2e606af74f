//! Browser bindings: three small operations the demo page calls, each taking
//! plain numbers and returning a JSON string.

use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

use onion_trace::adversary::{simulate_port_match, unique_port_probability};
use onion_trace::analysis::{analyze, compare_defenses};
use onion_trace::scenario::{run, PolicyName, ScenarioConfig};
use onion_trace::sim::rng_for;

const WEB_STREAM: u64 = 4;

/// Overrides that shrink the default scenario to something a browser tab
/// finishes in a second or two.
fn small_scenario(n_peers: u32, minutes: u32, seed: u64) -> Result<ScenarioConfig, String> {
    let overrides = [
        format!("bittorrent.n_peers={n_peers}"),
        format!("virtual_duration_s={}", u64::from(minutes.max(1)) * 60),
        format!("seed={seed}"),
        "bittorrent.catalog.n_items=2000".to_string(),
        "web.n_web_only_users=50".to_string(),
    ];
    ScenarioConfig::from_toml_str("", &overrides).map_err(|e| e.to_string())
}

/// Simulated and exact probability that a listening port is unique in a
/// swarm, for swarm sizes 1..=max_size on a log-ish grid.
pub fn port_collision_curve_json(max_size: u32, trials: u32, seed: u64) -> String {
    let mut rng = rng_for(seed, WEB_STREAM);
    let mut sizes = vec![];
    let mut s = 1u32;
    while s <= max_size.max(1) {
        sizes.push(s);
        s = if s < 10 { s + 1 } else { s + s / 2 };
    }
    let points: Vec<Value> = sizes
        .into_iter()
        .map(|s| {
            json!({
                "size": s,
                "simulated": simulate_port_match(s, trials, &mut rng),
                "exact": unique_port_probability(s),
            })
        })
        .collect();
    Value::Array(points).to_string()
}

pub fn run_scenario_json(
    n_peers: u32,
    minutes: u32,
    policy: &str,
    seed: u64,
) -> Result<String, String> {
    let policy = PolicyName::parse(policy).ok_or_else(|| format!("unknown policy `{policy}`"))?;
    let cfg = small_scenario(n_peers, minutes, seed)?.with_policy(policy);
    let out = run(&cfg).map_err(|e| e.to_string())?;
    let report = analyze(&out).map_err(|e| e.to_string())?;
    serde_json::to_string(&json!({
        "policy": policy.as_str(),
        "metrics": report.scorecard.metrics,
        "methods": report.scorecard.methods,
        "hijack": report.scorecard.hijack,
        "over_country": report.over_country,
        "events": report.stats.events,
    }))
    .map_err(|e| e.to_string())
}

pub fn compare_policies_json(n_peers: u32, minutes: u32, seeds: u32) -> Result<String, String> {
    let cfg = small_scenario(n_peers, minutes, 1)?;
    let seeds: Vec<u64> = (1..=u64::from(seeds.max(1))).collect();
    let (_, summary) =
        compare_defenses(&cfg, &PolicyName::ALL, &seeds).map_err(|e| e.to_string())?;
    serde_json::to_string(&summary).map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn port_collision_curve(max_size: u32, trials: u32, seed: u32) -> String {
    port_collision_curve_json(max_size, trials, u64::from(seed))
}

#[wasm_bindgen]
pub fn run_scenario(
    n_peers: u32,
    minutes: u32,
    policy: &str,
    seed: u32,
) -> Result<String, JsError> {
    run_scenario_json(n_peers, minutes, policy, u64::from(seed)).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn compare_policies(n_peers: u32, minutes: u32, seeds: u32) -> Result<String, JsError> {
    compare_policies_json(n_peers, minutes, seeds).map_err(|e| JsError::new(&e))
}
