//! Runs a preset synthetic experiment and prints the summary table.
//!
//! `cargo run --release -p kcate-core --example experiment -- dense 1000 5 0 [methods]`

use std::time::Instant;

use kcate::config::{presets, Method};
use kcate::dgp::{Scenario, ScenarioSpec};
use kcate::harness::experiment::{run_experiment, MethodSettings};
use kcate::harness::report::{markdown_table, write_selections_csv};

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let kind = match args.first().map(String::as_str).unwrap_or("univariate") {
        "dense" => Scenario::MultiDense,
        "sparse" => Scenario::MultiSparse,
        _ => Scenario::Univariate,
    };
    let n: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(500);
    let reps: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(3);
    let seed: u64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(0);
    let cfg = match kind {
        Scenario::Univariate => presets::univariate(n, reps, seed),
        other => presets::multivariate(other, n, reps, seed),
    };
    let methods: Vec<Method> = match args.get(4) {
        Some(list) => list
            .split(',')
            .map(|m| serde_json::from_str(&format!("\"{m}\"")).expect("unknown method"))
            .collect(),
        None => cfg.simulation_methods(),
    };
    let settings = MethodSettings::from_config(&cfg);
    let sigma = cfg.scenario.as_ref().map_or(1.0, |s| s.sigma);
    let spec = ScenarioSpec::new(kind, n, sigma, seed);
    let start = Instant::now();
    let reports = run_experiment(&spec, &methods, &settings, reps, seed, cfg.execution.test_points).expect("experiment failed");
    print!("{}", markdown_table(&reports, true));
    for r in &reports {
        let v: Vec<String> = r.per_rep_mse().iter().map(|m| format!("{m:.3}")).collect();
        println!("{}: {}", r.method.name(), v.join(" "));
    }
    let mut buf = Vec::new();
    write_selections_csv(&mut buf, &reports).unwrap();
    print!("{}", String::from_utf8(buf).unwrap());
    println!("elapsed {:.1}s", start.elapsed().as_secs_f64());
}
