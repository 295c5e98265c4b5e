use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use dispatch_core::dispatch::{plan_epoch, run_episode, DispatchConfig, EpisodeOutcome};
use dispatch_core::evolve::{run_evolution, EvolveConfig, HsParams, LoopMode};
use dispatch_core::generator::{build_generator, GeneratorConfig, GeneratorMode};
use dispatch_core::metrics::Metrics;
use dispatch_core::network::{
    generate_scenario, load_od_frequency, load_travel_matrix, parse_scenario_name, synthetic_city, OdFrequency,
    Scenario, TravelTimeMatrix,
};
use dispatch_core::objective::{builtin, parse_valid, ObjectiveSpec, BUILTIN_NAMES};
use dispatch_core::oracle::{solve_holistic, OracleLimits};
use dispatch_core::sim::Simulation;
use dispatch_core::Execution;
use serde_json::{json, Value};

use crate::args::{
    read_file, CityArgs, DispatchArgs, EvolveArgs, GenerateArgs, OracleArgs, ReportArgs, RunArgs, ScenarioArgs,
};
use crate::InvariantViolation;

fn load_city(c: &CityArgs, need_freq: bool) -> Result<(TravelTimeMatrix, Option<OdFrequency>)> {
    match &c.matrix {
        Some(path) => {
            let matrix = load_travel_matrix(path)?;
            let freq = match &c.freq {
                Some(f) => Some(load_od_frequency(f, &matrix)?),
                None if need_freq => bail!("--matrix needs --freq to sample requests"),
                None => None,
            };
            Ok((matrix, freq))
        }
        None => {
            if c.freq.is_some() {
                bail!("--freq needs --matrix");
            }
            if c.zones < 2 {
                bail!("--zones must be at least 2");
            }
            let (m, f) = synthetic_city(c.zones, c.city_seed);
            Ok((m, Some(f)))
        }
    }
}

fn sample(city: &CityArgs, name: &str, seed: u64) -> Result<(Scenario, TravelTimeMatrix)> {
    let spec = parse_scenario_name(name)?.with_seed(seed);
    let (matrix, freq) = load_city(city, true)?;
    let scenario = generate_scenario(spec, freq.as_ref().expect("frequencies loaded"), &matrix)?;
    Ok((scenario, matrix))
}

fn load_scenario(a: &ScenarioArgs) -> Result<(Scenario, TravelTimeMatrix)> {
    match (&a.scenario, &a.name) {
        (Some(path), _) => {
            let (matrix, _) = load_city(&a.city, false)?;
            let scenario = Scenario::from_json(&read_file(path)?)
                .with_context(|| format!("{} is not a scenario file", path.display()))?;
            if scenario.matrix_ref != matrix.digest() {
                bail!(
                    "{} was generated on a different travel-time matrix (digest {}, have {})",
                    path.display(),
                    scenario.matrix_ref,
                    matrix.digest()
                );
            }
            scenario.validate(&matrix)?;
            Ok((scenario, matrix))
        }
        (None, Some(name)) => sample(&a.city, name, a.seed),
        (None, None) => bail!("give --scenario FILE or --name P<n>_C<n>_T<n>"),
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn run_dir(out: Option<&Path>, command: &str, label: &str) -> Result<PathBuf> {
    let dir = match out {
        Some(p) => p.to_path_buf(),
        None => {
            let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%S%.3fZ");
            PathBuf::from("runs").join(format!("{command}-{label}-{stamp}"))
        }
    };
    fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
    Ok(dir)
}

fn manifest(command: &str, scenario: &Scenario, matrix: &TravelTimeMatrix, extra: Value) -> Value {
    json!({
        "command": command,
        "argv": std::env::args().collect::<Vec<_>>(),
        "scenario": scenario.name(),
        "scenario_seed": scenario.spec.seed,
        "matrix_digest": matrix.digest(),
        "settings": extra,
        "version": env!("CARGO_PKG_VERSION"),
        "created_at": chrono::Utc::now().to_rfc3339(),
    })
}

fn write_artifacts(dir: &Path, metrics: &Metrics, trace_jsonl: &str, manifest: &Value) -> Result<()> {
    write(&dir.join("manifest.json"), &serde_json::to_string_pretty(manifest)?)?;
    write(&dir.join("metrics.json"), &metrics.to_json())?;
    write(&dir.join("heatmap.csv"), &metrics.heatmap_csv())?;
    write(&dir.join("trace.jsonl"), trace_jsonl)
}

fn dispatch_config(d: &DispatchArgs) -> Result<DispatchConfig> {
    if d.dt == 0 || d.bins == 0 {
        bail!("--dt and --bins must be positive");
    }
    Ok(DispatchConfig {
        dt: d.dt,
        bin_seconds: d.bins,
        exec: Execution::Parallel,
        ..DispatchConfig::default()
    })
}

pub fn generate(a: &GenerateArgs) -> Result<()> {
    let (scenario, _) = sample(&a.city, &a.name, a.seed)?;
    let text = scenario.to_json();
    match &a.out {
        Some(path) => {
            write(path, &text)?;
            eprintln!("wrote {} requests to {}", scenario.requests.len(), path.display());
        }
        None => println!("{text}"),
    }
    Ok(())
}

/// Builtin name or objective JSON file, with a label for reports.
fn resolve_objective(selector: &str) -> Result<(ObjectiveSpec, String)> {
    if selector == "evolve" {
        bail!("objectives are evolved by the `evolve` command");
    }
    if BUILTIN_NAMES.contains(&selector) {
        return Ok((builtin(selector)?, selector.to_string()));
    }
    let path = Path::new(selector);
    if !path.exists() {
        bail!(
            "unknown objective {selector:?}: not a file and not one of {}",
            BUILTIN_NAMES.join(", ")
        );
    }
    let spec = parse_valid(&read_file(path)?).with_context(|| format!("invalid objective in {selector}"))?;
    let label = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    Ok((spec, label))
}

pub fn run(a: &RunArgs) -> Result<()> {
    let (spec, label) = resolve_objective(&a.objective)?;
    let (scenario, matrix) = load_scenario(&a.scenario)?;
    let cfg = dispatch_config(&a.dispatch)?;
    let EpisodeOutcome { trace, metrics, epochs } = run_episode(&scenario, &matrix, &cfg, |_, _| spec.clone())?;
    let metrics = metrics.with_labels(scenario.name(), label.clone());
    let dir = run_dir(a.dispatch.out.as_deref(), "run", &format!("{}-{label}", scenario.name()))?;
    let m = manifest(
        "run",
        &scenario,
        &matrix,
        json!({"objective": spec, "objective_label": label, "dt": cfg.dt, "bins": cfg.bin_seconds, "epochs": epochs}),
    );
    write_artifacts(&dir, &metrics, &trace.events_jsonl(), &m)?;
    println!("{} {}: mean wait {:.1} min", scenario.name(), label, metrics.mean_wait_min);
    println!("artifacts in {}", dir.display());
    Ok(())
}

fn generator_config(a: &EvolveArgs, log_dir: &Path) -> Result<GeneratorConfig> {
    let g = &a.generator;
    let mode = if g.adaptive {
        GeneratorMode::AdaptiveMock
    } else if g.mock {
        GeneratorMode::Mock
    } else if g.endpoint.is_some() {
        GeneratorMode::Remote
    } else {
        bail!("evolve needs --mock, --adaptive or --endpoint URL");
    };
    let mut cfg = GeneratorConfig {
        mode,
        model_name: g.model.clone(),
        temperature: g.temperature,
        max_retries: g.retries,
        timeout_ms: g.timeout_ms,
        backoff_ms: g.backoff_ms,
        mock_invalid_rate: g.invalid_rate,
        mock_seed: g.mock_seed.unwrap_or(a.scenario.seed),
        ..GeneratorConfig::default()
    };
    if let Some(url) = &g.endpoint {
        cfg.endpoint_url = url.clone();
        cfg.log_dir = Some(log_dir.join("generator"));
    }
    Ok(cfg.with_env_key())
}

pub fn evolve(a: &EvolveArgs) -> Result<()> {
    let (scenario, matrix) = load_scenario(&a.scenario)?;
    let dispatch = dispatch_config(&a.dispatch)?;
    let mode = if a.open_loop {
        LoopMode::OpenLoop
    } else {
        LoopMode::ClosedLoop
    };
    let params = HsParams {
        hmcr: a.hmcr,
        par: a.par,
        pop_size: a.pop,
        iterations: a.iters,
        steps: 1,
        seed: a.scenario.seed,
    };
    params.validate()?;
    let dir = run_dir(a.dispatch.out.as_deref(), "evolve", &scenario.name())?;
    let gen_cfg = generator_config(a, &dir)?;
    let generator = build_generator(&gen_cfg)?;
    let cfg = EvolveConfig {
        dispatch,
        rounds: if a.workers == 1 {
            Execution::Sequential
        } else {
            Execution::Parallel
        },
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(a.workers)
        .build()
        .context("cannot start worker threads")?;
    let report = pool.install(|| run_evolution(&scenario, &matrix, &params, generator.as_ref(), mode, &cfg))?;

    let method = match mode {
        LoopMode::OpenLoop => "evolve_open_loop",
        LoopMode::ClosedLoop => "evolve_closed_loop",
    };
    let mut metrics = report
        .best_metrics
        .clone()
        .ok_or_else(|| InvariantViolation("best individual has no metrics".into()))?
        .with_labels(scenario.name(), method);
    metrics.error_rate = report.error_rate;
    let trace: String = report
        .best_events
        .iter()
        .map(|e| serde_json::to_string(e).map(|s| s + "\n"))
        .collect::<Result<_, _>>()?;
    let m = manifest(
        "evolve",
        &scenario,
        &matrix,
        json!({
            "mode": mode,
            "params": report.params,
            "generator": format!("{:?}", gen_cfg.mode),
            "model": gen_cfg.model_name,
            "temperature": gen_cfg.temperature,
            "mock_seed": gen_cfg.mock_seed,
            "invalid_rate": gen_cfg.mock_invalid_rate,
            "dt": cfg.dispatch.dt,
            "bins": cfg.dispatch.bin_seconds,
            "workers": a.workers,
        }),
    );
    write_artifacts(&dir, &metrics, &trace, &m)?;
    write(&dir.join("report.json"), &serde_json::to_string_pretty(&report)?)?;
    write(
        &dir.join("best_objective.json"),
        &serde_json::to_string_pretty(&report.best_objectives)?,
    )?;
    for r in &report.iterations {
        println!(
            "iteration {:>2}: best {:.1} min, mean {:.1} min, errors {:.0}%",
            r.iteration,
            r.best,
            r.mean,
            100.0 * r.error_rate
        );
    }
    println!(
        "{} {}: best mean wait {:.1} min after {} queries ({} failed)",
        scenario.name(),
        method,
        report.best_fitness,
        report.total_queries,
        report.total_errors
    );
    println!("artifacts in {}", dir.display());
    Ok(())
}

pub fn oracle(a: &OracleArgs) -> Result<()> {
    let (scenario, matrix) = load_scenario(&a.scenario)?;
    let snap = Simulation::new(&scenario, &matrix).snapshot();
    let limits = OracleLimits {
        max_passengers: a.max_passengers,
        max_vehicles: a.max_taxis,
    };
    let best = solve_holistic(&snap, &matrix, limits, Execution::Parallel)?;
    let spec = builtin("default_composite")?;
    let plan = plan_epoch(&spec, &snap, &matrix, &DispatchConfig::default())?;
    let hier = plan.total_wait();
    if best.total_wait > hier {
        return Err(InvariantViolation(format!("oracle {} exceeds hierarchical {hier}", best.total_wait)).into());
    }
    let ratio = match (hier, best.total_wait) {
        (0, 0) => 1.0,
        (_, 0) => f64::INFINITY,
        (h, o) => h as f64 / o as f64,
    };
    println!("oracle total wait: {} s", best.total_wait);
    println!("hierarchical total wait: {hier} s");
    println!("ratio: {ratio:.4}");
    if let Some(out) = &a.out {
        let dir = run_dir(Some(out), "oracle", &scenario.name())?;
        let body = json!({
            "scenario": scenario.name(),
            "seed": scenario.spec.seed,
            "oracle_total_wait_s": best.total_wait,
            "hierarchical_total_wait_s": hier,
            "ratio": if ratio.is_finite() { json!(ratio) } else { Value::Null },
            "oracle_assignment": best.assignment,
            "oracle_routes": best.routes,
            "hierarchical_routes": plan.routes,
        });
        write(&dir.join("oracle.json"), &serde_json::to_string_pretty(&body)?)?;
        write(
            &dir.join("manifest.json"),
            &serde_json::to_string_pretty(&manifest("oracle", &scenario, &matrix, json!(limits_json(limits))))?,
        )?;
    }
    Ok(())
}

fn limits_json(l: OracleLimits) -> Value {
    json!({"max_passengers": l.max_passengers, "max_taxis": l.max_vehicles})
}

/// Methods × scenarios of mean wait in minutes. Several files for the same
/// cell (seeds of one shape) are averaged.
pub fn report_table(inputs: &[(String, Metrics)]) -> Result<String> {
    let first = &inputs.first().context("no metrics given")?;
    for (path, m) in inputs {
        if m.bin_seconds != first.1.bin_seconds {
            bail!(
                "mixed bin sizes: {} s in {} but {} s in {}",
                first.1.bin_seconds,
                first.0,
                m.bin_seconds,
                path
            );
        }
    }
    let mut methods: Vec<&str> = Vec::new();
    let mut scenarios: Vec<&str> = Vec::new();
    let mut cells: BTreeMap<(&str, &str), (f64, usize)> = BTreeMap::new();
    for (_, m) in inputs {
        if !methods.contains(&m.method.as_str()) {
            methods.push(&m.method);
        }
        if !scenarios.contains(&m.scenario.as_str()) {
            scenarios.push(&m.scenario);
        }
        let c = cells.entry((&m.method, &m.scenario)).or_default();
        c.0 += m.mean_wait_min;
        c.1 += 1;
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(std::iter::once("method").chain(scenarios.iter().copied()))?;
    for method in &methods {
        let mut row = vec![method.to_string()];
        for s in &scenarios {
            row.push(match cells.get(&(*method, *s)) {
                Some((sum, n)) => format!("{:.3}", sum / *n as f64),
                None => String::new(),
            });
        }
        w.write_record(&row)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

fn heatmap_table(inputs: &[(String, Metrics)]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["scenario", "method", "zone", "bin", "mean_delay_min", "count"])?;
    for (_, m) in inputs {
        for c in &m.heatmap {
            w.write_record([
                m.scenario.clone(),
                m.method.clone(),
                c.zone.to_string(),
                c.bin.to_string(),
                c.mean_delay_min.to_string(),
                c.count.to_string(),
            ])?;
        }
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

pub fn report(a: &ReportArgs) -> Result<()> {
    let inputs = a
        .metrics
        .iter()
        .map(|p| {
            let m: Metrics = serde_json::from_str(&read_file(p)?)
                .with_context(|| format!("{} is not a metrics file", p.display()))?;
            Ok((p.display().to_string(), m))
        })
        .collect::<Result<Vec<_>>>()?;
    let table = report_table(&inputs)?;
    match &a.out {
        Some(p) => write(p, &table)?,
        None => print!("{table}"),
    }
    if let Some(p) = &a.heatmaps {
        write(p, &heatmap_table(&inputs)?)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use dispatch_core::metrics::PassengerDelay;
    use dispatch_core::network::ZoneId;

    fn metrics(scenario: &str, method: &str, delay: u64, bin: u64) -> (String, Metrics) {
        let per = vec![PassengerDelay {
            id: 0,
            delay_s: delay,
            origin: ZoneId(0),
            bin: 0,
        }];
        (
            format!("{method}-{scenario}.json"),
            Metrics::from_delays(per, bin).with_labels(scenario, method),
        )
    }

    #[test]
    fn table_shape() {
        let mut inputs = Vec::new();
        for method in ["distance", "default_composite"] {
            for (k, s) in ["P1_C1_T1", "P2_C1_T1", "P3_C1_T1"].iter().enumerate() {
                inputs.push(metrics(s, method, 60 * k as u64, 600));
            }
        }
        let t = report_table(&inputs).unwrap();
        let lines: Vec<_> = t.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], "method,P1_C1_T1,P2_C1_T1,P3_C1_T1");
        assert_eq!(lines[1], "distance,0.000,1.000,2.000");
        let single = report_table(&inputs[..1]).unwrap();
        assert_eq!(single, "method,P1_C1_T1\ndistance,0.000\n");
    }

    #[test]
    fn seeds_of_one_cell_average() {
        let t = report_table(&[metrics("S", "m", 60, 600), metrics("S", "m", 180, 600)]).unwrap();
        assert_eq!(t, "method,S\nm,2.000\n");
    }

    #[test]
    fn mixed_bins_refused() {
        let err = report_table(&[metrics("S", "m", 60, 600), metrics("S", "n", 60, 300)]).unwrap_err();
        assert!(err.to_string().contains("mixed bin sizes"));
    }
}
