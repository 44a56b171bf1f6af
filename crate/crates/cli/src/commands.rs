use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use kcate::config::{expand_candidates, Config, Method, Purpose};
use kcate::dgp::{Scenario, ScenarioSpec};
use kcate::harness::crossfit::{cross_fit_average, CrossFitPipeline};
use kcate::harness::experiment::{run_experiment, MethodSettings};
use kcate::harness::ingest::ingest_csv;
use kcate::harness::rates::{rate_sweep, theoretical_exponent};
use kcate::harness::report::{markdown_table, write_report_csv, write_selections_csv};
use kcate::CatePredictor;

pub struct Overrides {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
}

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "invalid input: {m}"),
            CliError::Runtime(m) => write!(f, "{m}"),
        }
    }
}

impl From<kcate::Error> for CliError {
    fn from(e: kcate::Error) -> Self {
        if e.is_validation() {
            CliError::Validation(e.to_string())
        } else {
            CliError::Runtime(e.to_string())
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn load(path: &Path, purpose: Purpose, opts: &Overrides) -> Result<Config> {
    let mut cfg = Config::load(path)?;
    if let Some(seed) = opts.seed {
        cfg.execution.seed = seed;
    }
    if let Some(t) = opts.threads {
        cfg.execution.threads = Some(t);
    }
    cfg.validate(purpose)?;
    if let Some(t) = cfg.execution.threads {
        if t == 0 {
            return Err(CliError::Validation("--threads must be at least 1".into()));
        }
        // Only the first call can size the global pool; later calls are no-ops.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    Ok(cfg)
}

fn create(out: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(out.join(name))?))
}

pub fn simulate(config: &Path, out: &Path, opts: &Overrides) -> Result<()> {
    let cfg = load(config, Purpose::Simulate, opts)?;
    fs::create_dir_all(out)?;
    let sc = cfg.scenario.as_ref().expect("validated");
    let methods = cfg.simulation_methods();
    let settings = MethodSettings::from_config(&cfg);
    let ex = &cfg.execution;
    let mut reports = Vec::new();
    for n in sc.n.to_vec() {
        let spec = ScenarioSpec::new(sc.kind, n, sc.sigma, ex.seed);
        reports.extend(run_experiment(&spec, &methods, &settings, ex.reps, ex.seed, ex.test_points)?);
    }
    write_report_csv(create(out, "report.csv")?, &reports, ex.record_runtime)?;
    if methods.contains(&Method::Ours) {
        write_selections_csv(create(out, "selections.csv")?, &reports)?;
    }
    let md = markdown_table(&reports, ex.record_runtime);
    fs::write(out.join("summary.md"), &md)?;
    print!("{md}");
    Ok(())
}

pub fn fit(config: &Path, data: &Path, out: &Path, opts: &Overrides) -> Result<()> {
    let cfg = load(config, Purpose::Fit, opts)?;
    let cols = cfg.data.as_ref().expect("validated");
    if !data.is_file() {
        return Err(CliError::Validation(format!("cannot read data file {}", data.display())));
    }
    let ingested = ingest_csv(data, &cols.covariates, &cols.treatment, &cols.outcome, None)?;
    let n = ingested.data.len();
    let grid = cfg.selection.lambda_grid.values(n);
    let candidates = expand_candidates(&cfg.candidates, &grid);
    let truncation = cfg
        .selection
        .truncation
        .unwrap_or_else(|| 2.0 * ingested.data.y.amax());
    let pipeline = CrossFitPipeline {
        candidates,
        spec_f: cfg.kernels.nuisance.clone(),
        nuisance_lambda: cfg.selection.nuisance_lambda,
        proxy_lambda: cfg.selection.proxy_lambda,
        truncation,
    };
    let model = cross_fit_average(&ingested.data, &pipeline, cfg.execution.seed)?;
    let pred = ingested.rescaling.unscale_cate(&model.predict_cate(&ingested.data.x)?);

    fs::create_dir_all(out)?;
    let mut sel = create(out, "selected.csv")?;
    writeln!(sel, "rotation,status,label,lambda,kernel,truncation,proxy_risk")?;
    let mut risks = create(out, "proxy_risks.csv")?;
    writeln!(risks, "rotation,candidate,label,proxy_risk")?;
    for rot in &model.rotations {
        match &rot.outcome {
            Ok((res, _)) => {
                let c = res.chosen_candidate();
                writeln!(
                    sel,
                    "{},ok,{},{:?},\"{}\",{:?},{:?}",
                    rot.index,
                    c.label,
                    c.lambda,
                    c.stage2_spec.describe(),
                    res.truncation_level,
                    res.proxy_risks[res.chosen]
                )?;
                for (j, (cand, risk)) in res.candidates.iter().zip(&res.proxy_risks).enumerate() {
                    writeln!(risks, "{},{j},{},{risk:?}", rot.index, cand.label)?;
                }
            }
            Err(e) => writeln!(sel, "{},failed,,,\"{}\",,", rot.index, e.replace('"', "'"))?,
        }
    }
    sel.flush()?;
    risks.flush()?;
    let mut p = create(out, "predictions.csv")?;
    writeln!(p, "row,cate")?;
    for (i, v) in pred.iter().enumerate() {
        writeln!(p, "{i},{v:?}")?;
    }
    p.flush()?;
    println!(
        "fit {n} rows; {} of 3 rotations succeeded; predictions written to {}",
        model.successful().count(),
        out.join("predictions.csv").display()
    );
    Ok(())
}

fn default_exponent(kind: Scenario) -> Option<f64> {
    match kind {
        // h*(x) = x^2 is smooth; second-order Sobolev stage 2 in one dimension.
        Scenario::Univariate => Some(theoretical_exponent(2.0, 1.0)),
        _ => None,
    }
}

pub fn rates(config: &Path, out: &Path, opts: &Overrides) -> Result<()> {
    let cfg = load(config, Purpose::Rates, opts)?;
    let sc = cfg.scenario.as_ref().expect("validated");
    let rates = cfg.rates.as_ref().expect("validated");
    let settings = MethodSettings::from_config(&cfg);
    let ex = &cfg.execution;
    let base = ScenarioSpec::new(sc.kind, rates.n_list[0], sc.sigma, ex.seed);
    let sweep = rate_sweep(&base, rates.method, &settings, &rates.n_list, ex.reps, ex.seed, ex.test_points)?;

    fs::create_dir_all(out)?;
    let mut w = create(out, "rates.csv")?;
    writeln!(w, "n,mean_mse,se_mean,failed")?;
    for p in &sweep.points {
        writeln!(w, "{},{:?},{:?},{}", p.n, p.mean_mse, p.se_mean, p.failed)?;
    }
    w.flush()?;

    let theory = rates.theoretical_exponent.or_else(|| default_exponent(sc.kind));
    let verdict = rates.slope_band.map(|[lo, hi]| (lo, hi, (lo..=hi).contains(&sweep.slope)));
    let mut s = String::new();
    s.push_str(&format!("method: {}\n", rates.method.name()));
    s.push_str(&format!("fitted_slope: {:.4}\n", sweep.slope));
    match theory {
        Some(t) => s.push_str(&format!("theoretical_exponent: {t:.4}\n")),
        None => s.push_str("theoretical_exponent: unknown\n"),
    }
    if let Some((lo, hi, ok)) = verdict {
        s.push_str(&format!("band: [{lo}, {hi}]\nstatus: {}\n", if ok { "PASS" } else { "FAIL" }));
    }
    fs::write(out.join("rates.txt"), &s)?;
    print!("{s}");
    Ok(())
}
