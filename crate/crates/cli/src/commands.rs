use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use hsps::coincidence::{io as tagio, HeraldAnalysis, TagStream};
use hsps::curve::Curve;
use hsps::fit::{self, Dataset, FitProblem, FitResult, Observable};
use hsps::response::{g2bar_c_zero_sweep, CoincidenceConfig, Response, SweepGrid};
use hsps::simulate;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const REPORT_SCHEMA: u32 = 1;

const NS: f64 = 1e-9;

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::data(e.to_string()))?;
    s.push('\n');
    write_file(path, s.as_bytes())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::io(path, e))
}

fn meta(cfg: &RunConfig, extra: &[(&'static str, String)]) -> Vec<(&'static str, String)> {
    let mut m = vec![("config_sha256", cfg.hash()), ("generator", format!("hsps {VERSION}"))];
    m.extend_from_slice(extra);
    m
}

/// Rescales the x axis (e.g. s → ns) before writing.
fn write_curve(path: &Path, curve: &Curve, x_scale: f64, x_name: &str, y_name: &str, meta: &[(&str, String)]) -> Result<(), CliError> {
    let mut c = curve.clone();
    for p in &mut c.points {
        p.x /= x_scale;
    }
    write_file(path, c.to_csv(x_name, y_name, meta).as_bytes())
}

fn power_tag(p: f64) -> String {
    format!("{p}mW")
}

fn file_name(path: &Path) -> String {
    path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Theory curves: `ḡ_si(τ)` and `ḡ_c(τ)` per pump power, `ḡ_c(0)` against
/// pump power, and `ḡ_c(0)` against window width for the configured and an
/// ideal (jitter-free) detector.
pub fn predict(cfg: &RunConfig, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    create_dir(out)?;
    let detector = cfg.detector()?;
    let coincidence = cfg.coincidence()?;
    let mode = cfg.predict.mode;
    let n = (cfg.predict.delay_span_ns / cfg.predict.delay_step_ns).round() as i64;
    let taus: Vec<f64> = (-n..=n).map(|k| k as f64 * cfg.predict.delay_step_ns * NS).collect();
    let mut written = Vec::new();
    for (k, &p) in cfg.source.pump_mw.iter().enumerate() {
        let r = Response::new(cfg.source_at(k)?, detector, coincidence).with_mode(mode);
        let m = meta(cfg, &[("pump_mw", p.to_string()), ("mode", format!("{mode:?}").to_lowercase())]);
        for (name, curve) in [("g2si", r.g2bar_si_curve(&taus)), ("g2c", r.g2bar_c_curve(&taus))] {
            let path = out.join(format!("predict_{name}_{}.csv", power_tag(p)));
            write_curve(&path, &curve, NS, "delay_ns", name, &m)?;
            written.push(path);
        }
    }
    let rate = cfg.source.rate_per_mw_mhz * 1e6;
    let bandwidth = cfg.source.bandwidth_mhz * 1e6;
    let pump = SweepGrid::Pump {
        rate_per_mw: rate,
        bandwidth,
        powers_mw: cfg.predict.power_sweep_mw.clone(),
        coincidence,
    };
    let curve = g2bar_c_zero_sweep(&pump, &detector, mode).map_err(CliError::from_config)?;
    let path = out.join("predict_g2c0_vs_power.csv");
    write_curve(&path, &curve, 1.0, "pump_mw", "g2c0", &meta(cfg, &[]))?;
    written.push(path);

    let halfwidths: Vec<f64> = cfg.predict.window_sweep_ns.iter().map(|w| 0.5 * w * NS).collect();
    let source = cfg.source_at(0)?;
    let window = SweepGrid::Window { source, halfwidths };
    for (suffix, d) in [("", detector), ("_ideal", detector.with_jitter(0.0))] {
        let mut curve = g2bar_c_zero_sweep(&window, &d, mode).map_err(CliError::from_config)?;
        for p in &mut curve.points {
            p.x *= 2.0;
        }
        let path = out.join(format!("predict_g2c0_vs_window{suffix}.csv"));
        let m = meta(
            cfg,
            &[("pump_mw", cfg.source.pump_mw[0].to_string()), ("jitter_ns", (d.jitter_halfwidth / NS).to_string())],
        );
        write_curve(&path, &curve, NS, "window_ns", "g2c0", &m)?;
        written.push(path);
    }
    Ok(written)
}

/// Sidecar written next to every simulated tag file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagSidecar {
    pub config_sha256: String,
    pub pump_power_mw: f64,
    pub seed: u64,
    pub tags: u64,
    pub duration_s: f64,
    pub generator: String,
}

fn simulated_stream(cfg: &RunConfig, k: usize) -> Result<TagStream, CliError> {
    let sim = cfg.sim_config(k)?;
    let stream = simulate::generate(&sim).map_err(CliError::from_data)?;
    if cfg.simulate.background_mhz > 0.0 {
        simulate::inject_background(&stream, cfg.simulate.background_mhz * 1e6, background_seed(cfg, k))
            .map_err(CliError::from_data)
    } else {
        Ok(stream)
    }
}

fn background_seed(cfg: &RunConfig, k: usize) -> u64 {
    cfg.seed_at(k) ^ 0x9e37_79b9_7f4a_7c15
}

/// Writes one binary tag file (plus JSON sidecar) per pump power.
pub fn simulate(cfg: &RunConfig, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    create_dir(out)?;
    let mut written = Vec::new();
    for (k, &p) in cfg.source.pump_mw.iter().enumerate() {
        let stream = simulated_stream(cfg, k)?;
        let path = out.join(format!("tags_{}.htag", power_tag(p)));
        let file = File::create(&path).map_err(|e| CliError::io(&path, e))?;
        let mut w = BufWriter::new(file);
        tagio::write_binary(&stream, &mut w).map_err(CliError::from_data)?;
        w.flush().map_err(|e| CliError::io(&path, e))?;
        let side = TagSidecar {
            config_sha256: cfg.hash(),
            pump_power_mw: p,
            seed: cfg.seed_at(k),
            tags: stream.len() as u64,
            duration_s: stream.header.duration(),
            generator: format!("hsps {VERSION}"),
        };
        write_json(&sidecar_path(&path), &side)?;
        log::info!("wrote {} tags to {}", stream.len(), path.display());
        written.push(path);
    }
    Ok(written)
}

fn sidecar_path(tags: &Path) -> PathBuf {
    tags.with_extension("json")
}

/// Summary of one counted stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CountSummary {
    pub schema_version: u32,
    pub config_sha256: String,
    pub source: String,
    pub pump_power_mw: f64,
    pub duration_s: f64,
    pub singles: [u64; 3],
    pub rates_hz: [f64; 3],
    pub triples: u64,
    /// Window half-width realized on the tick grid (ns).
    pub halfwidth_ns: f64,
    pub g2c0: f64,
    pub g2c0_sigma: f64,
    pub g2c0_predicted: f64,
    pub peak_to_wall: f64,
    pub histograms: Vec<String>,
    pub datasets: Vec<Dataset>,
}

fn summarize(cfg: &RunConfig, a: &HeraldAnalysis, power: f64, source: String, stem: &str, out: &Path) -> Result<CountSummary, CliError> {
    let tau = cfg.halfwidth();
    let stride = cfg.count.stride_ticks;
    let m = meta(cfg, &[("source", source.clone()), ("pump_mw", power.to_string())]);
    let mut histograms = Vec::new();
    let curves = [
        ("g2si", a.g2si_curve(tau, stride).map_err(CliError::from_data)?),
        ("g2c", a.g2c_curve(tau, stride).map_err(CliError::from_data)?),
    ];
    for (name, curve) in &curves {
        let path = out.join(format!("{stem}_{name}.csv"));
        write_curve(&path, curve, NS, "delay_ns", name, &m)?;
        histograms.push(file_name(&path));
    }
    let mut datasets = Vec::new();
    let kinds: &[Observable] = if cfg.fit.include_g2c {
        &[Observable::G2si, Observable::G2c]
    } else {
        &[Observable::G2si]
    };
    for &kind in kinds {
        let d = Dataset::from_analysis(a, power, tau, kind, cfg.count.max_delay_ns * NS, stride).map_err(CliError::from_data)?;
        datasets.push(d);
    }
    let halfwidth = a.effective_halfwidth(tau).map_err(CliError::from_data)?;
    let (g2c0, g2c0_sigma) = a.g2c_zero(tau).map_err(CliError::from_data)?;
    let k_source = hsps::model::SpdcParams::from_pump(cfg.source.rate_per_mw_mhz * 1e6, power, cfg.source.bandwidth_mhz * 1e6)
        .map_err(CliError::from_config)?;
    let predicted = Response::new(
        k_source,
        cfg.detector()?,
        CoincidenceConfig::new(halfwidth).map_err(CliError::from_config)?,
    )
    .g2bar_c(0.0);
    Ok(CountSummary {
        schema_version: REPORT_SCHEMA,
        config_sha256: cfg.hash(),
        source,
        pump_power_mw: power,
        duration_s: a.duration,
        singles: a.singles,
        rates_hz: a.rates(),
        triples: a.triple_total(),
        halfwidth_ns: halfwidth / NS,
        g2c0,
        g2c0_sigma,
        g2c0_predicted: predicted,
        peak_to_wall: a.peak_to_wall(tau, cfg.count.far_ns * NS).map_err(CliError::from_data)?,
        histograms,
        datasets,
    })
}

fn read_stream(path: &Path) -> Result<TagStream, CliError> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let reader = BufReader::new(file);
    let text = path.extension().is_some_and(|e| e == "txt" || e == "csv");
    if text {
        tagio::read_text(reader)
    } else {
        tagio::read_binary(reader)
    }
    .map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

/// Counts tag files; the pump power comes from each file's sidecar or, for
/// a single file without one, from `power`.
pub fn count(cfg: &RunConfig, inputs: &[PathBuf], power: Option<f64>, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    create_dir(out)?;
    let mut written = Vec::new();
    for input in inputs {
        let side = sidecar_path(input);
        let p = if side.exists() {
            read_json::<TagSidecar>(&side)?.pump_power_mw
        } else {
            power.ok_or_else(|| CliError::config(format!("{}: no sidecar; pass --power", input.display())))?
        };
        if !(p > 0.0) {
            return Err(CliError::config("pump power must be positive"));
        }
        let stream = read_stream(input)?;
        let a = HeraldAnalysis::from_stream(&stream, cfg.range()).map_err(CliError::from_data)?;
        let stem = input.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "tags".into());
        let summary = summarize(cfg, &a, p, file_name(input), &stem, out)?;
        let path = out.join(format!("{stem}_count.json"));
        write_json(&path, &summary)?;
        written.push(path);
    }
    Ok(written)
}

/// Fitted parameters plus the problem they came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOutput {
    pub config_sha256: String,
    pub generator: String,
    pub result: FitResult,
}

pub fn build_problem(cfg: &RunConfig, summaries: &[CountSummary]) -> FitProblem {
    let datasets = summaries
        .iter()
        .flat_map(|s| s.datasets.iter())
        .filter(|d| cfg.fit.include_g2c || d.kind == Observable::G2si)
        .cloned()
        .collect();
    let mut problem = FitProblem::new(datasets, cfg.fit_parameters());
    problem.refine_starts = cfg.fit.refine_starts;
    problem
}

/// `problem.json`: the fit problem with the config it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub config_sha256: String,
    pub generator: String,
    pub problem: FitProblem,
}

fn write_problem(cfg: &RunConfig, out: &Path, problem: &FitProblem) -> Result<(), CliError> {
    let file = ProblemFile {
        config_sha256: cfg.hash(),
        generator: format!("hsps {VERSION}"),
        problem: problem.clone(),
    };
    write_json(&out.join("problem.json"), &file)
}

/// Fits the datasets of one or more count summaries, or a single fit
/// problem (bare or as written to `problem.json`). Writes `fit.json` and
/// the problem actually solved.
pub fn fit_files(cfg: &RunConfig, inputs: &[PathBuf], out: &Path) -> Result<FitOutput, CliError> {
    create_dir(out)?;
    let problem = if let [single] = inputs {
        let text = fs::read_to_string(single).map_err(|e| CliError::io(single, e))?;
        if let Ok(f) = serde_json::from_str::<ProblemFile>(&text) {
            f.problem
        } else if let Ok(p) = serde_json::from_str::<FitProblem>(&text) {
            p
        } else {
            build_problem(cfg, &[read_json(single)?])
        }
    } else {
        let summaries = inputs.iter().map(|p| read_json(p)).collect::<Result<Vec<CountSummary>, _>>()?;
        build_problem(cfg, &summaries)
    };
    write_problem(cfg, out, &problem)?;
    let output = run_fit(cfg, &problem)?;
    write_json(&out.join("fit.json"), &output)?;
    Ok(output)
}

fn run_fit(cfg: &RunConfig, problem: &FitProblem) -> Result<FitOutput, CliError> {
    let result = fit::fit(problem).map_err(CliError::from_fit)?;
    Ok(FitOutput {
        config_sha256: cfg.hash(),
        generator: format!("hsps {VERSION}"),
        result,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub config_sha256: String,
    pub generator: String,
    pub seeds: Vec<u64>,
    pub runs: Vec<CountSummary>,
    pub fit: FitResult,
}

/// Full chain: simulate and count every pump power, fit, infer.
pub fn report(cfg: &RunConfig, out: &Path) -> Result<Report, CliError> {
    create_dir(out)?;
    let mut runs = Vec::new();
    for (k, &p) in cfg.source.pump_mw.iter().enumerate() {
        let analysis = if cfg.simulate.background_mhz > 0.0 {
            let stream = simulated_stream(cfg, k).map_err(|e| e.in_stage("simulate"))?;
            HeraldAnalysis::from_stream(&stream, cfg.range()).map_err(|e| CliError::from_data(e).in_stage("count"))?
        } else {
            let sim = cfg.sim_config(k).map_err(|e| e.in_stage("simulate"))?;
            simulate::analyze_heralded(&sim, cfg.range()).map_err(|e| CliError::from_data(e).in_stage("simulate"))?
        };
        let stem = format!("run_{}", power_tag(p));
        let summary = summarize(cfg, &analysis, p, format!("simulated seed {}", cfg.seed_at(k)), &stem, out)
            .map_err(|e| e.in_stage("count"))?;
        log::info!("{p} mW: g2c(0) = {} ± {}", summary.g2c0, summary.g2c0_sigma);
        runs.push(summary);
    }
    let problem = build_problem(cfg, &runs);
    write_problem(cfg, out, &problem)?;
    let fitted = run_fit(cfg, &problem).map_err(|e| e.in_stage("fit"))?;
    let report = Report {
        schema_version: REPORT_SCHEMA,
        config_sha256: cfg.hash(),
        generator: format!("hsps {VERSION}"),
        seeds: (0..cfg.source.pump_mw.len()).map(|k| cfg.seed_at(k)).collect(),
        runs,
        fit: fitted.result,
    };
    write_json(&out.join("report.json"), &report)?;
    Ok(report)
}
