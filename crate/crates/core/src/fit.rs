//! Weighted least-squares inference of source and detector parameters from
//! windowed coherence curves.
//!
//! The forward model is the delta-mode [`Response`]. Parameters are searched
//! in internal coordinates (natural log for the rate and bandwidth, ns for
//! the jitter): a coarse grid of starts is scored in parallel, the best few
//! are refined with Nelder-Mead, and the curvature at the optimum gives both
//! the covariance and the identifiability verdict.

use argmin::core::observers::{Observe, ObserverMode};
use argmin::core::{CostFunction, Executor, IterState, State, KV};
use argmin::solver::neldermead::NelderMead;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::coincidence::HeraldAnalysis;
use crate::curve::CurvePoint;
use crate::error::{invalid, Error, Result};
use crate::model::{self, SpdcParams};
use crate::par;
use crate::response::{CoincidenceConfig, DetectorModel, Response};

pub const SCHEMA_VERSION: u32 = 1;

/// Grid points per free dimension for the start search.
pub const GRID_POINTS: usize = 8;
/// Largest accepted condition number of the curvature matrix.
pub const MAX_CONDITION: f64 = 1e8;
/// Relative parameter tolerance of the local refinement.
pub const PARAM_TOL: f64 = 1e-4;
/// Bins with fewer counts than this are merged with their neighbours.
pub const MIN_COUNTS: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observable {
    /// `ḡ_si(τ)`, both signal arms combined.
    G2si,
    /// `ḡ_c(τ)`, one signal window pinned at zero delay.
    G2c,
}

/// One measured value; merged bins list every delay they cover and are
/// compared with the mean prediction over those delays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataPoint {
    pub taus: Vec<f64>,
    pub value: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dataset {
    pub pump_power_mw: f64,
    /// Coincidence window half-width (s).
    pub coin_halfwidth: f64,
    pub kind: Observable,
    pub points: Vec<DataPoint>,
}

impl Dataset {
    /// Builds a dataset from counted data. Only delays with `|τ| ≤ max_delay`
    /// are kept and sparse bins are merged (see [`merge_sparse`]).
    pub fn from_analysis(
        analysis: &HeraldAnalysis,
        pump_power_mw: f64,
        tau_coin: f64,
        kind: Observable,
        max_delay: f64,
        stride: u64,
    ) -> Result<Self> {
        let curve = match kind {
            Observable::G2si => analysis.g2si_curve(tau_coin, stride)?,
            Observable::G2c => analysis.g2c_curve(tau_coin, stride)?,
        };
        let kept: Vec<CurvePoint> = curve
            .points
            .into_iter()
            .filter(|p| p.x.abs() <= max_delay * (1.0 + 1e-12) && p.value.is_finite())
            .collect();
        Ok(Self {
            pump_power_mw,
            coin_halfwidth: analysis.effective_halfwidth(tau_coin)?,
            kind,
            points: merge_sparse(&kept),
        })
    }

    fn validate(&self, index: usize) -> Result<()> {
        let bad = |what: String| invalid("datasets", format!("dataset {index}: {what}"));
        if !(self.pump_power_mw.is_finite() && self.pump_power_mw > 0.0) {
            return Err(bad("pump_power_mw must be positive".into()));
        }
        if CoincidenceConfig::new(self.coin_halfwidth).is_err() {
            return Err(bad("coin_halfwidth must be positive".into()));
        }
        if self.points.is_empty() {
            return Err(bad("no points".into()));
        }
        for (k, p) in self.points.iter().enumerate() {
            if !(p.sigma.is_finite() && p.sigma > 0.0) {
                return Err(bad(format!("point {k}: sigma must be finite and > 0")));
            }
            if !p.value.is_finite() || p.taus.is_empty() || p.taus.iter().any(|t| !t.is_finite()) {
                return Err(bad(format!("point {k}: needs a finite value and at least one delay")));
            }
        }
        Ok(())
    }
}

/// Merges consecutive points until each group holds at least [`MIN_COUNTS`]
/// counts, reading the count of a point as `(value/σ)²`. A short trailing
/// group joins the one before it. Points without `σ` are dropped.
pub fn merge_sparse(points: &[CurvePoint]) -> Vec<DataPoint> {
    let mut groups: Vec<Vec<(f64, f64, f64)>> = Vec::new();
    let mut open: Vec<(f64, f64, f64)> = Vec::new();
    let mut counts = 0.0;
    for p in points {
        let Some(s) = p.sigma else { continue };
        let n = if s > 0.0 { (p.value / s).powi(2) } else { 0.0 };
        open.push((p.x, p.value, s));
        counts += n;
        if counts >= MIN_COUNTS {
            groups.push(std::mem::take(&mut open));
            counts = 0.0;
        }
    }
    if !open.is_empty() {
        match groups.last_mut() {
            Some(last) => last.extend(open),
            None if counts > 0.0 => groups.push(open),
            None => {}
        }
    }
    groups
        .into_iter()
        .map(|g| {
            let k = g.len() as f64;
            DataPoint {
                taus: g.iter().map(|p| p.0).collect(),
                value: g.iter().map(|p| p.1).sum::<f64>() / k,
                sigma: g.iter().map(|p| p.2 * p.2).sum::<f64>().sqrt() / k,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Param {
    RatePerMw,
    Bandwidth,
    TauD,
}

impl Param {
    pub const ALL: [Param; 3] = [Param::RatePerMw, Param::Bandwidth, Param::TauD];

    pub fn name(self) -> &'static str {
        match self {
            Param::RatePerMw => "rate_per_mw",
            Param::Bandwidth => "bandwidth",
            Param::TauD => "tau_d",
        }
    }

    fn is_log(self) -> bool {
        self != Param::TauD
    }

    fn to_internal(self, v: f64) -> f64 {
        if self.is_log() {
            v.ln()
        } else {
            v * 1e9
        }
    }

    fn from_internal(self, x: f64) -> f64 {
        if self.is_log() {
            x.exp()
        } else {
            x * 1e-9
        }
    }
}

/// Initial value, bounds and free/fixed flag of one parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamSpec {
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
    pub free: bool,
}

impl ParamSpec {
    pub fn free(value: f64, lower: f64, upper: f64) -> Self {
        Self { value, lower, upper, free: true }
    }

    pub fn fixed(value: f64) -> Self {
        Self {
            value,
            lower: value,
            upper: value,
            free: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Parameters {
    pub rate_per_mw: ParamSpec,
    pub bandwidth: ParamSpec,
    pub tau_d: ParamSpec,
}

impl Parameters {
    /// Default bounds; the bandwidth is frozen at `bandwidth`, as when it
    /// comes from a spectrometer.
    pub fn with_bandwidth(bandwidth: f64) -> Self {
        Self {
            rate_per_mw: ParamSpec::free(1e6, 1e3, 1e9),
            bandwidth: ParamSpec::fixed(bandwidth),
            tau_d: ParamSpec::free(0.3e-9, 0.0, 5e-9),
        }
    }

    pub fn get(&self, p: Param) -> &ParamSpec {
        match p {
            Param::RatePerMw => &self.rate_per_mw,
            Param::Bandwidth => &self.bandwidth,
            Param::TauD => &self.tau_d,
        }
    }

    fn validate(&self) -> Result<()> {
        for p in Param::ALL {
            let s = self.get(p);
            let ok = if s.free {
                s.lower.is_finite() && s.upper.is_finite() && s.lower < s.upper && s.value >= s.lower && s.value <= s.upper
            } else {
                s.value.is_finite()
            };
            if !ok {
                return Err(invalid(p.name(), "needs finite bounds with lower < upper and the value inside"));
            }
            let floor = if p.is_log() { s.lower.min(s.value) > 0.0 } else { s.lower.min(s.value) >= 0.0 };
            if !floor {
                return Err(invalid(p.name(), if p.is_log() { "must be positive" } else { "must be >= 0" }));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitProblem {
    pub schema_version: u32,
    pub datasets: Vec<Dataset>,
    pub params: Parameters,
    /// Number of best grid starts handed to the local refinement.
    #[serde(default = "default_refine")]
    pub refine_starts: usize,
}

fn default_refine() -> usize {
    4
}

impl FitProblem {
    pub fn new(datasets: Vec<Dataset>, params: Parameters) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            datasets,
            params,
            refine_starts: default_refine(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(invalid(
                "schema_version",
                format!("expected {SCHEMA_VERSION}, got {}", self.schema_version),
            ));
        }
        if self.refine_starts == 0 {
            return Err(invalid("refine_starts", "must be >= 1"));
        }
        self.params.validate()?;
        for (i, d) in self.datasets.iter().enumerate() {
            d.validate(i)?;
        }
        let mut settings: Vec<(f64, f64)> = self.datasets.iter().map(|d| (d.pump_power_mw, d.coin_halfwidth)).collect();
        settings.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        settings.dedup();
        if settings.len() < 2 {
            return Err(Error::NotIdentifiable {
                direction: "needs datasets at two or more distinct pump powers or windows".into(),
                condition: f64::INFINITY,
            });
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let p: Self = serde_json::from_str(s)?;
        p.validate()?;
        Ok(p)
    }

    fn free(&self) -> Vec<Param> {
        Param::ALL.into_iter().filter(|&p| self.params.get(p).free).collect()
    }

    fn n_points(&self) -> usize {
        self.datasets.iter().map(|d| d.points.len()).sum()
    }
}

/// Fitted value with its 1σ uncertainty (zero when fixed).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub sigma: f64,
    pub free: bool,
}

/// Trigger-time coherence inferred at one pump power.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Inferred {
    pub pump_power_mw: f64,
    pub pair_rate: f64,
    pub g2c0: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub schema_version: u32,
    pub rate_per_mw: Estimate,
    pub bandwidth: Estimate,
    pub tau_d: Estimate,
    pub chi2: f64,
    pub dof: usize,
    pub chi2_dof: f64,
    /// Names of the free parameters, in covariance order.
    pub free: Vec<Param>,
    /// Covariance of the free parameters in physical units.
    pub covariance: Vec<Vec<f64>>,
    pub condition: f64,
    /// Grid start the winning refinement began from.
    pub start_index: usize,
    pub evaluations: usize,
    pub inferred: Vec<Inferred>,
}

impl FitResult {
    pub fn get(&self, p: Param) -> &Estimate {
        match p {
            Param::RatePerMw => &self.rate_per_mw,
            Param::Bandwidth => &self.bandwidth,
            Param::TauD => &self.tau_d,
        }
    }

    fn cov(&self, a: Param, b: Param) -> f64 {
        let ia = self.free.iter().position(|&p| p == a);
        let ib = self.free.iter().position(|&p| p == b);
        match (ia, ib) {
            (Some(i), Some(j)) => self.covariance[i][j],
            _ => 0.0,
        }
    }

    /// True trigger-time coherence at `pump_power_mw`.
    pub fn infer_at(&self, pump_power_mw: f64) -> Inferred {
        let p = pump_power_mw;
        let rate = self.rate_per_mw.value * p;
        let cov = [
            [p * p * self.cov(Param::RatePerMw, Param::RatePerMw), p * self.cov(Param::RatePerMw, Param::Bandwidth)],
            [p * self.cov(Param::Bandwidth, Param::RatePerMw), self.cov(Param::Bandwidth, Param::Bandwidth)],
        ];
        let (g2c0, sigma) = infer_true_g2c0(rate, self.bandwidth.value, cov);
        Inferred {
            pump_power_mw: p,
            pair_rate: rate,
            g2c0,
            sigma,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let r: Self = serde_json::from_str(s)?;
        if r.schema_version != SCHEMA_VERSION {
            return Err(invalid("schema_version", format!("expected {SCHEMA_VERSION}, got {}", r.schema_version)));
        }
        Ok(r)
    }
}

/// Trigger-time conditional coherence at pair rate `pair_rate` with
/// first-order uncertainty from the `(pair_rate, bandwidth)` covariance.
/// A zero rate gives exactly zero.
pub fn infer_true_g2c0(pair_rate: f64, bandwidth: f64, cov: [[f64; 2]; 2]) -> (f64, f64) {
    if pair_rate <= 0.0 {
        return (0.0, 0.0);
    }
    let g = 1.0 + bandwidth / pair_rate;
    let value = model::g2_cond_at_zero_from_gsi(g);
    let dg = 4.0 / (g * g * g) - 4.0 / (g * g);
    let grad = [dg * -bandwidth / (pair_rate * pair_rate), dg / pair_rate];
    let mut var = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            var += grad[i] * cov[i][j] * grad[j];
        }
    }
    (value, var.max(0.0).sqrt())
}

/// Predicted `ḡ` for one point; `None` outside the model's validity.
fn predict(values: [f64; 3], d: &Dataset, p: &DataPoint) -> Option<f64> {
    let [rate, bw, tau_d] = values;
    let source = SpdcParams::from_pump(rate, d.pump_power_mw, bw).ok()?;
    let detector = DetectorModel::ideal(1e-12).with_jitter(tau_d);
    detector.validate().ok()?;
    let r = Response::new(source, detector, CoincidenceConfig::new(d.coin_halfwidth).ok()?);
    let sum: f64 = p
        .taus
        .iter()
        .map(|&t| match d.kind {
            Observable::G2si => r.g2bar_si(t),
            Observable::G2c => r.g2bar_c(t),
        })
        .sum();
    Some(sum / p.taus.len() as f64)
}

struct Objective<'a> {
    problem: &'a FitProblem,
    free: Vec<Param>,
}

impl Objective<'_> {
    fn values(&self, x: &[f64]) -> Option<[f64; 3]> {
        let mut v = Param::ALL.map(|p| self.problem.params.get(p).value);
        for (&p, &xi) in self.free.iter().zip(x) {
            let s = self.problem.params.get(p);
            let value = p.from_internal(xi);
            let slack = 1e-12 * (s.upper - s.lower);
            if !(value >= s.lower - slack && value <= s.upper + slack) {
                return None;
            }
            v[p as usize] = value.clamp(s.lower, s.upper);
        }
        Some(v)
    }

    fn residuals(&self, x: &[f64]) -> Option<Vec<f64>> {
        let v = self.values(x)?;
        let mut out = Vec::with_capacity(self.problem.n_points());
        for d in &self.problem.datasets {
            for p in &d.points {
                let m = predict(v, d, p)?;
                if !m.is_finite() {
                    return None;
                }
                out.push((m - p.value) / p.sigma);
            }
        }
        Some(out)
    }

    fn chi2(&self, x: &[f64]) -> f64 {
        self.residuals(x)
            .map(|r| r.iter().map(|e| e * e).sum())
            .unwrap_or(f64::INFINITY)
    }

    fn bounds(&self, p: Param) -> (f64, f64) {
        let s = self.problem.params.get(p);
        let lo = if p.is_log() { s.lower.ln() } else { p.to_internal(s.lower) };
        (lo, p.to_internal(s.upper))
    }

    /// Cell-centred start grid, dimension 0 varying slowest.
    fn start(&self, index: usize) -> Vec<f64> {
        let mut rem = index;
        let mut x = vec![0.0; self.free.len()];
        for (k, &p) in self.free.iter().enumerate().rev() {
            let (lo, hi) = self.bounds(p);
            let i = rem % GRID_POINTS;
            rem /= GRID_POINTS;
            x[k] = lo + (hi - lo) * (i as f64 + 0.5) / GRID_POINTS as f64;
        }
        x
    }
}

impl CostFunction for Objective<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, x: &Vec<f64>) -> std::result::Result<f64, argmin::core::Error> {
        Ok(self.chi2(x))
    }
}

/// Fails the run if the best χ² ever increases between iterations.
struct Monotone(f64);

impl Observe<IterState<Vec<f64>, (), (), (), (), f64>> for Monotone {
    fn observe_iter(&mut self, state: &IterState<Vec<f64>, (), (), (), (), f64>, _kv: &KV) -> std::result::Result<(), argmin::core::Error> {
        let c = state.get_best_cost();
        if c > self.0 {
            return Err(argmin::core::Error::msg(format!("chi2 increased from {} to {c}", self.0)));
        }
        self.0 = c;
        Ok(())
    }
}

struct Refined {
    x: Vec<f64>,
    chi2: f64,
    evaluations: usize,
}

fn refine(obj: &Objective, x0: Vec<f64>) -> Result<Refined> {
    let n = x0.len();
    let mut x = x0;
    let mut chi2 = obj.chi2(&x);
    let mut evaluations = 1;
    let mut step: Vec<f64> = obj
        .free
        .iter()
        .map(|&p| {
            let (lo, hi) = obj.bounds(p);
            0.5 * (hi - lo) / GRID_POINTS as f64
        })
        .collect();
    for _ in 0..40 {
        let mut simplex = vec![x.clone()];
        for k in 0..n {
            let mut v = x.clone();
            let (lo, hi) = obj.bounds(obj.free[k]);
            v[k] = if v[k] + step[k] <= hi { v[k] + step[k] } else { (v[k] - step[k]).max(lo) };
            simplex.push(v);
        }
        let solver = NelderMead::new(simplex)
            .with_sd_tolerance(1e-12 * chi2.max(1e-12))
            .map_err(|e| invalid("refinement", e.to_string()))?;
        let res = Executor::new(
            Objective {
                problem: obj.problem,
                free: obj.free.clone(),
            },
            solver,
        )
        .configure(|s| s.max_iters(2000))
        .add_observer(Monotone(chi2), ObserverMode::Always)
        .run()
        .map_err(|e| invalid("refinement", e.to_string()))?;
        let state = res.state();
        evaluations += state.get_func_counts().values().sum::<u64>() as usize;
        let best = state.get_best_param().cloned().unwrap_or_else(|| x.clone());
        let best_chi2 = state.get_best_cost();
        if best_chi2 > chi2 {
            return Err(invalid("refinement", "chi2 increased across a restart"));
        }
        let moved: Vec<f64> = best.iter().zip(&x).map(|(a, b)| (a - b).abs()).collect();
        let settled = moved
            .iter()
            .zip(&obj.free)
            .zip(&best)
            .all(|((&m, &p), &b)| m <= PARAM_TOL * if p.is_log() { 1.0 } else { b.abs().max(1e-3) });
        x = best;
        chi2 = best_chi2;
        if settled {
            break;
        }
        for (s, m) in step.iter_mut().zip(&moved) {
            *s = (m * 2.0).max(*s * 0.1).min(*s);
        }
    }
    Ok(Refined { x, chi2, evaluations })
}

/// Finite-difference Jacobian of the weighted residuals in internal coordinates.
fn jacobian(obj: &Objective, x: &[f64]) -> Result<DMatrix<f64>> {
    let base = obj.residuals(x).ok_or_else(|| invalid("fit", "optimum outside the model domain"))?;
    let mut j = DMatrix::zeros(base.len(), x.len());
    for k in 0..x.len() {
        let h = 1e-5 * x[k].abs().max(1.0);
        let (lo, hi) = obj.bounds(obj.free[k]);
        let shifted = |dx: f64| {
            let mut y = x.to_vec();
            y[k] += dx;
            obj.residuals(&y)
        };
        let (col, denom) = match (x[k] - h >= lo, x[k] + h <= hi) {
            (true, true) => match (shifted(h), shifted(-h)) {
                (Some(a), Some(b)) => (a.iter().zip(&b).map(|(a, b)| a - b).collect::<Vec<_>>(), 2.0 * h),
                _ => return Err(invalid("fit", "curvature step left the model domain")),
            },
            (false, _) => {
                let a = shifted(h).ok_or_else(|| invalid("fit", "curvature step left the model domain"))?;
                (a.iter().zip(&base).map(|(a, b)| a - b).collect(), h)
            }
            (true, false) => {
                let b = shifted(-h).ok_or_else(|| invalid("fit", "curvature step left the model domain"))?;
                (base.iter().zip(&b).map(|(a, b)| a - b).collect(), h)
            }
        };
        for (r, v) in col.into_iter().enumerate() {
            j[(r, k)] = v / denom;
        }
    }
    Ok(j)
}

/// Fits the free parameters of `problem`.
pub fn fit(problem: &FitProblem) -> Result<FitResult> {
    problem.validate()?;
    let free = problem.free();
    if free.is_empty() {
        return Err(invalid("params", "no free parameters"));
    }
    let n_points = problem.n_points();
    if n_points < free.len() {
        return Err(Error::NotIdentifiable {
            direction: format!("{} points for {} free parameters", n_points, free.len()),
            condition: f64::INFINITY,
        });
    }
    let obj = Objective {
        problem,
        free: free.clone(),
    };

    let n_starts = GRID_POINTS.pow(free.len() as u32);
    let scores = par::map_range(n_starts, |i| obj.chi2(&obj.start(i)));
    let mut order: Vec<usize> = (0..n_starts).filter(|&i| scores[i].is_finite()).collect();
    if order.is_empty() {
        return Err(invalid("params", "no start inside the low-gain domain"));
    }
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    order.truncate(problem.refine_starts);
    let refined = par::map_collect(&order, |&i| refine(&obj, obj.start(i)));
    let mut best: Option<(usize, Refined)> = None;
    let mut evaluations = n_starts;
    for (&i, r) in order.iter().zip(refined) {
        let r = r?;
        evaluations += r.evaluations;
        let better = match &best {
            None => true,
            Some((bi, b)) => r.chi2 < b.chi2 || (r.chi2 == b.chi2 && i < *bi),
        };
        if better {
            best = Some((i, r));
        }
    }
    let (start_index, best) = best.expect("at least one refined start");
    log::debug!("fit: start {start_index} refined to chi2 = {}", best.chi2);

    let j = jacobian(&obj, &best.x)?;
    let jtj = j.transpose() * &j;
    let svd = jtj.clone().svd(false, true);
    let (smax, smin) = (svd.singular_values.max(), svd.singular_values.min());
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(condition <= MAX_CONDITION) {
        let k = svd.singular_values.imin();
        let v_t = svd.v_t.as_ref().expect("requested V^T");
        let row = v_t.row(k);
        let dominant = (0..free.len())
            .max_by(|&a, &b| row[a].abs().total_cmp(&row[b].abs()))
            .unwrap_or(0);
        return Err(Error::NotIdentifiable {
            direction: free[dominant].name().into(),
            condition,
        });
    }
    let inv = jtj
        .try_inverse()
        .ok_or_else(|| Error::NotIdentifiable {
            direction: "curvature matrix is singular".into(),
            condition,
        })?;
    let values = obj.values(&best.x).expect("optimum inside bounds");
    // d(physical)/d(internal) per free parameter
    let scale = DVector::from_iterator(
        free.len(),
        free.iter().map(|&p| if p.is_log() { values[p as usize] } else { 1e-9 }),
    );
    let covariance: Vec<Vec<f64>> = (0..free.len())
        .map(|a| (0..free.len()).map(|b| inv[(a, b)] * scale[a] * scale[b]).collect())
        .collect();
    let estimate = |p: Param| {
        let idx = free.iter().position(|&q| q == p);
        Estimate {
            value: values[p as usize],
            sigma: idx.map(|i| covariance[i][i].max(0.0).sqrt()).unwrap_or(0.0),
            free: idx.is_some(),
        }
    };
    let dof = n_points - free.len();
    let mut result = FitResult {
        schema_version: SCHEMA_VERSION,
        rate_per_mw: estimate(Param::RatePerMw),
        bandwidth: estimate(Param::Bandwidth),
        tau_d: estimate(Param::TauD),
        chi2: best.chi2,
        dof,
        chi2_dof: if dof > 0 { best.chi2 / dof as f64 } else { f64::NAN },
        free,
        covariance,
        condition,
        start_index,
        evaluations,
        inferred: Vec::new(),
    };
    let mut powers: Vec<f64> = problem.datasets.iter().map(|d| d.pump_power_mw).collect();
    powers.sort_by(f64::total_cmp);
    powers.dedup();
    result.inferred = powers.into_iter().map(|p| result.infer_at(p)).collect();
    Ok(result)
}

#[cfg(test)]
mod tests;
