//! Run configuration, command drivers and result files.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use crate::asymptotics::{
    c1_oracle, fit_expansion, geometric_grid, normalize, w2_coefficient_oracle, FitOptions,
};
use crate::duhamel::{
    spectral_w2, trace_w1, trace_w2, w2_route_gap_bound, DuhamelSeries, SimplexSettings,
};
use crate::error::{Error, Result};
use crate::galerkin::GalerkinSystem;
use crate::gaussian::{prodbound_ratio, quadexp_identity_residual, simplex_points, QuadraticForm};
use crate::potential::{
    make_power_law, make_random, CoefficientRecord, FourierPotential, PotentialRecord,
};
use crate::quadrature::VRule;
use crate::regularity::{
    detect_from_spectrum, detect_from_trace, Detected, DetectorSettings, RegularityVerdict,
};
use crate::sample::{Method, TraceSample};
use crate::torus::{
    heat_kernel, heat_kernel_with, kernel_product_defect, kernel_product_scale,
    periodic_convolution, theta_trace, Frequency, Representation, TorusSpec,
};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_INDETERMINATE: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;

fn config_error(field: &str, reason: impl Into<String>) -> Error {
    Error::Config {
        field: field.into(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TorusConfig {
    pub dim: usize,
    pub period: f64,
}

/// Where the potential comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialSource {
    Constant {
        value: f64,
    },
    Inline {
        coefficients: Vec<CoefficientRecord>,
    },
    PowerLaw {
        exponent: f64,
        band: u32,
    },
    Random {
        band: u32,
        mean: f64,
        amplitude: f64,
    },
    File {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodChoice {
    Galerkin,
    Duhamel,
    SpectralW2,
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub t_min: f64,
    pub t_max: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GalerkinConfig {
    pub cutoff: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DuhamelConfig {
    /// Number of Duhamel terms `K` in the partial sum.
    pub order: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub m: usize,
    /// A `trace.csv` from an earlier run; when absent the traces are recomputed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Memoize free theta sums across methods.
    pub cache: bool,
}

/// Everything a run needs; serialized as TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub methods: Vec<MethodChoice>,
    pub torus: TorusConfig,
    pub potential: PotentialSource,
    pub grid: GridConfig,
    pub galerkin: GalerkinConfig,
    pub duhamel: DuhamelConfig,
    pub fit: FitConfig,
    pub detector: DetectorSettings,
    pub output: OutputConfig,
}

impl Default for TorusConfig {
    fn default() -> Self {
        Self {
            dim: 1,
            period: 2.0 * std::f64::consts::PI,
        }
    }
}

impl Default for PotentialSource {
    fn default() -> Self {
        PotentialSource::Random {
            band: 3,
            mean: 0.3,
            amplitude: 0.5,
        }
    }
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            t_min: 1e-3,
            t_max: 1.0,
            count: 40,
        }
    }
}

impl Default for GalerkinConfig {
    fn default() -> Self {
        Self { cutoff: 256 }
    }
}

impl Default for DuhamelConfig {
    fn default() -> Self {
        Self { order: 3 }
    }
}

impl Default for FitConfig {
    fn default() -> Self {
        Self { m: 2, input: None }
    }
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            cache: true,
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            methods: vec![MethodChoice::All],
            torus: TorusConfig::default(),
            potential: PotentialSource::default(),
            grid: GridConfig::default(),
            galerkin: GalerkinConfig::default(),
            duhamel: DuhamelConfig::default(),
            fit: FitConfig::default(),
            detector: DetectorSettings::default(),
            output: OutputConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| config_error("config", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_error("config", format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// SHA-256 of the canonical TOML form.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        TorusSpec::new(self.torus.dim, self.torus.period)
            .map_err(|e| config_error("torus", e.to_string()))?;
        let g = &self.grid;
        if !(g.t_min > 0.0 && g.t_min.is_finite()) {
            return Err(config_error(
                "grid.t_min",
                format!("must be positive, got {}", g.t_min),
            ));
        }
        if !(g.t_max <= 1.0) {
            return Err(config_error(
                "grid.t_max",
                format!("must be at most 1, got {}", g.t_max),
            ));
        }
        if !(g.t_min < g.t_max) {
            return Err(config_error(
                "grid.t_min",
                format!("must be below grid.t_max ({} >= {})", g.t_min, g.t_max),
            ));
        }
        let need = 2 * (self.fit.m + 2);
        if g.count < need {
            return Err(config_error(
                "grid.count",
                format!(
                    "fit order m = {} needs at least {need} points, got {}",
                    self.fit.m, g.count
                ),
            ));
        }
        if self.methods.is_empty() {
            return Err(config_error("methods", "select at least one method"));
        }
        if !(1..=5).contains(&self.duhamel.order) {
            return Err(config_error(
                "duhamel.order",
                format!("must be in 1..=5, got {}", self.duhamel.order),
            ));
        }
        let d = &self.detector;
        if !(d.failed_threshold < d.held_threshold) {
            return Err(config_error(
                "detector.failed_threshold",
                "must be below detector.held_threshold",
            ));
        }
        if !(d.window_ratio > 1.0) {
            return Err(config_error("detector.window_ratio", "must exceed 1"));
        }
        match &self.potential {
            PotentialSource::PowerLaw { exponent, band } => {
                if !(*exponent > self.torus.dim as f64) {
                    return Err(config_error(
                        "potential.exponent",
                        format!("must exceed the dimension, got {exponent}"),
                    ));
                }
                if *band == 0 {
                    return Err(config_error("potential.band", "must be at least 1"));
                }
            }
            PotentialSource::Random {
                band, amplitude, ..
            } => {
                if *band == 0 {
                    return Err(config_error("potential.band", "must be at least 1"));
                }
                if !(*amplitude >= 0.0) {
                    return Err(config_error("potential.amplitude", "must be non-negative"));
                }
            }
            _ => {}
        }
        Ok(())
    }

    pub fn spec(&self) -> Result<TorusSpec> {
        TorusSpec::new(self.torus.dim, self.torus.period)
    }

    pub fn t_grid(&self) -> Vec<f64> {
        geometric_grid(self.grid.t_min, self.grid.t_max, self.grid.count)
    }

    pub fn wants(&self, m: MethodChoice) -> bool {
        self.methods
            .iter()
            .any(|&c| c == m || c == MethodChoice::All)
    }

    /// Builds the potential; the second value is the nominal Sobolev order when known.
    pub fn potential(&self) -> Result<(FourierPotential, Option<u32>)> {
        let spec = self.spec()?;
        let field = |e: Error| config_error("potential", e.to_string());
        Ok(match &self.potential {
            PotentialSource::Constant { value } => (FourierPotential::constant(spec, *value), None),
            PotentialSource::Inline { coefficients } => {
                let coeffs: Vec<(Frequency, Complex64)> = coefficients
                    .iter()
                    .map(|c| (Frequency::from_slice(&c.k), Complex64::new(c.re, c.im)))
                    .collect();
                (
                    FourierPotential::make_band_limited(spec, &coeffs).map_err(field)?,
                    None,
                )
            }
            PotentialSource::PowerLaw { exponent, band } => {
                let p = make_power_law(spec, *exponent, *band, self.seed).map_err(field)?;
                (p.potential, Some(p.nominal_order))
            }
            PotentialSource::Random {
                band,
                mean,
                amplitude,
            } => (
                make_random(spec, *band, *mean, *amplitude, self.seed).map_err(field)?,
                None,
            ),
            PotentialSource::File { path } => {
                let text = std::fs::read_to_string(path).map_err(|e| {
                    config_error("potential.path", format!("{}: {e}", path.display()))
                })?;
                let rec: PotentialRecord = serde_json::from_str(&text)
                    .map_err(|e| config_error("potential.path", e.to_string()))?;
                if rec.dimension != spec.dim() || rec.period != spec.period() {
                    return Err(config_error(
                        "potential.path",
                        "file torus differs from the configured torus",
                    ));
                }
                (FourierPotential::from_record(&rec).map_err(field)?, None)
            }
        })
    }
}

/// Memoized `Θ_n(t)` keyed by the exact bits of `(t, L, n)`.
#[derive(Debug, Default)]
pub struct ThetaCache {
    enabled: bool,
    map: Mutex<HashMap<(usize, u64, u64), f64>>,
    hits: Mutex<usize>,
}

impl ThetaCache {
    pub fn new(enabled: bool) -> Self {
        Self {
            enabled,
            ..Self::default()
        }
    }

    pub fn theta(&self, spec: &TorusSpec, t: f64) -> Result<f64> {
        if !self.enabled {
            return theta_trace(spec, t, 1e-16);
        }
        let key = (spec.dim(), spec.period().to_bits(), t.to_bits());
        if let Some(&v) = self.map.lock().expect("cache lock").get(&key) {
            *self.hits.lock().expect("cache lock") += 1;
            return Ok(v);
        }
        let v = theta_trace(spec, t, 1e-16)?;
        self.map.lock().expect("cache lock").insert(key, v);
        Ok(v)
    }

    pub fn hits(&self) -> usize {
        *self.hits.lock().expect("cache lock")
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub command: String,
    pub config_hash: String,
    pub version: String,
    pub seed: u64,
    pub elapsed_seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PotentialSummary {
    pub band: u32,
    pub mean: f64,
    pub abs_coefficient_sum: f64,
    pub nominal_order: Option<u32>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CoefficientRow {
    pub method: String,
    pub k: usize,
    pub coefficient: f64,
    pub standard_error: f64,
    pub error_bar: f64,
    pub oracle: Option<f64>,
    /// `c1` (`−∫V`), `w2` (complete) or `w2_partial` (the `W₂` share only).
    pub oracle_kind: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FitReport {
    pub method: String,
    pub m: usize,
    pub condition: f64,
    pub remainder_sup: f64,
    pub coefficients: Vec<CoefficientRow>,
    pub remainder: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Output of one command.
#[derive(Debug, Clone, Serialize)]
pub struct ResultBundle {
    pub provenance: Provenance,
    pub potential: Option<PotentialSummary>,
    pub samples: Vec<TraceSample>,
    pub fits: Vec<FitReport>,
    pub verdicts: Vec<RegularityVerdict>,
    pub checks: Vec<CheckResult>,
    pub flags: Vec<String>,
    pub exit_code: i32,
    #[serde(skip)]
    pub tables: BTreeMap<String, String>,
}

impl ResultBundle {
    fn new(command: &str, config: &RunConfig) -> Self {
        Self {
            provenance: Provenance {
                command: command.into(),
                config_hash: config.hash(),
                version: env!("CARGO_PKG_VERSION").into(),
                seed: config.seed,
                elapsed_seconds: 0.0,
            },
            potential: None,
            samples: Vec::new(),
            fits: Vec::new(),
            verdicts: Vec::new(),
            checks: Vec::new(),
            flags: Vec::new(),
            exit_code: EXIT_PASS,
            tables: BTreeMap::new(),
        }
    }

    /// Writes every CSV table and `report.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, body) in &self.tables {
            std::fs::write(dir.join(name), body)?;
        }
        let json = serde_json::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))?;
        std::fs::write(dir.join("report.json"), json + "\n")?;
        Ok(())
    }
}

fn summary(v: &FourierPotential, nominal: Option<u32>) -> PotentialSummary {
    PotentialSummary {
        band: v.band(),
        mean: v.mean(),
        abs_coefficient_sum: v.abs_coefficient_sum(),
        nominal_order: nominal,
    }
}

fn sci(x: f64) -> String {
    format!("{x:.17e}")
}

fn opt_sci(x: Option<f64>) -> String {
    x.map(sci).unwrap_or_default()
}

/// Evaluates every selected method on the grid. Rows are ordered by method, then `t`.
fn evaluate_traces(config: &RunConfig, v: &FourierPotential) -> Result<Vec<TraceSample>> {
    let ts = config.t_grid();
    let mut out = Vec::new();
    if config.wants(MethodChoice::Galerkin) {
        let sys = GalerkinSystem::build(v, config.galerkin.cutoff.max(v.band()))?;
        for &t in &ts {
            out.push(sys.relative_trace_checked(t, 1e-8)?);
        }
    }
    if config.wants(MethodChoice::Duhamel) {
        let series = DuhamelSeries::new(
            v,
            config.duhamel.order,
            VRule::default(),
            SimplexSettings::default(),
        )?;
        let sums: Vec<Result<TraceSample>> =
            ts.par_iter().map(|&t| series.partial_sum(t)).collect();
        for s in sums {
            out.push(s?);
        }
    }
    if config.wants(MethodChoice::SpectralW2) {
        for &t in &ts {
            out.push(spectral_w2(v, t, &VRule::default())?);
        }
    }
    Ok(out)
}

fn trace_table(samples: &[TraceSample], spec: &TorusSpec, cache: &ThetaCache) -> Result<String> {
    let mut csv = String::from("t,method,value,tail_bound,quadrature_error,theta\n");
    for s in samples {
        let theta = cache.theta(spec, s.t)?;
        writeln!(
            csv,
            "{},{},{},{},{},{}",
            sci(s.t),
            s.method,
            sci(s.value),
            sci(s.tail_bound),
            sci(s.quadrature_error),
            sci(theta)
        )
        .expect("write to string");
    }
    Ok(csv)
}

fn collect_flags(samples: &[TraceSample]) -> Vec<String> {
    samples
        .iter()
        .flat_map(|s| {
            s.flags
                .iter()
                .map(move |f| format!("{} t={:.6e}: {f}", s.method, s.t))
        })
        .collect()
}

/// Evaluates the selected methods and writes `trace.csv`.
pub fn cmd_trace(config: &RunConfig) -> Result<ResultBundle> {
    cmd_trace_with_cache(config, &ThetaCache::new(config.output.cache))
}

pub fn cmd_trace_with_cache(config: &RunConfig, cache: &ThetaCache) -> Result<ResultBundle> {
    config.validate()?;
    let start = Instant::now();
    let (v, nominal) = config.potential()?;
    let mut bundle = ResultBundle::new("trace", config);
    bundle.potential = Some(summary(&v, nominal));
    let samples = evaluate_traces(config, &v)?;
    bundle
        .tables
        .insert("trace.csv".into(), trace_table(&samples, v.spec(), cache)?);
    bundle.flags = collect_flags(&samples);
    bundle.samples = samples;
    bundle.provenance.elapsed_seconds = start.elapsed().as_secs_f64();
    Ok(bundle)
}

/// Reads `t,method,value,tail_bound,quadrature_error,...` rows.
pub fn read_trace_csv(path: &Path) -> Result<Vec<TraceSample>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse(format!("{}: empty file", path.display())))?;
    if !header.starts_with("t,method,value,tail_bound,quadrature_error") {
        return Err(Error::Parse(format!(
            "{}: unexpected header `{header}`",
            path.display()
        )));
    }
    let num = |s: &str, line: usize| -> Result<f64> {
        s.trim()
            .parse()
            .map_err(|_| Error::Parse(format!("{}:{line}: bad number `{s}`", path.display())))
    };
    let mut out = Vec::new();
    for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() < 5 {
            return Err(Error::Parse(format!(
                "{}:{}: expected at least 5 fields",
                path.display(),
                i + 2
            )));
        }
        let mut s = TraceSample::new(num(f[0], i + 2)?, num(f[2], i + 2)?, f[1].parse()?);
        s.tail_bound = num(f[3], i + 2)?;
        s.quadrature_error = num(f[4], i + 2)?;
        out.push(s);
    }
    Ok(out)
}

fn oracle_for(
    method: Method,
    v: &FourierPotential,
    k: usize,
) -> (Option<f64>, Option<&'static str>) {
    let w2 = |j: usize| w2_coefficient_oracle(v, j as u32);
    match (method, k) {
        (Method::SpectralW2 | Method::DuhamelTerm(2), 1) => (Some(0.0), Some("w2")),
        (Method::SpectralW2 | Method::DuhamelTerm(2), k) => (Some(w2(k - 2)), Some("w2")),
        (_, 1) => (Some(c1_oracle(v)), Some("c1")),
        (_, 2) => (Some(w2(0)), Some("w2")),
        (_, k) => (Some(w2(k - 2)), Some("w2_partial")),
    }
}

/// Fits `c_1 … c_{m+1}` per method and compares them with the closed forms.
pub fn cmd_fit(config: &RunConfig) -> Result<ResultBundle> {
    config.validate()?;
    let start = Instant::now();
    let (v, nominal) = config.potential()?;
    let spec = *v.spec();
    let mut bundle = ResultBundle::new("fit", config);
    bundle.potential = Some(summary(&v, nominal));
    let samples = match &config.fit.input {
        Some(path) => read_trace_csv(path)?,
        None => evaluate_traces(config, &v)?,
    };
    let mut by_method: BTreeMap<Method, Vec<(f64, f64)>> = BTreeMap::new();
    for s in &samples {
        by_method
            .entry(s.method)
            .or_default()
            .push(normalize(&spec, s));
    }
    let mut coef_csv =
        String::from("method,k,coefficient,standard_error,error_bar,oracle,oracle_kind\n");
    let mut rem_csv = String::from("method,t,remainder\n");
    for (method, data) in &by_method {
        let fit = fit_expansion(data, config.fit.m, FitOptions::default())?;
        let mut rows = Vec::new();
        for k in 1..=config.fit.m + 1 {
            let (oracle, kind) = oracle_for(*method, &v, k);
            let row = CoefficientRow {
                method: method.to_string(),
                k,
                coefficient: fit.coefficient(k),
                standard_error: fit.standard_error(k),
                error_bar: fit.error_bar(k),
                oracle,
                oracle_kind: kind.map(String::from),
            };
            writeln!(
                coef_csv,
                "{},{},{},{},{},{},{}",
                row.method,
                k,
                sci(row.coefficient),
                sci(row.standard_error),
                sci(row.error_bar),
                opt_sci(row.oracle),
                row.oracle_kind.as_deref().unwrap_or("")
            )
            .expect("write to string");
            rows.push(row);
        }
        for &(t, r) in &fit.remainder_samples {
            writeln!(rem_csv, "{method},{},{}", sci(t), sci(r)).expect("write to string");
        }
        bundle.fits.push(FitReport {
            method: method.to_string(),
            m: fit.m,
            condition: fit.diagnostics.condition,
            remainder_sup: fit.remainder_sup,
            coefficients: rows,
            remainder: fit.remainder_samples.clone(),
        });
    }
    bundle.tables.insert("fit.csv".into(), coef_csv);
    bundle.tables.insert("remainder.csv".into(), rem_csv);
    bundle.flags = collect_flags(&samples);
    bundle.samples = samples;
    bundle.provenance.elapsed_seconds = start.elapsed().as_secs_f64();
    Ok(bundle)
}

/// Normalized `W₁ + W₂` samples, the data fed to the trace detector.
pub fn detection_data(v: &FourierPotential, ts: &[f64]) -> Result<Vec<(f64, f64)>> {
    let spec = *v.spec();
    ts.par_iter()
        .map(|&t| {
            let mut s = trace_w2(v, t, &VRule::default(), 1e-13)?;
            s.value += trace_w1(v, t, 1e-16)?.value;
            Ok(normalize(&spec, &s))
        })
        .collect()
}

/// Runs both regularity detectors on the configured potential.
///
/// Exit code 2 when either verdict is indeterminate, 1 when the verdicts
/// disagree or exceed the nominal order.
pub fn cmd_detect(config: &RunConfig) -> Result<ResultBundle> {
    config.validate()?;
    let start = Instant::now();
    let (v, nominal) = config.potential()?;
    let mut bundle = ResultBundle::new("detect", config);
    bundle.potential = Some(summary(&v, nominal));
    let ts = config.t_grid();
    let data = detection_data(&v, &ts)?;
    let mut trace = detect_from_trace(&data, &config.detector)?;
    let mut spectrum = detect_from_spectrum(&v, &ts, &config.detector, &VRule::default())?;
    trace.nominal_m = nominal;
    spectrum.nominal_m = nominal;

    let mut csv = String::from("source,m,status,growth_exponent,window_start,level\n");
    for verdict in [&trace, &spectrum] {
        for ev in &verdict.evidence {
            let status = format!("{:?}", ev.status).to_lowercase();
            let e = ev.growth_exponent.map(sci).unwrap_or_else(|| "none".into());
            if ev.levels.is_empty() {
                writeln!(csv, "{},{},{status},{e},,", verdict.source, ev.m)
                    .expect("write to string");
            }
            for (tau, level) in ev.window_starts.iter().zip(&ev.levels) {
                writeln!(
                    csv,
                    "{},{},{status},{e},{},{}",
                    verdict.source,
                    ev.m,
                    sci(*tau),
                    sci(*level)
                )
                .expect("write to string");
            }
        }
    }
    let mut fatou = String::from("m,t,f_m,limit\n");
    for series in &spectrum.fatou_values {
        for &(t, f) in &series.samples {
            writeln!(
                fatou,
                "{},{},{},{}",
                series.m,
                sci(t),
                sci(f),
                sci(series.limit)
            )
            .expect("write to string");
        }
    }
    bundle.tables.insert("detect.csv".into(), csv);
    bundle.tables.insert("fatou.csv".into(), fatou);

    let indeterminate = [&trace, &spectrum]
        .iter()
        .any(|v| v.m_detected == Detected::Indeterminate);
    let exceeds = nominal.is_some_and(|m| trace.exceeds(m) || spectrum.exceeds(m));
    bundle.exit_code = if indeterminate {
        EXIT_INDETERMINATE
    } else if trace.m_detected != spectrum.m_detected || exceeds {
        EXIT_CHECK_FAILED
    } else {
        EXIT_PASS
    };
    bundle.verdicts = vec![trace, spectrum];
    bundle.provenance.elapsed_seconds = start.elapsed().as_secs_f64();
    Ok(bundle)
}

fn check(name: &str, value: f64, tolerance: f64) -> CheckResult {
    CheckResult {
        name: name.into(),
        value,
        tolerance,
        passed: value <= tolerance,
    }
}

/// Runs the invariant suite; exit code 1 when any check fails.
///
/// Each check reports its worst case: a relative or scaled defect compared with
/// its tolerance.
pub fn cmd_verify(config: &RunConfig) -> Result<ResultBundle> {
    config.validate()?;
    let start = Instant::now();
    let (v, nominal) = config.potential()?;
    let spec = *v.spec();
    let mut bundle = ResultBundle::new("verify", config);
    bundle.potential = Some(summary(&v, nominal));
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let l = spec.period();
    let n = spec.dim();

    // Fourier and image sums of the free kernel
    let mut poisson: f64 = 0.0;
    for _ in 0..100 {
        let t = 10f64.powf(rng.gen_range(-3.0..0.0));
        let d: Vec<f64> = (0..n).map(|_| rng.gen_range(-l / 2.0..l / 2.0)).collect();
        let f = heat_kernel_with(&spec, t, &d, 1e-16, Representation::Fourier)?.value;
        let i = heat_kernel_with(&spec, t, &d, 1e-16, Representation::Image)?.value;
        let scale = heat_kernel(&spec, t, &vec![0.0; n], 1e-16)?;
        poisson = poisson.max((f - i).abs() / scale);
    }
    bundle
        .checks
        .push(check("poisson_summation", poisson, 1e-10));

    let mut product: f64 = 0.0;
    for &t in &[0.05, 0.3, 1.0, l * l / 10.0] {
        for &vv in &[0.05, 0.3, 0.5, 0.8] {
            for &x in &[0.0, 0.25 * l, 0.5 * l] {
                let d = vec![x; n];
                product = product.max(
                    kernel_product_defect(&spec, t, vv, &d, 1e-16)?
                        / kernel_product_scale(&spec, t),
                );
            }
        }
    }
    bundle
        .checks
        .push(check("kernel_product_rule", product, 1.0));

    let mut semigroup: f64 = 0.0;
    for &(s, t) in &[(0.01, 0.02), (0.2, 0.1), (1.0, 0.5)] {
        let d: Vec<f64> = (0..n).map(|_| rng.gen_range(-l / 2.0..l / 2.0)).collect();
        let conv = periodic_convolution(&spec, s, t, &d, 512, 1e-16)?;
        let direct = heat_kernel(&spec, s + t, &d, 1e-16)?;
        semigroup =
            semigroup.max((conv - direct).abs() / heat_kernel(&spec, s + t, &vec![0.0; n], 1e-16)?);
    }
    bundle.checks.push(check("semigroup", semigroup, 1e-10));

    // ratio of the route gap to its bound
    let mut route: f64 = 0.0;
    for &t in &config.t_grid() {
        let a = trace_w2(&v, t, &VRule::default(), 1e-13)?;
        let b = spectral_w2(&v, t, &VRule::default())?;
        let allowed =
            w2_route_gap_bound(&v, t) + a.error_bound() + b.error_bound() + 1e-14 * a.value.abs();
        route = route.max((a.value - b.value).abs() / allowed);
    }
    bundle.checks.push(check("w2_route_agreement", route, 1.0));

    let mut quadexp: f64 = 0.0;
    for _ in 0..100 {
        let d = rng.gen_range(1..=6);
        let braw = nalgebra::DMatrix::<f64>::from_fn(d, d, |_, _| rng.gen_range(-1.0..1.0));
        let b = QuadraticForm::new((&braw + braw.transpose()) * 0.5)?;
        let a = nalgebra::DMatrix::<f64>::from_fn(d, d, |_, _| rng.gen_range(-1.0..1.0));
        let q = QuadraticForm::new(&a * a.transpose() + nalgebra::DMatrix::identity(d, d) * 0.05)?;
        if q.condition() > 1e4 {
            continue;
        }
        let u = nalgebra::DVector::from_fn(d, |_, _| rng.gen_range(-2.0..2.0));
        let t = 10f64.powf(rng.gen_range(-3.0..0.0));
        quadexp = quadexp.max(quadexp_identity_residual(&b, &q, t, &u)?);
    }
    bundle
        .checks
        .push(check("quadexp_identity", quadexp, 1e-11));

    let mut scaling: f64 = 0.0;
    for k in 2..=4usize {
        let dim = n * (k - 1);
        let alphas: Vec<Vec<usize>> =
            vec![vec![], vec![0], vec![dim - 1], vec![0, dim - 1], vec![0, 0]];
        for r in simplex_points(k, 16)? {
            for j in 0..=2 {
                for alpha in &alphas {
                    let a = prodbound_ratio(&spec, &r, 0.3, j, alpha)?;
                    let b = prodbound_ratio(&spec, &r, 0.15, j, alpha)?;
                    scaling = scaling.max((a - b).abs() / a.abs());
                }
            }
        }
    }
    bundle
        .checks
        .push(check("prodbound_scaling", scaling, 1e-12));

    if v.support_len() == 1 && v.coefficient(Frequency::ZERO).im == 0.0 {
        // constant potential: the Galerkin trace obeys the shift law
        let c = v.mean();
        let sys = GalerkinSystem::build(&v, config.galerkin.cutoff.max(v.band()))?;
        let mut shift: f64 = 0.0;
        for &t in &config.t_grid() {
            let s = sys.relative_trace(t)?;
            let exact = (-c * t).exp_m1() * theta_trace(&spec, t, 1e-16)?;
            let allowed = s.tail_bound.max(1e-8 * exact.abs());
            shift = shift.max((s.value - exact).abs() / allowed.max(f64::MIN_POSITIVE));
        }
        bundle.checks.push(check("galerkin_shift_law", shift, 1.0));
    }

    let mut csv = String::from("check,value,tolerance,passed\n");
    for c in &bundle.checks {
        writeln!(
            csv,
            "{},{},{},{}",
            c.name,
            sci(c.value),
            sci(c.tolerance),
            c.passed
        )
        .expect("write to string");
    }
    bundle.tables.insert("verify.csv".into(), csv);
    bundle.exit_code = if bundle.checks.iter().all(|c| c.passed) {
        EXIT_PASS
    } else {
        EXIT_CHECK_FAILED
    };
    bundle.provenance.elapsed_seconds = start.elapsed().as_secs_f64();
    Ok(bundle)
}
