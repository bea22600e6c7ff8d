//! Sobolev regularity of `V` read off from heat-trace remainders and from the
//! eigenbasis functional `F_m`.

use serde::{Deserialize, Serialize};

use crate::asymptotics::{fit_expansion, FitOptions};
use crate::error::{invalid, Result};
use crate::potential::FourierPotential;
use crate::quadrature::{integrate_unit, VRule};

/// Normalized Taylor remainder of `e^{-s}` at order `m`:
/// `e^{-s} = Σ_{j<m} (−s)^j/j! + e_m(s) (−1)^m s^m / m!`, so `0 ≤ e_m ≤ 1`.
pub fn e_m(m: u32, s: f64) -> f64 {
    if m == 0 {
        return (-s).exp();
    }
    if s <= 0.5 {
        // m! Σ_{i≥0} (−s)^i / (m+i)!
        let mut term = 1.0;
        let mut total = 1.0;
        let mut i = 0u32;
        loop {
            i += 1;
            term *= -s / (m + i) as f64;
            total += term;
            if term.abs() < 1e-18 * total.abs() {
                return total;
            }
        }
    }
    let mut partial = 0.0;
    let mut term = 1.0;
    for j in 0..m {
        if j > 0 {
            term *= -s / j as f64;
        }
        partial += term;
    }
    let mf: f64 = (1..=m).map(|i| i as f64).product();
    mf * s.powi(-(m as i32)) * ((-s).exp() - partial).abs()
}

/// `F_m(t) = ∫₀¹ Σ_ξ e_m(v(1−v)tρ_ξ) (v(1−v))^m ρ_ξ^m |b_ξ|² dv`.
pub fn fatou_functional(v: &FourierPotential, m: u32, t: f64, rule: &VRule) -> Result<f64> {
    if m < 1 {
        return Err(invalid("m", "the functional is defined for m >= 1"));
    }
    if !(t.is_finite() && t > 0.0) {
        return Err(invalid("t", format!("time must be positive, got {t}")));
    }
    let spec = *v.spec();
    let modes: Vec<(f64, f64)> = v
        .coefficients()
        .map(|(k, _)| (spec.eigenvalue(k), v.basis_coefficient_sq(k)))
        .filter(|&(rho, _)| rho > 0.0)
        .collect();
    let r = integrate_unit(rule, |s| {
        let w = s * (1.0 - s);
        modes
            .iter()
            .map(|&(rho, b2)| e_m(m, w * t * rho) * (w * rho).powi(m as i32) * b2)
            .sum()
    });
    Ok(r.value)
}

/// `B(m+1, m+1) Σ ρ^m |b|²`, the `t → 0` limit of `F_m` for band-limited `V`.
pub fn fatou_limit(v: &FourierPotential, m: u32) -> f64 {
    let mf: f64 = (1..=m).map(|i| i as f64).product();
    let f2: f64 = (1..=2 * m + 1).map(|i| i as f64).product();
    mf * mf / f2 * v.moment_sum(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorSettings {
    /// Highest order examined.
    pub m_max: u32,
    /// Growth exponents at or above this count as bounded.
    pub held_threshold: f64,
    /// Growth exponents at or below this count as growing.
    pub failed_threshold: f64,
    /// Ratio between successive window start times.
    pub window_ratio: f64,
    /// Fewest window levels from which an exponent is estimated.
    pub min_levels: usize,
    /// Samples required to reach at least this small a time.
    pub required_t_min: f64,
    /// Relative precision of the input data; level changes within the implied
    /// noise are ignored.
    pub data_precision: f64,
    /// Shortest span, in decades, of a trace window `[τ, t_max]`.
    pub min_window_decades: f64,
}

impl Default for DetectorSettings {
    fn default() -> Self {
        Self {
            m_max: 3,
            held_threshold: 0.35,
            failed_threshold: 0.15,
            window_ratio: 4.0,
            min_levels: 3,
            required_t_min: 1e-3,
            data_precision: 1e-13,
            min_window_decades: 1.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderStatus {
    Held,
    Failed,
    Indeterminate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "m")]
pub enum Detected {
    /// Every order above this one failed. Order zero always holds for bounded `V`.
    Exactly(u32),
    /// Every tested order held.
    AtLeast(u32),
    Indeterminate,
}

impl std::fmt::Display for Detected {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Detected::Exactly(m) => write!(f, "{m}"),
            Detected::AtLeast(m) => write!(f, ">={m}"),
            Detected::Indeterminate => write!(f, "indeterminate"),
        }
    }
}

/// Evidence for one order `m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderEvidence {
    pub m: u32,
    pub status: OrderStatus,
    /// Window start times `t_min · R^j`.
    pub window_starts: Vec<f64>,
    /// Remainder level `r_{m+2}` of each window (trace) or `F_m` (spectrum).
    pub levels: Vec<f64>,
    /// Exponent `e` in `level(τ) ≈ C + A τ^e`; `None` when no estimate exists.
    pub growth_exponent: Option<f64>,
    /// Set when the status was inherited from a lower failed order.
    pub propagated: bool,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FatouSeries {
    pub m: u32,
    pub samples: Vec<(f64, f64)>,
    /// `B(m+1, m+1) Σ ρ^m |b|²` of the band-limited potential.
    pub limit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularityVerdict {
    pub source: String,
    pub m_detected: Detected,
    pub nominal_m: Option<u32>,
    pub evidence: Vec<OrderEvidence>,
    pub fatou_values: Vec<FatouSeries>,
    pub settings: DetectorSettings,
}

impl RegularityVerdict {
    /// Whether the verdict claims more regularity than `nominal` (capped at `m_max`).
    pub fn exceeds(&self, nominal: u32) -> bool {
        match self.m_detected {
            Detected::Exactly(m) => m > nominal,
            Detected::AtLeast(m) => m > nominal,
            Detected::Indeterminate => false,
        }
    }

    /// Whether the verdict equals `nominal`, reading orders above `m_max` as `AtLeast(m_max)`.
    pub fn matches(&self, nominal: u32) -> bool {
        let m_max = self.settings.m_max;
        match self.m_detected {
            Detected::Exactly(m) => m == nominal && nominal < m_max,
            Detected::AtLeast(m) => m == m_max && nominal >= m_max,
            Detected::Indeterminate => false,
        }
    }
}

/// Exponent `e` of `Q(τ) ≈ C + A τ^e` from the increments `Q(τ_j) − Q(τ_{j+1})`
/// on a geometric sequence `τ_j`.
///
/// Only the leading run of increments above `floors[j]`, starting at the smallest
/// window, is used: changes confined to large windows say nothing about `τ → 0`.
/// An empty run means the level is flat near `t_min` and gives `+∞`; a run of one
/// gives no estimate.
pub fn increment_exponent(taus: &[f64], levels: &[f64], floors: &[f64]) -> Option<f64> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for j in 0..levels.len().saturating_sub(1) {
        let d = (levels[j] - levels[j + 1]).abs();
        if d <= floors[j] {
            break;
        }
        xs.push(taus[j].ln());
        ys.push(d.ln());
    }
    match xs.len() {
        0 => Some(f64::INFINITY),
        1 => None,
        len => {
            let n = len as f64;
            let mx = xs.iter().sum::<f64>() / n;
            let my = ys.iter().sum::<f64>() / n;
            let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
            let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
            Some(sxy / sxx)
        }
    }
}

fn classify(e: Option<f64>, s: &DetectorSettings) -> OrderStatus {
    match e {
        Some(e) if e >= s.held_threshold => OrderStatus::Held,
        Some(e) if e <= s.failed_threshold => OrderStatus::Failed,
        _ => OrderStatus::Indeterminate,
    }
}

fn window_starts(t_min: f64, t_max: f64, ratio: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut tau = t_min;
    while tau < t_max {
        out.push(tau);
        tau *= ratio;
    }
    out
}

/// Combines per-order statuses: a failure propagates upward, the first
/// indeterminate order before any failure makes the verdict indeterminate.
fn conclude(evidence: &mut [OrderEvidence], m_max: u32) -> Detected {
    let mut verdict = None;
    for ev in evidence.iter_mut() {
        if verdict.is_some() {
            if ev.status != OrderStatus::Failed {
                ev.status = OrderStatus::Failed;
                ev.propagated = true;
            }
            continue;
        }
        match ev.status {
            OrderStatus::Held => {}
            OrderStatus::Failed => {
                verdict = Some(Detected::Exactly(ev.m.saturating_sub(1)));
            }
            OrderStatus::Indeterminate => return Detected::Indeterminate,
        }
    }
    verdict.unwrap_or(Detected::AtLeast(m_max))
}

fn insufficient(m: u32, note: String) -> OrderEvidence {
    OrderEvidence {
        m,
        status: OrderStatus::Indeterminate,
        window_starts: Vec::new(),
        levels: Vec::new(),
        growth_exponent: None,
        propagated: false,
        note: Some(note),
    }
}

/// Orders `m = 0..=m_max` judged from normalized trace samples `(t, g)`.
///
/// For each window `[t_min R^j, t_max]` the samples are refitted at order `m + 2`
/// and the coefficient of `t^{m+2}` is taken as the remainder level `r_{m+2}` of
/// that window. Level changes shrink like `τ^e` with `e > 0` when order `m`
/// holds and grow when it fails.
pub fn detect_from_trace(
    samples: &[(f64, f64)],
    settings: &DetectorSettings,
) -> Result<RegularityVerdict> {
    let mut pts = samples.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let t_min = pts.first().map_or(f64::INFINITY, |p| p.0);
    let t_max = pts.last().map_or(0.0, |p| p.0);
    let taus: Vec<f64> = window_starts(t_min, t_max, settings.window_ratio)
        .into_iter()
        .filter(|&tau| (t_max / tau).log10() + 1e-9 >= settings.min_window_decades)
        .collect();
    let options = FitOptions {
        min_decades: settings.min_window_decades,
        ..FitOptions::default()
    };
    let mut evidence = Vec::new();
    for m in 0..=settings.m_max {
        if t_min > settings.required_t_min * (1.0 + 1e-9) {
            evidence.push(insufficient(
                m,
                format!(
                    "grid stops at t = {t_min:.3e}, above the required {:.1e}",
                    settings.required_t_min
                ),
            ));
            continue;
        }
        let order = m as usize + 2;
        let mut usable = Vec::new();
        let mut levels = Vec::new();
        let mut noise = Vec::new();
        let mut failure = None;
        for &tau in &taus {
            let window: Vec<(f64, f64)> = pts
                .iter()
                .copied()
                .filter(|p| p.0 >= tau * (1.0 - 1e-12))
                .collect();
            match fit_expansion(&window, order, options) {
                Ok(fit) => {
                    let delta: Vec<f64> = window
                        .iter()
                        .map(|&(t, g)| {
                            settings.data_precision * g.abs().max(fit.polynomial(t).abs())
                                / t.powi(order as i32 + 2)
                        })
                        .collect();
                    usable.push(tau);
                    levels.push(fit.coefficient(order));
                    noise.push(fit.coefficient_bound(order, &delta));
                }
                Err(e) => {
                    failure = Some(e);
                    break;
                }
            }
        }
        if usable.len() < settings.min_levels {
            let reason = match failure {
                Some(e) => format!("only {} window levels ({e})", usable.len()),
                None => format!("only {} window levels", usable.len()),
            };
            evidence.push(insufficient(m, reason));
            continue;
        }
        let floors: Vec<f64> = noise
            .windows(2)
            .map(|w| 2.0 * (w[0] + w[1]))
            .chain([0.0])
            .collect();
        let e = increment_exponent(&usable, &levels, &floors);
        evidence.push(OrderEvidence {
            m,
            status: classify(e, settings),
            window_starts: usable,
            levels,
            growth_exponent: e,
            propagated: false,
            note: None,
        });
    }
    let m_detected = conclude(&mut evidence, settings.m_max);
    Ok(RegularityVerdict {
        source: "trace".into(),
        m_detected,
        nominal_m: None,
        evidence,
        fatou_values: Vec::new(),
        settings: *settings,
    })
}

/// Orders `m = 1..=m_max` judged from the growth of `F_m(t)` as `t ↓ t_min`;
/// order zero holds for every bounded `V`.
pub fn detect_from_spectrum(
    v: &FourierPotential,
    t_grid: &[f64],
    settings: &DetectorSettings,
    rule: &VRule,
) -> Result<RegularityVerdict> {
    if settings.m_max < 1 {
        return Err(invalid("m_max", "spectral detection needs m_max >= 1"));
    }
    let t_min = t_grid.iter().copied().fold(f64::INFINITY, f64::min);
    let t_max = t_grid.iter().copied().fold(0.0, f64::max);
    let taus = window_starts(t_min, t_max, settings.window_ratio);
    let mut evidence = vec![OrderEvidence {
        m: 0,
        status: OrderStatus::Held,
        window_starts: Vec::new(),
        levels: Vec::new(),
        growth_exponent: None,
        propagated: false,
        note: Some("square-integrable".into()),
    }];
    let mut fatou_values = Vec::new();
    for m in 1..=settings.m_max {
        let mut samples = Vec::with_capacity(t_grid.len());
        for &t in t_grid {
            samples.push((t, fatou_functional(v, m, t, rule)?));
        }
        fatou_values.push(FatouSeries {
            m,
            samples,
            limit: fatou_limit(v, m),
        });
        if t_min > settings.required_t_min * (1.0 + 1e-9) {
            evidence.push(insufficient(
                m,
                format!(
                    "grid stops at t = {t_min:.3e}, above the required {:.1e}",
                    settings.required_t_min
                ),
            ));
            continue;
        }
        if taus.len() < settings.min_levels {
            evidence.push(insufficient(
                m,
                format!("only {} window levels", taus.len()),
            ));
            continue;
        }
        let mut levels = Vec::with_capacity(taus.len());
        for &tau in &taus {
            levels.push(fatou_functional(v, m, tau, rule)?);
        }
        let floors: Vec<f64> = levels
            .iter()
            .map(|l| 2.0 * settings.data_precision * l.abs())
            .collect();
        let e = increment_exponent(&taus, &levels, &floors);
        evidence.push(OrderEvidence {
            m,
            status: classify(e, settings),
            window_starts: taus.clone(),
            levels,
            growth_exponent: e,
            propagated: false,
            note: None,
        });
    }
    let m_detected = conclude(&mut evidence, settings.m_max);
    Ok(RegularityVerdict {
        source: "spectrum".into(),
        m_detected,
        nominal_m: None,
        evidence,
        fatou_values,
        settings: *settings,
    })
}
