//! Analytic area, power and energy model over a clock-period sweep.
//!
//! Nothing here is synthesized. Area follows a timing-pressure curve
//! `base * (1 + k * max(0, pmin/p - pmin/prelax)^alpha)` that is infeasible
//! below `pmin`; power is dominated by static pull-up current proportional
//! to the gate count, plus a dynamic share that scales with frequency.
//! Parameters are fitted to a small table of published anchor points.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cycles between presenting a sample and reading its class.
pub const LATENCY_CYCLES: f64 = 3.0;

const DEFAULT_TABLE: &str = include_str!("../data/calibration.toml");

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Anchor {
    pub period_us: f64,
    pub gates: f64,
    pub power_mw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompactAnchors {
    pub min_feasible_period_us: f64,
    pub anchors: Vec<Anchor>,
    pub power_reduction_pct: f64,
    pub area_reduction_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FullAnchors {
    pub min_feasible_period_us: f64,
    pub gates: f64,
    pub energy_knee_us: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationTable {
    pub version: u32,
    pub relaxed_period_us: f64,
    pub duty_low: f64,
    pub inflation_exponent: f64,
    pub compact: CompactAnchors,
    pub full: FullAnchors,
}

impl Default for CalibrationTable {
    fn default() -> Self {
        Self::from_toml(DEFAULT_TABLE).expect("bundled calibration table parses")
    }
}

impl CalibrationTable {
    pub fn from_toml(text: &str) -> Result<Self> {
        let t: CalibrationTable = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        t.validate()?;
        Ok(t)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.compact.anchors.len() != 2 {
            return fail("the compact fit needs exactly two anchors");
        }
        let [a, b] = [self.compact.anchors[0], self.compact.anchors[1]];
        if !(a.period_us < b.period_us && a.gates > b.gates && a.power_mw > b.power_mw) {
            return fail("compact anchors must be ordered fast-to-slow with falling area and power");
        }
        if (b.period_us - self.relaxed_period_us).abs() > 1e-9 {
            return fail("the slow compact anchor must sit at the relaxed period");
        }
        if a.period_us < self.compact.min_feasible_period_us {
            return fail("fast compact anchor lies below the timing wall");
        }
        if !(self.full.energy_knee_us > self.full.min_feasible_period_us
            && self.full.energy_knee_us < self.relaxed_period_us)
        {
            return fail("the full-model energy knee must lie inside the feasible range");
        }
        if !(self.duty_low > 0.0 && self.duty_low <= 1.0) || self.inflation_exponent <= 0.0 {
            return fail("duty_low must be in (0, 1] and the exponent positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelTag {
    Full,
    Compact,
}

impl FromStr for ModelTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(ModelTag::Full),
            "compact" => Ok(ModelTag::Compact),
            _ => Err(Error::Config(format!("unknown model tag {s:?} (full|compact)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PpaConfig {
    pub base_gate_count: f64,
    pub min_feasible_period: f64,
    /// Period above which timing exerts no pressure on area.
    pub relaxed_period: f64,
    pub periods: Vec<f64>,
    /// mW per NAND2-eq while driving low.
    pub static_power_per_gate: f64,
    pub dynamic_fraction: f64,
    pub inflation_coefficient: f64,
    pub inflation_exponent: f64,
    pub duty_low: f64,
}

impl PpaConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.periods.iter().any(|p| p.is_nan() || *p <= 0.0) {
            return fail("sweep periods must be positive");
        }
        if self.periods.windows(2).any(|w| w[0] >= w[1]) {
            return fail("sweep periods must be strictly ascending");
        }
        if !(self.min_feasible_period > 0.0 && self.relaxed_period > self.min_feasible_period) {
            return fail("need 0 < min_feasible_period < relaxed_period");
        }
        if !(0.0..0.5).contains(&self.dynamic_fraction) {
            return fail("dynamic_fraction must be in [0, 0.5) to keep power static-dominated");
        }
        if self.inflation_exponent <= 0.0 || self.inflation_coefficient < 0.0 {
            return fail("inflation exponent must be positive and coefficient non-negative");
        }
        if self.base_gate_count < 0.0 || self.static_power_per_gate < 0.0 {
            return fail("gate count and static power must be non-negative");
        }
        if !(self.duty_low > 0.0 && self.duty_low <= 1.0) {
            return fail("duty_low must be in (0, 1]");
        }
        Ok(())
    }

    pub fn with_base(mut self, base: f64) -> Self {
        self.base_gate_count = base;
        self
    }

    pub fn with_periods(mut self, periods: Vec<f64>) -> Self {
        self.periods = periods;
        self
    }
}

fn check_period(period: f64) -> Result<()> {
    if period > 0.0 && period.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositivePeriod(period))
    }
}

fn pressure(period: f64, cfg: &PpaConfig) -> f64 {
    (cfg.min_feasible_period / period - cfg.min_feasible_period / cfg.relaxed_period).max(0.0)
}

/// Gate count needed to close timing at `period`, or `None` below the wall.
pub fn area_at_period(base: f64, period: f64, cfg: &PpaConfig) -> Result<Option<f64>> {
    check_period(period)?;
    if period < cfg.min_feasible_period {
        return Ok(None);
    }
    let u = pressure(period, cfg);
    Ok(Some(base * (1.0 + cfg.inflation_coefficient * u.powf(cfg.inflation_exponent))))
}

/// `(static, dynamic)` power in mW for `gates` clocked at `period`.
pub fn power_at(gates: f64, period: f64, cfg: &PpaConfig) -> Result<(f64, f64)> {
    check_period(period)?;
    if period < cfg.min_feasible_period {
        return Err(Error::Infeasible(period));
    }
    let stat = cfg.static_power_per_gate * gates * cfg.duty_low;
    let dynamic = cfg.dynamic_fraction * stat * (cfg.min_feasible_period / period);
    Ok((stat, dynamic))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PpaPoint {
    pub period: f64,
    pub gate_count: Option<f64>,
    pub power_static: Option<f64>,
    pub power_dynamic: Option<f64>,
    pub power_total: Option<f64>,
    /// Throughput mode: one result per cycle.
    pub energy_per_inference: Option<f64>,
    /// Latency mode: one sample alone in the pipeline for three cycles.
    pub energy_latency: Option<f64>,
    pub feasible: bool,
}

/// nJ per inference in throughput mode (mW times µs).
pub fn energy_per_inference(point: &PpaPoint) -> Result<f64> {
    match point.power_total {
        Some(p) if point.feasible => Ok(p * point.period),
        _ => Err(Error::Infeasible(point.period)),
    }
}

pub fn point_at(base: f64, period: f64, cfg: &PpaConfig) -> Result<PpaPoint> {
    let Some(gates) = area_at_period(base, period, cfg)? else {
        return Ok(PpaPoint {
            period,
            gate_count: None,
            power_static: None,
            power_dynamic: None,
            power_total: None,
            energy_per_inference: None,
            energy_latency: None,
            feasible: false,
        });
    };
    let (s, d) = power_at(gates, period, cfg)?;
    let total = s + d;
    Ok(PpaPoint {
        period,
        gate_count: Some(gates),
        power_static: Some(s),
        power_dynamic: Some(d),
        power_total: Some(total),
        energy_per_inference: Some(total * period),
        energy_latency: Some(total * period * LATENCY_CYCLES),
        feasible: true,
    })
}

pub fn sweep(gate_count: f64, cfg: &PpaConfig) -> Result<Vec<PpaPoint>> {
    cfg.validate()?;
    cfg.periods.iter().map(|&p| point_at(gate_count, p, cfg)).collect()
}

pub fn sweep_csv(tag: ModelTag, points: &[PpaPoint]) -> String {
    let tag = match tag {
        ModelTag::Full => "full",
        ModelTag::Compact => "compact",
    };
    let mut s = String::from(
        "# modeled values (analytic surrogate, not synthesis)\n\
         model,period_us,gates_nand2eq,static_mw,dynamic_mw,total_mw,energy_nj,energy_latency_nj,feasible\n",
    );
    let f = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
    for p in points {
        writeln!(
            s,
            "{tag},{},{},{},{},{},{},{},{}",
            p.period,
            f(p.gate_count),
            f(p.power_static),
            f(p.power_dynamic),
            f(p.power_total),
            f(p.energy_per_inference),
            f(p.energy_latency),
            p.feasible
        )
        .unwrap();
    }
    s
}

/// Period of minimum throughput-mode energy among feasible points.
pub fn energy_minimum(points: &[PpaPoint]) -> Option<&PpaPoint> {
    points
        .iter()
        .filter(|p| p.feasible)
        .min_by(|a, b| a.energy_per_inference.partial_cmp(&b.energy_per_inference).expect("finite"))
}

/// Parses `start:stop:step` (inclusive) or a comma-separated list.
pub fn parse_periods(spec: &str) -> Result<Vec<f64>> {
    let bad = || Error::Config(format!("invalid period list {spec:?}"));
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad());
    let periods: Vec<f64> = if spec.contains(':') {
        let parts: Vec<f64> = spec.split(':').map(num).collect::<Result<_>>()?;
        let [start, stop, step] = parts[..] else {
            return Err(bad());
        };
        if step.is_nan() || step <= 0.0 || stop < start {
            return Err(bad());
        }
        let n = ((stop - start) / step + 1e-9).floor() as usize;
        (0..=n).map(|i| start + step * i as f64).collect()
    } else {
        spec.split(',').map(num).collect::<Result<_>>()?
    };
    if periods.is_empty() || periods.iter().any(|p| p.is_nan() || *p <= 0.0) || periods.windows(2).any(|w| w[0] >= w[1]) {
        return Err(bad());
    }
    Ok(periods)
}

pub fn default_periods() -> Vec<f64> {
    (4..=40).map(f64::from).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub compact: PpaConfig,
    pub full: PpaConfig,
}

/// Fits both models. The compact curve passes exactly through its two
/// anchors; the full model shares the technology parameters and its
/// inflation coefficient places the energy minimum at the knee period.
pub fn calibrate(table: &CalibrationTable) -> Result<Calibration> {
    table.validate()?;
    let [fast, slow] = [table.compact.anchors[0], table.compact.anchors[1]];
    let alpha = table.inflation_exponent;
    let pmin = table.compact.min_feasible_period_us;
    let prelax = table.relaxed_period_us;
    let base = slow.gates;
    let u_fast: f64 = pmin / fast.period_us - pmin / prelax;
    let k = (fast.gates / base - 1.0) / u_fast.powf(alpha);

    // total(p) = spg * duty * g(p) * (1 + df * pmin / p), solved for df, spg.
    let r = fast.power_mw / slow.power_mw * slow.gates / fast.gates;
    let (rf, rs) = (pmin / fast.period_us, pmin / slow.period_us);
    let df = (r - 1.0) / (rf - r * rs);
    let spg = fast.power_mw / (table.duty_low * fast.gates * (1.0 + df * rf));

    let compact = PpaConfig {
        base_gate_count: base,
        min_feasible_period: pmin,
        relaxed_period: prelax,
        periods: default_periods(),
        static_power_per_gate: spg,
        dynamic_fraction: df,
        inflation_coefficient: k,
        inflation_exponent: alpha,
        duty_low: table.duty_low,
    };
    compact.validate()?;

    let mut full = PpaConfig {
        base_gate_count: table.full.gates,
        min_feasible_period: table.full.min_feasible_period_us,
        inflation_coefficient: 0.0,
        ..compact.clone()
    };
    full.inflation_coefficient = fit_energy_knee(&full, table.full.energy_knee_us)?;
    full.validate()?;
    Ok(Calibration { compact, full })
}

/// Energy slope dE/dp (up to a positive factor) at `p`.
fn energy_slope(cfg: &PpaConfig, k: f64, p: f64) -> f64 {
    let pmin = cfg.min_feasible_period;
    let a = cfg.inflation_exponent;
    let u = pressure(p, cfg);
    let g = 1.0 + k * u.powf(a);
    let dg = if u > 0.0 { -k * a * u.powf(a - 1.0) * pmin / (p * p) } else { 0.0 };
    dg * (p + cfg.dynamic_fraction * pmin) + g
}

/// Bisects the inflation coefficient so the energy slope vanishes at `knee`.
fn fit_energy_knee(cfg: &PpaConfig, knee: f64) -> Result<f64> {
    let (mut lo, mut hi) = (0.0, 1.0);
    while energy_slope(cfg, hi, knee) > 0.0 {
        hi *= 2.0;
        if hi > 1e6 {
            return Err(Error::Config("energy knee cannot be fitted".into()));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if energy_slope(cfg, mid, knee) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorResidual {
    pub period_us: f64,
    pub quantity: String,
    pub anchor: f64,
    pub modeled: f64,
    pub relative_error: f64,
}

/// Modeled gates and power at each compact anchor.
pub fn anchor_residuals(cfg: &PpaConfig, anchors: &[Anchor]) -> Result<Vec<AnchorResidual>> {
    let mut out = Vec::new();
    for a in anchors {
        let p = point_at(cfg.base_gate_count, a.period_us, cfg)?;
        let gates = p.gate_count.ok_or(Error::Infeasible(a.period_us))?;
        let power = p.power_total.expect("feasible");
        for (quantity, anchor, modeled) in [("gates", a.gates, gates), ("power_mw", a.power_mw, power)] {
            out.push(AnchorResidual {
                period_us: a.period_us,
                quantity: quantity.to_string(),
                anchor,
                modeled,
                relative_error: (modeled - anchor).abs() / anchor,
            });
        }
    }
    Ok(out)
}

/// End-to-end `(power, area)` reduction in percent between two periods.
pub fn reductions(base: f64, from: f64, to: f64, cfg: &PpaConfig) -> Result<(f64, f64)> {
    let a = point_at(base, from, cfg)?;
    let b = point_at(base, to, cfg)?;
    match (a.power_total, b.power_total, a.gate_count, b.gate_count) {
        (Some(pa), Some(pb), Some(ga), Some(gb)) => Ok((100.0 * (pa - pb) / pa, 100.0 * (ga - gb) / ga)),
        _ => Err(Error::Infeasible(if a.feasible { to } else { from })),
    }
}
