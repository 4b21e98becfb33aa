//! Voltage-dependent active-power control laws and their malfunction
//! variants.
//!
//! A device follows a piecewise-linear P(U) curve mapping its local per-unit
//! voltage to a setpoint factor in [0, 1]. A misconfigured device executes
//! the wrong curve: either a flat one (no voltage response at all) or the
//! inversion of the correct one (responding the wrong way round).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::DeviceKind;

/// Piecewise-linear P(U) curve. Evaluation clamps to the end factors
/// outside the breakpoint span.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PiecewiseLinearCurve {
    /// (voltage pu, power factor) pairs, voltages strictly increasing.
    pub breakpoints: Vec<(f64, f64)>,
}

impl PiecewiseLinearCurve {
    pub fn new(breakpoints: Vec<(f64, f64)>) -> Result<Self> {
        if breakpoints.is_empty() {
            return Err(Error::Curve("curve needs at least one breakpoint".into()));
        }
        for pair in breakpoints.windows(2) {
            if pair[1].0 <= pair[0].0 {
                return Err(Error::Curve(format!(
                    "breakpoint voltages must be strictly increasing ({} then {})",
                    pair[0].0, pair[1].0
                )));
            }
        }
        for &(u, p) in &breakpoints {
            if !u.is_finite() || !p.is_finite() || !(0.0..=1.0).contains(&p) {
                return Err(Error::Curve(format!(
                    "breakpoint ({u}, {p}) outside the valid range"
                )));
            }
        }
        Ok(Self { breakpoints })
    }

    /// Constant curve, factor 1.0 everywhere.
    pub fn flat() -> Self {
        Self {
            breakpoints: vec![(1.0, 1.0)],
        }
    }
}

/// Evaluate a curve at voltage `u` by linear interpolation, clamped to the
/// end factors outside the breakpoint span.
pub fn eval_curve(curve: &PiecewiseLinearCurve, u: f64) -> f64 {
    let bp = &curve.breakpoints;
    if u <= bp[0].0 {
        return bp[0].1;
    }
    if u >= bp[bp.len() - 1].0 {
        return bp[bp.len() - 1].1;
    }
    for pair in bp.windows(2) {
        let (u0, p0) = pair[0];
        let (u1, p1) = pair[1];
        if u <= u1 {
            return p0 + (u - u0) / (u1 - u0) * (p1 - p0);
        }
    }
    unreachable!("u is inside the span but matched no segment");
}

/// Default correct curve for a droop-capable device kind.
///
/// EV charging limits consumption when the feeder voltage dips; PV
/// curtails generation when it rises. BESS and HP carry no droop model.
pub fn default_curve(kind: DeviceKind) -> Result<PiecewiseLinearCurve> {
    match kind {
        DeviceKind::Ev => PiecewiseLinearCurve::new(vec![(0.90, 0.1), (0.95, 1.0)]),
        DeviceKind::Pv => PiecewiseLinearCurve::new(vec![(1.05, 1.0), (1.10, 0.1)]),
        DeviceKind::Bess | DeviceKind::Hp => Err(Error::Curve(format!(
            "{kind:?} has no droop model; it is a constant-power placeholder"
        ))),
    }
}

/// Invert a curve: same voltage breakpoints, factor sequence reversed.
pub fn invert(curve: &PiecewiseLinearCurve) -> PiecewiseLinearCurve {
    let n = curve.breakpoints.len();
    let breakpoints = curve
        .breakpoints
        .iter()
        .enumerate()
        .map(|(i, &(u, _))| (u, curve.breakpoints[n - 1 - i].1))
        .collect();
    PiecewiseLinearCurve { breakpoints }
}

/// Behavioural tag of a device's configured curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VariantKind {
    Correct,
    Flat,
    Inverted,
}

impl VariantKind {
    /// Class label used in datasets: 0 = correct, 1 = malfunctioning.
    pub fn label(self) -> u8 {
        match self {
            VariantKind::Correct => 0,
            VariantKind::Flat | VariantKind::Inverted => 1,
        }
    }
}

/// A variant tag together with the resolved curve it denotes for a
/// particular base curve.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveVariant {
    pub kind: VariantKind,
    pub curve: PiecewiseLinearCurve,
}

impl CurveVariant {
    /// Resolve a variant against a base (correct) curve.
    pub fn resolve(base: &PiecewiseLinearCurve, kind: VariantKind) -> Self {
        let curve = match kind {
            VariantKind::Correct => base.clone(),
            VariantKind::Flat => PiecewiseLinearCurve::flat(),
            VariantKind::Inverted => invert(base),
        };
        Self { kind, curve }
    }
}

/// Map the numeric malfunction choice from the experiment configuration to
/// a curve variant: 1 is the flat curve, 2 the inverted one.
pub fn make_malfunction(kind: DeviceKind, choice: u8) -> Result<CurveVariant> {
    let base = default_curve(kind)?;
    match choice {
        1 => Ok(CurveVariant::resolve(&base, VariantKind::Flat)),
        2 => Ok(CurveVariant::resolve(&base, VariantKind::Inverted)),
        other => Err(Error::Curve(format!(
            "malfunction choice must be 1 (flat) or 2 (inverted), got {other}"
        ))),
    }
}
