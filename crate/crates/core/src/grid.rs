//! Radial low-voltage grid model: buses, lines, attached devices, plus
//! import/export, validation and seeded device placement.
//!
//! All electrical quantities are per-unit on one common base. The grid
//! document may carry kV/MVA bases for bookkeeping, but nothing downstream
//! of the importer looks at them.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::curves::{PiecewiseLinearCurve, VariantKind};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, SplitMix64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BusKind {
    Slack,
    Pq,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bus {
    pub id: String,
    pub kind: BusKind,
    pub base_kv: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Line {
    pub from: String,
    pub to: String,
    pub r_pu: f64,
    pub x_pu: f64,
}

/// Kinds of controllable devices. EV, BESS and HP consume; PV generates.
/// Only EV and PV carry a droop curve; the other two are constant-power
/// placeholders.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DeviceKind {
    #[serde(rename = "PV")]
    Pv,
    #[serde(rename = "EV")]
    Ev,
    #[serde(rename = "BESS")]
    Bess,
    #[serde(rename = "HP")]
    Hp,
}

impl DeviceKind {
    pub const ALL: [DeviceKind; 4] = [
        DeviceKind::Pv,
        DeviceKind::Ev,
        DeviceKind::Bess,
        DeviceKind::Hp,
    ];

    /// +1 for consumers, -1 for generators, in the consumption-positive
    /// injection convention.
    pub fn sign(self) -> f64 {
        match self {
            DeviceKind::Pv => -1.0,
            DeviceKind::Ev | DeviceKind::Bess | DeviceKind::Hp => 1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DeviceKind::Pv => "PV",
            DeviceKind::Ev => "EV",
            DeviceKind::Bess => "BESS",
            DeviceKind::Hp => "HP",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Device {
    pub id: String,
    pub bus: String,
    pub kind: DeviceKind,
    /// Rated power magnitude, per-unit. Sign is implied by the kind.
    pub rated_pu: f64,
    pub variant: VariantKind,
    /// Optional override of the correct base curve for this device.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub curve: Option<PiecewiseLinearCurve>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridModel {
    pub name: String,
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub lines: Vec<Line>,
    #[serde(default)]
    pub devices: Vec<Device>,
}

impl GridModel {
    pub fn bus_index(&self, id: &str) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    pub fn slack_index(&self) -> Option<usize> {
        self.buses.iter().position(|b| b.kind == BusKind::Slack)
    }

    pub fn pq_buses(&self) -> Vec<&Bus> {
        self.buses.iter().filter(|b| b.kind == BusKind::Pq).collect()
    }
}

/// Outcome of [`validate_radial`]: either ok or a list of human-readable
/// violations. Violations are returned, never thrown.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Check every structural invariant of a grid: unique ids, exactly one
/// slack, existing line endpoints, no self-loops, non-negative impedances,
/// radial edge count and connectivity from the slack.
pub fn validate_radial(grid: &GridModel) -> ValidationReport {
    let mut violations = Vec::new();

    let mut seen = BTreeSet::new();
    for bus in &grid.buses {
        if !seen.insert(bus.id.as_str()) {
            violations.push(format!("duplicate bus id '{}'", bus.id));
        }
    }
    let slack_count = grid
        .buses
        .iter()
        .filter(|b| b.kind == BusKind::Slack)
        .count();
    if slack_count != 1 {
        violations.push(format!("expected exactly one slack bus, found {slack_count}"));
    }

    for line in &grid.lines {
        if line.from == line.to {
            violations.push(format!("self-loop at bus '{}'", line.from));
        }
        for end in [&line.from, &line.to] {
            if grid.bus_index(end).is_none() {
                violations.push(format!("line endpoint '{end}' is not a bus"));
            }
        }
        if !(line.r_pu >= 0.0) || !(line.x_pu >= 0.0) {
            violations.push(format!(
                "line {}-{} has negative or non-finite impedance",
                line.from, line.to
            ));
        }
    }

    let mut device_ids = BTreeSet::new();
    for device in &grid.devices {
        if !device_ids.insert(device.id.as_str()) {
            violations.push(format!("duplicate device id '{}'", device.id));
        }
        if grid.bus_index(&device.bus).is_none() {
            violations.push(format!(
                "device '{}' references missing bus '{}'",
                device.id, device.bus
            ));
        }
        if !(device.rated_pu > 0.0) {
            violations.push(format!(
                "device '{}' rated power must be positive, got {}",
                device.id, device.rated_pu
            ));
        }
        if let Some(curve) = &device.curve {
            if let Err(e) = PiecewiseLinearCurve::new(curve.breakpoints.clone()) {
                violations.push(format!("device '{}' curve invalid: {e}", device.id));
            }
        }
    }

    if grid.lines.len() + 1 != grid.buses.len() {
        violations.push(format!(
            "not radial: {} lines for {} buses (need bus count - 1)",
            grid.lines.len(),
            grid.buses.len()
        ));
    }

    // Connectivity from the slack over undirected lines.
    if slack_count == 1 && violations.iter().all(|v| !v.contains("is not a bus")) {
        let n = grid.buses.len();
        let mut adj = vec![Vec::new(); n];
        for line in &grid.lines {
            let (a, b) = (
                grid.bus_index(&line.from).unwrap(),
                grid.bus_index(&line.to).unwrap(),
            );
            adj[a].push(b);
            adj[b].push(a);
        }
        let root = grid.slack_index().unwrap();
        let mut visited = vec![false; n];
        visited[root] = true;
        let mut queue = VecDeque::from([root]);
        while let Some(i) = queue.pop_front() {
            for &j in &adj[i] {
                if !visited[j] {
                    visited[j] = true;
                    queue.push_back(j);
                }
            }
        }
        for (i, bus) in grid.buses.iter().enumerate() {
            if !visited[i] {
                violations.push(format!("bus '{}' is not connected to the slack", bus.id));
            }
        }
    }

    ValidationReport { violations }
}

/// Parse and validate a grid-description document (JSON).
pub fn load_grid(document: &str) -> Result<GridModel> {
    let grid: GridModel = serde_json::from_str(document)
        .map_err(|e| Error::Grid(format!("parse failure: {e}")))?;
    let report = validate_radial(&grid);
    if !report.ok() {
        return Err(Error::Grid(format!(
            "invalid grid '{}': {}",
            grid.name,
            report.violations.join("; ")
        )));
    }
    Ok(grid)
}

/// Serialize a grid to its canonical document form.
pub fn export_grid(grid: &GridModel) -> String {
    serde_json::to_string_pretty(grid).expect("grid serialization cannot fail")
}

/// Number of devices to place for `percent` of `eligible` buses:
/// round to nearest, ties upward.
pub fn placement_count(percent: f64, eligible: usize) -> usize {
    (percent / 100.0 * eligible as f64 + 0.5).floor() as usize
}

/// Place devices on a seeded selection of pq buses.
///
/// For each kind, `round(percent/100 * pq_bus_count)` distinct pq buses
/// (ties rounded up) receive one device of that kind, rated `rated_pu`.
/// Kinds are drawn independently, so a bus may host several kinds. All
/// placed devices start with the correct curve variant.
pub fn place_devices(
    grid: &GridModel,
    percentages: &BTreeMap<DeviceKind, f64>,
    rated_pu: &BTreeMap<DeviceKind, f64>,
    seed: u64,
) -> Result<GridModel> {
    for (&kind, &pct) in percentages {
        if !(0.0..=100.0).contains(&pct) {
            return Err(Error::Grid(format!(
                "{} placement percentage {pct} outside [0, 100]",
                kind.as_str()
            )));
        }
    }
    let eligible: Vec<usize> = grid
        .buses
        .iter()
        .enumerate()
        .filter(|(_, b)| b.kind == BusKind::Pq)
        .map(|(i, _)| i)
        .collect();

    let mut placed = grid.clone();
    for kind in DeviceKind::ALL {
        let pct = percentages.get(&kind).copied().unwrap_or(0.0);
        let count = placement_count(pct, eligible.len());
        if count == 0 {
            continue;
        }
        if count > eligible.len() {
            return Err(Error::Grid(format!(
                "cannot place {count} {} devices on {} eligible buses",
                kind.as_str(),
                eligible.len()
            )));
        }
        let rated = rated_pu.get(&kind).copied().unwrap_or(0.2);
        let mut rng = SplitMix64::new(derive_seed(seed, kind.as_str()));
        let mut picks = rng.choose(eligible.len(), count);
        picks.sort_unstable();
        for pick in picks {
            let bus = &grid.buses[eligible[pick]];
            placed.devices.push(Device {
                id: format!("{}_{}", kind.as_str().to_lowercase(), bus.id),
                bus: bus.id.clone(),
                kind,
                rated_pu: rated,
                variant: VariantKind::Correct,
                curve: None,
            });
        }
    }
    Ok(placed)
}

/// Deterministic random radial feeder, used as a fixture generator.
///
/// Bus 0 is the slack; every further bus attaches to a previous one with a
/// bias towards recent buses, which yields the stretched, chain-like trees
/// typical of LV feeders. Impedances are LV-like with R dominating X.
pub fn random_feeder(seed: u64, n_buses: usize) -> GridModel {
    assert!(n_buses >= 2, "a feeder needs at least two buses");
    let mut rng = SplitMix64::new(seed);
    let mut buses = vec![Bus {
        id: "slack".into(),
        kind: BusKind::Slack,
        base_kv: 0.4,
    }];
    let mut lines = Vec::new();
    for i in 1..n_buses {
        let id = format!("b{i:02}");
        // Attach to one of the last three buses (or any earlier one 25% of
        // the time) to keep the tree stretched.
        let parent = if i == 1 || rng.next_f64() < 0.25 {
            rng.below(i)
        } else {
            i - 1 - rng.below(3.min(i))
        };
        lines.push(Line {
            from: buses[parent].id.clone(),
            to: id.clone(),
            r_pu: rng.uniform(0.008, 0.020),
            x_pu: rng.uniform(0.003, 0.008),
        });
        buses.push(Bus {
            id,
            kind: BusKind::Pq,
            base_kv: 0.4,
        });
    }
    GridModel {
        name: format!("feeder_s{seed}_n{n_buses}"),
        base_mva: 0.4,
        buses,
        lines,
        devices: Vec::new(),
    }
}
