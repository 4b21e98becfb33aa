//! Radial AC load flow by backward-forward sweep, droop fixed-point
//! resolution and profile-driven time-series simulation.
//!
//! The backward sweep accumulates branch currents from the leaves towards
//! the slack using `conj(S/V)`; the forward sweep updates child voltages
//! as `V_child = V_parent - Z * I_branch`. Device P(U) coupling is solved
//! as a damped outer fixed point around the sweep.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use num_complex::Complex64;

use crate::curves::{self, CurveVariant, PiecewiseLinearCurve};
use crate::error::{Error, Result};
use crate::grid::{BusKind, DeviceKind, GridModel};
use crate::profiles::Profile;

/// A complex power injection at a bus, consumption positive.
#[derive(Debug, Clone, PartialEq)]
pub struct Injection {
    pub bus: String,
    pub power: Complex64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverSettings {
    /// Inner sweep voltage tolerance, per-unit.
    pub v_tolerance: f64,
    /// Inner sweep iteration cap.
    pub max_iterations: usize,
    /// Damping factor for the droop outer fixed point, in (0, 1].
    pub droop_lambda: f64,
    /// Outer loop power tolerance, per-unit.
    pub droop_tolerance: f64,
    /// Outer loop iteration cap.
    pub droop_max_iterations: usize,
    /// Slack setpoint magnitude, per-unit (angle 0).
    pub slack_voltage: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            v_tolerance: 1e-8,
            max_iterations: 100,
            droop_lambda: 0.5,
            droop_tolerance: 1e-7,
            droop_max_iterations: 60,
            slack_voltage: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PowerFlowResult {
    /// Per-bus complex voltage, aligned with `grid.buses`.
    pub voltages: Vec<Complex64>,
    pub iterations: usize,
    pub converged: bool,
    pub diagnostic: Option<String>,
}

/// Sweep order and impedances of a validated radial grid.
struct FeederTree {
    root: usize,
    /// Buses in breadth-first order from the root.
    order: Vec<usize>,
    parent: Vec<usize>,
    /// Line impedance between a bus and its parent (unused at the root).
    z_to_parent: Vec<Complex64>,
}

impl FeederTree {
    fn build(grid: &GridModel) -> Result<Self> {
        let n = grid.buses.len();
        let root = grid
            .slack_index()
            .ok_or_else(|| Error::Solver("grid has no slack bus".into()))?;
        let mut adj: Vec<Vec<(usize, Complex64)>> = vec![Vec::new(); n];
        for line in &grid.lines {
            let a = grid
                .bus_index(&line.from)
                .ok_or_else(|| Error::Solver(format!("line endpoint '{}' missing", line.from)))?;
            let b = grid
                .bus_index(&line.to)
                .ok_or_else(|| Error::Solver(format!("line endpoint '{}' missing", line.to)))?;
            let z = Complex64::new(line.r_pu, line.x_pu);
            adj[a].push((b, z));
            adj[b].push((a, z));
        }
        let mut order = Vec::with_capacity(n);
        let mut parent = vec![usize::MAX; n];
        let mut z_to_parent = vec![Complex64::new(0.0, 0.0); n];
        let mut visited = vec![false; n];
        visited[root] = true;
        order.push(root);
        let mut head = 0;
        while head < order.len() {
            let i = order[head];
            head += 1;
            for &(j, z) in &adj[i] {
                if !visited[j] {
                    visited[j] = true;
                    parent[j] = i;
                    z_to_parent[j] = z;
                    order.push(j);
                }
            }
        }
        if order.len() != n {
            return Err(Error::Solver(
                "grid is not connected; run validation first".into(),
            ));
        }
        Ok(Self {
            root,
            order,
            parent,
            z_to_parent,
        })
    }
}

/// Aggregate a list of injections into a per-bus power vector.
fn injection_vector(grid: &GridModel, injections: &[Injection]) -> Result<Vec<Complex64>> {
    let mut s = vec![Complex64::new(0.0, 0.0); grid.buses.len()];
    for inj in injections {
        let idx = grid
            .bus_index(&inj.bus)
            .ok_or_else(|| Error::Solver(format!("injection at unknown bus '{}'", inj.bus)))?;
        if !inj.power.re.is_finite() || !inj.power.im.is_finite() {
            return Err(Error::Solver(format!(
                "non-finite injection at bus '{}'",
                inj.bus
            )));
        }
        s[idx] += inj.power;
    }
    Ok(s)
}

/// Largest per-bus complex power mismatch of a voltage solution against the
/// specified injections (Kirchhoff residual). The slack is excluded.
pub fn kirchhoff_residual(grid: &GridModel, voltages: &[Complex64], injections: &[Injection]) -> Result<f64> {
    let s_spec = injection_vector(grid, injections)?;
    let n = grid.buses.len();
    let mut s_net = vec![Complex64::new(0.0, 0.0); n];
    for line in &grid.lines {
        let a = grid.bus_index(&line.from).unwrap();
        let b = grid.bus_index(&line.to).unwrap();
        let z = Complex64::new(line.r_pu, line.x_pu);
        if z.norm() == 0.0 {
            continue;
        }
        let i_ab = (voltages[a] - voltages[b]) / z;
        // Power entering each end, oriented into the bus.
        s_net[b] += voltages[b] * i_ab.conj();
        s_net[a] -= voltages[a] * i_ab.conj();
    }
    let mut worst = 0.0f64;
    for (idx, bus) in grid.buses.iter().enumerate() {
        if bus.kind == BusKind::Slack {
            continue;
        }
        // s_net is the power absorbed at the bus; it must match consumption.
        worst = worst.max((s_net[idx] - s_spec[idx]).norm());
    }
    Ok(worst)
}

fn sweep(
    tree: &FeederTree,
    s: &[Complex64],
    settings: &SolverSettings,
    voltages: &mut Vec<Complex64>,
) -> PowerFlowResult {
    let n = voltages.len();
    let slack = Complex64::new(settings.slack_voltage, 0.0);
    voltages.iter_mut().for_each(|v| *v = slack);
    let mut subtree_current = vec![Complex64::new(0.0, 0.0); n];

    for it in 1..=settings.max_iterations {
        // Backward: node currents plus child subtree currents, leaves first.
        for &i in &tree.order {
            subtree_current[i] = if i == tree.root {
                Complex64::new(0.0, 0.0)
            } else {
                (s[i] / voltages[i]).conj()
            };
        }
        for &i in tree.order.iter().rev() {
            if i != tree.root {
                let p = tree.parent[i];
                let c = subtree_current[i];
                subtree_current[p] += c;
            }
        }
        // Forward: root to leaves.
        let mut dv = 0.0f64;
        let mut finite = true;
        for &i in &tree.order {
            if i == tree.root {
                continue;
            }
            let v_new = voltages[tree.parent[i]] - tree.z_to_parent[i] * subtree_current[i];
            if !v_new.re.is_finite() || !v_new.im.is_finite() {
                finite = false;
                break;
            }
            dv = dv.max((v_new - voltages[i]).norm());
            voltages[i] = v_new;
        }
        if !finite {
            return PowerFlowResult {
                voltages: voltages.clone(),
                iterations: it,
                converged: false,
                diagnostic: Some("voltage collapse: non-finite intermediate".into()),
            };
        }
        if dv < settings.v_tolerance {
            return PowerFlowResult {
                voltages: voltages.clone(),
                iterations: it,
                converged: true,
                diagnostic: None,
            };
        }
    }
    PowerFlowResult {
        voltages: voltages.clone(),
        iterations: settings.max_iterations,
        converged: false,
        diagnostic: Some(format!(
            "no convergence within {} sweep iterations",
            settings.max_iterations
        )),
    }
}

/// Solve one load-flow snapshot for fixed injections.
pub fn solve_snapshot(
    grid: &GridModel,
    injections: &[Injection],
    settings: &SolverSettings,
) -> Result<PowerFlowResult> {
    let tree = FeederTree::build(grid)?;
    let s = injection_vector(grid, injections)?;
    let mut voltages = vec![Complex64::new(0.0, 0.0); grid.buses.len()];
    let mut result = sweep(&tree, &s, settings, &mut voltages);
    if result.converged {
        // The sweep fixed point satisfies Kirchhoff exactly; after the
        // voltage-delta stop the residual may still sit above the contract,
        // so polish with extra sweeps when needed.
        let mut residual = kirchhoff_residual(grid, &result.voltages, injections)?;
        let mut extra = 0;
        while residual >= 10.0 * settings.v_tolerance && extra < settings.max_iterations {
            let polish = sweep_once(&tree, &s, &mut voltages);
            if !polish {
                result.converged = false;
                result.diagnostic = Some("voltage collapse during polish".into());
                break;
            }
            result.iterations += 1;
            extra += 1;
            result.voltages.clone_from(&voltages);
            residual = kirchhoff_residual(grid, &result.voltages, injections)?;
        }
    }
    Ok(result)
}

/// One backward-forward pass; returns false on non-finite intermediates.
fn sweep_once(tree: &FeederTree, s: &[Complex64], voltages: &mut [Complex64]) -> bool {
    let n = voltages.len();
    let mut subtree_current = vec![Complex64::new(0.0, 0.0); n];
    for &i in &tree.order {
        subtree_current[i] = if i == tree.root {
            Complex64::new(0.0, 0.0)
        } else {
            (s[i] / voltages[i]).conj()
        };
    }
    for &i in tree.order.iter().rev() {
        if i != tree.root {
            let c = subtree_current[i];
            subtree_current[tree.parent[i]] += c;
        }
    }
    for &i in &tree.order {
        if i == tree.root {
            continue;
        }
        let v_new = voltages[tree.parent[i]] - tree.z_to_parent[i] * subtree_current[i];
        if !v_new.re.is_finite() || !v_new.im.is_finite() {
            return false;
        }
        voltages[i] = v_new;
    }
    true
}

/// A droop-capable injection: instantaneous rated magnitude, sign and the
/// resolved control curve. `curve: None` means constant power.
#[derive(Debug, Clone)]
pub struct DroopInjection {
    pub device_id: String,
    pub bus: String,
    pub sign: f64,
    pub rated_pu: f64,
    pub curve: Option<PiecewiseLinearCurve>,
}

/// Resolve the device/voltage fixed point: evaluate each device's factor
/// at the latest local voltage, damp the power update by `droop_lambda`,
/// re-solve, and stop when the largest power change drops below the droop
/// tolerance. Returns the final flow plus the resolved signed device
/// powers in input order.
pub fn solve_with_droop(
    grid: &GridModel,
    base_injections: &[Injection],
    devices: &[DroopInjection],
    settings: &SolverSettings,
) -> Result<(PowerFlowResult, Vec<f64>)> {
    let tree = FeederTree::build(grid)?;
    let s_base = injection_vector(grid, base_injections)?;
    let bus_of: Vec<usize> = devices
        .iter()
        .map(|d| {
            grid.bus_index(&d.bus)
                .ok_or_else(|| Error::Solver(format!("device '{}' at unknown bus '{}'", d.device_id, d.bus)))
        })
        .collect::<Result<_>>()?;

    let mut voltages = vec![Complex64::new(settings.slack_voltage, 0.0); grid.buses.len()];
    let factor = |d: &DroopInjection, u: f64| -> f64 {
        match &d.curve {
            Some(c) => curves::eval_curve(c, u),
            None => 1.0,
        }
    };
    let mut powers: Vec<f64> = devices
        .iter()
        .map(|d| d.sign * d.rated_pu * factor(d, settings.slack_voltage))
        .collect();

    let mut result = PowerFlowResult {
        voltages: voltages.clone(),
        iterations: 0,
        converged: devices.is_empty(),
        diagnostic: None,
    };
    let mut total_inner = 0;
    for _ in 1..=settings.droop_max_iterations {
        let mut s = s_base.clone();
        for (d, &p) in bus_of.iter().zip(powers.iter()) {
            s[*d] += Complex64::new(p, 0.0);
        }
        result = sweep(&tree, &s, settings, &mut voltages);
        total_inner += result.iterations;
        if !result.converged {
            result.iterations = total_inner;
            return Ok((result, powers));
        }
        let mut dp = 0.0f64;
        for (k, d) in devices.iter().enumerate() {
            let u = result.voltages[bus_of[k]].norm();
            let target = d.sign * d.rated_pu * factor(d, u);
            let updated = powers[k] + settings.droop_lambda * (target - powers[k]);
            dp = dp.max((updated - powers[k]).abs());
            powers[k] = updated;
        }
        if dp < settings.droop_tolerance {
            // Final solve so voltages and reported powers are consistent.
            let mut s = s_base.clone();
            for (d, &p) in bus_of.iter().zip(powers.iter()) {
                s[*d] += Complex64::new(p, 0.0);
            }
            result = sweep(&tree, &s, settings, &mut voltages);
            result.iterations += total_inner;
            return Ok((result, powers));
        }
    }
    result.converged = false;
    result.iterations = total_inner;
    result.diagnostic = Some(format!(
        "droop loop did not settle within {} outer iterations",
        settings.droop_max_iterations
    ));
    Ok((result, powers))
}

/// Substation measurement for one step: voltage, net drawn power and the
/// single-phase-equivalent apparent current |S|/V at the slack.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubstationRecord {
    pub v_pu: f64,
    pub p_pu: f64,
    pub q_pu: f64,
    pub i_pu: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesResult {
    pub step_minutes: u32,
    /// Per-bus voltage magnitudes, one series per bus id.
    pub bus_voltage: BTreeMap<String, Vec<f64>>,
    /// Per-device signed active power (consumption positive).
    pub device_p: BTreeMap<String, Vec<f64>>,
    /// Per-device reactive power (always zero at unity power factor).
    pub device_q: BTreeMap<String, Vec<f64>>,
    pub substation: Vec<SubstationRecord>,
}

impl TimeSeriesResult {
    pub fn len(&self) -> usize {
        self.substation.len()
    }

    pub fn is_empty(&self) -> bool {
        self.substation.is_empty()
    }
}

/// Which profile drives each bus load and each device.
#[derive(Debug, Clone, Default)]
pub struct ProfileAssignment {
    /// Household base load per bus id, consumption positive.
    pub bus_loads: BTreeMap<String, Profile>,
    /// Availability/demand factor per device id. Devices without a profile
    /// run at their full rated power every step.
    pub device_profiles: BTreeMap<String, Profile>,
}

/// Run one droop-resolved snapshot per step over the horizon
/// `[t_start, t_end)`. Absent bounds default to the full cover of the
/// shortest assigned profile.
pub fn simulate_timeseries(
    grid: &GridModel,
    assignment: &ProfileAssignment,
    t_start: Option<usize>,
    t_end: Option<usize>,
    step_minutes: u32,
    settings: &SolverSettings,
) -> Result<TimeSeriesResult> {
    let tree = FeederTree::build(grid)?;
    let profiles = assignment
        .bus_loads
        .values()
        .chain(assignment.device_profiles.values());
    let mut shortest = usize::MAX;
    for p in profiles {
        if p.step_minutes != step_minutes {
            return Err(Error::Solver(format!(
                "profile step {} min does not match simulation step {} min",
                p.step_minutes, step_minutes
            )));
        }
        shortest = shortest.min(p.len());
    }
    let start = t_start.unwrap_or(0);
    let end = match t_end {
        Some(t) => t,
        None if shortest != usize::MAX => shortest,
        None => {
            return Err(Error::Solver(
                "no profiles assigned and no explicit horizon".into(),
            ))
        }
    };
    if start >= end {
        return Err(Error::Solver(format!(
            "empty horizon: t_start {start} >= t_end {end}"
        )));
    }
    if shortest != usize::MAX && shortest < end {
        return Err(Error::Solver(format!(
            "profiles cover {shortest} steps, horizon needs {end}"
        )));
    }
    for bus in assignment.bus_loads.keys() {
        if grid.bus_index(bus).is_none() {
            return Err(Error::Solver(format!("load profile at unknown bus '{bus}'")));
        }
    }

    // Resolve each device's curve once.
    let mut droop_template = Vec::with_capacity(grid.devices.len());
    for device in &grid.devices {
        let curve = match device.kind {
            DeviceKind::Ev | DeviceKind::Pv => {
                let base = match &device.curve {
                    Some(c) => c.clone(),
                    None => curves::default_curve(device.kind)?,
                };
                Some(CurveVariant::resolve(&base, device.variant).curve)
            }
            DeviceKind::Bess | DeviceKind::Hp => None,
        };
        droop_template.push(DroopInjection {
            device_id: device.id.clone(),
            bus: device.bus.clone(),
            sign: device.kind.sign(),
            rated_pu: device.rated_pu,
            curve,
        });
    }

    let steps = end - start;
    let mut bus_voltage: BTreeMap<String, Vec<f64>> = grid
        .buses
        .iter()
        .map(|b| (b.id.clone(), Vec::with_capacity(steps)))
        .collect();
    let mut device_p: BTreeMap<String, Vec<f64>> = grid
        .devices
        .iter()
        .map(|d| (d.id.clone(), Vec::with_capacity(steps)))
        .collect();
    let mut substation = Vec::with_capacity(steps);

    let slack_id = &grid.buses[tree.root].id;
    let slack_lines: Vec<(usize, Complex64)> = grid
        .lines
        .iter()
        .filter_map(|l| {
            let z = Complex64::new(l.r_pu, l.x_pu);
            if &l.from == slack_id {
                Some((grid.bus_index(&l.to).unwrap(), z))
            } else if &l.to == slack_id {
                Some((grid.bus_index(&l.from).unwrap(), z))
            } else {
                None
            }
        })
        .collect();

    for t in start..end {
        let base: Vec<Injection> = assignment
            .bus_loads
            .iter()
            .map(|(bus, p)| Injection {
                bus: bus.clone(),
                power: Complex64::new(p.value(t), 0.0),
            })
            .collect();
        let mut droop = droop_template.clone();
        for d in &mut droop {
            if let Some(p) = assignment.device_profiles.get(&d.device_id) {
                d.rated_pu *= p.value(t);
            }
        }
        let (flow, powers) = solve_with_droop(grid, &base, &droop, settings)?;
        if !flow.converged {
            return Err(Error::Solver(format!(
                "step {t} did not converge: {}",
                flow.diagnostic.unwrap_or_default()
            )));
        }
        for (idx, bus) in grid.buses.iter().enumerate() {
            bus_voltage.get_mut(&bus.id).unwrap().push(flow.voltages[idx].norm());
        }
        for (device, &p) in grid.devices.iter().zip(powers.iter()) {
            device_p.get_mut(&device.id).unwrap().push(p);
        }
        let v_slack = flow.voltages[tree.root];
        let mut s_slack = Complex64::new(0.0, 0.0);
        for &(child, z) in &slack_lines {
            let i = (v_slack - flow.voltages[child]) / z;
            s_slack += v_slack * i.conj();
        }
        let v = v_slack.norm();
        substation.push(SubstationRecord {
            v_pu: v,
            p_pu: s_slack.re,
            q_pu: s_slack.im,
            i_pu: s_slack.norm() / v,
        });
    }

    let device_q = device_p
        .iter()
        .map(|(id, series)| (id.clone(), vec![0.0; series.len()]))
        .collect();
    Ok(TimeSeriesResult {
        step_minutes,
        bus_voltage,
        device_p,
        device_q,
        substation,
    })
}

/// Everything one scenario simulation needs; owned so jobs can move across
/// worker threads. The grid is shared read-only.
#[derive(Debug, Clone)]
pub struct SimulationJob {
    pub grid: Arc<GridModel>,
    pub assignment: ProfileAssignment,
    pub t_start: Option<usize>,
    pub t_end: Option<usize>,
    pub step_minutes: u32,
    pub settings: SolverSettings,
}

/// Run jobs on `worker_count` threads. Results come back in input order
/// and are bitwise independent of the worker count: every job owns its
/// seeds and no state is shared mutably. A failed job reports its own
/// error; the rest still complete.
pub fn run_parallel(jobs: &[SimulationJob], worker_count: usize) -> Vec<Result<TimeSeriesResult>> {
    let workers = worker_count.max(1).min(jobs.len().max(1));
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<TimeSeriesResult>>>> =
        Mutex::new((0..jobs.len()).map(|_| None).collect());

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let idx = next.fetch_add(1, Ordering::Relaxed);
                if idx >= jobs.len() {
                    break;
                }
                let job = &jobs[idx];
                let outcome = simulate_timeseries(
                    &job.grid,
                    &job.assignment,
                    job.t_start,
                    job.t_end,
                    job.step_minutes,
                    &job.settings,
                );
                slots.lock().unwrap()[idx] = Some(outcome);
            });
        }
    });

    slots
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|slot| slot.expect("every job index was processed"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curves::VariantKind;
    use crate::grid::{load_grid, Bus, Device, Line};
    use crate::profiles::{synth_ev, synth_household, Profile, ProfileKind};

    fn two_bus(r: f64, x: f64) -> GridModel {
        GridModel {
            name: "two".into(),
            base_mva: 0.4,
            buses: vec![
                Bus { id: "slack".into(), kind: BusKind::Slack, base_kv: 0.4 },
                Bus { id: "b1".into(), kind: BusKind::Pq, base_kv: 0.4 },
            ],
            lines: vec![Line { from: "slack".into(), to: "b1".into(), r_pu: r, x_pu: x }],
            devices: Vec::new(),
        }
    }

    fn load_at(bus: &str, p: f64) -> Injection {
        Injection { bus: bus.into(), power: Complex64::new(p, 0.0) }
    }

    #[test]
    fn zero_injections_give_flat_profile() {
        let grid = two_bus(0.01, 0.01);
        let res = solve_snapshot(&grid, &[], &SolverSettings::default()).unwrap();
        assert!(res.converged);
        assert_eq!(res.iterations, 1);
        for v in &res.voltages {
            assert_eq!(*v, Complex64::new(1.0, 0.0));
        }
    }

    #[test]
    fn two_bus_matches_analytic_fixed_point() {
        // z = 0.01 + j0.01, S = 0.1: |V2| = 0.998998496489339 from the
        // converged fixed-point iteration.
        let grid = two_bus(0.01, 0.01);
        let res = solve_snapshot(&grid, &[load_at("b1", 0.1)], &SolverSettings::default()).unwrap();
        assert!(res.converged);
        let v2 = res.voltages[1].norm();
        assert!((v2 - 0.998998496489339).abs() < 1e-9, "{v2}");
        assert!((v2 - 0.99900).abs() < 1e-5);
        // Slack stays pinned exactly.
        assert_eq!(res.voltages[0], Complex64::new(1.0, 0.0));
    }

    #[test]
    fn kirchhoff_residual_small_after_convergence() {
        let grid = crate::grid::random_feeder(11, 15);
        let injections: Vec<Injection> = grid
            .buses
            .iter()
            .skip(1)
            .enumerate()
            .map(|(i, b)| load_at(&b.id, 0.02 + 0.01 * (i % 5) as f64))
            .collect();
        let settings = SolverSettings::default();
        let res = solve_snapshot(&grid, &injections, &settings).unwrap();
        assert!(res.converged);
        let residual = kirchhoff_residual(&grid, &res.voltages, &injections).unwrap();
        assert!(residual < 10.0 * settings.v_tolerance, "residual {residual}");
    }

    #[test]
    fn collapse_reports_diagnostic() {
        let grid = two_bus(0.5, 0.5);
        let res = solve_snapshot(&grid, &[load_at("b1", 50.0)], &SolverSettings::default()).unwrap();
        assert!(!res.converged);
        assert!(res.diagnostic.is_some());
    }

    #[test]
    fn unknown_bus_is_an_error() {
        let grid = two_bus(0.01, 0.01);
        assert!(solve_snapshot(&grid, &[load_at("ghost", 0.1)], &SolverSettings::default()).is_err());
    }

    fn ev_droop(rated: f64, variant: VariantKind) -> DroopInjection {
        let base = curves::default_curve(DeviceKind::Ev).unwrap();
        DroopInjection {
            device_id: "ev".into(),
            bus: "b1".into(),
            sign: 1.0,
            rated_pu: rated,
            curve: Some(CurveVariant::resolve(&base, variant).curve),
        }
    }

    #[test]
    fn droop_in_flat_region_equals_constant_injection() {
        // Light load keeps u well above 0.95, so the device runs at rated.
        let grid = two_bus(0.01, 0.005);
        let settings = SolverSettings::default();
        let (res, powers) = solve_with_droop(
            &grid,
            &[load_at("b1", 0.05)],
            &[ev_droop(0.2, VariantKind::Correct)],
            &settings,
        )
        .unwrap();
        assert!(res.converged);
        assert!((powers[0] - 0.2).abs() < 1e-9, "{}", powers[0]);
        let reference = solve_snapshot(&grid, &[load_at("b1", 0.25)], &settings).unwrap();
        assert!((res.voltages[1] - reference.voltages[1]).norm() < 1e-6);
    }

    #[test]
    fn flat_curve_variant_equals_constant_injection() {
        let grid = two_bus(0.04, 0.02);
        let settings = SolverSettings::default();
        let (res, powers) = solve_with_droop(
            &grid,
            &[load_at("b1", 1.5)],
            &[ev_droop(0.3, VariantKind::Flat)],
            &settings,
        )
        .unwrap();
        assert!(res.converged);
        assert_eq!(powers[0], 0.3);
        let reference = solve_snapshot(&grid, &[load_at("b1", 1.8)], &settings).unwrap();
        assert!((res.voltages[1] - reference.voltages[1]).norm() < 1e-7);
    }

    #[test]
    fn inverted_consumes_more_on_depressed_feeder() {
        // Base load alone pushes u below 0.92 where the inverted curve
        // demands more than the correct one.
        let grid = two_bus(0.04, 0.02);
        let settings = SolverSettings::default();
        let base = [load_at("b1", 2.2)];
        let check = solve_snapshot(&grid, &base, &settings).unwrap();
        let u0 = check.voltages[1].norm();
        assert!(u0 < 0.925, "fixture not depressed enough: {u0}");

        let (res_c, p_correct) =
            solve_with_droop(&grid, &base, &[ev_droop(0.3, VariantKind::Correct)], &settings).unwrap();
        let (res_i, p_inverted) =
            solve_with_droop(&grid, &base, &[ev_droop(0.3, VariantKind::Inverted)], &settings).unwrap();
        assert!(res_c.converged && res_i.converged);
        assert!(
            p_inverted[0] > p_correct[0] + 0.05,
            "inverted {} vs correct {}",
            p_inverted[0],
            p_correct[0]
        );
    }

    fn flat_profile(step: u32, len: usize, value: f64) -> Profile {
        Profile { step_minutes: step, values: vec![value; len], kind: ProfileKind::External }
    }

    fn ev_grid() -> GridModel {
        let mut grid = two_bus(0.02, 0.01);
        grid.devices.push(Device {
            id: "ev_b1".into(),
            bus: "b1".into(),
            kind: DeviceKind::Ev,
            rated_pu: 0.25,
            variant: VariantKind::Correct,
            curve: None,
        });
        grid
    }

    #[test]
    fn one_day_yields_96_snapshots() {
        let grid = ev_grid();
        let assignment = ProfileAssignment {
            bus_loads: BTreeMap::from([("b1".to_string(), synth_household(1, 1, 15, 0.02).unwrap())]),
            device_profiles: BTreeMap::from([("ev_b1".to_string(), synth_ev(2, 1, 15).unwrap())]),
        };
        let res =
            simulate_timeseries(&grid, &assignment, None, None, 15, &SolverSettings::default()).unwrap();
        assert_eq!(res.len(), 96);
        assert_eq!(res.bus_voltage["b1"].len(), 96);
        assert_eq!(res.device_p["ev_b1"].len(), 96);
        assert!(res.device_q["ev_b1"].iter().all(|&q| q == 0.0));
        assert!(res.substation.iter().all(|r| r.v_pu == 1.0));
        // Power balance direction: households consume, so the feeder draws.
        assert!(res.substation.iter().all(|r| r.p_pu > 0.0));
        assert!(res.substation.iter().all(|r| (r.i_pu - (r.p_pu.powi(2) + r.q_pu.powi(2)).sqrt() / r.v_pu).abs() < 1e-12));
    }

    #[test]
    fn empty_horizon_is_an_error() {
        let grid = ev_grid();
        let assignment = ProfileAssignment {
            bus_loads: BTreeMap::from([("b1".to_string(), flat_profile(15, 96, 0.1))]),
            device_profiles: BTreeMap::new(),
        };
        let err = simulate_timeseries(&grid, &assignment, Some(5), Some(5), 15, &SolverSettings::default())
            .unwrap_err();
        assert!(err.to_string().contains("empty horizon"), "{err}");
    }

    #[test]
    fn step_mismatch_is_an_error() {
        let grid = ev_grid();
        let assignment = ProfileAssignment {
            bus_loads: BTreeMap::from([("b1".to_string(), flat_profile(60, 24, 0.1))]),
            device_profiles: BTreeMap::new(),
        };
        assert!(simulate_timeseries(&grid, &assignment, None, None, 15, &SolverSettings::default()).is_err());
    }

    #[test]
    fn horizon_beyond_profiles_is_an_error() {
        let grid = ev_grid();
        let assignment = ProfileAssignment {
            bus_loads: BTreeMap::from([("b1".to_string(), flat_profile(15, 96, 0.1))]),
            device_profiles: BTreeMap::new(),
        };
        assert!(
            simulate_timeseries(&grid, &assignment, Some(0), Some(200), 15, &SolverSettings::default())
                .is_err()
        );
    }

    fn job(seed: u64) -> SimulationJob {
        let grid = Arc::new(ev_grid());
        SimulationJob {
            grid,
            assignment: ProfileAssignment {
                bus_loads: BTreeMap::from([(
                    "b1".to_string(),
                    synth_household(seed, 1, 15, 0.05).unwrap(),
                )]),
                device_profiles: BTreeMap::from([(
                    "ev_b1".to_string(),
                    synth_ev(seed + 100, 1, 15).unwrap(),
                )]),
            },
            t_start: None,
            t_end: None,
            step_minutes: 15,
            settings: SolverSettings::default(),
        }
    }

    #[test]
    fn parallel_output_is_worker_count_invariant() {
        let jobs: Vec<SimulationJob> = (0..4).map(job).collect();
        let single: Vec<_> = run_parallel(&jobs, 1).into_iter().map(|r| r.unwrap()).collect();
        let many: Vec<_> = run_parallel(&jobs, 12).into_iter().map(|r| r.unwrap()).collect();
        assert_eq!(single, many);
    }

    #[test]
    fn parallel_empty_input() {
        assert!(run_parallel(&[], 4).is_empty());
    }

    #[test]
    fn parallel_reports_per_job_failures() {
        let mut bad = job(1);
        bad.t_start = Some(10);
        bad.t_end = Some(10);
        let jobs = vec![job(0), bad, job(2)];
        let results = run_parallel(&jobs, 2);
        assert!(results[0].is_ok());
        assert!(results[1].is_err());
        assert!(results[2].is_ok());
    }

    #[test]
    fn loading_downstream_bus_sags_the_chain() {
        // Chain slack - b1 - b2 - b3; raising the load at b3 weakly lowers
        // every downstream voltage.
        let doc = r#"{
            "name": "chain",
            "base_mva": 0.4,
            "buses": [
                {"id": "slack", "kind": "slack", "base_kv": 0.4},
                {"id": "b1", "kind": "pq", "base_kv": 0.4},
                {"id": "b2", "kind": "pq", "base_kv": 0.4},
                {"id": "b3", "kind": "pq", "base_kv": 0.4}
            ],
            "lines": [
                {"from": "slack", "to": "b1", "r_pu": 0.01, "x_pu": 0.005},
                {"from": "b1", "to": "b2", "r_pu": 0.01, "x_pu": 0.005},
                {"from": "b2", "to": "b3", "r_pu": 0.01, "x_pu": 0.005}
            ]
        }"#;
        let grid = load_grid(doc).unwrap();
        let settings = SolverSettings::default();
        let mut previous: Option<Vec<f64>> = None;
        for load in [0.0, 0.05, 0.1, 0.2, 0.4] {
            let res = solve_snapshot(&grid, &[load_at("b3", load)], &settings).unwrap();
            assert!(res.converged);
            let mags: Vec<f64> = res.voltages.iter().map(|v| v.norm()).collect();
            if let Some(prev) = previous {
                for (a, b) in prev.iter().zip(mags.iter()) {
                    assert!(*b <= *a + 1e-12, "voltage rose from {a} to {b}");
                }
            }
            previous = Some(mags);
        }
    }
}
