//! Scenario construction, labelled window extraction at device connection
//! points and at the substation, and persistence of raw measurements and
//! assembled datasets.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::container::{read_f64_block, write_f64_block};
use crate::curves::VariantKind;
use crate::error::{Error, Result};
use crate::grid::{place_devices, BusKind, DeviceKind, GridModel};
use crate::learners::feature_summary;
use crate::powerflow::{
    run_parallel, ProfileAssignment, SimulationJob, SolverSettings, TimeSeriesResult,
};
use crate::profiles::{synth_ev, synth_household, synth_pv, Profile};
use crate::rng::{derive_seed, SplitMix64};

/// Which measured channel fills device-level samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Channel {
    P,
    V,
}

/// Everything dataset generation needs beyond the grids themselves.
#[derive(Debug, Clone)]
pub struct GenerationSpec {
    pub master_seed: u64,
    /// Device kind under scrutiny (EV or PV).
    pub device_kind: DeviceKind,
    pub percentages: BTreeMap<DeviceKind, f64>,
    pub rated_pu: BTreeMap<DeviceKind, f64>,
    /// 1 = flat curve, 2 = inverted curve.
    pub malfunction_choice: u8,
    pub sim_days: usize,
    pub step_minutes: u32,
    /// Scale applied to the synthetic household profile at every pq bus.
    pub household_pu: f64,
    pub noise_sigma: f64,
    pub t_start: Option<usize>,
    pub t_end: Option<usize>,
    pub settings: SolverSettings,
}

/// One simulation to run: a grid, the device under scrutiny and the curve
/// variant it executes. The correct/malfunctioning pair of a device shares
/// its profile seed so only the curve differs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: String,
    pub grid_name: String,
    pub placement_seed: u64,
    pub monitored_device: String,
    pub monitored_bus: String,
    pub variant: VariantKind,
    pub profile_seed: u64,
}

/// For each grid, pair scenarios per monitored device: one with the
/// correct variant and one with the configured malfunction.
pub fn build_scenarios(spec: &GenerationSpec, grids: &[GridModel]) -> Result<Vec<Scenario>> {
    if grids.is_empty() {
        return Err(Error::Data("scenario construction needs at least one grid".into()));
    }
    let malfunction = match spec.malfunction_choice {
        1 => VariantKind::Flat,
        2 => VariantKind::Inverted,
        other => {
            return Err(Error::Data(format!(
                "malfunction choice must be 1 or 2, got {other}"
            )))
        }
    };
    let mut scenarios = Vec::new();
    for grid in grids {
        let placement_seed = derive_seed(spec.master_seed, &format!("place_{}", grid.name));
        let placed = place_devices(grid, &spec.percentages, &spec.rated_pu, placement_seed)?;
        let monitored: Vec<_> = placed
            .devices
            .iter()
            .filter(|d| d.kind == spec.device_kind)
            .collect();
        if monitored.is_empty() {
            return Err(Error::Data(format!(
                "grid '{}' has no {} devices after placement",
                grid.name,
                spec.device_kind.as_str()
            )));
        }
        for device in monitored {
            let profile_seed =
                derive_seed(spec.master_seed, &format!("profiles_{}_{}", grid.name, device.id));
            for variant in [VariantKind::Correct, malfunction] {
                scenarios.push(Scenario {
                    id: format!("{}__{}__{:?}", grid.name, device.id, variant).to_lowercase(),
                    grid_name: grid.name.clone(),
                    placement_seed,
                    monitored_device: device.id.clone(),
                    monitored_bus: device.bus.clone(),
                    variant,
                    profile_seed,
                });
            }
        }
    }
    Ok(scenarios)
}

fn scale_profile(mut profile: Profile, factor: f64) -> Profile {
    for v in &mut profile.values {
        *v *= factor;
    }
    profile
}

/// Materialise the simulation job for one scenario: re-place devices with
/// the recorded seed, set the monitored device's variant and assign
/// profiles (households on every pq bus, behaviour profiles per device).
pub fn build_job(scenario: &Scenario, grid: &GridModel, spec: &GenerationSpec) -> Result<SimulationJob> {
    let mut placed = place_devices(grid, &spec.percentages, &spec.rated_pu, scenario.placement_seed)?;
    let device = placed
        .devices
        .iter_mut()
        .find(|d| d.id == scenario.monitored_device)
        .ok_or_else(|| {
            Error::Data(format!(
                "scenario '{}' monitors unknown device '{}'",
                scenario.id, scenario.monitored_device
            ))
        })?;
    device.variant = scenario.variant;

    let days = spec.sim_days;
    let step = spec.step_minutes;
    let mut bus_loads = BTreeMap::new();
    for bus in &placed.buses {
        if bus.kind == BusKind::Pq {
            let seed = derive_seed(scenario.profile_seed, &format!("load_{}", bus.id));
            bus_loads.insert(
                bus.id.clone(),
                scale_profile(
                    synth_household(seed, days, step, spec.noise_sigma)?,
                    spec.household_pu,
                ),
            );
        }
    }
    let mut device_profiles = BTreeMap::new();
    for d in &placed.devices {
        let seed = derive_seed(scenario.profile_seed, &format!("dev_{}", d.id));
        let profile = match d.kind {
            DeviceKind::Ev => Some(synth_ev(seed, days, step)?),
            DeviceKind::Pv => Some(synth_pv(seed, days, step)?),
            DeviceKind::Bess | DeviceKind::Hp => None,
        };
        if let Some(p) = profile {
            device_profiles.insert(d.id.clone(), p);
        }
    }

    Ok(SimulationJob {
        grid: Arc::new(placed),
        assignment: ProfileAssignment {
            bus_loads,
            device_profiles,
        },
        t_start: spec.t_start,
        t_end: spec.t_end,
        step_minutes: step,
        settings: spec.settings.clone(),
    })
}

/// Simulate all scenarios, `worker_count`-wide. Any failures abort with a
/// summary naming each failed scenario.
pub fn run_scenarios(
    scenarios: &[Scenario],
    grids: &[GridModel],
    spec: &GenerationSpec,
    worker_count: usize,
) -> Result<Vec<(Scenario, TimeSeriesResult)>> {
    let by_name: BTreeMap<&str, &GridModel> =
        grids.iter().map(|g| (g.name.as_str(), g)).collect();
    let jobs: Vec<SimulationJob> = scenarios
        .iter()
        .map(|s| {
            let grid = by_name.get(s.grid_name.as_str()).ok_or_else(|| {
                Error::Data(format!("scenario '{}' references unknown grid '{}'", s.id, s.grid_name))
            })?;
            build_job(s, grid, spec)
        })
        .collect::<Result<_>>()?;

    let outcomes = run_parallel(&jobs, worker_count);
    let mut failures = Vec::new();
    let mut results = Vec::with_capacity(outcomes.len());
    for (scenario, outcome) in scenarios.iter().zip(outcomes) {
        match outcome {
            Ok(r) => results.push((scenario.clone(), r)),
            Err(e) => failures.push(format!("{}: {e}", scenario.id)),
        }
    }
    if !failures.is_empty() {
        return Err(Error::Data(format!(
            "{} of {} scenarios failed: {}",
            failures.len(),
            scenarios.len(),
            failures.join("; ")
        )));
    }
    Ok(results)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub grid: String,
    pub device: String,
    pub window_start: usize,
}

/// One fixed-length labelled measurement window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub values: Vec<f64>,
    pub label: u8,
    pub provenance: Provenance,
}

/// Cut non-overlapping windows of `sample_length` from the monitored
/// device's series (active power or connection-point voltage); the
/// trailing partial window is discarded.
pub fn extract_samples(
    result: &TimeSeriesResult,
    scenario: &Scenario,
    sample_length: usize,
    channel: Channel,
) -> Result<Vec<Sample>> {
    let series = match channel {
        Channel::P => result.device_p.get(&scenario.monitored_device).ok_or_else(|| {
            Error::Data(format!(
                "no power series for device '{}'",
                scenario.monitored_device
            ))
        })?,
        Channel::V => result.bus_voltage.get(&scenario.monitored_bus).ok_or_else(|| {
            Error::Data(format!("no voltage series for bus '{}'", scenario.monitored_bus))
        })?,
    };
    if series.len() < sample_length {
        return Err(Error::Data(format!(
            "series of length {} is shorter than one window of {sample_length}",
            series.len()
        )));
    }
    let label = scenario.variant.label();
    Ok(series
        .chunks_exact(sample_length)
        .enumerate()
        .map(|(w, chunk)| Sample {
            values: chunk.to_vec(),
            label,
            provenance: Provenance {
                grid: scenario.grid_name.clone(),
                device: scenario.monitored_device.clone(),
                window_start: w * sample_length,
            },
        })
        .collect())
}

/// Per-position z-score statistics, stored so test data is scaled with
/// training statistics verbatim.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub sample_length: usize,
    pub number_of_samples: usize,
    pub number_of_grids: usize,
    pub device_kind: DeviceKind,
    pub channel: Channel,
    pub malfunction_choice: u8,
    pub scaling: Option<ScalingStats>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub meta: DatasetMeta,
}

impl Dataset {
    pub fn labels(&self) -> Vec<u8> {
        self.samples.iter().map(|s| s.label).collect()
    }

    pub fn windows(&self) -> Vec<Vec<f64>> {
        self.samples.iter().map(|s| s.values.clone()).collect()
    }
}

/// Draw a strictly class-balanced dataset of `number_of_samples` windows:
/// a seeded shuffle per class pool, truncated to half the request each,
/// then a seeded shuffle of the combined order.
pub fn assemble_dataset(
    samples: Vec<Sample>,
    number_of_samples: usize,
    seed: u64,
    meta: DatasetMeta,
) -> Result<Dataset> {
    if number_of_samples == 0 || number_of_samples % 2 != 0 {
        return Err(Error::Data(format!(
            "strict 50/50 balance needs a positive even sample count, got {number_of_samples}"
        )));
    }
    let per_class = number_of_samples / 2;
    let mut pools: [Vec<Sample>; 2] = [Vec::new(), Vec::new()];
    for s in samples {
        pools[(s.label > 0) as usize].push(s);
    }
    if pools[0].len() < per_class || pools[1].len() < per_class {
        return Err(Error::Data(format!(
            "need {per_class} samples per class, have {} correct and {} malfunctioning",
            pools[0].len(),
            pools[1].len()
        )));
    }
    let mut combined = Vec::with_capacity(number_of_samples);
    for (class, pool) in pools.iter_mut().enumerate() {
        let mut rng = SplitMix64::new(derive_seed(seed, &format!("class_{class}")));
        rng.shuffle(pool);
        combined.extend(pool.drain(..per_class));
    }
    let mut rng = SplitMix64::new(derive_seed(seed, "combined"));
    rng.shuffle(&mut combined);

    let mut meta = meta;
    meta.number_of_samples = number_of_samples;
    Ok(Dataset {
        samples: combined,
        meta,
    })
}

/// Z-score every window position using statistics from the training rows
/// only. Positions with a training std below 1e-12 pass through as zeros.
pub fn scale(dataset: &Dataset, train_indices: &[usize]) -> Result<Dataset> {
    if train_indices.is_empty() {
        return Err(Error::Data("scaling needs a non-empty training set".into()));
    }
    let len = dataset.meta.sample_length;
    let n = train_indices.len() as f64;
    let mut mean = vec![0.0f64; len];
    for &i in train_indices {
        for (m, v) in mean.iter_mut().zip(&dataset.samples[i].values) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut std = vec![0.0f64; len];
    for &i in train_indices {
        for (s, (v, m)) in std.iter_mut().zip(dataset.samples[i].values.iter().zip(&mean)) {
            *s += (v - m) * (v - m);
        }
    }
    std.iter_mut().for_each(|s| *s = (*s / n).sqrt());

    let stats = ScalingStats { mean, std };
    let samples = dataset
        .samples
        .iter()
        .map(|s| Sample {
            values: apply_scaling(&s.values, &stats),
            label: s.label,
            provenance: s.provenance.clone(),
        })
        .collect();
    let mut meta = dataset.meta.clone();
    meta.scaling = Some(stats);
    Ok(Dataset { samples, meta })
}

/// Apply stored z-score statistics to one window.
pub fn apply_scaling(values: &[f64], stats: &ScalingStats) -> Vec<f64> {
    values
        .iter()
        .zip(stats.mean.iter().zip(&stats.std))
        .map(|(v, (m, s))| if *s < 1e-12 { 0.0 } else { (v - m) / s })
        .collect()
}

pub const RAW_CSV_HEADER: &str = "scenario_id,grid,device_id,bus_id,step,v_pu,p_pu,q_pu,label";
pub const SUBSTATION_CSV_HEADER: &str = "scenario_id,step,v_pu,p_pu,q_pu,i_pu,label";

/// Raw measurements at the monitored device's connection point, one row
/// per step per scenario. Floats print in shortest round-trip form, so a
/// save/load cycle is bit-exact.
pub fn save_raw(results: &[(Scenario, TimeSeriesResult)], path: &Path) -> Result<()> {
    let mut out = String::from(RAW_CSV_HEADER);
    out.push('\n');
    for (scenario, result) in results {
        let v = &result.bus_voltage[&scenario.monitored_bus];
        let p = &result.device_p[&scenario.monitored_device];
        let q = &result.device_q[&scenario.monitored_device];
        let label = scenario.variant.label();
        for step in 0..result.len() {
            writeln!(
                out,
                "{},{},{},{},{step},{},{},{},{label}",
                scenario.id,
                scenario.grid_name,
                scenario.monitored_device,
                scenario.monitored_bus,
                v[step],
                p[step],
                q[step]
            )
            .expect("string writes cannot fail");
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawRecord {
    pub scenario_id: String,
    pub grid: String,
    pub device_id: String,
    pub bus_id: String,
    pub step: usize,
    pub v_pu: f64,
    pub p_pu: f64,
    pub q_pu: f64,
    pub label: u8,
}

pub fn load_raw(path: &Path) -> Result<Vec<RawRecord>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == RAW_CSV_HEADER => {}
        other => {
            return Err(Error::Data(format!(
                "raw CSV header mismatch: {:?}",
                other.map(|(_, h)| h)
            )))
        }
    }
    let mut records = Vec::new();
    for (idx, line) in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 9 {
            return Err(Error::Data(format!(
                "line {}: expected 9 columns, found {}",
                idx + 1,
                fields.len()
            )));
        }
        let parse_f = |s: &str, what: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| Error::Data(format!("line {}: bad {what} '{s}'", idx + 1)))
        };
        records.push(RawRecord {
            scenario_id: fields[0].into(),
            grid: fields[1].into(),
            device_id: fields[2].into(),
            bus_id: fields[3].into(),
            step: fields[4]
                .parse()
                .map_err(|_| Error::Data(format!("line {}: bad step '{}'", idx + 1, fields[4])))?,
            v_pu: parse_f(fields[5], "v_pu")?,
            p_pu: parse_f(fields[6], "p_pu")?,
            q_pu: parse_f(fields[7], "q_pu")?,
            label: fields[8]
                .parse()
                .map_err(|_| Error::Data(format!("line {}: bad label '{}'", idx + 1, fields[8])))?,
        });
    }
    Ok(records)
}

/// Substation aggregate per step per scenario.
pub fn save_substation(results: &[(Scenario, TimeSeriesResult)], path: &Path) -> Result<()> {
    let mut out = String::from(SUBSTATION_CSV_HEADER);
    out.push('\n');
    for (scenario, result) in results {
        let label = scenario.variant.label();
        for (step, rec) in result.substation.iter().enumerate() {
            writeln!(
                out,
                "{},{step},{},{},{},{},{label}",
                scenario.id, rec.v_pu, rec.p_pu, rec.q_pu, rec.i_pu
            )
            .expect("string writes cannot fail");
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct DatasetManifest {
    version: u32,
    sample_length: usize,
    number_of_samples: usize,
    number_of_grids: usize,
    device_kind: DeviceKind,
    channel: Channel,
    malfunction_choice: u8,
    scaling: Option<ScalingStats>,
    labels: Vec<u8>,
    provenance: Vec<Provenance>,
}

/// Persist as `<name>.manifest.json` plus `<name>.f64` (row-major
/// little-endian values).
pub fn save_dataset(dataset: &Dataset, dir: &Path, name: &str) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let manifest = DatasetManifest {
        version: 1,
        sample_length: dataset.meta.sample_length,
        number_of_samples: dataset.samples.len(),
        number_of_grids: dataset.meta.number_of_grids,
        device_kind: dataset.meta.device_kind,
        channel: dataset.meta.channel,
        malfunction_choice: dataset.meta.malfunction_choice,
        scaling: dataset.meta.scaling.clone(),
        labels: dataset.labels(),
        provenance: dataset.samples.iter().map(|s| s.provenance.clone()).collect(),
    };
    std::fs::write(
        dir.join(format!("{name}.manifest.json")),
        serde_json::to_string(&manifest)?,
    )?;
    let mut block = Vec::with_capacity(dataset.samples.len() * dataset.meta.sample_length);
    for s in &dataset.samples {
        block.extend_from_slice(&s.values);
    }
    write_f64_block(&dir.join(format!("{name}.f64")), &block)
}

pub fn load_dataset(dir: &Path, name: &str) -> Result<Dataset> {
    let manifest: DatasetManifest = serde_json::from_str(&std::fs::read_to_string(
        dir.join(format!("{name}.manifest.json")),
    )?)?;
    if manifest.version != 1 {
        return Err(Error::Data(format!(
            "unsupported dataset container version {}",
            manifest.version
        )));
    }
    if manifest.labels.len() != manifest.number_of_samples
        || manifest.provenance.len() != manifest.number_of_samples
    {
        return Err(Error::Data(format!(
            "manifest counts disagree: {} samples, {} labels, {} provenance entries",
            manifest.number_of_samples,
            manifest.labels.len(),
            manifest.provenance.len()
        )));
    }
    let block = read_f64_block(
        &dir.join(format!("{name}.f64")),
        manifest.number_of_samples * manifest.sample_length,
    )?;
    let samples = manifest
        .labels
        .iter()
        .zip(manifest.provenance)
        .enumerate()
        .map(|(i, (&label, provenance))| Sample {
            values: block[i * manifest.sample_length..(i + 1) * manifest.sample_length].to_vec(),
            label,
            provenance,
        })
        .collect();
    Ok(Dataset {
        samples,
        meta: DatasetMeta {
            sample_length: manifest.sample_length,
            number_of_samples: manifest.number_of_samples,
            number_of_grids: manifest.number_of_grids,
            device_kind: manifest.device_kind,
            channel: manifest.channel,
            malfunction_choice: manifest.malfunction_choice,
            scaling: manifest.scaling,
        },
    })
}

/// Labelled per-window summary features of the substation channels
/// {V, P, Q, I}: five statistics per channel, twenty features per window.
#[derive(Debug, Clone, PartialEq)]
pub struct SubstationDataset {
    pub window_length: usize,
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<u8>,
    pub scenario_ids: Vec<String>,
}

pub fn substation_windows(
    results: &[(Scenario, TimeSeriesResult)],
    window_length: usize,
) -> Result<SubstationDataset> {
    if window_length < 2 {
        return Err(Error::Data("substation windows need length >= 2".into()));
    }
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut scenario_ids = Vec::new();
    for (scenario, result) in results {
        let n = result.substation.len();
        if n < window_length {
            return Err(Error::Data(format!(
                "scenario '{}' has {n} substation steps, window needs {window_length}",
                scenario.id
            )));
        }
        let label = scenario.variant.label();
        for start in (0..=(n - window_length)).step_by(window_length) {
            if start + window_length > n {
                break;
            }
            let slice = &result.substation[start..start + window_length];
            let mut row = Vec::with_capacity(20);
            for channel in 0..4 {
                let series: Vec<f64> = slice
                    .iter()
                    .map(|r| match channel {
                        0 => r.v_pu,
                        1 => r.p_pu,
                        2 => r.q_pu,
                        _ => r.i_pu,
                    })
                    .collect();
                row.extend_from_slice(&feature_summary(&series)?);
            }
            features.push(row);
            labels.push(label);
            scenario_ids.push(scenario.id.clone());
        }
    }
    Ok(SubstationDataset {
        window_length,
        features,
        labels,
        scenario_ids,
    })
}

/// Pearson correlation of device power and local voltage over the steps
/// where the device is active (|p| above 1e-9). Idle periods carry no
/// curve information and would otherwise drown the signal, since charging
/// sessions coincide with the evening voltage dip. Returns 0 when fewer
/// than two steps are active or either active-step variance vanishes.
pub fn active_step_pv_correlation(p: &[f64], v: &[f64]) -> f64 {
    let pairs: Vec<(f64, f64)> = p
        .iter()
        .zip(v)
        .filter(|(p, _)| p.abs() > 1e-9)
        .map(|(p, v)| (*p, *v))
        .collect();
    if pairs.len() < 2 {
        return 0.0;
    }
    let n = pairs.len() as f64;
    let mp = pairs.iter().map(|(p, _)| p).sum::<f64>() / n;
    let mv = pairs.iter().map(|(_, v)| v).sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_p = 0.0;
    let mut var_v = 0.0;
    for (p, v) in &pairs {
        cov += (p - mp) * (v - mv);
        var_p += (p - mp) * (p - mp);
        var_v += (v - mv) * (v - mv);
    }
    if var_p <= 0.0 || var_v <= 0.0 {
        return 0.0;
    }
    cov / (var_p.sqrt() * var_v.sqrt())
}

/// Window-level oracle for the correct-vs-inverted distinction: a correct
/// droop moves power with voltage (positive correlation over active
/// steps), an inverted one against it.
pub fn corr_sign_label(p_window: &[f64], v_window: &[f64]) -> u8 {
    u8::from(active_step_pv_correlation(p_window, v_window) < 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::random_feeder;
    use crate::powerflow::SubstationRecord;

    fn spec() -> GenerationSpec {
        GenerationSpec {
            master_seed: 11,
            device_kind: DeviceKind::Ev,
            percentages: BTreeMap::from([(DeviceKind::Ev, 25.0)]),
            rated_pu: BTreeMap::from([(DeviceKind::Ev, 0.25)]),
            malfunction_choice: 2,
            sim_days: 1,
            step_minutes: 15,
            household_pu: 0.3,
            noise_sigma: 0.02,
            t_start: None,
            t_end: None,
            settings: SolverSettings::default(),
        }
    }

    #[test]
    fn scenario_pairing_and_determinism() {
        let grids = vec![random_feeder(1, 21), random_feeder(2, 13)];
        let scenarios = build_scenarios(&spec(), &grids).unwrap();
        // 25% of 20 pq buses = 5 devices, 25% of 12 = 3; each paired.
        assert_eq!(scenarios.len(), 2 * (5 + 3));
        let correct = scenarios.iter().filter(|s| s.variant == VariantKind::Correct).count();
        assert_eq!(correct, 8);
        assert_eq!(build_scenarios(&spec(), &grids).unwrap(), scenarios);
        // The pair shares its profile seed.
        assert_eq!(scenarios[0].profile_seed, scenarios[1].profile_seed);
        assert_eq!(scenarios[0].monitored_device, scenarios[1].monitored_device);
    }

    #[test]
    fn zero_eligible_devices_is_an_error() {
        let grids = vec![random_feeder(1, 5)];
        let mut s = spec();
        s.percentages.insert(DeviceKind::Ev, 0.0);
        assert!(build_scenarios(&s, &grids).is_err());
    }

    fn synthetic_result(steps: usize, device: &str, bus: &str) -> TimeSeriesResult {
        let p: Vec<f64> = (0..steps).map(|t| (t % 7) as f64 * 0.01).collect();
        let v: Vec<f64> = (0..steps).map(|t| 1.0 - (t % 5) as f64 * 0.001).collect();
        TimeSeriesResult {
            step_minutes: 15,
            bus_voltage: BTreeMap::from([(bus.to_string(), v)]),
            device_p: BTreeMap::from([(device.to_string(), p.clone())]),
            device_q: BTreeMap::from([(device.to_string(), vec![0.0; steps])]),
            substation: (0..steps)
                .map(|t| SubstationRecord {
                    v_pu: 1.0,
                    p_pu: p[t],
                    q_pu: 0.0,
                    i_pu: p[t],
                })
                .collect(),
        }
    }

    fn test_scenario(variant: VariantKind) -> Scenario {
        Scenario {
            id: format!("test__{variant:?}").to_lowercase(),
            grid_name: "g".into(),
            placement_seed: 1,
            monitored_device: "ev_b1".into(),
            monitored_bus: "b1".into(),
            variant,
            profile_seed: 2,
        }
    }

    #[test]
    fn window_arithmetic() {
        // A full 15-minute year cut into week-long windows: 35040 / 672 = 52.
        let result = synthetic_result(35040, "ev_b1", "b1");
        let samples =
            extract_samples(&result, &test_scenario(VariantKind::Correct), 672, Channel::P).unwrap();
        assert_eq!(samples.len(), 52);
        assert!(samples.iter().all(|s| s.values.len() == 672));
        assert!(samples.iter().all(|s| s.label == 0));
        assert_eq!(samples[1].provenance.window_start, 672);
    }

    #[test]
    fn trailing_partial_window_is_discarded() {
        let result = synthetic_result(1000, "ev_b1", "b1");
        let samples =
            extract_samples(&result, &test_scenario(VariantKind::Inverted), 672, Channel::V).unwrap();
        assert_eq!(samples.len(), 1);
        assert!(samples.iter().all(|s| s.label == 1));
    }

    #[test]
    fn short_series_is_an_error() {
        let result = synthetic_result(671, "ev_b1", "b1");
        assert!(extract_samples(&result, &test_scenario(VariantKind::Correct), 672, Channel::P).is_err());
    }

    fn labelled_samples(zeros: usize, ones: usize) -> Vec<Sample> {
        let mut out = Vec::new();
        for i in 0..zeros + ones {
            out.push(Sample {
                values: vec![i as f64; 4],
                label: u8::from(i >= zeros),
                provenance: Provenance {
                    grid: "g".into(),
                    device: format!("d{i}"),
                    window_start: 0,
                },
            });
        }
        out
    }

    fn meta() -> DatasetMeta {
        DatasetMeta {
            sample_length: 4,
            number_of_samples: 0,
            number_of_grids: 1,
            device_kind: DeviceKind::Ev,
            channel: Channel::P,
            malfunction_choice: 2,
            scaling: None,
        }
    }

    #[test]
    fn assembly_is_balanced_and_seeded() {
        let dataset = assemble_dataset(labelled_samples(30, 20), 24, 9, meta()).unwrap();
        assert_eq!(dataset.samples.len(), 24);
        let ones = dataset.samples.iter().filter(|s| s.label == 1).count();
        assert_eq!(ones, 12);
        let again = assemble_dataset(labelled_samples(30, 20), 24, 9, meta()).unwrap();
        assert_eq!(dataset, again);
        let other = assemble_dataset(labelled_samples(30, 20), 24, 10, meta()).unwrap();
        assert_ne!(dataset, other);
    }

    #[test]
    fn insufficiency_reports_counts() {
        let err = assemble_dataset(labelled_samples(4, 4), 10, 1, meta()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("4 correct") && msg.contains("4 malfunctioning"), "{msg}");
        assert!(assemble_dataset(labelled_samples(4, 4), 7, 1, meta()).is_err());
    }

    #[test]
    fn scaling_uses_train_statistics_only() {
        // Train rows constant in position 0 (zero-variance guard) and
        // asymmetric against the test row in position 1.
        let samples = vec![
            Sample { values: vec![5.0, 0.0, 1.0], label: 0, provenance: Provenance { grid: "g".into(), device: "a".into(), window_start: 0 } },
            Sample { values: vec![5.0, 2.0, 3.0], label: 1, provenance: Provenance { grid: "g".into(), device: "b".into(), window_start: 0 } },
            Sample { values: vec![9.0, 100.0, 5.0], label: 0, provenance: Provenance { grid: "g".into(), device: "c".into(), window_start: 0 } },
        ];
        let dataset = Dataset {
            samples,
            meta: DatasetMeta { sample_length: 3, ..meta() },
        };
        let scaled = scale(&dataset, &[0, 1]).unwrap();
        // Zero-variance position scales to zero everywhere.
        assert_eq!(scaled.samples[0].values[0], 0.0);
        assert_eq!(scaled.samples[2].values[0], 0.0);
        // Training mean per position is ~0.
        for pos in 1..3 {
            let m = (scaled.samples[0].values[pos] + scaled.samples[1].values[pos]) / 2.0;
            assert!(m.abs() < 1e-10);
        }
        // The test row is scaled with TRAIN statistics: (100 - 1) / 1 = 99.
        assert!((scaled.samples[2].values[1] - 99.0).abs() < 1e-9);
        let stats = scaled.meta.scaling.as_ref().unwrap();
        assert_eq!(stats.mean[1], 1.0);
        assert_eq!(stats.std[1], 1.0);
    }

    #[test]
    fn raw_csv_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("raw.csv");
        let scenario = test_scenario(VariantKind::Correct);
        let result = synthetic_result(10, "ev_b1", "b1");
        save_raw(&[(scenario.clone(), result.clone())], &path).unwrap();

        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with(RAW_CSV_HEADER));
        let records = load_raw(&path).unwrap();
        assert_eq!(records.len(), 10);
        assert_eq!(records[3].step, 3);
        assert_eq!(records[3].p_pu, result.device_p["ev_b1"][3]);

        // A second save/load cycle is byte-identical.
        let path2 = dir.path().join("raw2.csv");
        save_raw(&[(scenario, result)], &path2).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());

        // Missing column names the line.
        let mut broken: Vec<String> = text.lines().map(String::from).collect();
        broken[4] = "a,b,c".into();
        std::fs::write(&path, broken.join("\n")).unwrap();
        let err = load_raw(&path).unwrap_err();
        assert!(err.to_string().contains("line 5"), "{err}");
    }

    #[test]
    fn dataset_container_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let dataset = assemble_dataset(labelled_samples(10, 10), 16, 3, meta()).unwrap();
        save_dataset(&dataset, dir.path(), "ds").unwrap();
        let back = load_dataset(dir.path(), "ds").unwrap();
        assert_eq!(dataset, back);
    }

    #[test]
    fn truncated_block_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let dataset = assemble_dataset(labelled_samples(10, 10), 16, 3, meta()).unwrap();
        save_dataset(&dataset, dir.path(), "ds").unwrap();
        let block_path = dir.path().join("ds.f64");
        let bytes = std::fs::read(&block_path).unwrap();
        std::fs::write(&block_path, &bytes[..bytes.len() - 8]).unwrap();
        assert!(load_dataset(dir.path(), "ds").is_err());
    }

    #[test]
    fn empty_dataset_container_is_valid() {
        let dir = tempfile::tempdir().unwrap();
        let dataset = Dataset { samples: Vec::new(), meta: meta() };
        save_dataset(&dataset, dir.path(), "empty").unwrap();
        let back = load_dataset(dir.path(), "empty").unwrap();
        assert!(back.samples.is_empty());
    }

    #[test]
    fn substation_windows_shape() {
        let scenario = test_scenario(VariantKind::Inverted);
        let result = synthetic_result(100, "ev_b1", "b1");
        let ds = substation_windows(&[(scenario, result)], 30).unwrap();
        assert_eq!(ds.features.len(), 3); // floor(100 / 30)
        assert!(ds.features.iter().all(|f| f.len() == 20));
        assert!(ds.labels.iter().all(|&l| l == 1));
    }

    #[test]
    fn correlation_ignores_idle_steps() {
        // Device active in the second half only; within the active part p
        // follows v exactly. The idle half would flip the sign if counted.
        let v: Vec<f64> = (0..40).map(|t| 1.0 - 0.001 * (t % 7) as f64).collect();
        let mut p = vec![0.0; 40];
        for t in 20..40 {
            p[t] = (v[t] - 0.9) * 2.0;
        }
        assert!(active_step_pv_correlation(&p, &v) > 0.999);
        assert_eq!(corr_sign_label(&p, &v), 0);
        // Inverted relation flips the sign.
        for t in 20..40 {
            p[t] = (1.1 - v[t]) * 2.0;
        }
        assert!(active_step_pv_correlation(&p, &v) < -0.999);
        assert_eq!(corr_sign_label(&p, &v), 1);
        // All idle: correlation 0 by convention.
        assert_eq!(active_step_pv_correlation(&vec![0.0; 40], &v), 0.0);
    }

    #[test]
    fn save_substation_has_exact_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub.csv");
        let scenario = test_scenario(VariantKind::Correct);
        save_substation(&[(scenario, synthetic_result(5, "ev_b1", "b1"))], &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with(SUBSTATION_CSV_HEADER));
        assert_eq!(text.lines().count(), 6);
    }
}
