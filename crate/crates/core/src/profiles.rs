//! Deterministic synthetic load and generation time series, plus CSV
//! ingestion of externally measured profiles.
//!
//! The synthesis formulas are fixed substitutes with stated constants so
//! tests have closed-form expected values:
//!
//! * household: `0.2 + 0.3·exp(-((h-7.5)/1.5)^2) + 0.5·exp(-((h-19)/2)^2)`
//!   plus uniform noise, clamped at 0 (double peak, morning and evening);
//! * PV: `c_d · max(0, sin(pi·(h-6)/12))^1.2` with per-day clearness
//!   `c_d ~ U[0.3, 1.0]` (clear-sky bell);
//! * EV: one charging session per day, arrival `U[17:00, 21:00]` snapped
//!   to the step grid, 1.0 pu for a 2-4 h duration.
//!
//! `h` is the fractional hour of day. All draws come from a [`SplitMix64`]
//! stream seeded per profile, so outputs are bitwise reproducible.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::rng::SplitMix64;

pub const VALID_STEPS: [u32; 4] = [1, 5, 15, 60];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProfileKind {
    Household,
    Pv,
    Ev,
    External,
}

/// A per-unit power time series on a fixed step grid. Consumption positive
/// for loads, generation positive for PV.
#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    pub step_minutes: u32,
    pub values: Vec<f64>,
    pub kind: ProfileKind,
}

impl Profile {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value(&self, step: usize) -> f64 {
        self.values[step]
    }
}

fn check_step(step_minutes: u32) -> Result<usize> {
    if !VALID_STEPS.contains(&step_minutes) {
        return Err(Error::Profile(format!(
            "step size {step_minutes} min not in {VALID_STEPS:?}"
        )));
    }
    Ok((1440 / step_minutes) as usize)
}

fn hour_of_day(step: usize, step_minutes: u32, steps_per_day: usize) -> f64 {
    ((step % steps_per_day) as f64 * step_minutes as f64) / 60.0
}

/// Double-peak household consumption profile.
pub fn synth_household(seed: u64, days: usize, step_minutes: u32, noise_sigma: f64) -> Result<Profile> {
    if days == 0 {
        return Err(Error::Profile("days must be >= 1".into()));
    }
    let steps_per_day = check_step(step_minutes)?;
    let mut rng = SplitMix64::new(seed);
    let n = days * steps_per_day;
    let mut values = Vec::with_capacity(n);
    for t in 0..n {
        let h = hour_of_day(t, step_minutes, steps_per_day);
        let morning = 0.3 * (-((h - 7.5) / 1.5).powi(2)).exp();
        let evening = 0.5 * (-((h - 19.0) / 2.0).powi(2)).exp();
        let noisy = 0.2 + morning + evening + noise_sigma * rng.symmetric();
        values.push(noisy.max(0.0));
    }
    Ok(Profile {
        step_minutes,
        values,
        kind: ProfileKind::Household,
    })
}

/// Clear-sky-bell PV generation profile with per-day clearness.
pub fn synth_pv(seed: u64, days: usize, step_minutes: u32) -> Result<Profile> {
    if days == 0 {
        return Err(Error::Profile("days must be >= 1".into()));
    }
    let steps_per_day = check_step(step_minutes)?;
    let mut rng = SplitMix64::new(seed);
    let n = days * steps_per_day;
    let mut values = Vec::with_capacity(n);
    let mut clearness = 0.0;
    for t in 0..n {
        if t % steps_per_day == 0 {
            clearness = rng.uniform(0.3, 1.0);
        }
        let h = hour_of_day(t, step_minutes, steps_per_day);
        let bell = (std::f64::consts::PI * (h - 6.0) / 12.0).sin().max(0.0);
        values.push(clearness * bell.powf(1.2));
    }
    Ok(Profile {
        step_minutes,
        values,
        kind: ProfileKind::Pv,
    })
}

/// Session-based EV charging demand: one session per day, arrival uniform
/// in [17:00, 21:00] snapped down to the step grid, 1.0 pu for a 2-4 h
/// duration rounded to whole steps. A late session spills into the early
/// hours of the next day.
pub fn synth_ev(seed: u64, days: usize, step_minutes: u32) -> Result<Profile> {
    if days == 0 {
        return Err(Error::Profile("days must be >= 1".into()));
    }
    let steps_per_day = check_step(step_minutes)?;
    let mut rng = SplitMix64::new(seed);
    let n = days * steps_per_day;
    let mut values = vec![0.0; n];
    for day in 0..days {
        let arrival_min = rng.uniform(17.0 * 60.0, 21.0 * 60.0);
        let arrival_step = (arrival_min / step_minutes as f64).floor() as usize;
        let duration_min = rng.uniform(120.0, 240.0);
        let duration_steps = (duration_min / step_minutes as f64).round() as usize;
        let start = day * steps_per_day + arrival_step;
        for t in start..(start + duration_steps).min(n) {
            values[t] = 1.0;
        }
    }
    Ok(Profile {
        step_minutes,
        values,
        kind: ProfileKind::Ev,
    })
}

/// Read a profile CSV: first line `# step_minutes=<int>`, then one value
/// per line. An optional leading ISO-8601 timestamp column is ignored.
pub fn load_profile_csv(path: &Path) -> Result<Profile> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Profile(format!("cannot read {}: {e}", path.display())))?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::Profile(format!("{} is empty", path.display())))?;
    let step_minutes: i64 = header
        .strip_prefix("# step_minutes=")
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| {
            Error::Profile(format!(
                "{} line 1: expected '# step_minutes=<int>', got '{header}'",
                path.display()
            ))
        })?;
    if step_minutes <= 0 {
        return Err(Error::Profile(format!(
            "{}: step size must be positive, got {step_minutes}",
            path.display()
        )));
    }
    let mut values = Vec::new();
    for (idx, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        // Timestamps, when present, occupy the first comma-separated field.
        let field = line.rsplit(',').next().unwrap().trim();
        let value: f64 = field.parse().map_err(|_| {
            Error::Profile(format!(
                "{} line {}: cannot parse value '{field}'",
                path.display(),
                idx + 1
            ))
        })?;
        if !value.is_finite() {
            return Err(Error::Profile(format!(
                "{} line {}: missing or non-finite value",
                path.display(),
                idx + 1
            )));
        }
        values.push(value);
    }
    if values.is_empty() {
        return Err(Error::Profile(format!(
            "{} contains no values",
            path.display()
        )));
    }
    Ok(Profile {
        step_minutes: step_minutes as u32,
        values,
        kind: ProfileKind::External,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Write;

    #[test]
    fn household_evening_peak() {
        // h = 19 with zero noise: morning term is ~5e-26, so 0.2 + 0.5.
        let p = synth_household(1, 1, 60, 0.0).unwrap();
        let at_19 = p.values[19];
        assert!((at_19 - 0.7).abs() < 1e-12, "{at_19}");
    }

    #[test]
    fn household_day_length() {
        let p = synth_household(1, 1, 15, 0.05).unwrap();
        assert_eq!(p.len(), 96);
        let p = synth_household(1, 3, 5, 0.05).unwrap();
        assert_eq!(p.len(), 3 * 288);
    }

    #[test]
    fn household_deterministic() {
        let a = synth_household(9, 2, 15, 0.1).unwrap();
        let b = synth_household(9, 2, 15, 0.1).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn pv_shape() {
        let p = synth_pv(5, 1, 60, ).unwrap();
        // Night is exactly zero.
        assert_eq!(p.values[0], 0.0);
        assert_eq!(p.values[23], 0.0);
        // Noon is the day's clearness (bell = 1 at h = 12).
        let noon = p.values[12];
        assert!((0.3..=1.0).contains(&noon), "{noon}");
        // h = 9 relative to noon: sin(pi/4)^1.2.
        let expected_ratio = 0.6597539553864471;
        assert!((p.values[9] / noon - expected_ratio).abs() < 1e-12);
    }

    #[test]
    fn ev_sessions() {
        let p = synth_ev(3, 4, 15).unwrap();
        // Everything before 17:00 on day one is idle.
        for t in 0..(17 * 4) {
            assert_eq!(p.values[t], 0.0, "step {t}");
        }
        // One contiguous block of 8..16 steps (2-4 h) per day, value 1.0.
        let on: Vec<usize> = (0..96).filter(|&t| p.values[t] > 0.0).collect();
        assert!(!on.is_empty());
        assert!(on.len() >= 8 && on.len() <= 16, "{} steps", on.len());
        assert!(on.windows(2).all(|w| w[1] == w[0] + 1), "session not contiguous");
        assert_eq!(synth_ev(3, 4, 15).unwrap(), p);
    }

    #[test]
    fn ev_session_step_count_matches_duration() {
        // 180 minutes at 15-minute steps must occupy exactly 12 steps.
        assert_eq!((180.0f64 / 15.0).round() as usize, 12);
    }

    #[test]
    fn rejects_bad_steps_and_days() {
        assert!(synth_household(1, 1, 7, 0.0).is_err());
        assert!(synth_pv(1, 0, 15).is_err());
        assert!(synth_ev(1, 1, 13).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        let mut f = std::fs::File::create(&path).unwrap();
        writeln!(f, "# step_minutes=15").unwrap();
        for i in 0..96 {
            writeln!(f, "{}", i as f64 * 0.01).unwrap();
        }
        drop(f);
        let p = load_profile_csv(&path).unwrap();
        assert_eq!(p.len(), 96);
        assert_eq!(p.step_minutes, 15);
        assert_eq!(p.values[3], 0.03);
    }

    #[test]
    fn csv_with_timestamps() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        std::fs::write(
            &path,
            "# step_minutes=60\n2021-01-01T00:00:00Z,0.5\n2021-01-01T01:00:00Z,0.25\n",
        )
        .unwrap();
        let p = load_profile_csv(&path).unwrap();
        assert_eq!(p.values, vec![0.5, 0.25]);
    }

    #[test]
    fn csv_nan_names_row() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        std::fs::write(&path, "# step_minutes=15\n0.5\nNaN\n0.25\n").unwrap();
        let err = load_profile_csv(&path).unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
    }

    #[test]
    fn csv_rejects_empty_and_bad_step() {
        let dir = tempfile::tempdir().unwrap();
        let empty = dir.path().join("e.csv");
        std::fs::write(&empty, "").unwrap();
        assert!(load_profile_csv(&empty).is_err());

        let no_values = dir.path().join("n.csv");
        std::fs::write(&no_values, "# step_minutes=15\n").unwrap();
        assert!(load_profile_csv(&no_values).is_err());

        let bad_step = dir.path().join("b.csv");
        std::fs::write(&bad_step, "# step_minutes=0\n1.0\n").unwrap();
        assert!(load_profile_csv(&bad_step).is_err());
    }

    proptest! {
        #[test]
        fn synth_invariants(seed in 0u64..500, days in 1usize..5, step_idx in 0usize..4) {
            let step = VALID_STEPS[step_idx];
            let expected_len = days * (1440 / step) as usize;
            for p in [
                synth_household(seed, days, step, 0.1).unwrap(),
                synth_pv(seed, days, step).unwrap(),
                synth_ev(seed, days, step).unwrap(),
            ] {
                prop_assert_eq!(p.len(), expected_len);
                prop_assert!(p.values.iter().all(|v| v.is_finite() && *v >= 0.0));
            }
        }
    }
}
