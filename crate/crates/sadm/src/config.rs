//! Serializable run configuration embedded in every report.

use sadm_core::ScheduleConfig;
use serde::{Deserialize, Serialize};

/// Serializable mirror of [`ScheduleConfig`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSettings {
    pub total_steps: usize,
    pub attenuation_ratio: f64,
    pub b_sq_start: f64,
    pub b_sq_end: f64,
    pub degenerate_ddpm: bool,
}

impl From<ScheduleConfig> for ScheduleSettings {
    fn from(c: ScheduleConfig) -> Self {
        Self {
            total_steps: c.total_steps,
            attenuation_ratio: c.attenuation_ratio,
            b_sq_start: c.b_sq_start,
            b_sq_end: c.b_sq_end,
            degenerate_ddpm: c.degenerate_ddpm,
        }
    }
}

impl From<ScheduleSettings> for ScheduleConfig {
    fn from(s: ScheduleSettings) -> Self {
        Self {
            total_steps: s.total_steps,
            attenuation_ratio: s.attenuation_ratio,
            b_sq_start: s.b_sq_start,
            b_sq_end: s.b_sq_end,
            degenerate_ddpm: s.degenerate_ddpm,
        }
    }
}

impl Default for ScheduleSettings {
    fn default() -> Self {
        ScheduleConfig::default().into()
    }
}

/// Everything needed to rerun a command: its name, the seed, the schedule
/// and the command's own parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: String,
    pub seed: u64,
    pub schedule: ScheduleSettings,
    pub params: serde_json::Value,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_through_json() {
        let cfg = RunConfig {
            command: "forward".into(),
            seed: 7,
            schedule: ScheduleSettings::default(),
            params: serde_json::json!({"t": 500}),
        };
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&text).unwrap(), cfg);
        assert_eq!(ScheduleConfig::from(cfg.schedule), ScheduleConfig::default());
    }
}
