use serde::{Deserialize, Serialize};

use super::state::{is_numeric, Ignition, VehicleState};
use super::VehicleError;
use crate::catalog::PhysicalValue;
use crate::Micros;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Keyframe {
    pub at_ms: u64,
    pub field: String,
    pub value: PhysicalValue,
}

/// A scripted drive. Numeric fields move linearly between consecutive
/// keyframes of the same field; everything else steps.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DemoScript {
    keyframes: Vec<Keyframe>,
}

impl DemoScript {
    pub fn new(keyframes: Vec<Keyframe>) -> Result<Self, VehicleError> {
        for (i, w) in keyframes.windows(2).enumerate() {
            if w[1].at_ms < w[0].at_ms {
                return Err(VehicleError::NonMonotonicKeyframes { index: i + 1 });
            }
        }
        for k in &keyframes {
            VehicleState::check(&k.field, &k.value)?;
        }
        Ok(Self { keyframes })
    }

    /// Ignition on at 0.5 s, engine started at 2 s, then a ten second
    /// run-up to 3000 rpm and 100 km/h with the lights coming on at 3 s.
    pub fn default_drive() -> Self {
        let k = |at_ms, field: &str, value: PhysicalValue| Keyframe {
            at_ms,
            field: field.into(),
            value,
        };
        Self::new(vec![
            k(500, "ignition", "ignition_on".into()),
            k(2000, "ignition", "running".into()),
            k(2000, "rpm", 800.0.into()),
            k(2000, "speed", 0.0.into()),
            k(2000, "engine_temp", 40.0.into()),
            k(3000, "side_lights", true.into()),
            k(3000, "low_beam", true.into()),
            k(12_000, "rpm", 3000.0.into()),
            k(12_000, "speed", 100.0.into()),
            k(12_000, "engine_temp", 90.0.into()),
        ])
        .expect("default drive is well formed")
    }

    pub fn keyframes(&self) -> &[Keyframe] {
        &self.keyframes
    }

    pub fn is_empty(&self) -> bool {
        self.keyframes.is_empty()
    }

    /// First keyframe time strictly after `t`.
    pub fn next_change_after(&self, t: Micros) -> Option<Micros> {
        self.keyframes.iter().map(|k| k.at_ms * 1000).find(|&at| at > t)
    }

    /// State at `t`, starting from `base`.
    pub fn state_at(&self, base: &VehicleState, t: Micros) -> VehicleState {
        let mut state = base.clone();
        let mut done: Vec<&str> = Vec::new();
        for k in &self.keyframes {
            if done.contains(&k.field.as_str()) {
                continue;
            }
            done.push(&k.field);
            if let Some(v) = self.field_at(&k.field, t) {
                state.store(&k.field, &v);
            }
        }
        if state.ignition != Ignition::Running {
            state.rpm = 0.0;
        }
        state
    }

    fn field_at(&self, field: &str, t: Micros) -> Option<PhysicalValue> {
        let frames: Vec<&Keyframe> = self.keyframes.iter().filter(|k| k.field == field).collect();
        let last = frames.iter().rposition(|k| k.at_ms * 1000 <= t)?;
        let prev = frames[last];
        let (Some(next), true) = (frames.get(last + 1), is_numeric(field)) else {
            return Some(prev.value.clone());
        };
        let (Some(a), Some(b)) = (prev.value.as_f64(), next.value.as_f64()) else {
            return Some(prev.value.clone());
        };
        let (t0, t1) = (prev.at_ms * 1000, next.at_ms * 1000);
        let frac = (t - t0) as f64 / (t1 - t0) as f64;
        Some(PhysicalValue::Number(a + (b - a) * frac))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ramp_interpolates() {
        let d = DemoScript::default_drive();
        let base = VehicleState::default();
        assert_eq!(d.state_at(&base, 0).ignition, Ignition::Off);
        assert_eq!(d.state_at(&base, 500_000).ignition, Ignition::IgnitionOn);
        assert_eq!(d.state_at(&base, 1_999_999).rpm, 0.0);
        assert_eq!(d.state_at(&base, 2_000_000).rpm, 800.0);
        assert_eq!(d.state_at(&base, 7_000_000).rpm, 1900.0);
        assert_eq!(d.state_at(&base, 12_000_000).rpm, 3000.0);
        assert_eq!(d.state_at(&base, 60_000_000).rpm, 3000.0);
    }

    #[test]
    fn booleans_step() {
        let d = DemoScript::default_drive();
        let base = VehicleState::default();
        assert!(!d.state_at(&base, 2_999_999).side_lights);
        assert!(d.state_at(&base, 3_000_000).side_lights);
    }

    #[test]
    fn empty_script_keeps_state() {
        let base = VehicleState {
            speed: 33.0,
            ..VehicleState::default()
        };
        assert_eq!(DemoScript::default().state_at(&base, 5_000_000), base);
    }

    #[test]
    fn keyframes_must_be_ordered() {
        let k = |at_ms| Keyframe {
            at_ms,
            field: "speed".into(),
            value: 1.0.into(),
        };
        assert_eq!(
            DemoScript::new(vec![k(10), k(5)]),
            Err(VehicleError::NonMonotonicKeyframes { index: 1 })
        );
        assert!(DemoScript::new(vec![k(5), k(5)]).is_ok());
    }

    #[test]
    fn next_change() {
        let d = DemoScript::default_drive();
        assert_eq!(d.next_change_after(0), Some(500_000));
        assert_eq!(d.next_change_after(500_000), Some(2_000_000));
        assert_eq!(d.next_change_after(12_000_000), None);
    }
}
