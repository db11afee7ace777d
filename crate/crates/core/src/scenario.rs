//! Scripted runs: initial vehicle state, timed actions and timed checks on
//! what the cluster displays.

use std::fmt::Write as _;
use std::path::Path;

use serde::{de, Deserialize, Deserializer, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::catalog::PhysicalValue;
use crate::cluster::{ClusterState, Lamp, LampTransition};
use crate::control::protocol::{parse_action, Action, CommandError};
use crate::hex;
use crate::rogue::AttackRule;
use crate::testbed::{Side, Testbed, TestbedConfig, TestbedError, Topology};
use crate::vehicle::{DemoScript, VehicleState};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("scenario does not parse: {0}")]
    Parse(String),
    #[error("unsupported schema_version {0}")]
    Version(u32),
    #[error("{what} at {at_ms} ms is after the end of the run ({duration_ms} ms)")]
    AfterEnd { what: String, at_ms: u64, duration_ms: u64 },
    #[error(transparent)]
    Setup(#[from] TestbedError),
    #[error("action `{verb}` at {at_ms} ms failed: {error}")]
    Action { at_ms: u64, verb: String, error: CommandError },
}

impl ScenarioError {
    /// Whether the scenario file itself is at fault, as opposed to the run.
    pub fn is_input_error(&self) -> bool {
        !matches!(self, Self::Action { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimedAction {
    pub at_ms: u64,
    pub action: Action,
}

impl<'de> Deserialize<'de> for TimedAction {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let mut map = Map::<String, Value>::deserialize(d)?;
        let at_ms = map
            .remove("at_ms")
            .ok_or_else(|| de::Error::missing_field("at_ms"))
            .and_then(|v| v.as_u64().ok_or_else(|| de::Error::custom("at_ms must be a non-negative integer")))?;
        let action = parse_action(map).map_err(|e| de::Error::custom(e.message))?;
        Ok(Self { at_ms, action })
    }
}

impl Serialize for TimedAction {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut value = serde_json::to_value(&self.action).map_err(serde::ser::Error::custom)?;
        value
            .as_object_mut()
            .expect("actions serialize as objects")
            .insert("at_ms".into(), self.at_ms.into());
        value.serialize(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flag {
    CounterError,
    Timeout,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BusSide {
    Upstream,
    #[default]
    Downstream,
}

/// A predicate on the bench at one instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "check", rename_all = "snake_case", deny_unknown_fields)]
pub enum Check {
    LampOn {
        lamp: Lamp,
    },
    LampOff {
        lamp: Lamp,
    },
    DisplayedSpeedEq {
        value: f64,
        #[serde(default)]
        tolerance: f64,
    },
    DisplayedRpmEq {
        value: f64,
        #[serde(default)]
        tolerance: f64,
    },
    /// With no `id`, any flagged id satisfies it.
    FlagSet {
        flag: Flag,
        #[serde(default, with = "hex::opt_id", skip_serializing_if = "Option::is_none")]
        id: Option<u32>,
    },
    FlagClear {
        flag: Flag,
        #[serde(default, with = "hex::opt_id", skip_serializing_if = "Option::is_none")]
        id: Option<u32>,
    },
    NoFlags,
    LampsDark,
    /// No lamp changed state between `since_ms` and now.
    NoLampTransitions {
        #[serde(default)]
        since_ms: u64,
    },
    /// Bus busy fraction over the `window_ms` before now.
    UtilizationGe {
        #[serde(default)]
        bus: BusSide,
        value: f64,
        window_ms: u64,
    },
    VehicleEq {
        field: String,
        value: PhysicalValue,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assertion {
    pub at_ms: u64,
    #[serde(flatten)]
    pub check: Check,
}

fn default_version() -> u32 {
    SCHEMA_VERSION
}

fn yes() -> bool {
    true
}

fn default_bitrate() -> u32 {
    crate::bus::DEFAULT_BITRATE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default = "default_version")]
    pub schema_version: u32,
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default = "default_bitrate")]
    pub bitrate: u32,
    #[serde(default)]
    pub topology: Topology,
    pub duration_ms: u64,
    #[serde(default)]
    pub vehicle: VehicleState,
    #[serde(default = "yes")]
    pub vehicle_active: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub demo: Option<DemoScript>,
    #[serde(default)]
    pub rules: Vec<AttackRule>,
    #[serde(default)]
    pub actions: Vec<TimedAction>,
    #[serde(default)]
    pub assertions: Vec<Assertion>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Outcome {
    pub at_ms: u64,
    pub check: Check,
    pub actual: String,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub name: String,
    pub duration_ms: u64,
    pub outcomes: Vec<Outcome>,
    pub final_state: ClusterState,
    pub transitions: Vec<LampTransition>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.outcomes.iter().all(|o| o.pass)
    }

    /// Fixed-width result table, one row per assertion.
    pub fn table(&self) -> String {
        let mut out = String::new();
        writeln!(out, "scenario {} ({} ms)", self.name, self.duration_ms).unwrap();
        writeln!(out, "{:>8}  {:<44} {:<36} result", "at_ms", "check", "actual").unwrap();
        for o in &self.outcomes {
            let result = if o.pass { "PASS" } else { "FAIL" };
            writeln!(out, "{:>8}  {:<44} {:<36} {result}", o.at_ms, describe(&o.check), o.actual).unwrap();
        }
        let passed = self.outcomes.iter().filter(|o| o.pass).count();
        writeln!(out, "{passed}/{} assertions hold", self.outcomes.len()).unwrap();
        out
    }
}

/// Short text form of a check, e.g. `lamp_on(abs)`.
pub fn describe(check: &Check) -> String {
    let id = |id: &Option<u32>| id.map_or(String::new(), |id| format!(", {}", hex::id_string(id)));
    let flag = |f: Flag| match f {
        Flag::CounterError => "counter_error",
        Flag::Timeout => "timeout",
    };
    match check {
        Check::LampOn { lamp } => format!("lamp_on({})", lamp.name()),
        Check::LampOff { lamp } => format!("lamp_off({})", lamp.name()),
        Check::DisplayedSpeedEq { value, tolerance } => format!("displayed_speed_eq({value} ± {tolerance})"),
        Check::DisplayedRpmEq { value, tolerance } => format!("displayed_rpm_eq({value} ± {tolerance})"),
        Check::FlagSet { flag: f, id: i } => format!("flag_set({}{})", flag(*f), id(i)),
        Check::FlagClear { flag: f, id: i } => format!("flag_clear({}{})", flag(*f), id(i)),
        Check::NoFlags => "no_flags".into(),
        Check::LampsDark => "lamps_dark".into(),
        Check::NoLampTransitions { since_ms } => format!("no_lamp_transitions(since {since_ms} ms)"),
        Check::UtilizationGe { bus, value, window_ms } => format!("utilization_ge({bus:?}, {value}, {window_ms} ms)").to_lowercase(),
        Check::VehicleEq { field, value } => format!("vehicle_eq({field}, {value})"),
    }
}

fn ids_text(ids: &[u32]) -> String {
    if ids.is_empty() {
        return "none".into();
    }
    ids.iter().map(|&id| hex::id_string(id)).collect::<Vec<_>>().join(",")
}

/// Evaluates `check` against the bench now.
pub fn evaluate(check: &Check, tb: &Testbed) -> (bool, String) {
    let state = tb.cluster().state();
    let lamps_on = || {
        let on: Vec<_> = Lamp::ALL.into_iter().filter(|&l| state.lamps.get(l)).map(Lamp::name).collect();
        if on.is_empty() {
            "all dark".to_string()
        } else {
            on.join(",")
        }
    };
    match check {
        Check::LampOn { lamp } => (state.lamps.get(*lamp), lamps_on()),
        Check::LampOff { lamp } => (!state.lamps.get(*lamp), lamps_on()),
        Check::DisplayedSpeedEq { value, tolerance } => ((state.speed - value).abs() <= *tolerance, format!("{} km/h", state.speed)),
        Check::DisplayedRpmEq { value, tolerance } => ((state.rpm - value).abs() <= *tolerance, format!("{} rpm", state.rpm)),
        Check::FlagSet { flag, id } | Check::FlagClear { flag, id } => {
            let ids = match flag {
                Flag::CounterError => &state.counter_errors,
                Flag::Timeout => &state.timeouts,
            };
            let set = match id {
                Some(id) => ids.contains(id),
                None => !ids.is_empty(),
            };
            let want_set = matches!(check, Check::FlagSet { .. });
            (set == want_set, ids_text(ids))
        }
        Check::NoFlags => (
            !state.has_flags(),
            format!("counter {} / timeout {}", ids_text(&state.counter_errors), ids_text(&state.timeouts)),
        ),
        Check::LampsDark => (!state.lamps.any(), lamps_on()),
        Check::NoLampTransitions { since_ms } => {
            let since = since_ms * 1000;
            let n = tb.cluster().transitions().iter().filter(|t| t.time >= since).count();
            (n == 0, format!("{n} transitions"))
        }
        Check::UtilizationGe { bus, value, window_ms } => {
            let side = match bus {
                BusSide::Upstream => Side::Upstream,
                BusSide::Downstream => Side::Downstream,
            };
            let u = tb.utilization_over(side, window_ms * 1000);
            (u >= *value, format!("{u:.4}"))
        }
        Check::VehicleEq { field, value } => match tb.truth(field) {
            Some(v) => (&v == value, v.to_string()),
            None => (false, format!("no field {field}")),
        },
    }
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let s: Scenario = serde_json::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenarios serialize")
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(ScenarioError::Version(self.schema_version));
        }
        let late = |what: String, at_ms: u64| ScenarioError::AfterEnd {
            what,
            at_ms,
            duration_ms: self.duration_ms,
        };
        if let Some(a) = self.actions.iter().find(|a| a.at_ms > self.duration_ms) {
            return Err(late(format!("action {}", a.action.verb()), a.at_ms));
        }
        if let Some(a) = self.assertions.iter().find(|a| a.at_ms > self.duration_ms) {
            return Err(late(format!("assertion {}", describe(&a.check)), a.at_ms));
        }
        // surfaces bad vehicle states, rules and topology before running
        self.testbed()?;
        Ok(())
    }

    pub fn testbed(&self) -> Result<Testbed, ScenarioError> {
        Ok(Testbed::new(TestbedConfig {
            bitrate: self.bitrate,
            topology: self.topology,
            vehicle: self.vehicle.clone(),
            demo: self.demo.clone(),
            rules: self.rules.clone(),
            vehicle_active: self.vehicle_active,
        })?)
    }

    /// Runs to the end in virtual time. At equal times, actions go before
    /// assertions; otherwise file order is kept.
    pub fn run(&self) -> Result<Report, ScenarioError> {
        let mut tb = self.testbed()?;
        let outcomes = self.drive(&mut tb)?;
        Ok(Report {
            name: self.name.clone(),
            duration_ms: self.duration_ms,
            outcomes,
            final_state: tb.cluster().snapshot(),
            transitions: tb.cluster().transitions().to_vec(),
        })
    }

    /// Plays actions and assertions on an existing bench, then runs it to
    /// the end of the scenario.
    pub fn drive(&self, tb: &mut Testbed) -> Result<Vec<Outcome>, ScenarioError> {
        enum Step<'a> {
            Act(&'a TimedAction),
            Check(&'a Assertion),
        }
        let mut steps: Vec<(u64, u8, Step)> = self.actions.iter().map(|a| (a.at_ms, 0, Step::Act(a))).collect();
        steps.extend(self.assertions.iter().map(|a| (a.at_ms, 1, Step::Check(a))));
        steps.sort_by_key(|(t, kind, _)| (*t, *kind));

        let mut outcomes = Vec::new();
        for (at_ms, _, step) in steps {
            tb.run_until(at_ms * 1000)?;
            match step {
                Step::Act(a) => tb.apply(&a.action).map_err(|error| ScenarioError::Action {
                    at_ms,
                    verb: a.action.verb().into(),
                    error,
                })?,
                Step::Check(a) => {
                    let (pass, actual) = evaluate(&a.check, tb);
                    outcomes.push(Outcome {
                        at_ms,
                        check: a.check.clone(),
                        actual,
                        pass,
                    });
                }
            }
        }
        tb.run_until(self.duration_ms * 1000)?;
        Ok(outcomes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIG3: &str = r#"{
        "name": "fig3",
        "duration_ms": 7000,
        "vehicle": {"ignition": "running", "speed": 60, "rpm": 2000},
        "actions": [
            {"at_ms": 5000, "verb": "set_speed_override", "value": 260},
            {"at_ms": 5000, "verb": "set_rpm_override", "value": 5500},
            {"at_ms": 5000, "verb": "set_airbag_disabled", "value": true},
            {"at_ms": 5000, "verb": "set_abs_disabled", "value": true}
        ],
        "assertions": [
            {"at_ms": 4900, "check": "lamps_dark"},
            {"at_ms": 7000, "check": "displayed_speed_eq", "value": 260},
            {"at_ms": 7000, "check": "displayed_rpm_eq", "value": 5500},
            {"at_ms": 7000, "check": "lamp_on", "lamp": "airbag"},
            {"at_ms": 7000, "check": "lamp_on", "lamp": "abs"},
            {"at_ms": 7000, "check": "vehicle_eq", "field": "speed", "value": 60}
        ]
    }"#;

    #[test]
    fn fig3_passes() {
        let report = Scenario::from_json(FIG3).unwrap().run().unwrap();
        assert!(report.passed(), "{}", report.table());
    }

    #[test]
    fn same_file_same_table() {
        let s = Scenario::from_json(FIG3).unwrap();
        assert_eq!(s.run().unwrap().table(), s.run().unwrap().table());
    }

    #[test]
    fn round_trips_through_json() {
        let s = Scenario::from_json(FIG3).unwrap();
        assert_eq!(Scenario::from_json(&s.to_json()).unwrap(), s);
    }

    #[test]
    fn failing_assertion_is_reported() {
        let text = FIG3.replace(r#""displayed_rpm_eq", "value": 5500"#, r#""displayed_rpm_eq", "value": 5000"#);
        let report = Scenario::from_json(&text).unwrap().run().unwrap();
        assert!(!report.passed());
        assert!(report.table().contains("5500 rpm"));
    }

    #[test]
    fn input_errors() {
        let bad = |t: &str| Scenario::from_json(t).unwrap_err();
        assert!(matches!(bad("{"), ScenarioError::Parse(_)));
        assert!(matches!(bad(r#"{"duration_ms": 10, "color": 1}"#), ScenarioError::Parse(_)));
        assert!(matches!(
            bad(r#"{"duration_ms": 10, "actions": [{"at_ms": 11, "verb": "sim_pause"}]}"#),
            ScenarioError::AfterEnd { .. }
        ));
        assert!(matches!(
            bad(r#"{"duration_ms": 10, "assertions": [{"at_ms": 5, "check": "lamp_on", "lamp": "horn"}]}"#),
            ScenarioError::Parse(_)
        ));
        assert!(matches!(
            bad(r#"{"duration_ms": 10, "actions": [{"at_ms": 5, "verb": "warp"}]}"#),
            ScenarioError::Parse(_)
        ));
        assert!(matches!(bad(r#"{"duration_ms": 10, "topology": "direct", "rules": [{"id": "0D7", "action": "block"}]}"#), ScenarioError::Setup(_)));
        assert!(matches!(bad(r#"{"schema_version": 2, "duration_ms": 10}"#), ScenarioError::Version(2)));
    }

    #[test]
    fn out_of_range_action_is_a_runtime_error() {
        let s = Scenario::from_json(r#"{"duration_ms": 10, "actions": [{"at_ms": 5, "verb": "set_speed_override", "value": 500}]}"#).unwrap();
        let err = s.run().unwrap_err();
        assert!(!err.is_input_error());
    }
}
