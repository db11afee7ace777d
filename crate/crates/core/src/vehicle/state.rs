use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::VehicleError;
use crate::catalog::{catalog, CatalogError, PhysicalValue};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ignition {
    #[default]
    Off,
    KeyIn,
    IgnitionOn,
    Running,
}

impl Ignition {
    pub fn label(self) -> &'static str {
        match self {
            Self::Off => "off",
            Self::KeyIn => "key_in",
            Self::IgnitionOn => "ignition_on",
            Self::Running => "running",
        }
    }

    /// Terminal 15 live: ignition on or engine running.
    pub fn is_on(self) -> bool {
        self >= Self::IgnitionOn
    }
}

impl fmt::Display for Ignition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Ignition {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        [Self::Off, Self::KeyIn, Self::IgnitionOn, Self::Running]
            .into_iter()
            .find(|i| i.label() == s)
            .ok_or(())
    }
}

/// Ground truth of the simulated car.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VehicleState {
    pub ignition: Ignition,
    pub rpm: f64,
    pub speed: f64,
    pub wheel_fl: f64,
    pub wheel_fr: f64,
    pub wheel_rl: f64,
    pub wheel_rr: f64,
    pub throttle: f64,
    pub fuel: f64,
    pub engine_temp: f64,
    pub handbrake: bool,
    pub side_lights: bool,
    pub low_beam: bool,
    pub main_beam: bool,
    /// Driver's belt fastened.
    pub seatbelt: bool,
    pub brake_pedal: bool,
    pub clutch_pedal: bool,
    pub battery: f64,
    pub torque: f64,
    pub vin: String,
}

impl Default for VehicleState {
    fn default() -> Self {
        Self {
            ignition: Ignition::Off,
            rpm: 0.0,
            speed: 0.0,
            wheel_fl: 0.0,
            wheel_fr: 0.0,
            wheel_rl: 0.0,
            wheel_rr: 0.0,
            throttle: 0.0,
            fuel: 40.0,
            engine_temp: 20.0,
            handbrake: false,
            side_lights: false,
            low_beam: false,
            main_beam: false,
            seatbelt: true,
            brake_pedal: false,
            clutch_pedal: false,
            battery: 12.6,
            torque: 0.0,
            vin: "PK52143".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum FieldType {
    Number,
    Flag,
    Ignition,
    Text,
}

/// Settable field names with their type and the catalog signal that bounds
/// them.
const FIELDS: [(&str, FieldType, u32, &str); 20] = [
    ("ignition", FieldType::Ignition, 0x130, "ignition"),
    ("rpm", FieldType::Number, 0x0AA, "rpm"),
    ("speed", FieldType::Number, 0x1A6, "speed"),
    ("wheel_fl", FieldType::Number, 0x0CE, "wheel_fl"),
    ("wheel_fr", FieldType::Number, 0x0CE, "wheel_fr"),
    ("wheel_rl", FieldType::Number, 0x0CE, "wheel_rl"),
    ("wheel_rr", FieldType::Number, 0x0CE, "wheel_rr"),
    ("throttle", FieldType::Number, 0x0AA, "throttle"),
    ("fuel", FieldType::Number, 0x349, "fuel_sensor_1"),
    ("engine_temp", FieldType::Number, 0x1D0, "engine_temp"),
    ("handbrake", FieldType::Flag, 0x34F, "handbrake"),
    ("side_lights", FieldType::Flag, 0x21A, "side_lights"),
    ("low_beam", FieldType::Flag, 0x21A, "low_beam"),
    ("main_beam", FieldType::Flag, 0x21A, "main_beam"),
    ("seatbelt", FieldType::Flag, 0x581, "unbelted"),
    ("brake_pedal", FieldType::Flag, 0x0A8, "brake_pedal"),
    ("clutch_pedal", FieldType::Flag, 0x0A8, "clutch_pedal"),
    ("battery", FieldType::Number, 0x3B4, "battery"),
    ("torque", FieldType::Number, 0x0A8, "torque"),
    ("vin", FieldType::Text, 0x380, "vin"),
];

/// Names accepted by [`VehicleState::set`].
pub fn field_names() -> impl Iterator<Item = &'static str> {
    FIELDS.iter().map(|f| f.0)
}

pub(crate) fn is_numeric(field: &str) -> bool {
    FIELDS.iter().any(|f| f.0 == field && f.1 == FieldType::Number)
}

impl VehicleState {
    /// Checks `value` for `field` against type and catalog range, without
    /// looking at the rest of the state.
    pub fn check(field: &str, value: &PhysicalValue) -> Result<(), VehicleError> {
        let &(_, ty, id, signal) = FIELDS
            .iter()
            .find(|f| f.0 == field)
            .ok_or_else(|| VehicleError::UnknownField(field.to_string()))?;
        let wrong = || VehicleError::WrongType {
            field: field.to_string(),
            value: value.to_string(),
        };
        let encoded = match (ty, value) {
            (FieldType::Number, PhysicalValue::Number(_)) | (FieldType::Text, PhysicalValue::Text(_)) => value.clone(),
            (FieldType::Ignition, PhysicalValue::Text(s)) => {
                s.parse::<Ignition>().map_err(|_| wrong())?;
                value.clone()
            }
            (FieldType::Flag, PhysicalValue::Flag(_)) => value.clone(),
            _ => return Err(wrong()),
        };
        catalog().validate(id, signal, &encoded).map_err(|e| match e {
            CatalogError::OutOfRange { value, min, max, .. } => VehicleError::OutOfRange {
                field: field.to_string(),
                value,
                min,
                max,
            },
            other => VehicleError::Catalog(other),
        })
    }

    /// Sets one field. Speed also sets the four wheel speeds; dropping the
    /// ignition below running stops the engine.
    pub fn set(&mut self, field: &str, value: &PhysicalValue) -> Result<(), VehicleError> {
        Self::check(field, value)?;
        if field == "rpm" && self.ignition != Ignition::Running && value.as_f64() != Some(0.0) {
            return Err(VehicleError::NotSettable {
                field: field.to_string(),
                ignition: self.ignition,
            });
        }
        self.store(field, value);
        Ok(())
    }

    /// Writes an already checked value.
    pub(crate) fn store(&mut self, field: &str, value: &PhysicalValue) {
        let num = value.as_f64().unwrap_or_default();
        let flag = value.as_bool().unwrap_or_default();
        match field {
            "ignition" => {
                self.ignition = value.as_str().and_then(|s| s.parse().ok()).unwrap_or_default();
                if self.ignition != Ignition::Running {
                    self.rpm = 0.0;
                }
            }
            "rpm" => self.rpm = num,
            "speed" => {
                self.speed = num;
                self.wheel_fl = num;
                self.wheel_fr = num;
                self.wheel_rl = num;
                self.wheel_rr = num;
            }
            "wheel_fl" => self.wheel_fl = num,
            "wheel_fr" => self.wheel_fr = num,
            "wheel_rl" => self.wheel_rl = num,
            "wheel_rr" => self.wheel_rr = num,
            "throttle" => self.throttle = num,
            "fuel" => self.fuel = num,
            "engine_temp" => self.engine_temp = num,
            "handbrake" => self.handbrake = flag,
            "side_lights" => self.side_lights = flag,
            "low_beam" => self.low_beam = flag,
            "main_beam" => self.main_beam = flag,
            "seatbelt" => self.seatbelt = flag,
            "brake_pedal" => self.brake_pedal = flag,
            "clutch_pedal" => self.clutch_pedal = flag,
            "battery" => self.battery = num,
            "torque" => self.torque = num,
            "vin" => self.vin = value.as_str().unwrap_or_default().to_string(),
            _ => unreachable!("field {field} passed check"),
        }
    }

    pub fn get(&self, field: &str) -> Option<PhysicalValue> {
        Some(match field {
            "ignition" => PhysicalValue::Text(self.ignition.label().into()),
            "rpm" => self.rpm.into(),
            "speed" => self.speed.into(),
            "wheel_fl" => self.wheel_fl.into(),
            "wheel_fr" => self.wheel_fr.into(),
            "wheel_rl" => self.wheel_rl.into(),
            "wheel_rr" => self.wheel_rr.into(),
            "throttle" => self.throttle.into(),
            "fuel" => self.fuel.into(),
            "engine_temp" => self.engine_temp.into(),
            "handbrake" => self.handbrake.into(),
            "side_lights" => self.side_lights.into(),
            "low_beam" => self.low_beam.into(),
            "main_beam" => self.main_beam.into(),
            "seatbelt" => self.seatbelt.into(),
            "brake_pedal" => self.brake_pedal.into(),
            "clutch_pedal" => self.clutch_pedal.into(),
            "battery" => self.battery.into(),
            "torque" => self.torque.into(),
            "vin" => PhysicalValue::Text(self.vin.clone()),
            _ => return None,
        })
    }

    /// Checks every field and the engine invariant.
    pub fn validate(&self) -> Result<(), VehicleError> {
        for name in field_names() {
            Self::check(name, &self.get(name).expect("known field"))?;
        }
        if self.ignition != Ignition::Running && self.rpm != 0.0 {
            return Err(VehicleError::NotSettable {
                field: "rpm".into(),
                ignition: self.ignition,
            });
        }
        Ok(())
    }
}
