//! Referee command generation for the service and outdoor leagues.
//!
//! Draws use ChaCha20 seeded through `SeedableRng::seed_from_u64` and an
//! unbiased rejection-sampled index, so a `(request, seed)` pair renders the
//! same command on every platform and release.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::exact::Fraction;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CommandError {
    #[error("invalid pin {variable}={value:?}: {reason}")]
    InvalidPin { variable: String, value: String, reason: String },
    #[error("task number {0} is not one of 1, 2, 3")]
    InvalidTask(u32),
    #[error("league {0:?} has no command generator")]
    UnsupportedLeague(String),
    #[error("domain too small: {0}")]
    DegenerateDomain(String),
}

fn invalid_pin(variable: impl fmt::Display, value: &str, reason: impl Into<String>) -> CommandError {
    CommandError::InvalidPin { variable: variable.to_string(), value: value.to_string(), reason: reason.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variable {
    KitchenI,
    KitchenJ,
    LocationI,
    LocationJ,
    Object,
    Action,
    Parcel,
    PickupPoint,
    DeliveryPoint,
}

impl Variable {
    pub const ALL: [Variable; 9] = [
        Variable::KitchenI,
        Variable::KitchenJ,
        Variable::LocationI,
        Variable::LocationJ,
        Variable::Object,
        Variable::Action,
        Variable::Parcel,
        Variable::PickupPoint,
        Variable::DeliveryPoint,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variable::KitchenI => "kitchen_i",
            Variable::KitchenJ => "kitchen_j",
            Variable::LocationI => "location_i",
            Variable::LocationJ => "location_j",
            Variable::Object => "object",
            Variable::Action => "action",
            Variable::Parcel => "parcel",
            Variable::PickupPoint => "pickup_point",
            Variable::DeliveryPoint => "delivery_point",
        }
    }
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variable {
    type Err = CommandError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variable::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| invalid_pin(s, "", "unknown variable"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Platform {
    Aerial,
    Ground,
}

/// Values each variable may take.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariableDomain {
    pub kitchens: Vec<String>,
    pub locations: Vec<String>,
    pub objects: Vec<String>,
    pub actions: Vec<String>,
    pub parcels: Vec<String>,
    pub points: Vec<String>,
    /// Intended carrier of each parcel. Mismatches only produce a warning.
    #[serde(default)]
    pub parcel_platforms: BTreeMap<String, Platform>,
}

impl Default for VariableDomain {
    /// Kitchens and locations of the 2024 service league; objects are
    /// placeholders standing in for the YCB, KIT and unknown-object sets.
    fn default() -> Self {
        let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
        VariableDomain {
            kitchens: s(&["DLR", "KIT", "INRIA"]),
            locations: s(&["Dishwasher", "Table", "Cabinet", "Counter"]),
            objects: s(&["Pringles", "mustard bottle", "tomato soup can", "cereal box", "ketchup bottle", "unknown object"]),
            actions: s(&["place", "give"]),
            parcels: s(&["A0", "A1", "A2"]),
            points: s(&["A", "B", "C", "D", "E", "F", "G", "H", "I", "J"]),
            parcel_platforms: [("A0", Platform::Aerial), ("A1", Platform::Aerial), ("A2", Platform::Ground)]
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect(),
        }
    }
}

impl VariableDomain {
    pub fn values(&self, variable: Variable) -> &[String] {
        match variable {
            Variable::KitchenI | Variable::KitchenJ => &self.kitchens,
            Variable::LocationI | Variable::LocationJ => &self.locations,
            Variable::Object => &self.objects,
            Variable::Action => &self.actions,
            Variable::Parcel => &self.parcels,
            Variable::PickupPoint | Variable::DeliveryPoint => &self.points,
        }
    }
}

pub type PinSet = BTreeMap<Variable, String>;

/// Parses `key=value` pairs.
pub fn parse_pins<'a>(pairs: impl IntoIterator<Item = &'a str>) -> Result<PinSet, CommandError> {
    let mut pins = PinSet::new();
    for pair in pairs {
        let (k, v) = pair.split_once('=').ok_or_else(|| invalid_pin(pair, "", "expected key=value"))?;
        let var: Variable = k.trim().parse()?;
        if pins.insert(var, v.trim().to_string()).is_some() {
            return Err(invalid_pin(var, v, "pinned twice"));
        }
    }
    Ok(pins)
}

/// Task conditional level ids by number of pinned free variables.
pub const PIN_LEVELS: [(&str, i64, i64); 4] =
    [("random", 1, 1), ("one-variable", 7, 10), ("two-variables", 2, 5), ("three-variables", 3, 10)];

pub fn task_level_for_pins(count: usize) -> (&'static str, Fraction) {
    let (id, n, d) = PIN_LEVELS[count.min(PIN_LEVELS.len() - 1)];
    (id, Fraction::new(n, d))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommandRequest {
    pub league_id: String,
    pub task_number: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_kitchen: Option<String>,
    #[serde(default)]
    pub pins: PinSet,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub platform: Option<Platform>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratedCommand {
    pub league_id: String,
    pub task_number: u32,
    pub assignments: BTreeMap<Variable, String>,
    /// Pinned variables that were free for this task and count toward T.
    pub counted_pins: BTreeSet<Variable>,
    pub task_level: String,
    pub task_factor: Fraction,
    pub text: String,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// Uniform index in `0..n` by rejection sampling.
pub fn uniform_index(rng: &mut impl RngCore, n: usize) -> usize {
    assert!(n > 0, "empty range");
    let n = n as u64;
    let reject_below = n.wrapping_neg() % n;
    loop {
        let x = rng.next_u64();
        if x >= reject_below {
            return (x % n) as usize;
        }
    }
}

struct Draw<'a> {
    domain: &'a VariableDomain,
    pins: &'a PinSet,
    rng: ChaCha20Rng,
    assignments: BTreeMap<Variable, String>,
    counted: BTreeSet<Variable>,
}

impl<'a> Draw<'a> {
    fn new(domain: &'a VariableDomain, pins: &'a PinSet, seed: u64) -> Result<Self, CommandError> {
        for (var, value) in pins {
            if !domain.values(*var).contains(value) {
                return Err(invalid_pin(var, value, "value outside its domain"));
            }
        }
        Ok(Draw { domain, pins, rng: ChaCha20Rng::seed_from_u64(seed), assignments: BTreeMap::new(), counted: BTreeSet::new() })
    }

    /// A free variable: pinned value if present, else a uniform draw excluding `exclude`.
    fn free(&mut self, var: Variable, exclude: Option<&str>) -> Result<String, CommandError> {
        let value = if let Some(v) = self.pins.get(&var) {
            self.counted.insert(var);
            v.clone()
        } else {
            let options: Vec<&String> = self.domain.values(var).iter().filter(|v| Some(v.as_str()) != exclude).collect();
            if options.is_empty() {
                return Err(CommandError::DegenerateDomain(format!("no value left for {var}")));
            }
            options[uniform_index(&mut self.rng, options.len())].clone()
        };
        self.assignments.insert(var, value.clone());
        Ok(value)
    }

    /// A variable fixed by the task; a pin may only restate it.
    fn fixed(&mut self, var: Variable, value: &str) -> Result<String, CommandError> {
        if let Some(pinned) = self.pins.get(&var) {
            if pinned != value {
                return Err(invalid_pin(var, pinned, format!("fixed to {value} for this task")));
            }
        }
        self.assignments.insert(var, value.to_string());
        Ok(value.to_string())
    }

    fn reject_foreign(&self, allowed: &[Variable]) -> Result<(), CommandError> {
        match self.pins.iter().find(|(v, _)| !allowed.contains(v)) {
            Some((v, value)) => Err(invalid_pin(v, value, "not a variable of this league")),
            None => Ok(()),
        }
    }

    fn finish(self, request: &CommandRequest, text: String, warnings: Vec<String>) -> GeneratedCommand {
        let (level, factor) = task_level_for_pins(self.counted.len());
        GeneratedCommand {
            league_id: request.league_id.clone(),
            task_number: request.task_number,
            assignments: self.assignments,
            counted_pins: self.counted,
            task_level: level.to_string(),
            task_factor: factor,
            text,
            seed: request.seed,
            warnings,
        }
    }
}

fn check_task(n: u32) -> Result<(), CommandError> {
    if (1..=3).contains(&n) {
        Ok(())
    } else {
        Err(CommandError::InvalidTask(n))
    }
}

/// Service league: pick in kitchen `K_i`, then place at or give in kitchen `K_j`.
///
/// Task 1 keeps both kitchens at the base kitchen, task 2 draws `K_j`, task 3
/// draws both.
pub fn generate_srl(domain: &VariableDomain, request: &CommandRequest) -> Result<GeneratedCommand, CommandError> {
    check_task(request.task_number)?;
    let mut draw = Draw::new(domain, &request.pins, request.seed)?;
    draw.reject_foreign(&[
        Variable::KitchenI,
        Variable::KitchenJ,
        Variable::LocationI,
        Variable::LocationJ,
        Variable::Object,
        Variable::Action,
    ])?;
    let base = match &request.base_kitchen {
        Some(b) if !domain.kitchens.contains(b) => return Err(invalid_pin("base_kitchen", b, "value outside its domain")),
        Some(b) => Some(b.as_str()),
        None if request.task_number < 3 => return Err(invalid_pin("base_kitchen", "", "required for tasks 1 and 2")),
        None => None,
    };
    let kitchen_i = match base {
        Some(b) if request.task_number < 3 => draw.fixed(Variable::KitchenI, b)?,
        _ => draw.free(Variable::KitchenI, None)?,
    };
    let location_i = draw.free(Variable::LocationI, None)?;
    let object = draw.free(Variable::Object, None)?;
    let action = draw.free(Variable::Action, None)?;
    let kitchen_j = match base {
        Some(b) if request.task_number == 1 => draw.fixed(Variable::KitchenJ, b)?,
        _ => draw.free(Variable::KitchenJ, None)?,
    };
    let location_j = draw.free(Variable::LocationJ, None)?;

    let mut warnings = Vec::new();
    if request.task_number == 2 && Some(kitchen_j.as_str()) == base {
        warnings.push(format!("destination kitchen equals the base kitchen {kitchen_j}"));
    }
    let source = format!("Pick the {object} from the {kitchen_i} {}", location_i.to_lowercase());
    let text = if action == "give" {
        format!("{source} and give them to the person in the {kitchen_j} kitchen.")
    } else {
        format!("{source} and {action} them on the {kitchen_j} {}.", location_j.to_lowercase())
    };
    Ok(draw.finish(request, text, warnings))
}

/// Outdoor league: carry a parcel from a pick-up point to a different delivery point.
pub fn generate_orl(domain: &VariableDomain, request: &CommandRequest) -> Result<GeneratedCommand, CommandError> {
    check_task(request.task_number)?;
    let mut draw = Draw::new(domain, &request.pins, request.seed)?;
    draw.reject_foreign(&[Variable::Parcel, Variable::PickupPoint, Variable::DeliveryPoint])?;
    if let (Some(p), Some(d)) = (request.pins.get(&Variable::PickupPoint), request.pins.get(&Variable::DeliveryPoint)) {
        if p == d {
            return Err(invalid_pin(Variable::DeliveryPoint, d, "must differ from the pick-up point"));
        }
    }
    if domain.points.len() < 2 && request.pins.len() < 2 {
        return Err(CommandError::DegenerateDomain("pick-up and delivery need at least two points".into()));
    }
    let parcel = draw.free(Variable::Parcel, None)?;
    let (pickup, delivery) = match request.pins.get(&Variable::DeliveryPoint).cloned() {
        Some(d) if !request.pins.contains_key(&Variable::PickupPoint) => {
            let p = draw.free(Variable::PickupPoint, Some(&d))?;
            (p, draw.free(Variable::DeliveryPoint, None)?)
        }
        _ => {
            let p = draw.free(Variable::PickupPoint, None)?;
            let d = draw.free(Variable::DeliveryPoint, Some(&p))?;
            (p, d)
        }
    };
    let mut warnings = Vec::new();
    if let (Some(platform), Some(intended)) = (request.platform, domain.parcel_platforms.get(&parcel)) {
        if platform != *intended {
            warnings.push(format!("parcel {parcel} is meant for {intended:?} robots"));
        }
    }
    let text = format!("Pick parcel {parcel} from Pick-Up Point {pickup} and deliver it to Point {delivery}");
    Ok(draw.finish(request, text, warnings))
}

pub fn generate(domain: &VariableDomain, request: &CommandRequest) -> Result<GeneratedCommand, CommandError> {
    match request.league_id.as_str() {
        "srl" => generate_srl(domain, request),
        "orl" => generate_orl(domain, request),
        other => Err(CommandError::UnsupportedLeague(other.to_string())),
    }
}
