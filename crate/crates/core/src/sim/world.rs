use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_yaml::Value as Yaml;

use super::SimError;
use crate::knowledge::{load_belief_schema, load_database, BeliefState, Database};
use crate::value::Value;

pub const OBJECT_TYPES: [&str; 7] = ["screw", "bolt", "small_gear", "large_gear", "gearbox_top", "gearbox_bottom", "kit_caddy"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum RobotPose {
    At(String),
    Free,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Gripper {
    Empty,
    Holding(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KitSlot {
    pub name: String,
    /// Object type the slot takes.
    pub accepts: String,
    pub content: Option<String>,
}

/// Where every object is. Station contents are kept sorted so indices are
/// stable across runs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorldState {
    pub robot: RobotPose,
    pub gripper: Gripper,
    pub stations: BTreeMap<String, Vec<String>>,
    pub kit: Vec<KitSlot>,
    /// Object id to object type.
    pub catalog: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConservationError(pub String);

impl fmt::Display for ConservationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl WorldState {
    pub fn empty() -> Self {
        WorldState {
            robot: RobotPose::Free,
            gripper: Gripper::Empty,
            stations: BTreeMap::new(),
            kit: Vec::new(),
            catalog: BTreeMap::new(),
        }
    }

    pub fn object_type(&self, id: &str) -> Option<&str> {
        self.catalog.get(id).map(String::as_str)
    }

    pub fn robot_station(&self) -> Option<&str> {
        match &self.robot {
            RobotPose::At(s) => Some(s),
            RobotPose::Free => None,
        }
    }

    pub fn held(&self) -> Option<&str> {
        match &self.gripper {
            Gripper::Holding(o) => Some(o),
            Gripper::Empty => None,
        }
    }

    pub fn slot_index(&self, name: &str) -> Option<usize> {
        self.kit.iter().position(|s| s.name == name)
    }

    pub fn kit_complete(&self) -> bool {
        !self.kit.is_empty() && self.kit.iter().all(|s| s.content.is_some())
    }

    pub fn filled_slots(&self) -> usize {
        self.kit.iter().filter(|s| s.content.is_some()).count()
    }

    pub fn put_in_station(&mut self, station: &str, object: String) {
        let contents = self.stations.entry(station.to_string()).or_default();
        contents.push(object);
        contents.sort();
    }

    /// Every catalogued object is in exactly one place, and nothing else is anywhere.
    pub fn check_conservation(&self) -> Result<(), ConservationError> {
        let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
        let located = self
            .stations
            .values()
            .flatten()
            .map(String::as_str)
            .chain(self.held())
            .chain(self.kit.iter().filter_map(|s| s.content.as_deref()));
        for id in located {
            *seen.entry(id).or_default() += 1;
        }
        for (id, n) in &seen {
            if !self.catalog.contains_key(*id) {
                return Err(ConservationError(format!("`{id}` is not in the catalog")));
            }
            if *n != 1 {
                return Err(ConservationError(format!("`{id}` appears {n} times")));
            }
        }
        if let Some(missing) = self.catalog.keys().find(|id| !seen.contains_key(id.as_str())) {
            return Err(ConservationError(format!("`{missing}` has gone missing")));
        }
        Ok(())
    }
}

/// A loaded scenario: the initial world plus what the run needs around it.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub world: WorldState,
    pub beliefs: Option<BeliefState>,
    pub database: Option<Database>,
    pub root: Option<String>,
    pub inputs: BTreeMap<String, Value>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct ScenarioDoc {
    #[serde(default)]
    stations: BTreeMap<String, Vec<String>>,
    /// Object id to type; ids missing here take their type from the id with
    /// any `_<digits>` suffix removed.
    #[serde(default)]
    objects: BTreeMap<String, String>,
    #[serde(default)]
    kit: Vec<SlotDoc>,
    robot: Option<String>,
    root: Option<String>,
    #[serde(default)]
    inputs: BTreeMap<String, Yaml>,
    database: Option<Yaml>,
    beliefs: Option<Yaml>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SlotDoc {
    slot: String,
    accepts: String,
}

fn inferred_type(id: &str) -> &str {
    match id.rsplit_once('_') {
        Some((head, tail)) if !tail.is_empty() && tail.bytes().all(|b| b.is_ascii_digit()) => head,
        _ => id,
    }
}

fn known_type(t: &str) -> Result<(), SimError> {
    if OBJECT_TYPES.contains(&t) {
        Ok(())
    } else {
        Err(SimError::Scenario(format!("unknown object type `{t}`")))
    }
}

/// Parse a scenario document into its initial world, optional embedded belief
/// schema and database, and the root task to run.
pub fn build_world(document: &str) -> Result<Scenario, SimError> {
    let doc: Yaml = serde_yaml::from_str(document).map_err(|e| SimError::syntax(&e))?;
    let doc: ScenarioDoc = if doc.is_null() {
        ScenarioDoc::default()
    } else {
        serde_yaml::from_value(doc).map_err(|e| SimError::Scenario(e.to_string()))?
    };

    let mut world = WorldState::empty();
    let mut placed = BTreeSet::new();
    for (station, contents) in &doc.stations {
        for id in contents {
            if !placed.insert(id.clone()) {
                return Err(SimError::DuplicateObject(id.clone()));
            }
            let ty = doc.objects.get(id).map(String::as_str).unwrap_or_else(|| inferred_type(id));
            known_type(ty)?;
            world.catalog.insert(id.clone(), ty.to_string());
        }
        let mut sorted = contents.clone();
        sorted.sort();
        world.stations.insert(station.clone(), sorted);
    }
    if let Some(id) = doc.objects.keys().find(|id| !placed.contains(*id)) {
        return Err(SimError::Scenario(format!("object `{id}` is typed but not placed")));
    }
    let mut slots = BTreeSet::new();
    for s in doc.kit {
        known_type(&s.accepts)?;
        if !slots.insert(s.slot.clone()) {
            return Err(SimError::Scenario(format!("kit slot `{}` declared twice", s.slot)));
        }
        world.kit.push(KitSlot {
            name: s.slot,
            accepts: s.accepts,
            content: None,
        });
    }
    if let Some(r) = doc.robot {
        world.robot = RobotPose::At(r);
    }

    let database = doc
        .database
        .map(|y| serde_yaml::to_string(&y).map(|s| load_database(&s)))
        .transpose()
        .map_err(|e| SimError::Scenario(e.to_string()))?
        .transpose()?;
    let beliefs = doc
        .beliefs
        .map(|y| serde_yaml::to_string(&y).map(|s| load_belief_schema(&s)))
        .transpose()
        .map_err(|e| SimError::Scenario(e.to_string()))?
        .transpose()?;
    world.check_conservation().map_err(|e| SimError::Scenario(e.0))?;
    Ok(Scenario {
        world,
        beliefs,
        database,
        root: doc.root,
        inputs: doc.inputs.iter().map(|(k, v)| (k.clone(), Value::from_yaml(v))).collect(),
    })
}
