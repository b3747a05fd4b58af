use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use serde_yaml::Value as Yaml;

use super::KnowledgeError;
use crate::value::{yaml_key, Value};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Orientation {
    Yaw(f64),
    Quaternion { x: f64, y: f64, z: f64, w: f64 },
}

/// Position in meters with a planar yaw or a quaternion orientation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub orientation: Orientation,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObjectSpec {
    pub name: String,
    pub length: f64,
    pub width: f64,
    pub height: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum TypedValue {
    Scalar(Value),
    Pose(Pose),
    Waypoint { name: String, pose: Pose },
    Object(ObjectSpec),
    List(Vec<TypedValue>),
}

impl Pose {
    fn fields(&self) -> BTreeMap<String, Value> {
        let mut m = BTreeMap::new();
        m.insert("x".into(), Value::Float(self.x));
        m.insert("y".into(), Value::Float(self.y));
        m.insert("z".into(), Value::Float(self.z));
        match self.orientation {
            Orientation::Yaw(yaw) => {
                m.insert("yaw".into(), Value::Float(yaw));
            }
            Orientation::Quaternion { x, y, z, w } => {
                m.insert("qx".into(), Value::Float(x));
                m.insert("qy".into(), Value::Float(y));
                m.insert("qz".into(), Value::Float(z));
                m.insert("qw".into(), Value::Float(w));
            }
        }
        m
    }
}

impl TypedValue {
    /// Runtime representation handed to actions and expressions.
    pub fn to_value(&self) -> Value {
        match self {
            TypedValue::Scalar(v) => v.clone(),
            TypedValue::Pose(p) => Value::Map(p.fields()),
            TypedValue::Waypoint { name, pose } => {
                let mut m = pose.fields();
                m.insert("name".into(), Value::Str(name.clone()));
                Value::Map(m)
            }
            TypedValue::Object(o) => {
                let mut m = BTreeMap::new();
                m.insert("name".into(), Value::Str(o.name.clone()));
                m.insert("length".into(), Value::Float(o.length));
                m.insert("width".into(), Value::Float(o.width));
                m.insert("height".into(), Value::Float(o.height));
                Value::Map(m)
            }
            TypedValue::List(items) => Value::List(items.iter().map(TypedValue::to_value).collect()),
        }
    }

    fn subfields(&self) -> Option<BTreeMap<String, Value>> {
        match self {
            TypedValue::Pose(_) | TypedValue::Waypoint { .. } | TypedValue::Object(_) => self.to_value().as_map().cloned(),
            _ => None,
        }
    }
}

/// Immutable key-value store for grounding task variables. There is no way to
/// mutate a loaded database.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Database {
    entries: BTreeMap<String, TypedValue>,
}

impl Database {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Exact lookup, falling back to a field of a pose, waypoint, or object
    /// (`objects.large_gear.length`).
    pub fn get(&self, key: &str) -> Result<TypedValue, KnowledgeError> {
        if let Some(v) = self.entries.get(key) {
            return Ok(v.clone());
        }
        if let Some((head, field)) = key.rsplit_once('.') {
            if let Some(fields) = self.entries.get(head).and_then(TypedValue::subfields) {
                if let Some(v) = fields.get(field) {
                    return Ok(TypedValue::Scalar(v.clone()));
                }
            }
        }
        Err(KnowledgeError::UnknownKey(key.to_string()))
    }

    pub fn get_value(&self, key: &str) -> Result<Value, KnowledgeError> {
        self.get(key).map(|t| t.to_value())
    }

    pub fn entries(&self) -> &BTreeMap<String, TypedValue> {
        &self.entries
    }

    /// Every resolvable key, including structured sub-fields.
    pub fn keys(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        for (k, v) in &self.entries {
            out.insert(k.clone());
            if let Some(fields) = v.subfields() {
                out.extend(fields.keys().map(|f| format!("{k}.{f}")));
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn type_err(key: &str, message: impl Into<String>) -> KnowledgeError {
    KnowledgeError::Type {
        key: key.to_string(),
        message: message.into(),
    }
}

fn number(key: &str, m: &serde_yaml::Mapping, field: &str) -> Result<Option<f64>, KnowledgeError> {
    match m.get(field) {
        None => Ok(None),
        Some(Yaml::Number(n)) => Ok(n.as_f64()),
        Some(other) => Err(type_err(key, format!("`{field}` must be a number, found {other:?}"))),
    }
}

fn require(key: &str, m: &serde_yaml::Mapping, field: &str) -> Result<f64, KnowledgeError> {
    number(key, m, field)?.ok_or_else(|| type_err(key, format!("missing `{field}`")))
}

fn check_fields(key: &str, m: &serde_yaml::Mapping, allowed: &[&str]) -> Result<(), KnowledgeError> {
    for k in m.keys() {
        let k = yaml_key(k);
        if !allowed.contains(&k.as_str()) {
            return Err(type_err(key, format!("unexpected field `{k}`")));
        }
    }
    Ok(())
}

fn parse_pose(key: &str, v: &Yaml) -> Result<Pose, KnowledgeError> {
    let m = v.as_mapping().ok_or_else(|| type_err(key, "pose must be a map"))?;
    check_fields(key, m, &["x", "y", "z", "yaw", "qx", "qy", "qz", "qw", "name"])?;
    let x = require(key, m, "x")?;
    let y = require(key, m, "y")?;
    let z = number(key, m, "z")?.unwrap_or(0.0);
    let yaw = number(key, m, "yaw")?;
    let quat = [number(key, m, "qx")?, number(key, m, "qy")?, number(key, m, "qz")?, number(key, m, "qw")?];
    let orientation = match (yaw, quat) {
        (Some(_), q) if q.iter().any(Option::is_some) => return Err(type_err(key, "pose has both yaw and quaternion")),
        (Some(yaw), _) => Orientation::Yaw(yaw),
        (None, [Some(x), Some(y), Some(z), Some(w)]) => Orientation::Quaternion { x, y, z, w },
        (None, [None, None, None, None]) => Orientation::Yaw(0.0),
        (None, _) => return Err(type_err(key, "quaternion needs qx, qy, qz, qw")),
    };
    Ok(Pose { x, y, z, orientation })
}

fn last_segment(key: &str) -> String {
    key.rsplit('.').next().unwrap_or(key).to_string()
}

fn parse_typed(key: &str, v: &Yaml) -> Result<TypedValue, KnowledgeError> {
    match v {
        Yaml::Mapping(m) if m.len() == 1 => {
            let (k, inner) = m.iter().next().expect("len checked");
            match yaml_key(k).as_str() {
                "pose" => Ok(TypedValue::Pose(parse_pose(key, inner)?)),
                "waypoint" => {
                    let pose = parse_pose(key, inner)?;
                    let name = match inner.get("name") {
                        None => last_segment(key),
                        Some(Yaml::String(s)) => s.clone(),
                        Some(other) => return Err(type_err(key, format!("waypoint name must be a string, found {other:?}"))),
                    };
                    Ok(TypedValue::Waypoint { name, pose })
                }
                "object" => {
                    let om = inner.as_mapping().ok_or_else(|| type_err(key, "object must be a map"))?;
                    check_fields(key, om, &["name", "length", "width", "height"])?;
                    let name = match om.get("name") {
                        None => last_segment(key),
                        Some(Yaml::String(s)) => s.clone(),
                        Some(other) => return Err(type_err(key, format!("object name must be a string, found {other:?}"))),
                    };
                    Ok(TypedValue::Object(ObjectSpec {
                        name,
                        length: require(key, om, "length")?,
                        width: require(key, om, "width")?,
                        height: require(key, om, "height")?,
                    }))
                }
                "list" => match inner {
                    Yaml::Sequence(items) => Ok(TypedValue::List(
                        items
                            .iter()
                            .enumerate()
                            .map(|(i, it)| parse_typed(&format!("{key}[{i}]"), it))
                            .collect::<Result<_, _>>()?,
                    )),
                    _ => Err(type_err(key, "list must be a sequence")),
                },
                _ => Err(type_err(key, "not a typed entry")),
            }
        }
        Yaml::Sequence(items) => Ok(TypedValue::List(
            items
                .iter()
                .enumerate()
                .map(|(i, it)| parse_typed(&format!("{key}[{i}]"), it))
                .collect::<Result<_, _>>()?,
        )),
        Yaml::Mapping(_) => Err(type_err(key, "not a typed entry")),
        scalar => Ok(TypedValue::Scalar(Value::from_yaml(scalar))),
    }
}

fn is_typed_tag(m: &serde_yaml::Mapping) -> bool {
    m.len() == 1
        && m
            .keys()
            .next()
            .map(|k| matches!(yaml_key(k).as_str(), "pose" | "waypoint" | "object" | "list"))
            .unwrap_or(false)
}

fn flatten(prefix: &str, m: &serde_yaml::Mapping, out: &mut BTreeMap<String, TypedValue>) -> Result<(), KnowledgeError> {
    for (k, v) in m {
        let k = yaml_key(k);
        let key = if prefix.is_empty() { k } else { format!("{prefix}.{k}") };
        match v {
            Yaml::Mapping(inner) if !is_typed_tag(inner) => flatten(&key, inner, out)?,
            other => {
                let typed = parse_typed(&key, other)?;
                if out.insert(key.clone(), typed).is_some() {
                    return Err(KnowledgeError::DuplicateKey(key));
                }
            }
        }
    }
    Ok(())
}

/// Load a database document. Nested maps are namespaces joined with `.`;
/// single-key maps tagged `pose`, `waypoint`, `object`, or `list` declare a
/// structured entry; other scalars are stored as-is.
pub fn load_database(document: &str) -> Result<Database, KnowledgeError> {
    let doc: Yaml = serde_yaml::from_str(document).map_err(|e| KnowledgeError::syntax(&e))?;
    let mut entries = BTreeMap::new();
    match doc {
        Yaml::Null => {}
        Yaml::Mapping(m) => flatten("", &m, &mut entries)?,
        _ => return Err(type_err("", "database document must be a map")),
    }
    Ok(Database { entries })
}

#[cfg(test)]
mod tests {
    use super::*;

    const DOC: &str = r#"
waypoints:
  schunk_station: {waypoint: {x: 2.5, y: -1.0, yaw: 0.75}}
poses:
  kit_view: {pose: {x: 0.4, y: 0.0, z: 0.8, qx: 0.0, qy: 0.0, qz: 0.0, qw: 1.0}}
objects:
  large_gear: {object: {length: 0.12, width: 0.12, height: 0.03}}
robot.max_speed: 0.5
stations: [caddy_table, gear_table]
"#;

    #[test]
    fn loads_typed_entries() {
        let db = load_database(DOC).unwrap();
        match db.get("waypoints.schunk_station").unwrap() {
            TypedValue::Waypoint { name, pose } => {
                assert_eq!(name, "schunk_station");
                assert_eq!(pose.x, 2.5);
                assert_eq!(pose.orientation, Orientation::Yaw(0.75));
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(db.get("poses.kit_view").unwrap(), TypedValue::Pose(Pose { orientation: Orientation::Quaternion { .. }, .. })));
        assert_eq!(db.get("robot.max_speed").unwrap(), TypedValue::Scalar(Value::Float(0.5)));
        assert!(matches!(db.get("stations").unwrap(), TypedValue::List(l) if l.len() == 2));
    }

    #[test]
    fn nested_object_field() {
        let db = load_database(DOC).unwrap();
        assert_eq!(db.get("objects.large_gear.length").unwrap(), TypedValue::Scalar(Value::Float(0.12)));
        assert!(db.keys().contains("objects.large_gear.height"));
        assert_eq!(db.get("objects.large_gear.mass").unwrap_err().code(), "UNKNOWN_KEY");
    }

    #[test]
    fn empty_document() {
        let db = load_database("").unwrap();
        assert!(db.is_empty());
        assert_eq!(db.get("anything").unwrap_err(), KnowledgeError::UnknownKey("anything".into()));
    }

    #[test]
    fn string_yaw_is_type_error() {
        let err = load_database("w: {waypoint: {x: 1, y: 2, yaw: north}}").unwrap_err();
        assert_eq!(err.code(), "TYPE_ERROR");
    }

    #[test]
    fn malformed_document_is_syntax_error() {
        let err = load_database("a: [1, 2\n").unwrap_err();
        assert_eq!(err.code(), "SYNTAX_ERROR");
    }

    #[test]
    fn dotted_and_nested_keys_collide() {
        let err = load_database("a.b: 1\na:\n  b: 2\n").unwrap_err();
        assert_eq!(err.code(), "DUPLICATE_KEY");
    }
}
