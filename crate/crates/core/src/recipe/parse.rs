use serde_yaml::{Mapping, Value as Yaml};

use super::{parse_expression, Expression, RecipeError, Step, StepKind, TaskDefinition, TaskLibrary};
use crate::value::{yaml_key, Value};

pub(crate) fn syntax_error(e: &serde_yaml::Error) -> RecipeError {
    let (line, column) = e.location().map(|l| (l.line(), l.column())).unwrap_or((0, 0));
    RecipeError::Syntax {
        line,
        column,
        message: e.to_string(),
    }
}

/// Parse a recipe document into an unvalidated [`TaskLibrary`].
pub fn parse_recipe(source: &str) -> Result<TaskLibrary, RecipeError> {
    let doc: Yaml = serde_yaml::from_str(source).map_err(|e| syntax_error(&e))?;
    let mut lib = TaskLibrary::new();
    let root = match doc {
        Yaml::Null => return Ok(lib),
        Yaml::Mapping(m) => m,
        _ => return Err(RecipeError::Structure("recipe document must be a map of task name to task".into())),
    };
    for (k, v) in root {
        let name = yaml_key(&k);
        let def = parse_task(&name, &v)?;
        lib.insert(def);
    }
    Ok(lib)
}

fn structure(msg: impl Into<String>) -> RecipeError {
    RecipeError::Structure(msg.into())
}

fn string_list(v: &Yaml, what: &str) -> Result<Vec<String>, RecipeError> {
    match v {
        Yaml::Null => Ok(Vec::new()),
        Yaml::Sequence(seq) => seq
            .iter()
            .map(|item| match item {
                Yaml::String(s) => Ok(s.clone()),
                other => Err(structure(format!("{what} entries must be names, found {other:?}"))),
            })
            .collect(),
        Yaml::String(s) => Ok(vec![s.clone()]),
        other => Err(structure(format!("{what} must be a list of names, found {other:?}"))),
    }
}

fn parse_task(name: &str, v: &Yaml) -> Result<TaskDefinition, RecipeError> {
    let map = v
        .as_mapping()
        .ok_or_else(|| structure(format!("task `{name}` must be a map")))?;
    let mut params = Vec::new();
    let mut vars = Vec::new();
    let mut steps = None;
    for (k, val) in map {
        match yaml_key(k).as_str() {
            "params" => params = string_list(val, "params")?,
            "var" => vars = string_list(val, "var")?,
            "steps" => steps = Some(parse_steps(name, val)?),
            other => return Err(structure(format!("task `{name}` has unknown key `{other}`"))),
        }
    }
    let steps = steps.ok_or_else(|| structure(format!("task `{name}` is missing `steps`")))?;
    if steps.is_empty() {
        return Err(structure(format!("task `{name}` has an empty `steps` list")));
    }
    Ok(TaskDefinition {
        name: name.to_string(),
        params,
        vars,
        steps,
    })
}

fn parse_steps(task: &str, v: &Yaml) -> Result<Vec<Step>, RecipeError> {
    match v {
        Yaml::Null => Ok(Vec::new()),
        Yaml::Sequence(seq) => seq.iter().map(|s| parse_step(task, s)).collect(),
        _ => Err(structure(format!("task `{task}`: steps must be a list"))),
    }
}

fn parse_step(task: &str, v: &Yaml) -> Result<Step, RecipeError> {
    let map = v
        .as_mapping()
        .ok_or_else(|| structure(format!("task `{task}`: each step must be a map")))?;
    let mut kind: Option<(StepKind, String)> = None;
    for (k, val) in map {
        let key = yaml_key(k);
        if let Some(sk) = StepKind::from_keyword(&key) {
            if let Some((prev, _)) = &kind {
                return Err(structure(format!("task `{task}`: step declares both `{prev}` and `{sk}`")));
            }
            let target = match val {
                Yaml::String(s) => s.clone(),
                other => return Err(structure(format!("task `{task}`: `{key}` must name a unit, found {other:?}"))),
            };
            kind = Some((sk, target));
        }
    }
    let Some((kind, head)) = kind else {
        let keys: Vec<String> = map.keys().map(yaml_key).collect();
        return Err(structure(format!(
            "task `{task}`: step has no kind (expected one of action/task/op/choice/loop), keys: {}",
            keys.join(", ")
        )));
    };

    let mut step = match kind {
        StepKind::Choice | StepKind::Loop => Step::bare(&head, kind, None),
        _ => Step::bare(&head, kind, Some(&head)),
    };

    for (k, val) in map {
        let key = yaml_key(k);
        if StepKind::from_keyword(&key).is_some() {
            continue;
        }
        let allowed = match key.as_str() {
            "name" => kind.has_target(),
            "params" | "var" => kind.has_target(),
            "condition" => !kind.has_target(),
            "if_true" | "if_false" => kind == StepKind::Choice,
            "body" => kind == StepKind::Loop,
            _ => {
                step.extra.push((key, Value::from_yaml(val)));
                continue;
            }
        };
        if !allowed {
            return Err(structure(format!(
                "task `{task}`: step `{}` of kind `{kind}` cannot have `{key}`",
                step.name
            )));
        }
        match key.as_str() {
            "name" => {
                step.name = val
                    .as_str()
                    .ok_or_else(|| structure(format!("task `{task}`: step name must be a string")))?
                    .to_string()
            }
            "params" => step.params = parse_params(task, &step.name, val)?,
            "var" => step.var = string_list(val, "var")?,
            "condition" => step.condition = Some(parse_condition(task, &step.name, val)?),
            "if_true" => step.if_true = parse_steps(task, val)?,
            "if_false" => step.if_false = parse_steps(task, val)?,
            "body" => step.body = parse_steps(task, val)?,
            _ => unreachable!("unknown keys handled above"),
        }
    }

    match kind {
        StepKind::Choice => {
            if step.condition.is_none() {
                return Err(structure(format!("task `{task}`: choice `{}` needs a condition", step.name)));
            }
            if step.if_true.is_empty() && step.if_false.is_empty() {
                return Err(structure(format!("task `{task}`: choice `{}` has no branches", step.name)));
            }
        }
        StepKind::Loop => {
            if step.condition.is_none() {
                return Err(structure(format!("task `{task}`: loop `{}` needs a condition", step.name)));
            }
            if step.body.is_empty() {
                return Err(structure(format!("task `{task}`: loop `{}` has an empty body", step.name)));
            }
        }
        _ => {}
    }
    Ok(step)
}

fn parse_params(task: &str, step: &str, v: &Yaml) -> Result<Vec<(String, Expression)>, RecipeError> {
    match v {
        Yaml::Null => Ok(Vec::new()),
        Yaml::Mapping(m) => Ok(m
            .iter()
            .map(|(k, val)| (yaml_key(k), Expression::from_param_value(Value::from_yaml(val))))
            .collect()),
        _ => Err(structure(format!("task `{task}`: params of step `{step}` must be a map"))),
    }
}

fn parse_condition(task: &str, step: &str, v: &Yaml) -> Result<Expression, RecipeError> {
    match v {
        Yaml::String(s) => parse_expression(s).map_err(|e| structure(format!("task `{task}`: step `{step}`: {e}"))),
        Yaml::Bool(b) => Ok(Expression::Literal(Value::Bool(*b))),
        other => Err(structure(format!("task `{task}`: condition of `{step}` must be an expression, found {other:?}"))),
    }
}

fn param_to_yaml(e: &Expression) -> Yaml {
    match e {
        Expression::Literal(v) => v.to_yaml(),
        other => Yaml::String(other.to_string()),
    }
}

fn step_to_yaml(step: &Step) -> Yaml {
    let mut m = Mapping::new();
    let head = step.target.clone().unwrap_or_else(|| step.name.clone());
    m.insert(Yaml::String(step.kind.keyword().into()), Yaml::String(head));
    if step.kind.has_target() && step.target.as_deref() != Some(step.name.as_str()) {
        m.insert("name".into(), Yaml::String(step.name.clone()));
    }
    if !step.params.is_empty() {
        let mut p = Mapping::new();
        for (k, e) in &step.params {
            p.insert(Yaml::String(k.clone()), param_to_yaml(e));
        }
        m.insert("params".into(), Yaml::Mapping(p));
    }
    if !step.var.is_empty() {
        m.insert("var".into(), names_to_yaml(&step.var));
    }
    if let Some(c) = &step.condition {
        let y = match c {
            Expression::Literal(Value::Bool(b)) => Yaml::Bool(*b),
            other => Yaml::String(other.to_string()),
        };
        m.insert("condition".into(), y);
    }
    for (key, list) in [("if_true", &step.if_true), ("if_false", &step.if_false), ("body", &step.body)] {
        if !list.is_empty() {
            m.insert(key.into(), Yaml::Sequence(list.iter().map(step_to_yaml).collect()));
        }
    }
    for (k, v) in &step.extra {
        m.insert(Yaml::String(k.clone()), v.to_yaml());
    }
    Yaml::Mapping(m)
}

fn names_to_yaml(names: &[String]) -> Yaml {
    Yaml::Sequence(names.iter().map(|s| Yaml::String(s.clone())).collect())
}

/// Render a library back to recipe text. Re-parsing yields a structurally
/// equal library.
pub fn serialize_recipe(lib: &TaskLibrary) -> String {
    let mut root = Mapping::new();
    for name in &lib.order {
        let def = &lib.definitions[name];
        let mut m = Mapping::new();
        if !def.params.is_empty() {
            m.insert("params".into(), names_to_yaml(&def.params));
        }
        if !def.vars.is_empty() {
            m.insert("var".into(), names_to_yaml(&def.vars));
        }
        m.insert("steps".into(), Yaml::Sequence(def.steps.iter().map(step_to_yaml).collect()));
        root.insert(Yaml::String(name.clone()), Yaml::Mapping(m));
    }
    serde_yaml::to_string(&Yaml::Mapping(root)).expect("yaml values always serialize")
}

#[cfg(test)]
mod tests {
    use super::*;

    const LISTING: &str = r#"
detect_schunk_pose_task:
  params:
  - look_location

  var:
  - chuck_approach_pose

  steps:
  - action: look
    params:
      pose: params.look_location

  - action: detect_schunk
    var:
    - chuck_approach_pose

pick_task:
  params: [object_idx, grasps, object_key]
  var: [grasped]
  steps:
  - action: pick
    params:
      object_idx: params.object_idx
      grasps: params.grasps
      object_key: params.object_key

  - action: verify_grasp
    params:
      abort_on_false: false
    var:
    - grasped
"#;

    #[test]
    fn parses_example_tasks() {
        let lib = parse_recipe(LISTING).unwrap();
        assert_eq!(lib.order, vec!["detect_schunk_pose_task", "pick_task"]);
        let d = lib.get("detect_schunk_pose_task").unwrap();
        assert_eq!(d.params, vec!["look_location"]);
        assert_eq!(d.vars, vec!["chuck_approach_pose"]);
        assert_eq!(d.steps.len(), 2);
        assert_eq!(d.steps[0].kind, StepKind::Action);
        assert_eq!(d.steps[0].target.as_deref(), Some("look"));
        assert_eq!(d.steps[0].param("pose"), Some(&Expression::ParamRef("look_location".into())));
        assert_eq!(d.steps[1].var, vec!["chuck_approach_pose"]);

        let p = lib.get("pick_task").unwrap();
        assert_eq!(p.params, vec!["object_idx", "grasps", "object_key"]);
        assert_eq!(p.steps[1].param("abort_on_false"), Some(&Expression::Literal(Value::Bool(false))));
        assert_eq!(p.steps[1].var, vec!["grasped"]);
    }

    #[test]
    fn empty_steps_is_structure_error() {
        let err = parse_recipe("t:\n  steps: []\n").unwrap_err();
        assert_eq!(err.code(), "STRUCTURE_ERROR");
        let err = parse_recipe("t:\n  params: [a]\n").unwrap_err();
        assert_eq!(err.code(), "STRUCTURE_ERROR");
    }

    #[test]
    fn conflicting_or_missing_kind_is_structure_error() {
        let err = parse_recipe("t:\n  steps:\n  - action: a\n    task: b\n").unwrap_err();
        assert_eq!(err.code(), "STRUCTURE_ERROR");
        let err = parse_recipe("t:\n  steps:\n  - sense: a\n").unwrap_err();
        assert_eq!(err.code(), "STRUCTURE_ERROR");
    }

    #[test]
    fn syntax_error_carries_location() {
        let err = parse_recipe("t:\n  steps:\n  - action: [a\n").unwrap_err();
        match err {
            RecipeError::Syntax { line, .. } => assert!(line >= 3, "line {line}"),
            other => panic!("expected syntax error, got {other:?}"),
        }
    }

    #[test]
    fn choice_and_loop_keys() {
        let src = r#"
t:
  steps:
  - op: assign
    name: init
    params: {value: 0}
    var: [n]
  - loop: count
    condition: var.n < 3
    body:
    - op: increment
      params: {value: var.n}
      var: [n]
  - choice: check
    condition: var.n == 3
    if_true:
    - action: beep
    note: kept
"#;
        let lib = parse_recipe(src).unwrap();
        let t = lib.get("t").unwrap();
        assert_eq!(t.steps[0].name, "init");
        assert_eq!(t.steps[1].kind, StepKind::Loop);
        assert_eq!(t.steps[1].body.len(), 1);
        assert_eq!(t.steps[2].if_true[0].target.as_deref(), Some("beep"));
        assert_eq!(t.steps[2].extra[0].0, "note");
        let again = parse_recipe(&serialize_recipe(&lib)).unwrap();
        assert!(again.same_structure(&lib));
    }

    #[test]
    fn loop_needs_body_and_choice_needs_branch() {
        assert!(parse_recipe("t:\n  steps:\n  - loop: l\n    condition: true\n").is_err());
        assert!(parse_recipe("t:\n  steps:\n  - choice: c\n    condition: true\n").is_err());
        assert!(parse_recipe("t:\n  steps:\n  - action: a\n    body: []\n").is_err());
    }

    #[test]
    fn listing_roundtrip() {
        let lib = parse_recipe(LISTING).unwrap();
        let text = serialize_recipe(&lib);
        assert!(parse_recipe(&text).unwrap().same_structure(&lib));
    }
}
