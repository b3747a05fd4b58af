use std::collections::BTreeMap;
use std::sync::Arc;

use super::action::ActionHandler;
use super::ExecError;
use crate::recipe::{ActionSchema, Catalog};
use crate::value::Value;

pub type OpFn = Arc<dyn Fn(&[Value]) -> Result<Vec<Value>, String> + Send + Sync>;

/// Names of the ops every registry starts with.
pub const BUILTIN_OPS: [&str; 7] = ["noop", "get_index", "increment", "decrement", "make_list", "negate", "assign"];

/// Action handlers and op transforms resolvable by recipes.
pub struct Registry<W> {
    actions: BTreeMap<String, Arc<dyn ActionHandler<W>>>,
    ops: BTreeMap<String, OpFn>,
}

impl<W> Default for Registry<W> {
    fn default() -> Self {
        Self::new()
    }
}

impl<W> Clone for Registry<W> {
    fn clone(&self) -> Self {
        Registry {
            actions: self.actions.clone(),
            ops: self.ops.clone(),
        }
    }
}

fn step_number(v: &Value, delta: i64) -> Result<Value, String> {
    match v {
        Value::Int(i) => Ok(Value::Int(i + delta)),
        Value::Float(f) => Ok(Value::Float(f + delta as f64)),
        other => Err(format!("expected a number, found {}", other.kind())),
    }
}

fn one_arg(args: &[Value]) -> Result<&Value, String> {
    match args {
        [a] => Ok(a),
        _ => Err(format!("expected 1 argument, found {}", args.len())),
    }
}

fn builtin(name: &str) -> OpFn {
    match name {
        "noop" => Arc::new(|_| Ok(Vec::new())),
        "get_index" => Arc::new(|args| match args {
            [Value::List(items), idx] => {
                let i = idx.as_i64().ok_or("index must be an integer")?;
                let i = if i < 0 { items.len() as i64 + i } else { i };
                usize::try_from(i)
                    .ok()
                    .and_then(|i| items.get(i))
                    .cloned()
                    .map(|v| vec![v])
                    .ok_or_else(|| format!("index {i} out of range for list of {}", items.len()))
            }
            _ => Err("get_index expects (list, index)".into()),
        }),
        "increment" => Arc::new(|args| Ok(vec![step_number(one_arg(args)?, 1)?])),
        "decrement" => Arc::new(|args| Ok(vec![step_number(one_arg(args)?, -1)?])),
        "make_list" => Arc::new(|args| Ok(vec![Value::List(args.to_vec())])),
        "negate" => Arc::new(|args| match one_arg(args)? {
            Value::Bool(b) => Ok(vec![Value::Bool(!b)]),
            Value::Int(i) => Ok(vec![Value::Int(-i)]),
            Value::Float(f) => Ok(vec![Value::Float(-f)]),
            other => Err(format!("cannot negate {}", other.kind())),
        }),
        "assign" => Arc::new(|args| Ok(args.to_vec())),
        _ => unreachable!("not a builtin op: {name}"),
    }
}

impl<W> Registry<W> {
    /// A registry holding the builtin op catalog and no actions.
    pub fn new() -> Self {
        let ops = BUILTIN_OPS.iter().map(|n| (n.to_string(), builtin(n))).collect();
        Registry {
            actions: BTreeMap::new(),
            ops,
        }
    }

    pub fn register_action<H>(&mut self, name: &str, handler: H) -> Result<(), ExecError>
    where
        H: ActionHandler<W> + 'static,
    {
        if self.actions.contains_key(name) {
            return Err(ExecError::DuplicateName(name.to_string()));
        }
        self.actions.insert(name.to_string(), Arc::new(handler));
        Ok(())
    }

    pub fn register_op<F>(&mut self, name: &str, transform: F) -> Result<(), ExecError>
    where
        F: Fn(&[Value]) -> Result<Vec<Value>, String> + Send + Sync + 'static,
    {
        if self.ops.contains_key(name) {
            return Err(ExecError::DuplicateName(name.to_string()));
        }
        self.ops.insert(name.to_string(), Arc::new(transform));
        Ok(())
    }

    pub fn action(&self, name: &str) -> Option<&Arc<dyn ActionHandler<W>>> {
        self.actions.get(name)
    }

    pub fn op(&self, name: &str) -> Option<&OpFn> {
        self.ops.get(name)
    }

    pub fn action_names(&self) -> impl Iterator<Item = &str> {
        self.actions.keys().map(String::as_str)
    }

    pub fn op_names(&self) -> impl Iterator<Item = &str> {
        self.ops.keys().map(String::as_str)
    }
}

impl<W> Catalog for Registry<W> {
    fn has_action(&self, name: &str) -> bool {
        self.actions.contains_key(name)
    }

    fn action_schema(&self, name: &str) -> Option<ActionSchema> {
        self.actions.get(name).and_then(|h| h.schema())
    }

    fn has_op(&self, name: &str) -> bool {
        self.ops.contains_key(name)
    }
}
