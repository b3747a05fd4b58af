use std::cmp::Ordering;
use std::collections::BTreeMap;

use thiserror::Error;

use crate::knowledge::{BeliefState, Database};
use crate::recipe::{BoolOp, CompareOp, Expression};
use crate::value::Value;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("unbound reference `{0}`")]
    Unbound(String),
    #[error("type error: {0}")]
    Type(String),
}

impl EvalError {
    pub fn code(&self) -> &'static str {
        match self {
            EvalError::Unbound(_) => "UNBOUND_REFERENCE",
            EvalError::Type(_) => "TYPE_ERROR",
        }
    }
}

/// Names an expression can see.
pub struct Scope<'a> {
    pub params: &'a BTreeMap<String, Value>,
    pub vars: &'a BTreeMap<String, Value>,
    pub database: &'a Database,
    pub beliefs: &'a BeliefState,
}

fn resolve(expr: &Expression, scope: &Scope<'_>) -> Result<Value, EvalError> {
    match expr {
        Expression::ParamRef(n) => scope.params.get(n).cloned().ok_or_else(|| EvalError::Unbound(format!("params.{n}"))),
        Expression::VarRef(n) => scope.vars.get(n).cloned().ok_or_else(|| EvalError::Unbound(format!("var.{n}"))),
        Expression::DbRef(k) => scope.database.get_value(k).map_err(|_| EvalError::Unbound(format!("db.{k}"))),
        Expression::BeliefRef(k) => scope
            .beliefs
            .get(k)
            .map(Value::Float)
            .ok_or_else(|| EvalError::Unbound(format!("belief.{k}"))),
        other => evaluate(other, scope),
    }
}

fn truth(v: Value, what: &str) -> Result<bool, EvalError> {
    v.as_bool()
        .ok_or_else(|| EvalError::Type(format!("{what} needs a bool, found {}", v.kind())))
}

/// Evaluate an expression. Pure; `and`/`or` short-circuit.
pub fn evaluate(expr: &Expression, scope: &Scope<'_>) -> Result<Value, EvalError> {
    match expr {
        Expression::Literal(v) => Ok(v.clone()),
        Expression::ParamRef(_) | Expression::VarRef(_) | Expression::DbRef(_) | Expression::BeliefRef(_) => resolve(expr, scope),
        Expression::Exists(inner) => Ok(Value::Bool(resolve(inner, scope).is_ok())),
        Expression::Compare { op, lhs, rhs } => {
            let l = evaluate(lhs, scope)?;
            let r = evaluate(rhs, scope)?;
            let incompatible = || EvalError::Type(format!("cannot compare {} {} {}", l.kind(), op.symbol(), r.kind()));
            let result = match op {
                CompareOp::Eq => l.loose_eq(&r).ok_or_else(incompatible)?,
                CompareOp::Ne => !l.loose_eq(&r).ok_or_else(incompatible)?,
                _ => {
                    let ord = l.partial_order(&r).ok_or_else(incompatible)?;
                    match op {
                        CompareOp::Lt => ord == Ordering::Less,
                        CompareOp::Le => ord != Ordering::Greater,
                        CompareOp::Gt => ord == Ordering::Greater,
                        CompareOp::Ge => ord != Ordering::Less,
                        CompareOp::Eq | CompareOp::Ne => unreachable!(),
                    }
                }
            };
            Ok(Value::Bool(result))
        }
        Expression::Bool { op: BoolOp::Not, operands } => {
            let inner = operands.first().ok_or_else(|| EvalError::Type("`not` needs an operand".into()))?;
            Ok(Value::Bool(!truth(evaluate(inner, scope)?, "not")?))
        }
        Expression::Bool { op, operands } => {
            let short = *op == BoolOp::Or;
            for o in operands {
                if truth(evaluate(o, scope)?, if short { "or" } else { "and" })? == short {
                    return Ok(Value::Bool(short));
                }
            }
            Ok(Value::Bool(!short))
        }
    }
}
