use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use super::{RecipeError, Step, StepKind, TaskLibrary};
use crate::value::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum NodeKind {
    Task,
    Action,
    Op,
    Choice,
    Loop,
}

/// One node of a static task expansion.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TreeNode {
    /// Unit name for actions/tasks/ops, `C` for choices, `L` for loops.
    pub label: String,
    pub kind: NodeKind,
    /// Step name within the parent (empty for the root).
    pub step: String,
    /// n-th invocation of this unit across the expansion, for actions and tasks.
    pub ordinal: Option<u32>,
    /// `true`/`false` for children of a choice node.
    pub branch: Option<bool>,
    pub children: Vec<TreeNode>,
}

impl TreeNode {
    pub fn count(&self) -> usize {
        1 + self.children.iter().map(TreeNode::count).sum::<usize>()
    }

    /// Leaf labels in preorder.
    pub fn leaves(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a str>) {
        if self.children.is_empty() {
            out.push(&self.label);
        }
        for c in &self.children {
            c.collect_leaves(out);
        }
    }

    pub fn depth(&self) -> usize {
        1 + self.children.iter().map(TreeNode::depth).max().unwrap_or(0)
    }

    /// Display name with the invocation suffix, e.g. `look_3`.
    pub fn display_name(&self) -> String {
        match self.ordinal {
            Some(n) => format!("{}_{n}", self.label),
            None => self.label.clone(),
        }
    }
}

struct Expander<'a> {
    lib: &'a TaskLibrary,
    ordinals: BTreeMap<String, u32>,
}

impl Expander<'_> {
    fn next_ordinal(&mut self, name: &str) -> u32 {
        let n = self.ordinals.entry(name.to_string()).or_insert(0);
        *n += 1;
        *n
    }

    fn task(&mut self, name: &str, step: &str) -> TreeNode {
        let ordinal = self.next_ordinal(name);
        let def = self.lib.get(name).expect("validated library resolves task targets");
        let children = def.steps.iter().map(|s| self.step(s, None)).collect();
        TreeNode {
            label: name.to_string(),
            kind: NodeKind::Task,
            step: step.to_string(),
            ordinal: Some(ordinal),
            branch: None,
            children,
        }
    }

    fn step(&mut self, step: &Step, branch: Option<bool>) -> TreeNode {
        let target = step.target.as_deref().unwrap_or_default();
        let mut node = match step.kind {
            StepKind::Task => self.task(target, &step.name),
            StepKind::Action | StepKind::Op => {
                let kind = if step.kind == StepKind::Action { NodeKind::Action } else { NodeKind::Op };
                let ordinal = (step.kind == StepKind::Action).then(|| self.next_ordinal(target));
                TreeNode {
                    label: target.to_string(),
                    kind,
                    step: step.name.clone(),
                    ordinal,
                    branch: None,
                    children: Vec::new(),
                }
            }
            StepKind::Choice => {
                let mut children: Vec<TreeNode> = step.if_true.iter().map(|s| self.step(s, Some(true))).collect();
                children.extend(step.if_false.iter().map(|s| self.step(s, Some(false))));
                TreeNode {
                    label: "C".into(),
                    kind: NodeKind::Choice,
                    step: step.name.clone(),
                    ordinal: None,
                    branch: None,
                    children,
                }
            }
            StepKind::Loop => TreeNode {
                label: "L".into(),
                kind: NodeKind::Loop,
                step: step.name.clone(),
                ordinal: None,
                branch: None,
                children: step.body.iter().map(|s| self.step(s, None)).collect(),
            },
        };
        node.branch = branch;
        node
    }
}

/// Statically expand `root` into its task tree. Choice and loop nodes keep
/// all branches beneath a `C`/`L` marker. `static_bindings` are accepted for
/// interface parity; expansion does not evaluate conditions.
pub fn expand_tree(library: &TaskLibrary, root: &str, static_bindings: &BTreeMap<String, Value>) -> Result<TreeNode, RecipeError> {
    let _ = static_bindings;
    if !library.is_validated() {
        return Err(RecipeError::NotValidated);
    }
    if library.get(root).is_none() {
        return Err(RecipeError::UnknownRoot(root.to_string()));
    }
    let mut ex = Expander {
        lib: library,
        ordinals: BTreeMap::new(),
    };
    Ok(ex.task(root, ""))
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Render a tree as a DOT digraph. Node ids follow preorder.
pub fn to_dot(root: &TreeNode) -> String {
    fn walk(node: &TreeNode, next_id: &mut usize, nodes: &mut String, edges: &mut String) -> usize {
        let id = *next_id;
        *next_id += 1;
        let shape = match node.kind {
            NodeKind::Task => "box",
            NodeKind::Action => "ellipse",
            NodeKind::Op => "note",
            NodeKind::Choice => "diamond",
            NodeKind::Loop => "circle",
        };
        let _ = writeln!(nodes, "  n{id} [label=\"{}\", shape={shape}];", escape(&node.display_name()));
        for c in &node.children {
            let cid = walk(c, next_id, nodes, edges);
            match c.branch {
                Some(b) => {
                    let _ = writeln!(edges, "  n{id} -> n{cid} [label=\"{b}\"];");
                }
                None => {
                    let _ = writeln!(edges, "  n{id} -> n{cid};");
                }
            }
        }
        id
    }
    let mut nodes = String::new();
    let mut edges = String::new();
    let mut next_id = 0;
    walk(root, &mut next_id, &mut nodes, &mut edges);
    format!("digraph \"{}\" {{\n{nodes}{edges}}}\n", escape(&root.label))
}
