//! JSON documents: instances, run settings, and solve results.
//!
//! Instance documents use task-major nested arrays for matrices and list
//! optional fixed and forbidden pairs as `{task, worker}` objects. Parse
//! errors carry the field path together with the line and column.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::Method;
use crate::model::{Assignment, Instance, Matrix, ScalingPair, SupportSet};
use crate::solver::{IterationRecord, SolverConfig};

/// Deserializes `text`, reporting the failing field path and position.
pub fn parse_json<T: DeserializeOwned>(text: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        let (line, column) = (inner.line(), inner.column());
        let full = inner.to_string();
        let suffix = format!(" at line {line} column {column}");
        let message = full.strip_suffix(&suffix).unwrap_or(&full).to_string();
        Error::Parse {
            path,
            line,
            column,
            message,
        }
    })
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("documents serialize to JSON");
    s.push('\n');
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskWorker {
    pub task: usize,
    pub worker: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SupportKind {
    Box,
    Polytope,
}

/// `{"type": "box", "l", "u"}` or `{"type": "polytope", "G", "h"}`. Kept as a
/// flat struct so parse errors can point inside it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SupportDocument {
    #[serde(rename = "type")]
    pub kind: SupportKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u: Option<Vec<f64>>,
    #[serde(default, rename = "G", skip_serializing_if = "Option::is_none")]
    pub g: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<Vec<f64>>,
}

fn required<T>(v: Option<T>, key: &str, kind: &str) -> Result<T> {
    v.ok_or_else(|| Error::InvalidInstance(vec![format!("support.{key} is required for a {kind} support")]))
}

impl SupportDocument {
    fn into_support(self, n_tasks: usize) -> Result<SupportSet> {
        match self.kind {
            SupportKind::Box => {
                if self.g.is_some() || self.h.is_some() {
                    return Err(Error::InvalidInstance(vec!["a box support takes only l and u".into()]));
                }
                Ok(SupportSet::Box {
                    l: required(self.l, "l", "box")?,
                    u: required(self.u, "u", "box")?,
                })
            }
            SupportKind::Polytope => {
                if self.l.is_some() || self.u.is_some() {
                    return Err(Error::InvalidInstance(vec!["a polytope support takes only G and h".into()]));
                }
                let g = required(self.g, "G", "polytope")?;
                let cols = g.first().map_or(n_tasks, Vec::len);
                Ok(SupportSet::Polytope {
                    g: matrix_field("support.G", &g, cols)?,
                    h: required(self.h, "h", "polytope")?,
                })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceDocument {
    pub n_tasks: usize,
    pub n_workers: usize,
    /// `rewards[i][j]` for task `i` and worker `j`.
    pub rewards: Vec<Vec<f64>>,
    pub mu: Vec<f64>,
    pub support: SupportDocument,
    pub delta: f64,
    pub epsilon: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fixed_assignments: Vec<TaskWorker>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub forbidden: Vec<TaskWorker>,
}

fn pairs(list: &[(usize, usize)]) -> Vec<TaskWorker> {
    list.iter().map(|&(task, worker)| TaskWorker { task, worker }).collect()
}

fn matrix_field(name: &str, rows: &[Vec<f64>], cols: usize) -> Result<Matrix> {
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != cols) {
        return Err(Error::InvalidInstance(vec![format!(
            "{name}[{i}] has {} entries, expected {cols}",
            r.len()
        )]));
    }
    Matrix::from_row_major(rows.len(), cols, rows.concat())
}

impl InstanceDocument {
    pub fn from_instance(inst: &Instance) -> Self {
        let support = match &inst.support {
            SupportSet::Box { l, u } => SupportDocument {
                kind: SupportKind::Box,
                l: Some(l.clone()),
                u: Some(u.clone()),
                g: None,
                h: None,
            },
            SupportSet::Polytope { g, h } => SupportDocument {
                kind: SupportKind::Polytope,
                l: None,
                u: None,
                g: Some(g.to_rows()),
                h: Some(h.clone()),
            },
        };
        Self {
            n_tasks: inst.n_tasks,
            n_workers: inst.n_workers,
            rewards: inst.rewards.to_rows(),
            mu: inst.mu.clone(),
            support,
            delta: inst.delta,
            epsilon: inst.epsilon,
            fixed_assignments: pairs(&inst.fixed),
            forbidden: pairs(&inst.forbidden),
        }
    }

    /// Converts and validates.
    pub fn into_instance(self) -> Result<Instance> {
        let support = self.support.into_support(self.n_tasks)?;
        Instance {
            n_tasks: self.n_tasks,
            n_workers: self.n_workers,
            rewards: matrix_field("rewards", &self.rewards, self.n_workers)?,
            mu: self.mu,
            support,
            delta: self.delta,
            epsilon: self.epsilon,
            fixed: self.fixed_assignments.iter().map(|p| (p.task, p.worker)).collect(),
            forbidden: self.forbidden.iter().map(|p| (p.task, p.worker)).collect(),
        }
        .validated()
    }
}

pub fn parse_instance(text: &str) -> Result<Instance> {
    parse_json::<InstanceDocument>(text)?.into_instance()
}

pub fn instance_to_json(inst: &Instance) -> String {
    to_json(&InstanceDocument::from_instance(inst))
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instance: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evaluation: Option<u64>,
}

/// Everything needed to rerun a solve: method, solver settings, seeds and
/// file locations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunDocument {
    pub method: Method,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub seeds: Seeds,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instance_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_path: Option<String>,
}

impl RunDocument {
    pub fn new(method: Method, solver: SolverConfig) -> Self {
        Self {
            method,
            solver,
            seeds: Seeds::default(),
            instance_path: None,
            output_path: None,
        }
    }
}

/// Result of a solve: the assignment as a 0/1 matrix plus the run record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveDocument {
    pub run: RunDocument,
    pub assignment: Vec<Vec<f64>>,
    pub reward: f64,
    pub g: f64,
    pub v: f64,
    pub converged: bool,
    pub feasible_for_dro: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<IterationRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_scaling: Option<ScalingPair>,
    pub wall_time_ms: f64,
}

#[derive(Deserialize)]
struct AssignmentOnly {
    assignment: Vec<Vec<f64>>,
}

/// Reads the `assignment` matrix of a solve document, ignoring other keys.
pub fn parse_assignment(text: &str) -> Result<Assignment> {
    let doc: AssignmentOnly = parse_json(text)?;
    let cols = doc.assignment.first().map_or(0, Vec::len);
    if let Some(i) = doc.assignment.iter().position(|r| r.len() != cols) {
        return Err(Error::Dimension(format!("assignment[{i}] is ragged")));
    }
    let m = Matrix::from_row_major(doc.assignment.len(), cols, doc.assignment.concat())?;
    Assignment::from_matrix(&m, 1e-6)
}
