//! Benchmark problems: instance types, text formats, model builders and
//! exact oracles.

mod kp;
mod maxcut;
mod tsp;

pub use kp::{build_kp_model, exact_kp, parse_kplib, KpInstance};
pub use maxcut::{build_mcp_model, exact_maxcut, generate_random_maxcut, parse_maxcut, McInstance};
pub use tsp::{build_tsp_model, exact_tsp, parse_tsplib, tsp_enumerate, tsp_held_karp, TspInstance};

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Model, State};

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("instance too large for exact solver: {0}")]
    Size(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, ProblemError>;

pub(crate) fn parse_err(msg: impl Into<String>) -> ProblemError {
    ProblemError::Parse(msg.into())
}

/// Optimization direction of the natural (un-negated) problem value.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sense {
    Min,
    Max,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    Tsp,
    Kp,
    #[serde(rename = "maxcut")]
    MaxCut,
}

impl ProblemKind {
    pub fn sense(self) -> Sense {
        match self {
            ProblemKind::Tsp => Sense::Min,
            ProblemKind::Kp | ProblemKind::MaxCut => Sense::Max,
        }
    }

    /// Natural problem value of a model objective (models always minimize).
    pub fn natural_value(self, objective: f64) -> f64 {
        match self.sense() {
            Sense::Min => objective,
            Sense::Max => -objective,
        }
    }
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProblemKind::Tsp => "tsp",
            ProblemKind::Kp => "kp",
            ProblemKind::MaxCut => "maxcut",
        })
    }
}

impl FromStr for ProblemKind {
    type Err = ProblemError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tsp" => Ok(ProblemKind::Tsp),
            "kp" | "knapsack" => Ok(ProblemKind::Kp),
            "maxcut" | "mcp" | "max-cut" => Ok(ProblemKind::MaxCut),
            other => Err(ProblemError::Domain(format!("unknown problem kind {other:?}"))),
        }
    }
}

/// An optimum together with a state of the matching model that attains it.
#[derive(Clone, Debug, PartialEq)]
pub struct ExactSolution {
    /// Natural value: tour cost, packed profit or cut weight.
    pub value: f64,
    pub state: State,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Instance {
    Tsp(TspInstance),
    Kp(KpInstance),
    MaxCut(McInstance),
}

impl Instance {
    pub fn parse(kind: ProblemKind, text: &str) -> Result<Self> {
        Ok(match kind {
            ProblemKind::Tsp => Instance::Tsp(parse_tsplib(text)?),
            ProblemKind::Kp => Instance::Kp(parse_kplib(text)?),
            ProblemKind::MaxCut => Instance::MaxCut(parse_maxcut(text)?),
        })
    }

    /// Reads an instance file; the name falls back to the file stem.
    pub fn read(kind: ProblemKind, path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ProblemError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut inst = Self::parse(kind, &text)?;
        if inst.name().is_empty() {
            let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            inst.set_name(stem);
        }
        Ok(inst)
    }

    pub fn kind(&self) -> ProblemKind {
        match self {
            Instance::Tsp(_) => ProblemKind::Tsp,
            Instance::Kp(_) => ProblemKind::Kp,
            Instance::MaxCut(_) => ProblemKind::MaxCut,
        }
    }

    pub fn name(&self) -> &str {
        match self {
            Instance::Tsp(i) => &i.name,
            Instance::Kp(i) => &i.name,
            Instance::MaxCut(i) => &i.name,
        }
    }

    fn set_name(&mut self, name: String) {
        match self {
            Instance::Tsp(i) => i.name = name,
            Instance::Kp(i) => i.name = name,
            Instance::MaxCut(i) => i.name = name,
        }
    }

    /// Number of cities, items or graph nodes.
    pub fn size(&self) -> usize {
        match self {
            Instance::Tsp(i) => i.n(),
            Instance::Kp(i) => i.n(),
            Instance::MaxCut(i) => i.n,
        }
    }

    pub fn build_model(&self) -> Model {
        match self {
            Instance::Tsp(i) => build_tsp_model(i),
            Instance::Kp(i) => build_kp_model(i),
            Instance::MaxCut(i) => build_mcp_model(i),
        }
    }

    pub fn exact(&self) -> Result<ExactSolution> {
        use crate::model::Assignment;
        Ok(match self {
            Instance::Tsp(i) => {
                let (value, tour) = exact_tsp(i)?;
                ExactSolution { value, state: State::new(vec![Assignment::List(tour)]) }
            }
            Instance::Kp(i) => {
                let (value, items) = exact_kp(i)?;
                ExactSolution { value: value as f64, state: State::new(vec![Assignment::Set(items)]) }
            }
            Instance::MaxCut(i) => {
                let (value, bits) = exact_maxcut(i)?;
                ExactSolution { value, state: State::new(vec![Assignment::Binary(bits)]) }
            }
        })
    }

    pub fn to_text(&self) -> String {
        match self {
            Instance::Tsp(i) => i.to_tsplib(),
            Instance::Kp(i) => i.to_kplib(),
            Instance::MaxCut(i) => i.to_text(),
        }
    }
}

/// Whitespace tokens of non-empty, non-comment lines; tolerates CRLF.
pub(crate) fn data_lines(text: &str) -> impl Iterator<Item = &str> {
    text.lines()
        .map(|l| l.trim_end_matches('\r').trim())
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
}
