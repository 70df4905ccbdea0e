use serde::{Deserialize, Serialize};

use super::PolicyError;

/// Which policy group drives a given agent type during one episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PolicySource {
    Frontier,
    /// Index into the league's member list.
    Past(usize),
}

/// Per-type policy sources for one episode. At most one type runs a past
/// group; every other type runs the frontier.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MixedAssignment {
    sources: Vec<PolicySource>,
}

impl MixedAssignment {
    pub fn all_frontier(num_types: usize) -> Self {
        Self {
            sources: vec![PolicySource::Frontier; num_types],
        }
    }

    /// Type `selected` runs league member `past`, all other types run the frontier.
    pub fn with_past(num_types: usize, selected: usize, past: usize) -> Result<Self, PolicyError> {
        if selected >= num_types {
            return Err(PolicyError::UnknownType(selected));
        }
        let mut sources = vec![PolicySource::Frontier; num_types];
        sources[selected] = PolicySource::Past(past);
        Ok(Self { sources })
    }

    pub fn num_types(&self) -> usize {
        self.sources.len()
    }

    pub fn sources(&self) -> &[PolicySource] {
        &self.sources
    }

    pub fn source(&self, type_idx: usize) -> PolicySource {
        self.sources[type_idx]
    }

    /// `δ_t`, the type running a past policy, if any.
    pub fn selected_type(&self) -> Option<usize> {
        self.sources
            .iter()
            .position(|s| matches!(s, PolicySource::Past(_)))
    }

    pub fn past_index(&self) -> Option<usize> {
        self.sources.iter().find_map(|s| match s {
            PolicySource::Past(l) => Some(*l),
            PolicySource::Frontier => None,
        })
    }

    pub fn is_frontier_only(&self) -> bool {
        self.selected_type().is_none()
    }
}

/// Hyper-network input: `F_h = concat(F_v, F_δ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TeamInfo {
    /// One entry per type: 1 for frontier-run types, the selected group's Ω otherwise.
    pub values: Vec<f64>,
    /// One-hot of the observing agent's type.
    pub type_onehot: Vec<f64>,
}

impl TeamInfo {
    pub fn concat(&self) -> Vec<f64> {
        let mut v = self.values.clone();
        v.extend_from_slice(&self.type_onehot);
        v
    }

    pub fn len(&self) -> usize {
        self.values.len() + self.type_onehot.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn onehot(type_idx: usize, num_types: usize) -> Result<Vec<f64>, PolicyError> {
    if type_idx >= num_types {
        return Err(PolicyError::UnknownType(type_idx));
    }
    let mut v = vec![0.0; num_types];
    v[type_idx] = 1.0;
    Ok(v)
}

/// `F_h` for an agent driven by the frontier. `omega` is the Ω of the
/// selected past group and must be given exactly when one is selected.
pub fn build_team_info(
    type_idx: usize,
    assignment: &MixedAssignment,
    omega: Option<f64>,
) -> Result<TeamInfo, PolicyError> {
    let n = assignment.num_types();
    let type_onehot = onehot(type_idx, n)?;
    let mut values = vec![1.0; n];
    match (assignment.selected_type(), omega) {
        (None, None) => {}
        (Some(t), Some(w)) => {
            if !(0.0..=1.0).contains(&w) {
                return Err(PolicyError::OmegaRange(w));
            }
            values[t] = w;
        }
        (Some(_), None) => {
            return Err(PolicyError::Assignment(
                "a past group is selected but no omega was given".into(),
            ))
        }
        (None, Some(_)) => {
            return Err(PolicyError::Assignment(
                "omega given for a frontier-only assignment".into(),
            ))
        }
    }
    Ok(TeamInfo {
        values,
        type_onehot,
    })
}

/// `F̂_h`: what a frozen past policy sees. Always all-ones `F_v`.
pub fn build_frozen_team_info(type_idx: usize, num_types: usize) -> Result<TeamInfo, PolicyError> {
    Ok(TeamInfo {
        values: vec![1.0; num_types],
        type_onehot: onehot(type_idx, num_types)?,
    })
}

/// `F_v` for an arbitrary per-type source map, each past-run type carrying
/// its group's Ω. Used when several types run past groups at once.
pub fn team_values(sources: &[PolicySource], omega_of: impl Fn(usize) -> f64) -> Vec<f64> {
    sources
        .iter()
        .map(|s| match s {
            PolicySource::Frontier => 1.0,
            PolicySource::Past(l) => omega_of(*l),
        })
        .collect()
}

pub fn team_info_from_values(type_idx: usize, values: Vec<f64>) -> Result<TeamInfo, PolicyError> {
    if let Some(&w) = values.iter().find(|w| !(0.0..=1.0).contains(*w)) {
        return Err(PolicyError::OmegaRange(w));
    }
    let type_onehot = onehot(type_idx, values.len())?;
    Ok(TeamInfo {
        values,
        type_onehot,
    })
}
