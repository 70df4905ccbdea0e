//! The league of frozen past policy groups, the two samplers that build a
//! mixed team for each episode, and the admission filter.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::policy::{MixedAssignment, PolicyGroup, PolicySource};

/// Gaps closer than this are treated as equal when looking for the closest pair.
pub const GAP_TOLERANCE: f64 = 1e-9;

#[derive(Debug, thiserror::Error)]
pub enum LeagueError {
    #[error("candidate version {0} is not frozen")]
    NotFrozen(u64),
    #[error("omega {0} outside [0, 1]")]
    OmegaRange(f64),
    #[error("p_f {0} outside [0, 1)")]
    SamplerRange(f64),
    #[error("league capacity must be positive")]
    ZeroCapacity,
    #[error("assignment references league member {index}, league has {len}")]
    DanglingIndex { index: usize, len: usize },
    #[error("agent-type set is empty")]
    NoTypes,
    #[error("assignment covers {got} types, frontier has {expected}")]
    TypeCount { got: usize, expected: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    pub p_f: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self { p_f: 0.1 }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<(), LeagueError> {
        if !(0.0..1.0).contains(&self.p_f) {
            return Err(LeagueError::SamplerRange(self.p_f));
        }
        Ok(())
    }
}

/// Output of the league sampler.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Combination {
    FrontierFrontier,
    /// Frontier paired with league member `l`.
    FrontierPast(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Admission {
    Accepted,
    /// Candidate kept; the member with this version id was removed.
    AcceptedWithEviction(u64),
    /// Candidate was the newer half of the closest pair and was dropped.
    Rejected,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeagueMember {
    pub group: PolicyGroup,
    pub omega: f64,
    /// Optimisation step at which the member was admitted.
    pub admitted_at: u64,
}

impl LeagueMember {
    pub fn version(&self) -> u64 {
        self.group.version
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissionRecord {
    pub step: u64,
    pub version: u64,
    pub omega: f64,
    pub result: Admission,
}

#[derive(Debug, Clone, PartialEq)]
pub struct League {
    capacity: usize,
    members: Vec<LeagueMember>,
    history: Vec<AdmissionRecord>,
}

impl League {
    pub fn new(capacity: usize) -> Result<Self, LeagueError> {
        if capacity == 0 {
            return Err(LeagueError::ZeroCapacity);
        }
        Ok(Self {
            capacity,
            members: Vec::new(),
            history: Vec::new(),
        })
    }

    pub(crate) fn from_parts(capacity: usize, members: Vec<LeagueMember>, history: Vec<AdmissionRecord>) -> Self {
        Self {
            capacity,
            members,
            history,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn members(&self) -> &[LeagueMember] {
        &self.members
    }

    pub fn member(&self, index: usize) -> Result<&LeagueMember, LeagueError> {
        self.members.get(index).ok_or(LeagueError::DanglingIndex {
            index,
            len: self.members.len(),
        })
    }

    pub fn history(&self) -> &[AdmissionRecord] {
        &self.history
    }

    pub fn omegas(&self) -> Vec<f64> {
        self.members.iter().map(|m| m.omega).collect()
    }

    /// League filter. Below capacity the candidate is simply inserted.
    /// Otherwise it is inserted provisionally, the league is sorted by ω,
    /// and the newer member of the adjacent pair with the smallest ω gap is
    /// removed (ties go to the lowest-ω pair).
    pub fn try_admit(
        &mut self,
        candidate: PolicyGroup,
        omega: f64,
        step: u64,
    ) -> Result<Admission, LeagueError> {
        if !candidate.is_frozen() {
            return Err(LeagueError::NotFrozen(candidate.version));
        }
        if !(0.0..=1.0).contains(&omega) {
            return Err(LeagueError::OmegaRange(omega));
        }
        let version = candidate.version;
        self.members.push(LeagueMember {
            group: candidate,
            omega,
            admitted_at: step,
        });
        self.members.sort_by(|a, b| {
            a.omega
                .total_cmp(&b.omega)
                .then(a.version().cmp(&b.version()))
        });
        let result = if self.members.len() <= self.capacity {
            Admission::Accepted
        } else {
            let k = closest_pair(&self.omegas());
            let evict = if self.members[k].version() >= self.members[k + 1].version() {
                k
            } else {
                k + 1
            };
            let removed = self.members.remove(evict);
            if removed.version() == version {
                Admission::Rejected
            } else {
                Admission::AcceptedWithEviction(removed.version())
            }
        };
        self.history.push(AdmissionRecord {
            step,
            version,
            omega,
            result: result.clone(),
        });
        Ok(result)
    }
}

/// Audit record of a league: members with where their groups are stored,
/// plus the full admission history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LeagueManifest {
    pub capacity: usize,
    pub members: Vec<MemberEntry>,
    pub history: Vec<AdmissionRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemberEntry {
    pub version: u64,
    pub omega: f64,
    pub admitted_at: u64,
    /// Group directory, relative to the manifest.
    pub path: String,
}

impl League {
    pub fn manifest(&self, path_of: impl Fn(&LeagueMember) -> String) -> LeagueManifest {
        LeagueManifest {
            capacity: self.capacity,
            members: self
                .members
                .iter()
                .map(|m| MemberEntry {
                    version: m.version(),
                    omega: m.omega,
                    admitted_at: m.admitted_at,
                    path: path_of(m),
                })
                .collect(),
            history: self.history.clone(),
        }
    }

    /// Rebuilds a league from its manifest and the member groups, in
    /// manifest order. Checks every league invariant.
    pub fn from_manifest(m: LeagueManifest, groups: Vec<PolicyGroup>) -> Result<Self, String> {
        if m.capacity == 0 || m.members.len() > m.capacity || groups.len() != m.members.len() {
            return Err(format!(
                "{} members and {} groups for capacity {}",
                m.members.len(),
                groups.len(),
                m.capacity
            ));
        }
        let mut members = Vec::with_capacity(groups.len());
        for (e, g) in m.members.iter().zip(groups) {
            if !g.is_frozen() || g.version != e.version || g.omega != Some(e.omega) {
                return Err(format!("member {} does not match its stored group", e.version));
            }
            members.push(LeagueMember {
                group: g,
                omega: e.omega,
                admitted_at: e.admitted_at,
            });
        }
        if members.windows(2).any(|w| w[0].omega > w[1].omega) {
            return Err("members not sorted by omega".into());
        }
        Ok(Self::from_parts(m.capacity, members, m.history))
    }
}

/// Index `k` of the adjacent pair `(k, k + 1)` with the smallest gap in an
/// ascending slice; near-equal gaps resolve to the smallest `k`.
pub fn closest_pair(sorted: &[f64]) -> usize {
    let mut best = 0;
    let mut best_gap = f64::INFINITY;
    for k in 0..sorted.len().saturating_sub(1) {
        let gap = sorted[k + 1] - sorted[k];
        if gap < best_gap - GAP_TOLERANCE {
            best = k;
            best_gap = gap;
        }
    }
    best
}

/// League sampler: frontier-frontier with probability `p_f`, otherwise a
/// uniformly chosen league member. An empty league always yields
/// frontier-frontier.
pub fn sample_combination<R: Rng>(
    league_len: usize,
    cfg: &SamplerConfig,
    rng: &mut R,
) -> Result<Combination, LeagueError> {
    cfg.validate()?;
    if league_len == 0 {
        return Ok(Combination::FrontierFrontier);
    }
    let u: f64 = rng.gen();
    if u < cfg.p_f {
        return Ok(Combination::FrontierFrontier);
    }
    Ok(Combination::FrontierPast(rng.gen_range(0..league_len)))
}

/// Combination sampler: picks the type that runs the past group uniformly
/// over types, independent of how many agents each type has.
pub fn sample_assignment<R: Rng>(
    combination: Combination,
    num_types: usize,
    rng: &mut R,
) -> Result<MixedAssignment, LeagueError> {
    if num_types == 0 {
        return Err(LeagueError::NoTypes);
    }
    Ok(match combination {
        Combination::FrontierFrontier => MixedAssignment::all_frontier(num_types),
        Combination::FrontierPast(l) => {
            let t = rng.gen_range(0..num_types);
            MixedAssignment::with_past(num_types, t, l).expect("type index drawn in range")
        }
    })
}

/// Per-type policy map for one episode.
#[derive(Debug, Clone)]
pub struct MixedPolicy<'a> {
    per_type: Vec<&'a PolicyGroup>,
    sources: Vec<PolicySource>,
    /// Ω of the past group in play, if any.
    pub omega: Option<f64>,
}

impl<'a> MixedPolicy<'a> {
    pub fn group(&self, type_idx: usize) -> &'a PolicyGroup {
        self.per_type[type_idx]
    }

    pub fn source(&self, type_idx: usize) -> PolicySource {
        self.sources[type_idx]
    }

    pub fn num_types(&self) -> usize {
        self.per_type.len()
    }
}

pub fn compose_mixed<'a>(
    assignment: &MixedAssignment,
    frontier: &'a PolicyGroup,
    league: &'a League,
) -> Result<MixedPolicy<'a>, LeagueError> {
    compose_sources(assignment.sources(), frontier, league)
}

/// Like [`compose_mixed`] for an arbitrary source map (several types may run
/// past groups). All past sources must name the same member for `omega` to
/// be set.
pub fn compose_sources<'a>(
    sources: &[PolicySource],
    frontier: &'a PolicyGroup,
    league: &'a League,
) -> Result<MixedPolicy<'a>, LeagueError> {
    if sources.len() != frontier.num_types() {
        return Err(LeagueError::TypeCount {
            got: sources.len(),
            expected: frontier.num_types(),
        });
    }
    let mut omega = None;
    let per_type = sources
        .iter()
        .map(|s| match *s {
            PolicySource::Frontier => Ok(frontier),
            PolicySource::Past(l) => {
                let m = league.member(l)?;
                omega = Some(m.omega);
                Ok(&m.group)
            }
        })
        .collect::<Result<Vec<_>, LeagueError>>()?;
    Ok(MixedPolicy {
        per_type,
        sources: sources.to_vec(),
        omega,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{duplicate_and_freeze, PolicyConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn frontier() -> PolicyGroup {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cfg = PolicyConfig {
            hidden: vec![4, 4],
            hyper_hidden: 3,
            ..PolicyConfig::default()
        };
        PolicyGroup::new(cfg, 3, 4, 3, &mut rng).unwrap()
    }

    fn league_with(omegas: &[f64], f: &mut PolicyGroup) -> League {
        let mut l = League::new(5).unwrap();
        for &w in omegas {
            let c = duplicate_and_freeze(f, w).unwrap();
            l.try_admit(c, w, 0).unwrap();
        }
        l
    }

    #[test]
    fn below_capacity_accepts_sorted() {
        let mut f = frontier();
        let mut l = league_with(&[0.1, 0.4, 0.8, 0.9], &mut f);
        let c = duplicate_and_freeze(&mut f, 0.6).unwrap();
        assert_eq!(l.try_admit(c, 0.6, 1).unwrap(), Admission::Accepted);
        assert_eq!(l.omegas(), vec![0.1, 0.4, 0.6, 0.8, 0.9]);
    }

    #[test]
    fn tie_goes_to_lowest_pair() {
        let mut f = frontier();
        let mut l = league_with(&[0.1, 0.4, 0.45, 0.8, 0.9], &mut f);
        let v045 = l.members()[2].version();
        let c = duplicate_and_freeze(&mut f, 0.95).unwrap();
        assert_eq!(
            l.try_admit(c, 0.95, 1).unwrap(),
            Admission::AcceptedWithEviction(v045)
        );
        assert_eq!(l.omegas(), vec![0.1, 0.4, 0.8, 0.9, 0.95]);
    }

    #[test]
    fn newer_candidate_rejected() {
        let mut f = frontier();
        let mut l = league_with(&[0.2, 0.4, 0.6, 0.8, 1.0], &mut f);
        let before: Vec<u64> = l.members().iter().map(|m| m.version()).collect();
        let c = duplicate_and_freeze(&mut f, 0.61).unwrap();
        assert_eq!(l.try_admit(c, 0.61, 1).unwrap(), Admission::Rejected);
        assert_eq!(l.members().iter().map(|m| m.version()).collect::<Vec<_>>(), before);
        assert_eq!(l.history().last().unwrap().result, Admission::Rejected);
    }

    #[test]
    fn unfrozen_candidate_refused() {
        let f = frontier();
        let mut l = League::new(5).unwrap();
        assert!(matches!(l.try_admit(f, 0.5, 0), Err(LeagueError::NotFrozen(_))));
    }

    #[test]
    fn empty_league_is_frontier_only() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg = SamplerConfig { p_f: 0.0 };
        for _ in 0..1000 {
            assert_eq!(
                sample_combination(0, &cfg, &mut rng).unwrap(),
                Combination::FrontierFrontier
            );
        }
        assert!(sample_combination(3, &SamplerConfig { p_f: 1.0 }, &mut rng).is_err());
    }

    #[test]
    fn zero_pf_never_frontier_only() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cfg = SamplerConfig { p_f: 0.0 };
        let n = 100_000;
        let mut counts = [0usize; 5];
        for _ in 0..n {
            match sample_combination(5, &cfg, &mut rng).unwrap() {
                Combination::FrontierFrontier => panic!("frontier-frontier drawn with p_f = 0"),
                Combination::FrontierPast(l) => counts[l] += 1,
            }
        }
        for c in counts {
            assert!((c as f64 / n as f64 - 0.2).abs() < 0.01);
        }
    }

    #[test]
    fn single_type_always_selected() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let a = sample_assignment(Combination::FrontierPast(0), 1, &mut rng).unwrap();
            assert_eq!(a.selected_type(), Some(0));
        }
        let a = sample_assignment(Combination::FrontierFrontier, 3, &mut rng).unwrap();
        assert!(a.is_frontier_only());
        assert!(sample_assignment(Combination::FrontierFrontier, 0, &mut rng).is_err());
    }

    #[test]
    fn compose_routes_selected_type() {
        let mut f = frontier();
        let l = league_with(&[0.1, 0.2, 0.3, 0.4], &mut f);
        let a = MixedAssignment::with_past(3, 1, 3).unwrap();
        let m = compose_mixed(&a, &f, &l).unwrap();
        assert!(std::ptr::eq(m.group(0), &f));
        assert!(std::ptr::eq(m.group(1), &l.members()[3].group));
        assert!(std::ptr::eq(m.group(2), &f));
        assert_eq!(m.omega, Some(0.4));

        let ff = compose_mixed(&MixedAssignment::all_frontier(3), &f, &l).unwrap();
        assert!((0..3).all(|t| std::ptr::eq(ff.group(t), &f)));
        assert_eq!(ff.omega, None);

        let dangling = MixedAssignment::with_past(3, 0, 4).unwrap();
        assert!(matches!(
            compose_mixed(&dangling, &f, &l),
            Err(LeagueError::DanglingIndex { index: 4, len: 4 })
        ));
    }
}
