//! Subnet lifecycle: environment-driven, on-demand and subnet
//! reconfiguration, plan-based merging, resource-pool formation, gateway
//! designation, formation templates and the four-step pool rejoin.
//!
//! The free functions here are pure: they take the current subnets and pool
//! by reference and return new values, so a failed operation leaves its
//! inputs untouched. [`SwarmRegistry`] strings them together and is what
//! the simulator drives.

mod formation;
mod registry;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{CapabilityClass, SubnetId, UavId};

pub use formation::{apply_formation, grid_columns, FormationKind, FormationTemplate, Topology};
pub use registry::{FormOutcome, MergeTicket, RegistryParams, RejoinAck, SwarmRegistry};

pub type ClassMap = BTreeMap<UavId, CapabilityClass>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReconfigError {
    #[error("insufficient resources: need {needed} {class}, pool has {available}")]
    InsufficientResources { class: CapabilityClass, needed: u32, available: u32 },
    #[error("empty requirement")]
    EmptyRequirement,
    #[error("no reconfiguration needed")]
    NoReconfigurationNeeded,
    #[error("request kind {0:?} cannot draw from the pool")]
    WrongRequestKind(ReconfigKind),
    #[error("merge rejected: subnets do not cover the bound requirements")]
    MergeRejected,
    #[error("{0} is not operational")]
    NotOperational(SubnetId),
    #[error("unknown subnet {0}")]
    UnknownSubnet(SubnetId),
    #[error("unknown uav {0}")]
    UnknownUav(UavId),
    #[error("{0} is not a subnet member")]
    NotInSubnet(UavId),
    #[error("rejoin command rejected: issuer is not the control center")]
    Unauthorized,
    #[error("no rejoin in progress for {0}")]
    NoRejoin(SubnetId),
    #[error("merge not ready before t={0}")]
    MergeNotReady(f64),
    #[error("unknown merge ticket")]
    UnknownMerge,
    #[error("invariant violation: {0}")]
    InvariantViolation(String),
}

/// Count of UAVs needed per capability class.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Requirements(BTreeMap<CapabilityClass, u32>);

impl Requirements {
    pub fn single(class: CapabilityClass, count: u32) -> Self {
        Self(BTreeMap::from([(class, count)]))
    }

    pub fn get(&self, class: CapabilityClass) -> u32 {
        self.0.get(&class).copied().unwrap_or(0)
    }

    pub fn set(&mut self, class: CapabilityClass, count: u32) {
        if count == 0 {
            self.0.remove(&class);
        } else {
            self.0.insert(class, count);
        }
    }

    pub fn total(&self) -> u32 {
        self.0.values().sum()
    }

    /// True when every count is zero.
    pub fn is_empty(&self) -> bool {
        self.total() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = (CapabilityClass, u32)> + '_ {
        self.0.iter().filter(|(_, &n)| n > 0).map(|(&c, &n)| (c, n))
    }

    pub fn plus(&self, other: &Requirements) -> Requirements {
        let mut out = self.clone();
        for (c, n) in other.iter() {
            out.set(c, out.get(c) + n);
        }
        out
    }

    pub fn saturating_minus(&self, other: &Requirements) -> Requirements {
        let mut out = Requirements::default();
        for (c, n) in self.iter() {
            out.set(c, n.saturating_sub(other.get(c)));
        }
        out
    }

    /// Class counts of a member set.
    pub fn of_members<'a>(members: impl IntoIterator<Item = &'a UavId>, classes: &ClassMap) -> Requirements {
        let mut out = Requirements::default();
        for id in members {
            if let Some(&c) = classes.get(id) {
                out.set(c, out.get(c) + 1);
            }
        }
        out
    }

    /// True when `self` has at least `need` of every class.
    pub fn covers(&self, need: &Requirements) -> bool {
        need.iter().all(|(c, n)| self.get(c) >= n)
    }
}

impl FromIterator<(CapabilityClass, u32)> for Requirements {
    fn from_iter<T: IntoIterator<Item = (CapabilityClass, u32)>>(iter: T) -> Self {
        let mut out = Requirements::default();
        for (c, n) in iter {
            out.set(c, out.get(c) + n);
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mission {
    pub name: String,
    pub requirements: Requirements,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubnetState {
    Forming,
    SelfOrganizing,
    Operational,
    Rejoining,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Subnet {
    pub id: SubnetId,
    pub members: BTreeSet<UavId>,
    pub formation: FormationTemplate,
    /// Role assignment: `slots[i]` occupies template slot `i`.
    pub slots: Vec<UavId>,
    pub gateways: BTreeSet<UavId>,
    pub state: SubnetState,
    pub bound_task: Option<Mission>,
    /// Gateway holding the link to the resource pool.
    pub pool_link: Option<UavId>,
    pub self_organizing_since: Option<f64>,
}

impl Subnet {
    fn new(id: SubnetId, members: BTreeSet<UavId>, formation: FormationTemplate, classes: &ClassMap) -> Self {
        let gateways = designate_gateways(&members, classes);
        Self {
            id,
            slots: members.iter().copied().collect(),
            members,
            formation,
            gateways,
            state: SubnetState::Forming,
            bound_task: None,
            pool_link: None,
            self_organizing_since: None,
        }
    }

    pub fn topology(&self) -> Topology {
        Topology::from_slots(&self.slots, &self.formation)
    }

    pub fn accepts_tasks(&self) -> bool {
        self.state == SubnetState::Operational
    }

    pub fn requirements(&self) -> Requirements {
        self.bound_task.as_ref().map(|m| m.requirements.clone()).unwrap_or_default()
    }

    pub fn check_invariants(&self) -> Result<(), String> {
        if !self.gateways.is_subset(&self.members) {
            return Err(format!("{}: gateways not a subset of members", self.id));
        }
        let slot_set: BTreeSet<UavId> = self.slots.iter().copied().collect();
        if slot_set != self.members || self.slots.len() != self.members.len() {
            return Err(format!("{}: role assignment does not match members", self.id));
        }
        if matches!(self.state, SubnetState::Operational | SubnetState::Rejoining) && self.gateways.is_empty() {
            return Err(format!("{}: no gateway", self.id));
        }
        if self.state == SubnetState::Operational {
            if self.members.is_empty() {
                return Err(format!("{}: operational with no members", self.id));
            }
            if !self.topology().is_connected() {
                return Err(format!("{}: topology disconnected", self.id));
            }
        }
        Ok(())
    }
}

/// Identifies one of the resource pools. A single pool (`PoolId(0)`) is
/// modeled; assignments are still recorded per UAV.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PoolId(pub u32);

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourcePool {
    members: BTreeSet<UavId>,
    by_class: BTreeMap<CapabilityClass, BTreeSet<UavId>>,
    assignment: BTreeMap<UavId, PoolId>,
}

impl ResourcePool {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_members(members: impl IntoIterator<Item = (UavId, CapabilityClass)>) -> Self {
        let mut pool = Self::new();
        for (id, class) in members {
            pool.insert(id, class);
        }
        pool
    }

    pub fn insert(&mut self, id: UavId, class: CapabilityClass) {
        self.insert_into(id, class, PoolId(0));
    }

    pub fn insert_into(&mut self, id: UavId, class: CapabilityClass, pool: PoolId) {
        self.members.insert(id);
        self.by_class.entry(class).or_default().insert(id);
        self.assignment.insert(id, pool);
    }

    pub fn remove(&mut self, id: UavId) -> bool {
        if !self.members.remove(&id) {
            return false;
        }
        for set in self.by_class.values_mut() {
            set.remove(&id);
        }
        self.by_class.retain(|_, s| !s.is_empty());
        self.assignment.remove(&id);
        true
    }

    pub fn contains(&self, id: UavId) -> bool {
        self.members.contains(&id)
    }

    pub fn members(&self) -> &BTreeSet<UavId> {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn count(&self, class: CapabilityClass) -> u32 {
        self.by_class.get(&class).map_or(0, |s| s.len() as u32)
    }

    pub fn of_class(&self, class: CapabilityClass) -> impl Iterator<Item = UavId> + '_ {
        self.by_class.get(&class).into_iter().flat_map(|s| s.iter().copied())
    }

    pub fn assignment(&self, id: UavId) -> Option<PoolId> {
        self.assignment.get(&id).copied()
    }

    pub fn check_invariants(&self) -> Result<(), String> {
        let mut seen = BTreeSet::new();
        for set in self.by_class.values() {
            for id in set {
                if !seen.insert(*id) {
                    return Err(format!("{id} indexed under two classes"));
                }
            }
        }
        if seen != self.members {
            return Err("class index does not partition pool members".into());
        }
        if self.assignment.keys().copied().collect::<BTreeSet<_>>() != self.members {
            return Err("pool assignment records out of sync".into());
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReconfigKind {
    EnvAdapt,
    OnDemand,
    SubnetDraw,
    Rejoin,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Issuer {
    Uav(UavId),
    ControlCenter,
}

impl fmt::Display for Issuer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Issuer::Uav(u) => write!(f, "{u}"),
            Issuer::ControlCenter => f.write_str("control_center"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReconfigRequest {
    pub kind: ReconfigKind,
    pub issuer: Issuer,
    pub requirements: Requirements,
    pub target_subnet: Option<SubnetId>,
    pub issued_at: f64,
}

/// `k = max(1, ceil(n / 10))` gateways: relay-class members first (lowest
/// ids), then the lowest remaining ids.
pub fn designate_gateways(members: &BTreeSet<UavId>, classes: &ClassMap) -> BTreeSet<UavId> {
    if members.is_empty() {
        return BTreeSet::new();
    }
    let k = members.len().div_ceil(10).max(1);
    let relays = members.iter().filter(|id| classes.get(id) == Some(&CapabilityClass::Relay));
    let others = members.iter().filter(|id| classes.get(id) != Some(&CapabilityClass::Relay));
    relays.chain(others).take(k).copied().collect()
}

/// Issues an environment-adaptation request when any formation edge of an
/// operational subnet reports a rate below `rate_floor`.
pub fn trigger_environment_adaptation(
    subnet: &Subnet,
    link_report: &BTreeMap<(UavId, UavId), f64>,
    rate_floor: f64,
    now: f64,
) -> Option<ReconfigRequest> {
    if subnet.state != SubnetState::Operational {
        return None;
    }
    let topo = subnet.topology();
    let degraded = topo.edges().iter().any(|&(a, b)| {
        link_report
            .get(&(a, b))
            .or_else(|| link_report.get(&(b, a)))
            .is_some_and(|&rate| rate < rate_floor)
    });
    let issuer = subnet
        .gateways
        .iter()
        .chain(&subnet.members)
        .next()
        .map_or(Issuer::ControlCenter, |&u| Issuer::Uav(u));
    degraded.then(|| ReconfigRequest {
        kind: ReconfigKind::EnvAdapt,
        issuer,
        requirements: Requirements::default(),
        target_subnet: Some(subnet.id),
        issued_at: now,
    })
}

/// A formation plus role assignment and its weakest-link rate.
#[derive(Clone, Debug, PartialEq)]
pub struct Assignment {
    pub formation: FormationTemplate,
    pub slots: Vec<UavId>,
    pub min_edge_rate: f64,
}

/// Weakest edge of `template` laid over `slots`; infinite for edgeless graphs.
pub fn min_edge_rate(slots: &[UavId], template: &FormationTemplate, rate: &impl Fn(UavId, UavId) -> f64) -> f64 {
    template
        .slot_edges(slots.len())
        .into_iter()
        .map(|(a, b)| rate(slots[a], slots[b]))
        .fold(f64::INFINITY, f64::min)
}

/// Largest subnet for which every role permutation is enumerated. Bigger
/// subnets use pairwise-swap hill climbing from the current assignment.
pub const EXHAUSTIVE_ASSIGNMENT_LIMIT: usize = 7;

/// Picks the formation and role assignment maximizing the weakest formation
/// edge. The current assignment wins ties.
pub fn best_assignment(
    subnet: &Subnet,
    admissible: &[FormationTemplate],
    rate: impl Fn(UavId, UavId) -> f64,
) -> Assignment {
    let mut best = Assignment {
        formation: subnet.formation,
        slots: subnet.slots.clone(),
        min_edge_rate: min_edge_rate(&subnet.slots, &subnet.formation, &rate),
    };
    let mut templates = vec![subnet.formation];
    templates.extend(admissible.iter().copied().filter(|t| *t != subnet.formation));
    for template in templates {
        let candidate = if subnet.slots.len() <= EXHAUSTIVE_ASSIGNMENT_LIMIT {
            exhaustive(&subnet.slots, &template, &rate)
        } else {
            hill_climb(&subnet.slots, &template, &rate)
        };
        if candidate.min_edge_rate > best.min_edge_rate {
            best = candidate;
        }
    }
    best
}

fn exhaustive(start: &[UavId], template: &FormationTemplate, rate: &impl Fn(UavId, UavId) -> f64) -> Assignment {
    let mut slots = start.to_vec();
    let mut best = Assignment {
        formation: *template,
        slots: slots.clone(),
        min_edge_rate: min_edge_rate(&slots, template, rate),
    };
    // Heap's algorithm, iterative.
    let n = slots.len();
    let mut c = vec![0usize; n];
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                slots.swap(0, i);
            } else {
                slots.swap(c[i], i);
            }
            let r = min_edge_rate(&slots, template, rate);
            if r > best.min_edge_rate {
                best = Assignment { formation: *template, slots: slots.clone(), min_edge_rate: r };
            }
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    best
}

fn hill_climb(start: &[UavId], template: &FormationTemplate, rate: &impl Fn(UavId, UavId) -> f64) -> Assignment {
    let mut slots = start.to_vec();
    let mut current = min_edge_rate(&slots, template, rate);
    loop {
        let mut improved = false;
        for i in 0..slots.len() {
            for j in i + 1..slots.len() {
                slots.swap(i, j);
                let r = min_edge_rate(&slots, template, rate);
                if r > current {
                    current = r;
                    improved = true;
                } else {
                    slots.swap(i, j);
                }
            }
        }
        if !improved {
            break;
        }
    }
    Assignment { formation: *template, slots, min_edge_rate: current }
}

/// Builds the request for the part of `requirements` the requester cannot
/// cover with its own class.
pub fn request_on_demand(
    requirements: &Requirements,
    requester: UavId,
    requester_class: CapabilityClass,
    now: f64,
) -> Result<ReconfigRequest, ReconfigError> {
    let residual = requirements.saturating_minus(&Requirements::single(requester_class, 1));
    if residual.is_empty() {
        return Err(ReconfigError::NoReconfigurationNeeded);
    }
    Ok(ReconfigRequest {
        kind: ReconfigKind::OnDemand,
        issuer: Issuer::Uav(requester),
        requirements: residual,
        target_subnet: None,
        issued_at: now,
    })
}

fn take_from_pool(
    pool: &ResourcePool,
    requirements: &Requirements,
) -> Result<(BTreeSet<UavId>, ResourcePool), ReconfigError> {
    if requirements.is_empty() {
        return Err(ReconfigError::EmptyRequirement);
    }
    for (class, needed) in requirements.iter() {
        let available = pool.count(class);
        if available < needed {
            return Err(ReconfigError::InsufficientResources { class, needed, available });
        }
    }
    let mut left = pool.clone();
    let mut taken = BTreeSet::new();
    for (class, needed) in requirements.iter() {
        let chosen: Vec<UavId> = pool.of_class(class).take(needed as usize).collect();
        for id in chosen {
            left.remove(id);
            taken.insert(id);
        }
    }
    Ok((taken, left))
}

/// Draws the requested UAVs (lowest ids first per class) into a new subnet
/// in the `Forming` state with a grid formation. The input pool is never
/// modified; on success the reduced pool is returned.
pub fn draw_from_pool(
    pool: &ResourcePool,
    req: &ReconfigRequest,
    id: SubnetId,
    classes: &ClassMap,
) -> Result<(Subnet, ResourcePool), ReconfigError> {
    if !matches!(req.kind, ReconfigKind::OnDemand | ReconfigKind::SubnetDraw) {
        return Err(ReconfigError::WrongRequestKind(req.kind));
    }
    let (members, left) = take_from_pool(pool, &req.requirements)?;
    Ok((Subnet::new(id, members, FormationTemplate::default(), classes), left))
}

/// Forms an operational subnet for a mission straight from the pool:
/// draw, designate gateways, link the first gateway to the pool.
pub fn pool_based_form(
    pool: &ResourcePool,
    mission: &Mission,
    template: FormationTemplate,
    id: SubnetId,
    classes: &ClassMap,
) -> Result<(Subnet, ResourcePool), ReconfigError> {
    let (members, left) = take_from_pool(pool, &mission.requirements)?;
    let mut subnet = Subnet::new(id, members, template, classes);
    subnet.bound_task = Some(mission.clone());
    subnet.pool_link = subnet.gateways.iter().next().copied();
    subnet.state = SubnetState::Operational;
    Ok((subnet, left))
}

/// Whether two subnets may merge: together they cover both bound
/// requirements, or the joint mission's when one is given.
pub fn merge_compatible(a: &Subnet, b: &Subnet, joint: Option<&Mission>, classes: &ClassMap) -> bool {
    let need = match joint {
        Some(m) => m.requirements.clone(),
        None => a.requirements().plus(&b.requirements()),
    };
    let have = Requirements::of_members(a.members.iter().chain(&b.members), classes);
    have.covers(&need)
}

/// Formation for a merged subnet: the larger source's template, a flock
/// ring on equal sizes.
pub fn merged_formation(a: &Subnet, b: &Subnet) -> FormationTemplate {
    use std::cmp::Ordering::*;
    match a.members.len().cmp(&b.members.len()) {
        Greater => a.formation,
        Less => b.formation,
        Equal => FormationTemplate::new(FormationKind::FlockRing),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MergeOutcome {
    pub subnet: Subnet,
    pub self_organizing_from: f64,
    pub operational_at: f64,
}

/// Plan-based merge. Both sources pass through self-organization for
/// `self_org_duration` before the union becomes operational.
pub fn plan_based_merge(
    a: &Subnet,
    b: &Subnet,
    joint: Option<&Mission>,
    id: SubnetId,
    classes: &ClassMap,
    start: f64,
    self_org_duration: f64,
) -> Result<MergeOutcome, ReconfigError> {
    for s in [a, b] {
        if !matches!(s.state, SubnetState::Operational | SubnetState::SelfOrganizing) {
            return Err(ReconfigError::NotOperational(s.id));
        }
    }
    if !a.members.is_disjoint(&b.members) {
        return Err(ReconfigError::InvariantViolation(format!("{} and {} share members", a.id, b.id)));
    }
    if !merge_compatible(a, b, joint, classes) {
        return Err(ReconfigError::MergeRejected);
    }
    let members: BTreeSet<UavId> = a.members.union(&b.members).copied().collect();
    let mut subnet = Subnet::new(id, members, merged_formation(a, b), classes);
    subnet.bound_task = Some(match joint {
        Some(m) => m.clone(),
        None => Mission {
            name: merged_name(a, b),
            requirements: a.requirements().plus(&b.requirements()),
        },
    });
    subnet.pool_link = subnet.gateways.iter().next().copied();
    subnet.state = SubnetState::Operational;
    Ok(MergeOutcome {
        subnet,
        self_organizing_from: start,
        operational_at: start + self_org_duration.max(f64::MIN_POSITIVE),
    })
}

fn merged_name(a: &Subnet, b: &Subnet) -> String {
    let name = |s: &Subnet| s.bound_task.as_ref().map_or_else(|| s.id.to_string(), |m| m.name.clone());
    format!("{}+{}", name(a), name(b))
}

/// One step of the rejoin procedure.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RejoinStep {
    pub step: u8,
    pub subnet: SubnetId,
    pub gateways: BTreeSet<UavId>,
    pub assignments: BTreeMap<UavId, PoolId>,
}

/// Runs the full four-step return of `subnet` to the pool and returns the
/// enlarged pool with one record per step.
pub fn rejoin_pool(
    subnet: &Subnet,
    issuer: Issuer,
    pool: &ResourcePool,
    classes: &ClassMap,
) -> Result<(ResourcePool, Vec<RejoinStep>), ReconfigError> {
    if issuer != Issuer::ControlCenter {
        return Err(ReconfigError::Unauthorized);
    }
    if subnet.state != SubnetState::Operational {
        return Err(ReconfigError::NotOperational(subnet.id));
    }
    let mut steps = Vec::with_capacity(4);
    let record = |step, gateways: &BTreeSet<UavId>, assignments: &BTreeMap<UavId, PoolId>| RejoinStep {
        step,
        subnet: subnet.id,
        gateways: gateways.clone(),
        assignments: assignments.clone(),
    };
    steps.push(record(1, &subnet.gateways, &BTreeMap::new()));
    let gateways = designate_gateways(&subnet.members, classes);
    steps.push(record(2, &gateways, &BTreeMap::new()));
    let assignments: BTreeMap<UavId, PoolId> = subnet.members.iter().map(|&u| (u, PoolId(0))).collect();
    steps.push(record(3, &gateways, &assignments));
    let mut out = pool.clone();
    for (&u, &p) in &assignments {
        let class = *classes.get(&u).ok_or(ReconfigError::UnknownUav(u))?;
        out.insert_into(u, class, p);
    }
    steps.push(record(4, &gateways, &assignments));
    Ok((out, steps))
}
