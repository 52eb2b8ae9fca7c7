//! Risk-control framework: hierarchical collaborative control (control
//! center and per-subnet controllers over north-south interfaces),
//! distributed collaborative control (east-west neighbor exchange), the
//! adaptive communication strategy and capability-based task weights.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cognition::Situation;
use crate::model::{link_rate, CapabilityClass, RiskLevel, SubnetId, UavId};
use crate::reconfig::{ClassMap, Subnet, SubnetState, Topology};
use crate::scalar::normalize;
use crate::{ChannelParams, EnvironmentField, Position};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlMode {
    #[default]
    Hierarchical,
    Distributed,
}

impl ControlMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ControlMode::Hierarchical => "hierarchical",
            ControlMode::Distributed => "distributed",
        }
    }
}

impl fmt::Display for ControlMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ControlMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "hierarchical" => Ok(ControlMode::Hierarchical),
            "distributed" => Ok(ControlMode::Distributed),
            _ => Err(format!("unknown control mode `{s}` (expected hierarchical | distributed)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlParams {
    /// Seconds between control steps.
    pub control_period: f64,
    /// Fixed latency of the anti-interference control link.
    pub ctrl_latency: f64,
    /// Reports older than this many periods are stale.
    pub staleness_periods: f64,
    /// bits/s below which non-control traffic is lost.
    pub rate_floor: f64,
    /// Size of one control-plane message, bits.
    pub message_bits: f64,
}

impl Default for ControlParams {
    fn default() -> Self {
        Self { control_period: 0.5, ctrl_latency: 0.01, staleness_periods: 2.0, rate_floor: 1e5, message_bits: 8000.0 }
    }
}

impl ControlParams {
    pub fn staleness_bound(&self) -> f64 {
        self.staleness_periods * self.control_period
    }
}

pub const DATA_PRIORITY: u8 = 0;
pub const CONTROL_PRIORITY: u8 = 1;
pub const MAX_PRIORITY: u8 = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageKind {
    Objective,
    ReturnCommand,
    StateReport,
    PeerShare,
    TaskAssign,
}

impl MessageKind {
    pub fn priority(self) -> u8 {
        match self {
            MessageKind::Objective | MessageKind::ReturnCommand => MAX_PRIORITY,
            MessageKind::StateReport | MessageKind::TaskAssign => CONTROL_PRIORITY,
            MessageKind::PeerShare => DATA_PRIORITY,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Endpoint {
    Center,
    Controller(SubnetId),
    Uav(UavId),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Directive {
    /// Keep serving with the current weights.
    Sustain,
    /// Re-task toward perception: the subnet reported an alert.
    Retask,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubnetReport {
    pub subnet: SubnetId,
    pub situation: Situation,
    pub members: usize,
    pub queued_tasks: usize,
    pub max_risk: RiskLevel,
    pub report_time: f64,
}

/// What a UAV shares with its formation neighbors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeerState {
    pub uav: UavId,
    pub queue_len: usize,
    /// Seconds of committed work.
    pub backlog: f64,
    pub pos: Position,
    pub risk_level: RiskLevel,
    pub time: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum Payload {
    Objective { objective: u64, subnet: SubnetId, directive: Directive },
    Return { objective: u64, subnet: SubnetId },
    Report(SubnetReport),
    Peer(PeerState),
    Assign { objective: u64, subnet: SubnetId, directive: Directive, weights: RoleWeights },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlMessage {
    pub id: u64,
    pub kind: MessageKind,
    pub priority: u8,
    pub payload: Payload,
    pub src: Endpoint,
    pub dst: Endpoint,
    pub sent_at: f64,
}

/// Deterministic message id source.
#[derive(Clone, Debug, Default)]
pub struct MessageIds(u64);

impl MessageIds {
    pub fn next(&mut self) -> u64 {
        let id = self.0;
        self.0 += 1;
        id
    }
}

impl ControlMessage {
    pub fn new(ids: &mut MessageIds, kind: MessageKind, payload: Payload, src: Endpoint, dst: Endpoint, now: f64) -> Self {
        Self { id: ids.next(), kind, priority: kind.priority(), payload, src, dst, sent_at: now }
    }
}

/// Outbox ordered by priority, then by id.
#[derive(Debug, Default)]
pub struct MessageQueue(BinaryHeap<Queued>);

#[derive(Debug)]
struct Queued(ControlMessage);

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Queued {}
impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Queued {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.priority.cmp(&other.0.priority).then_with(|| other.0.id.cmp(&self.0.id))
    }
}

impl MessageQueue {
    pub fn push(&mut self, msg: ControlMessage) {
        self.0.push(Queued(msg));
    }

    pub fn pop(&mut self) -> Option<ControlMessage> {
        self.0.pop().map(|q| q.0)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl Extend<ControlMessage> for MessageQueue {
    fn extend<T: IntoIterator<Item = ControlMessage>>(&mut self, iter: T) {
        iter.into_iter().for_each(|m| self.push(m));
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "outcome")]
pub enum Delivery {
    Delivered { at: f64, rate: Option<f64> },
    Lost { rate: f64 },
}

/// Max-priority traffic rides the anti-interference control link and always
/// arrives after `ctrl_latency`. Everything else needs a link rate of at
/// least `rate_floor`.
pub fn deliver(
    msg: &ControlMessage,
    src: &Position,
    dst: &Position,
    channel: &ChannelParams,
    env: &EnvironmentField,
    params: &ControlParams,
) -> Delivery {
    if msg.priority >= MAX_PRIORITY {
        return Delivery::Delivered { at: msg.sent_at + params.ctrl_latency, rate: None };
    }
    let rate = link_rate(src, dst, channel, env);
    if rate >= params.rate_floor {
        Delivery::Delivered { at: msg.sent_at + params.ctrl_latency + params.message_bits / rate, rate: Some(rate) }
    } else {
        Delivery::Lost { rate }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ObjectiveRecord {
    pub objective: u64,
    pub subnet: SubnetId,
    pub issued_at: f64,
    pub returning: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct GlobalSnapshot {
    pub time: f64,
    pub reports: BTreeMap<SubnetId, SubnetReport>,
    pub pool_size: usize,
}

#[derive(Clone, Debug, Default)]
pub struct ControlCenter {
    global_state: GlobalSnapshot,
    pub objective_queue: VecDeque<ObjectiveRecord>,
    next_objective: u64,
}

impl ControlCenter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn snapshot(&self) -> &GlobalSnapshot {
        &self.global_state
    }

    /// Advances the snapshot clock; never moves it backwards.
    pub fn touch(&mut self, now: f64, pool_size: usize) {
        self.global_state.time = self.global_state.time.max(now);
        self.global_state.pool_size = pool_size;
    }

    /// North-bound report intake. Older reports never replace newer ones.
    pub fn observe(&mut self, report: SubnetReport) {
        let keep = self
            .global_state
            .reports
            .get(&report.subnet)
            .is_none_or(|r| r.report_time <= report.report_time);
        if keep {
            self.global_state.reports.insert(report.subnet, report);
        }
    }

    pub fn forget(&mut self, subnet: SubnetId) {
        self.global_state.reports.remove(&subnet);
    }

    fn record(&mut self, subnet: SubnetId, now: f64, returning: bool) -> u64 {
        let objective = self.next_objective;
        self.next_objective += 1;
        self.objective_queue.push_back(ObjectiveRecord { objective, subnet, issued_at: now, returning });
        objective
    }
}

/// Manages one or more subnets on behalf of the control center.
#[derive(Clone, Debug, PartialEq)]
pub struct CcdsController {
    pub managed_subnets: BTreeSet<SubnetId>,
}

impl CcdsController {
    pub fn for_subnet(id: SubnetId) -> Self {
        Self { managed_subnets: BTreeSet::from([id]) }
    }

    /// South-bound translation of an objective into per-UAV assignments.
    pub fn translate(
        &self,
        objective: &ControlMessage,
        subnet: &Subnet,
        classes: &ClassMap,
        ids: &mut MessageIds,
        now: f64,
    ) -> Vec<ControlMessage> {
        let Payload::Objective { objective: oid, subnet: sid, directive } = objective.payload else {
            return vec![];
        };
        if sid != subnet.id || !self.managed_subnets.contains(&sid) {
            return vec![];
        }
        let weights = assign_task_weights(&subnet.members, classes);
        subnet
            .members
            .iter()
            .map(|&u| {
                ControlMessage::new(
                    ids,
                    MessageKind::TaskAssign,
                    Payload::Assign { objective: oid, subnet: sid, directive, weights: weights.of(u) },
                    Endpoint::Controller(sid),
                    Endpoint::Uav(u),
                    now,
                )
            })
            .collect()
    }

    /// The report this controller sends north about one of its subnets.
    pub fn report(
        &self,
        subnet: SubnetId,
        report: SubnetReport,
        ids: &mut MessageIds,
        now: f64,
    ) -> Option<ControlMessage> {
        self.managed_subnets.contains(&subnet).then(|| {
            ControlMessage::new(
                ids,
                MessageKind::StateReport,
                Payload::Report(report),
                Endpoint::Controller(subnet),
                Endpoint::Center,
                now,
            )
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct HierarchicalOutput {
    pub messages: Vec<ControlMessage>,
    /// Subnets whose latest report was missing or stale.
    pub deferred: Vec<SubnetId>,
}

/// One control period of hierarchical collaborative control: the center
/// reads its snapshot and issues one objective (or a return command for a
/// critical subnet) per managed operational subnet.
pub fn hierarchical_step<'a>(
    center: &mut ControlCenter,
    controllers: &[CcdsController],
    subnets: impl IntoIterator<Item = &'a Subnet>,
    now: f64,
    params: &ControlParams,
    ids: &mut MessageIds,
) -> HierarchicalOutput {
    let subnets: BTreeMap<SubnetId, &Subnet> = subnets.into_iter().map(|s| (s.id, s)).collect();
    let mut out = HierarchicalOutput::default();
    for controller in controllers {
        for sid in &controller.managed_subnets {
            let Some(subnet) = subnets.get(sid) else { continue };
            if subnet.state != SubnetState::Operational {
                continue;
            }
            let report = match center.global_state.reports.get(sid) {
                Some(r) if now - r.report_time <= params.staleness_bound() => r.clone(),
                _ => {
                    out.deferred.push(*sid);
                    continue;
                }
            };
            let msg = if report.situation == Situation::Critical {
                let objective = center.record(*sid, now, true);
                ControlMessage::new(
                    ids,
                    MessageKind::ReturnCommand,
                    Payload::Return { objective, subnet: *sid },
                    Endpoint::Center,
                    Endpoint::Controller(*sid),
                    now,
                )
            } else {
                let directive = if report.situation == Situation::Alert { Directive::Retask } else { Directive::Sustain };
                let objective = center.record(*sid, now, false);
                ControlMessage::new(
                    ids,
                    MessageKind::Objective,
                    Payload::Objective { objective, subnet: *sid, directive },
                    Endpoint::Center,
                    Endpoint::Controller(*sid),
                    now,
                )
            };
            out.messages.push(msg);
        }
    }
    out
}

/// East-west exchange: every UAV shares its state with each formation
/// neighbor.
pub fn distributed_step(
    topology: &Topology,
    states: &BTreeMap<UavId, PeerState>,
    now: f64,
    ids: &mut MessageIds,
) -> Vec<ControlMessage> {
    let mut out = Vec::new();
    for (u, neighbors) in topology.adjacency() {
        let Some(state) = states.get(&u) else { continue };
        for v in neighbors {
            out.push(ControlMessage::new(
                ids,
                MessageKind::PeerShare,
                Payload::Peer(state.clone()),
                Endpoint::Uav(u),
                Endpoint::Uav(v),
                now,
            ));
        }
    }
    out
}

/// A UAV's decision in distributed mode, with the set of UAVs whose state
/// it read.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LocalDecision {
    pub uav: UavId,
    pub inputs: BTreeSet<UavId>,
    /// Neighbor to offload to, if one is less loaded.
    pub forward_target: Option<UavId>,
    pub max_neighbor_risk: RiskLevel,
}

/// Decides from own state and formation neighbors' shares only; shares
/// from any other UAV are ignored.
pub fn local_decision(
    own: &PeerState,
    received: &BTreeMap<UavId, PeerState>,
    topology: &Topology,
) -> LocalDecision {
    let neighbors = topology.neighbors(own.uav);
    let mut inputs = BTreeSet::from([own.uav]);
    let mut best: Option<(f64, UavId)> = None;
    let mut max_neighbor_risk = 0;
    for (&v, share) in received.iter().filter(|(v, _)| neighbors.contains(v)) {
        inputs.insert(v);
        max_neighbor_risk = max_neighbor_risk.max(share.risk_level);
        if share.backlog < own.backlog && best.is_none_or(|(b, _)| share.backlog < b) {
            best = Some((share.backlog, v));
        }
    }
    LocalDecision { uav: own.uav, inputs, forward_target: best.map(|(_, v)| v), max_neighbor_risk }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EdgeLoad {
    /// Bits waiting on the edge.
    pub pending_volume: f64,
    /// Queue depth at the edge.
    pub congestion: f64,
    pub priority: f64,
}

/// Per node, the bandwidth share of each incident edge.
pub type BandwidthShares = BTreeMap<UavId, BTreeMap<(UavId, UavId), f64>>;

/// Adaptive communication strategy: each edge is weighted by
/// `priority * pending_volume / (1 + congestion)` and weights are normalized
/// over the edges incident to each node (uniform when all are zero).
pub fn acs_adjust(topology: &Topology, loads: &BTreeMap<(UavId, UavId), EdgeLoad>) -> BandwidthShares {
    let weight = |e: &(UavId, UavId)| {
        loads
            .get(e)
            .or_else(|| loads.get(&(e.1, e.0)))
            .map_or(0.0, |l| l.priority.max(0.0) * l.pending_volume.max(0.0) / (1.0 + l.congestion.max(0.0)))
    };
    let mut out = BandwidthShares::new();
    for &node in topology.nodes() {
        let incident: Vec<(UavId, UavId)> =
            topology.edges().iter().copied().filter(|&(a, b)| a == node || b == node).collect();
        let mut w: Vec<f64> = incident.iter().map(weight).collect();
        normalize(&mut w);
        out.insert(node, incident.into_iter().zip(w).collect());
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Perception,
    Decision,
    Execution,
}

/// One UAV's weights across roles.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RoleWeights {
    pub perception: f64,
    pub decision: f64,
    pub execution: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct TaskWeights {
    pub by_role: BTreeMap<Role, BTreeMap<UavId, f64>>,
}

impl TaskWeights {
    pub fn get(&self, role: Role, uav: UavId) -> f64 {
        self.by_role.get(&role).and_then(|m| m.get(&uav)).copied().unwrap_or(0.0)
    }

    pub fn of(&self, uav: UavId) -> RoleWeights {
        RoleWeights {
            perception: self.get(Role::Perception, uav),
            decision: self.get(Role::Decision, uav),
            execution: self.get(Role::Execution, uav),
        }
    }

    pub fn is_normalized(&self) -> bool {
        self.by_role.values().all(|m| m.is_empty() || (m.values().sum::<f64>() - 1.0).abs() <= 1e-9)
    }
}

/// Capability-based weights: perception-class UAVs score 2 for the
/// perception role, compute-class UAVs score 2 for execution, everything
/// else scores 1. UAVs with unknown class score 1 everywhere.
pub fn assign_task_weights(members: &BTreeSet<UavId>, classes: &ClassMap) -> TaskWeights {
    let score = |role: Role, u: &UavId| match (role, classes.get(u)) {
        (Role::Perception, Some(CapabilityClass::Perception)) => 2.0,
        (Role::Execution, Some(CapabilityClass::Compute)) => 2.0,
        _ => 1.0,
    };
    let mut by_role = BTreeMap::new();
    for role in [Role::Perception, Role::Decision, Role::Execution] {
        let mut w: Vec<f64> = members.iter().map(|u| score(role, u)).collect();
        normalize(&mut w);
        by_role.insert(role, members.iter().copied().zip(w).collect());
    }
    TaskWeights { by_role }
}
