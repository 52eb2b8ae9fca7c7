//! Task offloading: IoT task generation, the offloading policies, and the
//! per-run metrics.

pub mod bandit;
pub mod metrics;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

pub use bandit::{BanditParams, BanditPolicy};
pub use metrics::{compute_metrics, MetricAccumulator, MetricRecord};

use crate::model::{link_rate, IotDevice, Task, TaskId, UavId};
use crate::{ChannelParams, EnvironmentField, Position};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Random,
    GreedyNearest,
    GreedyLeastLoaded,
    #[default]
    Coop,
    Bandit,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 5] =
        [PolicyKind::Random, PolicyKind::GreedyNearest, PolicyKind::GreedyLeastLoaded, PolicyKind::Coop, PolicyKind::Bandit];

    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::Random => "random",
            PolicyKind::GreedyNearest => "greedy_nearest",
            PolicyKind::GreedyLeastLoaded => "greedy_least_loaded",
            PolicyKind::Coop => "coop",
            PolicyKind::Bandit => "bandit",
        }
    }

    pub fn is_cooperative(self) -> bool {
        self == PolicyKind::Coop
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PolicyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PolicyKind::ALL.into_iter().find(|p| p.as_str() == s).ok_or_else(|| {
            format!("unknown policy `{s}` (expected random | greedy_nearest | greedy_least_loaded | coop | bandit)")
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskParams {
    pub data_size_min: f64,
    pub data_size_max: f64,
    pub compute_demand_min: f64,
    pub compute_demand_max: f64,
    /// Priorities are drawn uniformly from `0..priority_levels`.
    pub priority_levels: u32,
}

impl Default for TaskParams {
    fn default() -> Self {
        Self {
            data_size_min: 0.5e6,
            data_size_max: 2e6,
            compute_demand_min: 0.2e9,
            compute_demand_max: 1e9,
            priority_levels: 3,
        }
    }
}

/// Poisson arrivals over `[0, horizon)`, drawn from the device's own stream.
/// Per task the draws are: inter-arrival gap, data size, compute demand,
/// priority.
pub fn generate_tasks<R: Rng + ?Sized>(device: &IotDevice, horizon: f64, params: &TaskParams, rng: &mut R) -> Vec<Task> {
    let mut out = Vec::new();
    if horizon <= 0.0 || device.arrival_rate <= 0.0 || !device.arrival_rate.is_finite() {
        return out;
    }
    let gaps = Exp::new(device.arrival_rate).expect("positive finite rate");
    let mut t = 0.0;
    loop {
        t += gaps.sample(rng);
        if t >= horizon {
            break;
        }
        let data = rng.random_range(params.data_size_min..=params.data_size_max);
        let demand = rng.random_range(params.compute_demand_min..=params.compute_demand_max);
        let priority = rng.random_range(0..params.priority_levels.max(1)) as i32;
        let index = u32::try_from(out.len()).expect("task index fits u32");
        let mut task = Task::new(TaskId::for_device(device.id, index), device.id, data, demand, t);
        task.priority = priority;
        out.push(task);
    }
    out
}

/// What a policy may know about one UAV.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct UavView {
    pub id: UavId,
    pub pos: Position,
    pub capacity: f64,
    /// Seconds of work committed to this UAV.
    pub backlog: f64,
    pub queue_len: usize,
}

impl UavView {
    fn service(&self, task: &Task) -> f64 {
        self.backlog + task.compute_demand / self.capacity
    }
}

/// State visible to a device when it offloads: the UAVs taking tasks, and
/// for each of them the peers it could forward to (as that UAV knows them).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SwarmSnapshot {
    pub uavs: Vec<UavView>,
    pub forward: BTreeMap<UavId, Vec<UavView>>,
}

impl SwarmSnapshot {
    pub fn new(mut uavs: Vec<UavView>) -> Self {
        uavs.sort_by_key(|u| u.id);
        Self { uavs, forward: BTreeMap::new() }
    }

    /// Every UAV may forward to every other listed UAV.
    pub fn fully_shared(uavs: Vec<UavView>) -> Self {
        let mut s = Self::new(uavs);
        for u in &s.uavs {
            s.forward.insert(u.id, s.uavs.iter().filter(|v| v.id != u.id).copied().collect());
        }
        s
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LinkModel<'a> {
    pub channel: &'a ChannelParams,
    pub env: &'a EnvironmentField,
    pub rate_floor: f64,
}

impl LinkModel<'_> {
    /// Rate of a usable link, or `None` below the floor.
    pub fn usable_rate(&self, a: &Position, b: &Position) -> Option<f64> {
        let r = link_rate(a, b, self.channel, self.env);
        (r > 0.0 && r >= self.rate_floor).then_some(r)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OffloadDecision {
    pub task_id: TaskId,
    pub chosen_uav: UavId,
    pub forwarded_to: Option<UavId>,
    pub decided_at: f64,
    pub estimated_latency: f64,
}

impl OffloadDecision {
    pub fn executor(&self) -> UavId {
        self.forwarded_to.unwrap_or(self.chosen_uav)
    }
}

/// Reachable UAVs with the device uplink rate.
fn reachable<'s>(device: &Position, snap: &'s SwarmSnapshot, link: &LinkModel) -> Vec<(&'s UavView, f64)> {
    snap.uavs.iter().filter_map(|u| link.usable_rate(device, &u.pos).map(|r| (u, r))).collect()
}

fn direct(task: &Task, u: &UavView, uplink: f64, now: f64) -> OffloadDecision {
    OffloadDecision {
        task_id: task.id,
        chosen_uav: u.id,
        forwarded_to: None,
        decided_at: now,
        estimated_latency: task.data_size / uplink + u.service(task),
    }
}

/// Nearest reachable UAV, no forwarding. Ties go to the lowest id.
pub fn decide_noncoop(task: &Task, device: &IotDevice, snap: &SwarmSnapshot, link: &LinkModel, now: f64) -> Option<OffloadDecision> {
    let mut best: Option<(f64, &UavView, f64)> = None;
    for (u, r) in reachable(&device.pos, snap, link) {
        let d = device.pos.distance(&u.pos);
        if best.is_none_or(|(bd, _, _)| d < bd) {
            best = Some((d, u, r));
        }
    }
    best.map(|(_, u, r)| direct(task, u, r, now))
}

/// Least backlog among reachable UAVs. Ties go to the lowest id.
pub fn decide_least_loaded(task: &Task, device: &IotDevice, snap: &SwarmSnapshot, link: &LinkModel, now: f64) -> Option<OffloadDecision> {
    let mut best: Option<(&UavView, f64)> = None;
    for (u, r) in reachable(&device.pos, snap, link) {
        if best.is_none_or(|(b, _)| u.backlog < b.backlog) {
            best = Some((u, r));
        }
    }
    best.map(|(u, r)| direct(task, u, r, now))
}

pub fn decide_random<R: Rng + ?Sized>(
    task: &Task,
    device: &IotDevice,
    snap: &SwarmSnapshot,
    link: &LinkModel,
    now: f64,
    rng: &mut R,
) -> Option<OffloadDecision> {
    let options = reachable(&device.pos, snap, link);
    if options.is_empty() {
        return None;
    }
    let (u, r) = options[rng.random_range(0..options.len())];
    Some(direct(task, u, r, now))
}

/// Minimizes uplink + min(local service, best forward) over all reachable
/// UAVs, where a forward costs the inter-UAV transfer plus the peer's
/// service. Forwarding is chosen only when strictly better; all ties go to
/// the lowest id.
pub fn decide_coop(task: &Task, device: &IotDevice, snap: &SwarmSnapshot, link: &LinkModel, now: f64) -> Option<OffloadDecision> {
    let mut best: Option<OffloadDecision> = None;
    for (u, uplink) in reachable(&device.pos, snap, link) {
        let mut stay = u.service(task);
        let mut target = None;
        for v in snap.forward.get(&u.id).into_iter().flatten() {
            if v.id == u.id {
                continue;
            }
            let Some(hop) = link.usable_rate(&u.pos, &v.pos) else { continue };
            let fwd = task.data_size / hop + v.service(task);
            if fwd < stay {
                stay = fwd;
                target = Some(v.id);
            }
        }
        let total = task.data_size / uplink + stay;
        if best.is_none_or(|b| total < b.estimated_latency) {
            best = Some(OffloadDecision {
                task_id: task.id,
                chosen_uav: u.id,
                forwarded_to: target,
                decided_at: now,
                estimated_latency: total,
            });
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq)]
pub enum Policy {
    Random,
    GreedyNearest,
    GreedyLeastLoaded,
    Coop,
    Bandit(BanditPolicy),
}

impl Policy {
    pub fn new(kind: PolicyKind, bandit: BanditParams) -> Self {
        match kind {
            PolicyKind::Random => Policy::Random,
            PolicyKind::GreedyNearest => Policy::GreedyNearest,
            PolicyKind::GreedyLeastLoaded => Policy::GreedyLeastLoaded,
            PolicyKind::Coop => Policy::Coop,
            PolicyKind::Bandit => Policy::Bandit(BanditPolicy::new(bandit)),
        }
    }

    pub fn kind(&self) -> PolicyKind {
        match self {
            Policy::Random => PolicyKind::Random,
            Policy::GreedyNearest => PolicyKind::GreedyNearest,
            Policy::GreedyLeastLoaded => PolicyKind::GreedyLeastLoaded,
            Policy::Coop => PolicyKind::Coop,
            Policy::Bandit(_) => PolicyKind::Bandit,
        }
    }

    /// `None` means no UAV is reachable and the task is dropped.
    pub fn decide<R: Rng + ?Sized>(
        &self,
        task: &Task,
        device: &IotDevice,
        snap: &SwarmSnapshot,
        link: &LinkModel,
        now: f64,
        rng: &mut R,
    ) -> Option<OffloadDecision> {
        match self {
            Policy::Random => decide_random(task, device, snap, link, now, rng),
            Policy::GreedyNearest => decide_noncoop(task, device, snap, link, now),
            Policy::GreedyLeastLoaded => decide_least_loaded(task, device, snap, link, now),
            Policy::Coop => decide_coop(task, device, snap, link, now),
            Policy::Bandit(b) => {
                let options = reachable(&device.pos, snap, link);
                let arms: Vec<UavId> = options.iter().map(|(u, _)| u.id).collect();
                let arm = b.select(&arms, rng)?;
                let (u, r) = options.into_iter().find(|(u, _)| u.id == arm)?;
                Some(direct(task, u, r, now))
            }
        }
    }

    /// Feeds an observed latency back; only the bandit learns.
    pub fn observe(&mut self, decision: &OffloadDecision, latency: f64) {
        if let Policy::Bandit(b) = self {
            b.update(decision.chosen_uav, latency);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::rng::RngStreams;
    use crate::model::{DeviceId, InterferenceZone};
    use proptest::prelude::*;

    fn device(x: f64, y: f64) -> IotDevice {
        IotDevice { id: DeviceId(0), pos: Position::ground(x, y), arrival_rate: 0.5 }
    }

    fn uav(id: u32, x: f64, y: f64, backlog: f64) -> UavView {
        UavView { id: UavId(id), pos: Position::new(x, y, 100.0), capacity: 3e9, backlog, queue_len: 0 }
    }

    fn task() -> Task {
        Task::new(TaskId(0), DeviceId(0), 1e6, 1e9, 0.0)
    }

    fn free_link() -> (ChannelParams, EnvironmentField) {
        (ChannelParams::default(), EnvironmentField::default())
    }

    #[test]
    fn generation_examples() {
        let s = RngStreams::new(9);
        let d = device(0.0, 0.0);
        assert!(generate_tasks(&d, 0.0, &TaskParams::default(), &mut s.stream("device/0")).is_empty());
        let a = generate_tasks(&d, 100.0, &TaskParams::default(), &mut s.stream("device/0"));
        let b = generate_tasks(&d, 100.0, &TaskParams::default(), &mut s.stream("device/0"));
        assert_eq!(a, b);
        assert!(a.windows(2).all(|w| w[0].arrival_time <= w[1].arrival_time));
        assert!(a.iter().all(|t| (0.5e6..=2e6).contains(&t.data_size) && (0.2e9..=1e9).contains(&t.compute_demand)));
    }

    #[test]
    fn poisson_count_within_three_sigma() {
        // 50 expected, sd sqrt(50) ~ 7.07.
        let d = device(0.0, 0.0);
        for seed in 0..200 {
            let n = generate_tasks(&d, 100.0, &TaskParams::default(), &mut RngStreams::new(seed).stream("device/0")).len();
            assert!((29..=71).contains(&n), "seed {seed}: {n}");
        }
    }

    #[test]
    fn noncoop_picks_nearest() {
        let (ch, env) = free_link();
        let link = LinkModel { channel: &ch, env: &env, rate_floor: 1e5 };
        let snap = SwarmSnapshot::fully_shared(vec![uav(0, 300.0, 0.0, 0.0), uav(1, 100.0, 0.0, 50.0)]);
        let d = decide_noncoop(&task(), &device(0.0, 0.0), &snap, &link, 0.0).unwrap();
        assert_eq!(d.chosen_uav, UavId(1));
        assert_eq!(d.forwarded_to, None);
        let one = SwarmSnapshot::new(vec![uav(4, 900.0, 900.0, 0.0)]);
        assert_eq!(decide_noncoop(&task(), &device(0.0, 0.0), &one, &link, 0.0).unwrap().chosen_uav, UavId(4));
    }

    #[test]
    fn unreachable_drops() {
        let ch = ChannelParams::default();
        let env = EnvironmentField {
            interference_zones: vec![InterferenceZone { center: Position::ground(500.0, 500.0), radius: 2000.0, added_noise: 1.0 }],
            risk_zones: vec![],
        };
        let link = LinkModel { channel: &ch, env: &env, rate_floor: 1e5 };
        let snap = SwarmSnapshot::fully_shared(vec![uav(0, 100.0, 0.0, 0.0)]);
        assert!(decide_noncoop(&task(), &device(0.0, 0.0), &snap, &link, 0.0).is_none());
        assert!(decide_coop(&task(), &device(0.0, 0.0), &snap, &link, 0.0).is_none());
    }

    #[test]
    fn coop_idle_matches_nearest_and_forwards_when_loaded() {
        let (ch, env) = free_link();
        let link = LinkModel { channel: &ch, env: &env, rate_floor: 1e5 };
        let idle = SwarmSnapshot::fully_shared(vec![uav(0, 500.0, 0.0, 0.0), uav(1, 0.0, 0.0, 0.0)]);
        let d = device(0.0, 0.0);
        assert_eq!(decide_coop(&task(), &d, &idle, &link, 0.0).unwrap().chosen_uav, UavId(1));
        assert_eq!(decide_coop(&task(), &d, &idle, &link, 0.0).unwrap().forwarded_to, None);

        let busy = SwarmSnapshot::fully_shared(vec![uav(0, 100.0, 0.0, 0.0), uav(1, 0.0, 0.0, 10.0)]);
        let dec = decide_coop(&task(), &d, &busy, &link, 0.0).unwrap();
        assert!(dec.executor() == UavId(0));
        assert!(dec.estimated_latency < 10.0);
    }

    #[test]
    fn bandit_policy_updates_chosen_arm() {
        let (ch, env) = free_link();
        let link = LinkModel { channel: &ch, env: &env, rate_floor: 1e5 };
        let mut p = Policy::new(PolicyKind::Bandit, BanditParams::default());
        let snap = SwarmSnapshot::new(vec![uav(0, 0.0, 0.0, 0.0), uav(1, 10.0, 0.0, 0.0)]);
        let mut rng = RngStreams::new(0).stream("policy");
        let d = p.decide(&task(), &device(0.0, 0.0), &snap, &link, 0.0, &mut rng).unwrap();
        assert_eq!(d.chosen_uav, UavId(0));
        p.observe(&d, 2.0);
        let Policy::Bandit(b) = &p else { unreachable!() };
        assert_eq!(b.value(UavId(0)), Some(-2.0));
    }

    proptest! {
        #[test]
        fn coop_never_worse_than_noncoop(
            uavs in prop::collection::vec((0.0..1000.0f64, 0.0..1000.0f64, 0.0..20.0f64), 1..7),
            dx in 0.0..1000.0f64, dy in 0.0..1000.0f64,
            data in 0.5e6..2e6f64, demand in 0.2e9..1e9f64,
        ) {
            let (ch, env) = free_link();
            let link = LinkModel { channel: &ch, env: &env, rate_floor: 1e5 };
            let views = uavs.iter().enumerate().map(|(i, &(x, y, b))| uav(i as u32, x, y, b)).collect();
            let snap = SwarmSnapshot::fully_shared(views);
            let t = Task::new(TaskId(0), DeviceId(0), data, demand, 0.0);
            let d = device(dx, dy);
            let c = decide_coop(&t, &d, &snap, &link, 0.0).unwrap();
            let n = decide_noncoop(&t, &d, &snap, &link, 0.0).unwrap();
            prop_assert!(c.estimated_latency <= n.estimated_latency);
        }
    }
}
