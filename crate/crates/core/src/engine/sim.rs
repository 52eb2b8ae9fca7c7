//! The event loop that ties cognition, reconfiguration, the control plane
//! and offloading together.
//!
//! Every logged record is itself an event: it is scheduled at the current
//! time and committed to the log when dequeued, so the log is in `(t, seq)`
//! order by construction.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::Rng;
use serde_json::{json, Value};

use crate::cognition::{
    assess_risk, classify, escalate_for_peer_alert, infer_situation, perceive, predict, risk_response, shunt_feedback,
    CognitionParams, ExecutionResult, RegionId, Situation, Strategy,
};
use crate::control::{
    acs_adjust, distributed_step, hierarchical_step, local_decision, CcdsController, ControlCenter, ControlMessage,
    ControlMode, Delivery, EdgeLoad, Endpoint, MessageIds, Payload, PeerState, SubnetReport,
};
use crate::engine::config::SimConfig;
use crate::engine::log::{EventLog, LogEntry};
use crate::engine::queue::EventQueue;
use crate::engine::rng::{RngStreams, StreamRng};
use crate::error::Result;
use crate::model::{link_rate, CapabilityClass, DeviceId, IotDevice, Membership, Task, TaskId, UavId, UavNode};
use crate::offload::metrics::{TASK_ACCEPT, TASK_ARRIVAL, TASK_COMPLETE, TASK_DROP};
use crate::offload::{
    generate_tasks, LinkModel, MetricAccumulator, MetricRecord, OffloadDecision, Policy, SwarmSnapshot, UavView,
};
use crate::reconfig::{
    best_assignment, trigger_environment_adaptation, FormationKind, FormationTemplate, Issuer, MergeTicket, Mission,
    RegistryParams, RejoinAck, Requirements, SubnetState, SwarmRegistry,
};
use crate::{control, Position};

/// Name of the mission every UAV is formed for at start.
pub const CASE_STUDY_MISSION: &str = "case_study";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RunOptions {
    /// Keep log entries in memory (the hash is always kept).
    pub retain_log: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { retain_log: true }
    }
}

/// Validates `config` and runs it to the horizon.
pub fn run(config: &SimConfig) -> Result<(EventLog, MetricRecord)> {
    run_with(config, RunOptions::default())
}

pub fn run_with(config: &SimConfig, options: RunOptions) -> Result<(EventLog, MetricRecord)> {
    config.validate()?;
    let mut sim = Sim::new(config, options)?;
    sim.run()?;
    Ok(sim.finish())
}

/// Hover points on a near-square grid: `ceil(sqrt n)` columns, cell
/// centers, at `altitude`.
pub fn hover_grid(n: usize, side: f64, altitude: f64) -> Vec<Position> {
    if n == 0 {
        return vec![];
    }
    let cols = (n as f64).sqrt().ceil() as usize;
    let rows = n.div_ceil(cols);
    (0..n)
        .map(|i| {
            let (r, c) = (i / cols, i % cols);
            Position::new((c as f64 + 0.5) * side / cols as f64, (r as f64 + 0.5) * side / rows as f64, altitude)
        })
        .collect()
}

/// Substream names, fixed so logs stay comparable across builds.
pub fn device_stream(d: usize) -> String {
    format!("device/{d}")
}

pub fn placement_stream(d: usize) -> String {
    format!("device/{d}/placement")
}

enum Ev {
    Record { kind: &'static str, payload: Value },
    Tick,
    Arrival { device: usize, task: Task },
    TransferDone { task: TaskId },
    ForwardDone { task: TaskId },
    ServiceDone { uav: usize },
    Deliver { msg: ControlMessage },
    MergeReady { ticket: MergeTicket },
    RejoinStep { subnet: crate::model::SubnetId },
}

#[derive(Default)]
struct Exec {
    busy_until: Option<f64>,
    /// Seconds of service waiting behind the head.
    waiting_work: f64,
    /// Seconds of service decided for this UAV but still in transit.
    inbound_work: f64,
    inbound: usize,
}

struct InFlight {
    task: Task,
    device: usize,
    decision: OffloadDecision,
}

struct Sim<'c> {
    cfg: &'c SimConfig,
    cog: CognitionParams,
    queue: EventQueue<Ev>,
    log: EventLog,
    metrics: MetricAccumulator,
    policy: Policy,
    policy_rng: StreamRng,
    uav_rngs: Vec<StreamRng>,
    waypoints: Vec<Position>,
    uavs: Vec<UavNode>,
    exec: Vec<Exec>,
    devices: Vec<IotDevice>,
    pending: Vec<std::vec::IntoIter<Task>>,
    in_flight: HashMap<TaskId, InFlight>,
    registry: SwarmRegistry,
    center: ControlCenter,
    ids: MessageIds,
    peer_tables: Vec<BTreeMap<UavId, PeerState>>,
    strategy: Vec<Strategy>,
    demand: Vec<Option<RegionId>>,
    /// Bits being forwarded per directed UAV pair, with the top priority.
    forward_volume: BTreeMap<(UavId, UavId), (f64, i32)>,
    mission: Option<Mission>,
    center_pos: Position,
    deferral_logged: BTreeSet<crate::model::SubnetId>,
}

impl<'c> Sim<'c> {
    fn new(cfg: &'c SimConfig, options: RunOptions) -> Result<Self> {
        let streams = RngStreams::new(cfg.seed);
        let cog = cfg.cognition_params();
        let side = cfg.area_side;

        let positions = match &cfg.uav_positions {
            Some(p) => p.iter().map(|&(x, y)| Position::new(x, y, cfg.uav_altitude)).collect(),
            None => hover_grid(cfg.n_uavs, side, cfg.uav_altitude),
        };
        let uavs: Vec<UavNode> = positions
            .into_iter()
            .enumerate()
            .map(|(i, pos)| {
                let mut u = UavNode::new(UavId(i as u32), pos, cfg.compute_capacity, cfg.class_of(i), &cog);
                u.speed = cfg.uav_speed;
                u.cognition.strategy_store = cfg.risk_strategy.clone();
                u
            })
            .collect();
        let mut uav_rngs: Vec<StreamRng> = (0..cfg.n_uavs).map(|i| streams.stream(&format!("uav/{i}"))).collect();
        let waypoints = uav_rngs
            .iter_mut()
            .zip(&uavs)
            .map(|(r, u)| {
                if cfg.uav_speed > 0.0 {
                    Position::new(r.random_range(0.0..=side), r.random_range(0.0..=side), cfg.uav_altitude)
                } else {
                    u.pos
                }
            })
            .collect();

        let mut devices = Vec::with_capacity(cfg.n_devices);
        let mut pending = Vec::with_capacity(cfg.n_devices);
        for d in 0..cfg.n_devices {
            let pos = match &cfg.device_positions {
                Some(p) => Position::ground(p[d].0, p[d].1),
                None => {
                    let mut r = streams.stream(&placement_stream(d));
                    Position::ground(r.random_range(0.0..=side), r.random_range(0.0..=side))
                }
            };
            let dev = IotDevice { id: DeviceId(d as u32), pos, arrival_rate: cfg.arrival_rate };
            let tasks = generate_tasks(&dev, cfg.horizon, &cfg.tasks, &mut streams.stream(&device_stream(d)));
            devices.push(dev);
            pending.push(tasks.into_iter());
        }

        let classes = uavs.iter().map(|u| (u.id, u.capability_class)).collect();
        let registry =
            SwarmRegistry::new(classes, RegistryParams { self_org_duration: cfg.self_org_duration });
        let n = uavs.len();
        Ok(Self {
            cfg,
            cog,
            queue: EventQueue::new(),
            log: if options.retain_log { EventLog::new() } else { EventLog::hash_only() },
            metrics: MetricAccumulator::default(),
            policy: Policy::new(cfg.policy, cfg.bandit),
            policy_rng: streams.stream("policy"),
            uav_rngs,
            waypoints,
            exec: (0..n).map(|_| Exec::default()).collect(),
            uavs,
            devices,
            pending,
            in_flight: HashMap::new(),
            registry,
            center: ControlCenter::new(),
            ids: MessageIds::default(),
            peer_tables: vec![BTreeMap::new(); n],
            strategy: vec![Strategy::Continue; n],
            demand: vec![None; n],
            forward_volume: BTreeMap::new(),
            mission: None,
            center_pos: Position::ground(side / 2.0, side / 2.0),
            deferral_logged: BTreeSet::new(),
        })
    }

    fn now(&self) -> f64 {
        self.queue.now()
    }

    fn record(&mut self, kind: &'static str, payload: Value) -> Result<()> {
        self.queue.schedule(self.now(), Ev::Record { kind, payload })?;
        Ok(())
    }

    fn flush_registry(&mut self) -> Result<()> {
        for e in self.registry.drain_events() {
            self.record(e.kind, e.payload)?;
        }
        for u in &mut self.uavs {
            u.membership = self.registry.membership(u.id).unwrap_or(Membership::Pool);
            u.is_gateway = self.registry.subnet_of(u.id).is_some_and(|s| s.gateways.contains(&u.id));
        }
        Ok(())
    }

    fn link(&self) -> LinkModel<'c> {
        LinkModel { channel: &self.cfg.channel, env: &self.cfg.env, rate_floor: self.cfg.control.rate_floor }
    }

    fn rate(&self, a: &Position, b: &Position) -> f64 {
        link_rate(a, b, &self.cfg.channel, &self.cfg.env)
    }

    fn start(&mut self) -> Result<()> {
        let cfg = self.cfg;
        self.record(
            "sim_start",
            json!({
                "seed": cfg.seed,
                "n_uavs": cfg.n_uavs,
                "n_devices": cfg.n_devices,
                "horizon": cfg.horizon,
                "policy": cfg.policy.as_str(),
                "control_mode": cfg.control_mode.as_str(),
            }),
        )?;
        for i in 0..self.uavs.len() {
            let u = &self.uavs[i];
            let payload = json!({
                "uav": u.id, "class": u.capability_class, "pos": [u.pos.x, u.pos.y, u.pos.z],
                "compute_capacity": u.compute_capacity,
            });
            self.record("uav_init", payload)?;
        }
        for d in 0..self.devices.len() {
            let dev = &self.devices[d];
            let payload = json!({ "device": dev.id, "pos": [dev.pos.x, dev.pos.y], "arrival_rate": dev.arrival_rate });
            self.record("device_init", payload)?;
        }
        let requirements = Requirements::of_members(self.uavs.iter().map(|u| &u.id), self.registry.classes());
        if !requirements.is_empty() {
            let mission = Mission { name: CASE_STUDY_MISSION.into(), requirements };
            self.registry.request_form(mission.clone(), cfg.formation, 0.0)?;
            self.mission = Some(mission);
            self.flush_registry()?;
        }
        for d in 0..self.pending.len() {
            if let Some(task) = self.pending[d].next() {
                self.queue.schedule(task.arrival_time, Ev::Arrival { device: d, task })?;
            }
        }
        if cfg.control.control_period <= cfg.horizon {
            self.queue.schedule(cfg.control.control_period, Ev::Tick)?;
        }
        Ok(())
    }

    fn run(&mut self) -> Result<()> {
        self.start()?;
        while let Some(t) = self.queue.peek_time() {
            if t > self.cfg.horizon {
                break;
            }
            let ev = self.queue.pop().expect("peeked");
            self.handle(ev.seq, ev.event)?;
        }
        Ok(())
    }

    fn finish(self) -> (EventLog, MetricRecord) {
        let m = self.metrics.finish(self.cfg.horizon, self.cfg.n_devices);
        (self.log, m)
    }

    fn handle(&mut self, seq: u64, ev: Ev) -> Result<()> {
        match ev {
            Ev::Record { kind, payload } => {
                self.metrics.observe(kind, &payload);
                self.log.append(LogEntry { t: self.now(), seq, kind: kind.to_owned(), payload });
                Ok(())
            }
            Ev::Tick => self.on_tick(),
            Ev::Arrival { device, task } => self.on_arrival(device, task),
            Ev::TransferDone { task } => self.on_transfer_done(task),
            Ev::ForwardDone { task } => self.on_forward_done(task),
            Ev::ServiceDone { uav } => self.on_service_done(uav),
            Ev::Deliver { msg } => self.on_deliver(msg),
            Ev::MergeReady { ticket } => {
                let now = self.now();
                if self.registry.complete_merge(ticket, now).is_ok() {
                    self.flush_registry()?;
                }
                Ok(())
            }
            Ev::RejoinStep { subnet } => {
                let now = self.now();
                let step = self.registry.advance_rejoin(subnet, now)?;
                self.center.forget(subnet);
                if step < 4 {
                    self.queue.schedule(now + self.cfg.control.ctrl_latency, Ev::RejoinStep { subnet })?;
                } else if let Some(m) = self.mission.clone() {
                    // The center re-plans the mission from the refilled pool.
                    self.registry.request_form(m, self.cfg.formation, now)?;
                }
                self.flush_registry()
            }
        }
    }

    // ---- offloading ----

    fn available(&self, i: usize) -> bool {
        match self.registry.membership(UavId(i as u32)) {
            Some(Membership::Subnet(s)) => {
                self.registry.subnet(s).is_some_and(|s| s.accepts_tasks()) && !self.registry.is_busy(s)
            }
            _ => false,
        }
    }

    fn backlog(&self, i: usize) -> f64 {
        let e = &self.exec[i];
        e.busy_until.map_or(0.0, |b| (b - self.now()).max(0.0)) + e.waiting_work + e.inbound_work
    }

    fn view(&self, i: usize) -> UavView {
        let u = &self.uavs[i];
        UavView { id: u.id, pos: u.pos, capacity: u.compute_capacity, backlog: self.backlog(i), queue_len: u.queue.len() }
    }

    fn snapshot(&self) -> SwarmSnapshot {
        let avail: Vec<usize> = (0..self.uavs.len()).filter(|&i| self.available(i)).collect();
        let mut snap = SwarmSnapshot::new(avail.iter().map(|&i| self.view(i)).collect());
        if !self.policy.kind().is_cooperative() {
            return snap;
        }
        let now = self.now();
        let bound = self.cfg.control.staleness_bound();
        for &i in &avail {
            let id = UavId(i as u32);
            let Some(subnet) = self.registry.subnet_of(id) else { continue };
            let peers: Vec<UavView> = match self.cfg.control_mode {
                ControlMode::Hierarchical => subnet
                    .members
                    .iter()
                    .filter(|&&v| v != id && self.available(v.0 as usize))
                    .map(|v| self.view(v.0 as usize))
                    .collect(),
                ControlMode::Distributed => {
                    let neighbors = subnet.topology().neighbors(id);
                    self.peer_tables[i]
                        .values()
                        .filter(|s| neighbors.contains(&s.uav) && now - s.time <= bound)
                        .map(|s| UavView {
                            id: s.uav,
                            pos: s.pos,
                            capacity: self.uavs[s.uav.0 as usize].compute_capacity,
                            backlog: (s.backlog - (now - s.time)).max(0.0),
                            queue_len: s.queue_len,
                        })
                        .collect()
                }
            };
            snap.forward.insert(id, peers);
        }
        snap
    }

    fn service_time(&self, task: TaskId, uav: usize) -> f64 {
        self.in_flight[&task].task.compute_demand / self.uavs[uav].compute_capacity
    }

    fn on_arrival(&mut self, device: usize, task: Task) -> Result<()> {
        let now = self.now();
        if let Some(next) = self.pending[device].next() {
            self.queue.schedule(next.arrival_time, Ev::Arrival { device, task: next })?;
        }
        self.record(
            TASK_ARRIVAL,
            json!({
                "task": task.id, "device": device, "data_size": task.data_size,
                "compute_demand": task.compute_demand, "priority": task.priority,
            }),
        )?;
        let snap = self.snapshot();
        let link = self.link();
        let dev = self.devices[device].clone();
        let Some(decision) = self.policy.decide(&task, &dev, &snap, &link, now, &mut self.policy_rng) else {
            return self.record(TASK_DROP, json!({ "task": task.id, "reason": "unreachable" }));
        };
        self.record(
            "offload_decision",
            json!({
                "task": task.id, "chosen_uav": decision.chosen_uav, "forwarded_to": decision.forwarded_to,
                "estimated_latency": decision.estimated_latency,
            }),
        )?;
        let chosen = decision.chosen_uav.0 as usize;
        let executor = decision.executor().0 as usize;
        let uplink = self.rate(&dev.pos, &self.uavs[chosen].pos);
        let region = self.cog.region_of(&dev.pos);
        let work = task.compute_demand / self.uavs[executor].compute_capacity;
        self.exec[executor].inbound_work += work;
        self.exec[executor].inbound += 1;
        self.demand[chosen] = Some(region);
        let at = now + task.data_size / uplink;
        let id = task.id;
        self.in_flight.insert(id, InFlight { task, device, decision });
        self.queue.schedule(at, Ev::TransferDone { task: id })?;
        Ok(())
    }

    fn release_inbound(&mut self, task: TaskId, uav: usize) {
        let work = self.service_time(task, uav);
        let e = &mut self.exec[uav];
        e.inbound -= 1;
        e.inbound_work = if e.inbound == 0 { 0.0 } else { (e.inbound_work - work).max(0.0) };
    }

    fn on_transfer_done(&mut self, task: TaskId) -> Result<()> {
        let f = &self.in_flight[&task];
        let (u, data, priority) = (f.decision.chosen_uav, f.task.data_size, f.task.priority);
        let Some(v) = f.decision.forwarded_to else {
            return self.accept(u.0 as usize, task);
        };
        let link = self.link();
        match link.usable_rate(&self.uavs[u.0 as usize].pos, &self.uavs[v.0 as usize].pos) {
            Some(rate) => {
                let e = self.forward_volume.entry((u, v)).or_insert((0.0, 0));
                e.0 += data;
                e.1 = e.1.max(priority);
                self.record("task_forward", json!({ "task": task, "from": u, "to": v }))?;
                self.queue.schedule(self.now() + data / rate, Ev::ForwardDone { task })?;
            }
            None => {
                self.release_inbound(task, v.0 as usize);
                self.in_flight.remove(&task);
                self.record(TASK_DROP, json!({ "task": task, "uav": u, "reason": "link_lost" }))?;
            }
        }
        Ok(())
    }

    fn on_forward_done(&mut self, task: TaskId) -> Result<()> {
        let f = &self.in_flight[&task];
        let (u, v, data) = (f.decision.chosen_uav, f.decision.executor(), f.task.data_size);
        if let Some(e) = self.forward_volume.get_mut(&(u, v)) {
            e.0 -= data;
            if e.0 <= 1e-9 {
                self.forward_volume.remove(&(u, v));
            }
        }
        self.accept(v.0 as usize, task)
    }

    fn accept(&mut self, uav: usize, task: TaskId) -> Result<()> {
        self.release_inbound(task, uav);
        let cap = self.cfg.queue_capacity;
        if cap > 0 && self.uavs[uav].queue.len() >= cap {
            self.in_flight.remove(&task);
            return self.record(TASK_DROP, json!({ "task": task, "uav": uav, "reason": "queue_full" }));
        }
        let data = self.in_flight[&task].task.data_size;
        self.uavs[uav].queue.push_back(task);
        self.record(TASK_ACCEPT, json!({ "task": task, "uav": uav, "data_size": data }))?;
        if self.exec[uav].busy_until.is_none() {
            self.start_service(uav)
        } else {
            self.exec[uav].waiting_work += self.service_time(task, uav);
            Ok(())
        }
    }

    fn start_service(&mut self, uav: usize) -> Result<()> {
        let Some(&head) = self.uavs[uav].queue.front() else { return Ok(()) };
        let end = self.now() + self.service_time(head, uav);
        self.exec[uav].busy_until = Some(end);
        self.record("task_start", json!({ "task": head, "uav": uav }))?;
        self.queue.schedule(end, Ev::ServiceDone { uav })?;
        Ok(())
    }

    fn on_service_done(&mut self, uav: usize) -> Result<()> {
        let now = self.now();
        let task = self.uavs[uav].queue.pop_front().expect("service completes the queue head");
        self.exec[uav].busy_until = None;
        let f = self.in_flight.remove(&task).expect("served task is in flight");
        let latency = now - f.task.arrival_time;
        self.record(
            TASK_COMPLETE,
            json!({
                "task": task, "uav": uav, "device": f.device, "arrival": f.task.arrival_time, "completion": now,
                "compute_demand": f.task.compute_demand, "data_size": f.task.data_size, "latency": latency,
                "forwarded": f.decision.forwarded_to.is_some(),
            }),
        )?;
        let result = ExecutionResult {
            task,
            success: latency <= self.cfg.latency_budget,
            completion_time: now,
            latency,
            origin_region: self.cog.region_of(&self.devices[f.device].pos),
        };
        shunt_feedback(&result, &mut self.uavs[uav].cognition, &self.cog);
        self.policy.observe(&f.decision, latency);
        if let Some(&next) = self.uavs[uav].queue.front() {
            let e = &mut self.exec[uav];
            e.waiting_work = if self.uavs[uav].queue.len() == 1 {
                0.0
            } else {
                (e.waiting_work - next_work(&self.in_flight, next, self.uavs[uav].compute_capacity)).max(0.0)
            };
            self.start_service(uav)?;
        }
        Ok(())
    }

    // ---- control plane ----

    fn endpoint_pos(&self, e: Endpoint) -> Option<Position> {
        match e {
            Endpoint::Center => Some(self.center_pos),
            Endpoint::Uav(u) => self.uavs.get(u.0 as usize).map(|u| u.pos),
            Endpoint::Controller(s) => {
                let s = self.registry.subnet(s)?;
                let head = s.pool_link.or_else(|| s.members.iter().next().copied())?;
                Some(self.uavs[head.0 as usize].pos)
            }
        }
    }

    fn send(&mut self, msg: ControlMessage) -> Result<()> {
        let (Some(src), Some(dst)) = (self.endpoint_pos(msg.src), self.endpoint_pos(msg.dst)) else {
            return self.record("msg_lost", json!({ "id": msg.id, "kind": msg.kind, "priority": msg.priority, "reason": "no_endpoint" }));
        };
        match control::deliver(&msg, &src, &dst, &self.cfg.channel, &self.cfg.env, &self.cfg.control) {
            Delivery::Delivered { at, .. } => {
                self.queue.schedule(at, Ev::Deliver { msg })?;
                Ok(())
            }
            Delivery::Lost { rate } => self.record(
                "msg_lost",
                json!({
                    "id": msg.id, "kind": msg.kind, "priority": msg.priority, "src": msg.src, "dst": msg.dst,
                    "rate": rate, "reason": "below_rate_floor",
                }),
            ),
        }
    }

    fn on_deliver(&mut self, msg: ControlMessage) -> Result<()> {
        let now = self.now();
        self.record(
            "msg_delivered",
            json!({
                "id": msg.id, "kind": msg.kind, "priority": msg.priority, "src": msg.src, "dst": msg.dst,
                "sent_at": msg.sent_at,
            }),
        )?;
        match (&msg.payload, msg.dst) {
            (Payload::Report(r), Endpoint::Center) => self.center.observe(r.clone()),
            (Payload::Objective { subnet, .. }, Endpoint::Controller(_)) => {
                if let Some(s) = self.registry.subnet(*subnet).filter(|s| s.state == SubnetState::Operational) {
                    let assigns = CcdsController::for_subnet(*subnet).translate(
                        &msg,
                        s,
                        self.registry.classes(),
                        &mut self.ids,
                        now,
                    );
                    for m in assigns {
                        self.send(m)?;
                    }
                }
            }
            (Payload::Return { subnet, objective }, Endpoint::Controller(_)) => {
                let ack = self.registry.rejoin_command(*subnet, Issuer::ControlCenter, now);
                let ack_label = match &ack {
                    Ok(RejoinAck::Started) => "started".to_string(),
                    Ok(RejoinAck::AlreadyInProgress) => "already_in_progress".to_string(),
                    Err(e) => e.to_string(),
                };
                self.record("return_command", json!({ "subnet": subnet, "objective": objective, "ack": ack_label }))?;
                if ack == Ok(RejoinAck::Started) {
                    self.queue.schedule(now + self.cfg.control.ctrl_latency, Ev::RejoinStep { subnet: *subnet })?;
                }
                self.flush_registry()?;
            }
            (Payload::Assign { objective, .. }, Endpoint::Uav(u)) => {
                let i = u.0 as usize;
                if self.strategy[i] == Strategy::RetreatToPool {
                    self.record(
                        "task_assign_override",
                        json!({ "uav": u, "objective": objective, "strategy": Strategy::RetreatToPool }),
                    )?;
                }
            }
            (Payload::Peer(share), Endpoint::Uav(u)) => {
                self.peer_tables[u.0 as usize].insert(share.uav, share.clone());
            }
            _ => {}
        }
        Ok(())
    }

    // ---- control period ----

    fn on_tick(&mut self) -> Result<()> {
        let now = self.now();
        self.move_uavs();
        self.cognition_step(now)?;
        self.replenish(now)?;
        self.adapt_formations(now)?;
        match self.cfg.control_mode {
            ControlMode::Hierarchical => self.hierarchical(now)?,
            ControlMode::Distributed => self.distributed(now)?,
        }
        self.acs(now)?;
        let next = now + self.cfg.control.control_period;
        if next <= self.cfg.horizon {
            self.queue.schedule(next, Ev::Tick)?;
        }
        Ok(())
    }

    fn move_uavs(&mut self) {
        if self.cfg.uav_speed <= 0.0 {
            return;
        }
        let step = self.cfg.uav_speed * self.cfg.control.control_period;
        let side = self.cfg.area_side;
        for i in 0..self.uavs.len() {
            let u = &mut self.uavs[i];
            u.pos = u.pos.step_toward(&self.waypoints[i], step);
            if u.pos.distance(&self.waypoints[i]) < 1e-9 {
                let r = &mut self.uav_rngs[i];
                self.waypoints[i] =
                    Position::new(r.random_range(0.0..=side), r.random_range(0.0..=side), self.cfg.uav_altitude);
            }
        }
    }

    fn link_quality(&self, i: usize) -> f64 {
        let id = UavId(i as u32);
        let pos = self.uavs[i].pos;
        let neighbors = self.registry.subnet_of(id).map(|s| s.topology().neighbors(id)).unwrap_or_default();
        if neighbors.is_empty() {
            return self.rate(&pos, &self.center_pos);
        }
        neighbors.iter().map(|v| self.rate(&pos, &self.uavs[v.0 as usize].pos)).fold(f64::INFINITY, f64::min)
    }

    fn peer_risk(&self, i: usize, levels: &[u8]) -> u8 {
        let id = UavId(i as u32);
        match self.cfg.control_mode {
            ControlMode::Hierarchical => self
                .registry
                .subnet_of(id)
                .map(|s| s.members.iter().filter(|&&v| v != id).map(|v| levels[v.0 as usize]).max().unwrap_or(0))
                .unwrap_or(0),
            ControlMode::Distributed => {
                let bound = self.cfg.control.staleness_bound();
                let now = self.now();
                self.peer_tables[i].values().filter(|s| now - s.time <= bound).map(|s| s.risk_level).max().unwrap_or(0)
            }
        }
    }

    fn cognition_step(&mut self, now: f64) -> Result<()> {
        let env = &self.cfg.env;
        let levels: Vec<u8> = self.uavs.iter().map(|u| u.cognition.risk.level).collect();
        for i in 0..self.uavs.len() {
            let demand = self.demand[i].take();
            perceive(&mut self.uavs[i], env, demand, now, &self.cog);
            let c = &mut self.uavs[i].cognition;
            if let Ok(p) = predict(&mut c.knowledge, &c.perception) {
                c.knowledge.state_estimate = classify(p, &self.cog);
            }
            let lq = self.link_quality(i);
            let peer = self.peer_risk(i, &levels);
            let risk = escalate_for_peer_alert(assess_risk(&self.uavs[i].pos, env, lq, &self.cog, now), peer);
            self.uavs[i].cognition.risk = risk;
        }
        for i in 0..self.uavs.len() {
            let u = &self.uavs[i];
            let subnet = match u.membership {
                Membership::Subnet(s) => Some(s),
                Membership::Pool => None,
            };
            let risk = u.cognition.risk;
            let resp = risk_response(u.id, u.capability_class, subnet, &risk, &u.cognition.strategy_store);
            if resp.strategy == self.strategy[i] {
                continue;
            }
            if let (Strategy::RetreatToPool, Some(_)) = (resp.strategy, subnet) {
                if self.registry.retreat(u.id, now).is_err() {
                    // Subnet busy reorganizing: try again next period.
                    continue;
                }
            }
            if let (Strategy::SwitchTask, Some(req)) = (resp.strategy, &resp.request) {
                let target = req.target_subnet.expect("switch requests name the subnet");
                if self.pool_can_serve(&req.requirements) {
                    if let Ok(t) = self.registry.reinforce(target, req.requirements.clone(), req.issuer, now) {
                        self.queue.schedule(now + self.cfg.self_org_duration, Ev::MergeReady { ticket: t })?;
                    }
                }
            }
            self.strategy[i] = resp.strategy;
            self.record(
                "risk_strategy",
                json!({
                    "uav": self.uavs[i].id, "level": risk.level, "source": risk.source, "strategy": resp.strategy,
                    "alert_swarm": resp.alert_swarm,
                }),
            )?;
            self.flush_registry()?;
        }
        Ok(())
    }

    /// Whether a lowest-id-first draw of `req` would take only UAVs not
    /// currently at risk.
    fn pool_can_serve(&self, req: &Requirements) -> bool {
        req.iter().all(|(class, need): (CapabilityClass, u32)| {
            let picks: Vec<UavId> = self.registry.pool().of_class(class).take(need as usize).collect();
            picks.len() == need as usize && picks.iter().all(|u| self.uavs[u.0 as usize].cognition.risk.level == 0)
        })
    }

    /// Refills subnets that lost members to retreats once safe UAVs of the
    /// missing classes are back in the pool.
    fn replenish(&mut self, now: f64) -> Result<()> {
        let short: Vec<(crate::model::SubnetId, Requirements)> = self
            .registry
            .subnets()
            .filter(|s| s.state == SubnetState::Operational && !self.registry.is_busy(s.id))
            .filter_map(|s| {
                let have = Requirements::of_members(&s.members, self.registry.classes());
                let missing = s.requirements().saturating_minus(&have);
                (!missing.is_empty()).then_some((s.id, missing))
            })
            .collect();
        for (sid, missing) in short {
            if !self.pool_can_serve(&missing) {
                continue;
            }
            if let Ok(t) = self.registry.reinforce(sid, missing, Issuer::ControlCenter, now) {
                self.queue.schedule(now + self.cfg.self_org_duration, Ev::MergeReady { ticket: t })?;
            }
            self.flush_registry()?;
        }
        Ok(())
    }

    fn adapt_formations(&mut self, now: f64) -> Result<()> {
        let floor = self.cfg.control.rate_floor;
        let admissible = [
            FormationTemplate::new(FormationKind::Grid),
            FormationTemplate::new(FormationKind::FlockRing),
            FormationTemplate { kind: FormationKind::PackHierarchy, branching: self.cfg.formation.branching.max(1) },
        ];
        let ids: Vec<_> = self.registry.subnets().map(|s| s.id).collect();
        for sid in ids {
            if self.registry.is_busy(sid) {
                continue;
            }
            let Some(s) = self.registry.subnet(sid) else { continue };
            let rate = |a: UavId, b: UavId| self.rate(&self.uavs[a.0 as usize].pos, &self.uavs[b.0 as usize].pos);
            let report: BTreeMap<(UavId, UavId), f64> =
                s.topology().edges().iter().map(|&(a, b)| ((a, b), rate(a, b))).collect();
            let Some(req) = trigger_environment_adaptation(s, &report, floor, now) else { continue };
            let current = report.values().copied().fold(f64::INFINITY, f64::min);
            let best = best_assignment(s, &admissible, rate);
            if best.min_edge_rate > current {
                self.registry.apply_assignment(sid, &best, &req, now)?;
                self.flush_registry()?;
            }
        }
        Ok(())
    }

    fn subnet_report(&self, sid: crate::model::SubnetId, now: f64) -> Option<SubnetReport> {
        let s = self.registry.subnet(sid)?;
        let members: Vec<&UavNode> = s.members.iter().map(|u| &self.uavs[u.0 as usize]).collect();
        let situation = infer_situation(members.iter().map(|u| &u.cognition.perception), &self.cog)
            .unwrap_or(Situation::Normal);
        Some(SubnetReport {
            subnet: sid,
            situation,
            members: members.len(),
            queued_tasks: members.iter().map(|u| u.queue.len()).sum(),
            max_risk: members.iter().map(|u| u.cognition.risk.level).max().unwrap_or(0),
            report_time: now,
        })
    }

    fn hierarchical(&mut self, now: f64) -> Result<()> {
        let operational: Vec<_> = self
            .registry
            .subnets()
            .filter(|s| s.state == SubnetState::Operational && !self.registry.is_busy(s.id))
            .map(|s| s.id)
            .collect();
        let controllers: Vec<CcdsController> = operational.iter().map(|&s| CcdsController::for_subnet(s)).collect();
        self.center.touch(now, self.registry.pool().len());
        let subnets: Vec<_> = operational.iter().filter_map(|&s| self.registry.subnet(s)).collect();
        let out = hierarchical_step(&mut self.center, &controllers, subnets, now, &self.cfg.control, &mut self.ids);
        for sid in out.deferred {
            if self.deferral_logged.insert(sid) {
                self.record("objective_deferred", json!({ "subnet": sid }))?;
            }
        }
        for m in out.messages {
            self.send(m)?;
        }
        for (ctl, &sid) in controllers.iter().zip(&operational) {
            let Some(report) = self.subnet_report(sid, now) else { continue };
            if let Some(m) = ctl.report(sid, report, &mut self.ids, now) {
                self.send(m)?;
            }
        }
        Ok(())
    }

    fn peer_state(&self, i: usize, now: f64) -> PeerState {
        let u = &self.uavs[i];
        PeerState {
            uav: u.id,
            queue_len: u.queue.len(),
            backlog: self.backlog(i),
            pos: u.pos,
            risk_level: u.cognition.risk.level,
            time: now,
        }
    }

    fn distributed(&mut self, now: f64) -> Result<()> {
        let ids: Vec<_> = self.registry.subnets().filter(|s| s.accepts_tasks()).map(|s| s.id).collect();
        let bound = self.cfg.control.staleness_bound();
        for sid in ids {
            let Some(s) = self.registry.subnet(sid) else { continue };
            let topo = s.topology();
            let states: BTreeMap<UavId, PeerState> =
                s.members.iter().map(|u| (*u, self.peer_state(u.0 as usize, now))).collect();
            for (&u, own) in &states {
                let fresh: BTreeMap<UavId, PeerState> = self.peer_tables[u.0 as usize]
                    .iter()
                    .filter(|(_, p)| now - p.time <= bound)
                    .map(|(k, p)| (*k, p.clone()))
                    .collect();
                let d = local_decision(own, &fresh, &topo);
                self.record(
                    "local_decision",
                    json!({
                        "uav": d.uav, "subnet": sid, "neighbors": topo.neighbors(u), "inputs": d.inputs,
                        "forward_target": d.forward_target, "max_neighbor_risk": d.max_neighbor_risk,
                    }),
                )?;
            }
            for m in distributed_step(&topo, &states, now, &mut self.ids) {
                self.send(m)?;
            }
        }
        Ok(())
    }

    fn acs(&mut self, now: f64) -> Result<()> {
        let ids: Vec<_> = self.registry.subnets().filter(|s| s.accepts_tasks()).map(|s| s.id).collect();
        for sid in ids {
            let Some(s) = self.registry.subnet(sid) else { continue };
            let topo = s.topology();
            if topo.edges().is_empty() {
                continue;
            }
            let loads: BTreeMap<(UavId, UavId), EdgeLoad> = topo
                .edges()
                .iter()
                .map(|&(a, b)| {
                    let (ab, pa) = self.forward_volume.get(&(a, b)).copied().unwrap_or((0.0, 0));
                    let (ba, pb) = self.forward_volume.get(&(b, a)).copied().unwrap_or((0.0, 0));
                    let congestion = (self.uavs[a.0 as usize].queue.len() + self.uavs[b.0 as usize].queue.len()) as f64;
                    ((a, b), EdgeLoad { pending_volume: ab + ba, congestion, priority: 1.0 + f64::from(pa.max(pb)) })
                })
                .collect();
            let shares = acs_adjust(&topo, &loads);
            let busy: Vec<_> = loads.iter().filter(|(_, l)| l.pending_volume > 0.0).map(|(e, _)| *e).collect();
            // Idle subnets have uniform shares; only log when traffic shapes them.
            if !busy.is_empty() {
                let shares: Vec<Value> = shares
                    .iter()
                    .flat_map(|(n, m)| m.iter().map(move |((a, b), w)| json!([n, a, b, w])))
                    .collect();
                self.record("acs", json!({ "subnet": sid, "time": now, "shares": shares }))?;
            }
        }
        Ok(())
    }
}

fn next_work(in_flight: &HashMap<TaskId, InFlight>, task: TaskId, capacity: f64) -> f64 {
    in_flight[&task].task.compute_demand / capacity
}
