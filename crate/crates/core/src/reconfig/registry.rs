use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::Serialize;
use serde_json::{json, Value};

use super::{
    designate_gateways, draw_from_pool, merge_compatible, plan_based_merge, pool_based_form, Assignment, ClassMap,
    FormationTemplate, Issuer, Mission, PoolId, ReconfigError, ReconfigKind, ReconfigRequest, Requirements,
    ResourcePool, Subnet, SubnetState,
};
use crate::model::{CapabilityClass, Membership, SubnetId, UavId};

/// A reconfiguration record waiting to be committed to the event log.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReconfigEvent {
    pub time: f64,
    pub kind: &'static str,
    pub payload: Value,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegistryParams {
    /// Seconds both sources of a merge spend self-organizing.
    pub self_org_duration: f64,
}

impl Default for RegistryParams {
    fn default() -> Self {
        Self { self_org_duration: 2.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FormOutcome {
    Formed(SubnetId),
    /// Waiting in the FIFO form queue under this ticket.
    Queued(u64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RejoinAck {
    Started,
    AlreadyInProgress,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct MergeTicket(pub u64);

#[derive(Clone, Debug)]
struct PendingForm {
    ticket: u64,
    mission: Mission,
    template: FormationTemplate,
    issued_at: f64,
}

#[derive(Clone, Debug)]
struct PendingMerge {
    a: SubnetId,
    b: SubnetId,
    joint: Option<Mission>,
    from: f64,
    until: f64,
}

/// Owns every subnet and the resource pool, and applies reconfiguration
/// operations so that each UAV is always in exactly one subnet or the pool.
#[derive(Clone, Debug)]
pub struct SwarmRegistry {
    params: RegistryParams,
    classes: ClassMap,
    membership: BTreeMap<UavId, Membership>,
    subnets: BTreeMap<SubnetId, Subnet>,
    pool: ResourcePool,
    next_subnet: u32,
    next_ticket: u64,
    pending_forms: VecDeque<PendingForm>,
    merges: BTreeMap<MergeTicket, PendingMerge>,
    rejoins: BTreeMap<SubnetId, u8>,
    events: Vec<ReconfigEvent>,
}

impl SwarmRegistry {
    /// All UAVs start in the pool.
    pub fn new(classes: ClassMap, params: RegistryParams) -> Self {
        let pool = ResourcePool::with_members(classes.iter().map(|(&u, &c)| (u, c)));
        let membership = classes.keys().map(|&u| (u, Membership::Pool)).collect();
        Self {
            params,
            classes,
            membership,
            subnets: BTreeMap::new(),
            pool,
            next_subnet: 0,
            next_ticket: 0,
            pending_forms: VecDeque::new(),
            merges: BTreeMap::new(),
            rejoins: BTreeMap::new(),
            events: Vec::new(),
        }
    }

    pub fn params(&self) -> &RegistryParams {
        &self.params
    }

    pub fn classes(&self) -> &ClassMap {
        &self.classes
    }

    pub fn class_of(&self, uav: UavId) -> Option<CapabilityClass> {
        self.classes.get(&uav).copied()
    }

    pub fn pool(&self) -> &ResourcePool {
        &self.pool
    }

    pub fn subnet(&self, id: SubnetId) -> Option<&Subnet> {
        self.subnets.get(&id)
    }

    pub fn subnets(&self) -> impl Iterator<Item = &Subnet> + '_ {
        self.subnets.values()
    }

    pub fn membership(&self, uav: UavId) -> Option<Membership> {
        self.membership.get(&uav).copied()
    }

    pub fn subnet_of(&self, uav: UavId) -> Option<&Subnet> {
        match self.membership(uav)? {
            Membership::Subnet(s) => self.subnets.get(&s),
            Membership::Pool => None,
        }
    }

    pub fn pending_form_count(&self) -> usize {
        self.pending_forms.len()
    }

    pub fn pending_merges(&self) -> impl Iterator<Item = (MergeTicket, f64)> + '_ {
        self.merges.iter().map(|(&t, m)| (t, m.until))
    }

    pub fn rejoin_step(&self, subnet: SubnetId) -> Option<u8> {
        self.rejoins.get(&subnet).copied()
    }

    pub fn is_busy(&self, subnet: SubnetId) -> bool {
        self.rejoins.contains_key(&subnet) || self.merges.values().any(|m| m.a == subnet || m.b == subnet)
    }

    pub fn drain_events(&mut self) -> Vec<ReconfigEvent> {
        std::mem::take(&mut self.events)
    }

    fn emit(&mut self, time: f64, kind: &'static str, payload: Value) {
        self.events.push(ReconfigEvent { time, kind, payload });
    }

    fn install(&mut self, subnet: Subnet) {
        for &m in &subnet.members {
            self.membership.insert(m, Membership::Subnet(subnet.id));
        }
        self.subnets.insert(subnet.id, subnet);
    }

    fn retire(&mut self, id: SubnetId, time: f64) {
        if self.subnets.remove(&id).is_some() {
            self.rejoins.remove(&id);
            self.emit(time, "subnet_retired", json!({ "subnet": id }));
        }
    }

    fn operational(&self, id: SubnetId) -> Result<&Subnet, ReconfigError> {
        let s = self.subnets.get(&id).ok_or(ReconfigError::UnknownSubnet(id))?;
        if s.state != SubnetState::Operational || self.is_busy(id) {
            return Err(ReconfigError::NotOperational(id));
        }
        Ok(s)
    }

    /// Subnet-draw or on-demand request: a new `Forming` subnet from the pool.
    pub fn draw(&mut self, req: &ReconfigRequest, now: f64) -> Result<SubnetId, ReconfigError> {
        if req.kind == ReconfigKind::OnDemand {
            self.emit(now, "on_demand", json!({ "issuer": req.issuer.to_string(), "requirements": req.requirements }));
        }
        let id = SubnetId(self.next_subnet);
        match draw_from_pool(&self.pool, req, id, &self.classes) {
            Ok((subnet, pool)) => {
                self.next_subnet += 1;
                self.pool = pool;
                self.emit(
                    now,
                    "pool_draw",
                    json!({ "subnet": id, "members": subnet.members, "issuer": req.issuer.to_string() }),
                );
                self.install(subnet);
                Ok(id)
            }
            Err(e) => {
                self.emit(now, "pool_draw_failed", json!({ "issuer": req.issuer.to_string(), "reason": e.to_string() }));
                Err(e)
            }
        }
    }

    /// `Forming` to `Operational`.
    pub fn activate(&mut self, id: SubnetId, now: f64) -> Result<(), ReconfigError> {
        let classes = &self.classes;
        let s = self.subnets.get_mut(&id).ok_or(ReconfigError::UnknownSubnet(id))?;
        if s.state != SubnetState::Forming {
            return Err(ReconfigError::InvariantViolation(format!("{id} is not forming")));
        }
        s.gateways = designate_gateways(&s.members, classes);
        s.pool_link = s.gateways.iter().next().copied();
        s.state = SubnetState::Operational;
        self.emit(now, "subnet_active", json!({ "subnet": id }));
        Ok(())
    }

    /// Pool-based formation. Requests that cannot be met now wait in FIFO
    /// order and are retried whenever UAVs return to the pool; a request is
    /// never served ahead of an older one.
    pub fn request_form(
        &mut self,
        mission: Mission,
        template: FormationTemplate,
        now: f64,
    ) -> Result<FormOutcome, ReconfigError> {
        if mission.requirements.is_empty() {
            return Err(ReconfigError::EmptyRequirement);
        }
        let ticket = self.next_ticket;
        self.next_ticket += 1;
        self.pending_forms.push_back(PendingForm { ticket, mission, template, issued_at: now });
        let formed = self.process_pending(now);
        Ok(match formed.into_iter().find(|(t, _)| *t == ticket) {
            Some((_, id)) => FormOutcome::Formed(id),
            None => {
                self.emit(now, "pool_form_queued", json!({ "ticket": ticket }));
                FormOutcome::Queued(ticket)
            }
        })
    }

    fn process_pending(&mut self, now: f64) -> Vec<(u64, SubnetId)> {
        let mut formed = Vec::new();
        while let Some(head) = self.pending_forms.front() {
            let id = SubnetId(self.next_subnet);
            match pool_based_form(&self.pool, &head.mission, head.template, id, &self.classes) {
                Ok((subnet, pool)) => {
                    let head = self.pending_forms.pop_front().unwrap();
                    self.next_subnet += 1;
                    self.pool = pool;
                    self.emit(
                        now,
                        "pool_form",
                        json!({
                            "subnet": id,
                            "ticket": head.ticket,
                            "mission": head.mission.name,
                            "members": subnet.members,
                            "gateways": subnet.gateways,
                            "pool_link": subnet.pool_link,
                            "issued_at": head.issued_at,
                        }),
                    );
                    self.install(subnet);
                    formed.push((head.ticket, id));
                }
                Err(_) => break,
            }
        }
        formed
    }

    /// Starts a plan-based merge: both subnets enter self-organization and
    /// stop taking tasks until [`complete_merge`](Self::complete_merge).
    pub fn begin_merge(
        &mut self,
        a: SubnetId,
        b: SubnetId,
        joint: Option<Mission>,
        now: f64,
    ) -> Result<MergeTicket, ReconfigError> {
        if a == b {
            return Err(ReconfigError::InvariantViolation(format!("{a} cannot merge with itself")));
        }
        let (sa, sb) = (self.operational(a)?, self.operational(b)?);
        if !merge_compatible(sa, sb, joint.as_ref(), &self.classes) {
            self.emit(now, "merge_rejected", json!({ "a": a, "b": b }));
            return Err(ReconfigError::MergeRejected);
        }
        for id in [a, b] {
            let s = self.subnets.get_mut(&id).unwrap();
            s.state = SubnetState::SelfOrganizing;
            s.self_organizing_since = Some(now);
        }
        let ticket = MergeTicket(self.next_ticket);
        self.next_ticket += 1;
        let until = now + self.params.self_org_duration;
        self.merges.insert(ticket, PendingMerge { a, b, joint, from: now, until });
        self.emit(now, "self_organize", json!({ "subnets": [a, b], "until": until }));
        Ok(ticket)
    }

    pub fn complete_merge(&mut self, ticket: MergeTicket, now: f64) -> Result<SubnetId, ReconfigError> {
        let pending = self.merges.get(&ticket).ok_or(ReconfigError::UnknownMerge)?;
        if now < pending.until {
            return Err(ReconfigError::MergeNotReady(pending.until));
        }
        let pending = self.merges.remove(&ticket).unwrap();
        let id = SubnetId(self.next_subnet);
        let out = plan_based_merge(
            &self.subnets[&pending.a],
            &self.subnets[&pending.b],
            pending.joint.as_ref(),
            id,
            &self.classes,
            pending.from,
            now - pending.from,
        )?;
        self.next_subnet += 1;
        self.subnets.remove(&pending.a);
        self.subnets.remove(&pending.b);
        self.emit(
            now,
            "merge",
            json!({
                "subnet": id,
                "sources": [pending.a, pending.b],
                "members": out.subnet.members,
                "formation": out.subnet.formation.kind,
                "self_organizing_from": out.self_organizing_from,
                "operational_at": now,
            }),
        );
        self.install(out.subnet);
        Ok(id)
    }

    /// Draws `requirements` from the pool and merges them into `target`.
    /// The drawn subnet carries no mission of its own, so the merge is
    /// accepted iff target plus draw covers the target's mission. Nothing
    /// changes unless it would be.
    pub fn reinforce(
        &mut self,
        target: SubnetId,
        requirements: Requirements,
        issuer: Issuer,
        now: f64,
    ) -> Result<MergeTicket, ReconfigError> {
        let t = self.operational(target)?;
        let have = Requirements::of_members(&t.members, &self.classes).plus(&requirements);
        if !have.covers(&t.requirements()) {
            return Err(ReconfigError::MergeRejected);
        }
        let req = ReconfigRequest {
            kind: ReconfigKind::SubnetDraw,
            issuer,
            requirements,
            target_subnet: Some(target),
            issued_at: now,
        };
        let drawn = self.draw(&req, now)?;
        self.activate(drawn, now)?;
        self.begin_merge(target, drawn, None, now)
    }

    /// Risk-triggered retreat of a single UAV to the pool. A subnet left
    /// empty is retired.
    pub fn retreat(&mut self, uav: UavId, now: f64) -> Result<(), ReconfigError> {
        let Some(Membership::Subnet(sid)) = self.membership(uav) else {
            return Err(ReconfigError::NotInSubnet(uav));
        };
        self.operational(sid)?;
        let class = self.class_of(uav).ok_or(ReconfigError::UnknownUav(uav))?;
        let classes = &self.classes;
        let s = self.subnets.get_mut(&sid).unwrap();
        s.members.remove(&uav);
        s.slots.retain(|&m| m != uav);
        s.gateways = designate_gateways(&s.members, classes);
        if s.pool_link == Some(uav) || s.pool_link.is_none() {
            s.pool_link = s.gateways.iter().next().copied();
        }
        let emptied = s.members.is_empty();
        self.pool.insert(uav, class);
        self.membership.insert(uav, Membership::Pool);
        self.emit(now, "retreat", json!({ "uav": uav, "subnet": sid }));
        if emptied {
            self.retire(sid, now);
        }
        self.process_pending(now);
        Ok(())
    }

    /// Replaces a subnet's formation and role assignment after an
    /// environment-driven adaptation.
    pub fn apply_assignment(
        &mut self,
        id: SubnetId,
        assignment: &Assignment,
        req: &ReconfigRequest,
        now: f64,
    ) -> Result<(), ReconfigError> {
        self.operational(id)?;
        let s = self.subnets.get_mut(&id).unwrap();
        let members: BTreeSet<UavId> = assignment.slots.iter().copied().collect();
        if members != s.members {
            return Err(ReconfigError::InvariantViolation(format!("assignment for {id} changes membership")));
        }
        let changed = s.formation != assignment.formation || s.slots != assignment.slots;
        s.formation = assignment.formation;
        s.slots = assignment.slots.clone();
        self.emit(
            now,
            "env_adapt",
            json!({
                "subnet": id,
                "issuer": req.issuer.to_string(),
                "formation": assignment.formation.kind,
                "slots": assignment.slots,
                "min_edge_rate": finite_or_null(assignment.min_edge_rate),
                "changed": changed,
            }),
        );
        Ok(())
    }

    /// Step 1 of the rejoin procedure: the control center's return command
    /// is received. Repeated commands while a rejoin is under way are no-ops.
    pub fn rejoin_command(&mut self, id: SubnetId, issuer: Issuer, now: f64) -> Result<RejoinAck, ReconfigError> {
        if issuer != Issuer::ControlCenter {
            return Err(ReconfigError::Unauthorized);
        }
        let s = self.subnets.get(&id).ok_or(ReconfigError::UnknownSubnet(id))?;
        if self.rejoins.contains_key(&id) || s.state == SubnetState::Rejoining {
            return Ok(RejoinAck::AlreadyInProgress);
        }
        self.operational(id)?;
        self.rejoins.insert(id, 1);
        self.emit(now, "rejoin_step_1", json!({ "subnet": id, "issuer": issuer.to_string() }));
        Ok(RejoinAck::Started)
    }

    /// Executes the next rejoin step and returns its number.
    pub fn advance_rejoin(&mut self, id: SubnetId, now: f64) -> Result<u8, ReconfigError> {
        let step = *self.rejoins.get(&id).ok_or(ReconfigError::NoRejoin(id))?;
        match step {
            1 => {
                let classes = &self.classes;
                let s = self.subnets.get_mut(&id).unwrap();
                s.state = SubnetState::Rejoining;
                s.gateways = designate_gateways(&s.members, classes);
                let gateways = s.gateways.clone();
                self.emit(now, "rejoin_step_2", json!({ "subnet": id, "gateways": gateways }));
            }
            2 => {
                let s = &self.subnets[&id];
                let topology = s.topology();
                let assignments: BTreeMap<UavId, PoolId> = s.members.iter().map(|&u| (u, PoolId(0))).collect();
                let payload = json!({
                    "subnet": id,
                    "gateways": s.gateways,
                    "topology": topology.edges().iter().collect::<Vec<_>>(),
                    "assignments": assignments,
                });
                self.emit(now, "rejoin_step_3", payload);
            }
            3 => {
                let s = self.subnets.get(&id).unwrap();
                let members: Vec<UavId> = s.members.iter().copied().collect();
                let gateways = s.gateways.clone();
                for &u in &members {
                    let class = self.classes[&u];
                    self.pool.insert_into(u, class, PoolId(0));
                    self.membership.insert(u, Membership::Pool);
                }
                self.subnets.remove(&id);
                self.rejoins.remove(&id);
                self.emit(now, "rejoin_step_4", json!({ "subnet": id, "gateways": gateways, "returned": members }));
                self.process_pending(now);
                return Ok(4);
            }
            _ => unreachable!("rejoin progress is 1..=3"),
        }
        let next = step + 1;
        self.rejoins.insert(id, next);
        Ok(next)
    }

    /// Command plus all remaining steps at one instant.
    pub fn rejoin_pool(&mut self, id: SubnetId, issuer: Issuer, now: f64) -> Result<(), ReconfigError> {
        if self.rejoin_command(id, issuer, now)? == RejoinAck::AlreadyInProgress {
            return Ok(());
        }
        while self.advance_rejoin(id, now)? < 4 {}
        Ok(())
    }

    /// Verifies the partition property and every structural invariant.
    pub fn check_partition(&self) -> Result<(), String> {
        let mut seen: BTreeMap<UavId, Membership> = BTreeMap::new();
        for s in self.subnets.values() {
            s.check_invariants()?;
            for &m in &s.members {
                if seen.insert(m, Membership::Subnet(s.id)).is_some() {
                    return Err(format!("{m} appears in two member sets"));
                }
            }
        }
        for &m in self.pool.members() {
            if seen.insert(m, Membership::Pool).is_some() {
                return Err(format!("{m} is in the pool and a subnet"));
            }
        }
        self.pool.check_invariants()?;
        for (&u, &m) in &self.membership {
            match seen.get(&u) {
                None => return Err(format!("{u} is in neither a subnet nor the pool")),
                Some(&actual) if actual != m => return Err(format!("{u} membership record is stale")),
                _ => {}
            }
        }
        if seen.len() != self.classes.len() {
            return Err("unknown uav in a member set".into());
        }
        Ok(())
    }
}

fn finite_or_null(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        Value::Null
    }
}
