//! Per-UAV cognition: attention perception, learning and inference, and
//! risk control, joined by the perception-action cycle (perceive, infer,
//! act) and the reverse shunt cycle (execution feedback re-enters
//! perception).

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{CapabilityClass, RiskLevel, SubnetId, TaskId, UavId, UavNode, MAX_RISK_LEVEL};
use crate::reconfig::{Issuer, ReconfigKind, ReconfigRequest, Requirements};
use crate::scalar::{least_squares, normalize};
use crate::{EnvironmentField, Position};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CognitionError {
    #[error("no perception data")]
    NoPerceptionData,
    #[error("insufficient history")]
    InsufficientHistory,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CognitionParams {
    pub area_side: f64,
    /// Attention regions per side of the square area.
    pub region_cells: u32,
    /// Multiplicative attention boost on demand or failure.
    pub attention_boost: f64,
    /// Sample ring-buffer capacity.
    pub history: usize,
    pub experience_capacity: usize,
    pub alert_threshold: f64,
    pub critical_threshold: f64,
    /// bits/s below which a link counts as degraded.
    pub rate_floor: f64,
}

impl Default for CognitionParams {
    fn default() -> Self {
        Self {
            area_side: 1000.0,
            region_cells: 10,
            attention_boost: 2.0,
            history: 32,
            experience_capacity: 64,
            alert_threshold: 0.5,
            critical_threshold: 1.5,
            rate_floor: 1e5,
        }
    }
}

impl CognitionParams {
    pub fn region_count(&self) -> usize {
        (self.region_cells as usize).pow(2).max(1)
    }

    /// Row-major cell index of `pos` on the attention grid.
    pub fn region_of(&self, pos: &Position) -> RegionId {
        let cells = self.region_cells.max(1);
        let cell = |v: f64| {
            let c = (v / self.area_side * cells as f64).floor();
            (c.max(0.0) as u32).min(cells - 1)
        };
        RegionId(cell(pos.y) * cells + cell(pos.x))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RegionId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub time: f64,
    pub region: RegionId,
    pub sensed_value: f64,
    pub semantic_relevance: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PerceptionState {
    samples: VecDeque<Sample>,
    capacity: usize,
    attention: Vec<f64>,
    pub last_feedback_time: f64,
}

impl PerceptionState {
    pub fn new(capacity: usize, regions: usize) -> Self {
        let regions = regions.max(1);
        Self {
            samples: VecDeque::with_capacity(capacity),
            capacity: capacity.max(1),
            attention: vec![1.0 / regions as f64; regions],
            last_feedback_time: 0.0,
        }
    }

    pub fn samples(&self) -> impl ExactSizeIterator<Item = &Sample> + '_ {
        self.samples.iter()
    }

    pub fn latest(&self) -> Option<&Sample> {
        self.samples.back()
    }

    pub fn attention(&self) -> &[f64] {
        &self.attention
    }

    pub fn weight(&self, region: RegionId) -> f64 {
        self.attention.get(region.0 as usize).copied().unwrap_or(0.0)
    }

    /// Multiplies one region's attention by `factor` and renormalizes.
    pub fn boost(&mut self, region: RegionId, factor: f64) {
        if let Some(w) = self.attention.get_mut(region.0 as usize) {
            *w *= factor;
            normalize(&mut self.attention);
        }
    }

    fn push(&mut self, sample: Sample) {
        if self.samples.len() == self.capacity {
            self.samples.pop_front();
        }
        self.samples.push_back(sample);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Situation {
    Normal,
    Alert,
    Critical,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Continue,
    SwitchTask,
    RetreatToPool,
    AlertSwarm,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [Strategy::Continue, Strategy::SwitchTask, Strategy::RetreatToPool, Strategy::AlertSwarm];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Continue => "continue",
            Strategy::SwitchTask => "switch_task",
            Strategy::RetreatToPool => "retreat_to_pool",
            Strategy::AlertSwarm => "alert_swarm",
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Strategy::ALL.into_iter().find(|x| x.as_str() == s).ok_or_else(|| format!("unknown strategy `{s}`"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Experience {
    pub situation: Situation,
    pub action: Strategy,
    pub task: Option<TaskId>,
    pub outcome_score: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KnowledgeBase {
    pub state_estimate: Situation,
    /// Fitted slope of the sensed value, per second.
    pub trend: f64,
    experience: VecDeque<Experience>,
    capacity: usize,
}

impl KnowledgeBase {
    pub fn new(capacity: usize) -> Self {
        Self {
            state_estimate: Situation::Normal,
            trend: 0.0,
            experience: VecDeque::with_capacity(capacity),
            capacity: capacity.max(1),
        }
    }

    pub fn experience(&self) -> impl ExactSizeIterator<Item = &Experience> + '_ {
        self.experience.iter()
    }

    /// Appends, evicting the oldest entry when full.
    pub fn record(&mut self, e: Experience) {
        if self.experience.len() == self.capacity {
            self.experience.pop_front();
        }
        self.experience.push_back(e);
    }

    pub fn mean_score(&self) -> Option<f64> {
        if self.experience.is_empty() {
            return None;
        }
        Some(self.experience.iter().map(|e| e.outcome_score).sum::<f64>() / self.experience.len() as f64)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RiskSource {
    EnvZone,
    LinkDegradation,
    PeerAlert,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiskAssessment {
    pub level: RiskLevel,
    pub source: RiskSource,
    pub assessed_at: f64,
}

impl Default for RiskAssessment {
    fn default() -> Self {
        Self { level: 0, source: RiskSource::EnvZone, assessed_at: 0.0 }
    }
}

/// Predefined response per risk level; total by construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrategyStore {
    entries: [Strategy; MAX_RISK_LEVEL as usize + 1],
}

impl Default for StrategyStore {
    fn default() -> Self {
        Self { entries: [Strategy::Continue, Strategy::SwitchTask, Strategy::RetreatToPool] }
    }
}

impl StrategyStore {
    pub fn entries(&self) -> &[Strategy; MAX_RISK_LEVEL as usize + 1] {
        &self.entries
    }

    pub fn new(entries: [Strategy; MAX_RISK_LEVEL as usize + 1]) -> Self {
        Self { entries }
    }

    pub fn get(&self, level: RiskLevel) -> Strategy {
        self.entries[level.min(MAX_RISK_LEVEL) as usize]
    }

    pub fn set(&mut self, level: RiskLevel, strategy: Strategy) {
        self.entries[level.min(MAX_RISK_LEVEL) as usize] = strategy;
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CognitionState {
    pub perception: PerceptionState,
    pub knowledge: KnowledgeBase,
    pub risk: RiskAssessment,
    pub strategy_store: StrategyStore,
}

impl CognitionState {
    pub fn new(params: &CognitionParams) -> Self {
        Self {
            perception: PerceptionState::new(params.history, params.region_count()),
            knowledge: KnowledgeBase::new(params.experience_capacity),
            risk: RiskAssessment::default(),
            strategy_store: StrategyStore::default(),
        }
    }
}

/// Takes one environment sample at `pos`. A `demand` region has its
/// attention boosted first, so the sample's relevance reflects the demand.
pub fn perceive_at(
    state: &mut PerceptionState,
    pos: &Position,
    env: &EnvironmentField,
    demand: Option<RegionId>,
    now: f64,
    params: &CognitionParams,
) -> Sample {
    if let Some(region) = demand {
        state.boost(region, params.attention_boost);
    }
    let region = params.region_of(pos);
    let time = state.latest().map_or(now, |s| s.time.max(now));
    let sample = Sample {
        time,
        region,
        sensed_value: env.sensed_value_at(pos),
        semantic_relevance: state.weight(region),
    };
    state.push(sample);
    sample
}

pub fn perceive<'a>(
    uav: &'a mut UavNode,
    env: &EnvironmentField,
    demand: Option<RegionId>,
    now: f64,
    params: &CognitionParams,
) -> &'a PerceptionState {
    perceive_at(&mut uav.cognition.perception, &uav.pos, env, demand, now, params);
    &uav.cognition.perception
}

/// Relevance-weighted mean of the latest sample of each perception state,
/// thresholded into a situation.
pub fn infer_situation<'a, I>(perceptions: I, params: &CognitionParams) -> Result<Situation, CognitionError>
where
    I: IntoIterator<Item = &'a PerceptionState>,
{
    let latest: Vec<Sample> = perceptions.into_iter().filter_map(|p| p.latest().copied()).collect();
    if latest.is_empty() {
        return Err(CognitionError::NoPerceptionData);
    }
    let total_relevance: f64 = latest.iter().map(|s| s.semantic_relevance).sum();
    let mean = if total_relevance > 0.0 {
        latest.iter().map(|s| s.semantic_relevance * s.sensed_value).sum::<f64>() / total_relevance
    } else {
        latest.iter().map(|s| s.sensed_value).sum::<f64>() / latest.len() as f64
    };
    Ok(classify(mean, params))
}

pub fn classify(value: f64, params: &CognitionParams) -> Situation {
    if value >= params.critical_threshold {
        Situation::Critical
    } else if value >= params.alert_threshold {
        Situation::Alert
    } else {
        Situation::Normal
    }
}

/// One-step least-squares extrapolation of the sensed value. Updates
/// `kb.trend` with the fitted slope.
pub fn predict(kb: &mut KnowledgeBase, perception: &PerceptionState) -> Result<f64, CognitionError> {
    let n = perception.samples.len();
    if n < 2 {
        return Err(CognitionError::InsufficientHistory);
    }
    let ts: Vec<f64> = perception.samples.iter().map(|s| s.time).collect();
    let vs: Vec<f64> = perception.samples.iter().map(|s| s.sensed_value).collect();
    let last_t = ts[n - 1];
    let step = (last_t - ts[0]) / (n - 1) as f64;
    match least_squares(&ts, &vs) {
        Some((intercept, slope)) => {
            kb.trend = slope;
            Ok(intercept + slope * (last_t + step))
        }
        // All samples share one timestamp: no slope is identifiable.
        None => {
            kb.trend = 0.0;
            Ok(vs.iter().sum::<f64>() / n as f64)
        }
    }
}

/// Risk from the zone the UAV sits in and from its link quality. Ties go to
/// the environment.
pub fn assess_risk(
    pos: &Position,
    env: &EnvironmentField,
    link_quality: f64,
    params: &CognitionParams,
    now: f64,
) -> RiskAssessment {
    let zone = env.risk_level_at(pos);
    let link = u8::from(link_quality < params.rate_floor);
    if link > zone {
        RiskAssessment { level: link, source: RiskSource::LinkDegradation, assessed_at: now }
    } else {
        RiskAssessment { level: zone, source: RiskSource::EnvZone, assessed_at: now }
    }
}

/// Raises a level-0 assessment to 1 when a neighbor reports a severe risk.
pub fn escalate_for_peer_alert(risk: RiskAssessment, peer_level: RiskLevel) -> RiskAssessment {
    if risk.level == 0 && peer_level >= MAX_RISK_LEVEL {
        RiskAssessment { level: 1, source: RiskSource::PeerAlert, ..risk }
    } else {
        risk
    }
}

pub fn apply_risk_strategy(risk: &RiskAssessment, store: &StrategyStore) -> Strategy {
    store.get(risk.level)
}

/// What a UAV does about its current risk.
#[derive(Clone, Debug, PartialEq)]
pub struct RiskResponse {
    pub strategy: Strategy,
    pub alert_swarm: bool,
    pub request: Option<ReconfigRequest>,
}

/// Looks up the strategy and builds the reconfiguration request it implies:
/// a task switch asks the subnet to draw a replacement of the UAV's class
/// from the pool, a retreat asks to return the UAV itself to the pool.
pub fn risk_response(
    uav: UavId,
    class: CapabilityClass,
    subnet: Option<SubnetId>,
    risk: &RiskAssessment,
    store: &StrategyStore,
) -> RiskResponse {
    let strategy = apply_risk_strategy(risk, store);
    let request = match strategy {
        Strategy::SwitchTask => subnet.map(|s| ReconfigRequest {
            kind: ReconfigKind::SubnetDraw,
            issuer: Issuer::Uav(uav),
            requirements: Requirements::single(class, 1),
            target_subnet: Some(s),
            issued_at: risk.assessed_at,
        }),
        Strategy::RetreatToPool => subnet.map(|s| ReconfigRequest {
            kind: ReconfigKind::Rejoin,
            issuer: Issuer::Uav(uav),
            requirements: Requirements::default(),
            target_subnet: Some(s),
            issued_at: risk.assessed_at,
        }),
        Strategy::Continue | Strategy::AlertSwarm => None,
    };
    RiskResponse { strategy, alert_swarm: risk.level >= 1 || strategy == Strategy::AlertSwarm, request }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExecutionResult {
    pub task: TaskId,
    pub success: bool,
    pub completion_time: f64,
    /// Seconds from task arrival to completion.
    pub latency: f64,
    pub origin_region: RegionId,
}

/// Shunt cycle: scores the execution, stores the experience, and on failure
/// steers attention back to where the task came from.
pub fn shunt_feedback(result: &ExecutionResult, state: &mut CognitionState, params: &CognitionParams) {
    let score = if result.success { 1.0 / (1.0 + result.latency.max(0.0)) } else { 0.0 };
    let action = apply_risk_strategy(&state.risk, &state.strategy_store);
    state.knowledge.record(Experience {
        situation: state.knowledge.state_estimate,
        action,
        task: Some(result.task),
        outcome_score: score,
    });
    state.perception.last_feedback_time = result.completion_time;
    if !result.success {
        state.perception.boost(result.origin_region, params.attention_boost);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use super::Strategy;
    use crate::model::{RiskZone, UavNode};
    use proptest::prelude::*;

    fn small_grid() -> CognitionParams {
        CognitionParams { region_cells: 2, ..CognitionParams::default() }
    }

    fn uav_at(x: f64, y: f64) -> UavNode {
        UavNode::new(UavId(0), Position::new(x, y, 100.0), 3e9, CapabilityClass::Compute, &small_grid())
    }

    #[test]
    fn perceive_empty_environment() {
        let params = small_grid();
        let mut uav = uav_at(100.0, 100.0);
        let before = uav.cognition.perception.attention().to_vec();
        let p = perceive(&mut uav, &EnvironmentField::default(), None, 0.0, &params);
        assert_eq!(p.latest().unwrap().sensed_value, 0.0);
        assert_eq!(p.attention(), &before[..]);
    }

    #[test]
    fn perceive_demand_boost() {
        let params = small_grid();
        let mut uav = uav_at(100.0, 100.0);
        let p = perceive(&mut uav, &EnvironmentField::default(), Some(RegionId(3)), 0.0, &params);
        let w = p.attention();
        assert!((w[3] - 0.4).abs() < 1e-12);
        for &other in &w[..3] {
            assert!((other - 0.2).abs() < 1e-12);
        }
    }

    #[test]
    fn perceive_inside_risk_zone() {
        let params = small_grid();
        let env = EnvironmentField {
            interference_zones: vec![],
            risk_zones: vec![RiskZone { center: Position::ground(100.0, 100.0), radius: 50.0, level: 2 }],
        };
        let mut uav = uav_at(100.0, 100.0);
        let p = perceive(&mut uav, &env, None, 0.0, &params);
        assert!(p.latest().unwrap().sensed_value >= 2.0);
    }

    fn state_with(values: &[(f64, f64)]) -> PerceptionState {
        let mut s = PerceptionState::new(32, 1);
        for (i, &(v, r)) in values.iter().enumerate() {
            s.push(Sample { time: i as f64, region: RegionId(0), sensed_value: v, semantic_relevance: r });
        }
        s
    }

    #[test]
    fn infer_examples() {
        let p = small_grid();
        let zero = state_with(&[(0.0, 1.0)]);
        assert_eq!(infer_situation([&zero], &p), Ok(Situation::Normal));
        let hot = state_with(&[(2.0, 1.0)]);
        assert_eq!(infer_situation([&hot], &p), Ok(Situation::Critical));
        let a = state_with(&[(0.0, 0.5)]);
        let b = state_with(&[(2.0, 0.5)]);
        // (0.5 * 0 + 0.5 * 2) / 1 = 1.0
        assert_eq!(infer_situation([&a, &b], &p), Ok(Situation::Alert));
        assert_eq!(infer_situation(std::iter::empty(), &p), Err(CognitionError::NoPerceptionData));
    }

    #[test]
    fn predict_examples() {
        let mut kb = KnowledgeBase::new(8);
        assert_eq!(predict(&mut kb, &state_with(&[(1.0, 1.0), (1.0, 1.0), (1.0, 1.0)])), Ok(1.0));
        assert_eq!(kb.trend, 0.0);
        let v = predict(&mut kb, &state_with(&[(0.0, 1.0), (1.0, 1.0), (2.0, 1.0)])).unwrap();
        assert!((v - 3.0).abs() < 1e-12);
        // Closed-form OLS on (0,0), (1,0.9), (2,2.1): slope 1.05, intercept -0.05.
        let v = predict(&mut kb, &state_with(&[(0.0, 1.0), (0.9, 1.0), (2.1, 1.0)])).unwrap();
        assert!((kb.trend - 1.05).abs() < 1e-12);
        assert!((v - 3.1).abs() < 1e-12);
        assert_eq!(predict(&mut kb, &state_with(&[(0.0, 1.0)])), Err(CognitionError::InsufficientHistory));
    }

    #[test]
    fn risk_examples() {
        let p = CognitionParams::default();
        let pos = Position::new(500.0, 500.0, 100.0);
        let none = assess_risk(&pos, &EnvironmentField::default(), 1e7, &p, 0.0);
        assert_eq!(none.level, 0);
        let env = EnvironmentField {
            interference_zones: vec![],
            risk_zones: vec![RiskZone { center: Position::ground(500.0, 500.0), radius: 10.0, level: 2 }],
        };
        let zone = assess_risk(&pos, &env, 1.0, &p, 0.0);
        assert_eq!((zone.level, zone.source), (2, RiskSource::EnvZone));
        let link = assess_risk(&pos, &EnvironmentField::default(), 10.0, &p, 0.0);
        assert_eq!((link.level, link.source), (1, RiskSource::LinkDegradation));

        let lvl1 = EnvironmentField {
            interference_zones: vec![],
            risk_zones: vec![RiskZone { center: Position::ground(500.0, 500.0), radius: 10.0, level: 1 }],
        };
        let tie = assess_risk(&pos, &lvl1, 10.0, &p, 0.0);
        assert_eq!((tie.level, tie.source), (1, RiskSource::EnvZone));

        let peer = escalate_for_peer_alert(none, 2);
        assert_eq!((peer.level, peer.source), (1, RiskSource::PeerAlert));
        assert_eq!(escalate_for_peer_alert(none, 1), none);
    }

    #[test]
    fn strategy_table() {
        let store = StrategyStore::default();
        let at = |level| RiskAssessment { level, source: RiskSource::EnvZone, assessed_at: 0.0 };
        assert_eq!(apply_risk_strategy(&at(0), &store), Strategy::Continue);
        assert_eq!(apply_risk_strategy(&at(1), &store), Strategy::SwitchTask);
        assert_eq!(apply_risk_strategy(&at(2), &store), Strategy::RetreatToPool);

        let r = risk_response(UavId(4), CapabilityClass::Relay, Some(SubnetId(1)), &at(2), &store);
        assert!(r.alert_swarm);
        assert_eq!(r.request.unwrap().kind, ReconfigKind::Rejoin);
        let r = risk_response(UavId(4), CapabilityClass::Relay, Some(SubnetId(1)), &at(1), &store);
        let req = r.request.unwrap();
        assert_eq!(req.kind, ReconfigKind::SubnetDraw);
        assert_eq!(req.requirements.get(CapabilityClass::Relay), 1);
        let r = risk_response(UavId(4), CapabilityClass::Relay, Some(SubnetId(1)), &at(0), &store);
        assert_eq!(r, RiskResponse { strategy: Strategy::Continue, alert_swarm: false, request: None });
    }

    #[test]
    fn shunt_scores() {
        let params = small_grid();
        let mut state = CognitionState::new(&params);
        let ok = |latency| ExecutionResult {
            task: TaskId(1),
            success: true,
            completion_time: 3.0,
            latency,
            origin_region: RegionId(2),
        };
        shunt_feedback(&ok(0.0), &mut state, &params);
        shunt_feedback(&ok(1.0), &mut state, &params);
        let scores: Vec<f64> = state.knowledge.experience().map(|e| e.outcome_score).collect();
        assert_eq!(scores, vec![1.0, 0.5]);
        assert_eq!(state.perception.last_feedback_time, 3.0);

        let before = state.perception.weight(RegionId(2));
        shunt_feedback(&ExecutionResult { success: false, ..ok(4.0) }, &mut state, &params);
        assert_eq!(state.knowledge.experience().last().unwrap().outcome_score, 0.0);
        assert!(state.perception.weight(RegionId(2)) > before);
    }

    #[test]
    fn region_grid_clamps_edges() {
        let p = CognitionParams::default();
        assert_eq!(p.region_of(&Position::new(0.0, 0.0, 0.0)), RegionId(0));
        assert_eq!(p.region_of(&Position::new(1000.0, 1000.0, 0.0)), RegionId(99));
        assert_eq!(p.region_of(&Position::new(150.0, 250.0, 0.0)), RegionId(21));
    }

    proptest! {
        #[test]
        fn attention_stays_normalized(demands in proptest::collection::vec(proptest::option::of(0u32..100), 1..60)) {
            let params = CognitionParams::default();
            let mut s = PerceptionState::new(params.history, params.region_count());
            for (i, d) in demands.iter().enumerate() {
                perceive_at(&mut s, &Position::new(10.0 * i as f64, 5.0, 100.0), &EnvironmentField::default(),
                    d.map(RegionId), i as f64, &params);
                let sum: f64 = s.attention().iter().sum();
                prop_assert!((sum - 1.0).abs() < 1e-9);
                prop_assert!(s.attention().iter().all(|&w| w >= 0.0));
                prop_assert!(s.samples().len() <= params.history);
            }
            let times: Vec<f64> = s.samples().map(|x| x.time).collect();
            prop_assert!(times.windows(2).all(|w| w[0] <= w[1]));
        }

        #[test]
        fn inference_monotone(values in proptest::collection::vec((0.0..3.0f64, 0.01..1.0f64), 1..10), bump in 0.0..2.0f64) {
            let params = CognitionParams::default();
            let base: Vec<PerceptionState> = values.iter().map(|&(v, r)| state_with(&[(v, r)])).collect();
            let raised: Vec<PerceptionState> = values.iter().map(|&(v, r)| state_with(&[(v + bump, r)])).collect();
            let a = infer_situation(base.iter(), &params).unwrap();
            let b = infer_situation(raised.iter(), &params).unwrap();
            prop_assert!(b >= a);
        }

        #[test]
        fn predict_reproduces_lines(a in -10.0..10.0f64, b in -5.0..5.0f64, n in 2usize..32) {
            let mut s = PerceptionState::new(32, 1);
            for i in 0..n {
                let t = i as f64 * 0.5;
                s.push(Sample { time: t, region: RegionId(0), sensed_value: a + b * t, semantic_relevance: 1.0 });
            }
            let mut kb = KnowledgeBase::new(4);
            let got = predict(&mut kb, &s).unwrap();
            let want = a + b * (n as f64 * 0.5);
            prop_assert!((got - want).abs() <= 1e-9 * want.abs().max(1.0));
        }

        #[test]
        fn experience_is_fifo(cap in 1usize..16, n in 0usize..64) {
            let mut kb = KnowledgeBase::new(cap);
            for i in 0..n {
                kb.record(Experience { situation: Situation::Normal, action: Strategy::Continue, task: Some(TaskId(i as u64)), outcome_score: 0.0 });
            }
            prop_assert!(kb.experience().len() <= cap);
            let ids: Vec<u64> = kb.experience().map(|e| e.task.unwrap().0).collect();
            let expect: Vec<u64> = (n.saturating_sub(cap)..n).map(|i| i as u64).collect();
            prop_assert_eq!(ids, expect);
        }
    }
}
