//! Randomized checks of the per-module invariants.

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use swarmsim::cognition::{
    apply_risk_strategy, perceive_at, predict, CognitionParams, Experience, KnowledgeBase, PerceptionState,
    RiskAssessment, RiskSource, Situation, Strategy as Response, StrategyStore,
};
use swarmsim::control::{
    acs_adjust, assign_task_weights, hierarchical_step, CcdsController, ControlCenter, ControlParams, EdgeLoad,
    MessageIds, MessageKind, SubnetReport,
};
use swarmsim::model::{CapabilityClass, SubnetId, UavId};
use swarmsim::offload::bandit::{BanditParams, BanditPolicy};
use swarmsim::reconfig::{
    apply_formation, draw_from_pool, pool_based_form, ClassMap, FormationKind, FormationTemplate, Issuer, Mission,
    ReconfigKind, ReconfigRequest, RegistryParams, Requirements, ResourcePool, SubnetState, SwarmRegistry,
};
use swarmsim::{EnvironmentField, InterferenceZone, Position};

const CLASSES: [CapabilityClass; 4] =
    [CapabilityClass::Perception, CapabilityClass::Relay, CapabilityClass::Compute, CapabilityClass::Strike];

fn arb_classes(max: usize) -> impl Strategy<Value = ClassMap> {
    prop::collection::vec(0usize..4, 1..max)
        .prop_map(|v| v.into_iter().enumerate().map(|(i, c)| (UavId(i as u32), CLASSES[c])).collect())
}

fn arb_requirements() -> impl Strategy<Value = Requirements> {
    prop::collection::vec(0u32..4, 4).prop_map(|counts| {
        let mut r = Requirements::default();
        for (c, n) in CLASSES.iter().zip(counts) {
            r.set(*c, n);
        }
        r
    })
}

fn arb_template() -> impl Strategy<Value = FormationTemplate> {
    prop_oneof![
        Just(FormationTemplate::new(FormationKind::FlockRing)),
        Just(FormationTemplate::new(FormationKind::Grid)),
        (1u32..5).prop_map(FormationTemplate::pack),
    ]
}

fn situation(i: u8) -> Situation {
    [Situation::Normal, Situation::Alert, Situation::Critical][i as usize % 3]
}

proptest! {
    #[test]
    fn prediction_reproduces_a_line(
        d0 in 1.0..100.0f64,
        dd in 0.5..20.0f64,
        t0 in 0.0..100.0f64,
        dt in 0.1..10.0f64,
        n in 2usize..10,
    ) {
        // Radial flight through one interference zone: the sensed depth is
        // exactly linear in time.
        let r = d0 + dd * n as f64 + 1.0;
        let env = EnvironmentField {
            interference_zones: vec![InterferenceZone { center: Position::ground(0.0, 0.0), radius: r, added_noise: 1e-12 }],
            risk_zones: vec![],
        };
        let params = CognitionParams::default();
        let mut state = PerceptionState::new(32, params.region_count());
        for k in 0..n {
            let pos = Position::ground(d0 + dd * k as f64, 0.0);
            perceive_at(&mut state, &pos, &env, None, t0 + dt * k as f64, &params);
        }
        let mut kb = KnowledgeBase::new(8);
        let v = predict(&mut kb, &state).unwrap();
        let expected = 1.0 - (d0 + dd * n as f64) / r;
        prop_assert!((v - expected).abs() < 1e-9, "{v} vs {expected}");
        prop_assert!((kb.trend + dd / (r * dt)).abs() < 1e-9);
    }

    #[test]
    fn experience_log_keeps_the_newest(cap in 1usize..20, n in 0usize..60) {
        let mut kb = KnowledgeBase::new(cap);
        for i in 0..n {
            kb.record(Experience { situation: Situation::Normal, action: Response::Continue, task: None, outcome_score: i as f64 });
        }
        let kept: Vec<f64> = kb.experience().map(|e| e.outcome_score).collect();
        let expected: Vec<f64> = (n.saturating_sub(cap)..n).map(|i| i as f64).collect();
        prop_assert_eq!(kept, expected);
    }

    #[test]
    fn risk_response_is_the_stored_entry(entries in prop::array::uniform3(0usize..4), level in 0u8..3) {
        let store = StrategyStore::new(entries.map(|i| Response::ALL[i]));
        let risk = RiskAssessment { level, source: RiskSource::EnvZone, assessed_at: 0.0 };
        prop_assert_eq!(apply_risk_strategy(&risk, &store), store.get(level));
        prop_assert_eq!(apply_risk_strategy(&risk, &store), Response::ALL[entries[level as usize]]);
    }

    #[test]
    fn failed_draws_leave_the_pool_alone(classes in arb_classes(12), need in arb_requirements(), template in arb_template()) {
        let pool = ResourcePool::with_members(classes.iter().map(|(&u, &c)| (u, c)));
        let before = pool.clone();
        let req = ReconfigRequest {
            kind: ReconfigKind::SubnetDraw,
            issuer: Issuer::ControlCenter,
            requirements: need.clone(),
            target_subnet: None,
            issued_at: 0.0,
        };
        let mission = Mission { name: "m".into(), requirements: need.clone() };
        let satisfiable = !need.is_empty() && Requirements::of_members(pool.members(), &classes).covers(&need);
        match draw_from_pool(&pool, &req, SubnetId(0), &classes) {
            Ok((s, left)) => {
                prop_assert!(satisfiable);
                prop_assert!(Requirements::of_members(&s.members, &classes).covers(&need));
                prop_assert_eq!(left.len() + s.members.len(), pool.len());
                prop_assert!(s.members.iter().all(|m| !left.contains(*m)));
            }
            Err(_) => prop_assert!(!satisfiable),
        }
        match pool_based_form(&pool, &mission, template, SubnetId(1), &classes) {
            Ok((s, _)) => {
                prop_assert_eq!(s.state, SubnetState::Operational);
                prop_assert!(s.check_invariants().is_ok(), "{:?}", s.check_invariants());
            }
            Err(_) => prop_assert!(!satisfiable),
        }
        prop_assert_eq!(&pool, &before);

        let mut reg = SwarmRegistry::new(classes.clone(), RegistryParams::default());
        if reg.draw(&req, 0.0).is_err() {
            prop_assert_eq!(reg.pool(), &before);
            prop_assert_eq!(reg.subnets().count(), 0);
        }
        prop_assert!(reg.check_partition().is_ok());
    }

    #[test]
    fn merges_pass_through_self_organization(
        classes in arb_classes(16),
        split in 1usize..8,
        duration in 0.1..10.0f64,
        start in 0.0..50.0f64,
    ) {
        let n = classes.len();
        prop_assume!(n >= 2);
        let split = split.min(n - 1);
        let half = |range: std::ops::Range<usize>| Requirements::of_members(classes.keys().skip(range.start).take(range.len()), &classes);
        let mut reg = SwarmRegistry::new(classes.clone(), RegistryParams { self_org_duration: duration });
        let form = |reg: &mut SwarmRegistry, need: Requirements, name: &str| {
            reg.request_form(Mission { name: name.into(), requirements: need }, FormationTemplate::default(), start)
        };
        let a = form(&mut reg, half(0..split), "a").unwrap();
        let b = form(&mut reg, half(split..n), "b").unwrap();
        let (swarmsim::reconfig::FormOutcome::Formed(a), swarmsim::reconfig::FormOutcome::Formed(b)) = (a, b) else {
            return Err(TestCaseError::fail("pool could not form both halves"));
        };
        let union: BTreeSet<UavId> = reg.subnet(a).unwrap().members.union(&reg.subnet(b).unwrap().members).copied().collect();
        prop_assert!(reg.subnet(a).unwrap().members.is_disjoint(&reg.subnet(b).unwrap().members));
        let ticket = reg.begin_merge(a, b, None, start).unwrap();
        for s in [a, b] {
            prop_assert_eq!(reg.subnet(s).unwrap().state, SubnetState::SelfOrganizing);
            prop_assert!(!reg.subnet(s).unwrap().accepts_tasks());
        }
        prop_assert!(reg.complete_merge(ticket, start + duration / 2.0).is_err());
        prop_assert!(reg.check_partition().is_ok());
        let merged = reg.complete_merge(ticket, start + duration).unwrap();
        let s = reg.subnet(merged).unwrap();
        prop_assert_eq!(&s.members, &union);
        prop_assert_eq!(s.state, SubnetState::Operational);
        prop_assert!(reg.subnet(a).is_none() && reg.subnet(b).is_none());
        prop_assert!(reg.check_partition().is_ok());
    }

    #[test]
    fn formation_is_a_function_of_its_inputs(ids in prop::collection::btree_set(0u32..500, 0..40), template in arb_template()) {
        let members: BTreeSet<UavId> = ids.into_iter().map(UavId).collect();
        let t = apply_formation(&members, &template);
        prop_assert_eq!(&t, &apply_formation(&members, &template));
        prop_assert_eq!(t.nodes(), &members);
        prop_assert!(t.is_connected());
    }

    #[test]
    fn bandwidth_shares_are_a_distribution(
        n in 2usize..12,
        loads in prop::collection::vec((0.0..1e6f64, 0.0..10.0f64, 0.0..3.0f64), 40),
        bump in 1.0..1e6f64,
    ) {
        let members: BTreeSet<UavId> = (0..n as u32).map(UavId).collect();
        let topo = apply_formation(&members, &FormationTemplate::new(FormationKind::FlockRing));
        let mut table: BTreeMap<(UavId, UavId), EdgeLoad> = topo
            .edges()
            .iter()
            .zip(&loads)
            .map(|(&e, &(pending_volume, congestion, priority))| (e, EdgeLoad { pending_volume, congestion, priority }))
            .collect();
        let shares = acs_adjust(&topo, &table);
        for (node, per_edge) in &shares {
            prop_assert!(per_edge.values().all(|s| *s >= 0.0));
            let sum: f64 = per_edge.values().sum();
            prop_assert!((sum - 1.0).abs() < 1e-9, "node {node}: {sum}");
        }
        // More pending volume on one edge never shrinks that edge's share.
        let edge = *topo.edges().iter().next().unwrap();
        let entry = table.get_mut(&edge).unwrap();
        prop_assume!(entry.priority > 0.0);
        entry.pending_volume += bump;
        let after = acs_adjust(&topo, &table);
        for node in [edge.0, edge.1] {
            prop_assert!(after[&node][&edge] + 1e-12 >= shares[&node][&edge]);
        }
    }

    #[test]
    fn critical_reports_get_return_commands(
        situations in prop::collection::vec(0u8..3, 1..10),
        now in 1.0..100.0f64,
    ) {
        let classes: ClassMap = (0..situations.len() as u32).map(|i| (UavId(i), CapabilityClass::Relay)).collect();
        let mut reg = SwarmRegistry::new(classes, RegistryParams::default());
        let mut controllers = Vec::new();
        for i in 0..situations.len() {
            let need = Requirements::single(CapabilityClass::Relay, 1);
            let swarmsim::reconfig::FormOutcome::Formed(id) =
                reg.request_form(Mission { name: format!("m{i}"), requirements: need }, FormationTemplate::default(), 0.0).unwrap()
            else {
                return Err(TestCaseError::fail("form queued"));
            };
            controllers.push(CcdsController::for_subnet(id));
        }
        let mut center = ControlCenter::new();
        let ids_in_order: Vec<SubnetId> = reg.subnets().map(|s| s.id).collect();
        for (sid, s) in ids_in_order.iter().zip(&situations) {
            center.observe(SubnetReport {
                subnet: *sid,
                situation: situation(*s),
                members: 1,
                queued_tasks: 0,
                max_risk: 0,
                report_time: now,
            });
        }
        let out = hierarchical_step(&mut center, &controllers, reg.subnets(), now, &ControlParams::default(), &mut MessageIds::default());
        prop_assert!(out.deferred.is_empty());
        prop_assert_eq!(out.messages.len(), situations.len());
        let returns = out.messages.iter().filter(|m| m.kind == MessageKind::ReturnCommand).count();
        prop_assert_eq!(returns, situations.iter().filter(|s| situation(**s) == Situation::Critical).count());
    }

    #[test]
    fn role_weights_are_normalized(classes in arb_classes(30), extra in prop::collection::btree_set(100u32..200, 0..5)) {
        let mut members: BTreeSet<UavId> = classes.keys().copied().collect();
        members.extend(extra.into_iter().map(UavId));
        let w = assign_task_weights(&members, &classes);
        prop_assert!(w.is_normalized());
        prop_assert!(members.iter().all(|u| w.of(*u).execution > 0.0));
    }

    #[test]
    fn converged_greedy_bandit_picks_the_fastest_arm(
        latencies in prop::collection::vec(0.01..10.0f64, 1..8),
        rounds in 200usize..400,
        seed in any::<u64>(),
    ) {
        let arms: Vec<UavId> = (0..latencies.len() as u32).map(UavId).collect();
        let mut b = BanditPolicy::new(BanditParams { epsilon: 0.0, ..BanditParams::default() });
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..rounds {
            // Every arm is observed on every round, so each estimate
            // converges to its arm's fixed latency.
            for (a, l) in arms.iter().zip(&latencies) {
                b.update(*a, *l);
            }
        }
        let best = latencies
            .iter()
            .enumerate()
            .min_by(|x, y| x.1.partial_cmp(y.1).unwrap().then(x.0.cmp(&y.0)))
            .map(|(i, _)| UavId(i as u32));
        prop_assert_eq!(b.select(&arms, &mut rng), best);
    }
}
