use dsaht::capacity::{
    evaluate_in, full_history_in, h0, h1, h3, joint_kernel_step, JointState, LambdaWeights, DEFAULT_HISTORY_CAP,
    DEFAULT_STATE_CAP,
};
use dsaht::channels;
use dsaht::dp::{backward_dp, build_reachable_tree, PolicyContext, PolicyRegistry, PolicyTree, DEFAULT_NODE_CAP};
use dsaht::model::all_joint_actions;
use dsaht::objective::{
    check_telescoping, cost_conditional_entropy, cost_ejs, cost_joint_entropy, CostRegistry, ErrorProbability, SimplexGrid,
};
use dsaht::{
    belief_update, ml_decode, observation_prob, private_belief_update, terminal_cost, Channel, EncoderFunction,
    JointAction, JointBelief, LogBase, PrivateBelief, ProblemSpec, User,
};
use proptest::prelude::*;

fn belief_strategy() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, 4).prop_filter("positive mass", |w| w.iter().sum::<f64>() > 1e-3)
}

fn normalized(w: &[f64]) -> Vec<f64> {
    let s: f64 = w.iter().sum();
    w.iter().map(|v| v / s).collect()
}

fn belief(w: &[f64]) -> JointBelief {
    JointBelief::from_probs(2, 2, normalized(w)).unwrap()
}

fn random_channel(seed: u64) -> Channel {
    channels::random(&ProblemSpec::binary(), seed).unwrap()
}

fn hashed_policy(spec: &ProblemSpec, ch: &Channel, n: usize, seed: u64) -> PolicyTree {
    let ctx = PolicyContext { spec, channel: ch, horizon: n, cost: &ErrorProbability, node_cap: 1_000_000, action_set: None };
    PolicyRegistry::with_builtins().build(&format!("hashed({seed})"), &ctx).unwrap()
}

fn root_value(spec: &ProblemSpec, ch: &Channel, n: usize) -> f64 {
    let tree = build_reachable_tree(spec, ch, n, None, DEFAULT_NODE_CAP).unwrap();
    backward_dp(&tree, ch, &ErrorProbability).unwrap().root_value
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn belief_update_stays_normalized(w in belief_strategy(), seed in 0u64..1000) {
        let ch = random_channel(seed);
        let pi = belief(&w);
        for e in all_joint_actions(&ProblemSpec::binary()) {
            for z in 0..2 {
                if observation_prob(&pi, &e, z, &ch) > 0.0 {
                    let post = belief_update(&pi, &e, z, &ch).unwrap();
                    prop_assert!((post.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
                    prop_assert!(post.probs().iter().all(|&v| v >= 0.0));
                }
            }
        }
    }

    #[test]
    fn ml_decode_ignores_scale(w in belief_strategy(), c in 0.01f64..100.0) {
        let scaled: Vec<f64> = w.iter().map(|v| v * c).collect();
        prop_assert_eq!(ml_decode(&belief(&w)), ml_decode(&belief(&scaled)));
    }

    #[test]
    fn private_updates_compose(
        w_true in 0usize..4,
        maps in prop::collection::vec(prop::collection::vec(0usize..2, 4), 1..5),
    ) {
        // direct conditioning of the uniform prior on every observed input
        let mut pihat = PrivateBelief::uniform(User::One, 4);
        for m in &maps {
            let e = EncoderFunction::new(User::One, m.clone(), 2).unwrap();
            pihat = private_belief_update(&pihat, &e, e.apply(w_true)).unwrap();
        }
        let consistent: Vec<bool> = (0..4).map(|w| maps.iter().all(|m| m[w] == m[w_true])).collect();
        let count = consistent.iter().filter(|&&c| c).count() as f64;
        for (w, &c) in consistent.iter().enumerate() {
            let expected = if c { 1.0 / count } else { 0.0 };
            prop_assert_eq!(pihat.probs()[w], expected);
        }
    }

    #[test]
    fn terminal_cost_vanishes_only_at_point_masses(w in belief_strategy()) {
        let pi = belief(&w);
        prop_assert_eq!(terminal_cost(&pi) < 1e-12, pi.is_point_mass());
        prop_assert!(terminal_cost(&pi) <= 0.75 + 1e-15);
    }

    #[test]
    fn costs_are_bounded(w in belief_strategy(), seed in 0u64..1000) {
        let ch = random_channel(seed);
        let pi = belief(&w);
        let base = LogBase::Bits;
        for e in all_joint_actions(&ProblemSpec::binary()) {
            let j = cost_joint_entropy(&pi, &e, &ch, base);
            prop_assert!(j <= 1e-15 && j >= -2.0 - 1e-12);
            for user in [User::One, User::Two] {
                let c = cost_conditional_entropy(&pi, &e, &ch, user, base);
                prop_assert!(c <= 1e-15 && c >= -1.0 - 1e-12);
            }
            prop_assert!(cost_ejs(&pi, &e, &ch, base).value <= 1e-15);
        }
    }

    #[test]
    fn joint_cost_is_a_mutual_information(w in belief_strategy(), seed in 0u64..1000) {
        let ch = random_channel(seed);
        let pi = belief(&w);
        let base = LogBase::Nats;
        for e in all_joint_actions(&ProblemSpec::binary()) {
            let c = cost_joint_entropy(&pi, &e, &ch, base);
            // -I(X; Z) = h0 - h3 under the induced input law
            prop_assert!((c - (h0(&pi, &e, &ch, base) - h3(&pi, &e, &ch, base))).abs() < 1e-12);
        }
    }

    #[test]
    fn conditioning_reduces_output_entropy(w in belief_strategy(), seed in 0u64..1000) {
        let ch = random_channel(seed);
        let pi = belief(&w);
        let pihat2 = PrivateBelief::from_probs(User::Two, pi.marginal(User::Two)).unwrap();
        let base = LogBase::Bits;
        for e in all_joint_actions(&ProblemSpec::binary()) {
            let top = h3(&pi, &e, &ch, base);
            prop_assert!(top >= h0(&pi, &e, &ch, base) - 1e-12);
            prop_assert!(h1(&pihat2, &pi, &e, &ch, base) <= top + 1e-12);
        }
    }

    #[test]
    fn projection_is_the_nearest_grid_point(w in belief_strategy(), k in 2u32..9) {
        let grid = SimplexGrid::new(k, 4).unwrap();
        let p = normalized(&w);
        let (idx, err) = grid.project(&p);
        let mut best = f64::INFINITY;
        for i in 0..grid.len() {
            let d: f64 = grid.probs(i).iter().zip(&p).map(|(a, b)| (a - b).abs()).sum();
            best = best.min(d);
        }
        prop_assert!(err <= best + 1e-12);
        let d: f64 = grid.probs(idx).iter().zip(&p).map(|(a, b)| (a - b).abs()).sum();
        prop_assert!((d - err).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn dp_value_never_increases_with_horizon(seed in 0u64..10_000) {
        let spec = ProblemSpec::binary();
        let ch = random_channel(seed);
        let v: Vec<f64> = (1..=3).map(|n| root_value(&spec, &ch, n)).collect();
        prop_assert!(v[1] <= v[0] + 1e-12 && v[2] <= v[1] + 1e-12, "{:?}", v);
    }

    #[test]
    fn output_relabeling_is_harmless(seed in 0u64..10_000) {
        let spec = ProblemSpec::binary();
        let ch = random_channel(seed);
        let swapped = ch.permute_outputs(&[1, 0]).unwrap();
        let a = build_reachable_tree(&spec, &ch, 2, None, DEFAULT_NODE_CAP).unwrap();
        let b = build_reachable_tree(&spec, &swapped, 2, None, DEFAULT_NODE_CAP).unwrap();
        let sa = backward_dp(&a, &ch, &ErrorProbability).unwrap();
        let sb = backward_dp(&b, &swapped, &ErrorProbability).unwrap();
        prop_assert!((sa.root_value - sb.root_value).abs() < 1e-12);
        let (ra, rb) = (sa.policy.root(), sb.policy.root());
        prop_assert_eq!(&ra.action, &rb.action);
        for z in 0..2 {
            if let (Some(ca), Some(cb)) = (sa.policy.child(0, z), sb.policy.child(0, 1 - z)) {
                let (ba, bb) = (&sa.policy.node(ca).belief, &sb.policy.node(cb).belief);
                prop_assert!(ba.probs().iter().zip(bb.probs()).all(|(x, y)| (x - y).abs() < 1e-12));
            }
        }
    }

    #[test]
    fn branch_mass_is_conserved(seed in 0u64..10_000, n in 1usize..4) {
        let spec = ProblemSpec::binary();
        let ch = random_channel(seed);
        let tree = build_reachable_tree(&spec, &ch, n, None, DEFAULT_NODE_CAP).unwrap();
        for depth in 0..n {
            for node in tree.layer(depth) {
                for exp in &node.expansions {
                    let total: f64 = exp.branches.iter().map(|b| b.prob).sum::<f64>() + exp.pruned_mass;
                    prop_assert!((total - 1.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn joint_kernel_is_stochastic(seed in 0u64..10_000, picks in prop::collection::vec(0usize..16, 4)) {
        let spec = ProblemSpec::binary();
        let ch = random_channel(seed);
        let mut layer = vec![JointState::initial(&spec)];
        for &a in &picks {
            let e = JointAction::from_index(&spec, a);
            let mut next = Vec::new();
            for s in &layer {
                let out = joint_kernel_step(s, &e, &ch).unwrap();
                prop_assert!((out.iter().map(|(p, _)| p).sum::<f64>() - 1.0).abs() < 1e-12);
                next.extend(out.into_iter().map(|(_, s)| s));
            }
            layer = next;
        }
    }

    #[test]
    fn stage_evaluation_matches_full_history(seed in 0u64..10_000, policy_seed in 0u64..1000, n in 1usize..4) {
        let spec = ProblemSpec::binary();
        let ch = random_channel(seed);
        let pol = hashed_policy(&spec, &ch, n, policy_seed);
        let lambda = LambdaWeights::new(1.0, 1.0, 1.0).unwrap();
        let a = evaluate_in(&spec, &pol, &ch, lambda, DEFAULT_STATE_CAP).unwrap();
        let b = full_history_in(&spec, &pol, &ch, lambda, DEFAULT_HISTORY_CAP).unwrap();
        prop_assert!(a.max_difference(&b) < 1e-10);
        for v in a.i1_per_t.iter().chain(&a.i2_per_t).chain(&a.i3_per_t) {
            prop_assert!(*v >= -1e-12);
        }
    }

    #[test]
    fn stage_costs_telescope(seed in 0u64..10_000, policy_seed in 0u64..1000, n in 1usize..5) {
        let spec = ProblemSpec::binary();
        let ch = random_channel(seed);
        let pol = hashed_policy(&spec, &ch, n, policy_seed);
        let reg = CostRegistry::with_builtins();
        for name in ["joint_entropy_drift", "conditional_entropy_drift_user1", "conditional_entropy_drift_user2", "ejs"] {
            let r = check_telescoping(&pol, &ch, reg.build(name).unwrap().as_ref(), LogBase::Bits).unwrap();
            prop_assert!(r.residual < 1e-10, "{} {:?}", name, r);
        }
    }
}
