use std::collections::HashMap;

use serde::Serialize;

use crate::error::Result;
use crate::model::{
    belief_update, induced_input_marginal, private_belief_update, BeliefKey, Channel, JointAction, JointBelief,
    PrivateBelief, ProblemSpec, User,
};

/// `(π̂¹, π̂², π)`: both private beliefs and the common belief.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JointState {
    pub pihat1: PrivateBelief,
    pub pihat2: PrivateBelief,
    pub pi: JointBelief,
}

impl JointState {
    /// All beliefs uniform.
    pub fn initial(spec: &ProblemSpec) -> Self {
        JointState {
            pihat1: PrivateBelief::uniform(User::One, spec.m1),
            pihat2: PrivateBelief::uniform(User::Two, spec.m2),
            pi: JointBelief::uniform(spec.m1, spec.m2),
        }
    }

    pub fn key(&self) -> (BeliefKey, BeliefKey, BeliefKey) {
        (self.pihat1.key(), self.pihat2.key(), self.pi.key())
    }
}

/// One step of the controlled Markov chain on joint states. Branches over
/// `(x¹, x², z)` carry weight `Q(z|x¹,x²) P(x¹|π̂¹,e¹) P(x²|π̂²,e²)`;
/// identical successor states are merged, in order of first appearance.
pub fn joint_kernel_step(state: &JointState, e: &JointAction, ch: &Channel) -> Result<Vec<(f64, JointState)>> {
    let p1 = induced_input_marginal(&state.pihat1, &e.e1, ch.x1_size());
    let p2 = induced_input_marginal(&state.pihat2, &e.e2, ch.x2_size());
    let mut out: Vec<(f64, JointState)> = Vec::new();
    let mut seen: HashMap<(BeliefKey, BeliefKey, BeliefKey), usize> = HashMap::new();
    let mut posterior: Vec<Option<JointBelief>> = vec![None; ch.z_size()];
    for (x1, &a) in p1.iter().enumerate() {
        if a <= 0.0 {
            continue;
        }
        let next1 = private_belief_update(&state.pihat1, &e.e1, x1)?;
        for (x2, &b) in p2.iter().enumerate() {
            if b <= 0.0 {
                continue;
            }
            let next2 = private_belief_update(&state.pihat2, &e.e2, x2)?;
            for (z, &q) in ch.row(x1, x2).iter().enumerate() {
                let w = q * a * b;
                if w <= 0.0 {
                    continue;
                }
                if posterior[z].is_none() {
                    posterior[z] = Some(belief_update(&state.pi, e, z, ch)?);
                }
                let next = JointState { pihat1: next1.clone(), pihat2: next2.clone(), pi: posterior[z].clone().unwrap() };
                match seen.entry(next.key()) {
                    std::collections::hash_map::Entry::Occupied(slot) => out[*slot.get()].0 += w,
                    std::collections::hash_map::Entry::Vacant(slot) => {
                        slot.insert(out.len());
                        out.push((w, next));
                    }
                }
            }
        }
    }
    Ok(out)
}
