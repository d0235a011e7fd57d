//! Closed-loop rollouts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{region_contains, ControlLaw, DtSystem, SafetySpec};
use crate::neural::Workspace;
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory<T> {
    pub states: Vec<Vec<T>>,
    pub inputs: Vec<Vec<T>>,
    pub entered_unsafe: bool,
    pub first_unsafe_step: Option<usize>,
    /// First step at which the state left the state box (recorded, never clamped).
    pub first_exit_step: Option<usize>,
}

/// Rolls the closed loop for `steps` transitions from `x0`.
pub fn simulate<T: Real>(
    sys: &DtSystem<T>,
    k: &ControlLaw<T>,
    x0: &[T],
    steps: usize,
    spec: &SafetySpec<T>,
) -> Result<Trajectory<T>> {
    if steps == 0 {
        return Err(Error::Config("simulation needs at least one step".into()));
    }
    if x0.len() != sys.state_dim() {
        return Err(Error::DimensionMismatch {
            expected: sys.state_dim(),
            got: x0.len(),
        });
    }
    let mut ws = Workspace::default();
    let mut states = Vec::with_capacity(steps + 1);
    let mut inputs = Vec::with_capacity(steps);
    let mut first_unsafe = None;
    let mut first_exit = None;
    let mut x = x0.to_vec();
    for t in 0..=steps {
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFiniteState {
                context: format!("simulation step {t}"),
                state: x.iter().map(|v| v.as_f64()).collect(),
            });
        }
        if first_exit.is_none() && !sys.state_box.contains(&x) {
            first_exit = Some(t);
        }
        if first_unsafe.is_none() && region_contains(&spec.unsafe_set, &x)? {
            first_unsafe = Some(t);
        }
        states.push(x.clone());
        if t == steps {
            break;
        }
        let mut u = vec![T::zero(); sys.input_dim()];
        k.eval_with(&x, &mut ws, &mut u)?;
        let mut next = vec![T::zero(); sys.state_dim()];
        sys.step_into(&x, &u, &mut next);
        inputs.push(u);
        x = next;
    }
    Ok(Trajectory {
        states,
        inputs,
        entered_unsafe: first_unsafe.is_some(),
        first_unsafe_step: first_unsafe,
        first_exit_step: first_exit,
    })
}

/// Initial states: the corners of every initial-set member box, then uniform
/// interior samples, `count` in total.
pub fn sample_initial_states<T: Real>(spec: &SafetySpec<T>, count: usize, seed: u64) -> Vec<Vec<T>> {
    let mut out: Vec<Vec<T>> = spec
        .initial
        .members()
        .iter()
        .flat_map(|m| m.vertices().collect::<Vec<_>>())
        .take(count)
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let members = spec.initial.members();
    while out.len() < count {
        let m = &members[rng.gen_range(0..members.len())];
        out.push(
            (0..m.dim())
                .map(|i| {
                    let lo = m.lower()[i].as_f64();
                    let hi = m.upper()[i].as_f64();
                    T::lit(lo + (hi - lo) * rng.gen::<f64>())
                })
                .collect(),
        );
    }
    out
}

/// Independent rollouts, returned in the order of `initial_states`.
pub fn rollouts<T: Real>(
    sys: &DtSystem<T>,
    k: &ControlLaw<T>,
    initial_states: &[Vec<T>],
    steps: usize,
    spec: &SafetySpec<T>,
) -> Result<Vec<Trajectory<T>>> {
    initial_states
        .par_iter()
        .map(|x0| simulate(sys, k, x0, steps, spec))
        .collect()
}
