//! Training loop for the inverse-dynamics controller: fit `k̂` so the target
//! successor matches the source successor, until the validity condition holds.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::fmt::Write as _;

use crate::certify::{check_validity, mismatch_e, ValidityInputs};
use crate::error::{Error, Result};
use crate::grid::SampleGrid;
use crate::model::{BarrierCertificate, ControlLaw, DtSystem};
use crate::neural::{adam_step, AdamState, Grads, Mlp, Workspace};
use crate::scalar::Real;

/// `L_† = L_x + L_u L_k + L_x̂ + L_û L_k̂`
pub fn resolve_lip_dagger<T: Real>(lx: T, lu: T, lk: T, lx_hat: T, lu_hat: T, lk_hat: T) -> T {
    lx + lu * lk + lx_hat + lu_hat * lk_hat
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransferConfig {
    pub hidden: Vec<usize>,
    pub max_outer_rounds: usize,
    pub inner_iterations_per_round: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Learning rate multiplier applied after every round.
    pub lr_decay: f64,
    pub lipschitz_penalty: f64,
    /// Weight of `½‖y − clamp(y)‖²` on the raw network output. The clamp has zero
    /// slope outside the input box, so without it an output that leaves the box stays there.
    pub box_penalty: f64,
    /// Scale of the He-uniform initialization.
    pub init_scale: f64,
    /// Finite-difference step for `∂f̂/∂u`, relative to the input box width.
    pub fd_step: f64,
    pub seed: u64,
}

impl Default for TransferConfig {
    fn default() -> Self {
        Self {
            hidden: vec![200; 4],
            max_outer_rounds: 10,
            inner_iterations_per_round: 1000,
            batch_size: 1024,
            learning_rate: 5e-6,
            lr_decay: 1.0,
            lipschitz_penalty: 0.0,
            box_penalty: 0.0,
            init_scale: 1.0,
            fd_step: 1e-6,
            seed: 0,
        }
    }
}

impl TransferConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.inner_iterations_per_round == 0 {
            return bad("inner_iterations_per_round must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return bad("learning_rate must be positive");
        }
        if !(self.lr_decay > 0.0) || !self.lr_decay.is_finite() {
            return bad("lr_decay must be positive");
        }
        if !(self.lipschitz_penalty >= 0.0) || !self.lipschitz_penalty.is_finite() {
            return bad("lipschitz_penalty must be non-negative");
        }
        if !(self.box_penalty >= 0.0) || !self.box_penalty.is_finite() {
            return bad("box_penalty must be non-negative");
        }
        if !(self.init_scale > 0.0) || !(self.fd_step > 0.0) {
            return bad("init_scale and fd_step must be positive");
        }
        if self.hidden.iter().any(|&h| h == 0) {
            return bad("hidden layer widths must be positive");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoundRecord<T> {
    pub round: usize,
    /// Mean training loss over the preceding round's batches (`NaN` before training).
    pub loss: T,
    pub mismatch_e: T,
    pub lip_k_hat: T,
    pub lip_dagger: T,
    pub validity_lhs: T,
    pub iterations: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransferReport<T> {
    pub rounds: Vec<RoundRecord<T>>,
    pub converged: bool,
    pub total_iterations: usize,
    pub epsilon: T,
    pub lip_b: T,
    pub eta: T,
    /// Where the caller stored the controller, if it did.
    pub final_controller: Option<String>,
}

impl<T: Real> TransferReport<T> {
    pub fn last(&self) -> Option<&RoundRecord<T>> {
        self.rounds.last()
    }

    /// One CSV row per round.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("round,iterations,loss,mismatch_e,lip_k_hat,lip_dagger,validity_lhs\n");
        for r in &self.rounds {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                r.round,
                r.iterations,
                crate::report::fmt_real(r.loss),
                crate::report::fmt_real(r.mismatch_e),
                crate::report::fmt_real(r.lip_k_hat),
                crate::report::fmt_real(r.lip_dagger),
                crate::report::fmt_real(r.validity_lhs),
            );
        }
        s
    }
}

/// Loss `1/(2N) Σ ‖f(xᵢ,k(xᵢ)) − f̂(xᵢ,clamp(net(xᵢ)))‖₂²` and its parameter gradient.
///
/// `f̂` is a black box, so `∂f̂/∂u` is taken by central differences with step
/// `fd_step × width` per input axis. Output axes saturated by the clamp get zero
/// mismatch gradient; `box_penalty` adds `½ρ‖y − clamp(y)‖²` per sample to pull them back.
pub fn training_loss<T: Real>(
    src: &DtSystem<T>,
    k: &ControlLaw<T>,
    tgt: &DtSystem<T>,
    net: &Mlp<T>,
    batch: &[Vec<T>],
    fd_step: T,
    box_penalty: T,
) -> Result<(T, Grads<T>)> {
    let mut grads = net.zero_grads();
    if batch.is_empty() {
        return Ok((T::zero(), grads));
    }
    let n = src.state_dim();
    let m = tgt.input_dim();
    let ub = &tgt.input_box;
    let mut ws = Workspace::default();
    let mut u_src = vec![T::zero(); src.input_dim()];
    let mut y = vec![T::zero(); m];
    let mut u = vec![T::zero(); m];
    let mut f_src = vec![T::zero(); n];
    let mut f_tgt = vec![T::zero(); n];
    let mut f_plus = vec![T::zero(); n];
    let mut f_minus = vec![T::zero(); n];
    let mut upstream = vec![T::zero(); m];
    let inv_n = T::one() / T::lit(batch.len() as f64);
    let mut total = T::zero();

    for x in batch {
        k.eval_with(x, &mut ws, &mut u_src)?;
        src.step_into(x, &u_src, &mut f_src);
        net.forward_with(x, &mut ws, &mut y)?;
        for j in 0..m {
            u[j] = y[j].max(ub.lower()[j]).min(ub.upper()[j]);
        }
        tgt.step_into(x, &u, &mut f_tgt);
        let mut sq = T::zero();
        for s in 0..n {
            let d = f_tgt[s] - f_src[s];
            sq = sq + d * d;
        }
        total = total + sq;

        for j in 0..m {
            upstream[j] = T::zero();
            if y[j] < ub.lower()[j] || y[j] > ub.upper()[j] {
                let excess = y[j] - u[j];
                total = total + box_penalty * excess * excess;
                upstream[j] = box_penalty * excess * inv_n;
                continue;
            }
            let w = ub.width(j);
            let h = fd_step * if w > T::zero() { w } else { T::one() };
            let uj = u[j];
            u[j] = uj + h;
            tgt.step_into(x, &u, &mut f_plus);
            u[j] = uj - h;
            tgt.step_into(x, &u, &mut f_minus);
            u[j] = uj;
            let mut g = T::zero();
            for s in 0..n {
                let dfdu = (f_plus[s] - f_minus[s]) / (h + h);
                g = g + (f_tgt[s] - f_src[s]) * dfdu;
            }
            upstream[j] = g * inv_n;
        }
        if upstream.iter().any(|&v| v != T::zero()) {
            net.backward_accumulate(x, &upstream, &mut grads)?;
        }
    }
    let loss = total * inv_n * T::half();
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss);
    }
    for (i, l) in grads.iter().enumerate() {
        if !l.w.iter().chain(&l.b).all(|v| v.is_finite()) {
            return Err(Error::NonFiniteGradient { layer: i });
        }
    }
    Ok((loss, grads))
}

/// Seeded epoch-wise shuffling of grid indices.
struct BatchSampler {
    order: Vec<usize>,
    pos: usize,
    rng: ChaCha8Rng,
}

impl BatchSampler {
    fn new(len: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..len).collect();
        order.shuffle(&mut rng);
        Self { order, pos: 0, rng }
    }

    fn next_batch(&mut self, size: usize, out: &mut Vec<usize>) {
        out.clear();
        while out.len() < size.min(self.order.len()) {
            if self.pos == self.order.len() {
                self.order.shuffle(&mut self.rng);
                self.pos = 0;
            }
            out.push(self.order[self.pos]);
            self.pos += 1;
        }
    }
}

/// Runs the outer/inner training loop. Validity is always judged with `E` and
/// `L_k̂` computed after the latest parameter update.
pub fn run_transfer<T: Real>(
    src: &DtSystem<T>,
    k: &ControlLaw<T>,
    cert: &BarrierCertificate<T>,
    tgt: &DtSystem<T>,
    grid: &SampleGrid<T>,
    cfg: &TransferConfig,
) -> Result<(TransferReport<T>, ControlLaw<T>)> {
    run_transfer_observed(src, k, cert, tgt, grid, cfg, |_| {})
}

/// As [`run_transfer`], calling `observe` after each evaluated round.
pub fn run_transfer_observed<T: Real>(
    src: &DtSystem<T>,
    k: &ControlLaw<T>,
    cert: &BarrierCertificate<T>,
    tgt: &DtSystem<T>,
    grid: &SampleGrid<T>,
    cfg: &TransferConfig,
    mut observe: impl FnMut(&RoundRecord<T>),
) -> Result<(TransferReport<T>, ControlLaw<T>)> {
    cfg.validate()?;
    if src.state_box != tgt.state_box {
        return Err(Error::StateBoxMismatch);
    }
    let (lx, lu) = src.lips()?;
    let (lxh, luh) = tgt.lips()?;
    let lk = k.lip()?;

    let mut sizes = vec![src.state_dim()];
    sizes.extend(&cfg.hidden);
    sizes.push(tgt.input_dim());
    let mut net = Mlp::init_he(&sizes, cfg.seed, T::lit(cfg.init_scale))?;
    let mut adam = AdamState::new(&net, T::lit(cfg.learning_rate));
    let mut sampler = BatchSampler::new(grid.len(), cfg.seed.wrapping_add(1));
    let penalty = T::lit(cfg.lipschitz_penalty);
    let fd = T::lit(cfg.fd_step);
    let boxp = T::lit(cfg.box_penalty);

    let mut rounds = Vec::new();
    let mut total_iterations = 0;
    let mut converged = false;
    let mut last_loss = T::nan();
    let mut idx = Vec::with_capacity(cfg.batch_size);
    let mut batch: Vec<Vec<T>> = Vec::with_capacity(cfg.batch_size);

    let law = loop {
        let law = ControlLaw::neural(net.clone(), tgt.input_box.clone());
        let lk_hat = law.lip()?;
        let e = mismatch_e(src, k, tgt, &law, grid)?;
        let lip_dagger = resolve_lip_dagger(lx, lu, lk, lxh, luh, lk_hat);
        let (ok, lhs) = check_validity(&ValidityInputs {
            lip_b: cert.lip,
            eta: cert.eta,
            epsilon: grid.epsilon(),
            mismatch: e,
            lip_dagger,
        });
        let rec = RoundRecord {
            round: rounds.len(),
            loss: last_loss,
            mismatch_e: e,
            lip_k_hat: lk_hat,
            lip_dagger,
            validity_lhs: lhs,
            iterations: total_iterations,
        };
        observe(&rec);
        rounds.push(rec);
        if ok {
            converged = true;
            break law;
        }
        if rounds.len() > cfg.max_outer_rounds {
            break law;
        }

        let mut acc = T::zero();
        for _ in 0..cfg.inner_iterations_per_round {
            sampler.next_batch(cfg.batch_size, &mut idx);
            batch.resize_with(idx.len(), Vec::new);
            for (b, &i) in batch.iter_mut().zip(&idx) {
                b.resize(grid.dim(), T::zero());
                grid.point_into(i, b);
            }
            let (loss, mut grads) = training_loss(src, k, tgt, &net, &batch, fd, boxp)?;
            if penalty > T::zero() {
                net.add_lipschitz_subgradient(penalty, &mut grads);
            }
            adam_step(&mut net, &grads, &mut adam);
            acc = acc + loss;
            total_iterations += 1;
        }
        last_loss = acc / T::lit(cfg.inner_iterations_per_round as f64);
        adam.learning_rate = adam.learning_rate * T::lit(cfg.lr_decay);
    };

    Ok((
        TransferReport {
            rounds,
            converged,
            total_iterations,
            epsilon: grid.epsilon(),
            lip_b: cert.lip,
            eta: cert.eta,
            final_controller: None,
        },
        law,
    ))
}
