//! Sampling-based Lipschitz estimates for black-box maps.
//!
//! These are heuristic under-approximations inflated by a safety factor, meant
//! as a fallback when analytic constants are not configured.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{AxisBox, DtSystem};
use crate::scalar::{dist_inf, Real};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EstimatorConfig {
    pub pairs: usize,
    pub seed: u64,
    pub safety_factor: f64,
    /// Perturbation radius relative to the per-axis domain width.
    pub perturbation: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            pairs: 10_000,
            seed: 0,
            safety_factor: 1.1,
            perturbation: 1e-4,
        }
    }
}

/// Draws pair `i` deterministically from the shared stream. Even pairs are
/// uniform, odd pairs are small perturbations. Every pair consumes the same
/// number of draws so a longer run extends a shorter one.
struct PairSampler<'a, T> {
    rng: ChaCha8Rng,
    domain: &'a AxisBox<T>,
    perturbation: f64,
    count: usize,
}

impl<'a, T: Real> PairSampler<'a, T> {
    fn new(domain: &'a AxisBox<T>, seed: u64, perturbation: f64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            domain,
            perturbation,
            count: 0,
        }
    }

    fn uniform(&mut self) -> Vec<T> {
        (0..self.domain.dim())
            .map(|i| {
                let lo = self.domain.lower()[i].as_f64();
                let hi = self.domain.upper()[i].as_f64();
                T::lit(lo + (hi - lo) * self.rng.gen::<f64>())
            })
            .collect()
    }

    fn next_pair(&mut self) -> (Vec<T>, Vec<T>) {
        let a = self.uniform();
        let far = self.uniform();
        let local = self.count % 2 == 1;
        self.count += 1;
        if !local {
            return (a, far);
        }
        let b = (0..self.domain.dim())
            .map(|i| {
                let w = self.domain.width(i).as_f64() * self.perturbation;
                // reuse the second draw as the perturbation direction
                let unit = (far[i] - self.domain.lower()[i]).as_f64()
                    / self.domain.width(i).as_f64().max(f64::MIN_POSITIVE);
                let v = a[i].as_f64() + w * (2.0 * unit - 1.0);
                T::lit(v)
                    .max(self.domain.lower()[i])
                    .min(self.domain.upper()[i])
            })
            .collect();
        (a, b)
    }
}

fn finite_or_fault<T: Real>(v: &[T], at: &[T], context: &str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteState {
            context: context.to_string(),
            state: at.iter().map(|x| x.as_f64()).collect(),
        })
    }
}

/// `safety_factor × max ‖map(a) − map(b)‖∞ / ‖a − b‖∞` over sampled pairs.
pub fn estimate_lipschitz_with<T, F>(map: F, domain: &AxisBox<T>, cfg: &EstimatorConfig) -> Result<T>
where
    T: Real,
    F: Fn(&[T]) -> Vec<T>,
{
    if cfg.pairs == 0 {
        return Err(Error::Config("estimator needs at least one pair".into()));
    }
    if domain.is_degenerate() {
        return Err(Error::InvalidBox(format!("degenerate estimation domain {domain}")));
    }
    let mut sampler = PairSampler::new(domain, cfg.seed, cfg.perturbation);
    let mut best = T::zero();
    for _ in 0..cfg.pairs {
        let (a, b) = sampler.next_pair();
        let d = dist_inf(&a, &b);
        if d == T::zero() {
            continue;
        }
        let fa = map(&a);
        finite_or_fault(&fa, &a, "lipschitz estimate")?;
        let fb = map(&b);
        finite_or_fault(&fb, &b, "lipschitz estimate")?;
        best = best.max(dist_inf(&fa, &fb) / d);
    }
    Ok(best * T::lit(cfg.safety_factor))
}

pub fn estimate_lipschitz<T, F>(map: F, domain: &AxisBox<T>, pairs: usize, seed: u64) -> Result<T>
where
    T: Real,
    F: Fn(&[T]) -> Vec<T>,
{
    estimate_lipschitz_with(
        map,
        domain,
        &EstimatorConfig {
            pairs,
            seed,
            ..Default::default()
        },
    )
}

/// Estimates `(L_x, L_u)`: state pairs share one random input, input pairs share one random state.
pub fn joint_lipschitz<T: Real>(sys: &DtSystem<T>, pairs: usize, seed: u64) -> Result<(T, T)> {
    joint_lipschitz_with(
        sys,
        &EstimatorConfig {
            pairs,
            seed,
            ..Default::default()
        },
    )
}

pub fn joint_lipschitz_with<T: Real>(sys: &DtSystem<T>, cfg: &EstimatorConfig) -> Result<(T, T)> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
    let draw = |b: &AxisBox<T>, rng: &mut ChaCha8Rng| -> Vec<T> {
        (0..b.dim())
            .map(|i| {
                let lo = b.lower()[i].as_f64();
                let hi = b.upper()[i].as_f64();
                T::lit(lo + (hi - lo) * rng.gen::<f64>())
            })
            .collect()
    };
    let u_fixed = draw(&sys.input_box, &mut rng);
    let x_fixed = draw(&sys.state_box, &mut rng);

    let lx = estimate_lipschitz_with(|x| sys.step(x, &u_fixed), &sys.state_box, cfg)?;
    let lu = if sys.input_box.is_degenerate() {
        T::zero()
    } else {
        estimate_lipschitz_with(|u| sys.step(&x_fixed, u), &sys.input_box, cfg)?
    };
    Ok((lx, lu))
}
