//! Sound grid verification of the barrier conditions, the transfer validity
//! condition, the successor mismatch `E`, and an empirical audit of the
//! inequality chain that links them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::SampleGrid;
use crate::model::{BarrierCertificate, ControlLaw, DtSystem, SafetySpec};
use crate::neural::Workspace;
use crate::scalar::{dist_inf, Real};
use crate::transfer::resolve_lip_dagger;

pub const DEFAULT_VIOLATION_CAP: usize = 10_000;
const CHUNK: usize = 8192;

/// Which form of the decrease condition is checked.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecreaseCondition {
    /// `B(f(x, k(x))) − B(x) ≤ −η` for every state.
    #[default]
    Everywhere,
    /// `B(f(x, k(x))) ≤ −η` for every state with `B(x) ≤ 0`, and the successor
    /// stays in the state box. This makes `{B ≤ 0}` forward invariant, which
    /// together with the initial and unsafe conditions gives safety.
    Sublevel,
}

impl DecreaseCondition {
    pub fn as_str(self) -> &'static str {
        match self {
            DecreaseCondition::Everywhere => "everywhere",
            DecreaseCondition::Sublevel => "sublevel",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CertifyOptions {
    pub decrease: DecreaseCondition,
    pub violation_cap: usize,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        Self {
            decrease: DecreaseCondition::Everywhere,
            violation_cap: DEFAULT_VIOLATION_CAP,
        }
    }
}

impl CertifyOptions {
    pub fn with_decrease(decrease: DecreaseCondition) -> Self {
        Self {
            decrease,
            ..Default::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ViolationPoint<T> {
    pub index: usize,
    pub state: Vec<T>,
    /// 1 = initial, 2 = unsafe, 3 = decrease.
    pub condition: usize,
    pub value: T,
}

/// Per-condition outcome. A condition holds iff its worst value is `≤ 0`
/// (strictly `< 0` for the unsafe condition, which is a strict inequality).
#[derive(Clone, Debug, PartialEq)]
pub struct CertificationVerdict<T> {
    pub condition1_ok: bool,
    pub condition2_ok: bool,
    pub condition3_ok: bool,
    /// Largest violation value per condition; `-inf` when no grid point was subject to it.
    pub worst_margins: [T; 3],
    pub checked_counts: [usize; 3],
    pub violation_counts: [usize; 3],
    /// First `violation_cap` violations in grid order.
    pub violation_points: Vec<ViolationPoint<T>>,
    pub decrease: DecreaseCondition,
}

impl<T: Real> CertificationVerdict<T> {
    pub fn all_ok(&self) -> bool {
        self.condition1_ok && self.condition2_ok && self.condition3_ok
    }

    pub fn total_violations(&self) -> usize {
        self.violation_counts.iter().sum()
    }
}

/// Raw values of all checks at one grid point.
#[derive(Clone, Debug, PartialEq)]
pub struct PointEval<T> {
    pub b: T,
    pub b_next: T,
    pub initial: Option<T>,
    pub unsafe_: Option<T>,
    pub decrease: Option<T>,
}

impl<T: Real> PointEval<T> {
    pub fn violated(&self) -> [bool; 3] {
        [
            self.initial.is_some_and(|v| !(v <= T::zero())),
            self.unsafe_.is_some_and(|v| !(v < T::zero())),
            self.decrease.is_some_and(|v| !(v <= T::zero())),
        ]
    }

    pub fn any_violation(&self) -> bool {
        self.violated().iter().any(|&v| v)
    }
}

/// Precomputed constants for the per-point checks.
pub struct GridChecker<'a, T: Real> {
    cert: &'a BarrierCertificate<T>,
    sys: &'a DtSystem<T>,
    k: &'a ControlLaw<T>,
    spec: &'a SafetySpec<T>,
    grid: &'a SampleGrid<T>,
    decrease: DecreaseCondition,
    /// `L_B · ε/2`
    b_slack: T,
    /// `L_x + L_u L_k`
    closed_loop_lip: T,
}

pub struct Scratch<T> {
    x: Vec<T>,
    lo: Vec<T>,
    hi: Vec<T>,
    u: Vec<T>,
    fx: Vec<T>,
    ws: Workspace<T>,
}

impl<'a, T: Real> GridChecker<'a, T> {
    pub fn new(
        cert: &'a BarrierCertificate<T>,
        sys: &'a DtSystem<T>,
        k: &'a ControlLaw<T>,
        spec: &'a SafetySpec<T>,
        grid: &'a SampleGrid<T>,
        decrease: DecreaseCondition,
    ) -> Result<Self> {
        if grid.state_box() != &sys.state_box {
            return Err(Error::GridMismatch);
        }
        if spec.initial.dim() != sys.state_dim() || spec.unsafe_set.dim() != sys.state_dim() {
            return Err(Error::DimensionMismatch {
                expected: sys.state_dim(),
                got: spec.initial.dim(),
            });
        }
        let (lx, lu) = sys.lips()?;
        let lk = k.lip()?;
        let half = grid.epsilon() * T::half();
        Ok(Self {
            cert,
            sys,
            k,
            spec,
            grid,
            decrease,
            b_slack: cert.lip * half,
            closed_loop_lip: lx + lu * lk,
        })
    }

    pub fn scratch(&self) -> Scratch<T> {
        let n = self.sys.state_dim();
        Scratch {
            x: vec![T::zero(); n],
            lo: vec![T::zero(); n],
            hi: vec![T::zero(); n],
            u: vec![T::zero(); self.sys.input_dim()],
            fx: vec![T::zero(); n],
            ws: Workspace::default(),
        }
    }

    fn cell_bounds(&self, index: usize, s: &mut Scratch<T>) {
        self.grid.point_into(index, &mut s.x);
        let m = self.grid.multi_index(index);
        let lo = self.sys.state_box.lower();
        let hi = self.sys.state_box.upper();
        for (a, &j) in m.iter().enumerate() {
            let w = self.grid.cell_width()[a];
            s.lo[a] = lo[a] + T::lit(j as f64) * w;
            s.hi[a] = if j + 1 == self.grid.cells_per_axis()[a] {
                hi[a]
            } else {
                lo[a] + T::lit((j + 1) as f64) * w
            };
        }
    }

    /// Evaluates every applicable check at grid point `index`; the state is left in `s.x`.
    pub fn eval_point(&self, index: usize, s: &mut Scratch<T>) -> Result<PointEval<T>> {
        self.cell_bounds(index, s);
        let eta = self.cert.eta;
        let b = self.cert.eval(&s.x);
        self.k.eval_with(&s.x, &mut s.ws, &mut s.u)?;
        self.sys.step_into(&s.x, &s.u, &mut s.fx);
        if !s.fx.iter().all(|v| v.is_finite()) || !b.is_finite() {
            return Err(Error::NonFiniteState {
                context: format!("closed-loop successor of grid point {index}"),
                state: s.x.iter().map(|v| v.as_f64()).collect(),
            });
        }
        let b_next = self.cert.eval(&s.fx);

        let initial = self
            .spec
            .initial
            .may_intersect_bounds(&s.lo, &s.hi)
            .then(|| b + self.b_slack + eta);
        let unsafe_ = self
            .spec
            .unsafe_set
            .may_intersect_bounds(&s.lo, &s.hi)
            .then(|| eta - (b - self.b_slack));
        let succ_slack = self.b_slack * self.closed_loop_lip;
        let decrease = match self.decrease {
            DecreaseCondition::Everywhere => Some(b_next - b + succ_slack + self.b_slack + eta),
            DecreaseCondition::Sublevel => (b - self.b_slack <= T::zero()).then(|| {
                let level = b_next + succ_slack + eta;
                // the successor cell must stay inside the state box
                let rho = self.closed_loop_lip * self.grid.epsilon() * T::half();
                let sb = &self.sys.state_box;
                let excess = (0..s.fx.len()).fold(T::neg_infinity(), |m, a| {
                    m.max(s.fx[a] + rho - sb.upper()[a])
                        .max(sb.lower()[a] - (s.fx[a] - rho))
                });
                if excess > T::zero() {
                    level.max(excess)
                } else {
                    level
                }
            }),
        };
        Ok(PointEval {
            b,
            b_next,
            initial,
            unsafe_,
            decrease,
        })
    }
}

struct Partial<T> {
    worst: [T; 3],
    checked: [usize; 3],
    violations: [usize; 3],
    points: Vec<ViolationPoint<T>>,
}

/// Checks the three barrier conditions with the default options.
pub fn verify_cbc_on_grid<T: Real>(
    cert: &BarrierCertificate<T>,
    sys: &DtSystem<T>,
    k: &ControlLaw<T>,
    spec: &SafetySpec<T>,
    grid: &SampleGrid<T>,
) -> Result<CertificationVerdict<T>> {
    verify_cbc_on_grid_with(cert, sys, k, spec, grid, &CertifyOptions::default())
}

/// Checks the three barrier conditions at every grid point with Lipschitz slack,
/// so a pass holds for every state of every cell.
pub fn verify_cbc_on_grid_with<T: Real>(
    cert: &BarrierCertificate<T>,
    sys: &DtSystem<T>,
    k: &ControlLaw<T>,
    spec: &SafetySpec<T>,
    grid: &SampleGrid<T>,
    opts: &CertifyOptions,
) -> Result<CertificationVerdict<T>> {
    let checker = GridChecker::new(cert, sys, k, spec, grid, opts.decrease)?;
    let cap = opts.violation_cap;
    let ranges: Vec<_> = grid.chunks(CHUNK).collect();
    let partials: Vec<Partial<T>> = ranges
        .into_par_iter()
        .map(|range| {
            let mut s = checker.scratch();
            let mut p = Partial {
                worst: [T::neg_infinity(); 3],
                checked: [0; 3],
                violations: [0; 3],
                points: Vec::new(),
            };
            for i in range {
                let e = checker.eval_point(i, &mut s)?;
                let vals = [e.initial, e.unsafe_, e.decrease];
                let bad = e.violated();
                for c in 0..3 {
                    if let Some(v) = vals[c] {
                        p.checked[c] += 1;
                        p.worst[c] = p.worst[c].max(v);
                        if bad[c] {
                            p.violations[c] += 1;
                            if p.points.len() < cap {
                                p.points.push(ViolationPoint {
                                    index: i,
                                    state: s.x.clone(),
                                    condition: c + 1,
                                    value: v,
                                });
                            }
                        }
                    }
                }
            }
            Ok(p)
        })
        .collect::<Result<_>>()?;

    let mut worst = [T::neg_infinity(); 3];
    let mut checked = [0; 3];
    let mut violations = [0; 3];
    let mut points = Vec::new();
    for p in partials {
        for c in 0..3 {
            worst[c] = worst[c].max(p.worst[c]);
            checked[c] += p.checked[c];
            violations[c] += p.violations[c];
        }
        let room = cap.saturating_sub(points.len());
        points.extend(p.points.into_iter().take(room));
    }
    Ok(CertificationVerdict {
        condition1_ok: violations[0] == 0,
        condition2_ok: violations[1] == 0,
        condition3_ok: violations[2] == 0,
        worst_margins: worst,
        checked_counts: checked,
        violation_counts: violations,
        violation_points: points,
        decrease: opts.decrease,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ValidityInputs<T> {
    pub lip_b: T,
    pub eta: T,
    pub epsilon: T,
    pub mismatch: T,
    pub lip_dagger: T,
}

/// `lhs = L_B (L_† ε/2 + E) − η`; valid iff `lhs ≤ 0`.
pub fn check_validity<T: Real>(v: &ValidityInputs<T>) -> (bool, T) {
    let lhs = v.lip_b * (v.lip_dagger * v.epsilon * T::half() + v.mismatch) - v.eta;
    (lhs <= T::zero(), lhs)
}

/// Largest infinity-norm gap between the two closed-loop successors over the grid.
pub fn mismatch_e<T: Real>(
    src: &DtSystem<T>,
    k: &ControlLaw<T>,
    tgt: &DtSystem<T>,
    k_hat: &ControlLaw<T>,
    grid: &SampleGrid<T>,
) -> Result<T> {
    Ok(mismatch_e_argmax(src, k, tgt, k_hat, grid)?.0)
}

/// As [`mismatch_e`], also returning the grid index attaining the maximum (first in grid order).
pub fn mismatch_e_argmax<T: Real>(
    src: &DtSystem<T>,
    k: &ControlLaw<T>,
    tgt: &DtSystem<T>,
    k_hat: &ControlLaw<T>,
    grid: &SampleGrid<T>,
) -> Result<(T, usize)> {
    if src.state_box != tgt.state_box {
        return Err(Error::StateBoxMismatch);
    }
    if grid.state_box() != &src.state_box {
        return Err(Error::GridMismatch);
    }
    let n = src.state_dim();
    let ranges: Vec<_> = grid.chunks(CHUNK).collect();
    let parts: Vec<(T, usize)> = ranges
        .into_par_iter()
        .map(|range| {
            let mut x = vec![T::zero(); n];
            let mut u = vec![T::zero(); src.input_dim()];
            let mut uh = vec![T::zero(); tgt.input_dim()];
            let mut fx = vec![T::zero(); n];
            let mut fh = vec![T::zero(); n];
            let mut ws = Workspace::default();
            let mut best = (T::neg_infinity(), range.start);
            for i in range {
                grid.point_into(i, &mut x);
                k.eval_with(&x, &mut ws, &mut u)?;
                k_hat.eval_with(&x, &mut ws, &mut uh)?;
                src.step_into(&x, &u, &mut fx);
                tgt.step_into(&x, &uh, &mut fh);
                let d = dist_inf(&fx, &fh);
                if !d.is_finite() {
                    return Err(Error::NonFiniteState {
                        context: format!("mismatch at grid point {i}"),
                        state: x.iter().map(|v| v.as_f64()).collect(),
                    });
                }
                if d > best.0 {
                    best = (d, i);
                }
            }
            Ok(best)
        })
        .collect::<Result<_>>()?;
    Ok(parts
        .into_iter()
        .fold((T::zero(), 0), |acc, p| if p.0 > acc.0 { p } else { acc }))
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinkStats<T> {
    pub name: &'static str,
    pub checked: usize,
    pub violations: usize,
    /// Largest `lhs − rhs` seen; negative means every sample had room to spare.
    pub max_slack: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChainViolation<T> {
    pub link: &'static str,
    pub state: Vec<T>,
    pub lhs: T,
    pub rhs: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChainReport<T> {
    pub samples: usize,
    pub mismatch_e: T,
    pub lip_dagger: T,
    pub validity_lhs: T,
    /// Whether the source decrease condition holds on the grid. The final link
    /// is only implied (and therefore only audited) when it does.
    pub premise_holds: bool,
    pub links: Vec<LinkStats<T>>,
    pub violations: Vec<ChainViolation<T>>,
}

impl<T: Real> ChainReport<T> {
    pub fn total_violations(&self) -> usize {
        self.links.iter().map(|l| l.violations).sum()
    }
}

/// Empirical audit of the bounds behind the transfer guarantee, at random states:
///
/// 1. `‖f(x,k(x)) − f̂(x,k̂(x))‖ ≤ L_† ε/2 + E`
/// 2. `|B(f̂(x,k̂(x))) − B(f(x,k(x)))| ≤ L_B ‖f̂(x,k̂(x)) − f(x,k(x))‖`
/// 3. `|B(x) − B(xᵢ)| ≤ L_B ‖x − xᵢ‖` for the nearest grid point `xᵢ`
/// 4. the target decrease bound with margin `L_B(L_† ε/2 + E) − η`
///
/// Any violation means some declared Lipschitz constant is not sound.
#[allow(clippy::too_many_arguments)]
pub fn theorem1_chain_check<T: Real>(
    src: &DtSystem<T>,
    k: &ControlLaw<T>,
    tgt: &DtSystem<T>,
    k_hat: &ControlLaw<T>,
    cert: &BarrierCertificate<T>,
    spec: &SafetySpec<T>,
    grid: &SampleGrid<T>,
    samples: usize,
    seed: u64,
    opts: &CertifyOptions,
) -> Result<ChainReport<T>> {
    let (lx, lu) = src.lips()?;
    let (lxh, luh) = tgt.lips()?;
    let lip_dagger = resolve_lip_dagger(lx, lu, k.lip()?, lxh, luh, k_hat.lip()?);
    let e = mismatch_e(src, k, tgt, k_hat, grid)?;
    let (_, lhs) = check_validity(&ValidityInputs {
        lip_b: cert.lip,
        eta: cert.eta,
        epsilon: grid.epsilon(),
        mismatch: e,
        lip_dagger,
    });
    let premise = verify_cbc_on_grid_with(
        cert,
        src,
        k,
        spec,
        grid,
        &CertifyOptions {
            violation_cap: 0,
            ..*opts
        },
    )?;
    let premise_holds = premise.condition3_ok;

    let names = ["successor-gap", "barrier-successor", "barrier-cell", "target-decrease"];
    let mut links: Vec<LinkStats<T>> = names
        .iter()
        .map(|&name| LinkStats {
            name,
            checked: 0,
            violations: 0,
            max_slack: T::neg_infinity(),
        })
        .collect();
    let mut violations = Vec::new();
    let cap = opts.violation_cap;
    let gap_bound = lip_dagger * grid.epsilon() * T::half() + e;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sb = &src.state_box;
    let n = src.state_dim();
    let mut x = vec![T::zero(); n];
    let mut xi = vec![T::zero(); n];
    let mut u = vec![T::zero(); src.input_dim()];
    let mut uh = vec![T::zero(); tgt.input_dim()];
    let mut fx = vec![T::zero(); n];
    let mut fh = vec![T::zero(); n];
    let mut ws = Workspace::default();

    let mut record = |links: &mut Vec<LinkStats<T>>, li: usize, lhs: T, rhs: T, x: &[T]| {
        let l = &mut links[li];
        l.checked += 1;
        l.max_slack = l.max_slack.max(lhs - rhs);
        // absorb rounding in the evaluation itself
        let tol = T::lit(1e-12) * (T::one() + rhs.abs());
        if lhs > rhs + tol {
            l.violations += 1;
            if violations.len() < cap {
                violations.push(ChainViolation {
                    link: l.name,
                    state: x.to_vec(),
                    lhs,
                    rhs,
                });
            }
        }
    };

    for _ in 0..samples {
        for a in 0..n {
            let lo = sb.lower()[a].as_f64();
            let hi = sb.upper()[a].as_f64();
            x[a] = T::lit(lo + (hi - lo) * rng.gen::<f64>());
        }
        grid.point_into(grid.nearest_index(&x), &mut xi);
        k.eval_with(&x, &mut ws, &mut u)?;
        k_hat.eval_with(&x, &mut ws, &mut uh)?;
        src.step_into(&x, &u, &mut fx);
        tgt.step_into(&x, &uh, &mut fh);
        let gap = dist_inf(&fx, &fh);
        if !gap.is_finite() {
            return Err(Error::NonFiniteState {
                context: "chain check successor".into(),
                state: x.iter().map(|v| v.as_f64()).collect(),
            });
        }
        record(&mut links, 0, gap, gap_bound, &x);

        let bf = cert.eval(&fx);
        let bh = cert.eval(&fh);
        record(&mut links, 1, (bh - bf).abs(), cert.lip * gap, &x);

        let bx = cert.eval(&x);
        let bxi = cert.eval(&xi);
        record(&mut links, 2, (bx - bxi).abs(), cert.lip * dist_inf(&x, &xi), &x);

        if premise_holds {
            match opts.decrease {
                DecreaseCondition::Everywhere => record(&mut links, 3, bh - bx, lhs, &x),
                DecreaseCondition::Sublevel => {
                    if bx <= T::zero() {
                        record(&mut links, 3, bh, lhs, &x)
                    }
                }
            }
        }
    }

    Ok(ChainReport {
        samples,
        mismatch_e: e,
        lip_dagger,
        validity_lhs: lhs,
        premise_holds,
        links,
        violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validity_arithmetic() {
        let (ok, lhs): (bool, f64) = check_validity(&ValidityInputs {
            lip_b: 2.0,
            eta: 0.07637,
            epsilon: 9e-4,
            mismatch: 2.5e-4,
            lip_dagger: 2.2,
        });
        assert!(ok);
        assert!((lhs - (2.0 * (2.2 * 4.5e-4 + 2.5e-4) - 0.07637)).abs() < 1e-15);

        let (ok, lhs): (bool, f64) = check_validity(&ValidityInputs {
            lip_b: 1.0,
            eta: 0.1,
            epsilon: 0.2,
            mismatch: 0.0,
            lip_dagger: 1.0,
        });
        assert!(ok && (lhs - 0.0).abs() < 1e-15);
    }

    #[test]
    fn validity_at_zero_boundary_is_valid() {
        let (ok, lhs): (bool, f64) = check_validity(&ValidityInputs {
            lip_b: 1.0,
            eta: 0.5,
            epsilon: 1.0,
            mismatch: 0.0,
            lip_dagger: 1.0,
        });
        assert_eq!(lhs, 0.0);
        assert!(ok);
    }
}
