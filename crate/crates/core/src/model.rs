//! Domain types shared across the crate: boxes and regions, discrete-time
//! control systems, feedback laws, barrier certificates and safety specs.
//!
//! Every norm here is the infinity norm.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::neural::{Mlp, Workspace};
use crate::scalar::Real;

/// Axis-aligned box `[lower, upper]`.
#[derive(Clone, Debug, PartialEq)]
pub struct AxisBox<T> {
    lower: Vec<T>,
    upper: Vec<T>,
}

impl<T: Real> AxisBox<T> {
    pub fn new(lower: Vec<T>, upper: Vec<T>) -> Result<Self> {
        if lower.is_empty() {
            return Err(Error::InvalidBox("dimension must be at least 1".into()));
        }
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        for (i, (l, u)) in lower.iter().zip(&upper).enumerate() {
            if !l.is_finite() || !u.is_finite() || l > u {
                return Err(Error::InvalidBox(format!(
                    "axis {i}: lower {l} must not exceed upper {u}"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    /// The cube `[lo, hi]^dim`.
    pub fn cube(dim: usize, lo: T, hi: T) -> Result<Self> {
        Self::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[T] {
        &self.lower
    }

    pub fn upper(&self) -> &[T] {
        &self.upper
    }

    pub fn width(&self, axis: usize) -> T {
        self.upper[axis] - self.lower[axis]
    }

    pub fn center(&self) -> Vec<T> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(&l, &u)| (l + u) * T::half())
            .collect()
    }

    pub fn volume(&self) -> T {
        (0..self.dim()).fold(T::one(), |v, i| v * self.width(i))
    }

    pub fn is_degenerate(&self) -> bool {
        (0..self.dim()).any(|i| self.width(i) <= T::zero())
    }

    pub fn contains(&self, x: &[T]) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| l <= v && v <= u)
    }

    /// True when `other` lies entirely inside `self`.
    pub fn contains_box(&self, other: &AxisBox<T>) -> bool {
        other.dim() == self.dim()
            && (0..self.dim())
                .all(|i| self.lower[i] <= other.lower[i] && other.upper[i] <= self.upper[i])
    }

    /// Closed-set intersection test.
    pub fn intersects(&self, other: &AxisBox<T>) -> bool {
        other.dim() == self.dim() && self.intersects_bounds(&other.lower, &other.upper)
    }

    /// Closed-set intersection with the box `[lo, hi]` given as raw bounds.
    pub fn intersects_bounds(&self, lo: &[T], hi: &[T]) -> bool {
        (0..self.dim()).all(|i| self.lower[i] <= hi[i] && lo[i] <= self.upper[i])
    }

    /// Box grown by `margin` on every side of every axis.
    pub fn expanded(&self, margin: T) -> Self {
        Self {
            lower: self.lower.iter().map(|&l| l - margin).collect(),
            upper: self.upper.iter().map(|&u| u + margin).collect(),
        }
    }

    pub fn vertices(&self) -> impl Iterator<Item = Vec<T>> + '_ {
        let n = self.dim();
        assert!(n < 32, "vertex enumeration limited to fewer than 32 axes");
        (0u64..1u64 << n).map(move |mask| {
            (0..n)
                .map(|i| {
                    if mask >> i & 1 == 1 {
                        self.upper[i]
                    } else {
                        self.lower[i]
                    }
                })
                .collect()
        })
    }
}

impl<T: Real> fmt::Display for AxisBox<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = (0..self.dim())
            .map(|i| format!("[{}, {}]", self.lower[i], self.upper[i]))
            .collect();
        write!(f, "{}", parts.join(" x "))
    }
}

/// Per-axis projection of `x` onto `b`. Non-expansive and idempotent.
pub fn clamp_to_box<T: Real>(b: &AxisBox<T>, x: &[T]) -> Vec<T> {
    let mut out = x.to_vec();
    clamp_in_place(b, &mut out);
    out
}

pub fn clamp_in_place<T: Real>(b: &AxisBox<T>, x: &mut [T]) {
    debug_assert_eq!(b.dim(), x.len());
    for (v, (&l, &u)) in x.iter_mut().zip(b.lower.iter().zip(&b.upper)) {
        *v = v.max(l).min(u);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegionKind {
    Box,
    /// Inside the enclosing state box but outside the single member box.
    ComplementOfBox,
    Union,
}

/// Initial and unsafe sets: a box, a box complement, or a finite union of boxes.
#[derive(Clone, Debug, PartialEq)]
pub struct RegionSpec<T> {
    kind: RegionKind,
    members: Vec<AxisBox<T>>,
}

impl<T: Real> RegionSpec<T> {
    pub fn new(kind: RegionKind, members: Vec<AxisBox<T>>) -> Result<Self> {
        match kind {
            RegionKind::Box | RegionKind::ComplementOfBox if members.len() != 1 => {
                return Err(Error::InvalidRegion(format!(
                    "{kind:?} region needs exactly one member box, got {}",
                    members.len()
                )))
            }
            RegionKind::Union if members.is_empty() => {
                return Err(Error::InvalidRegion("union must be non-empty".into()))
            }
            _ => {}
        }
        let dim = members[0].dim();
        if let Some(m) = members.iter().find(|m| m.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: m.dim(),
            });
        }
        Ok(Self { kind, members })
    }

    pub fn boxed(b: AxisBox<T>) -> Self {
        Self {
            kind: RegionKind::Box,
            members: vec![b],
        }
    }

    pub fn complement_of(b: AxisBox<T>) -> Self {
        Self {
            kind: RegionKind::ComplementOfBox,
            members: vec![b],
        }
    }

    pub fn union(members: Vec<AxisBox<T>>) -> Result<Self> {
        Self::new(RegionKind::Union, members)
    }

    pub fn kind(&self) -> RegionKind {
        self.kind
    }

    pub fn members(&self) -> &[AxisBox<T>] {
        &self.members
    }

    pub fn dim(&self) -> usize {
        self.members[0].dim()
    }

    /// Every member must lie inside the enclosing state box.
    pub fn validate_within(&self, state_box: &AxisBox<T>) -> Result<()> {
        for m in &self.members {
            if m.dim() != state_box.dim() {
                return Err(Error::DimensionMismatch {
                    expected: state_box.dim(),
                    got: m.dim(),
                });
            }
            if !state_box.contains_box(m) {
                return Err(Error::InvalidRegion(format!(
                    "member {m} is not inside the state box {state_box}"
                )));
            }
        }
        Ok(())
    }

    /// Conservative test: true whenever the closed cell may share a point with the region.
    /// Cells straddling a region boundary count as intersecting.
    pub fn may_intersect(&self, cell: &AxisBox<T>) -> bool {
        self.may_intersect_bounds(&cell.lower, &cell.upper)
    }

    pub fn may_intersect_bounds(&self, lo: &[T], hi: &[T]) -> bool {
        match self.kind {
            RegionKind::Box | RegionKind::Union => {
                self.members.iter().any(|m| m.intersects_bounds(lo, hi))
            }
            // A cell strictly inside the open member box is the only way to miss
            // the complement; touching the member boundary counts as a hit.
            RegionKind::ComplementOfBox => {
                let m = &self.members[0];
                !(0..lo.len()).all(|i| m.lower[i] < lo[i] && hi[i] < m.upper[i])
            }
        }
    }
}

/// Membership under the kind semantics. The complement kind excludes the
/// member box interior and keeps its boundary (a set written `X \ [a, b]`
/// is treated as closed so that boundary states count as unsafe).
pub fn region_contains<T: Real>(r: &RegionSpec<T>, x: &[T]) -> Result<bool> {
    if x.len() != r.dim() {
        return Err(Error::DimensionMismatch {
            expected: r.dim(),
            got: x.len(),
        });
    }
    Ok(match r.kind {
        RegionKind::Box | RegionKind::Union => r.members.iter().any(|m| m.contains(x)),
        RegionKind::ComplementOfBox => {
            let m = &r.members[0];
            !(0..x.len()).all(|i| m.lower[i] < x[i] && x[i] < m.upper[i])
        }
    })
}

pub type TransitionFn<T> = Arc<dyn Fn(&[T], &[T], &mut [T]) + Send + Sync>;

/// Discrete-time control system `x(t+1) = f(x(t), u(t))` treated as a black box.
#[derive(Clone)]
pub struct DtSystem<T> {
    pub name: String,
    pub state_box: AxisBox<T>,
    pub input_box: AxisBox<T>,
    transition: TransitionFn<T>,
    /// Lipschitz constant of `f` in the state argument.
    pub lip_state: Option<T>,
    /// Lipschitz constant of `f` in the input argument.
    pub lip_input: Option<T>,
}

impl<T: Real> DtSystem<T> {
    pub fn new<F>(name: impl Into<String>, state_box: AxisBox<T>, input_box: AxisBox<T>, f: F) -> Self
    where
        F: Fn(&[T], &[T], &mut [T]) + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            state_box,
            input_box,
            transition: Arc::new(f),
            lip_state: None,
            lip_input: None,
        }
    }

    pub fn with_lipschitz(mut self, lip_state: T, lip_input: T) -> Self {
        self.lip_state = Some(lip_state);
        self.lip_input = Some(lip_input);
        self
    }

    pub fn state_dim(&self) -> usize {
        self.state_box.dim()
    }

    pub fn input_dim(&self) -> usize {
        self.input_box.dim()
    }

    pub fn step_into(&self, x: &[T], u: &[T], out: &mut [T]) {
        debug_assert_eq!(x.len(), self.state_dim());
        debug_assert_eq!(u.len(), self.input_dim());
        (self.transition)(x, u, out)
    }

    pub fn step(&self, x: &[T], u: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.state_dim()];
        self.step_into(x, u, &mut out);
        out
    }

    pub fn lips(&self) -> Result<(T, T)> {
        Ok((
            self.lip_state.ok_or(Error::MissingLipschitz("system state constant"))?,
            self.lip_input.ok_or(Error::MissingLipschitz("system input constant"))?,
        ))
    }
}

impl<T: Real> fmt::Debug for DtSystem<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DtSystem")
            .field("name", &self.name)
            .field("state_box", &self.state_box)
            .field("input_box", &self.input_box)
            .field("lip_state", &self.lip_state)
            .field("lip_input", &self.lip_input)
            .finish()
    }
}

/// `k(x) = linear·x + offset + sat(saturated·x, ±saturation)`, then clamped to the input box.
///
/// With `saturated` empty this is plain affine feedback.
#[derive(Clone, Debug, PartialEq)]
pub struct SaturatedAffine<T> {
    pub linear: Vec<Vec<T>>,
    pub offset: Vec<T>,
    pub saturated: Vec<Vec<T>>,
    pub saturation: Vec<T>,
    pub profile: SaturationProfile,
}

/// Shape of the bounded term `σ_s(z)` with `|σ_s| ≤ s` and slope in `[0, 1]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Deserialize, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SaturationProfile {
    /// `clamp(z, -s, s)`
    #[default]
    Clip,
    /// `s·tanh(z/s)`; no kinks, which makes the inverse controller easier to learn.
    Tanh,
}

impl SaturationProfile {
    fn apply<T: Real>(self, z: T, s: T) -> T {
        match self {
            Self::Clip => z.max(-s).min(s),
            Self::Tanh if s > T::zero() => s * (z / s).tanh(),
            Self::Tanh => T::zero(),
        }
    }
}

impl<T: Real> SaturatedAffine<T> {
    pub fn new(
        linear: Vec<Vec<T>>,
        offset: Vec<T>,
        saturated: Vec<Vec<T>>,
        saturation: Vec<T>,
    ) -> Result<Self> {
        let m = linear.len();
        if m == 0 || offset.len() != m {
            return Err(Error::Config("controller gain/offset shapes disagree".into()));
        }
        let n = linear[0].len();
        if linear.iter().any(|r| r.len() != n) {
            return Err(Error::Config("ragged controller gain matrix".into()));
        }
        if !saturated.is_empty()
            && (saturated.len() != m
                || saturation.len() != m
                || saturated.iter().any(|r| r.len() != n)
                || saturation.iter().any(|&s| s < T::zero()))
        {
            return Err(Error::Config("saturated gain shape or bound invalid".into()));
        }
        Ok(Self {
            linear,
            offset,
            saturated,
            saturation,
            profile: SaturationProfile::Clip,
        })
    }

    pub fn with_profile(mut self, profile: SaturationProfile) -> Self {
        self.profile = profile;
        self
    }

    pub fn apply(&self, x: &[T], out: &mut [T]) {
        for (i, o) in out.iter_mut().enumerate() {
            let mut v = self.offset[i] + dot(&self.linear[i], x);
            if let Some(row) = self.saturated.get(i) {
                let s = self.saturation[i];
                v = v + self.profile.apply(dot(row, x), s);
            }
            *o = v;
        }
    }

    /// Exact infinity-norm operator bound: per row the slope is
    /// `linear + θ·saturated` for some `θ ∈ [0, 1]`, and the 1-norm is convex in θ.
    pub fn lipschitz_bound(&self) -> T {
        (0..self.linear.len())
            .map(|i| {
                let base: T = self.linear[i].iter().map(|v| v.abs()).sum();
                match self.saturated.get(i) {
                    Some(row) => {
                        let full: T = self.linear[i]
                            .iter()
                            .zip(row)
                            .map(|(&a, &b)| (a + b).abs())
                            .sum();
                        base.max(full)
                    }
                    None => base,
                }
            })
            .fold(T::zero(), T::max)
    }
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ControlKind {
    Analytic,
    Neural,
}

#[derive(Clone)]
pub enum FeedbackMap<T> {
    Affine(SaturatedAffine<T>),
    Neural(Arc<Mlp<T>>),
    Custom(Arc<dyn Fn(&[T], &mut [T]) + Send + Sync>),
}

/// State feedback `k: X -> U`, clamped to the owning system's input box.
#[derive(Clone)]
pub struct ControlLaw<T> {
    map: FeedbackMap<T>,
    pub input_box: AxisBox<T>,
    pub lip: Option<T>,
}

impl<T: Real> ControlLaw<T> {
    /// Analytic saturated-affine law; the Lipschitz constant is computed exactly.
    pub fn affine(law: SaturatedAffine<T>, input_box: AxisBox<T>) -> Self {
        let lip = law.lipschitz_bound();
        Self {
            map: FeedbackMap::Affine(law),
            input_box,
            lip: Some(lip),
        }
    }

    /// Neural law; the Lipschitz constant is the network's sound product bound.
    pub fn neural(net: Mlp<T>, input_box: AxisBox<T>) -> Self {
        let lip = net.lipschitz_upper_bound();
        Self {
            map: FeedbackMap::Neural(Arc::new(net)),
            input_box,
            lip: Some(lip),
        }
    }

    pub fn custom<F>(f: F, input_box: AxisBox<T>, lip: Option<T>) -> Self
    where
        F: Fn(&[T], &mut [T]) + Send + Sync + 'static,
    {
        Self {
            map: FeedbackMap::Custom(Arc::new(f)),
            input_box,
            lip,
        }
    }

    pub fn kind(&self) -> ControlKind {
        match self.map {
            FeedbackMap::Neural(_) => ControlKind::Neural,
            _ => ControlKind::Analytic,
        }
    }

    pub fn map(&self) -> &FeedbackMap<T> {
        &self.map
    }

    pub fn network(&self) -> Option<&Mlp<T>> {
        match &self.map {
            FeedbackMap::Neural(n) => Some(n),
            _ => None,
        }
    }

    pub fn output_dim(&self) -> usize {
        self.input_box.dim()
    }

    pub fn lip(&self) -> Result<T> {
        self.lip.ok_or(Error::MissingLipschitz("controller"))
    }

    /// Unclamped map output.
    pub fn raw_with(&self, x: &[T], ws: &mut Workspace<T>, out: &mut [T]) -> Result<()> {
        match &self.map {
            FeedbackMap::Affine(a) => a.apply(x, out),
            FeedbackMap::Neural(n) => n.forward_with(x, ws, out)?,
            FeedbackMap::Custom(f) => f(x, out),
        }
        Ok(())
    }

    /// Clamped output, reusing `ws` for neural evaluation.
    pub fn eval_with(&self, x: &[T], ws: &mut Workspace<T>, out: &mut [T]) -> Result<()> {
        self.raw_with(x, ws, out)?;
        clamp_in_place(&self.input_box, out);
        Ok(())
    }

    pub fn eval_into(&self, x: &[T], out: &mut [T]) -> Result<()> {
        self.eval_with(x, &mut Workspace::default(), out)
    }

    pub fn eval(&self, x: &[T]) -> Result<Vec<T>> {
        let mut out = vec![T::zero(); self.output_dim()];
        self.eval_into(x, &mut out)?;
        Ok(out)
    }
}

impl<T: Real> fmt::Debug for ControlLaw<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ControlLaw")
            .field("kind", &self.kind())
            .field("input_box", &self.input_box)
            .field("lip", &self.lip)
            .finish()
    }
}

#[derive(Clone)]
pub enum BarrierShape<T> {
    /// `xᵀPx + qᵀx + r`
    Quadratic { p: Vec<Vec<T>>, q: Vec<T>, r: T },
    /// `max_i (rows_i · x + offsets_i)`
    Polyhedral { rows: Vec<Vec<T>>, offsets: Vec<T> },
    Custom(Arc<dyn Fn(&[T]) -> T + Send + Sync>),
}

impl<T: Real> BarrierShape<T> {
    pub fn eval(&self, x: &[T]) -> T {
        match self {
            BarrierShape::Quadratic { p, q, r } => {
                let mut acc = *r + dot(q, x);
                for (i, row) in p.iter().enumerate() {
                    acc = acc + x[i] * dot(row, x);
                }
                acc
            }
            BarrierShape::Polyhedral { rows, offsets } => rows
                .iter()
                .zip(offsets)
                .map(|(row, &o)| dot(row, x) + o)
                .fold(T::neg_infinity(), T::max),
            BarrierShape::Custom(f) => f(x),
        }
    }

    /// Infinity-norm Lipschitz constant valid on `domain`, when it can be derived
    /// from the shape: the largest 1-norm of the (sub)gradient.
    pub fn lipschitz_on(&self, domain: &AxisBox<T>) -> Option<T> {
        match self {
            BarrierShape::Polyhedral { rows, .. } => Some(
                rows.iter()
                    .map(|r| r.iter().map(|v| v.abs()).sum::<T>())
                    .fold(T::zero(), T::max),
            ),
            BarrierShape::Quadratic { p, q, .. } => {
                // The gradient (P + Pᵀ)x + q is affine, its 1-norm is convex,
                // so the maximum over a box sits at a vertex.
                let n = q.len();
                let best = domain
                    .vertices()
                    .map(|v| {
                        (0..n)
                            .map(|i| {
                                let mut g = q[i];
                                for j in 0..n {
                                    g = g + (p[i][j] + p[j][i]) * v[j];
                                }
                                g.abs()
                            })
                            .sum::<T>()
                    })
                    .fold(T::zero(), T::max);
                Some(best)
            }
            BarrierShape::Custom(_) => None,
        }
    }
}

/// Barrier certificate `B` with Lipschitz constant and margin `η > 0`.
#[derive(Clone)]
pub struct BarrierCertificate<T> {
    pub shape: BarrierShape<T>,
    pub lip: T,
    pub eta: T,
}

impl<T: Real> BarrierCertificate<T> {
    pub fn new(shape: BarrierShape<T>, lip: T, eta: T) -> Result<Self> {
        if !(eta > T::zero()) || !eta.is_finite() {
            return Err(Error::NonPositiveEta(eta.as_f64()));
        }
        if !(lip >= T::zero()) || !lip.is_finite() {
            return Err(Error::MissingLipschitz("barrier (must be finite and non-negative)"));
        }
        Ok(Self { shape, lip, eta })
    }

    pub fn eval(&self, x: &[T]) -> T {
        self.shape.eval(x)
    }

    /// Same certificate with a different Lipschitz constant (used by negative controls).
    pub fn with_lip(&self, lip: T) -> Self {
        Self {
            shape: self.shape.clone(),
            lip,
            eta: self.eta,
        }
    }
}

impl<T: Real> fmt::Debug for BarrierCertificate<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BarrierCertificate")
            .field("lip", &self.lip)
            .field("eta", &self.eta)
            .finish()
    }
}

#[derive(Clone, Debug)]
pub struct SafetySpec<T> {
    pub initial: RegionSpec<T>,
    pub unsafe_set: RegionSpec<T>,
    /// Simulation length only.
    pub horizon: usize,
}

impl<T: Real> SafetySpec<T> {
    pub fn new(
        initial: RegionSpec<T>,
        unsafe_set: RegionSpec<T>,
        horizon: usize,
        state_box: &AxisBox<T>,
    ) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::Config("horizon must be positive".into()));
        }
        initial.validate_within(state_box)?;
        unsafe_set.validate_within(state_box)?;
        Ok(Self {
            initial,
            unsafe_set,
            horizon,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn b(lo: &[f64], hi: &[f64]) -> AxisBox<f64> {
        AxisBox::new(lo.to_vec(), hi.to_vec()).unwrap()
    }

    #[test]
    fn box_validation() {
        assert!(AxisBox::<f64>::new(vec![], vec![]).is_err());
        assert!(AxisBox::new(vec![1.0], vec![0.0]).is_err());
        assert!(AxisBox::new(vec![0.0, 0.0], vec![1.0]).is_err());
        let c = AxisBox::cube(3, -1.0, 1.0).unwrap();
        assert_eq!(c.volume(), 8.0);
        assert_eq!(c.vertices().count(), 8);
    }

    #[test]
    fn region_examples() {
        let r = RegionSpec::boxed(b(&[-1.0, -1.0], &[1.0, 1.0]));
        assert!(region_contains(&r, &[0.0, 0.0]).unwrap());

        let s = PI / 6.0;
        let c = RegionSpec::complement_of(b(&[-s, -s], &[s, s]));
        assert!(!region_contains(&c, &[0.0, 0.0]).unwrap());
        assert!(region_contains(&c, &[0.6, 0.0]).unwrap());

        let dc = RegionSpec::boxed(b(&[0.5, 0.06], &[0.7, 1.0]));
        assert!(region_contains(&dc, &[0.6, 0.07]).unwrap());

        assert!(matches!(
            region_contains(&dc, &[0.6]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn union_region() {
        assert!(RegionSpec::<f64>::union(vec![]).is_err());
        let u = RegionSpec::union(vec![b(&[0.0], &[1.0]), b(&[2.0], &[3.0])]).unwrap();
        assert!(region_contains(&u, &[2.5]).unwrap());
        assert!(!region_contains(&u, &[1.5]).unwrap());
    }

    #[test]
    fn region_within_state_box() {
        let x = b(&[-1.0], &[1.0]);
        assert!(RegionSpec::boxed(b(&[0.0], &[2.0])).validate_within(&x).is_err());
        assert!(RegionSpec::boxed(b(&[0.0], &[0.5])).validate_within(&x).is_ok());
    }

    #[test]
    fn clamp_examples() {
        let u = b(&[-10.0], &[10.0]);
        assert_eq!(clamp_to_box(&u, &[3.5]), vec![3.5]);
        assert_eq!(clamp_to_box(&u, &[12.0]), vec![10.0]);
        let sq = b(&[-1.0, -1.0], &[1.0, 1.0]);
        assert_eq!(clamp_to_box(&sq, &[-2.0, 0.5]), vec![-1.0, 0.5]);
    }

    #[test]
    fn may_intersect_is_conservative_at_boundaries() {
        let s = 0.5;
        let c = RegionSpec::complement_of(b(&[-s, -s], &[s, s]));
        // cell touching the member boundary from inside
        assert!(c.may_intersect(&b(&[0.4, 0.0], &[0.5, 0.1])));
        assert!(!c.may_intersect(&b(&[0.3, 0.0], &[0.4, 0.1])));
        let r = RegionSpec::boxed(b(&[0.5, 0.06], &[0.7, 1.0]));
        assert!(r.may_intersect(&b(&[0.49, 0.0], &[0.5, 0.06])));
    }

    #[test]
    fn saturated_affine_lipschitz() {
        let law = SaturatedAffine::new(
            vec![vec![-1.0, 0.0]],
            vec![0.0],
            vec![vec![-2.0, -0.5]],
            vec![0.4],
        )
        .unwrap();
        assert_eq!(law.lipschitz_bound(), 3.5);
        let mut out = [0.0f64];
        law.apply(&[0.1, 0.0], &mut out);
        assert!((out[0] - (-0.1 - 0.2)).abs() < 1e-15);
        law.apply(&[1.0, 0.0], &mut out);
        assert!((out[0] - (-1.0 - 0.4)).abs() < 1e-15);
    }

    #[test]
    fn barrier_shapes() {
        let poly = BarrierShape::Polyhedral {
            rows: vec![vec![1.0, 0.5], vec![-1.0, -0.5]],
            offsets: vec![-1.0, -1.0],
        };
        assert_eq!(poly.eval(&[0.0, 0.0]), -1.0);
        assert_eq!(poly.eval(&[2.0, 0.0]), 1.0);
        let dom = AxisBox::cube(2, -1.0, 1.0).unwrap();
        assert_eq!(poly.lipschitz_on(&dom), Some(1.5));

        let quad = BarrierShape::Quadratic {
            p: vec![vec![1.0, 0.0], vec![0.0, 2.0]],
            q: vec![0.0, 0.0],
            r: -1.0,
        };
        assert_eq!(quad.eval(&[1.0, 1.0]), 2.0);
        // grad = (2x, 4y); at a vertex 2 + 4 = 6
        assert_eq!(quad.lipschitz_on(&dom), Some(6.0));
    }

    #[test]
    fn eta_must_be_positive() {
        let shape = BarrierShape::Custom(Arc::new(|x: &[f64]| x[0]));
        assert!(matches!(
            BarrierCertificate::new(shape.clone(), 1.0, 0.0),
            Err(Error::NonPositiveEta(_))
        ));
        assert!(BarrierCertificate::new(shape, 1.0, 0.1).is_ok());
    }
}
