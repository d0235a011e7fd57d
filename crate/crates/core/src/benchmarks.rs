//! The three shipped case studies and the builder that turns any
//! [`ProblemDef`] into ready-to-run objects.

use std::fmt;
use std::str::FromStr;

use crate::certify::DecreaseCondition;
use crate::config::{BoxDef, CertificateDef, DynamicsDef, PaperAnchor, ProblemDef, RegionDef, SystemDef};
use crate::error::{Error, Result};
use crate::lipschitz::{joint_lipschitz_with, EstimatorConfig};
use crate::model::{
    AxisBox, BarrierCertificate, BarrierShape, ControlLaw, DtSystem, RegionSpec, SafetySpec,
    SaturatedAffine,
};
use crate::scalar::Real;
use crate::transfer::TransferConfig;

pub const BENCHMARK_NAMES: [&str; 3] = ["pendulum", "dc-motor", "quadrotor"];

const PENDULUM_TOML: &str = include_str!("../benchmarks/pendulum.toml");
const DC_MOTOR_TOML: &str = include_str!("../benchmarks/dc-motor.toml");
const QUADROTOR_TOML: &str = include_str!("../benchmarks/quadrotor.toml");

pub fn benchmark_source(name: &str) -> Result<&'static str> {
    match name {
        "pendulum" => Ok(PENDULUM_TOML),
        "dc-motor" => Ok(DC_MOTOR_TOML),
        "quadrotor" => Ok(QUADROTOR_TOML),
        other => Err(Error::UnknownBenchmark(other.to_string())),
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Scale {
    Paper,
    #[default]
    Desk,
}

impl FromStr for Scale {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Scale::Paper),
            "desk" => Ok(Scale::Desk),
            other => Err(Error::Config(format!("unknown scale '{other}'"))),
        }
    }
}

impl fmt::Display for Scale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scale::Paper => "paper",
            Scale::Desk => "desk",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PendulumParams {
    pub m: f64,
    pub l: f64,
    pub tau: f64,
    pub g: f64,
}

/// `(θ + τω, ω + (gτ/l) sin(θ + u/(m l²)))`, with the input inside the sine as printed.
pub fn pendulum_dynamics<T: Real>(x: &[T], u: &[T], p: &PendulumParams, out: &mut [T]) {
    let tau = T::lit(p.tau);
    let c = T::lit(p.g * p.tau / p.l);
    let inv = T::lit(1.0 / (p.m * p.l * p.l));
    out[0] = x[0] + tau * x[1];
    out[1] = x[1] + c * (x[0] + u[0] * inv).sin();
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DcMotorParams {
    pub r: f64,
    pub l: f64,
    pub k: f64,
    pub j: f64,
    pub b: f64,
    pub tau: f64,
}

pub fn dc_motor_dynamics<T: Real>(x: &[T], u: &[T], p: &DcMotorParams, out: &mut [T]) {
    let tau = T::lit(p.tau);
    let (i, w) = (x[0], x[1]);
    out[0] = i + tau * (T::lit(-p.r / p.l) * i - T::lit(p.k / p.l) * w + u[0] * T::lit(1.0 / p.l));
    out[1] = w + tau * (T::lit(p.k / p.j) * i - T::lit(p.b / p.j) * w);
}

/// `A x + sign · B u` for the planar double integrator.
pub fn quadrotor_dynamics<T: Real>(x: &[T], u: &[T], tau: f64, sign: f64, out: &mut [T]) {
    let t = T::lit(tau);
    let t2 = T::lit(sign * tau * tau / 2.0);
    let ts = T::lit(sign * tau);
    out[0] = x[0] + t * x[1] + t2 * u[0];
    out[1] = x[1] + ts * u[0];
    out[2] = x[2] + t * x[3] + t2 * u[1];
    out[3] = x[3] + ts * u[1];
}

fn to_box<T: Real>(b: &BoxDef) -> Result<AxisBox<T>> {
    AxisBox::new(
        b.lower.iter().map(|&v| T::lit(v)).collect(),
        b.upper.iter().map(|&v| T::lit(v)).collect(),
    )
}

fn to_region<T: Real>(r: &RegionDef) -> Result<RegionSpec<T>> {
    RegionSpec::new(r.kind, r.members.iter().map(to_box).collect::<Result<_>>()?)
}

fn lit_rows<T: Real>(rows: &[Vec<f64>]) -> Vec<Vec<T>> {
    rows.iter()
        .map(|r| r.iter().map(|&v| T::lit(v)).collect())
        .collect()
}

/// Exact infinity-norm constants where the dynamics family admits them.
fn analytic_lips(d: &DynamicsDef) -> Option<(f64, f64)> {
    match d {
        DynamicsDef::Pendulum { m, l, tau, g } => {
            let c = g * tau / l;
            Some(((1.0 + tau).max(1.0 + c), c / (m * l * l)))
        }
        DynamicsDef::DcMotor { r, l, k, j, b, tau } => {
            let row1 = (1.0 - tau * r / l).abs() + tau * k / l;
            let row2 = tau * k / j + (1.0 - tau * b / j).abs();
            Some((row1.max(row2), tau / l))
        }
        DynamicsDef::Quadrotor { tau, .. } => Some((1.0 + tau, tau + tau * tau / 2.0)),
        DynamicsDef::Linear { a, b } => {
            let norm = |m: &Vec<Vec<f64>>| {
                m.iter()
                    .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
                    .fold(0.0, f64::max)
            };
            Some((norm(a), norm(b)))
        }
    }
}

fn build_system<T: Real>(
    name: &str,
    def: &SystemDef,
    state_box: &AxisBox<T>,
    estimator: &EstimatorConfig,
) -> Result<DtSystem<T>> {
    let input_box = to_box::<T>(&def.input_box)?;
    let n = state_box.dim();
    let sys = match def.dynamics.clone() {
        DynamicsDef::Pendulum { m, l, tau, g } => {
            check_dims(name, n, input_box.dim(), 2, 1)?;
            let p = PendulumParams { m, l, tau, g };
            DtSystem::new(name, state_box.clone(), input_box, move |x, u, out| {
                pendulum_dynamics(x, u, &p, out)
            })
        }
        DynamicsDef::DcMotor { r, l, k, j, b, tau } => {
            check_dims(name, n, input_box.dim(), 2, 1)?;
            let p = DcMotorParams { r, l, k, j, b, tau };
            DtSystem::new(name, state_box.clone(), input_box, move |x, u, out| {
                dc_motor_dynamics(x, u, &p, out)
            })
        }
        DynamicsDef::Quadrotor { tau, sign } => {
            check_dims(name, n, input_box.dim(), 4, 2)?;
            DtSystem::new(name, state_box.clone(), input_box, move |x, u, out| {
                quadrotor_dynamics(x, u, tau, sign, out)
            })
        }
        DynamicsDef::Linear { a, b } => {
            let m = input_box.dim();
            if a.len() != n || a.iter().any(|r| r.len() != n) || b.len() != n || b.iter().any(|r| r.len() != m) {
                return Err(Error::Config(format!("{name}: A must be {n}x{n} and B {n}x{m}")));
            }
            let a: Vec<Vec<T>> = lit_rows(&a);
            let b: Vec<Vec<T>> = lit_rows(&b);
            DtSystem::new(name, state_box.clone(), input_box, move |x, u, out| {
                for (i, o) in out.iter_mut().enumerate() {
                    let ax = a[i].iter().zip(x).fold(T::zero(), |s, (&c, &v)| s + c * v);
                    *o = b[i].iter().zip(u).fold(ax, |s, (&c, &v)| s + c * v);
                }
            })
        }
    };
    let (lx, lu) = match (def.lip_state, def.lip_input) {
        (Some(lx), Some(lu)) => (T::lit(lx), T::lit(lu)),
        (lx, lu) => {
            let (ex, eu) = joint_lipschitz_with(&sys, estimator)?;
            (lx.map(T::lit).unwrap_or(ex), lu.map(T::lit).unwrap_or(eu))
        }
    };
    Ok(sys.with_lipschitz(lx, lu))
}

fn check_dims(name: &str, n: usize, m: usize, want_n: usize, want_m: usize) -> Result<()> {
    if n != want_n || m != want_m {
        return Err(Error::Config(format!(
            "{name}: this model needs a {want_n}-D state and {want_m}-D input, got {n} and {m}"
        )));
    }
    Ok(())
}

/// A fully built transfer problem at one scale.
#[derive(Clone, Debug)]
pub struct BenchmarkDef<T: Real> {
    pub name: String,
    pub scale: Scale,
    pub source: DtSystem<T>,
    pub target: DtSystem<T>,
    pub spec: SafetySpec<T>,
    pub source_controller: ControlLaw<T>,
    pub source_cbc: BarrierCertificate<T>,
    pub decrease: DecreaseCondition,
    pub epsilon_paper: T,
    pub epsilon_desk: T,
    pub transfer: TransferConfig,
    /// Reference constants for this case study, if any.
    pub paper_anchor: Option<PaperAnchor>,
}

impl<T: Real> BenchmarkDef<T> {
    /// The ε of the selected scale.
    pub fn epsilon(&self) -> T {
        match self.scale {
            Scale::Paper => self.epsilon_paper,
            Scale::Desk => self.epsilon_desk,
        }
    }

    pub fn from_problem(def: &ProblemDef, scale: Scale) -> Result<Self> {
        let state_box = to_box::<T>(&def.state_box)?;
        let estimator = EstimatorConfig {
            pairs: def.estimator.pairs,
            seed: def.estimator.seed,
            ..Default::default()
        };
        let mut src_def = def.source.clone();
        let mut tgt_def = def.target.clone();
        // fill in closed-form constants before falling back to sampling
        for s in [&mut src_def, &mut tgt_def] {
            if let Some((lx, lu)) = analytic_lips(&s.dynamics) {
                s.lip_state.get_or_insert(lx);
                s.lip_input.get_or_insert(lu);
            }
        }
        let source = build_system(&format!("{}-source", def.name), &src_def, &state_box, &estimator)?;
        let target = build_system(&format!("{}-target", def.name), &tgt_def, &state_box, &estimator)?;

        let spec = SafetySpec::new(
            to_region(&def.initial)?,
            to_region(&def.unsafe_set)?,
            def.horizon,
            &state_box,
        )?;

        let c = &def.controller;
        let m = source.input_dim();
        let law = SaturatedAffine::new(
            lit_rows(&c.linear),
            c.offset
                .clone()
                .unwrap_or_else(|| vec![0.0; m])
                .into_iter()
                .map(T::lit)
                .collect(),
            lit_rows(&c.saturated),
            c.saturation.iter().map(|&v| T::lit(v)).collect(),
        )?
        .with_profile(c.profile);
        if law.linear.len() != m || law.linear[0].len() != state_box.dim() {
            return Err(Error::Config("controller gain shape does not match the system".into()));
        }
        let mut source_controller = ControlLaw::affine(law, source.input_box.clone());
        if let Some(l) = c.lip {
            source_controller.lip = Some(T::lit(l));
        }

        let source_cbc = match &def.certificate {
            CertificateDef::Polyhedral {
                rows,
                offsets,
                eta,
                lip,
            } => {
                let shape = BarrierShape::Polyhedral {
                    rows: lit_rows(rows),
                    offsets: offsets.iter().map(|&v| T::lit(v)).collect(),
                };
                cert_with_lip(shape, *lip, *eta, &state_box)?
            }
            CertificateDef::Quadratic { p, q, r, eta, lip } => {
                let shape = BarrierShape::Quadratic {
                    p: lit_rows(p),
                    q: q.iter().map(|&v| T::lit(v)).collect(),
                    r: T::lit(*r),
                };
                cert_with_lip(shape, *lip, *eta, &state_box)?
            }
        };

        let scale_def = match scale {
            Scale::Paper => &def.paper,
            Scale::Desk => &def.desk,
        };
        Ok(Self {
            name: def.name.clone(),
            scale,
            source,
            target,
            spec,
            source_controller,
            source_cbc,
            decrease: def.decrease,
            epsilon_paper: T::lit(def.paper.epsilon),
            epsilon_desk: T::lit(def.desk.epsilon),
            transfer: def.transfer_config(scale_def)?,
            paper_anchor: def.paper_anchor,
        })
    }
}

fn cert_with_lip<T: Real>(
    shape: BarrierShape<T>,
    lip: Option<f64>,
    eta: f64,
    state_box: &AxisBox<T>,
) -> Result<BarrierCertificate<T>> {
    let lip = match lip {
        Some(l) => T::lit(l),
        // successors may leave the box slightly, so bound the gradient on a padded box
        None => shape
            .lipschitz_on(&state_box.expanded(T::one()))
            .ok_or(Error::MissingLipschitz("barrier"))?,
    };
    BarrierCertificate::new(shape, lip, T::lit(eta))
}

/// One of the shipped case studies at the requested scale.
pub fn load_benchmark<T: Real>(name: &str, scale: Scale) -> Result<BenchmarkDef<T>> {
    let def = ProblemDef::from_toml_str(benchmark_source(name)?)?;
    BenchmarkDef::from_problem(&def, scale)
}
