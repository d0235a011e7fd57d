use std::f64::consts::PI;

use barrier_transfer::benchmarks::{
    dc_motor_dynamics, load_benchmark, pendulum_dynamics, quadrotor_dynamics, DcMotorParams,
    PendulumParams, Scale, BENCHMARK_NAMES,
};
use barrier_transfer::model::{
    clamp_to_box, region_contains, AxisBox, BarrierCertificate, BarrierShape, ControlLaw, RegionKind,
    RegionSpec, SaturatedAffine, SaturationProfile,
};
use barrier_transfer::scalar::dist_inf;
use barrier_transfer::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn bx(lo: &[f64], hi: &[f64]) -> AxisBox<f64> {
    AxisBox::new(lo.to_vec(), hi.to_vec()).unwrap()
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

#[test]
fn region_membership_examples() {
    let unit = RegionSpec::boxed(bx(&[-1.0, -1.0], &[1.0, 1.0]));
    assert!(region_contains(&unit, &[0.0, 0.0]).unwrap());

    let s = PI / 6.0;
    let outside = RegionSpec::complement_of(bx(&[-s, -s], &[s, s]));
    assert!(!region_contains(&outside, &[0.0, 0.0]).unwrap());
    assert!(region_contains(&outside, &[0.6, 0.0]).unwrap());

    let motor_unsafe = RegionSpec::boxed(bx(&[0.5, 0.06], &[0.7, 1.0]));
    assert!(region_contains(&motor_unsafe, &[0.6, 0.07]).unwrap());
    assert!(!region_contains(&motor_unsafe, &[0.6, 0.05]).unwrap());
}

#[test]
fn complement_boundary_counts_as_unsafe() {
    let r = RegionSpec::complement_of(bx(&[-1.0], &[1.0]));
    assert!(region_contains(&r, &[1.0]).unwrap());
    assert!(!region_contains(&r, &[0.999]).unwrap());
}

#[test]
fn union_membership_and_errors() {
    let u = RegionSpec::union(vec![bx(&[0.0], &[1.0]), bx(&[2.0], &[3.0])]).unwrap();
    assert_eq!(u.kind(), RegionKind::Union);
    assert!(region_contains(&u, &[2.5]).unwrap());
    assert!(!region_contains(&u, &[1.5]).unwrap());
    assert!(matches!(
        region_contains(&u, &[0.5, 0.5]),
        Err(Error::DimensionMismatch { .. })
    ));
    assert!(RegionSpec::<f64>::union(vec![]).is_err());
}

#[test]
fn box_construction_rejects_bad_bounds() {
    assert!(AxisBox::new(vec![1.0], vec![0.0]).is_err());
    assert!(AxisBox::new(vec![0.0, 0.0], vec![1.0]).is_err());
    assert!(AxisBox::new(vec![f64::NAN], vec![1.0]).is_err());
}

#[test]
fn clamp_examples() {
    let u = bx(&[-10.0], &[10.0]);
    assert_eq!(clamp_to_box(&u, &[3.5]), vec![3.5]);
    assert_eq!(clamp_to_box(&u, &[12.0]), vec![10.0]);
    let sq = bx(&[-1.0, -1.0], &[1.0, 1.0]);
    assert_eq!(clamp_to_box(&sq, &[-2.0, 0.5]), vec![-1.0, 0.5]);
}

proptest! {
    #[test]
    fn clamp_is_idempotent_non_expansive_and_inside(
        a in prop::collection::vec(-5.0f64..5.0, 3),
        b in prop::collection::vec(-5.0f64..5.0, 3),
    ) {
        let bb = bx(&[-1.0, 0.0, -2.0], &[1.0, 0.5, 3.0]);
        let ca = clamp_to_box(&bb, &a);
        let cb = clamp_to_box(&bb, &b);
        prop_assert!(bb.contains(&ca));
        prop_assert_eq!(clamp_to_box(&bb, &ca), ca.clone());
        prop_assert!(dist_inf(&ca, &cb) <= dist_inf(&a, &b));
    }

    #[test]
    fn saturated_affine_bound_is_sound(
        lin in prop::collection::vec(-3.0f64..3.0, 2),
        sat in prop::collection::vec(-3.0f64..3.0, 2),
        s in 0.0f64..2.0,
        tanh in any::<bool>(),
        p in prop::collection::vec(-2.0f64..2.0, 2),
        q in prop::collection::vec(-2.0f64..2.0, 2),
    ) {
        let profile = if tanh { SaturationProfile::Tanh } else { SaturationProfile::Clip };
        let law = SaturatedAffine::new(vec![lin], vec![0.1], vec![sat], vec![s]).unwrap().with_profile(profile);
        let mut fp = [0.0];
        let mut fq = [0.0];
        law.apply(&p, &mut fp);
        law.apply(&q, &mut fq);
        let d = dist_inf(&p, &q);
        prop_assume!(d > 1e-9);
        prop_assert!((fp[0] - fq[0]).abs() <= law.lipschitz_bound() * d * (1.0 + 1e-12) + 1e-15);
    }
}

#[test]
fn tanh_profile_is_bounded_and_unit_slope_at_origin() {
    let law = SaturatedAffine::new(vec![vec![0.0]], vec![0.0], vec![vec![1.0]], vec![0.5])
        .unwrap()
        .with_profile(SaturationProfile::Tanh);
    let mut o = [0.0f64];
    law.apply(&[100.0], &mut o);
    assert!(o[0] <= 0.5 && o[0] > 0.4999);
    law.apply(&[1e-6], &mut o);
    assert!((o[0] - 1e-6).abs() < 1e-15);
}

#[test]
fn control_law_output_is_clamped() {
    let law = SaturatedAffine::new(vec![vec![10.0]], vec![0.0], vec![], vec![]).unwrap();
    let k = ControlLaw::affine(law, bx(&[-1.0], &[1.0]));
    assert_eq!(k.eval(&[0.5]).unwrap(), vec![1.0]);
    assert_eq!(k.eval(&[-0.05]).unwrap(), vec![-0.5]);
    assert_eq!(k.lip().unwrap(), 10.0);
}

#[test]
fn certificate_requires_positive_eta() {
    let shape = BarrierShape::Polyhedral {
        rows: vec![vec![1.0], vec![-1.0]],
        offsets: vec![-0.5, -0.5],
    };
    assert!(matches!(
        BarrierCertificate::new(shape.clone(), 1.0, 0.0),
        Err(Error::NonPositiveEta(_))
    ));
    let c = BarrierCertificate::new(shape, 1.0, 0.1).unwrap();
    assert_eq!(c.eval(&[0.2]), -0.3);
}

#[test]
fn quadratic_barrier_lipschitz_covers_gradient() {
    // B(x) = x1² + 2 x2² - 1 on [-1,1]²: the gradient 1-norm peaks at a corner, 2 + 4
    let shape = BarrierShape::Quadratic {
        p: vec![vec![1.0, 0.0], vec![0.0, 2.0]],
        q: vec![0.0, 0.0],
        r: -1.0,
    };
    let l = shape.lipschitz_on(&bx(&[-1.0, -1.0], &[1.0, 1.0])).unwrap();
    assert!((l - 6.0).abs() < 1e-12);
    assert_eq!(shape.eval(&[1.0, 1.0]), 2.0);
}

#[test]
fn pendulum_spot_values() {
    let src = PendulumParams {
        m: 1.0,
        l: 1.0,
        tau: 0.01,
        g: 9.8,
    };
    let mut out = [0.0; 2];
    pendulum_dynamics(&[0.0, 0.0], &[0.0], &src, &mut out);
    assert_eq!(out, [0.0, 0.0]);
    pendulum_dynamics(&[0.1, 0.2], &[0.0], &src, &mut out);
    assert!(close(&out, &[0.102, 0.2 + 0.098 * 0.1f64.sin()], 1e-15));
    assert!((out[1] - 0.20978).abs() < 1e-5);

    let tgt = PendulumParams { m: 1.5, l: 1.5, ..src };
    assert!((tgt.g * tgt.tau / tgt.l - 0.065333333333).abs() < 1e-11);
    assert!((1.0 / (tgt.m * tgt.l * tgt.l) - 0.296296296296).abs() < 1e-11);
}

#[test]
fn dc_motor_spot_values() {
    let p = DcMotorParams {
        r: 1.0,
        l: 0.5,
        k: 0.01,
        j: 0.05,
        b: 1.0,
        tau: 0.01,
    };
    let mut out = [0.0; 2];
    dc_motor_dynamics(&[0.0, 0.0], &[0.0], &p, &mut out);
    assert_eq!(out, [0.0, 0.0]);
    dc_motor_dynamics(&[0.1, 0.05], &[0.5], &p, &mut out);
    assert!(close(&out, &[0.10799, 0.0402], 1e-12));
}

#[test]
fn quadrotor_spot_values() {
    let mut out = [0.0; 4];
    quadrotor_dynamics(&[0.0; 4], &[0.0, 0.0], 0.01, 1.0, &mut out);
    assert_eq!(out, [0.0; 4]);
    quadrotor_dynamics(&[1.0, 1.0, 0.0, 0.0], &[1.0, 0.0], 0.01, 1.0, &mut out);
    assert!(close(&out, &[1.01005, 1.01, 0.0, 0.0], 1e-15));
    quadrotor_dynamics(&[1.0, 1.0, 0.0, 0.0], &[1.0, 0.0], 0.01, -1.0, &mut out);
    assert!(close(&out, &[1.00995, 0.99, 0.0, 0.0], 1e-15));
}

// sampled difference quotients against the declared constants, 10⁴ pairs per system
#[test]
fn declared_system_constants_are_sound() {
    for name in BENCHMARK_NAMES {
        let def = load_benchmark::<f64>(name, Scale::Desk).unwrap();
        for sys in [&def.source, &def.target] {
            let (lx, lu) = sys.lips().unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            let draw = |b: &AxisBox<f64>, rng: &mut ChaCha8Rng| -> Vec<f64> {
                (0..b.dim())
                    .map(|i| rng.gen_range(b.lower()[i]..=b.upper()[i]))
                    .collect()
            };
            for _ in 0..10_000 {
                let (x, y) = (draw(&sys.state_box, &mut rng), draw(&sys.state_box, &mut rng));
                let (u, v) = (draw(&sys.input_box, &mut rng), draw(&sys.input_box, &mut rng));
                let lhs = dist_inf(&sys.step(&x, &u), &sys.step(&y, &v));
                let rhs = lx * dist_inf(&x, &y) + lu * dist_inf(&u, &v);
                assert!(lhs <= rhs + 1e-9, "{}: {lhs} > {rhs}", sys.name);
            }
        }
    }
}
