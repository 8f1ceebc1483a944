use std::f64::consts::PI;

use abstract_map::model::{SpringForce, SpringKind, SpringOrigin, SpringSpec};
use abstract_map::Vec2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FD_STEP: f64 = 1e-6;

fn spring(kind: usize, natural: f64, k: f64) -> SpringSpec {
    match kind {
        0 => SpringSpec::distance(0, 1, natural.abs(), k, SpringOrigin::Template),
        1 => SpringSpec::absolute_angle(0, 1, natural, k, SpringOrigin::Template),
        _ => SpringSpec::relative_angle(0, 1, 2, natural, k, SpringOrigin::Template),
    }
    .unwrap()
}

fn force_on(f: &SpringForce, i: usize) -> Vec2 {
    match i {
        0 => f.a,
        1 => f.b,
        _ => f.c.unwrap_or_default(),
    }
}

/// Central-difference gradient of the potential, negated.
fn numeric_force(s: &SpringSpec, positions: &[Vec2]) -> Vec<Vec2> {
    let mut p = positions.to_vec();
    (0..positions.len())
        .map(|i| {
            let mut out = [0.0; 2];
            for (axis, slot) in out.iter_mut().enumerate() {
                let base = p[i];
                let bump = if axis == 0 { Vec2::new(FD_STEP, 0.0) } else { Vec2::new(0.0, FD_STEP) };
                p[i] = base + bump;
                let up = s.potential(&p);
                p[i] = base - bump;
                let down = s.potential(&p);
                p[i] = base;
                *slot = -(up - down) / (2.0 * FD_STEP);
            }
            Vec2::new(out[0], out[1])
        })
        .collect()
}

/// Random configuration away from the angle wrap and the short-arm clamp.
fn random_case(rng: &mut ChaCha8Rng, kind: usize) -> (SpringSpec, Vec<Vec2>) {
    loop {
        let pts: Vec<Vec2> = (0..3)
            .map(|_| Vec2::new(rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0)))
            .collect();
        let natural = if kind == 0 { rng.gen_range(0.0..15.0) } else { rng.gen_range(-PI..PI) };
        let s = spring(kind, natural, rng.gen_range(0.01..1.0));
        let arms_ok = pts[0].distance(pts[1]) > 0.5 && pts[2].distance(pts[1]) > 0.5;
        let off_wrap = s.deviation(&pts).is_some_and(|d| d.abs() < PI - 0.05);
        if arms_ok && off_wrap {
            return (s, pts);
        }
    }
}

#[test]
fn gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for kind in 0..3 {
        for _ in 0..1000 {
            let (s, pts) = random_case(&mut rng, kind);
            let f = s.force(&pts);
            let fd = numeric_force(&s, &pts);
            let scale: f64 = fd.iter().map(|v| v.norm_squared()).sum::<f64>().sqrt();
            if scale < 1e-9 {
                continue;
            }
            let err: f64 = (0..3)
                .map(|i| (force_on(&f, i) - fd[i]).norm_squared())
                .sum::<f64>()
                .sqrt();
            assert!(err / scale < 1e-4, "kind {kind}: {err} vs {scale} for {s:?} at {pts:?}");
        }
    }
}

fn coord() -> impl Strategy<Value = f64> {
    -50.0..50.0f64
}

fn points() -> impl Strategy<Value = Vec<Vec2>> {
    prop::collection::vec((coord(), coord()).prop_map(|(x, y)| Vec2::new(x, y)), 3)
}

proptest! {
    #[test]
    fn forces_sum_to_zero(kind in 0usize..3, natural in -3.0..3.0f64, k in 0.01..1.0f64, pts in points()) {
        let f = spring(kind, natural, k).force(&pts);
        let total = f.total();
        prop_assert!(total.norm() < 1e-12, "{total:?}");
    }

    #[test]
    fn forces_are_finite(kind in 0usize..3, natural in -3.0..3.0f64, pts in points(), squash in 0usize..4) {
        let mut pts = pts;
        // coincident endpoints exercise the short-arm clamp
        match squash {
            1 => pts[0] = pts[1],
            2 => pts[2] = pts[1],
            3 => { pts[0] = pts[1]; pts[2] = pts[1]; }
            _ => {}
        }
        let f = spring(kind, natural, 1.0).force(&pts);
        prop_assert!(f.a.is_finite() && f.b.is_finite() && f.c.unwrap_or_default().is_finite());
    }

    #[test]
    fn zero_force_at_natural_value(kind in 0usize..3, pts in points()) {
        prop_assume!(pts[0].distance(pts[1]) > 1e-3 && pts[2].distance(pts[1]) > 1e-3);
        let (u, v) = (pts[2] - pts[1], pts[0] - pts[1]);
        let natural = match kind {
            0 => pts[0].distance(pts[1]),
            1 => v.angle(),
            _ => u.cross(v).atan2(u.dot(v)),
        };
        let f = spring(kind, natural, 1.0).force(&pts);
        prop_assert_eq!(f.a, Vec2::ZERO);
        prop_assert_eq!(f.b, Vec2::ZERO);
        prop_assert_eq!(f.c.unwrap_or_default(), Vec2::ZERO);
    }

    #[test]
    fn rotation_equivariance(kind in prop::sample::select(vec![0usize, 2]), natural in -3.0..3.0f64,
                             angle in -PI..PI, pts in points()) {
        let s = spring(kind, natural, 0.7);
        prop_assume!(s.deviation(&pts).is_some_and(|d| d.abs() < PI - 1e-6));
        let turned: Vec<Vec2> = pts.iter().map(|p| p.rotate(angle)).collect();
        let (f, g) = (s.force(&pts), s.force(&turned));
        for i in 0..3 {
            let want = force_on(&f, i).rotate(angle);
            let got = force_on(&g, i);
            prop_assert!((want - got).norm() <= 1e-9 * (1.0 + want.norm()), "{want:?} vs {got:?}");
        }
    }
}

#[test]
fn absolute_angle_is_frame_bound() {
    // rotating the layout does change an absolute-angle force
    let s = spring(1, 0.0, 1.0);
    let pts = [Vec2::new(1.0, 0.0), Vec2::ZERO, Vec2::ZERO];
    assert_eq!(s.force(&pts).a, Vec2::ZERO);
    let turned: Vec<Vec2> = pts.iter().map(|p| p.rotate(1.0)).collect();
    assert!(s.force(&turned).a.norm() > 0.1);
    assert!(matches!(s.kind, SpringKind::AbsoluteAngle { .. }));
}
