use dualq_seld::hypercomplex::*;
use proptest::prelude::*;

fn quat() -> impl Strategy<Value = Quaternion> {
    prop::array::uniform4(-10.0..10.0f64).prop_map(Quaternion::from_array)
}

fn dual_quat() -> impl Strategy<Value = DualQuaternion> {
    (quat(), quat()).prop_map(|(p, d)| DualQuaternion::new(p, d))
}

fn unit_quat() -> impl Strategy<Value = Quaternion> {
    quat()
        .prop_filter("non-degenerate", |q| q.norm() > 1e-3)
        .prop_map(|q| q.scale(1.0 / q.norm()))
}

/// Component formula written out term by term.
fn hamilton(a: Quaternion, b: Quaternion) -> Quaternion {
    Quaternion::new(
        a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
        a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
        a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
        a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
    )
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.iter()
        .zip(b)
        .all(|(x, y)| (x - y).abs() <= tol * (1.0 + x.abs().max(y.abs())))
}

/// Rodrigues rotation of `v` about unit axis `k` by angle `t`.
fn rodrigues(k: Vec3, t: f64, v: Vec3) -> Vec3 {
    let cross = [
        k[1] * v[2] - k[2] * v[1],
        k[2] * v[0] - k[0] * v[2],
        k[0] * v[1] - k[1] * v[0],
    ];
    let dot = k[0] * v[0] + k[1] * v[1] + k[2] * v[2];
    std::array::from_fn(|i| v[i] * t.cos() + cross[i] * t.sin() + k[i] * dot * (1.0 - t.cos()))
}

proptest! {
    #[test]
    fn hamilton_matches_component_formula(a in quat(), b in quat()) {
        prop_assert!(close(&qmul(a, b).to_array(), &hamilton(a, b).to_array(), 1e-12));
        let m = a.left_matrix();
        let bv = b.to_array();
        let mv: Vec<f64> = (0..4).map(|r| (0..4).map(|c| m[r][c] * bv[c]).sum()).collect();
        prop_assert!(close(&mv, &hamilton(a, b).to_array(), 1e-12));
    }

    #[test]
    fn norm_is_multiplicative(a in quat(), b in quat()) {
        prop_assert!((qnorm(qmul(a, b)) - qnorm(a) * qnorm(b)).abs() <= 1e-10 * (1.0 + qnorm(a) * qnorm(b)));
    }

    #[test]
    fn conjugate_reverses_products(a in quat(), b in quat()) {
        let lhs = qconj(qmul(a, b)).to_array();
        let rhs = qmul(qconj(b), qconj(a)).to_array();
        prop_assert!(close(&lhs, &rhs, 1e-12));
    }

    #[test]
    fn dual_product_follows_block_form(a in dual_quat(), b in dual_quat()) {
        let m = a.left_matrix();
        let bv = b.to_array();
        let mv: Vec<f64> = (0..8).map(|r| (0..8).map(|c| m[r][c] * bv[c]).sum()).collect();
        let expect = [
            hamilton(a.primal, b.primal).to_array(),
            (hamilton(a.primal, b.dual) + hamilton(a.dual, b.primal)).to_array(),
        ]
        .concat();
        prop_assert!(close(&dqmul(a, b).to_array(), &expect, 1e-12));
        prop_assert!(close(&mv, &expect, 1e-12));
        prop_assert!((0..4).all(|r| (4..8).all(|c| m[r][c] == 0.0)));
    }

    #[test]
    fn conjugations_are_involutions(a in dual_quat()) {
        for kind in [DualConjugation::First, DualConjugation::Second] {
            prop_assert_eq!(dq_conj(dq_conj(a, kind), kind), a);
        }
    }

    #[test]
    fn normalization_reaches_the_unit_set(a in dual_quat()) {
        prop_assume!(a.primal.norm() >= DEGENERATE_NORM);
        let n = dq_normalize_6dof(a).unwrap();
        prop_assert!((n.primal.dot(n.primal) - 1.0).abs() < 1e-9);
        prop_assert!(n.primal.dot(n.dual).abs() < 1e-9);
        let twice = dq_normalize_6dof(n).unwrap();
        prop_assert!(close(&twice.to_array(), &n.to_array(), 1e-9));
    }

    #[test]
    fn rigid_transform_matches_rodrigues(
        axis in prop::array::uniform3(-1.0..1.0f64).prop_filter("axis", |k| k.iter().map(|v| v * v).sum::<f64>() > 1e-4),
        angle in -3.1..3.1f64,
        t in prop::array::uniform3(-5.0..5.0f64),
        v in prop::array::uniform3(-5.0..5.0f64),
    ) {
        let n = axis.iter().map(|c| c * c).sum::<f64>().sqrt();
        let k = axis.map(|c| c / n);
        let q = q_from_polar(angle / 2.0, k).unwrap();
        let sigma = make_rigid(&RigidTransform::new(q, t).unwrap()).unwrap();
        let got = apply_rigid(sigma, v).unwrap();
        let r = rodrigues(k, angle, v);
        let want = [r[0] + t[0], r[1] + t[1], r[2] + t[2]];
        prop_assert!(close(&got, &want, 1e-9));
    }

    #[test]
    fn composed_transforms_compose(q1 in unit_quat(), q2 in unit_quat(),
        t1 in prop::array::uniform3(-3.0..3.0f64), t2 in prop::array::uniform3(-3.0..3.0f64),
        v in prop::array::uniform3(-3.0..3.0f64)) {
        let s1 = make_rigid(&RigidTransform::new(q1, t1).unwrap()).unwrap();
        let s2 = make_rigid(&RigidTransform::new(q2, t2).unwrap()).unwrap();
        let both = dq_normalize_6dof(dqmul(s1, s2)).unwrap();
        let direct = apply_rigid(both, v).unwrap();
        let chained = apply_rigid(s1, apply_rigid(s2, v).unwrap()).unwrap();
        prop_assert!(close(&direct, &chained, 1e-9));
    }
}

#[test]
fn degenerate_primal_is_rejected() {
    let d = DualQuaternion::new(Quaternion::new(1e-7, 0.0, 0.0, 0.0), Quaternion::ONE);
    assert!(matches!(
        dq_normalize_6dof(d),
        Err(dualq_seld::Error::Degenerate(_))
    ));
}
