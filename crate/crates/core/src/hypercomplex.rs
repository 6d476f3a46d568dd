//! Quaternion, dual-number and dual-quaternion arithmetic.
//!
//! All values are plain `f64` value types. Coefficients are stored in
//! `(w, x, y, z)` order, i.e. the coefficients of `1, i, j, k`.
//!
//! ## Rotation convention
//!
//! [`q_from_polar`] builds `cos θ + u sin θ`. Rotating a vector with the
//! conjugation sandwich `q (0, v) q*` turns it by `2θ` about `u`. No angle
//! halving happens anywhere in this module, so a rotation by `α` about `u`
//! is `q_from_polar(α / 2, u)`.

use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used by every "is this unit?" precondition in this module.
pub const UNIT_TOLERANCE: f64 = 1e-9;

/// Primal norms below this are treated as degenerate by [`dq_normalize_6dof`].
pub const DEGENERATE_NORM: f64 = 1e-6;

pub type Vec3 = [f64; 3];

/// Sign pattern of the Hamilton product in matrix-vector form.
///
/// `HAMILTON_BLOCKS[row][col] = (component, sign)` means that entry
/// `(row, col)` of the left-multiplication matrix of `q` is
/// `sign * q[component]`, with components indexed `w=0, x=1, y=2, z=3`.
/// Quaternion neural layers reuse this table to lay out their four shared
/// real submatrices.
pub const HAMILTON_BLOCKS: [[(usize, f64); 4]; 4] = [
    [(0, 1.0), (1, -1.0), (2, -1.0), (3, -1.0)],
    [(1, 1.0), (0, 1.0), (3, -1.0), (2, 1.0)],
    [(2, 1.0), (3, 1.0), (0, 1.0), (1, -1.0)],
    [(3, 1.0), (2, -1.0), (1, 1.0), (0, 1.0)],
];

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Quaternion {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Quaternion {
    pub const ZERO: Quaternion = Quaternion::new(0.0, 0.0, 0.0, 0.0);
    pub const ONE: Quaternion = Quaternion::new(1.0, 0.0, 0.0, 0.0);
    pub const I: Quaternion = Quaternion::new(0.0, 1.0, 0.0, 0.0);
    pub const J: Quaternion = Quaternion::new(0.0, 0.0, 1.0, 0.0);
    pub const K: Quaternion = Quaternion::new(0.0, 0.0, 0.0, 1.0);

    pub const fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Self { w, x, y, z }
    }

    /// Pure quaternion `(0, v)`.
    pub const fn pure(v: Vec3) -> Self {
        Self::new(0.0, v[0], v[1], v[2])
    }

    pub const fn from_array(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    pub const fn to_array(self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub const fn vector(self) -> Vec3 {
        [self.x, self.y, self.z]
    }

    pub fn is_pure(self) -> bool {
        self.w == 0.0
    }

    pub fn is_finite(self) -> bool {
        self.to_array().iter().all(|c| c.is_finite())
    }

    /// Euclidean dot product in R^4.
    pub fn dot(self, other: Quaternion) -> f64 {
        self.w * other.w + self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn norm_sqr(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        qnorm(self)
    }

    pub fn conj(self) -> Quaternion {
        qconj(self)
    }

    pub fn scale(self, s: f64) -> Quaternion {
        Self::new(self.w * s, self.x * s, self.y * s, self.z * s)
    }

    pub fn is_unit(self) -> bool {
        (self.norm() - 1.0).abs() <= UNIT_TOLERANCE
    }

    /// The 4x4 left-multiplication matrix `L(q)` with `q ⊗ p = L(q) p`.
    pub fn left_matrix(self) -> [[f64; 4]; 4] {
        let c = self.to_array();
        let mut m = [[0.0; 4]; 4];
        for (row, blocks) in HAMILTON_BLOCKS.iter().enumerate() {
            for (col, &(comp, sign)) in blocks.iter().enumerate() {
                m[row][col] = sign * c[comp];
            }
        }
        m
    }

    /// Rotation matrix equivalent to `v ↦ q (0, v) q*` for unit `q`.
    pub fn rotation_matrix(self) -> [[f64; 3]; 3] {
        let Quaternion { w, x, y, z } = self;
        [
            [
                w * w + x * x - y * y - z * z,
                2.0 * (x * y - w * z),
                2.0 * (x * z + w * y),
            ],
            [
                2.0 * (x * y + w * z),
                w * w - x * x + y * y - z * z,
                2.0 * (y * z - w * x),
            ],
            [
                2.0 * (x * z - w * y),
                2.0 * (y * z + w * x),
                w * w - x * x - y * y + z * z,
            ],
        ]
    }
}

impl Add for Quaternion {
    type Output = Quaternion;
    fn add(self, o: Quaternion) -> Quaternion {
        Quaternion::new(self.w + o.w, self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Quaternion {
    type Output = Quaternion;
    fn sub(self, o: Quaternion) -> Quaternion {
        Quaternion::new(self.w - o.w, self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Neg for Quaternion {
    type Output = Quaternion;
    fn neg(self) -> Quaternion {
        self.scale(-1.0)
    }
}

impl Mul for Quaternion {
    type Output = Quaternion;
    fn mul(self, p: Quaternion) -> Quaternion {
        qmul(self, p)
    }
}

impl Mul<f64> for Quaternion {
    type Output = Quaternion;
    fn mul(self, s: f64) -> Quaternion {
        self.scale(s)
    }
}

/// Hamilton product `q ⊗ p`.
///
/// Expanded as `(q_w p_w − q·p, q × p + q_w p + p_w q)`; the tests check it
/// against the explicit matrix form.
pub fn qmul(q: Quaternion, p: Quaternion) -> Quaternion {
    Quaternion::new(
        q.w * p.w - q.x * p.x - q.y * p.y - q.z * p.z,
        q.w * p.x + q.x * p.w + q.y * p.z - q.z * p.y,
        q.w * p.y - q.x * p.z + q.y * p.w + q.z * p.x,
        q.w * p.z + q.x * p.y - q.y * p.x + q.z * p.w,
    )
}

pub fn qconj(q: Quaternion) -> Quaternion {
    Quaternion::new(q.w, -q.x, -q.y, -q.z)
}

pub fn qnorm(q: Quaternion) -> f64 {
    q.norm_sqr().sqrt()
}

fn vec_norm(v: Vec3) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

/// Unit quaternion `cos θ + u sin θ`.
///
/// Used as a rotor this turns vectors by `2θ` about `u` (see the module
/// docs).
pub fn q_from_polar(theta: f64, u: Vec3) -> Result<Quaternion> {
    let n = vec_norm(u);
    if (n - 1.0).abs() > UNIT_TOLERANCE {
        return Err(Error::Precondition(format!(
            "polar axis must be a unit vector, got norm {n}"
        )));
    }
    let (s, c) = theta.sin_cos();
    Ok(Quaternion::new(c, u[0] * s, u[1] * s, u[2] * s))
}

/// Rotate `v` by the unit quaternion `q` via `q (0, v) q*`.
pub fn q_rotate(q: Quaternion, v: Vec3) -> Result<Vec3> {
    if !q.is_unit() {
        return Err(Error::Precondition(format!(
            "rotation quaternion must be unit, got norm {}",
            q.norm()
        )));
    }
    Ok(qmul(qmul(q, Quaternion::pure(v)), q.conj()).vector())
}

/// `primal + ε dual` with `ε² = 0`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DualNumber {
    pub primal: f64,
    pub dual: f64,
}

impl DualNumber {
    pub const fn new(primal: f64, dual: f64) -> Self {
        Self { primal, dual }
    }

    pub fn conj(self) -> Self {
        Self::new(self.primal, -self.dual)
    }
}

pub fn dmul(a: DualNumber, b: DualNumber) -> DualNumber {
    DualNumber::new(a.primal * b.primal, a.primal * b.dual + b.primal * a.dual)
}

impl Mul for DualNumber {
    type Output = DualNumber;
    fn mul(self, o: DualNumber) -> DualNumber {
        dmul(self, o)
    }
}

impl Add for DualNumber {
    type Output = DualNumber;
    fn add(self, o: DualNumber) -> DualNumber {
        DualNumber::new(self.primal + o.primal, self.dual + o.dual)
    }
}

/// `q + ε q_ε`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DualQuaternion {
    pub primal: Quaternion,
    pub dual: Quaternion,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DualConjugation {
    /// Conjugate both quaternions: `q* + ε q_ε*`.
    First,
    /// Also conjugate the dual unit: `q* − ε q_ε*`.
    Second,
}

impl DualQuaternion {
    pub const IDENTITY: DualQuaternion = DualQuaternion::new(Quaternion::ONE, Quaternion::ZERO);

    pub const fn new(primal: Quaternion, dual: Quaternion) -> Self {
        Self { primal, dual }
    }

    pub fn from_array(a: [f64; 8]) -> Self {
        Self::new(
            Quaternion::new(a[0], a[1], a[2], a[3]),
            Quaternion::new(a[4], a[5], a[6], a[7]),
        )
    }

    pub fn to_array(self) -> [f64; 8] {
        let p = self.primal.to_array();
        let d = self.dual.to_array();
        [p[0], p[1], p[2], p[3], d[0], d[1], d[2], d[3]]
    }

    /// Checks `dot(q, q) = 1` and `dot(q, q_ε) = 0` within `tol`.
    pub fn is_unit_within(self, tol: f64) -> bool {
        (self.primal.norm_sqr() - 1.0).abs() <= tol && self.primal.dot(self.dual).abs() <= tol
    }

    pub fn is_unit(self) -> bool {
        self.is_unit_within(UNIT_TOLERANCE)
    }

    /// The 8x8 real matrix `M(a)` with `a b = M(a) b` on stacked
    /// `(primal, dual)` coefficient vectors. Its upper-right 4x4 block is zero.
    pub fn left_matrix(self) -> [[f64; 8]; 8] {
        let q = self.primal.left_matrix();
        let qe = self.dual.left_matrix();
        let mut m = [[0.0; 8]; 8];
        for r in 0..4 {
            for c in 0..4 {
                m[r][c] = q[r][c];
                m[r + 4][c] = qe[r][c];
                m[r + 4][c + 4] = q[r][c];
            }
        }
        m
    }
}

impl Add for DualQuaternion {
    type Output = DualQuaternion;
    fn add(self, o: DualQuaternion) -> DualQuaternion {
        DualQuaternion::new(self.primal + o.primal, self.dual + o.dual)
    }
}

impl Mul for DualQuaternion {
    type Output = DualQuaternion;
    fn mul(self, o: DualQuaternion) -> DualQuaternion {
        dqmul(self, o)
    }
}

/// `(q + ε q_ε)(p + ε p_ε) = q⊗p + ε (q⊗p_ε + q_ε⊗p)`.
pub fn dqmul(a: DualQuaternion, b: DualQuaternion) -> DualQuaternion {
    DualQuaternion::new(
        qmul(a.primal, b.primal),
        qmul(a.primal, b.dual) + qmul(a.dual, b.primal),
    )
}

pub fn dq_conj(a: DualQuaternion, kind: DualConjugation) -> DualQuaternion {
    match kind {
        DualConjugation::First => DualQuaternion::new(a.primal.conj(), a.dual.conj()),
        DualConjugation::Second => DualQuaternion::new(a.primal.conj(), -a.dual.conj()),
    }
}

/// Project an arbitrary dual quaternion onto the unit (6DOF) constraint set.
///
/// The primal part is divided by its norm component-wise and the dual part
/// has its component along the primal part removed (a Gram–Schmidt step
/// using the 4D dot product). The result satisfies `dot(p̄, p̄) = 1` and
/// `dot(p̄, d̄) = 0`.
///
/// Returns [`Error::Degenerate`] when the primal norm is below
/// [`DEGENERATE_NORM`]; callers that need a total function handle that case
/// themselves.
pub fn dq_normalize_6dof(a: DualQuaternion) -> Result<DualQuaternion> {
    let n2 = a.primal.norm_sqr();
    let n = n2.sqrt();
    if !(n >= DEGENERATE_NORM) {
        return Err(Error::Degenerate(format!(
            "primal norm {n} is below {DEGENERATE_NORM}"
        )));
    }
    let primal = a.primal.scale(1.0 / n);
    let dual = a.dual - a.primal.scale(a.dual.dot(a.primal) / n2);
    Ok(DualQuaternion::new(primal, dual))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform {
    rotation: Quaternion,
    translation: Vec3,
}

impl RigidTransform {
    pub fn new(rotation: Quaternion, translation: Vec3) -> Result<Self> {
        if !rotation.is_unit() {
            return Err(Error::Precondition(format!(
                "rigid rotation must be unit, got norm {}",
                rotation.norm()
            )));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn rotation(&self) -> Quaternion {
        self.rotation
    }

    pub fn translation(&self) -> Vec3 {
        self.translation
    }
}

/// Encode a rotation followed by a translation as `q_θ + (ε/2) t q_θ`.
pub fn make_rigid(r: &RigidTransform) -> Result<DualQuaternion> {
    if !r.rotation.is_unit() {
        return Err(Error::Precondition("rigid rotation must be unit".into()));
    }
    let dual = qmul(Quaternion::pure(r.translation), r.rotation).scale(0.5);
    Ok(DualQuaternion::new(r.rotation, dual))
}

/// Apply a unit dual quaternion to a point: `σ (1 + ε v) σ^{*2}`, returning
/// the vector part of the dual component, which equals `R v + t`.
pub fn apply_rigid(sigma: DualQuaternion, v: Vec3) -> Result<Vec3> {
    if !sigma.is_unit() {
        return Err(Error::Precondition(
            "rigid transform must be a unit dual quaternion".into(),
        ));
    }
    let point = DualQuaternion::new(Quaternion::ONE, Quaternion::pure(v));
    let out = dqmul(dqmul(sigma, point), dq_conj(sigma, DualConjugation::Second));
    Ok(out.dual.vector())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    fn q(w: f64, x: f64, y: f64, z: f64) -> Quaternion {
        Quaternion::new(w, x, y, z)
    }

    fn close3(a: Vec3, b: Vec3, tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn unit_products() {
        assert_eq!(qmul(Quaternion::I, Quaternion::J), Quaternion::K);
        assert_eq!(qmul(Quaternion::J, Quaternion::I), -Quaternion::K);
        assert_eq!(qmul(Quaternion::J, Quaternion::K), Quaternion::I);
        assert_eq!(qmul(Quaternion::K, Quaternion::I), Quaternion::J);
        assert_eq!(qmul(Quaternion::I, Quaternion::I), -Quaternion::ONE);
        let a = q(0.3, -1.2, 4.0, 2.5);
        assert_eq!(qmul(a, Quaternion::ONE), a);
        assert_eq!(qmul(Quaternion::ONE, a), a);
    }

    #[test]
    fn product_matches_matrix_form() {
        let l = q(1.0, 2.0, 3.0, 4.0).left_matrix();
        let p = [5.0, 6.0, 7.0, 8.0];
        let mut out = [0.0; 4];
        for r in 0..4 {
            for c in 0..4 {
                out[r] += l[r][c] * p[c];
            }
        }
        assert_eq!(out, [-60.0, 12.0, 30.0, 24.0]);
        assert_eq!(
            qmul(q(1.0, 2.0, 3.0, 4.0), q(5.0, 6.0, 7.0, 8.0)),
            q(-60.0, 12.0, 30.0, 24.0)
        );
    }

    #[test]
    fn conjugate_and_norm() {
        let a = q(1.0, 2.0, 3.0, 4.0);
        assert_eq!(qconj(a), q(1.0, -2.0, -3.0, -4.0));
        assert_eq!(qconj(qconj(a)), a);
        let p = qmul(a, qconj(a));
        assert_eq!(p, q(30.0, 0.0, 0.0, 0.0));
        assert_eq!(qnorm(q(0.0, 3.0, 0.0, 4.0)), 5.0);
        assert_eq!(qnorm(Quaternion::ONE), 1.0);
    }

    #[test]
    fn polar_form() {
        assert_eq!(q_from_polar(0.0, [1.0, 0.0, 0.0]).unwrap(), Quaternion::ONE);
        let r = q_from_polar(FRAC_PI_2, [1.0, 0.0, 0.0]).unwrap();
        assert!((r.w).abs() < 1e-16 && (r.x - 1.0).abs() < 1e-16);
        assert!(matches!(
            q_from_polar(0.3, [1.0, 1.0, 0.0]),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn rotation_examples() {
        let v = [0.3, -2.0, 7.0];
        assert_eq!(q_rotate(Quaternion::ONE, v).unwrap(), v);
        assert_eq!(
            q_rotate(Quaternion::I, [0.0, 1.0, 0.0]).unwrap(),
            [0.0, -1.0, 0.0]
        );
        let r = q_from_polar(FRAC_PI_4, [0.0, 0.0, 1.0]).unwrap();
        assert!(close3(
            q_rotate(r, [1.0, 0.0, 0.0]).unwrap(),
            [0.0, 1.0, 0.0],
            1e-15
        ));
        assert!(q_rotate(q(2.0, 0.0, 0.0, 0.0), v).is_err());
    }

    #[test]
    fn dual_numbers() {
        assert_eq!(
            dmul(DualNumber::new(1.0, 2.0), DualNumber::new(3.0, 4.0)),
            DualNumber::new(3.0, 10.0)
        );
        let d = DualNumber::new(-1.5, 8.0);
        assert_eq!(d * DualNumber::new(1.0, 0.0), d);
        assert_eq!(
            DualNumber::new(0.0, 1.0) * DualNumber::new(0.0, 1.0),
            DualNumber::new(0.0, 0.0)
        );
    }

    #[test]
    fn dual_quaternion_products() {
        let a = q(1.0, -2.0, 0.5, 3.0);
        let b = q(0.2, 0.1, -4.0, 1.0);
        let r = dqmul(
            DualQuaternion::new(a, Quaternion::ZERO),
            DualQuaternion::new(b, Quaternion::ZERO),
        );
        assert_eq!(r, DualQuaternion::new(qmul(a, b), Quaternion::ZERO));
        let r = dqmul(
            DualQuaternion::new(Quaternion::ZERO, a),
            DualQuaternion::new(Quaternion::ZERO, b),
        );
        assert_eq!(r.primal, Quaternion::ZERO);
        assert_eq!(r.dual, Quaternion::ZERO);
        let r = dqmul(
            DualQuaternion::new(Quaternion::ONE, Quaternion::I),
            DualQuaternion::new(Quaternion::J, Quaternion::K),
        );
        assert_eq!(r.primal, Quaternion::J);
        assert_eq!(r.dual, q(0.0, 0.0, 0.0, 2.0));
    }

    #[test]
    fn dual_conjugations() {
        let a = DualQuaternion::from_array([1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
        assert_eq!(
            dq_conj(a, DualConjugation::First).to_array(),
            [1.0, -2.0, -3.0, -4.0, 5.0, -6.0, -7.0, -8.0]
        );
        assert_eq!(
            dq_conj(a, DualConjugation::Second).to_array(),
            [1.0, -2.0, -3.0, -4.0, -5.0, 6.0, 7.0, 8.0]
        );
        for k in [DualConjugation::First, DualConjugation::Second] {
            assert_eq!(dq_conj(dq_conj(a, k), k), a);
        }
    }

    #[test]
    fn normalize_examples() {
        let a = DualQuaternion::from_array([2.0, 0.0, 0.0, 0.0, 3.0, 5.0, 0.0, 0.0]);
        let n = dq_normalize_6dof(a).unwrap();
        assert_eq!(n.to_array(), [1.0, 0.0, 0.0, 0.0, 0.0, 5.0, 0.0, 0.0]);
        assert!(n.is_unit());
        assert_eq!(dq_normalize_6dof(n).unwrap(), n);
        let tiny = DualQuaternion::from_array([1e-7, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
        assert!(matches!(dq_normalize_6dof(tiny), Err(Error::Degenerate(_))));
        assert!(dq_normalize_6dof(DualQuaternion::default()).is_err());
    }

    #[test]
    fn rigid_examples() {
        let t = RigidTransform::new(Quaternion::ONE, [1.0, 2.0, 3.0]).unwrap();
        let s = make_rigid(&t).unwrap();
        assert_eq!(s.to_array(), [1.0, 0.0, 0.0, 0.0, 0.0, 0.5, 1.0, 1.5]);
        assert!(s.is_unit());
        assert_eq!(apply_rigid(s, [0.0, 0.0, 0.0]).unwrap(), [1.0, 2.0, 3.0]);

        let id = make_rigid(&RigidTransform::new(Quaternion::ONE, [0.0; 3]).unwrap()).unwrap();
        assert_eq!(id, DualQuaternion::IDENTITY);
        assert_eq!(apply_rigid(id, [4.0, -1.0, 2.0]).unwrap(), [4.0, -1.0, 2.0]);

        assert!(RigidTransform::new(q(1.0, 1.0, 0.0, 0.0), [0.0; 3]).is_err());
        let bad = DualQuaternion::from_array([1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
        assert!(apply_rigid(bad, [0.0; 3]).is_err());
    }

    #[test]
    fn dual_matrix_has_zero_block() {
        let a = DualQuaternion::from_array([1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
        let m = a.left_matrix();
        for row in m.iter().take(4) {
            assert!(row[4..].iter().all(|&v| v == 0.0));
        }
    }
}
