//! Homogeneous 3D transform algebra.
//!
//! Conventions, used everywhere in this workspace:
//! - column vectors (`M · v`), right-handed axes;
//! - row-major storage: `m[row][col]`;
//! - TRS composition order `T · Rz · Ry · Rx · S` (intrinsic z-y-x Euler).
//!
//! The module is generic over the scalar; the rest of the pipeline uses the
//! `f64` aliases from the crate root.

use crate::error::{CoreError, CoreResult};
use crate::real::Real;

/// 3-component vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vector3<R> {
    pub x: R,
    pub y: R,
    pub z: R,
}

impl<R: Real> Vector3<R> {
    pub fn new(x: R, y: R, z: R) -> Self {
        Self { x, y, z }
    }

    pub fn zero() -> Self {
        Self::new(R::zero(), R::zero(), R::zero())
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn dot(&self, o: &Self) -> R {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(&self, o: &Self) -> Self {
        Self::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(&self) -> R {
        self.dot(self).sqrt()
    }

    pub fn normalized(&self) -> Self {
        let n = self.norm();
        Self::new(self.x / n, self.y / n, self.z / n)
    }

    pub fn scaled(&self, s: R) -> Self {
        Self::new(self.x * s, self.y * s, self.z * s)
    }
}

impl<R: Real> std::ops::Add for Vector3<R> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl<R: Real> std::ops::Sub for Vector3<R> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl<R: Real> std::ops::Neg for Vector3<R> {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y, -self.z)
    }
}

/// Row-major 4x4 homogeneous transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Matrix4<R> {
    pub m: [[R; 4]; 4],
}

impl<R: Real> Matrix4<R> {
    pub fn identity() -> Self {
        let z = R::zero();
        let o = R::one();
        Self {
            m: [[o, z, z, z], [z, o, z, z], [z, z, o, z], [z, z, z, o]],
        }
    }

    pub fn zero() -> Self {
        Self {
            m: [[R::zero(); 4]; 4],
        }
    }

    pub fn from_translation(t: Vector3<R>) -> Self {
        let mut m = Self::identity();
        m.m[0][3] = t.x;
        m.m[1][3] = t.y;
        m.m[2][3] = t.z;
        m
    }

    pub fn from_scale(s: Vector3<R>) -> Self {
        let mut m = Self::identity();
        m.m[0][0] = s.x;
        m.m[1][1] = s.y;
        m.m[2][2] = s.z;
        m
    }

    pub fn rotation_x(a: R) -> Self {
        let (s, c) = (a.sin(), a.cos());
        let mut m = Self::identity();
        m.m[1][1] = c;
        m.m[1][2] = -s;
        m.m[2][1] = s;
        m.m[2][2] = c;
        m
    }

    pub fn rotation_y(a: R) -> Self {
        let (s, c) = (a.sin(), a.cos());
        let mut m = Self::identity();
        m.m[0][0] = c;
        m.m[0][2] = s;
        m.m[2][0] = -s;
        m.m[2][2] = c;
        m
    }

    pub fn rotation_z(a: R) -> Self {
        let (s, c) = (a.sin(), a.cos());
        let mut m = Self::identity();
        m.m[0][0] = c;
        m.m[0][1] = -s;
        m.m[1][0] = s;
        m.m[1][1] = c;
        m
    }

    pub fn matmul(&self, o: &Self) -> Self {
        let mut r = Self::zero();
        for i in 0..4 {
            for j in 0..4 {
                let mut acc = R::zero();
                for k in 0..4 {
                    acc += self.m[i][k] * o.m[k][j];
                }
                r.m[i][j] = acc;
            }
        }
        r
    }

    pub fn transpose(&self) -> Self {
        let mut r = Self::zero();
        for i in 0..4 {
            for j in 0..4 {
                r.m[i][j] = self.m[j][i];
            }
        }
        r
    }

    pub fn is_finite(&self) -> bool {
        self.m.iter().flatten().all(|v| v.is_finite())
    }

    /// Determinant of the upper-left 3x3 block.
    pub fn det3(&self) -> R {
        let m = &self.m;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    /// True when the bottom row is exactly (0,0,0,1).
    pub fn has_affine_bottom_row(&self) -> bool {
        self.m[3][0] == R::zero()
            && self.m[3][1] == R::zero()
            && self.m[3][2] == R::zero()
            && self.m[3][3] == R::one()
    }

    /// Inverse of an affine transform (bottom row (0,0,0,1)).
    pub fn affine_inverse(&self) -> CoreResult<Self> {
        let det = self.det3();
        if det.abs() < R::lit(1e-18) {
            return Err(CoreError::DegenerateTransform { w: 0.0 });
        }
        let m = &self.m;
        let inv_det = R::one() / det;
        let mut r = Self::identity();
        // Adjugate of the 3x3 block.
        r.m[0][0] = (m[1][1] * m[2][2] - m[1][2] * m[2][1]) * inv_det;
        r.m[0][1] = (m[0][2] * m[2][1] - m[0][1] * m[2][2]) * inv_det;
        r.m[0][2] = (m[0][1] * m[1][2] - m[0][2] * m[1][1]) * inv_det;
        r.m[1][0] = (m[1][2] * m[2][0] - m[1][0] * m[2][2]) * inv_det;
        r.m[1][1] = (m[0][0] * m[2][2] - m[0][2] * m[2][0]) * inv_det;
        r.m[1][2] = (m[0][2] * m[1][0] - m[0][0] * m[1][2]) * inv_det;
        r.m[2][0] = (m[1][0] * m[2][1] - m[1][1] * m[2][0]) * inv_det;
        r.m[2][1] = (m[0][1] * m[2][0] - m[0][0] * m[2][1]) * inv_det;
        r.m[2][2] = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) * inv_det;
        for i in 0..3 {
            let mut acc = R::zero();
            for k in 0..3 {
                acc += r.m[i][k] * m[k][3];
            }
            r.m[i][3] = -acc;
        }
        Ok(r)
    }

    /// Homogeneous transform of a point (w = 1), divided by the resulting w.
    ///
    /// Fails when |w| < 1e-12.
    pub fn transform_point(&self, p: &Vector3<R>) -> CoreResult<Vector3<R>> {
        let m = &self.m;
        let x = m[0][0] * p.x + m[0][1] * p.y + m[0][2] * p.z + m[0][3];
        let y = m[1][0] * p.x + m[1][1] * p.y + m[1][2] * p.z + m[1][3];
        let z = m[2][0] * p.x + m[2][1] * p.y + m[2][2] * p.z + m[2][3];
        let w = m[3][0] * p.x + m[3][1] * p.y + m[3][2] * p.z + m[3][3];
        if w.abs() < R::lit(1e-12) {
            return Err(CoreError::DegenerateTransform {
                w: w.to_f64().unwrap_or(0.0),
            });
        }
        Ok(Vector3::new(x / w, y / w, z / w))
    }

    /// Affine transform of a point assuming the bottom row is (0,0,0,1).
    pub fn transform_point_affine(&self, p: &Vector3<R>) -> Vector3<R> {
        let m = &self.m;
        Vector3::new(
            m[0][0] * p.x + m[0][1] * p.y + m[0][2] * p.z + m[0][3],
            m[1][0] * p.x + m[1][1] * p.y + m[1][2] * p.z + m[1][3],
            m[2][0] * p.x + m[2][1] * p.y + m[2][2] * p.z + m[2][3],
        )
    }

    /// Rotates/scales a direction (ignores translation).
    pub fn transform_vector(&self, v: &Vector3<R>) -> Vector3<R> {
        let m = &self.m;
        Vector3::new(
            m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
            m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
            m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z,
        )
    }
}

/// Standard matrix product `a · b`.
pub fn compose<R: Real>(a: &Matrix4<R>, b: &Matrix4<R>) -> Matrix4<R> {
    a.matmul(b)
}

/// Local translation, rotation (radians), and scale of one bone or pose.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trs<R> {
    pub translation: [R; 3],
    pub rotation: [R; 3],
    pub scale: [R; 3],
}

/// Adjoints of a scalar loss with respect to the nine TRS channels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrsAdjoint<R> {
    pub translation: [R; 3],
    pub rotation: [R; 3],
    pub scale: [R; 3],
}

impl<R: Real> Default for TrsAdjoint<R> {
    fn default() -> Self {
        Self {
            translation: [R::zero(); 3],
            rotation: [R::zero(); 3],
            scale: [R::zero(); 3],
        }
    }
}

impl<R: Real> Trs<R> {
    pub fn neutral() -> Self {
        Self {
            translation: [R::zero(); 3],
            rotation: [R::zero(); 3],
            scale: [R::one(); 3],
        }
    }

    pub fn from_translation(t: [R; 3]) -> Self {
        Self {
            translation: t,
            ..Self::neutral()
        }
    }

    pub fn is_finite(&self) -> bool {
        self.translation.iter().all(|v| v.is_finite())
            && self.rotation.iter().all(|v| v.is_finite())
            && self.scale.iter().all(|v| v.is_finite())
    }

    pub fn validate(&self) -> CoreResult<()> {
        if !self.is_finite() {
            return Err(CoreError::NonFinite("TRS channels"));
        }
        if self.scale.iter().any(|s| *s <= R::zero()) {
            return Err(CoreError::InvalidParams(
                "scale factors must be positive".into(),
            ));
        }
        Ok(())
    }

    /// `T · Rz · Ry · Rx · S`.
    pub fn to_matrix(&self) -> Matrix4<R> {
        let t = Matrix4::from_translation(Vector3::new(
            self.translation[0],
            self.translation[1],
            self.translation[2],
        ));
        let rz = Matrix4::rotation_z(self.rotation[2]);
        let ry = Matrix4::rotation_y(self.rotation[1]);
        let rx = Matrix4::rotation_x(self.rotation[0]);
        let s = Matrix4::from_scale(Vector3::new(self.scale[0], self.scale[1], self.scale[2]));
        t.matmul(&rz.matmul(&ry.matmul(&rx.matmul(&s))))
    }

    /// Checked variant of [`Trs::to_matrix`].
    pub fn to_matrix_checked(&self) -> CoreResult<Matrix4<R>> {
        self.validate()?;
        Ok(self.to_matrix())
    }

    /// Pulls a matrix-level adjoint back onto the nine TRS channels.
    ///
    /// `upstream[r][c]` is dL/dM[r][c] for M = `self.to_matrix()`; the result
    /// is dL/d(channel) for each channel.
    pub fn to_matrix_vjp(&self, upstream: &Matrix4<R>) -> TrsAdjoint<R> {
        let rz = Matrix4::rotation_z(self.rotation[2]);
        let ry = Matrix4::rotation_y(self.rotation[1]);
        let rx = Matrix4::rotation_x(self.rotation[0]);
        let s = Matrix4::from_scale(Vector3::new(self.scale[0], self.scale[1], self.scale[2]));

        // Left and right partial products around each factor of T·Rz·Ry·Rx·S.
        let r3 = s;
        let r2 = rx.matmul(&r3);
        let r1 = ry.matmul(&r2);
        let t = Matrix4::from_translation(Vector3::new(
            self.translation[0],
            self.translation[1],
            self.translation[2],
        ));
        let l1 = t.matmul(&rz);
        let l2 = l1.matmul(&ry);
        let l3 = l2.matmul(&rx);

        let mut adj = TrsAdjoint::default();
        // d/dt_i inserts A[3][c]=(0,0,0,1) into row i, so only up[i][3] survives.
        for i in 0..3 {
            adj.translation[i] = upstream.m[i][3];
        }

        let contract = |a: &Matrix4<R>| {
            let mut acc = R::zero();
            for i in 0..4 {
                for j in 0..4 {
                    acc += upstream.m[i][j] * a.m[i][j];
                }
            }
            acc
        };

        let drz = rotation_z_deriv(self.rotation[2]);
        let dry = rotation_y_deriv(self.rotation[1]);
        let drx = rotation_x_deriv(self.rotation[0]);
        adj.rotation[2] = contract(&t.matmul(&drz.matmul(&r1)));
        adj.rotation[1] = contract(&l1.matmul(&dry.matmul(&r2)));
        adj.rotation[0] = contract(&l2.matmul(&drx.matmul(&r3)));

        // d/ds_i keeps only column i of L3.
        for i in 0..3 {
            let mut acc = R::zero();
            for r in 0..4 {
                acc += upstream.m[r][i] * l3.m[r][i];
            }
            adj.scale[i] = acc;
        }
        adj
    }
}

fn rotation_x_deriv<R: Real>(a: R) -> Matrix4<R> {
    let (s, c) = (a.sin(), a.cos());
    let mut m = Matrix4::zero();
    m.m[1][1] = -s;
    m.m[1][2] = -c;
    m.m[2][1] = c;
    m.m[2][2] = -s;
    m
}

fn rotation_y_deriv<R: Real>(a: R) -> Matrix4<R> {
    let (s, c) = (a.sin(), a.cos());
    let mut m = Matrix4::zero();
    m.m[0][0] = -s;
    m.m[0][2] = c;
    m.m[2][0] = -c;
    m.m[2][2] = -s;
    m
}

fn rotation_z_deriv<R: Real>(a: R) -> Matrix4<R> {
    let (s, c) = (a.sin(), a.cos());
    let mut m = Matrix4::zero();
    m.m[0][0] = -s;
    m.m[0][1] = -c;
    m.m[1][0] = c;
    m.m[1][1] = -s;
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    type V = Vector3<f64>;
    type M = Matrix4<f64>;

    fn trs(t: [f64; 3], r: [f64; 3], s: [f64; 3]) -> Trs<f64> {
        Trs {
            translation: t,
            rotation: r,
            scale: s,
        }
    }

    #[test]
    fn neutral_trs_is_identity_exactly() {
        assert_eq!(Trs::<f64>::neutral().to_matrix(), M::identity());
    }

    #[test]
    fn quarter_turn_about_x_maps_y_to_z() {
        let m = trs([0.0; 3], [std::f64::consts::FRAC_PI_2, 0.0, 0.0], [1.0; 3]).to_matrix();
        let p = m.transform_point(&V::new(0.0, 1.0, 0.0)).unwrap();
        assert!((p.x - 0.0).abs() < 1e-15);
        assert!((p.y - 0.0).abs() < 1e-15);
        assert!((p.z - 1.0).abs() < 1e-15);
    }

    #[test]
    fn translate_and_scale_hand_oracle() {
        // T(1,0,0)·S(2,1,1): (1,0,0) -> scaled (2,0,0) -> translated (3,0,0).
        let m = trs([1.0, 0.0, 0.0], [0.0; 3], [2.0, 1.0, 1.0]).to_matrix();
        let p = m.transform_point(&V::new(1.0, 0.0, 0.0)).unwrap();
        assert_eq!((p.x, p.y, p.z), (3.0, 0.0, 0.0));
    }

    #[test]
    fn compose_identity_and_translations() {
        let m = trs([0.3, -0.1, 2.0], [0.4, 0.2, -0.7], [1.2, 0.8, 1.0]).to_matrix();
        assert_eq!(compose(&M::identity(), &m), m);
        let ta = M::from_translation(V::new(1.0, 0.0, 0.0));
        let tb = M::from_translation(V::new(0.0, 1.0, 0.0));
        assert_eq!(compose(&ta, &tb), M::from_translation(V::new(1.0, 1.0, 0.0)));
    }

    #[test]
    fn compose_matches_triple_loop_oracle() {
        let mut rng = 0x243f6a8885a308d3u64;
        let mut next = || {
            rng = rng.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((rng >> 11) as f64 / (1u64 << 53) as f64) * 4.0 - 2.0
        };
        for _ in 0..20 {
            let mut a = M::zero();
            let mut b = M::zero();
            for i in 0..4 {
                for j in 0..4 {
                    a.m[i][j] = next();
                    b.m[i][j] = next();
                }
            }
            let c = compose(&a, &b);
            for i in 0..4 {
                for j in 0..4 {
                    let mut acc = 0.0;
                    for k in 0..4 {
                        acc += a.m[i][k] * b.m[k][j];
                    }
                    assert_eq!(c.m[i][j], acc);
                }
            }
        }
    }

    #[test]
    fn transform_point_identity_and_translation() {
        let p = V::new(0.3, -0.4, 5.0);
        let q = M::identity().transform_point(&p).unwrap();
        assert_eq!(p, q);
        let t = M::from_translation(V::new(1.0, 2.0, 3.0));
        let q = t.transform_point(&V::zero()).unwrap();
        assert_eq!((q.x, q.y, q.z), (1.0, 2.0, 3.0));
    }

    #[test]
    fn transform_point_perspective_hand_oracle() {
        // Bottom row (0,0,0.5,0.5): w = z/2 + 1/2; point (2,4,3) -> w=2 -> (1,2,1.5).
        let mut m = M::identity();
        m.m[3][2] = 0.5;
        m.m[3][3] = 0.5;
        let p = m.transform_point(&V::new(2.0, 4.0, 3.0)).unwrap();
        assert!((p.x - 1.0).abs() < 1e-15);
        assert!((p.y - 2.0).abs() < 1e-15);
        assert!((p.z - 1.5).abs() < 1e-15);
    }

    #[test]
    fn transform_point_degenerate_w_rejected() {
        let mut m = M::zero();
        m.m[0][0] = 1.0;
        m.m[1][1] = 1.0;
        m.m[2][2] = 1.0;
        // Bottom row all zero: w = 0 for any point.
        let err = m.transform_point(&V::new(1.0, 1.0, 1.0));
        assert!(matches!(err, Err(CoreError::DegenerateTransform { .. })));
    }

    #[test]
    fn det3_equals_scale_product() {
        let t = trs([0.2, -0.9, 0.4], [0.3, -1.1, 0.8], [1.7, 0.4, 2.2]);
        let det = t.to_matrix().det3();
        assert!((det - 1.7 * 0.4 * 2.2).abs() < 1e-9);
    }

    #[test]
    fn trs_vjp_matches_central_differences() {
        let base = trs([0.3, -0.2, 0.7], [0.5, -0.9, 1.3], [1.4, 0.7, 0.9]);
        // Random-ish fixed upstream seed.
        let mut up = M::zero();
        let mut v = 0.37f64;
        for i in 0..4 {
            for j in 0..4 {
                v = (v * 7.13 + 0.19).fract() * 2.0 - 1.0;
                up.m[i][j] = v;
            }
        }
        let adj = base.to_matrix_vjp(&up);
        let h = 1e-6;
        let contract = |m: &M| {
            let mut acc = 0.0;
            for i in 0..4 {
                for j in 0..4 {
                    acc += up.m[i][j] * m.m[i][j];
                }
            }
            acc
        };
        let channels: [(usize, f64); 9] = [
            (0, adj.translation[0]),
            (1, adj.translation[1]),
            (2, adj.translation[2]),
            (3, adj.rotation[0]),
            (4, adj.rotation[1]),
            (5, adj.rotation[2]),
            (6, adj.scale[0]),
            (7, adj.scale[1]),
            (8, adj.scale[2]),
        ];
        for (idx, analytic) in channels {
            let mut plus = base;
            let mut minus = base;
            let slot = |t: &mut Trs<f64>, d: f64| match idx {
                0..=2 => t.translation[idx] += d,
                3..=5 => t.rotation[idx - 3] += d,
                _ => t.scale[idx - 6] += d,
            };
            slot(&mut plus, h);
            slot(&mut minus, -h);
            let numeric = (contract(&plus.to_matrix()) - contract(&minus.to_matrix())) / (2.0 * h);
            let denom = analytic.abs().max(numeric.abs()).max(1e-12);
            assert!(
                (analytic - numeric).abs() / denom < 1e-5,
                "channel {idx}: analytic {analytic} vs numeric {numeric}"
            );
        }
    }

    #[test]
    fn generic_scalar_f32_path() {
        let t: Trs<f32> = Trs::neutral();
        assert_eq!(t.to_matrix(), Matrix4::<f32>::identity());
    }
}
