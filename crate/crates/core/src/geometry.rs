//! Unit quaternions, camera poses and the roll-augmentation label rewrite.
//!
//! Quaternions are scalar-first `(w, x, y, z)`. Every constructor returns
//! the canonical member of the pair `{q, −q}`: `w > 0`, or when `w == 0`
//! the first nonzero of `x, y, z` is positive.
//!
//! Poses are camera-to-world. The camera frame looks along `+z` with `+x`
//! to the right and `+y` down the image.

use crate::error::{Error, Result};

/// Rows of a 3×3 matrix.
pub type Mat3 = [[f64; 3]; 3];

/// Smallest norm accepted by [`UnitQuaternion::normalize`].
pub const MIN_QUATERNION_NORM: f64 = 1e-12;

/// Sign applied to the roll angle in [`apply_roll_augmentation`].
///
/// With `+1`, rolling the camera by `θ` and rotating the rendered image by
/// `θ` with [`crate::imaging::rotate_image`] produce the same picture. The
/// render-rotate equivariance tests in `synthetic` pin this value.
pub const ROLL_SIGN: f64 = 1.0;

/// The camera's optical axis in its own frame.
pub const OPTICAL_AXIS: [f64; 3] = [0.0, 0.0, 1.0];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UnitQuaternion {
    w: f64,
    x: f64,
    y: f64,
    z: f64,
}

impl Default for UnitQuaternion {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl UnitQuaternion {
    pub const IDENTITY: Self = Self {
        w: 1.0,
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    /// Scales `raw` to unit length and picks the canonical sign.
    pub fn normalize(raw: [f64; 4]) -> Result<Self> {
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm > MIN_QUATERNION_NORM) || !norm.is_finite() {
            return Err(Error::DegenerateQuaternion { norm });
        }
        let [w, x, y, z] = raw.map(|v| v / norm);
        Ok(canonical(w, x, y, z))
    }

    /// Rotation of `theta_deg` degrees about the unit vector `axis`.
    pub fn from_axis_angle(axis: [f64; 3], theta_deg: f64) -> Result<Self> {
        let norm = axis.iter().map(|v| v * v).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(
                "from_axis_angle",
                format!("axis norm {norm} is not 1"),
            ));
        }
        let half = theta_deg.to_radians() / 2.0;
        let (s, c) = half.sin_cos();
        Ok(canonical(c, s * axis[0], s * axis[1], s * axis[2]))
    }

    pub fn w(&self) -> f64 {
        self.w
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    /// The same rotation with the opposite sign, deliberately not canonical.
    pub fn negated(&self) -> Self {
        Self {
            w: -self.w,
            x: -self.x,
            y: -self.y,
            z: -self.z,
        }
    }

    pub fn conjugate(&self) -> Self {
        canonical(self.w, -self.x, -self.y, -self.z)
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.w * other.w + self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    /// Hamilton product `self ⊗ rhs`, renormalized.
    pub fn mul(&self, rhs: &Self) -> Self {
        let (a, b) = (self, rhs);
        let w = a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z;
        let x = a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y;
        let y = a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x;
        let z = a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w;
        let n = (w * w + x * x + y * y + z * z).sqrt();
        canonical(w / n, x / n, y / n, z / n)
    }

    pub fn to_matrix(&self) -> Mat3 {
        let (w, x, y, z) = (self.w, self.x, self.y, self.z);
        [
            [
                1.0 - 2.0 * (y * y + z * z),
                2.0 * (x * y - w * z),
                2.0 * (x * z + w * y),
            ],
            [
                2.0 * (x * y + w * z),
                1.0 - 2.0 * (x * x + z * z),
                2.0 * (y * z - w * x),
            ],
            [
                2.0 * (x * z - w * y),
                2.0 * (y * z + w * x),
                1.0 - 2.0 * (x * x + y * y),
            ],
        ]
    }

    pub fn rotate(&self, v: [f64; 3]) -> [f64; 3] {
        mat_vec(&self.to_matrix(), v)
    }

    /// Converts a proper rotation matrix, choosing the branch on the largest
    /// of `trace, R₀₀, R₁₁, R₂₂` for stability near 180°.
    pub fn from_matrix(r: &Mat3) -> Result<Self> {
        let mut orthogonality: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let dot: f64 = (0..3).map(|k| r[k][i] * r[k][j]).sum();
                let target = if i == j { 1.0 } else { 0.0 };
                orthogonality = orthogonality.max((dot - target).abs());
            }
        }
        let det = determinant(r);
        if !(orthogonality <= 1e-6) || !((det - 1.0).abs() <= 1e-6) {
            return Err(Error::NotRotation { orthogonality, det });
        }
        let trace = r[0][0] + r[1][1] + r[2][2];
        let q = if trace >= r[0][0] && trace >= r[1][1] && trace >= r[2][2] {
            let s = 2.0 * (1.0 + trace).sqrt();
            [
                0.25 * s,
                (r[2][1] - r[1][2]) / s,
                (r[0][2] - r[2][0]) / s,
                (r[1][0] - r[0][1]) / s,
            ]
        } else if r[0][0] >= r[1][1] && r[0][0] >= r[2][2] {
            let s = 2.0 * (1.0 + r[0][0] - r[1][1] - r[2][2]).sqrt();
            [
                (r[2][1] - r[1][2]) / s,
                0.25 * s,
                (r[0][1] + r[1][0]) / s,
                (r[0][2] + r[2][0]) / s,
            ]
        } else if r[1][1] >= r[2][2] {
            let s = 2.0 * (1.0 + r[1][1] - r[0][0] - r[2][2]).sqrt();
            [
                (r[0][2] - r[2][0]) / s,
                (r[0][1] + r[1][0]) / s,
                0.25 * s,
                (r[1][2] + r[2][1]) / s,
            ]
        } else {
            let s = 2.0 * (1.0 + r[2][2] - r[0][0] - r[1][1]).sqrt();
            [
                (r[1][0] - r[0][1]) / s,
                (r[0][2] + r[2][0]) / s,
                (r[1][2] + r[2][1]) / s,
                0.25 * s,
            ]
        };
        Self::normalize(q)
    }
}

fn canonical(w: f64, x: f64, y: f64, z: f64) -> UnitQuaternion {
    let flip = if w != 0.0 {
        w < 0.0
    } else {
        [x, y, z].into_iter().find(|v| *v != 0.0).is_some_and(|v| v < 0.0)
    };
    // adding 0.0 turns -0.0 into +0.0 so that canonical forms compare bitwise
    if flip {
        UnitQuaternion {
            w: -w + 0.0,
            x: -x + 0.0,
            y: -y + 0.0,
            z: -z + 0.0,
        }
    } else {
        UnitQuaternion {
            w: w + 0.0,
            x: x + 0.0,
            y: y + 0.0,
            z: z + 0.0,
        }
    }
}

/// Hamilton product `a ⊗ b`.
pub fn hamilton_product(a: &UnitQuaternion, b: &UnitQuaternion) -> UnitQuaternion {
    a.mul(b)
}

/// Rotation angle between `a` and `b` in degrees, in `[0, 180]`.
///
/// Equal to `2·acos(min(1, |a·b|))`, so `q` and `−q` are at distance zero.
/// Evaluated as `2·atan2(‖v‖, |a·b|)` with `v` the vector part of `a⁻¹ ⊗ b`,
/// which keeps full precision for nearly equal rotations.
pub fn angular_distance_deg(a: &UnitQuaternion, b: &UnitQuaternion) -> f64 {
    let w = a.dot(b).abs();
    // paired so that a == b cancels exactly
    let x = (a.w * b.x - a.x * b.w) + (a.z * b.y - a.y * b.z);
    let y = (a.w * b.y - a.y * b.w) + (a.x * b.z - a.z * b.x);
    let z = (a.w * b.z - a.z * b.w) + (a.y * b.x - a.x * b.y);
    let s = (x * x + y * y + z * z).sqrt();
    2.0 * s.atan2(w).to_degrees()
}

pub fn mat_vec(m: &Mat3, v: [f64; 3]) -> [f64; 3] {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

pub fn determinant(m: &Mat3) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// Camera-to-world pose: position in meters and orientation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    pub position: [f64; 3],
    pub orientation: UnitQuaternion,
}

impl Pose {
    pub fn new(position: [f64; 3], orientation: UnitQuaternion) -> Result<Self> {
        if position.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite position {position:?}")));
        }
        Ok(Self {
            position,
            orientation,
        })
    }

    /// Splits a 4×4 homogeneous transform (row-major) into a pose.
    pub fn from_homogeneous(m: &[[f64; 4]; 4]) -> Result<Self> {
        let bottom = [m[3][0], m[3][1], m[3][2], m[3][3]];
        if bottom.iter().zip([0.0, 0.0, 0.0, 1.0]).any(|(a, b)| (a - b).abs() > 1e-6) {
            return Err(Error::Data(format!("bottom row {bottom:?} is not [0 0 0 1]")));
        }
        let r = [
            [m[0][0], m[0][1], m[0][2]],
            [m[1][0], m[1][1], m[1][2]],
            [m[2][0], m[2][1], m[2][2]],
        ];
        let q = UnitQuaternion::from_matrix(&r)?;
        Self::new([m[0][3], m[1][3], m[2][3]], q)
    }

    /// The inverse transform (world-to-camera when `self` is camera-to-world).
    pub fn inverse(&self) -> Self {
        let q = self.orientation.conjugate();
        let t = q.rotate(self.position);
        Self {
            position: [-t[0], -t[1], -t[2]],
            orientation: q,
        }
    }
}

/// Rewrites a label for an image rotated in-plane by `theta_deg` degrees.
///
/// The position is copied untouched; the orientation is right-multiplied by
/// a rotation of `ROLL_SIGN · θ` about the camera's optical axis.
pub fn apply_roll_augmentation(label: &Pose, theta_deg: f64) -> Pose {
    if theta_deg == 0.0 {
        return *label;
    }
    let roll = UnitQuaternion::from_axis_angle(OPTICAL_AXIS, ROLL_SIGN * theta_deg)
        .expect("optical axis is a unit vector");
    Pose {
        position: label.position,
        orientation: label.orientation.mul(&roll),
    }
}
