//! Direction encodings, sampling patterns and small geometric helpers.
//!
//! Everything here is a pure function over 64-bit reals. Atlases elsewhere
//! store 32-bit texels, but all direction math stays in `f64`.

use std::f64::consts::PI;
use std::ops::{Deref, Neg};

use glam::{DMat3, DQuat, DVec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::MathError;

/// Linear RGB radiance or irradiance.
pub type Rgb = DVec3;

/// Allowed deviation of `|v|` from 1 before a vector is rejected as non-unit.
pub const UNIT_TOLERANCE: f64 = 1e-3;

/// `(sqrt(5) - 1) / 2`, the golden-ratio conjugate used for Fibonacci azimuths.
pub const GOLDEN_RATIO_CONJUGATE: f64 = 0.618_033_988_749_894_9;

/// A unit-length direction.
///
/// Dereferences to the underlying [`DVec3`] so it can be used directly in
/// vector arithmetic.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UnitVec3(DVec3);

impl UnitVec3 {
    pub const X: Self = Self(DVec3::X);
    pub const Y: Self = Self(DVec3::Y);
    pub const Z: Self = Self(DVec3::Z);
    pub const NEG_X: Self = Self(DVec3::NEG_X);
    pub const NEG_Y: Self = Self(DVec3::NEG_Y);
    pub const NEG_Z: Self = Self(DVec3::NEG_Z);

    /// Accepts a vector whose length is within [`UNIT_TOLERANCE`] of one and
    /// renormalizes it.
    pub fn new(v: DVec3) -> Result<Self, MathError> {
        let len = v.length();
        if !len.is_finite() || (len - 1.0).abs() > UNIT_TOLERANCE {
            return Err(MathError::NotUnit { length: len });
        }
        Ok(Self(v / len))
    }

    /// Normalizes an arbitrary non-zero vector.
    pub fn normalize(v: DVec3) -> Option<Self> {
        let len = v.length();
        if len > 1e-300 && len.is_finite() {
            Some(Self(v / len))
        } else {
            None
        }
    }

    /// Wraps a vector the caller knows to be unit length.
    #[inline]
    pub fn new_unchecked(v: DVec3) -> Self {
        debug_assert!(
            (v.length() - 1.0).abs() <= UNIT_TOLERANCE,
            "non-unit vector {v:?}"
        );
        Self(v)
    }

    #[inline]
    pub fn get(self) -> DVec3 {
        self.0
    }

    /// Angle between two unit vectors, robust for tiny angles.
    pub fn angle_to(self, other: UnitVec3) -> f64 {
        let cross = self.0.cross(other.0).length();
        let dot = self.0.dot(other.0);
        cross.atan2(dot)
    }
}

impl Deref for UnitVec3 {
    type Target = DVec3;

    #[inline]
    fn deref(&self) -> &DVec3 {
        &self.0
    }
}

impl Neg for UnitVec3 {
    type Output = UnitVec3;

    #[inline]
    fn neg(self) -> UnitVec3 {
        UnitVec3(-self.0)
    }
}

impl From<UnitVec3> for DVec3 {
    fn from(v: UnitVec3) -> DVec3 {
        v.0
    }
}

/// A point on the octahedral unit square.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OctUV {
    pub u: f64,
    pub v: f64,
}

impl OctUV {
    pub fn new(u: f64, v: f64) -> Result<Self, MathError> {
        if !(0.0..=1.0).contains(&u) || !(0.0..=1.0).contains(&v) {
            return Err(MathError::UvOutOfRange { u, v });
        }
        Ok(Self { u, v })
    }
}

#[inline]
fn sign_not_zero(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// Octahedral map from the sphere to the unit square. `+Z` lands at the
/// center and `-Z` on the four corners.
pub fn octa_encode(d: UnitVec3) -> OctUV {
    let l1 = d.x.abs() + d.y.abs() + d.z.abs();
    let mut px = d.x / l1;
    let mut py = d.y / l1;
    if d.z < 0.0 {
        let fx = (1.0 - py.abs()) * sign_not_zero(px);
        let fy = (1.0 - px.abs()) * sign_not_zero(py);
        px = fx;
        py = fy;
    }
    OctUV {
        u: (px * 0.5 + 0.5).clamp(0.0, 1.0),
        v: (py * 0.5 + 0.5).clamp(0.0, 1.0),
    }
}

/// Inverse of [`octa_encode`].
pub fn octa_decode(uv: OctUV) -> UnitVec3 {
    let mut x = uv.u * 2.0 - 1.0;
    let mut y = uv.v * 2.0 - 1.0;
    let z = 1.0 - x.abs() - y.abs();
    if z < 0.0 {
        let fx = (1.0 - y.abs()) * sign_not_zero(x);
        let fy = (1.0 - x.abs()) * sign_not_zero(y);
        x = fx;
        y = fy;
    }
    let v = DVec3::new(x, y, z);
    UnitVec3(v / v.length())
}

/// Direction through the center of interior texel `(tx, ty)` of a `res`×`res`
/// octahedral tile.
pub fn texel_direction(tx: usize, ty: usize, res: usize) -> Result<UnitVec3, MathError> {
    if res == 0 || tx >= res || ty >= res {
        return Err(MathError::TexelOutOfRange { tx, ty, res });
    }
    let r = res as f64;
    Ok(octa_decode(OctUV {
        u: (tx as f64 + 0.5) / r,
        v: (ty as f64 + 0.5) / r,
    }))
}

/// Texel-center directions for a whole tile, row-major.
pub fn texel_directions(res: usize) -> Vec<UnitVec3> {
    let mut out = Vec::with_capacity(res * res);
    for ty in 0..res {
        for tx in 0..res {
            out.push(texel_direction(tx, ty, res).expect("in range"));
        }
    }
    out
}

/// Point `i` of the `n`-point spherical Fibonacci set.
pub fn spherical_fibonacci(i: usize, n: usize) -> UnitVec3 {
    debug_assert!(n >= 1 && i < n);
    let z = 1.0 - (2.0 * i as f64 + 1.0) / n as f64;
    let phi = 2.0 * PI * (i as f64 * GOLDEN_RATIO_CONJUGATE).fract();
    let r = (1.0 - z * z).max(0.0).sqrt();
    UnitVec3::new_unchecked(DVec3::new(r * phi.cos(), r * phi.sin(), z))
}

/// A proper rotation matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rotation3(DMat3);

impl Rotation3 {
    pub const IDENTITY: Self = Self(DMat3::IDENTITY);

    pub fn from_quat(q: DQuat) -> Self {
        Self(DMat3::from_quat(q.normalize()))
    }

    pub fn matrix(&self) -> DMat3 {
        self.0
    }

    #[inline]
    pub fn rotate(&self, d: UnitVec3) -> UnitVec3 {
        UnitVec3::new_unchecked(self.0 * d.get())
    }
}

/// Uniformly distributed random rotation, a pure function of `seed`.
///
/// Uses Shoemake's uniform quaternion construction driven by a ChaCha8
/// stream.
pub fn random_rotation(seed: u64) -> Rotation3 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u1: f64 = rng.gen();
    let u2: f64 = rng.gen();
    let u3: f64 = rng.gen();
    let a = (1.0 - u1).sqrt();
    let b = u1.sqrt();
    let q = DQuat::from_xyzw(
        a * (2.0 * PI * u2).sin(),
        a * (2.0 * PI * u2).cos(),
        b * (2.0 * PI * u3).sin(),
        b * (2.0 * PI * u3).cos(),
    );
    Rotation3::from_quat(q)
}

/// Combines a base seed with stream identifiers (frame, volume, ...).
pub fn mix_seed(base: u64, parts: &[u64]) -> u64 {
    let mut h = splitmix64(base);
    for &p in parts {
        h = splitmix64(h ^ p.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    }
    h
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Orthonormal tangent frame around `n` (Duff et al. branchless form).
pub fn tangent_frame(n: DVec3) -> (DVec3, DVec3) {
    let sign = 1.0_f64.copysign(n.z);
    let a = -1.0 / (sign + n.z);
    let b = n.x * n.y * a;
    let t = DVec3::new(1.0 + sign * n.x * n.x * a, sign * b, -sign * n.x);
    let bt = DVec3::new(b, sign + n.y * n.y * a, -n.y);
    (t, bt)
}

/// Mirror reflection of incident direction `d` about normal `n`.
#[inline]
pub fn reflect(d: DVec3, n: DVec3) -> DVec3 {
    d - 2.0 * d.dot(n) * n
}

/// Rec. 709 luminance.
#[inline]
pub fn luminance(c: Rgb) -> f64 {
    0.2126 * c.x + 0.7152 * c.y + 0.0722 * c.z
}

/// Axis-aligned bounding box.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aabb {
    pub min: DVec3,
    pub max: DVec3,
}

impl Aabb {
    pub const EMPTY: Self = Self {
        min: DVec3::splat(f64::INFINITY),
        max: DVec3::splat(f64::NEG_INFINITY),
    };

    pub fn new(min: DVec3, max: DVec3) -> Self {
        Self { min, max }
    }

    pub fn from_points<I: IntoIterator<Item = DVec3>>(pts: I) -> Self {
        pts.into_iter().fold(Self::EMPTY, |b, p| b.include(p))
    }

    pub fn include(self, p: DVec3) -> Self {
        Self {
            min: self.min.min(p),
            max: self.max.max(p),
        }
    }

    pub fn union(self, o: Aabb) -> Self {
        Self {
            min: self.min.min(o.min),
            max: self.max.max(o.max),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.min.cmpgt(self.max).any()
    }

    /// Grows the box by `amount` on every axis in both directions.
    pub fn expand(self, amount: DVec3) -> Self {
        Self {
            min: self.min - amount,
            max: self.max + amount,
        }
    }

    pub fn contains(&self, p: DVec3) -> bool {
        p.cmpge(self.min).all() && p.cmple(self.max).all()
    }

    pub fn center(&self) -> DVec3 {
        (self.min + self.max) * 0.5
    }

    pub fn extent(&self) -> DVec3 {
        self.max - self.min
    }

    pub fn surface_area(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        let e = self.extent();
        2.0 * (e.x * e.y + e.y * e.z + e.z * e.x)
    }

    /// Euclidean distance from `p` to the box (0 inside).
    pub fn distance_to(&self, p: DVec3) -> f64 {
        let d = (self.min - p).max(p - self.max).max(DVec3::ZERO);
        d.length()
    }

    /// Slab test; returns the entry distance when the ray overlaps
    /// `[t_min, t_max]`.
    #[inline]
    pub fn ray_entry(&self, origin: DVec3, inv_dir: DVec3, t_min: f64, t_max: f64) -> Option<f64> {
        let t0 = (self.min - origin) * inv_dir;
        let t1 = (self.max - origin) * inv_dir;
        let tn = t0.min(t1);
        let tf = t0.max(t1);
        let enter = tn.max_element().max(t_min);
        let exit = tf.min_element().min(t_max);
        (enter <= exit).then_some(enter)
    }
}

/// A ray with a unit direction.
#[derive(Clone, Copy, Debug)]
pub struct Ray {
    pub origin: DVec3,
    pub dir: UnitVec3,
}

impl Ray {
    pub fn new(origin: DVec3, dir: UnitVec3) -> Self {
        Self { origin, dir }
    }

    #[inline]
    pub fn at(&self, t: f64) -> DVec3 {
        self.origin + *self.dir * t
    }
}
