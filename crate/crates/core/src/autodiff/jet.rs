use std::ops::{Add, Mul, Sub};

/// Number of stored slots in a [`Jet2`].
pub const SLOTS: usize = 6;

/// Slot positions inside a jet, in storage order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(usize)]
pub enum Slot {
    Val = 0,
    Dx = 1,
    Dy = 2,
    Dxx = 3,
    Dyy = 4,
    Dxy = 5,
}

impl Slot {
    pub const ALL: [Slot; SLOTS] = [Slot::Val, Slot::Dx, Slot::Dy, Slot::Dxx, Slot::Dyy, Slot::Dxy];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// A value with its first and second derivatives with respect to (x, y).
///
/// Only one mixed derivative is stored; symmetry of the Hessian is structural.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Jet2 {
    pub val: f64,
    pub d_x: f64,
    pub d_y: f64,
    pub d_xx: f64,
    pub d_yy: f64,
    pub d_xy: f64,
}

impl Jet2 {
    pub fn constant(val: f64) -> Self {
        Self { val, ..Self::default() }
    }

    /// The input coordinate x as a jet.
    pub fn var_x(x: f64) -> Self {
        Self { val: x, d_x: 1.0, ..Self::default() }
    }

    /// The input coordinate y as a jet.
    pub fn var_y(y: f64) -> Self {
        Self { val: y, d_y: 1.0, ..Self::default() }
    }

    pub fn from_slots(s: [f64; SLOTS]) -> Self {
        Self { val: s[0], d_x: s[1], d_y: s[2], d_xx: s[3], d_yy: s[4], d_xy: s[5] }
    }

    pub fn slots(&self) -> [f64; SLOTS] {
        [self.val, self.d_x, self.d_y, self.d_xx, self.d_yy, self.d_xy]
    }

    pub fn get(&self, slot: Slot) -> f64 {
        self.slots()[slot.index()]
    }

    pub fn scale(self, k: f64) -> Self {
        Self::from_slots(self.slots().map(|v| v * k))
    }

    /// Applies a scalar function given its value and first three derivatives
    /// at `self.val`.
    pub fn chain(self, f: f64, f1: f64, f2: f64) -> Self {
        Self {
            val: f,
            d_x: f1 * self.d_x,
            d_y: f1 * self.d_y,
            d_xx: f2 * self.d_x * self.d_x + f1 * self.d_xx,
            d_yy: f2 * self.d_y * self.d_y + f1 * self.d_yy,
            d_xy: f2 * self.d_x * self.d_y + f1 * self.d_xy,
        }
    }

    /// Hyperbolic tangent, `(e^{2z} - 1) / (e^{2z} + 1)`.
    pub fn tanh(self) -> Self {
        let s = tanh(self.val);
        let s1 = 1.0 - s * s;
        let s2 = -2.0 * s * s1;
        self.chain(s, s1, s2)
    }
}

impl Add for Jet2 {
    type Output = Jet2;

    fn add(self, rhs: Jet2) -> Jet2 {
        let a = self.slots();
        let b = rhs.slots();
        Jet2::from_slots(std::array::from_fn(|i| a[i] + b[i]))
    }
}

impl Sub for Jet2 {
    type Output = Jet2;

    fn sub(self, rhs: Jet2) -> Jet2 {
        let a = self.slots();
        let b = rhs.slots();
        Jet2::from_slots(std::array::from_fn(|i| a[i] - b[i]))
    }
}

impl Mul for Jet2 {
    type Output = Jet2;

    fn mul(self, rhs: Jet2) -> Jet2 {
        let (a, b) = (self, rhs);
        Jet2 {
            val: a.val * b.val,
            d_x: a.d_x * b.val + a.val * b.d_x,
            d_y: a.d_y * b.val + a.val * b.d_y,
            d_xx: a.d_xx * b.val + 2.0 * a.d_x * b.d_x + a.val * b.d_xx,
            d_yy: a.d_yy * b.val + 2.0 * a.d_y * b.d_y + a.val * b.d_yy,
            d_xy: a.d_xy * b.val + a.d_x * b.d_y + a.d_y * b.d_x + a.val * b.d_xy,
        }
    }
}

/// Jet-valued tanh; see [`Jet2::tanh`].
pub fn tanh_jet(z: Jet2) -> Jet2 {
    z.tanh()
}

/// Scalar tanh. Away from zero `1 - 2 / (e^{2|z|} + 1)` is accurate to a few
/// ulp and much cheaper than the libm routine; near zero that form cancels, so
/// libm is used there.
#[inline]
pub fn tanh(z: f64) -> f64 {
    let a = z.abs();
    if a < 0.25 {
        z.tanh()
    } else {
        (1.0 - 2.0 / ((2.0 * a).exp() + 1.0)).copysign(z)
    }
}

/// sigma, sigma', sigma'', sigma''' of tanh at `z`.
#[inline]
pub(crate) fn tanh_derivatives(z: f64) -> [f64; 4] {
    let s = tanh(z);
    let s1 = 1.0 - s * s;
    let s2 = -2.0 * s * s1;
    let s3 = -2.0 * s1 * s1 + 4.0 * s * s * s1;
    [s, s1, s2, s3]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::fd;

    #[test]
    fn tanh_at_zero() {
        let out = Jet2 { d_x: 1.0, ..Jet2::default() }.tanh();
        assert_eq!(out.val, 0.0);
        assert_eq!(out.d_x, 1.0);
        assert_eq!(out.d_xx, 0.0);
    }

    #[test]
    fn tanh_of_one() {
        // (e^2 - 1) / (e^2 + 1) to 16 digits: 0.7615941559557649
        let out = Jet2::constant(1.0).tanh();
        assert!((out.val - 0.761_594_155_955_764_9).abs() < 1e-15);
        assert_eq!(out.d_x, 0.0);
    }

    #[test]
    fn tanh_of_affine_matches_differences() {
        let f = |x: f64, y: f64| (0.7 * x - 1.3 * y + 0.2).tanh();
        let (x, y) = (0.4, -0.3);
        let jet = (Jet2::var_x(x).scale(0.7) - Jet2::var_y(y).scale(1.3) + Jet2::constant(0.2)).tanh();
        let probe = fd::probe(&|p: [f64; 2]| f(p[0], p[1]), [x, y], 1e-3);
        let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-12);
        assert!(rel(jet.d_x, probe.d_x) < 1e-5);
        assert!(rel(jet.d_y, probe.d_y) < 1e-5);
        assert!(rel(jet.d_xx, probe.d_xx) < 1e-5);
        assert!(rel(jet.d_yy, probe.d_yy) < 1e-5);
        assert!(rel(jet.d_xy, probe.d_xy) < 1e-5);
    }

    #[test]
    fn product_rule_matches_polynomial() {
        // f = x^2 y: f_xx = 2y, f_xy = 2x, f_yy = 0
        let x = Jet2::var_x(1.5);
        let y = Jet2::var_y(-2.0);
        let f = x * x * y;
        assert_eq!(f.val, -4.5);
        assert_eq!(f.d_x, -6.0);
        assert_eq!(f.d_y, 2.25);
        assert_eq!(f.d_xx, -4.0);
        assert_eq!(f.d_xy, 3.0);
        assert_eq!(f.d_yy, 0.0);
    }

    #[test]
    fn scalar_tanh_agrees_with_libm() {
        let mut worst = 0.0f64;
        for i in -40_000..=40_000 {
            let z = i as f64 * 5e-4;
            let (a, b) = (tanh(z), z.tanh());
            worst = worst.max((a - b).abs() / b.abs().max(f64::MIN_POSITIVE));
        }
        assert!(worst < 4.0 * f64::EPSILON, "{worst:e}");
        assert_eq!(tanh(800.0), 1.0);
        assert_eq!(tanh(-800.0), -1.0);
        assert_eq!(tanh(0.0), 0.0);
    }

    #[test]
    fn third_derivative_of_tanh() {
        let z = 0.37;
        let h = 1e-4;
        let d2 = |z: f64| tanh_derivatives(z)[2];
        let numeric = (d2(z + h) - d2(z - h)) / (2.0 * h);
        assert!((tanh_derivatives(z)[3] - numeric).abs() < 1e-7);
    }
}
