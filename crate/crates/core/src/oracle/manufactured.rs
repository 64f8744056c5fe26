//! Closed-form displacement/temperature triples used to verify the solvers
//! and the physics residuals.

use std::f64::consts::PI;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{Material, OracleError};

/// Second derivatives (xx, yy, xy) of a scalar field.
pub type Hessian = [f64; 3];

/// Registry of manufactured solutions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ManufacturedCase {
    /// u = x^2 y / 100, v = x y^2 / 100, T = x^2 - y^2.
    Polynomial,
    /// u = v = sin(pi x) sin(pi y) / 50, T = e^x cos y.
    Trigonometric,
}

impl FromStr for ManufacturedCase {
    type Err = OracleError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "polynomial" => Ok(Self::Polynomial),
            "trigonometric" | "trig" => Ok(Self::Trigonometric),
            other => Err(OracleError::UnknownCase(other.to_string())),
        }
    }
}

impl ManufacturedCase {
    pub const ALL: [ManufacturedCase; 2] = [Self::Polynomial, Self::Trigonometric];

    pub fn name(self) -> &'static str {
        match self {
            Self::Polynomial => "polynomial",
            Self::Trigonometric => "trigonometric",
        }
    }

    pub fn displacement(self, p: [f64; 2]) -> [f64; 2] {
        let [x, y] = p;
        match self {
            Self::Polynomial => [x * x * y / 100.0, x * y * y / 100.0],
            Self::Trigonometric => {
                let s = (PI * x).sin() * (PI * y).sin() / 50.0;
                [s, s]
            }
        }
    }

    /// (du/dx, du/dy) and (dv/dx, dv/dy).
    pub fn displacement_gradient(self, p: [f64; 2]) -> [[f64; 2]; 2] {
        let [x, y] = p;
        match self {
            Self::Polynomial => [
                [2.0 * x * y / 100.0, x * x / 100.0],
                [y * y / 100.0, 2.0 * x * y / 100.0],
            ],
            Self::Trigonometric => {
                let gx = PI * (PI * x).cos() * (PI * y).sin() / 50.0;
                let gy = PI * (PI * x).sin() * (PI * y).cos() / 50.0;
                [[gx, gy], [gx, gy]]
            }
        }
    }

    /// Hessians of u and v.
    pub fn displacement_hessian(self, p: [f64; 2]) -> [Hessian; 2] {
        let [x, y] = p;
        match self {
            Self::Polynomial => [
                [2.0 * y / 100.0, 0.0, 2.0 * x / 100.0],
                [0.0, 2.0 * x / 100.0, 2.0 * y / 100.0],
            ],
            Self::Trigonometric => {
                let s = (PI * x).sin() * (PI * y).sin() / 50.0;
                let c = (PI * x).cos() * (PI * y).cos() / 50.0;
                let h = [-PI * PI * s, -PI * PI * s, PI * PI * c];
                [h, h]
            }
        }
    }

    pub fn temperature(self, p: [f64; 2]) -> f64 {
        let [x, y] = p;
        match self {
            Self::Polynomial => x * x - y * y,
            Self::Trigonometric => x.exp() * y.cos(),
        }
    }

    pub fn temperature_gradient(self, p: [f64; 2]) -> [f64; 2] {
        let [x, y] = p;
        match self {
            Self::Polynomial => [2.0 * x, -2.0 * y],
            Self::Trigonometric => [x.exp() * y.cos(), -x.exp() * y.sin()],
        }
    }

    /// Momentum forcing (s_x, s_y): the normalized thermoelastic operator
    /// applied to this case's fields.
    pub fn forcing(self, p: [f64; 2], mat: &Material) -> [f64; 2] {
        let [hu, hv] = self.displacement_hessian(p);
        strong_form(hu, hv, self.temperature_gradient(p), mat)
    }
}

/// Normalized plane-stress thermoelastic operator at a point, given the
/// Hessians of u and v and the temperature gradient.
pub fn strong_form(hu: Hessian, hv: Hessian, grad_t: [f64; 2], mat: &Material) -> [f64; 2] {
    let a = 1.0 / (1.0 - mat.nu);
    let b = mat.nu / (1.0 - mat.nu);
    let beta = mat.alpha / (1.0 - mat.nu);
    let [u_xx, u_yy, u_xy] = hu;
    let [v_xx, v_yy, v_xy] = hv;
    let sx = -(a * u_xx + b * v_xy) - 0.5 * (u_yy + v_xy) + beta * grad_t[0];
    let sy = -(b * u_xy + a * v_yy) - 0.5 * (u_xy + v_xx) + beta * grad_t[1];
    [sx, sy]
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Sixth-order central differences.
    fn d1(f: &dyn Fn(f64) -> f64, x: f64, h: f64) -> f64 {
        (-f(x - 3.0 * h) + 9.0 * f(x - 2.0 * h) - 45.0 * f(x - h) + 45.0 * f(x + h)
            - 9.0 * f(x + 2.0 * h)
            + f(x + 3.0 * h))
            / (60.0 * h)
    }

    fn d2(f: &dyn Fn(f64) -> f64, x: f64, h: f64) -> f64 {
        (2.0 * f(x - 3.0 * h) - 27.0 * f(x - 2.0 * h) + 270.0 * f(x - h) - 490.0 * f(x)
            + 270.0 * f(x + h)
            - 27.0 * f(x + 2.0 * h)
            + 2.0 * f(x + 3.0 * h))
            / (180.0 * h * h)
    }

    fn fd_hessian(f: &dyn Fn([f64; 2]) -> f64, p: [f64; 2]) -> Hessian {
        let h = 1e-3;
        let fxx = d2(&|x| f([x, p[1]]), p[0], h);
        let fyy = d2(&|y| f([p[0], y]), p[1], h);
        let fxy = d1(&|y| d1(&|x| f([x, y]), p[0], h), p[1], h);
        [fxx, fyy, fxy]
    }

    #[test]
    fn polynomial_case_at_origin() {
        let c = ManufacturedCase::Polynomial;
        assert_eq!(c.displacement([0.0, 0.0]), [0.0, 0.0]);
        assert_eq!(c.temperature([0.0, 0.0]), 0.0);
    }

    #[test]
    fn forcing_matches_finite_difference_pipeline() {
        let mat = Material::default();
        let points = [[0.37, -0.61], [0.8, 0.45], [-0.52, 0.13]];
        for case in ManufacturedCase::ALL {
            for &p in &points {
                let u = |q: [f64; 2]| case.displacement(q)[0];
                let v = |q: [f64; 2]| case.displacement(q)[1];
                let t = |q: [f64; 2]| case.temperature(q);
                let hu = fd_hessian(&u, p);
                let hv = fd_hessian(&v, p);
                let gt = [d1(&|x| t([x, p[1]]), p[0], 1e-3), d1(&|y| t([p[0], y]), p[1], 1e-3)];
                // Assemble the operator independently of `strong_form`.
                let nu = mat.nu;
                let sx = -(hu[0] + nu * hv[2]) / (1.0 - nu) - 0.5 * (hu[1] + hv[2])
                    + mat.alpha * gt[0] / (1.0 - nu);
                let sy = -(nu * hu[2] + hv[1]) / (1.0 - nu) - 0.5 * (hu[2] + hv[0])
                    + mat.alpha * gt[1] / (1.0 - nu);
                let s = case.forcing(p, &mat);
                assert!((s[0] - sx).abs() < 1e-10, "{case:?} {p:?}: {} vs {sx}", s[0]);
                assert!((s[1] - sy).abs() < 1e-10, "{case:?} {p:?}: {} vs {sy}", s[1]);
            }
        }
    }

    #[test]
    fn analytic_gradients_match_differences() {
        for case in ManufacturedCase::ALL {
            let p = [0.21, 0.67];
            let g = case.displacement_gradient(p);
            for (c, row) in g.iter().enumerate() {
                let f = |q: [f64; 2]| case.displacement(q)[c];
                assert!((row[0] - d1(&|x| f([x, p[1]]), p[0], 1e-3)).abs() < 1e-12);
                assert!((row[1] - d1(&|y| f([p[0], y]), p[1], 1e-3)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn unknown_case_rejected() {
        assert!("cubic".parse::<ManufacturedCase>().is_err());
        assert_eq!("trig".parse::<ManufacturedCase>().unwrap(), ManufacturedCase::Trigonometric);
    }
}
