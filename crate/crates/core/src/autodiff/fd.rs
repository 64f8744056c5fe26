//! Central finite differences, used as an independent oracle for the jets
//! and the parameter gradients.

/// Numeric value, gradient and Hessian of a function of (x, y).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Probe {
    pub value: f64,
    pub d_x: f64,
    pub d_y: f64,
    pub d_xx: f64,
    pub d_yy: f64,
    pub d_xy: f64,
}

/// `(f(x + h) - f(x - h)) / 2h`.
pub fn first(f: &dyn Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    assert!(h > 0.0, "step must be positive");
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// `(f(x + h) - 2 f(x) + f(x - h)) / h^2`.
pub fn second(f: &dyn Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    assert!(h > 0.0, "step must be positive");
    (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h)
}

/// Four-point stencil for the mixed derivative.
pub fn mixed(f: &dyn Fn([f64; 2]) -> f64, p: [f64; 2], h: f64) -> f64 {
    assert!(h > 0.0, "step must be positive");
    let [x, y] = p;
    (f([x + h, y + h]) - f([x + h, y - h]) - f([x - h, y + h]) + f([x - h, y - h])) / (4.0 * h * h)
}

/// All first and second derivatives of `f` at `p` with step `h`.
pub fn probe(f: &dyn Fn([f64; 2]) -> f64, p: [f64; 2], h: f64) -> Probe {
    let along_x = |x: f64| f([x, p[1]]);
    let along_y = |y: f64| f([p[0], y]);
    Probe {
        value: f(p),
        d_x: first(&along_x, p[0], h),
        d_y: first(&along_y, p[1], h),
        d_xx: second(&along_x, p[0], h),
        d_yy: second(&along_y, p[1], h),
        d_xy: mixed(f, p, h),
    }
}

/// Weights of the fourth-order first-derivative stencil at offsets -2..=2,
/// over `12 h`.
const D1: [f64; 5] = [1.0, -8.0, 0.0, 8.0, -1.0];
/// Same for the second derivative, over `12 h^2`.
const D2: [f64; 5] = [-1.0, 16.0, -30.0, 16.0, -1.0];

/// Like [`probe`] with fourth-order central stencils: truncation error
/// O(h^4) instead of O(h^2) at the same step.
pub fn probe_fourth_order(f: &dyn Fn([f64; 2]) -> f64, p: [f64; 2], h: f64) -> Probe {
    assert!(h > 0.0, "step must be positive");
    let at = |i: i32, j: i32| f([p[0] + f64::from(i) * h, p[1] + f64::from(j) * h]);
    let line = |w: &[f64; 5], along_x: bool| -> f64 {
        (-2..=2)
            .zip(w)
            .filter(|(_, &c)| c != 0.0)
            .map(|(k, c)| c * if along_x { at(k, 0) } else { at(0, k) })
            .sum()
    };
    let mut d_xy = 0.0;
    for (i, ci) in (-2..=2).zip(D1) {
        for (j, cj) in (-2..=2).zip(D1) {
            if ci != 0.0 && cj != 0.0 {
                d_xy += ci * cj * at(i, j);
            }
        }
    }
    Probe {
        value: f(p),
        d_x: line(&D1, true) / (12.0 * h),
        d_y: line(&D1, false) / (12.0 * h),
        d_xx: line(&D2, true) / (12.0 * h * h),
        d_yy: line(&D2, false) / (12.0 * h * h),
        d_xy: d_xy / (144.0 * h * h),
    }
}

/// `|a - b| / max(|a|, |b|, floor)`.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_at_three() {
        let f = |x: f64| x * x;
        assert!((first(&f, 3.0, 1e-4) - 6.0).abs() < 1e-7);
        assert!((second(&f, 3.0, 1e-4) - 2.0).abs() < 1e-4);
    }

    #[test]
    fn sine_at_zero() {
        assert!((first(&f64::sin, 0.0, 1e-4) - 1.0).abs() < 1e-8);
    }

    #[test]
    fn mixed_of_product() {
        let f = |p: [f64; 2]| p[0] * p[1];
        assert!((mixed(&f, [0.3, -2.0], 1e-3) - 1.0).abs() < 1e-9);
        let pr = probe(&f, [0.3, -2.0], 1e-3);
        assert!((pr.d_x + 2.0).abs() < 1e-9 && (pr.d_y - 0.3).abs() < 1e-9);
    }

    #[test]
    fn fourth_order_is_exact_on_quartics() {
        let f = |p: [f64; 2]| p[0].powi(4) + p[0].powi(3) * p[1] + p[1].powi(4);
        let [x, y] = [0.4, -0.7];
        let pr = probe_fourth_order(&f, [x, y], 1e-2);
        assert!((pr.d_x - (4.0 * x.powi(3) + 3.0 * x * x * y)).abs() < 1e-11);
        assert!((pr.d_yy - 12.0 * y * y).abs() < 1e-9);
        assert!((pr.d_xy - 3.0 * x * x).abs() < 1e-9);
    }

    #[test]
    fn fourth_order_beats_second_order() {
        let f = |p: [f64; 2]| (2.0 * p[0]).sin() * (3.0 * p[1]).cos();
        let p = [0.3, 0.2];
        let exact = -6.0 * (0.6f64).cos() * (0.6f64).sin();
        let low = (probe(&f, p, 1e-3).d_xy - exact).abs();
        let high = (probe_fourth_order(&f, p, 1e-3).d_xy - exact).abs();
        assert!(high < 1e-8 && high < low / 10.0, "{low} {high}");
    }

    #[test]
    #[should_panic(expected = "step must be positive")]
    fn zero_step_rejected() {
        first(&f64::sin, 0.0, 0.0);
    }
}
