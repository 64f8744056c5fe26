use serde::{Deserialize, Serialize};

use super::TrainingError;
use crate::autodiff::JetBatch;
use crate::geometry::SensorSet;
use crate::oracle::Material;

/// Coefficients of the normalized momentum operator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentumCoefficients {
    /// `1 / (1 - nu)`
    pub a: f64,
    /// `nu / (1 - nu)`
    pub b: f64,
    /// `alpha / (1 - nu)`
    pub beta: f64,
}

impl MomentumCoefficients {
    pub fn new(mat: &Material) -> Self {
        let k = 1.0 / (1.0 - mat.nu);
        Self { a: k, b: mat.nu * k, beta: mat.alpha * k }
    }
}

/// Mean squared residuals of one geometry.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ResidualBreakdown {
    pub j_mom_x: f64,
    pub j_mom_y: f64,
    pub j_sensor: f64,
    pub n: usize,
    pub m: usize,
}

impl ResidualBreakdown {
    /// `w_m (J_x + J_y) + w_s J_s`.
    pub fn weighted(&self, omega_momentum: f64, omega_sensor: f64) -> f64 {
        omega_momentum * (self.j_mom_x + self.j_mom_y) + omega_sensor * self.j_sensor
    }
}

/// Pointwise momentum residuals `(r_x, r_y)`.
///
/// `jets` holds the predicted `(u, v)` as channels 0 and 1.
pub fn momentum_residuals(
    jets: &JetBatch,
    temp_grad: &[[f64; 2]],
    mat: &Material,
    forcing: Option<&[[f64; 2]]>,
) -> Result<Vec<[f64; 2]>, TrainingError> {
    let n = jets.points();
    if jets.channels() != 2 {
        return Err(TrainingError::Shape(format!("expected 2 output channels, found {}", jets.channels())));
    }
    if temp_grad.len() != n {
        return Err(TrainingError::Shape(format!("{} temperature gradients for {n} points", temp_grad.len())));
    }
    if let Some(f) = forcing {
        if f.len() != n {
            return Err(TrainingError::Shape(format!("{} forcing values for {n} points", f.len())));
        }
    }
    let k = MomentumCoefficients::new(mat);
    Ok((0..n)
        .map(|p| {
            let u = jets.get(p, 0);
            let v = jets.get(p, 1);
            let s = forcing.map_or([0.0, 0.0], |f| f[p]);
            let rx = -(k.a * u.d_xx + k.b * v.d_xy) - 0.5 * (u.d_yy + v.d_xy) + k.beta * temp_grad[p][0] - s[0];
            let ry = -(k.b * u.d_xy + k.a * v.d_yy) - 0.5 * (u.d_xy + v.d_xx) + k.beta * temp_grad[p][1] - s[1];
            [rx, ry]
        })
        .collect())
}

/// `(J_mom_x, J_mom_y)`: mean squared momentum residuals over all points.
pub fn residual_momentum(
    jets: &JetBatch,
    temp_grad: &[[f64; 2]],
    mat: &Material,
    forcing: Option<&[[f64; 2]]>,
) -> Result<(f64, f64), TrainingError> {
    let r = momentum_residuals(jets, temp_grad, mat, forcing)?;
    if r.is_empty() {
        return Ok((0.0, 0.0));
    }
    let n = r.len() as f64;
    let jx = r.iter().map(|r| r[0] * r[0]).sum::<f64>() / n;
    let jy = r.iter().map(|r| r[1] * r[1]).sum::<f64>() / n;
    Ok((jx, jy))
}

fn check_sensors(n: usize, sensors: &SensorSet) -> Result<(), TrainingError> {
    if sensors.is_empty() {
        return Err(TrainingError::NoSensors);
    }
    if sensors.u.len() != sensors.len() || sensors.v.len() != sensors.len() {
        return Err(TrainingError::Shape("sensor value count differs from index count".into()));
    }
    if let Some(&bad) = sensors.indices.iter().find(|&&i| i >= n) {
        return Err(TrainingError::SensorIndex { index: bad, points: n });
    }
    Ok(())
}

/// Mean over sensors of `(u~ - u)^2 + (v~ - v)^2`; `predicted` covers every
/// cloud point.
pub fn residual_sensor(predicted: &[[f64; 2]], sensors: &SensorSet) -> Result<f64, TrainingError> {
    check_sensors(predicted.len(), sensors)?;
    let sum: f64 = sensors
        .indices
        .iter()
        .enumerate()
        .map(|(k, &i)| {
            let du = predicted[i][0] - sensors.u[k];
            let dv = predicted[i][1] - sensors.v[k];
            du * du + dv * dv
        })
        .sum();
    Ok(sum / sensors.len() as f64)
}

/// Mean over the batch of each geometry's weighted loss.
pub fn batch_loss(items: &[ResidualBreakdown], omega_momentum: f64, omega_sensor: f64) -> Result<f64, TrainingError> {
    if items.is_empty() {
        return Err(TrainingError::EmptyBatch);
    }
    Ok(items.iter().map(|b| b.weighted(omega_momentum, omega_sensor)).sum::<f64>() / items.len() as f64)
}

/// Inputs of one geometry's loss besides the network output.
#[derive(Debug, Clone, Copy)]
pub struct LossInputs<'a> {
    pub temp_grad: &'a [[f64; 2]],
    pub forcing: Option<&'a [[f64; 2]]>,
    pub sensors: &'a SensorSet,
    pub material: &'a Material,
}

/// Residual breakdown of one geometry and the derivative of
/// `scale * (w_m (J_x + J_y) + w_s J_s)` with respect to every output jet entry.
pub fn loss_and_seed(
    jets: &JetBatch,
    inputs: &LossInputs<'_>,
    omega_momentum: f64,
    omega_sensor: f64,
    scale: f64,
) -> Result<(ResidualBreakdown, JetBatch), TrainingError> {
    let n = jets.points();
    let r = momentum_residuals(jets, inputs.temp_grad, inputs.material, inputs.forcing)?;
    check_sensors(n, inputs.sensors)?;
    let k = MomentumCoefficients::new(inputs.material);
    let mut seed = JetBatch::zeros(n, 2);
    let (mut jx, mut jy) = (0.0, 0.0);
    let cm = scale * omega_momentum * 2.0 / n as f64;
    for (p, &[rx, ry]) in r.iter().enumerate() {
        jx += rx * rx;
        jy += ry * ry;
        let (gx, gy) = (cm * rx, cm * ry);
        // Slots: 3 = d_xx, 4 = d_yy, 5 = d_xy; channel 0 = u, 1 = v.
        *seed.at_mut(3, p, 0) += -k.a * gx;
        *seed.at_mut(4, p, 0) += -0.5 * gx;
        *seed.at_mut(5, p, 1) += -(k.b + 0.5) * gx;
        *seed.at_mut(5, p, 0) += -(k.b + 0.5) * gy;
        *seed.at_mut(4, p, 1) += -k.a * gy;
        *seed.at_mut(3, p, 1) += -0.5 * gy;
    }
    let m = inputs.sensors.len();
    let cs = scale * omega_sensor * 2.0 / m as f64;
    let mut js = 0.0;
    for (k, &i) in inputs.sensors.indices.iter().enumerate() {
        let du = jets.at(0, i, 0) - inputs.sensors.u[k];
        let dv = jets.at(0, i, 1) - inputs.sensors.v[k];
        js += du * du + dv * dv;
        *seed.at_mut(0, i, 0) += cs * du;
        *seed.at_mut(0, i, 1) += cs * dv;
    }
    let breakdown = ResidualBreakdown {
        j_mom_x: jx / n as f64,
        j_mom_y: jy / n as f64,
        j_sensor: js / m as f64,
        n,
        m,
    };
    Ok((breakdown, seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Jet2;
    use crate::oracle::ManufacturedCase;

    fn exact_jets(case: ManufacturedCase, pts: &[[f64; 2]]) -> JetBatch {
        let mut jets = JetBatch::zeros(pts.len(), 2);
        for (i, &p) in pts.iter().enumerate() {
            let val = case.displacement(p);
            let grad = case.displacement_gradient(p);
            let hess = case.displacement_hessian(p);
            for c in 0..2 {
                jets.set(
                    i,
                    c,
                    Jet2 {
                        val: val[c],
                        d_x: grad[c][0],
                        d_y: grad[c][1],
                        d_xx: hess[c][0],
                        d_yy: hess[c][1],
                        d_xy: hess[c][2],
                    },
                );
            }
        }
        jets
    }

    fn points() -> Vec<[f64; 2]> {
        (0..25).map(|i| [-0.9 + 0.07 * i as f64, 0.8 - 0.06 * i as f64]).collect()
    }

    #[test]
    fn manufactured_fields_have_zero_residual() {
        let mat = Material::default();
        let pts = points();
        for case in [ManufacturedCase::Polynomial, ManufacturedCase::Trigonometric] {
            let jets = exact_jets(case, &pts);
            let tg: Vec<_> = pts.iter().map(|&p| case.temperature_gradient(p)).collect();
            let f: Vec<_> = pts.iter().map(|&p| case.forcing(p, &mat)).collect();
            let (jx, jy) = residual_momentum(&jets, &tg, &mat, Some(&f)).unwrap();
            assert!(jx <= 1e-10 && jy <= 1e-10, "{case:?}: {jx:e} {jy:e}");
        }
    }

    #[test]
    fn zero_output_zero_gradient() {
        let jets = JetBatch::zeros(4, 2);
        let (jx, jy) = residual_momentum(&jets, &[[0.0; 2]; 4], &Material::default(), None).unwrap();
        assert_eq!((jx, jy), (0.0, 0.0));
    }

    #[test]
    fn only_thermal_term_survives() {
        let mat = Material::default();
        let tg = [[2.0, 0.0], [-1.0, 0.5], [0.25, 0.0]];
        let (jx, _) = residual_momentum(&JetBatch::zeros(3, 2), &tg, &mat, None).unwrap();
        let beta = mat.alpha / (1.0 - mat.nu);
        let expected = tg.iter().map(|g| (beta * g[0]).powi(2)).sum::<f64>() / 3.0;
        assert!((jx - expected).abs() < 1e-14);
    }

    fn sensors(indices: Vec<usize>, u: Vec<f64>, v: Vec<f64>) -> SensorSet {
        SensorSet { indices, u, v }
    }

    #[test]
    fn sensor_residual_cases() {
        let pred = [[0.1, 0.2], [0.3, 0.4]];
        assert_eq!(residual_sensor(&pred, &sensors(vec![0, 1], vec![0.1, 0.3], vec![0.2, 0.4])).unwrap(), 0.0);
        let one = residual_sensor(&pred, &sensors(vec![0], vec![0.0], vec![0.2])).unwrap();
        assert!((one - 0.01).abs() < 1e-15);
        let a = residual_sensor(&pred, &sensors(vec![0, 1], vec![0.0, 0.1], vec![0.1, 0.5])).unwrap();
        let pred2 = [[0.2, 0.3], [0.5, 0.3]];
        let b = residual_sensor(&pred2, &sensors(vec![0, 1], vec![0.0, 0.1], vec![0.1, 0.5])).unwrap();
        assert!((b - 4.0 * a).abs() < 1e-14);
        assert_eq!(residual_sensor(&pred, &sensors(vec![], vec![], vec![])), Err(TrainingError::NoSensors));
        assert_eq!(
            residual_sensor(&pred, &sensors(vec![5], vec![0.0], vec![0.0])),
            Err(TrainingError::SensorIndex { index: 5, points: 2 })
        );
    }

    #[test]
    fn batch_loss_cases() {
        let zero = ResidualBreakdown::default();
        assert_eq!(batch_loss(&[zero], 1.0, 50.0).unwrap(), 0.0);
        let a = ResidualBreakdown { j_mom_x: 1.0, j_mom_y: 2.0, ..zero };
        let b = ResidualBreakdown { j_sensor: 0.5, ..zero };
        assert_eq!(batch_loss(&[a, b], 1.0, 2.0).unwrap(), (3.0 + 1.0) / 2.0);
        let s = ResidualBreakdown { j_sensor: 0.01, ..zero };
        assert!((batch_loss(&[s], 1.0, 50.0).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(batch_loss(&[], 1.0, 1.0), Err(TrainingError::EmptyBatch));
    }

    #[test]
    fn seed_matches_difference_of_loss() {
        // Perturb single jet entries and compare with the seed.
        let mat = Material::default();
        let pts = points();
        let mut jets = exact_jets(ManufacturedCase::Trigonometric, &pts);
        for (i, v) in jets.as_mut_slice().iter_mut().enumerate() {
            *v += 0.01 * ((i * 7) % 5) as f64;
        }
        let tg: Vec<_> = pts.iter().map(|&p| [p[0], -p[1]]).collect();
        let s = sensors(vec![1, 4, 9], vec![0.1, 0.0, -0.1], vec![0.0, 0.2, 0.1]);
        let inputs = LossInputs { temp_grad: &tg, forcing: None, sensors: &s, material: &mat };
        let (b, seed) = loss_and_seed(&jets, &inputs, 1.0, 7.0, 0.5).unwrap();
        let loss = |j: &JetBatch| {
            let (jx, jy) = residual_momentum(j, &tg, &mat, None).unwrap();
            let vals: Vec<[f64; 2]> = (0..j.points()).map(|p| [j.at(0, p, 0), j.at(0, p, 1)]).collect();
            0.5 * (jx + jy + 7.0 * residual_sensor(&vals, &s).unwrap())
        };
        assert!((loss(&jets) - 0.5 * b.weighted(1.0, 7.0)).abs() < 1e-14);
        let h = 1e-6;
        for idx in [0, 3, 50, 99, 130, 151, 160, 175, 200, 257, 299] {
            let mut plus = jets.clone();
            plus.as_mut_slice()[idx] += h;
            let mut minus = jets.clone();
            minus.as_mut_slice()[idx] -= h;
            let numeric = (loss(&plus) - loss(&minus)) / (2.0 * h);
            let analytic = seed.as_slice()[idx];
            assert!((numeric - analytic).abs() < 1e-7 * analytic.abs().max(1.0), "{idx}: {analytic} vs {numeric}");
        }
    }
}
