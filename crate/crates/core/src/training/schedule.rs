use serde::{Deserialize, Serialize};

use super::TrainingError;

/// Weight of the momentum residuals; only the sensor weight is scheduled.
pub const OMEGA_MOMENTUM: f64 = 1.0;

/// Sensor-loss weight as a function of the epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightSchedule {
    ConstantEqual,
    ConstantHigh { omega_0: f64 },
    ExpDecay { omega_1: f64, r_1: f64 },
    LogDecay { omega_2: f64, r_2: f64 },
}

impl Default for WeightSchedule {
    fn default() -> Self {
        Self::ConstantHigh { omega_0: 50.0 }
    }
}

impl WeightSchedule {
    /// The four settings compared in the weight study.
    pub fn standard_set() -> [WeightSchedule; 4] {
        [
            Self::ConstantEqual,
            Self::ConstantHigh { omega_0: 50.0 },
            Self::ExpDecay { omega_1: 50.0, r_1: 800.0 },
            Self::LogDecay { omega_2: 50.0 / 8.0, r_2: 3002.0 },
        ]
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::ConstantEqual => "constant_equal",
            Self::ConstantHigh { .. } => "constant_high",
            Self::ExpDecay { .. } => "exp_decay",
            Self::LogDecay { .. } => "log_decay",
        }
    }

    pub fn validate(&self) -> Result<(), TrainingError> {
        let bad = |what: String| Err(TrainingError::InvalidSchedule(what));
        match *self {
            Self::ConstantEqual => Ok(()),
            Self::ConstantHigh { omega_0 } if !(omega_0 > 1.0 && omega_0.is_finite()) => {
                bad(format!("omega_0 = {omega_0} must exceed 1"))
            }
            Self::ExpDecay { omega_1, .. } if !(omega_1 > 1.0 && omega_1.is_finite()) => {
                bad(format!("omega_1 = {omega_1} must exceed 1"))
            }
            Self::ExpDecay { r_1, .. } if !(r_1 > 0.0 && r_1.is_finite()) => bad(format!("r_1 = {r_1} must be positive")),
            Self::LogDecay { omega_2, .. } if !(omega_2 > 0.0 && omega_2.is_finite()) => {
                bad(format!("omega_2 = {omega_2} must be positive"))
            }
            Self::LogDecay { r_2, .. } if !(r_2 > 0.0 && r_2.is_finite()) => bad(format!("r_2 = {r_2} must be positive")),
            _ => Ok(()),
        }
    }

    /// `omega_sensor` at `epoch`; never below 1.
    pub fn weight_sensor(&self, epoch: usize) -> f64 {
        let e = epoch as f64;
        match *self {
            Self::ConstantEqual => 1.0,
            Self::ConstantHigh { omega_0 } => omega_0,
            Self::ExpDecay { omega_1, r_1 } => (omega_1 * (-e / r_1).exp()).max(1.0),
            Self::LogDecay { omega_2, r_2 } => (omega_2 * (r_2 - e).max(1.0).ln()).max(1.0),
        }
    }
}

impl std::str::FromStr for WeightSchedule {
    type Err = TrainingError;

    /// `constant_equal`, `constant_high[:w0]`, `exp_decay[:w1:r1]` or
    /// `log_decay[:w2:r2]`; omitted numbers take the standard values.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut parts = s.split(':');
        let kind = parts.next().unwrap_or_default().trim();
        let nums: Vec<f64> = parts
            .map(|p| p.trim().parse::<f64>().map_err(|_| TrainingError::InvalidSchedule(format!("bad number `{p}` in `{s}`"))))
            .collect::<Result<_, _>>()?;
        let std = Self::standard_set();
        let schedule = match (kind, nums.as_slice()) {
            ("constant_equal", []) => Self::ConstantEqual,
            ("constant_high", []) => std[1],
            ("constant_high", [w]) => Self::ConstantHigh { omega_0: *w },
            ("exp_decay", []) => std[2],
            ("exp_decay", [w, r]) => Self::ExpDecay { omega_1: *w, r_1: *r },
            ("log_decay", []) => std[3],
            ("log_decay", [w, r]) => Self::LogDecay { omega_2: *w, r_2: *r },
            _ => return Err(TrainingError::InvalidSchedule(format!("cannot parse `{s}`"))),
        };
        schedule.validate()?;
        Ok(schedule)
    }
}
