use crate::error::{Error, Result};
use crate::geometry::{angular_distance_deg, Pose, UnitQuaternion};

/// Median with the even-count rule: the mean of the two middle values.
pub fn median(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Data("median of an empty set".into()));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::Numerical("median of a set containing NaN".into()));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Ok(if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    })
}

pub fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

/// Position error in meters and orientation error in degrees of one
/// prediction. A quaternion output too small to normalize scores 180°.
pub fn pose_errors(label: &Pose, x_pred: [f64; 3], q_pred: [f64; 4]) -> (f64, f64) {
    let dx = (0..3).map(|k| (label.position[k] - x_pred[k]).powi(2)).sum::<f64>().sqrt();
    let dq = match UnitQuaternion::normalize(q_pred) {
        Ok(q) => angular_distance_deg(&label.orientation, &q),
        Err(_) => 180.0,
    };
    (dx, dq)
}

/// How displayed numbers lose digits.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum RoundingMode {
    /// Toward zero.
    #[default]
    Truncate,
    Nearest,
}

impl RoundingMode {
    pub fn name(&self) -> &'static str {
        match self {
            RoundingMode::Truncate => "truncate",
            RoundingMode::Nearest => "nearest",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "truncate" => Ok(RoundingMode::Truncate),
            "nearest" => Ok(RoundingMode::Nearest),
            other => Err(Error::Config(format!("unknown rounding '{other}'"))),
        }
    }

    /// `value` kept to `decimals` places.
    pub fn apply(&self, value: f64, decimals: u32) -> f64 {
        let scale = 10f64.powi(decimals as i32);
        let scaled = value * scale;
        match self {
            // the nudge keeps 5.88 from printing as 5.87 when 5.88·100 lands a hair below 588
            RoundingMode::Truncate => (scaled + scaled.signum() * 1e-9).trunc() / scale,
            RoundingMode::Nearest => scaled.round() / scale,
        }
    }

    /// Fixed-point text with `decimals` places.
    pub fn format(&self, value: f64, decimals: u32) -> String {
        let v = self.apply(value, decimals);
        let s = format!("{v:.*}", decimals as usize);
        if s.starts_with("-") && s[1..].chars().all(|c| c == '0' || c == '.') {
            s[1..].to_string()
        } else {
            s
        }
    }
}

/// Relative improvement `(baseline − new)/baseline × 100`, unrounded.
/// Negative when `new` is worse.
pub fn improvement_raw(baseline: f64, new: f64) -> Result<f64> {
    if !(baseline > 0.0) || !baseline.is_finite() || !new.is_finite() {
        return Err(Error::invalid(
            "improvement_percent",
            format!("baseline must be positive and finite, got {baseline} (new {new})"),
        ));
    }
    Ok((baseline - new) / baseline * 100.0)
}

/// Improvement in percent kept to one decimal.
pub fn improvement_percent(baseline: f64, new: f64, rounding: RoundingMode) -> Result<f64> {
    Ok(rounding.apply(improvement_raw(baseline, new)?, 1))
}
