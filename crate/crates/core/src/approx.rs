//! Radius-bounding schedules for the approximate variant.
//!
//! A schedule lists per-step radius growth `R_1..R_L`; the ball of cumulative
//! radius `R_1 + ... + R_l` around `f(x)` must contain the ball of cumulative
//! radius `R_1 + ... + R_{l-1}` around `f(x')` for every neighbor `x'`. Any
//! such schedule can replace exact envelopes, trading accuracy for cheaper
//! construction.

use serde::{Deserialize, Serialize};

use crate::envelope::{EnvelopeTable, NeighborModel, OutputRange};
use crate::error::{positive, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSchedule", into = "RawSchedule")]
pub struct RadiusSchedule {
    radii: Vec<f64>,
    cumulative: Vec<f64>,
    p_norm: f64,
}

#[derive(Serialize, Deserialize)]
struct RawSchedule {
    radii: Vec<f64>,
    #[serde(default = "default_norm")]
    p_norm: f64,
}

fn default_norm() -> f64 {
    1.0
}

impl TryFrom<RawSchedule> for RadiusSchedule {
    type Error = Error;

    fn try_from(raw: RawSchedule) -> Result<Self> {
        RadiusSchedule::with_norm(raw.radii, raw.p_norm)
    }
}

impl From<RadiusSchedule> for RawSchedule {
    fn from(s: RadiusSchedule) -> Self {
        RawSchedule {
            radii: s.radii,
            p_norm: s.p_norm,
        }
    }
}

impl RadiusSchedule {
    /// Schedule bounding distances in the 1-norm (the only norm that matters
    /// for one-dimensional outputs).
    pub fn new(radii: Vec<f64>) -> Result<Self> {
        Self::with_norm(radii, 1.0)
    }

    /// `p_norm` is informational; it may be `f64::INFINITY`.
    pub fn with_norm(radii: Vec<f64>, p_norm: f64) -> Result<Self> {
        if radii.is_empty() {
            return Err(Error::InvalidSchedule("no radii".into()));
        }
        if let Some(r) = radii.iter().find(|r| !(r.is_finite() && **r > 0.0)) {
            return Err(Error::InvalidSchedule(format!(
                "radii must be finite and > 0, got {r}"
            )));
        }
        if !(p_norm >= 1.0) {
            return Err(Error::InvalidSchedule(format!("p_norm must be >= 1, got {p_norm}")));
        }
        let mut cumulative = Vec::with_capacity(radii.len() + 1);
        cumulative.push(0.0);
        let mut acc = 0.0;
        for &r in &radii {
            acc += r;
            cumulative.push(acc);
        }
        Ok(Self {
            radii,
            cumulative,
            p_norm,
        })
    }

    /// `R_1..=R_L`.
    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    /// `0, R_1, R_1 + R_2, ...`; entry `l` is the cumulative radius at step `l`.
    pub fn cumulative(&self) -> &[f64] {
        &self.cumulative
    }

    pub fn len(&self) -> usize {
        self.radii.len()
    }

    pub fn is_empty(&self) -> bool {
        self.radii.is_empty()
    }

    pub fn p_norm(&self) -> f64 {
        self.p_norm
    }

    /// Smallest `l` whose cumulative radius reaches `distance`; `None` past
    /// the last ball.
    pub fn step_for(&self, distance: f64) -> Option<usize> {
        self.cumulative.iter().position(|&r| r >= distance)
    }
}

/// `R_l = bound(l)`, where `bound(d)` is an upper bound on the largest local
/// sensitivity among datasets within distance `d` of `x`.
pub fn schedule_from_local_sensitivity<F>(bound: F, max_distance: usize) -> Result<RadiusSchedule>
where
    F: Fn(usize) -> f64,
{
    if max_distance < 1 {
        return Err(Error::DistanceTooSmall {
            min: 1,
            got: max_distance,
        });
    }
    let values: Vec<f64> = (0..=max_distance).map(&bound).collect();
    if let Some((d, v)) = values
        .iter()
        .enumerate()
        .find(|(_, v)| !(v.is_finite() && **v > 0.0))
    {
        return Err(Error::InvalidSchedule(format!(
            "local sensitivity bound at distance {d} must be > 0, got {v}"
        )));
    }
    if let Some(d) = values.windows(2).position(|w| w[1] < w[0]) {
        return Err(Error::InvalidSchedule(format!(
            "local sensitivity bound decreases between distance {d} and {}",
            d + 1
        )));
    }
    RadiusSchedule::new(values[1..].to_vec())
}

/// Replaces every radius from step `k` on by the global sensitivity.
pub fn schedule_truncate_global(
    schedule: &RadiusSchedule,
    k: usize,
    global_delta: f64,
) -> Result<RadiusSchedule> {
    if k < 1 {
        return Err(Error::DistanceTooSmall { min: 1, got: k });
    }
    positive("global_delta", global_delta)?;
    if let Some(r) = schedule.radii.iter().take(k).find(|&&r| r > global_delta) {
        return Err(Error::InvalidSchedule(format!(
            "radius {r} exceeds the global sensitivity {global_delta}"
        )));
    }
    let radii = schedule
        .radii
        .iter()
        .enumerate()
        .map(|(i, &r)| if i + 1 >= k { global_delta } else { r })
        .collect();
    RadiusSchedule::with_norm(radii, schedule.p_norm)
}

/// Default truncation distance: `ceil(10 / eps)`, so the ignored steps carry
/// at most `exp(-5)` of the selection weight.
pub fn default_truncation(epsilon: f64) -> Result<usize> {
    positive("epsilon", epsilon)?;
    Ok((10.0 / epsilon).ceil() as usize)
}

/// `R_l = local_delta + (l - 1) * delta_prime`, valid when `delta_prime`
/// bounds how much the local sensitivity changes between neighbors.
pub fn schedule_affine(local_delta: f64, delta_prime: f64, max_distance: usize) -> Result<RadiusSchedule> {
    positive("local_delta", local_delta)?;
    if !(delta_prime.is_finite() && delta_prime >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "delta_prime",
            reason: format!("must be >= 0, got {delta_prime}"),
        });
    }
    if max_distance < 1 {
        return Err(Error::DistanceTooSmall {
            min: 1,
            got: max_distance,
        });
    }
    RadiusSchedule::new(
        (0..max_distance)
            .map(|i| local_delta + i as f64 * delta_prime)
            .collect(),
    )
}

/// Symmetric envelope `center ± R_l`, clipped to the range.
pub fn schedule_to_envelope(
    center: f64,
    schedule: &RadiusSchedule,
    range: OutputRange,
) -> Result<EnvelopeTable> {
    if !range.contains(center) {
        return Err(Error::OutOfRange {
            value: center,
            lo: range.lo(),
            hi: range.hi(),
        });
    }
    let upper = schedule
        .cumulative
        .iter()
        .map(|r| (center + r).min(range.hi()))
        .collect();
    let lower = schedule
        .cumulative
        .iter()
        .map(|r| (center - r).max(range.lo()))
        .collect();
    EnvelopeTable::new(center, upper, lower, range, NeighborModel::Swap)
}
