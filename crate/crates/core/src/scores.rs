//! Quality scores for the exponential-mechanism view of the piecewise Laplace
//! mechanism, and privacy accounting conversions.
//!
//! Scores are nonpositive: `-1` at the center, one more unit of decay for
//! every envelope step crossed, linearly interpolated inside each step.

use serde::{Deserialize, Serialize};

use crate::approx::RadiusSchedule;
use crate::envelope::{Distance, EnvelopeTable};
use crate::error::{positive, Result};

/// A quality score. `NEG_INFINITE` marks outputs outside the support.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct Score(pub f64);

impl Score {
    pub const NEG_INFINITE: Score = Score(f64::NEG_INFINITY);

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_finite(self) -> bool {
        self.0.is_finite()
    }
}

/// Piecewise Laplace score of output `y` under `table`.
///
/// For `y` above the center, with `l = inverse_index(y)`:
/// `-q = l + (y - upper[l-1]) / (upper[l] - upper[l-1])`, symmetric below.
/// On smoothed tables the score stays at `-1` across the band around the
/// center and the `l = 1` step starts at the band edge.
pub fn q_plm(y: f64, table: &EnvelopeTable) -> Score {
    let ell = match table.inverse_index(y) {
        Distance::Infinite => return Score::NEG_INFINITE,
        Distance::Finite(0) => return Score(-1.0),
        Distance::Finite(l) => l,
    };
    let c = table.center();
    let (band_lo, band_hi) = table.band();
    if band_lo <= y && y <= band_hi {
        return Score(-1.0);
    }
    let frac = if y > c {
        let u = table.upper();
        let base = if ell == 1 { band_hi } else { u[ell - 1] };
        (y - base) / (u[ell] - base)
    } else {
        let d = table.lower();
        let base = if ell == 1 { band_lo } else { d[ell - 1] };
        (base - y) / (base - d[ell])
    };
    Score(-(ell as f64 + frac))
}

/// Score of the Laplace mechanism written as an exponential mechanism,
/// shifted to agree with [`q_plm`] when every marginal equals `delta`.
pub fn q_laplace_reduction(y: f64, center: f64, delta: f64) -> Result<Score> {
    positive("delta", delta)?;
    Ok(Score(-(center - y).abs() / delta - 1.0))
}

/// Score of the approximate variant for an output at distance `y_distance`
/// (in whatever norm the schedule bounds) from the center.
///
/// With `l` the smallest index whose cumulative radius reaches the distance:
/// `-q = l + (dist - R_{l-1}) / (R_l - R_{l-1})`. The center itself scores
/// `-1`, the limit from inside the first ball.
pub fn q_approx(y_distance: f64, schedule: &RadiusSchedule) -> Score {
    if !(y_distance >= 0.0) {
        return Score::NEG_INFINITE;
    }
    if y_distance == 0.0 {
        return Score(-1.0);
    }
    let cum = schedule.cumulative();
    // cum[0] = 0, strictly increasing
    match cum.iter().position(|&r| r >= y_distance) {
        None => Score::NEG_INFINITE,
        Some(l) => {
            let frac = (y_distance - cum[l - 1]) / (cum[l] - cum[l - 1]);
            Score(-(l as f64 + frac))
        }
    }
}

/// What kind of guarantee an epsilon describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuaranteeKind {
    /// Pure differential privacy.
    Dp,
    /// Bounded range.
    Br,
}

/// Equivalent statements of one mechanism's privacy loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyAccount {
    pub epsilon_dp: f64,
    pub epsilon_br: f64,
    pub rho_zcdp: f64,
}

/// Converts an `epsilon` guarantee into DP, BR and zCDP terms.
///
/// `eps`-BR implies `eps`-DP and `eps^2/8`-zCDP. `eps`-DP implies
/// `2 eps`-BR and `eps^2/2`-zCDP.
pub fn account(epsilon: f64, kind: GuaranteeKind) -> Result<PrivacyAccount> {
    positive("epsilon", epsilon)?;
    Ok(match kind {
        GuaranteeKind::Br => PrivacyAccount {
            epsilon_dp: epsilon,
            epsilon_br: epsilon,
            rho_zcdp: epsilon * epsilon / 8.0,
        },
        GuaranteeKind::Dp => PrivacyAccount {
            epsilon_dp: epsilon,
            epsilon_br: 2.0 * epsilon,
            rho_zcdp: epsilon * epsilon / 2.0,
        },
    })
}
