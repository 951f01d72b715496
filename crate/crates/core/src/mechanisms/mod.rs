//! Output samplers and their densities.

mod laplace;
mod piecewise;
mod stream;

use serde::{Deserialize, Serialize};

use crate::envelope::{smooth_shift, EnvelopeTable, Interval};
use crate::error::{positive, Error, Result};

pub use laplace::{sample_trunc_expo, sample_trunc_laplace, TruncatedLaplace};
pub use piecewise::{Piecewise, Shape};
pub use stream::{RandomStream, ScriptedUniforms, UniformSource};

/// A one-dimensional output distribution for a fixed dataset.
pub trait Mechanism: Send + Sync {
    fn name(&self) -> &'static str;
    fn epsilon(&self) -> f64;
    fn center(&self) -> f64;
    /// Closed interval outside which the density is zero.
    fn support(&self) -> (f64, f64);
    /// `-inf` outside the support.
    fn log_density(&self, y: f64) -> f64;
    fn density(&self, y: f64) -> f64 {
        self.log_density(y).exp()
    }
    fn cdf(&self, y: f64) -> f64;
    /// Points where the log density may fail to be linear.
    fn breakpoints(&self) -> Vec<f64>;
    fn sample(&self, src: &mut dyn UniformSource) -> f64;

    /// `P(|Y - center| <= alpha)`.
    fn mass_within(&self, alpha: f64) -> f64 {
        let c = self.center();
        (self.cdf(c + alpha) - self.cdf(c - alpha)).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MechanismKind {
    /// Piecewise Laplace.
    Plm,
    /// Inverse sensitivity.
    Inv,
    /// Truncated Laplace with a global sensitivity.
    Tlap,
}

impl std::fmt::Display for MechanismKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            MechanismKind::Plm => "plm",
            MechanismKind::Inv => "inv",
            MechanismKind::Tlap => "tlap",
        })
    }
}

/// Everything needed to turn an envelope table into a sampler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MechanismSpec {
    pub kind: MechanismKind,
    pub epsilon: f64,
    #[serde(default)]
    pub rho_smooth: f64,
    #[serde(default)]
    pub seed: u64,
    /// Required for `Tlap`.
    #[serde(default)]
    pub global_sensitivity: Option<f64>,
}

impl MechanismSpec {
    pub fn new(kind: MechanismKind, epsilon: f64) -> Self {
        Self {
            kind,
            epsilon,
            rho_smooth: 0.0,
            seed: 0,
            global_sensitivity: None,
        }
    }

    pub fn build(&self, table: &EnvelopeTable) -> Result<Box<dyn Mechanism>> {
        positive("epsilon", self.epsilon)?;
        if !(self.rho_smooth.is_finite() && self.rho_smooth >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "rho_smooth",
                reason: format!("must be >= 0, got {}", self.rho_smooth),
            });
        }
        let smoothed;
        let table = if self.rho_smooth > 0.0 {
            smoothed = smooth_shift(table, self.rho_smooth)?;
            &smoothed
        } else {
            table
        };
        Ok(match self.kind {
            MechanismKind::Plm => Box::new(Piecewise::laplace(table, self.epsilon)?),
            MechanismKind::Inv => Box::new(Piecewise::inverse_sensitivity(table, self.epsilon)?),
            MechanismKind::Tlap => {
                let delta = self.global_sensitivity.ok_or(Error::InvalidParameter {
                    name: "global_sensitivity",
                    reason: "required for the truncated Laplace mechanism".into(),
                })?;
                Box::new(TruncatedLaplace::new(
                    table.center(),
                    delta,
                    self.epsilon,
                    table.range(),
                )?)
            }
        })
    }

    pub fn stream(&self) -> RandomStream {
        RandomStream::new(self.seed)
    }
}

/// First step of the piecewise Laplace sampler: the signed interval picked by
/// uniform draw `u`.
pub fn sample_interval(table: &EnvelopeTable, epsilon: f64, u: f64) -> Result<Interval> {
    Ok(Piecewise::laplace(table, epsilon)?.select(u))
}

/// One draw from the piecewise Laplace mechanism. Consumes two uniforms.
pub fn sample_plm(table: &EnvelopeTable, epsilon: f64, stream: &mut dyn UniformSource) -> Result<f64> {
    Ok(Piecewise::laplace(table, epsilon)?.sample(stream))
}

/// One draw from the inverse sensitivity mechanism. Consumes two uniforms.
pub fn sample_inverse_sensitivity(
    table: &EnvelopeTable,
    epsilon: f64,
    stream: &mut dyn UniformSource,
) -> Result<f64> {
    Ok(Piecewise::inverse_sensitivity(table, epsilon)?.sample(stream))
}

/// Piecewise Laplace density at `y`.
pub fn density_plm(y: f64, table: &EnvelopeTable, epsilon: f64) -> Result<f64> {
    Ok(Piecewise::laplace(table, epsilon)?.density(y))
}

/// Inverse sensitivity density at `y`.
pub fn density_inv(y: f64, table: &EnvelopeTable, epsilon: f64) -> Result<f64> {
    Ok(Piecewise::inverse_sensitivity(table, epsilon)?.density(y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envelope::{
        build_bounded_sum_envelope, build_median_envelope, NeighborModel, OutputRange, Sign,
    };
    use crate::scores::q_plm;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn range10() -> OutputRange {
        OutputRange::new(0., 10.).unwrap()
    }

    fn median_table() -> EnvelopeTable {
        build_median_envelope(&[1., 2., 3., 4., 5.], range10(), NeighborModel::Swap, 3).unwrap()
    }

    /// Composite Simpson on each piece between consecutive breakpoints.
    fn integrate(f: impl Fn(f64) -> f64, points: &[f64]) -> f64 {
        let n = 400;
        points
            .windows(2)
            .map(|w| {
                let (a, b) = (w[0], w[1]);
                let h = (b - a) / n as f64;
                let eps = 1e-12 * (b - a);
                let mut s = f(a + eps) + f(b - eps);
                for i in 1..n {
                    let w = if i % 2 == 1 { 4.0 } else { 2.0 };
                    s += w * f(a + i as f64 * h);
                }
                s * h / 3.0
            })
            .sum()
    }

    #[test]
    fn interval_weights_match_hand_values() {
        let t = median_table();
        // exp(-l) * width at eps = 2, without the common slope factor
        let raw: f64 = [(1, 1.0), (2, 1.0), (3, 5.0), (1, 1.0), (2, 1.0), (3, 1.0)]
            .iter()
            .map(|&(l, w): &(i32, f64)| w * (-(l as f64)).exp())
            .sum();
        assert_abs_diff_eq!(raw, 1.305152, epsilon = 1e-6);

        let m = Piecewise::laplace(&t, 2.0).unwrap();
        let p = m.interval_probabilities();
        let find = |sign, ell| {
            m.intervals()
                .iter()
                .position(|iv| iv.sign == sign && iv.ell == ell)
                .unwrap()
        };
        assert_abs_diff_eq!(p[find(Sign::Plus, 1)], 0.28187, epsilon = 1e-5);
        assert_abs_diff_eq!(p[find(Sign::Plus, 3)], 0.19073, epsilon = 1e-5);
        assert_abs_diff_eq!(p.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn sampler_walkthrough() {
        let t = median_table();
        let iv = sample_interval(&t, 2.0, 0.1).unwrap();
        assert_eq!((iv.sign, iv.ell), (Sign::Plus, 1));
        let mut s = ScriptedUniforms::new(vec![0.1, 0.5]);
        let y = sample_plm(&t, 2.0, &mut s).unwrap();
        assert_eq!(s.consumed(), 2);
        let z = sample_trunc_expo(1.0, 1.0, 0.5).unwrap();
        assert_abs_diff_eq!(y, 3.0 + z, epsilon = 1e-12);
        assert_abs_diff_eq!(y, 3.379885, epsilon = 1e-6);

        // a draw in the last positive slot lands on the far side of [5, 10]
        let p = Piecewise::laplace(&t, 2.0).unwrap().interval_probabilities();
        let u = p[0] + p[1] + 0.5 * p[2];
        let iv = sample_interval(&t, 2.0, u).unwrap();
        assert_eq!((iv.sign, iv.ell, iv.lo, iv.hi), (Sign::Plus, 3, 5.0, 10.0));
        let u = p[0] + p[1] + p[2] + 0.5 * p[3];
        let iv = sample_interval(&t, 2.0, u).unwrap();
        assert_eq!((iv.sign, iv.ell), (Sign::Minus, 1));
        let mut s = ScriptedUniforms::new(vec![u, 0.0]);
        assert_eq!(sample_plm(&t, 2.0, &mut s).unwrap(), 3.0);
    }

    #[test]
    fn density_examples() {
        let t = median_table();
        let z_norm = (1.0 - (-1.0f64).exp()) * 1.305152;
        // the product is 0.8250134; the rounded 0.825015 is within 2e-6
        assert_abs_diff_eq!(z_norm, 0.825015, epsilon = 5e-6);
        assert_abs_diff_eq!(density_plm(3.5, &t, 2.0).unwrap(), 0.27046, epsilon = 1e-5);
        assert_eq!(density_plm(11.0, &t, 2.0).unwrap(), 0.0);
        assert_abs_diff_eq!(
            density_plm(3.0, &t, 2.0).unwrap(),
            (-1.0f64).exp() / z_norm,
            epsilon = 1e-6
        );
        // the inverse sensitivity density is flat on each step
        let a = density_inv(3.5, &t, 2.0).unwrap();
        assert_abs_diff_eq!(a, 0.28187, epsilon = 1e-5);
        assert_abs_diff_eq!(density_inv(3.9, &t, 2.0).unwrap(), a, epsilon = 1e-15);
        assert_abs_diff_eq!(density_inv(3.0, &t, 2.0).unwrap(), a, epsilon = 1e-15);
        assert_abs_diff_eq!(density_inv(6.0, &t, 2.0).unwrap(), a * (-2.0f64).exp(), epsilon = 1e-12);
    }

    #[test]
    fn densities_integrate_to_interval_masses() {
        let base = median_table();
        let smoothed = smooth_shift(&base, 0.7).unwrap();
        for table in [base, smoothed] {
            for eps in [0.3, 1.0, 4.0] {
                for m in [
                    Piecewise::laplace(&table, eps).unwrap(),
                    Piecewise::inverse_sensitivity(&table, eps).unwrap(),
                ] {
                    let p = m.interval_probabilities();
                    for (iv, &pi) in m.intervals().iter().zip(&p) {
                        if iv.width == 0.0 {
                            assert_eq!(pi, 0.0);
                            continue;
                        }
                        let got = integrate(|y| m.density(y), &[iv.lo, iv.hi]);
                        assert_abs_diff_eq!(got, pi, epsilon = 1e-10);
                    }
                    let total = integrate(|y| m.density(y), &m.breakpoints());
                    assert_abs_diff_eq!(total, 1.0, epsilon = 1e-10);
                }
            }
        }
    }

    #[test]
    fn cdf_matches_integrated_density() {
        let t = smooth_shift(&median_table(), 0.25).unwrap();
        for m in [
            Piecewise::laplace(&t, 1.3).unwrap(),
            Piecewise::inverse_sensitivity(&t, 1.3).unwrap(),
        ] {
            let bps = m.breakpoints();
            for y in [0.4, 1.0, 2.2, 2.8, 3.0, 3.1, 4.6, 7.7] {
                let mut pts: Vec<f64> = bps.iter().copied().filter(|&b| b < y).collect();
                pts.push(y);
                let expect = integrate(|x| m.density(x), &pts);
                assert_abs_diff_eq!(m.cdf(y), expect, epsilon = 1e-10);
            }
            assert_eq!(m.cdf(-1.0), 0.0);
            assert_eq!(m.cdf(10.0), 1.0);
        }
    }

    #[test]
    fn density_matches_score() {
        let t = median_table();
        let m = Piecewise::laplace(&t, 2.0).unwrap();
        let r = m.density(3.5) / m.density(7.0);
        assert_abs_diff_eq!(r.ln(), q_plm(3.5, &t).0 - q_plm(7.0, &t).0, epsilon = 1e-12);
    }

    #[test]
    fn degenerate_tables() {
        let t = EnvelopeTable::new(
            4.0,
            vec![4.0, 4.0],
            vec![4.0, 4.0],
            range10(),
            NeighborModel::Swap,
        )
        .unwrap();
        assert_eq!(Piecewise::laplace(&t, 1.0).unwrap_err(), Error::AllWidthsZero);
        assert_eq!(
            Piecewise::inverse_sensitivity(&t, 1.0).unwrap_err(),
            Error::AllWidthsZero
        );
        let t = median_table();
        assert!(Piecewise::laplace(&t, 0.0).is_err());
        assert!(Piecewise::laplace(&t, f64::NAN).is_err());
    }

    #[test]
    fn spec_builds_each_kind() {
        let t = median_table();
        let plm = MechanismSpec::new(MechanismKind::Plm, 1.0).build(&t).unwrap();
        assert_eq!(plm.name(), "plm");
        let mut spec = MechanismSpec::new(MechanismKind::Tlap, 1.0);
        assert!(spec.build(&t).is_err());
        spec.global_sensitivity = Some(10.0);
        assert_eq!(spec.build(&t).unwrap().support(), (0.0, 10.0));
        let mut spec = MechanismSpec::new(MechanismKind::Inv, 1.0);
        spec.rho_smooth = 0.5;
        let inv = spec.build(&t).unwrap();
        assert_eq!(inv.support(), (0.0, 10.0));
        // band has score 0, the first step exp(-eps/2) less
        assert_abs_diff_eq!(
            inv.log_density(3.2) - inv.log_density(3.8),
            0.5,
            epsilon = 1e-12
        );
    }

    /// Kolmogorov-Smirnov distance between samples and the analytic CDF.
    fn ks_distance(m: &dyn Mechanism, n: usize, seed: u64) -> f64 {
        let mut s = RandomStream::new(seed);
        let mut xs: Vec<f64> = (0..n).map(|_| m.sample(&mut s)).collect();
        xs.sort_by(f64::total_cmp);
        xs.iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = m.cdf(x);
                (f - i as f64 / n as f64).abs().max(((i + 1) as f64 / n as f64 - f).abs())
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn samples_follow_the_density() {
        let t = median_table();
        let plm = Piecewise::laplace(&t, 1.0).unwrap();
        assert!(ks_distance(&plm, 1_000_000, 11) < 0.002);
        let inv = Piecewise::inverse_sensitivity(&t, 1.0).unwrap();
        assert!(ks_distance(&inv, 200_000, 12) < 0.005);
        let tl = TruncatedLaplace::new(5.0, 1.0, 2.0, range10()).unwrap();
        assert!(ks_distance(&tl, 200_000, 13) < 0.005);
    }

    #[test]
    fn plm_equals_truncated_laplace_for_constant_marginals() {
        let range = OutputRange::new(0., 10.).unwrap();
        let t = build_bounded_sum_envelope(5.0, 1.0, range, NeighborModel::Swap, 5).unwrap();
        for eps in [0.5, 1.0, 3.0] {
            let plm = Piecewise::laplace(&t, eps).unwrap();
            let tl = TruncatedLaplace::new(5.0, 1.0, eps, range).unwrap();
            for k in 0..=200 {
                let y = k as f64 * 0.05;
                assert_abs_diff_eq!(plm.density(y), tl.density(y), epsilon = 1e-12);
                assert_abs_diff_eq!(plm.cdf(y), tl.cdf(y), epsilon = 1e-12);
            }
        }
    }

    proptest! {
        #[test]
        fn trunc_expo_stays_in_bounds(delta in 1e-6f64..1e6, eps in 1e-4f64..50.0, u in 0.0f64..1.0) {
            let z = sample_trunc_expo(delta, eps, u).unwrap();
            prop_assert!((0.0..=delta).contains(&z));
        }

        #[test]
        fn samples_stay_in_their_interval(u1 in 0.0f64..1.0, u2 in 0.0f64..1.0, eps in 0.05f64..8.0) {
            let t = median_table();
            let m = Piecewise::laplace(&t, eps).unwrap();
            let iv = m.select(u1);
            prop_assert!(iv.width > 0.0);
            let y = m.place(&iv, u2);
            prop_assert!(iv.lo <= y && y <= iv.hi);
        }
    }
}
