//! Piecewise samplers over an envelope table.
//!
//! Both mechanisms pick a signed interval with probability proportional to
//! `exp(-l eps / 2) * width` and then place the output inside it: the
//! piecewise Laplace mechanism draws truncated exponential noise measured
//! from the interval's inner end, the inverse sensitivity mechanism draws
//! uniformly.

use crate::envelope::{EnvelopeTable, Interval, Sign};
use crate::error::{positive, Error, Result};
use crate::scores::q_plm;

use super::laplace::{trunc_expo_cdf, trunc_expo_quantile};
use super::{Mechanism, UniformSource};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    /// Truncated exponential inside each interval.
    Laplace,
    /// Uniform inside each interval.
    Uniform,
}

#[derive(Debug, Clone)]
pub struct Piecewise {
    shape: Shape,
    eps: f64,
    table: EnvelopeTable,
    /// In sampling order: positive side, then negative side.
    intervals: Vec<Interval>,
    log_mass: Vec<f64>,
    log_z: f64,
    /// `exp(log_mass - max)`, for selection without overflow.
    weights: Vec<f64>,
    total_weight: f64,
    /// Interval indices sorted along the real line.
    by_position: Vec<usize>,
    /// Normalized mass strictly left of each entry of `by_position`.
    mass_before: Vec<f64>,
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

impl Piecewise {
    /// Piecewise Laplace mechanism.
    pub fn laplace(table: &EnvelopeTable, eps: f64) -> Result<Self> {
        Self::build(Shape::Laplace, table, eps)
    }

    /// Inverse sensitivity mechanism.
    pub fn inverse_sensitivity(table: &EnvelopeTable, eps: f64) -> Result<Self> {
        Self::build(Shape::Uniform, table, eps)
    }

    fn build(shape: Shape, table: &EnvelopeTable, eps: f64) -> Result<Self> {
        positive("eps", eps)?;
        let intervals = table.intervals();
        let half = eps / 2.0;
        // integral of exp(-(l + t) eps/2) over t in [0, 1], per unit width
        let slope_factor = (-(-half).exp_m1() / half).ln();
        let log_mass: Vec<f64> = intervals
            .iter()
            .map(|iv| {
                if iv.width <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                let lw = iv.width.ln();
                match (shape, iv.is_band()) {
                    (Shape::Laplace, true) => lw - half,
                    (Shape::Laplace, false) => lw - iv.ell as f64 * half + slope_factor,
                    (Shape::Uniform, true) => lw,
                    (Shape::Uniform, false) => lw - iv.ell as f64 * half,
                }
            })
            .collect();
        let log_z = log_sum_exp(&log_mass);
        if log_z == f64::NEG_INFINITY {
            return Err(Error::AllWidthsZero);
        }
        let top = log_mass.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = log_mass.iter().map(|lm| (lm - top).exp()).collect();
        let total_weight = weights.iter().sum();
        let mut by_position: Vec<usize> = (0..intervals.len())
            .filter(|&i| intervals[i].width > 0.0)
            .collect();
        by_position.sort_by(|&a, &b| intervals[a].lo.total_cmp(&intervals[b].lo));
        let mut mass_before = Vec::with_capacity(by_position.len());
        let mut acc = 0.0;
        for &i in &by_position {
            mass_before.push(acc);
            acc += (log_mass[i] - log_z).exp();
        }
        Ok(Self {
            shape,
            eps,
            table: table.clone(),
            intervals,
            log_mass,
            log_z,
            weights,
            total_weight,
            by_position,
            mass_before,
        })
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn table(&self) -> &EnvelopeTable {
        &self.table
    }

    pub fn intervals(&self) -> &[Interval] {
        &self.intervals
    }

    /// Probability of each interval in [`Piecewise::intervals`] order.
    pub fn interval_probabilities(&self) -> Vec<f64> {
        self.log_mass
            .iter()
            .map(|lm| (lm - self.log_z).exp())
            .collect()
    }

    /// First sampling step: the signed interval selected by `u`.
    /// Zero-width intervals are never chosen.
    pub fn select(&self, u: f64) -> Interval {
        let target = u * self.total_weight;
        let mut acc = 0.0;
        let mut chosen = 0;
        for (i, &w) in self.weights.iter().enumerate() {
            if w > 0.0 {
                acc += w;
                chosen = i;
                if acc > target {
                    break;
                }
            }
        }
        self.intervals[chosen]
    }

    /// Second sampling step: the output for position draw `u` inside `iv`.
    pub fn place(&self, iv: &Interval, u: f64) -> f64 {
        let z = match (self.shape, iv.is_band()) {
            (Shape::Laplace, false) => trunc_expo_quantile(iv.width, self.eps / 2.0, u),
            _ => u * iv.width,
        };
        let y = iv.near() + iv.sign.value() * z;
        y.clamp(iv.lo, iv.hi)
    }

    /// Score-like exponent: `log density + log Z`.
    fn exponent(&self, y: f64) -> f64 {
        match self.shape {
            Shape::Laplace => q_plm(y, &self.table).value() * self.eps / 2.0,
            Shape::Uniform => {
                let Some(l) = self.table.inverse_index(y).finite() else {
                    return f64::NEG_INFINITY;
                };
                let (band_lo, band_hi) = self.table.band();
                let len = if self.table.rho() > 0.0 && band_lo <= y && y <= band_hi {
                    0
                } else {
                    // the center point takes the value of the adjacent plateau
                    l.max(1)
                };
                -(len as f64) * self.eps / 2.0
            }
        }
    }

    /// Fraction of interval `iv`'s mass lying at or below `y`.
    fn fraction_below(&self, iv: &Interval, y: f64) -> f64 {
        let t = ((y - iv.near()).abs() / iv.width).clamp(0.0, 1.0);
        let from_near = match (self.shape, iv.is_band()) {
            (Shape::Laplace, false) => trunc_expo_cdf(self.eps / 2.0, t),
            _ => t,
        };
        match iv.sign {
            Sign::Plus => from_near,
            Sign::Minus => 1.0 - from_near,
        }
    }
}

impl Mechanism for Piecewise {
    fn name(&self) -> &'static str {
        match self.shape {
            Shape::Laplace => "plm",
            Shape::Uniform => "inv",
        }
    }

    fn epsilon(&self) -> f64 {
        self.eps
    }

    fn center(&self) -> f64 {
        self.table.center()
    }

    fn support(&self) -> (f64, f64) {
        self.table.support()
    }

    fn log_density(&self, y: f64) -> f64 {
        self.exponent(y) - self.log_z
    }

    fn cdf(&self, y: f64) -> f64 {
        let (lo, hi) = self.support();
        if y <= lo {
            return 0.0;
        }
        if y >= hi {
            return 1.0;
        }
        // last interval starting strictly below y
        let k = self
            .by_position
            .partition_point(|&i| self.intervals[i].lo < y);
        if k == 0 {
            return 0.0;
        }
        let i = self.by_position[k - 1];
        let iv = &self.intervals[i];
        let p = (self.log_mass[i] - self.log_z).exp();
        (self.mass_before[k - 1] + p * self.fraction_below(iv, y)).clamp(0.0, 1.0)
    }

    fn breakpoints(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self
            .intervals
            .iter()
            .flat_map(|iv| [iv.lo, iv.hi])
            .collect();
        v.push(self.table.center());
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    }

    fn sample(&self, src: &mut dyn UniformSource) -> f64 {
        let iv = self.select(src.next_uniform());
        self.place(&iv, src.next_uniform())
    }
}
