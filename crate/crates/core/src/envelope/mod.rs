//! Per-distance envelopes of a function around one dataset.
//!
//! For a dataset `x`, `upper[l]` is the largest value the function can take
//! after changing at most `l` records and `lower[l]` the smallest. Every
//! mechanism in this crate depends on the dataset only through this table.
//!
//! Tables always live inside a bounded output range `[lo, hi]`; envelopes that
//! would run off to infinity are clipped to the range instead.

mod oracle;

pub use oracle::{
    build_envelope_bruteforce, check_sample_monotone, local_sensitivity_profile,
    SampleMonotoneReport, EVALUATION_BUDGET,
};

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Adjacency relation between datasets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NeighborModel {
    /// Replace one record; dataset size stays fixed.
    #[default]
    Swap,
    /// Add or remove one record.
    AddSubtract,
}

impl fmt::Display for NeighborModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NeighborModel::Swap => f.write_str("swap"),
            NeighborModel::AddSubtract => f.write_str("add_subtract"),
        }
    }
}

/// Closed output interval `[lo, hi]`. Serialized as a two-element array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 2]", into = "[f64; 2]")]
pub struct OutputRange {
    lo: f64,
    hi: f64,
}

impl OutputRange {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if lo.is_finite() && hi.is_finite() && lo < hi {
            Ok(Self { lo, hi })
        } else {
            Err(Error::InvalidRange { lo, hi })
        }
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, y: f64) -> bool {
        self.lo <= y && y <= self.hi
    }

    fn check(&self, value: f64) -> Result<f64> {
        if self.contains(value) {
            Ok(value)
        } else {
            Err(Error::OutOfRange {
                value,
                lo: self.lo,
                hi: self.hi,
            })
        }
    }
}

impl TryFrom<[f64; 2]> for OutputRange {
    type Error = Error;

    fn try_from(v: [f64; 2]) -> Result<Self> {
        OutputRange::new(v[0], v[1])
    }
}

impl From<OutputRange> for [f64; 2] {
    fn from(r: OutputRange) -> Self {
        [r.lo, r.hi]
    }
}

/// Number of record changes needed before the envelopes bracket an output.
/// `Infinite` marks outputs outside the table's support.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Distance {
    Finite(usize),
    Infinite,
}

impl Distance {
    pub fn finite(self) -> Option<usize> {
        match self {
            Distance::Finite(l) => Some(l),
            Distance::Infinite => None,
        }
    }
}

impl fmt::Display for Distance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Distance::Finite(l) => write!(f, "{l}"),
            Distance::Infinite => f.write_str("inf"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
}

/// One signed piece of the output line.
///
/// For `ell >= 1` this is the envelope step between distances `ell - 1` and
/// `ell`; its width is the marginal sensitivity. On smoothed tables the two
/// flat bands around the center are reported with `ell == 0`, and the `ell == 1`
/// pieces start at the outer edge of the band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub sign: Sign,
    pub ell: usize,
    pub lo: f64,
    pub hi: f64,
    pub width: f64,
}

impl Interval {
    fn new(sign: Sign, ell: usize, lo: f64, hi: f64) -> Self {
        Self {
            sign,
            ell,
            lo,
            hi,
            width: hi - lo,
        }
    }

    /// Endpoint closest to the center.
    pub fn near(&self) -> f64 {
        match self.sign {
            Sign::Plus => self.lo,
            Sign::Minus => self.hi,
        }
    }

    /// Endpoint farthest from the center.
    pub fn far(&self) -> f64 {
        match self.sign {
            Sign::Plus => self.hi,
            Sign::Minus => self.lo,
        }
    }

    pub fn is_band(&self) -> bool {
        self.ell == 0
    }
}

/// Upper and lower envelopes `f̄(x; l)`, `f_(x; l)` for `l = 0..=L`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTable", into = "RawTable")]
pub struct EnvelopeTable {
    center: f64,
    upper: Vec<f64>,
    lower: Vec<f64>,
    range: OutputRange,
    model: NeighborModel,
    rho: f64,
}

#[derive(Serialize, Deserialize)]
struct RawTable {
    center: f64,
    upper: Vec<f64>,
    lower: Vec<f64>,
    range: OutputRange,
    #[serde(default)]
    model: NeighborModel,
    #[serde(default, skip_serializing_if = "is_zero")]
    rho: f64,
}

fn is_zero(v: &f64) -> bool {
    *v == 0.0
}

impl TryFrom<RawTable> for EnvelopeTable {
    type Error = Error;

    fn try_from(raw: RawTable) -> Result<Self> {
        EnvelopeTable::with_smoothing(
            raw.center, raw.upper, raw.lower, raw.range, raw.model, raw.rho,
        )
    }
}

impl From<EnvelopeTable> for RawTable {
    fn from(t: EnvelopeTable) -> Self {
        RawTable {
            center: t.center,
            upper: t.upper,
            lower: t.lower,
            range: t.range,
            model: t.model,
            rho: t.rho,
        }
    }
}

impl EnvelopeTable {
    pub fn new(
        center: f64,
        upper: Vec<f64>,
        lower: Vec<f64>,
        range: OutputRange,
        model: NeighborModel,
    ) -> Result<Self> {
        Self::with_smoothing(center, upper, lower, range, model, 0.0)
    }

    fn with_smoothing(
        center: f64,
        upper: Vec<f64>,
        lower: Vec<f64>,
        range: OutputRange,
        model: NeighborModel,
        rho: f64,
    ) -> Result<Self> {
        let bad = |msg: String| Err(Error::InvalidTable(msg));
        if upper.is_empty() || upper.len() != lower.len() {
            return bad(format!(
                "upper and lower must be nonempty and equally long ({} vs {})",
                upper.len(),
                lower.len()
            ));
        }
        if !(rho.is_finite() && rho >= 0.0) {
            return bad(format!("smoothing radius must be >= 0, got {rho}"));
        }
        if upper.iter().chain(&lower).any(|v| !v.is_finite()) || !center.is_finite() {
            return bad("entries must be finite".into());
        }
        if upper[0] != center || lower[0] != center {
            return bad("upper[0] and lower[0] must equal the center".into());
        }
        if upper.windows(2).any(|w| w[1] < w[0]) {
            return bad("upper envelope must be nondecreasing".into());
        }
        if lower.windows(2).any(|w| w[1] > w[0]) {
            return bad("lower envelope must be nonincreasing".into());
        }
        let last = upper.len() - 1;
        if !range.contains(upper[last]) || !range.contains(lower[last]) {
            return bad(format!(
                "envelopes [{}, {}] leave the range [{}, {}]",
                lower[last], upper[last], range.lo, range.hi
            ));
        }
        let table = Self {
            center,
            upper,
            lower,
            range,
            model,
            rho,
        };
        if rho > 0.0 {
            let (band_lo, band_hi) = table.band();
            if last == 0 || table.upper[1] < band_hi || table.lower[1] > band_lo {
                return bad("smoothed table must cover the band at distance 1".into());
            }
        }
        Ok(table)
    }

    pub fn center(&self) -> f64 {
        self.center
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn range(&self) -> OutputRange {
        self.range
    }

    pub fn model(&self) -> NeighborModel {
        self.model
    }

    /// Smoothing radius applied by [`smooth_shift`]; zero for plain tables.
    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// Largest modeled distance `L`.
    pub fn max_distance(&self) -> usize {
        self.upper.len() - 1
    }

    /// `[lower[L], upper[L]]`: the set of outputs with finite score.
    pub fn support(&self) -> (f64, f64) {
        let l = self.max_distance();
        (self.lower[l], self.upper[l])
    }

    /// The flat band `[center - rho, center + rho]`, clipped to the range.
    pub fn band(&self) -> (f64, f64) {
        (
            (self.center - self.rho).max(self.range.lo),
            (self.center + self.rho).min(self.range.hi),
        )
    }

    /// Marginal sensitivity `Δ_{±l}`; `signed_ell` is `+l` or `-l`, `l >= 1`.
    pub fn marginal(&self, signed_ell: i64) -> f64 {
        let l = signed_ell.unsigned_abs() as usize;
        assert!(
            l >= 1 && l <= self.max_distance(),
            "distance {l} out of 1..={}",
            self.max_distance()
        );
        if signed_ell > 0 {
            self.upper[l] - self.upper[l - 1]
        } else {
            self.lower[l - 1] - self.lower[l]
        }
    }

    /// All signed pieces: positive side first (band, then `l = 1..=L`), then
    /// the negative side in the same order. Zero-width pieces are kept.
    pub fn intervals(&self) -> Vec<Interval> {
        let l_max = self.max_distance();
        let (band_lo, band_hi) = self.band();
        let mut out = Vec::with_capacity(2 * l_max + 2);
        if self.rho > 0.0 {
            out.push(Interval::new(Sign::Plus, 0, self.center, band_hi));
        }
        for l in 1..=l_max {
            let lo = if l == 1 { band_hi } else { self.upper[l - 1] };
            out.push(Interval::new(Sign::Plus, l, lo, self.upper[l]));
        }
        if self.rho > 0.0 {
            out.push(Interval::new(Sign::Minus, 0, band_lo, self.center));
        }
        for l in 1..=l_max {
            let hi = if l == 1 { band_lo } else { self.lower[l - 1] };
            out.push(Interval::new(Sign::Minus, l, self.lower[l], hi));
        }
        out
    }

    /// Total length of the support.
    pub fn support_width(&self) -> f64 {
        let (lo, hi) = self.support();
        hi - lo
    }

    /// Drops trailing distances at which neither envelope moves any more.
    pub fn trimmed(&self) -> Self {
        let mut keep = self.max_distance();
        while keep > 1
            && self.upper[keep] == self.upper[keep - 1]
            && self.lower[keep] == self.lower[keep - 1]
        {
            keep -= 1;
        }
        let mut t = self.clone();
        t.upper.truncate(keep + 1);
        t.lower.truncate(keep + 1);
        t
    }

    /// Pads the table with saturated rows up to distance `l_max`.
    pub fn extended_to(&self, l_max: usize) -> Self {
        let mut t = self.clone();
        let (lo, hi) = self.support();
        while t.max_distance() < l_max {
            t.upper.push(hi);
            t.lower.push(lo);
        }
        t
    }

    pub fn inverse_index(&self, y: f64) -> Distance {
        inverse_index(y, self)
    }

    /// CSV rows `ell,upper,lower` with a header line.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("ell,upper,lower\n");
        for (l, (u, d)) in self.upper.iter().zip(&self.lower).enumerate() {
            s.push_str(&format!("{l},{u},{d}\n"));
        }
        s
    }

    /// Parses the output of [`EnvelopeTable::to_csv`].
    pub fn from_csv(text: &str, range: OutputRange, model: NeighborModel) -> Result<Self> {
        let mut upper = Vec::new();
        let mut lower = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || (i == 0 && line.starts_with("ell")) {
                continue;
            }
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            let parse = |s: &str| {
                s.parse::<f64>()
                    .map_err(|e| Error::InvalidTable(format!("line {}: {e}", i + 1)))
            };
            if cols.len() != 3 {
                return Err(Error::InvalidTable(format!(
                    "line {}: expected 3 columns",
                    i + 1
                )));
            }
            let ell = cols[0]
                .parse::<usize>()
                .map_err(|e| Error::InvalidTable(format!("line {}: {e}", i + 1)))?;
            if ell != upper.len() {
                return Err(Error::InvalidTable(format!(
                    "line {}: expected ell = {}",
                    i + 1,
                    upper.len()
                )));
            }
            upper.push(parse(cols[1])?);
            lower.push(parse(cols[2])?);
        }
        let center = *upper
            .first()
            .ok_or_else(|| Error::InvalidTable("no rows".into()))?;
        Self::new(center, upper, lower, range, model)
    }
}

/// Smallest `l` with `lower[l] <= y <= upper[l]`, or `Infinite` outside the
/// support.
pub fn inverse_index(y: f64, table: &EnvelopeTable) -> Distance {
    table
        .upper
        .iter()
        .zip(&table.lower)
        .position(|(&u, &d)| d <= y && y <= u)
        .map_or(Distance::Infinite, Distance::Finite)
}

/// Median of an unsorted sample; the mean of the two middle order statistics
/// for even sizes. `None` for an empty sample.
pub fn median(data: &[f64]) -> Option<f64> {
    if data.is_empty() {
        return None;
    }
    let mut v = data.to_vec();
    v.sort_by(f64::total_cmp);
    Some(median_of_sorted(&v))
}

fn median_of_sorted(v: &[f64]) -> f64 {
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Median after removing the `removed` smallest records and adding `added`
/// copies of `fill` above everything else. `None` if nothing is left.
fn raised_median(sorted: &[f64], removed: usize, added: usize, fill: f64) -> Option<f64> {
    let kept = sorted.len().checked_sub(removed)?;
    if kept + added == 0 {
        return None;
    }
    let mut v = sorted[removed..].to_vec();
    v.extend(std::iter::repeat(fill).take(added));
    Some(median_of_sorted(&v))
}

/// Mirror image of [`raised_median`]: drop the largest records, add `fill`
/// below.
fn lowered_median(sorted: &[f64], removed: usize, added: usize, fill: f64) -> Option<f64> {
    let kept = sorted.len().checked_sub(removed)?;
    if kept + added == 0 {
        return None;
    }
    let mut v: Vec<f64> = std::iter::repeat(fill).take(added).collect();
    v.extend_from_slice(&sorted[..kept]);
    Some(median_of_sorted(&v))
}

/// Envelope of the median: pushing `l` of the smallest (largest) records to
/// the top (bottom) of the range maximizes (minimizes) every order statistic.
/// Under add/subtract adjacency each step either removes an extreme record or
/// adds one at the range bound.
pub fn build_median_envelope(
    data: &[f64],
    range: OutputRange,
    model: NeighborModel,
    max_distance: usize,
) -> Result<EnvelopeTable> {
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    if max_distance < 1 {
        return Err(Error::DistanceTooSmall {
            min: 1,
            got: max_distance,
        });
    }
    for &v in data {
        range.check(v)?;
    }
    let mut sorted = data.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let center = median_of_sorted(&sorted);

    let mut upper = vec![center];
    let mut lower = vec![center];
    for l in 1..=max_distance {
        // (removed, added) splits reachable with budget l
        let splits: Vec<(usize, usize)> = match model {
            NeighborModel::Swap => vec![(l.min(n), l.min(n))],
            NeighborModel::AddSubtract => (0..=l.min(n)).map(|r| (r, l - r)).collect(),
        };
        let hi = splits
            .iter()
            .filter_map(|&(r, a)| raised_median(&sorted, r, a, range.hi))
            .fold(upper[l - 1], f64::max);
        let lo = splits
            .iter()
            .filter_map(|&(r, a)| lowered_median(&sorted, r, a, range.lo))
            .fold(lower[l - 1], f64::min);
        upper.push(hi.min(range.hi));
        lower.push(lo.max(range.lo));
    }
    EnvelopeTable::new(center, upper, lower, range, model)
}

/// Envelope of a sum whose records each move it by at most `per_record_bound`.
/// Each changed record moves the value by at most the bound, clipped to the
/// range.
pub fn build_bounded_sum_envelope(
    value: f64,
    per_record_bound: f64,
    range: OutputRange,
    model: NeighborModel,
    max_distance: usize,
) -> Result<EnvelopeTable> {
    crate::error::positive("per_record_bound", per_record_bound)?;
    range.check(value)?;
    let steps = 0..=max_distance;
    let upper = steps
        .clone()
        .map(|l| (value + l as f64 * per_record_bound).min(range.hi))
        .collect();
    let lower = steps
        .map(|l| (value - l as f64 * per_record_bound).max(range.lo))
        .collect();
    EnvelopeTable::new(value, upper, lower, range, model)
}

/// Shifts both envelopes outward by `rho` (clipped to the range) and keeps the
/// score flat on `[center - rho, center + rho]`.
pub fn smooth_shift(table: &EnvelopeTable, rho: f64) -> Result<EnvelopeTable> {
    if !(rho.is_finite() && rho >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "rho",
            reason: format!("must be >= 0, got {rho}"),
        });
    }
    if rho == 0.0 {
        return Ok(table.clone());
    }
    let r = table.range;
    let upper = table
        .upper
        .iter()
        .enumerate()
        .map(|(l, &u)| if l == 0 { u } else { (u + rho).min(r.hi) })
        .collect();
    let lower = table
        .lower
        .iter()
        .enumerate()
        .map(|(l, &d)| if l == 0 { d } else { (d - rho).max(r.lo) })
        .collect();
    EnvelopeTable::with_smoothing(
        table.center,
        upper,
        lower,
        r,
        table.model,
        table.rho + rho,
    )
}
