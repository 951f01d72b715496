//! Numerical privacy and correctness checks.
//!
//! Densities here are piecewise log-linear between breakpoints, so the
//! supremum of a log-density ratio is reached at one-sided limits at the
//! breakpoints of either density. Each check merges both breakpoint sets and
//! evaluates interior points of every merged segment plus points `1e-9`
//! widths from each end.

mod suite;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::envelope::EnvelopeTable;
use crate::error::{positive, Error, Result};
use crate::mechanisms::{Mechanism, Piecewise, RandomStream};

pub use suite::{
    approx_median_tables, corrupt_first_step, median_datasets, reference_median_table, run_suite, sum_datasets,
    swap_neighbor_pairs, Suite, SuiteConfig, SumDataset,
};

/// Absolute tolerance on log-density ratios.
pub const RATIO_TOLERANCE: f64 = 1e-9;
/// Dominance margins above `-DOMINANCE_TOLERANCE` count as nonnegative.
pub const DOMINANCE_TOLERANCE: f64 = 1e-12;
/// Smallest acceptable goodness-of-fit p-value.
pub const GOF_MIN_P: f64 = 1e-4;
/// Interior grid points per merged segment.
pub const DEFAULT_GRID: usize = 64;

/// Outcome of one check or of a merged batch of checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub check: String,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_log_ratio: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub br_sum: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dominance_min_margin: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dominance_interior_margin: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub score_sensitivity: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gof_statistic: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gof_p_value: Option<f64>,
    pub grid_size: usize,
    pub tolerance: f64,
    /// Number of cases merged into this report.
    pub cases: usize,
    /// First failing case, if any.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

fn max_opt(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    match (a, b) {
        (Some(x), Some(y)) => Some(x.max(y)),
        (x, None) => x,
        (None, y) => y,
    }
}

fn min_opt(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    match (a, b) {
        (Some(x), Some(y)) => Some(x.min(y)),
        (x, None) => x,
        (None, y) => y,
    }
}

impl VerificationReport {
    pub fn new(check: impl Into<String>, tolerance: f64) -> Self {
        Self {
            check: check.into(),
            pass: true,
            max_log_ratio: None,
            br_sum: None,
            dominance_min_margin: None,
            dominance_interior_margin: None,
            score_sensitivity: None,
            gof_statistic: None,
            gof_p_value: None,
            grid_size: 0,
            tolerance,
            cases: 0,
            failure: None,
        }
    }

    /// Conjunction of two reports: worst value of every statistic, grid sizes
    /// and case counts added.
    pub fn merge(mut self, other: VerificationReport) -> Self {
        self.pass &= other.pass;
        self.max_log_ratio = max_opt(self.max_log_ratio, other.max_log_ratio);
        self.br_sum = max_opt(self.br_sum, other.br_sum);
        self.dominance_min_margin = min_opt(self.dominance_min_margin, other.dominance_min_margin);
        self.dominance_interior_margin =
            min_opt(self.dominance_interior_margin, other.dominance_interior_margin);
        self.score_sensitivity = max_opt(self.score_sensitivity, other.score_sensitivity);
        self.gof_statistic = max_opt(self.gof_statistic, other.gof_statistic);
        self.gof_p_value = min_opt(self.gof_p_value, other.gof_p_value);
        self.grid_size += other.grid_size;
        self.cases += other.cases;
        if self.failure.is_none() {
            self.failure = other.failure;
        }
        self
    }

    fn fail_with(&mut self, why: String) {
        self.pass = false;
        if self.failure.is_none() {
            self.failure = Some(why);
        }
    }

    /// Renamed copy, for merged reports.
    pub fn named(mut self, check: impl Into<String>) -> Self {
        self.check = check.into();
        self
    }
}

/// Chebyshev-spaced points in `(0, 1)`.
fn chebyshev_offsets(n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| 0.5 * (1.0 - (PI * (k as f64 + 0.5) / n as f64).cos()))
        .collect()
}

/// Evaluation points for comparing two densities: interior points of each
/// merged segment plus near-endpoint offsets.
pub fn comparison_grid(a: &dyn Mechanism, b: &dyn Mechanism, grid_n: usize) -> Vec<f64> {
    let mut bps = a.breakpoints();
    bps.extend(b.breakpoints());
    bps.sort_by(f64::total_cmp);
    bps.dedup();
    let offsets = chebyshev_offsets(grid_n);
    let mut grid = Vec::with_capacity((bps.len().saturating_sub(1)) * (grid_n + 2));
    for w in bps.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let width = hi - lo;
        if width <= 0.0 {
            continue;
        }
        grid.push(lo + 1e-9 * width);
        grid.extend(offsets.iter().map(|t| lo + t * width));
        grid.push(hi - 1e-9 * width);
    }
    grid
}

/// `(sup log(a/b), sup log(b/a))` over the comparison grid. A point inside
/// one support only makes the corresponding side infinite.
pub fn log_ratio_extremes(a: &dyn Mechanism, b: &dyn Mechanism, grid_n: usize) -> (f64, f64, usize) {
    let grid = comparison_grid(a, b, grid_n);
    let mut fwd = f64::NEG_INFINITY;
    let mut bwd = f64::NEG_INFINITY;
    for &y in &grid {
        let la = a.log_density(y);
        let lb = b.log_density(y);
        match (la.is_finite(), lb.is_finite()) {
            (true, true) => {
                fwd = fwd.max(la - lb);
                bwd = bwd.max(lb - la);
            }
            (true, false) => fwd = f64::INFINITY,
            (false, true) => bwd = f64::INFINITY,
            (false, false) => {}
        }
    }
    (fwd, bwd, grid.len())
}

fn check_ranges(a: &EnvelopeTable, b: &EnvelopeTable) -> Result<()> {
    let (ra, rb) = (a.range(), b.range());
    if ra != rb {
        return Err(Error::RangeMismatch {
            a_lo: ra.lo(),
            a_hi: ra.hi(),
            b_lo: rb.lo(),
            b_hi: rb.hi(),
        });
    }
    Ok(())
}

/// Pure-DP check of two already built mechanisms against a claimed budget.
pub fn verify_dp_mechanisms(
    a: &dyn Mechanism,
    b: &dyn Mechanism,
    claimed_eps: f64,
    grid_n: usize,
) -> VerificationReport {
    let (fwd, bwd, n) = log_ratio_extremes(a, b, grid_n);
    let worst = fwd.max(bwd);
    let mut r = VerificationReport::new("dp", RATIO_TOLERANCE);
    r.max_log_ratio = Some(worst);
    r.grid_size = n;
    r.cases = 1;
    if !(worst <= claimed_eps + RATIO_TOLERANCE) {
        r.fail_with(format!(
            "max log ratio {worst:.9} exceeds epsilon {claimed_eps} between {} at center {} and center {}",
            a.name(),
            a.center(),
            b.center()
        ));
    }
    r
}

/// Bounded-range check of two already built mechanisms.
pub fn verify_bounded_range_mechanisms(
    a: &dyn Mechanism,
    b: &dyn Mechanism,
    claimed_eps: f64,
    grid_n: usize,
) -> VerificationReport {
    let (fwd, bwd, n) = log_ratio_extremes(a, b, grid_n);
    let sum = fwd + bwd;
    let mut r = VerificationReport::new("bounded_range", RATIO_TOLERANCE);
    r.br_sum = Some(sum);
    r.max_log_ratio = Some(fwd.max(bwd));
    r.grid_size = n;
    r.cases = 1;
    if !(sum <= claimed_eps + RATIO_TOLERANCE) {
        r.fail_with(format!(
            "bounded range sum {sum:.9} exceeds epsilon {claimed_eps} between {} at center {} and center {}",
            a.name(),
            a.center(),
            b.center()
        ));
    }
    r
}

/// Piecewise Laplace densities of two neighboring tables differ by at most
/// `exp(eps)` everywhere.
pub fn verify_dp(
    table_x: &EnvelopeTable,
    table_x2: &EnvelopeTable,
    eps: f64,
    grid_n: usize,
) -> Result<VerificationReport> {
    check_ranges(table_x, table_x2)?;
    let a = Piecewise::laplace(table_x, eps)?;
    let b = Piecewise::laplace(table_x2, eps)?;
    Ok(verify_dp_mechanisms(&a, &b, eps, grid_n))
}

/// Forward plus backward supremum of the piecewise Laplace log-density ratio
/// is at most `eps`.
pub fn verify_bounded_range(
    table_x: &EnvelopeTable,
    table_x2: &EnvelopeTable,
    eps: f64,
    grid_n: usize,
) -> Result<VerificationReport> {
    check_ranges(table_x, table_x2)?;
    let a = Piecewise::laplace(table_x, eps)?;
    let b = Piecewise::laplace(table_x2, eps)?;
    Ok(verify_bounded_range_mechanisms(&a, &b, eps, grid_n))
}

/// `alpha` values lying strictly inside an interval of width at least
/// `min_width`, at relative position in `[edge, 1 - edge]`.
pub fn interior_alphas(table: &EnvelopeTable, alphas: &[f64], min_width: f64, edge: f64) -> Vec<f64> {
    let c = table.center();
    let ivs = table.intervals();
    alphas
        .iter()
        .copied()
        .filter(|&a| {
            ivs.iter().any(|iv| {
                if iv.width < min_width {
                    return false;
                }
                let near = (iv.near() - c).abs();
                let t = (a - near) / iv.width;
                (edge..=1.0 - edge).contains(&t)
            })
        })
        .collect()
}

/// Piecewise Laplace puts at least as much mass within `alpha` of the center
/// as the inverse sensitivity mechanism, for every `alpha` in the grid.
///
/// `dominance_interior_margin` is the smallest margin over alphas inside
/// intervals of width at least 0.5 (relative position in `[0.01, 0.99]`).
pub fn verify_dominance(table: &EnvelopeTable, eps: f64, alpha_grid: &[f64]) -> Result<VerificationReport> {
    let plm = Piecewise::laplace(table, eps)?;
    let inv = Piecewise::inverse_sensitivity(table, eps)?;
    let margin = |a: f64| plm.mass_within(a) - inv.mass_within(a);
    let mut r = VerificationReport::new("dominance", DOMINANCE_TOLERANCE);
    r.grid_size = alpha_grid.len();
    r.cases = 1;
    let mut worst = f64::INFINITY;
    let mut worst_alpha = f64::NAN;
    for &a in alpha_grid {
        let m = margin(a);
        if m < worst {
            worst = m;
            worst_alpha = a;
        }
    }
    r.dominance_min_margin = Some(worst);
    let interior = interior_alphas(table, alpha_grid, 0.5, 0.01);
    if !interior.is_empty() {
        r.dominance_interior_margin = Some(interior.iter().map(|&a| margin(a)).fold(f64::INFINITY, f64::min));
    }
    if !(worst >= -DOMINANCE_TOLERANCE) {
        r.fail_with(format!("dominance margin {worst:e} at alpha {worst_alpha}"));
    }
    Ok(r)
}

/// Smallest `y` in the support with `cdf(y) >= p`, by bisection.
fn cdf_quantile(m: &dyn Mechanism, p: f64) -> f64 {
    let (mut lo, mut hi) = m.support();
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if m.cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// Chi-square goodness of fit of `sampler`'s draws against `density`'s
/// distribution, with `n_bins` equiprobable bins under `density`.
pub fn gof(
    sampler: &dyn Mechanism,
    density: &dyn Mechanism,
    n_samples: usize,
    n_bins: usize,
    seed: u64,
) -> Result<VerificationReport> {
    if n_bins < 2 {
        return Err(Error::InvalidParameter {
            name: "n_bins",
            reason: format!("need at least 2, got {n_bins}"),
        });
    }
    if n_samples < n_bins {
        return Err(Error::InvalidParameter {
            name: "n_samples",
            reason: format!("need at least one sample per bin, got {n_samples}"),
        });
    }
    let (lo, hi) = density.support();
    positive("density support width", hi - lo)?;
    let edges: Vec<f64> = (1..n_bins)
        .map(|k| cdf_quantile(density, k as f64 / n_bins as f64))
        .collect();
    let mut counts = vec![0u64; n_bins];
    let mut stream = RandomStream::new(seed);
    for _ in 0..n_samples {
        let y = sampler.sample(&mut stream);
        counts[edges.partition_point(|&e| e < y)] += 1;
    }
    let expected = n_samples as f64 / n_bins as f64;
    let stat: f64 = counts
        .iter()
        .map(|&o| (o as f64 - expected).powi(2) / expected)
        .sum();
    let chi = ChiSquared::new((n_bins - 1) as f64).map_err(|e| Error::InvalidParameter {
        name: "n_bins",
        reason: e.to_string(),
    })?;
    let p = chi.sf(stat);
    let mut r = VerificationReport::new("gof", GOF_MIN_P);
    r.gof_statistic = Some(stat);
    r.gof_p_value = Some(p);
    r.grid_size = n_bins;
    r.cases = 1;
    if !(p >= GOF_MIN_P) {
        r.fail_with(format!(
            "{} samples against {} density: chi-square {stat:.2}, p = {p:e}",
            sampler.name(),
            density.name()
        ));
    }
    Ok(r)
}
