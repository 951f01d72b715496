//! Built-in verification suites over exhaustively enumerated small datasets.
//!
//! Median datasets are all multisets of 3, 4 or 5 values from `{0, ..., 10}`
//! under swap neighbors, with output range `[0, 10]` and envelopes out to
//! distance `n`, where every envelope reaches the range ends. Sum datasets
//! hold records in `{0, 1}` under add/subtract neighbors, with output range
//! `[0, 10]` and envelopes out to distance 10.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::approx::{
    schedule_from_local_sensitivity, schedule_to_envelope, schedule_truncate_global,
    RadiusSchedule,
};
use crate::envelope::{
    build_bounded_sum_envelope, build_envelope_bruteforce, build_median_envelope, median,
    EnvelopeTable, NeighborModel, OutputRange,
};
use crate::error::{Error, Result};
use crate::mechanisms::{Mechanism, MechanismKind, MechanismSpec, Piecewise, TruncatedLaplace};
use crate::scores::q_approx;

use super::{
    comparison_grid, gof, verify_bounded_range_mechanisms, verify_dominance,
    verify_dp_mechanisms, VerificationReport, DOMINANCE_TOLERANCE, RATIO_TOLERANCE,
};

const UNIVERSE_MAX: u8 = 10;
const SIZES: [usize; 3] = [3, 4, 5];
const SUM_MAX_DISTANCE: usize = 10;
/// Global sensitivity of the median on `[0, 10]`.
const MEDIAN_GLOBAL: f64 = 10.0;
/// Global sensitivity of a sum of `{0, 1}` records.
const SUM_GLOBAL: f64 = 1.0;
/// Steps in the approximate schedules.
const APPROX_STEPS: usize = 6;
/// Smallest radius used in approximate schedules; local sensitivity is 0 on
/// constant datasets and radii must be positive.
const APPROX_FLOOR: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Suite {
    DpMedian,
    DpSum,
    BrMedian,
    BrSum,
    DominanceMedian,
    GofMedian,
    ApproxMedian,
    OracleMedian,
    OracleSum,
}

impl Suite {
    pub const ALL: [Suite; 9] = [
        Suite::DpMedian,
        Suite::DpSum,
        Suite::BrMedian,
        Suite::BrSum,
        Suite::DominanceMedian,
        Suite::GofMedian,
        Suite::ApproxMedian,
        Suite::OracleMedian,
        Suite::OracleSum,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::DpMedian => "dp-median",
            Suite::DpSum => "dp-sum",
            Suite::BrMedian => "br-median",
            Suite::BrSum => "br-sum",
            Suite::DominanceMedian => "dominance-median",
            Suite::GofMedian => "gof-median",
            Suite::ApproxMedian => "approx-median",
            Suite::OracleMedian => "oracle-median",
            Suite::OracleSum => "oracle-sum",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|suite| suite.name() == s)
            .ok_or_else(|| Error::UnknownSuite(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteConfig {
    pub mechanism: MechanismKind,
    /// Epsilon the mechanisms are built with.
    pub epsilon: f64,
    /// Epsilon the checks hold them to.
    pub claimed_epsilon: f64,
    pub grid_n: usize,
    pub seed: u64,
    pub n_samples: usize,
    pub n_bins: usize,
    /// First approximate-schedule step replaced by the global sensitivity.
    pub k_trunc: usize,
    /// Negative control: scale every table's first step toward the center
    /// by this factor, breaking neighbor containment.
    pub corrupt_first_step: Option<f64>,
}

impl SuiteConfig {
    pub fn new(epsilon: f64) -> Self {
        Self {
            mechanism: MechanismKind::Plm,
            epsilon,
            claimed_epsilon: epsilon,
            grid_n: super::DEFAULT_GRID,
            seed: 0,
            n_samples: 1_000_000,
            n_bins: 200,
            k_trunc: 4,
            corrupt_first_step: None,
        }
    }
}

fn range10() -> OutputRange {
    OutputRange::new(0.0, f64::from(UNIVERSE_MAX)).expect("valid range")
}

fn universe() -> Vec<f64> {
    (0..=UNIVERSE_MAX).map(f64::from).collect()
}

/// All sorted multisets of sizes 3, 4 and 5 over `{0, ..., 10}`.
pub fn median_datasets() -> Vec<Vec<f64>> {
    fn rec(start: u8, len: usize, cur: &mut Vec<u8>, out: &mut Vec<Vec<f64>>) {
        if cur.len() == len {
            out.push(cur.iter().map(|&v| f64::from(v)).collect());
            return;
        }
        for v in start..=UNIVERSE_MAX {
            cur.push(v);
            rec(v, len, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    for n in SIZES {
        rec(0, n, &mut Vec::with_capacity(n), &mut out);
    }
    out
}

/// Unordered pairs `(i, j)`, `i < j`, of datasets differing in one record.
/// Datasets must be sorted and hold integer values.
pub fn swap_neighbor_pairs(datasets: &[Vec<f64>]) -> Vec<(usize, usize)> {
    let key = |d: &[f64]| d.iter().map(|&v| v as i64).collect::<Vec<_>>();
    let index: HashMap<Vec<i64>, usize> = datasets
        .iter()
        .enumerate()
        .map(|(i, d)| (key(d), i))
        .collect();
    let mut pairs = Vec::new();
    for (i, d) in datasets.iter().enumerate() {
        let base = key(d);
        let mut seen = base.clone();
        seen.dedup();
        for &v in &seen {
            let pos = base.iter().position(|&x| x == v).expect("value present");
            for w in 0..=i64::from(UNIVERSE_MAX) {
                if w == v {
                    continue;
                }
                let mut nb = base.clone();
                nb[pos] = w;
                nb.sort_unstable();
                if let Some(&j) = index.get(&nb) {
                    if i < j {
                        pairs.push((i, j));
                    }
                }
            }
        }
    }
    pairs
}

/// A `{0, 1}`-valued dataset, identified by its size and number of ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SumDataset {
    pub size: usize,
    pub ones: usize,
}

impl SumDataset {
    pub fn records(self) -> Vec<f64> {
        let mut v = vec![0.0; self.size - self.ones];
        v.resize(self.size, 1.0);
        v
    }
}

/// Datasets of sizes 2 to 6 and the add/subtract pairs touching a dataset of
/// size 3, 4 or 5.
pub fn sum_datasets() -> (Vec<SumDataset>, Vec<(usize, usize)>) {
    let (lo, hi) = (SIZES[0] - 1, SIZES[SIZES.len() - 1] + 1);
    let mut sets = Vec::new();
    for size in lo..=hi {
        for ones in 0..=size {
            sets.push(SumDataset { size, ones });
        }
    }
    let index: HashMap<SumDataset, usize> = sets.iter().enumerate().map(|(i, &d)| (d, i)).collect();
    let mut pairs = Vec::new();
    for (i, d) in sets.iter().enumerate() {
        if d.size == hi {
            continue;
        }
        for extra in 0..=1 {
            let nb = SumDataset {
                size: d.size + 1,
                ones: d.ones + extra,
            };
            pairs.push((i, index[&nb]));
        }
    }
    (sets, pairs)
}

fn median_tables(datasets: &[Vec<f64>]) -> Result<Vec<EnvelopeTable>> {
    datasets
        .par_iter()
        .map(|d| build_median_envelope(d, range10(), NeighborModel::Swap, d.len()))
        .collect()
}

fn sum_tables(sets: &[SumDataset]) -> Result<Vec<EnvelopeTable>> {
    sets.iter()
        .map(|d| {
            build_bounded_sum_envelope(
                d.ones as f64,
                SUM_GLOBAL,
                range10(),
                NeighborModel::AddSubtract,
                SUM_MAX_DISTANCE,
            )
        })
        .collect()
}

/// `t` with `upper[1]` and `lower[1]` pulled toward the center by `factor`.
pub fn corrupt_first_step(t: &EnvelopeTable, factor: f64) -> Result<EnvelopeTable> {
    let c = t.center();
    let mut upper = t.upper().to_vec();
    let mut lower = t.lower().to_vec();
    if upper.len() > 1 {
        upper[1] = c + factor * (upper[1] - c);
        lower[1] = c - factor * (c - lower[1]);
    }
    EnvelopeTable::new(c, upper, lower, t.range(), t.model())
}

fn build_all(
    tables: &[EnvelopeTable],
    cfg: &SuiteConfig,
    global: f64,
) -> Result<Vec<Box<dyn Mechanism>>> {
    let mut spec = MechanismSpec::new(cfg.mechanism, cfg.epsilon);
    spec.global_sensitivity = Some(global);
    tables
        .par_iter()
        .map(|t| match cfg.corrupt_first_step {
            Some(f) => spec.build(&corrupt_first_step(t, f)?),
            None => spec.build(t),
        })
        .collect()
}

fn pairwise<F>(name: &str, pairs: &[(usize, usize)], check: F) -> VerificationReport
where
    F: Fn(usize, usize) -> VerificationReport + Sync,
{
    pairs
        .par_iter()
        .map(|&(i, j)| check(i, j))
        .reduce(|| VerificationReport::new(name, RATIO_TOLERANCE), VerificationReport::merge)
        .named(name)
}

fn ratio_suite(
    name: &str,
    mechs: &[Box<dyn Mechanism>],
    pairs: &[(usize, usize)],
    cfg: &SuiteConfig,
    bounded_range: bool,
) -> VerificationReport {
    pairwise(name, pairs, |i, j| {
        let (a, b) = (mechs[i].as_ref(), mechs[j].as_ref());
        if bounded_range {
            verify_bounded_range_mechanisms(a, b, cfg.claimed_epsilon, cfg.grid_n)
        } else {
            verify_dp_mechanisms(a, b, cfg.claimed_epsilon, cfg.grid_n)
        }
    })
}

/// Approximate-variant schedules and tables for every median dataset.
///
/// Each dataset's radii are the largest local sensitivity within the step's
/// distance (computed over the neighbor graph, floored at 0.5), with steps
/// from `k_trunc` on replaced by the global sensitivity.
pub fn approx_median_tables(
    datasets: &[Vec<f64>],
    pairs: &[(usize, usize)],
    k_trunc: usize,
) -> Result<Vec<(EnvelopeTable, RadiusSchedule)>> {
    let local: Vec<f64> = datasets
        .par_iter()
        .map(|d| {
            let t = build_median_envelope(d, range10(), NeighborModel::Swap, 1)?;
            Ok((t.upper()[1] - t.center()).max(t.center() - t.lower()[1]))
        })
        .collect::<Result<_>>()?;
    let mut adj = vec![Vec::new(); datasets.len()];
    for &(i, j) in pairs {
        adj[i].push(j);
        adj[j].push(i);
    }
    let mut profiles = vec![local];
    for _ in 0..APPROX_STEPS {
        let prev = profiles.last().expect("nonempty");
        let next = (0..datasets.len())
            .map(|i| adj[i].iter().fold(prev[i], |m, &j| m.max(prev[j])))
            .collect();
        profiles.push(next);
    }
    datasets
        .par_iter()
        .enumerate()
        .map(|(i, d)| {
            let s = schedule_from_local_sensitivity(|l| profiles[l][i].max(APPROX_FLOOR), APPROX_STEPS)?;
            let s = schedule_truncate_global(&s, k_trunc, MEDIAN_GLOBAL)?;
            let c = median(d).ok_or(Error::EmptyData)?;
            Ok((schedule_to_envelope(c, &s, range10())?, s))
        })
        .collect()
}

fn approx_suite(cfg: &SuiteConfig) -> Result<VerificationReport> {
    let name = Suite::ApproxMedian.name();
    let datasets = median_datasets();
    let pairs = swap_neighbor_pairs(&datasets);
    let approx = approx_median_tables(&datasets, &pairs, cfg.k_trunc)?;
    let mechs: Vec<Piecewise> = approx
        .par_iter()
        .map(|(t, _)| match cfg.corrupt_first_step {
            Some(f) => Piecewise::laplace(&corrupt_first_step(t, f)?, cfg.epsilon),
            None => Piecewise::laplace(t, cfg.epsilon),
        })
        .collect::<Result<_>>()?;
    Ok(pairwise(name, &pairs, |i, j| {
        let (a, b) = (&mechs[i], &mechs[j]);
        let mut r = verify_dp_mechanisms(a, b, cfg.claimed_epsilon, cfg.grid_n);
        let (sa, sb) = (&approx[i].1, &approx[j].1);
        let (ca, cb) = (a.center(), b.center());
        let mut sens = 0.0f64;
        for y in comparison_grid(a, b, cfg.grid_n) {
            let qa = q_approx((y - ca).abs(), sa).value();
            let qb = q_approx((y - cb).abs(), sb).value();
            if qa.is_finite() && qb.is_finite() {
                sens = sens.max((qa - qb).abs());
            } else if qa.is_finite() != qb.is_finite() {
                sens = f64::INFINITY;
            }
        }
        r.score_sensitivity = Some(sens);
        if !(sens <= 1.0 + 1e-12) {
            r.fail_with(format!(
                "approximate score sensitivity {sens} between centers {ca} and {cb}"
            ));
        }
        r
    }))
}

fn dominance_suite(cfg: &SuiteConfig) -> Result<VerificationReport> {
    let name = Suite::DominanceMedian.name();
    let datasets = median_datasets();
    let tables = median_tables(&datasets)?;
    let reports: Vec<VerificationReport> = tables
        .par_iter()
        .map(|t| {
            let (lo, hi) = t.support();
            let reach = (hi - t.center()).max(t.center() - lo);
            let alphas: Vec<f64> = (0..1000).map(|k| reach * k as f64 / 999.0).collect();
            let mut r = verify_dominance(t, cfg.epsilon, &alphas)?;
            if let Some(m) = r.dominance_interior_margin {
                if !(m > 0.0) {
                    r.fail_with(format!(
                        "no strict dominance inside the intervals around center {}",
                        t.center()
                    ));
                }
            }
            Ok(r)
        })
        .collect::<Result<_>>()?;
    Ok(reports
        .into_iter()
        .fold(VerificationReport::new(name, DOMINANCE_TOLERANCE), VerificationReport::merge))
}

/// Reference table for single-dataset checks: median of `(1, 2, 3, 4, 5)`,
/// range `[0, 10]`, distance 3.
pub fn reference_median_table() -> EnvelopeTable {
    build_median_envelope(&[1., 2., 3., 4., 5.], range10(), NeighborModel::Swap, 3)
        .expect("valid reference table")
}

fn gof_suite(cfg: &SuiteConfig) -> Result<VerificationReport> {
    let t = reference_median_table();
    let mechs: Vec<Box<dyn Mechanism>> = vec![
        Box::new(Piecewise::laplace(&t, cfg.epsilon)?),
        Box::new(Piecewise::inverse_sensitivity(&t, cfg.epsilon)?),
        Box::new(TruncatedLaplace::new(t.center(), MEDIAN_GLOBAL, cfg.epsilon, t.range())?),
    ];
    let reports: Vec<VerificationReport> = mechs
        .par_iter()
        .map(|m| gof(m.as_ref(), m.as_ref(), cfg.n_samples, cfg.n_bins, cfg.seed))
        .collect::<Result<_>>()?;
    Ok(reports
        .into_iter()
        .fold(VerificationReport::new(Suite::GofMedian.name(), super::GOF_MIN_P), VerificationReport::merge))
}

fn same_table(a: &EnvelopeTable, b: &EnvelopeTable) -> bool {
    a.center() == b.center() && a.upper() == b.upper() && a.lower() == b.lower()
}

fn oracle_median_suite() -> Result<VerificationReport> {
    let name = Suite::OracleMedian.name();
    let datasets = median_datasets();
    let universe = universe();
    let reports: Vec<VerificationReport> = datasets
        .par_iter()
        .map(|d| {
            let fast = build_median_envelope(d, range10(), NeighborModel::Swap, d.len())?;
            let slow =
                build_envelope_bruteforce(median, &universe, d, range10(), NeighborModel::Swap, d.len())?;
            let mut r = VerificationReport::new(name, 0.0);
            r.cases = 1;
            if !same_table(&fast, &slow) {
                r.fail_with(format!("median envelope mismatch on {d:?}"));
            }
            Ok(r)
        })
        .collect::<Result<_>>()?;
    Ok(reports
        .into_iter()
        .fold(VerificationReport::new(name, 0.0), VerificationReport::merge))
}

fn oracle_sum_suite() -> Result<VerificationReport> {
    let name = Suite::OracleSum.name();
    let (sets, _) = sum_datasets();
    let tables = sum_tables(&sets)?;
    // wide enough that no reachable sum leaves it; results are clipped after
    let wide = OutputRange::new(0.0, (SIZES[2] + 1 + SUM_MAX_DISTANCE) as f64)?;
    let sum = |x: &[f64]| Some(x.iter().sum::<f64>());
    let mut report = VerificationReport::new(name, 0.0);
    for (d, fast) in sets.iter().zip(&tables) {
        let slow = build_envelope_bruteforce(
            sum,
            &[0.0, 1.0],
            &d.records(),
            wide,
            NeighborModel::AddSubtract,
            SUM_MAX_DISTANCE,
        )?;
        let clip = |v: &[f64]| v.iter().map(|x| x.clamp(0.0, 10.0)).collect::<Vec<_>>();
        let mut r = VerificationReport::new(name, 0.0);
        r.cases = 1;
        if fast.center() != slow.center()
            || fast.upper() != clip(slow.upper()).as_slice()
            || fast.lower() != clip(slow.lower()).as_slice()
        {
            r.fail_with(format!("sum envelope mismatch on {d:?}"));
        }
        report = report.merge(r);
    }
    Ok(report)
}

/// Runs one built-in suite.
pub fn run_suite(suite: Suite, cfg: &SuiteConfig) -> Result<VerificationReport> {
    match suite {
        Suite::DpMedian | Suite::BrMedian => {
            let datasets = median_datasets();
            let pairs = swap_neighbor_pairs(&datasets);
            let mechs = build_all(&median_tables(&datasets)?, cfg, MEDIAN_GLOBAL)?;
            Ok(ratio_suite(suite.name(), &mechs, &pairs, cfg, suite == Suite::BrMedian))
        }
        Suite::DpSum | Suite::BrSum => {
            let (sets, pairs) = sum_datasets();
            let mechs = build_all(&sum_tables(&sets)?, cfg, SUM_GLOBAL)?;
            Ok(ratio_suite(suite.name(), &mechs, &pairs, cfg, suite == Suite::BrSum))
        }
        Suite::DominanceMedian => dominance_suite(cfg),
        Suite::GofMedian => gof_suite(cfg),
        Suite::ApproxMedian => approx_suite(cfg),
        Suite::OracleMedian => oracle_median_suite(),
        Suite::OracleSum => oracle_sum_suite(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dataset_counts() {
        let d = median_datasets();
        assert_eq!(d.len(), 286 + 1001 + 3003);
        let pairs = swap_neighbor_pairs(&d);
        assert!(pairs.iter().all(|&(i, j)| i < j && d[i].len() == d[j].len()));
        // (0, 0, 0) reaches (0, 0, w) for each of the 10 other values
        let zero = d.iter().position(|x| x == &[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(pairs.iter().filter(|&&(i, j)| i == zero || j == zero).count(), 10);
        // (0, 1, 2) has 3 positions times 10 replacements, all distinct
        let spread = d.iter().position(|x| x == &[0.0, 1.0, 2.0]).unwrap();
        assert_eq!(pairs.iter().filter(|&&(i, j)| i == spread || j == spread).count(), 30);

        let (sets, pairs) = sum_datasets();
        assert_eq!(sets.len(), (2..=6).map(|n| n + 1).sum::<usize>());
        assert_eq!(pairs.len(), 2 * (3 + 4 + 5 + 6));
        assert_eq!(SumDataset { size: 4, ones: 1 }.records(), vec![0., 0., 0., 1.]);
    }

    #[test]
    fn suite_names_round_trip() {
        for s in Suite::ALL {
            assert_eq!(s.name().parse::<Suite>().unwrap(), s);
        }
        assert!(matches!("nope".parse::<Suite>(), Err(Error::UnknownSuite(_))));
    }

    #[test]
    fn approx_tables_contain_neighbors() {
        let d = median_datasets();
        let pairs = swap_neighbor_pairs(&d);
        let approx = approx_median_tables(&d, &pairs, 4).unwrap();
        // every neighbor's step l-1 ball sits inside this dataset's step l ball
        for &(i, j) in pairs.iter().step_by(97) {
            for (a, b) in [(i, j), (j, i)] {
                let (ta, tb) = (&approx[a].0, &approx[b].0);
                for l in 1..=ta.max_distance() {
                    assert!(tb.upper()[l - 1] <= ta.upper()[l] + 1e-12);
                    assert!(tb.lower()[l - 1] >= ta.lower()[l] - 1e-12);
                }
            }
        }
        let constant = d.iter().position(|x| x == &[5.0; 5]).unwrap();
        assert_eq!(approx[constant].1.radii()[0], 0.5);
    }

    #[test]
    fn oracle_sum_agrees() {
        let r = oracle_sum_suite().unwrap();
        assert!(r.pass, "{r:?}");
        assert_eq!(r.cases, 25);
    }
}
