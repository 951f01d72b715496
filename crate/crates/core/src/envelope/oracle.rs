//! Exhaustive enumeration over a finite universe of record values.
//!
//! These routines are slow on purpose: they visit every dataset within a
//! given distance and are the reference the analytic builders are checked
//! against. Functions are assumed to be symmetric in their records, so added
//! records are enumerated as multisets.

use super::{inverse_index, Distance, EnvelopeTable, NeighborModel, OutputRange};
use crate::error::{Error, Result};

/// Maximum number of function evaluations a single enumeration may perform.
pub const EVALUATION_BUDGET: u128 = 10_000_000;

fn binomial(n: u128, k: u128) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) / (i + 1))
}

fn multichoose(n: usize, k: usize) -> u128 {
    if n == 0 {
        return u128::from(k == 0);
    }
    binomial((n + k - 1) as u128, k as u128)
}

/// (removed, added) record counts reachable with edit budget exactly `level`.
fn splits(model: NeighborModel, n: usize, level: usize) -> Vec<(usize, usize)> {
    match model {
        NeighborModel::Swap => {
            let m = level.min(n);
            vec![(m, m)]
        }
        NeighborModel::AddSubtract => (0..=level.min(n)).map(|r| (r, level - r)).collect(),
    }
}

fn level_cost(model: NeighborModel, n: usize, universe: usize, level: usize) -> u128 {
    splits(model, n, level)
        .into_iter()
        .map(|(r, a)| binomial(n as u128, r as u128) * multichoose(universe, a))
        .sum()
}

fn total_cost(model: NeighborModel, n: usize, universe: usize, max_level: usize) -> u128 {
    (0..=max_level)
        .map(|l| level_cost(model, n, universe, l))
        .sum()
}

fn check_budget(needed: u128) -> Result<()> {
    if needed > EVALUATION_BUDGET {
        Err(Error::BudgetExceeded {
            needed,
            budget: EVALUATION_BUDGET,
        })
    } else {
        Ok(())
    }
}

/// Calls `visit` for every `k`-subset of `0..n`, in lexicographic order.
fn for_each_combination(n: usize, k: usize, visit: &mut dyn FnMut(&[usize])) {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, visit: &mut dyn FnMut(&[usize])) {
        if cur.len() == k {
            visit(cur);
            return;
        }
        for i in start..n {
            if n - i < k - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, n, k, cur, visit);
            cur.pop();
        }
    }
    rec(0, n, k, &mut Vec::with_capacity(k), visit);
}

/// Calls `visit` for every size-`k` multiset of indices into `0..n`.
fn for_each_multiset(n: usize, k: usize, visit: &mut dyn FnMut(&[usize])) {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, visit: &mut dyn FnMut(&[usize])) {
        if cur.len() == k {
            visit(cur);
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i, n, k, cur, visit);
            cur.pop();
        }
    }
    rec(0, n, k, &mut Vec::with_capacity(k), visit);
}

/// Visits every dataset obtained from `data` by one (removed, added) split of
/// edit budget `level`. Datasets at smaller distance are covered because
/// a replaced record may be replaced by its own value.
fn for_each_at_level(
    data: &[f64],
    universe: &[f64],
    model: NeighborModel,
    level: usize,
    visit: &mut dyn FnMut(&[f64]),
) {
    let n = data.len();
    let mut buf: Vec<f64> = Vec::with_capacity(n + level);
    for (removed, added) in splits(model, n, level) {
        for_each_combination(n, removed, &mut |gone| {
            for_each_multiset(universe.len(), added, &mut |extra| {
                buf.clear();
                let mut skip = gone.iter().peekable();
                for (i, &v) in data.iter().enumerate() {
                    if skip.peek() == Some(&&i) {
                        skip.next();
                    } else {
                        buf.push(v);
                    }
                }
                buf.extend(extra.iter().map(|&j| universe[j]));
                visit(&buf);
            });
        });
    }
}

/// Envelope table of `f` around `data` by exhaustive search.
///
/// `f` returns `None` for datasets on which it is undefined (such as the
/// median of an empty dataset); those are skipped. `max_distance` may be 0.
pub fn build_envelope_bruteforce<F>(
    f: F,
    universe: &[f64],
    data: &[f64],
    range: OutputRange,
    model: NeighborModel,
    max_distance: usize,
) -> Result<EnvelopeTable>
where
    F: Fn(&[f64]) -> Option<f64>,
{
    check_budget(total_cost(model, data.len(), universe.len(), max_distance))?;
    let center = f(data).ok_or(Error::EmptyData)?;
    range.check(center)?;
    let mut upper = vec![center];
    let mut lower = vec![center];
    for level in 1..=max_distance {
        let mut hi = upper[level - 1];
        let mut lo = lower[level - 1];
        let mut outside = None;
        for_each_at_level(data, universe, model, level, &mut |x| {
            if let Some(v) = f(x) {
                if !range.contains(v) {
                    outside = Some(v);
                }
                hi = hi.max(v);
                lo = lo.min(v);
            }
        });
        if let Some(v) = outside {
            range.check(v)?;
        }
        upper.push(hi);
        lower.push(lo);
    }
    EnvelopeTable::new(center, upper, lower, range, model)
}

/// Largest local sensitivity over all datasets within distance `d`, for
/// `d = 0..=max_distance`.
///
/// The local sensitivity of `x'` is `max |f(x'') - f(x')|` over its
/// neighbors `x''`.
pub fn local_sensitivity_profile<F>(
    f: F,
    universe: &[f64],
    data: &[f64],
    model: NeighborModel,
    max_distance: usize,
) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Option<f64>,
{
    let n_max = data.len() + max_distance;
    let per_point = total_cost(model, n_max, universe.len(), 1);
    check_budget(total_cost(model, data.len(), universe.len(), max_distance) * per_point)?;
    let local = |x: &[f64]| -> Option<f64> {
        let fx = f(x)?;
        let mut best = 0.0f64;
        for_each_at_level(x, universe, model, 1, &mut |nb| {
            if let Some(v) = f(nb) {
                best = best.max((v - fx).abs());
            }
        });
        Some(best)
    };
    let mut profile = vec![local(data).ok_or(Error::EmptyData)?];
    for level in 1..=max_distance {
        let mut best = profile[level - 1];
        for_each_at_level(data, universe, model, level, &mut |x| {
            if let Some(s) = local(x) {
                best = best.max(s);
            }
        });
        profile.push(best);
    }
    Ok(profile)
}

/// Exhaustive inverse sensitivity `len_f(y; x)` on a grid of outputs and the
/// sample-monotone verdict derived from it.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMonotoneReport {
    /// `(y, len_f(y; x))` for each grid point, in grid order.
    pub lens: Vec<(f64, Distance)>,
    /// `len_f` never decreases moving away from `f(x)` on either side.
    pub monotone: bool,
    /// `len_f(y; x)` equals the envelope inverse index wherever it is finite.
    pub matches_inverse_index: bool,
    pub table: EnvelopeTable,
}

/// Computes `len_f(y; x)` by exhaustive search for each grid output and checks
/// sample-monotonicity. Outputs never attained within `max_distance` get an
/// infinite length.
pub fn check_sample_monotone<F>(
    f: F,
    universe: &[f64],
    data: &[f64],
    range: OutputRange,
    model: NeighborModel,
    max_distance: usize,
    y_grid: &[f64],
) -> Result<SampleMonotoneReport>
where
    F: Fn(&[f64]) -> Option<f64>,
{
    const HIT: f64 = 1e-12;
    let table = build_envelope_bruteforce(&f, universe, data, range, model, max_distance)?;
    let mut lens = vec![Distance::Infinite; y_grid.len()];
    for level in 0..=max_distance {
        let mut hit = |x: &[f64]| {
            if let Some(v) = f(x) {
                for (slot, &y) in lens.iter_mut().zip(y_grid) {
                    if *slot == Distance::Infinite && (v - y).abs() <= HIT {
                        *slot = Distance::Finite(level);
                    }
                }
            }
        };
        if level == 0 {
            hit(data);
        } else {
            for_each_at_level(data, universe, model, level, &mut hit);
        }
    }

    let center = table.center();
    let mut pairs: Vec<(f64, Distance)> = y_grid.iter().copied().zip(lens.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let above: Vec<Distance> = pairs.iter().filter(|p| p.0 >= center).map(|p| p.1).collect();
    let below: Vec<Distance> = pairs.iter().rev().filter(|p| p.0 <= center).map(|p| p.1).collect();
    let nondecreasing = |v: &[Distance]| v.windows(2).all(|w| w[0] <= w[1]);
    let monotone = nondecreasing(&above) && nondecreasing(&below);

    let matches_inverse_index = y_grid
        .iter()
        .zip(&lens)
        .filter(|(_, len)| **len != Distance::Infinite)
        .all(|(&y, &len)| inverse_index(y, &table) == len);

    Ok(SampleMonotoneReport {
        lens: y_grid.iter().copied().zip(lens).collect(),
        monotone,
        matches_inverse_index,
        table,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envelope::{build_bounded_sum_envelope, build_median_envelope, median};

    fn grid(n: usize) -> Vec<f64> {
        (0..n).map(|v| v as f64).collect()
    }

    fn r(lo: f64, hi: f64) -> OutputRange {
        OutputRange::new(lo, hi).unwrap()
    }

    fn clipped_sum(x: &[f64]) -> Option<f64> {
        Some(x.iter().sum::<f64>().clamp(0.0, 10.0))
    }

    #[test]
    fn enumeration_counts_match_cost_model() {
        let data = [1.0, 2.0, 3.0];
        let universe = grid(4);
        for model in [NeighborModel::Swap, NeighborModel::AddSubtract] {
            for level in 0..4 {
                let mut count = 0u128;
                for_each_at_level(&data, &universe, model, level, &mut |_| count += 1);
                assert_eq!(count, level_cost(model, 3, 4, level), "{model} level {level}");
            }
        }
        assert_eq!(multichoose(11, 3), 286);
        assert_eq!(binomial(5, 2), 10);
    }

    #[test]
    fn median_bruteforce_matches_example() {
        let t = build_envelope_bruteforce(
            median,
            &grid(11),
            &[1., 2., 3., 4., 5.],
            r(0., 10.),
            NeighborModel::Swap,
            3,
        )
        .unwrap();
        assert_eq!(t.upper(), &[3., 4., 5., 10.]);
        assert_eq!(t.lower(), &[3., 2., 1., 0.]);
        let analytic =
            build_median_envelope(&[1., 2., 3., 4., 5.], r(0., 10.), NeighborModel::Swap, 3)
                .unwrap();
        assert_eq!(t, analytic);
    }

    #[test]
    fn sum_bruteforce_matches_bounded_sum() {
        let data = [1., 1., 0.];
        let t = build_envelope_bruteforce(
            clipped_sum,
            &[0., 1.],
            &data,
            r(0., 10.),
            NeighborModel::AddSubtract,
            3,
        )
        .unwrap();
        let analytic =
            build_bounded_sum_envelope(2., 1., r(0., 10.), NeighborModel::AddSubtract, 3).unwrap();
        assert_eq!(t, analytic);
    }

    #[test]
    fn distance_zero_is_the_point() {
        let t = build_envelope_bruteforce(median, &grid(11), &[4., 7.], r(0., 10.), NeighborModel::Swap, 0)
            .unwrap();
        assert_eq!(t.upper(), &[5.5]);
        assert_eq!(t.lower(), &[5.5]);
    }

    #[test]
    fn budget_guard() {
        let data = vec![1.0; 12];
        let err = build_envelope_bruteforce(median, &grid(50), &data, r(0., 50.), NeighborModel::Swap, 8)
            .unwrap_err();
        assert!(matches!(err, Error::BudgetExceeded { .. }));
    }

    #[test]
    fn median_is_sample_monotone() {
        let y_grid = grid(11);
        let rep = check_sample_monotone(
            median,
            &grid(11),
            &[1., 2., 3., 4., 5.],
            r(0., 10.),
            NeighborModel::Swap,
            5,
            &y_grid,
        )
        .unwrap();
        assert!(rep.monotone);
        assert!(rep.matches_inverse_index);
        assert_eq!(rep.lens[3], (3.0, Distance::Finite(0)));
        assert_eq!(rep.lens[7], (7.0, Distance::Finite(3)));
        assert!(rep.lens.iter().all(|(_, d)| *d != Distance::Infinite));
    }

    /// Two points for an odd number of ones, plus one point when exactly two
    /// records are one: from all-zero data the output 2 is one change away but
    /// the smaller output 1 needs two.
    fn parity_flavored(x: &[f64]) -> Option<f64> {
        let ones = x.iter().filter(|&&v| v == 1.0).count();
        Some(2.0 * (ones % 2) as f64 + f64::from(u8::from(ones == 2)))
    }

    #[test]
    fn contrived_function_is_not_sample_monotone() {
        let rep = check_sample_monotone(
            parity_flavored,
            &[0., 1.],
            &[0., 0., 0.],
            r(0., 3.),
            NeighborModel::Swap,
            3,
            &[0., 1., 2., 3.],
        )
        .unwrap();
        assert!(!rep.monotone);
        assert_eq!(rep.lens[1], (1.0, Distance::Finite(2)));
        assert_eq!(rep.lens[2], (2.0, Distance::Finite(1)));
        assert!(!rep.matches_inverse_index);
    }

    #[test]
    fn local_profile_of_median() {
        let p = local_sensitivity_profile(median, &grid(11), &[1., 2., 3., 4., 5.], NeighborModel::Swap, 2)
            .unwrap();
        // (1,2,3,4,5): neighbors reach 2 and 4.
        assert_eq!(p[0], 1.0);
        // (1,2,10,4,5) has median 4 and its neighbor (1,2,0,4,5) has median 2.
        assert_eq!(p[1], 2.0);
        // (1,2,3,10,10) has median 3 and its neighbor (10,2,3,10,10) has median 10.
        assert_eq!(p[2], 7.0);
    }
}
