use std::collections::BTreeMap;

use chrono::NaiveDate;
use rand::seq::{index, SliceRandom};
use serde::Serialize;

use super::{pearson, spearman, ConsistencyError, RepeatedQueryPanel};
use crate::rng::stream;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PermutationResult {
    /// Pooled within-cell variance.
    pub statistic: f64,
    pub p_value: f64,
    pub n_perm: usize,
    pub groups: usize,
}

fn pooled_within_variance(values: &[f64], sizes: &[usize]) -> f64 {
    let mut ss = 0.0;
    let mut dof = 0usize;
    let mut start = 0;
    for &n in sizes {
        let g = &values[start..start + n];
        let m = g.iter().sum::<f64>() / n as f64;
        ss += g.iter().map(|v| (v - m) * (v - m)).sum::<f64>();
        dof += n - 1;
        start += n;
    }
    ss / dof as f64
}

/// Shuffles all scores across cells, keeping cell sizes. `p = (1 + #{null <= observed}) / (1 + n_perm)`.
pub fn permutation_variance_test(
    panel: &RepeatedQueryPanel,
    n_perm: usize,
    seed: u64,
) -> Result<PermutationResult, ConsistencyError> {
    if n_perm == 0 {
        return Err(ConsistencyError::InvalidArgument(
            "n_perm must be positive".into(),
        ));
    }
    let cells: Vec<Vec<f64>> = panel
        .cells()
        .filter(|(_, d)| d.len() >= 2)
        .map(|(_, d)| d.iter().map(|x| x.score).collect())
        .collect();
    if cells.len() < 2 {
        return Err(ConsistencyError::DegenerateGroups);
    }
    let sizes: Vec<usize> = cells.iter().map(Vec::len).collect();
    let mut values: Vec<f64> = cells.concat();
    let observed = pooled_within_variance(&values, &sizes);
    let mut rng = stream(seed, "permutation");
    let mut at_or_below = 0usize;
    for _ in 0..n_perm {
        values.shuffle(&mut rng);
        if pooled_within_variance(&values, &sizes) <= observed {
            at_or_below += 1;
        }
    }
    Ok(PermutationResult {
        statistic: observed,
        p_value: (1 + at_or_below) as f64 / (1 + n_perm) as f64,
        n_perm,
        groups: cells.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitHalfResult {
    pub rho: f64,
    pub cells: usize,
}

/// Random equal split of each cell's draws; Pearson between half-means across cells.
/// With an odd draw count the leftover draw is unused.
pub fn split_half_reliability(
    panel: &RepeatedQueryPanel,
    seed: u64,
) -> Result<SplitHalfResult, ConsistencyError> {
    let mut first = Vec::new();
    let mut second = Vec::new();
    for ((stock, date), draws) in panel.cells() {
        if draws.len() < 2 {
            continue;
        }
        // Sorting by value first makes the split independent of draw labels.
        let mut scores: Vec<f64> = draws.iter().map(|d| d.score).collect();
        scores.sort_by(f64::total_cmp);
        scores.shuffle(&mut stream(seed, &format!("split-half/{stock}/{date}")));
        let half = scores.len() / 2;
        first.push(scores[..half].iter().sum::<f64>() / half as f64);
        second.push(scores[half..2 * half].iter().sum::<f64>() / half as f64);
    }
    if first.len() < 2 {
        return Err(ConsistencyError::NoEligibleGroups);
    }
    Ok(SplitHalfResult {
        rho: pearson(&first, &second)?,
        cells: first.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankStabilityResult {
    pub rho: f64,
    /// Date-repetition pairs that entered the average.
    pub evaluations: usize,
    pub repetitions: usize,
}

/// Per date, two draws per stock ordered by draw index; Spearman across stocks,
/// averaged over dates and repetitions.
pub fn rank_stability(
    panel: &RepeatedQueryPanel,
    repetitions: usize,
    seed: u64,
) -> Result<RankStabilityResult, ConsistencyError> {
    let mut by_date: BTreeMap<NaiveDate, Vec<&[super::Draw]>> = BTreeMap::new();
    for ((_, date), draws) in panel.cells() {
        if draws.len() >= 2 {
            by_date.entry(*date).or_default().push(draws);
        }
    }
    let mut sum = 0.0;
    let mut evaluations = 0usize;
    for rep in 0..repetitions {
        for (date, stocks) in &by_date {
            if stocks.len() < 3 {
                continue;
            }
            let mut rng = stream(seed, &format!("rank-stability/{rep}/{date}"));
            let mut x = Vec::with_capacity(stocks.len());
            let mut y = Vec::with_capacity(stocks.len());
            for draws in stocks {
                let mut pick = index::sample(&mut rng, draws.len(), 2).into_vec();
                pick.sort_unstable();
                x.push(draws[pick[0]].score);
                y.push(draws[pick[1]].score);
            }
            match spearman(&x, &y) {
                Ok(rho) => {
                    sum += rho;
                    evaluations += 1;
                }
                Err(ConsistencyError::ZeroVariance) => {}
                Err(e) => return Err(e),
            }
        }
    }
    if evaluations == 0 {
        return Err(ConsistencyError::InsufficientCrossSection);
    }
    Ok(RankStabilityResult {
        rho: sum / evaluations as f64,
        evaluations,
        repetitions,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlignmentResult {
    pub rho: f64,
    pub overlap: usize,
}

/// Spearman between per-cell repeated means and single-query production scores.
pub fn production_alignment(
    repeated_means: &BTreeMap<(String, NaiveDate), f64>,
    production: &BTreeMap<(String, NaiveDate), f64>,
) -> Result<AlignmentResult, ConsistencyError> {
    let (x, y): (Vec<f64>, Vec<f64>) = repeated_means
        .iter()
        .filter_map(|(k, m)| production.get(k).map(|p| (*m, *p)))
        .unzip();
    if x.len() < 3 {
        return Err(ConsistencyError::InsufficientOverlap(x.len()));
    }
    Ok(AlignmentResult {
        rho: spearman(&x, &y)?,
        overlap: x.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn day(i: u64) -> NaiveDate {
        NaiveDate::from_ymd_opt(2025, 4, 1).unwrap() + chrono::Days::new(i)
    }

    fn panel_from(
        f: impl Fn(usize, usize, usize) -> f64,
        stocks: usize,
        dates: usize,
        draws: usize,
    ) -> RepeatedQueryPanel {
        let mut p = RepeatedQueryPanel::default();
        for s in 0..stocks {
            for d in 0..dates {
                for k in 0..draws {
                    p.insert(&format!("S{s:02}"), day(d as u64), k as u32, f(s, d, k))
                        .unwrap();
                }
            }
        }
        p
    }

    #[test]
    fn constant_cells_hit_minimum_p() {
        let p = panel_from(|s, d, _| (s * 3 + d) as f64, 4, 3, 5);
        let r = permutation_variance_test(&p, 99, 1).unwrap();
        assert_eq!(r.p_value, 0.01);
    }

    #[test]
    fn permutation_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = Normal::new(0.0, 1.0).unwrap();
        let vals: Vec<f64> = (0..60).map(|_| n.sample(&mut rng)).collect();
        let p = panel_from(|s, d, k| vals[(s * 2 + d) * 5 + k], 6, 2, 5);
        let a = permutation_variance_test(&p, 200, 9).unwrap();
        let b = permutation_variance_test(&p, 200, 9).unwrap();
        assert_eq!(a, b);
        assert!(a.p_value >= 1.0 / 201.0 && a.p_value <= 1.0);
    }

    #[test]
    fn degenerate_groups() {
        let p = panel_from(|_, _, _| 1.0, 1, 1, 3);
        assert!(matches!(
            permutation_variance_test(&p, 10, 0),
            Err(ConsistencyError::DegenerateGroups)
        ));
    }

    #[test]
    fn noiseless_split_half_is_one() {
        let p = panel_from(|s, d, _| (s * 7 + d * 3) as f64 * 0.1, 5, 4, 6);
        assert!((split_half_reliability(&p, 3).unwrap().rho - 1.0).abs() < 1e-12);
    }

    #[test]
    fn split_half_ignores_draw_labels() {
        let p = panel_from(|s, d, k| ((s * 31 + d * 17 + k * 13) % 11) as f64, 5, 3, 6);
        let mut relabeled = RepeatedQueryPanel::default();
        for ((stock, date), draws) in p.cells() {
            for d in draws {
                relabeled
                    .insert(stock, *date, 100 - d.draw_index, d.score)
                    .unwrap();
            }
        }
        assert_eq!(
            split_half_reliability(&p, 4).unwrap(),
            split_half_reliability(&relabeled, 4).unwrap()
        );
    }

    #[test]
    fn rank_stability_extremes() {
        let det = panel_from(|s, d, _| (s * 5 + d) as f64, 6, 3, 4);
        assert!((rank_stability(&det, 5, 1).unwrap().rho - 1.0).abs() < 1e-12);
        // Second draw mirrors the first.
        let mirror = panel_from(
            |s, d, k| {
                if k == 0 {
                    (s + d) as f64
                } else {
                    -((s + d) as f64)
                }
            },
            6,
            3,
            2,
        );
        assert!((rank_stability(&mirror, 5, 1).unwrap().rho + 1.0).abs() < 1e-12);
        let thin = panel_from(|s, _, _| s as f64, 2, 3, 4);
        assert!(matches!(
            rank_stability(&thin, 5, 1),
            Err(ConsistencyError::InsufficientCrossSection)
        ));
    }

    #[test]
    fn alignment_identity_and_overlap() {
        let p = panel_from(|s, d, k| (s * 2 + d) as f64 + k as f64 * 0.01, 5, 2, 3);
        let means = p.cell_means();
        assert_eq!(production_alignment(&means, &means).unwrap().rho, 1.0);
        let few: BTreeMap<_, _> = means.iter().take(2).map(|(k, v)| (k.clone(), *v)).collect();
        assert!(matches!(
            production_alignment(&means, &few),
            Err(ConsistencyError::InsufficientOverlap(2))
        ));
    }
}
