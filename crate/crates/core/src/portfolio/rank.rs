use std::cmp::Ordering;
use std::collections::BTreeMap;

use super::{PortfolioError, PortfolioWarning};

/// Orders stocks by descending score. Ties go to the larger market cap, then to the
/// lexicographically smaller id, so the order is total.
pub fn rank_universe(
    scores: &BTreeMap<String, f64>,
    caps: &BTreeMap<String, f64>,
) -> Result<Vec<String>, PortfolioError> {
    if scores.is_empty() {
        return Err(PortfolioError::EmptyUniverse);
    }
    let mut rows = Vec::with_capacity(scores.len());
    for (id, &score) in scores {
        if !score.is_finite() {
            return Err(PortfolioError::NonFiniteScore(id.clone()));
        }
        let cap = *caps
            .get(id)
            .ok_or_else(|| PortfolioError::MissingCap(id.clone()))?;
        if !cap.is_finite() {
            return Err(PortfolioError::NonPositiveCap(id.clone()));
        }
        rows.push((id.as_str(), score, cap));
    }
    rows.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(Ordering::Equal)
            .then_with(|| b.2.partial_cmp(&a.2).unwrap_or(Ordering::Equal))
            .then_with(|| a.0.cmp(b.0))
    });
    Ok(rows.into_iter().map(|(id, _, _)| id.to_string()).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub members: Vec<String>,
    pub warning: Option<PortfolioWarning>,
}

fn selection(members: &[String], requested: usize, available: usize) -> Selection {
    Selection {
        members: members.to_vec(),
        warning: (available < requested).then_some(PortfolioWarning::ShortUniverse {
            requested,
            available,
        }),
    }
}

/// The first `min(n, len)` entries.
pub fn select_top_n(ranked: &[String], n: usize) -> Selection {
    let k = n.min(ranked.len());
    selection(&ranked[..k], n, ranked.len())
}

/// The last `min(n, len)` entries.
pub fn select_bottom_n(ranked: &[String], n: usize) -> Selection {
    let k = n.min(ranked.len());
    selection(&ranked[ranked.len() - k..], n, ranked.len())
}

/// Splits the ranking into `g` contiguous slices whose sizes differ by at most one; the
/// remainder goes to the earliest groups.
pub fn rank_groups(ranked: &[String], g: usize) -> Result<Vec<Vec<String>>, PortfolioError> {
    if g == 0 {
        return Err(PortfolioError::InvalidArgument(
            "group count must be at least 1".into(),
        ));
    }
    let base = ranked.len() / g;
    let rem = ranked.len() % g;
    let mut out = Vec::with_capacity(g);
    let mut start = 0;
    for i in 0..g {
        let size = base + usize::from(i < rem);
        out.push(ranked[start..start + size].to_vec());
        start += size;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn map(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn descending_by_score() {
        let r = rank_universe(
            &map(&[("A", 2.0), ("B", 1.0)]),
            &map(&[("A", 1.0), ("B", 1.0)]),
        )
        .unwrap();
        assert_eq!(r, ["A", "B"]);
    }

    #[test]
    fn tie_goes_to_larger_cap() {
        let r = rank_universe(
            &map(&[("A", 1.0), ("B", 1.0)]),
            &map(&[("A", 10.0), ("B", 20.0)]),
        )
        .unwrap();
        assert_eq!(r, ["B", "A"]);
    }

    #[test]
    fn residual_tie_by_id() {
        let r = rank_universe(
            &map(&[("Z", 1.0), ("M", 1.0)]),
            &map(&[("Z", 5.0), ("M", 5.0)]),
        )
        .unwrap();
        assert_eq!(r, ["M", "Z"]);
    }

    #[test]
    fn errors() {
        assert_eq!(
            rank_universe(&BTreeMap::new(), &BTreeMap::new()),
            Err(PortfolioError::EmptyUniverse)
        );
        assert_eq!(
            rank_universe(&map(&[("A", 1.0)]), &BTreeMap::new()),
            Err(PortfolioError::MissingCap("A".into()))
        );
        assert_eq!(
            rank_universe(&map(&[("A", f64::NAN)]), &map(&[("A", 1.0)])),
            Err(PortfolioError::NonFiniteScore("A".into()))
        );
    }

    #[test]
    fn selection_saturates() {
        let ranked: Vec<String> = ["A", "B", "C"].iter().map(|s| s.to_string()).collect();
        assert_eq!(select_top_n(&ranked, 1).members, ["A"]);
        let all = select_top_n(&ranked, 5);
        assert_eq!(all.members, ranked);
        assert!(matches!(
            all.warning,
            Some(PortfolioWarning::ShortUniverse {
                requested: 5,
                available: 3
            })
        ));
        assert_eq!(select_bottom_n(&ranked, 2).members, ["B", "C"]);
    }

    #[test]
    fn group_sizes() {
        let ranked: Vec<String> = (0..1000).map(|i| format!("S{i:04}")).collect();
        let groups = rank_groups(&ranked, 50).unwrap();
        assert_eq!(groups.len(), 50);
        assert!(groups.iter().all(|g| g.len() == 20));
        let seven: Vec<String> = (0..7).map(|i| i.to_string()).collect();
        let sizes: Vec<usize> = rank_groups(&seven, 3)
            .unwrap()
            .iter()
            .map(Vec::len)
            .collect();
        assert_eq!(sizes, [3, 2, 2]);
        assert!(rank_groups(&seven, 0).is_err());
    }

    proptest! {
        #[test]
        fn bottom_of_reversed_is_top(n in 1usize..30, len in 1usize..40) {
            let ranked: Vec<String> = (0..len).map(|i| format!("S{i}")).collect();
            let reversed: Vec<String> = ranked.iter().rev().cloned().collect();
            let a: BTreeSet<_> = select_bottom_n(&reversed, n).members.into_iter().collect();
            let b: BTreeSet<_> = select_top_n(&ranked, n).members.into_iter().collect();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn groups_partition(len in 0usize..300, g in 1usize..60) {
            let ranked: Vec<String> = (0..len).map(|i| format!("S{i}")).collect();
            let groups = rank_groups(&ranked, g).unwrap();
            prop_assert_eq!(groups.len(), g);
            let flat: Vec<String> = groups.iter().flatten().cloned().collect();
            prop_assert_eq!(&flat, &ranked);
            let sizes: Vec<usize> = groups.iter().map(Vec::len).collect();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            prop_assert!(sizes.windows(2).all(|w| w[0] >= w[1]));
        }
    }
}
