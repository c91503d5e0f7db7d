use std::collections::BTreeMap;

use super::{PortfolioError, ReturnMode};

/// `w_i = cap_i / sum(caps)`.
pub fn value_weights(
    members: &[String],
    caps: &BTreeMap<String, f64>,
) -> Result<Vec<(String, f64)>, PortfolioError> {
    if members.is_empty() {
        return Err(PortfolioError::EmptyUniverse);
    }
    let mut raw = Vec::with_capacity(members.len());
    for m in members {
        let cap = *caps
            .get(m)
            .ok_or_else(|| PortfolioError::MissingCap(m.clone()))?;
        if !(cap > 0.0 && cap.is_finite()) {
            return Err(PortfolioError::NonPositiveCap(m.clone()));
        }
        raw.push(cap);
    }
    let total: f64 = raw.iter().sum();
    Ok(members
        .iter()
        .cloned()
        .zip(raw.into_iter().map(|c| c / total))
        .collect())
}

/// Return from one opening auction to the next.
pub fn open_to_open_return(
    open_t: f64,
    open_next: f64,
    mode: ReturnMode,
) -> Result<f64, PortfolioError> {
    if !(open_t > 0.0 && open_next > 0.0) {
        return Err(PortfolioError::NonPositivePrice);
    }
    Ok(match mode {
        ReturnMode::Log => (open_next / open_t).ln(),
        ReturnMode::Simple => open_next / open_t - 1.0,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotReturn {
    pub value: f64,
    /// Members without a return; the rest were renormalized.
    pub dropped: Vec<String>,
}

/// `sum_i w_i r_i`, dropping members without a return and renormalizing the rest.
pub fn snapshot_return<F>(
    members: &[(String, f64)],
    mut stock_return: F,
) -> Result<SnapshotReturn, PortfolioError>
where
    F: FnMut(&str) -> Option<f64>,
{
    let mut dropped = Vec::new();
    let mut acc = 0.0;
    let mut kept_weight = 0.0;
    for (id, w) in members {
        match stock_return(id) {
            Some(r) => {
                acc += w * r;
                kept_weight += w;
            }
            None => dropped.push(id.clone()),
        }
    }
    if dropped.len() == members.len() {
        return Err(PortfolioError::AllMembersMissing);
    }
    let value = if dropped.is_empty() {
        acc
    } else {
        acc / kept_weight
    };
    Ok(SnapshotReturn { value, dropped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn caps(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    fn ids(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn weights_from_caps() {
        let w = value_weights(&ids(&["A", "B"]), &caps(&[("A", 1.0), ("B", 1.0)])).unwrap();
        assert_eq!(w, vec![("A".into(), 0.5), ("B".into(), 0.5)]);
        let w = value_weights(&ids(&["A"]), &caps(&[("A", 7.0)])).unwrap();
        assert_eq!(w[0].1, 1.0);
        let w = value_weights(
            &ids(&["A", "B", "C"]),
            &caps(&[("A", 2.0), ("B", 3.0), ("C", 5.0)]),
        )
        .unwrap();
        let got: Vec<f64> = w.iter().map(|x| x.1).collect();
        assert_eq!(got, [0.2, 0.3, 0.5]);
        assert_eq!(
            value_weights(&ids(&["A"]), &caps(&[("A", 0.0)])),
            Err(PortfolioError::NonPositiveCap("A".into()))
        );
    }

    #[test]
    fn open_to_open() {
        assert_eq!(
            open_to_open_return(100.0, 100.0, ReturnMode::Log).unwrap(),
            0.0
        );
        assert_eq!(
            open_to_open_return(100.0, 100.0, ReturnMode::Simple).unwrap(),
            0.0
        );
        assert!(
            (open_to_open_return(100.0, 200.0, ReturnMode::Log).unwrap() - std::f64::consts::LN_2)
                .abs()
                < 1e-15
        );
        assert_eq!(
            open_to_open_return(0.0, 1.0, ReturnMode::Simple),
            Err(PortfolioError::NonPositivePrice)
        );
    }

    #[test]
    fn log_simple_taylor_bound() {
        // |ln(1+s) - s| <= s^2 for |s| <= 0.1.
        for i in -1000..=1000 {
            let s = i as f64 * 1e-4;
            let p1 = 100.0 * (1.0 + s);
            let log = open_to_open_return(100.0, p1, ReturnMode::Log).unwrap();
            let simple = open_to_open_return(100.0, p1, ReturnMode::Simple).unwrap();
            assert!((log - simple).abs() <= simple * simple + 1e-15, "s={s}");
        }
    }

    #[test]
    fn snapshot_cases() {
        let m = vec![("A".to_string(), 0.5), ("B".to_string(), 0.5)];
        let r = snapshot_return(&m, |s| Some(if s == "A" { 0.01 } else { -0.01 })).unwrap();
        assert_eq!(r.value, 0.0);
        let single = vec![("A".to_string(), 1.0)];
        assert_eq!(
            snapshot_return(&single, |_| Some(0.037)).unwrap().value,
            0.037
        );
        let r = snapshot_return(&m, |s| (s == "A").then_some(0.02)).unwrap();
        assert_eq!(r.value, 0.02);
        assert_eq!(r.dropped, ["B"]);
        assert_eq!(
            snapshot_return(&m, |_| None),
            Err(PortfolioError::AllMembersMissing)
        );
    }

    #[test]
    fn snapshot_matches_dot_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let raw: Vec<f64> = (0..20).map(|_| rng.random_range(0.1..5.0)).collect();
            let total: f64 = raw.iter().sum();
            let members: Vec<(String, f64)> = raw
                .iter()
                .enumerate()
                .map(|(i, c)| (format!("S{i}"), c / total))
                .collect();
            let rets: Vec<f64> = (0..20).map(|_| rng.random_range(-0.05..0.05)).collect();
            let got = snapshot_return(&members, |s| Some(rets[s[1..].parse::<usize>().unwrap()]))
                .unwrap()
                .value;
            let want: f64 = members.iter().zip(&rets).map(|((_, w), r)| w * r).sum();
            assert!((got - want).abs() <= 1e-15);
        }
    }
}
