//! Listener screening: flag outlier ("NG") scores and exclude listeners
//! whose NG rate exceeds a threshold.
//!
//! A raw score x on a pair is an NG-Score when no other score on the same
//! pair falls inside the closed interval [x - tau, x + tau]. A listener is
//! excluded when their NG rate, over records that were eligible for
//! flagging, is strictly greater than the rate threshold.

use std::collections::BTreeMap;

use serde::{Serialize, Serializer};

use crate::data::Dataset;
use crate::error::{Error, Result};

/// Screening parameters: interval half-width `tau` (score-scale units) and
/// the exclusion `rate_threshold` in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct ScreeningConfig {
    pub tau: f64,
    pub rate_threshold: f64,
}

impl ScreeningConfig {
    pub fn new(tau: f64, rate_threshold: f64) -> Result<Self> {
        if !tau.is_finite() || tau < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "screening tau must be >= 0, got {tau}"
            )));
        }
        if !(0.0..=1.0).contains(&rate_threshold) {
            return Err(Error::InvalidConfig(format!(
                "screening rate threshold must be in [0, 1], got {rate_threshold}"
            )));
        }
        Ok(ScreeningConfig {
            tau,
            rate_threshold,
        })
    }
}

/// Flag map key: (pair_id, listener_id).
pub type FlagKey = (String, String);

fn serialize_flags<S: Serializer>(
    flags: &BTreeMap<FlagKey, bool>,
    ser: S,
) -> std::result::Result<S::Ok, S::Error> {
    #[derive(Serialize)]
    struct Row<'a> {
        pair_id: &'a str,
        listener_id: &'a str,
        ng: bool,
    }
    ser.collect_seq(flags.iter().map(|((pair_id, listener_id), &ng)| Row {
        pair_id,
        listener_id,
        ng,
    }))
}

/// Outcome of screening one dataset.
#[derive(Debug, Clone, Serialize)]
pub struct ScreeningReport {
    /// One entry per flag-eligible record (records on pairs with >= 2 scores).
    #[serde(serialize_with = "serialize_flags")]
    pub ng_flags: BTreeMap<FlagKey, bool>,
    pub listener_ng_rate: BTreeMap<String, f64>,
    pub excluded_listeners: Vec<String>,
    pub records_before: usize,
    pub records_after: usize,
}

/// Flag NG scores. Pairs with fewer than two records emit no entries:
/// "no other score" would be vacuously true there and would penalize
/// listeners for data sparsity rather than inconsistency.
pub fn flag_ng_scores(dataset: &Dataset, tau: f64) -> Result<BTreeMap<FlagKey, bool>> {
    if !tau.is_finite() || tau < 0.0 {
        return Err(Error::InvalidConfig(format!(
            "screening tau must be >= 0, got {tau}"
        )));
    }
    let mut by_pair: BTreeMap<&str, Vec<(&str, u8)>> = BTreeMap::new();
    for rec in dataset.records() {
        by_pair
            .entry(&rec.pair_id)
            .or_default()
            .push((&rec.listener_id, rec.score));
    }

    let mut flags = BTreeMap::new();
    for (pair_id, group) in by_pair {
        if group.len() < 2 {
            continue;
        }
        for (i, &(listener_id, score)) in group.iter().enumerate() {
            let x = score as f64;
            let has_peer = group
                .iter()
                .enumerate()
                .any(|(j, &(_, other))| j != i && (other as f64 - x).abs() <= tau);
            flags.insert((pair_id.to_owned(), listener_id.to_owned()), !has_peer);
        }
    }
    Ok(flags)
}

/// NG rate per listener: flagged records over flag-eligible records.
/// Listeners with no eligible records get rate 0.
pub fn listener_ng_rates(
    flags: &BTreeMap<FlagKey, bool>,
    dataset: &Dataset,
) -> BTreeMap<String, f64> {
    let mut eligible: BTreeMap<&str, usize> = BTreeMap::new();
    let mut flagged: BTreeMap<&str, usize> = BTreeMap::new();
    for ((_, listener_id), &ng) in flags {
        *eligible.entry(listener_id).or_insert(0) += 1;
        if ng {
            *flagged.entry(listener_id).or_insert(0) += 1;
        }
    }
    dataset
        .listener_ids()
        .into_iter()
        .map(|l| {
            let rate = match eligible.get(l.as_str()) {
                Some(&n) if n > 0 => {
                    *flagged.get(l.as_str()).unwrap_or(&0) as f64 / n as f64
                }
                _ => 0.0,
            };
            (l, rate)
        })
        .collect()
}

/// Run the full screening pass: flag, rate, and exclude (strictly above
/// the threshold). The returned dataset keeps the surviving records in
/// their original order.
pub fn screen(dataset: &Dataset, config: &ScreeningConfig) -> Result<(Dataset, ScreeningReport)> {
    let flags = flag_ng_scores(dataset, config.tau)?;
    let rates = listener_ng_rates(&flags, dataset);
    let excluded: Vec<String> = rates
        .iter()
        .filter(|(_, &rate)| rate > config.rate_threshold)
        .map(|(l, _)| l.clone())
        .collect();
    let kept = dataset.filter_listeners(|l| !excluded.iter().any(|e| e == l));
    let report = ScreeningReport {
        ng_flags: flags,
        listener_ng_rate: rates,
        excluded_listeners: excluded,
        records_before: dataset.len(),
        records_after: kept.len(),
    };
    Ok((kept, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ScoreRecord;

    fn pair_dataset(scores: &[(&str, &str, u8)]) -> Dataset {
        let records = scores
            .iter()
            .map(|&(pair, listener, score)| ScoreRecord {
                pair_id: pair.to_owned(),
                text_id: format!("t-{pair}"),
                audio_id: format!("a-{pair}"),
                listener_id: listener.to_owned(),
                score,
            })
            .collect();
        Dataset::new(records, "screen-test").unwrap()
    }

    #[test]
    fn worked_example_flags_only_the_zero() {
        let ds = pair_dataset(&[("p1", "l1", 0), ("p1", "l2", 8), ("p1", "l3", 9), ("p1", "l4", 10)]);
        let flags = flag_ng_scores(&ds, 5.0).unwrap();
        assert_eq!(flags[&("p1".into(), "l1".into())], true);
        assert_eq!(flags[&("p1".into(), "l2".into())], false);
        assert_eq!(flags[&("p1".into(), "l3".into())], false);
        assert_eq!(flags[&("p1".into(), "l4".into())], false);
    }

    #[test]
    fn tau_ten_spans_the_scale() {
        let ds = pair_dataset(&[("p1", "l1", 0), ("p1", "l2", 8), ("p1", "l3", 9), ("p1", "l4", 10)]);
        let flags = flag_ng_scores(&ds, 10.0).unwrap();
        assert!(flags.values().all(|&ng| !ng));
    }

    #[test]
    fn singleton_pair_emits_no_flag() {
        let ds = pair_dataset(&[("p1", "l1", 5)]);
        assert!(flag_ng_scores(&ds, 5.0).unwrap().is_empty());
    }

    #[test]
    fn equal_scores_are_peers_of_each_other() {
        let ds = pair_dataset(&[("p1", "l1", 4), ("p1", "l2", 4)]);
        let flags = flag_ng_scores(&ds, 0.0).unwrap();
        assert!(flags.values().all(|&ng| !ng));
    }

    #[test]
    fn rates_count_only_eligible_records() {
        // l1: one NG among five eligible records -> 0.2.
        let mut scores = vec![
            ("p1", "l1", 0),
            ("p1", "l2", 8),
            ("p1", "l3", 9),
        ];
        for p in ["p2", "p3", "p4", "p5"] {
            scores.push((p, "l1", 5));
            scores.push((p, "l2", 5));
        }
        // A singleton pair must not enter the denominator.
        scores.push(("p6", "l1", 10));
        let ds = pair_dataset(&scores);
        let flags = flag_ng_scores(&ds, 5.0).unwrap();
        let rates = listener_ng_rates(&flags, &ds);
        assert!((rates["l1"] - 0.2).abs() < 1e-12);
        assert_eq!(rates["l2"], 0.0);
    }

    #[test]
    fn listener_with_no_eligible_records_gets_zero() {
        let ds = pair_dataset(&[("p1", "l1", 3)]);
        let flags = flag_ng_scores(&ds, 5.0).unwrap();
        let rates = listener_ng_rates(&flags, &ds);
        assert_eq!(rates["l1"], 0.0);
    }

    #[test]
    fn all_flagged_listener_has_rate_one() {
        let ds = pair_dataset(&[
            ("p1", "l1", 0),
            ("p1", "l2", 10),
            ("p2", "l1", 10),
            ("p2", "l2", 0),
        ]);
        let flags = flag_ng_scores(&ds, 5.0).unwrap();
        let rates = listener_ng_rates(&flags, &ds);
        assert_eq!(rates["l1"], 1.0);
        assert_eq!(rates["l2"], 1.0);
    }

    #[test]
    fn exclusion_is_strict_at_the_boundary() {
        // l1 rate: 1 NG over 5 eligible = 0.2 exactly -> retained at r = 0.2.
        let mut scores = vec![("p1", "l1", 0), ("p1", "l2", 8), ("p1", "l3", 9)];
        for p in ["p2", "p3", "p4", "p5"] {
            scores.push((p, "l1", 5));
            scores.push((p, "l2", 5));
        }
        let ds = pair_dataset(&scores);
        let cfg = ScreeningConfig::new(5.0, 0.2).unwrap();
        let (kept, report) = screen(&ds, &cfg).unwrap();
        assert!(report.excluded_listeners.is_empty());
        assert_eq!(kept.records(), ds.records());

        // Push l1 over the threshold: 2 NG over 6 eligible = 1/3 > 0.2.
        let mut scores2 = scores.clone();
        scores2.push(("p6", "l1", 0));
        scores2.push(("p6", "l2", 8));
        scores2.push(("p6", "l3", 9));
        let ds2 = pair_dataset(&scores2);
        let (kept2, report2) = screen(&ds2, &cfg).unwrap();
        assert_eq!(report2.excluded_listeners, vec!["l1".to_owned()]);
        assert!(kept2.records().iter().all(|r| r.listener_id != "l1"));
        assert_eq!(
            report2.records_after,
            report2.records_before - ds2.records().iter().filter(|r| r.listener_id == "l1").count()
        );
    }

    #[test]
    fn screen_preserves_clean_dataset_record_for_record() {
        let ds = pair_dataset(&[("p1", "l1", 5), ("p1", "l2", 6), ("p2", "l1", 4), ("p2", "l2", 4)]);
        let cfg = ScreeningConfig::new(5.0, 0.2).unwrap();
        let (kept, report) = screen(&ds, &cfg).unwrap();
        assert_eq!(kept.records(), ds.records());
        assert_eq!(report.records_before, report.records_after);
    }

    #[test]
    fn invalid_config_is_rejected() {
        assert!(ScreeningConfig::new(-1.0, 0.2).is_err());
        assert!(ScreeningConfig::new(5.0, 1.5).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_dataset() -> impl Strategy<Value = Dataset> {
            proptest::collection::vec((0u8..6, 0u8..5, 0u8..=10), 1..80).prop_map(|raw| {
                let mut seen = std::collections::BTreeSet::new();
                let records: Vec<ScoreRecord> = raw
                    .into_iter()
                    .filter(|(p, l, _)| seen.insert((*p, *l)))
                    .map(|(p, l, s)| ScoreRecord {
                        pair_id: format!("p{p}"),
                        text_id: format!("t{p}"),
                        audio_id: format!("a{p}"),
                        listener_id: format!("l{l}"),
                        score: s,
                    })
                    .collect();
                Dataset::new(records, "prop").unwrap()
            })
        }

        proptest! {
            // Larger tau can only un-flag: every NG under tau2 >= tau1 is NG under tau1.
            #[test]
            fn monotone_in_tau(ds in arb_dataset(), tau1 in 0.0f64..10.0, extra in 0.0f64..10.0) {
                let tau2 = tau1 + extra;
                let f1 = flag_ng_scores(&ds, tau1).unwrap();
                let f2 = flag_ng_scores(&ds, tau2).unwrap();
                for (key, &ng2) in &f2 {
                    if ng2 {
                        prop_assert!(f1[key], "flagged at tau={} but not at tau={}", tau2, tau1);
                    }
                }
            }

            #[test]
            fn survivors_keep_all_their_records(ds in arb_dataset(), tau in 0.0f64..10.0, r in 0.0f64..1.0) {
                let cfg = ScreeningConfig::new(tau, r).unwrap();
                let (kept, report) = screen(&ds, &cfg).unwrap();
                for rec in ds.records() {
                    let excluded = report.excluded_listeners.contains(&rec.listener_id);
                    let present = kept.records().contains(rec);
                    prop_assert_eq!(present, !excluded);
                }
            }
        }
    }
}
