//! Welder ranking by number of undesirable patterns; fewest errors ranks
//! first and ties share a rank (competition ranking).

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dataset::{LabeledDataset, UNDESIRABLE};
use crate::error::{Result, WeldError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WelderScore {
    pub rank: usize,
    pub welder_id: String,
    pub undesirable_count: usize,
    pub total_patterns: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ranking {
    /// Sorted by rank, then welder id.
    pub scores: Vec<WelderScore>,
    /// Set when welders contributed different numbers of patterns.
    pub uneven_totals: bool,
}

pub fn score_welders(data: &LabeledDataset) -> Result<Ranking> {
    if data.is_empty() {
        return Err(WeldError::EmptyInput("no labeled patterns to rank".into()));
    }
    data.check_binary()?;
    let mut tally: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for (r, label) in data.iter() {
        let e = tally.entry(r.provenance.welder_id.as_str()).or_default();
        e.1 += 1;
        if label == UNDESIRABLE {
            e.0 += 1;
        }
    }
    let mut scores: Vec<WelderScore> = tally
        .into_iter()
        .map(|(id, (bad, total))| WelderScore {
            rank: 0,
            welder_id: id.to_string(),
            undesirable_count: bad,
            total_patterns: total,
        })
        .collect();
    // ids are already ascending, so a stable sort leaves ties in id order
    scores.sort_by_key(|s| s.undesirable_count);
    for i in 0..scores.len() {
        scores[i].rank = if i > 0 && scores[i].undesirable_count == scores[i - 1].undesirable_count {
            scores[i - 1].rank
        } else {
            i + 1
        };
    }
    let uneven_totals = scores.windows(2).any(|w| w[0].total_patterns != w[1].total_patterns);
    Ok(Ranking { scores, uneven_totals })
}

/// `rank,welder_id,undesirable_count,total_patterns`
pub fn write_ranking_csv<W: Write>(ranking: &Ranking, mut out: W) -> Result<()> {
    writeln!(out, "rank,welder_id,undesirable_count,total_patterns")?;
    for s in &ranking.scores {
        writeln!(out, "{},{},{},{}", s.rank, s.welder_id, s.undesirable_count, s.total_patterns)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{FeatureVector, Provenance};
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn corpus(rows: &[(&str, u8)]) -> LabeledDataset {
        let records = rows
            .iter()
            .enumerate()
            .map(|(i, (w, _))| FeatureVector {
                features: vec![0.0],
                provenance: Provenance {
                    welder_id: w.to_string(),
                    trial: 0,
                    segment_index: i,
                },
            })
            .collect();
        LabeledDataset::new(records, rows.iter().map(|r| r.1).collect()).unwrap()
    }

    fn with_counts(counts: &[(&str, usize, usize)]) -> LabeledDataset {
        let mut rows = Vec::new();
        for &(w, bad, total) in counts {
            rows.extend((0..total).map(|i| (w, u8::from(i >= bad))));
        }
        corpus(&rows)
    }

    #[test]
    fn strict_order() {
        let r = score_welders(&with_counts(&[("B", 5, 10), ("A", 0, 10)])).unwrap();
        assert_eq!(r.scores[0].welder_id, "A");
        assert_eq!((r.scores[0].rank, r.scores[1].rank), (1, 2));
        assert!(!r.uneven_totals);
    }

    #[test]
    fn competition_ties() {
        let r = score_welders(&with_counts(&[("W3", 7, 9), ("W2", 2, 9), ("W1", 2, 9)])).unwrap();
        let got: Vec<(&str, usize)> = r.scores.iter().map(|s| (s.welder_id.as_str(), s.rank)).collect();
        assert_eq!(got, [("W1", 1), ("W2", 1), ("W3", 3)]);
    }

    #[test]
    fn uneven_totals_flagged_and_csv() {
        let r = score_welders(&with_counts(&[("A", 1, 4), ("B", 1, 5)])).unwrap();
        assert!(r.uneven_totals);
        let mut buf = Vec::new();
        write_ranking_csv(&r, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "rank,welder_id,undesirable_count,total_patterns\n1,A,1,4\n1,B,1,5\n"
        );
        assert!(score_welders(&corpus(&[])).is_err());
    }

    fn arb_counts() -> impl Strategy<Value = Vec<(usize, usize)>> {
        prop::collection::vec((1usize..20).prop_flat_map(|t| (0..=t, Just(t))), 1..12)
    }

    proptest! {
        #[test]
        fn ranking_laws(counts in arb_counts(), seed in any::<u64>()) {
            let ids: Vec<String> = (0..counts.len()).map(|i| format!("W{i:02}")).collect();
            let spec: Vec<(&str, usize, usize)> = ids.iter().zip(&counts).map(|(id, &(b, t))| (id.as_str(), b, t)).collect();
            let data = with_counts(&spec);
            let ranking = score_welders(&data).unwrap();

            let total_bad: usize = ranking.scores.iter().map(|s| s.undesirable_count).sum();
            prop_assert_eq!(total_bad, data.labels.iter().filter(|&&l| l == 0).count());
            for a in &ranking.scores {
                for b in &ranking.scores {
                    if a.undesirable_count < b.undesirable_count {
                        prop_assert!(a.rank < b.rank);
                    }
                    if a.undesirable_count == b.undesirable_count {
                        prop_assert_eq!(a.rank, b.rank);
                    }
                }
            }

            let mut idx: Vec<usize> = (0..data.len()).collect();
            idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let shuffled = data.subset(&idx);
            prop_assert_eq!(score_welders(&shuffled).unwrap(), ranking);
        }
    }
}
