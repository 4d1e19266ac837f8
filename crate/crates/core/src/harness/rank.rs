use crate::error::{Error, Result};

/// Descriptive rank statistics per contender, in input order.
#[derive(Debug, Clone, PartialEq)]
pub struct RankTable {
    pub labels: Vec<String>,
    /// Mean rank over every (run, step) comparison point.
    pub mean: Vec<f64>,
    /// Population standard deviation of the same ranks.
    pub std: Vec<f64>,
    /// 1-based position after sorting contenders by mean rank; equal means
    /// keep input order.
    pub normalised: Vec<usize>,
}

/// Ranks contenders by test loss at every (run, step); lower loss ranks
/// first and ties share the mean of the positions they span.
///
/// `series` is indexed by contender, run, step. Every contender needs the
/// same number of runs and every series the same length.
pub fn average_rank(labels: &[String], series: &[Vec<Vec<f64>>]) -> Result<RankTable> {
    let c = series.len();
    if c == 0 || labels.len() != c {
        return Err(Error::LengthMismatch {
            what: "contender labels",
            expected: c,
            found: labels.len(),
        });
    }
    let runs = series[0].len();
    let steps = series[0].first().map_or(0, Vec::len);
    for s in series {
        if s.len() != runs {
            return Err(Error::LengthMismatch {
                what: "runs per contender",
                expected: runs,
                found: s.len(),
            });
        }
        if let Some(bad) = s.iter().find(|r| r.len() != steps) {
            return Err(Error::LengthMismatch {
                what: "loss series",
                expected: steps,
                found: bad.len(),
            });
        }
    }
    if runs == 0 || steps == 0 {
        return Err(Error::LengthMismatch {
            what: "comparison points",
            expected: 1,
            found: 0,
        });
    }

    let mut sum = vec![0.0; c];
    let mut sum_sq = vec![0.0; c];
    let mut losses = vec![0.0; c];
    for r in 0..runs {
        for t in 0..steps {
            for (i, s) in series.iter().enumerate() {
                losses[i] = s[r][t];
            }
            for (i, rank) in tied_ranks(&losses).into_iter().enumerate() {
                sum[i] += rank;
                sum_sq[i] += rank * rank;
            }
        }
    }
    let n = (runs * steps) as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let std = sum_sq
        .iter()
        .zip(&mean)
        .map(|(sq, m)| (sq / n - m * m).max(0.0).sqrt())
        .collect();

    let mut order: Vec<usize> = (0..c).collect();
    order.sort_by(|&a, &b| mean[a].total_cmp(&mean[b]));
    let mut normalised = vec![0; c];
    for (position, &i) in order.iter().enumerate() {
        normalised[i] = position + 1;
    }
    Ok(RankTable {
        labels: labels.to_vec(),
        mean,
        std,
        normalised,
    })
}

/// 1-based ranks with ties sharing their mean position.
pub(crate) fn tied_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // Positions start+1 ..= end share their mean.
        let shared = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = shared;
        }
        start = end;
    }
    ranks
}
