//! Split search for the three node-impurity criteria.
//!
//! Every search scans the node's rows sorted by one feature and evaluates
//! the boundary between each pair of consecutive distinct values. Features
//! are visited in ascending index order and thresholds in ascending order;
//! a candidate replaces the incumbent only on a strictly larger score, so
//! ties resolve to the lowest feature index and then the lowest threshold.

use crate::data::FeatureMatrix;

/// Per-row response information in the form the criteria consume.
pub(crate) enum Response<'a> {
    Continuous(&'a [f64]),
    Classes { labels: Vec<u32>, n_classes: usize },
    Survival { time: &'a [f64], event: &'a [bool] },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Candidate {
    pub feature: usize,
    pub threshold: f64,
    pub score: f64,
}

/// Reusable scratch space so that split search does not allocate per node.
#[derive(Default)]
pub(crate) struct Scratch {
    sorted: Vec<(f64, u32)>,
    counts_left: Vec<f64>,
    counts_total: Vec<f64>,
    event_times: Vec<f64>,
    ranks: Vec<u32>,
    at_risk: Vec<f64>,
    deaths: Vec<f64>,
    risk_left: Vec<f64>,
    deaths_left: Vec<f64>,
}

impl Response<'_> {
    /// True when no split can improve the node (constant response, single
    /// class, or no events for survival).
    pub fn is_pure(&self, rows: &[u32]) -> bool {
        match self {
            Response::Continuous(y) => {
                let first = y[rows[0] as usize];
                rows.iter().all(|&r| y[r as usize] == first)
            }
            Response::Classes { labels, .. } => {
                let first = labels[rows[0] as usize];
                rows.iter().all(|&r| labels[r as usize] == first)
            }
            Response::Survival { event, .. } => !rows.iter().any(|&r| event[r as usize]),
        }
    }

    /// Summary stored in a leaf holding `rows`.
    pub fn leaf_value(&self, rows: &[u32]) -> f64 {
        let n = rows.len() as f64;
        match self {
            Response::Continuous(y) => rows.iter().map(|&r| y[r as usize]).sum::<f64>() / n,
            Response::Classes { labels, n_classes } => {
                if *n_classes == 2 {
                    // Fraction of votes for the positive class (index 1).
                    rows.iter().filter(|&&r| labels[r as usize] == 1).count() as f64 / n
                } else {
                    let mut counts = vec![0usize; *n_classes];
                    for &r in rows {
                        counts[labels[r as usize] as usize] += 1;
                    }
                    let mut best = 0;
                    for (k, &c) in counts.iter().enumerate() {
                        if c > counts[best] {
                            best = k;
                        }
                    }
                    best as f64
                }
            }
            Response::Survival { time, event } => {
                // Event rate: observed events per unit of follow-up time.
                let exposure: f64 = rows.iter().map(|&r| time[r as usize]).sum();
                let events = rows.iter().filter(|&&r| event[r as usize]).count() as f64;
                events / exposure
            }
        }
    }

    pub fn best_split(
        &self,
        data: &FeatureMatrix,
        rows: &[u32],
        features: &[usize],
        min_leaf: usize,
        scratch: &mut Scratch,
    ) -> Option<Candidate> {
        let n = rows.len();
        if n < 2 * min_leaf || n < 2 {
            return None;
        }
        if let Response::Survival { time, event } = self {
            prepare_survival(time, event, rows, scratch);
        }
        let mut best: Option<Candidate> = None;
        for &feature in features {
            scratch.sorted.clear();
            scratch
                .sorted
                .extend(rows.iter().enumerate().map(|(k, &r)| (data.get(r as usize, feature), k as u32)));
            scratch.sorted.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            if scratch.sorted[0].0 == scratch.sorted[n - 1].0 {
                continue;
            }
            let found = match self {
                Response::Continuous(y) => scan_variance(y, rows, min_leaf, scratch),
                Response::Classes { labels, n_classes } => {
                    scan_gini(labels, *n_classes, rows, min_leaf, scratch)
                }
                Response::Survival { event, .. } => scan_logrank(event, rows, min_leaf, scratch),
            };
            if let Some((threshold, score)) = found {
                if best.is_none_or(|b| score > b.score) {
                    best = Some(Candidate {
                        feature,
                        threshold,
                        score,
                    });
                }
            }
        }
        best
    }
}

/// Midpoint between two consecutive distinct values, kept strictly below
/// the upper value so that `x <= threshold` separates them.
#[inline]
fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    if mid >= hi {
        lo
    } else {
        mid
    }
}

/// Accepts a score only when it is a real improvement over no split.
#[inline]
fn improves(score: f64, scale: f64) -> bool {
    score > 1e-12 * scale.max(1.0)
}

fn scan_variance(y: &[f64], rows: &[u32], min_leaf: usize, scratch: &Scratch) -> Option<(f64, f64)> {
    let sorted = &scratch.sorted;
    let n = sorted.len();
    let value = |k: usize| y[rows[sorted[k].1 as usize] as usize];
    let total: f64 = (0..n).map(value).sum();
    let total_sq: f64 = (0..n).map(|k| value(k) * value(k)).sum();
    let parent = total * total / n as f64;
    let sse = total_sq - parent;

    let mut best: Option<(f64, f64)> = None;
    let mut left = 0.0;
    for k in 1..n {
        left += value(k - 1);
        if k < min_leaf || n - k < min_leaf {
            continue;
        }
        let (lo, hi) = (sorted[k - 1].0, sorted[k].0);
        if lo == hi {
            continue;
        }
        let right = total - left;
        let gain = left * left / k as f64 + right * right / (n - k) as f64 - parent;
        if improves(gain, sse) && best.is_none_or(|(_, g)| gain > g) {
            best = Some((midpoint(lo, hi), gain));
        }
    }
    best
}

fn scan_gini(
    labels: &[u32],
    n_classes: usize,
    rows: &[u32],
    min_leaf: usize,
    scratch: &mut Scratch,
) -> Option<(f64, f64)> {
    let n = scratch.sorted.len();
    scratch.counts_total.clear();
    scratch.counts_total.resize(n_classes, 0.0);
    scratch.counts_left.clear();
    scratch.counts_left.resize(n_classes, 0.0);
    for &(_, k) in &scratch.sorted {
        scratch.counts_total[labels[rows[k as usize] as usize] as usize] += 1.0;
    }
    let parent = scratch.counts_total.iter().map(|c| c * c).sum::<f64>() / n as f64;

    let mut best: Option<(f64, f64)> = None;
    // Running sums of squared counts on each side, updated in O(1) per row.
    let mut sq_left = 0.0;
    let mut sq_right: f64 = scratch.counts_total.iter().map(|c| c * c).sum();
    for k in 1..n {
        let class = labels[rows[scratch.sorted[k - 1].1 as usize] as usize] as usize;
        let cl = scratch.counts_left[class];
        let cr = scratch.counts_total[class] - cl;
        sq_left += 2.0 * cl + 1.0;
        sq_right -= 2.0 * cr - 1.0;
        scratch.counts_left[class] = cl + 1.0;
        if k < min_leaf || n - k < min_leaf {
            continue;
        }
        let (lo, hi) = (scratch.sorted[k - 1].0, scratch.sorted[k].0);
        if lo == hi {
            continue;
        }
        let gain = sq_left / k as f64 + sq_right / (n - k) as f64 - parent;
        if improves(gain, n as f64) && best.is_none_or(|(_, g)| gain > g) {
            best = Some((midpoint(lo, hi), gain));
        }
    }
    best
}

/// Builds the node's event-time grid and, per node row, the number of grid
/// times at which that row is still at risk.
fn prepare_survival(time: &[f64], event: &[bool], rows: &[u32], scratch: &mut Scratch) {
    scratch.event_times.clear();
    scratch
        .event_times
        .extend(rows.iter().filter(|&&r| event[r as usize]).map(|&r| time[r as usize]));
    scratch.event_times.sort_unstable_by(f64::total_cmp);
    scratch.event_times.dedup();
    let grid = &scratch.event_times;
    let t = grid.len();

    scratch.ranks.clear();
    scratch.at_risk.clear();
    scratch.at_risk.resize(t, 0.0);
    scratch.deaths.clear();
    scratch.deaths.resize(t, 0.0);
    let mut at_risk_counts = vec![0.0; t + 1];
    for &r in rows {
        let y = time[r as usize];
        let rank = grid.partition_point(|&g| g <= y);
        scratch.ranks.push(rank as u32);
        at_risk_counts[rank] += 1.0;
        if event[r as usize] {
            scratch.deaths[rank - 1] += 1.0;
        }
    }
    let mut running = 0.0;
    for k in (0..t).rev() {
        running += at_risk_counts[k + 1];
        scratch.at_risk[k] = running;
    }
}

fn scan_logrank(event: &[bool], rows: &[u32], min_leaf: usize, scratch: &mut Scratch) -> Option<(f64, f64)> {
    let n = scratch.sorted.len();
    let t = scratch.event_times.len();
    scratch.risk_left.clear();
    scratch.risk_left.resize(t + 1, 0.0);
    scratch.deaths_left.clear();
    scratch.deaths_left.resize(t, 0.0);

    let mut best: Option<(f64, f64)> = None;
    for k in 1..n {
        let local = scratch.sorted[k - 1].1 as usize;
        let rank = scratch.ranks[local] as usize;
        scratch.risk_left[rank] += 1.0;
        if event[rows[local] as usize] {
            scratch.deaths_left[rank - 1] += 1.0;
        }
        if k < min_leaf || n - k < min_leaf {
            continue;
        }
        let (lo, hi) = (scratch.sorted[k - 1].0, scratch.sorted[k].0);
        if lo == hi {
            continue;
        }
        let mut observed_minus_expected = 0.0;
        let mut variance = 0.0;
        let mut left_at_risk = 0.0;
        for j in (0..t).rev() {
            left_at_risk += scratch.risk_left[j + 1];
            let total = scratch.at_risk[j];
            let deaths = scratch.deaths[j];
            let share = left_at_risk / total;
            observed_minus_expected += scratch.deaths_left[j] - deaths * share;
            if total > 1.0 {
                variance += share * (1.0 - share) * deaths * (total - deaths) / (total - 1.0);
            }
        }
        if variance <= 0.0 {
            continue;
        }
        let stat = observed_minus_expected * observed_minus_expected / variance;
        if improves(stat, 1.0) && best.is_none_or(|(_, s)| stat > s) {
            best = Some((midpoint(lo, hi), stat));
        }
    }
    best
}
