//! Channel-to-column assignment over a score matrix.
//!
//! Rows are channels and columns are candidate dataset columns, both already
//! in name order; `None` marks an ineligible pair. Assignments are injective.
//! Among assignments with the same total (within [`EPS`]) the one with the
//! lexicographically greater per-channel score vector wins, then the one
//! choosing lexicographically smaller columns.

use std::cmp::Ordering;
use std::collections::HashMap;

pub const EPS: f64 = 1e-9;
pub const EXHAUSTIVE_MAX_CHANNELS: usize = 6;
pub const EXHAUSTIVE_MAX_COLUMNS: usize = 10;

pub type ScoreMatrix = Vec<Vec<Option<f64>>>;

/// Picks the optimal assignment for small instances, greedy otherwise.
pub fn assign(scores: &ScoreMatrix, columns: usize) -> Vec<Option<usize>> {
    if scores.len() <= EXHAUSTIVE_MAX_CHANNELS && columns <= EXHAUSTIVE_MAX_COLUMNS {
        optimal(scores, columns)
    } else {
        greedy(scores, columns)
    }
}

#[derive(Debug, Clone)]
struct Suffix {
    total: f64,
    /// Score per channel; -1 for unassigned so a zero-score pick beats a drop.
    vector: Vec<f64>,
    picks: Vec<Option<usize>>,
}

fn cmp_f(a: f64, b: f64) -> Ordering {
    if (a - b).abs() <= EPS {
        Ordering::Equal
    } else if a < b {
        Ordering::Less
    } else {
        Ordering::Greater
    }
}

/// `Greater` means `a` is preferred.
fn prefer(a: &Suffix, b: &Suffix) -> Ordering {
    cmp_f(a.total, b.total)
        .then_with(|| {
            a.vector
                .iter()
                .zip(&b.vector)
                .map(|(x, y)| cmp_f(*x, *y))
                .find(|o| o.is_ne())
                .unwrap_or(Ordering::Equal)
        })
        .then_with(|| {
            // Smaller column index preferred; unassigned sorts last.
            let key = |p: &Option<usize>| p.unwrap_or(usize::MAX);
            a.picks
                .iter()
                .zip(&b.picks)
                .map(|(x, y)| key(y).cmp(&key(x)))
                .find(|o| o.is_ne())
                .unwrap_or(Ordering::Equal)
        })
}

/// Exact optimum by dynamic programming over (channel, used-column set).
pub fn optimal(scores: &ScoreMatrix, columns: usize) -> Vec<Option<usize>> {
    assert!(columns < 64, "too many columns for exact assignment");
    let mut memo: HashMap<(usize, u64), Suffix> = HashMap::new();
    best(scores, columns, 0, 0, &mut memo).picks
}

fn best(
    scores: &ScoreMatrix,
    columns: usize,
    i: usize,
    used: u64,
    memo: &mut HashMap<(usize, u64), Suffix>,
) -> Suffix {
    if i == scores.len() {
        return Suffix {
            total: 0.0,
            vector: Vec::new(),
            picks: Vec::new(),
        };
    }
    if let Some(s) = memo.get(&(i, used)) {
        return s.clone();
    }
    let extend = |rest: Suffix, score: Option<f64>, pick: Option<usize>| {
        let mut vector = Vec::with_capacity(rest.vector.len() + 1);
        vector.push(score.unwrap_or(-1.0));
        vector.extend(rest.vector);
        let mut picks = Vec::with_capacity(rest.picks.len() + 1);
        picks.push(pick);
        picks.extend(rest.picks);
        Suffix {
            total: rest.total + score.unwrap_or(0.0),
            vector,
            picks,
        }
    };
    let mut winner = extend(best(scores, columns, i + 1, used, memo), None, None);
    for c in 0..columns {
        if used & (1 << c) != 0 {
            continue;
        }
        if let Some(s) = scores[i][c] {
            let cand = extend(best(scores, columns, i + 1, used | (1 << c), memo), Some(s), Some(c));
            if prefer(&cand, &winner) == Ordering::Greater {
                winner = cand;
            }
        }
    }
    memo.insert((i, used), winner.clone());
    winner
}

/// Repeatedly takes the highest-scoring free pair; ties go to the earlier
/// channel, then the earlier column.
pub fn greedy(scores: &ScoreMatrix, columns: usize) -> Vec<Option<usize>> {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (i, row) in scores.iter().enumerate() {
        for (c, s) in row.iter().enumerate().take(columns) {
            if let Some(s) = s {
                pairs.push((*s, i, c));
            }
        }
    }
    pairs.sort_by(|a, b| {
        cmp_f(b.0, a.0)
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });
    let mut picks = vec![None; scores.len()];
    let mut taken = vec![false; columns];
    for (_, i, c) in pairs {
        if picks[i].is_none() && !taken[c] {
            picks[i] = Some(c);
            taken[c] = true;
        }
    }
    picks
}

pub fn total(scores: &ScoreMatrix, picks: &[Option<usize>]) -> f64 {
    picks
        .iter()
        .enumerate()
        .filter_map(|(i, p)| p.and_then(|c| scores[i][c]))
        .sum()
}
