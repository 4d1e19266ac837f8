use serde::{Deserialize, Serialize};

use super::LogEntry;

/// Per-step decay applied to credit when rewards are discounted.
pub const DISCOUNT_FACTOR: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CreditKind {
    /// Lowest loss within its step.
    #[default]
    Ibest,
    /// Improved the entity's personal best.
    Pbest,
    /// Improved the global best.
    Gbest,
    /// Lowest loss across the whole window.
    Rbest,
    /// Every application is rewarded.
    Symmetric,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CreditStrategy {
    pub kind: CreditKind,
    pub normalise: bool,
    pub discounted: bool,
}

/// Sets `credit` on every entry in the window. Ties for a minimum all
/// receive credit.
pub fn assign_credit(window: &mut [LogEntry], strategy: CreditStrategy) {
    if window.is_empty() {
        return;
    }
    match strategy.kind {
        CreditKind::Ibest => {
            let mut best: std::collections::HashMap<usize, f64> = Default::default();
            for e in window.iter() {
                let b = best.entry(e.step).or_insert(f64::INFINITY);
                *b = b.min(e.loss);
            }
            for e in window.iter_mut() {
                e.credit = indicator(e.loss == best[&e.step]);
            }
        }
        CreditKind::Rbest => {
            let best = window.iter().map(|e| e.loss).fold(f64::INFINITY, f64::min);
            for e in window.iter_mut() {
                e.credit = indicator(e.loss == best);
            }
        }
        CreditKind::Pbest => window
            .iter_mut()
            .for_each(|e| e.credit = indicator(e.pbest_improved)),
        CreditKind::Gbest => window
            .iter_mut()
            .for_each(|e| e.credit = indicator(e.gbest_improved)),
        CreditKind::Symmetric => window.iter_mut().for_each(|e| e.credit = 1.0),
    }

    if strategy.discounted {
        let newest = window.iter().map(|e| e.step).max().unwrap_or(0);
        for e in window.iter_mut() {
            e.credit *= DISCOUNT_FACTOR.powi((newest - e.step) as i32);
        }
    }
    if strategy.normalise {
        let max = window.iter().map(|e| e.credit).fold(0.0, f64::max);
        if max > 0.0 {
            window.iter_mut().for_each(|e| e.credit /= max);
        }
    }
}

fn indicator(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}
