//! Expected-reward forms for one API call and their Thompson draws.

use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum RewardError {
    #[error("reward mode {0:?} needs a match count but none is known")]
    MissingMatchCount(RewardMode),
    #[error("invalid Beta parameters S={s}, F={f}")]
    BadBeta { s: f64, f: f64 },
}

/// How the per-call reward of a query is scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RewardMode {
    /// precision · unseen fraction · expected distinct entities in `m`
    /// with-replacement draws, `N(1-(1-1/N)^m)`.
    WithReplacementUnique,
    /// Same as above but with the third factor `1-(1-1/N)^m`, without the
    /// leading `N`. Kept for comparison runs.
    WithReplacementLiteral,
    /// precision · unseen fraction · `m`.
    WithoutReplacement,
    /// precision · `m`; never consults the match count.
    UnknownN,
}

impl RewardMode {
    pub fn needs_match_count(self) -> bool {
        !matches!(self, RewardMode::UnknownN)
    }
}

/// Posterior and coverage bookkeeping for one query.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueryStats {
    pub s: f64,
    pub f: f64,
    /// Distinct sampled entities known to match the query.
    pub n_seen: u64,
    pub est_match_count: Option<u64>,
}

impl Default for QueryStats {
    fn default() -> Self {
        QueryStats { s: 1.0, f: 1.0, n_seen: 0, est_match_count: None }
    }
}

impl QueryStats {
    pub fn precision(&self) -> f64 {
        self.s / (self.s + self.f)
    }
}

/// Expected number of distinct items among `m` uniform draws with
/// replacement from `n` items.
pub fn expected_unique(n: f64, m: usize) -> f64 {
    if n <= 0.0 {
        return 0.0;
    }
    -n * ((m as f64) * (-1.0 / n).ln_1p()).exp_m1()
}

/// Reward for a given precision value `theta`. Exposed so tests can pin
/// the Beta draw.
pub fn reward_for_precision(
    theta: f64,
    n_seen: u64,
    est_match_count: Option<u64>,
    m: usize,
    mode: RewardMode,
) -> Result<f64, RewardError> {
    if mode == RewardMode::UnknownN {
        return Ok(theta * m as f64);
    }
    let n_total = est_match_count.ok_or(RewardError::MissingMatchCount(mode))?;
    if n_seen >= n_total {
        return Ok(0.0);
    }
    let big_n = n_total as f64;
    let unseen = (big_n - n_seen as f64) / big_n;
    let third = match mode {
        RewardMode::WithReplacementUnique => expected_unique(big_n, m),
        RewardMode::WithReplacementLiteral => expected_unique(big_n, m) / big_n,
        RewardMode::WithoutReplacement => m as f64,
        RewardMode::UnknownN => unreachable!(),
    };
    Ok(theta * unseen * third)
}

/// Reward at the posterior mean precision `S/(S+F)`.
pub fn expected_reward(stats: &QueryStats, m: usize, mode: RewardMode) -> Result<f64, RewardError> {
    reward_for_precision(stats.precision(), stats.n_seen, stats.est_match_count, m, mode)
}

/// Reward at one draw `θ ~ Beta(S, F)`.
pub fn thompson_draw<R: Rng + ?Sized>(
    stats: &QueryStats,
    m: usize,
    mode: RewardMode,
    rng: &mut R,
) -> Result<f64, RewardError> {
    let beta = Beta::new(stats.s, stats.f).map_err(|_| RewardError::BadBeta { s: stats.s, f: stats.f })?;
    let theta = beta.sample(rng);
    reward_for_precision(theta, stats.n_seen, stats.est_match_count, m, mode)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    fn stats(s: f64, f: f64, n: u64, big_n: Option<u64>) -> QueryStats {
        QueryStats { s, f, n_seen: n, est_match_count: big_n }
    }

    #[test]
    fn closed_form_examples() {
        let r = expected_reward(&stats(1.0, 1.0, 0, Some(100)), 10, RewardMode::WithReplacementUnique).unwrap();
        assert!((r - 4.780_896_249_6).abs() < 1e-6, "{r}");
        let r = expected_reward(&stats(3.0, 1.0, 0, None), 20, RewardMode::UnknownN).unwrap();
        assert_eq!(r, 15.0);
        for mode in [RewardMode::WithReplacementUnique, RewardMode::WithoutReplacement] {
            assert_eq!(expected_reward(&stats(5.0, 1.0, 40, Some(40)), 10, mode).unwrap(), 0.0);
        }
        let lit = expected_reward(&stats(1.0, 1.0, 0, Some(100)), 10, RewardMode::WithReplacementLiteral).unwrap();
        assert!((lit - 0.047_808_962_5).abs() < 1e-9);
        let wo = expected_reward(&stats(1.0, 1.0, 25, Some(100)), 10, RewardMode::WithoutReplacement).unwrap();
        assert!((wo - 3.75).abs() < 1e-12);
    }

    #[test]
    fn pinned_precision() {
        let one = reward_for_precision(1.0, 0, Some(100), 10, RewardMode::WithReplacementUnique).unwrap();
        assert!((one - 9.561_792_499_1).abs() < 1e-6, "{one}");
        assert_eq!(reward_for_precision(0.0, 0, Some(100), 10, RewardMode::WithReplacementUnique).unwrap(), 0.0);
    }

    #[test]
    fn unknown_n_ignores_match_count() {
        let a = reward_for_precision(0.4, 7, None, 10, RewardMode::UnknownN).unwrap();
        let b = reward_for_precision(0.4, 7, Some(3), 10, RewardMode::UnknownN).unwrap();
        assert_eq!(a, b);
        assert_eq!(
            expected_reward(&stats(1.0, 1.0, 0, None), 10, RewardMode::WithoutReplacement),
            Err(RewardError::MissingMatchCount(RewardMode::WithoutReplacement))
        );
    }

    #[test]
    fn unique_factor_matches_simulation() {
        let mut rng = rng_from_seed(11);
        let trials = 20_000;
        let mut total = 0usize;
        let mut seen = [false; 100];
        for _ in 0..trials {
            seen.iter_mut().for_each(|s| *s = false);
            for _ in 0..10 {
                seen[rng.random_range(0..100)] = true;
            }
            total += seen.iter().filter(|&&s| s).count();
        }
        let mc = total as f64 / trials as f64;
        assert!((mc - expected_unique(100.0, 10)).abs() < 0.02, "{mc}");
        assert_eq!(expected_unique(1.0, 5), 1.0);
    }

    #[test]
    fn concentrated_draws_track_expectation() {
        let st = stats(1e6, 1.0, 0, Some(100));
        let mut rng = rng_from_seed(3);
        let mean: f64 = (0..10_000)
            .map(|_| thompson_draw(&st, 10, RewardMode::WithReplacementUnique, &mut rng).unwrap())
            .sum::<f64>()
            / 10_000.0;
        let exp = expected_reward(&st, 10, RewardMode::WithReplacementUnique).unwrap();
        assert!((mean - exp).abs() / exp < 0.01);
    }

    #[test]
    fn fractional_shapes_are_accepted() {
        let mut rng = rng_from_seed(5);
        let r = thompson_draw(&stats(2.5, 1.5, 0, None), 10, RewardMode::UnknownN, &mut rng).unwrap();
        assert!((0.0..=10.0).contains(&r));
    }
}
