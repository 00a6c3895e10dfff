//! Seeded generator for MovieLens-shaped rating data: Zipf item popularity,
//! two sensitive groups with tilted item preferences, log-normal profile
//! sizes and ratings from a low-rank model plus noise. Used for tests, demos
//! and runs where the real datasets are not at hand.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, LogNormal, Normal};

use crate::dataset::{GroupAssignment, InteractionLog, RatingScale};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticConfig {
    pub users: usize,
    pub items: usize,
    /// Mean profile length before clamping to `[min_profile, items / 2]`.
    pub mean_profile: usize,
    pub min_profile: usize,
    /// Share of users labelled "F"; the rest are "M".
    pub female_share: f64,
    pub zipf_exponent: f64,
    /// Strength of the per-group item preference tilt.
    pub group_tilt: f64,
    pub latent_factors: usize,
    pub noise: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            users: 300,
            items: 400,
            mean_profile: 60,
            min_profile: 10,
            female_share: 0.28,
            zipf_exponent: 0.9,
            group_tilt: 0.6,
            latent_factors: 5,
            noise: 0.6,
            seed: 0,
        }
    }
}

/// Users are numbered from 1 and items from 1, like MovieLens.
pub fn generate(cfg: &SyntheticConfig) -> (InteractionLog, GroupAssignment) {
    let mut rng = rng::seeded(cfg.seed);
    let std_normal = Normal::new(0.0, 1.0).unwrap();
    let n_items = cfg.items.max(2);

    // Zipf weights assigned to a random permutation of item ids.
    let ranks = index::sample(&mut rng, n_items, n_items).into_vec();
    let popularity: Vec<f64> = ranks
        .iter()
        .map(|&r| 1.0 / ((r + 1) as f64).powf(cfg.zipf_exponent))
        .collect();
    let tilt: Vec<f64> = (0..n_items).map(|_| std_normal.sample(&mut rng)).collect();

    let log_pop: Vec<f64> = popularity.iter().map(|p| p.ln()).collect();
    let mean_lp = log_pop.iter().sum::<f64>() / n_items as f64;
    let sd_lp = (log_pop.iter().map(|x| (x - mean_lp).powi(2)).sum::<f64>() / n_items as f64)
        .sqrt()
        .max(1e-9);
    let item_bias: Vec<f64> = log_pop
        .iter()
        .map(|lp| 0.25 * (lp - mean_lp) / sd_lp + 0.35 * std_normal.sample(&mut rng))
        .collect();
    let factor = Normal::new(0.0, 0.45).unwrap();
    let f = cfg.latent_factors.max(1);
    let item_factors: Vec<f64> = (0..n_items * f).map(|_| factor.sample(&mut rng)).collect();

    let sigma: f64 = 0.8;
    let mu = (cfg.mean_profile.max(1) as f64).ln() - sigma * sigma / 2.0;
    let sizes = LogNormal::new(mu, sigma).unwrap();
    let noise = Normal::new(0.0, cfg.noise.max(1e-9)).unwrap();
    let max_profile = (n_items / 2).max(cfg.min_profile.min(n_items));

    let mut triples = Vec::new();
    let mut groups = GroupAssignment::new();
    for u in 0..cfg.users {
        let user = u as u32 + 1;
        let female = rng.random_bool(cfg.female_share.clamp(0.0, 1.0));
        groups
            .insert(user, if female { "F" } else { "M" })
            .expect("fresh user id");
        let sign = if female { -1.0 } else { 1.0 };
        let user_bias = 0.4 * std_normal.sample(&mut rng);
        let user_factors: Vec<f64> = (0..f).map(|_| factor.sample(&mut rng)).collect();
        let len = (sizes.sample(&mut rng).round() as usize).clamp(cfg.min_profile.min(n_items), max_profile);
        let chosen = index::sample_weighted(
            &mut rng,
            n_items,
            |i| popularity[i] * (sign * cfg.group_tilt * tilt[i]).exp(),
            len,
        )
        .expect("positive weights");
        let mut chosen = chosen.into_vec();
        chosen.sort_unstable();
        for i in chosen {
            let affinity: f64 = (0..f).map(|k| user_factors[k] * item_factors[i * f + k]).sum();
            let raw = 3.6 + user_bias + item_bias[i] + affinity + 0.3 * sign * tilt[i] + noise.sample(&mut rng);
            triples.push((user, i as u32 + 1, raw.round().clamp(1.0, 5.0)));
        }
    }
    let log = InteractionLog::from_triples(triples, RatingScale::FIVE_STAR)
        .expect("generator emits unique in-scale pairs");
    (log, groups)
}

/// Writes `ratings.dat` and `users.dat` in MovieLens 1M layout.
pub fn write_movielens(dir: &Path, log: &InteractionLog, groups: &GroupAssignment) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut ratings = String::new();
    for (n, it) in log.interactions().iter().enumerate() {
        writeln!(ratings, "{}::{}::{}::{}", it.user, it.item, it.rating, 978_300_000 + n).unwrap();
    }
    let mut users = String::new();
    for (user, label) in groups.iter() {
        writeln!(users, "{user}::{label}::25::0::00000").unwrap();
    }
    let rp = dir.join("ratings.dat");
    fs::write(&rp, ratings).map_err(|e| Error::io(&rp, e))?;
    let up = dir.join("users.dat");
    fs::write(&up, users).map_err(|e| Error::io(&up, e))
}
