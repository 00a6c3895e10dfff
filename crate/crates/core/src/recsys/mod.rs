//! Rating predictors, top-N recommendation and RMSE.

mod data;
mod knn;
mod mf;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{InteractionLog, ItemId, RatingScale, UserId};
use crate::error::{Error, Result};
use data::TrainingData;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Svd,
    Nmf,
    UserKnn,
    ItemKnn,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [
        Algorithm::Svd,
        Algorithm::Nmf,
        Algorithm::UserKnn,
        Algorithm::ItemKnn,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Svd => "svd",
            Algorithm::Nmf => "nmf",
            Algorithm::UserKnn => "user_knn",
            Algorithm::ItemKnn => "item_knn",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "svd" => Ok(Algorithm::Svd),
            "nmf" => Ok(Algorithm::Nmf),
            "user_knn" | "userknn" => Ok(Algorithm::UserKnn),
            "item_knn" | "itemknn" => Ok(Algorithm::ItemKnn),
            other => Err(Error::InvalidArgument(format!("unknown algorithm {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Similarity {
    /// Mean squared difference.
    #[default]
    Msd,
}

/// Which published tuning to start from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    #[default]
    Movielens,
    Yelp,
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DatasetKind::Movielens => "movielens",
            DatasetKind::Yelp => "yelp",
        })
    }
}

impl FromStr for DatasetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "movielens" | "ml" | "ml-1m" => Ok(DatasetKind::Movielens),
            "yelp" => Ok(DatasetKind::Yelp),
            other => Err(Error::InvalidArgument(format!("unknown dataset {other:?}"))),
        }
    }
}

/// Training configuration. Fields an algorithm does not use are ignored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub algorithm: Algorithm,
    pub epochs: usize,
    pub factors: usize,
    pub learning_rate: f64,
    pub regularization: f64,
    pub k_neighbors: usize,
    #[serde(default)]
    pub similarity: Similarity,
    #[serde(default)]
    pub train_seed: u64,
}

impl Hyperparams {
    /// Tuned settings per algorithm and dataset. NMF has no published step
    /// size or penalty; it uses learning rate 0.005 and regularisation 0.06.
    pub fn tuned(algorithm: Algorithm, dataset: DatasetKind) -> Self {
        let base = Hyperparams {
            algorithm,
            epochs: 1,
            factors: 1,
            learning_rate: 0.005,
            regularization: 0.05,
            k_neighbors: 40,
            similarity: Similarity::Msd,
            train_seed: 0,
        };
        use Algorithm::*;
        use DatasetKind::*;
        match (algorithm, dataset) {
            (Svd, Movielens) => Hyperparams { epochs: 50, factors: 150, ..base },
            (Svd, Yelp) => Hyperparams { epochs: 10, factors: 75, ..base },
            (Nmf, _) => Hyperparams {
                epochs: 100,
                factors: 150,
                regularization: 0.06,
                ..base
            },
            (UserKnn, Movielens) => Hyperparams { k_neighbors: 20, ..base },
            (ItemKnn, Movielens) => Hyperparams { k_neighbors: 75, ..base },
            (UserKnn | ItemKnn, Yelp) => Hyperparams { k_neighbors: 50, ..base },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(format!("{}: {what}", self.algorithm)));
        match self.algorithm {
            Algorithm::Svd | Algorithm::Nmf => {
                if self.epochs == 0 {
                    return bad("epochs must be positive");
                }
                if self.factors == 0 {
                    return bad("factors must be positive");
                }
                if !(self.regularization >= 0.0 && self.regularization.is_finite()) {
                    return bad("regularization must be non-negative");
                }
                if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
                    return bad("learning_rate must be positive");
                }
            }
            Algorithm::UserKnn | Algorithm::ItemKnn => {
                if self.k_neighbors == 0 {
                    return bad("k_neighbors must be positive");
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
enum Predictor {
    Svd(mf::Svd),
    Nmf(mf::Nmf),
    UserKnn(knn::UserKnn),
    ItemKnn(knn::ItemKnn),
}

/// A trained rating predictor. Every prediction is clamped to the rating
/// scale; unknown users or items and empty neighbourhoods fall back to the
/// training mean.
#[derive(Clone, Debug)]
pub struct RatingModel {
    params: Hyperparams,
    scale: RatingScale,
    data: TrainingData,
    predictor: Predictor,
}

pub fn train(params: &Hyperparams, log: &InteractionLog) -> Result<RatingModel> {
    params.validate()?;
    if log.is_empty() {
        return Err(Error::Empty("training log"));
    }
    let data = TrainingData::from_log(log);
    let predictor = match params.algorithm {
        Algorithm::Svd => Predictor::Svd(mf::Svd::train(&data, params, |_, _| {})),
        Algorithm::Nmf => Predictor::Nmf(mf::Nmf::train(&data, params, |_, _| {})),
        Algorithm::UserKnn => Predictor::UserKnn(knn::UserKnn::train(&data, params.k_neighbors)),
        Algorithm::ItemKnn => Predictor::ItemKnn(knn::ItemKnn::train(&data, params.k_neighbors)),
    };
    Ok(RatingModel {
        params: params.clone(),
        scale: log.scale(),
        data,
        predictor,
    })
}

/// Regularised training objective of biased MF after each epoch.
pub fn svd_objective_trace(params: &Hyperparams, log: &InteractionLog) -> Result<Vec<f64>> {
    params.validate()?;
    if log.is_empty() {
        return Err(Error::Empty("training log"));
    }
    let data = TrainingData::from_log(log);
    let mut trace = Vec::with_capacity(params.epochs);
    mf::Svd::train(&data, params, |_, m| {
        trace.push(m.objective(&data, params.regularization))
    });
    Ok(trace)
}

/// Smallest NMF factor entry after each epoch.
pub fn nmf_min_factor_trace(params: &Hyperparams, log: &InteractionLog) -> Result<Vec<f64>> {
    params.validate()?;
    if log.is_empty() {
        return Err(Error::Empty("training log"));
    }
    let data = TrainingData::from_log(log);
    let mut trace = Vec::with_capacity(params.epochs);
    mf::Nmf::train(&data, params, |_, m| {
        trace.push(
            m.user_factors
                .iter()
                .chain(&m.item_factors)
                .copied()
                .fold(f64::INFINITY, f64::min),
        )
    });
    Ok(trace)
}

impl RatingModel {
    pub fn params(&self) -> &Hyperparams {
        &self.params
    }

    pub fn algorithm(&self) -> Algorithm {
        self.params.algorithm
    }

    pub fn scale(&self) -> RatingScale {
        self.scale
    }

    pub fn global_mean(&self) -> f64 {
        self.data.global_mean
    }

    /// Unclamped algorithm score; `None` when the model has no basis for one.
    fn raw(&self, u: usize, i: usize) -> Option<f64> {
        match &self.predictor {
            Predictor::Svd(m) => Some(m.score(u, i)),
            Predictor::Nmf(m) => Some(m.score(u, i)),
            Predictor::UserKnn(m) => m.score(&self.data, u, i),
            Predictor::ItemKnn(m) => m.score(&self.data, u, i),
        }
    }

    pub fn predict(&self, user: UserId, item: ItemId) -> f64 {
        let raw = match (self.data.user_pos.get(&user), self.data.item_pos.get(&item)) {
            (Some(&u), Some(&i)) => self.raw(u, i),
            _ => None,
        };
        self.scale.clamp(raw.unwrap_or(self.data.global_mean))
    }

    /// Clamped scores of a known user position against every item position.
    fn score_user(&self, u: usize) -> Vec<f64> {
        let ni = self.data.n_items();
        let mut raw = vec![0.0; ni];
        match &self.predictor {
            Predictor::Svd(m) => m.score_all(u, &mut raw),
            Predictor::Nmf(m) => m.score_all(u, &mut raw),
            Predictor::UserKnn(m) => {
                let mut opt = vec![None; ni];
                m.score_all(&self.data, u, &mut opt);
                fill_cold(&mut raw, &opt, self.data.global_mean);
            }
            Predictor::ItemKnn(m) => {
                let mut opt = vec![None; ni];
                m.score_all(&self.data, u, &mut opt);
                fill_cold(&mut raw, &opt, self.data.global_mean);
            }
        }
        raw.iter_mut().for_each(|x| *x = self.scale.clamp(*x));
        raw
    }

    /// Similarity between two users (user kNN) or two items (item kNN).
    pub fn similarity(&self, a: u32, b: u32) -> Option<f64> {
        match &self.predictor {
            Predictor::UserKnn(m) => {
                let (a, b) = (self.data.user_pos.get(&a)?, self.data.user_pos.get(&b)?);
                Some(m.similarity(*a, *b))
            }
            Predictor::ItemKnn(m) => {
                let (a, b) = (self.data.item_pos.get(&a)?, self.data.item_pos.get(&b)?);
                Some(m.similarity(*a, *b))
            }
            _ => None,
        }
    }
}

fn fill_cold(out: &mut [f64], scores: &[Option<f64>], mean: f64) {
    for (o, s) in out.iter_mut().zip(scores) {
        *o = s.unwrap_or(mean);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub item: ItemId,
    pub score: f64,
}

/// Per-user ranked recommendations, best first.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RecommendationList {
    lists: BTreeMap<UserId, Vec<Recommendation>>,
}

impl RecommendationList {
    pub fn from_map(lists: BTreeMap<UserId, Vec<Recommendation>>) -> Self {
        RecommendationList { lists }
    }

    pub fn get(&self, user: UserId) -> Option<&[Recommendation]> {
        self.lists.get(&user).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (UserId, &[Recommendation])> + '_ {
        self.lists.iter().map(|(&u, l)| (u, l.as_slice()))
    }

    pub fn n_users(&self) -> usize {
        self.lists.len()
    }

    /// Total number of recommended pairs.
    pub fn total(&self) -> usize {
        self.lists.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.total() == 0
    }

    /// Item lists per user, for GAP computations.
    pub fn item_lists(&self) -> BTreeMap<UserId, Vec<ItemId>> {
        self.lists
            .iter()
            .map(|(&u, l)| (u, l.iter().map(|r| r.item).collect()))
            .collect()
    }

    /// `(user, item, predicted rating)` rows ready to append to a log.
    pub fn as_interactions(&self) -> Vec<(UserId, ItemId, f64)> {
        self.lists
            .iter()
            .flat_map(|(&u, l)| l.iter().map(move |r| (u, r.item, r.score)))
            .collect()
    }
}

fn rank(a: &Recommendation, b: &Recommendation) -> std::cmp::Ordering {
    b.score.total_cmp(&a.score).then(a.item.cmp(&b.item))
}

/// For every user in `log`, the `n` best-scored items of the log's item
/// universe that the user has not interacted with. Ties go to the lower item id.
pub fn recommend_top_n(model: &RatingModel, log: &InteractionLog, n: usize) -> RecommendationList {
    let universe: Vec<ItemId> = log.items().collect();
    let model_pos: Vec<Option<usize>> = universe
        .iter()
        .map(|i| model.data.item_pos.get(i).copied())
        .collect();
    let users: Vec<UserId> = log.users().collect();
    let cold = model.scale.clamp(model.data.global_mean);
    let lists = users
        .par_iter()
        .map(|&user| {
            let scores = model.data.user_pos.get(&user).map(|&u| model.score_user(u));
            let mut candidates: Vec<Recommendation> = universe
                .iter()
                .zip(&model_pos)
                .filter(|(&item, _)| !log.contains(user, item))
                .map(|(&item, pos)| Recommendation {
                    item,
                    score: match (&scores, pos) {
                        (Some(s), Some(p)) => s[*p],
                        _ => cold,
                    },
                })
                .collect();
            if n > 0 && candidates.len() > n {
                candidates.select_nth_unstable_by(n - 1, rank);
            }
            candidates.truncate(n);
            candidates.sort_by(rank);
            (user, candidates)
        })
        .collect();
    RecommendationList { lists }
}

pub fn rmse(model: &RatingModel, test: &InteractionLog) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::Empty("test log"));
    }
    let sse: f64 = test
        .interactions()
        .iter()
        .map(|it| (it.rating - model.predict(it.user, it.item)).powi(2))
        .sum();
    Ok((sse / test.len() as f64).sqrt())
}
