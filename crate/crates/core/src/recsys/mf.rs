//! Matrix-factorisation predictors: biased MF trained by SGD and
//! non-negative MF trained by projected SGD.

use rand::seq::SliceRandom;
use rand::Rng;

use super::data::TrainingData;
use super::Hyperparams;
use crate::rng;

fn init_factors(rng: &mut rng::Rng, rows: usize, factors: usize) -> Vec<f64> {
    (0..rows * factors)
        .map(|_| rng.random_range(0.0..0.1))
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `r_ui = mu + b_u + b_i + q_i . p_u`.
#[derive(Clone, Debug)]
pub(crate) struct Svd {
    pub factors: usize,
    pub mean: f64,
    pub user_bias: Vec<f64>,
    pub item_bias: Vec<f64>,
    pub user_factors: Vec<f64>,
    pub item_factors: Vec<f64>,
}

impl Svd {
    pub fn score(&self, u: usize, i: usize) -> f64 {
        let f = self.factors;
        self.mean
            + self.user_bias[u]
            + self.item_bias[i]
            + dot(
                &self.user_factors[u * f..(u + 1) * f],
                &self.item_factors[i * f..(i + 1) * f],
            )
    }

    /// Raw scores for user `u` against every item position.
    pub fn score_all(&self, u: usize, out: &mut [f64]) {
        for (i, slot) in out.iter_mut().enumerate() {
            *slot = self.score(u, i);
        }
    }

    /// Regularised squared error over `data`:
    /// `sum (r - r_hat)^2 + reg (b_u^2 + b_i^2 + |p_u|^2 + |q_i|^2)`.
    pub fn objective(&self, data: &TrainingData, reg: f64) -> f64 {
        let f = self.factors;
        data.triples
            .iter()
            .map(|&(u, i, r)| {
                let (u, i) = (u as usize, i as usize);
                let err = r - self.score(u, i);
                let pu = &self.user_factors[u * f..(u + 1) * f];
                let qi = &self.item_factors[i * f..(i + 1) * f];
                err * err
                    + reg
                        * (self.user_bias[u].powi(2)
                            + self.item_bias[i].powi(2)
                            + dot(pu, pu)
                            + dot(qi, qi))
            })
            .sum()
    }

    /// Trains with plain SGD. `on_epoch` receives the model after each epoch.
    pub fn train(
        data: &TrainingData,
        params: &Hyperparams,
        mut on_epoch: impl FnMut(usize, &Svd),
    ) -> Svd {
        let f = params.factors;
        let mut rng = rng::seeded(params.train_seed);
        let mut model = Svd {
            factors: f,
            mean: data.global_mean,
            user_bias: vec![0.0; data.n_users()],
            item_bias: vec![0.0; data.n_items()],
            user_factors: init_factors(&mut rng, data.n_users(), f),
            item_factors: init_factors(&mut rng, data.n_items(), f),
        };
        let (lr, reg) = (params.learning_rate, params.regularization);
        let mut order: Vec<usize> = (0..data.triples.len()).collect();
        for epoch in 0..params.epochs {
            order.shuffle(&mut rng);
            for &idx in &order {
                let (u, i, r) = data.triples[idx];
                let (u, i) = (u as usize, i as usize);
                let err = r - model.score(u, i);
                model.user_bias[u] += lr * (err - reg * model.user_bias[u]);
                model.item_bias[i] += lr * (err - reg * model.item_bias[i]);
                let pu = &mut model.user_factors[u * f..(u + 1) * f];
                let qi = &mut model.item_factors[i * f..(i + 1) * f];
                for (p, q) in pu.iter_mut().zip(qi.iter_mut()) {
                    let (p0, q0) = (*p, *q);
                    *p += lr * (err * q0 - reg * p0);
                    *q += lr * (err * p0 - reg * q0);
                }
            }
            on_epoch(epoch, &model);
        }
        model
    }
}

/// `r_ui = q_i . p_u` with all factor entries non-negative.
#[derive(Clone, Debug)]
pub(crate) struct Nmf {
    pub factors: usize,
    pub user_factors: Vec<f64>,
    pub item_factors: Vec<f64>,
}

impl Nmf {
    pub fn score(&self, u: usize, i: usize) -> f64 {
        let f = self.factors;
        dot(
            &self.user_factors[u * f..(u + 1) * f],
            &self.item_factors[i * f..(i + 1) * f],
        )
    }

    pub fn score_all(&self, u: usize, out: &mut [f64]) {
        for (i, slot) in out.iter_mut().enumerate() {
            *slot = self.score(u, i);
        }
    }

    /// Projected SGD on `sum (r - q_i . p_u)^2 + reg (|p_u|^2 + |q_i|^2)`:
    /// a plain regularised step per rating, after which negative entries are
    /// clamped to zero. Example order is reshuffled every epoch.
    pub fn train(
        data: &TrainingData,
        params: &Hyperparams,
        mut on_epoch: impl FnMut(usize, &Nmf),
    ) -> Nmf {
        let f = params.factors;
        let mut rng = rng::seeded(params.train_seed);
        let mut model = Nmf {
            factors: f,
            user_factors: init_factors(&mut rng, data.n_users(), f),
            item_factors: init_factors(&mut rng, data.n_items(), f),
        };
        let (lr, reg) = (params.learning_rate, params.regularization);
        let mut order: Vec<usize> = (0..data.triples.len()).collect();
        for epoch in 0..params.epochs {
            order.shuffle(&mut rng);
            for &idx in &order {
                let (u, i, r) = data.triples[idx];
                let (u, i) = (u as usize, i as usize);
                let err = r - model.score(u, i);
                let pu = &mut model.user_factors[u * f..(u + 1) * f];
                let qi = &mut model.item_factors[i * f..(i + 1) * f];
                for (p, q) in pu.iter_mut().zip(qi.iter_mut()) {
                    let (p0, q0) = (*p, *q);
                    *p = (p0 + lr * (err * q0 - reg * p0)).max(0.0);
                    *q = (q0 + lr * (err * p0 - reg * q0)).max(0.0);
                }
            }
            on_epoch(epoch, &model);
        }
        model
    }
}
