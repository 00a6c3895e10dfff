//! Neighbourhood predictors with mean-squared-difference similarity,
//! `sim(a, b) = 1 / (msd(a, b) + 1)` over co-rated entries. Pairs without
//! overlap get similarity 0 and never act as neighbours.

use rayon::prelude::*;

use super::data::TrainingData;

/// Dense symmetric similarity matrix built from sorted adjacency lists.
/// `rows[a]` lists (other, rating) for entity `a`; `cross[x]` lists
/// (entity, rating) for the shared dimension `x`.
fn msd_matrix(rows: &[Vec<(u32, f64)>], cross: &[Vec<(u32, f64)>]) -> Vec<f64> {
    let n = rows.len();
    let mut sims = vec![0.0; n * n];
    sims.par_chunks_mut(n.max(1))
        .enumerate()
        .for_each_init(
            || (vec![0.0f64; n], vec![0u32; n]),
            |(sq, cnt), (a, out)| {
                sq.iter_mut().for_each(|x| *x = 0.0);
                cnt.iter_mut().for_each(|x| *x = 0);
                for &(x, r_a) in &rows[a] {
                    for &(b, r_b) in &cross[x as usize] {
                        let d = r_a - r_b;
                        sq[b as usize] += d * d;
                        cnt[b as usize] += 1;
                    }
                }
                for b in 0..n {
                    out[b] = if b != a && cnt[b] > 0 {
                        1.0 / (sq[b] / cnt[b] as f64 + 1.0)
                    } else {
                        0.0
                    };
                }
            },
        );
    sims
}

fn weighted_mean(neighbours: impl Iterator<Item = (f64, f64)>) -> Option<f64> {
    let (mut num, mut den) = (0.0, 0.0);
    for (sim, rating) in neighbours {
        num += sim * rating;
        den += sim;
    }
    (den > 0.0).then(|| num / den)
}

/// Orders (similarity, position) pairs by descending similarity, then
/// ascending position.
fn by_similarity(a: &(f64, u32, f64), b: &(f64, u32, f64)) -> std::cmp::Ordering {
    b.0.total_cmp(&a.0).then(a.1.cmp(&b.1))
}

#[derive(Clone, Debug)]
pub(crate) struct UserKnn {
    pub k: usize,
    sims: Vec<f64>,
    /// Per user: (neighbour position, similarity), best first, sim > 0 only.
    neighbours: Vec<Vec<(u32, f64)>>,
}

impl UserKnn {
    pub fn train(data: &TrainingData, k: usize) -> Self {
        let n = data.n_users();
        let sims = msd_matrix(&data.by_user, &data.by_item);
        let neighbours = (0..n)
            .into_par_iter()
            .map(|u| {
                let mut list: Vec<(f64, u32, f64)> = (0..n)
                    .filter(|&v| sims[u * n + v] > 0.0)
                    .map(|v| (sims[u * n + v], v as u32, 0.0))
                    .collect();
                list.sort_by(by_similarity);
                list.into_iter().map(|(s, v, _)| (v, s)).collect()
            })
            .collect();
        UserKnn { k, sims, neighbours }
    }

    pub fn similarity(&self, a: usize, b: usize) -> f64 {
        let n = self.neighbours.len();
        self.sims[a * n + b]
    }

    /// Weighted mean over the `k` most similar users who rated `i`.
    pub fn score(&self, data: &TrainingData, u: usize, i: usize) -> Option<f64> {
        weighted_mean(
            self.neighbours[u]
                .iter()
                .filter_map(|&(v, s)| data.rating(v as usize, i as u32).map(|r| (s, r)))
                .take(self.k),
        )
    }

    /// Scores for every item position; `None` where no neighbour rated it.
    /// Visits neighbours in the same order as [`UserKnn::score`], so both
    /// paths sum identically.
    pub fn score_all(&self, data: &TrainingData, u: usize, out: &mut [Option<f64>]) {
        let ni = data.n_items();
        let mut num = vec![0.0; ni];
        let mut den = vec![0.0; ni];
        let mut cnt = vec![0usize; ni];
        for &(v, s) in &self.neighbours[u] {
            for &(j, r) in &data.by_user[v as usize] {
                let j = j as usize;
                if cnt[j] < self.k {
                    num[j] += s * r;
                    den[j] += s;
                    cnt[j] += 1;
                }
            }
        }
        for j in 0..ni {
            out[j] = (den[j] > 0.0).then(|| num[j] / den[j]);
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) struct ItemKnn {
    pub k: usize,
    n_items: usize,
    sims: Vec<f64>,
}

impl ItemKnn {
    pub fn train(data: &TrainingData, k: usize) -> Self {
        ItemKnn {
            k,
            n_items: data.n_items(),
            sims: msd_matrix(&data.by_item, &data.by_user),
        }
    }

    pub fn similarity(&self, a: usize, b: usize) -> f64 {
        self.sims[a * self.n_items + b]
    }

    fn score_with(&self, data: &TrainingData, u: usize, i: usize, buf: &mut Vec<(f64, u32, f64)>) -> Option<f64> {
        buf.clear();
        let row = &self.sims[i * self.n_items..(i + 1) * self.n_items];
        buf.extend(
            data.by_user[u]
                .iter()
                .filter(|&&(j, _)| row[j as usize] > 0.0)
                .map(|&(j, r)| (row[j as usize], j, r)),
        );
        if buf.len() > self.k {
            buf.select_nth_unstable_by(self.k - 1, by_similarity);
            buf.truncate(self.k);
        }
        buf.sort_by(by_similarity);
        weighted_mean(buf.iter().map(|&(s, _, r)| (s, r)))
    }

    /// Weighted mean over the `k` items in `u`'s profile most similar to `i`.
    pub fn score(&self, data: &TrainingData, u: usize, i: usize) -> Option<f64> {
        self.score_with(data, u, i, &mut Vec::new())
    }

    pub fn score_all(&self, data: &TrainingData, u: usize, out: &mut [Option<f64>]) {
        let mut buf = Vec::with_capacity(data.by_user[u].len());
        for (i, slot) in out.iter_mut().enumerate() {
            *slot = self.score_with(data, u, i, &mut buf);
        }
    }
}
