//! Popularity-bias metrics. Everything here is a pure function of explicit
//! snapshots and computed in `f64`.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::dataset::{GroupAssignment, InteractionLog, ItemId, UserId};
use crate::error::{Error, Result};
use crate::recsys::RecommendationList;

/// Item popularity `phi_i = N_i / N_U`: the share of users who interacted
/// with item `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct PopularityTable {
    scores: BTreeMap<ItemId, f64>,
    n_users: usize,
}

impl PopularityTable {
    pub fn get(&self, item: ItemId) -> Option<f64> {
        self.scores.get(&item).copied()
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// Scores in ascending item order.
    pub fn values(&self) -> Vec<f64> {
        self.scores.values().copied().collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ItemId, f64)> + '_ {
        self.scores.iter().map(|(&i, &s)| (i, s))
    }
}

pub fn popularity_scores(log: &InteractionLog) -> Result<PopularityTable> {
    if log.is_empty() {
        return Err(Error::Empty("interaction log"));
    }
    let n_users = log.n_users();
    // Pairs are unique, so an item's degree is its distinct-user count.
    let scores = log
        .items()
        .map(|i| (i, log.item_degree(i) as f64 / n_users as f64))
        .collect();
    Ok(PopularityTable { scores, n_users })
}

/// Gini coefficient over non-negative values using the rank form
/// `sum_i (2i - n - 1) x_(i) / (n sum x)` with ascending 1-based ranks.
pub fn gini(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::metric("gini", "empty input"));
    }
    if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::metric("gini", "values must be finite and non-negative"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let total: f64 = sorted.iter().sum();
    if total == 0.0 {
        return Err(Error::metric("gini", "all values are zero"));
    }
    let weighted: f64 = sorted
        .iter()
        .enumerate()
        .map(|(i, x)| (2.0 * (i + 1) as f64 - n - 1.0) * x)
        .sum();
    Ok(weighted / (n * total))
}

/// Gini of the item-popularity distribution computed inside each group's own
/// interactions: `N_U` is the group's user count and only items the group
/// touched are included.
pub fn within_group_gini(
    log: &InteractionLog,
    groups: &GroupAssignment,
) -> Result<BTreeMap<String, f64>> {
    groups
        .labels()
        .into_iter()
        .map(|label| Ok((label.to_owned(), group_gini(log, groups, label)?)))
        .collect()
}

/// Within-group Gini for one label.
pub fn group_gini(log: &InteractionLog, groups: &GroupAssignment, label: &str) -> Result<f64> {
    let members = groups.users_in(label);
    let restricted = log.restrict_to_users(&members);
    if restricted.is_empty() {
        return Err(Error::metric(
            "within_group_gini",
            format!("group {label:?} has no interactions"),
        ));
    }
    gini(&popularity_scores(&restricted)?.values())
}

/// Group average popularity: the mean over `group_users` of the mean `phi`
/// of each user's item list.
pub fn gap(
    profiles: &BTreeMap<UserId, Vec<ItemId>>,
    popularity: &PopularityTable,
    group_users: &HashSet<UserId>,
) -> Result<f64> {
    if group_users.is_empty() {
        return Err(Error::metric("gap", "empty group"));
    }
    let mut users: Vec<UserId> = group_users.iter().copied().collect();
    users.sort_unstable();
    let mut outer = 0.0;
    for user in &users {
        let items = profiles
            .get(user)
            .filter(|p| !p.is_empty())
            .ok_or_else(|| Error::metric("gap", format!("user {user} has an empty profile")))?;
        let mut inner = 0.0;
        for item in items {
            inner += popularity.get(*item).ok_or_else(|| {
                Error::metric("gap", format!("item {item} missing from popularity table"))
            })?;
        }
        outer += inner / items.len() as f64;
    }
    Ok(outer / users.len() as f64)
}

/// Profile and recommendation GAP for one group.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapPair {
    pub gap_p: f64,
    pub gap_r: f64,
}

impl GapPair {
    pub fn new(gap_p: f64, gap_r: f64) -> Self {
        GapPair { gap_p, gap_r }
    }
}

/// Relative change of recommendation popularity over profile popularity.
pub fn delta_gap(pair: GapPair) -> Result<f64> {
    if pair.gap_p <= 0.0 {
        return Err(Error::metric(
            "delta_gap",
            format!("GAP_p = {} makes the ratio unbounded", pair.gap_p),
        ));
    }
    Ok((pair.gap_r - pair.gap_p) / pair.gap_p)
}

/// Ratio of average non-popularity, `(1 - GAP_r) / (1 - GAP_p)`. Below 1 means
/// recommendations are more popular than profiles.
pub fn delta_gap_revised(pair: GapPair) -> Result<f64> {
    if pair.gap_p >= 1.0 {
        return Err(Error::metric(
            "delta_gap_revised",
            format!("GAP_p = {} makes the ratio unbounded", pair.gap_p),
        ));
    }
    Ok((1.0 - pair.gap_r) / (1.0 - pair.gap_p))
}

/// `|a - b| / mean(a, b)` over two groups' revised GAP values; in [0, 2].
pub fn between_group_gap(dg_g: f64, dg_h: f64) -> Result<f64> {
    if dg_g < 0.0 || dg_h < 0.0 {
        return Err(Error::metric(
            "between_group_gap",
            "revised GAP values must be non-negative",
        ));
    }
    let mean = (dg_g + dg_h) / 2.0;
    if mean == 0.0 {
        return Err(Error::metric("between_group_gap", "both values are zero"));
    }
    Ok((dg_g - dg_h).abs() / mean)
}

/// Recommendation frequency per item for one group, divided by group size.
fn group_frequency(
    recs: &RecommendationList,
    members: &HashSet<UserId>,
    item_pos: &HashMap<ItemId, usize>,
    dim: usize,
) -> Result<Vec<f64>> {
    let mut counts = vec![0.0; dim];
    for (user, list) in recs.iter() {
        if !members.contains(&user) {
            continue;
        }
        for rec in list {
            let pos = item_pos.get(&rec.item).ok_or_else(|| {
                Error::metric(
                    "group_cosine",
                    format!("item {} not in the item universe", rec.item),
                )
            })?;
            counts[*pos] += 1.0;
        }
    }
    let size = members.len() as f64;
    Ok(counts.into_iter().map(|c| c / size).collect())
}

/// Cosine similarity between the size-normalised recommendation frequency
/// vectors of groups `g` and `h` over `item_universe`.
pub fn group_cosine_similarity(
    recs: &RecommendationList,
    groups: &GroupAssignment,
    item_universe: &[ItemId],
    g: &str,
    h: &str,
) -> Result<f64> {
    let item_pos: HashMap<ItemId, usize> = item_universe
        .iter()
        .enumerate()
        .map(|(pos, &item)| (item, pos))
        .collect();
    let mut vectors = Vec::with_capacity(2);
    for label in [g, h] {
        let members = groups.users_in(label);
        if members.is_empty() {
            return Err(Error::metric("group_cosine", format!("group {label:?} is empty")));
        }
        let v = group_frequency(recs, &members, &item_pos, item_universe.len())?;
        if v.iter().all(|&x| x == 0.0) {
            return Err(Error::metric(
                "group_cosine",
                format!("group {label:?} received no recommendations"),
            ));
        }
        vectors.push(v);
    }
    Ok(cosine(&vectors[0], &vectors[1]))
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    (dot / (na * nb)).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::RatingScale;
    use crate::recsys::Recommendation;
    use proptest::prelude::*;

    /// Pairwise form: sum_i sum_j |x_i - x_j| / (2 n sum x).
    fn gini_oracle(values: &[f64]) -> f64 {
        let n = values.len() as f64;
        let total: f64 = values.iter().sum();
        let mut pairs = 0.0;
        for a in values {
            for b in values {
                pairs += (a - b).abs();
            }
        }
        pairs / (2.0 * n * total)
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn log(triples: &[(u32, u32, f64)]) -> InteractionLog {
        InteractionLog::from_triples(triples.iter().copied(), RatingScale::FIVE_STAR).unwrap()
    }

    fn recs(lists: &[(u32, &[u32])]) -> RecommendationList {
        RecommendationList::from_map(
            lists
                .iter()
                .map(|(u, items)| {
                    (
                        *u,
                        items
                            .iter()
                            .map(|&item| Recommendation { item, score: 4.0 })
                            .collect(),
                    )
                })
                .collect(),
        )
    }

    #[test]
    fn popularity_ratios() {
        // 4 users, item 1 touched by 2.
        let l = log(&[(1, 1, 3.0), (2, 1, 3.0), (3, 2, 3.0), (4, 2, 3.0), (4, 3, 1.0)]);
        let pop = popularity_scores(&l).unwrap();
        assert_eq!(pop.get(1), Some(0.5));
        assert_eq!(pop.n_users(), 4);

        let l = log(&[(1, 1, 3.0), (2, 1, 3.0), (3, 1, 3.0), (3, 2, 3.0)]);
        let pop = popularity_scores(&l).unwrap();
        assert_eq!(pop.get(1), Some(1.0));
        assert!(close(pop.get(2).unwrap(), 1.0 / 3.0, 1e-12));
        assert!(popularity_scores(&InteractionLog::new(RatingScale::FIVE_STAR)).is_err());
    }

    #[test]
    fn gini_examples() {
        assert_eq!(gini(&[0.4, 0.4, 0.4]).unwrap(), 0.0);
        assert_eq!(gini(&[0.7]).unwrap(), 0.0);
        let v = [0.1, 0.3, 0.6];
        let expected = gini_oracle(&v);
        assert!(close(expected, 1.0 / 3.0, 1e-12));
        assert!(close(gini(&v).unwrap(), expected, 1e-12));
        assert!(gini(&[0.0, 0.0]).is_err());
        assert!(gini(&[]).is_err());
        assert!(gini(&[1.0, -1.0]).is_err());
    }

    #[test]
    fn gini_extreme_is_n_minus_one_over_n() {
        let v = [0.0, 0.0, 0.0, 1.0];
        assert!(close(gini(&v).unwrap(), 0.75, 1e-12));
    }

    #[test]
    fn within_group_examples() {
        // Group A: users 1..3 with item counts [1, 2, 3] -> phi = [1/3, 2/3, 1].
        // Group B: one item only.
        let l = log(&[
            (1, 10, 3.0),
            (1, 11, 3.0),
            (1, 12, 3.0),
            (2, 11, 3.0),
            (2, 12, 3.0),
            (3, 12, 3.0),
            (4, 20, 3.0),
            (5, 20, 3.0),
        ]);
        let groups =
            GroupAssignment::from_pairs([(1, "A"), (2, "A"), (3, "A"), (4, "B"), (5, "B")]).unwrap();
        let out = within_group_gini(&l, &groups).unwrap();
        let expected = gini_oracle(&[1.0 / 3.0, 2.0 / 3.0, 1.0]);
        assert!(close(expected, 2.0 / 9.0, 1e-12));
        assert!(close(out["A"], expected, 1e-12));
        assert_eq!(out["B"], 0.0);
    }

    #[test]
    fn within_group_relabelled_twins_match() {
        let l = log(&[
            (1, 1, 3.0),
            (1, 2, 3.0),
            (2, 1, 3.0),
            (11, 1, 3.0),
            (11, 2, 3.0),
            (12, 1, 3.0),
        ]);
        let groups = GroupAssignment::from_pairs([(1, "M"), (2, "M"), (11, "F"), (12, "F")]).unwrap();
        let out = within_group_gini(&l, &groups).unwrap();
        assert_eq!(out["M"], out["F"]);
    }

    #[test]
    fn within_group_empty_group_errors() {
        let l = log(&[(1, 1, 3.0)]);
        let groups = GroupAssignment::from_pairs([(1, "M"), (2, "F")]).unwrap();
        assert!(within_group_gini(&l, &groups).is_err());
    }

    fn table(entries: &[(u32, f64)]) -> PopularityTable {
        PopularityTable {
            scores: entries.iter().copied().collect(),
            n_users: 10,
        }
    }

    #[test]
    fn gap_examples() {
        let pop = table(&[(1, 0.2), (2, 0.4), (3, 0.5), (4, 0.3), (5, 0.7)]);
        let profiles: BTreeMap<u32, Vec<u32>> =
            [(1, vec![1, 2]), (2, vec![3, 4, 5])].into_iter().collect();
        let one: HashSet<u32> = [1].into_iter().collect();
        assert!(close(gap(&profiles, &pop, &one).unwrap(), 0.3, 1e-12));
        let two: HashSet<u32> = [1, 2].into_iter().collect();
        // Per-user means 0.3 and 0.5.
        assert!(close(gap(&profiles, &pop, &two).unwrap(), 0.4, 1e-12));

        let flat = table(&[(1, 0.25), (2, 0.25), (3, 0.25), (4, 0.25), (5, 0.25)]);
        assert!(close(gap(&profiles, &flat, &two).unwrap(), 0.25, 1e-15));
    }

    #[test]
    fn gap_errors() {
        let pop = table(&[(1, 0.2)]);
        let profiles: BTreeMap<u32, Vec<u32>> =
            [(1, vec![]), (2, vec![9])].into_iter().collect();
        assert!(gap(&profiles, &pop, &[1].into_iter().collect()).is_err());
        assert!(gap(&profiles, &pop, &[2].into_iter().collect()).is_err());
        assert!(gap(&profiles, &pop, &[3].into_iter().collect()).is_err());
    }

    #[test]
    fn delta_gap_examples() {
        assert_eq!(delta_gap(GapPair::new(0.4, 0.4)).unwrap(), 0.0);
        assert_eq!(delta_gap(GapPair::new(0.4, 0.0)).unwrap(), -1.0);
        assert!(close(delta_gap(GapPair::new(0.4, 0.6)).unwrap(), 0.5, 1e-12));
        assert!(delta_gap(GapPair::new(0.0, 0.3)).is_err());
    }

    #[test]
    fn delta_gap_revised_examples() {
        assert!(close(delta_gap_revised(GapPair::new(0.4, 0.6)).unwrap(), 2.0 / 3.0, 1e-12));
        assert_eq!(delta_gap_revised(GapPair::new(0.4, 0.4)).unwrap(), 1.0);
        assert!(close(delta_gap_revised(GapPair::new(0.4, 0.2)).unwrap(), 4.0 / 3.0, 1e-12));
        assert!(delta_gap_revised(GapPair::new(1.0, 0.5)).is_err());
    }

    #[test]
    fn between_group_examples() {
        assert_eq!(between_group_gap(0.7, 0.7).unwrap(), 0.0);
        assert!(close(between_group_gap(1.0, 4.0 / 3.0).unwrap(), 2.0 / 7.0, 1e-12));
        assert!(close(between_group_gap(4.0 / 3.0, 2.0 / 3.0).unwrap(), 2.0 / 3.0, 1e-12));
        assert!(between_group_gap(0.0, 0.0).is_err());
        assert!(between_group_gap(-0.1, 1.0).is_err());
    }

    #[test]
    fn over_popular_recs_score_as_more_unfair() {
        let calibrated = delta_gap_revised(GapPair::new(0.4, 0.4)).unwrap();
        let over = delta_gap_revised(GapPair::new(0.4, 0.6)).unwrap();
        let under = delta_gap_revised(GapPair::new(0.4, 0.2)).unwrap();
        let b_over = between_group_gap(calibrated, over).unwrap();
        let b_under = between_group_gap(calibrated, under).unwrap();
        assert!(close(b_over, 0.40, 1e-12));
        assert!(close(b_under, 0.2857, 1e-4));
        assert!(b_over > b_under);
    }

    #[test]
    fn cosine_examples() {
        let groups = GroupAssignment::from_pairs([(1, "g"), (2, "g"), (3, "h"), (4, "h")]).unwrap();
        let universe = [1, 2, 3];

        let same = recs(&[(1, &[1, 2]), (2, &[1]), (3, &[2, 1]), (4, &[1])]);
        assert!(close(
            group_cosine_similarity(&same, &groups, &universe, "g", "h").unwrap(),
            1.0,
            1e-12
        ));

        let disjoint = recs(&[(1, &[1]), (2, &[1]), (3, &[2, 3]), (4, &[3])]);
        assert_eq!(
            group_cosine_similarity(&disjoint, &groups, &universe, "g", "h").unwrap(),
            0.0
        );

        // Three users per group: counts [2,1,0]/3 vs [1,1,1]/3.
        let groups3 = GroupAssignment::from_pairs([
            (1, "g"),
            (2, "g"),
            (5, "g"),
            (3, "h"),
            (4, "h"),
            (6, "h"),
        ])
        .unwrap();
        let mixed = recs(&[(1, &[1, 2]), (2, &[1]), (3, &[1]), (4, &[2]), (6, &[3])]);
        let expected = 3.0 / (5f64.sqrt() * 3f64.sqrt());
        assert!(close(expected, 0.7746, 1e-4));
        assert!(close(
            group_cosine_similarity(&mixed, &groups3, &universe, "g", "h").unwrap(),
            expected,
            1e-12
        ));
    }

    #[test]
    fn cosine_errors_on_empty_group_vector() {
        let groups = GroupAssignment::from_pairs([(1, "g"), (2, "h")]).unwrap();
        let r = recs(&[(1, &[1])]);
        assert!(group_cosine_similarity(&r, &groups, &[1, 2], "g", "h").is_err());
        assert!(group_cosine_similarity(&r, &groups, &[1, 2], "g", "x").is_err());
    }

    proptest! {
        #[test]
        fn gini_matches_pairwise_oracle(v in prop::collection::vec(0.0f64..1.0, 1..50)) {
            prop_assume!(v.iter().sum::<f64>() > 0.0);
            let g = gini(&v).unwrap();
            prop_assert!((g - gini_oracle(&v)).abs() <= 1e-9);
            let n = v.len() as f64;
            prop_assert!(g >= -1e-12 && g <= (n - 1.0) / n + 1e-12);
        }

        #[test]
        fn gini_scale_and_permutation_invariant(
            v in prop::collection::vec(0.0f64..1.0, 1..50),
            c in 0.01f64..100.0,
            seed in any::<u64>(),
        ) {
            prop_assume!(v.iter().sum::<f64>() > 0.0);
            let g = gini(&v).unwrap();
            let scaled: Vec<f64> = v.iter().map(|x| x * c).collect();
            prop_assert!((gini(&scaled).unwrap() - g).abs() <= 1e-9);
            let mut shuffled = v.clone();
            use rand::seq::SliceRandom;
            shuffled.shuffle(&mut crate::rng::seeded(seed));
            prop_assert!((gini(&shuffled).unwrap() - g).abs() <= 1e-12);
        }

        #[test]
        fn revised_and_plain_delta_gap_agree_in_direction(p in 0.01f64..0.99, r in 0.0f64..1.0) {
            let pair = GapPair::new(p, r);
            let dg = delta_gap(pair).unwrap();
            let dgr = delta_gap_revised(pair).unwrap();
            prop_assert_eq!(dgr < 1.0, r > p);
            prop_assert_eq!(dg > 0.0, dgr < 1.0);
        }

        #[test]
        fn between_group_symmetric_and_bounded(a in 0.0f64..10.0, b in 0.0f64..10.0) {
            prop_assume!(a + b > 0.0);
            let ab = between_group_gap(a, b).unwrap();
            prop_assert_eq!(ab, between_group_gap(b, a).unwrap());
            prop_assert!((0.0..=2.0).contains(&ab));
        }

        #[test]
        fn cosine_invariant_to_duplicating_a_group(
            lists in prop::collection::vec(prop::collection::btree_set(0u32..8, 1..4), 2..8),
            dup in 1usize..4,
        ) {
            // Users 0..n split in halves; group h is then copied `dup` times.
            let n = lists.len();
            let half = n / 2;
            let mut pairs = vec![];
            let mut map = BTreeMap::new();
            for (u, items) in lists.iter().enumerate() {
                let label = if u < half { "g" } else { "h" };
                pairs.push((u as u32, label));
                map.insert(u as u32, items.iter().map(|&item| Recommendation { item, score: 3.0 }).collect());
            }
            prop_assume!(half >= 1);
            let groups = GroupAssignment::from_pairs(pairs.clone()).unwrap();
            let base = RecommendationList::from_map(map.clone());
            let universe: Vec<u32> = (0..8).collect();
            let c0 = group_cosine_similarity(&base, &groups, &universe, "g", "h").unwrap();

            let mut pairs2 = pairs;
            let mut map2 = map;
            for copy in 1..=dup {
                for u in half..n {
                    let id = (1000 * copy + u) as u32;
                    pairs2.push((id, "h"));
                    map2.insert(id, map2[&(u as u32)].clone());
                }
            }
            let groups2 = GroupAssignment::from_pairs(pairs2).unwrap();
            let c1 = group_cosine_similarity(&RecommendationList::from_map(map2), &groups2, &universe, "g", "h").unwrap();
            prop_assert!((c0 - c1).abs() <= 1e-12);
            prop_assert!((0.0..=1.0).contains(&c0));
        }
    }
}
