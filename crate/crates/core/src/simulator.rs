//! The feedback loop: retrain on the current log, recommend top-N to every
//! user, measure, append the recommendations with their predicted ratings,
//! repeat.
//!
//! Each iteration trains one model on the full current log; its
//! recommendations feed every metric except `dynamic_delta_gap` and are the
//! rows that get appended. `dynamic_delta_gap` runs its own split-based
//! branch: a fresh per-user train/test split, `GAP_p` and popularity from the
//! training part, a model trained on that part, and recommendations over the
//! pairs unobserved in the full log. That branch only measures.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dataset::{split_train_test, GroupAssignment, InteractionLog, ItemId, UserId};
use crate::error::{Error, Result};
use crate::metrics::{self, GapPair, PopularityTable};
use crate::recsys::{self, Hyperparams, RecommendationList};
use crate::rng::derive_seed;

const STREAM_TRAIN: u64 = 1;
const STREAM_SPLIT: u64 = 2;
const STREAM_DELTA_TRAIN: u64 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    GlobalGini,
    WithinGroupGini,
    DynamicDeltaGap,
    BetweenGroupGap,
    GroupCosine,
}

impl MetricKind {
    pub const ALL: [MetricKind; 5] = [
        MetricKind::GlobalGini,
        MetricKind::WithinGroupGini,
        MetricKind::DynamicDeltaGap,
        MetricKind::BetweenGroupGap,
        MetricKind::GroupCosine,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MetricKind::GlobalGini => "global_gini",
            MetricKind::WithinGroupGini => "within_group_gini",
            MetricKind::DynamicDeltaGap => "dynamic_delta_gap",
            MetricKind::BetweenGroupGap => "between_group_gap",
            MetricKind::GroupCosine => "group_cosine",
        }
    }

    /// Whether the metric needs group labels.
    pub fn is_group_metric(self) -> bool {
        self != MetricKind::GlobalGini
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MetricKind::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown metric {s:?}")))
    }
}

/// What a value refers to: the whole population, one group, or a pair.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GroupKey {
    All,
    Group(String),
    Pair(String, String),
}

impl fmt::Display for GroupKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroupKey::All => f.write_str("ALL"),
            GroupKey::Group(g) => f.write_str(g),
            GroupKey::Pair(g, h) => write!(f, "{g}|{h}"),
        }
    }
}

impl FromStr for GroupKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.is_empty() {
            return Err(Error::InvalidArgument("empty group key".into()));
        }
        Ok(match s.split_once('|') {
            _ if s == "ALL" => GroupKey::All,
            Some((g, h)) => GroupKey::Pair(g.to_owned(), h.to_owned()),
            None => GroupKey::Group(s.to_owned()),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroupMetricValue {
    pub metric: MetricKind,
    pub group: GroupKey,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricRecord {
    /// 1-based.
    pub iteration: usize,
    pub algorithm: String,
    pub dataset: String,
    pub metric: MetricKind,
    pub group: GroupKey,
    pub value: f64,
}

/// Users that got fewer than `top_n` recommendations because they ran out of
/// unobserved items.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShortfallWarning {
    pub iteration: usize,
    pub users: Vec<UserId>,
    pub missing: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricSeries {
    records: Vec<MetricRecord>,
    pub warnings: Vec<ShortfallWarning>,
}

impl MetricSeries {
    /// Builds a series sorted by (iteration, metric, group). Rejects repeated
    /// keys.
    pub fn from_records(mut records: Vec<MetricRecord>) -> Result<Self> {
        records.sort_by(|a, b| {
            (a.iteration, a.metric.as_str(), a.group.to_string())
                .cmp(&(b.iteration, b.metric.as_str(), b.group.to_string()))
        });
        for w in records.windows(2) {
            if (w[0].iteration, w[0].metric, &w[0].group) == (w[1].iteration, w[1].metric, &w[1].group)
            {
                return Err(Error::InvalidArgument(format!(
                    "repeated record: iteration {}, {} {}",
                    w[1].iteration, w[1].metric, w[1].group
                )));
            }
        }
        Ok(MetricSeries {
            records,
            warnings: Vec::new(),
        })
    }

    pub fn records(&self) -> &[MetricRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, iteration: usize, metric: MetricKind, group: &GroupKey) -> Option<f64> {
        self.records
            .iter()
            .find(|r| r.iteration == iteration && r.metric == metric && &r.group == group)
            .map(|r| r.value)
    }

    /// `(iteration, value)` for one metric and group, in iteration order.
    pub fn series(&self, metric: MetricKind, group: &GroupKey) -> Vec<(usize, f64)> {
        self.records
            .iter()
            .filter(|r| r.metric == metric && &r.group == group)
            .map(|r| (r.iteration, r.value))
            .collect()
    }

    pub fn max_iteration(&self) -> usize {
        self.records.iter().map(|r| r.iteration).max().unwrap_or(0)
    }
}

fn default_top_n() -> usize {
    10
}

fn default_iterations() -> usize {
    40
}

fn default_test_fraction() -> f64 {
    0.2
}

fn default_metrics() -> BTreeSet<MetricKind> {
    MetricKind::ALL.into_iter().collect()
}

fn default_groups() -> (String, String) {
    ("M".into(), "F".into())
}

fn default_dataset() -> String {
    "movielens".into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub params: Hyperparams,
    #[serde(default = "default_dataset")]
    pub dataset: String,
    #[serde(default = "default_top_n")]
    pub top_n: usize,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_metrics")]
    pub metrics: BTreeSet<MetricKind>,
    #[serde(default = "default_groups")]
    pub groups: (String, String),
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
}

impl SimulationConfig {
    pub fn new(params: Hyperparams) -> Self {
        SimulationConfig {
            params,
            dataset: default_dataset(),
            top_n: default_top_n(),
            iterations: default_iterations(),
            seed: 0,
            metrics: default_metrics(),
            groups: default_groups(),
            test_fraction: default_test_fraction(),
        }
    }

    pub fn needs_groups(&self) -> bool {
        self.metrics.iter().any(|m| m.is_group_metric())
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.iterations == 0 {
            return Err(Error::InvalidArgument("iterations must be at least 1".into()));
        }
        if self.top_n == 0 {
            return Err(Error::InvalidArgument("top_n must be at least 1".into()));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "test_fraction {} not in (0, 1)",
                self.test_fraction
            )));
        }
        if self.metrics.is_empty() {
            return Err(Error::InvalidArgument("no metrics selected".into()));
        }
        if self.needs_groups() && self.groups.0 == self.groups.1 {
            return Err(Error::InvalidArgument(
                "group metrics need two distinct labels".into(),
            ));
        }
        Ok(())
    }

    /// Seed for iteration `t`.
    pub fn iteration_seed(&self, t: usize) -> u64 {
        derive_seed(self.seed, t as u64)
    }

    fn params_with_seed(&self, seed: u64) -> Hyperparams {
        Hyperparams {
            train_seed: seed,
            ..self.params.clone()
        }
    }

    fn pair_key(&self) -> GroupKey {
        GroupKey::Pair(self.groups.0.clone(), self.groups.1.clone())
    }
}

/// Outcome of the split-based ΔGAP branch for one iteration.
#[derive(Clone, Debug)]
pub struct DeltaGapOutcome {
    pub gaps: BTreeMap<String, GapPair>,
    pub delta_gap: BTreeMap<String, f64>,
    pub recommendations: RecommendationList,
}

/// Mean over users with a non-empty list of the mean popularity of their
/// items. Items the table does not know count as popularity 0.
fn mean_popularity(
    lists: &BTreeMap<UserId, Vec<ItemId>>,
    popularity: &PopularityTable,
    members: &HashSet<UserId>,
    what: &str,
) -> Result<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for (user, items) in lists {
        if items.is_empty() || !members.contains(user) {
            continue;
        }
        let inner: f64 = items.iter().map(|&i| popularity.get(i).unwrap_or(0.0)).sum();
        sum += inner / items.len() as f64;
        n += 1;
    }
    if n == 0 {
        return Err(Error::metric("gap", format!("no {what} for the group")));
    }
    Ok(sum / n as f64)
}

fn members_in(groups: &GroupAssignment, log: &InteractionLog, label: &str) -> Result<HashSet<UserId>> {
    let members: HashSet<UserId> = groups
        .users_in(label)
        .into_iter()
        .filter(|&u| log.has_user(u))
        .collect();
    if members.is_empty() {
        return Err(Error::metric("group", format!("group {label:?} has no users in the log")));
    }
    Ok(members)
}

/// GAP pair per configured group: profiles of `profile_log`, recommendation
/// lists of `recs`, both scored with `popularity`.
fn group_gap_pairs(
    profile_log: &InteractionLog,
    recs: &RecommendationList,
    popularity: &PopularityTable,
    groups: &GroupAssignment,
    config: &SimulationConfig,
) -> Result<BTreeMap<String, GapPair>> {
    let profiles = profile_log.profiles();
    let rec_lists = recs.item_lists();
    let mut out = BTreeMap::new();
    for label in [&config.groups.0, &config.groups.1] {
        let members = members_in(groups, profile_log, label)?;
        let gap_p = metrics::gap(&profiles, popularity, &members)?;
        let gap_r = mean_popularity(&rec_lists, popularity, &members, "recommendations")?;
        out.insert(label.clone(), GapPair::new(gap_p, gap_r));
    }
    Ok(out)
}

/// One pass of the split-based ΔGAP procedure on `log`.
pub fn run_delta_gap_iteration(
    log: &InteractionLog,
    groups: &GroupAssignment,
    config: &SimulationConfig,
    seed_t: u64,
) -> Result<DeltaGapOutcome> {
    let (train, _test) = split_train_test(log, config.test_fraction, derive_seed(seed_t, STREAM_SPLIT))?;
    let popularity = metrics::popularity_scores(&train)?;
    let model = recsys::train(&config.params_with_seed(derive_seed(seed_t, STREAM_DELTA_TRAIN)), &train)?;
    // Candidates are drawn against the full log so nothing already
    // interacted with comes back.
    let recommendations = recsys::recommend_top_n(&model, log, config.top_n);
    let gaps = group_gap_pairs(&train, &recommendations, &popularity, groups, config)?;
    let mut delta_gap = BTreeMap::new();
    for (label, pair) in &gaps {
        let value = metrics::delta_gap(*pair).map_err(|e| {
            Error::metric("dynamic_delta_gap", format!("group {label:?}: {e}"))
        })?;
        delta_gap.insert(label.clone(), value);
    }
    Ok(DeltaGapOutcome {
        gaps,
        delta_gap,
        recommendations,
    })
}

/// Every selected metric for one iteration, from the pre-append `snapshot`
/// and the recommendations of the full-log model. `seed_t` drives the ΔGAP
/// branch. Metrics over recommendations fail if a group received none.
pub fn compute_iteration_metrics(
    snapshot: &InteractionLog,
    recs: &RecommendationList,
    groups: &GroupAssignment,
    config: &SimulationConfig,
    seed_t: u64,
) -> Result<Vec<GroupMetricValue>> {
    let (g, h) = (&config.groups.0, &config.groups.1);
    let mut out = Vec::new();
    let mut push = |metric, group, value| {
        out.push(GroupMetricValue {
            metric,
            group,
            value,
        })
    };
    for &metric in &config.metrics {
        match metric {
            MetricKind::GlobalGini => {
                let value = metrics::gini(&metrics::popularity_scores(snapshot)?.values())?;
                push(metric, GroupKey::All, value);
            }
            MetricKind::WithinGroupGini => {
                for label in [g, h] {
                    let value = metrics::group_gini(snapshot, groups, label)?;
                    push(metric, GroupKey::Group(label.clone()), value);
                }
            }
            MetricKind::DynamicDeltaGap => {
                let outcome = run_delta_gap_iteration(snapshot, groups, config, seed_t)?;
                for (label, value) in outcome.delta_gap {
                    push(metric, GroupKey::Group(label), value);
                }
            }
            MetricKind::BetweenGroupGap => {
                let popularity = metrics::popularity_scores(snapshot)?;
                let gaps = group_gap_pairs(snapshot, recs, &popularity, groups, config)?;
                let value = metrics::between_group_gap(
                    metrics::delta_gap_revised(gaps[g])?,
                    metrics::delta_gap_revised(gaps[h])?,
                )?;
                push(metric, config.pair_key(), value);
            }
            MetricKind::GroupCosine => {
                let universe: Vec<ItemId> = snapshot.items().collect();
                let value = metrics::group_cosine_similarity(recs, groups, &universe, g, h)?;
                push(metric, config.pair_key(), value);
            }
        }
    }
    Ok(out)
}

/// Per-iteration progress.
#[derive(Clone, Debug)]
pub struct IterationSummary {
    pub iteration: usize,
    pub iterations: usize,
    pub log_size: usize,
    pub appended: usize,
    pub seconds: f64,
}

pub fn run_feedback_loop(
    log0: &InteractionLog,
    groups: &GroupAssignment,
    config: &SimulationConfig,
) -> Result<MetricSeries> {
    run_feedback_loop_with(log0, groups, config, |s| {
        log::info!(
            "iteration {}/{}: log size {} (+{}), {:.2}s",
            s.iteration,
            s.iterations,
            s.log_size,
            s.appended,
            s.seconds
        )
    })
}

/// [`run_feedback_loop`] with a caller-supplied progress hook.
pub fn run_feedback_loop_with(
    log0: &InteractionLog,
    groups: &GroupAssignment,
    config: &SimulationConfig,
    mut on_iteration: impl FnMut(&IterationSummary),
) -> Result<MetricSeries> {
    config.validate()?;
    if log0.is_empty() {
        return Err(Error::Empty("interaction log"));
    }
    let groups = if config.needs_groups() {
        groups.ensure_covers(log0)?;
        for label in [&config.groups.0, &config.groups.1] {
            if groups.users_in(label).iter().all(|&u| !log0.has_user(u)) {
                return Err(Error::InvalidArgument(format!(
                    "group {label:?} has no users in the log"
                )));
            }
        }
        groups.restricted_to(log0)
    } else {
        GroupAssignment::new()
    };
    let base = log0.current_iteration() as usize;
    let algorithm = config.params.algorithm.to_string();
    let mut log = log0.clone();
    let mut records = Vec::new();
    let mut warnings = Vec::new();
    for t in 1..=config.iterations {
        let started = Instant::now();
        let seed_t = config.iteration_seed(t);
        let step = || -> Result<(RecommendationList, Vec<GroupMetricValue>)> {
            let model = recsys::train(&config.params_with_seed(derive_seed(seed_t, STREAM_TRAIN)), &log)?;
            let recs = recsys::recommend_top_n(&model, &log, config.top_n);
            let values = compute_iteration_metrics(&log, &recs, &groups, config, seed_t)?;
            Ok((recs, values))
        };
        let wrap = |e: Error| Error::Iteration {
            iteration: t,
            source: Box::new(e),
        };
        let (recs, values) = step().map_err(wrap)?;
        let short: Vec<UserId> = recs
            .iter()
            .filter(|(_, l)| l.len() < config.top_n)
            .map(|(u, _)| u)
            .collect();
        if !short.is_empty() {
            let missing = short.len() * config.top_n
                - short.iter().map(|&u| recs.get(u).map_or(0, <[_]>::len)).sum::<usize>();
            log::warn!(
                "iteration {t}: {} user(s) ran out of unobserved items ({missing} recommendations short)",
                short.len()
            );
            warnings.push(ShortfallWarning {
                iteration: t,
                users: short,
                missing,
            });
        }
        let appended = log
            .append_interactions(&recs.as_interactions(), (base + t) as u32)
            .map_err(wrap)?;
        records.extend(values.into_iter().map(|v| MetricRecord {
            iteration: t,
            algorithm: algorithm.clone(),
            dataset: config.dataset.clone(),
            metric: v.metric,
            group: v.group,
            value: v.value,
        }));
        on_iteration(&IterationSummary {
            iteration: t,
            iterations: config.iterations,
            log_size: log.len(),
            appended,
            seconds: started.elapsed().as_secs_f64(),
        });
    }
    let mut series = MetricSeries::from_records(records)?;
    series.warnings = warnings;
    Ok(series)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::RatingScale;
    use crate::recsys::{Algorithm, DatasetKind, Recommendation};
    use crate::synthetic::{self, SyntheticConfig};

    fn small_world() -> (InteractionLog, GroupAssignment) {
        synthetic::generate(&SyntheticConfig {
            users: 40,
            items: 60,
            mean_profile: 12,
            min_profile: 4,
            seed: 5,
            ..SyntheticConfig::default()
        })
    }

    fn quick_config(algorithm: Algorithm) -> SimulationConfig {
        let mut params = Hyperparams::tuned(algorithm, DatasetKind::Movielens);
        params.epochs = params.epochs.min(5);
        params.factors = params.factors.min(8);
        SimulationConfig {
            iterations: 3,
            top_n: 5,
            seed: 11,
            ..SimulationConfig::new(params)
        }
    }

    #[test]
    fn group_key_round_trips() {
        for key in [
            GroupKey::All,
            GroupKey::Group("F".into()),
            GroupKey::Pair("M".into(), "F".into()),
        ] {
            assert_eq!(key.to_string().parse::<GroupKey>().unwrap(), key);
        }
        assert_eq!(GroupKey::Pair("M".into(), "F".into()).to_string(), "M|F");
    }

    #[test]
    fn metric_names_round_trip() {
        for m in MetricKind::ALL {
            assert_eq!(m.as_str().parse::<MetricKind>().unwrap(), m);
        }
        assert!("gini".parse::<MetricKind>().is_err());
    }

    #[test]
    fn all_five_metrics_on_two_groups_give_seven_values() {
        let (log, groups) = small_world();
        let config = quick_config(Algorithm::UserKnn);
        let model = recsys::train(&config.params, &log).unwrap();
        let recs = recsys::recommend_top_n(&model, &log, config.top_n);
        let values = compute_iteration_metrics(&log, &recs, &groups, &config, 1).unwrap();
        assert_eq!(values.len(), 7);
    }

    #[test]
    fn only_global_gini_gives_one_value() {
        let (log, groups) = small_world();
        let mut config = quick_config(Algorithm::UserKnn);
        config.metrics = [MetricKind::GlobalGini].into_iter().collect();
        let model = recsys::train(&config.params, &log).unwrap();
        let recs = recsys::recommend_top_n(&model, &log, config.top_n);
        let values = compute_iteration_metrics(&log, &recs, &groups, &config, 1).unwrap();
        assert_eq!(values.len(), 1);
        assert_eq!(values[0].group, GroupKey::All);
    }

    #[test]
    fn mirrored_groups_are_perfectly_fair() {
        // Users 1..=3 and 11..=13 have identical profiles and identical lists.
        let mut triples = Vec::new();
        for offset in [0u32, 10] {
            triples.extend([
                (1 + offset, 1, 4.0),
                (1 + offset, 2, 3.0),
                (2 + offset, 1, 5.0),
                (3 + offset, 2, 2.0),
                (3 + offset, 3, 4.0),
            ]);
        }
        let log = InteractionLog::from_triples(triples, RatingScale::FIVE_STAR).unwrap();
        let groups = GroupAssignment::from_pairs(
            [1, 2, 3].map(|u| (u, "M")).into_iter().chain([11, 12, 13].map(|u| (u, "F"))),
        )
        .unwrap();
        let mut lists = BTreeMap::new();
        for offset in [0u32, 10] {
            lists.insert(1 + offset, vec![Recommendation { item: 3, score: 4.0 }]);
            lists.insert(2 + offset, vec![Recommendation { item: 2, score: 4.0 }]);
            lists.insert(3 + offset, vec![Recommendation { item: 1, score: 4.0 }]);
        }
        let recs = RecommendationList::from_map(lists);
        let mut config = quick_config(Algorithm::UserKnn);
        config.metrics = [MetricKind::BetweenGroupGap, MetricKind::GroupCosine].into_iter().collect();
        let values = compute_iteration_metrics(&log, &recs, &groups, &config, 0).unwrap();
        let get = |m| values.iter().find(|v| v.metric == m).unwrap().value;
        assert_eq!(get(MetricKind::BetweenGroupGap), 0.0);
        assert!((get(MetricKind::GroupCosine) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn delta_gap_is_zero_when_recommendations_match_profile_popularity() {
        let pair = GapPair::new(0.3, 0.3);
        assert_eq!(metrics::delta_gap(pair).unwrap(), 0.0);
    }

    #[test]
    fn delta_gap_recommendations_avoid_the_full_log() {
        let (log, groups) = small_world();
        let config = quick_config(Algorithm::Svd);
        let outcome = run_delta_gap_iteration(&log, &groups, &config, 3).unwrap();
        assert!(!outcome.recommendations.is_empty());
        for (u, i, _) in outcome.recommendations.as_interactions() {
            assert!(!log.contains(u, i));
        }
        assert_eq!(outcome.delta_gap.len(), 2);
        for (label, pair) in &outcome.gaps {
            assert!((0.0..=1.0).contains(&pair.gap_p) && (0.0..=1.0).contains(&pair.gap_r));
            let dg = (pair.gap_r - pair.gap_p) / pair.gap_p;
            assert!((outcome.delta_gap[label] - dg).abs() < 1e-12);
        }
    }

    #[test]
    fn log_grows_by_the_appended_recommendations() {
        let (log0, groups) = small_world();
        let config = quick_config(Algorithm::ItemKnn);
        let mut sizes = Vec::new();
        let series = run_feedback_loop_with(&log0, &groups, &config, |s| {
            sizes.push((s.log_size, s.appended))
        })
        .unwrap();
        let mut expected = log0.len();
        for &(size, appended) in &sizes {
            assert!(appended <= log0.n_users() * config.top_n);
            expected += appended;
            assert_eq!(size, expected);
        }
        // 40 users with at most 60 - 3 * 5 observed items never run dry here.
        assert_eq!(expected, log0.len() + 3 * log0.n_users() * config.top_n);
        assert!(series.warnings.is_empty());
        assert_eq!(series.max_iteration(), 3);
    }

    #[test]
    fn single_iteration_gives_one_record_per_metric_and_group() {
        let (log0, groups) = small_world();
        let mut config = quick_config(Algorithm::Nmf);
        config.iterations = 1;
        let series = run_feedback_loop(&log0, &groups, &config).unwrap();
        assert_eq!(series.len(), 7);
        assert!(series.records().iter().all(|r| r.iteration == 1));
    }

    #[test]
    fn first_iteration_within_group_gini_equals_the_static_value() {
        let (log0, groups) = small_world();
        let mut config = quick_config(Algorithm::UserKnn);
        config.metrics = [MetricKind::WithinGroupGini].into_iter().collect();
        let series = run_feedback_loop(&log0, &groups, &config).unwrap();
        let fixed = metrics::within_group_gini(&log0, &groups).unwrap();
        for (label, value) in fixed {
            assert_eq!(
                series.get(1, MetricKind::WithinGroupGini, &GroupKey::Group(label)),
                Some(value)
            );
        }
    }

    #[test]
    fn replays_are_identical() {
        let (log0, groups) = small_world();
        for algorithm in Algorithm::ALL {
            let config = quick_config(algorithm);
            let a = run_feedback_loop(&log0, &groups, &config).unwrap();
            let b = run_feedback_loop(&log0, &groups, &config).unwrap();
            assert_eq!(a, b, "{algorithm}");
        }
    }

    #[test]
    fn exhausted_users_stay_and_raise_a_warning() {
        // User 1 has seen 3 of 4 items; after one iteration nothing is left.
        let log0 = InteractionLog::from_triples(
            [
                (1, 1, 4.0),
                (1, 2, 3.0),
                (1, 3, 5.0),
                (2, 1, 2.0),
                (2, 4, 4.0),
            ],
            RatingScale::FIVE_STAR,
        )
        .unwrap();
        let mut config = quick_config(Algorithm::UserKnn);
        config.metrics = [MetricKind::GlobalGini].into_iter().collect();
        config.top_n = 2;
        config.iterations = 3;
        let mut appended = Vec::new();
        let series = run_feedback_loop_with(&log0, &GroupAssignment::new(), &config, |s| {
            appended.push(s.appended)
        })
        .unwrap();
        assert_eq!(appended, vec![3, 0, 0]);
        assert_eq!(series.len(), 3);
        assert_eq!(series.warnings[0].users, vec![1]);
        assert_eq!(series.warnings[0].missing, 1);
        assert_eq!(series.warnings[1].users, vec![1, 2]);
    }

    #[test]
    fn missing_group_label_is_rejected_before_training() {
        let (log0, mut groups) = small_world();
        groups = GroupAssignment::from_pairs(groups.iter().skip(1).map(|(u, l)| (u, l.to_owned())))
            .unwrap();
        let config = quick_config(Algorithm::Svd);
        assert!(matches!(
            run_feedback_loop(&log0, &groups, &config),
            Err(Error::MissingGroup(_))
        ));
    }

    #[test]
    fn unknown_group_label_only_matters_for_group_metrics() {
        let (log0, groups) = small_world();
        let mut config = quick_config(Algorithm::UserKnn);
        config.groups = ("M".into(), "X".into());
        config.metrics = [MetricKind::GlobalGini].into_iter().collect();
        assert!(run_feedback_loop(&log0, &groups, &config).is_ok());
        config.metrics.insert(MetricKind::GroupCosine);
        assert!(matches!(
            run_feedback_loop(&log0, &groups, &config),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn failures_inside_the_loop_name_the_iteration() {
        // User 3 has one interaction, so the split in the ΔGAP branch fails.
        let log0 = InteractionLog::from_triples(
            [(1, 1, 4.0), (1, 2, 3.0), (2, 1, 2.0), (2, 3, 4.0), (3, 2, 5.0)],
            RatingScale::FIVE_STAR,
        )
        .unwrap();
        let groups = GroupAssignment::from_pairs([(1, "M"), (2, "F"), (3, "F")]).unwrap();
        let mut config = quick_config(Algorithm::UserKnn);
        config.top_n = 1;
        config.metrics = [MetricKind::DynamicDeltaGap].into_iter().collect();
        let err = run_feedback_loop(&log0, &groups, &config).unwrap_err();
        assert!(matches!(err, Error::Iteration { iteration: 1, .. }), "{err}");
        assert!(matches!(err.root(), Error::ProfileTooSmall { user: 3, .. }));
    }

    #[test]
    fn series_rejects_repeated_keys() {
        let rec = MetricRecord {
            iteration: 1,
            algorithm: "svd".into(),
            dataset: "movielens".into(),
            metric: MetricKind::GlobalGini,
            group: GroupKey::All,
            value: 0.5,
        };
        assert!(MetricSeries::from_records(vec![rec.clone(), rec]).is_err());
    }

    #[test]
    fn config_round_trips_through_json() {
        let config = quick_config(Algorithm::Svd);
        let text = serde_json::to_string(&config).unwrap();
        let back: SimulationConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, config);
    }
}
