//! Interaction data: the append-only log the feedback loop grows, group
//! labels for sensitive attributes, parsers and preprocessing.

mod parse;
mod preprocess;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use parse::{
    load_groups, load_groups_with, parse_movielens, parse_yelp, read_interactions_csv,
    write_interactions_csv, IdDictionary,
};
pub use preprocess::{density, k_core_filter, sample_users, split_train_test};

pub type UserId = u32;
pub type ItemId = u32;

/// One observed (or simulated) rating. `iteration` is 0 for original data
/// and `t` for rows appended by feedback iteration `t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interaction {
    pub user: UserId,
    pub item: ItemId,
    pub rating: f64,
    pub iteration: u32,
}

impl Interaction {
    pub fn new(user: UserId, item: ItemId, rating: f64) -> Self {
        Interaction {
            user,
            item,
            rating,
            iteration: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatingScale {
    pub min: f64,
    pub max: f64,
}

impl RatingScale {
    pub const FIVE_STAR: RatingScale = RatingScale { min: 1.0, max: 5.0 };

    pub fn new(min: f64, max: f64) -> Result<Self> {
        if !(min.is_finite() && max.is_finite() && min < max) {
            return Err(Error::InvalidArgument(format!(
                "rating scale [{min}, {max}] is not a finite non-empty interval"
            )));
        }
        Ok(RatingScale { min, max })
    }

    pub fn contains(&self, rating: f64) -> bool {
        rating >= self.min && rating <= self.max
    }

    pub fn clamp(&self, rating: f64) -> f64 {
        rating.clamp(self.min, self.max)
    }

    fn check(&self, rating: f64) -> Result<()> {
        if self.contains(rating) {
            Ok(())
        } else {
            Err(Error::RatingOutOfScale {
                rating,
                min: self.min,
                max: self.max,
            })
        }
    }
}

impl Default for RatingScale {
    fn default() -> Self {
        RatingScale::FIVE_STAR
    }
}

/// The set of unique (user, item, rating) triples, with per-user and per-item
/// indexes. A (user, item) pair appears at most once.
#[derive(Clone, Debug)]
pub struct InteractionLog {
    interactions: Vec<Interaction>,
    scale: RatingScale,
    by_user: BTreeMap<UserId, Vec<usize>>,
    by_item: BTreeMap<ItemId, Vec<usize>>,
    pairs: HashSet<(UserId, ItemId)>,
}

impl InteractionLog {
    pub fn new(scale: RatingScale) -> Self {
        InteractionLog {
            interactions: Vec::new(),
            scale,
            by_user: BTreeMap::new(),
            by_item: BTreeMap::new(),
            pairs: HashSet::new(),
        }
    }

    /// Builds a log, rejecting duplicate pairs and out-of-scale ratings.
    pub fn from_interactions<I>(interactions: I, scale: RatingScale) -> Result<Self>
    where
        I: IntoIterator<Item = Interaction>,
    {
        let mut log = InteractionLog::new(scale);
        for it in interactions {
            log.push(it)?;
        }
        Ok(log)
    }

    /// Convenience constructor from `(user, item, rating)` triples at iteration 0.
    pub fn from_triples<I>(triples: I, scale: RatingScale) -> Result<Self>
    where
        I: IntoIterator<Item = (UserId, ItemId, f64)>,
    {
        Self::from_interactions(
            triples
                .into_iter()
                .map(|(u, i, r)| Interaction::new(u, i, r)),
            scale,
        )
    }

    fn push(&mut self, it: Interaction) -> Result<()> {
        self.scale.check(it.rating)?;
        if !self.pairs.insert((it.user, it.item)) {
            return Err(Error::DuplicatePair {
                user: it.user,
                item: it.item,
            });
        }
        let idx = self.interactions.len();
        self.by_user.entry(it.user).or_default().push(idx);
        self.by_item.entry(it.item).or_default().push(idx);
        self.interactions.push(it);
        Ok(())
    }

    /// Appends simulated interactions tagged with `iteration`. All-or-nothing:
    /// if any pair already exists (or repeats within `new`) nothing is added.
    pub fn append_interactions(
        &mut self,
        new: &[(UserId, ItemId, f64)],
        iteration: u32,
    ) -> Result<usize> {
        if iteration < self.current_iteration() {
            return Err(Error::InvalidArgument(format!(
                "cannot append at iteration {iteration}: log already holds iteration {}",
                self.current_iteration()
            )));
        }
        let mut seen = HashSet::with_capacity(new.len());
        for &(user, item, rating) in new {
            if self.pairs.contains(&(user, item)) || !seen.insert((user, item)) {
                return Err(Error::DuplicatePair { user, item });
            }
            self.scale.check(rating)?;
        }
        for &(user, item, rating) in new {
            self.push(Interaction {
                user,
                item,
                rating,
                iteration,
            })?;
        }
        Ok(new.len())
    }

    pub fn len(&self) -> usize {
        self.interactions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.interactions.is_empty()
    }

    pub fn scale(&self) -> RatingScale {
        self.scale
    }

    pub fn interactions(&self) -> &[Interaction] {
        &self.interactions
    }

    /// Highest `iteration` tag in the log (0 for original data only).
    pub fn current_iteration(&self) -> u32 {
        self.interactions
            .iter()
            .map(|it| it.iteration)
            .max()
            .unwrap_or(0)
    }

    pub fn n_users(&self) -> usize {
        self.by_user.len()
    }

    pub fn n_items(&self) -> usize {
        self.by_item.len()
    }

    /// Users in ascending id order.
    pub fn users(&self) -> impl Iterator<Item = UserId> + '_ {
        self.by_user.keys().copied()
    }

    /// Items in ascending id order.
    pub fn items(&self) -> impl Iterator<Item = ItemId> + '_ {
        self.by_item.keys().copied()
    }

    pub fn contains(&self, user: UserId, item: ItemId) -> bool {
        self.pairs.contains(&(user, item))
    }

    pub fn has_user(&self, user: UserId) -> bool {
        self.by_user.contains_key(&user)
    }

    /// The profile `p_u`: interactions of `user` in insertion order.
    pub fn profile(&self, user: UserId) -> impl Iterator<Item = &Interaction> + '_ {
        self.by_user
            .get(&user)
            .into_iter()
            .flatten()
            .map(move |&i| &self.interactions[i])
    }

    pub fn profile_len(&self, user: UserId) -> usize {
        self.by_user.get(&user).map_or(0, Vec::len)
    }

    /// Interactions on `item` in insertion order.
    pub fn raters(&self, item: ItemId) -> impl Iterator<Item = &Interaction> + '_ {
        self.by_item
            .get(&item)
            .into_iter()
            .flatten()
            .map(move |&i| &self.interactions[i])
    }

    pub fn item_degree(&self, item: ItemId) -> usize {
        self.by_item.get(&item).map_or(0, Vec::len)
    }

    /// Item lists per user, ascending by user id.
    pub fn profiles(&self) -> BTreeMap<UserId, Vec<ItemId>> {
        self.by_user
            .iter()
            .map(|(&u, idx)| (u, idx.iter().map(|&i| self.interactions[i].item).collect()))
            .collect()
    }

    /// Keeps interactions for which `keep` returns true, preserving order.
    pub fn filter<F>(&self, mut keep: F) -> InteractionLog
    where
        F: FnMut(&Interaction) -> bool,
    {
        let mut out = InteractionLog::new(self.scale);
        for it in self.interactions.iter().filter(|it| keep(it)) {
            // Pairs are already unique and in scale.
            out.push(*it).expect("sub-log of a valid log is valid");
        }
        out
    }

    pub fn restrict_to_users(&self, users: &HashSet<UserId>) -> InteractionLog {
        self.filter(|it| users.contains(&it.user))
    }

    /// SHA-256 over the canonical row encoding; equal logs hash equal.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(format!("{},{}\n", self.scale.min, self.scale.max).as_bytes());
        for it in &self.interactions {
            hasher.update(
                format!("{},{},{},{}\n", it.user, it.item, it.rating, it.iteration).as_bytes(),
            );
        }
        hex::encode(hasher.finalize())
    }
}

impl PartialEq for InteractionLog {
    fn eq(&self, other: &Self) -> bool {
        self.scale == other.scale && self.interactions == other.interactions
    }
}

/// Sensitive-group label per user (e.g. "M" / "F").
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupAssignment {
    labels: BTreeMap<UserId, String>,
}

impl GroupAssignment {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds from pairs; a user listed twice is an error.
    pub fn from_pairs<I, S>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (UserId, S)>,
        S: Into<String>,
    {
        let mut groups = GroupAssignment::new();
        for (user, label) in pairs {
            groups.insert(user, label)?;
        }
        Ok(groups)
    }

    pub fn insert(&mut self, user: UserId, label: impl Into<String>) -> Result<()> {
        if self.labels.insert(user, label.into()).is_some() {
            return Err(Error::DuplicateGroup(user.to_string()));
        }
        Ok(())
    }

    pub fn label(&self, user: UserId) -> Option<&str> {
        self.labels.get(&user).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (UserId, &str)> + '_ {
        self.labels.iter().map(|(&u, l)| (u, l.as_str()))
    }

    /// Distinct labels, sorted.
    pub fn labels(&self) -> BTreeSet<&str> {
        self.labels.values().map(String::as_str).collect()
    }

    pub fn users_in(&self, label: &str) -> HashSet<UserId> {
        self.labels
            .iter()
            .filter(|(_, l)| l.as_str() == label)
            .map(|(&u, _)| u)
            .collect()
    }

    /// Errors with the first log user that has no label.
    pub fn ensure_covers(&self, log: &InteractionLog) -> Result<()> {
        match log.users().find(|u| !self.labels.contains_key(u)) {
            Some(u) => Err(Error::MissingGroup(u)),
            None => Ok(()),
        }
    }

    /// Keeps only labels of users present in `log`.
    pub fn restricted_to(&self, log: &InteractionLog) -> GroupAssignment {
        GroupAssignment {
            labels: self
                .labels
                .iter()
                .filter(|(u, _)| log.has_user(**u))
                .map(|(&u, l)| (u, l.clone()))
                .collect(),
        }
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
        w.write_record(["user_id", "group"])
            .map_err(|e| csv_io(path, e))?;
        for (u, l) in &self.labels {
            w.write_record([u.to_string().as_str(), l.as_str()])
                .map_err(|e| csv_io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

impl fmt::Display for GroupAssignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sizes: Vec<String> = self
            .labels()
            .into_iter()
            .map(|l| format!("{l}={}", self.users_in(l).len()))
            .collect();
        write!(f, "{}", sizes.join(", "))
    }
}

pub(crate) fn csv_io(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: format!("{other:?}"),
        },
    }
}
