use std::collections::HashMap;

use crate::dataset::{InteractionLog, ItemId, UserId};

/// Dense, position-indexed view of a training log. Users and items are
/// numbered in ascending id order; per-user and per-item lists are sorted by
/// position so every accumulation visits entries in a fixed order.
#[derive(Clone, Debug)]
pub(crate) struct TrainingData {
    pub users: Vec<UserId>,
    pub items: Vec<ItemId>,
    pub user_pos: HashMap<UserId, usize>,
    pub item_pos: HashMap<ItemId, usize>,
    /// (user position, item position, rating) in log order.
    pub triples: Vec<(u32, u32, f64)>,
    pub by_user: Vec<Vec<(u32, f64)>>,
    pub by_item: Vec<Vec<(u32, f64)>>,
    pub global_mean: f64,
}

impl TrainingData {
    pub fn from_log(log: &InteractionLog) -> Self {
        let users: Vec<UserId> = log.users().collect();
        let items: Vec<ItemId> = log.items().collect();
        let user_pos: HashMap<UserId, usize> =
            users.iter().enumerate().map(|(p, &u)| (u, p)).collect();
        let item_pos: HashMap<ItemId, usize> =
            items.iter().enumerate().map(|(p, &i)| (i, p)).collect();
        let mut by_user = vec![Vec::new(); users.len()];
        let mut by_item = vec![Vec::new(); items.len()];
        let mut triples = Vec::with_capacity(log.len());
        let mut sum = 0.0;
        for it in log.interactions() {
            let u = user_pos[&it.user] as u32;
            let i = item_pos[&it.item] as u32;
            triples.push((u, i, it.rating));
            by_user[u as usize].push((i, it.rating));
            by_item[i as usize].push((u, it.rating));
            sum += it.rating;
        }
        for list in by_user.iter_mut().chain(by_item.iter_mut()) {
            list.sort_unstable_by_key(|&(p, _)| p);
        }
        let global_mean = if triples.is_empty() {
            0.0
        } else {
            sum / triples.len() as f64
        };
        TrainingData {
            users,
            items,
            user_pos,
            item_pos,
            triples,
            by_user,
            by_item,
            global_mean,
        }
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    /// Rating of user position `u` on item position `i`, if observed.
    pub fn rating(&self, u: usize, i: u32) -> Option<f64> {
        let list = &self.by_user[u];
        list.binary_search_by_key(&i, |&(p, _)| p)
            .ok()
            .map(|idx| list[idx].1)
    }
}
