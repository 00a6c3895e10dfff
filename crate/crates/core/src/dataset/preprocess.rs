use std::collections::{HashMap, HashSet};

use rand::seq::{index, SliceRandom};

use super::{InteractionLog, ItemId, UserId};
use crate::error::{Error, Result};
use crate::rng;

/// Iteratively drops users and items with fewer than `k` interactions until
/// every survivor has at least `k`. The result is the maximal such sub-log.
pub fn k_core_filter(log: &InteractionLog, k: usize) -> InteractionLog {
    let k = k.max(1);
    let mut alive = vec![true; log.len()];
    let mut user_deg: HashMap<UserId, usize> = log.users().map(|u| (u, log.profile_len(u))).collect();
    let mut item_deg: HashMap<ItemId, usize> = log.items().map(|i| (i, log.item_degree(i))).collect();
    loop {
        let mut changed = false;
        for (idx, it) in log.interactions().iter().enumerate() {
            if alive[idx] && (user_deg[&it.user] < k || item_deg[&it.item] < k) {
                alive[idx] = false;
                changed = true;
                *user_deg.get_mut(&it.user).unwrap() -= 1;
                *item_deg.get_mut(&it.item).unwrap() -= 1;
            }
        }
        if !changed {
            break;
        }
    }
    let mut idx = 0;
    log.filter(|_| {
        idx += 1;
        alive[idx - 1]
    })
}

/// Uniformly samples `min(n, N_U)` users without replacement and keeps all of
/// their interactions.
pub fn sample_users(log: &InteractionLog, n: usize, seed: u64) -> InteractionLog {
    let users: Vec<UserId> = log.users().collect();
    if n >= users.len() {
        return log.clone();
    }
    let mut rng = rng::seeded(seed);
    let chosen: HashSet<UserId> = index::sample(&mut rng, users.len(), n)
        .into_iter()
        .map(|i| users[i])
        .collect();
    log.restrict_to_users(&chosen)
}

/// Observed interactions over `N_U × n`.
pub fn density(log: &InteractionLog) -> Result<f64> {
    if log.is_empty() {
        return Err(Error::Empty("interaction log"));
    }
    Ok(log.len() as f64 / (log.n_users() as f64 * log.n_items() as f64))
}

/// Number of test interactions for a profile of `len` under `fraction`:
/// `ceil(fraction * len)`, capped so one training interaction remains.
pub(crate) fn test_count(fraction: f64, len: usize) -> usize {
    // The epsilon keeps products like 0.2 * 15 = 3.0000000000000004 at 3.
    let raw = (fraction * len as f64 - 1e-9).ceil().max(0.0) as usize;
    raw.min(len.saturating_sub(1))
}

/// Per-user random split: each user contributes `ceil(fraction * |p_u|)`
/// interactions to the test log and keeps the rest (at least one) for
/// training. Interaction order within each output follows the input.
pub fn split_train_test(
    log: &InteractionLog,
    test_fraction: f64,
    seed: u64,
) -> Result<(InteractionLog, InteractionLog)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "test fraction {test_fraction} not in (0, 1)"
        )));
    }
    let mut rng = rng::seeded(seed);
    let mut in_test: HashSet<(UserId, ItemId)> = HashSet::new();
    for user in log.users() {
        let mut items: Vec<ItemId> = log.profile(user).map(|it| it.item).collect();
        if items.len() < 2 {
            return Err(Error::ProfileTooSmall {
                user,
                count: items.len(),
            });
        }
        items.shuffle(&mut rng);
        let n_test = test_count(test_fraction, items.len());
        in_test.extend(items[..n_test].iter().map(|&i| (user, i)));
    }
    let train = log.filter(|it| !in_test.contains(&(it.user, it.item)));
    let test = log.filter(|it| in_test.contains(&(it.user, it.item)));
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::RatingScale;
    use proptest::prelude::*;

    fn log(triples: &[(u32, u32, f64)]) -> InteractionLog {
        InteractionLog::from_triples(triples.iter().copied(), RatingScale::FIVE_STAR).unwrap()
    }

    fn full_grid(users: u32, items: u32) -> InteractionLog {
        InteractionLog::from_triples(
            (0..users).flat_map(|u| (0..items).map(move |i| (u, i, 1.0 + ((u + i) % 5) as f64))),
            RatingScale::FIVE_STAR,
        )
        .unwrap()
    }

    #[test]
    fn k_core_already_satisfied_is_unchanged() {
        let l = full_grid(4, 3);
        assert_eq!(k_core_filter(&l, 3), l);
    }

    #[test]
    fn k_core_cascade_empties_log() {
        // Item 9 has two raters but each user has one interaction.
        let l = log(&[(1, 9, 4.0), (2, 9, 5.0)]);
        assert!(k_core_filter(&l, 2).is_empty());
    }

    #[test]
    fn k_core_one_is_identity() {
        let l = log(&[(1, 9, 4.0), (2, 8, 5.0), (2, 9, 1.0)]);
        assert_eq!(k_core_filter(&l, 1), l);
    }

    #[test]
    fn k_core_cascade_partial() {
        // User 3 only rates item 7; dropping item 7 (1 rater) leaves user 3 empty.
        let mut triples = vec![];
        for u in 0..3 {
            for i in 0..3 {
                triples.push((u, i, 3.0));
            }
        }
        triples.push((3, 7, 2.0));
        triples.push((3, 0, 2.0));
        let out = k_core_filter(&log(&triples), 3);
        assert_eq!(out.n_users(), 3);
        assert_eq!(out.n_items(), 3);
        assert!(!out.has_user(3));
    }

    #[test]
    fn sample_more_than_available_returns_all() {
        let l = full_grid(5, 2);
        assert_eq!(sample_users(&l, 5, 1), l);
        assert_eq!(sample_users(&l, 50, 1), l);
    }

    #[test]
    fn sample_is_deterministic_and_sized() {
        let l = full_grid(100, 3);
        let a = sample_users(&l, 10, 99);
        let b = sample_users(&l, 10, 99);
        assert_eq!(a, b);
        assert_eq!(a.n_users(), 10);
        assert_eq!(a.len(), 30);
        let c = sample_users(&l, 10, 100);
        assert_ne!(a.users().collect::<Vec<_>>(), c.users().collect::<Vec<_>>());
    }

    #[test]
    fn density_examples() {
        assert_eq!(density(&full_grid(3, 4)).unwrap(), 1.0);
        // 2 users x 2 items with one interaction needs both users and items
        // present; a log only knows entities that appear in it.
        let l = log(&[(1, 1, 3.0), (2, 2, 3.0)]);
        assert_eq!(density(&l).unwrap(), 0.5);
        assert!(density(&InteractionLog::new(RatingScale::FIVE_STAR)).is_err());
        let ratio: f64 = 161_934.0 / (1_000.0 * 3_214.0);
        assert!((ratio - 0.0504).abs() < 1e-4);
    }

    #[test]
    fn test_count_rule() {
        assert_eq!(test_count(0.2, 10), 2);
        assert_eq!(test_count(0.2, 3), 1);
        assert_eq!(test_count(0.2, 15), 3);
        assert_eq!(test_count(0.2, 2), 1);
        assert_eq!(test_count(0.9, 2), 1);
    }

    #[test]
    fn split_sizes_and_determinism() {
        let l = full_grid(3, 10);
        let (train, test) = split_train_test(&l, 0.2, 5).unwrap();
        for u in 0..3 {
            assert_eq!(test.profile_len(u), 2);
            assert_eq!(train.profile_len(u), 8);
        }
        let again = split_train_test(&l, 0.2, 5).unwrap();
        assert_eq!(again.0, train);
        assert_eq!(again.1, test);
    }

    #[test]
    fn split_three_interactions() {
        let l = log(&[(1, 1, 3.0), (1, 2, 3.0), (1, 3, 3.0)]);
        let (train, test) = split_train_test(&l, 0.2, 0).unwrap();
        assert_eq!(test.len(), 1);
        assert_eq!(train.len(), 2);
    }

    #[test]
    fn split_rejects_single_interaction_user() {
        let l = log(&[(1, 1, 3.0), (1, 2, 3.0), (2, 1, 3.0)]);
        assert!(matches!(
            split_train_test(&l, 0.2, 0).unwrap_err(),
            Error::ProfileTooSmall { user: 2, count: 1 }
        ));
    }

    fn arb_log() -> impl Strategy<Value = InteractionLog> {
        prop::collection::hash_set((0u32..25, 0u32..25), 0..250).prop_map(|pairs| {
            let mut pairs: Vec<_> = pairs.into_iter().collect();
            pairs.sort();
            InteractionLog::from_triples(
                pairs.into_iter().map(|(u, i)| (u, i, 1.0 + ((u * 7 + i) % 5) as f64)),
                RatingScale::FIVE_STAR,
            )
            .unwrap()
        })
    }

    proptest! {
        #[test]
        fn k_core_sound_and_idempotent(l in arb_log(), k in 1usize..6) {
            let once = k_core_filter(&l, k);
            for u in once.users() {
                prop_assert!(once.profile_len(u) >= k);
            }
            for i in once.items() {
                prop_assert!(once.item_degree(i) >= k);
            }
            prop_assert_eq!(k_core_filter(&once, k), once.clone());
            // Maximality: nothing outside the core can be added back.
            prop_assert!(once.interactions().iter().all(|it| l.contains(it.user, it.item)));
        }

        #[test]
        fn split_partitions(l in arb_log(), fraction in 0.05f64..0.5, seed in any::<u64>()) {
            let l = k_core_filter(&l, 2);
            let (train, test) = split_train_test(&l, fraction, seed).unwrap();
            prop_assert_eq!(train.len() + test.len(), l.len());
            for it in l.interactions() {
                prop_assert!(train.contains(it.user, it.item) != test.contains(it.user, it.item));
            }
            for u in l.users() {
                prop_assert_eq!(test.profile_len(u), test_count(fraction, l.profile_len(u)));
                prop_assert!(train.profile_len(u) >= 1);
            }
        }

        #[test]
        fn random_op_sequences_keep_pairs_unique(
            l in arb_log(),
            ops in prop::collection::vec((0u8..4, any::<u64>()), 1..8),
        ) {
            let mut cur = l;
            let mut iteration = 0;
            for (op, seed) in ops {
                cur = match op {
                    0 => k_core_filter(&cur, 1 + (seed % 3) as usize),
                    1 => sample_users(&cur, 1 + (seed % 20) as usize, seed),
                    2 => {
                        iteration += 1;
                        let fresh: Vec<_> = (0..5u32)
                            .map(|j| (30 + (seed % 7) as u32, 100 + j, 3.0))
                            .filter(|&(u, i, _)| !cur.contains(u, i))
                            .collect();
                        cur.append_interactions(&fresh, iteration).unwrap();
                        cur
                    }
                    _ => match split_train_test(&k_core_filter(&cur, 2), 0.3, seed) {
                        Ok((train, _)) => train,
                        Err(_) => cur,
                    },
                };
                let mut seen = HashSet::new();
                for it in cur.interactions() {
                    prop_assert!(seen.insert((it.user, it.item)));
                }
            }
        }
    }
}
