use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::Deserialize;

use super::{csv_io, GroupAssignment, Interaction, InteractionLog, ItemId, RatingScale, UserId};
use crate::error::{Error, Result};

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Reads a file as lines, tolerating non-UTF-8 bytes (MovieLens zip codes and
/// titles are Latin-1).
fn lossy_lines(path: &Path) -> Result<Vec<String>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(bytes
        .split(|&b| b == b'\n')
        .map(|l| {
            let l = l.strip_suffix(b"\r").unwrap_or(l);
            String::from_utf8_lossy(l).into_owned()
        })
        .collect())
}

fn field<T: std::str::FromStr>(path: &Path, line: usize, raw: Option<&str>, name: &str) -> Result<T> {
    let raw = raw.ok_or_else(|| parse_err(path, line, format!("missing field {name}")))?;
    raw.trim()
        .parse()
        .map_err(|_| parse_err(path, line, format!("invalid {name}: {raw:?}")))
}

/// Parses MovieLens 1M `ratings.dat` (`UserID::MovieID::Rating::Timestamp`)
/// and `users.dat` (`UserID::Gender::Age::Occupation::Zip`). Timestamps are
/// validated and dropped. Groups are the gender field.
pub fn parse_movielens(
    ratings_path: &Path,
    users_path: &Path,
) -> Result<(InteractionLog, GroupAssignment)> {
    let mut groups = GroupAssignment::new();
    for (n, line) in lossy_lines(users_path)?.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split("::");
        let user: UserId = field(users_path, n + 1, parts.next(), "UserID")?;
        let gender: String = field(users_path, n + 1, parts.next(), "Gender")?;
        if parts.count() != 3 {
            return Err(parse_err(users_path, n + 1, "expected 5 '::'-separated fields"));
        }
        groups
            .insert(user, gender)
            .map_err(|_| parse_err(users_path, n + 1, format!("duplicate user {user}")))?;
    }

    let mut log = InteractionLog::new(RatingScale::FIVE_STAR);
    for (n, line) in lossy_lines(ratings_path)?.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split("::");
        let user: UserId = field(ratings_path, n + 1, parts.next(), "UserID")?;
        let item: ItemId = field(ratings_path, n + 1, parts.next(), "MovieID")?;
        let rating: f64 = field(ratings_path, n + 1, parts.next(), "Rating")?;
        let _timestamp: i64 = field(ratings_path, n + 1, parts.next(), "Timestamp")?;
        if parts.next().is_some() {
            return Err(parse_err(ratings_path, n + 1, "expected 4 '::'-separated fields"));
        }
        log.push(Interaction::new(user, item, rating))
            .map_err(|e| match e {
                Error::DuplicatePair { .. } | Error::RatingOutOfScale { .. } => {
                    parse_err(ratings_path, n + 1, e.to_string())
                }
                other => other,
            })?;
    }
    groups.ensure_covers(&log)?;
    Ok((log, groups))
}

/// Dense-id dictionary for string-keyed datasets. Ids are assigned in
/// first-seen order starting at 0, separately for users and items.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct IdDictionary {
    users: Vec<String>,
    items: Vec<String>,
    user_ids: HashMap<String, UserId>,
    item_ids: HashMap<String, ItemId>,
}

impl IdDictionary {
    pub fn user_id(&self, external: &str) -> Option<UserId> {
        self.user_ids.get(external).copied()
    }

    pub fn item_id(&self, external: &str) -> Option<ItemId> {
        self.item_ids.get(external).copied()
    }

    pub fn user_name(&self, dense: UserId) -> Option<&str> {
        self.users.get(dense as usize).map(String::as_str)
    }

    pub fn item_name(&self, dense: ItemId) -> Option<&str> {
        self.items.get(dense as usize).map(String::as_str)
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    fn intern(names: &mut Vec<String>, ids: &mut HashMap<String, u32>, key: &str) -> u32 {
        if let Some(&id) = ids.get(key) {
            return id;
        }
        let id = names.len() as u32;
        names.push(key.to_owned());
        ids.insert(key.to_owned(), id);
        id
    }

    /// Writes `external_id,dense_id` CSVs for users and items.
    pub fn save(&self, users_path: &Path, items_path: &Path) -> Result<()> {
        for (path, names) in [(users_path, &self.users), (items_path, &self.items)] {
            let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
            w.write_record(["external_id", "dense_id"])
                .map_err(|e| csv_io(path, e))?;
            for (dense, ext) in names.iter().enumerate() {
                w.write_record([ext.as_str(), dense.to_string().as_str()])
                    .map_err(|e| csv_io(path, e))?;
            }
            w.flush().map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    }

    pub fn load(users_path: &Path, items_path: &Path) -> Result<Self> {
        fn read(path: &Path) -> Result<Vec<String>> {
            #[derive(Deserialize)]
            struct Row {
                external_id: String,
                dense_id: u32,
            }
            let mut r = csv::Reader::from_path(path).map_err(|e| csv_io(path, e))?;
            let mut names = Vec::new();
            for (n, row) in r.deserialize::<Row>().enumerate() {
                let row = row.map_err(|e| parse_err(path, n + 2, e.to_string()))?;
                if row.dense_id as usize != names.len() {
                    return Err(parse_err(path, n + 2, "dense ids must be contiguous from 0"));
                }
                names.push(row.external_id);
            }
            Ok(names)
        }
        let users = read(users_path)?;
        let items = read(items_path)?;
        let index = |names: &[String]| {
            names
                .iter()
                .enumerate()
                .map(|(i, n)| (n.clone(), i as u32))
                .collect()
        };
        Ok(IdDictionary {
            user_ids: index(&users),
            item_ids: index(&items),
            users,
            items,
        })
    }
}

#[derive(Deserialize)]
struct YelpReview {
    user_id: String,
    business_id: String,
    stars: f64,
}

/// Parses a Yelp review JSON-lines file. A repeated (user, business) pair
/// keeps the position of its first record and the stars of its last.
pub fn parse_yelp(reviews_path: &Path) -> Result<(InteractionLog, IdDictionary)> {
    let file = fs::File::open(reviews_path).map_err(|e| Error::io(reviews_path, e))?;
    let mut dict = IdDictionary::default();
    let mut rows: Vec<Interaction> = Vec::new();
    let mut position: HashMap<(UserId, ItemId), usize> = HashMap::new();
    let scale = RatingScale::FIVE_STAR;
    for (n, line) in BufReader::new(file).split(b'\n').enumerate() {
        let line = line.map_err(|e| Error::io(reviews_path, e))?;
        let line = String::from_utf8_lossy(&line);
        if line.trim().is_empty() {
            continue;
        }
        let rec: YelpReview = serde_json::from_str(&line)
            .map_err(|e| parse_err(reviews_path, n + 1, e.to_string()))?;
        if !scale.contains(rec.stars) {
            return Err(parse_err(
                reviews_path,
                n + 1,
                format!("stars {} outside [1, 5]", rec.stars),
            ));
        }
        let user = IdDictionary::intern(&mut dict.users, &mut dict.user_ids, &rec.user_id);
        let item = IdDictionary::intern(&mut dict.items, &mut dict.item_ids, &rec.business_id);
        match position.get(&(user, item)) {
            Some(&p) => rows[p].rating = rec.stars,
            None => {
                position.insert((user, item), rows.len());
                rows.push(Interaction::new(user, item, rec.stars));
            }
        }
    }
    Ok((InteractionLog::from_interactions(rows, scale)?, dict))
}

/// Loads a `user_id,group` CSV keyed by numeric user id.
pub fn load_groups(csv_path: &Path) -> Result<GroupAssignment> {
    load_groups_with(csv_path, |raw| raw.trim().parse().ok().map(Some))
}

/// Loads a `user_id,group` CSV, mapping each raw id through `resolve`.
/// `resolve` returns `None` for a malformed id and `Some(None)` for a well-formed
/// id that should be skipped (e.g. an external id filtered out of the data).
pub fn load_groups_with<F>(csv_path: &Path, mut resolve: F) -> Result<GroupAssignment>
where
    F: FnMut(&str) -> Option<Option<UserId>>,
{
    #[derive(Deserialize)]
    struct Row {
        user_id: String,
        group: String,
    }
    let mut r = csv::Reader::from_path(csv_path).map_err(|e| csv_io(csv_path, e))?;
    let headers = r.headers().map_err(|e| csv_io(csv_path, e))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["user_id", "group"] {
        return Err(parse_err(csv_path, 1, "expected header \"user_id,group\""));
    }
    let mut groups = GroupAssignment::new();
    let mut seen = std::collections::HashSet::new();
    for (n, row) in r.deserialize::<Row>().enumerate() {
        let line = n + 2;
        let row = row.map_err(|e| parse_err(csv_path, line, e.to_string()))?;
        if !seen.insert(row.user_id.clone()) {
            return Err(Error::DuplicateGroup(row.user_id));
        }
        match resolve(&row.user_id) {
            None => return Err(parse_err(csv_path, line, format!("invalid user_id {:?}", row.user_id))),
            Some(None) => {}
            Some(Some(user)) => groups.insert(user, row.group)?,
        }
    }
    Ok(groups)
}

/// Writes the canonical `user_id,item_id,rating,iteration_added` CSV.
/// Ratings use the shortest representation that round-trips exactly.
pub fn write_interactions_csv(log: &InteractionLog, path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "user_id,item_id,rating,iteration_added").map_err(io)?;
    for it in log.interactions() {
        writeln!(w, "{},{},{},{}", it.user, it.item, it.rating, it.iteration).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_interactions_csv(path: &Path, scale: RatingScale) -> Result<InteractionLog> {
    #[derive(Deserialize)]
    struct Row {
        user_id: UserId,
        item_id: ItemId,
        rating: f64,
        iteration_added: u32,
    }
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_io(path, e))?;
    let mut log = InteractionLog::new(scale);
    for (n, row) in r.deserialize::<Row>().enumerate() {
        let row = row.map_err(|e| parse_err(path, n + 2, e.to_string()))?;
        log.push(Interaction {
            user: row.user_id,
            item: row.item_id,
            rating: row.rating,
            iteration: row.iteration_added,
        })
        .map_err(|e| parse_err(path, n + 2, e.to_string()))?;
    }
    Ok(log)
}
