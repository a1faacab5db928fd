//! MovieLens-style ratings ingestion and implicit-feedback splits.
//!
//! Input records are `UserID::MovieID::Rating::Timestamp` lines (the 1M
//! convention) or the same fields comma-separated. External ids are remapped
//! to dense internal ids in ascending external order, so tower shapes are
//! stable across runs over the same data. Ratings at or above a threshold
//! become implicit positives, then each user's positives are split into
//! train/test by a seeded shuffle.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::DenseVector;

/// One rating record: the atoms of the interaction dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interaction {
    pub user_id: u32,
    pub item_id: u32,
    pub rating: f64,
    pub timestamp: i64,
}

/// Ratings-file field delimiter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RatingsFormat {
    /// `::`-separated fields (MovieLens 1M).
    Ml1m,
    /// Comma-separated, identical field order.
    Csv,
}

impl RatingsFormat {
    fn split_line(self, line: &str) -> Vec<&str> {
        match self {
            RatingsFormat::Ml1m => line.split("::").collect(),
            RatingsFormat::Csv => line.split(',').collect(),
        }
    }
}

/// Output of [`parse_ratings`]: the surviving records plus how many
/// duplicate (user, item) lines were resolved away.
#[derive(Debug, Clone)]
pub struct ParsedRatings {
    pub interactions: Vec<Interaction>,
    pub duplicates_resolved: usize,
}

/// Parses a line-oriented ratings stream.
///
/// Empty lines are skipped. Duplicate (user, item) pairs keep the record
/// with the larger timestamp (later line wins a tie) and are counted in
/// `duplicates_resolved`.
pub fn parse_ratings<R: BufRead>(reader: R, format: RatingsFormat) -> Result<ParsedRatings> {
    let mut interactions: Vec<Interaction> = Vec::new();
    let mut seen: HashMap<(u32, u32), usize> = HashMap::new();
    let mut duplicates = 0usize;

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let fields = format.split_line(trimmed);
        if fields.len() != 4 {
            return Err(Error::Parse {
                line: line_no,
                reason: format!("expected 4 fields, found {}", fields.len()),
            });
        }
        let user_id: u32 = fields[0].trim().parse().map_err(|_| Error::Parse {
            line: line_no,
            reason: format!("invalid user id {:?}", fields[0]),
        })?;
        let item_id: u32 = fields[1].trim().parse().map_err(|_| Error::Parse {
            line: line_no,
            reason: format!("invalid item id {:?}", fields[1]),
        })?;
        if user_id < 1 || item_id < 1 {
            return Err(Error::Parse {
                line: line_no,
                reason: "ids must be >= 1".into(),
            });
        }
        let rating: f64 = fields[2].trim().parse().map_err(|_| Error::Parse {
            line: line_no,
            reason: format!("invalid rating {:?}", fields[2]),
        })?;
        if !(1.0..=5.0).contains(&rating) {
            return Err(Error::Parse {
                line: line_no,
                reason: "rating out of range".into(),
            });
        }
        let timestamp: i64 = fields[3].trim().parse().map_err(|_| Error::Parse {
            line: line_no,
            reason: format!("invalid timestamp {:?}", fields[3]),
        })?;

        let record = Interaction {
            user_id,
            item_id,
            rating,
            timestamp,
        };
        match seen.entry((user_id, item_id)) {
            std::collections::hash_map::Entry::Occupied(slot) => {
                duplicates += 1;
                let existing = &mut interactions[*slot.get()];
                if record.timestamp >= existing.timestamp {
                    *existing = record;
                }
            }
            std::collections::hash_map::Entry::Vacant(slot) => {
                slot.insert(interactions.len());
                interactions.push(record);
            }
        }
    }

    Ok(ParsedRatings {
        interactions,
        duplicates_resolved: duplicates,
    })
}

/// Interactions plus dense id remaps. `user_ids[internal] == external`,
/// ascending; `user_index` is the inverse.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub interactions: Vec<Interaction>,
    user_ids: Vec<u32>,
    item_ids: Vec<u32>,
    user_index: HashMap<u32, usize>,
    item_index: HashMap<u32, usize>,
}

impl Dataset {
    pub fn n_users(&self) -> usize {
        self.user_ids.len()
    }

    pub fn n_items(&self) -> usize {
        self.item_ids.len()
    }

    pub fn user_internal(&self, external: u32) -> Option<usize> {
        self.user_index.get(&external).copied()
    }

    pub fn item_internal(&self, external: u32) -> Option<usize> {
        self.item_index.get(&external).copied()
    }

    pub fn user_external(&self, internal: usize) -> u32 {
        self.user_ids[internal]
    }

    pub fn item_external(&self, internal: usize) -> u32 {
        self.item_ids[internal]
    }

    pub fn feature_spec(&self) -> FeatureSpec {
        FeatureSpec {
            mode: FeatureMode::OneHotId,
            user_dim: self.n_users(),
            item_dim: self.n_items(),
        }
    }
}

/// Assigns contiguous internal ids in ascending external-id order.
pub fn build_dataset(interactions: Vec<Interaction>) -> Result<Dataset> {
    if interactions.is_empty() {
        return Err(Error::InvalidConfig {
            key: "interactions",
            reason: "dataset must be nonempty".into(),
        });
    }
    let mut user_ids: Vec<u32> = interactions.iter().map(|i| i.user_id).collect();
    let mut item_ids: Vec<u32> = interactions.iter().map(|i| i.item_id).collect();
    user_ids.sort_unstable();
    user_ids.dedup();
    item_ids.sort_unstable();
    item_ids.dedup();
    let user_index = user_ids
        .iter()
        .enumerate()
        .map(|(i, &id)| (id, i))
        .collect();
    let item_index = item_ids
        .iter()
        .enumerate()
        .map(|(i, &id)| (id, i))
        .collect();
    Ok(Dataset {
        interactions,
        user_ids,
        item_ids,
        user_index,
        item_index,
    })
}

/// Per-user sorted sets of internal item ids rated at or above `threshold`.
pub fn binarize(ds: &Dataset, threshold: f64) -> Vec<Vec<usize>> {
    let mut positives = vec![Vec::new(); ds.n_users()];
    for rec in &ds.interactions {
        if rec.rating >= threshold {
            let u = ds.user_index[&rec.user_id];
            let i = ds.item_index[&rec.item_id];
            positives[u].push(i);
        }
    }
    for items in &mut positives {
        items.sort_unstable();
    }
    positives
}

/// Per-user train/test positives. Within each user the two sides are
/// disjoint and their union is the user's positive set; every test user kept
/// at least one train positive.
#[derive(Debug, Clone, PartialEq)]
pub struct ImplicitSplit {
    pub train: Vec<Vec<usize>>,
    pub test: Vec<Vec<usize>>,
    pub n_items: usize,
    pub threshold: f64,
    pub seed: u64,
}

impl ImplicitSplit {
    pub fn n_users(&self) -> usize {
        self.train.len()
    }

    pub fn train_pair_count(&self) -> usize {
        self.train.iter().map(Vec::len).sum()
    }

    pub fn test_pair_count(&self) -> usize {
        self.test.iter().map(Vec::len).sum()
    }
}

/// Splits each user's positives into train/test by a seeded shuffle.
///
/// `ratio` is the train fraction. A user with fewer than two positives goes
/// entirely to train; otherwise the user keeps `max(1, floor(ratio * n))`
/// train positives and the rest are held out.
pub fn split_train_test(
    positives: &[Vec<usize>],
    n_items: usize,
    threshold: f64,
    ratio: f64,
    seed: u64,
) -> Result<ImplicitSplit> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidConfig {
            key: "train_ratio",
            reason: format!("must be in (0,1), got {ratio}"),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::with_capacity(positives.len());
    let mut test = Vec::with_capacity(positives.len());
    for items in positives {
        if items.len() < 2 {
            train.push(items.clone());
            test.push(Vec::new());
            continue;
        }
        let mut shuffled = items.clone();
        shuffled.shuffle(&mut rng);
        let n_train = ((ratio * items.len() as f64).floor() as usize).max(1);
        let (tr, te) = shuffled.split_at(n_train);
        let mut tr = tr.to_vec();
        let mut te = te.to_vec();
        tr.sort_unstable();
        te.sort_unstable();
        train.push(tr);
        test.push(te);
    }
    Ok(ImplicitSplit {
        train,
        test,
        n_items,
        threshold,
        seed,
    })
}

/// Input feature layout for the towers: one-hot over internal ids, so the
/// user tower input dim is N and the item tower input dim is M.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub mode: FeatureMode,
    pub user_dim: usize,
    pub item_dim: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMode {
    OneHotId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    User,
    Item,
}

/// One-hot feature vector for an internal id.
pub fn feature_vector(spec: &FeatureSpec, internal_id: usize, side: Side) -> Result<DenseVector> {
    let (dim, what) = match side {
        Side::User => (spec.user_dim, "user"),
        Side::Item => (spec.item_dim, "item"),
    };
    if internal_id >= dim {
        return Err(Error::IdOutOfRange {
            what,
            id: internal_id,
            bound: dim,
        });
    }
    DenseVector::one_hot(dim, internal_id)
}

/// Writes the split as `user<TAB>item<TAB>{train|test}` lines with external
/// ids, ordered by internal user id, train side first within each user.
pub fn write_manifest<W: Write>(w: &mut W, ds: &Dataset, split: &ImplicitSplit) -> Result<()> {
    for u in 0..split.n_users() {
        let user_ext = ds.user_external(u);
        for &i in &split.train[u] {
            writeln!(w, "{}\t{}\ttrain", user_ext, ds.item_external(i))?;
        }
        for &i in &split.test[u] {
            writeln!(w, "{}\t{}\ttest", user_ext, ds.item_external(i))?;
        }
    }
    Ok(())
}

/// Reads a split manifest back against the dataset it was prepared from.
///
/// `threshold` and `seed` are carried from the caller's configuration; the
/// manifest itself stores only pair assignments.
pub fn read_manifest<R: BufRead>(
    reader: R,
    ds: &Dataset,
    threshold: f64,
    seed: u64,
) -> Result<ImplicitSplit> {
    let mut train = vec![Vec::new(); ds.n_users()];
    let mut test = vec![Vec::new(); ds.n_users()];
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let fields: Vec<&str> = trimmed.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                line: line_no,
                reason: format!("expected 3 tab-separated fields, found {}", fields.len()),
            });
        }
        let user_ext: u32 = fields[0].parse().map_err(|_| Error::Parse {
            line: line_no,
            reason: format!("invalid user id {:?}", fields[0]),
        })?;
        let item_ext: u32 = fields[1].parse().map_err(|_| Error::Parse {
            line: line_no,
            reason: format!("invalid item id {:?}", fields[1]),
        })?;
        let u = ds.user_internal(user_ext).ok_or_else(|| {
            Error::ManifestMismatch(format!("user {user_ext} not in ratings file"))
        })?;
        let i = ds.item_internal(item_ext).ok_or_else(|| {
            Error::ManifestMismatch(format!("item {item_ext} not in ratings file"))
        })?;
        match fields[2] {
            "train" => train[u].push(i),
            "test" => test[u].push(i),
            other => {
                return Err(Error::Parse {
                    line: line_no,
                    reason: format!("expected train or test, found {other:?}"),
                })
            }
        }
    }
    for items in train.iter_mut().chain(test.iter_mut()) {
        items.sort_unstable();
        let before = items.len();
        items.dedup();
        if items.len() != before {
            return Err(Error::ManifestMismatch("duplicate pair in manifest".into()));
        }
    }
    for u in 0..ds.n_users() {
        if !test[u].is_empty() && train[u].is_empty() {
            return Err(Error::ManifestMismatch(format!(
                "user {} has test positives but no train positives",
                ds.user_external(u)
            )));
        }
        if train[u].iter().any(|i| test[u].binary_search(i).is_ok()) {
            return Err(Error::ManifestMismatch(format!(
                "user {} has overlapping train/test items",
                ds.user_external(u)
            )));
        }
    }
    Ok(ImplicitSplit {
        train,
        test,
        n_items: ds.n_items(),
        threshold,
        seed,
    })
}
