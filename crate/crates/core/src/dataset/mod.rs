//! MovieLens-100K entities, loaders, user sampling and train/test splitting.
//!
//! The three raw files are read into immutable in-memory collections:
//!
//! * `u.data`: tab-separated `user \t item \t rating \t timestamp`
//! * `u.item`: pipe-separated `id | title | release_date | video_release_date | url | 19 genre flags`
//! * `u.user`: pipe-separated `id | age | gender | occupation | zip`
//!
//! Bytes that are not valid UTF-8 are decoded as Latin-1, which is how the
//! historical files were written.

mod load;
mod split;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use load::{decode_text, load_items, load_ratings, load_users};
pub use split::{sample_users, split_train_test, DatasetSplit, HoldoutOrder, SplitPolicy};

pub type UserId = u32;
pub type ItemId = u32;

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },
    #[error("{path}:{line}: {msg}")]
    Validation { path: PathBuf, line: usize, msg: String },
    #[error("{path}:{line}: undecodable byte 0x{byte:02x}")]
    Encoding { path: PathBuf, line: usize, byte: u8 },
    #[error("rating references unknown {kind} {id}")]
    DanglingReference { kind: &'static str, id: u32 },
    #[error("density undefined for {n_users} users x {n_items} items")]
    ZeroDenominator { n_users: usize, n_items: usize },
    #[error("cannot sample {requested} users from a population of {population}")]
    SampleTooLarge { requested: usize, population: usize },
    #[error("invalid split policy: {0}")]
    InvalidPolicy(String),
}

/// One explicit rating on the 1-5 star scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RatingEvent {
    pub user_id: UserId,
    pub item_id: ItemId,
    pub rating: u8,
    pub timestamp: i64,
}

/// The 18 named MovieLens genres. The 19th flag ("unknown") is represented
/// by an empty genre set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Genre {
    Action,
    Adventure,
    Animation,
    Children,
    Comedy,
    Crime,
    Documentary,
    Drama,
    Fantasy,
    FilmNoir,
    Horror,
    Musical,
    Mystery,
    Romance,
    SciFi,
    Thriller,
    War,
    Western,
}

impl Genre {
    /// Genre flags in `u.item` column order, after the leading "unknown" flag.
    pub const FLAG_ORDER: [Genre; 18] = [
        Genre::Action,
        Genre::Adventure,
        Genre::Animation,
        Genre::Children,
        Genre::Comedy,
        Genre::Crime,
        Genre::Documentary,
        Genre::Drama,
        Genre::Fantasy,
        Genre::FilmNoir,
        Genre::Horror,
        Genre::Musical,
        Genre::Mystery,
        Genre::Romance,
        Genre::SciFi,
        Genre::Thriller,
        Genre::War,
        Genre::Western,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Genre::Action => "Action",
            Genre::Adventure => "Adventure",
            Genre::Animation => "Animation",
            Genre::Children => "Children's",
            Genre::Comedy => "Comedy",
            Genre::Crime => "Crime",
            Genre::Documentary => "Documentary",
            Genre::Drama => "Drama",
            Genre::Fantasy => "Fantasy",
            Genre::FilmNoir => "Film-Noir",
            Genre::Horror => "Horror",
            Genre::Musical => "Musical",
            Genre::Mystery => "Mystery",
            Genre::Romance => "Romance",
            Genre::SciFi => "Sci-Fi",
            Genre::Thriller => "Thriller",
            Genre::War => "War",
            Genre::Western => "Western",
        }
    }
}

impl fmt::Display for Genre {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Item {
    pub item_id: ItemId,
    /// Catalog title including the year suffix, e.g. `Toy Story (1995)`.
    pub title: String,
    pub release_year: Option<i32>,
    pub genres: Vec<Genre>,
}

impl Item {
    pub fn genre_labels(&self) -> Vec<&'static str> {
        self.genres.iter().map(|g| g.label()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Gender {
    M,
    F,
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Gender::M => "male",
            Gender::F => "female",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserProfile {
    pub user_id: UserId,
    pub age: u32,
    pub gender: Gender,
    pub occupation: String,
    pub zip_code: String,
}

/// Movie catalog keyed by item id.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Catalog {
    items: BTreeMap<ItemId, Item>,
}

impl Catalog {
    pub fn new(items: impl IntoIterator<Item = Item>) -> Self {
        Self { items: items.into_iter().map(|i| (i.item_id, i)).collect() }
    }

    pub fn get(&self, id: ItemId) -> Option<&Item> {
        self.items.get(&id)
    }

    pub fn contains(&self, id: ItemId) -> bool {
        self.items.contains_key(&id)
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Items in ascending id order.
    pub fn iter(&self) -> impl Iterator<Item = &Item> {
        self.items.values()
    }

    pub fn ids(&self) -> impl Iterator<Item = ItemId> + '_ {
        self.items.keys().copied()
    }

    pub fn max_release_year(&self) -> Option<i32> {
        self.items.values().filter_map(|i| i.release_year).max()
    }
}

/// A collection of rating events with cached distinct counts.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Ratings {
    events: Vec<RatingEvent>,
}

impl Ratings {
    pub fn new(events: Vec<RatingEvent>) -> Self {
        Self { events }
    }

    pub fn events(&self) -> &[RatingEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn n_users(&self) -> usize {
        self.events.iter().map(|e| e.user_id).collect::<BTreeSet<_>>().len()
    }

    pub fn n_items(&self) -> usize {
        self.events.iter().map(|e| e.item_id).collect::<BTreeSet<_>>().len()
    }

    pub fn into_events(self) -> Vec<RatingEvent> {
        self.events
    }
}

/// `|events| / (n_users * n_items)`.
pub fn density(n_events: usize, n_users: usize, n_items: usize) -> Result<f64, DataError> {
    if n_users == 0 || n_items == 0 {
        return Err(DataError::ZeroDenominator { n_users, n_items });
    }
    Ok(n_events as f64 / (n_users as f64 * n_items as f64))
}

/// The fully loaded dataset: ratings, catalog and user profiles.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub ratings: Ratings,
    pub catalog: Catalog,
    pub users: BTreeMap<UserId, UserProfile>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub users: usize,
    pub items: usize,
    pub ratings: usize,
    pub density: f64,
}

impl Dataset {
    /// Loads `u.data`, `u.item` and `u.user` from `dir` and checks that every
    /// rating references a loaded user and item.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self, DataError> {
        let dir = dir.as_ref();
        let ratings = load_ratings(dir.join("u.data"))?;
        let catalog = load_items(dir.join("u.item"))?;
        let users = load_users(dir.join("u.user"))?;
        Self::from_parts(ratings, catalog, users)
    }

    pub fn from_parts(ratings: Ratings, catalog: Catalog, users: BTreeMap<UserId, UserProfile>) -> Result<Self, DataError> {
        for e in ratings.events() {
            if !users.contains_key(&e.user_id) {
                return Err(DataError::DanglingReference { kind: "user", id: e.user_id });
            }
            if !catalog.contains(e.item_id) {
                return Err(DataError::DanglingReference { kind: "item", id: e.item_id });
            }
        }
        Ok(Self { ratings, catalog, users })
    }

    pub fn stats(&self) -> DatasetStats {
        let users = self.users.len();
        let items = self.catalog.len();
        DatasetStats { users, items, ratings: self.ratings.len(), density: density(self.ratings.len(), users, items).unwrap_or(0.0) }
    }

    pub fn profile(&self, user: UserId) -> Option<&UserProfile> {
        self.users.get(&user)
    }
}
