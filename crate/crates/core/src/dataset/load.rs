use std::collections::BTreeMap;
use std::path::Path;
#[cfg(test)]
use std::path::PathBuf;

use super::{Catalog, DataError, Gender, Genre, Item, RatingEvent, Ratings, UserId, UserProfile};

fn read(path: &Path) -> Result<Vec<u8>, DataError> {
    std::fs::read(path).map_err(|source| DataError::Io { path: path.to_path_buf(), source })
}

/// Decodes a MovieLens file. Valid UTF-8 is taken as is; anything else is
/// read as Latin-1. Control bytes (other than tab and line breaks) and the
/// unassigned 0x80-0x9F range are rejected.
pub fn decode_text(path: &Path, bytes: &[u8]) -> Result<String, DataError> {
    let utf8 = std::str::from_utf8(bytes).ok();
    let mut line = 1;
    for &b in bytes {
        let control = b < 0x20 && !matches!(b, b'\t' | b'\r' | b'\n');
        let unassigned = utf8.is_none() && (0x80..0xa0).contains(&b);
        if control || unassigned {
            return Err(DataError::Encoding { path: path.to_path_buf(), line, byte: b });
        }
        if b == b'\n' {
            line += 1;
        }
    }
    Ok(match utf8 {
        Some(s) => s.to_owned(),
        None => bytes.iter().map(|&b| b as char).collect(),
    })
}

fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().map(|(i, l)| (i + 1, l.trim_end_matches('\r'))).filter(|(_, l)| !l.trim().is_empty())
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> DataError {
    DataError::Parse { path: path.to_path_buf(), line, msg: msg.into() }
}

fn field<T: std::str::FromStr>(path: &Path, line: usize, name: &str, raw: &str) -> Result<T, DataError> {
    raw.trim().parse().map_err(|_| parse_err(path, line, format!("invalid {name} {raw:?}")))
}

/// Reads `u.data`.
pub fn load_ratings(path: impl AsRef<Path>) -> Result<Ratings, DataError> {
    let path = path.as_ref();
    let text = decode_text(path, &read(path)?)?;
    parse_ratings(path, &text)
}

pub(crate) fn parse_ratings(path: &Path, text: &str) -> Result<Ratings, DataError> {
    let mut events = Vec::new();
    for (n, line) in lines(text) {
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 4 {
            return Err(parse_err(path, n, format!("expected 4 tab-separated fields, found {}", cols.len())));
        }
        let rating: i64 = field(path, n, "rating", cols[2])?;
        if !(1..=5).contains(&rating) {
            return Err(DataError::Validation { path: path.to_path_buf(), line: n, msg: format!("rating {rating} outside [1, 5]") });
        }
        let user_id: UserId = field(path, n, "user id", cols[0])?;
        let item_id = field(path, n, "item id", cols[1])?;
        if user_id == 0 || item_id == 0 {
            return Err(DataError::Validation { path: path.to_path_buf(), line: n, msg: "ids must be positive".into() });
        }
        events.push(RatingEvent { user_id, item_id, rating: rating as u8, timestamp: field(path, n, "timestamp", cols[3])? });
    }
    Ok(Ratings::new(events))
}

/// Year from a trailing `(YYYY)` group in a title, ignoring later
/// parentheticals such as `(V)`.
pub(crate) fn year_from_title(title: &str) -> Option<i32> {
    let mut end = title.len();
    while let Some(open) = title[..end].rfind('(') {
        let close = title[open..].find(')').map(|c| open + c)?;
        let inner = &title[open + 1..close];
        if inner.len() == 4 && inner.bytes().all(|b| b.is_ascii_digit()) {
            return inner.parse().ok();
        }
        end = open;
    }
    None
}

fn year_from_date(date: &str) -> Option<i32> {
    // dd-Mon-yyyy
    let year = date.trim().rsplit('-').next()?;
    if year.len() == 4 {
        year.parse().ok()
    } else {
        None
    }
}

/// Reads `u.item`.
pub fn load_items(path: impl AsRef<Path>) -> Result<Catalog, DataError> {
    let path = path.as_ref();
    let text = decode_text(path, &read(path)?)?;
    parse_items(path, &text)
}

pub(crate) fn parse_items(path: &Path, text: &str) -> Result<Catalog, DataError> {
    let mut items = Vec::new();
    for (n, line) in lines(text) {
        let cols: Vec<&str> = line.split('|').collect();
        if cols.len() != 24 {
            return Err(parse_err(path, n, format!("expected 24 pipe-separated fields, found {}", cols.len())));
        }
        let title = cols[1].trim().to_owned();
        if title.is_empty() {
            return Err(DataError::Validation { path: path.to_path_buf(), line: n, msg: "empty title".into() });
        }
        let mut flags = [false; 19];
        for (slot, raw) in flags.iter_mut().zip(&cols[5..]) {
            *slot = match raw.trim() {
                "0" => false,
                "1" => true,
                other => return Err(parse_err(path, n, format!("genre flag must be 0 or 1, found {other:?}"))),
            };
        }
        if !flags.iter().any(|&f| f) {
            return Err(DataError::Validation { path: path.to_path_buf(), line: n, msg: "no genre flag set".into() });
        }
        let genres = Genre::FLAG_ORDER.iter().zip(&flags[1..]).filter(|(_, &on)| on).map(|(g, _)| *g).collect();
        let release_year = year_from_date(cols[2]).or_else(|| year_from_title(&title));
        items.push(Item { item_id: field(path, n, "item id", cols[0])?, title, release_year, genres });
    }
    Ok(Catalog::new(items))
}

/// Reads `u.user`.
pub fn load_users(path: impl AsRef<Path>) -> Result<BTreeMap<UserId, UserProfile>, DataError> {
    let path = path.as_ref();
    let text = decode_text(path, &read(path)?)?;
    parse_users(path, &text)
}

pub(crate) fn parse_users(path: &Path, text: &str) -> Result<BTreeMap<UserId, UserProfile>, DataError> {
    let mut users = BTreeMap::new();
    for (n, line) in lines(text) {
        let cols: Vec<&str> = line.split('|').collect();
        if cols.len() != 5 {
            return Err(parse_err(path, n, format!("expected 5 pipe-separated fields, found {}", cols.len())));
        }
        let age: u32 = field(path, n, "age", cols[1])?;
        if age == 0 {
            return Err(DataError::Validation { path: path.to_path_buf(), line: n, msg: "age must be positive".into() });
        }
        let gender = match cols[2].trim() {
            "M" => Gender::M,
            "F" => Gender::F,
            other => return Err(parse_err(path, n, format!("gender must be M or F, found {other:?}"))),
        };
        let user_id = field(path, n, "user id", cols[0])?;
        users.insert(
            user_id,
            UserProfile { user_id, age, gender, occupation: cols[3].trim().to_owned(), zip_code: cols[4].trim().to_owned() },
        );
    }
    Ok(users)
}
