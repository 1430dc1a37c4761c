use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use super::{HaloError, PageMap};

type Key = (String, u32, u32);

/// Append-only JSON-lines file of [`PageMap`] records.
///
/// Each update appends the full record; on load the last record per
/// `(chip_id, block, page)` wins. [`MapStore::compact`] rewrites the file
/// with one line per key.
#[derive(Debug)]
pub struct MapStore {
    path: Option<PathBuf>,
    maps: BTreeMap<Key, PageMap>,
    lines: usize,
}

fn key(m: &PageMap) -> Key {
    (m.chip_id.clone(), m.block, m.page)
}

impl MapStore {
    /// A store with no backing file.
    pub fn in_memory() -> Self {
        Self {
            path: None,
            maps: BTreeMap::new(),
            lines: 0,
        }
    }

    /// Opens (or creates on first write) the store at `path`.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, HaloError> {
        let path = path.as_ref().to_path_buf();
        let mut store = Self {
            path: Some(path.clone()),
            maps: BTreeMap::new(),
            lines: 0,
        };
        let file = match File::open(&path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(store),
            Err(e) => return Err(e.into()),
        };
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let map: PageMap = serde_json::from_str(&line)
                .map_err(|e| HaloError::Store(format!("{}:{}: {e}", path.display(), n + 1)))?;
            map.validate()?;
            store.lines += 1;
            store.maps.insert(key(&map), map);
        }
        Ok(store)
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }

    /// Records on disk, including superseded ones.
    pub fn line_count(&self) -> usize {
        self.lines
    }

    pub fn get(&self, chip_id: &str, block: u32, page: u32) -> Option<&PageMap> {
        self.maps.get(&(chip_id.to_string(), block, page))
    }

    pub fn maps(&self) -> impl Iterator<Item = &PageMap> {
        self.maps.values()
    }

    pub fn maps_for<'a>(&'a self, chip_id: &'a str) -> impl Iterator<Item = &'a PageMap> + 'a {
        self.maps.values().filter(move |m| m.chip_id == chip_id)
    }

    /// Stores a new or updated map, appending it to the file.
    pub fn put(&mut self, map: PageMap) -> Result<(), HaloError> {
        self.put_all(std::iter::once(map))
    }

    /// Stores several maps with a single append.
    pub fn put_all(&mut self, maps: impl IntoIterator<Item = PageMap>) -> Result<(), HaloError> {
        let maps: Vec<PageMap> = maps.into_iter().collect();
        for m in &maps {
            m.validate()?;
        }
        if let Some(path) = &self.path {
            let mut buf = String::new();
            for m in &maps {
                buf.push_str(
                    &serde_json::to_string(m).map_err(|e| HaloError::Store(e.to_string()))?,
                );
                buf.push('\n');
            }
            let mut f = OpenOptions::new().create(true).append(true).open(path)?;
            f.write_all(buf.as_bytes())?;
            f.sync_data()?;
        }
        self.lines += maps.len();
        for m in maps {
            self.maps.insert(key(&m), m);
        }
        Ok(())
    }

    /// Rewrites the file with only the latest record per key.
    pub fn compact(&mut self) -> Result<(), HaloError> {
        let Some(path) = &self.path else {
            return Ok(());
        };
        let mut tmp = path.clone().into_os_string();
        tmp.push(".tmp");
        let tmp = PathBuf::from(tmp);
        {
            let mut w = BufWriter::new(File::create(&tmp)?);
            for m in self.maps.values() {
                serde_json::to_writer(&mut w, m).map_err(|e| HaloError::Store(e.to_string()))?;
                w.write_all(b"\n")?;
            }
            w.into_inner().map_err(|e| e.into_error())?.sync_all()?;
        }
        fs::rename(&tmp, path)?;
        self.lines = self.maps.len();
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(page: u32) -> PageMap {
        PageMap {
            chip_id: "c1".into(),
            block: 0,
            page,
            low_bytes: vec![1, 2, 3],
            high_bytes: vec![7, 9],
            consumed: vec![],
            enrolled_at_life: 0.25,
        }
    }

    #[test]
    fn canonical_record_layout() {
        let line = serde_json::to_string(&map(4)).unwrap();
        assert_eq!(
            line,
            r#"{"chip_id":"c1","block":0,"page":4,"low_bytes":[1,2,3],"high_bytes":[7,9],"consumed":[],"enrolled_at_life":0.25}"#
        );
    }

    #[test]
    fn latest_record_wins_and_compaction_preserves_state() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("maps.jsonl");
        let mut s = MapStore::open(&path).unwrap();
        assert!(s.is_empty());
        s.put(map(0)).unwrap();
        s.put(map(1)).unwrap();
        let mut m = map(0);
        m.consume(&[2, 9]);
        s.put(m.clone()).unwrap();

        let reopened = MapStore::open(&path).unwrap();
        assert_eq!(reopened.line_count(), 3);
        assert_eq!(reopened.len(), 2);
        assert_eq!(reopened.get("c1", 0, 0), Some(&m));

        let before = fs::read(&path).unwrap();
        let mut s = reopened;
        s.compact().unwrap();
        let after = fs::read(&path).unwrap();
        assert!(after.len() < before.len());
        let again = MapStore::open(&path).unwrap();
        assert_eq!(again.line_count(), 2);
        assert_eq!(
            again.maps().cloned().collect::<Vec<_>>(),
            s.maps().cloned().collect::<Vec<_>>()
        );
    }

    #[test]
    fn malformed_lines_are_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("maps.jsonl");
        fs::write(&path, "{\"chip_id\":\n").unwrap();
        assert!(matches!(MapStore::open(&path), Err(HaloError::Store(_))));
        let mut bad = map(0);
        bad.high_bytes = vec![2];
        assert!(MapStore::in_memory().put(bad).is_err());
    }
}
