//! On-disk document store.
//!
//! Layout under the data directory:
//!
//! ```text
//! docs/<doc_id>.json   one file per transcript, replaced atomically
//! txt/<doc_id>.txt     plain-text export, rewritten on every save
//! edits.jsonl          append-only change log, fsynced per record
//! users.json           accounts with salted password hashes
//! audio/               files served to the correction UI
//! ```
//!
//! The change log is authoritative. A save appends its record before the
//! document file is replaced, and [`Store::open`] replays any record newer
//! than the document file it belongs to.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("corrupt store: {0}")]
    Corrupt(String),
    #[error("no such document {0:?}")]
    NotFound(String),
    #[error("version conflict: document is at version {current}")]
    VersionConflict { current: u64 },
    #[error("invalid identifier {0:?}")]
    InvalidId(String),
    #[error("{0:?} already exists")]
    AlreadyExists(String),
    #[error("manifest line {line}: {reason}")]
    Manifest { line: usize, reason: String },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptDoc {
    pub doc_id: String,
    pub audio_filename: String,
    pub text: String,
    pub version: u64,
    pub language_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocSummary {
    pub doc_id: String,
    pub audio_filename: String,
    pub version: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditRecord {
    pub record_id: u64,
    pub doc_id: String,
    pub user_id: String,
    /// Milliseconds since the Unix epoch, UTC. Non-decreasing in log order.
    pub timestamp_ms: u64,
    pub before_text: String,
    pub after_text: String,
    pub resulting_version: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserAccount {
    pub user_id: String,
    pub password_hash: String,
    pub language_id: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EditFilter<'a> {
    #[default]
    All,
    Doc(&'a str),
    User(&'a str),
    DocAndUser(&'a str, &'a str),
}

impl EditFilter<'_> {
    fn matches(&self, r: &EditRecord) -> bool {
        match *self {
            EditFilter::All => true,
            EditFilter::Doc(d) => r.doc_id == d,
            EditFilter::User(u) => r.user_id == u,
            EditFilter::DocAndUser(d, u) => r.doc_id == d && r.user_id == u,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ImportReport {
    pub created: Vec<String>,
    pub skipped: Vec<(String, String)>,
}

/// Ids double as file names, so they are restricted to a safe alphabet.
pub fn validate_id(id: &str) -> Result<(), StoreError> {
    let ok = !id.is_empty()
        && id.len() <= 128
        && !id.starts_with('.')
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'));
    if ok {
        Ok(())
    } else {
        Err(StoreError::InvalidId(id.to_string()))
    }
}

fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

/// Write to a sibling temp file, fsync, then rename over `path`.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    let tmp = path.with_extension("tmp");
    let mut f = File::create(&tmp).map_err(io_err(&tmp))?;
    f.write_all(bytes).map_err(io_err(&tmp))?;
    f.sync_all().map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))?;
    if let Some(dir) = path.parent() {
        // Persist the rename itself; not every platform allows this.
        if let Ok(d) = File::open(dir) {
            let _ = d.sync_all();
        }
    }
    Ok(())
}

fn doc_bytes(doc: &TranscriptDoc) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(doc).expect("doc serializes");
    v.push(b'\n');
    v
}

struct EditLog {
    file: File,
    next_id: u64,
    last_ts: u64,
}

pub struct Store {
    root: PathBuf,
    docs: RwLock<BTreeMap<String, Arc<RwLock<TranscriptDoc>>>>,
    log: Mutex<EditLog>,
    records: RwLock<Vec<EditRecord>>,
    users: RwLock<BTreeMap<String, UserAccount>>,
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        for sub in ["docs", "txt", "audio"] {
            let p = root.join(sub);
            fs::create_dir_all(&p).map_err(io_err(&p))?;
        }
        let users = load_users(&root.join("users.json"))?;
        let mut docs = load_docs(&root.join("docs"))?;
        let log_path = root.join("edits.jsonl");
        let records = load_log(&log_path)?;
        let recovered = replay(&mut docs, &records)?;

        let file = OpenOptions::new().create(true).append(true).open(&log_path).map_err(io_err(&log_path))?;
        let log = EditLog {
            file,
            next_id: records.last().map_or(1, |r| r.record_id + 1),
            last_ts: records.last().map_or(0, |r| r.timestamp_ms),
        };
        let store = Self {
            root,
            docs: RwLock::new(docs.into_iter().map(|(k, v)| (k, Arc::new(RwLock::new(v)))).collect()),
            log: Mutex::new(log),
            records: RwLock::new(records),
            users: RwLock::new(users),
        };
        for doc_id in recovered {
            log::warn!("replayed change log into {doc_id}");
            let doc = store.get(&doc_id)?;
            store.write_doc_files(&doc)?;
        }
        Ok(store)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn audio_dir(&self) -> PathBuf {
        self.root.join("audio")
    }

    fn handle(&self, doc_id: &str) -> Result<Arc<RwLock<TranscriptDoc>>, StoreError> {
        self.docs.read().get(doc_id).cloned().ok_or_else(|| StoreError::NotFound(doc_id.to_string()))
    }

    pub fn get(&self, doc_id: &str) -> Result<TranscriptDoc, StoreError> {
        Ok(self.handle(doc_id)?.read().clone())
    }

    /// Summaries of documents in `language_id`, ordered by id.
    pub fn list(&self, language_id: &str) -> Vec<DocSummary> {
        self.docs
            .read()
            .values()
            .filter_map(|h| {
                let d = h.read();
                (d.language_id == language_id).then(|| DocSummary {
                    doc_id: d.doc_id.clone(),
                    audio_filename: d.audio_filename.clone(),
                    version: d.version,
                })
            })
            .collect()
    }

    pub fn create(&self, doc: TranscriptDoc) -> Result<(), StoreError> {
        validate_id(&doc.doc_id)?;
        if doc.version != 1 {
            return Err(StoreError::Corrupt(format!("new document {} must start at version 1", doc.doc_id)));
        }
        let mut docs = self.docs.write();
        if docs.contains_key(&doc.doc_id) {
            return Err(StoreError::AlreadyExists(doc.doc_id));
        }
        self.write_doc_files(&doc)?;
        docs.insert(doc.doc_id.clone(), Arc::new(RwLock::new(doc)));
        Ok(())
    }

    /// Optimistic save: succeeds only when `base_version` is current.
    /// The version bump and the change-log append happen under the
    /// document's write lock.
    pub fn save(&self, doc_id: &str, user_id: &str, new_text: &str, base_version: u64) -> Result<EditRecord, StoreError> {
        let handle = self.handle(doc_id)?;
        let mut doc = handle.write();
        if doc.version != base_version {
            return Err(StoreError::VersionConflict { current: doc.version });
        }
        let mut updated = doc.clone();
        updated.text = new_text.to_string();
        updated.version += 1;
        let record = self.append(|record_id, timestamp_ms| EditRecord {
            record_id,
            doc_id: doc_id.to_string(),
            user_id: user_id.to_string(),
            timestamp_ms,
            before_text: doc.text.clone(),
            after_text: updated.text.clone(),
            resulting_version: updated.version,
        })?;
        *doc = updated;
        // The record is durable; a failure here is repaired by replay on
        // the next open, so the save still counts.
        if let Err(e) = self.write_doc_files(&doc) {
            log::error!("saved {doc_id} v{} to the log but not to its file: {e}", doc.version);
        }
        Ok(record)
    }

    fn append(&self, make: impl FnOnce(u64, u64) -> EditRecord) -> Result<EditRecord, StoreError> {
        let path = self.root.join("edits.jsonl");
        let mut log = self.log.lock();
        let ts = now_ms().max(log.last_ts);
        let record = make(log.next_id, ts);
        let mut line = serde_json::to_vec(&record).expect("record serializes");
        line.push(b'\n');
        log.file.write_all(&line).map_err(io_err(&path))?;
        log.file.sync_data().map_err(io_err(&path))?;
        log.next_id += 1;
        log.last_ts = ts;
        // Pushed while the log lock is held so memory order equals file order.
        self.records.write().push(record.clone());
        Ok(record)
    }

    fn write_doc_files(&self, doc: &TranscriptDoc) -> Result<(), StoreError> {
        write_atomic(&self.root.join("docs").join(format!("{}.json", doc.doc_id)), &doc_bytes(doc))?;
        write_atomic(&self.root.join("txt").join(format!("{}.txt", doc.doc_id)), doc.text.as_bytes())
    }

    /// Records in log (and therefore timestamp) order.
    pub fn edits(&self, filter: EditFilter<'_>) -> Vec<EditRecord> {
        self.records.read().iter().filter(|r| filter.matches(r)).cloned().collect()
    }

    /// Successful saves per user.
    pub fn edit_counts(&self) -> BTreeMap<String, usize> {
        let mut out = BTreeMap::new();
        for r in self.records.read().iter() {
            *out.entry(r.user_id.clone()).or_insert(0) += 1;
        }
        out
    }

    pub fn user(&self, user_id: &str) -> Option<UserAccount> {
        self.users.read().get(user_id).cloned()
    }

    pub fn add_user(&self, account: UserAccount) -> Result<(), StoreError> {
        validate_id(&account.user_id)?;
        if account.password_hash.is_empty() {
            return Err(StoreError::Corrupt("empty password hash".into()));
        }
        let mut users = self.users.write();
        if users.contains_key(&account.user_id) {
            return Err(StoreError::AlreadyExists(account.user_id));
        }
        let mut next = users.clone();
        next.insert(account.user_id.clone(), account);
        let list: Vec<&UserAccount> = next.values().collect();
        let mut bytes = serde_json::to_vec_pretty(&list).expect("users serialize");
        bytes.push(b'\n');
        write_atomic(&self.root.join("users.json"), &bytes)?;
        *users = next;
        Ok(())
    }

    /// Bulk import from a `doc_id<TAB>audio_filename<TAB>transcript_path`
    /// manifest. Relative transcript paths resolve against the manifest's
    /// directory. Existing documents are skipped, never overwritten.
    pub fn import_manifest(&self, manifest: &Path, language_id: &str) -> Result<ImportReport, StoreError> {
        let text = fs::read_to_string(manifest).map_err(io_err(manifest))?;
        let base = manifest.parent().unwrap_or(Path::new("."));
        let mut report = ImportReport::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let [doc_id, audio, path] = fields[..] else {
                return Err(StoreError::Manifest { line: i + 1, reason: format!("expected 3 fields, got {}", fields.len()) });
            };
            let tpath = base.join(path);
            let transcript = fs::read_to_string(&tpath).map_err(io_err(&tpath))?;
            let doc = TranscriptDoc {
                doc_id: doc_id.to_string(),
                audio_filename: audio.to_string(),
                text: transcript.trim_end_matches(['\n', '\r']).to_string(),
                version: 1,
                language_id: language_id.to_string(),
            };
            match self.create(doc) {
                Ok(()) => report.created.push(doc_id.to_string()),
                Err(StoreError::AlreadyExists(_)) => report.skipped.push((doc_id.to_string(), "already exists".into())),
                Err(StoreError::InvalidId(_)) => {
                    return Err(StoreError::Manifest { line: i + 1, reason: format!("invalid doc id {doc_id:?}") })
                }
                Err(e) => return Err(e),
            }
        }
        Ok(report)
    }
}

fn load_users(path: &Path) -> Result<BTreeMap<String, UserAccount>, StoreError> {
    if !path.exists() {
        return Ok(BTreeMap::new());
    }
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let list: Vec<UserAccount> = serde_json::from_str(&text).map_err(|e| StoreError::Corrupt(format!("users.json: {e}")))?;
    Ok(list.into_iter().map(|u| (u.user_id.clone(), u)).collect())
}

fn load_docs(dir: &Path) -> Result<BTreeMap<String, TranscriptDoc>, StoreError> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => {}
            Some("tmp") => {
                // Left behind by an interrupted write; the rename never happened.
                let _ = fs::remove_file(&path);
                continue;
            }
            _ => continue,
        }
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        let doc: TranscriptDoc =
            serde_json::from_str(&text).map_err(|e| StoreError::Corrupt(format!("{}: {e}", path.display())))?;
        if path.file_stem().and_then(|s| s.to_str()) != Some(doc.doc_id.as_str()) {
            return Err(StoreError::Corrupt(format!("{} holds document {:?}", path.display(), doc.doc_id)));
        }
        out.insert(doc.doc_id.clone(), doc);
    }
    Ok(out)
}

/// Parses the change log. A torn final line (crash mid-append) is cut off;
/// damage anywhere else is an error.
fn load_log(path: &Path) -> Result<Vec<EditRecord>, StoreError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let file = File::open(path).map_err(io_err(path))?;
    let mut records: Vec<EditRecord> = Vec::new();
    let mut good_bytes = 0u64;
    let mut lines = BufReader::new(file).split(b'\n').peekable();
    while let Some(line) = lines.next() {
        let line = line.map_err(io_err(path))?;
        let is_last = lines.peek().is_none();
        match serde_json::from_slice::<EditRecord>(&line) {
            Ok(r) => {
                if records.last().is_some_and(|p| r.record_id <= p.record_id || r.timestamp_ms < p.timestamp_ms) {
                    return Err(StoreError::Corrupt(format!("edit log out of order at record {}", r.record_id)));
                }
                records.push(r);
                good_bytes += line.len() as u64 + 1;
            }
            Err(_) if is_last => {
                log::warn!("dropping torn final line of {}", path.display());
                let f = OpenOptions::new().write(true).open(path).map_err(io_err(path))?;
                f.set_len(good_bytes).map_err(io_err(path))?;
                f.sync_all().map_err(io_err(path))?;
            }
            Err(e) => return Err(StoreError::Corrupt(format!("edit log line {}: {e}", records.len() + 1))),
        }
    }
    Ok(records)
}

/// Brings each document up to its latest logged version and checks that
/// versions are gapless. Returns the ids that changed.
fn replay(docs: &mut BTreeMap<String, TranscriptDoc>, records: &[EditRecord]) -> Result<Vec<String>, StoreError> {
    let mut last: BTreeMap<&str, u64> = BTreeMap::new();
    let mut changed = Vec::new();
    for r in records {
        let prev = last.get(r.doc_id.as_str()).copied().unwrap_or(1);
        if r.resulting_version != prev + 1 {
            return Err(StoreError::Corrupt(format!(
                "document {} jumps from version {prev} to {}",
                r.doc_id, r.resulting_version
            )));
        }
        last.insert(&r.doc_id, r.resulting_version);
        let doc = docs
            .get_mut(&r.doc_id)
            .ok_or_else(|| StoreError::Corrupt(format!("log mentions unknown document {}", r.doc_id)))?;
        if r.resulting_version > doc.version {
            if doc.version + 1 != r.resulting_version || doc.text != r.before_text {
                return Err(StoreError::Corrupt(format!("document {} cannot be replayed", r.doc_id)));
            }
            doc.text = r.after_text.clone();
            doc.version = r.resulting_version;
            if changed.last() != Some(&r.doc_id) {
                changed.push(r.doc_id.clone());
            }
        }
    }
    for doc in docs.values() {
        let logged = last.get(doc.doc_id.as_str()).copied().unwrap_or(1);
        if doc.version != logged {
            return Err(StoreError::Corrupt(format!(
                "document {} is at version {} but the log ends at {logged}",
                doc.doc_id, doc.version
            )));
        }
    }
    changed.dedup();
    Ok(changed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(id: &str, lang: &str) -> TranscriptDoc {
        TranscriptDoc {
            doc_id: id.into(),
            audio_filename: format!("{id}.wav"),
            text: "नमस्ते".into(),
            version: 1,
            language_id: lang.into(),
        }
    }

    #[test]
    fn ids_are_filename_safe() {
        assert!(validate_id("utt_001.a").is_ok());
        for bad in ["", "../x", "a/b", ".hidden", "a b"] {
            assert!(validate_id(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn save_conflict_and_history() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        store.create(doc("d1", "hi")).unwrap();
        store.create(doc("d2", "ta")).unwrap();
        assert_eq!(store.list("hi").len(), 1);
        assert!(store.edits(EditFilter::Doc("d1")).is_empty());

        let r = store.save("d1", "asha", "पहला", 1).unwrap();
        assert_eq!((r.record_id, r.resulting_version, r.before_text.as_str()), (1, 2, "नमस्ते"));
        assert!(matches!(store.save("d1", "ravi", "x", 1), Err(StoreError::VersionConflict { current: 2 })));
        store.save("d1", "ravi", "दूसरा", 2).unwrap();
        assert_eq!(store.edits(EditFilter::User("ravi")).len(), 1);
        assert_eq!(store.edits(EditFilter::Doc("d1")).len(), 2);
        assert_eq!(store.edit_counts()["asha"], 1);
        assert_eq!(fs::read_to_string(dir.path().join("txt/d1.txt")).unwrap(), "दूसरा");
        assert!(matches!(store.save("nope", "a", "x", 1), Err(StoreError::NotFound(_))));
    }

    #[test]
    fn replays_log_ahead_of_doc_file_and_drops_torn_tail() {
        let dir = tempfile::tempdir().unwrap();
        let stale;
        {
            let store = Store::open(dir.path()).unwrap();
            store.create(doc("d1", "hi")).unwrap();
            stale = fs::read(dir.path().join("docs/d1.json")).unwrap();
            store.save("d1", "asha", "नया", 1).unwrap();
        }
        // Simulate a crash after the log append but before the file swap,
        // followed by a half-written record.
        fs::write(dir.path().join("docs/d1.json"), &stale).unwrap();
        let mut log = OpenOptions::new().append(true).open(dir.path().join("edits.jsonl")).unwrap();
        log.write_all(b"{\"record_id\":2,\"doc").unwrap();
        drop(log);

        let store = Store::open(dir.path()).unwrap();
        let d = store.get("d1").unwrap();
        assert_eq!((d.version, d.text.as_str()), (2, "नया"));
        assert_eq!(store.edits(EditFilter::All).len(), 1);
        let next = store.save("d1", "asha", "फिर", 2).unwrap();
        assert_eq!(next.record_id, 2);
    }

    #[test]
    fn version_without_log_is_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        {
            Store::open(dir.path()).unwrap().create(doc("d1", "hi")).unwrap();
        }
        let mut d = doc("d1", "hi");
        d.version = 3;
        fs::write(dir.path().join("docs/d1.json"), doc_bytes(&d)).unwrap();
        assert!(matches!(Store::open(dir.path()), Err(StoreError::Corrupt(_))));
    }

    #[test]
    fn manifest_import() {
        let dir = tempfile::tempdir().unwrap();
        let src = tempfile::tempdir().unwrap();
        fs::write(src.path().join("a.txt"), "पाठ एक\n").unwrap();
        fs::write(src.path().join("m.tsv"), "# corpus\nu1\tu1.wav\ta.txt\nu1\tu1.wav\ta.txt\n").unwrap();
        let store = Store::open(dir.path()).unwrap();
        let rep = store.import_manifest(&src.path().join("m.tsv"), "hi").unwrap();
        assert_eq!(rep.created, vec!["u1"]);
        assert_eq!(rep.skipped.len(), 1);
        assert_eq!(store.get("u1").unwrap().text, "पाठ एक");
        fs::write(src.path().join("bad.tsv"), "u2\tu2.wav\n").unwrap();
        assert!(matches!(store.import_manifest(&src.path().join("bad.tsv"), "hi"), Err(StoreError::Manifest { line: 1, .. })));
    }
}
