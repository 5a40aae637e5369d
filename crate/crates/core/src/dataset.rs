//! Persistence: study sessions and records, arrangement files, benchmark
//! directories, and context/hold-out construction.
//!
//! Layout under a data directory:
//!
//! ```text
//! sessions/<session>.json          Session
//! records/<session>/<trial>.json   StudyRecord
//! ```
//!
//! Benchmark directories hold `manifest.json` and `cases/<id>/` with
//! `case.json`, `context_<k>.json`, `ground_truth.json` and `initial.json`.
//! Versioned files wrap their payload as `{"schema_version", "kind", "data"}`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acceptability::RatingRecord;
use crate::catalog::Catalog;
use crate::scene::{arrangement_valid_for_study, Arrangement, PreferenceContext};
use crate::simulation::{Benchmark, ExperimentCase, LayoutTemplate, NoiseProfile, SimPreferenceSpec, Split};

pub const SCHEMA_VERSION: u32 = 1;

/// Practice round plus five experimental trials.
pub const TRIALS_PER_SESSION: u32 = 6;
pub const PRACTICE_TRIAL: u32 = 0;
pub const EXPERIMENTAL_TRIALS: u32 = 5;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}:{column}: {message}")]
    Corrupt {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{path}: schema mismatch: {message}")]
    Schema { path: PathBuf, message: String },
    #[error("{path} not found")]
    NotFound { path: PathBuf },
    #[error("session {session} trial {trial}: {field} already recorded with a different value")]
    Conflict {
        session: String,
        trial: u32,
        field: &'static str,
    },
    #[error("trial {0} outside 0..=5")]
    BadTrial(u32),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| {
        if source.kind() == std::io::ErrorKind::NotFound {
            StoreError::NotFound {
                path: path.to_path_buf(),
            }
        } else {
            StoreError::Io {
                path: path.to_path_buf(),
                source,
            }
        }
    }
}

fn corrupt(path: &Path, e: serde_json::Error) -> StoreError {
    StoreError::Corrupt {
        path: path.to_path_buf(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    }
}

/// Writes through a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = path.with_file_name(format!(".{name}.{}.tmp", std::process::id()));
    fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

#[derive(Serialize)]
struct VersionedOut<'a, T> {
    schema_version: u32,
    kind: &'a str,
    data: &'a T,
}

#[derive(Deserialize)]
struct VersionedIn {
    schema_version: u32,
    kind: String,
    data: serde_json::Value,
}

pub fn write_versioned<T: Serialize>(path: &Path, kind: &str, value: &T) -> Result<(), StoreError> {
    let text = serde_json::to_string_pretty(&VersionedOut {
        schema_version: SCHEMA_VERSION,
        kind,
        data: value,
    })
    .expect("store values serialize");
    write_atomic(path, text.as_bytes())
}

pub fn read_versioned<T: DeserializeOwned>(path: &Path, kind: &str) -> Result<T, StoreError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let wrapped: VersionedIn = serde_json::from_str(&text).map_err(|e| corrupt(path, e))?;
    if wrapped.schema_version != SCHEMA_VERSION {
        return Err(StoreError::Schema {
            path: path.to_path_buf(),
            message: format!("version {} (expected {SCHEMA_VERSION})", wrapped.schema_version),
        });
    }
    if wrapped.kind != kind {
        return Err(StoreError::Schema {
            path: path.to_path_buf(),
            message: format!("kind `{}` (expected `{kind}`)", wrapped.kind),
        });
    }
    serde_json::from_value(wrapped.data).map_err(|e| StoreError::Schema {
        path: path.to_path_buf(),
        message: format!("data: {e}"),
    })
}

/// Plain arrangement file: `{table, placements:[{object, x, y, rotation}]}`.
pub fn save_arrangement(path: &Path, a: &Arrangement) -> Result<(), StoreError> {
    write_atomic(path, a.to_json().as_bytes())
}

pub fn load_arrangement(path: &Path) -> Result<Arrangement, StoreError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    Arrangement::from_json(&text).map_err(|e| corrupt(path, e))
}

// ---------------------------------------------------------------------------
// study data

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    /// Opaque handle; no personal data.
    pub participant: String,
    /// Table shown at each trial, index 0 being the practice round.
    pub tables: Vec<String>,
    pub created_at: u64,
}

impl Session {
    /// Assigns tables to the six trials in a seed-shuffled order, cycling if
    /// there are fewer tables than trials.
    pub fn new(id: impl Into<String>, participant: impl Into<String>, tables: &[String], seed: u64) -> Self {
        let mut order = tables.to_vec();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let tables = if order.is_empty() {
            Vec::new()
        } else {
            (0..TRIALS_PER_SESSION as usize)
                .map(|i| order[i % order.len()].clone())
                .collect()
        };
        Self {
            id: id.into(),
            participant: participant.into(),
            tables,
            created_at: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        }
    }

    pub fn table_for(&self, trial: u32) -> Option<&str> {
        self.tables.get(trial as usize).map(String::as_str)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Baseline,
    Jitter,
    Correction,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Ratings {
    pub baseline: Option<f64>,
    pub jitter: Option<f64>,
    pub correction: Option<f64>,
}

impl Ratings {
    pub fn get(&self, phase: Phase) -> Option<f64> {
        match phase {
            Phase::Baseline => self.baseline,
            Phase::Jitter => self.jitter,
            Phase::Correction => self.correction,
        }
    }

    fn slot(&mut self, phase: Phase) -> &mut Option<f64> {
        match phase {
            Phase::Baseline => &mut self.baseline,
            Phase::Jitter => &mut self.jitter,
            Phase::Correction => &mut self.correction,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JitterDraw {
    pub magnitude: f64,
    pub seed: u64,
    pub arrangement: Arrangement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRecord {
    pub session: String,
    pub trial: u32,
    pub arrangement: Option<Arrangement>,
    pub jitter: Option<JitterDraw>,
    pub corrected: Option<Arrangement>,
    #[serde(default)]
    pub ratings: Ratings,
}

fn set_once<T: PartialEq + Clone>(
    slot: &mut Option<T>,
    value: &Option<T>,
    session: &str,
    trial: u32,
    field: &'static str,
) -> Result<(), StoreError> {
    match (slot.as_ref(), value) {
        (_, None) => Ok(()),
        (None, Some(v)) => {
            *slot = Some(v.clone());
            Ok(())
        }
        (Some(old), Some(v)) if old == v => Ok(()),
        _ => Err(StoreError::Conflict {
            session: session.to_string(),
            trial,
            field,
        }),
    }
}

impl StudyRecord {
    pub fn new(session: impl Into<String>, trial: u32) -> Self {
        Self {
            session: session.into(),
            trial,
            arrangement: None,
            jitter: None,
            corrected: None,
            ratings: Ratings::default(),
        }
    }

    pub fn is_practice(&self) -> bool {
        self.trial == PRACTICE_TRIAL
    }

    /// Names of the phases still missing.
    pub fn missing(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if !self.arrangement.as_ref().is_some_and(arrangement_valid_for_study) {
            out.push("arrangement");
        }
        if self.ratings.baseline.is_none() {
            out.push("baseline rating");
        }
        if self.jitter.is_none() {
            out.push("jitter");
        }
        if self.ratings.jitter.is_none() {
            out.push("jitter rating");
        }
        if self.corrected.is_none() {
            out.push("correction");
        }
        if self.ratings.correction.is_none() {
            out.push("correction rating");
        }
        out
    }

    pub fn is_complete(&self) -> bool {
        self.missing().is_empty()
    }

    /// Field-wise union; a field set on both sides must agree.
    pub fn merge(&mut self, other: &StudyRecord) -> Result<(), StoreError> {
        let (s, t) = (self.session.clone(), self.trial);
        set_once(&mut self.arrangement, &other.arrangement, &s, t, "arrangement")?;
        set_once(&mut self.jitter, &other.jitter, &s, t, "jitter")?;
        set_once(&mut self.corrected, &other.corrected, &s, t, "correction")?;
        for phase in [Phase::Baseline, Phase::Jitter, Phase::Correction] {
            let field = match phase {
                Phase::Baseline => "baseline rating",
                Phase::Jitter => "jitter rating",
                Phase::Correction => "correction rating",
            };
            set_once(self.ratings.slot(phase), &other.ratings.get(phase), &s, t, field)?;
        }
        Ok(())
    }

    /// Ratings view for acceptability analysis; needs the arrangement, the
    /// jitter, and the baseline and jitter ratings.
    pub fn rating_record(&self) -> Option<RatingRecord> {
        let original = self.arrangement.as_ref()?;
        let jitter = self.jitter.as_ref()?;
        Some(RatingRecord {
            session: self.session.clone(),
            trial: self.trial,
            baseline: self.ratings.baseline?,
            jitter: self.ratings.jitter?,
            correction: self.ratings.correction,
            magnitude: jitter.magnitude,
            rmsd_jitter: displacement_rmsd(original, &jitter.arrangement)?,
            rmsd_correction: self
                .corrected
                .as_ref()
                .and_then(|c| displacement_rmsd(original, c)),
        })
    }
}

/// Root mean squared displacement between same-index placements, without
/// registration. `None` when lengths differ or both are empty.
pub fn displacement_rmsd(a: &Arrangement, b: &Arrangement) -> Option<f64> {
    if a.len() != b.len() || a.is_empty() {
        return None;
    }
    let sum: f64 = a
        .placements
        .iter()
        .zip(&b.placements)
        .map(|(p, q)| (p.x - q.x).powi(2) + (p.y - q.y).powi(2))
        .sum();
    Some((sum / a.len() as f64).sqrt())
}

/// Outcome of writing a record.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WriteOutcome {
    Created,
    Updated,
    Unchanged,
}

#[derive(Debug, Clone)]
pub struct DatasetStore {
    root: PathBuf,
}

impl DatasetStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        for sub in ["sessions", "records"] {
            let dir = root.join(sub);
            fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        }
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn session_path(&self, id: &str) -> PathBuf {
        self.root.join("sessions").join(format!("{id}.json"))
    }

    fn record_path(&self, session: &str, trial: u32) -> PathBuf {
        self.root
            .join("records")
            .join(session)
            .join(format!("{trial}.json"))
    }

    pub fn put_session(&self, s: &Session) -> Result<(), StoreError> {
        write_versioned(&self.session_path(&s.id), "session", s)
    }

    pub fn session(&self, id: &str) -> Result<Session, StoreError> {
        read_versioned(&self.session_path(id), "session")
    }

    pub fn sessions(&self) -> Result<Vec<Session>, StoreError> {
        let dir = self.root.join("sessions");
        let mut ids: Vec<String> = fs::read_dir(&dir)
            .map_err(io_err(&dir))?
            .filter_map(|e| e.ok())
            .filter_map(|e| {
                let name = e.file_name().into_string().ok()?;
                name.strip_suffix(".json").map(str::to_string)
            })
            .collect();
        ids.sort();
        ids.iter().map(|id| self.session(id)).collect()
    }

    pub fn record(&self, session: &str, trial: u32) -> Result<Option<StudyRecord>, StoreError> {
        match read_versioned(&self.record_path(session, trial), "study_record") {
            Ok(r) => Ok(Some(r)),
            Err(StoreError::NotFound { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    }

    /// Merges `update` into the stored record for its (session, trial).
    /// Re-sending identical data is a no-op; changing recorded data is a conflict.
    pub fn upsert_record(&self, update: &StudyRecord) -> Result<(StudyRecord, WriteOutcome), StoreError> {
        if update.trial >= TRIALS_PER_SESSION {
            return Err(StoreError::BadTrial(update.trial));
        }
        let existing = self.record(&update.session, update.trial)?;
        let (merged, outcome) = match existing {
            None => (update.clone(), WriteOutcome::Created),
            Some(old) => {
                let mut merged = old.clone();
                merged.merge(update)?;
                let outcome = if merged == old { WriteOutcome::Unchanged } else { WriteOutcome::Updated };
                (merged, outcome)
            }
        };
        if outcome != WriteOutcome::Unchanged {
            write_versioned(&self.record_path(&merged.session, merged.trial), "study_record", &merged)?;
        }
        Ok((merged, outcome))
    }

    /// All records, ordered by session then trial. Incomplete records load
    /// with a warning.
    pub fn records(&self) -> Result<Vec<StudyRecord>, StoreError> {
        let dir = self.root.join("records");
        let mut paths = Vec::new();
        for session in fs::read_dir(&dir).map_err(io_err(&dir))?.filter_map(|e| e.ok()) {
            let sdir = session.path();
            if !sdir.is_dir() {
                continue;
            }
            for f in fs::read_dir(&sdir).map_err(io_err(&sdir))?.filter_map(|e| e.ok()) {
                let p = f.path();
                if p.extension().is_some_and(|e| e == "json") {
                    paths.push(p);
                }
            }
        }
        let mut records: Vec<StudyRecord> = paths
            .iter()
            .map(|p| read_versioned(p, "study_record"))
            .collect::<Result<_, _>>()?;
        records.sort_by(|a, b| (&a.session, a.trial).cmp(&(&b.session, b.trial)));
        for r in records.iter().filter(|r| !r.is_complete()) {
            tracing::warn!(session = %r.session, trial = r.trial, missing = ?r.missing(), "incomplete study record");
        }
        Ok(records)
    }

    /// Idempotent bulk ingestion keyed by (session, trial).
    pub fn ingest(&self, records: &[StudyRecord]) -> Result<Vec<WriteOutcome>, StoreError> {
        records.iter().map(|r| self.upsert_record(r).map(|(_, w)| w)).collect()
    }

    /// Every record as one JSON line, in store order.
    pub fn export_jsonl(&self) -> Result<String, StoreError> {
        Ok(self
            .records()?
            .iter()
            .map(|r| serde_json::to_string(r).expect("record serializes") + "\n")
            .collect())
    }
}

/// Sessions whose five experimental trials are all complete.
pub fn complete_sessions(records: &[StudyRecord]) -> Vec<String> {
    let mut done: BTreeMap<&str, Vec<u32>> = BTreeMap::new();
    for r in records {
        done.entry(&r.session).or_default();
        if !r.is_practice() && r.is_complete() {
            done.get_mut(r.session.as_str()).expect("inserted").push(r.trial);
        }
    }
    done.into_iter()
        .filter(|(_, trials)| (1..=EXPERIMENTAL_TRIALS).all(|t| trials.contains(&t)))
        .map(|(s, _)| s.to_string())
        .collect()
}

/// Experimental records of the given sessions only.
pub fn filter_sessions<'a>(records: &'a [StudyRecord], sessions: &[String]) -> Vec<&'a StudyRecord> {
    records
        .iter()
        .filter(|r| !r.is_practice() && sessions.contains(&r.session))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContextPair {
    pub owner: String,
    pub context: PreferenceContext,
    pub held_out_trial: u32,
    pub held_out: Arrangement,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Skipped {
    pub owner: String,
    pub valid_trials: usize,
    pub needed: usize,
}

/// Per session (practice excluded): the first `c` study-valid trials in
/// trial order form the context and the next valid trial is held out.
pub fn build_contexts(
    records: &[StudyRecord],
    c: usize,
    catalog: &Catalog,
) -> (Vec<ContextPair>, Vec<Skipped>) {
    let mut by_session: BTreeMap<&str, Vec<&StudyRecord>> = BTreeMap::new();
    for r in records.iter().filter(|r| !r.is_practice()) {
        by_session.entry(&r.session).or_default().push(r);
    }
    let (mut pairs, mut skipped) = (Vec::new(), Vec::new());
    for (owner, mut recs) in by_session {
        recs.sort_by_key(|r| r.trial);
        let valid: Vec<(u32, &Arrangement)> = recs
            .iter()
            .filter_map(|r| {
                let a = r.arrangement.as_ref()?;
                arrangement_valid_for_study(a).then_some((r.trial, a))
            })
            .collect();
        if valid.len() < c + 1 {
            tracing::info!(owner, valid = valid.len(), needed = c + 1, "skipping participant");
            skipped.push(Skipped {
                owner: owner.to_string(),
                valid_trials: valid.len(),
                needed: c + 1,
            });
            continue;
        }
        let context = PreferenceContext::from_arrangements(
            owner,
            valid[..c].iter().map(|(_, a)| (*a).clone()),
            catalog,
        );
        let (held_out_trial, held_out) = valid[c];
        pairs.push(ContextPair {
            owner: owner.to_string(),
            context,
            held_out_trial,
            held_out: held_out.clone(),
        });
    }
    (pairs, skipped)
}

// ---------------------------------------------------------------------------
// case directories and manifests

/// One prediction problem on disk: context arrangements, the empty target
/// table, and the ground truth to score against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub id: String,
    pub owner: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<SimPreferenceSpec>,
    pub context: Vec<Arrangement>,
    pub target_table: String,
    pub ground_truth: Arrangement,
}

impl CaseRecord {
    pub fn initial(&self) -> Arrangement {
        Arrangement::empty(self.target_table.clone())
    }

    pub fn preference_context(&self, catalog: &Catalog) -> PreferenceContext {
        PreferenceContext::from_arrangements(self.owner.clone(), self.context.iter().cloned(), catalog)
    }
}

impl From<&ExperimentCase> for CaseRecord {
    fn from(c: &ExperimentCase) -> Self {
        Self {
            id: c.id.clone(),
            owner: c.spec.id.clone(),
            split: Some(c.split),
            spec: Some(c.spec.clone()),
            context: c.context.clone(),
            target_table: c.target_table.clone(),
            ground_truth: c.ground_truth.clone(),
        }
    }
}

impl From<&ContextPair> for CaseRecord {
    fn from(p: &ContextPair) -> Self {
        Self {
            id: format!("{}-k{}", p.owner, p.context.len()),
            owner: p.owner.clone(),
            split: None,
            spec: None,
            context: p.context.entries.iter().map(|e| e.arrangement.clone()).collect(),
            target_table: p.held_out.table.clone(),
            ground_truth: p.held_out.clone(),
        }
    }
}

pub const CASE_FILE: &str = "case.json";
pub const MANIFEST_FILE: &str = "manifest.json";

pub fn write_case(dir: &Path, case: &CaseRecord) -> Result<(), StoreError> {
    write_versioned(&dir.join(CASE_FILE), "case", case)?;
    for (k, a) in case.context.iter().enumerate() {
        save_arrangement(&dir.join(format!("context_{}.json", k + 1)), a)?;
    }
    save_arrangement(&dir.join("ground_truth.json"), &case.ground_truth)?;
    save_arrangement(&dir.join("initial.json"), &case.initial())
}

pub fn read_case(dir: &Path) -> Result<CaseRecord, StoreError> {
    read_versioned(&dir.join(CASE_FILE), "case")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
    /// Case directory relative to the manifest.
    pub dir: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkManifest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub context_len: usize,
    #[serde(default)]
    pub layouts: Vec<LayoutTemplate>,
    #[serde(default)]
    pub noise_profiles: Vec<NoiseProfile>,
    #[serde(default)]
    pub tables: Vec<String>,
    pub cases: Vec<ManifestEntry>,
}

fn case_dir_name(id: &str) -> String {
    format!("cases/{id}")
}

/// Writes `manifest.json` and every case directory.
pub fn write_case_set(
    dir: &Path,
    manifest: &BenchmarkManifest,
    cases: &[CaseRecord],
) -> Result<(), StoreError> {
    for (entry, case) in manifest.cases.iter().zip(cases) {
        write_case(&dir.join(&entry.dir), case)?;
    }
    write_versioned(&dir.join(MANIFEST_FILE), "benchmark_manifest", manifest)
}

pub fn write_benchmark(dir: &Path, b: &Benchmark) -> Result<BenchmarkManifest, StoreError> {
    let cases: Vec<CaseRecord> = b.cases.iter().map(CaseRecord::from).collect();
    let manifest = BenchmarkManifest {
        seed: Some(b.seed),
        context_len: b.context_len,
        layouts: b.layouts.clone(),
        noise_profiles: b.noise_profiles.clone(),
        tables: b.tables.clone(),
        cases: cases
            .iter()
            .map(|c| ManifestEntry {
                id: c.id.clone(),
                split: c.split,
                dir: case_dir_name(&c.id),
            })
            .collect(),
    };
    write_case_set(dir, &manifest, &cases)?;
    Ok(manifest)
}

/// Manifest for cases built from study records.
pub fn write_context_pairs(dir: &Path, c: usize, pairs: &[ContextPair]) -> Result<BenchmarkManifest, StoreError> {
    let cases: Vec<CaseRecord> = pairs.iter().map(CaseRecord::from).collect();
    let manifest = BenchmarkManifest {
        seed: None,
        context_len: c,
        layouts: Vec::new(),
        noise_profiles: Vec::new(),
        tables: Vec::new(),
        cases: cases
            .iter()
            .map(|case| ManifestEntry {
                id: case.id.clone(),
                split: None,
                dir: case_dir_name(&case.id),
            })
            .collect(),
    };
    write_case_set(dir, &manifest, &cases)?;
    Ok(manifest)
}

pub fn read_manifest(path: &Path) -> Result<BenchmarkManifest, StoreError> {
    let file = if path.is_dir() { path.join(MANIFEST_FILE) } else { path.to_path_buf() };
    read_versioned(&file, "benchmark_manifest")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::Placement;

    fn arrangement(n: usize) -> Arrangement {
        Arrangement::new(
            "oak",
            (0..n)
                .map(|i| Placement::new(i as u32 * 25, 0.1 + 0.15 * i as f64, 0.5, 10.0 * i as f64))
                .collect(),
        )
    }

    fn complete(session: &str, trial: u32) -> StudyRecord {
        let a = arrangement(3);
        StudyRecord {
            session: session.into(),
            trial,
            arrangement: Some(a.clone()),
            jitter: Some(JitterDraw {
                magnitude: 0.3,
                seed: 1,
                arrangement: a.clone(),
            }),
            corrected: Some(a),
            ratings: Ratings {
                baseline: Some(0.9),
                jitter: Some(0.8),
                correction: Some(0.85),
            },
        }
    }

    #[test]
    fn arrangement_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.json");
        let a = arrangement(5);
        save_arrangement(&p, &a).unwrap();
        assert_eq!(load_arrangement(&p).unwrap(), a);
    }

    #[test]
    fn corrupt_file_reports_location() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.json");
        fs::write(&p, "{\n  \"table\": \"oak\",\n  \"placements\": [oops]\n}").unwrap();
        match load_arrangement(&p) {
            Err(StoreError::Corrupt { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn schema_version_checked() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.json");
        fs::write(&p, r#"{"schema_version": 9, "kind": "session", "data": {}}"#).unwrap();
        assert!(matches!(read_versioned::<Session>(&p, "session"), Err(StoreError::Schema { .. })));
    }

    #[test]
    fn missing_correction_rating_is_incomplete_but_loads() {
        let dir = tempfile::tempdir().unwrap();
        let store = DatasetStore::open(dir.path()).unwrap();
        let mut r = complete("s1", 1);
        r.ratings.correction = None;
        store.upsert_record(&r).unwrap();
        let loaded = store.records().unwrap();
        assert_eq!(loaded, vec![r]);
        assert_eq!(loaded[0].missing(), vec!["correction rating"]);
    }

    #[test]
    fn upsert_is_idempotent_and_append_only() {
        let dir = tempfile::tempdir().unwrap();
        let store = DatasetStore::open(dir.path()).unwrap();
        let r = complete("s1", 2);
        assert_eq!(store.upsert_record(&r).unwrap().1, WriteOutcome::Created);
        assert_eq!(store.upsert_record(&r).unwrap().1, WriteOutcome::Unchanged);
        let mut changed = r.clone();
        changed.ratings.baseline = Some(0.1);
        assert!(matches!(store.upsert_record(&changed), Err(StoreError::Conflict { .. })));
        assert!(matches!(store.upsert_record(&StudyRecord::new("s1", 6)), Err(StoreError::BadTrial(6))));
    }

    #[test]
    fn complete_session_filter_counts() {
        // 10 sessions; sessions 0..3 each miss something
        let mut records = Vec::new();
        for s in 0..10 {
            let id = format!("s{s:02}");
            for t in 0..=5 {
                let mut r = complete(&id, t);
                match (s, t) {
                    (0, 5) => continue,
                    (1, 3) => r.ratings.jitter = None,
                    (2, 1) => r.arrangement = Some(arrangement(2)),
                    _ => {}
                }
                records.push(r);
            }
        }
        // the practice trial does not count
        records.retain(|r| !(r.session == "s04" && r.trial == 0));
        // brute-force recount
        let expected: Vec<String> = (0..10)
            .map(|s| format!("s{s:02}"))
            .filter(|id| {
                (1..=5).all(|t| records.iter().any(|r| &r.session == id && r.trial == t && r.is_complete()))
            })
            .collect();
        assert_eq!(expected.len(), 7);
        assert_eq!(complete_sessions(&records), expected);
    }

    #[test]
    fn displacement_is_unregistered() {
        let a = arrangement(3);
        let b = Arrangement::new("oak", a.placements.iter().map(|p| Placement { x: p.x + 0.1, ..*p }).collect());
        assert!((displacement_rmsd(&a, &b).unwrap() - 0.1).abs() < 1e-12);
        assert_eq!(displacement_rmsd(&a, &arrangement(2)), None);
    }
}
