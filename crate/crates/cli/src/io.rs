use std::path::{Path, PathBuf};

use anyhow::Context;
use degusta_core::dataset::{read_manifest, write_atomic, BenchmarkManifest, DatasetStore, ManifestEntry, StudyRecord};
use degusta_core::prompt::Method;
use serde::de::DeserializeOwned;
use serde::Serialize;

pub fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("output serializes") + "\n"
}

pub fn print_json<T: Serialize>(value: &T) {
    print!("{}", to_json(value));
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    write_atomic(path, to_json(value).as_bytes()).with_context(|| format!("writing {}", path.display()))
}

pub fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    write_atomic(path, text.as_bytes()).with_context(|| format!("writing {}", path.display()))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Parses one JSON value per non-blank line.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> anyhow::Result<Vec<T>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).with_context(|| format!("{} line {}", path.display(), i + 1)))
        .collect()
}

/// Study records from a data directory or a JSON-lines export.
pub fn load_records(path: &Path) -> anyhow::Result<Vec<StudyRecord>> {
    if path.is_dir() {
        let store = DatasetStore::open(path).with_context(|| format!("opening {}", path.display()))?;
        Ok(store.records()?)
    } else {
        read_jsonl(path)
    }
}

pub struct Manifest {
    pub root: PathBuf,
    pub manifest: BenchmarkManifest,
}

impl Manifest {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let manifest = read_manifest(path).with_context(|| format!("reading manifest {}", path.display()))?;
        let root = if path.is_dir() {
            path.to_path_buf()
        } else {
            path.parent().map(Path::to_path_buf).unwrap_or_default()
        };
        Ok(Self { root, manifest })
    }

    pub fn cases(&self) -> impl Iterator<Item = (&ManifestEntry, PathBuf)> {
        self.manifest.cases.iter().map(|e| (e, self.root.join(&e.dir)))
    }
}

pub fn prediction_file(case_dir: &Path, method: Method) -> PathBuf {
    case_dir.join(format!("prediction_{}.json", method.as_str().to_lowercase()))
}

/// Refuses to write into a directory that already has content.
pub fn fresh_dir(dir: &Path) -> anyhow::Result<()> {
    if let Ok(mut entries) = std::fs::read_dir(dir) {
        if entries.next().is_some() {
            return Err(crate::exit::UsageError(format!("{} exists and is not empty", dir.display())).into());
        }
    }
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}
