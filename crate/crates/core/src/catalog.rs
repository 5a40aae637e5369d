//! Object catalog: manifest loading, validation, and sprite access.
//!
//! A catalog directory contains `catalog.json` (array of objects), an optional
//! `tables.json` (array of `{id, image}`), and the image files both refer to.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};

use image::RgbaImage;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::scene::{ObjectClass, ObjectSpec};

/// Object ids live in `[0, CATALOG_CAPACITY)`.
pub const CATALOG_CAPACITY: u32 = 125;
/// Instances per class in the study catalog.
pub const INSTANCES_PER_CLASS: usize = 25;

pub const MANIFEST_FILE: &str = "catalog.json";
pub const TABLES_FILE: &str = "tables.json";

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} is not valid JSON: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{file} must contain a JSON array")]
    NotAnArray { file: &'static str },
    #[error("record {index} (id {id}): {message}")]
    InvalidRecord {
        index: usize,
        id: String,
        message: String,
    },
    #[error("duplicate object id {0}")]
    DuplicateId(u32),
    #[error("object {id} has id outside [0, {CATALOG_CAPACITY})")]
    IdOutOfRange { id: u32 },
    #[error("object {id}: sprite {path} is missing")]
    MissingSprite { id: u32, path: PathBuf },
    #[error("table {id}: image {path} is missing")]
    MissingTableImage { id: String, path: PathBuf },
    #[error("duplicate table id {0}")]
    DuplicateTable(String),
    #[error("unknown object id {0}")]
    UnknownObject(u32),
    #[error("unknown table `{0}`")]
    UnknownTable(String),
    #[error("decoding image {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableSpec {
    pub id: String,
    /// Background image path, relative to the catalog directory.
    pub image: String,
}

#[derive(Debug, Clone)]
pub struct Catalog {
    root: PathBuf,
    objects: Vec<ObjectSpec>,
    index: BTreeMap<u32, usize>,
    tables: Vec<TableSpec>,
    sprites: Vec<OnceLock<Arc<RgbaImage>>>,
}

impl Catalog {
    /// Builds a catalog from in-memory records. Sprite and table paths are
    /// resolved against `root` lazily, so no asset check happens here.
    pub fn from_parts(
        root: impl Into<PathBuf>,
        mut objects: Vec<ObjectSpec>,
        tables: Vec<TableSpec>,
    ) -> Result<Self, CatalogError> {
        objects.sort_by_key(|o| o.id);
        let mut index = BTreeMap::new();
        for (i, obj) in objects.iter().enumerate() {
            if obj.id >= CATALOG_CAPACITY {
                return Err(CatalogError::IdOutOfRange { id: obj.id });
            }
            if index.insert(obj.id, i).is_some() {
                return Err(CatalogError::DuplicateId(obj.id));
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        for t in &tables {
            if !seen.insert(t.id.clone()) {
                return Err(CatalogError::DuplicateTable(t.id.clone()));
            }
        }
        let sprites = objects.iter().map(|_| OnceLock::new()).collect();
        Ok(Self {
            root: root.into(),
            objects,
            index,
            tables,
            sprites,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Objects sorted by id.
    pub fn objects(&self) -> &[ObjectSpec] {
        &self.objects
    }

    pub fn tables(&self) -> &[TableSpec] {
        &self.tables
    }

    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }

    pub fn get(&self, id: u32) -> Option<&ObjectSpec> {
        self.index.get(&id).map(|&i| &self.objects[i])
    }

    pub fn contains(&self, id: u32) -> bool {
        self.index.contains_key(&id)
    }

    pub fn table(&self, id: &str) -> Option<&TableSpec> {
        self.tables.iter().find(|t| t.id == id)
    }

    pub fn of_class(&self, class: ObjectClass) -> impl Iterator<Item = &ObjectSpec> {
        self.objects.iter().filter(move |o| o.class == class)
    }

    pub fn sprite_path(&self, id: u32) -> Result<PathBuf, CatalogError> {
        let obj = self.get(id).ok_or(CatalogError::UnknownObject(id))?;
        Ok(self.root.join(&obj.sprite))
    }

    /// Decoded sprite, cached after the first load.
    pub fn sprite(&self, id: u32) -> Result<Arc<RgbaImage>, CatalogError> {
        let slot = *self.index.get(&id).ok_or(CatalogError::UnknownObject(id))?;
        if let Some(img) = self.sprites[slot].get() {
            return Ok(img.clone());
        }
        let path = self.root.join(&self.objects[slot].sprite);
        if !path.is_file() {
            return Err(CatalogError::MissingSprite { id, path });
        }
        let img = image::open(&path)
            .map_err(|source| CatalogError::Image { path, source })?
            .to_rgba8();
        Ok(self.sprites[slot].get_or_init(|| Arc::new(img)).clone())
    }

    pub fn table_image(&self, id: &str) -> Result<RgbaImage, CatalogError> {
        let table = self
            .table(id)
            .ok_or_else(|| CatalogError::UnknownTable(id.to_string()))?;
        let path = self.root.join(&table.image);
        if !path.is_file() {
            return Err(CatalogError::MissingTableImage {
                id: id.to_string(),
                path,
            });
        }
        Ok(image::open(&path)
            .map_err(|source| CatalogError::Image { path, source })?
            .to_rgba8())
    }

    pub fn manifest_json(&self) -> String {
        serde_json::to_string_pretty(&self.objects).expect("catalog serializes")
    }
}

fn read_json(path: &Path) -> Result<Value, CatalogError> {
    let text = fs::read_to_string(path).map_err(|source| CatalogError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| CatalogError::Json {
        path: path.to_path_buf(),
        source,
    })
}

fn record_id(value: &Value) -> String {
    value
        .get("id")
        .map(|v| v.to_string())
        .unwrap_or_else(|| "?".to_string())
}

/// Loads and validates a catalog. `path` may be the catalog directory or its manifest file.
pub fn load_catalog(path: impl AsRef<Path>) -> Result<Catalog, CatalogError> {
    let path = path.as_ref();
    let (root, manifest) = if path.is_dir() {
        (path.to_path_buf(), path.join(MANIFEST_FILE))
    } else {
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        (root, path.to_path_buf())
    };

    let Value::Array(records) = read_json(&manifest)? else {
        return Err(CatalogError::NotAnArray {
            file: MANIFEST_FILE,
        });
    };
    let mut objects = Vec::with_capacity(records.len());
    for (index, record) in records.into_iter().enumerate() {
        let id = record_id(&record);
        let obj: ObjectSpec =
            serde_json::from_value(record).map_err(|e| CatalogError::InvalidRecord {
                index,
                id,
                message: e.to_string(),
            })?;
        let sprite = root.join(&obj.sprite);
        if !sprite.is_file() {
            return Err(CatalogError::MissingSprite {
                id: obj.id,
                path: sprite,
            });
        }
        objects.push(obj);
    }

    let tables_path = root.join(TABLES_FILE);
    let tables = if tables_path.exists() {
        let Value::Array(records) = read_json(&tables_path)? else {
            return Err(CatalogError::NotAnArray { file: TABLES_FILE });
        };
        let mut tables = Vec::with_capacity(records.len());
        for (index, record) in records.into_iter().enumerate() {
            let id = record_id(&record);
            let table: TableSpec =
                serde_json::from_value(record).map_err(|e| CatalogError::InvalidRecord {
                    index,
                    id,
                    message: e.to_string(),
                })?;
            let image = root.join(&table.image);
            if !image.is_file() {
                return Err(CatalogError::MissingTableImage {
                    id: table.id,
                    path: image,
                });
            }
            tables.push(table);
        }
        tables
    } else {
        Vec::new()
    };

    Catalog::from_parts(root, objects, tables)
}
