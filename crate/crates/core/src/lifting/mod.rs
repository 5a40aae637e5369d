//! Lifting functions: turn catalog objects and arrangements into language or
//! annotated images, and decode grid/compass answers back into coordinates.

mod font;
mod grid;
mod render;

use std::collections::BTreeMap;
use std::io::Cursor;
use std::path::{Path, PathBuf};

use image::{ImageFormat, RgbaImage};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{Catalog, CatalogError};
use crate::scene::{Color, Material, ObjectClass};

pub use grid::{
    cardinal_to_degrees, cell_centroid, degrees_to_cardinal, Cardinal, CellId, GridSpec,
};
pub use render::{
    cells_intersected, cells_overlapping, class_scale, footprint_polygon, overlay_grid,
    render_grid_marked, render_object_sheets, render_unmarked, sprite_footprint, Footprint,
    CANVAS_HEIGHT, CANVAS_WIDTH,
};

/// Style used for every set-of-mark overlay, recorded in provenance.
pub const MARK_STYLE: &str = "black 5x7 bitmap text on white box, black 1px border";

#[derive(Debug, Error)]
pub enum LiftError {
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error("invalid grid `{0}` (expected CxR with 1..=26 columns)")]
    BadGrid(String),
    #[error("cell `{cell}` does not exist on a {grid} grid")]
    BadCell { cell: String, grid: GridSpec },
    #[error("unknown cardinal direction `{0}`")]
    BadCardinal(String),
    #[error("encoding image: {0}")]
    Encode(#[from] image::ImageError),
    #[error("writing {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mark {
    pub id: String,
    pub px: f64,
    pub py: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LiftingKind {
    ObjectSheet,
    Unmarked,
    GridMarked,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub lifting: LiftingKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub table: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub class: Option<ObjectClass>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    pub objects: Vec<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mark_style: Option<String>,
}

#[derive(Debug, Clone)]
pub struct LiftedImage {
    pub pixels: RgbaImage,
    pub annotations: Vec<Mark>,
    pub provenance: Provenance,
}

#[derive(Serialize)]
struct Sidecar<'a> {
    marks: &'a [Mark],
}

impl LiftedImage {
    pub fn png_bytes(&self) -> Result<Vec<u8>, LiftError> {
        let mut buf = Cursor::new(Vec::new());
        self.pixels.write_to(&mut buf, ImageFormat::Png)?;
        Ok(buf.into_inner())
    }

    /// Annotation sidecar: `{"marks":[{"id","px","py"}]}`.
    pub fn sidecar_json(&self) -> String {
        serde_json::to_string_pretty(&Sidecar {
            marks: &self.annotations,
        })
        .expect("marks serialize")
    }

    /// Writes `<stem>.png` and `<stem>.marks.json` into `dir`.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<PathBuf, LiftError> {
        let png = dir.join(format!("{stem}.png"));
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| LiftError::Io { path, source }
        };
        std::fs::write(&png, self.png_bytes()?).map_err(io(&png))?;
        let sidecar = dir.join(format!("{stem}.marks.json"));
        std::fs::write(&sidecar, self.sidecar_json()).map_err(io(&sidecar))?;
        Ok(png)
    }
}

/// Feature dictionary for one object, in the order models were shown it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LanguageEntry {
    pub color1: Color,
    pub material1: Material,
    pub shape: String,
    pub pattern: String,
    pub texture: String,
    pub class: ObjectClass,
    pub material2: Material,
    pub color2: Color,
}

/// JSON object keyed by object id, each value the object's feature dictionary.
pub fn objects_as_language(catalog: &Catalog) -> String {
    let entries: BTreeMap<u32, LanguageEntry> = catalog
        .objects()
        .iter()
        .map(|o| {
            (
                o.id,
                LanguageEntry {
                    color1: o.color1,
                    material1: o.material1,
                    shape: o.shape.clone(),
                    pattern: o.pattern.clone(),
                    texture: o.texture.clone(),
                    class: o.class,
                    material2: o.material2,
                    color2: o.color2,
                },
            )
        })
        .collect();
    serde_json::to_string_pretty(&entries).expect("language entries serialize")
}
