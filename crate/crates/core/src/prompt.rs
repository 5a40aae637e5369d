//! Prompt bundles: the problem-definition text plus the lifted images a
//! multimodal model sees for one prediction.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::catalog::Catalog;
use crate::lifting::{
    objects_as_language, render_grid_marked, render_object_sheets, render_unmarked, GridSpec,
    LiftError, LiftedImage, Mark, Provenance,
};
use crate::scene::{Arrangement, PreferenceContext};

/// Responses requested per prediction.
pub const DEFAULT_SAMPLES: usize = 5;

/// Instruction for language-object, unmarked-arrangement prompting.
pub const OBJECTS_AS_LANGUAGE_TEMPLATE: &str = "My preferences for setting a table are shown in the first images. You are helping me set the table in the final image according to my preferences. What objects should I place in this image, where should I place them, and how should they be oriented? Give a position in [x,y] where each value is a number between 0 and 1. Give rotation as the number of degrees clockwise from image north. Give your answer as a python list formatted as follows: [{'type':object_type, 'id': object_reference_id, 'position': [x, y], ‘rotation’: degrees}]. Give object_id as an integer. Include only this list in your response.";

/// Instruction for marked-object, unmarked-arrangement prompting.
pub const UNMARKED_TEMPLATE: &str = "My preferences for setting a table are shown in the images named final_state_K.jpg. You are helping me set the table in initial_state_1.jpg according to my preferences. What objects should I place in this image, where should I place them, and how should they be oriented? Give a position in [x,y] where each value is a number between 0 and 1. Give rotation as the number of degrees clockwise from image north. Give your answer as a python list formatted as follows: [{`type':object_type, `id': object_reference_id, `position': [x, y], `rotation': degrees}]. Give object_id as an integer. Include only this list in your response.";

/// Instruction for grid-marked arrangements (either object lifting).
pub const GRID_MARKED_TEMPLATE: &str = "My preferences for setting a table are shown in the images named final_state_N.jpg. You are helping me set the table in initial_state_1.jpg according to my preferences. What objects should I place in this image, where should I place them, and how should they be oriented? Please list all grid cells the object will intersect after it is placed. Give the orientation as the closest cardinal direction [N, NE, E, SE, S, SW, W, NW] the object is pointing in after it is placed. The top of the image is N. Give your answer as a python list formatted as follows: [{`type':object_type, `id': object_reference_id, `position':[grid_cell_ids], `cardinal_direction':direction}]. Give grid_cell_ids as a list of string. Give object_id as an integer. Include only this list in your response.";

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("method {0} needs a grid (pass --grid CxR)")]
    MissingGrid(Method),
    #[error("unknown method `{0}` (expected louma, logma, mouma or mogma)")]
    UnknownMethod(String),
    #[error(transparent)]
    Lift(#[from] LiftError),
}

/// Object lifting (Language or Marked objects) combined with arrangement
/// lifting (UnMarked or Grid-Marked arrangements).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Method {
    Louma,
    Logma,
    Mouma,
    Mogma,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Louma, Method::Logma, Method::Mouma, Method::Mogma];

    pub fn marked_objects(self) -> bool {
        matches!(self, Method::Mouma | Method::Mogma)
    }

    pub fn grid_marked(self) -> bool {
        matches!(self, Method::Logma | Method::Mogma)
    }

    pub fn template(self) -> &'static str {
        match self {
            Method::Louma => OBJECTS_AS_LANGUAGE_TEMPLATE,
            Method::Mouma => UNMARKED_TEMPLATE,
            Method::Logma | Method::Mogma => GRID_MARKED_TEMPLATE,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Louma => "LOUMA",
            Method::Logma => "LOGMA",
            Method::Mouma => "MOUMA",
            Method::Mogma => "MOGMA",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = PromptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| PromptError::UnknownMethod(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptImage {
    pub name: String,
    #[serde(skip)]
    pub png: Vec<u8>,
    pub marks: Vec<Mark>,
    pub provenance: Provenance,
}

impl PromptImage {
    fn from_lifted(name: String, lifted: &LiftedImage) -> Result<Self, LiftError> {
        Ok(Self {
            name,
            png: lifted.png_bytes()?,
            marks: lifted.annotations.clone(),
            provenance: lifted.provenance.clone(),
        })
    }

    pub fn media_type(&self) -> &'static str {
        "image/png"
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub method: Method,
    pub text: String,
    pub images: Vec<PromptImage>,
    pub samples: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    /// Free-form tag (e.g. a benchmark case id); not part of the digest.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl PromptBundle {
    /// Stable hex SHA-256 over method, text, sample count, and image names and bytes.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.method.as_str().as_bytes());
        h.update([0]);
        h.update(self.text.as_bytes());
        h.update([0]);
        h.update((self.samples as u64).to_le_bytes());
        for img in &self.images {
            h.update(img.name.as_bytes());
            h.update([0]);
            h.update((img.png.len() as u64).to_le_bytes());
            h.update(&img.png);
        }
        h.finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn image_names(&self) -> impl Iterator<Item = &str> {
        self.images.iter().map(|i| i.name.as_str())
    }
}

pub fn context_image_name(index: usize) -> String {
    format!("final_state_{}.jpg", index + 1)
}

pub const INITIAL_IMAGE_NAME: &str = "initial_state_1.jpg";

pub fn object_sheet_name(class: &str) -> String {
    format!("objects_{class}.jpg")
}

fn lift_arrangement(
    a: &Arrangement,
    catalog: &Catalog,
    grid: Option<&GridSpec>,
) -> Result<LiftedImage, LiftError> {
    match grid {
        Some(g) => render_grid_marked(a, catalog, g),
        None => render_unmarked(a, catalog),
    }
}

/// Assembles the prompt for one prediction. Context renders and the initial
/// table are grid-marked exactly when the method is.
pub fn build_prompt(
    method: Method,
    context: &PreferenceContext,
    catalog: &Catalog,
    initial: &Arrangement,
    grid: Option<&GridSpec>,
) -> Result<PromptBundle, PromptError> {
    let grid = if method.grid_marked() {
        Some(grid.ok_or(PromptError::MissingGrid(method))?)
    } else {
        None
    };

    let mut images = Vec::with_capacity(context.len() + 6);
    for (i, entry) in context.entries.iter().enumerate() {
        let lifted = lift_arrangement(&entry.arrangement, catalog, grid)?;
        images.push(PromptImage::from_lifted(context_image_name(i), &lifted)?);
    }
    let lifted = lift_arrangement(initial, catalog, grid)?;
    images.push(PromptImage::from_lifted(
        INITIAL_IMAGE_NAME.to_string(),
        &lifted,
    )?);
    if method.marked_objects() {
        for sheet in render_object_sheets(catalog)? {
            let class = sheet
                .provenance
                .class
                .map(|c| c.as_str())
                .unwrap_or("objects");
            images.push(PromptImage::from_lifted(object_sheet_name(class), &sheet)?);
        }
    }

    let mut text = String::from(method.template());
    if !context.is_empty() {
        text.push_str("\n\n");
        for (i, entry) in context.entries.iter().enumerate() {
            text.push_str(&format!(
                "Placement order in {}: {}\n",
                context_image_name(i),
                entry.order
            ));
        }
    }
    if method.marked_objects() {
        text.push_str(
            "\n\nEach object sheet shows every available object of one type; the number on each object is its object_reference_id.",
        );
    } else {
        text.push_str("\n\nAvailable objects (object_reference_id: features):\n");
        text.push_str(&objects_as_language(catalog));
    }
    let names: Vec<&str> = images.iter().map(|i| i.name.as_str()).collect();
    text.push_str(&format!("\n\nAttached images, in order: {}", names.join(", ")));
    if let Some(g) = grid {
        text.push_str(&format!(
            "\nGrid: {} columns labelled A-{} and {} rows labelled 1-{}.",
            g.cols,
            (b'A' + g.cols as u8 - 1) as char,
            g.rows,
            g.rows
        ));
    }

    Ok(PromptBundle {
        method,
        text,
        images,
        samples: DEFAULT_SAMPLES,
        grid: grid.copied(),
        label: None,
    })
}
