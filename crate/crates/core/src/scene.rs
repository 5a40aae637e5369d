//! Domain types shared by every stage of the pipeline.
//!
//! Coordinates are normalized image coordinates: origin at the top-left
//! corner of the table image, `x` to the right, `y` downward, both in `[0, 1]`.
//! Rotations are degrees clockwise from image north, in `[0, 360)`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Minimum number of objects a participant must place for an arrangement to count.
pub const STUDY_MIN_OBJECTS: usize = 3;

#[derive(Debug, Error, PartialEq)]
pub enum SceneError {
    #[error("rotation must be finite, got {0}")]
    NonFiniteRotation(f64),
    #[error("unknown {kind} `{value}`")]
    UnknownToken { kind: &'static str, value: String },
}

macro_rules! token_enum {
    ($(#[$meta:meta])* $name:ident, $kind:literal, { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(rename_all = "lowercase")]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = SceneError;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                let lower = s.trim().to_ascii_lowercase();
                match lower.as_str() {
                    $($text => Ok($name::$variant),)+
                    _ => Err(SceneError::UnknownToken { kind: $kind, value: s.to_string() }),
                }
            }
        }
    };
}

token_enum!(
    /// Utensil type. The declaration order is the fixed tie-break order used by aggregation.
    ObjectClass, "object class", {
        Cup => "cup",
        Fork => "fork",
        Knife => "knife",
        Plate => "plate",
        Spoon => "spoon",
    }
);

token_enum!(Color, "color", {
    Beige => "beige",
    Black => "black",
    Blue => "blue",
    Brown => "brown",
    Gold => "gold",
    Gray => "gray",
    Green => "green",
    Pink => "pink",
    Purple => "purple",
    Red => "red",
    Silver => "silver",
    White => "white",
    Yellow => "yellow",
});

token_enum!(Material, "material", {
    Ceramic => "ceramic",
    Glass => "glass",
    Metal => "metal",
    Plastic => "plastic",
    Wood => "wood",
});

impl ObjectClass {
    /// Lenient parse for model output: accepts plurals ("forks") and surrounding whitespace.
    pub fn parse_lenient(s: &str) -> Option<Self> {
        let lower = s.trim().to_ascii_lowercase();
        if let Ok(class) = lower.parse() {
            return Some(class);
        }
        lower
            .strip_suffix("es")
            .and_then(|stem| stem.parse().ok())
            .or_else(|| lower.strip_suffix('s').and_then(|stem| stem.parse().ok()))
    }
}

/// One catalog utensil. Single-color (or single-material) objects repeat the
/// first value in the second slot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub id: u32,
    pub color1: Color,
    pub material1: Material,
    pub shape: String,
    pub pattern: String,
    pub texture: String,
    pub class: ObjectClass,
    pub material2: Material,
    pub color2: Color,
    /// Sprite image path, relative to the catalog directory.
    pub sprite: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub object: u32,
    pub x: f64,
    pub y: f64,
    pub rotation: f64,
}

impl Placement {
    pub fn new(object: u32, x: f64, y: f64, rotation: f64) -> Self {
        Self {
            object,
            x,
            y,
            rotation,
        }
    }

    pub fn in_bounds(&self) -> bool {
        (0.0..=1.0).contains(&self.x)
            && (0.0..=1.0).contains(&self.y)
            && (0.0..360.0).contains(&self.rotation)
    }

    pub fn position(&self) -> [f64; 2] {
        [self.x, self.y]
    }
}

/// Placements on one table. Vector order is placement order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Arrangement {
    pub table: String,
    pub placements: Vec<Placement>,
}

impl Arrangement {
    pub fn new(table: impl Into<String>, placements: Vec<Placement>) -> Self {
        Self {
            table: table.into(),
            placements,
        }
    }

    pub fn empty(table: impl Into<String>) -> Self {
        Self::new(table, Vec::new())
    }

    pub fn len(&self) -> usize {
        self.placements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.placements.is_empty()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("arrangement serializes")
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }
}

/// One prior arrangement together with its placement-order description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextEntry {
    pub arrangement: Arrangement,
    pub order: String,
}

/// A single person's history of arrangements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceContext {
    pub owner: String,
    pub entries: Vec<ContextEntry>,
}

impl PreferenceContext {
    pub fn new(owner: impl Into<String>) -> Self {
        Self {
            owner: owner.into(),
            entries: Vec::new(),
        }
    }

    /// Builds a context whose order descriptions are derived from the arrangements.
    pub fn from_arrangements(
        owner: impl Into<String>,
        arrangements: impl IntoIterator<Item = Arrangement>,
        catalog: &crate::Catalog,
    ) -> Self {
        let entries = arrangements
            .into_iter()
            .map(|arrangement| ContextEntry {
                order: describe_order(&arrangement, catalog),
                arrangement,
            })
            .collect();
        Self {
            owner: owner.into(),
            entries,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Plain-language placement order, e.g. `1. plate (id 3), 2. fork (id 27)`.
pub fn describe_order(arrangement: &Arrangement, catalog: &crate::Catalog) -> String {
    arrangement
        .placements
        .iter()
        .enumerate()
        .map(|(i, p)| match catalog.get(p.object) {
            Some(obj) => format!("{}. {} (id {})", i + 1, obj.class, p.object),
            None => format!("{}. object (id {})", i + 1, p.object),
        })
        .collect::<Vec<_>>()
        .join(", ")
}

/// Wraps any finite angle into `[0, 360)`.
pub fn normalize_rotation(deg: f64) -> Result<f64, SceneError> {
    if !deg.is_finite() {
        return Err(SceneError::NonFiniteRotation(deg));
    }
    let wrapped = deg.rem_euclid(360.0);
    // rem_euclid can round up to exactly 360 for tiny negative inputs
    Ok(if wrapped >= 360.0 { 0.0 } else { wrapped })
}

pub fn arrangement_valid_for_study(arrangement: &Arrangement) -> bool {
    arrangement.len() >= STUDY_MIN_OBJECTS && arrangement.placements.iter().all(Placement::in_bounds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn arrangement(points: &[(f64, f64)]) -> Arrangement {
        Arrangement::new(
            "oak",
            points
                .iter()
                .enumerate()
                .map(|(i, &(x, y))| Placement::new(i as u32, x, y, 0.0))
                .collect(),
        )
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_rotation(0.0).unwrap(), 0.0);
        assert_eq!(normalize_rotation(365.0).unwrap(), 5.0);
        assert_eq!(normalize_rotation(-90.0).unwrap(), 270.0);
        assert_eq!(normalize_rotation(360.0).unwrap(), 0.0);
        assert_eq!(normalize_rotation(-1e-300).unwrap(), 0.0);
    }

    #[test]
    fn normalize_rejects_non_finite() {
        assert!(normalize_rotation(f64::NAN).is_err());
        assert!(normalize_rotation(f64::INFINITY).is_err());
    }

    #[test]
    fn study_validity() {
        assert!(arrangement_valid_for_study(&arrangement(&[(0.1, 0.1), (0.5, 0.5), (0.9, 0.9)])));
        assert!(!arrangement_valid_for_study(&arrangement(&[(0.1, 0.1), (0.5, 0.5)])));
        assert!(!arrangement_valid_for_study(&arrangement(&[(0.1, 0.1), (1.2, 0.5), (0.9, 0.9)])));
    }

    #[test]
    fn lenient_class_parse() {
        assert_eq!(ObjectClass::parse_lenient(" Forks "), Some(ObjectClass::Fork));
        assert_eq!(ObjectClass::parse_lenient("knives"), None);
        assert_eq!(ObjectClass::parse_lenient("plates"), Some(ObjectClass::Plate));
        assert_eq!(ObjectClass::parse_lenient("bowl"), None);
    }

    #[test]
    fn unknown_color_is_error() {
        assert!("teal".parse::<Color>().is_err());
        assert_eq!("Red".parse::<Color>().unwrap(), Color::Red);
    }

    proptest! {
        #[test]
        fn normalize_idempotent_and_congruent(deg in -1.0e6f64..1.0e6) {
            let once = normalize_rotation(deg).unwrap();
            prop_assert!((0.0..360.0).contains(&once));
            prop_assert_eq!(normalize_rotation(once).unwrap(), once);
            let k = ((deg - once) / 360.0).round();
            prop_assert!((deg - once - k * 360.0).abs() < 1e-6);
        }

        #[test]
        fn arrangement_json_round_trip(
            placements in proptest::collection::vec((0u32..125, 0.0f64..=1.0, 0.0f64..=1.0, 0.0f64..360.0), 0..8)
        ) {
            let a = Arrangement::new(
                "walnut",
                placements.into_iter().map(|(o, x, y, r)| Placement::new(o, x, y, r)).collect(),
            );
            let back = Arrangement::from_json(&a.to_json()).unwrap();
            prop_assert_eq!(back, a);
        }
    }
}
