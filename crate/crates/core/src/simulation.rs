//! Simulated-preference benchmark: three layouts, three color preferences and
//! two noise profiles, each on two tables, with reconstruction and
//! generalization cases.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::Catalog;
use crate::scene::{normalize_rotation, Arrangement, Color, ObjectClass, Placement};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("catalog has no {color} {class}")]
    NoMatchingObject { class: ObjectClass, color: Color },
    #[error("catalog needs at least two tables, found {0}")]
    TooFewTables(usize),
    #[error("noise must be finite and non-negative")]
    BadNoise,
}

/// Placement order shared by every simulated preference.
pub const PLACEMENT_ORDER: [ObjectClass; 5] = [
    ObjectClass::Plate,
    ObjectClass::Fork,
    ObjectClass::Knife,
    ObjectClass::Spoon,
    ObjectClass::Cup,
];

pub const COLOR_PREFERENCES: [Color; 3] = [Color::Red, Color::Blue, Color::Yellow];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layout {
    Standard,
    Mirrored,
    Abstract,
}

impl Layout {
    pub const ALL: [Layout; 3] = [Layout::Standard, Layout::Mirrored, Layout::Abstract];

    pub fn as_str(self) -> &'static str {
        match self {
            Layout::Standard => "standard",
            Layout::Mirrored => "mirrored",
            Layout::Abstract => "abstract",
        }
    }
}

impl fmt::Display for Layout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemplateSlot {
    pub class: ObjectClass,
    pub x: f64,
    pub y: f64,
    pub rotation: f64,
}

/// Nominal positions for each class, listed in placement order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutTemplate {
    pub layout: Layout,
    pub slots: Vec<TemplateSlot>,
}

impl LayoutTemplate {
    pub fn slot(&self, class: ObjectClass) -> Option<&TemplateSlot> {
        self.slots.iter().find(|s| s.class == class)
    }

    /// Left-right reflection: `x -> 1 - x`, rotations reflected about north.
    pub fn mirrored(&self) -> Self {
        let layout = match self.layout {
            Layout::Standard => Layout::Mirrored,
            Layout::Mirrored => Layout::Standard,
            Layout::Abstract => Layout::Abstract,
        };
        Self {
            layout,
            slots: self
                .slots
                .iter()
                .map(|s| TemplateSlot {
                    x: 1.0 - s.x,
                    rotation: (360.0 - s.rotation) % 360.0,
                    ..*s
                })
                .collect(),
        }
    }
}

fn slot(class: ObjectClass, x: f64, y: f64, rotation: f64) -> TemplateSlot {
    TemplateSlot {
        class,
        x,
        y,
        rotation,
    }
}

/// Coordinates are dyadic so reflection is exact in floating point.
pub fn layout_template(layout: Layout) -> LayoutTemplate {
    use ObjectClass::*;
    match layout {
        Layout::Standard => LayoutTemplate {
            layout,
            slots: vec![
                slot(Plate, 0.5, 0.625, 0.0),
                slot(Fork, 0.3125, 0.625, 0.0),
                slot(Knife, 0.6875, 0.625, 0.0),
                slot(Spoon, 0.8125, 0.625, 0.0),
                slot(Cup, 0.8125, 0.375, 0.0),
            ],
        },
        Layout::Mirrored => layout_template(Layout::Standard).mirrored(),
        Layout::Abstract => LayoutTemplate {
            layout,
            slots: vec![
                slot(Plate, 0.3125, 0.3125, 0.0),
                slot(Fork, 0.5, 0.5, 45.0),
                slot(Knife, 0.625, 0.625, 45.0),
                slot(Spoon, 0.75, 0.75, 45.0),
                slot(Cup, 0.125, 0.125, 0.0),
            ],
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Noise {
    /// Positional standard deviation, normalized units.
    pub position: f64,
    /// Rotational standard deviation, degrees.
    pub rotation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseProfile {
    pub name: String,
    pub noise: Noise,
}

/// The two noise profiles: none, and moderate (0.02 position, 5 degrees).
pub fn noise_profiles() -> [NoiseProfile; 2] {
    let profile = |name: &str, position, rotation| NoiseProfile {
        name: name.to_string(),
        noise: Noise { position, rotation },
    };
    [profile("zero", 0.0, 0.0), profile("moderate", 0.02, 5.0)]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimPreferenceSpec {
    pub id: String,
    pub layout: Layout,
    pub color: Color,
    pub table: String,
    pub noise_profile: String,
    pub noise: Noise,
    pub seed: u64,
    pub order: Vec<ObjectClass>,
}

impl SimPreferenceSpec {
    pub fn new(layout: Layout, color: Color, table: &str, profile: &NoiseProfile, seed: u64) -> Self {
        Self {
            id: format!("{layout}-{color}-{}-{table}", profile.name),
            layout,
            color,
            table: table.to_string(),
            noise_profile: profile.name.to_string(),
            noise: profile.noise,
            seed,
            order: PLACEMENT_ORDER.to_vec(),
        }
    }
}

fn normal(sigma: f64) -> Result<Option<Normal<f64>>, SimError> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(SimError::BadNoise);
    }
    Ok((sigma > 0.0).then(|| Normal::new(0.0, sigma).expect("valid sigma")))
}

/// Draw `draw` of a preference: template perturbed by Gaussian noise (clamped
/// to the table), with each object picked uniformly among catalog instances
/// of the preferred color. Deterministic in `(spec.seed, draw)`.
const OBJECT_STREAM: u64 = u64::MAX;

pub fn sample_arrangement_draw(
    spec: &SimPreferenceSpec,
    catalog: &Catalog,
    table: &str,
    draw: u64,
) -> Result<Arrangement, SimError> {
    let template = layout_template(spec.layout);
    let pos = normal(spec.noise.position)?;
    let rot = normal(spec.noise.rotation)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(draw);
    // instances are fixed per preference; only geometry varies between draws
    let mut pick = ChaCha8Rng::seed_from_u64(spec.seed);
    pick.set_stream(OBJECT_STREAM);

    let mut placements = Vec::with_capacity(spec.order.len());
    for &class in &spec.order {
        let candidates: Vec<u32> = catalog
            .of_class(class)
            .filter(|o| o.color1 == spec.color)
            .map(|o| o.id)
            .collect();
        if candidates.is_empty() {
            return Err(SimError::NoMatchingObject {
                class,
                color: spec.color,
            });
        }
        let object = candidates[pick.random_range(0..candidates.len())];
        let Some(s) = template.slot(class) else {
            continue;
        };
        let mut jitter = |d: &Option<Normal<f64>>| d.as_ref().map_or(0.0, |d| d.sample(&mut rng));
        let x = (s.x + jitter(&pos)).clamp(0.0, 1.0);
        let y = (s.y + jitter(&pos)).clamp(0.0, 1.0);
        let r = normalize_rotation(s.rotation + jitter(&rot)).map_err(|_| SimError::BadNoise)?;
        placements.push(Placement::new(object, x, y, r));
    }
    Ok(Arrangement::new(table, placements))
}

pub fn sample_arrangement(spec: &SimPreferenceSpec, catalog: &Catalog) -> Result<Arrangement, SimError> {
    sample_arrangement_draw(spec, catalog, &spec.table, 0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Reconstruction,
    Generalization,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Reconstruction => "reconstruction",
            Split::Generalization => "generalization",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentCase {
    pub id: String,
    pub spec: SimPreferenceSpec,
    pub split: Split,
    pub context: Vec<Arrangement>,
    pub target_table: String,
    pub ground_truth: Arrangement,
}

impl ExperimentCase {
    /// The empty table the model is asked to set.
    pub fn initial(&self) -> Arrangement {
        Arrangement::empty(self.target_table.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Benchmark {
    pub seed: u64,
    pub context_len: usize,
    pub order: Vec<ObjectClass>,
    pub layouts: Vec<LayoutTemplate>,
    pub noise_profiles: Vec<NoiseProfile>,
    pub tables: Vec<String>,
    pub cases: Vec<ExperimentCase>,
}

impl Benchmark {
    pub fn count(&self, split: Split) -> usize {
        self.cases.iter().filter(|c| c.split == split).count()
    }
}

/// 3 layouts x 3 colors x 2 noise profiles on each of the first two catalog
/// tables gives 36 preferences; each yields a reconstruction case (target on
/// the context table) and a generalization case (target on the other table).
pub fn generate_benchmark(catalog: &Catalog, context_len: usize, seed: u64) -> Result<Benchmark, SimError> {
    let tables: Vec<String> = catalog.tables().iter().take(2).map(|t| t.id.clone()).collect();
    if tables.len() < 2 {
        return Err(SimError::TooFewTables(tables.len()));
    }
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let mut cases = Vec::with_capacity(72);
    for layout in Layout::ALL {
        for color in COLOR_PREFERENCES {
            for profile in &noise_profiles() {
                for (ti, table) in tables.iter().enumerate() {
                    let spec = SimPreferenceSpec::new(layout, color, table, profile, master.random());
                    let other = &tables[1 - ti];
                    let context = (0..context_len as u64)
                        .map(|k| sample_arrangement_draw(&spec, catalog, table, k))
                        .collect::<Result<Vec<_>, _>>()?;
                    let held_out = context_len as u64;
                    for (split, target) in [(Split::Reconstruction, table), (Split::Generalization, other)] {
                        cases.push(ExperimentCase {
                            id: format!("{}-{}", spec.id, split.as_str()),
                            spec: spec.clone(),
                            split,
                            context: context.clone(),
                            target_table: target.clone(),
                            ground_truth: sample_arrangement_draw(&spec, catalog, target, held_out)?,
                        });
                    }
                }
            }
        }
    }
    Ok(Benchmark {
        seed,
        context_len,
        order: PLACEMENT_ORDER.to_vec(),
        layouts: Layout::ALL.into_iter().map(layout_template).collect(),
        noise_profiles: noise_profiles().to_vec(),
        tables,
        cases,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::placeholder::{placeholder_objects, placeholder_tables};

    fn catalog() -> Catalog {
        Catalog::from_parts("/x", placeholder_objects(), placeholder_tables()).unwrap()
    }

    fn x_of(t: &LayoutTemplate, c: ObjectClass) -> f64 {
        t.slot(c).unwrap().x
    }

    #[test]
    fn standard_and_mirrored_orderings() {
        use ObjectClass::*;
        let s = layout_template(Layout::Standard);
        assert!(x_of(&s, Fork) < x_of(&s, Plate) && x_of(&s, Plate) < x_of(&s, Knife));
        let m = layout_template(Layout::Mirrored);
        assert!(x_of(&m, Knife) < x_of(&m, Plate) && x_of(&m, Plate) < x_of(&m, Fork));
        assert_eq!(s.mirrored().mirrored(), s);
        assert_eq!(layout_template(Layout::Abstract).mirrored().mirrored().slots, layout_template(Layout::Abstract).slots);
    }

    #[test]
    fn zero_noise_is_template() {
        let cat = catalog();
        let spec = SimPreferenceSpec::new(Layout::Standard, Color::Blue, "oak", &noise_profiles()[0], 7);
        let a = sample_arrangement(&spec, &cat).unwrap();
        let t = layout_template(Layout::Standard);
        for (p, class) in a.placements.iter().zip(PLACEMENT_ORDER) {
            let o = cat.get(p.object).unwrap();
            assert_eq!((o.class, o.color1), (class, Color::Blue));
            let s = t.slot(class).unwrap();
            assert_eq!((p.x, p.y, p.rotation), (s.x, s.y, s.rotation));
        }
        assert_eq!(a, sample_arrangement(&spec, &cat).unwrap());
    }

    #[test]
    fn missing_color_is_error() {
        let cat = Catalog::from_parts("/x", vec![], placeholder_tables()).unwrap();
        let spec = SimPreferenceSpec::new(Layout::Standard, Color::Red, "oak", &noise_profiles()[0], 1);
        assert_eq!(
            sample_arrangement(&spec, &cat),
            Err(SimError::NoMatchingObject { class: ObjectClass::Plate, color: Color::Red })
        );
    }

    #[test]
    fn positional_noise_has_requested_spread() {
        let cat = catalog();
        let spec = SimPreferenceSpec::new(Layout::Standard, Color::Red, "oak", &noise_profiles()[1], 99);
        let xs: Vec<f64> = (0..1000)
            .map(|k| sample_arrangement_draw(&spec, &cat, "oak", k).unwrap().placements[0].x - 0.5)
            .collect();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
        assert!((var.sqrt() - 0.02).abs() < 0.002, "std {}", var.sqrt());
    }

    #[test]
    fn benchmark_shape() {
        let cat = catalog();
        let b = generate_benchmark(&cat, 2, 42).unwrap();
        assert_eq!(b.cases.len(), 72);
        assert_eq!(b.count(Split::Reconstruction), 36);
        assert_eq!(b.count(Split::Generalization), 36);
        for c in &b.cases {
            assert_eq!(c.context.len(), 2);
            let ctx_table = &c.spec.table;
            assert_eq!(c.split == Split::Reconstruction, &c.target_table == ctx_table);
            for a in c.context.iter().chain([&c.ground_truth]) {
                assert!(a.placements.iter().all(|p| cat.get(p.object).unwrap().color1 == c.spec.color));
            }
        }
        assert_eq!(b, generate_benchmark(&cat, 2, 42).unwrap());
        assert!(generate_benchmark(&cat, 0, 42).unwrap().cases.iter().all(|c| c.context.is_empty()));
    }
}
