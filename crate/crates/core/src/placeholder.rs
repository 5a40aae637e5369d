//! Procedurally drawn stand-in catalog: 125 flat-shaded utensil sprites and
//! five table backgrounds. Used by tests, the simulated benchmark, and demos
//! when the licensed study images are not available.

use std::fs;
use std::path::Path;

use image::{Rgba, RgbaImage};

use crate::catalog::{load_catalog, Catalog, CatalogError, TableSpec, INSTANCES_PER_CLASS};
use crate::scene::{Color, Material, ObjectClass, ObjectSpec};

pub const TABLE_WIDTH: u32 = 800;
pub const TABLE_HEIGHT: u32 = 600;

const TABLES: &[(&str, [u8; 3], [u8; 3])] = &[
    ("oak", [196, 160, 112], [184, 148, 100]),
    ("walnut", [120, 84, 60], [110, 76, 54]),
    ("marble", [228, 228, 222], [214, 214, 210]),
    ("linen", [236, 226, 200], [226, 216, 190]),
    ("slate", [92, 100, 108], [84, 92, 100]),
];

pub fn color_rgb(color: Color) -> [u8; 3] {
    match color {
        Color::Beige => [225, 205, 165],
        Color::Black => [25, 25, 25],
        Color::Blue => [40, 80, 200],
        Color::Brown => [120, 70, 30],
        Color::Gold => [212, 175, 55],
        Color::Gray => [128, 128, 128],
        Color::Green => [40, 150, 60],
        Color::Pink => [240, 150, 190],
        Color::Purple => [130, 50, 160],
        Color::Red => [200, 30, 30],
        Color::Silver => [192, 192, 200],
        Color::White => [250, 250, 250],
        Color::Yellow => [240, 215, 30],
    }
}

fn materials_for(class: ObjectClass) -> &'static [Material] {
    match class {
        ObjectClass::Cup => &[Material::Ceramic, Material::Glass, Material::Plastic],
        ObjectClass::Plate => &[
            Material::Ceramic,
            Material::Glass,
            Material::Plastic,
            Material::Wood,
        ],
        ObjectClass::Fork | ObjectClass::Knife | ObjectClass::Spoon => {
            &[Material::Metal, Material::Plastic, Material::Wood]
        }
    }
}

fn shapes_for(class: ObjectClass) -> &'static [&'static str] {
    match class {
        ObjectClass::Cup => &["round", "square", "tall", "short", "tapered"],
        ObjectClass::Plate => &["round", "square", "oval", "rimmed", "coupe"],
        _ => &["straight", "curved", "slim", "wide", "ornate"],
    }
}

const PATTERNS: &[&str] = &["solid", "striped", "dotted", "floral", "plain"];
const TEXTURES: &[&str] = &["smooth", "matte", "glossy", "rough", "brushed"];

/// The placeholder object records, ids `class_index * 25 + instance`.
pub fn placeholder_objects() -> Vec<ObjectSpec> {
    let mut out = Vec::with_capacity(ObjectClass::ALL.len() * INSTANCES_PER_CLASS);
    for (k, &class) in ObjectClass::ALL.iter().enumerate() {
        let materials = materials_for(class);
        for i in 0..INSTANCES_PER_CLASS {
            let id = (k * INSTANCES_PER_CLASS + i) as u32;
            let color1 = Color::ALL[i % Color::ALL.len()];
            let color2 = if i < Color::ALL.len() {
                color1
            } else {
                Color::ALL[(i + 5) % Color::ALL.len()]
            };
            let material1 = materials[i % materials.len()];
            let material2 = if i % 3 == 2 {
                materials[(i + 1) % materials.len()]
            } else {
                material1
            };
            out.push(ObjectSpec {
                id,
                color1,
                material1,
                shape: shapes_for(class)[i % 5].to_string(),
                pattern: PATTERNS[(i / 5) % 5].to_string(),
                texture: TEXTURES[(i + k) % 5].to_string(),
                class,
                material2,
                color2,
                sprite: format!("sprites/{id:03}.png"),
            });
        }
    }
    out
}

fn rgba(c: [u8; 3]) -> Rgba<u8> {
    Rgba([c[0], c[1], c[2], 255])
}

fn shade(c: [u8; 3]) -> [u8; 3] {
    [c[0] / 2 + 20, c[1] / 2 + 20, c[2] / 2 + 20]
}

fn fill_ellipse(img: &mut RgbaImage, cx: f64, cy: f64, rx: f64, ry: f64, color: Rgba<u8>) {
    for y in 0..img.height() {
        for x in 0..img.width() {
            let dx = (x as f64 + 0.5 - cx) / rx;
            let dy = (y as f64 + 0.5 - cy) / ry;
            if dx * dx + dy * dy <= 1.0 {
                img.put_pixel(x, y, color);
            }
        }
    }
}

fn fill_rect(img: &mut RgbaImage, x0: u32, y0: u32, x1: u32, y1: u32, color: Rgba<u8>) {
    for y in y0..y1.min(img.height()) {
        for x in x0..x1.min(img.width()) {
            img.put_pixel(x, y, color);
        }
    }
}

/// Draws a sprite pointing north (handles at the bottom for utensils).
pub fn draw_sprite(obj: &ObjectSpec) -> RgbaImage {
    let c1 = color_rgb(obj.color1);
    let c2 = if obj.color2 == obj.color1 {
        shade(c1)
    } else {
        color_rgb(obj.color2)
    };
    match obj.class {
        ObjectClass::Plate => {
            let mut img = RgbaImage::new(96, 96);
            fill_ellipse(&mut img, 48.0, 48.0, 46.0, 46.0, rgba(c2));
            fill_ellipse(&mut img, 48.0, 48.0, 40.0, 40.0, rgba(c1));
            fill_ellipse(&mut img, 48.0, 48.0, 28.0, 28.0, rgba(c2));
            fill_ellipse(&mut img, 48.0, 48.0, 26.0, 26.0, rgba(c1));
            img
        }
        ObjectClass::Cup => {
            let mut img = RgbaImage::new(64, 64);
            fill_ellipse(&mut img, 54.0, 32.0, 8.0, 6.0, rgba(c2));
            fill_ellipse(&mut img, 28.0, 32.0, 24.0, 24.0, rgba(c2));
            fill_ellipse(&mut img, 28.0, 32.0, 19.0, 19.0, rgba(c1));
            img
        }
        ObjectClass::Fork => {
            let mut img = RgbaImage::new(24, 96);
            fill_rect(&mut img, 9, 40, 15, 96, rgba(c1));
            fill_rect(&mut img, 3, 24, 21, 40, rgba(c2));
            for tine in 0..4 {
                let x0 = 3 + tine * 5;
                fill_rect(&mut img, x0, 2, x0 + 3, 24, rgba(c2));
            }
            img
        }
        ObjectClass::Knife => {
            let mut img = RgbaImage::new(24, 96);
            fill_rect(&mut img, 7, 58, 17, 96, rgba(c2));
            fill_rect(&mut img, 6, 12, 18, 58, rgba(c1));
            fill_ellipse(&mut img, 12.0, 12.0, 6.0, 11.0, rgba(c1));
            img
        }
        ObjectClass::Spoon => {
            let mut img = RgbaImage::new(24, 96);
            fill_rect(&mut img, 9, 34, 15, 96, rgba(c1));
            fill_ellipse(&mut img, 12.0, 18.0, 11.0, 17.0, rgba(c2));
            img
        }
    }
}

/// Table background with faint horizontal grain.
pub fn draw_table(base: [u8; 3], grain: [u8; 3]) -> RgbaImage {
    RgbaImage::from_fn(TABLE_WIDTH, TABLE_HEIGHT, |_, y| {
        if (y / 6) % 5 == 0 {
            rgba(grain)
        } else {
            rgba(base)
        }
    })
}

pub fn placeholder_tables() -> Vec<TableSpec> {
    TABLES
        .iter()
        .map(|(id, _, _)| TableSpec {
            id: id.to_string(),
            image: format!("tables/{id}.png"),
        })
        .collect()
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CatalogError + '_ {
    move |source| CatalogError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn save(img: &RgbaImage, path: &Path) -> Result<(), CatalogError> {
    img.save(path).map_err(|source| CatalogError::Image {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes the stand-in catalog into `dir` and loads it back.
pub fn write_placeholder_catalog(dir: impl AsRef<Path>) -> Result<Catalog, CatalogError> {
    let dir = dir.as_ref();
    for sub in ["sprites", "tables"] {
        let p = dir.join(sub);
        fs::create_dir_all(&p).map_err(io_err(&p))?;
    }
    let objects = placeholder_objects();
    for obj in &objects {
        save(&draw_sprite(obj), &dir.join(&obj.sprite))?;
    }
    let tables = placeholder_tables();
    for ((_, base, grain), table) in TABLES.iter().zip(&tables) {
        save(&draw_table(*base, *grain), &dir.join(&table.image))?;
    }
    let manifest = dir.join(crate::catalog::MANIFEST_FILE);
    fs::write(
        &manifest,
        serde_json::to_string_pretty(&objects).expect("objects serialize"),
    )
    .map_err(io_err(&manifest))?;
    let tables_path = dir.join(crate::catalog::TABLES_FILE);
    fs::write(
        &tables_path,
        serde_json::to_string_pretty(&tables).expect("tables serialize"),
    )
    .map_err(io_err(&tables_path))?;
    load_catalog(dir)
}
