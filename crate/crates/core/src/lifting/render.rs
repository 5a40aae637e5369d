use std::collections::BTreeSet;

use image::imageops::{self, FilterType};
use image::{Rgba, RgbaImage};

use super::font::{draw_label, draw_text, fill_rect, text_size};
use super::grid::{CellId, GridSpec};
use super::{LiftError, LiftedImage, LiftingKind, Mark, Provenance, MARK_STYLE};
use crate::catalog::{Catalog, CatalogError};
use crate::placeholder::{TABLE_HEIGHT, TABLE_WIDTH};
use crate::scene::{Arrangement, ObjectClass, Placement};

/// Every arrangement is rendered on a canvas of this size; table images of
/// other sizes are resampled to it.
pub const CANVAS_WIDTH: u32 = TABLE_WIDTH;
pub const CANVAS_HEIGHT: u32 = TABLE_HEIGHT;

const SHEET_CELL: u32 = 160;
const SHEET_SPRITE: u32 = 120;
const SHEET_HEADER: u32 = 56;
const SHEET_BG: Rgba<u8> = Rgba([236, 236, 236, 255]);
const GRID_STROKE: Rgba<u8> = Rgba([0, 0, 0, 255]);
/// Sprite pixels with alpha at or above this count as occupied.
const OPAQUE_ALPHA: u8 = 128;

/// Longest sprite side as a fraction of table width.
pub fn class_scale(class: ObjectClass) -> f64 {
    match class {
        ObjectClass::Plate => 0.22,
        ObjectClass::Cup => 0.10,
        ObjectClass::Fork | ObjectClass::Knife | ObjectClass::Spoon => 0.16,
    }
}

fn table_canvas(catalog: &Catalog, table: &str) -> Result<RgbaImage, LiftError> {
    let img = catalog.table_image(table)?;
    if img.dimensions() == (CANVAS_WIDTH, CANVAS_HEIGHT) {
        Ok(img)
    } else {
        Ok(imageops::resize(
            &img,
            CANVAS_WIDTH,
            CANVAS_HEIGHT,
            FilterType::Triangle,
        ))
    }
}

fn fit(img: &RgbaImage, longest: f64) -> RgbaImage {
    let (w, h) = img.dimensions();
    let scale = longest / w.max(h) as f64;
    let nw = ((w as f64 * scale).round() as u32).max(1);
    let nh = ((h as f64 * scale).round() as u32).max(1);
    if (nw, nh) == (w, h) {
        img.clone()
    } else {
        imageops::resize(img, nw, nh, FilterType::Triangle)
    }
}

fn scaled_sprite(catalog: &Catalog, id: u32) -> Result<RgbaImage, LiftError> {
    let obj = catalog.get(id).ok_or(CatalogError::UnknownObject(id))?;
    let sprite = catalog.sprite(id)?;
    Ok(fit(
        &sprite,
        (class_scale(obj.class) * CANVAS_WIDTH as f64).round(),
    ))
}

/// Premultiplied bilinear sample at continuous pixel-index coordinates;
/// outside the sprite is transparent.
fn sample(sprite: &RgbaImage, sx: f64, sy: f64) -> [f64; 4] {
    let (w, h) = (sprite.width() as i64, sprite.height() as i64);
    let x0 = sx.floor();
    let y0 = sy.floor();
    let fx = sx - x0;
    let fy = sy - y0;
    let mut acc = [0.0; 4];
    for (dx, dy, weight) in [
        (0, 0, (1.0 - fx) * (1.0 - fy)),
        (1, 0, fx * (1.0 - fy)),
        (0, 1, (1.0 - fx) * fy),
        (1, 1, fx * fy),
    ] {
        if weight <= 0.0 {
            continue;
        }
        let x = x0 as i64 + dx;
        let y = y0 as i64 + dy;
        if x < 0 || y < 0 || x >= w || y >= h {
            continue;
        }
        let p = sprite.get_pixel(x as u32, y as u32).0;
        let a = p[3] as f64 / 255.0;
        acc[0] += weight * p[0] as f64 * a;
        acc[1] += weight * p[1] as f64 * a;
        acc[2] += weight * p[2] as f64 * a;
        acc[3] += weight * a;
    }
    acc
}

/// Composites `sprite` rotated clockwise by `rotation` degrees so that its
/// center lands on canvas point `(cx, cy)` (continuous pixel coordinates).
fn paste_rotated(canvas: &mut RgbaImage, sprite: &RgbaImage, cx: f64, cy: f64, rotation: f64) {
    let (w, h) = (sprite.width() as f64, sprite.height() as f64);
    let theta = rotation.to_radians();
    let (sin, cos) = theta.sin_cos();
    let hx = (cos.abs() * w + sin.abs() * h) / 2.0 + 1.0;
    let hy = (sin.abs() * w + cos.abs() * h) / 2.0 + 1.0;
    let u0 = (cx - hx).floor().max(0.0) as u32;
    let v0 = (cy - hy).floor().max(0.0) as u32;
    let u1 = ((cx + hx).ceil().max(0.0) as u32).min(canvas.width());
    let v1 = ((cy + hy).ceil().max(0.0) as u32).min(canvas.height());
    for v in v0..v1 {
        for u in u0..u1 {
            let dx = u as f64 + 0.5 - cx;
            let dy = v as f64 + 0.5 - cy;
            // inverse of the clockwise (y-down) rotation
            let lx = cos * dx + sin * dy;
            let ly = -sin * dx + cos * dy;
            let s = sample(sprite, lx + w / 2.0 - 0.5, ly + h / 2.0 - 0.5);
            let alpha = s[3];
            if alpha <= 0.0 {
                continue;
            }
            let dst = canvas.get_pixel_mut(u, v);
            for c in 0..3 {
                let out = s[c] + dst.0[c] as f64 * (1.0 - alpha);
                dst.0[c] = out.round().clamp(0.0, 255.0) as u8;
            }
            let out_a = alpha * 255.0 + dst.0[3] as f64 * (1.0 - alpha);
            dst.0[3] = out_a.round().clamp(0.0, 255.0) as u8;
        }
    }
}

fn check_objects(a: &Arrangement, catalog: &Catalog) -> Result<(), LiftError> {
    match a.placements.iter().find(|p| !catalog.contains(p.object)) {
        Some(p) => Err(CatalogError::UnknownObject(p.object).into()),
        None => Ok(()),
    }
}

/// Table background with each sprite scaled, rotated, and pasted at its
/// placement; later placements are drawn over earlier ones.
pub fn render_unmarked(a: &Arrangement, catalog: &Catalog) -> Result<LiftedImage, LiftError> {
    check_objects(a, catalog)?;
    let mut canvas = table_canvas(catalog, &a.table)?;
    for p in &a.placements {
        let sprite = scaled_sprite(catalog, p.object)?;
        paste_rotated(
            &mut canvas,
            &sprite,
            p.x * CANVAS_WIDTH as f64,
            p.y * CANVAS_HEIGHT as f64,
            p.rotation,
        );
    }
    Ok(LiftedImage {
        pixels: canvas,
        annotations: Vec::new(),
        provenance: Provenance {
            lifting: LiftingKind::Unmarked,
            table: Some(a.table.clone()),
            class: None,
            grid: None,
            objects: a.placements.iter().map(|p| p.object).collect(),
            mark_style: None,
        },
    })
}

/// Draws grid strokes and a label in every cell; returns one mark per cell at its pixel center.
pub fn overlay_grid(img: &mut RgbaImage, grid: &GridSpec) -> Vec<Mark> {
    let (w, h) = img.dimensions();
    for c in 0..=grid.cols {
        let x = ((c as u64 * w as u64) / grid.cols as u64) as u32;
        fill_rect(img, x.min(w - 1), 0, 1, h, GRID_STROKE);
    }
    for r in 0..=grid.rows {
        let y = ((r as u64 * h as u64) / grid.rows as u64) as u32;
        fill_rect(img, 0, y.min(h - 1), w, 1, GRID_STROKE);
    }
    let mut marks = Vec::with_capacity(grid.cell_count());
    for cell in grid.cells() {
        let x0 = ((cell.col as u64 * w as u64) / grid.cols as u64) as u32;
        let y0 = ((cell.row as u64 * h as u64) / grid.rows as u64) as u32;
        draw_label(img, x0 + 2, y0 + 2, &cell.to_string(), 1);
        let (fx, fy) = grid.centroid(cell);
        marks.push(Mark {
            id: cell.to_string(),
            px: fx * w as f64,
            py: fy * h as f64,
        });
    }
    marks
}

pub fn render_grid_marked(
    a: &Arrangement,
    catalog: &Catalog,
    grid: &GridSpec,
) -> Result<LiftedImage, LiftError> {
    let mut lifted = render_unmarked(a, catalog)?;
    lifted.annotations = overlay_grid(&mut lifted.pixels, grid);
    lifted.provenance.lifting = LiftingKind::GridMarked;
    lifted.provenance.grid = Some(*grid);
    lifted.provenance.mark_style = Some(MARK_STYLE.to_string());
    Ok(lifted)
}

/// One labeled sheet per class present in the catalog, every instance
/// overlaid with its catalog id. Sheets follow the fixed class order.
pub fn render_object_sheets(catalog: &Catalog) -> Result<Vec<LiftedImage>, LiftError> {
    let mut sheets = Vec::new();
    for &class in ObjectClass::ALL {
        let objects: Vec<_> = catalog.of_class(class).collect();
        if objects.is_empty() {
            continue;
        }
        let n = objects.len() as u32;
        let cols = (n as f64).sqrt().ceil() as u32;
        let rows = n.div_ceil(cols);
        let mut img = RgbaImage::from_pixel(
            cols * SHEET_CELL,
            SHEET_HEADER + rows * SHEET_CELL,
            SHEET_BG,
        );
        let title = class.as_str().to_ascii_uppercase();
        let (tw, _) = text_size(&title, 4);
        let tx = (img.width().saturating_sub(tw)) / 2;
        draw_text(&mut img, tx, 14, &title, 4, Rgba([0, 0, 0, 255]));

        let mut marks = Vec::with_capacity(objects.len());
        for (slot, obj) in objects.iter().enumerate() {
            let col = slot as u32 % cols;
            let row = slot as u32 / cols;
            let x0 = col * SHEET_CELL;
            let y0 = SHEET_HEADER + row * SHEET_CELL;
            let sprite = catalog.sprite(obj.id)?;
            let fitted = fit(&sprite, SHEET_SPRITE as f64);
            paste_rotated(
                &mut img,
                &fitted,
                (x0 + SHEET_CELL / 2) as f64,
                (y0 + SHEET_CELL / 2 + 8) as f64,
                0.0,
            );
            let label = obj.id.to_string();
            let (lw, lh) = draw_label(&mut img, x0 + 4, y0 + 4, &label, 2);
            marks.push(Mark {
                id: label,
                px: (x0 + 4) as f64 + lw as f64 / 2.0,
                py: (y0 + 4) as f64 + lh as f64 / 2.0,
            });
        }
        sheets.push(LiftedImage {
            pixels: img,
            annotations: marks,
            provenance: Provenance {
                lifting: LiftingKind::ObjectSheet,
                table: None,
                class: Some(class),
                grid: None,
                objects: objects.iter().map(|o| o.id).collect(),
                mark_style: Some(MARK_STYLE.to_string()),
            },
        });
    }
    Ok(sheets)
}

/// Occupied (opaque) bounding box of a rendered sprite, in canvas pixels,
/// relative to the sprite's paste center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Footprint {
    pub half_w: f64,
    pub half_h: f64,
    pub offset_x: f64,
    pub offset_y: f64,
}

impl Footprint {
    pub fn centered(width: f64, height: f64) -> Self {
        Self {
            half_w: width / 2.0,
            half_h: height / 2.0,
            offset_x: 0.0,
            offset_y: 0.0,
        }
    }
}

pub fn sprite_footprint(catalog: &Catalog, id: u32) -> Result<Footprint, LiftError> {
    let sprite = scaled_sprite(catalog, id)?;
    let (w, h) = sprite.dimensions();
    let (mut x0, mut y0, mut x1, mut y1) = (u32::MAX, u32::MAX, 0, 0);
    for (x, y, p) in sprite.enumerate_pixels() {
        if p.0[3] >= OPAQUE_ALPHA {
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x + 1);
            y1 = y1.max(y + 1);
        }
    }
    if x0 == u32::MAX {
        return Ok(Footprint::centered(0.0, 0.0));
    }
    Ok(Footprint {
        half_w: (x1 - x0) as f64 / 2.0,
        half_h: (y1 - y0) as f64 / 2.0,
        offset_x: (x0 + x1) as f64 / 2.0 - w as f64 / 2.0,
        offset_y: (y0 + y1) as f64 / 2.0 - h as f64 / 2.0,
    })
}

/// Corners of the rotated footprint in normalized table coordinates.
pub fn footprint_polygon(fp: &Footprint, p: &Placement, canvas: (u32, u32)) -> [(f64, f64); 4] {
    let (cw, ch) = (canvas.0 as f64, canvas.1 as f64);
    let (sin, cos) = p.rotation.to_radians().sin_cos();
    let corners = [
        (-fp.half_w, -fp.half_h),
        (fp.half_w, -fp.half_h),
        (fp.half_w, fp.half_h),
        (-fp.half_w, fp.half_h),
    ];
    corners.map(|(lx, ly)| {
        let x = lx + fp.offset_x;
        let y = ly + fp.offset_y;
        let rx = cos * x - sin * y;
        let ry = sin * x + cos * y;
        ((p.x * cw + rx) / cw, (p.y * ch + ry) / ch)
    })
}

fn clip(poly: &[(f64, f64)], inside: impl Fn((f64, f64)) -> f64) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(poly.len() + 4);
    for i in 0..poly.len() {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        let (da, db) = (inside(a), inside(b));
        if da >= 0.0 {
            out.push(a);
        }
        if (da >= 0.0) != (db >= 0.0) {
            let t = da / (da - db);
            out.push((a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1)));
        }
    }
    out
}

fn area(poly: &[(f64, f64)]) -> f64 {
    let n = poly.len();
    (0..n)
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            a.0 * b.1 - b.0 * a.1
        })
        .sum::<f64>()
        .abs()
        / 2.0
}

/// Cells whose interior overlaps a convex polygon with positive area.
pub fn cells_overlapping(polygon: &[(f64, f64)], grid: &GridSpec) -> BTreeSet<CellId> {
    let mut cells = BTreeSet::new();
    if polygon.len() < 3 {
        return cells;
    }
    for cell in grid.cells() {
        let (x0, y0, x1, y1) = grid.cell_bounds(cell);
        let mut piece = polygon.to_vec();
        piece = clip(&piece, |p| p.0 - x0);
        piece = clip(&piece, |p| x1 - p.0);
        piece = clip(&piece, |p| p.1 - y0);
        piece = clip(&piece, |p| y1 - p.1);
        if piece.len() >= 3 && area(&piece) > 1e-12 {
            cells.insert(cell);
        }
    }
    cells
}

/// Cells the rendered object will intersect. Always includes the cell holding
/// the placement point.
pub fn cells_intersected(
    p: &Placement,
    catalog: &Catalog,
    grid: &GridSpec,
) -> Result<BTreeSet<CellId>, LiftError> {
    let fp = sprite_footprint(catalog, p.object)?;
    let poly = footprint_polygon(&fp, p, (CANVAS_WIDTH, CANVAS_HEIGHT));
    let mut cells = cells_overlapping(&poly, grid);
    cells.insert(grid.cell_containing(p.x, p.y));
    Ok(cells)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> GridSpec {
        GridSpec::default()
    }

    fn cell(s: &str) -> CellId {
        grid().parse_cell(s).unwrap()
    }

    #[test]
    fn tiny_object_single_cell() {
        let fp = Footprint::centered(4.0, 4.0);
        let p = Placement::new(0, 0.55, 0.45, 30.0);
        let poly = footprint_polygon(&fp, &p, (1000, 1000));
        let cells = cells_overlapping(&poly, &grid());
        assert_eq!(cells.into_iter().collect::<Vec<_>>(), vec![cell("F5")]);
    }

    #[test]
    fn junction_hits_four_cells() {
        let fp = Footprint::centered(20.0, 20.0);
        let p = Placement::new(0, 0.5, 0.5, 0.0);
        let poly = footprint_polygon(&fp, &p, (1000, 1000));
        let cells: Vec<_> = cells_overlapping(&poly, &grid()).into_iter().collect();
        assert_eq!(cells, vec![cell("E5"), cell("E6"), cell("F5"), cell("F6")]);
    }

    #[test]
    fn edge_touching_cell_is_not_counted() {
        // exactly spans x in [0.4, 0.5]: neighbours only share an edge
        let fp = Footprint::centered(100.0, 20.0);
        let p = Placement::new(0, 0.45, 0.55, 0.0);
        let poly = footprint_polygon(&fp, &p, (1000, 1000));
        let cells: Vec<_> = cells_overlapping(&poly, &grid()).into_iter().collect();
        assert_eq!(cells, vec![cell("E6")]);
    }

    #[test]
    fn rotation_quarter_turn_swaps_extent() {
        let fp = Footprint::centered(10.0, 200.0);
        let upright = Placement::new(0, 0.55, 0.55, 0.0);
        let turned = Placement::new(0, 0.55, 0.55, 90.0);
        let a = cells_overlapping(&footprint_polygon(&fp, &upright, (1000, 1000)), &grid());
        let b = cells_overlapping(&footprint_polygon(&fp, &turned, (1000, 1000)), &grid());
        assert!(a.iter().all(|c| c.col == 5));
        assert!(b.iter().all(|c| c.row == 5));
        assert_eq!(a.len(), b.len());
    }
}
