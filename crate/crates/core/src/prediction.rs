//! Turning sampled model answers into one task plan.
//!
//! Each answer is parsed into a list of [`RawStep`]s. The plan length is the
//! modal answer length; for each step the object type is the modal type, and
//! only samples agreeing with that type vote on the object id, the position
//! and the rotation. Ties always resolve to the smaller value (shorter plan,
//! earlier class in `cup, fork, knife, plate, spoon`, smaller id, smaller angle).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::catalog::Catalog;
use crate::lifting::{cardinal_to_degrees, degrees_to_cardinal, Cardinal, CellId, GridSpec};
use crate::prompt::Method;
use crate::scene::{normalize_rotation, Arrangement, ObjectClass, Placement};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("no list of step objects found in response")]
    NoList,
    #[error("step {index}: {message}")]
    BadStep { index: usize, message: String },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AggregateError {
    #[error("no response could be parsed")]
    NoSamples,
    #[error("method {0} needs a grid to decode cell answers")]
    MissingGrid(Method),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StepPosition {
    Point([f64; 2]),
    Cells(Vec<String>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StepRotation {
    Degrees(f64),
    Cardinal(Cardinal),
}

/// One step of one sampled answer. Fields the model omitted or garbled are
/// `None` and simply abstain from the corresponding vote.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawStep {
    pub type_text: String,
    pub class: Option<ObjectClass>,
    pub id: Option<u32>,
    pub position: Option<StepPosition>,
    pub rotation: Option<StepRotation>,
}

// ---------------------------------------------------------------------------
// parsing

fn closing_quote(open: char) -> &'static [char] {
    match open {
        '"' => &['"'],
        '“' => &['”', '"'],
        '\'' => &['\'', '’'],
        '‘' => &['’', '\''],
        '`' => &['\'', '`', '’'],
        _ => &[],
    }
}

fn is_open_quote(c: char) -> bool {
    matches!(c, '"' | '\'' | '`' | '‘' | '“')
}

/// Index just past the `]` matching the `[` at `start`, honoring quoted strings.
fn matching_bracket(chars: &[char], start: usize) -> Option<usize> {
    let mut depth = 0usize;
    let mut quote: Option<char> = None;
    let mut i = start;
    while i < chars.len() {
        let c = chars[i];
        match quote {
            Some(open) => {
                if c == '\\' {
                    i += 1;
                } else if closing_quote(open).contains(&c) {
                    quote = None;
                }
            }
            None => match c {
                c if is_open_quote(c) => quote = Some(c),
                '[' | '{' => depth += 1,
                ']' | '}' => {
                    depth = depth.checked_sub(1)?;
                    if depth == 0 {
                        return (c == ']').then_some(i + 1);
                    }
                }
                _ => {}
            },
        }
        i += 1;
    }
    None
}

/// Rewrites a Python-style literal (any quote style, True/False/None,
/// trailing commas) as JSON.
fn pythonish_to_json(src: &[char]) -> String {
    let mut out = String::with_capacity(src.len() + 8);
    let mut i = 0;
    while i < src.len() {
        let c = src[i];
        if is_open_quote(c) {
            let closers = closing_quote(c);
            out.push('"');
            i += 1;
            while i < src.len() && !closers.contains(&src[i]) {
                match src[i] {
                    '\\' if i + 1 < src.len() => {
                        out.push('\\');
                        out.push(src[i + 1]);
                        i += 1;
                    }
                    '"' => out.push_str("\\\""),
                    '\n' => out.push_str("\\n"),
                    ch => out.push(ch),
                }
                i += 1;
            }
            out.push('"');
            i += 1;
            continue;
        }
        if c.is_ascii_alphabetic() {
            let start = i;
            while i < src.len() && (src[i].is_ascii_alphanumeric() || src[i] == '_') {
                i += 1;
            }
            let word: String = src[start..i].iter().collect();
            match word.as_str() {
                "True" | "true" => out.push_str("true"),
                "False" | "false" => out.push_str("false"),
                "None" | "null" => out.push_str("null"),
                // bare identifiers (e.g. N, NE, fork) become strings
                _ => {
                    out.push('"');
                    out.push_str(&word);
                    out.push('"');
                }
            }
            continue;
        }
        if c == ',' {
            let next = src[i + 1..].iter().find(|c| !c.is_whitespace());
            if matches!(next, Some(']') | Some('}')) {
                i += 1;
                continue;
            }
        }
        out.push(c);
        i += 1;
    }
    out
}

fn find_step_list(text: &str) -> Option<Vec<Value>> {
    let chars: Vec<char> = text.chars().collect();
    for start in (0..chars.len()).filter(|&i| chars[i] == '[') {
        let Some(end) = matching_bracket(&chars, start) else {
            continue;
        };
        let json = pythonish_to_json(&chars[start..end]);
        if let Ok(Value::Array(items)) = serde_json::from_str::<Value>(&json) {
            if items.iter().all(Value::is_object) {
                return Some(items);
            }
        }
    }
    None
}

fn as_f64(v: &Value) -> Option<f64> {
    match v {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => s.trim().trim_end_matches('°').trim().parse().ok(),
        _ => None,
    }
    .filter(|x: &f64| x.is_finite())
}

fn as_id(v: &Value) -> Option<u32> {
    let x = as_f64(v)?;
    (x >= 0.0 && x.fract() == 0.0 && x <= u32::MAX as f64).then_some(x as u32)
}

fn lookup<'a>(map: &'a BTreeMap<String, &'a Value>, keys: &[&str]) -> Option<&'a Value> {
    keys.iter().find_map(|k| map.get(*k).copied())
}

fn coerce_step(value: &Value, grid_method: bool) -> RawStep {
    let obj = value.as_object().expect("checked by find_step_list");
    let map: BTreeMap<String, &Value> = obj
        .iter()
        .map(|(k, v)| (k.trim().to_ascii_lowercase(), v))
        .collect();

    let type_text = lookup(&map, &["type", "object_type", "class"])
        .map(|v| match v {
            Value::String(s) => s.clone(),
            other => other.to_string(),
        })
        .unwrap_or_default();
    let class = ObjectClass::parse_lenient(&type_text);
    let id = lookup(&map, &["id", "object_id", "object_reference_id"]).and_then(as_id);

    let position = lookup(&map, &["position", "grid_cells", "cells"]).and_then(|v| {
        let items = v.as_array()?;
        if grid_method {
            let cells: Vec<String> = items
                .iter()
                .filter_map(|c| match c {
                    Value::String(s) => Some(s.trim().to_string()),
                    _ => None,
                })
                .collect();
            (!cells.is_empty()).then_some(StepPosition::Cells(cells))
        } else if items.len() == 2 {
            Some(StepPosition::Point([as_f64(&items[0])?, as_f64(&items[1])?]))
        } else {
            None
        }
    });

    let rotation = lookup(&map, &["cardinal_direction", "direction", "rotation", "orientation"])
        .and_then(|v| {
            let as_cardinal = v.as_str().and_then(|s| s.parse::<Cardinal>().ok());
            let as_degrees = as_f64(v);
            if grid_method {
                as_cardinal.or_else(|| as_degrees.map(degrees_to_cardinal))
                    .map(StepRotation::Cardinal)
            } else {
                as_degrees
                    .or_else(|| as_cardinal.map(cardinal_to_degrees))
                    .and_then(|d| normalize_rotation(d).ok())
                    .map(StepRotation::Degrees)
            }
        });

    RawStep {
        type_text,
        class,
        id,
        position,
        rotation,
    }
}

/// Extracts the first bracketed list of step dictionaries from a raw answer.
/// Surrounding prose is ignored; single, double, and typographic quotes are accepted.
pub fn parse_response(text: &str, method: Method) -> Result<Vec<RawStep>, ParseError> {
    let items = find_step_list(text).ok_or(ParseError::NoList)?;
    Ok(items
        .iter()
        .map(|v| coerce_step(v, method.grid_marked()))
        .collect())
}

// ---------------------------------------------------------------------------
// aggregation

/// Most frequent key; ties go to the smallest key.
fn mode<K: Ord + Copy>(items: impl IntoIterator<Item = K>) -> Option<(K, usize)> {
    let mut counts: BTreeMap<K, usize> = BTreeMap::new();
    for k in items {
        *counts.entry(k).or_default() += 1;
    }
    let mut best: Option<(K, usize)> = None;
    for (k, n) in counts {
        if best.is_none_or(|(_, m)| n > m) {
            best = Some((k, n));
        }
    }
    best
}

/// Order-independent mean; returns the shared value exactly when all agree.
fn mean(mut values: Vec<f64>) -> Option<f64> {
    let first = *values.first()?;
    if values.iter().all(|&v| v == first) {
        return Some(first);
    }
    values.sort_by(f64::total_cmp);
    Some(values.iter().sum::<f64>() / values.len() as f64)
}

pub fn aggregate_plan_length(samples: &[Vec<RawStep>]) -> Result<usize, AggregateError> {
    mode(samples.iter().map(Vec::len))
        .map(|(len, _)| len)
        .ok_or(AggregateError::NoSamples)
}

pub fn aggregate_step_type(samples: &[Vec<RawStep>], t: usize) -> Option<ObjectClass> {
    mode(samples.iter().filter_map(|s| s.get(t)?.class)).map(|(c, _)| c)
}

fn voters<'a>(
    samples: &'a [Vec<RawStep>],
    t: usize,
    class: ObjectClass,
) -> impl Iterator<Item = &'a RawStep> + 'a {
    samples
        .iter()
        .filter_map(move |s| s.get(t))
        .filter(move |step| step.class == Some(class))
}

pub fn aggregate_object_id(
    samples: &[Vec<RawStep>],
    t: usize,
    class: ObjectClass,
) -> Option<u32> {
    mode(voters(samples, t, class).filter_map(|s| s.id)).map(|(id, _)| id)
}

/// Mean of the voters' points, clamped to the unit square.
pub fn aggregate_position_unmarked(
    samples: &[Vec<RawStep>],
    t: usize,
    class: ObjectClass,
) -> Option<(f64, f64)> {
    let points: Vec<[f64; 2]> = voters(samples, t, class)
        .filter_map(|s| match &s.position {
            Some(StepPosition::Point(p)) => Some(*p),
            _ => None,
        })
        .collect();
    let x = mean(points.iter().map(|p| p[0]).collect())?;
    let y = mean(points.iter().map(|p| p[1]).collect())?;
    Some((x.clamp(0.0, 1.0), y.clamp(0.0, 1.0)))
}

/// Pools every cell cited by the voters and returns the citation-count
/// weighted mean of the cell centroids. Undecodable cells are skipped.
pub fn aggregate_position_grid(
    samples: &[Vec<RawStep>],
    t: usize,
    class: ObjectClass,
    grid: &GridSpec,
) -> Option<(f64, f64)> {
    let mut counts: BTreeMap<CellId, u64> = BTreeMap::new();
    for step in voters(samples, t, class) {
        if let Some(StepPosition::Cells(cells)) = &step.position {
            for cell in cells.iter().filter_map(|c| grid.parse_cell(c).ok()) {
                *counts.entry(cell).or_default() += 1;
            }
        }
    }
    if counts.is_empty() {
        return None;
    }
    let total: f64 = counts.values().map(|&n| n as f64).sum();
    let (mut sx, mut sy) = (0.0, 0.0);
    for (cell, n) in &counts {
        let (cx, cy) = grid.centroid(*cell);
        sx += *n as f64 * cx;
        sy += *n as f64 * cy;
    }
    Some(((sx / total).clamp(0.0, 1.0), (sy / total).clamp(0.0, 1.0)))
}

/// Circular mean of angles in degrees, in `[0, 360)`. When the angles cancel
/// out (no dominant direction) the arithmetic mean of the wrapped angles is used.
pub fn circular_mean_degrees(angles: &[f64]) -> Option<f64> {
    let mut wrapped: Vec<f64> = angles
        .iter()
        .filter_map(|&a| normalize_rotation(a).ok())
        .collect();
    let first = *wrapped.first()?;
    if wrapped.iter().all(|&a| a == first) {
        return Some(first);
    }
    wrapped.sort_by(f64::total_cmp);
    let (s, c) = wrapped.iter().fold((0.0, 0.0), |(s, c), a| {
        let (sin, cos) = a.to_radians().sin_cos();
        (s + sin, c + cos)
    });
    let n = wrapped.len() as f64;
    let deg = if s.hypot(c) < 1e-9 * n {
        wrapped.iter().sum::<f64>() / n
    } else {
        s.atan2(c).to_degrees()
    };
    let norm = normalize_rotation(deg).ok()?;
    Some(if 360.0 - norm < 1e-9 { 0.0 } else { norm })
}

pub fn aggregate_rotation(
    samples: &[Vec<RawStep>],
    t: usize,
    class: ObjectClass,
    method: Method,
) -> Option<f64> {
    if method.grid_marked() {
        let dirs = voters(samples, t, class).filter_map(|s| match s.rotation {
            Some(StepRotation::Cardinal(d)) => Some(d),
            _ => None,
        });
        mode(dirs).map(|(d, _)| cardinal_to_degrees(d))
    } else {
        let angles: Vec<f64> = voters(samples, t, class)
            .filter_map(|s| match s.rotation {
                Some(StepRotation::Degrees(d)) => Some(d),
                _ => None,
            })
            .collect();
        circular_mean_degrees(&angles)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StepSupport {
    /// Samples long enough to have this step.
    pub reached: usize,
    /// Samples whose type matched the chosen type (the voters).
    pub type_votes: usize,
    /// Voters whose id matched the chosen id.
    pub id_votes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanStep {
    pub index: usize,
    pub class: Option<ObjectClass>,
    pub placement: Option<Placement>,
    pub support: StepSupport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub invalid: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskPlan {
    pub method: Method,
    pub provider: String,
    /// Samples that parsed and took part in aggregation.
    pub samples: usize,
    /// Samples whose length equals the plan length.
    pub length_votes: usize,
    pub steps: Vec<PlanStep>,
}

impl TaskPlan {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Valid steps as an arrangement on `table`, in plan order.
    pub fn to_arrangement(&self, table: &str) -> Arrangement {
        Arrangement::new(
            table,
            self.steps.iter().filter_map(|s| s.placement).collect(),
        )
    }

    /// Per-step support sidecar.
    pub fn support_json(&self) -> String {
        #[derive(Serialize)]
        struct Sidecar<'a> {
            method: Method,
            provider: &'a str,
            samples: usize,
            length_votes: usize,
            steps: &'a [PlanStep],
        }
        serde_json::to_string_pretty(&Sidecar {
            method: self.method,
            provider: &self.provider,
            samples: self.samples,
            length_votes: self.length_votes,
            steps: &self.steps,
        })
        .expect("plan serializes")
    }
}

/// Aggregates parsed samples into a task plan. Steps that cannot be resolved
/// (no type, no id votes, unknown object, no decodable position) stay in the
/// plan flagged `invalid` and are left out of [`TaskPlan::to_arrangement`].
pub fn aggregate(
    samples: &[Vec<RawStep>],
    method: Method,
    grid: Option<&GridSpec>,
    catalog: &Catalog,
    provider: &str,
) -> Result<TaskPlan, AggregateError> {
    let grid = match (method.grid_marked(), grid) {
        (true, Some(g)) => Some(g),
        (true, None) => return Err(AggregateError::MissingGrid(method)),
        (false, _) => None,
    };
    let length = aggregate_plan_length(samples)?;
    let length_votes = samples.iter().filter(|s| s.len() == length).count();

    let steps = (0..length)
        .map(|t| {
            let mut support = StepSupport {
                reached: samples.iter().filter(|s| s.len() > t).count(),
                ..StepSupport::default()
            };
            let invalid = |class, support, why: &str| PlanStep {
                index: t,
                class,
                placement: None,
                support,
                invalid: Some(why.to_string()),
            };
            let Some(class) = aggregate_step_type(samples, t) else {
                return invalid(None, support, "no sample gave a recognizable object type");
            };
            support.type_votes = voters(samples, t, class).count();
            let Some(id) = aggregate_object_id(samples, t, class) else {
                return invalid(Some(class), support, "no voter gave an object id");
            };
            support.id_votes = voters(samples, t, class)
                .filter(|s| s.id == Some(id))
                .count();
            if !catalog.contains(id) {
                return invalid(Some(class), support, "object id is not in the catalog");
            }
            let position = match grid {
                Some(g) => aggregate_position_grid(samples, t, class, g),
                None => aggregate_position_unmarked(samples, t, class),
            };
            let Some((x, y)) = position else {
                return invalid(Some(class), support, "no decodable position");
            };
            let rotation = aggregate_rotation(samples, t, class, method).unwrap_or(0.0);
            PlanStep {
                index: t,
                class: Some(class),
                placement: Some(Placement::new(id, x, y, rotation)),
                support,
                invalid: None,
            }
        })
        .collect();

    Ok(TaskPlan {
        method,
        provider: provider.to_string(),
        samples: samples.len(),
        length_votes,
        steps,
    })
}

/// Formats an arrangement the way a model is asked to answer. Used to script
/// mock providers.
pub fn format_unmarked_answer(a: &Arrangement, catalog: &Catalog) -> String {
    let items: Vec<String> = a
        .placements
        .iter()
        .map(|p| {
            let class = catalog
                .get(p.object)
                .map(|o| o.class.as_str())
                .unwrap_or("unknown");
            format!(
                "{{'type':'{class}', 'id': {}, 'position': [{:?}, {:?}], 'rotation': {:?}}}",
                p.object, p.x, p.y, p.rotation
            )
        })
        .collect();
    format!("[{}]", items.join(", "))
}
