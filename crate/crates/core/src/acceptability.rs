//! Jitter transforms and acceptability analysis of self-evaluation ratings.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluation::EvalReport;
use crate::scene::{normalize_rotation, Arrangement, Placement};

/// A rating drop below this counts as still acceptable.
pub const DIFFERENCE_THRESHOLD: f64 = 0.2;

pub const DEFAULT_THRESHOLDS: [f64; 3] = [0.01, 0.05, 0.10];

#[derive(Debug, Error)]
pub enum AcceptabilityError {
    #[error("jitter magnitude {0} outside [0, 1]")]
    BadMagnitude(f64),
    #[error("record {index}: {message}")]
    InvalidRecord { index: usize, message: String },
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JitterConfig {
    /// Rotation at magnitude 1, degrees.
    pub max_rotation: f64,
    /// Translation length at magnitude 1, normalized units.
    pub max_shift: f64,
}

impl Default for JitterConfig {
    fn default() -> Self {
        Self {
            max_rotation: 45.0,
            max_shift: 0.25,
        }
    }
}

/// Rigidly moves the whole arrangement: rotation by `t * max_rotation` about
/// the centroid (direction drawn from `seed`), then a translation of length
/// `t * max_shift` in a seed-drawn direction. Positions are clamped to the table.
pub fn jitter(
    a: &Arrangement,
    t: f64,
    seed: u64,
    cfg: &JitterConfig,
) -> Result<Arrangement, AcceptabilityError> {
    if !(0.0..=1.0).contains(&t) {
        return Err(AcceptabilityError::BadMagnitude(t));
    }
    if t == 0.0 || a.is_empty() {
        return Ok(a.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let heading = rng.random_range(0.0..std::f64::consts::TAU);
    let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let angle = sign * t * cfg.max_rotation;
    let (dx, dy) = (
        t * cfg.max_shift * heading.cos(),
        t * cfg.max_shift * heading.sin(),
    );
    let n = a.len() as f64;
    let cx = a.placements.iter().map(|p| p.x).sum::<f64>() / n;
    let cy = a.placements.iter().map(|p| p.y).sum::<f64>() / n;
    let (s, c) = angle.to_radians().sin_cos();
    let placements = a
        .placements
        .iter()
        .map(|p| {
            let (rx, ry) = (p.x - cx, p.y - cy);
            // clockwise on screen, where y points down
            let x = cx + c * rx - s * ry + dx;
            let y = cy + s * rx + c * ry + dy;
            Placement {
                object: p.object,
                x: x.clamp(0.0, 1.0),
                y: y.clamp(0.0, 1.0),
                rotation: normalize_rotation(p.rotation + angle).unwrap_or(p.rotation),
            }
        })
        .collect();
    Ok(Arrangement::new(a.table.clone(), placements))
}

/// Self-evaluation ratings for one trial, all normalized to `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingRecord {
    pub session: String,
    #[serde(default)]
    pub trial: u32,
    pub baseline: f64,
    pub jitter: f64,
    #[serde(default)]
    pub correction: Option<f64>,
    pub magnitude: f64,
    /// Distance between the elicited and the jittered arrangement.
    pub rmsd_jitter: f64,
    /// Distance between the elicited and the corrected arrangement.
    #[serde(default)]
    pub rmsd_correction: Option<f64>,
}

impl RatingRecord {
    pub fn validate(&self) -> Result<(), String> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(format!("{name} = {v} outside [0, 1]"))
            }
        };
        unit("baseline", self.baseline)?;
        unit("jitter", self.jitter)?;
        unit("magnitude", self.magnitude)?;
        if let Some(c) = self.correction {
            unit("correction", c)?;
        }
        if !(self.rmsd_jitter.is_finite() && self.rmsd_jitter >= 0.0) {
            return Err(format!("rmsd_jitter = {} must be finite and >= 0", self.rmsd_jitter));
        }
        Ok(())
    }

    /// Rating drop under jitter stays below [`DIFFERENCE_THRESHOLD`].
    pub fn accepts_jitter(&self) -> bool {
        self.baseline - self.jitter < DIFFERENCE_THRESHOLD
    }
}

/// One record per non-empty line; blank lines are skipped.
pub fn parse_ratings_jsonl(text: &str) -> Result<Vec<RatingRecord>, AcceptabilityError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: RatingRecord = serde_json::from_str(line)
            .map_err(|source| AcceptabilityError::Json { line: i + 1, source })?;
        rec.validate()
            .map_err(|message| AcceptabilityError::InvalidRecord { index: out.len(), message })?;
        out.push(rec);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceRow {
    pub threshold: f64,
    /// Records with jitter RMSD at or under the threshold.
    pub people_total: usize,
    /// Of those, records whose rating drop is below 0.2.
    pub people_accepting: usize,
    /// `None` when no record falls under the threshold.
    pub people: Option<f64>,
    pub model_total: usize,
    pub model_within: usize,
    /// `None` when there are no predictions.
    pub model: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceReport {
    pub difference_threshold: f64,
    pub rows: Vec<AcceptanceRow>,
}

impl AcceptanceReport {
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|v| format!("{v:.6}")).unwrap_or_default();
        let mut out = String::from("threshold,people,people_accepting,people_total,model,model_within,model_total\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.threshold,
                opt(r.people),
                r.people_accepting,
                r.people_total,
                opt(r.model),
                r.model_within,
                r.model_total
            ));
        }
        out
    }
}

/// Per threshold: the share of raters (among records whose jitter RMSD is at
/// most the threshold) whose rating dropped by less than 0.2, and the share of
/// model predictions whose RMSD is at most the threshold. Predictions without
/// an RMSD count as outside every threshold.
pub fn subjective_acceptance(
    records: &[RatingRecord],
    thresholds: &[f64],
    predictions: &[EvalReport],
) -> AcceptanceReport {
    let rows = thresholds
        .iter()
        .map(|&tau| {
            let under: Vec<&RatingRecord> = records.iter().filter(|r| r.rmsd_jitter <= tau).collect();
            let accepting = under.iter().filter(|r| r.accepts_jitter()).count();
            let within = predictions
                .iter()
                .filter(|p| p.rmsd.is_some_and(|d| d <= tau))
                .count();
            AcceptanceRow {
                threshold: tau,
                people_total: under.len(),
                people_accepting: accepting,
                people: (!under.is_empty()).then(|| accepting as f64 / under.len() as f64),
                model_total: predictions.len(),
                model_within: within,
                model: (!predictions.is_empty()).then(|| within as f64 / predictions.len() as f64),
            }
        })
        .collect();
    AcceptanceReport {
        difference_threshold: DIFFERENCE_THRESHOLD,
        rows,
    }
}

/// Average ranks (1-based), ties sharing the mean of their positions.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    (sxx > 0.0 && syy > 0.0).then(|| (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman rank correlation; `None` for fewer than 3 points or a constant series.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 3 {
        return None;
    }
    pearson(&average_ranks(x), &average_ranks(y))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScatterPoint {
    pub rmsd: f64,
    /// `b_correct - b_initial`.
    pub difference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationSummary {
    pub points: Vec<ScatterPoint>,
    pub spearman: Option<f64>,
    /// Why the correlation is missing, if it is.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub undefined: Option<String>,
}

impl CorrelationSummary {
    pub fn scatter_csv(&self) -> String {
        let mut out = String::from("rmsd,difference\n");
        for p in &self.points {
            out.push_str(&format!("{},{}\n", p.rmsd, p.difference));
        }
        out
    }
}

/// Relates how far people moved a jittered scene back (RMSD to their original)
/// to how their rating changed. Records without correction data are skipped.
pub fn objective_acceptance(records: &[RatingRecord]) -> CorrelationSummary {
    let points: Vec<ScatterPoint> = records
        .iter()
        .filter_map(|r| {
            Some(ScatterPoint {
                rmsd: r.rmsd_correction?,
                difference: r.correction? - r.baseline,
            })
        })
        .collect();
    let xs: Vec<f64> = points.iter().map(|p| p.rmsd).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.difference).collect();
    let spearman = spearman(&xs, &ys);
    let undefined = match (spearman, points.len()) {
        (Some(_), _) => None,
        (None, n) if n < 3 => Some(format!("{n} records with correction data, need 3")),
        (None, _) => Some("zero variance in one of the series".to_string()),
    };
    CorrelationSummary {
        points,
        spearman,
        undefined,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arrangement() -> Arrangement {
        Arrangement::new(
            "oak",
            vec![
                Placement::new(75, 0.5, 0.6, 0.0),
                Placement::new(25, 0.35, 0.6, 0.0),
                Placement::new(50, 0.65, 0.6, 90.0),
            ],
        )
    }

    fn record(rmsd: f64, baseline: f64, jitter: f64) -> RatingRecord {
        RatingRecord {
            session: "s".into(),
            trial: 1,
            baseline,
            jitter,
            correction: None,
            magnitude: 0.5,
            rmsd_jitter: rmsd,
            rmsd_correction: None,
        }
    }

    #[test]
    fn zero_magnitude_is_identity() {
        let a = arrangement();
        assert_eq!(jitter(&a, 0.0, 5, &JitterConfig::default()).unwrap(), a);
        assert!(jitter(&a, 1.5, 5, &JitterConfig::default()).is_err());
    }

    #[test]
    fn jitter_preserves_pairwise_distances_without_clamping() {
        let a = arrangement();
        let cfg = JitterConfig {
            max_rotation: 45.0,
            max_shift: 0.05,
        };
        let b = jitter(&a, 0.8, 11, &cfg).unwrap();
        let d = |a: &Arrangement, i: usize, j: usize| {
            let (p, q) = (a.placements[i], a.placements[j]);
            (p.x - q.x).hypot(p.y - q.y)
        };
        assert!((d(&a, 0, 1) - d(&b, 0, 1)).abs() < 1e-12);
        assert!((d(&a, 1, 2) - d(&b, 1, 2)).abs() < 1e-12);
        assert_ne!(a, b);
    }

    #[test]
    fn full_magnitude_stays_on_table() {
        let a = Arrangement::new("oak", vec![Placement::new(0, 0.99, 0.01, 0.0), Placement::new(1, 0.01, 0.99, 0.0)]);
        for seed in 0..50 {
            let b = jitter(&a, 1.0, seed, &JitterConfig::default()).unwrap();
            assert!(b.placements.iter().all(Placement::in_bounds));
        }
    }

    #[test]
    fn unchanged_scenes_are_acceptable() {
        let recs: Vec<_> = (0..5).map(|_| record(0.0, 0.8, 0.8)).collect();
        let r = subjective_acceptance(&recs, &DEFAULT_THRESHOLDS, &[]);
        assert!(r.rows.iter().all(|row| row.people == Some(1.0) && row.model.is_none()));
    }

    #[test]
    fn threshold_without_records_is_undefined() {
        let r = subjective_acceptance(&[record(0.5, 0.9, 0.1)], &[0.01], &[]);
        assert_eq!(r.rows[0].people, None);
    }

    #[test]
    fn ranks_average_ties() {
        assert_eq!(average_ranks(&[10.0, 20.0, 10.0, 30.0]), vec![1.5, 3.0, 1.5, 4.0]);
    }

    #[test]
    fn spearman_examples() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0, 4.0], &[1.0, 4.0, 9.0, 16.0]), Some(1.0));
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), Some(-1.0));
        assert_eq!(spearman(&[1.0, 2.0], &[1.0, 2.0]), None);
        assert_eq!(spearman(&[0.0, 0.0, 0.0], &[1.0, 2.0, 3.0]), None);
    }

    #[test]
    fn perfect_corrections_have_no_correlation() {
        let recs: Vec<_> = (0..4)
            .map(|_| RatingRecord {
                correction: Some(0.7),
                rmsd_correction: Some(0.0),
                ..record(0.0, 0.7, 0.7)
            })
            .collect();
        let s = objective_acceptance(&recs);
        assert_eq!(s.points.len(), 4);
        assert!(s.spearman.is_none() && s.undefined.is_some());
    }

    #[test]
    fn jsonl_roundtrip_and_validation() {
        let rec = record(0.02, 0.9, 0.8);
        let text = format!("{}\n\n{}\n", serde_json::to_string(&rec).unwrap(), serde_json::to_string(&rec).unwrap());
        assert_eq!(parse_ratings_jsonl(&text).unwrap(), vec![rec.clone(), rec]);
        let bad = serde_json::to_string(&record(0.02, 1.5, 0.8)).unwrap();
        assert!(matches!(parse_ratings_jsonl(&bad), Err(AcceptabilityError::InvalidRecord { .. })));
        assert!(matches!(parse_ratings_jsonl("{"), Err(AcceptabilityError::Json { line: 1, .. })));
    }
}
