//! Scoring a predicted arrangement against ground truth.
//!
//! Objects are paired by feature Hamming distance, object accuracy counts
//! pairs with the exact same catalog id, and the geometric score is the RMSD
//! of the paired positions after the best proper rigid alignment (Kabsch).

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::Catalog;
use crate::scene::{Arrangement, ObjectSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("point sets differ in length ({gt} vs {pred})")]
    LengthMismatch { gt: usize, pred: usize },
    #[error("registration needs at least one point pair")]
    Empty,
}

/// Number of differing fields among class, colors, and materials.
pub fn hamming(a: &ObjectSpec, b: &ObjectSpec) -> u32 {
    [
        a.class != b.class,
        a.color1 != b.color1,
        a.color2 != b.color2,
        a.material1 != b.material1,
        a.material2 != b.material2,
    ]
    .into_iter()
    .map(u32::from)
    .sum()
}

/// Distance assigned when either object is missing from the catalog.
pub const MAX_DISTANCE: u32 = 5;

fn distance(catalog: &Catalog, a: u32, b: u32) -> u32 {
    match (catalog.get(a), catalog.get(b)) {
        (Some(a), Some(b)) => hamming(a, b),
        _ => MAX_DISTANCE,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchPair {
    pub gt: usize,
    pub pred: usize,
    pub distance: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MatchResult {
    /// Pairs in ground-truth placement order.
    pub pairs: Vec<MatchPair>,
    pub unmatched_gt: Vec<usize>,
    pub unmatched_pred: Vec<usize>,
}

impl MatchResult {
    pub fn n(&self) -> usize {
        self.pairs.len()
    }

    fn from_pairs(mut pairs: Vec<MatchPair>, n_gt: usize, n_pred: usize) -> Self {
        pairs.sort_by_key(|p| p.gt);
        let unmatched = |n: usize, used: &dyn Fn(usize) -> bool| (0..n).filter(|&i| !used(i)).collect();
        Self {
            unmatched_gt: unmatched(n_gt, &|i| pairs.iter().any(|p| p.gt == i)),
            unmatched_pred: unmatched(n_pred, &|i| pairs.iter().any(|p| p.pred == i)),
            pairs,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Matching {
    /// Ground-truth objects in placement order each claim their nearest unclaimed prediction.
    #[default]
    Greedy,
    /// Minimum total Hamming distance assignment.
    Optimal,
}

/// Greedy feature matching: each ground-truth object, in placement order,
/// takes the unclaimed predicted object with the smallest Hamming distance
/// (ties go to the earlier prediction).
pub fn match_greedy(gt: &Arrangement, pred: &Arrangement, catalog: &Catalog) -> MatchResult {
    let mut claimed = vec![false; pred.len()];
    let mut pairs = Vec::with_capacity(gt.len().min(pred.len()));
    for (i, g) in gt.placements.iter().enumerate() {
        let best = pred
            .placements
            .iter()
            .enumerate()
            .filter(|(j, _)| !claimed[*j])
            .map(|(j, p)| (distance(catalog, g.object, p.object), j))
            .min();
        let Some((d, j)) = best else { break };
        claimed[j] = true;
        pairs.push(MatchPair {
            gt: i,
            pred: j,
            distance: d,
        });
    }
    MatchResult::from_pairs(pairs, gt.len(), pred.len())
}

/// Hungarian assignment on a `rows <= cols` cost matrix; returns the column
/// assigned to each row.
fn hungarian(cost: &[Vec<i64>]) -> Vec<usize> {
    let n = cost.len();
    let m = cost.first().map_or(0, Vec::len);
    debug_assert!(n <= m);
    let inf = i64::MAX / 4;
    let (mut u, mut v) = (vec![0i64; n + 1], vec![0i64; m + 1]);
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=m {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0; n];
    for j in 1..=m {
        if p[j] != 0 {
            assign[p[j] - 1] = j - 1;
        }
    }
    assign
}

/// Assignment minimizing the summed Hamming distance over `min(|gt|, |pred|)` pairs.
pub fn match_optimal(gt: &Arrangement, pred: &Arrangement, catalog: &Catalog) -> MatchResult {
    let d = |i: usize, j: usize| {
        distance(catalog, gt.placements[i].object, pred.placements[j].object) as i64
    };
    let pairs = if gt.len() <= pred.len() {
        let cost: Vec<Vec<i64>> = (0..gt.len())
            .map(|i| (0..pred.len()).map(|j| d(i, j)).collect())
            .collect();
        hungarian(&cost)
            .into_iter()
            .enumerate()
            .map(|(i, j)| (i, j))
            .collect::<Vec<_>>()
    } else {
        let cost: Vec<Vec<i64>> = (0..pred.len())
            .map(|j| (0..gt.len()).map(|i| d(i, j)).collect())
            .collect();
        hungarian(&cost)
            .into_iter()
            .enumerate()
            .map(|(j, i)| (i, j))
            .collect()
    };
    let pairs = pairs
        .into_iter()
        .map(|(i, j)| MatchPair {
            gt: i,
            pred: j,
            distance: d(i, j) as u32,
        })
        .collect();
    MatchResult::from_pairs(pairs, gt.len(), pred.len())
}

pub fn match_arrangements(
    gt: &Arrangement,
    pred: &Arrangement,
    catalog: &Catalog,
    strategy: Matching,
) -> MatchResult {
    match strategy {
        Matching::Greedy => match_greedy(gt, pred, catalog),
        Matching::Optimal => match_optimal(gt, pred, catalog),
    }
}

/// Best proper rigid alignment of the predicted points onto the ground truth:
/// `gt ≈ R (pred - g)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Registration {
    /// Row-major 2x2 rotation with determinant +1.
    pub rotation: [[f64; 2]; 2],
    pub translation: [f64; 2],
    pub rmsd: f64,
}

impl Registration {
    /// Angle of `rotation` in degrees, in `(-180, 180]`, measured from +x
    /// towards +y.
    pub fn angle_degrees(&self) -> f64 {
        self.rotation[1][0].atan2(self.rotation[0][0]).to_degrees()
    }

    pub fn matrix(&self) -> Matrix2<f64> {
        let r = self.rotation;
        Matrix2::new(r[0][0], r[0][1], r[1][0], r[1][1])
    }
}

fn centroid(points: &[[f64; 2]]) -> Vector2<f64> {
    points
        .iter()
        .fold(Vector2::zeros(), |acc, p| acc + Vector2::new(p[0], p[1]))
        / points.len() as f64
}

/// Kabsch registration of index-paired point sets.
pub fn kabsch(gt: &[[f64; 2]], pred: &[[f64; 2]]) -> Result<Registration, EvalError> {
    if gt.len() != pred.len() {
        return Err(EvalError::LengthMismatch {
            gt: gt.len(),
            pred: pred.len(),
        });
    }
    if gt.is_empty() {
        return Err(EvalError::Empty);
    }
    let (cg, cp) = (centroid(gt), centroid(pred));
    let centered = |pts: &[[f64; 2]], c: Vector2<f64>| -> Vec<Vector2<f64>> {
        pts.iter().map(|p| Vector2::new(p[0], p[1]) - c).collect()
    };
    let (q, p) = (centered(gt, cg), centered(pred, cp));

    let r = if gt.len() == 1 {
        Matrix2::identity()
    } else {
        let h: Matrix2<f64> = p.iter().zip(&q).map(|(p, q)| p * q.transpose()).sum();
        let svd = h.svd(true, true);
        let (u, v_t) = (svd.u.expect("u requested"), svd.v_t.expect("v_t requested"));
        let v = v_t.transpose();
        let d = (v * u.transpose()).determinant().signum();
        v * Matrix2::new(1.0, 0.0, 0.0, if d == 0.0 { 1.0 } else { d }) * u.transpose()
    };
    let sq: f64 = p
        .iter()
        .zip(&q)
        .map(|(p, q)| (q - r * p).norm_squared())
        .sum();
    let g = cp - r.transpose() * cg;
    Ok(Registration {
        rotation: [[r[(0, 0)], r[(0, 1)]], [r[(1, 0)], r[(1, 1)]]],
        translation: [g.x, g.y],
        rmsd: (sq / gt.len() as f64).sqrt(),
    })
}

/// Absolute angular difference in degrees, in `[0, 180]`.
pub fn circular_difference(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    d.min(360.0 - d)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Matched ground-truth objects whose prediction is the same catalog object, over `|gt|`.
    pub accuracy: f64,
    pub all_correct: bool,
    /// `None` when no pairs could be matched.
    pub rmsd: Option<f64>,
    pub registration: Option<Registration>,
    /// Mean absolute circular difference of object rotations over matched pairs, in degrees.
    pub rotation_error: Option<f64>,
    pub matching: MatchResult,
    pub gt_objects: usize,
    pub pred_objects: usize,
}

impl EvalReport {
    pub fn n(&self) -> usize {
        self.matching.n()
    }
}

/// Matches objects, then registers matched positions. Rotation of individual
/// objects does not enter the RMSD.
pub fn evaluate(gt: &Arrangement, pred: &Arrangement, catalog: &Catalog) -> EvalReport {
    evaluate_with(gt, pred, catalog, Matching::Greedy)
}

pub fn evaluate_with(
    gt: &Arrangement,
    pred: &Arrangement,
    catalog: &Catalog,
    strategy: Matching,
) -> EvalReport {
    let matching = match_arrangements(gt, pred, catalog, strategy);
    let (gt_pts, pred_pts): (Vec<[f64; 2]>, Vec<[f64; 2]>) = matching
        .pairs
        .iter()
        .map(|m| {
            (
                gt.placements[m.gt].position(),
                pred.placements[m.pred].position(),
            )
        })
        .unzip();
    let registration = kabsch(&gt_pts, &pred_pts).ok();
    let exact = matching
        .pairs
        .iter()
        .filter(|m| gt.placements[m.gt].object == pred.placements[m.pred].object)
        .count();
    let accuracy = if gt.is_empty() {
        0.0
    } else {
        exact as f64 / gt.len() as f64
    };
    let rotation_error = (!matching.pairs.is_empty()).then(|| {
        matching
            .pairs
            .iter()
            .map(|m| circular_difference(gt.placements[m.gt].rotation, pred.placements[m.pred].rotation))
            .sum::<f64>()
            / matching.n() as f64
    });
    EvalReport {
        accuracy,
        all_correct: !gt.is_empty() && exact == gt.len(),
        rmsd: registration.map(|r| r.rmsd),
        registration,
        rotation_error,
        gt_objects: gt.len(),
        pred_objects: pred.len(),
        matching,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::placeholder::placeholder_objects;
    use crate::scene::{Color, Material, Placement};

    fn catalog() -> Catalog {
        Catalog::from_parts("/x", placeholder_objects(), vec![]).unwrap()
    }

    fn rotate(points: &[[f64; 2]], deg: f64) -> Vec<[f64; 2]> {
        let c = centroid(points);
        let (s, co) = deg.to_radians().sin_cos();
        points
            .iter()
            .map(|p| {
                let (x, y) = (p[0] - c.x, p[1] - c.y);
                [c.x + co * x - s * y, c.y + s * x + co * y]
            })
            .collect()
    }

    #[test]
    fn hamming_examples() {
        let objs = placeholder_objects();
        let a = objs[0].clone();
        assert_eq!(hamming(&a, &a), 0);
        let mut b = a.clone();
        b.color1 = Color::Yellow;
        assert_eq!(hamming(&a, &b), 1);
        let c = ObjectSpec {
            class: crate::scene::ObjectClass::Knife,
            color1: Color::Yellow,
            color2: Color::Pink,
            material1: Material::Wood,
            material2: Material::Plastic,
            ..a.clone()
        };
        assert_ne!(a.color2, Color::Pink);
        assert_ne!(a.material1, Material::Wood);
        assert_ne!(a.material2, Material::Plastic);
        assert_eq!(hamming(&a, &c), 5);
    }

    #[test]
    fn identical_arrangements_match_identity() {
        let cat = catalog();
        let a = Arrangement::new(
            "oak",
            vec![
                Placement::new(75, 0.5, 0.6, 0.0),
                Placement::new(25, 0.3, 0.6, 0.0),
                Placement::new(50, 0.7, 0.6, 0.0),
                Placement::new(0, 0.8, 0.4, 0.0),
            ],
        );
        let m = match_greedy(&a, &a, &cat);
        assert_eq!(m.n(), 4);
        assert!(m.pairs.iter().all(|p| p.gt == p.pred && p.distance == 0));
        let mut short = a.clone();
        short.placements.pop();
        let m = match_greedy(&a, &short, &cat);
        assert_eq!((m.n(), m.unmatched_gt.clone()), (3, vec![3]));
    }

    #[test]
    fn optimal_never_costs_more_than_greedy() {
        let cat = catalog();
        let gt = Arrangement::new("oak", vec![Placement::new(0, 0.1, 0.1, 0.0), Placement::new(1, 0.2, 0.2, 0.0)]);
        let pred = Arrangement::new("oak", vec![Placement::new(14, 0.1, 0.1, 0.0), Placement::new(0, 0.2, 0.2, 0.0), Placement::new(30, 0.3, 0.3, 0.0)]);
        let cost = |m: &MatchResult| m.pairs.iter().map(|p| p.distance).sum::<u32>();
        let (g, o) = (match_greedy(&gt, &pred, &cat), match_optimal(&gt, &pred, &cat));
        assert_eq!(o.n(), 2);
        assert!(cost(&o) <= cost(&g));
    }

    #[test]
    fn kabsch_identity_translation_rotation() {
        let pts = [[0.1, 0.2], [0.5, 0.5], [0.9, 0.3], [0.4, 0.8]];
        let r = kabsch(&pts, &pts).unwrap();
        assert!(r.rmsd < 1e-12);
        assert!((r.matrix() - Matrix2::identity()).norm() < 1e-12);
        assert!(r.translation[0].abs() < 1e-12 && r.translation[1].abs() < 1e-12);

        let shifted: Vec<_> = pts.iter().map(|p| [p[0] + 0.3, p[1] - 0.1]).collect();
        assert!(kabsch(&pts, &shifted).unwrap().rmsd < 1e-12);

        let rotated = rotate(&pts, 37.0);
        let r = kabsch(&pts, &rotated).unwrap();
        assert!(r.rmsd < 1e-12);
        // R undoes the prediction's rotation
        assert!((r.angle_degrees() + 37.0).abs() < 1e-9, "{}", r.angle_degrees());
    }

    #[test]
    fn kabsch_degenerate_cases() {
        let r = kabsch(&[[0.2, 0.3]], &[[0.9, 0.1]]).unwrap();
        assert_eq!(r.rmsd, 0.0);
        assert_eq!(r.rotation, [[1.0, 0.0], [0.0, 1.0]]);
        let line = [[0.1, 0.1], [0.2, 0.2], [0.3, 0.3]];
        let r = kabsch(&line, &[[0.3, 0.1], [0.2, 0.2], [0.1, 0.3]]).unwrap();
        assert!((r.matrix().determinant() - 1.0).abs() < 1e-12);
        assert!(r.rmsd < 1e-12);
        assert_eq!(kabsch(&[], &[]), Err(EvalError::Empty));
        assert_eq!(
            kabsch(&[[0.0, 0.0]], &[]),
            Err(EvalError::LengthMismatch { gt: 1, pred: 0 })
        );
    }

    #[test]
    fn evaluate_examples() {
        let cat = catalog();
        let gt = Arrangement::new(
            "oak",
            vec![
                Placement::new(75, 0.5, 0.6, 0.0),
                Placement::new(25, 0.3, 0.6, 0.0),
                Placement::new(50, 0.7, 0.6, 0.0),
                Placement::new(0, 0.8, 0.4, 0.0),
            ],
        );
        let r = evaluate(&gt, &gt, &cat);
        assert_eq!((r.accuracy, r.all_correct), (1.0, true));
        assert!(r.rmsd.unwrap() < 1e-12);

        // same class, different color, same spot
        let swapped = Arrangement::new(
            "oak",
            gt.placements.iter().map(|p| Placement { object: p.object + 1, ..*p }).collect(),
        );
        let r = evaluate(&gt, &swapped, &cat);
        assert_eq!(r.accuracy, 0.0);
        assert!(r.rmsd.unwrap() < 1e-12);

        let r = evaluate(&gt, &Arrangement::empty("oak"), &cat);
        assert_eq!((r.accuracy, r.rmsd), (0.0, None));
    }

    #[test]
    fn circular_difference_wraps() {
        assert_eq!(circular_difference(350.0, 10.0), 20.0);
        assert_eq!(circular_difference(0.0, 180.0), 180.0);
    }
}
