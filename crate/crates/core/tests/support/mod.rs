//! Independent reference implementations used as test oracles. Nothing here
//! calls into the code under test except for plain data types.
#![allow(dead_code)]

use std::f64::consts::TAU;
use std::path::Path;

use degusta_core::acceptability::RatingRecord;
use degusta_core::{Catalog, ObjectSpec};

/// Minimum RMSD over proper rotations, by scanning the angle at 1e-4 rad and
/// refining the best bracket with golden-section search. The translation is
/// the analytic optimum (centroids aligned).
pub fn angle_scan_rmsd(gt: &[[f64; 2]], pred: &[[f64; 2]]) -> f64 {
    assert_eq!(gt.len(), pred.len());
    let n = gt.len() as f64;
    let mean = |pts: &[[f64; 2]]| {
        let (sx, sy) = pts.iter().fold((0.0, 0.0), |(a, b), p| (a + p[0], b + p[1]));
        (sx / n, sy / n)
    };
    let (gx, gy) = mean(gt);
    let (px, py) = mean(pred);
    let q: Vec<(f64, f64)> = gt.iter().map(|p| (p[0] - gx, p[1] - gy)).collect();
    let p: Vec<(f64, f64)> = pred.iter().map(|p| (p[0] - px, p[1] - py)).collect();
    let msd = |theta: f64| {
        let (s, c) = theta.sin_cos();
        p.iter()
            .zip(&q)
            .map(|(a, b)| {
                let rx = c * a.0 - s * a.1;
                let ry = s * a.0 + c * a.1;
                (b.0 - rx).powi(2) + (b.1 - ry).powi(2)
            })
            .sum::<f64>()
            / n
    };
    let step = 1e-4;
    let steps = (TAU / step).ceil() as usize;
    let mut best = (f64::INFINITY, 0.0);
    for k in 0..steps {
        let theta = k as f64 * step;
        let v = msd(theta);
        if v < best.0 {
            best = (v, theta);
        }
    }
    let (mut lo, mut hi) = (best.1 - step, best.1 + step);
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let m1 = hi - phi * (hi - lo);
        let m2 = lo + phi * (hi - lo);
        if msd(m1) < msd(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    msd((lo + hi) / 2.0).min(best.0).max(0.0).sqrt()
}

/// Field-by-field recount of the feature distance, comparing the textual tokens.
pub fn recount_hamming(a: &ObjectSpec, b: &ObjectSpec) -> u32 {
    let fields = |o: &ObjectSpec| {
        [
            o.class.to_string(),
            o.color1.to_string(),
            o.color2.to_string(),
            o.material1.to_string(),
            o.material2.to_string(),
        ]
    };
    fields(a)
        .iter()
        .zip(fields(b).iter())
        .filter(|(x, y)| x != y)
        .count() as u32
}

/// Distance between catalog ids, 5 when either is unknown.
pub fn id_distance(catalog: &Catalog, a: u32, b: u32) -> u32 {
    match (catalog.get(a), catalog.get(b)) {
        (Some(x), Some(y)) => recount_hamming(x, y),
        _ => 5,
    }
}

/// The greedy trace written out step by step: ground-truth objects in order,
/// each scanning predictions front to back and keeping the first strict minimum.
pub fn greedy_trace(dist: &[Vec<u32>]) -> Vec<(usize, usize, u32)> {
    let n_pred = dist.first().map_or(0, Vec::len);
    let mut taken = vec![false; n_pred];
    let mut out = Vec::new();
    for (i, row) in dist.iter().enumerate() {
        let mut pick: Option<(usize, u32)> = None;
        for j in 0..n_pred {
            if taken[j] {
                continue;
            }
            match pick {
                Some((_, d)) if row[j] >= d => {}
                _ => pick = Some((j, row[j])),
            }
        }
        match pick {
            Some((j, d)) => {
                taken[j] = true;
                out.push((i, j, d));
            }
            None => break,
        }
    }
    out
}

/// Every injective map from `0..n` into `0..m` (`n <= m`).
pub fn injective_assignments(n: usize, m: usize) -> Vec<Vec<usize>> {
    fn go(n: usize, m: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == n {
            out.push(cur.clone());
            return;
        }
        for j in 0..m {
            if !cur.contains(&j) {
                cur.push(j);
                go(n, m, cur, out);
                cur.pop();
            }
        }
    }
    let mut out = Vec::new();
    go(n, m, &mut Vec::new(), &mut out);
    out
}

/// Counts, per threshold, records with jitter RMSD at most the threshold and
/// how many of them rated the jittered scene within 0.2 of the original.
pub fn brute_force_people(records: &[RatingRecord], thresholds: &[f64]) -> Vec<(usize, usize)> {
    thresholds
        .iter()
        .map(|&tau| {
            let mut total = 0;
            let mut ok = 0;
            for r in records {
                if r.rmsd_jitter <= tau {
                    total += 1;
                    if r.baseline - r.jitter < 0.2 {
                        ok += 1;
                    }
                }
            }
            (total, ok)
        })
        .collect()
}

/// Ratings fixture planted so that the conditional cumulative acceptance rates
/// at 0.01 / 0.05 / 0.10 are 8/11, 11/33 and 40/201 (0.727, 0.333, 0.199).
///
/// Buckets: 11 records at RMSD <= 0.01 (8 accepting), 22 more in
/// (0.01, 0.05] (3 accepting), 168 more in (0.05, 0.10] (29 accepting), plus
/// 9 records beyond every threshold.
pub fn planted_ratings() -> Vec<RatingRecord> {
    let buckets: [(f64, f64, usize, usize); 4] = [
        (0.002, 0.008, 11, 8),
        (0.015, 0.045, 22, 3),
        (0.055, 0.095, 168, 29),
        (0.2, 0.4, 9, 4),
    ];
    let mut out = Vec::new();
    for (b, &(lo, hi, n, accepting)) in buckets.iter().enumerate() {
        for k in 0..n {
            let rmsd = lo + (hi - lo) * k as f64 / (n.max(2) - 1) as f64;
            // accepting raters drop by 0.1, the rest by 0.5
            let (baseline, jitter) = if k < accepting { (0.9, 0.8) } else { (0.9, 0.4) };
            out.push(RatingRecord {
                session: format!("p{b}-{k:03}"),
                trial: 1 + (k % 5) as u32,
                baseline,
                jitter,
                correction: Some(0.85),
                magnitude: (rmsd * 4.0).min(1.0),
                rmsd_jitter: rmsd,
                rmsd_correction: Some(rmsd / 3.0),
            });
        }
    }
    out
}

/// Textbook Spearman for tie-free data: `1 - 6 sum d^2 / (n (n^2 - 1))`.
pub fn spearman_no_ties(x: &[f64], y: &[f64]) -> f64 {
    let rank = |v: &[f64]| {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap());
        let mut r = vec![0.0; v.len()];
        for (pos, &i) in idx.iter().enumerate() {
            r[i] = pos as f64 + 1.0;
        }
        r
    };
    let (rx, ry) = (rank(x), rank(y));
    let n = x.len() as f64;
    let d2: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - b).powi(2)).sum();
    1.0 - 6.0 * d2 / (n * (n * n - 1.0))
}

/// Placeholder catalog on disk whose first table is replaced by a flat color,
/// so any changed pixel comes from a sprite.
pub fn flat_table_catalog(dir: &Path) -> Catalog {
    degusta_core::placeholder::write_placeholder_catalog(dir).expect("placeholder catalog");
    let manifest = std::fs::read_to_string(dir.join("tables.json")).unwrap();
    let tables: serde_json::Value = serde_json::from_str(&manifest).unwrap();
    let image = tables[0]["image"].as_str().unwrap().to_string();
    let flat = image::RgbaImage::from_pixel(800, 600, image::Rgba([40, 90, 60, 255]));
    flat.save(dir.join(image)).unwrap();
    degusta_core::load_catalog(dir).expect("reload")
}
