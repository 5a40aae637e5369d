use degusta_core::dataset::{
    build_contexts, read_case, read_manifest, write_benchmark, JitterDraw, Ratings, StudyRecord,
};
use degusta_core::evaluation::evaluate;
use degusta_core::placeholder::{placeholder_objects, placeholder_tables};
use degusta_core::simulation::{generate_benchmark, Split};
use degusta_core::{Arrangement, Catalog, Placement};
use walkdir_lite::files;

fn catalog() -> Catalog {
    Catalog::from_parts("/unused", placeholder_objects(), placeholder_tables()).unwrap()
}

mod walkdir_lite {
    use std::path::{Path, PathBuf};

    /// Every file under `root`, sorted.
    pub fn files(root: &Path) -> Vec<PathBuf> {
        let mut out = Vec::new();
        let mut stack = vec![root.to_path_buf()];
        while let Some(dir) = stack.pop() {
            for e in std::fs::read_dir(&dir).unwrap() {
                let p = e.unwrap().path();
                if p.is_dir() {
                    stack.push(p);
                } else {
                    out.push(p);
                }
            }
        }
        out.sort();
        out
    }
}

#[test]
fn benchmark_directory_is_byte_reproducible() {
    let cat = catalog();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    write_benchmark(a.path(), &generate_benchmark(&cat, 2, 11).unwrap()).unwrap();
    write_benchmark(b.path(), &generate_benchmark(&cat, 2, 11).unwrap()).unwrap();
    let (fa, fb) = (files(a.path()), files(b.path()));
    assert_eq!(fa.len(), fb.len());
    for (x, y) in fa.iter().zip(&fb) {
        assert_eq!(x.strip_prefix(a.path()).unwrap(), y.strip_prefix(b.path()).unwrap());
        assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap(), "{}", x.display());
    }
    let c = tempfile::tempdir().unwrap();
    write_benchmark(c.path(), &generate_benchmark(&cat, 2, 12).unwrap()).unwrap();
    let differs = fa
        .iter()
        .zip(files(c.path()))
        .any(|(x, y)| std::fs::read(x).unwrap() != std::fs::read(y).unwrap());
    assert!(differs);
}

#[test]
fn manifest_and_cases_round_trip() {
    let cat = catalog();
    let bench = generate_benchmark(&cat, 4, 1).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_benchmark(dir.path(), &bench).unwrap();
    assert_eq!(read_manifest(dir.path()).unwrap(), manifest);
    assert_eq!(manifest.cases.len(), 72);
    for (entry, case) in manifest.cases.iter().zip(&bench.cases) {
        let stored = read_case(&dir.path().join(&entry.dir)).unwrap();
        assert_eq!(stored.ground_truth, case.ground_truth);
        assert_eq!(stored.context, case.context);
        assert_eq!(stored.split, Some(case.split));
    }
}

#[test]
fn zero_noise_context_coincides_with_ground_truth() {
    let cat = catalog();
    let bench = generate_benchmark(&cat, 2, 5).unwrap();
    let mut zero = 0;
    for case in bench.cases.iter().filter(|c| c.spec.noise.position == 0.0) {
        zero += 1;
        for ctx in &case.context {
            let r = evaluate(&case.ground_truth, ctx, &cat);
            assert!(r.rmsd.unwrap() < 1e-12, "{} {:?} {}", case.id, r.rmsd, r.accuracy);
        }
    }
    assert_eq!(zero, 36);
    for case in &bench.cases {
        for a in case.context.iter().chain([&case.ground_truth]) {
            assert!(a.placements.iter().all(Placement::in_bounds));
        }
    }
    assert_eq!(bench.count(Split::Generalization), 36);
}

fn record(session: &str, trial: u32, n_objects: usize) -> StudyRecord {
    let a = Arrangement::new(
        "oak",
        (0..n_objects)
            .map(|i| Placement::new(i as u32 * 25 + trial, 0.2 + 0.1 * i as f64, 0.5, 0.0))
            .collect(),
    );
    StudyRecord {
        session: session.into(),
        trial,
        arrangement: Some(a.clone()),
        jitter: Some(JitterDraw {
            magnitude: 0.0,
            seed: 0,
            arrangement: a.clone(),
        }),
        corrected: Some(a),
        ratings: Ratings {
            baseline: Some(1.0),
            jitter: Some(1.0),
            correction: Some(1.0),
        },
    }
}

#[test]
fn context_split_follows_trial_order() {
    let cat = catalog();
    let mut records: Vec<StudyRecord> = (0..=5).map(|t| record("full", t, 3)).collect();
    records.extend((0..=3).map(|t| record("short", t, 3)));

    let (pairs, skipped) = build_contexts(&records, 4, &cat);
    assert_eq!(pairs.len(), 1);
    assert_eq!((pairs[0].owner.as_str(), pairs[0].held_out_trial), ("full", 5));
    assert_eq!(pairs[0].context.len(), 4);
    assert_eq!(skipped.len(), 1);
    assert_eq!((skipped[0].owner.as_str(), skipped[0].valid_trials), ("short", 3));

    let (pairs, _) = build_contexts(&records, 0, &cat);
    assert!(pairs.iter().all(|p| p.context.is_empty() && p.held_out_trial == 1));

    for c in [0, 2, 4] {
        for p in build_contexts(&records, c, &cat).0 {
            assert!(p.context.entries.iter().all(|e| e.arrangement != p.held_out));
        }
    }
}

#[test]
fn invalid_trials_are_skipped_when_splitting() {
    let cat = catalog();
    let mut records: Vec<StudyRecord> = (1..=5).map(|t| record("p", t, 3)).collect();
    records[1] = record("p", 2, 2);
    let (pairs, _) = build_contexts(&records, 2, &cat);
    assert_eq!(pairs[0].held_out_trial, 4);
    assert_eq!(pairs[0].context.entries[1].arrangement, records[2].arrangement.clone().unwrap());
}
