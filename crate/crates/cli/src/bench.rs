//! Benchmark generation, study-derived case sets, mock scripts and catalogs.

use std::path::Path;

use anyhow::Context as _;
use degusta_core::dataset::{build_contexts, complete_sessions, read_case, write_benchmark, write_context_pairs};
use degusta_core::placeholder::write_placeholder_catalog;
use degusta_core::simulation::{generate_benchmark, Split};
use degusta_models::mock::oracle_script;
use degusta_models::Perturbation;
use serde::Serialize;

use crate::io::{self, Manifest};
use crate::{Context, ContextsArgs, MockScriptArgs, PerturbArg, SimulateArgs};

#[derive(Serialize)]
struct SimulateSummary {
    out: String,
    seed: u64,
    context_len: usize,
    cases: usize,
    reconstruction: usize,
    generalization: usize,
}

pub fn simulate(ctx: &Context, a: SimulateArgs) -> anyhow::Result<()> {
    let catalog = ctx.catalog()?;
    let seed = a.seed.or(ctx.file.seed).unwrap_or(0);
    let bench = generate_benchmark(&catalog, a.context_len, seed)?;
    io::fresh_dir(&a.out)?;
    write_benchmark(&a.out, &bench)?;
    tracing::info!(cases = bench.cases.len(), out = %a.out.display(), "benchmark written");
    io::print_json(&SimulateSummary {
        out: a.out.display().to_string(),
        seed,
        context_len: a.context_len,
        cases: bench.cases.len(),
        reconstruction: bench.count(Split::Reconstruction),
        generalization: bench.count(Split::Generalization),
    });
    Ok(())
}

#[derive(Serialize)]
struct SizeSummary {
    k: usize,
    manifest: String,
    cases: usize,
    skipped: Vec<SkippedOwner>,
}

#[derive(Serialize)]
struct SkippedOwner {
    owner: String,
    valid_trials: usize,
    needed: usize,
}

pub fn contexts(ctx: &Context, a: ContextsArgs) -> anyhow::Result<()> {
    let catalog = ctx.catalog()?;
    let mut records = io::load_records(&a.dataset)?;
    if !a.include_incomplete {
        let keep = complete_sessions(&records);
        records.retain(|r| keep.contains(&r.session));
        tracing::info!(sessions = keep.len(), "complete sessions");
    }
    let mut out = Vec::new();
    for k in a.k {
        let (pairs, skipped) = build_contexts(&records, k, &catalog);
        let dir = a.out.join(format!("k{k}"));
        io::fresh_dir(&dir)?;
        write_context_pairs(&dir, k, &pairs)?;
        out.push(SizeSummary {
            k,
            manifest: dir.join(degusta_core::dataset::MANIFEST_FILE).display().to_string(),
            cases: pairs.len(),
            skipped: skipped
                .into_iter()
                .map(|s| SkippedOwner {
                    owner: s.owner,
                    valid_trials: s.valid_trials,
                    needed: s.needed,
                })
                .collect(),
        });
    }
    io::print_json(&out);
    Ok(())
}

pub fn mock_script(ctx: &Context, a: MockScriptArgs) -> anyhow::Result<()> {
    let catalog = ctx.catalog()?;
    let manifest = Manifest::load(&a.manifest)?;
    let cases = manifest
        .cases()
        .map(|(_, dir)| read_case(&dir).with_context(|| format!("reading case {}", dir.display())))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let perturbation = match a.perturb {
        PerturbArg::None => Perturbation::None,
        PerturbArg::Shift => Perturbation::Shift { dx: a.dx, dy: a.dy },
        PerturbArg::SwapColor => Perturbation::SwapColor,
    };
    let script = oracle_script(
        cases.iter().map(|c| (c.id.as_str(), &c.ground_truth)),
        &catalog,
        perturbation,
    );
    io::write_json(&a.out, &script)?;
    io::print_json(&serde_json::json!({
        "out": a.out.display().to_string(),
        "cases": cases.len(),
        "perturbation": perturbation,
    }));
    Ok(())
}

pub fn catalog_init(out: &Path) -> anyhow::Result<()> {
    io::fresh_dir(out)?;
    let catalog = write_placeholder_catalog(out)?;
    io::print_json(&serde_json::json!({
        "out": out.display().to_string(),
        "objects": catalog.len(),
        "tables": catalog.tables().len(),
    }));
    Ok(())
}

pub fn catalog_check(ctx: &Context) -> anyhow::Result<()> {
    let catalog = ctx.catalog()?;
    for o in catalog.objects() {
        catalog.sprite(o.id).with_context(|| format!("object {}", o.id))?;
    }
    for t in catalog.tables() {
        catalog.table_image(&t.id).with_context(|| format!("table {}", t.id))?;
    }
    io::print_json(&serde_json::json!({
        "root": catalog.root().display().to_string(),
        "objects": catalog.len(),
        "tables": catalog.tables().iter().map(|t| t.id.as_str()).collect::<Vec<_>>(),
    }));
    Ok(())
}
