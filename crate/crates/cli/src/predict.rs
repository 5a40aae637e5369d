//! Prompt rendering and model prediction, locally or through the service.

use std::path::PathBuf;
use std::sync::Arc;

use anyhow::Context as _;
use degusta_api::PredictRequest;
use degusta_client::Client;
use degusta_core::dataset::{read_case, CaseRecord};
use degusta_core::lifting::GridSpec;
use degusta_core::prompt::{build_prompt, Method, PromptBundle};
use degusta_core::Catalog;
use degusta_models::{predict as run_prediction, ModelClient, Prediction, UsageRecord};
use futures::StreamExt;
use serde::Serialize;

use crate::config::{resolve_provider, ProviderFlags};
use crate::exit::{ProviderFailure, UsageError};
use crate::io::{self, Manifest};
use crate::{Context, PredictArgs, RenderArgs};

fn check_grid(method: Method, grid: Option<GridSpec>) -> anyhow::Result<Option<GridSpec>> {
    if method.grid_marked() && grid.is_none() {
        return Err(UsageError(format!("{method} needs a grid; pass --grid CxR (e.g. 10x10)")).into());
    }
    // unmarked methods ignore it
    Ok(grid.filter(|_| method.grid_marked()))
}

fn bundle_for(
    case: &CaseRecord,
    catalog: &Catalog,
    method: Method,
    grid: Option<GridSpec>,
    samples: usize,
) -> anyhow::Result<PromptBundle> {
    let context = case.preference_context(catalog);
    let mut bundle = build_prompt(method, &context, catalog, &case.initial(), grid.as_ref())?;
    bundle.samples = samples;
    bundle.label = Some(case.id.clone());
    Ok(bundle)
}

#[derive(Serialize)]
struct BundleIndex<'a> {
    method: Method,
    samples: usize,
    digest: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    grid: Option<GridSpec>,
    images: Vec<ImageIndex<'a>>,
}

#[derive(Serialize)]
struct ImageIndex<'a> {
    /// Name the prompt text uses.
    name: &'a str,
    file: String,
    marks: String,
}

pub fn render(ctx: &Context, a: RenderArgs) -> anyhow::Result<()> {
    let grid = check_grid(a.method, a.grid)?;
    let catalog = ctx.catalog()?;
    let case = read_case(&a.case).with_context(|| format!("reading case {}", a.case.display()))?;
    let bundle = bundle_for(&case, &catalog, a.method, grid, a.samples)?;
    let out = a
        .out
        .unwrap_or_else(|| a.case.join(format!("prompt_{}", a.method.as_str().to_lowercase())));
    io::write_text(&out.join("prompt.txt"), &bundle.text)?;
    let mut images = Vec::new();
    for img in &bundle.images {
        let stem = img.name.rsplit_once('.').map_or(img.name.as_str(), |(s, _)| s);
        let file = format!("{stem}.png");
        let marks = format!("{stem}.marks.json");
        degusta_core::dataset::write_atomic(&out.join(&file), &img.png)?;
        io::write_json(&out.join(&marks), &serde_json::json!({ "marks": img.marks }))?;
        images.push(ImageIndex {
            name: &img.name,
            file,
            marks,
        });
    }
    let index = BundleIndex {
        method: bundle.method,
        samples: bundle.samples,
        digest: bundle.digest(),
        grid: bundle.grid,
        images,
    };
    io::write_json(&out.join("bundle.json"), &index)?;
    io::print_json(&serde_json::json!({
        "out": out.display().to_string(),
        "digest": index.digest,
        "images": index.images.len(),
    }));
    Ok(())
}

enum Backend {
    Local(Arc<ModelClient>),
    Remote { client: Client, provider: String },
}

#[derive(Serialize)]
struct CaseOutcome {
    case: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    output: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    placed: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

#[derive(Serialize)]
struct BatchSummary {
    method: Method,
    provider: String,
    cases: usize,
    succeeded: usize,
    failed: usize,
    usage: UsageRecord,
    outcomes: Vec<CaseOutcome>,
}

async fn predict_case(
    dir: PathBuf,
    catalog: Arc<Catalog>,
    backend: Arc<Backend>,
    method: Method,
    grid: Option<GridSpec>,
    samples: usize,
) -> anyhow::Result<(String, Prediction)> {
    let case = read_case(&dir).with_context(|| format!("reading case {}", dir.display()))?;
    let prediction = match &*backend {
        Backend::Local(model) => {
            let (case_c, catalog_c) = (case.clone(), catalog.clone());
            let bundle = tokio::task::spawn_blocking(move || bundle_for(&case_c, &catalog_c, method, grid, samples))
                .await
                .context("prompt rendering panicked")??;
            run_prediction(model, &bundle, &catalog, &case.target_table)
                .await
                .with_context(|| format!("case {}", case.id))?
        }
        Backend::Remote { client, provider } => {
            let request = PredictRequest {
                context: case.preference_context(&catalog),
                initial: case.initial(),
                method,
                provider: provider.clone(),
                samples: Some(samples),
                grid,
                label: Some(case.id.clone()),
            };
            client.predict(&request).await.with_context(|| format!("case {}", case.id))?
        }
    };
    io::write_json(&io::prediction_file(&dir, method), &prediction)?;
    Ok((case.id, prediction))
}

pub fn predict(ctx: &Context, a: PredictArgs) -> anyhow::Result<()> {
    let grid = check_grid(a.method, a.grid)?;
    if a.samples == 0 {
        return Err(UsageError("--samples must be at least 1".into()).into());
    }
    let jobs = a.jobs.or(ctx.file.jobs).unwrap_or(4).max(1);
    let backend = match &a.server {
        Some(url) => Backend::Remote {
            client: Client::new(url.clone())?,
            provider: a.provider.clone(),
        },
        None => {
            let flags = ProviderFlags {
                model: a.model.clone(),
                endpoint: a.endpoint.clone(),
                script: a.script.clone(),
                credential_env: a.credential_env.clone(),
                replay_log: a.replay_log.clone(),
                temperature: a.temperature,
            };
            let cfg = resolve_provider(&a.provider, &ctx.file, &flags)?;
            Backend::Local(Arc::new(ModelClient::new(cfg)?))
        }
    };
    let backend = Arc::new(backend);
    let catalog = Arc::new(ctx.catalog()?);
    let dirs: Vec<(String, PathBuf)> = match (&a.case, &a.manifest) {
        (Some(dir), _) => vec![(dir.display().to_string(), dir.clone())],
        (None, Some(m)) => Manifest::load(m)?.cases().map(|(e, d)| (e.id.clone(), d)).collect(),
        (None, None) => unreachable!("clap requires one input"),
    };
    let single = a.case.is_some();

    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    let results: Vec<(String, PathBuf, anyhow::Result<(String, Prediction)>)> = runtime.block_on(async {
        futures::stream::iter(dirs)
            .map(|(id, dir)| {
                let fut = predict_case(dir.clone(), catalog.clone(), backend.clone(), a.method, grid, a.samples);
                async move { (id, dir, fut.await) }
            })
            .buffered(jobs)
            .collect()
            .await
    });

    if single {
        let (_, _, result) = results.into_iter().next().expect("one case");
        let (_, prediction) = result?;
        io::print_json(&prediction);
        return Ok(());
    }

    let mut usage = UsageRecord::default();
    let mut outcomes = Vec::with_capacity(results.len());
    let mut first_error = None;
    for (id, dir, result) in results {
        match result {
            Ok((case, p)) => {
                usage.add(&p.usage);
                outcomes.push(CaseOutcome {
                    case,
                    output: Some(io::prediction_file(&dir, a.method).display().to_string()),
                    placed: Some(p.arrangement.len()),
                    error: None,
                });
            }
            Err(e) => {
                tracing::error!(case = %id, "{e:#}");
                let message = format!("{e:#}");
                first_error.get_or_insert_with(|| e);
                outcomes.push(CaseOutcome {
                    case: id,
                    output: None,
                    placed: None,
                    error: Some(message),
                });
            }
        }
    }
    let failed = outcomes.iter().filter(|o| o.error.is_some()).count();
    let summary = BatchSummary {
        method: a.method,
        provider: a.provider.clone(),
        cases: outcomes.len(),
        succeeded: outcomes.len() - failed,
        failed,
        usage,
        outcomes,
    };
    io::print_json(&summary);
    match first_error {
        None => Ok(()),
        Some(e) if crate::exit::classify(&e).error != "provider" => Err(e),
        Some(e) => Err(ProviderFailure(format!("{failed} of {} cases failed; first: {e:#}", summary.cases)).into()),
    }
}
