//! The study service and its data directory.

use std::net::SocketAddr;

use anyhow::Context as _;
use degusta_core::dataset::{DatasetStore, StudyRecord, WriteOutcome};
use degusta_service::{Server, ServiceConfig};

use crate::exit::UsageError;
use crate::io;
use crate::{Context, ExportArgs, IngestArgs, ServeArgs};

pub fn serve(ctx: &Context, a: ServeArgs) -> anyhow::Result<()> {
    let file = &ctx.file.serve;
    let host = a.host.or_else(|| file.host.clone()).unwrap_or_else(|| "127.0.0.1".into());
    let port = a.port.or(file.port).unwrap_or(8080);
    let addr: SocketAddr = format!("{host}:{port}")
        .parse()
        .map_err(|_| UsageError(format!("bad listen address {host}:{port}")))?;
    let mut cfg = ServiceConfig::new(ctx.data_dir(a.data_dir), ctx.catalog_dir.clone());
    cfg.providers = ctx.file.providers.clone();
    cfg.seed = a.seed.or(file.seed).or(ctx.file.seed);
    cfg.ui_dir = a.ui_dir.or_else(|| file.ui_dir.clone());
    cfg.cors_origins = if a.cors_origin.is_empty() { file.cors_origins.clone() } else { a.cors_origin };
    if let Some(ms) = a.predict_wait_ms.or(file.predict_wait_ms) {
        cfg.predict_wait_ms = ms;
    }
    if let Some(j) = &file.jitter {
        cfg.jitter = j.clone();
    }
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(async move {
        let server = Server::bind(cfg, addr).await?;
        eprintln!("listening on http://{}", server.local_addr());
        tokio::select! {
            r = server.run() => r.map_err(anyhow::Error::from),
            _ = tokio::signal::ctrl_c() => {
                tracing::info!("shutting down");
                Ok(())
            }
        }
    })
}

fn open_store(ctx: &Context, flag: Option<std::path::PathBuf>) -> anyhow::Result<DatasetStore> {
    let dir = ctx.data_dir(flag);
    DatasetStore::open(&dir).with_context(|| format!("opening {}", dir.display()))
}

pub fn export(ctx: &Context, a: ExportArgs) -> anyhow::Result<()> {
    let text = open_store(ctx, a.data_dir)?.export_jsonl()?;
    match a.out {
        Some(path) => io::write_text(&path, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn ingest(ctx: &Context, a: IngestArgs) -> anyhow::Result<()> {
    let store = open_store(ctx, a.data_dir)?;
    let records: Vec<StudyRecord> = io::read_jsonl(&a.records)?;
    let outcomes = store.ingest(&records)?;
    let count = |w: WriteOutcome| outcomes.iter().filter(|&&o| o == w).count();
    io::print_json(&serde_json::json!({
        "records": records.len(),
        "created": count(WriteOutcome::Created),
        "updated": count(WriteOutcome::Updated),
        "unchanged": count(WriteOutcome::Unchanged),
    }));
    Ok(())
}
