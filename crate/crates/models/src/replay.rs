use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::Path;
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use serde_json::{json, Value};

/// Append-only JSON-lines audit log of provider traffic.
#[derive(Debug)]
pub struct ReplayLog {
    file: Mutex<File>,
}

impl ReplayLog {
    pub fn open(path: &Path) -> std::io::Result<Self> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self { file: Mutex::new(file) })
    }

    pub fn append(&self, provider: &str, digest: &str, request: &Value, status: Option<u16>, response: &Value) {
        let ts = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs_f64())
            .unwrap_or(0.0);
        let line = json!({
            "ts": ts,
            "provider": provider,
            "digest": digest,
            "request": redact(request),
            "status": status,
            "response": response,
        });
        let mut f = self.file.lock().unwrap_or_else(|e| e.into_inner());
        if let Err(e) = writeln!(f, "{line}") {
            tracing::warn!("replay log write failed: {e}");
        }
    }
}

/// Replace long base64 payloads with their length so the log stays readable.
fn redact(v: &Value) -> Value {
    match v {
        Value::String(s) if s.len() > 512 => Value::String(format!("<{} bytes elided>", s.len())),
        Value::Array(items) => Value::Array(items.iter().map(redact).collect()),
        Value::Object(map) => Value::Object(map.iter().map(|(k, v)| (k.clone(), redact(v))).collect()),
        other => other.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lines_are_json_and_images_elided() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("logs/replay.jsonl");
        let log = ReplayLog::open(&path).unwrap();
        let big = "A".repeat(2000);
        log.append("mock", "abc", &json!({"image": big, "text": "hi"}), Some(200), &json!({"ok": true}));
        log.append("mock", "abc", &json!({}), None, &json!(null));
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0]["request"]["image"], "<2000 bytes elided>");
        assert_eq!(lines[0]["request"]["text"], "hi");
    }
}
