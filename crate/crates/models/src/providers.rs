//! Request bodies and response readers for the public chat schemas.

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use degusta_core::prompt::PromptBundle;
use serde_json::{json, Value};

use crate::{ProviderConfig, ProviderKind};

const ANTHROPIC_VERSION: &str = "2023-06-01";
const ANTHROPIC_DEFAULT_MAX_TOKENS: u32 = 2048;

/// Text blocks and images in prompt order: the prompt, then each image
/// preceded by its file name so the model can resolve references.
enum Part<'a> {
    Text(&'a str),
    Image { media_type: &'a str, data: String },
}

fn parts(bundle: &PromptBundle) -> Vec<Part<'_>> {
    let mut out = vec![Part::Text(&bundle.text)];
    for img in &bundle.images {
        out.push(Part::Text(&img.name));
        out.push(Part::Image {
            media_type: img.media_type(),
            data: B64.encode(&img.png),
        });
    }
    out
}

pub struct HttpRequest {
    pub url: String,
    pub headers: Vec<(&'static str, String)>,
    pub body: Value,
}

/// `choices` is the number of samples this one request should return.
pub fn build_request(cfg: &ProviderConfig, bundle: &PromptBundle, api_key: &str, choices: usize) -> HttpRequest {
    let endpoint = cfg.endpoint().unwrap_or_default();
    match cfg.kind {
        ProviderKind::OpenaiCompatible => {
            let content: Vec<Value> = parts(bundle)
                .into_iter()
                .map(|p| match p {
                    Part::Text(t) => json!({"type": "text", "text": t}),
                    Part::Image { media_type, data } => json!({
                        "type": "image_url",
                        "image_url": {"url": format!("data:{media_type};base64,{data}")}
                    }),
                })
                .collect();
            let mut body = json!({
                "model": cfg.model,
                "n": choices,
                "messages": [{"role": "user", "content": content}],
            });
            if let Some(t) = cfg.temperature {
                body["temperature"] = json!(t);
            }
            if let Some(m) = cfg.max_output_tokens {
                body["max_tokens"] = json!(m);
            }
            HttpRequest {
                url: format!("{endpoint}/chat/completions"),
                headers: vec![("authorization", format!("Bearer {api_key}"))],
                body,
            }
        }
        ProviderKind::AnthropicCompatible => {
            let content: Vec<Value> = parts(bundle)
                .into_iter()
                .map(|p| match p {
                    Part::Text(t) => json!({"type": "text", "text": t}),
                    Part::Image { media_type, data } => json!({
                        "type": "image",
                        "source": {"type": "base64", "media_type": media_type, "data": data}
                    }),
                })
                .collect();
            let mut body = json!({
                "model": cfg.model,
                "max_tokens": cfg.max_output_tokens.unwrap_or(ANTHROPIC_DEFAULT_MAX_TOKENS),
                "messages": [{"role": "user", "content": content}],
            });
            if let Some(t) = cfg.temperature {
                body["temperature"] = json!(t);
            }
            HttpRequest {
                url: format!("{endpoint}/messages"),
                headers: vec![
                    ("x-api-key", api_key.to_string()),
                    ("anthropic-version", ANTHROPIC_VERSION.to_string()),
                ],
                body,
            }
        }
        ProviderKind::GeminiCompatible => {
            let parts: Vec<Value> = parts(bundle)
                .into_iter()
                .map(|p| match p {
                    Part::Text(t) => json!({"text": t}),
                    Part::Image { media_type, data } => {
                        json!({"inline_data": {"mime_type": media_type, "data": data}})
                    }
                })
                .collect();
            let mut generation = serde_json::Map::new();
            if let Some(t) = cfg.temperature {
                generation.insert("temperature".into(), json!(t));
            }
            if let Some(m) = cfg.max_output_tokens {
                generation.insert("maxOutputTokens".into(), json!(m));
            }
            let mut body = json!({"contents": [{"role": "user", "parts": parts}]});
            if !generation.is_empty() {
                body["generationConfig"] = Value::Object(generation);
            }
            HttpRequest {
                url: format!("{endpoint}/models/{}:generateContent", cfg.model),
                headers: vec![("x-goog-api-key", api_key.to_string())],
                body,
            }
        }
        ProviderKind::Mock => unreachable!("mock requests never go over HTTP"),
    }
}

#[derive(Debug, Default, PartialEq)]
pub struct Parsed {
    pub texts: Vec<String>,
    pub input_tokens: u64,
    pub output_tokens: u64,
}

fn tokens(v: &Value, key: &str) -> u64 {
    v.get(key).and_then(Value::as_u64).unwrap_or(0)
}

/// Pull response texts out of a provider payload; `None` if the shape is wrong.
pub fn parse_response(kind: ProviderKind, body: &Value) -> Option<Parsed> {
    match kind {
        ProviderKind::OpenaiCompatible => {
            let choices = body.get("choices")?.as_array()?;
            let texts = choices
                .iter()
                .map(|c| c.pointer("/message/content")?.as_str().map(str::to_string))
                .collect::<Option<Vec<_>>>()?;
            let usage = body.get("usage").cloned().unwrap_or(Value::Null);
            Some(Parsed {
                texts,
                input_tokens: tokens(&usage, "prompt_tokens"),
                output_tokens: tokens(&usage, "completion_tokens"),
            })
        }
        ProviderKind::AnthropicCompatible => {
            let blocks = body.get("content")?.as_array()?;
            let text: String = blocks
                .iter()
                .filter(|b| b.get("type").and_then(Value::as_str) == Some("text"))
                .filter_map(|b| b.get("text").and_then(Value::as_str))
                .collect();
            if blocks.is_empty() {
                return None;
            }
            let usage = body.get("usage").cloned().unwrap_or(Value::Null);
            Some(Parsed {
                texts: vec![text],
                input_tokens: tokens(&usage, "input_tokens"),
                output_tokens: tokens(&usage, "output_tokens"),
            })
        }
        ProviderKind::GeminiCompatible => {
            let parts = body.pointer("/candidates/0/content/parts")?.as_array()?;
            let text: String = parts.iter().filter_map(|p| p.get("text").and_then(Value::as_str)).collect();
            let usage = body.get("usageMetadata").cloned().unwrap_or(Value::Null);
            Some(Parsed {
                texts: vec![text],
                input_tokens: tokens(&usage, "promptTokenCount"),
                output_tokens: tokens(&usage, "candidatesTokenCount"),
            })
        }
        ProviderKind::Mock => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use degusta_core::prompt::Method;

    fn bundle() -> PromptBundle {
        PromptBundle {
            method: Method::Mouma,
            text: "prompt".into(),
            images: vec![],
            samples: 5,
            grid: None,
            label: None,
        }
    }

    #[test]
    fn openai_asks_for_n_choices() {
        let cfg = ProviderConfig::new(ProviderKind::OpenaiCompatible, "m");
        let r = build_request(&cfg, &bundle(), "k", 5);
        assert_eq!(r.body["n"], 5);
        assert!(r.url.ends_with("/chat/completions"));
        assert_eq!(r.headers[0].1, "Bearer k");
    }

    #[test]
    fn gemini_url_names_the_model() {
        let mut cfg = ProviderConfig::new(ProviderKind::GeminiCompatible, "g-1");
        cfg.endpoint = Some("http://localhost:9/v1beta/".into());
        let r = build_request(&cfg, &bundle(), "k", 1);
        assert_eq!(r.url, "http://localhost:9/v1beta/models/g-1:generateContent");
    }

    #[test]
    fn readers_reject_wrong_shapes() {
        for kind in [
            ProviderKind::OpenaiCompatible,
            ProviderKind::AnthropicCompatible,
            ProviderKind::GeminiCompatible,
        ] {
            assert!(parse_response(kind, &json!({"unexpected": 1})).is_none(), "{kind}");
        }
        let p = parse_response(
            ProviderKind::AnthropicCompatible,
            &json!({"content": [{"type": "text", "text": "[1]"}], "usage": {"input_tokens": 7, "output_tokens": 2}}),
        )
        .unwrap();
        assert_eq!(p.texts, vec!["[1]"]);
        assert_eq!((p.input_tokens, p.output_tokens), (7, 2));
    }
}
