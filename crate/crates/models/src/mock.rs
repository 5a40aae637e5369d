//! Scripted provider for offline runs.
//!
//! A script is JSON in one of two shapes:
//! - an array of response texts, consumed in order across calls;
//! - an object mapping a prompt digest or bundle label to one text (repeated
//!   for every sample) or a list of texts, with an optional `"default"` entry.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use degusta_core::evaluation::hamming;
use degusta_core::prediction::format_unmarked_answer;
use degusta_core::prompt::PromptBundle;
use degusta_core::{Arrangement, Catalog};
use serde::{Deserialize, Serialize};

use crate::{ConfigError, SampleError};

pub const DEFAULT_KEY: &str = "default";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Responses {
    One(String),
    Many(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MockScript {
    Sequence(Vec<String>),
    Keyed(BTreeMap<String, Responses>),
}

impl MockScript {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Script(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| ConfigError::Script(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug)]
pub struct MockProvider {
    script: MockScript,
    cursor: AtomicUsize,
}

impl MockProvider {
    pub fn new(script: MockScript) -> Self {
        Self {
            script,
            cursor: AtomicUsize::new(0),
        }
    }

    /// One entry per requested sample, in order.
    pub fn respond(&self, bundle: &PromptBundle) -> Vec<Result<String, SampleError>> {
        let n = bundle.samples;
        match &self.script {
            MockScript::Sequence(texts) => {
                let start = self.cursor.fetch_add(n, Ordering::SeqCst);
                (start..start + n)
                    .map(|i| {
                        texts
                            .get(i)
                            .cloned()
                            .ok_or_else(|| SampleError::Script(format!("script exhausted at response {i}")))
                    })
                    .collect()
            }
            MockScript::Keyed(map) => {
                let digest = bundle.digest();
                let entry = map
                    .get(&digest)
                    .or_else(|| bundle.label.as_ref().and_then(|l| map.get(l)))
                    .or_else(|| map.get(DEFAULT_KEY));
                match entry {
                    None => {
                        let key = bundle.label.clone().unwrap_or(digest);
                        (0..n)
                            .map(|_| Err(SampleError::Script(format!("no scripted response for {key}"))))
                            .collect()
                    }
                    Some(Responses::One(t)) => vec![Ok(t.clone()); n],
                    Some(Responses::Many(ts)) => (0..n)
                        .map(|i| {
                            ts.get(i)
                                .cloned()
                                .ok_or_else(|| SampleError::Script(format!("only {} scripted responses", ts.len())))
                        })
                        .collect(),
                }
            }
        }
    }
}

/// How an oracle script departs from the ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Perturbation {
    None,
    /// Translate every position by (dx, dy).
    Shift { dx: f64, dy: f64 },
    /// Replace the last-placed object with a same-class object of another color.
    SwapColor,
}

/// Closest same-class object whose primary color differs; ties go to the smaller id.
pub fn color_swap(catalog: &Catalog, id: u32) -> Option<u32> {
    let spec = catalog.get(id)?;
    catalog
        .of_class(spec.class)
        .filter(|o| o.color1 != spec.color1)
        .min_by_key(|o| (hamming(spec, o), o.id))
        .map(|o| o.id)
}

pub fn perturb(a: &Arrangement, catalog: &Catalog, p: Perturbation) -> Arrangement {
    let mut out = a.clone();
    match p {
        Perturbation::None => {}
        Perturbation::Shift { dx, dy } => {
            for q in &mut out.placements {
                q.x += dx;
                q.y += dy;
            }
        }
        Perturbation::SwapColor => {
            if let Some(last) = out.placements.last_mut() {
                if let Some(other) = color_swap(catalog, last.object) {
                    last.object = other;
                }
            }
        }
    }
    out
}

/// A keyed script answering each labelled case with its (perturbed) ground truth.
pub fn oracle_script<'a>(
    cases: impl IntoIterator<Item = (&'a str, &'a Arrangement)>,
    catalog: &Catalog,
    p: Perturbation,
) -> MockScript {
    MockScript::Keyed(
        cases
            .into_iter()
            .map(|(label, gt)| {
                let text = format_unmarked_answer(&perturb(gt, catalog, p), catalog);
                (label.to_string(), Responses::One(text))
            })
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use degusta_core::placeholder::placeholder_objects;
    use degusta_core::prompt::Method;
    use degusta_core::Placement;

    fn bundle(label: Option<&str>, samples: usize) -> PromptBundle {
        PromptBundle {
            method: Method::Louma,
            text: "t".into(),
            images: vec![],
            samples,
            grid: None,
            label: label.map(str::to_string),
        }
    }

    #[test]
    fn sequence_is_consumed_in_order() {
        let m = MockProvider::new(MockScript::Sequence((0..7).map(|i| i.to_string()).collect()));
        let first: Vec<String> = m.respond(&bundle(None, 5)).into_iter().map(Result::unwrap).collect();
        assert_eq!(first, vec!["0", "1", "2", "3", "4"]);
        let second = m.respond(&bundle(None, 3));
        assert_eq!(second[1].as_ref().unwrap(), "6");
        assert!(matches!(second[2], Err(SampleError::Script(_))));
    }

    #[test]
    fn keyed_prefers_digest_then_label_then_default() {
        let b = bundle(Some("case-1"), 2);
        let mut map = BTreeMap::new();
        map.insert(DEFAULT_KEY.to_string(), Responses::One("d".into()));
        map.insert("case-1".to_string(), Responses::Many(vec!["l1".into(), "l2".into()]));
        let m = MockProvider::new(MockScript::Keyed(map.clone()));
        assert_eq!(m.respond(&b)[1].as_ref().unwrap(), "l2");
        assert_eq!(m.respond(&bundle(Some("other"), 1))[0].as_ref().unwrap(), "d");
        map.insert(b.digest(), Responses::One("h".into()));
        let m = MockProvider::new(MockScript::Keyed(map));
        assert_eq!(m.respond(&b)[0].as_ref().unwrap(), "h");
    }

    #[test]
    fn script_shapes_parse() {
        let s: MockScript = serde_json::from_str(r#"["a", "b"]"#).unwrap();
        assert_eq!(s, MockScript::Sequence(vec!["a".into(), "b".into()]));
        let s: MockScript = serde_json::from_str(r#"{"x": "a", "default": ["b"]}"#).unwrap();
        assert!(matches!(s, MockScript::Keyed(m) if m.len() == 2));
    }

    #[test]
    fn swap_changes_color_but_not_class() {
        let cat = Catalog::from_parts("/unused", placeholder_objects(), vec![]).unwrap();
        for o in cat.objects() {
            let other = cat.get(color_swap(&cat, o.id).unwrap()).unwrap();
            assert_eq!(other.class, o.class);
            assert_ne!(other.color1, o.color1);
        }
        let a = Arrangement::new("oak", vec![Placement::new(3, 0.5, 0.5, 0.0), Placement::new(80, 0.2, 0.5, 0.0)]);
        let b = perturb(&a, &cat, Perturbation::SwapColor);
        assert_eq!(b.placements[0], a.placements[0]);
        assert_ne!(b.placements[1].object, 80);
    }
}
