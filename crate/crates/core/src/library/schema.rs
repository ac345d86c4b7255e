//! Versioned JSON document for libraries.
//!
//! ```json
//! {
//!   "format": "pscache-library",
//!   "version": 1,
//!   "generator": "adapter",
//!   "seed": 7,
//!   "blocks": [{ "id": "gpt2-small/backbone", "size_bytes": 62000000 }],
//!   "models": [{ "id": "gpt2-small/m0", "blocks": ["gpt2-small/backbone"] }]
//! }
//! ```

use serde::{Deserialize, Serialize};

use super::{LibraryError, ModelLibrary, ParameterBlock, Provenance};

pub const LIBRARY_FORMAT: &str = "pscache-library";
pub const LIBRARY_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BlockRow {
    id: String,
    size_bytes: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelRow {
    id: String,
    blocks: Vec<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LibraryDoc {
    format: String,
    version: u32,
    generator: String,
    seed: Option<u64>,
    blocks: Vec<BlockRow>,
    models: Vec<ModelRow>,
}

impl ModelLibrary {
    pub fn to_json(&self) -> String {
        let doc = LibraryDoc {
            format: LIBRARY_FORMAT.into(),
            version: LIBRARY_FORMAT_VERSION,
            generator: self.provenance.generator.clone(),
            seed: self.provenance.seed,
            blocks: self
                .blocks
                .iter()
                .map(|b| BlockRow {
                    id: b.id.clone(),
                    size_bytes: b.size_bytes,
                })
                .collect(),
            models: self
                .models
                .iter()
                .map(|m| ModelRow {
                    id: m.id.clone(),
                    blocks: m.blocks.iter().map(|&j| self.blocks[j].id.clone()).collect(),
                })
                .collect(),
        };
        let mut s = serde_json::to_string_pretty(&doc).expect("library serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, LibraryError> {
        let doc: LibraryDoc =
            serde_json::from_str(text).map_err(|e| LibraryError::Format(e.to_string()))?;
        if doc.format != LIBRARY_FORMAT {
            return Err(LibraryError::Format(format!(
                "expected format `{LIBRARY_FORMAT}`, found `{}`",
                doc.format
            )));
        }
        if doc.version != LIBRARY_FORMAT_VERSION {
            return Err(LibraryError::Format(format!(
                "unsupported version {} (expected {LIBRARY_FORMAT_VERSION})",
                doc.version
            )));
        }
        ModelLibrary::from_ids(
            doc.blocks
                .into_iter()
                .map(|b| ParameterBlock {
                    id: b.id,
                    size_bytes: b.size_bytes,
                })
                .collect(),
            doc.models.into_iter().map(|m| (m.id, m.blocks)).collect(),
            Provenance {
                generator: doc.generator,
                seed: doc.seed,
            },
        )
    }
}

#[cfg(test)]
mod tests {
    use super::super::{generate_library, LibraryConfig};
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_wrong_format_or_version() {
        let lib = generate_library(&LibraryConfig::resnet_two_stage(), 1).unwrap();
        let text = lib.to_json();
        let bad = text.replace("\"version\": 1", "\"version\": 9");
        assert!(matches!(ModelLibrary::from_json(&bad), Err(LibraryError::Format(_))));
        let bad = text.replace(LIBRARY_FORMAT, "other");
        assert!(ModelLibrary::from_json(&bad).is_err());
        assert!(ModelLibrary::from_json("{").is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn serialization_round_trips(seed in any::<u64>(), kind in 0usize..3) {
            let cfg = match kind {
                0 => LibraryConfig::resnet_chain(),
                1 => LibraryConfig::gpt2_adapter(),
                _ => LibraryConfig::resnet_two_stage(),
            };
            let lib = generate_library(&cfg, seed).unwrap();
            let text = lib.to_json();
            let back = ModelLibrary::from_json(&text).unwrap();
            prop_assert_eq!(&back, &lib);
            prop_assert_eq!(back.to_json(), text);
        }
    }
}
