//! Versioned JSON documents for trained models.
//!
//! ```json
//! { "format_version": 1, "kind": "mlp", "model": { ... } }
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, WeldError};
use crate::mlp::MlpModel;
use crate::rbf::RbfModel;
use crate::som::SomModel;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "model", rename_all = "lowercase")]
pub enum ModelDocument {
    Som(SomModel),
    Mlp(MlpModel),
    Rbf(RbfModel),
}

#[derive(Serialize)]
struct EnvelopeRef<'a> {
    format_version: u32,
    #[serde(flatten)]
    document: &'a ModelDocument,
}

#[derive(Deserialize)]
struct Envelope {
    format_version: u32,
    #[serde(flatten)]
    document: ModelDocument,
}

impl ModelDocument {
    pub fn kind(&self) -> &'static str {
        match self {
            ModelDocument::Som(_) => "som",
            ModelDocument::Mlp(_) => "mlp",
            ModelDocument::Rbf(_) => "rbf",
        }
    }
}

impl From<SomModel> for ModelDocument {
    fn from(m: SomModel) -> Self {
        ModelDocument::Som(m)
    }
}

impl From<MlpModel> for ModelDocument {
    fn from(m: MlpModel) -> Self {
        ModelDocument::Mlp(m)
    }
}

impl From<RbfModel> for ModelDocument {
    fn from(m: RbfModel) -> Self {
        ModelDocument::Rbf(m)
    }
}

pub fn write_model<W: Write>(doc: &ModelDocument, out: W) -> Result<()> {
    let mut out = out;
    serde_json::to_writer(
        &mut out,
        &EnvelopeRef {
            format_version: FORMAT_VERSION,
            document: doc,
        },
    )?;
    writeln!(out)?;
    Ok(())
}

pub fn read_model<R: Read>(input: R) -> Result<ModelDocument> {
    let value: serde_json::Value = serde_json::from_reader(input)?;
    match value.get("format_version").and_then(|v| v.as_u64()) {
        Some(v) if v == u64::from(FORMAT_VERSION) => {}
        Some(v) => return Err(WeldError::UnsupportedModel(format!("format version {v}"))),
        None => return Err(WeldError::UnsupportedModel("missing format_version".into())),
    }
    let env: Envelope = serde_json::from_value(value)
        .map_err(|e| WeldError::UnsupportedModel(e.to_string()))?;
    debug_assert_eq!(env.format_version, FORMAT_VERSION);
    Ok(env.document)
}

pub fn save_model(doc: &ModelDocument, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_model(doc, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<ModelDocument> {
    read_model(BufReader::new(File::open(path)?))
}

/// A trained supervised model.
#[derive(Debug, Clone, PartialEq)]
pub enum Classifier {
    Mlp(MlpModel),
    Rbf(RbfModel),
}

impl Classifier {
    pub fn predict(&self, x: &[f64]) -> Result<u8> {
        match self {
            Classifier::Mlp(m) => m.predict(x),
            Classifier::Rbf(m) => m.predict(x),
        }
    }

    pub fn feature_dim(&self) -> usize {
        match self {
            Classifier::Mlp(m) => m.input_dim(),
            Classifier::Rbf(m) => m.feature_dim(),
        }
    }

    /// Layer-size descriptor, e.g. `50-25-25-2` or `50-95-2`.
    pub fn descriptor(&self) -> String {
        match self {
            Classifier::Mlp(m) => m.topology.to_string(),
            Classifier::Rbf(m) => format!("{}-{}-2", m.feature_dim(), m.n_centers()),
        }
    }

    pub fn training_seconds(&self) -> f64 {
        match self {
            Classifier::Mlp(m) => m.training_seconds,
            Classifier::Rbf(m) => m.training_seconds,
        }
    }
}

impl TryFrom<ModelDocument> for Classifier {
    type Error = WeldError;
    fn try_from(doc: ModelDocument) -> Result<Self> {
        match doc {
            ModelDocument::Mlp(m) => Ok(Classifier::Mlp(m)),
            ModelDocument::Rbf(m) => Ok(Classifier::Rbf(m)),
            other => Err(WeldError::UnsupportedModel(format!(
                "{} model cannot classify patterns",
                other.kind()
            ))),
        }
    }
}

impl From<Classifier> for ModelDocument {
    fn from(c: Classifier) -> Self {
        match c {
            Classifier::Mlp(m) => ModelDocument::Mlp(m),
            Classifier::Rbf(m) => ModelDocument::Rbf(m),
        }
    }
}
