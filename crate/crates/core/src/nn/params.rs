//! Flat parameter vectors and their on-disk format.
//!
//! A parameter file is one JSON header line followed by the values as
//! little-endian `f64`.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ModelConfig;
use crate::error::{Error, Result};

pub const FORMAT: &str = "hgscale-params";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerShape {
    pub name: String,
    pub shape: Vec<usize>,
}

impl LayerShape {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// All network parameters as one vector, with the manifest needed to carve
/// it back into layers.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    pub config: ModelConfig,
    pub seed: u64,
    layout: Vec<LayerShape>,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    seed: u64,
    config: ModelConfig,
    layers: Vec<LayerShape>,
    len: usize,
}

impl ParamSet {
    pub fn new(config: ModelConfig, seed: u64, layout: Vec<LayerShape>, values: Vec<f64>) -> Result<Self> {
        let expected: usize = layout.iter().map(LayerShape::len).sum();
        if values.len() != expected {
            return Err(Error::Params(format!(
                "layout needs {expected} values, got {}",
                values.len()
            )));
        }
        Ok(Self {
            config,
            seed,
            layout,
            values,
        })
    }

    pub fn layout(&self) -> &[LayerShape] {
        &self.layout
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Same manifest, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(self.config, self.seed, self.layout.clone(), values)
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        let header = Header {
            format: FORMAT.into(),
            version: VERSION,
            seed: self.seed,
            config: self.config,
            layers: self.layout.clone(),
            len: self.values.len(),
        };
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n")?;
        let mut buf = Vec::with_capacity(self.values.len() * 8);
        for v in &self.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from(r: impl Read) -> Result<Self> {
        let mut r = BufReader::new(r);
        let mut line = String::new();
        r.read_line(&mut line)?;
        let header: Header =
            serde_json::from_str(line.trim_end()).map_err(|e| Error::Params(format!("bad header: {e}")))?;
        if header.format != FORMAT || header.version != VERSION {
            return Err(Error::Params(format!(
                "unsupported format {} v{}",
                header.format, header.version
            )));
        }
        let mut raw = Vec::new();
        r.read_to_end(&mut raw)?;
        if raw.len() != header.len * 8 {
            return Err(Error::Params(format!(
                "header announces {} values, file holds {} bytes",
                header.len,
                raw.len()
            )));
        }
        let values = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        let expected = super::layout(&header.config);
        if expected != header.layers {
            return Err(Error::Params(
                "layer manifest does not match the model configuration".into(),
            ));
        }
        Self::new(header.config, header.seed, header.layers, values)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(f);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(std::fs::File::open(path)?)
    }
}
