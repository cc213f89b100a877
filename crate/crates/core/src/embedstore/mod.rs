//! Keyed frame/sentence embedding matrices and their on-disk container.

mod format;
mod synth;

use indexmap::IndexMap;
use ndarray::{Array2, ArrayView2, Axis};

use crate::error::{Error, Result};

pub use format::{decode, encode, read_embeddings, write_embeddings, MAGIC, VERSION};
pub use synth::{
    synth_text_embeddings, synth_video_model_embeddings, synth_visual_embeddings, video_level, SynthConfig,
    TopicCenters,
};

/// Key of the sentence matrix for a museum's description.
pub fn description_key(museum_id: &str) -> String {
    format!("{museum_id}#desc")
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingEntry {
    /// rows x dim; rows are frames or sentences.
    pub values: Array2<f32>,
}

impl EmbeddingEntry {
    pub fn rows(&self) -> usize {
        self.values.nrows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    pub source_tag: String,
    pub dim: usize,
    pub entries: IndexMap<String, EmbeddingEntry>,
}

impl EmbeddingSet {
    pub fn new(source_tag: &str, dim: usize) -> Self {
        EmbeddingSet {
            source_tag: source_tag.to_string(),
            dim,
            entries: IndexMap::new(),
        }
    }

    /// Adds an entry, enforcing shared dim, unique ids and finite values.
    pub fn insert(&mut self, id: &str, values: Array2<f32>) -> Result<()> {
        if values.ncols() != self.dim {
            return Err(Error::Shape(format!(
                "entry {id} has dim {}, set has {}",
                values.ncols(),
                self.dim
            )));
        }
        if values.nrows() == 0 {
            return Err(Error::Input(format!("entry {id} has no rows")));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("entry {id} has non-finite values")));
        }
        if self.entries.contains_key(id) {
            return Err(Error::Input(format!("duplicate entity id {id}")));
        }
        self.entries
            .insert(id.to_string(), EmbeddingEntry { values });
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<ArrayView2<'_, f32>> {
        self.entries.get(id).map(|e| e.values.view())
    }

    /// Like [`get`](Self::get) but with an error naming the missing id.
    pub fn require(&self, id: &str) -> Result<ArrayView2<'_, f32>> {
        self.get(id).ok_or_else(|| {
            Error::Input(format!(
                "embedding set {:?} has no entry for {id}",
                self.source_tag
            ))
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

pub(crate) fn normalize_rows(mut m: Array2<f32>) -> Array2<f32> {
    for mut row in m.axis_iter_mut(Axis(0)) {
        let norm = row.iter().map(|v| (*v as f64) * (*v as f64)).sum::<f64>().sqrt();
        if norm > 0.0 {
            row.mapv_inplace(|v| (v as f64 / norm) as f32);
        }
    }
    m
}
