use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to one named block of parameters inside a [`ParamSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Slot(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParamKind {
    /// He-initialized with variance `2 / fan_in`, where `fan_in = cols`.
    Weight,
    /// Zero-initialized.
    Bias,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub kind: ParamKind,
    /// Start of this block in the flat value vector.
    pub offset: usize,
}

impl ParamSpec {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn fan_in(&self) -> usize {
        self.cols
    }
}

/// Ordered list of parameter shapes. Registration order defines the flat
/// index of every scalar.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamShapes {
    pub specs: Vec<ParamSpec>,
    total: usize,
}

impl ParamShapes {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, rows: usize, cols: usize, kind: ParamKind) -> Slot {
        let spec = ParamSpec {
            name: name.into(),
            rows,
            cols,
            kind,
            offset: self.total,
        };
        self.total += spec.len();
        self.specs.push(spec);
        Slot(self.specs.len() - 1)
    }

    pub fn weight(&mut self, name: impl Into<String>, rows: usize, cols: usize) -> Slot {
        self.push(name, rows, cols, ParamKind::Weight)
    }

    pub fn bias(&mut self, name: impl Into<String>, rows: usize) -> Slot {
        self.push(name, rows, 1, ParamKind::Bias)
    }

    /// Number of scalars across all blocks.
    pub fn total(&self) -> usize {
        self.total
    }
}

/// Every learnable scalar of a model, stored flat.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    pub shapes: ParamShapes,
    pub values: Vec<f64>,
    /// Seed used by [`he_init`], if any.
    pub seed: Option<u64>,
}

impl ParamSet {
    pub fn zeros(shapes: ParamShapes) -> Self {
        let values = vec![0.0; shapes.total()];
        Self {
            shapes,
            values,
            seed: None,
        }
    }

    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.values.len() {
            return Err(Error::Shape(format!(
                "expected {} parameter values, got {}",
                self.values.len(),
                values.len()
            )));
        }
        Ok(Self {
            shapes: self.shapes.clone(),
            values,
            seed: self.seed,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn spec(&self, slot: Slot) -> &ParamSpec {
        &self.shapes.specs[slot.0]
    }

    pub fn slice(&self, slot: Slot) -> &[f64] {
        let s = self.spec(slot);
        &self.values[s.offset..s.offset + s.len()]
    }

    pub fn slice_mut(&mut self, slot: Slot) -> &mut [f64] {
        let s = self.shapes.specs[slot.0].clone();
        &mut self.values[s.offset..s.offset + s.len()]
    }

    pub fn tensor(&self, slot: Slot) -> Tensor {
        let s = self.spec(slot);
        Tensor::from_vec(s.rows, s.cols, self.slice(slot).to_vec())
    }

    /// Maps a flat index back to `(block name, row, col)`.
    pub fn locate(&self, flat: usize) -> Option<(&str, usize, usize)> {
        let spec = self
            .shapes
            .specs
            .iter()
            .find(|s| flat >= s.offset && flat < s.offset + s.len())?;
        let local = flat - spec.offset;
        Some((spec.name.as_str(), local / spec.cols, local % spec.cols))
    }

    /// Flat index of `(slot, row, col)`.
    pub fn flat_index(&self, slot: Slot, row: usize, col: usize) -> usize {
        let s = self.spec(slot);
        assert!(row < s.rows && col < s.cols);
        s.offset + row * s.cols + col
    }
}

/// He (Kaiming) normal initialization: weights ~ N(0, 2 / fan_in), biases 0.
///
/// Draws are taken block by block in registration order from a ChaCha8
/// stream, so the same `(shapes, seed)` always yields the same values.
pub fn he_init(shapes: &ParamShapes, seed: u64) -> ParamSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut set = ParamSet::zeros(shapes.clone());
    set.seed = Some(seed);
    for spec in &shapes.specs {
        if spec.kind == ParamKind::Bias || spec.is_empty() {
            continue;
        }
        let std = (2.0 / spec.fan_in() as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("finite std");
        for v in &mut set.values[spec.offset..spec.offset + spec.len()] {
            *v = normal.sample(&mut rng);
        }
    }
    set
}
