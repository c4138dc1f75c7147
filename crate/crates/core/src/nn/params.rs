use rand::Rng;

use crate::error::{Error, Result};

/// Handle to one array inside a [`ParameterSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

/// A named, row-major parameter array.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

/// Ordered collection of named parameter arrays. Shapes are fixed once added.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParameterSet {
    params: Vec<Param>,
}

impl ParameterSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a zero-filled array.
    pub fn add_zeros(&mut self, name: impl Into<String>, rows: usize, cols: usize) -> ParamId {
        self.params.push(Param {
            name: name.into(),
            rows,
            cols,
            values: vec![0.0; rows * cols],
        });
        ParamId(self.params.len() - 1)
    }

    /// Adds an array drawn uniformly from `[-bound, bound]`.
    pub fn add_uniform<R: Rng + ?Sized>(
        &mut self,
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        bound: f64,
        rng: &mut R,
    ) -> ParamId {
        let id = self.add_zeros(name, rows, cols);
        if bound > 0.0 {
            for v in &mut self.params[id.0].values {
                *v = rng.gen_range(-bound..=bound);
            }
        }
        id
    }

    #[inline]
    pub fn get(&self, id: ParamId) -> &[f64] {
        &self.params[id.0].values
    }

    #[inline]
    pub fn get_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.params[id.0].values
    }

    pub fn param(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.params.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.values.len()).sum()
    }

    pub fn zero_gradients(&self) -> GradientSet {
        GradientSet {
            blocks: self.params.iter().map(|p| vec![0.0; p.values.len()]).collect(),
        }
    }

    /// Sets every entry to zero.
    pub fn fill_zero(&mut self) {
        self.params.iter_mut().for_each(|p| p.values.fill(0.0));
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().all(|p| p.values.iter().all(|v| v.is_finite()))
    }

    /// Overwrites this set with `other`'s values; shapes and names must agree.
    pub fn copy_from(&mut self, other: &ParameterSet) -> Result<()> {
        self.check_congruent(other)?;
        for (dst, src) in self.params.iter_mut().zip(&other.params) {
            dst.values.copy_from_slice(&src.values);
        }
        Ok(())
    }

    pub fn check_congruent(&self, other: &ParameterSet) -> Result<()> {
        if self.params.len() != other.params.len() {
            return Err(Error::Shape(format!(
                "{} parameter arrays vs {}",
                self.params.len(),
                other.params.len()
            )));
        }
        for (a, b) in self.params.iter().zip(&other.params) {
            if a.name != b.name || a.rows != b.rows || a.cols != b.cols {
                return Err(Error::Shape(format!(
                    "{} {}x{} vs {} {}x{}",
                    a.name, a.rows, a.cols, b.name, b.rows, b.cols
                )));
            }
        }
        Ok(())
    }
}

/// Gradient arrays shape-congruent with a [`ParameterSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    blocks: Vec<Vec<f64>>,
}

impl GradientSet {
    #[inline]
    pub fn get(&self, id: ParamId) -> &[f64] {
        &self.blocks[id.0]
    }

    #[inline]
    pub fn get_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.blocks[id.0]
    }

    /// Moves a block out so several blocks can be borrowed mutably at once;
    /// pair with [`GradientSet::restore`].
    pub(crate) fn take(&mut self, id: ParamId) -> Vec<f64> {
        std::mem::take(&mut self.blocks[id.0])
    }

    pub(crate) fn restore(&mut self, id: ParamId, block: Vec<f64>) {
        self.blocks[id.0] = block;
    }

    pub fn blocks(&self) -> &[Vec<f64>] {
        &self.blocks
    }

    pub fn fill_zero(&mut self) {
        self.blocks.iter_mut().for_each(|b| b.fill(0.0));
    }

    /// Position of the first non-finite entry as (block, offset).
    pub fn first_non_finite(&self) -> Option<(usize, usize)> {
        self.blocks.iter().enumerate().find_map(|(i, b)| {
            b.iter().position(|v| !v.is_finite()).map(|j| (i, j))
        })
    }

    pub fn check_congruent(&self, params: &ParameterSet) -> Result<()> {
        let ok = self.blocks.len() == params.params.len()
            && self
                .blocks
                .iter()
                .zip(&params.params)
                .all(|(g, p)| g.len() == p.values.len());
        if ok {
            Ok(())
        } else {
            Err(Error::Shape("gradient set does not match parameter set".into()))
        }
    }

    pub fn l2_norm(&self) -> f64 {
        self.blocks
            .iter()
            .flat_map(|b| b.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        self.blocks
            .iter_mut()
            .flat_map(|b| b.iter_mut())
            .for_each(|v| *v *= factor);
    }
}
