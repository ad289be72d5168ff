//! Flat named parameter storage shared by the model, optimiser and
//! checkpoint code.

use ndarray::{ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::Real;

#[derive(Clone, Debug, PartialEq)]
pub struct ParamSet<F> {
    names: Vec<String>,
    shapes: Vec<Vec<usize>>,
    values: Vec<Vec<F>>,
}

/// Initial values for a new tensor.
#[derive(Clone, Copy, Debug)]
pub(crate) enum Init {
    Zeros,
    Ones,
    Normal(f64),
}

impl<F: Real> ParamSet<F> {
    pub(crate) fn new() -> Self {
        Self {
            names: Vec::new(),
            shapes: Vec::new(),
            values: Vec::new(),
        }
    }

    pub(crate) fn add(
        &mut self,
        name: String,
        shape: Vec<usize>,
        init: Init,
        rng: &mut impl Rng,
    ) -> usize {
        let n: usize = shape.iter().product();
        let values = match init {
            Init::Zeros => vec![F::zero(); n],
            Init::Ones => vec![F::one(); n],
            Init::Normal(std) => {
                let dist = Normal::new(0.0, std).expect("valid std");
                // truncated at two standard deviations
                (0..n)
                    .map(|_| loop {
                        let v: f64 = dist.sample(rng);
                        if v.abs() <= 2.0 * std {
                            break F::c(v);
                        }
                    })
                    .collect()
            }
        };
        self.names.push(name);
        self.shapes.push(shape);
        self.values.push(values);
        self.values.len() - 1
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn shapes(&self) -> &[Vec<usize>] {
        &self.shapes
    }

    pub fn values(&self) -> &[Vec<F>] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Vec<F>] {
        &mut self.values
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Total scalar count.
    pub fn scalar_count(&self) -> usize {
        self.values.iter().map(Vec::len).sum()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            names: self.names.clone(),
            shapes: self.shapes.clone(),
            values: self.values.iter().map(|v| vec![F::zero(); v.len()]).collect(),
        }
    }

    pub fn fill_zero(&mut self) {
        for v in &mut self.values {
            v.iter_mut().for_each(|x| *x = F::zero());
        }
    }

    pub(crate) fn mat(&self, i: usize) -> ArrayView2<'_, F> {
        let s = &self.shapes[i];
        ArrayView2::from_shape((s[0], s[1]), &self.values[i]).expect("2-D parameter")
    }

    pub(crate) fn mat_mut(&mut self, i: usize) -> ArrayViewMut2<'_, F> {
        let s = &self.shapes[i];
        ArrayViewMut2::from_shape((s[0], s[1]), &mut self.values[i]).expect("2-D parameter")
    }

    pub(crate) fn vec(&self, i: usize) -> ArrayView1<'_, F> {
        ArrayView1::from(&self.values[i][..])
    }

    pub(crate) fn vec_mut(&mut self, i: usize) -> ArrayViewMut1<'_, F> {
        ArrayViewMut1::from(&mut self.values[i][..])
    }

    /// Converts every value to another scalar type.
    pub fn cast<G: Real>(&self) -> ParamSet<G> {
        ParamSet {
            names: self.names.clone(),
            shapes: self.shapes.clone(),
            values: self
                .values
                .iter()
                .map(|v| v.iter().map(|x| G::c(x.as_f64())).collect())
                .collect(),
        }
    }

    /// Builds a set from raw parts; shapes must match value lengths.
    pub(crate) fn from_parts(
        names: Vec<String>,
        shapes: Vec<Vec<usize>>,
        values: Vec<Vec<F>>,
    ) -> Self {
        debug_assert!(shapes
            .iter()
            .zip(&values)
            .all(|(s, v)| s.iter().product::<usize>() == v.len()));
        Self {
            names,
            shapes,
            values,
        }
    }
}
