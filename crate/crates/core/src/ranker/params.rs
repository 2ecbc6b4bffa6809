use crate::error::{Error, Result};
use crate::tensor::Mat;

/// An ordered collection of named tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet {
    names: Vec<String>,
    tensors: Vec<Mat>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a tensor and returns its index.
    pub fn push(&mut self, name: impl Into<String>, tensor: Mat) -> usize {
        let name = name.into();
        debug_assert!(!self.names.contains(&name), "duplicate tensor {name}");
        self.names.push(name);
        self.tensors.push(tensor);
        self.tensors.len() - 1
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn tensor(&self, i: usize) -> &Mat {
        &self.tensors[i]
    }

    pub fn tensor_mut(&mut self, i: usize) -> &mut Mat {
        &mut self.tensors[i]
    }

    pub fn tensors(&self) -> &[Mat] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Mat] {
        &mut self.tensors
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn get(&self, name: &str) -> Option<&Mat> {
        self.index_of(name).map(|i| &self.tensors[i])
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Mat::len).sum()
    }

    pub fn zeros_like(&self) -> Vec<Mat> {
        self.tensors.iter().map(|t| Mat::zeros(t.rows, t.cols)).collect()
    }

    /// Errors unless `other` has the same names and shapes in the same order.
    pub fn check_compatible(&self, other: &ParamSet) -> Result<()> {
        if self.names != other.names {
            return Err(Error::Shape("parameter names differ".into()));
        }
        for (i, (a, b)) in self.tensors.iter().zip(&other.tensors).enumerate() {
            if a.shape() != b.shape() {
                return Err(Error::Shape(format!(
                    "tensor {} is {:?} vs {:?}",
                    self.names[i],
                    a.shape(),
                    b.shape()
                )));
            }
        }
        Ok(())
    }

    /// Replaces the tensors with `tensors`, which must match in shape.
    pub fn assign(&mut self, tensors: Vec<Mat>) -> Result<()> {
        if tensors.len() != self.tensors.len() {
            return Err(Error::Shape(format!(
                "expected {} tensors, got {}",
                self.tensors.len(),
                tensors.len()
            )));
        }
        for (i, (a, b)) in self.tensors.iter().zip(&tensors).enumerate() {
            if a.shape() != b.shape() {
                return Err(Error::Shape(format!("tensor {} shape", self.names[i])));
            }
        }
        self.tensors = tensors;
        Ok(())
    }
}
