use super::scalar::Scalar;
use crate::error::{Error, Result};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Dense n-dimensional array in row-major order. This is the plain value
/// type; gradients live on tape nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<E: Scalar> {
    shape: Vec<usize>,
    data: Vec<E>,
}

impl<E: Scalar> Tensor<E> {
    pub fn new(shape: Vec<usize>, data: Vec<E>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::Dimension(format!(
                "shape {:?} implies {} elements, got {}",
                shape,
                numel,
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel: usize = shape.iter().product();
        Tensor {
            shape,
            data: vec![E::zero(); numel],
        }
    }

    pub fn full(shape: Vec<usize>, value: E) -> Self {
        let numel: usize = shape.iter().product();
        Tensor {
            shape,
            data: vec![value; numel],
        }
    }

    pub fn scalar(value: E) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![value],
        }
    }

    /// Normal(mean, std) samples in row-major order from the given RNG.
    pub fn randn<R: Rng>(shape: Vec<usize>, mean: E, std: E, rng: &mut R) -> Self
    where
        StandardNormal: Distribution<E>,
    {
        let numel: usize = shape.iter().product();
        let data = (0..numel)
            .map(|_| {
                let z: E = StandardNormal.sample(rng);
                mean + std * z
            })
            .collect();
        Tensor { shape, data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[E] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [E] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<E> {
        self.data
    }

    /// Reinterpret with a new shape of equal element count.
    pub fn reshaped(mut self, shape: Vec<usize>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != self.data.len() {
            return Err(Error::Dimension(format!(
                "cannot reshape {} elements to {:?}",
                self.data.len(),
                shape
            )));
        }
        self.shape = shape;
        Ok(self)
    }

    pub fn iter(&self) -> std::slice::Iter<'_, E> {
        self.data.iter()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Convert element type (used by f64 oracle paths).
    pub fn cast<F: Scalar>(&self) -> Tensor<F> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| F::from_f64(v.to_f64())).collect(),
        }
    }
}
