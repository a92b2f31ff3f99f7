use rand::Rng;

use super::tensor::Tensor;

/// A trainable array together with its gradient and Adam moment buffers.
///
/// `values`, `grad`, `adam_m` and `adam_v` always share one shape.
#[derive(Clone, Debug, PartialEq)]
pub struct Parameter {
    name: String,
    pub(crate) values: Tensor,
    pub(crate) grad: Tensor,
    pub(crate) adam_m: Tensor,
    pub(crate) adam_v: Tensor,
    pub(crate) step_count: u64,
}

impl Parameter {
    pub fn new(name: impl Into<String>, values: Tensor) -> Self {
        let (r, c) = values.shape();
        Parameter { name: name.into(), values, grad: Tensor::zeros(r, c), adam_m: Tensor::zeros(r, c), adam_v: Tensor::zeros(r, c), step_count: 0 }
    }

    pub fn zeros(name: impl Into<String>, rows: usize, cols: usize) -> Self {
        Self::new(name, Tensor::zeros(rows, cols))
    }

    /// Entries drawn uniformly from `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn uniform_fan_in<R: Rng + ?Sized>(name: impl Into<String>, rows: usize, cols: usize, fan_in: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let data = (0..rows * cols).map(|_| rng.gen_range(-bound..=bound)).collect();
        Self::new(name, Tensor::from_vec(rows, cols, data))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn shape(&self) -> (usize, usize) {
        self.values.shape()
    }

    pub fn values(&self) -> &Tensor {
        &self.values
    }

    /// Direct write access to the values. Moments and gradient are left alone.
    pub fn values_mut(&mut self) -> &mut Tensor {
        &mut self.values
    }

    pub fn grad(&self) -> &Tensor {
        &self.grad
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }

    pub fn accumulate_grad(&mut self, g: &Tensor) {
        assert_eq!(g.shape(), self.grad.shape(), "gradient shape mismatch for {}", self.name);
        self.grad.add_assign(g);
    }
}

/// Anything that owns trainable parameters.
///
/// Both methods must list the parameters in the same order, and names must be
/// unique within one implementor.
pub trait Parameterized {
    fn parameters(&self) -> Vec<&Parameter>;
    fn parameters_mut(&mut self) -> Vec<&mut Parameter>;

    fn zero_grad(&mut self) {
        self.parameters_mut().into_iter().for_each(Parameter::zero_grad);
    }

    fn num_scalars(&self) -> usize {
        self.parameters().iter().map(|p| p.values.len()).sum()
    }
}

impl Parameterized for Parameter {
    fn parameters(&self) -> Vec<&Parameter> {
        vec![self]
    }

    fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        vec![self]
    }
}

impl Parameterized for Vec<Parameter> {
    fn parameters(&self) -> Vec<&Parameter> {
        self.iter().collect()
    }

    fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        self.iter_mut().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn buffers_start_at_zero_with_matching_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = Parameter::uniform_fan_in("w", 3, 5, 4, &mut rng);
        assert_eq!(p.grad.shape(), (3, 5));
        assert_eq!(p.adam_m.shape(), (3, 5));
        assert_eq!(p.adam_v.shape(), (3, 5));
        assert_eq!(p.grad.max_abs(), 0.0);
        assert_eq!(p.adam_m.max_abs(), 0.0);
        assert_eq!(p.adam_v.max_abs(), 0.0);
        assert!(p.values.max_abs() <= 0.5);
        assert_eq!(p.step_count(), 0);
    }
}
