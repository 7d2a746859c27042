//! Dense row-major f64 tensor.
//!
//! Everything downstream (losses, model, diagnostics) runs in 64-bit floats:
//! desk scale makes speed irrelevant and the gradient checks need the
//! precision.

/// Dense n-dimensional array of f64 in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// `product(shape)` must equal `data.len()`.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "shape {:?} does not cover {} values",
            shape,
            data.len()
        );
        assert!(shape.iter().all(|&d| d > 0), "zero dimension in {shape:?}");
        Tensor { shape, data }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor::new(vec![1], vec![value])
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Tensor::new(vec![data.len()], data)
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        Tensor::new(vec![rows, cols], data)
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Tensor::new(shape, vec![0.0; n])
    }

    pub fn full(shape: Vec<usize>, value: f64) -> Self {
        let n = shape.iter().product();
        Tensor::new(shape, vec![value; n])
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// Number of rows of a 1-D or 2-D tensor.
    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    /// Row width: the last dimension.
    pub fn cols(&self) -> usize {
        *self.shape.last().unwrap()
    }

    pub fn is_scalar(&self) -> bool {
        self.numel() == 1
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.cols();
        &self.data[i * w..(i + 1) * w]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_must_cover_data() {
        let t = Tensor::matrix(2, 3, vec![0.0; 6]);
        assert_eq!(t.numel(), 6);
        assert_eq!(t.row(1), &[0.0, 0.0, 0.0]);
    }

    #[test]
    #[should_panic(expected = "does not cover")]
    fn mismatched_shape_panics() {
        Tensor::new(vec![2, 2], vec![1.0; 3]);
    }
}
