use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use super::{check_cols, fill_uniform, glorot_bound, Parameters};
use crate::error::{Error, Result};

/// Affine layer `x -> W x + b` with `W` of shape `[out, in]`. The bias is
/// stored as a `[1, out]` row so it broadcasts over batch rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: Array2<f64>,
    pub b: Array2<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            w: Array2::zeros((outputs, inputs)),
            b: Array2::zeros((1, outputs)),
        }
    }

    pub fn from_parts(w: Array2<f64>, b: Vec<f64>) -> Result<Self> {
        if b.len() != w.nrows() {
            return Err(Error::Shape(format!(
                "bias length {} for weight rows {}",
                b.len(),
                w.nrows()
            )));
        }
        let b = Array2::from_shape_vec((1, w.nrows()), b).expect("row vector");
        Ok(Self { w, b })
    }

    /// Glorot-uniform weights, zero bias.
    pub fn init(inputs: usize, outputs: usize, rng: &mut impl Rng) -> Self {
        let mut layer = Self::zeros(inputs, outputs);
        fill_uniform(&mut layer.w, glorot_bound(inputs, outputs), rng);
        layer
    }

    pub fn inputs(&self) -> usize {
        self.w.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.w.nrows()
    }

    /// Pre-activations for a batch `x` of shape `[batch, in]`.
    pub fn forward(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        check_cols("dense", x, self.inputs())?;
        Ok(self.forward_view(x.view()))
    }

    pub(crate) fn forward_view(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut z = self
            .b
            .broadcast((x.nrows(), self.outputs()))
            .expect("bias broadcasts")
            .to_owned();
        general_mat_mul(1.0, &x, &self.w.t(), 1.0, &mut z);
        z
    }

    /// `W x + b` for a single input vector.
    pub fn forward_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.inputs() {
            return Err(Error::Shape(format!(
                "dense: input length {}, expected {}",
                x.len(),
                self.inputs()
            )));
        }
        let x = Array1::from(x.to_vec());
        Ok((self.w.dot(&x) + self.b.row(0)).to_vec())
    }

    /// Accumulates the parameter gradient for upstream `dz = dL/d(Wx+b)` into
    /// `grad` and returns `dL/dx`.
    pub(crate) fn backward(
        &self,
        x: ArrayView2<f64>,
        dz: ArrayView2<f64>,
        grad: &mut Dense,
    ) -> Array2<f64> {
        self.accumulate(x, dz, grad);
        dz.dot(&self.w)
    }

    /// Parameter gradient only.
    pub(crate) fn accumulate(&self, x: ArrayView2<f64>, dz: ArrayView2<f64>, grad: &mut Dense) {
        general_mat_mul(1.0, &dz.t(), &x, 1.0, &mut grad.w);
        grad.b += &dz.sum_axis(Axis(0)).insert_axis(Axis(0));
    }
}

impl Parameters for Dense {
    fn blocks(&self) -> Vec<(String, &Array2<f64>)> {
        vec![("w".into(), &self.w), ("b".into(), &self.b)]
    }

    fn blocks_mut(&mut self) -> Vec<&mut Array2<f64>> {
        vec![&mut self.w, &mut self.b]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn forward_examples() {
        let zero = Dense::zeros(3, 2);
        assert_eq!(zero.forward_vec(&[1.0, -2.0, 3.0]).unwrap(), vec![0.0, 0.0]);

        let identity = Dense::from_parts(Array2::eye(3), vec![0.0; 3]).unwrap();
        assert_eq!(identity.forward_vec(&[1.0, -2.0, 3.0]).unwrap(), vec![1.0, -2.0, 3.0]);

        let d = Dense::from_parts(array![[1.0, 2.0]], vec![3.0]).unwrap();
        assert_eq!(d.forward_vec(&[4.0, 5.0]).unwrap(), vec![17.0]);
        assert_eq!(d.forward(&array![[4.0, 5.0]]).unwrap(), array![[17.0]]);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let d = Dense::zeros(2, 1);
        assert!(matches!(d.forward_vec(&[1.0]), Err(Error::Shape(_))));
        assert!(d.forward(&Array2::zeros((4, 3))).is_err());
        assert!(Dense::from_parts(Array2::zeros((2, 2)), vec![0.0]).is_err());
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let a = Dense::init(5, 6, &mut ChaCha8Rng::seed_from_u64(3));
        let b = Dense::init(5, 6, &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(a, b);
        let r = glorot_bound(5, 6);
        assert!(a.w.iter().all(|v| v.abs() < r));
        assert!(a.b.iter().all(|&v| v == 0.0));
    }
}
