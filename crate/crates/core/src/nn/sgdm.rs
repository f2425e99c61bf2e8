use super::Parameters;
use crate::error::{Error, Result};

/// Stochastic gradient descent with momentum:
/// `v <- momentum * v - learning_rate * g`, then `theta <- theta + v`.
#[derive(Debug, Clone)]
pub struct Sgdm<P: Parameters> {
    velocity: P,
    learning_rate: f64,
    momentum: f64,
}

impl<P: Parameters> Sgdm<P> {
    pub fn new(params: &P, learning_rate: f64, momentum: f64) -> Result<Self> {
        if !(learning_rate > 0.0 && learning_rate.is_finite()) {
            return Err(Error::Validation(format!(
                "learning rate {learning_rate} must be positive"
            )));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::Validation(format!("momentum {momentum} outside [0, 1)")));
        }
        Ok(Self {
            velocity: params.zeros_like(),
            learning_rate,
            momentum,
        })
    }

    pub fn velocity(&self) -> &P {
        &self.velocity
    }

    pub fn step(&mut self, params: &mut P, grads: &P) -> Result<()> {
        let grad_blocks = grads.blocks();
        for (name, g) in &grad_blocks {
            let bad = g.iter().filter(|v| !v.is_finite()).count();
            if bad > 0 {
                return Err(Error::Training(format!(
                    "{bad} non-finite gradient entries in block `{name}` ({} entries)",
                    g.len()
                )));
            }
        }
        let (lr, mu) = (self.learning_rate, self.momentum);
        for ((theta, v), (_, g)) in params
            .blocks_mut()
            .into_iter()
            .zip(self.velocity.blocks_mut())
            .zip(&grad_blocks)
        {
            if theta.dim() != g.dim() || v.dim() != g.dim() {
                return Err(Error::Shape(format!(
                    "parameter {:?}, velocity {:?}, gradient {:?}",
                    theta.dim(),
                    v.dim(),
                    g.dim()
                )));
            }
            ndarray::Zip::from(theta)
                .and(v)
                .and(*g)
                .for_each(|t, v, &g| {
                    *v = mu * *v - lr * g;
                    *t += *v;
                });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Dense;
    use ndarray::array;
    use proptest::prelude::*;

    fn layer(w: f64, b: f64) -> Dense {
        Dense::from_parts(array![[w, -w]], vec![b]).unwrap()
    }

    #[test]
    fn first_step_is_plain_gradient_step() {
        let mut p = layer(1.0, 2.0);
        let g = layer(0.5, -4.0);
        let mut opt = Sgdm::new(&p, 0.1, 0.9).unwrap();
        opt.step(&mut p, &g).unwrap();
        assert_eq!(p.w, array![[1.0 - 0.1 * 0.5, -1.0 + 0.1 * 0.5]]);
        assert_eq!(p.b, array![[2.0 + 0.1 * 4.0]]);
    }

    #[test]
    fn velocity_decays_geometrically_without_gradient() {
        let mut p = layer(0.0, 0.0);
        let mut opt = Sgdm::new(&p, 0.5, 0.8).unwrap();
        opt.step(&mut p, &layer(1.0, 1.0)).unwrap();
        let v0 = opt.velocity().b[[0, 0]];
        let zero = layer(0.0, 0.0);
        for k in 1..=5 {
            opt.step(&mut p, &zero).unwrap();
            let expected = v0 * 0.8f64.powi(k);
            assert!((opt.velocity().b[[0, 0]] - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_non_finite_gradients_and_bad_settings() {
        let mut p = layer(1.0, 1.0);
        let mut opt = Sgdm::new(&p, 0.1, 0.0).unwrap();
        let err = opt.step(&mut p, &layer(f64::NAN, 0.0)).unwrap_err();
        assert!(matches!(err, Error::Training(ref m) if m.contains("block `w`")));
        assert_eq!(p, layer(1.0, 1.0));
        assert!(Sgdm::new(&p, 0.0, 0.5).is_err());
        assert!(Sgdm::new(&p, 0.1, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn zero_momentum_is_plain_sgd(
            w in -5.0f64..5.0, b in -5.0f64..5.0,
            gw in -3.0f64..3.0, gb in -3.0f64..3.0,
            lr in 0.001f64..0.5, steps in 1usize..40,
        ) {
            let g = layer(gw, gb);
            let mut p = layer(w, b);
            let mut plain = layer(w, b);
            let mut opt = Sgdm::new(&p, lr, 0.0).unwrap();
            for _ in 0..steps {
                opt.step(&mut p, &g).unwrap();
                plain.w = &plain.w - &(&g.w * lr);
                plain.b = &plain.b - &(&g.b * lr);
            }
            prop_assert_eq!(&p, &plain);
            let closed = b - steps as f64 * lr * gb;
            prop_assert!((p.b[[0, 0]] - closed).abs() <= 1e-12 * (1.0 + closed.abs()) * steps as f64);
        }
    }
}
