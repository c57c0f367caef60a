use crate::error::AutodiffError;
use crate::tensor::Tensor;

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn for_params(params: &[&Tensor], lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            v: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[Tensor]) -> Result<(), AutodiffError> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(AutodiffError::Shape(format!(
                "adam tracks {} tensors, got {} params and {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != self.m[i].shape() || g.shape() != self.m[i].shape() {
                return Err(AutodiffError::Shape(format!("adam tensor {i} shape")));
            }
            if !g.is_finite() {
                return Err(AutodiffError::Divergence(format!(
                    "non-finite gradient for tensor {i} at adam step {}",
                    self.step + 1
                )));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            let pd = p.data_mut();
            for (((w, &gr), mm), vv) in pd.iter_mut().zip(g.data()).zip(m.data_mut()).zip(v.data_mut()) {
                *mm = b1 * *mm + (1.0 - b1) * gr;
                *vv = b2 * *vv + (1.0 - b2) * gr * gr;
                let mhat = *mm / bc1;
                let vhat = *vv / bc2;
                *w -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut p = Tensor::new(vec![3], vec![1.0, -2.0, 0.5]).unwrap();
        let before = p.clone();
        let mut adam = Adam::for_params(&[&p], 1e-3);
        adam.step(&mut [&mut p], &[Tensor::zeros(&[3])]).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn first_step_with_unit_gradient_moves_by_lr() {
        // m = 0.1, v = 0.001; mhat = 1, vhat = 1 -> delta = lr / (1 + eps)
        let mut p = Tensor::new(vec![2], vec![0.0, 5.0]).unwrap();
        let mut adam = Adam::for_params(&[&p], 0.001);
        adam.step(&mut [&mut p], &[Tensor::filled(&[2], 1.0)]).unwrap();
        let expected = 0.001 / (1.0 + 1e-8);
        assert!((p.data()[0] + expected).abs() < 1e-15);
        assert!((p.data()[1] - (5.0 - expected)).abs() < 1e-15);
    }

    #[test]
    fn step_counter_increments() {
        let mut p = Tensor::zeros(&[1]);
        let mut adam = Adam::for_params(&[&p], 0.01);
        adam.step(&mut [&mut p], &[Tensor::filled(&[1], 0.3)]).unwrap();
        assert_eq!(adam.step_count(), 1);
        adam.step(&mut [&mut p], &[Tensor::filled(&[1], 0.3)]).unwrap();
        assert_eq!(adam.step_count(), 2);
    }

    #[test]
    fn non_finite_gradient_is_divergence() {
        let mut p = Tensor::zeros(&[2]);
        let mut adam = Adam::for_params(&[&p], 0.01);
        let err = adam
            .step(&mut [&mut p], &[Tensor::new(vec![2], vec![f64::NAN, 0.0]).unwrap()])
            .unwrap_err();
        assert!(matches!(err, AutodiffError::Divergence(_)));
        assert_eq!(adam.step_count(), 0);
    }
}
