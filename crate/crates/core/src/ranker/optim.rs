use super::params::ParamSet;
use crate::tensor::Mat;

/// Adaptive-moment gradient descent with bias correction.
#[derive(Clone, Debug)]
pub struct Adam {
    learning_rate: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: i32,
    first: Vec<Mat>,
    second: Vec<Mat>,
}

impl Adam {
    pub fn new(params: &ParamSet, learning_rate: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Adam {
            learning_rate,
            beta1,
            beta2,
            eps,
            step: 0,
            first: params.zeros_like(),
            second: params.zeros_like(),
        }
    }

    pub fn step(&mut self, params: &mut ParamSet, grads: &[Mat]) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        for (i, g) in grads.iter().enumerate() {
            let p = params.tensor_mut(i);
            let m = &mut self.first[i].data;
            let v = &mut self.second[i].data;
            for j in 0..g.len() {
                let gj = g.data[j];
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * gj;
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * gj * gj;
                let m_hat = m[j] / c1;
                let v_hat = v[j] / c2;
                p.data[j] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = ParamSet::new();
        p.push("x", Mat::from_vec(1, 2, vec![1.0, -1.0]));
        let mut adam = Adam::new(&p, 0.1, 0.9, 0.999, 1e-8);
        adam.step(&mut p, &[Mat::from_vec(1, 2, vec![3.0, -0.5])]);
        let x = &p.tensor(0).data;
        assert!((x[0] - 0.9).abs() < 1e-6);
        assert!((x[1] + 0.9).abs() < 1e-6);
    }

    #[test]
    fn minimizes_quadratic() {
        let mut p = ParamSet::new();
        p.push("x", Mat::from_vec(1, 1, vec![5.0]));
        let mut adam = Adam::new(&p, 0.1, 0.9, 0.999, 1e-8);
        for _ in 0..500 {
            let x = p.tensor(0).data[0];
            adam.step(&mut p, &[Mat::scalar(2.0 * (x - 2.0))]);
        }
        assert!((p.tensor(0).data[0] - 2.0).abs() < 1e-2);
    }
}
