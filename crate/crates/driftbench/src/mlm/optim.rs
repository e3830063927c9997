//! Adam with decoupled weight decay over the flat parameter vector.

pub struct AdamW {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
}

impl AdamW {
    pub fn new(n_params: usize, learning_rate: f64, weight_decay: f64) -> Self {
        AdamW {
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay,
        }
    }

    /// One update; decay applies only where `decay_mask` is set (matrices,
    /// not biases or LayerNorm vectors).
    pub fn step(&mut self, data: &mut [f64], grads: &[f64], decay_mask: &[bool]) {
        assert_eq!(data.len(), grads.len());
        assert_eq!(data.len(), self.m.len());
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..data.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            let mut update = m_hat / (v_hat.sqrt() + self.epsilon);
            if decay_mask[i] {
                update += self.weight_decay * data[i];
            }
            data[i] -= self.learning_rate * update;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn descends_a_quadratic() {
        // minimize (x - 3)^2 + (y + 1)^2
        let mut data = vec![0.0, 0.0];
        let mut opt = AdamW::new(2, 0.1, 0.0);
        let mask = vec![false, false];
        for _ in 0..500 {
            let grads = vec![2.0 * (data[0] - 3.0), 2.0 * (data[1] + 1.0)];
            opt.step(&mut data, &grads, &mask);
        }
        assert!((data[0] - 3.0).abs() < 1e-3);
        assert!((data[1] + 1.0).abs() < 1e-3);
    }

    #[test]
    fn decay_shrinks_only_masked_entries() {
        let mut data = vec![1.0, 1.0];
        let mut opt = AdamW::new(2, 0.01, 0.5);
        let mask = vec![true, false];
        for _ in 0..10 {
            opt.step(&mut data, &[0.0, 0.0], &mask);
        }
        assert!(data[0] < 1.0);
        assert_eq!(data[1], 1.0);
    }
}
