use super::param::{Parameter, Parameterized};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }

    /// One bias-corrected Adam update of `param` from its accumulated gradient.
    pub fn step(&self, param: &mut Parameter) {
        param.step_count += 1;
        let t = param.step_count as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (b1, b2) = (self.beta1, self.beta2);
        let values = param.values.data_mut();
        let m = param.adam_m.data_mut();
        let v = param.adam_v.data_mut();
        for (((x, &g), m), v) in values.iter_mut().zip(param.grad.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *x -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }

    pub fn step_all<M: Parameterized + ?Sized>(&self, model: &mut M) {
        model.parameters_mut().into_iter().for_each(|p| self.step(p));
    }
}

pub fn adam_step(param: &mut Parameter, lr: f64) {
    Adam::new(lr).step(param)
}
