use super::{ParamId, ParamStore, Tensor};

/// Adam with bias correction. Moment buffers are created lazily per
/// parameter, so the optimizer can be built before the store is filled.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    moments: Vec<Option<(Tensor, Tensor)>>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self::with_betas(lr, (0.9, 0.999), 1e-8)
    }

    pub fn with_betas(lr: f64, betas: (f64, f64), eps: f64) -> Self {
        Adam {
            lr,
            beta1: betas.0,
            beta2: betas.1,
            eps,
            step: 0,
            moments: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Updates every trainable parameter in place from its accumulated gradient.
    pub fn step(&mut self, store: &mut ParamStore) {
        self.step_with(store, |_| 1.0);
    }

    /// As [`Adam::step`], with a per-parameter learning-rate multiplier.
    pub fn step_with(&mut self, store: &mut ParamStore, lr_scale: impl Fn(ParamId) -> f64) {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        if self.moments.len() < store.len() {
            self.moments.resize(store.len(), None);
        }
        for id in store.ids().collect::<Vec<_>>() {
            let p = store.get_mut(id);
            if !p.requires_grad {
                continue;
            }
            let (m, v) = self.moments[id.0].get_or_insert_with(|| {
                (
                    Tensor::zeros(p.value.shape()),
                    Tensor::zeros(p.value.shape()),
                )
            });
            let lr = self.lr * lr_scale(id);
            let values = p.value.data_mut();
            for (k, &g) in p.grad.data().iter().enumerate() {
                let mk = &mut m.data_mut()[k];
                *mk = self.beta1 * *mk + (1.0 - self.beta1) * g;
                let vk = &mut v.data_mut()[k];
                *vk = self.beta2 * *vk + (1.0 - self.beta2) * g * g;
                let m_hat = m.data()[k] / bc1;
                let v_hat = v.data()[k] / bc2;
                values[k] -= lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}
