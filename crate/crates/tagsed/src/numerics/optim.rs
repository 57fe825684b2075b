use super::tensor::{Real, Tensor};

/// Adam hyperparameters. The betas and epsilon are the usual defaults.
#[derive(Clone, Copy, Debug)]
pub struct AdamConfig {
    pub lr: Real,
    pub beta1: Real,
    pub beta2: Real,
    pub eps: Real,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment estimates, aligned index-for-index with the
/// parameter list handed to [`adam_step`].
pub struct AdamState {
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    t: u64,
    pub cfg: AdamConfig,
}

impl AdamState {
    pub fn new(shapes: &[&[usize]], cfg: AdamConfig) -> Self {
        AdamState {
            m: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
            v: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
            t: 0,
            cfg,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }
}

/// One Adam update with bias correction. `lr_scale` multiplies the
/// configured learning rate (warmup hook); pass 1.0 for the plain rule.
pub fn adam_step(state: &mut AdamState, params: &mut [Tensor], grads: &[Tensor], lr_scale: Real) {
    assert_eq!(params.len(), grads.len());
    assert_eq!(params.len(), state.m.len());
    state.t += 1;
    let cfg = state.cfg;
    let bc1 = 1.0 - cfg.beta1.powi(state.t as i32);
    let bc2 = 1.0 - cfg.beta2.powi(state.t as i32);
    let lr = cfg.lr * lr_scale;
    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        assert_eq!(p.shape(), g.shape(), "adam_step shape mismatch");
        let pd = p.data_mut();
        let md = m.data_mut();
        let vd = v.data_mut();
        for i in 0..pd.len() {
            let gi = g.data()[i];
            md[i] = cfg.beta1 * md[i] + (1.0 - cfg.beta1) * gi;
            vd[i] = cfg.beta2 * vd[i] + (1.0 - cfg.beta2) * gi * gi;
            let mhat = md[i] / bc1;
            let vhat = vd[i] / bc2;
            pd[i] -= lr * mhat / (vhat.sqrt() + cfg.eps);
        }
    }
}

/// teacher <- decay * teacher + (1 - decay) * student, elementwise.
pub fn ema_update(teacher: &mut [Tensor], student: &[Tensor], decay: Real) {
    assert!((0.0..=1.0).contains(&decay), "decay must be in [0,1]");
    assert_eq!(teacher.len(), student.len());
    for (t, s) in teacher.iter_mut().zip(student) {
        assert_eq!(t.shape(), s.shape(), "ema_update shape mismatch");
        for (tv, &sv) in t.data_mut().iter_mut().zip(s.data()) {
            *tv = decay * *tv + (1.0 - decay) * sv;
        }
    }
}
