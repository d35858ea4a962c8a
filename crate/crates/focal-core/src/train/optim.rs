use crate::autodiff::Tensor;
use crate::error::{Error, Result};

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// AdamW with decoupled weight decay:
/// `p ← p − lr·m̂/(√v̂ + ε) − lr·λ·p`.
pub struct AdamW {
    params: Vec<Tensor>,
    weight_decay: f64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: usize,
}

impl AdamW {
    pub fn new(params: Vec<Tensor>, weight_decay: f64) -> AdamW {
        let m = params.iter().map(|p| vec![0.0; p.numel()]).collect();
        let v = params.iter().map(|p| vec![0.0; p.numel()]).collect();
        AdamW { params, weight_decay, m, v, step: 0 }
    }

    pub fn step_count(&self) -> usize {
        self.step
    }

    /// One update over all parameters from their accumulated gradients.
    /// Every parameter must carry a gradient (backward ensures this for
    /// all registered leaves); non-finite gradients are an error.
    pub fn step(&mut self, lr: f64) -> Result<()> {
        if !(lr.is_finite() && lr >= 0.0) {
            return Err(Error::input("adamw", format!("learning rate {lr} must be >= 0")));
        }
        self.step += 1;
        let bc1 = 1.0 - BETA1.powi(self.step as i32);
        let bc2 = 1.0 - BETA2.powi(self.step as i32);
        for (idx, p) in self.params.iter().enumerate() {
            let grad = p
                .grad()
                .ok_or_else(|| Error::input("adamw", "parameter without gradient"))?;
            if grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::non_finite("gradient"));
            }
            let (m, v) = (&mut self.m[idx], &mut self.v[idx]);
            p.with_data_mut(|data| {
                for i in 0..data.len() {
                    let g = grad[i];
                    m[i] = BETA1 * m[i] + (1.0 - BETA1) * g;
                    v[i] = BETA2 * v[i] + (1.0 - BETA2) * g * g;
                    let m_hat = m[i] / bc1;
                    let v_hat = v[i] / bc2;
                    data[i] -=
                        lr * m_hat / (v_hat.sqrt() + ADAM_EPS) + lr * self.weight_decay * data[i];
                }
            });
        }
        Ok(())
    }

    pub fn zero_grads(&self) {
        for p in &self.params {
            p.zero_grad();
        }
    }
}

/// Linear warmup to the base rate, then cosine decay to zero over the
/// remaining steps. The first step always runs at zero; the last step of
/// a long schedule lands at zero again.
pub fn lr_schedule(base_lr: f64, step: usize, total_steps: usize, warmup_ratio: f64) -> f64 {
    assert!(total_steps > 0, "schedule needs at least one step");
    // Cap warmup below the total so a degenerate one-step schedule still
    // trains at the base rate.
    let warmup =
        ((warmup_ratio * total_steps as f64).ceil() as usize).min(total_steps - 1);
    if step < warmup {
        return base_lr * step as f64 / warmup as f64;
    }
    let denom = (total_steps - 1 - warmup).max(1) as f64;
    let phase = std::f64::consts::PI * (step - warmup) as f64 / denom;
    base_lr * 0.5 * (1.0 + phase.cos())
}
