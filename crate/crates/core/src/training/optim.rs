use crate::encoder::EncoderWeights;
use crate::scalar::Scalar;

/// Adam with decoupled weight decay.
#[derive(Debug, Clone)]
pub struct AdamW<T> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    step: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Scalar> AdamW<T> {
    /// `(β₁, β₂, ε) = (0.9, 0.999, 1e−8)`.
    pub fn new(weights: &EncoderWeights<T>, weight_decay: f64) -> Self {
        let zeros: Vec<Vec<T>> = weights.named().iter().map(|(_, t)| vec![T::zero(); t.as_slice().len()]).collect();
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay, step: 0, m: zeros.clone(), v: zeros }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// `θ ← θ − lr·(m̂ / (√v̂ + ε) + λθ)`.
    pub fn step(&mut self, weights: &mut EncoderWeights<T>, grads: &EncoderWeights<T>, lr: f64) {
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (T::from_f64_lossy(self.beta1), T::from_f64_lossy(self.beta2));
        let c1 = T::from_f64_lossy(1.0 - self.beta1.powi(t));
        let c2 = T::from_f64_lossy(1.0 - self.beta2.powi(t));
        let (lr, eps, wd) = (T::from_f64_lossy(lr), T::from_f64_lossy(self.eps), T::from_f64_lossy(self.weight_decay));
        let one = T::one();
        let grads = grads.named();
        for (((param, (_, grad)), m), v) in
            weights.tensors_mut().into_iter().zip(grads).zip(&mut self.m).zip(&mut self.v)
        {
            for (((p, &g), m), v) in
                param.as_mut_slice().iter_mut().zip(grad.as_slice()).zip(m.iter_mut()).zip(v.iter_mut())
            {
                *m = b1 * *m + (one - b1) * g;
                *v = b2 * *v + (one - b2) * g * g;
                let update = (*m / c1) / ((*v / c2).sqrt() + eps);
                *p -= lr * (update + wd * *p);
            }
        }
    }
}

/// Linear warm-up over `warmup` steps, then constant.
pub fn warmup_lr(base: f64, step: usize, warmup: usize) -> f64 {
    if warmup == 0 || step >= warmup {
        base
    } else {
        base * (step + 1) as f64 / warmup as f64
    }
}
