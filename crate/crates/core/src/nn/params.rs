//! Flat views over model parameters, shared by the optimizers and the
//! gradient checks.
//!
//! Each model exposes its tensors as an ordered list of slices; gradients and
//! optimizer state mirror that structure part by part.

/// A set of buffers shaped like some model's parameter list.
#[derive(Debug, Clone)]
pub struct FlatTensors {
    parts: Vec<Vec<f64>>,
}

impl FlatTensors {
    /// Zeroed buffers matching the given parameter slices.
    pub fn zeros_like(shape: &[&[f64]]) -> Self {
        Self {
            parts: shape.iter().map(|s| vec![0.0; s.len()]).collect(),
        }
    }

    pub fn parts(&self) -> &[Vec<f64>] {
        &self.parts
    }

    pub fn part_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.parts[i]
    }

    /// Mutable views of two distinct parts at once (requires `i < j`).
    pub fn two_parts_mut(&mut self, i: usize, j: usize) -> (&mut [f64], &mut [f64]) {
        assert!(i < j && j < self.parts.len());
        let (left, right) = self.parts.split_at_mut(j);
        (&mut left[i], &mut right[0])
    }

    pub fn total_len(&self) -> usize {
        self.parts.iter().map(Vec::len).sum()
    }

    /// Value at a flat index spanning all parts in order.
    pub fn get_flat(&self, mut idx: usize) -> f64 {
        for part in &self.parts {
            if idx < part.len() {
                return part[idx];
            }
            idx -= part.len();
        }
        panic!("flat index out of range");
    }

    pub fn scale(&mut self, factor: f64) {
        for part in &mut self.parts {
            for x in part.iter_mut() {
                *x *= factor;
            }
        }
    }
}

/// Flat length of a parameter slice list.
pub fn param_len(slices: &[&[f64]]) -> usize {
    slices.iter().map(|s| s.len()).sum()
}

/// Value at a flat index into a parameter slice list.
pub fn param_get(slices: &[&[f64]], mut idx: usize) -> f64 {
    for s in slices {
        if idx < s.len() {
            return s[idx];
        }
        idx -= s.len();
    }
    panic!("flat parameter index out of range");
}

/// Adds `delta` to the parameter at a flat index.
pub fn param_add(slices: &mut [&mut [f64]], mut idx: usize, delta: f64) {
    for s in slices.iter_mut() {
        if idx < s.len() {
            s[idx] += delta;
            return;
        }
        idx -= s.len();
    }
    panic!("flat parameter index out of range");
}

/// One plain SGD step: `p -= lr * g`.
pub fn sgd_step(params: &mut [&mut [f64]], grads: &FlatTensors, lr: f64) {
    assert_eq!(params.len(), grads.parts().len());
    for (p, g) in params.iter_mut().zip(grads.parts()) {
        assert_eq!(p.len(), g.len());
        for (x, d) in p.iter_mut().zip(g) {
            *x -= lr * d;
        }
    }
}

/// Adam with bias correction and a constant learning rate.
pub struct Adam {
    m: FlatTensors,
    v: FlatTensors,
    t: u64,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl Adam {
    pub fn new(shape: &[&[f64]], lr: f64) -> Self {
        Self {
            m: FlatTensors::zeros_like(shape),
            v: FlatTensors::zeros_like(shape),
            t: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &FlatTensors) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (i, (p, g)) in params.iter_mut().zip(grads.parts()).enumerate() {
            let m = self.m.part_mut(i);
            for (ms, &gs) in m.iter_mut().zip(g.iter()) {
                *ms = self.beta1 * *ms + (1.0 - self.beta1) * gs;
            }
            let v = self.v.part_mut(i);
            for (vs, &gs) in v.iter_mut().zip(g.iter()) {
                *vs = self.beta2 * *vs + (1.0 - self.beta2) * gs * gs;
            }
            let (m, v) = (&self.m.parts()[i], &self.v.parts()[i]);
            for ((x, &ms), &vs) in p.iter_mut().zip(m.iter()).zip(v.iter()) {
                let m_hat = ms / bc1;
                let v_hat = vs / bc2;
                *x -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_indexing_spans_parts() {
        let a = [1.0, 2.0];
        let b = [3.0];
        let slices: Vec<&[f64]> = vec![&a, &b];
        assert_eq!(param_len(&slices), 3);
        assert_eq!(param_get(&slices, 2), 3.0);
        let mut a = [1.0, 2.0];
        let mut b = [3.0];
        let mut muts: Vec<&mut [f64]> = vec![&mut a, &mut b];
        param_add(&mut muts, 2, 0.5);
        assert_eq!(b[0], 3.5);
    }

    #[test]
    fn sgd_moves_against_gradient() {
        let mut p = [1.0, 1.0];
        let shape: Vec<&[f64]> = vec![&p];
        let mut g = FlatTensors::zeros_like(&shape);
        g.part_mut(0)[0] = 2.0;
        let mut muts: Vec<&mut [f64]> = vec![&mut p];
        sgd_step(&mut muts, &g, 0.1);
        assert_eq!(p, [0.8, 1.0]);
    }

    #[test]
    fn adam_zero_lr_leaves_params() {
        let mut p = [1.0, -2.0];
        let shape: Vec<&[f64]> = vec![&p];
        let mut g = FlatTensors::zeros_like(&shape);
        g.part_mut(0).copy_from_slice(&[0.3, -0.7]);
        let mut adam = Adam::new(&shape, 0.0);
        let mut muts: Vec<&mut [f64]> = vec![&mut p];
        adam.step(&mut muts, &g);
        assert_eq!(p, [1.0, -2.0]);
    }
}
