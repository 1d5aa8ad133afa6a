use super::ParamStore;
use crate::error::{Error, Result};

/// ADAM optimizer state with one pair of moment buffers per parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(lr: f64) -> Self {
        AdamState {
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    /// Drops the moment estimates and the step counter.
    pub fn reset(&mut self) {
        self.step = 0;
        self.m.clear();
        self.v.clear();
    }
}

/// One bias-corrected ADAM update over every trainable tensor in `store`.
///
/// Gradients are consumed and cleared. A trainable tensor without a gradient
/// aborts the update before any parameter changes.
pub fn adam_step(store: &mut ParamStore, state: &mut AdamState) -> Result<()> {
    for (_, name, t) in store.iter() {
        if t.requires_grad() && t.grad().is_none() {
            return Err(Error::MissingGrad(name.to_string()));
        }
    }
    let tensors = store.tensors_mut();
    if state.m.len() != tensors.len()
        || state
            .m
            .iter()
            .zip(tensors.iter())
            .any(|(m, t)| m.len() != t.numel())
    {
        state.m = tensors.iter().map(|t| vec![0.0; t.numel()]).collect();
        state.v = state.m.clone();
        state.step = 0;
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    for (i, p) in tensors.iter_mut().enumerate() {
        if !p.requires_grad {
            continue;
        }
        let g = p.take_grad().expect("checked above");
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for (j, gj) in g.iter().enumerate() {
            m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * gj;
            v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * gj * gj;
            let mhat = m[j] / bc1;
            let vhat = v[j] / bc2;
            p.data[j] -= state.lr * mhat / (vhat.sqrt() + state.eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{Graph, Tensor};

    fn one_param(theta: f64) -> ParamStore {
        let mut s = ParamStore::new();
        s.insert("theta", Tensor::vector(vec![theta]).unwrap());
        s
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut s = one_param(0.0);
        let id = s.find("theta").unwrap();
        s.get_mut(id).accumulate_grad(&[1.0]).unwrap();
        let mut st = AdamState::new(0.1);
        adam_step(&mut s, &mut st).unwrap();
        assert!((s.get(id).data()[0] + 0.1).abs() < 1e-6);
        assert!(s.get(id).grad().is_none());
        assert_eq!(st.step, 1);
    }

    #[test]
    fn zero_gradient_leaves_parameter() {
        let mut s = one_param(0.7);
        let id = s.find("theta").unwrap();
        let mut st = AdamState::new(0.1);
        for _ in 0..5 {
            s.get_mut(id).accumulate_grad(&[0.0]).unwrap();
            adam_step(&mut s, &mut st).unwrap();
        }
        assert!((s.get(id).data()[0] - 0.7).abs() <= 1e-12);
    }

    #[test]
    fn missing_gradient_is_an_error() {
        let mut s = one_param(0.0);
        let mut st = AdamState::new(0.1);
        match adam_step(&mut s, &mut st) {
            Err(Error::MissingGrad(name)) => assert_eq!(name, "theta"),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(st.step, 0);
    }

    #[test]
    fn quadratic_converges_monotonically_in_windows() {
        let mut s = one_param(0.0);
        let id = s.find("theta").unwrap();
        let mut st = AdamState::new(3e-4);
        let mut window_err = Vec::new();
        for k in 0..1000 {
            let mut g = Graph::new();
            let th = g.param(&s, id);
            let d = g.add_scalar(th, -3.0);
            let sq = g.square(d);
            let l = g.sum(sq);
            g.backward_into(l, &mut s).unwrap();
            adam_step(&mut s, &mut st).unwrap();
            if k % 100 == 99 {
                window_err.push((s.get(id).data()[0] - 3.0).abs());
            }
        }
        assert!(window_err.windows(2).all(|w| w[1] < w[0]), "{window_err:?}");
        assert_eq!(st.step, 1000);
    }
}
