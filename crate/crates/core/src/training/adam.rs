use crate::error::{Error, Result};
use crate::tensor::{Float, ParamStore, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First and second moments per parameter, plus the step count.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub t: u64,
}

impl AdamState {
    pub fn new(store: &ParamStore) -> AdamState {
        let zeros = || store.iter().map(|p| Tensor::zeros(p.value().shape())).collect();
        AdamState { m: zeros(), v: zeros(), t: 0 }
    }
}

/// One bias-corrected Adam update of every trainable parameter from its
/// accumulated gradient.
pub fn adam_step(store: &mut ParamStore, state: &mut AdamState, cfg: &AdamConfig, lr: f64) -> Result<()> {
    if state.m.len() != store.len() {
        return Err(Error::Contract("Adam state does not mirror the parameter store".into()));
    }
    for i in 0..store.len() {
        let p = store.get(i);
        if p.trainable() && !p.grad().is_finite() {
            return Err(Error::Training(format!("non-finite gradient in {}", p.name())));
        }
    }
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for i in 0..store.len() {
        if !store.get(i).trainable() {
            continue;
        }
        let (value, g) = store.get_mut(i).value_and_grad();
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for (((w, &g), m), v) in value.data_mut().iter_mut().zip(g.data()).zip(m.data_mut()).zip(v.data_mut()) {
            let g = g as f64;
            let mm = cfg.beta1 * *m as f64 + (1.0 - cfg.beta1) * g;
            let vv = cfg.beta2 * *v as f64 + (1.0 - cfg.beta2) * g * g;
            *m = mm as Float;
            *v = vv as Float;
            let step = lr * (mm / c1) / ((vv / c2).sqrt() + cfg.eps);
            *w = (*w as f64 - step) as Float;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(v: Float) -> ParamStore {
        let mut s = ParamStore::new();
        s.add("w", Tensor::from_vec(vec![v]), true);
        s
    }

    fn set_grad(s: &mut ParamStore, g: Float) {
        s.get_mut(0).grad_mut().data_mut()[0] = g;
    }

    #[test]
    fn first_step_closed_form() {
        for (b1, b2, lr) in [(0.9, 0.999, 1e-3), (0.5, 0.9, 0.1), (0.0, 0.99, 0.01)] {
            let cfg = AdamConfig { beta1: b1, beta2: b2, eps: 1e-8 };
            let mut s = one(1.0);
            let mut st = AdamState::new(&s);
            set_grad(&mut s, 1.0);
            adam_step(&mut s, &mut st, &cfg, lr).unwrap();
            // m̂ = v̂ = 1 after bias correction, so the update is lr / (1 + eps)
            let want = 1.0 - lr / (1.0 + 1e-8);
            assert!((s.get(0).value().data()[0] as f64 - want).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let cfg = AdamConfig::default();
        let mut s = one(0.25);
        let mut st = AdamState::new(&s);
        set_grad(&mut s, 2.0);
        adam_step(&mut s, &mut st, &cfg, 0.1).unwrap();
        let after_first = s.get(0).value().data()[0];
        let m1 = st.m[0].data()[0];
        set_grad(&mut s, 0.0);
        let mut s0 = one(after_first);
        let mut st0 = AdamState { m: vec![Tensor::zeros(&[1])], v: vec![Tensor::zeros(&[1])], t: 0 };
        adam_step(&mut s0, &mut st0, &cfg, 0.1).unwrap();
        assert_eq!(s0.get(0).value().data()[0], after_first);
        adam_step(&mut s, &mut st, &cfg, 0.1).unwrap();
        assert!((st.m[0].data()[0] - 0.9 * m1).abs() < 1e-7);
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut s = one(0.0);
        let mut st = AdamState::new(&s);
        set_grad(&mut s, Float::NAN);
        let e = adam_step(&mut s, &mut st, &AdamConfig::default(), 1e-3).unwrap_err();
        assert!(matches!(&e, Error::Training(m) if m.contains('w')), "{e}");
    }
}
