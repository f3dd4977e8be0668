//! Finite-difference gradient checks.
//!
//! The numeric side only evaluates forward passes, so it stays independent
//! of every backward rule it is used to verify.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::array::{Float, Tensor};
use super::ops;
use super::params::ParamStore;
use super::tape::{Tape, Var};
use crate::error::Result;

#[derive(Clone, Debug)]
pub struct CheckOptions {
    /// Number of random coordinates probed.
    pub coords: usize,
    /// Finite-difference step `h` of the five-point stencil.
    pub step: f64,
    /// Lower bound on the denominator of the relative error.
    pub floor: f64,
    pub seed: u64,
}

impl Default for CheckOptions {
    fn default() -> Self {
        #[cfg(not(feature = "f64"))]
        let (step, floor) = (2e-2, 1e-2);
        #[cfg(feature = "f64")]
        let (step, floor) = (1e-4, 1e-4);
        CheckOptions {
            coords: 20,
            step,
            floor,
            seed: 0,
        }
    }
}

/// Relative error tolerance matching the engine precision.
pub fn default_tolerance() -> f64 {
    if cfg!(feature = "f64") {
        1e-5
    } else {
        1e-3
    }
}

#[derive(Clone, Debug)]
pub struct Probe {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

#[derive(Clone, Debug)]
pub struct GradReport {
    pub probes: Vec<Probe>,
    /// Coordinates rejected because the stencil crossed a kink.
    pub skipped: usize,
}

impl GradReport {
    pub fn max_rel_err(&self) -> f64 {
        self.probes.iter().map(|p| p.rel_err).fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&Probe> {
        self.probes
            .iter()
            .max_by(|a, b| a.rel_err.total_cmp(&b.rel_err))
    }
}

/// `|a − n| / max(|a|, |n|, floor)`.
pub fn rel_err(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Checks `d f / d params` at `opts.coords` random trainable coordinates.
///
/// `f` must be deterministic: it is re-evaluated four times per coordinate.
/// Coordinates whose stencil changes a ReLU sign, pooling argmax or clamp
/// region (see [`Tape::branch_signature`]) are replaced by fresh ones.
pub fn check(
    store: &mut ParamStore,
    opts: &CheckOptions,
    mut f: impl FnMut(&Tape, &ParamStore) -> Result<Var>,
) -> Result<GradReport> {
    check_split(store, opts, |tape, store, _| f(tape, store))
}

/// As [`check`], for backward fields that are not the gradient of one
/// scalar (gradient reversal). `f(tape, store, None)` is the objective whose
/// backward pass is checked; `f(tape, store, Some(name))` is the scalar whose
/// finite differences the gradient of parameter `name` must match.
pub fn check_split(
    store: &mut ParamStore,
    opts: &CheckOptions,
    mut f: impl FnMut(&Tape, &ParamStore, Option<&str>) -> Result<Var>,
) -> Result<GradReport> {
    let tape = Tape::new();
    let loss = f(&tape, store, None)?;
    let base_sig = tape.branch_signature();
    tape.backward(&loss)?;
    store.zero_grad();
    store.accumulate_grads(&tape);
    drop(loss);
    drop(tape);

    let slots: Vec<(usize, usize)> = (0..store.len())
        .filter(|&i| store.get(i).trainable())
        .flat_map(|i| (0..store.get(i).value().numel()).map(move |j| (i, j)))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    // candidates in random order; probes straddling a kink are replaced
    let picks = sample(&mut rng, slots.len(), slots.len());

    let mut probes = Vec::with_capacity(opts.coords);
    let mut skipped = 0;
    for pick in picks {
        if probes.len() == opts.coords {
            break;
        }
        let (pi, j) = slots[pick];
        let name = store.get(pi).name().to_string();
        let analytic = store.get(pi).grad().data()[j] as f64;
        let orig = store.get(pi).value().data()[j];
        let mut eval = |store: &mut ParamStore, v: Float| -> Result<(f64, u64)> {
            store.get_mut(pi).value_mut().data_mut()[j] = v;
            let tape = Tape::new();
            let y = f(&tape, store, Some(&name))?.item_f64();
            Ok((y, tape.branch_signature()))
        };
        // five-point stencil (8(f₁ − f₋₁) − (f₂ − f₋₂)) / 12h, truncation O(h⁴);
        // offsets are the steps actually representable in the engine precision
        let mut vals = [0.0; 4];
        let mut offs = [0.0; 4];
        let mut crossed = false;
        for (slot, k) in [-2.0, -1.0, 1.0, 2.0].into_iter().enumerate() {
            let v = (orig as f64 + k * opts.step) as Float;
            offs[slot] = v as f64 - orig as f64;
            let (y, sig) = eval(store, v)?;
            vals[slot] = y;
            crossed |= sig != base_sig;
        }
        store.get_mut(pi).value_mut().data_mut()[j] = orig;
        if crossed {
            skipped += 1;
            continue;
        }
        // the divisor makes the stencil exact for linear f at the actual offsets
        let numeric = (8.0 * (vals[2] - vals[1]) - (vals[3] - vals[0])) / (8.0 * (offs[2] - offs[1]) - (offs[3] - offs[0]));
        probes.push(Probe {
            param: name,
            index: j,
            analytic,
            numeric,
            rel_err: rel_err(analytic, numeric, opts.floor),
        });
    }
    Ok(GradReport { probes, skipped })
}

/// Gradient check of a function of plain input tensors.
pub fn check_inputs(
    inputs: &[Tensor],
    opts: &CheckOptions,
    f: impl Fn(&Tape, &[Var]) -> Result<Var>,
) -> Result<GradReport> {
    let mut store = ParamStore::new();
    for (i, t) in inputs.iter().enumerate() {
        store.add(format!("input{i}"), t.clone(), true);
    }
    check(&mut store, opts, |tape, store| {
        let vars: Vec<Var> = (0..store.len()).map(|i| tape.param(store, i)).collect();
        f(tape, &vars)
    })
}

/// Reduces a tensor-valued output to a scalar with fixed pseudo-random weights.
pub fn project(y: &Var, seed: u64) -> Result<Var> {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    let w = Tensor::from_fn(&y.shape(), |_| rng.gen_range(-1.0..1.0) as Float);
    let w = y.tape().constant(w);
    Ok(ops::sum(&ops::mul(y, &w)?))
}

/// Uniform random tensor in `[-scale, scale)`.
pub fn random_tensor(shape: &[usize], scale: f64, seed: u64) -> Tensor {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape, |_| rng.gen_range(-scale..scale) as Float)
}
