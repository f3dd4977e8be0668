use crate::error::{Error, Result};
use crate::tensor::array::{Float, Tensor};
use crate::tensor::tape::Var;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reduction {
    Sum,
    Mean,
}

/// Row-wise softmax of a `(B, K)` tensor, stabilised by max subtraction.
pub fn softmax_rows(logits: &Tensor) -> Tensor {
    let k = *logits.shape().last().unwrap_or(&1);
    let mut out = logits.data().to_vec();
    for row in out.chunks_mut(k) {
        let m = row.iter().copied().fold(Float::NEG_INFINITY, Float::max);
        let mut z = 0.0f64;
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            z += *v as f64;
        }
        for v in row.iter_mut() {
            *v = (*v as f64 / z) as Float;
        }
    }
    Tensor::from_parts(logits.shape().to_vec(), out)
}

/// Softmax cross-entropy against class indices.
///
/// Returns the probabilities (detached) and the loss `−log p[target]`
/// summed or averaged over rows. The gradient is `p − onehot(target)`.
pub fn softmax_xent(logits: &Var, targets: &[usize], reduction: Reduction) -> Result<(Tensor, Var)> {
    let s = logits.shape();
    if s.len() != 2 {
        return Err(Error::dim(format!("softmax_xent: logits must be (B, K), got {s:?}")));
    }
    let (b, k) = (s[0], s[1]);
    if targets.len() != b {
        return Err(Error::dim(format!("softmax_xent: {} targets for {b} rows", targets.len())));
    }
    if let Some(&t) = targets.iter().find(|&&t| t >= k) {
        return Err(Error::input(format!("target class {t} outside {k} classes")));
    }
    let lv = logits.value();
    let probs = softmax_rows(&lv);
    let mut total = 0.0f64;
    for (row, (&t, p)) in lv.data().chunks(k).zip(targets.iter().zip(probs.data().chunks(k))) {
        // log-sum-exp form keeps −log p finite even when p underflows
        let m = row.iter().copied().fold(Float::NEG_INFINITY, Float::max) as f64;
        let lse = m + row.iter().map(|&v| (v as f64 - m).exp()).sum::<f64>().ln();
        total += lse - row[t] as f64;
        debug_assert!(p.iter().all(|v| v.is_finite()));
    }
    let norm = match reduction {
        Reduction::Sum => 1.0,
        Reduction::Mean => 1.0 / b as Float,
    };
    let loss = Tensor::scalar((total as Float) * norm);
    let saved = probs.clone();
    let targets = targets.to_vec();
    let var = logits.tape().record_precise(
        "softmax_xent",
        loss,
        Some(total * norm as f64),
        &[logits],
        Box::new(move |g, _, _| {
            let scale = g.item() * norm;
            let mut d = saved.data().to_vec();
            for (row, &t) in d.chunks_mut(k).zip(&targets) {
                row[t] -= 1.0;
                row.iter_mut().for_each(|v| *v *= scale);
            }
            vec![Some(Tensor::from_parts(vec![b, k], d))]
        }),
    );
    Ok((probs, var))
}
