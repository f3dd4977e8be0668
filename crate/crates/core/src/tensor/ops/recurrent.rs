//! LSTM and GRU recurrences built from primitive tape ops.

use super::basic::{add, add_scalar, add_trailing, concat, matmul, mul, narrow, reshape, scale, sigmoid, tanh};
use crate::error::{Error, Result};
use crate::tensor::array::Tensor;
use crate::tensor::tape::Var;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CellKind {
    Lstm,
    Gru,
}

impl CellKind {
    /// Gate blocks per step: LSTM (i, f, g, o), GRU (r, z, n).
    pub fn gates(self) -> usize {
        match self {
            CellKind::Lstm => 4,
            CellKind::Gru => 3,
        }
    }
}

/// Weights of one recurrent layer bound on a tape.
///
/// `w_ih: (D, G·H)`, `w_hh: (H, G·H)`, `b_ih, b_hh: (G·H)`.
pub struct CellWeights {
    pub w_ih: Var,
    pub w_hh: Var,
    pub b_ih: Var,
    pub b_hh: Var,
}

pub struct RecurrentOutput {
    /// `(B, T, H)`
    pub sequence: Var,
    /// `(B, H)`
    pub last_hidden: Var,
    /// LSTM cell state after the last step.
    pub last_cell: Option<Var>,
}

/// Runs one recurrent layer over `input: (B, T, D)` from a zero state.
///
/// LSTM: `c' = f⊙c + i⊙g`, `h' = o⊙tanh(c')`.
/// GRU: `n = tanh(x·W_n + b_n + r⊙(h·U_n + c_n))`, `h' = (1−z)⊙h + z⊙n`,
/// so a saturated update gate copies the candidate into the state.
pub fn recurrent_layer(kind: CellKind, input: &Var, w: &CellWeights) -> Result<RecurrentOutput> {
    let s = input.shape();
    if s.len() != 3 {
        return Err(Error::dim(format!("recurrent: input must be (B, T, D), got {s:?}")));
    }
    let (b, t, d) = (s[0], s[1], s[2]);
    let ws = w.w_hh.shape();
    if ws.len() != 2 || ws[1] % kind.gates() != 0 || ws[0] * kind.gates() != ws[1] {
        return Err(Error::dim(format!("recurrent: hidden weight {ws:?} for {kind:?}")));
    }
    let h = ws[0];
    if w.w_ih.shape() != [d, kind.gates() * h] {
        return Err(Error::dim(format!(
            "recurrent: input weight {:?}, expected [{d}, {}]",
            w.w_ih.shape(),
            kind.gates() * h
        )));
    }
    let tape = input.tape();
    let flat = reshape(input, &[b * t, d])?;
    let xproj = add_trailing(&matmul(&flat, &w.w_ih)?, &w.b_ih)?;
    let xproj = reshape(&xproj, &[b, t, kind.gates() * h])?;

    let mut hidden = tape.constant(Tensor::zeros(&[b, h]));
    let mut cell = tape.constant(Tensor::zeros(&[b, h]));
    let mut outputs = Vec::with_capacity(t);
    let gate = |v: &Var, k: usize| narrow(v, 1, k * h, h);
    for step in 0..t {
        let xs = reshape(&narrow(&xproj, 1, step, 1)?, &[b, kind.gates() * h])?;
        let hs = add_trailing(&matmul(&hidden, &w.w_hh)?, &w.b_hh)?;
        match kind {
            CellKind::Lstm => {
                let pre = add(&xs, &hs)?;
                let i = sigmoid(&gate(&pre, 0)?);
                let f = sigmoid(&gate(&pre, 1)?);
                let g = tanh(&gate(&pre, 2)?);
                let o = sigmoid(&gate(&pre, 3)?);
                cell = add(&mul(&f, &cell)?, &mul(&i, &g)?)?;
                hidden = mul(&o, &tanh(&cell))?;
            }
            CellKind::Gru => {
                let r = sigmoid(&add(&gate(&xs, 0)?, &gate(&hs, 0)?)?);
                let z = sigmoid(&add(&gate(&xs, 1)?, &gate(&hs, 1)?)?);
                let n = tanh(&add(&gate(&xs, 2)?, &mul(&r, &gate(&hs, 2)?)?)?);
                let keep = add_scalar(&scale(&z, -1.0), 1.0);
                hidden = add(&mul(&keep, &hidden)?, &mul(&z, &n)?)?;
            }
        }
        outputs.push(reshape(&hidden, &[b, 1, h])?);
    }
    let refs: Vec<&Var> = outputs.iter().collect();
    Ok(RecurrentOutput {
        sequence: concat(&refs, 1)?,
        last_hidden: hidden,
        last_cell: (kind == CellKind::Lstm).then_some(cell),
    })
}
