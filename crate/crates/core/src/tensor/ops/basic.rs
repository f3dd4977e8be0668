//! Elementwise, reduction and shape ops.

use crate::error::{Error, Result};
use crate::tensor::array::{gemm, strides, Float, Tensor};
use crate::tensor::tape::Var;

fn same_shape(a: &Var, b: &Var, op: &str) -> Result<Vec<usize>> {
    let (sa, sb) = (a.shape(), b.shape());
    if sa != sb {
        return Err(Error::dim(format!("{op}: shapes {sa:?} and {sb:?} differ")));
    }
    Ok(sa)
}

fn precise_pair(a: &Var, b: &Var, f: impl Fn(f64, f64) -> f64) -> Option<f64> {
    (a.value().numel() == 1).then(|| f(a.item_f64(), b.item_f64()))
}

pub fn add(a: &Var, b: &Var) -> Result<Var> {
    same_shape(a, b, "add")?;
    let out = a.value().zip_map(&b.value(), |x, y| x + y);
    Ok(a.tape().record_precise(
        "add",
        out,
        precise_pair(a, b, |x, y| x + y),
        &[a, b],
        Box::new(|g, _, _| vec![Some(g.clone()), Some(g.clone())]),
    ))
}

pub fn sub(a: &Var, b: &Var) -> Result<Var> {
    same_shape(a, b, "sub")?;
    let out = a.value().zip_map(&b.value(), |x, y| x - y);
    Ok(a.tape().record_precise(
        "sub",
        out,
        precise_pair(a, b, |x, y| x - y),
        &[a, b],
        Box::new(|g, _, _| vec![Some(g.clone()), Some(g.scale(-1.0))]),
    ))
}

pub fn mul(a: &Var, b: &Var) -> Result<Var> {
    same_shape(a, b, "mul")?;
    let out = a.value().zip_map(&b.value(), |x, y| x * y);
    Ok(a.tape().record(
        "mul",
        out,
        &[a, b],
        Box::new(|g, inp, _| {
            vec![
                Some(g.zip_map(&inp[1], |g, y| g * y)),
                Some(g.zip_map(&inp[0], |g, x| g * x)),
            ]
        }),
    ))
}

/// `a * s` for a constant `s`.
pub fn scale(a: &Var, s: Float) -> Var {
    let out = a.value().scale(s);
    let precise = (out.numel() == 1).then(|| a.item_f64() * s as f64);
    a.tape().record_precise(
        "scale",
        out,
        precise,
        &[a],
        Box::new(move |g, _, _| vec![Some(g.scale(s))]),
    )
}

pub fn add_scalar(a: &Var, s: Float) -> Var {
    let out = a.value().map(|x| x + s);
    let precise = (out.numel() == 1).then(|| a.item_f64() + s as f64);
    a.tape().record_precise(
        "add_scalar",
        out,
        precise,
        &[a],
        Box::new(|g, _, _| vec![Some(g.clone())]),
    )
}

fn trailing_split(x: &[usize], t: &[usize], op: &str) -> Result<usize> {
    if t.len() > x.len() || x[x.len() - t.len()..] != *t {
        return Err(Error::dim(format!(
            "{op}: {t:?} is not a trailing sub-shape of {x:?}"
        )));
    }
    Ok(t.iter().product())
}

/// `x + b` where `b`'s shape equals the trailing dimensions of `x`.
pub fn add_trailing(x: &Var, b: &Var) -> Result<Var> {
    let inner = trailing_split(&x.shape(), &b.shape(), "add_trailing")?;
    let xv = x.value();
    let bv = b.value();
    let mut out = (*xv).clone();
    for chunk in out.data_mut().chunks_mut(inner) {
        for (o, &bb) in chunk.iter_mut().zip(bv.data()) {
            *o += bb;
        }
    }
    Ok(x.tape().record(
        "add_trailing",
        out,
        &[x, b],
        Box::new(move |g, inp, _| {
            let mut gb = Tensor::zeros(inp[1].shape());
            for chunk in g.data().chunks(inner) {
                for (a, &v) in gb.data_mut().iter_mut().zip(chunk) {
                    *a += v;
                }
            }
            vec![Some(g.clone()), Some(gb)]
        }),
    ))
}

/// `x * w` where `w`'s shape equals the trailing dimensions of `x`.
pub fn mul_trailing(x: &Var, w: &Var) -> Result<Var> {
    let inner = trailing_split(&x.shape(), &w.shape(), "mul_trailing")?;
    let xv = x.value();
    let wv = w.value();
    let mut out = (*xv).clone();
    for chunk in out.data_mut().chunks_mut(inner) {
        for (o, &ww) in chunk.iter_mut().zip(wv.data()) {
            *o *= ww;
        }
    }
    Ok(x.tape().record(
        "mul_trailing",
        out,
        &[x, w],
        Box::new(move |g, inp, _| {
            let (xv, wv) = (&inp[0], &inp[1]);
            let mut gx = g.clone();
            let mut gw = Tensor::zeros(wv.shape());
            for ((gc, xc), gxc) in g
                .data()
                .chunks(inner)
                .zip(xv.data().chunks(inner))
                .zip(gx.data_mut().chunks_mut(inner))
            {
                for i in 0..inner {
                    gw.data_mut()[i] += gc[i] * xc[i];
                    gxc[i] = gc[i] * wv.data()[i];
                }
            }
            vec![Some(gx), Some(gw)]
        }),
    ))
}

fn unary(
    a: &Var,
    op: &'static str,
    f: impl Fn(Float) -> Float,
    df: impl Fn(Float, Float) -> Float + 'static,
) -> Var {
    let out = a.value().map(f);
    a.tape().record(
        op,
        out,
        &[a],
        Box::new(move |g, inp, out| {
            let d: Vec<Float> = g
                .data()
                .iter()
                .zip(inp[0].data())
                .zip(out.data())
                .map(|((&g, &x), &y)| g * df(x, y))
                .collect();
            vec![Some(Tensor::from_parts(g.shape().to_vec(), d))]
        }),
    )
}

/// max(0, x); the subgradient at 0 is 0.
pub fn relu(a: &Var) -> Var {
    a.tape().note_branches(a.value().data().iter().map(|&x| (x > 0.0) as u64));
    unary(a, "relu", |x| x.max(0.0), |x, _| if x > 0.0 { 1.0 } else { 0.0 })
}

pub fn sigmoid(a: &Var) -> Var {
    unary(a, "sigmoid", sigmoid_scalar, |_, y| y * (1.0 - y))
}

pub(crate) fn sigmoid_scalar(x: Float) -> Float {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn tanh(a: &Var) -> Var {
    unary(a, "tanh", Float::tanh, |_, y| 1.0 - y * y)
}

pub fn exp(a: &Var) -> Var {
    unary(a, "exp", Float::exp, |_, y| y)
}

pub fn log(a: &Var) -> Var {
    unary(a, "log", Float::ln, |x, _| 1.0 / x)
}

pub fn square(a: &Var) -> Var {
    unary(a, "square", |x| x * x, |x, _| 2.0 * x)
}

/// log(1 + e^x), evaluated without overflow.
pub fn softplus(a: &Var) -> Var {
    unary(
        a,
        "softplus",
        |x| x.max(0.0) + (-x.abs()).exp().ln_1p(),
        |x, _| sigmoid_scalar(x),
    )
}

/// Clamps into `[lo, hi]`; the gradient is zero where clamping is active.
pub fn clamp(a: &Var, lo: Float, hi: Float) -> Var {
    a.tape().note_branches(a.value().data().iter().map(|&x| (x < lo) as u64 + 2 * (x > hi) as u64));
    unary(
        a,
        "clamp",
        move |x| x.clamp(lo, hi),
        move |x, _| if x < lo || x > hi { 0.0 } else { 1.0 },
    )
}

pub fn sum(a: &Var) -> Var {
    let total: f64 = a.value().data().iter().map(|&x| x as f64).sum();
    a.tape().record_precise(
        "sum",
        Tensor::scalar(total as Float),
        Some(total),
        &[a],
        Box::new(|g, inp, _| vec![Some(Tensor::full(inp[0].shape(), g.item()))]),
    )
}

pub fn mean(a: &Var) -> Var {
    let n = a.value().numel() as Float;
    scale(&sum(a), 1.0 / n)
}

fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

/// Sum over one axis, which is removed from the shape (rank-1 inputs give shape `[1]`).
pub fn sum_axis(a: &Var, axis: usize) -> Result<Var> {
    let shape = a.shape();
    if axis >= shape.len() {
        return Err(Error::dim(format!("sum_axis: axis {axis} out of range for {shape:?}")));
    }
    let (outer, len, inner) = axis_split(&shape, axis);
    let v = a.value();
    let mut out = vec![0.0; outer * inner];
    for o in 0..outer {
        for l in 0..len {
            let src = &v.data()[(o * len + l) * inner..(o * len + l + 1) * inner];
            for (d, &s) in out[o * inner..(o + 1) * inner].iter_mut().zip(src) {
                *d += s;
            }
        }
    }
    let mut out_shape = shape.clone();
    out_shape.remove(axis);
    if out_shape.is_empty() {
        out_shape.push(1);
    }
    Ok(a.tape().record(
        "sum_axis",
        Tensor::from_parts(out_shape, out),
        &[a],
        Box::new(move |g, inp, _| {
            let mut gi = Tensor::zeros(inp[0].shape());
            for o in 0..outer {
                let src = &g.data()[o * inner..(o + 1) * inner];
                for l in 0..len {
                    gi.data_mut()[(o * len + l) * inner..(o * len + l + 1) * inner]
                        .copy_from_slice(src);
                }
            }
            vec![Some(gi)]
        }),
    ))
}

pub fn mean_axis(a: &Var, axis: usize) -> Result<Var> {
    let len = a.shape()[axis] as Float;
    Ok(scale(&sum_axis(a, axis)?, 1.0 / len))
}

pub fn reshape(a: &Var, shape: &[usize]) -> Result<Var> {
    let v = a.value();
    if shape.iter().product::<usize>() != v.numel() {
        return Err(Error::dim(format!(
            "reshape: cannot view {:?} as {shape:?}",
            v.shape()
        )));
    }
    let out = (*v).clone().with_shape(shape);
    Ok(a.tape().record(
        "reshape",
        out,
        &[a],
        Box::new(|g, inp, _| vec![Some(g.clone().with_shape(inp[0].shape()))]),
    ))
}

/// Collapses every axis after the first.
pub fn flatten(a: &Var) -> Result<Var> {
    let s = a.shape();
    let rest: usize = s[1..].iter().product();
    reshape(a, &[s[0], rest])
}

fn permute_data(t: &Tensor, axes: &[usize]) -> Tensor {
    let in_shape = t.shape();
    let in_strides = strides(in_shape);
    let out_shape: Vec<usize> = axes.iter().map(|&a| in_shape[a]).collect();
    let src_strides: Vec<usize> = axes.iter().map(|&a| in_strides[a]).collect();
    let n = t.numel();
    let mut out = Vec::with_capacity(n);
    let rank = out_shape.len();
    let mut idx = vec![0usize; rank];
    let mut off = 0usize;
    let src = t.data();
    for _ in 0..n {
        out.push(src[off]);
        for d in (0..rank).rev() {
            idx[d] += 1;
            off += src_strides[d];
            if idx[d] < out_shape[d] {
                break;
            }
            off -= src_strides[d] * out_shape[d];
            idx[d] = 0;
        }
    }
    Tensor::from_parts(out_shape, out)
}

/// Reorders axes: output axis `i` is input axis `axes[i]`.
pub fn permute(a: &Var, axes: &[usize]) -> Result<Var> {
    let rank = a.shape().len();
    let mut seen = vec![false; rank];
    if axes.len() != rank || axes.iter().any(|&x| x >= rank || std::mem::replace(&mut seen[x], true)) {
        return Err(Error::dim(format!("permute: {axes:?} is not a permutation of rank {rank}")));
    }
    let out = permute_data(&a.value(), axes);
    let mut inverse = vec![0; rank];
    for (i, &x) in axes.iter().enumerate() {
        inverse[x] = i;
    }
    Ok(a.tape().record(
        "permute",
        out,
        &[a],
        Box::new(move |g, _, _| vec![Some(permute_data(g, &inverse))]),
    ))
}

/// Concatenates along `axis`; all other extents must agree.
pub fn concat(parts: &[&Var], axis: usize) -> Result<Var> {
    let first = parts
        .first()
        .ok_or_else(|| Error::dim("concat: no inputs"))?
        .shape();
    if axis >= first.len() {
        return Err(Error::dim(format!("concat: axis {axis} out of range for {first:?}")));
    }
    let mut lens = Vec::with_capacity(parts.len());
    for p in parts {
        let s = p.shape();
        let compatible = s.len() == first.len()
            && s.iter().zip(&first).enumerate().all(|(i, (a, b))| i == axis || a == b);
        if !compatible {
            return Err(Error::dim(format!("concat: {s:?} incompatible with {first:?} on axis {axis}")));
        }
        lens.push(s[axis]);
    }
    let (outer, _, inner) = axis_split(&first, axis);
    let total: usize = lens.iter().sum();
    let mut out = Vec::with_capacity(outer * total * inner);
    let values: Vec<_> = parts.iter().map(|p| p.value()).collect();
    for o in 0..outer {
        for (v, &l) in values.iter().zip(&lens) {
            out.extend_from_slice(&v.data()[o * l * inner..(o + 1) * l * inner]);
        }
    }
    let mut shape = first.clone();
    shape[axis] = total;
    let tape = parts[0].tape().clone();
    Ok(tape.record(
        "concat",
        Tensor::from_parts(shape, out),
        parts,
        Box::new(move |g, inp, _| {
            let mut grads: Vec<Vec<Float>> = lens.iter().map(|&l| Vec::with_capacity(outer * l * inner)).collect();
            let mut off = 0;
            for _ in 0..outer {
                for (gr, &l) in grads.iter_mut().zip(&lens) {
                    gr.extend_from_slice(&g.data()[off..off + l * inner]);
                    off += l * inner;
                }
            }
            grads
                .into_iter()
                .zip(inp)
                .map(|(d, i)| Some(Tensor::from_parts(i.shape().to_vec(), d)))
                .collect()
        }),
    ))
}

/// Slice `[start, start + len)` along `axis`.
pub fn narrow(a: &Var, axis: usize, start: usize, len: usize) -> Result<Var> {
    let shape = a.shape();
    if axis >= shape.len() || len == 0 || start + len > shape[axis] {
        return Err(Error::dim(format!(
            "narrow: [{start}, {}) out of range on axis {axis} of {shape:?}",
            start + len
        )));
    }
    let (outer, full, inner) = axis_split(&shape, axis);
    let v = a.value();
    let mut out = Vec::with_capacity(outer * len * inner);
    for o in 0..outer {
        let base = (o * full + start) * inner;
        out.extend_from_slice(&v.data()[base..base + len * inner]);
    }
    let mut out_shape = shape.clone();
    out_shape[axis] = len;
    Ok(a.tape().record(
        "narrow",
        Tensor::from_parts(out_shape, out),
        &[a],
        Box::new(move |g, inp, _| {
            let mut gi = Tensor::zeros(inp[0].shape());
            for o in 0..outer {
                let base = (o * full + start) * inner;
                gi.data_mut()[base..base + len * inner]
                    .copy_from_slice(&g.data()[o * len * inner..(o + 1) * len * inner]);
            }
            vec![Some(gi)]
        }),
    ))
}

/// Repeats each row of a `(B, D)` input `times` times: output `(B·times, D)`.
pub fn repeat_rows(a: &Var, times: usize) -> Result<Var> {
    let shape = a.shape();
    if shape.len() != 2 || times == 0 {
        return Err(Error::dim(format!("repeat_rows: need rank 2 and times ≥ 1, got {shape:?}")));
    }
    let (b, d) = (shape[0], shape[1]);
    let v = a.value();
    let mut out = Vec::with_capacity(b * times * d);
    for row in v.data().chunks(d) {
        for _ in 0..times {
            out.extend_from_slice(row);
        }
    }
    Ok(a.tape().record(
        "repeat_rows",
        Tensor::from_parts(vec![b * times, d], out),
        &[a],
        Box::new(move |g, _, _| {
            let mut gi = vec![0.0; b * d];
            for (r, chunk) in g.data().chunks(d).enumerate() {
                let dst = &mut gi[(r / times) * d..(r / times + 1) * d];
                for (x, &y) in dst.iter_mut().zip(chunk) {
                    *x += y;
                }
            }
            vec![Some(Tensor::from_parts(vec![b, d], gi))]
        }),
    ))
}

/// `(m, k) · (k, n)`.
pub fn matmul(a: &Var, b: &Var) -> Result<Var> {
    let (sa, sb) = (a.shape(), b.shape());
    if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
        return Err(Error::dim(format!("matmul: {sa:?} · {sb:?}")));
    }
    let (m, k, n) = (sa[0], sa[1], sb[1]);
    let mut out = vec![0.0; m * n];
    gemm(m, k, n, 1.0, a.value().data(), false, b.value().data(), false, 0.0, &mut out);
    Ok(a.tape().record(
        "matmul",
        Tensor::from_parts(vec![m, n], out),
        &[a, b],
        Box::new(move |g, inp, _| {
            let mut ga = vec![0.0; m * k];
            gemm(m, n, k, 1.0, g.data(), false, inp[1].data(), true, 0.0, &mut ga);
            let mut gb = vec![0.0; k * n];
            gemm(k, m, n, 1.0, inp[0].data(), true, g.data(), false, 0.0, &mut gb);
            vec![
                Some(Tensor::from_parts(vec![m, k], ga)),
                Some(Tensor::from_parts(vec![k, n], gb)),
            ]
        }),
    ))
}

/// `x·W + b` with `x: (B, in)`, `W: (in, out)`, `b: (out)`.
pub fn linear(x: &Var, w: &Var, b: &Var) -> Result<Var> {
    let (sx, sw) = (x.shape(), w.shape());
    if sx.len() != 2 || sw.len() != 2 || sx[1] != sw[0] {
        return Err(Error::dim(format!(
            "linear: input {sx:?} does not match weight {sw:?}"
        )));
    }
    if b.shape() != [sw[1]] {
        return Err(Error::dim(format!("linear: bias {:?} for {} units", b.shape(), sw[1])));
    }
    add_trailing(&matmul(x, w)?, b)
}

/// Identity forward; backward multiplies the upstream gradient by `-lambda`.
pub fn grad_reverse(a: &Var, lambda: Float) -> Var {
    let out = (*a.value()).clone();
    a.tape().record(
        "grad_reverse",
        out,
        &[a],
        Box::new(move |g, _, _| vec![Some(g.scale(-lambda))]),
    )
}

/// Detaches a value from the graph: same value, no gradient flows back.
pub fn detach(a: &Var) -> Var {
    a.tape().constant((*a.value()).clone())
}
