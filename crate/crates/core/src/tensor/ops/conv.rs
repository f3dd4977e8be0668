//! Convolution and pooling over `(batch, channels, spatial...)` layouts.
//!
//! One-dimensional variants are 2D ops with a unit-height spatial axis.

use crate::error::{Error, Result};
use crate::tensor::array::{gemm, Float, Tensor};
use crate::tensor::tape::Var;

/// Geometry of a 2D window op: kernel, zero padding and stride per axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Window2d {
    pub kernel: [usize; 2],
    pub pad: [usize; 2],
    pub stride: [usize; 2],
}

impl Window2d {
    pub fn square(k: usize, pad: usize, stride: usize) -> Self {
        Window2d {
            kernel: [k, k],
            pad: [pad, pad],
            stride: [stride, stride],
        }
    }

    /// A 1D window laid out on the width axis.
    pub fn line(k: usize, pad: usize, stride: usize) -> Self {
        Window2d {
            kernel: [1, k],
            pad: [0, pad],
            stride: [1, stride],
        }
    }

    pub fn out_extent(&self, h: usize, w: usize) -> Result<[usize; 2]> {
        Ok([
            out_extent(h, self.kernel[0], self.pad[0], self.stride[0])?,
            out_extent(w, self.kernel[1], self.pad[1], self.stride[1])?,
        ])
    }
}

/// `floor((input + 2·pad − kernel) / stride) + 1`, or an error when the window
/// does not fit the padded input.
pub fn out_extent(input: usize, kernel: usize, pad: usize, stride: usize) -> Result<usize> {
    if stride == 0 || kernel == 0 {
        return Err(Error::config("kernel and stride must be positive"));
    }
    let padded = input + 2 * pad;
    if kernel > padded {
        return Err(Error::config(format!(
            "window {kernel} larger than padded extent {padded} (input {input}, pad {pad})"
        )));
    }
    Ok((padded - kernel) / stride + 1)
}

struct Geom {
    c: usize,
    h: usize,
    w: usize,
    oh: usize,
    ow: usize,
    win: Window2d,
}

impl Geom {
    fn rows(&self) -> usize {
        self.c * self.win.kernel[0] * self.win.kernel[1]
    }
    fn cols(&self) -> usize {
        self.oh * self.ow
    }
    fn identity(&self) -> bool {
        self.win.kernel == [1, 1] && self.win.pad == [0, 0] && self.win.stride == [1, 1]
    }
}

fn im2col(img: &[Float], g: &Geom, out: &mut [Float]) {
    let [kh, kw] = g.win.kernel;
    let [ph, pw] = g.win.pad;
    let [sh, sw] = g.win.stride;
    let p = g.cols();
    for c in 0..g.c {
        for i in 0..kh {
            for j in 0..kw {
                let row = ((c * kh + i) * kw + j) * p;
                for oy in 0..g.oh {
                    let y = (oy * sh + i) as isize - ph as isize;
                    let dst = &mut out[row + oy * g.ow..row + (oy + 1) * g.ow];
                    if y < 0 || y >= g.h as isize {
                        dst.iter_mut().for_each(|v| *v = 0.0);
                        continue;
                    }
                    let src = &img[(c * g.h + y as usize) * g.w..(c * g.h + y as usize + 1) * g.w];
                    for (ox, d) in dst.iter_mut().enumerate() {
                        let x = (ox * sw + j) as isize - pw as isize;
                        *d = if x < 0 || x >= g.w as isize { 0.0 } else { src[x as usize] };
                    }
                }
            }
        }
    }
}

fn col2im(cols: &[Float], g: &Geom, img: &mut [Float]) {
    let [kh, kw] = g.win.kernel;
    let [ph, pw] = g.win.pad;
    let [sh, sw] = g.win.stride;
    let p = g.cols();
    for c in 0..g.c {
        for i in 0..kh {
            for j in 0..kw {
                let row = ((c * kh + i) * kw + j) * p;
                for oy in 0..g.oh {
                    let y = (oy * sh + i) as isize - ph as isize;
                    if y < 0 || y >= g.h as isize {
                        continue;
                    }
                    let base = (c * g.h + y as usize) * g.w;
                    for ox in 0..g.ow {
                        let x = (ox * sw + j) as isize - pw as isize;
                        if x >= 0 && x < g.w as isize {
                            img[base + x as usize] += cols[row + oy * g.ow + ox];
                        }
                    }
                }
            }
        }
    }
}

fn check_rank4(x: &[usize], op: &str) -> Result<()> {
    if x.len() != 4 {
        return Err(Error::dim(format!("{op}: expected (batch, channels, h, w), got {x:?}")));
    }
    Ok(())
}

/// 2D cross-correlation. `x: (B, C, H, W)`, `w: (O, C, kh, kw)`, `b: (O)`.
pub fn conv2d(x: &Var, w: &Var, b: &Var, win: Window2d) -> Result<Var> {
    let (sx, sw) = (x.shape(), w.shape());
    check_rank4(&sx, "conv2d")?;
    if sw.len() != 4 || sw[1] != sx[1] || sw[2] != win.kernel[0] || sw[3] != win.kernel[1] {
        return Err(Error::dim(format!(
            "conv2d: kernel {sw:?} does not match input {sx:?} with window {:?}",
            win.kernel
        )));
    }
    if b.shape() != [sw[0]] {
        return Err(Error::dim(format!("conv2d: bias {:?} for {} filters", b.shape(), sw[0])));
    }
    let [oh, ow] = win.out_extent(sx[2], sx[3])?;
    let (batch, o) = (sx[0], sw[0]);
    let g = Geom { c: sx[1], h: sx[2], w: sx[3], oh, ow, win };
    let (rows, p) = (g.rows(), g.cols());
    let in_len = g.c * g.h * g.w;

    let xv = x.value();
    let wv = w.value();
    let bv = b.value();
    let mut out = vec![0.0; batch * o * p];
    let mut cols = if g.identity() { Vec::new() } else { vec![0.0; rows * p] };
    for n in 0..batch {
        let img = &xv.data()[n * in_len..(n + 1) * in_len];
        let dst = &mut out[n * o * p..(n + 1) * o * p];
        for (oc, chunk) in dst.chunks_mut(p).enumerate() {
            chunk.iter_mut().for_each(|v| *v = bv.data()[oc]);
        }
        let src: &[Float] = if g.identity() {
            img
        } else {
            im2col(img, &g, &mut cols);
            &cols
        };
        gemm(o, rows, p, 1.0, wv.data(), false, src, false, 1.0, dst);
    }

    Ok(x.tape().record(
        "conv2d",
        Tensor::from_parts(vec![batch, o, oh, ow], out),
        &[x, w, b],
        Box::new(move |gout, inp, _| {
            let (xv, wv) = (&inp[0], &inp[1]);
            let mut gx = vec![0.0; batch * in_len];
            let mut gw = vec![0.0; o * rows];
            let mut gb = vec![0.0; o];
            let mut cols = vec![0.0; rows * p];
            let mut gcols = vec![0.0; rows * p];
            for n in 0..batch {
                let img = &xv.data()[n * in_len..(n + 1) * in_len];
                let gy = &gout.data()[n * o * p..(n + 1) * o * p];
                for (oc, chunk) in gy.chunks(p).enumerate() {
                    gb[oc] += chunk.iter().sum::<Float>();
                }
                if g.identity() {
                    gemm(o, p, rows, 1.0, gy, false, img, true, 1.0, &mut gw);
                    gemm(rows, o, p, 1.0, wv.data(), true, gy, false, 0.0, &mut gx[n * in_len..(n + 1) * in_len]);
                } else {
                    im2col(img, &g, &mut cols);
                    gemm(o, p, rows, 1.0, gy, false, &cols, true, 1.0, &mut gw);
                    gemm(rows, o, p, 1.0, wv.data(), true, gy, false, 0.0, &mut gcols);
                    col2im(&gcols, &g, &mut gx[n * in_len..(n + 1) * in_len]);
                }
            }
            vec![
                Some(Tensor::from_parts(inp[0].shape().to_vec(), gx)),
                Some(Tensor::from_parts(inp[1].shape().to_vec(), gw)),
                Some(Tensor::from_parts(vec![o], gb)),
            ]
        }),
    ))
}

/// 1D cross-correlation. `x: (B, C, L)`, `w: (O, C, k)`, `b: (O)`.
pub fn conv1d(x: &Var, w: &Var, b: &Var, pad: usize, stride: usize) -> Result<Var> {
    let (sx, sw) = (x.shape(), w.shape());
    if sx.len() != 3 || sw.len() != 3 {
        return Err(Error::dim(format!("conv1d: input {sx:?}, kernel {sw:?}")));
    }
    let x4 = super::reshape(x, &[sx[0], sx[1], 1, sx[2]])?;
    let w4 = super::reshape(w, &[sw[0], sw[1], 1, sw[2]])?;
    let y = conv2d(&x4, &w4, b, Window2d::line(sw[2], pad, stride))?;
    let sy = y.shape();
    super::reshape(&y, &[sy[0], sy[1], sy[3]])
}

/// Transposed 2D convolution (gradient of [`conv2d`] with respect to its input).
///
/// `x: (B, Cin, H, W)`, `w: (Cin, Cout, kh, kw)`, `b: (Cout)`; output extent
/// per axis is `(in − 1)·stride − 2·pad + kernel`.
pub fn conv_transpose2d(x: &Var, w: &Var, b: &Var, win: Window2d) -> Result<Var> {
    let (sx, sw) = (x.shape(), w.shape());
    check_rank4(&sx, "conv_transpose2d")?;
    if sw.len() != 4 || sw[0] != sx[1] || sw[2] != win.kernel[0] || sw[3] != win.kernel[1] {
        return Err(Error::dim(format!(
            "conv_transpose2d: kernel {sw:?} does not match input {sx:?}"
        )));
    }
    let cout = sw[1];
    if b.shape() != [cout] {
        return Err(Error::dim("conv_transpose2d: bias size"));
    }
    let full = |i: usize, a: usize| -> Result<usize> {
        let v = (i - 1) * win.stride[a] + win.kernel[a];
        v.checked_sub(2 * win.pad[a])
            .filter(|&e| e > 0)
            .ok_or_else(|| Error::config("conv_transpose2d: non-positive output extent"))
    };
    let (oh, ow) = (full(sx[2], 0)?, full(sx[3], 1)?);
    // The output image plays the role of the conv input; x is the conv output.
    let g = Geom { c: cout, h: oh, w: ow, oh: sx[2], ow: sx[3], win };
    if g.win.out_extent(oh, ow)? != [sx[2], sx[3]] {
        return Err(Error::config("conv_transpose2d: inconsistent geometry"));
    }
    let (batch, cin) = (sx[0], sx[1]);
    let (rows, p) = (g.rows(), g.cols());
    let out_len = cout * oh * ow;
    let xv = x.value();
    let wv = w.value();
    let bv = b.value();
    let mut out = vec![0.0; batch * out_len];
    let mut cols = vec![0.0; rows * p];
    for n in 0..batch {
        let xn = &xv.data()[n * cin * p..(n + 1) * cin * p];
        gemm(rows, cin, p, 1.0, wv.data(), true, xn, false, 0.0, &mut cols);
        let dst = &mut out[n * out_len..(n + 1) * out_len];
        for (c, chunk) in dst.chunks_mut(oh * ow).enumerate() {
            chunk.iter_mut().for_each(|v| *v = bv.data()[c]);
        }
        col2im(&cols, &g, dst);
    }
    Ok(x.tape().record(
        "conv_transpose2d",
        Tensor::from_parts(vec![batch, cout, oh, ow], out),
        &[x, w, b],
        Box::new(move |gout, inp, _| {
            let (xv, wv) = (&inp[0], &inp[1]);
            let mut gx = vec![0.0; batch * cin * p];
            let mut gw = vec![0.0; cin * rows];
            let mut gb = vec![0.0; cout];
            let mut cols = vec![0.0; rows * p];
            for n in 0..batch {
                let gy = &gout.data()[n * out_len..(n + 1) * out_len];
                for (c, chunk) in gy.chunks(oh * ow).enumerate() {
                    gb[c] += chunk.iter().sum::<Float>();
                }
                im2col(gy, &g, &mut cols);
                let xn = &xv.data()[n * cin * p..(n + 1) * cin * p];
                gemm(cin, rows, p, 1.0, wv.data(), false, &cols, false, 0.0, &mut gx[n * cin * p..(n + 1) * cin * p]);
                gemm(cin, p, rows, 1.0, xn, false, &cols, true, 1.0, &mut gw);
            }
            vec![
                Some(Tensor::from_parts(inp[0].shape().to_vec(), gx)),
                Some(Tensor::from_parts(inp[1].shape().to_vec(), gw)),
                Some(Tensor::from_parts(vec![cout], gb)),
            ]
        }),
    ))
}

/// Max pooling with −∞ padding. Gradient is routed to the first maximum of each window.
pub fn maxpool2d(x: &Var, win: Window2d) -> Result<Var> {
    let sx = x.shape();
    check_rank4(&sx, "maxpool2d")?;
    let [oh, ow] = win.out_extent(sx[2], sx[3])?;
    let (planes, h, w) = (sx[0] * sx[1], sx[2], sx[3]);
    let xv = x.value();
    let mut out = Vec::with_capacity(planes * oh * ow);
    let mut arg = Vec::with_capacity(planes * oh * ow);
    for pl in 0..planes {
        let img = &xv.data()[pl * h * w..(pl + 1) * h * w];
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = Float::NEG_INFINITY;
                let mut best_i = usize::MAX;
                for i in 0..win.kernel[0] {
                    let y = (oy * win.stride[0] + i) as isize - win.pad[0] as isize;
                    if y < 0 || y >= h as isize {
                        continue;
                    }
                    for j in 0..win.kernel[1] {
                        let xx = (ox * win.stride[1] + j) as isize - win.pad[1] as isize;
                        if xx < 0 || xx >= w as isize {
                            continue;
                        }
                        let idx = y as usize * w + xx as usize;
                        if img[idx] > best || best_i == usize::MAX {
                            best = img[idx];
                            best_i = idx;
                        }
                    }
                }
                if best_i == usize::MAX {
                    return Err(Error::config("maxpool2d: window lies entirely in padding"));
                }
                out.push(best);
                arg.push(pl * h * w + best_i);
            }
        }
    }
    x.tape().note_branches(arg.iter().map(|&a| a as u64));
    Ok(x.tape().record(
        "maxpool2d",
        Tensor::from_parts(vec![sx[0], sx[1], oh, ow], out),
        &[x],
        Box::new(move |g, inp, _| {
            let mut gx = Tensor::zeros(inp[0].shape());
            for (&a, &v) in arg.iter().zip(g.data()) {
                gx.data_mut()[a] += v;
            }
            vec![Some(gx)]
        }),
    ))
}

/// 1D max pooling over `(B, C, L)`.
pub fn maxpool1d(x: &Var, size: usize, pad: usize, stride: usize) -> Result<Var> {
    let s = x.shape();
    if s.len() != 3 {
        return Err(Error::dim(format!("maxpool1d: expected (B, C, L), got {s:?}")));
    }
    let x4 = super::reshape(x, &[s[0], s[1], 1, s[2]])?;
    let y = maxpool2d(&x4, Window2d::line(size, pad, stride))?;
    let sy = y.shape();
    super::reshape(&y, &[sy[0], sy[1], sy[3]])
}

/// Mean over every spatial axis: `(B, C, ...) → (B, C)`.
pub fn global_avg_pool(x: &Var) -> Result<Var> {
    let s = x.shape();
    if s.len() < 3 {
        return Err(Error::dim(format!("global_avg_pool: rank ≥ 3 required, got {s:?}")));
    }
    let spatial: usize = s[2..].iter().product();
    let flat = super::reshape(x, &[s[0], s[1], spatial])?;
    super::mean_axis(&flat, 2)
}
