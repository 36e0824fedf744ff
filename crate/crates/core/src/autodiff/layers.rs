use serde::{Deserialize, Serialize};

use super::{Real, Tensor};

/// One layer of a sequential stack. Conv and pooling layers take `[C, H, W]`;
/// dense, softmax and GRU layers flatten their input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    Dense {
        inputs: usize,
        units: usize,
    },
    Relu,
    MaxPool {
        size: usize,
    },
    Softmax,
    /// Input is `[x; h]` with `inputs + units` entries; output is the new `h`.
    GruCell {
        inputs: usize,
        units: usize,
    },
}

impl LayerSpec {
    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        match *self {
            LayerSpec::Conv2d { in_channels, out_channels, kernel, .. } => {
                vec![vec![out_channels, in_channels, kernel, kernel], vec![out_channels]]
            }
            LayerSpec::Dense { inputs, units } => vec![vec![units, inputs], vec![units]],
            LayerSpec::GruCell { inputs, units } => {
                let w = vec![units, inputs + units];
                vec![w.clone(), w.clone(), w, vec![units], vec![units], vec![units]]
            }
            LayerSpec::Relu | LayerSpec::MaxPool { .. } | LayerSpec::Softmax => vec![],
        }
    }

    pub fn param_count(&self) -> usize {
        self.param_shapes().iter().map(|s| s.iter().product::<usize>()).sum()
    }

    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>, String> {
        let flat: usize = input.iter().product();
        match *self {
            LayerSpec::Conv2d { in_channels, out_channels, kernel, stride, padding } => {
                let [c, h, w] = input else { return Err(format!("conv2d needs [C,H,W], got {input:?}")) };
                if *c != in_channels {
                    return Err(format!("conv2d expects {in_channels} channels, got {c}"));
                }
                if kernel == 0 || stride == 0 || h + 2 * padding < kernel || w + 2 * padding < kernel {
                    return Err("conv2d kernel does not fit".into());
                }
                Ok(vec![out_channels, (h + 2 * padding - kernel) / stride + 1, (w + 2 * padding - kernel) / stride + 1])
            }
            LayerSpec::MaxPool { size } => {
                let [c, h, w] = input else { return Err(format!("maxpool needs [C,H,W], got {input:?}")) };
                if size == 0 || *h < size || *w < size {
                    return Err("maxpool window does not fit".into());
                }
                Ok(vec![*c, h / size, w / size])
            }
            LayerSpec::Dense { inputs, units } => {
                if flat != inputs {
                    return Err(format!("dense expects {inputs} inputs, got {flat}"));
                }
                Ok(vec![units])
            }
            LayerSpec::GruCell { inputs, units } => {
                if flat != inputs + units {
                    return Err(format!("gru_cell expects {} inputs, got {flat}", inputs + units));
                }
                Ok(vec![units])
            }
            LayerSpec::Relu => Ok(input.to_vec()),
            LayerSpec::Softmax => Ok(vec![flat]),
        }
    }
}

/// Per-layer values kept from the forward pass.
#[derive(Debug, Clone)]
pub(crate) enum LayerCache<T> {
    Input(Tensor<T>),
    Pool { in_shape: Vec<usize>, argmax: Vec<usize> },
    Softmax(Vec<T>),
    Gru { xh: Vec<T>, z: Vec<T>, r: Vec<T>, n: Vec<T>, xrh: Vec<T> },
}

fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

/// Dot product with eight independent partial sums so the loop vectorizes;
/// the summation order is fixed, so results stay deterministic.
fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut tail = T::zero();
    for (x, y) in ra.iter().zip(rb) {
        tail += *x * *y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// `out[i] = b[i] + sum_j w[i, j] * x[j]`
fn affine<T: Real>(w: &[T], b: &[T], x: &[T], out: &mut [T]) {
    let n = x.len();
    for (i, o) in out.iter_mut().enumerate() {
        let row = &w[i * n..(i + 1) * n];
        *o = b[i] + dot(row, x);
    }
}

/// Accumulates `dw += g x^T`, `db += g`, `dx += w^T g`.
fn affine_back<T: Real>(w: &[T], x: &[T], g: &[T], dw: &mut [T], db: &mut [T], dx: &mut [T]) {
    let n = x.len();
    for (i, &gi) in g.iter().enumerate() {
        if gi == T::zero() {
            continue;
        }
        db[i] += gi;
        let row = &w[i * n..(i + 1) * n];
        let drow = &mut dw[i * n..(i + 1) * n];
        for ((d, &xj), (dxj, &wj)) in drow.iter_mut().zip(x).zip(dx.iter_mut().zip(row)) {
            *d += gi * xj;
            *dxj += gi * wj;
        }
    }
}

/// Input taps of every output position: row `(i, ky, kx)` holds one entry
/// per output pixel, zero where the tap falls in the padding.
fn im2col<T: Real>(spec: &LayerSpec, x: &Tensor<T>, ho: usize, wo: usize) -> Vec<T> {
    let LayerSpec::Conv2d { in_channels: ic, kernel: k, stride: s, padding: p, .. } = *spec else { unreachable!() };
    let (h, w) = (x.shape[1], x.shape[2]);
    let mut col = vec![T::zero(); ic * k * k * ho * wo];
    for_each_tap(ic, k, s, p, h, w, ho, wo, |ci, xi| col[ci] = x.data[xi]);
    col
}

/// Adjoint of [`im2col`].
fn col2im<T: Real>(spec: &LayerSpec, dcol: &[T], shape: &[usize], ho: usize, wo: usize) -> Vec<T> {
    let LayerSpec::Conv2d { in_channels: ic, kernel: k, stride: s, padding: p, .. } = *spec else { unreachable!() };
    let (h, w) = (shape[1], shape[2]);
    let mut dx = vec![T::zero(); ic * h * w];
    for_each_tap(ic, k, s, p, h, w, ho, wo, |ci, xi| dx[xi] += dcol[ci]);
    dx
}

/// Calls `f(column index, input index)` for every in-bounds tap.
#[allow(clippy::too_many_arguments)]
fn for_each_tap(ic: usize, k: usize, s: usize, p: usize, h: usize, w: usize, ho: usize, wo: usize, mut f: impl FnMut(usize, usize)) {
    let cols = ho * wo;
    for i in 0..ic {
        for ky in 0..k {
            for kx in 0..k {
                let row = ((i * k + ky) * k + kx) * cols;
                for oy in 0..ho {
                    let iy = (oy * s + ky) as isize - p as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let xrow = (i * h + iy as usize) * w;
                    for ox in 0..wo {
                        let ix = (ox * s + kx) as isize - p as isize;
                        if ix >= 0 && ix < w as isize {
                            f(row + oy * wo + ox, xrow + ix as usize);
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn forward<T: Real>(spec: &LayerSpec, params: &[Tensor<T>], x: &Tensor<T>) -> (Tensor<T>, LayerCache<T>) {
    match *spec {
        LayerSpec::Conv2d { out_channels: oc, .. } => {
            let out_shape = spec.output_shape(&x.shape).expect("checked by network");
            let cols = out_shape[1] * out_shape[2];
            let col = im2col(spec, x, out_shape[1], out_shape[2]);
            let (wt, b) = (&params[0].data, &params[1].data);
            let taps = wt.len() / oc;
            let mut out = vec![T::zero(); oc * cols];
            for (o, orow) in out.chunks_exact_mut(cols).enumerate() {
                orow.iter_mut().for_each(|v| *v = b[o]);
                for (q, &wq) in wt[o * taps..(o + 1) * taps].iter().enumerate() {
                    for (v, &c) in orow.iter_mut().zip(&col[q * cols..(q + 1) * cols]) {
                        *v += wq * c;
                    }
                }
            }
            (Tensor { shape: out_shape, data: out }, LayerCache::Input(x.clone()))
        }
        LayerSpec::Dense { units, .. } => {
            let mut out = vec![T::zero(); units];
            affine(&params[0].data, &params[1].data, &x.data, &mut out);
            (Tensor::vector(out), LayerCache::Input(x.clone()))
        }
        LayerSpec::Relu => {
            let data = x.data.iter().map(|&v| if v > T::zero() { v } else { T::zero() }).collect();
            (Tensor { shape: x.shape.clone(), data }, LayerCache::Input(x.clone()))
        }
        LayerSpec::MaxPool { size } => {
            let (c, h, w) = (x.shape[0], x.shape[1], x.shape[2]);
            let (ho, wo) = (h / size, w / size);
            let mut out = Vec::with_capacity(c * ho * wo);
            let mut argmax = Vec::with_capacity(c * ho * wo);
            for ch in 0..c {
                for oy in 0..ho {
                    for ox in 0..wo {
                        let mut best = (ch * h + oy * size) * w + ox * size;
                        for dy in 0..size {
                            for dx in 0..size {
                                let idx = (ch * h + oy * size + dy) * w + ox * size + dx;
                                if x.data[idx] > x.data[best] {
                                    best = idx;
                                }
                            }
                        }
                        out.push(x.data[best]);
                        argmax.push(best);
                    }
                }
            }
            (Tensor { shape: vec![c, ho, wo], data: out }, LayerCache::Pool { in_shape: x.shape.clone(), argmax })
        }
        LayerSpec::Softmax => {
            let m = x.data.iter().cloned().fold(T::neg_infinity(), T::max);
            let e: Vec<T> = x.data.iter().map(|&v| (v - m).exp()).collect();
            let z: T = e.iter().cloned().sum();
            let p: Vec<T> = e.into_iter().map(|v| v / z).collect();
            (Tensor::vector(p.clone()), LayerCache::Softmax(p))
        }
        LayerSpec::GruCell { inputs, units } => {
            let xh = x.data.clone();
            let h = &xh[inputs..];
            let mut z = vec![T::zero(); units];
            let mut r = vec![T::zero(); units];
            affine(&params[0].data, &params[3].data, &xh, &mut z);
            affine(&params[1].data, &params[4].data, &xh, &mut r);
            z.iter_mut().for_each(|v| *v = sigmoid(*v));
            r.iter_mut().for_each(|v| *v = sigmoid(*v));
            let mut xrh = xh.clone();
            for j in 0..units {
                xrh[inputs + j] = r[j] * h[j];
            }
            let mut n = vec![T::zero(); units];
            affine(&params[2].data, &params[5].data, &xrh, &mut n);
            n.iter_mut().for_each(|v| *v = v.tanh());
            let out: Vec<T> = (0..units).map(|j| (T::one() - z[j]) * n[j] + z[j] * h[j]).collect();
            (Tensor::vector(out), LayerCache::Gru { xh, z, r, n, xrh })
        }
    }
}

/// Accumulates parameter gradients into `grads` and returns the input gradient.
pub(crate) fn backward<T: Real>(
    spec: &LayerSpec,
    params: &[Tensor<T>],
    cache: &LayerCache<T>,
    g: &Tensor<T>,
    grads: &mut [Tensor<T>],
    need_dx: bool,
) -> Tensor<T> {
    match (spec, cache) {
        (&LayerSpec::Conv2d { out_channels: oc, .. }, LayerCache::Input(x)) => {
            let cols = g.shape[1] * g.shape[2];
            let col = im2col(spec, x, g.shape[1], g.shape[2]);
            let wt = &params[0].data;
            let taps = wt.len() / oc;
            let mut dcol = vec![T::zero(); if need_dx { col.len() } else { 0 }];
            let (dw, rest) = grads.split_at_mut(1);
            let (dw, db) = (&mut dw[0].data, &mut rest[0].data);
            for (o, grow) in g.data.chunks_exact(cols).enumerate() {
                db[o] += grow.iter().copied().sum::<T>();
                for q in 0..taps {
                    let crow = &col[q * cols..(q + 1) * cols];
                    dw[o * taps + q] += dot(grow, crow);
                    if !need_dx {
                        continue;
                    }
                    let wq = wt[o * taps + q];
                    for (d, &a) in dcol[q * cols..(q + 1) * cols].iter_mut().zip(grow) {
                        *d += wq * a;
                    }
                }
            }
            if !need_dx {
                return Tensor { shape: x.shape.clone(), data: vec![] };
            }
            Tensor { shape: x.shape.clone(), data: col2im(spec, &dcol, &x.shape, g.shape[1], g.shape[2]) }
        }
        (LayerSpec::Dense { .. }, LayerCache::Input(x)) => {
            let mut dx = vec![T::zero(); x.data.len()];
            let (dw, rest) = grads.split_at_mut(1);
            affine_back(&params[0].data, &x.data, &g.data, &mut dw[0].data, &mut rest[0].data, &mut dx);
            Tensor { shape: x.shape.clone(), data: dx }
        }
        (LayerSpec::Relu, LayerCache::Input(x)) => {
            let data = x.data.iter().zip(&g.data).map(|(&v, &gv)| if v > T::zero() { gv } else { T::zero() }).collect();
            Tensor { shape: x.shape.clone(), data }
        }
        (LayerSpec::MaxPool { .. }, LayerCache::Pool { in_shape, argmax }) => {
            let mut dx = Tensor::zeros(in_shape);
            for (&i, &gv) in argmax.iter().zip(&g.data) {
                dx.data[i] += gv;
            }
            dx
        }
        (LayerSpec::Softmax, LayerCache::Softmax(pr)) => {
            let dot: T = pr.iter().zip(&g.data).map(|(&a, &b)| a * b).sum();
            Tensor::vector(pr.iter().zip(&g.data).map(|(&pi, &gi)| pi * (gi - dot)).collect())
        }
        (&LayerSpec::GruCell { inputs, units }, LayerCache::Gru { xh, z, r, n, xrh }) => {
            let h = &xh[inputs..];
            let mut dxh = vec![T::zero(); xh.len()];
            let mut dz_pre = vec![T::zero(); units];
            let mut dn_pre = vec![T::zero(); units];
            for j in 0..units {
                let gj = g.data[j];
                dxh[inputs + j] += gj * z[j];
                dz_pre[j] = gj * (h[j] - n[j]) * z[j] * (T::one() - z[j]);
                dn_pre[j] = gj * (T::one() - z[j]) * (T::one() - n[j] * n[j]);
            }
            let mut dxrh = vec![T::zero(); xh.len()];
            {
                let (head, tail) = grads.split_at_mut(3);
                affine_back(&params[2].data, xrh, &dn_pre, &mut head[2].data, &mut tail[2].data, &mut dxrh);
                affine_back(&params[0].data, xh, &dz_pre, &mut head[0].data, &mut tail[0].data, &mut dxh);
            }
            let mut dr_pre = vec![T::zero(); units];
            for j in 0..inputs {
                dxh[j] += dxrh[j];
            }
            for j in 0..units {
                let d = dxrh[inputs + j];
                dxh[inputs + j] += d * r[j];
                dr_pre[j] = d * h[j] * r[j] * (T::one() - r[j]);
            }
            {
                let (head, tail) = grads.split_at_mut(3);
                affine_back(&params[1].data, xh, &dr_pre, &mut head[1].data, &mut tail[1].data, &mut dxh);
            }
            Tensor::vector(dxh)
        }
        _ => unreachable!("cache kind always matches its layer"),
    }
}
