//! Forward and backward kernels on NCHW `f64` tensors.

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(n: usize, c: usize, h: usize, w: usize) -> Self {
        Self { n, c, h, w, data: vec![0.0; n * c * h * w] }
    }

    pub fn from_vec(n: usize, c: usize, h: usize, w: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), n * c * h * w, "tensor shape mismatch");
        Self { n, c, h, w, data }
    }

    #[inline]
    pub fn idx(&self, n: usize, c: usize, i: usize, j: usize) -> usize {
        ((n * self.c + c) * self.h + i) * self.w + j
    }

    pub fn same_shape(&self) -> Self {
        Self::zeros(self.n, self.c, self.h, self.w)
    }

    /// Per-sample feature length.
    pub fn features(&self) -> usize {
        self.c * self.h * self.w
    }
}

/// Same-padded convolution without bias; `weight` is `[cout][cin][k][k]`.
pub fn conv_forward(x: &Tensor, weight: &[f64], cout: usize, k: usize) -> Tensor {
    let (cin, h, w) = (x.c, x.h, x.w);
    debug_assert_eq!(weight.len(), cout * cin * k * k);
    let pad = (k / 2) as isize;
    let mut y = Tensor::zeros(x.n, cout, h, w);
    for n in 0..x.n {
        for o in 0..cout {
            for c in 0..cin {
                for ki in 0..k {
                    for kj in 0..k {
                        let wv = weight[((o * cin + c) * k + ki) * k + kj];
                        if wv == 0.0 {
                            continue;
                        }
                        for i in 0..h {
                            let si = i as isize + ki as isize - pad;
                            if si < 0 || si >= h as isize {
                                continue;
                            }
                            let xrow = x.idx(n, c, si as usize, 0);
                            let yrow = y.idx(n, o, i, 0);
                            for j in 0..w {
                                let sj = j as isize + kj as isize - pad;
                                if sj < 0 || sj >= w as isize {
                                    continue;
                                }
                                y.data[yrow + j] += wv * x.data[xrow + sj as usize];
                            }
                        }
                    }
                }
            }
        }
    }
    y
}

/// Returns `(dx, dweight)`.
pub fn conv_backward(x: &Tensor, weight: &[f64], dy: &Tensor, k: usize) -> (Tensor, Vec<f64>) {
    let (cin, h, w, cout) = (x.c, x.h, x.w, dy.c);
    let pad = (k / 2) as isize;
    let mut dx = x.same_shape();
    let mut dw = vec![0.0; weight.len()];
    for n in 0..x.n {
        for o in 0..cout {
            for c in 0..cin {
                for ki in 0..k {
                    for kj in 0..k {
                        let widx = ((o * cin + c) * k + ki) * k + kj;
                        let wv = weight[widx];
                        let mut acc = 0.0;
                        for i in 0..h {
                            let si = i as isize + ki as isize - pad;
                            if si < 0 || si >= h as isize {
                                continue;
                            }
                            let xrow = x.idx(n, c, si as usize, 0);
                            let yrow = dy.idx(n, o, i, 0);
                            for j in 0..w {
                                let sj = j as isize + kj as isize - pad;
                                if sj < 0 || sj >= w as isize {
                                    continue;
                                }
                                let g = dy.data[yrow + j];
                                acc += g * x.data[xrow + sj as usize];
                                dx.data[xrow + sj as usize] += g * wv;
                            }
                        }
                        dw[widx] += acc;
                    }
                }
            }
        }
    }
    (dx, dw)
}

pub const BN_EPS: f64 = 1e-5;

/// Batch-norm statistics captured on the forward pass.
#[derive(Clone, Debug)]
pub struct BnTrace {
    pub xhat: Vec<f64>,
    pub invstd: Vec<f64>,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

/// Training-mode batch norm over `(n, h, w)` per channel.
pub fn bn_forward_train(x: &Tensor, gamma: &[f64], beta: &[f64]) -> (Tensor, BnTrace) {
    let hw = x.h * x.w;
    let m = (x.n * hw) as f64;
    let mut mean = vec![0.0; x.c];
    let mut var = vec![0.0; x.c];
    for c in 0..x.c {
        let mut s = 0.0;
        for n in 0..x.n {
            let base = x.idx(n, c, 0, 0);
            s += x.data[base..base + hw].iter().sum::<f64>();
        }
        mean[c] = s / m;
        let mut v = 0.0;
        for n in 0..x.n {
            let base = x.idx(n, c, 0, 0);
            v += x.data[base..base + hw].iter().map(|&z| (z - mean[c]).powi(2)).sum::<f64>();
        }
        var[c] = v / m;
    }
    let invstd: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
    let mut y = x.same_shape();
    let mut xhat = vec![0.0; x.data.len()];
    for n in 0..x.n {
        for c in 0..x.c {
            let base = x.idx(n, c, 0, 0);
            for p in base..base + hw {
                let xh = (x.data[p] - mean[c]) * invstd[c];
                xhat[p] = xh;
                y.data[p] = gamma[c] * xh + beta[c];
            }
        }
    }
    (y, BnTrace { xhat, invstd, mean, var })
}

pub fn bn_forward_eval(x: &Tensor, gamma: &[f64], beta: &[f64], mean: &[f64], var: &[f64]) -> Tensor {
    let hw = x.h * x.w;
    let mut y = x.same_shape();
    for n in 0..x.n {
        for c in 0..x.c {
            let inv = 1.0 / (var[c] + BN_EPS).sqrt();
            let base = x.idx(n, c, 0, 0);
            for p in base..base + hw {
                y.data[p] = gamma[c] * (x.data[p] - mean[c]) * inv + beta[c];
            }
        }
    }
    y
}

/// Returns `(dx, dgamma, dbeta)` for the training-mode forward.
pub fn bn_backward(dy: &Tensor, trace: &BnTrace, gamma: &[f64]) -> (Tensor, Vec<f64>, Vec<f64>) {
    let hw = dy.h * dy.w;
    let m = (dy.n * hw) as f64;
    let mut dgamma = vec![0.0; dy.c];
    let mut dbeta = vec![0.0; dy.c];
    for n in 0..dy.n {
        for c in 0..dy.c {
            let base = dy.idx(n, c, 0, 0);
            for p in base..base + hw {
                dgamma[c] += dy.data[p] * trace.xhat[p];
                dbeta[c] += dy.data[p];
            }
        }
    }
    let mut dx = dy.same_shape();
    for n in 0..dy.n {
        for c in 0..dy.c {
            let base = dy.idx(n, c, 0, 0);
            // dxhat = dy·γ; Σdxhat = γ·dβ; Σ dxhat·xhat = γ·dγ
            let k = gamma[c] * trace.invstd[c] / m;
            for p in base..base + hw {
                dx.data[p] = k * (m * dy.data[p] - dbeta[c] - trace.xhat[p] * dgamma[c]);
            }
        }
    }
    (dx, dgamma, dbeta)
}

pub fn relu_inplace(x: &mut Tensor) {
    for v in &mut x.data {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// Zeroes `dy` where the activation output was not positive.
pub fn relu_backward_inplace(dy: &mut Tensor, out: &Tensor) {
    for (g, &o) in dy.data.iter_mut().zip(&out.data) {
        if o <= 0.0 {
            *g = 0.0;
        }
    }
}

/// `y = W·x + b` per sample; `weight` is `[out][in]`.
pub fn dense_forward(x: &[f64], batch: usize, weight: &[f64], bias: &[f64]) -> Vec<f64> {
    let out = bias.len();
    let inp = x.len() / batch;
    let mut y = vec![0.0; batch * out];
    for n in 0..batch {
        let xs = &x[n * inp..(n + 1) * inp];
        for o in 0..out {
            let ws = &weight[o * inp..(o + 1) * inp];
            y[n * out + o] = bias[o] + ws.iter().zip(xs).map(|(a, b)| a * b).sum::<f64>();
        }
    }
    y
}

/// Returns `(dx, dweight, dbias)`.
pub fn dense_backward(x: &[f64], batch: usize, weight: &[f64], dy: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let out = dy.len() / batch;
    let inp = x.len() / batch;
    let mut dx = vec![0.0; x.len()];
    let mut dw = vec![0.0; weight.len()];
    let mut db = vec![0.0; out];
    for n in 0..batch {
        let xs = &x[n * inp..(n + 1) * inp];
        for o in 0..out {
            let g = dy[n * out + o];
            if g == 0.0 {
                continue;
            }
            db[o] += g;
            let ws = &weight[o * inp..(o + 1) * inp];
            let dws = &mut dw[o * inp..(o + 1) * inp];
            for i in 0..inp {
                dws[i] += g * xs[i];
                dx[n * inp + i] += g * ws[i];
            }
        }
    }
    (dx, dw, db)
}

/// Softmax over legal entries; illegal entries are exactly zero.
pub fn masked_softmax(logits: &[f64], mask: &[bool]) -> Vec<f64> {
    let max = logits.iter().zip(mask).filter(|(_, &m)| m).map(|(&l, _)| l).fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return vec![0.0; logits.len()];
    }
    let mut p: Vec<f64> = logits.iter().zip(mask).map(|(&l, &m)| if m { (l - max).exp() } else { 0.0 }).collect();
    let s: f64 = p.iter().sum();
    for v in &mut p {
        *v /= s;
    }
    p
}
