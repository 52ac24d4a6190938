//! Minimal NHWC layers with explicit reverse passes. Parameters live in one
//! flat vector; each layer records the ranges it owns.

use std::ops::Range;

use crate::scalar::Real;

/// Activation tensor, `n x h x w x c` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub n: usize,
    pub h: usize,
    pub w: usize,
    pub c: usize,
    pub data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn zeros(n: usize, h: usize, w: usize, c: usize) -> Self {
        Self { n, h, w, c, data: vec![T::zero(); n * h * w * c] }
    }

    pub fn rows(&self) -> usize {
        self.n * self.h * self.w
    }

    fn same_shape(&self, data: Vec<T>) -> Self {
        Self { n: self.n, h: self.h, w: self.w, c: self.c, data }
    }
}

/// Named parameter blocks in declaration order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Layout {
    pub blocks: Vec<(String, Range<usize>)>,
    pub total: usize,
}

impl Layout {
    pub fn add(&mut self, name: String, len: usize) -> Range<usize> {
        let r = self.total..self.total + len;
        self.blocks.push((name, r.clone()));
        self.total += len;
        r
    }
}

#[inline]
pub fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

#[inline]
pub fn silu<T: Real>(x: T) -> T {
    x * sigmoid(x)
}

#[inline]
pub fn silu_grad<T: Real>(x: T) -> T {
    let s = sigmoid(x);
    s * (T::one() + x * (T::one() - s))
}

pub fn silu_forward<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.same_shape(x.data.iter().map(|&v| silu(v)).collect())
}

/// Applies SiLU to a tensor while keeping the pre-activation values.
pub fn silu_keep<T: Real>(x: Tensor<T>) -> (Tensor<T>, Vec<T>) {
    let act = x.data.iter().map(|&v| silu(v)).collect();
    let Tensor { n, h, w, c, data } = x;
    (Tensor { n, h, w, c, data: act }, data)
}

/// `dy * silu'(x)` where `x` is the pre-activation.
pub fn silu_backward<T: Real>(x: &[T], dy: &[T]) -> Vec<T> {
    x.iter().zip(dy).map(|(&a, &g)| g * silu_grad(a)).collect()
}

#[derive(Debug, Clone)]
pub struct Linear {
    pub w: Range<usize>,
    pub b: Range<usize>,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Linear {
    pub fn new(layout: &mut Layout, name: &str, fan_in: usize, fan_out: usize) -> Self {
        let w = layout.add(format!("{name}.weight"), fan_in * fan_out);
        let b = layout.add(format!("{name}.bias"), fan_out);
        Self { w, b, fan_in, fan_out }
    }

    /// `x` is `rows x fan_in`.
    pub fn forward<T: Real>(&self, p: &[T], x: &[T], rows: usize) -> Vec<T> {
        let mut y = Vec::with_capacity(rows * self.fan_out);
        for _ in 0..rows {
            y.extend_from_slice(&p[self.b.clone()]);
        }
        T::gemm(rows, self.fan_in, self.fan_out, T::one(), x, self.fan_in, 1, &p[self.w.clone()], self.fan_out, 1, T::one(), &mut y, self.fan_out, 1);
        y
    }

    pub fn backward<T: Real>(&self, p: &[T], g: &mut [T], x: &[T], dy: &[T], rows: usize) -> Vec<T> {
        let (fi, fo) = (self.fan_in, self.fan_out);
        T::gemm(fi, rows, fo, T::one(), x, 1, fi, dy, fo, 1, T::one(), &mut g[self.w.clone()], fo, 1);
        let gb = &mut g[self.b.clone()];
        for row in dy.chunks_exact(fo) {
            for (b, &d) in gb.iter_mut().zip(row) {
                *b += d;
            }
        }
        let mut dx = vec![T::zero(); rows * fi];
        T::gemm(rows, fo, fi, T::one(), dy, fo, 1, &p[self.w.clone()], 1, fo, T::zero(), &mut dx, fi, 1);
        dx
    }
}

/// Square convolution, kernel 1 or 3 (zero padding 1), stride 1 or 2.
/// Weights are `(ky, kx, cin) x cout`.
#[derive(Debug, Clone)]
pub struct Conv {
    pub w: Range<usize>,
    pub b: Range<usize>,
    pub cin: usize,
    pub cout: usize,
    pub k: usize,
    pub stride: usize,
}

pub struct ConvCache<T> {
    col: Vec<T>,
    in_shape: (usize, usize, usize),
}

impl Conv {
    pub fn new(layout: &mut Layout, name: &str, cin: usize, cout: usize, k: usize, stride: usize) -> Self {
        assert!(k == 1 || k == 3, "kernel size {k}");
        let w = layout.add(format!("{name}.weight"), k * k * cin * cout);
        let b = layout.add(format!("{name}.bias"), cout);
        Self { w, b, cin, cout, k, stride }
    }

    pub fn fan_in(&self) -> usize {
        self.k * self.k * self.cin
    }

    fn out_hw(&self, h: usize, w: usize) -> (usize, usize) {
        (h.div_ceil(self.stride), w.div_ceil(self.stride))
    }

    fn im2col<T: Real>(&self, x: &Tensor<T>) -> Vec<T> {
        if self.k == 1 && self.stride == 1 {
            return x.data.clone();
        }
        let (ho, wo) = self.out_hw(x.h, x.w);
        let kc = self.fan_in();
        let c = x.c;
        let pad = (self.k / 2) as isize;
        let mut col = vec![T::zero(); x.n * ho * wo * kc];
        for n in 0..x.n {
            for oy in 0..ho {
                for ox in 0..wo {
                    let row = &mut col[((n * ho + oy) * wo + ox) * kc..][..kc];
                    for ky in 0..self.k {
                        let iy = (oy * self.stride) as isize + ky as isize - pad;
                        if iy < 0 || iy >= x.h as isize {
                            continue;
                        }
                        for kx in 0..self.k {
                            let ix = (ox * self.stride) as isize + kx as isize - pad;
                            if ix < 0 || ix >= x.w as isize {
                                continue;
                            }
                            let src = ((n * x.h + iy as usize) * x.w + ix as usize) * c;
                            let dst = (ky * self.k + kx) * c;
                            row[dst..dst + c].copy_from_slice(&x.data[src..src + c]);
                        }
                    }
                }
            }
        }
        col
    }

    fn col2im<T: Real>(&self, dcol: &[T], n: usize, h: usize, w: usize) -> Tensor<T> {
        let mut dx = Tensor::zeros(n, h, w, self.cin);
        if self.k == 1 && self.stride == 1 {
            dx.data.copy_from_slice(dcol);
            return dx;
        }
        let (ho, wo) = self.out_hw(h, w);
        let kc = self.fan_in();
        let c = self.cin;
        let pad = (self.k / 2) as isize;
        for b in 0..n {
            for oy in 0..ho {
                for ox in 0..wo {
                    let row = &dcol[((b * ho + oy) * wo + ox) * kc..][..kc];
                    for ky in 0..self.k {
                        let iy = (oy * self.stride) as isize + ky as isize - pad;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..self.k {
                            let ix = (ox * self.stride) as isize + kx as isize - pad;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            let dst = ((b * h + iy as usize) * w + ix as usize) * c;
                            let src = (ky * self.k + kx) * c;
                            for (d, &s) in dx.data[dst..dst + c].iter_mut().zip(&row[src..src + c]) {
                                *d += s;
                            }
                        }
                    }
                }
            }
        }
        dx
    }

    pub fn forward<T: Real>(&self, p: &[T], x: &Tensor<T>) -> (Tensor<T>, ConvCache<T>) {
        debug_assert_eq!(x.c, self.cin);
        let (ho, wo) = self.out_hw(x.h, x.w);
        let col = self.im2col(x);
        let rows = x.n * ho * wo;
        let mut y = Tensor::zeros(x.n, ho, wo, self.cout);
        for row in y.data.chunks_exact_mut(self.cout) {
            row.copy_from_slice(&p[self.b.clone()]);
        }
        let kc = self.fan_in();
        T::gemm(rows, kc, self.cout, T::one(), &col, kc, 1, &p[self.w.clone()], self.cout, 1, T::one(), &mut y.data, self.cout, 1);
        (y, ConvCache { col, in_shape: (x.n, x.h, x.w) })
    }

    pub fn backward<T: Real>(&self, p: &[T], g: &mut [T], cache: &ConvCache<T>, dy: &Tensor<T>) -> Tensor<T> {
        let rows = dy.rows();
        let kc = self.fan_in();
        let co = self.cout;
        T::gemm(kc, rows, co, T::one(), &cache.col, 1, kc, &dy.data, co, 1, T::one(), &mut g[self.w.clone()], co, 1);
        let gb = &mut g[self.b.clone()];
        for row in dy.data.chunks_exact(co) {
            for (b, &d) in gb.iter_mut().zip(row) {
                *b += d;
            }
        }
        let mut dcol = vec![T::zero(); rows * kc];
        T::gemm(rows, co, kc, T::one(), &dy.data, co, 1, &p[self.w.clone()], 1, co, T::zero(), &mut dcol, kc, 1);
        let (n, h, w) = cache.in_shape;
        self.col2im(&dcol, n, h, w)
    }
}

pub const GROUP_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone)]
pub struct GroupNorm {
    pub gamma: Range<usize>,
    pub beta: Range<usize>,
    pub c: usize,
    pub groups: usize,
}

pub struct NormCache<T> {
    xhat: Vec<T>,
    rstd: Vec<T>,
}

impl GroupNorm {
    pub fn new(layout: &mut Layout, name: &str, c: usize, groups: usize) -> Self {
        assert!(c % groups == 0, "{c} channels in {groups} groups");
        let gamma = layout.add(format!("{name}.gamma"), c);
        let beta = layout.add(format!("{name}.beta"), c);
        Self { gamma, beta, c, groups }
    }

    pub fn forward<T: Real>(&self, p: &[T], x: &Tensor<T>) -> (Tensor<T>, NormCache<T>) {
        let (c, cg, groups) = (self.c, self.c / self.groups, self.groups);
        let hw = x.h * x.w;
        let count = T::lit((hw * cg) as f64);
        let eps = T::lit(GROUP_NORM_EPS);
        let mut xhat = vec![T::zero(); x.data.len()];
        let mut rstd = vec![T::zero(); x.n * groups];
        let mut y = vec![T::zero(); x.data.len()];
        let (gamma, beta) = (&p[self.gamma.clone()], &p[self.beta.clone()]);
        let mut mean = vec![T::zero(); groups];
        let mut var = vec![T::zero(); groups];
        for n in 0..x.n {
            let range = n * hw * c..(n + 1) * hw * c;
            let xs = &x.data[range.clone()];
            mean.fill(T::zero());
            var.fill(T::zero());
            for px in xs.chunks_exact(c) {
                for (m, vals) in mean.iter_mut().zip(px.chunks_exact(cg)) {
                    *m += vals.iter().copied().sum::<T>();
                }
            }
            mean.iter_mut().for_each(|m| *m /= count);
            for px in xs.chunks_exact(c) {
                for ((v, vals), &m) in var.iter_mut().zip(px.chunks_exact(cg)).zip(&mean) {
                    *v += vals.iter().map(|&a| (a - m) * (a - m)).sum::<T>();
                }
            }
            let rs = &mut rstd[n * groups..(n + 1) * groups];
            for (r, &v) in rs.iter_mut().zip(&var) {
                *r = T::one() / (v / count + eps).sqrt();
            }
            for ((px, xh), out) in xs.chunks_exact(c).zip(xhat[range.clone()].chunks_exact_mut(c)).zip(y[range].chunks_exact_mut(c)) {
                for gi in 0..groups {
                    let (m, r) = (mean[gi], rs[gi]);
                    for k in gi * cg..(gi + 1) * cg {
                        let v = (px[k] - m) * r;
                        xh[k] = v;
                        out[k] = v * gamma[k] + beta[k];
                    }
                }
            }
        }
        (x.same_shape(y), NormCache { xhat, rstd })
    }

    pub fn backward<T: Real>(&self, p: &[T], g: &mut [T], cache: &NormCache<T>, dy: &Tensor<T>) -> Tensor<T> {
        let (c, cg, groups) = (self.c, self.c / self.groups, self.groups);
        let hw = dy.h * dy.w;
        let count = T::lit((hw * cg) as f64);
        let gamma = &p[self.gamma.clone()];
        let mut dgamma = vec![T::zero(); c];
        let mut dbeta = vec![T::zero(); c];
        let mut dx = vec![T::zero(); dy.data.len()];
        let mut sum_d = vec![T::zero(); groups];
        let mut sum_dx = vec![T::zero(); groups];
        for n in 0..dy.n {
            let range = n * hw * c..(n + 1) * hw * c;
            let (dys, xh) = (&dy.data[range.clone()], &cache.xhat[range.clone()]);
            sum_d.fill(T::zero());
            sum_dx.fill(T::zero());
            for (dp, xp) in dys.chunks_exact(c).zip(xh.chunks_exact(c)) {
                for k in 0..c {
                    dgamma[k] += dp[k] * xp[k];
                    dbeta[k] += dp[k];
                }
                for gi in 0..groups {
                    let (mut sd, mut sx) = (T::zero(), T::zero());
                    for k in gi * cg..(gi + 1) * cg {
                        let d = dp[k] * gamma[k];
                        sd += d;
                        sx += d * xp[k];
                    }
                    sum_d[gi] += sd;
                    sum_dx[gi] += sx;
                }
            }
            let rs = &cache.rstd[n * groups..(n + 1) * groups];
            for ((dp, xp), out) in dys.chunks_exact(c).zip(xh.chunks_exact(c)).zip(dx[range].chunks_exact_mut(c)) {
                for gi in 0..groups {
                    let (a, b, r) = (sum_d[gi] / count, sum_dx[gi] / count, rs[gi]);
                    for k in gi * cg..(gi + 1) * cg {
                        out[k] = r * (dp[k] * gamma[k] - a - xp[k] * b);
                    }
                }
            }
        }
        add_assign(&mut g[self.gamma.clone()], &dgamma);
        add_assign(&mut g[self.beta.clone()], &dbeta);
        dy.same_shape(dx)
    }
}

/// `(n, r h, r w, c) -> (n, h, w, r^2 c)`, channel index `(dy * r + dx) * c + ch`.
pub fn space_to_depth<T: Real>(x: &Tensor<T>, r: usize) -> Tensor<T> {
    let (h, w, c) = (x.h / r, x.w / r, x.c);
    let mut y = Tensor::zeros(x.n, h, w, r * r * c);
    for n in 0..x.n {
        for i in 0..h {
            for j in 0..w {
                let dst = ((n * h + i) * w + j) * r * r * c;
                for dy in 0..r {
                    for dx in 0..r {
                        let src = ((n * x.h + r * i + dy) * x.w + r * j + dx) * c;
                        let o = dst + (dy * r + dx) * c;
                        y.data[o..o + c].copy_from_slice(&x.data[src..src + c]);
                    }
                }
            }
        }
    }
    y
}

/// Inverse of [`space_to_depth`].
pub fn depth_to_space<T: Real>(x: &Tensor<T>, r: usize) -> Tensor<T> {
    let c = x.c / (r * r);
    let (h, w) = (r * x.h, r * x.w);
    let mut y = Tensor::zeros(x.n, h, w, c);
    for n in 0..x.n {
        for i in 0..x.h {
            for j in 0..x.w {
                let src = ((n * x.h + i) * x.w + j) * x.c;
                for dy in 0..r {
                    for dx in 0..r {
                        let dst = ((n * h + r * i + dy) * w + r * j + dx) * c;
                        let o = src + (dy * r + dx) * c;
                        y.data[dst..dst + c].copy_from_slice(&x.data[o..o + c]);
                    }
                }
            }
        }
    }
    y
}

/// Nearest-neighbour 2x upsampling.
pub fn upsample<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    let (h, w, c) = (2 * x.h, 2 * x.w, x.c);
    let mut y = Tensor::zeros(x.n, h, w, c);
    for n in 0..x.n {
        for i in 0..h {
            for j in 0..w {
                let src = ((n * x.h + i / 2) * x.w + j / 2) * c;
                let dst = ((n * h + i) * w + j) * c;
                y.data[dst..dst + c].copy_from_slice(&x.data[src..src + c]);
            }
        }
    }
    y
}

pub fn upsample_backward<T: Real>(dy: &Tensor<T>) -> Tensor<T> {
    let (h, w, c) = (dy.h / 2, dy.w / 2, dy.c);
    let mut dx = Tensor::zeros(dy.n, h, w, c);
    for n in 0..dy.n {
        for i in 0..dy.h {
            for j in 0..dy.w {
                let src = ((n * dy.h + i) * dy.w + j) * c;
                let dst = ((n * h + i / 2) * w + j / 2) * c;
                for k in 0..c {
                    dx.data[dst + k] += dy.data[src + k];
                }
            }
        }
    }
    dx
}

/// Channel concatenation `[a, b]`.
pub fn concat<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let c = a.c + b.c;
    let mut data = Vec::with_capacity(a.rows() * c);
    for (pa, pb) in a.data.chunks_exact(a.c).zip(b.data.chunks_exact(b.c)) {
        data.extend_from_slice(pa);
        data.extend_from_slice(pb);
    }
    Tensor { n: a.n, h: a.h, w: a.w, c, data }
}

pub fn split<T: Real>(x: &Tensor<T>, ca: usize) -> (Tensor<T>, Tensor<T>) {
    let cb = x.c - ca;
    let mut a = Vec::with_capacity(x.rows() * ca);
    let mut b = Vec::with_capacity(x.rows() * cb);
    for px in x.data.chunks_exact(x.c) {
        a.extend_from_slice(&px[..ca]);
        b.extend_from_slice(&px[ca..]);
    }
    (Tensor { n: x.n, h: x.h, w: x.w, c: ca, data: a }, Tensor { n: x.n, h: x.h, w: x.w, c: cb, data: b })
}

pub fn add_assign<T: Real>(a: &mut [T], b: &[T]) {
    for (x, &y) in a.iter_mut().zip(b) {
        *x += y;
    }
}
