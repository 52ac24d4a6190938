use std::fmt::Write as _;

use rand::Rng as _;
use sha2::{Digest, Sha256};

use super::nn::{
    add_assign, concat, depth_to_space, silu, silu_backward, silu_keep, space_to_depth, split, upsample, upsample_backward,
    Conv, ConvCache, GroupNorm, Layout, Linear, NormCache, Tensor,
};
use crate::error::{EitError, Result};
use crate::rng;
use crate::scalar::Real;

/// Widths of the two-level encoder-decoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DenoiserArch {
    pub side: usize,
    /// Pixel-unshuffle factor applied before the first convolution.
    pub patch: usize,
    pub channels: (usize, usize),
    pub groups: usize,
    /// Sinusoidal embedding width.
    pub time_dim: usize,
    /// Hidden width of the time MLP.
    pub embed_dim: usize,
}

impl DenoiserArch {
    pub fn desk(side: usize) -> Self {
        Self { side, patch: 4, channels: (32, 64), groups: 8, time_dim: 64, embed_dim: 128 }
    }

    pub fn validate(&self) -> Result<()> {
        let (c1, c2) = self.channels;
        if self.patch == 0 || self.side == 0 || self.side % (2 * self.patch) != 0 {
            return Err(EitError::Shape(format!(
                "image side {} must be a positive multiple of {}",
                self.side,
                2 * self.patch
            )));
        }
        if self.groups == 0 || c1 % self.groups != 0 || c2 % self.groups != 0 {
            return Err(EitError::Shape(format!("channels ({c1}, {c2}) not divisible into {} groups", self.groups)));
        }
        if self.time_dim < 2 || self.time_dim % 2 != 0 || self.embed_dim == 0 {
            return Err(EitError::Shape(format!("invalid embedding widths {} / {}", self.time_dim, self.embed_dim)));
        }
        Ok(())
    }

    pub fn describe(&self) -> String {
        format!(
            "unet2 side={} patch={} c1={} c2={} groups={} time={} embed={}",
            self.side, self.patch, self.channels.0, self.channels.1, self.groups, self.time_dim, self.embed_dim
        )
    }

    /// Short digest identifying the architecture in checkpoints.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.describe().as_bytes());
        let mut s = String::new();
        for b in &digest[..8] {
            let _ = write!(s, "{b:02x}");
        }
        s
    }
}

#[derive(Debug, Clone)]
struct ResBlock {
    gn1: GroupNorm,
    conv1: Conv,
    temb: Linear,
    gn2: GroupNorm,
    conv2: Conv,
    skip: Option<Conv>,
}

struct ResCache<T> {
    n1: NormCache<T>,
    g1: Vec<T>,
    c1: ConvCache<T>,
    n2: NormCache<T>,
    g2: Vec<T>,
    c2: ConvCache<T>,
    skip: Option<ConvCache<T>>,
}

impl ResBlock {
    fn new(layout: &mut Layout, name: &str, cin: usize, cout: usize, groups: usize, embed: usize) -> Self {
        Self {
            gn1: GroupNorm::new(layout, &format!("{name}.norm1"), cin, groups),
            conv1: Conv::new(layout, &format!("{name}.conv1"), cin, cout, 3, 1),
            temb: Linear::new(layout, &format!("{name}.time"), embed, cout),
            gn2: GroupNorm::new(layout, &format!("{name}.norm2"), cout, groups),
            conv2: Conv::new(layout, &format!("{name}.conv2"), cout, cout, 3, 1),
            skip: (cin != cout).then(|| Conv::new(layout, &format!("{name}.skip"), cin, cout, 1, 1)),
        }
    }

    fn forward<T: Real>(&self, p: &[T], x: &Tensor<T>, emb: &[T]) -> (Tensor<T>, ResCache<T>) {
        let (g1, n1) = self.gn1.forward(p, x);
        let (a1, g1) = silu_keep(g1);
        let (mut h, c1) = self.conv1.forward(p, &a1);
        let tb = self.temb.forward(p, emb, x.n);
        let cout = h.c;
        let hw = h.h * h.w;
        for (n, bias) in tb.chunks_exact(cout).enumerate() {
            for px in h.data[n * hw * cout..(n + 1) * hw * cout].chunks_exact_mut(cout) {
                add_assign(px, bias);
            }
        }
        let (g2, n2) = self.gn2.forward(p, &h);
        let (a2, g2) = silu_keep(g2);
        let (mut out, c2) = self.conv2.forward(p, &a2);
        let skip = match &self.skip {
            Some(conv) => {
                let (s, sc) = conv.forward(p, x);
                add_assign(&mut out.data, &s.data);
                Some(sc)
            }
            None => {
                add_assign(&mut out.data, &x.data);
                None
            }
        };
        (out, ResCache { n1, g1, c1, n2, g2, c2, skip })
    }

    fn backward<T: Real>(
        &self,
        p: &[T],
        g: &mut [T],
        cache: &ResCache<T>,
        dout: &Tensor<T>,
        emb: &[T],
        demb: &mut [T],
    ) -> Tensor<T> {
        let da2 = self.conv2.backward(p, g, &cache.c2, dout);
        let dg2 = Tensor { data: silu_backward(&cache.g2, &da2.data), ..da2 };
        let dh = self.gn2.backward(p, g, &cache.n2, &dg2);
        let cout = dh.c;
        let hw = dh.h * dh.w;
        let mut dtb = vec![T::zero(); dh.n * cout];
        for (n, acc) in dtb.chunks_exact_mut(cout).enumerate() {
            for px in dh.data[n * hw * cout..(n + 1) * hw * cout].chunks_exact(cout) {
                add_assign(acc, px);
            }
        }
        let de = self.temb.backward(p, g, emb, &dtb, dh.n);
        add_assign(demb, &de);
        let da1 = self.conv1.backward(p, g, &cache.c1, &dh);
        let dg1 = Tensor { data: silu_backward(&cache.g1, &da1.data), ..da1 };
        let mut dx = self.gn1.backward(p, g, &cache.n1, &dg1);
        match (&self.skip, &cache.skip) {
            (Some(conv), Some(sc)) => {
                let ds = conv.backward(p, g, sc, dout);
                add_assign(&mut dx.data, &ds.data);
            }
            _ => add_assign(&mut dx.data, &dout.data),
        }
        dx
    }
}

#[derive(Debug, Clone)]
struct Net {
    time1: Linear,
    time2: Linear,
    conv_in: Conv,
    enc: ResBlock,
    down: Conv,
    mid1: ResBlock,
    mid2: ResBlock,
    up: Conv,
    dec: ResBlock,
    norm_out: GroupNorm,
    conv_out: Conv,
}

impl Net {
    fn new(arch: &DenoiserArch, layout: &mut Layout) -> Self {
        let (c1, c2) = arch.channels;
        let (g, e) = (arch.groups, arch.embed_dim);
        Self {
            time1: Linear::new(layout, "time.fc1", arch.time_dim, e),
            time2: Linear::new(layout, "time.fc2", e, e),
            conv_in: Conv::new(layout, "conv_in", arch.patch * arch.patch, c1, 3, 1),
            enc: ResBlock::new(layout, "enc", c1, c1, g, e),
            down: Conv::new(layout, "down", c1, c2, 3, 2),
            mid1: ResBlock::new(layout, "mid1", c2, c2, g, e),
            mid2: ResBlock::new(layout, "mid2", c2, c2, g, e),
            up: Conv::new(layout, "up", c2, c1, 3, 1),
            dec: ResBlock::new(layout, "dec", 2 * c1, c1, g, e),
            norm_out: GroupNorm::new(layout, "norm_out", c1, g),
            conv_out: Conv::new(layout, "conv_out", c1, arch.patch * arch.patch, 3, 1),
        }
    }
}

/// Everything the reverse pass needs from one forward pass.
pub struct DenoiserCache<T> {
    n: usize,
    e0: Vec<T>,
    e1: Vec<T>,
    s1: Vec<T>,
    e2: Vec<T>,
    emb: Vec<T>,
    conv_in: ConvCache<T>,
    enc: ResCache<T>,
    down: ConvCache<T>,
    mid1: ResCache<T>,
    mid2: ResCache<T>,
    up: ConvCache<T>,
    dec: ResCache<T>,
    norm_out: NormCache<T>,
    g_out: Vec<T>,
    conv_out: ConvCache<T>,
}

/// Noise-prediction network `eps(x_t, t)` on square single-channel images.
///
/// Frozen denoisers reject parameter updates.
#[derive(Debug, Clone)]
pub struct Denoiser<T> {
    arch: DenoiserArch,
    layout: Layout,
    net: Net,
    params: Vec<T>,
    frozen: bool,
}

/// `[sin(t f_i), cos(t f_i)]` with `f_i = 10000^(-i / half)`.
pub fn time_embedding<T: Real>(t: &[usize], dim: usize) -> Vec<T> {
    let half = dim / 2;
    let mut out = Vec::with_capacity(t.len() * dim);
    for &step in t {
        let tf = step as f64;
        for i in 0..half {
            let f = (-(10000f64).ln() * i as f64 / half as f64).exp();
            out.push(T::lit((tf * f).sin()));
        }
        for i in 0..half {
            let f = (-(10000f64).ln() * i as f64 / half as f64).exp();
            out.push(T::lit((tf * f).cos()));
        }
    }
    out
}

impl<T: Real> Denoiser<T> {
    /// Fresh weights from `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`, zero biases,
    /// unit norm gains and a zero output convolution.
    pub fn new(arch: DenoiserArch, seed: u64) -> Result<Self> {
        let mut model = Self::zeros(arch)?;
        let mut rng = rng::derive(seed, rng::stream::DENOISER_INIT, 0);
        let net = model.net.clone();
        let linears = [&net.time1, &net.time2, &net.enc.temb, &net.mid1.temb, &net.mid2.temb, &net.dec.temb];
        let mut convs = vec![&net.conv_in, &net.down, &net.up];
        let mut norms = vec![&net.norm_out];
        for block in [&net.enc, &net.mid1, &net.mid2, &net.dec] {
            convs.extend([&block.conv1, &block.conv2]);
            convs.extend(block.skip.as_ref());
            norms.extend([&block.gn1, &block.gn2]);
        }
        let p = &mut model.params;
        for lin in linears {
            let bound = 1.0 / (lin.fan_in as f64).sqrt();
            p[lin.w.clone()].iter_mut().for_each(|v| *v = T::lit(rng.gen_range(-bound..bound)));
        }
        for conv in convs {
            let bound = 1.0 / (conv.fan_in() as f64).sqrt();
            p[conv.w.clone()].iter_mut().for_each(|v| *v = T::lit(rng.gen_range(-bound..bound)));
        }
        for norm in norms {
            p[norm.gamma.clone()].iter_mut().for_each(|v| *v = T::one());
        }
        Ok(model)
    }

    pub fn zeros(arch: DenoiserArch) -> Result<Self> {
        arch.validate()?;
        let mut layout = Layout::default();
        let net = Net::new(&arch, &mut layout);
        let params = vec![T::zero(); layout.total];
        Ok(Self { arch, layout, net, params, frozen: false })
    }

    pub fn arch(&self) -> &DenoiserArch {
        &self.arch
    }

    pub fn side(&self) -> usize {
        self.arch.side
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    /// SHA-256 of the weights as little-endian `f64`, hex encoded.
    pub fn checksum(&self) -> String {
        let mut hasher = Sha256::new();
        for p in &self.params {
            hasher.update(p.to_f64_lossy().to_le_bytes());
        }
        hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Named parameter blocks in declaration order.
    pub fn blocks(&self) -> impl Iterator<Item = (&str, &[T])> {
        self.layout.blocks.iter().map(|(name, r)| (name.as_str(), &self.params[r.clone()]))
    }

    pub fn block_names(&self) -> impl Iterator<Item = (&str, usize)> {
        self.layout.blocks.iter().map(|(name, r)| (name.as_str(), r.len()))
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn params_mut(&mut self) -> Result<&mut [T]> {
        if self.frozen {
            return Err(EitError::Validation("denoiser is frozen".into()));
        }
        Ok(&mut self.params)
    }

    /// Writes a named block (used when loading checkpoints).
    pub fn set_block(&mut self, name: &str, values: &[T]) -> Result<()> {
        let range = self
            .layout
            .blocks
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, r)| r.clone())
            .ok_or_else(|| EitError::Shape(format!("no parameter block named {name:?}")))?;
        if range.len() != values.len() {
            return Err(EitError::Shape(format!("block {name} has {} values, got {}", range.len(), values.len())));
        }
        self.params_mut()?[range].copy_from_slice(values);
        Ok(())
    }

    /// Converts parameters to another scalar type.
    pub fn cast<U: Real>(&self) -> Denoiser<U> {
        Denoiser {
            arch: self.arch,
            layout: self.layout.clone(),
            net: self.net.clone(),
            params: self.params.iter().map(|v| U::lit(v.to_f64_lossy())).collect(),
            frozen: self.frozen,
        }
    }

    fn check_batch(&self, x: &[T], t: &[usize]) -> Result<usize> {
        let px = self.arch.side * self.arch.side;
        if t.is_empty() || x.len() != t.len() * px {
            return Err(EitError::Shape(format!(
                "{} values for {} images of side {}",
                x.len(),
                t.len(),
                self.arch.side
            )));
        }
        Ok(t.len())
    }

    /// Batched forward pass; `x` holds `t.len()` images back to back.
    pub fn forward(&self, x: &[T], t: &[usize]) -> Result<(Vec<T>, DenoiserCache<T>)> {
        let n = self.check_batch(x, t)?;
        let (p, net, s) = (&self.params[..], &self.net, self.arch.side);
        let input = Tensor { n, h: s, w: s, c: 1, data: x.to_vec() };
        let e0 = time_embedding(t, self.arch.time_dim);
        let e1 = net.time1.forward(p, &e0, n);
        let s1: Vec<T> = e1.iter().map(|&v| silu(v)).collect();
        let e2 = net.time2.forward(p, &s1, n);
        let emb: Vec<T> = e2.iter().map(|&v| silu(v)).collect();

        let xs = space_to_depth(&input, self.arch.patch);
        let (h0, conv_in) = net.conv_in.forward(p, &xs);
        let (h1, enc) = net.enc.forward(p, &h0, &emb);
        let (d, down) = net.down.forward(p, &h1);
        let (h2, mid1) = net.mid1.forward(p, &d, &emb);
        let (h3, mid2) = net.mid2.forward(p, &h2, &emb);
        let (u, up) = net.up.forward(p, &upsample(&h3));
        let (h4, dec) = net.dec.forward(p, &concat(&u, &h1), &emb);
        let (g, norm_out) = net.norm_out.forward(p, &h4);
        let (a, g_out) = silu_keep(g);
        let (o, conv_out) = net.conv_out.forward(p, &a);
        let y = depth_to_space(&o, self.arch.patch);
        let cache = DenoiserCache {
            n,
            e0,
            e1,
            s1,
            e2,
            emb,
            conv_in,
            enc,
            down,
            mid1,
            mid2,
            up,
            dec,
            norm_out,
            g_out,
            conv_out,
        };
        Ok((y.data, cache))
    }

    /// Gradient of `dy . forward(x, t)` with respect to all parameters.
    pub fn backward(&self, cache: &DenoiserCache<T>, dy: &[T]) -> Result<Vec<T>> {
        let (p, net, s, n) = (&self.params[..], &self.net, self.arch.side, cache.n);
        if dy.len() != n * s * s {
            return Err(EitError::Shape(format!("upstream has {} values for {n} images", dy.len())));
        }
        let c1 = self.arch.channels.0;
        let mut g = vec![T::zero(); self.params.len()];
        let mut demb = vec![T::zero(); n * self.arch.embed_dim];
        let dy = space_to_depth(&Tensor { n, h: s, w: s, c: 1, data: dy.to_vec() }, self.arch.patch);
        let da = net.conv_out.backward(p, &mut g, &cache.conv_out, &dy);
        let dgo = Tensor { data: silu_backward(&cache.g_out, &da.data), ..da };
        let dh4 = net.norm_out.backward(p, &mut g, &cache.norm_out, &dgo);
        let dcat = net.dec.backward(p, &mut g, &cache.dec, &dh4, &cache.emb, &mut demb);
        let (du, dh1_skip) = split(&dcat, c1);
        let dh3 = upsample_backward(&net.up.backward(p, &mut g, &cache.up, &du));
        let dh2 = net.mid2.backward(p, &mut g, &cache.mid2, &dh3, &cache.emb, &mut demb);
        let dd = net.mid1.backward(p, &mut g, &cache.mid1, &dh2, &cache.emb, &mut demb);
        let mut dh1 = net.down.backward(p, &mut g, &cache.down, &dd);
        add_assign(&mut dh1.data, &dh1_skip.data);
        let dh0 = net.enc.backward(p, &mut g, &cache.enc, &dh1, &cache.emb, &mut demb);
        net.conv_in.backward(p, &mut g, &cache.conv_in, &dh0);
        let de2 = silu_backward(&cache.e2, &demb);
        let ds1 = net.time2.backward(p, &mut g, &cache.s1, &de2, n);
        let de1 = silu_backward(&cache.e1, &ds1);
        net.time1.backward(p, &mut g, &cache.e0, &de1, n);
        Ok(g)
    }

    /// `eps_hat(x_t, t)` for one image.
    pub fn predict_noise(&self, x_t: &[T], t: usize) -> Result<Vec<T>> {
        Ok(self.forward(x_t, &[t])?.0)
    }

    pub fn predict_noise_batch(&self, x_t: &[T], t: &[usize]) -> Result<Vec<T>> {
        Ok(self.forward(x_t, t)?.0)
    }
}
