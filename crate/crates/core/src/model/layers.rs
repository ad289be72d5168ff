//! Transformer building blocks with hand-written backward passes.
//!
//! Every `forward` returns its output together with the cache its `backward`
//! needs. Backward passes accumulate parameter gradients into a `ParamSet`
//! laid out exactly like the parameters and return the input gradient.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;

use super::params::{Init, ParamSet};
use super::Real;

const LN_EPS: f64 = 1e-6;
const INIT_STD: f64 = 0.02;

/// `y = x W + b` with `W` stored as (in, out).
#[derive(Clone, Debug)]
pub(crate) struct Linear {
    pub w: usize,
    pub b: usize,
}

impl Linear {
    pub fn new<F: Real>(
        p: &mut ParamSet<F>,
        name: &str,
        din: usize,
        dout: usize,
        rng: &mut impl Rng,
    ) -> Self {
        Self {
            w: p.add(format!("{name}.weight"), vec![din, dout], Init::Normal(INIT_STD), rng),
            b: p.add(format!("{name}.bias"), vec![dout], Init::Zeros, rng),
        }
    }

    pub fn forward<F: Real>(&self, p: &ParamSet<F>, x: ArrayView2<F>) -> Array2<F> {
        let mut y = x.dot(&p.mat(self.w));
        y += &p.vec(self.b);
        y
    }

    /// Accumulates dW, db; returns dx when `want_input` is set.
    pub fn backward<F: Real>(
        &self,
        p: &ParamSet<F>,
        g: &mut ParamSet<F>,
        x: ArrayView2<F>,
        dy: ArrayView2<F>,
        want_input: bool,
    ) -> Option<Array2<F>> {
        general_mat_mul(F::one(), &x.t(), &dy, F::one(), &mut g.mat_mut(self.w));
        let mut db = g.vec_mut(self.b);
        db += &dy.sum_axis(Axis(0));
        want_input.then(|| dy.dot(&p.mat(self.w).t()))
    }
}

#[derive(Clone, Debug)]
pub(crate) struct LayerNorm {
    pub gamma: usize,
    pub beta: usize,
}

pub(crate) struct LnCache<F> {
    xhat: Array2<F>,
    rstd: Array1<F>,
}

impl LayerNorm {
    pub fn new<F: Real>(p: &mut ParamSet<F>, name: &str, d: usize, rng: &mut impl Rng) -> Self {
        Self {
            gamma: p.add(format!("{name}.weight"), vec![d], Init::Ones, rng),
            beta: p.add(format!("{name}.bias"), vec![d], Init::Zeros, rng),
        }
    }

    pub fn forward<F: Real>(&self, p: &ParamSet<F>, x: ArrayView2<F>) -> (Array2<F>, LnCache<F>) {
        let d = F::c(x.ncols() as f64);
        let eps = F::c(LN_EPS);
        let mut xhat = x.to_owned();
        let mut rstd = Array1::zeros(x.nrows());
        for (mut row, r) in xhat.rows_mut().into_iter().zip(rstd.iter_mut()) {
            let mean = row.sum() / d;
            row.mapv_inplace(|v| v - mean);
            let var = row.iter().map(|v| *v * *v).sum::<F>() / d;
            *r = F::one() / (var + eps).sqrt();
            let k = *r;
            row.mapv_inplace(|v| v * k);
        }
        let mut y = &xhat * &p.vec(self.gamma);
        y += &p.vec(self.beta);
        (y, LnCache { xhat, rstd })
    }

    pub fn backward<F: Real>(
        &self,
        p: &ParamSet<F>,
        g: &mut ParamSet<F>,
        cache: &LnCache<F>,
        dy: ArrayView2<F>,
    ) -> Array2<F> {
        {
            let mut dg = g.vec_mut(self.gamma);
            dg += &(&dy * &cache.xhat).sum_axis(Axis(0));
        }
        {
            let mut db = g.vec_mut(self.beta);
            db += &dy.sum_axis(Axis(0));
        }
        let d = F::c(dy.ncols() as f64);
        let dxhat = &dy * &p.vec(self.gamma);
        let mut dx = Array2::zeros(dy.raw_dim());
        for (((mut out, dh), xh), r) in dx
            .rows_mut()
            .into_iter()
            .zip(dxhat.rows())
            .zip(cache.xhat.rows())
            .zip(cache.rstd.iter())
        {
            let mean_dh = dh.sum() / d;
            let mean_dh_xh = dh.iter().zip(xh.iter()).map(|(a, b)| *a * *b).sum::<F>() / d;
            Zip::from(&mut out)
                .and(&dh)
                .and(&xh)
                .for_each(|o, &a, &b| *o = *r * (a - mean_dh - b * mean_dh_xh));
        }
        dx
    }
}

const GELU_K: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_C: f64 = 0.044_715;

fn gelu<F: Real>(x: F) -> F {
    let (k, c, half) = (F::c(GELU_K), F::c(GELU_C), F::c(0.5));
    half * x * (F::one() + (k * (x + c * x * x * x)).tanh())
}

fn gelu_grad<F: Real>(x: F) -> F {
    let (k, c, half) = (F::c(GELU_K), F::c(GELU_C), F::c(0.5));
    let t = (k * (x + c * x * x * x)).tanh();
    half * (F::one() + t) + half * x * (F::one() - t * t) * k * (F::one() + F::c(3.0) * c * x * x)
}

/// Two linear layers with a GELU between them.
#[derive(Clone, Debug)]
pub(crate) struct Mlp {
    pub fc1: Linear,
    pub fc2: Linear,
}

pub(crate) struct MlpCache<F> {
    x: Array2<F>,
    pre: Array2<F>,
    act: Array2<F>,
}

impl Mlp {
    pub fn new<F: Real>(
        p: &mut ParamSet<F>,
        name: &str,
        din: usize,
        hidden: usize,
        dout: usize,
        rng: &mut impl Rng,
    ) -> Self {
        Self {
            fc1: Linear::new(p, &format!("{name}.fc1"), din, hidden, rng),
            fc2: Linear::new(p, &format!("{name}.fc2"), hidden, dout, rng),
        }
    }

    pub fn forward<F: Real>(&self, p: &ParamSet<F>, x: ArrayView2<F>) -> (Array2<F>, MlpCache<F>) {
        let pre = self.fc1.forward(p, x);
        let act = pre.mapv(gelu);
        let y = self.fc2.forward(p, act.view());
        (
            y,
            MlpCache {
                x: x.to_owned(),
                pre,
                act,
            },
        )
    }

    pub fn backward<F: Real>(
        &self,
        p: &ParamSet<F>,
        g: &mut ParamSet<F>,
        cache: &MlpCache<F>,
        dy: ArrayView2<F>,
    ) -> Array2<F> {
        let mut dact = self
            .fc2
            .backward(p, g, cache.act.view(), dy, true)
            .expect("input grad");
        Zip::from(&mut dact)
            .and(&cache.pre)
            .for_each(|d, &x| *d = *d * gelu_grad(x));
        self.fc1
            .backward(p, g, cache.x.view(), dact.view(), true)
            .expect("input grad")
    }
}

/// Multi-head scaled dot-product attention. Queries come from one token
/// set, keys and values from another (the same one for self-attention).
#[derive(Clone, Debug)]
pub(crate) struct Attention {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
    pub heads: usize,
}

pub(crate) struct AttnCache<F> {
    xq: Array2<F>,
    xkv: Array2<F>,
    q: Array2<F>,
    k: Array2<F>,
    v: Array2<F>,
    /// Row-stochastic attention matrix per head, (n_query × n_key).
    pub probs: Vec<Array2<F>>,
    ctx: Array2<F>,
}

/// Row softmax accumulated in f64 so rows sum to one at f32 precision.
fn softmax_rows<F: Real>(m: &mut Array2<F>) {
    let mut buf = Vec::new();
    for mut row in m.rows_mut() {
        let max = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b.as_f64()));
        buf.clear();
        buf.extend(row.iter().map(|v| (v.as_f64() - max).exp()));
        let sum: f64 = buf.iter().sum();
        for (o, e) in row.iter_mut().zip(&buf) {
            *o = F::c(e / sum);
        }
    }
}

impl Attention {
    pub fn new<F: Real>(
        p: &mut ParamSet<F>,
        name: &str,
        d: usize,
        heads: usize,
        rng: &mut impl Rng,
    ) -> Self {
        Self {
            q: Linear::new(p, &format!("{name}.q"), d, d, rng),
            k: Linear::new(p, &format!("{name}.k"), d, d, rng),
            v: Linear::new(p, &format!("{name}.v"), d, d, rng),
            o: Linear::new(p, &format!("{name}.o"), d, d, rng),
            heads,
        }
    }

    pub fn forward<F: Real>(
        &self,
        p: &ParamSet<F>,
        xq: ArrayView2<F>,
        xkv: ArrayView2<F>,
    ) -> (Array2<F>, AttnCache<F>) {
        let q = self.q.forward(p, xq);
        let k = self.k.forward(p, xkv);
        let v = self.v.forward(p, xkv);
        let d = q.ncols();
        let dh = d / self.heads;
        let scale = F::one() / F::c(dh as f64).sqrt();
        let mut ctx = Array2::zeros((q.nrows(), d));
        let mut probs = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let cols = s![.., h * dh..(h + 1) * dh];
            let mut scores = q.slice(cols).dot(&k.slice(cols).t());
            scores.mapv_inplace(|x| x * scale);
            softmax_rows(&mut scores);
            general_mat_mul(
                F::one(),
                &scores,
                &v.slice(cols),
                F::zero(),
                &mut ctx.slice_mut(cols),
            );
            probs.push(scores);
        }
        let y = self.o.forward(p, ctx.view());
        (
            y,
            AttnCache {
                xq: xq.to_owned(),
                xkv: xkv.to_owned(),
                q,
                k,
                v,
                probs,
                ctx,
            },
        )
    }

    /// Returns (d xq, d xkv).
    pub fn backward<F: Real>(
        &self,
        p: &ParamSet<F>,
        g: &mut ParamSet<F>,
        cache: &AttnCache<F>,
        dy: ArrayView2<F>,
    ) -> (Array2<F>, Array2<F>) {
        let dctx = self
            .o
            .backward(p, g, cache.ctx.view(), dy, true)
            .expect("input grad");
        let d = cache.q.ncols();
        let dh = d / self.heads;
        let scale = F::one() / F::c(dh as f64).sqrt();
        let mut dq = Array2::zeros(cache.q.raw_dim());
        let mut dk = Array2::zeros(cache.k.raw_dim());
        let mut dv = Array2::zeros(cache.v.raw_dim());
        for (h, a) in cache.probs.iter().enumerate() {
            let cols = s![.., h * dh..(h + 1) * dh];
            let dctx_h = dctx.slice(cols);
            general_mat_mul(F::one(), &a.t(), &dctx_h, F::zero(), &mut dv.slice_mut(cols));
            let mut ds = dctx_h.dot(&cache.v.slice(cols).t());
            for (mut row, arow) in ds.rows_mut().into_iter().zip(a.rows()) {
                let dot = row.iter().zip(arow.iter()).map(|(x, y)| *x * *y).sum::<F>();
                Zip::from(&mut row)
                    .and(&arow)
                    .for_each(|x, &pa| *x = pa * (*x - dot) * scale);
            }
            general_mat_mul(
                F::one(),
                &ds,
                &cache.k.slice(cols),
                F::zero(),
                &mut dq.slice_mut(cols),
            );
            general_mat_mul(
                F::one(),
                &ds.t(),
                &cache.q.slice(cols),
                F::zero(),
                &mut dk.slice_mut(cols),
            );
        }
        let dxq = self
            .q
            .backward(p, g, cache.xq.view(), dq.view(), true)
            .expect("input grad");
        let mut dxkv = self
            .k
            .backward(p, g, cache.xkv.view(), dk.view(), true)
            .expect("input grad");
        dxkv += &self
            .v
            .backward(p, g, cache.xkv.view(), dv.view(), true)
            .expect("input grad");
        (dxq, dxkv)
    }
}

/// Pre-norm self-attention block used by the patch encoder.
#[derive(Clone, Debug)]
pub(crate) struct EncoderBlock {
    ln1: LayerNorm,
    attn: Attention,
    ln2: LayerNorm,
    mlp: Mlp,
}

pub(crate) struct EncoderBlockCache<F> {
    ln1: LnCache<F>,
    attn: AttnCache<F>,
    ln2: LnCache<F>,
    mlp: MlpCache<F>,
}

impl EncoderBlock {
    pub fn new<F: Real>(
        p: &mut ParamSet<F>,
        name: &str,
        d: usize,
        heads: usize,
        hidden: usize,
        rng: &mut impl Rng,
    ) -> Self {
        Self {
            ln1: LayerNorm::new(p, &format!("{name}.ln1"), d, rng),
            attn: Attention::new(p, &format!("{name}.attn"), d, heads, rng),
            ln2: LayerNorm::new(p, &format!("{name}.ln2"), d, rng),
            mlp: Mlp::new(p, &format!("{name}.mlp"), d, hidden, d, rng),
        }
    }

    pub fn forward<F: Real>(
        &self,
        p: &ParamSet<F>,
        x: Array2<F>,
    ) -> (Array2<F>, EncoderBlockCache<F>) {
        let (h, ln1) = self.ln1.forward(p, x.view());
        let (a, attn) = self.attn.forward(p, h.view(), h.view());
        let x = x + &a;
        let (h, ln2) = self.ln2.forward(p, x.view());
        let (m, mlp) = self.mlp.forward(p, h.view());
        (
            x + &m,
            EncoderBlockCache {
                ln1,
                attn,
                ln2,
                mlp,
            },
        )
    }

    pub fn backward<F: Real>(
        &self,
        p: &ParamSet<F>,
        g: &mut ParamSet<F>,
        c: &EncoderBlockCache<F>,
        dy: Array2<F>,
    ) -> Array2<F> {
        let dh = self.mlp.backward(p, g, &c.mlp, dy.view());
        let dx = dy + &self.ln2.backward(p, g, &c.ln2, dh.view());
        let (dq, dkv) = self.attn.backward(p, g, &c.attn, dx.view());
        let dh = dq + &dkv;
        dx + &self.ln1.backward(p, g, &c.ln1, dh.view())
    }
}

/// Pre-norm transformer decoder layer: self-attention over the query tokens,
/// cross-attention into the reference memory, feed-forward.
#[derive(Clone, Debug)]
pub(crate) struct DecoderLayer {
    ln1: LayerNorm,
    self_attn: Attention,
    ln2: LayerNorm,
    cross_attn: Attention,
    ln3: LayerNorm,
    mlp: Mlp,
}

pub(crate) struct DecoderLayerCache<F> {
    ln1: LnCache<F>,
    self_attn: AttnCache<F>,
    ln2: LnCache<F>,
    pub cross_attn: AttnCache<F>,
    ln3: LnCache<F>,
    mlp: MlpCache<F>,
}

impl DecoderLayer {
    pub fn new<F: Real>(
        p: &mut ParamSet<F>,
        name: &str,
        d: usize,
        heads: usize,
        hidden: usize,
        rng: &mut impl Rng,
    ) -> Self {
        Self {
            ln1: LayerNorm::new(p, &format!("{name}.ln1"), d, rng),
            self_attn: Attention::new(p, &format!("{name}.self_attn"), d, heads, rng),
            ln2: LayerNorm::new(p, &format!("{name}.ln2"), d, rng),
            cross_attn: Attention::new(p, &format!("{name}.cross_attn"), d, heads, rng),
            ln3: LayerNorm::new(p, &format!("{name}.ln3"), d, rng),
            mlp: Mlp::new(p, &format!("{name}.mlp"), d, hidden, d, rng),
        }
    }

    pub fn forward<F: Real>(
        &self,
        p: &ParamSet<F>,
        x: Array2<F>,
        memory: ArrayView2<F>,
    ) -> (Array2<F>, DecoderLayerCache<F>) {
        let (h, ln1) = self.ln1.forward(p, x.view());
        let (a, self_attn) = self.self_attn.forward(p, h.view(), h.view());
        let x = x + &a;
        let (h, ln2) = self.ln2.forward(p, x.view());
        let (a, cross_attn) = self.cross_attn.forward(p, h.view(), memory);
        let x = x + &a;
        let (h, ln3) = self.ln3.forward(p, x.view());
        let (m, mlp) = self.mlp.forward(p, h.view());
        (
            x + &m,
            DecoderLayerCache {
                ln1,
                self_attn,
                ln2,
                cross_attn,
                ln3,
                mlp,
            },
        )
    }

    /// Returns (d x, d memory).
    pub fn backward<F: Real>(
        &self,
        p: &ParamSet<F>,
        g: &mut ParamSet<F>,
        c: &DecoderLayerCache<F>,
        dy: Array2<F>,
    ) -> (Array2<F>, Array2<F>) {
        let dh = self.mlp.backward(p, g, &c.mlp, dy.view());
        let dx = dy + &self.ln3.backward(p, g, &c.ln3, dh.view());
        let (dq, dmem) = self.cross_attn.backward(p, g, &c.cross_attn, dx.view());
        let dx = dx + &self.ln2.backward(p, g, &c.ln2, dq.view());
        let (dq, dkv) = self.self_attn.backward(p, g, &c.self_attn, dx.view());
        let dh = dq + &dkv;
        (dx + &self.ln1.backward(p, g, &c.ln1, dh.view()), dmem)
    }
}
