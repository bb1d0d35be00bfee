//! Seven-layer recurrent network with a Gaussian head.
//!
//! Parameters live in one flat vector in file order. A recurrent block is
//! laid out as the input matrices of the input, forget, cell and output
//! gates (each `output × input`, row-major), then the recurrent matrices in
//! the same gate order (`output × output`), then the four bias vectors. An
//! affine block is its `output × input` matrix followed by its bias.
//!
//! Recurrent layers use sigmoid gates with a ReLU cell activation:
//!
//! ```text
//! i = σ(W_i x + U_i h + b_i)    f = σ(W_f x + U_f h + b_f)
//! g = relu(W_c x + U_c h + b_c) o = σ(W_o x + U_o h + b_o)
//! c' = f ⊙ c + i ⊙ g            h' = o ⊙ relu(c')
//! ```
//!
//! Every layer but the last applies ReLU; the last is linear. Layers up to
//! the final recurrent layer run once per window row; the final recurrent
//! layer emits only its last hidden state.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    inverse_softplus, sigmoid, softplus, AccelerationDistribution, ModelError, PairStateSequence, ROW_WIDTH,
    SIGMA_FLOOR, WINDOW_LEN,
};
use crate::geometry::Vec2;

pub const INPUT_WIDTH: usize = ROW_WIDTH;
/// Raw head outputs `(m_x, s_x, m_y, s_y)`.
pub const HEAD_WIDTH: usize = 4;
/// Default width of every hidden layer.
pub const DEFAULT_HIDDEN: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerKind {
    Recurrent,
    Affine,
}

pub const ARCHITECTURE: [LayerKind; 7] = [
    LayerKind::Recurrent,
    LayerKind::Affine,
    LayerKind::Affine,
    LayerKind::Recurrent,
    LayerKind::Affine,
    LayerKind::Affine,
    LayerKind::Affine,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerShape {
    pub kind: LayerKind,
    pub input: usize,
    pub output: usize,
}

impl LayerShape {
    pub fn param_count(&self) -> usize {
        match self.kind {
            LayerKind::Recurrent => 4 * self.output * (self.input + self.output + 1),
            LayerKind::Affine => self.output * (self.input + 1),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkWeights {
    layers: Vec<LayerShape>,
    offsets: Vec<usize>,
    params: Vec<f64>,
}

impl NetworkWeights {
    /// Validates the layer stack against [`ARCHITECTURE`] and the parameter
    /// count against the shapes.
    pub fn new(layers: Vec<LayerShape>, params: Vec<f64>) -> Result<Self, ModelError> {
        validate_layers(&layers)?;
        let mut offsets = Vec::with_capacity(layers.len());
        let mut total = 0;
        for l in &layers {
            offsets.push(total);
            total += l.param_count();
        }
        if params.len() != total {
            return Err(ModelError::DimensionMismatch {
                layer: layers.len(),
                what: "parameters in total",
                expected: total,
                actual: params.len(),
            });
        }
        Ok(Self {
            layers,
            offsets,
            params,
        })
    }

    /// Layer shapes for the given hidden widths (outputs of layers 1–6).
    pub fn shapes(hidden: [usize; 6]) -> Vec<LayerShape> {
        let mut input = INPUT_WIDTH;
        ARCHITECTURE
            .iter()
            .enumerate()
            .map(|(k, &kind)| {
                let output = if k < 6 { hidden[k] } else { HEAD_WIDTH };
                let s = LayerShape { kind, input, output };
                input = output;
                s
            })
            .collect()
    }

    pub fn zeros(hidden: [usize; 6]) -> Self {
        let layers = Self::shapes(hidden);
        let n = layers.iter().map(LayerShape::param_count).sum();
        Self::new(layers, vec![0.0; n]).expect("shapes compose by construction")
    }

    /// Glorot-uniform input matrices, scaled-uniform recurrent matrices,
    /// forget-gate biases of one, He-uniform affine layers and a small head.
    pub fn random<R: Rng + ?Sized>(hidden: [usize; 6], rng: &mut R) -> Self {
        let mut w = Self::zeros(hidden);
        let n_layers = w.layers.len();
        for li in 0..n_layers {
            let l = w.layers[li];
            let off = w.offsets[li];
            let p = &mut w.params[off..off + l.param_count()];
            match l.kind {
                LayerKind::Recurrent => {
                    let (ni, no) = (l.input, l.output);
                    let a_in = (6.0 / (ni + no) as f64).sqrt();
                    let a_rec = (3.0 / no as f64).sqrt() * 0.5;
                    let (inputs, rest) = p.split_at_mut(4 * no * ni);
                    let (recurrent, biases) = rest.split_at_mut(4 * no * no);
                    inputs.iter_mut().for_each(|v| *v = rng.random_range(-a_in..a_in));
                    recurrent.iter_mut().for_each(|v| *v = rng.random_range(-a_rec..a_rec));
                    biases[no..2 * no].iter_mut().for_each(|v| *v = 1.0);
                }
                LayerKind::Affine => {
                    let last = li + 1 == n_layers;
                    let a = if last {
                        0.1 * (1.0 / l.input as f64).sqrt()
                    } else {
                        (6.0 / l.input as f64).sqrt()
                    };
                    let (m, _) = p.split_at_mut(l.output * l.input);
                    m.iter_mut().for_each(|v| *v = rng.random_range(-a..a));
                }
            }
        }
        w
    }

    pub fn layers(&self) -> &[LayerShape] {
        &self.layers
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// Parameters of layer `index`, in file order.
    pub fn layer_params(&self, index: usize) -> &[f64] {
        let off = self.offsets[index];
        &self.params[off..off + self.layers[index].param_count()]
    }

    /// Hidden widths (outputs of layers 1–6).
    pub fn hidden_widths(&self) -> [usize; 6] {
        let mut h = [0; 6];
        for (k, l) in self.layers.iter().take(6).enumerate() {
            h[k] = l.output;
        }
        h
    }

    pub fn forward(&self, seq: &PairStateSequence) -> Result<AccelerationDistribution, ModelError> {
        let flat = flatten(seq);
        let mut cache = Cache::default();
        let head = self.run(&flat, &mut cache)?;
        Ok(head_to_distribution(&head))
    }

    /// Raw head outputs for a flattened `5 × 11` window.
    pub fn head(&self, input: &[f64]) -> Result<[f64; HEAD_WIDTH], ModelError> {
        let mut cache = Cache::default();
        self.run(input, &mut cache)
    }

    /// NLL of `target` for a flattened window; adds its parameter gradient
    /// into `grad` (same layout as [`params`](Self::params)).
    pub fn accumulate_gradient(&self, input: &[f64], target: Vec2, grad: &mut [f64]) -> Result<f64, ModelError> {
        let mut cache = Cache::default();
        let head = self.run(input, &mut cache)?;
        let (loss, d_head) = head_loss_gradient(&head, target);
        self.backward(&cache, &d_head, grad);
        Ok(loss)
    }

    /// Loss for a flattened window, without gradients.
    pub fn loss(&self, input: &[f64], target: Vec2) -> Result<f64, ModelError> {
        let head = self.head(input)?;
        Ok(head_loss_gradient(&head, target).0)
    }

    /// Rewrites the first layer so that raw inputs `x` give the outputs the
    /// current weights give for `(x − mean) / scale`.
    pub fn fold_input_normalization(&mut self, mean: &[f64], scale: &[f64]) {
        let l = self.layers[0];
        assert_eq!(mean.len(), l.input);
        assert_eq!(scale.len(), l.input);
        let off = self.offsets[0];
        let (n_mats, no, ni) = match l.kind {
            LayerKind::Recurrent => (4, l.output, l.input),
            LayerKind::Affine => (1, l.output, l.input),
        };
        let bias_off = match l.kind {
            LayerKind::Recurrent => off + 4 * no * ni + 4 * no * no,
            LayerKind::Affine => off + no * ni,
        };
        for g in 0..n_mats {
            for r in 0..no {
                let row = off + g * no * ni + r * ni;
                let mut shift = 0.0;
                for c in 0..ni {
                    let w = self.params[row + c] / scale[c];
                    self.params[row + c] = w;
                    shift += w * mean[c];
                }
                self.params[bias_off + g * no + r] -= shift;
            }
        }
    }

    /// Sets the head biases so an untrained network predicts the given
    /// per-axis mean and standard deviation.
    pub fn set_head_bias(&mut self, mean: Vec2, sd: Vec2) {
        let last = self.layers.len() - 1;
        let l = self.layers[last];
        let b = self.offsets[last] + l.output * l.input;
        self.params[b] = mean.x;
        self.params[b + 1] = inverse_softplus((sd.x - SIGMA_FLOOR).max(1e-3));
        self.params[b + 2] = mean.y;
        self.params[b + 3] = inverse_softplus((sd.y - SIGMA_FLOOR).max(1e-3));
    }

    fn last_recurrent(&self) -> usize {
        self.layers
            .iter()
            .rposition(|l| l.kind == LayerKind::Recurrent)
            .expect("validated architecture has a recurrent layer")
    }

    fn run(&self, input: &[f64], cache: &mut Cache) -> Result<[f64; HEAD_WIDTH], ModelError> {
        if input.len() != WINDOW_LEN * INPUT_WIDTH {
            return Err(ModelError::DimensionMismatch {
                layer: 0,
                what: "input values",
                expected: WINDOW_LEN * INPUT_WIDTH,
                actual: input.len(),
            });
        }
        let last_rec = self.last_recurrent();
        let n_layers = self.layers.len();
        cache.layers.clear();
        let mut x = input.to_vec();
        let mut steps = WINDOW_LEN;
        for (li, l) in self.layers.iter().enumerate() {
            let p = self.layer_params(li);
            let lc = match l.kind {
                LayerKind::Affine => {
                    let relu = li + 1 != n_layers;
                    affine_forward(p, l, &x, steps, relu)
                }
                LayerKind::Recurrent => {
                    let lc = recurrent_forward(p, l, &x, steps, li == last_rec);
                    if li == last_rec {
                        steps = 1;
                    }
                    lc
                }
            };
            x = lc.output().to_vec();
            if !x.iter().all(|v| v.is_finite()) {
                return Err(ModelError::NonFinite { layer: li + 1 });
            }
            cache.layers.push(lc);
        }
        Ok([x[0], x[1], x[2], x[3]])
    }

    fn backward(&self, cache: &Cache, d_head: &[f64; HEAD_WIDTH], grad: &mut [f64]) {
        let mut d_out = d_head.to_vec();
        for li in (0..self.layers.len()).rev() {
            let l = &self.layers[li];
            let off = self.offsets[li];
            let p = self.layer_params(li);
            let g = &mut grad[off..off + l.param_count()];
            let need_input_grad = li > 0;
            d_out = match &cache.layers[li] {
                LayerCache::Affine(c) => affine_backward(p, l, c, &d_out, g, need_input_grad),
                LayerCache::Recurrent(c) => recurrent_backward(p, l, c, &d_out, g, need_input_grad),
            };
        }
    }
}

fn validate_layers(layers: &[LayerShape]) -> Result<(), ModelError> {
    if layers.len() != ARCHITECTURE.len() {
        return Err(ModelError::Architecture(format!(
            "expected {} layers, got {}",
            ARCHITECTURE.len(),
            layers.len()
        )));
    }
    let mut expected_input = INPUT_WIDTH;
    for (k, (l, want)) in layers.iter().zip(ARCHITECTURE.iter()).enumerate() {
        if l.kind != *want {
            return Err(ModelError::Architecture(format!(
                "layer {} must be {:?}, got {:?}",
                k + 1,
                want,
                l.kind
            )));
        }
        if l.input != expected_input {
            return Err(ModelError::DimensionMismatch {
                layer: k + 1,
                what: "input width",
                expected: expected_input,
                actual: l.input,
            });
        }
        if l.output == 0 {
            return Err(ModelError::Architecture(format!("layer {} has zero width", k + 1)));
        }
        expected_input = l.output;
    }
    if expected_input != HEAD_WIDTH {
        return Err(ModelError::DimensionMismatch {
            layer: layers.len(),
            what: "output width",
            expected: HEAD_WIDTH,
            actual: expected_input,
        });
    }
    Ok(())
}

pub(crate) fn flatten(seq: &PairStateSequence) -> Vec<f64> {
    seq.rows.iter().flat_map(|r| r.iter().copied()).collect()
}

pub(crate) fn head_to_distribution(h: &[f64; HEAD_WIDTH]) -> AccelerationDistribution {
    AccelerationDistribution {
        mu_x: h[0],
        sigma_x: softplus(h[1]) + SIGMA_FLOOR,
        mu_y: h[2],
        sigma_y: softplus(h[3]) + SIGMA_FLOOR,
    }
}

/// NLL and its derivative with respect to the raw head outputs.
fn head_loss_gradient(h: &[f64; HEAD_WIDTH], target: Vec2) -> (f64, [f64; HEAD_WIDTH]) {
    let dist = head_to_distribution(h);
    let loss = super::nll_loss(&dist, target);
    let mut d = [0.0; HEAD_WIDTH];
    for (axis, (a, mu, s, raw_s)) in [
        (target.x, dist.mu_x, dist.sigma_x, h[1]),
        (target.y, dist.mu_y, dist.sigma_y, h[3]),
    ]
    .into_iter()
    .enumerate()
    {
        let r = a - mu;
        d[2 * axis] = -r / (s * s);
        let d_sigma = 1.0 / s - r * r / (s * s * s);
        d[2 * axis + 1] = d_sigma * sigmoid(raw_s);
    }
    (loss, d)
}

#[derive(Default)]
struct Cache {
    layers: Vec<LayerCache>,
}

enum LayerCache {
    Affine(AffineCache),
    Recurrent(RecurrentCache),
}

impl LayerCache {
    fn output(&self) -> &[f64] {
        match self {
            LayerCache::Affine(c) => &c.out,
            LayerCache::Recurrent(c) => {
                if c.final_only {
                    let no = c.width;
                    &c.h[c.steps * no..(c.steps + 1) * no]
                } else {
                    &c.h[c.width..]
                }
            }
        }
    }
}

struct AffineCache {
    steps: usize,
    x: Vec<f64>,
    out: Vec<f64>,
    relu: bool,
}

struct RecurrentCache {
    steps: usize,
    width: usize,
    final_only: bool,
    x: Vec<f64>,
    // per-step gate activations, `steps × width` each
    i: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
    o: Vec<f64>,
    // `(steps + 1) × width`, row 0 is the zero initial state
    c: Vec<f64>,
    h: Vec<f64>,
}

#[inline]
fn matvec_add(m: &[f64], rows: usize, cols: usize, x: &[f64], y: &mut [f64]) {
    for (r, yr) in y.iter_mut().enumerate().take(rows) {
        let row = &m[r * cols..(r + 1) * cols];
        let mut acc = 0.0;
        for (w, xv) in row.iter().zip(x) {
            acc += w * xv;
        }
        *yr += acc;
    }
}

/// `y += mᵀ d` for `m` of shape `rows × cols`.
#[inline]
fn matvec_t_add(m: &[f64], rows: usize, cols: usize, d: &[f64], y: &mut [f64]) {
    for r in 0..rows {
        let dr = d[r];
        if dr == 0.0 {
            continue;
        }
        let row = &m[r * cols..(r + 1) * cols];
        for (yv, w) in y.iter_mut().zip(row) {
            *yv += w * dr;
        }
    }
}

/// `g += d ⊗ x`.
#[inline]
fn outer_add(g: &mut [f64], rows: usize, cols: usize, d: &[f64], x: &[f64]) {
    for r in 0..rows {
        let dr = d[r];
        if dr == 0.0 {
            continue;
        }
        let row = &mut g[r * cols..(r + 1) * cols];
        for (gv, xv) in row.iter_mut().zip(x) {
            *gv += dr * xv;
        }
    }
}

fn affine_forward(p: &[f64], l: &LayerShape, x: &[f64], steps: usize, relu: bool) -> LayerCache {
    let (ni, no) = (l.input, l.output);
    let (m, b) = p.split_at(no * ni);
    let mut out = vec![0.0; steps * no];
    for t in 0..steps {
        let y = &mut out[t * no..(t + 1) * no];
        y.copy_from_slice(b);
        matvec_add(m, no, ni, &x[t * ni..(t + 1) * ni], y);
        if relu {
            y.iter_mut().for_each(|v| *v = v.max(0.0));
        }
    }
    LayerCache::Affine(AffineCache {
        steps,
        x: x.to_vec(),
        out,
        relu,
    })
}

fn affine_backward(
    p: &[f64],
    l: &LayerShape,
    c: &AffineCache,
    d_out: &[f64],
    g: &mut [f64],
    need_input_grad: bool,
) -> Vec<f64> {
    let (ni, no) = (l.input, l.output);
    let (m, _) = p.split_at(no * ni);
    let (gm, gb) = g.split_at_mut(no * ni);
    let mut dx = if need_input_grad {
        vec![0.0; c.steps * ni]
    } else {
        Vec::new()
    };
    let mut dz = vec![0.0; no];
    for t in 0..c.steps {
        for r in 0..no {
            let d = d_out[t * no + r];
            dz[r] = if c.relu && c.out[t * no + r] <= 0.0 { 0.0 } else { d };
        }
        outer_add(gm, no, ni, &dz, &c.x[t * ni..(t + 1) * ni]);
        for (gbv, dzv) in gb.iter_mut().zip(&dz) {
            *gbv += dzv;
        }
        if need_input_grad {
            matvec_t_add(m, no, ni, &dz, &mut dx[t * ni..(t + 1) * ni]);
        }
    }
    dx
}

fn recurrent_forward(p: &[f64], l: &LayerShape, x: &[f64], steps: usize, final_only: bool) -> LayerCache {
    let (ni, no) = (l.input, l.output);
    let w_in = &p[..4 * no * ni];
    let w_rec = &p[4 * no * ni..4 * no * (ni + no)];
    let bias = &p[4 * no * (ni + no)..];
    let mut i = vec![0.0; steps * no];
    let mut f = vec![0.0; steps * no];
    let mut gg = vec![0.0; steps * no];
    let mut o = vec![0.0; steps * no];
    let mut c = vec![0.0; (steps + 1) * no];
    let mut h = vec![0.0; (steps + 1) * no];
    let mut z = vec![0.0; no];
    for t in 0..steps {
        let xt = &x[t * ni..(t + 1) * ni];
        let (h_hist, h_next) = h.split_at_mut((t + 1) * no);
        let h_prev = &h_hist[t * no..];
        for gate in 0..4 {
            z.copy_from_slice(&bias[gate * no..(gate + 1) * no]);
            matvec_add(&w_in[gate * no * ni..(gate + 1) * no * ni], no, ni, xt, &mut z);
            matvec_add(&w_rec[gate * no * no..(gate + 1) * no * no], no, no, h_prev, &mut z);
            let dst = match gate {
                0 => &mut i,
                1 => &mut f,
                2 => &mut gg,
                _ => &mut o,
            };
            let dst = &mut dst[t * no..(t + 1) * no];
            if gate == 2 {
                for (d, zv) in dst.iter_mut().zip(&z) {
                    *d = zv.max(0.0);
                }
            } else {
                for (d, zv) in dst.iter_mut().zip(&z) {
                    *d = sigmoid(*zv);
                }
            }
        }
        for r in 0..no {
            let k = t * no + r;
            let cn = f[k] * c[t * no + r] + i[k] * gg[k];
            c[(t + 1) * no + r] = cn;
            h_next[r] = o[k] * cn.max(0.0);
        }
    }
    LayerCache::Recurrent(RecurrentCache {
        steps,
        width: no,
        final_only,
        x: x.to_vec(),
        i,
        f,
        g: gg,
        o,
        c,
        h,
    })
}

fn recurrent_backward(
    p: &[f64],
    l: &LayerShape,
    cache: &RecurrentCache,
    d_out: &[f64],
    grad: &mut [f64],
    need_input_grad: bool,
) -> Vec<f64> {
    let (ni, no) = (l.input, l.output);
    let steps = cache.steps;
    let w_in = &p[..4 * no * ni];
    let w_rec = &p[4 * no * ni..4 * no * (ni + no)];
    let (g_in, rest) = grad.split_at_mut(4 * no * ni);
    let (g_rec, g_bias) = rest.split_at_mut(4 * no * no);

    let mut dx = if need_input_grad {
        vec![0.0; steps * ni]
    } else {
        Vec::new()
    };
    let mut dh_next = vec![0.0; no];
    let mut dc_next = vec![0.0; no];
    let mut dz = vec![[0.0; 4]; 0];
    dz.resize(no, [0.0; 4]);
    let mut dz_gate = vec![0.0; no];

    for t in (0..steps).rev() {
        for r in 0..no {
            let k = t * no + r;
            let mut dh = dh_next[r];
            if cache.final_only {
                if t + 1 == steps {
                    dh += d_out[r];
                }
            } else {
                dh += d_out[k];
            }
            let c_t = cache.c[(t + 1) * no + r];
            let c_prev = cache.c[t * no + r];
            let (iv, fv, gv, ov) = (cache.i[k], cache.f[k], cache.g[k], cache.o[k]);
            let rc = c_t.max(0.0);
            let d_o = dh * rc;
            let dc = dh * ov * if c_t > 0.0 { 1.0 } else { 0.0 } + dc_next[r];
            let d_i = dc * gv;
            let d_g = dc * iv;
            let d_f = dc * c_prev;
            dc_next[r] = dc * fv;
            dz[r] = [
                d_i * iv * (1.0 - iv),
                d_f * fv * (1.0 - fv),
                if gv > 0.0 { d_g } else { 0.0 },
                d_o * ov * (1.0 - ov),
            ];
        }
        let xt = &cache.x[t * ni..(t + 1) * ni];
        let h_prev = &cache.h[t * no..(t + 1) * no];
        dh_next.iter_mut().for_each(|v| *v = 0.0);
        for gate in 0..4 {
            for r in 0..no {
                dz_gate[r] = dz[r][gate];
            }
            outer_add(&mut g_in[gate * no * ni..(gate + 1) * no * ni], no, ni, &dz_gate, xt);
            outer_add(
                &mut g_rec[gate * no * no..(gate + 1) * no * no],
                no,
                no,
                &dz_gate,
                h_prev,
            );
            for (gb, d) in g_bias[gate * no..(gate + 1) * no].iter_mut().zip(&dz_gate) {
                *gb += d;
            }
            if need_input_grad {
                matvec_t_add(
                    &w_in[gate * no * ni..(gate + 1) * no * ni],
                    no,
                    ni,
                    &dz_gate,
                    &mut dx[t * ni..(t + 1) * ni],
                );
            }
            if t > 0 {
                matvec_t_add(
                    &w_rec[gate * no * no..(gate + 1) * no * no],
                    no,
                    no,
                    &dz_gate,
                    &mut dh_next,
                );
            }
        }
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{nll_loss, PairStateSequence};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_input(rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..WINDOW_LEN * INPUT_WIDTH)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect()
    }

    #[test]
    fn zero_weights_give_floor_sigma() {
        let w = NetworkWeights::zeros([64; 6]);
        let seq = PairStateSequence::new([[1.5; 11]; 5]);
        let d = w.forward(&seq).unwrap();
        assert_eq!(d.mu_x, 0.0);
        assert_eq!(d.mu_y, 0.0);
        let expected = std::f64::consts::LN_2 + 1e-4;
        assert!((d.sigma_x - expected).abs() < 1e-15);
        assert!((d.sigma_y - expected).abs() < 1e-15);
    }

    #[test]
    fn forward_is_deterministic_and_positive() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let w = NetworkWeights::random([16; 6], &mut rng);
        for _ in 0..50 {
            let mut rows = [[0.0; 11]; 5];
            rows.iter_mut()
                .flat_map(|r| r.iter_mut())
                .for_each(|v| *v = rng.random_range(-25.0..25.0));
            let seq = PairStateSequence::new(rows);
            let a = w.forward(&seq).unwrap();
            let b = w.forward(&seq).unwrap();
            assert_eq!(a, b);
            assert!(a.sigma_x >= SIGMA_FLOOR && a.sigma_y >= SIGMA_FLOOR);
        }
    }

    #[test]
    fn architecture_validation() {
        let mut shapes = NetworkWeights::shapes([8; 6]);
        shapes[2].input = 7;
        let n = shapes.iter().map(LayerShape::param_count).sum();
        match NetworkWeights::new(shapes, vec![0.0; n]) {
            Err(ModelError::DimensionMismatch {
                layer,
                expected,
                actual,
                ..
            }) => {
                assert_eq!((layer, expected, actual), (3, 8, 7));
            }
            other => panic!("unexpected {other:?}"),
        }
        let shapes = NetworkWeights::shapes([8; 6]);
        assert!(NetworkWeights::new(shapes, vec![0.0; 3]).is_err());
        let mut shapes = NetworkWeights::shapes([8; 6]);
        shapes[1].kind = LayerKind::Recurrent;
        let n = shapes.iter().map(LayerShape::param_count).sum();
        assert!(matches!(
            NetworkWeights::new(shapes, vec![0.0; n]),
            Err(ModelError::Architecture(_))
        ));
    }

    #[test]
    fn loss_matches_distribution_nll() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let w = NetworkWeights::random([8; 6], &mut rng);
        let x = random_input(&mut rng);
        let t = Vec2::new(0.3, -1.2);
        let head = w.head(&x).unwrap();
        let d = head_to_distribution(&head);
        assert_eq!(w.loss(&x, t).unwrap(), nll_loss(&d, t));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut w = NetworkWeights::zeros([8; 6]);
        w.params_mut().iter_mut().for_each(|p| *p = rng.random_range(-1.0..1.0));
        let x = random_input(&mut rng);
        let t = Vec2::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let mut g = vec![0.0; w.param_count()];
        w.accumulate_gradient(&x, t, &mut g).unwrap();
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        let mut checked = 0;
        for _ in 0..200 {
            let k = rng.random_range(0..w.param_count());
            let mut plus = w.clone();
            plus.params_mut()[k] += h;
            let mut minus = w.clone();
            minus.params_mut()[k] -= h;
            let fd = (plus.loss(&x, t).unwrap() - minus.loss(&x, t).unwrap()) / (2.0 * h);
            let denom = g[k].abs().max(fd.abs());
            if denom > 1e-8 {
                worst = worst.max((g[k] - fd).abs() / denom);
                checked += 1;
            }
        }
        assert!(checked >= 100);
        assert!(worst < 1e-4, "worst relative error {worst}");
    }

    #[test]
    fn folding_normalization_preserves_outputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let w = NetworkWeights::random([8; 6], &mut rng);
        let mean: Vec<f64> = (0..11).map(|_| rng.random_range(-5.0..5.0)).collect();
        let scale: Vec<f64> = (0..11).map(|_| rng.random_range(0.5..10.0)).collect();
        let raw = random_input(&mut rng).iter().map(|v| v * 20.0).collect::<Vec<_>>();
        let normalized: Vec<f64> = raw
            .iter()
            .enumerate()
            .map(|(k, v)| (v - mean[k % 11]) / scale[k % 11])
            .collect();
        let mut folded = w.clone();
        folded.fold_input_normalization(&mean, &scale);
        let a = w.head(&normalized).unwrap();
        let b = folded.head(&raw).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-10 * (1.0 + x.abs()), "{a:?} vs {b:?}");
        }
    }
}
