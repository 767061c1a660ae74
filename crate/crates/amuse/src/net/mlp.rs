//! Feed-forward classifier with exact reverse-mode gradients and exact
//! Hessian-vector products.
//!
//! The model is the analysis workhorse: a small MLP trained with mean
//! cross-entropy. Gradients come from standard backpropagation; the
//! Hessian-vector product is computed by forward-over-reverse
//! differentiation (a directional derivative carried through the forward
//! and backward passes), not by finite differences. Everything is f64:
//! subspace ratios near 0 and 1 are precision-sensitive.

use crate::error::{AmuseError, Result};
use crate::linalg::DenseMatrix;
use crate::rng::AmuseRng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
        }
    }
}

/// A minibatch: inputs are one sample per row, labels are class indices.
#[derive(Debug, Clone)]
pub struct Batch {
    pub inputs: DenseMatrix,
    pub labels: Vec<usize>,
}

impl Batch {
    pub fn new(inputs: DenseMatrix, labels: Vec<usize>) -> Result<Self> {
        if labels.is_empty() || inputs.rows() != labels.len() {
            return Err(AmuseError::ShapeMismatch {
                context: "Batch::new".into(),
                expected: format!("{} labels", inputs.rows()),
                actual: format!("{} labels", labels.len()),
            });
        }
        Ok(Self { inputs, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `in_dim x out_dim`.
    pub weight: DenseMatrix,
    pub bias: Vec<f64>,
}

/// Gradients (or any co-shaped buffer) mirroring the model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct GradSet {
    pub layers: Vec<Layer>,
}

impl GradSet {
    pub fn zeros_like(model: &MlpModel) -> Self {
        let layers = model
            .layers
            .iter()
            .map(|l| Layer {
                weight: DenseMatrix::zeros(l.weight.rows(), l.weight.cols()),
                bias: vec![0.0; l.bias.len()],
            })
            .collect();
        Self { layers }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        flatten_layers(&self.layers)
    }

    /// Checks all entries are finite; names the first offending parameter.
    pub fn check_finite(&self) -> Result<()> {
        for (i, l) in self.layers.iter().enumerate() {
            if l.weight.has_nan() || l.weight.data().iter().any(|x| !x.is_finite()) {
                return Err(AmuseError::NanGradient(format!("layer{i}.weight")));
            }
            if l.bias.iter().any(|x| !x.is_finite()) {
                return Err(AmuseError::NanGradient(format!("layer{i}.bias")));
            }
        }
        Ok(())
    }
}

fn flatten_layers(layers: &[Layer]) -> Vec<f64> {
    let total: usize = layers.iter().map(|l| l.weight.len() + l.bias.len()).sum();
    let mut out = Vec::with_capacity(total);
    for l in layers {
        out.extend_from_slice(l.weight.data());
        out.extend_from_slice(&l.bias);
    }
    out
}

/// The analysis MLP.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub layers: Vec<Layer>,
    pub activation: Activation,
}

impl MlpModel {
    /// Builds a model with uniform `[-1/sqrt(fan_in), +1/sqrt(fan_in)]`
    /// initialization, deterministic per seed.
    ///
    /// `dims` lists the layer widths including input and output, e.g.
    /// `[784, 200, 200, 10]` for a three-layer classifier.
    pub fn new(dims: &[usize], activation: Activation, seed: u64) -> Result<Self> {
        if dims.len() < 2 {
            return Err(AmuseError::InvalidArgument(
                "model needs at least input and output dims".into(),
            ));
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(AmuseError::InvalidArgument(
                "layer widths must be positive".into(),
            ));
        }
        let mut rng = AmuseRng::for_stream(seed, 0x6d6c70); // "mlp"
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for w in dims.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let weight =
                DenseMatrix::from_fn(fan_in, fan_out, |_, _| rng.uniform(-bound, bound));
            let bias = (0..fan_out).map(|_| rng.uniform(-bound, bound)).collect();
            layers.push(Layer { weight, bias });
        }
        Ok(Self { layers, activation })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().weight.cols()
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    /// Parameter names in flattening order.
    pub fn param_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.layers.len() * 2);
        for i in 0..self.layers.len() {
            names.push(format!("layer{i}.weight"));
            names.push(format!("layer{i}.bias"));
        }
        names
    }

    pub fn params_flat(&self) -> Vec<f64> {
        flatten_layers(&self.layers)
    }

    pub fn set_params_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.num_params(), "set_params_flat length");
        let mut off = 0;
        for l in &mut self.layers {
            let wn = l.weight.len();
            l.weight.data_mut().copy_from_slice(&flat[off..off + wn]);
            off += wn;
            let bn = l.bias.len();
            l.bias.copy_from_slice(&flat[off..off + bn]);
            off += bn;
        }
    }

    fn check_batch(&self, batch: &Batch) -> Result<()> {
        if batch.inputs.cols() != self.input_dim() {
            return Err(AmuseError::ShapeMismatch {
                context: "layer0.weight".into(),
                expected: format!("{} input features", self.input_dim()),
                actual: format!("{} input features", batch.inputs.cols()),
            });
        }
        let k = self.output_dim();
        if let Some(&bad) = batch.labels.iter().find(|&&l| l >= k) {
            return Err(AmuseError::InvalidArgument(format!(
                "label {bad} out of range for {k} classes"
            )));
        }
        Ok(())
    }

    /// Linear + activation stack; returns pre-activations per layer.
    /// The last layer's pre-activation is the logits.
    fn forward_pre_acts(&self, inputs: &DenseMatrix) -> Vec<DenseMatrix> {
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut h = inputs.clone();
        for (idx, layer) in self.layers.iter().enumerate() {
            let mut z = h.matmul(&layer.weight);
            for r in 0..z.rows() {
                let row = z.row_mut(r);
                for (zc, b) in row.iter_mut().zip(&layer.bias) {
                    *zc += b;
                }
            }
            if idx + 1 < self.layers.len() {
                let mut next = z.clone();
                for he in next.data_mut() {
                    *he = self.activation.apply(*he);
                }
                h = next;
            }
            pre.push(z);
        }
        pre
    }

    pub fn forward_logits(&self, inputs: &DenseMatrix) -> DenseMatrix {
        self.forward_pre_acts(inputs).pop().unwrap()
    }

    /// Mean cross-entropy over the batch, log-sum-exp stabilized.
    pub fn forward_loss(&self, batch: &Batch) -> Result<f64> {
        self.check_batch(batch)?;
        let logits = self.forward_logits(&batch.inputs);
        Ok(mean_cross_entropy(&logits, &batch.labels))
    }

    /// Exact reverse-mode gradient of the mean cross-entropy.
    pub fn backward(&self, batch: &Batch) -> Result<GradSet> {
        self.check_batch(batch)?;
        let ws = HvpWorkspace::prepare(self, batch)?;
        Ok(ws.into_grads())
    }

    /// Loss and gradient in one pass.
    pub fn loss_and_grad(&self, batch: &Batch) -> Result<(f64, GradSet)> {
        self.check_batch(batch)?;
        let ws = HvpWorkspace::prepare(self, batch)?;
        let loss = ws.loss;
        Ok((loss, ws.into_grads()))
    }

    /// Exact Hessian-vector product on the flattened parameter vector.
    pub fn hvp(&self, batch: &Batch, v: &[f64]) -> Result<Vec<f64>> {
        let ws = HvpWorkspace::prepare(self, batch)?;
        ws.hvp(v)
    }
}

fn mean_cross_entropy(logits: &DenseMatrix, labels: &[usize]) -> f64 {
    let n = labels.len();
    let mut total = 0.0;
    for (i, &label) in labels.iter().enumerate() {
        let row = logits.row(i);
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
        total += lse - row[label];
    }
    total / n as f64
}

/// Cached forward/backward state at a fixed parameter point.
///
/// Lanczos calls the Hessian-vector product many times at the same anchor;
/// everything independent of the direction — activations, their first and
/// second derivatives, the softmax, the adjoints, and the backpropagated
/// upstream terms — is computed once here, so each matvec is pure matrix
/// arithmetic.
pub struct HvpWorkspace<'a> {
    model: &'a MlpModel,
    batch: &'a Batch,
    /// Post-activations h_l for l < L (h_0 is the input, owned by batch).
    post: Vec<DenseMatrix>,
    /// act'(z_l) for l < L.
    d1: Vec<DenseMatrix>,
    /// act''(z_l) for l < L.
    d2: Vec<DenseMatrix>,
    /// Softmax of the logits.
    softmax: DenseMatrix,
    /// Adjoints delta_l = dL/dz_l.
    deltas: Vec<DenseMatrix>,
    /// delta_{l+1} W_{l+1}^T for l < L - 1 (the v-independent upstream).
    base_upstream: Vec<DenseMatrix>,
    pub loss: f64,
}

impl<'a> HvpWorkspace<'a> {
    pub fn prepare(model: &'a MlpModel, batch: &'a Batch) -> Result<Self> {
        model.check_batch(batch)?;
        let n = batch.len();
        let num_layers = model.layers.len();
        let pre = model.forward_pre_acts(&batch.inputs);
        let act = model.activation;
        let hidden = num_layers - 1;
        let mut post = Vec::with_capacity(hidden);
        let mut d1 = Vec::with_capacity(hidden);
        let mut d2 = Vec::with_capacity(hidden);
        for z in pre.iter().take(hidden) {
            let (r, c) = z.shape();
            let mut h = DenseMatrix::zeros(r, c);
            let mut g1 = DenseMatrix::zeros(r, c);
            let mut g2 = DenseMatrix::zeros(r, c);
            for (((he, g1e), g2e), &ze) in h
                .data_mut()
                .iter_mut()
                .zip(g1.data_mut().iter_mut())
                .zip(g2.data_mut().iter_mut())
                .zip(z.data())
            {
                match act {
                    Activation::Tanh => {
                        let t = ze.tanh();
                        let sech2 = 1.0 - t * t;
                        *he = t;
                        *g1e = sech2;
                        *g2e = -2.0 * t * sech2;
                    }
                    Activation::Relu => {
                        let on = ze > 0.0;
                        *he = if on { ze } else { 0.0 };
                        *g1e = if on { 1.0 } else { 0.0 };
                        *g2e = 0.0;
                    }
                }
            }
            post.push(h);
            d1.push(g1);
            d2.push(g2);
        }

        let logits = &pre[num_layers - 1];
        let loss = mean_cross_entropy(logits, &batch.labels);
        let mut softmax = DenseMatrix::zeros(logits.rows(), logits.cols());
        for i in 0..logits.rows() {
            let row = logits.row(i);
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let out = softmax.row_mut(i);
            let mut sum = 0.0;
            for (o, &x) in out.iter_mut().zip(row) {
                *o = (x - m).exp();
                sum += *o;
            }
            for o in out.iter_mut() {
                *o /= sum;
            }
        }

        // delta_L = (softmax - onehot) / n
        let mut deltas = vec![DenseMatrix::zeros(1, 1); num_layers];
        let mut d_last = softmax.clone();
        for (i, &label) in batch.labels.iter().enumerate() {
            d_last.set(i, label, d_last.get(i, label) - 1.0);
        }
        d_last.scale_in_place(1.0 / n as f64);
        deltas[num_layers - 1] = d_last;
        let mut base_upstream = vec![DenseMatrix::zeros(1, 1); hidden];
        for l in (0..hidden).rev() {
            let upstream = deltas[l + 1].matmul_t(&model.layers[l + 1].weight);
            let mut d = upstream.clone();
            for (de, g1e) in d.data_mut().iter_mut().zip(d1[l].data()) {
                *de *= g1e;
            }
            base_upstream[l] = upstream;
            deltas[l] = d;
        }

        Ok(Self {
            model,
            batch,
            post,
            d1,
            d2,
            softmax,
            deltas,
            base_upstream,
            loss,
        })
    }

    fn input_at(&self, layer: usize) -> &DenseMatrix {
        if layer == 0 {
            &self.batch.inputs
        } else {
            &self.post[layer - 1]
        }
    }

    /// Gradients from the cached adjoints.
    pub fn into_grads(self) -> GradSet {
        let mut layers = Vec::with_capacity(self.model.layers.len());
        for l in 0..self.model.layers.len() {
            let weight = self.input_at(l).t_matmul(&self.deltas[l]);
            let d = &self.deltas[l];
            let mut bias = vec![0.0; d.cols()];
            for i in 0..d.rows() {
                for (bj, x) in bias.iter_mut().zip(d.row(i)) {
                    *bj += x;
                }
            }
            layers.push(Layer { weight, bias });
        }
        GradSet { layers }
    }

    /// Hessian-vector product along `v` (flattened parameter order).
    pub fn hvp(&self, v: &[f64]) -> Result<Vec<f64>> {
        let model = self.model;
        if v.len() != model.num_params() {
            return Err(AmuseError::ShapeMismatch {
                context: "hvp direction".into(),
                expected: format!("{} elements", model.num_params()),
                actual: format!("{} elements", v.len()),
            });
        }
        let num_layers = model.layers.len();
        let n = self.batch.len();

        // Unflatten v into per-layer direction blocks.
        let mut vw = Vec::with_capacity(num_layers);
        let mut vb = Vec::with_capacity(num_layers);
        let mut off = 0;
        for l in &model.layers {
            let wn = l.weight.len();
            vw.push(
                DenseMatrix::new(l.weight.rows(), l.weight.cols(), v[off..off + wn].to_vec())
                    .expect("direction block"),
            );
            off += wn;
            let bn = l.bias.len();
            vb.push(v[off..off + bn].to_vec());
            off += bn;
        }

        // Tangent forward: rz_l = rh_{l-1} W_l + h_{l-1} Vw_l + vb_l, rh_0 = 0,
        // rh_l = act'(z_l) .* rz_l.
        let mut rz = Vec::with_capacity(num_layers);
        let mut rh: Vec<DenseMatrix> = Vec::with_capacity(num_layers - 1);
        for l in 0..num_layers {
            let mut t = self.input_at(l).matmul(&vw[l]);
            if l > 0 {
                t.axpy_in_place(1.0, &rh[l - 1].matmul(&model.layers[l].weight));
            }
            for r in 0..t.rows() {
                let row = t.row_mut(r);
                for (tc, b) in row.iter_mut().zip(&vb[l]) {
                    *tc += b;
                }
            }
            if l + 1 < num_layers {
                let mut h = t.clone();
                for (he, g1e) in h.data_mut().iter_mut().zip(self.d1[l].data()) {
                    *he *= g1e;
                }
                rh.push(h);
            }
            rz.push(t);
        }

        // Tangent of the softmax adjoint at the logits:
        // r(delta_L) = (S .* rz - S .* rowsum(S .* rz)) / n.
        let s = &self.softmax;
        let rz_last = &rz[num_layers - 1];
        let mut r_delta = DenseMatrix::zeros(s.rows(), s.cols());
        let inv_n = 1.0 / n as f64;
        for i in 0..s.rows() {
            let s_row = s.row(i);
            let rz_row = rz_last.row(i);
            let dot: f64 = s_row.iter().zip(rz_row).map(|(a, b)| a * b).sum();
            for ((o, &se), &rze) in r_delta
                .row_mut(i)
                .iter_mut()
                .zip(s_row)
                .zip(rz_row)
            {
                *o = se * (rze - dot) * inv_n;
            }
        }

        // Tangent backward.
        let mut r_deltas = vec![DenseMatrix::zeros(1, 1); num_layers];
        r_deltas[num_layers - 1] = r_delta;
        for l in (0..num_layers - 1).rev() {
            let w_next = &model.layers[l + 1].weight;
            let mut upstream = r_deltas[l + 1].matmul_t(w_next);
            upstream.axpy_in_place(1.0, &self.deltas[l + 1].matmul_t(&vw[l + 1]));
            let mut d = upstream;
            for (((de, &bue), (&g1e, &g2e)), &rze) in d
                .data_mut()
                .iter_mut()
                .zip(self.base_upstream[l].data())
                .zip(self.d1[l].data().iter().zip(self.d2[l].data()))
                .zip(rz[l].data())
            {
                *de = *de * g1e + bue * g2e * rze;
            }
            r_deltas[l] = d;
        }

        // HvW_l = rh_{l-1}^T delta_l + h_{l-1}^T r_delta_l ; Hvb_l = colsum(r_delta_l)
        let mut out = Vec::with_capacity(model.num_params());
        for l in 0..num_layers {
            let mut hw = self.input_at(l).t_matmul(&r_deltas[l]);
            if l > 0 {
                hw.axpy_in_place(1.0, &rh[l - 1].t_matmul(&self.deltas[l]));
            }
            out.extend_from_slice(hw.data());
            let rd = &r_deltas[l];
            let mut hb = vec![0.0; rd.cols()];
            for i in 0..rd.rows() {
                for (bj, x) in hb.iter_mut().zip(rd.row(i)) {
                    *bj += x;
                }
            }
            out.extend_from_slice(&hb);
        }
        Ok(out)
    }
}
