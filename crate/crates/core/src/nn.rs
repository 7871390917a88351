//! Multilayer perceptron with analytic backpropagation.
//!
//! A model is an ordered list of dense layers `y = act(W x + b)`. Hidden layers
//! use ReLU, the last layer is linear and produces logits. Weight matrices are
//! row-major with shape `(outputs, inputs)`.
//!
//! All functions here are pure: the same weights and inputs always give
//! bitwise-identical outputs.

use rand::Rng as _;
use rand_distr::{Distribution, Uniform};

use crate::matrix::Matrix;
use crate::seed::Rng;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Identity => z,
        }
    }

    /// Derivative at `z`; the ReLU subgradient at the kink is 0.
    #[inline]
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    inputs: usize,
    outputs: usize,
    /// Row-major `(outputs, inputs)`.
    pub weights: Vec<f64>,
    pub bias: Option<Vec<f64>>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn new(
        inputs: usize,
        outputs: usize,
        weights: Vec<f64>,
        bias: Option<Vec<f64>>,
        activation: Activation,
    ) -> Result<Self> {
        if inputs == 0 || outputs == 0 {
            return Err(Error::UnsupportedArchitecture(
                "layer dimensions must be positive".into(),
            ));
        }
        if weights.len() != inputs * outputs {
            return Err(Error::DimensionMismatch {
                context: "layer weights",
                expected: inputs * outputs,
                actual: weights.len(),
            });
        }
        if let Some(b) = &bias {
            if b.len() != outputs {
                return Err(Error::DimensionMismatch {
                    context: "layer bias",
                    expected: outputs,
                    actual: b.len(),
                });
            }
        }
        Ok(Self {
            inputs,
            outputs,
            weights,
            bias,
            activation,
        })
    }

    #[inline]
    pub fn inputs(&self) -> usize {
        self.inputs
    }

    #[inline]
    pub fn outputs(&self) -> usize {
        self.outputs
    }

    #[inline]
    pub fn weight(&self, out: usize, inp: usize) -> f64 {
        self.weights[out * self.inputs + inp]
    }

    fn same_shape(&self, other: &DenseLayer) -> bool {
        self.inputs == other.inputs
            && self.outputs == other.outputs
            && self.bias.is_some() == other.bias.is_some()
    }

    fn forward(&self, x: &Matrix) -> (Matrix, Matrix) {
        let n = x.rows();
        let mut pre = Matrix::zeros(n, self.outputs);
        for i in 0..n {
            let xi = x.row(i);
            let zi = pre.row_mut(i);
            for (o, z) in zi.iter_mut().enumerate() {
                let w = &self.weights[o * self.inputs..(o + 1) * self.inputs];
                let mut acc = self.bias.as_ref().map_or(0.0, |b| b[o]);
                for (a, b) in w.iter().zip(xi) {
                    acc += a * b;
                }
                *z = acc;
            }
        }
        let post = match self.activation {
            Activation::Identity => pre.clone(),
            act => {
                let mut post = pre.clone();
                for v in post.as_mut_slice() {
                    *v = act.apply(*v);
                }
                post
            }
        };
        (pre, post)
    }
}

/// Ordered list of dense layers; also used as the gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    layers: Vec<DenseLayer>,
}

impl ModelWeights {
    pub fn new(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::UnsupportedArchitecture("model has no layers".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].outputs != pair[1].inputs {
                return Err(Error::DimensionMismatch {
                    context: "adjacent layer dimensions",
                    expected: pair[0].outputs,
                    actual: pair[1].inputs,
                });
            }
        }
        Ok(Self { layers })
    }

    /// Glorot-uniform MLP with ReLU hidden layers, a linear head and zero biases.
    ///
    /// `dims` lists layer sizes from input to output, e.g. `[16, 32, 8]`.
    pub fn init_mlp(dims: &[usize], rng: &mut Rng) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::UnsupportedArchitecture(
                "an MLP needs at least input and output sizes".into(),
            ));
        }
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for (l, pair) in dims.windows(2).enumerate() {
            let (inp, out) = (pair[0], pair[1]);
            if inp == 0 || out == 0 {
                return Err(Error::UnsupportedArchitecture(
                    "layer dimensions must be positive".into(),
                ));
            }
            let limit = (6.0 / (inp + out) as f64).sqrt();
            let dist = Uniform::new_inclusive(-limit, limit)
                .map_err(|e| Error::InvalidInput(e.to_string()))?;
            let weights = (0..inp * out).map(|_| dist.sample(rng)).collect();
            let activation = if l + 2 == dims.len() {
                Activation::Identity
            } else {
                Activation::Relu
            };
            layers.push(DenseLayer::new(
                inp,
                out,
                weights,
                Some(vec![0.0; out]),
                activation,
            )?);
        }
        Self::new(layers)
    }

    /// Same architecture with every parameter set to zero.
    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| DenseLayer {
                    inputs: l.inputs,
                    outputs: l.outputs,
                    weights: vec![0.0; l.weights.len()],
                    bias: l.bias.as_ref().map(|b| vec![0.0; b.len()]),
                    activation: l.activation,
                })
                .collect(),
        }
    }

    #[inline]
    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    #[inline]
    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    /// Layer sizes from input to output.
    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.input_dim()];
        d.extend(self.layers.iter().map(|l| l.outputs));
        d
    }

    /// Number of weight-matrix entries (the clustered parameters).
    pub fn weight_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len()).sum()
    }

    pub fn bias_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.bias.as_ref().map_or(0, Vec::len))
            .sum()
    }

    pub fn param_count(&self) -> usize {
        self.weight_count() + self.bias_count()
    }

    pub fn same_shape(&self, other: &ModelWeights) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.same_shape(b))
    }

    fn check_shape(&self, other: &ModelWeights, context: &'static str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                context,
                expected: self.param_count(),
                actual: other.param_count(),
            })
        }
    }

    /// Flattens all parameters: per layer, weights then bias.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            if let Some(b) = &l.bias {
                out.extend_from_slice(b);
            }
        }
        out
    }

    /// Inverse of [`ModelWeights::to_flat`] using `self` as the shape template.
    pub fn with_flat(&self, flat: &[f64]) -> Result<Self> {
        if flat.len() != self.param_count() {
            return Err(Error::DimensionMismatch {
                context: "flat parameter vector",
                expected: self.param_count(),
                actual: flat.len(),
            });
        }
        let mut out = self.clone();
        let mut pos = 0;
        for l in &mut out.layers {
            let n = l.weights.len();
            l.weights.copy_from_slice(&flat[pos..pos + n]);
            pos += n;
            if let Some(b) = &mut l.bias {
                let n = b.len();
                b.copy_from_slice(&flat[pos..pos + n]);
                pos += n;
            }
        }
        Ok(out)
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &ModelWeights) -> Result<()> {
        self.check_shape(other, "axpy")?;
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.weights.iter_mut().zip(&b.weights) {
                *x += alpha * y;
            }
            if let (Some(ab), Some(bb)) = (&mut a.bias, &b.bias) {
                for (x, y) in ab.iter_mut().zip(bb) {
                    *x += alpha * y;
                }
            }
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| {
            l.weights.iter().all(|v| v.is_finite())
                && l.bias
                    .as_ref()
                    .is_none_or(|b| b.iter().all(|v| v.is_finite()))
        })
    }

    /// Rounds every parameter to the nearest `f32`, the precision of raw transmission.
    pub fn to_f32_precision(&self) -> Self {
        let mut out = self.clone();
        for l in &mut out.layers {
            for w in &mut l.weights {
                *w = *w as f32 as f64;
            }
            if let Some(b) = &mut l.bias {
                for v in b.iter_mut() {
                    *v = *v as f32 as f64;
                }
            }
        }
        out
    }
}

/// A batch of samples; labels are absent for unlabeled and OOD data.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub inputs: Matrix,
    pub labels: Option<Vec<usize>>,
}

impl Batch {
    pub fn labeled(inputs: Matrix, labels: Vec<usize>) -> Result<Self> {
        if inputs.rows() == 0 {
            return Err(Error::InvalidInput("batch must contain a sample".into()));
        }
        if labels.len() != inputs.rows() {
            return Err(Error::DimensionMismatch {
                context: "batch labels",
                expected: inputs.rows(),
                actual: labels.len(),
            });
        }
        Ok(Self {
            inputs,
            labels: Some(labels),
        })
    }

    pub fn unlabeled(inputs: Matrix) -> Result<Self> {
        if inputs.rows() == 0 {
            return Err(Error::InvalidInput("batch must contain a sample".into()));
        }
        Ok(Self {
            inputs,
            labels: None,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.rows() == 0
    }
}

/// Per-layer intermediate values recorded by [`forward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `inputs[l]` is the input to layer `l`.
    inputs: Vec<Matrix>,
    /// Pre-activation values of each layer.
    pre: Vec<Matrix>,
    output: Matrix,
}

impl ForwardCache {
    pub fn logits(&self) -> &Matrix {
        &self.output
    }
}

fn check_input(model: &ModelWeights, inputs: &Matrix) -> Result<()> {
    if inputs.cols() != model.input_dim() {
        return Err(Error::DimensionMismatch {
            context: "forward input width",
            expected: model.input_dim(),
            actual: inputs.cols(),
        });
    }
    Ok(())
}

/// Runs the network, returning logits and the cache needed by [`backward`].
pub fn forward(model: &ModelWeights, inputs: &Matrix) -> Result<(Matrix, ForwardCache)> {
    check_input(model, inputs)?;
    let mut cache = ForwardCache {
        inputs: Vec::with_capacity(model.layers.len()),
        pre: Vec::with_capacity(model.layers.len()),
        output: Matrix::zeros(0, 0),
    };
    let mut x = inputs.clone();
    for layer in &model.layers {
        let (pre, post) = layer.forward(&x);
        cache.inputs.push(x);
        cache.pre.push(pre);
        x = post;
    }
    cache.output = x.clone();
    Ok((x, cache))
}

/// Logits only.
pub fn predict(model: &ModelWeights, inputs: &Matrix) -> Result<Matrix> {
    check_input(model, inputs)?;
    let mut x = inputs.clone();
    for layer in &model.layers {
        x = layer.forward(&x).1;
    }
    Ok(x)
}

/// Backpropagates an upstream gradient on the logits into parameter gradients.
pub fn backward(
    model: &ModelWeights,
    cache: &ForwardCache,
    dlogits: &Matrix,
) -> Result<ModelWeights> {
    let nl = model.layers.len();
    if cache.inputs.len() != nl {
        return Err(Error::DimensionMismatch {
            context: "forward cache layers",
            expected: nl,
            actual: cache.inputs.len(),
        });
    }
    let last = &cache.pre[nl - 1];
    if dlogits.rows() != last.rows() || dlogits.cols() != last.cols() {
        return Err(Error::DimensionMismatch {
            context: "logit gradient",
            expected: last.rows() * last.cols(),
            actual: dlogits.rows() * dlogits.cols(),
        });
    }

    let mut grads = model.zeros_like();
    // delta holds dL/d(pre-activation) of the current layer.
    let mut delta = dlogits.clone();
    {
        let act = model.layers[nl - 1].activation;
        if act != Activation::Identity {
            for (d, &z) in delta.as_mut_slice().iter_mut().zip(last.as_slice()) {
                *d *= act.derivative(z);
            }
        }
    }
    for l in (0..nl).rev() {
        let layer = &model.layers[l];
        let a = &cache.inputs[l];
        let g = &mut grads.layers[l];
        for i in 0..a.rows() {
            let ai = a.row(i);
            let di = delta.row(i);
            for (o, &d) in di.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let gw = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
                for (w, &x) in gw.iter_mut().zip(ai) {
                    *w += d * x;
                }
                if let Some(b) = &mut g.bias {
                    b[o] += d;
                }
            }
        }
        if l == 0 {
            break;
        }
        let prev_act = model.layers[l - 1].activation;
        let prev_pre = &cache.pre[l - 1];
        let mut next = Matrix::zeros(a.rows(), layer.inputs);
        for i in 0..a.rows() {
            let di = delta.row(i);
            let ni = next.row_mut(i);
            for (o, &d) in di.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let w = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                for (n, &wv) in ni.iter_mut().zip(w) {
                    *n += d * wv;
                }
            }
            for (n, &z) in ni.iter_mut().zip(prev_pre.row(i)) {
                *n *= prev_act.derivative(z);
            }
        }
        delta = next;
    }
    Ok(grads)
}

/// Row-wise log-softmax of `logits / temperature`, stabilised by max subtraction.
pub fn log_softmax_rows(logits: &Matrix, temperature: f64) -> Matrix {
    let mut out = Matrix::zeros(logits.rows(), logits.cols());
    for i in 0..logits.rows() {
        let row = logits.row(i);
        let max = row
            .iter()
            .fold(f64::NEG_INFINITY, |m, &v| m.max(v / temperature));
        let lse = row
            .iter()
            .map(|&v| (v / temperature - max).exp())
            .sum::<f64>()
            .ln()
            + max;
        for (o, &v) in out.row_mut(i).iter_mut().zip(row) {
            *o = v / temperature - lse;
        }
    }
    out
}

pub fn softmax_rows(logits: &Matrix, temperature: f64) -> Matrix {
    let mut p = log_softmax_rows(logits, temperature);
    for v in p.as_mut_slice() {
        *v = v.exp();
    }
    p
}

/// Mean cross-entropy over the batch and its parameter gradients.
pub fn backward_ce(
    model: &ModelWeights,
    cache: &ForwardCache,
    labels: Option<&[usize]>,
) -> Result<(f64, ModelWeights)> {
    let labels = labels.ok_or(Error::MissingLabels("cross-entropy"))?;
    let (loss, dlogits) = cross_entropy(cache.logits(), labels)?;
    let grads = backward(model, cache, &dlogits)?;
    Ok((loss, grads))
}

/// Mean cross-entropy and its gradient with respect to the logits.
pub fn cross_entropy(logits: &Matrix, labels: &[usize]) -> Result<(f64, Matrix)> {
    let n = logits.rows();
    if labels.len() != n {
        return Err(Error::DimensionMismatch {
            context: "cross-entropy labels",
            expected: n,
            actual: labels.len(),
        });
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= logits.cols()) {
        return Err(Error::InvalidInput(format!(
            "label {bad} out of range for {} classes",
            logits.cols()
        )));
    }
    let logp = log_softmax_rows(logits, 1.0);
    let inv_n = 1.0 / n as f64;
    let mut loss = 0.0;
    let mut d = Matrix::zeros(n, logits.cols());
    for (i, &y) in labels.iter().enumerate() {
        loss -= logp[(i, y)];
        for (dv, &lp) in d.row_mut(i).iter_mut().zip(logp.row(i)) {
            *dv = lp.exp() * inv_n;
        }
        d[(i, y)] -= inv_n;
    }
    Ok((loss * inv_n, d))
}

/// `weights - lr * grads`.
pub fn sgd_step(weights: &ModelWeights, grads: &ModelWeights, lr: f64) -> Result<ModelWeights> {
    let mut out = weights.clone();
    sgd_step_in_place(&mut out, grads, lr)?;
    Ok(out)
}

pub fn sgd_step_in_place(weights: &mut ModelWeights, grads: &ModelWeights, lr: f64) -> Result<()> {
    weights.axpy(-lr, grads)?;
    if !weights.is_finite() {
        return Err(Error::InvalidInput(
            "non-finite weights after gradient step".into(),
        ));
    }
    Ok(())
}

/// Post-activation output of the last hidden layer.
pub fn penultimate_embeddings(model: &ModelWeights, inputs: &Matrix) -> Result<Matrix> {
    if model.layers.len() < 2 {
        return Err(Error::UnsupportedArchitecture(
            "embeddings need at least one hidden layer".into(),
        ));
    }
    if inputs.rows() == 0 {
        return Err(Error::InvalidInput("no samples to embed".into()));
    }
    check_input(model, inputs)?;
    let mut x = inputs.clone();
    for layer in &model.layers[..model.layers.len() - 1] {
        x = layer.forward(&x).1;
    }
    Ok(x)
}

/// Fraction of rows whose argmax logit equals the label.
pub fn accuracy(model: &ModelWeights, inputs: &Matrix, labels: &[usize]) -> Result<f64> {
    if labels.is_empty() {
        return Ok(0.0);
    }
    let pred = predict(model, inputs)?.argmax_rows();
    let hits = pred.iter().zip(labels).filter(|(p, y)| p == y).count();
    Ok(hits as f64 / labels.len() as f64)
}

/// Shuffled mini-batch index lists covering `0..n`.
pub fn minibatches(n: usize, batch_size: usize, rng: &mut Rng) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        idx.swap(i, j);
    }
    idx.chunks(batch_size.max(1))
        .map(<[usize]>::to_vec)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::finite_diff_check;
    use crate::seed;

    fn single_identity() -> ModelWeights {
        ModelWeights::new(vec![DenseLayer::new(
            2,
            2,
            vec![1.0, 0.0, 0.0, 1.0],
            Some(vec![0.0, 0.0]),
            Activation::Identity,
        )
        .unwrap()])
        .unwrap()
    }

    #[test]
    fn zero_weights_give_zero_logits_and_uniform_softmax() {
        let mut rng = seed::rng_from(1);
        let m = ModelWeights::init_mlp(&[3, 5, 4], &mut rng)
            .unwrap()
            .zeros_like();
        let x = Matrix::from_rows(&[vec![1.0, -2.0, 3.0], vec![0.5, 0.5, 0.5]]).unwrap();
        let (logits, _) = forward(&m, &x).unwrap();
        assert!(logits.as_slice().iter().all(|&v| v == 0.0));
        let p = softmax_rows(&logits, 1.0);
        assert!(p.as_slice().iter().all(|&v| (v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let x = Matrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let (logits, _) = forward(&single_identity(), &x).unwrap();
        assert_eq!(logits.as_slice(), &[1.0, 2.0]);
    }

    #[test]
    fn wrong_input_width_rejected() {
        let x = Matrix::from_rows(&[vec![1.0, 2.0, 3.0]]).unwrap();
        assert!(matches!(
            forward(&single_identity(), &x),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn mismatched_layers_rejected() {
        let a = DenseLayer::new(2, 3, vec![0.0; 6], None, Activation::Relu).unwrap();
        let b = DenseLayer::new(2, 2, vec![0.0; 4], None, Activation::Identity).unwrap();
        assert!(ModelWeights::new(vec![a, b]).is_err());
    }

    #[test]
    fn golden_logits_for_seeded_net() {
        let mut rng = seed::rng_from(2024);
        let m = ModelWeights::init_mlp(&[2, 4, 3], &mut rng).unwrap();
        let x = Matrix::from_rows(&[vec![0.5, -1.0], vec![1.5, 2.0]]).unwrap();
        let logits = predict(&m, &x).unwrap();
        for (a, b) in logits.as_slice().iter().zip(GOLDEN_LOGITS) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    // Pinned from the seeded net; re-derived with numpy from the printed weights.
    const GOLDEN_LOGITS: [f64; 6] = [
        0.16340403116693833,
        0.06628284087125016,
        0.031860087677365125,
        1.867007781940241,
        0.382220268043871,
        0.24275780304480282,
    ];

    #[test]
    fn uniform_logits_cost_ln_classes() {
        let logits = Matrix::zeros(3, 4);
        let (loss, _) = cross_entropy(&logits, &[0, 1, 3]).unwrap();
        assert!((loss - 4f64.ln()).abs() < 1e-12);
        assert!((loss - 1.386294).abs() < 1e-6);
    }

    #[test]
    fn confident_correct_logits_cost_nothing() {
        let logits = Matrix::from_rows(&[vec![800.0, 0.0, 0.0]]).unwrap();
        let (loss, _) = cross_entropy(&logits, &[0]).unwrap();
        assert!((0.0..1e-300).contains(&loss));
    }

    #[test]
    fn missing_labels_is_contract_violation() {
        let m = single_identity();
        let x = Matrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let (_, cache) = forward(&m, &x).unwrap();
        assert!(matches!(
            backward_ce(&m, &cache, None),
            Err(Error::MissingLabels(_))
        ));
    }

    #[test]
    fn ce_gradients_match_finite_differences() {
        let mut rng = seed::rng_from(5);
        let m = ModelWeights::init_mlp(&[3, 6, 4], &mut rng).unwrap();
        let x = Matrix::from_rows(&[vec![0.3, -0.7, 1.1], vec![-1.2, 0.4, 0.9]]).unwrap();
        let y = [2usize, 0];
        let (_, cache) = forward(&m, &x).unwrap();
        let (_, g) = backward_ce(&m, &cache, Some(&y)).unwrap();
        let err = finite_diff_check(
            |p| {
                let mm = m.with_flat(p).unwrap();
                cross_entropy(&predict(&mm, &x).unwrap(), &y).unwrap().0
            },
            &m.to_flat(),
            &g.to_flat(),
            1e-5,
        );
        assert!(err < 1e-4, "max relative error {err}");
    }

    #[test]
    fn sgd_one_step_arithmetic() {
        let layer = |w: Vec<f64>| {
            ModelWeights::new(vec![
                DenseLayer::new(2, 1, w, None, Activation::Identity).unwrap()
            ])
            .unwrap()
        };
        let w = layer(vec![1.0, 2.0]);
        let g = layer(vec![1.0, -1.0]);
        assert_eq!(
            sgd_step(&w, &g, 0.5).unwrap().layers()[0].weights,
            vec![0.5, 2.5]
        );
        assert_eq!(sgd_step(&w, &g, 0.0).unwrap(), w);
    }

    #[test]
    fn sgd_converges_on_convex_quadratic() {
        // f(w) = Σ a_i (w_i - c_i)^2 has its minimizer at w = c.
        let a = [1.0, 3.0, 0.5];
        let c = [0.7, -1.3, 2.0];
        let mut w = ModelWeights::new(vec![DenseLayer::new(
            3,
            1,
            vec![0.0; 3],
            None,
            Activation::Identity,
        )
        .unwrap()])
        .unwrap();
        for _ in 0..2000 {
            let mut g = w.zeros_like();
            for i in 0..3 {
                g.layers_mut()[0].weights[i] = 2.0 * a[i] * (w.layers()[0].weights[i] - c[i]);
            }
            w = sgd_step(&w, &g, 0.1).unwrap();
        }
        for (w, c) in w.layers()[0].weights.iter().zip(c) {
            assert!((w - c).abs() < 1e-6);
        }
    }

    #[test]
    fn embeddings_are_hidden_activations() {
        let mut rng = seed::rng_from(9);
        let m = ModelWeights::init_mlp(&[2, 3, 2], &mut rng).unwrap();
        let x = Matrix::from_rows(&[vec![0.2, -0.4], vec![0.2, -0.4]]).unwrap();
        let z = penultimate_embeddings(&m, &x).unwrap();
        let l = &m.layers()[0];
        for o in 0..3 {
            let pre = l.weight(o, 0) * 0.2 + l.weight(o, 1) * -0.4 + l.bias.as_ref().unwrap()[o];
            assert_eq!(z[(0, o)], pre.max(0.0));
        }
        assert_eq!(z.row(0), z.row(1));
        assert!(penultimate_embeddings(&single_identity(), &x).is_err());
    }

    #[test]
    fn golden_embeddings_for_seeded_net() {
        let mut rng = seed::rng_from(2024);
        let m = ModelWeights::init_mlp(&[2, 4, 3], &mut rng).unwrap();
        let x = Matrix::from_rows(&[vec![0.5, -1.0], vec![1.5, 2.0]]).unwrap();
        let z = penultimate_embeddings(&m, &x).unwrap();
        for (a, b) in z.as_slice().iter().zip(GOLDEN_EMBEDDINGS) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    const GOLDEN_EMBEDDINGS: [f64; 8] = [
        0.0,
        0.0,
        0.1978039254751286,
        0.0,
        0.9309537697400305,
        2.18859683317433,
        0.5624692525518219,
        0.0,
    ];

    #[test]
    fn forward_is_bitwise_pure() {
        let mut rng = seed::rng_from(3);
        let m = ModelWeights::init_mlp(&[4, 8, 3], &mut rng).unwrap();
        let x = Matrix::from_rows(&[vec![0.1, 0.2, 0.3, 0.4]]).unwrap();
        let a = predict(&m, &x).unwrap();
        let b = predict(&m, &x).unwrap();
        assert!(a
            .as_slice()
            .iter()
            .zip(b.as_slice())
            .all(|(p, q)| p.to_bits() == q.to_bits()));
    }
}
