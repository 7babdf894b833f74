//! Sequential networks: the three-block convolutional classifier and the
//! one-hidden-layer perceptron share this representation.

use rand::Rng as _;

use super::layers::{self, Mode, Padding, PoolIndex};
use super::tensor::{argmax, Scalar, Tensor};
use crate::error::{Error, Result};
use crate::rng::{self, tag, Rng};

/// Architecture of the convolutional classifier: three blocks of
/// `conv 3×3 → ReLU → conv 3×3 → ReLU → max-pool 2×2 → dropout`, then
/// `dense → ReLU → dropout → dense`.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkConfig {
    /// `(channels, height, width)` of the input.
    pub input: (usize, usize, usize),
    pub block_widths: [usize; 3],
    pub block_dropout: [f64; 3],
    pub dense1_units: usize,
    pub dense_dropout: f64,
    pub n_classes: usize,
    pub padding: Padding,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            input: (1, 64, 64),
            block_widths: [16, 32, 64],
            block_dropout: [0.25; 3],
            dense1_units: 128,
            dense_dropout: 0.5,
            n_classes: 3,
            padding: Padding::Same,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        let (c, h, w) = self.input;
        if c == 0 || h == 0 || w == 0 {
            return Err(Error::Config(format!("input shape {:?} must be positive", self.input)));
        }
        if self.padding == Padding::Same && (h % 8 != 0 || w % 8 != 0) {
            return Err(Error::ShapeMismatch(format!(
                "input {h}x{w} must be divisible by 8 for three 2x2 pools"
            )));
        }
        if self.padding == Padding::Valid {
            let (mut h, mut w) = (h, w);
            for _ in 0..3 {
                if h < 5 || w < 5 {
                    return Err(Error::ShapeMismatch(format!(
                        "input {:?} shrinks below 5x5 before a valid-padded block",
                        self.input
                    )));
                }
                h = (h - 4).div_ceil(2);
                w = (w - 4).div_ceil(2);
            }
        }
        if self.block_widths.contains(&0) || self.dense1_units == 0 {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        if self.n_classes < 2 {
            return Err(Error::Config("need at least two classes".into()));
        }
        for r in self.block_dropout.iter().chain([&self.dense_dropout]) {
            if !(0.0..1.0).contains(r) {
                return Err(Error::Config(format!("dropout rate {r} not in [0, 1)")));
            }
        }
        Ok(())
    }

    /// Feature-map shape entering the classifier head.
    pub fn feature_shape(&self) -> (usize, usize, usize) {
        let (_, mut h, mut w) = self.input;
        for _ in 0..3 {
            if self.padding == Padding::Valid {
                h -= 4;
                w -= 4;
            }
            h = h.div_ceil(2);
            w = w.div_ceil(2);
        }
        (self.block_widths[2], h, w)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Layer<T> {
    Conv {
        /// `(out, in, 3, 3)`
        kernels: Tensor<T>,
        bias: Vec<T>,
        padding: Padding,
    },
    Relu,
    MaxPool,
    Dropout {
        rate: f64,
    },
    Flatten,
    Dense {
        /// `(out, in)` row-major
        weights: Vec<T>,
        bias: Vec<T>,
        n_in: usize,
    },
}

impl<T: Scalar> Layer<T> {
    pub fn conv(c_in: usize, c_out: usize, padding: Padding, r: &mut Rng) -> Self {
        let bound = (6.0 / (c_in * 9) as f64).sqrt();
        let kernels = Tensor::from_fn(vec![c_out, c_in, 3, 3], |_| {
            T::from_f64(r.random_range(-bound..bound))
        });
        Layer::Conv {
            kernels,
            bias: vec![T::zero(); c_out],
            padding,
        }
    }

    pub fn dense(n_in: usize, n_out: usize, r: &mut Rng) -> Self {
        let bound = (6.0 / n_in as f64).sqrt();
        Layer::Dense {
            weights: (0..n_in * n_out)
                .map(|_| T::from_f64(r.random_range(-bound..bound)))
                .collect(),
            bias: vec![T::zero(); n_out],
            n_in,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Layer::Conv { .. } => "conv",
            Layer::Relu => "relu",
            Layer::MaxPool => "maxpool",
            Layer::Dropout { .. } => "dropout",
            Layer::Flatten => "flatten",
            Layer::Dense { .. } => "dense",
        }
    }

    fn params_mut(&mut self) -> Option<(&mut [T], &mut [T])> {
        match self {
            Layer::Conv { kernels, bias, .. } => Some((kernels.data_mut(), bias)),
            Layer::Dense { weights, bias, .. } => Some((weights, bias)),
            _ => None,
        }
    }

    fn params(&self) -> Option<(&[T], &[T])> {
        match self {
            Layer::Conv { kernels, bias, .. } => Some((kernels.data(), bias)),
            Layer::Dense { weights, bias, .. } => Some((weights, bias)),
            _ => None,
        }
    }
}

/// What a training-mode forward pass remembers for backpropagation.
pub(crate) enum Cache<T> {
    Conv {
        cols: layers::Cols<T>,
        in_shape: (usize, usize, usize),
    },
    Relu(Vec<T>),
    Pool(PoolIndex),
    Dropout(Option<Vec<T>>),
    Flatten,
    Dense(Vec<T>),
}

/// Per-layer parameter gradients, aligned with [`Sequential::layers`].
#[derive(Clone, Debug, PartialEq)]
pub struct Grads<T> {
    pub layers: Vec<Option<(Vec<T>, Vec<T>)>>,
}

impl<T: Scalar> Grads<T> {
    pub fn zeros_like(model: &Sequential<T>) -> Self {
        Self {
            layers: model
                .layers
                .iter()
                .map(|l| l.params().map(|(w, b)| (vec![T::zero(); w.len()], vec![T::zero(); b.len()])))
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Grads<T>) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            if let (Some((aw, ab)), Some((bw, bb))) = (a, b) {
                for (x, &y) in aw.iter_mut().zip(bw) {
                    *x = *x + y;
                }
                for (x, &y) in ab.iter_mut().zip(bb) {
                    *x = *x + y;
                }
            }
        }
    }

    pub fn scale(&mut self, s: T) {
        for (w, b) in self.layers.iter_mut().flatten() {
            w.iter_mut().chain(b.iter_mut()).for_each(|v| *v = *v * s);
        }
    }

    /// All gradient slices in parameter order.
    pub fn slices(&self) -> Vec<&[T]> {
        self.layers
            .iter()
            .flatten()
            .flat_map(|(w, b)| [w.as_slice(), b.as_slice()])
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sequential<T> {
    pub layers: Vec<Layer<T>>,
    pub input_shape: Vec<usize>,
    pub n_classes: usize,
}

impl<T: Scalar> Sequential<T> {
    /// The convolutional classifier, initialized with Kaiming-uniform weights.
    pub fn cnn(cfg: &NetworkConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut r = rng::stream(seed, &[tag::INIT]);
        let mut layers = Vec::new();
        let mut c_in = cfg.input.0;
        for (&width, &rate) in cfg.block_widths.iter().zip(&cfg.block_dropout) {
            layers.push(Layer::conv(c_in, width, cfg.padding, &mut r));
            layers.push(Layer::Relu);
            layers.push(Layer::conv(width, width, cfg.padding, &mut r));
            layers.push(Layer::Relu);
            layers.push(Layer::MaxPool);
            layers.push(Layer::Dropout { rate });
            c_in = width;
        }
        let (c, h, w) = cfg.feature_shape();
        if h == 0 || w == 0 {
            return Err(Error::ShapeMismatch(format!("input {:?} too small", cfg.input)));
        }
        layers.push(Layer::Flatten);
        layers.push(Layer::dense(c * h * w, cfg.dense1_units, &mut r));
        layers.push(Layer::Relu);
        layers.push(Layer::Dropout {
            rate: cfg.dense_dropout,
        });
        layers.push(Layer::dense(cfg.dense1_units, cfg.n_classes, &mut r));
        let (ic, ih, iw) = cfg.input;
        Ok(Self {
            layers,
            input_shape: vec![ic, ih, iw],
            n_classes: cfg.n_classes,
        })
    }

    /// `dense → ReLU → dense` over flattened inputs.
    pub fn mlp(n_in: usize, hidden: usize, n_classes: usize, seed: u64) -> Result<Self> {
        if n_in == 0 || hidden == 0 || n_classes < 2 {
            return Err(Error::Config(format!(
                "mlp needs positive sizes and >= 2 classes, got {n_in}/{hidden}/{n_classes}"
            )));
        }
        let mut r = rng::stream(seed, &[tag::INIT]);
        Ok(Self {
            layers: vec![
                Layer::Flatten,
                Layer::dense(n_in, hidden, &mut r),
                Layer::Relu,
                Layer::dense(hidden, n_classes, &mut r),
            ],
            input_shape: vec![n_in],
            n_classes,
        })
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .filter_map(|l| l.params())
            .map(|(w, b)| w.len() + b.len())
            .sum()
    }

    /// Mutable parameter slices in the same order as [`Grads::slices`].
    pub fn param_slices_mut(&mut self) -> Vec<&mut [T]> {
        self.layers
            .iter_mut()
            .filter_map(|l| l.params_mut())
            .flat_map(|(w, b)| [w, b])
            .collect()
    }

    pub fn param_slices(&self) -> Vec<&[T]> {
        self.layers
            .iter()
            .filter_map(|l| l.params())
            .flat_map(|(w, b)| [w, b])
            .collect()
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        let n: usize = self.input_shape.iter().product();
        let ok = if self.input_shape.len() == 1 {
            x.len() == n
        } else {
            x.shape() == self.input_shape.as_slice()
        };
        if ok {
            Ok(())
        } else {
            Err(Error::ShapeMismatch(format!(
                "network expects {:?}, got {:?}",
                self.input_shape,
                x.shape()
            )))
        }
    }

    /// Logits for one input. `rng` only matters in [`Mode::Train`].
    pub fn forward(&self, x: &Tensor<T>, mode: Mode, rng: &mut Rng) -> Result<Vec<T>> {
        self.run(x, mode, rng, None)
    }

    pub(crate) fn forward_train(&self, x: &Tensor<T>, rng: &mut Rng) -> Result<(Vec<T>, Vec<Cache<T>>)> {
        let mut caches = Vec::with_capacity(self.layers.len());
        let logits = self.run(x, Mode::Train, rng, Some(&mut caches))?;
        Ok((logits, caches))
    }

    fn run(
        &self,
        x: &Tensor<T>,
        mode: Mode,
        rng: &mut Rng,
        mut caches: Option<&mut Vec<Cache<T>>>,
    ) -> Result<Vec<T>> {
        self.check_input(x)?;
        let mut a = x.clone();
        for layer in &self.layers {
            let (next, cache) = match layer {
                Layer::Conv {
                    kernels,
                    bias,
                    padding,
                } => {
                    let in_shape = a.chw()?;
                    if kernels.shape()[1] != in_shape.0 {
                        return Err(Error::ShapeMismatch(format!(
                            "conv expects {} channels, got {}",
                            kernels.shape()[1],
                            in_shape.0
                        )));
                    }
                    let cols = layers::im2col(&a, *padding)?;
                    let y = layers::conv_from_cols(&cols, kernels.data(), bias, kernels.shape()[0]);
                    (y, Cache::Conv { cols, in_shape })
                }
                Layer::Relu => {
                    let mut y = a;
                    layers::relu(y.data_mut());
                    let keep = y.data().to_vec();
                    (y, Cache::Relu(keep))
                }
                Layer::MaxPool => {
                    let (y, idx) = layers::maxpool2x2(&a)?;
                    (y, Cache::Pool(idx))
                }
                Layer::Dropout { rate } => {
                    let shape = a.shape().to_vec();
                    let (y, mask) = layers::dropout(a.data(), *rate, mode, rng);
                    (Tensor::new(shape, y)?, Cache::Dropout(mask))
                }
                Layer::Flatten => {
                    let n = a.len();
                    (a.reshape(vec![n])?, Cache::Flatten)
                }
                Layer::Dense {
                    weights,
                    bias,
                    n_in,
                } => {
                    if a.len() != *n_in {
                        return Err(Error::ShapeMismatch(format!(
                            "dense expects {n_in} inputs, got {}",
                            a.len()
                        )));
                    }
                    let y = layers::dense(a.data(), weights, bias)?;
                    let n = y.len();
                    (Tensor::new(vec![n], y)?, Cache::Dense(a.into_data()))
                }
            };
            if let Some(c) = caches.as_deref_mut() {
                c.push(cache);
            }
            a = next;
        }
        Ok(a.into_data())
    }

    /// Backpropagates `dlogits` through cached activations. Returns the
    /// parameter gradients and, when `need_dx`, the gradient w.r.t. the input.
    pub(crate) fn backward(
        &self,
        caches: &[Cache<T>],
        dlogits: &[T],
        need_dx: bool,
    ) -> (Grads<T>, Option<Vec<T>>) {
        let mut grads: Vec<Option<(Vec<T>, Vec<T>)>> = vec![None; self.layers.len()];
        let mut g = dlogits.to_vec();
        // index of the first layer whose input gradient is needed
        let stop = if need_dx {
            0
        } else {
            self.layers
                .iter()
                .position(|l| l.params().is_some())
                .unwrap_or(self.layers.len())
        };
        for (i, (layer, cache)) in self.layers.iter().zip(caches).enumerate().rev() {
            let want_dx = i > stop || need_dx;
            match (layer, cache) {
                (Layer::Conv { kernels, padding, .. }, Cache::Conv { cols, in_shape }) => {
                    let cg = layers::conv_backward_cols(
                        cols,
                        *in_shape,
                        kernels.data(),
                        *padding,
                        &g,
                        kernels.shape()[0],
                        want_dx,
                    );
                    grads[i] = Some((cg.dkernels, cg.dbias));
                    match cg.dx {
                        Some(dx) => g = dx.into_data(),
                        None => break,
                    }
                }
                (Layer::Relu, Cache::Relu(y)) => layers::relu_backward(y, &mut g),
                (Layer::MaxPool, Cache::Pool(idx)) => {
                    g = layers::maxpool2x2_backward(idx, &g).into_data();
                }
                (Layer::Dropout { .. }, Cache::Dropout(mask)) => {
                    if let Some(m) = mask {
                        for (v, &k) in g.iter_mut().zip(m) {
                            *v = *v * k;
                        }
                    }
                }
                (Layer::Flatten, Cache::Flatten) => {}
                (Layer::Dense { weights, .. }, Cache::Dense(x)) => {
                    let dg = layers::dense_backward(x, weights, &g, want_dx);
                    grads[i] = Some((dg.dweights, dg.dbias));
                    if !want_dx {
                        break;
                    }
                    g = dg.dx;
                }
                _ => unreachable!("cache does not match layer"),
            }
        }
        // layers never reached (below the first parameterized one) get zeros
        for (slot, layer) in grads.iter_mut().zip(&self.layers) {
            if slot.is_none() {
                if let Some((w, b)) = layer.params() {
                    *slot = Some((vec![T::zero(); w.len()], vec![T::zero(); b.len()]));
                }
            }
        }
        (Grads { layers: grads }, need_dx.then_some(g))
    }

    /// Loss, parameter gradients and input gradient for one labeled example.
    pub fn loss_and_grads(
        &self,
        x: &Tensor<T>,
        target: usize,
        rng: &mut Rng,
        need_dx: bool,
    ) -> Result<(T, Vec<T>, Grads<T>, Option<Vec<T>>)> {
        let (logits, caches) = self.forward_train(x, rng)?;
        let (loss, probs) = layers::softmax_xent(&logits, target);
        let dlogits = layers::softmax_xent_grad(&probs, target);
        let (grads, dx) = self.backward(&caches, &dlogits, need_dx);
        Ok((loss, logits, grads, dx))
    }

    /// Class index (ties → lowest) and softmax probabilities, inference mode.
    pub fn predict(&self, x: &Tensor<T>) -> Result<(usize, Vec<T>)> {
        let logits = self.forward(x, Mode::Infer, &mut rng::stream(0, &[]))?;
        let probs = layers::softmax(&logits);
        Ok((argmax(&logits), probs))
    }

    pub fn cast<U: Scalar>(&self) -> Sequential<U> {
        let conv = |v: &[T]| v.iter().map(|x| U::from_f64(Scalar::to_f64(*x))).collect::<Vec<U>>();
        Sequential {
            layers: self
                .layers
                .iter()
                .map(|l| match l {
                    Layer::Conv {
                        kernels,
                        bias,
                        padding,
                    } => Layer::Conv {
                        kernels: kernels.cast(),
                        bias: conv(bias),
                        padding: *padding,
                    },
                    Layer::Relu => Layer::Relu,
                    Layer::MaxPool => Layer::MaxPool,
                    Layer::Dropout { rate } => Layer::Dropout { rate: *rate },
                    Layer::Flatten => Layer::Flatten,
                    Layer::Dense {
                        weights,
                        bias,
                        n_in,
                    } => Layer::Dense {
                        weights: conv(weights),
                        bias: conv(bias),
                        n_in: *n_in,
                    },
                })
                .collect(),
            input_shape: self.input_shape.clone(),
            n_classes: self.n_classes,
        }
    }
}
