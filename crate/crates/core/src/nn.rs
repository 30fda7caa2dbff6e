//! Dense networks from first principles.
//!
//! Everything is generic over [`Scalar`] so training runs in `f32` while
//! gradient checks run the same code in `f64`.

use std::f64::consts::PI;
use std::fmt::Debug;
use std::iter::Sum;

use num_traits::{Float, FromPrimitive};
use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NnError {
    #[error("input has length {found}, network expects {expected}")]
    InputDim { expected: usize, found: usize },
    #[error("output gradient has length {found}, network emits {expected}")]
    OutputDim { expected: usize, found: usize },
    #[error("layer dims {0:?} need at least an input and an output")]
    BadDims(Vec<usize>),
    #[error("forward cache is stale (cache version {cache}, parameters at {params})")]
    StaleCache { cache: u64, params: u64 },
    #[error("non-finite gradient in {0}")]
    NonFiniteGradient(String),
    #[error("gradient shapes do not match the parameters")]
    ShapeMismatch,
    #[error("step {step} outside 0..={total}")]
    StepOutOfRange { step: usize, total: usize },
    #[error("invalid schedule: {0}")]
    BadSchedule(String),
    #[error("every position is masked")]
    AllMasked,
    #[error("temperature {0} must be positive")]
    BadTemperature(f64),
}

pub type Result<T, E = NnError> = std::result::Result<T, E>;

pub trait Scalar: Float + FromPrimitive + Sum + Debug + Send + Sync + 'static {
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("representable")
    }

    fn f64(self) -> f64 {
        self.to_f64().expect("finite float")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Dense layer `y = W x + b`, `W` stored row-major as `n_out x n_in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer<T> {
    pub n_in: usize,
    pub n_out: usize,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> Layer<T> {
    pub fn zeros(n_in: usize, n_out: usize) -> Self {
        Self {
            n_in,
            n_out,
            weight: vec![T::zero(); n_in * n_out],
            bias: vec![T::zero(); n_out],
        }
    }

    fn apply(&self, x: &[T]) -> Vec<T> {
        self.weight
            .chunks_exact(self.n_in)
            .zip(&self.bias)
            .map(|(row, &b)| row.iter().zip(x).fold(b, |acc, (&w, &v)| acc + w * v))
            .collect()
    }
}

/// ReLU multilayer perceptron; the last layer is linear.
#[derive(Debug, Clone)]
pub struct Mlp<T> {
    layers: Vec<Layer<T>>,
    version: u64,
}

/// Compares parameters only; the cache version is bookkeeping.
impl<T: PartialEq> PartialEq for Mlp<T> {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

/// Activations recorded by [`Mlp::forward`]: the input, each hidden ReLU
/// output, and the logits.
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    activations: Vec<Vec<T>>,
    version: u64,
}

impl<T> ForwardCache<T> {
    pub fn logits(&self) -> &[T] {
        self.activations.last().expect("at least input and output")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads<T> {
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads<T> {
    pub layers: Vec<LayerGrads<T>>,
}

impl<T: Scalar> MlpGrads<T> {
    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weight.iter_mut().zip(&b.weight).for_each(|(x, &y)| *x = *x + y);
            a.bias.iter_mut().zip(&b.bias).for_each(|(x, &y)| *x = *x + y);
        }
    }

    pub fn scale(&mut self, s: T) {
        for l in &mut self.layers {
            l.weight.iter_mut().for_each(|x| *x = *x * s);
            l.bias.iter_mut().for_each(|x| *x = *x * s);
        }
    }

    /// `(name, values)` for every tensor, in parameter order.
    pub fn named(&self) -> Vec<(String, &[T])> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            out.push((format!("layer{i}.weight"), l.weight.as_slice()));
            out.push((format!("layer{i}.bias"), l.bias.as_slice()));
        }
        out
    }
}

impl<T: Scalar> Mlp<T> {
    pub fn zeros(dims: &[usize]) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(NnError::BadDims(dims.to_vec()));
        }
        Ok(Self {
            layers: dims.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect(),
            version: 0,
        })
    }

    /// He-uniform weights (`U(±sqrt(6 / fan_in))`), zero biases.
    pub fn he_uniform<R: Rng>(dims: &[usize], rng: &mut R) -> Result<Self> {
        let mut mlp = Self::zeros(dims)?;
        for layer in &mut mlp.layers {
            let bound = (6.0 / layer.n_in as f64).sqrt();
            for w in &mut layer.weight {
                *w = T::of(rng.gen_range(-bound..bound));
            }
        }
        Ok(mlp)
    }

    /// `input -> hidden x 4 -> output`: five weight layers.
    pub fn five_layer<R: Rng>(input: usize, hidden: usize, output: usize, rng: &mut R) -> Result<Self> {
        Self::he_uniform(&[input, hidden, hidden, hidden, hidden, output], rng)
    }

    pub fn from_layers(layers: Vec<Layer<T>>) -> Result<Self> {
        let dims: Vec<usize> = layers
            .first()
            .map(|l| l.n_in)
            .into_iter()
            .chain(layers.iter().map(|l| l.n_out))
            .collect();
        let consistent = layers.windows(2).all(|w| w[0].n_out == w[1].n_in)
            && layers
                .iter()
                .all(|l| l.weight.len() == l.n_in * l.n_out && l.bias.len() == l.n_out);
        if layers.is_empty() || !consistent {
            return Err(NnError::BadDims(dims));
        }
        Ok(Self { layers, version: 0 })
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.layers[0].n_in];
        d.extend(self.layers.iter().map(|l| l.n_out));
        d
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].n_in
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").n_out
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        self.version += 1;
        &mut self.layers
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().chain(&l.bias).all(|v| v.is_finite()))
    }

    pub fn forward(&self, input: &[T]) -> Result<(Vec<T>, ForwardCache<T>)> {
        if input.len() != self.input_dim() {
            return Err(NnError::InputDim {
                expected: self.input_dim(),
                found: input.len(),
            });
        }
        let last = self.layers.len() - 1;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(input.to_vec());
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = layer.apply(activations.last().expect("non-empty"));
            if i < last {
                z.iter_mut().for_each(|v| *v = v.max(T::zero()));
            }
            activations.push(z);
        }
        let out = activations.last().expect("non-empty").clone();
        Ok((
            out,
            ForwardCache {
                activations,
                version: self.version,
            },
        ))
    }

    /// Logits only.
    pub fn predict(&self, input: &[T]) -> Result<Vec<T>> {
        Ok(self.forward(input)?.0)
    }

    /// Reverse-mode gradients of `<output_gradient, logits>` with respect to
    /// every parameter and to the input.
    pub fn backward(&self, cache: &ForwardCache<T>, output_gradient: &[T]) -> Result<(MlpGrads<T>, Vec<T>)> {
        if cache.version != self.version || cache.activations.len() != self.layers.len() + 1 {
            return Err(NnError::StaleCache {
                cache: cache.version,
                params: self.version,
            });
        }
        if output_gradient.len() != self.output_dim() {
            return Err(NnError::OutputDim {
                expected: self.output_dim(),
                found: output_gradient.len(),
            });
        }
        let mut grads: Vec<LayerGrads<T>> = Vec::with_capacity(self.layers.len());
        let mut delta = output_gradient.to_vec();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let a_in = &cache.activations[i];
            let mut gw = vec![T::zero(); layer.weight.len()];
            for (row, &d) in gw.chunks_exact_mut(layer.n_in).zip(&delta) {
                if d != T::zero() {
                    row.iter_mut().zip(a_in).for_each(|(g, &a)| *g = d * a);
                }
            }
            let gb = delta.clone();
            let mut prev = vec![T::zero(); layer.n_in];
            for (row, &d) in layer.weight.chunks_exact(layer.n_in).zip(&delta) {
                if d != T::zero() {
                    prev.iter_mut().zip(row).for_each(|(p, &w)| *p = *p + d * w);
                }
            }
            if i > 0 {
                // ReLU: the stored activation is zero exactly where the unit was off
                prev.iter_mut()
                    .zip(a_in)
                    .for_each(|(p, &a)| if a <= T::zero() { *p = T::zero() });
            }
            grads.push(LayerGrads { weight: gw, bias: gb });
            delta = prev;
        }
        grads.reverse();
        Ok((MlpGrads { layers: grads }, delta))
    }

    pub fn zero_grads(&self) -> MlpGrads<T> {
        MlpGrads {
            layers: self
                .layers
                .iter()
                .map(|l| LayerGrads {
                    weight: vec![T::zero(); l.weight.len()],
                    bias: vec![T::zero(); l.bias.len()],
                })
                .collect(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> Mlp<U> {
        Mlp {
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    n_in: l.n_in,
                    n_out: l.n_out,
                    weight: l.weight.iter().map(|&w| U::of(w.f64())).collect(),
                    bias: l.bias.iter().map(|&b| U::of(b.f64())).collect(),
                })
                .collect(),
            version: 0,
        }
    }
}

pub fn mlp_forward<T: Scalar>(params: &Mlp<T>, input: &[T]) -> Result<(Vec<T>, ForwardCache<T>)> {
    params.forward(input)
}

pub fn mlp_backward<T: Scalar>(
    params: &Mlp<T>,
    cache: &ForwardCache<T>,
    output_gradient: &[T],
) -> Result<(MlpGrads<T>, Vec<T>)> {
    params.backward(cache, output_gradient)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<T> {
    pub first_moment: MlpGrads<T>,
    pub second_moment: MlpGrads<T>,
    pub step_count: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl<T: Scalar> OptimizerState<T> {
    /// AdamW with the usual defaults (0.9, 0.999, 1e-8) and the given decay.
    pub fn new(params: &Mlp<T>, weight_decay: f64) -> Self {
        Self {
            first_moment: params.zero_grads(),
            second_moment: params.zero_grads(),
            step_count: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
        }
    }
}

/// One AdamW update: decoupled decay `θ -= lr·λ·θ`, then the bias-corrected
/// adaptive step.
pub fn adamw_step<T: Scalar>(
    params: &mut Mlp<T>,
    grads: &MlpGrads<T>,
    state: &mut OptimizerState<T>,
    lr: f64,
) -> Result<()> {
    let shapes_match = |g: &MlpGrads<T>| {
        g.layers.len() == params.layers.len()
            && g.layers.iter().zip(&params.layers).all(|(g, p)| {
                g.weight.len() == p.weight.len() && g.bias.len() == p.bias.len()
            })
    };
    if !shapes_match(grads) || !shapes_match(&state.first_moment) || !shapes_match(&state.second_moment) {
        return Err(NnError::ShapeMismatch);
    }
    for (name, values) in grads.named() {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(NnError::NonFiniteGradient(name));
        }
    }
    state.step_count += 1;
    let t = state.step_count as i32;
    let (b1, b2) = (T::of(state.beta1), T::of(state.beta2));
    let c1 = T::of(1.0 - state.beta1.powi(t));
    let c2 = T::of(1.0 - state.beta2.powi(t));
    let lr_t = T::of(lr);
    let decay = T::one() - T::of(lr * state.weight_decay);
    let eps = T::of(state.eps);
    let one = T::one();

    let update = |theta: &mut [T], g: &[T], m: &mut [T], v: &mut [T]| {
        for i in 0..theta.len() {
            theta[i] = theta[i] * decay;
            m[i] = b1 * m[i] + (one - b1) * g[i];
            v[i] = b2 * v[i] + (one - b2) * g[i] * g[i];
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            theta[i] = theta[i] - lr_t * m_hat / (v_hat.sqrt() + eps);
        }
    };
    params.version += 1;
    for (l, layer) in params.layers.iter_mut().enumerate() {
        let g = &grads.layers[l];
        let m = &mut state.first_moment.layers[l];
        let v = &mut state.second_moment.layers[l];
        update(&mut layer.weight, &g.weight, &mut m.weight, &mut v.weight);
        update(&mut layer.bias, &g.bias, &mut m.bias, &mut v.bias);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LrSchedule {
    pub eta_max: f64,
    pub eta_min: f64,
    pub total_steps: usize,
}

impl LrSchedule {
    pub fn new(eta_max: f64, eta_min: f64, total_steps: usize) -> Result<Self> {
        if !(eta_min <= eta_max) || eta_min < 0.0 {
            return Err(NnError::BadSchedule(format!("eta_min {eta_min} > eta_max {eta_max}")));
        }
        if total_steps == 0 {
            return Err(NnError::BadSchedule("total_steps must be at least 1".into()));
        }
        Ok(Self {
            eta_max,
            eta_min,
            total_steps,
        })
    }
}

/// Cosine annealing from `eta_max` at step 0 to `eta_min` at `total_steps`.
pub fn cosine_lr(schedule: &LrSchedule, step: usize) -> Result<f64> {
    if step > schedule.total_steps {
        return Err(NnError::StepOutOfRange {
            step,
            total: schedule.total_steps,
        });
    }
    let progress = step as f64 / schedule.total_steps as f64;
    Ok(schedule.eta_min + 0.5 * (schedule.eta_max - schedule.eta_min) * (1.0 + (PI * progress).cos()))
}

fn softplus<T: Scalar>(x: T) -> T {
    // log(1 + e^x) without overflow
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub fn logistic<T: Scalar>(x: T) -> T {
    sigmoid(x)
}

/// Weighted binary cross-entropy on a logit and its derivative.
///
/// `loss = w·y·softplus(-z) + (1 - y)·softplus(z)`, which equals
/// `-[w·y·log σ(z) + (1 - y)·log(1 - σ(z))]`.
pub fn weighted_bce<T: Scalar>(logit: T, label: u8, pos_weight: T) -> (T, T) {
    let s = sigmoid(logit);
    if label == 1 {
        (pos_weight * softplus(-logit), -pos_weight * (T::one() - s))
    } else {
        (softplus(logit), s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectMode {
    Train,
    Eval,
}

/// Hard one-hot selection, plus the tempered softmax used for the backward
/// direction in training mode.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection<T> {
    pub index: usize,
    pub one_hot: Vec<T>,
    soft: Option<Vec<T>>,
    temperature: T,
}

impl<T: Scalar> Selection<T> {
    /// Tempered softmax over unmasked positions (training mode only).
    pub fn soft(&self) -> Option<&[T]> {
        self.soft.as_deref()
    }

    /// Straight-through backward: the gradient arriving at the one-hot is
    /// pushed through the softmax jacobian, `(1/τ)·s ⊙ (g - <g, s>)`.
    /// Zero in eval mode.
    pub fn backward(&self, grad_one_hot: &[T]) -> Vec<T> {
        match &self.soft {
            None => vec![T::zero(); grad_one_hot.len()],
            Some(s) => {
                let dot: T = s.iter().zip(grad_one_hot).map(|(&p, &g)| p * g).sum();
                s.iter()
                    .zip(grad_one_hot)
                    .map(|(&p, &g)| p * (g - dot) / self.temperature)
                    .collect()
            }
        }
    }
}

/// Tempered softmax with `blocked` positions at `-inf`.
pub fn masked_softmax<T: Scalar>(logits: &[T], blocked: &[bool], temperature: T) -> Vec<T> {
    let max = logits
        .iter()
        .zip(blocked)
        .filter(|(_, &b)| !b)
        .map(|(&l, _)| l)
        .fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits
        .iter()
        .zip(blocked)
        .map(|(&l, &b)| if b { T::zero() } else { ((l - max) / temperature).exp() })
        .collect();
    let z: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / z).collect()
}

/// Argmax over unblocked logits, lowest index on ties.
pub fn masked_argmax<T: Scalar>(logits: &[T], blocked: &[bool]) -> Option<usize> {
    let mut best: Option<(usize, T)> = None;
    for (i, (&l, &b)) in logits.iter().zip(blocked).enumerate() {
        if !b && best.map_or(true, |(_, v)| l > v) {
            best = Some((i, l));
        }
    }
    best.map(|(i, _)| i)
}

pub fn straight_through_select<T: Scalar>(
    logits: &[T],
    blocked: &[bool],
    temperature: T,
    mode: SelectMode,
) -> Result<Selection<T>> {
    if !(temperature > T::zero()) {
        return Err(NnError::BadTemperature(temperature.f64()));
    }
    let index = masked_argmax(logits, blocked).ok_or(NnError::AllMasked)?;
    let mut one_hot = vec![T::zero(); logits.len()];
    one_hot[index] = T::one();
    let soft = match mode {
        SelectMode::Eval => None,
        SelectMode::Train => Some(masked_softmax(logits, blocked, temperature)),
    };
    Ok(Selection {
        index,
        one_hot,
        soft,
        temperature,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_network_gives_zero_logits() {
        let m = Mlp::<f64>::zeros(&[3, 4, 4, 4, 4, 2]).unwrap();
        assert_eq!(m.predict(&[1.0, -2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let mut layer = Layer::<f64>::zeros(3, 3);
        for i in 0..3 {
            layer.weight[i * 3 + i] = 1.0;
        }
        let m = Mlp::from_layers(vec![layer]).unwrap();
        assert_eq!(m.predict(&[1.5, -2.0, 0.25]).unwrap(), vec![1.5, -2.0, 0.25]);
    }

    #[test]
    fn negative_preactivation_is_cut() {
        let hidden = Layer {
            n_in: 1,
            n_out: 2,
            weight: vec![1.0, -1.0],
            bias: vec![0.0, 0.0],
        };
        let out = Layer {
            n_in: 2,
            n_out: 1,
            weight: vec![1.0, 100.0],
            bias: vec![0.0],
        };
        let m = Mlp::from_layers(vec![hidden, out]).unwrap();
        assert_eq!(m.predict(&[2.0f64]).unwrap(), vec![2.0]);
    }

    #[test]
    fn wrong_input_length() {
        let m = Mlp::<f32>::zeros(&[3, 2]).unwrap();
        assert!(matches!(m.forward(&[1.0]), Err(NnError::InputDim { .. })));
        assert!(Mlp::<f32>::zeros(&[3]).is_err());
    }

    #[test]
    fn backward_is_linear_in_output_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = Mlp::<f64>::he_uniform(&[4, 5, 3], &mut rng).unwrap();
        let (_, cache) = m.forward(&[0.3, -0.1, 0.8, 0.5]).unwrap();
        let (g0, _) = m.backward(&cache, &[0.0; 3]).unwrap();
        assert!(g0.named().iter().all(|(_, v)| v.iter().all(|&x| x == 0.0)));
        let (g1, _) = m.backward(&cache, &[0.5, -1.0, 2.0]).unwrap();
        let (g2, _) = m.backward(&cache, &[1.0, -2.0, 4.0]).unwrap();
        let mut doubled = g1.clone();
        doubled.scale(2.0);
        assert_eq!(doubled, g2);
    }

    #[test]
    fn stale_cache_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut m = Mlp::<f64>::he_uniform(&[2, 3, 1], &mut rng).unwrap();
        let (_, cache) = m.forward(&[1.0, 1.0]).unwrap();
        let g = m.zero_grads();
        let mut st = OptimizerState::new(&m, 0.0);
        adamw_step(&mut m, &g, &mut st, 1e-3).unwrap();
        assert!(matches!(m.backward(&cache, &[1.0]), Err(NnError::StaleCache { .. })));
    }

    #[test]
    fn decay_only_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut m = Mlp::<f64>::he_uniform(&[3, 2], &mut rng).unwrap();
        let before = m.clone();
        let mut st = OptimizerState::new(&m, 0.01);
        let g = m.zero_grads();
        adamw_step(&mut m, &g, &mut st, 1e-4).unwrap();
        for (a, b) in m.layers()[0].weight.iter().zip(&before.layers()[0].weight) {
            assert!((a - b * (1.0 - 1e-6)).abs() <= 1e-18);
        }
    }

    #[test]
    fn first_adam_step_moves_by_lr() {
        let mut m = Mlp::<f64>::zeros(&[2, 2]).unwrap();
        let mut g = m.zero_grads();
        g.layers[0].weight.iter_mut().for_each(|x| *x = 1.0);
        g.layers[0].bias.iter_mut().for_each(|x| *x = 1.0);
        let mut st = OptimizerState::new(&m, 0.0);
        adamw_step(&mut m, &g, &mut st, 1e-4).unwrap();
        let expected = -1e-4 / (1.0 + 1e-8);
        for v in m.layers()[0].weight.iter().chain(&m.layers()[0].bias) {
            assert!((v - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn adam_tensors_are_independent() {
        let mut m = Mlp::<f64>::zeros(&[2, 2]).unwrap();
        let mut g = m.zero_grads();
        g.layers[0].weight[0] = 1.0;
        let mut st = OptimizerState::new(&m, 0.0);
        adamw_step(&mut m, &g, &mut st, 1e-3).unwrap();
        assert!(m.layers()[0].weight[0] < 0.0);
        assert!(m.layers()[0].weight[1..].iter().all(|&v| v == 0.0));
        assert!(m.layers()[0].bias.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn non_finite_gradient_is_named() {
        let mut m = Mlp::<f32>::zeros(&[2, 3, 1]).unwrap();
        let mut g = m.zero_grads();
        g.layers[1].bias[0] = f32::NAN;
        let mut st = OptimizerState::new(&m, 0.0);
        assert_eq!(
            adamw_step(&mut m, &g, &mut st, 1e-3),
            Err(NnError::NonFiniteGradient("layer1.bias".into()))
        );
    }

    #[test]
    fn cosine_schedule_endpoints() {
        let s = LrSchedule::new(1e-4, 0.0, 100).unwrap();
        assert_eq!(cosine_lr(&s, 0).unwrap(), 1e-4);
        assert!(cosine_lr(&s, 100).unwrap().abs() < 1e-20);
        assert!((cosine_lr(&s, 50).unwrap() - 0.5e-4).abs() < 1e-18);
        assert!(cosine_lr(&s, 101).is_err());
        let s = LrSchedule::new(1e-3, 1e-5, 10).unwrap();
        assert!((cosine_lr(&s, 10).unwrap() - 1e-5).abs() < 1e-18);
        assert!(LrSchedule::new(1e-5, 1e-3, 10).is_err());
        assert!(LrSchedule::new(1e-3, 0.0, 0).is_err());
    }

    #[test]
    fn bce_values() {
        let ln2 = std::f64::consts::LN_2;
        assert!((weighted_bce(0.0, 1, 1.0).0 - ln2).abs() < 1e-15);
        assert!((weighted_bce(0.0, 1, 3.0).0 - 3.0 * ln2).abs() < 1e-15);
        assert!((weighted_bce(0.0, 0, 3.0).0 - ln2).abs() < 1e-15);
        for z in [-1e4, -50.0, 50.0, 1e4] {
            for y in [0, 1] {
                let (l, g) = weighted_bce(z, y, 2.0f64);
                assert!(l.is_finite() && g.is_finite());
                let (l, g) = weighted_bce(z as f32, y, 2.0f32);
                assert!(l.is_finite() && g.is_finite());
            }
        }
    }

    #[test]
    fn bce_gradient_matches_finite_differences() {
        let h = 1e-5;
        for z in [-20.0, -1.0, 0.0, 1.0, 20.0] {
            for y in [0u8, 1] {
                for w in [1.0, 3.0] {
                    let (_, g) = weighted_bce(z, y, w);
                    let fd = (weighted_bce(z + h, y, w).0 - weighted_bce(z - h, y, w).0) / (2.0 * h);
                    assert!((g - fd).abs() < 1e-6, "z={z} y={y}: {g} vs {fd}");
                }
            }
        }
    }

    #[test]
    fn selection_examples() {
        let logits = [1.0, 5.0, 2.0];
        let s = straight_through_select(&logits, &[false; 3], 1.0, SelectMode::Eval).unwrap();
        assert_eq!(s.one_hot, vec![0.0, 1.0, 0.0]);
        let s = straight_through_select(&logits, &[false, true, false], 1.0, SelectMode::Eval).unwrap();
        assert_eq!(s.one_hot, vec![0.0, 0.0, 1.0]);
        assert_eq!(
            straight_through_select(&logits, &[true; 3], 1.0, SelectMode::Eval),
            Err(NnError::AllMasked)
        );
        assert!(straight_through_select(&logits, &[false; 3], 0.0, SelectMode::Train).is_err());
    }

    #[test]
    fn train_mode_forward_is_hard_and_masked_soft_is_zero() {
        let s = straight_through_select(&[1.0, 5.0, 2.0], &[false, true, false], 0.5, SelectMode::Train).unwrap();
        assert_eq!(s.index, 2);
        let soft = s.soft().unwrap();
        assert_eq!(soft[1], 0.0);
        assert!((soft.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        let g = s.backward(&[1.0, 7.0, -1.0]);
        assert_eq!(g[1], 0.0);
    }
}
