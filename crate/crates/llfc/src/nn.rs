//! L-layer ReLU multilayer perceptron: forward traces, softmax cross-entropy
//! backprop, and deterministic minibatch training with SGD-momentum or Adam.
//!
//! The output layer carries no activation, so the network output is logits;
//! every metric downstream of here treats layer L features as logits.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{matmul, Matrix};
use crate::rng::CounterRng;

/// Layer widths [d_0, d_1, ..., d_L]; the last entry is the class count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpSpec {
    pub dims: Vec<usize>,
}

impl MlpSpec {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.len() < 2 || dims.iter().any(|&d| d == 0) {
            return Err(Error::Shape(
                "spec needs at least one weight layer and all widths >= 1".into(),
            ));
        }
        Ok(MlpSpec { dims })
    }

    /// Number of weight layers L.
    pub fn layers(&self) -> usize {
        self.dims.len() - 1
    }

    pub fn classes(&self) -> usize {
        *self.dims.last().unwrap()
    }
}

/// Weights and biases of one mode.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// weights[l] is d_{l+1} x d_l.
    pub weights: Vec<Matrix>,
    /// biases[l] has length d_{l+1}.
    pub biases: Vec<Vec<f64>>,
}

impl ModelParams {
    pub fn layers(&self) -> usize {
        self.weights.len()
    }

    pub fn spec(&self) -> MlpSpec {
        let mut dims = vec![self.weights[0].cols()];
        dims.extend(self.weights.iter().map(|w| w.rows()));
        MlpSpec { dims }
    }

    pub fn same_spec(&self, other: &ModelParams) -> bool {
        self.layers() == other.layers()
            && self
                .weights
                .iter()
                .zip(&other.weights)
                .all(|(a, b)| a.rows() == b.rows() && a.cols() == b.cols())
    }

    /// Squared L2 distance over all weights and biases.
    pub fn sq_distance(&self, other: &ModelParams) -> f64 {
        let mut d = 0.0;
        for (a, b) in self.weights.iter().zip(&other.weights) {
            d += a
                .data()
                .iter()
                .zip(b.data())
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>();
        }
        for (a, b) in self.biases.iter().zip(&other.biases) {
            d += a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
        }
        d
    }
}

/// Pre- and post-activations of every layer for one input batch.
#[derive(Debug, Clone)]
pub struct FeatureTrace {
    /// pre[l] is the pre-activation of weight layer l+1 (1-based layer l+1).
    pub pre: Vec<Matrix>,
    /// post[0] is the input X; post[l] for l >= 1 the layer-l feature.
    pub post: Vec<Matrix>,
}

impl FeatureTrace {
    /// Network output (logits) H^(L).
    pub fn output(&self) -> &Matrix {
        self.post.last().unwrap()
    }
}

/// Kaiming fan-in scaled Gaussian weights, zero biases.
pub fn init_params(spec: &MlpSpec, seed: u64) -> ModelParams {
    let l = spec.layers();
    let mut weights = Vec::with_capacity(l);
    let mut biases = Vec::with_capacity(l);
    for layer in 0..l {
        let fan_in = spec.dims[layer];
        let fan_out = spec.dims[layer + 1];
        let std = (2.0 / fan_in as f64).sqrt();
        let mut rng = CounterRng::substream(seed, layer as u64);
        let data = (0..fan_out * fan_in)
            .map(|_| std * rng.next_gaussian())
            .collect();
        weights.push(Matrix::from_vec(fan_out, fan_in, data));
        biases.push(vec![0.0; fan_out]);
    }
    ModelParams { weights, biases }
}

pub(crate) fn affine(w: &Matrix, b: &[f64], h: &Matrix) -> Result<Matrix> {
    let mut z = matmul(w, h)?;
    let cols = z.cols();
    for r in 0..z.rows() {
        let br = b[r];
        for c in 0..cols {
            let v = z.get(r, c) + br;
            z.set(r, c, v);
        }
    }
    Ok(z)
}

pub(crate) fn relu(m: &Matrix) -> Matrix {
    Matrix::from_vec(
        m.rows(),
        m.cols(),
        m.data().iter().map(|&v| v.max(0.0)).collect(),
    )
}

/// Full forward pass retaining every pre- and post-activation.
pub fn forward(params: &ModelParams, x: &Matrix) -> Result<FeatureTrace> {
    let l = params.layers();
    if x.rows() != params.weights[0].cols() {
        return Err(Error::Shape(format!(
            "input dim {} != d_0 {}",
            x.rows(),
            params.weights[0].cols()
        )));
    }
    let mut pre = Vec::with_capacity(l);
    let mut post = Vec::with_capacity(l + 1);
    post.push(x.clone());
    for layer in 0..l {
        let z = affine(&params.weights[layer], &params.biases[layer], &post[layer])?;
        let h = if layer + 1 < l { relu(&z) } else { z.clone() };
        pre.push(z);
        post.push(h);
    }
    Ok(FeatureTrace { pre, post })
}

/// Gradient of the loss with respect to every weight and bias.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
}

/// Mean softmax cross-entropy and its exact gradient.
pub fn loss_and_grad(params: &ModelParams, x: &Matrix, y: &[usize]) -> Result<(f64, Gradients)> {
    let classes = params.weights.last().unwrap().rows();
    if x.cols() != y.len() {
        return Err(Error::Shape(format!(
            "{} examples vs {} labels",
            x.cols(),
            y.len()
        )));
    }
    if let Some(&bad) = y.iter().find(|&&l| l >= classes) {
        return Err(Error::LabelRange {
            label: bad,
            classes,
        });
    }
    let trace = forward(params, x)?;
    let logits = trace.output();
    let n = y.len();

    // softmax probabilities and loss, column by column with max-shift
    let mut delta = Matrix::zeros(classes, n);
    let mut loss = 0.0;
    for i in 0..n {
        let col = trace.output().col(i);
        let max = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = col.iter().map(|&v| (v - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        loss += sum.ln() + max - logits.get(y[i], i);
        for k in 0..classes {
            let p = exps[k] / sum;
            delta.set(k, i, (p - if k == y[i] { 1.0 } else { 0.0 }) / n as f64);
        }
    }
    loss /= n as f64;

    let l = params.layers();
    let mut gw: Vec<Option<Matrix>> = (0..l).map(|_| None).collect();
    let mut gb: Vec<Option<Vec<f64>>> = (0..l).map(|_| None).collect();
    let mut d = delta; // gradient w.r.t. pre-activation of the current layer
    for layer in (0..l).rev() {
        gw[layer] = Some(matmul(&d, &trace.post[layer].transpose())?);
        gb[layer] = Some((0..d.rows()).map(|r| d.row(r).iter().sum()).collect());
        if layer > 0 {
            let mut dh = matmul(&params.weights[layer].transpose(), &d)?;
            let z = &trace.pre[layer - 1];
            for idx in 0..dh.data().len() {
                if z.data()[idx] <= 0.0 {
                    dh.data_mut()[idx] = 0.0;
                }
            }
            d = dh;
        }
    }
    Ok((
        loss,
        Gradients {
            weights: gw.into_iter().map(Option::unwrap).collect(),
            biases: gb.into_iter().map(Option::unwrap).collect(),
        },
    ))
}

/// Optimizer selection for [`TrainConfig`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Optimizer {
    SgdMomentum,
    Adam,
}

/// Training hyper-parameters; all randomness derives from `seed`.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub optimizer: Optimizer,
    pub learning_rate: f64,
    /// SGD momentum coefficient, or Adam beta1.
    pub momentum: f64,
    /// Adam beta2 (ignored by SGD).
    pub beta2: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Epochs at which the learning rate is multiplied by `lr_drop_factor`.
    pub lr_drop_epochs: Vec<usize>,
    pub lr_drop_factor: f64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 {
            return Err(Error::Domain("learning_rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Domain("batch_size must be >= 1".into()));
        }
        Ok(())
    }

    pub fn steps_per_epoch(&self, n: usize) -> usize {
        n.div_ceil(self.batch_size)
    }

    pub fn total_steps(&self, n: usize) -> usize {
        self.epochs * self.steps_per_epoch(n)
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            optimizer: Optimizer::SgdMomentum,
            learning_rate: 0.05,
            momentum: 0.9,
            beta2: 0.999,
            weight_decay: 0.0,
            batch_size: 32,
            epochs: 50,
            seed: 0,
            lr_drop_epochs: Vec::new(),
            lr_drop_factor: 1.0,
        }
    }
}

const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone)]
struct OptState {
    // first moment / momentum buffers
    mw: Vec<Matrix>,
    mb: Vec<Vec<f64>>,
    // second moment (Adam only)
    vw: Vec<Matrix>,
    vb: Vec<Vec<f64>>,
}

impl OptState {
    fn new(params: &ModelParams) -> Self {
        let zw: Vec<Matrix> = params
            .weights
            .iter()
            .map(|w| Matrix::zeros(w.rows(), w.cols()))
            .collect();
        let zb: Vec<Vec<f64>> = params.biases.iter().map(|b| vec![0.0; b.len()]).collect();
        OptState {
            mw: zw.clone(),
            mb: zb.clone(),
            vw: zw,
            vb: zb,
        }
    }
}

/// Per-epoch training statistics.
#[derive(Debug, Clone)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub train_error: f64,
}

/// Incremental trainer; exists so the spawning protocol can share a prefix
/// of steps exactly and then fork with a different shuffle seed.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub params: ModelParams,
    cfg: TrainConfig,
    state: OptState,
    step: usize,
    shuffle_seed: u64,
    epoch_perm: Option<(usize, Vec<usize>)>,
    pub history: Vec<EpochStats>,
    epoch_loss_acc: f64,
    epoch_loss_count: usize,
}

impl Trainer {
    pub fn new(params: ModelParams, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let state = OptState::new(&params);
        let seed = cfg.seed;
        Ok(Trainer {
            params,
            cfg,
            state,
            step: 0,
            shuffle_seed: seed,
            epoch_perm: None,
            history: Vec::new(),
            epoch_loss_acc: 0.0,
            epoch_loss_count: 0,
        })
    }

    pub fn step_count(&self) -> usize {
        self.step
    }

    /// Switch the minibatch shuffle stream; used at the spawn point.
    pub fn reseed_shuffle(&mut self, seed: u64) {
        self.shuffle_seed = seed;
        self.epoch_perm = None;
    }

    fn batch_indices(&mut self, n: usize) -> Vec<usize> {
        let spe = self.cfg.steps_per_epoch(n);
        let epoch = self.step / spe;
        let within = self.step % spe;
        let need_new = match &self.epoch_perm {
            Some((e, _)) => *e != epoch,
            None => true,
        };
        if need_new {
            let perm = CounterRng::substream(self.shuffle_seed, epoch as u64).permutation(n);
            self.epoch_perm = Some((epoch, perm));
        }
        let perm = &self.epoch_perm.as_ref().unwrap().1;
        let start = within * self.cfg.batch_size;
        let end = (start + self.cfg.batch_size).min(n);
        perm[start..end].to_vec()
    }

    fn learning_rate(&self, epoch: usize) -> f64 {
        let drops = self
            .cfg
            .lr_drop_epochs
            .iter()
            .filter(|&&e| epoch >= e)
            .count() as i32;
        self.cfg.learning_rate * self.cfg.lr_drop_factor.powi(drops)
    }

    /// One optimizer step on the next minibatch. Returns the batch loss.
    pub fn step(&mut self, data: &Dataset) -> Result<f64> {
        let n = data.len();
        let spe = self.cfg.steps_per_epoch(n);
        let epoch = self.step / spe;
        let idx = self.batch_indices(n);
        let xb = data.x.gather_cols(&idx);
        let yb: Vec<usize> = idx.iter().map(|&i| data.y[i]).collect();
        let (loss, mut grad) = loss_and_grad(&self.params, &xb, &yb)?;
        if !loss.is_finite() {
            return Err(Error::Divergence { step: self.step });
        }
        // coupled weight decay: L2 term added to the weight gradient
        if self.cfg.weight_decay != 0.0 {
            for (g, w) in grad.weights.iter_mut().zip(&self.params.weights) {
                for (gv, wv) in g.data_mut().iter_mut().zip(w.data()) {
                    *gv += self.cfg.weight_decay * wv;
                }
            }
        }
        let lr = self.learning_rate(epoch);
        match self.cfg.optimizer {
            Optimizer::SgdMomentum => {
                let mu = self.cfg.momentum;
                for l in 0..self.params.layers() {
                    for (m, (g, w)) in self.state.mw[l].data_mut().iter_mut().zip(
                        grad.weights[l].data().iter().zip(self.params.weights[l].data_mut()),
                    ) {
                        *m = mu * *m + g;
                        *w -= lr * *m;
                    }
                    for (m, (g, b)) in self.state.mb[l]
                        .iter_mut()
                        .zip(grad.biases[l].iter().zip(self.params.biases[l].iter_mut()))
                    {
                        *m = mu * *m + g;
                        *b -= lr * *m;
                    }
                }
            }
            Optimizer::Adam => {
                let b1 = self.cfg.momentum;
                let b2 = self.cfg.beta2;
                let t = (self.step + 1) as i32;
                let c1 = 1.0 - b1.powi(t);
                let c2 = 1.0 - b2.powi(t);
                for l in 0..self.params.layers() {
                    let (mw, vw) = (self.state.mw[l].data_mut(), self.state.vw[l].data_mut());
                    let gw = grad.weights[l].data();
                    let w = self.params.weights[l].data_mut();
                    for i in 0..w.len() {
                        mw[i] = b1 * mw[i] + (1.0 - b1) * gw[i];
                        vw[i] = b2 * vw[i] + (1.0 - b2) * gw[i] * gw[i];
                        w[i] -= lr * (mw[i] / c1) / ((vw[i] / c2).sqrt() + ADAM_EPS);
                    }
                    let (mb, vb) = (&mut self.state.mb[l], &mut self.state.vb[l]);
                    let gb = &grad.biases[l];
                    let b = &mut self.params.biases[l];
                    for i in 0..b.len() {
                        mb[i] = b1 * mb[i] + (1.0 - b1) * gb[i];
                        vb[i] = b2 * vb[i] + (1.0 - b2) * gb[i] * gb[i];
                        b[i] -= lr * (mb[i] / c1) / ((vb[i] / c2).sqrt() + ADAM_EPS);
                    }
                }
            }
        }
        self.step += 1;
        self.epoch_loss_acc += loss;
        self.epoch_loss_count += 1;
        Ok(loss)
    }

    /// Run `n_steps` steps, closing out per-epoch history entries.
    pub fn run_steps(&mut self, data: &Dataset, n_steps: usize) -> Result<()> {
        let spe = self.cfg.steps_per_epoch(data.len());
        for _ in 0..n_steps {
            self.step(data)?;
            if self.step % spe == 0 {
                let epoch = self.step / spe - 1;
                let mean_loss = self.epoch_loss_acc / self.epoch_loss_count.max(1) as f64;
                let train_error = classification_error(&self.params, data)?;
                self.history.push(EpochStats {
                    epoch,
                    mean_loss,
                    train_error,
                });
                self.epoch_loss_acc = 0.0;
                self.epoch_loss_count = 0;
            }
        }
        Ok(())
    }
}

/// Train for the configured number of epochs; deterministic in (params, data, cfg).
pub fn train(params: &ModelParams, data: &Dataset, cfg: &TrainConfig) -> Result<(ModelParams, Vec<EpochStats>)> {
    let mut trainer = Trainer::new(params.clone(), cfg.clone())?;
    let total = cfg.total_steps(data.len());
    trainer.run_steps(data, total)?;
    Ok((trainer.params, trainer.history))
}

/// Fraction of points whose argmax logit differs from the label.
/// Ties resolve to the lowest class index.
pub fn classification_error(params: &ModelParams, data: &Dataset) -> Result<f64> {
    let trace = forward(params, &data.x)?;
    Ok(error_from_logits(trace.output(), &data.y))
}

/// Error rate of a logits matrix against labels (shared by model stitching).
pub fn error_from_logits(logits: &Matrix, y: &[usize]) -> f64 {
    let mut errors = 0usize;
    for i in 0..y.len() {
        let mut best = 0usize;
        let mut best_v = logits.get(0, i);
        for k in 1..logits.rows() {
            let v = logits.get(k, i);
            if v > best_v {
                best_v = v;
                best = k;
            }
        }
        if best != y[i] {
            errors += 1;
        }
    }
    errors as f64 / y.len().max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::gen_blobs;

    fn unit_scale_params(spec: &MlpSpec, seed: u64) -> ModelParams {
        // weights and biases of order one, for gradient checking
        let mut rng = CounterRng::new(seed);
        let l = spec.layers();
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for layer in 0..l {
            let (r, c) = (spec.dims[layer + 1], spec.dims[layer]);
            weights.push(Matrix::from_vec(
                r,
                c,
                (0..r * c).map(|_| rng.next_gaussian() * 0.5).collect(),
            ));
            biases.push((0..r).map(|_| rng.next_gaussian() * 0.5).collect());
        }
        ModelParams { weights, biases }
    }

    #[test]
    fn init_is_deterministic_with_expected_shapes() {
        let spec = MlpSpec::new(vec![2, 3, 2]).unwrap();
        let a = init_params(&spec, 7);
        let b = init_params(&spec, 7);
        assert_eq!(a, b);
        let c = init_params(&spec, 8);
        assert_ne!(a, c);
        assert_eq!(a.weights[0].rows(), 3);
        assert_eq!(a.weights[0].cols(), 2);
        assert_eq!(a.weights[1].rows(), 2);
        assert_eq!(a.weights[1].cols(), 3);
        assert_eq!(a.biases[0], vec![0.0; 3]);
    }

    #[test]
    fn forward_zero_weights_bias_broadcast() {
        let spec = MlpSpec::new(vec![2, 3, 2]).unwrap();
        let mut p = init_params(&spec, 0);
        p.weights[0] = Matrix::zeros(3, 2);
        p.biases[0] = vec![1.0, -2.0, 3.0];
        let x = Matrix::new(2, 4, vec![1.0; 8]).unwrap();
        let t = forward(&p, &x).unwrap();
        for c in 0..4 {
            assert_eq!(t.pre[0].col(c), vec![1.0, -2.0, 3.0]);
            assert_eq!(t.post[1].col(c), vec![1.0, 0.0, 3.0]); // ReLU applied
        }
    }

    #[test]
    fn forward_single_layer_is_pure_affine() {
        let spec = MlpSpec::new(vec![2, 2]).unwrap();
        let p = unit_scale_params(&spec, 3);
        let x = Matrix::new(2, 3, vec![1.0, -1.0, 0.5, 2.0, 0.0, -0.25]).unwrap();
        let t = forward(&p, &x).unwrap();
        for i in 0..3 {
            for r in 0..2 {
                let expect = p.weights[0].get(r, 0) * x.get(0, i)
                    + p.weights[0].get(r, 1) * x.get(1, i)
                    + p.biases[0][r];
                assert!((t.output().get(r, i) - expect).abs() < 1e-15);
                assert_eq!(t.pre[0].get(r, i), t.post[1].get(r, i));
            }
        }
    }

    #[test]
    fn forward_matches_scalar_oracle() {
        // hand-rolled scalar forward over a 2-2-2 net on 3 inputs
        let spec = MlpSpec::new(vec![2, 2, 2]).unwrap();
        let p = unit_scale_params(&spec, 5);
        let x = Matrix::new(2, 3, vec![0.3, -1.2, 0.0, 0.7, 0.1, -0.4]).unwrap();
        let t = forward(&p, &x).unwrap();
        for i in 0..3 {
            let x0 = x.get(0, i);
            let x1 = x.get(1, i);
            let mut h = [0.0f64; 2];
            for r in 0..2 {
                let z = p.weights[0].get(r, 0) * x0 + p.weights[0].get(r, 1) * x1 + p.biases[0][r];
                h[r] = z.max(0.0);
            }
            for r in 0..2 {
                let z = p.weights[1].get(r, 0) * h[0] + p.weights[1].get(r, 1) * h[1] + p.biases[1][r];
                assert!((t.output().get(r, i) - z).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn relu_trace_invariant() {
        let spec = MlpSpec::new(vec![3, 5, 4, 2]).unwrap();
        let p = unit_scale_params(&spec, 9);
        let mut rng = CounterRng::new(1);
        let x = Matrix::from_vec(3, 10, (0..30).map(|_| rng.next_gaussian()).collect());
        let t = forward(&p, &x).unwrap();
        for l in 0..2 {
            for (h, z) in t.post[l + 1].data().iter().zip(t.pre[l].data()) {
                assert!(*h >= 0.0);
                if *z <= 0.0 {
                    assert_eq!(*h, 0.0);
                } else {
                    assert_eq!(*h, *z);
                }
            }
        }
    }

    #[test]
    fn positive_homogeneity_without_bias() {
        let spec = MlpSpec::new(vec![2, 4, 2]).unwrap();
        let mut p = unit_scale_params(&spec, 2);
        for b in p.biases.iter_mut() {
            b.iter_mut().for_each(|v| *v = 0.0);
        }
        let x = Matrix::new(2, 2, vec![0.5, -1.0, 2.0, 0.25]).unwrap();
        let t1 = forward(&p, &x).unwrap();
        let t2 = forward(&p, &x.scale(3.0)).unwrap();
        for (a, b) in t1.pre[0].data().iter().zip(t2.pre[0].data()) {
            assert!((3.0 * a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn loss_uniform_logits() {
        // zero params and zero input give uniform logits, loss = ln c
        let _spec = MlpSpec::new(vec![2, 3, 3]).unwrap();
        let p = ModelParams {
            weights: vec![Matrix::zeros(3, 2), Matrix::zeros(3, 3)],
            biases: vec![vec![0.0; 3], vec![0.0; 3]],
        };
        let x = Matrix::zeros(2, 4);
        let (loss, _) = loss_and_grad(&p, &x, &[0, 1, 2, 0]).unwrap();
        assert!((loss - 3.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let spec = MlpSpec::new(vec![3, 3, 3]).unwrap();
        let mut p = unit_scale_params(&spec, 11);
        let mut rng = CounterRng::new(13);
        let x = Matrix::from_vec(3, 6, (0..18).map(|_| rng.next_gaussian()).collect());
        let y = vec![0, 1, 2, 1, 0, 2];
        let (_, grad) = loss_and_grad(&p, &x, &y).unwrap();
        let h = 1e-5;
        for l in 0..2 {
            for idx in 0..p.weights[l].data().len() {
                let orig = p.weights[l].data()[idx];
                p.weights[l].data_mut()[idx] = orig + h;
                let (lp, _) = loss_and_grad(&p, &x, &y).unwrap();
                p.weights[l].data_mut()[idx] = orig - h;
                let (lm, _) = loss_and_grad(&p, &x, &y).unwrap();
                p.weights[l].data_mut()[idx] = orig;
                let fd = (lp - lm) / (2.0 * h);
                assert!(
                    (grad.weights[l].data()[idx] - fd).abs() <= 1e-6,
                    "layer {l} idx {idx}: {} vs {}",
                    grad.weights[l].data()[idx],
                    fd
                );
            }
            for idx in 0..p.biases[l].len() {
                let orig = p.biases[l][idx];
                p.biases[l][idx] = orig + h;
                let (lp, _) = loss_and_grad(&p, &x, &y).unwrap();
                p.biases[l][idx] = orig - h;
                let (lm, _) = loss_and_grad(&p, &x, &y).unwrap();
                p.biases[l][idx] = orig;
                let fd = (lp - lm) / (2.0 * h);
                assert!((grad.biases[l][idx] - fd).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn duplicated_columns_leave_loss_and_grad_unchanged() {
        let spec = MlpSpec::new(vec![2, 3, 2]).unwrap();
        let p = unit_scale_params(&spec, 17);
        let x = Matrix::new(2, 3, vec![0.1, -0.5, 1.0, 0.9, 0.2, -0.3]).unwrap();
        let y = vec![0, 1, 0];
        let (l1, g1) = loss_and_grad(&p, &x, &y).unwrap();
        // duplicate every column
        let mut x2 = Matrix::zeros(2, 6);
        let mut y2 = Vec::new();
        for i in 0..3 {
            for rep in 0..2 {
                for r in 0..2 {
                    x2.set(r, 2 * i + rep, x.get(r, i));
                }
            }
            y2.extend([y[i], y[i]]);
        }
        let (l2, g2) = loss_and_grad(&p, &x2, &y2).unwrap();
        assert!((l1 - l2).abs() < 1e-12);
        for l in 0..2 {
            for (a, b) in g1.weights[l].data().iter().zip(g2.weights[l].data()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn train_zero_epochs_is_identity() {
        let spec = MlpSpec::new(vec![2, 4, 2]).unwrap();
        let p = init_params(&spec, 1);
        let data = gen_blobs(1, 20, 2, 2, 1.0).unwrap();
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        let (out, hist) = train(&p, &data, &cfg).unwrap();
        assert_eq!(out, p);
        assert!(hist.is_empty());
    }

    #[test]
    fn train_is_bitwise_deterministic() {
        let spec = MlpSpec::new(vec![2, 8, 2]).unwrap();
        let p = init_params(&spec, 4);
        let data = gen_blobs(2, 30, 2, 2, 1.0).unwrap();
        let cfg = TrainConfig {
            epochs: 5,
            seed: 123,
            ..TrainConfig::default()
        };
        let (a, _) = train(&p, &data, &cfg).unwrap();
        let (b, _) = train(&p, &data, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn train_fits_separable_blobs() {
        let spec = MlpSpec::new(vec![2, 16, 2]).unwrap();
        let p = init_params(&spec, 5);
        let data = gen_blobs(3, 100, 2, 2, 1.0).unwrap();
        let cfg = TrainConfig {
            epochs: 50,
            seed: 7,
            ..TrainConfig::default()
        };
        let (out, _) = train(&p, &data, &cfg).unwrap();
        let err = classification_error(&out, &data).unwrap();
        assert!(err <= 0.05, "training error {err}");
    }

    #[test]
    fn adam_also_trains() {
        let spec = MlpSpec::new(vec![2, 16, 2]).unwrap();
        let p = init_params(&spec, 5);
        let data = gen_blobs(3, 100, 2, 2, 1.0).unwrap();
        let cfg = TrainConfig {
            optimizer: Optimizer::Adam,
            learning_rate: 0.01,
            epochs: 50,
            seed: 7,
            ..TrainConfig::default()
        };
        let (out, _) = train(&p, &data, &cfg).unwrap();
        let err = classification_error(&out, &data).unwrap();
        assert!(err <= 0.05, "training error {err}");
    }

    #[test]
    fn classification_error_counting() {
        let spec = MlpSpec::new(vec![2, 4, 3]).unwrap();
        let p = unit_scale_params(&spec, 21);
        let mut rng = CounterRng::new(2);
        let x = Matrix::from_vec(2, 10, (0..20).map(|_| rng.next_gaussian()).collect());
        // labels set to the model's own argmax -> zero error
        let t = forward(&p, &x).unwrap();
        let mut y = Vec::new();
        for i in 0..10 {
            let col = t.output().col(i);
            let best = col
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            y.push(best);
        }
        let data = Dataset::new(x.clone(), y.clone(), 3).unwrap();
        assert_eq!(classification_error(&p, &data).unwrap(), 0.0);
        // per-point hand count against flipped labels
        let y_wrong: Vec<usize> = y.iter().map(|&l| (l + 1) % 3).collect();
        let data_wrong = Dataset::new(x, y_wrong, 3).unwrap();
        assert_eq!(classification_error(&p, &data_wrong).unwrap(), 1.0);
    }

    #[test]
    fn constant_logits_tie_break() {
        // all-zero net emits constant logits; argmax tie-break picks class 0
        let p = ModelParams {
            weights: vec![Matrix::zeros(3, 2)],
            biases: vec![vec![0.0; 3]],
        };
        let x = Matrix::new(2, 4, vec![1.0; 8]).unwrap();
        let data0 = Dataset::new(x.clone(), vec![0; 4], 3).unwrap();
        assert_eq!(classification_error(&p, &data0).unwrap(), 0.0);
        let data1 = Dataset::new(x, vec![1; 4], 3).unwrap();
        assert_eq!(classification_error(&p, &data1).unwrap(), 1.0);
    }
}
