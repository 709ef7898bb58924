//! Weight interpolation, the spawning protocol, the interpolation error
//! curve with its barrier, and the layerwise feature-connectivity metrics.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{cosine, norm};
use crate::nn::{
    classification_error, forward, init_params, FeatureTrace, MlpSpec, ModelParams, TrainConfig,
    Trainer,
};

/// Discretization of the interpolation coefficient: ascending values in
/// [0, 1] that include both endpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaGrid {
    values: Vec<f64>,
}

impl AlphaGrid {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2
            || values.first() != Some(&0.0)
            || values.last() != Some(&1.0)
            || values.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(Error::Domain(
                "alpha grid must be strictly ascending from 0 to 1".into(),
            ));
        }
        Ok(AlphaGrid { values })
    }

    /// `n` uniform points including both endpoints.
    pub fn uniform(n: usize) -> Self {
        let n = n.max(2);
        let values = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        AlphaGrid { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

impl Default for AlphaGrid {
    /// 21 uniform points (spacing 0.05).
    fn default() -> Self {
        AlphaGrid::uniform(21)
    }
}

/// Elementwise alpha * a + (1 - alpha) * b on every weight and bias.
pub fn interpolate(a: &ModelParams, b: &ModelParams, alpha: f64) -> Result<ModelParams> {
    if !a.same_spec(b) {
        return Err(Error::Shape("interpolate: parameter specs differ".into()));
    }
    let weights = a
        .weights
        .iter()
        .zip(&b.weights)
        .map(|(wa, wb)| wa.scaled_add(alpha, wb, 1.0 - alpha))
        .collect::<Result<Vec<_>>>()?;
    let biases = a
        .biases
        .iter()
        .zip(&b.biases)
        .map(|(ba, bb)| {
            ba.iter()
                .zip(bb)
                .map(|(x, y)| alpha * x + (1.0 - alpha) * y)
                .collect()
        })
        .collect();
    Ok(ModelParams { weights, biases })
}

/// Classification error along the linear path, plus its barrier: the maximum
/// excess above the linear interpolation of the endpoint errors.
pub fn error_curve(
    a: &ModelParams,
    b: &ModelParams,
    data: &Dataset,
    grid: &AlphaGrid,
) -> Result<(Vec<f64>, f64)> {
    let mut curve = Vec::with_capacity(grid.len());
    for &alpha in grid.values() {
        let theta = interpolate(a, b, alpha)?;
        curve.push(classification_error(&theta, data)?);
    }
    let err_b = curve[0]; // alpha = 0
    let err_a = *curve.last().unwrap(); // alpha = 1
    let barrier = grid
        .values()
        .iter()
        .zip(&curve)
        .map(|(&alpha, &err)| err - ((1.0 - alpha) * err_b + alpha * err_a))
        .fold(f64::NEG_INFINITY, f64::max);
    Ok((curve, barrier))
}

/// Spawning protocol: train jointly for `k_steps`, then fork into two runs
/// whose minibatch shuffle streams derive from `seed_a` and `seed_b`.
pub fn spawn_pair(
    spec: &MlpSpec,
    data: &Dataset,
    cfg: &TrainConfig,
    k_steps: usize,
    seed_a: u64,
    seed_b: u64,
) -> Result<(ModelParams, ModelParams)> {
    let total = cfg.total_steps(data.len());
    if k_steps > total {
        return Err(Error::Domain(format!(
            "k_steps {k_steps} exceeds total steps {total}"
        )));
    }
    let init = init_params(spec, cfg.seed);
    let mut parent = Trainer::new(init, cfg.clone())?;
    parent.run_steps(data, k_steps)?;

    let mut child_a = parent.clone();
    let mut child_b = parent;
    child_a.reseed_shuffle(seed_a);
    child_b.reseed_shuffle(seed_b);
    child_a.run_steps(data, total - k_steps)?;
    child_b.run_steps(data, total - k_steps)?;
    Ok((child_a.params, child_b.params))
}

/// Per-(layer, alpha) aggregate statistics over the dataset.
#[derive(Debug, Clone)]
pub struct LayerAlphaStats {
    /// layer index, 1-based (layer L is the logits).
    pub layer: usize,
    pub alpha: f64,
    pub mean_one_minus_cosine_alpha: f64,
    pub std_one_minus_cosine_alpha: f64,
    pub mean_one_minus_cosine_ab: f64,
    pub std_one_minus_cosine_ab: f64,
    pub mean_coef: f64,
    pub std_coef: f64,
    /// examples excluded because a feature vector was zero.
    pub excluded: usize,
}

/// Per-example feature-connectivity metrics plus the interpolation curve.
#[derive(Debug, Clone)]
pub struct LlfcReport {
    pub grid: AlphaGrid,
    /// layers 1..=L in order.
    pub layers: Vec<usize>,
    /// cosine_alpha[(layer_idx, alpha_idx)][example]; `None` when degenerate.
    pub cosine_alpha: Vec<Vec<Option<f64>>>,
    /// coef_alpha, indexed like `cosine_alpha`.
    pub coef_alpha: Vec<Vec<Option<f64>>>,
    /// cosine_ab[layer_idx][example], computed once per (layer, example).
    pub cosine_ab: Vec<Vec<Option<f64>>>,
    pub stats: Vec<LayerAlphaStats>,
    pub error_curve: Vec<f64>,
    pub barrier: f64,
}

impl LlfcReport {
    fn cell_index(&self, layer_idx: usize, alpha_idx: usize) -> usize {
        layer_idx * self.grid.len() + alpha_idx
    }

    pub fn cosine_alpha_at(&self, layer_idx: usize, alpha_idx: usize) -> &[Option<f64>] {
        &self.cosine_alpha[self.cell_index(layer_idx, alpha_idx)]
    }

    pub fn coef_alpha_at(&self, layer_idx: usize, alpha_idx: usize) -> &[Option<f64>] {
        &self.coef_alpha[self.cell_index(layer_idx, alpha_idx)]
    }

    pub fn stats_at(&self, layer_idx: usize, alpha_idx: usize) -> &LayerAlphaStats {
        &self.stats[self.cell_index(layer_idx, alpha_idx)]
    }

    /// Endpoint errors (alpha = 1 is model A, alpha = 0 is model B).
    pub fn endpoint_errors(&self) -> (f64, f64) {
        (*self.error_curve.last().unwrap(), self.error_curve[0])
    }
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.clone().sum::<f64>() / n as f64;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    (mean, var.sqrt())
}

/// Feature metrics of one example at one layer.
fn example_metrics(
    interp: &FeatureTrace,
    trace_a: &FeatureTrace,
    trace_b: &FeatureTrace,
    layer: usize,
    alpha: f64,
    example: usize,
) -> (Option<f64>, Option<f64>) {
    let u = interp.post[layer].col(example);
    let fa = trace_a.post[layer].col(example);
    let fb = trace_b.post[layer].col(example);
    let v: Vec<f64> = fa
        .iter()
        .zip(&fb)
        .map(|(a, b)| alpha * a + (1.0 - alpha) * b)
        .collect();
    let nu = norm(&u);
    let nv = norm(&v);
    if nu == 0.0 || nv == 0.0 {
        return (None, None);
    }
    let cos = cosine(&u, &v).expect("same length");
    // projection coefficient of the interpolated feature onto the feature
    // interpolation; the estimator of the LLFC scaling factor
    let coef = nu * cos / nv;
    (Some(cos), Some(coef))
}

/// Full LLFC metric suite: cosine_alpha, cosine_{A,B} and coef_alpha per
/// (layer, alpha, example), with mean/std aggregates and the error curve.
pub fn llfc_metrics(
    a: &ModelParams,
    b: &ModelParams,
    data: &Dataset,
    grid: &AlphaGrid,
) -> Result<LlfcReport> {
    if !a.same_spec(b) {
        return Err(Error::Shape("llfc_metrics: parameter specs differ".into()));
    }
    let l = a.layers();
    let n = data.len();
    let trace_a = forward(a, &data.x)?;
    let trace_b = forward(b, &data.x)?;
    let layers: Vec<usize> = (1..=l).collect();

    // cosine_{A,B} once per (layer, example)
    let mut cosine_ab: Vec<Vec<Option<f64>>> = Vec::with_capacity(l);
    for &layer in &layers {
        let mut per_example = Vec::with_capacity(n);
        for i in 0..n {
            let fa = trace_a.post[layer].col(i);
            let fb = trace_b.post[layer].col(i);
            if norm(&fa) == 0.0 || norm(&fb) == 0.0 {
                per_example.push(None);
            } else {
                per_example.push(Some(cosine(&fa, &fb).expect("same length")));
            }
        }
        cosine_ab.push(per_example);
    }

    let mut cosine_alpha = vec![Vec::new(); l * grid.len()];
    let mut coef_alpha = vec![Vec::new(); l * grid.len()];
    for (ai, &alpha) in grid.values().iter().enumerate() {
        let theta = interpolate(a, b, alpha)?;
        let interp = forward(&theta, &data.x)?;
        for (li, &layer) in layers.iter().enumerate() {
            let mut cos_col = Vec::with_capacity(n);
            let mut coef_col = Vec::with_capacity(n);
            for i in 0..n {
                let (c, k) = example_metrics(&interp, &trace_a, &trace_b, layer, alpha, i);
                cos_col.push(c);
                coef_col.push(k);
            }
            cosine_alpha[li * grid.len() + ai] = cos_col;
            coef_alpha[li * grid.len() + ai] = coef_col;
        }
    }

    let mut stats = Vec::with_capacity(l * grid.len());
    for (li, &layer) in layers.iter().enumerate() {
        for (ai, &alpha) in grid.values().iter().enumerate() {
            let idx = li * grid.len() + ai;
            let defined: Vec<(f64, f64, f64)> = (0..n)
                .filter_map(|i| {
                    match (cosine_alpha[idx][i], coef_alpha[idx][i], cosine_ab[li][i]) {
                        (Some(c), Some(k), Some(ab)) => Some((c, k, ab)),
                        _ => None,
                    }
                })
                .collect();
            let excluded = n - defined.len();
            let (mc, sc) = mean_std(defined.iter().map(|t| 1.0 - t.0));
            let (mk, sk) = mean_std(defined.iter().map(|t| t.1));
            let (mab, sab) = mean_std(defined.iter().map(|t| 1.0 - t.2));
            stats.push(LayerAlphaStats {
                layer,
                alpha,
                mean_one_minus_cosine_alpha: mc,
                std_one_minus_cosine_alpha: sc,
                mean_one_minus_cosine_ab: mab,
                std_one_minus_cosine_ab: sab,
                mean_coef: mk,
                std_coef: sk,
                excluded,
            });
        }
    }

    let (curve, barrier) = error_curve(a, b, data, grid)?;
    Ok(LlfcReport {
        grid: grid.clone(),
        layers,
        cosine_alpha,
        coef_alpha,
        cosine_ab,
        stats,
        error_curve: curve,
        barrier,
    })
}

/// Outcome of the interpolation-error bound check.
#[derive(Debug, Clone, PartialEq)]
pub struct Lemma1Outcome {
    pub passed: bool,
    /// first interior alpha whose error exceeds 2*eps, if any.
    pub witness: Option<f64>,
}

/// Checks that every interior grid error is at most twice the endpoint bound.
pub fn lemma1_check(report: &LlfcReport, eps: f64) -> Result<Lemma1Outcome> {
    let (err_a, err_b) = report.endpoint_errors();
    if err_a.max(err_b) > eps {
        return Err(Error::Domain(format!(
            "endpoint errors ({err_a}, {err_b}) exceed eps {eps}"
        )));
    }
    for (&alpha, &err) in report
        .grid
        .values()
        .iter()
        .zip(&report.error_curve)
        .skip(1)
        .take(report.grid.len() - 2)
    {
        if err > 2.0 * eps {
            return Ok(Lemma1Outcome {
                passed: false,
                witness: Some(alpha),
            });
        }
    }
    Ok(Lemma1Outcome {
        passed: true,
        witness: None,
    })
}
