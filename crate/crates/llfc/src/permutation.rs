//! Permutation symmetry machinery: hidden-unit permutations, an exact linear
//! assignment solver, the weight/activation matching objectives, and the
//! commutativity residual with a swap-based local search.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{frobenius_norm, matmul, Matrix};
use crate::nn::{forward, FeatureTrace, ModelParams};
use crate::rng::CounterRng;

/// One permutation per hidden layer; input and output layers are implicitly
/// identity. `perms[l][i]` is the original row that output-row `i` of hidden
/// layer `l + 1` maps from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerPermutation {
    pub perms: Vec<Vec<usize>>,
}

impl LayerPermutation {
    pub fn new(perms: Vec<Vec<usize>>) -> Result<Self> {
        for (l, p) in perms.iter().enumerate() {
            let mut seen = vec![false; p.len()];
            for &i in p {
                if i >= p.len() || seen[i] {
                    return Err(Error::Bijection(format!(
                        "layer {l}: index {i} duplicated or out of range"
                    )));
                }
                seen[i] = true;
            }
        }
        Ok(LayerPermutation { perms })
    }

    /// Identity permutation for the hidden widths of `params`.
    pub fn identity(params: &ModelParams) -> Self {
        let perms = params.weights[..params.layers() - 1]
            .iter()
            .map(|w| (0..w.rows()).collect())
            .collect();
        LayerPermutation { perms }
    }

    pub fn inverse(&self) -> Self {
        let perms = self
            .perms
            .iter()
            .map(|p| {
                let mut inv = vec![0; p.len()];
                for (i, &j) in p.iter().enumerate() {
                    inv[j] = i;
                }
                inv
            })
            .collect();
        LayerPermutation { perms }
    }

    pub fn is_identity(&self) -> bool {
        self.perms
            .iter()
            .all(|p| p.iter().enumerate().all(|(i, &j)| i == j))
    }
}

/// Apply the permutation to parameters: W'(l) = P(l) W(l) P(l-1)^T and
/// b'(l) = P(l) b(l). The result is functionally equivalent to `theta`.
pub fn apply(theta: &ModelParams, pi: &LayerPermutation) -> Result<ModelParams> {
    let l = theta.layers();
    if pi.perms.len() != l - 1 {
        return Err(Error::Shape(format!(
            "{} hidden permutations for {} hidden layers",
            pi.perms.len(),
            l - 1
        )));
    }
    for (h, p) in pi.perms.iter().enumerate() {
        if p.len() != theta.weights[h].rows() {
            return Err(Error::Shape(format!(
                "permutation {h} has size {} but layer width is {}",
                p.len(),
                theta.weights[h].rows()
            )));
        }
    }
    let mut weights = Vec::with_capacity(l);
    let mut biases = Vec::with_capacity(l);
    for layer in 0..l {
        let mut w = theta.weights[layer].clone();
        let mut b = theta.biases[layer].clone();
        if layer < l - 1 {
            let p = &pi.perms[layer];
            w = w.gather_rows(p);
            b = p.iter().map(|&i| theta.biases[layer][i]).collect();
        }
        if layer > 0 {
            w = w.gather_cols(&pi.perms[layer - 1]);
        }
        weights.push(w);
        biases.push(b);
    }
    Ok(ModelParams { weights, biases })
}

/// Exact minimum-cost assignment via shortest augmenting paths, followed by
/// a lexicographic tie-break pass over the tight-edge graph so that results
/// are platform-deterministic even under cost ties.
pub fn solve_lap(cost: &Matrix) -> Result<(Vec<usize>, f64)> {
    if cost.rows() != cost.cols() {
        return Err(Error::Shape(format!(
            "solve_lap needs a square matrix, got {}x{}",
            cost.rows(),
            cost.cols()
        )));
    }
    let n = cost.rows();
    if n == 0 {
        return Ok((Vec::new(), 0.0));
    }
    // Jonker-Volgenant style shortest augmenting path with potentials,
    // 1-indexed internally.
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1]; // p[j] = row matched to column j
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost.get(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        assignment[p[j] - 1] = j - 1;
    }
    lexicographic_refine(cost, &u[1..], &v[1..], &mut assignment);
    let total = (0..n).map(|i| cost.get(i, assignment[i])).sum();
    Ok((assignment, total))
}

/// Rewires an optimal assignment to the lexicographically smallest optimal
/// one. Optimal assignments are exactly the perfect matchings over tight
/// edges (zero reduced cost w.r.t. the optimal duals), so we fix rows in
/// order, trying tight columns ascending and keeping a choice whenever the
/// remaining rows can still be matched.
fn lexicographic_refine(cost: &Matrix, u: &[f64], v: &[f64], assignment: &mut [usize]) {
    let n = assignment.len();
    let scale = cost
        .data()
        .iter()
        .fold(1.0f64, |acc, &c| acc.max(c.abs()));
    let tol = 1e-9 * scale;
    let tight: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| (cost.get(i, j) - u[i] - v[j]).abs() <= tol)
                .collect()
        })
        .collect();
    let mut row_of_col = vec![usize::MAX; n];
    for (i, &j) in assignment.iter().enumerate() {
        row_of_col[j] = i;
    }
    // augmenting path over tight edges restricted to rows > `fixed_upto`
    fn augment(
        row: usize,
        fixed_upto: usize,
        tight: &[Vec<usize>],
        assignment: &mut [usize],
        row_of_col: &mut [usize],
        visited: &mut [bool],
        fixed_col: &[bool],
    ) -> bool {
        for &j in &tight[row] {
            if visited[j] || fixed_col[j] {
                continue;
            }
            visited[j] = true;
            let occupant = row_of_col[j];
            if occupant == usize::MAX
                || (occupant > fixed_upto
                    && augment(occupant, fixed_upto, tight, assignment, row_of_col, visited, fixed_col))
            {
                assignment[row] = j;
                row_of_col[j] = row;
                return true;
            }
        }
        false
    }

    let mut fixed_col = vec![false; n];
    for i in 0..n {
        let current = assignment[i];
        for &j in &tight[i] {
            if j >= current {
                break; // columns are ascending; nothing smaller remains
            }
            if fixed_col[j] {
                continue;
            }
            // try to move the occupant of j elsewhere
            let occupant = row_of_col[j];
            debug_assert!(occupant != usize::MAX || j != current);
            // detach row i from its current column
            row_of_col[current] = usize::MAX;
            assignment[i] = j;
            let prev_occ = occupant;
            row_of_col[j] = i;
            let ok = if prev_occ == usize::MAX {
                true
            } else {
                let mut visited = vec![false; n];
                visited[j] = true;
                augment(prev_occ, i, &tight, assignment, &mut row_of_col, &mut visited, &fixed_col)
            };
            if ok {
                break;
            }
            // revert
            assignment[i] = current;
            row_of_col[current] = i;
            row_of_col[j] = prev_occ;
            if prev_occ != usize::MAX {
                assignment[prev_occ] = j;
            }
        }
        fixed_col[assignment[i]] = true;
    }
}

/// Per-layer activation matching: for each hidden layer, the permutation
/// maximizing tr(P^T H_A H_B^T), solved independently as a LAP.
pub fn activation_matching(
    trace_a: &FeatureTrace,
    trace_b: &FeatureTrace,
) -> Result<LayerPermutation> {
    if trace_a.post.len() != trace_b.post.len() {
        return Err(Error::Shape("traces have different depths".into()));
    }
    let l = trace_a.pre.len();
    let mut perms = Vec::with_capacity(l - 1);
    for layer in 1..l {
        let ha = &trace_a.post[layer];
        let hb = &trace_b.post[layer];
        if ha.rows() != hb.rows() || ha.cols() != hb.cols() {
            return Err(Error::Shape(format!(
                "layer {layer}: {}x{} vs {}x{}",
                ha.rows(),
                ha.cols(),
                hb.rows(),
                hb.cols()
            )));
        }
        let sim = matmul(ha, &hb.transpose())?;
        let cost = sim.scale(-1.0);
        let (p, _) = solve_lap(&cost)?;
        perms.push(p);
    }
    LayerPermutation::new(perms)
}

fn outer(a: &[f64], b: &[f64]) -> Matrix {
    let mut m = Matrix::zeros(a.len(), b.len());
    for i in 0..a.len() {
        for j in 0..b.len() {
            m.set(i, j, a[i] * b[j]);
        }
    }
    m
}

/// Weight matching by coordinate descent over hidden layers, each step an
/// exact LAP with the neighboring permutations held fixed. Layer visiting
/// order is randomized per pass from `seed`; terminates when a full pass
/// leaves the objective ||theta_A - pi(theta_B)||^2 unimproved.
pub fn weight_matching(
    a: &ModelParams,
    b: &ModelParams,
    seed: u64,
    max_passes: usize,
) -> Result<LayerPermutation> {
    if !a.same_spec(b) {
        return Err(Error::Shape("weight_matching: specs differ".into()));
    }
    let l = a.layers();
    let n_hidden = l - 1;
    let mut pi = LayerPermutation::identity(a);
    if n_hidden == 0 {
        return Ok(pi);
    }
    let mut rng = CounterRng::substream(seed, 0x77);
    let mut objective = a.sq_distance(&apply(b, &pi)?);
    for _ in 0..max_passes {
        let order = rng.permutation(n_hidden);
        for &h in &order {
            // trace objective for P(h+1): cost matrix collects both adjacent
            // layers plus the bias outer product
            let prev: Vec<usize> = if h == 0 {
                (0..a.weights[0].cols()).collect()
            } else {
                pi.perms[h - 1].clone()
            };
            let wb_cols = b.weights[h].gather_cols(&prev);
            let mut c = matmul(&a.weights[h], &wb_cols.transpose())?;
            let next_term = if h + 1 < n_hidden {
                let pb_next = b.weights[h + 1].gather_rows(&pi.perms[h + 1]);
                matmul(&a.weights[h + 1].transpose(), &pb_next)?
            } else {
                matmul(&a.weights[h + 1].transpose(), &b.weights[h + 1])?
            };
            c = c.scaled_add(1.0, &next_term, 1.0)?;
            c = c.scaled_add(1.0, &outer(&a.biases[h], &b.biases[h]), 1.0)?;
            let (p, _) = solve_lap(&c.scale(-1.0))?;
            pi.perms[h] = p;
        }
        let new_objective = a.sq_distance(&apply(b, &pi)?);
        if new_objective >= objective - 1e-12 * objective.abs().max(1.0) {
            break;
        }
        objective = new_objective;
    }
    Ok(pi)
}

/// Permuted B-side weight and previous-layer feature for one weight layer:
/// P(l) W_B(l) P(l-1)^T and P(l-1) H_B(l-1), with endpoint P's identity.
fn permuted_blocks(
    b: &ModelParams,
    trace_b: &FeatureTrace,
    pi: &LayerPermutation,
    layer: usize,
) -> (Matrix, Matrix) {
    let l = b.layers();
    let mut wb = b.weights[layer].clone();
    if layer < l - 1 {
        wb = wb.gather_rows(&pi.perms[layer]);
    }
    if layer > 0 {
        wb = wb.gather_cols(&pi.perms[layer - 1]);
        (wb, trace_b.post[layer].gather_rows(&pi.perms[layer - 1]))
    } else {
        (wb, trace_b.post[0].clone())
    }
}

/// Squared Frobenius norm of the per-layer commutativity residual
/// (W_A - P W_B P_prev^T)(H_A_prev - P_prev H_B_prev) on `data`.
pub fn commutativity_objective(
    a: &ModelParams,
    b: &ModelParams,
    pi: &LayerPermutation,
    data: &Dataset,
) -> Result<Vec<f64>> {
    if !a.same_spec(b) {
        return Err(Error::Shape("commutativity_objective: specs differ".into()));
    }
    let trace_a = forward(a, &data.x)?;
    let trace_b = forward(b, &data.x)?;
    commutativity_objective_traced(a, b, pi, &trace_a, &trace_b)
}

fn commutativity_objective_traced(
    a: &ModelParams,
    b: &ModelParams,
    pi: &LayerPermutation,
    trace_a: &FeatureTrace,
    trace_b: &FeatureTrace,
) -> Result<Vec<f64>> {
    let l = a.layers();
    let mut out = Vec::with_capacity(l);
    for layer in 0..l {
        out.push(layer_residual(a, b, pi, trace_a, trace_b, layer)?);
    }
    Ok(out)
}

fn layer_residual(
    a: &ModelParams,
    b: &ModelParams,
    pi: &LayerPermutation,
    trace_a: &FeatureTrace,
    trace_b: &FeatureTrace,
    layer: usize,
) -> Result<f64> {
    let (wb, hb_prev) = permuted_blocks(b, trace_b, pi, layer);
    let wd = a.weights[layer].sub(&wb)?;
    let hd = trace_a.post[layer].sub(&hb_prev)?;
    let r = matmul(&wd, &hd)?;
    Ok(frobenius_norm(&r).powi(2))
}

/// Greedy pairwise-swap descent on the summed commutativity residual.
/// Returns the final permutation and the objective value after each accepted
/// swap (starting value first).
pub fn qap_local_search(
    a: &ModelParams,
    b: &ModelParams,
    data: &Dataset,
    init: &LayerPermutation,
    seed: u64,
    max_iters: usize,
) -> Result<(LayerPermutation, Vec<f64>)> {
    if !a.same_spec(b) {
        return Err(Error::Shape("qap_local_search: specs differ".into()));
    }
    let trace_a = forward(a, &data.x)?;
    let trace_b = forward(b, &data.x)?;
    let mut pi = init.clone();
    // per-layer residuals; swapping hidden layer h touches residuals of
    // weight layers h and h+1 only
    let mut residuals = commutativity_objective_traced(a, b, &pi, &trace_a, &trace_b)?;
    let mut trace_vals = vec![residuals.iter().sum::<f64>()];

    // fixed candidate scan order, shuffled once by seed for tie-breaking
    let mut candidates: Vec<(usize, usize, usize)> = Vec::new();
    for (h, p) in pi.perms.iter().enumerate() {
        for i in 0..p.len() {
            for j in (i + 1)..p.len() {
                candidates.push((h, i, j));
            }
        }
    }
    let mut rng = CounterRng::substream(seed, 0x9a9);
    for i in (1..candidates.len()).rev() {
        let j = rng.next_below(i as u64 + 1) as usize;
        candidates.swap(i, j);
    }

    for _ in 0..max_iters {
        let current: f64 = residuals.iter().sum();
        let mut best: Option<(usize, usize, usize, f64, f64, f64)> = None;
        for &(h, i, j) in &candidates {
            pi.perms[h].swap(i, j);
            let r_h = layer_residual(a, b, &pi, &trace_a, &trace_b, h)?;
            let r_next = layer_residual(a, b, &pi, &trace_a, &trace_b, h + 1)?;
            pi.perms[h].swap(i, j);
            let delta = (r_h + r_next) - (residuals[h] + residuals[h + 1]);
            if delta < -1e-15 * current.max(1.0) {
                let improvement = -delta;
                if best.map_or(true, |(_, _, _, _, _, gain)| improvement > gain) {
                    best = Some((h, i, j, r_h, r_next, improvement));
                }
            }
        }
        match best {
            Some((h, i, j, r_h, r_next, _)) => {
                pi.perms[h].swap(i, j);
                residuals[h] = r_h;
                residuals[h + 1] = r_next;
                trace_vals.push(residuals.iter().sum());
            }
            None => break,
        }
    }
    Ok((pi, trace_vals))
}
