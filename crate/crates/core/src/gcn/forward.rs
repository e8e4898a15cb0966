use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::GcnWeights;
use crate::error::{Error, Result};
use crate::linalg::{CsrMatrix, Matrix};

/// Row operator applied at one layer: `Z = P (H W)`.
#[derive(Clone, Debug, PartialEq)]
pub enum Propagation {
    /// Passes rows through unchanged (features already aggregated).
    Identity(usize),
    Sparse(CsrMatrix),
}

impl Propagation {
    pub fn rows(&self) -> usize {
        match self {
            Propagation::Identity(n) => *n,
            Propagation::Sparse(a) => a.nrows(),
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            Propagation::Identity(n) => *n,
            Propagation::Sparse(a) => a.ncols(),
        }
    }

    pub fn apply(&self, m: &Matrix) -> Result<Matrix> {
        match self {
            Propagation::Identity(n) => {
                if m.rows() != *n {
                    return Err(Error::Shape(format!(
                        "identity on {n} rows, got {}",
                        m.rows()
                    )));
                }
                Ok(m.clone())
            }
            Propagation::Sparse(a) => a.spmm(m),
        }
    }

    pub fn apply_transposed(&self, m: &Matrix) -> Result<Matrix> {
        match self {
            Propagation::Identity(_) => self.apply(m),
            Propagation::Sparse(a) => a.t_spmm(m),
        }
    }

    pub fn to_dense(&self) -> Matrix {
        match self {
            Propagation::Identity(n) => Matrix::identity(*n),
            Propagation::Sparse(a) => a.to_dense(),
        }
    }
}

/// Dropout is active only in `Train` mode.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ForwardMode {
    Eval,
    Train { dropout: f64, seed: u64 },
}

/// Intermediate values of one forward pass, kept for the backward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    /// Pre-activations, one per layer.
    pub pre_activations: Vec<Matrix>,
    /// Inputs to layers `2..=L` after ReLU and dropout.
    pub hidden: Vec<Matrix>,
    /// Per-entry dropout multipliers for each hidden layer (`0` or
    /// `1/(1-rate)`); `None` when dropout was off.
    pub dropout_masks: Vec<Option<Vec<f64>>>,
    /// Row-softmax of the last pre-activation.
    pub probs: Matrix,
}

impl ForwardCache {
    pub fn logits(&self) -> &Matrix {
        self.pre_activations.last().expect("at least one layer")
    }

    /// Argmax per row; ties go to the lowest class index.
    pub fn predictions(&self) -> Vec<usize> {
        (0..self.probs.rows())
            .map(|i| {
                let row = self.logits().row(i);
                let mut best = 0;
                for (c, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = c;
                    }
                }
                best
            })
            .collect()
    }
}

fn softmax_rows(z: &Matrix) -> Matrix {
    let mut q = z.clone();
    for i in 0..q.rows() {
        let row = q.row_mut(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    q
}

fn check_layers(props: &[Propagation], x: &CsrMatrix, w: &GcnWeights) -> Result<()> {
    if props.len() != w.num_layers() {
        return Err(Error::Shape(format!(
            "{} propagation operators for {} layers",
            props.len(),
            w.num_layers()
        )));
    }
    if props[0].cols() != x.nrows() {
        return Err(Error::Shape(format!(
            "first propagation expects {} input rows, features have {}",
            props[0].cols(),
            x.nrows()
        )));
    }
    for (l, pair) in props.windows(2).enumerate() {
        if pair[1].cols() != pair[0].rows() {
            return Err(Error::Shape(format!(
                "layer {} outputs {} rows but layer {} expects {}",
                l,
                pair[0].rows(),
                l + 1,
                pair[1].cols()
            )));
        }
    }
    if x.ncols() != w.layers()[0].rows() {
        return Err(Error::Shape(format!(
            "features have {} columns, first layer expects {}",
            x.ncols(),
            w.layers()[0].rows()
        )));
    }
    Ok(())
}

/// Runs `H_{l+1} = act(P_l H_l W_l)` with ReLU on hidden layers and a
/// row-softmax on the last. `x` holds the input rows of the first layer.
pub fn gcn_forward(
    props: &[Propagation],
    x: &CsrMatrix,
    w: &GcnWeights,
    mode: ForwardMode,
) -> Result<ForwardCache> {
    check_layers(props, x, w)?;
    let num_layers = w.num_layers();
    let mut rng = match mode {
        ForwardMode::Train { dropout, seed } if dropout > 0.0 => {
            if !(0.0..1.0).contains(&dropout) {
                return Err(Error::Parameter(format!(
                    "dropout {dropout} outside [0, 1)"
                )));
            }
            Some((
                ChaCha8Rng::seed_from_u64(seed),
                1.0 / (1.0 - dropout),
                dropout,
            ))
        }
        _ => None,
    };

    let mut pre_activations = Vec::with_capacity(num_layers);
    let mut hidden: Vec<Matrix> = Vec::with_capacity(num_layers - 1);
    let mut dropout_masks = Vec::with_capacity(num_layers - 1);
    for (l, (prop, wl)) in props.iter().zip(w.layers()).enumerate() {
        let transformed = match hidden.last() {
            None => x.spmm(wl)?,
            Some(h) => h.matmul(wl)?,
        };
        let z = prop.apply(&transformed)?;
        if l + 1 < num_layers {
            let mut h = z.clone();
            for v in h.as_mut_slice() {
                if *v <= 0.0 {
                    *v = 0.0;
                }
            }
            let mask = rng.as_mut().map(|(r, keep_scale, rate)| {
                let mask: Vec<f64> = (0..h.as_slice().len())
                    .map(|_| {
                        if r.random::<f64>() < *rate {
                            0.0
                        } else {
                            *keep_scale
                        }
                    })
                    .collect();
                for (v, m) in h.as_mut_slice().iter_mut().zip(&mask) {
                    *v *= m;
                }
                mask
            });
            dropout_masks.push(mask);
            hidden.push(h);
        }
        pre_activations.push(z);
    }
    let probs = softmax_rows(pre_activations.last().expect("at least one layer"));
    Ok(ForwardCache {
        pre_activations,
        hidden,
        dropout_masks,
        probs,
    })
}

fn check_mask(cache: &ForwardCache, labels: &[usize], mask: &[usize]) -> Result<()> {
    if mask.is_empty() {
        return Err(Error::DegenerateInput("loss mask is empty".into()));
    }
    let (n, m) = cache.probs.shape();
    if labels.len() != n {
        return Err(Error::Shape(format!(
            "{} labels for {n} output rows",
            labels.len()
        )));
    }
    if let Some(&bad) = mask.iter().find(|&&i| i >= n) {
        return Err(Error::Shape(format!(
            "mask row {bad} outside {n} output rows"
        )));
    }
    if let Some(&y) = mask.iter().map(|&i| &labels[i]).find(|&&y| y >= m) {
        return Err(Error::Shape(format!("label {y} outside {m} classes")));
    }
    Ok(())
}

/// Mean cross-entropy over `mask` rows plus `l2/2 * |W|^2`.
pub fn xent_loss(
    cache: &ForwardCache,
    labels: &[usize],
    mask: &[usize],
    w: &GcnWeights,
    l2: f64,
) -> Result<f64> {
    check_mask(cache, labels, mask)?;
    let z = cache.logits();
    let mut total = 0.0;
    for &i in mask {
        let row = z.row(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        total += lse - row[labels[i]];
    }
    let mut loss = total / mask.len() as f64;
    if l2 > 0.0 {
        loss += 0.5 * l2 * w.norm_sq();
    }
    Ok(loss)
}

/// Gradients of [`xent_loss`] with respect to every layer.
pub fn gcn_backward(
    cache: &ForwardCache,
    props: &[Propagation],
    x: &CsrMatrix,
    labels: &[usize],
    mask: &[usize],
    w: &GcnWeights,
    l2: f64,
) -> Result<GcnWeights> {
    check_layers(props, x, w)?;
    check_mask(cache, labels, mask)?;
    let num_layers = w.num_layers();
    if cache.pre_activations.len() != num_layers || cache.hidden.len() + 1 != num_layers {
        return Err(Error::Shape("cache does not match the model depth".into()));
    }
    for (z, p) in cache.pre_activations.iter().zip(props) {
        if z.rows() != p.rows() {
            return Err(Error::Shape(
                "cache rows do not match propagation rows".into(),
            ));
        }
    }

    let (n, m) = cache.probs.shape();
    let scale = 1.0 / mask.len() as f64;
    let mut dz = Matrix::zeros(n, m);
    for &i in mask {
        let (q, d) = (cache.probs.row(i), dz.row_mut(i));
        for c in 0..m {
            d[c] = q[c] * scale;
        }
        d[labels[i]] -= scale;
    }

    let mut grads: Vec<Matrix> = vec![Matrix::zeros(0, 0); num_layers];
    for l in (0..num_layers).rev() {
        let du = props[l].apply_transposed(&dz)?;
        let mut gw = if l == 0 {
            x.t_spmm(&du)?
        } else {
            cache.hidden[l - 1].t_matmul(&du)?
        };
        if l2 > 0.0 {
            gw.add_scaled(l2, &w.layers()[l])?;
        }
        grads[l] = gw;
        if l > 0 {
            let mut dh = du.matmul_t(&w.layers()[l])?;
            let z_prev = &cache.pre_activations[l - 1];
            let mask = cache.dropout_masks[l - 1].as_deref();
            for (k, (g, &zv)) in dh
                .as_mut_slice()
                .iter_mut()
                .zip(z_prev.as_slice())
                .enumerate()
            {
                let keep = mask.map_or(1.0, |mk| mk[k]);
                *g = if zv > 0.0 { *g * keep } else { 0.0 };
            }
            dz = dh;
        }
    }
    GcnWeights::new(grads)
}
