//! Built-in regression backends.
//!
//! All fits are deterministic: none of the learners draws random numbers,
//! and ties (kNN distances, tree split scores) break by index.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Row-major feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Design {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "design shape mismatch");
        Design { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let data = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Design::new(rows.len(), cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }
}

/// What the response is, which decides the link for logistic fits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Response {
    Binary,
    Real,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backend {
    /// Ordinary least squares with intercept.
    Linear,
    /// Logistic regression by iteratively reweighted least squares. Real
    /// responses are rescaled to `[0,1]` and fit as quasi-binomial.
    Logistic,
    /// k nearest neighbours on z-scored features.
    Knn { k: usize },
    /// Depth-limited regression tree.
    Tree { depth: usize },
    /// Uniform average of linear, logistic, kNN and tree fits.
    Ensemble,
}

const ENSEMBLE_KNN: usize = 25;
const ENSEMBLE_DEPTH: usize = 4;
const TREE_MIN_LEAF: usize = 10;
const LOGISTIC_RIDGE: f64 = 1e-6;
const LOGISTIC_MAX_ITER: usize = 60;

impl FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let param = |p: &str, what: &str| -> Result<usize> {
            p.parse::<usize>()
                .ok()
                .filter(|&v| v >= 1)
                .ok_or_else(|| Error::Config(format!("bad {what} '{p}' in backend '{s}'")))
        };
        match s {
            "linear" => Ok(Backend::Linear),
            "logistic" => Ok(Backend::Logistic),
            "ensemble" => Ok(Backend::Ensemble),
            _ => {
                if let Some(k) = s.strip_prefix("knn:") {
                    Ok(Backend::Knn { k: param(k, "neighbour count")? })
                } else if let Some(d) = s.strip_prefix("tree:") {
                    Ok(Backend::Tree { depth: param(d, "depth")? })
                } else {
                    Err(Error::Config(format!(
                        "unknown backend '{s}' (expected linear|logistic|knn:k|tree:depth|ensemble)"
                    )))
                }
            }
        }
    }
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Backend::Linear => write!(f, "linear"),
            Backend::Logistic => write!(f, "logistic"),
            Backend::Knn { k } => write!(f, "knn:{k}"),
            Backend::Tree { depth } => write!(f, "tree:{depth}"),
            Backend::Ensemble => write!(f, "ensemble"),
        }
    }
}

/// A fitted model.
#[derive(Debug, Clone)]
pub enum Model {
    Linear { coef: Vec<f64> },
    Logistic { scaler: Scaler, coef: Vec<f64>, lo: f64, hi: f64 },
    Knn { scaler: Scaler, x: Design, y: Vec<f64>, k: usize },
    Tree { nodes: Vec<Node> },
    Ensemble(Vec<Model>),
}

#[derive(Debug, Clone)]
pub struct Scaler {
    mean: Vec<f64>,
    sd: Vec<f64>,
}

impl Scaler {
    fn fit(x: &Design) -> Self {
        let n = x.rows() as f64;
        let mut mean = vec![0.0; x.cols()];
        let mut sd = vec![0.0; x.cols()];
        for i in 0..x.rows() {
            for (j, v) in x.row(i).iter().enumerate() {
                mean[j] += v / n;
            }
        }
        for i in 0..x.rows() {
            for (j, v) in x.row(i).iter().enumerate() {
                sd[j] += (v - mean[j]).powi(2) / n;
            }
        }
        for s in &mut sd {
            *s = if *s > 1e-24 { s.sqrt() } else { 1.0 };
        }
        Scaler { mean, sd }
    }

    #[inline]
    fn apply(&self, row: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(row.iter().zip(&self.mean).zip(&self.sd).map(|((v, m), s)| (v - m) / s));
    }

    fn transform(&self, x: &Design) -> Design {
        let mut data = Vec::with_capacity(x.rows() * x.cols());
        let mut buf = Vec::new();
        for i in 0..x.rows() {
            self.apply(x.row(i), &mut buf);
            data.extend_from_slice(&buf);
        }
        Design::new(x.rows(), x.cols(), data)
    }
}

#[derive(Debug, Clone)]
pub enum Node {
    Leaf(f64),
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

impl Backend {
    pub fn fit(&self, x: &Design, y: &[f64], response: Response) -> Result<Model> {
        if x.rows() != y.len() {
            return Err(Error::Config("design rows differ from response length".into()));
        }
        if y.is_empty() {
            return Err(Error::Config("cannot fit on an empty training set".into()));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("non-finite response".into()));
        }
        match *self {
            Backend::Linear => fit_linear(x, y),
            Backend::Logistic => fit_logistic(x, y, response),
            Backend::Knn { k } => {
                let scaler = Scaler::fit(x);
                Ok(Model::Knn { x: scaler.transform(x), scaler, y: y.to_vec(), k })
            }
            Backend::Tree { depth } => Ok(fit_tree(x, y, depth)),
            Backend::Ensemble => {
                let members = [
                    Backend::Linear,
                    Backend::Logistic,
                    Backend::Knn { k: ENSEMBLE_KNN },
                    Backend::Tree { depth: ENSEMBLE_DEPTH },
                ];
                let fits = members
                    .iter()
                    .map(|b| b.fit(x, y, response))
                    .collect::<Result<Vec<_>>>()?;
                Ok(Model::Ensemble(fits))
            }
        }
    }
}

impl Model {
    pub fn predict(&self, row: &[f64]) -> f64 {
        match self {
            Model::Linear { coef } => linear_predictor(coef, row),
            Model::Logistic { scaler, coef, lo, hi } => {
                let mut z = Vec::with_capacity(row.len());
                scaler.apply(row, &mut z);
                lo + (hi - lo) * sigmoid(linear_predictor(coef, &z))
            }
            Model::Knn { scaler, x, y, k } => {
                let mut z = Vec::with_capacity(row.len());
                scaler.apply(row, &mut z);
                knn_mean(x, y, *k, &z)
            }
            Model::Tree { nodes } => {
                let mut at = 0;
                loop {
                    match nodes[at] {
                        Node::Leaf(v) => return v,
                        Node::Split { feature, threshold, left, right } => {
                            at = if row[feature] <= threshold { left } else { right };
                        }
                    }
                }
            }
            Model::Ensemble(models) => {
                models.iter().map(|m| m.predict(row)).sum::<f64>() / models.len() as f64
            }
        }
    }

    pub fn predict_all(&self, x: &Design) -> Vec<f64> {
        (0..x.rows()).map(|i| self.predict(x.row(i))).collect()
    }
}

#[inline]
fn linear_predictor(coef: &[f64], row: &[f64]) -> f64 {
    coef[0] + coef[1..].iter().zip(row).map(|(b, v)| b * v).sum::<f64>()
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn with_intercept(x: &Design) -> DMatrix<f64> {
    DMatrix::from_fn(x.rows(), x.cols() + 1, |i, j| if j == 0 { 1.0 } else { x.row(i)[j - 1] })
}

fn fit_linear(x: &Design, y: &[f64]) -> Result<Model> {
    let xm = with_intercept(x);
    let yv = DVector::from_column_slice(y);
    let svd = xm.svd(true, true);
    let tol = 1e-10 * svd.singular_values.max().max(1.0);
    let coef = svd
        .solve(&yv, tol)
        .map_err(|e| Error::Config(format!("least squares failed: {e}")))?;
    let coef: Vec<f64> = coef.iter().copied().collect();
    if coef.iter().any(|c| !c.is_finite()) {
        return Err(Error::Config("least squares produced non-finite coefficients".into()));
    }
    Ok(Model::Linear { coef })
}

fn fit_logistic(x: &Design, y: &[f64], response: Response) -> Result<Model> {
    let (lo, hi) = match response {
        Response::Binary => (0.0, 1.0),
        Response::Real => {
            let lo = y.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (lo, hi)
        }
    };
    let scaler = Scaler::fit(x);
    let p = x.cols() + 1;
    if hi - lo <= 1e-12 {
        // constant response: all mass at one end
        let mut coef = vec![0.0; p];
        coef[0] = 0.0;
        return Ok(Model::Logistic { scaler, coef, lo, hi: lo });
    }
    let z = with_intercept(&scaler.transform(x));
    let target: Vec<f64> = y.iter().map(|v| ((v - lo) / (hi - lo)).clamp(0.0, 1.0)).collect();
    let n = y.len();
    let mut beta = DVector::<f64>::zeros(p);
    let mean = target.iter().sum::<f64>() / n as f64;
    beta[0] = (mean.clamp(1e-6, 1.0 - 1e-6) / (1.0 - mean.clamp(1e-6, 1.0 - 1e-6))).ln();
    for _ in 0..LOGISTIC_MAX_ITER {
        let eta = &z * &beta;
        let mut grad = DVector::<f64>::zeros(p);
        let mut hess = DMatrix::<f64>::zeros(p, p);
        for i in 0..n {
            let mu = sigmoid(eta[i]);
            let w = (mu * (1.0 - mu)).max(1e-10);
            let r = target[i] - mu;
            let zi = z.row(i);
            for a in 0..p {
                grad[a] += zi[a] * r;
                for b in a..p {
                    hess[(a, b)] += w * zi[a] * zi[b];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                hess[(a, b)] = hess[(b, a)];
            }
        }
        for a in 1..p {
            hess[(a, a)] += LOGISTIC_RIDGE * n as f64;
            grad[a] -= LOGISTIC_RIDGE * n as f64 * beta[a];
        }
        let step = match hess.clone().cholesky() {
            Some(ch) => ch.solve(&grad),
            None => hess
                .svd(true, true)
                .solve(&grad, 1e-12)
                .map_err(|e| Error::Config(format!("IRLS step failed: {e}")))?,
        };
        beta += &step;
        if step.amax() < 1e-9 {
            break;
        }
    }
    let coef: Vec<f64> = beta.iter().copied().collect();
    if coef.iter().any(|c| !c.is_finite()) {
        return Err(Error::Config("logistic fit diverged".into()));
    }
    Ok(Model::Logistic { scaler, coef, lo, hi })
}

fn knn_mean(x: &Design, y: &[f64], k: usize, z: &[f64]) -> f64 {
    let k = k.min(y.len());
    let mut dist: Vec<(f64, usize)> = (0..x.rows())
        .map(|i| {
            let d = x.row(i).iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
            (d, i)
        })
        .collect();
    dist.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    dist[..k].iter().map(|&(_, i)| y[i]).sum::<f64>() / k as f64
}

fn fit_tree(x: &Design, y: &[f64], depth: usize) -> Model {
    let mut nodes = Vec::new();
    let idx: Vec<usize> = (0..y.len()).collect();
    grow(x, y, idx, depth, &mut nodes);
    Model::Tree { nodes }
}

fn grow(x: &Design, y: &[f64], idx: Vec<usize>, depth: usize, nodes: &mut Vec<Node>) -> usize {
    let me = nodes.len();
    let mean = idx.iter().map(|&i| y[i]).sum::<f64>() / idx.len() as f64;
    nodes.push(Node::Leaf(mean));
    if depth == 0 || idx.len() < 2 * TREE_MIN_LEAF {
        return me;
    }
    let Some((feature, threshold)) = best_split(x, y, &idx) else {
        return me;
    };
    let (l, r): (Vec<usize>, Vec<usize>) =
        idx.into_iter().partition(|&i| x.row(i)[feature] <= threshold);
    let left = grow(x, y, l, depth - 1, nodes);
    let right = grow(x, y, r, depth - 1, nodes);
    nodes[me] = Node::Split { feature, threshold, left, right };
    me
}

/// Split maximizing the between-group sum of squares, subject to the
/// minimum leaf size.
fn best_split(x: &Design, y: &[f64], idx: &[usize]) -> Option<(usize, f64)> {
    let n = idx.len();
    let total: f64 = idx.iter().map(|&i| y[i]).sum();
    let mut best: Option<(f64, usize, f64)> = None;
    let mut order = idx.to_vec();
    for j in 0..x.cols() {
        order.sort_by(|&a, &b| x.row(a)[j].total_cmp(&x.row(b)[j]).then(a.cmp(&b)));
        let mut left_sum = 0.0;
        for pos in 0..n - 1 {
            left_sum += y[order[pos]];
            let nl = pos + 1;
            let nr = n - nl;
            let v = x.row(order[pos])[j];
            let v_next = x.row(order[pos + 1])[j];
            if nl < TREE_MIN_LEAF || nr < TREE_MIN_LEAF || v == v_next {
                continue;
            }
            let right_sum = total - left_sum;
            let gain = left_sum * left_sum / nl as f64 + right_sum * right_sum / nr as f64
                - total * total / n as f64;
            if best.is_none_or(|(g, _, _)| gain > g + 1e-12) {
                best = Some((gain, j, 0.5 * (v + v_next)));
            }
        }
    }
    best.filter(|&(g, _, _)| g > 1e-12).map(|(_, j, t)| (j, t))
}
