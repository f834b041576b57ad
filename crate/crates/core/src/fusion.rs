//! Reference kernel for fusing geometry and camera-view tokens into visual
//! tokens: concatenation into a unified 3D representation, cross-attention
//! with residual, and a two-layer projector, plus an analytic gradient check.
//!
//! Matrix fixtures use a little-endian byte layout:
//! `b"TMX1"`, `rows: u32`, `cols: u32`, then `rows * cols` `f64` values in
//! row-major order.

use std::collections::BTreeMap;
use std::ops::{Add, Div, Mul, Sub};
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;
use twofloat::TwoFloat;

pub const DEFAULT_D_K: usize = 64;
pub const TMX_MAGIC: &[u8; 4] = b"TMX1";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FusionError {
    #[error("{op}: shape {left:?} incompatible with {right:?}")]
    DimMismatch { op: &'static str, left: (usize, usize), right: (usize, usize) },
    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),
    #[error("bad fixture {path}: {message}")]
    BadFixture { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TokenMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl TokenMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, FusionError> {
        if rows == 0 || cols == 0 {
            return Err(FusionError::InvalidMatrix(format!("empty shape {rows}x{cols}")));
        }
        if data.len() != rows * cols {
            return Err(FusionError::InvalidMatrix(format!("{} values for shape {rows}x{cols}", data.len())));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(FusionError::InvalidMatrix("non-finite entry".into()));
        }
        Ok(TokenMatrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        TokenMatrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = TokenMatrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        TokenMatrix { rows, cols, data }
    }

    /// Entries uniform in `[-scale, scale)`.
    pub fn random(rows: usize, cols: usize, scale: f64, rng: &mut ChaCha8Rng) -> Self {
        TokenMatrix::from_fn(rows, cols, |_, _| rng.random_range(-scale..scale))
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> TokenMatrix {
        TokenMatrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn matmul(&self, other: &TokenMatrix) -> Result<TokenMatrix, FusionError> {
        if self.cols != other.rows {
            return Err(FusionError::DimMismatch { op: "matmul", left: self.shape(), right: other.shape() });
        }
        let n = other.cols;
        let mut out = vec![0.0; self.rows * n];
        out.par_chunks_mut(n).enumerate().for_each(|(i, orow)| {
            for (k, &a) in self.row(i).iter().enumerate() {
                if a != 0.0 {
                    for (o, &b) in orow.iter_mut().zip(other.row(k)) {
                        *o += a * b;
                    }
                }
            }
        });
        Ok(TokenMatrix { rows: self.rows, cols: n, data: out })
    }

    pub fn add(&self, other: &TokenMatrix) -> Result<TokenMatrix, FusionError> {
        if self.shape() != other.shape() {
            return Err(FusionError::DimMismatch { op: "add", left: self.shape(), right: other.shape() });
        }
        Ok(self.zip_map(other, |a, b| a + b))
    }

    fn zip_map(&self, other: &TokenMatrix, f: impl Fn(f64, f64) -> f64) -> TokenMatrix {
        TokenMatrix { rows: self.rows, cols: self.cols, data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect() }
    }

    fn map(&self, f: impl Fn(f64) -> f64) -> TokenMatrix {
        TokenMatrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&a| f(a)).collect() }
    }

    /// Adds `bias` (length `cols`) to every row.
    pub fn add_row(&self, bias: &[f64]) -> Result<TokenMatrix, FusionError> {
        if bias.len() != self.cols {
            return Err(FusionError::DimMismatch { op: "bias", left: self.shape(), right: (1, bias.len()) });
        }
        let mut out = self.clone();
        for row in out.data.chunks_mut(self.cols) {
            for (o, b) in row.iter_mut().zip(bias) {
                *o += b;
            }
        }
        Ok(out)
    }

    fn col_sums(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.cols];
        for row in self.data.chunks(self.cols) {
            for (a, b) in s.iter_mut().zip(row) {
                *a += b;
            }
        }
        s
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + 8 * self.data.len());
        out.extend_from_slice(TMX_MAGIC);
        out.extend_from_slice(&(self.rows as u32).to_le_bytes());
        out.extend_from_slice(&(self.cols as u32).to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<TokenMatrix, FusionError> {
        let bad = |m: String| FusionError::InvalidMatrix(m);
        if bytes.len() < 12 || &bytes[..4] != TMX_MAGIC {
            return Err(bad("missing TMX1 header".into()));
        }
        let rows = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
        let cols = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
        let body = &bytes[12..];
        if body.len() != rows * cols * 8 {
            return Err(bad(format!("expected {} body bytes for {rows}x{cols}, found {}", rows * cols * 8, body.len())));
        }
        let data = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        TokenMatrix::new(rows, cols, data)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<TokenMatrix, FusionError> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| FusionError::BadFixture { path: path.display().to_string(), message: e.to_string() })?;
        TokenMatrix::from_bytes(&bytes).map_err(|e| FusionError::BadFixture { path: path.display().to_string(), message: e.to_string() })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        std::fs::write(path, self.to_bytes())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    /// `x · σ(x)`.
    Silu,
    Identity,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Silu => x / (1.0 + (-x).exp()),
            Activation::Identity => x,
        }
    }

    fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Silu => {
                let s = 1.0 / (1.0 + (-x).exp());
                s * (1.0 + x * (1.0 - s))
            }
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Projector {
    pub w1: TokenMatrix,
    pub b1: Vec<f64>,
    pub w2: TokenMatrix,
    pub b2: Vec<f64>,
    pub activation: Activation,
}

impl Projector {
    pub fn identity(dim: usize) -> Projector {
        Projector { w1: TokenMatrix::identity(dim), b1: vec![0.0; dim], w2: TokenMatrix::identity(dim), b2: vec![0.0; dim], activation: Activation::Identity }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionWeights {
    /// `dim_v × d_k`.
    pub wq: TokenMatrix,
    /// `dim_3d × d_k`.
    pub wk: TokenMatrix,
    /// `dim_3d × dim_v`.
    pub wv: TokenMatrix,
    pub projector: Projector,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FusionDims {
    pub dim_v: usize,
    pub dim_3d: usize,
    pub d_k: usize,
    pub d_p1: usize,
    pub d_p2: usize,
}

impl FusionWeights {
    /// Uniform weights scaled by `1/√fan_in`, SiLU projector.
    pub fn random(d: FusionDims, rng: &mut ChaCha8Rng) -> FusionWeights {
        let s = |fan_in: usize| 1.0 / (fan_in as f64).sqrt();
        FusionWeights {
            wq: TokenMatrix::random(d.dim_v, d.d_k, s(d.dim_v), rng),
            wk: TokenMatrix::random(d.dim_3d, d.d_k, s(d.dim_3d), rng),
            wv: TokenMatrix::random(d.dim_3d, d.dim_v, s(d.dim_3d), rng),
            projector: Projector {
                w1: TokenMatrix::random(d.dim_v, d.d_p1, s(d.dim_v), rng),
                b1: (0..d.d_p1).map(|_| rng.random_range(-0.1..0.1)).collect(),
                w2: TokenMatrix::random(d.d_p1, d.d_p2, s(d.d_p1), rng),
                b2: (0..d.d_p2).map(|_| rng.random_range(-0.1..0.1)).collect(),
                activation: Activation::Silu,
            },
        }
    }

    pub fn d_k(&self) -> usize {
        self.wq.cols()
    }

    pub fn validate(&self) -> Result<(), FusionError> {
        let mm = |op, l: &TokenMatrix, r: (usize, usize)| Err(FusionError::DimMismatch { op, left: l.shape(), right: r });
        if self.wk.cols() != self.wq.cols() {
            return mm("W_K", &self.wk, self.wq.shape());
        }
        if self.wv.rows() != self.wk.rows() || self.wv.cols() != self.wq.rows() {
            return mm("W_V", &self.wv, (self.wk.rows(), self.wq.rows()));
        }
        let p = &self.projector;
        if p.w1.rows() != self.wq.rows() || p.b1.len() != p.w1.cols() {
            return mm("projector layer 1", &p.w1, (self.wq.rows(), p.b1.len()));
        }
        if p.w2.rows() != p.w1.cols() || p.b2.len() != p.w2.cols() {
            return mm("projector layer 2", &p.w2, (p.w1.cols(), p.b2.len()));
        }
        Ok(())
    }
}

/// Geometry tokens followed by the camera-view token.
pub fn build_unified_3d(f: &TokenMatrix, z: &TokenMatrix) -> Result<TokenMatrix, FusionError> {
    if f.cols() != z.cols() {
        return Err(FusionError::DimMismatch { op: "concat", left: f.shape(), right: z.shape() });
    }
    let mut data = f.data.clone();
    data.extend_from_slice(&z.data);
    Ok(TokenMatrix { rows: f.rows() + z.rows(), cols: f.cols(), data })
}

fn softmax_rows(s: &mut TokenMatrix) {
    for row in s.data.chunks_mut(s.cols) {
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Attention {
    /// Row-stochastic `n_v × n_3d` weights.
    pub weights: TokenMatrix,
    pub output: TokenMatrix,
    queries: TokenMatrix,
    keys: TokenMatrix,
    values: TokenMatrix,
}

/// `softmax((H_v W_Q)(Z W_K)ᵀ / √d_k) (Z W_V)`, softmax over each query row.
pub fn cross_attention(hv: &TokenMatrix, z3d: &TokenMatrix, w: &FusionWeights) -> Result<Attention, FusionError> {
    w.validate()?;
    if hv.cols() != w.wq.rows() {
        return Err(FusionError::DimMismatch { op: "H_v W_Q", left: hv.shape(), right: w.wq.shape() });
    }
    if z3d.cols() != w.wk.rows() {
        return Err(FusionError::DimMismatch { op: "Z W_K", left: z3d.shape(), right: w.wk.shape() });
    }
    let queries = hv.matmul(&w.wq)?;
    let keys = z3d.matmul(&w.wk)?;
    let values = z3d.matmul(&w.wv)?;
    let scale = 1.0 / (w.d_k() as f64).sqrt();
    let mut weights = queries.matmul(&keys.transpose())?.map(|v| v * scale);
    softmax_rows(&mut weights);
    let output = weights.matmul(&values)?;
    Ok(Attention { weights, output, queries, keys, values })
}

struct Forward {
    unified: TokenMatrix,
    attention: Attention,
    residual: TokenMatrix,
    pre_act: TokenMatrix,
    hidden: TokenMatrix,
    output: TokenMatrix,
}

fn forward(hv: &TokenMatrix, unified: &TokenMatrix, w: &FusionWeights) -> Result<Forward, FusionError> {
    let unified = unified.clone();
    let attention = cross_attention(hv, &unified, w)?;
    let residual = hv.add(&attention.output)?;
    let p = &w.projector;
    let pre_act = residual.matmul(&p.w1)?.add_row(&p.b1)?;
    let hidden = pre_act.map(|x| p.activation.apply(x));
    let output = hidden.matmul(&p.w2)?.add_row(&p.b2)?;
    Ok(Forward { unified, attention, residual, pre_act, hidden, output })
}

/// `H_v′ = H_v + attention`, then `W_2 φ(H_v′ W_1 + b_1) + b_2`.
pub fn fuse_forward(hv: &TokenMatrix, f: &TokenMatrix, z: &TokenMatrix, w: &FusionWeights) -> Result<TokenMatrix, FusionError> {
    fuse_unified(hv, &build_unified_3d(f, z)?, w)
}

/// [`fuse_forward`] over an already unified 3D token matrix.
pub fn fuse_unified(hv: &TokenMatrix, z3d: &TokenMatrix, w: &FusionWeights) -> Result<TokenMatrix, FusionError> {
    Ok(forward(hv, z3d, w)?.output)
}

/// Gradients of `sum(fuse_unified(..))` with respect to every weight.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightGrads {
    pub wq: TokenMatrix,
    pub wk: TokenMatrix,
    pub wv: TokenMatrix,
    pub w1: TokenMatrix,
    pub b1: Vec<f64>,
    pub w2: TokenMatrix,
    pub b2: Vec<f64>,
}

pub fn loss_gradients(hv: &TokenMatrix, z3d: &TokenMatrix, w: &FusionWeights) -> Result<WeightGrads, FusionError> {
    let fw = forward(hv, z3d, w)?;
    let p = &w.projector;
    let d_out = TokenMatrix { rows: fw.output.rows, cols: fw.output.cols, data: vec![1.0; fw.output.data.len()] };

    let b2 = d_out.col_sums();
    let w2 = fw.hidden.transpose().matmul(&d_out)?;
    let d_hidden = d_out.matmul(&p.w2.transpose())?;
    let d_pre = d_hidden.zip_map(&fw.pre_act, |g, x| g * p.activation.derivative(x));
    let b1 = d_pre.col_sums();
    let w1 = fw.residual.transpose().matmul(&d_pre)?;
    let d_attn_out = d_pre.matmul(&p.w1.transpose())?;

    let a = &fw.attention.weights;
    let d_a = d_attn_out.matmul(&fw.attention.values.transpose())?;
    let d_values = a.transpose().matmul(&d_attn_out)?;
    let wv = fw.unified.transpose().matmul(&d_values)?;

    let mut d_s = TokenMatrix::zeros(a.rows, a.cols);
    for i in 0..a.rows {
        let dot: f64 = a.row(i).iter().zip(d_a.row(i)).map(|(x, y)| x * y).sum();
        for j in 0..a.cols {
            d_s.set(i, j, a.get(i, j) * (d_a.get(i, j) - dot));
        }
    }
    let scale = 1.0 / (w.d_k() as f64).sqrt();
    let d_q = d_s.matmul(&fw.attention.keys)?.map(|v| v * scale);
    let d_k = d_s.transpose().matmul(&fw.attention.queries)?.map(|v| v * scale);
    let wq = hv.transpose().matmul(&d_q)?;
    let wk = fw.unified.transpose().matmul(&d_k)?;
    Ok(WeightGrads { wq, wk, wv, w1, b1, w2, b2 })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheck {
    pub step: f64,
    pub max_rel_error: f64,
    pub per_parameter: BTreeMap<&'static str, f64>,
}

/// Denominator floor of the relative error, so entries whose true gradient
/// vanishes are compared absolutely.
pub const GRAD_REL_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRAD_REL_FLOOR)
}

/// Arithmetic for the finite-difference side of [`grad_check`].
trait Real: Copy + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Div<Output = Self> + From<f64> {
    fn exp(self) -> Self;
    fn approx(self) -> f64;
}

impl Real for f64 {
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn approx(self) -> f64 {
        self
    }
}

impl Real for TwoFloat {
    fn exp(self) -> Self {
        TwoFloat::exp(self)
    }
    fn approx(self) -> f64 {
        self.hi() + self.lo()
    }
}

const PARAM_NAMES: [&str; 7] = ["W_Q", "W_K", "W_V", "W_1", "b_1", "W_2", "b_2"];

fn param_slices(w: &FusionWeights) -> [&[f64]; 7] {
    let p = &w.projector;
    [&w.wq.data, &w.wk.data, &w.wv.data, &p.w1.data, &p.b1, &p.w2.data, &p.b2]
}

/// `sum(fuse_unified(..))` by direct loops in `T`, with weight `idx` of
/// parameter `param` shifted by `delta` (the shift is exact in `T`).
fn loss_with<T: Real>(hv: &TokenMatrix, z3d: &TokenMatrix, w: &FusionWeights, bump: Option<(usize, usize, f64)>) -> T {
    let slices = param_slices(w);
    let at = |param: usize, idx: usize| -> T {
        let v = T::from(slices[param][idx]);
        match bump {
            Some((p, i, d)) if p == param && i == idx => v + T::from(d),
            _ => v,
        }
    };
    let zero = T::from(0.0);
    let (n_v, dim_v, n_3d, dim_3d, d_k) = (hv.rows, hv.cols, z3d.rows, z3d.cols, w.d_k());
    let (d_p1, d_p2) = (w.projector.w1.cols, w.projector.w2.cols);
    let dot = |n: usize, mut f: Box<dyn FnMut(usize) -> T + '_>| (0..n).fold(zero, |acc, k| acc + f(k));

    let keys: Vec<Vec<T>> =
        (0..n_3d).map(|j| (0..d_k).map(|c| dot(dim_3d, Box::new(|a| T::from(z3d.get(j, a)) * at(1, a * d_k + c)))).collect()).collect();
    let values: Vec<Vec<T>> =
        (0..n_3d).map(|j| (0..dim_v).map(|b| dot(dim_3d, Box::new(|a| T::from(z3d.get(j, a)) * at(2, a * dim_v + b)))).collect()).collect();
    let scale = T::from(1.0 / (d_k as f64).sqrt());
    let mut loss = zero;
    for i in 0..n_v {
        let q: Vec<T> = (0..d_k).map(|c| dot(dim_v, Box::new(|a| T::from(hv.get(i, a)) * at(0, a * d_k + c)))).collect();
        let logits: Vec<T> = keys.iter().map(|k| dot(d_k, Box::new(|c| q[c] * k[c])) * scale).collect();
        let m = logits.iter().map(|l| l.approx()).fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<T> = logits.iter().map(|&l| (l - T::from(m)).exp()).collect();
        let total = e.iter().fold(zero, |a, &b| a + b);
        let resid: Vec<T> =
            (0..dim_v).map(|b| T::from(hv.get(i, b)) + dot(n_3d, Box::new(|j| e[j] / total * values[j][b]))).collect();
        let hidden: Vec<T> = (0..d_p1)
            .map(|c| {
                let x = dot(dim_v, Box::new(|b| resid[b] * at(3, b * d_p1 + c))) + at(4, c);
                match w.projector.activation {
                    Activation::Silu => x / (T::from(1.0) + (T::from(0.0) - x).exp()),
                    Activation::Identity => x,
                }
            })
            .collect();
        for o in 0..d_p2 {
            loss = loss + dot(d_p1, Box::new(|c| hidden[c] * at(5, c * d_p2 + o))) + at(6, o);
        }
    }
    loss
}

/// Compares [`loss_gradients`] with central differences of step `step` for
/// every weight entry. Differences are evaluated in double-double arithmetic
/// so the comparison is limited by truncation, not cancellation.
pub fn grad_check(w: &FusionWeights, hv: &TokenMatrix, z3d: &TokenMatrix, step: f64) -> Result<GradCheck, FusionError> {
    let grads = loss_gradients(hv, z3d, w)?;
    let analytic: [&[f64]; 7] = [&grads.wq.data, &grads.wk.data, &grads.wv.data, &grads.w1.data, &grads.b1, &grads.w2.data, &grads.b2];
    let mut per_parameter = BTreeMap::new();
    for (param, name) in PARAM_NAMES.into_iter().enumerate() {
        let worst = analytic[param]
            .par_iter()
            .enumerate()
            .map(|(idx, &g)| {
                let up: TwoFloat = loss_with(hv, z3d, w, Some((param, idx, step)));
                let down: TwoFloat = loss_with(hv, z3d, w, Some((param, idx, -step)));
                relative_error(g, ((up - down) / TwoFloat::from(2.0 * step)).approx())
            })
            .reduce(|| 0.0, f64::max);
        per_parameter.insert(name, worst);
    }
    let max_rel_error = per_parameter.values().copied().fold(0.0, f64::max);
    Ok(GradCheck { step, max_rel_error, per_parameter })
}

/// A desk-scale instance: `n_v` visual tokens, `n_f` geometry tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionInstance {
    pub hv: TokenMatrix,
    pub f: TokenMatrix,
    pub z: TokenMatrix,
    pub weights: FusionWeights,
}

impl FusionInstance {
    pub fn random(n_v: usize, n_f: usize, d: FusionDims, rng: &mut ChaCha8Rng) -> FusionInstance {
        FusionInstance {
            hv: TokenMatrix::random(n_v, d.dim_v, 1.0, rng),
            f: TokenMatrix::random(n_f, d.dim_3d, 1.0, rng),
            z: TokenMatrix::random(1, d.dim_3d, 1.0, rng),
            weights: FusionWeights::random(d, rng),
        }
    }

    const FILES: [&'static str; 10] = ["hv", "f", "z", "wq", "wk", "wv", "w1", "b1", "w2", "b2"];

    /// Reads `hv.tmx`, `f.tmx`, `z.tmx`, `wq.tmx`, `wk.tmx`, `wv.tmx`,
    /// `w1.tmx`, `b1.tmx`, `w2.tmx`, `b2.tmx` (biases as `1 × n`) with a
    /// SiLU projector.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<FusionInstance, FusionError> {
        let dir = dir.as_ref();
        let mut m: BTreeMap<&str, TokenMatrix> = BTreeMap::new();
        for name in Self::FILES {
            m.insert(name, TokenMatrix::load(dir.join(format!("{name}.tmx")))?);
        }
        let mut take = |k: &str| m.remove(k).expect("loaded above");
        let inst = FusionInstance {
            hv: take("hv"),
            f: take("f"),
            z: take("z"),
            weights: FusionWeights {
                wq: take("wq"),
                wk: take("wk"),
                wv: take("wv"),
                projector: Projector { w1: take("w1"), b1: take("b1").data, w2: take("w2"), b2: take("b2").data, activation: Activation::Silu },
            },
        };
        inst.weights.validate()?;
        Ok(inst)
    }

    pub fn save_dir(&self, dir: impl AsRef<Path>) -> std::io::Result<()> {
        let dir = dir.as_ref();
        let p = &self.weights.projector;
        let row = |v: &[f64]| TokenMatrix { rows: 1, cols: v.len(), data: v.to_vec() };
        let mats = [&self.hv, &self.f, &self.z, &self.weights.wq, &self.weights.wk, &self.weights.wv, &p.w1, &row(&p.b1), &p.w2, &row(&p.b2)];
        for (name, m) in Self::FILES.iter().zip(mats) {
            m.save(dir.join(format!("{name}.tmx")))?;
        }
        Ok(())
    }
}
