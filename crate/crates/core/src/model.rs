//! Embedding parameters and the skip-gram negative-sampling update.
//!
//! Classic skip-gram predicts every context token through one shared output
//! matrix. The ordered (structured) variant keeps one output matrix per
//! window offset, so `-1` and `+1` neighbours are predicted by different
//! parameters and the model can tell which side of the center a token was on.

use std::fmt;
use std::ops::{Add, Mul};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::vocab::TokenId;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("offset {offset} outside window {window} (zero is not an offset)")]
    Offset { offset: isize, window: usize },
    #[error("token id {0} outside the vocabulary")]
    Token(TokenId),
    #[error("numerical divergence: center {center}, context {context}, target {target}")]
    Divergence {
        center: TokenId,
        context: TokenId,
        target: TokenId,
    },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum Mode {
    /// One output matrix shared by all offsets.
    #[default]
    Classic,
    /// One output matrix per window offset.
    Ordered,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Classic => "classic",
            Mode::Ordered => "ordered",
        })
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "classic" => Ok(Mode::Classic),
            "ordered" => Ok(Mode::Ordered),
            other => Err(format!(
                "unknown mode '{other}', expected classic or ordered"
            )),
        }
    }
}

/// Storage scalar. Training uses `f32`; `f64` models exist for gradient
/// checking.
pub trait Real:
    Copy
    + PartialEq
    + fmt::Debug
    + Send
    + Sync
    + Into<f64>
    + Add<Output = Self>
    + Mul<Output = Self>
    + 'static
{
    const ZERO: Self;
    fn from_f64(x: f64) -> Self;
}

impl Real for f32 {
    const ZERO: Self = 0.0;

    #[inline]
    fn from_f64(x: f64) -> Self {
        x as f32
    }
}

impl Real for f64 {
    const ZERO: Self = 0.0;

    #[inline]
    fn from_f64(x: f64) -> Self {
        x
    }
}

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<F> {
    rows: usize,
    cols: usize,
    data: Vec<F>,
}

impl<F: Real> Matrix<F> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![F::ZERO; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[F] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [F] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[F] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [F] {
        &mut self.data
    }
}

/// Input embeddings plus the prediction-side output matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingModel<F = f32> {
    mode: Mode,
    window: usize,
    input: Matrix<F>,
    outputs: Vec<Matrix<F>>,
}

/// Reusable buffers for [`EmbeddingModel::sgns_step_with`].
#[derive(Clone, Debug)]
pub struct StepScratch<F = f32> {
    delta: Vec<F>,
    coeffs: Vec<F>,
}

impl<F> Default for StepScratch<F> {
    fn default() -> Self {
        StepScratch {
            delta: Vec::new(),
            coeffs: Vec::new(),
        }
    }
}

impl<F: Real> EmbeddingModel<F> {
    /// All-zero model. `shared_output` ties every ordered offset to a single
    /// output matrix; it has no effect in classic mode.
    pub fn zeros(
        vocab_size: usize,
        dimension: usize,
        mode: Mode,
        window: usize,
        shared_output: bool,
    ) -> Self {
        let n_outputs = match mode {
            Mode::Ordered if !shared_output => 2 * window,
            _ => 1,
        };
        EmbeddingModel {
            mode,
            window,
            input: Matrix::zeros(vocab_size, dimension),
            outputs: (0..n_outputs)
                .map(|_| Matrix::zeros(vocab_size, dimension))
                .collect(),
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn dimension(&self) -> usize {
        self.input.cols()
    }

    pub fn vocab_size(&self) -> usize {
        self.input.rows()
    }

    pub fn input(&self) -> &Matrix<F> {
        &self.input
    }

    pub fn input_mut(&mut self) -> &mut Matrix<F> {
        &mut self.input
    }

    pub fn outputs(&self) -> &[Matrix<F>] {
        &self.outputs
    }

    pub fn outputs_mut(&mut self) -> &mut [Matrix<F>] {
        &mut self.outputs
    }

    pub fn embedding(&self, token: TokenId) -> &[F] {
        self.input.row(token as usize)
    }

    /// Index of the output matrix that predicts context at `offset`.
    ///
    /// Ordered layout: `-window..=-1` map to `0..window`, `1..=window` map to
    /// `window..2*window`.
    pub fn output_index(&self, offset: isize) -> Result<usize, ModelError> {
        let w = self.window as isize;
        if offset == 0 || offset < -w || offset > w {
            return Err(ModelError::Offset {
                offset,
                window: self.window,
            });
        }
        if self.outputs.len() == 1 {
            return Ok(0);
        }
        Ok(if offset < 0 {
            (offset + w) as usize
        } else {
            (offset + w - 1) as usize
        })
    }

    pub fn is_finite(&self) -> bool {
        std::iter::once(&self.input)
            .chain(&self.outputs)
            .all(|m| m.as_slice().iter().all(|&x| x.into().is_finite()))
    }

    /// One skip-gram negative-sampling update; see [`Self::sgns_step_with`].
    pub fn sgns_step(
        &mut self,
        center: TokenId,
        context: TokenId,
        offset: isize,
        negatives: &[TokenId],
        lr: f64,
    ) -> Result<f64, ModelError> {
        self.sgns_step_with(
            center,
            context,
            offset,
            negatives,
            lr,
            &mut StepScratch::default(),
        )
    }

    /// One skip-gram negative-sampling update.
    ///
    /// With `v` the center's input row and `u` the context's row in the output
    /// matrix selected by `offset`, the loss is
    /// `-ln s(u.v) - sum_n ln s(-u_n.v)`. Every touched row moves by `-lr`
    /// times its exact gradient, all evaluated at the pre-update parameters.
    /// Returns the pre-update loss.
    pub fn sgns_step_with(
        &mut self,
        center: TokenId,
        context: TokenId,
        offset: isize,
        negatives: &[TokenId],
        lr: f64,
        scratch: &mut StepScratch<F>,
    ) -> Result<f64, ModelError> {
        let k = self.output_index(offset)?;
        let vocab = self.input.rows();
        for &t in std::iter::once(&center)
            .chain(std::iter::once(&context))
            .chain(negatives)
        {
            if t as usize >= vocab {
                return Err(ModelError::Token(t));
            }
        }

        let v = self.input.row_mut(center as usize);
        let out = &mut self.outputs[k];

        scratch.delta.clear();
        scratch.delta.resize(v.len(), F::ZERO);
        scratch.coeffs.clear();

        let targets = std::iter::once((context, true)).chain(negatives.iter().map(|&n| (n, false)));
        let mut loss = 0.0;
        for (target, positive) in targets.clone() {
            let u = out.row(target as usize);
            let score = dot(v, u);
            if !score.is_finite() {
                return Err(ModelError::Divergence {
                    center,
                    context,
                    target,
                });
            }
            // Positive pairs pull the score up, negatives push it down.
            let signed = if positive { score } else { -score };
            let (s, nll) = sigmoid_nll(signed);
            loss += nll;
            let g = if positive {
                lr * (1.0 - s)
            } else {
                -lr * (1.0 - s)
            };
            let g = F::from_f64(g);
            scratch.coeffs.push(g);
            for (d, &x) in scratch.delta.iter_mut().zip(u) {
                *d = *d + g * x;
            }
        }

        for ((target, _), &g) in targets.zip(&scratch.coeffs) {
            for (x, &c) in out.row_mut(target as usize).iter_mut().zip(v.iter()) {
                *x = *x + g * c;
            }
        }
        for (x, &d) in v.iter_mut().zip(&scratch.delta) {
            *x = *x + d;
        }

        if !loss.is_finite() {
            return Err(ModelError::Divergence {
                center,
                context,
                target: context,
            });
        }
        Ok(loss)
    }
}

impl EmbeddingModel<f32> {
    /// Input rows uniform in `[-0.5/D, 0.5/D]`, output matrices zero.
    pub fn random(
        vocab_size: usize,
        dimension: usize,
        mode: Mode,
        window: usize,
        shared_output: bool,
        seed: u64,
    ) -> Self {
        let mut model = Self::zeros(vocab_size, dimension, mode, window, shared_output);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = dimension as f32;
        for x in model.input.as_mut_slice() {
            *x = (rng.random::<f32>() - 0.5) / scale;
        }
        model
    }
}

/// Dot product accumulated in f64 over eight independent lanes.
#[inline]
fn dot<F: Real>(a: &[F], b: &[F]) -> f64 {
    let mut acc = [0.0f64; 8];
    let mut ca = a.chunks_exact(8);
    let mut cb = b.chunks_exact(8);
    for (x, y) in (&mut ca).zip(&mut cb) {
        let x: [F; 8] = x.try_into().unwrap();
        let y: [F; 8] = y.try_into().unwrap();
        for i in 0..8 {
            acc[i] += x[i].into() * y[i].into();
        }
    }
    let mut tail = 0.0;
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        tail += (*x).into() * (*y).into();
    }
    let [a0, a1, a2, a3, a4, a5, a6, a7] = acc;
    ((a0 + a4) + (a1 + a5)) + ((a2 + a6) + (a3 + a7)) + tail
}

/// `(s(x), -ln s(x))` from a single exponential.
#[inline]
fn sigmoid_nll(x: f64) -> (f64, f64) {
    let e = (-x.abs()).exp();
    let nll = (-x).max(0.0) + e.ln_1p();
    let s = if x >= 0.0 {
        1.0 / (1.0 + e)
    } else {
        e / (1.0 + e)
    };
    (s, nll)
}

#[cfg(test)]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)`, which is `-ln s(-x)`.
#[cfg(test)]
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}
