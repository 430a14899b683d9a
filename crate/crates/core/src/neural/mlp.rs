use rand::Rng;

use super::{NeuralError, Result};
use crate::linalg::{affine_rows, affine_single, Matrix};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Linear,
}

impl Activation {
    pub fn tag(self) -> u8 {
        match self {
            Self::Tanh => 1,
            Self::Linear => 0,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            1 => Some(Self::Tanh),
            0 => Some(Self::Linear),
            _ => None,
        }
    }

    #[inline]
    fn apply<T: Real>(self, v: &mut [T]) {
        if self == Self::Tanh {
            for x in v {
                *x = x.tanh();
            }
        }
    }
}

/// Dense network: `tanh` hidden layers, linear output.
///
/// All parameters live in one flat vector; layer `l` stores its weights
/// input-major (`widths[l] × widths[l+1]`) followed by its bias.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp<T> {
    widths: Vec<usize>,
    activations: Vec<Activation>,
    params: Vec<T>,
}

fn check_widths(widths: &[usize]) -> Result<()> {
    if widths.len() < 2 || widths.iter().any(|&w| w == 0) {
        return Err(NeuralError::Shape(format!("layer widths {widths:?} must have >= 2 entries, all positive")));
    }
    Ok(())
}

fn param_count(widths: &[usize]) -> usize {
    widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl<T: Real> Mlp<T> {
    /// All-zero network with the default activations.
    pub fn zeros(widths: &[usize]) -> Result<Self> {
        check_widths(widths)?;
        let layers = widths.len() - 1;
        let activations = (0..layers).map(|l| if l + 1 == layers { Activation::Linear } else { Activation::Tanh }).collect();
        Ok(Self { widths: widths.to_vec(), activations, params: vec![T::zero(); param_count(widths)] })
    }

    /// Xavier-uniform weights `U(−a, a)`, `a = sqrt(6 / (fan_in + fan_out))`, zero biases.
    pub fn xavier<R: Rng + ?Sized>(widths: &[usize], rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(widths)?;
        for l in 0..net.layer_count() {
            let (n_in, n_out) = (widths[l], widths[l + 1]);
            let a = (6.0 / (n_in + n_out) as f64).sqrt();
            let (w, _) = net.layer_mut(l);
            for x in w {
                *x = T::of(rng.gen_range(-a..a));
            }
        }
        Ok(net)
    }

    pub fn from_parts(widths: Vec<usize>, activations: Vec<Activation>, params: Vec<T>) -> Result<Self> {
        check_widths(&widths)?;
        if activations.len() != widths.len() - 1 {
            return Err(NeuralError::Shape(format!("{} activations for {} layers", activations.len(), widths.len() - 1)));
        }
        if params.len() != param_count(&widths) {
            return Err(NeuralError::Shape(format!("{} parameters, widths {widths:?} need {}", params.len(), param_count(&widths))));
        }
        Ok(Self { widths, activations, params })
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn layer_count(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    fn layer_offset(&self, l: usize) -> usize {
        param_count(&self.widths[..=l])
    }

    /// `(weights, bias)` of layer `l`.
    pub fn layer(&self, l: usize) -> (&[T], &[T]) {
        let off = self.layer_offset(l);
        let (n_in, n_out) = (self.widths[l], self.widths[l + 1]);
        let (w, rest) = self.params[off..].split_at(n_in * n_out);
        (w, &rest[..n_out])
    }

    pub fn layer_mut(&mut self, l: usize) -> (&mut [T], &mut [T]) {
        let off = self.layer_offset(l);
        let (n_in, n_out) = (self.widths[l], self.widths[l + 1]);
        let (w, rest) = self.params[off..].split_at_mut(n_in * n_out);
        (w, &mut rest[..n_out])
    }

    /// Zeroes the last layer so the network outputs exactly zero.
    pub fn zero_output_layer(&mut self) {
        let last = self.layer_count() - 1;
        let (w, b) = self.layer_mut(last);
        w.fill(T::zero());
        b.fill(T::zero());
    }

    pub fn cast<U: Real>(&self) -> Mlp<U> {
        Mlp { widths: self.widths.clone(), activations: self.activations.clone(), params: crate::scalar::cast_slice(&self.params) }
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|x| x.is_finite())
    }

    fn check_input(&self, x: &Matrix<T>) -> Result<()> {
        if x.cols() != self.input_width() {
            return Err(NeuralError::WidthMismatch { expected: self.input_width(), got: x.cols() });
        }
        if !x.is_finite() {
            return Err(NeuralError::NonFiniteInput);
        }
        Ok(())
    }

    /// Batched forward pass over the rows of `x`.
    pub fn forward(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        self.check_input(x)?;
        let mut a = x.clone();
        for l in 0..self.layer_count() {
            let (w, b) = self.layer(l);
            let mut z = Matrix::zeros(a.rows(), b.len());
            affine_rows(&a, w, b, &mut z);
            self.activations[l].apply(z.as_mut_slice());
            if !z.is_finite() {
                return Err(NeuralError::NonFinite { layer: l });
            }
            a = z;
        }
        Ok(a)
    }

    /// Single-row forward pass, bitwise equal to the matching row of [`Mlp::forward`].
    pub fn forward_row(&self, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.input_width() {
            return Err(NeuralError::WidthMismatch { expected: self.input_width(), got: x.len() });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(NeuralError::NonFiniteInput);
        }
        let mut a = x.to_vec();
        for l in 0..self.layer_count() {
            let (w, b) = self.layer(l);
            let mut z = vec![T::zero(); b.len()];
            affine_single(&a, w, b, &mut z);
            self.activations[l].apply(&mut z);
            if z.iter().any(|v| !v.is_finite()) {
                return Err(NeuralError::NonFinite { layer: l });
            }
            a = z;
        }
        Ok(a)
    }

    /// Mean squared error over batch and output dimensions.
    pub fn loss(&self, x: &Matrix<T>, targets: &Matrix<T>) -> Result<f64> {
        let y = self.forward(x)?;
        check_targets(&y, targets)?;
        Ok(mse(&y, targets))
    }

    /// MSE loss and its gradient with respect to every parameter.
    pub fn backward(&self, x: &Matrix<T>, targets: &Matrix<T>) -> Result<(f64, Vec<T>)> {
        self.check_input(x)?;
        let layers = self.layer_count();
        let mut acts = Vec::with_capacity(layers + 1);
        acts.push(x.clone());
        for l in 0..layers {
            let (w, b) = self.layer(l);
            let mut z = Matrix::zeros(x.rows(), b.len());
            affine_rows(&acts[l], w, b, &mut z);
            self.activations[l].apply(z.as_mut_slice());
            if !z.is_finite() {
                return Err(NeuralError::NonFinite { layer: l });
            }
            acts.push(z);
        }
        let y = &acts[layers];
        check_targets(y, targets)?;
        let loss = mse(y, targets);

        let rows = x.rows();
        let scale = T::of(2.0 / (rows * self.output_width()) as f64);
        let mut grad = vec![T::zero(); self.params.len()];
        let mut dz = Matrix::zeros(rows, self.output_width());
        for ((d, &yv), &tv) in dz.as_mut_slice().iter_mut().zip(y.as_slice()).zip(targets.as_slice()) {
            *d = scale * (yv - tv);
        }
        for l in (0..layers).rev() {
            if self.activations[l] == Activation::Tanh {
                for (d, &a) in dz.as_mut_slice().iter_mut().zip(acts[l + 1].as_slice()) {
                    *d *= T::one() - a * a;
                }
            }
            if !dz.is_finite() {
                return Err(NeuralError::NonFinite { layer: l });
            }
            let (n_in, n_out) = (self.widths[l], self.widths[l + 1]);
            let off = self.layer_offset(l);
            let (gw, gb) = grad[off..off + n_in * n_out + n_out].split_at_mut(n_in * n_out);
            let a_prev = &acts[l];
            for k in 0..n_in {
                let gk = &mut gw[k * n_out..(k + 1) * n_out];
                for r in 0..rows {
                    let av = a_prev[(r, k)];
                    let dzr = dz.row(r);
                    for (g, &d) in gk.iter_mut().zip(dzr) {
                        *g += av * d;
                    }
                }
            }
            for r in 0..rows {
                for (g, &d) in gb.iter_mut().zip(dz.row(r)) {
                    *g += d;
                }
            }
            if l > 0 {
                let (w, _) = self.layer(l);
                let mut da = Matrix::zeros(rows, n_in);
                for r in 0..rows {
                    let dzr = dz.row(r);
                    let dar = da.row_mut(r);
                    for k in 0..n_in {
                        dar[k] = lane_dot(dzr, &w[k * n_out..(k + 1) * n_out]);
                    }
                }
                dz = da;
            }
        }
        Ok((loss, grad))
    }
}

fn check_targets<T: Real>(y: &Matrix<T>, t: &Matrix<T>) -> Result<()> {
    if (y.rows(), y.cols()) != (t.rows(), t.cols()) {
        return Err(NeuralError::Shape(format!("targets {}×{} for outputs {}×{}", t.rows(), t.cols(), y.rows(), y.cols())));
    }
    Ok(())
}

/// Fixed-order MSE accumulated in `f64`.
pub(crate) fn mse<T: Real>(y: &Matrix<T>, t: &Matrix<T>) -> f64 {
    let n = y.as_slice().len();
    if n == 0 {
        return 0.0;
    }
    let mut acc = 0.0f64;
    for (&a, &b) in y.as_slice().iter().zip(t.as_slice()) {
        let d = (a - b).as_f64();
        acc += d * d;
    }
    acc / n as f64
}

/// Dot product with eight independent accumulators (fixed order, vectorizes).
#[inline]
fn lane_dot<T: Real>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let chunks = a.len() / 8;
    for c in 0..chunks {
        let (ac, bc) = (&a[c * 8..c * 8 + 8], &b[c * 8..c * 8 + 8]);
        for i in 0..8 {
            acc[i] += ac[i] * bc[i];
        }
    }
    let mut tail = T::zero();
    for i in chunks * 8..a.len() {
        tail += a[i] * b[i];
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail
}
