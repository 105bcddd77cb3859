//! Dense rectifier network with a linear output layer.

use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `outputs x inputs`.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Layer {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            biases: vec![0.0; outputs],
        }
    }

    #[inline]
    fn row(&self, j: usize) -> &[f64] {
        &self.weights[j * self.inputs..(j + 1) * self.inputs]
    }

    #[inline]
    fn unit(&self, j: usize, x: &[f64]) -> f64 {
        dot(self.row(j), x) + self.biases[j]
    }

    fn affine_into(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend((0..self.outputs).map(|j| self.unit(j, x)));
    }
}

/// Four-lane dot product; fixed summation order keeps results reproducible.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Layer>,
}

/// Per-parameter gradients laid out like [`Mlp::layers`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            weights: net.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            biases: net.layers.iter().map(|l| vec![0.0; l.biases.len()]).collect(),
        }
    }

    fn clear(&mut self) {
        self.weights.iter_mut().chain(self.biases.iter_mut()).for_each(|v| v.fill(0.0));
    }
}

impl Mlp {
    /// All-zero network with the given layer sizes (input first).
    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::InvalidScenario(format!("bad layer sizes {sizes:?}")));
        }
        Ok(Self {
            layers: sizes.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect(),
        })
    }

    /// Fan-in scaled uniform initialisation, `U(-1/sqrt(n), 1/sqrt(n))`.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(sizes)?;
        for l in &mut net.layers {
            let bound = 1.0 / (l.inputs as f64).sqrt();
            for w in l.weights.iter_mut().chain(l.biases.iter_mut()) {
                *w = rng.random_range(-bound..bound);
            }
        }
        Ok(net)
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.layers[0].inputs];
        s.extend(self.layers.iter().map(|l| l.outputs));
        s
    }

    pub fn input_size(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_size(&self) -> usize {
        self.layers.last().map_or(0, |l| l.outputs)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.biases).all(|v| v.is_finite()))
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_size() {
            return Err(Error::DimensionMismatch {
                expected: self.input_size(),
                got: x.len(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut trace = Trace::default();
        self.hidden_trace(x, &mut trace);
        let last = self.layers.last().unwrap();
        let mut out = Vec::with_capacity(last.outputs);
        last.affine_into(trace.top(), &mut out);
        Ok(out)
    }

    /// Runs the hidden stack, recording every post-activation vector.
    fn hidden_trace(&self, x: &[f64], trace: &mut Trace) {
        trace.acts.resize_with(self.layers.len(), Vec::new);
        trace.acts[0].clear();
        trace.acts[0].extend_from_slice(x);
        for (i, l) in self.layers[..self.layers.len() - 1].iter().enumerate() {
            let (done, rest) = trace.acts.split_at_mut(i + 1);
            l.affine_into(&done[i], &mut rest[0]);
            rest[0].iter_mut().for_each(|v| *v = v.max(0.0));
        }
    }

    /// Largest output value, without materialising the output vector.
    pub(crate) fn max_output(&self, x: &[f64], trace: &mut Trace) -> f64 {
        self.hidden_trace(x, trace);
        let last = self.layers.last().unwrap();
        let h = trace.top();
        (0..last.outputs)
            .map(|j| last.unit(j, h))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Mean squared error between `Q(s_i, a_i)` and `targets[i]`, and its
    /// gradient with respect to every parameter. Only the taken action's
    /// output entry carries error.
    pub fn taken_action_loss_and_grad(
        &self,
        inputs: &[&[f64]],
        actions: &[usize],
        targets: &[f64],
        grads: &mut Gradients,
    ) -> Result<f64> {
        let n = inputs.len();
        if actions.len() != n || targets.len() != n || n == 0 {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: actions.len().min(targets.len()),
            });
        }
        grads.clear();
        let out_layer = self.layers.len() - 1;
        let mut trace = Trace::default();
        let mut delta: Vec<f64> = Vec::new();
        let mut prev: Vec<f64> = Vec::new();
        let mut loss = 0.0;
        for ((x, &a), &y) in inputs.iter().zip(actions).zip(targets) {
            self.check_input(x)?;
            if a >= self.output_size() {
                return Err(Error::DimensionMismatch {
                    expected: self.output_size(),
                    got: a + 1,
                });
            }
            self.hidden_trace(x, &mut trace);
            let last = &self.layers[out_layer];
            let q = last.unit(a, trace.top());
            let err = q - y;
            loss += err * err;
            let g = 2.0 * err / n as f64;

            // Output layer: only row `a` is touched.
            let h = trace.top();
            let gw = &mut grads.weights[out_layer][a * last.inputs..(a + 1) * last.inputs];
            for (gwi, hi) in gw.iter_mut().zip(h) {
                *gwi += g * hi;
            }
            grads.biases[out_layer][a] += g;
            delta.clear();
            delta.extend(last.row(a).iter().map(|w| g * w));

            for li in (0..out_layer).rev() {
                let layer = &self.layers[li];
                let act = &trace.acts[li + 1];
                // Rectifier derivative.
                for (d, &v) in delta.iter_mut().zip(act) {
                    if v <= 0.0 {
                        *d = 0.0;
                    }
                }
                let input = &trace.acts[li];
                let gw = &mut grads.weights[li];
                for (j, &d) in delta.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    grads.biases[li][j] += d;
                    let row = &mut gw[j * layer.inputs..(j + 1) * layer.inputs];
                    for (r, xi) in row.iter_mut().zip(input) {
                        *r += d * xi;
                    }
                }
                if li > 0 {
                    prev.clear();
                    prev.resize(layer.inputs, 0.0);
                    for (j, &d) in delta.iter().enumerate() {
                        if d == 0.0 {
                            continue;
                        }
                        for (p, w) in prev.iter_mut().zip(layer.row(j)) {
                            *p += d * w;
                        }
                    }
                    std::mem::swap(&mut delta, &mut prev);
                }
            }
        }
        Ok(loss / n as f64)
    }

    /// Overwrites `self` with `other`'s parameters.
    pub fn copy_from(&mut self, other: &Mlp) -> Result<()> {
        if self.sizes() != other.sizes() {
            return Err(Error::DimensionMismatch {
                expected: self.param_count(),
                got: other.param_count(),
            });
        }
        self.clone_from(other);
        Ok(())
    }
}

/// Scratch space for activations, reused across calls.
#[derive(Debug, Default)]
pub(crate) struct Trace {
    acts: Vec<Vec<f64>>,
}

impl Trace {
    fn top(&self) -> &[f64] {
        self.acts.last().map_or(&[], |v| v.as_slice())
    }
}
