//! Dense feed-forward network with all parameters in one flat vector, plus
//! the Adam optimizer that updates such vectors.
//!
//! Layer `k` stores an `out x in` row-major weight matrix followed by its
//! bias. Besides ordinary backpropagation the network can differentiate the
//! squared Frobenius norm of its input Jacobian with respect to its
//! parameters, which the training loss needs for the gradient-energy term.

use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Linear,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Linear => z,
        }
    }

    /// `d a / d z` written in terms of the output `a`.
    fn slope(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Linear => 1.0,
        }
    }

    /// `d slope / d z` written in terms of the output `a`.
    fn curvature(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => -2.0 * a * (1.0 - a * a),
            Activation::Linear => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    dims: Vec<usize>,
    activations: Vec<Activation>,
    params: Vec<f64>,
}

#[derive(Clone, Copy)]
struct LayerView {
    w: usize,
    b: usize,
    n_in: usize,
    n_out: usize,
}

fn param_count(dims: &[usize]) -> usize {
    dims.windows(2).map(|d| d[0] * d[1] + d[1]).sum()
}

impl Mlp {
    /// All-zero network. `dims` lists layer widths from input to output;
    /// `activations` has one entry per layer.
    pub fn zeros(dims: &[usize], activations: &[Activation]) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::arg(format!("invalid layer widths {dims:?}")));
        }
        if activations.len() != dims.len() - 1 {
            return Err(Error::dim(format!(
                "{} activations for {} layers",
                activations.len(),
                dims.len() - 1
            )));
        }
        Ok(Self {
            dims: dims.to_vec(),
            activations: activations.to_vec(),
            params: vec![0.0; param_count(dims)],
        })
    }

    /// Glorot-uniform weights, zero biases.
    pub fn random<R: Rng + ?Sized>(dims: &[usize], activations: &[Activation], rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(dims, activations)?;
        for k in 0..net.layer_count() {
            let l = net.layer(k);
            let a = (6.0 / (l.n_in + l.n_out) as f64).sqrt();
            let dist = Uniform::new_inclusive(-a, a).expect("finite bounds");
            for w in &mut net.params[l.w..l.b] {
                *w = dist.sample(rng);
            }
        }
        Ok(net)
    }

    /// Rebuilds a network from stored parameters.
    pub fn from_params(dims: &[usize], activations: &[Activation], params: Vec<f64>) -> Result<Self> {
        let mut net = Self::zeros(dims, activations)?;
        if params.len() != net.params.len() {
            return Err(Error::dim(format!(
                "{} parameters for a network with {}",
                params.len(),
                net.params.len()
            )));
        }
        if params.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("network parameters"));
        }
        net.params = params;
        Ok(net)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn input_len(&self) -> usize {
        self.dims[0]
    }

    pub fn output_len(&self) -> usize {
        self.dims[self.dims.len() - 1]
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn layer_count(&self) -> usize {
        self.dims.len() - 1
    }

    fn layer(&self, k: usize) -> LayerView {
        let w = param_count(&self.dims[..=k]);
        let (n_in, n_out) = (self.dims[k], self.dims[k + 1]);
        LayerView {
            w,
            b: w + n_in * n_out,
            n_in,
            n_out,
        }
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_len() {
            return Err(Error::dim(format!(
                "network expects {} inputs, got {}",
                self.input_len(),
                x.len()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut trace = self.forward_trace(x)?;
        Ok(trace.pop().expect("at least one layer"))
    }

    /// Activations of every layer, input first.
    pub fn forward_trace(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        self.check_input(x)?;
        let mut trace = Vec::with_capacity(self.dims.len());
        trace.push(x.to_vec());
        for k in 0..self.layer_count() {
            let l = self.layer(k);
            let act = self.activations[k];
            let input = &trace[k];
            let out: Vec<f64> = (0..l.n_out)
                .map(|j| {
                    let row = &self.params[l.w + j * l.n_in..l.w + (j + 1) * l.n_in];
                    let z = self.params[l.b + j] + dot(row, input);
                    act.apply(z)
                })
                .collect();
            trace.push(out);
        }
        if trace.last().is_some_and(|o| o.iter().any(|v| !v.is_finite())) {
            return Err(Error::NonFinite("network output"));
        }
        Ok(trace)
    }

    /// Accumulates `d loss / d params` into `grads` given `d loss / d output`
    /// and returns `d loss / d input`.
    pub fn backward(&self, trace: &[Vec<f64>], grad_out: &[f64], grads: &mut [f64]) -> Vec<f64> {
        debug_assert_eq!(grads.len(), self.params.len());
        let mut abar = grad_out.to_vec();
        for k in (0..self.layer_count()).rev() {
            let l = self.layer(k);
            let act = self.activations[k];
            let zbar: Vec<f64> = abar
                .iter()
                .zip(&trace[k + 1])
                .map(|(g, &a)| g * act.slope(a))
                .collect();
            abar = self.accumulate_affine(l, &trace[k], &zbar, grads);
        }
        abar
    }

    /// Adds `zbar a_in^T` and `zbar` to the layer's gradients; returns `W^T zbar`.
    fn accumulate_affine(&self, l: LayerView, a_in: &[f64], zbar: &[f64], grads: &mut [f64]) -> Vec<f64> {
        let mut back = vec![0.0; l.n_in];
        for (j, &zj) in zbar.iter().enumerate() {
            if zj == 0.0 {
                continue;
            }
            grads[l.b + j] += zj;
            let row = l.w + j * l.n_in;
            for i in 0..l.n_in {
                grads[row + i] += zj * a_in[i];
                back[i] += self.params[row + i] * zj;
            }
        }
        back
    }

    /// Squared Frobenius norm of the input Jacobian at `x`,
    /// `sum_l sum_f (d out_f / d x_l)^2`, computed exactly by forward tangent
    /// propagation.
    pub fn jacobian_energy(&self, x: &[f64]) -> Result<f64> {
        let (_, _, tangents) = self.tangent_trace(x)?;
        Ok(tangents.last().expect("output tangent").iter().map(|v| v * v).sum())
    }

    /// Jacobian energy at `x`; also accumulates `scale * d energy / d params`
    /// into `grads`.
    pub fn jacobian_energy_grad(&self, x: &[f64], scale: f64, grads: &mut [f64]) -> Result<f64> {
        let (trace, pre, tangents) = self.tangent_trace(x)?;
        let n0 = self.input_len();
        let out_tangent = tangents.last().expect("output tangent");
        let energy: f64 = out_tangent.iter().map(|v| v * v).sum();

        // ubar: adjoint of the output-side tangent U_k (n_k x n0)
        let mut ubar: Vec<f64> = out_tangent.iter().map(|v| 2.0 * scale * v).collect();
        let mut abar = vec![0.0; self.output_len()];
        for k in (0..self.layer_count()).rev() {
            let l = self.layer(k);
            let act = self.activations[k];
            let a_out = &trace[k + 1];
            let p = &pre[k];
            let mut pbar = vec![0.0; l.n_out * n0];
            let mut zbar = vec![0.0; l.n_out];
            for j in 0..l.n_out {
                let d = act.slope(a_out[j]);
                let row = j * n0..(j + 1) * n0;
                let dbar = dot(&ubar[row.clone()], &p[row.clone()]);
                for (pb, ub) in pbar[row.clone()].iter_mut().zip(&ubar[row]) {
                    *pb = d * ub;
                }
                zbar[j] = abar[j] * d + dbar * act.curvature(a_out[j]);
            }
            // weight gradient from the tangent path: pbar U_in^T
            let u_in = &tangents[k];
            for j in 0..l.n_out {
                let prow = &pbar[j * n0..(j + 1) * n0];
                let base = l.w + j * l.n_in;
                for i in 0..l.n_in {
                    grads[base + i] += dot(prow, &u_in[i * n0..(i + 1) * n0]);
                }
            }
            abar = self.accumulate_affine(l, &trace[k], &zbar, grads);
            if k > 0 {
                let mut next = vec![0.0; l.n_in * n0];
                for j in 0..l.n_out {
                    let prow = &pbar[j * n0..(j + 1) * n0];
                    let base = l.w + j * l.n_in;
                    for i in 0..l.n_in {
                        let w = self.params[base + i];
                        if w != 0.0 {
                            for (nv, pv) in next[i * n0..(i + 1) * n0].iter_mut().zip(prow) {
                                *nv += w * pv;
                            }
                        }
                    }
                }
                ubar = next;
            }
        }
        Ok(energy)
    }

    /// Forward activations, pre-activation tangents `P_k = W_k U_{k-1}` and
    /// input tangents `U_k = d a_k / d x = diag(slope) P_k`, each stored
    /// row-major as `n_k x n_0`.
    #[allow(clippy::type_complexity)]
    fn tangent_trace(&self, x: &[f64]) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        let trace = self.forward_trace(x)?;
        let n0 = self.input_len();
        let mut tangents = Vec::with_capacity(self.dims.len());
        let mut eye = vec![0.0; n0 * n0];
        for i in 0..n0 {
            eye[i * n0 + i] = 1.0;
        }
        tangents.push(eye);
        let mut pre = Vec::with_capacity(self.layer_count());
        for k in 0..self.layer_count() {
            let l = self.layer(k);
            let act = self.activations[k];
            let u_in = &tangents[k];
            let mut p_out = vec![0.0; l.n_out * n0];
            for j in 0..l.n_out {
                let row = &mut p_out[j * n0..(j + 1) * n0];
                let base = l.w + j * l.n_in;
                for i in 0..l.n_in {
                    let w = self.params[base + i];
                    if w != 0.0 {
                        for (r, u) in row.iter_mut().zip(&u_in[i * n0..(i + 1) * n0]) {
                            *r += w * u;
                        }
                    }
                }
            }
            let u_out = p_out
                .chunks(n0)
                .zip(&trace[k + 1])
                .flat_map(|(row, &a)| {
                    let d = act.slope(a);
                    row.iter().map(move |v| d * v)
                })
                .collect();
            pre.push(p_out);
            tangents.push(u_out);
        }
        Ok((trace, pre, tangents))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Adam with the usual bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(param_count: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
        }
    }

    pub fn update(&mut self, params: &mut [f64], grads: &[f64]) {
        debug_assert_eq!(params.len(), self.m.len());
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step as i32);
        let c2 = 1.0 - self.beta2.powi(self.step as i32);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
        }
    }
}
