use crate::mat::{gemm_ab, gemm_abt, gemm_atb, Mat, Scalar};
use crate::NnError;
use rand::Rng;
use std::sync::atomic::{AtomicU64, Ordering};

/// Layer-norm variance floor.
pub const LAYER_NORM_EPS: f64 = 1e-5;

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

fn fresh_id() -> u64 {
    NEXT_ID.fetch_add(1, Ordering::Relaxed)
}

/// One entry of a layer stack. Widths of element-wise layers are inferred.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    /// Fully connected layer with this many outputs.
    Dense(usize),
    /// Per-sample normalization with learnable gain and bias.
    LayerNorm,
    /// ELU with α = 1.
    Elu,
    Tanh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Layer {
    kind: LayerKind,
    inputs: usize,
    outputs: usize,
    /// Offset of this layer's parameters in the flat vector.
    offset: usize,
}

impl Layer {
    fn num_params(&self) -> usize {
        match self.kind {
            LayerKind::Dense(out) => out * self.inputs + out,
            LayerKind::LayerNorm => 2 * self.inputs,
            LayerKind::Elu | LayerKind::Tanh => 0,
        }
    }
}

/// A feed-forward stack whose parameters live in one flat vector.
///
/// Dense layers store an `outputs × inputs` row-major weight matrix followed
/// by the bias; layer norms store gain then bias.
#[derive(Debug)]
pub struct Mlp<T> {
    layers: Vec<Layer>,
    input_dim: usize,
    params: Vec<T>,
    id: u64,
    version: u64,
}

impl<T: Scalar> Clone for Mlp<T> {
    fn clone(&self) -> Self {
        Self { layers: self.layers.clone(), input_dim: self.input_dim, params: self.params.clone(), id: fresh_id(), version: 0 }
    }
}

impl<T: Scalar> PartialEq for Mlp<T> {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers && self.input_dim == other.input_dim && self.params == other.params
    }
}

enum Cache<T> {
    None,
    /// Normalized input and reciprocal standard deviation per row.
    Norm { xhat: Mat<T>, rstd: Vec<T> },
}

/// Intermediate values of one forward pass, consumed by [`Mlp::backward`].
pub struct Tape<T> {
    net: u64,
    version: u64,
    /// Input of every layer, then the network output.
    acts: Vec<Mat<T>>,
    caches: Vec<Cache<T>>,
}

impl<T: Scalar> Tape<T> {
    pub fn output(&self) -> &Mat<T> {
        self.acts.last().expect("tape has an output")
    }

    pub fn input(&self) -> &Mat<T> {
        &self.acts[0]
    }
}

impl<T: Scalar> Mlp<T> {
    /// Builds the stack with LeCun-uniform weights, zero biases and unit
    /// layer-norm gains.
    pub fn new<R: Rng + ?Sized>(input_dim: usize, kinds: &[LayerKind], rng: &mut R) -> Result<Self, NnError> {
        let mut net = Self::zeroed(input_dim, kinds)?;
        for l in net.layers.clone() {
            let p = &mut net.params[l.offset..l.offset + l.num_params()];
            match l.kind {
                LayerKind::Dense(out) => {
                    let bound = (3.0 / l.inputs as f64).sqrt();
                    for w in p[..out * l.inputs].iter_mut() {
                        *w = T::lit(rng.random_range(-bound..bound));
                    }
                }
                LayerKind::LayerNorm => p[..l.inputs].iter_mut().for_each(|g| *g = T::one()),
                _ => {}
            }
        }
        Ok(net)
    }

    /// Same layout with every parameter zero.
    pub fn zeroed(input_dim: usize, kinds: &[LayerKind]) -> Result<Self, NnError> {
        if input_dim == 0 {
            return Err(NnError::Architecture("input dimension must be positive".into()));
        }
        let mut layers = Vec::with_capacity(kinds.len());
        let mut width = input_dim;
        let mut offset = 0;
        for &kind in kinds {
            let outputs = match kind {
                LayerKind::Dense(0) => return Err(NnError::Architecture("dense layer with zero outputs".into())),
                LayerKind::Dense(out) => out,
                _ => width,
            };
            let layer = Layer { kind, inputs: width, outputs, offset };
            offset += layer.num_params();
            width = outputs;
            layers.push(layer);
        }
        Ok(Self { layers, input_dim, params: vec![T::zero(); offset], id: fresh_id(), version: 0 })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(self.input_dim, |l| l.outputs)
    }

    pub fn kinds(&self) -> Vec<LayerKind> {
        self.layers.iter().map(|l| l.kind).collect()
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    /// Mutable parameters; invalidates outstanding tapes.
    pub fn params_mut(&mut self) -> &mut [T] {
        self.version += 1;
        &mut self.params
    }

    pub fn set_params(&mut self, values: &[T]) -> Result<(), NnError> {
        if values.len() != self.params.len() {
            return Err(NnError::Dimension { expected: self.params.len(), got: values.len() });
        }
        self.params_mut().copy_from_slice(values);
        Ok(())
    }

    /// Named parameter blocks with their shapes, in storage order.
    pub fn blocks(&self) -> Vec<(String, Vec<usize>, &[T])> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            let p = &self.params[l.offset..l.offset + l.num_params()];
            match l.kind {
                LayerKind::Dense(o) => {
                    out.push((format!("{i}.weight"), vec![o, l.inputs], &p[..o * l.inputs]));
                    out.push((format!("{i}.bias"), vec![o], &p[o * l.inputs..]));
                }
                LayerKind::LayerNorm => {
                    out.push((format!("{i}.gain"), vec![l.inputs], &p[..l.inputs]));
                    out.push((format!("{i}.bias"), vec![l.inputs], &p[l.inputs..]));
                }
                _ => {}
            }
        }
        out
    }

    /// Output only, without recording a tape.
    pub fn infer(&self, x: &Mat<T>) -> Result<Mat<T>, NnError> {
        self.check_input(x)?;
        let mut cur = x.clone();
        for l in &self.layers {
            let (next, _) = self.apply(l, &cur, false);
            cur = next;
        }
        Ok(cur)
    }

    pub fn forward(&self, x: &Mat<T>) -> Result<(Mat<T>, Tape<T>), NnError> {
        self.check_input(x)?;
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        let mut caches = Vec::with_capacity(self.layers.len());
        acts.push(x.clone());
        for l in &self.layers {
            let (next, cache) = self.apply(l, acts.last().unwrap(), true);
            acts.push(next);
            caches.push(cache);
        }
        let out = acts.last().unwrap().clone();
        Ok((out, Tape { net: self.id, version: self.version, acts, caches }))
    }

    fn check_input(&self, x: &Mat<T>) -> Result<(), NnError> {
        if x.cols != self.input_dim {
            return Err(NnError::Dimension { expected: self.input_dim, got: x.cols });
        }
        Ok(())
    }

    fn apply(&self, l: &Layer, x: &Mat<T>, record: bool) -> (Mat<T>, Cache<T>) {
        let p = &self.params[l.offset..l.offset + l.num_params()];
        let n = x.rows;
        match l.kind {
            LayerKind::Dense(out) => {
                let (w, b) = p.split_at(out * l.inputs);
                let mut y = Mat::zeros(n, out);
                for r in 0..n {
                    y.row_mut(r).copy_from_slice(b);
                }
                gemm_abt(n, l.inputs, out, &x.data, w, T::one(), &mut y.data);
                (y, Cache::None)
            }
            LayerKind::Elu => (x.map(|v| if v > T::zero() { v } else { v.exp_m1() }), Cache::None),
            LayerKind::Tanh => (x.map(|v| v.tanh()), Cache::None),
            LayerKind::LayerNorm => {
                let d = l.inputs;
                let (gain, bias) = p.split_at(d);
                let inv_d = T::one() / T::lit(d as f64);
                let eps = T::lit(LAYER_NORM_EPS);
                let mut y = Mat::zeros(n, d);
                let mut xhat = if record { Mat::zeros(n, d) } else { Mat::default() };
                let mut rstd = Vec::with_capacity(if record { n } else { 0 });
                for r in 0..n {
                    let row = x.row(r);
                    let mean = row.iter().copied().sum::<T>() * inv_d;
                    let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() * inv_d;
                    let rs = T::one() / (var + eps).sqrt();
                    let yr = y.row_mut(r);
                    for k in 0..d {
                        let h = (row[k] - mean) * rs;
                        yr[k] = h * gain[k] + bias[k];
                        if record {
                            xhat.data[r * d + k] = h;
                        }
                    }
                    if record {
                        rstd.push(rs);
                    }
                }
                let cache = if record { Cache::Norm { xhat, rstd } } else { Cache::None };
                (y, cache)
            }
        }
    }

    /// Reverse pass. Parameter gradients are added to `grads` (flat, same
    /// layout as the parameters) when given; returns the input gradient.
    pub fn backward(&self, tape: &Tape<T>, dout: &Mat<T>, mut grads: Option<&mut [T]>) -> Result<Mat<T>, NnError> {
        if tape.net != self.id || tape.version != self.version {
            return Err(NnError::StaleTape { tape: tape.version, net: self.version });
        }
        let out = tape.output();
        if (dout.rows, dout.cols) != (out.rows, out.cols) {
            return Err(NnError::Dimension { expected: out.rows * out.cols, got: dout.rows * dout.cols });
        }
        if let Some(g) = grads.as_deref() {
            if g.len() != self.params.len() {
                return Err(NnError::Dimension { expected: self.params.len(), got: g.len() });
            }
        }
        let mut dy = dout.clone();
        for (i, l) in self.layers.iter().enumerate().rev() {
            let x = &tape.acts[i];
            let y = &tape.acts[i + 1];
            let n = x.rows;
            let p = &self.params[l.offset..l.offset + l.num_params()];
            dy = match l.kind {
                LayerKind::Dense(out) => {
                    let w = &p[..out * l.inputs];
                    if let Some(g) = grads.as_deref_mut() {
                        let g = &mut g[l.offset..l.offset + l.num_params()];
                        let (gw, gb) = g.split_at_mut(out * l.inputs);
                        gemm_atb(out, n, l.inputs, &dy.data, &x.data, T::one(), gw);
                        for r in 0..n {
                            for (b, &d) in gb.iter_mut().zip(dy.row(r)) {
                                *b = *b + d;
                            }
                        }
                    }
                    let mut dx = Mat::zeros(n, l.inputs);
                    gemm_ab(n, out, l.inputs, &dy.data, w, T::zero(), &mut dx.data);
                    dx
                }
                LayerKind::Elu => {
                    let mut dx = dy;
                    for (d, &v) in dx.data.iter_mut().zip(&y.data) {
                        if v <= T::zero() {
                            *d = *d * (v + T::one());
                        }
                    }
                    dx
                }
                LayerKind::Tanh => {
                    let mut dx = dy;
                    for (d, &v) in dx.data.iter_mut().zip(&y.data) {
                        *d = *d * (T::one() - v * v);
                    }
                    dx
                }
                LayerKind::LayerNorm => {
                    let Cache::Norm { xhat, rstd } = &tape.caches[i] else {
                        unreachable!("layer norm always records its cache")
                    };
                    let d = l.inputs;
                    let gain = &p[..d];
                    let inv_d = T::one() / T::lit(d as f64);
                    let mut dx = Mat::zeros(n, d);
                    for r in 0..n {
                        let dyr = dy.row(r);
                        let hr = xhat.row(r);
                        if let Some(g) = grads.as_deref_mut() {
                            let g = &mut g[l.offset..l.offset + 2 * d];
                            for k in 0..d {
                                g[k] = g[k] + dyr[k] * hr[k];
                                g[d + k] = g[d + k] + dyr[k];
                            }
                        }
                        let mut mean_dh = T::zero();
                        let mut mean_dh_h = T::zero();
                        for k in 0..d {
                            let dh = dyr[k] * gain[k];
                            mean_dh = mean_dh + dh;
                            mean_dh_h = mean_dh_h + dh * hr[k];
                        }
                        mean_dh = mean_dh * inv_d;
                        mean_dh_h = mean_dh_h * inv_d;
                        let dxr = dx.row_mut(r);
                        for k in 0..d {
                            dxr[k] = rstd[r] * (dyr[k] * gain[k] - mean_dh - hr[k] * mean_dh_h);
                        }
                    }
                    dx
                }
            };
        }
        Ok(dy)
    }
}
