//! Shared trunk with one head per task.

use crate::agent::AgentError;
use rand::Rng;
use walker_nn::{Adam, Checkpoint, CheckpointError, LayerKind, Mat, Mlp, Scalar, Tape};

/// Layer widths of a tower.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TowerShape {
    /// Trunk widths; a layer norm follows the first layer's activation.
    pub trunk: Vec<usize>,
    /// Hidden head widths, each followed by ELU.
    pub head: Vec<usize>,
}

impl TowerShape {
    fn trunk_kinds(&self) -> Vec<LayerKind> {
        let mut kinds = Vec::new();
        for (i, &w) in self.trunk.iter().enumerate() {
            kinds.push(LayerKind::Dense(w));
            kinds.push(LayerKind::Elu);
            if i == 0 {
                kinds.push(LayerKind::LayerNorm);
            }
        }
        kinds
    }

    fn head_kinds(&self, outputs: usize, tanh: bool) -> Vec<LayerKind> {
        let mut kinds: Vec<LayerKind> = self.head.iter().flat_map(|&w| [LayerKind::Dense(w), LayerKind::Elu]).collect();
        kinds.push(LayerKind::Dense(outputs));
        if tanh {
            kinds.push(LayerKind::Tanh);
        }
        kinds
    }
}

#[derive(Debug, Clone)]
pub struct Tower<T: Scalar> {
    pub trunk: Mlp<T>,
    pub heads: Vec<Mlp<T>>,
    /// Fixed affine input map `(x - offset) * scale` on the leading inputs.
    pub in_offset: Vec<T>,
    pub in_scale: Vec<T>,
}

pub struct TowerTape<T> {
    trunk: Tape<T>,
    heads: Vec<(usize, Tape<T>)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TowerGrads<T> {
    pub trunk: Vec<T>,
    pub heads: Vec<Vec<T>>,
}

impl<T: Scalar> TowerGrads<T> {
    pub fn head_norm(&self, head: usize) -> f64 {
        self.heads[head].iter().map(|g| g.to_f64().unwrap().powi(2)).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.trunk.iter().chain(self.heads.iter().flatten()).all(|g| g.is_finite())
    }
}

impl<T: Scalar> Tower<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        input_dim: usize,
        shape: &TowerShape,
        outputs: usize,
        tanh: bool,
        num_heads: usize,
        in_offset: &[f64],
        in_scale: &[f64],
        rng: &mut R,
    ) -> Result<Self, AgentError> {
        let trunk = Mlp::new(input_dim, &shape.trunk_kinds(), rng)?;
        let head_kinds = shape.head_kinds(outputs, tanh);
        let heads = (0..num_heads).map(|_| Mlp::new(trunk.output_dim(), &head_kinds, rng)).collect::<Result<Vec<_>, _>>()?;
        if in_offset.len() != in_scale.len() || in_offset.len() > input_dim {
            return Err(AgentError::Config("input scaling longer than the input".into()));
        }
        Ok(Self {
            trunk,
            heads,
            in_offset: in_offset.iter().map(|&v| T::lit(v)).collect(),
            in_scale: in_scale.iter().map(|&v| T::lit(v)).collect(),
        })
    }

    pub fn input_dim(&self) -> usize {
        self.trunk.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.heads[0].output_dim()
    }

    pub fn num_heads(&self) -> usize {
        self.heads.len()
    }

    fn scaled(&self, x: &Mat<T>) -> Mat<T> {
        let mut x = x.clone();
        let n = self.in_offset.len();
        for r in 0..x.rows {
            let row = x.row_mut(r);
            for k in 0..n {
                row[k] = (row[k] - self.in_offset[k]) * self.in_scale[k];
            }
        }
        x
    }

    /// Outputs of the requested heads, without a tape.
    pub fn infer(&self, x: &Mat<T>, heads: &[usize]) -> Result<Vec<Mat<T>>, AgentError> {
        let z = self.trunk.infer(&self.scaled(x))?;
        heads.iter().map(|&h| Ok(self.heads[h].infer(&z)?)).collect()
    }

    pub fn forward(&self, x: &Mat<T>, heads: &[usize]) -> Result<(Vec<Mat<T>>, TowerTape<T>), AgentError> {
        let (z, trunk) = self.trunk.forward(&self.scaled(x))?;
        let mut outs = Vec::with_capacity(heads.len());
        let mut tapes = Vec::with_capacity(heads.len());
        for &h in heads {
            let (y, tape) = self.heads[h].forward(&z)?;
            outs.push(y);
            tapes.push((h, tape));
        }
        Ok((outs, TowerTape { trunk, heads: tapes }))
    }

    /// Reverse pass; `douts[i]` is the output gradient of the i-th head in
    /// the forward call. Returns the gradient with respect to the raw input.
    pub fn backward(&self, tape: &TowerTape<T>, douts: &[Mat<T>], mut grads: Option<&mut TowerGrads<T>>) -> Result<Mat<T>, AgentError> {
        if douts.len() != tape.heads.len() {
            return Err(AgentError::Config(format!("{} head gradients for {} heads", douts.len(), tape.heads.len())));
        }
        let mut dz: Option<Mat<T>> = None;
        for ((h, htape), dout) in tape.heads.iter().zip(douts) {
            let g = grads.as_deref_mut().map(|g| g.heads[*h].as_mut_slice());
            let d = self.heads[*h].backward(htape, dout, g)?;
            match dz.as_mut() {
                Some(acc) => acc.add_assign(&d),
                None => dz = Some(d),
            }
        }
        let dz = dz.ok_or_else(|| AgentError::Config("backward through no heads".into()))?;
        let mut dx = self.trunk.backward(&tape.trunk, &dz, grads.map(|g| g.trunk.as_mut_slice()))?;
        let n = self.in_scale.len();
        for r in 0..dx.rows {
            let row = dx.row_mut(r);
            for k in 0..n {
                row[k] = row[k] * self.in_scale[k];
            }
        }
        Ok(dx)
    }

    pub fn zero_grads(&self) -> TowerGrads<T> {
        TowerGrads {
            trunk: vec![T::zero(); self.trunk.num_params()],
            heads: self.heads.iter().map(|h| vec![T::zero(); h.num_params()]).collect(),
        }
    }

    pub fn copy_params_from(&mut self, other: &Tower<T>) {
        self.trunk.set_params(other.trunk.params()).expect("same layout");
        for (h, o) in self.heads.iter_mut().zip(&other.heads) {
            h.set_params(o.params()).expect("same layout");
        }
    }

    pub fn save(&self, ck: &mut Checkpoint, prefix: &str) {
        ck.put_mlp(&format!("{prefix}.trunk"), &self.trunk);
        for (i, h) in self.heads.iter().enumerate() {
            ck.put_mlp(&format!("{prefix}.head{i}"), h);
        }
    }

    pub fn load(&mut self, ck: &Checkpoint, prefix: &str) -> Result<(), CheckpointError> {
        ck.load_mlp(&format!("{prefix}.trunk"), &mut self.trunk)?;
        for (i, h) in self.heads.iter_mut().enumerate() {
            ck.load_mlp(&format!("{prefix}.head{i}"), h)?;
        }
        Ok(())
    }
}

/// One Adam state per network of a tower.
#[derive(Debug, Clone)]
pub struct TowerAdam<T: Scalar> {
    pub trunk: Adam<T>,
    pub heads: Vec<Adam<T>>,
}

impl<T: Scalar> TowerAdam<T> {
    pub fn new(tower: &Tower<T>, lr: f64) -> Self {
        Self { trunk: Adam::new(tower.trunk.num_params(), lr), heads: tower.heads.iter().map(|h| Adam::new(h.num_params(), lr)).collect() }
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.trunk.lr = lr;
        self.heads.iter_mut().for_each(|a| a.lr = lr);
    }

    /// Applies one update; nothing changes if any gradient is non-finite.
    pub fn step(&mut self, tower: &mut Tower<T>, grads: &TowerGrads<T>) -> Result<(), AgentError> {
        if !grads.is_finite() {
            return Err(AgentError::NonFinite("gradient"));
        }
        self.trunk.update(tower.trunk.params_mut(), &grads.trunk)?;
        for ((adam, head), g) in self.heads.iter_mut().zip(tower.heads.iter_mut()).zip(&grads.heads) {
            adam.update(head.params_mut(), g)?;
        }
        Ok(())
    }
}
