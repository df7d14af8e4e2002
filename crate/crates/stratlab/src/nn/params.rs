//! Named parameter storage with owner tags.
//!
//! Every tensor belongs to exactly one owner; the owner identifies which
//! objective is allowed to update it. The update-schedule tests lean on this:
//! gradients flowing to a non-owner are a bug, not a tuning problem.

use super::graph::{Graph, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Which objective updates a parameter group.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub enum Owner {
    /// Utility networks and mixer (TD + MI action term).
    Theta,
    /// Latent policy.
    Omega,
    /// Observation posterior.
    Phi,
    /// Strategy posterior.
    Xi,
    /// Segment predictive model.
    Eta,
    /// Auxiliary maximum-likelihood models (marginals, reward head).
    Psi,
}

impl Owner {
    pub fn as_str(self) -> &'static str {
        match self {
            Owner::Theta => "theta",
            Owner::Omega => "omega",
            Owner::Phi => "phi",
            Owner::Xi => "xi",
            Owner::Eta => "eta",
            Owner::Psi => "psi",
        }
    }

    pub fn parse(s: &str) -> Result<Owner> {
        match s {
            "theta" => Ok(Owner::Theta),
            "omega" => Ok(Owner::Omega),
            "phi" => Ok(Owner::Phi),
            "xi" => Ok(Owner::Xi),
            "eta" => Ok(Owner::Eta),
            "psi" => Ok(Owner::Psi),
            other => Err(Error::Config(format!("unknown owner tag: {other}"))),
        }
    }
}

/// Index of one named tensor within a [`ParamSet`].
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct ParamId(pub(crate) usize);

#[derive(Clone, Debug)]
pub struct ParamSet {
    owner: Owner,
    names: Vec<String>,
    tensors: Vec<Tensor>,
    version: u64,
}

impl ParamSet {
    pub fn new(owner: Owner) -> Self {
        ParamSet { owner, names: Vec::new(), tensors: Vec::new(), version: 0 }
    }

    pub fn owner(&self) -> Owner {
        self.owner
    }

    /// Monotone counter bumped on every in-place update; used to reject
    /// stale on-policy rollouts.
    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn bump_version(&mut self) {
        self.version += 1;
    }

    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor) -> ParamId {
        let name = name.into();
        assert!(
            !self.names.contains(&name),
            "duplicate parameter name {name} in owner {}",
            self.owner.as_str()
        );
        self.names.push(name);
        self.tensors.push(tensor);
        ParamId(self.tensors.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    /// Replace a tensor's contents; the shape is immutable after `add`.
    pub fn set(&mut self, id: ParamId, tensor: Tensor) {
        assert_eq!(
            self.tensors[id.0].shape(),
            tensor.shape(),
            "parameter shape is immutable ({})",
            self.names[id.0]
        );
        self.tensors[id.0] = tensor;
    }

    /// Bind all tensors as graph inputs; returns vars aligned with ids.
    pub fn bind(&self, g: &mut Graph) -> Binding {
        let vars = self.tensors.iter().map(|t| g.input(t.clone())).collect();
        Binding { vars }
    }

    pub fn flat_len(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.flat_len());
        for t in &self.tensors {
            out.extend_from_slice(t.data());
        }
        out
    }

    pub fn from_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.flat_len(), "flat parameter length mismatch");
        let mut off = 0;
        for t in &mut self.tensors {
            let n = t.len();
            t.data_mut().copy_from_slice(&flat[off..off + n]);
            off += n;
        }
    }

    /// Apply an in-place update `p -= delta` per tensor, bumping the version.
    pub fn apply_deltas(&mut self, deltas: &[Tensor]) {
        assert_eq!(deltas.len(), self.tensors.len());
        for (t, d) in self.tensors.iter_mut().zip(deltas.iter()) {
            assert_eq!(t.shape(), d.shape());
            for (x, dx) in t.data_mut().iter_mut().zip(d.data().iter()) {
                *x -= dx;
            }
        }
        self.version += 1;
    }
}

/// Graph vars for one bound [`ParamSet`], aligned with [`ParamId`]s.
pub struct Binding {
    vars: Vec<Var>,
}

impl Binding {
    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    /// Collect per-parameter gradients (zeros where none flowed).
    pub fn gradients(&self, set: &ParamSet, grads: &super::graph::Gradients) -> Vec<Tensor> {
        self.vars
            .iter()
            .enumerate()
            .map(|(i, v)| grads.get(*v, &set.tensors[i]))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_roundtrip() {
        let mut ps = ParamSet::new(Owner::Omega);
        ps.add("w", Tensor::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]));
        ps.add("b", Tensor::col(&[5.0, 6.0]));
        let flat = ps.to_flat();
        assert_eq!(flat, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let mut ps2 = ps.clone();
        ps2.from_flat(&[6.0, 5.0, 4.0, 3.0, 2.0, 1.0]);
        assert_eq!(ps2.get(ParamId(0)).data(), &[6.0, 5.0, 4.0, 3.0]);
    }

    #[test]
    #[should_panic(expected = "immutable")]
    fn shape_is_immutable() {
        let mut ps = ParamSet::new(Owner::Theta);
        let id = ps.add("w", Tensor::zeros(2, 2));
        ps.set(id, Tensor::zeros(3, 2));
    }
}
