use std::ops::Index;

use crate::gradcore::{Tape, Tensor, Var};

/// Which half of the alternating optimisation a parameter belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ParamGroup {
    /// Decoder side: topic and word vectors, construction weights, recurrent cells.
    Generative,
    /// Inference network producing `μ(d)` and `σ(d)`.
    Variational,
}

impl ParamGroup {
    pub fn as_str(self) -> &'static str {
        match self {
            ParamGroup::Generative => "generative",
            ParamGroup::Variational => "variational",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub group: ParamGroup,
    pub value: Tensor,
}

/// Ordered, named parameter storage. Ids are dense indices in insertion order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet {
    params: Vec<Param>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, group: ParamGroup, value: Tensor) -> ParamId {
        self.params.push(Param {
            name: name.into(),
            group,
            value,
        });
        ParamId(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id.0].value
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.params.iter_mut()
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn values(&self) -> Vec<Tensor> {
        self.params.iter().map(|p| p.value.clone()).collect()
    }

    pub fn coordinates(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Binds every parameter as a trainable leaf, in id order.
    pub fn bind(&self, tape: &mut Tape) -> BoundParams {
        BoundParams(self.params.iter().map(|p| tape.param(p.value.clone())).collect())
    }

    /// Binds every parameter as a constant (evaluation only).
    pub fn bind_constant(&self, tape: &mut Tape) -> BoundParams {
        BoundParams(self.params.iter().map(|p| tape.constant(p.value.clone())).collect())
    }
}

/// Tape handles for a [`ParamSet`], indexed by [`ParamId`].
#[derive(Clone, Debug)]
pub struct BoundParams(pub Vec<Var>);

impl BoundParams {
    pub fn vars(&self) -> &[Var] {
        &self.0
    }
}

impl Index<ParamId> for BoundParams {
    type Output = Var;

    fn index(&self, id: ParamId) -> &Var {
        &self.0[id.0]
    }
}
