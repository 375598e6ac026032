use std::collections::BTreeMap;

use super::{Matrix, Tape, Var};

/// Named parameter matrices, iterated in name order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    entries: BTreeMap<String, Matrix>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Matrix) {
        self.entries.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Option<&Matrix> {
        self.entries.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Matrix> {
        self.entries.get_mut(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> + '_ {
        self.entries.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Matrix)> + '_ {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Matrix)> + '_ {
        self.entries.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    /// Records every parameter on the tape as a gradient-tracking leaf.
    pub fn bind(&self, tape: &mut Tape) -> BTreeMap<String, Var> {
        self.entries
            .iter()
            .map(|(k, v)| (k.clone(), tape.param(v.clone())))
            .collect()
    }

    /// Gradients for bound parameters after `tape.backward`; parameters the
    /// loss does not depend on get zeros.
    pub fn gradients(&self, tape: &Tape, bound: &BTreeMap<String, Var>) -> ParamSet {
        let entries = self
            .entries
            .iter()
            .map(|(k, v)| {
                let g = bound
                    .get(k)
                    .and_then(|&var| tape.grad(var))
                    .cloned()
                    .unwrap_or_else(|| Matrix::zeros(v.raw_dim()));
                (k.clone(), g)
            })
            .collect();
        ParamSet { entries }
    }
}

impl FromIterator<(String, Matrix)> for ParamSet {
    fn from_iter<I: IntoIterator<Item = (String, Matrix)>>(iter: I) -> Self {
        Self {
            entries: iter.into_iter().collect(),
        }
    }
}
