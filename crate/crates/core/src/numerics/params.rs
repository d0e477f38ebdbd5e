use std::collections::HashMap;
use std::sync::Arc;

use rand::Rng;

use super::real::Real;
use super::tape::{Tape, Var};
use crate::error::{Error, Result};

/// Handle to one named parameter group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GroupId(pub usize);

/// Names and shapes of all parameter groups, in registration order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamLayout {
    names: Vec<String>,
    shapes: Vec<Vec<usize>>,
    index: HashMap<String, usize>,
}

impl ParamLayout {
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, id: GroupId) -> &str {
        &self.names[id.0]
    }

    pub fn shape(&self, id: GroupId) -> &[usize] {
        &self.shapes[id.0]
    }

    pub fn find(&self, name: &str) -> Option<GroupId> {
        self.index.get(name).copied().map(GroupId)
    }

    pub fn ids(&self) -> impl Iterator<Item = GroupId> {
        (0..self.names.len()).map(GroupId)
    }
}

/// Collects parameter groups before the layout is frozen.
#[derive(Debug, Default)]
pub struct ParamStoreBuilder {
    layout: ParamLayout,
    data: Vec<Vec<f64>>,
}

impl ParamStoreBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, shape: &[usize], values: Vec<f64>) -> GroupId {
        let name = name.into();
        assert_eq!(
            values.len(),
            shape.iter().product::<usize>(),
            "group `{name}`: value count does not match shape"
        );
        assert!(
            !self.layout.index.contains_key(&name),
            "duplicate parameter group `{name}`"
        );
        let id = self.layout.names.len();
        self.layout.index.insert(name.clone(), id);
        self.layout.names.push(name);
        self.layout.shapes.push(shape.to_vec());
        self.data.push(values);
        GroupId(id)
    }

    pub fn zeros(&mut self, name: impl Into<String>, shape: &[usize]) -> GroupId {
        let n = shape.iter().product();
        self.add(name, shape, vec![0.0; n])
    }

    pub fn filled(&mut self, name: impl Into<String>, shape: &[usize], value: f64) -> GroupId {
        let n = shape.iter().product();
        self.add(name, shape, vec![value; n])
    }

    /// Weight matrix `[fan_out, fan_in]` drawn uniformly from
    /// `±sqrt(6 / (fan_in + fan_out))`.
    pub fn glorot<R: Rng + ?Sized>(
        &mut self,
        name: impl Into<String>,
        fan_out: usize,
        fan_in: usize,
        rng: &mut R,
    ) -> GroupId {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let values = (0..fan_out * fan_in)
            .map(|_| rng.random_range(-limit..=limit))
            .collect();
        self.add(name, &[fan_out, fan_in], values)
    }

    pub fn build(self) -> ParamStore {
        ParamStore {
            layout: Arc::new(self.layout),
            data: self.data,
        }
    }
}

/// Named parameter groups with a fixed layout.
///
/// `ParamStore<f64>` holds values or gradients; `ParamStore<Var>` is the same
/// layout bound to a tape.
#[derive(Debug, Clone)]
pub struct ParamStore<T = f64> {
    layout: Arc<ParamLayout>,
    data: Vec<Vec<T>>,
}

impl<T: PartialEq> PartialEq for ParamStore<T> {
    fn eq(&self, other: &Self) -> bool {
        self.layout == other.layout && self.data == other.data
    }
}

impl<T> ParamStore<T> {
    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn get(&self, id: GroupId) -> &[T] {
        &self.data[id.0]
    }

    pub fn get_mut(&mut self, id: GroupId) -> &mut [T] {
        &mut self.data[id.0]
    }

    pub fn by_name(&self, name: &str) -> Option<&[T]> {
        self.layout.find(name).map(|id| self.get(id))
    }

    pub fn groups(&self) -> impl Iterator<Item = (GroupId, &str, &[T])> {
        self.layout
            .ids()
            .map(move |id| (id, self.layout.name(id), self.get(id)))
    }

    pub fn num_scalars(&self) -> usize {
        self.data.iter().map(Vec::len).sum()
    }

    pub fn map<U, F: FnMut(&T) -> U>(&self, mut f: F) -> ParamStore<U> {
        ParamStore {
            layout: Arc::clone(&self.layout),
            data: self
                .data
                .iter()
                .map(|g| g.iter().map(&mut f).collect())
                .collect(),
        }
    }

    pub fn same_layout<U>(&self, other: &ParamStore<U>) -> bool {
        Arc::ptr_eq(&self.layout, &other.layout) || *self.layout == *other.layout
    }

    pub fn iter_flat(&self) -> impl Iterator<Item = &T> {
        self.data.iter().flatten()
    }

    pub fn iter_flat_mut(&mut self) -> impl Iterator<Item = &mut T> {
        self.data.iter_mut().flatten()
    }
}

impl ParamStore<f64> {
    pub fn zeros_like(&self) -> Self {
        self.map(|_| 0.0)
    }

    /// Replace a group's values by name, checking the element count.
    pub fn set(&mut self, name: &str, values: &[f64]) -> Result<()> {
        let id = self
            .layout
            .find(name)
            .ok_or_else(|| Error::Lookup(format!("no parameter group `{name}`")))?;
        let dst = &mut self.data[id.0];
        if dst.len() != values.len() {
            return Err(Error::config(format!(
                "group `{name}` expects {} values, got {}",
                dst.len(),
                values.len()
            )));
        }
        dst.copy_from_slice(values);
        Ok(())
    }

    /// Bind every parameter as a differentiable input on `tape`.
    pub fn bind<'t>(&self, tape: &'t Tape) -> ParamStore<Var<'t>> {
        self.map(|&x| tape.var(x))
    }
}

impl<T: Real> ParamStore<T> {
    pub fn values(&self) -> ParamStore<f64> {
        self.map(|x| x.value())
    }
}

/// Value and exact reverse-mode gradient of a scalar loss built from the
/// module primitives.
pub fn compute_gradient<F>(params: &ParamStore, loss_fn: F) -> Result<(f64, ParamStore)>
where
    F: for<'t> FnOnce(&ParamStore<Var<'t>>) -> Result<Var<'t>>,
{
    let tape = Tape::new();
    let bound = params.bind(&tape);
    let loss = loss_fn(&bound)?;
    tape.check_finite()?;
    let adj = tape.backward(loss);
    let grads = bound.map(|v| adj[v.index()]);
    Ok((loss.value(), grads))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradient_containers_mirror_shapes() {
        let mut b = ParamStoreBuilder::new();
        b.filled("w", &[2, 3], 0.5);
        b.filled("b", &[2], 1.0);
        let params = b.build();
        let (v, g) = compute_gradient(&params, |p| {
            let w = p.by_name("w").unwrap();
            let b = p.by_name("b").unwrap();
            let s = Var::sum(w) * Var::sum(b);
            Ok(s)
        })
        .unwrap();
        assert_eq!(v, 3.0 * 2.0);
        assert!(g.same_layout(&params));
        assert_eq!(g.by_name("w").unwrap(), &[2.0; 6]);
        assert_eq!(g.by_name("b").unwrap(), &[3.0; 2]);
    }

    #[test]
    fn set_rejects_wrong_length() {
        let mut b = ParamStoreBuilder::new();
        b.zeros("w", &[2, 2]);
        let mut p = b.build();
        assert!(matches!(p.set("w", &[1.0]), Err(Error::Config(_))));
        assert!(matches!(p.set("x", &[1.0]), Err(Error::Lookup(_))));
        p.set("w", &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(p.by_name("w").unwrap()[3], 4.0);
    }
}
