//! Node-wise DOF numbering and Dirichlet constraints.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Prescribed value `offset + scale·λ` for a load parameter λ
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ramp {
    pub offset: f64,
    pub scale: f64,
}

impl Ramp {
    pub fn fixed(value: f64) -> Self {
        Ramp { offset: value, scale: 0.0 }
    }

    pub fn proportional(scale: f64) -> Self {
        Ramp { offset: 0.0, scale }
    }

    pub fn value(&self, load: f64) -> f64 {
        self.offset + self.scale * load
    }
}

/// Interleaved layout: the unknowns of one node are adjacent (saddle
/// partners end up next to each other in the matrix). Optional extra blocks,
/// e.g. element-internal unknowns, follow the block of an anchor node so the
/// matrix profile stays narrow.
#[derive(Clone, Debug)]
pub struct DofMap {
    fields: Vec<String>,
    constraints: BTreeMap<usize, Ramp>,
    node_base: Vec<usize>,
    extra_base: Vec<usize>,
    extra_size: usize,
    n_dofs: usize,
}

impl DofMap {
    /// Plain layout: DOF `node·n_fields + field`
    pub fn new(n_nodes: usize, fields: &[&str]) -> Self {
        DofMap::with_extras(n_nodes, fields, &[], 0)
    }

    /// Adds one block of `size` unknowns per entry of `anchors`, numbered
    /// right after the unknowns of that anchor node
    pub fn with_extras(n_nodes: usize, fields: &[&str], anchors: &[usize], size: usize) -> Self {
        let nf = fields.len();
        let mut per_node: Vec<Vec<usize>> = vec![Vec::new(); n_nodes];
        for (k, &a) in anchors.iter().enumerate() {
            per_node[a].push(k);
        }
        let mut node_base = Vec::with_capacity(n_nodes);
        let mut extra_base = vec![0; anchors.len()];
        let mut next = 0;
        for blocks in &per_node {
            node_base.push(next);
            next += nf;
            for &k in blocks {
                extra_base[k] = next;
                next += size;
            }
        }
        DofMap {
            fields: fields.iter().map(|s| s.to_string()).collect(),
            constraints: BTreeMap::new(),
            node_base,
            extra_base,
            extra_size: size,
            n_dofs: next,
        }
    }

    pub fn n_dofs(&self) -> usize {
        self.n_dofs
    }

    pub fn n_nodes(&self) -> usize {
        self.node_base.len()
    }

    /// Unknowns of extra block `k`
    pub fn extra_dofs(&self, k: usize) -> std::ops::Range<usize> {
        self.extra_base[k]..self.extra_base[k] + self.extra_size
    }

    pub fn n_fields(&self) -> usize {
        self.fields.len()
    }

    pub fn field(&self, name: &str) -> Result<usize> {
        self.fields.iter().position(|f| f == name).ok_or_else(|| Error::InvalidParameter(format!("unknown field {name}")))
    }

    pub fn dof(&self, node: usize, field: usize) -> usize {
        self.node_base[node] + field
    }

    /// Global DOFs of an element, node by node
    pub fn element_dofs(&self, conn: &[usize]) -> Vec<usize> {
        conn.iter().flat_map(|&n| (0..self.fields.len()).map(move |f| self.dof(n, f))).collect()
    }

    /// Adds (or replaces) a constraint
    pub fn constrain(&mut self, dof: usize, ramp: Ramp) {
        self.constraints.insert(dof, ramp);
    }

    pub fn constrain_nodes(&mut self, nodes: &[usize], field: usize, ramp: Ramp) {
        for &n in nodes {
            self.constrain(self.dof(n, field), ramp);
        }
    }

    pub fn constraints(&self) -> impl Iterator<Item = (usize, Ramp)> + '_ {
        self.constraints.iter().map(|(&d, &r)| (d, r))
    }

    pub fn is_constrained(&self, dof: usize) -> bool {
        self.constraints.contains_key(&dof)
    }

    pub fn free_mask(&self) -> Vec<bool> {
        (0..self.n_dofs()).map(|d| !self.constraints.contains_key(&d)).collect()
    }

    /// Writes the prescribed values at load level `load` into `x`
    pub fn apply(&self, x: &mut [f64], load: f64) {
        for (&d, r) in &self.constraints {
            x[d] = r.value(load);
        }
    }
}
