//! Potential-driven assembly: every element contributes a scalar with its
//! exact gradient and Hessian, scattered into a global symmetric system.

use super::sparse::SymSparse;
use crate::error::{Error, Result};

/// Value, gradient and Hessian of an element potential in its local DOFs
pub type LocalEval = (f64, Vec<f64>, Vec<Vec<f64>>);

/// Assembled incremental potential with residual and tangent
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub hessian: SymSparse,
    /// Largest element-level |K_ij − K_ji| relative to the element max
    pub max_asymmetry: f64,
}

/// Relative element asymmetry above which assembly fails
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Element-to-DOF incidence with the matching sparsity pattern
#[derive(Clone, Debug)]
pub struct Assembler {
    n_dofs: usize,
    elements: Vec<Vec<usize>>,
    pattern: SymSparse,
}

impl Assembler {
    pub fn new(n_dofs: usize, elements: Vec<Vec<usize>>) -> Self {
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); n_dofs];
        for dofs in &elements {
            for &i in dofs {
                for &j in dofs {
                    if j <= i {
                        rows[i].push(j);
                    }
                }
            }
        }
        let pattern = SymSparse::from_rows(n_dofs, rows);
        Assembler { n_dofs, elements, pattern }
    }

    pub fn n_dofs(&self) -> usize {
        self.n_dofs
    }

    pub fn elements(&self) -> &[Vec<usize>] {
        &self.elements
    }

    /// Sums the element potentials evaluated by `local(element, local_values)`
    pub fn assemble<F>(&self, x: &[f64], mut local: F) -> Result<Evaluation>
    where
        F: FnMut(usize, &[f64]) -> Result<LocalEval>,
    {
        let mut value = 0.0;
        let mut gradient = vec![0.0; self.n_dofs];
        let mut hessian = self.pattern.clone();
        let mut max_asymmetry: f64 = 0.0;
        let mut xl = Vec::new();
        for (e, dofs) in self.elements.iter().enumerate() {
            xl.clear();
            xl.extend(dofs.iter().map(|&d| x[d]));
            let (v, g, h) = local(e, &xl)?;
            value += v;
            let scale = h.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
            for (a, &i) in dofs.iter().enumerate() {
                gradient[i] += g[a];
                for (b, &j) in dofs.iter().enumerate() {
                    if b < a {
                        max_asymmetry = max_asymmetry.max((h[a][b] - h[b][a]).abs() / scale);
                    }
                    // slots sharing a global DOF (periodic wrap) add both mirror terms
                    if j <= i {
                        hessian.add(i, j, h[a][b]);
                    }
                }
            }
        }
        if max_asymmetry > SYMMETRY_TOL {
            return Err(Error::AsymmetricTangent(max_asymmetry));
        }
        Ok(Evaluation { value, gradient, hessian, max_asymmetry })
    }
}
