use serde::Serialize;

use crate::error::{Error, Result};
use crate::forms::DiscreteForm;

#[derive(Clone, Debug, Serialize)]
pub struct GreenColumn {
    pub pole_node: usize,
    /// `G(x, pole)` over all nodes.
    pub values: Vec<f64>,
}

/// Solves `K g = e_pole`, the Galerkin system for a unit point mass at the pole.
pub fn green_column(form: &DiscreteForm, pole: usize) -> Result<GreenColumn> {
    let k = *form
        .interior_index
        .get(pole)
        .ok_or_else(|| Error::InvalidArgument(format!("pole {pole} out of range")))?;
    if k == usize::MAX {
        return Err(Error::InvalidArgument(format!("pole {pole} is a Dirichlet node")));
    }
    let lu = form
        .k_int
        .lu()
        .map_err(|e| Error::SingularSystem(format!("stiffness matrix: {e}")))?;
    let mut rhs = vec![0.0; form.n_free()];
    rhs[k] = 1.0;
    let g = lu.solve(&rhs)?;
    let bad = g.iter().filter(|&&v| v <= 0.0).count();
    if bad > 0 {
        return Err(Error::SingularSystem(format!(
            "Green column has {bad} non-positive interior values; the form is not coercive"
        )));
    }
    Ok(GreenColumn { pole_node: pole, values: form.extend(&g) })
}
