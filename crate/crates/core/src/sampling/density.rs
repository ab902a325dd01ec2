use crate::error::{Error, Result};
use crate::network::{AiqnModel, TauMode};

/// Half-width of the central difference in the finite-difference column.
pub const DENSITY_FD_STEP: f64 = 1e-4;

/// Derivatives at or below this are too flat to invert into a density.
pub const DENSITY_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityRow {
    pub tau: f64,
    /// `∂Q/∂τ` from a reverse pass.
    pub exact: f64,
    pub finite_difference: f64,
    /// `1 / exact`, or `None` where `exact ≤ DENSITY_FLOOR`.
    pub density: Option<f64>,
}

/// Quantile-density of dimension `dim` along a `tau` grid, conditioned on the
/// earlier entries of `x`. Other levels are held at 0.5; in shared mode the
/// level of column 0 moves with `tau`.
pub fn quantile_density_report(
    model: &AiqnModel,
    x: &[f64],
    taus: &[f64],
    dim: usize,
    ctx: Option<&[f64]>,
) -> Result<Vec<DensityRow>> {
    let n = model.n();
    if x.len() != n {
        return Err(Error::domain(format!("x has length {}, model expects {n}", x.len())));
    }
    if dim >= n {
        return Err(Error::domain(format!("dimension {dim} out of range")));
    }
    let mut rows = Vec::with_capacity(taus.len());
    for &t in taus {
        if !(t > 0.0 && t < 1.0) {
            return Err(Error::domain(format!("tau {t} must lie in (0, 1)")));
        }
        let mut tau = vec![0.5; n];
        tau[dim] = t;
        if model.spec().tau_mode == TauMode::Shared {
            tau[0] = t;
        }
        let exact = model.dquantile_dtau(x, &tau, ctx, dim)?;
        let finite_difference = model.dquantile_dtau_fd(x, &tau, ctx, dim, DENSITY_FD_STEP)?;
        let density = (exact > DENSITY_FLOOR).then(|| 1.0 / exact);
        rows.push(DensityRow { tau: t, exact, finite_difference, density });
    }
    Ok(rows)
}
