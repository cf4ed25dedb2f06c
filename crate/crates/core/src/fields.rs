//! Finite-difference kernels on the lattice: divergence, curl, gradients and
//! Hooke stress.
//!
//! All kernels use the per-node stencils precomputed by [`Lattice`]: central
//! differences where both D2Q5 neighbors exist, one-sided three-point
//! stencils otherwise. Outside nodes are never read and hold zero in every
//! returned field.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::Lattice;
use crate::Vec2;

pub type ScalarField = Vec<f64>;
pub type VectorField = Vec<Vec2>;
pub type TensorField = Vec<Sym2>;

#[derive(Debug, Error, PartialEq)]
pub enum FieldError {
    #[error("lattice has {count} nodes along axis {axis}; at least 3 are needed")]
    TooFewNodes { axis: usize, count: usize },
    #[error("field has {got} entries, lattice has {expected} nodes")]
    SizeMismatch { expected: usize, got: usize },
}

#[derive(Debug, Error, PartialEq)]
pub enum MaterialError {
    #[error("material requires mu > 0, lambda >= 0, rho > 0 (got mu={mu}, lambda={lambda}, rho={rho})")]
    OutOfRange { lambda: f64, mu: f64, rho: f64 },
    #[error("wave speed ratio c_s/c_d must lie in (0, 1/sqrt(2)], got {0}")]
    BadRatio(f64),
}

/// Isotropic linear elastic material (Lamé parameters and density).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Material {
    pub lambda: f64,
    pub mu: f64,
    pub rho: f64,
}

impl Material {
    pub fn new(lambda: f64, mu: f64, rho: f64) -> Result<Self, MaterialError> {
        let ok = [lambda, mu, rho].iter().all(|v| v.is_finite()) && mu > 0.0 && lambda >= 0.0 && rho > 0.0;
        if !ok {
            return Err(MaterialError::OutOfRange { lambda, mu, rho });
        }
        Ok(Self { lambda, mu, rho })
    }

    /// Material from shear modulus, shear wave speed and the ratio `c_s / c_d`.
    pub fn from_wave_speeds(mu: f64, c_s: f64, ratio: f64) -> Result<Self, MaterialError> {
        // lambda >= 0 requires c_d^2 >= 2 c_s^2.
        if !(ratio > 0.0 && ratio <= std::f64::consts::FRAC_1_SQRT_2 + 1e-15) {
            return Err(MaterialError::BadRatio(ratio));
        }
        let rho = mu / (c_s * c_s);
        let c_d = c_s / ratio;
        let lambda = (rho * c_d * c_d - 2.0 * mu).max(0.0);
        Self::new(lambda, mu, rho)
    }

    /// Dilatational wave speed `sqrt((λ + 2μ)/ρ)`.
    pub fn c_d(&self) -> f64 {
        ((self.lambda + 2.0 * self.mu) / self.rho).sqrt()
    }

    /// Shear wave speed `sqrt(μ/ρ)`.
    pub fn c_s(&self) -> f64 {
        (self.mu / self.rho).sqrt()
    }

    pub fn hooke(&self, strain: Sym2) -> Sym2 {
        let tr = strain.xx + strain.yy;
        Sym2 {
            xx: self.lambda * tr + 2.0 * self.mu * strain.xx,
            yy: self.lambda * tr + 2.0 * self.mu * strain.yy,
            xy: 2.0 * self.mu * strain.xy,
        }
    }

    /// Strain producing `stress` under plane strain.
    pub fn compliance(&self, stress: Sym2) -> Sym2 {
        let (l, m) = (self.lambda, self.mu);
        let tr_strain = (stress.xx + stress.yy) / (2.0 * (l + m));
        Sym2 {
            xx: (stress.xx - l * tr_strain) / (2.0 * m),
            yy: (stress.yy - l * tr_strain) / (2.0 * m),
            xy: stress.xy / (2.0 * m),
        }
    }
}

/// Symmetric 2×2 tensor.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Sym2 {
    pub xx: f64,
    pub yy: f64,
    pub xy: f64,
}

impl Sym2 {
    #[inline]
    pub fn dot(&self, n: Vec2) -> Vec2 {
        [self.xx * n[0] + self.xy * n[1], self.xy * n[0] + self.yy * n[1]]
    }

    #[inline]
    pub fn mean(&self, other: &Sym2) -> Sym2 {
        Sym2 {
            xx: 0.5 * (self.xx + other.xx),
            yy: 0.5 * (self.yy + other.yy),
            xy: 0.5 * (self.xy + other.xy),
        }
    }
}

fn check(lattice: &Lattice, len: usize) -> Result<(), FieldError> {
    if len != lattice.len() {
        return Err(FieldError::SizeMismatch {
            expected: lattice.len(),
            got: len,
        });
    }
    for (axis, count) in [(0, lattice.nx()), (1, lattice.ny())] {
        if count < 3 {
            return Err(FieldError::TooFewNodes { axis, count });
        }
    }
    Ok(())
}

fn per_material<T: Copy + Default>(lattice: &Lattice, f: impl Fn(usize) -> T) -> Vec<T> {
    (0..lattice.len())
        .map(|k| if lattice.is_material(k) { f(k) } else { T::default() })
        .collect()
}

/// `∂u_x/∂x + ∂u_y/∂y` at one node.
#[inline]
pub fn div_at(lattice: &Lattice, u: &[Vec2], k: usize) -> f64 {
    lattice.stencil(k, 0).apply_vec(u)[0] + lattice.stencil(k, 1).apply_vec(u)[1]
}

/// `∂u_y/∂x − ∂u_x/∂y` at one node.
#[inline]
pub fn curl_at(lattice: &Lattice, u: &[Vec2], k: usize) -> f64 {
    lattice.stencil(k, 0).apply_vec(u)[1] - lattice.stencil(k, 1).apply_vec(u)[0]
}

#[inline]
pub fn grad_at(lattice: &Lattice, s: &[f64], k: usize) -> Vec2 {
    [lattice.stencil(k, 0).apply(s), lattice.stencil(k, 1).apply(s)]
}

/// `∇ × (ψ e_z) = (∂ψ/∂y, −∂ψ/∂x)` at one node.
#[inline]
pub fn curl_out_of_plane_at(lattice: &Lattice, psi: &[f64], k: usize) -> Vec2 {
    [lattice.stencil(k, 1).apply(psi), -lattice.stencil(k, 0).apply(psi)]
}

#[inline]
pub fn strain_at(lattice: &Lattice, u: &[Vec2], k: usize) -> Sym2 {
    let dx = lattice.stencil(k, 0).apply_vec(u);
    let dy = lattice.stencil(k, 1).apply_vec(u);
    Sym2 {
        xx: dx[0],
        yy: dy[1],
        xy: 0.5 * (dy[0] + dx[1]),
    }
}

#[inline]
pub fn stress_at(lattice: &Lattice, material: &Material, u: &[Vec2], k: usize) -> Sym2 {
    material.hooke(strain_at(lattice, u, k))
}

pub fn div2d(u: &[Vec2], lattice: &Lattice) -> Result<ScalarField, FieldError> {
    check(lattice, u.len())?;
    Ok(per_material(lattice, |k| div_at(lattice, u, k)))
}

pub fn curl2d(u: &[Vec2], lattice: &Lattice) -> Result<ScalarField, FieldError> {
    check(lattice, u.len())?;
    Ok(per_material(lattice, |k| curl_at(lattice, u, k)))
}

pub fn grad_scalar(s: &[f64], lattice: &Lattice) -> Result<VectorField, FieldError> {
    check(lattice, s.len())?;
    Ok(per_material(lattice, |k| grad_at(lattice, s, k)))
}

pub fn curl_out_of_plane(psi: &[f64], lattice: &Lattice) -> Result<VectorField, FieldError> {
    check(lattice, psi.len())?;
    Ok(per_material(lattice, |k| curl_out_of_plane_at(lattice, psi, k)))
}

pub fn stress(u: &[Vec2], material: &Material, lattice: &Lattice) -> Result<TensorField, FieldError> {
    check(lattice, u.len())?;
    Ok(per_material(lattice, |k| stress_at(lattice, material, u, k)))
}
