//! D2Q5 BGK lattice-Boltzmann solver for a scalar wave equation.
//!
//! The equilibrium weights `a0` (rest) and `a` (links) set the modelled wave
//! speed `(Δh/Δt)·sqrt(2a)`, which lets two wave equations with different
//! speeds share one lattice and one time step. Relaxation uses `τ = Δt/2`,
//! so collision reduces to `f* = 2·f_eq − f`.

use thiserror::Error;

use crate::fields::Material;
use crate::lattice::{Lattice, OPPOSITE};
use crate::sweep::{for_each_mut, Execution};
use crate::Vec2;

pub const Q: usize = 5;

/// Unit lattice directions; the lattice velocities are `c · UNIT_VELOCITIES[α]`.
pub const UNIT_VELOCITIES: [Vec2; Q] = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]];

pub type Populations = [f64; Q];

#[derive(Debug, Error, PartialEq)]
pub enum LbmError {
    #[error("rest weight a0 must lie in [0, 1), got {0}")]
    RestWeight(f64),
    #[error("lattice spacing must be positive, got {0}")]
    Spacing(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbmParams {
    pub a0: f64,
    pub a: f64,
    pub b: f64,
    pub dt: f64,
    pub dh: f64,
}

impl LbmParams {
    /// Parameters with link weight `a = (1 − a0)/4` and `b = 1`.
    pub fn from_rest_weight(a0: f64, dt: f64, dh: f64) -> Self {
        Self {
            a0,
            a: 0.25 * (1.0 - a0),
            b: 1.0,
            dt,
            dh,
        }
    }

    /// Lattice speed `c = Δh/Δt`.
    pub fn c(&self) -> f64 {
        self.dh / self.dt
    }

    pub fn tau(&self) -> f64 {
        0.5 * self.dt
    }

    pub fn wave_speed(&self) -> f64 {
        self.c() * (2.0 * self.a).sqrt()
    }

    /// Courant number `wave_speed·Δt/Δh = sqrt(2a)`.
    pub fn courant(&self) -> f64 {
        (2.0 * self.a).sqrt()
    }
}

/// Parameters for the dilatation (φ) and rotation (ψ) fields sharing Δh and Δt.
///
/// The φ field runs at `c_d` with `a_φ = (1 − a0_φ)/4`; the ψ field reuses the
/// same time step with `a_ψ = (c_s/c_d)² · a_φ`.
pub fn derive_lbm_params(material: &Material, dh: f64, a0_phi: f64) -> Result<(LbmParams, LbmParams), LbmError> {
    if !(0.0..1.0).contains(&a0_phi) {
        return Err(LbmError::RestWeight(a0_phi));
    }
    if !(dh > 0.0 && dh.is_finite()) {
        return Err(LbmError::Spacing(dh));
    }
    let a_phi = 0.25 * (1.0 - a0_phi);
    let ratio2 = material.mu / (material.lambda + 2.0 * material.mu);
    let a_psi = ratio2 * a_phi;
    let dt = dh / material.c_d() * (2.0 * a_phi).sqrt();
    let phi = LbmParams {
        a0: a0_phi,
        a: a_phi,
        b: 1.0,
        dt,
        dh,
    };
    let psi = LbmParams {
        a0: 1.0 - 4.0 * a_psi,
        a: a_psi,
        b: 1.0,
        dt,
        dh,
    };
    Ok((phi, psi))
}

/// Equilibrium populations for a macroscopic value and flux `J`.
#[inline]
pub fn equilibrium(value: f64, j: Vec2, p: &LbmParams) -> Populations {
    let flux = p.b / (2.0 * p.c());
    let link = p.a * value;
    [
        p.a0 * value,
        link + flux * j[0],
        link + flux * j[1],
        link - flux * j[0],
        link - flux * j[1],
    ]
}

/// Zeroth and first moments `(Σ f, Σ c^α f^α)`.
#[inline]
pub fn moments(f: &Populations, c: f64) -> (f64, Vec2) {
    let value = f[0] + f[1] + f[2] + f[3] + f[4];
    (value, [c * (f[1] - f[3]), c * (f[2] - f[4])])
}

/// BGK collision with `Δt/τ = 2`.
#[inline]
pub fn collide_node(f: &Populations, p: &LbmParams) -> Populations {
    let (value, j) = moments(f, p.c());
    let eq = equilibrium(value, j, p);
    let mut out = [0.0; Q];
    for alpha in 0..Q {
        out[alpha] = 2.0 * eq[alpha] - f[alpha];
    }
    out
}

/// Populations of one scalar wave field over a lattice, double buffered.
#[derive(Debug, Clone)]
pub struct WaveLbmField {
    pub params: LbmParams,
    populations: Vec<Populations>,
    post: Vec<Populations>,
}

impl WaveLbmField {
    pub fn zeros(lattice: &Lattice, params: LbmParams) -> Self {
        Self {
            params,
            populations: vec![[0.0; Q]; lattice.len()],
            post: vec![[0.0; Q]; lattice.len()],
        }
    }

    /// Equilibrium initialisation from a scalar field with `J = 0`.
    pub fn at_rest(lattice: &Lattice, params: LbmParams, values: &[f64]) -> Self {
        let mut field = Self::zeros(lattice, params);
        for k in 0..lattice.len() {
            if lattice.is_material(k) {
                field.populations[k] = equilibrium(values[k], [0.0; 2], &params);
            }
        }
        field
    }

    pub fn populations(&self) -> &[Populations] {
        &self.populations
    }

    pub fn populations_mut(&mut self) -> &mut [Populations] {
        &mut self.populations
    }

    /// Post-collision buffer filled by the last [`collide`](Self::collide).
    pub fn post_collision(&self) -> &[Populations] {
        &self.post
    }

    pub fn post_collision_mut(&mut self) -> &mut [Populations] {
        &mut self.post
    }

    pub fn value(&self, k: usize) -> f64 {
        moments(&self.populations[k], self.params.c()).0
    }

    pub fn flux(&self, k: usize) -> Vec2 {
        moments(&self.populations[k], self.params.c()).1
    }

    /// Writes `2·f_eq − f` for every material node into the post-collision buffer.
    pub fn collide(&mut self, lattice: &Lattice, exec: Execution) {
        let params = self.params;
        let current = &self.populations;
        for_each_mut(exec, &mut self.post, |k, out| {
            if lattice.is_material(k) {
                *out = collide_node(&current[k], &params);
            }
        });
    }

    /// Pull streaming from the post-collision buffer into every material node.
    ///
    /// A link with no material source leaves the node's own post-collision
    /// value in place.
    pub fn stream(&mut self, lattice: &Lattice, exec: Execution) {
        self.stream_where(lattice, exec, |_| true);
    }

    /// Streaming restricted to destinations accepted by `dest`.
    pub fn stream_where(&mut self, lattice: &Lattice, exec: Execution, dest: impl Fn(usize) -> bool + Sync) {
        let post = &self.post;
        for_each_mut(exec, &mut self.populations, |k, f| {
            if !lattice.is_material(k) || !dest(k) {
                return;
            }
            f[0] = post[k][0];
            for alpha in 1..Q {
                f[alpha] = match lattice.neighbor(k, OPPOSITE[alpha]) {
                    Some(src) => post[src][alpha],
                    None => post[k][alpha],
                };
            }
        });
    }

    /// Macroscopic value and flux at every node (zero at Outside nodes).
    pub fn macro_moments(&self, lattice: &Lattice) -> (Vec<f64>, Vec<Vec2>) {
        let c = self.params.c();
        let mut values = vec![0.0; lattice.len()];
        let mut fluxes = vec![[0.0; 2]; lattice.len()];
        for k in 0..lattice.len() {
            if lattice.is_material(k) {
                let (v, j) = moments(&self.populations[k], c);
                values[k] = v;
                fluxes[k] = j;
            }
        }
        (values, fluxes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn params(a0: f64) -> LbmParams {
        LbmParams::from_rest_weight(a0, 0.5, 1.0)
    }

    #[test]
    fn reference_parameter_set() {
        let m = Material::from_wave_speeds(1.0, 1.0, 1.0 / 3f64.sqrt()).unwrap();
        let dh = 0.01;
        let (phi, psi) = derive_lbm_params(&m, dh, 0.9999).unwrap();
        assert_abs_diff_eq!(phi.a, 2.5e-5, epsilon = 1e-17);
        assert_abs_diff_eq!(psi.a, 2.5e-5 / 3.0, epsilon = 1e-17);
        assert_abs_diff_eq!(psi.a0, 1.0 - 1e-4 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(phi.dt * m.c_d() / dh, 5e-5f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(phi.wave_speed(), m.c_d(), epsilon = 1e-12);
        assert_abs_diff_eq!(psi.wave_speed(), m.c_s(), epsilon = 1e-12);
        assert_eq!(phi.dt, psi.dt);
    }

    #[test]
    fn stability_endpoint() {
        let m = Material::new(1.0, 1.0, 1.0).unwrap();
        let (phi, _) = derive_lbm_params(&m, 1.0, 0.0).unwrap();
        assert_eq!(phi.a, 0.25);
        assert_abs_diff_eq!(phi.dt, 0.5f64.sqrt() / m.c_d(), epsilon = 1e-15);
        assert_abs_diff_eq!(phi.courant(), 0.5f64.sqrt(), epsilon = 1e-15);
        assert!(derive_lbm_params(&m, 1.0, 1.0).is_err());
        assert!(derive_lbm_params(&m, 1.0, -0.1).is_err());
    }

    #[test]
    fn equal_wave_speeds_share_weights() {
        // lambda = 0 gives c_s/c_d = 1/sqrt(2); scaling mu keeps the ratio, so
        // compare against the ratio directly.
        let m = Material::new(0.0, 2.0, 1.0).unwrap();
        let (phi, psi) = derive_lbm_params(&m, 1.0, 0.6).unwrap();
        let r2 = m.c_s().powi(2) / m.c_d().powi(2);
        assert_abs_diff_eq!(psi.a, r2 * phi.a, epsilon = 1e-16);
    }

    #[test]
    fn equilibrium_examples() {
        let mut p = params(0.6);
        assert_eq!(p.a, 0.1);
        let f = equilibrium(1.0, [0.0, 0.0], &p);
        for (got, want) in f.iter().zip([0.6, 0.1, 0.1, 0.1, 0.1]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-15);
        }
        let c = p.c();
        let f = equilibrium(0.0, [0.7, 0.0], &p);
        assert_abs_diff_eq!(f[1], 0.7 / (2.0 * c), epsilon = 1e-15);
        assert_abs_diff_eq!(f[3], -0.7 / (2.0 * c), epsilon = 1e-15);
        assert_eq!([f[0], f[2], f[4]], [0.0; 3]);
        let (v, j) = moments(&f, c);
        assert_abs_diff_eq!(v, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(j[0], 0.7, epsilon = 1e-15);

        p = params(0.0);
        let f = equilibrium(2.0, [c, -c], &p);
        for (got, want) in f.iter().zip([0.0, 1.0, 0.0, 0.0, 1.0]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-15);
        }
        let (v, j) = moments(&f, c);
        assert_abs_diff_eq!(v, 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(j[0], c, epsilon = 1e-15);
        assert_abs_diff_eq!(j[1], -c, epsilon = 1e-15);
    }

    #[test]
    fn equilibrium_is_fixed_point() {
        let p = params(0.3);
        let f = equilibrium(0.8, [0.2, -0.1], &p);
        let g = collide_node(&f, &p);
        for a in 0..Q {
            assert_abs_diff_eq!(f[a], g[a], epsilon = 1e-15);
        }
    }

    #[test]
    fn single_perturbation() {
        // Independent evaluation of f − (Δt/τ)(f − f_eq) with explicit sums.
        let p = params(0.6);
        let c = p.c();
        let delta = 0.05;
        let mut f = equilibrium(1.0, [0.0, 0.0], &p);
        f[1] += delta;
        let value: f64 = f.iter().sum();
        let jx = c * f[1] - c * f[3];
        let jy = c * f[2] - c * f[4];
        let feq = [
            p.a0 * value,
            p.a * value + jx / (2.0 * c),
            p.a * value + jy / (2.0 * c),
            p.a * value - jx / (2.0 * c),
            p.a * value - jy / (2.0 * c),
        ];
        let ratio = p.dt / p.tau();
        let expected: Vec<f64> = (0..Q).map(|a| f[a] - ratio * (f[a] - feq[a])).collect();
        let got = collide_node(&f, &p);
        for a in 0..Q {
            assert_abs_diff_eq!(got[a], expected[a], epsilon = 1e-15);
        }
        // f¹ picks up −δ plus the equilibrium shift from the perturbed moments.
        let shift = 2.0 * (p.a * delta + delta / 2.0);
        assert_abs_diff_eq!(got[1], 2.0 * p.a - (p.a + delta) + shift, epsilon = 1e-15);
    }

    #[test]
    fn streaming_moves_pulses() {
        let l = Lattice::periodic(5, 4, 1.0);
        let p = params(0.5);
        let mut field = WaveLbmField::zeros(&l, p);
        let k = l.index(2, 1);
        field.post_collision_mut()[k][1] = 1.0;
        field.post_collision_mut()[k][2] = 2.0;
        field.stream(&l, Execution::Serial);
        assert_eq!(field.populations()[l.index(3, 1)][1], 1.0);
        assert_eq!(field.populations()[l.index(2, 2)][2], 2.0);
        let total: f64 = field.populations().iter().flatten().sum();
        assert_eq!(total, 3.0);
    }

    #[test]
    fn uniform_field_is_stationary() {
        let l = Lattice::periodic(6, 6, 1.0);
        let p = params(0.2);
        let mut field = WaveLbmField::at_rest(&l, p, &vec![1.5; l.len()]);
        let before = field.populations().to_vec();
        for _ in 0..10 {
            field.collide(&l, Execution::Serial);
            field.stream(&l, Execution::Serial);
        }
        for (a, b) in before.iter().zip(field.populations()) {
            for q in 0..Q {
                assert_abs_diff_eq!(a[q], b[q], epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn macro_moments_of_equilibrium() {
        let l = Lattice::periodic(3, 3, 1.0);
        let p = params(0.4);
        let mut field = WaveLbmField::zeros(&l, p);
        let (v, j) = field.macro_moments(&l);
        assert!(v.iter().all(|&x| x == 0.0) && j.iter().all(|x| *x == [0.0, 0.0]));
        field.populations_mut()[4] = equilibrium(0.3, [0.1, 0.2], &p);
        let (v, j) = field.macro_moments(&l);
        assert_abs_diff_eq!(v[4], 0.3, epsilon = 1e-15);
        assert_abs_diff_eq!(j[4][0], 0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(j[4][1], 0.2, epsilon = 1e-15);
    }
}
