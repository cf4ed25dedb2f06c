//! Direct finite-difference solver for the Navier-Cauchy equations.
//!
//! Shares the lattice, boundary cells, boundary accelerations and Newmark
//! update with the lattice-Boltzmann solver, so differences between the two
//! come from the interior treatment only.
//!
//! `ρü_x = (λ+2μ)u_x,xx + μu_x,yy + (λ+μ)u_y,xy`
//! `ρü_y = μu_y,xx + (λ+2μ)u_y,yy + (λ+μ)u_x,xy`
//!
//! Pure second derivatives use the compact three-point stencil, mixed
//! derivatives apply the per-node first-derivative stencils twice.

use crate::elastodyn::{KinematicState, NodeRule, Problem, SetupError, StepError};
use crate::fields::{Sym2, TensorField, VectorField};
use crate::lattice::{Lattice, NodeClass};
use crate::sweep::{for_each_mut, Execution};
use crate::Vec2;

/// Default time step as a fraction of `Δh / c_d`.
pub const DEFAULT_COURANT: f64 = 0.4;
/// Largest accepted `c_d Δt / Δh`.
pub const MAX_COURANT: f64 = 0.5;

#[derive(Debug, Clone)]
pub struct OracleState {
    pub kin: KinematicState,
    pub step: u64,
    grad: Vec<[Vec2; 2]>,
    sigma: TensorField,
    a_old: VectorField,
}

#[derive(Debug, Clone)]
pub struct OracleSolver<'a> {
    problem: &'a Problem,
    dt: f64,
    exec: Execution,
    dirichlet: Vec<bool>,
}

impl<'a> OracleSolver<'a> {
    pub fn new(problem: &'a Problem) -> Result<Self, SetupError> {
        let dt = DEFAULT_COURANT * problem.lattice.spacing() / problem.material.c_d();
        Self::with_dt(problem, dt)
    }

    pub fn with_dt(problem: &'a Problem, dt: f64) -> Result<Self, SetupError> {
        let limit = MAX_COURANT * problem.lattice.spacing() / problem.material.c_d();
        if !(dt > 0.0 && dt <= limit) {
            return Err(SetupError::Cfl { dt, limit });
        }
        let mut dirichlet = vec![false; problem.lattice.len()];
        for (cell, rule) in problem.boundary.cells().iter().zip(problem.boundary.rules()) {
            dirichlet[cell.node] = matches!(rule, NodeRule::Dirichlet(_));
        }
        Ok(Self {
            problem,
            dt,
            exec: Execution::Serial,
            dirichlet,
        })
    }

    pub fn with_execution(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn initialize_at_rest(&self) -> Result<OracleState, SetupError> {
        self.initialize(KinematicState::at_rest(self.problem.lattice.len()))
    }

    pub fn initialize(&self, kin: KinematicState) -> Result<OracleState, SetupError> {
        let lattice = &self.problem.lattice;
        if lattice.count(NodeClass::Interior) == 0 {
            return Err(SetupError::NoInterior);
        }
        let n = lattice.len();
        for len in [kin.u.len(), kin.v.len(), kin.a.len()] {
            if len != n {
                return Err(SetupError::StateSize { expected: n, got: len });
            }
        }
        Ok(OracleState {
            kin,
            step: 0,
            grad: vec![[[0.0; 2]; 2]; n],
            sigma: vec![Sym2::default(); n],
            a_old: vec![[0.0; 2]; n],
        })
    }

    /// Navier-Cauchy acceleration of `u` at Interior and SecondRow nodes,
    /// zero elsewhere.
    pub fn navier_acceleration(&self, u: &[Vec2]) -> VectorField {
        let n = self.problem.lattice.len();
        let mut grad = vec![[[0.0; 2]; 2]; n];
        let mut a = vec![[0.0; 2]; n];
        self.interior_into(u, &mut grad, &mut a);
        a
    }

    fn interior_into(&self, u: &[Vec2], grad: &mut [[Vec2; 2]], acc: &mut [Vec2]) {
        let lattice = &self.problem.lattice;
        let m = &self.problem.material;
        let (l2m, mu, lpm) = (m.lambda + 2.0 * m.mu, m.mu, m.lambda + m.mu);
        let inv_rho = 1.0 / m.rho;
        let inv_h2 = 1.0 / (lattice.spacing() * lattice.spacing());
        for_each_mut(self.exec, grad, |k, g| {
            if lattice.is_material(k) {
                *g = [lattice.stencil(k, 0).apply_vec(u), lattice.stencil(k, 1).apply_vec(u)];
            }
        });
        let grad: &[[Vec2; 2]] = grad;
        for_each_mut(self.exec, acc, |k, a| {
            if !matches!(lattice.class(k), NodeClass::Interior | NodeClass::SecondRow) {
                return;
            }
            let uxx = second_difference(lattice, u, k, 1, 3, inv_h2);
            let uyy = second_difference(lattice, u, k, 2, 4, inv_h2);
            // x-derivative of the y-gradient
            let sx = lattice.stencil(k, 0);
            let mut uxy = [0.0; 2];
            for (node, w) in sx.nodes.iter().zip(sx.weights) {
                uxy[0] += w * grad[*node][1][0];
                uxy[1] += w * grad[*node][1][1];
            }
            a[0] = inv_rho * (l2m * uxx[0] + mu * uyy[0] + lpm * uxy[1]);
            a[1] = inv_rho * (mu * uxx[1] + l2m * uyy[1] + lpm * uxy[0]);
        });
    }

    /// Displacement update as in the LBM solver; velocities of dynamic nodes
    /// use the mean of the old and new accelerations, Dirichlet nodes the old
    /// one so they land on the prescribed displacement.
    pub fn step(&self, s: &mut OracleState) -> Result<(), StepError> {
        let p = self.problem;
        let lattice = &p.lattice;
        let dt = self.dt;
        self.interior_into(&s.kin.u, &mut s.grad, &mut s.kin.a);
        p.boundary
            .accelerations(lattice, &p.material, &p.bc, &mut s.kin, dt, &mut s.sigma);
        s.a_old.copy_from_slice(&s.kin.a);

        let half = 0.5 * dt * dt;
        {
            let (v, a) = (&s.kin.v, &s.kin.a);
            for_each_mut(self.exec, &mut s.kin.u, |k, u| {
                if lattice.is_material(k) {
                    u[0] += dt * v[k][0] + half * a[k][0];
                    u[1] += dt * v[k][1] + half * a[k][1];
                }
            });
        }
        s.step += 1;
        s.kin.t = s.step as f64 * dt;

        self.interior_into(&s.kin.u, &mut s.grad, &mut s.kin.a);
        p.boundary
            .accelerations(lattice, &p.material, &p.bc, &mut s.kin, dt, &mut s.sigma);
        {
            let (a_old, a_new) = (&s.a_old, &s.kin.a);
            let dirichlet = &self.dirichlet;
            for_each_mut(self.exec, &mut s.kin.v, |k, v| {
                if !lattice.is_material(k) {
                    return;
                }
                if dirichlet[k] {
                    v[0] += dt * a_old[k][0];
                    v[1] += dt * a_old[k][1];
                } else {
                    v[0] += 0.5 * dt * (a_old[k][0] + a_new[k][0]);
                    v[1] += 0.5 * dt * (a_old[k][1] + a_new[k][1]);
                }
            });
        }
        self.check_finite(s)
    }

    fn check_finite(&self, s: &OracleState) -> Result<(), StepError> {
        let lattice = &self.problem.lattice;
        for k in 0..lattice.len() {
            let u = s.kin.u[k];
            if lattice.is_material(k) && !(u[0].is_finite() && u[1].is_finite()) {
                let (i, j) = lattice.coords(k);
                return Err(StepError::NonFinite {
                    step: s.step,
                    time: s.kin.t,
                    node: k,
                    i,
                    j,
                    quantity: "displacement",
                });
            }
        }
        Ok(())
    }
}

/// `(u[+] − 2u[k] + u[−]) / h²` along one axis; every interior node has both
/// neighbors.
#[inline]
fn second_difference(lattice: &Lattice, u: &[Vec2], k: usize, plus: usize, minus: usize, inv_h2: f64) -> Vec2 {
    match (lattice.neighbor(k, plus), lattice.neighbor(k, minus)) {
        (Some(p), Some(m)) => [
            (u[p][0] - 2.0 * u[k][0] + u[m][0]) * inv_h2,
            (u[p][1] - 2.0 * u[k][1] + u[m][1]) * inv_h2,
        ],
        _ => [0.0; 2],
    }
}
