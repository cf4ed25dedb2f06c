//! Plane-strain elastodynamics driven by two wave lattice-Boltzmann fields.
//!
//! The dilatation `φ = ∇·u` and rotation `ψ = (∇×u)·e_z` are advanced by
//! [`WaveLbmField`]s at speeds `c_d` and `c_s`. Interior accelerations follow
//! from `ü = c_d²∇φ − c_s²∇×(ψ e_z)`; boundary nodes get their acceleration
//! from a momentum balance over their clipped cell (traction boundaries) or
//! from the prescribed displacement (displacement boundaries). After the
//! explicit Newmark update the boundary populations are rebuilt from the
//! finite-difference divergence and curl of the new displacement, and links
//! leaving boundary nodes stream the average of the old and new boundary
//! states into the second row.
//!
//! One call to [`LbmSolver::step`] runs, in order: interior acceleration,
//! boundary acceleration, Newmark update, boundary field update and
//! population reset, collision with the modified boundary sources, streaming,
//! moment refresh and, every `sync_period` steps, synchronization.

use thiserror::Error;

use crate::fields::{self, FieldError, Material, Sym2, TensorField, VectorField};
use crate::lattice::{boundary_cells, BoundaryCell, Geometry, GeometryError, Lattice, NodeClass};
use crate::loads::{BoundaryConditions, EdgeCondition};
use crate::sweep::{for_each_mut, Execution};
use crate::wave_lbm::{self, collide_node, equilibrium, LbmError, LbmParams, Populations, WaveLbmField, Q};
use crate::Vec2;

#[derive(Debug, Error)]
pub enum SetupError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Lbm(#[from] LbmError),
    #[error("lattice has no interior node")]
    NoInterior,
    #[error("initial state has {got} nodes, lattice has {expected}")]
    StateSize { expected: usize, got: usize },
    #[error("explicit time step {dt:.3e} exceeds the stability limit {limit:.3e}")]
    Cfl { dt: f64, limit: f64 },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StepError {
    #[error("non-finite {quantity} at step {step} (t = {time:.6e}), node {node} = ({i}, {j})")]
    NonFinite {
        step: u64,
        time: f64,
        node: usize,
        i: usize,
        j: usize,
        quantity: &'static str,
    },
}

/// Displacement, velocity and acceleration at every node.
#[derive(Debug, Clone, PartialEq)]
pub struct KinematicState {
    pub u: VectorField,
    pub v: VectorField,
    pub a: VectorField,
    pub t: f64,
}

impl KinematicState {
    pub fn at_rest(n: usize) -> Self {
        Self {
            u: vec![[0.0; 2]; n],
            v: vec![[0.0; 2]; n],
            a: vec![[0.0; 2]; n],
            t: 0.0,
        }
    }
}

/// How a boundary node obtains its acceleration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NodeRule {
    /// Displacement prescribed by the given condition.
    Dirichlet(EdgeCondition),
    /// Momentum balance over the cell with tractions on its external segments.
    Neumann,
}

/// Boundary cells with their resolved conditions; shared by both solvers so
/// that boundary handling is identical between them.
#[derive(Debug, Clone)]
pub struct BoundaryHandler {
    cells: Vec<BoundaryCell>,
    rules: Vec<NodeRule>,
    stress_nodes: Vec<usize>,
}

impl BoundaryHandler {
    /// A node touching any displacement boundary is a Dirichlet node; this
    /// covers corners where displacement and traction edges meet.
    pub fn new(lattice: &Lattice, cells: Vec<BoundaryCell>, bc: &BoundaryConditions) -> Self {
        let rules = cells
            .iter()
            .map(|cell| {
                cell.external
                    .iter()
                    .map(|s| bc.get(s.boundary))
                    .find(EdgeCondition::is_dirichlet)
                    .map_or(NodeRule::Neumann, NodeRule::Dirichlet)
            })
            .collect::<Vec<_>>();
        let mut needed = vec![false; lattice.len()];
        for (cell, rule) in cells.iter().zip(&rules) {
            if *rule == NodeRule::Neumann {
                needed[cell.node] = true;
                for s in &cell.internal {
                    needed[s.neighbor] = true;
                }
            }
        }
        let stress_nodes = (0..lattice.len()).filter(|&k| needed[k]).collect();
        Self {
            cells,
            rules,
            stress_nodes,
        }
    }

    pub fn cells(&self) -> &[BoundaryCell] {
        &self.cells
    }

    pub fn rules(&self) -> &[NodeRule] {
        &self.rules
    }

    pub fn rule_of(&self, node: usize) -> Option<NodeRule> {
        self.cells
            .iter()
            .position(|c| c.node == node)
            .map(|i| self.rules[i])
    }

    /// Accelerations at all boundary nodes for the state at time `kin.t`.
    ///
    /// Displacement targets are evaluated at `kin.t + dt` so the Newmark
    /// update lands on them exactly.
    pub fn accelerations(
        &self,
        lattice: &Lattice,
        material: &Material,
        bc: &BoundaryConditions,
        kin: &mut KinematicState,
        dt: f64,
        sigma: &mut TensorField,
    ) {
        for &k in &self.stress_nodes {
            sigma[k] = fields::stress_at(lattice, material, &kin.u, k);
        }
        let t = kin.t;
        for (cell, rule) in self.cells.iter().zip(&self.rules) {
            let k = cell.node;
            kin.a[k] = match rule {
                NodeRule::Dirichlet(cond) => {
                    dirichlet_acceleration(cond.value_at(t + dt), kin.u[k], kin.v[k], dt)
                }
                NodeRule::Neumann => neumann_acceleration(cell, sigma, material, |seg| {
                    bc.get(seg.boundary).value_at(t)
                }),
            };
        }
    }
}

/// Cell momentum balance:
/// `ü = (Σ_r σ_kr·n_kr·l_kr + Σ_ext t*·l) / (ρ V_C)` with `σ_kr` the mean of
/// the stresses at the node and its neighbor, and tractions taken at the
/// segment midpoints.
pub fn neumann_acceleration(
    cell: &BoundaryCell,
    sigma: &[Sym2],
    material: &Material,
    traction: impl Fn(&crate::lattice::ExternalSegment) -> Vec2,
) -> Vec2 {
    let own = sigma[cell.node];
    let mut force = [0.0; 2];
    for s in &cell.internal {
        let f = own.mean(&sigma[s.neighbor]).dot(s.normal);
        force[0] += f[0] * s.length;
        force[1] += f[1] * s.length;
    }
    for s in &cell.external {
        let t = traction(s);
        force[0] += t[0] * s.length;
        force[1] += t[1] * s.length;
    }
    let inv_mass = 1.0 / (material.rho * cell.volume);
    [force[0] * inv_mass, force[1] * inv_mass]
}

/// Acceleration that carries `u` onto `target` in one Newmark step.
#[inline]
pub fn dirichlet_acceleration(target: Vec2, u: Vec2, v: Vec2, dt: f64) -> Vec2 {
    let k = 2.0 / (dt * dt);
    let c = 2.0 / dt;
    [k * (target[0] - u[0]) - c * v[0], k * (target[1] - u[1]) - c * v[1]]
}

/// Explicit Newmark update `u += Δt·u̇ + Δt²/2·ü`, `u̇ += Δt·ü` at material nodes.
/// Time is left to the caller.
pub fn newmark_integrate(kin: &mut KinematicState, lattice: &Lattice, dt: f64, exec: Execution) {
    let half = 0.5 * dt * dt;
    let (u, v, a) = (&mut kin.u, &mut kin.v, &kin.a);
    let velocities: &[Vec2] = v;
    for_each_mut(exec, u, |k, uk| {
        if lattice.is_material(k) {
            uk[0] += dt * velocities[k][0] + half * a[k][0];
            uk[1] += dt * velocities[k][1] + half * a[k][1];
        }
    });
    for_each_mut(exec, v, |k, vk| {
        if lattice.is_material(k) {
            vk[0] += dt * a[k][0];
            vk[1] += dt * a[k][1];
        }
    });
}

/// `c_d²∇φ − c_s²∇×(ψ e_z)` at Interior and SecondRow nodes, zero elsewhere.
pub fn interior_acceleration(phi: &[f64], psi: &[f64], material: &Material, lattice: &Lattice) -> VectorField {
    let cd2 = material.c_d().powi(2);
    let cs2 = material.c_s().powi(2);
    (0..lattice.len())
        .map(|k| match lattice.class(k) {
            NodeClass::Interior | NodeClass::SecondRow => interior_acceleration_at(lattice, phi, psi, cd2, cs2, k),
            _ => [0.0; 2],
        })
        .collect()
}

#[inline]
fn interior_acceleration_at(lattice: &Lattice, phi: &[f64], psi: &[f64], cd2: f64, cs2: f64, k: usize) -> Vec2 {
    let g = fields::grad_at(lattice, phi, k);
    let r = fields::curl_out_of_plane_at(lattice, psi, k);
    [cd2 * g[0] - cs2 * r[0], cd2 * g[1] - cs2 * r[1]]
}

/// Populations at a boundary node rebuilt from its new value and previous flux.
#[inline]
pub fn boundary_distribution_reset(value_new: f64, flux_old: Vec2, params: &LbmParams) -> Populations {
    equilibrium(value_new, flux_old, params)
}

/// Geometry, lattice, material and boundary conditions of one problem.
#[derive(Debug, Clone)]
pub struct Problem {
    pub geometry: Geometry,
    pub lattice: Lattice,
    pub material: Material,
    pub bc: BoundaryConditions,
    pub boundary: BoundaryHandler,
}

impl Problem {
    pub fn new(geometry: Geometry, spacing: f64, material: Material, bc: BoundaryConditions) -> Result<Self, SetupError> {
        let lattice = Lattice::build(&geometry, spacing)?;
        let cells = boundary_cells(&lattice, &geometry)?;
        let boundary = BoundaryHandler::new(&lattice, cells, &bc);
        Ok(Self {
            geometry,
            lattice,
            material,
            bc,
            boundary,
        })
    }

    /// Dilatation and rotation of `u` at every material node.
    pub fn dilatation_rotation(&self, u: &[Vec2]) -> (Vec<f64>, Vec<f64>) {
        let l = &self.lattice;
        let mut phi = vec![0.0; l.len()];
        let mut psi = vec![0.0; l.len()];
        for k in 0..l.len() {
            if l.is_material(k) {
                phi[k] = fields::div_at(l, u, k);
                psi[k] = fields::curl_at(l, u, k);
            }
        }
        (phi, psi)
    }
}

/// Everything that evolves during an LBM run.
#[derive(Debug, Clone)]
pub struct SolverState {
    pub kin: KinematicState,
    pub phi: WaveLbmField,
    pub psi: WaveLbmField,
    /// `Σ f_φ` at every node, refreshed at the end of each step; boundary
    /// nodes hold their finite-difference value instead.
    pub phi_values: Vec<f64>,
    /// `Σ f_ψ`, with the same boundary exception as `phi_values`.
    pub psi_values: Vec<f64>,
    pub step: u64,
    sigma: TensorField,
    reset_phi: Vec<Populations>,
    reset_psi: Vec<Populations>,
    boundary_phi: Vec<f64>,
    boundary_psi: Vec<f64>,
}

/// Lattice-Boltzmann plane-strain solver.
#[derive(Debug, Clone)]
pub struct LbmSolver<'a> {
    problem: &'a Problem,
    phi_params: LbmParams,
    psi_params: LbmParams,
    sync_period: u64,
    exec: Execution,
    boundary_nodes: Vec<usize>,
}

impl<'a> LbmSolver<'a> {
    pub fn new(problem: &'a Problem, a0_phi: f64, sync_period: u64) -> Result<Self, SetupError> {
        let (phi_params, psi_params) = wave_lbm::derive_lbm_params(&problem.material, problem.lattice.spacing(), a0_phi)?;
        Ok(Self {
            problem,
            phi_params,
            psi_params,
            sync_period,
            exec: Execution::Serial,
            boundary_nodes: problem.boundary.cells().iter().map(|c| c.node).collect(),
        })
    }

    pub fn with_execution(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }

    pub fn problem(&self) -> &Problem {
        self.problem
    }

    pub fn params(&self) -> (LbmParams, LbmParams) {
        (self.phi_params, self.psi_params)
    }

    pub fn dt(&self) -> f64 {
        self.phi_params.dt
    }

    pub fn sync_period(&self) -> u64 {
        self.sync_period
    }

    /// Starts from rest.
    pub fn initialize_at_rest(&self) -> Result<SolverState, SetupError> {
        self.initialize(KinematicState::at_rest(self.problem.lattice.len()))
    }

    /// Initial fields from the finite-difference divergence and curl of
    /// `kin.u`; populations start at equilibrium with zero flux.
    pub fn initialize(&self, kin: KinematicState) -> Result<SolverState, SetupError> {
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
        let (phi0, psi0) = self.problem.dilatation_rotation(&kin.u);
        Ok(SolverState {
            phi: WaveLbmField::at_rest(lattice, self.phi_params, &phi0),
            psi: WaveLbmField::at_rest(lattice, self.psi_params, &psi0),
            phi_values: phi0,
            psi_values: psi0,
            kin,
            step: 0,
            sigma: vec![Sym2::default(); n],
            reset_phi: vec![[0.0; Q]; self.boundary_nodes.len()],
            reset_psi: vec![[0.0; Q]; self.boundary_nodes.len()],
            boundary_phi: vec![0.0; self.boundary_nodes.len()],
            boundary_psi: vec![0.0; self.boundary_nodes.len()],
        })
    }

    /// One full time step, synchronizing when due.
    pub fn step(&self, s: &mut SolverState) -> Result<(), StepError> {
        self.advance(s)?;
        self.synchronize_if_due(s);
        Ok(())
    }

    /// Synchronizes when the step count is a multiple of the period.
    pub fn synchronize_if_due(&self, s: &mut SolverState) -> bool {
        let due = self.sync_period > 0 && s.step % self.sync_period == 0;
        if due {
            self.synchronize(s);
        }
        due
    }

    /// One time step without the synchronization.
    pub fn advance(&self, s: &mut SolverState) -> Result<(), StepError> {
        let p = self.problem;
        let lattice = &p.lattice;
        let dt = self.dt();
        let cd2 = p.material.c_d().powi(2);
        let cs2 = p.material.c_s().powi(2);

        {
            let (phi, psi) = (&s.phi_values, &s.psi_values);
            for_each_mut(self.exec, &mut s.kin.a, |k, a| {
                if matches!(lattice.class(k), NodeClass::Interior | NodeClass::SecondRow) {
                    *a = interior_acceleration_at(lattice, phi, psi, cd2, cs2, k);
                }
            });
        }
        p.boundary.accelerations(lattice, &p.material, &p.bc, &mut s.kin, dt, &mut s.sigma);
        newmark_integrate(&mut s.kin, lattice, dt, self.exec);

        for (b, &k) in self.boundary_nodes.iter().enumerate() {
            let phi_new = fields::div_at(lattice, &s.kin.u, k);
            let psi_new = fields::curl_at(lattice, &s.kin.u, k);
            s.reset_phi[b] = boundary_distribution_reset(phi_new, s.phi.flux(k), &self.phi_params);
            s.reset_psi[b] = boundary_distribution_reset(psi_new, s.psi.flux(k), &self.psi_params);
            s.boundary_phi[b] = phi_new;
            s.boundary_psi[b] = psi_new;
        }
        self.advance_field(&mut s.phi, &s.reset_phi);
        self.advance_field(&mut s.psi, &s.reset_psi);

        let c_phi = self.phi_params.c();
        let c_psi = self.psi_params.c();
        {
            let (phi, psi) = (&s.phi, &s.psi);
            for_each_mut(self.exec, &mut s.phi_values, |k, v| {
                if lattice.is_material(k) {
                    *v = wave_lbm::moments(&phi.populations()[k], c_phi).0;
                }
            });
            for_each_mut(self.exec, &mut s.psi_values, |k, v| {
                if lattice.is_material(k) {
                    *v = wave_lbm::moments(&psi.populations()[k], c_psi).0;
                }
            });
        }
        for (b, &k) in self.boundary_nodes.iter().enumerate() {
            s.phi_values[k] = s.boundary_phi[b];
            s.psi_values[k] = s.boundary_psi[b];
        }

        s.step += 1;
        s.kin.t = s.step as f64 * dt;
        self.check_finite(s)
    }

    /// Collision, with boundary nodes colliding the mean of their old and
    /// reset populations, then streaming everywhere. Boundary nodes keep
    /// their own outgoing value on links that leave the material.
    fn advance_field(&self, field: &mut WaveLbmField, reset: &[Populations]) {
        let lattice = &self.problem.lattice;
        field.collide(lattice, self.exec);
        let params = field.params;
        for (b, &k) in self.boundary_nodes.iter().enumerate() {
            let old = field.populations()[k];
            let mut mean = [0.0; Q];
            for alpha in 0..Q {
                mean[alpha] = 0.5 * (old[alpha] + reset[b][alpha]);
            }
            field.post_collision_mut()[k] = collide_node(&mean, &params);
        }
        field.stream(lattice, self.exec);
    }

    /// Recomputes `φ` and `ψ` from the displacement at every material node and
    /// rebuilds the populations, keeping each node's flux.
    pub fn synchronize(&self, s: &mut SolverState) {
        let p = self.problem;
        let lattice = &p.lattice;
        let (phi, psi) = p.dilatation_rotation(&s.kin.u);
        for k in 0..lattice.len() {
            if !lattice.is_material(k) {
                continue;
            }
            let jp = s.phi.flux(k);
            let js = s.psi.flux(k);
            s.phi.populations_mut()[k] = boundary_distribution_reset(phi[k], jp, &self.phi_params);
            s.psi.populations_mut()[k] = boundary_distribution_reset(psi[k], js, &self.psi_params);
        }
        s.phi_values = phi;
        s.psi_values = psi;
    }

    /// `‖(Σf_ψ − ∇×u, Σf_φ − ∇·u)‖₂` at every node (zero at Outside nodes).
    pub fn consistency_error(&self, s: &SolverState) -> Vec<f64> {
        let lattice = &self.problem.lattice;
        (0..lattice.len())
            .map(|k| {
                if lattice.is_material(k) {
                    self.consistency_error_at(s, k)
                } else {
                    0.0
                }
            })
            .collect()
    }

    pub fn consistency_error_at(&self, s: &SolverState, k: usize) -> f64 {
        let lattice = &self.problem.lattice;
        let dpsi = s.psi_values[k] - fields::curl_at(lattice, &s.kin.u, k);
        let dphi = s.phi_values[k] - fields::div_at(lattice, &s.kin.u, k);
        dpsi.hypot(dphi)
    }

    fn check_finite(&self, s: &SolverState) -> Result<(), StepError> {
        let lattice = &self.problem.lattice;
        for k in 0..lattice.len() {
            if !lattice.is_material(k) {
                continue;
            }
            let quantity = if !(s.kin.u[k][0].is_finite() && s.kin.u[k][1].is_finite()) {
                "displacement"
            } else if !s.phi_values[k].is_finite() {
                "dilatation"
            } else if !s.psi_values[k].is_finite() {
                "rotation"
            } else {
                continue;
            };
            let (i, j) = lattice.coords(k);
            return Err(StepError::NonFinite {
                step: s.step,
                time: s.kin.t,
                node: k,
                i,
                j,
                quantity,
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{compute_boundary_cell, BoundaryId};
    use crate::loads::LoadCurve;
    use approx::assert_abs_diff_eq;

    fn material() -> Material {
        Material::from_wave_speeds(1.0, 1.0, 1.0 / 3f64.sqrt()).unwrap()
    }

    fn square_problem(n: usize, bc: BoundaryConditions) -> Problem {
        Problem::new(Geometry::rectangle(1.0, 1.0), 1.0 / (n - 1) as f64, material(), bc).unwrap()
    }

    #[test]
    fn dirichlet_examples() {
        let dt = 0.1;
        assert_eq!(dirichlet_acceleration([1.0, 2.0], [1.0, 2.0], [0.0, 0.0], dt), [0.0, 0.0]);
        let u = [0.3, -0.2];
        let v = [1.0, 0.5];
        let a = dirichlet_acceleration([u[0] + dt * v[0], u[1] + dt * v[1]], u, v, dt);
        assert_abs_diff_eq!(a[0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(a[1], 0.0, epsilon = 1e-12);

        let d = 0.01;
        let a = dirichlet_acceleration([0.0, d], [0.0; 2], [0.0; 2], dt);
        assert_abs_diff_eq!(a[1], 2.0 * d / (dt * dt), epsilon = 1e-12);
        let l = Lattice::periodic(1, 1, 1.0);
        let mut kin = KinematicState::at_rest(1);
        kin.a[0] = a;
        newmark_integrate(&mut kin, &l, dt, Execution::Serial);
        assert_abs_diff_eq!(kin.u[0][1], d, epsilon = 1e-16);
    }

    #[test]
    fn newmark_examples() {
        let l = Lattice::periodic(1, 1, 1.0);
        let mut kin = KinematicState::at_rest(1);
        kin.a[0] = [2.0, 0.0];
        newmark_integrate(&mut kin, &l, 1.0, Execution::Serial);
        assert_eq!(kin.u[0], [1.0, 0.0]);
        assert_eq!(kin.v[0], [2.0, 0.0]);

        let mut kin = KinematicState::at_rest(1);
        kin.v[0] = [0.5, -1.0];
        newmark_integrate(&mut kin, &l, 0.2, Execution::Serial);
        assert_abs_diff_eq!(kin.u[0][0], 0.1, epsilon = 1e-16);
        assert_abs_diff_eq!(kin.u[0][1], -0.2, epsilon = 1e-16);

        // Constant acceleration is integrated exactly.
        let (g, dt, n) = ([0.3, -1.2], 0.01, 250);
        let mut kin = KinematicState::at_rest(1);
        for _ in 0..n {
            kin.a[0] = g;
            newmark_integrate(&mut kin, &l, dt, Execution::Serial);
        }
        let tn = n as f64 * dt;
        for c in 0..2 {
            assert_abs_diff_eq!(kin.v[0][c], tn * g[c], epsilon = 1e-12);
            assert_abs_diff_eq!(kin.u[0][c], 0.5 * tn * tn * g[c], epsilon = 1e-12);
        }
    }

    #[test]
    fn interior_acceleration_examples() {
        let p = square_problem(6, BoundaryConditions::traction_free());
        let l = &p.lattice;
        let m = &p.material;
        let (cd2, cs2) = (m.c_d().powi(2), m.c_s().powi(2));
        let at = |f: &dyn Fn(f64, f64) -> f64| -> Vec<f64> {
            (0..l.len()).map(|k| {
                let [x, y] = l.position(k);
                f(x, y)
            }).collect()
        };
        let zero = vec![0.0; l.len()];
        let interior: Vec<usize> = (0..l.len())
            .filter(|&k| l.class(k) != NodeClass::Boundary)
            .collect();

        let acc = interior_acceleration(&at(&|x, _| 0.4 * x), &zero, m, l);
        for &k in &interior {
            assert_abs_diff_eq!(acc[k][0], cd2 * 0.4, epsilon = 1e-12);
            assert_abs_diff_eq!(acc[k][1], 0.0, epsilon = 1e-12);
        }
        let acc = interior_acceleration(&zero, &at(&|_, y| 0.7 * y), m, l);
        for &k in &interior {
            assert_abs_diff_eq!(acc[k][0], -cs2 * 0.7, epsilon = 1e-12);
        }
        let acc = interior_acceleration(&at(&|x, y| x + y), &at(&|x, y| x - y), m, l);
        for &k in &interior {
            assert_abs_diff_eq!(acc[k][0], cd2 + cs2, epsilon = 1e-12);
            assert_abs_diff_eq!(acc[k][1], cd2 + cs2, epsilon = 1e-12);
        }
        for k in l.nodes_of(NodeClass::Boundary) {
            assert_eq!(acc[k], [0.0, 0.0]);
        }
    }

    #[test]
    fn neumann_examples() {
        let p = square_problem(11, BoundaryConditions::traction_free());
        let l = &p.lattice;
        let m = p.material;
        let h = l.spacing();
        let zero = vec![Sym2::default(); l.len()];
        let edge = compute_boundary_cell(l, &p.geometry, l.index(4, 10)).unwrap();
        let a = neumann_acceleration(&edge, &zero, &m, |_| [0.0, 0.0]);
        assert_eq!(a, [0.0, 0.0]);

        let s0 = 0.02;
        let a = neumann_acceleration(&edge, &zero, &m, |s| {
            if s.boundary == BoundaryId::Top { [0.0, s0] } else { [0.0, 0.0] }
        });
        assert_abs_diff_eq!(a[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(a[1], 2.0 * s0 / (m.rho * h), epsilon = 1e-12);

        let uniform = Sym2 { xx: 0.3, yy: -0.2, xy: 0.15 };
        let sigma = vec![uniform; l.len()];
        for node in [l.index(4, 10), l.index(0, 0), l.index(10, 3), l.index(10, 10)] {
            let cell = compute_boundary_cell(l, &p.geometry, node).unwrap();
            let a = neumann_acceleration(&cell, &sigma, &m, |s| uniform.dot(s.normal));
            let scale = 1.0 / (m.rho * h);
            assert!(a[0].abs() + a[1].abs() <= 1e-12 * scale, "node {node}: {a:?}");
        }
    }

    #[test]
    fn reset_examples() {
        let p = LbmParams { a0: 0.8, a: 0.05, b: 1.0, dt: 0.5, dh: 1.0 };
        let c = p.c();
        assert_eq!(boundary_distribution_reset(0.0, [0.0; 2], &p), [0.0; 5]);
        let f = boundary_distribution_reset(2.0, [0.0; 2], &p);
        for (got, want) in f.iter().zip([1.6, 0.1, 0.1, 0.1, 0.1]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-15);
        }
        let f = boundary_distribution_reset(1.0, [c, 0.0], &p);
        for (got, want) in f.iter().zip([0.8, 0.55, 0.05, -0.45, 0.05]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-15);
        }
        let (v, j) = wave_lbm::moments(&f, c);
        assert_abs_diff_eq!(v, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(j[0], c, epsilon = 1e-15);
        assert_abs_diff_eq!(j[1], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn initialize_examples() {
        let p = square_problem(9, BoundaryConditions::traction_free());
        let solver = LbmSolver::new(&p, 0.99, 0).unwrap();
        let s = solver.initialize_at_rest().unwrap();
        assert!(s.phi.populations().iter().flatten().all(|&f| f == 0.0));
        assert!(solver.consistency_error(&s).iter().all(|&e| e == 0.0));

        let c = 1e-3;
        let mut kin = KinematicState::at_rest(p.lattice.len());
        for k in 0..p.lattice.len() {
            let [x, y] = p.lattice.position(k);
            kin.u[k] = [-c * y, c * x];
        }
        let s = solver.initialize(kin).unwrap();
        let (_, psi_params) = solver.params();
        for k in 0..p.lattice.len() {
            assert_abs_diff_eq!(s.psi_values[k], 2.0 * c, epsilon = 1e-15);
            assert_abs_diff_eq!(s.phi_values[k], 0.0, epsilon = 1e-15);
            assert_abs_diff_eq!(s.psi.populations()[k][0], psi_params.a0 * 2.0 * c, epsilon = 1e-15);
            assert_abs_diff_eq!(s.psi.populations()[k][1], psi_params.a * 2.0 * c, epsilon = 1e-18);
        }
        assert!(solver.consistency_error(&s).iter().all(|&e| e < 1e-15));

        let mut kin = KinematicState::at_rest(p.lattice.len());
        for k in 0..p.lattice.len() {
            let [x, y] = p.lattice.position(k);
            kin.u[k] = [0.2 * x, 0.5 * y];
        }
        let s = solver.initialize(kin).unwrap();
        for k in 0..p.lattice.len() {
            assert_abs_diff_eq!(s.phi_values[k], 0.7, epsilon = 1e-13);
            assert_abs_diff_eq!(s.psi_values[k], 0.0, epsilon = 1e-13);
        }
    }

    #[test]
    fn rejects_lattice_without_interior() {
        let p = square_problem(3, BoundaryConditions::traction_free());
        let solver = LbmSolver::new(&p, 0.5, 0).unwrap();
        assert!(matches!(solver.initialize_at_rest(), Err(SetupError::NoInterior)));
    }

    #[test]
    fn null_solution_stays_zero() {
        let p = square_problem(9, BoundaryConditions::traction_free());
        let solver = LbmSolver::new(&p, 0.9, 7).unwrap();
        let mut s = solver.initialize_at_rest().unwrap();
        for _ in 0..500 {
            solver.step(&mut s).unwrap();
        }
        assert!(s.kin.u.iter().chain(&s.kin.v).all(|v| *v == [0.0, 0.0]));
        assert!(s.phi.populations().iter().chain(s.psi.populations()).flatten().all(|&f| f == 0.0));
        assert_abs_diff_eq!(s.kin.t, 500.0 * solver.dt(), epsilon = 1e-15);
    }

    #[test]
    fn rigid_translation_follows_boundary() {
        // Uniform velocity with a matching moving boundary: no strain ever develops.
        let speed = 1e-3;
        let moving = EdgeCondition::Dirichlet {
            displacement: [1.0, 0.0],
            curve: Some(LoadCurve::LinearRamp { rate: speed }),
        };
        let mut bc = BoundaryConditions::traction_free();
        for id in [BoundaryId::Left, BoundaryId::Right, BoundaryId::Top, BoundaryId::Bottom] {
            bc.set(id, moving);
        }
        let p = square_problem(9, bc);
        let solver = LbmSolver::new(&p, 0.5, 0).unwrap();
        let mut kin = KinematicState::at_rest(p.lattice.len());
        kin.v.iter_mut().for_each(|v| *v = [speed, 0.0]);
        let mut s = solver.initialize(kin).unwrap();
        for _ in 0..200 {
            solver.step(&mut s).unwrap();
        }
        let expected = speed * s.kin.t;
        // Boundary values are finite differences of displacements equal up to roundoff.
        let fd_noise = 1e-9 * expected / p.lattice.spacing();
        for k in 0..p.lattice.len() {
            assert_abs_diff_eq!(s.kin.u[k][0], expected, epsilon = 1e-10 * expected);
            assert_abs_diff_eq!(s.kin.u[k][1], 0.0, epsilon = 1e-10 * expected);
            assert!(s.phi_values[k].abs() < fd_noise && s.psi_values[k].abs() < fd_noise);
        }
    }

    #[test]
    fn synchronize_is_idempotent_and_keeps_flux() {
        let bc = BoundaryConditions::traction_free().with(
            BoundaryId::Top,
            EdgeCondition::Neumann { traction: [0.3, 1.0], curve: Some(LoadCurve::LinearRamp { rate: 0.05 }) },
        ).with(
            BoundaryId::Bottom,
            EdgeCondition::Dirichlet { displacement: [0.0, 0.0], curve: None },
        );
        let p = square_problem(13, bc);
        let solver = LbmSolver::new(&p, 0.9, 0).unwrap();
        let mut s = solver.initialize_at_rest().unwrap();
        for _ in 0..300 {
            solver.step(&mut s).unwrap();
        }
        // Perturb the dilatation field; synchronization must remove it.
        let k0 = p.lattice.index(6, 6);
        s.phi.populations_mut()[k0][0] += 1e-3;
        let flux_before: Vec<Vec2> = (0..p.lattice.len()).map(|k| s.phi.flux(k)).collect();
        solver.synchronize(&mut s);
        let scale = s.phi_values.iter().chain(&s.psi_values).fold(0.0f64, |m, v| m.max(v.abs()));
        let err = solver.consistency_error(&s);
        assert!(err.iter().all(|&e| e <= 1e-12 * scale.max(1e-30)), "max {:e}", err.iter().cloned().fold(0.0, f64::max));
        for k in 0..p.lattice.len() {
            let j = s.phi.flux(k);
            assert_abs_diff_eq!(j[0], flux_before[k][0], epsilon = 1e-12 * flux_before[k][0].abs().max(1e-20));
        }
        let once = s.phi.populations().to_vec();
        solver.synchronize(&mut s);
        for (a, b) in once.iter().zip(s.phi.populations()) {
            for q in 0..Q {
                assert_abs_diff_eq!(a[q], b[q], epsilon = 1e-12 * a[q].abs().max(1e-12));
            }
        }
    }

    #[test]
    fn dirichlet_nodes_are_exact() {
        let bc = BoundaryConditions::traction_free()
            .with(BoundaryId::Bottom, EdgeCondition::Dirichlet { displacement: [0.0, 2e-4], curve: Some(LoadCurve::LinearRamp { rate: 1.0 }) })
            .with(BoundaryId::Top, EdgeCondition::Neumann { traction: [0.01, 0.0], curve: None });
        let p = square_problem(11, bc);
        let solver = LbmSolver::new(&p, 0.9, 10).unwrap();
        let mut s = solver.initialize_at_rest().unwrap();
        let bottom: Vec<usize> = p.boundary.cells().iter().filter(|c| c.touches(BoundaryId::Bottom)).map(|c| c.node).collect();
        assert_eq!(bottom.len(), 11);
        for _ in 0..100 {
            solver.step(&mut s).unwrap();
            let target = 2e-4 * s.kin.t;
            for &k in &bottom {
                assert_abs_diff_eq!(s.kin.u[k][0], 0.0, epsilon = 1e-15);
                assert_abs_diff_eq!(s.kin.u[k][1], target, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn unchanged_boundary_streams_unchanged() {
        // With a boundary node whose populations equal their reset values the
        // averaged source reduces to the standard collision.
        let p = LbmParams { a0: 0.6, a: 0.1, b: 1.0, dt: 1.0, dh: 1.0 };
        let f = equilibrium(0.4, [0.0; 2], &p);
        let mean: Populations = std::array::from_fn(|a| 0.5 * (f[a] + f[a]));
        assert_eq!(collide_node(&mean, &p), collide_node(&f, &p));
        // Two different equilibria: the streamed value is their average.
        let g = equilibrium(1.0, [0.0; 2], &p);
        let mean: Populations = std::array::from_fn(|a| 0.5 * (f[a] + g[a]));
        let out = collide_node(&mean, &p);
        for a in 0..Q {
            assert_abs_diff_eq!(out[a], 0.5 * (f[a] + g[a]), epsilon = 1e-15);
        }
    }

    #[test]
    fn non_finite_is_reported() {
        let bc = BoundaryConditions::traction_free().with(
            BoundaryId::Top,
            EdgeCondition::Neumann { traction: [0.0, f64::NAN], curve: None },
        );
        let p = square_problem(7, bc);
        let solver = LbmSolver::new(&p, 0.5, 0).unwrap();
        let mut s = solver.initialize_at_rest().unwrap();
        let err = solver.step(&mut s).unwrap_err();
        // The traction row and the row it streams into are both poisoned.
        let StepError::NonFinite { step, j, .. } = err;
        assert_eq!(step, 1);
        assert!(j >= 5, "row {j}");
    }

    #[test]
    fn serial_and_parallel_agree() {
        let bc = BoundaryConditions::traction_free().with(
            BoundaryId::Top,
            EdgeCondition::Neumann { traction: [0.2, 1.0], curve: Some(LoadCurve::LinearRamp { rate: 1.0 }) },
        );
        let p = square_problem(15, bc);
        let serial = LbmSolver::new(&p, 0.9, 5).unwrap();
        let parallel = serial.clone().with_execution(Execution::Parallel);
        let mut a = serial.initialize_at_rest().unwrap();
        let mut b = parallel.initialize_at_rest().unwrap();
        for _ in 0..50 {
            serial.step(&mut a).unwrap();
            parallel.step(&mut b).unwrap();
        }
        assert_eq!(a.kin, b.kin);
        assert_eq!(a.phi.populations(), b.phi.populations());
    }
}
