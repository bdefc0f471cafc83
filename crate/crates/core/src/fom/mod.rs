//! Full-order model: 2D incompressible flow with a weakly coupled heat
//! equation and an algebraic eddy-viscosity closure.
//!
//! Each step is an incremental projection. Convection and the turbulent
//! stresses are explicit, laminar diffusion is implicit, and the pressure
//! increment solves `D G φ = D(u*)/dt` with exactly the divergence and
//! gradient operators used everywhere else, so the corrected velocity is
//! discretely solenoidal. Temperature follows with a fully implicit step
//! using the new velocity and eddy viscosity.

pub mod closure;
pub mod manufactured;

use std::ops::ControlFlow;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Result, RomError};
use crate::fv::assemble::{convection_matrix, divergence_matrix, gradient_matrix, laplacian_matrix};
use crate::fv::ops::{component_bc, pointwise_scale, transpose_stress_divergence};
use crate::fv::{convective_term, divergence, laplacian, norm, BcKind, BoundaryConditions, Field, Mesh, Scheme, TeeSpec};
use crate::lifting::{compute_control_function, lift_combination, LiftingFunction};
use crate::linalg::{bicgstab, BandedLu, Csr};

pub use closure::{eddy_viscosity_model, turbulent_diffusivity};
pub use manufactured::{manufactured_snapshots, Manufactured};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Geometry {
    Tee {
        #[serde(default)]
        spec: TeeSpec,
        h: f64,
    },
    /// Unit lid-driven cavity with `n × n` cells.
    Cavity { n: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FomConfig {
    pub geometry: Geometry,
    pub nu: f64,
    pub alpha: f64,
    pub pr_t: f64,
    pub c_s: f64,
    pub theta_main: f64,
    pub theta_branch: f64,
    pub dt: f64,
    pub t_final: f64,
    pub snapshot_every: usize,
    pub momentum_scheme: Scheme,
    pub thermal_scheme: Scheme,
    /// Per-inlet bounds on μ; empty means unbounded.
    pub mu_min: Vec<f64>,
    pub mu_max: Vec<f64>,
}

impl Default for FomConfig {
    fn default() -> Self {
        FomConfig {
            geometry: Geometry::Tee {
                spec: TeeSpec::default(),
                h: 1.0 / 32.0,
            },
            nu: 0.01,
            alpha: 0.04,
            pr_t: 0.85,
            c_s: 0.15,
            theta_main: 292.15,
            theta_branch: 309.5,
            dt: 2.5e-3,
            t_final: 3.0,
            snapshot_every: 40,
            momentum_scheme: Scheme::Central,
            thermal_scheme: Scheme::Central,
            mu_min: vec![0.0, 0.0],
            mu_max: vec![2.0, 2.0],
        }
    }
}

impl FomConfig {
    /// Laminar lid-driven cavity at Re = 1/ν for a unit lid speed.
    pub fn cavity(n: usize, re: f64) -> FomConfig {
        FomConfig {
            geometry: Geometry::Cavity { n },
            nu: 1.0 / re,
            c_s: 0.0,
            dt: 5e-3,
            t_final: 20.0,
            snapshot_every: 200,
            mu_min: Vec::new(),
            mu_max: Vec::new(),
            ..FomConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("nu", self.nu),
            ("alpha", self.alpha),
            ("pr_t", self.pr_t),
            ("dt", self.dt),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(RomError::config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.t_final >= self.dt) {
            return Err(RomError::config("t_final must be at least one timestep"));
        }
        if !(self.c_s >= 0.0) {
            return Err(RomError::config("c_s must be nonnegative"));
        }
        if self.snapshot_every == 0 {
            return Err(RomError::config("snapshot_every must be at least 1"));
        }
        if self.mu_min.len() != self.mu_max.len() {
            return Err(RomError::config("mu_min and mu_max have different lengths"));
        }
        match self.geometry {
            Geometry::Tee { h, .. } if !(h > 0.0) => Err(RomError::config("mesh size must be positive")),
            Geometry::Cavity { n } if n < 2 => Err(RomError::config("cavity needs at least 2×2 cells")),
            _ => Ok(()),
        }
    }

    pub fn n_steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }

    /// Saved snapshot times.
    pub fn snapshot_times(&self) -> Vec<f64> {
        (1..=self.n_steps())
            .filter(|n| n % self.snapshot_every == 0)
            .map(|n| n as f64 * self.dt)
            .collect()
    }
}

/// Mesh and boundary data of a configured geometry.
#[derive(Clone, Debug)]
pub struct Problem {
    pub mesh: Mesh,
    /// Velocity conditions with zero Dirichlet data.
    pub velocity_base: BoundaryConditions,
    pub pressure_bc: BoundaryConditions,
    pub temperature_bc: BoundaryConditions,
    /// Parametrized velocity patches and the unit direction of their data.
    pub velocity_patches: Vec<(String, Vec<f64>)>,
    /// Temperature Dirichlet patches and their fixed values.
    pub temperature_patches: Vec<(String, f64)>,
}

impl Problem {
    pub fn new(cfg: &FomConfig) -> Result<Problem> {
        cfg.validate()?;
        let (tm, tb) = (cfg.theta_main, cfg.theta_branch);
        match cfg.geometry {
            Geometry::Tee { spec, h } => {
                let mesh = Mesh::tee(spec, h)?;
                let zero = || BcKind::Dirichlet(vec![0.0, 0.0]);
                let velocity_base = BoundaryConditions::new(
                    &mesh,
                    2,
                    &[("main_inlet", zero()), ("branch_inlet", zero()), ("walls", zero()), ("outlet", BcKind::Outlet)],
                )?;
                let pressure_bc = BoundaryConditions::new(
                    &mesh,
                    1,
                    &[
                        ("main_inlet", BcKind::NeumannZero),
                        ("branch_inlet", BcKind::NeumannZero),
                        ("walls", BcKind::NeumannZero),
                        ("outlet", BcKind::Dirichlet(vec![0.0])),
                    ],
                )?;
                let temperature_bc = BoundaryConditions::new(
                    &mesh,
                    1,
                    &[
                        ("main_inlet", BcKind::Dirichlet(vec![tm])),
                        ("branch_inlet", BcKind::Dirichlet(vec![tb])),
                        ("walls", BcKind::NeumannZero),
                        ("outlet", BcKind::Outlet),
                    ],
                )?;
                Ok(Problem {
                    mesh,
                    velocity_base,
                    pressure_bc,
                    temperature_bc,
                    velocity_patches: vec![
                        ("main_inlet".into(), vec![1.0, 0.0]),
                        ("branch_inlet".into(), vec![0.0, -1.0]),
                    ],
                    temperature_patches: vec![("main_inlet".into(), tm), ("branch_inlet".into(), tb)],
                })
            }
            Geometry::Cavity { n } => {
                let mesh = Mesh::cavity(n)?;
                let zero = || BcKind::Dirichlet(vec![0.0, 0.0]);
                let velocity_base = BoundaryConditions::new(&mesh, 2, &[("lid", zero()), ("walls", zero())])?;
                let pressure_bc = BoundaryConditions::zero_gradient(&mesh, 1);
                let temperature_bc = BoundaryConditions::new(
                    &mesh,
                    1,
                    &[("lid", BcKind::Dirichlet(vec![tb])), ("walls", BcKind::Dirichlet(vec![tm]))],
                )?;
                Ok(Problem {
                    mesh,
                    velocity_base,
                    pressure_bc,
                    temperature_bc,
                    velocity_patches: vec![("lid".into(), vec![1.0, 0.0])],
                    temperature_patches: vec![("lid".into(), tb), ("walls".into(), tm)],
                })
            }
        }
    }

    pub fn velocity_bc(&self, mu: &[f64]) -> Result<BoundaryConditions> {
        if mu.len() != self.velocity_patches.len() {
            return Err(RomError::dim(format!(
                "μ has {} entries, the geometry has {} parametrized inlets",
                mu.len(),
                self.velocity_patches.len()
            )));
        }
        let mut bc = self.velocity_base.clone();
        for ((name, dir), m) in self.velocity_patches.iter().zip(mu) {
            let v: Vec<f64> = dir.iter().map(|d| d * m).collect();
            bc = bc.with_value(&self.mesh, name, &v)?;
        }
        Ok(bc)
    }

    pub fn temperature_values(&self) -> Vec<f64> {
        self.temperature_patches.iter().map(|(_, v)| *v).collect()
    }
}

/// Pressure-increment solver for the discrete Poisson operator `D₀ G`.
#[derive(Clone, Debug)]
pub struct Projector {
    d0: Csr,
    g: Csr,
    lu: BandedLu,
    pin: Option<usize>,
}

impl Projector {
    pub fn new(mesh: &Mesh, velocity_base: &BoundaryConditions, pressure_bc: &BoundaryConditions) -> Result<Projector> {
        let d0 = divergence_matrix(mesh, &velocity_base.homogeneous());
        let g = gradient_matrix(mesh, pressure_bc);
        let neg_l = d0.matmul(&g).add(-1.0, &d0.matmul(&g), 0.0);
        // without a pressure Dirichlet patch the operator annihilates constants
        let pin = if pressure_bc.has_dirichlet() { None } else { Some(0) };
        let a = match pin {
            Some(r) => neg_l.pin_row(r),
            None => neg_l,
        };
        Ok(Projector {
            lu: BandedLu::factor(&a)?,
            d0,
            g,
            pin,
        })
    }

    /// Solves `D₀ G φ = rhs`.
    pub fn potential(&self, rhs: &[f64]) -> Vec<f64> {
        let mut b: Vec<f64> = rhs.iter().map(|v| -v).collect();
        if let Some(r) = self.pin {
            b[r] = 0.0;
        }
        self.lu.solve_in_place(&mut b);
        b
    }

    /// Interleaved gradient `G φ` (entry `2c + k`).
    pub fn gradient(&self, phi: &[f64]) -> Vec<f64> {
        self.g.mul_vec(phi)
    }

    pub fn divergence_matrix(&self) -> &Csr {
        &self.d0
    }

    /// `u − G φ` with `D₀ G φ = D(u)`: removes the discrete divergence while
    /// leaving the boundary data untouched.
    pub fn project(&self, mesh: &Mesh, u: &Field, bc: &BoundaryConditions) -> Result<Field> {
        let div = divergence(mesh, u, bc)?;
        let phi = self.potential(div.values());
        let grad = self.gradient(&phi);
        let mut out = u.clone();
        for (x, g) in out.values_mut().iter_mut().zip(grad) {
            *x -= g;
        }
        Ok(out)
    }
}

/// Fields saved at one time instant.
#[derive(Clone, Debug)]
pub struct SnapshotRecord {
    pub mu: Vec<f64>,
    pub t: f64,
    pub u: Field,
    pub p: Field,
    pub theta: Field,
    pub nut: Field,
}

/// Per-step checks recorded during a run.
#[derive(Clone, Copy, Debug)]
pub struct StepStats {
    pub step: usize,
    pub t: f64,
    pub max_divergence: f64,
    pub theta_min: f64,
    pub theta_max: f64,
    pub boundary_net_flux: f64,
}

#[derive(Clone, Debug)]
pub struct FomRun {
    pub mu: Vec<f64>,
    pub initial: SnapshotRecord,
    pub snapshots: Vec<SnapshotRecord>,
    pub stats: Vec<StepStats>,
    pub wall_seconds: f64,
}

pub struct Fom {
    pub config: FomConfig,
    pub problem: Problem,
    /// Harmonic lifts made discretely solenoidal; `u(0) = Σ μ_i ζ_i`.
    pub velocity_lifts: Vec<LiftingFunction>,
    /// Harmonic temperature lifts; `θ(0) = Σ g_i ζ_i`.
    pub temperature_lifts: Vec<LiftingFunction>,
    projector: Projector,
    predictor: BandedLu,
    lap_t: Csr,
}

struct State {
    u: Field,
    p: Field,
    theta: Field,
    nut: Field,
}

impl Fom {
    pub fn new(config: FomConfig) -> Result<Fom> {
        let problem = Problem::new(&config)?;
        let mesh = &problem.mesh;
        let projector = Projector::new(mesh, &problem.velocity_base, &problem.pressure_bc)?;
        // both velocity components share boundary kinds
        let lap_u = laplacian_matrix(mesh, &component_bc(mesh, &problem.velocity_base, 0)?);
        let n = mesh.n_cells();
        let predictor = BandedLu::factor(&Csr::identity(n).add(1.0, &lap_u, -config.dt * config.nu))?;
        let lap_t = laplacian_matrix(mesh, &problem.temperature_bc);

        let mut velocity_lifts = Vec::new();
        for (name, dir) in &problem.velocity_patches {
            let mut lift = compute_control_function(mesh, &problem.velocity_base, name, dir)?;
            lift.field = projector.project(mesh, &lift.field, &lift.bc)?;
            velocity_lifts.push(lift);
        }
        let temperature_lifts = problem
            .temperature_patches
            .iter()
            .map(|(name, _)| compute_control_function(mesh, &problem.temperature_bc, name, &[1.0]))
            .collect::<Result<Vec<_>>>()?;
        Ok(Fom {
            config,
            problem,
            velocity_lifts,
            temperature_lifts,
            projector,
            predictor,
            lap_t,
        })
    }

    pub fn mesh(&self) -> &Mesh {
        &self.problem.mesh
    }

    pub fn projector(&self) -> &Projector {
        &self.projector
    }

    fn check_mu(&self, mu: &[f64]) -> Result<()> {
        let c = &self.config;
        if !c.mu_min.is_empty() && c.mu_min.len() != mu.len() {
            return Err(RomError::config("μ bounds do not match the number of inlets"));
        }
        for (k, m) in mu.iter().enumerate() {
            if !m.is_finite() {
                return Err(RomError::config("μ must be finite"));
            }
            if let (Some(lo), Some(hi)) = (c.mu_min.get(k), c.mu_max.get(k)) {
                if m < lo || m > hi {
                    return Err(RomError::config(format!("μ[{k}] = {m} outside [{lo}, {hi}]")));
                }
            }
        }
        Ok(())
    }

    fn initial_state(&self, mu: &[f64], u_bc: &BoundaryConditions) -> Result<State> {
        let mesh = self.mesh();
        let u = lift_combination(mesh, &self.velocity_lifts, mu)?;
        let theta = lift_combination(mesh, &self.temperature_lifts, &self.problem.temperature_values())?;
        let nut = eddy_viscosity_model(mesh, &u, u_bc, self.config.c_s)?;
        Ok(State {
            u,
            p: Field::zeros(mesh, 1),
            theta,
            nut,
        })
    }

    /// Full run over `[0, t_final]`, saving snapshots on the configured
    /// cadence.
    pub fn run(&self, mu: &[f64]) -> Result<FomRun> {
        let start = Instant::now();
        let every = self.config.snapshot_every;
        let mut snapshots = Vec::new();
        let mut stats = Vec::with_capacity(self.config.n_steps());
        let initial = self.integrate(mu, self.config.n_steps(), |step, rec, st| {
            stats.push(st);
            if step % every == 0 {
                snapshots.push(rec());
            }
            ControlFlow::Continue(())
        })?;
        Ok(FomRun {
            mu: mu.to_vec(),
            initial,
            snapshots,
            stats,
            wall_seconds: start.elapsed().as_secs_f64(),
        })
    }

    /// Integrates until `max |u^{n+1} − u^n| / dt < tol` or `t_max`, returning
    /// the final state and whether the tolerance was met.
    pub fn run_to_steady(&self, mu: &[f64], t_max: f64, tol: f64) -> Result<(SnapshotRecord, bool)> {
        let steps = (t_max / self.config.dt).round() as usize;
        let mut last: Option<SnapshotRecord> = None;
        let mut converged = false;
        let dt = self.config.dt;
        self.integrate(mu, steps, |_, rec, _| {
            let now = rec();
            if let Some(prev) = &last {
                let change = now
                    .u
                    .values()
                    .iter()
                    .zip(prev.u.values())
                    .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
                    / dt;
                if change < tol {
                    converged = true;
                    last = Some(now);
                    return ControlFlow::Break(());
                }
            }
            last = Some(now);
            ControlFlow::Continue(())
        })?;
        let last = last.ok_or_else(|| RomError::config("t_max shorter than one step"))?;
        Ok((last, converged))
    }

    /// Time loop. `observe` receives the step number, a thunk producing the
    /// current record, and the step diagnostics; it may stop the run early.
    /// Returns the initial record.
    fn integrate<F>(&self, mu: &[f64], n_steps: usize, mut observe: F) -> Result<SnapshotRecord>
    where
        F: FnMut(usize, &dyn Fn() -> SnapshotRecord, StepStats) -> ControlFlow<()>,
    {
        self.check_mu(mu)?;
        let cfg = &self.config;
        let mesh = self.mesh();
        let n = mesh.n_cells();
        let (dt, nu) = (cfg.dt, cfg.nu);
        let u_bc = self.problem.velocity_bc(mu)?;
        let t_bc = &self.problem.temperature_bc;
        let mut s = self.initial_state(mu, &u_bc)?;
        let record = |s: &State, t: f64| SnapshotRecord {
            mu: mu.to_vec(),
            t,
            u: s.u.clone(),
            p: s.p.clone(),
            theta: s.theta.clone(),
            nut: s.nut.clone(),
        };
        let initial = record(&s, 0.0);

        let lap_offset_u = laplacian(mesh, &Field::zeros(mesh, 2), &u_bc)?;
        let lap_offset_t = laplacian(mesh, &Field::zeros(mesh, 1), t_bc)?;
        let inlet_scale = mu.iter().fold(0.0f64, |m, v| m.max(v.abs())) * mesh.total_volume().sqrt();
        let reference = norm(mesh, &s.u)?.max(inlet_scale).max(1e-12);

        let mut rhs = vec![0.0; n];
        let mut theta_next = s.theta.values().to_vec();
        for step in 1..=n_steps {
            let t = step as f64 * dt;
            // explicit part
            let lap = laplacian(mesh, &s.u, &u_bc)?;
            let conv = convective_term(mesh, &s.u, &u_bc, &s.u, &u_bc, cfg.momentum_scheme)?;
            let tr = transpose_stress_divergence(mesh, &s.u, &u_bc, None)?;
            let tr_t = transpose_stress_divergence(mesh, &s.u, &u_bc, Some(&s.nut))?;
            let nut_lap = pointwise_scale(&s.nut, &lap)?;
            let grad_p = self.projector.gradient(s.p.values());
            let mut u_star = Field::zeros(mesh, 2);
            for k in 0..2 {
                for c in 0..n {
                    let i = 2 * c + k;
                    let explicit = -conv.values()[i] + nu * tr.values()[i] + nut_lap.values()[i] + tr_t.values()[i]
                        - grad_p[i];
                    rhs[c] = s.u.values()[i] + dt * explicit + dt * nu * lap_offset_u.values()[i];
                }
                self.predictor.solve_in_place(&mut rhs);
                for c in 0..n {
                    u_star.set(c, k, rhs[c]);
                }
            }
            // projection
            let div = divergence(mesh, &u_star, &u_bc)?;
            let scaled: Vec<f64> = div.values().iter().map(|d| d / dt).collect();
            let phi = self.projector.potential(&scaled);
            let g = self.projector.gradient(&phi);
            for (x, gi) in u_star.values_mut().iter_mut().zip(&g) {
                *x -= dt * gi;
            }
            s.u = u_star;
            for (p, f) in s.p.values_mut().iter_mut().zip(&phi) {
                *p += f;
            }
            let unorm = norm(mesh, &s.u)?;
            if !s.u.is_finite() || unorm > 1e6 * reference {
                return Err(RomError::Diverged {
                    step,
                    time: t,
                    reason: format!("velocity norm {unorm:.3e} against reference {reference:.3e}"),
                });
            }
            s.nut = eddy_viscosity_model(mesh, &s.u, &u_bc, cfg.c_s)?;

            // temperature: (I/dt + C(u) − diag(α + ν_t/Pr_t) Δ₀) θ = θⁿ/dt − c₀ + (α + ν_t/Pr_t) Δ_b
            let kappa: Vec<f64> = s.nut.values().iter().map(|v| cfg.alpha + v / cfg.pr_t).collect();
            let conv_m = convection_matrix(mesh, &s.u, &u_bc, t_bc, cfg.thermal_scheme)?;
            let conv_offset = convective_term(mesh, &s.u, &u_bc, &Field::zeros(mesh, 1), t_bc, cfg.thermal_scheme)?;
            let mut trip = Vec::with_capacity(10 * n);
            for c in 0..n {
                trip.push((c, c, 1.0 / dt));
                trip.extend(conv_m.row(c).map(|(j, v)| (c, j, v)));
                trip.extend(self.lap_t.row(c).map(|(j, v)| (c, j, -kappa[c] * v)));
            }
            let a = Csr::from_triplets(n, n, trip);
            for c in 0..n {
                rhs[c] = s.theta.values()[c] / dt - conv_offset.values()[c] + kappa[c] * lap_offset_t.values()[c];
            }
            theta_next.copy_from_slice(s.theta.values());
            bicgstab(&a, &rhs, &mut theta_next, 1e-15, 500).map_err(|e| RomError::Diverged {
                step,
                time: t,
                reason: format!("temperature solve: {e}"),
            })?;
            s.theta.values_mut().copy_from_slice(&theta_next);

            let div_after = divergence(mesh, &s.u, &u_bc)?;
            let st = StepStats {
                step,
                t,
                max_divergence: div_after.max_abs(),
                theta_min: s.theta.values().iter().copied().fold(f64::INFINITY, f64::min),
                theta_max: s.theta.values().iter().copied().fold(f64::NEG_INFINITY, f64::max),
                boundary_net_flux: boundary_net_flux(mesh, &s.u, &u_bc),
            };
            let snapshot = || record(&s, t);
            if observe(step, &snapshot, st).is_break() {
                break;
            }
        }
        Ok(initial)
    }
}

/// Centerline comparison of two steady lid-driven cavity solutions.
#[derive(Clone, Debug)]
pub struct CavityCheck {
    pub coarse: usize,
    pub fine: usize,
    /// max |coarse − fine| over both centerline profiles divided by the
    /// largest fine-grid value on them.
    pub deviation: f64,
    pub converged: bool,
}

/// Steady cavity at `n` and `2n` cells per side. The fine solution is
/// restricted to the coarse centerlines by averaging the two fine cells on
/// either side of each coarse sample point.
pub fn cavity_self_refinement(n: usize, re: f64, t_max: f64, tol: f64) -> Result<CavityCheck> {
    if n < 4 || n % 2 != 0 {
        return Err(RomError::config("cavity check needs an even coarse size of at least 4"));
    }
    let steady = |m: usize| -> Result<(Mesh, SnapshotRecord, bool)> {
        let fom = Fom::new(FomConfig::cavity(m, re))?;
        let (rec, ok) = fom.run_to_steady(&[1.0], t_max, tol)?;
        Ok((fom.mesh().clone(), rec, ok))
    };
    let (mc, rc, okc) = steady(n)?;
    let (mf, rf, okf) = steady(2 * n)?;
    let at = |mesh: &Mesh, rec: &SnapshotRecord, i: usize, j: usize, k: usize| rec.u.get(mesh.cell_at(i, j).unwrap(), k);
    let h = n / 2;
    let (mut diff, mut scale) = (0.0f64, 0.0f64);
    for j in 0..n {
        // u on x = 1/2: mean of the two columns either side
        let uc = 0.5 * (at(&mc, &rc, h - 1, j, 0) + at(&mc, &rc, h, j, 0));
        let uf = 0.25
            * [(n - 1, 2 * j), (n, 2 * j), (n - 1, 2 * j + 1), (n, 2 * j + 1)]
                .iter()
                .map(|&(i, jj)| at(&mf, &rf, i, jj, 0))
                .sum::<f64>();
        // v on y = 1/2
        let vc = 0.5 * (at(&mc, &rc, j, h - 1, 1) + at(&mc, &rc, j, h, 1));
        let vf = 0.25
            * [(2 * j, n - 1), (2 * j, n), (2 * j + 1, n - 1), (2 * j + 1, n)]
                .iter()
                .map(|&(ii, jj)| at(&mf, &rf, ii, jj, 1))
                .sum::<f64>();
        diff = diff.max((uc - uf).abs()).max((vc - vf).abs());
        scale = scale.max(uf.abs()).max(vf.abs());
    }
    Ok(CavityCheck {
        coarse: n,
        fine: 2 * n,
        deviation: diff / scale,
        converged: okc && okf,
    })
}

/// Σ over boundary faces of u·n dA, using the face values of the
/// divergence operator.
pub fn boundary_net_flux(mesh: &Mesh, u: &Field, bc: &BoundaryConditions) -> f64 {
    boundary_patch_fluxes(mesh, u, bc).iter().sum()
}

/// Outward volume flux through each patch.
pub fn boundary_patch_fluxes(mesh: &Mesh, u: &Field, bc: &BoundaryConditions) -> Vec<f64> {
    let mut out = vec![0.0; mesh.patches.len()];
    for (f, face) in mesh.boundary_faces.iter().enumerate() {
        let [nx, ny] = face.dir.normal();
        out[face.patch] += face.area * (nx * bc.face_value(mesh, u, f, 0) + ny * bc.face_value(mesh, u, f, 1));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_tee(t_final: f64) -> FomConfig {
        FomConfig {
            geometry: Geometry::Tee {
                spec: TeeSpec { main_nx: 24, main_ny: 8, branch_x0: 8, branch_nx: 6, branch_ny: 6 },
                h: 1.0 / 8.0,
            },
            dt: 1e-2,
            t_final,
            snapshot_every: 5,
            ..FomConfig::default()
        }
    }

    #[test]
    fn config_validation() {
        assert!(FomConfig::default().validate().is_ok());
        for bad in [
            FomConfig { nu: 0.0, ..FomConfig::default() },
            FomConfig { alpha: -1.0, ..FomConfig::default() },
            FomConfig { pr_t: 0.0, ..FomConfig::default() },
            FomConfig { dt: 0.0, ..FomConfig::default() },
            FomConfig { t_final: 1e-4, ..FomConfig::default() },
        ] {
            assert!(matches!(bad.validate(), Err(RomError::Config(_))));
        }
        let times = FomConfig::default().snapshot_times();
        assert_eq!(times.len(), 30);
        assert!((times[0] - 0.1).abs() < 1e-12 && (times[29] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn projector_removes_divergence() {
        let cfg = small_tee(0.1);
        let fom = Fom::new(cfg).unwrap();
        let mesh = fom.mesh();
        for lift in &fom.velocity_lifts {
            let d = divergence(mesh, &lift.field, &lift.bc).unwrap();
            assert!(d.max_abs() < 1e-10, "{}", d.max_abs());
        }
    }

    #[test]
    fn zero_flow_is_a_fixed_point() {
        let cfg = FomConfig { theta_branch: 292.15, ..small_tee(0.2) };
        let fom = Fom::new(cfg).unwrap();
        let run = fom.run(&[0.0, 0.0]).unwrap();
        assert_eq!(run.snapshots.len(), 4);
        for s in &run.snapshots {
            assert!(s.u.max_abs() == 0.0 && s.p.max_abs() == 0.0 && s.nut.max_abs() == 0.0);
            for (a, b) in s.theta.values().iter().zip(run.initial.theta.values()) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn short_tee_run_is_solenoidal_and_bounded() {
        // α large enough for a cell Péclet number below 2 on this coarse grid
        let fom = Fom::new(FomConfig { alpha: 0.12, ..small_tee(0.5) }).unwrap();
        let run = fom.run(&[0.59, 0.77]).unwrap();
        let h = fom.mesh().h();
        for st in &run.stats {
            assert!(st.max_divergence < 1e-8 * 0.77 / h, "{st:?}");
            assert!(st.theta_min >= 292.15 - 1e-10 && st.theta_max <= 309.5 + 1e-10, "{st:?}");
            assert!(st.boundary_net_flux.abs() < 1e-10);
        }
        let last = run.snapshots.last().unwrap();
        assert!(last.nut.values().iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn out_of_range_mu_is_rejected() {
        let fom = Fom::new(small_tee(0.1)).unwrap();
        assert!(matches!(fom.run(&[5.0, 0.7]), Err(RomError::Config(_))));
        assert!(fom.run(&[0.5]).is_err());
    }
}
