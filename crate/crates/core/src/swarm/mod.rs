//! Coverage-control swarm simulation.
//!
//! Robots are unicycles. Each one is represented by its control point, a
//! distance `λ` ahead of the axle along the heading; control points are the
//! Voronoi generators over a rasterized density. Each step computes grid
//! Voronoi cells, their centroids and the Lloyd velocity `κ (c − p)`, maps it
//! to linear and angular speed, and integrates the unicycle.

pub mod broadcast;
mod density;

use std::f64::consts::PI;
use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dictionary::ArenaSpec;

pub use density::{polygon_to_gmm, DensityField, Gaussian, Gmm, NARROW_VARIANCE, WIDE_VARIANCE};

#[derive(Debug, Error)]
pub enum SwarmError {
    #[error("polygon needs at least three sides and a positive radius")]
    DegeneratePolygon,
    #[error("invalid grid {0}x{1}")]
    Grid(usize, usize),
    #[error("invalid parameter: {0}")]
    Parameter(&'static str),
    #[error("swarm needs at least one robot")]
    NoRobots,
    #[error("robot {0} owns no grid cells")]
    EmptyCell(usize),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwarmParams {
    pub robots: usize,
    pub kappa: f64,
    pub lambda: f64,
    pub dt: f64,
    pub settle_speed: f64,
    pub grid_x: usize,
    pub grid_y: usize,
    pub density_floor: f64,
    /// Add the finite-difference neighbor-coupling term to the Lloyd law.
    pub coupling: bool,
}

impl Default for SwarmParams {
    fn default() -> Self {
        Self {
            robots: 10,
            kappa: 1.0,
            lambda: 0.05,
            dt: 0.02,
            settle_speed: 1e-3,
            grid_x: 150,
            grid_y: 100,
            density_floor: 1e-6,
            coupling: false,
        }
    }
}

impl SwarmParams {
    pub fn validate(&self) -> Result<(), SwarmError> {
        if self.robots == 0 {
            return Err(SwarmError::NoRobots);
        }
        if self.grid_x == 0 || self.grid_y == 0 {
            return Err(SwarmError::Grid(self.grid_x, self.grid_y));
        }
        for (v, name) in [
            (self.kappa, "kappa must be positive"),
            (self.lambda, "lambda must be positive"),
            (self.dt, "dt must be positive"),
            (self.settle_speed, "settle speed must be positive"),
            (self.density_floor, "density floor must be positive"),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SwarmError::Parameter(name));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RobotPose {
    /// Control point, `λ` ahead of the axle.
    pub x: f64,
    pub y: f64,
    /// Heading in (−π, π].
    pub theta: f64,
    pub v: f64,
    pub omega: f64,
}

impl RobotPose {
    pub fn at(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: wrap_angle(theta),
            v: 0.0,
            omega: 0.0,
        }
    }

    pub fn position(&self) -> [f64; 2] {
        [self.x, self.y]
    }

    /// Axle center for offset `lambda`.
    pub fn body(&self, lambda: f64) -> [f64; 2] {
        let (s, c) = self.theta.sin_cos();
        [self.x - lambda * c, self.y - lambda * s]
    }
}

pub fn wrap_angle(theta: f64) -> f64 {
    let mut t = theta.rem_euclid(2.0 * PI);
    if t > PI {
        t -= 2.0 * PI;
    }
    t
}

/// Offset-point transform: `(v, ω)` that moves the point `λ` ahead of the
/// robot with velocity `pdot`.
pub fn to_unicycle(pdot: [f64; 2], theta: f64, lambda: f64) -> (f64, f64) {
    let (s, c) = theta.sin_cos();
    (
        c * pdot[0] + s * pdot[1],
        (-s * pdot[0] + c * pdot[1]) / lambda,
    )
}

/// Grid Voronoi partition.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    /// Owning robot per grid cell, row-major like the density raster.
    pub owner: Vec<usize>,
    /// Sorted neighbor sets: robots whose cells touch across a grid edge.
    pub neighbors: Vec<Vec<usize>>,
}

impl Partition {
    pub fn cell_counts(&self, robots: usize) -> Vec<usize> {
        let mut counts = vec![0; robots];
        for &o in &self.owner {
            counts[o] += 1;
        }
        counts
    }
}

/// Outcome of one control step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    /// Locational cost before the move.
    pub cost: f64,
    /// Largest commanded speed `‖ṗ_i‖`.
    pub max_speed: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwarmState {
    pub robots: Vec<RobotPose>,
    pub density: DensityField,
    pub params: SwarmParams,
    last_speed: f64,
}

impl SwarmState {
    pub fn new(
        mut robots: Vec<RobotPose>,
        density: DensityField,
        params: SwarmParams,
    ) -> Result<Self, SwarmError> {
        params.validate()?;
        if robots.is_empty() {
            return Err(SwarmError::NoRobots);
        }
        separate_duplicates(&mut robots);
        Ok(Self {
            robots,
            density,
            params,
            last_speed: f64::INFINITY,
        })
    }

    /// `params.robots` robots placed uniformly at random with random headings.
    pub fn random<R: Rng + ?Sized>(
        density: DensityField,
        params: SwarmParams,
        rng: &mut R,
    ) -> Result<Self, SwarmError> {
        let robots = (0..params.robots)
            .map(|_| {
                RobotPose::at(
                    rng.random_range(0.0..density.width),
                    rng.random_range(0.0..density.height),
                    rng.random_range(-PI..PI),
                )
            })
            .collect();
        Self::new(robots, density, params)
    }

    pub fn arena(&self) -> ArenaSpec {
        ArenaSpec {
            width: self.density.width,
            height: self.density.height,
            physical_scale: 1.0,
        }
    }

    /// Swap in a new target density; robots keep their poses.
    pub fn set_density(&mut self, density: DensityField) {
        self.density = density;
        self.last_speed = f64::INFINITY;
    }

    pub fn positions(&self) -> Vec<[f64; 2]> {
        self.robots.iter().map(RobotPose::position).collect()
    }

    pub fn partition(&self) -> Partition {
        partition_at(&self.density, &self.positions())
    }

    pub fn centroids(&self, part: &Partition) -> Result<Vec<[f64; 2]>, SwarmError> {
        centroids_of(&self.density, part, self.robots.len())
    }

    /// `H = Σ_i Σ_{q ∈ V_i} ‖q − p_i‖² φ(q) A`.
    pub fn cost(&self) -> f64 {
        let part = self.partition();
        cost_of(&self.density, &part, &self.positions())
    }

    /// Commanded `ṗ_i` for every robot under the current partition.
    pub fn desired_velocities(&self, part: &Partition) -> Result<Vec<[f64; 2]>, SwarmError> {
        let k = self.params.kappa;
        let pos = self.positions();
        let cents = self.centroids(part)?;
        let lloyd: Vec<[f64; 2]> = pos
            .iter()
            .zip(&cents)
            .map(|(p, c)| [k * (c[0] - p[0]), k * (c[1] - p[1])])
            .collect();
        if !self.params.coupling {
            return Ok(lloyd);
        }
        // Σ_j ∂c_i/∂p_j · u_j as a directional finite difference along u_j
        let h = 0.5 * self.density.dx().min(self.density.dy());
        let mut out = lloyd.clone();
        for (j, u) in lloyd.iter().enumerate() {
            let norm = u[0].hypot(u[1]);
            if norm == 0.0 || part.neighbors[j].is_empty() {
                continue;
            }
            let mut moved = pos.clone();
            moved[j][0] += h * u[0] / norm;
            moved[j][1] += h * u[1] / norm;
            let p2 = partition_at(&self.density, &moved);
            let c2 = match centroids_of(&self.density, &p2, pos.len()) {
                Ok(c) => c,
                Err(_) => continue,
            };
            for &i in &part.neighbors[j] {
                out[i][0] += (c2[i][0] - cents[i][0]) / h * norm;
                out[i][1] += (c2[i][1] - cents[i][1]) / h * norm;
            }
        }
        Ok(out)
    }

    /// One explicit Euler step of the unicycle dynamics.
    pub fn step(&mut self) -> Result<StepReport, SwarmError> {
        let part = self.partition();
        let cost = cost_of(&self.density, &part, &self.positions());
        let pdot = self.desired_velocities(&part)?;
        let (w, h) = (self.density.width, self.density.height);
        let dt = self.params.dt;
        let mut max_speed = 0.0f64;
        for (r, pd) in self.robots.iter_mut().zip(&pdot) {
            max_speed = max_speed.max(pd[0].hypot(pd[1]));
            let lambda = self.params.lambda;
            let (v, omega) = to_unicycle(*pd, r.theta, lambda);
            r.v = v;
            r.omega = omega;
            let (s, c) = r.theta.sin_cos();
            let [bx, by] = r.body(lambda);
            let theta = r.theta + dt * omega;
            let (s2, c2) = theta.sin_cos();
            r.x = (bx + dt * v * c + lambda * c2).clamp(0.0, w);
            r.y = (by + dt * v * s + lambda * s2).clamp(0.0, h);
            r.theta = wrap_angle(theta);
        }
        separate_duplicates(&mut self.robots);
        self.last_speed = max_speed;
        Ok(StepReport { cost, max_speed })
    }

    /// True iff the last step commanded every robot slower than the settle
    /// speed.
    pub fn settled(&self) -> bool {
        self.last_speed < self.params.settle_speed
    }

    /// Step until settled; returns the number of steps taken, or `None` if
    /// `max_steps` ran out first.
    pub fn run_until_settled(&mut self, max_steps: usize) -> Result<Option<usize>, SwarmError> {
        for i in 1..=max_steps {
            self.step()?;
            if self.settled() {
                return Ok(Some(i));
            }
        }
        Ok(None)
    }

    /// CSV rows `robot,x,y,theta,v,omega`.
    pub fn write_poses_csv<W: Write>(&self, out: W) -> Result<(), SwarmError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["robot", "x", "y", "theta", "v", "omega"])?;
        for (i, r) in self.robots.iter().enumerate() {
            w.write_record(&[
                i.to_string(),
                r.x.to_string(),
                r.y.to_string(),
                r.theta.to_string(),
                r.v.to_string(),
                r.omega.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Settle test on raw commanded velocities.
pub fn all_below(pdot: &[[f64; 2]], settle_speed: f64) -> bool {
    pdot.iter().all(|v| v[0].hypot(v[1]) < settle_speed)
}

const DUPLICATE_NUDGE: f64 = 1e-9;

fn separate_duplicates(robots: &mut [RobotPose]) {
    for i in 1..robots.len() {
        let mut bump = 1.0;
        while robots[..i]
            .iter()
            .any(|r| r.x == robots[i].x && r.y == robots[i].y)
        {
            // nudge inward so clamped robots stay distinct
            robots[i].x += if robots[i].x > 0.0 {
                -DUPLICATE_NUDGE
            } else {
                DUPLICATE_NUDGE
            } * bump;
            robots[i].y += if robots[i].y > 0.0 {
                -DUPLICATE_NUDGE
            } else {
                DUPLICATE_NUDGE
            } * bump;
            bump += 1.0;
        }
    }
}

pub fn partition_at(density: &DensityField, positions: &[[f64; 2]]) -> Partition {
    let (nx, ny) = (density.nx, density.ny);
    let mut owner = Vec::with_capacity(nx * ny);
    for iy in 0..ny {
        for ix in 0..nx {
            let q = density.cell_center(ix, iy);
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (i, p) in positions.iter().enumerate() {
                let d = (q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2);
                if d < best_d {
                    best_d = d;
                    best = i;
                }
            }
            owner.push(best);
        }
    }
    let mut adj = vec![vec![false; positions.len()]; positions.len()];
    for iy in 0..ny {
        for ix in 0..nx {
            let a = owner[iy * nx + ix];
            if ix + 1 < nx {
                let b = owner[iy * nx + ix + 1];
                adj[a][b] = true;
                adj[b][a] = true;
            }
            if iy + 1 < ny {
                let b = owner[(iy + 1) * nx + ix];
                adj[a][b] = true;
                adj[b][a] = true;
            }
        }
    }
    let neighbors = adj
        .iter()
        .enumerate()
        .map(|(i, row)| {
            row.iter()
                .enumerate()
                .filter(|&(j, &on)| on && j != i)
                .map(|(j, _)| j)
                .collect()
        })
        .collect();
    Partition { owner, neighbors }
}

pub fn centroids_of(
    density: &DensityField,
    part: &Partition,
    robots: usize,
) -> Result<Vec<[f64; 2]>, SwarmError> {
    let mut mass = vec![0.0; robots];
    let mut first = vec![[0.0; 2]; robots];
    for iy in 0..density.ny {
        for ix in 0..density.nx {
            let k = iy * density.nx + ix;
            let o = part.owner[k];
            let phi = density.phi[k];
            let q = density.cell_center(ix, iy);
            mass[o] += phi;
            first[o][0] += phi * q[0];
            first[o][1] += phi * q[1];
        }
    }
    mass.iter()
        .zip(first)
        .enumerate()
        .map(|(i, (&m, f))| {
            if m > 0.0 {
                Ok([f[0] / m, f[1] / m])
            } else {
                Err(SwarmError::EmptyCell(i))
            }
        })
        .collect()
}

pub fn cost_of(density: &DensityField, part: &Partition, positions: &[[f64; 2]]) -> f64 {
    let mut h = 0.0;
    for iy in 0..density.ny {
        for ix in 0..density.nx {
            let k = iy * density.nx + ix;
            let p = positions[part.owner[k]];
            let q = density.cell_center(ix, iy);
            h += ((q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2)) * density.phi[k];
        }
    }
    h * density.cell_area()
}
