//! Gaussian-mixture coverage densities rasterized over the arena.

use std::f64::consts::TAU;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::SwarmError;
use crate::dictionary::{ArenaSpec, PolygonSpec};

/// Variance of the isotropic vertex components and of edge components
/// across the edge, per unit of ‖w‖.
pub const NARROW_VARIANCE: f64 = 0.007;
/// Edge component variance along the edge, per unit of ‖w‖.
pub const WIDE_VARIANCE: f64 = 0.07;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gaussian {
    pub mean: [f64; 2],
    /// Row-major symmetric covariance.
    pub cov: [[f64; 2]; 2],
    pub weight: f64,
}

impl Gaussian {
    pub fn pdf(&self, q: [f64; 2]) -> f64 {
        let [[a, b], [_, d]] = self.cov;
        let det = a * d - b * b;
        let dx = q[0] - self.mean[0];
        let dy = q[1] - self.mean[1];
        let m = (d * dx * dx - 2.0 * b * dx * dy + a * dy * dy) / det;
        (-0.5 * m).exp() / (TAU * det.sqrt())
    }

    pub fn eigenvalues(&self) -> [f64; 2] {
        let [[a, b], [_, d]] = self.cov;
        let half_tr = 0.5 * (a + d);
        let r = (0.25 * (a - d) * (a - d) + b * b).sqrt();
        [half_tr - r, half_tr + r]
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Gmm(pub Vec<Gaussian>);

impl Gmm {
    pub fn pdf(&self, q: [f64; 2]) -> f64 {
        self.0.iter().map(|g| g.weight * g.pdf(q)).sum()
    }
}

/// One isotropic component per vertex and two elongated components per edge,
/// equally weighted.
///
/// For an edge `v1 -> v2`, `w = 2 (v2 - v1) / 3` and the components sit at
/// `v1 + w/2` and `v1 + w`. The vertex components use the `w` of the edge
/// leaving that vertex; for a regular polygon every edge has the same `‖w‖`.
pub fn polygon_to_gmm(poly: &PolygonSpec) -> Result<Gmm, SwarmError> {
    if poly.n_sides < 3 || !(poly.radius > 0.0) || poly.center.iter().any(|c| !c.is_finite()) {
        return Err(SwarmError::DegeneratePolygon);
    }
    let verts = poly.vertices();
    let n = verts.len();
    let weight = 1.0 / (3 * n) as f64;
    let mut comps = Vec::with_capacity(3 * n);
    for (i, &v1) in verts.iter().enumerate() {
        let v2 = verts[(i + 1) % n];
        let w = [2.0 * (v2[0] - v1[0]) / 3.0, 2.0 * (v2[1] - v1[1]) / 3.0];
        let norm = w[0].hypot(w[1]);
        let iso = NARROW_VARIANCE * norm;
        comps.push(Gaussian {
            mean: v1,
            cov: [[iso, 0.0], [0.0, iso]],
            weight,
        });
        // eigenbasis [w/|w|, w_perp/|w|] with w_perp = (w_y, -w_x)
        let e1 = [w[0] / norm, w[1] / norm];
        let e2 = [e1[1], -e1[0]];
        let (l1, l2) = (WIDE_VARIANCE * norm, NARROW_VARIANCE * norm);
        let cov = [
            [
                l1 * e1[0] * e1[0] + l2 * e2[0] * e2[0],
                l1 * e1[0] * e1[1] + l2 * e2[0] * e2[1],
            ],
            [
                l1 * e1[1] * e1[0] + l2 * e2[1] * e2[0],
                l1 * e1[1] * e1[1] + l2 * e2[1] * e2[1],
            ],
        ];
        for t in [0.5, 1.0] {
            comps.push(Gaussian {
                mean: [v1[0] + t * w[0], v1[1] + t * w[1]],
                cov,
                weight,
            });
        }
    }
    Ok(Gmm(comps))
}

/// Rasterized density `φ` over an `nx × ny` grid of cell centers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityField {
    pub gmm: Gmm,
    pub nx: usize,
    pub ny: usize,
    pub width: f64,
    pub height: f64,
    /// Row-major, `phi[iy * nx + ix]`.
    pub phi: Vec<f64>,
}

impl DensityField {
    /// Sample the mixture at cell centers, add `floor`, and scale so that
    /// `Σ φ · cell_area = 1`.
    pub fn rasterize(
        gmm: Gmm,
        arena: &ArenaSpec,
        nx: usize,
        ny: usize,
        floor: f64,
    ) -> Result<Self, SwarmError> {
        if nx == 0 || ny == 0 {
            return Err(SwarmError::Grid(nx, ny));
        }
        if !(floor > 0.0) {
            return Err(SwarmError::Parameter("density floor must be positive"));
        }
        let width = arena.scaled_width();
        let height = arena.scaled_height();
        let mut field = Self {
            gmm,
            nx,
            ny,
            width,
            height,
            phi: Vec::new(),
        };
        let mut phi = Vec::with_capacity(nx * ny);
        for iy in 0..ny {
            for ix in 0..nx {
                phi.push(field.gmm.pdf(field.cell_center(ix, iy)) + floor);
            }
        }
        let total: f64 = phi.iter().sum::<f64>() * field.cell_area();
        phi.iter_mut().for_each(|v| *v /= total);
        field.phi = phi;
        Ok(field)
    }

    pub fn from_polygon(
        poly: &PolygonSpec,
        arena: &ArenaSpec,
        nx: usize,
        ny: usize,
        floor: f64,
    ) -> Result<Self, SwarmError> {
        Self::rasterize(polygon_to_gmm(poly)?, arena, nx, ny, floor)
    }

    /// Uniform density, mostly for tests and the idle arena.
    pub fn uniform(arena: &ArenaSpec, nx: usize, ny: usize) -> Result<Self, SwarmError> {
        Self::rasterize(Gmm::default(), arena, nx, ny, 1.0)
    }

    pub fn dx(&self) -> f64 {
        self.width / self.nx as f64
    }

    pub fn dy(&self) -> f64 {
        self.height / self.ny as f64
    }

    pub fn cell_area(&self) -> f64 {
        self.dx() * self.dy()
    }

    pub fn cell_center(&self, ix: usize, iy: usize) -> [f64; 2] {
        [(ix as f64 + 0.5) * self.dx(), (iy as f64 + 0.5) * self.dy()]
    }

    pub fn cell_count(&self) -> usize {
        self.nx * self.ny
    }

    /// `Σ φ · cell_area`.
    pub fn mass(&self) -> f64 {
        self.phi.iter().sum::<f64>() * self.cell_area()
    }

    /// CSV rows `ix,iy,x,y,phi`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), SwarmError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["ix", "iy", "x", "y", "phi"])?;
        for iy in 0..self.ny {
            for ix in 0..self.nx {
                let [x, y] = self.cell_center(ix, iy);
                w.write_record(&[
                    ix.to_string(),
                    iy.to_string(),
                    x.to_string(),
                    y.to_string(),
                    self.phi[iy * self.nx + ix].to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dictionary::DictionarySpec;

    fn poly(n: usize) -> PolygonSpec {
        PolygonSpec {
            center: [0.75, 0.5],
            n_sides: n,
            radius: 0.3,
        }
    }

    #[test]
    fn component_counts() {
        assert_eq!(polygon_to_gmm(&poly(3)).unwrap().0.len(), 9);
        assert_eq!(polygon_to_gmm(&poly(4)).unwrap().0.len(), 12);
        assert_eq!(polygon_to_gmm(&poly(5)).unwrap().0.len(), 15);
    }

    #[test]
    fn weights_sum_to_one() {
        let g = polygon_to_gmm(&poly(5)).unwrap();
        let s: f64 = g.0.iter().map(|c| c.weight).sum();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn edge_component_eigenvalues() {
        let p = poly(3);
        let v = p.vertices();
        let w_norm = 2.0 / 3.0 * (v[1][0] - v[0][0]).hypot(v[1][1] - v[0][1]);
        let g = polygon_to_gmm(&p).unwrap();
        for (i, c) in g.0.iter().enumerate() {
            let [lo, hi] = c.eigenvalues();
            if i % 3 == 0 {
                assert!((lo - 0.007 * w_norm).abs() < 1e-12);
                assert!((hi - 0.007 * w_norm).abs() < 1e-12);
            } else {
                assert!((lo - 0.007 * w_norm).abs() < 1e-12);
                assert!((hi - 0.07 * w_norm).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn edge_components_lie_on_the_edge() {
        let p = poly(4);
        let v = p.vertices();
        let g = polygon_to_gmm(&p).unwrap();
        let m = g.0[2].mean;
        let expect = [
            v[0][0] + 2.0 * (v[1][0] - v[0][0]) / 3.0,
            v[0][1] + 2.0 * (v[1][1] - v[0][1]) / 3.0,
        ];
        assert!((m[0] - expect[0]).abs() < 1e-12 && (m[1] - expect[1]).abs() < 1e-12);
        // principal axis parallel to the edge
        let c = g.0[1].cov;
        let e = [v[1][0] - v[0][0], v[1][1] - v[0][1]];
        let ce = [
            c[0][0] * e[0] + c[0][1] * e[1],
            c[1][0] * e[0] + c[1][1] * e[1],
        ];
        assert!((ce[0] * e[1] - ce[1] * e[0]).abs() < 1e-12);
    }

    #[test]
    fn degenerate_polygons_are_rejected() {
        let mut p = poly(3);
        p.radius = 0.0;
        assert!(polygon_to_gmm(&p).is_err());
        p.radius = 0.3;
        p.n_sides = 2;
        assert!(polygon_to_gmm(&p).is_err());
    }

    #[test]
    fn grid_density_is_normalized() {
        let d = DictionarySpec::swarm_preset();
        for j in [1, 17, 33, 60] {
            let poly = d.index_polygon(j).unwrap();
            let f = DensityField::from_polygon(&poly, &d.arena, 150, 100, 1e-6).unwrap();
            assert!((f.mass() - 1.0).abs() < 1e-3);
            assert!(f.phi.iter().all(|&v| v > 0.0));
        }
    }

    #[test]
    fn csv_has_one_row_per_cell() {
        let f = DensityField::uniform(&ArenaSpec::default(), 6, 4).unwrap();
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 25);
        assert!(text.starts_with("ix,iy,x,y,phi\n"));
    }
}
