//! Spherical shell discretization of the exterior of a unit particle.
//!
//! Nodes sit at `r_i w_q` for a radial mesh `r_0 = 1 < ... < r_N` and the
//! nodes `w_q` of an [`AngularGrid`]. The Dirichlet energy is a weighted sum
//! of squared differences along radial, polar and azimuthal edges; the
//! region beyond the last shell is closed by the exact exterior energy of
//! the band-limited trace, so the outer boundary sits at infinity.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{projected_update, AnchoringSpec, RelaxReport, RelaxSchedule};
use crate::error::{Error, Result};
use crate::field::VectorField;
use crate::sph::{AngularGrid, SphericalTransform};
use crate::Vec3;

const NODE_TOL: f64 = 1e-12;

/// Strictly increasing radii, geometric within segments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialMesh {
    radii: Vec<f64>,
}

impl RadialMesh {
    /// Geometric mesh from `r_in` to `r_out` with spacing ratio at most
    /// `ratio`; every breakpoint inside the range becomes a node.
    pub fn geometric(r_in: f64, r_out: f64, ratio: f64, breakpoints: &[f64]) -> Result<Self> {
        if !(r_in > 0.0 && r_out > r_in && ratio > 1.0) {
            return Err(Error::invalid(format!(
                "bad radial mesh: r_in = {r_in}, r_out = {r_out}, ratio = {ratio}"
            )));
        }
        let mut ends: Vec<f64> = breakpoints
            .iter()
            .copied()
            .filter(|&b| b > r_in * (1.0 + NODE_TOL) && b < r_out * (1.0 - NODE_TOL))
            .collect();
        ends.push(r_in);
        ends.push(r_out);
        ends.sort_by(f64::total_cmp);
        ends.dedup_by(|a, b| (*a - *b).abs() <= NODE_TOL * *b);
        let mut radii = vec![r_in];
        for w in ends.windows(2) {
            let (a, b) = (w[0], w[1]);
            let n = ((b / a).ln() / ratio.ln()).ceil().max(1.0) as usize;
            for k in 1..=n {
                radii.push(if k == n { b } else { a * (b / a).powf(k as f64 / n as f64) });
            }
        }
        Ok(Self { radii })
    }

    pub fn from_radii(radii: Vec<f64>) -> Result<Self> {
        if radii.len() < 2 || radii[0] <= 0.0 || radii.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("radii must be positive and strictly increasing"));
        }
        Ok(Self { radii })
    }

    /// Inserts the geometric midpoint of every interval.
    pub fn refined(&self) -> Self {
        let mut radii = Vec::with_capacity(2 * self.radii.len() - 1);
        for w in self.radii.windows(2) {
            radii.push(w[0]);
            radii.push((w[0] * w[1]).sqrt());
        }
        radii.push(*self.radii.last().unwrap());
        Self { radii }
    }

    /// The mesh up to the node at `r_max`.
    pub fn truncated(&self, r_max: f64) -> Result<Self> {
        let i = self
            .node_index(r_max)
            .ok_or_else(|| Error::invalid(format!("radius {r_max} is not a mesh node")))?;
        if i == 0 {
            return Err(Error::invalid("truncation leaves a single shell"));
        }
        Ok(Self {
            radii: self.radii[..=i].to_vec(),
        })
    }

    pub fn node_index(&self, r: f64) -> Option<usize> {
        self.radii.iter().position(|&x| (x - r).abs() <= NODE_TOL * r.max(1.0))
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn len(&self) -> usize {
        self.radii.len()
    }

    pub fn is_empty(&self) -> bool {
        self.radii.is_empty()
    }

    pub fn inner(&self) -> f64 {
        self.radii[0]
    }

    pub fn outer(&self) -> f64 {
        *self.radii.last().unwrap()
    }

    /// Length of the dual cell of each node (half cells at the ends).
    pub fn dual_lengths(&self) -> Vec<f64> {
        let r = &self.radii;
        let n = r.len();
        (0..n)
            .map(|i| {
                let lo = if i == 0 { r[0] } else { 0.5 * (r[i - 1] + r[i]) };
                let hi = if i + 1 == n { r[n - 1] } else { 0.5 * (r[i] + r[i + 1]) };
                hi - lo
            })
            .collect()
    }
}

/// Product of a radial mesh and an angular grid; node `(i, q)` has index
/// `i * n_ang + q`.
#[derive(Debug, Clone)]
pub struct ShellMesh {
    radial: RadialMesh,
    transform: SphericalTransform,
}

impl ShellMesh {
    pub fn new(radial: RadialMesh, l_ang: usize) -> Result<Self> {
        let transform = SphericalTransform::new(l_ang, AngularGrid::for_band_limit(l_ang))?;
        Ok(Self { radial, transform })
    }

    pub fn with_radial(&self, radial: RadialMesh) -> Self {
        Self {
            radial,
            transform: self.transform.clone(),
        }
    }

    pub fn radial(&self) -> &RadialMesh {
        &self.radial
    }

    pub fn transform(&self) -> &SphericalTransform {
        &self.transform
    }

    pub fn grid(&self) -> &AngularGrid {
        self.transform.grid()
    }

    pub fn l_ang(&self) -> usize {
        self.transform.l_max()
    }

    pub fn n_ang(&self) -> usize {
        self.grid().len()
    }

    pub fn n_shells(&self) -> usize {
        self.radial.len()
    }

    pub fn len(&self) -> usize {
        self.n_shells() * self.n_ang()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn node(&self, shell: usize, q: usize) -> usize {
        shell * self.n_ang() + q
    }

    /// Position of a node relative to the particle center, in mesh units.
    pub fn point(&self, node: usize) -> Vec3 {
        let (i, q) = (node / self.n_ang(), node % self.n_ang());
        self.grid().directions()[q] * self.radial.radii()[i]
    }

    /// Edges `(a, b, W)` with energy `W |n_a - n_b|^2`.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        let g = self.grid();
        let (nt, np) = (g.n_theta(), g.n_phi());
        let dphi = g.delta_phi();
        let r = self.radial.radii();
        let dr = self.radial.dual_lengths();
        let theta: Vec<f64> = g.cos_theta().iter().map(|c| c.clamp(-1.0, 1.0).acos()).collect();
        // Polar cell boundaries from the cumulative Gauss weights.
        let mut cos_b = vec![1.0];
        let mut acc = 0.0;
        for w in g.theta_weights() {
            acc += w;
            cos_b.push(1.0 - acc);
        }
        let theta_b: Vec<f64> = cos_b.iter().map(|c| c.clamp(-1.0, 1.0).acos()).collect();
        let mut edges = Vec::new();
        for i in 0..r.len() {
            for t in 0..nt {
                for p in 0..np {
                    let q = t * np + p;
                    let a = self.node(i, q);
                    if i + 1 < r.len() {
                        let w = g.weights()[q] * r[i] * r[i + 1] / (r[i + 1] - r[i]);
                        edges.push((a, self.node(i + 1, q), w));
                    }
                    if t + 1 < nt {
                        let w = dphi * theta_b[t + 1].sin() * dr[i] / (theta[t + 1] - theta[t]);
                        edges.push((a, self.node(i, q + np), w));
                    }
                    if np > 1 {
                        let w = dr[i] * (theta_b[t + 1] - theta_b[t]) / (theta[t].sin() * dphi);
                        let next = t * np + (p + 1) % np;
                        if np > 2 || p == 0 {
                            edges.push((a, self.node(i, next), w));
                        }
                    }
                }
            }
        }
        edges
    }
}

/// Quadratic form `scale * sum_{p,q} K_pq <n_p - offset, n_q - offset>` over
/// a subset of nodes.
#[derive(Debug, Clone)]
pub struct DenseBlock {
    pub nodes: Vec<usize>,
    pub matrix: DMatrix<f64>,
    pub offset: Vec3,
    pub scale: f64,
}

/// Energy of unit vectors on a graph: weighted edge differences, weak
/// anchors `a |n - g|^2`, and dense coupling blocks. Fixed nodes are never
/// updated.
#[derive(Debug, Clone)]
pub struct GraphEnergy {
    n: usize,
    edges: Vec<(usize, usize, f64)>,
    offsets: Vec<usize>,
    adjacency: Vec<(usize, f64)>,
    fixed: Vec<bool>,
    anchors: Vec<Option<(f64, Vec3)>>,
    blocks: Vec<DenseBlock>,
    /// `(block, position)` for every node in a block.
    block_of: Vec<Option<(usize, usize)>>,
}

impl GraphEnergy {
    pub fn new(n: usize, edges: Vec<(usize, usize, f64)>) -> Result<Self> {
        let mut degree = vec![0usize; n];
        for &(a, b, w) in &edges {
            if a >= n || b >= n || a == b || !(w >= 0.0 && w.is_finite()) {
                return Err(Error::invalid(format!("bad edge ({a}, {b}, {w})")));
            }
            degree[a] += 1;
            degree[b] += 1;
        }
        let mut offsets = vec![0usize; n + 1];
        for i in 0..n {
            offsets[i + 1] = offsets[i] + degree[i];
        }
        let mut fill = offsets.clone();
        let mut adjacency = vec![(0usize, 0.0); offsets[n]];
        for &(a, b, w) in &edges {
            adjacency[fill[a]] = (b, w);
            fill[a] += 1;
            adjacency[fill[b]] = (a, w);
            fill[b] += 1;
        }
        Ok(Self {
            n,
            edges,
            offsets,
            adjacency,
            fixed: vec![false; n],
            anchors: vec![None; n],
            blocks: Vec::new(),
            block_of: vec![None; n],
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn fix(&mut self, node: usize) {
        self.fixed[node] = true;
    }

    pub fn is_fixed(&self, node: usize) -> bool {
        self.fixed[node]
    }

    pub fn anchor(&mut self, node: usize, weight: f64, target: Vec3) {
        self.anchors[node] = Some((weight, target));
    }

    pub fn add_block(&mut self, block: DenseBlock) -> Result<()> {
        let m = block.nodes.len();
        if block.matrix.nrows() != m || block.matrix.ncols() != m {
            return Err(Error::LengthMismatch {
                expected: m,
                got: block.matrix.nrows(),
            });
        }
        let b = self.blocks.len();
        for (pos, &node) in block.nodes.iter().enumerate() {
            if node >= self.n || self.block_of[node].is_some() {
                return Err(Error::invalid(format!("node {node} is out of range or already in a block")));
            }
            self.block_of[node] = Some((b, pos));
        }
        self.blocks.push(block);
        Ok(())
    }

    pub fn edge_energy(&self, values: &[Vec3]) -> f64 {
        self.edges
            .iter()
            .map(|&(a, b, w)| w * (values[a] - values[b]).norm_squared())
            .sum()
    }

    pub fn anchor_energy(&self, values: &[Vec3]) -> f64 {
        self.anchors
            .iter()
            .zip(values)
            .filter_map(|(a, v)| a.map(|(w, g)| w * (v - g).norm_squared()))
            .sum()
    }

    pub fn block_energy(&self, values: &[Vec3]) -> f64 {
        self.blocks
            .iter()
            .map(|b| {
                let d: Vec<Vec3> = b.nodes.iter().map(|&i| values[i] - b.offset).collect();
                let mut e = 0.0;
                for (p, dp) in d.iter().enumerate() {
                    let mut s = Vec3::zeros();
                    for (q, dq) in d.iter().enumerate() {
                        s += dq * b.matrix[(p, q)];
                    }
                    e += dp.dot(&s);
                }
                b.scale * e
            })
            .sum()
    }

    pub fn energy(&self, values: &[Vec3]) -> f64 {
        self.edge_energy(values) + self.anchor_energy(values) + self.block_energy(values)
    }

    /// The vector `b` with local energy `const - 2 <n_node, b>`.
    fn local_field(&self, values: &[Vec3], node: usize) -> Vec3 {
        let mut b = Vec3::zeros();
        for &(m, w) in &self.adjacency[self.offsets[node]..self.offsets[node + 1]] {
            b += values[m] * w;
        }
        if let Some((w, g)) = self.anchors[node] {
            b += g * w;
        }
        if let Some((bi, pos)) = self.block_of[node] {
            let blk = &self.blocks[bi];
            let mut s = blk.offset * blk.matrix[(pos, pos)];
            for (q, &m) in blk.nodes.iter().enumerate() {
                if q != pos {
                    s -= (values[m] - blk.offset) * blk.matrix[(pos, q)];
                }
            }
            b += s * blk.scale;
        }
        b
    }

    /// Gradient of the energy with respect to each free value.
    pub fn gradient(&self, values: &[Vec3]) -> Vec<Vec3> {
        (0..self.n)
            .map(|i| {
                if self.fixed[i] {
                    return Vec3::zeros();
                }
                let deg: f64 = self.adjacency[self.offsets[i]..self.offsets[i + 1]].iter().map(|e| e.1).sum();
                let mut diag = deg;
                if let Some((w, _)) = self.anchors[i] {
                    diag += w;
                }
                let mut g = values[i] * diag - self.local_field(values, i);
                if let Some((bi, pos)) = self.block_of[i] {
                    let blk = &self.blocks[bi];
                    g += values[i] * (blk.scale * blk.matrix[(pos, pos)]);
                }
                g * 2.0
            })
            .collect()
    }

    /// Tangential part of the gradient, `max_i |P_{n_i} grad_i|`.
    pub fn tangential_residual(&self, values: &[Vec3]) -> f64 {
        self.gradient(values)
            .iter()
            .zip(values)
            .map(|(g, n)| (g - n * n.dot(g)).norm())
            .fold(0.0, f64::max)
    }

    /// Projected Gauss–Seidel in node order with geodesic over-relaxation.
    pub fn relax(&self, values: &mut [Vec3], schedule: &RelaxSchedule) -> Result<RelaxReport> {
        schedule.validate()?;
        if values.len() != self.n {
            return Err(Error::LengthMismatch {
                expected: self.n,
                got: values.len(),
            });
        }
        let omega = schedule.over_relaxation;
        let mut energy = self.energy(values);
        let mut report = RelaxReport {
            sweeps: 0,
            energies: vec![energy],
            converged: false,
            zero_field_events: 0,
        };
        let free: Vec<usize> = (0..self.n).filter(|&i| !self.fixed[i]).collect();
        while report.sweeps < schedule.max_sweeps {
            let mut decrease = 0.0;
            for &i in &free {
                let b = self.local_field(values, i);
                let (v, d, kicked) = projected_update(&values[i], b, omega);
                values[i] = v;
                decrease += d;
                report.zero_field_events += kicked as usize;
            }
            report.sweeps += 1;
            energy -= decrease;
            report.energies.push(energy);
            if decrease < schedule.energy_tol {
                report.converged = true;
                break;
            }
        }
        *report.energies.last_mut().unwrap() = self.energy(values);
        Ok(report)
    }
}

/// Graph energy of one particle on a shell mesh: anchoring on the first
/// shell and the exterior closure on the last. Returns the energy and an
/// initial state (`n_inf` with the Dirichlet data written in).
pub fn single_particle_energy(mesh: &ShellMesh, spec: &AnchoringSpec, n_inf: Vec3) -> Result<(GraphEnergy, Vec<Vec3>)> {
    spec.validate()?;
    let mut graph = GraphEnergy::new(mesh.len(), mesh.edges())?;
    let mut values = vec![n_inf; mesh.len()];
    anchor_first_shell(&mut graph, &mut values, mesh, spec, 0, 1.0);
    let last = mesh.n_shells() - 1;
    let k = crate::exterior::single_sphere_nodal_dtn(mesh.transform(), mesh.radial().outer());
    graph.add_block(DenseBlock {
        nodes: (0..mesh.n_ang()).map(|q| mesh.node(last, q)).collect(),
        matrix: k,
        offset: n_inf,
        scale: 1.0,
    })?;
    Ok((graph, values))
}

/// Writes the anchoring of a particle whose first shell starts at node
/// `base`; the particle surface has radius `radius` in mesh units.
pub(crate) fn anchor_first_shell(
    graph: &mut GraphEnergy,
    values: &mut [Vec3],
    mesh: &ShellMesh,
    spec: &AnchoringSpec,
    base: usize,
    radius: f64,
) {
    for (q, w) in mesh.grid().directions().iter().enumerate() {
        let g = spec.map.eval(w);
        let node = base + mesh.node(0, q);
        if spec.is_strong() {
            graph.fix(node);
            values[node] = g;
        } else {
            graph.anchor(node, spec.weight * mesh.grid().weights()[q] * radius * radius, g);
        }
    }
}

/// Field on a shell mesh around `center`, with physical point
/// `center + scale * y` for mesh coordinate `y`.
#[derive(Debug, Clone)]
pub struct ShellField {
    mesh: ShellMesh,
    values: Vec<Vec3>,
    center: Vec3,
    scale: f64,
    /// Per-shell expansion coefficients.
    coeffs: Vec<Vec<Vec3>>,
}

impl ShellField {
    pub fn new(mesh: ShellMesh, values: Vec<Vec3>, center: Vec3, scale: f64) -> Result<Self> {
        if values.len() != mesh.len() {
            return Err(Error::LengthMismatch {
                expected: mesh.len(),
                got: values.len(),
            });
        }
        let na = mesh.n_ang();
        let coeffs = values
            .chunks(na)
            .map(|shell| mesh.transform().forward(shell))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            mesh,
            values,
            center,
            scale,
            coeffs,
        })
    }

    pub fn mesh(&self) -> &ShellMesh {
        &self.mesh
    }

    pub fn values(&self) -> &[Vec3] {
        &self.values
    }

    pub fn center(&self) -> Vec3 {
        self.center
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn shell(&self, i: usize) -> &[Vec3] {
        let na = self.mesh.n_ang();
        &self.values[i * na..(i + 1) * na]
    }

    /// Whether a physical point lies within the meshed shell region.
    pub fn covers(&self, x: &Vec3) -> bool {
        let r = (x - self.center).norm() / self.scale;
        r >= self.mesh.radial().inner() * (1.0 - NODE_TOL) && r <= self.mesh.radial().outer() * (1.0 + NODE_TOL)
    }

    /// Unnormalized interpolant: synthesis on the bracketing shells, linear
    /// in `1/r` between them.
    pub fn sample_raw(&self, x: &Vec3) -> Vec3 {
        let y = (x - self.center) / self.scale;
        let radii = self.mesh.radial().radii();
        let r = y.norm().clamp(radii[0], *radii.last().unwrap());
        let w = if y.norm() > 0.0 { y / y.norm() } else { Vec3::z() };
        let i = radii.partition_point(|&x| x <= r).clamp(1, radii.len() - 1);
        let (r0, r1) = (radii[i - 1], radii[i]);
        let t = (1.0 / r0 - 1.0 / r) / (1.0 / r0 - 1.0 / r1);
        let table = self.mesh.transform().table();
        let mut basis = vec![0.0; table.len()];
        table.eval_all_unchecked(&w, &mut basis);
        let synth = |c: &[Vec3]| c.iter().zip(&basis).fold(Vec3::zeros(), |acc, (a, p)| acc + a * *p);
        synth(&self.coeffs[i - 1]) * (1.0 - t) + synth(&self.coeffs[i]) * t
    }
}

impl VectorField for ShellField {
    fn sample(&self, x: &Vec3) -> Vec3 {
        let v = self.sample_raw(x);
        let nv = v.norm();
        if nv > 0.0 {
            v / nv
        } else {
            Vec3::z()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::BoundaryMap;
    use std::f64::consts::PI;

    fn tilt(alpha: f64) -> AnchoringSpec {
        AnchoringSpec::strong(BoundaryMap::UniformTilt {
            n_inf: Vec3::z(),
            tilt: Vec3::x() * alpha.tan(),
        })
    }

    #[test]
    fn mesh_hits_breakpoints_and_refines() {
        let m = RadialMesh::geometric(1.0, 64.0, 1.1, &[13.6, 100.0]).unwrap();
        assert!(m.node_index(13.6).is_some());
        assert_eq!(m.outer(), 64.0);
        let f = m.refined();
        assert_eq!(f.len(), 2 * m.len() - 1);
        assert!(f.radii().windows(2).all(|w| w[1] / w[0] <= 1.1f64.sqrt() * (1.0 + 1e-12)));
        assert_eq!(f.truncated(13.6).unwrap().len(), 2 * m.truncated(13.6).unwrap().len() - 1);
    }

    #[test]
    fn edge_weights_integrate_linear_fields_exactly_in_angle() {
        // A field affine in the node position has angular energy equal to
        // the continuous one up to the polar difference error.
        let mesh = ShellMesh::new(RadialMesh::from_radii(vec![1.0, 2.0]).unwrap(), 8).unwrap();
        let total: f64 = mesh.edges().iter().filter(|e| e.0 / mesh.n_ang() == e.1 / mesh.n_ang()).map(|e| e.2).sum();
        assert!(total > 0.0);
        let radial: f64 = mesh.edges().iter().filter(|e| e.0 / mesh.n_ang() != e.1 / mesh.n_ang()).map(|e| e.2).sum();
        assert!((radial - 4.0 * PI * 2.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_tilt_recovers_exact_solution() {
        let alpha: f64 = 0.1;
        let radial = RadialMesh::geometric(1.0, 16.0, 1.1, &[]).unwrap();
        let mesh = ShellMesh::new(radial, 4).unwrap();
        let (graph, mut values) = single_particle_energy(&mesh, &tilt(alpha), Vec3::z()).unwrap();
        let schedule = RelaxSchedule {
            energy_tol: 1e-15,
            over_relaxation: 1.8,
            ..Default::default()
        };
        let report = graph.relax(&mut values, &schedule).unwrap();
        assert!(report.converged);
        assert!(report.energies.windows(2).all(|w| w[1] <= w[0] + 1e-14));
        let mu = report.final_energy();
        let exact = 4.0 * PI * alpha * alpha;
        assert!((mu - exact).abs() < 1e-3 * exact, "{mu} vs {exact}");
        let r = &mesh.radial().radii()[10];
        let n = values[mesh.node(10, 3)];
        let expect = Vec3::new((alpha / r).sin(), 0.0, (alpha / r).cos());
        assert!((n - expect).norm() < 1e-4 * alpha);
        assert!(graph.tangential_residual(&values) < 1e-6);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mesh = ShellMesh::new(RadialMesh::geometric(1.0, 4.0, 1.5, &[]).unwrap(), 3).unwrap();
        let spec = AnchoringSpec::weak(BoundaryMap::Radial, 1.5);
        let (graph, mut values) = single_particle_energy(&mesh, &spec, Vec3::z()).unwrap();
        for (i, v) in values.iter_mut().enumerate() {
            *v = Vec3::new((i as f64).sin(), (0.3 * i as f64).cos(), 1.0).normalize();
        }
        let grad = graph.gradient(&values);
        for i in (0..values.len()).step_by(7) {
            let eps = 1e-3;
            let mut p = values.clone();
            p[i].y += eps;
            let mut m = values.clone();
            m[i].y -= eps;
            let fd = (graph.energy(&p) - graph.energy(&m)) / (2.0 * eps);
            assert!((fd - grad[i].y).abs() <= 1e-6 * grad[i].y.abs().max(1e-3), "{fd} vs {}", grad[i].y);
        }
    }

    #[test]
    fn shell_field_interpolates_one_over_r() {
        let mesh = ShellMesh::new(RadialMesh::geometric(1.0, 8.0, 1.3, &[]).unwrap(), 4).unwrap();
        let c = Vec3::new(0.1, -0.2, 0.05);
        let values: Vec<Vec3> = (0..mesh.len()).map(|i| Vec3::z() + c / mesh.point(i).norm()).collect();
        let f = ShellField::new(mesh, values, Vec3::new(1.0, 0.0, 0.0), 0.5).unwrap();
        let x = Vec3::new(1.0, 0.0, 0.0) + Vec3::new(0.3, 0.4, 1.2) * 0.5;
        let r = Vec3::new(0.3, 0.4, 1.2).norm();
        assert!((f.sample_raw(&x) - (Vec3::z() + c / r)).norm() < 1e-12);
    }
}
