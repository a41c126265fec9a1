//! P1 finite elements on uniformly refined square meshes.
//!
//! Dirichlet conditions are imposed by dropping boundary vertices, so the
//! assembled dimension is the interior vertex count `(2^L − 1)²`.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{cholesky, dot, Matrix, SymMatrix};
use crate::mmio;
use crate::pencil::{uniform_box, AffineOperator, Interval};

#[derive(Clone, Debug)]
pub struct TriMesh {
    pub vertices: Vec<[f64; 2]>,
    /// Counterclockwise vertex triples.
    pub triangles: Vec<[usize; 3]>,
    /// Sorted indices of vertices on the square's boundary.
    pub boundary_vertices: Vec<usize>,
    pub refinement_level: u32,
    /// The square is `domain × domain`.
    pub domain: Interval,
    /// `dof[v]` is the interior unknown of vertex `v`, if any.
    dof: Vec<Option<usize>>,
}

impl TriMesh {
    pub fn interior_count(&self) -> usize {
        self.vertices.len() - self.boundary_vertices.len()
    }

    pub fn dof(&self, vertex: usize) -> Option<usize> {
        self.dof[vertex]
    }

    pub fn signed_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t].map(|v| self.vertices[v]);
        0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
    }

    pub fn centroid(&self, t: usize) -> [f64; 2] {
        let [a, b, c] = self.triangles[t].map(|v| self.vertices[v]);
        [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
    }

    pub fn domain_area(&self) -> f64 {
        let w = self.domain.1 - self.domain.0;
        w * w
    }

    /// Interior vertices per grid row.
    fn interior_width(&self) -> usize {
        (1usize << self.refinement_level) - 1
    }
}

/// Structured grid of `(2^L + 1)²` vertices in row-major order; every cell
/// is cut by its lower-left to upper-right diagonal.
pub fn uniform_square_mesh(domain: Interval, level: u32) -> Result<TriMesh> {
    if level == 0 || level > 12 {
        return Err(Error::InvalidParameter(format!(
            "mesh level must be in 1..=12, got {level}"
        )));
    }
    if !(domain.1 > domain.0) {
        return Err(Error::InvalidParameter(format!("empty domain {domain:?}")));
    }
    let cells = 1usize << level;
    let side = cells + 1;
    let h = (domain.1 - domain.0) / cells as f64;
    let mut vertices = Vec::with_capacity(side * side);
    let mut boundary = Vec::new();
    let mut dof = Vec::with_capacity(side * side);
    let mut next = 0;
    for j in 0..side {
        for i in 0..side {
            // exact endpoints avoid drift at the far edge
            let coord = |k: usize| {
                if k == cells {
                    domain.1
                } else {
                    domain.0 + k as f64 * h
                }
            };
            vertices.push([coord(i), coord(j)]);
            if i == 0 || j == 0 || i == cells || j == cells {
                boundary.push(j * side + i);
                dof.push(None);
            } else {
                dof.push(Some(next));
                next += 1;
            }
        }
    }
    let mut triangles = Vec::with_capacity(2 * cells * cells);
    for j in 0..cells {
        for i in 0..cells {
            let v00 = j * side + i;
            let v10 = v00 + 1;
            let v01 = v00 + side;
            let v11 = v01 + 1;
            triangles.push([v00, v10, v11]);
            triangles.push([v00, v11, v01]);
        }
    }
    Ok(TriMesh {
        vertices,
        triangles,
        boundary_vertices: boundary,
        refinement_level: level,
        domain,
        dof,
    })
}

/// Geometry of one triangle: area and barycentric gradients.
fn element_geometry(mesh: &TriMesh, t: usize) -> (f64, [[f64; 2]; 3]) {
    let [a, b, c] = mesh.triangles[t].map(|v| mesh.vertices[v]);
    let area = mesh.signed_area(t);
    let s = 1.0 / (2.0 * area);
    let g = [
        [(b[1] - c[1]) * s, (c[0] - b[0]) * s],
        [(c[1] - a[1]) * s, (a[0] - c[0]) * s],
        [(a[1] - b[1]) * s, (b[0] - a[0]) * s],
    ];
    (area, g)
}

/// `∫_T ∇φᵢ·∇φⱼ` scaled by the element mean of the coefficient.
fn local_stiffness(mesh: &TriMesh, t: usize, mean_coeff: f64) -> [[f64; 3]; 3] {
    let (area, g) = element_geometry(mesh, t);
    let mut k = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            k[i][j] = mean_coeff * area * (g[i][0] * g[j][0] + g[i][1] * g[j][1]);
        }
    }
    k
}

fn local_mass(mesh: &TriMesh, t: usize) -> [[f64; 3]; 3] {
    let area = mesh.signed_area(t);
    let mut m = [[area / 12.0; 3]; 3];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = area / 6.0;
    }
    m
}

/// Element mean of `f` by the edge-midpoint rule (exact for quadratics).
fn edge_midpoint_mean(mesh: &TriMesh, t: usize, f: &dyn Fn([f64; 2]) -> f64) -> f64 {
    let [a, b, c] = mesh.triangles[t].map(|v| mesh.vertices[v]);
    let mid = |p: [f64; 2], q: [f64; 2]| [(p[0] + q[0]) / 2.0, (p[1] + q[1]) / 2.0];
    (f(mid(a, b)) + f(mid(b, c)) + f(mid(c, a))) / 3.0
}

/// Scatters per-triangle 3×3 blocks into the interior-dof matrix, in
/// triangle order.
fn scatter_interior(mesh: &TriMesh, locals: &[[[f64; 3]; 3]]) -> SymMatrix {
    let n = mesh.interior_count();
    let mut m = Matrix::zeros(n, n);
    for (t, local) in locals.iter().enumerate() {
        let tri = mesh.triangles[t];
        for a in 0..3 {
            let Some(i) = mesh.dof(tri[a]) else { continue };
            for b in 0..3 {
                if let Some(j) = mesh.dof(tri[b]) {
                    m[(i, j)] += local[a][b];
                }
            }
        }
    }
    SymMatrix::symmetrized(&m)
}

fn stiffness_locals(
    mesh: &TriMesh,
    coeff: &(dyn Fn(&TriMesh, usize) -> f64 + Sync),
) -> Vec<[[f64; 3]; 3]> {
    (0..mesh.triangles.len())
        .into_par_iter()
        .map(|t| local_stiffness(mesh, t, coeff(mesh, t)))
        .collect()
}

fn mass_locals(mesh: &TriMesh) -> Vec<[[f64; 3]; 3]> {
    (0..mesh.triangles.len())
        .into_par_iter()
        .map(|t| local_mass(mesh, t))
        .collect()
}

/// Interpretation of `x` in the sine coefficients.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CoefficientCoordinate {
    /// First coordinate mapped affinely onto `(0, 1)`.
    FirstCoordinate,
    /// Euclidean norm `|x|` of the physical point.
    Radial,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum CoefficientFamily {
    /// `γ_σ = 1 + σ χ_{B(0,½)}`.
    Inclusion { kappa: f64 },
    /// `a₀ = 1`, `aₘ = 2⁻ᵐ sin(mπx)` for `m = 1..d`.
    Sine {
        d: usize,
        coordinate: CoefficientCoordinate,
    },
}

#[derive(Clone, Debug)]
pub struct AssembledProblem {
    pub op: AffineOperator,
    pub mass: SymMatrix,
    pub mesh: TriMesh,
    pub family: CoefficientFamily,
    /// Admissible parameter box `S`.
    pub parameter_box: Vec<Interval>,
}

/// Inclusion problem on `(−1,1)²`: coefficient one plus `σ` on the disc of
/// radius ½, resolved per triangle by centroid membership.
pub fn assemble_inclusion(mesh: &TriMesh, kappa: f64) -> Result<AssembledProblem> {
    if mesh.domain != (-1.0, 1.0) {
        return Err(Error::DomainMismatch(format!(
            "inclusion problem lives on (-1,1)^2, mesh covers {:?}^2",
            mesh.domain
        )));
    }
    if !(kappa > 0.0 && kappa < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "kappa must lie in (0, 1), got {kappa}"
        )));
    }
    let a0 = scatter_interior(mesh, &stiffness_locals(mesh, &|_, _| 1.0));
    let inside = |m: &TriMesh, t: usize| {
        let c = m.centroid(t);
        if c[0] * c[0] + c[1] * c[1] < 0.25 {
            1.0
        } else {
            0.0
        }
    };
    let a1 = scatter_interior(mesh, &stiffness_locals(mesh, &inside));
    Ok(AssembledProblem {
        op: AffineOperator::new(a0, vec![a1])?,
        mass: scatter_interior(mesh, &mass_locals(mesh)),
        mesh: mesh.clone(),
        family: CoefficientFamily::Inclusion { kappa },
        parameter_box: vec![(-kappa, kappa)],
    })
}

/// `aₘ(x)` at a physical point.
pub fn sine_coefficient(
    m: usize,
    coordinate: CoefficientCoordinate,
    domain: Interval,
    p: [f64; 2],
) -> f64 {
    let x = match coordinate {
        CoefficientCoordinate::FirstCoordinate => (p[0] - domain.0) / (domain.1 - domain.0),
        CoefficientCoordinate::Radial => (p[0] * p[0] + p[1] * p[1]).sqrt(),
    };
    0.5_f64.powi(m as i32) * (m as f64 * PI * x).sin()
}

/// Sine-coefficient family with `d` terms on the box `[−1, 1]^d`.
///
/// `one_d_variant` selects the single-term problem `a₁ = ½ sin(πx)`, which
/// coincides with the `d = 1` member of the family; it requires `d = 1`.
pub fn assemble_sine_family(
    mesh: &TriMesh,
    d: usize,
    one_d_variant: bool,
) -> Result<AssembledProblem> {
    assemble_sine_family_with(
        mesh,
        d,
        one_d_variant,
        CoefficientCoordinate::FirstCoordinate,
    )
}

pub fn assemble_sine_family_with(
    mesh: &TriMesh,
    d: usize,
    one_d_variant: bool,
    coordinate: CoefficientCoordinate,
) -> Result<AssembledProblem> {
    if d == 0 {
        return Err(Error::InvalidParameter(
            "the sine family needs d >= 1".into(),
        ));
    }
    if one_d_variant && d != 1 {
        return Err(Error::InvalidParameter(format!(
            "the one-dimensional variant has d = 1, got {d}"
        )));
    }
    let a0 = scatter_interior(mesh, &stiffness_locals(mesh, &|_, _| 1.0));
    let domain = mesh.domain;
    let terms = (1..=d)
        .map(|m| {
            let coeff = move |mesh: &TriMesh, t: usize| {
                edge_midpoint_mean(mesh, t, &|p| sine_coefficient(m, coordinate, domain, p))
            };
            scatter_interior(mesh, &stiffness_locals(mesh, &coeff))
        })
        .collect();
    Ok(AssembledProblem {
        op: AffineOperator::new(a0, terms)?,
        mass: scatter_interior(mesh, &mass_locals(mesh)),
        mesh: mesh.clone(),
        family: CoefficientFamily::Sine { d, coordinate },
        parameter_box: uniform_box(d, (-1.0, 1.0)),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct MassReport {
    /// Sum of all entries of the mass matrix before boundary elimination.
    pub full_mass_sum: f64,
    /// Sum of all entries of the interior mass matrix.
    pub interior_mass_sum: f64,
    pub domain_area: f64,
    pub mass_spd: bool,
    pub stiffness_spd: bool,
    /// `max |K_full · 1|` for the unit-coefficient stiffness before elimination.
    pub stiffness_kernel_residual: f64,
}

/// Partition-of-unity and definiteness diagnostics.
pub fn mass_matrix_checks(p: &AssembledProblem) -> MassReport {
    let mesh = &p.mesh;
    let nv = mesh.vertices.len();
    let mut full_sum = 0.0;
    let mut k_one = vec![0.0; nv];
    for t in 0..mesh.triangles.len() {
        let m = local_mass(mesh, t);
        full_sum += m.iter().flatten().sum::<f64>();
        let k = local_stiffness(mesh, t, 1.0);
        for (a, &va) in mesh.triangles[t].iter().enumerate() {
            k_one[va] += k[a].iter().sum::<f64>();
        }
    }
    MassReport {
        full_mass_sum: full_sum,
        interior_mass_sum: p.mass.data().iter().sum(),
        domain_area: mesh.domain_area(),
        mass_spd: cholesky(&p.mass).is_ok(),
        stiffness_spd: cholesky(p.op.a0()).is_ok(),
        stiffness_kernel_residual: k_one.iter().fold(0.0_f64, |m, v| m.max(v.abs())),
    }
}

impl AssembledProblem {
    pub fn n(&self) -> usize {
        self.mass.n()
    }

    /// Writes `a0.mtx`, `a1.mtx`, …, `mass.mtx` (symmetric coordinate format).
    pub fn write_matrix_market(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut named: Vec<(String, &SymMatrix)> = vec![("a0".into(), self.op.a0())];
        for (m, t) in self.op.terms().iter().enumerate() {
            named.push((format!("a{}", m + 1), t));
        }
        named.push(("mass".into(), &self.mass));
        let mut out = Vec::new();
        for (name, mat) in named {
            let path = dir.join(format!("{name}.mtx"));
            std::fs::write(&path, mmio::write_coordinate_symmetric(mat))?;
            out.push(path);
        }
        Ok(out)
    }
}

/// Lower band storage of an SPD matrix with half-bandwidth `bw`.
struct Banded {
    n: usize,
    bw: usize,
    /// `data[i * (bw + 1) + (i − j)]` holds entry `(i, j)`, `i − bw ≤ j ≤ i`.
    data: Vec<f64>,
}

impl Banded {
    fn zeros(n: usize, bw: usize) -> Self {
        Banded {
            n,
            bw,
            data: vec![0.0; n * (bw + 1)],
        }
    }

    fn add(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        debug_assert!(i - j <= self.bw);
        self.data[i * (self.bw + 1) + (i - j)] += v;
    }

    fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        if i - j > self.bw {
            0.0
        } else {
            self.data[i * (self.bw + 1) + (i - j)]
        }
    }

    fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            for j in lo..=i {
                let v = self.data[i * (self.bw + 1) + (i - j)];
                y[i] += v * x[j];
                if j != i {
                    y[j] += v * x[i];
                }
            }
        }
        y
    }

    /// In-place banded Cholesky.
    fn factor(mut self) -> Result<Banded> {
        let (n, bw) = (self.n, self.bw);
        let w = bw + 1;
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            for j in lo..=i {
                let klo = lo.max(j.saturating_sub(bw));
                let mut s = self.data[i * w + (i - j)];
                for k in klo..j {
                    s -= self.data[i * w + (i - k)] * self.data[j * w + (j - k)];
                }
                if i == j {
                    if !(s > 0.0) {
                        return Err(Error::NotPositiveDefinite { pivot: i, value: s });
                    }
                    self.data[i * w] = s.sqrt();
                } else {
                    self.data[i * w + (i - j)] = s / self.data[j * w];
                }
            }
        }
        Ok(self)
    }

    fn solve_factored(&self, b: &[f64]) -> Vec<f64> {
        let (n, bw, w) = (self.n, self.bw, self.bw + 1);
        let mut y = b.to_vec();
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            let mut s = y[i];
            for k in lo..i {
                s -= self.data[i * w + (i - k)] * y[k];
            }
            y[i] = s / self.data[i * w];
        }
        for i in (0..n).rev() {
            y[i] /= self.data[i * w];
            let yi = y[i];
            let lo = i.saturating_sub(bw);
            for k in lo..i {
                y[k] -= self.data[i * w + (i - k)] * yi;
            }
        }
        y
    }
}

/// Lowest Dirichlet eigenvalue of the unit-coefficient Laplacian on the
/// given square, by inverse iteration with banded storage. Scales to mesh
/// levels where dense assembly would not fit.
pub fn lowest_laplacian_eigenvalue(domain: Interval, level: u32) -> Result<f64> {
    let mesh = uniform_square_mesh(domain, level)?;
    let n = mesh.interior_count();
    let bw = mesh.interior_width() + 1;
    let mut k = Banded::zeros(n, bw);
    let mut m = Banded::zeros(n, bw);
    for t in 0..mesh.triangles.len() {
        let kl = local_stiffness(&mesh, t, 1.0);
        let ml = local_mass(&mesh, t);
        let tri = mesh.triangles[t];
        for a in 0..3 {
            let Some(i) = mesh.dof(tri[a]) else { continue };
            for b in 0..3 {
                if let Some(j) = mesh.dof(tri[b]) {
                    if i >= j {
                        k.add(i, j, kl[a][b]);
                        m.add(i, j, ml[a][b]);
                    }
                }
            }
        }
    }
    debug_assert!(k.get(0, 0) > 0.0);
    let kf = k.factor()?;
    let mut x = vec![1.0; n];
    let mut lambda = f64::INFINITY;
    for _ in 0..500 {
        let mx = m.mul_vec(&x);
        let y = kf.solve_factored(&mx);
        let ymy = dot(&y, &m.mul_vec(&y));
        // yᵀKy = yᵀMx because K y = M x
        let next = dot(&y, &mx) / ymy;
        let s = 1.0 / ymy.sqrt();
        x = y.iter().map(|v| v * s).collect();
        if (next - lambda).abs() <= 1e-14 * next {
            return Ok(next);
        }
        lambda = next;
    }
    Err(Error::ConvergenceFailure { iterations: 500 })
}
