//! Collocation nodes, Smolyak index sets and the sparse Chebyshev–Legendre
//! interpolation operator.

use std::collections::HashMap;
use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fmt17;
use crate::pencil::Interval;

const NEWTON_MAX_ITER: usize = 100;

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
pub fn legendre_eval(n: usize, x: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    // derivative from P_n and P_{n-1}; valid off the endpoints
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// The `p + 1` Gauss points: roots of `P_{p+1}`, ascending.
pub fn legendre_nodes(p: usize) -> Vec<f64> {
    let n = p + 1;
    let mut roots = vec![0.0; n];
    for i in 0..n / 2 {
        // Chebyshev-like initial guess for the i-th largest root
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..NEWTON_MAX_ITER {
            let (v, dv) = legendre_eval(n, x);
            let step = v / dv;
            x -= step;
            if step.abs() <= 1e-16 * x.abs().max(1.0) {
                break;
            }
        }
        roots[n - 1 - i] = x;
        roots[i] = -x;
    }
    roots
}

/// `q` Chebyshev points `(a+b)/2 + (b−a)/2 · cos((2j+1)π/(2q))`,
/// decreasing in `j`.
pub fn chebyshev_nodes(q: usize, interval: Interval) -> Result<Vec<f64>> {
    if q == 0 {
        return Err(Error::InvalidParameter(
            "Chebyshev degree q must be at least 1".into(),
        ));
    }
    let (a, b) = interval;
    if !(a < b) {
        return Err(Error::InvalidParameter(format!(
            "empty interval {interval:?}"
        )));
    }
    let c = 0.5 * (a + b);
    let r = 0.5 * (b - a);
    Ok((0..q)
        .map(|j| {
            let v = ((2 * j + 1) as f64 * PI / (2 * q) as f64).cos();
            // cos(π/2) is not exactly zero in floating point
            if 2 * j + 1 == q {
                c
            } else {
                c + r * v
            }
        })
        .collect())
}

fn map_to(interval: Interval, x: f64) -> f64 {
    interval.0 + 0.5 * (x + 1.0) * (interval.1 - interval.0)
}

/// Padua points of degree `n`: the distinct points of the curve
/// `(cos(nθ), cos((n+1)θ))` sampled at `θ = kπ / (n(n+1))`, mapped onto
/// the box. There are `(n+1)(n+2)/2` of them.
pub fn padua_points(n: usize, bx: [Interval; 2]) -> Result<Vec<[f64; 2]>> {
    if n == 0 {
        return Err(Error::InvalidParameter(
            "Padua degree must be at least 1".into(),
        ));
    }
    let steps = n * (n + 1);
    let mut pts: Vec<[f64; 2]> = Vec::new();
    for k in 0..=steps {
        let theta = k as f64 * PI / steps as f64;
        let p = [(n as f64 * theta).cos(), ((n + 1) as f64 * theta).cos()];
        if !pts
            .iter()
            .any(|q| (q[0] - p[0]).abs() < 1e-10 && (q[1] - p[1]).abs() < 1e-10)
        {
            pts.push(p);
        }
    }
    Ok(pts
        .into_iter()
        .map(|p| [map_to(bx[0], p[0]), map_to(bx[1], p[1])])
        .collect())
}

/// Barycentric Lagrange basis values `ℓⱼ(x)` on distinct `nodes`.
pub fn lagrange_basis(nodes: &[f64], x: f64) -> Vec<f64> {
    let n = nodes.len();
    if let Some(k) = nodes.iter().position(|&xj| xj == x) {
        let mut e = vec![0.0; n];
        e[k] = 1.0;
        return e;
    }
    let w: Vec<f64> = (0..n)
        .map(|j| {
            1.0 / (0..n)
                .filter(|&k| k != j)
                .map(|k| nodes[j] - nodes[k])
                .product::<f64>()
        })
        .collect();
    let terms: Vec<f64> = (0..n).map(|j| w[j] / (x - nodes[j])).collect();
    let s: f64 = terms.iter().sum();
    terms.iter().map(|t| t / s).collect()
}

pub type MultiIndex = Vec<u32>;

/// `Λ_ε(η) = {α : η^α ≥ ε}` with combination coefficients.
#[derive(Clone, Debug, Serialize)]
pub struct SmolyakSet {
    pub eta: Vec<f64>,
    pub epsilon: f64,
    /// Lexicographically sorted.
    pub indices: Vec<MultiIndex>,
    /// `c_α = Σ_{γ∈Λ, α≤γ≤α+1} (−1)^{|γ−α|}`, aligned with `indices`.
    pub coefficients: Vec<i64>,
}

/// Relative slack on the membership test so that exact ties such as
/// `0.5² = 0.25` survive rounding in `ε`.
const MEMBERSHIP_SLACK: f64 = 1e-12;

pub fn smolyak_set(eta: &[f64], epsilon: f64) -> Result<SmolyakSet> {
    if eta.is_empty() {
        return Err(Error::InvalidParameter(
            "eta must have at least one entry".into(),
        ));
    }
    if let Some(e) = eta.iter().find(|&&e| !(e > 0.0 && e < 1.0)) {
        return Err(Error::InvalidParameter(format!(
            "eta entries must lie in (0, 1), got {e}"
        )));
    }
    if eta.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::InvalidParameter("eta must be non-increasing".into()));
    }
    if !(epsilon > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    if epsilon > 1.0 {
        return Err(Error::EmptySet { epsilon });
    }
    let threshold = epsilon * (1.0 - MEMBERSHIP_SLACK);
    let d = eta.len();
    let mut indices = Vec::new();
    let mut current = vec![0u32; d];
    enumerate(eta, threshold, 0, 1.0, &mut current, &mut indices);
    indices.sort();
    let lookup: std::collections::HashSet<&MultiIndex> = indices.iter().collect();
    let coefficients = indices
        .iter()
        .map(|a| {
            let mut c = 0i64;
            for mask in 0..(1usize << d) {
                let g: MultiIndex = (0..d).map(|m| a[m] + (mask >> m & 1) as u32).collect();
                if lookup.contains(&g) {
                    c += if mask.count_ones() % 2 == 0 { 1 } else { -1 };
                }
            }
            c
        })
        .collect();
    Ok(SmolyakSet {
        eta: eta.to_vec(),
        epsilon,
        indices,
        coefficients,
    })
}

fn enumerate(
    eta: &[f64],
    threshold: f64,
    m: usize,
    prod: f64,
    cur: &mut Vec<u32>,
    out: &mut Vec<MultiIndex>,
) {
    if m == eta.len() {
        out.push(cur.clone());
        return;
    }
    let mut p = prod;
    let mut k = 0u32;
    while p >= threshold {
        cur[m] = k;
        enumerate(eta, threshold, m + 1, p, cur, out);
        p *= eta[m];
        k += 1;
    }
    cur[m] = 0;
}

impl SmolyakSet {
    pub fn d(&self) -> usize {
        self.eta.len()
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, alpha: &[u32]) -> bool {
        self.indices
            .binary_search_by(|x| x.as_slice().cmp(alpha))
            .is_ok()
    }

    /// Indices with nonzero coefficient (the reduced set), in order.
    pub fn retained(&self) -> Vec<(&MultiIndex, i64)> {
        self.indices
            .iter()
            .zip(&self.coefficients)
            .filter(|(_, &c)| c != 0)
            .map(|(a, &c)| (a, c))
            .collect()
    }

    /// Largest level reached in coordinate `m`.
    pub fn max_level(&self, m: usize) -> u32 {
        self.indices.iter().map(|a| a[m]).max().unwrap_or(0)
    }

    pub fn is_downward_closed(&self) -> bool {
        self.indices.iter().all(|a| {
            (0..a.len()).all(|m| {
                if a[m] == 0 {
                    return true;
                }
                let mut b = a.clone();
                b[m] -= 1;
                self.contains(&b)
            })
        })
    }
}

/// One retained index `α` and its tensor Legendre grid.
#[derive(Clone, Debug, Serialize)]
pub struct TensorBlock {
    pub alpha: MultiIndex,
    pub coefficient: i64,
    /// Unique σ-point ids, odometer order over `γ ≤ α` (last coordinate fastest).
    pub points: Vec<usize>,
}

/// Chebyshev–Legendre collocation grid.
#[derive(Clone, Debug, Serialize)]
pub struct CLGrid {
    pub sigma_box: Vec<Interval>,
    pub sigma_points: Vec<Vec<f64>>,
    pub t_nodes: Vec<f64>,
    pub t_interval: Interval,
    pub blocks: Vec<TensorBlock>,
}

const DEDUP_TOL: f64 = 1e-12;

/// Grid on the box `[−1, 1]^d`.
pub fn cl_grid(set: &SmolyakSet, q: usize, t_interval: Interval) -> Result<CLGrid> {
    cl_grid_on_box(set, q, t_interval, &vec![(-1.0, 1.0); set.d()])
}

pub fn cl_grid_on_box(
    set: &SmolyakSet,
    q: usize,
    t_interval: Interval,
    sigma_box: &[Interval],
) -> Result<CLGrid> {
    if sigma_box.len() != set.d() {
        return Err(Error::DimensionMismatch {
            context: "collocation box dimension",
            expected: set.d(),
            found: sigma_box.len(),
        });
    }
    let t_nodes = chebyshev_nodes(q, t_interval)?;
    let mut sigma_points: Vec<Vec<f64>> = Vec::new();
    let mut blocks = Vec::new();
    for (alpha, c) in set.retained() {
        let axes = level_nodes(alpha, sigma_box);
        let mut ids = Vec::new();
        for point in tensor_points(&axes) {
            let id = match sigma_points.iter().position(|p| {
                p.iter()
                    .zip(&point)
                    .all(|(a, b)| (a - b).abs() <= DEDUP_TOL)
            }) {
                Some(id) => id,
                None => {
                    sigma_points.push(point);
                    sigma_points.len() - 1
                }
            };
            ids.push(id);
        }
        blocks.push(TensorBlock {
            alpha: alpha.clone(),
            coefficient: c,
            points: ids,
        });
    }
    Ok(CLGrid {
        sigma_box: sigma_box.to_vec(),
        sigma_points,
        t_nodes,
        t_interval,
        blocks,
    })
}

/// Per-coordinate Gauss nodes of the level `alpha`, mapped onto the box.
fn level_nodes(alpha: &[u32], sigma_box: &[Interval]) -> Vec<Vec<f64>> {
    alpha
        .iter()
        .zip(sigma_box)
        .map(|(&a, &iv)| {
            legendre_nodes(a as usize)
                .into_iter()
                .map(|x| map_to(iv, x))
                .collect()
        })
        .collect()
}

fn tensor_points(axes: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out = vec![Vec::new()];
    for axis in axes {
        let mut next = Vec::with_capacity(out.len() * axis.len());
        for prefix in &out {
            for &x in axis {
                let mut p = prefix.clone();
                p.push(x);
                next.push(p);
            }
        }
        out = next;
    }
    out
}

/// Tensor Lagrange weights at `sigma`, in the same order as `tensor_points`.
fn tensor_weights(axes: &[Vec<f64>], sigma: &[f64]) -> Vec<f64> {
    let mut out = vec![1.0];
    for (axis, &s) in axes.iter().zip(sigma) {
        let l = lagrange_basis(axis, s);
        let mut next = Vec::with_capacity(out.len() * l.len());
        for &w in &out {
            for &lj in &l {
                next.push(w * lj);
            }
        }
        out = next;
    }
    out
}

/// Sample values keyed by `(σ-point id, t-node index)`.
pub type SampleTable = HashMap<(usize, usize), Vec<f64>>;

impl CLGrid {
    pub fn q(&self) -> usize {
        self.t_nodes.len()
    }

    pub fn d(&self) -> usize {
        self.sigma_box.len()
    }

    /// Number of unique `(σ, t)` collocation pairs.
    pub fn n_pairs(&self) -> usize {
        self.sigma_points.len() * self.t_nodes.len()
    }

    /// All pairs in the order σ id, then t index.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        (0..self.sigma_points.len())
            .flat_map(|i| (0..self.q()).map(move |j| (i, j)))
            .collect()
    }

    /// Grid with an empty σ set, so that no samples are requested.
    pub fn empty(d: usize, t_nodes: Vec<f64>, t_interval: Interval) -> CLGrid {
        CLGrid {
            sigma_box: vec![(-1.0, 1.0); d],
            sigma_points: Vec::new(),
            t_nodes,
            t_interval,
            blocks: Vec::new(),
        }
    }

    /// CSV listing of blocks, σ points and t nodes.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("kind,id,alpha,coefficient,points,coordinates\n");
        for (b, blk) in self.blocks.iter().enumerate() {
            let alpha: Vec<String> = blk.alpha.iter().map(|a| a.to_string()).collect();
            let pts: Vec<String> = blk.points.iter().map(|p| p.to_string()).collect();
            s.push_str(&format!(
                "block,{b},{},{},{},\n",
                alpha.join(" "),
                blk.coefficient,
                pts.join(" ")
            ));
        }
        for (i, p) in self.sigma_points.iter().enumerate() {
            let c: Vec<String> = p.iter().map(|&v| fmt17(v)).collect();
            s.push_str(&format!("sigma,{i},,,,{}\n", c.join(" ")));
        }
        for (j, &t) in self.t_nodes.iter().enumerate() {
            s.push_str(&format!("t,{j},,,,{}\n", fmt17(t)));
        }
        s
    }
}

/// Evaluates `Σ_α c_α (⊗ₘ I_{αₘ}) ⊗ π_q` applied to the samples at `(σ, t)`.
pub fn interpolate_cl(
    samples: &SampleTable,
    grid: &CLGrid,
    sigma: &[f64],
    t: f64,
) -> Result<Vec<f64>> {
    if sigma.len() != grid.d() {
        return Err(Error::DimensionMismatch {
            context: "interpolation point dimension",
            expected: grid.d(),
            found: sigma.len(),
        });
    }
    let lt = lagrange_basis(&grid.t_nodes, t);
    let mut out: Option<Vec<f64>> = None;
    for blk in &grid.blocks {
        let axes = level_nodes(&blk.alpha, &grid.sigma_box);
        let ws = tensor_weights(&axes, sigma);
        for (&id, &w) in blk.points.iter().zip(&ws) {
            for (j, &l) in lt.iter().enumerate() {
                let coef = blk.coefficient as f64 * w * l;
                let v = samples
                    .get(&(id, j))
                    .ok_or(Error::MissingSample { sigma: id, t: j })?;
                let acc = out.get_or_insert_with(|| vec![0.0; v.len()]);
                if acc.len() != v.len() {
                    return Err(Error::DimensionMismatch {
                        context: "sample vector length",
                        expected: acc.len(),
                        found: v.len(),
                    });
                }
                if coef != 0.0 {
                    for (a, x) in acc.iter_mut().zip(v) {
                        *a += coef * x;
                    }
                }
            }
        }
    }
    out.ok_or_else(|| Error::InvalidParameter("grid has no collocation points".into()))
}

/// Independent route through the telescoping sum `Σ_{α∈Λ} Δ_α ⊗ π_q`,
/// with `Δ_α = ⊗ₘ (I_{αₘ} − I_{αₘ−1})` and `I_{−1} = 0`. Evaluates `f`
/// directly on every tensor grid it needs, including those with `c_α = 0`.
pub fn interpolate_telescoping(
    set: &SmolyakSet,
    q: usize,
    t_interval: Interval,
    sigma_box: &[Interval],
    f: &dyn Fn(&[f64], f64) -> Vec<f64>,
    sigma: &[f64],
    t: f64,
) -> Result<Vec<f64>> {
    let d = set.d();
    let t_nodes = chebyshev_nodes(q, t_interval)?;
    let lt = lagrange_basis(&t_nodes, t);
    let mut out: Option<Vec<f64>> = None;
    for alpha in &set.indices {
        for mask in 0..(1usize << d) {
            if (0..d).any(|m| mask >> m & 1 == 1 && alpha[m] == 0) {
                continue;
            }
            let sign = if mask.count_ones() % 2 == 0 {
                1.0
            } else {
                -1.0
            };
            let level: Vec<u32> = (0..d).map(|m| alpha[m] - (mask >> m & 1) as u32).collect();
            let axes = level_nodes(&level, sigma_box);
            let ws = tensor_weights(&axes, sigma);
            for (p, w) in tensor_points(&axes).iter().zip(&ws) {
                for (j, &tj) in t_nodes.iter().enumerate() {
                    let v = f(p, tj);
                    let acc = out.get_or_insert_with(|| vec![0.0; v.len()]);
                    let coef = sign * w * lt[j];
                    for (a, x) in acc.iter_mut().zip(&v) {
                        *a += coef * x;
                    }
                }
            }
        }
    }
    out.ok_or_else(|| Error::InvalidParameter("empty index set".into()))
}

/// Fills a sample table by evaluating `f` on every grid pair.
pub fn sample_grid(grid: &CLGrid, f: &dyn Fn(&[f64], f64) -> Vec<f64>) -> SampleTable {
    grid.pairs()
        .into_iter()
        .map(|(i, j)| ((i, j), f(&grid.sigma_points[i], grid.t_nodes[j])))
        .collect()
}
