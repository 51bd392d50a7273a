//! Set surgeries at the mesoscale: η-scale replacement, good/bad cube
//! classifications, mollifier smoothing of cubic sets and the ε-cubic
//! regularization of voxel voids.
//!
//! The η-grid cube with block index `m` is `Q_η(ηm)`. Its lattice points are
//! the sites `s` with `⌊(s + ⌊n/2⌋)/n⌋ = m` on every axis, `n = η/ε`.

use rand::Rng as _;
use rayon::prelude::*;

use crate::curvature::detect_laminate;
use crate::elastic::kuhn_simplices;
use crate::error::{Error, Result};
use crate::lattice::{
    centered_range, hausdorff_distance, voxelize, Index, IndexBox, IndexSet, LatticeDomain, VoidSet, VoxelSet,
};
use crate::surface::{discrete_perimeter, NeighborModel};

/// Block index of site `s` on the grid of `n`-site blocks.
#[inline]
pub fn block_index(s: i64, n: i64) -> i64 {
    (s + n / 2).div_euclid(n)
}

fn block_of<const D: usize>(s: &Index<D>, n: i64) -> Index<D> {
    s.map(|v| block_index(v, n))
}

/// Lattice sites of the block `m`.
pub fn block_box<const D: usize>(m: &Index<D>, n: i64) -> IndexBox<D> {
    let mut b = IndexBox::new([0; D], [0; D]);
    for a in 0..D {
        b.lo[a] = n * m[a] - n / 2;
        b.hi[a] = b.lo[a] + n;
    }
    b
}

/// Sites of `Q_{(num/den)η}(ηm)`.
pub fn scaled_block_box<const D: usize>(m: &Index<D>, n: i64, num: i64, den: i64) -> IndexBox<D> {
    let (lo, hi) = centered_range(num * n, den);
    let mut b = IndexBox::new([0; D], [0; D]);
    for a in 0..D {
        b.lo[a] = n * m[a] + lo;
        b.hi[a] = n * m[a] + hi;
    }
    b
}

/// Blocks meeting `E`, in lexicographic order.
pub fn touched_blocks<const D: usize>(e: &VoidSet<D>, n: i64) -> Vec<Index<D>> {
    let mut v: Vec<Index<D>> = e.iter().map(|s| block_of(&s, n)).collect();
    v.sort();
    v.dedup();
    v
}

/// `E_η`: every η-cube meeting `E` filled, intersected with `Ω`.
pub fn eta_replacement<const D: usize>(e: &VoidSet<D>, n: i64, domain: &LatticeDomain<D>) -> VoidSet<D> {
    assert!(n >= 1, "eta/eps must be a positive integer");
    let blocks = touched_blocks(e, n);
    let hull = blocks.iter().fold(IndexBox::empty(), |acc, m| acc.hull(&block_box(m, n)));
    let mut out = IndexSet::with_bounds(hull);
    for m in &blocks {
        for s in block_box(m, n).iter() {
            if domain.in_omega(&s) {
                out.insert(&s);
            }
        }
    }
    out
}

pub fn is_eta_aligned<const D: usize>(e: &VoidSet<D>, n: i64, domain: &LatticeDomain<D>) -> bool {
    eta_replacement(e, n, domain) == *e
}

/// `#((E_η \ E) ∩ region)`.
pub fn replacement_cardinality<const D: usize>(
    e: &VoidSet<D>,
    n: i64,
    domain: &LatticeDomain<D>,
    region: Option<&IndexBox<D>>,
) -> usize {
    let diff = eta_replacement(e, n, domain).difference(e);
    match region {
        Some(r) => diff.count_in(r),
        None => diff.len(),
    }
}

/// Label of an η-cube.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EtaCubeLabel {
    /// `E` is a simple coordinate laminate in `Q_{3η/2}(ηm)`.
    Good,
    Bad,
}

/// Labels of all η-cubes whose enlarged cube meets `E`, in lexicographic
/// block order.
pub fn classify_eta_cubes<const D: usize>(e: &VoidSet<D>, n: i64) -> Vec<(Index<D>, EtaCubeLabel)> {
    let mut blocks: Vec<Index<D>> = Vec::new();
    for m in touched_blocks(e, n) {
        for nb in IndexBox::point(m).expand(1).iter() {
            blocks.push(nb);
        }
    }
    blocks.sort();
    blocks.dedup();
    blocks
        .into_iter()
        .filter_map(|m| {
            let big = scaled_block_box(&m, n, 3, 2);
            if e.count_in(&big) == 0 {
                return None;
            }
            let label = if detect_laminate(e, &big).is_some() { EtaCubeLabel::Good } else { EtaCubeLabel::Bad };
            Some((m, label))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReplacementViolation<const D: usize> {
    pub block: Index<D>,
    pub before: f64,
    pub after: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ReplacementReport<const D: usize> {
    pub good_cubes: usize,
    pub bad_cubes: usize,
    /// Good cubes where `F^per(E_η, Q) = F^per(E, Q)`.
    pub equalities: usize,
    pub violations: Vec<ReplacementViolation<D>>,
}

/// Checks `F^per(E_η, Q_η(ηm)) ≤ F^per(E, Q_η(ηm))` on every good cube.
pub fn replacement_perimeter_check<const D: usize>(
    e: &VoidSet<D>,
    n: i64,
    model: &NeighborModel<D>,
    domain: &LatticeDomain<D>,
) -> ReplacementReport<D> {
    let e_eta = eta_replacement(e, n, domain);
    let mut rep = ReplacementReport::default();
    for (m, label) in classify_eta_cubes(e, n) {
        if label == EtaCubeLabel::Bad {
            rep.bad_cubes += 1;
            continue;
        }
        rep.good_cubes += 1;
        let q = block_box(&m, n);
        let before = discrete_perimeter(e, model, domain, &q);
        let after = discrete_perimeter(&e_eta, model, domain, &q);
        if after > before {
            rep.violations.push(ReplacementViolation { block: m, before, after });
        } else if after == before {
            rep.equalities += 1;
        }
    }
    rep
}

/// Radial bump `exp(−1/(1−r²))` on the unit ball (unnormalized).
pub fn bump(r2: f64) -> f64 {
    if r2 >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - r2)).exp()
    }
}

/// Five-point Gauss–Legendre rule on `[-1/2, 1/2]`.
const GAUSS5: [(f64, f64); 5] = [
    (-0.453_089_922_969_332_2, 0.118_463_442_528_094_5),
    (-0.269_234_655_052_841_4, 0.239_314_335_249_683_2),
    (0.0, 0.284_444_444_444_444_4),
    (0.269_234_655_052_841_4, 0.239_314_335_249_683_2),
    (0.453_089_922_969_332_2, 0.118_463_442_528_094_5),
];

/// Mollifier integrated over the cells of a grid of spacing `h`:
/// `K[δ] ∝ ∫_{h(δ + [-1/2,1/2)^d)} ζ_σ`, normalized to unit total mass.
#[derive(Clone, Debug)]
pub struct KernelTable<const D: usize> {
    pub radius: i64,
    pub values: Vec<f64>,
    bounds: IndexBox<D>,
    /// Prefix sums over `bounds`, padded by one slot per axis.
    prefix: Vec<f64>,
    pad: IndexBox<D>,
}

impl<const D: usize> KernelTable<D> {
    pub fn new(sigma: f64, h: f64) -> Self {
        let radius = (sigma / h).ceil() as i64 + 1;
        let bounds = IndexBox::<D>::point([0; D]).expand(radius);
        let pts = 5usize.pow(D as u32);
        let mut values: Vec<f64> = bounds
            .iter()
            .map(|d| {
                let mut acc = 0.0;
                for t in 0..pts {
                    let mut r = t;
                    let mut w = 1.0;
                    let mut r2 = 0.0;
                    for a in 0..D {
                        let (node, wt) = GAUSS5[r % 5];
                        r /= 5;
                        let x = h * (d[a] as f64 + node) / sigma;
                        r2 += x * x;
                        w *= wt;
                    }
                    acc += w * bump(r2);
                }
                acc
            })
            .collect();
        let total: f64 = values.iter().sum();
        for v in values.iter_mut() {
            *v /= total;
        }
        let mut pad = bounds;
        for a in 0..D {
            pad.hi[a] += 1;
        }
        let mut prefix = vec![0.0; pad.len()];
        for p in 0..prefix.len() {
            let q = pad.unlinear(p);
            if (0..D).all(|a| q[a] > bounds.lo[a]) {
                let s = q.map(|v| v - 1);
                prefix[p] = values[bounds.linear(&s)];
            }
        }
        let shape = pad.shape();
        let mut stride = vec![1usize; D];
        for a in (0..D.saturating_sub(1)).rev() {
            stride[a] = stride[a + 1] * shape[a + 1];
        }
        for a in 0..D {
            for p in 0..prefix.len() {
                if pad.unlinear(p)[a] > pad.lo[a] {
                    prefix[p] += prefix[p - stride[a]];
                }
            }
        }
        Self { radius, values, bounds, prefix, pad }
    }

    /// `Σ_{δ ∈ b} K[δ]`.
    pub fn box_sum(&self, b: &IndexBox<D>) -> f64 {
        let c = b.intersect(&self.bounds);
        if c.is_empty() {
            return 0.0;
        }
        let mut total = 0.0;
        for corner in 0..(1usize << D) {
            let mut q = [0; D];
            let mut sign = 1.0;
            for a in 0..D {
                if (corner >> a) & 1 == 1 {
                    q[a] = c.hi[a];
                } else {
                    q[a] = c.lo[a];
                    sign = -sign;
                }
            }
            total += sign * self.prefix[self.pad.linear(&q)];
        }
        total
    }
}

/// Sampled `f_σ = χ_{Q(E1)} ∗ ζ_σ` on a fine grid, its super-level cover and
/// the measured properties.
#[derive(Clone, Debug)]
pub struct SmoothSetSample<const D: usize> {
    pub sigma: f64,
    /// Fine cells per unit length.
    pub m: i64,
    pub t: f64,
    /// Fine cell indices covered by `field`; fine cell `f` has unit-scale
    /// center `(f + 1/2)/m − 1/2`.
    pub fine_box: IndexBox<D>,
    pub field: Vec<f64>,
    /// `Q(E1)` at unit scale.
    pub base: VoxelSet<D>,
    /// `{f_σ > t}` as fine voxels at unit scale.
    pub cover: VoxelSet<D>,
    /// Hausdorff distance between cover and `Q(E1)`, at unit scale.
    pub hausdorff: f64,
    /// Distance from the non-covered fine cells to `Q(E1)`, at unit scale.
    pub clearance: f64,
    /// Levels tried with their outcome: `(t, passes, min |∇f| on the band)`.
    pub scan: Vec<(f64, bool, f64)>,
    /// Physical length of one unit and physical offset.
    pub scale: f64,
    pub offset: [f64; D],
}

impl<const D: usize> SmoothSetSample<D> {
    pub fn h(&self) -> f64 {
        1.0 / self.m as f64
    }

    pub fn value(&self, f: &Index<D>) -> f64 {
        if self.fine_box.contains(f) {
            self.field[self.fine_box.linear(f)]
        } else {
            0.0
        }
    }

    /// Central-difference gradient of `f_σ` at fine cell `f` (unit scale).
    pub fn gradient(&self, f: &Index<D>) -> [f64; D] {
        let h = self.h();
        let mut g = [0.0; D];
        for a in 0..D {
            let mut p = *f;
            let mut q = *f;
            p[a] += 1;
            q[a] -= 1;
            g[a] = (self.value(&p) - self.value(&q)) / (2.0 * h);
        }
        g
    }

    /// Cover in physical coordinates.
    pub fn physical_cover(&self) -> VoxelSet<D> {
        let mut origin = self.cover.origin;
        for a in 0..D {
            origin[a] = self.scale * origin[a] + self.offset[a];
        }
        VoxelSet::new(self.cover.cell_size * self.scale, origin, self.cover.cells.clone())
    }

    pub fn physical_base(&self) -> VoxelSet<D> {
        let mut origin = self.base.origin;
        for a in 0..D {
            origin[a] = self.scale * origin[a] + self.offset[a];
        }
        VoxelSet::new(self.base.cell_size * self.scale, origin, self.base.cells.clone())
    }
}

/// Parameters of [`smooth_cubic_set`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SmoothParams {
    pub sigma: f64,
    /// Fine cells per unit; `None` selects `⌈16/σ⌉`.
    pub cells_per_unit: Option<i64>,
    /// Level; `None` scans `0.05, 0.10, …, 0.45`.
    pub level: Option<f64>,
}

impl Default for SmoothParams {
    fn default() -> Self {
        Self { sigma: 0.3, cells_per_unit: None, level: None }
    }
}

pub const LEVEL_SCAN: [f64; 9] = [0.05, 0.10, 0.15, 0.20, 0.25, 0.30, 0.35, 0.40, 0.45];

/// Smooths the union of unit cubes centered at the points of `e1`.
pub fn smooth_cubic_set<const D: usize>(e1: &VoidSet<D>, params: &SmoothParams) -> Result<SmoothSetSample<D>> {
    let sigma = params.sigma;
    if !(sigma > 0.0 && sigma < 0.5) {
        return Err(Error::Invalid(format!("sigma must lie in (0, 1/2), got {sigma}")));
    }
    if let Some(t) = params.level {
        if !(t > 0.0 && t < 1.0) {
            return Err(Error::Invalid(format!("level must lie in (0, 1), got {t}")));
        }
    }
    let m = params.cells_per_unit.unwrap_or((16.0 / sigma).ceil() as i64);
    if m < 2 {
        return Err(Error::Invalid("at least two fine cells per unit are required".into()));
    }
    let h = 1.0 / m as f64;
    let base = VoxelSet::new(1.0, [0.0; D], e1.clone());
    let fine_origin = [-0.5 + 0.5 * h; D];
    let Some(tb) = e1.tight_bounds() else {
        return Ok(SmoothSetSample {
            sigma,
            m,
            t: params.level.unwrap_or(LEVEL_SCAN[0]),
            fine_box: IndexBox::empty(),
            field: Vec::new(),
            base,
            cover: VoxelSet::new(h, fine_origin, IndexSet::empty()),
            hausdorff: 0.0,
            clearance: f64::INFINITY,
            scan: Vec::new(),
            scale: 1.0,
            offset: [0.0; D],
        });
    };
    let kernel = KernelTable::<D>::new(sigma, h);
    let r = kernel.radius;
    let mut fine_box = IndexBox::new([0; D], [0; D]);
    for a in 0..D {
        fine_box.lo[a] = tb.lo[a] * m - r - 1;
        fine_box.hi[a] = tb.hi[a] * m + r + 1;
    }
    let reach = (r + m - 1) / m + 1;
    let field: Vec<f64> = (0..fine_box.len())
        .into_par_iter()
        .map(|p| {
            let f = fine_box.unlinear(p);
            let k0 = f.map(|v| v.div_euclid(m));
            let mut acc = 0.0;
            for k in IndexBox::point(k0).expand(reach).iter() {
                if !e1.contains(&k) {
                    continue;
                }
                // offsets f − g for fine cells g of unit cube k
                let mut b = IndexBox::new([0; D], [0; D]);
                for a in 0..D {
                    b.lo[a] = f[a] - (k[a] * m + m - 1);
                    b.hi[a] = f[a] - k[a] * m + 1;
                }
                acc += kernel.box_sum(&b);
            }
            acc.clamp(0.0, 1.0)
        })
        .collect();
    let levels: Vec<f64> = match params.level {
        Some(t) => vec![t],
        None => LEVEL_SCAN.to_vec(),
    };
    let base_fine = base.refine(m);
    let mut scan = Vec::new();
    let mut best: Option<(f64, f64)> = None;
    for &t in &levels {
        let inclusion = base_fine.cells.iter().all(|f| field[fine_box.linear(&f)] > t);
        let clearance = if inclusion { clearance_of(&field, &fine_box, t, e1, m) } else { 0.0 };
        let passes = inclusion && clearance > 0.0;
        let grad = band_min_gradient(&field, &fine_box, t, h);
        scan.push((t, passes, grad));
        if passes && best.is_none_or(|(_, g)| grad > g) {
            best = Some((t, grad));
        }
    }
    let Some((t, _)) = best else {
        return Err(Error::LevelTooHigh(format!(
            "no level in {:?} keeps Q(E1) inside the super-level set with positive clearance",
            levels
        )));
    };
    let cover_cells = IndexSet::from_fn(fine_box, |f| field[fine_box.linear(f)] > t);
    let cover = VoxelSet::new(h, fine_origin, cover_cells);
    let hausdorff = hausdorff_distance(&cover, &base)?;
    let clearance = clearance_of(&field, &fine_box, t, e1, m);
    Ok(SmoothSetSample {
        sigma,
        m,
        t,
        fine_box,
        field,
        base,
        cover,
        hausdorff,
        clearance,
        scan,
        scale: 1.0,
        offset: [0.0; D],
    })
}

/// Smallest box distance from a non-covered fine cell to `Q(E1)`.
fn clearance_of<const D: usize>(field: &[f64], fine_box: &IndexBox<D>, t: f64, e1: &VoidSet<D>, m: i64) -> f64 {
    let h = 1.0 / m as f64;
    (0..fine_box.len())
        .into_par_iter()
        .filter_map(|p| {
            if field[p] > t {
                return None;
            }
            let f = fine_box.unlinear(p);
            let k0 = f.map(|v| v.div_euclid(m));
            let mut best = f64::INFINITY;
            for k in IndexBox::point(k0).expand(1).iter() {
                if !e1.contains(&k) {
                    continue;
                }
                let mut d2 = 0.0;
                for a in 0..D {
                    let lo = -0.5 + h * f[a] as f64;
                    let hi = lo + h;
                    let (clo, chi) = (k[a] as f64 - 0.5, k[a] as f64 + 0.5);
                    let gap = (clo - hi).max(lo - chi).max(0.0);
                    d2 += gap * gap;
                }
                best = best.min(d2.sqrt());
            }
            Some(best)
        })
        .reduce(|| f64::INFINITY, f64::min)
}

/// Minimum central-difference gradient norm over fine cells on the discrete
/// level band (a cell above `t` with a face neighbour at or below `t`).
fn band_min_gradient<const D: usize>(field: &[f64], fine_box: &IndexBox<D>, t: f64, h: f64) -> f64 {
    let val = |f: &Index<D>| if fine_box.contains(f) { field[fine_box.linear(f)] } else { 0.0 };
    (0..fine_box.len())
        .into_par_iter()
        .filter_map(|p| {
            if field[p] <= t {
                return None;
            }
            let f = fine_box.unlinear(p);
            let mut on_band = false;
            let mut g2 = 0.0;
            for a in 0..D {
                let mut u = f;
                let mut d = f;
                u[a] += 1;
                d[a] -= 1;
                let (vu, vd) = (val(&u), val(&d));
                if vu <= t || vd <= t {
                    on_band = true;
                }
                let g = (vu - vd) / (2.0 * h);
                g2 += g * g;
            }
            on_band.then(|| g2.sqrt())
        })
        .reduce(|| f64::INFINITY, f64::min)
}

/// Smooths an η-aligned lattice set: rescale by `1/η`, smooth at unit scale,
/// scale back. For even `n` the lattice cubes `Q_ε(E)` sit `ε/2` below the
/// η-cubes, and the sample is shifted by `−ε/2` accordingly.
pub fn smooth_at_eta_scale<const D: usize>(
    e: &VoidSet<D>,
    n: i64,
    domain: &LatticeDomain<D>,
    params: &SmoothParams,
) -> Result<SmoothSetSample<D>> {
    if !is_eta_aligned(e, n, domain) {
        return Err(Error::NotEtaAligned);
    }
    let e1 = IndexSet::from_indices(touched_blocks(e, n));
    let mut s = smooth_cubic_set(&e1, params)?;
    let eps = domain.eps();
    s.scale = n as f64 * eps;
    let shift = if n % 2 == 0 { -0.5 * eps } else { 0.0 };
    s.offset = [shift; D];
    Ok(s)
}

/// Label of an ε-cube in the void regularization.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EpsCubeLabel {
    /// Boundary area at least `θ ε^{d−1}`.
    Good,
    /// Little boundary and void volume at most `β ε^d`.
    Bad1,
    Bad2,
}

/// Thresholds `β = 1/(2·d!)` and `θ = (β/(2C_d))^{(d−1)/d}`.
pub fn default_thresholds(d: usize, isoperimetric_constant: f64) -> (f64, f64) {
    let nd: f64 = (1..=d).map(|k| k as f64).product();
    let beta = 1.0 / (2.0 * nd);
    let theta = (beta / (2.0 * isoperimetric_constant)).powf((d as f64 - 1.0) / d as f64);
    (theta, beta)
}

#[derive(Clone, Debug)]
pub struct Regularization<const D: usize> {
    /// `V ⊇ W` on the fine grid of `W`.
    pub v: VoxelSet<D>,
    /// ε-cube labels, in lexicographic cube order.
    pub labels: Vec<(Index<D>, EpsCubeLabel)>,
    pub theta: f64,
    pub beta: f64,
    /// Largest void fraction of a Kuhn simplex over the bad1 cubes.
    pub bad1_max_simplex_fraction: f64,
}

/// Classifies the ε-cubes (blocks of `m^d` fine cells of `W`) and fills the
/// good and bad2 ones. Boundary faces of `W` are assigned to the cube
/// containing the fine cell on their upper side.
pub fn cubic_void_regularization<const D: usize>(
    w: &VoxelSet<D>,
    m: i64,
    theta: f64,
    beta: f64,
) -> Result<Regularization<D>> {
    if m < 1 {
        return Err(Error::Invalid("cells per eps-cube must be positive".into()));
    }
    if !(theta > 0.0 && theta < 1.0 && beta > 0.0 && beta < 1.0) {
        return Err(Error::Invalid("theta and beta must lie in (0, 1)".into()));
    }
    let eps = w.cell_size * m as f64;
    let cube_of = |f: &Index<D>| f.map(|v| v.div_euclid(m));
    let mut area: std::collections::BTreeMap<Index<D>, u64> = Default::default();
    let mut vol: std::collections::BTreeMap<Index<D>, u64> = Default::default();
    for f in w.cells.iter() {
        *vol.entry(cube_of(&f)).or_default() += 1;
        area.entry(cube_of(&f)).or_default();
        for a in 0..D {
            let mut up = f;
            up[a] += 1;
            if !w.cells.contains(&up) {
                *area.entry(cube_of(&up)).or_default() += 1;
            }
            let mut dn = f;
            dn[a] -= 1;
            if !w.cells.contains(&dn) {
                *area.entry(cube_of(&f)).or_default() += 1;
            }
        }
    }
    let face = w.cell_size.powi(D as i32 - 1);
    let cell_vol = w.cell_size.powi(D as i32);
    let mut labels = Vec::new();
    let mut v = w.cells.clone();
    let mut worst_fraction: f64 = 0.0;
    let simplices = kuhn_simplices::<D>();
    for (c, &faces) in &area {
        let nvol = vol.get(c).copied().unwrap_or(0);
        let label = if faces as f64 * face >= theta * eps.powi(D as i32 - 1) {
            EpsCubeLabel::Good
        } else if nvol as f64 * cell_vol <= beta * eps.powi(D as i32) {
            EpsCubeLabel::Bad1
        } else {
            EpsCubeLabel::Bad2
        };
        if label == EpsCubeLabel::Bad1 {
            worst_fraction = worst_fraction.max(simplex_void_fraction(w, c, m, &simplices));
        } else {
            let mut b = IndexBox::new([0; D], [0; D]);
            for a in 0..D {
                b.lo[a] = c[a] * m;
                b.hi[a] = c[a] * m + m;
            }
            let mut grown = v.rebound(v.bounds().hull(&b));
            for f in b.iter() {
                grown.insert(&f);
            }
            v = grown;
        }
        labels.push((*c, label));
    }
    Ok(Regularization {
        v: VoxelSet::new(w.cell_size, w.origin, v),
        labels,
        theta,
        beta,
        bad1_max_simplex_fraction: worst_fraction,
    })
}

/// Largest fraction of a Kuhn simplex of cube `c` covered by `W`, with fine
/// cells assigned to simplices by their centers.
fn simplex_void_fraction<const D: usize>(
    w: &VoxelSet<D>,
    c: &Index<D>,
    m: i64,
    simplices: &[(Vec<usize>, f64)],
) -> f64 {
    // The simplex of permutation π contains the points whose coordinates are
    // ordered as x_{π(0)} ≥ x_{π(1)} ≥ … in the cube's local frame.
    let perms: Vec<Vec<usize>> = simplices
        .iter()
        .map(|(chain, _)| {
            (0..D)
                .map(|k| {
                    let diff = chain[k + 1] ^ chain[k];
                    D - 1 - diff.trailing_zeros() as usize
                })
                .collect()
        })
        .collect();
    let mut inside = vec![0u64; perms.len()];
    let mut total = vec![0u64; perms.len()];
    let mut b = IndexBox::new([0; D], [0; D]);
    for a in 0..D {
        b.lo[a] = c[a] * m;
        b.hi[a] = c[a] * m + m;
    }
    for f in b.iter() {
        let x: Vec<f64> = (0..D).map(|a| (f[a] - c[a] * m) as f64 + 0.5).collect();
        for (p, perm) in perms.iter().enumerate() {
            if perm.windows(2).all(|w2| x[w2[0]] >= x[w2[1]]) {
                total[p] += 1;
                if w.cells.contains(&f) {
                    inside[p] += 1;
                }
                break;
            }
        }
    }
    inside
        .iter()
        .zip(&total)
        .filter(|(_, &t)| t > 0)
        .map(|(&i, &t)| i as f64 / t as f64)
        .fold(0.0, f64::max)
}

/// `H^{d−1}(∂*P ∩ ∂Q) / H^{d−1}(∂*P ∩ int Q)` for `P` a set of cells of the
/// cube `Q = [0, m)^d`. `None` when the interior boundary is empty.
pub fn boundary_face_ratio<const D: usize>(p: &IndexSet<D>, m: i64) -> Option<f64> {
    let q = IndexBox::<D>::cube(m);
    let mut on_boundary = 0u64;
    let mut interior = 0u64;
    for f in p.iter() {
        for a in 0..D {
            for s in [-1i64, 1] {
                let mut g = f;
                g[a] += s;
                if !q.contains(&g) {
                    on_boundary += 1;
                } else if !p.contains(&g) {
                    interior += 1;
                }
            }
        }
    }
    (interior > 0).then(|| on_boundary as f64 / interior as f64)
}

/// Random subset of `[0, m)^d` with at most half the cells: a union of a few
/// random boxes, trimmed if needed.
pub fn random_half_subset<const D: usize>(rng: &mut crate::rng::Rng, m: i64) -> IndexSet<D> {
    let q = IndexBox::<D>::cube(m);
    let mut p = IndexSet::with_bounds(q);
    let boxes = rng.gen_range(1..4);
    for _ in 0..boxes {
        let mut b = IndexBox::new([0; D], [0; D]);
        for a in 0..D {
            let lo = rng.gen_range(0..m);
            b.lo[a] = lo;
            b.hi[a] = rng.gen_range(lo + 1..=m);
        }
        for f in b.iter() {
            p.insert(&f);
        }
    }
    let limit = q.len() / 2;
    if p.len() > limit {
        let cells = p.to_vec();
        for f in cells.iter().rev().take(p.len() - limit) {
            p.remove(f);
        }
    }
    p
}

/// `Q_ε(E)` as a voxel set; convenience re-export for the smoothing checks.
pub fn lattice_cubes<const D: usize>(e: &VoidSet<D>, eps: f64) -> VoxelSet<D> {
    voxelize(e, eps)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn block_indices() {
        assert_eq!(block_index(0, 4), 0);
        assert_eq!(block_index(-2, 4), 0);
        assert_eq!(block_index(1, 4), 0);
        assert_eq!(block_index(2, 4), 1);
        assert_eq!(block_index(-3, 4), -1);
        assert_eq!(block_box(&[0, 0], 4), IndexBox::new([-2, -2], [2, 2]));
        assert_eq!(block_box(&[1], 3), IndexBox::new([2], [5]));
    }

    #[test]
    fn replacement_of_single_atom() {
        let d = LatticeDomain::<3>::cube(0.25, 16, 1).unwrap();
        let e = d.void_set(vec![[5, 5, 5]]).unwrap();
        let r = eta_replacement(&e, 4, &d);
        assert_eq!(r.len(), 64);
        assert!(e.is_subset(&r));
        assert_eq!(replacement_cardinality(&e, 4, &d, None), 63);
        assert!(eta_replacement(&VoidSet::empty(), 4, &d).is_empty());
        assert_eq!(eta_replacement(&r, 4, &d), r);
    }

    #[test]
    fn kernel_is_normalized_and_symmetric() {
        let k = KernelTable::<2>::new(0.3, 0.05);
        let total: f64 = k.values.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        let r = k.radius;
        let b = IndexBox::<2>::point([0, 0]).expand(r);
        assert!((k.box_sum(&b) - 1.0).abs() < 1e-12);
        let left = k.box_sum(&IndexBox::new([-r, -r], [0, r + 1]));
        let right = k.box_sum(&IndexBox::new([1, -r], [r + 1, r + 1]));
        assert!((left - right).abs() < 1e-12);
    }

    #[test]
    fn smoothing_a_square() {
        let e1 = IndexSet::from_indices(vec![[0i64, 0]]);
        let s = smooth_cubic_set(&e1, &SmoothParams { sigma: 0.3, cells_per_unit: Some(40), level: Some(0.1) }).unwrap();
        assert!(s.base.refine(40).cells.is_subset(&s.cover.cells));
        assert!(s.hausdorff <= 0.3 + 2.0 * s.h());
        assert!(s.clearance > 0.0);
        // deep inside the value is one; far outside zero
        let center = [20, 20];
        assert!((s.value(&center) - 1.0).abs() < 1e-12);
        assert_eq!(s.value(&[-20, 20]), 0.0);
    }

    #[test]
    fn level_too_high_is_rejected() {
        let e1 = IndexSet::from_indices(vec![[0i64, 0]]);
        let r = smooth_cubic_set(&e1, &SmoothParams { sigma: 0.3, cells_per_unit: Some(20), level: Some(0.9) });
        assert!(matches!(r, Err(Error::LevelTooHigh(_))));
        let r = smooth_cubic_set(&e1, &SmoothParams { sigma: 0.3, cells_per_unit: Some(20), level: Some(1.5) });
        assert!(matches!(r, Err(Error::Invalid(_))));
    }

    #[test]
    fn thresholds() {
        let (theta, beta) = default_thresholds(3, 4.0);
        assert!((beta - 1.0 / 12.0).abs() < 1e-15);
        assert!((theta - (1.0f64 / 96.0).powf(2.0 / 3.0)).abs() < 1e-15);
    }

    #[test]
    fn regularization_of_full_and_tiny_voids() {
        let (theta, beta) = default_thresholds(2, 4.0);
        let full = VoxelSet::new(0.25, [0.0; 2], IndexSet::from_box(&IndexBox::new([0, 0], [4, 4])));
        let r = cubic_void_regularization(&full, 4, theta, beta).unwrap();
        assert!(full.cells.is_subset(&r.v.cells));
        let tiny = VoxelSet::new(1.0 / 32.0, [0.0; 2], IndexSet::from_indices(vec![[1i64, 1]]));
        let r = cubic_void_regularization(&tiny, 32, theta, beta).unwrap();
        assert_eq!(r.labels, vec![([0, 0], EpsCubeLabel::Bad1)]);
        assert_eq!(r.v.cells, tiny.cells);
        assert!(r.bad1_max_simplex_fraction <= 0.5);
    }

    #[test]
    fn boundary_face_ratio_of_corner_block() {
        let p = IndexSet::from_box(&IndexBox::new([0, 0], [2, 2]));
        // two unit faces on each of the two outer sides, two on each inner side
        assert_eq!(boundary_face_ratio(&p, 4), Some(1.0));
    }
}
