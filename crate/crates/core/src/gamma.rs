//! Scaling regimes, recovery sequences and convergence tables for the
//! perimeter, curvature and elastic energies.

use nalgebra::SMatrix;

use crate::curvature::{curvature_energy, CurvatureModel};
use crate::elastic::{
    elastic_energy, evaluate_q_bulk, minimize_elastic, project_rigid_complement, q_bulk, symmetric_discrete_gradient_field,
    CellEnergyModel, DiscreteGradient, Displacement, SolverParams,
};
use crate::error::{Error, Result};
use crate::lattice::{cube_box, BoxUnion, IndexBox, IndexSet, LatticeDomain, RealBox, VoidSet, VoxelSet};
use crate::surface::{box_union_perimeter, discrete_perimeter_total, padded_domain, NeighborModel};

/// One parameter tuple `(ε, δ_ε, η_ε = nε, γ_ε)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegimeRow {
    pub eps: f64,
    pub delta: f64,
    /// `η_ε / ε`.
    pub n: i64,
    pub eta: f64,
    pub gamma: f64,
}

impl RegimeRow {
    pub fn new(eps: f64, delta: f64, n: i64, gamma: f64) -> Self {
        Self { eps, delta, n, eta: n as f64 * eps, gamma }
    }
}

/// Derived quantities whose trends the regime must satisfy.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Monitors {
    pub eta_over_eps: f64,
    pub eta: f64,
    /// `γ η^{-q}`, must increase.
    pub gamma_eta_q: f64,
    /// `γ η^{1-q}`, must decrease.
    pub gamma_eta_1q: f64,
    /// `γ δ^{-q/9}`, must increase.
    pub gamma_delta: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalingRegime {
    q: f64,
    rows: Vec<RegimeRow>,
}

impl ScalingRegime {
    /// Regime from explicit rows. Checks positivity, `q ≥ 2` and strictly
    /// decreasing `ε`; the rate trends are reported by [`Self::trend_failures`].
    pub fn explicit(q: f64, rows: Vec<RegimeRow>) -> Result<Self> {
        if !(q >= 2.0) {
            return Err(Error::Invalid(format!("q must be at least 2, got {q}")));
        }
        if rows.is_empty() {
            return Err(Error::Invalid("regime has no rows".into()));
        }
        for (k, r) in rows.iter().enumerate() {
            if !(r.eps > 0.0 && r.delta > 0.0 && r.gamma > 0.0 && r.n >= 1) {
                return Err(Error::Invalid(format!("row {k}: parameters must be positive")));
            }
            if k > 0 && !(r.eps < rows[k - 1].eps) {
                return Err(Error::Invalid(format!("row {k}: eps must strictly decrease")));
            }
        }
        Ok(Self { q, rows })
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn rows(&self) -> &[RegimeRow] {
        &self.rows
    }

    pub fn monitors(&self) -> Vec<Monitors> {
        self.rows
            .iter()
            .map(|r| Monitors {
                eta_over_eps: r.n as f64,
                eta: r.eta,
                gamma_eta_q: r.gamma * r.eta.powf(-self.q),
                gamma_eta_1q: r.gamma * r.eta.powf(1.0 - self.q),
                gamma_delta: r.gamma * r.delta.powf(-self.q / 9.0),
            })
            .collect()
    }

    /// Every row-over-row violation of the monitor trends, named.
    pub fn trend_failures(&self) -> Vec<String> {
        let m = self.monitors();
        let mut out = Vec::new();
        type Check = (&'static str, fn(&Monitors) -> f64, bool);
        let checks: [Check; 5] = [
            ("eta/eps increasing", |m| m.eta_over_eps, true),
            ("eta decreasing", |m| m.eta, false),
            ("gamma*eta^-q increasing", |m| m.gamma_eta_q, true),
            ("gamma*eta^(1-q) decreasing", |m| m.gamma_eta_1q, false),
            ("gamma*delta^(-q/9) increasing", |m| m.gamma_delta, true),
        ];
        for (name, f, up) in checks {
            for k in 1..m.len() {
                let (a, b) = (f(&m[k - 1]), f(&m[k]));
                let ok = if up { b > a } else { b < a };
                if !ok {
                    out.push(format!("{name} fails between rows {} and {k} ({a:.6e} -> {b:.6e})", k - 1));
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let f = self.trend_failures();
        if f.is_empty() {
            Ok(())
        } else {
            Err(Error::RegimeRejected(f.join("; ")))
        }
    }
}

/// Default regime: `δ = √ε`, `η = ε·round(ε^{m−1})` with `m` the midpoint of
/// the admissible exponent window `[q/(18(q−1)), 1/18]`, and
/// `γ = (η^{q−1} δ^{q/9})^{1/2}` evaluated at the rounded `η`.
///
/// This `γ` sits at the geometric mean of the two binding rates, so
/// `γη^{1−q} = (η^{1−q} δ^{q/9})^{1/2}` decreases and `γδ^{−q/9}` increases.
pub fn suggest_regime(eps: &[f64], q: f64) -> Result<ScalingRegime> {
    if eps.len() < 3 {
        return Err(Error::Invalid(format!("eps sequence too short: {} values, need at least 3", eps.len())));
    }
    if !(q >= 2.0) {
        return Err(Error::Invalid(format!("q must be at least 2, got {q}")));
    }
    for w in eps.windows(2) {
        if !(w[1] < w[0]) {
            return Err(Error::Invalid("eps sequence must strictly decrease".into()));
        }
    }
    let m = (q / (q - 1.0) + 1.0) / 36.0;
    let rows = eps
        .iter()
        .map(|&e| {
            let delta = e.sqrt();
            let n = (e.powf(m - 1.0)).round().max(1.0) as i64;
            let eta = n as f64 * e;
            let gamma = (eta.powf(q - 1.0) * delta.powf(q / 9.0)).sqrt();
            RegimeRow::new(e, delta, n, gamma)
        })
        .collect();
    let r = ScalingRegime::explicit(q, rows)?;
    r.validate()?;
    Ok(r)
}

/// `E_σ`: the union of grid cubes `Q_σ(σk)` contained in `E`.
pub fn coordinate_normal_approximation<const D: usize>(e: &VoxelSet<D>, sigma: f64) -> VoxelSet<D> {
    let Some(tb) = e.cells.tight_bounds() else {
        return VoxelSet::new(sigma, [0.0; D], IndexSet::empty());
    };
    let h = e.cell_size;
    let tol = 1e-9 * h.min(sigma);
    let mut cand = IndexBox::new([0; D], [0; D]);
    for a in 0..D {
        let lo = e.origin[a] + h * (tb.lo[a] as f64 - 0.5);
        let hi = e.origin[a] + h * (tb.hi[a] as f64 - 0.5);
        cand.lo[a] = (lo / sigma).floor() as i64 - 1;
        cand.hi[a] = (hi / sigma).ceil() as i64 + 2;
    }
    let cells = IndexSet::from_fn(cand, |k| {
        let mut fine = IndexBox::new([0; D], [0; D]);
        for a in 0..D {
            let lo = sigma * (k[a] as f64 - 0.5);
            let hi = sigma * (k[a] as f64 + 0.5);
            // fine cells j with o + h(j + 1/2) > lo and o + h(j - 1/2) < hi
            fine.lo[a] = ((lo + tol - e.origin[a]) / h - 0.5).floor() as i64 + 1;
            fine.hi[a] = ((hi - tol - e.origin[a]) / h + 0.5).ceil() as i64;
        }
        !fine.is_empty() && fine.iter().all(|j| e.cells.contains(&j))
    });
    VoxelSet::new(sigma, [0.0; D], cells)
}

/// `E_ε = ∪_{i ∈ ηZ^d ∩ E} Z_ε(Q_η(i)) ∩ Ω` with `η = nε`.
pub fn recovery_sequence<const D: usize>(e: &BoxUnion<D>, n: i64, domain: &LatticeDomain<D>) -> Result<VoidSet<D>> {
    if n < 1 {
        return Err(Error::Invalid("eta/eps must be a positive integer".into()));
    }
    let eps = domain.eps();
    let Some(b) = e.bounds() else {
        return Ok(VoidSet::empty());
    };
    let eta = n as f64 * eps;
    let mut centers = IndexBox::new([0; D], [0; D]);
    for a in 0..D {
        centers.lo[a] = (b.lo[a] / eta).floor() as i64 - 1;
        centers.hi[a] = (b.hi[a] / eta).ceil() as i64 + 2;
    }
    let mut sites = Vec::new();
    for m in centers.iter() {
        let c = m.map(|v| v * n);
        if e.contains(&domain.coordinate(&c)) {
            sites.push(c);
        }
    }
    build_blocks(&sites, n, domain)
}

fn build_blocks<const D: usize>(centers: &[[i64; D]], n: i64, domain: &LatticeDomain<D>) -> Result<VoidSet<D>> {
    let hull = centers.iter().fold(IndexBox::empty(), |acc, c| acc.hull(&cube_box(c, n)));
    let mut out = IndexSet::with_bounds(hull.intersect(&domain.omega_bounds()));
    for c in centers {
        for s in cube_box(c, n).iter() {
            if domain.in_omega(&s) {
                out.insert(&s);
            }
        }
    }
    if !domain.compactly_inside(&out) {
        return Err(Error::NotCompactlyInside);
    }
    Ok(out)
}

/// Recovery sequence of a voxel set given on an η-grid: cells of size `η`
/// centered at integer multiples of `η`.
pub fn recovery_sequence_voxels<const D: usize>(
    a: &VoxelSet<D>,
    n: i64,
    domain: &LatticeDomain<D>,
) -> Result<VoidSet<D>> {
    let eta = n as f64 * domain.eps();
    if (a.cell_size - eta).abs() > 1e-12 * eta {
        return Err(Error::NotEtaAligned);
    }
    let mut shift = [0i64; D];
    for k in 0..D {
        let t = a.origin[k] / eta;
        if (t - t.round()).abs() > 1e-9 {
            return Err(Error::NotEtaAligned);
        }
        shift[k] = t.round() as i64;
    }
    let centers: Vec<[i64; D]> = a
        .cells
        .iter()
        .map(|k| {
            let mut c = [0; D];
            for d in 0..D {
                c[d] = n * (k[d] + shift[d]);
            }
            c
        })
        .collect();
    build_blocks(&centers, n, domain)
}

/// `H^{d−2}` of the edge skeleton of a coordinate polyhedron: total edge
/// length for `d = 3`, number of corners for `d = 2`.
pub fn skeleton_measure<const D: usize>(e: &BoxUnion<D>) -> f64 {
    skeleton_pieces(e).iter().map(|s| s.length).sum()
}

/// Edge segment (`d = 3`) or corner point (`d = 2`) of the skeleton.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SkeletonPiece<const D: usize> {
    pub start: [f64; D],
    /// Axis of the segment (`d = 3`); unused for corners.
    pub axis: usize,
    /// Segment length, or `1` for a corner.
    pub length: f64,
}

pub fn skeleton_pieces<const D: usize>(e: &BoxUnion<D>) -> Vec<SkeletonPiece<D>> {
    let g = e.grid();
    let shape: Vec<i64> = g.coords.iter().map(|c| c.len() as i64 - 1).collect();
    let occ = |k: &[i64; D]| g.occupied.contains(k);
    let mut out = Vec::new();
    let is_edge = |c: [bool; 4]| {
        let cnt = c.iter().filter(|&&b| b).count();
        cnt == 1 || cnt == 3 || (cnt == 2 && c[0] == c[3])
    };
    if D == 2 {
        for x in 0..=shape[0] {
            for y in 0..=shape[1] {
                let mut c = [false; 4];
                for (t, (dx, dy)) in [(-1, -1), (-1, 0), (0, -1), (0, 0)].iter().enumerate() {
                    let mut k = [0i64; D];
                    k[0] = x + dx;
                    k[1] = y + dy;
                    c[t] = occ(&k);
                }
                if is_edge(c) {
                    let mut start = [0.0; D];
                    start[0] = g.coords[0][x as usize];
                    start[1] = g.coords[1][y as usize];
                    out.push(SkeletonPiece { start, axis: 0, length: 1.0 });
                }
            }
        }
    } else if D == 3 {
        for axis in 0..3 {
            let (p, r) = ((axis + 1) % 3, (axis + 2) % 3);
            for s in 0..shape[axis] {
                for x in 0..=shape[p] {
                    for y in 0..=shape[r] {
                        let mut c = [false; 4];
                        for (t, (dx, dy)) in [(-1, -1), (-1, 0), (0, -1), (0, 0)].iter().enumerate() {
                            let mut k = [0i64; D];
                            k[axis] = s;
                            k[p] = x + dx;
                            k[r] = y + dy;
                            c[t] = occ(&k);
                        }
                        if is_edge(c) {
                            let mut start = [0.0; D];
                            start[axis] = g.coords[axis][s as usize];
                            start[p] = g.coords[p][x as usize];
                            start[r] = g.coords[r][y as usize];
                            out.push(SkeletonPiece { start, axis, length: g.side(axis, s) });
                        }
                    }
                }
            }
        }
    }
    out
}

/// Number of lattice sites within distance `radius` of the skeleton.
pub fn sites_near_skeleton<const D: usize>(e: &BoxUnion<D>, domain: &LatticeDomain<D>, radius: f64) -> usize {
    let pieces = skeleton_pieces(e);
    if pieces.is_empty() {
        return 0;
    }
    let b = e.bounds().expect("nonempty skeleton implies nonempty set");
    let mut grown = b;
    for a in 0..D {
        grown.lo[a] -= radius + domain.eps();
        grown.hi[a] += radius + domain.eps();
    }
    let ib = crate::lattice::index_box(domain.eps(), &grown);
    let r2 = radius * radius;
    ib.iter()
        .filter(|i| {
            let x = domain.coordinate(i);
            pieces.iter().any(|p| {
                let mut d2 = 0.0;
                for a in 0..D {
                    let v = if D == 3 && a == p.axis {
                        let lo = p.start[a];
                        let hi = lo + p.length;
                        if x[a] < lo {
                            lo - x[a]
                        } else if x[a] > hi {
                            x[a] - hi
                        } else {
                            0.0
                        }
                    } else {
                        x[a] - p.start[a]
                    };
                    d2 += v * v;
                }
                d2 <= r2
            })
        })
        .count()
}

/// Models used by [`gamma_limsup_experiment`].
#[derive(Clone, Debug)]
pub struct GammaModels<const D: usize> {
    pub neighbors: NeighborModel<D>,
    pub cell: CellEnergyModel,
    /// Affine displacement gradient `F` of the limit displacement `u(x) = Fx`.
    pub strain: SMatrix<f64, D, D>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GammaRow {
    pub eps: f64,
    pub delta: f64,
    pub eta: f64,
    pub gamma: f64,
    pub f_per: f64,
    pub per_phi: f64,
    pub gap: f64,
    pub f_curv: f64,
    /// `F^curv / (γ η^{1−q})`.
    pub curv_ratio: f64,
    /// `C₀ γ η^{1−q} H^{d−2}(Σ)` with `C₀` fixed from the first row.
    pub curv_bound: f64,
    pub elastic: f64,
    pub elastic_limit: f64,
}

/// Four-point Gauss–Legendre rule on `[-1/2, 1/2]`.
const GAUSS4: [(f64, f64); 4] = [
    (-0.430_568_155_797_026_3, 0.173_927_422_568_726_9),
    (-0.169_990_521_792_428_1, 0.326_072_577_431_273_1),
    (0.169_990_521_792_428_1, 0.326_072_577_431_273_1),
    (0.430_568_155_797_026_3, 0.173_927_422_568_726_9),
];

/// `⨍_{Q_ε(i)} u` by the tensor Gauss rule with `4^d` points.
pub fn cell_average<const D: usize>(u: impl Fn(&[f64; D]) -> [f64; D], center: &[f64; D], eps: f64) -> [f64; D] {
    let mut acc = [0.0; D];
    let total = 4usize.pow(D as u32);
    for t in 0..total {
        let mut x = *center;
        let mut w = 1.0;
        let mut r = t;
        for xa in x.iter_mut() {
            let (node, wt) = GAUSS4[r % 4];
            r /= 4;
            *xa += eps * node;
            w *= wt;
        }
        let v = u(&x);
        for a in 0..D {
            acc[a] += w * v[a];
        }
    }
    acc
}

/// Perimeter, curvature and elastic energies of the recovery sequence along
/// the regime, with `Ω = omega`.
pub fn gamma_limsup_experiment<const D: usize>(
    e: &BoxUnion<D>,
    regime: &ScalingRegime,
    models: &GammaModels<D>,
    omega: &RealBox<D>,
) -> Result<Vec<GammaRow>> {
    let density = models.neighbors.density();
    let per_phi = box_union_perimeter(e, &density);
    let skeleton = skeleton_measure(e);
    let q_form = q_bulk::<D>(&models.cell, 1e-4);
    let sym = (models.strain + models.strain.transpose()) * 0.5;
    let q_sym = evaluate_q_bulk(&q_form, &DiscreteGradient::from_matrix(&sym));
    let solid_volume = omega.volume() - e.measure();
    let mut rows: Vec<GammaRow> = Vec::new();
    let mut c0: Option<f64> = None;
    for r in regime.rows() {
        let domain = padded_domain(r.eps, omega)?;
        let e_eps = recovery_sequence(e, r.n, &domain)?;
        let f_per = discrete_perimeter_total(&e_eps, &models.neighbors, &domain);
        let cm = CurvatureModel { gamma: r.gamma, n: r.n, q: regime.q() };
        let f_curv = curvature_energy(&cm, &e_eps, &domain, domain.u_box());
        let scale = r.gamma * r.eta.powf(1.0 - regime.q());
        let curv_ratio = f_curv / scale;
        let c = *c0.get_or_insert(if skeleton > 0.0 { curv_ratio / skeleton } else { 0.0 });
        let strain = models.strain;
        let u = Displacement::from_fn(&domain, &e_eps, |x| {
            cell_average(|y| crate::elastic::apply(&strain, y), x, r.eps)
        });
        let elastic = elastic_energy(&models.cell, &u, &e_eps, r.delta, &domain.omega_bounds())?;
        rows.push(GammaRow {
            eps: r.eps,
            delta: r.delta,
            eta: r.eta,
            gamma: r.gamma,
            f_per,
            per_phi,
            gap: (f_per - per_phi).abs(),
            f_curv,
            curv_ratio,
            curv_bound: c * scale * skeleton,
            elastic,
            elastic_limit: 0.5 * q_sym * solid_volume,
        });
    }
    Ok(rows)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CauchyBornRow {
    pub eps: f64,
    pub cells: usize,
    pub mean_deviation: f64,
    pub max_deviation: f64,
    pub converged: bool,
}

/// Minimizes with the affine datum `u0(x) = Fx` around the void
/// `Z_ε(void)` and compares `ē` with `sym(F)Z` on solid cells at distance
/// at least `margin` from the void and from `∂Ω`.
#[allow(clippy::too_many_arguments)]
pub fn cauchy_born_experiment<const D: usize>(
    f: &SMatrix<f64, D, D>,
    eps_list: &[f64],
    void: &BoxUnion<D>,
    omega: &RealBox<D>,
    model: &CellEnergyModel,
    delta: f64,
    solver: &SolverParams,
    margin: f64,
) -> Result<Vec<CauchyBornRow>> {
    let sym = (f + f.transpose()) * 0.5;
    let target = project_rigid_complement(&DiscreteGradient::from_matrix(&sym));
    let mut rows = Vec::new();
    for &eps in eps_list {
        let domain = padded_domain(eps, omega)?;
        let sites: Vec<_> = domain.omega_sites().filter(|i| void.contains(&domain.coordinate(i))).collect();
        let e = domain.void_set(sites)?;
        let min = minimize_elastic(model, &domain, &e, |x| crate::elastic::apply(f, x), delta, solver)?;
        let field = symmetric_discrete_gradient_field(&min.displacement, &e);
        let mut devs = Vec::new();
        for (i, g) in field {
            let mut c = domain.coordinate(&i);
            for v in c.iter_mut() {
                *v += 0.5 * eps;
            }
            let far_from_void = void.boxes.iter().all(|b| box_distance(&c, b) >= margin);
            let inside = (0..D).all(|a| c[a] - omega.lo[a] >= margin && omega.hi[a] - c[a] >= margin);
            let solid = (0..crate::elastic::vertex_count(D)).all(|l| {
                let s = crate::elastic::add(&i, &crate::elastic::vertex_offset::<D>(l));
                domain.in_u(&s) && !e.contains(&s)
            });
            if far_from_void && inside && solid {
                devs.push(g.sub(&target).norm());
            }
        }
        let n = devs.len();
        let mean = if n == 0 { 0.0 } else { devs.iter().sum::<f64>() / n as f64 };
        let max = devs.iter().copied().fold(0.0, f64::max);
        rows.push(CauchyBornRow { eps, cells: n, mean_deviation: mean, max_deviation: max, converged: min.converged });
    }
    Ok(rows)
}

fn box_distance<const D: usize>(x: &[f64; D], b: &RealBox<D>) -> f64 {
    let mut d2 = 0.0;
    for a in 0..D {
        let v = if x[a] < b.lo[a] {
            b.lo[a] - x[a]
        } else if x[a] > b.hi[a] {
            x[a] - b.hi[a]
        } else {
            0.0
        };
        d2 += v * v;
    }
    d2.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pow2(k: i32) -> f64 {
        2f64.powi(-k)
    }

    #[test]
    fn suggested_regime_trends() {
        for q in [2.0, 3.0] {
            let eps: Vec<f64> = (6..=12).map(pow2).collect();
            let r = suggest_regime(&eps, q).unwrap();
            assert!(r.trend_failures().is_empty(), "{:?}", r.trend_failures());
        }
        assert!(suggest_regime(&[0.1, 0.05], 2.0).is_err());
    }

    #[test]
    fn exponent_arithmetic_for_three_halves() {
        let eta: f64 = 0.01;
        let gamma = eta.powf(1.5);
        assert!((gamma * eta.powi(-2) - eta.powf(-0.5)).abs() < 1e-9);
        assert!((gamma * eta.powi(-1) - eta.powf(0.5)).abs() < 1e-12);
    }

    #[test]
    fn constant_eta_is_rejected() {
        let rows = vec![RegimeRow::new(0.1, 0.3, 2, 0.01), RegimeRow::new(0.05, 0.2, 4, 0.01), RegimeRow::new(0.025, 0.15, 8, 0.01)];
        let r = ScalingRegime::explicit(2.0, rows).unwrap();
        let f = r.trend_failures();
        assert!(f.iter().any(|s| s.starts_with("eta decreasing")), "{f:?}");
        assert!(matches!(r.validate(), Err(Error::RegimeRejected(_))));
    }

    #[test]
    fn recovery_of_single_block() {
        let d = padded_domain(1.0 / 16.0, &RealBox::new([0.0; 3], [1.0; 3])).unwrap();
        let e = BoxUnion::new(vec![RealBox::new([0.25; 3], [0.5; 3])]);
        let rs = recovery_sequence(&e, 4, &d).unwrap();
        assert_eq!(rs.len(), 64);
        assert!(recovery_sequence(&BoxUnion::default(), 4, &d).unwrap().is_empty());
        let touching = BoxUnion::new(vec![RealBox::new([0.0; 3], [0.5; 3])]);
        assert!(matches!(recovery_sequence(&touching, 4, &d), Err(Error::NotCompactlyInside)));
    }

    #[test]
    fn voxel_recovery_alignment() {
        let d = padded_domain(0.125, &RealBox::new([0.0; 2], [2.0; 2])).unwrap();
        let v = VoxelSet::new(0.25, [0.0; 2], IndexSet::from_indices(vec![[3, 3], [4, 3]]));
        let rs = recovery_sequence_voxels(&v, 2, &d).unwrap();
        assert_eq!(rs.len(), 8);
        assert_eq!(crate::lattice::voxelize(&rs, 0.125).measure(), v.measure());
        let off = VoxelSet::new(0.25, [0.1, 0.0], v.cells.clone());
        assert!(matches!(recovery_sequence_voxels(&off, 2, &d), Err(Error::NotEtaAligned)));
    }

    #[test]
    fn skeleton_of_a_box() {
        let b = BoxUnion::new(vec![RealBox::new([0.0, 0.0, 0.0], [1.0, 2.0, 3.0])]);
        assert_eq!(skeleton_measure(&b), 4.0 * 6.0);
        let sq = BoxUnion::new(vec![RealBox::new([0.0, 0.0], [1.0, 1.0])]);
        assert_eq!(skeleton_measure(&sq), 4.0);
        let ell = BoxUnion::new(vec![RealBox::new([0.0, 0.0], [2.0, 1.0]), RealBox::new([0.0, 1.0], [1.0, 2.0])]);
        assert_eq!(skeleton_measure(&ell), 6.0);
    }

    #[test]
    fn coordinate_normal_inner_box() {
        let s = 0.25;
        let e = BoxUnion::new(vec![RealBox::new([0.0; 3], [1.0; 3])]);
        let fine = e.voxelize(s / 2.0, [s / 4.0; 3]);
        let es = coordinate_normal_approximation(&fine, s);
        assert_eq!(es.len(), 27);
        let gap = fine.measure() - es.measure();
        assert!((gap - (1.0 - 0.75f64.powi(3))).abs() < 1e-12);
        let aligned = BoxUnion::new(vec![RealBox::new([-s / 2.0; 2], [0.5 - s / 2.0; 2])]).voxelize(s, [0.0; 2]);
        assert_eq!(coordinate_normal_approximation(&aligned, s).cells, aligned.cells);
    }

    #[test]
    fn gauss_average_of_polynomial() {
        let avg = cell_average(|x: &[f64; 2]| [x[0] * x[0] * x[0] * x[1], x[1] * x[1]], &[0.5, 0.5], 1.0);
        // ∫_0^1 x³ dx ∫_0^1 y dy = 1/8; ∫ y² = 1/3
        assert!((avg[0] - 0.125).abs() < 1e-14);
        assert!((avg[1] - 1.0 / 3.0).abs() < 1e-14);
    }
}
