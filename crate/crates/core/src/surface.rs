//! Anisotropic discrete perimeter, the induced density `φ(ν) = Σ_k c_k |ν_k|`
//! and exact anisotropic perimeters of voxel sets and coordinate polyhedra.
//!
//! All perimeters are accumulated as integer counts (bonds or faces) per
//! coefficient and multiplied once at the end, so aligned configurations
//! compare equal without rounding.

use crate::error::{fmt_index, Error, Result};
use crate::gamma::{recovery_sequence, RegimeRow, ScalingRegime};
use crate::lattice::{BoxUnion, Index, IndexBox, LatticeDomain, RealBox, VoidSet, VoxelSet};

/// Interaction set `V` with coefficients `c_ξ`.
#[derive(Clone, Debug, PartialEq)]
pub struct NeighborModel<const D: usize> {
    bonds: Vec<(Index<D>, f64)>,
}

impl<const D: usize> NeighborModel<D> {
    /// Validates `‖ξ‖_∞ ≤ 1`, `ξ ≠ 0`, `±e_k ∈ V`, `V = -V`, `c_ξ = c_{-ξ} > 0`
    /// and that no bond is listed twice. Bonds are stored in lexicographic
    /// order.
    pub fn new(mut bonds: Vec<(Index<D>, f64)>) -> Result<Self> {
        bonds.sort_by_key(|a| a.0);
        for w in bonds.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::Invalid(format!("bond {} listed twice", fmt_index(&w[0].0))));
            }
        }
        let find = |xi: &Index<D>| bonds.binary_search_by(|b| b.0.cmp(xi)).ok().map(|p| bonds[p].1);
        for (xi, c) in &bonds {
            if xi.iter().all(|&v| v == 0) {
                return Err(Error::Invalid("the zero vector is not a bond".into()));
            }
            if xi.iter().any(|v| v.abs() > 1) {
                return Err(Error::Invalid(format!("bond {} has sup-norm above 1", fmt_index(xi))));
            }
            if !(c.is_finite() && *c > 0.0) {
                return Err(Error::Invalid(format!("bond {} needs a positive coefficient", fmt_index(xi))));
            }
            let neg = xi.map(|v| -v);
            match find(&neg) {
                None => return Err(Error::Invalid(format!("bond {} lacks its opposite", fmt_index(xi)))),
                Some(cn) if cn != *c => {
                    return Err(Error::Invalid(format!(
                        "bonds {} and {} have different coefficients",
                        fmt_index(xi),
                        fmt_index(&neg)
                    )))
                }
                _ => {}
            }
        }
        for k in 0..D {
            let mut e = [0; D];
            e[k] = 1;
            if find(&e).is_none() {
                return Err(Error::Invalid(format!("coordinate bond {} is missing", fmt_index(&e))));
            }
        }
        Ok(Self { bonds })
    }

    /// `V = {±e_k}` with coefficient `c`.
    pub fn nearest(c: f64) -> Self {
        let mut bonds = Vec::new();
        for k in 0..D {
            for s in [-1, 1] {
                let mut e = [0; D];
                e[k] = s;
                bonds.push((e, c));
            }
        }
        Self::new(bonds).expect("nearest-neighbour model is valid")
    }

    /// `V = {±e_k} ∪ {±e_k ± e_l}` with coefficients `c1` and `c2`.
    pub fn nearest_and_diagonal(c1: f64, c2: f64) -> Self {
        let mut bonds = Self::nearest(c1).bonds;
        for k in 0..D {
            for l in (k + 1)..D {
                for sk in [-1, 1] {
                    for sl in [-1, 1] {
                        let mut e = [0; D];
                        e[k] = sk;
                        e[l] = sl;
                        bonds.push((e, c2));
                    }
                }
            }
        }
        Self::new(bonds).expect("diagonal model is valid")
    }

    pub fn bonds(&self) -> &[(Index<D>, f64)] {
        &self.bonds
    }

    pub fn density(&self) -> SurfaceDensity<D> {
        let mut c = [0.0; D];
        for (xi, cx) in &self.bonds {
            for k in 0..D {
                if xi[k] > 0 {
                    c[k] += cx;
                }
            }
        }
        SurfaceDensity { c }
    }
}

/// `φ(ν) = Σ_k c_k |ν_k|`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SurfaceDensity<const D: usize> {
    pub c: [f64; D],
}

impl<const D: usize> SurfaceDensity<D> {
    /// `φ` on an arbitrary vector; this is a norm.
    pub fn eval(&self, v: &[f64; D]) -> f64 {
        (0..D).map(|k| self.c[k] * v[k].abs()).sum()
    }
}

pub fn density_phi<const D: usize>(model: &NeighborModel<D>, nu: &[f64; D]) -> Result<f64> {
    let n2: f64 = nu.iter().map(|v| v * v).sum();
    if n2 == 0.0 {
        return Err(Error::Invalid("normal must be nonzero".into()));
    }
    if (n2.sqrt() - 1.0).abs() > 1e-12 {
        return Err(Error::Invalid(format!("normal must have unit length, got {}", n2.sqrt())));
    }
    Ok(model.density().eval(nu))
}

/// Broken-bond counts per bond of the model, over voids in `Z_ε(region)`.
pub fn broken_bond_counts<const D: usize>(
    e: &VoidSet<D>,
    model: &NeighborModel<D>,
    domain: &LatticeDomain<D>,
    region: &IndexBox<D>,
) -> Vec<u64> {
    let mut counts = vec![0u64; model.bonds.len()];
    for i in region.intersect(e.bounds()).iter() {
        if !e.contains(&i) {
            continue;
        }
        for (b, (xi, _)) in model.bonds.iter().enumerate() {
            let mut j = i;
            for k in 0..D {
                j[k] += xi[k];
            }
            if domain.in_u(&j) && !e.contains(&j) {
                counts[b] += 1;
            }
        }
    }
    counts
}

/// `F^per(E, region) = Σ_{i ∈ Z_ε(region) ∩ E} Σ_{ξ ∈ V, i+εξ ∈ Z_ε(U)} ε^{d-1} c_ξ (1 − χ_E(i+εξ))`.
pub fn discrete_perimeter<const D: usize>(
    e: &VoidSet<D>,
    model: &NeighborModel<D>,
    domain: &LatticeDomain<D>,
    region: &IndexBox<D>,
) -> f64 {
    let counts = broken_bond_counts(e, model, domain, region);
    let scale = domain.eps().powi(D as i32 - 1);
    counts.iter().zip(&model.bonds).map(|(&n, (_, c))| n as f64 * c).sum::<f64>() * scale
}

/// `F^per_ε(E)`, the discrete perimeter over all of `U`.
pub fn discrete_perimeter_total<const D: usize>(
    e: &VoidSet<D>,
    model: &NeighborModel<D>,
    domain: &LatticeDomain<D>,
) -> f64 {
    discrete_perimeter(e, model, domain, domain.u_box())
}

/// Exposed-face counts per axis; a face counts when its center lies in
/// `region` (half-open).
pub fn exposed_face_counts<const D: usize>(a: &VoxelSet<D>, region: Option<&RealBox<D>>) -> [u64; D] {
    let mut counts = [0u64; D];
    let h = 0.5 * a.cell_size;
    for k in a.cells.iter() {
        let c = a.center(&k);
        for ax in 0..D {
            for s in [-1i64, 1] {
                let mut nb = k;
                nb[ax] += s;
                if a.cells.contains(&nb) {
                    continue;
                }
                if let Some(r) = region {
                    let mut fc = c;
                    fc[ax] += s as f64 * h;
                    if !r.contains(&fc) {
                        continue;
                    }
                }
                counts[ax] += 1;
            }
        }
    }
    counts
}

/// `Per_φ(A, region)` for a voxel set by exact face counting.
pub fn continuum_perimeter<const D: usize>(
    a: &VoxelSet<D>,
    density: &SurfaceDensity<D>,
    region: Option<&RealBox<D>>,
) -> f64 {
    let counts = exposed_face_counts(a, region);
    let area = a.cell_size.powi(D as i32 - 1);
    (0..D).map(|k| counts[k] as f64 * density.c[k]).sum::<f64>() * area
}

/// `Per_φ(E)` for a finite union of boxes, computed on the rectilinear grid of
/// its face coordinates.
pub fn box_union_perimeter<const D: usize>(e: &BoxUnion<D>, density: &SurfaceDensity<D>) -> f64 {
    let g = e.grid();
    let mut area = [0.0; D];
    for k in g.occupied.iter() {
        for ax in 0..D {
            for s in [-1i64, 1] {
                let mut nb = k;
                nb[ax] += s;
                if !g.occupied.contains(&nb) {
                    area[ax] += g.face_area(&k, ax);
                }
            }
        }
    }
    (0..D).map(|k| density.c[k] * area[k]).sum()
}

/// `φ`-weighted area of `∂Q_ε(E)` lying on the Dirichlet part of the
/// boundary: faces of void cubes whose outer neighbour is a site of `U \ Ω`.
pub fn dirichlet_boundary_energy<const D: usize>(
    e: &VoidSet<D>,
    density: &SurfaceDensity<D>,
    domain: &LatticeDomain<D>,
) -> f64 {
    let mut counts = [0u64; D];
    for i in e.iter() {
        for ax in 0..D {
            for s in [-1i64, 1] {
                let mut j = i;
                j[ax] += s;
                if domain.in_u(&j) && !domain.in_omega(&j) {
                    counts[ax] += 1;
                }
            }
        }
    }
    let area = domain.eps().powi(D as i32 - 1);
    (0..D).map(|k| counts[k] as f64 * density.c[k]).sum::<f64>() * area
}

/// One row of [`recovery_limsup_check`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PerimeterRow {
    pub eps: f64,
    pub eta: f64,
    pub f_per: f64,
    pub per_phi: f64,
    /// `|F^per_ε(E_ε) − Per_φ(E)|`.
    pub gap: f64,
}

/// Lattice domain with `Ω` the given box and `U` two lattice layers wider.
pub fn padded_domain<const D: usize>(eps: f64, omega: &RealBox<D>) -> Result<LatticeDomain<D>> {
    let mut u = *omega;
    for a in 0..D {
        u.lo[a] -= 2.0 * eps;
        u.hi[a] += 2.0 * eps;
    }
    LatticeDomain::from_real(eps, &[*omega], &u)
}

/// Perimeter of the recovery sequence of `E` against `Per_φ(E)` along the
/// regime.
pub fn recovery_limsup_check<const D: usize>(
    e: &BoxUnion<D>,
    regime: &ScalingRegime,
    model: &NeighborModel<D>,
    omega: &RealBox<D>,
) -> Result<Vec<PerimeterRow>> {
    recovery_limsup_check_with(regime, model, omega, |_| e.clone())
}

/// As [`recovery_limsup_check`], with the target set chosen per row (for
/// instance a box snapped to that row's η-grid).
pub fn recovery_limsup_check_with<const D: usize>(
    regime: &ScalingRegime,
    model: &NeighborModel<D>,
    omega: &RealBox<D>,
    target: impl Fn(&RegimeRow) -> BoxUnion<D>,
) -> Result<Vec<PerimeterRow>> {
    let density = model.density();
    regime
        .rows()
        .iter()
        .map(|row| {
            let e = target(row);
            let domain = padded_domain(row.eps, omega)?;
            let e_eps = recovery_sequence(&e, row.n, &domain)?;
            let f_per = discrete_perimeter_total(&e_eps, model, &domain);
            let per_phi = box_union_perimeter(&e, &density);
            Ok(PerimeterRow { eps: row.eps, eta: row.eta, f_per, per_phi, gap: (f_per - per_phi).abs() })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{voxelize, IndexSet};

    fn dom3(n: i64) -> LatticeDomain<3> {
        LatticeDomain::cube(1.0, n, 1).unwrap()
    }

    #[test]
    fn model_validation() {
        assert!(NeighborModel::<2>::new(vec![([1, 0], 1.0), ([-1, 0], 1.0)]).is_err());
        assert!(NeighborModel::<2>::new(vec![
            ([1, 0], 1.0),
            ([-1, 0], 1.0),
            ([0, 1], 1.0),
            ([0, -1], 2.0)
        ])
        .is_err());
        assert!(NeighborModel::<2>::new(vec![([2, 0], 1.0), ([-2, 0], 1.0)]).is_err());
        assert_eq!(NeighborModel::<3>::nearest_and_diagonal(1.0, 1.0).bonds().len(), 18);
    }

    #[test]
    fn single_and_pair_perimeters() {
        let d = dom3(6);
        let m = NeighborModel::<3>::nearest(1.0);
        let e = d.void_set(vec![[2, 2, 2]]).unwrap();
        assert_eq!(discrete_perimeter_total(&e, &m, &d), 6.0);
        let e2 = d.void_set(vec![[2, 2, 2], [3, 2, 2]]).unwrap();
        assert_eq!(discrete_perimeter_total(&e2, &m, &d), 10.0);
        assert_eq!(discrete_perimeter_total(&VoidSet::empty(), &m, &d), 0.0);
    }

    #[test]
    fn bonds_leaving_u_do_not_count() {
        let d = LatticeDomain::<2>::new(1.0, vec![IndexBox::cube(3)], IndexBox::cube(3)).unwrap();
        let m = NeighborModel::<2>::nearest(1.0);
        let e = d.void_set(vec![[0, 0]]).unwrap();
        assert_eq!(discrete_perimeter_total(&e, &m, &d), 2.0);
    }

    #[test]
    fn phi_values() {
        let nn = NeighborModel::<3>::nearest(1.0);
        assert_eq!(density_phi(&nn, &[1.0, 0.0, 0.0]).unwrap(), 1.0);
        let nnn = NeighborModel::<3>::nearest_and_diagonal(1.0, 1.0);
        assert_eq!(density_phi(&nnn, &[1.0, 0.0, 0.0]).unwrap(), 5.0);
        assert!(density_phi(&nn, &[0.0, 0.0, 0.0]).is_err());
        let s = 0.5f64.sqrt();
        let v = density_phi(&nnn, &[s, s, 0.0]).unwrap();
        assert!((v - 10.0 * s).abs() < 1e-12);
    }

    #[test]
    fn voxel_perimeters() {
        let dens = SurfaceDensity { c: [1.0, 2.0, 3.0] };
        let one = VoxelSet::new(1.0, [0.0; 3], IndexSet::from_indices(vec![[0, 0, 0]]));
        assert_eq!(continuum_perimeter(&one, &dens, None), 12.0);
        let cube = VoxelSet::new(1.0, [0.0; 3], IndexSet::from_box(&IndexBox::cube(3)));
        assert_eq!(continuum_perimeter(&cube, &dens, None), 12.0 * 9.0);
        let diag = VoxelSet::new(1.0, [0.0; 3], IndexSet::from_indices(vec![[0, 0, 0], [1, 1, 0]]));
        assert_eq!(continuum_perimeter(&diag, &dens, None), 24.0);
    }

    #[test]
    fn box_union_matches_voxels() {
        let dens = SurfaceDensity { c: [1.0, 2.0, 3.0] };
        let l = BoxUnion::new(vec![
            RealBox::new([0.0, 0.0, 0.0], [2.0, 1.0, 1.0]),
            RealBox::new([0.0, 1.0, 0.0], [1.0, 2.0, 1.0]),
        ]);
        let v = l.voxelize(0.5, [0.25; 3]);
        assert_eq!(box_union_perimeter(&l, &dens), continuum_perimeter(&v, &dens, None));
        assert_eq!(l.measure(), 3.0);
    }

    #[test]
    fn nn_box_perimeter_equals_face_count() {
        let d = dom3(10);
        let m = NeighborModel::<3>::nearest(1.0);
        let e = IndexSet::from_box(&IndexBox::new([2, 3, 1], [6, 5, 8]));
        let f = discrete_perimeter_total(&e, &m, &d);
        let p = continuum_perimeter(&voxelize(&e, 1.0), &m.density(), None);
        assert_eq!(f, p);
    }

    #[test]
    fn region_additivity() {
        let d = dom3(8);
        let m = NeighborModel::<3>::nearest_and_diagonal(1.0, 0.5);
        let e = IndexSet::from_fn(IndexBox::cube(8), |i| (i[0] * 3 + i[1] * 5 + i[2]) % 4 == 0);
        let r1 = IndexBox::new([-1, -1, -1], [4, 9, 9]);
        let r2 = IndexBox::new([4, -1, -1], [9, 9, 9]);
        let total = discrete_perimeter_total(&e, &m, &d);
        let split = discrete_perimeter(&e, &m, &d, &r1) + discrete_perimeter(&e, &m, &d, &r2);
        assert!((total - split).abs() < 1e-12);
    }
}
