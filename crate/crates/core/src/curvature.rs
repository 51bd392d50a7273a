//! Flatness hierarchy (locally flat, cubic, flat), laminate detection, the
//! two-valued mesoscale curvature energy and the two-dimensional
//! Embedded-Atom instantiation.
//!
//! A `2ε`-cell with lower corner `k` is the cube `Q_{2ε}(k̂)`, `k̂ = k + ε/2·(1,…,1)`,
//! whose lattice points are `k + {0,1}^d`. Cell patterns are bit masks over
//! these points in the vertex order of [`crate::elastic::vertex_offset`].
//! The cube `Q_{nε}(i)` contains the lattice offsets of
//! [`crate::lattice::centered_range`], and the cell at `k` meets it exactly when
//! `2i − n − 3 < 2k < 2i + n + 1` on every axis.

use crate::elastic::{add, vertex_count, vertex_offset};
use crate::error::{Error, Result};
use crate::lattice::{cube_box, Index, IndexBox, IndexSet, LatticeDomain, VoidSet};

/// Admissible `2ε`-cell patterns: complete void, no void and the `2d`
/// half-cell voids.
#[derive(Clone, Debug, PartialEq)]
pub struct FlatPatternCatalog<const D: usize> {
    patterns: Vec<u32>,
}

impl<const D: usize> Default for FlatPatternCatalog<D> {
    fn default() -> Self {
        Self::new()
    }
}

impl<const D: usize> FlatPatternCatalog<D> {
    pub fn new() -> Self {
        let n = vertex_count(D);
        let full = (1u32 << n) - 1;
        let mut patterns = vec![full, 0];
        for axis in 0..D {
            for side in [0, 1] {
                let mut m = 0u32;
                for l in 0..n {
                    if vertex_offset::<D>(l)[axis] == side {
                        m |= 1 << l;
                    }
                }
                patterns.push(m);
            }
        }
        Self { patterns }
    }

    pub fn patterns(&self) -> &[u32] {
        &self.patterns
    }

    /// `E ∩ Q = P ∩ U` for some catalog pattern `P`.
    #[inline]
    pub fn matches(&self, e_mask: u32, u_mask: u32) -> bool {
        self.patterns.iter().any(|&p| e_mask == p & u_mask)
    }
}

/// Void and `U` masks of the cell with lower corner `k`.
fn cell_masks<const D: usize>(e: &VoidSet<D>, domain: &LatticeDomain<D>, k: &Index<D>) -> (u32, u32) {
    let mut em = 0;
    let mut um = 0;
    for l in 0..vertex_count(D) {
        let s = add(k, &vertex_offset::<D>(l));
        if domain.in_u(&s) {
            um |= 1 << l;
        }
        if e.contains(&s) {
            em |= 1 << l;
        }
    }
    (em, um)
}

/// Lower corners of the cells meeting `Q_{nε}(i)`.
pub fn cells_meeting(i: i64, n: i64) -> (i64, i64) {
    let lo = i + (-n - 3).div_euclid(2) + 1;
    let hi = i - (-(n + 1)).div_euclid(2);
    (lo, hi)
}

fn cells_meeting_box<const D: usize>(i: &Index<D>, n: i64) -> IndexBox<D> {
    let mut b = IndexBox::new(*i, *i);
    for a in 0..D {
        let (lo, hi) = cells_meeting(i[a], n);
        b.lo[a] = lo;
        b.hi[a] = hi;
    }
    b
}

/// First cell (in lexicographic order) meeting `Q_{nε}(i)` whose pattern is
/// not in the catalog.
pub fn local_flatness_violation<const D: usize>(
    e: &VoidSet<D>,
    domain: &LatticeDomain<D>,
    i: &Index<D>,
    n: i64,
) -> Option<Index<D>> {
    let cat = FlatPatternCatalog::<D>::new();
    cells_meeting_box(i, n).iter().find(|k| {
        let (em, um) = cell_masks(e, domain, k);
        !cat.matches(em, um)
    })
}

pub fn is_locally_flat<const D: usize>(e: &VoidSet<D>, domain: &LatticeDomain<D>, i: &Index<D>, n: i64) -> bool {
    local_flatness_violation(e, domain, i, n).is_none()
}

/// Witness of cubicity: the grid offset `i0 ∈ Z_ε(Q_{η_ε})` and the block
/// centers `k_m ∈ i0 + η_ε Z^d` whose blocks make up `E` in the window.
#[derive(Clone, Debug, PartialEq)]
pub struct CubicWitness<const D: usize> {
    pub i0: Index<D>,
    pub centers: Vec<Index<D>>,
}

/// Sites of `Z_ε(Q_{nε}(i)) ∩ U`.
pub fn window<const D: usize>(domain: &LatticeDomain<D>, i: &Index<D>, n: i64) -> IndexBox<D> {
    cube_box(i, n).intersect(domain.u_box())
}

/// Block center of site `s` for the block grid whose blocks start at
/// residues `r` modulo `nb`.
fn block_center(s: i64, r: i64, nb: i64) -> i64 {
    let start = s - (s - r).rem_euclid(nb);
    start + nb / 2
}

fn witness_for<const D: usize>(
    e: &VoidSet<D>,
    w: &IndexBox<D>,
    r: &Index<D>,
    nb: i64,
) -> CubicWitness<D> {
    let mut centers: Vec<Index<D>> = Vec::new();
    for s in w.iter() {
        if e.contains(&s) {
            let mut c = [0; D];
            for a in 0..D {
                c[a] = block_center(s[a], r[a], nb);
            }
            centers.push(c);
        }
    }
    centers.sort();
    centers.dedup();
    let (lo, _) = crate::lattice::centered_range(nb, 1);
    let mut i0 = [0; D];
    for a in 0..D {
        // Representative of the center residue inside the centered cube.
        i0[a] = (r[a] + nb / 2 - lo).rem_euclid(nb) + lo;
    }
    CubicWitness { i0, centers }
}

/// Exhaustive search over the `nb^d` grid offsets: is `E ∩ Q_{nw ε}(i) ∩ U`
/// a union of blocks of side `nb ε`?
pub fn is_cubic<const D: usize>(
    e: &VoidSet<D>,
    domain: &LatticeDomain<D>,
    i: &Index<D>,
    nw: i64,
    nb: i64,
) -> Option<CubicWitness<D>> {
    assert!(nb >= 1 && nw >= 1);
    let w = window(domain, i, nw);
    if w.is_empty() {
        return Some(CubicWitness { i0: [0; D], centers: Vec::new() });
    }
    let offsets = IndexBox::<D>::cube(nb);
    'offsets: for r in offsets.iter() {
        for s in w.iter() {
            let inside = e.contains(&s);
            for a in 0..D {
                let mut t = s;
                t[a] += 1;
                if !w.contains(&t) {
                    continue;
                }
                if inside != e.contains(&t) && (t[a] - r[a]).rem_euclid(nb) != 0 {
                    continue 'offsets;
                }
            }
        }
        return Some(witness_for(e, &w, &r, nb));
    }
    None
}

pub fn is_flat<const D: usize>(e: &VoidSet<D>, domain: &LatticeDomain<D>, i: &Index<D>, nw: i64, nb: i64) -> bool {
    is_locally_flat(e, domain, i, nw) && is_cubic(e, domain, i, nw, nb).is_some()
}

/// Simple coordinate laminate found by [`detect_laminate`].
#[derive(Clone, Debug, PartialEq)]
pub struct Laminate {
    pub axis: usize,
    /// Membership of each layer, starting at `region.lo[axis]`.
    pub profile: Vec<bool>,
}

/// Axis and layer profile when membership in `E` within `region` depends
/// only on one coordinate; the smallest such axis is returned.
pub fn detect_laminate<const D: usize>(e: &VoidSet<D>, region: &IndexBox<D>) -> Option<Laminate> {
    if region.is_empty() {
        return Some(Laminate { axis: 0, profile: Vec::new() });
    }
    (0..D).find_map(|axis| axis_profile(e, region, axis).map(|profile| Laminate { axis, profile }))
}

/// Coordinate half-space `{x : (x − x0)·ν ≥ 0}` in lattice units, with
/// `ν = sign·e_axis` and threshold `x0` (a layer index).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HalfSpace {
    pub axis: usize,
    pub sign: i64,
    pub x0: i64,
}

impl HalfSpace {
    pub fn contains<const D: usize>(&self, s: &Index<D>) -> bool {
        (s[self.axis] - self.x0) * self.sign >= 0
    }
}

/// Reconstructs `E ∩ region` as a coordinate half-space when possible.
pub fn as_half_space<const D: usize>(e: &VoidSet<D>, region: &IndexBox<D>) -> Option<HalfSpace> {
    let mut found = None;
    for axis in 0..D {
        let Some(p) = axis_profile(e, region, axis) else {
            continue;
        };
        let lo = region.lo[axis];
        let ups = p.windows(2).filter(|w| !w[0] && w[1]).count();
        let downs = p.windows(2).filter(|w| w[0] && !w[1]).count();
        let hs = if p.iter().all(|&b| b) {
            Some(HalfSpace { axis, sign: 1, x0: lo })
        } else if p.iter().all(|&b| !b) {
            Some(HalfSpace { axis, sign: 1, x0: region.hi[axis] })
        } else if ups == 1 && downs == 0 {
            let t = p.iter().position(|&b| b).expect("step exists") as i64;
            Some(HalfSpace { axis, sign: 1, x0: lo + t })
        } else if downs == 1 && ups == 0 {
            let t = p.iter().position(|&b| !b).expect("step exists") as i64;
            Some(HalfSpace { axis, sign: -1, x0: lo + t - 1 })
        } else {
            None
        };
        if hs.is_some() {
            found = hs;
            break;
        }
    }
    found
}

fn axis_profile<const D: usize>(e: &VoidSet<D>, region: &IndexBox<D>, axis: usize) -> Option<Vec<bool>> {
    let len = (region.hi[axis] - region.lo[axis]) as usize;
    let mut profile: Vec<Option<bool>> = vec![None; len];
    for s in region.iter() {
        let layer = (s[axis] - region.lo[axis]) as usize;
        let m = e.contains(&s);
        match profile[layer] {
            None => profile[layer] = Some(m),
            Some(p) if p != m => return None,
            _ => {}
        }
    }
    Some(profile.into_iter().map(|p| p.unwrap_or(false)).collect())
}

/// Inclusive-exclusive prefix sums of an integer field over a box.
#[derive(Clone, Debug)]
pub(crate) struct PrefixSum<const D: usize> {
    bounds: IndexBox<D>,
    /// Padded box `[lo, hi]` (one extra slot per axis), `table[p]` holds the
    /// sum over `[lo, p)`.
    table: Vec<i64>,
    pad: IndexBox<D>,
}

impl<const D: usize> PrefixSum<D> {
    pub(crate) fn new(bounds: IndexBox<D>, mut f: impl FnMut(&Index<D>) -> i64) -> Self {
        let mut pad = bounds;
        for a in 0..D {
            pad.hi[a] = bounds.hi[a] + 1;
        }
        let mut table = vec![0i64; if bounds.is_empty() { 0 } else { pad.len() }];
        if bounds.is_empty() {
            return Self { bounds, table, pad };
        }
        // table at p (p >= lo+1 componentwise) = value at p-1; then cumulate.
        for p in 0..table.len() {
            let q = pad.unlinear(p);
            if (0..D).all(|a| q[a] > bounds.lo[a]) {
                let mut s = q;
                for v in s.iter_mut() {
                    *v -= 1;
                }
                table[p] = f(&s);
            }
        }
        let shape = pad.shape();
        let mut stride = vec![1usize; D];
        for a in (0..D.saturating_sub(1)).rev() {
            stride[a] = stride[a + 1] * shape[a + 1];
        }
        for a in 0..D {
            for p in 0..table.len() {
                let q = pad.unlinear(p);
                if q[a] > pad.lo[a] {
                    table[p] += table[p - stride[a]];
                }
            }
        }
        Self { bounds, table, pad }
    }

    /// Sum over `b ∩ bounds`.
    pub(crate) fn sum(&self, b: &IndexBox<D>) -> i64 {
        let c = b.intersect(&self.bounds);
        if c.is_empty() {
            return 0;
        }
        let mut total = 0;
        for corner in 0..(1usize << D) {
            let mut q = [0; D];
            let mut sign = 1;
            for a in 0..D {
                if (corner >> a) & 1 == 1 {
                    q[a] = c.hi[a];
                } else {
                    q[a] = c.lo[a];
                    sign = -sign;
                }
            }
            total += sign * self.table[self.pad.linear(&q)];
        }
        total
    }
}

/// Per-site flatness over a region, computed with prefix sums.
#[derive(Clone, Debug)]
pub struct FlatnessMap<const D: usize> {
    pub region: IndexBox<D>,
    pub locally_flat: IndexSet<D>,
    pub cubic: IndexSet<D>,
}

impl<const D: usize> FlatnessMap<D> {
    pub fn is_flat(&self, i: &Index<D>) -> bool {
        self.locally_flat.contains(i) && self.cubic.contains(i)
    }

    pub fn non_flat_count(&self) -> usize {
        self.region.iter().filter(|i| !self.is_flat(i)).count()
    }
}

/// Locally-flat and cubic classification of every site of `region`, with
/// window side `nw ε` and block side `nb ε`.
pub fn flatness_map<const D: usize>(
    e: &VoidSet<D>,
    domain: &LatticeDomain<D>,
    region: &IndexBox<D>,
    nw: i64,
    nb: i64,
) -> FlatnessMap<D> {
    let mut locally_flat = IndexSet::with_bounds(*region);
    let mut cubic = IndexSet::with_bounds(*region);
    let Some(eb) = e.tight_bounds() else {
        for i in region.iter() {
            locally_flat.insert(&i);
            cubic.insert(&i);
        }
        return FlatnessMap { region: *region, locally_flat, cubic };
    };
    let cat = FlatPatternCatalog::<D>::new();
    let cell_box = eb.expand(1);
    let bad = PrefixSum::new(cell_box, |k| {
        let (em, um) = cell_masks(e, domain, k);
        i64::from(!cat.matches(em, um))
    });
    let pair_box = eb.expand(1).intersect(domain.u_box());
    let pair_tables: Vec<[PrefixSum<D>; 3]> = (0..D)
        .map(|a| {
            let ind = |s: &Index<D>| -> Option<i64> {
                let mut t = *s;
                t[a] += 1;
                if domain.in_u(s) && domain.in_u(&t) && e.contains(s) != e.contains(&t) {
                    Some((s[a] + 1).rem_euclid(nb))
                } else {
                    None
                }
            };
            [
                PrefixSum::new(pair_box, |s| i64::from(ind(s).is_some())),
                PrefixSum::new(pair_box, |s| ind(s).unwrap_or(0)),
                PrefixSum::new(pair_box, |s| ind(s).map_or(0, |r| r * r)),
            ]
        })
        .collect();
    let reach = eb.expand(nw / 2 + 2);
    for i in region.iter() {
        if !reach.contains(&i) {
            locally_flat.insert(&i);
            cubic.insert(&i);
            continue;
        }
        if bad.sum(&cells_meeting_box(&i, nw)) == 0 {
            locally_flat.insert(&i);
        }
        let w = window(domain, &i, nw);
        let ok = (0..D).all(|a| {
            let mut wp = w;
            wp.hi[a] -= 1;
            let [c, s1, s2] = &pair_tables[a];
            let (c, s1, s2) = (c.sum(&wp) as i128, s1.sum(&wp) as i128, s2.sum(&wp) as i128);
            c * s2 == s1 * s1
        });
        if ok {
            cubic.insert(&i);
        }
    }
    FlatnessMap { region: *region, locally_flat, cubic }
}

/// Generic two-valued curvature cell energy `γ η^{-1-q}` on non-flat sites.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurvatureModel {
    pub gamma: f64,
    /// `η_ε / ε`.
    pub n: i64,
    pub q: f64,
}

impl CurvatureModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0) {
            return Err(Error::Invalid("gamma must be positive".into()));
        }
        if self.n < 1 {
            return Err(Error::Invalid("eta/eps must be a positive integer".into()));
        }
        if !(self.q >= 2.0) {
            return Err(Error::Invalid("q must be at least 2".into()));
        }
        Ok(())
    }

    pub fn eta(&self, eps: f64) -> f64 {
        self.n as f64 * eps
    }

    /// `γ η^{-1-q}`.
    pub fn quantum(&self, eps: f64) -> f64 {
        self.gamma * self.eta(eps).powf(-1.0 - self.q)
    }
}

/// `W^curv_cell(i, E)`: zero when `E` is flat in `Q_{η_ε}(i)`, one quantum
/// otherwise.
pub fn curvature_cell_energy<const D: usize>(
    model: &CurvatureModel,
    i: &Index<D>,
    e: &VoidSet<D>,
    domain: &LatticeDomain<D>,
) -> f64 {
    if is_flat(e, domain, i, model.n, model.n) {
        0.0
    } else {
        model.quantum(domain.eps())
    }
}

/// `F^curv(E, region) = Σ_{i ∈ Z_ε(region)} ε^d W^curv_cell(i, E)`.
pub fn curvature_energy<const D: usize>(
    model: &CurvatureModel,
    e: &VoidSet<D>,
    domain: &LatticeDomain<D>,
    region: &IndexBox<D>,
) -> f64 {
    let count = non_flat_sites(model, e, domain, region);
    domain.eps().powi(D as i32) * model.quantum(domain.eps()) * count as f64
}

/// Number of sites of `region` where `E` is not flat at scale `η_ε`.
pub fn non_flat_sites<const D: usize>(
    model: &CurvatureModel,
    e: &VoidSet<D>,
    domain: &LatticeDomain<D>,
    region: &IndexBox<D>,
) -> usize {
    let Some(eb) = e.tight_bounds() else {
        return 0;
    };
    let r = region.intersect(&eb.expand(model.n / 2 + 2));
    if r.is_empty() {
        return 0;
    }
    flatness_map(e, domain, &r, model.n, model.n).non_flat_count()
}

/// Two-dimensional Embedded-Atom instantiation.
pub mod eam {
    use rand::Rng as _;

    use super::*;
    use crate::error::fmt_index;
    use crate::rng::Rng;

    /// Membership of sites outside the window.
    #[derive(Clone, Copy, Debug, PartialEq)]
    pub enum Exterior {
        /// No voids outside the window.
        Solid,
        /// Each outside site copies the nearest window site, which extends
        /// half-planes and laminates indefinitely.
        Clamp,
    }

    /// Void set on a finite window of `Z^2`.
    #[derive(Clone, Debug, PartialEq)]
    pub struct EamConfig {
        pub window: IndexBox<2>,
        pub voids: IndexSet<2>,
        pub exterior: Exterior,
    }

    /// Curvature parameters of the EAM energy.
    #[derive(Clone, Copy, Debug, PartialEq)]
    pub struct EamModel {
        pub eps: f64,
        pub gamma: f64,
        /// `η_ε / ε`.
        pub n: i64,
        pub q: f64,
    }

    impl EamModel {
        pub fn eta(&self) -> f64 {
            self.n as f64 * self.eps
        }

        /// `γ η^{1-q}`, the value of `G` on non-admissible counts.
        pub fn quantum(&self) -> f64 {
            self.gamma * self.eta().powf(1.0 - self.q)
        }

        /// `G_ε(n1, n2)`: zero on `(3,2)` and `(4,4)`, one quantum otherwise.
        pub fn g(&self, counts: (u8, u8)) -> f64 {
            if admissible(counts) {
                0.0
            } else {
                self.quantum()
            }
        }
    }

    pub fn admissible(counts: (u8, u8)) -> bool {
        matches!(counts, (3, 2) | (4, 4))
    }

    impl EamConfig {
        pub fn new(window: IndexBox<2>, voids: IndexSet<2>, exterior: Exterior) -> Result<Self> {
            for s in voids.iter() {
                if !window.contains(&s) {
                    return Err(Error::OutOfDomain(fmt_index(&s)));
                }
            }
            Ok(Self { window, voids, exterior })
        }

        pub fn is_void(&self, s: &Index<2>) -> bool {
            if self.window.contains(s) {
                return self.voids.contains(s);
            }
            match self.exterior {
                Exterior::Solid => false,
                Exterior::Clamp => {
                    let c = [
                        s[0].clamp(self.window.lo[0], self.window.hi[0] - 1),
                        s[1].clamp(self.window.lo[1], self.window.hi[1] - 1),
                    ];
                    self.voids.contains(&c)
                }
            }
        }

        /// Occupied sites at distance `ε` and `√2 ε` from `j`.
        pub fn counts_unchecked(&self, j: &Index<2>) -> (u8, u8) {
            let mut n1 = 0;
            let mut n2 = 0;
            for dx in -1i64..=1 {
                for dy in -1i64..=1 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    if !self.is_void(&[j[0] + dx, j[1] + dy]) {
                        if dx == 0 || dy == 0 {
                            n1 += 1;
                        } else {
                            n2 += 1;
                        }
                    }
                }
            }
            (n1, n2)
        }

        /// Checks that every atom on the two rings outside the window has
        /// admissible counts, so that atoms outside contribute nothing.
        pub fn validate(&self) -> Result<()> {
            let outer = self.window.expand(2);
            for s in outer.iter() {
                if self.window.contains(&s) || self.is_void(&s) {
                    continue;
                }
                let c = self.counts_unchecked(&s);
                if !admissible(c) {
                    return Err(Error::WindowTruncates(format!(
                        "atom {} outside the window has counts ({},{})",
                        fmt_index(&s),
                        c.0,
                        c.1
                    )));
                }
            }
            Ok(())
        }
    }

    /// `(#N_ε(j), #NN_ε(j))`.
    pub fn eam_neighbor_counts(cfg: &EamConfig, j: &Index<2>) -> Result<(u8, u8)> {
        if cfg.is_void(j) {
            return Err(Error::NotOccupied(fmt_index(j)));
        }
        Ok(cfg.counts_unchecked(j))
    }

    /// `Φ_ε(E) = Σ_j G_ε(counts(j))` over occupied window sites.
    pub fn eam_phi(cfg: &EamConfig, model: &EamModel) -> Result<f64> {
        cfg.validate()?;
        let mut total = 0.0;
        for j in cfg.window.iter() {
            if !cfg.is_void(&j) {
                total += model.g(cfg.counts_unchecked(&j));
            }
        }
        Ok(total)
    }

    /// `Σ_i ε² W_cell(i)` with `W_cell(i) = Σ_{j ∈ Z_ε(Q_η(i)) \ E} η^{-2} G(counts(j))`,
    /// evaluated as the double sum.
    pub fn eam_curvature_energy(cfg: &EamConfig, model: &EamModel) -> Result<f64> {
        cfg.validate()?;
        let n = model.n;
        let g = |j: &Index<2>| -> f64 {
            if !cfg.window.contains(j) || cfg.is_void(j) {
                0.0
            } else {
                model.g(cfg.counts_unchecked(j))
            }
        };
        let eta2 = model.eta() * model.eta();
        let eps2 = model.eps * model.eps;
        let mut total = 0.0;
        for i in cfg.window.expand(n).iter() {
            let mut w = 0.0;
            for j in cube_box(&i, n).iter() {
                w += g(&j) / eta2;
            }
            total += eps2 * w;
        }
        Ok(total)
    }

    /// Failure of the neighbourhood lemma at site `i`.
    #[derive(Clone, Debug, PartialEq)]
    pub struct LemmaCounterexample {
        pub site: Index<2>,
        pub violating_cell: Index<2>,
    }

    #[derive(Clone, Debug, Default, PartialEq)]
    pub struct LemmaReport {
        pub sets: usize,
        pub sites_checked: usize,
        /// Sites where `E` is not locally flat in the shrunken cube.
        pub premise_true: usize,
        pub counterexamples: Vec<(usize, LemmaCounterexample)>,
    }

    /// Checks, for every site `i` of the window, that non-flatness in
    /// `Q_{η−4ε}(i)` implies a non-admissible atom in `Z_ε(Q_η(i))`.
    pub fn lemma_check_set(cfg: &EamConfig, n: i64) -> (usize, usize, Vec<LemmaCounterexample>) {
        let b = cfg.window.expand(n + 2);
        let cat = FlatPatternCatalog::<2>::new();
        let bad_cells = PrefixSum::new(b, |k| {
            let mut em = 0u32;
            for l in 0..4 {
                let s = add(k, &vertex_offset::<2>(l));
                if cfg.is_void(&s) {
                    em |= 1 << l;
                }
            }
            i64::from(!cat.matches(em, 0b1111))
        });
        let bad_atoms = PrefixSum::new(b, |j| {
            i64::from(!cfg.is_void(j) && !admissible(cfg.counts_unchecked(j)))
        });
        let shrink = (n - 4).max(1);
        let mut premise = 0;
        let mut bad = Vec::new();
        let mut checked = 0;
        for i in cfg.window.iter() {
            checked += 1;
            let cells = cells_meeting_box(&i, shrink);
            if bad_cells.sum(&cells) == 0 {
                continue;
            }
            premise += 1;
            if bad_atoms.sum(&cube_box(&i, n)) == 0 {
                let violating_cell = cells
                    .iter()
                    .find(|k| bad_cells.sum(&IndexBox::point(*k)) > 0)
                    .expect("a bad cell exists");
                bad.push(LemmaCounterexample { site: i, violating_cell });
            }
        }
        (checked, premise, bad)
    }

    /// Structured random void set in a `w × h` window: unions of rectangles,
    /// laminates, corner sets and sparse noise.
    pub fn random_config(rng: &mut Rng, w: i64, h: i64) -> EamConfig {
        let window = IndexBox::new([0, 0], [w, h]);
        let mut voids = IndexSet::with_bounds(window);
        match rng.gen_range(0..5) {
            0 => {
                for _ in 0..rng.gen_range(1..4) {
                    let x0 = rng.gen_range(0..w);
                    let y0 = rng.gen_range(0..h);
                    let x1 = rng.gen_range(x0..=w);
                    let y1 = rng.gen_range(y0..=h);
                    for s in IndexBox::new([x0, y0], [x1, y1]).iter() {
                        voids.insert(&s);
                    }
                }
            }
            1 => {
                let axis = rng.gen_range(0..2);
                let p = rng.gen_range(0.2..0.8);
                let layers: Vec<bool> = (0..w.max(h)).map(|_| rng.gen_bool(p)).collect();
                for s in window.iter() {
                    if layers[s[axis] as usize] {
                        voids.insert(&s);
                    }
                }
            }
            2 => {
                let x0 = rng.gen_range(0..w);
                let y0 = rng.gen_range(0..h);
                let (sx, sy) = (rng.gen_bool(0.5), rng.gen_bool(0.5));
                for s in window.iter() {
                    if ((s[0] >= x0) == sx) && ((s[1] >= y0) == sy) {
                        voids.insert(&s);
                    }
                }
            }
            3 => {
                let p = rng.gen_range(0.01..0.3);
                for s in window.iter() {
                    if rng.gen_bool(p) {
                        voids.insert(&s);
                    }
                }
            }
            _ => {
                let axis = rng.gen_range(0..2);
                let t = rng.gen_range(0..w.max(h));
                for s in window.iter() {
                    if s[axis] >= t {
                        voids.insert(&s);
                    }
                }
                for _ in 0..rng.gen_range(0..4) {
                    let s = [rng.gen_range(0..w), rng.gen_range(0..h)];
                    if voids.contains(&s) {
                        voids.remove(&s);
                    } else {
                        voids.insert(&s);
                    }
                }
            }
        }
        EamConfig { window, voids, exterior: Exterior::Solid }
    }

    /// Runs [`lemma_check_set`] on `trials` random sets.
    pub fn eam_lemma_check(rng: &mut Rng, trials: usize, w: i64, h: i64, n: i64) -> LemmaReport {
        let mut rep = LemmaReport::default();
        for t in 0..trials {
            let cfg = random_config(rng, w, h);
            let (checked, premise, bad) = lemma_check_set(&cfg, n);
            rep.sets += 1;
            rep.sites_checked += checked;
            rep.premise_true += premise;
            rep.counterexamples.extend(bad.into_iter().map(|c| (t, c)));
        }
        rep
    }

    /// Sparse random void set well inside a `w × h` window (two free rings),
    /// used for the identity test with a solid exterior.
    pub fn random_interior_config(rng: &mut Rng, w: i64, h: i64) -> EamConfig {
        let mut cfg = random_config(rng, w - 4, h - 4);
        let shifted = cfg.voids.translate(&[2, 2]);
        cfg.window = IndexBox::new([0, 0], [w, h]);
        cfg.voids = shifted.rebound(cfg.window);
        cfg
    }
}

#[cfg(test)]
mod tests {
    use super::eam::*;
    use super::*;

    fn dom3(n: i64) -> LatticeDomain<3> {
        LatticeDomain::cube(1.0, n, 2).unwrap()
    }

    #[test]
    fn catalog_sizes() {
        assert_eq!(FlatPatternCatalog::<3>::new().patterns().len(), 8);
        assert_eq!(FlatPatternCatalog::<2>::new().patterns().len(), 6);
        let c = FlatPatternCatalog::<3>::new();
        // {k, k+e1, k+e2, k+e1+e2}: offsets with b3 = 0.
        assert!(c.matches(0b0101_0101, 0xff));
    }

    #[test]
    fn cells_meeting_window() {
        assert_eq!(cells_meeting(0, 8), (-5, 5));
        assert_eq!(cells_meeting(0, 1), (-1, 1));
        assert_eq!(cells_meeting(0, 2), (-2, 2));
    }

    #[test]
    fn empty_and_half_space_are_flat() {
        let d = dom3(12);
        let e = VoidSet::empty();
        assert!(is_flat(&e, &d, &[6, 6, 6], 4, 4));
        let hs = IndexSet::from_fn(IndexBox::cube(12), |s| s[2] >= 6);
        assert!(is_locally_flat(&hs, &d, &[6, 6, 6], 4));
        let w = is_cubic(&hs, &d, &[6, 6, 6], 4, 4).unwrap();
        assert!(!w.centers.is_empty());
    }

    #[test]
    fn isolated_atom_violates() {
        let d = dom3(12);
        let e = d.void_set(vec![[6, 6, 6]]).unwrap();
        let v = local_flatness_violation(&e, &d, &[6, 6, 6], 4).unwrap();
        assert_eq!(v, [5, 5, 5]);
    }

    #[test]
    fn block_with_missing_corner_is_not_cubic() {
        let d = dom3(12);
        let mut e = IndexSet::from_box(&IndexBox::new([4, 4, 4], [8, 8, 8]));
        assert!(is_cubic(&e, &d, &[6, 6, 6], 8, 4).is_some());
        e.remove(&[4, 4, 4]);
        assert!(is_cubic(&e, &d, &[6, 6, 6], 8, 4).is_none());
    }

    #[test]
    fn witness_reproduces_set() {
        let d = dom3(16);
        let e = IndexSet::from_box(&IndexBox::new([5, 3, 2], [9, 11, 6]));
        let i = [7, 7, 4];
        let w = is_cubic(&e, &d, &i, 8, 4).unwrap();
        let win = window(&d, &i, 8);
        for s in win.iter() {
            let covered = w.centers.iter().any(|c| cube_box(c, 4).contains(&s));
            assert_eq!(covered, e.contains(&s));
        }
        for c in &w.centers {
            for a in 0..3 {
                assert_eq!((c[a] - w.i0[a]).rem_euclid(4), 0);
            }
        }
    }

    #[test]
    fn thin_laminate_is_locally_flat_but_not_cubic() {
        let d = dom3(16);
        let e = IndexSet::from_fn(IndexBox::cube(16), |s| s[0] % 2 == 0);
        assert!(is_locally_flat(&e, &d, &[8, 8, 8], 4));
        assert!(is_cubic(&e, &d, &[8, 8, 8], 4, 4).is_none());
        assert!(!is_flat(&e, &d, &[8, 8, 8], 4, 4));
    }

    #[test]
    fn laminate_detection() {
        let region = IndexBox::new([0, 0, 0], [6, 6, 6]);
        let lam = IndexSet::from_fn(region, |s| s[2] % 2 == 0);
        let l = detect_laminate(&lam, &region).unwrap();
        assert_eq!(l.axis, 2);
        assert_eq!(l.profile, vec![true, false, true, false, true, false]);
        let hs = IndexSet::from_fn(region, |s| s[0] >= 3);
        assert_eq!(detect_laminate(&hs, &region).unwrap().axis, 0);
        let ell = IndexSet::from_fn(region, |s| s[0] < 3 || s[1] < 3);
        assert!(detect_laminate(&ell, &region).is_none());
        assert_eq!(detect_laminate(&VoidSet::empty(), &region).unwrap().axis, 0);
    }

    #[test]
    fn half_space_reconstruction() {
        let region = IndexBox::new([0, 0, 0], [6, 6, 6]);
        let hs = IndexSet::from_fn(region, |s| s[1] <= 2);
        let h = as_half_space(&hs, &region).unwrap();
        for s in region.iter() {
            assert_eq!(h.contains(&s), hs.contains(&s));
        }
    }

    #[test]
    fn prefix_sums_match_direct_sums() {
        let b = IndexBox::new([-2, 1, 0], [5, 6, 4]);
        let f = |s: &Index<3>| (s[0] * 7 + s[1] * 3 - s[2]).rem_euclid(5);
        let p = PrefixSum::new(b, f);
        let q = IndexBox::new([-1, 2, 1], [4, 7, 3]);
        let direct: i64 = q.intersect(&b).iter().map(|s| f(&s)).sum();
        assert_eq!(p.sum(&q), direct);
        let p2 = PrefixSum::new(IndexBox::new([0, 0], [4, 4]), |s: &Index<2>| s[0] + 10 * s[1]);
        assert_eq!(p2.sum(&IndexBox::new([1, 1], [3, 2])), 11 + 12);
    }

    #[test]
    fn bulk_map_agrees_with_single_queries() {
        let d = dom3(12);
        let e = IndexSet::from_fn(IndexBox::cube(12), |s| {
            (s[0] >= 4 && s[0] < 8 && s[1] >= 4 && s[1] < 8 && s[2] >= 2) || (s[0] == 10 && s[2] == 3)
        });
        let region = IndexBox::cube(12).expand(1);
        let map = flatness_map(&e, &d, &region, 4, 4);
        for i in region.iter() {
            assert_eq!(map.locally_flat.contains(&i), is_locally_flat(&e, &d, &i, 4), "{i:?}");
            assert_eq!(map.cubic.contains(&i), is_cubic(&e, &d, &i, 4, 4).is_some(), "{i:?}");
        }
    }

    #[test]
    fn eam_counts() {
        let w = IndexBox::new([0, 0], [8, 8]);
        let cfg = EamConfig::new(w, IndexSet::empty(), Exterior::Solid).unwrap();
        assert_eq!(eam_neighbor_counts(&cfg, &[3, 3]).unwrap(), (4, 4));
        let hs = IndexSet::from_fn(w, |s| s[1] >= 4);
        let cfg = EamConfig::new(w, hs, Exterior::Clamp).unwrap();
        assert_eq!(eam_neighbor_counts(&cfg, &[3, 3]).unwrap(), (3, 2));
        assert!(eam_neighbor_counts(&cfg, &[3, 4]).is_err());
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn eam_identity_and_window_check() {
        let model = EamModel { eps: 1.0 / 32.0, gamma: 0.5, n: 8, q: 2.0 };
        let w = IndexBox::new([0, 0], [16, 16]);
        let corner = IndexSet::from_box(&IndexBox::new([4, 4], [12, 12]));
        let cfg = EamConfig::new(w, corner, Exterior::Solid).unwrap();
        let phi = eam_phi(&cfg, &model).unwrap();
        let curv = eam_curvature_energy(&cfg, &model).unwrap();
        assert!(phi > 0.0);
        assert!((phi - curv).abs() <= 1e-12 * phi);
        // the 8x8 square: corner atoms (2,1) at the four outer corners plus
        // (4,3) at the diagonal neighbours of the corners
        let direct = w.iter().filter(|j| !cfg.is_void(j) && !admissible(cfg.counts_unchecked(j))).count();
        assert_eq!(phi, direct as f64 * model.quantum());
        let touching = IndexSet::from_indices(vec![[0, 5]]);
        let bad = EamConfig::new(w, touching, Exterior::Solid).unwrap();
        assert!(matches!(eam_phi(&bad, &model), Err(Error::WindowTruncates(_))));
    }
}
