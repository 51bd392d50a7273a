//! Lattice and domain geometry.
//!
//! Points of the scaled lattice `εZ^d` are stored as integer indices; the real
//! coordinate of index `i` is `ε·i` and is only formed on demand. Cubes follow
//! the half-open convention `Q_ρ(x) = x + ρ[-1/2, 1/2)^d`.

use crate::error::{fmt_index, Error, Result};

/// Integer lattice index.
pub type Index<const D: usize> = [i64; D];

/// Half-open box of integer indices `lo <= i < hi` (componentwise).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct IndexBox<const D: usize> {
    pub lo: Index<D>,
    pub hi: Index<D>,
}

impl<const D: usize> IndexBox<D> {
    pub fn new(lo: Index<D>, hi: Index<D>) -> Self {
        Self { lo, hi }
    }

    /// The box `[0, n)^d`.
    pub fn cube(n: i64) -> Self {
        Self { lo: [0; D], hi: [n; D] }
    }

    /// Box containing the single index `i`.
    pub fn point(i: Index<D>) -> Self {
        let mut hi = i;
        for v in hi.iter_mut() {
            *v += 1;
        }
        Self { lo: i, hi }
    }

    pub fn empty() -> Self {
        Self { lo: [0; D], hi: [0; D] }
    }

    pub fn is_empty(&self) -> bool {
        (0..D).any(|k| self.hi[k] <= self.lo[k])
    }

    pub fn shape(&self) -> [usize; D] {
        let mut s = [0usize; D];
        for k in 0..D {
            s[k] = (self.hi[k] - self.lo[k]).max(0) as usize;
        }
        s
    }

    pub fn len(&self) -> usize {
        self.shape().iter().product()
    }

    pub fn contains(&self, i: &Index<D>) -> bool {
        (0..D).all(|k| self.lo[k] <= i[k] && i[k] < self.hi[k])
    }

    pub fn contains_box(&self, other: &IndexBox<D>) -> bool {
        other.is_empty() || (0..D).all(|k| self.lo[k] <= other.lo[k] && other.hi[k] <= self.hi[k])
    }

    pub fn intersect(&self, other: &IndexBox<D>) -> IndexBox<D> {
        let mut lo = [0; D];
        let mut hi = [0; D];
        for k in 0..D {
            lo[k] = self.lo[k].max(other.lo[k]);
            hi[k] = self.hi[k].min(other.hi[k]);
        }
        IndexBox { lo, hi }
    }

    /// Smallest box containing both (empty boxes are ignored).
    pub fn hull(&self, other: &IndexBox<D>) -> IndexBox<D> {
        if self.is_empty() {
            return *other;
        }
        if other.is_empty() {
            return *self;
        }
        let mut lo = [0; D];
        let mut hi = [0; D];
        for k in 0..D {
            lo[k] = self.lo[k].min(other.lo[k]);
            hi[k] = self.hi[k].max(other.hi[k]);
        }
        IndexBox { lo, hi }
    }

    /// Grow by `k` layers on every side (shrink for negative `k`).
    pub fn expand(&self, k: i64) -> IndexBox<D> {
        let mut lo = self.lo;
        let mut hi = self.hi;
        for a in 0..D {
            lo[a] -= k;
            hi[a] += k;
        }
        IndexBox { lo, hi }
    }

    pub fn translate(&self, v: &Index<D>) -> IndexBox<D> {
        let mut lo = self.lo;
        let mut hi = self.hi;
        for a in 0..D {
            lo[a] += v[a];
            hi[a] += v[a];
        }
        IndexBox { lo, hi }
    }

    /// Row-major position of `i` (last axis fastest), so that increasing
    /// positions enumerate indices in lexicographic order.
    #[inline]
    pub fn linear(&self, i: &Index<D>) -> usize {
        let mut p = 0usize;
        for k in 0..D {
            p = p * (self.hi[k] - self.lo[k]) as usize + (i[k] - self.lo[k]) as usize;
        }
        p
    }

    #[inline]
    pub fn unlinear(&self, mut p: usize) -> Index<D> {
        let mut i = [0; D];
        for k in (0..D).rev() {
            let n = (self.hi[k] - self.lo[k]) as usize;
            i[k] = self.lo[k] + (p % n) as i64;
            p /= n;
        }
        i
    }

    /// Indices of the box in lexicographic order.
    pub fn iter(&self) -> impl Iterator<Item = Index<D>> + '_ {
        let n = self.len();
        (0..n).map(move |p| self.unlinear(p))
    }
}

/// Half-open real box `lo <= x < hi` (componentwise).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RealBox<const D: usize> {
    pub lo: [f64; D],
    pub hi: [f64; D],
}

impl<const D: usize> RealBox<D> {
    pub fn new(lo: [f64; D], hi: [f64; D]) -> Self {
        Self { lo, hi }
    }

    pub fn contains(&self, x: &[f64; D]) -> bool {
        (0..D).all(|k| self.lo[k] <= x[k] && x[k] < self.hi[k])
    }

    pub fn volume(&self) -> f64 {
        (0..D).map(|k| (self.hi[k] - self.lo[k]).max(0.0)).product()
    }
}

/// Integer range `a..b` of indices with `lo <= eps*i < hi`.
fn axis_range(eps: f64, lo: f64, hi: f64) -> (i64, i64) {
    let mut a = (lo / eps).ceil() as i64;
    while eps * ((a - 1) as f64) >= lo {
        a -= 1;
    }
    while eps * (a as f64) < lo {
        a += 1;
    }
    let mut b = (hi / eps).ceil() as i64;
    while eps * ((b - 1) as f64) >= hi {
        b -= 1;
    }
    while eps * (b as f64) < hi {
        b += 1;
    }
    (a, b.max(a))
}

/// The box of indices `i` with `ε·i` inside `region`.
pub fn index_box<const D: usize>(eps: f64, region: &RealBox<D>) -> IndexBox<D> {
    let mut lo = [0; D];
    let mut hi = [0; D];
    for k in 0..D {
        let (a, b) = axis_range(eps, region.lo[k], region.hi[k]);
        lo[k] = a;
        hi[k] = b;
    }
    IndexBox { lo, hi }
}

/// `Z_ε(region)`: all indices with `ε·i ∈ region`, sorted lexicographically.
pub fn lattice_points<const D: usize>(eps: f64, region: &RealBox<D>) -> Vec<Index<D>> {
    let b = index_box(eps, region);
    if b.is_empty() {
        return Vec::new();
    }
    b.iter().collect()
}

/// Integer offsets `t` with `-len/2 <= t < len/2` where `len = num/den`.
///
/// These are the lattice offsets of a cube of side `len·ε` centered at a
/// lattice point.
pub fn centered_range(num: i64, den: i64) -> (i64, i64) {
    // -num <= 2 t den < num
    let lo = div_ceil(-num, 2 * den);
    let hi = div_ceil(num, 2 * den);
    (lo, hi)
}

pub(crate) fn div_ceil(a: i64, b: i64) -> i64 {
    debug_assert!(b > 0);
    -((-a).div_euclid(b))
}

/// `Z_ε(Q_{nε}(c))` as an index box, for integer side `n`.
pub fn cube_box<const D: usize>(center: &Index<D>, n: i64) -> IndexBox<D> {
    let (a, b) = centered_range(n, 1);
    let mut lo = *center;
    let mut hi = *center;
    for k in 0..D {
        lo[k] += a;
        hi[k] += b;
    }
    IndexBox { lo, hi }
}

/// Finite set of lattice indices stored as a dense mask over a bounding box.
#[derive(Clone, Debug)]
pub struct IndexSet<const D: usize> {
    bounds: IndexBox<D>,
    mask: Vec<bool>,
    count: usize,
}

/// A void set `E ⊂ Z_ε(Ω)`; see [`LatticeDomain::void_set`] for validation.
pub type VoidSet<const D: usize> = IndexSet<D>;

impl<const D: usize> Default for IndexSet<D> {
    fn default() -> Self {
        Self::empty()
    }
}

impl<const D: usize> PartialEq for IndexSet<D> {
    fn eq(&self, other: &Self) -> bool {
        self.count == other.count && self.iter().all(|i| other.contains(&i))
    }
}

impl<const D: usize> IndexSet<D> {
    pub fn empty() -> Self {
        Self { bounds: IndexBox::empty(), mask: Vec::new(), count: 0 }
    }

    /// Empty set able to hold indices of `bounds`.
    pub fn with_bounds(bounds: IndexBox<D>) -> Self {
        let n = if bounds.is_empty() { 0 } else { bounds.len() };
        Self { bounds, mask: vec![false; n], count: 0 }
    }

    pub fn from_box(b: &IndexBox<D>) -> Self {
        Self::from_fn(*b, |_| true)
    }

    pub fn from_fn(bounds: IndexBox<D>, mut f: impl FnMut(&Index<D>) -> bool) -> Self {
        let mut s = Self::with_bounds(bounds);
        if bounds.is_empty() {
            return s;
        }
        for p in 0..s.mask.len() {
            let i = bounds.unlinear(p);
            if f(&i) {
                s.mask[p] = true;
                s.count += 1;
            }
        }
        s
    }

    /// Builds a set from arbitrary indices; duplicates are merged.
    pub fn from_indices<I: IntoIterator<Item = Index<D>>>(it: I) -> Self {
        let v: Vec<Index<D>> = it.into_iter().collect();
        if v.is_empty() {
            return Self::empty();
        }
        let mut lo = v[0];
        let mut hi = v[0];
        for i in &v {
            for k in 0..D {
                lo[k] = lo[k].min(i[k]);
                hi[k] = hi[k].max(i[k]);
            }
        }
        for h in hi.iter_mut() {
            *h += 1;
        }
        let mut s = Self::with_bounds(IndexBox { lo, hi });
        for i in &v {
            s.insert(i);
        }
        s
    }

    /// Inserts `i`, which must lie inside the allocated bounds.
    pub fn insert(&mut self, i: &Index<D>) -> bool {
        assert!(self.bounds.contains(i), "index {} outside allocated bounds", fmt_index(i));
        let p = self.bounds.linear(i);
        if self.mask[p] {
            false
        } else {
            self.mask[p] = true;
            self.count += 1;
            true
        }
    }

    pub fn remove(&mut self, i: &Index<D>) -> bool {
        if !self.bounds.contains(i) {
            return false;
        }
        let p = self.bounds.linear(i);
        if self.mask[p] {
            self.mask[p] = false;
            self.count -= 1;
            true
        } else {
            false
        }
    }

    #[inline]
    pub fn contains(&self, i: &Index<D>) -> bool {
        self.bounds.contains(i) && self.mask[self.bounds.linear(i)]
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    /// Allocated bounds (not necessarily tight).
    pub fn bounds(&self) -> &IndexBox<D> {
        &self.bounds
    }

    /// Smallest box containing every element.
    pub fn tight_bounds(&self) -> Option<IndexBox<D>> {
        let mut it = self.iter();
        let first = it.next()?;
        let mut lo = first;
        let mut hi = first;
        for i in it {
            for k in 0..D {
                lo[k] = lo[k].min(i[k]);
                hi[k] = hi[k].max(i[k]);
            }
        }
        for h in hi.iter_mut() {
            *h += 1;
        }
        Some(IndexBox { lo, hi })
    }

    /// Elements in lexicographic order.
    pub fn iter(&self) -> impl Iterator<Item = Index<D>> + '_ {
        self.mask
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(p, _)| self.bounds.unlinear(p))
    }

    pub fn to_vec(&self) -> Vec<Index<D>> {
        self.iter().collect()
    }

    /// Same elements, re-allocated over `bounds` (which must contain them).
    pub fn rebound(&self, bounds: IndexBox<D>) -> Self {
        let mut s = Self::with_bounds(bounds);
        for i in self.iter() {
            s.insert(&i);
        }
        s
    }

    pub fn union(&self, other: &Self) -> Self {
        let b = self.bounds.hull(&other.bounds);
        let mut s = self.rebound(b);
        for i in other.iter() {
            s.insert(&i);
        }
        s
    }

    pub fn difference(&self, other: &Self) -> Self {
        let mut s = self.clone();
        for i in other.iter() {
            s.remove(&i);
        }
        s
    }

    pub fn intersection(&self, other: &Self) -> Self {
        Self::from_fn(self.bounds, |i| self.contains(i) && other.contains(i))
    }

    pub fn is_subset(&self, other: &Self) -> bool {
        self.iter().all(|i| other.contains(&i))
    }

    pub fn translate(&self, v: &Index<D>) -> Self {
        let b = self.bounds.translate(v);
        Self { bounds: b, mask: self.mask.clone(), count: self.count }
    }

    /// Elements lying in `b`.
    pub fn restrict(&self, b: &IndexBox<D>) -> Self {
        let bb = self.bounds.intersect(b);
        if bb.is_empty() {
            return Self::empty();
        }
        Self::from_fn(bb, |i| self.contains(i))
    }

    /// Number of elements inside `b`.
    pub fn count_in(&self, b: &IndexBox<D>) -> usize {
        let bb = self.bounds.intersect(b);
        if bb.is_empty() {
            return 0;
        }
        bb.iter().filter(|i| self.contains(i)).count()
    }
}

/// Reference configuration: the body `Ω` and the Dirichlet-extended set `U`.
///
/// Both are stored through their lattice points. `Ω` may be a finite union of
/// boxes; `U` is a single box containing `Ω`. Sites of `U \ Ω` carry the
/// boundary datum.
#[derive(Clone, Debug, PartialEq)]
pub struct LatticeDomain<const D: usize> {
    eps: f64,
    omega: Vec<IndexBox<D>>,
    u_set: IndexBox<D>,
}

impl<const D: usize> LatticeDomain<D> {
    pub fn new(eps: f64, omega: Vec<IndexBox<D>>, u_set: IndexBox<D>) -> Result<Self> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::Invalid(format!("lattice spacing must be positive, got {eps}")));
        }
        if !(2..=3).contains(&D) {
            return Err(Error::Invalid(format!("dimension must be 2 or 3, got {D}")));
        }
        let omega: Vec<IndexBox<D>> = omega.into_iter().filter(|b| !b.is_empty()).collect();
        if omega.is_empty() {
            return Err(Error::Invalid("reference domain has no lattice points".into()));
        }
        for b in &omega {
            if !u_set.contains_box(b) {
                return Err(Error::Invalid("omega must be contained in U".into()));
            }
        }
        Ok(Self { eps, omega, u_set })
    }

    /// `Ω = [0,n)^d` in index units with `U` extended by `layers` sites on every
    /// face (all faces Dirichlet).
    pub fn cube(eps: f64, n: i64, layers: i64) -> Result<Self> {
        let omega = IndexBox::cube(n);
        Self::new(eps, vec![omega], omega.expand(layers))
    }

    /// Box domain whose `U` extends only across the listed faces
    /// `(axis, upper)`; the remaining faces are free.
    pub fn with_dirichlet_faces(
        eps: f64,
        omega: IndexBox<D>,
        faces: &[(usize, bool)],
        layers: i64,
    ) -> Result<Self> {
        let mut u = omega;
        for &(axis, upper) in faces {
            if axis >= D {
                return Err(Error::Invalid(format!("axis {axis} out of range")));
            }
            if upper {
                u.hi[axis] += layers;
            } else {
                u.lo[axis] -= layers;
            }
        }
        Self::new(eps, vec![omega], u)
    }

    /// Domain from real boxes; lattice points are those with `ε·i` inside.
    pub fn from_real(eps: f64, omega: &[RealBox<D>], u_set: &RealBox<D>) -> Result<Self> {
        let boxes = omega.iter().map(|b| index_box(eps, b)).collect();
        Self::new(eps, boxes, index_box(eps, u_set))
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn omega_boxes(&self) -> &[IndexBox<D>] {
        &self.omega
    }

    pub fn u_box(&self) -> &IndexBox<D> {
        &self.u_set
    }

    /// Bounding box of `Z_ε(Ω)`.
    pub fn omega_bounds(&self) -> IndexBox<D> {
        self.omega.iter().fold(IndexBox::empty(), |acc, b| acc.hull(b))
    }

    #[inline]
    pub fn in_omega(&self, i: &Index<D>) -> bool {
        self.omega.iter().any(|b| b.contains(i))
    }

    #[inline]
    pub fn in_u(&self, i: &Index<D>) -> bool {
        self.u_set.contains(i)
    }

    pub fn coordinate(&self, i: &Index<D>) -> [f64; D] {
        let mut x = [0.0; D];
        for k in 0..D {
            x[k] = self.eps * i[k] as f64;
        }
        x
    }

    /// `Z_ε(Ω)` in lexicographic order.
    pub fn omega_sites(&self) -> impl Iterator<Item = Index<D>> + '_ {
        let b = self.omega_bounds();
        let n = b.len();
        (0..n).map(move |p| b.unlinear(p)).filter(move |i| self.in_omega(i))
    }

    /// Validated void set: every index must lie in `Z_ε(Ω)`.
    pub fn void_set<I: IntoIterator<Item = Index<D>>>(&self, it: I) -> Result<VoidSet<D>> {
        let s = IndexSet::from_indices(it);
        self.check_voids(&s)?;
        Ok(s)
    }

    pub fn check_voids(&self, e: &VoidSet<D>) -> Result<()> {
        for i in e.iter() {
            if !self.in_omega(&i) {
                return Err(Error::OutOfDomain(fmt_index(&i)));
            }
        }
        Ok(())
    }

    /// `E ⊂⊂ Ω`: no void site is a lattice neighbour (in the ∞-norm) of a
    /// site outside `Ω`.
    pub fn compactly_inside(&self, e: &VoidSet<D>) -> bool {
        e.iter().all(|i| {
            IndexBox::point(i).expand(1).iter().all(|j| self.in_omega(&j))
        })
    }
}

/// Union of half-open cubes `origin + s·(k + [-1/2,1/2)^d)` over cells `k`.
#[derive(Clone, Debug, PartialEq)]
pub struct VoxelSet<const D: usize> {
    pub cell_size: f64,
    pub origin: [f64; D],
    pub cells: IndexSet<D>,
}

impl<const D: usize> VoxelSet<D> {
    pub fn new(cell_size: f64, origin: [f64; D], cells: IndexSet<D>) -> Self {
        assert!(cell_size > 0.0, "cell size must be positive");
        Self { cell_size, origin, cells }
    }

    pub fn empty(cell_size: f64) -> Self {
        Self::new(cell_size, [0.0; D], IndexSet::empty())
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn measure(&self) -> f64 {
        self.cell_size.powi(D as i32) * self.cells.len() as f64
    }

    pub fn center(&self, k: &Index<D>) -> [f64; D] {
        let mut c = [0.0; D];
        for a in 0..D {
            c[a] = self.origin[a] + self.cell_size * k[a] as f64;
        }
        c
    }

    /// Closed bounds `(lo, hi)` of cell `k`.
    pub fn cell_bounds(&self, k: &Index<D>) -> ([f64; D], [f64; D]) {
        let c = self.center(k);
        let h = 0.5 * self.cell_size;
        let mut lo = c;
        let mut hi = c;
        for a in 0..D {
            lo[a] -= h;
            hi[a] += h;
        }
        (lo, hi)
    }

    /// Cell containing the point `x` under the half-open rule.
    pub fn cell_of(&self, x: &[f64; D]) -> Index<D> {
        let mut k = [0; D];
        for a in 0..D {
            k[a] = ((x[a] - self.origin[a]) / self.cell_size + 0.5).floor() as i64;
        }
        k
    }

    /// Same set on a grid `m` times finer.
    pub fn refine(&self, m: i64) -> VoxelSet<D> {
        assert!(m >= 1);
        let h = self.cell_size / m as f64;
        let mut origin = self.origin;
        for o in origin.iter_mut() {
            *o += -0.5 * self.cell_size + 0.5 * h;
        }
        let cells = match self.cells.tight_bounds() {
            None => IndexSet::empty(),
            Some(b) => {
                let mut fb = b;
                for a in 0..D {
                    fb.lo[a] = b.lo[a] * m;
                    fb.hi[a] = b.hi[a] * m;
                }
                IndexSet::from_fn(fb, |f| {
                    let mut k = [0; D];
                    for a in 0..D {
                        k[a] = f[a].div_euclid(m);
                    }
                    self.cells.contains(&k)
                })
            }
        };
        VoxelSet { cell_size: h, origin, cells }
    }

    /// Euclidean distance from `x` to the closure of the set.
    pub fn distance_to_point(&self, x: &[f64; D]) -> f64 {
        self.nearest(x).map(|(_, d)| d).unwrap_or(f64::INFINITY)
    }

    /// Nearest cell to `x` and its distance, by shell search on the grid.
    pub fn nearest(&self, x: &[f64; D]) -> Option<(Index<D>, f64)> {
        let tb = self.cells.tight_bounds()?;
        let c0 = self.cell_of(x);
        // Chebyshev distance (in cells) from c0 to the bounding box.
        let mut r0 = 0i64;
        for a in 0..D {
            let gap = if c0[a] < tb.lo[a] {
                tb.lo[a] - c0[a]
            } else if c0[a] >= tb.hi[a] {
                c0[a] - tb.hi[a] + 1
            } else {
                0
            };
            r0 = r0.max(gap);
        }
        let mut rmax = 0i64;
        for a in 0..D {
            rmax = rmax.max((c0[a] - tb.lo[a]).abs()).max((tb.hi[a] - 1 - c0[a]).abs());
        }
        let mut best: Option<(Index<D>, f64)> = None;
        let mut r = r0;
        while r <= rmax {
            if let Some((_, d)) = best {
                if ((r - 1) as f64) * self.cell_size > d {
                    break;
                }
            }
            let shell = IndexBox::point(c0).expand(r).intersect(&tb);
            for k in shell.iter() {
                let cheb = (0..D).map(|a| (k[a] - c0[a]).abs()).max().unwrap_or(0);
                if cheb != r || !self.cells.contains(&k) {
                    continue;
                }
                let (lo, hi) = self.cell_bounds(&k);
                let d = point_box_distance(x, &lo, &hi);
                if best.is_none_or(|(_, bd)| d < bd) {
                    best = Some((k, d));
                }
            }
            r += 1;
        }
        best
    }
}

pub(crate) fn point_box_distance<const D: usize>(x: &[f64; D], lo: &[f64; D], hi: &[f64; D]) -> f64 {
    let mut s = 0.0;
    for a in 0..D {
        let g = if x[a] < lo[a] {
            lo[a] - x[a]
        } else if x[a] > hi[a] {
            x[a] - hi[a]
        } else {
            0.0
        };
        s += g * g;
    }
    s.sqrt()
}

pub(crate) fn box_box_distance<const D: usize>(
    lo1: &[f64; D],
    hi1: &[f64; D],
    lo2: &[f64; D],
    hi2: &[f64; D],
) -> f64 {
    let mut s = 0.0;
    for a in 0..D {
        let g = (lo2[a] - hi1[a]).max(lo1[a] - hi2[a]).max(0.0);
        s += g * g;
    }
    s.sqrt()
}

/// Largest distance from a point of the closed box to `p` (attained at a corner).
fn max_corner_distance<const D: usize>(lo: &[f64; D], hi: &[f64; D], blo: &[f64; D], bhi: &[f64; D]) -> f64 {
    let mut s = 0.0;
    for a in 0..D {
        // distance along axis a from the worst point of [lo,hi] to [blo,bhi]
        let g_lo = (blo[a] - lo[a]).max(lo[a] - bhi[a]).max(0.0);
        let g_hi = (blo[a] - hi[a]).max(hi[a] - bhi[a]).max(0.0);
        let g = g_lo.max(g_hi);
        s += g * g;
    }
    s.sqrt()
}

/// `Q_ε(E)`: one cube of side `ε` centered at every void coordinate.
pub fn voxelize<const D: usize>(e: &VoidSet<D>, eps: f64) -> VoxelSet<D> {
    VoxelSet::new(eps, [0.0; D], e.clone())
}

/// `sup_{x ∈ A} dist(x, B)` over the closures, by branch and bound on each
/// cell of `A` with corner-exact bounds.
pub fn directed_hausdorff<const D: usize>(a: &VoxelSet<D>, b: &VoxelSet<D>) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySet);
    }
    let scale = a.cell_size.max(b.cell_size);
    let tol = 1e-13 * scale.max(1.0);
    let mut cand: Vec<(f64, Index<D>)> = a
        .cells
        .iter()
        .map(|k| (b.distance_to_point(&a.center(&k)), k))
        .collect();
    cand.sort_by(|x, y| y.0.partial_cmp(&x.0).unwrap().then(x.1.cmp(&y.1)));
    let rad = 0.5 * a.cell_size * (D as f64).sqrt();
    let mut best = 0.0f64;
    for (dc, k) in cand {
        if dc + rad <= best + tol {
            continue;
        }
        let (lo, hi) = a.cell_bounds(&k);
        best = best.max(sup_distance_on_box(&lo, &hi, b, best, tol));
    }
    Ok(best)
}

fn sup_distance_on_box<const D: usize>(
    lo: &[f64; D],
    hi: &[f64; D],
    b: &VoxelSet<D>,
    mut best: f64,
    tol: f64,
) -> f64 {
    let mut stack = vec![(*lo, *hi)];
    let mut guard = 0usize;
    while let Some((l, h)) = stack.pop() {
        guard += 1;
        let mut c = [0.0; D];
        let mut r2 = 0.0;
        for a in 0..D {
            c[a] = 0.5 * (l[a] + h[a]);
            r2 += 0.25 * (h[a] - l[a]) * (h[a] - l[a]);
        }
        if covers_box(b, &l, &h) {
            continue;
        }
        let Some((nk, dc)) = b.nearest(&c) else { return f64::INFINITY };
        // Lower bounds from the centre and the corners.
        best = best.max(dc);
        for m in 0..(1usize << D) {
            let mut p = [0.0; D];
            for a in 0..D {
                p[a] = if (m >> a) & 1 == 1 { h[a] } else { l[a] };
            }
            best = best.max(b.distance_to_point(&p));
        }
        let (blo, bhi) = b.cell_bounds(&nk);
        let upper = (dc + r2.sqrt()).min(max_corner_distance(&l, &h, &blo, &bhi));
        if upper <= best + tol || guard > 200_000 {
            continue;
        }
        let axis = (0..D)
            .max_by(|&x, &y| (h[x] - l[x]).partial_cmp(&(h[y] - l[y])).unwrap())
            .unwrap();
        let mid = 0.5 * (l[axis] + h[axis]);
        let mut h1 = h;
        h1[axis] = mid;
        let mut l2 = l;
        l2[axis] = mid;
        stack.push((l, h1));
        stack.push((l2, h));
    }
    best
}

/// True when the cells of `b` cover the closed box `[l, h]`.
fn covers_box<const D: usize>(b: &VoxelSet<D>, l: &[f64; D], h: &[f64; D]) -> bool {
    let tiny = 1e-9 * b.cell_size;
    let mut inner = *l;
    let mut outer = *h;
    for a in 0..D {
        inner[a] += tiny;
        outer[a] -= tiny;
    }
    let lo = b.cell_of(&inner);
    let mut hi = b.cell_of(&outer);
    for v in hi.iter_mut() {
        *v += 1;
    }
    let range = IndexBox::new(lo, hi);
    range.len() <= 1 << 22 && b.cells.count_in(&range) == range.len()
}

/// Hausdorff distance between the closures of two voxel sets.
pub fn hausdorff_distance<const D: usize>(a: &VoxelSet<D>, b: &VoxelSet<D>) -> Result<f64> {
    Ok(directed_hausdorff(a, b)?.max(directed_hausdorff(b, a)?))
}

/// Conservative voxel cover of the open neighbourhood `(A)_r` on the grid
/// `m` times finer than `A`'s: exactly the fine cells meeting `(A)_r`.
pub fn thicken<const D: usize>(a: &VoxelSet<D>, r: f64, m: i64) -> Result<VoxelSet<D>> {
    if !(r > 0.0) {
        return Err(Error::Invalid(format!("thickening radius must be positive, got {r}")));
    }
    if m < 1 {
        return Err(Error::Invalid("refinement factor must be at least 1".into()));
    }
    let fine = a.refine(m);
    let Some(tb) = fine.cells.tight_bounds() else {
        return Ok(VoxelSet::empty(fine.cell_size));
    };
    let h = fine.cell_size;
    let reach = (r / h).ceil() as i64 + 1;
    let cand = tb.expand(reach);
    let coarse_reach = (r / a.cell_size).ceil() as i64 + 1;
    let cells = IndexSet::from_fn(cand, |f| {
        let (lo, hi) = fine.cell_bounds(f);
        let c = fine.center(f);
        let k0 = a.cell_of(&c);
        IndexBox::point(k0).expand(coarse_reach).iter().any(|k| {
            if !a.cells.contains(&k) {
                return false;
            }
            let (blo, bhi) = a.cell_bounds(&k);
            box_box_distance(&lo, &hi, &blo, &bhi) < r
        })
    });
    Ok(VoxelSet::new(h, fine.origin, cells))
}

/// Finite union of half-open real boxes, used for coordinate polyhedra.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct BoxUnion<const D: usize> {
    pub boxes: Vec<RealBox<D>>,
}

/// Rectilinear cell decomposition generated by the face coordinates of a
/// [`BoxUnion`]. Cell `k` spans `[coords[a][k_a], coords[a][k_a + 1])`.
#[derive(Clone, Debug)]
pub struct RectilinearGrid<const D: usize> {
    pub coords: [Vec<f64>; D],
    pub occupied: IndexSet<D>,
}

impl<const D: usize> BoxUnion<D> {
    pub fn new(boxes: Vec<RealBox<D>>) -> Self {
        let boxes = boxes.into_iter().filter(|b| b.volume() > 0.0).collect();
        Self { boxes }
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }

    pub fn contains(&self, x: &[f64; D]) -> bool {
        self.boxes.iter().any(|b| b.contains(x))
    }

    pub fn bounds(&self) -> Option<RealBox<D>> {
        let first = self.boxes.first()?;
        let mut lo = first.lo;
        let mut hi = first.hi;
        for b in &self.boxes {
            for a in 0..D {
                lo[a] = lo[a].min(b.lo[a]);
                hi[a] = hi[a].max(b.hi[a]);
            }
        }
        Some(RealBox::new(lo, hi))
    }

    pub fn grid(&self) -> RectilinearGrid<D> {
        let coords: [Vec<f64>; D] = std::array::from_fn(|a| {
            let mut v: Vec<f64> = self.boxes.iter().flat_map(|b| [b.lo[a], b.hi[a]]).collect();
            v.sort_by(|x, y| x.partial_cmp(y).expect("finite box coordinates"));
            v.dedup();
            v
        });
        let mut shape = [0i64; D];
        for a in 0..D {
            shape[a] = coords[a].len().saturating_sub(1) as i64;
        }
        let bounds = IndexBox::new([0; D], shape);
        let occupied = IndexSet::from_fn(bounds, |k| {
            let mut c = [0.0; D];
            for a in 0..D {
                let i = k[a] as usize;
                c[a] = 0.5 * (coords[a][i] + coords[a][i + 1]);
            }
            self.contains(&c)
        });
        RectilinearGrid { coords, occupied }
    }

    /// Lebesgue measure of the union.
    pub fn measure(&self) -> f64 {
        let g = self.grid();
        g.occupied.iter().map(|k| g.cell_volume(&k)).sum()
    }

    /// Cells `k` of the grid `origin + s·(k + [-1/2,1/2)^d)` whose center
    /// lies in the union.
    pub fn voxelize(&self, s: f64, origin: [f64; D]) -> VoxelSet<D> {
        let Some(b) = self.bounds() else {
            return VoxelSet::new(s, origin, IndexSet::empty());
        };
        let mut ib = IndexBox::new([0; D], [0; D]);
        for a in 0..D {
            ib.lo[a] = ((b.lo[a] - origin[a]) / s).floor() as i64 - 1;
            ib.hi[a] = ((b.hi[a] - origin[a]) / s).ceil() as i64 + 2;
        }
        let cells = IndexSet::from_fn(ib, |k| {
            let mut c = [0.0; D];
            for a in 0..D {
                c[a] = origin[a] + s * k[a] as f64;
            }
            self.contains(&c)
        });
        VoxelSet::new(s, origin, cells)
    }
}

impl<const D: usize> RectilinearGrid<D> {
    pub fn cell_volume(&self, k: &Index<D>) -> f64 {
        (0..D).map(|a| self.side(a, k[a])).product()
    }

    pub fn side(&self, a: usize, k: i64) -> f64 {
        let i = k as usize;
        self.coords[a][i + 1] - self.coords[a][i]
    }

    /// Area of the face of cell `k` orthogonal to axis `a`.
    pub fn face_area(&self, k: &Index<D>, a: usize) -> f64 {
        (0..D).filter(|&b| b != a).map(|b| self.side(b, k[b])).product()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_grid_count() {
        let pts = lattice_points(1.0, &RealBox::new([0.0; 3], [2.0; 3]));
        assert_eq!(pts.len(), 8);
        assert_eq!(pts[0], [0, 0, 0]);
        assert_eq!(pts[7], [1, 1, 1]);
        assert!(pts.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn half_spacing_in_2d() {
        let pts = lattice_points(0.5, &RealBox::new([0.0; 2], [1.0; 2]));
        assert_eq!(pts, vec![[0, 0], [0, 1], [1, 0], [1, 1]]);
    }

    #[test]
    fn region_without_points() {
        assert!(lattice_points(1.0, &RealBox::new([0.2; 3], [0.8; 3])).is_empty());
    }

    #[test]
    fn centered_ranges_match_half_open_cubes() {
        // n even: offsets -n/2 .. n/2-1; n odd: -(n-1)/2 .. (n-1)/2
        assert_eq!(centered_range(4, 1), (-2, 2));
        assert_eq!(centered_range(3, 1), (-1, 2));
        assert_eq!(centered_range(1, 1), (0, 1));
        // side 3n/2 with n = 4 is 6
        assert_eq!(centered_range(12, 2), (-3, 3));
        let b = cube_box(&[0, 0, 0], 4);
        assert_eq!(b.len(), 64);
    }

    #[test]
    fn box_linearization_is_lexicographic() {
        let b = IndexBox::new([-1, 0, 2], [1, 3, 4]);
        let v: Vec<_> = b.iter().collect();
        assert_eq!(v.len(), 12);
        for (p, i) in v.iter().enumerate() {
            assert_eq!(b.linear(i), p);
        }
        assert!(v.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn index_set_basics() {
        let s = IndexSet::from_indices(vec![[1, 2], [0, 0], [1, 2], [-3, 5]]);
        assert_eq!(s.len(), 3);
        assert_eq!(s.to_vec(), vec![[-3, 5], [0, 0], [1, 2]]);
        assert!(s.contains(&[0, 0]));
        assert!(!s.contains(&[9, 9]));
        let t = IndexSet::from_indices(vec![[0, 0]]);
        assert!(t.is_subset(&s));
        assert_eq!(s.difference(&t).len(), 2);
        assert_eq!(s.union(&IndexSet::from_indices(vec![[7, 7]])).len(), 4);
    }

    #[test]
    fn domain_validation() {
        let d = LatticeDomain::<3>::cube(0.25, 4, 1).unwrap();
        assert!(d.in_omega(&[0, 0, 0]));
        assert!(!d.in_omega(&[-1, 0, 0]));
        assert!(d.in_u(&[-1, 0, 0]));
        assert!(d.void_set(vec![[4, 0, 0]]).is_err());
        assert_eq!(d.omega_sites().count(), 64);
        assert!(LatticeDomain::<3>::new(0.0, vec![IndexBox::cube(2)], IndexBox::cube(2)).is_err());
    }

    #[test]
    fn voxelize_measure() {
        let e = IndexSet::from_indices(vec![[0, 0, 0], [1, 0, 0]]);
        let v = voxelize(&e, 0.5);
        assert_eq!(v.measure(), 2.0 * 0.125);
        let (lo, hi) = voxelize(&IndexSet::from_indices(vec![[0, 0, 0]]), 1.0).cell_bounds(&[0, 0, 0]);
        assert_eq!(lo, [-0.5; 3]);
        assert_eq!(hi, [0.5; 3]);
    }

    #[test]
    fn hausdorff_of_separated_cubes() {
        let a = VoxelSet::new(1.0, [0.0; 3], IndexSet::from_indices(vec![[0, 0, 0]]));
        let b = VoxelSet::new(1.0, [0.0; 3], IndexSet::from_indices(vec![[3, 0, 0]]));
        assert!((hausdorff_distance(&a, &b).unwrap() - 3.0).abs() < 1e-12);
        let c = VoxelSet::new(1.0, [0.2, 0.0, 0.0], a.cells.clone());
        assert!((hausdorff_distance(&a, &c).unwrap() - 0.2).abs() < 1e-12);
        assert_eq!(hausdorff_distance(&a, &a).unwrap(), 0.0);
        assert_eq!(hausdorff_distance(&a, &VoxelSet::empty(1.0)), Err(Error::EmptySet));
    }

    #[test]
    fn hausdorff_interior_maximum() {
        // A bar of five cells against its two end cells: the worst point is
        // the middle of the bar, two cells away from both ends.
        let a = VoxelSet::new(1.0, [0.0; 2], IndexSet::from_indices((0..5).map(|x| [x, 0])));
        let b = VoxelSet::new(1.0, [0.0; 2], IndexSet::from_indices(vec![[0, 0], [4, 0]]));
        assert!((directed_hausdorff(&a, &b).unwrap() - 1.5).abs() < 1e-9);
    }

    #[test]
    fn refine_preserves_measure_and_geometry() {
        let a = VoxelSet::new(1.0, [0.0; 3], IndexSet::from_indices(vec![[0, 0, 0], [2, 1, 0]]));
        for m in [1, 2, 3, 4] {
            let f = a.refine(m);
            assert!((f.measure() - a.measure()).abs() < 1e-12);
            assert!(hausdorff_distance(&a, &f).unwrap() < 1e-12);
        }
    }

    #[test]
    fn thicken_small_radius_adds_face_neighbours() {
        let a = VoxelSet::new(1.0, [0.0; 3], IndexSet::from_indices(vec![[0, 0, 0]]));
        let t = thicken(&a, 0.1, 4).unwrap();
        let fine = a.refine(4);
        assert!(fine.cells.is_subset(&t.cells));
        // every face-adjacent fine cell is included
        let extra = t.cells.difference(&fine.cells);
        assert!(extra.len() >= 6 * 16);
        assert!(thicken(&VoxelSet::<3>::empty(1.0), 0.5, 4).unwrap().is_empty());
    }
}
