use nalgebra::Matrix3;
use proptest::prelude::*;

use voidlattice::curvature::{detect_laminate, flatness_map, is_cubic, is_locally_flat};
use voidlattice::elastic::{project_rigid_complement, CellEnergyModel, DiscreteGradient};
use voidlattice::io::{parse_void_set, write_void_set};
use voidlattice::lattice::{hausdorff_distance, voxelize, IndexBox, IndexSet, LatticeDomain, VoidSet, VoxelSet};
use voidlattice::mesoscale::{eta_replacement, is_eta_aligned, replacement_cardinality};
use voidlattice::surface::{discrete_perimeter, discrete_perimeter_total, NeighborModel};

fn small_set_3d(max: usize) -> impl Strategy<Value = VoidSet<3>> {
    prop::collection::vec((1i64..11, 1i64..11, 1i64..11), 0..max)
        .prop_map(|v| IndexSet::from_indices(v.into_iter().map(|(a, b, c)| [a, b, c])))
}

fn domain() -> LatticeDomain<3> {
    LatticeDomain::cube(0.25, 12, 1).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn set_algebra(a in small_set_3d(40), b in small_set_3d(40)) {
        let u = a.union(&b);
        let i = a.intersection(&b);
        prop_assert!(a.is_subset(&u) && b.is_subset(&u));
        prop_assert!(i.is_subset(&a) && i.is_subset(&b));
        prop_assert_eq!(u.len() + i.len(), a.len() + b.len());
        prop_assert_eq!(a.difference(&b).len(), a.len() - i.len());
    }

    #[test]
    fn replacement_is_a_closure(e in small_set_3d(30), n in 1i64..5) {
        let d = domain();
        let r = eta_replacement(&e, n, &d);
        prop_assert!(e.is_subset(&r));
        prop_assert_eq!(eta_replacement(&r, n, &d), r.clone());
        prop_assert!(is_eta_aligned(&r, n, &d));
        prop_assert_eq!(replacement_cardinality(&e, n, &d, None), r.len() - e.len());
    }

    #[test]
    fn perimeter_is_translation_invariant(e in small_set_3d(30), s in (-1i64..2, -1i64..2, -1i64..2)) {
        let big = LatticeDomain::<3>::cube(0.25, 20, 1).unwrap();
        let m = NeighborModel::<3>::nearest_and_diagonal(1.0, 0.5);
        let shifted = e.translate(&[s.0 + 4, s.1 + 4, s.2 + 4]);
        let p0 = discrete_perimeter_total(&e, &m, &big);
        let p1 = discrete_perimeter_total(&shifted, &m, &big);
        prop_assert!((p0 - p1).abs() <= 1e-12 * p0.max(1.0));
    }

    #[test]
    fn perimeter_is_additive_over_regions(e in small_set_3d(40), cut in 1i64..11) {
        let d = domain();
        let m = NeighborModel::<3>::nearest(1.0);
        let u = *d.u_box();
        let mut left = u;
        left.hi[0] = cut;
        let mut right = u;
        right.lo[0] = cut;
        let total = discrete_perimeter_total(&e, &m, &d);
        let split = discrete_perimeter(&e, &m, &d, &left) + discrete_perimeter(&e, &m, &d, &right);
        prop_assert!((total - split).abs() <= 1e-12);
    }

    #[test]
    fn bulk_flatness_map_matches_queries(e in small_set_3d(25), nw in 2i64..5, nb in 1i64..4) {
        let d = domain();
        let region = IndexBox::new([2, 2, 2], [9, 9, 9]);
        let map = flatness_map(&e, &d, &region, nw, nb);
        for i in region.iter() {
            prop_assert_eq!(map.locally_flat.contains(&i), is_locally_flat(&e, &d, &i, nw));
            prop_assert_eq!(map.cubic.contains(&i), is_cubic(&e, &d, &i, nw, nb).is_some());
        }
    }

    #[test]
    fn laminates_are_detected(axis in 0usize..3, profile in prop::collection::vec(any::<bool>(), 6)) {
        let region = IndexBox::new([0, 0, 0], [6, 6, 6]);
        let e = IndexSet::from_fn(region, |s| profile[s[axis] as usize]);
        let lam = detect_laminate(&e, &region).unwrap();
        let constant = profile.iter().all(|&p| p == profile[0]);
        prop_assert!(constant || lam.axis == axis);
        if !constant {
            prop_assert_eq!(lam.profile, profile);
        }
    }

    #[test]
    fn projection_is_idempotent_and_orthogonal(v in prop::collection::vec(-2.0f64..2.0, 24)) {
        let g = DiscreteGradient::<3>::from_flat(&v);
        let p = project_rigid_complement(&g);
        let pp = project_rigid_complement(&p);
        prop_assert!(p.sub(&pp).norm() <= 1e-12);
        let r = g.sub(&p);
        prop_assert!(r.dot(&p).abs() <= 1e-10);
    }

    #[test]
    fn bulk_energy_is_frame_indifferent(
        f in prop::collection::vec(-0.2f64..0.2, 9),
        angle in 0.0f64..6.2,
        axis in (-1.0f64..1.0, -1.0f64..1.0, 0.1f64..1.0),
    ) {
        let model = CellEnergyModel::default();
        let fm = Matrix3::identity() + Matrix3::from_row_slice(&f);
        let ax = nalgebra::Vector3::new(axis.0, axis.1, axis.2).normalize();
        let r = nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(ax), angle).into_inner();
        let w0 = model.w_bulk(&DiscreteGradient::from_matrix(&fm));
        let w1 = model.w_bulk(&DiscreteGradient::from_matrix(&(r * fm)));
        prop_assert!(w0 >= 0.0);
        prop_assert!((w0 - w1).abs() <= 1e-10 * w0.max(1e-3));
    }

    #[test]
    fn void_file_round_trip(e in small_set_3d(30)) {
        let text = write_void_set(&e, 0.25);
        let back = parse_void_set(&text).unwrap().to_set::<3>(None).unwrap();
        prop_assert_eq!(back, e);
    }

    #[test]
    fn hausdorff_is_symmetric_and_zero_on_self(
        a in prop::collection::vec((0i64..6, 0i64..6), 1..8),
        b in prop::collection::vec((0i64..6, 0i64..6), 1..8),
    ) {
        let va = voxelize(&IndexSet::from_indices(a.into_iter().map(|(x, y)| [x, y])), 1.0);
        let vb = VoxelSet::new(0.5, [0.25, 0.25], IndexSet::from_indices(b.into_iter().map(|(x, y)| [x, y])));
        prop_assert_eq!(hausdorff_distance(&va, &va).unwrap(), 0.0);
        let d1 = hausdorff_distance(&va, &vb).unwrap();
        let d2 = hausdorff_distance(&vb, &va).unwrap();
        prop_assert!((d1 - d2).abs() <= 1e-12);
    }
}
