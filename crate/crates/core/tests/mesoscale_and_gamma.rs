use nalgebra::Matrix3;

use voidlattice::elastic::{CellEnergyModel, SolverParams};
use voidlattice::gamma::{cauchy_born_experiment, gamma_limsup_experiment, suggest_regime, GammaModels};
use voidlattice::lattice::{hausdorff_distance, voxelize, BoxUnion, IndexBox, IndexSet, LatticeDomain, RealBox, VoxelSet};
use voidlattice::mesoscale::{
    boundary_face_ratio, classify_eta_cubes, cubic_void_regularization, default_thresholds, eta_replacement,
    random_half_subset, smooth_at_eta_scale, smooth_cubic_set, EpsCubeLabel, EtaCubeLabel, SmoothParams,
};
use voidlattice::rng::seeded;
use voidlattice::surface::NeighborModel;
use voidlattice::Error;

#[test]
fn smoothed_bar_has_flat_face_away_from_edges() {
    let e1 = IndexSet::from_indices(vec![[0i64, 0, 0], [1, 0, 0]]);
    let s = smooth_cubic_set(&e1, &SmoothParams { sigma: 0.3, cells_per_unit: Some(20), level: None }).unwrap();
    // Fine cells just above the top face x2 = 1/2, near x1 = 1/2, x3 = 0.
    let m = s.m;
    let mut checked = 0;
    for f2 in (m / 2)..(m / 2 + 6) {
        let f = [m, f2, m / 2];
        let g = s.gradient(&f);
        let norm = (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt();
        if norm > 1e-8 {
            assert!(g[0].abs() <= 1e-9 * norm && g[2].abs() <= 1e-9 * norm, "{g:?}");
            assert!(g[1] < 0.0);
            checked += 1;
        }
    }
    assert!(checked > 0);
}

#[test]
fn level_scan_prefers_passing_levels() {
    let e1 = IndexSet::from_indices(vec![[0i64, 0]]);
    let s = smooth_cubic_set(&e1, &SmoothParams { sigma: 0.3, cells_per_unit: Some(32), level: None }).unwrap();
    assert_eq!(s.scan.len(), 9);
    let chosen = s.scan.iter().find(|r| r.0 == s.t).unwrap();
    assert!(chosen.1);
    // Convex corners keep the field near 1/4 in 2D; higher levels lose them.
    assert!(s.scan.iter().filter(|r| r.0 >= 0.3).all(|r| !r.1));
}

#[test]
fn eta_scale_smoothing_maps_back_to_lattice_cubes() {
    for n in [3i64, 4] {
        let eps = 1.0 / 24.0;
        let d = LatticeDomain::<2>::cube(eps, 24, 1).unwrap();
        let seed = d.void_set(vec![[10, 10], [10 + n, 10]]).unwrap();
        let e = eta_replacement(&seed, n, &d);
        let s = smooth_at_eta_scale(&e, n, &d, &SmoothParams { sigma: 0.3, cells_per_unit: Some(24), level: Some(0.1) })
            .unwrap();
        let base = s.physical_base();
        let lattice = voxelize(&e, eps);
        assert!((base.measure() - lattice.measure()).abs() < 1e-12);
        let hd = hausdorff_distance(&base, &lattice).unwrap();
        assert!(hd < 1e-9, "n={n}: {hd}");
        let cover = s.physical_cover();
        let eta = n as f64 * eps;
        assert!(hausdorff_distance(&cover, &lattice).unwrap() <= (0.3 + 2.0 * s.h()) * eta + 1e-12);
    }
    let d = LatticeDomain::<2>::cube(0.1, 10, 1).unwrap();
    let ragged = d.void_set(vec![[5, 5]]).unwrap();
    assert!(matches!(
        smooth_at_eta_scale(&ragged, 2, &d, &SmoothParams::default()),
        Err(Error::NotEtaAligned)
    ));
}

#[test]
fn shrinking_voids_leave_no_added_volume() {
    let (theta, beta) = default_thresholds(3, 4.0);
    let m = 16;
    let h = 1.0 / m as f64;
    let mut added = Vec::new();
    for side in [12i64, 6, 3, 1] {
        let w = VoxelSet::new(h, [0.0; 3], IndexSet::from_box(&IndexBox::new([2; 3], [2 + side; 3])));
        let r = cubic_void_regularization(&w, m, theta, beta).unwrap();
        assert!(w.cells.is_subset(&r.v.cells));
        added.push(r.v.measure() - w.measure());
        for (_, label) in &r.labels {
            if *label == EpsCubeLabel::Bad1 {
                assert!(r.bad1_max_simplex_fraction <= 0.5 + 1e-12);
            }
        }
    }
    assert_eq!(*added.last().unwrap(), 0.0);
}

#[test]
fn boundary_face_ratio_samples() {
    let mut rng = seeded(11);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let p = random_half_subset::<3>(&mut rng, 8);
        assert!(p.len() <= 256);
        if let Some(r) = boundary_face_ratio(&p, 8) {
            worst = worst.max(r);
        }
    }
    assert!(worst.is_finite() && worst > 0.0);
}

#[test]
fn eta_cube_labels_of_a_corner() {
    let e = IndexSet::from_fn(IndexBox::<3>::cube(24), |s| s[0] >= 12 && s[1] >= 12);
    let labels = classify_eta_cubes(&e, 4);
    assert!(labels.iter().any(|(_, l)| *l == EtaCubeLabel::Bad));
    assert!(labels.iter().any(|(_, l)| *l == EtaCubeLabel::Good));
}

#[test]
fn elastic_limsup_approaches_affine_limit() {
    let eps: Vec<f64> = (3..=5).map(|k| 2f64.powi(-k)).collect();
    let regime = suggest_regime(&[eps[0] * 2.0, eps[0], eps[1], eps[2]], 2.0);
    // The coarse rows may violate the rate trends; the experiment only needs rows.
    let regime = match regime {
        Ok(r) => r,
        Err(_) => voidlattice::gamma::ScalingRegime::explicit(
            2.0,
            eps.iter()
                .zip([2i64, 3, 4])
                .map(|(&e, n)| voidlattice::gamma::RegimeRow::new(e, e.sqrt(), n, (n as f64 * e).powf(1.5)))
                .collect(),
        )
        .unwrap(),
    };
    let omega = RealBox::new([0.0; 3], [1.0; 3]);
    let e = BoxUnion::new(vec![RealBox::new([0.25; 3], [0.75; 3])]);
    let models = GammaModels {
        neighbors: NeighborModel::nearest(1.0),
        cell: CellEnergyModel::default(),
        strain: Matrix3::new(0.1, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0),
    };
    let rows = gamma_limsup_experiment(&e, &regime, &models, &omega).unwrap();
    let errs: Vec<f64> = rows.iter().map(|r| (r.elastic - r.elastic_limit).abs() / r.elastic_limit).collect();
    assert!(errs.windows(2).all(|w| w[1] <= w[0] * 1.05), "{errs:?}");
    assert!(*errs.last().unwrap() < 0.2, "{errs:?}");
}

#[test]
fn cauchy_born_deviation_is_reported() {
    let f = Matrix3::new(0.05, 0.02, 0.0, 0.0, -0.03, 0.0, 0.01, 0.0, 0.04);
    let void = BoxUnion::new(vec![RealBox::new([0.375; 3], [0.625; 3])]);
    let omega = RealBox::new([0.0; 3], [1.0; 3]);
    let rows = cauchy_born_experiment(
        &f,
        &[1.0 / 8.0, 1.0 / 16.0],
        &void,
        &omega,
        &CellEnergyModel::default(),
        1e-3,
        &SolverParams { tol: 1e-7, max_iter: 3000 },
        0.125,
    )
    .unwrap();
    assert_eq!(rows.len(), 2);
    for r in &rows {
        assert!(r.cells > 0);
        assert!(r.mean_deviation.is_finite() && r.mean_deviation <= r.max_deviation);
    }
}
