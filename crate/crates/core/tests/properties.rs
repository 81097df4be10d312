use ndarray::{Array2, Axis};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rotequiv::backbones::{fps_sample, Backbone, BackboneConfig, BackboneKind};
use rotequiv::equivariance::{permuted_residual, pool_invariant, wrap_forward, PoolMode};
use rotequiv::nn::{read_checkpoint_bytes, write_checkpoint_bytes, NetworkBuilder, ParameterSet, Session, Source};
use rotequiv::pointcloud::{
    apply_rotation, random_rotation, read_dataset_bytes, write_dataset_bytes, ChannelLayout, PointCloud, RotationMode,
};
use rotequiv::rotgroup::{RotationGroup, BUILTIN_GROUPS};

fn cloud(seed: u64, n: usize, d: usize) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    PointCloud::new(Array2::from_shape_simple_fn((n, d), || rng.random_range(-1.0..1.0)), 0).unwrap()
}

fn matrix(seed: u64, rows: usize, cols: usize) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-1.0..1.0))
}

fn shuffled(n: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order
}

fn backbone(kind: BackboneKind, d: usize) -> (Backbone, ParameterSet) {
    let cfg = BackboneConfig {
        centroids: 8,
        knn: 4,
        ..BackboneConfig::new(kind).with_width(0.125)
    };
    let bb = Backbone::new(
        cfg,
        ChannelLayout {
            spatial_dim: d,
            normals: false,
            intensity: false,
        },
    )
    .unwrap();
    let p = ParameterSet::init(&bb.param_specs(), &mut ChaCha8Rng::seed_from_u64(99));
    (bb, p)
}

/// Groups whose matrices have entries in {0, ±1}, so rotating by them is
/// exact in floating point.
const SIGNED_PERMUTATION_GROUPS: [&str; 5] = ["c1", "c4", "klein4", "tetra12", "cube24"];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn max_pool_is_bitwise_row_permutation_invariant(seed in any::<u64>(), rows in 1usize..40) {
        let mut b = NetworkBuilder::new(4);
        let o = b.max_pool(Source::Input);
        let net = b.finish(o).unwrap();
        let x = matrix(seed, rows, 4);
        let p = ParameterSet::new();
        let a = Session::new(&net).forward(&p, x.clone()).unwrap().clone();
        let y = x.select(Axis(0), &shuffled(rows, seed ^ 1));
        let b2 = Session::new(&net).forward(&p, y).unwrap().clone();
        prop_assert_eq!(a, b2);
    }

    #[test]
    fn flat_backbones_bitwise_row_shuffle_invariant(seed in any::<u64>(), n in 2usize..48) {
        for kind in [BackboneKind::Pointnet, BackboneKind::PointnetFe] {
            let (bb, p) = backbone(kind, 3);
            let x = cloud(seed, n, 3).coords;
            let y = x.select(Axis(0), &shuffled(n, seed ^ 2));
            prop_assert_eq!(bb.forward(&p, x.view()).unwrap(), bb.forward(&p, y.view()).unwrap());
        }
    }

    #[test]
    fn hier_lite_row_shuffle_invariant(seed in any::<u64>(), n in 8usize..40) {
        let (bb, p) = backbone(BackboneKind::HierLite, 3);
        let x = cloud(seed, n, 3).coords;
        let y = x.select(Axis(0), &shuffled(n, seed ^ 3));
        let d = (bb.forward(&p, x.view()).unwrap() - bb.forward(&p, y.view()).unwrap())
            .fold(0.0f64, |m, v| m.max(v.abs()));
        prop_assert!(d < 1e-12, "{}", d);
    }

    #[test]
    fn rotation_round_trip(seed in any::<u64>(), so3 in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mode = if so3 { RotationMode::So3 } else { RotationMode::Z };
        let r = random_rotation(3, mode, &mut rng).unwrap();
        let pc = cloud(seed ^ 4, 16, 3);
        let back = apply_rotation(&apply_rotation(&pc, &r).unwrap(), &r.transpose()).unwrap();
        let d = (&back.coords - &pc.coords).fold(0.0f64, |m, v| m.max(v.abs()));
        prop_assert!(d < 1e-12);
    }

    #[test]
    fn fps_indices_are_rotation_equivariant(seed in any::<u64>(), m in 1usize..16) {
        let pc = cloud(seed, 32, 3);
        let r = random_rotation(3, RotationMode::So3, &mut ChaCha8Rng::seed_from_u64(seed ^ 5)).unwrap();
        let rotated = apply_rotation(&pc, &r).unwrap();
        prop_assert_eq!(fps_sample(pc.coords.view(), m), fps_sample(rotated.coords.view(), m));
    }

    #[test]
    fn permutation_composition_matches_cayley(seed in any::<u64>(), gi in 0usize..8, a in 0usize..24, b in 0usize..24) {
        let g = RotationGroup::by_name(BUILTIN_GROUPS[gi], 3).unwrap();
        let (a, b) = (a % g.order(), b % g.order());
        let (bb, p) = backbone(BackboneKind::PointnetFe, 3);
        let pc = cloud(seed, 12, 3);
        let twice = apply_rotation(&apply_rotation(&pc, g.element(a).unwrap()).unwrap(), g.element(b).unwrap()).unwrap();
        let base = wrap_forward(&g, &bb, &p, &pc).unwrap();
        let moved = wrap_forward(&g, &bb, &p, &twice).unwrap();
        let composed = g.expected_permutation(a).unwrap().compose(&g.expected_permutation(b).unwrap());
        // rotating by r_a then r_b is rotating by the product r_b·r_a
        let product = g.expected_permutation(g.cayley()[b][a]).unwrap();
        prop_assert_eq!(&composed, &product.mapping);
        let res = permuted_residual(base.features.view(), moved.features.view(), &composed);
        prop_assert!(res < 1e-9, "{}", res);
    }

    #[test]
    fn max_pooled_features_commute_with_group_action(seed in any::<u64>(), gi in 0usize..5, r in 0usize..24) {
        let g = RotationGroup::by_name(SIGNED_PERMUTATION_GROUPS[gi], 3).unwrap();
        let r = r % g.order();
        let (bb, p) = backbone(BackboneKind::Pointnet, 3);
        let pc = cloud(seed, 10, 3);
        let rotated = apply_rotation(&pc, g.element(r).unwrap()).unwrap();
        let a = wrap_forward(&g, &bb, &p, &pc).unwrap();
        let b = wrap_forward(&g, &bb, &p, &rotated).unwrap();
        prop_assert_eq!(
            pool_invariant(a.features.view(), PoolMode::Max),
            pool_invariant(b.features.view(), PoolMode::Max)
        );
        let avg = pool_invariant(a.features.view(), PoolMode::Avg) - pool_invariant(b.features.view(), PoolMode::Avg);
        prop_assert!(avg.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn pooling_is_row_permutation_invariant(seed in any::<u64>(), k in 1usize..13) {
        let map = matrix(seed, k, 6);
        let permuted = map.select(Axis(0), &shuffled(k, seed ^ 6));
        prop_assert_eq!(pool_invariant(map.view(), PoolMode::Max), pool_invariant(permuted.view(), PoolMode::Max));
        let d = pool_invariant(map.view(), PoolMode::Avg) - pool_invariant(permuted.view(), PoolMode::Avg);
        prop_assert!(d.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn dataset_round_trip_is_f32_exact(seed in any::<u64>(), n in 1usize..20, count in 1usize..5) {
        let records: Vec<PointCloud> = (0..count)
            .map(|i| {
                let mut pc = cloud(seed.wrapping_add(i as u64), n, 2);
                pc.label = i % 3;
                pc.with_intensity(ndarray::Array1::linspace(0.0, 1.0, n)).unwrap()
            })
            .collect();
        let bytes = write_dataset_bytes(&records, 3).unwrap();
        let (header, back) = read_dataset_bytes(&bytes, "mem").unwrap();
        prop_assert_eq!(header.records, count);
        for (a, b) in records.iter().zip(&back) {
            prop_assert_eq!(&a.quantized(), b);
        }
    }

    #[test]
    fn checkpoint_round_trip_is_bitwise(seed in any::<u64>(), rows in 1usize..6, cols in 1usize..6) {
        let t = matrix(seed, rows, cols).into_dyn();
        let tensors = vec![("w".to_string(), t)];
        prop_assert_eq!(read_checkpoint_bytes(&write_checkpoint_bytes(&tensors), "mem").unwrap(), tensors);
    }
}
