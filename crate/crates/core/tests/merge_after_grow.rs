use mvseg_core::affinity::AffinityGraph;
use mvseg_core::refinement::merge_regions;
use mvseg_core::region_growing::{grow, CountOverDistance, UniformWeighting};
use mvseg_core::superpoint::{Superpoint, SuperpointAdjacency};
use proptest::prelude::*;

fn case() -> impl Strategy<Value = (Vec<Superpoint<f64>>, Vec<((u32, u32), f64)>)> {
    (3usize..14).prop_flat_map(|n| {
        let sps = proptest::collection::vec((1usize..50, -5.0..5.0f64), n).prop_map(|v| {
            v.into_iter()
                .enumerate()
                .map(|(i, (c, x))| Superpoint {
                    id: i as u32,
                    point_indices: vec![i as u32],
                    centroid: [x, i as f64, 0.0],
                    point_count: c,
                })
                .collect::<Vec<_>>()
        });
        let edges = proptest::collection::btree_map((0..n as u32, 0..n as u32), 0u8..5, 0..3 * n).prop_map(|m| {
            m.into_iter()
                .filter(|((a, b), _)| a != b)
                .map(|((a, b), q)| ((a.min(b), a.max(b)), q as f64 * 0.25))
                .collect::<std::collections::BTreeMap<_, _>>()
                .into_iter()
                .collect::<Vec<_>>()
        });
        (sps, edges)
    })
}

proptest! {
    #[test]
    fn grown_state_has_nothing_to_merge((sps, edges) in case(), tau in prop_oneof![Just(0.3), Just(0.5), Just(0.6)]) {
        let n = sps.len();
        let adj = SuperpointAdjacency::from_pairs(n, edges.iter().map(|&(p, _)| p));
        let g = AffinityGraph::from_affinities(n, edges.iter().copied());
        for uniform in [false, true] {
            let st = if uniform {
                grow(&sps, &adj, &g, tau, &UniformWeighting)
            } else {
                grow(&sps, &adj, &g, tau, &CountOverDistance::default())
            };
            let mut a = st.assignment.clone();
            let merges = if uniform {
                merge_regions(&mut a, &g, &sps, tau, &UniformWeighting)
            } else {
                merge_regions(&mut a, &g, &sps, tau, &CountOverDistance::default())
            };
            prop_assert!(merges.is_empty(), "{merges:?}");
            prop_assert_eq!(a, st.assignment);
        }
    }
}
