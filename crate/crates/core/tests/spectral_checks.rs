use nalgebra::DVector;
use ne_gossip::digraph::{
    random_interference_pair, random_strongly_connected, transitive_reduction, Digraph,
};
use ne_gossip::game::{
    social_communication_graph, social_follower_graph, social_media_game, SocialParams,
};
use ne_gossip::layout::EstimateLayout;
use ne_gossip::spectral::*;
use ne_gossip::Parallelism;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEQ: Parallelism = Parallelism::Sequential;

fn social_pair() -> (Digraph, Digraph) {
    let (_, g_i) = social_media_game(&social_follower_graph(), &SocialParams::reference()).unwrap();
    (social_communication_graph(), g_i)
}

#[test]
fn complete_expectation_is_symmetric_psd() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..20 {
        let n = rng.random_range(2..=6);
        let g = random_strongly_connected(n, 0.3, &mut rng);
        let e = expected_qtq_complete(&g, SEQ).unwrap();
        assert!(max_asymmetry(&e) < 1e-12);
        let s = symmetric_spectrum(&e);
        assert!(s.min >= -1e-10);
        assert!(s.max > 0.0 && s.max < 1.0);
    }
}

#[test]
fn consensus_directions_strictly_contract() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for g in [Digraph::ring(3), Digraph::complete(4), Digraph::ring(5)] {
        let n = g.n();
        let e = expected_qtq_complete(&g, SEQ).unwrap();
        for _ in 0..20 {
            let y: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let x = DVector::from_fn(n * n, |k, _| y[k % n]);
            assert!(x.dot(&(&e * &x)) < x.dot(&x));
        }
    }
}

#[test]
fn gamma_examples() {
    for g in [
        Digraph::ring(3),
        Digraph::ring(5),
        Digraph::complete(4),
        Digraph::complete(2),
    ] {
        let gamma = gamma_complete(&g, SEQ).unwrap();
        assert!(gamma > 0.0 && gamma < 1.0 - 1e-6, "{gamma}");
    }
}

#[test]
fn disconnected_graph_is_refused() {
    let g = Digraph::from_edges(4, [(1, 2), (2, 1), (3, 4), (4, 3)]).unwrap();
    assert!(gamma_complete(&g, SEQ).is_err());
    let e = expected_qtq_complete_unchecked(&g, SEQ).unwrap();
    assert!(symmetric_spectrum(&e).max >= 1.0 - 1e-9);
}

#[test]
fn estimate_mapping_is_invariant_on_social_and_random_pairs() {
    let (g_c, g_i) = social_pair();
    let layout = EstimateLayout::build(&g_i).unwrap();
    assert_eq!(check_lemma_4(&layout, &g_c).unwrap(), 0.0);
    assert!(check_lemma_4_with(&layout, &g_c, &layout.h_dense(false)).unwrap() > 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let n = rng.random_range(2..=6);
        let g_i = random_strongly_connected(n, 0.35, &mut rng);
        let g_c = transitive_reduction(&g_i);
        let layout = EstimateLayout::build(&g_i).unwrap();
        assert_eq!(check_lemma_4(&layout, &g_c).unwrap(), 0.0);
    }
}

#[test]
fn gamma_partial_on_social_pair() {
    let (g_c, g_i) = social_pair();
    let layout = EstimateLayout::build(&g_i).unwrap();
    let e = expected_qtq_partial(&layout, &g_c, &g_i, SEQ).unwrap();
    let s = symmetric_spectrum(&e);
    assert!(s.min >= -1e-10);
    assert!(s.max > 0.0 && s.max < 1.0 - 1e-6, "{}", s.max);
}

#[test]
fn gamma_partial_random_sweep() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..50 {
        let n = rng.random_range(2..=6);
        let g_i = random_strongly_connected(n, 0.35, &mut rng);
        let g_c = transitive_reduction(&g_i);
        let layout = EstimateLayout::build(&g_i).unwrap();
        if layout.m() > 40 {
            continue;
        }
        let gamma = gamma_partial(&layout, &g_c, &g_i, SEQ).unwrap();
        assert!(gamma > 0.0 && gamma < 1.0, "{gamma}");
    }
}

#[test]
fn gamma_partial_needs_the_reduction_condition() {
    // communication misses a reduction edge of the interference graph
    let g_i = Digraph::from_edges(3, [(1, 2), (2, 3), (3, 1), (1, 3)]).unwrap();
    let g_c = Digraph::from_edges(3, [(1, 2), (2, 3), (1, 3)]).unwrap();
    let layout = EstimateLayout::build(&g_i).unwrap();
    assert!(gamma_partial(&layout, &g_c, &g_i, SEQ).is_err());
}

#[test]
fn partial_matches_complete_for_complete_interference() {
    for n in 2..=3 {
        for g_c in [Digraph::ring(n), Digraph::complete(n)] {
            let g_i = Digraph::complete(n);
            let layout = EstimateLayout::build(&g_i).unwrap();
            let a = gamma_partial(&layout, &g_c, &g_i, SEQ).unwrap();
            let b = gamma_complete(&g_c, SEQ).unwrap();
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn monte_carlo_reproduces_exact_expectation() {
    let g = Digraph::from_edges(3, [(1, 2), (2, 3), (3, 1), (1, 3)]).unwrap();
    let exact = expected_qtq_complete(&g, SEQ).unwrap();
    let mc = monte_carlo(&g, 100_000, 5, |ev| {
        let q = q_complete(3, ev)?;
        Ok(q.transpose() * q)
    })
    .unwrap();
    assert!(
        mc.max_z(&exact, 1e-12) <= 3.0,
        "{}",
        mc.max_z(&exact, 1e-12)
    );

    let (g_c, g_i) = social_pair();
    let layout = EstimateLayout::build(&g_i).unwrap();
    let exact = expected_qtq_partial(&layout, &g_c, &g_i, SEQ).unwrap();
    let mc = monte_carlo(&g_c, 100_000, 6, |ev| {
        let q = q_partial(&layout, ev)?;
        Ok(q.transpose() * q)
    })
    .unwrap();
    assert!(
        mc.max_z(&exact, 1e-12) <= 3.0,
        "{}",
        mc.max_z(&exact, 1e-12)
    );
}

#[test]
fn sequential_and_parallel_reductions_are_identical() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (g_c, g_i) = random_interference_pair(6, 0.3, 0.5, &mut rng);
    let layout = EstimateLayout::build(&g_i).unwrap();
    let a = expected_qtq_partial(&layout, &g_c, &g_i, Parallelism::Sequential).unwrap();
    let b = expected_qtq_partial(&layout, &g_c, &g_i, Parallelism::Parallel).unwrap();
    assert_eq!(a, b);
}

#[test]
fn size_guardrail() {
    let g = Digraph::ring(13);
    assert!(matches!(
        gamma_complete(&g, SEQ),
        Err(ne_gossip::Error::TooLarge(_))
    ));
    assert!(spectral_report(&g, &Digraph::complete(13), false, SEQ).is_err());
    let r = spectral_report(&g, &Digraph::complete(13), true, SEQ).unwrap();
    assert_eq!(r.method, SpectralMethod::PowerIteration);
    assert!(r.gamma < 1.0);
    assert!(r.eigen_residual.unwrap() < 1e-6);
}

#[test]
fn gamma_partial_can_exceed_one_on_a_valid_pair() {
    // satisfies both graph conditions yet E[QᵀQ] has an eigenvalue above one;
    // reference values from an independent dense computation
    let g_i = Digraph::from_edges(
        6,
        [
            (1, 4),
            (1, 5),
            (2, 1),
            (2, 3),
            (2, 5),
            (2, 6),
            (3, 1),
            (3, 4),
            (3, 6),
            (4, 2),
            (4, 3),
            (4, 6),
            (5, 1),
            (5, 4),
            (6, 3),
            (6, 4),
            (6, 5),
        ],
    )
    .unwrap();
    let g_c = transitive_reduction(&g_i);
    let layout = EstimateLayout::build(&g_i).unwrap();
    let reduced = gamma_partial(&layout, &g_c, &g_i, SEQ).unwrap();
    assert!((reduced - 1.0039768797920976).abs() < 1e-12, "{reduced}");
    let full = gamma_partial(&layout, &g_i, &g_i, SEQ).unwrap();
    assert!((full - 1.0019359401574983).abs() < 1e-12, "{full}");
}
