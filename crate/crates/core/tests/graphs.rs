use ne_gossip::digraph::{
    check_assumption_6, check_lemma_3, random_interference_pair, random_strongly_connected,
    transitive_reduction, Digraph,
};
use ne_gossip::game::{social_communication_graph, social_follower_graph, social_interference};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn social_graphs() {
    let f = social_follower_graph();
    assert_eq!(f.edge_count(), 8);
    assert!(f.is_strongly_connected());
    assert_eq!(f.in_neighbors(4).unwrap(), vec![5]);
    let g_c = social_communication_graph();
    assert_eq!(g_c.in_neighbors(4).unwrap(), vec![3, 5]);
    let g_i = social_interference(&f);
    assert!(g_i.is_strongly_connected());
    assert!(check_assumption_6(&g_c, &g_i).unwrap().holds);
    assert!(check_lemma_3(&g_c, &g_i).unwrap().holds);
    // the follower graph alone cannot relay player 2 to player 4
    let l3 = check_lemma_3(&f, &g_i).unwrap();
    assert!(!l3.holds);
    assert_eq!(l3.failing_players[0].player, 4);
    assert_eq!(l3.failing_players[0].unreachable, vec![2]);
}

#[test]
fn reachability_certificate_on_random_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..50 {
        let n = rng.random_range(2..=8);
        let (g_c, g_i) = random_interference_pair(n, 0.3, 0.3, &mut rng);
        assert!(check_assumption_6(&g_c, &g_i).unwrap().holds);
        assert!(check_lemma_3(&g_c, &g_i).unwrap().holds);
        assert!(check_lemma_3(&g_i, &g_i).unwrap().holds);
    }
}

#[test]
fn reduction_of_complete_four() {
    let k4 = Digraph::complete(4);
    let tr = transitive_reduction(&k4);
    assert!(tr.is_strongly_connected());
    assert!(check_assumption_6(&tr, &k4).unwrap().holds);
    assert!(check_lemma_3(&tr, &k4).unwrap().holds);
}

#[test]
fn missing_reduction_edge_is_reported() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let g_i = random_strongly_connected(5, 0.3, &mut rng);
    let tr = transitive_reduction(&g_i);
    let (a, b) = tr.edges()[0];
    let g_c = Digraph::from_edges(5, tr.edges().into_iter().filter(|&e| e != (a, b))).unwrap();
    let rep = check_assumption_6(&g_c, &g_i).unwrap();
    assert!(!rep.holds);
    assert!(rep.violations.iter().any(|v| v.edge == (a, b)));
}
