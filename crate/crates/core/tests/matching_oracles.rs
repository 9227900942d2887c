mod common;

use gatqec::matching::{self, all_pairs_defect_distances, min_weight_matching, DecodingGraph, DefectDistances};
use gatqec::{sampler, Error};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Every simple path from `from`, by depth-first enumeration. The boundary ends paths.
fn simple_path_distances(g: &DecodingGraph, from: usize) -> Vec<Option<u64>> {
    fn dfs(g: &DecodingGraph, at: usize, len: u64, seen: &mut [bool], best: &mut [Option<u64>]) {
        if best[at].is_none_or(|b| len < b) {
            best[at] = Some(len);
        }
        if at == g.boundary() {
            return;
        }
        for e in &g.edges {
            let next = if e.u == at {
                e.v
            } else if e.v == at {
                e.u
            } else {
                continue;
            };
            if !seen[next] {
                seen[next] = true;
                dfs(g, next, len + e.weight as u64, seen, best);
                seen[next] = false;
            }
        }
    }
    let mut seen = vec![false; g.n_nodes()];
    seen[from] = true;
    let mut best = vec![None; g.n_nodes()];
    dfs(g, from, 0, &mut seen, &mut best);
    best
}

#[test]
fn dijkstra_matches_simple_path_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..30 {
        let g = common::random_integer_graph(&mut rng, 9);
        let fw = common::floyd_warshall(&g);
        for (src, fw_row) in fw.iter().enumerate().take(g.n_detectors) {
            let brute = simple_path_distances(&g, src);
            let paths = g.shortest_paths(src);
            for dst in 0..g.n_nodes() {
                let got = paths[dst].as_ref().map(|p| p.distance as u64);
                assert_eq!(got, brute[dst], "src {src} dst {dst}");
                assert_eq!(got, fw_row[dst]);
            }
        }
    }
}

fn check_random_instance(rng: &mut ChaCha8Rng, max_defects: usize) {
    let n_det = rng.gen_range(max_defects.max(2)..=max_defects + 6);
    let g = common::random_integer_graph(rng, n_det);
    let k = rng.gen_range(1..=max_defects);
    let mut defects = sample(rng, n_det, k).into_vec();
    defects.sort_unstable();
    let fw = common::floyd_warshall(&g);
    let pair: Vec<Vec<Option<u64>>> = defects
        .iter()
        .map(|&a| defects.iter().map(|&b| fw[a][b]).collect())
        .collect();
    let boundary: Vec<Option<u64>> = defects.iter().map(|&a| fw[a][g.boundary()]).collect();
    let expected = common::brute_force_matching(&pair, &boundary);

    let dist = all_pairs_defect_distances(&g, &defects).unwrap();
    match (min_weight_matching(&dist), expected) {
        (Ok(m), Some(w)) => {
            assert_eq!(m.weight, w as f64);
            let covered: usize = m.pairs.iter().map(|p| if p.1.is_some() { 2 } else { 1 }).sum();
            assert_eq!(covered, k);
        }
        (Err(Error::NoMatching(_)), None) => {}
        (got, want) => panic!("matcher {got:?} vs enumeration {want:?}"),
    }
}

#[test]
fn matching_equals_enumeration_with_six_defects() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..50 {
        check_random_instance(&mut rng, 6);
    }
}

#[test]
fn matching_equals_enumeration_up_to_eight_defects() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..200 {
        check_random_instance(&mut rng, 8);
    }
}

#[test]
fn matcher_rejects_too_many_defects() {
    let n = matching::MAX_DEFECTS + 1;
    let dist = DefectDistances::from_weights(vec![1.0; n * n], vec![1.0; n]).unwrap();
    assert!(matches!(min_weight_matching(&dist), Err(Error::Capacity { defects, .. }) if defects == n));
}

#[test]
fn decoder_tracks_the_maximum_likelihood_oracle() {
    let model = common::fixture_model();
    let graph = matching::build_decoding_graph(&model).unwrap();
    let ml = common::ml_decoder(&model);
    let (dets, obs) = sampler::sample(&model, 500, 99).unwrap();
    let (mut mwpm_ok, mut ml_ok) = (0, 0);
    for s in 0..500 {
        let truth = common::row_mask(obs.row(s));
        mwpm_ok += usize::from(matching::decode(&graph, dets.row(s)).unwrap() == truth);
        ml_ok += usize::from(ml[common::row_mask(dets.row(s)) as usize] == truth);
    }
    assert!(mwpm_ok + 25 >= ml_ok, "mwpm {mwpm_ok} ml {ml_ok}");
}

#[test]
fn evaluate_is_accurate_at_low_noise() {
    let model = common::fixture_model();
    let graph = matching::build_decoding_graph(&model).unwrap();
    let (dets, obs) = sampler::sample(&model, 2000, 5).unwrap();
    let report = matching::evaluate(&graph, &dets, &obs).unwrap();
    assert_eq!(report.shots, 2000);
    assert!(report.accuracy > 0.9, "{report:?}");
    assert!((report.accuracy + report.error_rate - 1.0).abs() < 1e-12);
}
