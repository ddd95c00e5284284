use stepprover::io::{
    parse_suite, read_corpus, read_preferences, read_traces, suite_text, write_corpus, write_preferences, write_traces,
};
use stepprover::{checkpoint, config::RunConfig, harness};
use stepprover_core::bench::{generate_benchmark, TierMix};
use stepprover_core::curation::{extract_preferences, extract_sft, label_tree, PreferenceConfig, SourceTag};
use stepprover_core::search::{best_first_search, SearchConfig};
use stepprover_core::PolicyParams;
use rand::SeedableRng;

/// A small trained policy so traces contain proofs, invalid and valid edges.
fn trained() -> PolicyParams {
    let mut c = RunConfig::default();
    c.apply_text(include_str!("../../../configs/desk.conf")).unwrap();
    c.ei_rounds = 1;
    c.pass_n = 1;
    c.seed = 2;
    let suite = generate_benchmark(40, &TierMix::EASY_MEDIUM, 2).unwrap();
    harness::run_expert_iteration(&c, &suite).unwrap().final_params().clone()
}

#[test]
fn traces_corpus_and_pairs_round_trip() {
    let params = trained();
    let suite = generate_benchmark(12, &TierMix::EASY_MEDIUM, 9).unwrap();
    let trees: Vec<_> = suite
        .goals
        .iter()
        .enumerate()
        .map(|(i, g)| {
            let cfg = SearchConfig { rng_seed: i as u64, node_budget: 30, ..SearchConfig::default() };
            (label_tree(&best_first_search(&params, &g.goal, &cfg).unwrap()), cfg)
        })
        .collect();
    assert!(trees.iter().any(|(t, _)| t.is_proved()));
    assert!(trees.iter().any(|(t, _)| !t.is_proved()));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.jsonl");
    write_traces(&path, &trees).unwrap();
    let back = read_traces(&path).unwrap();
    for ((a, ac), (b, bc)) in back.iter().zip(&trees) {
        assert_eq!(ac, bc);
        assert_eq!(a.nodes, b.nodes, "nodes of {}", b.goal.serialize());
        assert_eq!(a.edges, b.edges);
    }
    assert_eq!(back, trees);

    let mut corpus = Vec::new();
    let mut pairs = Vec::new();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    for (t, _) in &trees {
        corpus.extend(extract_sft(t, SourceTag::EiRound(3)));
        pairs.extend(extract_preferences(t, &params, &PreferenceConfig::default(), &mut rng).unwrap());
    }
    assert!(!corpus.is_empty() && !pairs.is_empty());
    let cp = dir.path().join("c.jsonl");
    write_corpus(&cp, &corpus, &params).unwrap();
    assert_eq!(read_corpus(&cp).unwrap(), corpus);
    let pp = dir.path().join("p.jsonl");
    write_preferences(&pp, &pairs).unwrap();
    assert_eq!(read_preferences(&pp).unwrap(), pairs);

    let ck = dir.path().join("w.bin");
    checkpoint::save(&params, &ck).unwrap();
    assert_eq!(checkpoint::load(&ck).unwrap(), params);
}

#[test]
fn suite_file_round_trips() {
    let suite = generate_benchmark(30, &TierMix::ALL, 4).unwrap();
    assert_eq!(parse_suite(&suite_text(&suite)).unwrap(), suite);
}

#[test]
fn corrupt_trace_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.jsonl");
    std::fs::write(&path, "{\"record\":\"transition\"}\n").unwrap();
    let err = read_traces(&path).unwrap_err();
    assert_eq!(err.exit_code(), 2);
}
