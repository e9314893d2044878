use bridgewatch::ingest::{link_cross_chain, parse_records, parse_pairs, BridgeConfig};
use bridgewatch::metapath::{enumerate_range, label_frequencies, FreqMode, MetaPath};
use bridgewatch::synthgen::{gen_corpus, write_corpus, CorpusSpec};
use bridgewatch::xbhg::{build_graphs, HashingEmbedder};
use bridgewatch::{Label, NodeType};

fn spec() -> CorpusSpec {
    CorpusSpec {
        seed: 42,
        n_normal: 400,
        n_per_attack_class: 60,
        ..Default::default()
    }
}

#[test]
fn files_round_trip_through_ingest_without_warnings() {
    let small = CorpusSpec {
        n_normal: 30,
        n_per_attack_class: 5,
        ..spec()
    };
    let corpus = gen_corpus(&small).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_corpus(&corpus, dir.path()).unwrap();
    let parsed = parse_records(dir.path().join("records.jsonl")).unwrap();
    assert!(parsed.errors.is_empty());
    assert_eq!(parsed.records, corpus.records);
    let pairs = parse_pairs(dir.path().join("pairs.jsonl")).unwrap();
    let config = BridgeConfig::load(dir.path().join("bridge_config.json")).unwrap();
    assert_eq!(config, corpus.config);
    let linked = link_cross_chain(&parsed.records, &pairs, false).unwrap();
    assert!(linked.warnings.is_empty());
    assert_eq!(linked.behaviors.len(), 45);
    let (graphs, warnings) = build_graphs(&linked.behaviors, &config, &HashingEmbedder::new(16)).unwrap();
    assert!(warnings.is_empty());
    for g in &graphs {
        g.validate().unwrap();
    }

    let again = tempfile::tempdir().unwrap();
    write_corpus(&gen_corpus(&small).unwrap(), again.path()).unwrap();
    for f in ["records.jsonl", "pairs.jsonl", "bridge_config.json"] {
        assert_eq!(
            std::fs::read(dir.path().join(f)).unwrap(),
            std::fs::read(again.path().join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn attack_signatures_separate_classes() {
    let corpus = gen_corpus(&spec()).unwrap();
    assert_eq!(corpus.behaviors.len(), 580);
    let (graphs, warnings) = build_graphs(&corpus.behaviors, &corpus.config, &HashingEmbedder::new(8)).unwrap();
    assert!(warnings.is_empty());
    let paths = enumerate_range(2, 4, &NodeType::ALL).unwrap();
    let table = label_frequencies(graphs.iter().map(|g| (g, g.label.unwrap())), &paths, FreqMode::Indicator).unwrap();
    let entry = |s: &str| {
        let p: MetaPath = s.parse().unwrap();
        table.entries.iter().find(|e| e.path == p).unwrap().clone()
    };
    let oooo = entry("OOOO");
    assert!(oooo.fre_a > oooo.fre_n);
    assert!(oooo.fre_diff > 0.5, "{oooo:?}");
    let rtl = entry("RTL");
    assert!(rtl.fre_diff > 0.5, "{rtl:?}");
    let n_normal = graphs.iter().filter(|g| g.label == Some(Label::Normal)).count();
    assert_eq!(n_normal, 400);
    for p in ["OOOO", "RTL", "URT", "URL", "OROO"] {
        let e = entry(p);
        eprintln!("{p}: fre_A {:.3} fre_N {:.3} diff {:.3}", e.fre_a, e.fre_n, e.fre_diff);
    }
}
