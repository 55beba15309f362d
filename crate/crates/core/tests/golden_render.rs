//! Snapshot test for the sequence index plot: a fixed tiny corpus must
//! render byte-identically to the committed golden file.
//!
//! Regenerate with `BLESS_GOLDEN=1 cargo test -p mcsa-core --test
//! golden_render` after verifying the new render by eye.

use mcsa_core::clustering::Partition;
use mcsa_core::render::sequence_index_plot;
use mcsa_core::scheme::{build_sequences, CodedEvent, CodingScheme, ConflictPolicy, Modality};

fn fixed_corpus() -> (CodingScheme, Vec<CodedEvent>) {
    let ev = |sid: &str, unit: u64, codes: &[&str]| CodedEvent {
        session_id: sid.into(),
        unit_index: unit,
        actor_id: "a1".into(),
        modality: Modality::Verbal,
        codes: codes.iter().map(|c| c.to_string()).collect(),
    };
    let events = vec![
        ev("g01", 0, &["Int-C", "KS"]),
        ev("g01", 1, &["GSP"]),
        ev("g01", 2, &[]),
        ev("g01", 3, &["CM", "Int-B"]),
        ev("g01", 4, &["ALR"]),
        ev("g02", 0, &["Int-C"]),
        ev("g02", 1, &["KM", "FC"]),
        ev("g02", 2, &["OB"]),
        ev("g03", 0, &["TU"]),
        ev("g03", 1, &["RM", "EPI"]),
        ev("g03", 2, &["KD"]),
        ev("g03", 3, &["MR"]),
    ];
    (CodingScheme::default_scheme(), events)
}

#[test]
fn sequence_index_plot_matches_golden() {
    let (scheme, events) = fixed_corpus();
    let seqs = build_sequences(&events, &scheme, ConflictPolicy::Error).unwrap();
    let partition = Partition::new(
        vec!["g01".into(), "g02".into(), "g03".into()],
        vec![1, 2, 2],
    )
    .unwrap();
    let svg = sequence_index_plot(&seqs, &partition, &scheme);

    let golden_path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/golden/sequence_index.svg");
    if std::env::var_os("BLESS_GOLDEN").is_some() {
        std::fs::create_dir_all(std::path::Path::new(golden_path).parent().unwrap()).unwrap();
        std::fs::write(golden_path, &svg).unwrap();
        return;
    }
    let golden = std::fs::read_to_string(golden_path).expect("golden file present");
    assert_eq!(svg, golden, "render drifted from the golden snapshot");
}
