use lipmap_core::corpus::{
    generate_synthetic_corpus, load_corpus, load_dictionary, make_folds, read_folds, write_corpus,
    write_folds, SynthSpec,
};

#[test]
fn synthetic_corpus_survives_a_disk_round_trip() {
    let synth = generate_synthetic_corpus(&SynthSpec::desk_scale(2, 6, 4.0, 3)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_corpus(&synth.corpus, dir.path(), &["seed: 3".into()]).unwrap();
    let dict = load_dictionary(dir.path().join("dict.txt")).unwrap();
    let loaded = load_corpus(&manifest, dict).unwrap();
    assert_eq!(loaded.utterances(), synth.corpus.utterances());
    assert_eq!(loaded.dict(), synth.corpus.dict());
}

#[test]
fn folds_survive_a_round_trip() {
    let synth = generate_synthetic_corpus(&SynthSpec::desk_scale(2, 12, 4.0, 5)).unwrap();
    let folds = make_folds(&synth.corpus, 4, 5).unwrap();
    let text = write_folds(&folds, &[]);
    assert_eq!(read_folds(&text, "folds").unwrap(), folds);
    folds.covers(&synth.corpus).unwrap();
}

#[test]
fn missing_manifest_is_an_io_error() {
    let synth = generate_synthetic_corpus(&SynthSpec::desk_scale(1, 2, 4.0, 1)).unwrap();
    let err = load_corpus("/nonexistent/manifest.tsv", synth.corpus.dict().clone()).unwrap_err();
    assert!(matches!(err, lipmap_core::Error::Io { .. }));
}
