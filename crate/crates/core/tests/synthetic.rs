use rrg_uq::factuality::{score_pairs, EntityF1Scorer};
use rrg_uq::parser::{annotate, AnnotationSource, Lexicon};
use rrg_uq::synth::{self, SynthConfig};
use rrg_uq::uq;

fn mean_uncertainty(cfg: &SynthConfig) -> (f64, f64) {
    let corpus = synth::generate(cfg).unwrap();
    let sets = corpus.sample_sets();
    let store = annotate(&sets, AnnotationSource::Lexicon(&Lexicon::default_radiology())).unwrap();
    let scores = score_pairs(&sets, Some(&store), &EntityF1Scorer).unwrap();
    let table = uq::compute_uq(&sets, &store, &scores).unwrap();
    let report = table.reports.iter().map(|r| r.u).sum::<f64>() / table.reports.len() as f64;
    let sentence = table.sentences.iter().map(|s| s.u).sum::<f64>() / table.sentences.len() as f64;
    (report, sentence)
}

#[test]
fn sentence_uncertainty_tracks_the_corruption_rate() {
    let cfg = SynthConfig {
        n_cases: 200,
        t: 10,
        corruption_rate: 0.3,
        seed: 7,
        ..SynthConfig::default()
    };
    let (_, sentence) = mean_uncertainty(&cfg);
    assert!((sentence - 0.3).abs() < 0.05, "mean sentence u {sentence}");
}

#[test]
fn report_uncertainty_rises_with_corruption() {
    let mut last = -1.0;
    for p in [0.0, 0.2, 0.4, 0.6, 0.8, 1.0] {
        let (report, _) = mean_uncertainty(&SynthConfig {
            n_cases: 150,
            corruption_rate: p,
            seed: 11,
            ..SynthConfig::default()
        });
        assert!(report > last, "p={p}: {report} <= {last}");
        last = report;
    }
}

#[test]
fn written_corpus_round_trips_through_the_sidecar() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = synth::generate(&SynthConfig {
        n_cases: 25,
        hallucination_rate: 0.3,
        ..SynthConfig::default()
    })
    .unwrap();
    corpus.write(tmp.path()).unwrap();
    let back = synth::load_sidecar(tmp.path().join("sidecar.jsonl")).unwrap();
    assert_eq!(back.len(), 25);
    for (a, b) in back.iter().zip(&corpus.cases) {
        assert_eq!(a.case_id, b.sidecar.case_id);
        assert_eq!(a.correctness, b.sidecar.correctness);
    }
}
