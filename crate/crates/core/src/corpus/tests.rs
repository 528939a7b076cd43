use std::collections::BTreeMap;

use super::*;
use crate::autodiff::Tensor;
use crate::dsp::{stft, wav_write, Waveform};

const LINE: &str = r#"{"id":"u1","text":"abc","emotion":"sad","wav_path":"u1.wav"}"#;

fn small_audio() -> AudioConfig {
    AudioConfig { sample_rate: 8000, win_length: 400, hop_length: 100, n_fft: 512, n_mels: 40, ..Default::default() }
}

fn small_spec() -> SyntheticSpec {
    SyntheticSpec { sample_rate: 8000, ..Default::default() }
}

#[test]
fn manifest_line_parses() {
    let e = parse_manifest(&format!("{LINE}\n\n")).unwrap();
    assert_eq!(
        e,
        vec![ManifestEntry { id: "u1".into(), text: "abc".into(), emotion: "sad".into(), wav_path: "u1.wav".into() }]
    );
    assert_eq!(e[0].emotion().unwrap(), Emotion::Sad);
    assert_eq!(manifest_string(&e), format!("{LINE}\n"));
}

#[test]
fn manifest_rejections() {
    let bored = LINE.replace("sad", "bored");
    let err = parse_manifest(&bored).unwrap_err().to_string();
    assert!(err.contains("neutral, angry, fear, happy, sad, surprise") && err.contains("u1"), "{err}");

    let long = LINE.replace("abc", &"a".repeat(201));
    let err = parse_manifest(&long).unwrap_err().to_string();
    assert!(err.contains("200-character cap") && err.contains("u1"), "{err}");
    parse_manifest(&LINE.replace("abc", &"a".repeat(200))).unwrap();

    let dup = format!("{LINE}\n{LINE}\n");
    assert!(parse_manifest(&dup).unwrap_err().to_string().contains("line 2: duplicate id"));

    let broken = format!("{LINE}\n{{\"id\": 3\n");
    assert!(matches!(parse_manifest(&broken), Err(Error::Data(m)) if m.contains("line 2")));
    let extra = LINE.replace("}", r#","speaker":"x"}"#);
    assert!(parse_manifest(&extra).is_err());
    let missing = r#"{"id":"u1","text":"abc","emotion":"sad"}"#;
    assert!(parse_manifest(missing).is_err());
}

#[test]
fn vocabulary_must_cover_texts() {
    let e = parse_manifest(&LINE.replace("abc", "abz")).unwrap();
    let v = Vocab::new("abcdefghij").unwrap();
    assert!(matches!(check_vocab(&e, &v), Err(Error::Config(m)) if m.contains("u1") && m.contains("'z'")));
    check_vocab(&parse_manifest(LINE).unwrap(), &v).unwrap();
}

#[test]
fn run_config_cross_checks() {
    RunConfig::default().validate().unwrap();
    let mut c = RunConfig::default();
    c.model.n_mels = 40;
    assert!(matches!(c.validate(), Err(Error::Config(m)) if m.contains("n_mels")));
    let mut c = RunConfig::default();
    c.audio.n_fft = 2048;
    assert!(matches!(c.validate(), Err(Error::Config(m)) if m.contains("linear_bins")));
    let err = RunConfig::from_json(r#"{"train": {"lr": 0.01}, "extra": 1}"#).unwrap_err();
    assert!(err.to_string().contains("extra"));
    let c = RunConfig::from_json(r#"{"train": {"lr": 0.01, "mode": "teacher"}, "seed": 4}"#).unwrap();
    assert_eq!((c.train.lr, c.seed, c.model.r), (0.01, 4, 2));
}

fn dominant_hz(w: &Waveform<f64>, audio: &AudioConfig) -> (usize, f64) {
    let s = stft(w, audio).unwrap();
    let bins = s.magnitude.cols();
    let mut energy = vec![0.0; bins];
    for t in 0..s.magnitude.rows() {
        for (k, v) in s.magnitude.row_slice(t).iter().enumerate() {
            energy[k] += v * v;
        }
    }
    let k = (0..bins).max_by(|&a, &b| energy[a].total_cmp(&energy[b])).unwrap();
    (k, k as f64 * audio.sample_rate as f64 / audio.n_fft as f64)
}

#[test]
fn single_character_is_one_tone() {
    let spec = SyntheticSpec::default();
    let audio = AudioConfig::default();
    let w = spec.render("a", Emotion::Neutral).unwrap();
    assert_eq!(w.len(), 1600);
    assert!(w.samples[0].abs() < 1e-3 && w.samples[1599].abs() < 1e-3);
    let (k, _) = dominant_hz(&w, &audio);
    assert_eq!(k, (200.0f64 * 1024.0 / 16000.0).round() as usize);

    let happy = spec.render("a", Emotion::Happy).unwrap();
    assert_eq!(happy.len(), 1520);
    let (kh, _) = dominant_hz(&happy, &audio);
    let bin = 16000.0 / 1024.0;
    assert!(((kh as f64 * bin) / (k as f64 * bin) - 1.2).abs() <= bin / (k as f64 * bin) + 1e-12);
}

#[test]
fn generator_limits() {
    let spec = SyntheticSpec { char_ms: 1000.0, ..Default::default() };
    let err = spec.render("abcdefghij", Emotion::Sad).unwrap_err();
    assert!(err.to_string().contains("8.7"), "{err}");
    let mut bad = SyntheticSpec::default();
    bad.styles[2].pitch = 0.0;
    assert!(bad.validate().is_err());
    let low = SyntheticSpec { sample_rate: 1000, ..Default::default() };
    assert!(matches!(low.validate(), Err(Error::Config(m)) if m.contains("Nyquist")));
    let dir = tempfile::tempdir().unwrap();
    assert!(generate_synthetic_corpus(0, &spec, 1, dir.path()).is_err());
    assert!(matches!(spec.render("ak", Emotion::Sad), Err(Error::Vocab { ch: 'k', pos: 1 })));
}

fn read_dir_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect()
}

#[test]
fn generated_corpus_is_deterministic_and_balanced() {
    let (a, b, c) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let spec = small_spec();
    let m = generate_synthetic_corpus(8, &spec, 42, a.path()).unwrap();
    generate_synthetic_corpus(8, &spec, 42, b.path()).unwrap();
    generate_synthetic_corpus(8, &spec, 43, c.path()).unwrap();
    assert_eq!(read_dir_bytes(a.path()), read_dir_bytes(b.path()));
    assert_ne!(read_dir_bytes(a.path()), read_dir_bytes(c.path()));
    let entries = load_manifest(&m).unwrap();
    assert_eq!(entries.len(), 8);
    let first: Vec<_> = entries[..6].iter().map(|e| e.emotion().unwrap()).collect();
    for e in Emotion::ALL {
        assert!(first.contains(&e));
    }
    assert_ne!(entries[6].emotion, entries[7].emotion);
    for e in &entries {
        let n = e.text.len();
        assert!((3..=12).contains(&n));
        assert!(e.text.chars().all(|c| ('a'..='j').contains(&c)));
    }
}

#[test]
fn preprocessing_trims_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let spec = small_spec();
    let audio = small_audio();
    let m = generate_synthetic_corpus(6, &spec, 7, dir.path()).unwrap();
    let entries = load_manifest(&m).unwrap();
    let vocab = Vocab::new("abcdefghij").unwrap();
    let (cache, summary) = preprocess_corpus(&entries, dir.path(), &audio, &vocab).unwrap();
    assert_eq!((summary.kept, summary.skipped.len()), (6, 0));
    for (e, r) in entries.iter().zip(&cache.records) {
        let raw = crate::dsp::wav_read::<f64>(dir.path().join(&e.wav_path)).unwrap();
        let untrimmed = stft(&raw, &audio).unwrap().magnitude.rows();
        assert!(r.mel.rows() < untrimmed, "{}: {} vs {untrimmed}", e.id, r.mel.rows());
        assert_eq!(r.mel.cols(), 40);
        assert_eq!(r.linear.shape(), &[r.mel.rows(), 257]);
        assert!(r.mel.data().iter().chain(r.linear.data()).all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(r.ids, vocab.encode(&e.text).unwrap());
    }
    let bytes = cache_bytes(&cache);
    assert_eq!(parse_cache(&bytes).unwrap(), cache);
    let path = dir.path().join("features.ettc");
    write_cache(&path, &cache).unwrap();
    assert_eq!(read_cache(&path).unwrap(), cache);
    let (again, _) = preprocess_corpus(&entries, dir.path(), &audio, &vocab).unwrap();
    assert_eq!(cache_bytes(&again), bytes);

    let mut bad = bytes.clone();
    bad[3] = b'X';
    assert!(matches!(parse_cache(&bad), Err(Error::Format(m)) if m.contains("magic")));
    assert!(matches!(parse_cache(&bytes[..bytes.len() - 1]), Err(Error::Format(m)) if m.contains("truncated")));
}

#[test]
fn preprocessing_skips_bad_entries() {
    let dir = tempfile::tempdir().unwrap();
    let audio = small_audio();
    let sr = 8000;
    let tone = |secs: f64| {
        let n = (secs * sr as f64) as usize;
        Waveform::new((0..n).map(|i| 0.5 * (i as f64 * 0.2).sin()).collect(), sr).unwrap()
    };
    wav_write(dir.path().join("long.wav"), &tone(9.0)).unwrap();
    wav_write(dir.path().join("ok.wav"), &tone(0.5)).unwrap();
    wav_write(dir.path().join("quiet.wav"), &Waveform::new(vec![0.0; 4000], sr).unwrap()).unwrap();
    let entry = |id: &str, wav: &str| ManifestEntry {
        id: id.into(),
        text: "abc".into(),
        emotion: "fear".into(),
        wav_path: wav.into(),
    };
    let entries =
        vec![entry("long", "long.wav"), entry("ok", "ok.wav"), entry("quiet", "quiet.wav"), entry("gone", "gone.wav")];
    let vocab = Vocab::new("abc").unwrap();
    let (cache, summary) = preprocess_corpus(&entries, dir.path(), &audio, &vocab).unwrap();
    assert_eq!(cache.records.len(), 1);
    assert_eq!(cache.records[0].id, "ok");
    let reasons: BTreeMap<_, _> = summary.skipped.iter().cloned().collect();
    assert!(reasons["long"].contains("8.7"));
    assert!(reasons.contains_key("quiet") && reasons.contains_key("gone"));
    assert!((summary.total_hours * 3600.0 - 0.5).abs() < 0.1);

    let none = vec![entry("quiet", "quiet.wav")];
    assert!(matches!(preprocess_corpus(&none, dir.path(), &audio, &vocab), Err(Error::Data(_))));
    let wrong_rate = AudioConfig { sample_rate: 16000, ..audio };
    let err = preprocess_corpus(&entries[1..2], dir.path(), &wrong_rate, &vocab).unwrap_err();
    assert!(matches!(err, Error::Data(_)));
}

#[test]
fn cache_records_become_examples() {
    let r = CacheRecord {
        id: "x".into(),
        text: "ab".into(),
        emotion: Emotion::Surprise,
        ids: vec![2, 3],
        mel: Tensor::zeros(&[3, 2]),
        linear: Tensor::zeros(&[3, 5]),
    };
    let ex = r.example();
    assert_eq!((ex.ids, ex.emotion, ex.mel.shape().to_vec()), (vec![2, 3], Emotion::Surprise, vec![3, 2]));
}
