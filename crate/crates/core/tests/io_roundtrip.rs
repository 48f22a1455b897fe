use std::fs;

use adaptive_spectrogram::adaptive::{adapt, MultiFrameConfig};
use adaptive_spectrogram::export::{
    export_selection, export_spectrogram, parse_pgm, parse_selection, parse_spectrogram_csv,
    SpectrogramFormat,
};
use adaptive_spectrogram::resynth::{interior_error, reconstruct};
use adaptive_spectrogram::signal::{synth_test_signal, SignalKind};
use adaptive_spectrogram::wav::{read_wav, write_wav, WavFormat};

#[test]
fn wav_analysis_exports_and_resynthesis() {
    let dir = tempfile::tempdir().unwrap();
    let kind = SignalKind::PercussiveHarmonic;
    let x = synth_test_signal(kind, &kind.default_params(), 1.0, 44100.0, 5).unwrap();
    let wav = dir.path().join("x.wav");
    write_wav(&x, &wav, WavFormat::Float32).unwrap();
    let loaded = read_wav(&wav).unwrap();
    let x32: Vec<f64> = x.samples().iter().map(|v| *v as f32 as f64).collect();
    assert_eq!(loaded.samples(), &x32[..]);

    let a = adapt(&loaded, &MultiFrameConfig::default()).unwrap();
    let csv = dir.path().join("s.csv");
    let pgm = dir.path().join("s.pgm");
    let sel = dir.path().join("sel.txt");
    export_spectrogram(&a, SpectrogramFormat::Csv, &csv, -120.0).unwrap();
    export_spectrogram(&a, SpectrogramFormat::Pgm, &pgm, -120.0).unwrap();
    export_selection(&a.selection, &sel).unwrap();

    let table = parse_spectrogram_csv(&fs::read_to_string(&csv).unwrap()).unwrap();
    assert_eq!(table.rows.len(), a.num_frames() * (a.fft_size() / 2 + 1));
    let image = parse_pgm(&fs::read(&pgm).unwrap()).unwrap();
    assert_eq!(image.height, a.fft_size() / 2 + 1);
    assert!(image.pixels.contains(&255));
    let track = parse_selection(&fs::read_to_string(&sel).unwrap()).unwrap();
    assert_eq!(track.records.len(), a.selection.segments.len());
    assert!(track
        .records
        .windows(2)
        .all(|r| r[0].start_sec <= r[1].start_sec));

    let y = reconstruct(&a).unwrap();
    let out = dir.path().join("y.wav");
    write_wav(&y, &out, WavFormat::Float32).unwrap();
    let y32 = read_wav(&out).unwrap();
    assert!(interior_error(&loaded, &y, &a) < 1e-10);
    // float32 storage limits the file round trip
    assert!(interior_error(&loaded, &y32, &a) < 1e-6);
}

#[test]
fn pcm16_storage_quantizes_once() {
    let dir = tempfile::tempdir().unwrap();
    let x = synth_test_signal(
        SignalKind::Sine,
        &SignalKind::Sine.default_params(),
        0.5,
        8000.0,
        0,
    )
    .unwrap();
    let path = dir.path().join("x.wav");
    write_wav(&x, &path, WavFormat::Pcm16).unwrap();
    let once = read_wav(&path).unwrap();
    // the peak at +1 is clipped to the largest code
    let top = 1.0 - 1.0 / 32768.0;
    assert!(once
        .samples()
        .iter()
        .zip(x.samples())
        .all(|(a, b)| (a - b.min(top)).abs() <= 0.5 / 32768.0 + 1e-12));
    write_wav(&once, &path, WavFormat::Pcm16).unwrap();
    assert_eq!(read_wav(&path).unwrap(), once);
}
