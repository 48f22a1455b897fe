//! Text and raster exports of an analysis, and readers for them.
//!
//! Spectrogram CSV rows cover the one-sided bins `0..=fft_size/2` of every
//! frame. The PGM raster puts time on a common grid stepped by the smallest
//! hop in use, with the highest frequency in the top row.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::adaptive::{AdaptiveSpectrogram, SelectionTrack};
use crate::error::{invalid, Error, Result};

pub const DEFAULT_DB_FLOOR: f64 = -120.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpectrogramFormat {
    Csv,
    Pgm,
}

impl std::str::FromStr for SpectrogramFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(SpectrogramFormat::Csv),
            "pgm" => Ok(SpectrogramFormat::Pgm),
            _ => Err(invalid(format!(
                "unknown spectrogram format '{s}', expected csv or pgm"
            ))),
        }
    }
}

fn power_db(power: f64, floor: f64) -> f64 {
    if power > 0.0 {
        (10.0 * power.log10()).max(floor)
    } else {
        floor
    }
}

pub fn spectrogram_csv(analysis: &AdaptiveSpectrogram, db_floor: f64) -> String {
    let fft = analysis.fft_size();
    let sr = analysis.sample_rate;
    let mut out = String::new();
    writeln!(out, "# sample_rate={sr}").unwrap();
    writeln!(out, "# slices={}", analysis.slices.len()).unwrap();
    writeln!(out, "time_sec,freq_hz,power_db,window_len").unwrap();
    for slice in &analysis.slices {
        let len = analysis.window(slice.window_index).len();
        for (n, &start) in slice.frame_starts.iter().enumerate() {
            let time = (start as f64 + len as f64 / 2.0) / sr;
            for (k, c) in slice.frame(n)[..=fft / 2].iter().enumerate() {
                let freq = k as f64 * sr / fft as f64;
                let db = power_db(c.norm_sqr(), db_floor);
                writeln!(out, "{time},{freq},{db},{len}").unwrap();
            }
        }
    }
    out
}

/// Grayscale raster: `(width, height, pixels)` with row 0 the highest bin.
pub fn spectrogram_raster(
    analysis: &AdaptiveSpectrogram,
    db_floor: f64,
) -> (usize, usize, Vec<u8>) {
    let fft = analysis.fft_size();
    let height = fft / 2 + 1;
    let step = analysis
        .slices
        .iter()
        .map(|s| s.lattice.hop)
        .min()
        .unwrap_or(1)
        .max(1);
    let width = analysis.signal_len.div_ceil(step);

    // dB column for every grid time, from the nearest frame of the owning slice
    let mut columns = vec![vec![db_floor; height]; width];
    for (c, column) in columns.iter_mut().enumerate() {
        let t = c * step + step / 2;
        let Some(slice) = analysis.slices.iter().find(|s| s.range.contains(&t)) else {
            continue;
        };
        let half = analysis.window(slice.window_index).len() / 2;
        let nearest = slice
            .frame_starts
            .iter()
            .enumerate()
            .min_by_key(|(_, &start)| (start + half).abs_diff(t))
            .map(|(n, _)| n);
        if let Some(n) = nearest {
            // every slice shares the fft grid, so bins map one to one
            for (k, v) in slice.frame(n)[..height].iter().enumerate() {
                column[k] = power_db(v.norm_sqr(), db_floor);
            }
        }
    }

    let top = columns.iter().flatten().fold(db_floor, |a, &b| a.max(b));
    let span = top - db_floor;
    let mut pixels = vec![0u8; width * height];
    for (c, column) in columns.iter().enumerate() {
        for (k, &db) in column.iter().enumerate() {
            let level = if span > 0.0 {
                ((db - db_floor) / span * 255.0).round() as u8
            } else {
                0
            };
            pixels[(height - 1 - k) * width + c] = level;
        }
    }
    (width, height, pixels)
}

pub fn spectrogram_pgm(analysis: &AdaptiveSpectrogram, db_floor: f64) -> Vec<u8> {
    let (width, height, pixels) = spectrogram_raster(analysis, db_floor);
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(&pixels);
    out
}

pub fn export_spectrogram(
    analysis: &AdaptiveSpectrogram,
    format: SpectrogramFormat,
    path: impl AsRef<Path>,
    db_floor: f64,
) -> Result<()> {
    if !db_floor.is_finite() {
        return Err(invalid("db floor must be finite"));
    }
    let bytes = match format {
        SpectrogramFormat::Csv => spectrogram_csv(analysis, db_floor).into_bytes(),
        SpectrogramFormat::Pgm => spectrogram_pgm(analysis, db_floor),
    };
    fs::write(path, bytes)?;
    Ok(())
}

pub fn selection_text(track: &SelectionTrack) -> String {
    let sr = track.sample_rate;
    let lens: Vec<String> = track.window_lens.iter().map(|l| l.to_string()).collect();
    let mut out = String::new();
    writeln!(out, "# sample_rate={sr}").unwrap();
    writeln!(out, "# window_lens={}", lens.join(" ")).unwrap();
    writeln!(out, "start_sec,end_sec,window_len,entropies").unwrap();
    for seg in &track.segments {
        let entropies: Vec<String> = seg
            .entropies
            .iter()
            .map(|e| e.map_or_else(|| "silent".to_string(), |h| h.to_string()))
            .collect();
        writeln!(
            out,
            "{},{},{},{}",
            seg.range.start as f64 / sr,
            seg.range.end as f64 / sr,
            track.window_lens[seg.choice],
            entropies.join(";")
        )
        .unwrap();
    }
    out
}

pub fn export_selection(track: &SelectionTrack, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, selection_text(track))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub time_sec: f64,
    pub freq_hz: f64,
    pub power_db: f64,
    pub window_len: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrogramCsv {
    pub sample_rate: f64,
    pub slices: usize,
    pub rows: Vec<CsvRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionRecord {
    pub start_sec: f64,
    pub end_sec: f64,
    pub window_len: usize,
    pub entropies: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionFile {
    pub sample_rate: f64,
    pub window_lens: Vec<usize>,
    pub records: Vec<SelectionRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pgm {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl Pgm {
    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.pixels[row * self.width + col]
    }
}

fn parse_err(line: usize, reason: impl Into<String>) -> Error {
    Error::ExportParse {
        line,
        reason: reason.into(),
    }
}

fn field<T: std::str::FromStr>(line: usize, name: &str, s: Option<&str>) -> Result<T> {
    let s = s.ok_or_else(|| parse_err(line, format!("missing {name}")))?;
    s.trim()
        .parse()
        .map_err(|_| parse_err(line, format!("bad {name} '{s}'")))
}

fn header<'a>(lines: &mut impl Iterator<Item = (usize, &'a str)>, key: &str) -> Result<&'a str> {
    let (no, line) = lines
        .next()
        .ok_or_else(|| parse_err(0, format!("missing '{key}' header")))?;
    line.strip_prefix("# ")
        .and_then(|rest| rest.strip_prefix(key))
        .and_then(|rest| rest.strip_prefix('='))
        .ok_or_else(|| parse_err(no, format!("expected '# {key}=…'")))
}

fn column_header<'a>(
    lines: &mut impl Iterator<Item = (usize, &'a str)>,
    expected: &str,
) -> Result<()> {
    match lines.next() {
        Some((_, l)) if l == expected => Ok(()),
        Some((no, _)) => Err(parse_err(no, "unexpected column header")),
        None => Err(parse_err(0, "missing column header")),
    }
}

pub fn parse_spectrogram_csv(text: &str) -> Result<SpectrogramCsv> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let sample_rate = field(1, "sample_rate", Some(header(&mut lines, "sample_rate")?))?;
    let slices = field(2, "slices", Some(header(&mut lines, "slices")?))?;
    column_header(&mut lines, "time_sec,freq_hz,power_db,window_len")?;
    let mut rows = Vec::new();
    for (no, line) in lines {
        let mut parts = line.split(',');
        let row = CsvRow {
            time_sec: field(no, "time_sec", parts.next())?,
            freq_hz: field(no, "freq_hz", parts.next())?,
            power_db: field(no, "power_db", parts.next())?,
            window_len: field(no, "window_len", parts.next())?,
        };
        if parts.next().is_some() {
            return Err(parse_err(no, "too many fields"));
        }
        rows.push(row);
    }
    Ok(SpectrogramCsv {
        sample_rate,
        slices,
        rows,
    })
}

pub fn parse_selection(text: &str) -> Result<SelectionFile> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let sample_rate = field(1, "sample_rate", Some(header(&mut lines, "sample_rate")?))?;
    let window_lens = header(&mut lines, "window_lens")?
        .split_whitespace()
        .map(|s| field(2, "window length", Some(s)))
        .collect::<Result<Vec<usize>>>()?;
    column_header(&mut lines, "start_sec,end_sec,window_len,entropies")?;
    let mut records = Vec::new();
    for (no, line) in lines {
        let mut parts = line.splitn(4, ',');
        let start_sec = field(no, "start_sec", parts.next())?;
        let end_sec = field(no, "end_sec", parts.next())?;
        let window_len = field(no, "window_len", parts.next())?;
        let entropies = parts
            .next()
            .ok_or_else(|| parse_err(no, "missing entropies"))?
            .split(';')
            .map(|e| match e {
                "silent" => Ok(None),
                _ => field(no, "entropy", Some(e)).map(Some),
            })
            .collect::<Result<Vec<_>>>()?;
        records.push(SelectionRecord {
            start_sec,
            end_sec,
            window_len,
            entropies,
        });
    }
    Ok(SelectionFile {
        sample_rate,
        window_lens,
        records,
    })
}

pub fn parse_pgm(bytes: &[u8]) -> Result<Pgm> {
    // header: magic, width, height, maxval, each followed by one whitespace byte
    let mut tokens = Vec::new();
    let mut pos = 0;
    while tokens.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let begin = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if begin == pos {
            return Err(parse_err(1, "truncated PGM header"));
        }
        tokens.push(
            std::str::from_utf8(&bytes[begin..pos])
                .map_err(|_| parse_err(1, "non-ASCII header"))?,
        );
    }
    if tokens[0] != "P5" {
        return Err(parse_err(1, format!("expected P5, found {}", tokens[0])));
    }
    let width: usize = field(1, "width", Some(tokens[1]))?;
    let height: usize = field(1, "height", Some(tokens[2]))?;
    let maxval: usize = field(1, "maxval", Some(tokens[3]))?;
    if maxval != 255 {
        return Err(parse_err(1, format!("unsupported maxval {maxval}")));
    }
    let data = bytes.get(pos + 1..).unwrap_or(&[]);
    if data.len() != width * height {
        return Err(parse_err(
            1,
            format!(
                "expected {} pixel bytes, found {}",
                width * height,
                data.len()
            ),
        ));
    }
    Ok(Pgm {
        width,
        height,
        pixels: data.to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adaptive::{adapt, MultiFrameConfig, SelectionTrack};
    use crate::signal::{synth_test_signal, Signal, SignalKind, SynthParams};

    fn single_window() -> MultiFrameConfig {
        MultiFrameConfig {
            min_len: 1024,
            max_len: 1024,
            num_windows: 1,
            ..MultiFrameConfig::default()
        }
    }

    #[test]
    fn zero_analysis_gives_black_pgm() {
        let s = Signal::new(vec![0.0; 8192], 8000.0).unwrap();
        let a = adapt(&s, &MultiFrameConfig::default()).unwrap();
        let pgm = parse_pgm(&spectrogram_pgm(&a, DEFAULT_DB_FLOOR)).unwrap();
        assert_eq!(pgm.height, a.fft_size() / 2 + 1);
        assert!(pgm.pixels.iter().all(|&p| p == 0));
    }

    #[test]
    fn brightest_row_is_the_sinusoid_bin() {
        let sr = 8000.0;
        let k = 37;
        let f = k as f64 * sr / 1024.0;
        let s = synth_test_signal(
            SignalKind::Sine,
            &SynthParams::new().with("freq", f),
            1.0,
            sr,
            0,
        )
        .unwrap();
        let a = adapt(&s, &single_window()).unwrap();
        let pgm = parse_pgm(&spectrogram_pgm(&a, DEFAULT_DB_FLOOR)).unwrap();
        let col = pgm.width / 2;
        let row = (0..pgm.height).max_by_key(|&r| pgm.get(r, col)).unwrap();
        assert_eq!(row, pgm.height - 1 - k);
        assert_eq!(pgm.get(row, col), 255);
    }

    #[test]
    fn csv_row_count_and_round_trip() {
        let s = synth_test_signal(
            SignalKind::FmSine,
            &SignalKind::FmSine.default_params(),
            0.5,
            44100.0,
            0,
        )
        .unwrap();
        let a = adapt(&s, &MultiFrameConfig::default()).unwrap();
        let text = spectrogram_csv(&a, DEFAULT_DB_FLOOR);
        let parsed = parse_spectrogram_csv(&text).unwrap();
        assert_eq!(parsed.sample_rate, 44100.0);
        assert_eq!(parsed.slices, a.slices.len());
        assert_eq!(parsed.rows.len(), a.num_frames() * (a.fft_size() / 2 + 1));
        let lens: Vec<usize> = a
            .slices
            .iter()
            .map(|s| a.window(s.window_index).len())
            .collect();
        assert!(parsed.rows.iter().all(|r| lens.contains(&r.window_len)));
        assert!(parsed.rows.iter().all(|r| r.power_db >= DEFAULT_DB_FLOOR));
    }

    #[test]
    fn selection_round_trip() {
        let s = synth_test_signal(
            SignalKind::Impulse,
            &SignalKind::Impulse.default_params(),
            1.0,
            44100.0,
            0,
        )
        .unwrap();
        let a = adapt(&s, &MultiFrameConfig::default()).unwrap();
        let text = selection_text(&a.selection);
        let parsed = parse_selection(&text).unwrap();
        assert_eq!(parsed.window_lens, a.selection.window_lens);
        assert_eq!(parsed.records.len(), a.selection.segments.len());
        for (r, seg) in parsed.records.iter().zip(&a.selection.segments) {
            assert_eq!(r.entropies, seg.entropies);
            assert_eq!(r.window_len, a.selection.window_lens[seg.choice]);
        }
        // the segment owning the impulse picks the shortest window
        let owner = a.selection.owner(22050);
        assert_eq!(parsed.records[owner].window_len, 512);
    }

    #[test]
    fn stationary_sinusoid_selects_largest_everywhere() {
        let s = synth_test_signal(
            SignalKind::Sine,
            &SignalKind::Sine.default_params(),
            1.0,
            44100.0,
            0,
        )
        .unwrap();
        let a = adapt(&s, &MultiFrameConfig::default()).unwrap();
        let parsed = parse_selection(&selection_text(&a.selection)).unwrap();
        assert!(parsed.records.iter().all(|r| r.window_len == 4096));
    }

    #[test]
    fn empty_track_is_header_only() {
        let track = SelectionTrack {
            segments: vec![],
            window_lens: vec![512, 1024],
            sample_rate: 8000.0,
        };
        let text = selection_text(&track);
        assert_eq!(text.lines().count(), 3);
        assert!(parse_selection(&text).unwrap().records.is_empty());
    }

    #[test]
    fn files_are_written() {
        let dir = tempfile::tempdir().unwrap();
        let s = Signal::new(vec![0.0; 4096], 8000.0).unwrap();
        let a = adapt(&s, &single_window()).unwrap();
        let csv = dir.path().join("s.csv");
        let pgm = dir.path().join("s.pgm");
        export_spectrogram(&a, SpectrogramFormat::Csv, &csv, -90.0).unwrap();
        export_spectrogram(&a, SpectrogramFormat::Pgm, &pgm, -90.0).unwrap();
        let rows = parse_spectrogram_csv(&fs::read_to_string(csv).unwrap())
            .unwrap()
            .rows;
        assert!(rows.iter().all(|r| r.power_db == -90.0));
        parse_pgm(&fs::read(pgm).unwrap()).unwrap();
        assert!(export_selection(&a.selection, dir.path().join("no/such/dir")).is_err());
    }

    #[test]
    fn parsers_reject_garbage() {
        assert!(matches!(
            parse_spectrogram_csv("hello"),
            Err(Error::ExportParse { line: 1, .. })
        ));
        let bad = "# sample_rate=8000\n# slices=1\ntime_sec,freq_hz,power_db,window_len\n0,1,x,4\n";
        assert!(matches!(
            parse_spectrogram_csv(bad),
            Err(Error::ExportParse { line: 4, .. })
        ));
        assert!(parse_pgm(b"P5\n2 2\n255\n\x00").is_err());
        assert!(parse_pgm(b"P2\n1 1\n255\n\x00").is_err());
        assert!(parse_selection("# sample_rate=1\n").is_err());
    }
}
