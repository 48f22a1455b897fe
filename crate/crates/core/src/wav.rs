//! Minimal RIFF/WAVE reader and writer: 16-bit PCM and 32-bit float.
//!
//! Multichannel input is downmixed by averaging. 16-bit samples map to
//! `[-1, 1)` through `1/32768`.

use std::fs;
use std::path::Path;

use crate::error::{invalid, Error, Result};
use crate::signal::Signal;

const FORMAT_PCM: u16 = 1;
const FORMAT_FLOAT: u16 = 3;
const FORMAT_EXTENSIBLE: u16 = 0xFFFE;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WavFormat {
    Pcm16,
    Float32,
}

impl std::str::FromStr for WavFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pcm16" => Ok(WavFormat::Pcm16),
            "float32" => Ok(WavFormat::Float32),
            _ => Err(invalid(format!(
                "unknown WAV format '{s}', expected pcm16 or float32"
            ))),
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::WavParse {
                offset: self.pos as u64,
                reason: format!(
                    "truncated {what}: need {n} bytes, {} left",
                    self.bytes.len() - self.pos
                ),
            });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        let b = self.take(2, what)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

#[derive(Debug, Clone, Copy)]
struct FmtChunk {
    format: u16,
    channels: u16,
    sample_rate: u32,
    bits: u16,
}

pub fn parse_wav(bytes: &[u8]) -> Result<Signal> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "RIFF tag")? != b"RIFF" {
        return Err(Error::WavParse {
            offset: 0,
            reason: "missing RIFF tag".into(),
        });
    }
    r.u32("RIFF size")?;
    if r.take(4, "WAVE tag")? != b"WAVE" {
        return Err(Error::WavParse {
            offset: 8,
            reason: "missing WAVE tag".into(),
        });
    }

    let mut fmt: Option<FmtChunk> = None;
    loop {
        let chunk_at = r.pos as u64;
        let id = r.take(4, "chunk id")?;
        let size = r.u32("chunk size")? as usize;
        match id {
            b"fmt " => {
                if size < 16 {
                    return Err(Error::WavParse {
                        offset: chunk_at,
                        reason: format!("fmt chunk of {size} bytes is too short"),
                    });
                }
                let body_at = r.pos;
                let mut format = r.u16("audio format")?;
                let channels = r.u16("channel count")?;
                let sample_rate = r.u32("sample rate")?;
                r.u32("byte rate")?;
                r.u16("block align")?;
                let bits = r.u16("bits per sample")?;
                if format == FORMAT_EXTENSIBLE {
                    // cbSize, valid bits, channel mask, then the sub-format GUID
                    if size < 40 {
                        return Err(Error::WavParse {
                            offset: chunk_at,
                            reason: "extensible fmt chunk shorter than 40 bytes".into(),
                        });
                    }
                    r.take(8, "extensible header")?;
                    format = r.u16("sub-format")?;
                }
                r.pos = body_at;
                r.take(size + size % 2, "fmt chunk")?;
                if channels == 0 || sample_rate == 0 {
                    return Err(Error::WavParse {
                        offset: chunk_at,
                        reason: "zero channels or sample rate".into(),
                    });
                }
                fmt = Some(FmtChunk {
                    format,
                    channels,
                    sample_rate,
                    bits,
                });
            }
            b"data" => {
                let fmt = fmt.ok_or_else(|| Error::WavParse {
                    offset: chunk_at,
                    reason: "data chunk before fmt chunk".into(),
                })?;
                let data = r.take(size, "data chunk")?;
                return decode(fmt, data);
            }
            _ => {
                r.take(size + size % 2, "chunk body")?;
            }
        }
    }
}

fn decode(fmt: FmtChunk, data: &[u8]) -> Result<Signal> {
    let channels = fmt.channels as usize;
    let samples: Vec<f64> = match (fmt.format, fmt.bits) {
        (FORMAT_PCM, 16) => data
            .chunks_exact(2)
            .map(|b| i16::from_le_bytes([b[0], b[1]]) as f64 / 32768.0)
            .collect(),
        (FORMAT_FLOAT, 32) => data
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect(),
        (f, b) => {
            return Err(Error::UnsupportedFormat(format!(
                "WAV format tag {f} with {b} bits per sample"
            )))
        }
    };
    let mono: Vec<f64> = if channels == 1 {
        samples
    } else {
        samples
            .chunks_exact(channels)
            .map(|frame| frame.iter().sum::<f64>() / channels as f64)
            .collect()
    };
    if mono.is_empty() {
        return Err(invalid("WAV file contains no samples"));
    }
    Signal::new(mono, fmt.sample_rate as f64)
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<Signal> {
    parse_wav(&fs::read(path)?)
}

pub fn encode_wav(signal: &Signal, format: WavFormat) -> Result<Vec<u8>> {
    let sr = signal.sample_rate();
    if sr.fract() != 0.0 || sr > u32::MAX as f64 {
        return Err(invalid(format!(
            "sample rate {sr} is not representable in a WAV header"
        )));
    }
    let (tag, bytes_per_sample) = match format {
        WavFormat::Pcm16 => (FORMAT_PCM, 2u32),
        WavFormat::Float32 => (FORMAT_FLOAT, 4u32),
    };
    let data_len = signal.num_samples() as u32 * bytes_per_sample;
    let mut out = Vec::with_capacity(44 + data_len as usize);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&tag.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&(sr as u32).to_le_bytes());
    out.extend_from_slice(&(sr as u32 * bytes_per_sample).to_le_bytes());
    out.extend_from_slice(&(bytes_per_sample as u16).to_le_bytes());
    out.extend_from_slice(&(bytes_per_sample as u16 * 8).to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for &x in signal.samples() {
        match format {
            WavFormat::Pcm16 => {
                let clipped = x.clamp(-1.0, 1.0 - 1.0 / 32768.0);
                out.extend_from_slice(&((clipped * 32768.0).round() as i16).to_le_bytes());
            }
            WavFormat::Float32 => out.extend_from_slice(&(x as f32).to_le_bytes()),
        }
    }
    Ok(out)
}

pub fn write_wav(signal: &Signal, path: impl AsRef<Path>, format: WavFormat) -> Result<()> {
    fs::write(path, encode_wav(signal, format)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pcm16_file(samples: &[i16], channels: u16) -> Vec<u8> {
        let data_len = (samples.len() * 2) as u32;
        let mut out = Vec::new();
        out.extend_from_slice(b"RIFF");
        out.extend_from_slice(&(36 + data_len).to_le_bytes());
        out.extend_from_slice(b"WAVE");
        out.extend_from_slice(b"fmt ");
        out.extend_from_slice(&16u32.to_le_bytes());
        out.extend_from_slice(&1u16.to_le_bytes());
        out.extend_from_slice(&channels.to_le_bytes());
        out.extend_from_slice(&8000u32.to_le_bytes());
        out.extend_from_slice(&(8000u32 * 2 * channels as u32).to_le_bytes());
        out.extend_from_slice(&(2 * channels).to_le_bytes());
        out.extend_from_slice(&16u16.to_le_bytes());
        out.extend_from_slice(b"data");
        out.extend_from_slice(&data_len.to_le_bytes());
        for s in samples {
            out.extend_from_slice(&s.to_le_bytes());
        }
        out
    }

    #[test]
    fn pcm16_scaling() {
        let s = parse_wav(&pcm16_file(&[16384, -32768, 0], 1)).unwrap();
        assert_eq!(s.samples(), &[0.5, -1.0, 0.0]);
        assert_eq!(s.sample_rate(), 8000.0);
    }

    #[test]
    fn stereo_is_averaged() {
        let s = parse_wav(&pcm16_file(&[16384, 0, -16384, -16384], 2)).unwrap();
        assert_eq!(s.samples(), &[0.25, -0.5]);
    }

    #[test]
    fn truncated_header_reports_offset() {
        let full = pcm16_file(&[1, 2, 3], 1);
        for cut in [0usize, 3, 10, 20, 30, 40] {
            match parse_wav(&full[..cut]) {
                Err(Error::WavParse { offset, .. }) => assert!(offset <= cut as u64),
                other => panic!("cut {cut}: {other:?}"),
            }
        }
        let mut bad = full.clone();
        bad[8..12].copy_from_slice(b"AVI ");
        assert!(matches!(
            parse_wav(&bad),
            Err(Error::WavParse { offset: 8, .. })
        ));
    }

    #[test]
    fn unsupported_codec() {
        let mut f = pcm16_file(&[1, 2], 1);
        f[34] = 24; // bits per sample
        assert!(matches!(parse_wav(&f), Err(Error::UnsupportedFormat(_))));
    }

    #[test]
    fn skips_unknown_chunks() {
        let f = pcm16_file(&[16384], 1);
        let mut g = f[..12].to_vec();
        g.extend_from_slice(b"LIST");
        g.extend_from_slice(&3u32.to_le_bytes());
        g.extend_from_slice(&[1, 2, 3, 0]);
        g.extend_from_slice(&f[12..]);
        assert_eq!(parse_wav(&g).unwrap().samples(), &[0.5]);
    }

    #[test]
    fn pcm16_clips_and_rounds() {
        let s = Signal::new(vec![2.0, -2.0, 0.5, 1.0 / 65536.0 + 1e-9], 8000.0).unwrap();
        let back = parse_wav(&encode_wav(&s, WavFormat::Pcm16).unwrap()).unwrap();
        assert_eq!(
            back.samples(),
            &[1.0 - 1.0 / 32768.0, -1.0, 0.5, 1.0 / 32768.0]
        );
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.wav");
        let s = Signal::new(vec![0.25, -0.125, 0.0], 44100.0).unwrap();
        write_wav(&s, &path, WavFormat::Float32).unwrap();
        assert_eq!(read_wav(&path).unwrap(), s);
        assert!(write_wav(&s, dir.path().join("missing/dir/x.wav"), WavFormat::Pcm16).is_err());
        assert!(encode_wav(&Signal::new(vec![0.0], 44100.5).unwrap(), WavFormat::Pcm16).is_err());
    }

    proptest! {
        #[test]
        fn float32_round_trips_bit_exactly(v in prop::collection::vec(-1e3f32..1e3, 1..200)) {
            let s = Signal::new(v.iter().map(|x| *x as f64).collect(), 48000.0).unwrap();
            let back = parse_wav(&encode_wav(&s, WavFormat::Float32).unwrap()).unwrap();
            prop_assert_eq!(back, s);
        }

        #[test]
        fn pcm16_round_trips_integers(v in prop::collection::vec(any::<i16>(), 1..200)) {
            let s = Signal::new(v.iter().map(|x| *x as f64 / 32768.0).collect(), 8000.0).unwrap();
            let bytes = encode_wav(&s, WavFormat::Pcm16).unwrap();
            prop_assert_eq!(parse_wav(&bytes).unwrap(), s);
        }
    }
}
