use std::f64::consts::TAU;
use std::path::Path;

use super::{audio_decode, Codebook, TokenId};
use crate::error::{Error, Result};

/// Output sample rate in Hz.
pub const SAMPLE_RATE: u32 = 16_000;
/// Samples rendered per speech token.
pub const HOP: usize = 160;

const PARTIALS: usize = 3;

/// Renders a waveform sketch: each token becomes `HOP` samples of a small
/// sinusoid bank whose frequencies and amplitudes are read off the token's
/// codeword. Phases run continuously across frames.
pub fn render_waveform(ids: &[TokenId], book: &Codebook) -> Result<Vec<i16>> {
    let frames = audio_decode(ids, book)?;
    let partials = PARTIALS.min(book.dim());
    let mut phase = [0f64; PARTIALS];
    let mut out = Vec::with_capacity(ids.len() * HOP);
    for t in 0..frames.rows() {
        let c = frames.row(t);
        let freq: Vec<f64> = (0..partials)
            .map(|m| 110.0 * (m + 1) as f64 * (1.5 + c[m] as f64))
            .collect();
        let amp: Vec<f64> = (0..partials)
            .map(|m| 0.25 * (1.0 + c[(m + partials) % c.len()] as f64) / 2.0 + 0.05)
            .collect();
        for _ in 0..HOP {
            let mut s = 0.0;
            for m in 0..partials {
                s += amp[m] * phase[m].sin();
                phase[m] = (phase[m] + TAU * freq[m] / SAMPLE_RATE as f64) % TAU;
            }
            out.push((s.clamp(-1.0, 1.0) * i16::MAX as f64).round() as i16);
        }
    }
    Ok(out)
}

/// Writes 16-bit little-endian mono PCM in a RIFF/WAVE container.
pub fn write_wav(path: &Path, samples: &[i16]) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: SAMPLE_RATE,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let wrap = |e: hound::Error| match e {
        hound::Error::IoError(io) => Error::io(format!("writing {}", path.display()), io),
        other => Error::Data(format!("writing {}: {other}", path.display())),
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(wrap)?;
    for &s in samples {
        writer.write_sample(s).map_err(wrap)?;
    }
    writer.finalize().map_err(wrap)
}

/// Reads back a file produced by [`write_wav`].
pub fn read_wav(path: &Path) -> Result<Vec<i16>> {
    let wrap = |e: hound::Error| match e {
        hound::Error::IoError(io) => Error::io(format!("reading {}", path.display()), io),
        other => Error::Data(format!("reading {}: {other}", path.display())),
    };
    let mut reader = hound::WavReader::open(path).map_err(wrap)?;
    let spec = reader.spec();
    if spec.channels != 1 || spec.bits_per_sample != 16 || spec.sample_rate != SAMPLE_RATE {
        return Err(Error::Data(format!(
            "{}: expected 16-bit mono at {SAMPLE_RATE} Hz",
            path.display()
        )));
    }
    reader.samples::<i16>().collect::<Result<_, _>>().map_err(wrap)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_count_is_hop_per_token() {
        let book = Codebook::default_book();
        let ids: Vec<TokenId> = (0..37).map(|i| i * 13 % 1024).collect();
        let wav = render_waveform(&ids, &book).unwrap();
        assert_eq!(wav.len(), 37 * HOP);
        assert!(render_waveform(&[], &book).unwrap().is_empty());
        assert!(render_waveform(&[1024], &book).is_err());
    }

    #[test]
    fn wav_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.wav");
        let book = Codebook::default_book();
        let samples = render_waveform(&[1, 2, 3], &book).unwrap();
        write_wav(&path, &samples).unwrap();
        assert_eq!(read_wav(&path).unwrap(), samples);
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..4], b"RIFF");
        assert_eq!(&bytes[8..12], b"WAVE");
        assert_eq!(bytes.len(), 44 + 2 * 3 * HOP);
    }
}
