use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;

use hound::{SampleFormat, WavReader};

use super::AudioClip;
use crate::error::{Error, Result};

/// Reads a PCM16 or float32 RIFF/WAVE file; stereo is averaged to mono.
pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioClip> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    load_wav_from_reader(BufReader::new(file), path)
}

/// Like [`load_wav`], reading from an arbitrary source; `path` is only used in errors.
pub fn load_wav_from_reader<R: Read>(reader: R, path: &Path) -> Result<AudioClip> {
    let wav = |e: hound::Error| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        hound::Error::Unsupported => Error::UnsupportedEncoding {
            path: path.into(),
            encoding: "unsupported WAVE format".into(),
        },
        other => Error::Wav {
            path: path.into(),
            reason: other.to_string(),
        },
    };
    let mut reader = WavReader::new(reader).map_err(wav)?;
    let spec = reader.spec();
    let channels = usize::from(spec.channels);
    if !(1..=2).contains(&channels) {
        return Err(Error::UnsupportedEncoding {
            path: path.into(),
            encoding: format!("{channels} channels"),
        });
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| f64::from(v) / 32768.0))
            .collect::<std::result::Result<_, _>>()
            .map_err(wav)?,
        (SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()
            .map_err(wav)?,
        (format, bits) => {
            return Err(Error::UnsupportedEncoding {
                path: path.into(),
                encoding: format!("{format:?} {bits}-bit"),
            })
        }
    };
    if interleaved.is_empty() {
        return Err(Error::EmptyAudio(path.into()));
    }
    let mono = interleaved
        .chunks_exact(channels)
        .map(|frame| frame.iter().sum::<f64>() / channels as f64)
        .collect();
    AudioClip::new(mono, spec.sample_rate).map_err(|e| match e {
        Error::NonFinite(_) => Error::Wav {
            path: path.into(),
            reason: "non-finite sample values".into(),
        },
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use hound::{WavSpec, WavWriter};
    use std::io::Cursor;

    fn encode<F: FnOnce(&mut WavWriter<&mut Cursor<Vec<u8>>>)>(spec: WavSpec, fill: F) -> Vec<u8> {
        let mut cursor = Cursor::new(Vec::new());
        {
            let mut w = WavWriter::new(&mut cursor, spec).unwrap();
            fill(&mut w);
            w.finalize().unwrap();
        }
        cursor.into_inner()
    }

    fn pcm16(channels: u16, rate: u32) -> WavSpec {
        WavSpec {
            channels,
            sample_rate: rate,
            bits_per_sample: 16,
            sample_format: SampleFormat::Int,
        }
    }

    fn decode(bytes: Vec<u8>) -> Result<AudioClip> {
        load_wav_from_reader(Cursor::new(bytes), Path::new("mem.wav"))
    }

    #[test]
    fn one_second_of_silence() {
        let bytes = encode(pcm16(1, 44_100), |w| {
            for _ in 0..44_100 {
                w.write_sample(0i16).unwrap();
            }
        });
        let clip = decode(bytes).unwrap();
        assert_eq!(clip.len(), 44_100);
        assert_eq!(clip.sample_rate(), 44_100);
        assert!(clip.samples().iter().all(|&s| s == 0.0));
    }

    #[test]
    fn pcm16_scaling() {
        let bytes = encode(pcm16(1, 8000), |w| {
            w.write_sample(16384i16).unwrap();
            w.write_sample(-32768i16).unwrap();
        });
        assert_eq!(decode(bytes).unwrap().samples(), &[0.5, -1.0]);
    }

    #[test]
    fn stereo_is_averaged() {
        let spec = WavSpec {
            channels: 2,
            sample_rate: 8000,
            bits_per_sample: 32,
            sample_format: SampleFormat::Float,
        };
        let bytes = encode(spec, |w| {
            w.write_sample(0.4f32).unwrap();
            w.write_sample(-0.2f32).unwrap();
        });
        let clip = decode(bytes).unwrap();
        assert!((clip.samples()[0] - 0.1).abs() < 1e-7);
    }

    #[test]
    fn distinct_errors() {
        let spec = WavSpec {
            channels: 1,
            sample_rate: 8000,
            bits_per_sample: 24,
            sample_format: SampleFormat::Int,
        };
        let bytes = encode(spec, |w| w.write_sample(5i32).unwrap());
        assert!(matches!(decode(bytes), Err(Error::UnsupportedEncoding { .. })));

        let bytes = encode(pcm16(1, 8000), |_| {});
        assert!(matches!(decode(bytes), Err(Error::EmptyAudio(_))));

        assert!(matches!(decode(b"not a wave file".to_vec()), Err(Error::Wav { .. })));
        assert!(matches!(load_wav("/nonexistent/x.wav"), Err(Error::Io { .. })));
    }
}
