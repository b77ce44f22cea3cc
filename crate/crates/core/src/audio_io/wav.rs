use std::io::Cursor;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::{AudioClip, AudioError};

const PCM16_SCALE: f32 = 32768.0;

fn map_hound(err: hound::Error) -> AudioError {
    match err {
        hound::Error::Unsupported => {
            AudioError::UnsupportedEncoding("compression format is not PCM or IEEE float".into())
        }
        hound::Error::FormatError(msg) => AudioError::MalformedContainer(msg.to_string()),
        hound::Error::IoError(e) => AudioError::MalformedContainer(format!("truncated data: {e}")),
        other => AudioError::MalformedContainer(other.to_string()),
    }
}

/// Decodes a RIFF/WAVE byte buffer into a mono clip.
///
/// Accepts 16-bit integer PCM (normalized by 1/32768) and 32-bit IEEE float
/// (clamped to `[-1, 1]`), mono or stereo. Stereo is downmixed by the
/// per-frame channel mean.
pub fn decode_wav(bytes: &[u8]) -> Result<AudioClip, AudioError> {
    if bytes.len() < 12 {
        return Err(AudioError::MalformedContainer(format!(
            "{} bytes is shorter than a RIFF header",
            bytes.len()
        )));
    }
    if &bytes[0..4] != b"RIFF" {
        return Err(AudioError::MalformedContainer(format!(
            "bad magic {:?}, expected \"RIFF\"",
            String::from_utf8_lossy(&bytes[0..4])
        )));
    }
    let reader = WavReader::new(Cursor::new(bytes)).map_err(map_hound)?;
    let spec = reader.spec();
    let channels = usize::from(spec.channels);
    if channels == 0 || channels > 2 {
        return Err(AudioError::UnsupportedEncoding(format!(
            "{channels} channels (only mono and stereo are supported)"
        )));
    }
    if spec.sample_rate == 0 {
        return Err(AudioError::InvalidRate(0));
    }
    let interleaved: Vec<f32> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| f32::from(v) / PCM16_SCALE))
            .collect::<Result<_, _>>()
            .map_err(map_hound)?,
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .collect::<Result<_, _>>()
            .map_err(map_hound)?,
        (fmt, bits) => {
            return Err(AudioError::UnsupportedEncoding(format!(
                "{bits}-bit {fmt:?} samples"
            )))
        }
    };
    if interleaved.len() % channels != 0 {
        return Err(AudioError::MalformedContainer(
            "sample count is not a multiple of the channel count".into(),
        ));
    }
    let mono: Vec<f32> = if channels == 1 {
        interleaved
    } else {
        interleaved
            .chunks_exact(2)
            .map(|frame| (frame[0] + frame[1]) * 0.5)
            .collect()
    };
    if mono.is_empty() {
        return Err(AudioError::Empty);
    }
    AudioClip::new(mono, spec.sample_rate, "")
}

/// Encodes a clip as 16-bit mono PCM.
pub fn encode_wav_i16(clip: &AudioClip) -> Vec<u8> {
    let spec = WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate(),
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut buf = Cursor::new(Vec::with_capacity(44 + clip.len() * 2));
    {
        let mut w = WavWriter::new(&mut buf, spec).expect("in-memory writer");
        for &s in clip.samples() {
            let v = (s * PCM16_SCALE).round().clamp(-32768.0, 32767.0) as i16;
            w.write_sample(v).expect("in-memory write");
        }
        w.finalize().expect("in-memory finalize");
    }
    buf.into_inner()
}

/// Encodes a clip as 32-bit float mono.
pub fn encode_wav_f32(clip: &AudioClip) -> Vec<u8> {
    let spec = WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate(),
        bits_per_sample: 32,
        sample_format: SampleFormat::Float,
    };
    let mut buf = Cursor::new(Vec::with_capacity(58 + clip.len() * 4));
    {
        let mut w = WavWriter::new(&mut buf, spec).expect("in-memory writer");
        for &s in clip.samples() {
            w.write_sample(s).expect("in-memory write");
        }
        w.finalize().expect("in-memory finalize");
    }
    buf.into_inner()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stereo_i16(frames: &[(i16, i16)], rate: u32) -> Vec<u8> {
        let spec = WavSpec {
            channels: 2,
            sample_rate: rate,
            bits_per_sample: 16,
            sample_format: SampleFormat::Int,
        };
        let mut buf = Cursor::new(Vec::new());
        {
            let mut w = WavWriter::new(&mut buf, spec).unwrap();
            for &(l, r) in frames {
                w.write_sample(l).unwrap();
                w.write_sample(r).unwrap();
            }
            w.finalize().unwrap();
        }
        buf.into_inner()
    }

    #[test]
    fn one_second_mono_pcm() {
        let clip = AudioClip::new(vec![0.25; 8000], 8000, "a").unwrap();
        let bytes = encode_wav_i16(&clip);
        let back = decode_wav(&bytes).unwrap();
        assert_eq!(back.len(), 8000);
        assert_eq!(back.sample_rate(), 8000);
        assert!(back.samples().iter().all(|&s| s == 0.25));
    }

    #[test]
    fn symmetric_stereo_downmixes_to_zero() {
        let bytes = stereo_i16(&[(16384, -16384), (32767, -32767)], 4000);
        let clip = decode_wav(&bytes).unwrap();
        assert_eq!(clip.samples(), &[0.0, 0.0]);
    }

    #[test]
    fn pcm_scale_is_full_scale_int16() {
        let bytes = stereo_i16(&[(-32768, -32768), (16384, 16384)], 4000);
        let clip = decode_wav(&bytes).unwrap();
        assert_eq!(clip.samples(), &[-1.0, 0.5]);
    }

    #[test]
    fn rifx_is_malformed() {
        let clip = AudioClip::new(vec![0.1; 16], 8000, "").unwrap();
        let mut bytes = encode_wav_i16(&clip);
        bytes[0..4].copy_from_slice(b"RIFX");
        assert!(matches!(
            decode_wav(&bytes),
            Err(AudioError::MalformedContainer(_))
        ));
    }

    #[test]
    fn empty_and_garbage_are_malformed() {
        assert!(matches!(decode_wav(&[]), Err(AudioError::MalformedContainer(_))));
        assert!(matches!(
            decode_wav(b"RIFF\x10\x00\x00\x00WAVEjunkjunkjunk"),
            Err(AudioError::MalformedContainer(_))
        ));
    }

    #[test]
    fn non_pcm_format_code_is_unsupported() {
        let clip = AudioClip::new(vec![0.1; 16], 8000, "").unwrap();
        let mut bytes = encode_wav_i16(&clip);
        // fmt chunk starts at 12; format tag at 20..22. 0x0002 = MS ADPCM.
        assert_eq!(&bytes[12..16], b"fmt ");
        bytes[20] = 2;
        assert!(matches!(
            decode_wav(&bytes),
            Err(AudioError::UnsupportedEncoding(_))
        ));
    }

    #[test]
    fn float_wav_is_clamped() {
        let spec = WavSpec {
            channels: 1,
            sample_rate: 48000,
            bits_per_sample: 32,
            sample_format: SampleFormat::Float,
        };
        let mut buf = Cursor::new(Vec::new());
        {
            let mut w = WavWriter::new(&mut buf, spec).unwrap();
            for v in [1.5f32, -0.25, f32::INFINITY] {
                w.write_sample(v).unwrap();
            }
            w.finalize().unwrap();
        }
        let clip = decode_wav(&buf.into_inner()).unwrap();
        assert_eq!(clip.samples(), &[1.0, -0.25, 0.0]);
    }

    #[test]
    fn eight_bit_pcm_is_unsupported() {
        let spec = WavSpec {
            channels: 1,
            sample_rate: 8000,
            bits_per_sample: 8,
            sample_format: SampleFormat::Int,
        };
        let mut buf = Cursor::new(Vec::new());
        {
            let mut w = WavWriter::new(&mut buf, spec).unwrap();
            w.write_sample(3i8).unwrap();
            w.finalize().unwrap();
        }
        assert!(matches!(
            decode_wav(&buf.into_inner()),
            Err(AudioError::UnsupportedEncoding(_))
        ));
    }
}
