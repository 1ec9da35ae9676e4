//! WAV reading and writing. Output is always 16-bit PCM mono.

use std::io::{Cursor, Read, Seek};
use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};
use thiserror::Error;

use super::{AudioBuffer, DspError};

#[derive(Debug, Error)]
pub enum WavError {
    #[error(transparent)]
    Hound(#[from] hound::Error),
    #[error("expected mono audio, found {0} channels")]
    NotMono(u16),
    #[error(transparent)]
    Buffer(#[from] DspError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WavInfo {
    pub sample_rate: u32,
    pub channels: u16,
    pub frames: u32,
}

impl WavInfo {
    pub fn duration_s(&self) -> f64 {
        self.frames as f64 / self.sample_rate as f64
    }
}

/// Reads only the header.
pub fn probe(path: &Path) -> Result<WavInfo, WavError> {
    let reader = WavReader::open(path)?;
    let spec = reader.spec();
    Ok(WavInfo {
        sample_rate: spec.sample_rate,
        channels: spec.channels,
        frames: reader.duration(),
    })
}

pub fn read_wav(path: &Path) -> Result<AudioBuffer, WavError> {
    decode(WavReader::open(path)?)
}

pub fn decode_wav(bytes: &[u8]) -> Result<AudioBuffer, WavError> {
    decode(WavReader::new(Cursor::new(bytes))?)
}

fn decode<R: Read>(reader: WavReader<R>) -> Result<AudioBuffer, WavError> {
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(WavError::NotMono(spec.channels));
    }
    let samples: Vec<f32> = match spec.sample_format {
        SampleFormat::Float => reader.into_samples::<f32>().collect::<Result<_, _>>()?,
        SampleFormat::Int => {
            let scale = 1.0 / (1u64 << (spec.bits_per_sample - 1)) as f32;
            reader
                .into_samples::<i32>()
                .map(|s| s.map(|v| v as f32 * scale))
                .collect::<Result<_, _>>()?
        }
    };
    Ok(AudioBuffer::new(samples, spec.sample_rate)?)
}

fn spec(sample_rate: u32) -> WavSpec {
    WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    }
}

fn quantize(x: f32) -> i16 {
    (x as f64 * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}

fn write_to<W: std::io::Write + Seek>(w: W, buf: &AudioBuffer) -> Result<(), WavError> {
    let mut writer = WavWriter::new(w, spec(buf.sample_rate()))?;
    for &s in buf.samples() {
        writer.write_sample(quantize(s))?;
    }
    writer.finalize()?;
    Ok(())
}

pub fn write_wav(path: &Path, buf: &AudioBuffer) -> Result<(), WavError> {
    let file = std::io::BufWriter::new(std::fs::File::create(path).map_err(hound::Error::from)?);
    write_to(file, buf)
}

/// Encodes to little-endian RIFF WAV bytes.
pub fn encode_wav(buf: &AudioBuffer) -> Result<Vec<u8>, WavError> {
    let mut cursor = Cursor::new(Vec::new());
    write_to(&mut cursor, buf)?;
    Ok(cursor.into_inner())
}
