use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::Path;

use super::{AudioMetadata, MediaError, SampleBuffer, SampleFormat};

const WAVE_FORMAT_PCM: u16 = 0x0001;
const WAVE_FORMAT_IEEE_FLOAT: u16 = 0x0003;
const WAVE_FORMAT_EXTENSIBLE: u16 = 0xFFFE;

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> MediaError + '_ {
    move |source| MediaError::IoFailure {
        path: path.to_path_buf(),
        source,
    }
}

fn malformed(path: &Path, reason: impl Into<String>) -> MediaError {
    MediaError::MalformedHeader {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

fn unsupported(path: &Path, reason: impl Into<String>) -> MediaError {
    MediaError::UnsupportedEncoding {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

/// Reads exactly `buf.len()` bytes, mapping a short read to `MalformedHeader`.
fn read_header_bytes<R: Read>(
    reader: &mut R,
    buf: &mut [u8],
    path: &Path,
    what: &str,
) -> Result<(), MediaError> {
    reader.read_exact(buf).map_err(|e| {
        if e.kind() == io::ErrorKind::UnexpectedEof {
            malformed(path, format!("file ends inside {what}"))
        } else {
            io_err(path)(e)
        }
    })
}

struct FmtChunk {
    format: SampleFormat,
    channels: u16,
    sample_rate: u32,
    bits_per_sample: u16,
}

fn parse_fmt(body: &[u8], path: &Path) -> Result<FmtChunk, MediaError> {
    if body.len() < 16 {
        return Err(malformed(path, format!("fmt chunk too short ({} bytes)", body.len())));
    }
    let u16_at = |i: usize| u16::from_le_bytes([body[i], body[i + 1]]);
    let u32_at = |i: usize| u32::from_le_bytes([body[i], body[i + 1], body[i + 2], body[i + 3]]);

    let mut tag = u16_at(0);
    let channels = u16_at(2);
    let sample_rate = u32_at(4);
    let block_align = u16_at(12);
    let bits_per_sample = u16_at(14);

    if tag == WAVE_FORMAT_EXTENSIBLE {
        // cbSize, validBits, channelMask, then the sub-format GUID whose
        // first two bytes carry the effective format tag.
        if body.len() < 40 {
            return Err(malformed(path, "extensible fmt chunk shorter than 40 bytes"));
        }
        tag = u16_at(24);
    }
    if channels == 0 {
        return Err(malformed(path, "zero channels"));
    }
    if sample_rate == 0 {
        return Err(malformed(path, "zero sample rate"));
    }

    let format = match (tag, bits_per_sample) {
        (WAVE_FORMAT_PCM, 8 | 16 | 24 | 32) => SampleFormat::Int,
        (WAVE_FORMAT_PCM, bits) => {
            return Err(unsupported(path, format!("{bits}-bit integer PCM")))
        }
        (WAVE_FORMAT_IEEE_FLOAT, 32) => SampleFormat::Float,
        (WAVE_FORMAT_IEEE_FLOAT, bits) => {
            return Err(unsupported(path, format!("{bits}-bit float payload")))
        }
        (other, _) => return Err(unsupported(path, format!("format tag {other:#06x}"))),
    };

    let expected_align = u32::from(channels) * u32::from(bits_per_sample / 8);
    if u32::from(block_align) != expected_align {
        return Err(malformed(
            path,
            format!("block align {block_align} inconsistent with {channels} x {bits_per_sample}-bit"),
        ));
    }

    Ok(FmtChunk {
        format,
        channels,
        sample_rate,
        bits_per_sample,
    })
}

fn metadata_from_reader<R: Read + Seek>(
    reader: &mut R,
    path: &Path,
) -> Result<AudioMetadata, MediaError> {
    let mut preamble = [0u8; 12];
    read_header_bytes(reader, &mut preamble, path, "RIFF preamble")?;
    if &preamble[0..4] != b"RIFF" || &preamble[8..12] != b"WAVE" {
        return Err(malformed(path, "not a RIFF/WAVE container"));
    }

    let mut fmt: Option<FmtChunk> = None;
    let mut pos: u64 = 12;
    loop {
        let mut header = [0u8; 8];
        read_header_bytes(reader, &mut header, path, "chunk header (no data chunk found)")?;
        let id = [header[0], header[1], header[2], header[3]];
        let size = u32::from_le_bytes([header[4], header[5], header[6], header[7]]);
        pos += 8;

        match &id {
            b"fmt " => {
                let mut body = vec![0u8; size as usize];
                read_header_bytes(reader, &mut body, path, "fmt chunk")?;
                fmt = Some(parse_fmt(&body, path)?);
                pos += u64::from(size);
                if size % 2 == 1 {
                    pos += 1;
                    reader.seek(SeekFrom::Start(pos)).map_err(io_err(path))?;
                }
            }
            b"data" => {
                let fmt = fmt.ok_or_else(|| malformed(path, "data chunk precedes fmt chunk"))?;
                let block = u64::from(fmt.channels) * u64::from(fmt.bits_per_sample / 8);
                let n_frames = u64::from(size) / block;
                return Ok(AudioMetadata {
                    path: path.to_path_buf(),
                    sample_rate: fmt.sample_rate,
                    channels: fmt.channels,
                    bits_per_sample: fmt.bits_per_sample,
                    format: fmt.format,
                    n_frames,
                    duration: n_frames as f64 / f64::from(fmt.sample_rate),
                    data_offset: pos,
                });
            }
            _ => {
                pos += u64::from(size) + u64::from(size % 2);
                reader.seek(SeekFrom::Start(pos)).map_err(io_err(path))?;
            }
        }
    }
}

/// Parses the RIFF/WAVE header of `path` without reading the sample payload.
pub fn read_metadata(path: impl AsRef<Path>) -> Result<AudioMetadata, MediaError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(io_err(path))?;
    let mut reader = BufReader::new(file);
    metadata_from_reader(&mut reader, path)
}

fn sample_at(bytes: &[u8], format: SampleFormat, bits: u16) -> f64 {
    match (format, bits) {
        (SampleFormat::Int, 8) => (f64::from(bytes[0]) - 128.0) / 128.0,
        (SampleFormat::Int, 16) => f64::from(i16::from_le_bytes([bytes[0], bytes[1]])) / 32768.0,
        (SampleFormat::Int, 24) => {
            let raw = i32::from_le_bytes([0, bytes[0], bytes[1], bytes[2]]) >> 8;
            f64::from(raw) / 8_388_608.0
        }
        (SampleFormat::Int, 32) => {
            f64::from(i32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]])) / 2_147_483_648.0
        }
        (SampleFormat::Float, _) => {
            let v = f64::from(f32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]));
            if v.is_nan() {
                0.0
            } else {
                v
            }
        }
        _ => unreachable!("encoding validated by read_metadata"),
    }
}

/// Decodes the whole payload to mono (channel mean), scaled and clamped to `[-1, 1]`.
pub fn decode(path: impl AsRef<Path>) -> Result<SampleBuffer, MediaError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(io_err(path))?;
    let mut reader = BufReader::new(file);
    let meta = metadata_from_reader(&mut reader, path)?;
    reader
        .seek(SeekFrom::Start(meta.data_offset))
        .map_err(io_err(path))?;

    let frame_bytes = meta.bytes_per_frame();
    let want = meta.n_frames * frame_bytes;
    let mut payload = Vec::with_capacity(want as usize);
    reader
        .take(want)
        .read_to_end(&mut payload)
        .map_err(io_err(path))?;
    if (payload.len() as u64) < want {
        return Err(MediaError::PayloadTruncated {
            path: path.to_path_buf(),
            declared: meta.n_frames,
            found: payload.len() as u64 / frame_bytes,
        });
    }

    let width = usize::from(meta.bits_per_sample / 8);
    let channels = usize::from(meta.channels);
    let samples = payload
        .chunks_exact(frame_bytes as usize)
        .map(|frame| {
            let sum: f64 = frame
                .chunks_exact(width)
                .map(|s| sample_at(s, meta.format, meta.bits_per_sample))
                .sum();
            (sum / channels as f64).clamp(-1.0, 1.0) as f32
        })
        .collect();

    Ok(SampleBuffer::new(samples, meta.sample_rate))
}

/// Quantizes a sample in `[-1, 1]` to signed 16-bit.
pub fn quantize_i16(x: f32) -> i16 {
    (f64::from(x) * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}

/// Writes interleaved 16-bit PCM frames as a canonical 44-byte-header WAV file.
pub fn write_wav_i16(
    path: impl AsRef<Path>,
    interleaved: &[i16],
    sample_rate: u32,
    channels: u16,
) -> Result<(), MediaError> {
    let path = path.as_ref();
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    let data_len = (interleaved.len() * 2) as u32;
    let block_align = channels * 2;
    let mut header = Vec::with_capacity(44);
    header.extend_from_slice(b"RIFF");
    header.extend_from_slice(&(36 + data_len).to_le_bytes());
    header.extend_from_slice(b"WAVEfmt ");
    header.extend_from_slice(&16u32.to_le_bytes());
    header.extend_from_slice(&WAVE_FORMAT_PCM.to_le_bytes());
    header.extend_from_slice(&channels.to_le_bytes());
    header.extend_from_slice(&sample_rate.to_le_bytes());
    header.extend_from_slice(&(sample_rate * u32::from(block_align)).to_le_bytes());
    header.extend_from_slice(&block_align.to_le_bytes());
    header.extend_from_slice(&16u16.to_le_bytes());
    header.extend_from_slice(b"data");
    header.extend_from_slice(&data_len.to_le_bytes());

    let write = |w: &mut BufWriter<File>| -> io::Result<()> {
        w.write_all(&header)?;
        for s in interleaved {
            w.write_all(&s.to_le_bytes())?;
        }
        w.flush()
    };
    write(&mut w).map_err(io_err(path))
}
