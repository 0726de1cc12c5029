//! File formats: raw pulse captures, range-Doppler dumps and event logs.
//!
//! Pulse file: a 64-byte little-endian header followed by interleaved `f32`
//! I/Q samples, one sequence per pulse.
//!
//! | offset | type | field |
//! |-------:|------|-------|
//! | 0  | `[u8; 8]` | magic `ISACPULS` |
//! | 8  | u32 | version (1) |
//! | 12 | u32 | header length (64) |
//! | 16 | u32 | sequence length |
//! | 20 | u32 | flags (0) |
//! | 24 | f64 | sample rate, Hz |
//! | 32 | f64 | pulse repetition interval, s |
//! | 40 | f64 | carrier frequency, Hz |
//! | 48 | u64 | pulse count |
//! | 56 | 8 bytes | reserved |
//!
//! Range-Doppler dump: 64-byte header then `rows × cols` `f32` dB values,
//! Doppler-major (row 0 is the most negative velocity).
//!
//! | offset | type | field |
//! |-------:|------|-------|
//! | 0  | `[u8; 8]` | magic `ISACRDMP` |
//! | 8  | u32 | version (1) |
//! | 12 | u32 | header length (64) |
//! | 16 | u32 | rows (Doppler bins) |
//! | 20 | u32 | columns (range bins) |
//! | 24 | u64 | frame index |
//! | 32 | f64 | frame time, s |
//! | 40 | f64 | range bin, m |
//! | 48 | f64 | velocity bin, m/s |
//! | 56 | 8 bytes | reserved |

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use num_complex::Complex;

use crate::error::{Error, Result};
use crate::params::DerivedParams;
use crate::pipeline::{Frame, FrameEvent, FrameSource};
use crate::rd::RangeDopplerMap;
use crate::scalar::Real;
use crate::synth::PulseBlock;

pub const PULSE_MAGIC: &[u8; 8] = b"ISACPULS";
pub const RD_MAGIC: &[u8; 8] = b"ISACRDMP";
pub const FORMAT_VERSION: u32 = 1;
pub const HEADER_LEN: u32 = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseFileHeader {
    pub sequence_length: u32,
    pub flags: u32,
    pub sample_rate: f64,
    pub pri: f64,
    pub carrier_frequency: f64,
    pub pulse_count: u64,
}

impl PulseFileHeader {
    pub fn for_params(params: &DerivedParams, pulse_count: u64) -> Self {
        Self {
            sequence_length: params.sequence_length as u32,
            flags: 0,
            sample_rate: params.sample_rate,
            pri: params.pri,
            carrier_frequency: params.carrier_frequency,
            pulse_count,
        }
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(PULSE_MAGIC)?;
        w.write_u32::<LE>(FORMAT_VERSION)?;
        w.write_u32::<LE>(HEADER_LEN)?;
        w.write_u32::<LE>(self.sequence_length)?;
        w.write_u32::<LE>(self.flags)?;
        w.write_f64::<LE>(self.sample_rate)?;
        w.write_f64::<LE>(self.pri)?;
        w.write_f64::<LE>(self.carrier_frequency)?;
        w.write_u64::<LE>(self.pulse_count)?;
        w.write_all(&[0; 8])?;
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0; 8];
        r.read_exact(&mut magic)?;
        if &magic != PULSE_MAGIC {
            return Err(Error::Format("not a pulse file (bad magic)".into()));
        }
        check_version(r)?;
        let header = Self {
            sequence_length: r.read_u32::<LE>()?,
            flags: r.read_u32::<LE>()?,
            sample_rate: r.read_f64::<LE>()?,
            pri: r.read_f64::<LE>()?,
            carrier_frequency: r.read_f64::<LE>()?,
            pulse_count: r.read_u64::<LE>()?,
        };
        r.read_exact(&mut [0; 8])?;
        Ok(header)
    }

    /// Reject captures whose timing does not match the processing parameters.
    pub fn check_params(&self, params: &DerivedParams) -> Result<()> {
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * a.abs().max(b.abs());
        if self.sequence_length as usize != params.sequence_length {
            return Err(Error::Format(format!(
                "capture sequence length {} differs from configured {}",
                self.sequence_length, params.sequence_length
            )));
        }
        if !close(self.sample_rate, params.sample_rate) || !close(self.pri, params.pri) {
            return Err(Error::Format(format!(
                "capture sample rate {} Hz / PRI {} s differ from configured {} Hz / {} s",
                self.sample_rate, self.pri, params.sample_rate, params.pri
            )));
        }
        if !close(self.carrier_frequency, params.carrier_frequency) {
            return Err(Error::Format(format!(
                "capture carrier {} Hz differs from configured {} Hz",
                self.carrier_frequency, params.carrier_frequency
            )));
        }
        Ok(())
    }
}

fn check_version<R: Read>(r: &mut R) -> Result<()> {
    let version = r.read_u32::<LE>()?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported format version {version}"
        )));
    }
    let header_len = r.read_u32::<LE>()?;
    if header_len != HEADER_LEN {
        return Err(Error::Format(format!(
            "unexpected header length {header_len}"
        )));
    }
    Ok(())
}

/// Streams pulses into a capture file. The pulse count is patched on `finish`.
pub struct PulseWriter<W: Write + Seek> {
    inner: W,
    header: PulseFileHeader,
}

impl PulseWriter<BufWriter<File>> {
    pub fn create(path: impl AsRef<Path>, params: &DerivedParams) -> Result<Self> {
        Self::new(BufWriter::new(File::create(path)?), params)
    }
}

impl<W: Write + Seek> PulseWriter<W> {
    pub fn new(mut inner: W, params: &DerivedParams) -> Result<Self> {
        let header = PulseFileHeader::for_params(params, 0);
        header.write_to(&mut inner)?;
        Ok(Self { inner, header })
    }

    pub fn write_pulse<T: Real>(&mut self, samples: &[Complex<T>]) -> Result<()> {
        if samples.len() != self.header.sequence_length as usize {
            return Err(Error::LengthMismatch {
                expected: self.header.sequence_length as usize,
                actual: samples.len(),
            });
        }
        for s in samples {
            self.inner.write_f32::<LE>(s.re.to_real() as f32)?;
            self.inner.write_f32::<LE>(s.im.to_real() as f32)?;
        }
        self.header.pulse_count += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.inner.seek(SeekFrom::Start(0))?;
        self.header.write_to(&mut self.inner)?;
        self.inner.seek(SeekFrom::End(0))?;
        self.inner.flush()?;
        Ok(self.inner)
    }
}

/// Frames read from a pulse capture. Trailing pulses that do not fill a CPI are
/// ignored. The first CPI doubles as the noise-floor calibration CPI, so
/// captures should start target-free unless a fixed floor is configured.
pub struct FileSource<R> {
    reader: R,
    header: PulseFileHeader,
    params: DerivedParams,
    next: u64,
    frames: u64,
    buffer: Vec<u8>,
}

impl FileSource<BufReader<File>> {
    pub fn open(path: impl AsRef<Path>, params: &DerivedParams) -> Result<Self> {
        Self::new(BufReader::new(File::open(path)?), params)
    }
}

impl<R: Read + Seek + Send> FileSource<R> {
    pub fn new(mut reader: R, params: &DerivedParams) -> Result<Self> {
        let header = PulseFileHeader::read_from(&mut reader)?;
        header.check_params(params)?;
        let pulse_bytes = params.sequence_length as u64 * 8;
        let end = reader.seek(SeekFrom::End(0))?;
        let available = end.saturating_sub(HEADER_LEN as u64) / pulse_bytes;
        if available < header.pulse_count {
            return Err(Error::Format(format!(
                "header declares {} pulses but the file holds {available}",
                header.pulse_count
            )));
        }
        reader.seek(SeekFrom::Start(HEADER_LEN as u64))?;
        Ok(Self {
            reader,
            header,
            params: *params,
            next: 0,
            frames: header.pulse_count / params.cpi_pulses as u64,
            buffer: vec![0; pulse_bytes as usize],
        })
    }

    pub fn header(&self) -> &PulseFileHeader {
        &self.header
    }

    pub fn frames(&self) -> u64 {
        self.frames
    }

    fn read_frame<T: Real>(&mut self, index: u64) -> Result<Frame<T>> {
        let n = self.params.sequence_length;
        let cpi = self.params.cpi_pulses as u64;
        let offset = HEADER_LEN as u64 + index * cpi * n as u64 * 8;
        self.reader.seek(SeekFrom::Start(offset))?;
        let mut pulses = Vec::with_capacity(cpi as usize);
        for k in 0..cpi {
            self.reader.read_exact(&mut self.buffer)?;
            let samples = self
                .buffer
                .chunks_exact(8)
                .map(|c| {
                    let re = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
                    let im = f32::from_le_bytes([c[4], c[5], c[6], c[7]]);
                    Complex::new(T::from_real(re as f64), T::from_real(im as f64))
                })
                .collect();
            pulses.push(PulseBlock {
                samples,
                pulse_time: (index * cpi + k) as f64 * self.params.pri,
            });
        }
        Ok(Frame {
            index,
            start_time: (index * cpi) as f64 * self.params.pri,
            pulses,
            ground_truth: None,
        })
    }
}

impl<T: Real, R: Read + Seek + Send> FrameSource<T> for FileSource<R> {
    fn params(&self) -> &DerivedParams {
        &self.params
    }

    fn calibration_frame(&mut self) -> Result<Option<Frame<T>>> {
        if self.frames == 0 {
            return Ok(None);
        }
        self.read_frame(0).map(Some)
    }

    fn next_frame(&mut self) -> Result<Option<Frame<T>>> {
        if self.next >= self.frames {
            return Ok(None);
        }
        let frame = self.read_frame(self.next)?;
        self.next += 1;
        Ok(Some(frame))
    }
}

/// Write a map as a binary dump (see module docs).
pub fn write_rd_dump<T: Real, W: Write>(map: &RangeDopplerMap<T>, w: &mut W) -> Result<()> {
    w.write_all(RD_MAGIC)?;
    w.write_u32::<LE>(FORMAT_VERSION)?;
    w.write_u32::<LE>(HEADER_LEN)?;
    w.write_u32::<LE>(map.doppler_bins() as u32)?;
    w.write_u32::<LE>(map.range_bins() as u32)?;
    w.write_u64::<LE>(map.frame_index)?;
    w.write_f64::<LE>(map.frame_time)?;
    w.write_f64::<LE>(map.range_step)?;
    w.write_f64::<LE>(map.velocity_step)?;
    w.write_all(&[0; 8])?;
    let mut bytes = Vec::with_capacity(map.doppler_bins() * map.range_bins() * 4);
    for v in map.to_row_major() {
        bytes.extend_from_slice(&(v.to_real() as f32).to_le_bytes());
    }
    w.write_all(&bytes)?;
    Ok(())
}

pub fn save_rd_dump<T: Real>(map: &RangeDopplerMap<T>, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_rd_dump(map, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn read_rd_dump<R: Read>(r: &mut R) -> Result<RangeDopplerMap<f32>> {
    let mut magic = [0; 8];
    r.read_exact(&mut magic)?;
    if &magic != RD_MAGIC {
        return Err(Error::Format("not a range-Doppler dump (bad magic)".into()));
    }
    check_version(r)?;
    let rows = r.read_u32::<LE>()? as usize;
    let cols = r.read_u32::<LE>()? as usize;
    let frame_index = r.read_u64::<LE>()?;
    let frame_time = r.read_f64::<LE>()?;
    let range_step = r.read_f64::<LE>()?;
    let velocity_step = r.read_f64::<LE>()?;
    r.read_exact(&mut [0; 8])?;
    let mut values = vec![0f32; rows * cols];
    r.read_f32_into::<LE>(&mut values)?;
    let mut map = RangeDopplerMap::from_fn(rows, cols, range_step, velocity_step, |d, c| {
        values[d * cols + c]
    });
    map.frame_index = frame_index;
    map.frame_time = frame_time;
    Ok(map)
}

pub fn load_rd_dump(path: impl AsRef<Path>) -> Result<RangeDopplerMap<f32>> {
    read_rd_dump(&mut BufReader::new(File::open(path)?))
}

/// Grayscale PNG over `[floor_db, 0]` dB, zero Doppler in the middle row and
/// positive velocity at the top. Only range bins `[range_lo, range_hi)` are drawn.
pub fn save_rd_png<T: Real>(
    map: &RangeDopplerMap<T>,
    path: impl AsRef<Path>,
    range_lo: usize,
    range_hi: usize,
    floor_db: f64,
) -> Result<()> {
    let hi = range_hi.min(map.range_bins());
    if range_lo >= hi || !(floor_db < 0.0) {
        return Err(Error::Config(format!(
            "cannot render range bins [{range_lo}, {range_hi}) with floor {floor_db} dB"
        )));
    }
    let rows = map.doppler_bins();
    let img = image::GrayImage::from_fn((hi - range_lo) as u32, rows as u32, |x, y| {
        let db = map
            .get(rows - 1 - y as usize, range_lo + x as usize)
            .to_real();
        let q = ((db.clamp(floor_db, 0.0) - floor_db) / -floor_db * 255.0).round();
        image::Luma([q as u8])
    });
    img.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

/// CSV event log. The `compute_time` column is only written when timing is
/// enabled, so default logs are byte-identical across runs.
pub struct EventCsvWriter<W: Write> {
    writer: csv::Writer<W>,
    timing: bool,
}

pub const EVENT_COLUMNS: [&str; 12] = [
    "frame_index",
    "frame_time",
    "detected",
    "power_db",
    "detection_range",
    "detection_velocity",
    "track_range",
    "track_velocity",
    "v_md",
    "drift",
    "state",
    "ground_truth",
];

impl<W: Write> EventCsvWriter<W> {
    pub fn new(inner: W, timing: bool) -> Result<Self> {
        let mut writer = csv::Writer::from_writer(inner);
        let mut header: Vec<&str> = EVENT_COLUMNS.to_vec();
        if timing {
            header.push("compute_time");
        }
        writer.write_record(&header)?;
        Ok(Self { writer, timing })
    }

    pub fn write(&mut self, e: &FrameEvent) -> Result<()> {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut row = vec![
            e.frame_index.to_string(),
            e.frame_time.to_string(),
            e.detected.to_string(),
            e.power_db.to_string(),
            e.detection_range.to_string(),
            e.detection_velocity.to_string(),
            opt(e.track_range),
            opt(e.track_velocity),
            e.v_md.to_string(),
            e.drift.to_string(),
            e.state.to_string(),
            e.ground_truth.map(|a| a.to_string()).unwrap_or_default(),
        ];
        if self.timing {
            row.push(e.compute_time.to_string());
        }
        self.writer.write_record(&row)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.writer.flush()?;
        self.writer
            .into_inner()
            .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
    }
}

/// One JSON object per line; `compute_time` is dropped unless timing is enabled.
pub struct EventNdjsonWriter<W: Write> {
    inner: W,
    timing: bool,
}

impl<W: Write> EventNdjsonWriter<W> {
    pub fn new(inner: W, timing: bool) -> Self {
        Self { inner, timing }
    }

    pub fn write(&mut self, e: &FrameEvent) -> Result<()> {
        let mut value = serde_json::to_value(e)?;
        if !self.timing {
            if let Some(obj) = value.as_object_mut() {
                obj.remove("compute_time");
            }
        }
        serde_json::to_writer(&mut self.inner, &value)?;
        self.inner.write_all(b"\n")?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.inner.flush()?;
        Ok(self.inner)
    }
}

/// Parse an event CSV written by [`EventCsvWriter`].
pub fn read_events_csv<R: Read>(r: R) -> Result<Vec<FrameEvent>> {
    let mut reader = csv::Reader::from_reader(r);
    let headers = reader.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let idx: Vec<usize> = EVENT_COLUMNS
        .iter()
        .map(|c| col(c).ok_or_else(|| Error::Format(format!("event log lacks column {c}"))))
        .collect::<Result<_>>()?;
    let timing = col("compute_time");
    let bad = |field: &str, v: &str| Error::Format(format!("bad {field} value {v:?}"));
    let mut events = Vec::new();
    for record in reader.records() {
        let record = record?;
        let get = |k: usize| record.get(idx[k]).unwrap_or("");
        let num =
            |k: usize| -> Result<f64> { get(k).parse().map_err(|_| bad(EVENT_COLUMNS[k], get(k))) };
        let opt = |k: usize| -> Result<Option<f64>> {
            if get(k).is_empty() {
                Ok(None)
            } else {
                num(k).map(Some)
            }
        };
        events.push(FrameEvent {
            frame_index: get(0).parse().map_err(|_| bad("frame_index", get(0)))?,
            frame_time: num(1)?,
            detected: get(2).parse().map_err(|_| bad("detected", get(2)))?,
            power_db: num(3)?,
            detection_range: num(4)?,
            detection_velocity: num(5)?,
            track_range: opt(6)?,
            track_velocity: opt(7)?,
            v_md: num(8)?,
            drift: num(9)?,
            state: get(10).parse().map_err(|_| bad("state", get(10)))?,
            ground_truth: match get(11) {
                "" => None,
                s => Some(s.parse().map_err(|_| bad("ground_truth", s))?),
            },
            compute_time: match timing.and_then(|i| record.get(i)) {
                Some(s) if !s.is_empty() => s.parse().map_err(|_| bad("compute_time", s))?,
                _ => 0.0,
            },
        });
    }
    Ok(events)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activity::Activity;
    use std::io::Cursor;

    fn small_params() -> DerivedParams {
        crate::params::derive(&crate::SystemConfig {
            sequence_length: 16,
            cpi_pulses: 4,
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn pulse_file_round_trip() {
        let p = small_params();
        let mut w = PulseWriter::new(Cursor::new(Vec::new()), &p).unwrap();
        for k in 0..9 {
            let pulse: Vec<Complex<f64>> = (0..16)
                .map(|i| Complex::new(i as f64 + k as f64, -(i as f64)))
                .collect();
            w.write_pulse(&pulse).unwrap();
        }
        assert!(w.write_pulse(&[Complex::new(0.0f64, 0.0)]).is_err());
        let cursor = w.finish().unwrap();
        assert_eq!(cursor.get_ref().len(), 64 + 9 * 16 * 8);

        let mut src = FileSource::new(Cursor::new(cursor.into_inner()), &p).unwrap();
        assert_eq!(src.header().pulse_count, 9);
        assert_eq!(src.frames(), 2);
        let f0: Frame<f64> = src.next_frame().unwrap().unwrap();
        let f1: Frame<f64> = src.next_frame().unwrap().unwrap();
        assert!(FrameSource::<f64>::next_frame(&mut src).unwrap().is_none());
        assert_eq!(f0.pulses.len(), 4);
        assert_eq!(f1.pulses[1].samples[3], Complex::new(3.0 + 5.0, -3.0));
        assert_eq!(f1.start_time, 4.0 * p.pri);
    }

    #[test]
    fn pulse_file_rejects_mismatch() {
        let p = small_params();
        let w = PulseWriter::new(Cursor::new(Vec::new()), &p).unwrap();
        let bytes = w.finish().unwrap().into_inner();
        let other = crate::params::derive(&crate::SystemConfig {
            sequence_length: 32,
            cpi_pulses: 4,
            ..Default::default()
        })
        .unwrap();
        assert!(matches!(
            FileSource::new(Cursor::new(bytes.clone()), &other),
            Err(Error::Format(_))
        ));
        let mut corrupt = bytes;
        corrupt[0] = b'X';
        assert!(matches!(
            FileSource::new(Cursor::new(corrupt), &p),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn rd_dump_round_trip() {
        let mut map =
            RangeDopplerMap::<f64>::from_fn(8, 5, 0.0375, 0.009, |d, r| (d * 10 + r) as f64 * -0.5);
        map.frame_index = 42;
        map.frame_time = 4.5;
        let mut bytes = Vec::new();
        write_rd_dump(&map, &mut bytes).unwrap();
        assert_eq!(bytes.len(), 64 + 8 * 5 * 4);
        let back = read_rd_dump(&mut Cursor::new(bytes)).unwrap();
        assert_eq!(back.frame_index, 42);
        assert_eq!(back.frame_time, 4.5);
        assert_eq!(back.get(7, 4), -37.0);
        assert_eq!(back.range_step, 0.0375);
    }

    fn event(k: u64, timing: f64) -> FrameEvent {
        FrameEvent {
            frame_index: k,
            frame_time: 0.0524288 + k as f64 * 0.1048576,
            detected: k.is_multiple_of(2),
            power_db: -3.25,
            detection_range: 3.1,
            detection_velocity: -0.2,
            track_range: (k > 0).then_some(3.0),
            track_velocity: None,
            v_md: 0.7,
            drift: 0.01,
            state: Activity::Waving,
            ground_truth: Some(Activity::Standing),
            compute_time: timing,
        }
    }

    #[test]
    fn csv_round_trip_and_timing_column() {
        let mut w = EventCsvWriter::new(Vec::new(), false).unwrap();
        w.write(&event(0, 0.5)).unwrap();
        w.write(&event(1, 0.7)).unwrap();
        let bytes = w.finish().unwrap();
        let text = String::from_utf8(bytes.clone()).unwrap();
        assert!(!text.contains("compute_time"));
        let back = read_events_csv(Cursor::new(bytes)).unwrap();
        assert_eq!(back, vec![event(0, 0.0), event(1, 0.0)]);

        let mut w = EventCsvWriter::new(Vec::new(), true).unwrap();
        w.write(&event(3, 0.25)).unwrap();
        let back = read_events_csv(Cursor::new(w.finish().unwrap())).unwrap();
        assert_eq!(back[0].compute_time, 0.25);
    }

    #[test]
    fn ndjson_lines_parse() {
        let mut w = EventNdjsonWriter::new(Vec::new(), false);
        w.write(&event(0, 1.0)).unwrap();
        w.write(&event(1, 1.0)).unwrap();
        let text = String::from_utf8(w.finish().unwrap()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        let v: serde_json::Value = serde_json::from_str(lines[1]).unwrap();
        assert_eq!(v["state"], "waving");
        assert!(v.get("compute_time").is_none());
    }
}
