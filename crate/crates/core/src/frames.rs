//! Time-sampled stacks of 2-D frames and their binary container.
//!
//! Layout (all little-endian): magic `MFRS`, version `u16`, width `u32`,
//! height `u32`, n_frames `u32`, fps `f64`, t0 `f64`, followed by `n_frames`
//! row-major frames of `f32`. Single maps are stored with `n_frames = 1`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"MFRS";
pub const FORMAT_VERSION: u16 = 1;
pub const HEADER_LEN: usize = 34;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameHeader {
    pub width: u32,
    pub height: u32,
    pub n_frames: u32,
    pub fps: f64,
    pub t0: f64,
}

impl FrameHeader {
    fn frame_len(&self) -> usize {
        self.width as usize * self.height as usize
    }

    fn encode(&self) -> [u8; HEADER_LEN] {
        let mut buf = [0u8; HEADER_LEN];
        buf[0..4].copy_from_slice(MAGIC);
        buf[4..6].copy_from_slice(&FORMAT_VERSION.to_le_bytes());
        buf[6..10].copy_from_slice(&self.width.to_le_bytes());
        buf[10..14].copy_from_slice(&self.height.to_le_bytes());
        buf[14..18].copy_from_slice(&self.n_frames.to_le_bytes());
        buf[18..26].copy_from_slice(&self.fps.to_le_bytes());
        buf[26..34].copy_from_slice(&self.t0.to_le_bytes());
        buf
    }

    fn decode(buf: &[u8; HEADER_LEN]) -> Result<Self> {
        if &buf[0..4] != MAGIC {
            return Err(Error::Format("bad magic, not a frame stack file".into()));
        }
        let version = u16::from_le_bytes([buf[4], buf[5]]);
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported frame stack version {version} (expected {FORMAT_VERSION})"
            )));
        }
        let u32_at = |i: usize| u32::from_le_bytes(buf[i..i + 4].try_into().unwrap());
        let f64_at = |i: usize| f64::from_le_bytes(buf[i..i + 8].try_into().unwrap());
        let header = FrameHeader {
            width: u32_at(6),
            height: u32_at(10),
            n_frames: u32_at(14),
            fps: f64_at(18),
            t0: f64_at(26),
        };
        if header.n_frames == 0 || !(header.fps > 0.0) {
            return Err(Error::Format("frame stack needs n_frames >= 1 and fps > 0".into()));
        }
        Ok(header)
    }
}

/// Frames held in memory at double precision; files store `f32`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameStack {
    pub width: usize,
    pub height: usize,
    pub fps: f64,
    pub t0: f64,
    data: Vec<f64>,
}

impl FrameStack {
    pub fn new(width: usize, height: usize, fps: f64, t0: f64, data: Vec<f64>) -> Result<Self> {
        let len = width * height;
        if len == 0 || data.is_empty() || data.len() % len != 0 {
            return Err(Error::DimensionMismatch(format!(
                "{} samples do not form whole {width}x{height} frames",
                data.len()
            )));
        }
        if !(fps > 0.0) {
            return Err(Error::invalid("fps must be > 0"));
        }
        Ok(FrameStack {
            width,
            height,
            fps,
            t0,
            data,
        })
    }

    pub fn from_frames(frames: &[Array2<f64>], fps: f64, t0: f64) -> Result<Self> {
        let first = frames
            .first()
            .ok_or_else(|| Error::invalid("frame stack needs at least one frame"))?;
        let (h, w) = first.dim();
        let mut data = Vec::with_capacity(h * w * frames.len());
        for f in frames {
            if f.dim() != (h, w) {
                return Err(Error::DimensionMismatch("frames differ in size".into()));
            }
            data.extend(f.iter());
        }
        FrameStack::new(w, h, fps, t0, data)
    }

    /// A single map stored as a one-frame stack.
    pub fn from_map(map: &Array2<f64>) -> Self {
        let (h, w) = map.dim();
        FrameStack::new(w, h, 1.0, 0.0, map.iter().copied().collect()).expect("non-empty map")
    }

    pub fn n_frames(&self) -> usize {
        self.data.len() / (self.width * self.height)
    }

    pub fn frame(&self, k: usize) -> ArrayView2<'_, f64> {
        let len = self.width * self.height;
        ArrayView2::from_shape((self.height, self.width), &self.data[k * len..(k + 1) * len])
            .expect("frame slice matches shape")
    }

    pub fn frame_time(&self, k: usize) -> f64 {
        self.t0 + k as f64 / self.fps
    }

    pub fn pixel_series(&self, row: usize, col: usize) -> Vec<f64> {
        let len = self.width * self.height;
        let idx = row * self.width + col;
        (0..self.n_frames()).map(|k| self.data[k * len + idx]).collect()
    }

    pub fn header(&self) -> FrameHeader {
        FrameHeader {
            width: self.width as u32,
            height: self.height as u32,
            n_frames: self.n_frames() as u32,
            fps: self.fps,
            t0: self.t0,
        }
    }

    /// Rounds every sample through `f32`, as a write/read cycle does.
    pub fn quantized(&self) -> FrameStack {
        FrameStack {
            data: self.data.iter().map(|&v| v as f32 as f64).collect(),
            ..self.clone()
        }
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = FrameWriter::create(path, self.header())?;
        for k in 0..self.n_frames() {
            w.push(self.frame(k))?;
        }
        w.finish()
    }

    pub fn read(path: impl AsRef<Path>) -> Result<FrameStack> {
        let mut r = FrameReader::open(path)?;
        let header = r.header;
        let mut data = Vec::with_capacity(header.frame_len() * header.n_frames as usize);
        while let Some(frame) = r.next_frame()? {
            data.extend(frame.iter());
        }
        FrameStack::new(
            header.width as usize,
            header.height as usize,
            header.fps,
            header.t0,
            data,
        )
    }
}

pub fn write_map(path: impl AsRef<Path>, map: &Array2<f64>) -> Result<()> {
    FrameStack::from_map(map).write(path)
}

pub fn read_map(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    let stack = FrameStack::read(path)?;
    if stack.n_frames() != 1 {
        return Err(Error::Format(format!(
            "expected a single-frame map, found {} frames",
            stack.n_frames()
        )));
    }
    Ok(stack.frame(0).to_owned())
}

/// Streams frames to disk one at a time.
pub struct FrameWriter {
    out: BufWriter<File>,
    header: FrameHeader,
    written: u32,
    path: String,
}

impl FrameWriter {
    pub fn create(path: impl AsRef<Path>, header: FrameHeader) -> Result<Self> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        out.write_all(&header.encode()).map_err(|e| Error::io(path, e))?;
        Ok(FrameWriter {
            out,
            header,
            written: 0,
            path: path.display().to_string(),
        })
    }

    pub fn push(&mut self, frame: ArrayView2<'_, f64>) -> Result<()> {
        if frame.dim() != (self.header.height as usize, self.header.width as usize) {
            return Err(Error::DimensionMismatch("frame size differs from header".into()));
        }
        if self.written == self.header.n_frames {
            return Err(Error::invalid("more frames pushed than declared in header"));
        }
        let mut buf = Vec::with_capacity(frame.len() * 4);
        for &v in frame.iter() {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
        self.out.write_all(&buf).map_err(|e| Error::io(&self.path, e))?;
        self.written += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        if self.written != self.header.n_frames {
            return Err(Error::invalid(format!(
                "{} of {} declared frames written",
                self.written, self.header.n_frames
            )));
        }
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}

/// Streams frames from disk one at a time.
pub struct FrameReader {
    input: BufReader<File>,
    pub header: FrameHeader,
    read: u32,
    path: String,
}

impl FrameReader {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut input = BufReader::new(file);
        let mut buf = [0u8; HEADER_LEN];
        input
            .read_exact(&mut buf)
            .map_err(|_| Error::Format(format!("{}: truncated header", path.display())))?;
        let header = FrameHeader::decode(&buf)?;
        Ok(FrameReader {
            input,
            header,
            read: 0,
            path: path.display().to_string(),
        })
    }

    pub fn next_frame(&mut self) -> Result<Option<Array2<f64>>> {
        if self.read == self.header.n_frames {
            return Ok(None);
        }
        let len = self.header.frame_len();
        let mut buf = vec![0u8; len * 4];
        self.input
            .read_exact(&mut buf)
            .map_err(|_| Error::Format(format!("{}: truncated frame {}", self.path, self.read)))?;
        self.read += 1;
        let values = buf
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
            .collect();
        Ok(Some(
            Array2::from_shape_vec(
                (self.header.height as usize, self.header.width as usize),
                values,
            )
            .expect("frame length matches header"),
        ))
    }
}
