use crate::error::{Error, Result};

/// One `H×W×C` image, row-major, intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl Frame {
    pub fn filled(height: usize, width: usize, color: &[f32]) -> Self {
        let mut data = Vec::with_capacity(height * width * color.len());
        for _ in 0..height * width {
            data.extend_from_slice(color);
        }
        Self {
            height,
            width,
            channels: color.len(),
            data,
        }
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.height, self.width, self.channels]
    }

    #[inline]
    pub fn pixel(&self, y: usize, x: usize) -> &[f32] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    /// ITU-R 601 luma, one value per pixel.
    pub fn luma(&self) -> Vec<f64> {
        assert_eq!(self.channels, 3, "luma needs an RGB frame");
        self.data
            .chunks_exact(3)
            .map(|p| 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64)
            .collect()
    }
}

/// `T×H×W×C` intensities in `[0, 1]`, stored contiguously.
#[derive(Debug, Clone, PartialEq)]
pub struct Video {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl Video {
    pub fn new(shape: [usize; 4], data: Vec<f32>) -> Result<Self> {
        let [frames, height, width, channels] = shape;
        if frames * height * width * channels != data.len() {
            return Err(Error::length(
                format!("video of shape {shape:?}"),
                frames * height * width * channels,
                data.len(),
            ));
        }
        Ok(Self {
            frames,
            height,
            width,
            channels,
            data,
        })
    }

    pub fn from_frames(frames: &[Frame]) -> Result<Self> {
        let first = frames
            .first()
            .ok_or_else(|| Error::Empty("frame list".into()))?;
        let mut data = Vec::with_capacity(frames.len() * first.data.len());
        for (i, f) in frames.iter().enumerate() {
            if f.shape() != first.shape() {
                return Err(Error::shape(
                    format!("frame {i}"),
                    &first.shape(),
                    &f.shape(),
                ));
            }
            data.extend_from_slice(&f.data);
        }
        Self::new(
            [frames.len(), first.height, first.width, first.channels],
            data,
        )
    }

    pub fn shape(&self) -> [usize; 4] {
        [self.frames, self.height, self.width, self.channels]
    }

    pub fn frame_len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn frame_data(&self, t: usize) -> &[f32] {
        let n = self.frame_len();
        &self.data[t * n..(t + 1) * n]
    }

    pub fn frame(&self, t: usize) -> Frame {
        Frame {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self.frame_data(t).to_vec(),
        }
    }

    /// Frames `start..end` as a new video.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.frames {
            return Err(Error::InvalidConfig(format!(
                "frame range {start}..{end} outside a {}-frame video",
                self.frames
            )));
        }
        let n = self.frame_len();
        Self::new(
            [end - start, self.height, self.width, self.channels],
            self.data[start * n..end * n].to_vec(),
        )
    }

    pub fn iter_frames(&self) -> impl Iterator<Item = Frame> + '_ {
        (0..self.frames).map(|t| self.frame(t))
    }
}
