use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{s, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, LadyError, Result};
use crate::tensor::Real;

/// Token counts and width of one frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameShape {
    pub l_cam: usize,
    pub l_lidar: usize,
    pub d: usize,
}

impl FrameShape {
    pub fn tokens_per_frame(&self) -> usize {
        self.l_cam + self.l_lidar
    }
}

/// Camera and LiDAR tokens of one frame on the 2 Hz grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameTokens<F> {
    pub t: i64,
    pub camera: Array2<F>,
    pub lidar: Array2<F>,
}

impl<F: Real> FrameTokens<F> {
    pub fn zeros(shape: FrameShape, t: i64) -> Self {
        FrameTokens { t, camera: Array2::zeros((shape.l_cam, shape.d)), lidar: Array2::zeros((shape.l_lidar, shape.d)) }
    }

    pub fn shape(&self) -> FrameShape {
        FrameShape { l_cam: self.camera.nrows(), l_lidar: self.lidar.nrows(), d: self.camera.ncols() }
    }
}

/// Frame-major `[cam_1 | lid_1, ..., cam_T | lid_T]` with the shared spatial
/// table added to every frame.
pub fn build_frame_sequence<F: Real>(frames: &[FrameTokens<F>], pos_emb: ArrayView2<F>) -> Result<Array2<F>> {
    let first = frames.first().ok_or_else(|| LadyError::Contract("at least one frame is required".into()))?;
    let shape = first.shape();
    if first.lidar.ncols() != shape.d {
        return Err(dim_err("camera and lidar widths differ"));
    }
    let per = shape.tokens_per_frame();
    if pos_emb.dim() != (per, shape.d) {
        return Err(dim_err(format!("positional table is {:?}, frames need ({per}, {})", pos_emb.dim(), shape.d)));
    }
    for pair in frames.windows(2) {
        if pair[1].t <= pair[0].t {
            return Err(LadyError::Ordering(format!("frame {} follows frame {}", pair[1].t, pair[0].t)));
        }
    }
    let mut seq = Array2::zeros((per * frames.len(), shape.d));
    for (k, f) in frames.iter().enumerate() {
        if f.shape() != shape || f.lidar.ncols() != shape.d {
            return Err(dim_err(format!("frame {} has shape {:?}, expected {shape:?}", f.t, f.shape())));
        }
        let base = k * per;
        seq.slice_mut(s![base..base + shape.l_cam, ..]).assign(&f.camera);
        seq.slice_mut(s![base + shape.l_cam..base + per, ..]).assign(&f.lidar);
        let mut block = seq.slice_mut(s![base..base + per, ..]);
        block += &pos_emb;
    }
    Ok(seq)
}

/// Prepends all-zero frames until there are `required` frames. Padding frames
/// take the indices just before the first real frame.
pub fn pad_history<F: Real>(frames: Vec<FrameTokens<F>>, required: usize, shape: FrameShape) -> Result<Vec<FrameTokens<F>>> {
    if frames.len() > required {
        return Err(LadyError::Contract(format!(
            "{} frames exceed the required history of {required}; truncate first",
            frames.len()
        )));
    }
    let missing = required - frames.len();
    let first_t = frames.first().map(|f| f.t).unwrap_or(0);
    let mut out: Vec<FrameTokens<F>> =
        (0..missing).map(|i| FrameTokens::zeros(shape, first_t - (missing - i) as i64)).collect();
    out.extend(frames);
    Ok(out)
}

/// Splits a fused multi-frame sequence back into per-frame `(camera, lidar)`.
pub fn split_frames<F: Real>(fused: ArrayView2<F>, shape: FrameShape) -> Result<Vec<(Array2<F>, Array2<F>)>> {
    let per = shape.tokens_per_frame();
    if per == 0 || !fused.nrows().is_multiple_of(per) || fused.ncols() != shape.d {
        return Err(dim_err(format!("sequence {:?} is not a whole number of {shape:?} frames", fused.dim())));
    }
    Ok((0..fused.nrows() / per)
        .map(|k| {
            let base = k * per;
            (
                fused.slice(s![base..base + shape.l_cam, ..]).to_owned(),
                fused.slice(s![base + shape.l_cam..base + per, ..]).to_owned(),
            )
        })
        .collect())
}

/// One line of a frame file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub t: i64,
    pub camera: Vec<Vec<f64>>,
    pub lidar: Vec<Vec<f64>>,
}

fn rows_to_matrix<F: Real>(rows: &[Vec<f64>]) -> Result<Array2<F>> {
    let d = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != d) {
        return Err(dim_err("ragged token matrix in frame record"));
    }
    Array2::from_shape_vec((rows.len(), d), rows.iter().flatten().map(|&v| F::of(v)).collect())
        .map_err(|e| dim_err(e.to_string()))
}

impl FrameRecord {
    pub fn from_frame<F: Real>(f: &FrameTokens<F>) -> Self {
        let rows = |m: &Array2<F>| m.rows().into_iter().map(|r| r.iter().map(|v| v.as_f64()).collect()).collect();
        FrameRecord { t: f.t, camera: rows(&f.camera), lidar: rows(&f.lidar) }
    }

    pub fn to_frame<F: Real>(&self) -> Result<FrameTokens<F>> {
        let camera = rows_to_matrix(&self.camera)?;
        let lidar = rows_to_matrix(&self.lidar)?;
        if camera.ncols() != lidar.ncols() {
            return Err(dim_err("camera and lidar widths differ"));
        }
        Ok(FrameTokens { t: self.t, camera, lidar })
    }
}

/// Reads a JSON-lines frame file. Blank lines are skipped.
pub fn read_frames_jsonl<F: Real>(path: impl AsRef<Path>) -> Result<Vec<FrameTokens<F>>> {
    let reader = BufReader::new(File::open(path)?);
    let mut frames = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: FrameRecord = serde_json::from_str(&line)?;
        frames.push(rec.to_frame()?);
    }
    Ok(frames)
}

pub fn write_frames_jsonl<F: Real>(path: impl AsRef<Path>, frames: &[FrameTokens<F>]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for f in frames {
        serde_json::to_writer(&mut w, &FrameRecord::from_frame(f))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}
