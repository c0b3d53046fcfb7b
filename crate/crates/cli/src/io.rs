//! File codecs for the on-disk artifacts.
//!
//! Binary containers (all little-endian):
//! - Range image `.mvri`: magic `MVRI`, u16 version = 1, u32 height,
//!   u32 width, f32 r_max, f32 vfov_min, f32 vfov_max, then
//!   height x width row-major f32 ranges with -1.0 marking invalid cells.
//!   Masks reuse the container with a 0.0 / 1.0 payload.
//! - Point cloud `.mvpc`: magic `MVPC`, u16 version = 1, u32 count, then
//!   count x 3 f32 coordinates.
//! - Checkpoint `.mvck`: magic `MVCK`, u16 version = 1, u64 step, a
//!   length-prefixed TOML echo of the architecture, then length-prefixed
//!   named f64 parameter arrays. Round-trips bit-exactly.
//!
//! Trajectories are plain text, one `timestamp tx ty tz qx qy qz qw` line
//! per pose (TUM convention); `#` starts a comment line.

use std::fs;
use std::path::Path;

use moves_core::geom::{pose_from_parts, pose_parts, Trajectory};
use moves_core::metrics::lqi::LqiModel;
use moves_core::model::{DiscKind, Model, ModelConfig};
use moves_core::sensor::{Mask, PointCloud, RangeImage, SensorConfig};
use serde::{Deserialize, Serialize};

pub const FORMAT_VERSION: u16 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CodecError {
    #[error("malformed header: expected magic {want:?}, found {got:?}")]
    BadMagic { want: &'static str, got: String },
    #[error("unsupported format version {got} (this build reads version {want})")]
    Version { got: u16, want: u16 },
    #[error("truncated payload: needed {want} more bytes, {got} remain")]
    Truncated { want: usize, got: usize },
    #[error("invalid content: {0}")]
    BadValue(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

type Result<T> = std::result::Result<T, CodecError>;

// ---------------------------------------------------------------------------
// little-endian cursor

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let rem = self.buf.len() - self.pos;
        if rem < n {
            return Err(CodecError::Truncated { want: n, got: rem });
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn magic(&mut self, want: &'static str) -> Result<()> {
        let got = self.take(4)?;
        if got != want.as_bytes() {
            return Err(CodecError::BadMagic {
                want,
                got: String::from_utf8_lossy(got).into_owned(),
            });
        }
        Ok(())
    }

    fn version(&mut self) -> Result<()> {
        let got = self.u16()?;
        if got != FORMAT_VERSION {
            return Err(CodecError::Version {
                got,
                want: FORMAT_VERSION,
            });
        }
        Ok(())
    }

    fn done(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(CodecError::BadValue(format!(
                "{} trailing bytes after payload",
                self.buf.len() - self.pos
            )));
        }
        Ok(())
    }
}

/// Quantizes a sensor geometry through the f32 header fields so in-memory
/// configs agree bit-exactly with what a written file reads back.
pub fn quantize_sensor(cfg: &SensorConfig) -> std::result::Result<SensorConfig, String> {
    SensorConfig::new(
        cfg.height,
        cfg.width,
        cfg.vfov_min as f32 as f64,
        cfg.vfov_max as f32 as f64,
        cfg.r_max as f32 as f64,
    )
    .map_err(|e| e.to_string())
}

// ---------------------------------------------------------------------------
// range images and masks

fn encode_header(magic: &str, out: &mut Vec<u8>) {
    out.extend_from_slice(magic.as_bytes());
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
}

/// A decoded grid container before any value-domain validation; range scans
/// and masks share this layer but enforce different payload domains.
struct RawGrid {
    cfg: SensorConfig,
    payload: Vec<f32>,
}

fn encode_grid(cfg: &SensorConfig, payload: &[f32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(26 + 4 * payload.len());
    encode_header("MVRI", &mut out);
    out.extend_from_slice(&(cfg.height as u32).to_le_bytes());
    out.extend_from_slice(&(cfg.width as u32).to_le_bytes());
    out.extend_from_slice(&(cfg.r_max as f32).to_le_bytes());
    out.extend_from_slice(&(cfg.vfov_min as f32).to_le_bytes());
    out.extend_from_slice(&(cfg.vfov_max as f32).to_le_bytes());
    for r in payload {
        out.extend_from_slice(&r.to_le_bytes());
    }
    out
}

fn decode_grid(buf: &[u8]) -> Result<RawGrid> {
    let mut r = Reader::new(buf);
    r.magic("MVRI")?;
    r.version()?;
    let height = r.u32()? as usize;
    let width = r.u32()? as usize;
    let r_max = r.f32()? as f64;
    let vfov_min = r.f32()? as f64;
    let vfov_max = r.f32()? as f64;
    let cfg = SensorConfig::new(height, width, vfov_min, vfov_max, r_max)
        .map_err(|e| CodecError::BadValue(e.to_string()))?;
    let n = height * width;
    let mut payload = Vec::with_capacity(n);
    for _ in 0..n {
        payload.push(r.f32()?);
    }
    r.done()?;
    Ok(RawGrid { cfg, payload })
}

fn encode_range_image(img: &RangeImage) -> Vec<u8> {
    encode_grid(img.config(), img.ranges())
}

pub fn write_range_image(path: &Path, img: &RangeImage) -> Result<()> {
    fs::write(path, encode_range_image(img))?;
    Ok(())
}

pub fn read_range_image(path: &Path) -> Result<RangeImage> {
    let grid = decode_grid(&fs::read(path)?)?;
    RangeImage::from_ranges(grid.cfg, grid.payload)
        .map_err(|e| CodecError::BadValue(e.to_string()))
}

/// Writes a boolean mask in the range-image container (payload 1.0 / 0.0);
/// the sensor supplies the geometry header fields. The payload is written
/// directly because 0.0 is not a legal range value.
pub fn write_mask(path: &Path, mask: &Mask, sensor: &SensorConfig) -> Result<()> {
    if (mask.height(), mask.width()) != (sensor.height, sensor.width) {
        return Err(CodecError::BadValue(format!(
            "mask is {}x{} but sensor is {}x{}",
            mask.height(),
            mask.width(),
            sensor.height,
            sensor.width
        )));
    }
    let payload: Vec<f32> =
        mask.bits().iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    fs::write(path, encode_grid(sensor, &payload))?;
    Ok(())
}

pub fn read_mask(path: &Path) -> Result<(Mask, SensorConfig)> {
    let grid = decode_grid(&fs::read(path)?)?;
    if let Some(&v) = grid.payload.iter().find(|&&v| v != 0.0 && v != 1.0) {
        return Err(CodecError::BadValue(format!(
            "mask payload holds {v}, expected only 0.0 or 1.0"
        )));
    }
    let bits: Vec<bool> = grid.payload.iter().map(|&v| v == 1.0).collect();
    let mask = Mask::from_bits(grid.cfg.height, grid.cfg.width, bits)
        .map_err(|e| CodecError::BadValue(e.to_string()))?;
    Ok((mask, grid.cfg))
}

// ---------------------------------------------------------------------------
// point clouds

pub fn write_point_cloud(path: &Path, cloud: &PointCloud) -> Result<()> {
    let mut out = Vec::with_capacity(10 + 12 * cloud.len());
    encode_header("MVPC", &mut out);
    out.extend_from_slice(&(cloud.len() as u32).to_le_bytes());
    for p in cloud.iter() {
        out.extend_from_slice(&(p.x as f32).to_le_bytes());
        out.extend_from_slice(&(p.y as f32).to_le_bytes());
        out.extend_from_slice(&(p.z as f32).to_le_bytes());
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_point_cloud(path: &Path) -> Result<PointCloud> {
    let buf = fs::read(path)?;
    let mut r = Reader::new(&buf);
    r.magic("MVPC")?;
    r.version()?;
    let n = r.u32()? as usize;
    let mut points = Vec::with_capacity(n);
    for _ in 0..n {
        let x = r.f32()? as f64;
        let y = r.f32()? as f64;
        let z = r.f32()? as f64;
        points.push(moves_core::Vec3::new(x, y, z));
    }
    r.done()?;
    Ok(PointCloud::from_points(points))
}

// ---------------------------------------------------------------------------
// trajectories (TUM text)

pub fn write_trajectory(path: &Path, traj: &Trajectory) -> Result<()> {
    let mut out = String::from("# timestamp tx ty tz qx qy qz qw\n");
    for (stamp, pose) in traj.iter() {
        let (t, q) = pose_parts(pose);
        out.push_str(&format!(
            "{} {} {} {} {} {} {} {}\n",
            stamp, t[0], t[1], t[2], q[0], q[1], q[2], q[3]
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_trajectory(path: &Path) -> Result<Trajectory> {
    let text = fs::read_to_string(path)?;
    let mut traj = Trajectory::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<f64> = line
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>().map_err(|_| {
                    CodecError::BadValue(format!(
                        "line {}: '{tok}' is not a number",
                        lineno + 1
                    ))
                })
            })
            .collect::<Result<_>>()?;
        if fields.len() != 8 {
            return Err(CodecError::BadValue(format!(
                "line {}: expected 8 fields (timestamp tx ty tz qx qy qz qw), found {}",
                lineno + 1,
                fields.len()
            )));
        }
        let pose = pose_from_parts(
            [fields[1], fields[2], fields[3]],
            [fields[4], fields[5], fields[6], fields[7]],
        )
        .map_err(|e| CodecError::BadValue(format!("line {}: {e}", lineno + 1)))?;
        traj.push(fields[0], pose)
            .map_err(|e| CodecError::BadValue(format!("line {}: {e}", lineno + 1)))?;
    }
    Ok(traj)
}

// ---------------------------------------------------------------------------
// checkpoints

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "lowercase")]
enum CkKind {
    Model,
    Lqi,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LqiMeta {
    height: usize,
    width: usize,
    r_max: f64,
    channels: Vec<usize>,
}

/// Architecture echo stored inside a checkpoint; enough to rebuild the
/// network shapes before streaming the parameter arrays in.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CkMeta {
    kind: CkKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    disc: Option<DiscKind>,
    #[serde(default)]
    has_target: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    model: Option<ModelConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lqi: Option<LqiMeta>,
}

fn encode_checkpoint(step: u64, meta: &CkMeta, arrays: &[(String, &Vec<f64>)]) -> Result<Vec<u8>> {
    let echo = toml::to_string(meta)
        .map_err(|e| CodecError::BadValue(format!("encoding architecture echo: {e}")))?;
    let mut out = Vec::new();
    encode_header("MVCK", &mut out);
    out.extend_from_slice(&step.to_le_bytes());
    out.extend_from_slice(&(echo.len() as u32).to_le_bytes());
    out.extend_from_slice(echo.as_bytes());
    out.extend_from_slice(&(arrays.len() as u32).to_le_bytes());
    for (name, values) in arrays {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(values.len() as u32).to_le_bytes());
        for v in values.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

fn decode_checkpoint(buf: &[u8]) -> Result<(u64, CkMeta, Vec<(String, Vec<f64>)>)> {
    let mut r = Reader::new(buf);
    r.magic("MVCK")?;
    r.version()?;
    let step = r.u64()?;
    let echo_len = r.u32()? as usize;
    let echo = std::str::from_utf8(r.take(echo_len)?)
        .map_err(|e| CodecError::BadValue(format!("architecture echo is not UTF-8: {e}")))?;
    let meta: CkMeta = toml::from_str(echo)
        .map_err(|e| CodecError::BadValue(format!("architecture echo: {e}")))?;
    let n_arrays = r.u32()? as usize;
    let mut arrays = Vec::with_capacity(n_arrays);
    for _ in 0..n_arrays {
        let name_len = r.u16()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|e| CodecError::BadValue(format!("parameter name is not UTF-8: {e}")))?
            .to_owned();
        let count = r.u32()? as usize;
        let mut values = Vec::with_capacity(count);
        for _ in 0..count {
            values.push(f64::from_le_bytes(r.take(8)?.try_into().unwrap()));
        }
        arrays.push((name, values));
    }
    r.done()?;
    Ok((step, meta, arrays))
}

pub fn write_model(path: &Path, model: &Model) -> Result<()> {
    let meta = CkMeta {
        kind: CkKind::Model,
        disc: Some(model.disc.kind),
        has_target: model.target.is_some(),
        model: Some(model.config.clone()),
        lqi: None,
    };
    let bytes = encode_checkpoint(model.step, &meta, &model.named_params())?;
    fs::write(path, bytes)?;
    Ok(())
}

pub fn read_model(path: &Path) -> Result<Model> {
    let (step, meta, arrays) = decode_checkpoint(&fs::read(path)?)?;
    if meta.kind != CkKind::Model {
        return Err(CodecError::BadValue(
            "checkpoint holds a scan-quality scorer, not a translation model".into(),
        ));
    }
    let cfg = meta
        .model
        .ok_or_else(|| CodecError::BadValue("checkpoint echo lacks a [model] table".into()))?;
    let kind = meta
        .disc
        .ok_or_else(|| CodecError::BadValue("checkpoint echo lacks a disc kind".into()))?;
    let mut model =
        Model::new(&cfg, kind, 0).map_err(|e| CodecError::BadValue(e.to_string()))?;
    if meta.has_target {
        model.init_target_from_source();
    }
    model.step = step;
    let expected: Vec<(String, usize)> = model
        .named_params()
        .into_iter()
        .map(|(n, v)| (n, v.len()))
        .collect();
    if expected.len() != arrays.len() {
        return Err(CodecError::BadValue(format!(
            "checkpoint holds {} parameter arrays, architecture needs {}",
            arrays.len(),
            expected.len()
        )));
    }
    for ((want_name, want_len), (got_name, got)) in expected.iter().zip(&arrays) {
        if want_name != got_name || *want_len != got.len() {
            return Err(CodecError::BadValue(format!(
                "parameter mismatch: expected '{want_name}' ({want_len} values), \
                 found '{got_name}' ({} values)",
                got.len()
            )));
        }
    }
    for (slot, (_, values)) in model.param_slots().into_iter().zip(arrays) {
        *slot = values;
    }
    Ok(model)
}

pub fn write_lqi(path: &Path, model: &LqiModel) -> Result<()> {
    let meta = CkMeta {
        kind: CkKind::Lqi,
        disc: None,
        has_target: false,
        model: None,
        lqi: Some(LqiMeta {
            height: model.height(),
            width: model.width(),
            r_max: model.r_max(),
            channels: model.channels().to_vec(),
        }),
    };
    let arrays: Vec<(String, &Vec<f64>)> = model
        .param_names()
        .into_iter()
        .zip(model.param_refs())
        .collect();
    let bytes = encode_checkpoint(0, &meta, &arrays)?;
    fs::write(path, bytes)?;
    Ok(())
}

pub fn read_lqi(path: &Path) -> Result<LqiModel> {
    let (_, meta, arrays) = decode_checkpoint(&fs::read(path)?)?;
    if meta.kind != CkKind::Lqi {
        return Err(CodecError::BadValue(
            "checkpoint holds a translation model, not a scan-quality scorer".into(),
        ));
    }
    let lm = meta
        .lqi
        .ok_or_else(|| CodecError::BadValue("checkpoint echo lacks an [lqi] table".into()))?;
    let params: Vec<Vec<f64>> = arrays.into_iter().map(|(_, v)| v).collect();
    LqiModel::from_parts(lm.height, lm.width, lm.r_max, lm.channels, &params)
        .map_err(|e| CodecError::BadValue(e.to_string()))
}

// ---------------------------------------------------------------------------
