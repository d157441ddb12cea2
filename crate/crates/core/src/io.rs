//! On-disk formats: `.flo` flow files, PFM depth maps, PNG frames, raw and
//! 16-bit PNG density grids, and the per-video dataset layout.
//!
//! Dataset layout, one directory per video under the root:
//!
//! ```text
//! <root>/<video>/frames/<stem>.png     required
//! <root>/<video>/flow_fw/<stem>.flo    required directory; flow from <stem> to the next frame
//! <root>/<video>/flow_bw/<stem>.flo    optional; flow from <stem> back to the previous frame
//! <root>/<video>/depth/<stem>.pfm      optional
//! ```

use std::fs;
use std::io::{BufRead, Cursor, Read};
use std::path::{Path, PathBuf};

use image::{ImageBuffer, Luma, Rgb};
use serde::{Deserialize, Serialize};

use crate::distortion::DensityMap;
use crate::error::{Error, Result};
use crate::raster::{FlowField, Image};

/// The `.flo` magic number; its little-endian bytes spell `PIEH`.
pub const FLO_MAGIC: f32 = 202021.25;

/// Largest width or height accepted by the readers.
pub const MAX_DIMENSION: usize = 1 << 16;

fn check_dims(path: &Path, width: u64, height: u64, channels: u64) -> Result<usize> {
    if width == 0 || height == 0 || width > MAX_DIMENSION as u64 || height > MAX_DIMENSION as u64 {
        return Err(Error::format(path, format!("unsupported dimensions {width}x{height}")));
    }
    width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(channels))
        .and_then(|n| usize::try_from(n).ok())
        .ok_or_else(|| Error::format(path, "dimension overflow"))
}

fn read_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"))
}

/// Serializes a flow field in the `.flo` layout.
pub fn encode_flo(f: &FlowField) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 8 * f.len());
    out.extend_from_slice(&FLO_MAGIC.to_le_bytes());
    out.extend_from_slice(&(f.width() as u32).to_le_bytes());
    out.extend_from_slice(&(f.height() as u32).to_le_bytes());
    for x in f.to_interleaved() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

/// Parses `.flo` bytes; `path` is only used in error messages.
pub fn decode_flo(bytes: &[u8], path: &Path) -> Result<FlowField> {
    if bytes.len() < 12 {
        return Err(Error::format(path, "truncated header"));
    }
    if bytes[0..4] != FLO_MAGIC.to_le_bytes() {
        return Err(Error::format(path, "bad magic, expected PIEH"));
    }
    let (w, h) = (read_u32(bytes, 4) as u64, read_u32(bytes, 8) as u64);
    let n = check_dims(path, w, h, 2)?;
    let expected = n.checked_mul(4).and_then(|b| b.checked_add(12)).ok_or_else(|| Error::format(path, "dimension overflow"))?;
    if bytes.len() != expected {
        return Err(Error::format(path, format!("payload is {} bytes, header implies {expected}", bytes.len())));
    }
    let uv: Vec<f32> = bytes[12..].chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
    FlowField::from_interleaved(w as usize, h as usize, &uv)
}

pub fn read_flo(path: impl AsRef<Path>) -> Result<FlowField> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_flo(&bytes, path)
}

pub fn write_flo(f: &FlowField, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_flo(f)).map_err(|e| Error::io(path, e))
}

/// Reads only the `(width, height)` header of a `.flo` file.
pub fn flo_dimensions(path: impl AsRef<Path>) -> Result<(usize, usize)> {
    let path = path.as_ref();
    let mut head = [0u8; 12];
    fs::File::open(path)
        .and_then(|mut f| f.read_exact(&mut head))
        .map_err(|e| Error::io(path, e))?;
    if head[0..4] != FLO_MAGIC.to_le_bytes() {
        return Err(Error::format(path, "bad magic, expected PIEH"));
    }
    Ok((read_u32(&head, 4) as usize, read_u32(&head, 8) as usize))
}

/// Single-channel depth raster. NaN marks pixels without depth.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub width: usize,
    pub height: usize,
    /// Row-major, top row first.
    pub values: Vec<f32>,
}

impl DepthMap {
    pub fn new(width: usize, height: usize, values: Vec<f32>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::BufferLength { len: values.len(), shape: format!("{height}x{width}") });
        }
        Ok(Self { width, height, values })
    }

    /// `true` where the depth is finite.
    pub fn validity_mask(&self) -> Vec<bool> {
        self.values.iter().map(|v| v.is_finite()).collect()
    }
}

/// Byte order of a PFM payload, taken from the sign of its scale field.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Endian {
    Little,
    Big,
}

/// Serializes a depth map as a grayscale PFM (`Pf`). Rows are stored
/// bottom to top as the format requires.
pub fn encode_depth_pfm(d: &DepthMap, endian: Endian) -> Vec<u8> {
    let scale = match endian {
        Endian::Little => "-1.0",
        Endian::Big => "1.0",
    };
    let mut out = format!("Pf\n{} {}\n{scale}\n", d.width, d.height).into_bytes();
    for row in d.values.chunks_exact(d.width).rev() {
        for v in row {
            out.extend_from_slice(&match endian {
                Endian::Little => v.to_le_bytes(),
                Endian::Big => v.to_be_bytes(),
            });
        }
    }
    out
}

fn header_token(cur: &mut Cursor<&[u8]>, path: &Path) -> Result<String> {
    let mut tok = Vec::new();
    loop {
        let buf = cur.fill_buf().map_err(|e| Error::io(path, e))?;
        let Some(&b) = buf.first() else { break };
        cur.consume(1);
        if b.is_ascii_whitespace() {
            if tok.is_empty() {
                continue;
            }
            break;
        }
        tok.push(b);
        if tok.len() > 32 {
            return Err(Error::format(path, "malformed header"));
        }
    }
    if tok.is_empty() {
        return Err(Error::format(path, "truncated header"));
    }
    String::from_utf8(tok).map_err(|_| Error::format(path, "malformed header"))
}

pub fn decode_depth_pfm(bytes: &[u8], path: &Path) -> Result<DepthMap> {
    let mut cur = Cursor::new(bytes);
    let magic = header_token(&mut cur, path)?;
    if magic != "Pf" {
        return Err(Error::format(path, format!("expected grayscale PFM magic `Pf`, got `{magic}`")));
    }
    let parse_dim = |t: String| t.parse::<u64>().map_err(|_| Error::format(path, format!("bad dimension `{t}`")));
    let w = parse_dim(header_token(&mut cur, path)?)?;
    let h = parse_dim(header_token(&mut cur, path)?)?;
    let scale_tok = header_token(&mut cur, path)?;
    let scale: f64 = scale_tok.parse().map_err(|_| Error::format(path, format!("bad scale `{scale_tok}`")))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::format(path, "scale must be nonzero"));
    }
    let endian = if scale < 0.0 { Endian::Little } else { Endian::Big };
    let n = check_dims(path, w, h, 1)?;
    let payload = &bytes[cur.position() as usize..];
    if payload.len() != n * 4 {
        return Err(Error::format(path, format!("payload is {} bytes, header implies {}", payload.len(), n * 4)));
    }
    let (w, h) = (w as usize, h as usize);
    let mut values = vec![0.0f32; n];
    for (i, c) in payload.chunks_exact(4).enumerate() {
        let b: [u8; 4] = c.try_into().expect("4 bytes");
        let v = match endian {
            Endian::Little => f32::from_le_bytes(b),
            Endian::Big => f32::from_be_bytes(b),
        };
        let (row, col) = (h - 1 - i / w, i % w);
        values[row * w + col] = v;
    }
    DepthMap::new(w, h, values)
}

pub fn read_depth_pfm(path: impl AsRef<Path>) -> Result<DepthMap> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_depth_pfm(&bytes, path)
}

pub fn write_depth_pfm(d: &DepthMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_depth_pfm(d, Endian::Little)).map_err(|e| Error::io(path, e))
}

/// Loads a PNG as an RGB image with samples in `[0, 255]`. 16-bit files are
/// rescaled to the same range.
pub fn load_frame(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let img = image::open(path).map_err(|source| Error::Image { path: path.to_path_buf(), source })?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = match img {
        image::DynamicImage::ImageRgb16(_) | image::DynamicImage::ImageRgba16(_) | image::DynamicImage::ImageLuma16(_)
        | image::DynamicImage::ImageLumaA16(_) => {
            img.to_rgb16().into_raw().into_iter().map(|x| x as f32 / 257.0).collect()
        }
        _ => img.to_rgb8().into_raw().into_iter().map(f32::from).collect(),
    };
    Image::new(w, h, 3, data)
}

/// Converts an image with samples in `[0, 255]` to 8 bits per channel.
pub fn frame_to_rgb8(img: &Image) -> Result<ImageBuffer<Rgb<u8>, Vec<u8>>> {
    let rgb: Vec<u8> = match img.channels() {
        3 => img.data().iter().map(|&x| x.round().clamp(0.0, 255.0) as u8).collect(),
        1 => img.data().iter().flat_map(|&x| [x.round().clamp(0.0, 255.0) as u8; 3]).collect(),
        c => return Err(Error::InvalidArgument(format!("cannot store a {c}-channel image as RGB"))),
    };
    Ok(ImageBuffer::from_raw(img.width() as u32, img.height() as u32, rgb).expect("buffer sized from image"))
}

/// Encodes an image as an RGB PNG.
pub fn encode_frame_png(img: &Image) -> Result<Vec<u8>> {
    let buf = frame_to_rgb8(img)?;
    let mut out = Cursor::new(Vec::new());
    buf.write_to(&mut out, image::ImageFormat::Png)
        .map_err(|source| Error::Image { path: PathBuf::from("<memory>"), source })?;
    Ok(out.into_inner())
}

pub fn save_frame(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_frame_png(img)?).map_err(|e| Error::io(path, e))
}

/// Raw density grid: `u32` LE width, `u32` LE height, then `f32` LE values
/// row by row.
pub fn encode_density_raw(d: &DensityMap) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 4 * d.values().len());
    out.extend_from_slice(&(d.width() as u32).to_le_bytes());
    out.extend_from_slice(&(d.height() as u32).to_le_bytes());
    for &v in d.values() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn decode_density_raw(bytes: &[u8], path: &Path) -> Result<DensityMap> {
    if bytes.len() < 8 {
        return Err(Error::format(path, "truncated header"));
    }
    let (w, h) = (read_u32(bytes, 0) as u64, read_u32(bytes, 4) as u64);
    let n = check_dims(path, w, h, 1)?;
    if bytes.len() - 8 != n * 4 {
        return Err(Error::format(path, format!("payload is {} bytes, header implies {}", bytes.len() - 8, n * 4)));
    }
    let d = bytes[8..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
        .collect();
    DensityMap::new(w as usize, h as usize, d)
}

pub fn read_density_raw(path: impl AsRef<Path>) -> Result<DensityMap> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_density_raw(&bytes, path)
}

/// 16-bit grayscale PNG with `level = round(d * 65535)`.
pub fn encode_density_png16(d: &DensityMap) -> Result<Vec<u8>> {
    let levels: Vec<u16> = d.values().iter().map(|&v| (v * 65535.0).round().clamp(0.0, 65535.0) as u16).collect();
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(d.width() as u32, d.height() as u32, levels).expect("buffer sized from map");
    let mut out = Cursor::new(Vec::new());
    buf.write_to(&mut out, image::ImageFormat::Png)
        .map_err(|source| Error::Image { path: PathBuf::from("<memory>"), source })?;
    Ok(out.into_inner())
}

/// Train/test tag of an indexed dataset, taken from the root directory name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
    Unspecified,
}

/// One consecutive frame pair with its flow and optional extras.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub video: String,
    pub stem: String,
    pub frame_t: PathBuf,
    pub frame_t1: PathBuf,
    pub flow_fw: PathBuf,
    pub flow_bw: Option<PathBuf>,
    pub depth: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetIndex {
    pub split: Split,
    pub videos: Vec<String>,
    /// Frames per video, in the order of `videos`.
    pub frame_counts: Vec<usize>,
    pub samples: Vec<Sample>,
}

impl DatasetIndex {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn total_frames(&self) -> usize {
        self.frame_counts.iter().sum()
    }
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|e| Error::io(dir, e)))
        .collect::<Result<_>>()?;
    out.sort();
    Ok(out)
}

fn files_with_ext(dir: &Path, ext: &str) -> Result<Vec<(String, PathBuf)>> {
    Ok(sorted_entries(dir)?
        .into_iter()
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e.eq_ignore_ascii_case(ext)))
        .filter_map(|p| Some((p.file_stem()?.to_str()?.to_owned(), p)))
        .collect())
}

fn optional_file(dir: &Path, stem: &str, ext: &str) -> Option<PathBuf> {
    let p = dir.join(format!("{stem}.{ext}"));
    p.is_file().then_some(p)
}

/// Indexes a dataset root in lexicographic order of video and frame names.
/// Frames without a forward flow file (normally the last of each video)
/// produce no sample. Header dimensions of frames, flows and depth maps are
/// checked against each other.
pub fn index_dataset(root: impl AsRef<Path>) -> Result<DatasetIndex> {
    let root = root.as_ref();
    let split = match root.file_name().and_then(|n| n.to_str()) {
        Some("train") => Split::Train,
        Some("test") => Split::Test,
        _ => Split::Unspecified,
    };
    let mut index = DatasetIndex { split, videos: Vec::new(), frame_counts: Vec::new(), samples: Vec::new() };
    for video_dir in sorted_entries(root)?.into_iter().filter(|p| p.is_dir()) {
        let video = video_dir.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_owned();
        let frames_dir = video_dir.join("frames");
        let fw_dir = video_dir.join("flow_fw");
        for required in [&frames_dir, &fw_dir] {
            if !required.is_dir() {
                return Err(Error::format(required, "missing required subdirectory"));
            }
        }
        let (bw_dir, depth_dir) = (video_dir.join("flow_bw"), video_dir.join("depth"));
        let frames = files_with_ext(&frames_dir, "png")?;
        let mut dims: Option<(u32, u32)> = None;
        for (stem, path) in &frames {
            let d = image::image_dimensions(path).map_err(|source| Error::Image { path: path.clone(), source })?;
            match dims {
                None => dims = Some(d),
                Some(prev) if prev != d => {
                    return Err(Error::ShapeMismatch {
                        left: format!("{}x{} ({video}/{stem})", d.1, d.0),
                        right: format!("{}x{}", prev.1, prev.0),
                    })
                }
                _ => {}
            }
        }
        for pair in frames.windows(2) {
            let (stem, frame_t) = (&pair[0].0, &pair[0].1);
            let Some(flow_fw) = optional_file(&fw_dir, stem, "flo") else { continue };
            let (fw, fh) = flo_dimensions(&flow_fw)?;
            let (w, h) = dims.expect("at least two frames");
            if (fw, fh) != (w as usize, h as usize) {
                return Err(Error::ShapeMismatch {
                    left: format!("{fh}x{fw} flow {}", flow_fw.display()),
                    right: format!("{h}x{w} frames"),
                });
            }
            let next_stem = &pair[1].0;
            let flow_bw = optional_file(&bw_dir, next_stem, "flo");
            if let Some(p) = &flow_bw {
                let (bw, bh) = flo_dimensions(p)?;
                if (bw, bh) != (fw, fh) {
                    return Err(Error::ShapeMismatch {
                        left: format!("{bh}x{bw} flow {}", p.display()),
                        right: format!("{fh}x{fw} forward flow"),
                    });
                }
            }
            index.samples.push(Sample {
                video: video.clone(),
                stem: stem.clone(),
                frame_t: frame_t.clone(),
                frame_t1: pair[1].1.clone(),
                flow_fw,
                flow_bw,
                depth: optional_file(&depth_dir, stem, "pfm"),
            });
        }
        index.videos.push(video);
        index.frame_counts.push(frames.len());
    }
    if index.videos.is_empty() {
        log::warn!("no videos found under {}", root.display());
    }
    Ok(index)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flo_layout() {
        let f = FlowField::new(2, 1, vec![1.0, -2.5], vec![0.25, 3.0]).unwrap();
        let b = encode_flo(&f);
        assert_eq!(b.len(), 28);
        assert_eq!(&b[0..4], b"PIEH");
        assert_eq!(decode_flo(&b, Path::new("x")).unwrap(), f);
    }

    #[test]
    fn flo_rejects_corruption() {
        let f = FlowField::zeros(4, 2);
        let mut b = encode_flo(&f);
        b[0] = b'X';
        assert!(matches!(decode_flo(&b, Path::new("x")), Err(Error::Format { .. })));
        let b = encode_flo(&f);
        assert!(decode_flo(&b[..b.len() - 1], Path::new("x")).is_err());
        let mut huge = b[..12].to_vec();
        huge[4..8].copy_from_slice(&u32::MAX.to_le_bytes());
        assert!(decode_flo(&huge, Path::new("x")).is_err());
    }

    #[test]
    fn pfm_both_byte_orders() {
        let d = DepthMap::new(3, 2, vec![1.0, 2.0, f32::NAN, 4.0, 5.5, -0.0]).unwrap();
        for e in [Endian::Little, Endian::Big] {
            let back = decode_depth_pfm(&encode_depth_pfm(&d, e), Path::new("x")).unwrap();
            let bits = |m: &DepthMap| m.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&back), bits(&d));
            assert_eq!(back.validity_mask(), vec![true, true, false, true, true, true]);
        }
        let le = encode_depth_pfm(&d, Endian::Little);
        assert!(le.starts_with(b"Pf\n3 2\n-1.0\n"));
        // bottom row first
        assert_eq!(&le[le.len() - 12..le.len() - 8], &1.0f32.to_le_bytes());
    }

    #[test]
    fn pfm_rejects_bad_header() {
        assert!(decode_depth_pfm(b"PF\n1 1\n-1.0\n\0\0\0\0", Path::new("x")).is_err());
        assert!(decode_depth_pfm(b"Pf\n1 x\n-1.0\n\0\0\0\0", Path::new("x")).is_err());
        assert!(decode_depth_pfm(b"Pf\n1 1\n0\n\0\0\0\0", Path::new("x")).is_err());
        assert!(decode_depth_pfm(b"Pf\n2 1\n-1\n\0\0\0\0", Path::new("x")).is_err());
    }

    #[test]
    fn density_raw_header() {
        let d = DensityMap::uniform(4, 2, 0.75).unwrap();
        let b = encode_density_raw(&d);
        assert_eq!(b.len(), 8 + 32);
        assert_eq!(&b[0..8], &[4, 0, 0, 0, 2, 0, 0, 0]);
        assert_eq!(decode_density_raw(&b, Path::new("x")).unwrap(), d);
    }
}
