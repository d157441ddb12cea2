mod common;

use std::fs;
use std::path::{Path, PathBuf};

use omniflow::distortion::default_density_map;
use omniflow::io::{
    decode_density_raw, decode_depth_pfm, decode_flo, encode_density_raw, encode_depth_pfm, encode_flo,
    encode_frame_png, index_dataset, load_frame, read_depth_pfm, read_flo, save_frame, write_depth_pfm, write_flo,
    DepthMap, Endian, Split,
};
use omniflow::{FlowField, Image};
use proptest::prelude::*;
use rand::seq::SliceRandom;

fn mini360() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/mini360")
}

fn files_under(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

#[test]
fn flo_two_by_one_is_28_bytes() {
    let f = FlowField::new(2, 1, vec![0.5, -1.0], vec![2.0, f32::NAN]).unwrap();
    let bytes = encode_flo(&f);
    assert_eq!(bytes.len(), 28);
    assert_eq!(&bytes[..4], b"PIEH");
    assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 2);
    assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 1);
    assert_eq!(f32::from_le_bytes(bytes[12..16].try_into().unwrap()), 0.5);
    assert_eq!(f32::from_le_bytes(bytes[16..20].try_into().unwrap()), 2.0);
}

#[test]
fn flo_file_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let f = common::random_flow(64, 32, 50.0, 1);
    let p = dir.path().join("a.flo");
    write_flo(&f, &p).unwrap();
    let g = read_flo(&p).unwrap();
    assert!(f.u().iter().zip(g.u()).all(|(a, b)| a.to_bits() == b.to_bits()));
    assert!(f.v().iter().zip(g.v()).all(|(a, b)| a.to_bits() == b.to_bits()));
    assert!(read_flo(dir.path().join("missing.flo")).unwrap_err().is_io());
    fs::write(dir.path().join("bad.flo"), b"PIEH\x01\x00").unwrap();
    assert!(read_flo(dir.path().join("bad.flo")).unwrap_err().is_shape_or_format());
}

#[test]
fn depth_round_trip_is_bit_exact_in_both_byte_orders() {
    let dir = tempfile::tempdir().unwrap();
    let mut values: Vec<f32> = (0..24).map(|i| i as f32 * 0.37 + 0.1).collect();
    values[3] = f32::NAN;
    values[7] = 0.0;
    let d = DepthMap::new(6, 4, values).unwrap();
    for endian in [Endian::Little, Endian::Big] {
        let back = decode_depth_pfm(&encode_depth_pfm(&d, endian), Path::new("mem")).unwrap();
        assert!(d.values.iter().zip(&back.values).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
    let p = dir.path().join("d.pfm");
    write_depth_pfm(&d, &p).unwrap();
    let back = read_depth_pfm(&p).unwrap();
    assert_eq!((back.width, back.height), (6, 4));
    let mask = back.validity_mask();
    assert!(!mask[3] && mask[7] && mask[0]);
}

#[test]
fn frames_and_density_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let img = Image::from_fn(16, 8, 3, |c, r, k| ((c * 13 + r * 7 + k * 50) % 256) as f32);
    let p = dir.path().join("f.png");
    save_frame(&img, &p).unwrap();
    assert_eq!(load_frame(&p).unwrap(), img);
    assert!(!encode_frame_png(&img).unwrap().is_empty());
    let d = default_density_map(32, 16).unwrap();
    let back = decode_density_raw(&encode_density_raw(&d), Path::new("mem")).unwrap();
    assert!(d.values().iter().zip(back.values()).all(|(a, b)| (*a as f32).to_bits() == (*b as f32).to_bits()));
}

#[test]
fn mini360_index() {
    let idx = index_dataset(mini360()).unwrap();
    assert_eq!(idx.videos, vec!["video_00", "video_01", "video_02", "video_03"]);
    assert_eq!(idx.total_frames(), 32);
    assert_eq!(idx.len(), idx.total_frames() - idx.videos.len());
    assert_eq!(idx.split, Split::Unspecified);
    assert!(idx.samples.iter().all(|s| s.flow_bw.is_some() && s.depth.is_some()));
    let first = &idx.samples[0];
    assert_eq!(first.stem, "0000");
    assert!(first.frame_t1.ends_with("frames/0001.png"));
    assert!(first.flow_bw.as_ref().unwrap().ends_with("flow_bw/0001.flo"));
}

#[test]
fn index_ignores_creation_order() {
    let src = mini360();
    let mut files = files_under(&src);
    let copy = |order: &[PathBuf], dst: &Path| {
        for rel in order {
            let target = dst.join(rel);
            fs::create_dir_all(target.parent().unwrap()).unwrap();
            fs::copy(src.join(rel), target).unwrap();
        }
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    copy(&files, a.path());
    files.shuffle(&mut common::rng(3));
    copy(&files, b.path());
    let strip = |root: &Path| {
        let mut idx = index_dataset(root).unwrap();
        for s in &mut idx.samples {
            s.frame_t = s.frame_t.strip_prefix(root).unwrap().to_path_buf();
            s.frame_t1 = s.frame_t1.strip_prefix(root).unwrap().to_path_buf();
            s.flow_fw = s.flow_fw.strip_prefix(root).unwrap().to_path_buf();
            s.flow_bw = s.flow_bw.as_ref().map(|p| p.strip_prefix(root).unwrap().to_path_buf());
            s.depth = s.depth.as_ref().map(|p| p.strip_prefix(root).unwrap().to_path_buf());
        }
        idx
    };
    assert_eq!(strip(a.path()), strip(b.path()));
}

#[test]
fn index_edge_cases() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("train");
    fs::create_dir(&empty).unwrap();
    let idx = index_dataset(&empty).unwrap();
    assert!(idx.is_empty());
    assert_eq!(idx.split, Split::Train);

    let broken = dir.path().join("broken");
    fs::create_dir_all(broken.join("v0/frames")).unwrap();
    assert!(index_dataset(&broken).unwrap_err().is_shape_or_format());
    assert!(index_dataset(dir.path().join("nope")).unwrap_err().is_io());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn flo_bytes_round_trip(w in 1usize..9, h in 1usize..9, seed in 0u64..1000) {
        let f = common::random_flow(w, h, 1e4, seed);
        let g = decode_flo(&encode_flo(&f), Path::new("mem")).unwrap();
        prop_assert_eq!(&g, &f);
        prop_assert_eq!(encode_flo(&f).len(), 12 + 8 * w * h);
    }

    #[test]
    fn truncated_flo_is_rejected(cut in 1usize..27) {
        let f = FlowField::new(2, 1, vec![1.0, 2.0], vec![3.0, 4.0]).unwrap();
        let bytes = encode_flo(&f);
        prop_assert!(decode_flo(&bytes[..cut], Path::new("mem")).is_err());
    }
}
