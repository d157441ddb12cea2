mod common;

use omniflow::viz::{color_wheel, encode_flow_rgb, encode_sphere_rgba, flow_to_sphere_motion, wheel_color};
use omniflow::FlowField;
use proptest::prelude::*;

#[test]
fn sphere_motion_is_the_great_circle_chord() {
    let (w, h) = (64, 32);
    let f = common::random_flow(w, h, 8.0, 3);
    let m = flow_to_sphere_motion(&f).unwrap();
    for row in 0..h {
        for col in 0..w {
            let (u, v) = f.at(col, row);
            let a = common::lift(col as f64, row as f64, w, h);
            let b = common::lift(col as f64 + u as f64, row as f64 + v as f64, w, h);
            let chord = 2.0 * (common::great_circle(a, b) / 2.0).sin();
            assert!((m.motion()[row * w + col].norm() - chord).abs() < 1e-12);
        }
    }
}

#[test]
fn sphere_encoding_is_scale_invariant() {
    let f = common::smooth_flow(64, 32, 0.01);
    let m = flow_to_sphere_motion(&f).unwrap();
    let base = encode_sphere_rgba(&m);
    let scaled = FlowField::new(
        64,
        32,
        f.u().iter().map(|x| x * 2.0).collect(),
        f.v().iter().map(|x| x * 2.0).collect(),
    )
    .unwrap();
    let big = encode_sphere_rgba(&flow_to_sphere_motion(&scaled).unwrap());
    assert!(big.max_xy > base.max_xy);
    let differing = base.image.pixels().zip(big.image.pixels()).filter(|(a, b)| {
        a.0.iter().zip(b.0.iter()).any(|(x, y)| (*x as i32 - *y as i32).abs() > 1)
    });
    assert_eq!(differing.count(), 0);
}

#[test]
fn flow_rendering_scales_with_clip() {
    let f = FlowField::new(2, 1, vec![10.0, 20.0], vec![0.0, 0.0]).unwrap();
    let a = encode_flow_rgb(&f, 20.0).unwrap();
    let b = encode_flow_rgb(&FlowField::new(2, 1, vec![20.0, 40.0], vec![0.0, 0.0]).unwrap(), 40.0).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.get_pixel(1, 0).0, [255, 0, 0]);
}

proptest! {
    #[test]
    fn saturated_color_depends_on_direction_only(u in -1.0f64..1.0, v in -1.0f64..1.0, k in 0u32..8) {
        let w = color_wheel();
        let r = u.hypot(v);
        prop_assume!(r > 1e-6);
        let (u1, v1) = (u / r, v / r);
        let s = f64::from(1u32 << k);
        prop_assert_eq!(wheel_color(&w, u1, v1), wheel_color(&w, u1 * s, v1 * s));
    }
}
