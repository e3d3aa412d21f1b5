use vestbed_vision::{
    adaptive_threshold, classify_hand, gaussian_blur, read_pnm_file, write_pgm, CnnSpec,
    CnnWeights, Image, PreprocessConfig,
};

/// Brute-force Gaussian-weighted mean in f64 with edge replication.
fn weighted_mean(img: &Image, x: usize, y: usize, window: usize, sigma: f64) -> f64 {
    let r = (window / 2) as i64;
    let (mut num, mut den) = (0.0, 0.0);
    for dy in -r..=r {
        for dx in -r..=r {
            let w = (-((dx * dx + dy * dy) as f64) / (2.0 * sigma * sigma)).exp();
            let sx = (x as i64 + dx).clamp(0, img.width as i64 - 1) as usize;
            let sy = (y as i64 + dy).clamp(0, img.height as i64 - 1) as usize;
            num += w * img.get(sx, sy, 0) as f64;
            den += w;
        }
    }
    num / den
}

#[test]
fn step_edge_is_confined_near_the_step() {
    let step = 20;
    let img = Image::from_fn(40, 16, 1, |x, _, _| if x < step { 0.0 } else { 255.0 });
    let out = adaptive_threshold(&img, 11, 2.0, 2.0).unwrap();
    for y in 0..img.height {
        for x in 0..img.width {
            let oracle = (img.get(x, y, 0) as f64) <= weighted_mean(&img, x, y, 11, 2.0) - 2.0;
            assert_eq!(out.get(x, y), u8::from(oracle), "({x},{y})");
            if oracle {
                assert!(x < step && step - x <= 5, "foreground at column {x}");
            }
        }
    }
    assert!(out.count_ones() > 0);
}

fn textured(w: usize, h: usize, ox: usize, oy: usize) -> Image {
    Image::from_fn(w, h, 1, |x, y, _| {
        let (x, y) = (x + ox, y + oy);
        (((x * 37 + y * 91) % 256) as f32 * 0.5 + ((x / 3 + y / 5) % 2) as f32 * 100.0).min(255.0)
    })
}

#[test]
fn filters_are_translation_equivariant_in_the_interior() {
    let a = textured(48, 40, 0, 0);
    let b = textured(48, 40, 1, 1); // b(x,y) == a(x+1,y+1)
    let ba = gaussian_blur(&a, 3, 7.0).unwrap();
    let bb = gaussian_blur(&b, 3, 7.0).unwrap();
    for y in 2..37 {
        for x in 2..45 {
            assert!((bb.get(x, y, 0) - ba.get(x + 1, y + 1, 0)).abs() < 1e-3);
        }
    }
    let ta = adaptive_threshold(&a, 11, 2.0, 2.0).unwrap();
    let tb = adaptive_threshold(&b, 11, 2.0, 2.0).unwrap();
    for y in 6..33 {
        for x in 6..41 {
            assert_eq!(tb.get(x, y), ta.get(x + 1, y + 1));
        }
    }
}

fn synthetic_hand() -> Image {
    // bright palm with three darker finger bars on a mid-gray background
    Image::from_fn(640, 360, 3, |x, y, c| {
        let (cx, cy) = (320.0, 180.0);
        let dx = x as f32 - cx;
        let dy = y as f32 - cy;
        let palm = dx * dx / 900.0 + (dy - 20.0) * (dy - 20.0) / 1200.0 < 1.0;
        let finger = dy < 0.0 && dy > -55.0 && [-24.0, 0.0, 24.0].iter().any(|f| (dx - f).abs() < 7.0);
        let base = if palm || finger { 210.0 } else { 90.0 };
        base + c as f32 * 5.0
    })
}

#[test]
fn classify_full_chain_is_deterministic() {
    let weights = CnnWeights::seeded(CnnSpec::hand_gesture(), 42).unwrap();
    let img = synthetic_hand();
    let cfg = PreprocessConfig::default();
    let a = classify_hand(&img, &weights, &cfg).unwrap();
    let b = classify_hand(&img, &weights, &cfg).unwrap();
    assert_eq!(a, b);
    assert!(a.class < 6);
    assert_eq!(a.trace.len(), 16);
    assert!((a.probs.iter().sum::<f32>() - 1.0).abs() < 1e-6);
}

#[test]
fn classify_from_pgm_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("hand.pgm");
    let gray = vestbed_vision::to_grayscale(&synthetic_hand()).unwrap();
    write_pgm(&path, &gray).unwrap();
    let img = read_pnm_file(&path).unwrap();
    assert_eq!((img.width, img.height), (640, 360));
    let weights = CnnWeights::seeded(CnnSpec::hand_gesture(), 42).unwrap();
    let out = classify_hand(&img, &weights, &PreprocessConfig::default()).unwrap();
    assert!(out.class <= 5);
}
