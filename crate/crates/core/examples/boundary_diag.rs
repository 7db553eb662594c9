use rgbps_core::eval::{angular_error, median_of};
use rgbps_core::pipeline::*;
use rgbps_core::synth::*;
use nalgebra::Vector3;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let tilt: f64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(25.0);
    let coarse: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(16);
    let n: u64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(2);
    let zenith: f64 = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(35.0);
    let rig = {
        let zen = zenith.to_radians();
        let col = |az_deg: f64| {
            let az = az_deg.to_radians();
            Vector3::new(zen.sin() * az.cos(), zen.sin() * az.sin(), zen.cos())
        };
        rgbps_core::LightingRig::from_lights(col(90.0), col(210.0), col(330.0)).unwrap()
    };
    let synth = SynthConfig::<f64> { image_size: 128, coarse_size: coarse, noise_sigma: 0.001, tilt_max_deg: tilt, ..Default::default() };
    let config = PipelineConfig::<f64>::default();
    let size = 128usize;

    // distance to albedo boundary per pixel
    let mut boundary = vec![false; size * size];
    for y in 0..size { for x in 0..size {
        let r = triangle_region(x, y, size, size);
        if (x + 1 < size && triangle_region(x + 1, y, size, size) != r) || (y + 1 < size && triangle_region(x, y + 1, size, size) != r) {
            boundary[y * size + x] = true;
        }
    }}
    let dist = |x: usize, y: usize| -> usize {
        for d in 0..=12i64 {
            for dy in -d..=d { for dx in -d..=d {
                if dx.abs().max(dy.abs()) != d { continue; }
                let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                if nx >= 0 && ny >= 0 && (nx as usize) < size && (ny as usize) < size && boundary[ny as usize * size + nx as usize] { return d as usize; }
            }}
        }
        13
    };

    let mut by_dist: Vec<Vec<f64>> = vec![Vec::new(); 14];
    let mut shadow_frac = 0.0;
    let mut outlier_frac = 0.0;
    for i in 0..n {
        let inst = gen_instance(&synth, &rig, instance_seed(0xD1A6, i)).unwrap();
        let mut sh = 0usize;
        for nv in inst.normals.data() { if rig.shading(nv).min() <= 0.0 { sh += 1; } }
        shadow_frac += sh as f64 / (size * size) as f64;
        let rec = reconstruct(&inst.image, &rig, &config, ReconstructOptions::default()).unwrap();
        outlier_frac += rec.outlier_count as f64 / rec.n_patches as f64;
        let r = angular_error(&rec.normals, &inst.normals).unwrap();
        for y in 0..size { for x in 0..size {
            let p = y * size + x;
            if r.errors.mask()[p] { by_dist[dist(x, y)].push(r.errors.data()[p]); }
        }}
    }
    println!("tilt {tilt} coarse {coarse} n {n} zenith {zenith}: shadow {:.3}% outliers {:.1}%", 100.0 * shadow_frac / n as f64, 100.0 * outlier_frac / n as f64);
    let med = |v: &mut Vec<f64>| if v.is_empty() { f64::NAN } else { median_of(v) };
    for d in 0..14 {
        let mut v = std::mem::take(&mut by_dist[d]);
        println!("  dist {d:2}: median {:.3} deg (n={})", med(&mut v), v.len());
    }
}
