//! Synthetic mammogram phantoms with exact ground truth.
//!
//! The image is a smooth tissue background (broad Gaussian blobs plus finer
//! texture), a dark region beyond a curved skin line on the right, clipped
//! Gaussian noise, and bright irregular microcalcifications. Each
//! calcification is a thresholded mixture of one to three Gaussians; its
//! pixels are the mask. A faint rim just outside the mask mimics the partial
//! volume effect.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::image::{BinaryMask, GrayImage};
use crate::error::{Error, Result};

pub const MIN_PHANTOM_SIDE: usize = 256;

/// All intensities below are fractions of full scale.
#[derive(Debug, Clone, PartialEq)]
pub struct PhantomConfig {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    pub pixel_spacing_mm: f64,
    pub background_level: f64,
    pub broad_blobs: usize,
    pub broad_amplitude: f64,
    pub texture_blobs: usize,
    pub texture_amplitude: f64,
    pub noise_sigma: f64,
    /// Skin line position as a fraction of the width; `None` disables the
    /// dark border region.
    pub skin_line: Option<f64>,
    pub outside_level: f64,
    pub clusters: usize,
    /// Inclusive range of calcifications per cluster.
    pub cluster_size: (usize, usize),
    /// Side of the square each cluster is planted in, in pixels.
    pub cluster_extent_px: f64,
    pub isolated: (usize, usize),
    pub diameter_px: (f64, f64),
    pub contrast: (f64, f64),
    /// Every mask pixel ends at least this far above the noise-free local
    /// background.
    pub margin: f64,
    /// Rim brightness just outside a calcification, as a fraction of its
    /// contrast.
    pub partial_volume: f64,
    /// Minimum number of background pixels between two calcifications.
    pub min_gap_px: f64,
}

impl Default for PhantomConfig {
    fn default() -> Self {
        Self {
            width: 256,
            height: 256,
            maxval: 4095,
            pixel_spacing_mm: 0.05,
            background_level: 0.45,
            broad_blobs: 8,
            broad_amplitude: 0.10,
            texture_blobs: 60,
            texture_amplitude: 0.035,
            noise_sigma: 0.012,
            skin_line: Some(0.82),
            outside_level: 0.06,
            clusters: 1,
            cluster_size: (7, 9),
            cluster_extent_px: 120.0,
            isolated: (3, 5),
            diameter_px: (3.0, 8.0),
            contrast: (0.14, 0.28),
            margin: 0.06,
            partial_volume: 0.15,
            min_gap_px: 3.0,
        }
    }
}

impl PhantomConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::invalid(m));
        if self.width < MIN_PHANTOM_SIDE || self.height < MIN_PHANTOM_SIDE {
            return bad(format!(
                "phantom must be at least {MIN_PHANTOM_SIDE}x{MIN_PHANTOM_SIDE}"
            ));
        }
        if self.diameter_px.0 < 2.0 || self.diameter_px.1 < self.diameter_px.0 {
            return bad(format!(
                "calcification diameters {:?} must be ordered and >= 2 px",
                self.diameter_px
            ));
        }
        if self.cluster_size.1 < self.cluster_size.0 || self.isolated.1 < self.isolated.0 {
            return bad("count ranges must be ordered".into());
        }
        if self.contrast.0 < self.margin || self.contrast.1 < self.contrast.0 {
            return bad("contrast range must be ordered and start at or above the margin".into());
        }
        if self.pixel_spacing_mm.is_nan()
            || self.pixel_spacing_mm <= 0.0
            || self.noise_sigma.is_nan()
            || self.noise_sigma < 0.0
            || self.maxval == 0
        {
            return bad("spacing, noise and maxval must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedMc {
    pub centroid: (f64, f64),
    pub area: usize,
    pub cluster: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedCluster {
    /// Bounding box `(x0, y0, x1, y1)` of the member centroids.
    pub bbox: (f64, f64, f64, f64),
    pub members: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct Phantom {
    pub image: GrayImage,
    pub mask: BinaryMask,
    pub mcs: Vec<PlantedMc>,
    pub clusters: Vec<PlantedCluster>,
    /// Noise-free background before calcifications, as a fraction of full
    /// scale.
    pub background: Vec<f64>,
}

struct Blob {
    pixels: Vec<(usize, usize, f64)>,
    rim: Vec<(usize, usize, f64)>,
    contrast: f64,
}

pub fn generate_phantom(config: &PhantomConfig, seed: u64) -> Result<Phantom> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (config.width, config.height);

    let (background, tissue) = background(config, &mut rng);

    // the skin line must leave room for the calcifications
    let keep_out = config.diameter_px.1 + 4.0;
    let feasible = |x: f64, y: f64| {
        x >= keep_out
            && y >= keep_out
            && x < w as f64 - keep_out
            && y < h as f64 - keep_out
            && tissue[y as usize * w + (x as usize + keep_out as usize).min(w - 1)] > 0.99
    };

    let mut taken = vec![false; w * h];
    let mut mcs = Vec::new();
    let mut blobs = Vec::new();
    let mut clusters = Vec::new();

    for c in 0..config.clusters {
        let count = rng.random_range(config.cluster_size.0..=config.cluster_size.1);
        let e = config.cluster_extent_px;
        let (ox, oy) = (0..5000)
            .map(|_| (rng.random_range(0.0..w as f64 - e), rng.random_range(0.0..h as f64 - e)))
            .find(|&(x, y)| feasible(x, y) && feasible(x + e, y) && feasible(x, y + e) && feasible(x + e, y + e))
            .ok_or_else(|| Error::Infeasible(format!("no room for a {e} px cluster")))?;
        let mut members = Vec::new();
        for _ in 0..count {
            let blob = place(
                config,
                &mut rng,
                &mut taken,
                |r| (ox + r.random_range(0.0..e), oy + r.random_range(0.0..e)),
                &feasible,
            )?;
            members.push(mcs.len());
            mcs.push(planted(&blob, Some(c)));
            blobs.push(blob);
        }
        let bbox = members.iter().map(|&m| mcs[m].centroid).fold(
            (f64::MAX, f64::MAX, f64::MIN, f64::MIN),
            |b: (f64, f64, f64, f64), (x, y)| (b.0.min(x), b.1.min(y), b.2.max(x), b.3.max(y)),
        );
        clusters.push(PlantedCluster { bbox, members });
    }

    let isolated = rng.random_range(config.isolated.0..=config.isolated.1);
    for _ in 0..isolated {
        let blob = place(
            config,
            &mut rng,
            &mut taken,
            |r| (r.random_range(0.0..w as f64), r.random_range(0.0..h as f64)),
            &feasible,
        )?;
        mcs.push(planted(&blob, None));
        blobs.push(blob);
    }

    // compose: background, rims, calcifications, noise
    let mut value = background.clone();
    for b in &blobs {
        for &(x, y, f) in &b.rim {
            value[y * w + x] += config.partial_volume * b.contrast * f;
        }
    }
    let mut mask = BinaryMask::new(w, h);
    for b in &blobs {
        for &(x, y, g) in &b.pixels {
            value[y * w + x] = background[y * w + x] + config.margin + (b.contrast - config.margin) * g;
            mask.set(x, y, true);
        }
    }
    let noise = Normal::new(0.0, config.noise_sigma.max(f64::MIN_POSITIVE)).expect("valid sigma");
    let clip = 3.0 * config.noise_sigma;
    let full = config.maxval as f64;
    let mut pixels = Vec::with_capacity(w * h);
    for (i, v) in value.iter().enumerate() {
        let n = if config.noise_sigma > 0.0 {
            noise.sample(&mut rng).clamp(-clip, clip)
        } else {
            0.0
        };
        let mut v = v + n;
        if mask.bits()[i] {
            v = v.max(background[i] + config.margin);
        }
        pixels.push((v.clamp(0.0, 1.0) * full).round() as u16);
    }
    let image = GrayImage::new(w, h, config.maxval, pixels)?.with_spacing(config.pixel_spacing_mm);

    Ok(Phantom {
        image,
        mask,
        mcs,
        clusters,
        background,
    })
}

fn planted(blob: &Blob, cluster: Option<usize>) -> PlantedMc {
    let n = blob.pixels.len() as f64;
    let (sx, sy) = blob
        .pixels
        .iter()
        .fold((0.0, 0.0), |a, &(x, y, _)| (a.0 + x as f64, a.1 + y as f64));
    PlantedMc {
        centroid: (sx / n, sy / n),
        area: blob.pixels.len(),
        cluster,
    }
}

/// Noise-free background and the tissue weight (1 inside the breast, 0 past
/// the skin line).
fn background(config: &PhantomConfig, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
    let (w, h) = (config.width, config.height);
    let mut field = vec![config.background_level; w * h];
    let mut add_blobs = |count: usize, amplitude: f64, sigma: (f64, f64), rng: &mut ChaCha8Rng| {
        for _ in 0..count {
            let cx = rng.random_range(0.0..w as f64);
            let cy = rng.random_range(0.0..h as f64);
            let s = rng.random_range(sigma.0..sigma.1);
            let a = rng.random_range(-amplitude..amplitude);
            let reach = (3.5 * s).ceil() as isize;
            let inv = 1.0 / (2.0 * s * s);
            let (x0, x1) = (
                (cx as isize - reach).max(0) as usize,
                ((cx as isize + reach) as usize).min(w - 1),
            );
            let (y0, y1) = (
                (cy as isize - reach).max(0) as usize,
                ((cy as isize + reach) as usize).min(h - 1),
            );
            for y in y0..=y1 {
                let dy = y as f64 - cy;
                for x in x0..=x1 {
                    let dx = x as f64 - cx;
                    field[y * w + x] += a * (-(dx * dx + dy * dy) * inv).exp();
                }
            }
        }
    };
    add_blobs(config.broad_blobs, config.broad_amplitude, (25.0, 70.0), rng);
    add_blobs(config.texture_blobs, config.texture_amplitude, (3.0, 9.0), rng);

    let mut tissue = vec![1.0; w * h];
    if let Some(frac) = config.skin_line {
        let amp = rng.random_range(0.03..0.08) * w as f64;
        let phase = rng.random_range(0.0..std::f64::consts::TAU);
        for y in 0..h {
            let t = y as f64 / h as f64;
            let edge = frac * w as f64 + amp * (std::f64::consts::PI * t + phase).sin();
            for x in 0..w {
                let k = 1.0 / (1.0 + ((x as f64 - edge) / 3.0).exp());
                let i = y * w + x;
                tissue[i] = k;
                field[i] = config.outside_level + (field[i] - config.outside_level) * k;
            }
        }
    }
    for v in &mut field {
        *v = v.clamp(0.0, 1.0);
    }
    (field, tissue)
}

/// Draws one calcification at a position from `propose` that keeps
/// `min_gap_px` of clear background to every earlier one.
fn place(
    config: &PhantomConfig,
    rng: &mut ChaCha8Rng,
    taken: &mut [bool],
    mut propose: impl FnMut(&mut ChaCha8Rng) -> (f64, f64),
    feasible: &impl Fn(f64, f64) -> bool,
) -> Result<Blob> {
    let (w, h) = (config.width, config.height);
    let gap = config.min_gap_px.ceil() as isize;
    for _ in 0..2000 {
        let (cx, cy) = propose(rng);
        if !feasible(cx, cy) {
            continue;
        }
        let Some(blob) = shape(config, rng, cx, cy) else {
            continue;
        };
        let clear = blob.pixels.iter().all(|&(x, y, _)| {
            (-gap..=gap).all(|dy| {
                (-gap..=gap).all(|dx| {
                    let (nx, ny) = (x as isize + dx, y as isize + dy);
                    nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize || !taken[ny as usize * w + nx as usize]
                })
            })
        });
        if clear {
            for &(x, y, _) in &blob.pixels {
                taken[y * w + x] = true;
            }
            return Ok(blob);
        }
    }
    Err(Error::Infeasible(
        "could not place all calcifications with the requested spacing".into(),
    ))
}

/// Rasterizes a thresholded Gaussian mixture around `(cx, cy)` and keeps the
/// 8-connected part containing the field maximum.
fn shape(config: &PhantomConfig, rng: &mut ChaCha8Rng, cx: f64, cy: f64) -> Option<Blob> {
    let (w, h) = (config.width, config.height);
    let d = rng.random_range(config.diameter_px.0..=config.diameter_px.1);
    let contrast = rng.random_range(config.contrast.0..=config.contrast.1);
    let lobes = rng.random_range(1..=3);
    let sigma = d / 4.0;
    let parts: Vec<(f64, f64, f64)> = (0..lobes)
        .map(|i| {
            let off = if i == 0 { 0.0 } else { d / 5.0 };
            (
                cx + rng.random_range(-off..=off),
                cy + rng.random_range(-off..=off),
                if i == 0 { 1.0 } else { rng.random_range(0.5..0.9) },
            )
        })
        .collect();
    let field = |x: usize, y: usize| {
        parts
            .iter()
            .map(|&(px, py, a)| {
                let (dx, dy) = (x as f64 - px, y as f64 - py);
                a * (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp()
            })
            .sum::<f64>()
    };
    // a lone Gaussian crosses exp(-2) at radius d/2
    let level = (-2.0f64).exp();
    let rim_level = 0.35 * level;

    let reach = d.ceil() as isize + 2;
    let (x0, y0) = (
        (cx as isize - reach).max(0) as usize,
        (cy as isize - reach).max(0) as usize,
    );
    let (x1, y1) = (
        ((cx as isize + reach) as usize).min(w - 1),
        ((cy as isize + reach) as usize).min(h - 1),
    );
    let bw = x1 - x0 + 1;
    let mut values = Vec::with_capacity(bw * (y1 - y0 + 1));
    for y in y0..=y1 {
        for x in x0..=x1 {
            values.push(field(x, y));
        }
    }
    let peak = values.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1))?.0;
    let peak_value = values[peak];
    if peak_value < level {
        return None;
    }

    // flood fill from the peak over above-threshold cells
    let mut inside = vec![false; values.len()];
    let mut stack = vec![peak];
    inside[peak] = true;
    while let Some(i) = stack.pop() {
        let (lx, ly) = ((i % bw) as isize, (i / bw) as isize);
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (nx, ny) = (lx + dx, ly + dy);
                if nx < 0 || ny < 0 || nx >= bw as isize || ny > (y1 - y0) as isize {
                    continue;
                }
                let j = ny as usize * bw + nx as usize;
                if !inside[j] && values[j] >= level {
                    inside[j] = true;
                    stack.push(j);
                }
            }
        }
    }
    let mut pixels = Vec::new();
    let mut rim = Vec::new();
    for (i, &v) in values.iter().enumerate() {
        let (x, y) = (x0 + i % bw, y0 + i / bw);
        if inside[i] {
            pixels.push((x, y, ((v - level) / (peak_value - level).max(1e-12)).clamp(0.0, 1.0)));
        } else if v >= rim_level {
            rim.push((x, y, (v / level).min(1.0)));
        }
    }
    if pixels.len() < 2 {
        return None;
    }
    Some(Blob { pixels, rim, contrast })
}

/// Plain-text description of what was planted: one `mc` line per
/// calcification (`centroid_x centroid_y area cluster|-`) followed by one
/// `cluster` line per cluster (`x0 y0 x1 y1 members`).
pub fn sidecar_text(phantom: &Phantom) -> String {
    let mut s = String::from("# planted microcalcifications\n");
    for mc in &phantom.mcs {
        let cluster = mc.cluster.map_or("-".to_string(), |c| c.to_string());
        let _ = writeln!(
            s,
            "mc {:.3} {:.3} {} {}",
            mc.centroid.0, mc.centroid.1, mc.area, cluster
        );
    }
    for (i, c) in phantom.clusters.iter().enumerate() {
        let _ = writeln!(
            s,
            "cluster {} {:.3} {:.3} {:.3} {:.3} {}",
            i,
            c.bbox.0,
            c.bbox.1,
            c.bbox.2,
            c.bbox.3,
            c.members.len()
        );
    }
    s
}

pub fn write_sidecar(phantom: &Phantom, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, sidecar_text(phantom))?;
    Ok(())
}

/// Reads back the cluster boxes and calcification centroids of a sidecar.
pub fn read_sidecar(path: impl AsRef<Path>) -> Result<(Vec<PlantedMc>, Vec<PlantedCluster>)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let err = |line: usize, reason: &str| Error::Parse {
        path: path.to_path_buf(),
        line,
        reason: reason.to_string(),
    };
    let mut mcs = Vec::new();
    let mut clusters = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let f: Vec<&str> = line.split_whitespace().collect();
        let num = |i: usize| {
            f.get(i)
                .and_then(|v| v.parse::<f64>().ok())
                .ok_or_else(|| err(ln + 1, "bad number"))
        };
        match f.first() {
            None => {}
            Some(t) if t.starts_with('#') => {}
            Some(&"mc") => {
                let cluster = match f.get(4) {
                    Some(&"-") => None,
                    Some(v) => Some(v.parse().map_err(|_| err(ln + 1, "bad cluster id"))?),
                    None => return Err(err(ln + 1, "missing cluster field")),
                };
                mcs.push(PlantedMc {
                    centroid: (num(1)?, num(2)?),
                    area: num(3)? as usize,
                    cluster,
                });
            }
            Some(&"cluster") => clusters.push(PlantedCluster {
                bbox: (num(2)?, num(3)?, num(4)?, num(5)?),
                members: Vec::new(),
            }),
            Some(_) => return Err(err(ln + 1, "unknown record type")),
        }
    }
    for (i, mc) in mcs.iter().enumerate() {
        if let Some(c) = mc.cluster {
            clusters
                .get_mut(c)
                .ok_or_else(|| err(0, "calcification refers to a missing cluster"))?
                .members
                .push(i);
        }
    }
    Ok((mcs, clusters))
}

#[cfg(test)]
mod tests {
    use super::super::clusters::detect_clusters;
    use super::super::components::connected_components;
    use super::*;

    #[test]
    fn same_seed_same_phantom() {
        let c = PhantomConfig::default();
        let a = generate_phantom(&c, 11).unwrap();
        let b = generate_phantom(&c, 11).unwrap();
        assert_eq!(a.image, b.image);
        assert_eq!(a.mask, b.mask);
        let other = generate_phantom(&c, 12).unwrap();
        assert_ne!(a.image, other.image);
    }

    #[test]
    fn mask_is_the_union_of_planted_blobs() {
        for seed in 0..5 {
            let p = generate_phantom(&PhantomConfig::default(), seed).unwrap();
            assert_eq!(p.mask.count(), p.mcs.iter().map(|m| m.area).sum::<usize>());
            let regions = connected_components(&p.mask);
            assert_eq!(regions.len(), p.mcs.len());
        }
    }

    #[test]
    fn calcifications_clear_the_local_background() {
        let c = PhantomConfig::default();
        for seed in 0..5 {
            let p = generate_phantom(&c, seed).unwrap();
            let full = c.maxval as f64;
            for (i, &on) in p.mask.bits().iter().enumerate() {
                if on {
                    let v = p.image.pixels()[i] as f64 / full;
                    assert!(v + 0.5 / full >= p.background[i] + c.margin, "pixel {i}");
                }
            }
        }
    }

    #[test]
    fn ground_truth_recovers_planted_cluster() {
        for seed in 0..10 {
            let p = generate_phantom(&PhantomConfig::default(), seed).unwrap();
            let regions = connected_components(&p.mask);
            let report = detect_clusters(&regions, p.image.pixel_spacing_mm).unwrap();
            let planted = &p.clusters[0];
            assert!(report.clusters.iter().any(|r| {
                planted
                    .members
                    .iter()
                    .filter(|&&m| r.contains(p.mcs[m].centroid, 1e-9))
                    .count()
                    > 5
            }));
        }
    }

    #[test]
    fn six_mc_cluster_is_recovered() {
        let c = PhantomConfig {
            cluster_size: (6, 6),
            isolated: (0, 0),
            ..PhantomConfig::default()
        };
        let p = generate_phantom(&c, 3).unwrap();
        let report = detect_clusters(&connected_components(&p.mask), 0.05).unwrap();
        assert_eq!(report.clusters.len(), 1);
        assert_eq!(report.clusters[0].mc_count(), 6);
    }

    #[test]
    fn crowded_config_is_infeasible() {
        let c = PhantomConfig {
            cluster_size: (400, 400),
            cluster_extent_px: 40.0,
            ..PhantomConfig::default()
        };
        assert!(matches!(generate_phantom(&c, 0), Err(Error::Infeasible(_))));
    }

    #[test]
    fn rejects_small_images_and_tiny_blobs() {
        let small = PhantomConfig {
            width: 128,
            ..PhantomConfig::default()
        };
        assert!(generate_phantom(&small, 0).is_err());
        let tiny = PhantomConfig {
            diameter_px: (1.0, 3.0),
            ..PhantomConfig::default()
        };
        assert!(generate_phantom(&tiny, 0).is_err());
    }

    #[test]
    fn sidecar_round_trips_clusters() {
        let p = generate_phantom(&PhantomConfig::default(), 4).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.txt");
        write_sidecar(&p, &path).unwrap();
        let (mcs, clusters) = read_sidecar(&path).unwrap();
        assert_eq!(mcs.len(), p.mcs.len());
        assert_eq!(clusters.len(), 1);
        assert_eq!(clusters[0].members, p.clusters[0].members);
    }
}
