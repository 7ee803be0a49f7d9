use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::taxonomy::{chessboard_distance, PatchClass};
use crate::error::{Error, Result};
use crate::imaging::{foreground_mask, otsu_threshold, read_mask_pgm, read_pgm, BinaryMask, GrayImage};

/// One training sample: a patch center in a source image and its class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PatchRecord {
    pub image: u32,
    pub cx: u32,
    pub cy: u32,
    pub class: PatchClass,
}

/// An image with its ground-truth mask and where they live on disk.
#[derive(Debug, Clone)]
pub struct LabeledImage {
    pub image_path: PathBuf,
    pub mask_path: PathBuf,
    pub image: GrayImage,
    pub mask: BinaryMask,
}

impl LabeledImage {
    /// Reads an image and its mask, checking that their sizes agree.
    pub fn read(image_path: impl Into<PathBuf>, mask_path: impl Into<PathBuf>) -> Result<Self> {
        let (image_path, mask_path) = (image_path.into(), mask_path.into());
        let image = read_pgm(&image_path)?;
        let mask = read_mask_pgm(&mask_path)?;
        mask.check_matches(&image)?;
        Ok(Self {
            image_path,
            mask_path,
            image,
            mask,
        })
    }
}

/// How many peripheral and empty patches to keep per image, relative to the
/// number of calcification pixels in it. Every C1 and C2 center is kept.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingConfig {
    pub c3_per_c1: f64,
    pub c4_per_c1: f64,
    /// C4 records taken from an image without calcifications.
    pub c4_when_empty: usize,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            c3_per_c1: 50.0,
            c4_per_c1: 200.0,
            c4_when_empty: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub image_path: PathBuf,
    pub mask_path: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatchIndex {
    pub patch_size: usize,
    pub manifest: Vec<ManifestEntry>,
    groups: [Vec<PatchRecord>; 4],
}

impl PatchIndex {
    pub fn new(
        patch_size: usize,
        manifest: Vec<ManifestEntry>,
        records: impl IntoIterator<Item = PatchRecord>,
    ) -> Result<Self> {
        let mut groups: [Vec<PatchRecord>; 4] = Default::default();
        for r in records {
            if r.image as usize >= manifest.len() {
                return Err(Error::invalid(format!(
                    "record refers to image {} outside the manifest",
                    r.image
                )));
            }
            groups[r.class.index()].push(r);
        }
        Ok(Self {
            patch_size,
            manifest,
            groups,
        })
    }

    pub fn records(&self, class: PatchClass) -> &[PatchRecord] {
        &self.groups[class.index()]
    }

    pub fn count(&self, class: PatchClass) -> usize {
        self.groups[class.index()].len()
    }

    pub fn counts(&self) -> [usize; 4] {
        PatchClass::ALL.map(|c| self.count(c))
    }

    pub fn len(&self) -> usize {
        self.groups.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = &PatchRecord> {
        self.groups.iter().flatten()
    }

    /// Writes the record list (`image_path,cx,cy,class`) and the manifest
    /// (`id,image_path,mask_path`, preceded by a `# patch_size` line).
    pub fn save(&self, index_path: impl AsRef<Path>, manifest_path: impl AsRef<Path>) -> Result<()> {
        let mut file = fs::File::create(manifest_path.as_ref())?;
        writeln!(file, "# patch_size {}", self.patch_size)?;
        let mut w = csv::Writer::from_writer(file);
        w.write_record(["id", "image_path", "mask_path"]).map_err(csv_io)?;
        for (id, e) in self.manifest.iter().enumerate() {
            w.write_record([id.to_string(), path_str(&e.image_path)?, path_str(&e.mask_path)?])
                .map_err(csv_io)?;
        }
        w.flush()?;

        let mut w = csv::Writer::from_path(index_path.as_ref()).map_err(csv_io)?;
        w.write_record(["image_path", "cx", "cy", "class"]).map_err(csv_io)?;
        let names: Vec<String> = self
            .manifest
            .iter()
            .map(|e| path_str(&e.image_path))
            .collect::<Result<_>>()?;
        for r in self.iter() {
            w.write_record([
                names[r.image as usize].as_str(),
                &r.cx.to_string(),
                &r.cy.to_string(),
                r.class.name(),
            ])
            .map_err(csv_io)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(index_path: impl AsRef<Path>, manifest_path: impl AsRef<Path>) -> Result<Self> {
        let manifest_path = manifest_path.as_ref();
        let text = fs::read_to_string(manifest_path)?;
        let perr = |path: &Path, line: usize, reason: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            reason,
        };
        let patch_size = text
            .lines()
            .find_map(|l| l.strip_prefix("# patch_size "))
            .and_then(|v| v.trim().parse::<usize>().ok())
            .ok_or_else(|| perr(manifest_path, 1, "missing '# patch_size' line".into()))?;

        let mut manifest = Vec::new();
        let mut r = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        for (i, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| perr(manifest_path, i + 2, e.to_string()))?;
            if rec.len() != 3 || rec[0].parse::<usize>().ok() != Some(manifest.len()) {
                return Err(perr(
                    manifest_path,
                    i + 3,
                    "expected consecutive id,image_path,mask_path".into(),
                ));
            }
            manifest.push(ManifestEntry {
                image_path: PathBuf::from(&rec[1]),
                mask_path: PathBuf::from(&rec[2]),
            });
        }

        let index_path = index_path.as_ref();
        let ids: std::collections::HashMap<&Path, u32> = manifest
            .iter()
            .enumerate()
            .map(|(i, e)| (e.image_path.as_path(), i as u32))
            .collect();
        let mut records = Vec::new();
        let mut r = csv::Reader::from_path(index_path).map_err(csv_io)?;
        for (i, rec) in r.records().enumerate() {
            let line = i + 2;
            let rec = rec.map_err(|e| perr(index_path, line, e.to_string()))?;
            if rec.len() != 4 {
                return Err(perr(index_path, line, "expected image_path,cx,cy,class".into()));
            }
            let image = *ids
                .get(Path::new(&rec[0]))
                .ok_or_else(|| perr(index_path, line, format!("image {:?} not in manifest", &rec[0])))?;
            let coord = |s: &str| s.parse::<u32>().map_err(|e| perr(index_path, line, e.to_string()));
            records.push(PatchRecord {
                image,
                cx: coord(&rec[1])?,
                cy: coord(&rec[2])?,
                class: rec[3]
                    .parse()
                    .map_err(|e: Error| perr(index_path, line, e.to_string()))?,
            });
        }
        Self::new(patch_size, manifest, records)
    }
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(e.into())
}

fn path_str(p: &Path) -> Result<String> {
    p.to_str()
        .map(str::to_owned)
        .ok_or_else(|| Error::invalid(format!("path {p:?} is not valid UTF-8")))
}

/// Enumerates every C1 and C2 center of every image, and a uniform random
/// subset of C3 centers and of C4 centers on the Otsu foreground, capped per
/// image by `config`.
pub fn build_patch_index(images: &[LabeledImage], n: usize, config: SamplingConfig, seed: u64) -> Result<PatchIndex> {
    if n.is_multiple_of(2) || n < 3 {
        return Err(Error::invalid(format!(
            "patch size must be odd and at least 3, got {n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::new();
    let mut manifest = Vec::with_capacity(images.len());
    for (id, li) in images.iter().enumerate() {
        li.mask.check_matches(&li.image)?;
        manifest.push(ManifestEntry {
            image_path: li.image_path.clone(),
            mask_path: li.mask_path.clone(),
        });
        let mut image_rng = ChaCha8Rng::seed_from_u64(rng.random());
        records.extend(image_records(id as u32, li, n, config, &mut image_rng));
    }
    PatchIndex::new(n, manifest, records)
}

fn image_records(
    id: u32,
    li: &LabeledImage,
    n: usize,
    config: SamplingConfig,
    rng: &mut ChaCha8Rng,
) -> Vec<PatchRecord> {
    let w = li.image.width();
    let at = |i: usize, class| PatchRecord {
        image: id,
        cx: (i % w) as u32,
        cy: (i / w) as u32,
        class,
    };
    let foreground = foreground_mask(&li.image, otsu_threshold(&li.image));
    let mut out = Vec::new();
    let Some(dist) = chessboard_distance(&li.mask) else {
        let fg: Vec<usize> = (0..w * li.image.height()).filter(|&i| foreground.bits()[i]).collect();
        out.extend(subsample(&fg, config.c4_when_empty, rng).map(|i| at(i, PatchClass::C4)));
        return out;
    };
    let mut by_class: [Vec<usize>; 4] = Default::default();
    for (i, &d) in dist.iter().enumerate() {
        let class = PatchClass::from_distance(Some(d as usize), n);
        if class != PatchClass::C4 || foreground.bits()[i] {
            by_class[class.index()].push(i);
        }
    }
    let c1 = by_class[0].len() as f64;
    out.extend(by_class[0].iter().map(|&i| at(i, PatchClass::C1)));
    out.extend(by_class[1].iter().map(|&i| at(i, PatchClass::C2)));
    let c3_cap = (config.c3_per_c1 * c1).round() as usize;
    out.extend(subsample(&by_class[2], c3_cap, rng).map(|i| at(i, PatchClass::C3)));
    let c4_cap = (config.c4_per_c1 * c1).round() as usize;
    out.extend(subsample(&by_class[3], c4_cap, rng).map(|i| at(i, PatchClass::C4)));
    out
}

/// Up to `cap` distinct items, kept in their original order.
fn subsample<'a>(items: &'a [usize], cap: usize, rng: &mut ChaCha8Rng) -> impl Iterator<Item = usize> + 'a {
    let mut picked: Vec<usize> = if items.len() <= cap {
        (0..items.len()).collect()
    } else {
        sample(rng, items.len(), cap).into_vec()
    };
    picked.sort_unstable();
    picked.into_iter().map(move |k| items[k])
}

#[cfg(test)]
mod tests {
    use super::super::taxonomy::assign_patch_class;
    use super::*;
    use crate::imaging::{generate_phantom, PhantomConfig};

    fn labeled(image: GrayImage, mask: BinaryMask, name: &str) -> LabeledImage {
        LabeledImage {
            image_path: PathBuf::from(format!("{name}.pgm")),
            mask_path: PathBuf::from(format!("{name}_mask.pgm")),
            image,
            mask,
        }
    }

    fn two_level_image() -> GrayImage {
        let px = (0..40 * 40).map(|i| if i % 40 < 30 { 200 } else { 10 }).collect();
        GrayImage::new(40, 40, 255, px).unwrap()
    }

    #[test]
    fn seven_mc_pixels_give_seven_c1_records() {
        let mut mask = BinaryMask::new(40, 40);
        for (x, y) in [(10, 10), (11, 10), (10, 11), (20, 20), (21, 21), (5, 30), (25, 5)] {
            mask.set(x, y, true);
        }
        let idx = build_patch_index(
            &[labeled(two_level_image(), mask, "a")],
            9,
            SamplingConfig::default(),
            0,
        )
        .unwrap();
        assert_eq!(idx.count(PatchClass::C1), 7);
        assert!(idx.count(PatchClass::C2) > 0);
    }

    #[test]
    fn empty_mask_yields_only_foreground_c4() {
        let img = two_level_image();
        let idx = build_patch_index(
            &[labeled(img.clone(), BinaryMask::new(40, 40), "a")],
            9,
            SamplingConfig::default(),
            0,
        )
        .unwrap();
        assert_eq!(idx.counts(), [0, 0, 0, 1000]);
        assert!(idx.iter().all(|r| img.get(r.cx as usize, r.cy as usize) == 200));
    }

    #[test]
    fn records_agree_with_direct_classification() {
        let p = generate_phantom(&PhantomConfig::default(), 3).unwrap();
        let li = labeled(p.image, p.mask.clone(), "p");
        let config = SamplingConfig {
            c3_per_c1: 2.0,
            c4_per_c1: 2.0,
            c4_when_empty: 10,
        };
        let idx = build_patch_index(&[li], 25, config, 1).unwrap();
        assert_eq!(idx.count(PatchClass::C1), p.mask.count());
        assert_eq!(idx.count(PatchClass::C3), 2 * p.mask.count());
        for r in idx.iter() {
            assert_eq!(assign_patch_class(&p.mask, r.cx as usize, r.cy as usize, 25), r.class);
        }
    }

    #[test]
    fn mismatched_mask_rejected() {
        let li = labeled(two_level_image(), BinaryMask::new(39, 40), "a");
        assert!(matches!(
            build_patch_index(&[li], 9, SamplingConfig::default(), 0),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn same_seed_same_index() {
        let p = generate_phantom(&PhantomConfig::default(), 8).unwrap();
        let li = [labeled(p.image, p.mask, "p")];
        let a = build_patch_index(&li, 49, SamplingConfig::default(), 5).unwrap();
        let b = build_patch_index(&li, 49, SamplingConfig::default(), 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn index_files_round_trip() {
        let p = generate_phantom(&PhantomConfig::default(), 9).unwrap();
        let mut mask = BinaryMask::new(40, 40);
        mask.set(20, 20, true);
        let li = [
            labeled(p.image, p.mask, "dir/p one"),
            labeled(two_level_image(), mask, "q,2"),
        ];
        let config = SamplingConfig {
            c3_per_c1: 1.0,
            c4_per_c1: 1.0,
            c4_when_empty: 5,
        };
        let idx = build_patch_index(&li, 15, config, 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let (ip, mp) = (dir.path().join("index.csv"), dir.path().join("manifest.csv"));
        idx.save(&ip, &mp).unwrap();
        assert_eq!(PatchIndex::load(&ip, &mp).unwrap(), idx);
    }
}
