use super::image::BinaryMask;

/// One 8-connected group of mask pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub label: u32,
    pub area: usize,
    /// Mean pixel coordinate `(x, y)`.
    pub centroid: (f64, f64),
    /// Inclusive `(x0, y0, x1, y1)`.
    pub bbox: (usize, usize, usize, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledRegions {
    pub width: usize,
    pub height: usize,
    /// Row-major component id per pixel; 0 is background.
    pub labels: Vec<u32>,
    /// `components[k]` carries label `k + 1`.
    pub components: Vec<Component>,
}

impl LabeledRegions {
    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn label_at(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    pub fn centroids(&self) -> Vec<(f64, f64)> {
        self.components.iter().map(|c| c.centroid).collect()
    }
}

type Bbox = (usize, usize, usize, usize);

/// Disjoint-set forest with path halving and union by index (smaller root
/// wins, which keeps final labels in raster order of first appearance).
#[derive(Debug, Clone)]
pub(crate) struct UnionFind {
    parent: Vec<u32>,
}

impl UnionFind {
    pub(crate) fn new(n: usize) -> Self {
        Self {
            parent: (0..n as u32).collect(),
        }
    }

    pub(crate) fn find(&mut self, mut a: u32) -> u32 {
        while self.parent[a as usize] != a {
            let grand = self.parent[self.parent[a as usize] as usize];
            self.parent[a as usize] = grand;
            a = grand;
        }
        a
    }

    pub(crate) fn union(&mut self, a: u32, b: u32) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi as usize] = lo;
        }
    }
}

/// Two-pass labeling with 8-connectivity. Labels run `1..=K` in raster order
/// of each component's first pixel.
pub fn connected_components(mask: &BinaryMask) -> LabeledRegions {
    let (w, h) = (mask.width(), mask.height());
    let bits = mask.bits();
    let mut provisional = vec![0u32; w * h];
    // index 0 is a dummy so provisional labels start at 1
    let mut sets = UnionFind::new(1);
    let mut next = 1u32;

    for y in 0..h {
        for x in 0..w {
            if !bits[y * w + x] {
                continue;
            }
            let mut best = 0u32;
            let mut neighbours = [0u32; 4];
            let mut k = 0;
            // already-visited neighbours: W, NW, N, NE
            if x > 0 {
                neighbours[k] = provisional[y * w + x - 1];
                k += 1;
            }
            if y > 0 {
                let up = (y - 1) * w;
                if x > 0 {
                    neighbours[k] = provisional[up + x - 1];
                    k += 1;
                }
                neighbours[k] = provisional[up + x];
                k += 1;
                if x + 1 < w {
                    neighbours[k] = provisional[up + x + 1];
                    k += 1;
                }
            }
            for &l in &neighbours[..k] {
                if l != 0 {
                    if best == 0 {
                        best = l;
                    } else {
                        sets.union(best, l);
                    }
                }
            }
            if best == 0 {
                best = next;
                next += 1;
                sets.parent.push(best);
            }
            provisional[y * w + x] = best;
        }
    }

    let mut compact = vec![0u32; next as usize];
    let mut count = 0u32;
    // area, coordinate sums, bounding box
    let mut acc: Vec<(usize, f64, f64, Bbox)> = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let l = provisional[y * w + x];
            if l == 0 {
                continue;
            }
            let root = sets.find(l) as usize;
            if compact[root] == 0 {
                count += 1;
                compact[root] = count;
                acc.push((0, 0.0, 0.0, (x, y, x, y)));
            }
            let id = compact[root];
            provisional[y * w + x] = id;
            let a = &mut acc[id as usize - 1];
            a.0 += 1;
            a.1 += x as f64;
            a.2 += y as f64;
            a.3 = (a.3 .0.min(x), a.3 .1.min(y), a.3 .2.max(x), a.3 .3.max(y));
        }
    }

    let components = acc
        .into_iter()
        .enumerate()
        .map(|(i, (area, sx, sy, bbox))| Component {
            label: i as u32 + 1,
            area,
            centroid: (sx / area as f64, sy / area as f64),
            bbox,
        })
        .collect();
    LabeledRegions {
        width: w,
        height: h,
        labels: provisional,
        components,
    }
}

#[cfg(test)]
mod tests {
    use super::super::dihedral::{transform_square, DIHEDRAL_ORDER};
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashMap;

    fn mask_from(rows: &[&str]) -> BinaryMask {
        let w = rows[0].len();
        let bits = rows.iter().flat_map(|r| r.bytes().map(|b| b == b'#')).collect();
        BinaryMask::from_bits(w, rows.len(), bits).unwrap()
    }

    /// Breadth-first flood fill over the 8-neighbourhood.
    fn flood_fill(mask: &BinaryMask) -> Vec<u32> {
        let (w, h) = (mask.width(), mask.height());
        let mut out = vec![0u32; w * h];
        let mut next = 0;
        for start in 0..w * h {
            if !mask.bits()[start] || out[start] != 0 {
                continue;
            }
            next += 1;
            let mut queue = std::collections::VecDeque::from([start]);
            out[start] = next;
            while let Some(p) = queue.pop_front() {
                let (x, y) = ((p % w) as isize, (p / w) as isize);
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        let (nx, ny) = (x + dx, y + dy);
                        if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                            continue;
                        }
                        let q = ny as usize * w + nx as usize;
                        if mask.bits()[q] && out[q] == 0 {
                            out[q] = next;
                            queue.push_back(q);
                        }
                    }
                }
            }
        }
        out
    }

    /// Equal up to a bijective relabeling of nonzero ids.
    fn same_partition(a: &[u32], b: &[u32]) -> bool {
        let mut fwd = HashMap::new();
        let mut back = HashMap::new();
        a.iter()
            .zip(b)
            .all(|(&x, &y)| (x == 0) == (y == 0) && *fwd.entry(x).or_insert(y) == y && *back.entry(y).or_insert(x) == x)
    }

    fn random_mask(rng: &mut ChaCha8Rng, w: usize, h: usize, density: f64) -> BinaryMask {
        BinaryMask::from_bits(w, h, (0..w * h).map(|_| rng.random_bool(density)).collect()).unwrap()
    }

    #[test]
    fn plus_shape_is_one_component_centered() {
        let r = connected_components(&mask_from(&["..#..", "..#..", "#####", "..#..", "..#.."]));
        assert_eq!(r.len(), 1);
        assert_eq!(r.components[0].area, 9);
        assert_eq!(r.components[0].centroid, (2.0, 2.0));
        assert_eq!(r.components[0].bbox, (0, 0, 4, 4));
    }

    #[test]
    fn diagonal_neighbours_connect() {
        assert_eq!(connected_components(&mask_from(&["#.", ".#"])).len(), 1);
        assert_eq!(connected_components(&mask_from(&[".#", "#."])).len(), 1);
        assert_eq!(connected_components(&mask_from(&["#.#", "..."])).len(), 2);
    }

    #[test]
    fn u_shape_merges_late() {
        let r = connected_components(&mask_from(&["#...#", "#...#", "#####"]));
        assert_eq!(r.len(), 1);
        assert!(r.labels.iter().all(|&l| l <= 1));
    }

    #[test]
    fn labels_follow_raster_order() {
        let r = connected_components(&mask_from(&["...#", "#...", "#..."]));
        assert_eq!(r.label_at(3, 0), 1);
        assert_eq!(r.label_at(0, 1), 2);
    }

    #[test]
    fn matches_flood_fill_on_random_masks() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for i in 0..300 {
            let density = [0.2, 0.35, 0.5, 0.65][i % 4];
            let mask = random_mask(&mut rng, 24, 24, density);
            let r = connected_components(&mask);
            assert!(same_partition(&r.labels, &flood_fill(&mask)));
            assert_eq!(r.components.iter().map(|c| c.area).sum::<usize>(), mask.count());
            let max = r.labels.iter().copied().max().unwrap_or(0) as usize;
            assert_eq!(max, r.len());
        }
    }

    #[test]
    fn component_count_is_dihedral_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let mask = random_mask(&mut rng, 16, 16, 0.4);
            let k = connected_components(&mask).len();
            for index in 0..DIHEDRAL_ORDER {
                let t = BinaryMask::from_bits(16, 16, transform_square(mask.bits(), 16, index)).unwrap();
                assert_eq!(connected_components(&t).len(), k);
            }
        }
    }
}
