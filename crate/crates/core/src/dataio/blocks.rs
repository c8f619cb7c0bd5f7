use rand::seq::SliceRandom;
use rand::Rng;

use super::sample::Sample;
use crate::error::{invalid, Result};

/// Cuts `n_blocks` aligned `block x block` crops out of a sample.
///
/// When the mask has tampered pixels, at least half of the crops (rounded up)
/// are forced to contain one. Crops cover plain, distorted and mask at the
/// same coordinates.
pub fn extract_blocks<R: Rng + ?Sized>(
    sample: &Sample,
    block: usize,
    n_blocks: usize,
    rng: &mut R,
) -> Result<Vec<Sample>> {
    let (h, w) = sample.dims();
    if block == 0 || block > h.min(w) {
        return Err(invalid!(
            "block size {block} does not fit sample `{}` of size {h}x{w}",
            sample.id
        ));
    }
    let tampered: Vec<usize> = sample
        .mask
        .data()
        .iter()
        .enumerate()
        .filter_map(|(i, &v)| (v == 1).then_some(i))
        .collect();
    let quota = if tampered.is_empty() {
        0
    } else {
        n_blocks.div_ceil(2)
    };

    let mut origins = Vec::with_capacity(n_blocks);
    for k in 0..n_blocks {
        if k < quota {
            let idx = tampered[rng.random_range(0..tampered.len())];
            let (r, c) = (idx / w, idx % w);
            let top = rng.random_range(r.saturating_sub(block - 1)..=r.min(h - block));
            let left = rng.random_range(c.saturating_sub(block - 1)..=c.min(w - block));
            origins.push((top, left));
        } else {
            origins.push((
                rng.random_range(0..=h - block),
                rng.random_range(0..=w - block),
            ));
        }
    }
    origins.shuffle(rng);
    origins
        .into_iter()
        .map(|(top, left)| sample.crop(top, left, block, block))
        .collect()
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::dataio::raster::{Image, Mask, Role};

    fn sample(h: usize, w: usize, tampered: &[(usize, usize)]) -> Sample {
        let data: Vec<f32> = (0..h * w * 3).map(|i| (i % 251) as f32 / 251.0).collect();
        let plain = Image::new(h, w, data, Role::Plain).unwrap();
        let mut mask = Mask::zeros(h, w).unwrap();
        for &(r, c) in tampered {
            mask.set(r, c, true);
        }
        let distorted = plain.with_role(Role::Distorted);
        Sample::new("s", plain, mask)
            .unwrap()
            .with_distorted(distorted)
            .unwrap()
    }

    #[test]
    fn crops_stay_in_bounds() {
        let s = sample(512, 512, &[(300, 300)]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let blocks = extract_blocks(&s, 128, 16, &mut rng).unwrap();
        assert_eq!(blocks.len(), 16);
        for b in &blocks {
            assert_eq!(b.dims(), (128, 128));
            let (top, left) = parse_origin(&b.id);
            assert!(top <= 384 && left <= 384);
        }
    }

    #[test]
    fn full_size_block_is_identity() {
        let s = sample(64, 64, &[(10, 10)]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let blocks = extract_blocks(&s, 64, 3, &mut rng).unwrap();
        for b in blocks {
            assert_eq!(b.plain, s.plain);
            assert_eq!(b.mask, s.mask);
        }
    }

    #[test]
    fn oversize_block_is_rejected() {
        let s = sample(32, 48, &[]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(extract_blocks(&s, 33, 1, &mut rng).is_err());
    }

    #[test]
    fn quota_holds_for_sparse_masks() {
        let s = sample(256, 256, &[(200, 17)]);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let blocks = extract_blocks(&s, 32, 9, &mut rng).unwrap();
        let hits = blocks
            .iter()
            .filter(|b| b.mask.tampered_count() > 0)
            .count();
        assert!(hits >= 5, "{hits}");
    }

    #[test]
    fn empty_mask_waives_quota() {
        let s = sample(64, 64, &[]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let blocks = extract_blocks(&s, 16, 8, &mut rng).unwrap();
        assert_eq!(blocks.len(), 8);
        assert!(blocks.iter().all(|b| b.mask.tampered_count() == 0));
    }

    #[test]
    fn layers_are_aligned() {
        // Plant a marker in every layer at the same coordinate.
        let mut s = sample(96, 80, &[(40, 33)]);
        s.plain.set_pixel(40, 33, [1.0, 0.0, 1.0]);
        let mut d = s.distorted.clone().unwrap();
        d.set_pixel(40, 33, [0.0, 1.0, 0.0]);
        s.distorted = Some(d);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for b in extract_blocks(&s, 24, 20, &mut rng).unwrap() {
            let (top, left) = parse_origin(&b.id);
            for r in 0..24 {
                for c in 0..24 {
                    let src = (top + r, left + c);
                    assert_eq!(b.plain.pixel(r, c), s.plain.pixel(src.0, src.1));
                    assert_eq!(
                        b.distorted.as_ref().unwrap().pixel(r, c),
                        s.distorted.as_ref().unwrap().pixel(src.0, src.1)
                    );
                    assert_eq!(b.mask.get(r, c), s.mask.get(src.0, src.1));
                }
            }
        }
    }

    fn parse_origin(id: &str) -> (usize, usize) {
        let (_, pos) = id.rsplit_once('@').unwrap();
        let (t, l) = pos.split_once(',').unwrap();
        (t.parse().unwrap(), l.parse().unwrap())
    }
}
