//! Per-image descriptor cache files.
//!
//! Layout (little-endian): magic `BOWDSIFT`, version u32, N u32, dims u32
//! (=128), stride u32, patch u32, then N × (x u32, y u32, 128 × u8).

use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::{Descriptor, DescriptorSet, GridParams, Keypoint, DESCRIPTOR_LEN};
use crate::binio::{self, bad_data};

const MAGIC: &[u8; 8] = b"BOWDSIFT";
const VERSION: u32 = 1;

pub fn write_descriptor_cache(
    w: &mut impl Write,
    set: &DescriptorSet,
    params: &GridParams,
) -> io::Result<()> {
    w.write_all(MAGIC)?;
    binio::write_u32(w, VERSION)?;
    binio::write_len(w, set.len())?;
    binio::write_u32(w, DESCRIPTOR_LEN as u32)?;
    binio::write_len(w, params.stride)?;
    binio::write_len(w, params.patch_size)?;
    for (kp, d) in set.keypoints.iter().zip(&set.descriptors) {
        binio::write_u32(w, kp.x)?;
        binio::write_u32(w, kp.y)?;
        w.write_all(&d.0)?;
    }
    Ok(())
}

/// Reads a cache file, failing if it was written with other grid params.
pub fn read_descriptor_cache(
    r: &mut impl Read,
    params: &GridParams,
    source: &str,
) -> io::Result<DescriptorSet> {
    binio::expect_magic(r, MAGIC, "descriptor cache")?;
    binio::expect_version(r, VERSION, "descriptor cache")?;
    let n = binio::read_u32(r)? as usize;
    let dims = binio::read_u32(r)? as usize;
    if dims != DESCRIPTOR_LEN {
        return Err(bad_data(format!("descriptor dims {dims}, expected 128")));
    }
    let stride = binio::read_u32(r)? as usize;
    let patch = binio::read_u32(r)? as usize;
    if stride != params.stride || patch != params.patch_size {
        return Err(bad_data(format!(
            "cache built with stride {stride} patch {patch}, requested stride {} patch {}",
            params.stride, params.patch_size
        )));
    }
    let mut keypoints = Vec::with_capacity(n);
    let mut descriptors = Vec::with_capacity(n);
    for _ in 0..n {
        let x = binio::read_u32(r)?;
        let y = binio::read_u32(r)?;
        keypoints.push(Keypoint { x, y });
        descriptors.push(Descriptor(binio::read_array(r)?));
    }
    Ok(DescriptorSet {
        source: source.to_owned(),
        keypoints,
        descriptors,
    })
}

/// Cache location for an image under `dir`, keyed by (image path, params).
pub fn cache_path(dir: &Path, image: &Path, params: &GridParams) -> PathBuf {
    let mut h = Sha256::new();
    h.update(image.as_os_str().as_encoded_bytes());
    h.update(format!("\0s{}\0p{}", params.stride, params.patch_size));
    let digest = hex::encode(h.finalize());
    dir.join(format!("{}.dsift", &digest[..32]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Image;
    use crate::features::extract_dense_sift;

    #[test]
    fn roundtrip() {
        let img = Image::from_fn(40, 30, |x, y| (x * y % 251) as u8);
        let params = GridParams::new(5, 12).unwrap();
        let mut set = extract_dense_sift(&img, &params).unwrap();
        set.source = "img.pgm".into();
        let mut buf = Vec::new();
        write_descriptor_cache(&mut buf, &set, &params).unwrap();
        assert_eq!(buf.len(), 28 + set.len() * (8 + 128));
        let back = read_descriptor_cache(&mut buf.as_slice(), &params, "img.pgm").unwrap();
        assert_eq!(back, set);
    }

    #[test]
    fn params_mismatch_rejected() {
        let img = Image::from_fn(16, 16, |x, _| x as u8);
        let params = GridParams::default();
        let set = extract_dense_sift(&img, &params).unwrap();
        let mut buf = Vec::new();
        write_descriptor_cache(&mut buf, &set, &params).unwrap();
        let other = GridParams::new(4, 16).unwrap();
        assert!(read_descriptor_cache(&mut buf.as_slice(), &other, "").is_err());
    }

    #[test]
    fn truncated_file_rejected() {
        let img = Image::from_fn(16, 16, |x, _| x as u8);
        let params = GridParams::default();
        let set = extract_dense_sift(&img, &params).unwrap();
        let mut buf = Vec::new();
        write_descriptor_cache(&mut buf, &set, &params).unwrap();
        buf.truncate(buf.len() - 1);
        assert!(read_descriptor_cache(&mut buf.as_slice(), &params, "").is_err());
    }

    #[test]
    fn cache_key_depends_on_path_and_params() {
        let dir = Path::new("/cache");
        let p = GridParams::default();
        let a = cache_path(dir, Path::new("a.pgm"), &p);
        assert_eq!(a, cache_path(dir, Path::new("a.pgm"), &p));
        assert_ne!(a, cache_path(dir, Path::new("b.pgm"), &p));
        assert_ne!(
            a,
            cache_path(dir, Path::new("a.pgm"), &GridParams::new(4, 16).unwrap())
        );
    }
}
