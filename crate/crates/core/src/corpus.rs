//! Image collections: PGM images, tab-separated dataset manifests and
//! seeded class subsets.

use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::rng;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {reason}")]
    MalformedLine {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("duplicate image path in manifest: {0}")]
    DuplicatePath(String),
    #[error("manifest {0} has no entries")]
    EmptyManifest(PathBuf),
    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),
    #[error("unsupported maxval {0} (only 255 is accepted)")]
    UnsupportedMaxval(u32),
    #[error("truncated PGM payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("pixel buffer holds {len} bytes but {width}x{height} needs {}", width * height)]
    PixelCount {
        width: usize,
        height: usize,
        len: usize,
    },
    #[error("class count {requested} out of range 1..={available}")]
    ClassCountOutOfRange { requested: usize, available: usize },
}

pub type Result<T> = std::result::Result<T, CorpusError>;

/// 8-bit grayscale raster, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl Image {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(CorpusError::PixelCount {
                width,
                height,
                len: pixels.len(),
            });
        }
        Ok(Image {
            width,
            height,
            pixels,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Image {
            width,
            height,
            pixels,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    /// Intensity at column `x`, row `y`.
    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }
}

/// Parses a binary 8-bit PGM (P5) image.
pub fn parse_pgm(bytes: &[u8]) -> Result<Image> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(CorpusError::UnsupportedFormat(
            "expected binary PGM magic \"P5\"".into(),
        ));
    }
    let mut pos = 2;
    let mut fields = [0u32; 3];
    for field in fields.iter_mut() {
        // whitespace and `#` comments may separate header fields
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(CorpusError::UnsupportedFormat(
                "malformed PGM header".into(),
            ));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| CorpusError::UnsupportedFormat("PGM header value overflow".into()))?;
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(CorpusError::UnsupportedMaxval(maxval));
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => {
            return Err(CorpusError::UnsupportedFormat(
                "missing whitespace after PGM maxval".into(),
            ))
        }
    }
    let (width, height) = (width as usize, height as usize);
    let expected = width * height;
    let payload = &bytes[pos..];
    if payload.len() < expected {
        return Err(CorpusError::Truncated {
            expected,
            found: payload.len(),
        });
    }
    Image::new(width, height, payload[..expected].to_vec())
}

pub fn encode_pgm(image: &Image) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", image.width, image.height).into_bytes();
    out.extend_from_slice(&image.pixels);
    out
}

pub fn load_image(path: &Path) -> Result<Image> {
    let bytes = fs::read(path).map_err(|source| CorpusError::Io {
        path: path.to_owned(),
        source,
    })?;
    parse_pgm(&bytes)
}

pub fn save_image(image: &Image, path: &Path) -> Result<()> {
    fs::write(path, encode_pgm(image)).map_err(|source| CorpusError::Io {
        path: path.to_owned(),
        source,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    /// Path as written in the manifest; relative paths resolve against
    /// [`DatasetManifest::root`].
    pub path: String,
    pub label: String,
}

/// A labeled image list. Entry order follows the source file; class
/// indices follow the lexicographic order of labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    pub name: String,
    pub root: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    /// Builds a manifest, rejecting duplicate image paths.
    pub fn new(
        name: impl Into<String>,
        root: impl Into<PathBuf>,
        entries: Vec<ManifestEntry>,
    ) -> Result<Self> {
        let mut seen = HashSet::with_capacity(entries.len());
        for e in &entries {
            if !seen.insert(e.path.as_str()) {
                return Err(CorpusError::DuplicatePath(e.path.clone()));
            }
        }
        Ok(DatasetManifest {
            name: name.into(),
            root: root.into(),
            entries,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Sorted distinct class labels.
    pub fn classes(&self) -> Vec<String> {
        self.entries
            .iter()
            .map(|e| e.label.as_str())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .map(str::to_owned)
            .collect()
    }

    pub fn class_index(&self, label: &str) -> Option<usize> {
        self.classes().iter().position(|c| c == label)
    }

    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        let p = Path::new(&entry.path);
        if p.is_absolute() {
            p.to_owned()
        } else {
            self.root.join(p)
        }
    }

    pub fn labels(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.label.as_str()).collect()
    }

    /// Keeps only entries whose label is in `labels`, preserving order.
    pub fn filter_classes(&self, labels: &[String]) -> DatasetManifest {
        let keep: HashSet<&str> = labels.iter().map(String::as_str).collect();
        DatasetManifest {
            name: self.name.clone(),
            root: self.root.clone(),
            entries: self
                .entries
                .iter()
                .filter(|e| keep.contains(e.label.as_str()))
                .cloned()
                .collect(),
        }
    }

    /// Serializes in the manifest text format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&e.path);
            out.push('\t');
            out.push_str(&e.label);
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let io_err = |source| CorpusError::Io {
            path: path.to_owned(),
            source,
        };
        let mut f = fs::File::create(path).map_err(io_err)?;
        f.write_all(self.to_text().as_bytes()).map_err(io_err)
    }
}

/// Parses manifest text. `path` is used for error messages only.
pub fn parse_manifest(text: &str, name: &str, root: &Path, path: &Path) -> Result<DatasetManifest> {
    let mut entries = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let malformed = |reason: &str| CorpusError::MalformedLine {
            path: path.to_owned(),
            line: i + 1,
            reason: reason.to_owned(),
        };
        let mut parts = line.split('\t');
        let (img, label) = match (parts.next(), parts.next(), parts.next()) {
            (Some(p), Some(l), None) => (p, l),
            _ => return Err(malformed("expected `path<TAB>label`")),
        };
        if img.is_empty() {
            return Err(malformed("empty image path"));
        }
        if label.is_empty() {
            return Err(malformed("empty class label"));
        }
        entries.push(ManifestEntry {
            path: img.to_owned(),
            label: label.to_owned(),
        });
    }
    if entries.is_empty() {
        return Err(CorpusError::EmptyManifest(path.to_owned()));
    }
    DatasetManifest::new(name, root, entries)
}

/// Loads a manifest file. The manifest is named after the file stem and
/// relative image paths resolve against the file's directory.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_owned(),
        source,
    })?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let root = path.parent().map(Path::to_owned).unwrap_or_default();
    parse_manifest(&text, &name, &root, path)
}

/// Class labels in the seed-determined order used by [`select_classes`].
///
/// A prefix of this list is what `select_classes` keeps, so for a fixed
/// seed the selections for increasing counts are nested.
pub fn class_permutation(manifest: &DatasetManifest, seed: u64) -> Vec<String> {
    let mut classes = manifest.classes();
    rng::shuffle(&mut classes, &mut rng::seeded(seed));
    classes
}

/// Restricts `manifest` to the first `class_count` classes of a seeded
/// permutation of its labels.
pub fn select_classes(
    manifest: &DatasetManifest,
    class_count: usize,
    seed: u64,
) -> Result<DatasetManifest> {
    let perm = class_permutation(manifest, seed);
    if class_count == 0 || class_count > perm.len() {
        return Err(CorpusError::ClassCountOutOfRange {
            requested: class_count,
            available: perm.len(),
        });
    }
    Ok(manifest.filter_classes(&perm[..class_count]))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manifest_from(text: &str) -> Result<DatasetManifest> {
        parse_manifest(text, "m", Path::new("/data"), Path::new("m.tsv"))
    }

    #[test]
    fn two_line_manifest() {
        let m = manifest_from("b/1.pgm\tb\na/1.pgm\ta\n").unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m.classes(), vec!["a", "b"]);
        assert_eq!(m.entries[0].label, "b");
    }

    #[test]
    fn comments_and_blank_lines_skipped() {
        let m = manifest_from("# header\n\nx.pgm\tc\n   \n").unwrap();
        assert_eq!(m.len(), 1);
    }

    #[test]
    fn duplicate_path_is_named() {
        let err = manifest_from("x.pgm\ta\nx.pgm\tb\n").unwrap_err();
        assert!(matches!(&err, CorpusError::DuplicatePath(p) if p == "x.pgm"));
        assert!(err.to_string().contains("x.pgm"));
    }

    #[test]
    fn malformed_line_reports_number() {
        let err = manifest_from("ok.pgm\ta\nno-tab-here\n").unwrap_err();
        assert!(matches!(err, CorpusError::MalformedLine { line: 2, .. }));
    }

    #[test]
    fn empty_manifest_rejected() {
        assert!(matches!(
            manifest_from("# nothing\n"),
            Err(CorpusError::EmptyManifest(_))
        ));
    }

    #[test]
    fn class_index_is_lexicographic() {
        let text: String = (0..101)
            .rev()
            .map(|i| format!("img{i}.pgm\tclass_{i:03}\n"))
            .collect();
        let m = manifest_from(&text).unwrap();
        assert_eq!(m.classes().len(), 101);
        assert_eq!(m.class_index("class_000"), Some(0));
        assert_eq!(m.class_index("class_100"), Some(100));
    }

    #[test]
    fn relative_paths_resolve_against_root() {
        let m = manifest_from("sub/x.pgm\ta\n/abs/y.pgm\tb\n").unwrap();
        assert_eq!(m.resolve(&m.entries[0]), PathBuf::from("/data/sub/x.pgm"));
        assert_eq!(m.resolve(&m.entries[1]), PathBuf::from("/abs/y.pgm"));
    }

    #[test]
    fn pgm_all_zero() {
        let mut bytes = b"P5\n4 4\n255\n".to_vec();
        bytes.extend([0u8; 16]);
        let img = parse_pgm(&bytes).unwrap();
        assert_eq!((img.width(), img.height()), (4, 4));
        assert_eq!(img.pixels(), &[0u8; 16]);
    }

    #[test]
    fn pgm_rejects_16_bit() {
        let mut bytes = b"P5 2 2 65535\n".to_vec();
        bytes.extend([0u8; 8]);
        let err = parse_pgm(&bytes).unwrap_err();
        assert!(matches!(err, CorpusError::UnsupportedMaxval(65535)));
        assert!(err.to_string().contains("unsupported maxval"));
    }

    #[test]
    fn pgm_truncated_payload() {
        let mut bytes = b"P5\n2 3\n255\n".to_vec();
        bytes.extend([7u8; 5]);
        assert!(matches!(
            parse_pgm(&bytes),
            Err(CorpusError::Truncated {
                expected: 6,
                found: 5
            })
        ));
    }

    #[test]
    fn pgm_rejects_ascii_variant() {
        assert!(matches!(
            parse_pgm(b"P2\n1 1\n255\n0\n"),
            Err(CorpusError::UnsupportedFormat(_))
        ));
    }

    #[test]
    fn pgm_header_comments() {
        let mut bytes = b"P5\n# made by hand\n1 2\n255\n".to_vec();
        bytes.extend([9u8, 200]);
        let img = parse_pgm(&bytes).unwrap();
        assert_eq!(img.pixels(), &[9, 200]);
    }

    #[test]
    fn pgm_roundtrip_keeps_payload_bytes() {
        // payload starting with whitespace-valued bytes must not be eaten
        let img = Image::new(3, 1, vec![b'\n', b' ', 255]).unwrap();
        assert_eq!(parse_pgm(&encode_pgm(&img)).unwrap(), img);
    }

    fn labeled(n_classes: usize) -> DatasetManifest {
        let entries = (0..n_classes)
            .flat_map(|c| {
                (0..3).map(move |i| ManifestEntry {
                    path: format!("c{c}/{i}.pgm"),
                    label: format!("c{c:02}"),
                })
            })
            .collect();
        DatasetManifest::new("t", "/", entries).unwrap()
    }

    #[test]
    fn select_all_classes_keeps_everything() {
        let m = labeled(5);
        for seed in 0..4 {
            assert_eq!(select_classes(&m, 5, seed).unwrap().entries, m.entries);
        }
    }

    #[test]
    fn selection_is_nested_and_deterministic() {
        let m = labeled(12);
        let one = select_classes(&m, 1, 9).unwrap().classes();
        let six = select_classes(&m, 6, 9).unwrap().classes();
        assert_eq!(one.len(), 1);
        assert_eq!(six.len(), 6);
        assert!(six.contains(&one[0]));
        assert_eq!(
            select_classes(&m, 6, 9).unwrap(),
            select_classes(&m, 6, 9).unwrap()
        );
    }

    #[test]
    fn class_count_out_of_range() {
        let m = labeled(3);
        assert!(select_classes(&m, 0, 1).is_err());
        assert!(matches!(
            select_classes(&m, 4, 1),
            Err(CorpusError::ClassCountOutOfRange {
                requested: 4,
                available: 3
            })
        ));
    }
}
