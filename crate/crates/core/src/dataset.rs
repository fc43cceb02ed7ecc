//! Benchmark dataset ingestion: manifest CSV, 16-bit image decoding, chart
//! masking and per-camera fold splits.
//!
//! Manifest columns (header row required):
//! `image_path, gt_r, gt_g, gt_b, black_r, black_g, black_b, sat_r, sat_g,
//! sat_b, mask, camera_id, fold`. `mask` holds `;`-separated `x,y,w,h`
//! rectangles and may be empty; `fold` may be empty.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::color::{normalize, Illuminant};
use crate::estimators::{downsample, normalize_raw, EstimatorError, Raw16Image, RawImage, Rect};

pub const DEFAULT_TARGET: (usize, usize) = (384, 256);

pub const COLUMNS: [&str; 13] = [
    "image_path",
    "gt_r",
    "gt_g",
    "gt_b",
    "black_r",
    "black_g",
    "black_b",
    "sat_r",
    "sat_g",
    "sat_b",
    "mask",
    "camera_id",
    "fold",
];

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("manifest row {row}{}: {message}", column.as_ref().map(|c| format!(", column '{c}'")).unwrap_or_default())]
    Parse {
        row: usize,
        column: Option<String>,
        message: String,
    },
    #[error("manifest row {row}: image not found: {path}")]
    MissingImage { row: usize, path: PathBuf },
    #[error("manifest row {row}: saturation level must exceed black level (channel {channel})")]
    InvalidLevels { row: usize, channel: usize },
    #[error("cannot decode {path}: {message}")]
    Decode { path: PathBuf, message: String },
    #[error("{path}: every pixel is masked")]
    AllMasked { path: PathBuf },
    #[error("record {path} has no fold label")]
    MissingFoldLabel { path: PathBuf },
    #[error("record {path} has fold {fold}, outside 1..={k}")]
    InvalidFold { path: PathBuf, fold: u32, k: u32 },
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
}

/// One image with its ground truth and sensor levels.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub image_path: PathBuf,
    /// Unit-normalized ground-truth illuminant.
    pub gt_illuminant: Illuminant,
    pub black_level: [u32; 3],
    pub saturation_level: [u32; 3],
    pub mask_rects: Vec<Rect>,
    pub camera_id: String,
    pub fold: Option<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub name: String,
    pub records: Vec<SampleRecord>,
}

fn parse_err(row: usize, column: &str, message: impl Into<String>) -> DatasetError {
    DatasetError::Parse {
        row,
        column: Some(column.to_string()),
        message: message.into(),
    }
}

fn parse_rects(s: &str, row: usize) -> Result<Vec<Rect>, DatasetError> {
    s.split(';')
        .map(str::trim)
        .filter(|r| !r.is_empty())
        .map(|r| {
            let v: Vec<usize> = r
                .split(',')
                .map(|x| x.trim().parse::<usize>())
                .collect::<Result<_, _>>()
                .map_err(|e| parse_err(row, "mask", format!("bad rectangle '{r}': {e}")))?;
            match v.as_slice() {
                [x, y, w, h] => Ok(Rect {
                    x: *x,
                    y: *y,
                    w: *w,
                    h: *h,
                }),
                _ => Err(parse_err(
                    row,
                    "mask",
                    format!("rectangle '{r}' needs 4 integers"),
                )),
            }
        })
        .collect()
}

fn format_rects(rects: &[Rect]) -> String {
    rects
        .iter()
        .map(|r| format!("{},{},{},{}", r.x, r.y, r.w, r.h))
        .collect::<Vec<_>>()
        .join(";")
}

/// Parse a manifest from any reader. Relative image paths are resolved
/// against `base_dir`; with `check_images` every image must exist.
pub fn parse_manifest(
    reader: impl Read,
    base_dir: &Path,
    name: impl Into<String>,
    check_images: bool,
) -> Result<DatasetManifest, DatasetError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| DatasetError::Parse {
            row: 0,
            column: None,
            message: e.to_string(),
        })?
        .clone();
    if headers.is_empty() || headers.iter().all(str::is_empty) {
        return Err(DatasetError::Parse {
            row: 0,
            column: None,
            message: "empty manifest".into(),
        });
    }
    let mut index = [0usize; 13];
    for (k, col) in COLUMNS.iter().enumerate() {
        index[k] = headers
            .iter()
            .position(|h| h == *col)
            .ok_or_else(|| parse_err(0, col, "missing column in header"))?;
    }

    let mut records = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| DatasetError::Parse {
            row,
            column: None,
            message: e.to_string(),
        })?;
        let field = |k: usize| rec.get(index[k]).unwrap_or("");
        let num = |k: usize| -> Result<f64, DatasetError> {
            field(k)
                .parse::<f64>()
                .map_err(|e| parse_err(row, COLUMNS[k], e.to_string()))
        };
        let level = |k: usize| -> Result<u32, DatasetError> {
            field(k)
                .parse::<u32>()
                .map_err(|e| parse_err(row, COLUMNS[k], e.to_string()))
        };

        let raw_path = field(0);
        if raw_path.is_empty() {
            return Err(parse_err(row, "image_path", "empty path"));
        }
        let image_path = base_dir.join(raw_path);
        if check_images && !image_path.is_file() {
            return Err(DatasetError::MissingImage {
                row,
                path: image_path,
            });
        }

        let gt = [num(1)?, num(2)?, num(3)?];
        if !gt.iter().all(|v| v.is_finite() && *v > 0.0) {
            return Err(parse_err(
                row,
                "gt_r",
                "ground-truth illuminant must be positive",
            ));
        }
        let gt_illuminant = Illuminant::new(gt[0], gt[1], gt[2])
            .and_then(|v| normalize(&v))
            .map_err(|e| parse_err(row, "gt_r", e.to_string()))?;

        let black_level = [level(4)?, level(5)?, level(6)?];
        let saturation_level = [level(7)?, level(8)?, level(9)?];
        if let Some(channel) = (0..3).find(|&c| saturation_level[c] <= black_level[c]) {
            return Err(DatasetError::InvalidLevels { row, channel });
        }

        let fold = match field(12) {
            "" => None,
            s => Some(
                s.parse::<u32>()
                    .map_err(|e| parse_err(row, "fold", e.to_string()))?,
            ),
        };

        records.push(SampleRecord {
            image_path,
            gt_illuminant,
            black_level,
            saturation_level,
            mask_rects: parse_rects(field(10), row)?,
            camera_id: field(11).to_string(),
            fold,
        });
    }
    if records.is_empty() {
        return Err(DatasetError::Parse {
            row: 0,
            column: None,
            message: "manifest has no records".into(),
        });
    }
    Ok(DatasetManifest {
        name: name.into(),
        records,
    })
}

pub fn load_manifest(path: &Path) -> Result<DatasetManifest, DatasetError> {
    let file = File::open(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_manifest(file, base, name, true)
}

/// Write a manifest; image paths are written relative to `base_dir` when
/// they live under it.
pub fn write_manifest(
    manifest: &DatasetManifest,
    base_dir: &Path,
    out: impl Write,
) -> Result<(), DatasetError> {
    let to_io = |e: csv::Error| DatasetError::Io {
        path: base_dir.to_path_buf(),
        source: std::io::Error::other(e.to_string()),
    };
    let mut w = csv::Writer::from_writer(out);
    w.write_record(COLUMNS).map_err(to_io)?;
    for r in &manifest.records {
        let path = r.image_path.strip_prefix(base_dir).unwrap_or(&r.image_path);
        let gt = r.gt_illuminant.to_array();
        let mut row = vec![path.to_string_lossy().into_owned()];
        row.extend(gt.iter().map(|v| format!("{v:?}")));
        row.extend(r.black_level.iter().map(u32::to_string));
        row.extend(r.saturation_level.iter().map(u32::to_string));
        row.push(format_rects(&r.mask_rects));
        row.push(r.camera_id.clone());
        row.push(r.fold.map(|f| f.to_string()).unwrap_or_default());
        w.write_record(&row).map_err(to_io)?;
    }
    w.flush().map_err(|source| DatasetError::Io {
        path: base_dir.to_path_buf(),
        source,
    })?;
    Ok(())
}

/// Decode a 16-bit RGB (or RGBA, alpha dropped) PNG or TIFF.
pub fn decode_raw16(path: &Path) -> Result<Raw16Image, DatasetError> {
    let decode_err = |message: String| DatasetError::Decode {
        path: path.to_path_buf(),
        message,
    };
    let img = image::ImageReader::open(path)
        .map_err(|source| DatasetError::Io {
            path: path.to_path_buf(),
            source,
        })?
        .with_guessed_format()
        .map_err(|source| DatasetError::Io {
            path: path.to_path_buf(),
            source,
        })?
        .decode()
        .map_err(|e| decode_err(e.to_string()))?;
    let rgb = match img {
        image::DynamicImage::ImageRgb16(b) => b,
        image::DynamicImage::ImageRgba16(_) => img.to_rgb16(),
        other => {
            return Err(decode_err(format!(
                "expected 16-bit RGB, found {:?}",
                other.color()
            )))
        }
    };
    let (w, h) = rgb.dimensions();
    Ok(Raw16Image::new(w as usize, h as usize, rgb.into_raw())?)
}

/// Write a 16-bit RGB PNG.
pub fn write_raw16_png(path: &Path, img: &Raw16Image) -> Result<(), DatasetError> {
    let buf = image::ImageBuffer::<image::Rgb<u16>, Vec<u16>>::from_raw(
        img.width as u32,
        img.height as u32,
        img.data.clone(),
    )
    .ok_or_else(|| DatasetError::Decode {
        path: path.to_path_buf(),
        message: "buffer size mismatch".into(),
    })?;
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| DatasetError::Decode {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
}

/// Quantize a `[0, 1]` image to 16 bits (for previews).
pub fn to_raw16(img: &RawImage) -> Raw16Image {
    let data = img
        .pixels()
        .iter()
        .flat_map(|p| p.map(|v| (v.clamp(0.0, 1.0) * 65535.0).round() as u16))
        .collect();
    Raw16Image {
        width: img.width(),
        height: img.height(),
        data,
    }
}

/// Working size for a `width`×`height` source: each axis is reduced to the
/// target but never enlarged.
pub fn working_size(width: usize, height: usize, target: (usize, usize)) -> (usize, usize) {
    (width.min(target.0), height.min(target.1))
}

/// Normalize, mask, then downsample an already-decoded image.
pub fn prepare_sample(
    rec: &SampleRecord,
    raw: &Raw16Image,
    target: (usize, usize),
) -> Result<RawImage, DatasetError> {
    let mut img = normalize_raw(raw, rec.black_level, rec.saturation_level)?;
    img.mask_rects(&rec.mask_rects);
    if img.unmasked_count() == 0 {
        return Err(DatasetError::AllMasked {
            path: rec.image_path.clone(),
        });
    }
    let (w, h) = working_size(img.width(), img.height(), target);
    if (w, h) == (img.width(), img.height()) {
        return Ok(img);
    }
    Ok(downsample(&img, w, h)?)
}

pub fn load_sample(rec: &SampleRecord, target: (usize, usize)) -> Result<RawImage, DatasetError> {
    prepare_sample(rec, &decode_raw16(&rec.image_path)?, target)
}

/// Anything that can hand out prepared images for manifest records.
pub trait SampleSource: Sync {
    fn manifest(&self) -> &DatasetManifest;
    fn load(&self, index: usize) -> Result<RawImage, DatasetError>;
}

/// Images read from disk on demand.
#[derive(Debug, Clone)]
pub struct DiskDataset {
    pub manifest: DatasetManifest,
    pub target: (usize, usize),
}

impl SampleSource for DiskDataset {
    fn manifest(&self) -> &DatasetManifest {
        &self.manifest
    }

    fn load(&self, index: usize) -> Result<RawImage, DatasetError> {
        load_sample(&self.manifest.records[index], self.target)
    }
}

/// Train/test record indices for one held-out fold of one camera.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldSplit {
    pub camera: String,
    pub fold: u32,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Per-camera k-fold splits from the manifest's fold labels. Cameras come
/// out in sorted order, folds ascending; folds with no test records are
/// skipped.
pub fn split_folds(manifest: &DatasetManifest, k: u32) -> Result<Vec<FoldSplit>, DatasetError> {
    let mut by_camera: BTreeMap<&str, Vec<(usize, u32)>> = BTreeMap::new();
    for (i, r) in manifest.records.iter().enumerate() {
        let fold = r.fold.ok_or_else(|| DatasetError::MissingFoldLabel {
            path: r.image_path.clone(),
        })?;
        if fold == 0 || fold > k {
            return Err(DatasetError::InvalidFold {
                path: r.image_path.clone(),
                fold,
                k,
            });
        }
        by_camera.entry(&r.camera_id).or_default().push((i, fold));
    }
    let mut out = Vec::new();
    for (camera, recs) in by_camera {
        for f in 1..=k {
            let (test, train): (Vec<_>, Vec<_>) = recs.iter().partition(|(_, fold)| *fold == f);
            if test.is_empty() {
                continue;
            }
            out.push(FoldSplit {
                camera: camera.to_string(),
                fold: f,
                train: train.into_iter().map(|(i, _)| i).collect(),
                test: test.into_iter().map(|(i, _)| i).collect(),
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str =
        "image_path,gt_r,gt_g,gt_b,black_r,black_g,black_b,sat_r,sat_g,sat_b,mask,camera_id,fold\n";

    fn parse(body: &str) -> Result<DatasetManifest, DatasetError> {
        parse_manifest(
            format!("{HEADER}{body}").as_bytes(),
            Path::new("/data"),
            "t",
            false,
        )
    }

    fn record(camera: &str, fold: Option<u32>, name: &str) -> SampleRecord {
        SampleRecord {
            image_path: PathBuf::from(name),
            gt_illuminant: Illuminant::new(1.0, 1.0, 1.0).unwrap(),
            black_level: [0; 3],
            saturation_level: [65535; 3],
            mask_rects: vec![],
            camera_id: camera.into(),
            fold,
        }
    }

    #[test]
    fn parses_three_rows() {
        let m = parse(
            "a.png,0.5,1,0.4,0,0,0,4095,4095,4095,,cam,1\n\
             b.png,0.6,1,0.3,128,128,128,4095,4095,4095,\"1,2,3,4;5,6,7,8\",cam,2\n\
             sub/c.png,0.4,1,0.5,0,0,0,4095,4095,4095,,cam2,\n",
        )
        .unwrap();
        assert_eq!(m.records.len(), 3);
        assert_eq!(m.records[0].image_path, PathBuf::from("/data/a.png"));
        assert_eq!(
            m.records[1].mask_rects,
            vec![
                Rect {
                    x: 1,
                    y: 2,
                    w: 3,
                    h: 4
                },
                Rect {
                    x: 5,
                    y: 6,
                    w: 7,
                    h: 8
                }
            ]
        );
        assert_eq!(m.records[1].black_level, [128; 3]);
        assert_eq!(m.records[2].fold, None);
        assert!((m.records[0].gt_illuminant.norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn invalid_levels_name_the_row() {
        let err = parse(
            "a.png,0.5,1,0.4,0,0,0,4095,4095,4095,,cam,1\n\
             b.png,0.5,1,0.4,0,500,0,4095,400,4095,,cam,1\n",
        )
        .unwrap_err();
        assert!(matches!(
            err,
            DatasetError::InvalidLevels { row: 2, channel: 1 }
        ));
        assert!(err.to_string().contains("row 2"));
    }

    #[test]
    fn empty_file() {
        let err = parse_manifest(&b""[..], Path::new("."), "t", false).unwrap_err();
        assert!(matches!(err, DatasetError::Parse { row: 0, .. }));
        assert!(err.to_string().contains("empty"));
    }

    #[test]
    fn header_only_has_no_records() {
        assert!(matches!(parse(""), Err(DatasetError::Parse { row: 0, .. })));
    }

    #[test]
    fn bad_number_reports_column() {
        let err = parse("a.png,x,1,0.4,0,0,0,4095,4095,4095,,cam,1\n").unwrap_err();
        match err {
            DatasetError::Parse { row, column, .. } => {
                assert_eq!(row, 1);
                assert_eq!(column.as_deref(), Some("gt_r"));
            }
            e => panic!("unexpected {e:?}"),
        }
        assert!(parse("a.png,1,1,1,0,0,0,9,9,9,\"1,2,3\",cam,1\n").is_err());
        assert!(parse("a.png,0,1,1,0,0,0,9,9,9,,cam,1\n").is_err());
    }

    #[test]
    fn missing_image_detected() {
        let body = format!("{HEADER}nope.png,1,1,1,0,0,0,9,9,9,,cam,1\n");
        let err =
            parse_manifest(body.as_bytes(), Path::new("/nonexistent"), "t", true).unwrap_err();
        assert!(matches!(err, DatasetError::MissingImage { row: 1, .. }));
    }

    #[test]
    fn manifest_write_round_trip() {
        let m = parse(
            "a.png,0.5,1,0.4,0,0,0,4095,4095,4095,\"1,2,3,4\",cam,1\n\
             b.png,0.6,1,0.3,128,128,128,4095,4095,4095,,cam,\n",
        )
        .unwrap();
        let mut buf = Vec::new();
        write_manifest(&m, Path::new("/data"), &mut buf).unwrap();
        let back = parse_manifest(buf.as_slice(), Path::new("/data"), "t", false).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn nine_records_three_folds() {
        let m = DatasetManifest {
            name: "t".into(),
            records: (0..9)
                .map(|i| record("cam", Some(i % 3 + 1), &format!("{i}.png")))
                .collect(),
        };
        let splits = split_folds(&m, 3).unwrap();
        assert_eq!(splits.len(), 3);
        for s in &splits {
            assert_eq!((s.train.len(), s.test.len()), (6, 3));
            assert!(s.train.iter().all(|i| !s.test.contains(i)));
        }
    }

    #[test]
    fn folds_split_per_camera() {
        let mut records: Vec<_> = (0..6)
            .map(|i| record("b", Some(i % 3 + 1), &format!("b{i}")))
            .collect();
        records.extend((0..3).map(|i| record("a", Some(i + 1), &format!("a{i}"))));
        let splits = split_folds(
            &DatasetManifest {
                name: "t".into(),
                records,
            },
            3,
        )
        .unwrap();
        assert_eq!(splits.len(), 6);
        assert_eq!(splits[0].camera, "a");
        for s in &splits {
            let cam = |i: &usize| if *i < 6 { "b" } else { "a" };
            assert!(s.train.iter().chain(&s.test).all(|i| cam(i) == s.camera));
            let total = s.train.len() + s.test.len();
            assert_eq!(total, if s.camera == "a" { 3 } else { 6 });
        }
    }

    #[test]
    fn missing_fold_label() {
        let m = DatasetManifest {
            name: "t".into(),
            records: vec![record("c", Some(1), "x"), record("c", None, "y")],
        };
        assert!(matches!(
            split_folds(&m, 3),
            Err(DatasetError::MissingFoldLabel { .. })
        ));
        let m = DatasetManifest {
            name: "t".into(),
            records: vec![record("c", Some(4), "x")],
        };
        assert!(matches!(
            split_folds(&m, 3),
            Err(DatasetError::InvalidFold { fold: 4, .. })
        ));
    }

    #[test]
    fn full_mask_is_rejected() {
        let mut rec = record("c", Some(1), "x");
        rec.mask_rects = vec![Rect {
            x: 0,
            y: 0,
            w: 4,
            h: 4,
        }];
        let raw = Raw16Image::new(4, 4, vec![1000; 48]).unwrap();
        assert!(matches!(
            prepare_sample(&rec, &raw, (2, 2)),
            Err(DatasetError::AllMasked { .. })
        ));
    }

    #[test]
    fn full_range_levels_map_to_unit_interval() {
        let rec = record("c", Some(1), "x");
        let data: Vec<u16> = (0..12).map(|v| v * 5000).collect();
        let raw = Raw16Image::new(2, 2, data.clone()).unwrap();
        let img = prepare_sample(&rec, &raw, (2, 2)).unwrap();
        for (p, chunk) in img.pixels().iter().zip(data.chunks(3)) {
            for c in 0..3 {
                assert_eq!(p[c], f64::from(chunk[c]) / 65535.0);
            }
        }
    }

    #[test]
    fn never_upsamples() {
        let rec = record("c", Some(1), "x");
        let raw = Raw16Image::new(800, 100, vec![1000; 800 * 100 * 3]).unwrap();
        let img = prepare_sample(&rec, &raw, DEFAULT_TARGET).unwrap();
        assert_eq!((img.width(), img.height()), (384, 100));
        assert_eq!(working_size(1000, 700, DEFAULT_TARGET), DEFAULT_TARGET);
        assert_eq!(working_size(64, 64, DEFAULT_TARGET), (64, 64));
    }

    #[test]
    fn png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.png");
        let raw = Raw16Image::new(3, 2, (0..18).map(|v| v * 3000 + 7).collect()).unwrap();
        write_raw16_png(&path, &raw).unwrap();
        assert_eq!(decode_raw16(&path).unwrap(), raw);
    }

    #[test]
    fn eight_bit_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.png");
        image::RgbImage::new(2, 2).save(&path).unwrap();
        assert!(matches!(
            decode_raw16(&path),
            Err(DatasetError::Decode { .. })
        ));
    }

    #[test]
    fn tiff_is_supported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.tiff");
        let data: Vec<u16> = (0..12).map(|v| v * 1000).collect();
        image::ImageBuffer::<image::Rgb<u16>, _>::from_raw(2, 2, data.clone())
            .unwrap()
            .save(&path)
            .unwrap();
        assert_eq!(decode_raw16(&path).unwrap().data, data);
    }
}
