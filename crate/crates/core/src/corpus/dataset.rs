use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::annotation::{AnnotationSet, ChartKind};
use super::config::GenConfig;
use super::raster::RgbImage;
use super::render::render_chart;
use super::spec::{chart_seed, sample_chart_spec, ChartSpec};
use super::words::load_words;
use crate::error::{Error, Result};
use crate::par::{map_indexed, Parallelism};

pub const ANNOTATION_FILE: &str = "annotations.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";
const MAX_ATTEMPTS: u64 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KindSelection {
    Bar,
    Pie,
    Mixed,
}

impl KindSelection {
    pub fn kind_for(self, dataset_seed: u64, index: u64) -> ChartKind {
        match self {
            KindSelection::Bar => ChartKind::Bar,
            KindSelection::Pie => ChartKind::Pie,
            KindSelection::Mixed => {
                if chart_seed(dataset_seed ^ 0x6B69_6E64, index) & 1 == 0 {
                    ChartKind::Bar
                } else {
                    ChartKind::Pie
                }
            }
        }
    }
}

impl std::str::FromStr for KindSelection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bar" => Ok(KindSelection::Bar),
            "pie" => Ok(KindSelection::Pie),
            "mixed" => Ok(KindSelection::Mixed),
            other => Err(Error::Input(format!("unknown kind `{other}` (bar, pie, mixed)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub image: String,
    pub kind: ChartKind,
    /// Line index in the annotation file.
    pub record: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    /// Paths below are relative to the manifest's directory.
    pub root: String,
    pub seed: u64,
    pub kind: KindSelection,
    pub count: usize,
    pub annotations: String,
    pub config: GenConfig,
    pub entries: Vec<ManifestEntry>,
}

/// Samples and renders one chart, resampling on layout failure. Attempt `a`
/// uses the seed `chart_seed(seed, a)` for `a ≥ 1`.
pub fn generate_chart(kind: ChartKind, seed: u64, config: &GenConfig, words: &[String]) -> Result<(ChartSpec, RgbImage, AnnotationSet)> {
    let mut last = None;
    for attempt in 0..MAX_ATTEMPTS {
        let s = if attempt == 0 { seed } else { chart_seed(seed, attempt) };
        let spec = sample_chart_spec(kind, s, config, words)?;
        match render_chart(&spec) {
            Ok((img, ann)) => return Ok((spec, img, ann)),
            Err(Error::Layout(m)) => last = Some(m),
            Err(e) => return Err(e),
        }
    }
    Err(Error::Layout(format!(
        "no layout after {MAX_ATTEMPTS} attempts: {}",
        last.unwrap_or_default()
    )))
}

pub fn image_name(index: usize) -> String {
    format!("images/chart_{index:06}.png")
}

/// Generates `count` charts into `out_dir`: PNG images, one JSON Lines
/// annotation file and a manifest. Output is a pure function of
/// `(config, kind, count, seed)`; on failure every file written is removed.
pub fn build_dataset(
    config: &GenConfig,
    kind: KindSelection,
    count: usize,
    seed: u64,
    out_dir: &Path,
    mode: Parallelism,
) -> Result<DatasetManifest> {
    if count == 0 {
        return Err(Error::Input("count must be at least 1".into()));
    }
    config.validate()?;
    let words = load_words(config.words_path.as_deref())?;
    let img_dir = out_dir.join("images");
    fs::create_dir_all(&img_dir).map_err(|e| Error::io(&img_dir, e))?;
    let mut written: Vec<PathBuf> = Vec::new();
    let result = write_all(config, kind, count, seed, out_dir, &words, mode, &mut written);
    if result.is_err() {
        for p in &written {
            let _ = fs::remove_file(p);
        }
        let _ = fs::remove_dir(&img_dir);
    }
    result
}

#[allow(clippy::too_many_arguments)]
fn write_all(
    config: &GenConfig,
    kind: KindSelection,
    count: usize,
    seed: u64,
    out_dir: &Path,
    words: &[String],
    mode: Parallelism,
    written: &mut Vec<PathBuf>,
) -> Result<DatasetManifest> {
    let mut entries = Vec::with_capacity(count);
    let ann_path = out_dir.join(ANNOTATION_FILE);
    let mut ann_file = fs::File::create(&ann_path).map_err(|e| Error::io(&ann_path, e))?;
    written.push(ann_path.clone());
    // Bounded chunks keep memory flat for large corpora.
    const CHUNK: usize = 256;
    for chunk_start in (0..count).step_by(CHUNK) {
        let n = CHUNK.min(count - chunk_start);
        let charts = map_indexed(n, mode, |j| -> Result<(Vec<u8>, AnnotationSet)> {
            let i = chunk_start + j;
            let k = kind.kind_for(seed, i as u64);
            let (_, img, mut ann) = generate_chart(k, chart_seed(seed, i as u64), config, words)?;
            ann.image = image_name(i);
            Ok((img.encode_png()?, ann))
        });
        for (j, chart) in charts.into_iter().enumerate() {
            let (png, ann) = chart?;
            let p = out_dir.join(&ann.image);
            fs::write(&p, &png).map_err(|e| Error::io(&p, e))?;
            written.push(p);
            writeln!(ann_file, "{}", ann.to_json_line()?).map_err(|e| Error::io(&ann_path, e))?;
            entries.push(ManifestEntry {
                image: ann.image.clone(),
                kind: ann.kind,
                record: chunk_start + j,
            });
        }
    }
    let manifest = DatasetManifest {
        root: ".".into(),
        seed,
        kind,
        count,
        annotations: ANNOTATION_FILE.into(),
        config: config.clone(),
        entries,
    };
    let mp = out_dir.join(MANIFEST_FILE);
    fs::write(&mp, serde_json::to_string_pretty(&manifest)? + "\n").map_err(|e| Error::io(&mp, e))?;
    written.push(mp);
    Ok(manifest)
}

/// Reads every record of an annotation file.
pub fn read_annotations(path: &Path) -> Result<Vec<AnnotationSet>> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            AnnotationSet::from_json_line(&line)
                .map_err(|e| Error::Format(format!("{}:{}: {e}", path.display(), i + 1)))?,
        );
    }
    Ok(out)
}

/// A generated corpus opened for reading.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub dir: PathBuf,
    pub manifest: DatasetManifest,
    pub annotations: Vec<AnnotationSet>,
}

impl Dataset {
    pub fn open(dir: &Path) -> Result<Self> {
        let mp = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&mp).map_err(|e| Error::io(&mp, e))?;
        let manifest: DatasetManifest = serde_json::from_str(&text)?;
        let annotations = read_annotations(&dir.join(&manifest.annotations))?;
        if annotations.len() != manifest.entries.len() {
            return Err(Error::Format(format!(
                "{}: {} annotations for {} manifest entries",
                dir.display(),
                annotations.len(),
                manifest.entries.len()
            )));
        }
        Ok(Dataset {
            dir: dir.to_path_buf(),
            manifest,
            annotations,
        })
    }

    pub fn len(&self) -> usize {
        self.annotations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.annotations.is_empty()
    }

    pub fn image(&self, i: usize) -> Result<RgbImage> {
        RgbImage::load_png(&self.dir.join(&self.annotations[i].image))
    }
}
