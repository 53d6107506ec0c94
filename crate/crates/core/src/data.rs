//! Deterministic generation of labeled source collections and the on-disk
//! dataset format: a directory holding `meta.json` plus flat little-endian
//! f64 arrays `sources.f64`, `points.f64`, `labels.f64`.

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::f64::consts::TAU;
use std::fs;
use std::path::Path;

use crate::error::{FieldError, Result};
use crate::io::{read_f64_file, sha256_file, write_f64_file};
use crate::numerics::rng_substream;
use crate::oracle::{collection_samples, Domain, FieldSample, Source, SourceCollection};

pub const DATASET_FORMAT_VERSION: &str = "fieldamort-ds-v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    UniformRandom,
    RegularGrid,
}

/// Number of sources per collection: fixed (1 for training) or drawn
/// uniformly from an inclusive range (2..=6 for multi-source validation).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SourcesPer {
    Fixed(usize),
    Uniform { lo: usize, hi: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataGenConfig {
    pub n_collections: usize,
    pub sources_per_collection: SourcesPer,
    pub domain: Domain,
    pub points_per_collection: usize,
    pub sampling: Sampling,
    pub moment_scale: f64,
    pub seed: u64,
}

impl Default for DataGenConfig {
    /// The training corpus shape: 10^4 single-source collections, 32^2
    /// uniform random points each, on [-3,3]^2.
    fn default() -> Self {
        DataGenConfig {
            n_collections: 10_000,
            sources_per_collection: SourcesPer::Fixed(1),
            domain: Domain::standard(),
            points_per_collection: 1024,
            sampling: Sampling::UniformRandom,
            moment_scale: 1.0,
            seed: 0,
        }
    }
}

impl DataGenConfig {
    pub fn multi_source_validation(seed: u64) -> Self {
        DataGenConfig {
            sources_per_collection: SourcesPer::Uniform { lo: 2, hi: 6 },
            seed,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_collections == 0 || self.points_per_collection == 0 {
            return Err(FieldError::Config("counts must be positive".into()));
        }
        match self.sources_per_collection {
            SourcesPer::Fixed(n) if n == 0 => {
                return Err(FieldError::Config("sources_per_collection must be positive".into()))
            }
            SourcesPer::Uniform { lo, hi } if lo == 0 || hi < lo => {
                return Err(FieldError::Config("invalid sources_per_collection range".into()))
            }
            _ => {}
        }
        if self.moment_scale <= 0.0 {
            return Err(FieldError::Config("moment_scale must be positive".into()));
        }
        if self.sampling == Sampling::RegularGrid {
            let per_axis = (self.points_per_collection as f64).sqrt() as usize;
            if per_axis * per_axis != self.points_per_collection {
                return Err(FieldError::Config(
                    "regular_grid sampling needs a square points_per_collection".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Labeled corpus: collections plus their oracle-computed samples, in
/// matching order.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub config: DataGenConfig,
    pub collections: Vec<SourceCollection>,
    pub samples: Vec<Vec<FieldSample>>,
}

/// Cell-centered regular grid, row-major (y outer, x inner).
pub fn sample_grid(domain: &Domain, per_axis: usize) -> Vec<[f64; 2]> {
    assert!(per_axis >= 2);
    let dx = domain.width(0) / per_axis as f64;
    let dy = domain.width(1) / per_axis as f64;
    let mut out = Vec::with_capacity(per_axis * per_axis);
    for iy in 0..per_axis {
        let y = domain.lo[1] + (iy as f64 + 0.5) * dy;
        for ix in 0..per_axis {
            let x = domain.lo[0] + (ix as f64 + 0.5) * dx;
            out.push([x, y]);
        }
    }
    out
}

/// Deterministic dataset generation: one RNG substream per collection, so
/// generation is reproducible and parallelizable across collections.
pub fn generate(config: &DataGenConfig) -> Result<Dataset> {
    config.validate()?;
    let mut collections = Vec::with_capacity(config.n_collections);
    let mut samples = Vec::with_capacity(config.n_collections);
    for idx in 0..config.n_collections {
        let mut rng = rng_substream(config.seed, idx as u64);
        let n_sources = match config.sources_per_collection {
            SourcesPer::Fixed(n) => n,
            SourcesPer::Uniform { lo, hi } => rng.random_range(lo..=hi),
        };
        let mut sources = Vec::with_capacity(n_sources);
        for _ in 0..n_sources {
            let pos = [
                rng.random_range(config.domain.lo[0]..config.domain.hi[0]),
                rng.random_range(config.domain.lo[1]..config.domain.hi[1]),
            ];
            let angle = rng.random_range(0.0..TAU);
            // magnitude uniform in (0, moment_scale]
            let mag = config.moment_scale * (1.0 - rng.random::<f64>());
            sources.push(Source::new(pos, [mag * angle.cos(), mag * angle.sin()], 1.0)?);
        }
        let col = SourceCollection::new(sources, config.domain)?;
        let points = match config.sampling {
            Sampling::UniformRandom => (0..config.points_per_collection)
                .map(|_| {
                    [
                        rng.random_range(config.domain.lo[0]..config.domain.hi[0]),
                        rng.random_range(config.domain.lo[1]..config.domain.hi[1]),
                    ]
                })
                .collect(),
            Sampling::RegularGrid => {
                let per_axis = (config.points_per_collection as f64).sqrt() as usize;
                sample_grid(&config.domain, per_axis)
            }
        };
        samples.push(collection_samples(&col, &points));
        collections.push(col);
    }
    Ok(Dataset {
        config: config.clone(),
        collections,
        samples,
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct DatasetMeta {
    format_version: String,
    config: DataGenConfig,
    /// Source count per collection, in order.
    counts: Vec<u32>,
    checksums: Checksums,
}

#[derive(Debug, Serialize, Deserialize)]
struct Checksums {
    sources: String,
    points: String,
    labels: String,
}

impl Dataset {
    /// Combined content hash, stable across save/load round trips.
    pub fn checksum(&self) -> String {
        let mut hasher = Sha256::new();
        for col in &self.collections {
            for s in &col.sources {
                for v in [s.position[0], s.position[1], s.moment[0], s.moment[1], s.radius] {
                    hasher.update(v.to_le_bytes());
                }
            }
        }
        for per_col in &self.samples {
            for fs in per_col {
                for v in [
                    fs.location[0],
                    fs.location[1],
                    fs.potential,
                    fs.field[0],
                    fs.field[1],
                ] {
                    hasher.update(v.to_le_bytes());
                }
            }
        }
        hex::encode(hasher.finalize())
    }

    pub fn total_samples(&self) -> usize {
        self.samples.iter().map(|s| s.len()).sum()
    }
}

pub fn save(ds: &Dataset, path: &Path) -> Result<()> {
    fs::create_dir_all(path)?;
    let mut sources = Vec::new();
    let mut counts = Vec::with_capacity(ds.collections.len());
    for col in &ds.collections {
        counts.push(col.sources.len() as u32);
        for s in &col.sources {
            sources.extend_from_slice(&[s.position[0], s.position[1], s.moment[0], s.moment[1], s.radius]);
        }
    }
    let mut points = Vec::new();
    let mut labels = Vec::new();
    for per_col in &ds.samples {
        for fs in per_col {
            points.extend_from_slice(&fs.location);
            labels.extend_from_slice(&[fs.potential, fs.field[0], fs.field[1]]);
        }
    }
    write_f64_file(&path.join("sources.f64"), &sources)?;
    write_f64_file(&path.join("points.f64"), &points)?;
    write_f64_file(&path.join("labels.f64"), &labels)?;
    let meta = DatasetMeta {
        format_version: DATASET_FORMAT_VERSION.to_string(),
        config: ds.config.clone(),
        counts,
        checksums: Checksums {
            sources: sha256_file(&path.join("sources.f64"))?,
            points: sha256_file(&path.join("points.f64"))?,
            labels: sha256_file(&path.join("labels.f64"))?,
        },
    };
    fs::write(path.join("meta.json"), serde_json::to_vec_pretty(&meta)?)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Dataset> {
    let meta: DatasetMeta = serde_json::from_slice(&fs::read(path.join("meta.json"))?)?;
    if meta.format_version != DATASET_FORMAT_VERSION {
        return Err(FieldError::VersionMismatch {
            expected: DATASET_FORMAT_VERSION.to_string(),
            found: meta.format_version,
        });
    }
    for (name, expected) in [
        ("sources.f64", &meta.checksums.sources),
        ("points.f64", &meta.checksums.points),
        ("labels.f64", &meta.checksums.labels),
    ] {
        let actual = sha256_file(&path.join(name))?;
        if &actual != expected {
            return Err(FieldError::Checksum(format!("{name}: {actual} != {expected}")));
        }
    }
    let sources = read_f64_file(&path.join("sources.f64"))?;
    let points = read_f64_file(&path.join("points.f64"))?;
    let labels = read_f64_file(&path.join("labels.f64"))?;

    let total_sources: usize = meta.counts.iter().map(|&c| c as usize).sum();
    let n_cols = meta.counts.len();
    let ppc = meta.config.points_per_collection;
    if sources.len() != total_sources * 5
        || points.len() != n_cols * ppc * 2
        || labels.len() != n_cols * ppc * 3
    {
        return Err(FieldError::Truncated(format!(
            "array lengths inconsistent with meta (sources {}, points {}, labels {})",
            sources.len(),
            points.len(),
            labels.len()
        )));
    }

    let mut collections = Vec::with_capacity(n_cols);
    let mut samples = Vec::with_capacity(n_cols);
    let mut s_off = 0;
    let mut p_off = 0;
    let mut l_off = 0;
    for &count in &meta.counts {
        let mut srcs = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let v = &sources[s_off..s_off + 5];
            srcs.push(Source::new([v[0], v[1]], [v[2], v[3]], v[4])?);
            s_off += 5;
        }
        collections.push(SourceCollection::new(srcs, meta.config.domain)?);
        let mut per_col = Vec::with_capacity(ppc);
        for _ in 0..ppc {
            per_col.push(FieldSample {
                location: [points[p_off], points[p_off + 1]],
                potential: labels[l_off],
                field: [labels[l_off + 1], labels[l_off + 2]],
            });
            p_off += 2;
            l_off += 3;
        }
        samples.push(per_col);
    }
    Ok(Dataset {
        config: meta.config,
        collections,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{collection_field, collection_potential};

    fn small_config() -> DataGenConfig {
        DataGenConfig {
            n_collections: 20,
            points_per_collection: 16,
            seed: 11,
            ..Default::default()
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = small_config();
        let a = generate(&cfg).unwrap();
        let b = generate(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.checksum(), b.checksum());

        let c = generate(&DataGenConfig { seed: 12, ..cfg }).unwrap();
        assert_ne!(a.checksum(), c.checksum());
    }

    #[test]
    fn default_matches_training_corpus_shape() {
        let cfg = DataGenConfig::default();
        assert_eq!(cfg.n_collections, 10_000);
        assert_eq!(cfg.sources_per_collection, SourcesPer::Fixed(1));
        assert_eq!(cfg.points_per_collection, 1024);
    }

    #[test]
    fn labels_match_oracle_recomputation() {
        let ds = generate(&small_config()).unwrap();
        for (col, per_col) in ds.collections.iter().zip(&ds.samples) {
            let pts: Vec<[f64; 2]> = per_col.iter().map(|s| s.location).collect();
            let phi = collection_potential(col, &pts);
            let h = collection_field(col, &pts);
            for (i, fs) in per_col.iter().enumerate() {
                assert_eq!(fs.potential, phi[i]);
                assert_eq!(fs.field, h[i]);
            }
        }
    }

    #[test]
    fn grid_points() {
        let d = Domain::new([-1.0, -1.0], [1.0, 1.0]).unwrap();
        let pts = sample_grid(&d, 2);
        assert_eq!(pts, vec![[-0.5, -0.5], [0.5, -0.5], [-0.5, 0.5], [0.5, 0.5]]);
        let pts = sample_grid(&Domain::standard(), 100);
        assert_eq!(pts.len(), 10_000);
        assert!(pts.iter().all(|&p| Domain::standard().contains(p)
            && p[0] > -3.0
            && p[0] < 3.0
            && p[1] > -3.0
            && p[1] < 3.0));
    }

    #[test]
    fn multi_source_counts_in_range() {
        let cfg = DataGenConfig {
            n_collections: 50,
            points_per_collection: 4,
            ..DataGenConfig::multi_source_validation(3)
        };
        let ds = generate(&cfg).unwrap();
        assert!(ds
            .collections
            .iter()
            .all(|c| (2..=6).contains(&c.sources.len())));
    }

    #[test]
    fn position_coverage_by_quadrant() {
        let cfg = DataGenConfig {
            n_collections: 2000,
            points_per_collection: 1,
            seed: 5,
            ..Default::default()
        };
        let ds = generate(&cfg).unwrap();
        let mut quad = [0usize; 4];
        for col in &ds.collections {
            let p = col.sources[0].position;
            let q = (p[0] >= 0.0) as usize + 2 * ((p[1] >= 0.0) as usize);
            quad[q] += 1;
        }
        for &q in &quad {
            let frac = q as f64 / 2000.0;
            assert!((frac - 0.25).abs() < 0.05, "quadrant fraction {frac}");
        }
    }

    #[test]
    fn save_load_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let ds = generate(&small_config()).unwrap();
        save(&ds, dir.path()).unwrap();
        let loaded = load(dir.path()).unwrap();
        assert_eq!(ds, loaded);
    }

    #[test]
    fn corruption_and_version_errors() {
        let dir = tempfile::tempdir().unwrap();
        let ds = generate(&small_config()).unwrap();
        save(&ds, dir.path()).unwrap();

        // corrupt payload -> checksum error
        let labels = dir.path().join("labels.f64");
        let mut bytes = fs::read(&labels).unwrap();
        bytes[0] ^= 0xff;
        fs::write(&labels, &bytes).unwrap();
        assert!(matches!(load(dir.path()), Err(FieldError::Checksum(_))));

        // unknown version -> version error
        save(&ds, dir.path()).unwrap();
        let meta_path = dir.path().join("meta.json");
        let text = fs::read_to_string(&meta_path)
            .unwrap()
            .replace(DATASET_FORMAT_VERSION, "fieldamort-ds-v999");
        fs::write(&meta_path, text).unwrap();
        assert!(matches!(load(dir.path()), Err(FieldError::VersionMismatch { .. })));
    }

    #[test]
    fn grid_sampling_mode() {
        let cfg = DataGenConfig {
            n_collections: 2,
            points_per_collection: 16,
            sampling: Sampling::RegularGrid,
            ..small_config()
        };
        let ds = generate(&cfg).unwrap();
        let expected = sample_grid(&cfg.domain, 4);
        for per_col in &ds.samples {
            let pts: Vec<[f64; 2]> = per_col.iter().map(|s| s.location).collect();
            assert_eq!(pts, expected);
        }
        // non-square point count rejected for grid sampling
        let bad = DataGenConfig {
            points_per_collection: 15,
            sampling: Sampling::RegularGrid,
            ..small_config()
        };
        assert!(generate(&bad).is_err());
    }
}
