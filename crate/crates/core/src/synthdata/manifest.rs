//! Plain-text dataset index.
//!
//! ```text
//! mvp-manifest 1
//! seed=7
//! identities=50
//! train_identities=30
//! size=32
//! blob_std=1.6
//! views=-45,-30,-15,0,15,30,45
//! illuminations=0.7,1,1.3
//! identity,view,yaw,illumination,path
//! 0,0,-45,0,id0/v0_l0.pgm
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{MvpError, Result};

const MAGIC: &str = "mvp-manifest 1";
const COLUMNS: &str = "identity,view,yaw,illumination,path";

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRecord {
    pub identity: usize,
    pub view: usize,
    pub yaw: f64,
    pub illumination: usize,
    /// Relative to the manifest's directory.
    pub path: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub seed: u64,
    pub identities: usize,
    /// Identities `0..train_identities` are for training; the rest are held out.
    pub train_identities: usize,
    pub size: usize,
    pub blob_std: f64,
    /// Yaw of each view in degrees.
    pub views: Vec<f64>,
    /// Gain of each illumination.
    pub illuminations: Vec<f64>,
    pub records: Vec<ManifestRecord>,
}

pub fn image_path(identity: usize, view: usize, illumination: usize) -> String {
    format!("id{identity}/v{view}_l{illumination}.pgm")
}

fn join(values: &[f64]) -> String {
    values.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
}

impl DatasetManifest {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{MAGIC}");
        let _ = writeln!(s, "seed={}", self.seed);
        let _ = writeln!(s, "identities={}", self.identities);
        let _ = writeln!(s, "train_identities={}", self.train_identities);
        let _ = writeln!(s, "size={}", self.size);
        let _ = writeln!(s, "blob_std={}", self.blob_std);
        let _ = writeln!(s, "views={}", join(&self.views));
        let _ = writeln!(s, "illuminations={}", join(&self.illuminations));
        let _ = writeln!(s, "{COLUMNS}");
        for r in &self.records {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                r.identity, r.view, r.yaw, r.illumination, r.path
            );
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let err = |line: usize, detail: String| MvpError::ParseLine {
            what: "manifest".into(),
            line,
            detail,
        };
        let mut next = |expect: &str| {
            lines
                .next()
                .ok_or_else(|| err(0, format!("file ends before {expect}")))
        };
        let (n, first) = next("magic")?;
        if first.trim() != MAGIC {
            return Err(err(n, format!("expected `{MAGIC}`")));
        }
        fn value<T: FromStr>(line: usize, text: &str, key: &str) -> Result<T> {
            let v = text
                .strip_prefix(key)
                .and_then(|r| r.strip_prefix('='))
                .ok_or_else(|| MvpError::ParseLine {
                    what: "manifest".into(),
                    line,
                    detail: format!("missing field `{key}`"),
                })?;
            v.trim().parse().map_err(|_| MvpError::ParseLine {
                what: "manifest".into(),
                line,
                detail: format!("bad value for `{key}`: {v:?}"),
            })
        }
        fn list(line: usize, text: &str, key: &str) -> Result<Vec<f64>> {
            let raw: String = value(line, text, key)?;
            if raw.is_empty() {
                return Ok(Vec::new());
            }
            raw.split(',')
                .map(|t| {
                    t.trim().parse().map_err(|_| MvpError::ParseLine {
                        what: "manifest".into(),
                        line,
                        detail: format!("bad number {t:?} in `{key}`"),
                    })
                })
                .collect()
        }
        let (n, l) = next("seed")?;
        let seed = value(n, l, "seed")?;
        let (n, l) = next("identities")?;
        let identities = value(n, l, "identities")?;
        let (n, l) = next("train_identities")?;
        let train_identities = value(n, l, "train_identities")?;
        let (n, l) = next("size")?;
        let size = value(n, l, "size")?;
        let (n, l) = next("blob_std")?;
        let blob_std = value(n, l, "blob_std")?;
        let (n, l) = next("views")?;
        let views = list(n, l, "views")?;
        let (n, l) = next("illuminations")?;
        let illuminations = list(n, l, "illuminations")?;
        let (n, l) = next("column header")?;
        if l.trim() != COLUMNS {
            return Err(err(n, format!("expected column header `{COLUMNS}`")));
        }
        let mut records = Vec::new();
        for (n, l) in lines {
            if l.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 5 {
                return Err(err(n, format!("expected 5 fields, found {}", f.len())));
            }
            let int = |i: usize, name: &str| -> Result<usize> {
                f[i].trim()
                    .parse()
                    .map_err(|_| err(n, format!("bad {name} {:?}", f[i])))
            };
            records.push(ManifestRecord {
                identity: int(0, "identity")?,
                view: int(1, "view")?,
                yaw: f[2].trim().parse().map_err(|_| err(n, format!("bad yaw {:?}", f[2])))?,
                illumination: int(3, "illumination")?,
                path: f[4].trim().to_string(),
            });
        }
        let m = Self {
            seed,
            identities,
            train_identities,
            size,
            blob_std,
            views,
            illuminations,
            records,
        };
        m.validate()?;
        Ok(m)
    }

    /// Index and label consistency (file existence is checked on load).
    pub fn validate(&self) -> Result<()> {
        if self.train_identities > self.identities {
            return Err(MvpError::contract("more training identities than identities"));
        }
        for r in &self.records {
            if r.identity >= self.identities
                || r.view >= self.views.len()
                || r.illumination >= self.illuminations.len()
            {
                return Err(MvpError::contract(format!("record {r:?} out of range")));
            }
            if r.yaw != self.views[r.view] {
                return Err(MvpError::contract(format!(
                    "record {r:?} disagrees with view list yaw {}",
                    self.views[r.view]
                )));
            }
        }
        Ok(())
    }
}

pub fn write_manifest(manifest: &DatasetManifest, path: &Path) -> Result<()> {
    fs::write(path, manifest.to_text()).map_err(|e| MvpError::io(path, e))
}

pub fn read_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = fs::read_to_string(path).map_err(|e| MvpError::io(path, e))?;
    DatasetManifest::parse(&text)
}
