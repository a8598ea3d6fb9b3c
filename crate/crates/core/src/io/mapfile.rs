//! Binary container for distance and sensitivity maps.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "SAMX" | version u16 | kind u8 | h u32 | w u32 | h*w f64 (centered, row-major)
//! metadata: UTF-8 "key=value\n" lines until end of file
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::maps::{DistanceMap, SensitivityMap, SpectralMap};

pub const MAGIC: &[u8; 4] = b"SAMX";
pub const VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 1 + 4 + 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapKind {
    Distance,
    Sensitivity,
}

impl MapKind {
    fn tag(self) -> u8 {
        match self {
            MapKind::Distance => 1,
            MapKind::Sensitivity => 2,
        }
    }

    fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            1 => Ok(MapKind::Distance),
            2 => Ok(MapKind::Sensitivity),
            t => Err(Error::Format(format!("unknown map kind tag {t}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MapKind::Distance => "distance",
            MapKind::Sensitivity => "sensitivity",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapFile {
    pub kind: MapKind,
    pub map: SpectralMap,
    /// Ordered `key=value` pairs. Keys may not contain `=` or newlines,
    /// values may not contain newlines.
    pub metadata: Vec<(String, String)>,
}

impl MapFile {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let (h, w) = (self.map.height(), self.map.width());
        let dim = |n: usize| {
            u32::try_from(n).map_err(|_| Error::Format(format!("map dimension {n} exceeds u32")))
        };
        let mut out = Vec::with_capacity(HEADER_LEN + 8 * h * w);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(self.kind.tag());
        out.extend_from_slice(&dim(h)?.to_le_bytes());
        out.extend_from_slice(&dim(w)?.to_le_bytes());
        for v in self.map.values() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for (k, v) in &self.metadata {
            if k.is_empty() || k.contains(['=', '\n']) || v.contains('\n') {
                return Err(Error::Format(format!("metadata entry {k:?} cannot be encoded")));
            }
            out.extend_from_slice(k.as_bytes());
            out.push(b'=');
            out.extend_from_slice(v.as_bytes());
            out.push(b'\n');
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
            return Err(Error::Format("not a SAMX map file".into()));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != VERSION {
            return Err(Error::Format(format!("unsupported map version {version}")));
        }
        let kind = MapKind::from_tag(bytes[6])?;
        let h = u32::from_le_bytes(bytes[7..11].try_into().expect("4 bytes")) as usize;
        let w = u32::from_le_bytes(bytes[11..15].try_into().expect("4 bytes")) as usize;
        let payload_end = h
            .checked_mul(w)
            .and_then(|n| n.checked_mul(8))
            .and_then(|n| n.checked_add(HEADER_LEN))
            .filter(|&end| end <= bytes.len())
            .ok_or_else(|| Error::Format(format!("payload for {h}x{w} map is truncated")))?;
        let values: Vec<f64> = bytes[HEADER_LEN..payload_end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();

        let text = std::str::from_utf8(&bytes[payload_end..])
            .map_err(|e| Error::Format(format!("metadata is not UTF-8: {e}")))?;
        if !text.is_empty() && !text.ends_with('\n') {
            return Err(Error::Format("metadata must end with a newline".into()));
        }
        let metadata = text
            .lines()
            .map(|line| {
                line.split_once('=')
                    .filter(|(k, _)| !k.is_empty())
                    .map(|(k, v)| (k.to_string(), v.to_string()))
                    .ok_or_else(|| Error::Format(format!("bad metadata line {line:?}")))
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            kind,
            map: SpectralMap::new(h, w, values)?,
            metadata,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::data(path, e.to_string()))?;
        Self::from_bytes(&bytes).map_err(|e| Error::data(path, e.to_string()))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.metadata.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    fn expect_kind(&self, kind: MapKind) -> Result<()> {
        if self.kind == kind {
            Ok(())
        } else {
            Err(Error::Format(format!(
                "expected a {} map, found a {} map",
                kind.name(),
                self.kind.name()
            )))
        }
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.get(key)
            .map(|v| {
                v.parse()
                    .map_err(|_| Error::Format(format!("metadata {key}={v} does not parse")))
            })
            .transpose()
    }

    pub fn from_distance(d: &DistanceMap) -> Self {
        Self {
            kind: MapKind::Distance,
            map: d.map.clone(),
            metadata: d.metadata().into_iter().collect(),
        }
    }

    /// Missing metadata falls back to empty ids and zero counts.
    pub fn into_distance(self) -> Result<DistanceMap> {
        self.expect_kind(MapKind::Distance)?;
        Ok(DistanceMap {
            source_id: self.get("source").unwrap_or_default().to_string(),
            target_id: self.get("target").unwrap_or_default().to_string(),
            source_samples: self.parsed("source_samples")?.unwrap_or(0),
            target_samples: self.parsed("target_samples")?.unwrap_or(0),
            map: self.map,
        })
    }

    pub fn from_sensitivity(s: &SensitivityMap) -> Self {
        Self {
            kind: MapKind::Sensitivity,
            map: s.map.clone(),
            metadata: s.metadata().into_iter().collect(),
        }
    }

    pub fn into_sensitivity(self) -> Result<SensitivityMap> {
        self.expect_kind(MapKind::Sensitivity)?;
        Ok(SensitivityMap {
            oracle_id: self.get("oracle").unwrap_or_default().to_string(),
            dataset_size: self.parsed("dataset_size")?.unwrap_or(0),
            seed: self.parsed("seed")?.unwrap_or(0),
            clean_error: self.parsed("clean_error")?.unwrap_or(0.0),
            map: self.map,
        })
    }
}
