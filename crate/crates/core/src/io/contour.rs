//! Text contour files.
//!
//! ```text
//! finid-contours 1
//! curve fin_a closed=0 points=3 tip=1 class=4
//! 0 0
//! 1.5 2
//! 3 0
//! end
//! ```

use std::fmt::Write as _;
use std::path::Path;

use crate::curve::{PlanarCurve, Point};
use crate::encode::FinContour;
use crate::error::{Error, Result};
use crate::stroke::RegionContour;

pub const CONTOUR_VERSION: u32 = 1;
const HEADER: &str = "finid-contours";

#[derive(Debug, Clone, PartialEq)]
pub struct ContourRecord {
    pub name: String,
    pub curve: PlanarCurve,
    pub tip_index: Option<usize>,
    pub class: Option<u32>,
    pub hierarchy_rank: Option<u32>,
}

impl ContourRecord {
    pub fn new(name: impl Into<String>, curve: PlanarCurve) -> Self {
        Self {
            name: name.into(),
            curve,
            tip_index: None,
            class: None,
            hierarchy_rank: None,
        }
    }

    pub fn from_fin(name: impl Into<String>, fin: &FinContour, class: Option<u32>) -> Self {
        Self {
            tip_index: Some(fin.tip_index()),
            class,
            ..Self::new(name, fin.curve().clone())
        }
    }

    /// Fin contour using the stored tip, or a geometric tip if none.
    pub fn to_fin(&self) -> Result<FinContour> {
        match self.tip_index {
            Some(t) => FinContour::with_tip(self.curve.clone(), t),
            None => FinContour::new(self.curve.clone()),
        }
    }

    pub fn to_region(&self) -> Result<RegionContour> {
        RegionContour::new(self.curve.clone(), self.hierarchy_rank.unwrap_or(0))
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ContourFile {
    pub curves: Vec<ContourRecord>,
}

fn perr(offset: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        offset,
        message: message.into(),
    }
}

impl ContourFile {
    pub fn new(curves: Vec<ContourRecord>) -> Self {
        Self { curves }
    }

    pub fn to_text(&self) -> Result<String> {
        let mut s = format!("{HEADER} {CONTOUR_VERSION}\n");
        for c in &self.curves {
            if c.name.is_empty() || c.name.chars().any(char::is_whitespace) {
                return Err(Error::InvalidParameter(format!(
                    "invalid curve name {:?}",
                    c.name
                )));
            }
            write!(
                s,
                "curve {} closed={} points={}",
                c.name,
                u8::from(c.curve.is_closed()),
                c.curve.len()
            )
            .unwrap();
            if let Some(t) = c.tip_index {
                write!(s, " tip={t}").unwrap();
            }
            if let Some(k) = c.class {
                write!(s, " class={k}").unwrap();
            }
            if let Some(r) = c.hierarchy_rank {
                write!(s, " rank={r}").unwrap();
            }
            s.push('\n');
            for p in c.curve.points() {
                writeln!(s, "{} {}", p.x, p.y).unwrap();
            }
            s.push_str("end\n");
        }
        Ok(s)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = Vec::new();
        let mut offset = 0;
        for raw in text.split_inclusive('\n') {
            let line = raw.trim_end_matches(['\n', '\r']);
            if !line.trim().is_empty() {
                lines.push((offset, line));
            }
            offset += raw.len();
        }
        let mut it = lines.into_iter();
        let (off, header) = it.next().ok_or_else(|| perr(0, "empty contour file"))?;
        let mut parts = header.split_whitespace();
        if parts.next() != Some(HEADER) {
            return Err(perr(off, format!("expected header `{HEADER} <version>`")));
        }
        let version: u32 = parts
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| perr(off, "missing or invalid format version"))?;
        if version != CONTOUR_VERSION {
            return Err(Error::Version {
                found: version,
                supported: CONTOUR_VERSION,
            });
        }

        let mut curves = Vec::new();
        while let Some((off, line)) = it.next() {
            let mut fields = line.split_whitespace();
            if fields.next() != Some("curve") {
                return Err(perr(off, "expected `curve`"));
            }
            let name = fields
                .next()
                .ok_or_else(|| perr(off, "missing curve name"))?
                .to_string();
            let (mut closed, mut points, mut tip, mut class, mut rank) =
                (None, None, None, None, None);
            for kv in fields {
                let (k, v) = kv
                    .split_once('=')
                    .ok_or_else(|| perr(off, format!("expected key=value, got `{kv}`")))?;
                let bad = || perr(off, format!("invalid value for `{k}`: `{v}`"));
                match k {
                    "closed" => {
                        closed = Some(match v {
                            "0" => false,
                            "1" => true,
                            _ => return Err(bad()),
                        })
                    }
                    "points" => points = Some(v.parse::<usize>().map_err(|_| bad())?),
                    "tip" => tip = Some(v.parse::<usize>().map_err(|_| bad())?),
                    "class" => class = Some(v.parse::<u32>().map_err(|_| bad())?),
                    "rank" => rank = Some(v.parse::<u32>().map_err(|_| bad())?),
                    _ => return Err(perr(off, format!("unknown attribute `{k}`"))),
                }
            }
            let closed = closed.ok_or_else(|| perr(off, "missing `closed`"))?;
            let n = points.ok_or_else(|| perr(off, "missing `points`"))?;
            let mut pts = Vec::with_capacity(n);
            for _ in 0..n {
                let (poff, pl) = it
                    .next()
                    .ok_or_else(|| perr(text.len(), "unexpected end of file in point list"))?;
                let mut xy = pl.split_whitespace();
                let mut coord = || -> Result<f64> {
                    let v: f64 = xy
                        .next()
                        .and_then(|t| t.parse().ok())
                        .ok_or_else(|| perr(poff, "expected `<x> <y>`"))?;
                    if v.is_finite() {
                        Ok(v)
                    } else {
                        Err(perr(poff, "non-finite coordinate"))
                    }
                };
                let p = Point::new(coord()?, coord()?);
                if xy.next().is_some() {
                    return Err(perr(poff, "trailing data after point"));
                }
                pts.push(p);
            }
            match it.next() {
                Some((_, "end")) => {}
                Some((eoff, _)) => {
                    return Err(perr(eoff, format!("expected `end` after {n} points")))
                }
                None => return Err(perr(text.len(), "missing `end`")),
            }
            let curve = PlanarCurve::new(pts, closed).map_err(|e| perr(off, e.to_string()))?;
            if let Some(t) = tip {
                if t >= curve.len() {
                    return Err(perr(off, format!("tip {t} out of range")));
                }
            }
            curves.push(ContourRecord {
                name,
                curve,
                tip_index: tip,
                class,
                hierarchy_rank: rank,
            });
        }
        Ok(Self { curves })
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        super::atomic_write(path, self.to_text()?.as_bytes())
    }
}
