//! On-disk layout of record directories and atomic artifact writes.
//!
//! A dataset is a directory of record directories. Each record directory
//! `<id>/` holds `<id>.meta`, the tiles `<id>_t<k>_<hr|lr|gen>.png` and
//! optionally `<id>_series.csv` with the float series.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use seisr::codec::{
    decimate_tile, decode_tiles, dequantize, encode_record, quantize, read_tile_png, tile_file_name, write_tile_png,
    ImageTile, Sidecar, TileKind, TileMetadata,
};
use seisr::gm_io::GroundMotionRecord;

/// Writes through a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = temp_sibling(path)?;
    fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))
}

pub fn write_png_atomic(path: &Path, tile: &ImageTile) -> Result<()> {
    let tmp = temp_sibling(path)?;
    write_tile_png(&tmp, &quantize(tile)?)?;
    fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))
}

fn temp_sibling(path: &Path) -> Result<PathBuf> {
    let name = path.file_name().ok_or_else(|| anyhow!("{} has no file name", path.display()))?;
    Ok(path.with_file_name(format!(".{}.tmp", name.to_string_lossy())))
}

/// Makes an id safe to use as a file-name stem.
pub fn sanitize_id(id: &str) -> String {
    id.chars().map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' }).collect()
}

/// `time_s,acceleration,velocity,displacement`, shortest round-trip reals.
pub fn series_csv(rec: &GroundMotionRecord) -> String {
    let mut s = String::from("time_s,acceleration,velocity,displacement\n");
    for i in 0..rec.len() {
        let _ =
            writeln!(s, "{},{},{},{}", i as f64 * rec.dt, rec.acceleration[i], rec.velocity[i], rec.displacement[i]);
    }
    s
}

/// Parses a series CSV. Without `dt`, the step is taken from the time column.
pub fn parse_series_csv(text: &str, record_id: &str, dt: Option<f64>) -> Result<GroundMotionRecord> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.trim() == "time_s,acceleration,velocity,displacement" => {}
        Some((_, h)) => bail!("line 1: unexpected header `{h}`"),
        None => bail!("empty series file"),
    }
    let mut cols: [Vec<f64>; 4] = Default::default();
    for (i, line) in lines {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            bail!("line {}: expected 4 fields, found {}", i + 1, fields.len());
        }
        for (col, f) in cols.iter_mut().zip(&fields) {
            col.push(f.trim().parse().map_err(|_| anyhow!("line {}: non-numeric value `{f}`", i + 1))?);
        }
    }
    let [time, acc, vel, disp] = cols;
    let dt = match dt {
        Some(dt) => dt,
        None if time.len() >= 2 => (time[time.len() - 1] - time[0]) / (time.len() - 1) as f64,
        None => bail!("cannot infer the time step from fewer than two samples"),
    };
    Ok(GroundMotionRecord::new(record_id, dt, acc, vel, disp, Default::default())?)
}

/// Tiles and sample count written for one record.
#[derive(Clone, Debug, PartialEq)]
pub struct WrittenRecord {
    pub record_id: String,
    pub tiles: usize,
    pub samples: usize,
}

/// Encodes `rec` into `<root>/<id>/`: HR and LR tiles, sidecar, series.
pub fn write_record(root: &Path, rec: &GroundMotionRecord) -> Result<WrittenRecord> {
    let id = sanitize_id(&rec.record_id);
    let dir = root.join(&id);
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let (tiles, metas) = encode_record(rec)?;
    for (k, hr) in tiles.iter().enumerate() {
        write_png_atomic(&dir.join(tile_file_name(&id, k, TileKind::Hr)), hr)?;
        write_png_atomic(&dir.join(tile_file_name(&id, k, TileKind::Lr)), &decimate_tile(hr)?)?;
    }
    let sidecar = Sidecar { record_id: id.clone(), ..Sidecar::from_metadata(&metas)? };
    write_atomic(&dir.join(format!("{id}.meta")), sidecar.render().as_bytes())?;
    write_atomic(&dir.join(format!("{id}_series.csv")), series_csv(rec).as_bytes())?;
    Ok(WrittenRecord { record_id: id, tiles: tiles.len(), samples: rec.len() })
}

/// A record directory found on disk.
#[derive(Clone, Debug)]
pub struct StoredRecord {
    pub dir: PathBuf,
    pub sidecar: Sidecar,
}

impl StoredRecord {
    pub fn open(dir: &Path) -> Result<Self> {
        let mut metas = Vec::new();
        for entry in fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
            let path = entry?.path();
            if path.extension().is_some_and(|e| e == "meta") {
                metas.push(path);
            }
        }
        let meta = match metas.as_slice() {
            [one] => one,
            [] => bail!("{}: no .meta sidecar", dir.display()),
            _ => bail!("{}: more than one .meta sidecar", dir.display()),
        };
        let text = fs::read_to_string(meta).with_context(|| format!("reading {}", meta.display()))?;
        let sidecar = Sidecar::parse(&text).with_context(|| meta.display().to_string())?;
        Ok(Self { dir: dir.to_path_buf(), sidecar })
    }

    pub fn id(&self) -> &str {
        &self.sidecar.record_id
    }

    pub fn metadata(&self) -> Vec<TileMetadata> {
        self.sidecar.to_metadata()
    }

    pub fn tile_path(&self, k: usize, kind: TileKind) -> PathBuf {
        self.dir.join(tile_file_name(self.id(), k, kind))
    }

    pub fn has_tiles(&self, kind: TileKind) -> bool {
        (0..self.sidecar.true_sample_counts.len()).all(|k| self.tile_path(k, kind).is_file())
    }

    /// Every tile of one kind, from its 8-bit PNG.
    pub fn tiles(&self, kind: TileKind) -> Result<Vec<ImageTile>> {
        (0..self.sidecar.true_sample_counts.len())
            .map(|k| {
                let path = self.tile_path(k, kind);
                Ok(dequantize(&read_tile_png(&path).with_context(|| format!("reading {}", path.display()))?))
            })
            .collect()
    }

    /// The LR record decoded from the LR PNGs.
    pub fn lr_record(&self) -> Result<GroundMotionRecord> {
        let metas: Vec<_> = self.metadata().iter().map(|m| m.decimated()).collect();
        Ok(decode_tiles(&self.tiles(TileKind::Lr)?, &metas)?)
    }

    pub fn series_path(&self) -> PathBuf {
        self.dir.join(format!("{}_series.csv", self.id()))
    }

    /// The float series if present, else the record decoded from `kind`
    /// tiles.
    pub fn record(&self, kind: TileKind) -> Result<GroundMotionRecord> {
        let path = self.series_path();
        if path.is_file() {
            let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
            let mut rec = parse_series_csv(&text, self.id(), Some(self.sidecar.dt))
                .with_context(|| path.display().to_string())?;
            rec.record_id = self.id().to_string();
            return Ok(rec);
        }
        Ok(decode_tiles(&self.tiles(kind)?, &self.metadata())?)
    }
}

/// Record directories under `root` (or `root` itself), sorted by id.
pub fn list_records(root: &Path) -> Result<Vec<StoredRecord>> {
    if !root.is_dir() {
        bail!("{} is not a directory", root.display());
    }
    if let Ok(one) = StoredRecord::open(root) {
        return Ok(vec![one]);
    }
    let mut out = Vec::new();
    for entry in fs::read_dir(root).with_context(|| format!("listing {}", root.display()))? {
        let path = entry?.path();
        if path.is_dir() && !path.file_name().is_some_and(|n| n.to_string_lossy().starts_with('.')) {
            out.push(StoredRecord::open(&path)?);
        }
    }
    if out.is_empty() {
        bail!("{} holds no record directories", root.display());
    }
    out.sort_by(|a, b| a.id().cmp(b.id()));
    Ok(out)
}

/// A fixed-width table with a header row, for terminal summaries.
pub fn table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let line = |cells: Vec<&str>| -> String {
        let parts: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        parts.join("  ").trim_end().to_string() + "\n"
    };
    let mut s = line(header.to_vec());
    s += &line(widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().iter().map(|s| s.as_str()).collect());
    for row in rows {
        s += &line(row.iter().map(|c| c.as_str()).collect());
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use seisr::gm_io::synthesize_record;

    #[test]
    fn series_csv_round_trip_is_exact() {
        let rec = synthesize_record(3, 500, 0.01, 2).unwrap();
        let back = parse_series_csv(&series_csv(&rec), &rec.record_id, Some(rec.dt)).unwrap();
        assert_eq!(back.acceleration, rec.acceleration);
        assert_eq!(back.velocity, rec.velocity);
        assert_eq!(back.displacement, rec.displacement);
        let inferred = parse_series_csv(&series_csv(&rec), "x", None).unwrap();
        assert!((inferred.dt - rec.dt).abs() < 1e-15);
    }

    #[test]
    fn malformed_series_names_the_line() {
        let err =
            parse_series_csv("time_s,acceleration,velocity,displacement\n0,1,2,3\n0.1,1,x,3\n", "r", None).unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
        assert!(parse_series_csv("t,a\n", "r", None).is_err());
    }

    #[test]
    fn ids_are_file_safe() {
        assert_eq!(sanitize_id("RSN1_HELENA.A_A-HMC180"), "RSN1_HELENA.A_A-HMC180");
        assert_eq!(sanitize_id("a/b c"), "a_b_c");
    }

    #[test]
    fn table_aligns_columns() {
        let t = table(&["a", "long"], &[vec!["xyz".into(), "1".into()]]);
        assert_eq!(t, "a    long\n---  ----\nxyz  1\n");
    }
}
