//! Snapshot files for distributions: CSV grids, a scalar sidecar and PGM
//! heatmaps on a logarithmic scale.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::accum::ExtSum;
use crate::battery::BatteryParams;
use crate::error::{KibamError, Result};
use crate::grid::SocDistribution;

/// Masses below this are drawn black in heatmaps.
pub const DEFAULT_HEATMAP_FLOOR: f64 = 1e-30;

/// Paths written by [`write_snapshot`].
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotFiles {
    pub inner_csv: PathBuf,
    pub boundary_csv: PathBuf,
    pub scalars: PathBuf,
    pub heatmap: PathBuf,
}

impl SnapshotFiles {
    pub fn new(dir: &Path, prefix: &str) -> Self {
        SnapshotFiles {
            inner_csv: dir.join(format!("{prefix}_inner.csv")),
            boundary_csv: dir.join(format!("{prefix}_boundary.csv")),
            scalars: dir.join(format!("{prefix}_scalars.txt")),
            heatmap: dir.join(format!("{prefix}_heatmap.pgm")),
        }
    }
}

fn csv_err(e: csv::Error) -> KibamError {
    KibamError::Io(e.to_string())
}

fn io_at(path: &Path) -> impl Fn(std::io::Error) -> KibamError + '_ {
    move |e| KibamError::Io(format!("{}: {e}", path.display()))
}

/// Writes rows of masses; `{:e}` prints the shortest string that parses
/// back to the same double.
fn write_rows<'a>(path: &Path, rows: impl Iterator<Item = &'a [f64]>) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(csv_err)?;
    for row in rows {
        w.write_record(row.iter().map(|m| format!("{m:e}")))
            .map_err(csv_err)?;
    }
    w.flush().map_err(io_at(path))
}

fn read_rows(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(csv_err)?;
    r.records()
        .map(|rec| {
            let rec = rec.map_err(csv_err)?;
            rec.iter()
                .map(|f| {
                    f.trim()
                        .parse::<f64>()
                        .map_err(|e| KibamError::Io(format!("{}: {e}", path.display())))
                })
                .collect()
        })
        .collect()
}

/// Writes the inner grid (one row per available-charge cell), the boundary
/// strip, the scalar sidecar and a heatmap.
pub fn write_snapshot(
    dist: &SocDistribution,
    files: &SnapshotFiles,
    heatmap_floor: f64,
) -> Result<()> {
    let n = dist.n_grid();
    write_rows(&files.inner_csv, dist.inner().chunks(n))?;
    write_rows(&files.boundary_csv, std::iter::once(dist.boundary()))?;
    write_scalars(dist, &files.scalars)?;
    write_heatmap(dist, &files.heatmap, heatmap_floor)
}

fn write_scalars(dist: &SocDistribution, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).map_err(io_at(path))?);
    let summary = dist.summary();
    let parts: Vec<String> = dist
        .depleted()
        .components()
        .iter()
        .map(|c| format!("{c:e}"))
        .collect();
    let io = io_at(path);
    writeln!(w, "n_grid={}", dist.n_grid()).map_err(&io)?;
    writeln!(w, "delta_a={:e}", dist.delta_a()).map_err(&io)?;
    writeln!(w, "delta_b={:e}", dist.delta_b()).map_err(&io)?;
    writeln!(w, "inner_total={:e}", summary.inner_total).map_err(&io)?;
    writeln!(w, "boundary_total={:e}", summary.boundary_total).map_err(&io)?;
    writeln!(w, "depleted={}", summary.depleted.to_exact_decimal()).map_err(&io)?;
    writeln!(w, "depleted_parts={}", parts.join(" ")).map_err(&io)?;
    writeln!(w, "survival={}", summary.survival.to_exact_decimal()).map_err(&io)?;
    w.flush().map_err(&io)
}

/// Reads a snapshot written by [`write_snapshot`] back into a distribution.
pub fn read_snapshot(params: &BatteryParams, files: &SnapshotFiles) -> Result<SocDistribution> {
    let rows = read_rows(&files.inner_csv)?;
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(KibamError::Io(format!(
            "{}: grid is not square",
            files.inner_csv.display()
        )));
    }
    let boundary = read_rows(&files.boundary_csv)?
        .into_iter()
        .next()
        .unwrap_or_default();
    let mut depleted = ExtSum::new();
    let reader = BufReader::new(File::open(&files.scalars).map_err(io_at(&files.scalars))?);
    for line in reader.lines() {
        let line = line.map_err(io_at(&files.scalars))?;
        if let Some(parts) = line.strip_prefix("depleted_parts=") {
            for p in parts.split_whitespace() {
                let x: f64 = p
                    .parse()
                    .map_err(|e| KibamError::Io(format!("{}: {e}", files.scalars.display())))?;
                depleted.add(x);
            }
        }
    }
    SocDistribution::from_parts(
        params,
        n,
        rows.into_iter().flatten().collect(),
        boundary,
        depleted,
    )
}

/// 8-bit binary PGM of `log10(mass)`, the boundary strip as the top row and
/// the available charge decreasing downwards. Black is `floor` or below,
/// white the largest mass.
pub fn write_heatmap(dist: &SocDistribution, path: &Path, floor: f64) -> Result<()> {
    if !(floor > 0.0) {
        return Err(KibamError::Io(format!(
            "heatmap floor must be positive, got {floor}"
        )));
    }
    let n = dist.n_grid();
    let max = dist
        .inner()
        .iter()
        .chain(dist.boundary())
        .fold(0.0f64, |m, &x| m.max(x));
    let lo = floor.log10();
    let hi = max.max(floor).log10();
    let span = if hi > lo { hi - lo } else { 1.0 };
    let shade = |m: f64| -> u8 {
        if m <= floor {
            0
        } else {
            (((m.log10() - lo) / span) * 255.0)
                .round()
                .clamp(0.0, 255.0) as u8
        }
    };
    let mut pixels = Vec::with_capacity(n * (n + 1));
    pixels.extend(dist.boundary().iter().map(|&m| shade(m)));
    for row in dist.inner().chunks(n).rev() {
        pixels.extend(row.iter().map(|&m| shade(m)));
    }
    let mut w = BufWriter::new(File::create(path).map_err(io_at(path))?);
    write!(w, "P5\n{} {}\n255\n", n, n + 1).map_err(io_at(path))?;
    w.write_all(&pixels).map_err(io_at(path))?;
    w.flush().map_err(io_at(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::battery::Soc;
    use crate::grid::InitSpec;
    use crate::load::LoadModel;

    #[test]
    fn csv_round_trip_is_exact() {
        let p = BatteryParams::new(0.5, 0.002, 20.0).unwrap();
        let d = SocDistribution::init(
            &p,
            30,
            &InitSpec::BoxUniform {
                a: (4.0, 6.5),
                b: (1.0, 9.0),
            },
        )
        .unwrap();
        let g = LoadModel::Normal { mean: 0.1, sd: 0.1 }
            .discretize(9, 1.0 - 1e-12)
            .unwrap();
        let mut d = d.transform(&p, 60.0, &g).unwrap();
        for _ in 0..3 {
            d = d
                .transform(
                    &p,
                    30.0,
                    &LoadModel::Dirac(-0.3).discretize(1, 1.0).unwrap(),
                )
                .unwrap();
        }
        d.add_depleted(&ExtSum::from_f64(1e-70));
        let dir = tempfile::tempdir().unwrap();
        let files = SnapshotFiles::new(dir.path(), "t60");
        write_snapshot(&d, &files, DEFAULT_HEATMAP_FLOOR).unwrap();
        let back = read_snapshot(&p, &files).unwrap();
        assert_eq!(back.inner(), d.inner());
        assert_eq!(back.boundary(), d.boundary());
        assert_eq!(
            back.depleted().cmp_exact(d.depleted()),
            std::cmp::Ordering::Equal
        );
        let scalars = std::fs::read_to_string(&files.scalars).unwrap();
        assert!(scalars.contains("depleted=0.") || scalars.contains("depleted=1"));
    }

    #[test]
    fn heatmap_header_and_size() {
        let p = BatteryParams::new(0.5, 0.002, 20.0).unwrap();
        let d = SocDistribution::init(&p, 12, &InitSpec::Dirac(Soc::new(5.0, 5.0))).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.pgm");
        write_heatmap(&d, &path, 1e-30).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let header = b"P5\n12 13\n255\n";
        assert_eq!(&bytes[..header.len()], header);
        let pixels = &bytes[header.len()..];
        assert_eq!(pixels.len(), 12 * 13);
        // cell (6, 6) sits in image row 1 + (11 - 6)
        assert_eq!(pixels[(1 + 5) * 12 + 6], 255);
        assert_eq!(pixels.iter().filter(|&&b| b > 0).count(), 1);
        assert!(write_heatmap(&d, &path, 0.0).is_err());
    }
}
