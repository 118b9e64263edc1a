//! Attribution CSV, coupling JSON and PGM heatmaps.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;
use xpe_core::transport::{CostKind, TransportMap};

use crate::csv_io::format_value;
use crate::error::{io_err, Error, Result};
use crate::report::Report;

/// One row per (instance, player).
pub fn attribution_csv(report: &Report) -> String {
    let mut out = String::from("instance_index,player_id,value,method,v_empty,v_full\n");
    for inst in &report.instances {
        let a = &inst.attribution;
        for (p, v) in a.values.iter().enumerate() {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                inst.index,
                p,
                format_value(*v),
                a.method,
                format_value(a.v_empty),
                format_value(a.v_full)
            );
        }
    }
    out
}

#[derive(Serialize)]
struct CouplingFile<'a> {
    forward: &'a [usize],
    inverse: &'a [usize],
    objective: f64,
    cost_kind: &'a str,
}

pub fn coupling_json(map: &TransportMap, objective: f64, cost_kind: CostKind) -> Result<String> {
    let file = CouplingFile { forward: &map.forward, inverse: &map.inverse, objective, cost_kind: cost_kind.as_str() };
    Ok(serde_json::to_string_pretty(&file)? + "\n")
}

/// Maps `0` to 128 and `max |phi|` to 255 (positive) or 0 (negative).
pub fn heatmap_levels(values: &[f64]) -> Vec<u8> {
    let peak = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    values
        .iter()
        .map(|&v| {
            if peak == 0.0 {
                return 128;
            }
            let t = v / peak;
            let level = if t >= 0.0 { 128.0 + 127.0 * t } else { 128.0 + 128.0 * t };
            level.round().clamp(0.0, 255.0) as u8
        })
        .collect()
}

/// Binary 8-bit PGM (P5) of a `height x width` row-major grid.
pub fn pgm(values: &[f64], height: usize, width: usize) -> Result<Vec<u8>> {
    if values.len() != height * width {
        return Err(Error::Schema(format!("{} players do not fill a {height}x{width} grid", values.len())));
    }
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(heatmap_levels(values));
    Ok(out)
}

pub fn write_heatmaps(report: &Report, dir: impl AsRef<Path>, height: usize, width: usize) -> Result<usize> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    for inst in &report.instances {
        let path = dir.join(format!("instance_{}.pgm", inst.index));
        std::fs::write(&path, pgm(&inst.attribution.values, height, width)?).map_err(io_err(&path))?;
    }
    Ok(report.instances.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn levels() {
        assert_eq!(heatmap_levels(&[0.0, 2.0, -2.0, 1.0]), vec![128, 255, 0, 192]);
        assert_eq!(heatmap_levels(&[0.0, 0.0]), vec![128, 128]);
    }

    #[test]
    fn pgm_header_and_size() {
        let img = pgm(&[1.0, -1.0, 0.0, 0.5, 0.0, 0.0], 2, 3).unwrap();
        assert!(img.starts_with(b"P5\n3 2\n255\n"));
        assert_eq!(img.len(), b"P5\n3 2\n255\n".len() + 6);
        assert!(pgm(&[1.0], 2, 2).is_err());
    }

    #[test]
    fn coupling_keys() {
        let map = TransportMap { forward: vec![1, 0], inverse: vec![1, 0] };
        let v: serde_json::Value = serde_json::from_str(&coupling_json(&map, 0.5, CostKind::SquaredEuclidean).unwrap()).unwrap();
        assert_eq!(v["cost_kind"], "squared_euclidean");
        assert_eq!(v["forward"], serde_json::json!([1, 0]));
    }
}
