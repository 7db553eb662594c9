//! Lighting rig files: nine whitespace-separated numbers, column-major
//! (the R light's x y z, then G, then B).

use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use rgbps_core::num::{cast, to_f64, Scalar};
use rgbps_core::LightingRig;

use crate::error::{IoError, Result};

pub fn read_rig<T: Scalar>(path: impl AsRef<Path>) -> Result<LightingRig<T>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| IoError::file(path, e))?;
    parse_rig(&text).map_err(|reason| IoError::format(path, reason))
}

pub fn parse_rig<T: Scalar>(text: &str) -> std::result::Result<LightingRig<T>, String> {
    let values: Vec<f64> = text
        .split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|_| format!("bad number {t:?}")))
        .collect::<std::result::Result<_, _>>()?;
    if values.len() != 9 {
        return Err(format!("expected 9 numbers, found {}", values.len()));
    }
    let col = |i: usize| {
        Vector3::new(
            cast::<T>(values[3 * i]),
            cast::<T>(values[3 * i + 1]),
            cast::<T>(values[3 * i + 2]),
        )
    };
    LightingRig::from_lights(col(0), col(1), col(2)).map_err(|e| e.to_string())
}

pub fn write_rig<T: Scalar>(path: impl AsRef<Path>, rig: &LightingRig<T>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, format_rig(rig)).map_err(|e| IoError::file(path, e))
}

pub fn format_rig<T: Scalar>(rig: &LightingRig<T>) -> String {
    let m: &Matrix3<T> = rig.matrix();
    let mut out = String::new();
    for c in 0..3 {
        for r in 0..3 {
            out.push_str(&format!("{}", to_f64(m[(r, c)])));
            out.push(if r == 2 { '\n' } else { ' ' });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rgbps_core::synth::benchmark_rig;
    use tempfile::tempdir;

    #[test]
    fn roundtrip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("rig.txt");
        let rig = benchmark_rig::<f64>();
        write_rig(&path, &rig).unwrap();
        let back: LightingRig<f64> = read_rig(&path).unwrap();
        assert_eq!(rig.matrix(), back.matrix());
    }

    #[test]
    fn column_major_order() {
        // l_R = (1,2,3): first three numbers.
        let rig: LightingRig<f64> =
            parse_rig("1 2 3  0 1 0  0 0 1").unwrap();
        assert_eq!(rig.light(0), Vector3::new(1.0, 2.0, 3.0));
        assert_eq!(rig.light(1), Vector3::new(0.0, 1.0, 0.0));
    }

    #[test]
    fn rejects_wrong_count_and_singular() {
        assert!(parse_rig::<f64>("1 2 3").is_err());
        assert!(parse_rig::<f64>("1 0 0  1 0 0  0 0 1").is_err());
    }
}
