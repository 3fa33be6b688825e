//! 2-D slices of grid fields as CSV matrices and 8-bit PGM heatmaps.

use super::GridField;
use crate::error::{arg, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Slice {
    pub rows: usize,
    pub cols: usize,
    /// Row-major values.
    pub values: Vec<f64>,
}

/// Fixes `axis` at the node nearest to `coordinate`; 2-D fields are returned
/// whole and `axis` is ignored.
pub fn slice_2d(field: &GridField, axis: usize, coordinate: f64) -> Result<Slice> {
    let shape = field.shape();
    if field.n_dims() == 2 {
        return Ok(Slice {
            rows: shape[0],
            cols: shape[1],
            values: field.values().to_vec(),
        });
    }
    if axis >= 3 {
        return arg(format!("slice axis {axis} out of range"));
    }
    let t = ((coordinate - field.origin()[axis]) / field.spacing()).round();
    if t < 0.0 || t > (shape[axis] - 1) as f64 {
        return arg(format!("slice coordinate {coordinate} outside the grid"));
    }
    let fixed = t as usize;
    let free: Vec<usize> = (0..3).filter(|&d| d != axis).collect();
    let (rows, cols) = (shape[free[0]], shape[free[1]]);
    let mut values = Vec::with_capacity(rows * cols);
    let mut node = [0usize; 3];
    node[axis] = fixed;
    for i in 0..rows {
        for j in 0..cols {
            node[free[0]] = i;
            node[free[1]] = j;
            values.push(field.value(&node)?);
        }
    }
    Ok(Slice { rows, cols, values })
}

pub fn slice_to_csv(slice: &Slice) -> String {
    let mut out = String::new();
    for row in slice.values.chunks(slice.cols) {
        let line: Vec<String> = row.iter().map(|v| format!("{v:.17e}")).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

/// Binary PGM, values mapped linearly from `[min, max]` to `[0, 255]`.
pub fn slice_to_pgm(slice: &Slice) -> Vec<u8> {
    let min = slice.values.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = slice.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = max - min;
    let mut out = format!("P5\n{} {}\n255\n", slice.cols, slice.rows).into_bytes();
    out.extend(slice.values.iter().map(|v| {
        if span > 0.0 {
            (((v - min) / span) * 255.0).round() as u8
        } else {
            0
        }
    }));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn z_slice_and_pgm() {
        let f = GridField::cube(3, 5, 1.0, |x| x[0] + 2.0 * x[1] + 4.0 * x[2]).unwrap();
        let s = slice_2d(&f, 2, 0.0).unwrap();
        assert_eq!((s.rows, s.cols), (5, 5));
        assert!((s.values[0] - (-3.0)).abs() < 1e-12);
        let pgm = slice_to_pgm(&s);
        assert!(pgm.starts_with(b"P5\n5 5\n255\n"));
        assert_eq!(pgm.len(), 11 + 25);
        assert_eq!(*pgm.last().unwrap(), 255);
        assert_eq!(slice_to_csv(&s).lines().count(), 5);
    }
}
