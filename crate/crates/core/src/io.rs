//! Field serialization.
//!
//! CSV: header `x,y,value`, one row per node in storage order (`j` outer).
//!
//! Binary: a 16-byte header (the 8 magic bytes `AOBSTFLD`, then `nx` and `ny`
//! as little-endian `u32`), followed by `nx * ny` little-endian `f64` values in
//! storage order.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::grid::{Grid2D, ScalarField};

pub const FIELD_MAGIC: &[u8; 8] = b"AOBSTFLD";

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

pub fn write_field_csv<W: Write>(field: &ScalarField, out: W) -> Result<()> {
    let g = field.grid();
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["x", "y", "value"]).map_err(csv_err)?;
    for j in 0..g.ny() {
        for i in 0..g.nx() {
            w.write_record(&[
                format!("{}", g.x(i)),
                format!("{}", g.y(j)),
                format!("{:e}", field.at(i, j)),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a CSV field written for `grid`; rows must appear in storage order.
pub fn read_field_csv<R: Read>(grid: Grid2D, input: R) -> Result<ScalarField> {
    let mut r = csv::Reader::from_reader(input);
    let mut values = Vec::with_capacity(grid.len());
    for (k, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        if rec.len() != 3 {
            return Err(Error::Io(format!(
                "row {} has {} columns, expected 3",
                k + 1,
                rec.len()
            )));
        }
        let parse = |c: usize| -> Result<f64> {
            rec[c]
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::Io(format!("row {}: {e}", k + 1)))
        };
        let (x, y, v) = (parse(0)?, parse(1)?, parse(2)?);
        if k < grid.len() {
            let (i, j) = grid.ij(k);
            let tol = 1e-9 * grid.h();
            if (x - grid.x(i)).abs() > tol || (y - grid.y(j)).abs() > tol {
                return Err(Error::Mismatch(format!(
                    "row {} at ({x}, {y}) does not match node ({}, {})",
                    k + 1,
                    grid.x(i),
                    grid.y(j)
                )));
            }
        }
        values.push(v);
    }
    ScalarField::from_values(grid, values)
}

pub fn write_field_binary<W: Write>(field: &ScalarField, mut out: W) -> Result<()> {
    let g = field.grid();
    out.write_all(FIELD_MAGIC)?;
    out.write_all(&(g.nx() as u32).to_le_bytes())?;
    out.write_all(&(g.ny() as u32).to_le_bytes())?;
    for v in field.values() {
        out.write_all(&v.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a binary field; the stored node counts must match `grid`.
pub fn read_field_binary<R: Read>(grid: Grid2D, mut input: R) -> Result<ScalarField> {
    let mut header = [0u8; 16];
    input.read_exact(&mut header)?;
    if &header[..8] != FIELD_MAGIC {
        return Err(Error::Io("bad magic in binary field".into()));
    }
    let nx = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    let ny = u32::from_le_bytes(header[12..16].try_into().unwrap()) as usize;
    if nx != grid.nx() || ny != grid.ny() {
        return Err(Error::Mismatch(format!(
            "binary field is {nx}x{ny}, grid is {}x{}",
            grid.nx(),
            grid.ny()
        )));
    }
    let mut buf = vec![0u8; 8 * nx * ny];
    input.read_exact(&mut buf)?;
    let values = buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    ScalarField::from_values(grid, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let g = Grid2D::new(5, 3, 2.0, 1.0).unwrap();
        let u = ScalarField::from_fn(g, |x, y| (x * 3.1).sin() + y / 7.0);
        let mut buf = Vec::new();
        write_field_csv(&u, &mut buf).unwrap();
        assert!(buf.starts_with(b"x,y,value\n"));
        let back = read_field_csv(g, buf.as_slice()).unwrap();
        assert_eq!(back, u);
    }

    #[test]
    fn binary_round_trip() {
        let g = Grid2D::unit(4).unwrap();
        let u = ScalarField::from_fn(g, |x, y| x * y - 0.25);
        let mut buf = Vec::new();
        write_field_binary(&u, &mut buf).unwrap();
        assert_eq!(buf.len(), 16 + 8 * 16);
        assert_eq!(&buf[..8], b"AOBSTFLD");
        assert_eq!(read_field_binary(g, buf.as_slice()).unwrap(), u);
        assert!(read_field_binary(Grid2D::unit(5).unwrap(), buf.as_slice()).is_err());
        buf[0] = b'X';
        assert!(read_field_binary(g, buf.as_slice()).is_err());
    }
}
