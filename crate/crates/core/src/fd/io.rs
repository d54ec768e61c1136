//! Grid-function files.
//!
//! Binary layout: the bytes `SVGF`, a little-endian `u32` header length, a
//! JSON header, then every value as a little-endian `f64` in `(t, y, z)` order
//! with `z` fastest. CSV has columns `t,y,v,z,value`.

use serde::{Deserialize, Serialize};
use std::io::{Read, Write};

use super::grid::GridFunction;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"SVGF";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format: String,
    version: u32,
    endianness: String,
    order: String,
    dims: [usize; 3],
    z: Vec<f64>,
    y: Vec<f64>,
    t: Vec<f64>,
}

impl GridFunction {
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        let header = Header {
            format: "svsmile-gridfunction".into(),
            version: 1,
            endianness: "little".into(),
            order: "t,y,z".into(),
            dims: [self.t.len(), self.y.len(), self.z.len()],
            z: self.z.clone(),
            y: self.y.clone(),
            t: self.t.clone(),
        };
        let json = serde_json::to_vec(&header)?;
        w.write_all(MAGIC)?;
        w.write_all(&(json.len() as u32).to_le_bytes())?;
        w.write_all(&json)?;
        let mut buf = Vec::with_capacity(8 * self.values.len());
        for v in &self.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::InvalidInput("not a grid-function file".into()));
        }
        let mut len = [0u8; 4];
        r.read_exact(&mut len)?;
        let mut json = vec![0u8; u32::from_le_bytes(len) as usize];
        r.read_exact(&mut json)?;
        let h: Header = serde_json::from_slice(&json)?;
        if h.endianness != "little" || h.order != "t,y,z" || h.version != 1 {
            return Err(Error::InvalidInput(
                "unsupported grid-function layout".into(),
            ));
        }
        if h.dims != [h.t.len(), h.y.len(), h.z.len()] {
            return Err(Error::InvalidInput("header dims disagree with axes".into()));
        }
        let n = h.dims.iter().product::<usize>();
        let mut raw = vec![0u8; 8 * n];
        r.read_exact(&mut raw)?;
        let values = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        GridFunction::new(h.z, h.y, h.t, values)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["t", "y", "v", "z", "value"])
            .map_err(crate::volpath::csv_err)?;
        for (k, &t) in self.t.iter().enumerate() {
            for (j, &y) in self.y.iter().enumerate() {
                for (i, &z) in self.z.iter().enumerate() {
                    out.write_record([
                        format!("{t:.17e}"),
                        format!("{y:.17e}"),
                        format!("{:.17e}", y.exp()),
                        format!("{z:.17e}"),
                        format!("{:.17e}", self.get(k, j, i)),
                    ])
                    .map_err(crate::volpath::csv_err)?;
                }
            }
        }
        out.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_round_trip() {
        let g = GridFunction::from_fn(
            vec![-1.0, 0.0],
            vec![-2.0, -1.0, 0.0],
            vec![0.0, 1.0],
            |z, y, t| z * y - t + 0.1,
        )
        .unwrap();
        let mut buf = Vec::new();
        g.write_binary(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"SVGF");
        let back = GridFunction::read_binary(buf.as_slice()).unwrap();
        assert_eq!(back, g);
        buf[0] = b'X';
        assert!(GridFunction::read_binary(buf.as_slice()).is_err());
    }

    #[test]
    fn csv_rows() {
        let g = GridFunction::from_fn(vec![0.0, 1.0], vec![0.0], vec![0.0, 1.0], |z, _, t| z + t)
            .unwrap();
        let mut buf = Vec::new();
        g.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 5);
    }
}
