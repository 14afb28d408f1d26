//! Little-endian binary snapshots of a [`DirectorField`].
//!
//! Layout: magic `NCOL1`; grid dims as three `u32`; `h` and `L` as `f64`;
//! particle count `u32`, then each center as three `f64`, the radius as
//! `f64`; a `u8` flag and `f64` for the optional outer radius; `n_inf` as
//! three `f64`; then three `f64` per stored cell in lexicographic order.

use std::io::Write;
use std::path::Path;

use super::field::DirectorField;
use super::grid::build_grid;
use crate::error::{Error, Result};
use crate::exterior::SphereLayout;
use crate::Vec3;

pub const MAGIC: &[u8; 5] = b"NCOL1";

pub fn to_bytes(field: &DirectorField) -> Vec<u8> {
    let g = field.grid();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    for _ in 0..3 {
        out.extend_from_slice(&(g.n() as u32).to_le_bytes());
    }
    out.extend_from_slice(&g.h().to_le_bytes());
    out.extend_from_slice(&g.half_width().to_le_bytes());
    out.extend_from_slice(&(g.layout().len() as u32).to_le_bytes());
    for c in g.layout().centers() {
        put_vec(&mut out, c);
    }
    out.extend_from_slice(&g.layout().radius().to_le_bytes());
    out.push(g.outer_radius().is_some() as u8);
    out.extend_from_slice(&g.outer_radius().unwrap_or(0.0).to_le_bytes());
    put_vec(&mut out, &field.n_inf());
    for (idx, v) in field.values().iter().enumerate() {
        if g.kind(idx).is_stored() {
            put_vec(&mut out, v);
        }
    }
    out
}

fn put_vec(out: &mut Vec<u8>, v: &Vec3) {
    for x in v.iter() {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.pos + n > self.data.len() {
            return Err(Error::Parse(format!("snapshot truncated at byte {}", self.pos)));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn vec(&mut self) -> Result<Vec3> {
        Ok(Vec3::new(self.f64()?, self.f64()?, self.f64()?))
    }
}

pub fn from_bytes(data: &[u8]) -> Result<DirectorField> {
    let mut r = Reader { data, pos: 0 };
    if r.take(5)? != MAGIC {
        return Err(Error::Parse("not an NCOL1 snapshot".into()));
    }
    let dims = [r.u32()?, r.u32()?, r.u32()?];
    if dims[0] != dims[1] || dims[1] != dims[2] {
        return Err(Error::Parse(format!("non-cubic grid {dims:?}")));
    }
    let h = r.f64()?;
    let half_width = r.f64()?;
    let count = r.u32()? as usize;
    let centers = (0..count).map(|_| r.vec()).collect::<Result<Vec<_>>>()?;
    let radius = r.f64()?;
    let has_outer = r.take(1)?[0] != 0;
    let outer = r.f64()?;
    let n_inf = r.vec()?;
    let layout = SphereLayout::general(centers, radius)?;
    let grid = build_grid(half_width, h, &layout, has_outer.then_some(outer))?;
    if grid.n() != dims[0] as usize {
        return Err(Error::Parse(format!("grid dims {} do not match h and L", dims[0])));
    }
    let mut values = vec![n_inf; grid.len()];
    for (idx, v) in values.iter_mut().enumerate() {
        if grid.kind(idx).is_stored() {
            *v = r.vec()?;
        }
    }
    if r.pos != data.len() {
        return Err(Error::Parse(format!("{} trailing bytes", data.len() - r.pos)));
    }
    DirectorField::from_values(grid, n_inf, values)
}

/// Writes through a temporary file in the same directory and renames it.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().ok_or_else(|| Error::invalid(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let run = || -> std::io::Result<()> {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    };
    run().map_err(|e| {
        let _ = std::fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

pub fn write_snapshot(field: &DirectorField, path: &Path) -> Result<()> {
    write_atomic(path, &to_bytes(field))
}

pub fn read_snapshot(path: &Path) -> Result<DirectorField> {
    let data = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_is_exact() {
        let layout = SphereLayout::general(vec![Vec3::new(0.2, 0.0, 0.0)], 0.4).unwrap();
        let grid = build_grid(1.5, 0.125, &layout, Some(1.2)).unwrap();
        let mut f = DirectorField::new(grid, Vec3::z()).unwrap();
        f.fill(&|x: &Vec3| Vec3::new(x.x, x.y * x.z, 1.0));
        let bytes = to_bytes(&f);
        let g = from_bytes(&bytes).unwrap();
        assert_eq!(f.values(), g.values());
        assert_eq!(bytes, to_bytes(&g));
        assert!(from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(from_bytes(&bad).is_err());
    }
}
