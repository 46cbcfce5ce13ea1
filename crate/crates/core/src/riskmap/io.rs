use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::{GridSpec, RiskMap};
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"CRSK";
pub const VERSION: u16 = 1;

const HEADER_LEN: usize = 4 + 2 + 4 + 4 + 4 + 8 + 2;

/// Serialise to the binary raster format: magic, version, width, height,
/// resolution, origin, layer count, then row-major little-endian f32
/// layers.
pub fn to_bytes(map: &RiskMap) -> Result<Vec<u8>> {
    let g = &map.grid;
    let width = u32::try_from(g.width).map_err(|_| Error::Format("width exceeds u32".into()))?;
    let height = u32::try_from(g.height).map_err(|_| Error::Format("height exceeds u32".into()))?;
    let layers =
        u16::try_from(map.layers.len()).map_err(|_| Error::Format("too many layers".into()))?;
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * g.cells() * map.layers.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&width.to_le_bytes());
    out.extend_from_slice(&height.to_le_bytes());
    out.extend_from_slice(&(g.resolution as f32).to_le_bytes());
    out.extend_from_slice(&(g.origin[0] as f32).to_le_bytes());
    out.extend_from_slice(&(g.origin[1] as f32).to_le_bytes());
    out.extend_from_slice(&layers.to_le_bytes());
    for layer in &map.layers {
        for v in layer {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let end = self.pos + N;
        let slice = self
            .buf
            .get(self.pos..end)
            .ok_or_else(|| Error::Format("truncated file".into()))?;
        self.pos = end;
        Ok(slice.try_into().expect("slice length matches"))
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take()?))
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take()?))
    }
    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take()?))
    }
}

pub fn from_bytes(bytes: &[u8], dt: f64) -> Result<RiskMap> {
    let mut c = Cursor { buf: bytes, pos: 0 };
    if &c.take::<4>()? != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let version = c.u16()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let width = c.u32()? as usize;
    let height = c.u32()? as usize;
    let resolution = c.f32()? as f64;
    let origin = [c.f32()? as f64, c.f32()? as f64];
    let count = c.u16()? as usize;
    let grid = GridSpec::new(origin, resolution, width, height)
        .map_err(|e| Error::Format(e.to_string()))?;
    if bytes.len() != HEADER_LEN + 4 * grid.cells() * count {
        return Err(Error::Format("payload size disagrees with header".into()));
    }
    let mut map = RiskMap::zeros(grid, count, dt);
    for layer in map.layers.iter_mut() {
        for v in layer.iter_mut() {
            *v = c.f32()? as f64;
        }
    }
    Ok(map)
}

pub fn write_binary(map: &RiskMap, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, to_bytes(map)?)?;
    Ok(())
}

pub fn read_binary(path: impl AsRef<Path>, dt: f64) -> Result<RiskMap> {
    from_bytes(&fs::read(path)?, dt)
}

/// One CSV per layer (`layer_<t>.csv`), one grid row per line.
pub fn write_csv_layers(map: &RiskMap, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let w = map.grid.width;
    let mut paths = Vec::with_capacity(map.layers.len());
    for (t, layer) in map.layers.iter().enumerate() {
        let path = dir.join(format!("layer_{t}.csv"));
        let mut f = std::io::BufWriter::new(fs::File::create(&path)?);
        for row in layer.chunks(w) {
            let line: Vec<String> = row.iter().map(|v| format!("{}", *v as f32)).collect();
            writeln!(f, "{}", line.join(","))?;
        }
        f.flush()?;
        paths.push(path);
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_round_trip() {
        let g = GridSpec::new([-1.0, -2.0], 0.5, 3, 2).unwrap();
        let mut map = RiskMap::zeros(g, 2, 0.5);
        map.layers[1][4] = 2.5;
        let bytes = to_bytes(&map).unwrap();
        assert_eq!(&bytes[..4], b"CRSK");
        assert_eq!(bytes.len(), HEADER_LEN + 4 * 12);
        let back = from_bytes(&bytes, 0.5).unwrap();
        assert_eq!(back.layers, map.layers);
        assert_eq!(back.grid, g);
        assert!(from_bytes(&bytes[..bytes.len() - 1], 0.5).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(from_bytes(&bad, 0.5).is_err());
    }

    #[test]
    fn csv_layers_have_grid_shape() {
        let dir = tempfile::tempdir().unwrap();
        let g = GridSpec::new([0.0, 0.0], 1.0, 4, 3).unwrap();
        let map = RiskMap::zeros(g, 2, 0.5);
        let paths = write_csv_layers(&map, dir.path()).unwrap();
        assert_eq!(paths.len(), 2);
        let text = fs::read_to_string(&paths[0]).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.lines().all(|l| l.split(',').count() == 4));
    }
}
