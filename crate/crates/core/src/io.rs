//! On-disk formats: binary fields (`ROMF`), dense array bundles (`ROMB`)
//! with a text manifest of shapes, and key=value manifests.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use sha2::{Digest, Sha256};

use crate::error::{Result, RomError};
use crate::fv::{Field, Mesh};

const FIELD_MAGIC: &[u8; 4] = b"ROMF";
const BUNDLE_MAGIC: &[u8; 4] = b"ROMB";
const VERSION: u32 = 1;

pub fn encode_field(field: &Field) -> Vec<u8> {
    let mut buf = Vec::with_capacity(16 + 8 * field.values().len());
    buf.extend_from_slice(FIELD_MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(field.n_cells() as u32).to_le_bytes());
    buf.extend_from_slice(&(field.components() as u32).to_le_bytes());
    for v in field.values() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf
}

/// Decodes a field and binds it to `mesh` after checking the cell count.
pub fn decode_field(bytes: &[u8], mesh: &Mesh) -> Result<Field> {
    if bytes.len() < 16 || &bytes[..4] != FIELD_MAGIC {
        return Err(RomError::Format("not a ROMF field".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    if word(4) != VERSION {
        return Err(RomError::Format(format!("unsupported field version {}", word(4))));
    }
    let (n, comps) = (word(8) as usize, word(12) as usize);
    if n != mesh.n_cells() {
        return Err(RomError::dim(format!("field has {n} cells, mesh has {}", mesh.n_cells())));
    }
    if bytes.len() != 16 + 8 * n * comps {
        return Err(RomError::Format("truncated field payload".into()));
    }
    let values = bytes[16..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Field::from_values(mesh, comps, values)
}

pub fn write_field(path: &Path, field: &Field) -> Result<()> {
    write_atomic(path, &encode_field(field))
}

pub fn read_field(path: &Path, mesh: &Mesh) -> Result<Field> {
    decode_field(&fs::read(path)?, mesh)
}

/// Writes to a sibling temp file and renames, so readers never see a
/// partial artifact.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("partial");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(tmp, path)?;
    Ok(())
}

/// Named dense arrays of arbitrary rank, row-major.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Bundle {
    pub arrays: BTreeMap<String, (Vec<usize>, Vec<f64>)>,
}

impl Bundle {
    pub fn insert(&mut self, name: &str, shape: Vec<usize>, data: Vec<f64>) {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        self.arrays.insert(name.to_string(), (shape, data));
    }

    pub fn insert_matrix(&mut self, name: &str, m: &DMatrix<f64>) {
        let data = (0..m.nrows())
            .flat_map(|i| (0..m.ncols()).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)])
            .collect();
        self.insert(name, vec![m.nrows(), m.ncols()], data);
    }

    pub fn get(&self, name: &str) -> Result<&(Vec<usize>, Vec<f64>)> {
        self.arrays
            .get(name)
            .ok_or_else(|| RomError::Format(format!("bundle lacks array `{name}`")))
    }

    pub fn matrix(&self, name: &str) -> Result<DMatrix<f64>> {
        let (shape, data) = self.get(name)?;
        if shape.len() != 2 {
            return Err(RomError::Format(format!("`{name}` is not a matrix")));
        }
        Ok(DMatrix::from_row_slice(shape[0], shape[1], data))
    }

    pub fn vector(&self, name: &str) -> Result<Vec<f64>> {
        Ok(self.get(name)?.1.clone())
    }

    pub fn scalar(&self, name: &str) -> Result<f64> {
        let (_, d) = self.get(name)?;
        d.first()
            .copied()
            .ok_or_else(|| RomError::Format(format!("`{name}` is empty")))
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        buf.extend_from_slice(BUNDLE_MAGIC);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        buf.extend_from_slice(&(self.arrays.len() as u32).to_le_bytes());
        for (name, (shape, data)) in &self.arrays {
            buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
            buf.extend_from_slice(name.as_bytes());
            buf.extend_from_slice(&(shape.len() as u32).to_le_bytes());
            for d in shape {
                buf.extend_from_slice(&(*d as u64).to_le_bytes());
            }
            for v in data {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        buf
    }

    pub fn decode(bytes: &[u8]) -> Result<Bundle> {
        let mut r = bytes;
        let mut magic = [0u8; 4];
        read_exact(&mut r, &mut magic)?;
        if &magic != BUNDLE_MAGIC {
            return Err(RomError::Format("not a ROMB bundle".into()));
        }
        if read_u32(&mut r)? != VERSION {
            return Err(RomError::Format("unsupported bundle version".into()));
        }
        let count = read_u32(&mut r)?;
        let mut out = Bundle::default();
        for _ in 0..count {
            let len = read_u32(&mut r)? as usize;
            let mut name = vec![0u8; len];
            read_exact(&mut r, &mut name)?;
            let name = String::from_utf8(name).map_err(|_| RomError::Format("array name is not UTF-8".into()))?;
            let rank = read_u32(&mut r)? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                let mut b = [0u8; 8];
                read_exact(&mut r, &mut b)?;
                shape.push(u64::from_le_bytes(b) as usize);
            }
            let n: usize = shape.iter().product();
            if r.len() < 8 * n {
                return Err(RomError::Format(format!("array `{name}` is truncated")));
            }
            let data = r[..8 * n]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            r = &r[8 * n..];
            out.arrays.insert(name, (shape, data));
        }
        Ok(out)
    }

    /// Shapes, one `name=d0xd1x…` line per array.
    pub fn manifest(&self) -> String {
        let mut s = String::new();
        for (name, (shape, _)) in &self.arrays {
            let dims: Vec<String> = shape.iter().map(|d| d.to_string()).collect();
            let _ = writeln!(s, "{name}={}", dims.join("x"));
        }
        s
    }

    /// Writes `<path>` and `<path>.manifest`.
    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.encode())?;
        let mut m = path.as_os_str().to_owned();
        m.push(".manifest");
        write_atomic(Path::new(&m), self.manifest().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Bundle> {
        Bundle::decode(&fs::read(path)?)
    }
}

fn read_exact(r: &mut &[u8], buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| RomError::Format("unexpected end of bundle".into()))
}

fn read_u32(r: &mut &[u8]) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub fn write_key_values(path: &Path, kv: &BTreeMap<String, String>) -> Result<()> {
    let mut s = String::new();
    for (k, v) in kv {
        let _ = writeln!(s, "{k}={v}");
    }
    write_atomic(path, s.as_bytes())
}

pub fn read_key_values(path: &Path) -> Result<BTreeMap<String, String>> {
    crate::fv::mesh::parse_key_values(&fs::read_to_string(path)?)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path)?))
}

/// Comma-separated reals.
pub fn join_reals(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",")
}

pub fn parse_reals(s: &str) -> Result<Vec<f64>> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|t| {
            t.trim()
                .parse()
                .map_err(|_| RomError::Format(format!("bad real `{t}`")))
        })
        .collect()
}
