//! On-disk S-matrix cache.
//!
//! One file per work unit, named by the SHA-256 of (physics hash, E, B, M,
//! method). Layout, little endian: magic `CSSM`, format version (u32), n_open
//! (u32), open indices (u32 each), wavenumbers, K matrix and S matrix (real
//! and imaginary parts), all column-major f64.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use coldscat_core::propagator::SMatrix;
use nalgebra::DMatrix;
use num_complex::Complex64;
use sha2::{Digest, Sha256};

pub const MAGIC: [u8; 4] = *b"CSSM";
pub const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CacheError {
    #[error("cache io: {0}")]
    Io(#[from] io::Error),
    #[error("not an S-matrix cache file")]
    BadMagic,
    #[error("cache format version {0}, expected {VERSION}")]
    Version(u32),
    #[error("truncated or oversized cache file")]
    Length,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    CloseCoupling,
    Dwba,
}

#[derive(Debug, Clone)]
pub struct Cache {
    dir: PathBuf,
}

impl Cache {
    pub fn open(dir: impl Into<PathBuf>) -> io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    pub fn key(physics: &[u8; 32], energy: f64, field: f64, m_total: i32, method: Method) -> String {
        let mut h = Sha256::new();
        h.update(physics);
        h.update(energy.to_bits().to_le_bytes());
        h.update(field.to_bits().to_le_bytes());
        h.update(m_total.to_le_bytes());
        h.update([method as u8]);
        hex::encode(h.finalize())
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.smat"))
    }

    /// A missing file is a miss; a damaged one is an error.
    pub fn get(&self, key: &str) -> Result<Option<SMatrix>, CacheError> {
        match fs::read(self.path(key)) {
            Ok(bytes) => decode(&bytes).map(Some),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    /// Writes through a temporary file so readers never see partial data.
    pub fn put(&self, key: &str, s: &SMatrix) -> Result<(), CacheError> {
        let tmp = self.dir.join(format!("{key}.tmp{}", std::process::id()));
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&encode(s))?;
        f.sync_all()?;
        fs::rename(&tmp, self.path(key))?;
        Ok(())
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }
}

pub fn encode(s: &SMatrix) -> Vec<u8> {
    let n = s.n_open();
    let mut out = Vec::with_capacity(12 + 4 * n + 8 * (n + 3 * n * n));
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(n as u32).to_le_bytes());
    for &i in &s.open {
        out.extend_from_slice(&(i as u32).to_le_bytes());
    }
    let mut f = |x: f64| out.extend_from_slice(&x.to_le_bytes());
    s.k.iter().for_each(|&x| f(x));
    s.k_matrix.iter().for_each(|&x| f(x));
    s.s.iter().for_each(|z| {
        f(z.re);
        f(z.im);
    });
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
}

impl Reader<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N], CacheError> {
        if self.bytes.len() < N {
            return Err(CacheError::Length);
        }
        let (head, rest) = self.bytes.split_at(N);
        self.bytes = rest;
        Ok(head.try_into().unwrap())
    }

    fn u32(&mut self) -> Result<u32, CacheError> {
        self.take().map(u32::from_le_bytes)
    }

    fn f64(&mut self) -> Result<f64, CacheError> {
        self.take().map(f64::from_le_bytes)
    }
}

pub fn decode(bytes: &[u8]) -> Result<SMatrix, CacheError> {
    let mut r = Reader { bytes };
    if r.take::<4>()? != MAGIC {
        return Err(CacheError::BadMagic);
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(CacheError::Version(version));
    }
    let n = r.u32()? as usize;
    if r.bytes.len() != 4 * n + 8 * (n + 3 * n * n) {
        return Err(CacheError::Length);
    }
    let open = (0..n).map(|_| r.u32().map(|i| i as usize)).collect::<Result<Vec<_>, _>>()?;
    let k = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;
    let kv = (0..n * n).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;
    let sv = (0..n * n)
        .map(|_| Ok(Complex64::new(r.f64()?, r.f64()?)))
        .collect::<Result<Vec<_>, CacheError>>()?;
    Ok(SMatrix {
        open,
        k,
        k_matrix: DMatrix::from_vec(n, n, kv),
        s: DMatrix::from_vec(n, n, sv),
    })
}
