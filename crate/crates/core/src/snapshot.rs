//! Self-describing binary snapshots of the state pair `(psi, phi)`.
//!
//! Layout (all integers and floats little-endian):
//!   magic `FFSN` | version u8 | flags u8 | endian marker u32 = 0x01020304 |
//!   config_hash u64 | step u64 | time f64 | alpha f64 | r_max f64 |
//!   n_r u32 | n_theta u32 | n_phi u32 | n_space u32 |
//!   psi_len u64 | psi f64... | phi_len u64 | phi f64...
//!
//! Flag bit 0 records the homogeneous-Dirichlet truncation of the length
//! axis. Encoding is bit-exact: write-read round trips reproduce the fields
//! bit for bit.

use thiserror::Error;

pub const MAGIC: [u8; 4] = *b"FFSN";
pub const VERSION: u8 = 1;
pub const ENDIAN_MARKER: u32 = 0x0102_0304;
pub const FLAG_DIRICHLET_RMAX: u8 = 0b1;

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("not a snapshot file (bad magic)")]
    BadMagic,
    #[error("unsupported snapshot version {0}")]
    BadVersion(u8),
    #[error("endianness marker mismatch (got {0:#x})")]
    BadEndian(u32),
    #[error("truncated snapshot: needed {needed} bytes, got {got}")]
    Truncated { needed: usize, got: usize },
    #[error("snapshots come from different configurations: {a:016x} vs {b:016x}")]
    HashMismatch { a: u64, b: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub config_hash: u64,
    pub step: u64,
    pub time: f64,
    pub alpha: f64,
    pub r_max: f64,
    pub n_r: u32,
    pub n_theta: u32,
    pub n_phi: u32,
    pub n_space: u32,
    pub flags: u8,
    pub psi: Vec<f64>,
    pub phi: Vec<f64>,
}

impl Snapshot {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64 + 8 * (self.psi.len() + self.phi.len()));
        out.extend_from_slice(&MAGIC);
        out.push(VERSION);
        out.push(self.flags);
        out.extend_from_slice(&ENDIAN_MARKER.to_le_bytes());
        out.extend_from_slice(&self.config_hash.to_le_bytes());
        out.extend_from_slice(&self.step.to_le_bytes());
        out.extend_from_slice(&self.time.to_le_bytes());
        out.extend_from_slice(&self.alpha.to_le_bytes());
        out.extend_from_slice(&self.r_max.to_le_bytes());
        for v in [self.n_r, self.n_theta, self.n_phi, self.n_space] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&(self.psi.len() as u64).to_le_bytes());
        for v in &self.psi {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&(self.phi.len() as u64).to_le_bytes());
        for v in &self.phi {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, SnapshotError> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(4)?;
        if magic != MAGIC {
            return Err(SnapshotError::BadMagic);
        }
        let version = r.take(1)?[0];
        if version != VERSION {
            return Err(SnapshotError::BadVersion(version));
        }
        let flags = r.take(1)?[0];
        let endian = u32::from_le_bytes(r.take(4)?.try_into().unwrap());
        if endian != ENDIAN_MARKER {
            return Err(SnapshotError::BadEndian(endian));
        }
        let config_hash = r.u64()?;
        let step = r.u64()?;
        let time = r.f64()?;
        let alpha = r.f64()?;
        let r_max = r.f64()?;
        let n_r = r.u32()?;
        let n_theta = r.u32()?;
        let n_phi = r.u32()?;
        let n_space = r.u32()?;
        let psi = r.f64_vec()?;
        let phi = r.f64_vec()?;
        Ok(Snapshot {
            config_hash,
            step,
            time,
            alpha,
            r_max,
            n_r,
            n_theta,
            n_phi,
            n_space,
            flags,
            psi,
            phi,
        })
    }

    /// Rejects cross-configuration comparisons (mixed provenance).
    pub fn check_same_provenance(&self, other: &Snapshot) -> Result<(), SnapshotError> {
        if self.config_hash != other.config_hash {
            return Err(SnapshotError::HashMismatch {
                a: self.config_hash,
                b: other.config_hash,
            });
        }
        Ok(())
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], SnapshotError> {
        if self.pos + n > self.bytes.len() {
            return Err(SnapshotError::Truncated {
                needed: self.pos + n,
                got: self.bytes.len(),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, SnapshotError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, SnapshotError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, SnapshotError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64_vec(&mut self) -> Result<Vec<f64>, SnapshotError> {
        let n = self.u64()? as usize;
        let raw = self.take(8 * n)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}
