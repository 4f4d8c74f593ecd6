//! `INRC` checkpoint blob: architecture, parameters and latent table.
//!
//! ```text
//! "INRC" | version u32
//! width_count u32 | widths u32 x width_count
//! residual_count u32 | residual positions u32 x residual_count
//! param_count u64 | params f32 x param_count   (per layer: weight row-major, then bias)
//! file_count u32 | file_count x (file_id u32 | latent f32 x 64)
//! ```

use super::arch::Arch;
use super::encoding::LATENT_DIM;
use super::latent::LatentTable;
use super::mlp::MlpParams;
use super::InrError;

const MAGIC: [u8; 4] = *b"INRC";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: MlpParams<f32>,
    pub latents: LatentTable<f32>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        encode_checkpoint(&self.params, &self.latents)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, InrError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(InrError::BadCheckpoint("missing INRC magic".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(InrError::BadCheckpoint(format!("unsupported version {version}")));
        }
        let n = r.u32()? as usize;
        let widths = (0..n).map(|_| r.u32().map(|v| v as usize)).collect::<Result<Vec<_>, _>>()?;
        let n = r.u32()? as usize;
        let res = (0..n).map(|_| r.u32().map(|v| v as usize)).collect::<Result<Vec<_>, _>>()?;
        let arch = Arch::from_widths(&widths, &res)?;
        let count = r.u64()? as usize;
        if count != arch.param_count() {
            return Err(InrError::BadCheckpoint(format!(
                "{count} parameters stored, architecture {arch} needs {}",
                arch.param_count()
            )));
        }
        let mut params = MlpParams::<f32>::zeros(&arch);
        for t in params.tensors_mut() {
            for v in t.iter_mut() {
                *v = r.f32()?;
            }
        }
        let files = r.u32()? as usize;
        let mut entries = Vec::with_capacity(files.min(1 << 16));
        for _ in 0..files {
            let id = r.u32()?;
            let v = (0..LATENT_DIM).map(|_| r.f32()).collect::<Result<Vec<_>, _>>()?;
            entries.push((id, v));
        }
        if r.pos != bytes.len() {
            return Err(InrError::BadCheckpoint("trailing bytes".into()));
        }
        Ok(Self { params, latents: LatentTable::from_entries(entries)? })
    }
}

/// Serializes borrowed parts without building a [`Checkpoint`].
pub fn encode_checkpoint(params: &MlpParams<f32>, latents: &LatentTable<f32>) -> Vec<u8> {
    let arch = params.arch();
    let mut out = Vec::with_capacity(64 + 4 * params.param_count());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let widths = arch.widths();
    out.extend_from_slice(&(widths.len() as u32).to_le_bytes());
    for w in widths {
        out.extend_from_slice(&(w as u32).to_le_bytes());
    }
    let res = arch.residual_positions();
    out.extend_from_slice(&(res.len() as u32).to_le_bytes());
    for p in res {
        out.extend_from_slice(&(p as u32).to_le_bytes());
    }
    out.extend_from_slice(&(params.param_count() as u64).to_le_bytes());
    for t in params.tensors() {
        for v in t {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out.extend_from_slice(&(latents.len() as u32).to_le_bytes());
    for (id, v) in latents.entries() {
        out.extend_from_slice(&id.to_le_bytes());
        for x in v {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], InrError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| InrError::BadCheckpoint("truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, InrError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, InrError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32, InrError> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}
