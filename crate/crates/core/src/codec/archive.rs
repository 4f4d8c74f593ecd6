//! `CEMZ` container. See FORMAT.md at the repository root for the byte layout.

use crate::inr::{encode_checkpoint, Checkpoint};
use crate::preprocess::{CoordConvention, NormalizationMeta};
use crate::trainer::ModelState;

use super::CodecError;

pub const MAGIC: [u8; 4] = *b"CEMZ";
pub const VERSION: u32 = 1;
const SECTION_ENTRY: usize = 20;

/// Header fields needed to rebuild an MRC file around reconstructed data.
#[derive(Debug, Clone, PartialEq)]
pub struct GridInfo {
    pub dims: [u32; 3],
    pub start: [i32; 3],
    pub sampling: [i32; 3],
    pub cell: [f32; 3],
    pub cell_angles: [f32; 3],
    pub axis_map: [i32; 3],
    pub origin: [f32; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct FileRecord {
    pub name: String,
    pub file_id: u32,
    pub grid: GridInfo,
    pub meta: NormalizationMeta,
    /// Size in bytes of the MRC file that was compressed.
    pub original_size: u64,
    pub popcount: u64,
    /// DEFLATE-compressed occupancy bitmap.
    pub occupancy: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Archive {
    pub model: ModelState,
    pub files: Vec<FileRecord>,
}

impl Archive {
    /// Checks that latents and file records pair up one to one.
    pub fn validate(&self) -> Result<(), CodecError> {
        let mut record_ids: Vec<u32> = self.files.iter().map(|f| f.file_id).collect();
        let mut latent_ids: Vec<u32> = self.model.latents.ids().collect();
        record_ids.sort_unstable();
        latent_ids.sort_unstable();
        if record_ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(CodecError::CorruptArchive("duplicate file id".into()));
        }
        if record_ids != latent_ids {
            return Err(CodecError::CorruptArchive("file records and latent table disagree".into()));
        }
        let mut names: Vec<&str> = self.files.iter().map(|f| f.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(CodecError::CorruptArchive("duplicate file name".into()));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut sections = vec![encode_checkpoint(&self.model.params, &self.model.latents), self.metadata_bytes()];
        sections.extend(self.files.iter().map(|f| f.occupancy.clone()));

        let table_end = 12 + SECTION_ENTRY * sections.len();
        let total = table_end + sections.iter().map(Vec::len).sum::<usize>();
        let mut out = Vec::with_capacity(total);
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(sections.len() as u32).to_le_bytes());
        let mut offset = table_end as u64;
        for s in &sections {
            out.extend_from_slice(&offset.to_le_bytes());
            out.extend_from_slice(&(s.len() as u64).to_le_bytes());
            out.extend_from_slice(&crc32fast::hash(s).to_le_bytes());
            offset += s.len() as u64;
        }
        for s in &sections {
            out.extend_from_slice(s);
        }
        out
    }

    /// Parses an archive, verifying magic, version and every section checksum first.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CodecError> {
        let sections = read_sections(bytes)?;
        if sections.len() < 2 {
            return Err(CodecError::CorruptArchive(format!("{} sections, need at least 2", sections.len())));
        }
        let checkpoint =
            Checkpoint::from_bytes(sections[0]).map_err(|e| CodecError::CorruptArchive(format!("checkpoint: {e}")))?;
        let mut files = parse_metadata(sections[1])?;
        if files.len() != sections.len() - 2 {
            return Err(CodecError::CorruptArchive(format!(
                "{} file records but {} occupancy sections",
                files.len(),
                sections.len() - 2
            )));
        }
        for (f, blob) in files.iter_mut().zip(&sections[2..]) {
            f.occupancy = blob.to_vec();
        }
        let archive = Self { model: ModelState::from_checkpoint(checkpoint), files };
        archive.validate()?;
        Ok(archive)
    }

    fn metadata_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&(self.files.len() as u32).to_le_bytes());
        for f in &self.files {
            let name = f.name.as_bytes();
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name);
            out.extend_from_slice(&f.file_id.to_le_bytes());
            let g = &f.grid;
            put_u32s(&mut out, &g.dims);
            put_i32s(&mut out, &g.start);
            put_i32s(&mut out, &g.sampling);
            put_f32s(&mut out, &g.cell);
            put_f32s(&mut out, &g.cell_angles);
            put_i32s(&mut out, &g.axis_map);
            put_f32s(&mut out, &g.origin);
            out.extend_from_slice(&f.meta.threshold.to_le_bytes());
            out.push(f.meta.density_scale.is_some() as u8);
            out.extend_from_slice(&f.meta.density_scale.unwrap_or(0.0).to_le_bytes());
            out.push(f.meta.coords as u8);
            out.extend_from_slice(&f.original_size.to_le_bytes());
            out.extend_from_slice(&f.popcount.to_le_bytes());
        }
        out
    }
}

fn put_u32s(out: &mut Vec<u8>, v: &[u32; 3]) {
    v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes()));
}

fn put_i32s(out: &mut Vec<u8>, v: &[i32; 3]) {
    v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes()));
}

fn put_f32s(out: &mut Vec<u8>, v: &[f32; 3]) {
    v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes()));
}

fn read_sections(bytes: &[u8]) -> Result<Vec<&[u8]>, CodecError> {
    let corrupt = |m: &str| CodecError::CorruptArchive(m.to_string());
    if bytes.len() < 12 || bytes[..4] != MAGIC {
        return Err(corrupt("missing CEMZ magic"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(CodecError::UnsupportedVersion(version));
    }
    let count = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let table_end = count
        .checked_mul(SECTION_ENTRY)
        .and_then(|n| n.checked_add(12))
        .filter(|&n| n <= bytes.len())
        .ok_or_else(|| corrupt("section table runs past end of file"))?;
    let mut out = Vec::with_capacity(count);
    let mut expected = table_end as u64;
    for k in 0..count {
        let e = &bytes[12 + k * SECTION_ENTRY..12 + (k + 1) * SECTION_ENTRY];
        let offset = u64::from_le_bytes(e[0..8].try_into().unwrap());
        let len = u64::from_le_bytes(e[8..16].try_into().unwrap());
        let crc = u32::from_le_bytes(e[16..20].try_into().unwrap());
        // sections are stored back to back in table order
        let end = offset.checked_add(len).filter(|&end| end <= bytes.len() as u64);
        let Some(end) = end.filter(|_| offset == expected) else {
            return Err(CodecError::CorruptArchive(format!("section {k} out of place")));
        };
        expected = end;
        let section = &bytes[offset as usize..end as usize];
        if crc32fast::hash(section) != crc {
            return Err(CodecError::CorruptArchive(format!("checksum mismatch in section {k}")));
        }
        out.push(section);
    }
    if expected != bytes.len() as u64 {
        return Err(corrupt("trailing bytes after last section"));
    }
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CodecError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| CodecError::CorruptArchive("metadata section truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], CodecError> {
        Ok(self.take(N)?.try_into().unwrap())
    }

    fn u8(&mut self) -> Result<u8, CodecError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, CodecError> {
        self.array().map(u32::from_le_bytes)
    }

    fn u64(&mut self) -> Result<u64, CodecError> {
        self.array().map(u64::from_le_bytes)
    }

    fn f32(&mut self) -> Result<f32, CodecError> {
        self.array().map(f32::from_le_bytes)
    }

    fn u32x3(&mut self) -> Result<[u32; 3], CodecError> {
        Ok([self.u32()?, self.u32()?, self.u32()?])
    }

    fn i32x3(&mut self) -> Result<[i32; 3], CodecError> {
        let v = self.u32x3()?;
        Ok(v.map(|x| x as i32))
    }

    fn f32x3(&mut self) -> Result<[f32; 3], CodecError> {
        Ok([self.f32()?, self.f32()?, self.f32()?])
    }
}

fn parse_metadata(bytes: &[u8]) -> Result<Vec<FileRecord>, CodecError> {
    let mut c = Cursor { bytes, pos: 0 };
    let n = c.u32()? as usize;
    let mut files = Vec::with_capacity(n.min(1 << 16));
    for _ in 0..n {
        let len = c.u32()? as usize;
        let name = String::from_utf8(c.take(len)?.to_vec())
            .map_err(|_| CodecError::CorruptArchive("file name is not UTF-8".into()))?;
        let file_id = c.u32()?;
        let grid = GridInfo {
            dims: c.u32x3()?,
            start: c.i32x3()?,
            sampling: c.i32x3()?,
            cell: c.f32x3()?,
            cell_angles: c.f32x3()?,
            axis_map: c.i32x3()?,
            origin: c.f32x3()?,
        };
        let threshold = c.f32()?;
        let has_scale = c.u8()?;
        let scale = c.f32()?;
        let density_scale = match has_scale {
            0 => None,
            1 => Some(scale),
            v => return Err(CodecError::CorruptArchive(format!("bad scale flag {v}"))),
        };
        let coords = CoordConvention::from_u8(c.u8()?)
            .ok_or_else(|| CodecError::CorruptArchive("unknown coordinate convention".into()))?;
        files.push(FileRecord {
            name,
            file_id,
            grid,
            meta: NormalizationMeta { threshold, density_scale, coords },
            original_size: c.u64()?,
            popcount: c.u64()?,
            occupancy: Vec::new(),
        });
    }
    if c.pos != bytes.len() {
        return Err(CodecError::CorruptArchive("trailing bytes in metadata section".into()));
    }
    Ok(files)
}
