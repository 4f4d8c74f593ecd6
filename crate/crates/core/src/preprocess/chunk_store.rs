//! On-disk chunked store of normalized training points.
//!
//! Layout (all little-endian):
//!
//! ```text
//! "CHNK" | version u32 | file_id u32 | chunk_size u64 | chunk_count u64
//! chunk_count x ( record_count u64 | record_count x (x f32, y f32, z f32, d f32) )
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use super::PreprocessError;

const MAGIC: [u8; 4] = *b"CHNK";
const VERSION: u32 = 1;
const HEADER_LEN: u64 = 28;
const RECORD_LEN: usize = 16;

/// A training point: normalized coordinates in [0, 1] and normalized density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointRecord {
    pub xyz: [f32; 3],
    pub density: f32,
}

#[derive(Debug, Clone)]
pub struct PointChunkStore {
    path: PathBuf,
    file_id: u32,
    chunk_size: u64,
    /// (byte offset of the record count, record count) per chunk
    chunks: Vec<(u64, u64)>,
}

impl PointChunkStore {
    /// Streams `records` into a new store file at `path`.
    pub fn create<I>(
        path: impl AsRef<Path>,
        file_id: u32,
        chunk_size: usize,
        records: I,
    ) -> Result<Self, PreprocessError>
    where
        I: IntoIterator<Item = PointRecord>,
    {
        if chunk_size == 0 {
            return Err(PreprocessError::InvalidChunkSize);
        }
        let path = path.as_ref().to_path_buf();
        let mut w = BufWriter::new(File::create(&path)?);
        w.write_all(&MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&file_id.to_le_bytes())?;
        w.write_all(&(chunk_size as u64).to_le_bytes())?;
        // chunk count is patched once known
        w.write_all(&0u64.to_le_bytes())?;

        let mut chunks = Vec::new();
        let mut offset = HEADER_LEN;
        let mut pending: Vec<u8> = Vec::with_capacity(chunk_size.min(1 << 16) * RECORD_LEN);
        let mut pending_count = 0u64;
        let mut flush = |w: &mut BufWriter<File>, buf: &mut Vec<u8>, count: &mut u64| -> std::io::Result<()> {
            w.write_all(&count.to_le_bytes())?;
            w.write_all(buf)?;
            chunks.push((offset, *count));
            offset += 8 + buf.len() as u64;
            buf.clear();
            *count = 0;
            Ok(())
        };
        for rec in records {
            for v in rec.xyz.iter().chain(std::iter::once(&rec.density)) {
                pending.extend_from_slice(&v.to_le_bytes());
            }
            pending_count += 1;
            if pending_count == chunk_size as u64 {
                flush(&mut w, &mut pending, &mut pending_count)?;
            }
        }
        if pending_count > 0 {
            flush(&mut w, &mut pending, &mut pending_count)?;
        }
        let mut file = w.into_inner().map_err(|e| e.into_error())?;
        file.seek(SeekFrom::Start(20))?;
        file.write_all(&(chunks.len() as u64).to_le_bytes())?;
        file.sync_all()?;
        Ok(Self { path, file_id, chunk_size: chunk_size as u64, chunks })
    }

    pub fn open(path: impl AsRef<Path>) -> Result<Self, PreprocessError> {
        let path = path.as_ref().to_path_buf();
        let file = File::open(&path)?;
        let file_len = file.metadata()?.len();
        let mut r = BufReader::new(file);
        let mut head = [0u8; HEADER_LEN as usize];
        r.read_exact(&mut head).map_err(|_| PreprocessError::BadChunkStore("file shorter than header".into()))?;
        if head[0..4] != MAGIC {
            return Err(PreprocessError::BadChunkStore("missing CHNK magic".into()));
        }
        let version = u32::from_le_bytes(head[4..8].try_into().unwrap());
        if version != VERSION {
            return Err(PreprocessError::BadChunkStore(format!("unsupported version {version}")));
        }
        let file_id = u32::from_le_bytes(head[8..12].try_into().unwrap());
        let chunk_size = u64::from_le_bytes(head[12..20].try_into().unwrap());
        let count = u64::from_le_bytes(head[20..28].try_into().unwrap());
        let mut chunks = Vec::with_capacity(count.min(1 << 20) as usize);
        let mut offset = HEADER_LEN;
        for _ in 0..count {
            let mut b = [0u8; 8];
            r.seek(SeekFrom::Start(offset))?;
            r.read_exact(&mut b).map_err(|_| PreprocessError::BadChunkStore("truncated chunk table".into()))?;
            let n = u64::from_le_bytes(b);
            if n == 0 || n > chunk_size {
                return Err(PreprocessError::BadChunkStore(format!("chunk with {n} records")));
            }
            chunks.push((offset, n));
            offset += 8 + n * RECORD_LEN as u64;
        }
        if offset != file_len {
            return Err(PreprocessError::BadChunkStore("file length does not match chunk table".into()));
        }
        Ok(Self { path, file_id, chunk_size, chunks })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn file_id(&self) -> u32 {
        self.file_id
    }

    pub fn chunk_size(&self) -> usize {
        self.chunk_size as usize
    }

    pub fn chunk_count(&self) -> usize {
        self.chunks.len()
    }

    pub fn chunk_len(&self, k: usize) -> usize {
        self.chunks[k].1 as usize
    }

    pub fn total_records(&self) -> usize {
        self.chunks.iter().map(|c| c.1 as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    /// Global index of the first record in chunk `k`.
    pub fn chunk_start(&self, k: usize) -> usize {
        k * self.chunk_size as usize
    }

    /// Reads one chunk. Opens its own handle, so distinct chunks can be read
    /// from several threads.
    pub fn read_chunk(&self, k: usize) -> Result<Vec<PointRecord>, PreprocessError> {
        let (offset, n) = *self.chunks.get(k).ok_or_else(|| PreprocessError::BadChunkStore(format!("no chunk {k}")))?;
        let mut f = File::open(&self.path)?;
        f.seek(SeekFrom::Start(offset + 8))?;
        let mut buf = vec![0u8; n as usize * RECORD_LEN];
        f.read_exact(&mut buf)?;
        Ok(buf
            .chunks_exact(RECORD_LEN)
            .map(|c| {
                let v = |j: usize| f32::from_le_bytes(c[4 * j..4 * j + 4].try_into().unwrap());
                PointRecord { xyz: [v(0), v(1), v(2)], density: v(3) }
            })
            .collect())
    }

    pub fn read_all(&self) -> Result<Vec<PointRecord>, PreprocessError> {
        let mut out = Vec::with_capacity(self.total_records());
        for k in 0..self.chunk_count() {
            out.extend(self.read_chunk(k)?);
        }
        Ok(out)
    }
}
