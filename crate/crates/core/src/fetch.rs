//! Download of public EMDB maps.

use std::io::Read;

use flate2::read::GzDecoder;
use thiserror::Error;

use crate::mrc::{read_mrc, MrcError, VoxelGrid};

pub const EMDB_BASE: &str = "https://ftp.ebi.ac.uk/pub/databases/emdb/structures";

#[derive(Debug, Error)]
pub enum FetchError {
    #[error("invalid accession {0:?}, expected EMD-NNNN")]
    InvalidAccession(String),
    #[error("network error fetching {url}: {message}")]
    Network { url: String, message: String },
    #[error("not found: {url}")]
    NotFound { url: String },
    #[error("download from {url} is not a valid gzipped map: {message}")]
    Corrupt { url: String, message: String },
}

/// Digits of an accession written `EMD-1234`, `emd_1234` or `1234`.
pub fn parse_accession(s: &str) -> Result<String, FetchError> {
    let t = s.trim();
    let digits = t
        .strip_prefix("EMD-")
        .or_else(|| t.strip_prefix("emd-"))
        .or_else(|| t.strip_prefix("EMD_"))
        .or_else(|| t.strip_prefix("emd_"))
        .unwrap_or(t);
    if (4..=6).contains(&digits.len()) && digits.bytes().all(|b| b.is_ascii_digit()) {
        Ok(digits.to_string())
    } else {
        Err(FetchError::InvalidAccession(s.to_string()))
    }
}

pub fn map_url(base: &str, digits: &str) -> String {
    format!("{}/EMD-{digits}/map/emd_{digits}.map.gz", base.trim_end_matches('/'))
}

/// Decompressed MRC bytes and the parsed grid.
#[derive(Debug)]
pub struct Fetched {
    pub url: String,
    pub bytes: Vec<u8>,
    pub grid: VoxelGrid,
}

/// Downloads and validates one map from `base` (normally [`EMDB_BASE`]).
pub fn fetch_map(accession: &str, base: &str) -> Result<Fetched, FetchError> {
    let digits = parse_accession(accession)?;
    let url = map_url(base, &digits);
    let response = match ureq::get(&url).call() {
        Ok(r) => r,
        Err(ureq::Error::StatusCode(404)) => return Err(FetchError::NotFound { url }),
        Err(e) => return Err(FetchError::Network { url, message: e.to_string() }),
    };
    let mut gz = Vec::new();
    response
        .into_body()
        .into_reader()
        .read_to_end(&mut gz)
        .map_err(|e| FetchError::Network { url: url.clone(), message: e.to_string() })?;
    let bytes = gunzip(&gz).map_err(|message| FetchError::Corrupt { url: url.clone(), message })?;
    let grid =
        read_mrc(&bytes).map_err(|e: MrcError| FetchError::Corrupt { url: url.clone(), message: e.to_string() })?;
    Ok(Fetched { url, bytes, grid })
}

fn gunzip(gz: &[u8]) -> Result<Vec<u8>, String> {
    let mut out = Vec::new();
    GzDecoder::new(gz).read_to_end(&mut out).map_err(|e| e.to_string())?;
    Ok(out)
}
