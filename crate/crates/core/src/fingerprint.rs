//! Content hashes used to tie stage outputs back to the corpus they came from.

use std::fs::File;
use std::io::{self, Read};
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::events::{write_spadl_writer, GameStream};

/// SHA-256 of the corpus in canonical CSV form, hex encoded.
pub fn corpus_fingerprint(games: &[GameStream]) -> String {
    let mut buf = Vec::new();
    write_spadl_writer(&mut buf, games).expect("writing to memory cannot fail");
    bytes_sha256(&buf)
}

pub fn bytes_sha256(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_sha256(path: impl AsRef<Path>) -> io::Result<String> {
    let mut file = File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 8192];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}
