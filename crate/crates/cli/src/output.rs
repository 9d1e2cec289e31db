//! Result files: hashed CSV tables, atomic writes and the trajectory format.

use std::fs;
use std::io::Write;
use std::path::Path;

use entsamp_core::sampler::Trajectory;
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// Environment variable naming a fault to inject while writing outputs.
/// `before_rename` aborts the process after the temporary file is complete
/// but before it replaces the target.
pub const FAULT_ENV: &str = "ENTSAMP_FAULT_INJECT";

/// Trajectory file magic.
pub const TRAJECTORY_MAGIC: [u8; 4] = *b"ESTR";

/// A CSV table whose cells are already formatted.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Table {
            columns: columns.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    fn body(&self) -> Vec<u8> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(&self.columns).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        w.into_inner().expect("in-memory flush")
    }

    /// Header comment line followed by the CSV body.
    pub fn render(&self, config_sha256: &str, seed: u64) -> Vec<u8> {
        let body = self.body();
        let mut out = format!(
            "# config_sha256={config_sha256} seed={seed} body_sha256={}\n",
            hex::encode(Sha256::digest(&body))
        )
        .into_bytes();
        out.extend_from_slice(&body);
        out
    }
}

/// Shortest representation that parses back to the same `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

/// A parsed result file.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultFile {
    pub config_sha256: String,
    pub seed: u64,
    pub table: Table,
}

impl ResultFile {
    /// Parses `bytes` and checks the body hash; a tampered body is an error.
    pub fn parse(bytes: &[u8]) -> Result<Self, CliError> {
        let bad = |m: &str| CliError::Invariant(format!("result file: {m}"));
        let nl = bytes.iter().position(|&b| b == b'\n').ok_or_else(|| bad("missing header"))?;
        let header = std::str::from_utf8(&bytes[..nl]).map_err(|_| bad("header is not UTF-8"))?;
        let body = &bytes[nl + 1..];
        let mut config = None;
        let mut seed = None;
        let mut body_hash = None;
        for field in header.strip_prefix("# ").ok_or_else(|| bad("malformed header"))?.split(' ') {
            match field.split_once('=') {
                Some(("config_sha256", v)) => config = Some(v.to_string()),
                Some(("seed", v)) => seed = v.parse().ok(),
                Some(("body_sha256", v)) => body_hash = Some(v.to_string()),
                _ => return Err(bad("unknown header field")),
            }
        }
        let (config, seed, body_hash) = match (config, seed, body_hash) {
            (Some(c), Some(s), Some(b)) => (c, s, b),
            _ => return Err(bad("incomplete header")),
        };
        if hex::encode(Sha256::digest(body)) != body_hash {
            return Err(bad("body does not match its recorded hash"));
        }
        let mut r = csv::ReaderBuilder::new().from_reader(body);
        let columns = r
            .headers()
            .map_err(|e| bad(&e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        let rows = r
            .records()
            .map(|rec| rec.map(|r| r.iter().map(str::to_string).collect()))
            .collect::<Result<_, _>>()
            .map_err(|e| bad(&e.to_string()))?;
        Ok(ResultFile {
            config_sha256: config,
            seed,
            table: Table { columns, rows },
        })
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        Self::parse(&fs::read(path).map_err(|e| CliError::io(path, e))?)
    }

    /// Fails unless the file was produced from a config with this hash.
    pub fn check_config(&self, config_sha256: &str) -> Result<(), CliError> {
        if self.config_sha256 != config_sha256 {
            return Err(CliError::Invariant(format!(
                "result file was produced by config {} but {} was expected",
                self.config_sha256, config_sha256
            )));
        }
        Ok(())
    }

    /// Numeric column by name.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.table.columns.iter().position(|c| c == name)?;
        self.table.rows.iter().map(|r| r[i].parse().ok()).collect()
    }
}

/// Writes `bytes` to a temporary file next to `path`, runs `hook`, then
/// renames it over `path`. If the hook fails the temporary file is removed
/// and `path` is left as it was.
pub fn write_atomic_with<H>(path: &Path, bytes: &[u8], hook: H) -> Result<(), CliError>
where
    H: FnOnce(&Path) -> std::io::Result<()>,
{
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut tmp = tempfile::Builder::new()
        .prefix(".entsamp-")
        .suffix(".tmp")
        .tempfile_in(dir)
        .map_err(|e| CliError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| CliError::io(tmp.path(), e))?;
    tmp.as_file().sync_all().map_err(|e| CliError::io(tmp.path(), e))?;
    hook(tmp.path()).map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

/// [`write_atomic_with`] with the hook taken from [`FAULT_ENV`].
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    write_atomic_with(path, bytes, |_| {
        if std::env::var(FAULT_ENV).as_deref() == Ok("before_rename") {
            std::process::abort();
        }
        Ok(())
    })
}

/// 16-byte header (`ESTR`, then `u32` step count, path count and dimension)
/// followed by the states as little-endian `f64`, laid out
/// `[step][path][dim]`.
pub fn encode_trajectory(t: &Trajectory) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 8 * t.data.len());
    out.extend_from_slice(&TRAJECTORY_MAGIC);
    for n in [t.steps, t.paths, t.dim] {
        out.extend_from_slice(&(n as u32).to_le_bytes());
    }
    for x in &t.data {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

pub fn decode_trajectory(bytes: &[u8]) -> Result<Trajectory, CliError> {
    let bad = |m: &str| CliError::Invariant(format!("trajectory file: {m}"));
    if bytes.len() < 16 || bytes[..4] != TRAJECTORY_MAGIC {
        return Err(bad("bad magic"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize;
    let (steps, paths, dim) = (word(0), word(1), word(2));
    let n = steps
        .checked_mul(paths)
        .and_then(|v| v.checked_mul(dim))
        .ok_or_else(|| bad("size overflow"))?;
    if bytes.len() != 16 + 8 * n {
        return Err(bad("length does not match header"));
    }
    let data = bytes[16..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(Trajectory {
        steps,
        paths,
        dim,
        data,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> Table {
        let mut t = Table::new(&["eta", "mmse"]);
        t.push(vec![fmt_f64(0.1), fmt_f64(1.0 / 3.0)]);
        t.push(vec![fmt_f64(1e-300), fmt_f64(f64::MIN_POSITIVE)]);
        t
    }

    #[test]
    fn round_trip_is_exact() {
        let bytes = table().render("abc", 7);
        let f = ResultFile::parse(&bytes).unwrap();
        assert_eq!(f.seed, 7);
        assert_eq!(f.table, table());
        assert_eq!(f.column("mmse").unwrap()[0], 1.0 / 3.0);
        assert_eq!(f.column("eta").unwrap()[1], 1e-300);
    }

    #[test]
    fn tampering_is_detected() {
        let mut bytes = table().render("abc", 7);
        let n = bytes.len();
        bytes[n - 2] = b'9';
        assert!(ResultFile::parse(&bytes).is_err());
        let f = ResultFile::parse(&table().render("abc", 7)).unwrap();
        assert!(f.check_config("abd").is_err());
        assert!(f.check_config("abc").is_ok());
    }

    #[test]
    fn failed_hook_leaves_target_untouched() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv");
        fs::write(&path, b"old").unwrap();
        let r = write_atomic_with(&path, b"new contents", |_| Err(std::io::Error::other("injected")));
        assert!(r.is_err());
        assert_eq!(fs::read(&path).unwrap(), b"old");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
        write_atomic_with(&path, b"new", |_| Ok(())).unwrap();
        assert_eq!(fs::read(&path).unwrap(), b"new");
    }

    #[test]
    fn trajectory_round_trip() {
        let t = Trajectory {
            steps: 3,
            paths: 2,
            dim: 2,
            data: (0..12).map(|i| i as f64 * 0.5).collect(),
        };
        let bytes = encode_trajectory(&t);
        assert_eq!(bytes.len(), 16 + 96);
        assert_eq!(decode_trajectory(&bytes).unwrap(), t);
        assert!(decode_trajectory(&bytes[..20]).is_err());
    }
}
