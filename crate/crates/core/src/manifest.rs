//! Ordered key=value manifests and the per-run manifest.
//!
//! The kv format is one `key = value` pair per line, `#` comments, no
//! sections. Writers emit pairs in the order given; readers preserve order
//! and reject duplicate keys. Used for model checkpoints and run manifests,
//! where byte-stable output matters.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    let digest = h.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        let _ = write!(out, "{b:02x}");
    }
    out
}

pub fn render_kv(pairs: &[(String, String)]) -> String {
    let mut out = String::new();
    for (k, v) in pairs {
        debug_assert!(!k.contains('=') && !k.contains('\n'), "bad key {k:?}");
        debug_assert!(!v.contains('\n'), "bad value {v:?}");
        let _ = writeln!(out, "{k} = {v}");
    }
    out
}

pub fn write_kv(path: &Path, pairs: &[(String, String)]) -> Result<()> {
    std::fs::write(path, render_kv(pairs)).map_err(|e| Error::io(path, e))
}

pub fn parse_kv(text: &str, path: &Path) -> Result<Vec<(String, String)>> {
    let mut pairs: Vec<(String, String)> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::BadManifest {
                path: path.to_path_buf(),
                detail: format!("line {}: expected `key = value`, got {raw:?}", lineno + 1),
            });
        };
        let k = k.trim().to_string();
        let v = v.trim().to_string();
        if k.is_empty() {
            return Err(Error::BadManifest {
                path: path.to_path_buf(),
                detail: format!("line {}: empty key", lineno + 1),
            });
        }
        if pairs.iter().any(|(seen, _)| *seen == k) {
            return Err(Error::BadManifest {
                path: path.to_path_buf(),
                detail: format!("duplicate key {k:?}"),
            });
        }
        pairs.push((k, v));
    }
    Ok(pairs)
}

pub fn read_kv(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_kv(&text, path)
}

/// Typed access over parsed pairs. Tracks which keys were read so callers can
/// reject unknown keys.
pub struct KvMap {
    path: PathBuf,
    pairs: Vec<(String, String)>,
    used: Vec<bool>,
}

impl KvMap {
    pub fn new(path: &Path, pairs: Vec<(String, String)>) -> KvMap {
        let used = vec![false; pairs.len()];
        KvMap {
            path: path.to_path_buf(),
            pairs,
            used,
        }
    }

    pub fn load(path: &Path) -> Result<KvMap> {
        Ok(KvMap::new(path, read_kv(path)?))
    }

    fn bad(&self, detail: String) -> Error {
        Error::BadManifest {
            path: self.path.clone(),
            detail,
        }
    }

    pub fn opt_str(&mut self, key: &str) -> Option<&str> {
        for (i, (k, v)) in self.pairs.iter().enumerate() {
            if k == key {
                self.used[i] = true;
                return Some(v);
            }
        }
        None
    }

    pub fn str(&mut self, key: &str) -> Result<String> {
        match self.opt_str(key) {
            Some(v) => Ok(v.to_string()),
            None => Err(self.bad(format!("missing key {key:?}"))),
        }
    }

    pub fn parse<T: std::str::FromStr>(&mut self, key: &str) -> Result<T> {
        let v = self.str(key)?;
        v.parse::<T>()
            .map_err(|_| self.bad(format!("key {key:?}: cannot parse {v:?}")))
    }

    /// Comma-separated list of parseable values. Empty string = empty list.
    pub fn parse_list<T: std::str::FromStr>(&mut self, key: &str) -> Result<Vec<T>> {
        let v = self.str(key)?;
        if v.is_empty() {
            return Ok(Vec::new());
        }
        v.split(',')
            .map(|s| {
                s.trim()
                    .parse::<T>()
                    .map_err(|_| self.bad(format!("key {key:?}: cannot parse element {s:?}")))
            })
            .collect()
    }

    /// Errors if any key was never read; catches format drift in both
    /// directions.
    pub fn finish(self) -> Result<()> {
        for ((k, _), used) in self.pairs.iter().zip(&self.used) {
            if !used {
                return Err(Error::BadManifest {
                    path: self.path.clone(),
                    detail: format!("unknown key {k:?}"),
                });
            }
        }
        Ok(())
    }
}

pub const RUN_MANIFEST_FILE: &str = "run.manifest";
pub const TIMING_FILE: &str = "timing.txt";

/// What a subcommand ran with. Deliberately excludes wall-clock data: two
/// runs with equal seeds and inputs must produce identical manifest bytes.
/// Timing goes to a sibling `timing.txt` instead.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    pub seed: u64,
    /// sha256 over the resolved config snapshot.
    pub config_sha256: String,
    /// (role, path) pairs for inputs, as given on the command line.
    pub inputs: Vec<(String, String)>,
    /// Paths relative to the run directory.
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn pairs(&self) -> Vec<(String, String)> {
        let mut p = vec![
            ("tool".to_string(), self.tool.clone()),
            ("version".to_string(), self.version.clone()),
            ("subcommand".to_string(), self.subcommand.clone()),
            ("seed".to_string(), self.seed.to_string()),
            ("config_sha256".to_string(), self.config_sha256.clone()),
        ];
        for (role, path) in &self.inputs {
            p.push((format!("input.{role}"), path.clone()));
        }
        p.push(("outputs".to_string(), self.outputs.join(",")));
        p
    }

    pub fn save(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(RUN_MANIFEST_FILE);
        write_kv(&path, &self.pairs())?;
        Ok(path)
    }

    pub fn load(dir: &Path) -> Result<RunManifest> {
        let path = dir.join(RUN_MANIFEST_FILE);
        let mut kv = KvMap::load(&path)?;
        let tool = kv.str("tool")?;
        let version = kv.str("version")?;
        let subcommand = kv.str("subcommand")?;
        let seed = kv.parse::<u64>("seed")?;
        let config_sha256 = kv.str("config_sha256")?;
        let outputs: Vec<String> = kv
            .str("outputs")?
            .split(',')
            .filter(|s| !s.is_empty())
            .map(|s| s.to_string())
            .collect();
        let inputs = kv
            .pairs
            .iter()
            .enumerate()
            .filter(|(_, (k, _))| k.starts_with("input."))
            .map(|(i, (k, v))| (i, (k["input.".len()..].to_string(), v.clone())))
            .collect::<Vec<_>>();
        for (i, _) in &inputs {
            kv.used[*i] = true;
        }
        let inputs = inputs.into_iter().map(|(_, kv)| kv).collect();
        kv.finish()?;
        Ok(RunManifest {
            tool,
            version,
            subcommand,
            seed,
            config_sha256,
            inputs,
            outputs,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kv_round_trips_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.manifest");
        let pairs = vec![
            ("zeta".to_string(), "1".to_string()),
            ("alpha".to_string(), "two words".to_string()),
            ("mid".to_string(), String::new()),
        ];
        write_kv(&path, &pairs).unwrap();
        assert_eq!(read_kv(&path).unwrap(), pairs);
    }

    #[test]
    fn kv_rejects_duplicates_and_garbage() {
        let p = Path::new("test.manifest");
        assert!(parse_kv("a = 1\na = 2\n", p).is_err());
        assert!(parse_kv("just some text\n", p).is_err());
        assert!(parse_kv("= 1\n", p).is_err());
        let ok = parse_kv("# comment\n\na = 1\n", p).unwrap();
        assert_eq!(ok.len(), 1);
    }

    #[test]
    fn kvmap_flags_unknown_keys() {
        let p = Path::new("test.manifest");
        let pairs = parse_kv("a = 1\nb = 2\n", p).unwrap();
        let mut kv = KvMap::new(p, pairs);
        assert_eq!(kv.parse::<u32>("a").unwrap(), 1);
        assert!(kv.finish().is_err());
    }

    #[test]
    fn kvmap_parses_lists() {
        let p = Path::new("test.manifest");
        let pairs = parse_kv("xs = 1, 2, 3\nempty = \n", p).unwrap();
        let mut kv = KvMap::new(p, pairs);
        assert_eq!(kv.parse_list::<usize>("xs").unwrap(), vec![1, 2, 3]);
        assert_eq!(kv.parse_list::<usize>("empty").unwrap(), Vec::<usize>::new());
        kv.finish().unwrap();
    }

    #[test]
    fn run_manifest_round_trips_and_is_stable() {
        let dir = tempfile::tempdir().unwrap();
        let m = RunManifest {
            tool: "multifuse".into(),
            version: "0.1.0".into(),
            subcommand: "train".into(),
            seed: 42,
            config_sha256: sha256_hex(b"config"),
            inputs: vec![("cohort".into(), "/data/cohort".into())],
            outputs: vec!["summary.json".into(), "folds/fold-0/report.json".into()],
        };
        m.save(dir.path()).unwrap();
        let bytes1 = std::fs::read(dir.path().join(RUN_MANIFEST_FILE)).unwrap();
        m.save(dir.path()).unwrap();
        let bytes2 = std::fs::read(dir.path().join(RUN_MANIFEST_FILE)).unwrap();
        assert_eq!(bytes1, bytes2);
        assert_eq!(RunManifest::load(dir.path()).unwrap(), m);
    }

    #[test]
    fn sha256_matches_known_vector() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
