//! Run configuration: built-in defaults, then a flat `key = value` file, then flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

pub const DEFAULT_THRESHOLD: f64 = 0.96;
pub const DEFAULT_FLOOR: f64 = 1e-3;
pub const DEFAULT_K: usize = 10;
pub const DEFAULT_CUTOFFS: [usize; 2] = [5, 10];
pub const DEFAULT_METHOD: &str = "bfs";

/// Values read from a config file; every key is optional.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FileConfig {
    pub whiten_threshold: Option<f64>,
    pub use_ica: Option<bool>,
    pub variance_floor: Option<f64>,
    pub n_max: Option<usize>,
    pub k: Option<usize>,
    pub seed: Option<u64>,
    pub cutoffs: Option<Vec<usize>>,
    pub method: Option<String>,
    pub shuffle_seed: Option<u64>,
    pub gain: Option<String>,
    pub include_leaf_score: Option<bool>,
    pub depth_normalize: Option<bool>,
}

pub fn parse_list(text: &str) -> Result<Vec<usize>, String> {
    text.split(',')
        .map(|s| s.trim().parse::<usize>().map_err(|e| format!("bad list item `{s}`: {e}")))
        .collect()
}

fn parse_bool(v: &str) -> Result<bool, String> {
    match v {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        other => Err(format!("expected a boolean, got `{other}`")),
    }
}

fn parse_num<T: std::str::FromStr>(v: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>().map_err(|e| format!("`{v}`: {e}"))
}

impl FileConfig {
    /// Parses `key = value` lines; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut c = FileConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("config line {}: expected key = value", i + 1))?;
            let (key, v) = (key.trim(), value.trim());
            let res: Result<(), String> = (|| {
                match key {
                    "whiten_threshold" => c.whiten_threshold = Some(parse_num(v)?),
                    "use_ica" => c.use_ica = Some(parse_bool(v)?),
                    "variance_floor" => c.variance_floor = Some(parse_num(v)?),
                    "n_max" => c.n_max = Some(parse_num(v)?),
                    "k" => c.k = Some(parse_num(v)?),
                    "seed" => c.seed = Some(parse_num(v)?),
                    "cutoffs" => c.cutoffs = Some(parse_list(v)?),
                    "method" => c.method = Some(v.to_owned()),
                    "shuffle_seed" => c.shuffle_seed = Some(parse_num(v)?),
                    "gain" => c.gain = Some(v.to_owned()),
                    "include_leaf_score" => c.include_leaf_score = Some(parse_bool(v)?),
                    "depth_normalize" => c.depth_normalize = Some(parse_bool(v)?),
                    other => return Err(format!("unknown key `{other}`")),
                }
                Ok(())
            })();
            res.map_err(|e| format!("config line {}: {e}", i + 1))?;
        }
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        Self::parse(&text)
    }
}

/// Fully resolved settings for one run, logged to stderr as a single JSON line.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub subcommand: &'static str,
    pub paths: BTreeMap<&'static str, PathBuf>,
    pub whiten_threshold: f64,
    pub use_ica: bool,
    pub variance_floor: f64,
    pub n_max: Option<usize>,
    pub k: usize,
    pub seed: u64,
    pub cutoffs: Vec<usize>,
    pub method: String,
    pub shuffle_seed: Option<u64>,
    pub gain: String,
    pub include_leaf_score: bool,
    pub depth_normalize: bool,
}

impl RunConfig {
    pub fn from_file(subcommand: &'static str, file: &FileConfig) -> Self {
        Self {
            subcommand,
            paths: BTreeMap::new(),
            whiten_threshold: file.whiten_threshold.unwrap_or(DEFAULT_THRESHOLD),
            use_ica: file.use_ica.unwrap_or(true),
            variance_floor: file.variance_floor.unwrap_or(DEFAULT_FLOOR),
            n_max: file.n_max,
            k: file.k.unwrap_or(DEFAULT_K),
            seed: file.seed.unwrap_or(0),
            cutoffs: file.cutoffs.clone().unwrap_or_else(|| DEFAULT_CUTOFFS.to_vec()),
            method: file.method.clone().unwrap_or_else(|| DEFAULT_METHOD.to_owned()),
            shuffle_seed: file.shuffle_seed,
            gain: file.gain.clone().unwrap_or_else(|| "linear".to_owned()),
            include_leaf_score: file.include_leaf_score.unwrap_or(false),
            depth_normalize: file.depth_normalize.unwrap_or(false),
        }
    }

    pub fn path(&mut self, name: &'static str, p: &Option<PathBuf>) {
        if let Some(p) = p {
            self.paths.insert(name, p.clone());
        }
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = RunConfig::from_file("build", &FileConfig::default());
        assert_eq!(c.whiten_threshold, 0.96);
        assert!(c.use_ica);
        assert_eq!(c.variance_floor, 1e-3);
        assert_eq!(c.n_max, None);
        assert_eq!(c.seed, 0);
        assert_eq!(c.cutoffs, vec![5, 10]);
    }

    #[test]
    fn parses_file() {
        let text = "# comment\n\nwhiten_threshold = 0.9\nuse_ica=false\ncutoffs = 1, 3\nn_max=7\n";
        let f = FileConfig::parse(text).unwrap();
        assert_eq!(f.whiten_threshold, Some(0.9));
        assert_eq!(f.use_ica, Some(false));
        assert_eq!(f.cutoffs, Some(vec![1, 3]));
        assert_eq!(f.n_max, Some(7));
    }

    #[test]
    fn rejects_bad_lines() {
        assert!(FileConfig::parse("nonsense").unwrap_err().contains("line 1"));
        assert!(FileConfig::parse("k = 1\nbogus = 2").unwrap_err().contains("line 2"));
        assert!(FileConfig::parse("use_ica = maybe").is_err());
        assert!(FileConfig::parse("k = -1").is_err());
    }

    #[test]
    fn json_line_is_single_line() {
        let mut c = RunConfig::from_file("query", &FileConfig::default());
        c.path("tree", &Some(PathBuf::from("t.cwtr")));
        let line = c.to_json_line();
        assert!(!line.contains('\n'));
        assert!(line.contains("\"tree\":\"t.cwtr\""));
    }
}
