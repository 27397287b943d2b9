//! Key=value config files merged under CLI flags: a flag that was given on
//! the command line wins, then the config file, then the built-in default.

use std::collections::HashMap;
use std::path::Path;

#[derive(Debug, Default, Clone)]
pub struct FileConfig {
    values: HashMap<String, String>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, String> {
        let Some(path) = path else { return Ok(FileConfig::default()) };
        let text = std::fs::read_to_string(path).map_err(|e| format!("config {}: {e}", path.display()))?;
        let mut values = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(format!("config {} line {}: expected key=value", path.display(), i + 1));
            };
            values.insert(k.trim().to_string(), v.trim().to_string());
        }
        Ok(FileConfig { values })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|s| s.as_str())
    }

    /// CLI flag if present, else config value, else default.
    pub fn resolve<T: std::str::FromStr + Clone>(&self, flag: &Option<T>, key: &str, default: T) -> Result<T, String> {
        if let Some(v) = flag {
            return Ok(v.clone());
        }
        match self.get(key) {
            Some(raw) => raw
                .parse()
                .map_err(|_| format!("config key {key}: cannot parse {raw:?}")),
            None => Ok(default),
        }
    }

    pub fn resolve_opt<T: std::str::FromStr + Clone>(&self, flag: &Option<T>, key: &str) -> Result<Option<T>, String> {
        if let Some(v) = flag {
            return Ok(Some(v.clone()));
        }
        match self.get(key) {
            Some(raw) => raw
                .parse()
                .map(Some)
                .map_err(|_| format!("config key {key}: cannot parse {raw:?}")),
            None => Ok(None),
        }
    }
}

/// Parse `1..5` or `1,3,7` into sweep points.
pub fn parse_npos(spec: &str) -> Result<Vec<usize>, String> {
    let spec = spec.trim();
    if let Some((a, b)) = spec.split_once("..") {
        let lo: usize = a.trim().parse().map_err(|_| format!("bad range start {a:?}"))?;
        let hi: usize = b.trim().parse().map_err(|_| format!("bad range end {b:?}"))?;
        if lo == 0 || hi < lo {
            return Err(format!("bad n_pos range {spec:?}"));
        }
        Ok((lo..=hi).collect())
    } else {
        spec.split(',')
            .map(|v| {
                v.trim()
                    .parse::<usize>()
                    .map_err(|_| format!("bad n_pos value {v:?}"))
                    .and_then(|n| if n == 0 { Err("n_pos 0".into()) } else { Ok(n) })
            })
            .collect()
    }
}

pub fn parse_usize_list(spec: &str) -> Result<Vec<usize>, String> {
    spec.split(',')
        .map(|v| v.trim().parse::<usize>().map_err(|_| format!("bad value {v:?}")))
        .collect()
}
