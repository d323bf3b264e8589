use std::fs;
use std::path::Path;

use epiline::estimator::EstimateConfig;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OverlayStyle {
    /// RGB of the estimated epipolar lines.
    pub estimate_color: [u8; 3],
    /// RGB of the ground-truth lines drawn with `--truth`.
    pub truth_color: [u8; 3],
}

impl Default for OverlayStyle {
    fn default() -> Self {
        OverlayStyle {
            estimate_color: [40, 90, 255],
            truth_color: [30, 200, 60],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalOptions {
    /// Minimum distance between sampled points in both images, px.
    pub separation: f64,
    /// Gaussian noise added to the sampled points, px.
    pub point_noise: f64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            separation: 30.0,
            point_noise: 0.0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    pub estimate: EstimateConfig,
    pub eval: EvalOptions,
    pub overlay: OverlayStyle,
}

impl CliConfig {
    /// Defaults, then the JSON file, then `key=value` overrides in order.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<CliConfig, CliError> {
        let mut value = serde_json::to_value(CliConfig::default()).expect("config serializes");
        if let Some(p) = path {
            let text = fs::read_to_string(p).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?;
            let file: Value = serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?;
            // unknown keys are caught by the typed parse below
            serde_json::from_value::<CliConfig>(file.clone()).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?;
            merge(&mut value, file);
        }
        for ov in overrides {
            let (key, raw) = ov
                .split_once('=')
                .ok_or_else(|| CliError::Input(format!("override {ov:?} is not key=value")))?;
            let parsed = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
            set_path(&mut value, key, parsed)?;
        }
        serde_json::from_value(value).map_err(|e| CliError::Input(format!("config: {e}")))
    }
}

fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                merge(b.entry(k).or_insert(Value::Null), v);
            }
        }
        (b, p) => *b = p,
    }
}

fn set_path(root: &mut Value, key: &str, v: Value) -> Result<(), CliError> {
    let mut cur = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| CliError::Input(format!("config key {key:?}: {} is not a section", parts[..i].join("."))))?;
        if !obj.contains_key(*part) {
            return Err(CliError::Input(format!("unknown config key {key:?}")));
        }
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), v);
            return Ok(());
        }
        cur = obj.get_mut(*part).expect("checked above");
    }
    unreachable!("split yields at least one part")
}

fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    match v {
        Value::Object(m) => {
            for (k, child) in m {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, child, out);
            }
        }
        Value::Null => out.push((prefix.to_string(), "null (3 x image width)".to_string())),
        other => out.push((prefix.to_string(), other.to_string())),
    }
}

/// Every config key with its default, one per line.
pub fn keys_help() -> String {
    let mut rows = Vec::new();
    flatten("", &serde_json::to_value(CliConfig::default()).expect("config serializes"), &mut rows);
    let width = rows.iter().map(|r| r.0.len()).max().unwrap_or(0);
    let mut out = String::from("Config keys (JSON file via --config, or --set key=value):\n");
    for (k, v) in rows {
        out.push_str(&format!("  {k:<width$}  {v}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_and_unknown_keys() {
        let c = CliConfig::load(None, &["estimate.k_mutual=3".into(), "estimate.stereo.monotonic=false".into()]).unwrap();
        assert_eq!(c.estimate.k_mutual, 3);
        assert!(!c.estimate.stereo.monotonic);
        assert!(CliConfig::load(None, &["estimate.nope=1".into()]).is_err());
        assert!(CliConfig::load(None, &["estimate.k_mutual".into()]).is_err());

        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        fs::write(&p, r#"{"estimate": {"pencil": {"angles": 90}}}"#).unwrap();
        let c = CliConfig::load(Some(&p), &[]).unwrap();
        assert_eq!(c.estimate.pencil.angles, 90);
        assert_eq!(c.estimate.validation_lines, 100);
        fs::write(&p, r#"{"estimate": {"angles": 90}}"#).unwrap();
        assert!(CliConfig::load(Some(&p), &[]).is_err());
    }

    #[test]
    fn help_lists_every_key() {
        let h = keys_help();
        for key in ["estimate.stereo.d_max", "estimate.pencil.angles", "estimate.inlier_area", "estimate.ransac.trials", "eval.point_noise", "overlay.truth_color"] {
            assert!(h.contains(key), "{key} missing");
        }
    }
}
