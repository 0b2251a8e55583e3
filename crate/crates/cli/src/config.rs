//! TOML configuration for `hrc`.

use anyhow::{bail, Context, Result};
use hrc_services::robot::kinematics::RobotModel;
use hrc_services::robot::{AdapterConfig, DEFAULT_RATE_HZ};
use hrc_services::supervisor::{RobotSpec, SupervisorConfig};
use serde::Deserialize;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default = "default_ws")]
    pub workstation: String,
    #[serde(default = "default_name")]
    pub name: String,
    pub store: Option<PathBuf>,
    pub preview_dir: Option<PathBuf>,
    pub broker: Option<String>,
    #[serde(default = "default_robots")]
    pub robots: Vec<RobotEntry>,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RobotEntry {
    pub agent: String,
    /// `ur5e` or a path to a DH parameter file.
    #[serde(default = "default_model")]
    pub model: String,
    #[serde(default = "default_rate")]
    pub rate_hz: u32,
    #[serde(default)]
    pub require_ack: bool,
}

fn default_ws() -> String {
    "ws-1".into()
}

fn default_name() -> String {
    "workstation".into()
}

fn default_model() -> String {
    "ur5e".into()
}

fn default_rate() -> u32 {
    DEFAULT_RATE_HZ
}

fn default_robots() -> Vec<RobotEntry> {
    vec![RobotEntry { agent: "robot-1".into(), model: default_model(), rate_hz: DEFAULT_RATE_HZ, require_ack: false }]
}

impl Default for Config {
    fn default() -> Self {
        toml::from_str("").expect("empty config is valid")
    }
}

impl Config {
    /// Relative paths inside the file resolve against its directory.
    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg: Config = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.store, &mut cfg.preview_dir].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        for r in &mut cfg.robots {
            if r.model != "ur5e" && Path::new(&r.model).is_relative() {
                r.model = base.join(&r.model).to_string_lossy().into_owned();
            }
        }
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> Result<()> {
        let mut agents: Vec<&str> = self.robots.iter().map(|r| r.agent.as_str()).collect();
        agents.sort();
        if agents.windows(2).any(|w| w[0] == w[1]) {
            bail!("duplicate robot agent in configuration");
        }
        if self.robots.iter().any(|r| r.rate_hz == 0) {
            bail!("robot rate_hz must be positive");
        }
        Ok(())
    }

    pub fn supervisor(&self) -> Result<SupervisorConfig> {
        let mut s = SupervisorConfig::new(&self.workstation, &self.name);
        s.store = self.store.clone();
        s.preview_dir = self.preview_dir.clone();
        s.robots = self
            .robots
            .iter()
            .map(|r| {
                let model = if r.model == "ur5e" {
                    RobotModel::ur5e()
                } else {
                    let text = std::fs::read_to_string(&r.model).with_context(|| format!("reading model {}", r.model))?;
                    RobotModel::from_json(&text).with_context(|| format!("model {}", r.model))?
                };
                let adapter = AdapterConfig { rate_hz: r.rate_hz, require_ack: r.require_ack, ..Default::default() };
                Ok(RobotSpec { agent: r.agent.clone(), model, adapter })
            })
            .collect::<Result<_>>()?;
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_give_one_robot() {
        let c = Config::default();
        assert_eq!(c.workstation, "ws-1");
        assert_eq!(c.robots.len(), 1);
        assert_eq!(c.supervisor().unwrap().service_names().len(), 5);
    }

    #[test]
    fn relative_paths_resolve_against_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("hrc.toml");
        std::fs::write(
            &p,
            "workstation = \"cell\"\nstore = \"ws.json\"\n[[robots]]\nagent = \"r\"\nrequire_ack = true\n[[robots]]\nagent = \"s\"\nrate_hz = 20\n",
        )
        .unwrap();
        let c = Config::load(&p).unwrap();
        assert_eq!(c.store, Some(dir.path().join("ws.json")));
        assert_eq!(c.robots.len(), 2);
        assert!(c.robots[0].require_ack);
        assert_eq!(c.robots[1].rate_hz, 20);
    }

    #[test]
    fn rejects_unknown_keys_and_duplicates() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("hrc.toml");
        std::fs::write(&p, "bogus = 1\n").unwrap();
        assert!(Config::load(&p).is_err());
        std::fs::write(&p, "[[robots]]\nagent = \"r\"\n[[robots]]\nagent = \"r\"\n").unwrap();
        assert!(Config::load(&p).is_err());
    }
}
