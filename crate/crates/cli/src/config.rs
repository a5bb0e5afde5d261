//! Named profile sets loaded from TOML.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use veinroi::{Error, Illumination, IlluminationProfile, Result};

/// ```toml
/// default_profile = "transmitted"
///
/// [profiles.transmitted]
/// name = "transmitted"
/// # ... every IlluminationProfile field
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileConfig {
    pub default_profile: String,
    pub profiles: BTreeMap<String, IlluminationProfile>,
}

impl Default for ProfileConfig {
    fn default() -> Self {
        let profiles = Illumination::ALL
            .iter()
            .map(|&i| (i.to_string(), IlluminationProfile::for_illumination(i)))
            .collect();
        ProfileConfig {
            default_profile: Illumination::Transmitted.to_string(),
            profiles,
        }
    }
}

impl ProfileConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let c: ProfileConfig =
            toml::from_str(s).map_err(|e| Error::Config(e.message().trim().to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::NotFound(path.to_path_buf()),
            _ => e.into(),
        })?;
        Self::from_toml_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("profile config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if !self.profiles.contains_key(&self.default_profile) {
            return Err(Error::Config(format!(
                "default_profile {:?} is not defined",
                self.default_profile
            )));
        }
        for (name, p) in &self.profiles {
            p.validate()
                .map_err(|e| Error::Config(format!("profile {name:?}: {e}")))?;
        }
        Ok(())
    }

    /// Explicit name, else the profile named after the illumination tag,
    /// else the default.
    pub fn resolve(
        &self,
        explicit: Option<&str>,
        tag: Option<Illumination>,
    ) -> Result<(&str, &IlluminationProfile)> {
        if let Some(name) = explicit {
            return self
                .profiles
                .get_key_value(name)
                .map(|(k, v)| (k.as_str(), v))
                .ok_or_else(|| Error::Config(format!("unknown profile {name:?}")));
        }
        if let Some((k, v)) = tag.and_then(|t| self.profiles.get_key_value(t.as_str())) {
            return Ok((k.as_str(), v));
        }
        let (k, v) = self
            .profiles
            .get_key_value(&self.default_profile)
            .expect("validated");
        Ok((k.as_str(), v))
    }
}
