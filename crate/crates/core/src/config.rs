//! JSON run configurations and `key=value` overrides.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::constitutive::FluidParams;
use crate::error::{Error, Result};

/// Time step: a positive number or `"auto"` for the stability bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Value", into = "Value")]
pub enum DtSpec {
    Auto,
    Fixed(f64),
}

impl TryFrom<Value> for DtSpec {
    type Error = String;
    fn try_from(v: Value) -> std::result::Result<Self, String> {
        match v {
            Value::String(s) if s == "auto" => Ok(DtSpec::Auto),
            Value::Number(n) => match n.as_f64() {
                Some(x) if x.is_finite() && x > 0.0 => Ok(DtSpec::Fixed(x)),
                _ => Err(format!("dt must be positive, got {n}")),
            },
            other => Err(format!("dt must be a positive number or \"auto\", got {other}")),
        }
    }
}

impl From<DtSpec> for Value {
    fn from(d: DtSpec) -> Value {
        match d {
            DtSpec::Auto => Value::String("auto".into()),
            DtSpec::Fixed(x) => serde_json::json!(x),
        }
    }
}

/// Initial velocity: a named profile or explicit nodal values (1D only).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum IcSpec {
    Named(String),
    Values(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    #[default]
    Explicit,
    Implicit,
}

fn default_snapshots() -> usize {
    5
}

fn default_energy_rows() -> usize {
    200
}

fn default_amplitude() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Run1DConfig {
    #[serde(rename = "H")]
    pub h: f64,
    #[serde(rename = "N")]
    pub n: usize,
    pub dt: DtSpec,
    pub t_end: f64,
    pub force: f64,
    pub alpha_lo: f64,
    pub alpha_hi: f64,
    pub ic: IcSpec,
    pub params: FluidParams,
    #[serde(default)]
    pub scheme: Scheme,
    /// Profile snapshots written, initial and final included.
    #[serde(default = "default_snapshots")]
    pub snapshots: usize,
    /// Approximate number of `energy.csv` rows after the initial one.
    #[serde(default = "default_energy_rows")]
    pub energy_rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Run2DConfig {
    #[serde(rename = "Lx")]
    pub lx: f64,
    #[serde(rename = "Ly")]
    pub ly: f64,
    #[serde(rename = "Nx")]
    pub nx: usize,
    #[serde(rename = "Ny")]
    pub ny: usize,
    pub dt: DtSpec,
    pub t_end: f64,
    pub force: [f64; 2],
    pub alpha_lo: f64,
    pub alpha_hi: f64,
    /// `zero`, `poiseuille-guess`, `shear` or `vortex`.
    pub ic: IcSpec,
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
    pub params: FluidParams,
    #[serde(default = "default_snapshots")]
    pub snapshots: usize,
    #[serde(default = "default_energy_rows")]
    pub energy_rows: usize,
}

fn check_common(t_end: f64, snapshots: usize, energy_rows: usize) -> Result<()> {
    if !(t_end.is_finite() && t_end > 0.0) {
        return Err(Error::Config(format!("t_end must be positive, got {t_end}")));
    }
    if snapshots < 2 {
        return Err(Error::Config("snapshots must be at least 2".into()));
    }
    if energy_rows == 0 {
        return Err(Error::Config("energy_rows must be at least 1".into()));
    }
    Ok(())
}

impl Run1DConfig {
    pub fn validate(&self) -> Result<()> {
        check_common(self.t_end, self.snapshots, self.energy_rows)
    }
}

impl Run2DConfig {
    pub fn validate(&self) -> Result<()> {
        check_common(self.t_end, self.snapshots, self.energy_rows)?;
        if let IcSpec::Values(_) = self.ic {
            return Err(Error::Config("2D runs take a named initial condition".into()));
        }
        if !self.amplitude.is_finite() {
            return Err(Error::Config("amplitude must be finite".into()));
        }
        Ok(())
    }
}

/// Parse `key=value`; the value is read as JSON when possible, else as a string.
pub fn parse_override(s: &str) -> Result<(String, Value)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override '{s}' is not of the form key=value")))?;
    let k = k.trim();
    if k.is_empty() {
        return Err(Error::Config(format!("override '{s}' has an empty key")));
    }
    let v = serde_json::from_str(v.trim()).unwrap_or_else(|_| Value::String(v.trim().to_string()));
    Ok((k.to_string(), v))
}

/// Set a dotted path such as `params.tau_star` inside a JSON object.
pub fn apply_override(doc: &mut Value, key: &str, value: Value) -> Result<()> {
    let mut cur = doc;
    let parts: Vec<&str> = key.split('.').collect();
    for (k, part) in parts.iter().enumerate() {
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| Error::Config(format!("cannot set '{key}': '{}' is not an object", parts[..k].join("."))))?;
        if k + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        cur = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    unreachable!("split yields at least one part")
}

/// Parse a JSON document, apply overrides and deserialize.
pub fn load_with_overrides<T: DeserializeOwned>(text: &str, overrides: &[String]) -> Result<T> {
    let mut doc: Value = serde_json::from_str(text).map_err(|e| Error::Config(format!("malformed JSON: {e}")))?;
    for o in overrides {
        let (k, v) = parse_override(o)?;
        apply_override(&mut doc, &k, v)?;
    }
    serde_json::from_value(doc).map_err(|e| Error::Config(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    const ONE_D: &str = r#"{
        "H": 1.0, "N": 32, "dt": "auto", "t_end": 0.5, "force": 4.0,
        "alpha_lo": 10.0, "alpha_hi": 10.0, "ic": "zero",
        "params": {"mu1": 1, "mu2": 1, "nu": 1, "p": 2, "tau_star": 1, "eps_reg": 1e-4}
    }"#;

    #[test]
    fn parses_and_overrides() {
        let c: Run1DConfig = load_with_overrides(ONE_D, &[]).unwrap();
        assert_eq!(c.dt, DtSpec::Auto);
        assert_eq!(c.ic, IcSpec::Named("zero".into()));
        assert_eq!(c.scheme, Scheme::Explicit);
        let c: Run1DConfig =
            load_with_overrides(ONE_D, &["dt=0.001".into(), "params.tau_star=0.5".into(), "scheme=implicit".into()]).unwrap();
        assert_eq!(c.dt, DtSpec::Fixed(0.001));
        assert_eq!(c.params.tau_star(), 0.5);
        assert_eq!(c.scheme, Scheme::Implicit);
        let c: Run1DConfig = load_with_overrides(ONE_D, &["ic=[0,1,2]".into()]).unwrap();
        assert_eq!(c.ic, IcSpec::Values(vec![0.0, 1.0, 2.0]));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(load_with_overrides::<Run1DConfig>(ONE_D, &["bogus=1".into()]).is_err());
        assert!(load_with_overrides::<Run1DConfig>(ONE_D, &["dt=-1".into()]).is_err());
        assert!(load_with_overrides::<Run1DConfig>(ONE_D, &["dt=fast".into()]).is_err());
        assert!(load_with_overrides::<Run1DConfig>(ONE_D, &["params.p=1".into()]).is_err());
        assert!(load_with_overrides::<Run1DConfig>("{", &[]).is_err());
        assert!(parse_override("novalue").is_err());
        assert!(load_with_overrides::<Run1DConfig>(ONE_D, &["H.x=1".into()]).is_err());
    }
}
