//! Text configuration with unit-suffixed keys layered over a named preset.
//!
//! A config is TOML with one table per section. Every frequency key ends in
//! `_MHz` (ordinary frequency), every time in `_us`, every angle in `_rad`.
//! The resolved table keeps the values exactly as written so a manifest can
//! be fed back in and reproduce a run bit for bit.

use std::path::Path;

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::error::{Error, Result};
use crate::experiment::{ExperimentConfig, InitialState, ModelKind};
use crate::units::{mhz_to_rad_per_us, rate_from_lifetime};

pub const PAPER_DEVICE: &str = "paper-device";

const PAPER_DEVICE_TOML: &str = include_str!("../presets/paper-device.toml");

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Kind {
    Mhz,
    MhzList,
    Micros,
    Radians,
    Real,
    RealList,
    Count,
    Flag,
    Text,
}

struct Field {
    section: &'static str,
    key: &'static str,
    kind: Kind,
}

const fn field(section: &'static str, key: &'static str, kind: Kind) -> Field {
    Field { section, key, kind }
}

const FIELDS: &[Field] = &[
    field("device", "kappa2_MHz", Kind::Mhz),
    field("device", "kappa1_MHz", Kind::Mhz),
    field("device", "chi_SS_MHz", Kind::Mhz),
    field("device", "chi_RR_MHz", Kind::Mhz),
    field("device", "chi_RS_MHz", Kind::Mhz),
    field("device", "T1R_us", Kind::Micros),
    field("device", "n_th", Kind::Real),
    field("device", "delta_R_MHz", Kind::Mhz),
    field("device", "delta_P_MHz", Kind::Mhz),
    field("device", "dim_S", Kind::Count),
    field("device", "dim_R", Kind::Count),
    field("drive", "eps0_MHz", Kind::Mhz),
    field("drive", "zeno_phase_rad", Kind::Radians),
    field("protocol", "ramp_on_us", Kind::Micros),
    field("protocol", "tail_us", Kind::Micros),
    field("protocol", "ramp_off_us", Kind::Micros),
    field("scenario", "model", Kind::Text),
    field("scenario", "initial", Kind::Text),
    field("scenario", "initial_theta_rad", Kind::Radians),
    field("scenario", "initial_phi_rad", Kind::Radians),
    field("scenario", "initial_negative", Kind::Flag),
    field("scenario", "nbar_list", Kind::RealList),
    field("scenario", "drive_multipliers", Kind::RealList),
    field("scenario", "horizon_us", Kind::Micros),
    field("scenario", "sample_count", Kind::Count),
    field("gate", "nbar", Kind::Real),
    field("gate", "drive_multiplier", Kind::Real),
    field("wigner", "nbar", Kind::Real),
    field("wigner", "drive_multiplier", Kind::Real),
    field("wigner", "extent", Kind::Real),
    field("wigner", "points", Kind::Count),
    field("phaseflip", "nbar_list", Kind::RealList),
    field("phaseflip", "n_th_list", Kind::RealList),
    field("phaseflip", "horizon_us", Kind::Micros),
    field("phaseflip", "sample_count", Kind::Count),
    field("phaseflip", "stark_matched", Kind::Flag),
    field("matching", "nbar", Kind::Real),
    field("matching", "amplitude_scales", Kind::RealList),
    field("matching", "detunings_MHz", Kind::MhzList),
    field("matching", "hold_kappa2_units", Kind::Real),
    field("solver", "rtol", Kind::Real),
    field("solver", "atol", Kind::Real),
    field("solver", "max_step_us", Kind::Micros),
    field("solver", "max_steps", Kind::Count),
    field("output", "dir", Kind::Text),
    field("output", "format", Kind::Text),
];

const UNIT_SUFFIXES: &[&str] = &["MHz", "us", "rad"];

fn sections() -> Vec<&'static str> {
    let mut s: Vec<&str> = FIELDS.iter().map(|f| f.section).collect();
    s.dedup();
    s
}

fn lookup(section: &str, key: &str) -> Option<&'static Field> {
    FIELDS.iter().find(|f| f.section == section && f.key == key)
}

fn strip_unit(key: &str) -> &str {
    match key.rsplit_once('_') {
        Some((base, unit)) if UNIT_SUFFIXES.contains(&unit) => base,
        _ => key,
    }
}

fn best_match<'a>(key: &str, candidates: impl IntoIterator<Item = &'a str>) -> Option<String> {
    candidates
        .into_iter()
        .map(|c| {
            let score = strsim::jaro_winkler(key, c).max(strsim::jaro_winkler(key, strip_unit(c)));
            (score, c)
        })
        .filter(|(s, _)| *s >= 0.75)
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, c)| c.to_string())
}

/// Rejects an unknown key, naming the unit-suffixed spelling when only the
/// suffix is missing.
fn unknown_key(section: &str, key: &str) -> Error {
    let in_section: Vec<&Field> = FIELDS.iter().filter(|f| f.section == section).collect();
    if let Some(f) = in_section.iter().find(|f| f.key != key && strip_unit(f.key) == key) {
        return Error::MissingUnit {
            key: format!("{section}.{key}"),
            expected: format!("{section}.{}", f.key),
        };
    }
    Error::UnknownKey {
        key: format!("{section}.{key}"),
        suggestion: best_match(key, in_section.iter().map(|f| f.key)).map(|s| format!("{section}.{s}")),
    }
}

fn check_value(f: &Field, v: &Value) -> Result<()> {
    let name = format!("{}.{}", f.section, f.key);
    let bad = |what: &str| {
        Err(Error::ConfigValue {
            key: name.clone(),
            message: format!("expected {what}, got {v}"),
        })
    };
    let is_num = |v: &Value| matches!(v, Value::Float(_) | Value::Integer(_));
    match f.kind {
        Kind::Mhz | Kind::Micros | Kind::Radians | Kind::Real if !is_num(v) => bad("a number"),
        Kind::MhzList | Kind::RealList => match v {
            Value::Array(items) if items.iter().all(is_num) => Ok(()),
            _ => bad("an array of numbers"),
        },
        Kind::Count => match v {
            Value::Integer(i) if *i >= 0 => Ok(()),
            _ => bad("a non-negative integer"),
        },
        Kind::Flag if !v.is_bool() => bad("true or false"),
        Kind::Text if !v.is_str() => bad("a string"),
        _ => Ok(()),
    }
}

fn position(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

fn parse_toml(text: &str) -> Result<Table> {
    text.parse::<Table>().map_err(|e| {
        let (line, column) = e.span().map_or((0, 0), |s| position(text, s.start));
        Error::ConfigParse {
            line,
            column,
            message: e.message().to_string(),
        }
    })
}

/// Reads a config file. A JSON file is taken to be a run manifest and its
/// `config` member is used.
pub fn read_config_file(path: &Path) -> Result<Table> {
    let text = std::fs::read_to_string(path)?;
    if path.extension().is_some_and(|e| e == "json") {
        let doc: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::ConfigParse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        let inner = doc.get("config").cloned().unwrap_or(doc);
        return serde_json::from_value(inner).map_err(|e| Error::ConfigParse {
            line: 0,
            column: 0,
            message: e.to_string(),
        });
    }
    parse_toml(&text)
}

pub fn preset(name: &str) -> Result<Table> {
    match name {
        PAPER_DEVICE => parse_toml(PAPER_DEVICE_TOML),
        other => Err(Error::ConfigValue {
            key: "preset".into(),
            message: format!("unknown preset `{other}`; available: {PAPER_DEVICE}"),
        }),
    }
}

/// A fully populated config table in file units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResolvedConfig {
    pub preset: String,
    pub table: Table,
}

impl ResolvedConfig {
    /// The `paper-device` preset with nothing on top.
    pub fn paper_device() -> Self {
        resolve(None, None, &[]).expect("bundled preset is valid")
    }

    /// Applies `key=value`; the key is `section.key`, or a bare key when it
    /// names exactly one field.
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        let (key, raw) = assignment.split_once('=').ok_or_else(|| Error::ConfigValue {
            key: assignment.to_string(),
            message: "override must look like key=value".into(),
        })?;
        let f = resolve_key(key.trim())?;
        let raw = raw.trim();
        let value = format!("v = {raw}")
            .parse::<Table>()
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| Value::String(raw.to_string()));
        self.insert(f, value)
    }

    fn insert(&mut self, f: &Field, value: Value) -> Result<()> {
        check_value(f, &value)?;
        let section = self
            .table
            .entry(f.section)
            .or_insert_with(|| Value::Table(Table::new()));
        section
            .as_table_mut()
            .expect("sections are tables")
            .insert(f.key.to_string(), value);
        Ok(())
    }

    fn get(&self, f: &Field) -> &Value {
        &self.table[f.section][f.key]
    }

    fn real(&self, section: &str, key: &str) -> f64 {
        as_real(self.get(lookup(section, key).expect("registered key")))
    }

    fn reals(&self, section: &str, key: &str) -> Vec<f64> {
        match self.get(lookup(section, key).expect("registered key")) {
            Value::Array(a) => a.iter().map(as_real).collect(),
            _ => unreachable!("checked on insert"),
        }
    }

    fn count(&self, section: &str, key: &str) -> usize {
        self.get(lookup(section, key).expect("registered key"))
            .as_integer()
            .expect("checked on insert") as usize
    }

    fn flag(&self, section: &str, key: &str) -> bool {
        self.get(lookup(section, key).expect("registered key"))
            .as_bool()
            .expect("checked on insert")
    }

    fn text(&self, section: &str, key: &str) -> &str {
        self.get(lookup(section, key).expect("registered key"))
            .as_str()
            .expect("checked on insert")
    }

    /// Converts to internal units (rad/us, us).
    pub fn experiment(&self) -> Result<ExperimentConfig> {
        let mhz = |s: &str, k: &str| mhz_to_rad_per_us(self.real(s, k));
        let mut cfg = ExperimentConfig::standard();

        let d = &mut cfg.device;
        d.kappa2 = mhz("device", "kappa2_MHz");
        d.kappa1 = mhz("device", "kappa1_MHz");
        d.chi_ss = mhz("device", "chi_SS_MHz");
        d.chi_rr = mhz("device", "chi_RR_MHz");
        d.chi_rs = mhz("device", "chi_RS_MHz");
        d.kappa_r = rate_from_lifetime(self.real("device", "T1R_us"));
        d.n_th = self.real("device", "n_th");
        d.delta_r = mhz("device", "delta_R_MHz");
        d.delta_p = mhz("device", "delta_P_MHz");
        d.dim_s = self.count("device", "dim_S");
        d.dim_r = self.count("device", "dim_R");

        cfg.eps0 = mhz("drive", "eps0_MHz");
        cfg.zeno_phase = self.real("drive", "zeno_phase_rad");

        cfg.protocol.ramp_on = self.real("protocol", "ramp_on_us");
        cfg.protocol.tail = self.real("protocol", "tail_us");
        cfg.protocol.ramp_off = self.real("protocol", "ramp_off_us");

        cfg.model = match self.text("scenario", "model") {
            "reduced" => ModelKind::Reduced,
            "full" => ModelKind::Full,
            other => return Err(choice("scenario.model", other, &["reduced", "full"])),
        };
        let theta = self.real("scenario", "initial_theta_rad");
        let phi = self.real("scenario", "initial_phi_rad");
        cfg.initial = match self.text("scenario", "initial") {
            "cat" => InitialState::Cat { phi },
            "coherent" => InitialState::Coherent {
                negative: self.flag("scenario", "initial_negative"),
            },
            "cardinal" => InitialState::Cardinal { theta, phi },
            other => return Err(choice("scenario.initial", other, &["cat", "coherent", "cardinal"])),
        };
        cfg.nbar_list = self.reals("scenario", "nbar_list");
        cfg.drive_multipliers = self.reals("scenario", "drive_multipliers");
        cfg.horizon = self.real("scenario", "horizon_us");
        cfg.sample_count = self.count("scenario", "sample_count");

        cfg.gate.nbar = self.real("gate", "nbar");
        cfg.gate.drive_multiplier = self.real("gate", "drive_multiplier");

        cfg.wigner.nbar = self.real("wigner", "nbar");
        cfg.wigner.drive_multiplier = self.real("wigner", "drive_multiplier");
        cfg.wigner.extent = self.real("wigner", "extent");
        cfg.wigner.points = self.count("wigner", "points");

        cfg.phase_flip.nbar_list = self.reals("phaseflip", "nbar_list");
        cfg.phase_flip.n_th_list = self.reals("phaseflip", "n_th_list");
        cfg.phase_flip.horizon = self.real("phaseflip", "horizon_us");
        cfg.phase_flip.sample_count = self.count("phaseflip", "sample_count");
        cfg.phase_flip.stark_matched = self.flag("phaseflip", "stark_matched");

        cfg.matching.nbar = self.real("matching", "nbar");
        cfg.matching.amplitude_scales = self.reals("matching", "amplitude_scales");
        cfg.matching.detunings = self
            .reals("matching", "detunings_MHz")
            .into_iter()
            .map(mhz_to_rad_per_us)
            .collect();
        cfg.matching.hold_kappa2_units = self.real("matching", "hold_kappa2_units");

        cfg.numerics.rtol = self.real("solver", "rtol");
        cfg.numerics.atol = self.real("solver", "atol");
        cfg.numerics.max_step = self.real("solver", "max_step_us");
        cfg.numerics.max_steps = self.count("solver", "max_steps");

        let dir = self.text("output", "dir");
        cfg.output.dir = (!dir.is_empty()).then(|| dir.into());
        cfg.output.format = match self.text("output", "format") {
            "csv" => "csv".into(),
            other => return Err(choice("output.format", other, &["csv"])),
        };

        cfg.validate().map_err(|e| match e {
            Error::InvalidParameter(message) => Error::ConfigValue {
                key: "config".into(),
                message,
            },
            e => e,
        })?;
        Ok(cfg)
    }
}

fn as_real(v: &Value) -> f64 {
    match v {
        Value::Float(x) => *x,
        Value::Integer(i) => *i as f64,
        _ => unreachable!("checked on insert"),
    }
}

fn choice(key: &str, got: &str, allowed: &[&str]) -> Error {
    Error::ConfigValue {
        key: key.into(),
        message: format!("`{got}` is not one of {}", allowed.join(", ")),
    }
}

fn resolve_key(key: &str) -> Result<&'static Field> {
    if let Some((section, name)) = key.split_once('.') {
        if !sections().contains(&section) {
            return Err(Error::UnknownKey {
                key: key.into(),
                suggestion: best_match(section, sections()),
            });
        }
        return lookup(section, name).ok_or_else(|| unknown_key(section, name));
    }
    let hits: Vec<&Field> = FIELDS.iter().filter(|f| f.key == key).collect();
    match hits.as_slice() {
        [f] => Ok(f),
        [] => {
            if let Some(f) = FIELDS.iter().find(|f| strip_unit(f.key) == key && f.key != key) {
                return Err(Error::MissingUnit {
                    key: key.into(),
                    expected: f.key.into(),
                });
            }
            Err(Error::UnknownKey {
                key: key.into(),
                suggestion: best_match(key, FIELDS.iter().map(|f| f.key)),
            })
        }
        many => Err(Error::ConfigValue {
            key: key.into(),
            message: format!(
                "ambiguous key; qualify it as one of {}",
                many.iter()
                    .map(|f| format!("{}.{}", f.section, f.key))
                    .collect::<Vec<_>>()
                    .join(", ")
            ),
        }),
    }
}

/// Layers a user table and `key=value` overrides over a preset. The preset
/// named on the command line wins over a `preset` key in the file.
pub fn resolve(user: Option<Table>, preset_name: Option<&str>, overrides: &[String]) -> Result<ResolvedConfig> {
    let mut user = user.unwrap_or_default();
    let file_preset = match user.remove("preset") {
        Some(Value::String(s)) => Some(s),
        Some(v) => {
            return Err(Error::ConfigValue {
                key: "preset".into(),
                message: format!("expected a string, got {v}"),
            })
        }
        None => None,
    };
    let name = preset_name
        .map(str::to_string)
        .or(file_preset)
        .unwrap_or_else(|| PAPER_DEVICE.to_string());
    let mut out = ResolvedConfig {
        table: preset(&name)?,
        preset: name,
    };
    for (section, body) in user {
        let Value::Table(body) = body else {
            let suggestion = best_match(&section, FIELDS.iter().map(|f| f.key))
                .and_then(|k| FIELDS.iter().find(|f| f.key == k))
                .map(|f| format!("{}.{}", f.section, f.key))
                .or_else(|| best_match(&section, sections()));
            return Err(Error::UnknownKey { key: section, suggestion });
        };
        if !sections().contains(&section.as_str()) {
            return Err(Error::UnknownKey {
                suggestion: best_match(&section, sections()),
                key: section,
            });
        }
        for (key, value) in body {
            let f = lookup(&section, &key).ok_or_else(|| unknown_key(&section, &key))?;
            out.insert(f, value)?;
        }
    }
    for o in overrides {
        out.set(o)?;
    }
    out.experiment()?;
    Ok(out)
}

/// Reads `path` (if any), layers it over the preset and applies overrides.
pub fn parse_config(path: Option<&Path>, preset_name: Option<&str>, overrides: &[String]) -> Result<ResolvedConfig> {
    let user = path.map(read_config_file).transpose()?;
    resolve(user, preset_name, overrides)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::rad_per_us_to_mhz;

    fn from_str(text: &str) -> Result<ResolvedConfig> {
        resolve(Some(parse_toml(text)?), None, &[])
    }

    #[test]
    fn preset_matches_built_in_defaults() {
        let cfg = ResolvedConfig::paper_device().experiment().unwrap();
        assert_eq!(cfg, ExperimentConfig::standard());
    }

    #[test]
    fn preset_values() {
        let d = ResolvedConfig::paper_device().experiment().unwrap().device;
        for (got, want) in [
            (d.kappa2, 0.176),
            (d.kappa1, 0.0017),
            (d.chi_ss, 0.003),
            (d.chi_rr, 86.0),
            (d.chi_rs, 0.471),
        ] {
            assert!((rad_per_us_to_mhz(got) - want).abs() <= 1e-15 * want);
        }
        assert_eq!(d.kappa_r, 1.0 / 0.317);
    }

    #[test]
    fn every_field_is_in_the_preset() {
        let t = preset(PAPER_DEVICE).unwrap();
        for f in FIELDS {
            assert!(t.get(f.section).and_then(|s| s.get(f.key)).is_some(), "{}.{}", f.section, f.key);
        }
        let count: usize = t.values().map(|s| s.as_table().unwrap().len()).sum();
        assert_eq!(count, FIELDS.len());
    }

    #[test]
    fn override_sets_kappa1_to_zero() {
        let r = resolve(None, None, &["kappa1_MHz=0".into()]).unwrap();
        assert_eq!(r.experiment().unwrap().device.kappa1, 0.0);
        let r = resolve(None, None, &["device.kappa1_MHz = 0.0".into()]).unwrap();
        assert_eq!(r.experiment().unwrap().device.kappa1, 0.0);
    }

    #[test]
    fn unknown_key_suggests_the_closest() {
        let e = from_str("[device]\nkapa2_MHz = 0.2\n").unwrap_err();
        match e {
            Error::UnknownKey { key, suggestion } => {
                assert_eq!(key, "device.kapa2_MHz");
                assert_eq!(suggestion.as_deref(), Some("device.kappa2_MHz"));
            }
            e => panic!("{e:?}"),
        }
        let e = resolve(None, None, &["kapa2=0.2".into()]).unwrap_err();
        assert!(matches!(e, Error::UnknownKey { suggestion: Some(ref s), .. } if s.contains("kappa2")), "{e:?}");
        let e = from_str("kapa2 = 0.2\n").unwrap_err();
        assert!(matches!(e, Error::UnknownKey { suggestion: Some(ref s), .. } if s.contains("kappa2")), "{e:?}");
        let e = from_str("[devise]\n").unwrap_err();
        assert!(matches!(e, Error::UnknownKey { suggestion: Some(ref s), .. } if s == "device"), "{e:?}");
    }

    #[test]
    fn bare_frequency_is_missing_its_unit() {
        let e = from_str("[device]\nkappa2 = 0.2\n").unwrap_err();
        match e {
            Error::MissingUnit { key, expected } => {
                assert_eq!(key, "device.kappa2");
                assert_eq!(expected, "device.kappa2_MHz");
            }
            e => panic!("{e:?}"),
        }
        assert!(matches!(
            resolve(None, None, &["horizon=3".into()]),
            Err(Error::MissingUnit { .. })
        ));
    }

    #[test]
    fn parse_error_has_position() {
        match from_str("[device]\nkappa2_MHz = = 1\n").unwrap_err() {
            Error::ConfigParse { line, column, .. } => {
                assert_eq!(line, 2);
                assert!(column > 1);
            }
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn wrong_types_are_rejected() {
        assert!(matches!(from_str("[device]\ndim_S = 2.5\n"), Err(Error::ConfigValue { .. })));
        assert!(matches!(from_str("[scenario]\nnbar_list = 2\n"), Err(Error::ConfigValue { .. })));
        assert!(matches!(from_str("[scenario]\nmodel = \"big\"\n"), Err(Error::ConfigValue { .. })));
        assert!(matches!(from_str("[scenario]\nhorizon_us = -1\n"), Err(Error::ConfigValue { .. })));
        assert!(matches!(resolve(None, Some("lab"), &[]), Err(Error::ConfigValue { .. })));
    }

    #[test]
    fn ambiguous_bare_override_is_rejected() {
        let e = resolve(None, None, &["nbar_list=[2.0]".into()]).unwrap_err();
        assert!(matches!(e, Error::ConfigValue { ref message, .. } if message.contains("phaseflip.nbar_list")));
        let r = resolve(None, None, &["phaseflip.nbar_list=[2, 4]".into()]).unwrap();
        assert_eq!(r.experiment().unwrap().phase_flip.nbar_list, vec![2.0, 4.0]);
    }

    #[test]
    fn text_overrides_need_no_quotes() {
        let r = resolve(None, None, &["model=full".into(), "initial=coherent".into()]).unwrap();
        let cfg = r.experiment().unwrap();
        assert_eq!(cfg.model, ModelKind::Full);
        assert_eq!(cfg.initial, InitialState::Coherent { negative: false });
    }

    #[test]
    fn json_round_trip_is_exact() {
        let mut r = resolve(None, None, &["eps0_MHz=0.0070000000000000001".into(), "tail_us=0.1".into()]).unwrap();
        r.set("detunings_MHz=[0.1, 0.2, 0.30000000000000004]").unwrap();
        let doc = serde_json::json!({ "config": r.table, "version": "x" });
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.json");
        std::fs::write(&path, serde_json::to_string_pretty(&doc).unwrap()).unwrap();
        let back = parse_config(Some(&path), None, &[]).unwrap();
        assert_eq!(back.table, r.table);
        assert_eq!(back.experiment().unwrap(), r.experiment().unwrap());
    }
}
