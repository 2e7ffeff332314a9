//! Scenario configuration.
//!
//! A config is a JSON object:
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "scenario": "quench",
//!   "parameters": { "omega_dr": "4e6 rad/s", "eta": 0.28 },
//!   "output": { "format": "csv", "path": "quench" },
//!   "scan": { "parameter": "eta", "grid": { "kind": "linspace", "start": 0.1, "stop": 0.3, "num": 5 } }
//! }
//! ```
//!
//! Physical inputs are strings `"<number> <unit>"`. Frequencies accept
//! `rad/s`, `Hz`, `kHz`, `MHz`, `GHz` (cyclic units are multiplied by `2 pi`),
//! fields `T`, `mT`, `G`, times `s`, `ms`, `us`, `ns`. Ratios and quantities
//! already in units of `Gamma` (trap frequency, times in `1/Gamma`) are bare
//! numbers. Unknown keys are rejected and every problem is reported at once.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::master_eq::{DipoleDipoleSpec, StepControl};
use crate::photon::RateModel;
use crate::quadrature::QuadratureSettings;
use crate::recoil::Mode3;
use crate::zeeman::SpeciesConstants;
use crate::{Error, Result};

pub const SCHEMA_VERSION: u64 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Rates,
    Zeeman,
    Evolve,
    Photon,
    DipoleDipole,
    Quench,
}

impl Scenario {
    pub const ALL: [Scenario; 6] =
        [Scenario::Rates, Scenario::Zeeman, Scenario::Evolve, Scenario::Photon, Scenario::DipoleDipole, Scenario::Quench];

    pub fn name(&self) -> &'static str {
        match self {
            Scenario::Rates => "rates",
            Scenario::Zeeman => "zeeman",
            Scenario::Evolve => "evolve",
            Scenario::Photon => "photon",
            Scenario::DipoleDipole => "dipole_dipole",
            Scenario::Quench => "quench",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|sc| sc.name() == s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OutputSpec {
    pub format: Format,
    /// File stem, relative to the output directory.
    pub path: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScanSpec {
    /// Dotted path into `parameters`; numeric segments index arrays.
    pub parameter: String,
    /// Unit attached to every grid value, for dimensional parameters.
    pub unit: Option<String>,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioConfig {
    pub schema_version: u64,
    pub scenario: Scenario,
    pub parameters: Value,
    pub output: OutputSpec,
    pub scan: Option<ScanSpec>,
    /// Directory that relative file references resolve against.
    pub base_dir: PathBuf,
}

// ---------------------------------------------------------------------------
// units

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dimension {
    Frequency,
    MagneticField,
    Time,
}

impl Dimension {
    fn units(&self) -> &'static [(&'static str, f64)] {
        const TWO_PI: f64 = 2.0 * PI;
        match self {
            Dimension::Frequency => {
                &[("rad/s", 1.0), ("Hz", TWO_PI), ("kHz", TWO_PI * 1e3), ("MHz", TWO_PI * 1e6), ("GHz", TWO_PI * 1e9)]
            }
            Dimension::MagneticField => &[("T", 1.0), ("mT", 1e-3), ("G", 1e-4)],
            Dimension::Time => &[("s", 1.0), ("ms", 1e-3), ("us", 1e-6), ("ns", 1e-9)],
        }
    }

    fn example(&self) -> &'static str {
        match self {
            Dimension::Frequency => "\"29 MHz\"",
            Dimension::MagneticField => "\"0.05 T\"",
            Dimension::Time => "\"10 ms\"",
        }
    }
}

/// Parses `"<number> <unit>"` into canonical units (rad/s, T, s).
pub fn parse_quantity(text: &str, dim: Dimension) -> std::result::Result<f64, String> {
    let mut parts = text.split_whitespace();
    let (Some(num), Some(unit), None) = (parts.next(), parts.next(), parts.next()) else {
        return Err(format!("expected \"<number> <unit>\", e.g. {}, got \"{text}\"", dim.example()));
    };
    let value: f64 = num.parse().map_err(|_| format!("\"{num}\" is not a number"))?;
    if !value.is_finite() {
        return Err(format!("\"{num}\" is not finite"));
    }
    let scale = dim
        .units()
        .iter()
        .find(|(u, _)| *u == unit)
        .map(|(_, s)| *s)
        .ok_or_else(|| {
            let known: Vec<&str> = dim.units().iter().map(|(u, _)| *u).collect();
            format!("unknown unit \"{unit}\" (expected one of {})", known.join(", "))
        })?;
    Ok(value * scale)
}

// ---------------------------------------------------------------------------
// field access with error collection

pub(crate) struct Obj<'a> {
    path: String,
    map: &'a Map<String, Value>,
}

impl<'a> Obj<'a> {
    pub(crate) fn new(value: &'a Value, path: &str, allowed: &[&str], errs: &mut Vec<String>) -> Option<Self> {
        let Some(map) = value.as_object() else {
            errs.push(format!("{path}: expected an object"));
            return None;
        };
        for key in map.keys() {
            if !allowed.contains(&key.as_str()) {
                errs.push(format!("{path}.{key}: unknown key (allowed: {})", allowed.join(", ")));
            }
        }
        Some(Obj { path: path.to_string(), map })
    }

    fn at(&self, key: &str) -> String {
        format!("{}.{key}", self.path)
    }

    pub(crate) fn get(&self, key: &str) -> Option<&'a Value> {
        self.map.get(key)
    }

    fn required(&self, key: &str, errs: &mut Vec<String>) -> Option<&'a Value> {
        let v = self.map.get(key);
        if v.is_none() {
            errs.push(format!("{}: missing", self.at(key)));
        }
        v
    }

    fn number_value(&self, key: &str, v: &Value, errs: &mut Vec<String>) -> Option<f64> {
        match v {
            Value::Number(n) => n.as_f64(),
            Value::String(_) => {
                errs.push(format!("{}: dimensionless, give a bare number", self.at(key)));
                None
            }
            _ => {
                errs.push(format!("{}: expected a number", self.at(key)));
                None
            }
        }
    }

    pub(crate) fn ratio(&self, key: &str, errs: &mut Vec<String>) -> Option<f64> {
        let v = self.required(key, errs)?;
        self.number_value(key, v, errs)
    }

    pub(crate) fn ratio_or(&self, key: &str, default: f64, errs: &mut Vec<String>) -> f64 {
        match self.get(key) {
            Some(v) => self.number_value(key, v, errs).unwrap_or(default),
            None => default,
        }
    }

    fn quantity_value(&self, key: &str, v: &Value, dim: Dimension, errs: &mut Vec<String>) -> Option<f64> {
        match v {
            Value::String(s) => match parse_quantity(s, dim) {
                Ok(x) => Some(x),
                Err(e) => {
                    errs.push(format!("{}: {e}", self.at(key)));
                    None
                }
            },
            Value::Number(_) => {
                errs.push(format!("{}: unit missing, write it as {}", self.at(key), dim.example()));
                None
            }
            _ => {
                errs.push(format!("{}: expected a quantity string such as {}", self.at(key), dim.example()));
                None
            }
        }
    }

    pub(crate) fn quantity(&self, key: &str, dim: Dimension, errs: &mut Vec<String>) -> Option<f64> {
        let v = self.required(key, errs)?;
        self.quantity_value(key, v, dim, errs)
    }

    pub(crate) fn quantity_opt(&self, key: &str, dim: Dimension, errs: &mut Vec<String>) -> Option<f64> {
        let v = self.get(key)?;
        self.quantity_value(key, v, dim, errs)
    }

    pub(crate) fn usize_or(&self, key: &str, default: usize, errs: &mut Vec<String>) -> usize {
        match self.get(key) {
            None => default,
            Some(v) => match v.as_u64() {
                Some(n) => n as usize,
                None => {
                    errs.push(format!("{}: expected a non-negative integer", self.at(key)));
                    default
                }
            },
        }
    }

    pub(crate) fn bool_or(&self, key: &str, default: bool, errs: &mut Vec<String>) -> bool {
        match self.get(key) {
            None => default,
            Some(Value::Bool(b)) => *b,
            Some(_) => {
                errs.push(format!("{}: expected true or false", self.at(key)));
                default
            }
        }
    }

    pub(crate) fn choice<'c>(&self, key: &str, options: &[&'c str], default: &'c str, errs: &mut Vec<String>) -> &'c str {
        match self.get(key) {
            None => default,
            Some(Value::String(s)) => match options.iter().find(|o| **o == s.as_str()) {
                Some(o) => o,
                None => {
                    errs.push(format!("{}: \"{s}\" is not one of {}", self.at(key), options.join(", ")));
                    default
                }
            },
            Some(_) => {
                errs.push(format!("{}: expected one of {}", self.at(key), options.join(", ")));
                default
            }
        }
    }

    fn vec3_value(&self, key: &str, v: &Value, errs: &mut Vec<String>) -> Option<[f64; 3]> {
        let arr = v.as_array().filter(|a| a.len() == 3);
        let nums: Option<Vec<f64>> = arr.map(|a| a.iter().filter_map(Value::as_f64).collect());
        match nums {
            Some(n) if n.len() == 3 => Some([n[0], n[1], n[2]]),
            _ => {
                errs.push(format!("{}: expected an array of three numbers", self.at(key)));
                None
            }
        }
    }

    pub(crate) fn vec3_or(&self, key: &str, default: [f64; 3], errs: &mut Vec<String>) -> [f64; 3] {
        match self.get(key) {
            None => default,
            Some(v) => self.vec3_value(key, v, errs).unwrap_or(default),
        }
    }

    /// A bare number (returned as `Scalar`) or an array of three.
    pub(crate) fn scalar_or_vec3(&self, key: &str, errs: &mut Vec<String>) -> Option<PerAxis> {
        let v = self.required(key, errs)?;
        if v.is_array() {
            return self.vec3_value(key, v, errs).map(PerAxis::Axes);
        }
        self.number_value(key, v, errs).map(PerAxis::Scalar)
    }

    pub(crate) fn mode3_value(&self, key: &str, v: &Value, errs: &mut Vec<String>) -> Option<Mode3> {
        let arr = v.as_array().filter(|a| a.len() == 3);
        let nums: Option<Vec<usize>> = arr.map(|a| a.iter().filter_map(Value::as_u64).map(|n| n as usize).collect());
        match nums {
            Some(n) if n.len() == 3 => Some(Mode3([n[0], n[1], n[2]])),
            _ => {
                errs.push(format!("{}: expected three non-negative integers", self.at(key)));
                None
            }
        }
    }

    fn complex_value(&self, key: &str, errs: &mut Vec<String>) -> Option<Complex64> {
        let v = self.required(key, errs)?;
        match v {
            Value::Number(n) => n.as_f64().map(|re| Complex64::new(re, 0.0)),
            Value::Array(a) if a.len() == 2 && a.iter().all(Value::is_number) => {
                Some(Complex64::new(a[0].as_f64().unwrap(), a[1].as_f64().unwrap()))
            }
            _ => {
                errs.push(format!("{}: expected a number or [re, im]", self.at(key)));
                None
            }
        }
    }

    fn child(&self, key: &str, allowed: &[&str], errs: &mut Vec<String>) -> Option<Obj<'a>> {
        let v = self.get(key)?;
        Obj::new(v, &self.at(key), allowed, errs)
    }

    fn err(&self, key: &str, msg: impl std::fmt::Display, errs: &mut Vec<String>) {
        errs.push(format!("{}: {msg}", self.at(key)));
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(untagged)]
pub enum PerAxis {
    Scalar(f64),
    Axes([f64; 3]),
}

impl PerAxis {
    pub fn axes(&self) -> [f64; 3] {
        match *self {
            PerAxis::Scalar(v) => [v; 3],
            PerAxis::Axes(a) => a,
        }
    }
}

// ---------------------------------------------------------------------------
// typed parameters, echoed in canonical units

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RatesGeometry {
    /// Motion along `x`; `cos_axis = d.chi`.
    OneD { eta: f64, cos_axis: f64 },
    ThreeD { eta: [f64; 3], dipole: [f64; 3] },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RatesInitial {
    Ground,
    LaserRecoil { direction: [f64; 3] },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RatesParams {
    pub geometry: RatesGeometry,
    pub initial: RatesInitial,
    pub blocked: bool,
    pub quadrature: QuadratureSettings,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ZeemanField {
    Dimensionless { x: f64, a_sign: f64 },
    /// `b_field` in T; `a_hfs` echoed in rad/s.
    Physical { b_field: f64, a_hfs: f64, species: SpeciesConstants },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ZeemanParams {
    pub field: ZeemanField,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NMax {
    Fixed([usize; 3]),
    Auto { tolerance: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvolveParams {
    pub one_dimensional: bool,
    pub eta: [f64; 3],
    /// Trap frequencies in units of `Gamma`.
    pub nu: [f64; 3],
    pub dipole: [f64; 3],
    pub n_max: NMax,
    pub particles: usize,
    /// Final time in units of `1/Gamma`.
    pub t_final: f64,
    pub snapshots: usize,
    pub dipole_dipole: Option<DipoleDipoleSpec>,
    pub step_control: StepControl,
    pub quadrature: QuadratureSettings,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PhotonParams {
    pub eta: f64,
    /// Trap frequency in units of `Gamma`.
    pub nu: f64,
    pub alpha: f64,
    pub rate_model: RateModel,
    #[serde(serialize_with = "ser_complex")]
    pub mu0: Complex64,
    #[serde(serialize_with = "ser_complex")]
    pub mu1: Complex64,
    /// Observation time in units of `1/Gamma`; `None` means the regime start.
    pub t: Option<f64>,
    /// Profile grid size; `None` resolves the trap-frequency beat with 16
    /// samples per period (at least 2001 points).
    pub points: Option<usize>,
}

fn ser_complex<S: serde::Serializer>(c: &Complex64, s: S) -> std::result::Result<S::Ok, S::Error> {
    [c.re, c.im].serialize(s)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ElementSet {
    List(Vec<[Mode3; 4]>),
    AllUpTo([usize; 3]),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DipoleDipoleParams {
    pub eta: [f64; 3],
    pub nu: [f64; 3],
    pub dipole: [f64; 3],
    pub elements: ElementSet,
    pub spec: DipoleDipoleSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QuenchParams {
    /// Angular frequencies, rad/s.
    pub omega_dr: f64,
    pub delta_dr: f64,
    pub gamma_1p: f64,
    pub eta: f64,
    pub eta_dr: f64,
    pub c_up_sq: f64,
    pub c_dn_sq: f64,
    /// Seconds.
    pub t_final: Option<f64>,
    pub points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Params {
    Rates(RatesParams),
    Zeeman(ZeemanParams),
    Evolve(EvolveParams),
    Photon(PhotonParams),
    DipoleDipole(DipoleDipoleParams),
    Quench(QuenchParams),
}

fn quadrature(p: &Obj, errs: &mut Vec<String>) -> QuadratureSettings {
    let d = QuadratureSettings::default();
    match p.child("quadrature", &["polar_order", "azimuth_points", "tolerance"], errs) {
        None => d,
        Some(q) => QuadratureSettings {
            polar_order: q.usize_or("polar_order", d.polar_order, errs),
            azimuth_points: q.usize_or("azimuth_points", d.azimuth_points, errs),
            tolerance: q.ratio_or("tolerance", d.tolerance, errs),
        },
    }
}

fn dipole_spec(q: &Obj, errs: &mut Vec<String>) -> DipoleDipoleSpec {
    let d = DipoleDipoleSpec::default();
    let spec = DipoleDipoleSpec {
        cutoff: q.ratio_or("cutoff", d.cutoff, errs),
        include: true,
        polar_order: q.usize_or("polar_order", d.polar_order, errs),
        azimuth_points: q.usize_or("azimuth_points", d.azimuth_points, errs),
    };
    if let Err(e) = spec.validate() {
        errs.push(format!("{}: {e}", q.path));
    }
    spec
}

fn parse_rates(p: &Obj, errs: &mut Vec<String>) -> Option<RatesParams> {
    let eta = p.scalar_or_vec3("eta", errs);
    let default_geometry = if matches!(eta, Some(PerAxis::Axes(_))) { "3d" } else { "1d" };
    let geometry = p.choice("geometry", &["1d", "3d"], default_geometry, errs);
    let initial = p.choice("initial", &["ground", "laser_recoil"], "ground", errs);
    let blocked = p.bool_or("blocked", true, errs);
    let quad = quadrature(p, errs);
    let geometry = match (geometry, eta?) {
        ("1d", PerAxis::Scalar(eta)) => {
            if p.get("dipole").is_some() {
                p.err("dipole", "not used in 1d geometry (set orientation)", errs);
            }
            let cos_axis = match p.get("orientation") {
                None => 0.0,
                Some(Value::String(s)) if s == "perp" => 0.0,
                Some(Value::String(s)) if s == "parallel" => 1.0,
                Some(Value::Number(n)) => n.as_f64().unwrap_or(f64::NAN),
                Some(_) => f64::NAN,
            };
            if !(-1.0..=1.0).contains(&cos_axis) {
                p.err("orientation", "expected \"perp\", \"parallel\" or a cosine in [-1, 1]", errs);
            }
            RatesGeometry::OneD { eta, cos_axis }
        }
        ("1d", PerAxis::Axes(_)) => {
            p.err("eta", "1d geometry takes a single number", errs);
            return None;
        }
        (_, axes) => {
            if p.get("orientation").is_some() {
                p.err("orientation", "only used in 1d geometry (set dipole)", errs);
            }
            RatesGeometry::ThreeD { eta: axes.axes(), dipole: p.vec3_or("dipole", [0.0, 0.0, 1.0], errs) }
        }
    };
    let initial = match initial {
        "laser_recoil" => {
            if matches!(geometry, RatesGeometry::OneD { .. }) {
                p.err("initial", "laser_recoil needs the 3d geometry", errs);
            }
            let d = 1.0 / 3f64.sqrt();
            RatesInitial::LaserRecoil { direction: p.vec3_or("laser_direction", [d, d, d], errs) }
        }
        _ => RatesInitial::Ground,
    };
    Some(RatesParams { geometry, initial, blocked, quadrature: quad })
}

fn load_species(p: &Obj, base: &Path, errs: &mut Vec<String>) -> Option<SpeciesConstants> {
    if let Some(v) = p.get("species") {
        return match serde_json::from_value::<SpeciesConstants>(v.clone()) {
            Ok(s) => Some(s),
            Err(e) => {
                p.err("species", e, errs);
                None
            }
        };
    }
    if let Some(v) = p.get("species_file") {
        let Some(rel) = v.as_str() else {
            p.err("species_file", "expected a path string", errs);
            return None;
        };
        let path = base.join(rel);
        return match std::fs::read_to_string(&path) {
            Ok(text) => match serde_json::from_str::<SpeciesConstants>(&text) {
                Ok(s) => Some(s),
                Err(e) => {
                    p.err("species_file", format!("{}: {e}", path.display()), errs);
                    None
                }
            },
            Err(e) => {
                p.err("species_file", format!("{}: {e}", path.display()), errs);
                None
            }
        };
    }
    p.err("species", "b_field needs species constants (species or species_file)", errs);
    None
}

fn parse_zeeman(p: &Obj, base: &Path, errs: &mut Vec<String>) -> Option<ZeemanParams> {
    match (p.get("x"), p.get("b_field")) {
        (Some(_), Some(_)) => {
            p.err("x", "give either x or b_field, not both", errs);
            None
        }
        (None, None) => {
            p.err("x", "missing (or give b_field with species constants)", errs);
            None
        }
        (Some(_), None) => {
            for key in ["species", "species_file"] {
                if p.get(key).is_some() {
                    p.err(key, "only used together with b_field", errs);
                }
            }
            let x = p.ratio("x", errs)?;
            if !(x.is_finite() && x >= 0.0) {
                p.err("x", format!("{x} must be >= 0"), errs);
            }
            let a_sign = p.ratio_or("a_sign", -1.0, errs);
            if a_sign != 1.0 && a_sign != -1.0 {
                p.err("a_sign", "must be 1 or -1", errs);
            }
            Some(ZeemanParams { field: ZeemanField::Dimensionless { x, a_sign } })
        }
        (None, Some(_)) => {
            if p.get("a_sign").is_some() {
                p.err("a_sign", "the sign comes from the species constant A", errs);
            }
            let b = p.quantity("b_field", Dimension::MagneticField, errs);
            let species = load_species(p, base, errs)?;
            if let Some(b) = b {
                if b < 0.0 {
                    p.err("b_field", "must be >= 0", errs);
                }
            }
            let a_hfs = 2.0 * PI * 1e6 * species.a_hfs_mhz;
            Some(ZeemanParams { field: ZeemanField::Physical { b_field: b?, a_hfs, species } })
        }
    }
}

fn parse_evolve(p: &Obj, errs: &mut Vec<String>) -> Option<EvolveParams> {
    let eta = p.scalar_or_vec3("eta", errs);
    let nu = match p.get("nu") {
        None => Some(PerAxis::Scalar(1.0)),
        Some(_) => p.scalar_or_vec3("nu", errs),
    };
    let geometry = p.choice("geometry", &["1d", "3d"], if matches!(eta, Some(PerAxis::Axes(_))) { "3d" } else { "1d" }, errs);
    let dipole = p.vec3_or("dipole", [0.0, 0.0, 1.0], errs);
    let n_max = match p.get("n_max") {
        None => NMax::Auto { tolerance: p.ratio_or("truncation_tolerance", 1e-6, errs) },
        Some(Value::String(s)) if s == "auto" => NMax::Auto { tolerance: p.ratio_or("truncation_tolerance", 1e-6, errs) },
        Some(v) => match p.mode3_value("n_max", v, errs) {
            Some(m) => NMax::Fixed(m.0),
            None => NMax::Fixed([0; 3]),
        },
    };
    let particles = p.usize_or("particles", 2, errs);
    if !(particles == 1 || particles == 2) {
        p.err("particles", "must be 1 or 2", errs);
    }
    let t_final = p.ratio("t_final", errs);
    if let Some(t) = t_final {
        if !(t.is_finite() && t > 0.0) {
            p.err("t_final", "must be > 0 (units of 1/Gamma)", errs);
        }
    }
    let snapshots = p.usize_or("snapshots", 50, errs);
    if snapshots == 0 {
        p.err("snapshots", "must be >= 1", errs);
    }
    let dipole_dipole =
        p.child("dipole_dipole", &["cutoff", "polar_order", "azimuth_points"], errs).map(|q| dipole_spec(&q, errs));
    let d = StepControl::default();
    let step_control = match p.child("step_control", &["rtol", "atol", "dt_initial", "dt_min", "dt_max", "positivity_tol"], errs) {
        None => d,
        Some(q) => StepControl {
            rtol: q.ratio_or("rtol", d.rtol, errs),
            atol: q.ratio_or("atol", d.atol, errs),
            dt_initial: q.ratio_or("dt_initial", d.dt_initial, errs),
            dt_min: q.ratio_or("dt_min", d.dt_min, errs),
            dt_max: q.ratio_or("dt_max", d.dt_max, errs),
            positivity_tol: q.ratio_or("positivity_tol", d.positivity_tol, errs),
        },
    };
    let quad = quadrature(p, errs);
    let (eta, nu) = (eta?, nu?);
    let one_dimensional = geometry == "1d";
    let (eta, nu) = if one_dimensional {
        let PerAxis::Scalar(e) = eta else {
            p.err("eta", "1d geometry takes a single number", errs);
            return None;
        };
        let PerAxis::Scalar(n) = nu else {
            p.err("nu", "1d geometry takes a single number", errs);
            return None;
        };
        ([e, 0.0, 0.0], [n; 3])
    } else {
        (eta.axes(), nu.axes())
    };
    Some(EvolveParams {
        one_dimensional,
        eta,
        nu,
        dipole,
        n_max,
        particles,
        t_final: t_final?,
        snapshots,
        dipole_dipole,
        step_control,
        quadrature: quad,
    })
}

fn parse_photon(p: &Obj, errs: &mut Vec<String>) -> Option<PhotonParams> {
    let eta = p.ratio("eta", errs);
    let nu = p.ratio("nu", errs);
    let alpha = p.ratio_or("alpha", 0.4, errs);
    let rate_model = match p.choice("rate_model", &["exact", "lamb_dicke"], "exact", errs) {
        "lamb_dicke" => RateModel::LambDicke,
        _ => RateModel::Exact,
    };
    let zero = Complex64::new(0.0, 0.0);
    let one = Complex64::new(1.0, 0.0);
    let (mu0, mu1) = match p.get("init") {
        None | Some(Value::String(_)) => match p.choice("init", &["ground", "first_excited", "shaped"], "shaped", errs) {
            "ground" => (one, zero),
            "first_excited" => (zero, one),
            _ => {
                let e = eta.unwrap_or(0.0);
                let m0 = 1.0 - 0.5 * e * e;
                (Complex64::new(m0, 0.0), Complex64::new(0.0, (1.0 - m0 * m0).max(0.0).sqrt()))
            }
        },
        Some(v) => {
            let q = Obj::new(v, &p.at("init"), &["mu0", "mu1"], errs)?;
            (q.complex_value("mu0", errs)?, q.complex_value("mu1", errs)?)
        }
    };
    let norm = mu0.norm_sqr() + mu1.norm_sqr();
    if (norm - 1.0).abs() > 1e-12 {
        p.err("init", format!("|mu0|^2 + |mu1|^2 = {norm}, must be 1"), errs);
    }
    let t = match p.get("t") {
        None => None,
        Some(_) => p.ratio("t", errs),
    };
    let points = p.get("points").map(|_| p.usize_or("points", 2, errs));
    if points.is_some_and(|n| n < 2) {
        p.err("points", "must be >= 2", errs);
    }
    Some(PhotonParams { eta: eta?, nu: nu?, alpha, rate_model, mu0, mu1, t, points })
}

fn parse_dipole_dipole(p: &Obj, errs: &mut Vec<String>) -> Option<DipoleDipoleParams> {
    let eta = p.scalar_or_vec3("eta", errs);
    let nu = match p.get("nu") {
        None => Some(PerAxis::Scalar(1.0)),
        Some(_) => p.scalar_or_vec3("nu", errs),
    };
    let dipole = p.vec3_or("dipole", [0.0, 0.0, 1.0], errs);
    let d = DipoleDipoleSpec::default();
    let spec = DipoleDipoleSpec {
        cutoff: p.ratio_or("cutoff", d.cutoff, errs),
        include: true,
        polar_order: p.usize_or("polar_order", d.polar_order, errs),
        azimuth_points: p.usize_or("azimuth_points", d.azimuth_points, errs),
    };
    if let Err(e) = spec.validate() {
        errs.push(format!("{}: {e}", p.path));
    }
    let elements = match (p.get("elements"), p.get("n_max")) {
        (Some(_), Some(_)) => {
            p.err("elements", "give either elements or n_max", errs);
            return None;
        }
        (Some(Value::Array(list)), None) => {
            let mut out = Vec::new();
            for (i, item) in list.iter().enumerate() {
                let key = format!("elements.{i}");
                let quad: Option<Vec<Mode3>> = match item.as_array().filter(|a| a.len() == 4) {
                    Some(a) => a.iter().map(|m| p.mode3_value(&key, m, errs)).collect(),
                    None => {
                        p.err(&key, "expected [n', m', m, n], each three integers", errs);
                        None
                    }
                };
                if let Some(q) = quad {
                    out.push([q[0], q[1], q[2], q[3]]);
                }
            }
            ElementSet::List(out)
        }
        (Some(_), None) => {
            p.err("elements", "expected a list of [n', m', m, n]", errs);
            return None;
        }
        (None, Some(v)) => ElementSet::AllUpTo(p.mode3_value("n_max", v, errs)?.0),
        (None, None) => {
            let g = Mode3::GROUND;
            ElementSet::List(vec![[Mode3::axis(2, 1), Mode3::axis(2, 1), g, g], [Mode3::axis(2, 2), Mode3::axis(2, 2), g, g]])
        }
    };
    Some(DipoleDipoleParams { eta: eta?.axes(), nu: nu?.axes(), dipole, elements, spec })
}

fn parse_quench(p: &Obj, errs: &mut Vec<String>) -> Option<QuenchParams> {
    let omega_dr = p.quantity("omega_dr", Dimension::Frequency, errs);
    let delta_dr = p.quantity("delta_dr", Dimension::Frequency, errs);
    let gamma_1p = p.quantity("gamma_1p", Dimension::Frequency, errs);
    let eta = p.ratio("eta", errs);
    let eta_dr = p.ratio("eta_dr", errs);
    let c_up_sq = p.ratio_or("c_up_sq", 1.0, errs);
    let c_dn_sq = p.ratio_or("c_dn_sq", 1.0 - c_up_sq, errs);
    let t_final = p.quantity_opt("t_final", Dimension::Time, errs);
    let points = p.usize_or("points", 101, errs);
    if points < 2 {
        p.err("points", "must be >= 2", errs);
    }
    let q = QuenchParams {
        omega_dr: omega_dr?,
        delta_dr: delta_dr?,
        gamma_1p: gamma_1p?,
        eta: eta?,
        eta_dr: eta_dr?,
        c_up_sq,
        c_dn_sq,
        t_final,
        points,
    };
    if let Err(e) = q.to_config().validate() {
        errs.push(format!("{}: {e}", p.path));
    }
    Some(q)
}

impl QuenchParams {
    pub fn to_config(&self) -> crate::rates::QuenchConfig {
        crate::rates::QuenchConfig {
            omega_dr: self.omega_dr,
            delta_dr: self.delta_dr,
            gamma_1p: self.gamma_1p,
            eta: self.eta,
            eta_dr: self.eta_dr,
            c_up_sq: self.c_up_sq,
            c_dn_sq: self.c_dn_sq,
        }
    }
}

const ALLOWED: [(Scenario, &[&str]); 6] = [
    (Scenario::Rates, &["eta", "geometry", "orientation", "dipole", "initial", "laser_direction", "blocked", "quadrature"]),
    (Scenario::Zeeman, &["x", "a_sign", "b_field", "species", "species_file"]),
    (
        Scenario::Evolve,
        &[
            "eta",
            "nu",
            "geometry",
            "dipole",
            "n_max",
            "truncation_tolerance",
            "particles",
            "t_final",
            "snapshots",
            "dipole_dipole",
            "step_control",
            "quadrature",
        ],
    ),
    (Scenario::Photon, &["eta", "nu", "alpha", "rate_model", "init", "t", "points"]),
    (Scenario::DipoleDipole, &["eta", "nu", "dipole", "elements", "n_max", "cutoff", "polar_order", "azimuth_points"]),
    (Scenario::Quench, &["omega_dr", "delta_dr", "gamma_1p", "eta", "eta_dr", "c_up_sq", "c_dn_sq", "t_final", "points"]),
];

fn allowed_keys(s: Scenario) -> &'static [&'static str] {
    ALLOWED.iter().find(|(sc, _)| *sc == s).map(|(_, k)| *k).unwrap()
}

/// Typed parameters from a raw `parameters` tree.
pub fn typed_parameters(scenario: Scenario, raw: &Value, base: &Path, errs: &mut Vec<String>) -> Option<Params> {
    let p = Obj::new(raw, "parameters", allowed_keys(scenario), errs)?;
    match scenario {
        Scenario::Rates => parse_rates(&p, errs).map(Params::Rates),
        Scenario::Zeeman => parse_zeeman(&p, base, errs).map(Params::Zeeman),
        Scenario::Evolve => parse_evolve(&p, errs).map(Params::Evolve),
        Scenario::Photon => parse_photon(&p, errs).map(Params::Photon),
        Scenario::DipoleDipole => parse_dipole_dipole(&p, errs).map(Params::DipoleDipole),
        Scenario::Quench => parse_quench(&p, errs).map(Params::Quench),
    }
}

// ---------------------------------------------------------------------------
// scan

fn parse_scan(v: &Value, errs: &mut Vec<String>) -> Option<ScanSpec> {
    let s = Obj::new(v, "scan", &["parameter", "grid"], errs)?;
    let parameter = match s.required("parameter", errs) {
        Some(Value::String(p)) if !p.is_empty() => Some(p.clone()),
        Some(_) => {
            s.err("parameter", "expected a dotted path such as \"eta\"", errs);
            None
        }
        None => None,
    };
    let g = Obj::new(s.required("grid", errs)?, "scan.grid", &["kind", "start", "stop", "num", "values", "unit"], errs)?;
    let kind = g.choice("kind", &["linspace", "logspace", "list"], "linspace", errs);
    let unit = match g.get("unit") {
        None => None,
        Some(Value::String(u)) => Some(u.clone()),
        Some(_) => {
            g.err("unit", "expected a unit string", errs);
            None
        }
    };
    let values = if kind == "list" {
        for key in ["start", "stop", "num"] {
            if g.get(key).is_some() {
                g.err(key, "not used with kind \"list\"", errs);
            }
        }
        match g.required("values", errs) {
            Some(Value::Array(a)) if !a.is_empty() && a.iter().all(Value::is_number) => {
                a.iter().map(|x| x.as_f64().unwrap()).collect()
            }
            Some(_) => {
                g.err("values", "expected a non-empty array of numbers", errs);
                return None;
            }
            None => return None,
        }
    } else {
        if g.get("values").is_some() {
            g.err("values", "only used with kind \"list\"", errs);
        }
        let start = g.ratio("start", errs);
        let stop = g.ratio("stop", errs);
        let num = g.usize_or("num", 0, errs);
        if num == 0 {
            g.err("num", "must be >= 1", errs);
        }
        let (start, stop) = (start?, stop?);
        if num == 0 {
            return None;
        }
        let frac = |k: usize| if num == 1 { 0.0 } else { k as f64 / (num - 1) as f64 };
        if kind == "logspace" {
            if !(start > 0.0 && stop > 0.0) {
                g.err("start", "logspace needs start > 0 and stop > 0", errs);
                return None;
            }
            let (a, b) = (start.ln(), stop.ln());
            (0..num)
                .map(|k| match k {
                    0 => start,
                    k if k + 1 == num => stop,
                    k => (a + (b - a) * frac(k)).exp(),
                })
                .collect()
        } else {
            let span = (num - 1).max(1) as f64;
            (0..num).map(|k| (start * (span - k as f64) + stop * k as f64) / span).collect::<Vec<f64>>()
        }
    };
    // 15 significant digits keeps decimal grids such as 0.05, 0.1, ... exact in print
    let values: Vec<f64> = values.into_iter().map(|v: f64| format!("{v:.14e}").parse().unwrap_or(v)).collect();
    if values.iter().any(|x| !x.is_finite()) {
        g.err("values", "grid values must be finite", errs);
    }
    let increasing = values.windows(2).all(|w| w[1] > w[0]);
    let decreasing = values.windows(2).all(|w| w[1] < w[0]);
    if !(increasing || decreasing) {
        g.err("values", "grid must be strictly monotone", errs);
    }
    Some(ScanSpec { parameter: parameter?, unit, values })
}

/// Writes a grid value into a copy of the parameter tree.
pub fn with_scan_value(raw: &Value, scan: &ScanSpec, value: f64) -> std::result::Result<Value, String> {
    let mut out = raw.clone();
    let mut cursor = &mut out;
    let segments: Vec<&str> = scan.parameter.split('.').collect();
    let new = match &scan.unit {
        Some(u) => Value::String(format!("{value} {u}")),
        None => serde_json::Number::from_f64(value).map(Value::Number).ok_or("non-finite grid value")?,
    };
    for (i, seg) in segments.iter().enumerate() {
        let last = i + 1 == segments.len();
        cursor = match cursor {
            Value::Object(map) => {
                if last {
                    map.insert(seg.to_string(), new);
                    return Ok(out);
                }
                map.get_mut(*seg).ok_or_else(|| format!("scan.parameter: \"{}\" not found at \"{seg}\"", scan.parameter))?
            }
            Value::Array(arr) => {
                let idx: usize = seg.parse().map_err(|_| format!("scan.parameter: \"{seg}\" is not an array index"))?;
                let slot = arr.get_mut(idx).ok_or_else(|| format!("scan.parameter: index {idx} out of range"))?;
                if last {
                    *slot = new;
                    return Ok(out);
                }
                slot
            }
            _ => return Err(format!("scan.parameter: cannot descend into \"{seg}\"")),
        };
    }
    Err("scan.parameter: empty path".into())
}

// ---------------------------------------------------------------------------
// top level

fn parse_output(v: Option<&Value>, errs: &mut Vec<String>) -> Option<OutputSpec> {
    let Some(v) = v else {
        errs.push("output: missing".into());
        return None;
    };
    let o = Obj::new(v, "output", &["format", "path"], errs)?;
    let format = match o.required("format", errs) {
        Some(Value::String(s)) if s == "csv" => Some(Format::Csv),
        Some(Value::String(s)) if s == "json" => Some(Format::Json),
        Some(_) => {
            o.err("format", "expected \"csv\" or \"json\"", errs);
            None
        }
        None => None,
    };
    let path = match o.required("path", errs) {
        Some(Value::String(s)) if !s.is_empty() => Some(PathBuf::from(s)),
        Some(_) => {
            o.err("path", "expected a non-empty file stem", errs);
            None
        }
        None => None,
    };
    Some(OutputSpec { format: format?, path: path? })
}

/// Parses and validates a config. `base_dir` resolves relative file
/// references. All problems are returned together.
pub fn parse_config_in(text: &str, base_dir: &Path) -> Result<ScenarioConfig> {
    let root: Value = serde_json::from_str(text).map_err(|e| Error::Config(vec![format!("not valid JSON: {e}")]))?;
    let mut errs = Vec::new();
    let Some(top) = Obj::new(&root, "config", &["schema_version", "scenario", "parameters", "output", "scan"], &mut errs) else {
        return Err(Error::Config(errs));
    };
    let schema_version = match top.get("schema_version").and_then(Value::as_u64) {
        Some(SCHEMA_VERSION) => Some(SCHEMA_VERSION),
        Some(v) => {
            errs.push(format!("config.schema_version: {v} is not supported (expected {SCHEMA_VERSION})"));
            None
        }
        None => {
            errs.push(format!("config.schema_version: missing or not an integer (expected {SCHEMA_VERSION})"));
            None
        }
    };
    let scenario = match top.get("scenario") {
        Some(Value::String(s)) => {
            let sc = Scenario::parse(s);
            if sc.is_none() {
                let names: Vec<&str> = Scenario::ALL.iter().map(Scenario::name).collect();
                errs.push(format!("config.scenario: unknown scenario \"{s}\" (expected one of {})", names.join(", ")));
            }
            sc
        }
        _ => {
            errs.push("config.scenario: missing or not a string".into());
            None
        }
    };
    let output = parse_output(top.get("output"), &mut errs);
    let scan = top.get("scan").and_then(|v| parse_scan(v, &mut errs));
    let parameters = top.get("parameters").cloned();
    if parameters.is_none() {
        errs.push("config.parameters: missing".into());
    }
    if let (Some(sc), Some(raw)) = (scenario, &parameters) {
        match &scan {
            None => {
                typed_parameters(sc, raw, base_dir, &mut errs);
            }
            Some(s) => {
                let mut seen = BTreeSet::new();
                for &v in &s.values {
                    let mut local = Vec::new();
                    match with_scan_value(raw, s, v) {
                        Ok(tree) => {
                            typed_parameters(sc, &tree, base_dir, &mut local);
                        }
                        Err(e) => local.push(e),
                    }
                    for e in local {
                        if seen.insert(e.clone()) {
                            errs.push(e);
                        }
                    }
                }
            }
        }
    }
    if !errs.is_empty() {
        return Err(Error::Config(errs));
    }
    Ok(ScenarioConfig {
        schema_version: schema_version.unwrap(),
        scenario: scenario.unwrap(),
        parameters: parameters.unwrap(),
        output: output.unwrap(),
        scan,
        base_dir: base_dir.to_path_buf(),
    })
}

/// [`parse_config_in`] with relative references resolved against the
/// current directory.
pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    parse_config_in(text, Path::new("."))
}

impl ScenarioConfig {
    /// Grid values, or a single `None` for an unscanned run.
    pub fn points(&self) -> Vec<Option<f64>> {
        match &self.scan {
            None => vec![None],
            Some(s) => s.values.iter().map(|&v| Some(v)).collect(),
        }
    }

    pub fn params_at(&self, point: Option<f64>) -> Result<Params> {
        let raw = match (point, &self.scan) {
            (Some(v), Some(s)) => with_scan_value(&self.parameters, s, v).map_err(|e| Error::Config(vec![e]))?,
            _ => self.parameters.clone(),
        };
        let mut errs = Vec::new();
        let p = typed_parameters(self.scenario, &raw, &self.base_dir, &mut errs);
        match p {
            Some(p) if errs.is_empty() => Ok(p),
            _ => Err(Error::Config(errs)),
        }
    }
}
