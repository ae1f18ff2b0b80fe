//! Sectioned TOML configuration with typo suggestions and aggregated
//! validation.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::experiments::Scenario;
use crate::functionals::{cosine, fejer, CylindricalFunctional, Outer};
use crate::kernels::{DriftModel, Normalization, Periodization};
use crate::meanfield::PositivityMode;
use crate::spde::Rho0Mode;
use crate::spectral::{from_json, identity_level, Lattice, SobolevIndices, SpectralField};
use crate::{Complex64, Error, Result};

const SECTIONS: &[(&str, &[&str])] = &[
    (
        "run",
        &[
            "dimension", "sigma", "t_final", "dt", "kmax", "l_noise", "n_mollify", "lambda", "lambda_prime",
            "master_seed", "ns", "replicas", "spde_replicas", "bootstrap", "rho0", "positivity", "sqrt_kmax", "out",
            "snapshots",
        ],
    ),
    ("drift", &["variant", "preset", "table", "alpha", "width", "normalization", "periodization", "image_radius", "cap"]),
    ("initial", &["perturbation", "amplitude"]),
    (
        "functional",
        &["outer", "phis", "s", "representer", "coef", "weights", "cutoff", "scale", "offset", "center", "width"],
    ),
    ("clt", &["test_function", "ns"]),
    ("energy", &["ns", "replicas"]),
    ("refine", &["levels"]),
    ("particles", &["n", "replicas", "trajectory_every"]),
    ("spde", &["replicas", "snapshot_every"]),
];

/// Largest coefficient count a configured lattice may have.
pub const MAX_MODES: usize = 1 << 22;

const LEVEL_KEYS: &[&str] = &["kmax", "l_noise", "n_mollify", "dt"];

/// A test function or density perturbation: a named preset
/// (`fejer:B@c1,c2`, `cos:k1,k2`, `mode:k1,k2=re,im`, `file:path.json`) or
/// an inline table of `[k1, …, kd, re, im]` rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FieldSpec {
    Named(String),
    Table(Vec<Vec<f64>>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunSection {
    pub dimension: usize,
    pub sigma: f64,
    pub t_final: f64,
    pub dt: Option<f64>,
    pub kmax: usize,
    pub l_noise: Option<usize>,
    pub n_mollify: Option<usize>,
    pub lambda: Option<f64>,
    pub lambda_prime: Option<f64>,
    pub master_seed: u64,
    pub ns: Vec<usize>,
    pub replicas: usize,
    pub spde_replicas: Option<usize>,
    pub bootstrap: usize,
    pub rho0: Rho0Mode,
    pub positivity: PositivityMode,
    pub sqrt_kmax: Option<usize>,
    pub out: Option<String>,
    /// Evenly spaced output intervals of `solve-fp`.
    pub snapshots: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            dimension: 1,
            sigma: 1.0,
            t_final: 0.25,
            dt: None,
            kmax: 16,
            l_noise: None,
            n_mollify: None,
            lambda: None,
            lambda_prime: None,
            master_seed: 0,
            ns: vec![64, 128, 256, 512],
            replicas: 10_000,
            spde_replicas: None,
            bootstrap: 1000,
            rho0: Rho0Mode::Clt,
            positivity: PositivityMode::Error,
            sqrt_kmax: None,
            out: None,
            snapshots: 10,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftVariant {
    Smooth,
    BiotSavart,
    Coulomb,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmoothPreset {
    Zero,
    Sine1d,
    GaussReg,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizationChoice {
    MeanField,
    Unscaled,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PeriodizationChoice {
    Ewald,
    Images,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DriftSection {
    pub variant: DriftVariant,
    /// Named smooth kernel; ignored when `table` is given.
    pub preset: SmoothPreset,
    /// Smooth multiplier rows `[k1, …, kd, re_1, im_1, …, re_d, im_d]`.
    pub table: Option<Vec<Vec<f64>>>,
    pub alpha: f64,
    pub width: f64,
    pub normalization: NormalizationChoice,
    pub periodization: PeriodizationChoice,
    pub image_radius: i64,
    pub cap: Option<f64>,
}

impl Default for DriftSection {
    fn default() -> Self {
        DriftSection {
            variant: DriftVariant::Smooth,
            preset: SmoothPreset::Zero,
            table: None,
            alpha: 1.0,
            width: 0.1,
            normalization: NormalizationChoice::MeanField,
            periodization: PeriodizationChoice::Ewald,
            image_radius: 30,
            cap: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InitialSection {
    /// Added to the uniform density with weight `amplitude`.
    pub perturbation: Option<FieldSpec>,
    pub amplitude: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OuterChoice {
    Linear,
    Quadratic,
    TanhProduct,
    GaussBump,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SobolevChoice {
    Auto(String),
    Value(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FunctionalSection {
    pub outer: OuterChoice,
    pub phis: Vec<FieldSpec>,
    pub s: SobolevChoice,
    /// Treat `phis` as function-side test functions, so coordinates are
    /// plain pairings `∫ ψ dρ`.
    pub representer: bool,
    pub coef: Option<Vec<f64>>,
    pub weights: Option<Vec<f64>>,
    pub cutoff: Option<f64>,
    pub scale: Option<Vec<f64>>,
    pub offset: Option<Vec<f64>>,
    pub center: Option<Vec<f64>>,
    pub width: Option<f64>,
}

impl Default for FunctionalSection {
    fn default() -> Self {
        FunctionalSection {
            outer: OuterChoice::Linear,
            phis: vec![FieldSpec::Named("cos:1".into())],
            s: SobolevChoice::Auto("auto".into()),
            representer: true,
            coef: None,
            weights: None,
            cutoff: None,
            scale: None,
            offset: None,
            center: None,
            width: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CltSection {
    pub test_function: FieldSpec,
    pub ns: Vec<usize>,
}

impl Default for CltSection {
    fn default() -> Self {
        CltSection { test_function: FieldSpec::Named("cos:1".into()), ns: vec![128, 1024] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnergySection {
    pub ns: Vec<usize>,
    pub replicas: usize,
}

impl Default for EnergySection {
    fn default() -> Self {
        EnergySection { ns: vec![64, 128, 256, 512, 1024, 2048, 4096], replicas: 2000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Level {
    pub kmax: usize,
    pub l_noise: Option<usize>,
    pub n_mollify: Option<usize>,
    pub dt: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RefineSection {
    pub levels: Vec<Level>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ParticlesSection {
    pub n: usize,
    pub replicas: usize,
    /// Trajectory rows every this many steps; 0 writes the final state only.
    pub trajectory_every: usize,
}

impl Default for ParticlesSection {
    fn default() -> Self {
        ParticlesSection { n: 256, replicas: 1, trajectory_every: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpdeSection {
    pub replicas: usize,
    /// Snapshot every this many steps; 0 writes the final state only.
    pub snapshot_every: usize,
}

impl Default for SpdeSection {
    fn default() -> Self {
        SpdeSection { replicas: 1, snapshot_every: 0 }
    }
}

/// Fully resolved configuration: every optional knob is filled in.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub run: RunSection,
    pub drift: DriftSection,
    pub initial: InitialSection,
    pub functional: FunctionalSection,
    pub clt: CltSection,
    pub energy: EnergySection,
    pub refine: RefineSection,
    pub particles: ParticlesSection,
    pub spde: SpdeSection,
}

fn nearest<'a>(key: &str, candidates: impl IntoIterator<Item = &'a str>) -> Option<&'a str> {
    candidates
        .into_iter()
        .map(|c| (strsim::jaro_winkler(key, c), c))
        .filter(|(score, _)| *score > 0.7)
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, c)| c)
}

fn unknown(path: &str, key: &str, candidates: &[&str]) -> String {
    match nearest(key, candidates.iter().copied()) {
        Some(s) => format!("unknown key `{path}{key}` (did you mean `{path}{s}`?)"),
        None => format!("unknown key `{path}{key}`"),
    }
}

fn check_keys(table: &toml::Table) -> Vec<String> {
    let mut errs = Vec::new();
    let section_names: Vec<&str> = SECTIONS.iter().map(|s| s.0).collect();
    for (name, value) in table {
        let Some((_, keys)) = SECTIONS.iter().find(|s| s.0 == name) else {
            errs.push(unknown("", name, &section_names));
            continue;
        };
        let Some(section) = value.as_table() else {
            errs.push(format!("`{name}` must be a section"));
            continue;
        };
        for (key, v) in section {
            if !keys.contains(&key.as_str()) {
                errs.push(unknown(&format!("{name}."), key, keys));
            } else if name == "refine" && key == "levels" {
                for (i, level) in v.as_array().into_iter().flatten().enumerate() {
                    for k in level.as_table().into_iter().flat_map(|t| t.keys()) {
                        if !LEVEL_KEYS.contains(&k.as_str()) {
                            errs.push(unknown(&format!("refine.levels[{i}]."), k, LEVEL_KEYS));
                        }
                    }
                }
            }
        }
    }
    errs
}

/// Applies a `dotted.path=value` override; values parse as TOML and fall
/// back to bare strings.
pub fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(vec![format!("override `{spec}` is not of the form key=value")]))?;
    let value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let parts: Vec<&str> = path.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(vec![format!("override path `{path}` is malformed")]));
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(vec![format!("override path `{path}` crosses a non-table value")]))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// Parses, applies overrides, and validates, reporting every problem at once.
pub fn parse_config_str(text: &str, overrides: &[String]) -> Result<ExperimentConfig> {
    let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(vec![e.to_string()]))?;
    let mut errs = Vec::new();
    for o in overrides {
        if let Err(Error::Config(v)) = apply_override(&mut table, o) {
            errs.extend(v);
        }
    }
    errs.extend(check_keys(&table));
    if !errs.is_empty() {
        return Err(Error::Config(errs));
    }
    let mut cfg: ExperimentConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| Error::Config(vec![e.to_string().trim().to_string()]))?;
    cfg.resolve();
    let errs = cfg.violations();
    if errs.is_empty() {
        Ok(cfg)
    } else {
        Err(Error::Config(errs))
    }
}

pub fn parse_config(path: &Path, overrides: &[String]) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(vec![format!("cannot read config {}: {e}", path.display())]))?;
    parse_config_str(&text, overrides)
}

impl ExperimentConfig {
    fn resolve(&mut self) {
        let r = &mut self.run;
        let d = r.dimension as f64;
        r.dt.get_or_insert(r.t_final / 2000.0);
        r.l_noise.get_or_insert(r.kmax);
        r.spde_replicas.get_or_insert(r.replicas);
        let lambda = *r.lambda.get_or_insert(1.5 * d + 0.5);
        r.lambda_prime.get_or_insert(lambda + 1.5);
        if let Ok(l) = Lattice::new(r.dimension, r.kmax) {
            r.n_mollify.get_or_insert(identity_level(l));
        }
        if let SobolevChoice::Auto(_) = self.functional.s {
            self.functional.s = SobolevChoice::Value(-lambda - 2.0);
        }
        for level in &mut self.refine.levels {
            level.l_noise.get_or_insert(level.kmax);
            level.dt.get_or_insert(self.run.dt.expect("resolved"));
            if let Ok(l) = Lattice::new(self.run.dimension, level.kmax) {
                level.n_mollify.get_or_insert(identity_level(l));
            }
        }
    }

    pub fn dt(&self) -> f64 {
        self.run.dt.expect("resolved")
    }

    pub fn s(&self) -> f64 {
        match self.functional.s {
            SobolevChoice::Value(s) => s,
            SobolevChoice::Auto(_) => unreachable!("resolved"),
        }
    }

    /// Every violated constraint, not just the first.
    pub fn violations(&self) -> Vec<String> {
        let r = &self.run;
        let mut v = Vec::new();
        if !(1..=3).contains(&r.dimension) {
            v.push(format!("run.dimension must be 1, 2 or 3, got {}", r.dimension));
        }
        if !(r.sigma >= 0.0 && r.sigma.is_finite()) {
            v.push(format!("run.sigma must be non-negative, got {}", r.sigma));
        }
        let dt = self.dt();
        if !(dt > 0.0 && dt.is_finite()) {
            v.push(format!("run.dt must be positive, got {dt}"));
        }
        if !(r.t_final >= dt) {
            v.push(format!("run.t_final must be at least dt, got t_final = {} and dt = {dt}", r.t_final));
        }
        if r.kmax < 2 {
            v.push(format!("run.kmax must be at least 2, got {}", r.kmax));
        }
        if r.ns.is_empty() || r.ns.contains(&0) {
            v.push("run.ns must be a non-empty list of particle counts ≥ 1".into());
        }
        if r.replicas < 2 || r.spde_replicas.is_some_and(|s| s < 2) {
            v.push("run.replicas and run.spde_replicas must be at least 2".into());
        }
        if let Some(s) = r.sqrt_kmax {
            if s < r.kmax {
                v.push(format!("run.sqrt_kmax must be at least kmax = {}, got {s}", r.kmax));
            }
        }
        v.extend(SobolevIndices::violations(r.dimension, r.lambda.expect("resolved"), r.lambda_prime.expect("resolved")));
        match (self.drift.variant, r.dimension) {
            (DriftVariant::BiotSavart, d) if d != 2 => {
                v.push(format!("drift.variant = \"biot_savart\" is defined for d = 2 only, got d = {d}"))
            }
            (DriftVariant::Coulomb, d) if d < 2 => v.push("drift.variant = \"coulomb\" needs d = 2 or 3".into()),
            _ => {}
        }
        if let Some(c) = self.drift.cap {
            if !(c > 0.0) {
                v.push(format!("drift.cap must be positive, got {c}"));
            }
        }
        if self.particles.n == 0 || self.particles.replicas == 0 || self.spde.replicas == 0 {
            v.push("particles.n, particles.replicas and spde.replicas must be at least 1".into());
        }
        if r.snapshots == 0 {
            v.push("run.snapshots must be at least 1".into());
        }
        if self.energy.ns.contains(&0) {
            v.push("energy.ns must be particle counts ≥ 1".into());
        }
        if self.clt.ns.contains(&0) {
            v.push("clt.ns must be particle counts ≥ 1".into());
        }
        for (i, level) in self.refine.levels.iter().enumerate() {
            if level.kmax < 2 || level.dt.is_some_and(|dt| !(dt > 0.0)) {
                v.push(format!("refine.levels[{i}] needs kmax ≥ 2 and dt > 0"));
            }
        }
        let too_big = |name: &str, k: Option<usize>, v: &mut Vec<String>| {
            if let Some(k) = k {
                let count = (2 * k as u128 + 1).checked_pow(r.dimension.min(3) as u32);
                if count.is_none_or(|c| c > MAX_MODES as u128) {
                    v.push(format!("{name} = {k} gives more than {MAX_MODES} modes in d = {}", r.dimension));
                }
            }
        };
        too_big("run.kmax", Some(r.kmax), &mut v);
        too_big("run.l_noise", r.l_noise, &mut v);
        too_big("run.sqrt_kmax", r.sqrt_kmax, &mut v);
        for (i, level) in self.refine.levels.iter().enumerate() {
            too_big(&format!("refine.levels[{i}].kmax"), Some(level.kmax), &mut v);
            too_big(&format!("refine.levels[{i}].l_noise"), level.l_noise, &mut v);
        }
        if v.is_empty() {
            // Constructing the runtime objects surfaces the remaining problems.
            if let Err(e) = self.model() {
                v.push(format!("drift: {e}"));
            }
            if let Err(e) = self.mu0() {
                v.push(format!("initial: {e}"));
            }
            if let Err(e) = self.functional() {
                v.push(format!("functional: {e}"));
            }
            if let Err(e) = self.field(&self.clt.test_function) {
                v.push(format!("clt.test_function: {e}"));
            }
        }
        v
    }

    pub fn lattice(&self) -> Result<Lattice> {
        Lattice::new(self.run.dimension, self.run.kmax)
    }

    pub fn model_on(&self, lattice: Lattice) -> Result<DriftModel> {
        let dr = &self.drift;
        let model = match (dr.variant, &dr.table, dr.preset) {
            (DriftVariant::Smooth, Some(rows), _) => DriftModel::smooth("table", lattice, multiplier_table(rows, lattice.d())?)?,
            (DriftVariant::Smooth, None, SmoothPreset::Zero) => DriftModel::zero(lattice),
            (DriftVariant::Smooth, None, SmoothPreset::Sine1d) => DriftModel::sine1d(lattice, dr.alpha)?,
            (DriftVariant::Smooth, None, SmoothPreset::GaussReg) => DriftModel::gauss_reg(lattice, dr.alpha, dr.width)?,
            (DriftVariant::BiotSavart, ..) => DriftModel::biot_savart(lattice)?,
            (DriftVariant::Coulomb, ..) => DriftModel::coulomb(lattice)?,
        };
        let norm = match dr.normalization {
            NormalizationChoice::MeanField => Normalization::MeanField,
            NormalizationChoice::Unscaled => Normalization::Unscaled,
        };
        let per = match dr.periodization {
            PeriodizationChoice::Ewald => Periodization::Ewald,
            PeriodizationChoice::Images => Periodization::ImageSum { radius: dr.image_radius },
        };
        Ok(model.with_normalization(norm).with_periodization(per).with_cap(dr.cap))
    }

    pub fn model(&self) -> Result<DriftModel> {
        self.model_on(self.lattice()?)
    }

    /// Resolves a field spec on the run lattice.
    pub fn field(&self, spec: &FieldSpec) -> Result<SpectralField> {
        parse_field(spec, self.lattice()?)
    }

    pub fn mu0_on(&self, lattice: Lattice) -> Result<SpectralField> {
        let mut mu = SpectralField::uniform(lattice);
        if let Some(p) = &self.initial.perturbation {
            let mut f = parse_field(p, lattice)?;
            f.coeffs_mut()[lattice.zero_index()] = Complex64::new(0.0, 0.0);
            mu.axpy(Complex64::new(self.initial.amplitude, 0.0), &f);
        }
        Ok(mu)
    }

    pub fn mu0(&self) -> Result<SpectralField> {
        self.mu0_on(self.lattice()?)
    }

    pub fn outer(&self) -> Result<Outer> {
        let f = &self.functional;
        let m = f.phis.len();
        let need = |name: &str, v: &Option<Vec<f64>>| -> Result<Vec<f64>> {
            let v = v.clone().ok_or_else(|| Error::Domain(format!("functional.{name} is required for this outer map")))?;
            if v.len() != m {
                return Err(Error::Shape(format!("functional.{name} has {} entries for {m} test functions", v.len())));
            }
            Ok(v)
        };
        let outer = match f.outer {
            OuterChoice::Linear => Outer::Linear { coef: need("coef", &f.coef.clone().or(Some(vec![1.0; m])))? },
            OuterChoice::Quadratic => {
                Outer::Quadratic { weights: need("weights", &f.weights.clone().or(Some(vec![1.0; m])))?, cutoff: f.cutoff }
            }
            OuterChoice::TanhProduct => Outer::TanhProduct {
                scale: need("scale", &f.scale.clone().or(Some(vec![1.0; m])))?,
                offset: need("offset", &f.offset.clone().or(Some(vec![0.0; m])))?,
            },
            OuterChoice::GaussBump => Outer::GaussBump {
                center: need("center", &f.center.clone().or(Some(vec![0.0; m])))?,
                width: f.width.unwrap_or(1.0),
            },
        };
        outer.validate()?;
        Ok(outer)
    }

    pub fn functional(&self) -> Result<CylindricalFunctional> {
        let lattice = self.lattice()?;
        let fields = self.functional.phis.iter().map(|p| parse_field(p, lattice)).collect::<Result<Vec<_>>>()?;
        if self.functional.representer {
            CylindricalFunctional::from_test_functions(fields, self.outer()?, self.s())
        } else {
            CylindricalFunctional::new(fields, self.outer()?, self.s())
        }
    }

    pub fn scenario(&self) -> Result<Scenario> {
        let r = &self.run;
        let mut sc = Scenario::new(self.model()?, r.sigma, self.mu0()?, r.t_final, self.dt(), r.master_seed);
        sc.l_noise = r.l_noise.expect("resolved");
        sc.n_mollify = r.n_mollify.expect("resolved");
        sc.rho0 = r.rho0;
        sc.positivity = r.positivity;
        sc.sqrt_kmax = r.sqrt_kmax;
        Ok(sc)
    }

    /// Scenarios for each refinement level.
    pub fn levels(&self) -> Result<Vec<Scenario>> {
        self.refine
            .levels
            .iter()
            .map(|lv| {
                let lattice = Lattice::new(self.run.dimension, lv.kmax)?;
                let mut sc = self.scenario()?;
                sc.model = self.model_on(lattice)?;
                sc.mu0 = self.mu0_on(lattice)?;
                sc.l_noise = lv.l_noise.expect("resolved");
                sc.n_mollify = lv.n_mollify.expect("resolved");
                sc.dt = lv.dt.expect("resolved");
                Ok(sc)
            })
            .collect()
    }
}

fn multiplier_table(rows: &[Vec<f64>], d: usize) -> Result<Vec<([i64; 3], Vec<Complex64>)>> {
    rows.iter()
        .map(|row| {
            if row.len() != 3 * d || row[..d].iter().any(|x| x.fract() != 0.0) {
                return Err(Error::Format(format!(
                    "multiplier rows need {d} integer indices then {d} (re, im) pairs; got {row:?}"
                )));
            }
            let k = mode_of(&row[..d].iter().map(|x| *x as i64).collect::<Vec<_>>(), d)?;
            Ok((k, row[d..].chunks(2).map(|c| Complex64::new(c[0], c[1])).collect()))
        })
        .collect()
}

fn numbers<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|p| p.trim().parse::<T>().map_err(|_| Error::Format(format!("cannot parse {what} `{p}`"))))
        .collect()
}

fn mode_of(v: &[i64], d: usize) -> Result<[i64; 3]> {
    if v.len() > d {
        return Err(Error::Shape(format!("mode {v:?} has more than {d} components")));
    }
    let mut k = [0; 3];
    k[..v.len()].copy_from_slice(v);
    Ok(k)
}

/// Builds a real field on `lattice` from a [`FieldSpec`].
pub fn parse_field(spec: &FieldSpec, lattice: Lattice) -> Result<SpectralField> {
    let d = lattice.d();
    match spec {
        FieldSpec::Table(rows) => {
            let mut f = SpectralField::zeros(lattice);
            for row in rows {
                if row.len() != d + 2 || row[..d].iter().any(|x| x.fract() != 0.0) {
                    return Err(Error::Format(format!("mode table rows need {d} integer indices then re, im; got {row:?}")));
                }
                let k = mode_of(&row[..d].iter().map(|x| *x as i64).collect::<Vec<_>>(), d)?;
                let c = Complex64::new(row[d], row[d + 1]);
                f.set(&k, c)?;
                f.set(&[-k[0], -k[1], -k[2]], c.conj())?;
            }
            Ok(f)
        }
        FieldSpec::Named(name) => {
            let (kind, rest) = name.split_once(':').unwrap_or((name.as_str(), ""));
            match kind {
                "fejer" => {
                    let (b, c) = rest.split_once('@').unwrap_or((rest, ""));
                    let b = b.trim().parse::<usize>().map_err(|_| Error::Format(format!("bad Fejér bandwidth in `{name}`")))?;
                    let center = if c.is_empty() { vec![0.0; d] } else { numbers::<f64>(c, "centre")? };
                    fejer(lattice, b, &center)
                }
                "cos" => cosine(lattice, &mode_of(&numbers::<i64>(rest, "mode")?, d)?),
                "mode" => {
                    let (k, c) = rest
                        .split_once('=')
                        .ok_or_else(|| Error::Format(format!("`{name}` should read mode:k1,k2=re,im")))?;
                    let c = numbers::<f64>(c, "coefficient")?;
                    if c.len() != 2 {
                        return Err(Error::Format(format!("`{name}` needs a coefficient re,im")));
                    }
                    parse_field(&FieldSpec::Table(vec![numbers::<f64>(k, "mode")?.into_iter().chain(c).collect()]), lattice)
                }
                "file" => from_json(&std::fs::read_to_string(rest)?)?.resized(lattice),
                _ => Err(Error::Format(format!("unknown field `{name}`; expected fejer:, cos:, mode: or file:"))),
            }
        }
    }
}
