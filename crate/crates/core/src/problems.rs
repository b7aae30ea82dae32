//! Run configurations, the four built-in experiments and the `key = value`
//! config format.

use std::f64::consts::PI;
use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use crate::assembly::{interpolate_nodal, Assembler, NodalVector};
use crate::error::{invalid, io_err, Error, Result};
use crate::mesh::{build_structured_mesh, Mesh, Point, Subdomain};
use crate::optimizer::{DirectionMode, OptimizerParams};
use crate::pde::{ObjectiveKind, ObjectiveSpec, StateSolver};
use crate::penalty::{sample_coefficient, CoefficientSample};
use crate::solver::{CgOptions, DEFAULT_TOL};

/// Closed-form data functions selectable by name.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FieldTag {
    Const(f64),
    /// `-(x1 - 1/2)^2 - (x2 - 1/2)^2 + 1/8`
    Ex1Target,
    /// `7/8 - x1^2 - x2^2`
    Ex1Shape,
    /// `2 pi^2 sin(pi x1) sin(pi x2) + 1`
    Ex2Force,
    /// `sin(pi x1) sin(pi x2)`
    SinProduct,
    /// `-sin(pi x1) sin(pi x2)`
    NegSinProduct,
    /// `2 pi^2 sin(pi x1) sin(pi x2)`
    ManufacturedForce,
    /// `-(x1 - 1/4)^2 - (x2 - 1/4)^2 + 1/25`
    Ex4Target,
    /// `min{1 - |x|^2, |x|^2 - 1/64, (x1 - 1/2)^2 + x2^2 - 1/16}`
    Ex4Shape,
    /// `x1`
    PlaneX,
    /// `1/4 - x1^2 - x2^2`
    CircleHalf,
}

impl FieldTag {
    pub fn eval(&self, p: Point) -> f64 {
        let [x, y] = p;
        let sin_sin = || (PI * x).sin() * (PI * y).sin();
        match *self {
            FieldTag::Const(v) => v,
            FieldTag::Ex1Target => -(x - 0.5).powi(2) - (y - 0.5).powi(2) + 0.125,
            FieldTag::Ex1Shape => 0.875 - x * x - y * y,
            FieldTag::Ex2Force => 2.0 * PI * PI * sin_sin() + 1.0,
            FieldTag::SinProduct => sin_sin(),
            FieldTag::NegSinProduct => -sin_sin(),
            FieldTag::ManufacturedForce => 2.0 * PI * PI * sin_sin(),
            FieldTag::Ex4Target => -(x - 0.25).powi(2) - (y - 0.25).powi(2) + 0.04,
            FieldTag::Ex4Shape => {
                let r2 = x * x + y * y;
                (1.0 - r2).min(r2 - 1.0 / 64.0).min((x - 0.5).powi(2) + y * y - 1.0 / 16.0)
            }
            FieldTag::PlaneX => x,
            FieldTag::CircleHalf => 0.25 - x * x - y * y,
        }
    }

    pub fn interpolate(&self, mesh: &Mesh) -> NodalVector {
        interpolate_nodal(mesh, |p| self.eval(p))
    }
}

impl fmt::Display for FieldTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            FieldTag::Const(v) => return write!(f, "const:{v:?}"),
            FieldTag::Ex1Target => "ex1_target",
            FieldTag::Ex1Shape => "ex1_shape",
            FieldTag::Ex2Force => "ex2_force",
            FieldTag::SinProduct => "sin_product",
            FieldTag::NegSinProduct => "neg_sin_product",
            FieldTag::ManufacturedForce => "manufactured_force",
            FieldTag::Ex4Target => "ex4_target",
            FieldTag::Ex4Shape => "ex4_shape",
            FieldTag::PlaneX => "plane_x",
            FieldTag::CircleHalf => "circle_half",
        };
        f.write_str(name)
    }
}

impl FromStr for FieldTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if let Some(v) = s.strip_prefix("const:") {
            return parse_f64(v).map(FieldTag::Const);
        }
        Ok(match s {
            "ex1_target" => FieldTag::Ex1Target,
            "ex1_shape" => FieldTag::Ex1Shape,
            "ex2_force" => FieldTag::Ex2Force,
            "sin_product" => FieldTag::SinProduct,
            "neg_sin_product" => FieldTag::NegSinProduct,
            "manufactured_force" => FieldTag::ManufacturedForce,
            "ex4_target" => FieldTag::Ex4Target,
            "ex4_shape" => FieldTag::Ex4Shape,
            "plane_x" => FieldTag::PlaneX,
            "circle_half" => FieldTag::CircleHalf,
            other => return invalid(format!("unknown field tag `{other}`")),
        })
    }
}

fn parse_f64(s: &str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::InvalidArgument(format!("`{s}` is not a number")))
}

fn objective_name(kind: ObjectiveKind) -> &'static str {
    match kind {
        ObjectiveKind::Subdomain => "on_O",
        ObjectiveKind::Shape => "on_K",
    }
}

fn parse_objective(s: &str) -> Result<ObjectiveKind> {
    match s {
        "on_O" => Ok(ObjectiveKind::Subdomain),
        "on_K" => Ok(ObjectiveKind::Shape),
        other => invalid(format!("unknown objective `{other}` (expected on_O or on_K)")),
    }
}

/// `square:<half_width>:<cx>:<cy>`, `disk:<radius>:<cx>:<cy>` or `none`.
pub fn format_subdomain(s: &Subdomain) -> String {
    match s {
        Subdomain::Square { half_width, center } => format!("square:{half_width:?}:{:?}:{:?}", center[0], center[1]),
        Subdomain::Disk { radius, center } => format!("disk:{radius:?}:{:?}:{:?}", center[0], center[1]),
        Subdomain::None => "none".to_string(),
    }
}

/// Inverse of [`format_subdomain`]; the center defaults to the origin.
pub fn parse_subdomain(s: &str) -> Result<Subdomain> {
    if s == "none" {
        return Ok(Subdomain::None);
    }
    let mut parts = s.split(':');
    let kind = parts.next().unwrap_or_default();
    let nums = parts.map(parse_f64).collect::<Result<Vec<_>>>()?;
    let (size, center) = match nums.as_slice() {
        [r] => (*r, [0.0, 0.0]),
        [r, cx, cy] => (*r, [*cx, *cy]),
        _ => return invalid(format!("malformed subdomain `{s}`")),
    };
    match kind {
        "square" => Subdomain::square(size, center),
        "disk" => Subdomain::disk(size, center),
        _ => invalid(format!("unknown subdomain kind in `{s}`")),
    }
}

/// Complete description of one optimization run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub example: Option<u8>,
    pub grid_n: usize,
    pub eps: f64,
    pub rho: f64,
    pub n_samples: usize,
    pub seed: u64,
    pub direction: DirectionMode,
    pub objective: ObjectiveKind,
    /// Observation region `O` of a subdomain objective.
    pub observation: Subdomain,
    /// Region where `g >= 0` is enforced by projection.
    pub constraint: Subdomain,
    pub force: FieldTag,
    pub target: FieldTag,
    pub initial_shape: FieldTag,
    pub optimizer: OptimizerParams,
    pub cg_tol: f64,
    /// Draw a fresh sample set after every accepted step.
    pub resample: bool,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let o = Subdomain::Square {
            half_width: 0.5,
            center: [0.0, 0.0],
        };
        Self {
            example: None,
            grid_n: 128,
            eps: 1e-5,
            rho: 0.01,
            n_samples: 100,
            seed: 1,
            direction: DirectionMode::Simplified,
            objective: ObjectiveKind::Subdomain,
            observation: o,
            constraint: o,
            force: FieldTag::Const(2.0),
            target: FieldTag::Ex1Target,
            initial_shape: FieldTag::Ex1Shape,
            optimizer: OptimizerParams::default(),
            cg_tol: DEFAULT_TOL,
            resample: false,
            out_dir: PathBuf::from("out"),
        }
    }
}

/// The four built-in experiments.
pub fn preset(example_id: u8) -> Result<RunConfig> {
    let base = RunConfig {
        example: Some(example_id),
        ..RunConfig::default()
    };
    let disk = Subdomain::Disk {
        radius: 0.5,
        center: [0.0, 0.0],
    };
    Ok(match example_id {
        1 => base,
        2 => RunConfig {
            force: FieldTag::Ex2Force,
            target: FieldTag::NegSinProduct,
            ..base
        },
        3 => RunConfig {
            force: FieldTag::Ex2Force,
            target: FieldTag::NegSinProduct,
            observation: disk,
            constraint: disk,
            ..base
        },
        4 => RunConfig {
            direction: DirectionMode::Reduced,
            objective: ObjectiveKind::Shape,
            observation: Subdomain::None,
            constraint: Subdomain::None,
            target: FieldTag::Ex4Target,
            initial_shape: FieldTag::Ex4Shape,
            ..base
        },
        other => return invalid(format!("unknown example {other} (expected 1 to 4)")),
    })
}

const KEYS: &[&str] = &[
    "example",
    "grid_n",
    "eps",
    "rho",
    "samples",
    "seed",
    "max_iters",
    "direction",
    "objective",
    "observation",
    "constraint",
    "f",
    "ud",
    "g0",
    "alpha_min",
    "alpha_max",
    "armijo_c",
    "momentum_beta",
    "tol_cost",
    "tol_g",
    "cg_tol",
    "resample",
    "out",
];

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid_n < 2 {
            return invalid(format!("grid_n must be at least 2, got {}", self.grid_n));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return invalid(format!("eps must be positive, got {}", self.eps));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return invalid(format!("rho must lie in [0, 1), got {}", self.rho));
        }
        if self.n_samples == 0 {
            return invalid("at least one sample is required");
        }
        if !(self.cg_tol > 0.0) {
            return invalid(format!("cg_tol must be positive, got {}", self.cg_tol));
        }
        match self.objective {
            ObjectiveKind::Subdomain if self.observation.is_none() => {
                return invalid("objective on_O needs an observation subdomain")
            }
            ObjectiveKind::Shape if !self.observation.is_none() => {
                return invalid("objective on_K takes no observation subdomain")
            }
            _ => {}
        }
        self.observation.validate()?;
        self.constraint.validate()?;
        self.optimizer.validate()
    }

    pub fn mesh(&self) -> Result<Mesh> {
        build_structured_mesh(self.grid_n)
    }

    pub fn objective_spec(&self, mesh: &Mesh) -> Result<ObjectiveSpec> {
        let target = self.target.interpolate(mesh);
        match self.objective {
            ObjectiveKind::Subdomain => ObjectiveSpec::on_subdomain(target, self.observation),
            ObjectiveKind::Shape => Ok(ObjectiveSpec::on_shape(target)),
        }
    }

    /// Mesh, operators and objective for this configuration.
    pub fn state_solver(&self) -> Result<StateSolver> {
        self.validate()?;
        let mesh = Arc::new(self.mesh()?);
        let force = self.force.interpolate(&mesh);
        let objective = self.objective_spec(&mesh)?;
        let cg = CgOptions {
            tol: self.cg_tol,
            max_iter: None,
        };
        StateSolver::new(Assembler::new(mesh), self.eps, &force, objective, cg)
    }

    /// Sample set of iteration `iter`. Without resampling every iteration
    /// uses ids `0..M`; with it, iteration `k` uses ids `k*M..(k+1)*M`.
    pub fn draw_samples(&self, mesh: &Mesh, iter: usize) -> Result<Vec<CoefficientSample>> {
        let offset = if self.resample { (iter * self.n_samples) as u64 } else { 0 };
        (0..self.n_samples as u64)
            .map(|i| sample_coefficient(mesh, self.rho, self.seed, offset + i))
            .collect()
    }

    /// Serializes every field; floats use a round-trip exact representation.
    pub fn to_config_text(&self) -> String {
        let mut out = String::new();
        if let Some(ex) = self.example {
            let _ = writeln!(out, "example = {ex}");
        }
        let p = &self.optimizer;
        let _ = writeln!(out, "grid_n = {}", self.grid_n);
        let _ = writeln!(out, "eps = {:?}", self.eps);
        let _ = writeln!(out, "rho = {:?}", self.rho);
        let _ = writeln!(out, "samples = {}", self.n_samples);
        let _ = writeln!(out, "seed = {}", self.seed);
        let _ = writeln!(out, "max_iters = {}", p.max_iters);
        let _ = writeln!(out, "direction = {}", self.direction);
        let _ = writeln!(out, "objective = {}", objective_name(self.objective));
        let _ = writeln!(out, "observation = {}", format_subdomain(&self.observation));
        let _ = writeln!(out, "constraint = {}", format_subdomain(&self.constraint));
        let _ = writeln!(out, "f = {}", self.force);
        let _ = writeln!(out, "ud = {}", self.target);
        let _ = writeln!(out, "g0 = {}", self.initial_shape);
        let _ = writeln!(out, "alpha_min = {:?}", p.alpha_min);
        let _ = writeln!(out, "alpha_max = {:?}", p.alpha_max);
        let _ = writeln!(out, "armijo_c = {:?}", p.armijo_c);
        let _ = writeln!(out, "momentum_beta = {:?}", p.momentum_beta);
        let _ = writeln!(out, "tol_cost = {:?}", p.tol_cost);
        let _ = writeln!(out, "tol_g = {:?}", p.tol_g);
        let _ = writeln!(out, "cg_tol = {:?}", self.cg_tol);
        let _ = writeln!(out, "resample = {}", self.resample);
        let _ = writeln!(out, "out = {}", self.out_dir.display());
        out
    }

    /// Parses config text. An `example` key selects the starting preset
    /// wherever it appears; all other keys override it.
    pub fn from_config_text(text: &str) -> Result<Self> {
        let parse_err = |line: usize, message: String| Error::Parse {
            context: "config".to_string(),
            line,
            message,
        };
        let mut entries: Vec<(usize, &str, &str)> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or_default().trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| parse_err(idx + 1, format!("expected `key = value`, got `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            if !KEYS.contains(&key) {
                return Err(parse_err(idx + 1, format!("unknown key `{key}`")));
            }
            if entries.iter().any(|(_, k, _)| *k == key) {
                return Err(parse_err(idx + 1, format!("duplicate key `{key}`")));
            }
            entries.push((idx + 1, key, value));
        }

        let mut config = match entries.iter().find(|(_, k, _)| *k == "example") {
            Some(&(line, _, v)) => {
                let id: u8 = v.parse().map_err(|_| parse_err(line, format!("bad example id `{v}`")))?;
                preset(id).map_err(|e| parse_err(line, e.to_string()))?
            }
            None => RunConfig::default(),
        };
        for &(line, key, value) in entries.iter().filter(|(_, k, _)| *k != "example") {
            config
                .set(key, value)
                .map_err(|e| parse_err(line, format!("{key}: {e}")))?;
        }
        Ok(config)
    }

    /// Sets one field from its config-file key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let int = |v: &str| -> Result<u64> {
            v.parse()
                .map_err(|_| Error::InvalidArgument(format!("`{v}` is not a nonnegative integer")))
        };
        let p = &mut self.optimizer;
        match key {
            "example" => *self = preset(int(value)? as u8)?,
            "grid_n" => self.grid_n = int(value)? as usize,
            "eps" => self.eps = parse_f64(value)?,
            "rho" => self.rho = parse_f64(value)?,
            "samples" => self.n_samples = int(value)? as usize,
            "seed" => self.seed = int(value)?,
            "max_iters" => p.max_iters = int(value)? as usize,
            "direction" => self.direction = value.parse()?,
            "objective" => self.objective = parse_objective(value)?,
            "observation" => self.observation = parse_subdomain(value)?,
            "constraint" => self.constraint = parse_subdomain(value)?,
            "f" => self.force = value.parse()?,
            "ud" => self.target = value.parse()?,
            "g0" => self.initial_shape = value.parse()?,
            "alpha_min" => p.alpha_min = parse_f64(value)?,
            "alpha_max" => p.alpha_max = parse_f64(value)?,
            "armijo_c" => p.armijo_c = parse_f64(value)?,
            "momentum_beta" => p.momentum_beta = parse_f64(value)?,
            "tol_cost" => p.tol_cost = parse_f64(value)?,
            "tol_g" => p.tol_g = parse_f64(value)?,
            "cg_tol" => self.cg_tol = parse_f64(value)?,
            "resample" => {
                self.resample = value
                    .parse()
                    .map_err(|_| Error::InvalidArgument(format!("`{value}` is not true or false")))?
            }
            "out" => self.out_dir = PathBuf::from(value),
            other => return invalid(format!("unknown key `{other}`")),
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_config_text(&text).map_err(|e| match e {
            Error::Parse { line, message, .. } => Error::Parse {
                context: path.display().to_string(),
                line,
                message,
            },
            other => other,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_config_text()).map_err(io_err(path))
    }
}
