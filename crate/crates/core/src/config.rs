//! Structured-text run configuration.
//!
//! A run is described by a TOML file with the sections `graph`, `domain`,
//! `potential`, `solver` and `harness`. Only `graph.lengths` is required:
//!
//! ```toml
//! [graph]
//! lengths = [1.0, 1.0, 1.0]
//!
//! [potential]
//! kind = "cosine"
//! rho = 0.5
//! C_V_target = 1.0
//! ```
//!
//! Every field is checked against the preconditions of the module that
//! consumes it before anything is computed.

use std::f64::consts::TAU;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::harness::{ConvergenceConfig, RecoveryTest};
use crate::star_graph::MetricStarGraph;
use crate::thin_domain::{compute_c_v, solve_amplitude, JunctionShape, PotentialSpec, ThinDomainSpec};

pub const DEFAULT_EPS: f64 = 0.1;
pub const DEFAULT_SWEEP: [f64; 3] = [0.2, 0.1, 0.05];

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    graph: Option<RawGraph>,
    #[serde(default)]
    domain: RawDomain,
    #[serde(default)]
    potential: RawPotential,
    #[serde(default)]
    solver: RawSolver,
    #[serde(default)]
    harness: RawHarness,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGraph {
    lengths: Vec<f64>,
    angles: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDomain {
    eps: Option<f64>,
    eps0: Option<f64>,
    l: Option<f64>,
    a: Option<f64>,
    /// Junction polygon corners at the reference scale, counterclockwise.
    junction: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPotential {
    kind: Option<String>,
    v0: Option<f64>,
    #[serde(rename = "C_V_target")]
    c_v_target: Option<f64>,
    rho: Option<f64>,
    half_width: Option<f64>,
    ramp: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSolver {
    h: Option<f64>,
    h_factor: Option<f64>,
    layers: Option<usize>,
    modes: Option<usize>,
    tol: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawHarness {
    eps: Option<Vec<f64>>,
    threads: Option<usize>,
    recovery_test: Option<String>,
    heat_time: Option<f64>,
    heat_modes: Option<usize>,
}

/// Command-line values that replace file values.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub eps: Option<f64>,
    pub h: Option<f64>,
    pub modes: Option<usize>,
    pub tol: Option<f64>,
    pub threads: Option<usize>,
}

/// Validated run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub graph: MetricStarGraph,
    /// Width used by the single-`ε` subcommands.
    pub eps: f64,
    pub eps0: f64,
    pub l: f64,
    pub a: Option<f64>,
    pub junction: JunctionShape,
    pub potential: PotentialSpec,
    /// Junction coupling constant of `potential`.
    pub c_v: f64,
    /// Explicit mesh size for the single-`ε` subcommands.
    pub h: Option<f64>,
    pub h_factor: f64,
    pub layers: Option<usize>,
    pub modes: usize,
    pub tol: f64,
    pub sweep: Vec<f64>,
    pub threads: usize,
    pub recovery_test: RecoveryTest,
    pub heat_time: f64,
    pub heat_modes: usize,
}

impl RunConfig {
    /// Thin domain at the configured single `ε`.
    pub fn spec(&self) -> Result<ThinDomainSpec> {
        self.spec_at(self.eps)
    }

    pub fn spec_at(&self, eps: f64) -> Result<ThinDomainSpec> {
        let spec = ThinDomainSpec::new(&self.graph, eps, self.eps0, self.l, self.junction.clone())?;
        match self.a {
            Some(a) => spec.with_a(a),
            None => Ok(spec),
        }
    }

    /// Mesh size at the single `ε`.
    pub fn mesh_size(&self) -> f64 {
        self.h.unwrap_or(self.h_factor * self.eps)
    }

    pub fn convergence(&self) -> ConvergenceConfig {
        let mut c = ConvergenceConfig::new(self.graph.clone(), self.sweep.clone());
        c.eps0 = self.eps0;
        c.l = self.l;
        c.a = self.a;
        c.junction = self.junction.clone();
        c.potential = self.potential.clone();
        c.h_factor = self.h_factor;
        c.layers = self.layers;
        c.modes = self.modes;
        c.tol = self.tol;
        c.recovery_test = self.recovery_test;
        c.heat_time = self.heat_time;
        c.heat_modes = self.heat_modes.min(self.modes);
        c.threads = self.threads;
        c
    }
}

pub fn parse_config(path: &Path, overrides: &Overrides) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config_str(&text, overrides)
}

pub fn parse_config_str(text: &str, overrides: &Overrides) -> Result<RunConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
    build(raw, overrides)
}

fn invariant(module: &str, e: Error) -> Error {
    match e {
        Error::Config(_) => e,
        other => Error::Config(format!("{module} invariant violated: {other}")),
    }
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Config(format!("{name} must be positive and finite, got {v}")))
    }
}

fn build(raw: RawConfig, ov: &Overrides) -> Result<RunConfig> {
    let g = raw.graph.ok_or_else(|| Error::Config("missing required key graph.lengths".into()))?;
    let n = g.lengths.len();
    let angles = match g.angles {
        Some(a) => a,
        None => (0..n).map(|j| TAU * j as f64 / n as f64).collect(),
    };
    let graph = MetricStarGraph::new(&g.lengths, &angles).map_err(|e| invariant("MetricStarGraph", e))?;

    let d = raw.domain;
    let eps0 = positive("domain.eps0", d.eps0.unwrap_or(0.25))?;
    let l = positive("domain.l", d.l.unwrap_or(1.0))?;
    let eps = positive("domain.eps", ov.eps.or(d.eps).unwrap_or(DEFAULT_EPS.min(eps0)))?;
    let junction = match d.junction {
        Some(p) => JunctionShape::Polygon(p.iter().map(|c| Point::new(c[0], c[1])).collect()),
        None => JunctionShape::Auto,
    };

    let s = raw.solver;
    if s.h.is_some() && s.h_factor.is_some() {
        return Err(Error::Config("give at most one of solver.h and solver.h_factor".into()));
    }
    let h = ov.h.or(s.h).map(|h| positive("solver.h", h)).transpose()?;
    let h_factor = positive("solver.h_factor", s.h_factor.unwrap_or(0.25))?;
    if h_factor > 1.0 {
        return Err(Error::Config(format!("solver.h_factor = {h_factor} violates the mesh2d precondition h <= eps")));
    }
    if let Some(h) = h {
        if h > eps {
            return Err(Error::Config(format!("solver.h = {h} violates the mesh2d precondition h <= eps = {eps}")));
        }
    }
    if s.layers.is_some_and(|k| k < 2) {
        return Err(Error::Config("solver.layers violates the mesh2d precondition layers >= 2".into()));
    }
    let modes = ov.modes.or(s.modes).unwrap_or(6);
    if modes == 0 {
        return Err(Error::Config("solver.modes must be at least 1".into()));
    }
    let tol = positive("solver.tol", ov.tol.or(s.tol).unwrap_or(1e-8))?;

    let hs = raw.harness;
    let sweep = hs.eps.unwrap_or_else(|| DEFAULT_SWEEP.to_vec());
    if sweep.len() < 3 || sweep.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::Config(
            "harness.eps must hold at least three strictly decreasing values".into(),
        ));
    }
    let threads = ov.threads.or(hs.threads).unwrap_or(1);
    if threads == 0 {
        return Err(Error::Config("harness.threads must be at least 1".into()));
    }
    let recovery_test = match hs.recovery_test.as_deref().unwrap_or("linear") {
        "linear" => RecoveryTest::Linear,
        "cosine" => RecoveryTest::Cosine,
        other => {
            return Err(Error::Config(format!(
                "harness.recovery_test must be \"linear\" or \"cosine\", got \"{other}\""
            )))
        }
    };
    let heat_time = positive("harness.heat_time", hs.heat_time.unwrap_or(0.5))?;
    let heat_modes = hs.heat_modes.unwrap_or(5);

    for &e in std::iter::once(&eps).chain(sweep.iter()) {
        if e > eps0 {
            return Err(Error::Config(format!(
                "eps = {e} exceeds eps0 = {eps0}: ThinDomainSpec requires 0 < eps <= eps0"
            )));
        }
    }
    let mut cfg = RunConfig {
        graph,
        eps,
        eps0,
        l,
        a: d.a,
        junction,
        potential: PotentialSpec::Zero,
        c_v: 0.0,
        h,
        h_factor,
        layers: s.layers,
        modes,
        tol,
        sweep,
        threads,
        recovery_test,
        heat_time,
        heat_modes,
    };
    let reference = cfg.spec_at(eps0).map_err(|e| invariant("ThinDomainSpec", e))?;
    cfg.spec().map_err(|e| invariant("ThinDomainSpec", e))?;
    cfg.potential = potential(raw.potential, &reference)?;
    cfg.c_v = compute_c_v(&cfg.potential, &reference).map_err(|e| invariant("compute_c_v", e))?;
    Ok(cfg)
}

fn potential(p: RawPotential, spec: &ThinDomainSpec) -> Result<PotentialSpec> {
    let kind = p.kind.as_deref().unwrap_or(if p.v0.is_some() || p.c_v_target.is_some() {
        "cosine"
    } else {
        "none"
    });
    let shape = match kind {
        "none" => {
            if p.v0.is_some() || p.c_v_target.is_some() {
                return Err(Error::Config("potential.kind = \"none\" takes no amplitude".into()));
            }
            return Ok(PotentialSpec::Zero);
        }
        "cosine" => {
            if p.half_width.is_some() || p.ramp.is_some() {
                return Err(Error::Config("potential.half_width and potential.ramp need kind = \"box\"".into()));
            }
            PotentialSpec::CosineBump { v0: 1.0, rho: p.rho.unwrap_or(0.5) }
        }
        "box" => {
            if p.rho.is_some() {
                return Err(Error::Config("potential.rho needs kind = \"cosine\"".into()));
            }
            PotentialSpec::SmoothedBox {
                v0: 1.0,
                half_width: p.half_width.unwrap_or(0.25),
                ramp: p.ramp.unwrap_or(0.1),
            }
        }
        other => {
            return Err(Error::Config(format!(
                "potential.kind must be \"none\", \"cosine\" or \"box\", got \"{other}\""
            )))
        }
    };
    let v = match (p.v0, p.c_v_target) {
        (Some(_), Some(_)) => {
            return Err(Error::Config("give at most one of potential.v0 and potential.C_V_target".into()))
        }
        (Some(v0), None) => shape.with_v0(v0),
        (None, Some(t)) => {
            if !(t >= 0.0) {
                return Err(Error::Config(format!("potential.C_V_target must be nonnegative, got {t}")));
            }
            shape.validate(spec).map_err(|e| invariant("PotentialSpec", e))?;
            solve_amplitude(&shape, t, spec).map_err(|e| invariant("solve_amplitude", e))?
        }
        (None, None) => shape,
    };
    v.validate(spec).map_err(|e| invariant("PotentialSpec", e))?;
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse_config_str("[graph]\nlengths = [1.0, 1.0, 1.0]\n", &Overrides::default()).unwrap();
        assert_eq!(c.eps0, 0.25);
        assert_eq!(c.l, 1.0);
        assert_eq!(c.spec().unwrap().a(), 2.0);
        assert_eq!(c.mesh_size(), c.eps / 4.0);
        assert_eq!(c.modes, 6);
        assert_eq!(c.potential, PotentialSpec::Zero);
        assert_eq!(c.threads, 1);
        assert!((c.graph.angles()[1] - TAU / 3.0).abs() < 1e-15);
    }

    #[test]
    fn unknown_key_is_named() {
        let e = parse_config_str("[graph]\nlengths = [1.0, 1.0]\nwidth = 3\n", &Overrides::default()).unwrap_err();
        assert!(matches!(&e, Error::Config(m) if m.contains("width")), "{e}");
        let e = parse_config_str("[graph]\nlengths = [1.0, 1.0]\n[mesh]\nh = 1\n", &Overrides::default()).unwrap_err();
        assert!(matches!(&e, Error::Config(m) if m.contains("mesh")), "{e}");
    }

    #[test]
    fn eps_above_eps0_cites_domain_invariant() {
        let e = parse_config_str(
            "[graph]\nlengths = [1.0, 1.0, 1.0]\n[domain]\neps = 0.3\n",
            &Overrides::default(),
        )
        .unwrap_err();
        assert!(matches!(&e, Error::Config(m) if m.contains("ThinDomainSpec")), "{e}");
    }

    #[test]
    fn flag_overrides_file() {
        let text = "[graph]\nlengths = [1.0, 1.0, 1.0]\n[domain]\neps = 0.2\n[solver]\nmodes = 4\n";
        let ov = Overrides { eps: Some(0.05), modes: Some(3), ..Overrides::default() };
        let c = parse_config_str(text, &ov).unwrap();
        assert_eq!(c.eps, 0.05);
        assert_eq!(c.modes, 3);
        assert_eq!(c.mesh_size(), 0.0125);
    }

    #[test]
    fn c_v_target_is_met() {
        let text = "[graph]\nlengths = [1.0, 1.0, 1.0]\n[potential]\nrho = 0.5\nC_V_target = 1.0\n";
        let c = parse_config_str(text, &Overrides::default()).unwrap();
        assert!((c.c_v - 1.0).abs() < 1e-10);
        let cc = c.convergence();
        assert_eq!(cc.potential, c.potential);
        cc.validate().unwrap();
    }

    #[test]
    fn preconditions_are_enforced() {
        let bad = [
            "[graph]\nlengths = [1.0]\n",
            "[graph]\nlengths = [1.0, 1.0]\n[solver]\nh = 0.5\n",
            "[graph]\nlengths = [1.0, 1.0]\n[harness]\neps = [0.1, 0.2, 0.05]\n",
            "[graph]\nlengths = [1.0, 1.0, 1.0]\n[potential]\nrho = 5.0\nv0 = 1.0\n",
            "[graph]\nlengths = [1.0, 1.0]\n[potential]\nkind = \"wave\"\n",
            "[graph]\nlengths = [1.0, 1.0]\n[domain]\na = 0.5\n",
            "[domain]\neps = 0.1\n",
        ];
        for text in bad {
            let e = parse_config_str(text, &Overrides::default()).unwrap_err();
            assert!(matches!(e, Error::Config(_)), "{text}: {e}");
        }
    }
}
