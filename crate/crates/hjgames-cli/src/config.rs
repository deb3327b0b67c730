//! Run configuration: JSON schema, validation, and conversion to solver
//! inputs.
//!
//! The schema is strict — unknown keys anywhere are rejected before any
//! compute starts. Problems are either built-ins by name or inline
//! definitions whose dynamics, costs, and constraint are sums of
//! polynomial terms in `(t, x, a, b)`.

use serde::{Deserialize, Serialize};

use hjgames_core::{
    builtin_by_name, Axis, ControlBox, DerivativeOrder, EquationVariant, Integrator,
    PlayerMode, ProblemSpec, Real, RealGrid, RealProblem, SchemeOptions,
};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemConfig,
    pub grid: GridConfig,
    pub variant: VariantName,
    pub mode: ModeName,
    #[serde(default)]
    pub scheme: SchemeConfig,
    #[serde(default = "default_stamps")]
    pub stamps: usize,
}

fn default_stamps() -> usize {
    201
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub enum ProblemConfig {
    /// Built-in problem name ("water2d", "toy1d").
    Name(String),
    /// Inline polynomial problem.
    Inline(InlineProblem),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub state_axes: Vec<AxisConfig>,
    pub z_axis: AxisConfig,
    #[serde(default = "default_ghost")]
    pub ghost_width: usize,
}

fn default_ghost() -> usize {
    3
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisConfig {
    pub min: Real,
    pub max: Real,
    pub count: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VariantName {
    P1TimeVarying,
    P1TimeInvariant,
    P2TimeVarying,
    P2TimeInvariant,
}

impl From<VariantName> for EquationVariant {
    fn from(v: VariantName) -> Self {
        match v {
            VariantName::P1TimeVarying => EquationVariant::P1TimeVarying,
            VariantName::P1TimeInvariant => EquationVariant::P1TimeInvariant,
            VariantName::P2TimeVarying => EquationVariant::P2TimeVarying,
            VariantName::P2TimeInvariant => EquationVariant::P2TimeInvariant,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeName {
    Upper,
    Lower,
    OptCtrl,
}

impl From<ModeName> for PlayerMode {
    fn from(m: ModeName) -> Self {
        match m {
            ModeName::Upper => PlayerMode::Upper,
            ModeName::Lower => PlayerMode::Lower,
            ModeName::OptCtrl => PlayerMode::OptCtrl,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeConfig {
    #[serde(default = "default_order")]
    pub derivative_order: OrderName,
    #[serde(default = "default_integrator")]
    pub integrator: IntegratorName,
    #[serde(default = "default_cfl")]
    pub cfl: Real,
    #[serde(default = "default_lattice")]
    pub control_lattice_a: usize,
    #[serde(default = "default_lattice")]
    pub control_lattice_b: usize,
}

fn default_order() -> OrderName {
    OrderName::Weno5
}

fn default_integrator() -> IntegratorName {
    IntegratorName::Euler
}

fn default_cfl() -> Real {
    0.5
}

fn default_lattice() -> usize {
    11
}

impl Default for SchemeConfig {
    fn default() -> Self {
        SchemeConfig {
            derivative_order: default_order(),
            integrator: default_integrator(),
            cfl: default_cfl(),
            control_lattice_a: default_lattice(),
            control_lattice_b: default_lattice(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OrderName {
    Upwind1,
    Weno5,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IntegratorName {
    Euler,
    TvdRk3,
}

impl From<SchemeConfig> for SchemeOptions<Real> {
    fn from(s: SchemeConfig) -> Self {
        SchemeOptions {
            derivative_order: match s.derivative_order {
                OrderName::Upwind1 => DerivativeOrder::Upwind1,
                OrderName::Weno5 => DerivativeOrder::Weno5,
            },
            integrator: match s.integrator {
                IntegratorName::Euler => Integrator::Euler,
                IntegratorName::TvdRk3 => Integrator::TvdRk3,
            },
            cfl: s.cfl,
            lattice_a: s.control_lattice_a,
            lattice_b: s.control_lattice_b,
        }
    }
}

/// One polynomial term `coef * t^t_power * prod x_i^x_powers[i] *
/// prod a_j^a_powers[j] * prod b_k^b_powers[k]`; omitted power vectors
/// default to all zeros.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Term {
    pub coef: Real,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub x_powers: Vec<u32>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub a_powers: Vec<u32>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub b_powers: Vec<u32>,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub t_power: u32,
}

fn is_zero(v: &u32) -> bool {
    *v == 0
}

pub type Polynomial = Vec<Term>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlBoxConfig {
    pub lower: Vec<Real>,
    pub upper: Vec<Real>,
}

/// Inline problem definition with polynomial dynamics and costs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InlineProblem {
    pub state_dim: usize,
    pub horizon: Real,
    #[serde(default)]
    pub time_invariant: bool,
    pub controls_a: ControlBoxConfig,
    pub controls_b: ControlBoxConfig,
    /// One polynomial per state component.
    pub dynamics: Vec<Polynomial>,
    pub stage_cost: Polynomial,
    pub terminal_cost: Polynomial,
    pub constraint: Polynomial,
}

fn powers_ok(term: &Term, n: usize, ma: usize, mb: usize, state_only: bool) -> Result<(), String> {
    if term.x_powers.len() > n {
        return Err(format!(
            "term has {} x powers for {n} state dims",
            term.x_powers.len()
        ));
    }
    if state_only && (!term.a_powers.is_empty() || !term.b_powers.is_empty()) {
        return Err("terminal cost and constraint may not reference controls".into());
    }
    if term.a_powers.len() > ma || term.b_powers.len() > mb {
        return Err(format!(
            "term has {}/{} control powers for {ma}/{mb} control dims",
            term.a_powers.len(),
            term.b_powers.len()
        ));
    }
    Ok(())
}

fn eval_poly(terms: &[Term], t: Real, x: &[Real], a: &[Real], b: &[Real]) -> Real {
    let mut acc = 0.0;
    for term in terms {
        let mut v = term.coef;
        if term.t_power > 0 {
            v *= t.powi(term.t_power as i32);
        }
        for (p, xi) in term.x_powers.iter().zip(x) {
            if *p > 0 {
                v *= xi.powi(*p as i32);
            }
        }
        for (p, ai) in term.a_powers.iter().zip(a) {
            if *p > 0 {
                v *= ai.powi(*p as i32);
            }
        }
        for (p, bi) in term.b_powers.iter().zip(b) {
            if *p > 0 {
                v *= bi.powi(*p as i32);
            }
        }
        acc += v;
    }
    acc
}

impl InlineProblem {
    pub fn build(&self) -> Result<RealProblem, CliError> {
        let n = self.state_dim;
        if n == 0 {
            return Err(CliError::config("state_dim must be positive"));
        }
        if self.dynamics.len() != n {
            return Err(CliError::config(format!(
                "dynamics has {} components for state_dim {n}",
                self.dynamics.len()
            )));
        }
        let ma = self.controls_a.lower.len();
        let mb = self.controls_b.lower.len();
        for (i, poly) in self.dynamics.iter().enumerate() {
            for term in poly {
                powers_ok(term, n, ma, mb, false)
                    .map_err(|e| CliError::config(format!("dynamics[{i}]: {e}")))?;
            }
        }
        for term in &self.stage_cost {
            powers_ok(term, n, ma, mb, false)
                .map_err(|e| CliError::config(format!("stage_cost: {e}")))?;
        }
        for (label, poly) in [("terminal_cost", &self.terminal_cost), ("constraint", &self.constraint)] {
            for term in poly {
                powers_ok(term, n, ma, mb, true)
                    .map_err(|e| CliError::config(format!("{label}: {e}")))?;
            }
        }
        let box_a = ControlBox::new(self.controls_a.lower.clone(), self.controls_a.upper.clone())?;
        let box_b = ControlBox::new(self.controls_b.lower.clone(), self.controls_b.upper.clone())?;

        let dynamics = self.dynamics.clone();
        let stage = self.stage_cost.clone();
        let terminal = self.terminal_cost.clone();
        let constraint = self.constraint.clone();
        Ok(ProblemSpec::builder(n)
            .dynamics(move |t, x: &[Real], a: &[Real], b: &[Real], out: &mut [Real]| {
                for (slot, poly) in out.iter_mut().zip(&dynamics) {
                    *slot = eval_poly(poly, t, x, a, b);
                }
            })
            .stage_cost(move |t, x: &[Real], a: &[Real], b: &[Real]| eval_poly(&stage, t, x, a, b))
            .terminal_cost(move |t, x: &[Real]| eval_poly(&terminal, t, x, &[], &[]))
            .constraint(move |t, x: &[Real]| eval_poly(&constraint, t, x, &[], &[]))
            .controls_a(box_a)
            .controls_b(box_b)
            .horizon(self.horizon)
            .time_invariant(self.time_invariant)
            .build()?)
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::config(format!("config schema: {e}")))
    }

    pub fn build_problem(&self) -> Result<RealProblem, CliError> {
        match &self.problem {
            ProblemConfig::Name(name) => builtin_by_name(name)
                .ok_or_else(|| CliError::config(format!("unknown built-in problem '{name}'"))),
            ProblemConfig::Inline(inline) => inline.build(),
        }
    }

    pub fn build_grid(&self) -> Result<RealGrid, CliError> {
        let state = self
            .grid
            .state_axes
            .iter()
            .map(|a| Axis::new(a.min, a.max, a.count))
            .collect::<Result<Vec<_>, _>>()?;
        let z = Axis::new(self.grid.z_axis.min, self.grid.z_axis.max, self.grid.z_axis.count)?;
        Ok(hjgames_core::build_grid(state, z, self.grid.ghost_width)?)
    }

    pub fn scheme_options(&self) -> SchemeOptions<Real> {
        self.scheme.into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const TOY_CONFIG: &str = r#"{
        "problem": {"name": "toy1d"},
        "grid": {
            "state_axes": [{"min": -3.0, "max": 3.0, "count": 31}],
            "z_axis": {"min": 0.0, "max": 8.0, "count": 31}
        },
        "variant": "p1-time-varying",
        "mode": "upper",
        "scheme": {"control_lattice_a": 5, "control_lattice_b": 5},
        "stamps": 51
    }"#;

    #[test]
    fn parses_builtin_config() {
        let cfg = RunConfig::parse(TOY_CONFIG).unwrap();
        assert_eq!(cfg.stamps, 51);
        assert_eq!(cfg.scheme.cfl, 0.5);
        let spec = cfg.build_problem().unwrap();
        assert_eq!(spec.state_dim(), 1);
        let grid = cfg.build_grid().unwrap();
        assert_eq!(grid.num_points(), 961);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = TOY_CONFIG.replace("\"stamps\": 51", "\"stamps\": 51, \"extra\": 1");
        assert!(RunConfig::parse(&bad).is_err());
    }

    #[test]
    fn degenerate_axis_is_rejected_at_build() {
        let bad = TOY_CONFIG.replace("\"max\": 3.0, \"count\": 31}]", "\"max\": -3.0, \"count\": 31}]");
        let cfg = RunConfig::parse(&bad).unwrap();
        assert!(cfg.build_grid().is_err());
    }

    #[test]
    fn config_round_trips() {
        let cfg = RunConfig::parse(TOY_CONFIG).unwrap();
        let emitted = serde_json::to_string_pretty(&cfg).unwrap();
        let re = RunConfig::parse(&emitted).unwrap();
        assert_eq!(cfg, re);
    }

    #[test]
    fn inline_polynomial_problem_matches_toy() {
        let text = r#"{
            "problem": {"inline": {
                "state_dim": 1,
                "horizon": 1.0,
                "time_invariant": true,
                "controls_a": {"lower": [-1.0], "upper": [1.0]},
                "controls_b": {"lower": [-0.5], "upper": [0.5]},
                "dynamics": [[{"coef": 1.0, "a_powers": [1]}, {"coef": 1.0, "b_powers": [1]}]],
                "stage_cost": [{"coef": 1.0, "x_powers": [2]}],
                "terminal_cost": [{"coef": 1.0, "x_powers": [2]}],
                "constraint": [{"coef": 1.0, "x_powers": [2]}, {"coef": -4.0}]
            }},
            "grid": {
                "state_axes": [{"min": -3.0, "max": 3.0, "count": 11}],
                "z_axis": {"min": 0.0, "max": 8.0, "count": 11}
            },
            "variant": "p2-time-invariant",
            "mode": "opt-ctrl"
        }"#;
        let cfg = RunConfig::parse(text).unwrap();
        let spec = cfg.build_problem().unwrap();
        let f = spec.eval_dynamics(0.0, &[0.3], &[1.0], &[-0.5]).unwrap();
        assert_eq!(f[0], 0.5);
        assert_eq!(spec.eval_stage_cost(0.0, &[2.0], &[0.0], &[0.0]).unwrap(), 4.0);
        // x^2 - 4 vanishes at the corridor edge like |x| - 2 does
        assert_eq!(spec.eval_constraint(0.0, &[2.0]).unwrap(), 0.0);
        assert_eq!(cfg.stamps, 201);
    }

    #[test]
    fn inline_rejects_controls_in_state_costs() {
        let text = r#"{
            "problem": {"inline": {
                "state_dim": 1,
                "horizon": 1.0,
                "controls_a": {"lower": [0.0], "upper": [1.0]},
                "controls_b": {"lower": [0.0], "upper": [1.0]},
                "dynamics": [[{"coef": 1.0}]],
                "stage_cost": [{"coef": 1.0}],
                "terminal_cost": [{"coef": 1.0, "a_powers": [1]}],
                "constraint": [{"coef": -1.0}]
            }},
            "grid": {
                "state_axes": [{"min": 0.0, "max": 1.0, "count": 5}],
                "z_axis": {"min": 0.0, "max": 1.0, "count": 5}
            },
            "variant": "p1-time-varying",
            "mode": "upper"
        }"#;
        let cfg = RunConfig::parse(text).unwrap();
        assert!(cfg.build_problem().is_err());
    }
}
