//! Solver-agnostic mixed-integer linear model.
//!
//! A [`ModelIR`] is an ordered list of typed, bounded variables, an ordered
//! list of linear constraints and a linear objective that is always
//! minimized. Variable ids are dense indices in insertion order; constraint
//! order is preserved and is part of the model's identity, so two models
//! built the same way export to byte-identical text.
//!
//! Constraint and objective terms are normalized on insertion: sorted by
//! variable id with exact zeros dropped. That keeps the MPS round trip exact,
//! since MPS stores the matrix column-major.

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

/// Dense handle of a variable inside one [`ModelIR`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId(pub usize);

/// Dense handle of a constraint inside one [`ModelIR`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ConstraintId(pub usize);

impl VarId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for VarId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VarKind {
    Continuous,
    Binary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarSpec {
    pub name: String,
    pub kind: VarKind,
    pub lb: f64,
    pub ub: f64,
}

impl VarSpec {
    pub fn continuous(name: impl Into<String>, lb: f64, ub: f64) -> Self {
        Self { name: name.into(), kind: VarKind::Continuous, lb, ub }
    }

    /// Binary variable; bounds are forced to `[0, 1]`.
    pub fn binary(name: impl Into<String>) -> Self {
        Self { name: name.into(), kind: VarKind::Binary, lb: 0.0, ub: 1.0 }
    }

    pub fn is_binary(&self) -> bool {
        self.kind == VarKind::Binary
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

impl Sense {
    pub fn symbol(self) -> &'static str {
        match self {
            Sense::Le => "<=",
            Sense::Eq => "=",
            Sense::Ge => ">=",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinConstraint {
    pub name: String,
    pub terms: Vec<(VarId, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

impl LinConstraint {
    pub fn new(name: impl Into<String>, terms: Vec<(VarId, f64)>, sense: Sense, rhs: f64) -> Self {
        Self { name: name.into(), terms, sense, rhs }
    }

    /// Left-hand side activity at `values`.
    pub fn activity(&self, values: &[f64]) -> f64 {
        self.terms.iter().map(|&(v, a)| a * values[v.0]).sum()
    }

    /// Amount by which `values` violate this row (0 when satisfied).
    pub fn violation(&self, values: &[f64]) -> f64 {
        let act = self.activity(values);
        match self.sense {
            Sense::Le => (act - self.rhs).max(0.0),
            Sense::Ge => (self.rhs - act).max(0.0),
            Sense::Eq => (act - self.rhs).abs(),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("duplicate variable name `{0}`")]
    DuplicateVar(String),
    #[error("duplicate constraint name `{0}`")]
    DuplicateConstraint(String),
    #[error("invalid name `{0}`: names must be non-empty and contain no whitespace")]
    InvalidName(String),
    #[error("inverted bounds for `{name}`: lb {lb} > ub {ub}")]
    InvertedBounds { name: String, lb: f64, ub: f64 },
    #[error("NaN bound on `{0}`")]
    NanBound(String),
    #[error("unknown variable id {0} in `{1}`")]
    UnknownVar(VarId, String),
    #[error("variable {0} appears twice in `{1}`")]
    DuplicateTerm(VarId, String),
    #[error("non-finite coefficient {coef} on {var} in `{row}`")]
    NonFiniteCoefficient { var: VarId, coef: f64, row: String },
    #[error("non-finite right-hand side in `{0}`")]
    NonFiniteRhs(String),
}

/// Non-fatal findings of [`ModelIR::validate`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ModelWarning {
    EmptyObjective,
}

/// Linear expression accumulator that merges repeated variables.
#[derive(Debug, Clone, Default)]
pub struct LinExpr {
    terms: Vec<(VarId, f64)>,
}

impl LinExpr {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, var: VarId, coef: f64) -> &mut Self {
        self.terms.push((var, coef));
        self
    }

    pub fn with(mut self, var: VarId, coef: f64) -> Self {
        self.terms.push((var, coef));
        self
    }

    /// Merged terms sorted by variable id.
    pub fn into_terms(mut self) -> Vec<(VarId, f64)> {
        self.terms.sort_by_key(|t| t.0);
        let mut out: Vec<(VarId, f64)> = Vec::with_capacity(self.terms.len());
        for (v, a) in self.terms {
            match out.last_mut() {
                Some(last) if last.0 == v => last.1 += a,
                _ => out.push((v, a)),
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct ModelIR {
    pub name: String,
    vars: Vec<VarSpec>,
    constraints: Vec<LinConstraint>,
    objective: Vec<(VarId, f64)>,
    var_names: HashMap<String, VarId>,
    row_names: HashMap<String, ConstraintId>,
}

impl Default for ModelIR {
    fn default() -> Self {
        Self::new("model")
    }
}

impl PartialEq for ModelIR {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
            && self.vars == other.vars
            && self.constraints == other.constraints
            && self.objective == other.objective
    }
}

fn check_name(name: &str) -> Result<(), ModelError> {
    if name.is_empty() || name.chars().any(char::is_whitespace) {
        return Err(ModelError::InvalidName(name.to_string()));
    }
    Ok(())
}

impl ModelIR {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            vars: Vec::new(),
            constraints: Vec::new(),
            objective: Vec::new(),
            var_names: HashMap::new(),
            row_names: HashMap::new(),
        }
    }

    pub fn add_var(&mut self, spec: VarSpec) -> Result<VarId, ModelError> {
        let mut spec = spec;
        check_name(&spec.name)?;
        if self.var_names.contains_key(&spec.name) {
            return Err(ModelError::DuplicateVar(spec.name));
        }
        if spec.kind == VarKind::Binary {
            spec.lb = 0.0;
            spec.ub = 1.0;
        }
        if spec.lb.is_nan() || spec.ub.is_nan() {
            return Err(ModelError::NanBound(spec.name));
        }
        if spec.lb > spec.ub {
            return Err(ModelError::InvertedBounds { name: spec.name, lb: spec.lb, ub: spec.ub });
        }
        let id = VarId(self.vars.len());
        self.var_names.insert(spec.name.clone(), id);
        self.vars.push(spec);
        Ok(id)
    }

    pub fn add_continuous(&mut self, name: impl Into<String>, lb: f64, ub: f64) -> Result<VarId, ModelError> {
        self.add_var(VarSpec::continuous(name, lb, ub))
    }

    pub fn add_binary(&mut self, name: impl Into<String>) -> Result<VarId, ModelError> {
        self.add_var(VarSpec::binary(name))
    }

    fn normalize_terms(&self, terms: Vec<(VarId, f64)>, row: &str) -> Result<Vec<(VarId, f64)>, ModelError> {
        let mut terms = terms;
        for &(v, a) in &terms {
            if v.0 >= self.vars.len() {
                return Err(ModelError::UnknownVar(v, row.to_string()));
            }
            if !a.is_finite() {
                return Err(ModelError::NonFiniteCoefficient { var: v, coef: a, row: row.to_string() });
            }
        }
        terms.sort_by_key(|t| t.0);
        if let Some(w) = terms.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(ModelError::DuplicateTerm(w[0].0, row.to_string()));
        }
        terms.retain(|t| t.1 != 0.0);
        Ok(terms)
    }

    pub fn add_constraint(&mut self, constraint: LinConstraint) -> Result<ConstraintId, ModelError> {
        check_name(&constraint.name)?;
        if self.row_names.contains_key(&constraint.name) {
            return Err(ModelError::DuplicateConstraint(constraint.name));
        }
        if !constraint.rhs.is_finite() {
            return Err(ModelError::NonFiniteRhs(constraint.name));
        }
        let terms = self.normalize_terms(constraint.terms, &constraint.name)?;
        let id = ConstraintId(self.constraints.len());
        self.row_names.insert(constraint.name.clone(), id);
        self.constraints.push(LinConstraint { terms, ..constraint });
        Ok(id)
    }

    /// Shorthand used by the formulation builders.
    pub fn add_row(
        &mut self,
        name: impl Into<String>,
        expr: LinExpr,
        sense: Sense,
        rhs: f64,
    ) -> Result<ConstraintId, ModelError> {
        self.add_constraint(LinConstraint::new(name, expr.into_terms(), sense, rhs))
    }

    pub fn set_objective(&mut self, terms: Vec<(VarId, f64)>) -> Result<(), ModelError> {
        self.objective = self.normalize_terms(terms, "objective")?;
        Ok(())
    }

    pub fn vars(&self) -> &[VarSpec] {
        &self.vars
    }

    pub fn var(&self, id: VarId) -> &VarSpec {
        &self.vars[id.0]
    }

    pub fn constraints(&self) -> &[LinConstraint] {
        &self.constraints
    }

    pub fn objective(&self) -> &[(VarId, f64)] {
        &self.objective
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn num_binaries(&self) -> usize {
        self.vars.iter().filter(|v| v.is_binary()).count()
    }

    pub fn var_by_name(&self, name: &str) -> Option<VarId> {
        self.var_names.get(name).copied()
    }

    pub fn constraint_by_name(&self, name: &str) -> Option<ConstraintId> {
        self.row_names.get(name).copied()
    }

    /// Dense objective coefficient vector.
    pub fn objective_dense(&self) -> Vec<f64> {
        let mut c = vec![0.0; self.vars.len()];
        for &(v, a) in &self.objective {
            c[v.0] = a;
        }
        c
    }

    pub fn objective_value(&self, values: &[f64]) -> f64 {
        self.objective.iter().map(|&(v, a)| a * values[v.0]).sum()
    }

    /// Re-checks every structural invariant. Models built through the
    /// mutating API always pass; this guards models assembled elsewhere
    /// (e.g. by the MPS reader) and reports an empty objective as a warning.
    pub fn validate(&self) -> Result<Vec<ModelWarning>, ModelError> {
        let mut names = HashMap::new();
        for (i, v) in self.vars.iter().enumerate() {
            check_name(&v.name)?;
            if names.insert(v.name.as_str(), i).is_some() {
                return Err(ModelError::DuplicateVar(v.name.clone()));
            }
            if v.lb.is_nan() || v.ub.is_nan() {
                return Err(ModelError::NanBound(v.name.clone()));
            }
            if v.lb > v.ub {
                return Err(ModelError::InvertedBounds { name: v.name.clone(), lb: v.lb, ub: v.ub });
            }
        }
        for c in &self.constraints {
            let mut seen = std::collections::HashSet::new();
            for &(v, a) in &c.terms {
                if v.0 >= self.vars.len() {
                    return Err(ModelError::UnknownVar(v, c.name.clone()));
                }
                if !a.is_finite() {
                    return Err(ModelError::NonFiniteCoefficient { var: v, coef: a, row: c.name.clone() });
                }
                if !seen.insert(v) {
                    return Err(ModelError::DuplicateTerm(v, c.name.clone()));
                }
            }
        }
        for &(v, _) in &self.objective {
            if v.0 >= self.vars.len() {
                return Err(ModelError::UnknownVar(v, "objective".into()));
            }
        }
        let mut warnings = Vec::new();
        if self.objective.is_empty() {
            warnings.push(ModelWarning::EmptyObjective);
        }
        Ok(warnings)
    }

    /// Largest violation of any constraint or bound at `values`.
    pub fn max_violation(&self, values: &[f64]) -> f64 {
        let rows = self.constraints.iter().map(|c| c.violation(values)).fold(0.0, f64::max);
        let bounds = self
            .vars
            .iter()
            .zip(values)
            .map(|(v, &x)| (v.lb - x).max(x - v.ub).max(0.0))
            .fold(0.0, f64::max);
        rows.max(bounds)
    }
}

/// Shortest text that parses back to exactly `v`.
pub(crate) fn fmt_num(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v:?}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_bounds_are_forced() {
        let mut m = ModelIR::new("t");
        let id = m.add_var(VarSpec { name: "h[0][0][0]".into(), kind: VarKind::Binary, lb: -3.0, ub: 7.0 }).unwrap();
        assert_eq!(id, VarId(0));
        assert_eq!((m.var(id).lb, m.var(id).ub), (0.0, 1.0));
        let a = m.add_continuous("alpha[0][0][0]", -1.0, 1.0).unwrap();
        assert_eq!(a, VarId(1));
        assert_eq!((m.var(a).lb, m.var(a).ub), (-1.0, 1.0));
    }

    #[test]
    fn inverted_bounds_rejected() {
        let mut m = ModelIR::new("t");
        let err = m.add_continuous("x", 2.0, 1.0).unwrap_err();
        assert!(matches!(err, ModelError::InvertedBounds { .. }));
        assert!(err.to_string().contains("inverted bounds"));
    }

    #[test]
    fn duplicate_var_name_rejected() {
        let mut m = ModelIR::new("t");
        m.add_continuous("x", 0.0, 1.0).unwrap();
        assert_eq!(m.add_binary("x").unwrap_err(), ModelError::DuplicateVar("x".into()));
        assert!(matches!(m.add_binary("a b"), Err(ModelError::InvalidName(_))));
    }

    #[test]
    fn constraint_errors() {
        let mut m = ModelIR::new("t");
        let x = m.add_continuous("x", 0.0, 1.0).unwrap();
        let y = m.add_continuous("y", 0.0, 1.0).unwrap();
        let id = m
            .add_constraint(LinConstraint::new("c0", vec![(x, 1.0), (y, 1.0)], Sense::Le, 1.0))
            .unwrap();
        assert_eq!(id, ConstraintId(0));
        let bad = m.add_constraint(LinConstraint::new("c1", vec![(VarId(99), 1.0)], Sense::Le, 1.0));
        assert!(matches!(bad, Err(ModelError::UnknownVar(VarId(99), _))));
        let nan = m.add_constraint(LinConstraint::new("c2", vec![(x, f64::NAN)], Sense::Le, 1.0));
        assert!(matches!(nan, Err(ModelError::NonFiniteCoefficient { .. })));
        let dup = m.add_constraint(LinConstraint::new("c3", vec![(x, 1.0), (x, 2.0)], Sense::Le, 1.0));
        assert!(matches!(dup, Err(ModelError::DuplicateTerm(..))));
        assert_eq!(m.num_constraints(), 1);
    }

    #[test]
    fn terms_are_sorted_and_zeros_dropped() {
        let mut m = ModelIR::new("t");
        let x = m.add_continuous("x", 0.0, 1.0).unwrap();
        let y = m.add_continuous("y", 0.0, 1.0).unwrap();
        m.add_constraint(LinConstraint::new("c", vec![(y, 2.0), (x, 0.0)], Sense::Ge, 0.0)).unwrap();
        assert_eq!(m.constraints()[0].terms, vec![(y, 2.0)]);
        let e = LinExpr::new().with(y, 1.0).with(x, 2.0).with(y, 0.5);
        assert_eq!(e.into_terms(), vec![(x, 2.0), (y, 1.5)]);
    }

    #[test]
    fn empty_objective_is_only_a_warning() {
        let mut m = ModelIR::new("t");
        m.add_continuous("x", 0.0, 1.0).unwrap();
        assert_eq!(m.validate().unwrap(), vec![ModelWarning::EmptyObjective]);
    }

    #[test]
    fn number_format_round_trips() {
        for v in [0.0, 1.0, -2.0, 0.5, 1e-7, -1e300, 0.1 + 0.2, 12345678.25, 1e15, f64::MIN_POSITIVE] {
            assert_eq!(fmt_num(v).parse::<f64>().unwrap(), v, "{v}");
        }
        assert_eq!(fmt_num(1.0), "1");
        assert_eq!(fmt_num(-0.5), "-0.5");
    }
}
