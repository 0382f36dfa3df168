//! R-style model formulas.
//!
//! The grammar follows `lm()` for the fixed part and `lme4::lmer()` for
//! random-effect terms: `Y ~ X1 + X2`, `Z + D ~ X`, `Y + delta ~ X`,
//! `Y ~ X1 * X2 - 1`, `Y ~ I(X1^2) + log(X2)`, `Y ~ X + (X | C)`.
//!
//! Supported covariate transforms are `I(v^2)`, `log(v)` and `exp(v)`;
//! anything else is a parse error. Interactions (`a:b`, `a*b`) reference
//! plain variables only.

mod design;
mod parse;

pub use design::{bind_roles, bind_roles_with, build_design, DesignMatrix, ReBlock, RoleBinding};
pub use parse::parse_formula;

/// A covariate transform tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transform {
    /// `I(v^2)`
    Square,
    /// `log(v)`
    Log,
    /// `exp(v)`
    Exp,
}

impl Transform {
    pub fn render(self, var: &str) -> String {
        match self {
            Transform::Square => format!("I({var}^2)"),
            Transform::Log => format!("log({var})"),
            Transform::Exp => format!("exp({var})"),
        }
    }
}

/// One fixed-effect term on the right-hand side of a formula.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Term {
    Main { var: String },
    Interaction { vars: Vec<String> },
    Transform { tag: Transform, var: String },
}

impl Term {
    /// Column-name rendering ("X", "X1:X2", "I(X^2)").
    pub fn render(&self) -> String {
        match self {
            Term::Main { var } => var.clone(),
            Term::Interaction { vars } => vars.join(":"),
            Term::Transform { tag, var } => tag.render(var),
        }
    }

    /// Variables this term references.
    pub fn vars(&self) -> Vec<&str> {
        match self {
            Term::Main { var } | Term::Transform { var, .. } => vec![var.as_str()],
            Term::Interaction { vars } => vars.iter().map(|v| v.as_str()).collect(),
        }
    }

    /// Canonical key used for de-duplication: interactions compare as
    /// unordered variable sets.
    fn canonical_key(&self) -> String {
        match self {
            Term::Interaction { vars } => {
                let mut sorted = vars.clone();
                sorted.sort();
                format!(":{}", sorted.join(":"))
            }
            other => other.render(),
        }
    }
}

/// A `(expr | group)` random-effect term.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RandomEffectTerm {
    pub inner_terms: Vec<Term>,
    pub inner_intercept: bool,
    pub group_var: String,
}

impl RandomEffectTerm {
    pub fn render(&self) -> String {
        let mut inner = if self.inner_terms.is_empty() {
            if self.inner_intercept { "1".to_string() } else { "0".to_string() }
        } else {
            self.inner_terms.iter().map(Term::render).collect::<Vec<_>>().join(" + ")
        };
        if !self.inner_intercept && !self.inner_terms.is_empty() {
            inner.push_str(" - 1");
        }
        format!("({} | {})", inner, self.group_var)
    }
}

/// Parsed model formula.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FormulaAst {
    /// Variables left of `~`: 1 for an ordinary response, 2 for a survival
    /// `Y + delta` pair, 1 + K for a `Z + D_1 + ... + D_K` S-formula.
    pub lhs_vars: Vec<String>,
    pub fixed_terms: Vec<Term>,
    pub has_intercept: bool,
    pub random_terms: Vec<RandomEffectTerm>,
}

impl FormulaAst {
    /// Render back to formula text. `parse_formula(render(ast)) == ast`.
    pub fn render(&self) -> String {
        let mut rhs: Vec<String> = self.fixed_terms.iter().map(Term::render).collect();
        rhs.extend(self.random_terms.iter().map(RandomEffectTerm::render));
        let mut text = format!("{} ~ ", self.lhs_vars.join(" + "));
        if rhs.is_empty() {
            text.push_str(if self.has_intercept { "1" } else { "0" });
        } else {
            text.push_str(&rhs.join(" + "));
            if !self.has_intercept {
                text.push_str(" - 1");
            }
        }
        text
    }
}
