//! Principal strata: the mini-language (`"00*"`, `"01"`, `"00|11*"`), the
//! deterministic map `D(s, z)`, compatibility sets, and the collapsing of
//! outcome-parameter cells under exclusion restriction (ER).
//!
//! A stratum label lists, per post-treatment variable, the pair of potential
//! values `(d_k(0), d_k(1))`; `"01"` is the classic complier. A trailing
//! asterisk asserts ER for that stratum. An explicit ER map may be supplied
//! instead of (or in addition to) asterisks; asserting ER with an asterisk
//! and denying it in the map is an error, while the map may add ER to
//! strata without asterisks.

use crate::error::{Error, Result};

/// One principal stratum: per post-treatment variable `k`, the potential
/// values `(d_k(0), d_k(1))`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StratumLabel {
    pairs: Vec<(u8, u8)>,
    pub name: String,
}

impl StratumLabel {
    /// Parse the `[01]{2}(\|[01]{2})*` body (asterisk already stripped).
    fn parse_body(name: &str, body: &str) -> Result<StratumLabel> {
        let mut pairs = Vec::new();
        for group in body.split('|') {
            let chars: Vec<char> = group.chars().collect();
            if chars.len() != 2 || chars.iter().any(|&c| c != '0' && c != '1') {
                return Err(Error::config(format!(
                    "stratum '{name}': malformed group '{group}' (expected two of 0/1)"
                )));
            }
            pairs.push(((chars[0] == '1') as u8, (chars[1] == '1') as u8));
        }
        if pairs.is_empty() {
            return Err(Error::config(format!("stratum '{name}': empty label")));
        }
        Ok(StratumLabel { pairs, name: name.to_string() })
    }

    /// Number of post-treatment variables.
    pub fn arity(&self) -> usize {
        self.pairs.len()
    }

    /// The received-treatment vector D(s, z) for arm z.
    pub fn d_of(&self, z: u8) -> Vec<u8> {
        assert!(z <= 1, "arms are binary in this version");
        self.pairs.iter().map(|&(d0, d1)| if z == 0 { d0 } else { d1 }).collect()
    }

    /// Whether D(s, 0) = D(s, 1), i.e. the received treatment ignores the
    /// assignment.
    pub fn arm_invariant(&self) -> bool {
        self.pairs.iter().all(|&(d0, d1)| d0 == d1)
    }

    /// Componentwise D(s, 0) <= D(s, 1).
    pub fn is_monotone(&self) -> bool {
        self.pairs.iter().all(|&(d0, d1)| d0 <= d1)
    }

    /// The label body, e.g. "01" or "00|11".
    pub fn body(&self) -> String {
        self.pairs
            .iter()
            .map(|&(d0, d1)| format!("{d0}{d1}"))
            .collect::<Vec<_>>()
            .join("|")
    }
}

/// The admitted strata, their ER flags, and the reference stratum of the
/// multinomial S-model (the first declared stratum).
#[derive(Debug, Clone)]
pub struct StrataSpec {
    pub strata: Vec<StratumLabel>,
    pub er_flags: Vec<bool>,
    pub reference_index: usize,
}

/// The deterministic map D(s, z), evaluated through the spec.
pub fn d_of(s: &StratumLabel, z: u8) -> Vec<u8> {
    s.d_of(z)
}

impl StrataSpec {
    pub fn n_strata(&self) -> usize {
        self.strata.len()
    }

    pub fn arity(&self) -> usize {
        self.strata[0].arity()
    }

    pub fn names(&self) -> Vec<&str> {
        self.strata.iter().map(|s| s.name.as_str()).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.strata.iter().position(|s| s.name == name)
    }

    /// Ordinals of the strata compatible with observing `d_obs` under arm
    /// `z`: exactly those with D(s, z) = d_obs. An empty set means the
    /// observation contradicts the declared strata.
    pub fn compatible(&self, z: u8, d_obs: &[u8]) -> Result<Vec<usize>> {
        if d_obs.len() != self.arity() {
            return Err(Error::data(format!(
                "observed D has {} component(s), strata declare {}",
                d_obs.len(),
                self.arity()
            )));
        }
        let set: Vec<usize> = self
            .strata
            .iter()
            .enumerate()
            .filter(|(_, s)| s.d_of(z) == d_obs)
            .map(|(i, _)| i)
            .collect();
        if set.is_empty() {
            let pattern: String = d_obs.iter().map(|d| d.to_string()).collect();
            return Err(Error::data(format!(
                "no declared stratum is compatible with Z={z}, D={pattern}; \
                 the data contradict the strata assumptions"
            )));
        }
        Ok(set)
    }

    /// Quotient of (stratum, arm) pairs into outcome-parameter cells: an ER
    /// stratum whose received treatment ignores the assignment shares one
    /// cell across arms.
    pub fn cell_map(&self) -> CellMap {
        let mut cell_of = Vec::with_capacity(self.n_strata());
        let mut labels = Vec::new();
        for (i, s) in self.strata.iter().enumerate() {
            if self.er_flags[i] && s.arm_invariant() {
                let c = labels.len();
                labels.push(s.name.clone());
                cell_of.push([c, c]);
            } else {
                let c0 = labels.len();
                labels.push(format!("{}:0", s.name));
                labels.push(format!("{}:1", s.name));
                cell_of.push([c0, c0 + 1]);
            }
        }
        CellMap { cell_of, labels }
    }
}

/// Map (stratum ordinal, arm) -> outcome-parameter cell ordinal.
#[derive(Debug, Clone)]
pub struct CellMap {
    cell_of: Vec<[usize; 2]>,
    /// Display label per cell: "n" for a collapsed cell, "c:0" / "c:1"
    /// otherwise.
    pub labels: Vec<String>,
}

impl CellMap {
    pub fn n_cells(&self) -> usize {
        self.labels.len()
    }

    pub fn cell(&self, stratum: usize, z: u8) -> usize {
        self.cell_of[stratum][z as usize]
    }
}

/// Result of parsing a strata declaration: the spec plus any warnings
/// (currently only "ER has no effect" notes).
#[derive(Debug, Clone)]
pub struct StrataParse {
    pub spec: StrataSpec,
    pub warnings: Vec<String>,
}

/// Parse an ordered `name -> label` declaration, with an optional explicit
/// ER map. The first entry becomes the reference stratum.
pub fn parse_strata(
    entries: &[(String, String)],
    er_override: Option<&[(String, bool)]>,
) -> Result<StrataParse> {
    if entries.is_empty() {
        return Err(Error::config("strata declaration is empty"));
    }
    let mut strata = Vec::with_capacity(entries.len());
    let mut asterisk = Vec::with_capacity(entries.len());
    for (name, raw) in entries {
        let raw = raw.trim();
        let (body, starred) = match raw.strip_suffix('*') {
            Some(b) => (b, true),
            None => (raw, false),
        };
        strata.push(StratumLabel::parse_body(name, body)?);
        asterisk.push(starred);
    }

    let arity = strata[0].arity();
    for s in &strata[1..] {
        if s.arity() != arity {
            return Err(Error::config(format!(
                "stratum '{}' declares {} post-treatment variable(s), expected {}",
                s.name,
                s.arity(),
                arity
            )));
        }
    }
    for i in 0..strata.len() {
        for j in (i + 1)..strata.len() {
            if strata[i].pairs == strata[j].pairs {
                return Err(Error::config(format!(
                    "duplicate stratum label '{}' ('{}' and '{}')",
                    strata[i].body(),
                    strata[i].name,
                    strata[j].name
                )));
            }
            if strata[i].name == strata[j].name {
                return Err(Error::config(format!("duplicate stratum name '{}'", strata[i].name)));
            }
        }
    }

    let er_flags = match er_override {
        None => asterisk.clone(),
        Some(map) => {
            if map.len() != strata.len() {
                return Err(Error::config(format!(
                    "ER map has {} entries, strata declare {}",
                    map.len(),
                    strata.len()
                )));
            }
            let mut flags = vec![false; strata.len()];
            for (name, er) in map {
                let i = strata
                    .iter()
                    .position(|s| &s.name == name)
                    .ok_or_else(|| Error::config(format!("ER map names unknown stratum '{name}'")))?;
                flags[i] = *er;
            }
            for (i, s) in strata.iter().enumerate() {
                if asterisk[i] && !flags[i] {
                    return Err(Error::config(format!(
                        "stratum '{}' is marked '*' but the ER map says no ER; \
                         resolve the conflict in the declaration",
                        s.name
                    )));
                }
            }
            flags
        }
    };

    let mut warnings = Vec::new();
    for (i, s) in strata.iter().enumerate() {
        if er_flags[i] && !s.arm_invariant() {
            warnings.push(format!(
                "ER on stratum '{}' has no effect: D(s,0) != D(s,1), so no outcome \
                 cells collapse",
                s.name
            ));
        }
    }

    Ok(StrataParse {
        spec: StrataSpec { strata, er_flags, reference_index: 0 },
        warnings,
    })
}

/// The canonical two-sided-noncompliance trio with ER on never- and
/// always-takers; used widely in tests.
pub fn monotonicity_trio() -> StrataSpec {
    parse_strata(
        &[
            ("n".to_string(), "00*".to_string()),
            ("c".to_string(), "01".to_string()),
            ("a".to_string(), "11*".to_string()),
        ],
        None,
    )
    .unwrap()
    .spec
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entries(list: &[(&str, &str)]) -> Vec<(String, String)> {
        list.iter().map(|(n, v)| (n.to_string(), v.to_string())).collect()
    }

    #[test]
    fn parse_canonical_trio() {
        let parsed =
            parse_strata(&entries(&[("n", "00*"), ("c", "01"), ("a", "11*")]), None).unwrap();
        let spec = parsed.spec;
        assert_eq!(spec.n_strata(), 3);
        assert_eq!(spec.er_flags, vec![true, false, true]);
        assert_eq!(spec.reference_index, 0);
        assert!(parsed.warnings.is_empty());
    }

    #[test]
    fn parse_two_variable_strata() {
        let parsed = parse_strata(
            &entries(&[
                ("nn", "00|00*"),
                ("nc", "00|01"),
                ("cc", "01|01"),
                ("na", "00|11*"),
                ("aa", "11|11*"),
            ]),
            None,
        )
        .unwrap();
        assert_eq!(parsed.spec.arity(), 2);
        assert_eq!(parsed.spec.n_strata(), 5);
    }

    #[test]
    fn duplicate_label_is_error() {
        let err = parse_strata(&entries(&[("x", "00"), ("y", "00")]), None).unwrap_err();
        assert!(err.to_string().contains("duplicate"));
    }

    #[test]
    fn malformed_and_inconsistent_labels() {
        assert!(parse_strata(&entries(&[("x", "0")]), None).is_err());
        assert!(parse_strata(&entries(&[("x", "02")]), None).is_err());
        assert!(parse_strata(&entries(&[("x", "00"), ("y", "00|11")]), None).is_err());
    }

    #[test]
    fn d_of_reads_label_halves() {
        let c = StratumLabel::parse_body("c", "01").unwrap();
        assert_eq!(c.d_of(1), vec![1]);
        assert_eq!(c.d_of(0), vec![0]);
        let s = StratumLabel::parse_body("s", "00|11").unwrap();
        assert_eq!(s.d_of(0), vec![0, 1]);
        assert_eq!(s.d_of(1), vec![0, 1]);
    }

    #[test]
    fn compatibility_sets() {
        let spec = monotonicity_trio();
        // Z=1, D=1: compliers and always-takers both take treatment.
        assert_eq!(spec.compatible(1, &[1]).unwrap(), vec![1, 2]);
        assert_eq!(spec.compatible(0, &[1]).unwrap(), vec![2]);
        assert_eq!(spec.compatible(0, &[0]).unwrap(), vec![0, 1]);
        assert_eq!(spec.compatible(1, &[0]).unwrap(), vec![0]);
    }

    #[test]
    fn defier_pattern_is_empty_set_error() {
        // One-sided spec: only never-takers and compliers declared; an
        // always-taker pattern (Z=0, D=1) has no compatible stratum.
        let spec =
            parse_strata(&entries(&[("n", "00*"), ("c", "01")]), None).unwrap().spec;
        let err = spec.compatible(0, &[1]).unwrap_err();
        assert!(err.to_string().contains("Z=0"), "{err}");
    }

    #[test]
    fn cell_map_collapses_er_strata() {
        let spec = monotonicity_trio();
        let cm = spec.cell_map();
        assert_eq!(cm.n_cells(), 4);
        assert_eq!(cm.labels, vec!["n", "c:0", "c:1", "a"]);
        assert_eq!(cm.cell(0, 0), cm.cell(0, 1));
        assert_ne!(cm.cell(1, 0), cm.cell(1, 1));
    }

    #[test]
    fn cell_map_without_er() {
        let spec =
            parse_strata(&entries(&[("n", "00"), ("c", "01"), ("a", "11")]), None).unwrap().spec;
        assert_eq!(spec.cell_map().n_cells(), 6);
    }

    #[test]
    fn er_on_non_invariant_stratum_warns_and_does_not_collapse() {
        let parsed = parse_strata(&entries(&[("n", "00*"), ("c", "01*")]), None).unwrap();
        assert_eq!(parsed.warnings.len(), 1);
        assert!(parsed.warnings[0].contains("'c'"));
        assert_eq!(parsed.spec.cell_map().n_cells(), 3); // n collapsed, c:0, c:1
    }

    #[test]
    fn er_override_conflict() {
        let e = entries(&[("n", "00*"), ("c", "01"), ("a", "11")]);
        // Denying an asterisk is a conflict.
        let er = vec![("n".to_string(), false), ("c".to_string(), false), ("a".to_string(), true)];
        assert!(parse_strata(&e, Some(&er)).is_err());
        // Adding ER to a non-asterisked stratum is allowed.
        let er = vec![("n".to_string(), true), ("c".to_string(), false), ("a".to_string(), true)];
        let spec = parse_strata(&e, Some(&er)).unwrap().spec;
        assert_eq!(spec.er_flags, vec![true, false, true]);
        // Length mismatch.
        let er = vec![("n".to_string(), true)];
        assert!(parse_strata(&e, Some(&er)).is_err());
    }

    #[test]
    fn monotonicity_of_canonical_strata() {
        let spec = monotonicity_trio();
        assert!(spec.strata.iter().all(StratumLabel::is_monotone));
        let defier = StratumLabel::parse_body("d", "10").unwrap();
        assert!(!defier.is_monotone());
    }

    /// Brute-force oracle for the ER quotient: enumerate all (s, z) pairs and
    /// merge exactly those with the same s, ER(s), and equal D(s, z).
    fn brute_force_cell_count(spec: &StrataSpec) -> usize {
        let mut count = 0;
        for (i, s) in spec.strata.iter().enumerate() {
            let collapse = spec.er_flags[i] && s.d_of(0) == s.d_of(1);
            count += if collapse { 1 } else { 2 };
        }
        count
    }

    #[test]
    fn simulation2_spec_has_seven_cells() {
        let spec = parse_strata(
            &entries(&[
                ("nn", "00|00*"),
                ("nc", "00|01"),
                ("cc", "01|01"),
                ("na", "00|11*"),
                ("aa", "11|11*"),
            ]),
            None,
        )
        .unwrap()
        .spec;
        assert_eq!(spec.cell_map().n_cells(), 7);
        assert_eq!(spec.cell_map().n_cells(), brute_force_cell_count(&spec));
    }

    /// Partition property: over every realizable (z, d_obs), compatibility
    /// sets are disjoint and jointly cover all strata.
    #[test]
    fn compatibility_partitions_strata() {
        for spec in [
            monotonicity_trio(),
            parse_strata(
                &entries(&[
                    ("nn", "00|00*"),
                    ("nc", "00|01"),
                    ("cc", "01|01"),
                    ("na", "00|11*"),
                    ("aa", "11|11*"),
                ]),
                None,
            )
            .unwrap()
            .spec,
        ] {
            for z in [0u8, 1] {
                let mut seen = vec![0usize; spec.n_strata()];
                let patterns: std::collections::BTreeSet<Vec<u8>> =
                    spec.strata.iter().map(|s| s.d_of(z)).collect();
                for d in &patterns {
                    for i in spec.compatible(z, d).unwrap() {
                        seen[i] += 1;
                    }
                }
                assert!(seen.iter().all(|&c| c == 1), "arm {z}: {seen:?}");
            }
        }
    }
}
