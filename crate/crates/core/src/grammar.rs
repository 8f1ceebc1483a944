//! Relational and locational clauses, the preposition lexicon, and the JSON
//! clause format.
//!
//! A relational clause says how a *figure* toponym sits relative to one or
//! more *referents*, optionally disambiguated by a *context* toponym. A
//! locational clause ties a toponym to a point, range and bearing in either
//! the world frame or the frame of the cue that carried it.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::wrap_angle;
use crate::hierarchy::{HierarchyError, HierarchyGraph};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GrammarError {
    #[error("toponym names must be non-empty and free of control characters: {0:?}")]
    InvalidToponym(String),
    #[error("unknown preposition {0:?}")]
    UnknownPreposition(String),
    #[error("relational clause needs at least one referent")]
    EmptyReferents,
    #[error("figure {0:?} also appears as a referent")]
    FigureIsReferent(String),
    #[error("preposition {preposition:?} takes {expected} referent(s), got {found}")]
    ArityMismatch {
        preposition: String,
        expected: usize,
        found: usize,
    },
    #[error("range must be non-negative, got {0}")]
    NegativeRange(f64),
    #[error("non-finite coordinate in locational clause")]
    NonFiniteCoordinate,
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("clause {index}: {source}")]
    InClause {
        index: usize,
        #[source]
        source: Box<GrammarError>,
    },
    #[error("spatial hierarchy contains a cycle through {0:?}")]
    CyclicGraph(String),
}

impl From<HierarchyError> for GrammarError {
    fn from(err: HierarchyError) -> Self {
        match err {
            HierarchyError::Cycle(name) => GrammarError::CyclicGraph(name),
            other => GrammarError::InvalidToponym(other.to_string()),
        }
    }
}

/// Name of a place. Case-sensitive, compared by exact text.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Toponym(String);

impl Toponym {
    pub fn new(name: impl Into<String>) -> Result<Self, GrammarError> {
        let name = name.into();
        if name.is_empty() || name.chars().any(char::is_control) {
            return Err(GrammarError::InvalidToponym(name));
        }
        Ok(Self(name))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for Toponym {
    type Error = GrammarError;
    fn try_from(value: String) -> Result<Self, Self::Error> {
        Toponym::new(value)
    }
}

impl From<Toponym> for String {
    fn from(value: Toponym) -> Self {
        value.0
    }
}

impl fmt::Display for Toponym {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Frame {
    #[default]
    World,
    /// Local frame of the cue that carried the clause: origin at the cue,
    /// +x along the cue's heading.
    Cue,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RelationalClause {
    pub preposition: String,
    pub figure: Toponym,
    pub referents: Vec<Toponym>,
    pub context: Option<Toponym>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LocationalClause {
    pub toponym: Toponym,
    pub frame: Frame,
    pub x: f64,
    pub y: f64,
    pub range: Option<f64>,
    pub bearing: Option<f64>,
}

impl LocationalClause {
    /// A label states exactly where a place is.
    pub fn is_label(&self) -> bool {
        self.range == Some(0.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Clause {
    Relational(RelationalClause),
    Locational(LocationalClause),
}

/// Which node of a spring template a role binds to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Role {
    Figure,
    Referent(usize),
    Context,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TemplateKind {
    /// Natural length is `multiplier` times the scale for the endpoints' levels.
    Distance { multiplier: f64 },
    AbsoluteAngle { angle: f64 },
    RelativeAngle { angle: f64 },
}

/// Spring shape emitted for a preposition, before toponyms are bound.
///
/// Distance and absolute-angle templates have two endpoints `[A, B]`;
/// relative-angle templates have three, `[A, B, C]` with `B` the vertex.
#[derive(Clone, Debug, PartialEq)]
pub struct SpringTemplate {
    pub kind: TemplateKind,
    pub endpoints: Vec<Role>,
    pub stiffness: f64,
}

impl SpringTemplate {
    pub fn distance(a: Role, b: Role, multiplier: f64, stiffness: f64) -> Self {
        Self {
            kind: TemplateKind::Distance { multiplier },
            endpoints: vec![a, b],
            stiffness,
        }
    }

    pub fn absolute_angle(a: Role, b: Role, angle: f64, stiffness: f64) -> Self {
        Self {
            kind: TemplateKind::AbsoluteAngle { angle },
            endpoints: vec![a, b],
            stiffness,
        }
    }

    pub fn relative_angle(a: Role, vertex: Role, c: Role, angle: f64, stiffness: f64) -> Self {
        Self {
            kind: TemplateKind::RelativeAngle { angle },
            endpoints: vec![a, vertex, c],
            stiffness,
        }
    }

    pub fn uses_context(&self) -> bool {
        self.endpoints.contains(&Role::Context)
    }

    fn with_referent(&self, index: usize) -> Self {
        let endpoints = self
            .endpoints
            .iter()
            .map(|role| match role {
                Role::Referent(0) => Role::Referent(index),
                other => *other,
            })
            .collect();
        Self {
            endpoints,
            ..self.clone()
        }
    }
}

/// Direction of a containment preposition.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Containment {
    /// "figure in referent": the figure is the child.
    FigureIsChild,
    /// "figure contains referent": the figure is the parent.
    FigureIsParent,
}

#[derive(Clone, Debug, PartialEq)]
enum LexiconEntry {
    Layout {
        templates: Vec<SpringTemplate>,
        arity: Option<usize>,
    },
    Hierarchy(Containment),
}

/// Result of looking a preposition up in the lexicon.
#[derive(Clone, Debug, PartialEq)]
pub enum Lookup {
    Springs(Vec<SpringTemplate>),
    Hierarchy(Containment),
}

/// Maps preposition text to spring templates or hierarchy edges.
#[derive(Clone, Debug, PartialEq)]
pub struct PrepositionLexicon {
    entries: BTreeMap<String, LexiconEntry>,
}

impl PrepositionLexicon {
    pub fn empty() -> Self {
        Self {
            entries: BTreeMap::new(),
        }
    }

    pub fn insert_layout(
        &mut self,
        preposition: impl Into<String>,
        templates: Vec<SpringTemplate>,
        arity: Option<usize>,
    ) {
        assert!(!templates.is_empty(), "layout prepositions need a template");
        self.entries
            .insert(preposition.into(), LexiconEntry::Layout { templates, arity });
    }

    pub fn insert_hierarchy(&mut self, preposition: impl Into<String>, containment: Containment) {
        self.entries
            .insert(preposition.into(), LexiconEntry::Hierarchy(containment));
    }

    pub fn contains(&self, preposition: &str) -> bool {
        self.entries.contains_key(preposition)
    }

    pub fn prepositions(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn hierarchy_prepositions(&self) -> BTreeSet<&str> {
        self.entries
            .iter()
            .filter(|(_, e)| matches!(e, LexiconEntry::Hierarchy(_)))
            .map(|(k, _)| k.as_str())
            .collect()
    }

    /// Templates for `preposition` specialised to `referent_count` referents.
    ///
    /// Single-referent templates are replicated once per referent unless the
    /// preposition has a fixed arity.
    pub fn lookup(&self, preposition: &str, referent_count: usize) -> Result<Lookup, GrammarError> {
        let entry = self
            .entries
            .get(preposition)
            .ok_or_else(|| GrammarError::UnknownPreposition(preposition.to_owned()))?;
        match entry {
            LexiconEntry::Hierarchy(containment) => Ok(Lookup::Hierarchy(*containment)),
            LexiconEntry::Layout { templates, arity } => match arity {
                Some(expected) if *expected != referent_count => Err(GrammarError::ArityMismatch {
                    preposition: preposition.to_owned(),
                    expected: *expected,
                    found: referent_count,
                }),
                Some(_) => Ok(Lookup::Springs(templates.clone())),
                None => {
                    if referent_count == 0 {
                        return Err(GrammarError::EmptyReferents);
                    }
                    Ok(Lookup::Springs(
                        (0..referent_count)
                            .flat_map(|i| templates.iter().map(move |t| t.with_referent(i)))
                            .collect(),
                    ))
                }
            },
        }
    }
}

impl Default for PrepositionLexicon {
    fn default() -> Self {
        use Role::*;
        let mut lex = Self::empty();

        let beside = |k| vec![SpringTemplate::distance(Figure, Referent(0), 0.5, k)];
        lex.insert_layout(
            "right of",
            vec![
                SpringTemplate::relative_angle(Figure, Referent(0), Context, FRAC_PI_2, 1.0),
                SpringTemplate::distance(Figure, Referent(0), 0.5, 0.1),
            ],
            None,
        );
        lex.insert_layout(
            "left of",
            vec![
                SpringTemplate::relative_angle(Figure, Referent(0), Context, -FRAC_PI_2, 1.0),
                SpringTemplate::distance(Figure, Referent(0), 0.5, 0.1),
            ],
            None,
        );
        for word in ["past", "beyond"] {
            lex.insert_layout(
                word,
                vec![
                    SpringTemplate::relative_angle(Figure, Referent(0), Context, PI, 0.5),
                    SpringTemplate::distance(Figure, Referent(0), 1.0, 0.1),
                ],
                None,
            );
        }
        lex.insert_layout(
            "between",
            vec![
                SpringTemplate::distance(Figure, Referent(0), 0.5, 0.5),
                SpringTemplate::distance(Figure, Referent(1), 0.5, 0.5),
                SpringTemplate::relative_angle(Referent(0), Figure, Referent(1), PI, 0.5),
            ],
            Some(2),
        );
        for word in ["near", "beside", "by"] {
            lex.insert_layout(word, beside(1.0), None);
        }
        lex.insert_layout(
            "towards",
            vec![
                SpringTemplate::relative_angle(Figure, Referent(0), Context, 0.0, 0.5),
                SpringTemplate::distance(Figure, Referent(0), 1.0, 0.01),
            ],
            None,
        );
        for (word, angle) in [
            ("north of", FRAC_PI_2),
            ("east of", 0.0),
            ("south of", -FRAC_PI_2),
            ("west of", PI),
        ] {
            lex.insert_layout(
                word,
                vec![SpringTemplate::absolute_angle(Figure, Referent(0), angle, 1.0)],
                None,
            );
        }
        for word in ["in", "inside", "within"] {
            lex.insert_hierarchy(word, Containment::FigureIsChild);
        }
        lex.insert_hierarchy("contains", Containment::FigureIsParent);
        lex
    }
}

pub fn make_relational(
    lexicon: &PrepositionLexicon,
    preposition: &str,
    figure: Toponym,
    referents: Vec<Toponym>,
    context: Option<Toponym>,
) -> Result<RelationalClause, GrammarError> {
    if !lexicon.contains(preposition) {
        return Err(GrammarError::UnknownPreposition(preposition.to_owned()));
    }
    if referents.is_empty() {
        return Err(GrammarError::EmptyReferents);
    }
    if referents.contains(&figure) {
        return Err(GrammarError::FigureIsReferent(figure.0));
    }
    Ok(RelationalClause {
        preposition: preposition.to_owned(),
        figure,
        referents,
        context,
    })
}

/// Builds a locational clause. A present bearing is wrapped into (−π, π].
pub fn make_locational(
    toponym: Toponym,
    frame: Frame,
    x: f64,
    y: f64,
    range: Option<f64>,
    bearing: Option<f64>,
) -> Result<LocationalClause, GrammarError> {
    if !x.is_finite() || !y.is_finite() {
        return Err(GrammarError::NonFiniteCoordinate);
    }
    if let Some(r) = range {
        if !r.is_finite() {
            return Err(GrammarError::NonFiniteCoordinate);
        }
        if r < 0.0 {
            return Err(GrammarError::NegativeRange(r));
        }
    }
    let bearing = match bearing {
        Some(theta) => Some(wrap_angle(theta).ok_or(GrammarError::NonFiniteCoordinate)?),
        None => None,
    };
    Ok(LocationalClause {
        toponym,
        frame,
        x,
        y,
        range,
        bearing,
    })
}

/// One "in" clause per hierarchy edge, child as figure and parent as
/// referent, in depth-first order from the roots.
pub fn hierarchy_to_clauses(graph: &HierarchyGraph) -> Result<Vec<RelationalClause>, GrammarError> {
    Ok(graph
        .depth_first_edges()?
        .into_iter()
        .map(|(parent, child)| RelationalClause {
            preposition: "in".to_owned(),
            figure: child,
            referents: vec![parent],
            context: None,
        })
        .collect())
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
enum RawClause {
    #[serde(rename = "rel")]
    Relational {
        pred: String,
        figure: String,
        referents: Vec<String>,
        #[serde(default)]
        context: Option<String>,
    },
    #[serde(rename = "loc")]
    Locational {
        toponym: String,
        #[serde(default)]
        frame: Frame,
        #[serde(default)]
        x: f64,
        #[serde(default)]
        y: f64,
        #[serde(default)]
        r: Option<f64>,
        #[serde(default)]
        theta: Option<f64>,
    },
}

impl RawClause {
    fn validate(self, lexicon: &PrepositionLexicon) -> Result<Clause, GrammarError> {
        match self {
            RawClause::Relational {
                pred,
                figure,
                referents,
                context,
            } => {
                let referents = referents
                    .into_iter()
                    .map(Toponym::new)
                    .collect::<Result<Vec<_>, _>>()?;
                let context = context.map(Toponym::new).transpose()?;
                make_relational(lexicon, &pred, Toponym::new(figure)?, referents, context)
                    .map(Clause::Relational)
            }
            RawClause::Locational {
                toponym,
                frame,
                x,
                y,
                r,
                theta,
            } => make_locational(Toponym::new(toponym)?, frame, x, y, r, theta)
                .map(Clause::Locational),
        }
    }
}

impl From<&Clause> for RawClause {
    fn from(clause: &Clause) -> Self {
        match clause {
            Clause::Relational(c) => RawClause::Relational {
                pred: c.preposition.clone(),
                figure: c.figure.0.clone(),
                referents: c.referents.iter().map(|t| t.0.clone()).collect(),
                context: c.context.as_ref().map(|t| t.0.clone()),
            },
            Clause::Locational(c) => RawClause::Locational {
                toponym: c.toponym.0.clone(),
                frame: c.frame,
                x: c.x,
                y: c.y,
                r: c.range,
                theta: c.bearing,
            },
        }
    }
}

impl Serialize for Clause {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        RawClause::from(self).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Clause {
    /// Deserialises and validates against the default lexicon.
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        RawClause::deserialize(deserializer)?
            .validate(&PrepositionLexicon::default())
            .map_err(serde::de::Error::custom)
    }
}

fn syntax_error(err: serde_json::Error) -> GrammarError {
    GrammarError::Syntax {
        line: err.line(),
        column: err.column(),
        message: err.to_string(),
    }
}

/// Parses a JSON array of clauses, validating each against `lexicon`.
pub fn parse_clause_set(text: &str, lexicon: &PrepositionLexicon) -> Result<Vec<Clause>, GrammarError> {
    let raw: Vec<RawClause> = serde_json::from_str(text).map_err(syntax_error)?;
    raw.into_iter()
        .enumerate()
        .map(|(index, clause)| {
            clause.validate(lexicon).map_err(|e| GrammarError::InClause {
                index,
                source: Box::new(e),
            })
        })
        .collect()
}

pub fn serialize_clause_set(clauses: &[Clause]) -> String {
    let raw: Vec<RawClause> = clauses.iter().map(RawClause::from).collect();
    serde_json::to_string(&raw).expect("clause serialisation is infallible")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(name: &str) -> Toponym {
        Toponym::new(name).unwrap()
    }

    #[test]
    fn toponym_rejects_empty_and_control() {
        assert!(Toponym::new("").is_err());
        assert!(Toponym::new("a\nb").is_err());
        assert_eq!(t("Lion"), t("Lion"));
        assert_ne!(t("Lion"), t("lion"));
    }

    #[test]
    fn relational_between_example() {
        let lex = PrepositionLexicon::default();
        let c = make_relational(
            &lex,
            "between",
            t("Isla's office"),
            vec![t("entryway"), t("printer")],
            None,
        )
        .unwrap();
        assert_eq!(c.referents.len(), 2);
        assert_eq!(c.context, None);
    }

    #[test]
    fn relational_in_is_hierarchy() {
        let lex = PrepositionLexicon::default();
        let c = make_relational(&lex, "in", t("A Block"), vec![t("University")], None).unwrap();
        assert_eq!(
            lex.lookup(&c.preposition, 1).unwrap(),
            Lookup::Hierarchy(Containment::FigureIsChild)
        );
        assert_eq!(
            lex.lookup("contains", 1).unwrap(),
            Lookup::Hierarchy(Containment::FigureIsParent)
        );
    }

    #[test]
    fn relational_errors() {
        let lex = PrepositionLexicon::default();
        assert_eq!(
            make_relational(&lex, "hovering-over", t("a"), vec![t("b")], None),
            Err(GrammarError::UnknownPreposition("hovering-over".into()))
        );
        assert_eq!(
            make_relational(&lex, "near", t("a"), vec![], None),
            Err(GrammarError::EmptyReferents)
        );
        assert_eq!(
            make_relational(&lex, "near", t("a"), vec![t("b"), t("a")], None),
            Err(GrammarError::FigureIsReferent("a".into()))
        );
    }

    #[test]
    fn locational_examples() {
        let c = make_locational(t("Riko's Office"), Frame::World, 5.21, 1.76, Some(0.0), None).unwrap();
        assert!(c.is_label());
        assert_eq!(c.bearing, None);

        let arrow = make_locational(t("Lion"), Frame::Cue, 0.0, 0.0, None, Some(FRAC_PI_2)).unwrap();
        assert_eq!(arrow.range, None);
        assert_eq!(arrow.bearing, Some(FRAC_PI_2));

        assert_eq!(
            make_locational(t("Lion"), Frame::World, 0.0, 0.0, Some(-1.0), None),
            Err(GrammarError::NegativeRange(-1.0))
        );
        assert_eq!(
            make_locational(t("Lion"), Frame::World, f64::NAN, 0.0, None, None),
            Err(GrammarError::NonFiniteCoordinate)
        );
        assert_eq!(
            make_locational(t("Lion"), Frame::World, 0.0, 0.0, None, Some(f64::INFINITY)),
            Err(GrammarError::NonFiniteCoordinate)
        );
    }

    #[test]
    fn bearing_is_wrapped() {
        let c = make_locational(t("x"), Frame::Cue, 0.0, 0.0, None, Some(3.0 * PI / 2.0)).unwrap();
        assert!((c.bearing.unwrap() + FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn lookup_right_of() {
        let lex = PrepositionLexicon::default();
        let Lookup::Springs(templates) = lex.lookup("right of", 1).unwrap() else {
            panic!("expected springs");
        };
        assert_eq!(templates.len(), 2);
        assert_eq!(
            templates[0],
            SpringTemplate::relative_angle(Role::Figure, Role::Referent(0), Role::Context, FRAC_PI_2, 1.0)
        );
        assert!(matches!(templates[1].kind, TemplateKind::Distance { .. }));
    }

    #[test]
    fn lookup_arity() {
        let lex = PrepositionLexicon::default();
        assert_eq!(
            lex.lookup("between", 3),
            Err(GrammarError::ArityMismatch {
                preposition: "between".into(),
                expected: 2,
                found: 3
            })
        );
        let Lookup::Springs(near) = lex.lookup("near", 3).unwrap() else {
            panic!()
        };
        assert_eq!(near.len(), 3);
        assert_eq!(near[2].endpoints, vec![Role::Figure, Role::Referent(2)]);
    }

    #[test]
    fn default_lexicon_value_closure() {
        let lex = PrepositionLexicon::default();
        let angles = [PI, -PI, FRAC_PI_2, -FRAC_PI_2];
        let hierarchy = lex.hierarchy_prepositions();
        for word in lex.prepositions() {
            let count = if word == "between" { 2 } else { 1 };
            match lex.lookup(word, count).unwrap() {
                Lookup::Hierarchy(_) => assert!(hierarchy.contains(word)),
                Lookup::Springs(templates) => {
                    assert!(!templates.is_empty());
                    for tpl in templates {
                        assert!([1.0, 0.5, 0.1, 0.01].contains(&tpl.stiffness), "{word}");
                        match tpl.kind {
                            TemplateKind::Distance { multiplier } => {
                                assert!([1.0, 0.5].contains(&multiplier));
                                assert_eq!(tpl.endpoints.len(), 2);
                            }
                            TemplateKind::AbsoluteAngle { angle } => {
                                // east of is the zero heading; the remaining angles come from the fixed set
                                assert!(angle == 0.0 || angles.contains(&angle), "{word}");
                                assert_eq!(tpl.endpoints.len(), 2);
                            }
                            TemplateKind::RelativeAngle { angle } => {
                                assert!(angle == 0.0 || angles.contains(&angle), "{word}");
                                assert_eq!(tpl.endpoints.len(), 3);
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn parse_examples() {
        let lex = PrepositionLexicon::default();
        let clauses = parse_clause_set(
            r#"[{"kind":"rel","pred":"between","figure":"Isla's office","referents":["entryway","printer"]}]"#,
            &lex,
        )
        .unwrap();
        assert_eq!(clauses.len(), 1);
        assert!(matches!(&clauses[0], Clause::Relational(c) if c.figure.as_str() == "Isla's office"));

        assert!(parse_clause_set("[]", &lex).unwrap().is_empty());

        let err = parse_clause_set(r#"[{"kind":"loc","toponym":"Lion","r":-2}]"#, &lex).unwrap_err();
        assert_eq!(
            err,
            GrammarError::InClause {
                index: 0,
                source: Box::new(GrammarError::NegativeRange(-2.0))
            }
        );
    }

    #[test]
    fn parse_reports_line() {
        let err = parse_clause_set("[\n  {\"kind\": \"rel\",\n  oops\n]", &PrepositionLexicon::default())
            .unwrap_err();
        match err {
            GrammarError::Syntax { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn null_fields_mean_absent() {
        let lex = PrepositionLexicon::default();
        let clauses = parse_clause_set(
            r#"[{"kind":"loc","toponym":"Lion","frame":"cue","x":0,"y":0,"r":null,"theta":null},
                {"kind":"rel","pred":"near","figure":"a","referents":["b"],"context":null}]"#,
            &lex,
        )
        .unwrap();
        assert!(matches!(&clauses[0], Clause::Locational(c) if c.range.is_none() && c.bearing.is_none()));
        assert!(matches!(&clauses[1], Clause::Relational(c) if c.context.is_none()));
    }
}
