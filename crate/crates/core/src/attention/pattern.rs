use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Attention window: `Local(w)` sees `2w+1` positions, `Full` sees all.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Window {
    Full,
    Local(usize),
}

impl Window {
    /// Whether a source at relative position `i` may see target position `t`.
    pub fn covers(self, i: usize, t: usize) -> bool {
        match self {
            Window::Full => true,
            Window::Local(w) => i.abs_diff(t) <= w,
        }
    }
}

impl fmt::Display for Window {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Window::Full => f.write_str("inf"),
            Window::Local(w) => write!(f, "{w}"),
        }
    }
}

impl FromStr for Window {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "inf" | "∞" | "full" => Ok(Window::Full),
            n => n.parse().map(Window::Local).map_err(|_| Error::Unknown { what: "window", value: s.to_string() }),
        }
    }
}

impl Serialize for Window {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Window::Full => s.serialize_str("inf"),
            Window::Local(w) => s.serialize_u64(*w as u64),
        }
    }
}

impl<'de> Deserialize<'de> for Window {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(u64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Int(w) => Ok(Window::Local(w as usize)),
            Raw::Str(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// The three token groups of a cross-encoder input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Group {
    Cls,
    Query,
    Document,
}

impl Group {
    pub const ALL: [Group; 3] = [Group::Cls, Group::Query, Group::Document];
}

/// Contiguous `[CLS] | query + [SEP] | document + [SEP]` split of a sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubsequencePartition {
    cls: Range<usize>,
    query: Range<usize>,
    document: Range<usize>,
}

impl SubsequencePartition {
    /// Partition from group lengths (each including its trailing `[SEP]`).
    pub fn from_group_lens(cls: usize, query: usize, document: usize) -> Self {
        Self { cls: 0..cls, query: cls..cls + query, document: cls + query..cls + query + document }
    }

    /// Partition of `[CLS] q₁…q_m [SEP] d₁…d_n [SEP]`.
    pub fn for_lengths(query_tokens: usize, doc_tokens: usize) -> Self {
        Self::from_group_lens(1, query_tokens + 1, doc_tokens + 1)
    }

    pub fn range(&self, group: Group) -> Range<usize> {
        match group {
            Group::Cls => self.cls.clone(),
            Group::Query => self.query.clone(),
            Group::Document => self.document.clone(),
        }
    }

    pub fn len(&self, group: Group) -> usize {
        self.range(group).len()
    }

    pub fn seq_len(&self) -> usize {
        self.document.end
    }

    pub fn is_empty(&self) -> bool {
        self.seq_len() == 0
    }

    pub fn group_of(&self, pos: usize) -> Option<Group> {
        Group::ALL.into_iter().find(|&g| self.range(g).contains(&pos))
    }

    /// Inclusive `[first, last]` bounds per group, as `(cls, query, document)`.
    /// Empty groups yield `None`.
    pub fn inclusive_bounds(&self) -> [Option<(usize, usize)>; 3] {
        Group::ALL.map(|g| {
            let r = self.range(g);
            (!r.is_empty()).then(|| (r.start, r.end - 1))
        })
    }
}

/// Document positions with two-way full attention.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GlobalTokens {
    #[default]
    None,
    /// Every n-th document token (positions n−1, 2n−1, …), never the
    /// trailing `[SEP]`.
    Every(usize),
    /// Explicit positions relative to the document group.
    Positions(Vec<usize>),
}

/// One `(target group, window)` entry of a source group's attention list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub group: Group,
    pub window: Window,
}

impl TargetSpec {
    pub fn new(group: Group, window: Window) -> Self {
        Self { group, window }
    }
}

/// Named pattern families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PatternKind {
    Full,
    Longformer,
    Qds,
    Sparse,
}

impl PatternKind {
    pub const ALL: [PatternKind; 4] =
        [PatternKind::Full, PatternKind::Longformer, PatternKind::Qds, PatternKind::Sparse];

    pub fn name(self) -> &'static str {
        match self {
            PatternKind::Full => "full",
            PatternKind::Longformer => "longformer",
            PatternKind::Qds => "qds",
            PatternKind::Sparse => "sparse",
        }
    }
}

impl fmt::Display for PatternKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PatternKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PatternKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Unknown { what: "pattern", value: s.to_string() })
    }
}

/// Default global-token stride of the QDS pattern.
pub const QDS_GLOBAL_STRIDE: usize = 30;

/// Which groups each source group attends to, and with which window.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttentionPattern {
    pub cls: Vec<TargetSpec>,
    pub query: Vec<TargetSpec>,
    pub document: Vec<TargetSpec>,
    #[serde(default)]
    pub globals: GlobalTokens,
}

fn all_groups(doc_window: Window) -> Vec<TargetSpec> {
    vec![
        TargetSpec::new(Group::Cls, Window::Full),
        TargetSpec::new(Group::Query, Window::Full),
        TargetSpec::new(Group::Document, doc_window),
    ]
}

impl AttentionPattern {
    /// Every token attends to every token.
    pub fn full() -> Self {
        Self {
            cls: all_groups(Window::Full),
            query: all_groups(Window::Full),
            document: all_groups(Window::Full),
            globals: GlobalTokens::None,
        }
    }

    /// `[CLS]` and query tokens are global; document tokens see each other
    /// through a window.
    pub fn longformer(window: Window) -> Self {
        Self { document: all_groups(window), ..Self::full() }
    }

    /// Longformer plus global document tokens every `stride` positions.
    pub fn qds(window: Window, stride: usize) -> Self {
        Self { globals: GlobalTokens::Every(stride), ..Self::longformer(window) }
    }

    /// Asymmetric pattern: `[CLS]` sees everything, query tokens see only
    /// the query, document tokens see `[CLS]`, the query and a window of
    /// the document.
    pub fn sparse(window: Window) -> Self {
        Self {
            cls: all_groups(Window::Full),
            query: vec![TargetSpec::new(Group::Query, Window::Full)],
            document: all_groups(window),
            globals: GlobalTokens::None,
        }
    }

    pub fn preset(kind: PatternKind, window: Window) -> Self {
        match kind {
            PatternKind::Full => Self::full(),
            PatternKind::Longformer => Self::longformer(window),
            PatternKind::Qds => Self::qds(window, QDS_GLOBAL_STRIDE),
            PatternKind::Sparse => Self::sparse(window),
        }
    }

    pub fn targets(&self, source: Group) -> &[TargetSpec] {
        match source {
            Group::Cls => &self.cls,
            Group::Query => &self.query,
            Group::Document => &self.document,
        }
    }

    /// Window with which `source` sees `target`, if at all.
    pub fn window(&self, source: Group, target: Group) -> Option<Window> {
        self.targets(source).iter().find(|t| t.group == target).map(|t| t.window)
    }

    /// Global document positions (relative to the document group).
    pub fn global_positions(&self, partition: &SubsequencePartition) -> Result<Vec<usize>> {
        let doc_len = partition.len(Group::Document);
        match &self.globals {
            GlobalTokens::None => Ok(Vec::new()),
            GlobalTokens::Every(0) => Err(Error::InvalidPattern("global stride must be positive".into())),
            GlobalTokens::Every(n) => {
                let tokens = doc_len.saturating_sub(1);
                Ok((1..).map(|k| k * n - 1).take_while(|&p| p < tokens).collect())
            }
            GlobalTokens::Positions(p) => {
                let mut p = p.clone();
                p.sort_unstable();
                p.dedup();
                if let Some(&bad) = p.iter().find(|&&x| x >= doc_len) {
                    return Err(Error::InvalidPattern(format!(
                        "global position {bad} outside the document group (length {doc_len})"
                    )));
                }
                Ok(p)
            }
        }
    }

    /// Checks the pattern against a concrete partition.
    pub fn validate(&self, partition: &SubsequencePartition) -> Result<()> {
        for source in Group::ALL {
            let list = self.targets(source);
            if partition.len(source) > 0 && list.is_empty() {
                return Err(Error::InvalidPattern(format!("{source:?} attends to nothing")));
            }
            for (i, t) in list.iter().enumerate() {
                if list[..i].iter().any(|u| u.group == t.group) {
                    return Err(Error::InvalidPattern(format!("{source:?} lists {:?} twice", t.group)));
                }
                if partition.len(t.group) == 0 && partition.len(source) > 0 {
                    return Err(Error::InvalidPattern(format!(
                        "{source:?} attends to {:?}, which is absent from the sequence",
                        t.group
                    )));
                }
            }
        }
        self.global_positions(partition)?;
        Ok(())
    }
}
