//! Bladder-state class labels and label sets.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The four bladder activity states. `None` is exclusive: a sample is NONE
/// exactly when no other state is active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Label {
    None = 0,
    Do = 1,
    Void = 2,
    Abd = 3,
}

impl Label {
    pub const ALL: [Label; 4] = [Label::None, Label::Do, Label::Void, Label::Abd];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Result<Label> {
        Label::ALL
            .get(i)
            .copied()
            .ok_or_else(|| Error::InvalidInput(format!("class index {i} out of range 0..4")))
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::None => "NONE",
            Label::Do => "DO",
            Label::Void => "VOID",
            Label::Abd => "ABD",
        }
    }

    pub fn parse(s: &str) -> Result<Label> {
        match s {
            "NONE" => Ok(Label::None),
            "DO" => Ok(Label::Do),
            "VOID" => Ok(Label::Void),
            "ABD" => Ok(Label::Abd),
            other => Err(Error::InvalidInput(format!("unknown class name '{other}'"))),
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A set of simultaneously active labels, ordered by class index.
pub type LabelSet = BTreeSet<Label>;

/// Renders a label set as `|`-joined class names (`DO|ABD`).
pub fn format_label_set(set: &LabelSet) -> String {
    if set.is_empty() {
        return Label::None.as_str().to_string();
    }
    set.iter()
        .map(|l| l.as_str())
        .collect::<Vec<_>>()
        .join("|")
}

/// Parses a `|`-joined label list.
pub fn parse_label_set(text: &str) -> Result<LabelSet> {
    let mut set = LabelSet::new();
    for part in text.split('|') {
        set.insert(Label::parse(part.trim())?);
    }
    Ok(set)
}

/// Multi-hot row over (NONE, DO, VOID, ABD).
pub type MultiHot = [bool; 4];

/// Converts a multi-hot row to the set of active labels.
pub fn multi_hot_to_set(row: &MultiHot) -> LabelSet {
    Label::ALL
        .iter()
        .zip(row.iter())
        .filter(|(_, &on)| on)
        .map(|(&l, _)| l)
        .collect()
}

/// Checks the NONE-exclusivity invariant: NONE is set iff no other class is.
pub fn multi_hot_valid(row: &MultiHot) -> bool {
    let any_event = row[1] || row[2] || row[3];
    row[0] == !any_event
}
