//! String identifiers for the entities of a model.

use std::borrow::Borrow;
use std::fmt;

use serde::{Deserialize, Serialize};

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(s: impl Into<String>) -> Self {
                Self(s.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                Self(s)
            }
        }

        impl Borrow<str> for $name {
            fn borrow(&self) -> &str {
                &self.0
            }
        }
    };
}

string_id!(
    /// State of a diagram. Unique within its diagram only.
    StateId
);
string_id!(
    /// Arc of a diagram. Unique across a whole model.
    ArcId
);
string_id!(
    /// Hierarchical identifier of a diagram.
    DiagramId
);
string_id!(
    /// Control symbol feeding a forward arc.
    SymbolId
);
string_id!(ScenarioId);
string_id!(RuleId);
string_id!(PropositionId);
string_id!(
    /// Node of an objectives tree.
    NodeId
);

/// Discrete time.
pub type Tick = u32;

/// Index of a simulated object within its diagram's population.
pub type ObjectId = u32;
