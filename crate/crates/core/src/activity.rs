use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Target activity, both as scripted ground truth and as classifier output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activity {
    #[default]
    Absent,
    Standing,
    Walking,
    Waving,
}

impl Activity {
    pub const ALL: [Activity; 4] = [
        Activity::Absent,
        Activity::Standing,
        Activity::Walking,
        Activity::Waving,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Activity::Absent => "absent",
            Activity::Standing => "standing",
            Activity::Walking => "walking",
            Activity::Waving => "waving",
        }
    }
}

impl fmt::Display for Activity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Activity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Activity::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| format!("unknown activity `{s}`"))
    }
}
