use std::path::Path;

use crate::error::Result;
use crate::kg::{load_triples, KnowledgeGraph, Triple, Vocabulary};

pub const TRAIN_FILE: &str = "train.txt";
pub const VALID_FILE: &str = "valid.txt";
pub const TEST_FILE: &str = "test.txt";

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        })
    }
}

impl std::str::FromStr for Split {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "valid" | "dev" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            other => Err(crate::Error::InvalidArgument(format!("unknown split {other:?}"))),
        }
    }
}

/// A loaded benchmark: frozen vocabulary, the three splits in original
/// direction, and the graph indexed over the training split.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub vocab: Vocabulary,
    pub train: Vec<Triple>,
    pub valid: Vec<Triple>,
    pub test: Vec<Triple>,
    pub graph: KnowledgeGraph,
}

impl Dataset {
    /// Loads `train.txt`, `valid.txt` and `test.txt` from `dir`. The
    /// vocabulary is frozen after the training split; missing valid/test
    /// files count as empty.
    pub fn load(dir: &Path) -> Result<Self> {
        let mut vocab = Vocabulary::new();
        let train = load_triples(&dir.join(TRAIN_FILE), &mut vocab)?;
        vocab.freeze();
        let mut optional = |name: &str| -> Result<Vec<Triple>> {
            let p = dir.join(name);
            if p.exists() {
                load_triples(&p, &mut vocab)
            } else {
                Ok(Vec::new())
            }
        };
        let valid = optional(VALID_FILE)?;
        let test = optional(TEST_FILE)?;
        Self::from_parts(vocab, train, valid, test)
    }

    pub fn from_parts(mut vocab: Vocabulary, train: Vec<Triple>, valid: Vec<Triple>, test: Vec<Triple>) -> Result<Self> {
        vocab.freeze();
        let graph = KnowledgeGraph::from_splits(&vocab, &train, &valid, &test)?;
        Ok(Dataset {
            vocab,
            train,
            valid,
            test,
            graph,
        })
    }

    pub fn split(&self, split: Split) -> &[Triple] {
        match split {
            Split::Train => &self.train,
            Split::Valid => &self.valid,
            Split::Test => &self.test,
        }
    }
}
