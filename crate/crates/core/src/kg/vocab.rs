use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::kg::{read_names, write_names, EntityId, RelationId};

/// Suffix naming the inverse of an original relation.
pub const INVERSE_SUFFIX: &str = "_inv";

pub const ENTITIES_FILE: &str = "entities.txt";
pub const RELATIONS_FILE: &str = "relations.txt";

/// Dense 0-based name tables, assigned in first-seen order.
///
/// Relation ids `0..n` are the originals; `n..2n` are their inverses. Once
/// frozen, unknown names are rejected instead of being added.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Vocabulary {
    entities: Vec<String>,
    entity_index: HashMap<String, u32>,
    relations: Vec<String>,
    relation_index: HashMap<String, u32>,
    frozen: bool,
}

impl Vocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn num_original_relations(&self) -> usize {
        self.relations.len()
    }

    /// Relation count after inverse augmentation.
    pub fn num_relations(&self) -> usize {
        2 * self.relations.len()
    }

    pub fn entity(&self, name: &str) -> Option<EntityId> {
        self.entity_index.get(name).copied().map(EntityId)
    }

    /// Looks up an original relation or an `<name>_inv` inverse.
    pub fn relation(&self, name: &str) -> Option<RelationId> {
        if let Some(&r) = self.relation_index.get(name) {
            return Some(RelationId(r));
        }
        let base = name.strip_suffix(INVERSE_SUFFIX)?;
        let r = *self.relation_index.get(base)?;
        Some(RelationId(r + self.relations.len() as u32))
    }

    pub fn entity_name(&self, id: EntityId) -> Option<&str> {
        self.entities.get(id.index()).map(String::as_str)
    }

    pub fn relation_name(&self, id: RelationId) -> Option<String> {
        let n = self.relations.len();
        let i = id.index();
        if i < n {
            Some(self.relations[i].clone())
        } else if i < 2 * n {
            Some(format!("{}{INVERSE_SUFFIX}", self.relations[i - n]))
        } else {
            None
        }
    }

    pub fn entity_names(&self) -> &[String] {
        &self.entities
    }

    /// All relation names, originals then inverses.
    pub fn relation_names(&self) -> Vec<String> {
        (0..self.num_relations() as u32)
            .map(|r| self.relation_name(RelationId(r)).expect("in range"))
            .collect()
    }

    pub fn intern_entity(&mut self, name: &str) -> Result<EntityId> {
        if let Some(&id) = self.entity_index.get(name) {
            return Ok(EntityId(id));
        }
        if self.frozen {
            return Err(Error::Vocabulary(format!("unknown entity {name:?}")));
        }
        let id = self.entities.len() as u32;
        self.entities.push(name.to_string());
        self.entity_index.insert(name.to_string(), id);
        Ok(EntityId(id))
    }

    /// Interns an original relation. Inverses are never interned by name.
    pub fn intern_relation(&mut self, name: &str) -> Result<RelationId> {
        if let Some(&id) = self.relation_index.get(name) {
            return Ok(RelationId(id));
        }
        if self.frozen {
            return Err(Error::Vocabulary(format!("unknown relation {name:?}")));
        }
        let id = self.relations.len() as u32;
        self.relations.push(name.to_string());
        self.relation_index.insert(name.to_string(), id);
        Ok(RelationId(id))
    }

    /// Rebuilds a frozen vocabulary from name lists; `relations` holds the
    /// augmented list (originals, then one inverse per original).
    pub fn from_names(entities: Vec<String>, relations: Vec<String>) -> Result<Self> {
        if relations.len() % 2 != 0 {
            return Err(Error::Vocabulary(format!(
                "augmented relation list has odd length {}",
                relations.len()
            )));
        }
        let n = relations.len() / 2;
        let mut vocab = Vocabulary::new();
        for e in &entities {
            vocab.intern_entity(e)?;
        }
        for r in &relations[..n] {
            vocab.intern_relation(r)?;
        }
        if vocab.num_entities() != entities.len() || vocab.num_original_relations() != n {
            return Err(Error::Vocabulary("duplicate names in vocabulary file".into()));
        }
        for (i, name) in relations[n..].iter().enumerate() {
            let expected = format!("{}{INVERSE_SUFFIX}", relations[i]);
            if *name != expected {
                return Err(Error::Vocabulary(format!(
                    "relation line {} is {name:?}, expected {expected:?}",
                    n + i + 1
                )));
            }
        }
        vocab.freeze();
        Ok(vocab)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        write_names(&dir.join(ENTITIES_FILE), &self.entities)?;
        write_names(&dir.join(RELATIONS_FILE), &self.relation_names())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let entities = read_names(&dir.join(ENTITIES_FILE))?;
        let relations = read_names(&dir.join(RELATIONS_FILE))?;
        Self::from_names(entities, relations)
    }
}
