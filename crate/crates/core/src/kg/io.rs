use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::kg::{Triple, Vocabulary};

/// Reads a tab-separated `head<TAB>relation<TAB>tail` file, one triple per
/// line, interning names into `vocab`. Blank lines are skipped.
pub fn load_triples(path: &Path, vocab: &mut Vocabulary) -> Result<Vec<Triple>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_triples(&text, path, vocab)
}

pub(crate) fn parse_triples(text: &str, path: &Path, vocab: &mut Vocabulary) -> Result<Vec<Triple>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 || fields.iter().any(|f| f.is_empty()) {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: format!("expected 3 tab-separated fields, found {}", fields.len()),
            });
        }
        let head = vocab.intern_entity(fields[0]);
        let relation = vocab.intern_relation(fields[1]);
        let tail = vocab.intern_entity(fields[2]);
        let wrap = |e: Error| match e {
            Error::Vocabulary(m) => Error::Vocabulary(format!("{}:{}: {m}", path.display(), i + 1)),
            other => other,
        };
        out.push(Triple {
            head: head.map_err(wrap)?,
            relation: relation.map_err(wrap)?,
            tail: tail.map_err(wrap)?,
        });
    }
    Ok(out)
}

/// One name per line; line number is the index.
pub fn write_names(path: &Path, names: &[String]) -> Result<()> {
    let mut text = String::new();
    for n in names {
        text.push_str(n);
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_names(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text.lines().map(|l| l.trim_end_matches('\r').to_string()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::{EntityId, RelationId};

    #[test]
    fn three_line_file() {
        let mut v = Vocabulary::new();
        let t = parse_triples("a\tr1\tb\nb\tr2\tc\na\tr1\td\n", Path::new("x"), &mut v).unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(v.num_entities(), 4);
        assert_eq!(v.num_original_relations(), 2);
        assert_eq!(t[2], Triple::new(0, 0, 3));
        assert_eq!(v.entity("d"), Some(EntityId(3)));
        assert_eq!(v.relation("r2"), Some(RelationId(1)));
    }

    #[test]
    fn malformed_line_names_its_number() {
        let mut v = Vocabulary::new();
        let err = parse_triples("a\tr\tb\n\na r b\n", Path::new("f.txt"), &mut v).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let err = parse_triples("a\tr\tb\tc\n", Path::new("f.txt"), &mut v).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn frozen_vocab_rejects_unseen_entities() {
        let mut v = Vocabulary::new();
        parse_triples("a\tr\tb\n", Path::new("train"), &mut v).unwrap();
        v.freeze();
        assert!(parse_triples("a\tr\tb\n", Path::new("test"), &mut v).is_ok());
        let err = parse_triples("a\tr\tq\n", Path::new("test"), &mut v).unwrap_err();
        assert!(matches!(err, Error::Vocabulary(_)));
    }
}
