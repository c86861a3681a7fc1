//! Text notation for metapaths.
//!
//! A metapath is written as type symbols joined by `-`, e.g. `M-D-M`.
//! When two consecutive types are linked by more than one relation, the
//! relation is named in brackets between them: `U-[friend]-U-A`.

use crate::error::{Error, Result};
use crate::graph::{validate_metapath, Metapath, NodeTypeId, RelationId, Schema};

/// Splits on `-` outside brackets.
fn tokens(text: &str) -> Result<Vec<&str>> {
    let mut out = Vec::new();
    let mut depth = 0usize;
    let mut start = 0;
    for (i, c) in text.char_indices() {
        match c {
            '[' => depth += 1,
            ']' => {
                depth = depth
                    .checked_sub(1)
                    .ok_or_else(|| Error::Config(format!("unbalanced ']' in metapath {text:?}")))?;
            }
            '-' if depth == 0 => {
                out.push(text[start..i].trim());
                start = i + 1;
            }
            _ => {}
        }
    }
    if depth != 0 {
        return Err(Error::Config(format!("unclosed '[' in metapath {text:?}")));
    }
    out.push(text[start..].trim());
    Ok(out)
}

/// Parses `text` against `schema`, inferring relations between
/// consecutive types unless one is named explicitly.
pub fn parse_metapath(text: &str, schema: &Schema) -> Result<Metapath> {
    let mut types: Vec<NodeTypeId> = Vec::new();
    let mut relations: Vec<RelationId> = Vec::new();
    let mut pending: Option<RelationId> = None;
    for tok in tokens(text)? {
        if tok.is_empty() {
            return Err(Error::Config(format!("empty element in metapath {text:?}")));
        }
        if let Some(name) = tok.strip_prefix('[').and_then(|t| t.strip_suffix(']')) {
            if types.is_empty() || pending.is_some() {
                return Err(Error::Config(format!("relation [{name}] must sit between two types in {text:?}")));
            }
            let r = schema
                .relation_by_name(name)
                .ok_or_else(|| Error::Config(format!("unknown relation {name:?} in metapath {text:?}")))?;
            pending = Some(r);
            continue;
        }
        let t = schema
            .type_by_symbol(tok)
            .ok_or_else(|| Error::Config(format!("unknown type symbol {tok:?} in metapath {text:?}")))?;
        if let Some(&prev) = types.last() {
            let rel = match pending.take() {
                Some(r) => r,
                None => {
                    let between = schema.relations_between(prev, t);
                    match between.as_slice() {
                        [r] => *r,
                        [] => {
                            return Err(Error::Metapath {
                                step: types.len() - 1,
                                reason: format!(
                                    "no relation between {} and {}",
                                    schema.node_type(prev).symbol,
                                    schema.node_type(t).symbol
                                ),
                            })
                        }
                        many => {
                            let names: Vec<&str> = many.iter().map(|r| schema.relation(*r).name.as_str()).collect();
                            return Err(Error::Config(format!(
                                "ambiguous relation between {} and {}: name one of {names:?} in brackets",
                                schema.node_type(prev).symbol,
                                schema.node_type(t).symbol
                            )));
                        }
                    }
                }
            };
            relations.push(rel);
        } else if pending.is_some() {
            unreachable!("a relation before the first type is rejected above");
        }
        types.push(t);
    }
    if pending.is_some() {
        return Err(Error::Config(format!("metapath {text:?} ends with a relation")));
    }
    validate_metapath(schema, &Metapath::new(types, relations))
}

/// Writes `path` in the notation [`parse_metapath`] reads, naming a
/// relation only where the pair of types alone is ambiguous.
pub fn format_metapath(path: &Metapath, schema: &Schema) -> String {
    let mut s = String::new();
    for (i, t) in path.types().iter().enumerate() {
        if i > 0 {
            let prev = path.types()[i - 1];
            let r = path.relations()[i - 1];
            s.push('-');
            if schema.relations_between(prev, *t).len() > 1 {
                s.push('[');
                s.push_str(&schema.relation(r).name);
                s.push_str("]-");
            }
        }
        s.push_str(&schema.node_type(*t).symbol);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dblp() -> Schema {
        Schema::from_symbols(
            &[("author", "A"), ("paper", "P"), ("term", "T"), ("venue", "V")],
            &[("A", "P"), ("P", "T"), ("P", "V")],
        )
        .unwrap()
    }

    fn imdb() -> Schema {
        Schema::from_symbols(&[("movie", "M"), ("director", "D"), ("actor", "A")], &[("M", "D"), ("M", "A")]).unwrap()
    }

    #[test]
    fn four_step_symmetric_path() {
        let s = dblp();
        let p = parse_metapath("A-P-V-P-A", &s).unwrap();
        assert_eq!(p.len(), 4);
        assert!(p.is_symmetric());
        assert_eq!(p.relations(), &[RelationId(0), RelationId(2), RelationId(2), RelationId(0)]);
        assert_eq!(format_metapath(&p, &s), "A-P-V-P-A");
    }

    #[test]
    fn self_relation_path() {
        let s = Schema::from_symbols(&[("user", "U"), ("artist", "A")], &[("U", "A"), ("U", "U")]).unwrap();
        let p = parse_metapath("U-U", &s).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p.relations(), &[RelationId(1)]);
    }

    #[test]
    fn unrelated_types_are_rejected() {
        let err = parse_metapath("M-V", &imdb()).unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err}");
        let err = parse_metapath("M-A-D", &imdb()).unwrap_err();
        assert!(matches!(err, Error::Metapath { step: 1, .. }), "{err}");
    }

    #[test]
    fn malformed_text() {
        let s = imdb();
        for bad in ["", "M", "M--D", "M-[M-D", "M-[M-D]", "[M-D]-D", "M-[nope]-D", "M-D]"] {
            assert!(parse_metapath(bad, &s).is_err(), "{bad:?}");
        }
    }

    #[test]
    fn ambiguous_pairs_need_a_name() {
        let s = Schema::new(
            vec![
                crate::graph::NodeTypeDecl {
                    name: "user".into(),
                    symbol: "U".into(),
                },
                crate::graph::NodeTypeDecl {
                    name: "artist".into(),
                    symbol: "A".into(),
                },
            ],
            vec![
                crate::graph::RelationDecl {
                    name: "listens".into(),
                    source: NodeTypeId(0),
                    target: NodeTypeId(1),
                },
                crate::graph::RelationDecl {
                    name: "tags".into(),
                    source: NodeTypeId(0),
                    target: NodeTypeId(1),
                },
            ],
        )
        .unwrap();
        assert!(parse_metapath("U-A-U", &s).is_err());
        let p = parse_metapath("U-[tags]-A-[listens]-U", &s).unwrap();
        assert_eq!(p.relations(), &[RelationId(1), RelationId(0)]);
        let text = format_metapath(&p, &s);
        assert_eq!(text, "U-[tags]-A-[listens]-U");
        assert_eq!(parse_metapath(&text, &s).unwrap(), p);
        // bracketed names may contain dashes
        let i = imdb();
        let p = parse_metapath("M-[M-D]-D-M", &i).unwrap();
        assert_eq!(p, parse_metapath("M-D-M", &i).unwrap());
    }
}
