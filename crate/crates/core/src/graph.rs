//! N-Triples ingestion into an interned, adjacency-indexed labeled graph.
//!
//! Only the line-oriented N-Triples subset is understood. Triples whose object
//! is a literal are counted but never enter the adjacency, so walks only ever
//! visit entities.

use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use flate2::read::MultiGzDecoder;
use indexmap::IndexSet;
use thiserror::Error;

pub type EntityId = u32;
pub type PredicateId = u32;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid entity id {0}")]
    InvalidEntity(EntityId),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Object position of a statement.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Object {
    Iri(String),
    /// Lexical form only; datatype and language tags are dropped.
    Literal(String),
}

/// A single parsed statement. Blank nodes are kept as IRIs with their `_:`
/// label.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Triple {
    pub subject: String,
    pub predicate: String,
    pub object: Object,
}

/// One outgoing edge in the adjacency.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Edge {
    pub predicate: PredicateId,
    pub object: EntityId,
}

/// Directed labeled multigraph with interned entities and predicates.
///
/// Immutable once built; adjacency lists keep the order in which edges first
/// appeared in the input.
#[derive(Clone, Debug)]
pub struct KnowledgeGraph {
    entities: IndexSet<String>,
    predicates: IndexSet<String>,
    offsets: Vec<usize>,
    adjacency: Vec<Edge>,
    statements: Vec<(EntityId, Edge)>,
    triple_count: usize,
    literal_count: usize,
}

impl PartialEq for KnowledgeGraph {
    /// Graphs are equal when their interning tables and adjacency agree.
    /// Literal statements are not part of the walkable graph.
    fn eq(&self, other: &Self) -> bool {
        self.entities.iter().eq(other.entities.iter())
            && self.predicates.iter().eq(other.predicates.iter())
            && self.offsets == other.offsets
            && self.adjacency == other.adjacency
    }
}

impl KnowledgeGraph {
    /// Parse N-Triples from a buffered reader.
    pub fn parse_ntriples<R: BufRead>(reader: R) -> Result<Self, GraphError> {
        let mut builder = GraphBuilder::default();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            let triple = parse_line(&line).map_err(|message| GraphError::Parse {
                line: idx + 1,
                message,
            })?;
            if let Some(triple) = triple {
                builder.push(triple);
            }
        }
        Ok(builder.build())
    }

    /// Parse an N-Triples file; a `.gz` suffix selects gzip decompression.
    pub fn from_path<P: AsRef<Path>>(path: P) -> Result<Self, GraphError> {
        let path = path.as_ref();
        let file = File::open(path)?;
        if path.extension().is_some_and(|ext| ext == "gz") {
            Self::parse_ntriples(BufReader::new(MultiGzDecoder::new(file)))
        } else {
            Self::parse_ntriples(BufReader::new(file))
        }
    }

    pub fn entity_count(&self) -> usize {
        self.entities.len()
    }

    pub fn predicate_count(&self) -> usize {
        self.predicates.len()
    }

    /// All statements read, literal-object ones included.
    pub fn triple_count(&self) -> usize {
        self.triple_count
    }

    pub fn literal_count(&self) -> usize {
        self.literal_count
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    pub fn entity(&self, id: EntityId) -> Option<&str> {
        self.entities.get_index(id as usize).map(String::as_str)
    }

    pub fn predicate(&self, id: PredicateId) -> Option<&str> {
        self.predicates.get_index(id as usize).map(String::as_str)
    }

    pub fn entity_id(&self, iri: &str) -> Option<EntityId> {
        self.entities.get_index_of(iri).map(|i| i as EntityId)
    }

    pub fn predicate_id(&self, iri: &str) -> Option<PredicateId> {
        self.predicates.get_index_of(iri).map(|i| i as PredicateId)
    }

    /// Outgoing edges of `entity`, possibly empty.
    pub fn out_edges(&self, entity: EntityId) -> Result<&[Edge], GraphError> {
        let idx = entity as usize;
        if idx >= self.entities.len() {
            return Err(GraphError::InvalidEntity(entity));
        }
        Ok(&self.adjacency[self.offsets[idx]..self.offsets[idx + 1]])
    }

    /// Out-degree without bounds checking beyond a panic on invalid IDs.
    pub(crate) fn edges_of(&self, entity: EntityId) -> &[Edge] {
        let idx = entity as usize;
        &self.adjacency[self.offsets[idx]..self.offsets[idx + 1]]
    }

    pub fn entities(&self) -> impl ExactSizeIterator<Item = EntityId> {
        0..self.entities.len() as EntityId
    }

    /// Write the walkable statements back out as N-Triples, in input order.
    pub fn write_ntriples<W: Write>(&self, mut writer: W) -> io::Result<()> {
        for (subject, edge) in &self.statements {
            writeln!(
                writer,
                "{} {} {} .",
                term(&self.entities[*subject as usize]),
                term(&self.predicates[edge.predicate as usize]),
                term(&self.entities[edge.object as usize]),
            )?;
        }
        Ok(())
    }
}

fn term(iri: &str) -> String {
    if iri.starts_with("_:") {
        iri.to_owned()
    } else {
        format!("<{iri}>")
    }
}

#[derive(Default)]
struct GraphBuilder {
    entities: IndexSet<String>,
    predicates: IndexSet<String>,
    statements: Vec<(EntityId, Edge)>,
    triple_count: usize,
    literal_count: usize,
}

impl GraphBuilder {
    fn push(&mut self, triple: Triple) {
        self.triple_count += 1;
        let object = match triple.object {
            Object::Iri(iri) => iri,
            Object::Literal(_) => {
                self.literal_count += 1;
                return;
            }
        };
        let subject = self.entities.insert_full(triple.subject).0 as EntityId;
        let predicate = self.predicates.insert_full(triple.predicate).0 as PredicateId;
        let object = self.entities.insert_full(object).0 as EntityId;
        self.statements.push((subject, Edge { predicate, object }));
    }

    fn build(self) -> KnowledgeGraph {
        let n = self.entities.len();
        let mut offsets = vec![0usize; n + 1];
        for (subject, _) in &self.statements {
            offsets[*subject as usize + 1] += 1;
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        let mut cursor = offsets.clone();
        let mut adjacency = vec![
            Edge {
                predicate: 0,
                object: 0
            };
            self.statements.len()
        ];
        for (subject, edge) in &self.statements {
            let slot = &mut cursor[*subject as usize];
            adjacency[*slot] = *edge;
            *slot += 1;
        }
        KnowledgeGraph {
            entities: self.entities,
            predicates: self.predicates,
            offsets,
            adjacency,
            statements: self.statements,
            triple_count: self.triple_count,
            literal_count: self.literal_count,
        }
    }
}

/// Parse one N-Triples line. Blank and comment lines yield `None`.
pub fn parse_line(line: &str) -> Result<Option<Triple>, String> {
    let mut cursor = Cursor {
        rest: line.trim_end(),
    };
    cursor.skip_ws();
    if cursor.rest.is_empty() || cursor.rest.starts_with('#') {
        return Ok(None);
    }

    let subject = match cursor.term()? {
        Object::Iri(iri) => iri,
        Object::Literal(_) => return Err("literal in subject position".into()),
    };
    let predicate = match cursor.term()? {
        Object::Iri(iri) if !iri.starts_with("_:") => iri,
        _ => return Err("predicate must be an IRI".into()),
    };
    let object = cursor.term()?;

    cursor.skip_ws();
    match cursor.rest.strip_prefix('.') {
        Some(rest) => {
            let rest = rest.trim_start();
            if !rest.is_empty() && !rest.starts_with('#') {
                return Err(format!("unexpected content after terminal '.': {rest}"));
            }
        }
        None if cursor.rest.is_empty() => return Err("missing terminal '.'".into()),
        None => return Err(format!("expected '.', found: {}", cursor.rest)),
    }

    Ok(Some(Triple {
        subject,
        predicate,
        object,
    }))
}

struct Cursor<'a> {
    rest: &'a str,
}

impl Cursor<'_> {
    fn skip_ws(&mut self) {
        self.rest = self.rest.trim_start_matches([' ', '\t']);
    }

    fn term(&mut self) -> Result<Object, String> {
        self.skip_ws();
        if let Some(rest) = self.rest.strip_prefix('<') {
            self.rest = rest;
            self.iri().map(Object::Iri)
        } else if self.rest.starts_with("_:") {
            let end = self
                .rest
                .find(|c: char| c.is_whitespace())
                .unwrap_or(self.rest.len());
            // A label cannot end in '.', so a trailing dot is the terminator.
            let label = self.rest[..end].trim_end_matches('.');
            if label.len() <= 2 {
                return Err("empty blank node label".into());
            }
            self.rest = &self.rest[label.len()..];
            Ok(Object::Iri(label.to_owned()))
        } else if let Some(rest) = self.rest.strip_prefix('"') {
            self.rest = rest;
            self.literal().map(Object::Literal)
        } else if self.rest.is_empty() {
            Err("missing term".into())
        } else if self.rest.contains('>') {
            Err("unbalanced angle brackets".into())
        } else {
            Err(format!("unexpected term: {}", self.rest))
        }
    }

    /// IRI body after the opening '<'.
    fn iri(&mut self) -> Result<String, String> {
        let end = self
            .rest
            .find(['>', '<'])
            .filter(|&i| self.rest.as_bytes()[i] == b'>')
            .ok_or_else(|| "unbalanced angle brackets".to_string())?;
        let iri = &self.rest[..end];
        if iri.chars().any(char::is_whitespace) {
            return Err(format!("whitespace in IRI <{iri}>"));
        }
        self.rest = &self.rest[end + 1..];
        Ok(iri.to_owned())
    }

    /// Literal body after the opening quote, including an optional language
    /// tag or datatype, both of which are discarded.
    fn literal(&mut self) -> Result<String, String> {
        let mut value = String::new();
        let mut chars = self.rest.char_indices();
        let end = loop {
            match chars.next() {
                Some((i, '"')) => break i,
                Some((_, '\\')) => match chars.next() {
                    Some((_, 't')) => value.push('\t'),
                    Some((_, 'n')) => value.push('\n'),
                    Some((_, 'r')) => value.push('\r'),
                    Some((_, 'b')) => value.push('\u{8}'),
                    Some((_, 'f')) => value.push('\u{c}'),
                    Some((_, c @ ('"' | '\'' | '\\'))) => value.push(c),
                    Some((_, c @ ('u' | 'U'))) => {
                        let len = if c == 'u' { 4 } else { 8 };
                        let hex: String = chars.by_ref().take(len).map(|(_, c)| c).collect();
                        let ch = u32::from_str_radix(&hex, 16)
                            .ok()
                            .filter(|_| hex.len() == len)
                            .and_then(char::from_u32)
                            .ok_or_else(|| format!("invalid escape \\{c}{hex}"))?;
                        value.push(ch);
                    }
                    _ => return Err("invalid escape in literal".into()),
                },
                Some((_, c)) => value.push(c),
                None => return Err("unterminated literal".into()),
            }
        };
        self.rest = &self.rest[end + 1..];

        if let Some(rest) = self.rest.strip_prefix('@') {
            let len = rest
                .find(|c: char| !(c.is_ascii_alphanumeric() || c == '-'))
                .unwrap_or(rest.len());
            if len == 0 {
                return Err("empty language tag".into());
            }
            self.rest = &rest[len..];
        } else if let Some(rest) = self.rest.strip_prefix("^^") {
            self.rest = rest;
            match self.term()? {
                Object::Iri(_) => {}
                Object::Literal(_) => return Err("datatype must be an IRI".into()),
            }
        }
        Ok(value)
    }
}
