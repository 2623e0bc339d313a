//! word2vec-style text export and import of input embeddings.
//!
//! ```text
//! V D
//! token x_1 x_2 ... x_D
//! ```
//!
//! Single spaces, `\n` terminators, six decimals per component.

use std::collections::HashMap;
use std::io::{self, BufRead, Write};

use thiserror::Error;

use crate::model::EmbeddingModel;
use crate::vocab::Vocabulary;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("cannot export token {0:?}: tokens must not contain whitespace")]
    Token(String),
    #[error("model has {model} rows but the vocabulary has {vocab} tokens")]
    SizeMismatch { model: usize, vocab: usize },
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

fn format_err(line: usize, message: impl Into<String>) -> StoreError {
    StoreError::Format {
        line,
        message: message.into(),
    }
}

/// Export the input matrix, one record per vocabulary ID. Returns the number
/// of records written.
pub fn export_text<W: Write>(
    model: &EmbeddingModel<f32>,
    vocab: &Vocabulary,
    mut sink: W,
) -> Result<usize, StoreError> {
    if model.vocab_size() != vocab.len() {
        return Err(StoreError::SizeMismatch {
            model: model.vocab_size(),
            vocab: vocab.len(),
        });
    }
    if let Some(bad) = vocab.tokens().iter().find(|t| !valid_token(t)) {
        return Err(StoreError::Token(bad.clone()));
    }
    let rows = vocab
        .tokens()
        .iter()
        .enumerate()
        .map(|(id, t)| (t.as_str(), model.embedding(id as u32)));
    write_records(rows, vocab.len(), model.dimension(), &mut sink)?;
    Ok(vocab.len())
}

fn valid_token(token: &str) -> bool {
    !token.is_empty() && !token.chars().any(char::is_whitespace)
}

fn write_records<'a, I, W>(rows: I, count: usize, dim: usize, sink: &mut W) -> io::Result<()>
where
    I: Iterator<Item = (&'a str, &'a [f32])>,
    W: Write,
{
    writeln!(sink, "{count} {dim}")?;
    for (token, vector) in rows {
        sink.write_all(token.as_bytes())?;
        for x in vector {
            write!(sink, " {x:.6}")?;
        }
        sink.write_all(b"\n")?;
    }
    sink.flush()
}

/// Token vectors in file order.
#[derive(Clone, Debug, PartialEq)]
pub struct Embeddings {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    dim: usize,
    data: Vec<f32>,
}

impl Embeddings {
    pub fn new(tokens: Vec<String>, dim: usize, data: Vec<f32>) -> Result<Self, StoreError> {
        if data.len() != tokens.len() * dim {
            return Err(format_err(0, "vector data does not match token count"));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(format_err(i + 2, format!("duplicate token {t:?}")));
            }
        }
        Ok(Embeddings {
            tokens,
            index,
            dim,
            data,
        })
    }

    /// Input vectors of a trained model.
    pub fn from_model(model: &EmbeddingModel<f32>, vocab: &Vocabulary) -> Result<Self, StoreError> {
        if model.vocab_size() != vocab.len() {
            return Err(StoreError::SizeMismatch {
                model: model.vocab_size(),
                vocab: vocab.len(),
            });
        }
        Self::new(
            vocab.tokens().to_vec(),
            model.dimension(),
            model.input().as_slice().to_vec(),
        )
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.dim
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn vector(&self, idx: usize) -> &[f32] {
        &self.data[idx * self.dim..(idx + 1) * self.dim]
    }

    pub fn get(&self, token: &str) -> Option<&[f32]> {
        self.index_of(token).map(|i| self.vector(i))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f32])> {
        self.tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.as_str(), self.vector(i)))
    }

    pub fn write_text<W: Write>(&self, mut sink: W) -> Result<usize, StoreError> {
        if let Some(bad) = self.tokens.iter().find(|t| !valid_token(t)) {
            return Err(StoreError::Token(bad.clone()));
        }
        write_records(self.iter(), self.len(), self.dim, &mut sink)?;
        Ok(self.len())
    }
}

/// Read an exported embedding file, validating the header against the body.
pub fn import_text<R: BufRead>(source: R) -> Result<Embeddings, StoreError> {
    let mut lines = source.lines();
    let header = match lines.next() {
        Some(line) => line?,
        None => return Err(format_err(1, "missing header")),
    };
    let mut fields = header.split(' ');
    let (count, dim) = match (fields.next(), fields.next(), fields.next()) {
        (Some(v), Some(d), None) => (
            v.parse::<usize>()
                .map_err(|_| format_err(1, format!("invalid vocabulary size {v:?}")))?,
            d.parse::<usize>()
                .map_err(|_| format_err(1, format!("invalid dimension {d:?}")))?,
        ),
        _ => return Err(format_err(1, "header must be `<count> <dimension>`")),
    };
    if dim == 0 {
        return Err(format_err(1, "dimension must be positive"));
    }

    let mut tokens = Vec::with_capacity(count);
    let mut index = HashMap::with_capacity(count);
    let mut data = Vec::with_capacity(count * dim);
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let line = line?;
        if line.is_empty() {
            return Err(format_err(lineno, "empty record"));
        }
        if tokens.len() == count {
            return Err(format_err(
                lineno,
                format!("more records than the header's {count}"),
            ));
        }
        let mut fields = line.split(' ');
        let token = fields.next().unwrap_or_default();
        let before = data.len();
        for field in fields {
            let x: f32 = field
                .parse()
                .map_err(|_| format_err(lineno, format!("non-numeric field {field:?}")))?;
            data.push(x);
        }
        let found = data.len() - before;
        if found != dim {
            return Err(format_err(
                lineno,
                format!("expected {dim} components, found {found}"),
            ));
        }
        if index.insert(token.to_owned(), tokens.len()).is_some() {
            return Err(format_err(lineno, format!("duplicate token {token:?}")));
        }
        tokens.push(token.to_owned());
    }
    if tokens.len() != count {
        return Err(format_err(
            tokens.len() + 2,
            format!("header declares {count} records, found {}", tokens.len()),
        ));
    }
    Ok(Embeddings {
        tokens,
        index,
        dim,
        data,
    })
}
