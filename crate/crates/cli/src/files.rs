//! Input files: operators, states, conditions, posets and qr-number
//! expression trees. Paths inside a file resolve against that file's
//! directory.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::Value;

use qrlab::logic::{AbstractPosetFile, BasisPoset, PosetFile};
use qrlab::operator::{HermitianOperator, OperatorJson};
use qrlab::qr::{Expr, QrNumber, RealFunction};
use qrlab::state::{Condition, DensityState};
use qrlab::QrError;

#[derive(Debug)]
pub enum InputError {
    Io { path: PathBuf, message: String },
    Parse { path: PathBuf, line: usize, column: usize, message: String },
    Invalid { path: PathBuf, error: QrError },
}

impl fmt::Display for InputError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InputError::Io { path, message } => write!(f, "{}: {message}", path.display()),
            InputError::Parse {
                path,
                line,
                column,
                message,
            } => write!(f, "{}:{line}:{column}: {message}", path.display()),
            InputError::Invalid { path, error } => write!(f, "{}: {error}", path.display()),
        }
    }
}

/// A parsed input file with its raw JSON, kept for the report echo.
pub struct Loaded<T> {
    pub value: T,
    pub echo: Value,
}

fn read(path: &Path) -> Result<String, InputError> {
    std::fs::read_to_string(path).map_err(|e| InputError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn parse<T: DeserializeOwned>(path: &Path, text: &str) -> Result<T, InputError> {
    serde_json::from_str(text).map_err(|e| InputError::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

fn invalid(path: &Path) -> impl Fn(QrError) -> InputError + '_ {
    move |error| InputError::Invalid {
        path: path.to_path_buf(),
        error,
    }
}

fn echo(path: &Path, text: &str) -> Value {
    serde_json::json!({
        "path": path.display().to_string(),
        "content": serde_json::from_str::<Value>(text).unwrap_or(Value::Null),
    })
}

fn load_with<T, R: DeserializeOwned>(
    path: &Path,
    build: impl FnOnce(R) -> qrlab::Result<T>,
) -> Result<Loaded<T>, InputError> {
    let text = read(path)?;
    let raw: R = parse(path, &text)?;
    Ok(Loaded {
        value: build(raw).map_err(invalid(path))?,
        echo: echo(path, &text),
    })
}

pub fn operator(path: &Path) -> Result<Loaded<HermitianOperator>, InputError> {
    load_with(path, |j: OperatorJson| j.to_hermitian())
}

pub fn state(path: &Path) -> Result<Loaded<DensityState>, InputError> {
    load_with(path, |j: OperatorJson| DensityState::from_json(&j))
}

pub fn condition(path: &Path) -> Result<Loaded<Condition>, InputError> {
    load_with(path, Ok)
}

pub fn basis_poset(path: &Path) -> Result<Loaded<BasisPoset>, InputError> {
    load_with(path, |f: PosetFile| f.build())
}

/// Either kind of poset file accepted by `logic`.
pub enum AnyPoset {
    Abstract(qrlab::logic::Poset),
    Balls(BasisPoset),
}

impl AnyPoset {
    pub fn poset(&self) -> std::sync::Arc<qrlab::logic::Poset> {
        match self {
            AnyPoset::Abstract(p) => std::sync::Arc::new(p.clone()),
            AnyPoset::Balls(b) => std::sync::Arc::clone(b.poset()),
        }
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum PosetEither {
    Abstract(AbstractPosetFile),
    Balls(PosetFile),
}

pub fn any_poset(path: &Path) -> Result<Loaded<AnyPoset>, InputError> {
    load_with(path, |f: PosetEither| match f {
        PosetEither::Abstract(a) => a.build().map(AnyPoset::Abstract),
        PosetEither::Balls(b) => b.build().map(AnyPoset::Balls),
    })
}

/// Operator leaf: a path to an operator file or an inline operator.
#[derive(Deserialize)]
#[serde(untagged)]
enum OperatorRef {
    Path(String),
    Inline(OperatorJson),
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ConditionRef {
    Path(String),
    Inline(Condition),
}

#[derive(Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
enum ExprFile {
    Linear(OperatorRef),
    Constant(f64),
    Add(Box<ExprFile>, Box<ExprFile>),
    Sub(Box<ExprFile>, Box<ExprFile>),
    Mul(Box<ExprFile>, Box<ExprFile>),
    Scale(f64, Box<ExprFile>),
    Apply(RealFunction, Box<ExprFile>),
}

/// `{"extent": <condition or path>, "expr": <tree>}`; leaves are
/// `{"linear": <operator or path>}` or `{"constant": c}`, inner nodes
/// `{"add": [x, y]}`, `{"sub": ..}`, `{"mul": ..}`, `{"scale": [c, x]}` and
/// `{"apply": [f, x]}` with `f` one of `"abs"`, `"sqrt_pos"`, `"exp"`,
/// `"sin"`, `"cos"` or `{"polynomial": [c0, c1, ..]}`.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct QrFile {
    extent: ConditionRef,
    expr: ExprFile,
}

fn resolve(base: &Path, rel: &str) -> PathBuf {
    let p = Path::new(rel);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.parent().unwrap_or(Path::new(".")).join(p)
    }
}

fn build_expr(base: &Path, e: ExprFile) -> Result<Expr, InputError> {
    let sub = |x: Box<ExprFile>| build_expr(base, *x).map(Box::new);
    Ok(match e {
        ExprFile::Linear(OperatorRef::Path(p)) => Expr::Linear(operator(&resolve(base, &p))?.value),
        ExprFile::Linear(OperatorRef::Inline(j)) => Expr::Linear(j.to_hermitian().map_err(invalid(base))?),
        ExprFile::Constant(c) => Expr::Constant(c),
        ExprFile::Add(x, y) => Expr::Add(sub(x)?, sub(y)?),
        ExprFile::Sub(x, y) => Expr::Sub(sub(x)?, sub(y)?),
        ExprFile::Mul(x, y) => Expr::Mul(sub(x)?, sub(y)?),
        ExprFile::Scale(c, x) => Expr::Scale(c, sub(x)?),
        ExprFile::Apply(f, x) => Expr::Apply(f, sub(x)?),
    })
}

pub fn qr_number(path: &Path) -> Result<Loaded<QrNumber>, InputError> {
    let text = read(path)?;
    let raw: QrFile = parse(path, &text)?;
    let extent = match raw.extent {
        ConditionRef::Path(p) => condition(&resolve(path, &p))?.value,
        ConditionRef::Inline(c) => c,
    };
    let expr = build_expr(path, raw.expr)?;
    Ok(Loaded {
        value: QrNumber::new(expr, extent).map_err(invalid(path))?,
        echo: echo(path, &text),
    })
}
