use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DiagCode {
    UnlinkedPad,
    UnresolvedSpec,
    IllegalCycle,
    IncompatibleSpecs,
    RepoBinding,
}

impl DiagCode {
    pub fn as_str(self) -> &'static str {
        match self {
            DiagCode::UnlinkedPad => "UnlinkedPad",
            DiagCode::UnresolvedSpec => "UnresolvedSpec",
            DiagCode::IllegalCycle => "IllegalCycle",
            DiagCode::IncompatibleSpecs => "IncompatibleSpecs",
            DiagCode::RepoBinding => "RepoBinding",
        }
    }
}

impl fmt::Display for DiagCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One validation finding.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Diagnostic {
    pub code: DiagCode,
    pub element: String,
    pub pad: Option<String>,
    pub message: String,
}

impl Diagnostic {
    pub fn new(code: DiagCode, element: &str, pad: Option<&str>, message: String) -> Self {
        Diagnostic {
            code,
            element: element.to_string(),
            pad: pad.map(str::to_string),
            message,
        }
    }
}

impl fmt::Display for Diagnostic {
    /// `code element[.pad]: message`
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.code, self.element)?;
        if let Some(p) = &self.pad {
            write!(f, ".{p}")?;
        }
        write!(f, ": {}", self.message)
    }
}
