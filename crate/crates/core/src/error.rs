use thiserror::Error;

/// A configuration value that breaks a documented invariant.
///
/// `field` is the dotted path of the offending key as it appears in a
/// scenario file (for example `traffic.k_m_p`).
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{field}: {reason}")]
pub struct InvalidParam {
    pub field: String,
    pub reason: String,
}

impl InvalidParam {
    pub fn new(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// Prefix the field path, used when a sub-config is validated inside a larger one.
    pub fn nested(mut self, prefix: &str) -> Self {
        self.field = format!("{prefix}.{}", self.field);
        self
    }
}

pub(crate) fn ensure(
    cond: bool,
    field: &str,
    reason: impl Into<String>,
) -> Result<(), InvalidParam> {
    if cond {
        Ok(())
    } else {
        Err(InvalidParam::new(field, reason))
    }
}
