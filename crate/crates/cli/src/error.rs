use qconnect_core::QError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(String),
    #[error(transparent)]
    Core(#[from] QError),
}

impl CliError {
    /// 2 for input and validation problems, 3 for numerical failures, 4 for geometry.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Parse(_) | CliError::Io(_) => 2,
            CliError::Core(e) => match e {
                QError::InvalidParameter(_) | QError::NotFuchsian(_) | QError::IdenticallySingular => 2,
                QError::SpiralCollision(_) | QError::OnCut { .. } => 4,
                _ => 3,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Parse("x".into()).exit_code(), 2);
        assert_eq!(CliError::from(QError::NotConverged { estimate: 1.0, tol: 0.1 }).exit_code(), 3);
        assert_eq!(CliError::from(QError::Resonant("x".into())).exit_code(), 3);
        assert_eq!(CliError::from(QError::SpiralCollision("x".into())).exit_code(), 4);
    }
}
