use std::fmt;
use std::process::ExitCode;

/// Marks an error as caused by the caller's inputs (missing file, wrong
/// format version, malformed record) rather than by this program.
#[derive(Debug)]
pub struct InputError(pub String);

impl fmt::Display for InputError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}

pub trait InputContext<T> {
    /// Wraps the error with `what` and classifies it as an input error.
    fn input(self, what: impl FnOnce() -> String) -> anyhow::Result<T>;
}

impl<T, E> InputContext<T> for Result<T, E>
where
    E: Into<anyhow::Error>,
{
    fn input(self, what: impl FnOnce() -> String) -> anyhow::Result<T> {
        self.map_err(|e| e.into().context(InputError(what())))
    }
}

pub fn input_error(message: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(InputError(message.into()))
}

pub const EXIT_INPUT: u8 = 1;
pub const EXIT_INTERNAL: u8 = 2;
pub const EXIT_USAGE: u8 = 64;

pub fn exit_code(err: &anyhow::Error) -> ExitCode {
    if err.chain().any(|c| c.is::<InputError>()) || err.downcast_ref::<InputError>().is_some() {
        ExitCode::from(EXIT_INPUT)
    } else {
        ExitCode::from(EXIT_INTERNAL)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use anyhow::Context;

    #[test]
    fn classification_survives_extra_context() {
        let e: anyhow::Result<()> = Err(std::io::Error::other("boom")).input(|| "reading x".into());
        let e = e.context("outer").unwrap_err();
        assert_eq!(exit_code(&e), ExitCode::from(EXIT_INPUT));
        assert!(format!("{e:#}").contains("reading x: boom"));

        let internal = anyhow::anyhow!("bug");
        assert_eq!(exit_code(&internal), ExitCode::from(EXIT_INTERNAL));
    }
}
