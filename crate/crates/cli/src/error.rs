//! Error categories reported by the executable. Each maps to an exit code
//! and is printed as a single `error: category=... message=...` line.

use std::fmt;
use std::process::ExitCode;

use fakesent::checkpoint::CheckpointError;
use fakesent::classifier::TrainError;
use fakesent::corpus::CorpusError;
use fakesent::encoder::EncoderError;
use fakesent::fakegen::FakeGenError;
use fakesent::model::ModelError;
use fakesent::numcore::NumError;
use fakesent::probe::ProbeError;

use crate::config::ConfigError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Category {
    Usage,
    Data,
    Numerical,
}

impl Category {
    pub fn exit_code(self) -> u8 {
        match self {
            Category::Usage => 2,
            Category::Data => 3,
            Category::Numerical => 4,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Category::Usage => "UsageError",
            Category::Data => "DataError",
            Category::Numerical => "NumericalError",
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub category: Category,
    pub message: String,
}

impl CliError {
    pub fn new(category: Category, message: impl fmt::Display) -> Self {
        CliError { category, message: message.to_string() }
    }

    pub fn usage(message: impl fmt::Display) -> Self {
        CliError::new(Category::Usage, message)
    }

    pub fn data(message: impl fmt::Display) -> Self {
        CliError::new(Category::Data, message)
    }

    pub fn numerical(message: impl fmt::Display) -> Self {
        CliError::new(Category::Numerical, message)
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(self.category.exit_code())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // keep it on one line so scripts can grep it
        let msg = self.message.split_whitespace().collect::<Vec<_>>().join(" ");
        write!(f, "error: category={} message={msg}", self.category.name())
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::usage(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::data(e)
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        CliError::data(e)
    }
}

impl From<FakeGenError> for CliError {
    fn from(e: FakeGenError) -> Self {
        CliError::data(e)
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        CliError::data(e)
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Num(_) | ModelError::Encoder(EncoderError::Num(_)) => CliError::numerical(e),
            other => CliError::data(other),
        }
    }
}

impl From<NumError> for CliError {
    fn from(e: NumError) -> Self {
        CliError::numerical(e)
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::InvalidConfig(_) => CliError::usage(e),
            TrainError::DivergedTraining { .. } => CliError::numerical(e),
            TrainError::Model(m) => m.into(),
            other => CliError::data(other),
        }
    }
}

impl From<ProbeError> for CliError {
    fn from(e: ProbeError) -> Self {
        match e {
            ProbeError::InvalidConfig(_) => CliError::usage(e),
            ProbeError::Model(m) => m.into(),
            other => CliError::data(other),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn categories_and_codes() {
        let diverged = TrainError::DivergedTraining { epoch: 2, source: NumError::NonFiniteValue { op: "tanh" } };
        assert_eq!(CliError::from(diverged).category, Category::Numerical);
        assert_eq!(CliError::from(TrainError::InvalidConfig("x".into())).category, Category::Usage);
        assert_eq!(CliError::from(TrainError::SingleClassData).category, Category::Data);
        assert_eq!(CliError::from(CorpusError::EmptyCorpus).category, Category::Data);
        assert_eq!(Category::Usage.exit_code(), 2);
        assert_eq!(Category::Data.exit_code(), 3);
        assert_eq!(Category::Numerical.exit_code(), 4);
    }

    #[test]
    fn message_is_one_line() {
        let e = CliError::data("bad\nfile  here");
        assert_eq!(e.to_string(), "error: category=DataError message=bad file here");
    }
}
