use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum Error {
    /// Bootstrap left an agent with no peers at all.
    #[error("isolated agent {0}")]
    IsolatedAgent(crate::envelope::AgentId),
    /// Shuffle attempted on an empty view.
    #[error("nothing to shuffle")]
    NothingToShuffle,
    /// An envelope's value variant does not match the key's merge policy.
    #[error("type confusion for key {key:?}")]
    TypeConfusion { key: String },
}

pub type Result<T> = std::result::Result<T, Error>;
