use thiserror::Error;

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("port {0} is already in use")]
    PortInUse(u16),
    #[error("scene: {0}")]
    SceneLoad(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
