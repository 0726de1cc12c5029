//! Live streaming gateway: runs the sensing pipeline on an operator-steered
//! scene and serves range-Doppler thumbnails, tracks and states over WebSocket.

pub mod live;
pub mod protocol;
pub mod server;
pub mod thumbnail;

pub use live::{LiveScene, LiveSceneConfig, LiveSource};
pub use protocol::{
    ControlBounds, ControlMessage, FrameMessage, Metadata, SceneState, ServerMessage,
};
pub use server::{Gateway, GatewayError, GatewayOptions, PipelineReport};
