//! Inbound wire messages. One JSON object per text frame, `"v": 1`.

use serde::Deserialize;
use thiserror::Error;

use crate::geometry::{Frame, Point2};
use crate::interaction::MenuChoice;

pub const PROTOCOL_VERSION: u32 = 1;

/// Reply sent for any frame that cannot be parsed into an [`InboundMsg`].
pub const BAD_MESSAGE_REPLY: &str = r#"{"type":"error","code":"bad_message"}"#;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Control {
    Pause,
    Resume,
    Reset,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InboundMsg {
    Gaze { t: f64, p: Point2, frame: Frame, valid: bool },
    Choice(MenuChoice),
    Control(Control),
}

impl InboundMsg {
    /// Gaze samples may be dropped under back-pressure; nothing else may.
    pub fn is_gaze(&self) -> bool {
        matches!(self, InboundMsg::Gaze { .. })
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("not a valid message: {0}")]
    Malformed(String),
    #[error("unsupported protocol version {0}")]
    Version(u32),
    #[error("gaze frame must be camera or interface")]
    Frame,
    #[error("non-finite gaze value")]
    NonFinite,
}

#[derive(Deserialize)]
#[serde(rename_all = "lowercase")]
enum WireFrame {
    Camera,
    Interface,
}

#[derive(Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum Wire {
    Gaze {
        v: u32,
        t: f64,
        x: Option<f64>,
        y: Option<f64>,
        frame: WireFrame,
        #[serde(default = "yes")]
        valid: bool,
    },
    Choice {
        v: u32,
        value: MenuChoice,
    },
    Control {
        v: u32,
        value: Control,
    },
}

fn yes() -> bool {
    true
}

pub fn parse_inbound(text: &str) -> Result<InboundMsg, ProtocolError> {
    let wire: Wire = serde_json::from_str(text).map_err(|e| ProtocolError::Malformed(e.to_string()))?;
    let v = match &wire {
        Wire::Gaze { v, .. } | Wire::Choice { v, .. } | Wire::Control { v, .. } => *v,
    };
    if v != PROTOCOL_VERSION {
        return Err(ProtocolError::Version(v));
    }
    Ok(match wire {
        Wire::Gaze { t, x, y, frame, valid, .. } => {
            let frame = match frame {
                WireFrame::Camera => Frame::Camera,
                WireFrame::Interface => Frame::Interface,
            };
            let p = match (x, y) {
                (Some(x), Some(y)) => Point2::new(x, y),
                _ if !valid => Point2::ORIGIN,
                _ => return Err(ProtocolError::Malformed("valid gaze needs x and y".into())),
            };
            if !t.is_finite() || (valid && !p.is_finite()) {
                return Err(ProtocolError::NonFinite);
            }
            InboundMsg::Gaze { t, p, frame, valid }
        }
        Wire::Choice { value, .. } => InboundMsg::Choice(value),
        Wire::Control { value, .. } => InboundMsg::Control(value),
    })
}
