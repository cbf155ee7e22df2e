//! The HTTP contract between the controller and a running plugin.
//!
//! A plugin serves plain HTTP/JSON on its sandbox port:
//!
//! | route          | body            | reply            |
//! |----------------|-----------------|------------------|
//! | `GET /health`  | –               | [`HealthReply`]  |
//! | `POST /train`  | [`PhaseRequest`]| [`PhaseReply`]   |
//! | `POST /test`   | [`PhaseRequest`]| [`PhaseReply`]   |
//! | `POST /run`    | [`PhaseRequest`]| [`PhaseReply`]   |
//! | `POST /clear`  | [`PhaseRequest`]| [`PhaseReply`]   |
//!
//! Calls are synchronous: the reply arrives when the phase is done.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

/// Version of the contract described here.
pub const CONTRACT_VERSION: u32 = 1;

/// Port a plugin listens on inside its sandbox.
pub const SANDBOX_PORT: u16 = 8000;

/// Environment variable carrying the port the plugin must bind. Container
/// sandboxes always set it to [`SANDBOX_PORT`]; process sandboxes share the
/// host network and receive the allocated host port instead.
pub const PORT_ENV: &str = "SERVO_PLUGIN_PORT";

/// Environment variable carrying the address the plugin should bind.
pub const HOST_ENV: &str = "SERVO_PLUGIN_HOST";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Train,
    Test,
    Run,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::Train, Phase::Test, Phase::Run];

    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Train => "train",
            Phase::Test => "test",
            Phase::Run => "run",
        }
    }

    pub fn route(self) -> &'static str {
        match self {
            Phase::Train => "/train",
            Phase::Test => "/test",
            Phase::Run => "/run",
        }
    }

    /// Whether a successful reply must carry a result payload.
    pub fn yields_payload(self) -> bool {
        self != Phase::Train
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Phase {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|p| p.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown phase `{s}` (expected train, test or run)"))
    }
}

/// Body of every `POST` route.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseRequest {
    pub experiment_id: String,
    /// Dataset directory as seen from inside the sandbox.
    pub data_dir: String,
    /// The manifest's config entries.
    #[serde(default)]
    pub config: Map<String, Value>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReplyStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseReply {
    pub status: ReplyStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

impl PhaseReply {
    pub fn ok(payload: Option<Value>) -> Self {
        Self {
            status: ReplyStatus::Ok,
            payload,
            reason: None,
        }
    }

    pub fn failed(reason: impl Into<String>) -> Self {
        Self {
            status: ReplyStatus::Failed,
            payload: None,
            reason: Some(reason.into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthReply {
    pub status: String,
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub contract: Option<u32>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn json_shapes_are_stable() {
        let req = PhaseRequest {
            experiment_id: "e1".into(),
            data_dir: "/work/data/e1".into(),
            config: Map::new(),
        };
        assert_eq!(
            serde_json::to_value(&req).unwrap(),
            json!({"experiment_id": "e1", "data_dir": "/work/data/e1", "config": {}})
        );
        assert_eq!(serde_json::to_value(PhaseReply::failed("boom")).unwrap(), json!({"status": "failed", "reason": "boom"}));
        let ok: PhaseReply = serde_json::from_value(json!({"status": "ok"})).unwrap();
        assert_eq!(ok, PhaseReply::ok(None));
    }

    #[test]
    fn phases_parse_and_route() {
        for p in Phase::ALL {
            assert_eq!(p.as_str().parse::<Phase>().unwrap(), p);
            assert_eq!(p.route(), format!("/{p}"));
        }
        assert!("clear".parse::<Phase>().is_err());
    }
}
