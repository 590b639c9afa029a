//! Provenance record embedded in every output file.

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    /// `None` for commands that draw no random numbers.
    pub seed: Option<u64>,
    pub timestamp: String,
    pub config_echo: serde_json::Value,
}

impl RunManifest {
    pub fn new(
        command: &str,
        seed: Option<u64>,
        timestamp: String,
        config: &impl Serialize,
    ) -> Self {
        Self {
            tool_version: format!("abvr {}", env!("CARGO_PKG_VERSION")),
            command: command.to_string(),
            seed,
            timestamp,
            config_echo: serde_json::to_value(config).expect("config serializes"),
        }
    }
}

/// Timestamp from `--timestamp` (RFC 3339), else `SOURCE_DATE_EPOCH`
/// (Unix seconds), else the current time. Always UTC, second precision.
pub fn resolve_timestamp(
    flag: Option<&str>,
    source_date_epoch: Option<&str>,
) -> Result<String, CliError> {
    let when: DateTime<Utc> = if let Some(raw) = flag {
        DateTime::parse_from_rfc3339(raw)
            .map_err(|e| CliError::Usage(format!("--timestamp '{raw}' is not RFC 3339: {e}")))?
            .with_timezone(&Utc)
    } else if let Some(raw) = source_date_epoch {
        let secs: i64 = raw.trim().parse().map_err(|_| {
            CliError::Usage(format!("SOURCE_DATE_EPOCH must be an integer, got '{raw}'"))
        })?;
        DateTime::from_timestamp(secs, 0)
            .ok_or_else(|| CliError::Usage(format!("SOURCE_DATE_EPOCH {secs} is out of range")))?
    } else {
        Utc::now()
    };
    Ok(when.to_rfc3339_opts(SecondsFormat::Secs, true))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn timestamp_sources() {
        assert_eq!(
            resolve_timestamp(Some("2024-03-01T12:00:00+02:00"), Some("0")).unwrap(),
            "2024-03-01T10:00:00Z"
        );
        assert_eq!(
            resolve_timestamp(None, Some("86400")).unwrap(),
            "1970-01-02T00:00:00Z"
        );
        assert!(resolve_timestamp(Some("yesterday"), None).is_err());
        assert!(resolve_timestamp(None, Some("soon")).is_err());
        assert!(resolve_timestamp(None, None).unwrap().ends_with('Z'));
    }

    #[test]
    fn manifest_echoes_config() {
        #[derive(Serialize)]
        struct C {
            reps: usize,
        }
        let m = RunManifest::new(
            "simulate",
            Some(3),
            "1970-01-01T00:00:00Z".into(),
            &C { reps: 5 },
        );
        assert_eq!(m.config_echo["reps"], 5);
        assert!(m.tool_version.starts_with("abvr "));
    }
}
