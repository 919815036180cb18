//! Replay target that talks to a running service over HTTP.

use hybridcc::checker::FiredTimeout;
use hybridcc::contract::{EventRecord, RopState};
use hybridcc::formats::{event_xml, parse_verdict_xml};
use hybridcc::harness::{ReplayTarget, SubmitOutcome, TargetError};
use reqwest::blocking::{Client, Response};
use reqwest::StatusCode;

pub struct Remote {
    client: Client,
    base: String,
    pub id: String,
}

fn unreachable(e: reqwest::Error) -> TargetError {
    TargetError::Unreachable(e.to_string())
}

fn body(resp: Response) -> Result<(StatusCode, String), TargetError> {
    let status = resp.status();
    Ok((status, resp.text().map_err(unreachable)?))
}

impl Remote {
    /// Create a fresh contract instance on the service at `base`.
    pub fn create(base: &str, contract: &str, latency: &str) -> Result<Remote, TargetError> {
        let client = Client::new();
        let base = base.trim_end_matches('/').to_owned();
        let req = serde_json::json!({ "contract": contract, "latency": latency });
        let (status, text) = body(
            client
                .post(format!("{base}/contracts"))
                .header("content-type", "application/json")
                .body(req.to_string())
                .send()
                .map_err(unreachable)?,
        )?;
        if status != StatusCode::CREATED {
            return Err(TargetError::Protocol(format!("create instance: {status} {text}")));
        }
        let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| TargetError::Protocol(e.to_string()))?;
        let id = v["id"].as_str().ok_or_else(|| TargetError::Protocol(format!("no id in {text}")))?.to_owned();
        Ok(Remote { client, base, id })
    }

    fn url(&self, tail: &str) -> String {
        format!("{}/contracts/{}{tail}", self.base, self.id)
    }

    fn post_json(&self, tail: &str, v: serde_json::Value) -> Result<String, TargetError> {
        let (status, text) = body(
            self.client
                .post(self.url(tail))
                .header("content-type", "application/json")
                .body(v.to_string())
                .send()
                .map_err(unreachable)?,
        )?;
        if !status.is_success() {
            return Err(TargetError::Protocol(format!("{tail}: {status} {text}")));
        }
        Ok(text)
    }

    pub fn log_bytes(&self) -> Result<Vec<u8>, TargetError> {
        let resp = self.client.get(self.url("/log/raw")).send().map_err(unreachable)?;
        if !resp.status().is_success() {
            return Err(TargetError::Protocol(format!("log: {}", resp.status())));
        }
        Ok(resp.bytes().map_err(unreachable)?.to_vec())
    }
}

impl ReplayTarget for Remote {
    fn submit(&mut self, event: &EventRecord) -> Result<SubmitOutcome, TargetError> {
        let (status, text) = body(
            self.client
                .post(self.url("/events"))
                .header("content-type", "application/xml")
                .body(event_xml(event))
                .send()
                .map_err(unreachable)?,
        )?;
        match status {
            StatusCode::OK => {
                parse_verdict_xml(&text).map(SubmitOutcome::Verdict).map_err(|e| TargetError::Protocol(e.to_string()))
            }
            StatusCode::CONFLICT => Ok(SubmitOutcome::Ended),
            StatusCode::BAD_REQUEST => Ok(SubmitOutcome::Malformed(text)),
            other => Err(TargetError::Protocol(format!("submit: {other} {text}"))),
        }
    }

    fn advance_days(&mut self, days: u32) -> Result<Vec<FiredTimeout>, TargetError> {
        let text = self.post_json("/clock", serde_json::json!({ "days": days }))?;
        let mut v: serde_json::Value = serde_json::from_str(&text).map_err(|e| TargetError::Protocol(e.to_string()))?;
        serde_json::from_value(v["fired"].take()).map_err(|e| TargetError::Protocol(e.to_string()))
    }

    fn tick_chain(&mut self, ticks: u64) -> Result<(), TargetError> {
        if ticks > 0 {
            self.post_json("/chain/tick", serde_json::json!({ "ticks": ticks }))?;
        }
        Ok(())
    }

    fn state(&mut self) -> Result<RopState, TargetError> {
        let (status, text) = body(self.client.get(self.url("")).send().map_err(unreachable)?)?;
        if status != StatusCode::OK {
            return Err(TargetError::Protocol(format!("state: {status} {text}")));
        }
        serde_json::from_str(&text).map_err(|e| TargetError::Protocol(e.to_string()))
    }
}
