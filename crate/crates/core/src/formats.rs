//! External text formats: event files, verdict bodies and transcripts.
//!
//! Event files hold one `<event>` element with one child per line and LF
//! line endings. Both the `originator`/`responder` spelling and the shorter
//! `origin`/`respond` spelling are read; only the long one is written.

use quick_xml::events::Event;
use quick_xml::Reader;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contract::{EventRecord, Status};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FormatError {
    #[error("malformed event file: {0}")]
    MalformedEvent(String),
    #[error("malformed verdict body: {0}")]
    MalformedVerdict(String),
}

/// Status written for timeout pseudo-events in exported sequences.
pub const TIMEOUT_STATUS: &str = "timeout";

/// The four text fields of an event file, before interpretation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventXml {
    pub originator: String,
    pub responder: String,
    pub op_type: String,
    pub status: String,
}

impl EventXml {
    pub fn from_event(e: &EventRecord) -> EventXml {
        EventXml {
            originator: e.originator.to_string(),
            responder: e.responder.to_string(),
            op_type: e.op_type.clone(),
            status: e.status.as_str().to_owned(),
        }
    }

    /// Interpret as a business event. Timeout pseudo-events are rejected.
    pub fn to_event(&self) -> Result<EventRecord, FormatError> {
        let status: Status = self.status.parse().map_err(FormatError::MalformedEvent)?;
        EventRecord::new(&self.originator, &self.responder, &self.op_type, status).map_err(FormatError::MalformedEvent)
    }

    pub fn to_xml(&self) -> String {
        use quick_xml::escape::escape;
        format!(
            "<event>\n<originator>{}</originator>\n<responder>{}</responder>\n<type>{}</type>\n<status>{}</status>\n</event>\n",
            escape(self.originator.as_str()),
            escape(self.responder.as_str()),
            escape(self.op_type.as_str()),
            escape(self.status.as_str())
        )
    }
}

fn bad(msg: impl Into<String>) -> FormatError {
    FormatError::MalformedEvent(msg.into())
}

fn predefined(name: &str) -> Option<char> {
    Some(match name {
        "lt" => '<',
        "gt" => '>',
        "amp" => '&',
        "apos" => '\'',
        "quot" => '"',
        _ => return None,
    })
}

/// Parse `<root>` with flat text children into (tag, text) pairs.
fn flat_children(xml: &str, root: &str, err: fn(String) -> FormatError) -> Result<Vec<(String, String)>, FormatError> {
    let mut reader = Reader::from_str(xml);
    reader.config_mut().trim_text(true);
    let mut depth = 0;
    let mut saw_root = false;
    let mut current: Option<(String, String)> = None;
    let mut out = Vec::new();
    loop {
        let ev = reader.read_event().map_err(|e| err(e.to_string()))?;
        match ev {
            Event::Decl(_) | Event::Comment(_) | Event::PI(_) | Event::DocType(_) => {}
            Event::Start(s) => {
                let name = String::from_utf8_lossy(s.name().as_ref()).into_owned();
                match depth {
                    0 if name == root && !saw_root => saw_root = true,
                    0 => return Err(err(format!("unexpected root element <{name}>"))),
                    1 => current = Some((name, String::new())),
                    _ => return Err(err(format!("unexpected nested element <{name}>"))),
                }
                depth += 1;
            }
            Event::Empty(s) => {
                let name = String::from_utf8_lossy(s.name().as_ref()).into_owned();
                if depth != 1 {
                    return Err(err(format!("unexpected element <{name}/>")));
                }
                out.push((name, String::new()));
            }
            Event::End(_) => {
                depth -= 1;
                if depth == 1 {
                    out.extend(current.take());
                }
            }
            Event::Text(t) => {
                let text = t.decode().map_err(|e| err(e.to_string()))?;
                match current.as_mut() {
                    Some((_, buf)) if depth == 2 => buf.push_str(&text),
                    _ => return Err(err(format!("stray text {text:?}"))),
                }
            }
            Event::CData(t) => {
                let text = t.decode().map_err(|e| err(e.to_string()))?;
                match current.as_mut() {
                    Some((_, buf)) if depth == 2 => buf.push_str(&text),
                    _ => return Err(err("stray CDATA".into())),
                }
            }
            Event::GeneralRef(r) => {
                let c = if r.is_char_ref() {
                    r.resolve_char_ref().map_err(|e| err(e.to_string()))?
                } else {
                    predefined(&r.decode().map_err(|e| err(e.to_string()))?)
                };
                match (c, current.as_mut()) {
                    (Some(c), Some((_, buf))) if depth == 2 => buf.push(c),
                    _ => return Err(err("unresolvable entity reference".into())),
                }
            }
            Event::Eof => break,
        }
    }
    if !saw_root || depth != 0 {
        return Err(err(format!("missing or unclosed <{root}> element")));
    }
    Ok(out)
}

pub fn parse_event_xml(xml: &str) -> Result<EventXml, FormatError> {
    let mut fields: [Option<String>; 4] = Default::default();
    for (tag, text) in flat_children(xml, "event", FormatError::MalformedEvent)? {
        let slot = match tag.as_str() {
            "originator" | "origin" => 0,
            "responder" | "respond" => 1,
            "type" => 2,
            "status" => 3,
            other => return Err(bad(format!("unknown tag <{other}>"))),
        };
        if fields[slot].replace(text).is_some() {
            return Err(bad(format!("duplicate tag <{tag}>")));
        }
    }
    let [Some(originator), Some(responder), Some(op_type), Some(status)] = fields else {
        return Err(bad("missing one of originator, responder, type, status"));
    };
    Ok(EventXml { originator, responder, op_type, status })
}

/// Parse an event file straight into a business event.
pub fn parse_event(xml: &str) -> Result<EventRecord, FormatError> {
    parse_event_xml(xml)?.to_event()
}

pub fn event_xml(e: &EventRecord) -> String {
    EventXml::from_event(e).to_xml()
}

/// Response body of the verdict service. No trailing newline.
pub fn verdict_xml(compliant: bool) -> String {
    format!("<result>\n    <contractCompliant>{compliant}</contractCompliant>\n</result>")
}

pub fn parse_verdict_xml(xml: &str) -> Result<bool, FormatError> {
    let children = flat_children(xml, "result", FormatError::MalformedVerdict)?;
    match children.as_slice() {
        [(tag, text)] if tag == "contractCompliant" => match text.as_str() {
            "true" => Ok(true),
            "false" => Ok(false),
            other => Err(FormatError::MalformedVerdict(format!("value {other:?}"))),
        },
        _ => Err(FormatError::MalformedVerdict("expected a single contractCompliant element".into())),
    }
}

/// `BusinessEvent{originator='buyer', responder='store', type='BuyReq', status='success'}`
pub fn business_event_line(e: &EventRecord) -> String {
    format!(
        "BusinessEvent{{originator='{}', responder='{}', type='{}', status='{}'}}",
        e.originator,
        e.responder,
        e.op_type,
        e.status.as_str()
    )
}

pub const BEGIN_REQUEST: &str = "-------- Begin Request to CCC service ----------";
pub const END_REQUEST: &str = "-------- End Request to CCC service ----------";
pub const BEGIN_RESPONSE: &str = "-------- Begin Response from CCC service ----------";
pub const END_RESPONSE: &str = "-------- End Response from CCC service ----------";

/// One request/response exchange framed with the service banners,
/// followed by a blank separator line.
pub fn exchange_block(e: &EventRecord, compliant: bool) -> String {
    format!(
        "{BEGIN_REQUEST}\n{}\n{END_REQUEST}\n\n{BEGIN_RESPONSE}\n{}\n{END_RESPONSE}\n\n",
        business_event_line(e),
        verdict_xml(compliant)
    )
}
