use serde::{Deserialize, Serialize};

use super::{
    image_sha256, FinishReason, ModelRequest, ModelResponse, Part, Transport, TransportError,
};

/// Simulated failure for a scripted rule.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScriptFailure {
    Status(u16),
    Timeout,
    Malformed,
}

/// First matching rule answers. A rule matches when every condition it sets
/// holds: `contains` is searched in the request's text parts, `image_sha256`
/// compares the attached image. `{prompt}` in a reply echoes the request text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptRule {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contains: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_sha256: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reply: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fail: Option<ScriptFailure>,
}

impl ScriptRule {
    pub fn contains(needle: &str, reply: &str) -> Self {
        Self {
            contains: Some(needle.into()),
            image_sha256: None,
            reply: Some(reply.into()),
            fail: None,
        }
    }

    pub fn image(sha256: &str, reply: &str) -> Self {
        Self {
            contains: None,
            image_sha256: Some(sha256.into()),
            reply: Some(reply.into()),
            fail: None,
        }
    }

    pub fn failing(needle: &str, fail: ScriptFailure) -> Self {
        Self {
            contains: Some(needle.into()),
            image_sha256: None,
            reply: None,
            fail: Some(fail),
        }
    }

    fn matches(&self, text: &str, image: Option<&str>) -> bool {
        self.contains.as_deref().is_none_or(|n| text.contains(n))
            && self
                .image_sha256
                .as_deref()
                .is_none_or(|h| image == Some(h))
    }
}

pub struct ScriptedTransport {
    rules: Vec<ScriptRule>,
    default_reply: Option<String>,
}

impl ScriptedTransport {
    pub fn new(rules: Vec<ScriptRule>, default_reply: Option<String>) -> Self {
        Self {
            rules,
            default_reply,
        }
    }
}

impl Transport for ScriptedTransport {
    fn send(&self, req: &ModelRequest) -> Result<ModelResponse, TransportError> {
        let text = req.text();
        let image = req.parts().find_map(|p| match p {
            Part::Image { png, .. } => Some(image_sha256(png)),
            Part::Text(_) => None,
        });
        let rule = self
            .rules
            .iter()
            .find(|r| r.matches(&text, image.as_deref()));
        let reply = match rule {
            Some(ScriptRule { fail: Some(f), .. }) => {
                return Err(match f {
                    ScriptFailure::Status(s) => TransportError::Status {
                        status: *s,
                        body: "scripted failure".into(),
                    },
                    ScriptFailure::Timeout => TransportError::Timeout,
                    ScriptFailure::Malformed => {
                        TransportError::Malformed("scripted failure".into())
                    }
                })
            }
            Some(ScriptRule { reply: Some(r), .. }) => r,
            _ => self
                .default_reply
                .as_ref()
                .ok_or(TransportError::NoScriptedReply)?,
        };
        Ok(ModelResponse {
            text: reply.replace("{prompt}", &text),
            finish_reason: FinishReason::Stop,
            latency_ms: 0,
            token_usage: None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    fn ask(t: &ScriptedTransport, text: &str) -> Result<String, TransportError> {
        t.send(&ModelRequest::user("m", vec![Part::Text(text.into())]))
            .map(|r| r.text)
    }

    #[test]
    fn contains_rule_answers_matching_requests() {
        let t = ScriptedTransport::new(vec![ScriptRule::contains("intersect", "yes")], None);
        assert_eq!(ask(&t, "Do the two circles intersect?").unwrap(), "yes");
        assert_eq!(ask(&t, "Do they intersect at all").unwrap(), "yes");
        assert_eq!(
            ask(&t, "How many rows?"),
            Err(TransportError::NoScriptedReply)
        );
    }

    #[test]
    fn image_rules_and_echo() {
        let png = Arc::new(vec![9u8, 9, 9]);
        let hash = image_sha256(&png);
        let t = ScriptedTransport::new(
            vec![ScriptRule::image(&hash, "seen")],
            Some("echo: {prompt}".into()),
        );
        let with_image = ModelRequest::user("m", vec![Part::png(png), Part::Text("q".into())]);
        assert_eq!(t.send(&with_image).unwrap().text, "seen");
        assert_eq!(ask(&t, "count, grid").unwrap(), "echo: count, grid");
    }

    #[test]
    fn scripted_failures() {
        let t = ScriptedTransport::new(
            vec![ScriptRule::failing("boom", ScriptFailure::Status(503))],
            Some("ok".into()),
        );
        assert!(matches!(
            ask(&t, "boom"),
            Err(TransportError::Status { status: 503, .. })
        ));
        assert_eq!(ask(&t, "fine").unwrap(), "ok");
    }
}
