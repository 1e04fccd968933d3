use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::PathBuf;
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde_json::{json, Value};

use super::{parse_reply, AdviceError, AdviceRequest, AdviceResponse, Advisor, Stage};
use crate::profiler::summarize_profile;

pub const DEFAULT_TIMEOUT_SECS: u64 = 60;
pub const DEFAULT_MAX_IN_FLIGHT: usize = 4;
pub const DEFAULT_MODEL: &str = "gpt-4o";
/// Character budget for the dataset summary placed in prompts.
const PROFILE_BUDGET: usize = 4000;

const ROLES_TEMPLATE: &str = include_str!("../../assets/prompts/roles.txt");
const MAPPING_TEMPLATE: &str = include_str!("../../assets/prompts/mapping.txt");
const REFINEMENT_TEMPLATE: &str = include_str!("../../assets/prompts/refinement.txt");
const ONE_SHOT_TEMPLATE: &str = include_str!("../../assets/prompts/one-shot.txt");

#[derive(Debug, Clone)]
pub struct RemoteConfig {
    pub url: String,
    pub api_key: Option<String>,
    pub model: String,
    pub timeout_secs: u64,
    pub max_in_flight: usize,
    /// JSON-lines audit log of every exchange.
    pub transcript: Option<PathBuf>,
}

impl RemoteConfig {
    pub fn new(url: impl Into<String>) -> RemoteConfig {
        RemoteConfig {
            url: url.into(),
            api_key: None,
            model: DEFAULT_MODEL.to_string(),
            timeout_secs: DEFAULT_TIMEOUT_SECS,
            max_in_flight: DEFAULT_MAX_IN_FLIGHT,
            transcript: None,
        }
    }

    /// Reads `RETARGET_LLM_URL` and `RETARGET_LLM_KEY`; `None` when no
    /// endpoint is configured.
    pub fn from_env() -> Option<RemoteConfig> {
        let url = std::env::var("RETARGET_LLM_URL").ok().filter(|u| !u.is_empty())?;
        let mut cfg = RemoteConfig::new(url);
        cfg.api_key = std::env::var("RETARGET_LLM_KEY").ok();
        if let Ok(m) = std::env::var("RETARGET_LLM_MODEL") {
            cfg.model = m;
        }
        Some(cfg)
    }
}

struct Slots {
    free: Mutex<usize>,
    cv: Condvar,
}

struct Permit<'a>(&'a Slots);

impl Slots {
    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.cv.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.cv.notify_one();
    }
}

/// Chat-completion backend speaking the common `{model, messages}` protocol.
pub struct RemoteAdvisor {
    config: RemoteConfig,
    agent: ureq::Agent,
    slots: Slots,
    transcript: Mutex<Option<File>>,
}

impl RemoteAdvisor {
    pub fn new(config: RemoteConfig) -> std::io::Result<RemoteAdvisor> {
        let transcript = match &config.transcript {
            Some(p) => Some(OpenOptions::new().create(true).append(true).open(p)?),
            None => None,
        };
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build();
        Ok(RemoteAdvisor {
            slots: Slots {
                free: Mutex::new(config.max_in_flight.max(1)),
                cv: Condvar::new(),
            },
            config,
            agent,
            transcript: Mutex::new(transcript),
        })
    }

    fn log(&self, entry: Value) {
        let mut guard = self.transcript.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(f) = guard.as_mut() {
            if let Err(e) = writeln!(f, "{entry}") {
                log::warn!("cannot write advisor transcript: {e}");
            }
        }
    }

    fn call(&self, prompt: &str) -> Result<String, AdviceError> {
        let body = json!({
            "model": self.config.model,
            "temperature": 0,
            "messages": [{"role": "user", "content": prompt}],
        });
        let mut req = self.agent.post(&self.config.url);
        if let Some(key) = &self.config.api_key {
            req = req.set("Authorization", &format!("Bearer {key}"));
        }
        let _permit = self.slots.acquire();
        let resp = req.send_json(body).map_err(|e| match e {
            ureq::Error::Status(code, r) => {
                AdviceError::Transport(format!("HTTP {code}: {}", r.status_text()))
            }
            ureq::Error::Transport(t) => {
                let msg = t.to_string();
                if msg.contains("timed out") {
                    AdviceError::Timeout(self.config.timeout_secs)
                } else {
                    AdviceError::Transport(msg)
                }
            }
        })?;
        let v: Value = resp
            .into_json()
            .map_err(|e| AdviceError::Transport(format!("response body: {e}")))?;
        v.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| AdviceError::Rejected {
                reason: "response has no message content".into(),
                raw: v.to_string(),
            })
    }
}

/// Fills a stage template's `{SPEC}`, `{PROFILE}`, `{ROLES}` and `{PLAN}` slots.
pub fn render_prompt(request: &AdviceRequest) -> Result<String, AdviceError> {
    let template = match request.stage {
        Stage::Roles => ROLES_TEMPLATE,
        Stage::Mapping => MAPPING_TEMPLATE,
        Stage::Refinement => REFINEMENT_TEMPLATE,
        Stage::OneShot => ONE_SHOT_TEMPLATE,
    };
    let profile = summarize_profile(&request.profile, PROFILE_BUDGET)
        .map_err(|e| AdviceError::InvalidRequest(e.to_string()))?;
    let pretty = |v: &Value| serde_json::to_string_pretty(v).unwrap_or_default();
    let roles = match &request.roles {
        Some(r) => pretty(&serde_json::to_value(r).unwrap_or_default()),
        None if request.stage == Stage::Mapping => {
            return Err(AdviceError::InvalidRequest("mapping needs a role map".into()))
        }
        None => String::new(),
    };
    let plan = match &request.plan {
        Some(p) => pretty(&serde_json::to_value(p).unwrap_or_default()),
        None if request.stage == Stage::Refinement => {
            return Err(AdviceError::InvalidRequest("refinement needs a plan".into()))
        }
        None => String::new(),
    };
    let body: String = template.lines().filter(|l| !l.starts_with("# ")).collect::<Vec<_>>().join("\n");
    Ok(body
        .replace("{SPEC}", request.spec_text.trim_end())
        .replace("{PROFILE}", &pretty(&profile))
        .replace("{ROLES}", &roles)
        .replace("{PLAN}", &plan))
}

impl Advisor for RemoteAdvisor {
    fn id(&self) -> &str {
        "remote"
    }

    fn max_in_flight(&self) -> Option<usize> {
        Some(self.config.max_in_flight.max(1))
    }

    fn advise(&self, request: &AdviceRequest) -> Result<AdviceResponse, AdviceError> {
        let prompt = render_prompt(request)?;
        let reply = self.call(&prompt);
        let parsed = match &reply {
            Ok(text) => parse_reply(request, text),
            Err(_) => Err(AdviceError::NoBackend),
        };
        self.log(json!({
            "stage": request.stage,
            "model": self.config.model,
            "prompt": prompt,
            "reply": reply.as_ref().ok(),
            "error": match (&reply, &parsed) {
                (Err(e), _) | (Ok(_), Err(e)) => Some(e.to_string()),
                _ => None,
            },
        }));
        let text = reply?;
        Ok(AdviceResponse {
            payload: parsed?,
            rationale: Some(text),
            backend: self.id().to_string(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::advisor::AdvicePayload;
    use crate::profiler::{ingest_table, profile_dataset, TableFormat};
    use crate::spec::parse_spec;
    use std::io::{BufRead, BufReader, Read};
    use std::net::TcpListener;

    /// Serves `replies` in order, one per connection, as chat completions.
    fn mock_server(replies: Vec<String>) -> (String, std::thread::JoinHandle<Vec<String>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
        let handle = std::thread::spawn(move || {
            let mut bodies = Vec::new();
            for reply in replies {
                let (stream, _) = listener.accept().unwrap();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut len = 0;
                let mut auth = String::new();
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    let l = line.to_ascii_lowercase();
                    if let Some(v) = l.strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                    if l.starts_with("authorization:") {
                        auth = line.trim().to_string();
                    }
                    if line == "\r\n" {
                        break;
                    }
                }
                let mut body = vec![0; len];
                reader.read_exact(&mut body).unwrap();
                bodies.push(format!("{auth}\n{}", String::from_utf8(body).unwrap()));
                let payload = json!({"choices": [{"message": {"role": "assistant", "content": reply}}]}).to_string();
                let mut stream = stream;
                write!(
                    stream,
                    "HTTP/1.1 200 OK\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{payload}",
                    payload.len()
                )
                .unwrap();
            }
            bodies
        });
        (url, handle)
    }

    fn fixture() -> (crate::spec::ChartSpec, crate::profiler::DatasetProfile) {
        let spec = parse_spec(
            r#"{"data":{"url":"a.csv"},"mark":"point",
               "encoding":{"x":{"field":"a","type":"Q"},"y":{"field":"b","type":"Q"}}}"#,
        )
        .unwrap();
        let table = ingest_table(b"u,v\n1,2\n3,5\n", TableFormat::Csv).unwrap();
        (spec, profile_dataset("new.csv", &table))
    }

    #[test]
    fn one_shot_reply_is_unfenced_and_logged() {
        let reply = "Here it is:\n```json\n{\"data\":{\"url\":\"new.csv\"},\"mark\":\"point\",\"encoding\":{\"x\":{\"field\":\"u\",\"type\":\"quantitative\"}}}\n```\n";
        let (url, server) = mock_server(vec![reply.to_string()]);
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = RemoteConfig::new(url);
        cfg.api_key = Some("k123".into());
        cfg.transcript = Some(dir.path().join("t.jsonl"));
        let adv = RemoteAdvisor::new(cfg).unwrap();
        let (spec, profile) = fixture();
        let resp = adv.advise(&AdviceRequest::one_shot(&spec, &profile, &[])).unwrap();
        // Oracle: strip the fence by hand and parse the inner text.
        let start = reply.find("```json\n").unwrap() + 8;
        let end = reply.rfind("```").unwrap();
        let want = crate::spec::serialize_spec(&parse_spec(&reply[start..end]).unwrap());
        assert_eq!(resp.payload, AdvicePayload::SpecText(want));

        let bodies = server.join().unwrap();
        assert!(bodies[0].starts_with("Authorization: Bearer k123"), "{}", bodies[0]);
        let sent: Value = serde_json::from_str(bodies[0].split_once('\n').unwrap().1).unwrap();
        assert_eq!(sent["temperature"], 0);
        assert!(sent["messages"][0]["content"].as_str().unwrap().contains("\"a.csv\""));
        let log = std::fs::read_to_string(dir.path().join("t.jsonl")).unwrap();
        assert_eq!(log.lines().count(), 1);
        assert_eq!(serde_json::from_str::<Value>(log.lines().next().unwrap()).unwrap()["stage"], "one-shot");
    }

    #[test]
    fn plan_reusing_a_column_is_rejected() {
        let (spec, profile) = fixture();
        let roles = crate::mapper::extract_roles(&spec, &crate::depgraph::build_graph_lenient(&spec));
        let plan = json!({
            "source": "new.csv",
            "assignments": [
                {"channel": "x", "oldField": "a", "newField": "u", "score": 1.0},
                {"channel": "y", "oldField": "b", "newField": "u", "score": 1.0}
            ]
        });
        let (url, server) = mock_server(vec![format!("```json\n{plan}\n```")]);
        let adv = RemoteAdvisor::new(RemoteConfig::new(url)).unwrap();
        let err = adv.advise(&AdviceRequest::mapping(&roles, &profile, &[])).unwrap_err();
        assert!(matches!(err, AdviceError::Rejected { ref reason, .. } if reason.contains("more than one")), "{err}");
        server.join().unwrap();
    }

    #[test]
    fn unreachable_endpoint_is_a_transport_error() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/", listener.local_addr().unwrap());
        drop(listener);
        let adv = RemoteAdvisor::new(RemoteConfig::new(url)).unwrap();
        let (spec, profile) = fixture();
        let err = adv.advise(&AdviceRequest::one_shot(&spec, &profile, &[])).unwrap_err();
        assert!(matches!(err, AdviceError::Transport(_)), "{err}");
    }

    #[test]
    fn prompts_fill_every_slot() {
        let (spec, profile) = fixture();
        let p = render_prompt(&AdviceRequest::one_shot(&spec, &profile, &[])).unwrap();
        assert!(!p.contains("{SPEC}") && !p.contains("{PROFILE}"));
        assert!(!p.contains("template:"));
    }
}
