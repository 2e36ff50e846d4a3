//! Client for an external signature classifier speaking newline-delimited
//! JSON over a local byte stream (TCP or a Unix socket).

use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
#[cfg(unix)]
use std::os::unix::net::UnixStream;
use std::sync::Mutex;
use std::time::Duration;

use cascade_core::semantics::{ClassifierBoundary, ClassifierError, ClassifierRequest, ClassifierResponse};
use serde::Deserialize;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

/// Where the classifier listens: `unix:/path/to/socket` or `host:port`
/// (optionally prefixed with `tcp:`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Endpoint {
    Tcp(String),
    #[cfg(unix)]
    Unix(std::path::PathBuf),
}

impl std::str::FromStr for Endpoint {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        #[cfg(unix)]
        if let Some(path) = s.strip_prefix("unix:") {
            return Ok(Endpoint::Unix(path.into()));
        }
        let addr = s.strip_prefix("tcp:").unwrap_or(s);
        if addr.rsplit_once(':').is_some_and(|(_, port)| port.parse::<u16>().is_ok()) {
            Ok(Endpoint::Tcp(addr.to_owned()))
        } else {
            Err(format!("classifier address {s:?} is neither unix:PATH nor HOST:PORT"))
        }
    }
}

trait Stream: std::io::Read + Write + Send {}
impl<T: std::io::Read + Write + Send> Stream for T {}

struct Connection {
    reader: BufReader<Box<dyn Stream>>,
}

/// Blocking classifier client. One connection is kept and shared behind a
/// mutex; a broken connection is re-opened once per request.
pub struct SidecarClient {
    endpoint: Endpoint,
    timeout: Duration,
    conn: Mutex<Option<Connection>>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Reply {
    Ok(ClassifierResponse),
    Error { error: String },
}

impl SidecarClient {
    pub fn new(endpoint: Endpoint, timeout: Duration) -> Self {
        SidecarClient {
            endpoint,
            timeout,
            conn: Mutex::new(None),
        }
    }

    fn connect(&self) -> Result<Connection, ClassifierError> {
        let unavailable = |e: std::io::Error| ClassifierError::Unavailable(format!("{:?}: {e}", self.endpoint));
        let stream: Box<dyn Stream> = match &self.endpoint {
            Endpoint::Tcp(addr) => {
                let s = TcpStream::connect(addr).map_err(unavailable)?;
                s.set_read_timeout(Some(self.timeout)).map_err(unavailable)?;
                s.set_write_timeout(Some(self.timeout)).map_err(unavailable)?;
                Box::new(s)
            }
            #[cfg(unix)]
            Endpoint::Unix(path) => {
                let s = UnixStream::connect(path).map_err(unavailable)?;
                s.set_read_timeout(Some(self.timeout)).map_err(unavailable)?;
                s.set_write_timeout(Some(self.timeout)).map_err(unavailable)?;
                Box::new(s)
            }
        };
        Ok(Connection {
            reader: BufReader::new(stream),
        })
    }

    fn round_trip(conn: &mut Connection, line: &str) -> std::io::Result<String> {
        let stream = conn.reader.get_mut();
        stream.write_all(line.as_bytes())?;
        stream.write_all(b"\n")?;
        stream.flush()?;
        let mut reply = String::new();
        if conn.reader.read_line(&mut reply)? == 0 {
            return Err(std::io::Error::new(std::io::ErrorKind::UnexpectedEof, "classifier closed the stream"));
        }
        Ok(reply)
    }
}

impl ClassifierBoundary for SidecarClient {
    fn classify(&self, request: &ClassifierRequest) -> Result<ClassifierResponse, ClassifierError> {
        let line = serde_json::to_string(request).map_err(|e| ClassifierError::Protocol(e.to_string()))?;
        let mut guard = self.conn.lock().unwrap_or_else(|p| p.into_inner());
        let mut last_err = None;
        for _attempt in 0..2 {
            if guard.is_none() {
                *guard = Some(self.connect()?);
            }
            let conn = guard.as_mut().expect("connection was just opened");
            match Self::round_trip(conn, &line) {
                Ok(reply) => {
                    return match serde_json::from_str::<Reply>(&reply) {
                        Ok(Reply::Ok(r)) if (0.0..=1.0).contains(&r.confidence) => Ok(r),
                        Ok(Reply::Ok(r)) => Err(ClassifierError::Protocol(format!("confidence {} outside [0, 1]", r.confidence))),
                        Ok(Reply::Error { error }) => Err(ClassifierError::Protocol(error)),
                        Err(e) => Err(ClassifierError::Protocol(format!("unparsable reply {:?}: {e}", reply.trim_end()))),
                    };
                }
                Err(e) => {
                    *guard = None;
                    last_err = Some(e);
                }
            }
        }
        Err(ClassifierError::Unavailable(format!(
            "{:?}: {}",
            self.endpoint,
            last_err.map_or_else(String::new, |e| e.to_string())
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::net::TcpListener;
    use std::thread;

    /// Stub classifier: answers TRANSFER for transfer-like signatures,
    /// otherwise rejects; counts requests.
    fn stub() -> (String, thread::JoinHandle<usize>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap().to_string();
        let handle = thread::spawn(move || {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut out = stream;
            let mut served = 0;
            let mut line = String::new();
            while reader.read_line(&mut line).unwrap() > 0 {
                let req: ClassifierRequest = serde_json::from_str(&line).unwrap();
                let reply = if req.signature.starts_with("bogus") {
                    "not json".to_owned()
                } else if req.signature.contains("transfer") {
                    r#"{"category":"TRANSFER","confidence":0.97,"validated":true}"#.to_owned()
                } else {
                    r#"{"category":"TRANSFER","confidence":0.41,"validated":false}"#.to_owned()
                };
                writeln!(out, "{reply}").unwrap();
                served += 1;
                line.clear();
            }
            served
        });
        (addr, handle)
    }

    #[test]
    fn endpoints_parse() {
        assert_eq!("127.0.0.1:7000".parse(), Ok(Endpoint::Tcp("127.0.0.1:7000".into())));
        assert_eq!("tcp:localhost:1".parse(), Ok(Endpoint::Tcp("localhost:1".into())));
        #[cfg(unix)]
        assert_eq!("unix:/tmp/s".parse(), Ok(Endpoint::Unix("/tmp/s".into())));
        assert!("nowhere".parse::<Endpoint>().is_err());
    }

    #[test]
    fn request_response_round_trip() {
        let (addr, server) = stub();
        let client = SidecarClient::new(Endpoint::Tcp(addr), Duration::from_secs(5));
        let req = |s: &str| ClassifierRequest {
            signature: s.into(),
            source_code: String::new(),
        };
        let r = client.classify(&req("safetransferx(address,uint256)")).unwrap();
        assert_eq!((r.category.as_str(), r.validated), ("TRANSFER", true));
        let r = client.classify(&req("frobnicate(uint256)")).unwrap();
        assert!(!r.validated);
        assert!(matches!(client.classify(&req("bogus()")), Err(ClassifierError::Protocol(_))));
        drop(client);
        assert_eq!(server.join().unwrap(), 3);
    }

    #[test]
    fn absent_server_is_unavailable() {
        let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
        let client = SidecarClient::new(Endpoint::Tcp(format!("127.0.0.1:{port}")), Duration::from_secs(1));
        let err = client
            .classify(&ClassifierRequest {
                signature: "x()".into(),
                source_code: String::new(),
            })
            .unwrap_err();
        assert!(matches!(err, ClassifierError::Unavailable(_)));
    }
}
