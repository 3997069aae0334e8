//! Out-of-process methods over line-delimited JSON on standard streams.
//!
//! The host writes one [`HostMessage`] per line to the plugin's stdin and
//! reads one [`PluginMessage`] per line from its stdout. A session is:
//!
//! ```text
//! host:   configure            plugin: ready
//! host:   fit                  plugin: reset/step/is_exhausted ... fit_done
//!   (each plugin request is answered by observation/transition/status)
//! host:   get_actions          plugin: actions
//! host:   task_switch          plugin: ready
//! host:   shutdown             plugin: ready, then exits
//! ```
//!
//! Either side may answer with `error`, which aborts the current operation.

use std::cell::RefCell;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::rc::Rc;

use serde::{Deserialize, Serialize};

use super::{FitReport, Method, PluginManifest, SettingDescription};
use crate::envsim::{ActionSpace, Environment, Feedback, Observation};
use crate::error::{Error, Result};
use crate::taxonomy::{Branch, MethodDescriptor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvRole {
    Train,
    Valid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum HostMessage {
    Configure {
        descriptor: MethodDescriptor,
        setting: SettingDescription,
        seed: u64,
    },
    Fit,
    Observation { observation: Observation },
    Transition { observation: Observation, feedback: Feedback },
    Status { exhausted: bool },
    GetActions { observations: Vec<Observation>, action_space: ActionSpace },
    TaskSwitch { task_id: Option<usize> },
    Shutdown,
    Error { message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PluginMessage {
    Ready,
    Reset { env: EnvRole },
    Step { env: EnvRole, action: usize },
    IsExhausted { env: EnvRole },
    FitDone { report: FitReport },
    Actions { actions: Vec<usize> },
    Error { message: String },
}

fn write_line<W: Write, T: Serialize>(w: &mut W, msg: &T) -> Result<()> {
    serde_json::to_writer(&mut *w, msg)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn read_line<R: BufRead, T: for<'de> Deserialize<'de>>(r: &mut R) -> Result<Option<T>> {
    let mut line = String::new();
    loop {
        line.clear();
        if r.read_line(&mut line)? == 0 {
            return Ok(None);
        }
        if !line.trim().is_empty() {
            break;
        }
    }
    serde_json::from_str(line.trim())
        .map(Some)
        .map_err(|e| Error::Plugin(format!("malformed message `{}`: {e}", line.trim())))
}

/// Host-side proxy for a plugin process.
pub struct PluginMethod {
    descriptor: MethodDescriptor,
    child: Child,
    to_plugin: BufWriter<ChildStdin>,
    from_plugin: BufReader<ChildStdout>,
    updates: u64,
}

impl PluginMethod {
    pub fn spawn(
        manifest: &PluginManifest,
        descriptor: MethodDescriptor,
        setting: &SettingDescription,
        seed: u64,
    ) -> Result<Self> {
        let (program, args) = manifest
            .command
            .split_first()
            .ok_or_else(|| Error::malformed("command", "plugin command is empty"))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::Plugin(format!("cannot start `{program}`: {e}")))?;
        let to_plugin = BufWriter::new(child.stdin.take().expect("piped stdin"));
        let from_plugin = BufReader::new(child.stdout.take().expect("piped stdout"));
        let mut m = PluginMethod {
            descriptor: descriptor.clone(),
            child,
            to_plugin,
            from_plugin,
            updates: 0,
        };
        m.send(&HostMessage::Configure {
            descriptor,
            setting: setting.clone(),
            seed,
        })?;
        m.expect_ready()?;
        Ok(m)
    }

    fn send(&mut self, msg: &HostMessage) -> Result<()> {
        write_line(&mut self.to_plugin, msg).map_err(|e| Error::Plugin(format!("write failed: {e}")))
    }

    fn recv(&mut self) -> Result<PluginMessage> {
        match read_line(&mut self.from_plugin)? {
            Some(PluginMessage::Error { message }) => Err(Error::Plugin(message)),
            Some(m) => Ok(m),
            None => Err(Error::Plugin("plugin closed its output".into())),
        }
    }

    fn expect_ready(&mut self) -> Result<()> {
        match self.recv()? {
            PluginMessage::Ready => Ok(()),
            other => Err(Error::Plugin(format!("expected ready, got {other:?}"))),
        }
    }

    fn serve_env(&mut self, env: &mut dyn Environment, request: PluginMessage) -> Result<()> {
        let reply = match request {
            PluginMessage::Reset { .. } => env.reset().map(|observation| HostMessage::Observation { observation }),
            PluginMessage::Step { action, .. } => env
                .step(action)
                .map(|(observation, feedback)| HostMessage::Transition { observation, feedback }),
            PluginMessage::IsExhausted { .. } => Ok(HostMessage::Status {
                exhausted: env.is_exhausted(),
            }),
            _ => unreachable!("environment request"),
        };
        match reply {
            Ok(msg) => self.send(&msg),
            Err(e) => {
                self.send(&HostMessage::Error { message: e.to_string() })?;
                Err(e)
            }
        }
    }
}

impl Method for PluginMethod {
    fn descriptor(&self) -> &MethodDescriptor {
        &self.descriptor
    }

    fn fit(&mut self, train: &mut dyn Environment, valid: &mut dyn Environment) -> Result<FitReport> {
        self.send(&HostMessage::Fit)?;
        loop {
            match self.recv()? {
                PluginMessage::FitDone { report } => {
                    self.updates += report.updates;
                    return Ok(report);
                }
                req @ (PluginMessage::Reset { env, .. }
                | PluginMessage::Step { env, .. }
                | PluginMessage::IsExhausted { env }) => {
                    let target: &mut dyn Environment = match env {
                        EnvRole::Train => train,
                        EnvRole::Valid => valid,
                    };
                    self.serve_env(target, req)?;
                }
                other => return Err(Error::Plugin(format!("unexpected message during fit: {other:?}"))),
            }
        }
    }

    fn get_actions(&mut self, observations: &[Observation], action_space: &ActionSpace) -> Result<Vec<usize>> {
        self.send(&HostMessage::GetActions {
            observations: observations.to_vec(),
            action_space: *action_space,
        })?;
        match self.recv()? {
            PluginMessage::Actions { actions } if actions.len() == observations.len() => {
                if let Some(a) = actions.iter().find(|&&a| a >= action_space.n) {
                    return Err(Error::Plugin(format!("action {a} outside the action space")));
                }
                Ok(actions)
            }
            other => Err(Error::Plugin(format!("expected {} actions, got {other:?}", observations.len()))),
        }
    }

    fn on_task_switch(&mut self, task_id: Option<usize>) -> Result<()> {
        self.send(&HostMessage::TaskSwitch { task_id })?;
        self.expect_ready()
    }

    fn update_count(&self) -> u64 {
        self.updates
    }
}

impl Drop for PluginMethod {
    fn drop(&mut self) {
        if self.send(&HostMessage::Shutdown).is_ok() {
            let _ = self.expect_ready();
        }
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

struct Channel<R, W> {
    reader: R,
    writer: W,
}

impl<R: BufRead, W: Write> Channel<R, W> {
    fn request(&mut self, msg: &PluginMessage) -> Result<HostMessage> {
        write_line(&mut self.writer, msg)?;
        match read_line(&mut self.reader)? {
            Some(HostMessage::Error { message }) => Err(Error::Env(message)),
            Some(m) => Ok(m),
            None => Err(Error::Plugin("host closed the stream".into())),
        }
    }
}

/// Plugin-side environment that forwards every call to the host.
struct RemoteEnv<R, W> {
    role: EnvRole,
    channel: Rc<RefCell<Channel<R, W>>>,
    observation_dim: usize,
    action_space: ActionSpace,
    branch: Branch,
}

impl<R: BufRead, W: Write> Environment for RemoteEnv<R, W> {
    fn reset(&mut self) -> Result<Observation> {
        match self.channel.borrow_mut().request(&PluginMessage::Reset { env: self.role })? {
            HostMessage::Observation { observation } => Ok(observation),
            other => Err(Error::Plugin(format!("expected observation, got {other:?}"))),
        }
    }

    fn step(&mut self, action: usize) -> Result<(Observation, Feedback)> {
        let req = PluginMessage::Step { env: self.role, action };
        match self.channel.borrow_mut().request(&req)? {
            HostMessage::Transition { observation, feedback } => Ok((observation, feedback)),
            other => Err(Error::Plugin(format!("expected transition, got {other:?}"))),
        }
    }

    fn observation_dim(&self) -> usize {
        self.observation_dim
    }

    fn action_space(&self) -> ActionSpace {
        self.action_space
    }

    fn branch(&self) -> Branch {
        self.branch
    }

    fn is_exhausted(&self) -> bool {
        match self.channel.borrow_mut().request(&PluginMessage::IsExhausted { env: self.role }) {
            Ok(HostMessage::Status { exhausted }) => exhausted,
            _ => true,
        }
    }
}

/// Runs the plugin side of the protocol until `shutdown` or end of input.
/// `factory` builds the wrapped method from the host's `configure` message.
pub fn serve<R, W, F>(reader: R, writer: W, factory: F) -> Result<()>
where
    R: BufRead,
    W: Write,
    F: FnOnce(MethodDescriptor, &SettingDescription, u64) -> Result<Box<dyn Method>>,
{
    let channel = Rc::new(RefCell::new(Channel { reader, writer }));
    let first: Option<HostMessage> = read_line(&mut channel.borrow_mut().reader)?;
    let Some(HostMessage::Configure {
        descriptor,
        setting,
        seed,
    }) = first
    else {
        return Err(Error::Plugin("first message must be configure".into()));
    };
    let reply = |msg: &PluginMessage| write_line(&mut channel.borrow_mut().writer, msg);
    let mut method = match factory(descriptor, &setting, seed) {
        Ok(m) => m,
        Err(e) => {
            reply(&PluginMessage::Error { message: e.to_string() })?;
            return Err(e);
        }
    };
    reply(&PluginMessage::Ready)?;
    let remote = |role| RemoteEnv {
        role,
        channel: channel.clone(),
        observation_dim: setting.observation_dim,
        action_space: setting.action_space,
        branch: setting.assumptions.branch,
    };
    loop {
        let msg: Option<HostMessage> = read_line(&mut channel.borrow_mut().reader)?;
        let Some(msg) = msg else {
            return Ok(());
        };
        let out = match msg {
            HostMessage::Fit => {
                let (mut train, mut valid) = (remote(EnvRole::Train), remote(EnvRole::Valid));
                method
                    .fit(&mut train, &mut valid)
                    .map(|report| PluginMessage::FitDone { report })
            }
            HostMessage::GetActions {
                observations,
                action_space,
            } => method
                .get_actions(&observations, &action_space)
                .map(|actions| PluginMessage::Actions { actions }),
            HostMessage::TaskSwitch { task_id } => method.on_task_switch(task_id).map(|_| PluginMessage::Ready),
            HostMessage::Shutdown => {
                reply(&PluginMessage::Ready)?;
                return Ok(());
            }
            other => Err(Error::Plugin(format!("unexpected message {other:?}"))),
        };
        match out {
            Ok(m) => reply(&m)?,
            Err(e) => reply(&PluginMessage::Error { message: e.to_string() })?,
        }
    }
}
