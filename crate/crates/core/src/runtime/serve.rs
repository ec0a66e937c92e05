//! Real-time session server. One client at a time; the simulation thread owns
//! all state and talks to the socket threads through channels.

use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;

use super::protocol::{
    decode, read_frame, send, ClientMessage, Command, ServerMessage, StateMessage, PROTOCOL_VERSION,
};
use super::scenario::{GazeSource, Scenario};
use super::sim::{Simulation, TickOutput};
use crate::attention::GazeSample;
use crate::error::{Error, Result};
use crate::imaging::export::{encode_png, to_gray8};

const IDLE_POLL: Duration = Duration::from_millis(50);

pub struct Server {
    listener: TcpListener,
    scenario: Scenario,
    active: Arc<AtomicBool>,
}

impl Server {
    pub fn bind(addr: &str, scenario: Scenario) -> Result<Self> {
        scenario.validate()?;
        let listener = TcpListener::bind(addr)?;
        Ok(Self {
            listener,
            scenario,
            active: Arc::new(AtomicBool::new(false)),
        })
    }

    pub fn local_addr(&self) -> Result<SocketAddr> {
        Ok(self.listener.local_addr()?)
    }

    /// Accepts connections forever. A connection that arrives while a session
    /// is active receives an error message and is closed.
    pub fn run(self) -> Result<()> {
        for stream in self.listener.incoming() {
            let stream = match stream {
                Ok(s) => s,
                Err(e) => {
                    log::warn!("accept failed: {e}");
                    continue;
                }
            };
            if self.active.swap(true, Ordering::SeqCst) {
                let mut s = stream;
                let _ = send(
                    &mut s,
                    &ServerMessage::Error {
                        message: "another session is active".into(),
                    },
                );
                continue;
            }
            let scenario = self.scenario.clone();
            let active = self.active.clone();
            thread::spawn(move || {
                let peer = stream.peer_addr().ok();
                log::info!("session started with {peer:?}");
                if let Err(e) = session(stream, scenario) {
                    log::warn!("session ended with error: {e}");
                }
                active.store(false, Ordering::SeqCst);
                log::info!("session with {peer:?} closed");
            });
        }
        Ok(())
    }
}

enum Inbound {
    Message(ClientMessage),
    Malformed(String),
    Closed,
}

fn spawn_reader(mut stream: TcpStream, tx: Sender<Inbound>) {
    thread::spawn(move || loop {
        let msg = match read_frame(&mut stream) {
            Ok(Some(bytes)) => match decode::<ClientMessage>(&bytes) {
                Ok(m) => Inbound::Message(m),
                Err(e) => Inbound::Malformed(e.to_string()),
            },
            Ok(None) | Err(_) => {
                let _ = tx.send(Inbound::Closed);
                return;
            }
        };
        if tx.send(msg).is_err() {
            return;
        }
    });
}

fn spawn_writer(mut stream: TcpStream, rx: Receiver<ServerMessage>) {
    thread::spawn(move || {
        for msg in rx {
            if send(&mut stream, &msg).is_err() {
                return;
            }
        }
        let _ = stream.shutdown(std::net::Shutdown::Both);
    });
}

fn png_b64(bytes: Vec<u8>) -> String {
    B64.encode(bytes)
}

fn state_message(out: &TickOutput, running: bool, dropped: u64, late: u64) -> StateMessage {
    StateMessage {
        tick: out.record.tick,
        running,
        telemetry: out.record.telemetry.clone(),
        frame_png: png_b64(encode_png(&to_gray8(&out.frame.intensity))),
        attention_png: png_b64(encode_png(&to_gray8(&out.attention.values))),
        confidence_png: png_b64(encode_png(&to_gray8(&out.confidence.values))),
        candidates: out.record.segmentation.candidates.clone(),
        selected: out.record.segmentation.selected,
        selected_mask: out.record.segmentation.selected_mask.clone(),
        dropped_gaze: dropped,
        late_gaze: late,
    }
}

fn hello(sim: &Simulation) -> ServerMessage {
    let sc = sim.scenario();
    ServerMessage::Hello {
        schema_version: PROTOCOL_VERSION,
        scenario: sc.name.clone(),
        tick_rate_hz: sc.tick_rate_hz,
        width_px: sc.imaging.width_px,
        depth_px: sc.imaging.depth_px,
        pixel_pitch: sc.imaging.pixel_pitch,
    }
}

/// Session state owned by the simulation thread.
struct Session {
    sim: Simulation,
    running: bool,
    pending: Vec<GazeSample>,
    paused_gaze: Vec<GazeSample>,
    dropped: u64,
    late: u64,
}

impl Session {
    fn ack(&self, command: &str) -> ServerMessage {
        ServerMessage::Ack {
            command: command.into(),
            tick: self.sim.tick(),
        }
    }

    fn on_gaze(&mut self, samples: Vec<GazeSample>) {
        let tick = self.sim.tick();
        for s in samples {
            if !self.running {
                self.paused_gaze.push(s);
            } else if s.t + 1 < tick {
                self.late += 1;
            } else {
                self.pending.push(GazeSample { t: tick, ..s });
            }
        }
    }

    fn on_command(&mut self, command: Command) -> ServerMessage {
        let name = command.name();
        match command {
            Command::Start => {
                self.dropped += self.paused_gaze.len() as u64;
                self.paused_gaze.clear();
                self.running = true;
            }
            Command::Pause => self.running = false,
            Command::Reset => {
                self.sim.reset();
                self.pending.clear();
            }
            Command::ToggleCorrection => {
                let on = self.sim.correction();
                self.sim.set_correction(!on);
            }
            Command::SetParams { control } => {
                if let Err(e) = self.sim.set_control(control) {
                    return ServerMessage::Error {
                        message: format!("set_params rejected: {e}"),
                    };
                }
            }
            Command::LoadScenario { toml } => {
                match Scenario::from_toml_str(&toml, None).and_then(Simulation::new) {
                    Ok(sim) => {
                        self.sim = sim;
                        self.running = false;
                        self.pending.clear();
                    }
                    Err(e) => {
                        return ServerMessage::Error {
                            message: format!("load_scenario rejected: {e}"),
                        }
                    }
                }
            }
        }
        self.ack(name)
    }

    fn tick(&mut self) -> Result<TickOutput> {
        let live = matches!(self.sim.scenario().gaze.source, GazeSource::Live);
        let samples = std::mem::take(&mut self.pending);
        if live {
            self.sim.step(Some(&samples))
        } else {
            self.dropped += samples.len() as u64;
            self.sim.step(None)
        }
    }
}

fn session(stream: TcpStream, scenario: Scenario) -> Result<()> {
    stream.set_nodelay(true)?;
    let (in_tx, in_rx) = mpsc::channel();
    let (out_tx, out_rx) = mpsc::channel();
    spawn_reader(stream.try_clone()?, in_tx);
    spawn_writer(stream, out_rx);

    let mut s = Session {
        sim: Simulation::new(scenario)?,
        running: false,
        pending: vec![],
        paused_gaze: vec![],
        dropped: 0,
        late: 0,
    };
    let out = |msg: ServerMessage| out_tx.send(msg).map_err(|_| Error::Io(std::io::ErrorKind::BrokenPipe.into()));
    out(hello(&s.sim))?;
    let mut next_tick = Instant::now();
    loop {
        let period = Duration::from_secs_f64(s.sim.scenario().dt());
        let wait = if s.running {
            next_tick.saturating_duration_since(Instant::now())
        } else {
            IDLE_POLL
        };
        match in_rx.recv_timeout(wait) {
            Ok(Inbound::Message(ClientMessage::Hello { schema_version })) => {
                if schema_version != PROTOCOL_VERSION {
                    out(ServerMessage::Error {
                        message: format!(
                            "unsupported schema version {schema_version} (expected {PROTOCOL_VERSION})"
                        ),
                    })?;
                    return Ok(());
                }
                out(hello(&s.sim))?;
            }
            Ok(Inbound::Message(ClientMessage::Gaze { samples })) => {
                s.on_gaze(samples);
                out(s.ack("gaze"))?;
            }
            Ok(Inbound::Message(ClientMessage::Command { command })) => {
                let was_running = s.running;
                let reply = s.on_command(command);
                if s.running && !was_running {
                    next_tick = Instant::now();
                }
                out(reply)?;
            }
            Ok(Inbound::Malformed(message)) => out(ServerMessage::Error { message })?,
            Ok(Inbound::Closed) | Err(RecvTimeoutError::Disconnected) => return Ok(()),
            Err(RecvTimeoutError::Timeout) => {}
        }
        if s.running && Instant::now() >= next_tick {
            let output = s.tick()?;
            out(ServerMessage::State(Box::new(state_message(
                &output, s.running, s.dropped, s.late,
            ))))?;
            next_tick += period;
        }
    }
}
