#![allow(dead_code)]

use std::net::SocketAddr;
use std::time::Duration;

use fpgavirt_core::bisim::{engine_registers, transformed, Case, Observed};
use fpgavirt_core::host::TaskEffect;
use fpgavirt_core::runtime::Runtime;
use fpgavirt_core::transform::compile_source;
use fpgavirt_hypervisor::{Config, DeviceModel, Hypervisor, RemoteConnector, RemoteEngine};

pub fn config() -> Config {
    let mut device = DeviceModel::default();
    device.compile_latency = Duration::from_millis(20);
    device.cycle_rate = None;
    Config {
        device,
        handshake_timeout: Duration::from_secs(20),
        ..Config::default()
    }
}

pub fn start(cfg: Config) -> Hypervisor {
    Hypervisor::start("127.0.0.1:0", cfg).unwrap()
}

pub fn remote_runtime(addr: SocketAddr, case: &Case) -> Runtime {
    let compiled = compile_source(&case.source, None).unwrap();
    let engine = RemoteEngine::connect(addr, &case.source).unwrap();
    Runtime::new(compiled, Box::new(engine), case.host(), case.stimulus.clone(), None)
        .unwrap()
        .with_connector(Box::new(RemoteConnector::new(case.source.clone())))
}

pub fn finish(rt: &mut Runtime, case: &Case) -> Observed {
    let s = rt.run(case.max_ticks).unwrap_or_else(|e| panic!("{}: {e}", case.name));
    let compiled = rt.compiled().clone();
    let registers = engine_registers(&compiled, rt.engine()).unwrap();
    Observed {
        ticks: s.ticks,
        finished: s.finished,
        trace: std::mem::take(&mut rt.host.trace),
        registers,
    }
}

pub fn remote(addr: SocketAddr, case: &Case) -> Observed {
    let mut rt = remote_runtime(addr, case);
    rt.load().unwrap();
    finish(&mut rt, case)
}

pub fn local(case: &Case) -> Observed {
    let c = compile_source(&case.source, None).unwrap();
    transformed(case, &c).unwrap().0
}

pub fn displays(o: &Observed) -> Vec<String> {
    o.trace
        .iter()
        .filter_map(|t| match &t.effect {
            TaskEffect::Display(s) => Some(s.clone()),
            _ => None,
        })
        .collect()
}
