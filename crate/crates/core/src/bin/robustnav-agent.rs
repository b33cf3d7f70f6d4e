//! Reference external agent speaking the wire protocol over stdio or TCP.

use std::io::{BufReader, Write};
use std::net::TcpStream;

use anyhow::{Context, Result};
use clap::{Parser, ValueEnum};

use robustnav::agents::{depth_columns, greedy_rule};
use robustnav::dynamics::Action;
use robustnav::protocol::{run_client, ClientSession};
use robustnav::task::Observation;
use robustnav::Error;

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum Policy {
    /// Call `end` immediately.
    End,
    /// Greedy rule on depth and gps_compass.
    DepthPlanner,
}

#[derive(Parser)]
#[command(name = "robustnav-agent", version)]
struct Args {
    #[arg(long, value_enum, default_value = "depth_planner")]
    policy: Policy,
    /// Connect to a listening server instead of using stdio.
    #[arg(long)]
    connect: Option<String>,
}

fn act(policy: Policy, obs: &Observation) -> robustnav::Result<Action> {
    match policy {
        Policy::End => Ok(Action::End),
        Policy::DepthPlanner => {
            let gps = obs
                .gps_compass
                .ok_or_else(|| Error::Protocol("depth_planner needs gps_compass".into()))?;
            Ok(greedy_rule(gps, &depth_columns(obs)?))
        }
    }
}

fn serve(reader: impl std::io::BufRead, writer: impl Write, policy: Policy) -> Result<()> {
    let mut session = ClientSession::new(reader, writer);
    run_client(&mut session, |obs| act(policy, obs))?;
    Ok(())
}

fn main() -> Result<()> {
    let args = Args::parse();
    match &args.connect {
        Some(addr) => {
            let stream = TcpStream::connect(addr).with_context(|| format!("connecting to {addr}"))?;
            let reader = BufReader::new(stream.try_clone()?);
            serve(reader, stream, args.policy)
        }
        None => serve(std::io::stdin().lock(), std::io::stdout().lock(), args.policy),
    }
}
