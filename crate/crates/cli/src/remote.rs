use std::net::SocketAddr;

use anyhow::{Context, Result};
use motion_compose::compose::StitchConfig;
use motion_compose::io::write_atomic;
use motion_compose::model::Prompt;
use motion_compose_client::Client;
use motion_compose_server::ServerConfig;

use crate::local::read_json;
use crate::{ServeArgs, SessionCommand};

pub async fn serve(a: ServeArgs) -> Result<()> {
    let config = ServerConfig {
        checkpoint: a.checkpoint,
        addr: SocketAddr::new(a.host, a.port),
        session_dir: a.session_dir,
        seed: a.seed,
        stitch: StitchConfig { slerp_frames: a.slerp_frames, mode: a.stitch_mode },
    };
    motion_compose_server::serve(config).await
}

pub async fn session(command: SessionCommand) -> Result<()> {
    match command {
        SessionCommand::New { remote, seed } => {
            let created = Client::new(remote.url).create_session(seed).await?;
            println!("{}", created.id);
        }
        SessionCommand::Append { remote, id, text, duration, idempotency_key } => {
            let out = Client::new(remote.url).append(&id, &text, duration, idempotency_key.as_deref()).await?;
            println!("[{}, {})", out.span.start, out.span.end);
        }
        SessionCommand::Show { remote, id } => {
            let info = Client::new(remote.url).info(&id).await?;
            println!("{}", serde_json::to_string_pretty(&info)?);
        }
        SessionCommand::Export { remote, id, out } => {
            let bytes = Client::new(remote.url).motion_bytes(&id).await?;
            write_atomic(&out, &bytes)?;
        }
        SessionCommand::Delete { remote, id } => Client::new(remote.url).delete(&id).await?,
        SessionCommand::Run { remote, prompts, out, seed } => {
            let prompts: Vec<Prompt> = read_json(&prompts)?;
            let client = Client::new(remote.url);
            let id = client.create_session(seed).await?.id;
            for (i, p) in prompts.iter().enumerate() {
                let key = format!("{id}-{i}");
                let o = client
                    .append(&id, &p.text, p.duration_s, Some(&key))
                    .await
                    .with_context(|| format!("appending {:?}", p.text))?;
                println!("[{}, {}) {}", o.span.start, o.span.end, p.text);
            }
            write_atomic(&out, &client.motion_bytes(&id).await?)?;
            println!("{id}");
        }
    }
    Ok(())
}
