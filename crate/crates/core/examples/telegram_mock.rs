//! The chat gateway against the in-memory transport: an alert with a photo,
//! a retried send, and operator commands picked up by polling. Swap in
//! `HttpTransport` with a token from the environment to talk to the real bot
//! API.
//!
//!     cargo run --example telegram_mock

use std::path::Path;
use std::sync::Arc;

use sentinel::clock::SystemClock;
use sentinel::telegram::{
    AlertSender, CommandPoller, GatewayConfig, MockTransport, OutboundAlert, TransportError, Update,
};

fn main() {
    let mut cfg = GatewayConfig::new(4242);
    cfg.retry_backoff_s = vec![0.2, 0.5];

    let mock = MockTransport::new();
    mock.fail_next_send(TransportError::Network("connection reset".into()));
    for (id, chat, text) in [(1, 4242, "deter"), (2, 999, "deter"), (3, 4242, "what?"), (4, 4242, "STOP")] {
        mock.push_update(
            0,
            Update {
                update_id: id,
                chat_id: chat,
                text: Some(text.into()),
            },
        );
    }

    let photo = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/golden/frames/frame_02.png");
    let mut sender = AlertSender::new(cfg.clone(), Box::new(mock.clone()));
    let receipt = sender
        .send_alert(&OutboundAlert {
            text: "Elephant detected (0.91)".into(),
            photo_path: Some(photo),
            correlation_id: "alert-f002".into(),
        })
        .unwrap();
    println!("delivered {} after {} attempts", receipt.correlation_id, receipt.attempts);

    let mut poller = CommandPoller::new(cfg, Box::new(mock.clone()), Arc::new(SystemClock));
    let commands = poller.poll_with_timeout(0, &mut |_| true).unwrap();
    for c in &commands {
        println!("command {:?} from chat {}", c.verb, c.issuer);
    }
    println!("next offset {:?}", poller.offset());

    println!("\ncalls seen by the transport:");
    for call in mock.calls() {
        println!("  {}", serde_json::to_string(&call).unwrap());
    }
}
