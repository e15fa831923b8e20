//! Minimal in-process topic broker for asynchronous validation results.
//!
//! The administrator publishes each async outcome on a per-request topic; the
//! enforcement point subscribes before initiating validation, so delivery
//! cannot be lost to ordering. Messages are retained per topic: a subscriber
//! arriving after the publish still receives the last message, which removes
//! the race entirely.

use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Mutex;

use thiserror::Error;
use tokio::sync::mpsc;

/// The broker refused an operation because it is offline (fault injection).
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("message broker unavailable")]
pub struct BrokerUnavailable;

struct Topic<T> {
    senders: Vec<mpsc::UnboundedSender<T>>,
    retained: Option<T>,
}

impl<T> Default for Topic<T> {
    fn default() -> Self {
        Self { senders: Vec::new(), retained: None }
    }
}

/// Topic-based publish/subscribe with per-topic retained messages.
pub struct MessageBroker<T> {
    topics: Mutex<HashMap<String, Topic<T>>>,
    available: AtomicBool,
    published: AtomicU64,
}

impl<T> Default for MessageBroker<T> {
    fn default() -> Self {
        Self {
            topics: Mutex::new(HashMap::new()),
            available: AtomicBool::new(true),
            published: AtomicU64::new(0),
        }
    }
}

impl<T> std::fmt::Debug for MessageBroker<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MessageBroker")
            .field("available", &self.available.load(Ordering::SeqCst))
            .field("published", &self.published.load(Ordering::SeqCst))
            .finish()
    }
}

impl<T: Clone + Send + 'static> MessageBroker<T> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Subscribes to a topic. If a message was already published there, it is
    /// delivered to this subscription immediately.
    pub fn subscribe(&self, topic: &str) -> Subscription<T> {
        let (tx, rx) = mpsc::unbounded_channel();
        let mut topics = self.topics.lock().unwrap();
        let entry = topics.entry(topic.to_owned()).or_default();
        if let Some(retained) = &entry.retained {
            let _ = tx.send(retained.clone());
        }
        entry.senders.push(tx);
        Subscription { rx }
    }

    /// Publishes to a topic, retaining the message for late subscribers.
    /// Returns how many live subscriptions received it.
    pub fn publish(&self, topic: &str, message: T) -> Result<usize, BrokerUnavailable> {
        if !self.available.load(Ordering::SeqCst) {
            return Err(BrokerUnavailable);
        }
        let mut topics = self.topics.lock().unwrap();
        let entry = topics.entry(topic.to_owned()).or_default();
        entry.senders.retain(|tx| tx.send(message.clone()).is_ok());
        let delivered = entry.senders.len();
        entry.retained = Some(message);
        self.published.fetch_add(1, Ordering::SeqCst);
        Ok(delivered)
    }

    /// Drops a topic and its retained message once nobody needs it anymore.
    pub fn retire_topic(&self, topic: &str) {
        self.topics.lock().unwrap().remove(topic);
    }

    /// Fault-injection hook: an offline broker rejects publishes.
    pub fn set_available(&self, available: bool) {
        self.available.store(available, Ordering::SeqCst);
    }

    pub fn published_count(&self) -> u64 {
        self.published.load(Ordering::SeqCst)
    }
}

/// Receiving end of one subscription.
#[derive(Debug)]
pub struct Subscription<T> {
    rx: mpsc::UnboundedReceiver<T>,
}

impl<T> Subscription<T> {
    /// Next message on the topic; `None` if the broker dropped the topic.
    pub async fn recv(&mut self) -> Option<T> {
        self.rx.recv().await
    }

    pub fn try_recv(&mut self) -> Option<T> {
        self.rx.try_recv().ok()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[tokio::test]
    async fn delivers_to_live_subscribers() {
        let broker = MessageBroker::new();
        let mut sub_a = broker.subscribe("results.r1");
        let mut sub_b = broker.subscribe("results.r1");
        let mut other = broker.subscribe("results.r2");

        let delivered = broker.publish("results.r1", 7u32).unwrap();
        assert_eq!(delivered, 2);
        assert_eq!(sub_a.recv().await, Some(7));
        assert_eq!(sub_b.recv().await, Some(7));
        assert_eq!(other.try_recv(), None);
    }

    #[tokio::test]
    async fn retained_message_reaches_late_subscriber() {
        let broker = MessageBroker::new();
        broker.publish("results.r9", "done".to_owned()).unwrap();
        let mut late = broker.subscribe("results.r9");
        assert_eq!(late.recv().await.as_deref(), Some("done"));
    }

    #[tokio::test]
    async fn offline_broker_rejects_publish() {
        let broker = MessageBroker::new();
        let mut sub = broker.subscribe("t");
        broker.set_available(false);
        assert_eq!(broker.publish("t", 1u8), Err(BrokerUnavailable));
        broker.set_available(true);
        broker.publish("t", 2u8).unwrap();
        assert_eq!(sub.recv().await, Some(2));
    }

    #[tokio::test]
    async fn dropped_subscriptions_are_pruned() {
        let broker = MessageBroker::new();
        let sub = broker.subscribe("t");
        drop(sub);
        assert_eq!(broker.publish("t", 1u8).unwrap(), 0);
        assert_eq!(broker.published_count(), 1);
    }
}
