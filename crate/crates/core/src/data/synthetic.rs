//! Topic-structured interaction logs with planted session misdivisions.
//!
//! Every user owns a small interest set of topics. Their history is a chain of
//! time blocks, each block drawing items from a single topic of the interest
//! set, never the same topic twice in a row. With probability `p_mis` the last
//! event of a block instead draws from the next block's topic while keeping a
//! timestamp inside the earlier block; a time-gap rule then puts it in the
//! wrong session.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{BehaviorSequence, InteractionEvent, RelationSchema};
use crate::error::{KastError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub users: usize,
    pub topics: usize,
    pub items_per_topic: usize,
    /// Blocks before the cutoff (the true session number).
    pub sessions_per_user: usize,
    /// Blocks at or after the cutoff.
    pub test_sessions: usize,
    pub items_per_session: usize,
    pub p_mis: f64,
    /// Inclusive range of seconds between events of one block.
    pub within_gap: (u64, u64),
    /// Inclusive range of seconds between blocks.
    pub between_gap: (u64, u64),
    pub topics_per_user: usize,
    /// Consecutive topics sharing a category id.
    pub topics_per_category: usize,
    /// Consecutive topics sharing a shop id.
    pub topics_per_shop: usize,
    /// First test block starts at or after this timestamp.
    pub cutoff: u64,
    pub relations: RelationSchema,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            users: 2000,
            topics: 40,
            items_per_topic: 25,
            sessions_per_user: 8,
            test_sessions: 1,
            items_per_session: 4,
            p_mis: 0.1,
            within_gap: (10, 600),
            between_gap: (3600, 86_400),
            topics_per_user: 4,
            topics_per_category: 4,
            topics_per_shop: 2,
            cutoff: 1_600_000_000,
            relations: "clicks,category,brand".parse().expect("static schema"),
        }
    }
}

impl SyntheticSpec {
    pub fn n_items(&self) -> usize {
        self.topics * self.items_per_topic
    }

    pub fn topic_of_item(&self, item: usize) -> usize {
        item / self.items_per_topic
    }

    pub fn category_of_topic(&self, topic: usize) -> u32 {
        (topic / self.topics_per_category) as u32
    }

    pub fn shop_of_topic(&self, topic: usize) -> u32 {
        (topic / self.topics_per_shop) as u32
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(KastError::Config(format!("synthetic spec: {m}")));
        if !(0.0..=1.0).contains(&self.p_mis) {
            return bad("p_mis must lie in [0, 1]");
        }
        if self.items_per_topic * self.topics < self.items_per_session {
            return bad("items_per_topic × topics is smaller than items_per_session");
        }
        if self.users == 0 || self.topics == 0 || self.items_per_topic == 0 || self.items_per_session == 0 {
            return bad("counts must be positive");
        }
        if self.sessions_per_user == 0 {
            return bad("sessions_per_user must be at least 1");
        }
        if self.topics_per_user < 2 || self.topics_per_user > self.topics {
            return bad("topics_per_user must lie in [2, topics]");
        }
        if self.topics_per_category == 0 || self.topics_per_shop == 0 {
            return bad("topics_per_category and topics_per_shop must be positive");
        }
        if self.within_gap.0 > self.within_gap.1 || self.between_gap.0 > self.between_gap.1 {
            return bad("gap ranges must be ordered (min, max)");
        }
        if self.within_gap.1 >= self.between_gap.0 {
            return bad("between-session gap must strictly exceed the within-session gap");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventTruth {
    /// Index of the block whose intent the event belongs to.
    pub session: usize,
    pub topic: usize,
    /// Drawn from the next block's topic but timed inside the previous block.
    pub planted: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GroundTruth {
    /// Aligned with each sequence's events.
    pub events: Vec<Vec<EventTruth>>,
    /// Block boundaries that could carry a planted event.
    pub border_events: usize,
    pub planted: usize,
}

impl GroundTruth {
    /// Sidecar CSV: `event_index,user,true_session,topic,planted`, where
    /// `event_index` is the 0-based row in the interaction file.
    pub fn write_csv(&self, seqs: &[BehaviorSequence], writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["event_index", "user", "true_session", "topic", "planted"])?;
        let mut idx = 0usize;
        for (s, truth) in seqs.iter().zip(&self.events) {
            for t in truth {
                w.write_record([
                    idx.to_string(),
                    s.user_id.to_string(),
                    t.session.to_string(),
                    t.topic.to_string(),
                    u8::from(t.planted).to_string(),
                ])?;
                idx += 1;
            }
        }
        w.flush()?;
        Ok(())
    }
}

pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<(Vec<BehaviorSequence>, GroundTruth)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let all_topics: Vec<usize> = (0..spec.topics).collect();
    let blocks = spec.sessions_per_user + spec.test_sessions;
    let mut seqs = Vec::with_capacity(spec.users);
    let mut truth = GroundTruth::default();

    for user in 0..spec.users {
        let interests: Vec<usize> = all_topics
            .choose_multiple(&mut rng, spec.topics_per_user)
            .copied()
            .collect();
        let mut topics = Vec::with_capacity(blocks);
        for b in 0..blocks {
            let t = loop {
                let t = *interests.choose(&mut rng).expect("non-empty interests");
                if b == 0 || t != topics[b - 1] {
                    break t;
                }
            };
            topics.push(t);
        }

        let mut items = Vec::new();
        let mut times = Vec::new();
        let mut user_truth = Vec::new();
        let mut clock: u64 = 0;
        let mut test_start = 0;
        for (b, &topic) in topics.iter().enumerate() {
            if b > 0 {
                clock += rng.gen_range(spec.between_gap.0..=spec.between_gap.1);
            }
            if b == spec.sessions_per_user {
                test_start = clock;
            }
            let chosen = draw_items(spec, topic, spec.items_per_session, &mut rng);
            let plant = b + 1 < blocks && rng.gen_bool(spec.p_mis);
            if b + 1 < blocks {
                truth.border_events += 1;
            }
            for (j, item) in chosen.into_iter().enumerate() {
                if j > 0 {
                    clock += rng.gen_range(spec.within_gap.0..=spec.within_gap.1);
                }
                let last = j + 1 == spec.items_per_session;
                if plant && last {
                    let next = topics[b + 1];
                    items.push(draw_items(spec, next, 1, &mut rng)[0]);
                    user_truth.push(EventTruth {
                        session: b + 1,
                        topic: next,
                        planted: true,
                    });
                    truth.planted += 1;
                } else {
                    items.push(item);
                    user_truth.push(EventTruth {
                        session: b,
                        topic,
                        planted: false,
                    });
                }
                times.push(clock);
            }
        }
        let jitter = rng.gen_range(0..spec.between_gap.0.max(1));
        let anchor = if spec.test_sessions > 0 {
            test_start
        } else {
            clock + spec.between_gap.0
        };
        let offset = (spec.cutoff + jitter)
            .checked_sub(anchor)
            .ok_or_else(|| KastError::Config("cutoff too small for the generated timeline".into()))?;

        let events = items
            .iter()
            .zip(&times)
            .map(|(&item, &t)| {
                let topic = spec.topic_of_item(item);
                InteractionEvent::new(user, item, t + offset, 1)
                    .with_attr("category", spec.category_of_topic(topic))
                    .with_attr("shop", spec.shop_of_topic(topic))
                    .with_attr("brand", topic as u32)
            })
            .collect();
        seqs.push(BehaviorSequence::new(user, events)?);
        truth.events.push(user_truth);
    }
    Ok((seqs, truth))
}

/// Distinct items of `topic` when the topic is large enough, else with repeats.
fn draw_items(spec: &SyntheticSpec, topic: usize, n: usize, rng: &mut impl Rng) -> Vec<usize> {
    let base = topic * spec.items_per_topic;
    if n <= spec.items_per_topic {
        rand::seq::index::sample(rng, spec.items_per_topic, n)
            .into_iter()
            .map(|j| base + j)
            .collect()
    } else {
        (0..n).map(|_| base + rng.gen_range(0..spec.items_per_topic)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SyntheticSpec {
        SyntheticSpec {
            users: 50,
            ..SyntheticSpec::default()
        }
    }

    #[test]
    fn deterministic_for_seed() {
        let a = generate_synthetic(&small(), 3).unwrap();
        let b = generate_synthetic(&small(), 3).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic(&small(), 4).unwrap();
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn test_blocks_start_after_cutoff() {
        let spec = small();
        let (seqs, truth) = generate_synthetic(&spec, 1).unwrap();
        for (s, t) in seqs.iter().zip(&truth.events) {
            for (e, et) in s.events.iter().zip(t) {
                let timed_block = if et.planted { et.session - 1 } else { et.session };
                assert_eq!(e.timestamp >= spec.cutoff, timed_block >= spec.sessions_per_user);
            }
        }
    }

    #[test]
    fn blocks_never_repeat_a_topic() {
        let (_, truth) = generate_synthetic(&small(), 9).unwrap();
        for t in &truth.events {
            let mut block_topic = std::collections::BTreeMap::new();
            for et in t {
                block_topic.insert(et.session, et.topic);
            }
            let v: Vec<_> = block_topic.values().collect();
            assert!(v.windows(2).all(|w| w[0] != w[1]));
        }
    }

    #[test]
    fn infeasible_spec_is_rejected() {
        let spec = SyntheticSpec {
            topics: 1,
            items_per_topic: 2,
            items_per_session: 3,
            ..small()
        };
        assert!(generate_synthetic(&spec, 0).is_err());
        let spec = SyntheticSpec {
            within_gap: (10, 5000),
            between_gap: (5000, 6000),
            ..small()
        };
        assert!(generate_synthetic(&spec, 0).is_err());
    }

    #[test]
    fn zero_rate_plants_nothing() {
        let spec = SyntheticSpec { p_mis: 0.0, ..small() };
        let (_, truth) = generate_synthetic(&spec, 2).unwrap();
        assert_eq!(truth.planted, 0);
    }
}
