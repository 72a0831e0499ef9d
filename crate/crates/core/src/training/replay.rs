//! FIFO replay of recorded episodes, sampled uniformly by branching step.

use std::collections::VecDeque;
use std::sync::Arc;

use rand::Rng;

use crate::bnb::EpisodeRecord;

#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    episodes: VecDeque<Arc<EpisodeRecord>>,
    steps: usize,
}

impl ReplayBuffer {
    /// `capacity` counts branching steps.
    pub fn new(capacity: usize) -> Self {
        ReplayBuffer {
            capacity,
            episodes: VecDeque::new(),
            steps: 0,
        }
    }

    pub fn len_steps(&self) -> usize {
        self.steps
    }

    pub fn len_episodes(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps == 0
    }

    /// Add an episode, evicting the oldest ones past capacity. Episodes
    /// without branching steps are ignored.
    pub fn push(&mut self, episode: Arc<EpisodeRecord>) {
        if episode.steps.is_empty() {
            return;
        }
        self.steps += episode.steps.len();
        self.episodes.push_back(episode);
        while self.steps > self.capacity && self.episodes.len() > 1 {
            let old = self.episodes.pop_front().expect("nonempty");
            self.steps -= old.steps.len();
        }
    }

    /// Uniform over stored steps: `(episode, step index)`.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Option<(Arc<EpisodeRecord>, usize)> {
        if self.steps == 0 {
            return None;
        }
        let mut k = rng.random_range(0..self.steps);
        for ep in &self.episodes {
            if k < ep.steps.len() {
                return Some((Arc::clone(ep), k));
            }
            k -= ep.steps.len();
        }
        unreachable!("step index within stored total")
    }

    pub fn episodes(&self) -> impl Iterator<Item = &Arc<EpisodeRecord>> {
        self.episodes.iter()
    }
}
