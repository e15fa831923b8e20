//! Majority-vote consensus over policy-engine decisions.
//!
//! A round over `n` configured engines decides an outcome as soon as strictly
//! more than half of them — `⌊n/2⌋ + 1` — vote for it, and fails as soon as
//! no outcome can still reach that threshold (too many abstentions, or a
//! split). The threshold is counted against the *configured* engine count,
//! never against however many happened to answer: silent engines can only
//! hurt, never help, an outcome.

use serde::Serialize;

use crate::model::{Outcome, RequestId};

/// Votes required to decide among `engine_count` engines: strictly more than
/// half.
pub fn majority_threshold(engine_count: usize) -> usize {
    engine_count / 2 + 1
}

/// Where a round stands after each recorded vote.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RoundStatus {
    /// Still collecting votes.
    Open,
    /// An outcome reached the majority threshold. Final.
    Decided(Outcome),
    /// No outcome can reach the threshold anymore. Final.
    Failed,
}

/// A single consensus round. Feed it votes and abstentions as they arrive;
/// it reports the status transition after each one. Final states are sticky:
/// anything recorded afterwards is ignored.
#[derive(Debug, Clone)]
pub struct ConsensusRound {
    request_id: RequestId,
    engine_count: usize,
    threshold: usize,
    grants: usize,
    rejects: usize,
    abstentions: usize,
    status: RoundStatus,
}

impl ConsensusRound {
    /// Starts a round over `engine_count` configured engines.
    /// `engine_count` must be positive — a deployment with no engines cannot
    /// open rounds at all.
    pub fn new(request_id: RequestId, engine_count: usize) -> Self {
        assert!(engine_count > 0, "consensus requires at least one engine");
        Self {
            request_id,
            engine_count,
            threshold: majority_threshold(engine_count),
            grants: 0,
            rejects: 0,
            abstentions: 0,
            status: RoundStatus::Open,
        }
    }

    pub fn request_id(&self) -> &RequestId {
        &self.request_id
    }

    pub fn engine_count(&self) -> usize {
        self.engine_count
    }

    pub fn threshold(&self) -> usize {
        self.threshold
    }

    pub fn status(&self) -> RoundStatus {
        self.status
    }

    pub fn votes_recorded(&self) -> usize {
        self.grants + self.rejects
    }

    pub fn abstentions(&self) -> usize {
        self.abstentions
    }

    /// True if not a single vote arrived — a dead fleet rather than a split
    /// vote. (A round can fail early before the last silence is recorded, so
    /// this does not require `abstentions == engine_count`.)
    pub fn all_abstained(&self) -> bool {
        self.grants + self.rejects == 0 && self.abstentions > 0
    }

    /// Records one engine's vote and returns the resulting status.
    pub fn record_vote(&mut self, outcome: Outcome) -> RoundStatus {
        if self.status != RoundStatus::Open {
            return self.status;
        }
        match outcome {
            Outcome::Grant => self.grants += 1,
            Outcome::Reject => self.rejects += 1,
        }
        self.reassess()
    }

    /// Records an engine that will never vote (timeout, crash, error).
    pub fn record_abstention(&mut self) -> RoundStatus {
        if self.status != RoundStatus::Open {
            return self.status;
        }
        self.abstentions += 1;
        self.reassess()
    }

    fn reassess(&mut self) -> RoundStatus {
        debug_assert!(
            self.grants + self.rejects + self.abstentions <= self.engine_count,
            "more responses than engines"
        );
        let remaining = self.engine_count - self.grants - self.rejects - self.abstentions;
        // A grant and a reject majority are mutually exclusive:
        // 2·(⌊n/2⌋+1) > n, so at most one branch can trigger.
        if self.grants >= self.threshold {
            self.status = RoundStatus::Decided(Outcome::Grant);
        } else if self.rejects >= self.threshold {
            self.status = RoundStatus::Decided(Outcome::Reject);
        } else if self.grants + remaining < self.threshold
            && self.rejects + remaining < self.threshold
        {
            self.status = RoundStatus::Failed;
        }
        self.status
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn round(n: usize) -> ConsensusRound {
        ConsensusRound::new(RequestId("r".into()), n)
    }

    /// Order-independent oracle: given final response counts, what must the
    /// round conclude?
    fn oracle(n: usize, grants: usize, rejects: usize) -> RoundStatus {
        let t = majority_threshold(n);
        if grants >= t {
            RoundStatus::Decided(Outcome::Grant)
        } else if rejects >= t {
            RoundStatus::Decided(Outcome::Reject)
        } else {
            RoundStatus::Failed
        }
    }

    #[test]
    fn threshold_is_strict_majority() {
        let expect: &[(usize, usize)] = &[(1, 1), (2, 2), (3, 2), (4, 3), (5, 3), (7, 4), (12, 7)];
        for &(n, t) in expect {
            assert_eq!(majority_threshold(n), t, "n={n}");
            // Strictly more than half, minimally so.
            assert!(2 * t > n);
            assert!(2 * (t - 1) <= n);
        }
    }

    #[test]
    fn decides_at_threshold_not_before() {
        let mut r = round(5);
        assert_eq!(r.record_vote(Outcome::Grant), RoundStatus::Open);
        assert_eq!(r.record_vote(Outcome::Reject), RoundStatus::Open);
        assert_eq!(r.record_vote(Outcome::Grant), RoundStatus::Open);
        assert_eq!(r.record_vote(Outcome::Grant), RoundStatus::Decided(Outcome::Grant));
        assert_eq!(r.votes_recorded(), 4);
    }

    #[test]
    fn final_states_are_sticky() {
        let mut r = round(3);
        r.record_vote(Outcome::Reject);
        r.record_vote(Outcome::Reject);
        assert_eq!(r.status(), RoundStatus::Decided(Outcome::Reject));
        // A late grant cannot reopen or flip the round.
        assert_eq!(r.record_vote(Outcome::Grant), RoundStatus::Decided(Outcome::Reject));
        assert_eq!(r.record_abstention(), RoundStatus::Decided(Outcome::Reject));
    }

    #[test]
    fn abstentions_never_count_toward_threshold() {
        // 2 grants out of 5 engines with 3 abstentions: grant lacks majority
        // of the configured fleet, so the round fails rather than deciding.
        let mut r = round(5);
        r.record_vote(Outcome::Grant);
        r.record_vote(Outcome::Grant);
        r.record_abstention();
        r.record_abstention();
        assert_eq!(r.status(), RoundStatus::Open);
        assert_eq!(r.record_abstention(), RoundStatus::Failed);
    }

    #[test]
    fn fails_early_once_no_majority_is_reachable() {
        // n=4, t=3: after 2-2 split the round is mathematically dead even
        // though zero engines abstained.
        let mut r = round(4);
        r.record_vote(Outcome::Grant);
        r.record_vote(Outcome::Reject);
        r.record_vote(Outcome::Grant);
        assert_eq!(r.status(), RoundStatus::Open);
        assert_eq!(r.record_vote(Outcome::Reject), RoundStatus::Failed);
    }

    #[test]
    fn single_engine_decides_alone() {
        let mut r = round(1);
        assert_eq!(r.record_vote(Outcome::Reject), RoundStatus::Decided(Outcome::Reject));
        let mut r = round(1);
        assert_eq!(r.record_abstention(), RoundStatus::Failed);
        assert!(r.all_abstained());
    }

    /// Replays every possible response sequence (grant/reject/abstain per
    /// engine, all orderings) for fleets up to 7 engines and checks three
    /// properties against the counting oracle:
    ///   1. the final status matches the oracle for the response multiset;
    ///   2. once a final status appears it never changes (early termination
    ///      is sound: pending responses cannot flip a decision);
    ///   3. the round never finishes Open after all engines responded.
    #[test]
    fn exhaustive_sequences_match_counting_oracle() {
        for n in 1..=7usize {
            for combo in 0..3u32.pow(n as u32) {
                let mut responses = Vec::with_capacity(n);
                let mut code = combo;
                for _ in 0..n {
                    responses.push(code % 3);
                    code /= 3;
                }

                let mut r = round(n);
                let mut first_final: Option<(usize, RoundStatus)> = None;
                for (i, &resp) in responses.iter().enumerate() {
                    let status = match resp {
                        0 => r.record_vote(Outcome::Grant),
                        1 => r.record_vote(Outcome::Reject),
                        _ => r.record_abstention(),
                    };
                    if status != RoundStatus::Open && first_final.is_none() {
                        first_final = Some((i, status));
                    }
                }

                let grants = responses.iter().filter(|&&x| x == 0).count();
                let rejects = responses.iter().filter(|&&x| x == 1).count();
                let expected = oracle(n, grants, rejects);

                let (_, final_status) =
                    first_final.unwrap_or_else(|| panic!("n={n} combo={combo} never finalized"));
                assert_eq!(final_status, expected, "n={n} combo={combo}");
                assert_eq!(r.status(), expected, "n={n} combo={combo} drifted after finality");
            }
        }
    }

    /// Early termination must also be *stable*: at the moment a round
    /// decides, no completion of the remaining responses may reach the
    /// opposite majority. Verified by brute force over all prefixes.
    #[test]
    fn early_decisions_cannot_be_overturned_by_any_completion() {
        for n in 1..=7usize {
            let t = majority_threshold(n);
            for combo in 0..3u32.pow(n as u32) {
                let mut r = round(n);
                let mut code = combo;
                for i in 0..n {
                    let resp = code % 3;
                    code /= 3;
                    let status = match resp {
                        0 => r.record_vote(Outcome::Grant),
                        1 => r.record_vote(Outcome::Reject),
                        _ => r.record_abstention(),
                    };
                    if let RoundStatus::Decided(outcome) = status {
                        let remaining = n - i - 1;
                        let opposing = match outcome {
                            Outcome::Grant => r.rejects,
                            Outcome::Reject => r.grants,
                        };
                        assert!(
                            opposing + remaining < t,
                            "n={n} combo={combo}: opposite outcome still reachable"
                        );
                        break;
                    }
                }
            }
        }
    }
}
