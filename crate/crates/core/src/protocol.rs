//! The Linear MIMD rate rule for a single connection.
//!
//! During the first `δ+1` rounds a source sends its start rate. After that,
//! the rate in round `t` is the rate of round `t-1-δ` scaled by
//! `1 + α - β·lsr(t-1)`, where `lsr(t-1)` is the loss fraction of the cohort
//! whose fate became known in round `t-1`. Each of the `δ+1` residues of
//! `t mod (δ+1)` therefore evolves as its own multiplicative thread; all of
//! them live in one flat history.

use crate::error::ProtocolError;
use crate::model::{ConnectionSpec, Round};

/// Float residue forgiven when a cohort appears to receive more than it sent.
pub const LSR_CLAMP_TOLERANCE: f64 = 1e-12;

/// Per-connection protocol state: what the source sent and the loss
/// fractions it has observed so far.
#[derive(Debug, Clone)]
pub struct PathState {
    start: Round,
    end: Round,
    delay: u64,
    start_rate: f64,
    alpha: f64,
    beta: f64,
    /// `sent[t - start]`, filled in round order.
    sent: Vec<f64>,
    /// `lsr[t - start - delay]`, filled in round order.
    lsr: Vec<f64>,
}

impl PathState {
    pub fn new(conn: &ConnectionSpec) -> Self {
        let len = conn.duration() as usize;
        PathState {
            start: conn.start,
            end: conn.end,
            delay: u64::from(conn.total_delay),
            start_rate: conn.start_rate,
            alpha: conn.alpha,
            beta: conn.beta,
            sent: Vec::with_capacity(len),
            lsr: Vec::with_capacity(len),
        }
    }

    fn warmup_last(&self) -> Round {
        (self.start + self.delay).min(self.end)
    }

    /// Rate during the warm-up rounds `start..=start+δ`.
    pub fn initial_rate(&self, t: Round) -> Result<f64, ProtocolError> {
        if t < self.start || t > self.start + self.delay {
            return Err(ProtocolError::OutsideWarmup {
                round: t,
                first: self.start,
                last: self.start + self.delay,
            });
        }
        Ok(self.start_rate)
    }

    /// Rate for a round after warm-up, from the delayed history.
    pub fn update_rate(&self, t: Round) -> Result<f64, ProtocolError> {
        let first = self.start + self.delay + 1;
        if t < first || t > self.end {
            return Err(ProtocolError::OutsideUpdate {
                round: t,
                first,
                last: self.end,
            });
        }
        let base = self
            .sent(t - 1 - self.delay)
            .ok_or(ProtocolError::MissingSent(t - 1 - self.delay))?;
        let lsr = self
            .lsr(t - 1)
            .ok_or(ProtocolError::MissingFeedback(t - 1))?;
        mimd_step(base, self.alpha, self.beta, lsr)
    }

    /// Rate for round `t`, choosing warm-up or update as the schedule says,
    /// and appends it to the history. Rounds must be presented in order.
    pub fn send(&mut self, t: Round) -> Result<f64, ProtocolError> {
        let rate = if t <= self.warmup_last() {
            self.initial_rate(t)?
        } else {
            self.update_rate(t)?
        };
        debug_assert_eq!(self.sent.len() as u64, t - self.start);
        self.sent.push(rate);
        Ok(rate)
    }

    /// Records that `rcvd` of the cohort sent in round `t - δ` arrived in
    /// round `t`, and returns the observed loss fraction.
    pub fn record_feedback(&mut self, t: Round, rcvd: f64) -> Result<f64, ProtocolError> {
        let send_round = t
            .checked_sub(self.delay)
            .ok_or(ProtocolError::MissingSent(0))?;
        let sent = self
            .sent(send_round)
            .ok_or(ProtocolError::MissingSent(send_round))?;
        let lsr = loss_ratio(sent, rcvd, t)?;
        debug_assert_eq!(self.lsr.len() as u64, t - self.start - self.delay);
        self.lsr.push(lsr);
        Ok(lsr)
    }

    pub fn sent(&self, t: Round) -> Option<f64> {
        t.checked_sub(self.start)
            .and_then(|i| self.sent.get(i as usize))
            .copied()
    }

    pub fn lsr(&self, t: Round) -> Option<f64> {
        t.checked_sub(self.start + self.delay)
            .and_then(|i| self.lsr.get(i as usize))
            .copied()
    }

    pub fn sent_history(&self) -> &[f64] {
        &self.sent
    }

    pub fn lsr_history(&self) -> &[f64] {
        &self.lsr
    }
}

/// `base · (1 + α − β·lsr)`.
pub fn mimd_step(base: f64, alpha: f64, beta: f64, lsr: f64) -> Result<f64, ProtocolError> {
    if !(0.0..=1.0).contains(&lsr) {
        return Err(ProtocolError::LossRatioOutOfRange(lsr));
    }
    Ok(base * (1.0 + alpha - beta * lsr))
}

/// `(sent − rcvd) / sent`, forgiving float residue up to
/// [`LSR_CLAMP_TOLERANCE`] relative to `sent`.
pub fn loss_ratio(sent: f64, rcvd: f64, round: Round) -> Result<f64, ProtocolError> {
    if rcvd < 0.0 {
        return Err(ProtocolError::NegativeReceived(rcvd));
    }
    if rcvd > sent * (1.0 + LSR_CLAMP_TOLERANCE) {
        return Err(ProtocolError::ReceivedExceedsSent { round, rcvd, sent });
    }
    Ok(((sent - rcvd) / sent).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn conn(start_rate: f64, delay: u32, len: u64) -> ConnectionSpec {
        ConnectionSpec {
            id: "p".into(),
            route: vec!["r".into()],
            value: 1.0,
            start: 10,
            end: 10 + len - 1,
            total_delay: delay,
            hop_delays: vec![0],
            start_rate,
            alpha: 0.01,
            beta: 0.1,
        }
    }

    #[test]
    fn warmup_rate_is_start_rate() {
        let st = PathState::new(&conn(5.0, 2, 20));
        assert_eq!(st.initial_rate(10), Ok(5.0));
        assert_eq!(st.initial_rate(12), Ok(5.0));
        assert!(matches!(
            st.initial_rate(13),
            Err(ProtocolError::OutsideWarmup { .. })
        ));
        assert!(st.initial_rate(9).is_err());
    }

    #[test]
    fn update_examples() {
        assert!((mimd_step(100.0, 0.01, 0.1, 0.0).unwrap() - 101.0).abs() < 1e-12);
        assert!((mimd_step(100.0, 0.01, 0.1, 1.0).unwrap() - 91.0).abs() < 1e-12);
        let fixed = mimd_step(37.5, 0.01, 0.1, 0.01 / 0.1).unwrap();
        assert!((fixed - 37.5).abs() < 1e-12);
        assert_eq!(
            mimd_step(1.0, 0.01, 0.1, 1.5),
            Err(ProtocolError::LossRatioOutOfRange(1.5))
        );
    }

    #[test]
    fn feedback_examples() {
        assert_eq!(loss_ratio(100.0, 100.0, 0), Ok(0.0));
        assert!((loss_ratio(100.0, 70.0, 0).unwrap() - 0.3).abs() < 1e-15);
        assert_eq!(loss_ratio(100.0, 100.0 + 1e-13, 0), Ok(0.0));
        assert!(matches!(
            loss_ratio(100.0, 100.1, 4),
            Err(ProtocolError::ReceivedExceedsSent { round: 4, .. })
        ));
        assert_eq!(
            loss_ratio(100.0, -1.0, 0),
            Err(ProtocolError::NegativeReceived(-1.0))
        );
    }

    #[test]
    fn update_uses_delayed_history() {
        // delay 1: rounds 10, 11 are warm-up; round 12 scales round 10 by the
        // feedback that arrived in round 11.
        let mut st = PathState::new(&conn(4.0, 1, 10));
        assert_eq!(st.send(10), Ok(4.0));
        assert_eq!(st.send(11), Ok(4.0));
        assert_eq!(st.update_rate(12), Err(ProtocolError::MissingFeedback(11)));
        st.record_feedback(11, 3.0).unwrap(); // lsr 0.25
        let r = st.send(12).unwrap();
        assert!((r - 4.0 * (1.0 + 0.01 - 0.1 * 0.25)).abs() < 1e-12);
        assert_eq!(st.sent(12), Some(r));
        assert_eq!(st.lsr(11), Some(0.25));
        assert_eq!(st.sent(9), None);
    }

    #[test]
    fn short_connection_sends_start_rate_throughout() {
        let mut st = PathState::new(&conn(2.0, 5, 3));
        for t in 10..13 {
            assert_eq!(st.send(t), Ok(2.0));
        }
    }

    proptest! {
        #[test]
        fn multiplier_stays_in_band(
            base in 1e-6f64..1e6,
            beta in 0.01f64..0.99,
            frac in 0.01f64..0.99,
            lsr in 0.0f64..=1.0,
        ) {
            let alpha = beta * frac;
            let next = mimd_step(base, alpha, beta, lsr).unwrap();
            let ratio = next / base;
            prop_assert!(ratio >= 1.0 + alpha - beta - 1e-12);
            prop_assert!(ratio <= 1.0 + alpha + 1e-12);
            prop_assert!(next > 0.0);
        }
    }
}
