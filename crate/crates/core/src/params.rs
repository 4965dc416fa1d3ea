//! Protocol parameters and frame timings.

use crate::{Error, Result};

/// Contention-window ladder and pair count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ProtocolParams {
    w0: usize,
    m_stages: usize,
    n_pairs: usize,
}

impl ProtocolParams {
    /// `w0` must be a power of two >= 2, `m_stages` >= 2, `n_pairs` >= 1.
    pub fn new(w0: usize, m_stages: usize, n_pairs: usize) -> Result<Self> {
        if m_stages < 2 {
            return Err(Error::InvalidParams(format!(
                "m_stages must be at least 2, got {m_stages}"
            )));
        }
        Self::checked(w0, m_stages, n_pairs)
    }

    /// Single-stage ladder (`W_max = W0`). Only the explicit chain accepts it.
    pub fn single_stage(w0: usize, n_pairs: usize) -> Result<Self> {
        Self::checked(w0, 1, n_pairs)
    }

    fn checked(w0: usize, m_stages: usize, n_pairs: usize) -> Result<Self> {
        if w0 < 2 || !w0.is_power_of_two() {
            return Err(Error::InvalidParams(format!(
                "w0 must be a power of two >= 2, got {w0}"
            )));
        }
        if n_pairs == 0 {
            return Err(Error::InvalidParams("n_pairs must be at least 1".into()));
        }
        let max_shift = usize::BITS as usize - 1 - w0.trailing_zeros() as usize;
        if m_stages > max_shift {
            return Err(Error::InvalidParams(format!(
                "window ladder overflows: w0 = {w0}, m_stages = {m_stages}"
            )));
        }
        Ok(Self {
            w0,
            m_stages,
            n_pairs,
        })
    }

    pub fn w0(&self) -> usize {
        self.w0
    }

    pub fn m_stages(&self) -> usize {
        self.m_stages
    }

    pub fn n_pairs(&self) -> usize {
        self.n_pairs
    }

    pub fn with_n_pairs(&self, n_pairs: usize) -> Result<Self> {
        Self::checked(self.w0, self.m_stages, n_pairs)
    }

    /// `W_s = 2^s W0`.
    pub fn window(&self, stage: usize) -> usize {
        debug_assert!(stage < self.m_stages);
        self.w0 << stage
    }

    pub fn w_max(&self) -> usize {
        self.window(self.m_stages - 1)
    }

    pub fn windows(&self) -> Vec<usize> {
        (0..self.m_stages).map(|s| self.window(s)).collect()
    }

    /// Stage reached after a collision at `stage`.
    pub fn next_stage(&self, stage: usize) -> usize {
        (stage + 1).min(self.m_stages - 1)
    }
}

/// Frame and gap durations in symbol units.
///
/// `cts` is only used by the conventional CSMA/CA comparator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FrameTimings {
    pub rts: u64,
    pub cts: u64,
    pub pta: u64,
    pub sak: u64,
    pub dftrigger: u64,
    pub ack: u64,
    pub sifs: u64,
    pub difs: u64,
    pub phy_h: u64,
    pub mac_h: u64,
    pub payload: u64,
    pub slot: u64,
}

impl Default for FrameTimings {
    fn default() -> Self {
        Self {
            rts: 160,
            cts: 112,
            pta: 72,
            sak: 36,
            dftrigger: 36,
            ack: 112,
            sifs: 28,
            difs: 128,
            phy_h: 128,
            mac_h: 272,
            payload: 8184,
            slot: 50,
        }
    }
}

/// Frames and gaps on the channel, in transmission order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Rts,
    Cts,
    Pta,
    Sak,
    DfTrigger,
    Data,
    Ack,
    Sifs,
    Difs,
}

/// How a channel access ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExchangeOutcome {
    /// Superimposed data delivered.
    Success,
    /// Two or more RTS in one slot.
    Collision,
    /// The partner declined in its SAK.
    Refused,
}

impl FrameTimings {
    /// Field names accepted by the config format, in declaration order.
    pub const FIELDS: [&'static str; 12] = [
        "rts",
        "cts",
        "pta",
        "sak",
        "dftrigger",
        "ack",
        "sifs",
        "difs",
        "phy_h",
        "mac_h",
        "payload",
        "slot",
    ];

    pub fn get(&self, field: &str) -> Option<u64> {
        Some(match field {
            "rts" => self.rts,
            "cts" => self.cts,
            "pta" => self.pta,
            "sak" => self.sak,
            "dftrigger" => self.dftrigger,
            "ack" => self.ack,
            "sifs" => self.sifs,
            "difs" => self.difs,
            "phy_h" => self.phy_h,
            "mac_h" => self.mac_h,
            "payload" => self.payload,
            "slot" => self.slot,
            _ => return None,
        })
    }

    /// Returns false for an unknown field name.
    pub fn set(&mut self, field: &str, value: u64) -> bool {
        let slot = match field {
            "rts" => &mut self.rts,
            "cts" => &mut self.cts,
            "pta" => &mut self.pta,
            "sak" => &mut self.sak,
            "dftrigger" => &mut self.dftrigger,
            "ack" => &mut self.ack,
            "sifs" => &mut self.sifs,
            "difs" => &mut self.difs,
            "phy_h" => &mut self.phy_h,
            "mac_h" => &mut self.mac_h,
            "payload" => &mut self.payload,
            "slot" => &mut self.slot,
            _ => return false,
        };
        *slot = value;
        true
    }

    /// Channel-busy time of a successful exchange and of a collision.
    pub fn channel_times(&self) -> (u64, u64) {
        (self.success_time(), self.collision_time())
    }

    pub fn success_time(&self) -> u64 {
        self.duration(ExchangeOutcome::Success)
    }

    pub fn collision_time(&self) -> u64 {
        self.duration(ExchangeOutcome::Collision)
    }

    pub fn refusal_time(&self) -> u64 {
        self.duration(ExchangeOutcome::Refused)
    }

    /// RTS/CTS exchange of conventional CSMA/CA.
    pub fn baseline_channel_times(&self) -> (u64, u64) {
        let ts = self.rts
            + self.sifs
            + self.cts
            + self.sifs
            + self.phy_h
            + self.mac_h
            + self.payload
            + self.sifs
            + self.ack
            + self.difs;
        (ts, self.rts + self.difs)
    }

    /// Channel timeline of one access.
    pub fn exchange(&self, outcome: ExchangeOutcome) -> Vec<(Phase, u64)> {
        use Phase::*;
        match outcome {
            ExchangeOutcome::Collision => vec![(Rts, self.rts), (Difs, self.difs)],
            ExchangeOutcome::Refused => vec![
                (Rts, self.rts),
                (Sifs, self.sifs),
                (Pta, self.pta),
                (Sifs, self.sifs),
                (Sak, self.sak),
                (Difs, self.difs),
            ],
            ExchangeOutcome::Success => vec![
                (Rts, self.rts),
                (Sifs, self.sifs),
                (Pta, self.pta),
                (Sifs, self.sifs),
                (Sak, self.sak),
                (Sifs, self.sifs),
                (DfTrigger, self.dftrigger),
                (Sifs, self.sifs),
                (Data, self.phy_h + self.mac_h + self.payload),
                (Sifs, self.sifs),
                (Ack, self.ack),
                (Difs, self.difs),
            ],
        }
    }

    pub fn duration(&self, outcome: ExchangeOutcome) -> u64 {
        self.exchange(outcome).iter().map(|&(_, d)| d).sum()
    }

    /// Requires `T_s > T_c > 0` and a nonzero slot.
    pub fn validate(&self) -> Result<()> {
        let (ts, tc) = self.channel_times();
        if self.slot == 0 {
            return Err(Error::InvalidParams(
                "slot duration must be positive".into(),
            ));
        }
        if tc == 0 || ts <= tc {
            return Err(Error::InvalidParams(format!(
                "need T_s > T_c > 0, got T_s = {ts}, T_c = {tc}"
            )));
        }
        let (bs, bc) = self.baseline_channel_times();
        if bs <= bc {
            return Err(Error::InvalidParams(format!(
                "baseline needs T_s > T_c, got {bs} <= {bc}"
            )));
        }
        Ok(())
    }

    /// `sqrt(T_c / slot)`.
    pub fn gamma(&self) -> f64 {
        (self.collision_time() as f64 / self.slot as f64).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn windows_double() {
        let p = ProtocolParams::new(32, 4, 30).unwrap();
        assert_eq!(p.windows(), vec![32, 64, 128, 256]);
        assert_eq!(p.w_max(), 256);
        assert_eq!(p.next_stage(3), 3);
        assert_eq!(p.next_stage(1), 2);
    }

    #[test]
    fn rejects_bad_params() {
        assert!(ProtocolParams::new(3, 2, 1).is_err());
        assert!(ProtocolParams::new(1, 2, 1).is_err());
        assert!(ProtocolParams::new(4, 1, 1).is_err());
        assert!(ProtocolParams::new(4, 2, 0).is_err());
        assert!(ProtocolParams::single_stage(4, 1).is_ok());
        assert!(ProtocolParams::new(1 << 20, 60, 1).is_err());
    }

    #[test]
    fn default_channel_times() {
        let t = FrameTimings::default();
        assert_eq!(t.channel_times(), (9268, 288));
        assert_eq!(t.baseline_channel_times(), (9180, 288));
        assert!((t.gamma() - 2.4).abs() < 1e-12);
        assert_eq!(t.refusal_time(), 160 + 28 + 72 + 28 + 36 + 128);
        t.validate().unwrap();
    }

    #[test]
    fn two_term_collision() {
        let mut t = FrameTimings {
            rts: 0,
            cts: 0,
            pta: 0,
            sak: 0,
            dftrigger: 0,
            ack: 0,
            sifs: 0,
            difs: 0,
            phy_h: 0,
            mac_h: 0,
            payload: 0,
            slot: 0,
        };
        t.rts = 1;
        t.difs = 1;
        assert_eq!(t.channel_times().1, 2);
        assert!(t.validate().is_err());
    }

    #[test]
    fn ack_is_additive() {
        let t = FrameTimings::default();
        let mut u = t;
        u.ack += 10;
        assert_eq!(u.success_time(), t.success_time() + 10);
        assert_eq!(u.collision_time(), t.collision_time());
    }

    #[test]
    fn field_roundtrip() {
        let mut t = FrameTimings::default();
        for (k, f) in FrameTimings::FIELDS.iter().enumerate() {
            assert!(t.set(f, k as u64 + 1));
            assert_eq!(t.get(f), Some(k as u64 + 1));
        }
        assert!(!t.set("bogus", 1));
    }
}
