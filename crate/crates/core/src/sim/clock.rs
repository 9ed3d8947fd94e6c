//! Local clocks: a constant offset before τ, another one (|c| ≤ ρ) after.
//! Intervals are measured exactly, so timers fire after their virtual delay.

use rand::Rng;

use crate::types::Time;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Clock {
    pub gst: Time,
    pub pre_gst: Time,
    pub post_gst: Time,
}

impl Clock {
    pub fn sample<R: Rng>(rng: &mut R, gst: Time, delta_err: Time, rho: Time) -> Clock {
        Clock {
            gst,
            pre_gst: rng.gen_range(-delta_err..=delta_err),
            post_gst: rng.gen_range(-rho..=rho),
        }
    }

    pub fn exact() -> Clock {
        Clock {
            gst: 0,
            pre_gst: 0,
            post_gst: 0,
        }
    }

    pub fn local(&self, t: Time) -> Time {
        if t < self.gst {
            t + self.pre_gst
        } else {
            t + self.post_gst
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_skew_after_gst_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = Clock::sample(&mut rng, 100, 50, 0);
        for t in [100, 101, 5000] {
            assert_eq!(c.local(t), t);
        }
    }

    #[test]
    fn skew_bounds_hold_and_sampling_is_seeded() {
        for seed in 0..200 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let c = Clock::sample(&mut rng, 1000, 40, 3);
            assert!((c.local(10) - 10).abs() <= 40);
            assert!((c.local(1000) - 1000).abs() <= 3);
            assert!((c.local(99_999) - 99_999).abs() <= 3);
            let mut again = ChaCha8Rng::seed_from_u64(seed);
            assert_eq!(Clock::sample(&mut again, 1000, 40, 3), c);
        }
    }
}
