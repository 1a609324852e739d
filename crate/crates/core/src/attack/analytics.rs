use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{AttackError, PacketClass, UseCase};

/// Operation counts and adversary load for the attempt model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackAnalyticsInput {
    /// Binary-output operations.
    pub m: u32,
    /// Analog-output operations.
    pub n: u32,
    /// Read-response operations.
    pub o: u32,
    /// Packet arrival rate at the adversary, packets/s.
    pub lambda: f64,
    /// Adversary service rate, packets/s.
    pub mu: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Probabilities {
    pub p: f64,
    pub q: f64,
    pub r: f64,
}

pub fn traffic_intensity(lambda: f64, mu: f64) -> Result<f64, AttackError> {
    if !(mu > 0.0) || !(lambda >= 0.0) {
        return Err(AttackError::InvalidRate);
    }
    Ok(lambda / mu)
}

/// The operations one attempt at the use-case goal performs, in order.
pub fn operation_sequence(use_case: UseCase, m: u32, n: u32, o: u32) -> Vec<PacketClass> {
    let rep = |c: PacketClass, k: u32| std::iter::repeat_n(c, k as usize);
    match use_case {
        UseCase::Uc1 => rep(PacketClass::Bo, m).collect(),
        UseCase::Uc2 => rep(PacketClass::Bo, m)
            .chain(rep(PacketClass::Ao, n))
            .collect(),
        UseCase::Uc3 => rep(PacketClass::Rr, o)
            .chain(rep(PacketClass::Bo, m))
            .collect(),
        // Mask before the command and again after it.
        UseCase::Uc4 => rep(PacketClass::Rr, o)
            .chain(rep(PacketClass::Bo, m))
            .chain(rep(PacketClass::Rr, o))
            .collect(),
    }
}

fn class_probability(probs: Probabilities, class: PacketClass) -> f64 {
    match class {
        PacketClass::Bo => probs.p,
        PacketClass::Ao => probs.q,
        PacketClass::Rr => probs.r,
        PacketClass::Other => 1.0,
    }
}

/// Expected attempts until every operation of one attempt succeeds: the
/// inverse of the joint success probability.
pub fn expected_steps(
    input: &AttackAnalyticsInput,
    probs: Probabilities,
    use_case: UseCase,
) -> Result<f64, AttackError> {
    let seq = operation_sequence(use_case, input.m, input.n, input.o);
    let mut joint = 1.0;
    for class in seq {
        let x = class_probability(probs, class);
        if x == 0.0 {
            return Err(AttackError::ZeroProbability(class));
        }
        joint *= x;
    }
    Ok(1.0 / joint)
}

/// Monte-Carlo counts from repeated goal pursuits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttemptStats {
    pub trials: usize,
    /// Mean attempts until the goal was reached.
    pub mean_attempts: f64,
    /// Mean command mutations tried per goal.
    pub mean_fci: f64,
    /// Mean measurement mutations tried per goal.
    pub mean_fdi: f64,
}

/// Runs `trials` independent pursuits. Each attempt performs the
/// operations in order and stops at the first failure; the pursuit ends
/// with the first attempt whose operations all succeed.
pub fn simulate_attempts(
    use_case: UseCase,
    input: &AttackAnalyticsInput,
    probs: Probabilities,
    trials: usize,
    seed: u64,
) -> Result<AttemptStats, AttackError> {
    expected_steps(input, probs, use_case)?;
    let seq = operation_sequence(use_case, input.m, input.n, input.o);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut attempts, mut fci, mut fdi) = (0u64, 0u64, 0u64);
    for _ in 0..trials {
        loop {
            attempts += 1;
            let mut ok = true;
            for &class in &seq {
                match class {
                    PacketClass::Rr => fdi += 1,
                    _ => fci += 1,
                }
                if !rng.gen_bool(class_probability(probs, class)) {
                    ok = false;
                    break;
                }
            }
            if ok {
                break;
            }
        }
    }
    let t = trials.max(1) as f64;
    Ok(AttemptStats {
        trials,
        mean_attempts: attempts as f64 / t,
        mean_fci: fci as f64 / t,
        mean_fdi: fdi as f64 / t,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn input(m: u32, n: u32, o: u32) -> AttackAnalyticsInput {
        AttackAnalyticsInput {
            m,
            n,
            o,
            lambda: 0.0,
            mu: 1.0,
        }
    }

    #[test]
    fn expected_steps_arithmetic() {
        let p = |p, q, r| Probabilities { p, q, r };
        assert_eq!(
            expected_steps(&input(1, 0, 0), p(0.5, 1.0, 1.0), UseCase::Uc2).unwrap(),
            2.0
        );
        assert_eq!(
            expected_steps(&input(1, 0, 1), p(0.5, 1.0, 0.5), UseCase::Uc4).unwrap(),
            8.0
        );
        for uc in [UseCase::Uc1, UseCase::Uc2, UseCase::Uc3, UseCase::Uc4] {
            assert_eq!(
                expected_steps(&input(2, 3, 4), p(1.0, 1.0, 1.0), uc).unwrap(),
                1.0
            );
        }
        assert_eq!(
            expected_steps(&input(1, 1, 0), p(0.5, 0.0, 1.0), UseCase::Uc2),
            Err(AttackError::ZeroProbability(PacketClass::Ao))
        );
        // A zero base that the use case does not use is fine.
        assert!(expected_steps(&input(1, 0, 1), p(0.5, 0.0, 0.5), UseCase::Uc3).is_ok());
    }

    #[test]
    fn traffic_intensity_is_ratio() {
        assert_eq!(traffic_intensity(2.0, 4.0).unwrap(), 0.5);
        assert_eq!(traffic_intensity(0.0, 4.0).unwrap(), 0.0);
        assert_eq!(
            traffic_intensity(4.0, 4.0).unwrap(),
            2.0 * traffic_intensity(2.0, 4.0).unwrap()
        );
        assert!(traffic_intensity(1.0, 0.0).is_err());
    }

    #[test]
    fn monte_carlo_is_seeded() {
        let probs = Probabilities {
            p: 0.5,
            q: 0.5,
            r: 0.5,
        };
        let a = simulate_attempts(UseCase::Uc2, &input(1, 1, 0), probs, 200, 7).unwrap();
        let b = simulate_attempts(UseCase::Uc2, &input(1, 1, 0), probs, 200, 7).unwrap();
        assert_eq!(a, b);
    }
}
