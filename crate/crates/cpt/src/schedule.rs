//! Pure, stateless learning-rate schedules with explicit phase identification.
//!
//! Two schedule families matter here: the four-phase infinite cosine schedule
//! (warmup, cosine cooldown to a plateau, constant plateau, exponential
//! annealing to the floor) and the classic repeated cosine-with-warmup that
//! decays to the floor at the end of every task.

use std::fmt;

use crate::error::{CptError, Result};

/// Schedule family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleKind {
    RepeatedCosineWarmup,
    InfiniteCosine,
    Constant,
}

impl ScheduleKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().replace('-', "_").as_str() {
            "repeated_cosine" | "repeated_cosine_warmup" | "cosine" => {
                Ok(ScheduleKind::RepeatedCosineWarmup)
            }
            "infinite_cosine" | "infinite" => Ok(ScheduleKind::InfiniteCosine),
            "constant" => Ok(ScheduleKind::Constant),
            other => Err(CptError::Parse(format!("unknown schedule kind `{other}`"))),
        }
    }
}

impl fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ScheduleKind::RepeatedCosineWarmup => "repeated_cosine",
            ScheduleKind::InfiniteCosine => "infinite_cosine",
            ScheduleKind::Constant => "constant",
        };
        f.write_str(s)
    }
}

/// Exponent convention for the annealing phase.
///
/// `Normalized` uses exponent `(n - N_d) / t_a`, which reaches the floor
/// `eta_min` exactly when annealing completes. `PaperLiteral` uses
/// `(n - N_d) / (t_a + N_d)` and therefore ends strictly above the floor
/// whenever `N_d > 0`; it is kept behind this switch for auditability.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AnnealConvention {
    #[default]
    Normalized,
    PaperLiteral,
}

impl AnnealConvention {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().replace('-', "_").as_str() {
            "normalized" => Ok(AnnealConvention::Normalized),
            "paper_literal" => Ok(AnnealConvention::PaperLiteral),
            other => Err(CptError::Parse(format!(
                "unknown anneal convention `{other}` (expected normalized|paper-literal)"
            ))),
        }
    }
}

impl fmt::Display for AnnealConvention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AnnealConvention::Normalized => f.write_str("normalized"),
            AnnealConvention::PaperLiteral => f.write_str("paper_literal"),
        }
    }
}

/// Which of the schedule phases a step falls in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Warmup,
    Cooldown,
    Constant,
    Annealing,
    Done,
}

impl Phase {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "warmup" => Ok(Phase::Warmup),
            "cooldown" => Ok(Phase::Cooldown),
            "constant" => Ok(Phase::Constant),
            "annealing" => Ok(Phase::Annealing),
            "done" => Ok(Phase::Done),
            other => Err(CptError::Parse(format!("unknown phase `{other}`"))),
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Phase::Warmup => "warmup",
            Phase::Cooldown => "cooldown",
            Phase::Constant => "constant",
            Phase::Annealing => "annealing",
            Phase::Done => "done",
        };
        f.write_str(s)
    }
}

/// All hyperparameters and phase boundaries of one task's schedule.
///
/// For `InfiniteCosine` the step axis is split as: warmup on `[0, n_warmup)`,
/// cosine cooldown on `[n_warmup, n_cooldown_end]`, constant plateau on
/// `(n_cooldown_end, n_decay_start]`, annealing on
/// `(n_decay_start, n_decay_start + t_anneal]`. `RepeatedCosineWarmup` uses
/// only `n_warmup` and `n_total`; `Constant` only `eta_max` and `n_total`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleSpec {
    pub kind: ScheduleKind,
    /// Peak rate, reached at the end of warmup.
    pub eta_max: f64,
    /// Floor rate, reached when annealing (or the cosine decay) completes.
    pub eta_min: f64,
    /// Plateau rate of the constant phase (InfiniteCosine only).
    pub eta_const: f64,
    /// N_w: warmup length in steps.
    pub n_warmup: u64,
    /// N_c: last step of the cosine cooldown.
    pub n_cooldown_end: u64,
    /// N_d: last constant step; annealing starts right after.
    pub n_decay_start: u64,
    /// t_a: annealing duration in steps.
    pub t_anneal: u64,
    /// N: task budget; defines the cooldown proportion P = N_c / N.
    pub n_total: u64,
    pub anneal_convention: AnnealConvention,
}

impl ScheduleSpec {
    /// Validated four-phase spec from absolute step boundaries.
    #[allow(clippy::too_many_arguments)]
    pub fn infinite_cosine(
        eta_max: f64,
        eta_min: f64,
        eta_const: f64,
        n_warmup: u64,
        n_cooldown_end: u64,
        n_decay_start: u64,
        t_anneal: u64,
        n_total: u64,
        anneal_convention: AnnealConvention,
    ) -> Result<Self> {
        let spec = ScheduleSpec {
            kind: ScheduleKind::InfiniteCosine,
            eta_max,
            eta_min,
            eta_const,
            n_warmup,
            n_cooldown_end,
            n_decay_start,
            t_anneal,
            n_total,
            anneal_convention,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Four-phase spec from budget fractions: `N_w = floor(warmup_frac * N)`,
    /// `N_c = floor(cooldown_frac * N)`, `N_d = N_c + floor(constant_frac * N)`,
    /// and annealing takes the remaining `N - N_d` steps.
    #[allow(clippy::too_many_arguments)]
    pub fn infinite_from_fractions(
        eta_max: f64,
        eta_min: f64,
        eta_const: f64,
        n_total: u64,
        warmup_frac: f64,
        cooldown_frac: f64,
        constant_frac: f64,
        anneal_convention: AnnealConvention,
    ) -> Result<Self> {
        for (name, f) in [
            ("warmup_frac", warmup_frac),
            ("cooldown_frac", cooldown_frac),
            ("constant_frac", constant_frac),
        ] {
            if !(0.0..=1.0).contains(&f) {
                return Err(CptError::InvalidSpec(format!("{name} {f} outside [0, 1]")));
            }
        }
        let part = |f: f64| (f * n_total as f64).floor() as u64;
        let n_warmup = part(warmup_frac);
        // The percents mark positions in the budget: cooldown ends at
        // floor(cooldown * N) and decay starts floor(constant * N) later. A
        // cooldown percent at or below the warmup percent (notably 0) means
        // no cooldown segment at all.
        let n_decay_start = (part(cooldown_frac) + part(constant_frac)).max(n_warmup);
        let n_cooldown_end = part(cooldown_frac).max(n_warmup).min(n_decay_start);
        if n_decay_start >= n_total {
            return Err(CptError::InvalidSpec(format!(
                "cooldown + constant fractions leave no annealing budget ({n_decay_start} of {n_total} steps)"
            )));
        }
        Self::infinite_cosine(
            eta_max,
            eta_min,
            eta_const,
            n_warmup,
            n_cooldown_end,
            n_decay_start,
            n_total - n_decay_start,
            n_total,
            anneal_convention,
        )
    }

    /// Validated warmup-then-cosine spec (decays to `eta_min` at `n_total`).
    pub fn repeated_cosine(eta_max: f64, eta_min: f64, n_warmup: u64, n_total: u64) -> Result<Self> {
        let spec = ScheduleSpec {
            kind: ScheduleKind::RepeatedCosineWarmup,
            eta_max,
            eta_min,
            eta_const: eta_min,
            n_warmup,
            n_cooldown_end: 0,
            n_decay_start: 0,
            t_anneal: 1,
            n_total,
            anneal_convention: AnnealConvention::Normalized,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Flat schedule at `rate` for `n_total` steps.
    pub fn constant(rate: f64, n_total: u64) -> Result<Self> {
        let spec = ScheduleSpec {
            kind: ScheduleKind::Constant,
            eta_max: rate,
            eta_min: rate,
            eta_const: rate,
            n_warmup: 0,
            n_cooldown_end: 0,
            n_decay_start: 0,
            t_anneal: 1,
            n_total,
            anneal_convention: AnnealConvention::Normalized,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Check the type invariants for this spec's kind.
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(CptError::InvalidSpec(msg));
        if self.n_total == 0 {
            return fail("n_total must be positive".into());
        }
        if !(self.eta_max.is_finite() && self.eta_min.is_finite() && self.eta_const.is_finite()) {
            return fail("rates must be finite".into());
        }
        if self.eta_min <= 0.0 {
            return fail(format!("eta_min {} must be positive", self.eta_min));
        }
        match self.kind {
            ScheduleKind::InfiniteCosine => {
                if !(self.eta_min <= self.eta_const && self.eta_const <= self.eta_max) {
                    return fail(format!(
                        "need eta_min <= eta_const <= eta_max, got {} / {} / {}",
                        self.eta_min, self.eta_const, self.eta_max
                    ));
                }
                if self.n_cooldown_end == 0 {
                    return fail("cooldown proportion N_c/N must lie in (0, 1]".into());
                }
                if self.t_anneal == 0 {
                    return fail("t_anneal must be positive".into());
                }
                let ordered = self.n_warmup <= self.n_cooldown_end
                    && self.n_cooldown_end <= self.n_decay_start
                    && self.n_decay_start + self.t_anneal <= self.n_total;
                if !ordered {
                    return fail(format!(
                        "need N_w <= N_c <= N_d <= N_d + t_a <= N, got {} / {} / {} / {} / {}",
                        self.n_warmup,
                        self.n_cooldown_end,
                        self.n_decay_start,
                        self.n_decay_start + self.t_anneal,
                        self.n_total
                    ));
                }
            }
            ScheduleKind::RepeatedCosineWarmup => {
                if self.eta_min > self.eta_max {
                    return fail(format!(
                        "need eta_min <= eta_max, got {} / {}",
                        self.eta_min, self.eta_max
                    ));
                }
                if self.n_warmup >= self.n_total {
                    return fail(format!(
                        "need N_w < N, got {} / {}",
                        self.n_warmup, self.n_total
                    ));
                }
            }
            ScheduleKind::Constant => {
                if self.eta_max <= 0.0 {
                    return fail(format!("rate {} must be positive", self.eta_max));
                }
            }
        }
        Ok(())
    }

    /// Learning rate at step `n` (0 <= n <= N), dispatched on the kind.
    pub fn lr_at(&self, n: u64) -> Result<f64> {
        if n > self.n_total {
            return Err(CptError::StepOutOfRange {
                n,
                n_total: self.n_total,
            });
        }
        Ok(match self.kind {
            ScheduleKind::InfiniteCosine => self.lr_infinite(n),
            ScheduleKind::RepeatedCosineWarmup => self.lr_cosine_warmup(n),
            ScheduleKind::Constant => self.eta_max,
        })
    }

    /// Four-phase rate: linear warmup, cosine cooldown to the plateau,
    /// constant plateau, exponential annealing to the floor.
    fn lr_infinite(&self, n: u64) -> f64 {
        if n < self.n_warmup {
            return (n as f64 / self.n_warmup as f64) * self.eta_max;
        }
        if n <= self.n_cooldown_end {
            // Empty cooldown (N_c == N_w) evaluates its single boundary step
            // at the cos(0) limit, i.e. eta_max.
            let span = (self.n_cooldown_end - self.n_warmup) as f64;
            let progress = if span > 0.0 {
                (n - self.n_warmup) as f64 / span
            } else {
                0.0
            };
            let v = self.eta_const
                + ((self.eta_max - self.eta_const) / 2.0)
                    * (1.0 + (std::f64::consts::PI * progress).cos());
            return v.min(self.eta_max);
        }
        if n <= self.n_decay_start {
            return self.eta_const;
        }
        let anneal_end = self.n_decay_start + self.t_anneal;
        match self.anneal_convention {
            AnnealConvention::Normalized => {
                if n >= anneal_end {
                    // Endpoint hits the floor exactly; beyond it (Done) the
                    // rate stays clamped there.
                    return self.eta_min;
                }
                let e = (n - self.n_decay_start) as f64 / self.t_anneal as f64;
                self.eta_const * (self.eta_min / self.eta_const).powf(e)
            }
            AnnealConvention::PaperLiteral => {
                let e = (n - self.n_decay_start) as f64
                    / (self.t_anneal + self.n_decay_start) as f64;
                (self.eta_const * (self.eta_min / self.eta_const).powf(e)).max(self.eta_min)
            }
        }
    }

    /// Warmup to the peak over `[0, N_w]`, then cosine decay hitting
    /// `eta_min` exactly at `n = N`.
    fn lr_cosine_warmup(&self, n: u64) -> f64 {
        if n <= self.n_warmup {
            // N_w = 0 means no ramp: the single step 0 sits at the peak.
            if self.n_warmup == 0 {
                return self.eta_max;
            }
            return (n as f64 / self.n_warmup as f64) * self.eta_max;
        }
        if n == self.n_total {
            return self.eta_min;
        }
        let progress = (n - self.n_warmup) as f64 / (self.n_total - self.n_warmup) as f64;
        self.eta_min
            + ((self.eta_max - self.eta_min) / 2.0) * (1.0 + (std::f64::consts::PI * progress).cos())
    }

    /// Phase of step `n`. Boundary membership follows the schedule's printed
    /// cases: cooldown includes `n = N_c`, constant includes `n = N_d`.
    pub fn phase_at(&self, n: u64) -> Result<Phase> {
        if n > self.n_total {
            return Err(CptError::StepOutOfRange {
                n,
                n_total: self.n_total,
            });
        }
        Ok(match self.kind {
            ScheduleKind::InfiniteCosine => {
                if n < self.n_warmup {
                    Phase::Warmup
                } else if n <= self.n_cooldown_end {
                    Phase::Cooldown
                } else if n <= self.n_decay_start {
                    Phase::Constant
                } else if n <= self.n_decay_start + self.t_anneal {
                    Phase::Annealing
                } else {
                    Phase::Done
                }
            }
            // The cosine decay shares the cooldown's functional form, so it
            // carries the Cooldown tag.
            ScheduleKind::RepeatedCosineWarmup => {
                if n < self.n_warmup {
                    Phase::Warmup
                } else {
                    Phase::Cooldown
                }
            }
            ScheduleKind::Constant => Phase::Constant,
        })
    }

    /// Cooldown proportion P = N_c / N.
    pub fn cooldown_proportion(&self) -> f64 {
        self.n_cooldown_end as f64 / self.n_total as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Pre-training spec: peaks 3e-4/3e-5/1e-4 over 47684 steps with
    /// warmup 1%, cooldown 60%, constant 25%.
    fn pretrain_spec(conv: AnnealConvention) -> ScheduleSpec {
        ScheduleSpec::infinite_from_fractions(3e-4, 3e-5, 1e-4, 47684, 0.01, 0.60, 0.25, conv)
            .unwrap()
    }

    fn rel_err(got: f64, want: f64) -> f64 {
        (got - want).abs() / want.abs()
    }

    #[test]
    fn fraction_boundaries_floor_correctly() {
        let s = pretrain_spec(AnnealConvention::Normalized);
        // floor(0.01 * 47684) = 476, floor(0.60 * 47684) = 28610,
        // 28610 + floor(0.25 * 47684) = 28610 + 11921 = 40531, t_a = 7153.
        assert_eq!(s.n_warmup, 476);
        assert_eq!(s.n_cooldown_end, 28610);
        assert_eq!(s.n_decay_start, 40531);
        assert_eq!(s.t_anneal, 7153);
    }

    #[test]
    fn zero_cooldown_fractions_skip_straight_to_constant() {
        // Continuation-style split: warmup 1%, no cooldown, constant through
        // 85% of the budget. Decay starts at floor(0.85 * 47684) = 40531.
        let s = ScheduleSpec::infinite_from_fractions(
            3e-4,
            3e-5,
            1e-4,
            47684,
            0.01,
            0.0,
            0.85,
            AnnealConvention::Normalized,
        )
        .unwrap();
        assert_eq!(s.n_warmup, 476);
        assert_eq!(s.n_cooldown_end, 476, "empty cooldown pins N_c to N_w");
        assert_eq!(s.n_decay_start, 40531);
        assert_eq!(s.t_anneal, 7153);
        assert_eq!(s.lr_at(476).unwrap(), 3e-4, "boundary step sits at the peak");
        assert_eq!(s.lr_at(477).unwrap(), 1e-4, "constant phase right after");
        assert_eq!(s.lr_at(47684).unwrap(), 3e-5);
    }

    #[test]
    fn warmup_starts_at_zero_exactly() {
        let s = pretrain_spec(AnnealConvention::Normalized);
        assert_eq!(s.lr_at(0).unwrap(), 0.0);
    }

    #[test]
    fn warmup_endpoint_reaches_the_peak() {
        let s = pretrain_spec(AnnealConvention::Normalized);
        let lr = s.lr_at(s.n_warmup).unwrap();
        assert!(rel_err(lr, 3e-4) <= 1e-12, "lr(N_w) = {lr}");
    }

    #[test]
    fn cooldown_midpoint_is_halfway_between_peak_and_plateau() {
        let s = pretrain_spec(AnnealConvention::Normalized);
        // cos(pi/2) = 0, so lr = eta_const + (eta_max - eta_const)/2 = 2e-4.
        let mid = (s.n_warmup + s.n_cooldown_end) / 2;
        let lr = s.lr_at(mid).unwrap();
        assert!(rel_err(lr, 2e-4) <= 1e-12, "cooldown midpoint = {lr}");
    }

    #[test]
    fn constant_phase_sits_on_the_plateau() {
        let s = pretrain_spec(AnnealConvention::Normalized);
        assert_eq!(s.lr_at(s.n_cooldown_end + 1).unwrap(), 1e-4);
        assert_eq!(s.lr_at(s.n_decay_start).unwrap(), 1e-4);
    }

    #[test]
    fn normalized_annealing_reaches_the_floor_exactly() {
        let s = pretrain_spec(AnnealConvention::Normalized);
        assert_eq!(s.lr_at(s.n_decay_start + s.t_anneal).unwrap(), 3e-5);
    }

    #[test]
    fn paper_literal_endpoint_stays_above_the_floor() {
        let s = pretrain_spec(AnnealConvention::PaperLiteral);
        let end = s.lr_at(s.n_decay_start + s.t_anneal).unwrap();
        // Exponent t_a / (t_a + N_d) = 7153/47684 < 1 leaves the endpoint at
        // eta_const * 0.3^0.15001... ~ 8.35e-5, well above eta_min.
        assert!(end > 3e-5, "paper-literal endpoint {end} should exceed eta_min");
        assert!(rel_err(end, 8.3476e-5) < 1e-3, "endpoint magnitude check: {end}");
    }

    #[test]
    fn phase_boundaries_follow_the_printed_cases() {
        let s = pretrain_spec(AnnealConvention::Normalized);
        assert_eq!(s.phase_at(0).unwrap(), Phase::Warmup);
        assert_eq!(s.phase_at(s.n_warmup).unwrap(), Phase::Cooldown);
        assert_eq!(s.phase_at(s.n_cooldown_end).unwrap(), Phase::Cooldown);
        assert_eq!(s.phase_at(s.n_cooldown_end + 1).unwrap(), Phase::Constant);
        assert_eq!(s.phase_at(s.n_decay_start).unwrap(), Phase::Constant);
        assert_eq!(s.phase_at(s.n_decay_start + 1).unwrap(), Phase::Annealing);
        assert_eq!(
            s.phase_at(s.n_decay_start + s.t_anneal).unwrap(),
            Phase::Annealing
        );
    }

    #[test]
    fn done_phase_clamps_to_the_floor() {
        // Budget extends 10 steps past the annealing endpoint.
        let s = ScheduleSpec::infinite_cosine(
            3e-4,
            3e-5,
            1e-4,
            10,
            40,
            85,
            15,
            110,
            AnnealConvention::Normalized,
        )
        .unwrap();
        assert_eq!(s.phase_at(101).unwrap(), Phase::Done);
        assert_eq!(s.lr_at(101).unwrap(), 3e-5);
        assert_eq!(s.lr_at(110).unwrap(), 3e-5);
    }

    #[test]
    fn cosine_warmup_endpoint_and_midpoint() {
        let s = ScheduleSpec::repeated_cosine(3e-4, 3e-5, 10, 100).unwrap();
        assert!(rel_err(s.lr_at(10).unwrap(), 3e-4) <= 1e-12);
        // Midpoint of the decay: cos(pi/2) = 0 gives (eta_max + eta_min)/2.
        assert!(rel_err(s.lr_at(55).unwrap(), 1.65e-4) <= 1e-12);
        // The decay lands on the floor exactly at N.
        assert_eq!(s.lr_at(100).unwrap(), 3e-5);
    }

    #[test]
    fn cosine_with_zero_warmup_starts_at_the_peak() {
        let s = ScheduleSpec::repeated_cosine(3e-4, 3e-5, 0, 100).unwrap();
        assert_eq!(s.lr_at(0).unwrap(), 3e-4);
    }

    #[test]
    fn constant_schedule_is_flat() {
        let s = ScheduleSpec::constant(1e-3, 50).unwrap();
        assert_eq!(s.lr_at(0).unwrap(), 1e-3);
        assert_eq!(s.lr_at(50).unwrap(), 1e-3);
        assert_eq!(s.phase_at(25).unwrap(), Phase::Constant);
    }

    #[test]
    fn cooldown_proportion_examples() {
        let mut s = pretrain_spec(AnnealConvention::Normalized);
        // 28610 / 47684 = 0.5999... (cooldown 60% of the budget).
        let p = s.cooldown_proportion();
        assert!((p - 0.6).abs() < 1e-4, "P = {p}");
        s.n_cooldown_end = 30;
        s.n_total = 100;
        assert_eq!(s.cooldown_proportion(), 0.3);
        s.n_cooldown_end = s.n_total;
        assert_eq!(s.cooldown_proportion(), 1.0);
    }

    #[test]
    fn out_of_range_steps_are_rejected() {
        let s = pretrain_spec(AnnealConvention::Normalized);
        assert!(s.lr_at(47685).is_err());
        assert!(s.phase_at(47685).is_err());
    }

    #[test]
    fn invalid_specs_are_rejected() {
        // Plateau above the peak.
        assert!(ScheduleSpec::infinite_cosine(
            3e-4,
            3e-5,
            4e-4,
            10,
            40,
            85,
            15,
            100,
            AnnealConvention::Normalized
        )
        .is_err());
        // Boundaries out of order (N_c > N_d).
        assert!(ScheduleSpec::infinite_cosine(
            3e-4,
            3e-5,
            1e-4,
            10,
            90,
            85,
            15,
            100,
            AnnealConvention::Normalized
        )
        .is_err());
        // Empty cooldown proportion (N_c = 0).
        assert!(ScheduleSpec::infinite_cosine(
            3e-4,
            3e-5,
            1e-4,
            0,
            0,
            85,
            15,
            100,
            AnnealConvention::Normalized
        )
        .is_err());
        // Warmup consuming the whole cosine budget.
        assert!(ScheduleSpec::repeated_cosine(3e-4, 3e-5, 100, 100).is_err());
        // No annealing budget left after cooldown + constant.
        assert!(ScheduleSpec::infinite_from_fractions(
            3e-4,
            3e-5,
            1e-4,
            100,
            0.0,
            0.5,
            0.5,
            AnnealConvention::Normalized
        )
        .is_err());
    }

    #[test]
    fn empty_cooldown_boundary_step_sits_at_the_peak() {
        let s = ScheduleSpec::infinite_cosine(
            3e-4,
            3e-5,
            1e-4,
            10,
            10,
            85,
            15,
            100,
            AnnealConvention::Normalized,
        )
        .unwrap();
        assert_eq!(s.lr_at(10).unwrap(), 3e-4);
        assert_eq!(s.lr_at(11).unwrap(), 1e-4);
    }

    /// Random valid four-phase specs for the property checks below.
    fn arb_infinite_spec() -> impl Strategy<Value = ScheduleSpec> {
        (
            10u64..2000,
            1e-6f64..1e-2,
            1.5f64..20.0,
            1.5f64..20.0,
            any::<prop::sample::Index>(),
            any::<prop::sample::Index>(),
            any::<prop::sample::Index>(),
        )
            .prop_filter_map(
                "degenerate boundaries",
                |(n, eta_min, const_ratio, max_ratio, a, b, c)| {
                    let eta_const = eta_min * const_ratio;
                    let eta_max = eta_const * max_ratio;
                    let mut cuts = [
                        a.index(n as usize) as u64,
                        b.index(n as usize) as u64,
                        c.index(n as usize) as u64,
                    ];
                    cuts.sort_unstable();
                    let [n_w, n_c, n_d] = cuts;
                    if n_c == 0 || n_d >= n {
                        return None;
                    }
                    ScheduleSpec::infinite_cosine(
                        eta_max,
                        eta_min,
                        eta_const,
                        n_w,
                        n_c,
                        n_d,
                        n - n_d,
                        n,
                        AnnealConvention::Normalized,
                    )
                    .ok()
                },
            )
    }

    proptest! {
        #[test]
        fn lr_stays_in_range_and_is_pure(s in arb_infinite_spec()) {
            let floor = s.eta_min * (1.0 - 1e-12);
            for n in 0..=s.n_total {
                let lr = s.lr_at(n).unwrap();
                prop_assert!(lr >= floor || n < s.n_warmup,
                    "lr({n}) = {lr} below floor {floor}");
                prop_assert!(lr <= s.eta_max, "lr({n}) = {lr} above peak {}", s.eta_max);
                prop_assert_eq!(lr.to_bits(), s.lr_at(n).unwrap().to_bits());
            }
        }

        #[test]
        fn segments_are_monotone(s in arb_infinite_spec()) {
            for n in 1..=s.n_warmup.saturating_sub(1) {
                prop_assert!(s.lr_at(n).unwrap() >= s.lr_at(n - 1).unwrap());
            }
            for n in (s.n_warmup + 1)..=s.n_cooldown_end {
                prop_assert!(s.lr_at(n).unwrap() <= s.lr_at(n - 1).unwrap());
            }
            for n in (s.n_cooldown_end + 1)..=s.n_decay_start {
                prop_assert_eq!(s.lr_at(n).unwrap(), s.eta_const);
            }
            if s.eta_min < s.eta_const {
                for n in (s.n_decay_start + 1)..=(s.n_decay_start + s.t_anneal) {
                    prop_assert!(s.lr_at(n).unwrap() < s.lr_at(n - 1).unwrap(),
                        "annealing must strictly decrease at {n}");
                }
            }
        }

        #[test]
        fn interior_boundaries_are_continuous(s in arb_infinite_spec()) {
            let tol = 1e-9 * s.eta_max;
            // Cooldown starts at the peak and ends on the plateau.
            prop_assert!((s.lr_at(s.n_warmup).unwrap() - s.eta_max).abs() <= tol);
            prop_assert!((s.lr_at(s.n_cooldown_end).unwrap() - s.eta_const).abs() <= tol
                || s.n_cooldown_end == s.n_warmup);
        }

        #[test]
        fn phases_partition_the_budget(s in arb_infinite_spec()) {
            for n in 0..=s.n_total {
                let want = if n < s.n_warmup {
                    Phase::Warmup
                } else if n <= s.n_cooldown_end {
                    Phase::Cooldown
                } else if n <= s.n_decay_start {
                    Phase::Constant
                } else if n <= s.n_decay_start + s.t_anneal {
                    Phase::Annealing
                } else {
                    Phase::Done
                };
                prop_assert_eq!(s.phase_at(n).unwrap(), want);
            }
        }

        #[test]
        fn paper_literal_never_reaches_the_floor_when_decay_starts_late(
            s in arb_infinite_spec()
        ) {
            prop_assume!(s.n_decay_start > 0 && s.eta_min < s.eta_const);
            let mut lit = s.clone();
            lit.anneal_convention = AnnealConvention::PaperLiteral;
            let end = lit.lr_at(lit.n_decay_start + lit.t_anneal).unwrap();
            prop_assert!(end > lit.eta_min);
        }

        #[test]
        fn cosine_decay_is_monotone_and_lands_on_the_floor(
            n in 5u64..500,
            w_idx in any::<prop::sample::Index>(),
            eta_min in 1e-6f64..1e-3,
            ratio in 1.5f64..50.0,
        ) {
            let n_w = w_idx.index(n as usize) as u64;
            let s = ScheduleSpec::repeated_cosine(eta_min * ratio, eta_min, n_w, n).unwrap();
            for k in (n_w + 1)..=n {
                prop_assert!(s.lr_at(k).unwrap() <= s.lr_at(k - 1).unwrap());
            }
            prop_assert_eq!(s.lr_at(n).unwrap(), eta_min);
        }
    }
}
