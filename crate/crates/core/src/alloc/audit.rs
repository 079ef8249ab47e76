//! Independent re-derivation of an [`AllocationPlan`] from its echoed inputs.
//!
//! Nothing here calls the sizing helpers of the parent module. Bit and block
//! counts are redone in integer arithmetic, the digital energy is checked in
//! the forward direction (plugging it back into the error expression), and
//! the scaling factors are checked against their defining identity.

use std::fmt;

use super::{gaussian_q, AllocationPlan, BlockSizing};

#[derive(Debug, Clone, PartialEq)]
pub struct AuditCheck {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AuditReport {
    pub checks: Vec<AuditCheck>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &AuditCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }

    fn check(&mut self, name: &'static str, passed: bool, detail: impl Into<String>) {
        self.checks.push(AuditCheck {
            name,
            passed,
            detail: detail.into(),
        });
    }
}

impl fmt::Display for AuditReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            let tag = if c.passed { "PASS" } else { "FAIL" };
            writeln!(f, "{tag} {}: {}", c.name, c.detail)?;
        }
        write!(
            f,
            "{}",
            if self.passed() { "audit passed" } else { "audit failed" }
        )
    }
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

/// Re-derives every plan field and reports one check per constraint.
pub fn audit(plan: &AllocationPlan) -> AuditReport {
    let mut r = AuditReport::default();
    let inp = &plan.inputs;
    let b = &inp.budget;
    let d = &inp.digital;
    let patches = inp.rho_sq.len();

    r.check(
        "input arity",
        inp.variances.len() == patches,
        format!("{} fit coefficients, {} variances", patches, inp.variances.len()),
    );
    if inp.variances.len() != patches {
        return r;
    }

    // digital sizing in integer arithmetic
    let bps = d.modulation.order().trailing_zeros() as u64;
    let blocks = if d.block_info_bits == 0 {
        0
    } else {
        d.info_bits.div_ceil(d.block_info_bits)
    };
    let per_block = (d.block_info_bits as f64 * d.code_rate - 1e-9).ceil().max(0.0) as u64;
    let parity = blocks * per_block;
    let k = match d.sizing {
        BlockSizing::BitsPerSymbol => {
            let cap = bps * d.block_symbols;
            if cap == 0 {
                0
            } else {
                parity.div_ceil(cap)
            }
        }
        BlockSizing::Literal { r_mod } => {
            (parity as f64 * r_mod / (2.0 * d.block_symbols as f64) - 1e-12).ceil().max(0.0) as u64
        }
    };
    let b_d = k * d.block_symbols;
    r.check(
        "parity bits",
        plan.digital.parity_bits == parity,
        format!("plan {} vs derived {parity}", plan.digital.parity_bits),
    );
    r.check(
        "block count",
        plan.digital.block_count == k && (parity == 0 || k >= 1),
        format!("plan {} vs derived {k}", plan.digital.block_count),
    );
    r.check(
        "digital bandwidth",
        plan.digital.bandwidth == b_d,
        format!("plan {} vs derived {b_d}", plan.digital.bandwidth),
    );
    r.check(
        "digital echo",
        plan.digital.info_bits_total == d.info_bits
            && plan.digital.block_info_bits == d.block_info_bits
            && plan.digital.code_rate == d.code_rate
            && plan.digital.block_symbols == d.block_symbols,
        "digital plan echoes its parameters",
    );

    // forward check of the digital energy
    let p_d = plan.digital.power;
    if parity == 0 {
        r.check("digital power", p_d == 0.0, format!("no parity bits, plan power {p_d}"));
    } else {
        let phi = d.modulation.order() as f64;
        let per_bit = p_d / parity as f64;
        let factor = 6.0 * phi.log2() / (phi * phi - 1.0);
        let eps = 2.0 * (1.0 - 1.0 / phi) * gaussian_q((factor * per_bit / b.noise_power).sqrt());
        r.check(
            "digital power",
            p_d.is_finite() && p_d >= 0.0 && rel_close(eps, b.error_threshold, 1e-8),
            format!("bit energy {per_bit} yields error {eps} vs target {}", b.error_threshold),
        );
    }

    // budgets
    let occupied = plan.analog_bandwidth + plan.digital.bandwidth + plan.metadata_uses;
    r.check(
        "bandwidth budget",
        plan.analog_bandwidth + plan.digital.bandwidth <= b.total_bandwidth
            && occupied <= b.total_bandwidth,
        format!(
            "analog {} + digital {} + metadata {} vs budget {}",
            plan.analog_bandwidth, plan.digital.bandwidth, plan.metadata_uses, b.total_bandwidth
        ),
    );
    r.check(
        "power budget",
        plan.analog_power >= 0.0 && plan.analog_power + p_d <= b.total_power,
        format!("analog {} + digital {p_d} vs budget {}", plan.analog_power, b.total_power),
    );
    r.check(
        "analog power remainder",
        rel_close(plan.analog_power, b.total_power - p_d, 1e-12)
            || (b.total_power - p_d).abs() <= 1e-12 * b.total_power,
        format!("plan {} vs derived {}", plan.analog_power, b.total_power - p_d),
    );

    // analog count, with the metadata charge settled from the plan's own drop count
    let q = plan.transmit_count;
    let bits_per_index = (inp.codebook_size.max(2) as f64).log2().ceil() as u64;
    let meta = if b.charge_metadata {
        ((patches - q.min(patches)) as u64 * bits_per_index + bps - 1) / bps.max(1)
    } else {
        0
    };
    r.check(
        "metadata uses",
        plan.metadata_uses == meta,
        format!("plan {} vs derived {meta}", plan.metadata_uses),
    );
    let b_a = b.total_bandwidth.saturating_sub(b_d + meta);
    r.check(
        "analog bandwidth",
        plan.analog_bandwidth == b_a,
        format!("plan {} vs derived {b_a}", plan.analog_bandwidth),
    );
    let eligible = inp.variances.iter().filter(|&&v| v > 0.0).count();
    let fits = if inp.feature_len == 0 {
        0
    } else {
        (2 * b_a / inp.feature_len as u64) as usize
    };
    let derived_q = if plan.analog_power > 0.0 {
        fits.min(patches).min(eligible)
    } else {
        0
    };
    r.check(
        "transmit count",
        q == derived_q,
        format!("plan {q} vs derived {derived_q}"),
    );
    r.check(
        "analog uses fit",
        (q * inp.feature_len / 2) as u64 <= plan.analog_bandwidth,
        format!("{q} patches of {} reals in {} uses", inp.feature_len, plan.analog_bandwidth),
    );

    // index partition
    let mut seen = vec![0u8; patches];
    let mut in_range = true;
    for &i in plan.transmit_indices.iter().chain(&plan.dropped_indices) {
        match seen.get_mut(i) {
            Some(s) => *s += 1,
            None => in_range = false,
        }
    }
    r.check(
        "index partition",
        in_range && seen.iter().all(|&s| s == 1) && plan.transmit_indices.len() == q,
        format!(
            "{} transmitted + {} dropped over {patches} patches",
            plan.transmit_indices.len(),
            plan.dropped_indices.len()
        ),
    );
    if !in_range {
        return r;
    }

    // selection dominance including tie-breaks
    let key = |i: usize| (inp.rho_sq[i], -inp.variances[i], i);
    let mut violation = None;
    'outer: for &t in &plan.transmit_indices {
        for &dd in &plan.dropped_indices {
            if inp.variances[dd] <= 0.0 {
                continue;
            }
            let (kt, kd) = (key(t), key(dd));
            let better = kd.0 < kt.0 || (kd.0 == kt.0 && (kd.1 < kt.1 || (kd.1 == kt.1 && kd.2 < kt.2)));
            if better {
                violation = Some((t, dd));
                break 'outer;
            }
        }
    }
    r.check(
        "selection dominance",
        violation.is_none() && plan.transmit_indices.iter().all(|&t| inp.variances[t] > 0.0),
        match violation {
            Some((t, dd)) => format!("dropped patch {dd} ranks ahead of transmitted patch {t}"),
            None => "no dropped patch ranks ahead of a transmitted one".into(),
        },
    );

    // scaling factors against their defining identity
    let sigmas: Vec<f64> = plan
        .transmit_indices
        .iter()
        .map(|&i| inp.variances[i].sqrt())
        .collect();
    let total: f64 = sigmas.iter().sum();
    let arity = plan.scaling.len() == q;
    let positive = plan.scaling.iter().all(|&g| g > 0.0 && g.is_finite());
    let identity = arity
        && plan
            .scaling
            .iter()
            .zip(&sigmas)
            .all(|(g, s)| rel_close(g * g * s * total, plan.analog_power, 1e-9));
    r.check(
        "scaling factors",
        arity && positive && identity,
        format!("{} factors for {q} patches, all positive: {positive}", plan.scaling.len()),
    );
    let used: f64 = plan
        .scaling
        .iter()
        .zip(&sigmas)
        .map(|(g, s)| g * g * s * s)
        .sum();
    r.check(
        "analog energy",
        used <= plan.analog_power * (1.0 + 1e-12),
        format!("sum g^2 sigma^2 = {used} vs analog power {}", plan.analog_power),
    );
    r
}

#[cfg(test)]
mod tests {
    use super::super::*;
    use super::*;

    fn toy() -> AllocationPlan {
        let budget = BudgetConfig {
            total_power: 2048.0,
            total_bandwidth: 2048,
            error_threshold: 1e-3,
            noise_power: 0.1,
            charge_metadata: true,
        };
        let digital = DigitalParams {
            info_bits: 2048,
            block_info_bits: 256,
            code_rate: 0.75,
            block_symbols: 128,
            modulation: ModulationSpec::QPSK,
            sizing: BlockSizing::BitsPerSymbol,
        };
        let rho: Vec<f64> = (0..16).map(|i| ((i * 7) % 16) as f64 / 16.0).collect();
        let var: Vec<f64> = (0..16).map(|i| 0.002 + 0.001 * i as f64).collect();
        let mut p = plan(&budget, &rho, &var, &digital, 256, 16).unwrap();
        assert!(p.transmit_count > 0 && !p.dropped_indices.is_empty());
        p.inputs.budget.total_bandwidth = 2048;
        p
    }

    #[test]
    fn planner_output_passes() {
        let report = audit(&toy());
        assert!(report.passed(), "{report}");
    }

    #[test]
    fn tampered_bandwidth_fails_by_name() {
        let mut p = toy();
        p.analog_bandwidth = p.inputs.budget.total_bandwidth;
        let report = audit(&p);
        assert!(!report.passed());
        assert!(report.failures().any(|c| c.name == "bandwidth budget"));
    }

    #[test]
    fn zeroed_scaling_fails() {
        let mut p = toy();
        p.scaling[0] = 0.0;
        let report = audit(&p);
        assert!(report.failures().any(|c| c.name == "scaling factors"));
    }

    #[test]
    fn swapped_selection_fails() {
        let mut p = toy();
        let (t, d) = (p.transmit_indices[0], p.dropped_indices[0]);
        p.inputs.rho_sq.swap(t, d);
        if p.inputs.rho_sq[t] != p.inputs.rho_sq[d] {
            assert!(audit(&p).failures().any(|c| c.name == "selection dominance"));
        }
    }

    #[test]
    fn inflated_power_fails() {
        let mut p = toy();
        p.digital.power *= 1.01;
        assert!(audit(&p).failures().any(|c| c.name == "digital power"));
    }
}
