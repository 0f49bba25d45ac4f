use super::ContractForm;
use crate::error::{Error, Result};
use crate::model::{lebesgue_decompose, DiscretePmf, FeasibilityClass, LossGrid, WealthConfig};

/// Ratios closer than this (relative) are treated as ties.
const TIE_TOL: f64 = 1e-12;

/// Optimal contract when both parties are risk neutral, against the worst
/// case `p`.
///
/// The buyer minimizes expected retention under `p` subject to the insurer's
/// break-even `E_Q[R] ≥ Π̃₀ = E_Q[X] − Π₀/(1+ρ)`. This is a fractional
/// knapsack, filled in increasing order of the likelihood ratio:
/// - class I retains atom by atom, ordered by `h = p/q`; the marginal ratio
///   level is shared proportionally (`R = c·x` on the tie set);
/// - class Î retains by layers, ordered by the survival ratio
///   `φ(t) = P(X > t)/Q(X > t)`; on ties the lower layers are retained
///   first and the rest is indemnified.
///
/// The marginal level `λ*` is read off exactly as an order statistic of the
/// ratios. A nonpositive budget gives full insurance.
pub fn build_linear_linear_contract(
    p: &DiscretePmf,
    q: &DiscretePmf,
    grid: &LossGrid,
    cfg: &WealthConfig,
    class: FeasibilityClass,
) -> Result<ContractForm> {
    if p.len() != grid.len() || q.len() != grid.len() {
        return Err(Error::dim("measures must be on the loss grid"));
    }
    let x = grid.points();
    let qw = q.weights();
    let expected: f64 = qw.iter().zip(x).map(|(w, xi)| w * xi).sum();
    let budget = cfg.retention_budget(expected);
    if budget <= 0.0 {
        return Ok(ContractForm::FullInsurance);
    }
    let dec = lebesgue_decompose(p, q)?;
    match class {
        FeasibilityClass::Basic => Ok(atomwise(x, qw, &dec.density, &dec.ac_mask, budget)),
        FeasibilityClass::NoSabotage => layered(x, qw, &dec.ac_part, budget),
    }
}

fn ties(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() <= TIE_TOL * a.abs().max(b.abs())
}

fn atomwise(x: &[f64], qw: &[f64], h: &[f64], in_a: &[bool], budget: f64) -> ContractForm {
    let mut order: Vec<usize> = (0..x.len()).filter(|&i| in_a[i]).collect();
    order.sort_by(|&i, &j| h[i].total_cmp(&h[j]).then(i.cmp(&j)));
    let mut r = vec![0.0; x.len()];
    let mut acc = 0.0;
    let mut k = 0;
    while k < order.len() && acc < budget {
        let level = h[order[k]];
        let end = k + order[k..].iter().take_while(|&&i| ties(h[i], level)).count();
        let group = &order[k..end];
        let cap: f64 = group.iter().map(|&i| qw[i] * x[i]).sum();
        let c = if cap > 0.0 { ((budget - acc) / cap).min(1.0) } else { 1.0 };
        for &i in group {
            r[i] = c * x[i];
        }
        acc += c * cap;
        k = end;
    }
    ContractForm::PointwiseFoc {
        values: x.iter().zip(&r).map(|(xi, ri)| xi - ri).collect(),
    }
}

fn layered(x: &[f64], qw: &[f64], p_ac: &[f64], budget: f64) -> Result<ContractForm> {
    let n = x.len();
    let first = qw.iter().position(|&w| w > 0.0).unwrap_or(0);
    let last = qw.iter().rposition(|&w| w > 0.0).unwrap_or(0);
    if qw[first..=last].contains(&0.0) {
        return Err(Error::invalid(
            "layer contracts are not supported when the reference support has interior gaps",
        ));
    }
    // Segment s covers (lo, hi] with lo = hi of the previous; a retained unit
    // there is paid by every atom at or above hi.
    let mut segs: Vec<(f64, f64, f64, f64)> = Vec::with_capacity(n); // (lo, hi, P-tail, Q-tail)
    let mut p_tail: f64 = p_ac.iter().sum();
    let mut q_tail: f64 = qw.iter().sum();
    let mut prev = 0.0;
    for i in 0..n {
        if x[i] > prev {
            segs.push((prev, x[i], p_tail, q_tail));
        }
        p_tail -= p_ac[i];
        q_tail -= qw[i];
        prev = x[i];
    }
    let ratio = |s: &(f64, f64, f64, f64)| if s.3 > 0.0 { s.2 / s.3 } else { f64::INFINITY };
    let mut order: Vec<usize> = (0..segs.len()).filter(|&s| segs[s].3 > 0.0).collect();
    order.sort_by(|&a, &b| ratio(&segs[a]).total_cmp(&ratio(&segs[b])).then(a.cmp(&b)));

    // Retained length at the bottom of each segment.
    let mut kept = vec![0.0; segs.len()];
    let mut acc = 0.0;
    for &s in &order {
        if acc >= budget {
            break;
        }
        let (lo, hi, _, qt) = segs[s];
        let cap = (hi - lo) * qt;
        let frac = ((budget - acc) / cap).min(1.0);
        kept[s] = frac * (hi - lo);
        acc += frac * cap;
    }

    let mut layers: Vec<(f64, f64)> = Vec::new();
    for (s, &(lo, hi, _, _)) in segs.iter().enumerate() {
        let attach = lo + kept[s];
        if attach >= hi {
            continue;
        }
        match layers.last_mut() {
            Some(last) if last.1 == attach => last.1 = hi,
            _ => layers.push((attach, hi)),
        }
    }
    if layers.len() == 1 && layers[0].1 == x[n - 1] {
        return Ok(ContractForm::Deductible { d: layers[0].0 });
    }
    Ok(ContractForm::LayerSet { layers })
}
