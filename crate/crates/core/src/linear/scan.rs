use rayon::prelude::*;

use super::LinearHru;
use crate::error::{check_len, Result};
use crate::integrator::{StepRecord, Trajectory};
use crate::phase::PhaseState;
use crate::rhel::NudgeSequence;

const TREE_THRESHOLD: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScanDirection {
    Forward,
    EchoPlus,
    EchoMinus,
}

/// Affine step Φ ↦ MΦ + F with M stored as four diagonal blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanElement {
    pub m11: Vec<f64>,
    pub m12: Vec<f64>,
    pub m21: Vec<f64>,
    pub m22: Vec<f64>,
    pub f: Vec<f64>,
}

impl ScanElement {
    pub fn dim(&self) -> usize {
        self.m11.len()
    }

    /// Per-dimension determinant of M.
    pub fn det(&self) -> Vec<f64> {
        (0..self.dim())
            .map(|i| self.m11[i] * self.m22[i] - self.m12[i] * self.m21[i])
            .collect()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut out = self.f.clone();
        for i in 0..n {
            out[i] += self.m11[i] * x[i] + self.m12[i] * x[n + i];
            out[n + i] += self.m21[i] * x[i] + self.m22[i] * x[n + i];
        }
        out
    }

    /// `later ∘ self`: apply `self` first, then `later`.
    pub fn then(&self, later: &ScanElement) -> ScanElement {
        let n = self.dim();
        let mut out = ScanElement {
            m11: vec![0.0; n],
            m12: vec![0.0; n],
            m21: vec![0.0; n],
            m22: vec![0.0; n],
            f: later.apply(&self.f),
        };
        for i in 0..n {
            let (a, b, c, d) = (later.m11[i], later.m12[i], later.m21[i], later.m22[i]);
            let (e, f, g, h) = (self.m11[i], self.m12[i], self.m21[i], self.m22[i]);
            out.m11[i] = a * e + b * g;
            out.m12[i] = a * f + b * h;
            out.m21[i] = c * e + d * g;
            out.m22[i] = c * f + d * h;
        }
        out
    }
}

fn transition(hru: &LinearHru) -> ScanElement {
    let (a, d) = (hru.a(), hru.delta());
    let n = a.len();
    let mut e = ScanElement {
        m11: vec![0.0; n],
        m12: vec![0.0; n],
        m21: vec![0.0; n],
        m22: vec![0.0; n],
        f: vec![0.0; 2 * n],
    };
    for i in 0..n {
        let d2a = d[i] * d[i] * a[i];
        e.m11[i] = 1.0 - 0.5 * d2a;
        e.m12[i] = d[i] * (1.0 - 0.25 * d2a);
        e.m21[i] = -d[i] * a[i];
        e.m22[i] = 1.0 - 0.5 * d2a;
    }
    e
}

/// Builds one affine element per step. `inputs` are in forward order; the
/// echo directions consume them reversed and add ±ε·Σ_x(γ·y) after each step.
/// The nudge at the final forward state belongs to the echo's initial state
/// and is not part of any element.
pub fn scan_elements(
    hru: &LinearHru,
    inputs: &[Vec<f64>],
    nudges: Option<&NudgeSequence>,
    epsilon: f64,
    direction: ScanDirection,
) -> Result<Vec<ScanElement>> {
    let (n, m) = (hru.dim_n(), hru.dim_m());
    let k_total = inputs.len();
    for u in inputs {
        check_len("scan input", m, u.len())?;
    }
    let sign = match direction {
        ScanDirection::Forward => 0.0,
        ScanDirection::EchoPlus => 1.0,
        ScanDirection::EchoMinus => -1.0,
    };
    if let Some(ny) = nudges {
        check_len("scan nudges", k_total + 1, ny.grads.len())?;
    }
    let base = transition(hru);
    let d = hru.delta();
    let mut bu = vec![0.0; n];
    let mut out = Vec::with_capacity(k_total);
    for k in 0..k_total {
        let idx = if sign == 0.0 { k } else { k_total - 1 - k };
        hru.drive(&inputs[idx], &mut bu);
        let mut e = base.clone();
        for i in 0..n {
            e.f[i] = 0.5 * d[i] * d[i] * bu[i];
            e.f[n + i] = d[i] * bu[i];
        }
        if sign != 0.0 {
            if let Some(ny) = nudges {
                let y = &ny.grads[idx];
                check_len("scan nudge", 2 * n, y.len())?;
                let s = sign * epsilon * ny.gamma;
                for i in 0..n {
                    e.f[i] += s * y[n + i];
                    e.f[n + i] += s * y[i];
                }
            }
        }
        out.push(e);
    }
    Ok(out)
}

fn scan_sequential(elems: Vec<ScanElement>) -> Vec<ScanElement> {
    let mut out: Vec<ScanElement> = Vec::with_capacity(elems.len());
    for e in elems {
        let next = match out.last() {
            Some(prev) => prev.then(&e),
            None => e,
        };
        out.push(next);
    }
    out
}

fn scan_tree(elems: Vec<ScanElement>) -> Vec<ScanElement> {
    let len = elems.len();
    if len < 2 {
        return elems;
    }
    let pairs: Vec<ScanElement> = (0..len / 2)
        .into_par_iter()
        .map(|i| elems[2 * i].then(&elems[2 * i + 1]))
        .collect();
    let reduced = scan_tree(pairs);
    (0..len)
        .into_par_iter()
        .map(|j| {
            if j % 2 == 1 {
                reduced[j / 2].clone()
            } else if j == 0 {
                elems[0].clone()
            } else {
                reduced[j / 2 - 1].then(&elems[j])
            }
        })
        .collect()
}

/// Inclusive prefix compositions of `elems`.
pub fn prefix_scan(elems: Vec<ScanElement>) -> Vec<ScanElement> {
    if elems.len() >= TREE_THRESHOLD {
        scan_tree(elems)
    } else {
        scan_sequential(elems)
    }
}

/// Evaluates all states with a prefix scan and reconstructs the fractional
/// states of each step from (Φ_k, u_k). `inputs` are in element order.
pub fn parallel_scan_rollout(
    hru: &LinearHru,
    elements: &[ScanElement],
    x0: &PhaseState,
    inputs: &[Vec<f64>],
) -> Result<Trajectory> {
    let n = hru.dim_n();
    check_len("scan state", n, x0.dim())?;
    check_len("scan inputs", elements.len(), inputs.len())?;
    let mut elems = elements.to_vec();
    if let Some(first) = elems.first_mut() {
        first.f = first.apply(x0.as_slice());
        first.m11.iter_mut().for_each(|x| *x = 0.0);
        first.m12.iter_mut().for_each(|x| *x = 0.0);
        first.m21.iter_mut().for_each(|x| *x = 0.0);
        first.m22.iter_mut().for_each(|x| *x = 0.0);
    }
    let prefix = prefix_scan(elems);
    let (a, d) = (hru.a(), hru.delta());
    let mut bu = vec![0.0; n];
    let mut records = Vec::with_capacity(prefix.len());
    let mut prev = x0.clone();
    for (k, p) in prefix.into_iter().enumerate() {
        let next = PhaseState::from_flat(p.f)?;
        hru.drive(&inputs[k], &mut bu);
        let mut third = prev.clone();
        {
            let (phi, pi) = third.split_mut();
            for i in 0..n {
                phi[i] += 0.5 * d[i] * pi[i];
            }
        }
        let mut twothird = third.clone();
        {
            let (phi, pi) = twothird.split_mut();
            for i in 0..n {
                pi[i] -= d[i] * (a[i] * phi[i] - bu[i]);
            }
        }
        records.push(StepRecord {
            s_third: third,
            s_twothird: twothird,
            s_next: next.clone(),
        });
        prev = next;
    }
    Ok(Trajectory {
        initial: x0.clone(),
        records,
        inputs: inputs.to_vec(),
        step: 1.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_matrix_example() {
        let h = LinearHru::new(&[1.0], &[0.0], &[0.1], 1).unwrap();
        let e = &scan_elements(&h, &[vec![0.0]], None, 0.0, ScanDirection::Forward).unwrap()[0];
        assert!((e.m11[0] - 0.995).abs() < 1e-15);
        assert!((e.m12[0] - 0.09975).abs() < 1e-15);
        assert!((e.m21[0] + 0.1).abs() < 1e-15);
        assert!((e.m22[0] - 0.995).abs() < 1e-15);
        let x = e.apply(&[1.0, 0.0]);
        assert!((x[0] - 0.995).abs() < 1e-15 && (x[1] + 0.1).abs() < 1e-15);
    }

    #[test]
    fn zero_input_gives_zero_affine_term() {
        let h = LinearHru::new(&[1.0, 0.5], &[1.0, 2.0, 3.0, 4.0], &[0.1, 0.2], 2).unwrap();
        let inputs = vec![vec![0.0, 0.0]; 5];
        for e in scan_elements(&h, &inputs, None, 0.0, ScanDirection::Forward).unwrap() {
            assert!(e.f.iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn single_step_matches_affine_map() {
        let h = LinearHru::new(&[0.7], &[0.3], &[0.2], 1).unwrap();
        let inputs = vec![vec![1.5]];
        let els = scan_elements(&h, &inputs, None, 0.0, ScanDirection::Forward).unwrap();
        let x0 = PhaseState::new(&[0.4], &[-0.2]).unwrap();
        let t = parallel_scan_rollout(&h, &els, &x0, &inputs).unwrap();
        let expect = els[0].apply(x0.as_slice());
        assert_eq!(t.final_state().as_slice(), expect.as_slice());
    }

    #[test]
    fn zero_start_zero_input_stays_zero() {
        let h = LinearHru::new(&[0.7, 0.2], &[0.3, 0.1], &[0.2, 0.4], 1).unwrap();
        let inputs = vec![vec![0.0]; 100];
        let els = scan_elements(&h, &inputs, None, 0.0, ScanDirection::Forward).unwrap();
        let t = parallel_scan_rollout(&h, &els, &PhaseState::zeros(2), &inputs).unwrap();
        for r in &t.records {
            assert!(r.s_next.as_slice().iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn shape_mismatch_detected() {
        let h = LinearHru::new(&[0.7], &[0.3], &[0.2], 1).unwrap();
        let err = scan_elements(&h, &[vec![1.0, 2.0]], None, 0.0, ScanDirection::Forward);
        assert!(err.is_err());
    }
}
